//! Property suites over small random PDFA.

mod common;

use common::{same_language, small_pdfa, words};
use pdfa_learn::automata::{
    congruence_partition, quotient, string_prob, CongruenceMode, LanguageModel, Pdfa,
};
use pdfa_learn::equivcheck::{hk_equiv, shortest_defined_ce_prefix};
use pdfa_learn::lmbridge::{symbol_model, PdfaTokenModel, SymbolMap};
use pdfa_learn::randgen::{assign_distributions, random_dfa};
use pdfa_learn::simplex::{Partitioner, Symbol};
use pdfa_learn::teacher::{FilterTeacher, Teacher};
use proptest::prelude::*;

const PARTITIONERS: [Partitioner; 3] =
    [Partitioner::Exact, Partitioner::Quantization { kappa: 3 }, Partitioner::TopK { r: 1 }];

fn total_pdfa(seed: u64) -> Pdfa {
    let dfa = random_dfa(1 + (seed % 8) as usize, 2, seed).unwrap();
    assign_distributions(&dfa, 0.5, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn characterizations_agree(seed in any::<u64>(), partial in any::<bool>()) {
        let a = small_pdfa(seed, 8, partial);
        let partition = congruence_partition(&a, &Partitioner::Exact, CongruenceMode::Defined);
        let reachable = a.structurally_reachable();
        let n = a.num_states();
        for p in (0..n).filter(|&p| reachable[p]) {
            for q in (0..n).filter(|&q| reachable[q]) {
                prop_assert_eq!(partition.same_block(p, q), same_language(&a, p, q, n), "states {} {}", p, q);
            }
        }
    }

    #[test]
    fn prefix_witness_exists(seed in any::<u64>(), which in 0usize..3) {
        let e = PARTITIONERS[which];
        let target = small_pdfa(seed, 6, true);
        let hyp = small_pdfa(seed.wrapping_add(1), 6, true);
        let mut injected: Vec<Vec<Symbol>> = words(target.alphabet(), 5)
            .into_iter()
            .filter(|w| {
                hyp.defined_walk(w).unwrap().is_some_and(|q| {
                    e.class_of(target.next(w).unwrap().as_ref()) != e.label(hyp.dist(q))
                })
            })
            .collect();
        if let Some(ce) = hk_equiv(&target, &hyp, &e).unwrap() {
            injected.push(ce.gamma);
        }
        for gamma in injected {
            let p = shortest_defined_ce_prefix(&target, &hyp, &e, &gamma).unwrap();
            prop_assert!(gamma.starts_with(&p));
            let theirs = target.next(&p).unwrap();
            prop_assert!(theirs.is_some(), "witness must be defined in the target");
            let q = hyp.defined_walk(&p).unwrap().unwrap();
            prop_assert_ne!(e.class_of(theirs.as_ref()), e.label(hyp.dist(q)));
            for k in 0..p.len() {
                let qk = hyp.defined_walk(&p[..k]).unwrap().unwrap();
                prop_assert_eq!(e.class_of(target.next(&p[..k]).unwrap().as_ref()), e.label(hyp.dist(qk)));
            }
        }
    }

    #[test]
    fn class_count_bounds(seed in any::<u64>(), which in 0usize..3, partial in any::<bool>()) {
        let e = PARTITIONERS[which];
        let a = small_pdfa(seed, 8, partial);
        let new = congruence_partition(&a, &e, CongruenceMode::Defined);
        let old = congruence_partition(&a, &e, CongruenceMode::Unconditional);
        prop_assert!(new.num_blocks() <= old.total_blocks());
        prop_assert!(new.total_blocks() <= old.total_blocks() + 1);
    }

    #[test]
    fn quotient_preserves_the_language(seed in any::<u64>(), which in 0usize..3, partial in any::<bool>()) {
        let e = PARTITIONERS[which];
        let a = small_pdfa(seed, 8, partial);
        let q = quotient(&a, &e);
        prop_assert_eq!(hk_equiv(&a, &q, &e).unwrap(), None);
        prop_assert_eq!(quotient(&q, &e).num_states(), q.num_states());
        let blocks = congruence_partition(&a, &e, CongruenceMode::Defined).blocks_among(&a.positively_reachable());
        prop_assert_eq!(q.num_states(), blocks);
        if e == Partitioner::Exact {
            for w in words(a.alphabet(), 5) {
                let (x, y) = (string_prob(&a, &w).unwrap(), string_prob(&q, &w).unwrap());
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn filter_teacher_answers_match_definedness(seed in any::<u64>()) {
        let a = total_pdfa(seed);
        let mut teacher = FilterTeacher::new(a.clone()).unwrap();
        for w in words(a.alphabet(), 6) {
            prop_assert_eq!(teacher.mq(&w).unwrap().is_none(), !a.is_defined(&w).unwrap());
        }
    }

    #[test]
    fn identity_symbol_model_matches_the_pdfa(seed in any::<u64>()) {
        let a = total_pdfa(seed);
        let lm = symbol_model(PdfaTokenModel::identity(a.clone()).unwrap(), SymbolMap::identity(a.alphabet().clone()))
            .unwrap();
        for w in words(a.alphabet(), 4) {
            match (lm.next(&w).unwrap(), a.next(&w).unwrap()) {
                (Some(x), Some(y)) => {
                    for (p, q) in x.probs().iter().zip(y.probs()) {
                        prop_assert!((p - q).abs() < 1e-12);
                    }
                }
                (x, y) => prop_assert_eq!(x.is_some(), y.is_some()),
            }
        }
    }
}
