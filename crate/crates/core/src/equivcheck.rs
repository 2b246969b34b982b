//! Equivalence of PDFA modulo an equivalence `E`, exploring only transitions
//! with positive probability on both sides, and counterexample reduction.

use std::collections::VecDeque;

use thiserror::Error;

use crate::automata::{AutomataError, LanguageModel, ModelError, Pdfa, StateId};
use crate::simplex::{Distribution, Partitioner, Symbol, Word};

#[derive(Debug, Error)]
pub enum EquivError {
    #[error("alphabets differ")]
    AlphabetMismatch,
    #[error("`{0:?}` is not a counterexample")]
    NotACounterexample(Word),
    #[error("model is undefined at the first disagreement `{0:?}`")]
    InconsistentModel(Word),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Automata(#[from] AutomataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MismatchKind {
    /// Same positivity pattern, different class.
    Distribution,
    /// Some slot is positive on one side only.
    Support,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub gamma: Word,
    pub kind: MismatchKind,
}

/// Exploration counters of one [`hk_equiv_with_stats`] run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HkStats {
    pub pairs_checked: usize,
    pub merges: usize,
    /// Pairs enqueued through a symbol outside the mutual support; always 0.
    pub outside_support: usize,
}

fn mismatch_kind(a: &Distribution, b: &Distribution) -> MismatchKind {
    if a.positive_slots() == b.positive_slots() {
        MismatchKind::Distribution
    } else {
        MismatchKind::Support
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// False when already merged.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// State pair with its parent entry and the symbol leading to it.
type PairEntry = (StateId, StateId, Option<(usize, Symbol)>);

/// Hopcroft–Karp over pairs in BFS order; `None` means the quotients agree
/// on every string defined in both.
pub fn hk_equiv(a: &Pdfa, b: &Pdfa, e: &Partitioner) -> Result<Option<Counterexample>, EquivError> {
    hk_equiv_with_stats(a, b, e).map(|(ce, _)| ce)
}

pub fn hk_equiv_with_stats(
    a: &Pdfa,
    b: &Pdfa,
    e: &Partitioner,
) -> Result<(Option<Counterexample>, HkStats), EquivError> {
    if a.alphabet() != b.alphabet() {
        return Err(EquivError::AlphabetMismatch);
    }
    let offset = a.num_states();
    let mut uf = UnionFind::new(offset + b.num_states());
    let mut stats = HkStats::default();
    // (state in a, state in b, parent entry and symbol)
    let mut entries: Vec<PairEntry> = vec![(a.initial(), b.initial(), None)];
    uf.union(a.initial(), offset + b.initial());
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let (p, q, _) = entries[i];
        stats.pairs_checked += 1;
        let (dp, dq) = (a.dist(p), b.dist(q));
        if e.label(dp) != e.label(dq) {
            let gamma = reconstruct(&entries, i);
            return Ok((Some(Counterexample { gamma, kind: mismatch_kind(dp, dq) }), stats));
        }
        for s in a.alphabet().symbols() {
            if dp.in_support(s) != dq.in_support(s) {
                // unreachable under Req. (3); kept as a conflict at the pair itself
                let gamma = reconstruct(&entries, i);
                return Ok((Some(Counterexample { gamma, kind: MismatchKind::Support }), stats));
            }
            if !dp.in_support(s) {
                continue;
            }
            let np = a.next_state(p, s).expect("support transition");
            let nq = b.next_state(q, s).expect("support transition");
            if uf.union(np, offset + nq) {
                stats.merges += 1;
                if !(dp.in_support(s) && dq.in_support(s)) {
                    stats.outside_support += 1;
                }
                entries.push((np, nq, Some((i, s))));
                queue.push_back(entries.len() - 1);
            }
        }
    }
    Ok((None, stats))
}

fn reconstruct(entries: &[PairEntry], mut i: usize) -> Word {
    let mut gamma = Vec::new();
    while let Some((parent, s)) = entries[i].2 {
        gamma.push(s);
        i = parent;
    }
    gamma.reverse();
    gamma
}

/// Index `j` of the shortest prefix `γ[..j]` whose classes differ, where
/// `answer(prefix)` yields the other side's distribution (`None` =
/// undefined). The hypothesis must be defined on `γ`.
pub fn first_disagreement<F, Err>(
    hyp: &Pdfa,
    e: &Partitioner,
    gamma: &[Symbol],
    mut answer: F,
) -> Result<Option<(usize, Option<Distribution>)>, Err>
where
    F: FnMut(&[Symbol]) -> Result<Option<Distribution>, Err>,
{
    let mut q = hyp.initial();
    for j in 0..=gamma.len() {
        let theirs = answer(&gamma[..j])?;
        if e.class_of(theirs.as_ref()) != e.label(hyp.dist(q)) {
            return Ok(Some((j, theirs)));
        }
        if j < gamma.len() {
            match hyp.next_state(q, gamma[j]) {
                Some(t) if hyp.dist(q).in_support(gamma[j]) => q = t,
                _ => break,
            }
        }
    }
    Ok(None)
}

/// Shortest prefix of `γ` that is defined in the model and has a different
/// class there than in `hyp`.
pub fn shortest_defined_ce_prefix<M: LanguageModel + ?Sized>(
    model: &M,
    hyp: &Pdfa,
    e: &Partitioner,
    gamma: &[Symbol],
) -> Result<Word, EquivError> {
    let Some(q) = hyp.defined_walk(gamma)? else {
        return Err(EquivError::NotACounterexample(gamma.to_vec()));
    };
    if e.class_of(model.next(gamma)?.as_ref()) == e.label(hyp.dist(q)) {
        return Err(EquivError::NotACounterexample(gamma.to_vec()));
    }
    match first_disagreement(hyp, e, gamma, |p| model.next(p))? {
        Some((j, Some(_))) => Ok(gamma[..j].to_vec()),
        Some((j, None)) => Err(EquivError::InconsistentModel(gamma[..j].to_vec())),
        None => Err(EquivError::NotACounterexample(gamma.to_vec())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::fixtures::*;
    use crate::automata::quotient;
    use crate::simplex::Alphabet;

    #[test]
    fn fig3_left_matches_its_quotient_shape() {
        assert_eq!(hk_equiv(&fig3_left(), &fig3_right(), &Partitioner::Exact).unwrap(), None);
        assert_eq!(hk_equiv(&fig3_right(), &fig3_left(), &Partitioner::Exact).unwrap(), None);
    }

    #[test]
    fn fig1_counterexample_is_b() {
        let ce = hk_equiv(&fig1_a(), &fig1_b(), &Partitioner::Exact).unwrap().unwrap();
        assert_eq!(ce.gamma, vec![Symbol(1)]);
        assert_eq!(ce.kind, MismatchKind::Support);
    }

    #[test]
    fn reflexive_for_every_partitioner() {
        for e in [Partitioner::Exact, Partitioner::Quantization { kappa: 4 }, Partitioner::TopK { r: 1 }] {
            assert_eq!(hk_equiv(&fig1_a(), &fig1_a(), &e).unwrap(), None);
            let q = quotient(&fig1_b(), &e);
            assert_eq!(hk_equiv(&fig1_b(), &q, &e).unwrap(), None);
        }
    }

    #[test]
    fn alphabet_mismatch() {
        let x = Alphabet::new(["x", "y"]).unwrap();
        let a = fig1_a();
        let other = Pdfa::new(x, 0, a.distributions().to_vec(), (0..3).map(|q| a.transitions(q)).collect()).unwrap();
        assert!(matches!(hk_equiv(&a, &other, &Partitioner::Exact), Err(EquivError::AlphabetMismatch)));
    }

    #[test]
    fn prefix_reduction_examples() {
        let (l, h) = (fig1_a(), fig1_b());
        let ba = vec![Symbol(1), Symbol(0)];
        assert_eq!(shortest_defined_ce_prefix(&l, &h, &Partitioner::Exact, &ba).unwrap(), vec![Symbol(1)]);
        let b = vec![Symbol(1)];
        assert_eq!(shortest_defined_ce_prefix(&l, &h, &Partitioner::Exact, &b).unwrap(), b);
        assert!(matches!(
            shortest_defined_ce_prefix(&l, &l, &Partitioner::Exact, &ba),
            Err(EquivError::NotACounterexample(_))
        ));
    }

    #[test]
    fn support_divergence_at_a() {
        // agree at λ, a-successors differ in support
        let l = pdfa(&[[0.5, 0.0, 0.5], [0.5, 0.5, 0.0]], &[[Some(1), Some(0)], [Some(1), Some(1)]]);
        let h = pdfa(&[[0.5, 0.0, 0.5], [0.5, 0.0, 0.5]], &[[Some(1), None], [Some(1), None]]);
        let ce = hk_equiv(&l, &h, &Partitioner::Exact).unwrap().unwrap();
        assert_eq!(ce.gamma, vec![Symbol(0)]);
        let aa = vec![Symbol(0), Symbol(0)];
        assert_eq!(shortest_defined_ce_prefix(&l, &h, &Partitioner::Exact, &aa).unwrap(), vec![Symbol(0)]);
    }

    #[test]
    fn zero_avoidance_counter_stays_zero() {
        let (_, stats) = hk_equiv_with_stats(&fig3_left(), &fig3_right(), &Partitioner::Exact).unwrap();
        assert_eq!(stats.outside_support, 0);
        assert!(stats.pairs_checked >= 1);
    }
}
