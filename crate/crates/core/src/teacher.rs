//! Membership and equivalence oracles.
//!
//! [`ExactTeacher`] answers every query from a target PDFA; [`FilterTeacher`]
//! additionally reports strings that traverse a zero-probability transition
//! as undefined; [`PacTeacher`] wraps a black-box [`LanguageModel`] and tests
//! equivalence by random walks on the hypothesis.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::automata::{AutomataError, LanguageModel, ModelError, Pdfa};
use crate::equivcheck::{hk_equiv, Counterexample, EquivError, MismatchKind};
use crate::simplex::{Alphabet, Distribution, Partitioner, Symbol, Word};

#[derive(Debug, Error)]
pub enum TeacherError {
    #[error("model failed at `{prefix:?}`: {source}")]
    ModelFailure {
        prefix: Word,
        #[source]
        source: ModelError,
    },
    #[error("counterexample `{0:?}` is undefined in the hypothesis")]
    Req8Violation(Word),
    #[error("invalid PAC parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Equiv(#[from] EquivError),
    #[error(transparent)]
    Automata(#[from] AutomataError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TeacherStats {
    pub mq_count: u64,
    pub eq_count: u64,
    pub ce_count: u64,
    pub last_ce_length: Option<usize>,
    /// Model queries issued while answering EQ (PAC teacher only).
    pub eq_model_queries: u64,
}

pub trait Teacher {
    fn alphabet(&self) -> &Alphabet;

    /// `None` reports `u` as undefined.
    fn mq(&mut self, u: &[Symbol]) -> Result<Option<Distribution>, TeacherError>;

    fn eq(&mut self, hypothesis: &Pdfa, e: &Partitioner) -> Result<Option<Counterexample>, TeacherError>;

    /// Whether `mq` answers `None` on every undefined string.
    fn reports_undefined(&self) -> bool;

    fn stats(&self) -> TeacherStats;
}

impl<T: Teacher + ?Sized> Teacher for &mut T {
    fn alphabet(&self) -> &Alphabet {
        (**self).alphabet()
    }
    fn mq(&mut self, u: &[Symbol]) -> Result<Option<Distribution>, TeacherError> {
        (**self).mq(u)
    }
    fn eq(&mut self, hypothesis: &Pdfa, e: &Partitioner) -> Result<Option<Counterexample>, TeacherError> {
        (**self).eq(hypothesis, e)
    }
    fn reports_undefined(&self) -> bool {
        (**self).reports_undefined()
    }
    fn stats(&self) -> TeacherStats {
        (**self).stats()
    }
}

fn record_ce(
    stats: &mut TeacherStats,
    hypothesis: &Pdfa,
    ce: Option<Counterexample>,
) -> Result<Option<Counterexample>, TeacherError> {
    if let Some(ce) = &ce {
        if !hypothesis.is_defined(&ce.gamma)? {
            return Err(TeacherError::Req8Violation(ce.gamma.clone()));
        }
        stats.ce_count += 1;
        stats.last_ce_length = Some(ce.gamma.len());
    }
    Ok(ce)
}

fn require_total(target: &Pdfa) -> Result<(), TeacherError> {
    if target.is_total() {
        Ok(())
    } else {
        Err(TeacherError::Automata(AutomataError::NotTotal))
    }
}

/// Answers every membership query with the target's distribution.
#[derive(Debug, Clone)]
pub struct ExactTeacher {
    target: Pdfa,
    stats: TeacherStats,
}

impl ExactTeacher {
    pub fn new(target: Pdfa) -> Result<Self, TeacherError> {
        require_total(&target)?;
        Ok(ExactTeacher { target, stats: TeacherStats::default() })
    }

    pub fn target(&self) -> &Pdfa {
        &self.target
    }
}

impl Teacher for ExactTeacher {
    fn alphabet(&self) -> &Alphabet {
        self.target.alphabet()
    }

    fn mq(&mut self, u: &[Symbol]) -> Result<Option<Distribution>, TeacherError> {
        self.stats.mq_count += 1;
        Ok(self.target.next_dist(u)?.cloned())
    }

    fn eq(&mut self, hypothesis: &Pdfa, e: &Partitioner) -> Result<Option<Counterexample>, TeacherError> {
        self.stats.eq_count += 1;
        let ce = hk_equiv(&self.target, hypothesis, e)?;
        record_ce(&mut self.stats, hypothesis, ce)
    }

    fn reports_undefined(&self) -> bool {
        false
    }

    fn stats(&self) -> TeacherStats {
        self.stats
    }
}

/// Like [`ExactTeacher`] but answers undefined strings with `None`.
#[derive(Debug, Clone)]
pub struct FilterTeacher {
    target: Pdfa,
    stats: TeacherStats,
}

impl FilterTeacher {
    pub fn new(target: Pdfa) -> Result<Self, TeacherError> {
        require_total(&target)?;
        Ok(FilterTeacher { target, stats: TeacherStats::default() })
    }

    pub fn target(&self) -> &Pdfa {
        &self.target
    }
}

impl Teacher for FilterTeacher {
    fn alphabet(&self) -> &Alphabet {
        self.target.alphabet()
    }

    fn mq(&mut self, u: &[Symbol]) -> Result<Option<Distribution>, TeacherError> {
        self.stats.mq_count += 1;
        Ok(self.target.defined_walk(u)?.map(|q| self.target.dist(q).clone()))
    }

    fn eq(&mut self, hypothesis: &Pdfa, e: &Partitioner) -> Result<Option<Counterexample>, TeacherError> {
        self.stats.eq_count += 1;
        let ce = hk_equiv(&self.target, hypothesis, e)?;
        record_ce(&mut self.stats, hypothesis, ce)
    }

    fn reports_undefined(&self) -> bool {
        true
    }

    fn stats(&self) -> TeacherStats {
        self.stats
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacParams {
    pub epsilon: f64,
    pub delta: f64,
    pub max_len: usize,
}

impl Default for PacParams {
    fn default() -> Self {
        PacParams { epsilon: 0.05, delta: 0.05, max_len: 50 }
    }
}

impl PacParams {
    pub fn validate(&self) -> Result<(), TeacherError> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.epsilon) || !unit(self.delta) {
            return Err(TeacherError::InvalidParams(format!(
                "epsilon {} and delta {} must lie in (0,1)",
                self.epsilon, self.delta
            )));
        }
        if self.max_len == 0 {
            return Err(TeacherError::InvalidParams("max_len must be positive".into()));
        }
        Ok(())
    }

    /// `⌈(1/ε)(ln(1/δ) + round·ln 2)⌉` for the 1-based EQ `round`.
    pub fn samples_for_round(&self, round: u64) -> usize {
        ((1.0 / self.epsilon) * ((1.0 / self.delta).ln() + round as f64 * std::f64::consts::LN_2)).ceil() as usize
    }
}

/// Black-box teacher; EQ compares the model with the hypothesis on random
/// walks drawn from the hypothesis.
pub struct PacTeacher<M> {
    model: M,
    params: PacParams,
    rng: ChaCha8Rng,
    answers: HashMap<Word, Option<Distribution>>,
    stats: TeacherStats,
}

impl<M: LanguageModel> PacTeacher<M> {
    pub fn new(model: M, params: PacParams, seed: u64) -> Result<Self, TeacherError> {
        params.validate()?;
        Ok(PacTeacher {
            model,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            answers: HashMap::new(),
            stats: TeacherStats::default(),
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    fn query(&mut self, u: &[Symbol]) -> Result<Option<Distribution>, TeacherError> {
        if let Some(hit) = self.answers.get(u) {
            return Ok(hit.clone());
        }
        self.stats.eq_model_queries += 1;
        let answer = self
            .model
            .next(u)
            .map_err(|source| TeacherError::ModelFailure { prefix: u.to_vec(), source })?;
        self.answers.insert(u.to_vec(), answer.clone());
        Ok(answer)
    }

    /// Walks the hypothesis and returns the first prefix whose classes differ.
    fn check_walk(&mut self, hypothesis: &Pdfa, e: &Partitioner) -> Result<Option<Counterexample>, TeacherError> {
        let terminal = hypothesis.alphabet().terminal_slot();
        let mut q = hypothesis.initial();
        let mut w: Word = Vec::new();
        loop {
            let ours = hypothesis.dist(q);
            let theirs = self.query(&w)?;
            if e.class_of(theirs.as_ref()) != e.label(ours) {
                let kind = match &theirs {
                    Some(d) if d.positive_slots() == ours.positive_slots() => MismatchKind::Distribution,
                    _ => MismatchKind::Support,
                };
                return Ok(Some(Counterexample { gamma: w, kind }));
            }
            let slot = ours.draw(&mut self.rng);
            if slot == terminal || w.len() == self.params.max_len {
                return Ok(None);
            }
            let s = Symbol(slot as u32);
            w.push(s);
            q = hypothesis.next_state(q, s).expect("walks follow support transitions");
        }
    }
}

impl<M: LanguageModel> Teacher for PacTeacher<M> {
    fn alphabet(&self) -> &Alphabet {
        self.model.alphabet()
    }

    fn mq(&mut self, u: &[Symbol]) -> Result<Option<Distribution>, TeacherError> {
        self.stats.mq_count += 1;
        self.model.next(u).map_err(|source| TeacherError::ModelFailure { prefix: u.to_vec(), source })
    }

    fn eq(&mut self, hypothesis: &Pdfa, e: &Partitioner) -> Result<Option<Counterexample>, TeacherError> {
        if hypothesis.alphabet() != self.model.alphabet() {
            return Err(EquivError::AlphabetMismatch.into());
        }
        self.stats.eq_count += 1;
        let walks = self.params.samples_for_round(self.stats.eq_count);
        for _ in 0..walks {
            // every prefix before the returned one agreed, so it is already the shortest
            if let Some(ce) = self.check_walk(hypothesis, e)? {
                return record_ce(&mut self.stats, hypothesis, Some(ce));
            }
        }
        Ok(None)
    }

    fn reports_undefined(&self) -> bool {
        true
    }

    fn stats(&self) -> TeacherStats {
        self.stats
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::fixtures::*;
    use crate::automata::quotient;

    fn word(s: &str) -> Word {
        alphabet_ab().parse_word(s).unwrap()
    }

    fn single_state_loop(target: &Pdfa) -> Pdfa {
        let d = target.dist(target.initial()).clone();
        let row = target.alphabet().symbols().map(|s| d.in_support(s).then_some(0)).collect();
        Pdfa::new(target.alphabet().clone(), 0, vec![d], vec![row]).unwrap()
    }

    #[test]
    fn exact_teacher_examples() {
        let mut t = ExactTeacher::new(fig1_a()).unwrap();
        assert_eq!(t.mq(&word("a")).unwrap().unwrap().probs(), &[0.6, 0.0, 0.4]);
        assert!(t.mq(&word("a b")).unwrap().is_some(), "exact teacher never reports undefined");
        assert_eq!(t.eq(&fig1_a(), &Partitioner::Exact).unwrap(), None);
        let ce = t.eq(&fig1_b(), &Partitioner::Exact).unwrap().unwrap();
        assert_eq!(ce.gamma, word("b"));
        let s = t.stats();
        assert_eq!((s.mq_count, s.eq_count, s.ce_count, s.last_ce_length), (2, 2, 1, Some(1)));
    }

    #[test]
    fn filter_teacher_examples() {
        let mut t = FilterTeacher::new(fig1_a()).unwrap();
        assert!(t.mq(&word("a b")).unwrap().is_none());
        assert!(t.mq(&[]).unwrap().is_some());
        assert_eq!(t.mq(&word("b a")).unwrap().unwrap().probs(), &[0.4, 0.4, 0.2]);
    }

    #[test]
    fn teachers_require_total_targets() {
        assert!(ExactTeacher::new(fig3_right().trim()).is_ok());
        let q = quotient(&fig3_left(), &Partitioner::Exact);
        assert!(ExactTeacher::new(q.clone()).is_err());
        assert!(FilterTeacher::new(q).is_err());
    }

    #[test]
    fn pac_schedule() {
        let p = PacParams { epsilon: 0.1, delta: 0.1, max_len: 10 };
        assert_eq!(p.samples_for_round(1), ((10.0f64).ln() * 10.0 + 10.0 * std::f64::consts::LN_2).ceil() as usize);
        assert!(p.samples_for_round(2) > p.samples_for_round(1));
        assert!(PacParams { epsilon: 0.0, ..p }.validate().is_err());
    }

    #[test]
    fn pac_teacher_accepts_quotient() {
        let target = fig1_a();
        let q = quotient(&target, &Partitioner::Exact);
        let mut t = PacTeacher::new(&target, PacParams::default(), 7).unwrap();
        assert_eq!(t.eq(&q, &Partitioner::Exact).unwrap(), None);
        let mut same = PacTeacher::new(&q, PacParams::default(), 7).unwrap();
        assert_eq!(same.eq(&q, &Partitioner::Exact).unwrap(), None);
    }

    #[test]
    fn pac_teacher_finds_length_one_disagreement() {
        let target = fig1_a();
        let hyp = single_state_loop(&target);
        let mut t = PacTeacher::new(&target, PacParams::default(), 3).unwrap();
        let ce = t.eq(&hyp, &Partitioner::Exact).unwrap().unwrap();
        assert_eq!(ce.gamma.len(), 1);
        assert!(hyp.is_defined(&ce.gamma).unwrap());
    }

    #[test]
    fn pac_teacher_is_deterministic_per_seed() {
        let target = fig1_a();
        let hyp = single_state_loop(&target);
        let run = |seed| {
            let mut t = PacTeacher::new(&target, PacParams::default(), seed).unwrap();
            (t.eq(&hyp, &Partitioner::Exact).unwrap(), t.stats())
        };
        assert_eq!(run(11), run(11));
    }
}
