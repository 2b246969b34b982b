//! Classification-tree learning of `≡_E`-minimal PDFA.
//!
//! [`LearnerMode::OmitZero`] keeps every access string defined and builds
//! transitions only for support symbols; [`LearnerMode::Qnt`] is the
//! unmodified baseline that sifts every `uσ`.

mod tree;

use std::collections::HashMap;

use thiserror::Error;

pub use tree::{ClassificationTree, Leaf, LeafId, NodeId};

use crate::automata::{AutomataError, Pdfa};
use crate::equivcheck::first_disagreement;
use crate::simplex::{ClassId, Distribution, Partitioner, Symbol, Word};
use crate::teacher::{Teacher, TeacherError, TeacherStats};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error(transparent)]
    Automata(#[from] AutomataError),
    #[error("the empty string is undefined")]
    UndefinedStart,
    #[error("`{0:?}` is not a counterexample for the current hypothesis")]
    NotACounterexample(Word),
    #[error("teacher is undefined at `{0:?}` where the hypothesis is defined")]
    InconsistentTeacher(Word),
    #[error("query budget of {0} membership queries exceeded")]
    QueryBudgetExceeded(u64),
    #[error("query of length {0} exceeds the length guard")]
    QueryTooLong(usize),
    #[error("no convergence within {0} equivalence rounds")]
    IterationLimit(usize),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerMode {
    OmitZero,
    Qnt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub mode: LearnerMode,
    pub partitioner: Partitioner,
    pub max_query_len: usize,
    pub max_queries: Option<u64>,
    pub max_iterations: usize,
    /// Asserts Reqs. (5), (6), (8), arc keys and strict progress each round.
    pub check_invariants: bool,
}

impl LearnerConfig {
    pub fn new(mode: LearnerMode, partitioner: Partitioner) -> Self {
        LearnerConfig {
            mode,
            partitioner,
            max_query_len: 100_000,
            max_queries: None,
            max_iterations: 100_000,
            check_invariants: false,
        }
    }

    pub fn checked(mut self) -> Self {
        self.check_invariants = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub hypothesis: Pdfa,
    /// Equivalence queries issued, the initial hypothesis included.
    pub rounds: usize,
    pub stats: TeacherStats,
    /// Sift and update operations performed.
    pub steps: u64,
    pub tree_depth: usize,
}

pub struct Learner<T> {
    teacher: T,
    config: LearnerConfig,
    reference: Option<Pdfa>,
    memo: HashMap<Word, Option<Distribution>>,
    tree: Option<ClassificationTree>,
    transitions: HashMap<(LeafId, usize), LeafId>,
    states: Vec<LeafId>,
    steps: u64,
}

fn concat(a: &[Symbol], b: &[Symbol]) -> Word {
    let mut x = Vec::with_capacity(a.len() + b.len());
    x.extend_from_slice(a);
    x.extend_from_slice(b);
    x
}

impl<T: Teacher> Learner<T> {
    pub fn new(teacher: T, config: LearnerConfig) -> Self {
        Learner {
            teacher,
            config,
            reference: None,
            memo: HashMap::new(),
            tree: None,
            transitions: HashMap::new(),
            states: Vec::new(),
            steps: 0,
        }
    }

    /// Target used by the Req. (5) check.
    pub fn with_reference(mut self, target: Pdfa) -> Self {
        self.reference = Some(target);
        self
    }

    pub fn teacher(&self) -> &T {
        &self.teacher
    }

    pub fn tree(&self) -> Option<&ClassificationTree> {
        self.tree.as_ref()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn tree_ref(&self) -> &ClassificationTree {
        self.tree.as_ref().expect("tree initialized")
    }

    fn omit_zero(&self) -> bool {
        self.config.mode == LearnerMode::OmitZero
    }

    fn fetch(&mut self, x: &[Symbol]) -> Result<Option<Distribution>, LearnError> {
        if let Some(hit) = self.memo.get(x) {
            return Ok(hit.clone());
        }
        if x.len() > self.config.max_query_len {
            return Err(LearnError::QueryTooLong(x.len()));
        }
        let answer = self.teacher.mq(x)?;
        if let Some(budget) = self.config.max_queries {
            if self.teacher.stats().mq_count > budget {
                return Err(LearnError::QueryBudgetExceeded(budget));
            }
        }
        self.memo.insert(x.to_vec(), answer.clone());
        Ok(answer)
    }

    /// Membership answer for `x` whose prefix of length `known` is defined.
    ///
    /// In Omit-Zero mode over a teacher that never reports undefined strings,
    /// definedness beyond `known` is decided from the answers along `x`.
    fn answer(&mut self, x: &[Symbol], known: usize) -> Result<Option<Distribution>, LearnError> {
        if self.omit_zero() && !self.teacher.reports_undefined() {
            for k in known..x.len() {
                match self.fetch(&x[..k])? {
                    Some(d) if d.in_support(x[k]) => {}
                    _ => return Ok(None),
                }
            }
        }
        self.fetch(x)
    }

    fn label(&mut self, x: &[Symbol], known: usize) -> Result<ClassId, LearnError> {
        let d = self.answer(x, known)?;
        Ok(self.config.partitioner.class_of(d.as_ref()))
    }

    /// Single state with `π = MQ(λ)`, looping on the support (Omit-Zero) or
    /// on every symbol (QNT).
    pub fn initial_hypothesis(&mut self) -> Result<Pdfa, LearnError> {
        let d = self.fetch(&[])?.ok_or(LearnError::UndefinedStart)?;
        let alphabet = self.teacher.alphabet().clone();
        let row = alphabet.symbols().map(|s| (!self.omit_zero() || d.in_support(s)).then_some(0)).collect();
        Ok(Pdfa::new(alphabet, 0, vec![d], vec![row])?)
    }

    /// Shortest prefix of `γ` that is defined in the teacher and disagrees
    /// with `hyp`.
    fn reduce(&mut self, hyp: &Pdfa, gamma: &[Symbol]) -> Result<Word, LearnError> {
        let e = self.config.partitioner;
        match first_disagreement(hyp, &e, gamma, |x| self.answer(x, 0))? {
            Some((j, Some(_))) => Ok(gamma[..j].to_vec()),
            Some((j, None)) => Err(LearnError::InconsistentTeacher(gamma[..j].to_vec())),
            None => Err(LearnError::NotACounterexample(gamma.to_vec())),
        }
    }

    /// Tree with leaves `λ` and the (reduced, in Omit-Zero mode) counterexample.
    pub fn initialize_tree(&mut self, initial: &Pdfa, gamma: &[Symbol]) -> Result<(), LearnError> {
        let p = if self.omit_zero() { self.reduce(initial, gamma)? } else { gamma.to_vec() };
        let root_dist = self.fetch(&[])?;
        let p_dist = self.answer(&p, p.len())?;
        let e = self.config.partitioner;
        let (root_key, p_key) = (e.class_of(root_dist.as_ref()), e.class_of(p_dist.as_ref()));
        if root_key == p_key {
            return Err(LearnError::NotACounterexample(p));
        }
        self.tree = Some(ClassificationTree::new(root_key, root_dist, p_key, p, p_dist));
        self.transitions.clear();
        self.steps += 1;
        Ok(())
    }

    /// Descends from the root without modifying the tree; `None` when no arc
    /// matches. `v` must be defined in Omit-Zero mode.
    pub fn classify(&mut self, v: &[Symbol]) -> Result<Option<LeafId>, LearnError> {
        let mut node = self.tree_ref().root();
        loop {
            let tree = self.tree_ref();
            if let Some(l) = tree.leaf_at(node) {
                return Ok(Some(l));
            }
            let x = concat(v, tree.dis(node).expect("inner node"));
            let key = self.label(&x, v.len())?;
            match self.tree_ref().child(node, &key) {
                Some(c) => node = c,
                None => return Ok(None),
            }
        }
    }

    /// Descends from the root, adding `v` as a new leaf where no arc matches.
    /// `v` must be defined in Omit-Zero mode.
    pub fn sift(&mut self, v: &[Symbol]) -> Result<LeafId, LearnError> {
        self.steps += 1;
        let depth_before = self.tree_ref().depth();
        let mut node = self.tree_ref().root();
        loop {
            let tree = self.tree_ref();
            if let Some(l) = tree.leaf_at(node) {
                return Ok(l);
            }
            let x = concat(v, tree.dis(node).expect("inner node"));
            let key = self.label(&x, v.len())?;
            if let Some(c) = self.tree_ref().child(node, &key) {
                node = c;
                continue;
            }
            let dist = self.answer(v, v.len())?;
            let tree = self.tree.as_mut().expect("tree initialized");
            let l = tree.add_leaf(node, key, v.to_vec(), dist);
            if tree.depth() > depth_before {
                return Err(LearnError::InvariantViolation(format!("sift of {v:?} grew the tree depth")));
            }
            return Ok(l);
        }
    }

    /// Hypothesis over the state leaves, sifting `uσ` for every state `u`
    /// and every σ (QNT) or every σ in the support of `L(u)` (Omit-Zero).
    pub fn build(&mut self) -> Result<Pdfa, LearnError> {
        let alphabet = self.teacher.alphabet().clone();
        let mut l = 0;
        // leaves added by sift-update are appended, so one pass reaches the fixed point
        while l < self.tree_ref().num_leaves() {
            let leaf = self.tree_ref().leaf(l);
            if let Some(dist) = leaf.dist.clone() {
                let access = leaf.access.clone();
                for s in alphabet.symbols() {
                    if (self.omit_zero() && !dist.in_support(s)) || self.transitions.contains_key(&(l, s.index())) {
                        continue;
                    }
                    let mut v = access.clone();
                    v.push(s);
                    let t = self.sift(&v)?;
                    self.transitions.insert((l, s.index()), t);
                }
            }
            l += 1;
        }

        self.states = {
            let tree = self.tree_ref();
            (0..tree.num_leaves()).filter(|&l| tree.is_state(l)).collect()
        };
        let tree = self.tree_ref();
        let mut index = vec![None; tree.num_leaves()];
        for (q, &l) in self.states.iter().enumerate() {
            index[l] = Some(q);
        }
        let pi = self.states.iter().map(|&l| tree.leaf(l).dist.clone().expect("state leaf")).collect();
        let tau = self
            .states
            .iter()
            .map(|&l| alphabet.symbols().map(|s| self.transitions.get(&(l, s.index())).and_then(|&t| index[t])).collect())
            .collect();
        Ok(Pdfa::new(alphabet, 0, pi, tau)?)
    }

    /// Splits the state leaf preceding the first misclassified prefix of `γ`.
    pub fn update(&mut self, hyp: &Pdfa, gamma: &[Symbol]) -> Result<(), LearnError> {
        let gamma = if self.omit_zero() { self.reduce(hyp, gamma)? } else { gamma.to_vec() };
        let mut reached = vec![self.states[hyp.initial()]];
        let mut q = hyp.initial();
        for &s in &gamma {
            q = hyp.next_state(q, s).ok_or_else(|| LearnError::NotACounterexample(gamma.clone()))?;
            reached.push(self.states[q]);
        }
        let mut split_at = None;
        for j in 1..=gamma.len() {
            if self.classify(&gamma[..j])? != Some(reached[j]) {
                split_at = Some(j);
                break;
            }
        }
        let j = split_at.ok_or_else(|| LearnError::NotACounterexample(gamma.clone()))?;

        let prefix = &gamma[..j];
        let mut splitter = None;
        for (node, key) in self.tree_ref().path(reached[j]) {
            let dis = self.tree_ref().dis(node).expect("inner node").clone();
            if self.label(&concat(prefix, &dis), j)? != key {
                splitter = Some(dis);
                break;
            }
        }
        let splitter = splitter.ok_or_else(|| LearnError::NotACounterexample(gamma.clone()))?;
        let dis = concat(&gamma[j - 1..j], &splitter);

        let u = reached[j - 1];
        let u_access = self.tree_ref().leaf(u).access.clone();
        let old_key = self.label(&concat(&u_access, &dis), u_access.len())?;
        let access = gamma[..j - 1].to_vec();
        let new_key = self.label(&concat(&access, &dis), j - 1)?;
        if old_key == new_key {
            return Err(LearnError::InvariantViolation(format!("splitter {dis:?} does not separate the leaves")));
        }
        let dist = self.answer(&access, access.len())?;
        self.tree.as_mut().expect("tree initialized").split(u, dis, old_key, new_key, access, dist);
        self.transitions.retain(|_, t| *t != u);
        self.steps += 1;
        Ok(())
    }

    /// Checks Reqs. (5) and (6) and the arc-key condition on every leaf.
    pub fn check_tree(&mut self) -> Result<(), LearnError> {
        let tree = self.tree_ref().clone();
        for (l, leaf) in tree.leaves().iter().enumerate() {
            let Some(dist) = &leaf.dist else { continue };
            if self.omit_zero() {
                if let Some(target) = &self.reference {
                    if !target.is_defined(&leaf.access)? {
                        return Err(LearnError::InvariantViolation(format!("Req. (5): leaf {:?} undefined", leaf.access)));
                    }
                }
            }
            for (node, key) in tree.path(l) {
                let dis = tree.dis(node).expect("inner node");
                if self.omit_zero() && !dis.is_empty() && !dist.in_support(dis[0]) {
                    return Err(LearnError::InvariantViolation(format!(
                        "Req. (6): {dis:?} leaves the support of {:?}",
                        leaf.access
                    )));
                }
                // with the key of every arc equal to the leaf's label, leaves split at their lca disagree there
                if self.label(&concat(&leaf.access, dis), leaf.access.len())? != key {
                    return Err(LearnError::InvariantViolation(format!(
                        "arc key at {dis:?} does not match leaf {:?}",
                        leaf.access
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn run(mut self) -> Result<LearnOutcome, LearnError> {
        let e = self.config.partitioner;
        let initial = self.initial_hypothesis()?;
        let mut rounds = 1;
        let Some(ce) = self.teacher.eq(&initial, &e)? else {
            return Ok(self.outcome(initial, rounds));
        };
        self.check_counterexample(&initial, &ce.gamma)?;
        self.initialize_tree(&initial, &ce.gamma)?;
        let mut previous = initial.num_states();
        loop {
            let hyp = self.build()?;
            if self.config.check_invariants {
                self.check_tree()?;
                if hyp.num_states() <= previous {
                    return Err(LearnError::InvariantViolation(format!(
                        "state count {} did not grow past {previous}",
                        hyp.num_states()
                    )));
                }
            }
            previous = hyp.num_states();
            if rounds >= self.config.max_iterations {
                return Err(LearnError::IterationLimit(rounds));
            }
            rounds += 1;
            match self.teacher.eq(&hyp, &e)? {
                None => return Ok(self.outcome(hyp, rounds)),
                Some(ce) => {
                    self.check_counterexample(&hyp, &ce.gamma)?;
                    self.update(&hyp, &ce.gamma)?;
                }
            }
        }
    }

    fn check_counterexample(&self, hyp: &Pdfa, gamma: &[Symbol]) -> Result<(), LearnError> {
        if self.config.check_invariants && !hyp.is_defined(gamma)? {
            return Err(LearnError::InvariantViolation(format!("Req. (8): {gamma:?} undefined in the hypothesis")));
        }
        Ok(())
    }

    fn outcome(&self, hypothesis: Pdfa, rounds: usize) -> LearnOutcome {
        LearnOutcome {
            hypothesis,
            rounds,
            stats: self.teacher.stats(),
            steps: self.steps,
            tree_depth: self.tree.as_ref().map_or(0, |t| t.depth()),
        }
    }
}

/// Runs the learner to convergence.
pub fn learn<T: Teacher>(teacher: T, config: LearnerConfig) -> Result<LearnOutcome, LearnError> {
    Learner::new(teacher, config).run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::fixtures::*;
    use crate::automata::{congruence_partition, materialize, quotient, CongruenceMode};
    use crate::equivcheck::hk_equiv;
    use crate::simplex::SamplingStrategy;
    use crate::teacher::{ExactTeacher, FilterTeacher};

    fn word(s: &str) -> Word {
        alphabet_ab().parse_word(s).unwrap()
    }

    fn omit_zero() -> LearnerConfig {
        LearnerConfig::new(LearnerMode::OmitZero, Partitioner::Exact).checked()
    }

    #[test]
    fn initialize_on_fig1_a() {
        let mut l = Learner::new(ExactTeacher::new(fig1_a()).unwrap(), omit_zero());
        let h0 = l.initial_hypothesis().unwrap();
        l.initialize_tree(&h0, &word("b")).unwrap();
        let accesses: Vec<_> = l.tree().unwrap().leaves().iter().map(|x| x.access.clone()).collect();
        assert_eq!(accesses, vec![vec![], word("b")]);
        assert_eq!(l.sift(&word("b a")).unwrap(), 1);
        assert_eq!(l.sift(&[]).unwrap(), 0);
    }

    #[test]
    fn initialize_reduces_to_defined_prefix() {
        let mut l = Learner::new(ExactTeacher::new(fig1_a()).unwrap(), omit_zero());
        let h0 = l.initial_hypothesis().unwrap();
        l.initialize_tree(&h0, &word("b a a")).unwrap();
        assert_eq!(l.tree().unwrap().leaf(1).access, word("b"));

        let mut q = Learner::new(
            ExactTeacher::new(fig1_a()).unwrap(),
            LearnerConfig::new(LearnerMode::Qnt, Partitioner::Exact),
        );
        let h0 = q.initial_hypothesis().unwrap();
        q.initialize_tree(&h0, &word("a b")).unwrap();
        assert_eq!(q.tree().unwrap().leaf(1).access, word("a b"), "QNT keeps γ even when undefined");
    }

    #[test]
    fn build_two_leaf_tree_on_fig1_a() {
        let mut l = Learner::new(ExactTeacher::new(fig1_a()).unwrap(), omit_zero());
        let h0 = l.initial_hypothesis().unwrap();
        l.initialize_tree(&h0, &word("b")).unwrap();
        let h = l.build().unwrap();
        // "a" reaches a fresh class, so sift-update adds it as a third leaf
        assert_eq!(h.num_states(), 3);
        assert_eq!(h.next_state(1, Symbol(0)), Some(1));
        assert_eq!(h.next_state(1, Symbol(1)), Some(1));
        assert_eq!(h.next_state(2, Symbol(1)), None, "b is outside the support of q_a");
        l.check_tree().unwrap();
    }

    #[test]
    fn initial_hypothesis_loops_on_support_only() {
        let mut l = Learner::new(ExactTeacher::new(fig3_left()).unwrap(), omit_zero());
        let h0 = l.initial_hypothesis().unwrap();
        assert_eq!(h0.transitions(0), vec![Some(0), None]);
        let mut q = Learner::new(
            ExactTeacher::new(fig3_left()).unwrap(),
            LearnerConfig::new(LearnerMode::Qnt, Partitioner::Exact),
        );
        assert_eq!(q.initial_hypothesis().unwrap().transitions(0), vec![Some(0), Some(0)]);
    }

    #[test]
    fn fig3_left_converges_without_exploring_b() {
        let out = learn(ExactTeacher::new(fig3_left()).unwrap(), omit_zero()).unwrap();
        assert_eq!(out.rounds, 1);
        assert_eq!(out.hypothesis.num_states(), 1);
        assert_eq!(hk_equiv(&out.hypothesis, &fig3_right(), &Partitioner::Exact).unwrap(), None);
    }

    #[test]
    fn fig1_a_learns_its_quotient() {
        for teacher_filters in [false, true] {
            let out = if teacher_filters {
                learn(FilterTeacher::new(fig1_a()).unwrap(), omit_zero()).unwrap()
            } else {
                learn(ExactTeacher::new(fig1_a()).unwrap(), omit_zero()).unwrap()
            };
            let q = quotient(&fig1_a(), &Partitioner::Exact);
            assert!(out.hypothesis.isomorphic(&q));
        }
    }

    #[test]
    fn fig4_b_learns_three_states() {
        let b = materialize(&fig4_l(), &fig4_g(), SamplingStrategy::TopR(2)).unwrap();
        let out = learn(ExactTeacher::new(b.clone()).unwrap(), omit_zero()).unwrap();
        assert_eq!(out.hypothesis.num_states(), 3);
        assert_eq!(
            congruence_partition(&b, &Partitioner::Exact, CongruenceMode::Defined).num_blocks(),
            out.hypothesis.num_states()
        );
        assert_eq!(hk_equiv(&b, &out.hypothesis, &Partitioner::Exact).unwrap(), None);
        assert!(out.hypothesis.isomorphic(&quotient(&b, &Partitioner::Exact)));
    }

    #[test]
    fn qnt_baselines_converge() {
        let b = materialize(&fig4_l(), &fig4_g(), SamplingStrategy::TopR(2)).unwrap();
        let config = LearnerConfig::new(LearnerMode::Qnt, Partitioner::Exact).checked();
        let filter = learn(FilterTeacher::new(b.clone()).unwrap(), config.clone()).unwrap();
        let exact = learn(ExactTeacher::new(b.clone()).unwrap(), config).unwrap();
        for out in [&filter, &exact] {
            assert_eq!(hk_equiv(&b, &out.hypothesis, &Partitioner::Exact).unwrap(), None);
        }
        let omit = learn(FilterTeacher::new(b).unwrap(), omit_zero()).unwrap();
        assert!(omit.stats.mq_count <= filter.stats.mq_count);
        assert!(filter.stats.mq_count <= exact.stats.mq_count);
    }

    #[test]
    fn single_state_target_needs_one_round() {
        let a = pdfa(&[[0.25, 0.25, 0.5]], &[[Some(0), Some(0)]]);
        let out = learn(ExactTeacher::new(a).unwrap(), omit_zero()).unwrap();
        assert_eq!((out.rounds, out.hypothesis.num_states()), (1, 1));
    }

    #[test]
    fn update_adds_exactly_one_leaf() {
        let target = fig1_a();
        let mut teacher = ExactTeacher::new(target.clone()).unwrap();
        let mut l = Learner::new(&mut teacher, omit_zero());
        let h0 = l.initial_hypothesis().unwrap();
        l.initialize_tree(&h0, &word("a")).unwrap();
        let h = l.build().unwrap();
        if let Some(ce) = hk_equiv(&target, &h, &Partitioner::Exact).unwrap() {
            let before = l.tree().unwrap().num_leaves();
            l.update(&h, &ce.gamma).unwrap();
            assert_eq!(l.tree().unwrap().num_leaves(), before + 1);
            l.check_tree().unwrap();
        }
    }

    #[test]
    fn query_budget_guard() {
        let mut config = omit_zero();
        config.max_queries = Some(1);
        assert!(matches!(
            learn(ExactTeacher::new(fig1_a()).unwrap(), config),
            Err(LearnError::QueryBudgetExceeded(1))
        ));
    }
}
