//! PDFA and guide automata: evaluation, prefix probabilities, definedness,
//! termination mass, congruence partitions and quotients, and on-demand
//! composition with guides.

mod guide;
mod partition;

pub use guide::{compose, materialize, Composed, GuideAutomaton};
pub use partition::{congruence_partition, quotient, CongruenceMode, StatePartition};

use std::collections::VecDeque;
use std::sync::Arc;

use thiserror::Error;

use crate::simplex::{Alphabet, Distribution, SimplexError, Symbol};

pub type StateId = usize;

#[derive(Debug, Error)]
pub enum AutomataError {
    #[error("symbol index {0} is outside the alphabet")]
    UnknownSymbol(u32),
    #[error("state {0} out of range")]
    InvalidState(usize),
    #[error("automaton has no states")]
    Empty,
    #[error("state {state}: {message}")]
    Malformed { state: usize, message: String },
    #[error("state {state} has no transition on `{symbol}` although it is in the support")]
    UndefOnSupport { state: usize, symbol: String },
    #[error("automaton is not fully defined")]
    NotTotal,
    #[error("alphabets differ")]
    AlphabetMismatch,
    #[error("termination mass did not converge (residual {residual:e})")]
    NonConvergence { residual: f64 },
    #[error("composition is dead at a reachable state: {0}")]
    DeadComposition(String),
    #[error(transparent)]
    Simplex(#[from] SimplexError),
}

/// Failure of a [`LanguageModel`] query.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("symbol index {0} is outside the alphabet")]
    UnknownSymbol(u32),
    #[error("model backend failed: {0}")]
    Backend(#[source] Box<dyn std::error::Error + Send + Sync>),
}

/// A map from strings to next-symbol distributions.
///
/// `next(u)` is `None` exactly when `u` is undefined, i.e. some step of `u`
/// leaves the support of the preceding distribution.
pub trait LanguageModel {
    fn alphabet(&self) -> &Alphabet;
    fn next(&self, u: &[Symbol]) -> Result<Option<Distribution>, ModelError>;
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn alphabet(&self) -> &Alphabet {
        (**self).alphabet()
    }
    fn next(&self, u: &[Symbol]) -> Result<Option<Distribution>, ModelError> {
        (**self).next(u)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Box<M> {
    fn alphabet(&self) -> &Alphabet {
        (**self).alphabet()
    }
    fn next(&self, u: &[Symbol]) -> Result<Option<Distribution>, ModelError> {
        (**self).next(u)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Arc<M> {
    fn alphabet(&self) -> &Alphabet {
        (**self).alphabet()
    }
    fn next(&self, u: &[Symbol]) -> Result<Option<Distribution>, ModelError> {
        (**self).next(u)
    }
}

/// Probabilistic deterministic finite automaton with a possibly partial
/// transition function.
///
/// Invariant: a transition is `None` (UNDEF) only on symbols outside the
/// support of its source state.
#[derive(Debug, Clone, PartialEq)]
pub struct Pdfa {
    alphabet: Alphabet,
    initial: StateId,
    pi: Vec<Distribution>,
    tau: Vec<Option<u32>>,
}

impl Pdfa {
    pub fn new(
        alphabet: Alphabet,
        initial: StateId,
        pi: Vec<Distribution>,
        tau: Vec<Vec<Option<StateId>>>,
    ) -> Result<Self, AutomataError> {
        let n = pi.len();
        let m = alphabet.len();
        if n == 0 {
            return Err(AutomataError::Empty);
        }
        if initial >= n {
            return Err(AutomataError::InvalidState(initial));
        }
        if tau.len() != n {
            return Err(AutomataError::Malformed {
                state: tau.len().min(n),
                message: format!("{} transition rows for {n} states", tau.len()),
            });
        }
        let mut flat = Vec::with_capacity(n * m);
        for (q, (row, d)) in tau.iter().zip(&pi).enumerate() {
            if d.slots() != alphabet.slots() {
                return Err(AutomataError::Malformed {
                    state: q,
                    message: format!("distribution has {} slots, expected {}", d.slots(), alphabet.slots()),
                });
            }
            if row.len() != m {
                return Err(AutomataError::Malformed {
                    state: q,
                    message: format!("{} transitions, expected {m}", row.len()),
                });
            }
            for (s, target) in row.iter().enumerate() {
                match *target {
                    Some(t) if t >= n => return Err(AutomataError::InvalidState(t)),
                    None if d.prob(s) > 0.0 => {
                        return Err(AutomataError::UndefOnSupport {
                            state: q,
                            symbol: alphabet.name(Symbol(s as u32)).to_string(),
                        })
                    }
                    _ => {}
                }
                flat.push(target.map(|t| t as u32));
            }
        }
        Ok(Pdfa { alphabet, initial, pi, tau: flat })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn num_states(&self) -> usize {
        self.pi.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn dist(&self, q: StateId) -> &Distribution {
        &self.pi[q]
    }

    pub fn distributions(&self) -> &[Distribution] {
        &self.pi
    }

    pub fn next_state(&self, q: StateId, s: Symbol) -> Option<StateId> {
        self.tau[q * self.alphabet.len() + s.index()].map(|t| t as usize)
    }

    /// Transition row of `q` as owned targets.
    pub fn transitions(&self, q: StateId) -> Vec<Option<StateId>> {
        self.alphabet.symbols().map(|s| self.next_state(q, s)).collect()
    }

    pub fn is_total(&self) -> bool {
        self.tau.iter().all(Option::is_some)
    }

    fn check_word(&self, u: &[Symbol]) -> Result<(), AutomataError> {
        match u.iter().find(|s| !self.alphabet.contains(**s)) {
            Some(s) => Err(AutomataError::UnknownSymbol(s.0)),
            None => Ok(()),
        }
    }

    /// State reached from the initial state, `None` on an UNDEF step.
    pub fn walk(&self, u: &[Symbol]) -> Result<Option<StateId>, AutomataError> {
        self.check_word(u)?;
        Ok(self.walk_from(self.initial, u))
    }

    pub fn walk_from(&self, mut q: StateId, u: &[Symbol]) -> Option<StateId> {
        for &s in u {
            q = self.next_state(q, s)?;
        }
        Some(q)
    }

    /// `π(walk(u))`, ignoring whether the path has positive probability.
    pub fn next_dist(&self, u: &[Symbol]) -> Result<Option<&Distribution>, AutomataError> {
        Ok(self.walk(u)?.map(|q| &self.pi[q]))
    }

    /// State reached along support transitions only, `None` if `u` is
    /// undefined.
    pub fn defined_walk(&self, u: &[Symbol]) -> Result<Option<StateId>, AutomataError> {
        self.check_word(u)?;
        let mut q = self.initial;
        for &s in u {
            if !self.pi[q].in_support(s) {
                return Ok(None);
            }
            q = self.next_state(q, s).expect("support transitions are defined");
        }
        Ok(Some(q))
    }

    pub fn is_defined(&self, u: &[Symbol]) -> Result<bool, AutomataError> {
        Ok(self.defined_walk(u)?.is_some())
    }

    fn reachable(&self, positive_only: bool) -> Vec<bool> {
        let mut seen = vec![false; self.num_states()];
        let mut queue = VecDeque::from([self.initial]);
        seen[self.initial] = true;
        while let Some(q) = queue.pop_front() {
            for s in self.alphabet.symbols() {
                if positive_only && !self.pi[q].in_support(s) {
                    continue;
                }
                if let Some(t) = self.next_state(q, s) {
                    if !seen[t] {
                        seen[t] = true;
                        queue.push_back(t);
                    }
                }
            }
        }
        seen
    }

    /// States reachable through any defined transition.
    pub fn structurally_reachable(&self) -> Vec<bool> {
        self.reachable(false)
    }

    /// States reachable through positive-probability transitions.
    pub fn positively_reachable(&self) -> Vec<bool> {
        self.reachable(true)
    }

    /// Restriction to structurally reachable states, renumbered in BFS order.
    pub fn trim(&self) -> Pdfa {
        let mut order = vec![usize::MAX; self.num_states()];
        let mut states = vec![self.initial];
        order[self.initial] = 0;
        let mut i = 0;
        while i < states.len() {
            let q = states[i];
            for s in self.alphabet.symbols() {
                if let Some(t) = self.next_state(q, s) {
                    if order[t] == usize::MAX {
                        order[t] = states.len();
                        states.push(t);
                    }
                }
            }
            i += 1;
        }
        let pi = states.iter().map(|&q| self.pi[q].clone()).collect();
        let tau = states
            .iter()
            .map(|&q| self.alphabet.symbols().map(|s| self.next_state(q, s).map(|t| order[t])).collect())
            .collect();
        Pdfa::new(self.alphabet.clone(), 0, pi, tau).expect("trim preserves validity")
    }

    /// Structural isomorphism from the initial states, comparing
    /// distributions with `same`.
    pub fn isomorphic_by(&self, other: &Pdfa, same: impl Fn(&Distribution, &Distribution) -> bool) -> bool {
        if self.alphabet != other.alphabet {
            return false;
        }
        let mut fwd = vec![usize::MAX; self.num_states()];
        let mut bwd = vec![usize::MAX; other.num_states()];
        let mut queue = VecDeque::from([(self.initial, other.initial)]);
        fwd[self.initial] = other.initial;
        bwd[other.initial] = self.initial;
        let mut mapped = 1;
        while let Some((p, q)) = queue.pop_front() {
            if !same(&self.pi[p], &other.pi[q]) {
                return false;
            }
            for s in self.alphabet.symbols() {
                match (self.next_state(p, s), other.next_state(q, s)) {
                    (None, None) => {}
                    (Some(a), Some(b)) => {
                        if fwd[a] == usize::MAX && bwd[b] == usize::MAX {
                            fwd[a] = b;
                            bwd[b] = a;
                            mapped += 1;
                            queue.push_back((a, b));
                        } else if fwd[a] != b || bwd[b] != a {
                            return false;
                        }
                    }
                    _ => return false,
                }
            }
        }
        let reach_self = self.structurally_reachable().iter().filter(|&&r| r).count();
        let reach_other = other.structurally_reachable().iter().filter(|&&r| r).count();
        mapped == reach_self && mapped == reach_other
    }

    pub fn isomorphic(&self, other: &Pdfa) -> bool {
        self.isomorphic_by(other, |a, b| a == b)
    }
}

impl LanguageModel for Pdfa {
    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn next(&self, u: &[Symbol]) -> Result<Option<Distribution>, ModelError> {
        match self.defined_walk(u) {
            Ok(q) => Ok(q.map(|q| self.pi[q].clone())),
            Err(AutomataError::UnknownSymbol(s)) => Err(ModelError::UnknownSymbol(s)),
            Err(e) => Err(ModelError::Backend(Box::new(e))),
        }
    }
}

/// `P(w)`: probability of `w` being a prefix.
pub fn prefix_prob<M: LanguageModel + ?Sized>(model: &M, w: &[Symbol]) -> Result<f64, ModelError> {
    let mut p = 1.0;
    for i in 0..w.len() {
        match model.next(&w[..i])? {
            Some(d) => p *= d.get(w[i]),
            None => return Ok(0.0),
        }
        if p == 0.0 {
            return Ok(0.0);
        }
    }
    Ok(p)
}

/// `P$(u) = P(u)·L(u)($)`.
pub fn string_prob<M: LanguageModel + ?Sized>(model: &M, u: &[Symbol]) -> Result<f64, ModelError> {
    let p = prefix_prob(model, u)?;
    if p == 0.0 {
        return Ok(0.0);
    }
    Ok(model.next(u)?.map_or(0.0, |d| p * d.terminal()))
}

/// Definedness by support membership of every step.
pub fn is_defined<M: LanguageModel + ?Sized>(model: &M, u: &[Symbol]) -> Result<bool, ModelError> {
    for i in 0..u.len() {
        match model.next(&u[..i])? {
            Some(d) if d.in_support(u[i]) => {}
            _ => return Ok(false),
        }
    }
    Ok(model.next(u)?.is_some())
}

pub const TERMINATION_TOLERANCE: f64 = 1e-12;
pub const TERMINATION_MAX_ITERATIONS: usize = 1_000_000;

/// Per-state probability of eventually terminating.
///
/// Gauss-Seidel iteration of `x_q = π(q)($) + Σ_σ π(q)(σ)·x_{τ(q,σ)}` from 0;
/// the iterates increase monotonically to the least fixed point.
pub fn termination_mass(a: &Pdfa) -> Result<Vec<f64>, AutomataError> {
    let n = a.num_states();
    let mut x = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..TERMINATION_MAX_ITERATIONS {
        residual = 0.0;
        for q in 0..n {
            let d = &a.pi[q];
            let mut v = d.terminal();
            for s in a.alphabet.symbols() {
                let p = d.get(s);
                if p > 0.0 {
                    if let Some(t) = a.next_state(q, s) {
                        v += p * x[t];
                    }
                }
            }
            let v = v.min(1.0);
            residual = f64::max(residual, (v - x[q]).abs());
            x[q] = v;
        }
        if residual < TERMINATION_TOLERANCE {
            return Ok(x);
        }
    }
    Err(AutomataError::NonConvergence { residual })
}

/// `t[k][q]`: probability of terminating from `q` within `k` more symbols.
pub fn bounded_termination(a: &Pdfa, max_len: usize) -> Vec<Vec<f64>> {
    let n = a.num_states();
    let mut table = Vec::with_capacity(max_len + 1);
    table.push((0..n).map(|q| a.pi[q].terminal()).collect::<Vec<f64>>());
    for k in 1..=max_len {
        let prev = &table[k - 1];
        let row = (0..n)
            .map(|q| {
                let d = &a.pi[q];
                let mut v = d.terminal();
                for s in a.alphabet.symbols() {
                    if d.in_support(s) {
                        v += d.get(s) * prev[a.next_state(q, s).expect("support transition")];
                    }
                }
                v
            })
            .collect();
        table.push(row);
    }
    table
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::simplex::Rational;

    pub fn alphabet_ab() -> Alphabet {
        Alphabet::new(["a", "b"]).unwrap()
    }

    pub fn pdfa(dists: &[[f64; 3]], tau: &[[Option<usize>; 2]]) -> Pdfa {
        let pi = dists.iter().map(|d| Distribution::new(d.to_vec()).unwrap()).collect();
        let tau = tau.iter().map(|r| r.to_vec()).collect();
        Pdfa::new(alphabet_ab(), 0, pi, tau).unwrap()
    }

    pub fn rational_pdfa(dists: &[[(i64, i64); 3]], tau: &[[Option<usize>; 2]]) -> Pdfa {
        let pi = dists
            .iter()
            .map(|d| Distribution::from_rationals(d.iter().map(|&(n, k)| Rational::new(n, k)).collect()).unwrap())
            .collect();
        let tau = tau.iter().map(|r| r.to_vec()).collect();
        Pdfa::new(alphabet_ab(), 0, pi, tau).unwrap()
    }

    /// Fig. 1 A: slots (a, b, $).
    pub fn fig1_a() -> Pdfa {
        pdfa(
            &[[0.3, 0.7, 0.0], [0.6, 0.0, 0.4], [0.4, 0.4, 0.2]],
            &[[Some(1), Some(2)], [Some(1), Some(1)], [Some(2), Some(2)]],
        )
    }

    pub fn fig1_b() -> Pdfa {
        pdfa(
            &[[0.3, 0.7, 0.0], [0.6, 0.0, 0.4], [0.5, 0.5, 0.0]],
            &[[Some(1), Some(2)], [Some(1), Some(1)], [Some(2), Some(2)]],
        )
    }

    pub fn fig3_left() -> Pdfa {
        pdfa(
            &[[0.1, 0.0, 0.9], [0.1, 0.0, 0.9], [0.2, 0.7, 0.1]],
            &[[Some(1), Some(2)], [Some(0), Some(1)], [Some(0), Some(2)]],
        )
    }

    pub fn fig3_right() -> Pdfa {
        pdfa(&[[0.1, 0.0, 0.9], [0.2, 0.7, 0.1]], &[[Some(0), Some(1)], [Some(1), Some(1)]])
    }

    pub fn fig4_l() -> Pdfa {
        rational_pdfa(
            &[[(7, 10), (2, 10), (1, 10)], [(3, 10), (2, 10), (5, 10)]],
            &[[Some(0), Some(1)], [Some(1), Some(0)]],
        )
    }

    pub fn fig4_g() -> GuideAutomaton {
        GuideAutomaton::new(
            alphabet_ab(),
            0,
            vec![vec![true, false, true], vec![true, true, true]],
            vec![vec![1, 0], vec![1, 0]],
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::simplex::Partitioner;

    fn w(a: &Pdfa, s: &str) -> Vec<Symbol> {
        a.alphabet().parse_word(s).unwrap()
    }

    #[test]
    fn walk_examples() {
        let a = fig1_a();
        assert_eq!(a.walk(&w(&a, "a b")).unwrap(), Some(1));
        assert_eq!(a.walk(&[]).unwrap(), Some(0));
        assert!(matches!(a.walk(&[Symbol(7)]), Err(AutomataError::UnknownSymbol(7))));
        let partial = pdfa(&[[1.0, 0.0, 0.0]], &[[Some(0), None]]);
        assert_eq!(partial.walk(&w(&partial, "b a")).unwrap(), None);
    }

    #[test]
    fn next_dist_examples() {
        let a = fig1_a();
        assert_eq!(a.next_dist(&w(&a, "a")).unwrap().unwrap().probs(), &[0.6, 0.0, 0.4]);
        assert_eq!(a.next_dist(&[]).unwrap().unwrap().probs(), &[0.3, 0.7, 0.0]);
        assert!(a.next(&w(&a, "a b")).unwrap().is_none(), "model view hides undefined strings");
    }

    #[test]
    fn probabilities_on_fig1_a() {
        let a = fig1_a();
        assert_eq!(prefix_prob(&a, &w(&a, "a b")).unwrap(), 0.0);
        assert_eq!(prefix_prob(&a, &[]).unwrap(), 1.0);
        assert!((prefix_prob(&a, &w(&a, "b a")).unwrap() - 0.28).abs() < 1e-15);
        assert!((string_prob(&a, &w(&a, "b")).unwrap() - 0.14).abs() < 1e-15);
        assert_eq!(string_prob(&a, &[]).unwrap(), 0.0);
        assert!((string_prob(&a, &w(&a, "a")).unwrap() - 0.12).abs() < 1e-15);
    }

    #[test]
    fn definedness() {
        let a = fig1_a();
        assert!(!is_defined(&a, &w(&a, "a b")).unwrap());
        assert!(is_defined(&a, &[]).unwrap());
        let f3 = fig3_left();
        assert!(is_defined(&f3, &w(&f3, "a")).unwrap());
        assert!(!f3.is_defined(&w(&f3, "a b")).unwrap());
        assert!(!f3.is_defined(&w(&f3, "b")).unwrap());
    }

    #[test]
    fn termination_mass_examples() {
        let a = termination_mass(&fig1_a()).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-9);
        let b = termination_mass(&fig1_b()).unwrap();
        assert!((b[0] - 0.3).abs() < 1e-9);
        assert_eq!(b[2], 0.0);
        let single = pdfa(&[[0.0, 0.0, 1.0]], &[[Some(0), Some(0)]]);
        assert_eq!(termination_mass(&single).unwrap(), vec![1.0]);
    }

    #[test]
    fn bounded_termination_approaches_mass() {
        let t = bounded_termination(&fig1_a(), 400);
        assert!((t[400][0] - 1.0).abs() < 1e-9);
        assert_eq!(t[0][0], 0.0);
        assert!((t[1][0] - 0.3 * 0.4 - 0.7 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn undef_on_support_is_rejected() {
        let pi = vec![Distribution::new(vec![0.5, 0.5, 0.0]).unwrap()];
        let err = Pdfa::new(alphabet_ab(), 0, pi, vec![vec![Some(0), None]]).unwrap_err();
        assert!(matches!(err, AutomataError::UndefOnSupport { .. }));
    }

    #[test]
    fn isomorphism_ignores_numbering() {
        let a = fig3_right();
        let swapped = pdfa(&[[0.2, 0.7, 0.1], [0.1, 0.0, 0.9]], &[[Some(0), Some(0)], [Some(1), Some(0)]]);
        let swapped = Pdfa::new(
            swapped.alphabet().clone(),
            1,
            swapped.distributions().to_vec(),
            (0..2).map(|q| swapped.transitions(q)).collect(),
        )
        .unwrap();
        assert!(a.isomorphic(&swapped));
        assert!(!a.isomorphic(&fig3_left()));
        let e = Partitioner::Quantization { kappa: 2 };
        assert!(fig1_a().isomorphic_by(&fig1_a(), |x, y| e.equivalent(x, y)));
    }

    #[test]
    fn trim_drops_unreachable_states() {
        let a = pdfa(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], &[[Some(0), Some(0)], [Some(1), Some(1)]]);
        assert_eq!(a.trim().num_states(), 1);
    }
}
