//! Random benchmark targets: uniform total transition maps trimmed to the
//! reachable part, with per-state distributions whose entries are zeroed
//! independently with probability θ.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::automata::{AutomataError, Pdfa};
use crate::simplex::{normalize, Alphabet, Partitioner, SimplexError, Weights};

#[derive(Debug, Error)]
pub enum RandgenError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error(transparent)]
    Automata(#[from] AutomataError),
}

/// Total deterministic transition structure; state 0 is initial and every
/// state is reachable from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dfa {
    pub num_symbols: usize,
    pub delta: Vec<Vec<usize>>,
}

impl Dfa {
    pub fn num_states(&self) -> usize {
        self.delta.len()
    }
}

pub fn random_dfa(n: usize, m: usize, seed: u64) -> Result<Dfa, RandgenError> {
    if n == 0 || m == 0 {
        return Err(RandgenError::InvalidSpec(format!("n={n} and m={m} must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<Vec<usize>> = (0..n).map(|_| (0..m).map(|_| rng.gen_range(0..n)).collect()).collect();

    let mut renumber = vec![None; n];
    let mut order = vec![0];
    renumber[0] = Some(0);
    let mut queue = VecDeque::from([0]);
    while let Some(q) = queue.pop_front() {
        for &t in &raw[q] {
            if renumber[t].is_none() {
                renumber[t] = Some(order.len());
                order.push(t);
                queue.push_back(t);
            }
        }
    }
    let delta = order
        .iter()
        .map(|&q| raw[q].iter().map(|&t| renumber[t].expect("reachable")).collect())
        .collect();
    Ok(Dfa { num_symbols: m, delta })
}

/// Distributions over `s0..s{m-1}` and `$`.
pub fn assign_distributions(dfa: &Dfa, theta: f64, seed: u64) -> Result<Pdfa, RandgenError> {
    assign_distributions_over(dfa, Alphabet::numbered(dfa.num_symbols)?, theta, seed)
}

pub fn assign_distributions_over(dfa: &Dfa, alphabet: Alphabet, theta: f64, seed: u64) -> Result<Pdfa, RandgenError> {
    if !(0.0..1.0).contains(&theta) {
        return Err(RandgenError::InvalidSpec(format!("theta {theta} must lie in [0,1)")));
    }
    if alphabet.len() != dfa.num_symbols {
        return Err(AutomataError::AlphabetMismatch.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // a separate stream keeps weights independent of the structure drawn from the same seed
    rng.set_stream(1);
    let slots = alphabet.slots();
    let mut pi = Vec::with_capacity(dfa.num_states());
    for _ in 0..dfa.num_states() {
        let mut kept: Vec<bool> = (0..slots).map(|_| rng.gen::<f64>() >= theta).collect();
        if !kept.iter().any(|&k| k) {
            kept[rng.gen_range(0..slots)] = true;
        }
        let weights = kept.iter().map(|&k| if k { 1.0 - rng.gen::<f64>() } else { 0.0 }).collect();
        pi.push(normalize(&Weights::new(weights))?);
    }
    let tau = dfa.delta.iter().map(|row| row.iter().map(|&t| Some(t)).collect()).collect();
    Ok(Pdfa::new(alphabet, 0, pi, tau)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenSpec {
    pub n: usize,
    pub m: usize,
    pub theta: f64,
    pub kappa: u32,
    pub seed: u64,
}

impl GenSpec {
    pub fn validate(&self) -> Result<(), RandgenError> {
        if self.n == 0 || self.m == 0 {
            return Err(RandgenError::InvalidSpec(format!("n={} and m={} must be positive", self.n, self.m)));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(RandgenError::InvalidSpec(format!("theta {} must lie in [0,1)", self.theta)));
        }
        if self.kappa == 0 {
            return Err(RandgenError::InvalidSpec("kappa must be positive".into()));
        }
        Ok(())
    }

    /// Quantization equivalence with the spec's κ.
    pub fn partitioner(&self) -> Partitioner {
        Partitioner::Quantization { kappa: self.kappa }
    }

    pub fn generate(&self) -> Result<Pdfa, RandgenError> {
        self.validate()?;
        let dfa = random_dfa(self.n, self.m, self.seed)?;
        assign_distributions(&dfa, self.theta, self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_state_loops() {
        let d = random_dfa(1, 3, 9).unwrap();
        assert_eq!(d.delta, vec![vec![0, 0, 0]]);
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(random_dfa(40, 5, 1).unwrap(), random_dfa(40, 5, 1).unwrap());
        let spec = GenSpec { n: 30, m: 4, theta: 0.5, kappa: 10, seed: 5 };
        assert_eq!(spec.generate().unwrap(), spec.generate().unwrap());
        assert_ne!(random_dfa(40, 5, 1).unwrap(), random_dfa(40, 5, 2).unwrap());
    }

    #[test]
    fn trimmed_structure_is_reachable() {
        let d = random_dfa(60, 2, 3).unwrap();
        assert!(d.num_states() <= 60);
        let a = assign_distributions(&d, 0.0, 3).unwrap();
        assert!(a.structurally_reachable().iter().all(|&r| r));
    }

    #[test]
    fn reachable_size_calibration() {
        let sizes: Vec<usize> = (0..100).map(|s| random_dfa(500, 20, s).unwrap().num_states()).collect();
        let mean = sizes.iter().sum::<usize>() as f64 / sizes.len() as f64;
        assert!((400.0..=500.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn theta_zero_has_full_support() {
        let a = assign_distributions(&random_dfa(50, 6, 2).unwrap(), 0.0, 2).unwrap();
        for d in a.distributions() {
            assert!(d.probs().iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn high_theta_support_size() {
        let a = assign_distributions(&random_dfa(2000, 20, 4).unwrap(), 0.95, 4).unwrap();
        let sizes: Vec<usize> = a.distributions().iter().map(|d| d.positive_slots().iter().filter(|&&p| p).count()).collect();
        assert!(sizes.iter().all(|&s| s >= 1));
        let mean = sizes.iter().sum::<usize>() as f64 / sizes.len() as f64;
        // E = 21·0.05 + P(all zero) ≈ 1.05 + 0.34
        assert!((1.2..1.6).contains(&mean), "mean {mean}");
    }

    #[test]
    fn invalid_specs() {
        assert!(random_dfa(0, 2, 0).is_err());
        assert!(GenSpec { n: 3, m: 2, theta: 1.0, kappa: 10, seed: 0 }.generate().is_err());
        assert!(GenSpec { n: 3, m: 2, theta: 0.5, kappa: 0, seed: 0 }.generate().is_err());
    }
}
