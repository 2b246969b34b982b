//! Distributions over `Σ ∪ {$}`, equivalences on the simplex, and sampling
//! strategies.
//!
//! A distribution is stored as a dense vector with one slot per symbol plus a
//! final slot for the terminal. Distributions read from files with rational
//! entries additionally carry the exact values, and the operations here keep
//! them exact whenever every input is exact.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, Zero};
use rand::Rng;
use thiserror::Error;

pub type Rational = Ratio<i64>;

/// Tolerance on `Σ probs = 1`.
pub const SUM_TOLERANCE: f64 = 1e-9;

pub const TERMINAL_NAME: &str = "$";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimplexError {
    #[error("every weight is zero")]
    AllZero,
    #[error("expected {expected} entries, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("invalid weight {0}")]
    InvalidWeight(f64),
    #[error("probabilities sum to {0}")]
    NotNormalized(f64),
    #[error("alphabet is empty")]
    EmptyAlphabet,
    #[error("duplicate symbol `{0}`")]
    DuplicateSymbol(String),
    #[error("symbol name `{0}` is reserved or malformed")]
    ReservedSymbol(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A symbol of an [`Alphabet`], by dense index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(pub u32);

impl Symbol {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

pub type Word = Vec<Symbol>;

/// Ordered symbol names; the terminal is implicit and occupies slot `len()`.
#[derive(Debug, Clone)]
pub struct Alphabet {
    names: Vec<String>,
    index: HashMap<String, Symbol>,
}

impl PartialEq for Alphabet {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
    }
}

impl Eq for Alphabet {}

impl Alphabet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, SimplexError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(SimplexError::EmptyAlphabet);
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name == TERMINAL_NAME || name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(SimplexError::ReservedSymbol(name.clone()));
            }
            if index.insert(name.clone(), Symbol(i as u32)).is_some() {
                return Err(SimplexError::DuplicateSymbol(name.clone()));
            }
        }
        Ok(Alphabet { names, index })
    }

    /// Alphabet `s0 … s{m-1}`.
    pub fn numbered(m: usize) -> Result<Self, SimplexError> {
        Alphabet::new((0..m).map(|i| format!("s{i}")))
    }

    /// Number of symbols `m`, terminal excluded.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Number of distribution slots, `m + 1`.
    pub fn slots(&self) -> usize {
        self.names.len() + 1
    }

    pub fn terminal_slot(&self) -> usize {
        self.names.len()
    }

    pub fn symbols(&self) -> impl Iterator<Item = Symbol> + '_ {
        (0..self.names.len() as u32).map(Symbol)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, s: Symbol) -> &str {
        &self.names[s.index()]
    }

    /// Name of a slot, `$` for the terminal.
    pub fn slot_name(&self, slot: usize) -> &str {
        if slot == self.terminal_slot() {
            TERMINAL_NAME
        } else {
            &self.names[slot]
        }
    }

    pub fn symbol(&self, name: &str) -> Option<Symbol> {
        self.index.get(name).copied()
    }

    /// Slot of a name, accepting `$` for the terminal.
    pub fn slot(&self, name: &str) -> Option<usize> {
        if name == TERMINAL_NAME {
            Some(self.terminal_slot())
        } else {
            self.symbol(name).map(Symbol::index)
        }
    }

    pub fn contains(&self, s: Symbol) -> bool {
        s.index() < self.names.len()
    }

    /// Parses a whitespace-separated word; `""` is λ.
    pub fn parse_word(&self, text: &str) -> Result<Word, SimplexError> {
        text.split_whitespace()
            .map(|t| self.symbol(t).ok_or_else(|| SimplexError::UnknownSymbol(t.to_string())))
            .collect()
    }

    pub fn format_word(&self, w: &[Symbol]) -> String {
        w.iter().map(|&s| self.name(s)).collect::<Vec<_>>().join(" ")
    }
}

fn ratio_to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Nonnegative weights over slots, not necessarily normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    values: Vec<f64>,
    exact: Option<Vec<Rational>>,
}

impl Weights {
    pub fn new(values: Vec<f64>) -> Self {
        Weights { values, exact: None }
    }

    pub fn from_rationals(exact: Vec<Rational>) -> Self {
        let values = exact.iter().map(ratio_to_f64).collect();
        Weights { values, exact: Some(exact) }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn exact(&self) -> Option<&[Rational]> {
        self.exact.as_deref()
    }
}

/// Divides every weight by the total.
pub fn normalize(raw: &Weights) -> Result<Distribution, SimplexError> {
    if raw.values.is_empty() {
        return Err(SimplexError::Arity { expected: 1, got: 0 });
    }
    for &v in &raw.values {
        if !v.is_finite() || v < 0.0 {
            return Err(SimplexError::InvalidWeight(v));
        }
    }
    if let Some(exact) = &raw.exact {
        if exact.iter().any(|r| *r < Rational::zero()) {
            return Err(SimplexError::InvalidWeight(f64::NAN));
        }
        if exact.iter().all(|r| r.is_zero()) {
            return Err(SimplexError::AllZero);
        }
        if let Some(d) = normalize_exact(exact) {
            return Ok(Distribution::from_exact_unchecked(d));
        }
    }
    let total: f64 = raw.values.iter().sum();
    if total <= 0.0 {
        return Err(SimplexError::AllZero);
    }
    let probs = raw.values.iter().map(|v| v / total).collect();
    Ok(Distribution { probs, exact: None })
}

fn normalize_exact(exact: &[Rational]) -> Option<Vec<Rational>> {
    let mut total = Rational::zero();
    for r in exact {
        total = total.checked_add(r)?;
    }
    exact.iter().map(|r| r.checked_div(&total)).collect()
}

/// A probability vector over `Σ ∪ {$}`; the last slot is the terminal.
#[derive(Debug, Clone)]
pub struct Distribution {
    probs: Vec<f64>,
    exact: Option<Vec<Rational>>,
}

impl PartialEq for Distribution {
    fn eq(&self, other: &Self) -> bool {
        self.probs == other.probs
    }
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, SimplexError> {
        if probs.len() < 2 {
            return Err(SimplexError::Arity { expected: 2, got: probs.len() });
        }
        for &p in &probs {
            if !p.is_finite() || !(0.0..=1.0 + SUM_TOLERANCE).contains(&p) {
                return Err(SimplexError::InvalidWeight(p));
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(SimplexError::NotNormalized(total));
        }
        Ok(Distribution { probs, exact: None })
    }

    pub fn from_rationals(exact: Vec<Rational>) -> Result<Self, SimplexError> {
        if exact.len() < 2 {
            return Err(SimplexError::Arity { expected: 2, got: exact.len() });
        }
        if exact.iter().any(|r| *r < Rational::zero()) {
            return Err(SimplexError::InvalidWeight(f64::NAN));
        }
        let mut total = Rational::zero();
        for r in &exact {
            total = total
                .checked_add(r)
                .ok_or_else(|| SimplexError::InvalidParameter("rational overflow".into()))?;
        }
        if total != Rational::from_integer(1) {
            return Err(SimplexError::NotNormalized(ratio_to_f64(&total)));
        }
        Ok(Distribution::from_exact_unchecked(exact))
    }

    fn from_exact_unchecked(exact: Vec<Rational>) -> Self {
        let probs = exact.iter().map(ratio_to_f64).collect();
        Distribution { probs, exact: Some(exact) }
    }

    /// All mass on one slot.
    pub fn point(slots: usize, slot: usize) -> Self {
        let mut exact = vec![Rational::zero(); slots];
        exact[slot] = Rational::from_integer(1);
        Distribution::from_exact_unchecked(exact)
    }

    /// Uniform over all `slots`.
    pub fn uniform(slots: usize) -> Self {
        let exact = vec![Rational::new(1, slots as i64); slots];
        Distribution::from_exact_unchecked(exact)
    }

    pub fn slots(&self) -> usize {
        self.probs.len()
    }

    pub fn num_symbols(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn exact(&self) -> Option<&[Rational]> {
        self.exact.as_deref()
    }

    pub fn prob(&self, slot: usize) -> f64 {
        self.probs[slot]
    }

    pub fn get(&self, s: Symbol) -> f64 {
        self.probs[s.index()]
    }

    pub fn terminal(&self) -> f64 {
        self.probs[self.probs.len() - 1]
    }

    pub fn in_support(&self, s: Symbol) -> bool {
        s.index() < self.num_symbols() && self.probs[s.index()] > 0.0
    }

    /// Symbols with positive probability; the terminal is excluded.
    pub fn support(&self) -> Vec<Symbol> {
        (0..self.num_symbols())
            .filter(|&i| self.probs[i] > 0.0)
            .map(|i| Symbol(i as u32))
            .collect()
    }

    /// Positivity pattern over all slots, terminal included.
    pub fn positive_slots(&self) -> Vec<bool> {
        self.probs.iter().map(|&p| p > 0.0).collect()
    }

    /// Keeps the slots where `keep` is true, without renormalizing.
    pub fn masked(&self, keep: &[bool]) -> Weights {
        debug_assert_eq!(keep.len(), self.probs.len());
        let values = self.probs.iter().zip(keep).map(|(&p, &k)| if k { p } else { 0.0 }).collect();
        let exact = self.exact.as_ref().map(|ex| {
            ex.iter().zip(keep).map(|(r, &k)| if k { *r } else { Rational::zero() }).collect()
        });
        Weights { values, exact }
    }

    /// Draws a slot; `u` is uniform in `[0, 1)`.
    pub fn slot_at(&self, u: f64) -> usize {
        let mut cum = 0.0;
        let mut last_positive = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                cum += p;
                last_positive = i;
                if u < cum {
                    return i;
                }
            }
        }
        last_positive
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.slot_at(rng.gen::<f64>())
    }

    /// Descending probability, then ascending slot; the terminal slot is last.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.probs.len()).collect();
        order.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        order
    }
}

/// Class label of a distribution under a [`Partitioner`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassId {
    /// The undefined class; never produced from a distribution.
    Zero,
    Exact(Vec<u64>),
    Bins(Vec<u32>),
    Ranked { support: Vec<bool>, top: Vec<u32> },
}

/// Reserved quantization bin for probability 0.
pub const ZERO_BIN: u32 = u32::MAX;

/// An equivalence relation on the simplex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Partitioner {
    Exact,
    Quantization { kappa: u32 },
    TopK { r: usize },
}

impl Partitioner {
    pub fn label(&self, d: &Distribution) -> ClassId {
        match *self {
            Partitioner::Exact => ClassId::Exact(d.probs.iter().map(|p| p.to_bits()).collect()),
            Partitioner::Quantization { kappa } => {
                ClassId::Bins(d.probs.iter().map(|&p| quantize(p, kappa)).collect())
            }
            Partitioner::TopK { r } => {
                let support = d.probs[..d.num_symbols()].iter().map(|&p| p > 0.0).collect();
                let top = d
                    .ranking()
                    .into_iter()
                    .filter(|&i| d.probs[i] > 0.0)
                    .take(r)
                    .map(|i| i as u32)
                    .collect();
                ClassId::Ranked { support, top }
            }
        }
    }

    /// Label of a membership answer; `None` is the undefined class.
    pub fn class_of(&self, d: Option<&Distribution>) -> ClassId {
        d.map_or(ClassId::Zero, |d| self.label(d))
    }

    pub fn equivalent(&self, a: &Distribution, b: &Distribution) -> bool {
        self.label(a) == self.label(b)
    }
}

/// Bin of `p`: [`ZERO_BIN`] for 0, else `min(⌊p·κ⌋, κ−1)` computed exactly.
pub fn quantize(p: f64, kappa: u32) -> u32 {
    if p <= 0.0 {
        return ZERO_BIN;
    }
    let top = kappa.saturating_sub(1);
    if p >= 1.0 {
        return top;
    }
    let bits = p.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mantissa, exp) = if biased == 0 { (frac, -1074) } else { (frac | (1u64 << 52), biased - 1075) };
    // p = mantissa · 2^exp with exp < 0 because p < 1.
    let shift = (-exp) as u32;
    let product = mantissa as u128 * kappa as u128;
    let floor = if shift >= 128 { 0 } else { product >> shift };
    (floor.min(top as u128)) as u32
}

impl fmt::Display for Partitioner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Partitioner::Exact => write!(f, "exact"),
            Partitioner::Quantization { kappa } => write!(f, "quant:{kappa}"),
            Partitioner::TopK { r } => write!(f, "topk:{r}"),
        }
    }
}

impl FromStr for Partitioner {
    type Err = SimplexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SimplexError::InvalidParameter(format!("equivalence `{s}`"));
        match s.split_once(':') {
            None if s == "exact" => Ok(Partitioner::Exact),
            Some(("quant", k)) => match k.parse::<u32>() {
                Ok(kappa) if kappa >= 1 => Ok(Partitioner::Quantization { kappa }),
                _ => Err(bad()),
            },
            Some(("topk", r)) => match r.parse::<usize>() {
                Ok(r) if r >= 1 => Ok(Partitioner::TopK { r }),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

/// Support-shrinking transformation applied before renormalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingStrategy {
    Identity,
    TopR(usize),
    TopP(f64),
}

impl SamplingStrategy {
    pub fn validate(&self) -> Result<(), SimplexError> {
        match *self {
            SamplingStrategy::TopR(0) => Err(SimplexError::InvalidParameter("top_r needs r >= 1".into())),
            SamplingStrategy::TopP(p) if !(p > 0.0 && p <= 1.0) => {
                Err(SimplexError::InvalidParameter(format!("top_p needs p in (0,1], got {p}")))
            }
            _ => Ok(()),
        }
    }
}

pub fn apply_sampling(strategy: SamplingStrategy, d: &Distribution) -> Result<Distribution, SimplexError> {
    strategy.validate()?;
    let keep_slots: Vec<usize> = match strategy {
        SamplingStrategy::Identity => return normalize(&d.masked(&vec![true; d.slots()])),
        SamplingStrategy::TopR(r) => d.ranking().into_iter().take(r).collect(),
        SamplingStrategy::TopP(p) => {
            let mut kept = Vec::new();
            let mut cum = 0.0;
            for i in d.ranking() {
                kept.push(i);
                cum += d.probs[i];
                if cum >= p - 1e-12 {
                    break;
                }
            }
            kept
        }
    };
    let mut keep = vec![false; d.slots()];
    for i in keep_slots {
        keep[i] = true;
    }
    normalize(&d.masked(&keep))
}

impl fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplingStrategy::Identity => write!(f, "none"),
            SamplingStrategy::TopR(r) => write!(f, "topk:{r}"),
            SamplingStrategy::TopP(p) => write!(f, "topp:{p}"),
        }
    }
}

impl FromStr for SamplingStrategy {
    type Err = SimplexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SimplexError::InvalidParameter(format!("sampling strategy `{s}`"));
        let strategy = match s.split_once(':') {
            None if s == "none" => SamplingStrategy::Identity,
            Some(("topk", r)) => SamplingStrategy::TopR(r.parse().map_err(|_| bad())?),
            Some(("topp", p)) => SamplingStrategy::TopP(p.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        strategy.validate()?;
        Ok(strategy)
    }
}
