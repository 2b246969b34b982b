//! Guided sampling and distribution-fidelity statistics.
//!
//! Digit strings read as decimal fractions: an optional leading `dot`
//! symbol followed by digit symbols `d₁…d_k` is the value `0.d₁…d_k`.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

use crate::automata::{bounded_termination, AutomataError, GuideAutomaton, LanguageModel, ModelError, Pdfa, StateId};
use crate::harness::format::{parse_guide, FormatError};
use crate::simplex::{Alphabet, Symbol, Word};

pub const DOT_NAMES: [&str; 2] = ["dot", "."];

/// Digits beyond this position do not affect bin assignment.
pub const BIN_DIGITS: usize = 30;

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("model is undefined at the empty string")]
    UndefinedStart,
    #[error("model is undefined at sampled prefix `{0:?}`")]
    UndefinedPrefix(Word),
    #[error("not a digit string: {0}")]
    ParseFailure(String),
    #[error("no completed samples to compare")]
    EmptySamples,
    #[error("bin count must be positive")]
    InvalidBins,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Automata(#[from] AutomataError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub symbols: Word,
    /// The walk drew a non-terminal symbol at the length cap.
    pub truncated: bool,
}

/// `n` ancestral samples; walk `i` draws from stream `i` of `seed`.
pub fn guided_sample<M: LanguageModel + Sync + ?Sized>(
    model: &M,
    n: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<Sample>, ComposeError> {
    if n > 0 && model.next(&[])?.is_none() {
        return Err(ComposeError::UndefinedStart);
    }
    let terminal = model.alphabet().terminal_slot();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut symbols = Vec::new();
            loop {
                let d = model.next(&symbols)?.ok_or_else(|| ComposeError::UndefinedPrefix(symbols.clone()))?;
                let slot = d.draw(&mut rng);
                if slot == terminal {
                    return Ok(Sample { symbols, truncated: false });
                }
                if symbols.len() == max_len {
                    return Ok(Sample { symbols, truncated: true });
                }
                symbols.push(Symbol(slot as u32));
            }
        })
        .collect()
}

/// Digit string of `w` as `(digits, all digit values)`.
fn digits_of(alphabet: &Alphabet, w: &[Symbol]) -> Result<Vec<u8>, ComposeError> {
    let body = match w.first() {
        Some(&s) if DOT_NAMES.contains(&alphabet.name(s)) => &w[1..],
        _ => w,
    };
    if body.is_empty() {
        return Err(ComposeError::ParseFailure(format!("`{}` has no digits", alphabet.format_word(w))));
    }
    body.iter()
        .map(|&s| digit(alphabet, s).ok_or_else(|| ComposeError::ParseFailure(alphabet.format_word(w))))
        .collect()
}

fn digit(alphabet: &Alphabet, s: Symbol) -> Option<u8> {
    match alphabet.name(s).as_bytes() {
        [c @ b'0'..=b'9'] => Some(c - b'0'),
        _ => None,
    }
}

/// `0.d₁…d_k` as a float.
pub fn parse_value(alphabet: &Alphabet, w: &[Symbol]) -> Result<f64, ComposeError> {
    let digits = digits_of(alphabet, w)?;
    let text: String = std::iter::once("0.".to_string()).chain(digits.iter().map(|d| d.to_string())).collect();
    Ok(text.parse().expect("decimal literal"))
}

/// `⌊x·bins⌋` of `x = N/10^k`, computed exactly.
fn bin_of(numer: u128, k: usize, bins: usize) -> usize {
    ((numer * bins as u128) / 10u128.pow(k as u32)) as usize
}

fn value_bin(digits: &[u8], bins: usize) -> usize {
    let k = digits.len().min(BIN_DIGITS);
    let numer = digits[..k].iter().fold(0u128, |n, &d| n * 10 + d as u128);
    bin_of(numer, k, bins).min(bins - 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub pvalue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    pub statistic: f64,
    pub pvalue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinRow {
    pub observed: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleReport {
    pub samples: usize,
    pub completed: usize,
    pub truncated: usize,
    /// Values of completed samples in value mode, else empty.
    pub values: Vec<f64>,
    pub lengths: Vec<usize>,
    /// χ² cells: value bins in value mode, else lengths with the last bin open.
    pub bins: Vec<BinRow>,
    pub chi2: ChiSquare,
    pub ks_values: Option<KsTest>,
    pub ks_lengths: KsTest,
}

impl SampleReport {
    /// Tab-separated `bin observed expected` with a `#` header.
    pub fn to_table(&self) -> String {
        let mut out = String::from("#bin\tobserved\texpected\n");
        for (i, row) in self.bins.iter().enumerate() {
            let _ = writeln!(out, "{i}\t{}\t{:.6}", row.observed, row.expected);
        }
        out
    }

    /// One-line statistics summary with a `#` header.
    pub fn summary(&self) -> String {
        let ks_values = self.ks_values.map_or("NA\tNA".to_string(), |k| format!("{:.6}\t{:.6}", k.statistic, k.pvalue));
        format!(
            "#samples\tcompleted\ttruncated\tchi2\tdof\tchi2_p\tks_values\tks_values_p\tks_lengths\tks_lengths_p\n\
             {}\t{}\t{}\t{:.6}\t{}\t{:.6}\t{ks_values}\t{:.6}\t{:.6}\n",
            self.samples,
            self.completed,
            self.truncated,
            self.chi2.statistic,
            self.chi2.dof,
            self.chi2.pvalue,
            self.ks_lengths.statistic,
            self.ks_lengths.pvalue
        )
    }
}

/// What the samples are compared against.
pub enum Reference<'a> {
    Samples(&'a [Sample]),
    /// Exact distribution of `model` conditioned on termination within `max_len`.
    Analytic { model: &'a Pdfa, max_len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompareOptions {
    pub bins: usize,
    /// Bin by decimal value instead of by length.
    pub values: bool,
}

/// Pearson χ² p-value `Q(dof/2, x/2)`.
pub fn chi2_pvalue(statistic: f64, dof: usize) -> f64 {
    if dof == 0 || statistic <= 0.0 {
        return 1.0;
    }
    if !statistic.is_finite() {
        return 0.0;
    }
    gamma_ur(dof as f64 / 2.0, statistic / 2.0).clamp(0.0, 1.0)
}

/// Asymptotic Kolmogorov tail with the small-sample correction for the
/// effective size `ne`.
pub fn ks_pvalue(d: f64, ne: f64) -> f64 {
    let sq = ne.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            return (2.0 * sum).clamp(0.0, 1.0);
        }
        sign = -sign;
    }
    1.0
}

/// Two-sample KS statistic over sorted samples.
fn ks_two_sample(a: &[f64], b: &[f64]) -> KsTest {
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    KsTest { statistic: d, pvalue: ks_pvalue(d, n * m / (n + m)) }
}

/// One-sample KS of integer observations against the pmf `p` on 0, 1, ….
fn ks_discrete(observed: &[usize], p: &[f64]) -> KsTest {
    let n = observed.len() as f64;
    let mut counts = vec![0usize; p.len().max(observed.iter().max().map_or(0, |m| m + 1))];
    for &x in observed {
        counts[x] += 1;
    }
    let (mut emp, mut cdf, mut d) = (0.0, 0.0, 0.0f64);
    for (l, &c) in counts.iter().enumerate() {
        emp += c as f64 / n;
        cdf += p.get(l).copied().unwrap_or(0.0);
        d = d.max((emp - cdf).abs());
    }
    KsTest { statistic: d, pvalue: ks_pvalue(d, n) }
}

/// χ² of observed counts against expected counts; empty cells are dropped.
fn chi2_goodness(observed: &[f64], expected: &[f64]) -> ChiSquare {
    let mut statistic = 0.0;
    let mut cells: usize = 0;
    for (&o, &e) in observed.iter().zip(expected) {
        if e > 0.0 {
            statistic += (o - e) * (o - e) / e;
            cells += 1;
        } else if o > 0.0 {
            statistic = f64::INFINITY;
            cells += 1;
        }
    }
    let dof = cells.saturating_sub(1);
    ChiSquare { statistic, dof, pvalue: chi2_pvalue(statistic, dof) }
}

/// 2×B contingency χ² of two histograms; the expected row is for `a`.
fn chi2_homogeneity(a: &[f64], b: &[f64]) -> (ChiSquare, Vec<f64>) {
    let (na, nb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let total = na + nb;
    let mut statistic = 0.0;
    let mut cells: usize = 0;
    let mut expected_a = Vec::with_capacity(a.len());
    for (&x, &y) in a.iter().zip(b) {
        let col = x + y;
        let (ea, eb) = (na * col / total, nb * col / total);
        expected_a.push(ea);
        if col == 0.0 {
            continue;
        }
        cells += 1;
        statistic += (x - ea) * (x - ea) / ea + (y - eb) * (y - eb) / eb;
    }
    let dof = cells.saturating_sub(1);
    (ChiSquare { statistic, dof, pvalue: chi2_pvalue(statistic, dof) }, expected_a)
}

struct Summary {
    values: Vec<f64>,
    lengths: Vec<usize>,
    histogram: Vec<f64>,
    completed: usize,
    truncated: usize,
}

fn summarize(alphabet: &Alphabet, samples: &[Sample], options: CompareOptions) -> Result<Summary, ComposeError> {
    let mut s = Summary { values: Vec::new(), lengths: Vec::new(), histogram: vec![0.0; options.bins], completed: 0, truncated: 0 };
    for sample in samples {
        if sample.truncated {
            s.truncated += 1;
            continue;
        }
        s.completed += 1;
        s.lengths.push(sample.symbols.len());
        let bin = if options.values {
            let digits = digits_of(alphabet, &sample.symbols)?;
            s.values.push(parse_value(alphabet, &sample.symbols)?);
            value_bin(&digits, options.bins)
        } else {
            sample.symbols.len().min(options.bins - 1)
        };
        s.histogram[bin] += 1.0;
    }
    Ok(s)
}

/// Length pmf of completed strings up to `max_len`, unnormalized.
fn length_masses(model: &Pdfa, max_len: usize) -> Vec<f64> {
    let mut front = vec![0.0; model.num_states()];
    front[model.initial()] = 1.0;
    let mut out = Vec::with_capacity(max_len + 1);
    for len in 0..=max_len {
        out.push((0..model.num_states()).map(|q| front[q] * model.dist(q).terminal()).sum());
        if len == max_len {
            break;
        }
        let mut next = vec![0.0; model.num_states()];
        for (q, &mass) in front.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let d = model.dist(q);
            for s in d.support() {
                next[model.next_state(q, s).expect("support transition")] += mass * d.get(s);
            }
        }
        front = next;
    }
    out
}

struct ValueWalk<'a> {
    model: &'a Pdfa,
    max_len: usize,
    bins: usize,
    within: Vec<Vec<f64>>,
    mass: Vec<f64>,
}

impl ValueWalk<'_> {
    /// Adds the completed mass below the prefix at `q` with digits `N/10^k`.
    fn visit(&mut self, q: StateId, len: usize, k: usize, numer: u128, p: f64, dotted: bool) -> Result<(), ComposeError> {
        if p == 0.0 {
            return Ok(());
        }
        let remaining = self.max_len - len;
        if k > 0 {
            let lo = bin_of(numer, k, self.bins).min(self.bins - 1);
            let hi = (bin_of(numer + 1, k, self.bins) - usize::from(((numer + 1) * self.bins as u128).is_multiple_of(10u128.pow(k as u32))))
                .min(self.bins - 1);
            if lo == hi || k == BIN_DIGITS {
                self.mass[lo] += p * self.within[remaining][q];
                return Ok(());
            }
        }
        let d = self.model.dist(q);
        let alphabet = self.model.alphabet();
        if d.terminal() > 0.0 {
            if k == 0 {
                return Err(ComposeError::ParseFailure("a string without digits has positive probability".into()));
            }
            self.mass[bin_of(numer, k, self.bins).min(self.bins - 1)] += p * d.terminal();
        }
        if remaining == 0 {
            return Ok(());
        }
        for s in d.support() {
            let t = self.model.next_state(q, s).expect("support transition");
            let ps = p * d.get(s);
            if let Some(x) = digit(alphabet, s) {
                self.visit(t, len + 1, k + 1, numer * 10 + x as u128, ps, true)?;
            } else if len == 0 && !dotted && DOT_NAMES.contains(&alphabet.name(s)) {
                self.visit(t, len + 1, k, numer, ps, true)?;
            } else {
                return Err(ComposeError::ParseFailure(format!("symbol `{}` inside a digit string", alphabet.name(s))));
            }
        }
        Ok(())
    }
}

/// Bin masses of strings completed within `max_len`, unnormalized.
fn value_masses(model: &Pdfa, max_len: usize, bins: usize) -> Result<Vec<f64>, ComposeError> {
    let mut walk = ValueWalk { model, max_len, bins, within: bounded_termination(model, max_len), mass: vec![0.0; bins] };
    walk.visit(model.initial(), 0, 0, 0, 1.0, false)?;
    Ok(walk.mass)
}

pub fn compare_distributions(
    alphabet: &Alphabet,
    samples: &[Sample],
    reference: Reference<'_>,
    options: CompareOptions,
) -> Result<SampleReport, ComposeError> {
    if options.bins == 0 {
        return Err(ComposeError::InvalidBins);
    }
    let ours = summarize(alphabet, samples, options)?;
    if ours.completed == 0 {
        return Err(ComposeError::EmptySamples);
    }
    let (chi2, expected, ks_values, ks_lengths) = match reference {
        Reference::Samples(other) => {
            let theirs = summarize(alphabet, other, options)?;
            if theirs.completed == 0 {
                return Err(ComposeError::EmptySamples);
            }
            let (chi2, expected) = chi2_homogeneity(&ours.histogram, &theirs.histogram);
            let ks_values = options.values.then(|| ks_two_sample(&ours.values, &theirs.values));
            let as_f64 = |v: &[usize]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
            let ks_lengths = ks_two_sample(&as_f64(&ours.lengths), &as_f64(&theirs.lengths));
            (chi2, expected, ks_values, ks_lengths)
        }
        Reference::Analytic { model, max_len } => {
            if model.alphabet() != alphabet {
                return Err(AutomataError::AlphabetMismatch.into());
            }
            let lengths = length_masses(model, max_len);
            let total: f64 = lengths.iter().sum();
            if total <= 0.0 {
                return Err(ComposeError::EmptySamples);
            }
            let cells = if options.values {
                value_masses(model, max_len, options.bins)?
            } else {
                let mut cells = vec![0.0; options.bins];
                for (l, &m) in lengths.iter().enumerate() {
                    cells[l.min(options.bins - 1)] += m;
                }
                cells
            };
            let n = ours.completed as f64;
            let expected: Vec<f64> = cells.iter().map(|m| n * m / total).collect();
            let pmf: Vec<f64> = lengths.iter().map(|m| m / total).collect();
            (chi2_goodness(&ours.histogram, &expected), expected, None, ks_discrete(&ours.lengths, &pmf))
        }
    };
    let bins = ours.histogram.iter().zip(&expected).map(|(&observed, &expected)| BinRow { observed, expected }).collect();
    Ok(SampleReport {
        samples: samples.len(),
        completed: ours.completed,
        truncated: ours.truncated,
        values: ours.values,
        lengths: ours.lengths,
        bins,
        chi2,
        ks_values,
        ks_lengths,
    })
}

/// Parses a guide in the harness text format.
pub fn guide_from_spec(text: &str) -> Result<GuideAutomaton, ComposeError> {
    Ok(parse_guide(text)?)
}
