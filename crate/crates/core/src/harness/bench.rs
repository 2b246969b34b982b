//! Benchmark sweeps over random targets for the three learner configurations.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::automata::{quotient, Pdfa};
use crate::equivcheck::hk_equiv;
use crate::learner::{learn, LearnError, LearnOutcome, LearnerConfig, LearnerMode};
use crate::randgen::GenSpec;
use crate::simplex::Partitioner;
use crate::teacher::{ExactTeacher, FilterTeacher};

/// Learner and teacher pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BenchConfig {
    /// Omit-Zero learner with the filtering teacher.
    OmitZero,
    /// QNT learner with the filtering teacher.
    QntFilter,
    /// QNT learner with the exact teacher.
    QntStandard,
}

impl BenchConfig {
    pub const ALL: [BenchConfig; 3] = [BenchConfig::OmitZero, BenchConfig::QntFilter, BenchConfig::QntStandard];

    pub fn mode(self) -> LearnerMode {
        match self {
            BenchConfig::OmitZero => LearnerMode::OmitZero,
            BenchConfig::QntFilter | BenchConfig::QntStandard => LearnerMode::Qnt,
        }
    }
}

impl fmt::Display for BenchConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchConfig::OmitZero => "omit-zero",
            BenchConfig::QntFilter => "qnt-filter",
            BenchConfig::QntStandard => "qnt-standard",
        })
    }
}

impl FromStr for BenchConfig {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "omit-zero" => Ok(BenchConfig::OmitZero),
            "qnt-filter" => Ok(BenchConfig::QntFilter),
            "qnt-standard" => Ok(BenchConfig::QntStandard),
            other => Err(format!("unknown mode `{other}` (omit-zero|qnt-filter|qnt-standard)")),
        }
    }
}

/// Runs one configuration against a fully defined target.
pub fn run_config(target: &Pdfa, e: Partitioner, config: BenchConfig, checked: bool) -> Result<LearnOutcome, LearnError> {
    let mut learner_config = LearnerConfig::new(config.mode(), e);
    learner_config.check_invariants = checked;
    match config {
        BenchConfig::OmitZero | BenchConfig::QntFilter => learn(FilterTeacher::new(target.clone())?, learner_config),
        BenchConfig::QntStandard => learn(ExactTeacher::new(target.clone())?, learner_config),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub ns: Vec<usize>,
    pub ms: Vec<usize>,
    pub thetas: Vec<f64>,
    pub kappa: u32,
    pub seeds: Vec<u64>,
    pub configs: Vec<BenchConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub n: usize,
    pub m: usize,
    pub theta: f64,
    pub kappa: u32,
    pub config: BenchConfig,
    pub seed: u64,
    pub target_states: usize,
    pub mq_count: u64,
    pub eq_count: u64,
    pub ce_count: u64,
    pub learned_states: usize,
    pub wall_ms: u128,
    /// `hk_equiv(learned, quotient(target)) = ⊥`.
    pub verified: bool,
    pub error: Option<String>,
}

fn run_one(gen: GenSpec, config: BenchConfig) -> BenchRecord {
    let mut record = BenchRecord {
        n: gen.n,
        m: gen.m,
        theta: gen.theta,
        kappa: gen.kappa,
        config,
        seed: gen.seed,
        target_states: 0,
        mq_count: 0,
        eq_count: 0,
        ce_count: 0,
        learned_states: 0,
        wall_ms: 0,
        verified: false,
        error: None,
    };
    let target = match gen.generate() {
        Ok(t) => t,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    record.target_states = target.num_states();
    let e = gen.partitioner();
    let start = Instant::now();
    let outcome = run_config(&target, e, config, false);
    record.wall_ms = start.elapsed().as_millis();
    match outcome {
        Ok(out) => {
            record.mq_count = out.stats.mq_count;
            record.eq_count = out.stats.eq_count;
            record.ce_count = out.stats.ce_count;
            record.learned_states = out.hypothesis.num_states();
            match hk_equiv(&out.hypothesis, &quotient(&target, &e), &e) {
                Ok(ce) => record.verified = ce.is_none(),
                Err(err) => record.error = Some(err.to_string()),
            }
        }
        Err(err) => record.error = Some(err.to_string()),
    }
    record
}

/// Every (n, m, θ, seed, configuration) run, in sweep order.
pub fn run_bench(spec: &BenchSpec) -> Vec<BenchRecord> {
    let mut jobs = Vec::new();
    for &n in &spec.ns {
        for &m in &spec.ms {
            for &theta in &spec.thetas {
                for &seed in &spec.seeds {
                    for &config in &spec.configs {
                        jobs.push((GenSpec { n, m, theta, kappa: spec.kappa, seed }, config));
                    }
                }
            }
        }
    }
    jobs.into_par_iter().map(|(gen, config)| run_one(gen, config)).collect()
}

pub const RECORD_HEADER: &str =
    "#n\tm\ttheta\tkappa\tmode\tseed\ttarget_states\tmq_count\teq_count\tce_count\tlearned_states\twall_ms\tverified\terror";

pub fn record_row(r: &BenchRecord) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        r.n,
        r.m,
        r.theta,
        r.kappa,
        r.config,
        r.seed,
        r.target_states,
        r.mq_count,
        r.eq_count,
        r.ce_count,
        r.learned_states,
        r.wall_ms,
        r.verified,
        r.error.as_deref().unwrap_or("-")
    )
}

pub fn records_table(records: &[BenchRecord]) -> String {
    let mut out = format!("{RECORD_HEADER}\n");
    for r in records {
        let _ = writeln!(out, "{}", record_row(r));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianRow {
    pub n: usize,
    pub m: usize,
    pub theta: f64,
    pub config: BenchConfig,
    pub runs: usize,
    pub median_mq: f64,
    pub median_wall_ms: f64,
    pub verified: usize,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        (xs[k / 2 - 1] + xs[k / 2]) / 2.0
    }
}

/// Medians over seeds of error-free runs, grouped by (n, m, θ, configuration).
pub fn medians(records: &[BenchRecord]) -> Vec<MedianRow> {
    let mut keys: Vec<(usize, usize, u64, BenchConfig)> = Vec::new();
    for r in records {
        let key = (r.n, r.m, r.theta.to_bits(), r.config);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(n, m, theta, config)| {
            let group: Vec<&BenchRecord> = records
                .iter()
                .filter(|r| r.n == n && r.m == m && r.theta.to_bits() == theta && r.config == config && r.error.is_none())
                .collect();
            MedianRow {
                n,
                m,
                theta: f64::from_bits(theta),
                config,
                runs: group.len(),
                median_mq: median(group.iter().map(|r| r.mq_count as f64).collect()),
                median_wall_ms: median(group.iter().map(|r| r.wall_ms as f64).collect()),
                verified: group.iter().filter(|r| r.verified).count(),
            }
        })
        .collect()
}

pub fn medians_table(rows: &[MedianRow]) -> String {
    let mut out = String::from("#n\tm\ttheta\tmode\truns\tmedian_mq\tmedian_wall_ms\tverified\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.n, r.m, r.theta, r.config, r.runs, r.median_mq, r.median_wall_ms, r.verified
        );
    }
    out
}
