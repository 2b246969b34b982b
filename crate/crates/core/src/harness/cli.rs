//! Command line for learning, benchmarking, quotienting, sampling and comparing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use super::bench::{medians, medians_table, records_table, run_bench, BenchConfig, BenchSpec};
use super::format::{parse_guide, parse_pdfa, write_pdfa, FormatError};
use crate::automata::{congruence_partition, materialize, quotient, AutomataError, CongruenceMode, Pdfa};
use crate::compose::{compare_distributions, guided_sample, CompareOptions, ComposeError, Reference};
use crate::equivcheck::{hk_equiv, EquivError};
use crate::learner::{learn, LearnError, LearnOutcome, LearnerConfig};
use crate::lmbridge::{remote_token_model, symbol_model, LmError, SymbolMap};
use crate::randgen::{GenSpec, RandgenError};
use crate::simplex::{Partitioner, SamplingStrategy};
use crate::teacher::{ExactTeacher, FilterTeacher, PacParams, PacTeacher, TeacherError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: FormatError },
    #[error("{path}: {source}")]
    SymbolMap { path: PathBuf, source: LmError },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Automata(#[from] AutomataError),
    #[error(transparent)]
    Equiv(#[from] EquivError),
    #[error(transparent)]
    Model(#[from] LmError),
    #[error(transparent)]
    Randgen(#[from] RandgenError),
}

impl CliError {
    /// Stable name printed in the second column of the error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "IoError",
            CliError::Parse { .. } | CliError::SymbolMap { .. } => "ParseFailure",
            CliError::Compose(ComposeError::ParseFailure(_)) => "ParseFailure",
            CliError::Usage(_) => "UsageError",
            CliError::Learn(_) => "LearnError",
            CliError::Teacher(_) => "TeacherError",
            CliError::Compose(_) => "ComposeError",
            CliError::Automata(_) => "AutomataError",
            CliError::Equiv(_) => "EquivError",
            CliError::Model(_) => "ModelError",
            CliError::Randgen(_) => "RandgenError",
        }
    }

    /// 2 for unparsable input, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.kind() == "ParseFailure" || self.kind() == "UsageError" {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pdfa", version, about = "Learn minimal PDFA from language models with zero-probability outputs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a PDFA from a target file or a remote token model.
    Learn(LearnArgs),
    /// Sweep random targets over all three learner configurations.
    Bench(BenchArgs),
    /// Write the `≡_E` quotient of a PDFA and report block counts.
    Quotient(QuotientArgs),
    /// Draw guided samples from a PDFA.
    Sample(SampleArgs),
    /// Compare guided samples against an analytic distribution.
    Compare(CompareArgs),
    /// Generate a random fully defined PDFA.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Target PDFA file.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Guide automaton file composed with the target.
    #[arg(long)]
    pub guide: Option<PathBuf>,
    /// none | topk:R | topp:P
    #[arg(long, default_value = "none")]
    pub strategy: SamplingStrategy,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Base URL of a next-token distribution server.
    #[arg(long, conflicts_with = "target")]
    pub endpoint: Option<String>,
    /// Symbol map file for --endpoint.
    #[arg(long, requires = "endpoint")]
    pub symbol_map: Option<PathBuf>,
    /// exact | quant:K | topk:R
    #[arg(long, default_value = "exact")]
    pub equiv: Partitioner,
    #[arg(long, default_value = "omit-zero")]
    pub mode: BenchConfig,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Learned PDFA file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run record file; stdout after --out when absent.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// PAC walk length cap for --endpoint.
    #[arg(long, default_value_t = 50)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long)]
    pub max_queries: Option<u64>,
    #[arg(long, default_value_t = 10_000)]
    pub timeout_ms: u64,
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated state counts.
    #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub m: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.95")]
    pub theta: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub kappa: u32,
    /// Seeds 0..seeds.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, value_delimiter = ',', default_value = "omit-zero,qnt-filter,qnt-standard")]
    pub mode: Vec<BenchConfig>,
    /// Per-run records; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Median table; stdout when absent.
    #[arg(long)]
    pub medians: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QuotientArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "exact")]
    pub equiv: Partitioner,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the block-count table instead of the quotient.
    #[arg(long)]
    pub blocks: bool,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Reference PDFA for the analytic distribution; the sampled model when absent.
    #[arg(long)]
    pub against: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub max_len: usize,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bin decimal values `dot d1 d2 …` instead of lengths.
    #[arg(long)]
    pub values: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0.9)]
    pub theta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Io { path: p.to_path_buf(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_pdfa(path: &Path) -> Result<Pdfa, CliError> {
    parse_pdfa(&read(path)?).map_err(|source| CliError::Parse { path: path.to_path_buf(), source })
}

/// The target, materialized with the guide when one is given.
fn load_model(args: &ModelArgs) -> Result<Pdfa, CliError> {
    let path = args.target.as_deref().ok_or_else(|| CliError::Usage("--target is required".into()))?;
    let target = load_pdfa(path)?;
    match &args.guide {
        None => Ok(target),
        Some(g) => {
            let guide = parse_guide(&read(g)?).map_err(|source| CliError::Parse { path: g.clone(), source })?;
            Ok(materialize(&target, &guide, args.strategy)?)
        }
    }
}

pub const LEARN_HEADER: &str =
    "#source\tequiv\tmode\tseed\ttarget_states\tmq_count\teq_count\tce_count\tlearned_states\twall_ms\tverified";

fn learn_config(args: &LearnArgs) -> LearnerConfig {
    let mut config = LearnerConfig::new(args.mode.mode(), args.equiv);
    config.max_queries = args.max_queries;
    config
}

fn cmd_learn(args: &LearnArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let (source, target_states, outcome, verified): (String, String, LearnOutcome, String) = match &args.endpoint {
        Some(endpoint) => {
            let map_path = args.symbol_map.as_deref().ok_or_else(|| CliError::Usage("--endpoint needs --symbol-map".into()))?;
            let map = SymbolMap::parse(&read(map_path)?)
                .map_err(|source| CliError::SymbolMap { path: map_path.to_path_buf(), source })?;
            let remote = remote_token_model(endpoint, Duration::from_millis(args.timeout_ms), args.retries, map.bos(), map.eos());
            let lm = symbol_model(remote, map)?;
            let params = PacParams { epsilon: args.epsilon, delta: args.delta, max_len: args.max_len };
            let outcome = match &args.model.guide {
                None => learn(PacTeacher::new(lm, params, args.seed)?, learn_config(args))?,
                Some(g) => {
                    let guide = parse_guide(&read(g)?).map_err(|source| CliError::Parse { path: g.clone(), source })?;
                    let composed = crate::automata::compose(lm, guide, args.model.strategy)?;
                    learn(PacTeacher::new(composed, params, args.seed)?, learn_config(args))?
                }
            };
            (endpoint.clone(), "NA".into(), outcome, "NA".into())
        }
        None => {
            let target = load_model(&args.model)?;
            let config = learn_config(args);
            let outcome = match args.mode {
                BenchConfig::OmitZero | BenchConfig::QntFilter => learn(FilterTeacher::new(target.clone())?, config)?,
                BenchConfig::QntStandard => learn(ExactTeacher::new(target.clone())?, config)?,
            };
            let verified = hk_equiv(&outcome.hypothesis, &quotient(&target, &args.equiv), &args.equiv)?.is_none();
            let source = args.model.target.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
            (source, target.num_states().to_string(), outcome, verified.to_string())
        }
    };
    let wall_ms = start.elapsed().as_millis();
    log::info!("learned {} states in {} rounds", outcome.hypothesis.num_states(), outcome.rounds);
    emit(args.out.as_deref(), &write_pdfa(&outcome.hypothesis))?;
    let record = format!(
        "{LEARN_HEADER}\n{source}\t{}\t{}\t{}\t{target_states}\t{}\t{}\t{}\t{}\t{wall_ms}\t{verified}\n",
        args.equiv,
        args.mode,
        args.seed,
        outcome.stats.mq_count,
        outcome.stats.eq_count,
        outcome.stats.ce_count,
        outcome.hypothesis.num_states(),
    );
    match (&args.record, &args.out) {
        (Some(p), _) => emit(Some(p), &record),
        (None, Some(_)) => emit(None, &record),
        (None, None) => Ok(()),
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let spec = BenchSpec {
        ns: args.n.clone(),
        ms: args.m.clone(),
        thetas: args.theta.clone(),
        kappa: args.kappa,
        seeds: (0..args.seeds).collect(),
        configs: args.mode.clone(),
    };
    let records = run_bench(&spec);
    for r in records.iter().filter(|r| r.error.is_some()) {
        log::warn!("run n={} m={} seed={} {} failed", r.n, r.m, r.seed, r.config);
    }
    emit(args.out.as_deref(), &records_table(&records))?;
    emit(args.medians.as_deref(), &medians_table(&medians(&records)))
}

fn cmd_quotient(args: &QuotientArgs) -> Result<(), CliError> {
    let target = load_model(&args.model)?;
    if args.blocks {
        let mut table = String::from("#relation\tblocks\tzero\ttotal\n");
        for (name, mode) in [("defined", CongruenceMode::Defined), ("unconditional", CongruenceMode::Unconditional)] {
            let p = congruence_partition(&target, &args.equiv, mode);
            let _ = writeln!(table, "{name}\t{}\t{}\t{}", p.num_blocks(), p.has_zero(), p.total_blocks());
        }
        return emit(args.out.as_deref(), &table);
    }
    emit(args.out.as_deref(), &write_pdfa(&quotient(&target, &args.equiv)))
}

fn cmd_sample(args: &SampleArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let samples = guided_sample(&model, args.n, args.max_len, args.seed)?;
    let ab = model.alphabet();
    let mut out = String::from("#index\ttruncated\tlength\tstring\n");
    for (i, s) in samples.iter().enumerate() {
        let _ = writeln!(out, "{i}\t{}\t{}\t{}", s.truncated, s.symbols.len(), ab.format_word(&s.symbols));
    }
    emit(args.out.as_deref(), &out)
}

fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let reference = match &args.against {
        None => model.clone(),
        Some(p) => {
            let other = load_pdfa(p)?;
            match &args.model.guide {
                None => other,
                Some(g) => {
                    let guide = parse_guide(&read(g)?).map_err(|source| CliError::Parse { path: g.clone(), source })?;
                    materialize(&other, &guide, args.model.strategy)?
                }
            }
        }
    };
    let samples = guided_sample(&model, args.n, args.max_len, args.seed)?;
    let report = compare_distributions(
        model.alphabet(),
        &samples,
        Reference::Analytic { model: &reference, max_len: args.max_len },
        CompareOptions { bins: args.bins, values: args.values },
    )?;
    emit(args.out.as_deref(), &format!("{}{}", report.summary(), report.to_table()))
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let spec = GenSpec { n: args.n, m: args.m, theta: args.theta, kappa: 10, seed: args.seed };
    emit(args.out.as_deref(), &write_pdfa(&spec.generate()?))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Learn(a) => cmd_learn(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Quotient(a) => cmd_quotient(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Generate(a) => cmd_generate(a),
    }
}

/// Parses arguments, runs, and prints `error\t<kind>\t<message>` on failure.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("PDFA_LOG", "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error\t{}\t{}", e.kind(), e.to_string().replace(['\n', '\t'], " "));
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_equivalence_and_mode_flags() {
        let cli = Cli::try_parse_from(["pdfa", "learn", "--target", "x", "--equiv", "quant:10", "--mode", "qnt-filter"])
            .unwrap();
        let Command::Learn(a) = cli.command else { panic!() };
        assert_eq!(a.equiv, Partitioner::Quantization { kappa: 10 });
        assert_eq!(a.mode, BenchConfig::QntFilter);
        assert!(Cli::try_parse_from(["pdfa", "learn", "--equiv", "bogus"]).is_err());
        assert!(Cli::try_parse_from(["pdfa", "learn", "--target", "x", "--endpoint", "http://h"]).is_err());
    }

    #[test]
    fn parse_failures_exit_with_two() {
        let e = CliError::Parse {
            path: "x".into(),
            source: FormatError::Parse { line: 1, message: "bad".into() },
        };
        assert_eq!((e.kind(), e.exit_code()), ("ParseFailure", 2));
        assert_eq!(CliError::Compose(ComposeError::EmptySamples).exit_code(), 1);
    }
}
