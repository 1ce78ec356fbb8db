//! Command-line front end and machine-readable reports.
//!
//! Every command validates its configuration before computing anything,
//! runs inside a worker pool of the requested size and produces a [`Report`]
//! whose bytes depend only on the configuration and the crate version.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linksim::{
    db_to_linear, interference_leakage, run_link, LinkSetup, DEFAULT_LINK_BOUND, DEFAULT_REALIZATIONS,
};
use crate::matrix::{RankPolicy, DEFAULT_FLOAT_TAU};
use crate::params::{rational_string, SchemeParams};
use crate::precoding::{
    build_all_bases, check_alignment, extract_generators, BasisOptions, DEFAULT_MEMORY_BUDGET,
};
use crate::ring::{ComplexField, FloatRing, PrimeField, RealField, ScalarRing, MERSENNE_61};
use crate::sia::{cramer_check, process_all, sia_oracle, sia_run, stack_decoder, ORACLE_MAX_ORDER};
use crate::verifier::{assemble_full_matrix, check_rank_conditions, dof_table};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const MEMORY_BUDGET_ENV: &str = "COOPIA_MEMORY_BUDGET";

/// Relative deviation of the fitted slope from its target that still passes.
pub const SLOPE_TOLERANCE: f64 = 0.1;

/// Largest relative interference leakage after projection that passes.
pub const LEAKAGE_TOLERANCE: f64 = 1e-10;

/// Floats in reports: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RingChoice {
    Primefield,
    Real,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyChoice {
    Exact,
    Float,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "coopia", version, about = "Interference alignment with receiver cooperation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads [default: available parallelism]
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write the report here instead of stdout
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Include wall-clock timings (the report is then no longer reproducible)
    #[arg(long, global = true)]
    timings: bool,
}

#[derive(Debug, Args)]
struct SchemeArgs {
    /// Number of users
    #[arg(long = "K", value_name = "K")]
    users: usize,
    /// Cooperation order
    #[arg(long = "M", value_name = "M")]
    order: usize,
    /// Extension index
    #[arg(long, default_value_t = 1)]
    n: u64,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long, value_enum, default_value_t = RingChoice::Primefield)]
    ring: RingChoice,
    /// Field modulus for the prime-field ring
    #[arg(long, default_value_t = MERSENNE_61)]
    prime: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent channel realizations, seeded `seed, seed+1, …`
    #[arg(long, default_value_t = 1)]
    trials: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extension lengths, stream counts and DoF of one configuration
    Params {
        #[command(flatten)]
        scheme: SchemeArgs,
    },
    /// Canonical form and Cramer oracle of the SIA output
    VerifySia {
        #[command(flatten)]
        scheme: SchemeArgs,
        #[command(flatten)]
        sample: SampleArgs,
        /// Extension length to run SIA at [default: λ_n]
        #[arg(long)]
        lambda: Option<usize>,
    },
    /// Alignment conditions of the precoding bases as column identities
    VerifyAlignment {
        #[command(flatten)]
        scheme: SchemeArgs,
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long, env = MEMORY_BUDGET_ENV, default_value_t = DEFAULT_MEMORY_BUDGET)]
        memory_budget: u64,
        /// Leave the generator of this slot out of the stream's columns
        #[arg(long)]
        ablate: Option<usize>,
        /// Stream the ablation applies to
        #[arg(long, default_value_t = 0)]
        ablate_stream: usize,
    },
    /// Rank of the decodability matrices
    VerifyRank {
        #[command(flatten)]
        scheme: SchemeArgs,
        #[command(flatten)]
        sample: SampleArgs,
        /// [default: exact over the prime field, float otherwise]
        #[arg(long, value_enum)]
        policy: Option<PolicyChoice>,
        #[arg(long, default_value_t = DEFAULT_FLOAT_TAU)]
        tau: f64,
        #[arg(long, env = MEMORY_BUDGET_ENV, default_value_t = DEFAULT_MEMORY_BUDGET)]
        memory_budget: u64,
        /// Replace every channel by the identity (degenerate control)
        #[arg(long)]
        identity_channels: bool,
        /// Also check the block matrix over all subspaces
        #[arg(long)]
        full_matrix: bool,
        /// Check one decoder only
        #[arg(long)]
        decoder: Option<usize>,
    },
    /// Exact DoF over a range of extension indices
    DofTable {
        #[arg(long = "K", value_name = "K")]
        users: usize,
        #[arg(long = "M", value_name = "M")]
        order: usize,
        #[arg(long, default_value_t = 1)]
        n_min: u64,
        #[arg(long, default_value_t = 10)]
        n_max: u64,
    },
    /// Link-level simulation and DoF slope estimate
    Simulate {
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long, value_enum, default_value_t = RingChoice::Complex)]
        ring: RingChoice,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// SNR points in dB, comma separated
        #[arg(long, value_delimiter = ',', default_values_t = crate::linksim::DEFAULT_SNR_DB)]
        snr_db: Vec<f64>,
        /// Noisy frames per SNR point for the ZF error check
        #[arg(long, default_value_t = DEFAULT_REALIZATIONS)]
        realizations: usize,
        /// Largest λ_n simulated
        #[arg(long, default_value_t = DEFAULT_LINK_BOUND)]
        link_bound: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Params,
    VerifySia,
    VerifyAlignment,
    VerifyRank,
    DofTable,
    Simulate,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Params => "params",
            CommandKind::VerifySia => "verify-sia",
            CommandKind::VerifyAlignment => "verify-alignment",
            CommandKind::VerifyRank => "verify-rank",
            CommandKind::DofTable => "dof-table",
            CommandKind::Simulate => "simulate",
        }
    }
}

/// A validated invocation. Only the fields the command uses are set.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub users: usize,
    pub order: usize,
    pub n: u64,
    pub ring: RingChoice,
    pub prime: u64,
    pub seed: u64,
    pub trials: usize,
    pub policy: Option<RankPolicy>,
    pub memory_budget: u64,
    pub lambda: Option<usize>,
    pub ablate: Option<(usize, usize)>,
    pub identity_channels: bool,
    pub full_matrix: bool,
    pub decoder: Option<usize>,
    pub n_min: u64,
    pub n_max: u64,
    pub snr_db: Vec<f64>,
    pub realizations: usize,
    pub link_bound: usize,
    pub format: Format,
    /// Not part of the report.
    pub output: Option<PathBuf>,
    /// Not part of the report.
    pub workers: usize,
    /// Not part of the report.
    pub timings: bool,
}

impl RunConfig {
    fn base(command: CommandKind, users: usize, order: usize) -> Self {
        RunConfig {
            command,
            users,
            order,
            n: 1,
            ring: RingChoice::Primefield,
            prime: MERSENNE_61,
            seed: 0,
            trials: 1,
            policy: None,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            lambda: None,
            ablate: None,
            identity_channels: false,
            full_matrix: false,
            decoder: None,
            n_min: 1,
            n_max: 1,
            snr_db: Vec::new(),
            realizations: 0,
            link_bound: DEFAULT_LINK_BOUND,
            format: Format::Json,
            output: None,
            workers: default_workers(),
            timings: false,
        }
    }

    pub fn params(&self) -> Result<SchemeParams> {
        SchemeParams::new(self.users, self.order, self.n)
    }

    fn ring_name(&self) -> String {
        match self.ring {
            RingChoice::Primefield => format!("prime-field({})", self.prime),
            RingChoice::Real => RealField.kind().to_string(),
            RingChoice::Complex => ComplexField.kind().to_string(),
        }
    }

    /// The configuration as echoed in reports.
    pub fn to_json(&self) -> Value {
        let mut c = serde_json::Map::new();
        c.insert("command".into(), json!(self.command.name()));
        c.insert("K".into(), json!(self.users));
        c.insert("M".into(), json!(self.order));
        let sampled = matches!(
            self.command,
            CommandKind::VerifySia | CommandKind::VerifyAlignment | CommandKind::VerifyRank | CommandKind::Simulate
        );
        if self.command != CommandKind::DofTable {
            c.insert("n".into(), json!(self.n));
        }
        if sampled {
            c.insert("ring".into(), json!(self.ring_name()));
            c.insert("seed".into(), json!(self.seed));
        }
        match self.command {
            CommandKind::Params => {}
            CommandKind::VerifySia => {
                c.insert("trials".into(), json!(self.trials));
                c.insert("lambda".into(), json!(self.lambda));
            }
            CommandKind::VerifyAlignment => {
                c.insert("trials".into(), json!(self.trials));
                c.insert("memory_budget".into(), json!(self.memory_budget));
                c.insert(
                    "ablate".into(),
                    match self.ablate {
                        Some((stream, slot)) => json!({ "stream": stream, "slot": slot }),
                        None => Value::Null,
                    },
                );
            }
            CommandKind::VerifyRank => {
                let policy = self.policy.expect("validated");
                c.insert("trials".into(), json!(self.trials));
                c.insert("policy".into(), json!(policy.name()));
                if let RankPolicy::Float { tau } = policy {
                    c.insert("tau".into(), json!(fmt_f64(tau)));
                }
                c.insert("memory_budget".into(), json!(self.memory_budget));
                c.insert("identity_channels".into(), json!(self.identity_channels));
                c.insert("full_matrix".into(), json!(self.full_matrix));
                c.insert("decoder".into(), json!(self.decoder));
            }
            CommandKind::DofTable => {
                c.insert("n_min".into(), json!(self.n_min));
                c.insert("n_max".into(), json!(self.n_max));
            }
            CommandKind::Simulate => {
                c.insert(
                    "snr_db".into(),
                    json!(self.snr_db.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>()),
                );
                c.insert("realizations".into(), json!(self.realizations));
                c.insert("link_bound".into(), json!(self.link_bound));
            }
        }
        c.insert(
            "format".into(),
            json!(match self.format {
                Format::Json => "json",
                Format::Csv => "csv",
            }),
        );
        Value::Object(c)
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Why an argument vector did not yield a configuration.
#[derive(Debug)]
pub enum ConfigError {
    /// Usage errors, `--help` and `--version`, rendered by clap.
    Usage(clap::Error),
    Invalid(Error),
}

impl ConfigError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Usage(e) => e.exit_code(),
            ConfigError::Invalid(e) => e.exit_code(),
        }
    }
}

impl From<Error> for ConfigError {
    fn from(e: Error) -> Self {
        ConfigError::Invalid(e)
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(Error::InvalidParams(msg.into()))
}

fn apply_sample(cfg: &mut RunConfig, s: SampleArgs) -> std::result::Result<(), ConfigError> {
    if s.trials == 0 {
        return Err(invalid("--trials must be at least 1"));
    }
    if s.ring == RingChoice::Primefield {
        PrimeField::new(s.prime)?;
    }
    cfg.ring = s.ring;
    cfg.prime = s.prime;
    cfg.seed = s.seed;
    cfg.trials = s.trials;
    Ok(())
}

/// Parses and validates an argument vector (program name first).
pub fn parse_config<I, T>(args: I) -> std::result::Result<RunConfig, ConfigError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(ConfigError::Usage)?;
    let scheme_config = |kind: CommandKind, s: &SchemeArgs| -> std::result::Result<RunConfig, ConfigError> {
        SchemeParams::new(s.users, s.order, s.n)?;
        let mut c = RunConfig::base(kind, s.users, s.order);
        c.n = s.n;
        Ok(c)
    };
    let mut cfg = match cli.command {
        Command::Params { scheme } => scheme_config(CommandKind::Params, &scheme)?,
        Command::VerifySia { scheme, sample, lambda } => {
            let mut c = scheme_config(CommandKind::VerifySia, &scheme)?;
            apply_sample(&mut c, sample)?;
            if lambda == Some(0) {
                return Err(invalid("--lambda must be positive"));
            }
            c.lambda = lambda;
            c
        }
        Command::VerifyAlignment {
            scheme,
            sample,
            memory_budget,
            ablate,
            ablate_stream,
        } => {
            let mut c = scheme_config(CommandKind::VerifyAlignment, &scheme)?;
            apply_sample(&mut c, sample)?;
            c.memory_budget = memory_budget;
            if let Some(slot) = ablate {
                let slots = c.users * (2 * c.order - 1);
                if slot >= slots || ablate_stream >= c.order {
                    return Err(invalid(format!(
                        "ablation needs slot < {slots} and stream < {}, got slot {slot}, stream {ablate_stream}",
                        c.order
                    )));
                }
                c.ablate = Some((ablate_stream, slot));
            }
            c
        }
        Command::VerifyRank {
            scheme,
            sample,
            policy,
            tau,
            memory_budget,
            identity_channels,
            full_matrix,
            decoder,
        } => {
            let mut c = scheme_config(CommandKind::VerifyRank, &scheme)?;
            apply_sample(&mut c, sample)?;
            let exact_ring = c.ring == RingChoice::Primefield;
            let policy = policy.unwrap_or(if exact_ring { PolicyChoice::Exact } else { PolicyChoice::Float });
            c.policy = Some(match (policy, exact_ring) {
                (PolicyChoice::Exact, true) => RankPolicy::Exact,
                (PolicyChoice::Float, false) => {
                    if !(tau.is_finite() && tau > 0.0) {
                        return Err(invalid(format!("--tau must be positive, got {tau}")));
                    }
                    RankPolicy::Float { tau }
                }
                _ => {
                    return Err(ConfigError::Invalid(Error::PolicyMismatch {
                        policy: format!("{policy:?}").to_lowercase(),
                        ring: c.ring_name(),
                    }))
                }
            });
            if let Some(d) = decoder {
                if d >= c.users {
                    return Err(ConfigError::Invalid(Error::IndexOutOfRange {
                        index: d,
                        bound: c.users,
                    }));
                }
            }
            c.memory_budget = memory_budget;
            c.identity_channels = identity_channels;
            c.full_matrix = full_matrix;
            c.decoder = decoder;
            c
        }
        Command::DofTable {
            users,
            order,
            n_min,
            n_max,
        } => {
            SchemeParams::new(users, order, 1)?;
            if n_min < 1 || n_min > n_max {
                return Err(invalid(format!("need 1 <= n-min <= n-max, got {n_min}..{n_max}")));
            }
            let mut c = RunConfig::base(CommandKind::DofTable, users, order);
            c.n_min = n_min;
            c.n_max = n_max;
            c
        }
        Command::Simulate {
            scheme,
            ring,
            seed,
            snr_db,
            realizations,
            link_bound,
        } => {
            let mut c = scheme_config(CommandKind::Simulate, &scheme)?;
            if ring == RingChoice::Primefield {
                return Err(invalid("link simulation needs a float ring (real or complex)"));
            }
            if let Some(bad) = snr_db.iter().find(|x| !x.is_finite()) {
                return Err(invalid(format!("SNR values must be finite, got {bad}")));
            }
            c.ring = ring;
            c.seed = seed;
            c.snr_db = snr_db;
            c.realizations = realizations;
            c.link_bound = link_bound;
            c
        }
    };
    if cli.format == Format::Csv && cfg.command != CommandKind::DofTable {
        return Err(invalid("CSV output is only available for dof-table"));
    }
    if cli.workers == Some(0) {
        return Err(invalid("--workers must be at least 1"));
    }
    cfg.format = cli.format;
    cfg.output = cli.output;
    cfg.workers = cli.workers.unwrap_or_else(default_workers);
    cfg.timings = cli.timings;
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// Not applicable to this configuration; does not fail the run.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub details: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Value>,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, details: Value, counterexample: Option<Value>) -> Self {
        Check {
            name: name.into(),
            status: if passed { Status::Pass } else { Status::Fail },
            details,
            counterexample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub config: Value,
    pub version: String,
    pub checks: Vec<Check>,
    /// Seconds per phase, only with `--timings`.
    pub timings: Option<BTreeMap<String, String>>,
    #[serde(skip)]
    pub csv: Option<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// The report as written: CSV for `dof-table --format csv`, pretty JSON
    /// otherwise.
    pub fn render(&self) -> String {
        match &self.csv {
            Some(csv) => csv.clone(),
            None => {
                let mut s = serde_json::to_string_pretty(self).expect("report serializes");
                s.push('\n');
                s
            }
        }
    }
}

#[derive(Default)]
struct Timer {
    phases: BTreeMap<String, String>,
}

impl Timer {
    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.phases.insert(phase.into(), fmt_f64(start.elapsed().as_secs_f64()));
        out
    }
}

fn trial_seed(cfg: &RunConfig, t: usize) -> u64 {
    cfg.seed.wrapping_add(t as u64)
}

fn run_params(cfg: &RunConfig) -> Result<Vec<Check>> {
    let p = cfg.params()?;
    let details = json!({
        "l": p.l(),
        "mu_n": p.mu_n().to_string(),
        "mu_n1": p.mu_n1().to_string(),
        "lambda_n": p.lambda_n().to_string(),
        "homogenization_degree": p.homogenization_degree(),
        "dof_total": rational_string(&p.total_dof()),
        "dof_total_decimal": fmt_f64(crate::params::rational_to_f64(&p.total_dof())),
        "dof_limit": rational_string(&p.dof_limit()),
        "materializable": p.is_materializable(),
    });
    Ok(vec![Check::new("scheme-parameters", true, details, None)])
}

struct SiaTrial {
    seed: u64,
    failures: Vec<(usize, String)>,
    offdiag: f64,
    positions_checked: usize,
    positions_skipped: usize,
    violations: Vec<usize>,
    worst_relative: f64,
}

fn run_sia<R: ScalarRing>(cfg: &RunConfig, ring: R) -> Result<Vec<Check>> {
    let p = cfg.params()?;
    let dim = match cfg.lambda {
        Some(l) => l,
        None => p.require_lambda()?,
    };
    let with_oracle = cfg.order <= ORACLE_MAX_ORDER;
    let trials: Vec<SiaTrial> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<SiaTrial> {
            let seed = trial_seed(cfg, t);
            let ch = ChannelSet::sample_with_dim(cfg.users, dim, ring.clone(), seed)?;
            let mut out = SiaTrial {
                seed,
                failures: Vec::new(),
                offdiag: 0.0,
                positions_checked: 0,
                positions_skipped: 0,
                violations: Vec::new(),
                worst_relative: 0.0,
            };
            for k in 0..cfg.users {
                let state = stack_decoder(&ch, k)?;
                let processed = match sia_run(&state, &ring) {
                    Ok(pr) => pr,
                    Err(e @ (Error::InvariantViolation(_) | Error::Degenerate(_))) => {
                        out.failures.push((k, e.to_string()));
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                out.offdiag = out.offdiag.max(processed.offdiag_residual);
                if with_oracle {
                    let oracle = sia_oracle(&state, &ring)?;
                    let check = cramer_check(&processed, &oracle, &ring);
                    out.positions_checked += check.positions_checked;
                    out.positions_skipped += check.positions_skipped;
                    out.worst_relative = out.worst_relative.max(check.worst_relative);
                    if !check.passed() {
                        out.violations.push(k);
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let failing = trials.iter().find(|t| !t.failures.is_empty());
    let canonical = Check::new(
        "sia-canonical-form",
        failing.is_none(),
        json!({
            "trials": cfg.trials,
            "extension_length": dim,
            "steps": cfg.order - 1,
            "decoders_failed": trials.iter().map(|t| t.failures.len()).sum::<usize>(),
            "max_offdiag_residual": fmt_f64(trials.iter().map(|t| t.offdiag).fold(0.0, f64::max)),
        }),
        failing.map(|t| json!({ "seed": t.seed, "decoder": t.failures[0].0, "error": t.failures[0].1 })),
    );
    let cramer = if with_oracle {
        let bad = trials.iter().find(|t| !t.violations.is_empty());
        Check::new(
            "sia-cramer-oracle",
            bad.is_none() && failing.is_none(),
            json!({
                "positions_checked": trials.iter().map(|t| t.positions_checked).sum::<usize>(),
                "positions_skipped": trials.iter().map(|t| t.positions_skipped).sum::<usize>(),
                "decoders_violating": trials.iter().map(|t| t.violations.len()).sum::<usize>(),
                "worst_relative": fmt_f64(trials.iter().map(|t| t.worst_relative).fold(0.0, f64::max)),
            }),
            bad.map(|t| json!({ "seed": t.seed, "decoder": t.violations[0] })),
        )
    } else {
        Check {
            name: "sia-cramer-oracle".into(),
            status: Status::Skipped,
            details: json!({ "reason": format!("cofactor oracle limited to M <= {ORACLE_MAX_ORDER}") }),
            counterexample: None,
        }
    };
    Ok(vec![canonical, cramer])
}

fn run_alignment<R: ScalarRing>(cfg: &RunConfig, ring: R, timer: &mut Timer) -> Result<Vec<Check>> {
    let p = cfg.params()?;
    let opts = BasisOptions {
        memory_budget: cfg.memory_budget,
        ablated_slot: cfg.ablate.map(|a| a.1),
        ..BasisOptions::default()
    };
    let mut checks: Vec<Check> = Vec::new();
    let mut passes: Vec<usize> = Vec::new();
    for t in 0..cfg.trials {
        let seed = trial_seed(cfg, t);
        let report = timer.time(&format!("trial-{t}"), || -> Result<_> {
            let ch = ChannelSet::sample(&p, ring.clone(), seed)?;
            let gens = extract_generators(&process_all(&ch)?, &ring)?;
            let bases = build_all_bases(&gens, &p, &ring, &opts, cfg.ablate.map(|a| a.0))?;
            Ok(check_alignment(&bases, &gens, &p, &ring))
        })?;
        if checks.is_empty() {
            for c in &report.conditions {
                checks.push(Check::new(
                    format!("alignment[j={}] {}", c.stream, c.slot),
                    true,
                    json!({
                        "stream": c.stream,
                        "slot_index": c.slot_index,
                        "slot": c.slot.to_string(),
                        "columns_checked": 0,
                    }),
                    None,
                ));
                passes.push(0);
            }
        }
        for ((check, pass), c) in checks.iter_mut().zip(&mut passes).zip(&report.conditions) {
            if let Value::Object(d) = &mut check.details {
                let cols = d["columns_checked"].as_u64().unwrap_or(0) + c.columns_checked as u64;
                d.insert("columns_checked".into(), json!(cols));
            }
            if c.passed() {
                *pass += 1;
            } else if check.counterexample.is_none() {
                check.status = Status::Fail;
                check.counterexample = Some(json!({
                    "seed": seed,
                    "combinatorial": c.combinatorial,
                    "shared_degree": c.shared_degree,
                    "numeric": c.numeric,
                    "exponents": c.counterexample,
                }));
            }
        }
    }
    for (check, pass) in checks.iter_mut().zip(passes) {
        if let Value::Object(d) = &mut check.details {
            d.insert("trials_passed".into(), json!(pass));
            d.insert("trials".into(), json!(cfg.trials));
        }
    }
    Ok(checks)
}

#[derive(Default)]
struct RankTally {
    rows: usize,
    cols: usize,
    required: usize,
    min_rank: Option<usize>,
    passed: usize,
    counterexample: Option<Value>,
}

impl RankTally {
    fn record(&mut self, seed: u64, rows: usize, cols: usize, rank: usize, required: usize) {
        self.rows = rows;
        self.cols = cols;
        self.required = required;
        self.min_rank = Some(self.min_rank.map_or(rank, |m| m.min(rank)));
        if rank == required {
            self.passed += 1;
        } else if self.counterexample.is_none() {
            self.counterexample = Some(json!({ "seed": seed, "rank": rank }));
        }
    }

    fn into_check(self, name: String, trials: usize, policy: RankPolicy) -> Check {
        Check::new(
            name,
            self.passed == trials,
            json!({
                "rows": self.rows,
                "cols": self.cols,
                "required": self.required,
                "min_rank": self.min_rank,
                "trials": trials,
                "trials_passed": self.passed,
                "policy": policy.name(),
            }),
            self.counterexample,
        )
    }
}

fn run_rank<R: ScalarRing>(cfg: &RunConfig, ring: R, timer: &mut Timer) -> Result<Vec<Check>> {
    let p = cfg.params()?;
    let policy = cfg.policy.expect("validated");
    let opts = BasisOptions {
        memory_budget: cfg.memory_budget,
        ..BasisOptions::default()
    };
    let decoders: Vec<usize> = match cfg.decoder {
        Some(d) => vec![d],
        None => (0..cfg.users).collect(),
    };
    let mut tallies: BTreeMap<(usize, usize), RankTally> = BTreeMap::new();
    let mut full: BTreeMap<usize, RankTally> = BTreeMap::new();
    for t in 0..cfg.trials {
        let seed = trial_seed(cfg, t);
        let ch = if cfg.identity_channels {
            ChannelSet::identity(cfg.users, p.require_lambda()?, ring.clone())?
        } else {
            ChannelSet::sample(&p, ring.clone(), seed)?
        };
        let (gens, bases) = timer.time(&format!("trial-{t}-bases"), || -> Result<_> {
            let gens = extract_generators(&process_all(&ch)?, &ring)?;
            let bases = build_all_bases(&gens, &p, &ring, &opts, None)?;
            Ok((gens, bases))
        })?;
        for &k in &decoders {
            let report = timer.time(&format!("trial-{t}-decoder-{k}"), || {
                check_rank_conditions(k, &bases, &gens, &ring, policy, cfg.memory_budget)
            })?;
            for s in report.subspaces {
                tallies
                    .entry((k, s.subspace))
                    .or_default()
                    .record(seed, s.rows, s.cols, s.rank, s.required);
            }
            if cfg.full_matrix {
                let m = assemble_full_matrix(k, &bases, &gens, &ring, cfg.memory_budget)?;
                let (rows, cols) = (m.rows(), m.cols());
                let rank = timer.time(&format!("trial-{t}-full-{k}"), || m.into_rank(&ring, policy))?;
                full.entry(k).or_default().record(seed, rows, cols, rank, rows);
            }
        }
    }
    let mut checks: Vec<Check> = tallies
        .into_iter()
        .map(|((k, j), tally)| tally.into_check(format!("rank[k={k},j={j}]"), cfg.trials, policy))
        .collect();
    checks.extend(
        full.into_iter()
            .map(|(k, tally)| tally.into_check(format!("full-rank[k={k}]"), cfg.trials, policy)),
    );
    Ok(checks)
}

fn run_dof_table(cfg: &RunConfig) -> Result<(Vec<Check>, Option<String>)> {
    let table = dof_table(cfg.users, cfg.order, cfg.n_min..=cfg.n_max)?;
    let increasing = table.rows.windows(2).all(|w| w[0].total < w[1].total);
    let below = table.rows.iter().all(|r| r.total < table.limit);
    let csv = (cfg.format == Format::Csv).then(|| table.to_csv());
    let checks = vec![
        Check::new("dof-table", true, table.to_json(), None),
        Check::new("dof-increasing", increasing, json!({ "rows": table.rows.len() }), None),
        Check::new(
            "dof-below-limit",
            below,
            json!({ "limit": rational_string(&table.limit) }),
            None,
        ),
    ];
    Ok((checks, csv))
}

fn run_simulate<R: FloatRing>(cfg: &RunConfig, ring: R, timer: &mut Timer) -> Result<Vec<Check>> {
    let p = cfg.params()?;
    let ch = ChannelSet::sample(&p, ring, cfg.seed)?;
    let setup = timer.time("setup", || LinkSetup::new(&p, ch, cfg.link_bound))?;
    let rhos: Vec<f64> = cfg.snr_db.iter().map(|&d| db_to_linear(d)).collect();
    let report = timer.time("rates", || run_link(&setup, &rhos, cfg.realizations, cfg.seed))?;
    let fit = report.fit()?;
    let leakage = timer.time("leakage", || interference_leakage(&setup, cfg.seed));
    let relative = fit.slope / report.target_slope - 1.0;
    let opt = |x: Option<f64>| x.map(fmt_f64);
    let points: Vec<Value> = report
        .points
        .iter()
        .zip(&cfg.snr_db)
        .map(|(pt, &db)| {
            json!({
                "snr_db": fmt_f64(db),
                "rho": fmt_f64(pt.rho),
                "sum_rate": fmt_f64(pt.sum_rate),
                "user_rates": pt.user_rates.iter().map(|&r| fmt_f64(r)).collect::<Vec<_>>(),
                "empirical_mse": opt(pt.empirical_mse),
                "predicted_mse": opt(pt.predicted_mse),
            })
        })
        .collect();
    Ok(vec![
        Check::new(
            "dof-slope",
            relative.abs() <= SLOPE_TOLERANCE,
            json!({
                "slope": fmt_f64(fit.slope),
                "intercept": fmt_f64(fit.intercept),
                "fit_residual": fmt_f64(fit.residual),
                "target_slope": fmt_f64(report.target_slope),
                "target_dof": rational_string(&p.total_dof()),
                "dof_estimate": fmt_f64(fit.slope / report.rate_scale),
                "relative_error": fmt_f64(relative),
                "tolerance": fmt_f64(SLOPE_TOLERANCE),
                "points": points,
            }),
            None,
        ),
        Check::new(
            "interference-nulling",
            leakage <= LEAKAGE_TOLERANCE,
            json!({ "max_relative_leakage": fmt_f64(leakage), "tolerance": fmt_f64(LEAKAGE_TOLERANCE) }),
            None,
        ),
        Check::new(
            "stream-separation",
            report.flagged.is_empty(),
            json!({ "max_condition": fmt_f64(report.max_condition), "rank_deficient": report.flagged.len() }),
            report.flagged.first().map(|f| json!({ "decoder": f.decoder, "subspace": f.subspace })),
        ),
    ])
}

/// Runs a validated configuration on the current thread pool.
pub fn execute(cfg: &RunConfig) -> Result<Report> {
    let mut timer = Timer::default();
    let mut csv = None;
    let checks = match cfg.command {
        CommandKind::Params => run_params(cfg)?,
        CommandKind::DofTable => {
            let (checks, c) = run_dof_table(cfg)?;
            csv = c;
            checks
        }
        CommandKind::VerifySia => match cfg.ring {
            RingChoice::Primefield => run_sia(cfg, PrimeField::new(cfg.prime)?)?,
            RingChoice::Real => run_sia(cfg, RealField)?,
            RingChoice::Complex => run_sia(cfg, ComplexField)?,
        },
        CommandKind::VerifyAlignment => match cfg.ring {
            RingChoice::Primefield => run_alignment(cfg, PrimeField::new(cfg.prime)?, &mut timer)?,
            RingChoice::Real => run_alignment(cfg, RealField, &mut timer)?,
            RingChoice::Complex => run_alignment(cfg, ComplexField, &mut timer)?,
        },
        CommandKind::VerifyRank => match cfg.ring {
            RingChoice::Primefield => run_rank(cfg, PrimeField::new(cfg.prime)?, &mut timer)?,
            RingChoice::Real => run_rank(cfg, RealField, &mut timer)?,
            RingChoice::Complex => run_rank(cfg, ComplexField, &mut timer)?,
        },
        CommandKind::Simulate => match cfg.ring {
            RingChoice::Real => run_simulate(cfg, RealField, &mut timer)?,
            RingChoice::Complex => run_simulate(cfg, ComplexField, &mut timer)?,
            RingChoice::Primefield => {
                return Err(Error::InvalidParams("link simulation needs a float ring".into()))
            }
        },
    };
    Ok(Report {
        config: cfg.to_json(),
        version: VERSION.to_string(),
        checks,
        timings: cfg.timings.then_some(timer.phases),
        csv,
    })
}

/// Runs `execute` on a pool of `cfg.workers` threads.
pub fn execute_with_workers(cfg: &RunConfig) -> Result<Report> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidParams(format!("cannot start {} workers: {e}", cfg.workers)))?;
    pool.install(|| execute(cfg))
}

/// The whole command line: parse, execute, write the report. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match parse_config(args) {
        Ok(cfg) => cfg,
        Err(ConfigError::Usage(e)) => {
            let _ = e.print();
            return e.exit_code();
        }
        Err(ConfigError::Invalid(e)) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let report = match execute_with_workers(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let text = report.render();
    let written = match &cfg.output {
        Some(path) => std::fs::write(path, text),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes())
        }
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return 2;
    }
    for c in report.checks.iter().filter(|c| c.status == Status::Fail) {
        eprintln!("FAIL {}", c.name);
    }
    report.exit_code()
}
