//! Experiment runner: comparison-table reproduction, protocol simulation,
//! attack evaluation and the distinguishing game.
//!
//! Exit codes: 0 success, 1 assertion or golden-value failure, 2 usage or
//! configuration error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dtbas_core::adversary::{run_attack, AttackKind, AttackReport, AttackerModel};
use dtbas_core::aggregation::{simulate, SimulationReport};
use dtbas_core::game::{
    expected_band, run_game, Background, Band, Distinguisher, GameSetup, GameTranscript,
    Observable, Strategy, DEFAULT_ROUND_LEN, DEFAULT_TRIALS,
};
use dtbas_core::loadgen::{self, to_canonical_json, LoadProfile};
use dtbas_core::metrics::{emit_reference_tables, Degree, ReferenceTables};
use dtbas_core::{AggregatorId, Error, MeterId, Modulus, ShareScheme, SimConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ASSERTION: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Default decryption delay annotated on passive-attack reports: 30 days.
pub const DEFAULT_DECRYPT_DELAY_HOURS: f64 = 720.0;

#[derive(Debug, Parser)]
#[command(
    name = "dtbas",
    version,
    about = "Distributed-trust anonymous aggregation simulator"
)]
pub struct Cli {
    /// Seed for every random stream in the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// `key = value` configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Write the JSON report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the degree-of-anonymity and user-probability comparison tables.
    MetricsTable(MetricsTableArgs),
    /// Run split, aggregation, supplier totals and billing over one period.
    Simulate(SimulateArgs),
    /// Evaluate an active or passive attacker against a simulated period.
    Attack(AttackArgs),
    /// Play the load-profile distinguishing game.
    Game(GameArgs),
}

#[derive(Debug, Args)]
pub struct MetricsTableArgs {
    /// Compare against the published values; exit 1 on the first mismatch.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    NaiveEqualSplit,
    AdditiveRandom,
}

impl From<SchemeArg> for ShareScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::NaiveEqualSplit => ShareScheme::NaiveEqualSplit,
            SchemeArg::AdditiveRandom => ShareScheme::AdditiveRandom,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SystemArgs {
    #[arg(long)]
    pub n_meters: Option<u32>,
    #[arg(long)]
    pub m_aggregators: Option<u32>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Prime ring modulus.
    #[arg(long)]
    pub modulus: Option<u64>,
    /// Intervals in the billing period.
    #[arg(long)]
    pub intervals: Option<u32>,
    /// Readings CSV (`meter_id,interval,wh`); synthetic households otherwise.
    #[arg(long)]
    pub readings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Active,
    Passive,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, value_enum, default_value = "active")]
    pub model: ModelArg,
    /// Aggregators controlled by an active attacker.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub compromised: Vec<u32>,
    /// Meter the attacker tries to deanonymize.
    #[arg(long, default_value_t = 0)]
    pub target: u32,
    /// Decryption time annotated on passive-attack reports.
    #[arg(long, default_value_t = DEFAULT_DECRYPT_DELAY_HOURS)]
    pub decrypt_delay_hours: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObservableArg {
    SingleAggregator,
    AllAggregators,
    SupplierTotals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    RandomGuess,
    ColumnSumMatcher,
    TotalSumMatcher,
}

#[derive(Debug, Args)]
pub struct GameArgs {
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: u32,
    #[arg(long)]
    pub n_meters: Option<u32>,
    #[arg(long)]
    pub m_aggregators: Option<u32>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    #[arg(long, value_enum, default_value = "single-aggregator")]
    pub observable: ObservableArg,
    #[arg(long, value_enum, default_value = "column-sum-matcher")]
    pub strategy: StrategyArg,
    /// Aggregator read by a single-aggregator observable.
    #[arg(long, default_value_t = 0)]
    pub aggregator: u32,
    /// Profiles CSV: meter 0 is lf_1, meter 1 is lf_2, any further meters
    /// form the background pool.
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ROUND_LEN)]
    pub round_len: u32,
    /// Include per-trial challenge and guess records in the transcript.
    #[arg(long)]
    pub per_trial: bool,
    /// Exit 1 unless the outcome lies in the expected band for this setup.
    #[arg(long)]
    pub assert_band: bool,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

/// Result of a subcommand before anything is written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutput {
    pub code: u8,
    /// Human-readable summary.
    pub summary: String,
    /// Canonical JSON report.
    pub json: String,
}

struct Globals<'a> {
    seed: Option<u64>,
    config: Option<&'a Path>,
}

impl Globals<'_> {
    fn base_config(&self, default_n: u32) -> Result<SimConfig, CliError> {
        match self.config {
            Some(path) => Ok(SimConfig::load(path)?),
            None => Ok(SimConfig::new(default_n, 3)?),
        }
    }
}

fn build_config(
    globals: &Globals<'_>,
    default_n: u32,
    n: Option<u32>,
    m: Option<u32>,
    scheme: Option<SchemeArg>,
    modulus: Option<u64>,
    intervals: Option<u32>,
) -> Result<SimConfig, CliError> {
    let base = globals.base_config(default_n)?;
    let mut b = base.to_builder();
    if let Some(n) = n {
        b = b.n_meters(n);
    }
    if let Some(m) = m {
        b = b.m_aggregators(m);
    }
    if let Some(s) = scheme {
        b = b.scheme(s.into());
    }
    if let Some(p) = modulus {
        b = b.modulus(Modulus::new(p)?);
    }
    if let Some(len) = intervals {
        b = b.intervals_per_period(len);
    }
    if let Some(seed) = globals.seed {
        b = b.seed(seed);
    }
    Ok(b.build()?)
}

/// Resolves the config and the per-meter readings for simulate and attack.
fn system(
    globals: &Globals<'_>,
    args: &SystemArgs,
) -> Result<(SimConfig, Vec<LoadProfile>), CliError> {
    match &args.readings {
        None => {
            let config = build_config(
                globals,
                3,
                args.n_meters,
                args.m_aggregators,
                args.scheme,
                args.modulus,
                args.intervals,
            )?;
            let profiles = config
                .meters()
                .map(|m| {
                    loadgen::synthetic_household(
                        m,
                        config.intervals_per_period() as usize,
                        config.seed(),
                        config.energy_bound(),
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((config, profiles))
        }
        Some(path) => {
            let parsed = loadgen::ingest_csv(path, u64::MAX)?;
            let csv_n = parsed.len() as u32;
            if let Some(n) = args.n_meters.filter(|&n| n != csv_n) {
                return Err(CliError::Usage(format!(
                    "--n-meters {n} disagrees with {csv_n} meters in {}",
                    path.display()
                )));
            }
            let csv_len = parsed.values().next().map_or(0, |p| p.len()) as u32;
            let config = build_config(
                globals,
                3,
                Some(csv_n),
                args.m_aggregators,
                args.scheme,
                args.modulus,
                Some(args.intervals.unwrap_or(csv_len)),
            )?;
            if config.intervals_per_period() > csv_len {
                return Err(CliError::Usage(format!(
                    "{} holds {csv_len} intervals, period needs {}",
                    path.display(),
                    config.intervals_per_period()
                )));
            }
            let profiles: Vec<LoadProfile> = parsed.into_values().collect();
            for p in &profiles {
                p.check_bound(config.energy_bound())?;
            }
            Ok((config, profiles))
        }
    }
}

pub fn metrics_table_cmd(args: &MetricsTableArgs) -> Result<CommandOutput, CliError> {
    let tables: ReferenceTables = emit_reference_tables();
    let mut summary = tables.to_text();
    let mut code = EXIT_OK;
    if args.check {
        match tables.check_golden() {
            Ok(()) => summary.push_str("\ncheck: all cells match\n"),
            Err(mismatch) => {
                let _ = writeln!(summary, "\ncheck FAILED: {mismatch}");
                code = EXIT_ASSERTION;
            }
        }
    }
    Ok(CommandOutput {
        code,
        summary,
        json: to_canonical_json(&tables)?,
    })
}

pub fn simulate_cmd(
    globals_seed: Option<u64>,
    config: Option<&Path>,
    args: &SimulateArgs,
) -> Result<(CommandOutput, SimulationReport), CliError> {
    let globals = Globals {
        seed: globals_seed,
        config,
    };
    let (config, profiles) = system(&globals, &args.system)?;
    let report = simulate(&config, &profiles)?;
    let summary = format!(
        "simulate: n={} m={} scheme={} intervals={} conservation={} bills_match_plaintext={}\n",
        report.n_meters,
        report.m_aggregators,
        report.scheme,
        report.period.len,
        if report.conservation.passed {
            "pass"
        } else {
            "FAIL"
        },
        report.bills_match_plaintext
    );
    let code = if report.conservation.passed && report.bills_match_plaintext {
        EXIT_OK
    } else {
        EXIT_ASSERTION
    };
    Ok((
        CommandOutput {
            code,
            summary,
            json: to_canonical_json(&report)?,
        },
        report,
    ))
}

pub fn attack_cmd(
    globals_seed: Option<u64>,
    config: Option<&Path>,
    args: &AttackArgs,
) -> Result<(CommandOutput, AttackReport), CliError> {
    let globals = Globals {
        seed: globals_seed,
        config,
    };
    let (config, profiles) = system(&globals, &args.system)?;
    let model = match args.model {
        ModelArg::Active => {
            AttackerModel::active(args.compromised.iter().map(|&a| AggregatorId(a)))?
        }
        ModelArg::Passive => AttackerModel::passive(config.m_aggregators()),
    };
    let report = run_attack(
        &config,
        &profiles,
        &model,
        MeterId(args.target),
        args.decrypt_delay_hours,
    )?;
    let exact: u32 = report.estimates.iter().map(|e| e.exact).sum();
    let cells: u32 = report.estimates.iter().map(|e| e.intervals).sum();
    let degree = match report.anonymity.degree {
        Degree::Defined(d) => format!("{d:.4}"),
        Degree::Undefined => "undefined".into(),
    };
    let mut summary = format!(
        "attack: {:?} on {:?} scheme={} exact-estimates={}/{} d_a={}",
        report.kind,
        report.compromised.iter().map(|a| a.0).collect::<Vec<_>>(),
        report.scheme,
        exact,
        cells,
        degree
    );
    if let Some(cmp) = &report.gained_vs_needed {
        let _ = write!(summary, " gained==needed:{}", cmp.equal);
    }
    if report.kind == AttackKind::Passive {
        let _ = write!(
            summary,
            " full-reconstruction after ~{}h decryption",
            report.decrypt_delay_hours.unwrap_or(0.0)
        );
    }
    summary.push('\n');
    Ok((
        CommandOutput {
            code: EXIT_OK,
            summary,
            json: to_canonical_json(&report)?,
        },
        report,
    ))
}

fn game_setup(args: &GameArgs, config: &SimConfig) -> Result<GameSetup, CliError> {
    let mut setup = GameSetup::default_archetypes();
    setup.trials = args.trials;
    setup.round_len = args.round_len;
    setup.record_trials = args.per_trial;
    if let Some(path) = &args.profiles {
        let parsed = loadgen::ingest_csv(path, config.energy_bound())?;
        let mut profiles = parsed.into_values();
        let (Some(lf1), Some(lf2)) = (profiles.next(), profiles.next()) else {
            return Err(CliError::Usage(format!(
                "{} must hold at least two meters (lf_1 and lf_2)",
                path.display()
            )));
        };
        setup.lf1 = lf1;
        setup.lf2 = lf2;
        let pool: Vec<LoadProfile> = profiles.collect();
        if !pool.is_empty() {
            setup.background = Background::Pool(pool);
        }
    }
    Ok(setup)
}

pub fn game_cmd(
    globals_seed: Option<u64>,
    config: Option<&Path>,
    args: &GameArgs,
) -> Result<(CommandOutput, GameTranscript), CliError> {
    let globals = Globals {
        seed: globals_seed,
        config,
    };
    let config = build_config(
        &globals,
        10,
        args.n_meters,
        args.m_aggregators,
        args.scheme,
        None,
        None,
    )?;
    let strategy = match args.strategy {
        StrategyArg::RandomGuess => Strategy::RandomGuess,
        StrategyArg::ColumnSumMatcher => Strategy::ColumnSumMatcher,
        StrategyArg::TotalSumMatcher => Strategy::TotalSumMatcher,
    };
    let observable = match args.observable {
        ObservableArg::SingleAggregator => Observable::SingleAggregator,
        ObservableArg::AllAggregators => Observable::AllAggregators,
        ObservableArg::SupplierTotals => Observable::SupplierTotals,
    };
    let distinguisher =
        Distinguisher::new(strategy, observable)?.reading(AggregatorId(args.aggregator));
    if args.aggregator >= config.m_aggregators() {
        return Err(CliError::Usage(format!(
            "--aggregator {} outside 0..{}",
            args.aggregator,
            config.m_aggregators()
        )));
    }
    let setup = game_setup(args, &config)?;
    let transcript = run_game(&distinguisher, &setup, &config)?;
    let mut summary = format!(
        "game: trials={} wins={} success_rate={:.4} advantage={:.4}",
        transcript.trials, transcript.wins, transcript.success_rate, transcript.advantage
    );
    let mut code = EXIT_OK;
    if args.assert_band {
        let Some(band) = expected_band(&distinguisher, config.scheme(), transcript.trials) else {
            return Err(CliError::Usage(format!(
                "no expected band for {strategy:?} on {observable:?}"
            )));
        };
        let inside = band.contains(&transcript);
        let desc = match band {
            Band::NoAdvantage { max_advantage } => format!("advantage <= {max_advantage:.4}"),
            Band::Leak { min_success } => format!("success >= {min_success:.2}"),
        };
        let _ = write!(
            summary,
            " band[{desc}]={}",
            if inside { "ok" } else { "VIOLATED" }
        );
        if !inside {
            code = EXIT_ASSERTION;
        }
    }
    summary.push('\n');
    Ok((
        CommandOutput {
            code,
            summary,
            json: to_canonical_json(&transcript)?,
        },
        transcript,
    ))
}

pub fn execute(cli: &Cli) -> Result<CommandOutput, CliError> {
    let (seed, config) = (cli.seed, cli.config.as_deref());
    Ok(match &cli.command {
        Command::MetricsTable(args) => metrics_table_cmd(args)?,
        Command::Simulate(args) => simulate_cmd(seed, config, args)?.0,
        Command::Attack(args) => attack_cmd(seed, config, args)?.0,
        Command::Game(args) => game_cmd(seed, config, args)?.0,
    })
}

/// Runs a parsed command, writing the report and summary; returns the exit code.
pub fn run(cli: &Cli) -> u8 {
    let output = match execute(cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match &cli.out {
        Some(path) => {
            if let Err(e) = loadgen::write_text_atomic(path, &output.json) {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
            print!("{}", output.summary);
        }
        None => match &cli.command {
            // the tables are the report; JSON only on request via --out
            Command::MetricsTable(_) => print!("{}", output.summary),
            _ => {
                print!("{}", output.json);
                eprint!("{}", output.summary);
            }
        },
    }
    output.code
}
