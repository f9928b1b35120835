//! The `apm` command line.
//!
//! Each stage reads and writes files so later stages never silently redo
//! earlier ones:
//!
//! * `simulate` writes `shifts.csv`, `roster.csv` and `ground_truth.csv`.
//! * `ingest` writes `shifts.validated.csv` and `filter_report.json`.
//! * `fit` writes `coef_<model>.csv` and `fit_<model>.json` per model,
//!   then rates players.
//! * `rate` rebuilds `ratings.json` and `ratings.csv` from saved fits.
//! * `report` and `kde` read `ratings.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::design::{
    build_ib_design, build_r_net_design, build_r_total_design, DesignError, DesignMatrix, DesignOptions,
};
use crate::ingest::{
    filter_shifts, parse_roster_file, parse_shift_file, write_roster, write_shift_file, IngestError, DEFAULT_MIN_SHIFTS,
};
use crate::metrics::raw_onice_stats;
use crate::pipeline::{fit_models, rate, Fits, ModelSelection, PipelineError, PipelineOptions};
use crate::report::{
    kde, metric_values, render_top_table, top_n, write_kde_csv, write_ratings_csv, write_top_csv, KdeError, Metric,
    Precision, RatingsFile, ReportError, TopFilter, DEFAULT_MIN_MINUTES,
};
use crate::shift::{linemate_table, PlayerId, PositionGroup, Roster, Shift};
use crate::simulate::{generate, twin_scenario, SimConfig, SimError, TwinConfig};
use crate::wls::{CollinearityPolicy, FitOptions, FitResult};

const LINEMATES: usize = 3;

/// Adjusted plus-minus ratings from shift-level hockey data.
#[derive(Debug, Parser)]
#[command(name = "apm", version)]
pub struct Cli {
    /// Worker threads for fitting; outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic league with known player effects.
    Simulate(SimulateArgs),
    /// Validate a shift file and report what was dropped.
    Ingest(IngestArgs),
    /// Fit the rating models and rate eligible players.
    Fit(FitArgs),
    /// Rate players from previously saved fits.
    Rate(RateArgs),
    /// Print a top-N table from saved ratings.
    Report(ReportArgs),
    /// Kernel density curves of a rating by position.
    Kde(KdeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Ib,
    R,
    Both,
}

impl From<ModelArg> for ModelSelection {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Ib => ModelSelection::Ib,
            ModelArg::R => ModelSelection::R,
            ModelArg::Both => ModelSelection::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CollinearityArg {
    Error,
    Ridge,
}

impl From<CollinearityArg> for CollinearityPolicy {
    fn from(c: CollinearityArg) -> Self {
        match c {
            CollinearityArg::Error => CollinearityPolicy::Error,
            CollinearityArg::Ridge => CollinearityPolicy::Ridge,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    Table,
    Full,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Table => Precision::Table,
            PrecisionArg::Full => Precision::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub teams: usize,
    #[arg(long, default_value_t = 3)]
    pub seasons: usize,
    /// Games per season across the league.
    #[arg(long, default_value_t = 504)]
    pub games: usize,
    #[arg(long, default_value_t = 80)]
    pub shifts_per_game: usize,
    /// Standard deviation of true effects, goals per 60.
    #[arg(long, default_value_t = 0.5)]
    pub spread: f64,
    /// Pair two forwards for this share of their shifts.
    #[arg(long)]
    pub twin_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Shift file, ideally the output of `ingest`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub roster: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_SHIFTS)]
    pub min_shifts: u64,
    #[arg(long, value_enum, default_value_t = ModelArg::Both)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value_t = CollinearityArg::Error)]
    pub collinearity: CollinearityArg,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Table)]
    pub precision: PrecisionArg,
    /// Also write each design as `row col value` triplets.
    #[arg(long)]
    pub dump_design: bool,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    /// Shift file the fits were made from.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub roster: PathBuf,
    /// Directory holding the fits; ratings are written here too.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelArg::Both)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Table)]
    pub precision: PrecisionArg,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `ratings.json` from `fit` or `rate`.
    #[arg(long)]
    pub input: PathBuf,
    /// Write here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    #[arg(long, default_value = "apm")]
    pub metric: Metric,
    /// Position groups to keep, e.g. `F,D`.
    #[arg(long, value_delimiter = ',')]
    pub pos: Vec<PositionGroup>,
    #[arg(long, default_value_t = DEFAULT_MIN_MINUTES)]
    pub min_minutes: f64,
    /// Lowest values first.
    #[arg(long)]
    pub ascending: bool,
    #[arg(long, value_enum, default_value_t = TableFormat::Text)]
    pub format: TableFormat,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Table)]
    pub precision: PrecisionArg,
}

#[derive(Debug, Args)]
pub struct KdeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "opm60")]
    pub metric: Metric,
    /// One curve per position group.
    #[arg(long, value_delimiter = ',', default_value = "F,D,G")]
    pub pos: Vec<PositionGroup>,
    #[arg(long, default_value_t = 0.0)]
    pub min_minutes: f64,
    /// Fixed bandwidth instead of the rule of thumb.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Weight players by minutes.
    #[arg(long)]
    pub weighted: bool,
}

/// Fully resolved settings of one invocation, logged to standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roster: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub min_shifts: u64,
    pub min_minutes: f64,
    pub model: ModelSelection,
    pub seed: Option<u64>,
    pub collinearity: CollinearityPolicy,
    pub threads: Option<usize>,
    pub precision: Precision,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimConfig>,
}

impl RunConfig {
    fn new(command: &'static str, threads: Option<usize>) -> Self {
        RunConfig {
            command,
            input: None,
            roster: None,
            out: None,
            min_shifts: DEFAULT_MIN_SHIFTS,
            min_minutes: DEFAULT_MIN_MINUTES,
            model: ModelSelection::Both,
            seed: None,
            collinearity: CollinearityPolicy::Error,
            threads,
            precision: Precision::Table,
            simulation: None,
        }
    }

    /// Averaged ratings need both models.
    pub fn averages(&self) -> bool {
        self.model == ModelSelection::Both
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Usage(#[from] clap::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Simulate(#[from] SimError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{group} densities: {source}")]
    Kde {
        group: PositionGroup,
        #[source]
        source: KdeError,
    },
    #[error("{0}")]
    Missing(String),
    #[error("thread pool: {0}")]
    Threads(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn log_config(config: &RunConfig) {
    let json = serde_json::to_string(config).expect("config serializes");
    eprintln!("apm: config {json}");
}

fn warn(message: impl std::fmt::Display) {
    eprintln!("apm: warning: {message}");
}

/// Writes to `out` or, when absent, standard output.
fn with_output(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let mut w = create(path)?;
            f(&mut w)?;
            w.flush().map_err(io_err(path))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush().map_err(io_err(Path::new("<stdout>")))
        }
    }
}

fn load_shifts(path: &Path) -> Result<Vec<Shift>, CliError> {
    let records = parse_shift_file(path)?;
    let (shifts, report) = filter_shifts(&records);
    if report.removed() > 0 {
        warn(format_args!(
            "{}: dropped {} of {} rows that fail validation; run `apm ingest` first",
            path.display(),
            report.removed(),
            report.total_read
        ));
    }
    Ok(shifts)
}

type FitGetter = fn(&Fits) -> Option<&FitResult>;

const MODEL_FILES: [(&str, FitGetter); 3] = [
    ("ib", |f| f.ib.as_ref()),
    ("r_net", |f| f.net.as_ref()),
    ("r_total", |f| f.total.as_ref()),
];

fn cmd_simulate(args: &SimulateArgs, threads: Option<usize>) -> Result<(), CliError> {
    let sim_config = SimConfig {
        n_teams: args.teams,
        n_seasons: args.seasons,
        games_per_season: args.games,
        shifts_per_game: args.shifts_per_game,
        effect_spread: args.spread,
        seed: args.seed,
        ..SimConfig::default()
    };
    let mut config = RunConfig::new("simulate", threads);
    config.out = Some(args.out.clone());
    config.seed = Some(args.seed);
    config.simulation = Some(sim_config.clone());
    log_config(&config);

    let sim = match args.twin_fraction {
        Some(fraction) => twin_scenario(&sim_config, &TwinConfig { fraction })?,
        None => generate(&sim_config)?,
    };
    ensure_dir(&args.out)?;
    write_shift_file(args.out.join("shifts.csv"), &sim.shifts)?;
    let roster_path = args.out.join("roster.csv");
    write_roster(create(&roster_path)?, &sim.roster)?;
    let truth_path = args.out.join("ground_truth.csv");
    sim.truth
        .write_csv(create(&truth_path)?)
        .map_err(csv_err(&truth_path))?;
    if let Some((a, b)) = &sim.twins {
        eprintln!("apm: paired forwards {a} and {b}");
    }
    println!(
        "{} shifts, {} players written to {}",
        sim.shifts.len(),
        sim.roster.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_ingest(args: &IngestArgs, threads: Option<usize>) -> Result<(), CliError> {
    let mut config = RunConfig::new("ingest", threads);
    config.input = Some(args.input.clone());
    config.out = Some(args.out.clone());
    log_config(&config);

    let records = parse_shift_file(&args.input)?;
    let (shifts, report) = filter_shifts(&records);
    ensure_dir(&args.out)?;
    write_shift_file(args.out.join("shifts.validated.csv"), &shifts)?;
    write_json(&args.out.join("filter_report.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn rate_and_write(
    fits: &Fits,
    shifts: &[Shift],
    roster: &Roster,
    out: &Path,
    precision: Precision,
) -> Result<(), CliError> {
    let eligible: BTreeSet<_> = MODEL_FILES
        .iter()
        .filter_map(|(_, get)| get(fits))
        .flat_map(|f| f.column_map.players())
        .collect();
    let stats = raw_onice_stats(shifts);
    let ratings = rate(fits, roster, &eligible, &stats)?;
    let linemates: BTreeMap<_, _> = linemate_table(shifts, LINEMATES)
        .into_iter()
        .filter(|(id, _)| eligible.contains(id))
        .collect();
    let csv_path = out.join("ratings.csv");
    write_ratings_csv(create(&csv_path)?, &ratings.players, &linemates, precision).map_err(csv_err(&csv_path))?;
    let file = RatingsFile {
        averaged: ratings.averaged,
        ratings: ratings.players,
        linemates,
    };
    write_json(&out.join("ratings.json"), &file)?;
    println!(
        "rated {} players, written to {}",
        file.ratings.len(),
        csv_path.display()
    );
    Ok(())
}

fn warn_unaveraged(config: &RunConfig) {
    if !config.averages() {
        warn(format_args!(
            "model `{}` alone: averaging skipped, ratings come from one model",
            config.model
        ));
    }
}

fn cmd_fit(args: &FitArgs, threads: Option<usize>) -> Result<(), CliError> {
    let mut config = RunConfig::new("fit", threads);
    config.input = Some(args.input.clone());
    config.roster = Some(args.roster.clone());
    config.out = Some(args.out.clone());
    config.min_shifts = args.min_shifts;
    config.model = args.model.into();
    config.collinearity = args.collinearity.into();
    config.precision = args.precision.into();
    log_config(&config);
    warn_unaveraged(&config);

    let roster = parse_roster_file(&args.roster)?;
    let shifts = load_shifts(&args.input)?;
    roster.check_shifts(&shifts).map_err(PipelineError::from)?;
    let options = PipelineOptions {
        min_shifts: args.min_shifts,
        model: config.model,
        fit: FitOptions {
            collinearity: config.collinearity,
        },
        ..PipelineOptions::default()
    };
    let eligible = crate::ingest::eligible_players(&shifts, args.min_shifts);
    if eligible.is_empty() {
        return Err(PipelineError::NoEligiblePlayers(args.min_shifts).into());
    }
    ensure_dir(&args.out)?;
    if args.dump_design {
        type Build = fn(&[Shift], &BTreeSet<PlayerId>, &Roster, DesignOptions) -> Result<DesignMatrix, DesignError>;
        let builders: [(&str, bool, Build); 3] = [
            ("ib", config.model.includes_ib(), build_ib_design),
            ("r_net", config.model.includes_r(), build_r_net_design),
            ("r_total", config.model.includes_r(), build_r_total_design),
        ];
        for (name, wanted, build) in builders {
            if !wanted {
                continue;
            }
            let design = build(&shifts, &eligible, &roster, options.design)?;
            let path = args.out.join(format!("design_{name}.triplets"));
            let mut w = create(&path)?;
            design
                .write_triplets(&mut w)
                .and_then(|_| w.flush())
                .map_err(io_err(&path))?;
            let path = args.out.join(format!("columns_{name}.json"));
            fs::write(&path, design.column_map_json() + "\n").map_err(io_err(&path))?;
        }
    }

    let fits = fit_models(&shifts, &roster, &eligible, &options)?;
    for (name, get) in MODEL_FILES {
        if let Some(f) = get(&fits) {
            let path = args.out.join(format!("coef_{name}.csv"));
            f.write_coefficients_csv(create(&path)?).map_err(csv_err(&path))?;
            write_json(&args.out.join(format!("fit_{name}.json")), f)?;
            if let Some(lambda) = f.diagnostics.ridge_lambda {
                warn(format_args!(
                    "{name} fit needed a ridge of {lambda:e}; estimates for collinear players are unreliable"
                ));
            }
        }
    }
    rate_and_write(&fits, &shifts, &roster, &args.out, config.precision)
}

fn cmd_rate(args: &RateArgs, threads: Option<usize>) -> Result<(), CliError> {
    let mut config = RunConfig::new("rate", threads);
    config.input = Some(args.input.clone());
    config.roster = Some(args.roster.clone());
    config.out = Some(args.out.clone());
    config.model = args.model.into();
    config.precision = args.precision.into();
    log_config(&config);
    warn_unaveraged(&config);

    let load = |name: &str, wanted: bool| -> Result<Option<FitResult>, CliError> {
        if !wanted {
            return Ok(None);
        }
        let path = args.out.join(format!("fit_{name}.json"));
        if !path.exists() {
            return Err(CliError::Missing(format!(
                "{} not found; run `apm fit` first",
                path.display()
            )));
        }
        read_json(&path).map(Some)
    };
    let fits = Fits {
        ib: load("ib", config.model.includes_ib())?,
        net: load("r_net", config.model.includes_r())?,
        total: load("r_total", config.model.includes_r())?,
    };
    let roster = parse_roster_file(&args.roster)?;
    let shifts = load_shifts(&args.input)?;
    roster.check_shifts(&shifts).map_err(PipelineError::from)?;
    rate_and_write(&fits, &shifts, &roster, &args.out, config.precision)
}

fn cmd_report(args: &ReportArgs, threads: Option<usize>) -> Result<(), CliError> {
    let mut config = RunConfig::new("report", threads);
    config.input = Some(args.input.clone());
    config.out = args.out.clone();
    config.min_minutes = args.min_minutes;
    config.precision = args.precision.into();
    log_config(&config);

    let file: RatingsFile = read_json(&args.input)?;
    let filter = TopFilter {
        positions: args.pos.iter().copied().collect(),
        min_minutes: args.min_minutes,
        ascending: args.ascending,
    };
    let rows = top_n(&file.ratings, args.metric, args.top, &filter)?;
    let precision = config.precision;
    with_output(args.out.as_deref(), |w| match args.format {
        TableFormat::Text => w
            .write_all(render_top_table(&rows, args.metric, precision).as_bytes())
            .map_err(io_err(Path::new("<output>"))),
        TableFormat::Csv => write_top_csv(w, &rows, args.metric, precision).map_err(csv_err(Path::new("<output>"))),
    })
}

fn cmd_kde(args: &KdeArgs, threads: Option<usize>) -> Result<(), CliError> {
    let mut config = RunConfig::new("kde", threads);
    config.input = Some(args.input.clone());
    config.out = args.out.clone();
    config.min_minutes = args.min_minutes;
    log_config(&config);

    let file: RatingsFile = read_json(&args.input)?;
    let kept: Vec<_> = file
        .ratings
        .into_iter()
        .filter(|r| r.mins >= args.min_minutes)
        .collect();
    let groups: BTreeSet<PositionGroup> = args.pos.iter().copied().collect();
    let mut curves = Vec::new();
    for group in groups {
        let values = metric_values(&kept, args.metric, group);
        let weights: Option<Vec<f64>> = args.weighted.then(|| {
            kept.iter()
                .filter(|r| r.position.group() == group && args.metric.value(r).is_some())
                .map(|r| r.mins)
                .collect()
        });
        let curve =
            kde(&values, weights.as_deref(), args.bandwidth).map_err(|source| CliError::Kde { group, source })?;
        curves.push((group, curve));
    }
    with_output(args.out.as_deref(), |w| {
        write_kde_csv(w, &curves).map_err(csv_err(Path::new("<output>")))
    })
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let t = cli.threads;
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, t),
        Command::Ingest(a) => cmd_ingest(a, t),
        Command::Fit(a) => cmd_fit(a, t),
        Command::Rate(a) => cmd_rate(a, t),
        Command::Report(a) => cmd_report(a, t),
        Command::Kde(a) => cmd_kde(a, t),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Threads(e.to_string()))?
            .install(|| dispatch(&cli)),
        None => dispatch(&cli),
    }
}

/// Entry point for the binary: usage errors exit with 2, failures with 1.
pub fn main() -> ExitCode {
    match run_from(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Io { source, .. }) if source.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) => {
            let _ = e.print();
            ExitCode::from(e.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("apm: error: {e}");
            ExitCode::FAILURE
        }
    }
}
