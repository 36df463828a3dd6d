use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{Datelike, NaiveDate};
use clap::{Args, Parser, Subcommand, ValueEnum};
use helios_core::ingest::{read_corpus, CleaningPolicy, Corpus, Season};
use helios_core::statespace::Code;
use helios_core::{features, validate, FitConfig, ModelEnvelope, SimulationConfig};
use log::info;
use tempfile::NamedTempFile;
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] helios_core::Error),
    #[error("io: {path}: {source}")]
    File { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn file(path: &Path) -> impl FnOnce(io::Error) -> Self + '_ {
        move |source| CliError::File {
            path: path.to_path_buf(),
            source,
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(
    name = "helios",
    version,
    about = "Correlated multi-station synthetic solar irradiance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clean and align observations, writing the canonical corpus CSV.
    Ingest {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the five day features for every cleaned station-day.
    Features {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit per-season cluster and transition models and save the model JSON.
    Fit {
        #[command(flatten)]
        input: InputArgs,
        /// Clusters per station and season.
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// k-means restarts per (station, season); the lowest inertia wins.
        #[arg(long, default_value_t = helios_core::clustering::DEFAULT_RESTARTS)]
        restarts: usize,
        #[arg(long, value_enum, default_value_t = SeasonRule::Meteorological)]
        season_rule: SeasonRule,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic multi-station series from a fitted model.
    Simulate(SimulateArgs),
    /// Compare observed and simulated series.
    Validate {
        /// Observed corpus CSV files.
        #[arg(long = "corpus", required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        /// Simulated series CSV.
        #[arg(long)]
        simulated: PathBuf,
        #[arg(long, default_value_t = CleaningPolicy::default().max_gap_minutes)]
        max_gap: usize,
        /// Maximum rows per CDF table.
        #[arg(long, default_value_t = validate::DEFAULT_CDF_POINTS)]
        cdf_points: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Observation CSV files (`timestamp,station_id,ghi_wm2`).
    #[arg(long = "input", required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Longest gap, in minutes, filled by linear interpolation.
    #[arg(long, default_value_t = CleaningPolicy::default().max_gap_minutes)]
    max_gap: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SeasonRule {
    /// Dec-Feb winter, Mar-May spring, Jun-Aug summer, Sep-Nov autumn.
    Meteorological,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Corpus CSV files the model was fitted on; simulated days are drawn from them.
    #[arg(long = "corpus", required = true, num_args = 1..)]
    corpus: Vec<PathBuf>,
    /// Number of days to simulate.
    #[arg(long, conflicts_with_all = ["from", "to"], required_unless_present = "from")]
    days: Option<usize>,
    /// First simulated date with --days; defaults to January 1 after the fitted data.
    #[arg(long, requires = "days")]
    start: Option<NaiveDate>,
    #[arg(long, requires = "to")]
    from: Option<NaiveDate>,
    #[arg(long, requires = "from")]
    to: Option<NaiveDate>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Starting joint code for a season, as `season=code`. Repeatable.
    #[arg(long = "initial-state", value_parser = parse_initial)]
    initial_state: Vec<(Season, Code)>,
    #[arg(long, default_value_t = CleaningPolicy::default().max_gap_minutes)]
    max_gap: usize,
    #[arg(long)]
    out: PathBuf,
    /// Provenance JSON; defaults to the output path with a `.sidecar.json` suffix.
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

fn parse_initial(s: &str) -> Result<(Season, Code), String> {
    let (season, code) = s.split_once('=').ok_or("expected season=code")?;
    let season = season.parse::<Season>().map_err(|e| e.to_string())?;
    let code = code
        .parse::<u32>()
        .ok()
        .and_then(Code::new)
        .ok_or("code must be a positive integer")?;
    Ok((season, code))
}

fn load_corpus(paths: &[PathBuf], max_gap: usize) -> Result<Corpus> {
    let mut readers = Vec::with_capacity(paths.len());
    for path in paths {
        readers.push(BufReader::new(
            File::open(path).map_err(CliError::file(path))?,
        ));
    }
    let corpus = read_corpus(
        readers,
        CleaningPolicy {
            max_gap_minutes: max_gap,
        },
    )
    .map_err(helios_core::Error::from)?;
    info!(
        "loaded {} stations, {} aligned days",
        corpus.stations().len(),
        corpus.alignment().len()
    );
    Ok(corpus)
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed run never leaves a half-written output.
fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = NamedTempFile::new_in(dir).map_err(CliError::file(path))?;
    let mut writer = BufWriter::new(tmp);
    body(&mut writer)?;
    let tmp = writer.into_inner().map_err(|e| CliError::File {
        path: path.to_path_buf(),
        source: e.into_error(),
    })?;
    tmp.persist(path).map_err(|e| CliError::File {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| {
        w.write_all(text.as_bytes()).map_err(CliError::file(path))
    })
}

fn ingest(input: &InputArgs, out: &Path) -> Result<()> {
    let corpus = load_corpus(&input.input, input.max_gap)?;
    write_atomic(out, |w| {
        corpus.write_csv(w).map_err(helios_core::Error::from)?;
        Ok(())
    })?;
    let days: usize = (0..corpus.stations().len())
        .map(|s| corpus.days(s).len())
        .sum();
    println!(
        "{} stations, {} station-days, {} aligned dates -> {}",
        corpus.stations().len(),
        days,
        corpus.alignment().len(),
        out.display()
    );
    Ok(())
}

fn write_features(input: &InputArgs, out: &Path) -> Result<()> {
    let corpus = load_corpus(&input.input, input.max_gap)?;
    let mut rows = 0;
    write_atomic(out, |w| {
        let io = CliError::file(out);
        let mut text = String::from("station_id,date,mean,std,skewness,kurtosis,mfi\n");
        for (s, station) in corpus.stations().iter().enumerate() {
            for (date, day) in corpus.days(s) {
                let f = features::extract(day);
                text.push_str(&format!(
                    "{station},{date},{},{},{},{},{}\n",
                    f.mean, f.std, f.skewness, f.kurtosis, f.mfi
                ));
                rows += 1;
            }
        }
        w.write_all(text.as_bytes()).map_err(io)
    })?;
    println!("{rows} feature rows -> {}", out.display());
    Ok(())
}

fn fit(input: &InputArgs, config: FitConfig, out: &Path) -> Result<()> {
    let corpus = load_corpus(&input.input, input.max_gap)?;
    let envelope = helios_core::fit_model(&corpus, &config)?;
    write_text(out, &envelope.to_json())?;
    for (season, model) in &envelope.seasons {
        println!(
            "{season}: r = {}, r0 = {}",
            model.space.r(),
            model.space.r0()
        );
    }
    println!("model -> {}", out.display());
    Ok(())
}

fn default_sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(".sidecar.json");
    out.with_file_name(name)
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.model).map_err(CliError::file(&args.model))?;
    let envelope = ModelEnvelope::from_json(&text).map_err(helios_core::Error::from)?;
    let corpus = load_corpus(&args.corpus, args.max_gap)?;

    let mut config = match (args.days, args.from, args.to) {
        (Some(n), _, _) => {
            let start = match args.start {
                Some(d) => d,
                None => NaiveDate::from_ymd_opt(envelope.metadata.date_end.year() + 1, 1, 1)
                    .ok_or_else(|| CliError::Usage("cannot derive a default start date".into()))?,
            };
            SimulationConfig::days(start, n, args.seed)
        }
        (None, Some(from), Some(to)) => SimulationConfig::range(from, to, args.seed)?,
        _ => return Err(CliError::Usage("give --days or --from/--to".into())),
    };
    config
        .initial_state
        .extend(args.initial_state.iter().copied());

    let series = helios_core::simulate_year(&envelope, &corpus, &config)?;
    write_atomic(&args.out, |w| {
        series.write_csv(w).map_err(helios_core::Error::from)?;
        Ok(())
    })?;
    let sidecar = args
        .sidecar
        .clone()
        .unwrap_or_else(|| default_sidecar(&args.out));
    write_text(&sidecar, &series.sidecar_json())?;
    println!(
        "{} days x {} stations -> {} (provenance {})",
        series.days.len(),
        series.stations.len(),
        args.out.display(),
        sidecar.display()
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn run_validate(
    corpus: &[PathBuf],
    simulated: &Path,
    max_gap: usize,
    cdf_points: usize,
    out_dir: &Path,
) -> Result<()> {
    let observed = load_corpus(corpus, max_gap)?;
    let simulated = load_corpus(std::slice::from_ref(&simulated.to_path_buf()), max_gap)?;
    let report = validate::build_report(&observed, &simulated, cdf_points)
        .map_err(helios_core::Error::from)?;
    fs::create_dir_all(out_dir).map_err(CliError::file(out_dir))?;

    write_text(&out_dir.join("report.json"), &report.to_json())?;
    for (station, rows) in &report.cdf_tables {
        let mut text = String::from("ghi_wm2,observed,simulated\n");
        for row in rows {
            text.push_str(&format!("{},{},{}\n", row.ghi, row.observed, row.simulated));
        }
        write_text(&out_dir.join(format!("cdf_{station}.csv")), &text)?;
    }
    for (station, monthly) in &report.monthly {
        let years: Vec<i32> = monthly.observed_by_year.keys().copied().collect();
        let mut text = String::from("month");
        for y in &years {
            text.push_str(&format!(",observed_{y}"));
        }
        text.push_str(",simulated\n");
        for m in 0..12 {
            text.push_str(&(m + 1).to_string());
            for y in &years {
                text.push(',');
                text.push_str(&fmt_opt(monthly.observed_by_year[y][m]));
            }
            text.push(',');
            text.push_str(&fmt_opt(monthly.simulated[m]));
            text.push('\n');
        }
        write_text(&out_dir.join(format!("monthly_{station}.csv")), &text)?;
    }

    for pair in &report.pearson {
        println!(
            "pearson {}-{}: observed {:.3}, simulated {:.3}",
            pair.station_a, pair.station_b, pair.observed, pair.simulated
        );
    }
    for (station, ks) in &report.ks {
        println!("ks {station}: {ks:.4}");
    }
    println!("report -> {}", out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { input, out } => ingest(&input, &out),
        Command::Features { input, out } => write_features(&input, &out),
        Command::Fit {
            input,
            k,
            seed,
            restarts,
            season_rule: SeasonRule::Meteorological,
            out,
        } => fit(&input, FitConfig { k, seed, restarts }, &out),
        Command::Simulate(args) => simulate(&args),
        Command::Validate {
            corpus,
            simulated,
            max_gap,
            cdf_points,
            out_dir,
        } => run_validate(&corpus, &simulated, max_gap, cdf_points, &out_dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HELIOS_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
