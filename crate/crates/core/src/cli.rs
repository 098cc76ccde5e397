//! The `exbic` command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::error::{Error, Result};
use crate::floc::{FlocConfig, GainRule};
use crate::gap::{gap_scan, linear_grid};
use crate::io::{
    preprocess_microarray, read_matrix, sha256_hex, write_gap_csv, write_matrix, Format,
    GapDocument, GapSettings, InputRecord, MatrixSource, ResultDocument, RunManifest,
};
use crate::matrix::ExpressionMatrix;
use crate::msr::matrix_msr;
use crate::pipeline::{run_exclusive_biclustering, PipelineConfig, DEFAULT_CANDIDATE_CAP};
use crate::synth::{evaluate, generate_synthetic, EmbedSpec, GroundTruth};
use crate::wdp::{solve_wdp, Auction};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "EXBIC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "exbic", version, about = "Exclusive-row δ-biclustering")]
struct Cli {
    /// Worker threads; defaults to $EXBIC_THREADS, then to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Harvest δ-biclusters and keep a maximal-volume row-exclusive subset.
    Bicluster(BiclusterArgs),
    /// Scan thresholds and pick δ by the volume gap statistic.
    GapScan(GapScanArgs),
    /// Generate a matrix with planted additive blocks.
    Synth(SynthArgs),
    /// Score a result against planted ground truth.
    Eval(EvalArgs),
    /// Clamp a microarray matrix and keep its most variable genes.
    Preprocess(PreprocessArgs),
    /// Solve a standalone winner determination instance.
    Wdp(WdpArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Tsv,
    Csv,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Matrix file; rows are the exclusive dimension.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Defaults to csv for `.csv` files and tsv otherwise.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    has_header: bool,
    #[arg(long)]
    row_labels: bool,
    /// Transpose after reading (for gene-major files).
    #[arg(long)]
    transpose: bool,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long, default_value_t = 4)]
    min_rows: usize,
    #[arg(long, default_value_t = 4)]
    min_cols: usize,
    /// Biclusters grown per FLOC run.
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    /// Comma-separated multipliers of δ used for harvesting.
    #[arg(long, default_value = "1,0.5,0.25,0.125", value_delimiter = ',')]
    delta_ladder: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    #[arg(long, default_value_t = 0.5)]
    init_prob: f64,
    #[arg(long, value_enum, default_value_t = GainArg::Normalized)]
    gain_rule: GainArg,
    #[arg(long, default_value_t = DEFAULT_CANDIDATE_CAP)]
    candidate_cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GainArg {
    Normalized,
    Printed,
    Floc,
}

#[derive(Debug, Args)]
struct BiclusterArgs {
    #[command(flatten)]
    input: InputArgs,
    /// δ as a fraction of the MSR of the whole matrix.
    #[arg(long, conflicts_with = "delta")]
    delta_frac: Option<f64>,
    /// Absolute δ.
    #[arg(long)]
    delta: Option<f64>,
    #[command(flatten)]
    search: SearchArgs,
    /// Log the rows not covered by any chosen bicluster.
    #[arg(long)]
    report_unclustered: bool,
    /// Record start and finish times in the manifest.
    #[arg(long)]
    timestamps: bool,
    /// Re-run exactly the configuration recorded in a previous result.
    #[arg(long, conflicts_with_all = ["input", "delta", "delta_frac"])]
    from_manifest: Option<PathBuf>,
    /// Output JSON; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GapScanArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, default_value_t = 50)]
    grid_points: usize,
    /// Largest threshold as a fraction of the whole-matrix MSR.
    #[arg(long, default_value_t = 0.5)]
    grid_max_frac: f64,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    #[arg(long)]
    timestamps: bool,
    /// Curve CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary JSON with the selected threshold.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    TenBlocks,
    FiveBlocks,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Key-value spec file.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Overrides the seed of the spec.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_matrix: PathBuf,
    #[arg(long)]
    out_truth: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 100.0)]
    lower: f64,
    #[arg(long, default_value_t = 1600.0)]
    upper: f64,
    #[arg(long, default_value_t = 0.15)]
    top_frac: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct WdpArgs {
    /// Bid file: one `price good good ...` line per bid.
    #[arg(long)]
    bids: PathBuf,
    /// Number of goods; inferred from the largest good when omitted.
    #[arg(long)]
    goods: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit status for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Parse { .. } | Error::TooManyBids { .. } | Error::Io(_) | Error::Json(_) => EXIT_DATA,
    }
}

fn report(code: &str, message: &str) {
    let body = serde_json::json!({ "error": code, "message": message });
    eprintln!("{body}");
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status. Failures print a JSON error object to stderr.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            let _ = e.print();
            report("usage", &e.kind().to_string());
            return EXIT_USAGE;
        }
    };
    if let Err(e) = configure_threads(cli.threads) {
        report(e.code(), &e.to_string());
        return exit_code(&e);
    }
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            report(e.code(), &e.to_string());
            exit_code(&e)
        }
    }
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| {
                Error::invalid(format!("{THREADS_ENV}={v:?} is not a thread count"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::invalid("thread count must be at least 1"));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Bicluster(args) => bicluster(args),
        Command::GapScan(args) => gap(args),
        Command::Synth(args) => synth(args),
        Command::Eval(args) => eval(args),
        Command::Preprocess(args) => preprocess(args),
        Command::Wdp(args) => wdp(args),
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn source_of(args: &InputArgs, path: &Path) -> MatrixSource {
    let format = match args.format {
        Some(FormatArg::Tsv) => Format::Tsv,
        Some(FormatArg::Csv) => Format::Csv,
        None => Format::from_path(path),
    };
    MatrixSource { format, has_header: args.has_header, has_row_labels: args.row_labels }
}

/// Reads the matrix and records its checksum.
fn load(path: &Path, source: MatrixSource, transpose: bool) -> Result<(ExpressionMatrix, InputRecord)> {
    let bytes = fs::read(path)?;
    let mut m = read_matrix(bytes.as_slice(), &source)?;
    if transpose {
        m = m.transpose();
    }
    let record = InputRecord {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
        source,
        transpose,
    };
    Ok((m, record))
}

fn load_input(args: &InputArgs) -> Result<(ExpressionMatrix, InputRecord)> {
    let path = args.input.as_deref().ok_or_else(|| Error::invalid("--input is required"))?;
    load(path, source_of(args, path), args.transpose)
}

fn floc_config(s: &SearchArgs, delta: f64) -> FlocConfig {
    FlocConfig {
        k: s.k,
        delta,
        min_rows: s.min_rows,
        min_cols: s.min_cols,
        max_iters: s.max_iters,
        init_prob: s.init_prob,
        restarts: s.restarts,
        delta_fractions: s.delta_ladder.clone(),
        seed: s.seed,
        gain_rule: match s.gain_rule {
            GainArg::Normalized => GainRule::Normalized,
            GainArg::Printed => GainRule::Printed,
            GainArg::Floc => GainRule::Floc,
        },
    }
}

fn bicluster(args: BiclusterArgs) -> Result<()> {
    let started = now();
    let (a, manifest) = if let Some(path) = &args.from_manifest {
        let previous: serde_json::Value = serde_json::from_slice(&fs::read(path)?)?;
        let manifest: RunManifest = serde_json::from_value(
            previous.get("manifest").cloned().unwrap_or(previous),
        )?;
        let (a, record) =
            load(Path::new(&manifest.input.path), manifest.input.source.clone(), manifest.input.transpose)?;
        if record.sha256 != manifest.input.sha256 {
            return Err(Error::invalid(format!(
                "{} changed since the manifest was written",
                manifest.input.path
            )));
        }
        (a, manifest)
    } else {
        let (a, record) = load_input(&args.input)?;
        let delta_a = matrix_msr(&a);
        let delta = match (args.delta, args.delta_frac) {
            (Some(d), None) => d,
            (None, Some(f)) => {
                if !(f > 0.0) {
                    return Err(Error::invalid("--delta-frac must be positive"));
                }
                f * delta_a
            }
            _ => return Err(Error::invalid("exactly one of --delta and --delta-frac is required")),
        };
        let mut cfg = PipelineConfig::new(floc_config(&args.search, delta));
        cfg.report_unclustered = args.report_unclustered;
        cfg.candidate_cap = args.search.candidate_cap;
        let mut manifest = RunManifest::new("bicluster", record, delta_a, cfg);
        if args.timestamps {
            manifest.started_at_unix = Some(started);
        }
        (a, manifest)
    };
    info!("δ = {} (whole-matrix MSR {})", manifest.config.floc.delta, manifest.delta_a);
    let result = run_exclusive_biclustering(&a, &manifest.config)?;
    let mut manifest = manifest;
    if manifest.started_at_unix.is_some() {
        manifest.finished_at_unix = Some(now());
    }
    let doc = ResultDocument::new(manifest, &result);
    emit(args.out.as_deref(), &to_json(&doc)?)
}

fn gap(args: GapScanArgs) -> Result<()> {
    let started = now();
    let (a, record) = load_input(&args.input)?;
    let delta_a = matrix_msr(&a);
    if !(args.grid_max_frac > 0.0) {
        return Err(Error::invalid("--grid-max-frac must be positive"));
    }
    let grid = linear_grid(args.grid_max_frac * delta_a, args.grid_points)?;
    let cfg = PipelineConfig {
        candidate_cap: args.search.candidate_cap,
        ..PipelineConfig::new(floc_config(&args.search, grid[grid.len() - 1]))
    };
    let scan = gap_scan(&a, &grid, args.replicates, &cfg, args.search.seed)?;
    let mut csv = Vec::new();
    write_gap_csv(&mut csv, &scan)?;
    emit(args.out.as_deref(), &csv)?;

    let mut manifest = RunManifest::new("gap-scan", record, delta_a, cfg);
    manifest.gap = Some(GapSettings {
        grid_points: args.grid_points,
        grid_max_frac: args.grid_max_frac,
        replicates: args.replicates,
    });
    if args.timestamps {
        manifest.started_at_unix = Some(started);
        manifest.finished_at_unix = Some(now());
    }
    let selected_delta = scan.grid[scan.selected_index];
    let doc = GapDocument {
        manifest,
        selected_index: scan.selected_index,
        selected_delta,
        selected_delta_frac: selected_delta / delta_a,
        curve: scan,
    };
    let summary = to_json(&doc)?;
    match &args.summary {
        Some(p) => fs::write(p, summary)?,
        None if args.out.is_some() => emit(None, &summary)?,
        None => eprintln!(
            "selected index {} (1-based {}), delta {}",
            doc.selected_index,
            doc.selected_index + 1,
            doc.selected_delta
        ),
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut spec = match (&args.spec, args.preset) {
        (Some(p), _) => EmbedSpec::from_path(p)?,
        (None, Some(Preset::TenBlocks)) => EmbedSpec::ten_perfect_blocks(0),
        (None, Some(Preset::FiveBlocks)) => EmbedSpec::five_noisy_blocks(0),
        (None, None) => return Err(Error::invalid("--spec or --preset is required")),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let (m, truth) = generate_synthetic(&spec)?;
    let mut buf = Vec::new();
    write_matrix(&mut buf, &m, Format::from_path(&args.out_matrix))?;
    fs::write(&args.out_matrix, buf)?;
    fs::write(&args.out_truth, to_json(&truth)?)?;
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let result: ResultDocument = serde_json::from_slice(&fs::read(&args.result)?)?;
    let truth: GroundTruth = serde_json::from_slice(&fs::read(&args.truth)?)?;
    let report = evaluate(&result.biclusters(), &truth);
    emit(args.out.as_deref(), &to_json(&report)?)
}

fn preprocess(args: PreprocessArgs) -> Result<()> {
    let (m, record) = load_input(&args.input)?;
    let out = preprocess_microarray(&m, args.lower, args.upper, args.top_frac)?;
    info!("kept {} of {} columns", out.n_cols(), m.n_cols());
    let mut buf = Vec::new();
    write_matrix(&mut buf, &out, record.source.format)?;
    fs::write(&args.out, buf)?;
    Ok(())
}

fn wdp(args: WdpArgs) -> Result<()> {
    let auction = Auction::from_path(&args.bids, args.goods)?;
    let allocation = solve_wdp(&auction)?;
    emit(args.out.as_deref(), &to_json(&allocation)?)
}
