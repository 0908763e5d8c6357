//! `hdoms`: build hypervector spectral library indexes and run standard and
//! open modification searches against them.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hdoms_core::config::{RunConfig, CONFIG_ENV_VAR};
use hdoms_core::library_index::{BlockSource, IndexFile};
use hdoms_core::pipeline::{build_library_index, run_search};
use hdoms_core::report::{parse_stats, report_rows, write_csv, RunRecord};
use hdoms_core::spectra_io::{parse_mgf, read_psms, write_mgf, write_psms};
use hdoms_core::synth::{generate, read_truth, write_truth, SynthConfig};
use hdoms_core::{BlockCache, Error};

#[derive(Parser)]
#[command(
    name = "hdoms",
    version,
    about = "Hyperdimensional open modification spectral library search"
)]
struct Cli {
    /// key=value config file; flags override it.
    #[arg(long, global = true, env = CONFIG_ENV_VAR, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a library MGF and write an index file.
    Index {
        library: PathBuf,
        out: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Search a query MGF against an index and write FDR-filtered PSMs.
    Search {
        queries: PathBuf,
        index: PathBuf,
        out: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        /// Also write run statistics as JSON.
        #[arg(long, value_name = "FILE")]
        report_json: Option<PathBuf>,
    },
    /// Generate a synthetic library, perturbed queries and ground truth.
    Synth(SynthArgs),
    /// Tabulate one or more search runs as CSV.
    Report {
        /// `.stats` files written by `search`.
        #[arg(required = true)]
        stats: Vec<PathBuf>,
        /// Ground truth TSV from `synth`, for precision columns.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Output CSV (standard output when omitted).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Default)]
struct RunFlags {
    #[arg(long)]
    bin_size: Option<String>,
    #[arg(long)]
    mz_min: Option<String>,
    #[arg(long)]
    mz_max: Option<String>,
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    max_r: Option<String>,
    #[arg(long)]
    q_block: Option<String>,
    #[arg(long)]
    max_q: Option<String>,
    #[arg(long)]
    tol_ppm: Option<String>,
    #[arg(long)]
    open_tol_da: Option<String>,
    #[arg(long)]
    fdr: Option<String>,
    #[arg(long)]
    cache_budget_bytes: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    decoy_prefix: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    count_comparisons: Option<String>,
}

impl RunFlags {
    fn pairs(&self) -> [(&'static str, &Option<String>); 16] {
        [
            ("bin-size", &self.bin_size),
            ("mz-min", &self.mz_min),
            ("mz-max", &self.mz_max),
            ("levels", &self.levels),
            ("dim", &self.dim),
            ("seed", &self.seed),
            ("max-r", &self.max_r),
            ("q-block", &self.q_block),
            ("max-q", &self.max_q),
            ("tol-ppm", &self.tol_ppm),
            ("open-tol-da", &self.open_tol_da),
            ("fdr", &self.fdr),
            ("cache-budget-bytes", &self.cache_budget_bytes),
            ("workers", &self.workers),
            ("decoy-prefix", &self.decoy_prefix),
            ("count-comparisons", &self.count_comparisons),
        ]
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1000)]
    n_refs: usize,
    #[arg(long, default_value_t = 100)]
    n_queries: usize,
    #[arg(long, default_value_t = 40)]
    peaks_per_spectrum: usize,
    #[arg(long, default_value_t = 0.0)]
    perturb_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    dropout_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    decoy_fraction: f64,
    /// Fraction of queries whose precursor is shifted by up to --max-shift-da.
    #[arg(long, default_value_t = 0.0)]
    shift_fraction: f64,
    #[arg(long, default_value_t = 50.0)]
    max_shift_da: f64,
    #[arg(long, value_delimiter = ',', default_value = "2,3")]
    charges: Vec<u8>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// Exit statuses: 1 usage, 2 I/O, 3 data or format incompatibility.
#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => 1,
            Error::Io(_) | Error::BlockIo { .. } => 2,
            _ => 3,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 2,
        msg: format!("{}: {e}", path.display()),
    }
}

fn with_path(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| {
        let mut f = Failure::from(e);
        f.msg = format!("{}: {}", path.display(), f.msg);
        f
    }
}

fn load_config(file: Option<&Path>, flags: &RunFlags) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
        cfg.apply_kv_text(&text).map_err(|e| Failure {
            code: 1,
            msg: format!("{}: {e}", path.display()),
        })?;
    }
    for (key, value) in flags.pairs() {
        if let Some(v) = value {
            cfg.set(key, v).map_err(|e| Failure {
                code: 1,
                msg: format!("--{key}: {e}"),
            })?;
        }
    }
    Ok(cfg)
}

fn read_spectra(path: &Path, decoy_prefix: &str) -> Result<Vec<hdoms_core::Spectrum>, Failure> {
    let file = File::open(path).map_err(|e| io_failure(path, e))?;
    let parsed = parse_mgf(BufReader::new(file), decoy_prefix).map_err(with_path(path))?;
    if parsed.skipped_no_charge > 0 {
        eprintln!(
            "{}: skipped {} spectra without a usable charge",
            path.display(),
            parsed.skipped_no_charge
        );
    }
    Ok(parsed.spectra)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_failure(path, e))
}

fn cmd_index(
    config: Option<&Path>,
    library: &Path,
    out: &Path,
    flags: &RunFlags,
) -> Result<(), Failure> {
    let cfg = load_config(config, flags)?;
    cfg.validate()?;
    let spectra = read_spectra(library, &cfg.decoy_prefix)?;
    let idx = build_library_index(&spectra, &cfg)?;
    idx.save(out).map_err(with_path(out))?;
    let m = idx.manifest();
    println!("records={} blocks={}", m.num_records(), m.num_blocks());
    for p in &m.partitions {
        let records: u64 = p.blocks.iter().map(|b| u64::from(b.count)).sum();
        println!(
            "charge={} records={records} blocks={}",
            p.charge,
            p.blocks.len()
        );
    }
    Ok(())
}

fn cmd_search(
    config: Option<&Path>,
    queries: &Path,
    index: &Path,
    out: &Path,
    flags: &RunFlags,
    report_json: Option<&Path>,
) -> Result<(), Failure> {
    let mut cfg = load_config(config, flags)?;
    let file = IndexFile::open(index).map_err(with_path(index))?;
    cfg.adopt_index_encoding(file.manifest(), file.item_memory())?;
    cfg.validate()?;
    let spectra = read_spectra(queries, &cfg.decoy_prefix)?;
    let cache = BlockCache::new(&file, cfg.cache_budget_bytes)?;
    let result = run_search(&spectra, &cache, &cfg)?;

    let accepted = result.accepted();
    let mut w = create(out)?;
    write_psms(&accepted, &mut w).map_err(|e| io_failure(out, e))?;

    let psm_name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stats_text = format!(
        "psm_file={psm_name}\ntol_ppm={}\nopen_tol_da={}\nfdr={}\nraw_psms={}\n{}{}",
        cfg.search.tol_ppm,
        cfg.search.open_tol_da,
        cfg.fdr.threshold,
        result.raw_psm_count,
        result.stats.to_kv_text(),
        result.summary.to_kv_text()
    );
    let stats_path = stats_path_for(out);
    fs::write(&stats_path, stats_text).map_err(|e| io_failure(&stats_path, e))?;

    if let Some(path) = report_json {
        let json = serde_json::json!({
            "stats": result.stats,
            "summary": result.summary,
            "config": cfg.to_kv_text().lines().collect::<Vec<_>>(),
        });
        let text = serde_json::to_string_pretty(&json).expect("stats serialize");
        fs::write(path, text + "\n").map_err(|e| io_failure(path, e))?;
    }

    let s = &result.summary;
    println!(
        "queries={} standard_ids={} open_ids={} overlap={} comparisons={}",
        result.stats.queries, s.standard_ids, s.open_ids, s.overlap, result.stats.comparisons
    );
    Ok(())
}

fn stats_path_for(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".stats");
    PathBuf::from(name)
}

fn cmd_synth(a: &SynthArgs) -> Result<(), Failure> {
    let cfg = SynthConfig {
        n_refs: a.n_refs,
        n_queries: a.n_queries,
        peaks_per_spectrum: a.peaks_per_spectrum,
        perturb_rate: a.perturb_rate,
        dropout_rate: a.dropout_rate,
        decoy_fraction: a.decoy_fraction,
        shift_fraction: a.shift_fraction,
        max_shift_da: a.max_shift_da,
        charges: a.charges.clone(),
        seed: a.seed,
        ..Default::default()
    };
    let data = generate(&cfg)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| io_failure(&a.out_dir, e))?;
    let lib = a.out_dir.join("library.mgf");
    let qry = a.out_dir.join("queries.mgf");
    let truth = a.out_dir.join("truth.tsv");
    write_mgf(&data.library, create(&lib)?).map_err(|e| io_failure(&lib, e))?;
    write_mgf(&data.queries, create(&qry)?).map_err(|e| io_failure(&qry, e))?;
    write_truth(&data.truth, create(&truth)?).map_err(|e| io_failure(&truth, e))?;
    println!(
        "library={} queries={}",
        data.library.len(),
        data.queries.len()
    );
    Ok(())
}

fn cmd_report(stats: &[PathBuf], truth: Option<&Path>, out: Option<&Path>) -> Result<(), Failure> {
    let mut runs = Vec::with_capacity(stats.len());
    for path in stats {
        let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
        let kv = parse_stats(&text).map_err(with_path(path))?;
        let psm_name = kv.get("psm_file").ok_or_else(|| Failure {
            code: 3,
            msg: format!("{}: no psm_file entry", path.display()),
        })?;
        let psm_path = path.parent().unwrap_or(Path::new("")).join(psm_name);
        let file = File::open(&psm_path).map_err(|e| io_failure(&psm_path, e))?;
        let psms = read_psms(BufReader::new(file)).map_err(with_path(&psm_path))?;
        runs.push(RunRecord { stats: kv, psms });
    }
    let truth = match truth {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            Some(read_truth(&text).map_err(with_path(path))?)
        }
        None => None,
    };
    let rows = report_rows(&runs, truth.as_deref())?;
    match out {
        Some(path) => write_csv(&rows, create(path)?).map_err(|e| io_failure(path, e)),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_csv(&rows, &mut lock)
                .and_then(|_| lock.flush())
                .map_err(|e| Failure {
                    code: 2,
                    msg: e.to_string(),
                })
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Index { library, out, run } => cmd_index(config, library, out, run),
        Command::Search {
            queries,
            index,
            out,
            run,
            report_json,
        } => cmd_search(config, queries, index, out, run, report_json.as_deref()),
        Command::Synth(args) => cmd_synth(args),
        Command::Report { stats, truth, out } => {
            cmd_report(stats, truth.as_deref(), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
