//! Command-line front end: `validate`, `run`, and `fi-map`.
//!
//! Exit codes: 0 success, 2 validation failure, 3 existence-region failure,
//! 4 I/O. Every output file embeds the configuration hash and seed, and
//! identical seeds reproduce byte-identical artifacts.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::QlossError;
use crate::fock::FockCutoff;
use crate::harness::{
    consistency_table, mse_vs_qcrb_curve, normality_test, qfi_at_truth, run_sweep, NTrials,
};
use crate::twostage::TrialRecord;
use crate::validate::{run_all, ValidateOptions};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "qloss", version, about = "Two-stage transmittance estimation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the fast invariant suite and print one pass/fail line per check.
    Validate {
        /// Per-mode photon cutoff for the suite.
        #[arg(long, default_value_t = 25)]
        cutoff: usize,
        /// Tail tolerance for the cutoff certificates.
        #[arg(long, default_value_t = 1e-8)]
        tail_tol: f64,
        /// Mutation probe: flip the squeezer sign in one p.m.f. route; the
        /// route-agreement check must then fail.
        #[arg(long, hide = true)]
        inject_squeezer_sign_flip: bool,
    },
    /// Execute the configured sweep and write trial archives and summaries.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Recompute summaries from an existing trial archive instead of
        /// simulating.
        #[arg(long)]
        from_archive: Option<PathBuf>,
    },
    /// Write the classical Fisher information landscape over receiver
    /// settings.
    FiMap {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

/// Exit-code mapping: 0 success, 2 validation failure, 3 existence-region
/// failure, 4 I/O.
pub fn exit_code(e: &QlossError) -> i32 {
    match e {
        QlossError::ExistenceRegion { .. } => 3,
        QlossError::SweepFailed {
            existence: true, ..
        } => 3,
        QlossError::Io(_) => 4,
        _ => 2,
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

pub fn main_with(cli: Cli) -> i32 {
    match cli.command {
        Command::Validate {
            cutoff,
            tail_tol,
            inject_squeezer_sign_flip,
        } => cmd_validate(cutoff, tail_tol, inject_squeezer_sign_flip),
        Command::Run {
            config,
            seed,
            workers,
            out_dir,
            from_archive,
        } => match cmd_run(&config, seed, workers, out_dir, from_archive) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
        Command::FiMap {
            config,
            seed,
            workers,
            out_dir,
        } => match cmd_fi_map(&config, seed, workers, out_dir) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
    }
}

pub fn cmd_validate(cutoff: usize, tail_tol: f64, inject: bool) -> i32 {
    let cutoff = match FockCutoff::new(cutoff, tail_tol) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let opts = ValidateOptions {
        cutoff,
        inject_squeezer_sign_flip: inject,
    };
    let results = run_all(&opts);
    let mut failed = 0usize;
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        println!("{tag} {} - {}", r.name, r.detail);
        if !r.passed {
            failed += 1;
        }
    }
    if failed == 0 {
        println!("all {} checks passed", results.len());
        0
    } else {
        println!("{failed} of {} checks failed", results.len());
        2
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Manifest {
    config_hash: String,
    seed: u64,
    version: String,
}

#[derive(serde::Serialize, serde::Deserialize)]
#[serde(tag = "record")]
enum ArchiveLine {
    #[serde(rename = "manifest")]
    Manifest(Manifest),
    #[serde(rename = "trial")]
    Trial(TrialRecord),
}

fn load_config(
    path: &Path,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
) -> Result<ExperimentConfig, QlossError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = out_dir {
        cfg.output.out_dir = d.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn write_manifest(dir: &Path, cfg: &ExperimentConfig) -> Result<(), QlossError> {
    let manifest = Manifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        version: VERSION.to_string(),
    };
    let mut f = std::fs::File::create(dir.join("manifest.json"))?;
    writeln!(f, "{}", serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    Ok(())
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.12e}")
    }
}

pub fn cmd_run(
    path: &Path,
    seed: Option<u64>,
    workers: Option<usize>,
    out_dir: Option<PathBuf>,
    from_archive: Option<PathBuf>,
) -> Result<(), QlossError> {
    let cfg = load_config(path, seed, out_dir)?;
    let spec = cfg.sweep_spec()?;
    let dir = PathBuf::from(&cfg.output.out_dir);
    std::fs::create_dir_all(&dir)?;

    let sweep: Vec<NTrials> = match from_archive {
        Some(archive) => read_archive(&archive, &cfg)?,
        None => {
            // The refinement space must sit inside the receiver existence
            // region; its lower edge is the worst case.
            crate::receiver::select_omega(
                spec.base.theta_lo,
                spec.base.channel.gamma,
                &spec.base.channel,
                spec.base.cutoff,
            )?;
            let workers = workers.unwrap_or_else(default_workers);
            let sweep = run_sweep(&spec, workers)?;
            for nt in &sweep {
                if nt.records.is_empty() {
                    let first = nt
                        .failures
                        .first()
                        .map(|(_, m)| m.clone())
                        .unwrap_or_default();
                    let existence = first.contains("existence");
                    return Err(QlossError::SweepFailed {
                        n_total: nt.n_total,
                        n_trials: nt.failures.len(),
                        first,
                        existence,
                    });
                }
            }
            write_archive(&dir.join("trials.jsonl"), &cfg, &sweep)?;
            sweep
        }
    };

    write_summary(&dir.join("summary.csv"), &cfg, &sweep)?;
    write_manifest(&dir, &cfg)?;
    for nt in &sweep {
        println!(
            "n = {}:, {} trials, {} failures",
            nt.n_total,
            nt.records.len(),
            nt.failures.len()
        );
    }
    println!("artifacts written to {}", dir.display());
    Ok(())
}

fn write_archive(
    path: &Path,
    cfg: &ExperimentConfig,
    sweep: &[NTrials],
) -> Result<(), QlossError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let head = ArchiveLine::Manifest(Manifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        version: VERSION.to_string(),
    });
    writeln!(f, "{}", serde_json::to_string(&head).expect("manifest serializes"))?;
    for nt in sweep {
        for r in &nt.records {
            let line = ArchiveLine::Trial(r.clone());
            writeln!(f, "{}", serde_json::to_string(&line).expect("record serializes"))?;
        }
    }
    Ok(())
}

fn read_archive(path: &Path, cfg: &ExperimentConfig) -> Result<Vec<NTrials>, QlossError> {
    let text = std::fs::read_to_string(path)?;
    let mut records: Vec<TrialRecord> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ArchiveLine = serde_json::from_str(line)
            .map_err(|e| QlossError::InvalidConfig(format!("archive line: {e}")))?;
        match parsed {
            ArchiveLine::Manifest(m) => {
                if m.config_hash != cfg.hash() {
                    return Err(QlossError::InvalidConfig(
                        "archive was produced by a different configuration".into(),
                    ));
                }
            }
            ArchiveLine::Trial(r) => records.push(r),
        }
    }
    let mut ns: Vec<usize> = records.iter().map(|r| r.n_total).collect();
    ns.sort_unstable();
    ns.dedup();
    Ok(ns
        .into_iter()
        .map(|n| NTrials {
            n_total: n,
            records: records.iter().filter(|r| r.n_total == n).cloned().collect(),
            failures: Vec::new(),
        })
        .collect())
}

fn write_summary(
    path: &Path,
    cfg: &ExperimentConfig,
    sweep: &[NTrials],
) -> Result<(), QlossError> {
    let channel = cfg.channel_params()?;
    let cutoff = cfg.fock_cutoff()?;
    let qfi = qfi_at_truth(&channel, cutoff)?;
    let table = consistency_table(sweep);
    let mse = mse_vs_qcrb_curve(sweep, qfi);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# config_hash={} seed={} version={}", cfg.hash(), cfg.seed, VERSION)?;
    writeln!(f, "n, f_n, rms_prelim, rms_refine, n_mse, qcrb_inv, ks_stat, var_ratio")?;
    for (row, mrow) in table.rows.iter().zip(&mse) {
        let nt = sweep
            .iter()
            .find(|nt| nt.n_total == row.n_total)
            .expect("row comes from sweep");
        let (ks, var_ratio) = if cfg.metrics.normality {
            match normality_test(nt, qfi) {
                Ok(rep) => (rep.ks_stat, rep.var_ratio),
                Err(_) => (f64::NAN, f64::NAN),
            }
        } else {
            (f64::NAN, f64::NAN)
        };
        let (rms_p, rms_r) = if cfg.metrics.consistency {
            (row.rms_prelim, row.rms_refine)
        } else {
            (f64::NAN, f64::NAN)
        };
        let n_mse = if cfg.metrics.mse { mrow.n_mse } else { f64::NAN };
        writeln!(
            f,
            "{}, {}, {}, {}, {}, {}, {}, {}",
            row.n_total,
            row.f_n,
            fmt(rms_p),
            fmt(rms_r),
            fmt(n_mse),
            fmt(1.0 / qfi),
            fmt(ks),
            fmt(var_ratio),
        )?;
    }
    Ok(())
}

pub fn cmd_fi_map(
    path: &Path,
    seed: Option<u64>,
    workers: Option<usize>,
    out_dir: Option<PathBuf>,
) -> Result<(), QlossError> {
    let cfg = load_config(path, seed, out_dir)?;
    let channel = cfg.channel_params()?;
    let cutoff = cfg.fock_cutoff()?;
    let omegas = cfg.omega_grid();
    let gammas = cfg.gamma_err_grid();
    let workers = workers.unwrap_or_else(default_workers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| QlossError::InvalidConfig(format!("worker pool: {e}")))?;
    let land = pool.install(|| crate::harness::fi_landscape(&channel, &omegas, &gammas, cutoff))?;

    let dir = PathBuf::from(&cfg.output.out_dir);
    std::fs::create_dir_all(&dir)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("fi_map.csv"))?);
    writeln!(f, "# config_hash={} seed={} version={}", cfg.hash(), cfg.seed, VERSION)?;
    writeln!(f, "# qfi={}", fmt(land.qfi))?;
    let omega_row: Vec<String> = land.omega_grid.iter().map(|&w| fmt(w)).collect();
    writeln!(f, "omega_axis, {}", omega_row.join(", "))?;
    for (j, &g) in land.gamma_err_grid.iter().enumerate() {
        let row: Vec<String> = (0..land.omega_grid.len())
            .map(|i| fmt(land.cfi[[i, j]]))
            .collect();
        writeln!(f, "{}, {}", fmt(g), row.join(", "))?;
    }
    drop(f);
    write_manifest(&dir, &cfg)?;
    println!(
        "fi-map: max CFI/QFI = {:.6} at omega = {:.4}, gamma error = {:.4}",
        land.max_ratio,
        land.omega_grid[land.argmax.0],
        land.gamma_err_grid[land.argmax.1]
    );
    Ok(())
}

pub fn main() -> i32 {
    main_with(Cli::parse())
}
