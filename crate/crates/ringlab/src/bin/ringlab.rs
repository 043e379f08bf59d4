//! Batch command-line surface: chain generation, deduction attacks,
//! closed-form metrics, Monte Carlo simulation, and spend-time fitting.
//!
//! Every command is deterministic under fixed flags and seed; each written
//! report gets a `.manifest.json` sidecar recording the command, seed, tool
//! version and input/output digests. Usage errors exit 2, data errors 1.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use ringlab::chain::{Chain, GroundTruth};
use ringlab::chaingen::{generate_chain, write_chain, GenConfig, SpendTimeModel};
use ringlab::deduction::{closure_deduce, fixpoint_deduce, mixin_breakdown, write_report};
use ringlab::montecarlo::{
    fit_gamma_log_spendtime, ks_distance, simulate_policy, SimConfig,
};
use ringlab::sampling::Policy;
use ringlab::temporal::{bge_min, ge_min, write_min_untraceability_csv};

#[derive(Parser)]
#[command(name = "ringlab", version, about = "Ring-transaction traceability laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic chain plus ground truth from a JSON config.
    Generate {
        /// JSON config file mirroring the generator parameters.
        #[arg(long)]
        config: PathBuf,
        /// Output path prefix; writes <prefix>.chain.jsonl and <prefix>.truth.jsonl.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the deducibility attack over a chain file.
    Deduce {
        #[arg(long)]
        chain: PathBuf,
        /// Also run the complete closure solver after the fixpoint.
        #[arg(long)]
        closure: bool,
        /// Skip residual components with more inputs than this.
        #[arg(long, default_value_t = 10_000)]
        component_limit: usize,
        /// Score against a ground-truth file and print precision/recall
        /// plus a per-mixin-count breakdown.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo policy evaluation over a chain file.
    Simulate {
        #[arg(long)]
        chain: PathBuf,
        /// Policy spec, e.g. v0_10_1, gamma:19.28,1.61, binned:2,gamma.
        #[arg(long)]
        policy: String,
        /// Mixin counts: a single value, a..b range, or a comma list.
        #[arg(long, default_value = "4")]
        mixins: String,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        /// Fixed block height for all trials (defaults to the chain tip).
        #[arg(long)]
        height: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        denom: u64,
        /// Spend-age model: gamma over log-seconds with this shape...
        #[arg(long, default_value_t = 19.28)]
        spend_shape: f64,
        /// ...and this rate.
        #[arg(long, default_value_t = 1.61)]
        spend_rate: f64,
        /// Override the gamma spend model with observed spend times
        /// (one value in seconds per line).
        #[arg(long)]
        spend_times: Option<PathBuf>,
        /// Ring samples used to estimate the policy's mixin-age density.
        #[arg(long, default_value_t = 20_000)]
        density_samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form untraceability metrics.
    Metrics {
        /// Emit the full min-untraceability table as CSV.
        #[arg(long, conflicts_with_all = ["ge", "bge"])]
        min_table: bool,
        /// ge <mixins> <epsilon>: worst-case guessing entropy.
        #[arg(long, num_args = 2, value_names = ["M", "EPS"])]
        ge: Option<Vec<f64>>,
        /// bge <bin_size> <num_bins> <epsilon>: binned worst case.
        #[arg(long, num_args = 3, value_names = ["S", "N", "EPS"])]
        bge: Option<Vec<f64>>,
        /// Output CSV path for --min-table (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a gamma model to observed spend times (log-seconds MLE).
    Fit {
        /// CSV/text file with one spend time in seconds per line.
        #[arg(long)]
        spendtimes: PathBuf,
    },
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    args: Vec<String>,
    tool_version: &'static str,
    seed: Option<u64>,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    wall_time_s: f64,
}

fn sha256_file(path: &Path) -> Result<String, std::io::Error> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn digest(paths: &[&Path]) -> Result<Vec<FileDigest>, std::io::Error> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

fn write_manifest(
    primary_output: &Path,
    command: &str,
    seed: Option<u64>,
    inputs: &[&Path],
    outputs: &[&Path],
    started: Instant,
) -> Result<(), std::io::Error> {
    let manifest = RunManifest {
        command: command.to_string(),
        args: std::env::args().skip(1).collect(),
        tool_version: env!("CARGO_PKG_VERSION"),
        seed,
        inputs: digest(inputs)?,
        outputs: digest(outputs)?,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let path = PathBuf::from(format!("{}.manifest.json", primary_output.display()));
    std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn parse_mixins(spec: &str) -> Result<Vec<u64>, String> {
    let spec = spec.trim();
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.parse().map_err(|_| format!("bad mixin range start {a:?}"))?;
        let b: u64 = b.parse().map_err(|_| format!("bad mixin range end {b:?}"))?;
        if a > b {
            return Err(format!("empty mixin range {spec:?}"));
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| format!("bad mixin count {s:?}"))
        })
        .collect()
}

fn read_numbers(path: &Path) -> Result<Vec<f64>, String> {
    let text =
        std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        // Accept one-column CSV with an optional non-numeric header.
        match line.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => {}
            Err(_) => return Err(format!("{}:{}: not a number: {line:?}", path.display(), i + 1)),
        }
    }
    if out.is_empty() {
        return Err(format!("{}: no values", path.display()));
    }
    Ok(out)
}

fn run() -> Result<(), String> {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("RINGLAB_THREADS") {
        let n: usize = threads
            .parse()
            .map_err(|_| format!("RINGLAB_THREADS must be an integer, got {threads:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    let started = Instant::now();
    match cli.command {
        Command::Generate { config, out } => {
            let cfg = GenConfig::read_json(&config).map_err(|e| e.to_string())?;
            let (chain, gt) = generate_chain(&cfg).map_err(|e| e.to_string())?;
            let (chain_path, truth_path) =
                write_chain(&chain, &gt, &out).map_err(|e| e.to_string())?;
            write_manifest(
                &chain_path,
                "generate",
                Some(cfg.seed),
                &[&config],
                &[&chain_path, &truth_path],
                started,
            )
            .map_err(|e| e.to_string())?;
            println!(
                "generated {} blocks, {} inputs -> {}",
                chain.blocks().len(),
                chain.num_inputs(),
                chain_path.display()
            );
        }
        Command::Deduce {
            chain,
            closure,
            component_limit,
            ground_truth,
            out,
        } => {
            let c = Chain::read_jsonl(&chain).map_err(|e| e.to_string())?;
            let result = if closure {
                closure_deduce(&c, component_limit)
            } else {
                fixpoint_deduce(&c)
            }
            .map_err(|e| e.to_string())?;
            let f = std::fs::File::create(&out).map_err(|e| e.to_string())?;
            write_report(&c, &result, f).map_err(|e| e.to_string())?;
            println!(
                "deduced {} of {} inputs ({} ruled-out entries, {} components skipped)",
                result.deduced.len(),
                c.num_inputs(),
                result.ruled_out.len(),
                result.stats.components_skipped
            );
            let mut inputs: Vec<&Path> = vec![chain.as_path()];
            if let Some(gt_path) = &ground_truth {
                let gt = GroundTruth::read_jsonl(gt_path).map_err(|e| e.to_string())?;
                c.validate_ground_truth(&gt).map_err(|e| e.to_string())?;
                let (precision, recall) = result.precision_recall(&gt);
                println!("precision {precision:.4} recall {recall:.4}");
                println!("mixins,total,deduced,fraction");
                for (m, total, ded) in mixin_breakdown(&c, &result) {
                    println!("{m},{total},{ded},{:.4}", ded as f64 / total as f64);
                }
                inputs.push(gt_path.as_path());
            }
            write_manifest(&out, "deduce", None, &inputs, &[&out], started)
                .map_err(|e| e.to_string())?;
        }
        Command::Simulate {
            chain,
            policy,
            mixins,
            trials,
            height,
            seed,
            denom,
            spend_shape,
            spend_rate,
            spend_times,
            density_samples,
            out,
        } => {
            let c = Chain::read_jsonl(&chain).map_err(|e| e.to_string())?;
            let policy: Policy = policy.parse().map_err(|e| format!("{e}"))?;
            let mixin_counts = parse_mixins(&mixins)?;
            let height = height.unwrap_or_else(|| c.tip_height());
            if height > c.tip_height() {
                return Err(format!(
                    "height {height} beyond chain tip {}",
                    c.tip_height()
                ));
            }
            let mut input_paths: Vec<&Path> = vec![chain.as_path()];
            let spend_time_model = match &spend_times {
                Some(p) => {
                    input_paths.push(p.as_path());
                    SpendTimeModel::Empirical {
                        samples: read_numbers(p)?,
                    }
                }
                None => SpendTimeModel::GammaLogSeconds {
                    shape: spend_shape,
                    rate: spend_rate,
                },
            };
            let cfg = SimConfig {
                policy,
                mixin_counts,
                trials,
                height,
                denom,
                seed,
                spend_time_model,
                density_samples,
            };
            let report = simulate_policy(c.index(), &cfg).map_err(|e| e.to_string())?;
            let f = std::fs::File::create(&out).map_err(|e| e.to_string())?;
            report.write_csv(f).map_err(|e| e.to_string())?;
            write_manifest(&out, "simulate", Some(seed), &input_paths, &[&out], started)
                .map_err(|e| e.to_string())?;
            println!("wrote {} points -> {}", report.points.len(), out.display());
        }
        Command::Metrics {
            min_table,
            ge,
            bge,
            out,
        } => match (min_table, ge, bge) {
            (true, None, None) => {
                match &out {
                    Some(path) => {
                        let f = std::fs::File::create(path).map_err(|e| e.to_string())?;
                        write_min_untraceability_csv(f).map_err(|e| e.to_string())?;
                        write_manifest(path, "metrics", None, &[], &[path], started)
                            .map_err(|e| e.to_string())?;
                    }
                    None => {
                        write_min_untraceability_csv(std::io::stdout().lock())
                            .map_err(|e| e.to_string())?;
                    }
                }
            }
            (false, Some(args), None) => {
                let (m, eps) = (args[0], args[1]);
                if m < 0.0 || m.fract() != 0.0 || !(0.0..=1.0).contains(&eps) {
                    return Err("usage: --ge <mixins:int> <epsilon in [0,1]>".into());
                }
                let v = ge_min(m as u64, eps);
                println!("ge_min={v:.6} min_untraceability={:.6}", 1.0 + 2.0 * v);
            }
            (false, None, Some(args)) => {
                let (s, n, eps) = (args[0], args[1], args[2]);
                if s < 1.0 || s.fract() != 0.0 || n < 1.0 || n.fract() != 0.0
                    || !(0.0..=1.0).contains(&eps)
                {
                    return Err(
                        "usage: --bge <bin_size:int> <num_bins:int> <epsilon in [0,1]>".into(),
                    );
                }
                let v = bge_min(s as u64, n as u64, eps);
                println!("bge_min={v:.6} min_untraceability={:.6}", 1.0 + 2.0 * v);
            }
            _ => return Err("metrics: pass exactly one of --min-table, --ge, --bge".into()),
        },
        Command::Fit { spendtimes } => {
            let times = read_numbers(&spendtimes)?;
            let (shape, rate) = fit_gamma_log_spendtime(&times).map_err(|e| e.to_string())?;
            let fitted = statrs::distribution::Gamma::new(shape, rate)
                .map_err(|e| e.to_string())?;
            let logs: Vec<f64> = times.iter().map(|&t| t.ln()).collect();
            let ks = ks_distance(&logs, |x| {
                use statrs::distribution::ContinuousCDF;
                fitted.cdf(x.max(0.0))
            });
            println!("shape={shape:.4} rate={rate:.4} ks={ks:.4}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            let mut err = std::io::stderr().lock();
            let _ = writeln!(err, "error: {msg}");
            ExitCode::FAILURE
        }
    }
}
