//! Command-line front end. `execute` takes argv (without the program
//! name) and returns a process exit code: 0 success, 2 usage or config
//! errors, 1 runtime failures. Errors print as a single `error: ...`
//! line on stderr.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::error::{Result, TagclError};
use crate::eval::{evaluate_fewshot, evaluate_zeroshot, EvalOutput};
use crate::graph::{load_dataset, save_dataset};
use crate::synthetic::{generate_synthetic, SyntheticSpec};
use crate::train::{config_hash, gradient_check, pretrain, TrainConfig};

/// Environment variable naming the default root for relative output paths.
pub const OUT_DIR_ENV: &str = "TSA_OUT_DIR";

#[derive(Parser)]
#[command(name = "tagcl", version, about = "Contrastive pretraining and few/zero-shot \
classification on text-attributed graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled text-attributed graph dataset.
    GenSynthetic {
        /// JSON generator spec (unknown fields rejected).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Pretrain the dual encoders on a dataset and write a checkpoint.
    Pretrain {
        /// Dataset directory (nodes.jsonl, edges.tsv, classes.json).
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint output directory.
        #[arg(long)]
        out: PathBuf,
        /// JSON training config (unknown fields rejected); flags below
        /// override fields from the file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        bank_capacity: Option<usize>,
        #[arg(long)]
        force: bool,
    },
    /// Few-shot evaluation of a checkpoint with prompt tuning.
    EvalFewshot {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        way: usize,
        #[arg(long)]
        shot: usize,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional directory for report.json and per-run predictions.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Zero-shot evaluation of a checkpoint.
    EvalZeroshot {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        way: usize,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Blend positive and negative class probabilities; requires a
        /// checkpoint trained with alpha > 0.
        #[arg(long)]
        probability_average: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify analytic gradients against finite differences.
    GradCheck {
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
    },
    /// Print text-bank fill level and a similarity histogram.
    BankStats {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
    /// Evaluate a grid of way/shot settings into a CSV.
    Sweep {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated way counts, e.g. "3,5".
        #[arg(long, default_value = "5")]
        ways: String,
        /// Comma-separated shot counts; 0 means zero-shot.
        #[arg(long, default_value = "0,1,5")]
        shots: String,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Record of the invocation, written into the output directory before any
/// real work starts.
#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    argv: &'a [String],
    config_hash: Option<String>,
    version: &'a str,
}

pub fn execute<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let argv: Vec<String> = args.into_iter().collect();
    let cli = match Cli::try_parse_from(std::iter::once("tagcl".to_string()).chain(argv.iter().cloned())) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e.to_string().lines().next().unwrap_or("bad arguments").to_string();
            eprintln!("error: {}", first.trim_start_matches("error: "));
            return 2;
        }
    };
    match run(cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                TagclError::InvalidArgument(_) | TagclError::Json(_) => 2,
                _ => 1,
            }
        }
    }
}

/// Apply `TSA_OUT_DIR` as the root for relative output paths.
fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

fn prepare_out_dir(path: &Path, force: bool) -> Result<()> {
    if path.exists() {
        let non_empty = fs::read_dir(path)?.next().is_some();
        if non_empty && !force {
            return Err(TagclError::InvalidArgument(format!(
                "output directory {} is not empty; pass --force to overwrite",
                path.display()
            )));
        }
    }
    fs::create_dir_all(path)?;
    Ok(())
}

fn write_run_manifest(
    dir: &Path,
    command: &str,
    argv: &[String],
    config_hash: Option<String>,
) -> Result<()> {
    let manifest = RunManifest {
        command,
        argv,
        config_hash,
        version: env!("CARGO_PKG_VERSION"),
    };
    fs::write(
        dir.join("run_manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| {
        TagclError::InvalidArgument(format!("cannot read {} {}: {e}", what, path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| TagclError::InvalidArgument(format!("bad {} {}: {e}", what, path.display())))
}

fn parse_list(raw: &str, what: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|s| {
            s.trim().parse::<usize>().map_err(|_| {
                TagclError::InvalidArgument(format!("bad {what} list entry `{s}`"))
            })
        })
        .collect()
}

fn write_eval_output(out: &Option<PathBuf>, result: &EvalOutput) -> Result<()> {
    let Some(dir) = out else { return Ok(()) };
    let dir = resolve_out(dir);
    fs::create_dir_all(&dir)?;
    fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&result.report)?,
    )?;
    for (r, records) in result.predictions.iter().enumerate() {
        let mut f = fs::File::create(dir.join(format!("predictions_run{r}.jsonl")))?;
        for rec in records {
            writeln!(f, "{}", serde_json::to_string(rec)?)?;
        }
    }
    Ok(())
}

fn print_report(report: &crate::metrics::EvalReport) {
    println!(
        "runs={} acc_mean={:.4} acc_std={:.4} f1_mean={:.4} f1_std={:.4} seconds={:.2}",
        report.runs.len(),
        report.acc_mean,
        report.acc_std,
        report.f1_mean,
        report.f1_std,
        report.seconds
    );
}

fn run(cli: Cli, argv: &[String]) -> Result<()> {
    match cli.command {
        Command::GenSynthetic { spec, out, force } => {
            let spec: SyntheticSpec = load_json(&spec, "generator spec")?;
            let out = resolve_out(&out);
            prepare_out_dir(&out, force)?;
            write_run_manifest(&out, "gen-synthetic", argv, None)?;
            let graph = generate_synthetic(&spec)?;
            save_dataset(&graph, &out)?;
            println!(
                "wrote {} nodes, {} edges, {} classes to {}",
                graph.node_count(),
                graph.edge_count(),
                graph.class_count(),
                out.display()
            );
            Ok(())
        }
        Command::Pretrain {
            data,
            out,
            config,
            alpha,
            seed,
            epochs,
            lr,
            batch_size,
            bank_capacity,
            force,
        } => {
            let mut cfg: TrainConfig = match config {
                Some(path) => load_json(&path, "training config")?,
                None => TrainConfig::default(),
            };
            if let Some(v) = alpha {
                cfg.alpha = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = epochs {
                cfg.epochs = v;
            }
            if let Some(v) = lr {
                cfg.lr = v;
            }
            if let Some(v) = batch_size {
                cfg.batch_size = v;
            }
            if let Some(v) = bank_capacity {
                cfg.bank_capacity = v;
            }
            cfg.validate()?;
            let out = resolve_out(&out);
            prepare_out_dir(&out, force)?;
            write_run_manifest(&out, "pretrain", argv, Some(config_hash(&cfg)))?;
            let graph = load_dataset(&data)?;
            let (model, trace) = pretrain(&graph, &cfg)?;
            let mut f = fs::File::create(out.join("trace.jsonl"))?;
            for log in &trace {
                writeln!(f, "{}", serde_json::to_string(log)?)?;
            }
            save_checkpoint(&model, &out)?;
            let last = trace.last();
            println!(
                "pretrained {} steps; final total loss {}; checkpoint at {}",
                model.steps_done,
                last.map(|l| format!("{:.6}", l.total)).unwrap_or_else(|| "n/a".into()),
                out.display()
            );
            Ok(())
        }
        Command::EvalFewshot {
            ckpt,
            data,
            way,
            shot,
            runs,
            seed,
            out,
        } => {
            if shot == 0 {
                return Err(TagclError::InvalidArgument(
                    "--shot 0 is the zero-shot setting; use the eval-zeroshot command".into(),
                ));
            }
            let model = load_checkpoint(&ckpt)?;
            let graph = load_dataset(&data)?;
            let result = evaluate_fewshot(&model, &graph, way, shot, runs, seed)?;
            write_eval_output(&out, &result)?;
            print_report(&result.report);
            Ok(())
        }
        Command::EvalZeroshot {
            ckpt,
            data,
            way,
            runs,
            seed,
            probability_average,
            out,
        } => {
            let model = load_checkpoint(&ckpt)?;
            let graph = load_dataset(&data)?;
            let result =
                evaluate_zeroshot(&model, &graph, way, runs, seed, probability_average)?;
            write_eval_output(&out, &result)?;
            print_report(&result.report);
            Ok(())
        }
        Command::GradCheck { alpha } => {
            let report = gradient_check(alpha)?;
            for g in &report.groups {
                println!(
                    "{}: max_rel_err={:.3e} {}",
                    g.group,
                    g.max_rel_err,
                    if g.pass { "PASS" } else { "FAIL" }
                );
            }
            if report.all_pass() {
                Ok(())
            } else {
                Err(TagclError::Numerical(
                    "gradient check failed; see per-group report above".into(),
                ))
            }
        }
        Command::BankStats { ckpt, bins } => {
            if bins == 0 {
                return Err(TagclError::InvalidArgument("bins must be positive".into()));
            }
            let model = load_checkpoint(&ckpt)?;
            let (fill, capacity, hist) = model.bank.stats(bins);
            println!(
                "fill={fill} capacity={capacity} total_pushed={}",
                model.bank.total_pushed()
            );
            for (i, count) in hist.iter().enumerate() {
                let lo = -1.0 + 2.0 * i as f64 / bins as f64;
                let hi = lo + 2.0 / bins as f64;
                println!("[{lo:+.2},{hi:+.2}) {count}");
            }
            Ok(())
        }
        Command::Sweep {
            ckpt,
            data,
            ways,
            shots,
            runs,
            seed,
            out,
        } => {
            let ways = parse_list(&ways, "way")?;
            let shots = parse_list(&shots, "shot")?;
            if ways.is_empty() || shots.is_empty() {
                return Err(TagclError::InvalidArgument(
                    "ways and shots must be nonempty".into(),
                ));
            }
            let model = load_checkpoint(&ckpt)?;
            let graph = load_dataset(&data)?;
            let out = resolve_out(&out);
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)?;
                }
            }
            let mut csv = String::from("way,shot,acc_mean,acc_std,f1_mean,f1_std\n");
            for &way in &ways {
                for &shot in &shots {
                    let report = if shot == 0 {
                        evaluate_zeroshot(
                            &model,
                            &graph,
                            way,
                            runs,
                            seed,
                            model.neg_enc.is_some(),
                        )?
                        .report
                    } else {
                        evaluate_fewshot(&model, &graph, way, shot, runs, seed)?.report
                    };
                    csv.push_str(&format!(
                        "{way},{shot},{:.6},{:.6},{:.6},{:.6}\n",
                        report.acc_mean, report.acc_std, report.f1_mean, report.f1_std
                    ));
                    println!(
                        "way={way} shot={shot} acc_mean={:.4} f1_mean={:.4}",
                        report.acc_mean, report.f1_mean
                    );
                }
            }
            fs::write(&out, csv)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

// Integration coverage lives in tests/cli.rs.
#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn no_subcommand_is_usage_error() {
        assert_eq!(execute(args(&[])), 2);
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(execute(args(&["grad-check", "--bogus"])), 2);
    }

    #[test]
    fn fewshot_shot_zero_redirects() {
        let code = execute(args(&[
            "eval-fewshot",
            "--ckpt",
            "/nonexistent",
            "--data",
            "/nonexistent",
            "--way",
            "3",
            "--shot",
            "0",
        ]));
        assert_eq!(code, 2);
    }

    #[test]
    fn parse_list_rejects_garbage() {
        assert!(parse_list("3,x", "way").is_err());
        assert_eq!(parse_list("3, 5", "way").unwrap(), vec![3, 5]);
    }
}
