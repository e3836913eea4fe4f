use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use disep::config::RunConfig;
use disep::harness::{
    ablation_sweep, checkpoint, evaluate_samples, parse_values, predict, summary_csv, test_samples, train,
    validation_samples, AblationAxis, MetricReport,
};
use disep::io::{write_instance_pgm, write_mask_pgm};
use disep::retrieve::connectivity_search;
use disep::synth::generate_split;
use disep::BinaryMask;

#[derive(Parser)]
#[command(name = "disep", version, about = "Dense instance separation for weakly-supervised change detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key = value configuration file; defaults apply when omitted
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one key; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides out_dir)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed (overrides seed; for ablate, the single seed to sweep)
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the train, validation and test splits as PPM/PGM files
    GenData(Common),
    /// Train and write the checkpoint, CSV log and resolved config
    Train(Common),
    /// Evaluate a checkpoint on the validation and test splits
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Write prediction, ground-truth and instance PGMs per test sample
        #[arg(long)]
        dump_masks: bool,
    },
    /// Sweep one axis (alpha, thresholds, scope) over the configured seeds
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: String,
        /// Comma-separated values; threshold pairs as t_high:t_low
        #[arg(long)]
        values: String,
    },
}

/// Usage and configuration problems exit with 1, failures while running with 2.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome<T = ()> = Result<T, Failure>;

trait Classify<T> {
    fn usage(self) -> Outcome<T>;
    fn runtime(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Outcome<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
    fn runtime(self) -> Outcome<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::GenData(c) => gen_data(&c),
        Command::Train(c) => cmd_train(&c),
        Command::Eval { common, checkpoint, dump_masks } => cmd_eval(&common, &checkpoint, dump_masks),
        Command::Ablate { common, axis, values } => cmd_ablate(&common, &axis, &values),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn resolve(c: &Common) -> Outcome<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::from_file(path).usage()?,
        None => RunConfig::default(),
    };
    for s in &c.set {
        cfg.apply_override(s).usage()?;
    }
    if let Some(seed) = c.seed {
        cfg.apply_override(&format!("seed={seed}")).usage()?;
    }
    if let Some(out) = &c.out {
        let out = out.to_str().ok_or_else(|| anyhow!("output path is not valid UTF-8")).usage()?;
        cfg.apply_override(&format!("out_dir={out}")).usage()?;
    }
    Ok(cfg)
}

fn prepare_out(cfg: &RunConfig) -> Outcome<PathBuf> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .usage()?;
    fs::write(dir.join("config.resolved"), cfg.snapshot())
        .context("cannot write resolved config")
        .runtime()?;
    Ok(dir)
}

fn unix_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Timestamps live here so every other artifact stays reproducible.
fn write_metadata(dir: &Path, command: &str, started: u64, clock: Instant) -> Outcome {
    let text = format!(
        "command = {command}\nstarted_unix = {started}\nfinished_unix = {}\nelapsed_seconds = {:.3}\n",
        unix_seconds(),
        clock.elapsed().as_secs_f64()
    );
    fs::write(dir.join("metadata.txt"), text).context("cannot write metadata").runtime()
}

fn gen_data(c: &Common) -> Outcome {
    let (started, clock) = (unix_seconds(), Instant::now());
    let cfg = resolve(c)?;
    let tc = cfg.train_config().usage()?;
    let dir = prepare_out(&cfg)?;
    let split = generate_split(&tc.synth, tc.n_train, tc.n_val, tc.n_test).runtime()?;
    let ranges = tc.splits();
    for (name, samples, first) in [
        ("train", &split.train, ranges.train.start),
        ("val", &split.val, ranges.val.start),
        ("test", &split.test, ranges.test.start),
    ] {
        disep::synth::dump_samples(&dir.join(name), first, samples).runtime()?;
    }
    println!(
        "wrote {} train, {} val, {} test samples to {}",
        split.train.len(),
        split.val.len(),
        split.test.len(),
        dir.display()
    );
    write_metadata(&dir, "gen-data", started, clock)
}

fn cmd_train(c: &Common) -> Outcome {
    let (started, clock) = (unix_seconds(), Instant::now());
    let cfg = resolve(c)?;
    let tc = cfg.train_config().usage()?;
    let dir = prepare_out(&cfg)?;
    let out = train(&tc).context("training aborted").runtime()?;
    fs::write(dir.join("train_log.csv"), out.csv()).context("cannot write log").runtime()?;
    checkpoint::save(&dir.join("model.bin"), &out.params).context("cannot write checkpoint").runtime()?;
    let v = &out.final_val;
    println!(
        "final validation: f1={} oa={} iou={} instance_count_mae={}",
        v.f1, v.oa, v.iou, v.instance_count_mae
    );
    write_metadata(&dir, "train", started, clock)
}

fn cmd_eval(c: &Common, ckpt: &Path, dump_masks: bool) -> Outcome {
    let (started, clock) = (unix_seconds(), Instant::now());
    let cfg = resolve(c)?;
    let tc = cfg.train_config().usage()?;
    let params = checkpoint::load(ckpt, tc.model)
        .with_context(|| format!("cannot load checkpoint {}", ckpt.display()))
        .runtime()?;
    let dir = prepare_out(&cfg)?;

    let val = evaluate_samples(&params, &validation_samples(&tc).runtime()?, &tc.thresholds, tc.supervision)
        .runtime()?;
    let test_set = test_samples(&tc).runtime()?;
    let test = evaluate_samples(&params, &test_set, &tc.thresholds, tc.supervision).runtime()?;

    // same columns and formatting as the training log
    println!("val_f1,val_oa,val_iou,val_inst_mae");
    println!("{},{},{},{}", val.f1, val.oa, val.iou, val.instance_count_mae);
    println!("split,f1,oa,iou,precision,recall,instance_count_mae");
    let mut summary = String::from("split,f1,oa,iou,precision,recall,instance_count_mae\n");
    for (name, r) in [("val", &val), ("test", &test)] {
        let line = summary_line(name, r);
        println!("{line}");
        summary.push_str(&line);
        summary.push('\n');
    }
    fs::write(dir.join("eval_summary.csv"), summary).runtime()?;
    fs::write(dir.join("eval_test_samples.csv"), test.rows_csv()).runtime()?;

    if dump_masks {
        let mask_dir = dir.join("masks");
        fs::create_dir_all(&mask_dir).runtime()?;
        for (index, s) in &test_set {
            let pred = predict(&params, s, &tc.thresholds, tc.supervision).runtime()?;
            let gt = s.gt.clone().unwrap_or_else(|| BinaryMask::filled(s.dims(), false));
            let (pred_ids, _) = connectivity_search(&pred);
            let file = |suffix: &str| fs::File::create(mask_dir.join(format!("{index:05}_{suffix}.pgm")));
            write_mask_pgm(file("pred").runtime()?, &pred).runtime()?;
            write_mask_pgm(file("gt").runtime()?, &gt).runtime()?;
            write_instance_pgm(file("pred_instances").runtime()?, &pred_ids).runtime()?;
        }
    }
    write_metadata(&dir, "eval", started, clock)
}

fn summary_line(name: &str, r: &MetricReport) -> String {
    format!("{name},{},{},{},{},{},{}", r.f1, r.oa, r.iou, r.precision, r.recall, r.instance_count_mae)
}

fn cmd_ablate(c: &Common, axis: &str, values: &str) -> Outcome {
    let (started, clock) = (unix_seconds(), Instant::now());
    let axis: AblationAxis = axis.parse().usage()?;
    let values = parse_values(axis, values).usage()?;
    let mut cfg = resolve(c)?;
    if let Some(seed) = c.seed {
        cfg.apply_override(&format!("seeds={seed}")).usage()?;
    }
    let tc = cfg.train_config().usage()?;
    let dir = prepare_out(&cfg)?;
    let rows = ablation_sweep(&tc, &cfg.seeds(), axis, &values).context("ablation aborted").runtime()?;
    let csv = summary_csv(&rows);
    fs::write(dir.join(format!("ablation_{axis}.csv")), &csv).runtime()?;
    print!("{csv}");
    write_metadata(&dir, "ablate", started, clock)
}
