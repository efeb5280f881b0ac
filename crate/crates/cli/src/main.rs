mod config;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{Defaults, Experiment, ExperimentFile, LayoutSource, RUN_DEFAULTS, SCALE_DEFAULTS, TRAIN_DEFAULTS};
use dcmrta::exec;
use dcmrta::report::{format_summary, summarize, write_metrics_csv, write_summary_csv, MetricsRecord};
use dcmrta::rl::{evaluate, train_with, AllocatorKind, Checkpoint, RewardMode, SimEnv};
use dcmrta::world::Layout;
use serde::Serialize;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "dcmrta", version, about = "Warehouse task allocation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare allocators on every (layout, robot count, seed) cell.
    Run(RunArgs),
    /// Train an allocation policy and write a checkpoint.
    Train(CommonArgs),
    /// Robot-count sweep with per-run wall-clock timing.
    Scale(RunArgs),
    /// Check a layout file or preset and optionally write it out as text.
    ValidateLayout(ValidateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment file (flat TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the seed list (run, scale) or the training seed (train).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Policy checkpoint for the rl allocator.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Record wall-clock seconds per run (always on for scale).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Layout file or preset such as `C:256`.
    layout: String,
    /// Generator seed for presets.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the layout in the text format to this path.
    #[arg(long)]
    write: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args, false),
        Command::Scale(args) => run(args, true),
        Command::Train(args) => train(args),
        Command::ValidateLayout(args) => validate_layout(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn load_experiment(common: &CommonArgs, checkpoint: Option<&Path>, defaults: &Defaults, train: bool) -> Result<Experiment> {
    let mut file = match &common.config {
        Some(path) => ExperimentFile::load(path)?,
        None => ExperimentFile::default(),
    };
    if let Some(seed) = common.seed {
        if train {
            file.train_seed = Some(seed);
        } else {
            file.seeds = Some(vec![seed]);
        }
    }
    if let Some(ck) = checkpoint {
        file.checkpoint = Some(ck.to_path_buf());
    }
    if file.allocators.is_none() && file.checkpoint.is_some() {
        file.allocators = Some(["mpdm", "rbts", "random", "rl"].map(String::from).to_vec());
    }
    Experiment::resolve(&file, defaults)
}

#[derive(Serialize)]
struct LayoutInfo {
    source: String,
    name: String,
    width: usize,
    height: usize,
    /// Full text of file-based layouts; presets regenerate from source and seed.
    text: Option<String>,
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    experiment: &'a Experiment,
    layouts: Vec<LayoutInfo>,
    files: Vec<&'static str>,
}

fn write_metadata(out: &Path, command: &'static str, exp: &Experiment, layouts: &[Arc<Layout>], files: Vec<&'static str>) -> Result<()> {
    let layouts = exp
        .layouts
        .iter()
        .zip(layouts)
        .map(|(source, l)| LayoutInfo {
            source: source.clone(),
            name: l.name().to_string(),
            width: l.width(),
            height: l.height(),
            text: matches!(LayoutSource::parse(source), Ok(LayoutSource::File(_))).then(|| l.to_text()),
        })
        .collect();
    let meta = Metadata { tool: "dcmrta", version: env!("CARGO_PKG_VERSION"), command, experiment: exp, layouts, files };
    let text = serde_json::to_string_pretty(&meta)?;
    std::fs::write(out.join("metadata.json"), text + "\n")?;
    Ok(())
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = out.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn run(args: RunArgs, scale: bool) -> Result<()> {
    let (defaults, command) = if scale { (&SCALE_DEFAULTS, "scale") } else { (&RUN_DEFAULTS, "run") };
    let exp = load_experiment(&args.common, args.checkpoint.as_deref(), defaults, false)?;
    let checkpoint = match &exp.checkpoint {
        Some(path) => Some(Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?),
        None => None,
    };
    if exp.allocators.contains(&AllocatorKind::Rl) && checkpoint.is_none() {
        bail!("the rl allocator needs a checkpoint (set `checkpoint` or pass --checkpoint)");
    }
    let layouts = exp.build_layouts()?;
    let timing = scale || args.timing;
    let out = &args.common.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let records = exec::with_jobs(args.common.jobs, || -> Result<Vec<MetricsRecord>> {
        let mut records = Vec::new();
        for layout in &layouts {
            for &m in &exp.robots {
                let tasks = if scale && m >= 1000 { exp.large_tasks } else { exp.tasks };
                let cell = format!("cell {} M={} {}", layout.name(), m, exp.nav_mode);
                let config = exp.sim_config(layout.clone(), m, tasks).with_context(|| cell.clone())?;
                eprintln!("{cell}: {} allocators x {} seeds, K = {tasks}", exp.allocators.len(), exp.seeds.len());
                let start = Instant::now();
                // Timed sweeps run one cell at a time so runs do not compete for cores.
                let cmp = evaluate(checkpoint.as_ref(), &config, &exp.allocators, &exp.seeds, !timing)
                    .with_context(|| cell.clone())?;
                eprintln!("{cell}: done in {:.1} s", start.elapsed().as_secs_f64());
                records.extend(cmp.records(timing));
            }
        }
        Ok(records)
    })?;

    write_metrics_csv(&records, create(out, "metrics.csv")?)?;
    let summary = summarize(&records);
    write_summary_csv(&summary, create(out, "summary.csv")?)?;
    write_metadata(out, command, &exp, &layouts, vec!["metrics.csv", "summary.csv"])?;
    print!("{}", format_summary(&summary));
    Ok(())
}

fn train(args: CommonArgs) -> Result<()> {
    let exp = load_experiment(&args, None, &TRAIN_DEFAULTS, true)?;
    let layouts = exp.build_layouts()?;
    let mut scenarios = Vec::new();
    for layout in &layouts {
        for &m in &exp.robots {
            scenarios.push(exp.sim_config(layout.clone(), m, exp.train.k_train)?);
        }
    }
    let mut env = SimEnv::new(scenarios, exp.train.k_train);
    env.estimate_rewards = exp.train.reward_mode == RewardMode::Estimate;
    let out = &args.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_metadata(out, "train", &exp, &layouts, vec!["policy.json", "train_log.csv"])?;

    let mut log = csv::Writer::from_writer(create(out, "train_log.csv")?);
    let mut log_error = None;
    let start = Instant::now();
    let result = exec::with_jobs(args.jobs, || {
        train_with(&exp.train, &env, |row| {
            if row.update % 10 == 0 || row.validation_ttd.is_finite() {
                eprintln!(
                    "update {:>5}  return {:>9.4}  ttd {:>8.2}  entropy {:.3}  validation {}",
                    row.update,
                    row.mean_return,
                    row.mean_ttd,
                    row.entropy,
                    if row.validation_ttd.is_finite() { format!("{:.2}", row.validation_ttd) } else { "-".into() }
                );
            }
            if log_error.is_none() {
                log_error = log.serialize(row).and_then(|_| Ok(log.flush()?)).err();
            }
        })
    });
    if let Some(e) = log_error {
        return Err(e).context("writing train_log.csv");
    }
    let outcome = result.context("training stopped; train_log.csv keeps the rounds completed so far")?;
    let ck = Checkpoint::new(outcome.policy, &exp.train);
    ck.save(out.join("policy.json"))?;
    println!(
        "trained {} updates in {:.1} s; best validation ttd {:.3}; wrote {}",
        exp.train.updates,
        start.elapsed().as_secs_f64(),
        outcome.best_validation_ttd,
        out.join("policy.json").display()
    );
    Ok(())
}

fn validate_layout(args: ValidateArgs) -> Result<()> {
    let layout = LayoutSource::parse(&args.layout)?.build(args.seed)?;
    let pickup = layout.pickup_region();
    let reach = layout.reachable_from(pickup.first().or(layout.delivery_region().first()).copied().context("no regions")?);
    let reachable = layout.free_cells().filter(|c| reach[layout.index(*c)]).count();
    println!(
        "{}: {}x{}, {} free cells ({} reachable from the stations), {} pickup, {} delivery, {} obstacle rectangles",
        layout.name(),
        layout.width(),
        layout.height(),
        layout.free_cell_count(),
        reachable,
        pickup.len(),
        layout.delivery_region().len(),
        layout.obstacle_rects().len()
    );
    if let Some(path) = args.write {
        std::fs::write(&path, layout.to_text()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
