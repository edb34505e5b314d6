use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gacl::config::RunConfig;
use gacl::dataset::{write_dataset, GenerationParams};
use gacl::evaluation::{ate, feasible_lengths, rpe, segment_errors, VEHICLE_SEGMENTS, WALKER_SEGMENTS};
use gacl::formats::{read_kitti, write_file, KeyValues};
use gacl::svg;
use gacl::trainer::{ablate, alpha_sweep, manifest, train, AblationMode, RunLog};
use gacl::TrainError;

#[derive(Parser)]
#[command(name = "gacl", version, about = "Geometry-aware curriculum learning for pose-sequence regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    GenData {
        #[arg(long, default_value = "walker")]
        preset: String,
        #[arg(long, default_value_t = 5)]
        sequences: usize,
        /// Relative steps per sequence.
        #[arg(long, default_value_t = 200)]
        length: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Feature noise standard deviation.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model under the configured schedule.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare curriculum, anti-curriculum and the two fixed objectives.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated seeds.
        #[arg(long)]
        seeds: Option<String>,
        /// Comma-separated subset of curriculum,anti-curriculum,fixed-relative,fixed-bounded.
        #[arg(long)]
        modes: Option<String>,
    },
    /// Train a single stage at each alpha and compare held-out errors.
    AlphaSweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        alphas: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score an estimated KITTI trajectory against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        est: PathBuf,
        /// Comma-separated segment lengths in meters; chosen from the path length if omitted.
        #[arg(long)]
        segments: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a CSV report as SVG.
    Plot {
        #[arg(long, conflicts_with = "report", required_unless_present = "report")]
        runlog: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run config file (`key = value` with `[section]` headers).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    /// Bad flags or config; exit code 1.
    Usage(String),
    /// Anything that went wrong while doing the work; exit code 2.
    Runtime(String),
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load_config(args: &RunArgs, overrides: &[(&str, Option<String>)]) -> Result<RunConfig, Failure> {
    let (mut kv, base) = match &args.config {
        Some(path) => (
            KeyValues::read(path).map_err(|e| Failure::Usage(e.to_string()))?,
            path.parent().unwrap_or(Path::new(".")).to_path_buf(),
        ),
        None => (KeyValues::default(), PathBuf::from(".")),
    };
    for (key, value) in overrides {
        if let Some(v) = value {
            kv.set(*key, v.clone());
        }
    }
    let mut config = RunConfig::from_key_values(&kv, &base)?;
    config.output_dir = Some(args.out.clone());
    Ok(config)
}

fn parse_list(flag: &str, raw: &str) -> Result<Vec<f64>, Failure> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Failure::Usage(format!("--{flag}: `{s}` is not a number")))
        })
        .collect()
}

fn gen_data(
    preset: &str,
    sequences: usize,
    length: usize,
    seed: u64,
    noise: Option<f64>,
    out: &Path,
) -> Result<(), Failure> {
    let mut params = GenerationParams::new(preset, sequences, length, seed);
    if let Some(n) = noise {
        params.noise_sigma = n;
    }
    let mut problems = Vec::new();
    if params.motion_model().is_err() {
        problems.push(format!("--preset: unknown preset `{preset}` (expected walker or vehicle)"));
    }
    if sequences == 0 {
        problems.push("--sequences: must be at least 1".to_string());
    }
    if length < 2 {
        problems.push("--length: must be at least 2".to_string());
    }
    if !(params.noise_sigma >= 0.0) {
        problems.push("--noise: must be non-negative".to_string());
    }
    if !problems.is_empty() {
        return Err(Failure::Usage(problems.join("\n")));
    }
    let seqs = params.generate().map_err(runtime)?;
    let meta = params.to_key_values("data.");
    write_dataset(out, &seqs, &meta).map_err(runtime)?;
    write_file(&out.join("manifest.txt"), &manifest("gen-data", &meta).render()).map_err(runtime)?;
    println!("wrote {} sequences of {} steps to {}", seqs.len(), length, out.display());
    Ok(())
}

fn run_train(run: &RunArgs, seed: Option<u64>) -> Result<(), Failure> {
    let config = load_config(run, &[("train.seed", seed.map(|s| s.to_string()))])?;
    let (_, log) = train(&config)?;
    for s in &log.stages {
        println!(
            "stage {} (alpha {}): {} epochs, ended by {}, validation {:.4e}, held-out segment error {:.2}%",
            s.stage, s.alpha, s.epochs, s.reason, s.validation_loss, s.held_out.segment_translation_pct
        );
    }
    println!("artifacts in {}", run.out.display());
    Ok(())
}

fn run_ablate(run: &RunArgs, seeds: &Option<String>, modes: &Option<String>) -> Result<(), Failure> {
    let config = load_config(run, &[("ablate.seeds", seeds.clone()), ("ablate.modes", modes.clone())])?;
    let report = ablate(&config, &config.ablation_modes, &config.ablation_seeds)?;
    for mode in &config.ablation_modes {
        let cells: Vec<_> = report.cells.iter().filter(|c| c.mode == *mode).collect();
        let mean = cells
            .iter()
            .map(|c| c.final_stage().held_out.segment_translation_pct)
            .sum::<f64>()
            / cells.len() as f64;
        println!("{mode:>16}: mean held-out segment translation error {mean:.2}%");
    }
    println!("artifacts in {}", run.out.display());
    Ok(())
}

fn run_sweep(run: &RunArgs, alphas: &Option<String>, epochs: Option<usize>, seed: Option<u64>) -> Result<(), Failure> {
    let config = load_config(
        run,
        &[
            ("sweep.alphas", alphas.clone()),
            ("sweep.epochs", epochs.map(|e| e.to_string())),
            ("train.seed", seed.map(|s| s.to_string())),
        ],
    )?;
    let report = alpha_sweep(&config, &config.sweep.alphas, config.sweep.epochs)?;
    for p in &report.points {
        println!(
            "alpha {:>5}: translation {:.3} rotation {:.3} (normalized)",
            p.alpha, p.translation_normalized, p.rotation_normalized
        );
    }
    println!("artifacts in {}", run.out.display());
    Ok(())
}

fn run_eval(gt: &Path, est: &Path, segments: &Option<String>, out: &Path) -> Result<(), Failure> {
    let requested = segments.as_deref().map(|s| parse_list("segments", s)).transpose()?;
    if let Some(l) = &requested {
        if l.is_empty() || l.iter().any(|x| !(*x > 0.0)) {
            return Err(Failure::Usage("--segments: need positive lengths".into()));
        }
    }
    let gt_traj = read_kitti(gt).map_err(runtime)?;
    let est_traj = read_kitti(est).map_err(runtime)?;
    let lengths = match requested {
        Some(l) => l,
        None => {
            let vehicle = feasible_lengths(&gt_traj, &VEHICLE_SEGMENTS);
            if vehicle.is_empty() {
                feasible_lengths(&gt_traj, &WALKER_SEGMENTS)
            } else {
                vehicle
            }
        }
    };
    let rpe_report = rpe(&gt_traj, &est_traj).map_err(runtime)?;
    let ate_report = ate(&gt_traj, &est_traj).map_err(runtime)?;
    let seg = segment_errors(&gt_traj, &est_traj, &lengths).map_err(runtime)?;

    let write = |name: &str, text: &str| write_file(&out.join(name), text).map_err(runtime);
    write("segments.csv", &seg.to_csv())?;
    write("rpe.csv", &rpe_report.to_csv())?;
    write("ate.csv", &ate_report.to_csv())?;
    write("ate_cdf.csv", &ate_report.cdf_csv())?;
    let charts = [
        ("segments_translation.svg", svg::segment_translation_chart(&seg)),
        ("segments_rotation.svg", svg::segment_rotation_chart(&seg)),
        ("ate_cdf.svg", svg::ate_cdf_chart(&ate_report)),
        ("trajectory.svg", svg::trajectory_chart(&gt_traj, &est_traj)),
    ];
    for (name, chart) in charts {
        write(name, &chart.render().map_err(runtime)?)?;
    }
    let mut settings = KeyValues::default();
    settings.set("eval.gt", gt.display().to_string());
    settings.set("eval.est", est.display().to_string());
    settings.set(
        "eval.segments",
        lengths.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(","),
    );
    write("manifest.txt", &manifest("eval", &settings).render())?;
    println!(
        "segments: {:.3}% translation, {:.5} deg/m rotation",
        seg.mean_translation_pct(),
        seg.mean_rotation_deg_per_m()
    );
    println!("rpe: {:.3}% translation, {:.5} deg rotation", rpe_report.translation_pct, rpe_report.rotation_deg);
    println!("ate: rmse {:.4} m", ate_report.rmse);
    Ok(())
}

fn run_plot(runlog: &Option<PathBuf>, report: &Option<PathBuf>, out: &Path) -> Result<(), Failure> {
    let input = runlog.as_ref().or(report.as_ref()).expect("clap requires one input");
    let text = std::fs::read_to_string(input).map_err(|e| Failure::Runtime(format!("{}: {e}", input.display())))?;
    if runlog.is_some() && text.lines().next().map(str::trim) != Some(RunLog::HEADER) {
        return Err(Failure::Runtime(format!("{}: not a run log (expected header `{}`)", input.display(), RunLog::HEADER)));
    }
    let svg = svg::plot_report(&text).map_err(|e| Failure::Runtime(format!("{}: {e}", input.display())))?;
    write_file(out, &svg).map_err(runtime)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::GenData {
            preset,
            sequences,
            length,
            seed,
            noise,
            out,
        } => gen_data(preset, *sequences, *length, *seed, *noise, out),
        Command::Train { run, seed } => run_train(run, *seed),
        Command::Ablate { run, seeds, modes } => {
            if let Some(m) = modes {
                for name in m.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    name.parse::<AblationMode>().map_err(|e| Failure::Usage(format!("--modes: {e}")))?;
                }
            }
            run_ablate(run, seeds, modes)
        }
        Command::AlphaSweep {
            run,
            alphas,
            epochs,
            seed,
        } => run_sweep(run, alphas, *epochs, *seed),
        Command::Eval { gt, est, segments, out } => run_eval(gt, est, segments, out),
        Command::Plot { runlog, report, out } => run_plot(runlog, report, out),
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
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
