//! Command-line harness: track a sequence directory, evaluate results, and
//! generate synthetic scenarios.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use smtt::dictionary::DictionaryConfig;
use smtt::error::{Result, SmttError};
use smtt::metrics;
use smtt::seq_io;
use smtt::solver::{NormPair, SolverConfig};
use smtt::synth::{self, ScenarioSpec};
use smtt::tracker::{self, SolverKind, TrackerConfig};

#[derive(Parser)]
#[command(name = "smtt", about = "Graph-regularized joint-sparse particle tracker")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args, Debug, Default)]
struct TrackFlags {
    /// key=value config file; flags override file keys, file keys override
    /// defaults
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// particle count
    #[arg(long)]
    particles: Option<usize>,
    /// appearance template count
    #[arg(long)]
    templates: Option<usize>,
    /// patch size as HxW, e.g. 16x16
    #[arg(long)]
    patch: Option<String>,
    /// solver: apg, alt, or subgrad
    #[arg(long)]
    solver: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Track a sequence directory (frame_*.pgm/.png + groundtruth.txt) and
    /// write one predicted box per frame
    Track {
        seq_dir: PathBuf,
        out: PathBuf,
        #[command(flatten)]
        flags: TrackFlags,
        /// also write frames with the predicted box drawn
        #[arg(long)]
        overlay: Option<PathBuf>,
    },
    /// Evaluate a result file against ground truth
    Eval {
        result: PathBuf,
        truth: PathBuf,
        /// write the precision/success curves as CSV
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Generate a synthetic sequence from a key=value scenario spec
    Synth { spec: PathBuf, out_dir: PathBuf },
}

fn parse_patch(s: &str) -> Result<(usize, usize)> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| SmttError::Parse(format!("--patch expects HxW, got {s:?}")))?;
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| SmttError::Parse(format!("bad patch dimension {t:?}")))
    };
    Ok((parse(h)?, parse(w)?))
}

fn parse_solver(s: &str) -> Result<SolverKind> {
    match s {
        "apg" => Ok(SolverKind::Apg),
        "alt" => Ok(SolverKind::Alternating),
        "subgrad" => Ok(SolverKind::Subgradient),
        other => Err(SmttError::Parse(format!(
            "unknown solver {other:?}; expected apg, alt, or subgrad"
        ))),
    }
}

fn solver_name(k: SolverKind) -> &'static str {
    match k {
        SolverKind::Apg => "apg",
        SolverKind::Alternating => "alt",
        SolverKind::Subgradient => "subgrad",
    }
}

/// Apply a key=value config file on top of the defaults.
fn apply_config_file(cfg: &mut TrackerConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            SmttError::Parse(format!(
                "{}: line {}: expected key=value",
                path.display(),
                lineno + 1
            ))
        })?;
        let (k, v) = (k.trim(), v.trim());
        let bad = |k: &str| SmttError::Parse(format!("{}: bad value for {k}", path.display()));
        let f = || v.parse::<f64>().map_err(|_| bad(k));
        let u = || v.parse::<usize>().map_err(|_| bad(k));
        match k {
            "seed" => cfg.seed = v.parse().map_err(|_| bad(k))?,
            "lambda1" => cfg.solver.lambda1 = f()?,
            "lambda2" => cfg.solver.lambda2 = f()?,
            "mu" => cfg.solver.mu = f()?,
            "tol" => cfg.solver.tol = f()?,
            "max_iter" => cfg.solver.max_iter = u()?,
            "step" => cfg.solver.step = Some(f()?),
            "pq" => {
                let (p, q) = v
                    .split_once(',')
                    .ok_or_else(|| SmttError::Parse(format!("pq expects p,q, got {v:?}")))?;
                cfg.solver.norm = NormPair::from_pq(
                    p.trim().parse().map_err(|_| bad(k))?,
                    q.trim().parse().map_err(|_| bad(k))?,
                )?;
            }
            "solver" => cfg.solver_kind = parse_solver(v)?,
            "particles" => cfg.n_particles = u()?,
            "templates" => cfg.dict.m = u()?,
            "patch" => {
                let (h, w) = parse_patch(v)?;
                cfg.dict.patch_h = h;
                cfg.dict.patch_w = w;
            }
            "update_period" => cfg.dict.update_period = u()?,
            "jitter_px" => cfg.dict.jitter_px = f()?,
            "alpha" => cfg.alpha = f()?,
            "std_x" => cfg.stds.0 = f()?,
            "std_y" => cfg.stds.1 = f()?,
            "std_scale" => cfg.stds.2 = f()?,
            "sigma" => cfg.sigma_override = Some(f()?),
            other => {
                return Err(SmttError::Parse(format!(
                    "{}: unknown config key {other:?}",
                    path.display()
                )))
            }
        }
    }
    Ok(())
}

fn effective_config_text(cfg: &TrackerConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        s.push_str(k);
        s.push('=');
        s.push_str(&v);
        s.push('\n');
    };
    kv("seed", cfg.seed.to_string());
    kv("solver", solver_name(cfg.solver_kind).to_string());
    kv("lambda1", format!("{}", cfg.solver.lambda1));
    kv("lambda2", format!("{}", cfg.solver.lambda2));
    kv(
        "pq",
        match cfg.solver.norm {
            NormPair::L11 => "1,1".into(),
            NormPair::L21 => "2,1".into(),
        },
    );
    kv("mu", format!("{}", cfg.solver.mu));
    kv("tol", format!("{}", cfg.solver.tol));
    kv("max_iter", cfg.solver.max_iter.to_string());
    if let Some(step) = cfg.solver.step {
        kv("step", format!("{step}"));
    }
    kv("particles", cfg.n_particles.to_string());
    kv("templates", cfg.dict.m.to_string());
    kv("patch", format!("{}x{}", cfg.dict.patch_h, cfg.dict.patch_w));
    kv("update_period", cfg.dict.update_period.to_string());
    kv("jitter_px", format!("{}", cfg.dict.jitter_px));
    kv("alpha", format!("{}", cfg.alpha));
    kv("std_x", format!("{}", cfg.stds.0));
    kv("std_y", format!("{}", cfg.stds.1));
    kv("std_scale", format!("{}", cfg.stds.2));
    if let Some(sig) = cfg.sigma_override {
        kv("sigma", format!("{sig}"));
    }
    s
}

fn build_config(flags: &TrackFlags) -> Result<TrackerConfig> {
    let mut cfg = TrackerConfig {
        solver: SolverConfig::default(),
        solver_kind: SolverKind::Apg,
        dict: DictionaryConfig::default(),
        ..Default::default()
    };
    if let Some(path) = &flags.config {
        apply_config_file(&mut cfg, path)?;
    }
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(v) = flags.lambda1 {
        cfg.solver.lambda1 = v;
    }
    if let Some(v) = flags.lambda2 {
        cfg.solver.lambda2 = v;
    }
    if let Some(v) = flags.particles {
        cfg.n_particles = v;
    }
    if let Some(v) = flags.templates {
        cfg.dict.m = v;
    }
    if let Some(s) = &flags.patch {
        let (h, w) = parse_patch(s)?;
        cfg.dict.patch_h = h;
        cfg.dict.patch_w = w;
    }
    if let Some(s) = &flags.solver {
        cfg.solver_kind = parse_solver(s)?;
    }
    cfg.solver.validate()?;
    Ok(cfg)
}

fn cmd_track(
    seq_dir: &Path,
    out: &Path,
    flags: &TrackFlags,
    overlay: Option<&Path>,
) -> Result<()> {
    let cfg = build_config(flags)?;
    let frames = seq_io::read_frames(seq_dir)?;
    let truth = seq_io::read_boxes(&seq_dir.join("groundtruth.txt"))?;
    let init = truth[0];

    let res = tracker::track_sequence(&frames, init, cfg.clone())?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    seq_io::write_boxes(out, &res.boxes)?;

    let cfg_dir = out.parent().filter(|p| !p.as_os_str().is_empty());
    let cfg_path = cfg_dir
        .map(|p| p.join("effective_config.txt"))
        .unwrap_or_else(|| PathBuf::from("effective_config.txt"));
    std::fs::write(&cfg_path, effective_config_text(&cfg))?;

    if let Some(dir) = overlay {
        std::fs::create_dir_all(dir)?;
        for (i, (frame, b)) in frames.iter().zip(&res.boxes).enumerate() {
            let mut img = frame.clone();
            let (x, y, w, h) = b.to_corner();
            img.draw_box(x, y, w, h, 1.0);
            img.write_pgm(&dir.join(format!("frame_{:06}.pgm", i + 1)))?;
        }
    }

    println!(
        "tracked {} frames ({} failed, {:.1}% non-converged solves) -> {}",
        frames.len(),
        res.failed_frames,
        100.0 * res.non_converged_fraction(),
        out.display()
    );
    Ok(())
}

fn cmd_eval(result: &Path, truth: &Path, curves: Option<&Path>) -> Result<()> {
    let results = seq_io::read_boxes(result)?;
    let truth_boxes = seq_io::read_boxes(truth)?;
    let report = metrics::evaluate(&results, &truth_boxes)?;
    println!("frames:            {}", results.len());
    println!("precision@20px:    {:.4}", report.precision_at_20());
    println!("success AUC:       {:.4}", report.success_auc());
    println!("mean center error: {:.3} px", report.mean_center_error);
    println!("mean IoU:          {:.4}", report.mean_iou);
    if let Some(path) = curves {
        seq_io::write_curves_csv(path, &report)?;
        println!("curves -> {}", path.display());
    }
    Ok(())
}

fn cmd_synth(spec_path: &Path, out_dir: &Path) -> Result<()> {
    let text = std::fs::read_to_string(spec_path)?;
    let spec = ScenarioSpec::from_key_values(&text)?;
    let (frames, truth) = synth::generate(&spec)?;
    seq_io::write_sequence(out_dir, &frames, &truth)?;
    println!(
        "wrote {} frames + groundtruth.txt -> {}",
        frames.len(),
        out_dir.display()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Track {
            seq_dir,
            out,
            flags,
            overlay,
        } => cmd_track(seq_dir, out, flags, overlay.as_deref()),
        Cmd::Eval {
            result,
            truth,
            curves,
        } => cmd_eval(result, truth, curves.as_deref()),
        Cmd::Synth { spec, out_dir } => cmd_synth(spec, out_dir),
    }
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
}
