use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use candle_core::{DType, Device};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use inbetween::bvh::{emit_bvh, parse_bvh, to_clip, EulerOrder};
use inbetween::cache::{load_cache, save_cache};
use inbetween::dataset::{load_corpus, make_fragments};
use inbetween::losses::{read_loss_log, LossLog, LossRecord};
use inbetween::metrics::{evaluate, LengthCurve, Method};
use inbetween::motion::{extract_contacts, ContactThresholds, MotionClip, Pose, Skeleton};
use inbetween::plot::{displacement_envelope, loss_curves};
use inbetween::slerp::interpolate_transition;
use inbetween::stitcher::{derive_seed, generate_samples, StitchSummary, TransitionTask};
use inbetween::trainer::{ExperimentConfig, Model, Trainer};
use inbetween::{Error, Result};

#[derive(Parser)]
#[command(name = "inbetween", version, about = "Two-keyframe motion in-betweening")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the dataset described by a config and write fragment caches.
    Prep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "prepared")]
        out: PathBuf,
    },
    /// Pretrain the phase networks, then train the generators and critics.
    Train(TrainArgs),
    /// Generate transitions between two single-pose BVH files.
    Generate(GenerateArgs),
    /// Metrics table for a method on a fragment cache.
    Evaluate(EvaluateArgs),
    /// Render displacement envelopes and loss curves found in a directory.
    Plot {
        #[arg(long)]
        results: PathBuf,
        /// Output directory; defaults to the results directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    curriculum_start: Option<usize>,
    #[arg(long)]
    curriculum_end: Option<usize>,
    #[arg(long)]
    curriculum_epochs_per_step: Option<usize>,
    #[arg(long)]
    tail_epochs: Option<usize>,
    #[arg(long)]
    buffer: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    phase_epochs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Stitch,
    Slerp,
}

#[derive(Args)]
struct GenerateArgs {
    /// Required for `--method stitch`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    start: PathBuf,
    #[arg(long)]
    end: PathBuf,
    #[arg(long)]
    length: usize,
    #[arg(long, default_value_t = 2)]
    buffer: usize,
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "stitch")]
    method: MethodArg,
    /// Candidates per sample in the latent pair search.
    #[arg(long, default_value_t = 1)]
    search: usize,
    #[arg(long, default_value = "generated")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Required for `--method stitch`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Fragment cache written by `prep`.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "10,30,50")]
    lengths: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    samples: usize,
    #[arg(long, value_enum, default_value = "stitch")]
    method: MethodArg,
    #[arg(long, default_value_t = 2)]
    buffer: usize,
    #[arg(long, default_value_t = 1)]
    search: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ground-plane normal for foot slide: x, y or z.
    #[arg(long, default_value = "y")]
    up_axis: String,
    /// Directory for report.json, report.txt and curves.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::file(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::file(path, e))
}

#[derive(Serialize)]
struct PrepStats {
    train_clips: usize,
    test_clips: usize,
    train_fragments: usize,
    test_fragments: usize,
    skipped_clips: usize,
    window: usize,
    offset: usize,
    joints: usize,
    frame_rate: f64,
}

fn prep(config: &Path, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let corpus = load_corpus(&cfg.dataset)?;
    let train = make_fragments(&corpus.train, cfg.dataset.window)?;
    let test = make_fragments(&corpus.test, cfg.dataset.window)?;
    if train.clips.is_empty() {
        return Err(Error::InvalidArgument("no training fragments; clips shorter than the window".into()));
    }
    mkdir(out)?;
    save_cache(&out.join("train.mstc"), &train.clips)?;
    if !test.clips.is_empty() {
        save_cache(&out.join("test.mstc"), &test.clips)?;
    }
    let first = &train.clips[0];
    let stats = PrepStats {
        train_clips: corpus.train.len(),
        test_clips: corpus.test.len(),
        train_fragments: train.clips.len(),
        test_fragments: test.clips.len(),
        skipped_clips: train.skipped + test.skipped,
        window: cfg.dataset.window.window,
        offset: cfg.dataset.window.offset,
        joints: first.skeleton.len(),
        frame_rate: first.frame_rate,
    };
    let json = serde_json::to_string_pretty(&stats)?;
    write(&out.join("stats.json"), &json)?;
    println!("{json}");
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    let t = &mut cfg.train;
    let set = |dst: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    if let Some(v) = a.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    set(&mut t.batch_size, a.batch_size);
    set(&mut t.curriculum_start, a.curriculum_start);
    set(&mut t.curriculum_end, a.curriculum_end);
    set(&mut t.curriculum_epochs_per_step, a.curriculum_epochs_per_step);
    set(&mut t.tail_epochs, a.tail_epochs);
    set(&mut t.buffer, a.buffer);
    set(&mut t.phase_epochs, a.phase_epochs);
    t.validate()?;

    let corpus = load_corpus(&cfg.dataset)?;
    let fragments = make_fragments(&corpus.train, cfg.dataset.window)?.clips;
    let first = fragments
        .first()
        .ok_or_else(|| Error::InvalidArgument("no training fragments".into()))?;
    let mut model = Model::new(&cfg.train, first.skeleton.clone(), first.frame_rate, &Device::Cpu, DType::F32)?;
    model.contact_thresholds = cfg.dataset.thresholds()?;
    let mut trainer = Trainer::new(cfg.train.clone(), model)?;
    mkdir(&a.out)?;

    let (pf, pb) = trainer.pretrain_phase(&corpus.train)?;
    let mut plog = LossLog::open(&a.out.join("phase_losses.jsonl"))?;
    for (e, (f, b)) in pf.iter().zip(&pb).enumerate() {
        plog.record(e, "phase_forward", *f)?;
        plog.record(e, "phase_backward", *b)?;
    }
    plog.flush()?;
    log::info!("phase pretraining mse: forward {:?}, backward {:?}", pf.last(), pb.last());

    let mut log = LossLog::open(&a.out.join("losses.jsonl"))?;
    let reports = trainer.train(&fragments, Some(&mut log))?;
    trainer.save(&a.out)?;
    if let Some(r) = reports.last() {
        println!("trained {} epochs, {} steps; final loss {:.5}", trainer.epochs_done(), trainer.steps_taken(), r.total);
    }
    Ok(())
}

/// Reads a keyframe BVH. The key is the last frame; an earlier frame, when
/// present, supplies the root velocity. Contacts are recomputed.
fn load_key(path: &Path, skeleton: Option<&Arc<Skeleton>>, thresholds: &ContactThresholds) -> Result<(Pose, Arc<Skeleton>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let clip = to_clip(&parse_bvh(&text)?)?;
    if clip.is_empty() {
        return Err(Error::Shape(format!("{}: pose file has no frames", path.display())));
    }
    let skel = match skeleton {
        Some(s) if !s.same_topology(&clip.skeleton) => {
            return Err(Error::Shape(format!(
                "{}: skeleton does not match the checkpoint",
                path.display()
            )))
        }
        Some(s) => s.clone(),
        None => clip.skeleton.clone(),
    };
    let mut frames = clip.frames.clone();
    if frames.len() == 1 {
        frames.push(frames[0].clone());
    }
    let clip = MotionClip::new(skel.clone(), frames, clip.frame_rate)?;
    let clip = if skel.contact_joints().is_ok() {
        extract_contacts(&clip, thresholds)?
    } else {
        clip
    };
    Ok((clip.frames.last().expect("two frames").clone(), skel))
}

fn load_model(checkpoint: Option<&Path>) -> Result<Model> {
    let dir = checkpoint.ok_or_else(|| Error::InvalidArgument("--checkpoint is required for the stitch method".into()))?;
    Ok(Model::load(dir, &Device::Cpu, DType::F32)?.0)
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let model = match (a.method, &a.checkpoint) {
        (MethodArg::Stitch, _) => Some(load_model(a.checkpoint.as_deref())?),
        (MethodArg::Slerp, Some(dir)) => Some(load_model(Some(dir))?),
        (MethodArg::Slerp, None) => None,
    };
    let thresholds = model.as_ref().map(|m| m.contact_thresholds).unwrap_or_default();
    let skel = model.as_ref().map(|m| m.skeleton.clone());
    let (start, skel) = load_key(&a.start, skel.as_ref(), &thresholds)?;
    let (end, _) = load_key(&a.end, Some(&skel), &thresholds)?;
    let frame_rate = model.as_ref().map_or(30.0, |m| m.frame_rate);
    let task = TransitionTask {
        start,
        end,
        length: a.length,
        buffer: a.buffer,
        samples: a.samples,
        seed: a.seed,
    };
    if a.samples == 0 {
        return Err(Error::InvalidArgument("--samples must be >= 1".into()));
    }
    let results: Vec<(MotionClip, u64, f64)> = match (&model, a.method) {
        (Some(m), MethodArg::Stitch) => generate_samples(&m.forward, &m.backward, &skel, &task, a.search, frame_rate)?
            .into_iter()
            .map(|r| (r.clip, r.seed, r.stitch_cost))
            .collect(),
        _ => {
            if a.length < 1 {
                return Err(Error::InvalidArgument("--length must be >= 1".into()));
            }
            (0..a.samples)
                .map(|s| {
                    let clip = interpolate_transition(skel.clone(), &task.start, &task.end, a.length, frame_rate)?;
                    Ok((clip, derive_seed(a.seed, s), 0.0))
                })
                .collect::<Result<_>>()?
        }
    };
    mkdir(&a.out)?;
    let mut summary = Vec::with_capacity(results.len());
    for (i, (clip, seed, cost)) in results.iter().enumerate() {
        let file = format!("sample_{i:03}.bvh");
        write(&a.out.join(&file), &emit_bvh(clip, EulerOrder::Zyx))?;
        summary.push(StitchSummary {
            sample: i,
            seed: *seed,
            frames: clip.len(),
            stitch_cost: *cost,
            file,
        });
    }
    write(&a.out.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    println!("wrote {} transitions to {}", summary.len(), a.out.display());
    Ok(())
}

fn up_axis(name: &str) -> Result<usize> {
    match name.to_ascii_lowercase().as_str() {
        "x" => Ok(0),
        "y" => Ok(1),
        "z" => Ok(2),
        other => Err(Error::Config(format!("up axis must be x, y or z, got `{other}`"))),
    }
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    let clips = load_cache(&a.dataset)?;
    let model = match a.method {
        MethodArg::Stitch => Some(load_model(a.checkpoint.as_deref())?),
        MethodArg::Slerp => None,
    };
    let method = match &model {
        Some(m) => {
            if !m.skeleton.same_topology(&clips[0].skeleton) {
                return Err(Error::Shape("dataset skeleton does not match the checkpoint".into()));
            }
            Method::Stitch {
                model: m,
                buffer: a.buffer,
                search: a.search,
            }
        }
        None => Method::Slerp,
    };
    let ev = evaluate(&method, &clips, &a.lengths, a.samples, a.seed, up_axis(&a.up_axis)?)?;
    let text = ev.report.to_text();
    print!("{text}");
    if let Some(out) = &a.out {
        mkdir(out)?;
        write(&out.join("report.json"), &ev.report.to_json()?)?;
        write(&out.join("report.txt"), &text)?;
        write(&out.join("curves.json"), &serde_json::to_string_pretty(&ev.curves)?)?;
    }
    Ok(())
}

fn plot(results: &Path, out: Option<&Path>) -> Result<()> {
    let out = out.unwrap_or(results);
    mkdir(out)?;
    let mut written = Vec::new();
    let curves_path = results.join("curves.json");
    if curves_path.exists() {
        let text = std::fs::read_to_string(&curves_path).map_err(|e| Error::file(&curves_path, e))?;
        let curves: Vec<LengthCurve> =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", curves_path.display())))?;
        for c in &curves {
            let p = out.join(format!("displacement_L{}.svg", c.length));
            displacement_envelope(&p, &format!("displacement error, L = {}", c.length), &c.curve)?;
            written.push(p);
        }
    }
    for name in ["losses", "phase_losses"] {
        let log = results.join(format!("{name}.jsonl"));
        if log.exists() {
            let records: Vec<LossRecord> = read_loss_log(&log)?;
            let p = out.join(format!("{name}.svg"));
            loss_curves(&p, &records)?;
            written.push(p);
        }
    }
    if written.is_empty() {
        return Err(Error::file(
            results,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "no curves.json, losses.jsonl or phase_losses.jsonl found",
            ),
        ));
    }
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prep { config, out } => prep(&config, &out),
        Command::Train(a) => train(&a),
        Command::Generate(a) => generate(&a),
        Command::Evaluate(a) => evaluate_cmd(&a),
        Command::Plot { results, out } => plot(&results, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
