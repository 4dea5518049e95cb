//! Training loop: length curriculum, alternating generator and critic
//! updates, phase-network pretraining and checkpoints.

use std::path::Path;
use std::sync::Arc;

use candle_core::{DType, Device, Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::reverse_clip;
use crate::error::{Error, Result};
use crate::losses::{
    kl_loss, state_loss_tensor, stitch_cost_tensor, weighted_sum, DiscriminatorConfig,
    DiscriminatorPair, LossComponents, LossLog, LossWeights, MotionFeatures, StateTerms,
};
use crate::motion::{ContactThresholds, MotionClip, Skeleton};
use crate::scvae::{label_phases, Generator, GeneratorConfig, LatentDistribution, PhaseNet, StepOutput};
use crate::stitcher::{blend_weight, overlap_range, overlap_tensors, rollout_lengths, rollout_pair};
use crate::tensor::{forward_kinematics_tensor, PoseBatch};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub curriculum_start: usize,
    pub curriculum_end: usize,
    pub curriculum_epochs_per_step: usize,
    /// Epochs run at `curriculum_end` after the schedule reaches it.
    pub tail_epochs: usize,
    /// Synthesis buffer; clamped to half the current length.
    pub buffer: usize,
    pub loss_weights: LossWeights,
    /// Multiplies the position-space terms (FK and stitching).
    pub loss_length_scale: f64,
    pub seed: u64,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub phase_epochs: usize,
    pub phase_learning_rate: f64,
    pub phase_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.9,
            weight_decay: 1e-5,
            batch_size: 32,
            curriculum_start: 5,
            curriculum_end: 50,
            curriculum_epochs_per_step: 2,
            tail_epochs: 0,
            buffer: 2,
            loss_weights: LossWeights::default(),
            loss_length_scale: 0.01,
            seed: 0,
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            phase_epochs: 50,
            phase_learning_rate: 1e-3,
            phase_batch_size: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.curriculum_start > self.curriculum_end {
            return Err(Error::Config(format!(
                "curriculum_start {} exceeds curriculum_end {}",
                self.curriculum_start, self.curriculum_end
            )));
        }
        if self.curriculum_start < 2 {
            return Err(Error::Config("curriculum_start must be >= 2".into()));
        }
        if self.batch_size == 0 || self.phase_batch_size == 0 {
            return Err(Error::Config("batch sizes must be >= 1".into()));
        }
        if self.curriculum_epochs_per_step == 0 {
            return Err(Error::Config("curriculum_epochs_per_step must be >= 1".into()));
        }
        if self.buffer == 0 {
            return Err(Error::Config("buffer must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.phase_learning_rate > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(self.weight_decay >= 0.0 && self.loss_length_scale > 0.0) {
            return Err(Error::Config("weight_decay must be >= 0 and loss_length_scale > 0".into()));
        }
        self.loss_weights.validate()?;
        self.generator.validate()
    }

    /// Epochs until the curriculum reaches its end, plus the tail.
    pub fn total_epochs(&self) -> usize {
        (self.curriculum_end - self.curriculum_start) * self.curriculum_epochs_per_step + self.tail_epochs
    }

    fn adam(&self, lr: f64) -> ParamsAdamW {
        ParamsAdamW {
            lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: 1e-8,
            weight_decay: self.weight_decay,
        }
    }
}

pub fn curriculum_length(epoch: usize, cfg: &TrainConfig) -> usize {
    (cfg.curriculum_start + epoch / cfg.curriculum_epochs_per_step.max(1)).min(cfg.curriculum_end)
}

/// Forward and backward generators with their critics.
pub struct Model {
    pub forward: Generator,
    pub backward: Generator,
    pub critics: DiscriminatorPair,
    pub skeleton: Arc<Skeleton>,
    pub frame_rate: f64,
    /// Thresholds the training data was labelled with, reused for keyframes.
    pub contact_thresholds: ContactThresholds,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub config: TrainConfig,
    pub skeleton: Skeleton,
    pub frame_rate: f64,
    #[serde(default)]
    pub contact_thresholds: ContactThresholds,
    pub epochs: usize,
}

const FORWARD: &str = "forward";
const BACKWARD: &str = "backward";
const CRITICS: &str = "critics.safetensors";
const META: &str = "checkpoint.json";

impl Model {
    pub fn new(cfg: &TrainConfig, skeleton: Arc<Skeleton>, frame_rate: f64, device: &Device, dtype: DType) -> Result<Self> {
        cfg.validate()?;
        let j = skeleton.len();
        Ok(Model {
            forward: Generator::new(cfg.generator.clone(), j, cfg.seed.wrapping_add(1), device, dtype)?,
            backward: Generator::new(cfg.generator.clone(), j, cfg.seed.wrapping_add(2), device, dtype)?,
            critics: DiscriminatorPair::new(cfg.discriminator, j, cfg.seed.wrapping_add(3), device, dtype)?,
            skeleton,
            frame_rate,
            contact_thresholds: ContactThresholds::default(),
        })
    }

    pub fn save(&self, dir: &Path, cfg: &TrainConfig, epochs: usize) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        self.forward.save(dir, FORWARD)?;
        self.backward.save(dir, BACKWARD)?;
        self.critics.save(&dir.join(CRITICS))?;
        let meta = CheckpointMeta {
            format_version: CHECKPOINT_VERSION,
            config: cfg.clone(),
            skeleton: (*self.skeleton).clone(),
            frame_rate: self.frame_rate,
            contact_thresholds: self.contact_thresholds,
            epochs,
        };
        let path = dir.join(META);
        std::fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::file(&path, e))
    }

    pub fn load(dir: &Path, device: &Device, dtype: DType) -> Result<(Self, CheckpointMeta)> {
        let path = dir.join(META);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
        let meta: CheckpointMeta =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if meta.format_version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint format {} is not supported (expected {CHECKPOINT_VERSION})",
                meta.format_version
            )));
        }
        let j = meta.skeleton.len();
        let g = &meta.config.generator;
        let mut critics = DiscriminatorPair::new(meta.config.discriminator, j, 0, device, dtype)?;
        critics.load_weights(&dir.join(CRITICS))?;
        let model = Model {
            forward: Generator::load(g.clone(), j, dir, FORWARD, device, dtype)?,
            backward: Generator::load(g.clone(), j, dir, BACKWARD, device, dtype)?,
            critics,
            skeleton: Arc::new(meta.skeleton.clone()),
            frame_rate: meta.frame_rate,
            contact_thresholds: meta.contact_thresholds,
        };
        Ok((model, meta))
    }
}

/// Tensors for one batch of fragments truncated to `length + 2` frames.
pub struct Batch {
    pub length: usize,
    pub buffer: usize,
    pub start: PoseBatch,
    pub end: PoseBatch,
    forward: Truth,
    backward: Truth,
    /// Ground-truth global positions `[B, L+2, J, 3]`.
    positions: Tensor,
}

struct Truth {
    rotations: Tensor,
    velocities: Tensor,
    contacts: Tensor,
    positions: Tensor,
}

impl Truth {
    /// Frames `1..=steps` of each clip, stacked to `[B, steps, ...]`.
    fn new(clips: &[MotionClip], steps: usize, device: &Device, dtype: DType) -> Result<Self> {
        let mut per = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for c in clips {
            let frames: Vec<_> = c.frames[1..=steps].iter().collect();
            let b = PoseBatch::from_poses(&frames, device, dtype)?;
            per[0].push(b.rotations);
            per[1].push(b.root_velocity);
            per[2].push(b.contacts);
            per[3].push(positions_tensor(&c.slice(1, steps)?, device, dtype)?);
        }
        let [r, v, k, p] = per.map(|v| Tensor::stack(&v, 0));
        Ok(Truth {
            rotations: r?,
            velocities: v?,
            contacts: k?,
            positions: p?,
        })
    }
}

fn positions_tensor(clip: &MotionClip, device: &Device, dtype: DType) -> Result<Tensor> {
    let pos = clip.global_positions()?;
    let (t, j) = (pos.len(), clip.skeleton.len());
    let flat: Vec<f64> = pos.iter().flatten().flat_map(|v| v.to_array()).collect();
    Ok(Tensor::from_vec(flat, (t, j, 3), device)?.to_dtype(dtype)?)
}

impl Batch {
    pub fn new(fragments: &[&MotionClip], length: usize, buffer: usize, device: &Device, dtype: DType) -> Result<Self> {
        if fragments.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        if buffer == 0 || buffer > length / 2 {
            return Err(Error::invalid(format!("buffer {buffer} invalid for length {length}")));
        }
        let clips: Vec<MotionClip> = fragments
            .iter()
            .map(|c| {
                if c.len() < length + 2 {
                    return Err(Error::shape(format!("fragment of {} frames is shorter than {}", c.len(), length + 2)));
                }
                c.slice(0, length + 2)
            })
            .collect::<Result<_>>()?;
        let reversed: Vec<MotionClip> = clips.iter().map(reverse_clip).collect::<Result<_>>()?;
        let (tf, tb) = rollout_lengths(length, buffer);
        let firsts: Vec<_> = clips.iter().map(|c| &c.frames[0]).collect();
        let lasts: Vec<_> = clips.iter().map(|c| &c.frames[length + 1]).collect();
        let positions = clips
            .iter()
            .map(|c| positions_tensor(c, device, dtype))
            .collect::<Result<Vec<_>>>()?;
        Ok(Batch {
            length,
            buffer,
            start: PoseBatch::from_poses(&firsts, device, dtype)?,
            end: PoseBatch::from_poses(&lasts, device, dtype)?,
            forward: Truth::new(&clips, tf, device, dtype)?,
            backward: Truth::new(&reversed, tb, device, dtype)?,
            positions: Tensor::stack(&positions, 0)?,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.start.batch_size()
    }
}

/// Loss tensors of one forward pass. `generator` carries gradients into the
/// generators only; `discriminator` sees detached motion.
pub struct Objective {
    pub generator: Tensor,
    pub discriminator: Option<Tensor>,
    pub components: LossComponents,
}

struct SideLosses {
    state: Tensor,
    kl: Tensor,
    fk: Tensor,
    positions: Vec<Tensor>,
}

fn side_losses(skeleton: &Skeleton, outs: &[StepOutput], truth: &Truth, w: &LossWeights) -> Result<SideLosses> {
    let stack = |f: &dyn Fn(&StepOutput) -> Tensor| -> Result<Tensor> {
        Ok(Tensor::stack(&outs.iter().map(f).collect::<Vec<_>>(), 1)?)
    };
    let rotations = stack(&|o| o.pose.rotations.clone())?;
    let velocities = stack(&|o| o.pose.root_velocity.clone())?;
    let contacts = stack(&|o| o.contact_probabilities.clone())?;
    let state = state_loss_tensor(
        &StateTerms {
            rotations: &rotations,
            velocities: &velocities,
            contacts: &contacts,
        },
        &StateTerms {
            rotations: &truth.rotations,
            velocities: &truth.velocities,
            contacts: &truth.contacts,
        },
        w,
    )?;
    let dist = LatentDistribution::new(
        stack(&|o| o.distribution.mean.clone())?,
        stack(&|o| o.distribution.log_variance.clone())?,
    )?;
    let kl = kl_loss(&dist)?;
    let positions = outs
        .iter()
        .map(|o| forward_kinematics_tensor(skeleton, &o.pose.root_position, &o.pose.rotations))
        .collect::<Result<Vec<_>>>()?;
    let fk = (Tensor::stack(&positions, 1)? - &truth.positions)?
        .abs()?
        .sum((2, 3))?
        .mean_all()?;
    Ok(SideLosses { state, kl, fk, positions })
}

/// Root velocity `[B, T, 3]` as backward differences of joint-0 positions,
/// frame 0 copying frame 1.
fn root_differences(positions: &Tensor) -> Result<Tensor> {
    let t = positions.dims()[1];
    let root = positions.narrow(2, 0, 1)?.squeeze(2)?;
    let d = (root.narrow(1, 1, t - 1)? - root.narrow(1, 0, t - 1)?)?;
    Ok(Tensor::cat(&[&d.narrow(1, 0, 1)?, &d], 1)?)
}

/// Runs both generators on the batch and evaluates every objective term.
pub fn objective(model: &Model, batch: &Batch, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Objective> {
    let (l, k) = (batch.length, batch.buffer);
    let w = &cfg.loss_weights;
    let roll = rollout_pair(&model.forward, &model.backward, &batch.start, &batch.end, l, k, rng)?;
    let f = side_losses(&model.skeleton, &roll.forward, &batch.forward, w)?;
    let b = side_losses(&model.skeleton, &roll.backward, &batch.backward, w)?;
    let half = |x: &Tensor, y: &Tensor| -> Result<Tensor> { Ok((x + y)?.affine(0.5, 0.0)?) };
    let state = half(&f.state, &b.state)?;
    let kl = half(&f.kl, &b.kl)?;
    let fk = half(&f.fk, &b.fk)?.affine(cfg.loss_length_scale, 0.0)?;
    let (fo, bo) = overlap_tensors(&f.positions, &b.positions, l, k)?;
    let stitch = stitch_cost_tensor(&fo, &bo)?.affine(cfg.loss_length_scale, 0.0)?;

    // Stitched motion in position space, keys taken from the ground truth.
    let overlap = overlap_range(l, k);
    let mut frames = Vec::with_capacity(l + 2);
    frames.push(batch.positions.narrow(1, 0, 1)?.squeeze(1)?);
    for c in 1..=l {
        let fwd = f.positions.get(c - 1);
        let bwd = b.positions.get(l - c);
        frames.push(if c < overlap.start {
            fwd.expect("forward covers the first half").clone()
        } else if c >= overlap.end {
            bwd.expect("backward covers the second half").clone()
        } else {
            let wf = blend_weight(c - overlap.start + 1, k);
            let (fp, bp) = (fwd.expect("overlap"), bwd.expect("overlap"));
            (bp + (fp - bp)?.affine(wf, 0.0)?)?
        });
    }
    frames.push(batch.positions.narrow(1, l + 1, 1)?.squeeze(1)?);
    let fake_pos = Tensor::stack(&frames, 1)?;
    let fake = MotionFeatures::new(fake_pos.clone(), root_differences(&fake_pos)?)?;
    let real = MotionFeatures::new(batch.positions.clone(), root_differences(&batch.positions)?)?;

    let adversarial = if w.alpha5 > 0.0 {
        model.critics.lsgan_losses_fitting(&real, &fake, true)?.map(|(g, _)| g)
    } else {
        None
    };
    let discriminator = if w.alpha4 > 0.0 {
        model
            .critics
            .lsgan_losses_fitting(&real, &fake.detach(), false)?
            .map(|(_, d)| d)
    } else {
        None
    };
    let zero = state.zeros_like()?;
    let g_adv = adversarial.unwrap_or_else(|| zero.clone());
    let generator = weighted_sum(&[
        (1.0, &state),
        (w.alpha1, &kl),
        (w.alpha2, &stitch),
        (w.alpha3, &fk),
        (w.alpha5, &g_adv),
    ])?;
    let scalar = |t: &Tensor| -> Result<f64> { Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?) };
    let components = LossComponents {
        state: scalar(&state)?,
        kl: scalar(&kl)?,
        stitch: scalar(&stitch)?,
        fk: scalar(&fk)?,
        discriminator: discriminator.as_ref().map(scalar).transpose()?.unwrap_or(0.0),
        generator_adversarial: scalar(&g_adv)?,
    };
    Ok(Objective {
        generator,
        discriminator: discriminator.map(|d| d.affine(w.alpha4, 0.0)).transpose()?,
        components,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub epoch: usize,
    pub length: usize,
    pub batch_size: usize,
    pub components: LossComponents,
    /// `overall_loss` of the components.
    pub total: f64,
    /// Fragments dropped for being too short.
    pub skipped: usize,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    generator_opt: AdamW,
    critic_opt: AdamW,
    rng: ChaCha8Rng,
    step: usize,
    epoch: usize,
}

fn vars_of(g: &Generator) -> Vec<Var> {
    g.varmap().all_vars()
}

impl Trainer {
    pub fn new(config: TrainConfig, model: Model) -> Result<Self> {
        config.validate()?;
        let mut gen_vars = vars_of(&model.forward);
        gen_vars.extend(vars_of(&model.backward));
        let generator_opt = AdamW::new(gen_vars, config.adam(config.learning_rate))?;
        let critic_opt = AdamW::new(model.critics.varmap().all_vars(), config.adam(config.learning_rate))?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Trainer {
            config,
            model,
            generator_opt,
            critic_opt,
            rng,
            step: 0,
            epoch: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    fn buffer_for(&self, length: usize) -> usize {
        self.config.buffer.min(length / 2).max(1)
    }

    /// One generator update followed by one critic update on `fragments`
    /// truncated to `length + 2` frames.
    pub fn train_step(&mut self, fragments: &[&MotionClip], length: usize) -> Result<StepReport> {
        let usable: Vec<&MotionClip> = fragments.iter().copied().filter(|c| c.len() >= length + 2).collect();
        let skipped = fragments.len() - usable.len();
        if skipped > 0 {
            log::warn!("skipped {skipped} fragments shorter than {} frames", length + 2);
        }
        if usable.is_empty() {
            return Err(Error::invalid(format!("no fragment has the {} frames needed", length + 2)));
        }
        let m = &self.model;
        let batch = Batch::new(&usable, length, self.buffer_for(length), m.forward.device(), m.forward.dtype())?;
        let obj = objective(&self.model, &batch, &self.config, &mut self.rng)?;
        self.generator_opt.backward_step(&obj.generator)?;
        if let Some(d) = &obj.discriminator {
            self.critic_opt.backward_step(d)?;
        }
        let report = StepReport {
            step: self.step,
            epoch: self.epoch,
            length,
            batch_size: usable.len(),
            components: obj.components,
            total: crate::losses::overall_loss(&obj.components, &self.config.loss_weights),
            skipped,
        };
        self.step += 1;
        Ok(report)
    }

    /// Losses on a batch without updating, with noise seeded by `seed`.
    pub fn evaluate_batch(&self, fragments: &[&MotionClip], length: usize, seed: u64) -> Result<LossComponents> {
        let m = &self.model;
        let batch = Batch::new(fragments, length, self.buffer_for(length), m.forward.device(), m.forward.dtype())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(objective(&self.model, &batch, &self.config, &mut rng)?.components)
    }

    /// One shuffled pass over the fragments at the curriculum length.
    pub fn train_epoch(&mut self, fragments: &[MotionClip]) -> Result<Vec<StepReport>> {
        let length = curriculum_length(self.epoch, &self.config);
        let mut order: Vec<usize> = (0..fragments.len()).collect();
        order.shuffle(&mut self.rng);
        let mut reports = Vec::new();
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&MotionClip> = chunk.iter().map(|&i| &fragments[i]).collect();
            reports.push(self.train_step(&batch, length)?);
        }
        self.epoch += 1;
        Ok(reports)
    }

    /// Runs the remaining epochs of the schedule, logging every step.
    pub fn train(&mut self, fragments: &[MotionClip], mut log: Option<&mut LossLog>) -> Result<Vec<StepReport>> {
        if fragments.is_empty() {
            return Err(Error::invalid("no training fragments"));
        }
        let mut all = Vec::new();
        while self.epoch < self.config.total_epochs() {
            let reports = self.train_epoch(fragments)?;
            if let Some(log) = log.as_deref_mut() {
                for r in &reports {
                    record(log, r)?;
                }
                log.flush()?;
            }
            if let Some(last) = reports.last() {
                log::info!(
                    "epoch {} length {} loss {:.4} (state {:.4} kl {:.4} stitch {:.4} fk {:.4})",
                    last.epoch,
                    last.length,
                    last.total,
                    last.components.state,
                    last.components.kl,
                    last.components.stitch,
                    last.components.fk
                );
            }
            all.extend(reports);
        }
        Ok(all)
    }

    /// Pretrains both phase networks: the forward one on `clips`, the
    /// backward one on the reversed clips. Returns the per-epoch MSE of each.
    pub fn pretrain_phase(&mut self, clips: &[MotionClip]) -> Result<(Vec<f64>, Vec<f64>)> {
        let c = &self.config;
        let (epochs, lr, bs, seed) = (c.phase_epochs, c.phase_learning_rate, c.phase_batch_size, c.seed);
        // Standard moment decay here; the generator constants are tuned for the adversarial setup.
        let params = ParamsAdamW {
            beta1: 0.9,
            beta2: 0.999,
            ..c.adam(lr)
        };
        let reversed: Vec<MotionClip> = clips.iter().map(reverse_clip).collect::<Result<_>>()?;
        let f = pretrain_phase_net(self.model.forward.phase_net_mut(), clips, epochs, params.clone(), bs, seed)?;
        let b = pretrain_phase_net(self.model.backward.phase_net_mut(), &reversed, epochs, params, bs, seed ^ 1)?;
        Ok((f, b))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.model.save(dir, &self.config, self.epoch)
    }
}

fn record(log: &mut LossLog, r: &StepReport) -> Result<()> {
    let c = &r.components;
    for (name, v) in [
        ("total", r.total),
        ("state", c.state),
        ("kl", c.kl),
        ("stitch", c.stitch),
        ("fk", c.fk),
        ("discriminator", c.discriminator),
        ("generator_adversarial", c.generator_adversarial),
    ] {
        log.record(r.step, name, v)?;
    }
    Ok(())
}

/// Fits `net` to contact-cycle phase labels of `clips` by minibatch MSE.
/// Returns the full-corpus MSE after each epoch.
pub fn pretrain_phase_net(
    net: &mut PhaseNet,
    clips: &[MotionClip],
    epochs: usize,
    params: ParamsAdamW,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if clips.is_empty() || clips.iter().all(|c| c.is_empty()) {
        return Err(Error::invalid("phase pretraining needs a non-empty corpus"));
    }
    let varmap = net.varmap().clone();
    let device = varmap.all_vars()[0].device().clone();
    let dtype = varmap.all_vars()[0].dtype();
    let mut poses = Vec::new();
    let mut labels = Vec::new();
    for c in clips {
        let l = label_phases(c);
        poses.extend(c.frames.iter());
        labels.extend(l.values.iter().flat_map(|v| v.0));
    }
    let n = poses.len();
    let all = PoseBatch::from_poses(&poses, &device, dtype)?;
    let targets = Tensor::from_vec(labels, (n, 4), &device)?.to_dtype(dtype)?;
    let mse = |net: &PhaseNet, x: &PoseBatch, y: &Tensor| -> Result<Tensor> {
        Ok((net.forward(x)? - y)?.sqr()?.mean_all()?)
    };
    let mut opt = AdamW::new(varmap.all_vars(), params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let idx: Vec<&crate::motion::Pose> = chunk.iter().map(|&i| poses[i]).collect();
            let ids = Tensor::from_vec(chunk.iter().map(|&i| i as u32).collect::<Vec<_>>(), chunk.len(), &device)?;
            let x = PoseBatch::from_poses(&idx, &device, dtype)?;
            let loss = mse(net, &x, &targets.index_select(&ids, 0)?)?;
            opt.backward_step(&loss)?;
        }
        curve.push(mse(net, &all, &targets)?.to_dtype(DType::F64)?.to_scalar::<f64>()?);
    }
    Ok(curve)
}

/// Experiment file: a `[dataset]` table and a `[train]` table.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: crate::dataset::DatasetConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.train.validate()?;
        cfg.dataset.window.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml(&text)
    }
}
