//! Training objectives and the long/short motion critics.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use candle_core::{DType, Device, Module, Tensor};
use candle_nn::{Linear, VarBuilder, VarMap};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{MotionClip, Skeleton, Vec3};
use crate::nn::{init_varmap, Mlp};
use crate::scvae::LatentDistribution;
use crate::tensor::forward_kinematics_tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub alpha5: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            beta1: 1.0,
            beta2: 1.0,
            beta3: 0.1,
            alpha1: 1.0,
            alpha2: 0.5,
            alpha3: 0.5,
            alpha4: 0.1,
            alpha5: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.beta1, self.beta2, self.beta3, self.alpha1, self.alpha2, self.alpha3, self.alpha4,
            self.alpha5,
        ];
        if all.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be >= 0: {self:?}")));
        }
        Ok(())
    }
}

fn l1(a: Vec3, b: Vec3) -> f64 {
    (a - b).l1()
}

/// Overlap L1 distance between the forward positions `p^f_t` and backward
/// positions `p^b_{L-t}` for `t` in `floor(L/2)-k+1 ..= floor(L/2)+k`, divided
/// by `2k`. Positions are `[frame][joint]`.
pub fn stitching_loss(
    forward: &[Vec<Vec3>],
    backward: &[Vec<Vec3>],
    length: usize,
    k: usize,
) -> Result<f64> {
    let half = length / 2;
    if k == 0 || k > half + 1 {
        return Err(Error::invalid(format!("buffer {k} invalid for length {length}")));
    }
    let (lo, hi) = (half + 1 - k, half + k);
    if hi >= forward.len() || length < hi || length - lo >= backward.len() {
        return Err(Error::shape(format!(
            "stitching window {lo}..={hi} needs {} forward and {} backward frames, got {} and {}",
            hi + 1,
            length - lo + 1,
            forward.len(),
            backward.len()
        )));
    }
    let mut total = 0.0;
    for t in lo..=hi {
        let (f, b) = (&forward[t], &backward[length - t]);
        if f.len() != b.len() {
            return Err(Error::shape("joint counts differ between sequences"));
        }
        total += f.iter().zip(b).map(|(x, y)| l1(*x, *y)).sum::<f64>();
    }
    Ok(total / (2 * k) as f64)
}

/// Per-frame L1 distance averaged over frames, for two equally long runs of
/// positions already aligned in time.
pub fn stitch_cost(forward_overlap: &[Vec<Vec3>], backward_overlap: &[Vec<Vec3>]) -> Result<f64> {
    if forward_overlap.len() != backward_overlap.len() || forward_overlap.is_empty() {
        return Err(Error::shape("overlaps must be non-empty and equally long"));
    }
    let total: f64 = forward_overlap
        .iter()
        .zip(backward_overlap)
        .map(|(f, b)| f.iter().zip(b).map(|(x, y)| l1(*x, *y)).sum::<f64>())
        .sum();
    Ok(total / forward_overlap.len() as f64)
}

/// Tensor form of [`stitch_cost`]: `[B, 2K, J, 3]` inputs, averaged over the
/// batch and the overlap frames.
pub fn stitch_cost_tensor(forward_overlap: &Tensor, backward_overlap: &Tensor) -> Result<Tensor> {
    let d = (forward_overlap - backward_overlap)?.abs()?;
    Ok(d.sum((2, 3))?.mean_all()?)
}

/// State reconstruction: `[B, T, J, 4]` rotations, `[B, T, 3]` velocities and
/// `[B, T, 4]` contact probabilities against 0/1 labels. Each term is an L1
/// sum per frame, averaged over frames and batch.
pub struct StateTerms<'a> {
    pub rotations: &'a Tensor,
    pub velocities: &'a Tensor,
    pub contacts: &'a Tensor,
}

pub fn state_loss_tensor(pred: &StateTerms, truth: &StateTerms, w: &LossWeights) -> Result<Tensor> {
    if pred.rotations.dims() != truth.rotations.dims()
        || pred.velocities.dims() != truth.velocities.dims()
        || pred.contacts.dims() != truth.contacts.dims()
    {
        return Err(Error::shape("prediction and truth differ in shape"));
    }
    let q = (pred.rotations - truth.rotations)?.abs()?.sum((2, 3))?.mean_all()?;
    let v = (pred.velocities - truth.velocities)?.abs()?.sum(2)?.mean_all()?;
    let c = (pred.contacts - truth.contacts)?.abs()?.sum(2)?.mean_all()?;
    Ok(((q.affine(w.beta1, 0.0)? + v.affine(w.beta2, 0.0)?)? + c.affine(w.beta3, 0.0)?)?)
}

/// Host form over clips, with contacts compared as 0/1.
pub fn state_loss(pred: &MotionClip, truth: &MotionClip, w: &LossWeights) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!(
            "prediction has {} frames, truth {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut total = 0.0;
    for (p, t) in pred.frames.iter().zip(&truth.frames) {
        if p.local_rotations.len() != t.local_rotations.len() {
            return Err(Error::shape("joint counts differ"));
        }
        let q: f64 = p
            .local_rotations
            .iter()
            .zip(&t.local_rotations)
            .map(|(a, b)| (a.w - b.w).abs() + (a.x - b.x).abs() + (a.y - b.y).abs() + (a.z - b.z).abs())
            .sum();
        let v = l1(p.root_velocity, t.root_velocity);
        let c = p.contacts.iter().zip(&t.contacts).filter(|(a, b)| a != b).count() as f64;
        total += w.beta1 * q + w.beta2 * v + w.beta3 * c;
    }
    Ok(total / pred.len() as f64)
}

/// Closed-form KL divergence to the standard normal, summed over the last
/// dimension and averaged over any leading dimensions.
pub fn kl_loss(dist: &LatentDistribution) -> Result<Tensor> {
    let lv = &dist.log_variance;
    let per = ((lv.exp()? + dist.mean.sqr()?)? - lv)?.affine(0.5, -0.5)?;
    let last = per.rank() - 1;
    Ok(per.sum(last)?.mean_all()?)
}

/// `[N, J, 4]` rotations and `[N, 3]` roots against `[N, J, 3]` positions: the
/// per-frame L1 over all joints, averaged over frames.
pub fn fk_loss(
    skeleton: &Skeleton,
    rotations: &Tensor,
    root: &Tensor,
    truth_positions: &Tensor,
) -> Result<Tensor> {
    let pred = forward_kinematics_tensor(skeleton, root, rotations)?;
    if pred.dims() != truth_positions.dims() {
        return Err(Error::shape(format!(
            "truth positions {:?}, expected {:?}",
            truth_positions.dims(),
            pred.dims()
        )));
    }
    Ok((pred - truth_positions)?.abs()?.sum((1, 2))?.mean_all()?)
}

/// Least-squares GAN objectives from critic scores:
/// `L_G = E[(D(fake) - 1)^2] / 2`, `L_D = E[(D(real) - 1)^2] / 2 + E[D(fake)^2] / 2`.
pub fn lsgan_from_scores(real: &Tensor, fake: &Tensor) -> Result<(Tensor, Tensor)> {
    let g = fake.affine(1.0, -1.0)?.sqr()?.mean_all()?.affine(0.5, 0.0)?;
    let d_real = real.affine(1.0, -1.0)?.sqr()?.mean_all()?;
    let d_fake = fake.sqr()?.mean_all()?;
    Ok((g, (d_real + d_fake)?.affine(0.5, 0.0)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    pub short_window: usize,
    pub long_window: usize,
    pub hidden: usize,
    /// Multiplies positions and velocities in the critic features.
    pub feature_scale: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            short_window: 2,
            long_window: 10,
            hidden: 256,
            feature_scale: 0.01,
        }
    }
}

/// Per-frame critic features `[B, T, F]` with `F = 3J + 3`: joint positions
/// relative to a reference root, and root velocity, both scaled.
pub struct MotionFeatures {
    pub positions: Tensor,
    pub root_velocity: Tensor,
}

impl MotionFeatures {
    pub fn new(positions: Tensor, root_velocity: Tensor) -> Result<Self> {
        let (b, t, _, three) = positions.dims4()?;
        if three != 3 || root_velocity.dims() != [b, t, 3] {
            return Err(Error::shape(format!(
                "feature shapes {:?} and {:?} disagree",
                positions.dims(),
                root_velocity.dims()
            )));
        }
        Ok(MotionFeatures {
            positions,
            root_velocity,
        })
    }

    pub fn frames(&self) -> usize {
        self.positions.dims()[1]
    }

    pub fn detach(&self) -> Self {
        MotionFeatures {
            positions: self.positions.detach(),
            root_velocity: self.root_velocity.detach(),
        }
    }

    /// All stride-1 windows flattened to `[B * windows, width * F]`. Positions
    /// are expressed relative to the root at each window's first frame.
    pub fn windows(&self, width: usize, scale: f64) -> Result<Tensor> {
        let (b, t, j, _) = self.positions.dims4()?;
        if width > t || width == 0 {
            return Err(Error::shape(format!(
                "critic window {width} longer than the {t}-frame sequence"
            )));
        }
        let mut rows = Vec::with_capacity(t - width + 1);
        for s in 0..=t - width {
            let origin = self.positions.narrow(1, s, 1)?.narrow(2, 0, 1)?;
            let pos = self.positions.narrow(1, s, width)?.broadcast_sub(&origin)?;
            let pos = pos.reshape((b, width, j * 3))?;
            let vel = self.root_velocity.narrow(1, s, width)?;
            let w = Tensor::cat(&[&pos, &vel], 2)?.reshape((b, width * (j * 3 + 3)))?;
            rows.push(w);
        }
        Ok(Tensor::cat(&rows, 0)?.affine(scale, 0.0)?)
    }
}

/// Fully connected critic over one window width.
pub struct Critic {
    pub window: usize,
    mlp: Mlp,
}

impl Critic {
    fn score(&self, windows: &Tensor, frozen: bool) -> Result<Tensor> {
        if !frozen {
            return self.mlp.forward(windows);
        }
        let layers = self.mlp.layers();
        let mut h = windows.clone();
        for (i, l) in layers.iter().enumerate() {
            let frozen = Linear::new(l.weight().detach(), l.bias().map(|b| b.detach()));
            h = frozen.forward(&h)?;
            if i + 1 < layers.len() {
                h = h.elu(1.0)?;
            }
        }
        Ok(h)
    }
}

/// The long/short critic pair with its own parameters.
pub struct DiscriminatorPair {
    pub config: DiscriminatorConfig,
    pub short: Critic,
    pub long: Critic,
    varmap: VarMap,
}

impl DiscriminatorPair {
    pub fn new(config: DiscriminatorConfig, joints: usize, seed: u64, device: &Device, dtype: DType) -> Result<Self> {
        if !(1 <= config.short_window && config.short_window < config.long_window) || config.hidden == 0 {
            return Err(Error::Config(format!(
                "critic windows need 1 <= short < long and hidden >= 1, got {config:?}"
            )));
        }
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, dtype, device);
        let f = joints * 3 + 3;
        let critic = |w: usize, name: &str| -> Result<Critic> {
            Ok(Critic {
                window: w,
                mlp: Mlp::new(&[w * f, config.hidden, config.hidden, 1], false, vb.pp(name))?,
            })
        };
        let short = critic(config.short_window, "short")?;
        let long = critic(config.long_window, "long")?;
        init_varmap(&varmap, seed)?;
        Ok(DiscriminatorPair {
            config,
            short,
            long,
            varmap,
        })
    }

    pub fn varmap(&self) -> &VarMap {
        &self.varmap
    }

    pub fn critics(&self) -> [&Critic; 2] {
        [&self.short, &self.long]
    }

    /// Scores every window of `features` with one critic.
    pub fn score(&self, critic: &Critic, features: &MotionFeatures, frozen: bool) -> Result<Tensor> {
        critic.score(&features.windows(critic.window, self.config.feature_scale)?, frozen)
    }

    /// `(L_G, L_D)` averaged over both critics; fails if a window is longer
    /// than either sequence.
    pub fn lsgan_losses(&self, real: &MotionFeatures, fake: &MotionFeatures) -> Result<(Tensor, Tensor)> {
        self.losses_over(&self.critics(), real, fake, false)
    }

    /// Like [`lsgan_losses`](Self::lsgan_losses) but only with the critics whose
    /// window fits the sequences; `None` if none does. With `frozen` the
    /// critic parameters receive no gradient.
    pub fn lsgan_losses_fitting(
        &self,
        real: &MotionFeatures,
        fake: &MotionFeatures,
        frozen: bool,
    ) -> Result<Option<(Tensor, Tensor)>> {
        let t = real.frames().min(fake.frames());
        let fitting: Vec<&Critic> = self.critics().into_iter().filter(|c| c.window <= t).collect();
        if fitting.is_empty() {
            return Ok(None);
        }
        Ok(Some(self.losses_over(&fitting, real, fake, frozen)?))
    }

    fn losses_over(
        &self,
        critics: &[&Critic],
        real: &MotionFeatures,
        fake: &MotionFeatures,
        frozen: bool,
    ) -> Result<(Tensor, Tensor)> {
        let mut gs = Vec::new();
        let mut ds = Vec::new();
        for c in critics {
            let (g, d) = lsgan_from_scores(
                &self.score(c, real, frozen)?,
                &self.score(c, fake, frozen)?,
            )?;
            gs.push(g);
            ds.push(d);
        }
        let n = critics.len() as f64;
        let mean = |v: Vec<Tensor>| -> Result<Tensor> { Ok(Tensor::stack(&v, 0)?.sum_all()?.affine(1.0 / n, 0.0)?) };
        Ok((mean(gs)?, mean(ds)?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(self.varmap.save(path)?)
    }

    pub fn load_weights(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            return Err(Error::file(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "weight file missing"),
            ));
        }
        self.varmap
            .load(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Scalar values of the terms that make up the overall objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub state: f64,
    pub kl: f64,
    pub stitch: f64,
    pub fk: f64,
    pub discriminator: f64,
    pub generator_adversarial: f64,
}

/// `L_state + a1 L_kl + a2 L_stitch + a3 L_fk + a4 L_D + a5 L_G`.
pub fn overall_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    c.state
        + w.alpha1 * c.kl
        + w.alpha2 * c.stitch
        + w.alpha3 * c.fk
        + w.alpha4 * c.discriminator
        + w.alpha5 * c.generator_adversarial
}

/// Tensor weighted sum, skipping zero-weight terms.
pub fn weighted_sum(terms: &[(f64, &Tensor)]) -> Result<Tensor> {
    let mut acc: Option<Tensor> = None;
    for (w, t) in terms {
        if *w == 0.0 {
            continue;
        }
        let s = t.affine(*w, 0.0)?;
        acc = Some(match acc {
            None => s,
            Some(a) => (a + s)?,
        });
    }
    match acc {
        Some(a) => Ok(a),
        None => Ok(terms
            .first()
            .ok_or_else(|| Error::invalid("no loss terms"))?
            .1
            .zeros_like()?),
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub loss_name: String,
    pub value: f64,
}

/// Append-only JSON-lines loss log.
pub struct LossLog {
    out: BufWriter<File>,
}

impl LossLog {
    pub fn open(path: &Path) -> Result<Self> {
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::file(path, e))?;
        Ok(LossLog { out: BufWriter::new(f) })
    }

    pub fn record(&mut self, step: usize, loss_name: &str, value: f64) -> Result<()> {
        let rec = LossRecord {
            step,
            loss_name: loss_name.to_string(),
            value,
        };
        serde_json::to_writer(&mut self.out, &rec)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        Ok(self.out.flush()?)
    }
}

pub fn read_loss_log(path: &Path) -> Result<Vec<LossRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{Pose, Quat};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn single(xs: &[f64]) -> Vec<Vec<Vec3>> {
        xs.iter().map(|&x| vec![Vec3::new(x, 0.0, 0.0)]).collect()
    }

    #[test]
    fn stitch_identical_overlap_is_zero() {
        let f = single(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        let b: Vec<_> = f.iter().rev().cloned().collect();
        assert_eq!(stitching_loss(&f, &b, 10, 2).unwrap(), 0.0);
    }

    #[test]
    fn stitch_hand_case() {
        // L = 10, k = 1: t = 5, 6 compare p^f_5 with p^b_5 and p^f_6 with p^b_4
        let f = single(&[0.0; 11]);
        let mut b = single(&[0.0; 11]);
        b[5][0].x = 1.0;
        b[4][0].x = -1.0;
        assert!((stitching_loss(&f, &b, 10, 1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stitch_is_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut f = single(&[0.0; 13]);
        let b = single(&[0.0; 13]);
        for p in f.iter_mut() {
            p[0] = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.3);
        }
        let doubled: Vec<_> = f.iter().map(|p| vec![p[0] * 2.0]).collect();
        let a = stitching_loss(&f, &b, 12, 3).unwrap();
        let d = stitching_loss(&doubled, &b, 12, 3).unwrap();
        assert!((d - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn stitch_rejects_short_inputs() {
        assert!(stitching_loss(&single(&[0.0; 5]), &single(&[0.0; 11]), 10, 1).is_err());
    }

    #[test]
    fn kl_closed_form_cases() {
        let d = Device::Cpu;
        let mk = |m: &[f64], v: &[f64]| {
            let lv: Vec<f64> = v.iter().map(|x| x.ln()).collect();
            LatentDistribution::new(Tensor::new(m, &d).unwrap(), Tensor::new(lv.as_slice(), &d).unwrap()).unwrap()
        };
        assert!(kl_loss(&mk(&[0.0, 0.0], &[1.0, 1.0])).unwrap().to_vec0::<f64>().unwrap().abs() < 1e-15);
        assert!((kl_loss(&mk(&[1.0, 0.0], &[1.0, 1.0])).unwrap().to_vec0::<f64>().unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn state_loss_hand_case() {
        let skel = Arc::new(Skeleton::synthetic_biped());
        let truth = MotionClip::new(skel.clone(), vec![Pose::identity(skel.len())], 30.0).unwrap();
        let mut pred = truth.clone();
        pred.frames[0].local_rotations[2] = Quat::new(1.0, 0.0, 0.0, 0.1);
        let w = LossWeights::default();
        assert!((state_loss(&pred, &truth, &w).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(state_loss(&truth, &truth, &w).unwrap(), 0.0);
        let mut flipped = truth.clone();
        flipped.frames[0].contacts[1] = true;
        let no_contact = LossWeights { beta3: 0.0, ..w };
        assert_eq!(state_loss(&flipped, &truth, &no_contact).unwrap(), 0.0);
    }

    #[test]
    fn fk_loss_shifted_truth() {
        let skel = Skeleton::synthetic_biped();
        let d = Device::Cpu;
        let j = skel.len();
        let l = 4;
        let rot = Tensor::new(&[1.0f64, 0.0, 0.0, 0.0], &d).unwrap().broadcast_as((l, j, 4)).unwrap().contiguous().unwrap();
        let root = Tensor::zeros((l, 3), DType::F64, &d).unwrap();
        let pos = forward_kinematics_tensor(&skel, &root, &rot).unwrap();
        let shift = Tensor::new(&[1.0f64, 0.0, 0.0], &d).unwrap();
        let truth = pos.broadcast_add(&shift).unwrap();
        let v = fk_loss(&skel, &rot, &root, &truth).unwrap().to_vec0::<f64>().unwrap();
        assert!((v - j as f64).abs() < 1e-12);
        assert!(fk_loss(&skel, &rot, &root, &pos).unwrap().to_vec0::<f64>().unwrap().abs() < 1e-12);
        let moved = fk_loss(
            &skel,
            &rot,
            &root.broadcast_add(&shift).unwrap(),
            &truth.broadcast_add(&shift).unwrap(),
        )
        .unwrap()
        .to_vec0::<f64>()
        .unwrap();
        assert!((moved - j as f64).abs() < 1e-9);
    }

    #[test]
    fn lsgan_constant_cases() {
        let d = Device::Cpu;
        let c = |v: f64| Tensor::full(v, 6, &d).unwrap();
        let (_, ld) = lsgan_from_scores(&c(1.0), &c(0.0)).unwrap();
        assert_eq!(ld.to_vec0::<f64>().unwrap(), 0.0);
        let (lg, ld) = lsgan_from_scores(&c(0.5), &c(0.5)).unwrap();
        assert!((ld.to_vec0::<f64>().unwrap() - 0.25).abs() < 1e-15);
        assert!((lg.to_vec0::<f64>().unwrap() - 0.125).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for i in 0..=10 {
            let (lg, _) = lsgan_from_scores(&c(1.0), &c(i as f64 / 10.0)).unwrap();
            let v = lg.to_vec0::<f64>().unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn overall_loss_weighting() {
        let w = LossWeights::default();
        assert_eq!(overall_loss(&LossComponents::default(), &w), 0.0);
        let c = LossComponents { stitch: 2.0, ..Default::default() };
        assert!((overall_loss(&c, &w) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn critic_windows_and_errors() {
        let d = Device::Cpu;
        let pair = DiscriminatorPair::new(
            DiscriminatorConfig { hidden: 8, ..Default::default() },
            2,
            0,
            &d,
            DType::F64,
        )
        .unwrap();
        let feats = |t: usize| {
            MotionFeatures::new(
                Tensor::ones((3, t, 2, 3), DType::F64, &d).unwrap(),
                Tensor::ones((3, t, 3), DType::F64, &d).unwrap(),
            )
            .unwrap()
        };
        let w = feats(12).windows(10, 1.0).unwrap();
        assert_eq!(w.dims(), &[3 * 3, 10 * 9]);
        assert!(pair.lsgan_losses(&feats(12), &feats(12)).is_ok());
        assert!(pair.lsgan_losses(&feats(7), &feats(7)).is_err());
        assert!(pair.lsgan_losses_fitting(&feats(7), &feats(7), false).unwrap().is_some());
        assert!(pair.lsgan_losses_fitting(&feats(1), &feats(1), false).unwrap().is_none());
        assert!(DiscriminatorPair::new(
            DiscriminatorConfig { short_window: 10, long_window: 10, ..Default::default() },
            2,
            0,
            &d,
            DType::F64
        )
        .is_err());
    }

    #[test]
    fn frozen_critic_passes_no_gradient_to_its_weights() {
        let d = Device::Cpu;
        let pair = DiscriminatorPair::new(
            DiscriminatorConfig { hidden: 4, ..Default::default() },
            1,
            0,
            &d,
            DType::F64,
        )
        .unwrap();
        let x = candle_core::Var::ones((1, 12, 1, 3), DType::F64, &d).unwrap();
        let fake = MotionFeatures::new(x.as_tensor().clone(), Tensor::ones((1, 12, 3), DType::F64, &d).unwrap()).unwrap();
        let real = fake.detach();
        let (g, _) = pair.lsgan_losses_fitting(&real, &fake, true).unwrap().unwrap();
        let grads = g.backward().unwrap();
        for v in pair.varmap().all_vars() {
            assert!(grads.get(v.as_tensor()).is_none());
        }
    }

    #[test]
    fn loss_log_appends_json_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.jsonl");
        {
            let mut log = LossLog::open(&path).unwrap();
            log.record(0, "state", 1.5).unwrap();
            log.flush().unwrap();
        }
        let mut log = LossLog::open(&path).unwrap();
        log.record(1, "kl", 0.25).unwrap();
        log.flush().unwrap();
        let recs = read_loss_log(&path).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1], LossRecord { step: 1, loss_name: "kl".into(), value: 0.25 });
    }

    proptest::proptest! {
        #[test]
        fn stitch_cost_symmetric(seed in 0u64..500, frames in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut gen = || -> Vec<Vec<Vec3>> {
                (0..frames).map(|_| (0..3).map(|_| Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0))).collect()).collect()
            };
            let (f, b) = (gen(), gen());
            proptest::prop_assert_eq!(stitch_cost(&f, &b).unwrap(), stitch_cost(&b, &f).unwrap());
        }

        #[test]
        fn verbatim_and_aligned_costs_agree(seed in 0u64..500, length in 2usize..30, kk in 1usize..6) {
            let k = kk.min(length / 2).max(1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut frame = || vec![Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), 0.0)];
            // p^f_t and p^b_s indexed so the formula's window is the overlap
            let parity = length & 1;
            let clip_frames = length + 2;
            let fwd: Vec<_> = (0..clip_frames).map(|_| frame()).collect();
            let bwd: Vec<_> = (0..clip_frames).map(|_| frame()).collect();
            let pf: Vec<_> = (0..=length).map(|t| fwd[(t + parity).min(clip_frames - 1)].clone()).collect();
            let pb: Vec<_> = (0..=length).map(|s| bwd[(length + parity).saturating_sub(s)].clone()).collect();
            let verbatim = stitching_loss(&pf, &pb, length, k).unwrap();
            let start = length.div_ceil(2) + 1 - k;
            let fo: Vec<_> = (start..start + 2 * k).map(|c| fwd[c].clone()).collect();
            let bo: Vec<_> = (start..start + 2 * k).map(|c| bwd[c].clone()).collect();
            let aligned = stitch_cost(&fo, &bo).unwrap();
            proptest::prop_assert!((verbatim - aligned).abs() < 1e-9);
        }
    }
}
