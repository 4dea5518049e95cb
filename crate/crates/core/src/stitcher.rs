//! Bidirectional generation: the forward generator rolls out from the start
//! key and the backward generator from the end key in reversed time, each
//! conditioned on the other's newest frame. Their overlapping middles are
//! blended and the keyframes are copied in unchanged.

use std::sync::Arc;

use candle_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::stitch_cost;
use crate::motion::{derive_velocities_in_place, MotionClip, Pose, Skeleton};
use crate::scvae::{standard_normal, Generator, StepOutput};
use crate::slerp::slerp;
use crate::tensor::PoseBatch;

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionTask {
    pub start: Pose,
    pub end: Pose,
    /// Number of generated frames between the keys.
    pub length: usize,
    /// Synthesis buffer: frames each side runs past the middle.
    pub buffer: usize,
    pub samples: usize,
    pub seed: u64,
}

impl TransitionTask {
    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::invalid(format!("transition length {} < 2", self.length)));
        }
        if self.buffer < 1 || self.buffer > self.length / 2 {
            return Err(Error::invalid(format!(
                "buffer {} outside 1..={} for length {}",
                self.buffer,
                self.length / 2,
                self.length
            )));
        }
        Ok(())
    }
}

/// Frames generated by the forward and backward sides for a transition.
pub fn rollout_lengths(length: usize, buffer: usize) -> (usize, usize) {
    (length.div_ceil(2) + buffer, length / 2 + buffer)
}

/// Clip indices (in `0..=L+1`) of the `2K` overlap frames.
pub fn overlap_range(length: usize, buffer: usize) -> std::ops::Range<usize> {
    let start = length.div_ceil(2) + 1 - buffer;
    start..start + 2 * buffer
}

/// Forward weight of overlap frame `m` (1-based) of `2K`: `(2K - m + 1) / (2K + 1)`.
pub fn blend_weight(m: usize, buffer: usize) -> f64 {
    (2 * buffer - m + 1) as f64 / (2 * buffer + 1) as f64
}

#[derive(Clone, Debug)]
pub struct StitchResult {
    /// `L + 2` frames including both keyframes.
    pub clip: MotionClip,
    /// Forward frames for clip indices `1..=ceil(L/2)+K`.
    pub forward_raw: MotionClip,
    /// Backward frames in forward time, clip indices `L+1-(floor(L/2)+K)..=L`.
    pub backward_raw: MotionClip,
    /// Overlap L1 distance between the raw sequences.
    pub stitch_cost: f64,
    pub seed: u64,
}

/// Step outputs of a bidirectional rollout, each side in its own time.
pub struct PairRollout {
    pub forward: Vec<StepOutput>,
    pub backward: Vec<StepOutput>,
}

/// Alternating rollout over a batch. `start` and `end` are the keys in forward
/// time. Noise is drawn from `rng`, forward before backward in every round.
/// Targets handed across are detached from the other side's graph.
pub fn rollout_pair(
    forward: &Generator,
    backward: &Generator,
    start: &PoseBatch,
    end: &PoseBatch,
    length: usize,
    buffer: usize,
    rng: &mut impl Rng,
) -> Result<PairRollout> {
    let (tf, tb) = rollout_lengths(length, buffer);
    let b = start.batch_size();
    let mut fs = forward.begin(start.clone(), end.clone(), tf)?;
    let mut bs = backward.begin(end.time_reversed()?, start.time_reversed()?, tb)?;
    let mut out = PairRollout {
        forward: Vec::with_capacity(tf),
        backward: Vec::with_capacity(tb),
    };
    for i in 0..tf {
        let eps = noise(forward, b, rng)?;
        let f = forward.step_with_noise(&mut fs, &eps)?;
        if i < tb {
            bs.target = f.pose.time_reversed()?.detach();
            let eps = noise(backward, b, rng)?;
            let bk = backward.step_with_noise(&mut bs, &eps)?;
            fs.target = bk.pose.time_reversed()?.detach();
            out.backward.push(bk);
        }
        out.forward.push(f);
    }
    Ok(out)
}

fn noise(g: &Generator, batch: usize, rng: &mut impl Rng) -> Result<Tensor> {
    standard_normal(rng, &[batch, g.config().latent_dim], g.device(), g.dtype())
}

/// Blends the overlap of the raw sequences and adds the keys. `forward_raw`
/// covers clip indices `1..=ceil(L/2)+K`, `backward_raw` (in forward time)
/// `L+1-(floor(L/2)+K)..=L`.
pub fn blend_overlap(
    start: &Pose,
    end: &Pose,
    forward_raw: &MotionClip,
    backward_raw: &MotionClip,
    length: usize,
    buffer: usize,
) -> Result<MotionClip> {
    let (tf, tb) = rollout_lengths(length, buffer);
    if forward_raw.len() != tf || backward_raw.len() != tb {
        return Err(Error::shape(format!(
            "raw sequences have {} and {} frames, expected {tf} and {tb}",
            forward_raw.len(),
            backward_raw.len()
        )));
    }
    if buffer < 1 || buffer > length / 2 {
        return Err(Error::invalid(format!("buffer {buffer} invalid for length {length}")));
    }
    let back_first = length + 1 - tb;
    let overlap = overlap_range(length, buffer);
    let mut frames = Vec::with_capacity(length + 2);
    frames.push(start.clone());
    for c in 1..=length {
        let frame = if c < overlap.start {
            forward_raw.frames[c - 1].clone()
        } else if c >= overlap.end {
            backward_raw.frames[c - back_first].clone()
        } else {
            let w = blend_weight(c - overlap.start + 1, buffer);
            let f = &forward_raw.frames[c - 1];
            let b = &backward_raw.frames[c - back_first];
            Pose {
                root_position: b.root_position + (f.root_position - b.root_position) * w,
                root_velocity: b.root_velocity + (f.root_velocity - b.root_velocity) * w,
                local_rotations: f
                    .local_rotations
                    .iter()
                    .zip(&b.local_rotations)
                    .map(|(qf, qb)| slerp(*qf, *qb, 1.0 - w))
                    .collect(),
                contacts: if w > 0.5 { f.contacts } else { b.contacts },
            }
        };
        frames.push(frame);
    }
    frames.push(end.clone());
    MotionClip::new(forward_raw.skeleton.clone(), frames, forward_raw.frame_rate)
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of the `index`-th derived stream; index 0 is `base` itself.
pub fn derive_seed(base: u64, index: usize) -> u64 {
    if index == 0 {
        base
    } else {
        splitmix(base ^ splitmix(index as u64))
    }
}

fn check_models(forward: &Generator, backward: &Generator, skeleton: &Skeleton, task: &TransitionTask) -> Result<()> {
    task.validate()?;
    if forward.joints() != skeleton.len() || backward.joints() != skeleton.len() {
        return Err(Error::shape(format!(
            "generators expect {} and {} joints, skeleton has {}",
            forward.joints(),
            backward.joints(),
            skeleton.len()
        )));
    }
    task.start.validate(skeleton)?;
    task.end.validate(skeleton)?;
    Ok(())
}

fn outputs_to_poses(outputs: &[StepOutput]) -> Result<Vec<Pose>> {
    outputs
        .iter()
        .map(|o| Ok(o.pose.to_poses()?.remove(0)))
        .collect()
}

/// One stitched transition whose noise is drawn from a generator seeded with `seed`.
pub fn generate_bidirectional(
    forward: &Generator,
    backward: &Generator,
    skeleton: &Arc<Skeleton>,
    task: &TransitionTask,
    seed: u64,
    frame_rate: f64,
) -> Result<StitchResult> {
    check_models(forward, backward, skeleton, task)?;
    let (l, k) = (task.length, task.buffer);
    let device = forward.device();
    let start = PoseBatch::from_poses(&[&task.start], device, forward.dtype())?;
    let end = PoseBatch::from_poses(&[&task.end], device, forward.dtype())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let roll = rollout_pair(forward, backward, &start, &end, l, k, &mut rng)?;

    let fwd_frames = outputs_to_poses(&roll.forward)?;
    let mut back_frames: Vec<Pose> = outputs_to_poses(&roll.backward)?
        .into_iter()
        .rev()
        .collect();
    derive_velocities_in_place(&mut back_frames)?;
    let forward_raw = MotionClip::new(skeleton.clone(), fwd_frames, frame_rate)?;
    let backward_raw = MotionClip::new(skeleton.clone(), back_frames, frame_rate)?;

    let overlap = overlap_range(l, k);
    let back_first = l + 1 - backward_raw.len();
    let mut fo = Vec::with_capacity(2 * k);
    let mut bo = Vec::with_capacity(2 * k);
    for c in overlap {
        fo.push(forward_raw.frames[c - 1].global_positions(skeleton)?);
        bo.push(backward_raw.frames[c - back_first].global_positions(skeleton)?);
    }
    let cost = stitch_cost(&fo, &bo)?;
    let clip = blend_overlap(&task.start, &task.end, &forward_raw, &backward_raw, l, k)?;
    Ok(StitchResult {
        clip,
        forward_raw,
        backward_raw,
        stitch_cost: cost,
        seed,
    })
}

/// Runs `candidates` rollouts with seeds derived from `seed` and keeps the one
/// with the lowest stitch cost (the earliest on ties).
pub fn latent_pair_search(
    forward: &Generator,
    backward: &Generator,
    skeleton: &Arc<Skeleton>,
    task: &TransitionTask,
    seed: u64,
    candidates: usize,
    frame_rate: f64,
) -> Result<StitchResult> {
    if candidates < 1 {
        return Err(Error::invalid("latent pair search needs at least one candidate"));
    }
    let mut best: Option<StitchResult> = None;
    for i in 0..candidates {
        let r = generate_bidirectional(forward, backward, skeleton, task, derive_seed(seed, i), frame_rate)?;
        if best.as_ref().is_none_or(|b| r.stitch_cost < b.stitch_cost) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// `task.samples` transitions, sample `s` seeded by `derive_seed(task.seed, s)`;
/// with `search > 1` each sample is the best of that many candidates.
pub fn generate_samples(
    forward: &Generator,
    backward: &Generator,
    skeleton: &Arc<Skeleton>,
    task: &TransitionTask,
    search: usize,
    frame_rate: f64,
) -> Result<Vec<StitchResult>> {
    (0..task.samples.max(1))
        .map(|s| {
            let seed = derive_seed(task.seed, s);
            latent_pair_search(forward, backward, skeleton, task, seed, search.max(1), frame_rate)
        })
        .collect()
}

/// Summary written next to generated files.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StitchSummary {
    pub sample: usize,
    pub seed: u64,
    pub frames: usize,
    pub stitch_cost: f64,
    pub file: String,
}

/// Overlap positions of a batched rollout as `[B, 2K, J, 3]` tensors in
/// forward time, given per-step FK positions `[B, J, 3]` of each side.
pub fn overlap_tensors(
    forward_positions: &[Tensor],
    backward_positions: &[Tensor],
    length: usize,
    buffer: usize,
) -> Result<(Tensor, Tensor)> {
    let (_, tb) = rollout_lengths(length, buffer);
    let back_first = length + 1 - tb;
    let mut fo = Vec::with_capacity(2 * buffer);
    let mut bo = Vec::with_capacity(2 * buffer);
    for c in overlap_range(length, buffer) {
        fo.push(forward_positions[c - 1].clone());
        // clip index c is backward step L + 1 - c (1-based)
        let r = length + 1 - c;
        debug_assert!(c >= back_first);
        bo.push(backward_positions[r - 1].clone());
    }
    Ok((Tensor::stack(&fo, 1)?, Tensor::stack(&bo, 1)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{Quat, Vec3};
    use crate::scvae::GeneratorConfig;
    use candle_core::{DType, Device};

    fn constant_clip(skel: &Arc<Skeleton>, n: usize, x: f64) -> MotionClip {
        let frames = (0..n)
            .map(|_| Pose {
                root_position: Vec3::new(x, 0.0, 0.0),
                ..Pose::identity(skel.len())
            })
            .collect();
        MotionClip::new(skel.clone(), frames, 30.0).unwrap()
    }

    fn single_joint() -> Arc<Skeleton> {
        Arc::new(Skeleton::new(vec!["root".into()], vec![None], vec![Vec3::ZERO]).unwrap())
    }

    #[test]
    fn lengths_and_overlap() {
        assert_eq!(rollout_lengths(10, 2), (7, 7));
        assert_eq!(rollout_lengths(11, 2), (8, 7));
        assert_eq!(overlap_range(10, 2), 4..8);
        assert_eq!(overlap_range(11, 2), 5..9);
        for k in 1..6 {
            for m in 1..=2 * k {
                let w = blend_weight(m, k);
                assert!(w > 0.0 && w < 1.0);
                assert_eq!(w + (1.0 - w), 1.0);
            }
        }
    }

    #[test]
    fn hand_blend_k1() {
        let skel = single_joint();
        let (l, k) = (4, 1);
        let (tf, tb) = rollout_lengths(l, k);
        let fwd = constant_clip(&skel, tf, 1.0);
        let bwd = constant_clip(&skel, tb, 0.0);
        let key = Pose::identity(1);
        let out = blend_overlap(&key, &key, &fwd, &bwd, l, k).unwrap();
        assert_eq!(out.len(), l + 2);
        let xs: Vec<f64> = overlap_range(l, k).map(|c| out.frames[c].root_position.x).collect();
        assert!((xs[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((xs[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(out.frames[1].root_position.x, 1.0);
        assert_eq!(out.frames[4].root_position.x, 0.0);
    }

    #[test]
    fn equal_sources_blend_to_themselves() {
        let skel = Arc::new(Skeleton::synthetic_biped());
        for l in [6, 7] {
            let (tf, tb) = rollout_lengths(l, 2);
            let mut truth = constant_clip(&skel, l + 2, 0.0);
            for (t, f) in truth.frames.iter_mut().enumerate() {
                f.root_position.x = t as f64;
                f.local_rotations[1] = Quat::about_axis(1, 0.1 * t as f64);
            }
            let fwd = truth.slice(1, tf).unwrap();
            let bwd = truth.slice(l + 1 - tb, tb).unwrap();
            let out = blend_overlap(&truth.frames[0], &truth.frames[l + 1], &fwd, &bwd, l, 2).unwrap();
            for c in overlap_range(l, 2) {
                assert_eq!(out.frames[c].root_position, truth.frames[c].root_position);
                assert!(out.frames[c].local_rotations[1].angle_to(truth.frames[c].local_rotations[1]) < 1e-7);
            }
        }
    }

    #[test]
    fn blend_rejects_wrong_lengths() {
        let skel = single_joint();
        let key = Pose::identity(1);
        let f = constant_clip(&skel, 3, 0.0);
        assert!(blend_overlap(&key, &key, &f, &f, 10, 2).is_err());
    }

    fn tiny_models() -> (Generator, Generator) {
        let cfg = GeneratorConfig {
            latent_dim: 4,
            encoder_hidden: 8,
            recurrent_hidden: 8,
            expert_hidden: 8,
            gate_hidden: 4,
            phase_hidden: 4,
            ..GeneratorConfig::default()
        };
        (
            Generator::new(cfg.clone(), 11, 1, &Device::Cpu, DType::F32).unwrap(),
            Generator::new(cfg, 11, 2, &Device::Cpu, DType::F32).unwrap(),
        )
    }

    fn task(length: usize) -> TransitionTask {
        let mut start = Pose::identity(11);
        start.root_position = Vec3::new(0.0, 85.0, 0.0);
        start.root_velocity = Vec3::new(3.0, 0.0, 0.0);
        let mut end = start.clone();
        end.root_position.x = 3.0 * (length + 1) as f64;
        end.local_rotations[3] = Quat::about_axis(2, 0.3);
        TransitionTask { start, end, length, buffer: 2, samples: 1, seed: 5 }
    }

    #[test]
    fn untrained_rollout_keeps_structure() {
        let (f, b) = tiny_models();
        let skel = Arc::new(Skeleton::synthetic_biped());
        for l in [5, 8] {
            let t = task(l);
            let r = generate_bidirectional(&f, &b, &skel, &t, 9, 30.0).unwrap();
            let (tf, tb) = rollout_lengths(l, 2);
            assert_eq!(r.forward_raw.len(), tf);
            assert_eq!(r.backward_raw.len(), tb);
            assert_eq!(r.clip.len(), l + 2);
            assert_eq!(r.clip.frames[0], t.start);
            assert_eq!(r.clip.frames[l + 1], t.end);
            let again = generate_bidirectional(&f, &b, &skel, &t, 9, 30.0).unwrap();
            assert_eq!(again.clip, r.clip);
        }
    }

    #[test]
    fn search_returns_minimum() {
        let (f, b) = tiny_models();
        let skel = Arc::new(Skeleton::synthetic_biped());
        let t = task(6);
        let costs: Vec<f64> = (0..5)
            .map(|i| generate_bidirectional(&f, &b, &skel, &t, derive_seed(3, i), 30.0).unwrap().stitch_cost)
            .collect();
        let best = latent_pair_search(&f, &b, &skel, &t, 3, 5, 30.0).unwrap();
        assert_eq!(best.stitch_cost, costs.iter().cloned().fold(f64::INFINITY, f64::min));
        let one = latent_pair_search(&f, &b, &skel, &t, 3, 1, 30.0).unwrap();
        assert_eq!(one.clip, generate_bidirectional(&f, &b, &skel, &t, 3, 30.0).unwrap().clip);
    }

    #[test]
    fn task_validation() {
        let mut t = task(6);
        t.buffer = 4;
        assert!(t.validate().is_err());
        t.buffer = 0;
        assert!(t.validate().is_err());
        t.buffer = 1;
        t.length = 1;
        assert!(t.validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn blend_is_convex_and_sized(l in 2usize..30, kk in 1usize..6, a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let k = kk.min(l / 2).max(1);
            let skel = single_joint();
            let (tf, tb) = rollout_lengths(l, k);
            let key = Pose::identity(1);
            let out = blend_overlap(&key, &key, &constant_clip(&skel, tf, a), &constant_clip(&skel, tb, b), l, k).unwrap();
            proptest::prop_assert_eq!(out.len(), l + 2);
            for c in overlap_range(l, k) {
                let x = out.frames[c].root_position.x;
                proptest::prop_assert!(x >= a.min(b) - 1e-12 && x <= a.max(b) + 1e-12);
            }
        }
    }
}
