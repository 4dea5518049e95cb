//! Evaluation metrics over transitions and the report tables.
//!
//! Transition clips hold `L + 2` frames with the keys at both ends. APD, ADE
//! and SLDE look only at the `L` generated frames in between; NPSS and foot
//! slide use every frame they are given.

use std::fmt::Write as _;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{MotionClip, Vec3};
use crate::slerp::interpolate_transition;
use crate::stitcher::{derive_seed, generate_samples, TransitionTask};
use crate::trainer::Model;

fn check_pair(pred: &MotionClip, truth: &MotionClip) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!(
            "prediction has {} frames, truth {}",
            pred.len(),
            truth.len()
        )));
    }
    if !pred.skeleton.same_topology(&truth.skeleton) {
        return Err(Error::shape("prediction and truth use different skeletons"));
    }
    Ok(())
}

/// Mean joint distance of each frame.
fn frame_errors(a: &[Vec<Vec3>], b: &[Vec<Vec3>]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(fa, fb)| fa.iter().zip(fb).map(|(x, y)| (*x - *y).norm()).sum::<f64>() / fa.len() as f64)
        .collect()
}

fn interior(clip: &MotionClip) -> Result<std::ops::Range<usize>> {
    if clip.len() < 3 {
        return Err(Error::shape(format!(
            "a transition needs at least 3 frames, got {}",
            clip.len()
        )));
    }
    Ok(1..clip.len() - 1)
}

/// Average pairwise distance: the mean over unordered sample pairs of the
/// mean joint distance over generated frames.
pub fn apd(samples: &[MotionClip]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::invalid("APD needs at least two samples"));
    }
    for s in &samples[1..] {
        check_pair(s, &samples[0])?;
    }
    let range = interior(&samples[0])?;
    let pos: Vec<Vec<Vec<Vec3>>> = samples
        .iter()
        .map(|s| Ok(s.global_positions()?[range.clone()].to_vec()))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            let e = frame_errors(&pos[i], &pos[j]);
            total += e.iter().sum::<f64>() / e.len() as f64;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Average displacement error over the generated frames.
pub fn ade(pred: &MotionClip, truth: &MotionClip) -> Result<f64> {
    check_pair(pred, truth)?;
    let range = interior(pred)?;
    let e = frame_errors(&pred.global_positions()?[range.clone()], &truth.global_positions()?[range]);
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// Displacement error at frame `L`, the last generated frame.
pub fn slde(pred: &MotionClip, truth: &MotionClip) -> Result<f64> {
    check_pair(pred, truth)?;
    if pred.len() < 2 {
        return Err(Error::shape("SLDE needs at least 2 frames"));
    }
    let t = pred.len() - 2;
    let a = pred.frames[t].global_positions(&pred.skeleton)?;
    let b = truth.frames[t].global_positions(&truth.skeleton)?;
    Ok(frame_errors(&[a], &[b])[0])
}

/// One-sided power spectrum without the DC bin: `|X_k|^2` for `k = 1..=T/2`.
pub fn power_spectrum(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[1..=n / 2].iter().map(|c| c.norm_sqr()).collect()
}

/// Earth mover's distance between two spectra normalized to unit mass, in
/// bins. A spectrum without power counts as flat.
pub fn spectral_emd(pred: &[f64], truth: &[f64]) -> f64 {
    let normalize = |p: &[f64]| -> Vec<f64> {
        let s: f64 = p.iter().sum();
        if s > 0.0 {
            p.iter().map(|x| x / s).collect()
        } else {
            vec![1.0 / p.len() as f64; p.len()]
        }
    };
    let (a, b) = (normalize(pred), normalize(truth));
    let (mut ca, mut cb, mut emd) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        ca += x;
        cb += y;
        emd += (ca - cb).abs();
    }
    emd
}

/// Spectral similarity of per-channel signals `[channel][time]`: the per-channel
/// EMD weighted by each truth channel's power.
pub fn npss_signals(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::shape("NPSS needs the same non-zero number of channels"));
    }
    let n = truth[0].len();
    if n < 4 || pred.iter().chain(truth).any(|c| c.len() != n) {
        return Err(Error::shape(format!("NPSS needs equal signal lengths >= 4, got {n}")));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (sp, st) = (power_spectrum(p), power_spectrum(t));
        let weight: f64 = st.iter().sum();
        if weight > 0.0 {
            num += weight * spectral_emd(&sp, &st);
            den += weight;
        }
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

fn rotation_channels(clip: &MotionClip) -> Vec<Vec<f64>> {
    let j = clip.skeleton.len();
    (0..4 * j)
        .map(|c| clip.frames.iter().map(|f| f.local_rotations[c / 4].to_array()[c % 4]).collect())
        .collect()
}

/// NPSS over the flattened quaternion channels of two clips.
pub fn npss(pred: &MotionClip, truth: &MotionClip) -> Result<f64> {
    check_pair(pred, truth)?;
    npss_signals(&rotation_channels(pred), &rotation_channels(truth))
}

/// Mean horizontal travel of stance contact joints per frame step. A joint
/// counts as stance in frame `t` when its flag is set there; its ground-plane
/// displacement since frame `t - 1` is accumulated.
pub fn foot_slide(clip: &MotionClip, up_axis: usize) -> Result<f64> {
    if clip.len() < 2 {
        return Err(Error::shape("foot slide needs at least 2 frames"));
    }
    if up_axis > 2 {
        return Err(Error::invalid(format!("up axis {up_axis} out of range")));
    }
    let joints = clip.skeleton.contact_joints()?;
    let pos = clip.global_positions()?;
    let mut total = 0.0;
    for t in 1..clip.len() {
        for (k, &j) in joints.iter().enumerate() {
            if clip.frames[t].contacts[k] {
                let mut d = pos[t][j] - pos[t - 1][j];
                match up_axis {
                    0 => d.x = 0.0,
                    1 => d.y = 0.0,
                    _ => d.z = 0.0,
                }
                total += d.norm();
            }
        }
    }
    Ok(total / (clip.len() - 1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementCurve {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Per-frame mean joint error of every sample against the truth, summarized
/// across samples.
pub fn displacement_curve(samples: &[MotionClip], truth: &MotionClip) -> Result<DisplacementCurve> {
    if samples.is_empty() {
        return Err(Error::invalid("displacement curve needs at least one sample"));
    }
    let tp = truth.global_positions()?;
    let n = truth.len();
    let mut curve = DisplacementCurve {
        min: vec![f64::INFINITY; n],
        max: vec![f64::NEG_INFINITY; n],
        mean: vec![0.0; n],
    };
    for s in samples {
        check_pair(s, truth)?;
        for (t, e) in frame_errors(&s.global_positions()?, &tp).into_iter().enumerate() {
            curve.min[t] = curve.min[t].min(e);
            curve.max[t] = curve.max[t].max(e);
            curve.mean[t] += e / samples.len() as f64;
        }
    }
    Ok(curve)
}

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub length: usize,
    pub tasks: usize,
    pub apd: f64,
    pub ade: f64,
    pub slde: f64,
    pub npss: f64,
    pub foot_slide: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub samples: usize,
    pub rows: Vec<MetricRow>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned table: APD, ADE, SLDE, NPSS, Foot Slide.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<8} {:>6} {:>6} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "method", "length", "tasks", "APD", "ADE", "SLDE", "NPSS", "Foot Slide"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<8} {:>6} {:>6} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
                r.method, r.length, r.tasks, r.apd, r.ade, r.slde, r.npss, r.foot_slide
            );
        }
        s
    }
}

pub enum Method<'a> {
    Slerp,
    Stitch { model: &'a Model, buffer: usize, search: usize },
}

impl Method<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Slerp => "slerp",
            Method::Stitch { .. } => "stitch",
        }
    }

    /// `samples` transitions between the keys of `truth`.
    pub fn transitions(&self, truth: &MotionClip, samples: usize, seed: u64) -> Result<Vec<MotionClip>> {
        let l = truth.len() - 2;
        let (start, end) = (&truth.frames[0], &truth.frames[l + 1]);
        match self {
            Method::Slerp => (0..samples)
                .map(|_| interpolate_transition(truth.skeleton.clone(), start, end, l, truth.frame_rate))
                .collect(),
            Method::Stitch { model, buffer, search } => {
                let task = TransitionTask {
                    start: start.clone(),
                    end: end.clone(),
                    length: l,
                    buffer: (*buffer).min(l / 2).max(1),
                    samples,
                    seed,
                };
                let skel: Arc<_> = truth.skeleton.clone();
                Ok(generate_samples(&model.forward, &model.backward, &skel, &task, *search, truth.frame_rate)?
                    .into_iter()
                    .map(|r| r.clip)
                    .collect())
            }
        }
    }
}

/// Task-averaged displacement envelope for one transition length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthCurve {
    pub length: usize,
    pub curve: DisplacementCurve,
}

pub struct Evaluation {
    pub report: Report,
    pub curves: Vec<LengthCurve>,
}

/// Metrics of `method` on one task per clip and length, averaged over tasks.
/// Clips shorter than `L + 2` are skipped for that length.
pub fn evaluate(
    method: &Method,
    clips: &[MotionClip],
    lengths: &[usize],
    samples: usize,
    seed: u64,
    up_axis: usize,
) -> Result<Evaluation> {
    if samples == 0 {
        return Err(Error::invalid("evaluation needs at least one sample"));
    }
    let mut rows = Vec::with_capacity(lengths.len());
    let mut curves = Vec::with_capacity(lengths.len());
    for &l in lengths {
        if l < 2 {
            return Err(Error::invalid(format!("transition length {l} < 2")));
        }
        let mut sums = [0.0; 5];
        let mut tasks = 0;
        let mut env = DisplacementCurve {
            min: vec![0.0; l + 2],
            max: vec![0.0; l + 2],
            mean: vec![0.0; l + 2],
        };
        for (i, clip) in clips.iter().enumerate() {
            if clip.len() < l + 2 {
                continue;
            }
            let truth = clip.slice(0, l + 2)?;
            let outs = method.transitions(&truth, samples, derive_seed(seed, i))?;
            let n = outs.len() as f64;
            sums[0] += if outs.len() >= 2 { apd(&outs)? } else { 0.0 };
            for o in &outs {
                sums[1] += ade(o, &truth)? / n;
                sums[2] += slde(o, &truth)? / n;
                sums[3] += npss(o, &truth)? / n;
                sums[4] += foot_slide(o, up_axis)? / n;
            }
            let c = displacement_curve(&outs, &truth)?;
            for t in 0..l + 2 {
                env.min[t] += c.min[t];
                env.max[t] += c.max[t];
                env.mean[t] += c.mean[t];
            }
            tasks += 1;
        }
        if tasks == 0 {
            return Err(Error::invalid(format!("no clip is long enough for length {l}")));
        }
        let m = |k: usize| sums[k] / tasks as f64;
        for v in [&mut env.min, &mut env.max, &mut env.mean] {
            v.iter_mut().for_each(|x| *x /= tasks as f64);
        }
        curves.push(LengthCurve { length: l, curve: env });
        rows.push(MetricRow {
            method: method.name().into(),
            length: l,
            tasks,
            apd: m(0),
            ade: m(1),
            slde: m(2),
            npss: m(3),
            foot_slide: m(4),
        });
    }
    Ok(Evaluation {
        report: Report {
            schema_version: REPORT_VERSION,
            samples,
            rows,
        },
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{Pose, Quat, Skeleton};
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn joint_skeleton() -> Arc<Skeleton> {
        let names = ["LeftFoot", "LeftToe", "RightFoot", "RightToe"].map(String::from);
        Arc::new(
            Skeleton::new(
                names.to_vec(),
                vec![None, Some(0), Some(0), Some(0)],
                vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 1.0, 0.0)],
            )
            .unwrap()
            .with_contact_joints(&names)
            .unwrap(),
        )
    }

    fn clip_from(skel: &Arc<Skeleton>, roots: &[Vec3]) -> MotionClip {
        let frames = roots
            .iter()
            .map(|r| Pose {
                root_position: *r,
                ..Pose::identity(skel.len())
            })
            .collect();
        MotionClip::new(skel.clone(), frames, 30.0).unwrap()
    }

    fn shifted(c: &MotionClip, d: Vec3, frames: std::ops::Range<usize>) -> MotionClip {
        let mut out = c.clone();
        for t in frames {
            out.frames[t].root_position += d;
        }
        out
    }

    fn walk(n: usize) -> MotionClip {
        let skel = joint_skeleton();
        let roots: Vec<Vec3> = (0..n).map(|t| Vec3::new(t as f64, 0.0, 0.5 * t as f64)).collect();
        clip_from(&skel, &roots)
    }

    #[test]
    fn apd_cases() {
        let a = walk(6);
        assert_eq!(apd(&[a.clone(), a.clone(), a.clone()]).unwrap(), 0.0);
        let b = shifted(&a, Vec3::new(1.0, 0.0, 0.0), 0..6);
        assert!((apd(&[a.clone(), b.clone()]).unwrap() - 1.0).abs() < 1e-12);
        let c = shifted(&a, Vec3::new(0.0, 3.0, 0.0), 0..6);
        let x = apd(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let y = apd(&[c, a.clone(), b]).unwrap();
        assert!((x - y).abs() < 1e-12);
        assert!(apd(&[a]).is_err());
    }

    #[test]
    fn ade_slde_hand_values() {
        let truth = walk(12);
        let l = 10;
        assert_eq!(ade(&truth, &truth).unwrap(), 0.0);
        let all = shifted(&truth, Vec3::new(0.0, 0.0, 1.0), 0..12);
        assert_eq!(ade(&all, &truth).unwrap(), 1.0);
        let one = shifted(&truth, Vec3::new(1.0, 0.0, 0.0), l..l + 1);
        assert_eq!(slde(&one, &truth).unwrap(), 1.0);
        assert!((ade(&one, &truth).unwrap() - 1.0 / l as f64).abs() < 1e-15);
        let other = shifted(&truth, Vec3::new(1.0, 0.0, 0.0), 3..4);
        assert_eq!(slde(&other, &truth).unwrap(), 0.0);
        assert!(ade(&truth.slice(0, 5).unwrap(), &truth).is_err());
    }

    #[test]
    fn foot_slide_cases() {
        let skel = joint_skeleton();
        let n = 9;
        let drag: Vec<Vec3> = (0..n).map(|t| Vec3::new(0.5 * t as f64, 0.0, 0.0)).collect();
        let mut clip = clip_from(&skel, &drag);
        assert_eq!(foot_slide(&clip, 1).unwrap(), 0.0);
        for f in &mut clip.frames {
            f.contacts = [true, false, false, false];
        }
        assert!((foot_slide(&clip, 1).unwrap() - 0.5).abs() < 1e-15);
        // vertical motion is not sliding
        let lift: Vec<Vec3> = (0..n).map(|t| Vec3::new(0.0, t as f64, 0.0)).collect();
        let mut planted = clip_from(&skel, &lift);
        for f in &mut planted.frames {
            f.contacts = [true; 4];
        }
        assert_eq!(foot_slide(&planted, 1).unwrap(), 0.0);
        let bare = MotionClip::new(
            Arc::new(Skeleton::new(vec!["r".into()], vec![None], vec![Vec3::ZERO]).unwrap()),
            vec![Pose::identity(1); 3],
            30.0,
        )
        .unwrap();
        assert!(foot_slide(&bare, 1).is_err());
    }

    /// Direct O(T^2) DFT and CDF walk.
    fn brute_npss(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> f64 {
        let spectrum = |x: &[f64]| -> Vec<f64> {
            let n = x.len();
            (1..=n / 2)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (t, v) in x.iter().enumerate() {
                        let a = TAU * (k * t) as f64 / n as f64;
                        re += v * a.cos();
                        im -= v * a.sin();
                    }
                    re * re + im * im
                })
                .collect()
        };
        let (mut num, mut den) = (0.0, 0.0);
        for (p, t) in pred.iter().zip(truth) {
            let (sp, st) = (spectrum(p), spectrum(t));
            let (zp, zt): (f64, f64) = (sp.iter().sum(), st.iter().sum());
            if zt == 0.0 {
                continue;
            }
            let mut acc = 0.0;
            for k in 0..sp.len() {
                let cp: f64 = if zp > 0.0 {
                    sp[..=k].iter().sum::<f64>() / zp
                } else {
                    (k + 1) as f64 / sp.len() as f64
                };
                let ct: f64 = st[..=k].iter().sum::<f64>() / zt;
                acc += (cp - ct).abs();
            }
            num += zt * acc;
            den += zt;
        }
        num / den
    }

    fn sine(bin: usize, n: usize) -> Vec<f64> {
        (0..n).map(|t| (TAU * (bin * t) as f64 / n as f64).sin()).collect()
    }

    #[test]
    fn npss_sine_bins() {
        let d = npss_signals(&[sine(2, 32)], &[sine(3, 32)]).unwrap();
        assert!((d - 1.0).abs() < 1e-12, "{d}");
        let d = npss_signals(&[sine(2, 32)], &[sine(6, 32)]).unwrap();
        assert!((d - 4.0).abs() < 1e-12, "{d}");
        assert_eq!(npss_signals(&[sine(2, 32)], &[sine(2, 32)]).unwrap(), 0.0);
    }

    #[test]
    fn npss_ignores_constant_offsets() {
        let p = sine(2, 16);
        let t = sine(5, 16);
        let base = npss_signals(std::slice::from_ref(&p), std::slice::from_ref(&t)).unwrap();
        let moved: Vec<f64> = p.iter().map(|x| x + 7.5).collect();
        assert!((npss_signals(&[moved], &[t]).unwrap() - base).abs() < 1e-9);
    }

    #[test]
    fn npss_zero_power_truth_has_no_weight() {
        let flat = vec![1.0; 8];
        let d = npss_signals(&[sine(1, 8), sine(2, 8)], &[flat, sine(3, 8)]).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn npss_matches_brute_force(seed in 0u64..1000, channels in 1usize..5) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut sig = || -> Vec<Vec<f64>> {
                (0..channels).map(|_| (0..32).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
            };
            let (p, t) = (sig(), sig());
            let fast = npss_signals(&p, &t).unwrap();
            prop_assert!((fast - brute_npss(&p, &t)).abs() < 1e-8);
        }

        #[test]
        fn distances_ignore_joint_translation(dx in -50.0..50.0f64, dy in -50.0..50.0f64, dz in -50.0..50.0f64, k in 1usize..8) {
            let truth = walk(10);
            let pred = shifted(&truth, Vec3::new(0.3, -0.2, 0.7), k..k + 1);
            let d = Vec3::new(dx, dy, dz);
            let (tm, pm) = (shifted(&truth, d, 0..10), shifted(&pred, d, 0..10));
            prop_assert!((ade(&pm, &tm).unwrap() - ade(&pred, &truth).unwrap()).abs() < 1e-9);
            prop_assert!((slde(&pm, &tm).unwrap() - slde(&pred, &truth).unwrap()).abs() < 1e-9);
            prop_assert!((apd(&[pm, tm]).unwrap() - apd(&[pred, truth]).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn metrics_are_non_negative(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let truth = walk(8);
            let mut pred = truth.clone();
            for f in &mut pred.frames {
                f.root_position += Vec3::new(rng.random_range(-1.0..1.0), 0.0, rng.random_range(-1.0..1.0));
                f.local_rotations[0] = Quat::about_axis(1, rng.random_range(-1.0..1.0));
                f.contacts = std::array::from_fn(|_| rng.random_bool(0.5));
            }
            prop_assert!(ade(&pred, &truth).unwrap() >= 0.0);
            prop_assert!(slde(&pred, &truth).unwrap() >= 0.0);
            prop_assert!(npss(&pred, &truth).unwrap() >= 0.0);
            prop_assert!(foot_slide(&pred, 1).unwrap() >= 0.0);
            prop_assert!(apd(&[pred.clone(), truth.clone()]).unwrap() >= 0.0);
            prop_assert_eq!(npss(&truth, &truth).unwrap(), 0.0);
        }
    }

    #[test]
    fn displacement_curve_envelope() {
        let truth = walk(7);
        let one = displacement_curve(std::slice::from_ref(&truth), &truth).unwrap();
        assert_eq!(one.min, one.max);
        assert_eq!(one.mean, one.min);
        let a = shifted(&truth, Vec3::new(1.0, 0.0, 0.0), 1..6);
        let b = shifted(&truth, Vec3::new(0.0, 2.0, 0.0), 2..6);
        let c = displacement_curve(&[a, b], &truth).unwrap();
        assert_eq!((c.min[0], c.max[0], c.max[6]), (0.0, 0.0, 0.0));
        assert_eq!((c.min[1], c.max[1], c.max[3]), (0.0, 1.0, 2.0));
        assert!(c.min.iter().zip(&c.max).all(|(lo, hi)| hi >= lo));
    }

    #[test]
    fn slerp_apd_is_exactly_zero() {
        let skel = Arc::new(Skeleton::synthetic_biped());
        let clip = crate::dataset::synth_gait(60, 3.0, skel).unwrap();
        let ev = evaluate(&Method::Slerp, &[clip], &[10, 30, 50], 3, 1, 1).unwrap();
        assert_eq!(ev.curves[1].curve.mean.len(), 32);
        assert_eq!(ev.curves[1].curve.mean[0], 0.0);
        let r = ev.report;
        assert_eq!(r.rows.len(), 3);
        for row in &r.rows {
            assert_eq!(row.apd, 0.0);
            assert!(row.ade > 0.0);
        }
        let text = r.to_text();
        let header = text.lines().next().unwrap();
        let cols = ["APD", "ADE", "SLDE", "NPSS", "Foot Slide"].map(|c| header.find(c).unwrap());
        assert!(cols.windows(2).all(|w| w[0] < w[1]));
        assert!(text.contains("0.000"));
        let back: Report = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
