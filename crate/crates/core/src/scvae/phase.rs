use std::f64::consts::TAU;

use candle_core::{DType, Device, Tensor};
use candle_nn::{VarBuilder, VarMap};

use crate::error::{Error, Result};
use crate::motion::{MotionClip, Pose};
use crate::nn::{init_varmap, Mlp};
use crate::tensor::PoseBatch;

/// Phase outputs for the two feet, `(sin, cos)` per foot.
pub const PHASE_DIM: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseVector(pub [f64; PHASE_DIM]);

impl PhaseVector {
    pub fn from_phases(left: f64, right: f64) -> Self {
        let (a, b) = ((TAU * left).sin_cos(), (TAU * right).sin_cos());
        PhaseVector([a.0, a.1, b.0, b.1])
    }

    /// Angle of each `(sin, cos)` pair in radians.
    pub fn angles(&self) -> [f64; 2] {
        [self.0[0].atan2(self.0[1]), self.0[2].atan2(self.0[3])]
    }

    pub fn pair_norms(&self) -> [f64; 2] {
        [self.0[0].hypot(self.0[1]), self.0[2].hypot(self.0[3])]
    }
}

/// Smallest absolute difference between two angles.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[derive(Clone, Debug, Default)]
pub struct PhaseLabels {
    pub values: Vec<PhaseVector>,
    /// Per-foot cycle phase in `[0, 1)`.
    pub phases: Vec<[f64; 2]>,
    pub warnings: Vec<String>,
}

/// Contact-cycle phase labels. A foot's contact is its ankle or toe flag; the
/// phase runs linearly from 0 at one contact onset to 1 at the next. Frames
/// outside the observed onsets extrapolate the neighbouring cycle. With a
/// single onset the cycle is assumed to last one second of frames.
pub fn label_phases(clip: &MotionClip) -> PhaseLabels {
    let n = clip.len();
    let mut out = PhaseLabels {
        values: Vec::with_capacity(n),
        phases: vec![[0.0; 2]; n],
        warnings: Vec::new(),
    };
    for foot in 0..2 {
        let contact: Vec<bool> = clip
            .frames
            .iter()
            .map(|f| f.contacts[2 * foot] || f.contacts[2 * foot + 1])
            .collect();
        let onsets: Vec<usize> = (1..n).filter(|&t| contact[t] && !contact[t - 1]).collect();
        let side = if foot == 0 { "left" } else { "right" };
        let phase_at = |t: usize| -> f64 {
            let t = t as f64;
            match onsets.as_slice() {
                [] => 0.0,
                [a] => ((t - *a as f64) / clip.frame_rate.round().max(1.0)).rem_euclid(1.0),
                all => {
                    let i = all.partition_point(|&a| a as f64 <= t);
                    let k = i.clamp(1, all.len() - 1);
                    let (a, b) = (all[k - 1] as f64, all[k] as f64);
                    ((t - a) / (b - a)).rem_euclid(1.0)
                }
            }
        };
        match onsets.len() {
            0 => out.warnings.push(format!("{side} foot has no contact onset; phase held at 0")),
            1 => out.warnings.push(format!(
                "{side} foot has a single contact onset; assuming a {}-frame cycle",
                clip.frame_rate.round()
            )),
            _ => {}
        }
        for (t, p) in out.phases.iter_mut().enumerate() {
            p[foot] = phase_at(t);
        }
    }
    for w in &out.warnings {
        log::warn!("{w}");
    }
    out.values = out
        .phases
        .iter()
        .map(|p| PhaseVector::from_phases(p[0], p[1]))
        .collect();
    out
}

/// Input features of a pose batch shared by the state encoder and the phase
/// network: flattened rotations, contacts and scaled root velocity.
pub fn pose_features(pose: &PoseBatch, velocity_scale: f64) -> Result<Tensor> {
    let b = pose.batch_size();
    let rot = pose.rotations.reshape((b, pose.joints() * 4))?;
    let vel = pose.root_velocity.affine(1.0 / velocity_scale, 0.0)?;
    Ok(Tensor::cat(&[&rot, &pose.contacts, &vel], 1)?)
}

pub fn pose_feature_dim(joints: usize) -> usize {
    joints * 4 + crate::motion::CONTACT_COUNT + 3
}

/// Maps a pose to per-foot `(sin, cos)` phase pairs, each softly normalized.
pub struct PhaseNet {
    pub(crate) varmap: VarMap,
    mlp: Mlp,
    velocity_scale: f64,
    device: Device,
    dtype: DType,
}

impl PhaseNet {
    pub fn new(
        joints: usize,
        hidden: usize,
        velocity_scale: f64,
        seed: u64,
        device: &Device,
        dtype: DType,
    ) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::Config("phase network hidden size must be >= 1".into()));
        }
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, dtype, device);
        let mlp = Mlp::new(&[pose_feature_dim(joints), hidden, hidden, PHASE_DIM], false, vb.pp("phase"))?;
        init_varmap(&varmap, seed)?;
        Ok(PhaseNet {
            varmap,
            mlp,
            velocity_scale,
            device: device.clone(),
            dtype,
        })
    }

    pub fn forward(&self, pose: &PoseBatch) -> Result<Tensor> {
        let raw = self.mlp.forward(&pose_features(pose, self.velocity_scale)?)?;
        let b = pose.batch_size();
        let pairs = raw.reshape((b, PHASE_DIM / 2, 2))?;
        let norm = pairs.sqr()?.sum_keepdim(2)?.affine(1.0, 1e-4)?.sqrt()?;
        Ok(pairs.broadcast_div(&norm)?.reshape((b, PHASE_DIM))?)
    }

    pub fn identify_phase(&self, pose: &Pose) -> Result<PhaseVector> {
        let batch = PoseBatch::from_poses(&[pose], &self.device, self.dtype)?;
        let v: Vec<f64> = self.forward(&batch)?.squeeze(0)?.to_dtype(DType::F64)?.to_vec1()?;
        Ok(PhaseVector(std::array::from_fn(|i| v[i])))
    }

    pub fn varmap(&self) -> &VarMap {
        &self.varmap
    }

    pub fn velocity_scale(&self) -> f64 {
        self.velocity_scale
    }
}
