//! The stitching conditional VAE generator.
//!
//! Three encoders embed the current pose, the offset to the target and the
//! target pose. An LSTM carries context across steps and two heads produce the
//! current and target latent distributions, which are blended by the step's
//! `gamma`. A phase-gated mixture-of-experts decoder maps the sampled latent and
//! the two pose embeddings to next-frame updates.

mod latent;
mod phase;

use std::path::Path;

use candle_core::{DType, Device, Module, Tensor};
use candle_nn::rnn::{LSTMState, RNN};
use candle_nn::{linear, lstm, LSTMConfig, Linear, VarBuilder, VarMap, LSTM};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{Pose, CONTACT_COUNT};
use crate::nn::{init_varmap, Mlp};
use crate::tensor::{normalize_last, PoseBatch};

pub use latent::{
    latent_interpolate, sample_latent, sample_with_noise, standard_normal, LatentDistribution,
    LOG_VARIANCE_BOUND,
};
pub use phase::{
    angle_difference, label_phases, pose_feature_dim, pose_features, PhaseLabels, PhaseNet,
    PhaseVector, PHASE_DIM,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    /// Step `s` of `T` uses `s / T`.
    #[default]
    Linear,
    /// Always the current-frame distribution.
    Current,
    /// Always the target-frame distribution.
    Target,
}

impl GammaMode {
    pub fn gamma(self, step: usize, total: usize) -> f64 {
        match self {
            GammaMode::Linear => step as f64 / total as f64,
            GammaMode::Current => 0.0,
            GammaMode::Target => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Draw from the blended encoder distribution.
    #[default]
    Posterior,
    /// Draw from the standard normal prior.
    Prior,
    /// Use the blended mean without noise.
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub latent_dim: usize,
    pub encoder_hidden: usize,
    pub recurrent_hidden: usize,
    pub expert_count: usize,
    pub expert_hidden: usize,
    pub phase_dim: usize,
    pub gate_hidden: usize,
    pub phase_hidden: usize,
    pub gamma_mode: GammaMode,
    pub sampling: SamplingMode,
    /// Root velocities are divided by this before entering the networks and
    /// the decoder's velocity head is multiplied by it.
    pub velocity_scale: f64,
    /// Divisor for the root position offset feature.
    pub offset_scale: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            latent_dim: 128,
            encoder_hidden: 256,
            recurrent_hidden: 512,
            expert_count: 4,
            expert_hidden: 256,
            phase_dim: PHASE_DIM,
            gate_hidden: 32,
            phase_hidden: 64,
            gamma_mode: GammaMode::Linear,
            sampling: SamplingMode::Posterior,
            velocity_scale: 5.0,
            offset_scale: 100.0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("latent_dim", self.latent_dim),
            ("encoder_hidden", self.encoder_hidden),
            ("recurrent_hidden", self.recurrent_hidden),
            ("expert_count", self.expert_count),
            ("expert_hidden", self.expert_hidden),
            ("gate_hidden", self.gate_hidden),
            ("phase_hidden", self.phase_hidden),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("generator {name} must be >= 1")));
        }
        if self.phase_dim != PHASE_DIM {
            return Err(Error::Config(format!(
                "phase_dim must be {PHASE_DIM} (a sin/cos pair per foot), got {}",
                self.phase_dim
            )));
        }
        if !(self.velocity_scale > 0.0 && self.offset_scale > 0.0) {
            return Err(Error::Config("velocity_scale and offset_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Rollout state of one generator over a batch.
#[derive(Clone, Debug)]
pub struct GeneratorState {
    pub recurrent: LSTMState,
    pub current: PoseBatch,
    pub target: PoseBatch,
    pub step_index: usize,
    pub total_steps: usize,
}

#[derive(Clone, Debug)]
pub struct Encoded {
    pub current: LatentDistribution,
    pub target: LatentDistribution,
    pub recurrent: LSTMState,
    pub state_embedding: Tensor,
    pub target_embedding: Tensor,
}

#[derive(Clone, Debug)]
pub struct DecoderOutput {
    /// `[B, 3]`, already multiplied by the velocity scale.
    pub root_velocity: Tensor,
    /// `[B, J, 4]`.
    pub quaternion_updates: Tensor,
    /// `[B, 4]`.
    pub contact_logits: Tensor,
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub pose: PoseBatch,
    /// Sigmoid of the contact logits, `[B, 4]`.
    pub contact_probabilities: Tensor,
    /// The blended distribution the latent was drawn from.
    pub distribution: LatentDistribution,
}

/// Names of the block prefixes inside a generator's variable map.
pub const GENERATOR_BLOCKS: [&str; 8] = [
    "state_encoder",
    "offset_encoder",
    "target_encoder",
    "lstm",
    "head_current",
    "head_target",
    "gate",
    "experts",
];

pub struct Generator {
    config: GeneratorConfig,
    joints: usize,
    device: Device,
    dtype: DType,
    varmap: VarMap,
    phase: PhaseNet,
    state_encoder: Mlp,
    offset_encoder: Mlp,
    target_encoder: Mlp,
    lstm: LSTM,
    head_current: Linear,
    head_target: Linear,
    gate: Mlp,
    experts: Vec<Linear>,
}

impl Generator {
    pub fn new(
        config: GeneratorConfig,
        joints: usize,
        seed: u64,
        device: &Device,
        dtype: DType,
    ) -> Result<Self> {
        config.validate()?;
        if joints == 0 {
            return Err(Error::shape("generator needs at least one joint"));
        }
        let c = &config;
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, dtype, device);
        let feat = pose_feature_dim(joints);
        let offset_dim = joints * 4 + 3;
        let h = c.encoder_hidden;
        let state_encoder = Mlp::new(&[feat, h, h, h], true, vb.pp("state_encoder"))?;
        let offset_encoder = Mlp::new(&[offset_dim, h, h, h], true, vb.pp("offset_encoder"))?;
        let target_encoder = Mlp::new(&[feat, h, h, h], true, vb.pp("target_encoder"))?;
        let lstm = lstm(3 * h, c.recurrent_hidden, LSTMConfig::default(), vb.pp("lstm"))?;
        let head_current = linear(c.recurrent_hidden + h, 2 * c.latent_dim, vb.pp("head_current"))?;
        let head_target = linear(c.recurrent_hidden + h, 2 * c.latent_dim, vb.pp("head_target"))?;
        let gate = Mlp::new(&[c.phase_dim, c.gate_hidden, c.expert_count], false, vb.pp("gate"))?;
        let e = c.expert_count;
        let dec_in = c.latent_dim + 2 * h;
        let dec_out = Self::decoder_out_dim(joints);
        let widths = [dec_in, c.expert_hidden, c.expert_hidden, dec_out];
        let experts = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| linear(w[0], e * w[1], vb.pp(format!("experts.l{i}"))))
            .collect::<candle_core::Result<Vec<_>>>()?;
        init_varmap(&varmap, seed)?;
        let phase = PhaseNet::new(
            joints,
            c.phase_hidden,
            c.velocity_scale,
            seed ^ 0x9e37_79b9_7f4a_7c15,
            device,
            dtype,
        )?;
        Ok(Generator {
            config,
            joints,
            device: device.clone(),
            dtype,
            varmap,
            phase,
            state_encoder,
            offset_encoder,
            target_encoder,
            lstm,
            head_current,
            head_target,
            gate,
            experts,
        })
    }

    fn decoder_out_dim(joints: usize) -> usize {
        3 + joints * 4 + CONTACT_COUNT
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    /// Trainable parameters (excludes the frozen phase network).
    pub fn varmap(&self) -> &VarMap {
        &self.varmap
    }

    pub fn phase_net(&self) -> &PhaseNet {
        &self.phase
    }

    pub fn phase_net_mut(&mut self) -> &mut PhaseNet {
        &mut self.phase
    }

    /// Starts a rollout of `total_steps` steps from `current` towards `target`.
    pub fn begin(&self, current: PoseBatch, target: PoseBatch, total_steps: usize) -> Result<GeneratorState> {
        self.check_batch(&current)?;
        self.check_batch(&target)?;
        if current.batch_size() != target.batch_size() {
            return Err(Error::shape("current and target batches differ in size"));
        }
        Ok(GeneratorState {
            recurrent: self.lstm.zero_state(current.batch_size())?,
            current,
            target,
            step_index: 0,
            total_steps,
        })
    }

    fn check_batch(&self, pose: &PoseBatch) -> Result<()> {
        if pose.joints() != self.joints {
            return Err(Error::shape(format!(
                "pose batch has {} joints, generator expects {}",
                pose.joints(),
                self.joints
            )));
        }
        Ok(())
    }

    fn offset_features(&self, current: &PoseBatch, target: &PoseBatch) -> Result<Tensor> {
        let b = current.batch_size();
        let dq = (&target.rotations - &current.rotations)?.reshape((b, self.joints * 4))?;
        let dr = (&target.root_position - &current.root_position)?
            .affine(1.0 / self.config.offset_scale, 0.0)?;
        Ok(Tensor::cat(&[&dq, &dr], 1)?)
    }

    pub fn encode(&self, state: &GeneratorState) -> Result<Encoded> {
        self.check_batch(&state.current)?;
        self.check_batch(&state.target)?;
        let vs = self.config.velocity_scale;
        let se = self.state_encoder.forward(&pose_features(&state.current, vs)?)?;
        let oe = self
            .offset_encoder
            .forward(&self.offset_features(&state.current, &state.target)?)?;
        let te = self.target_encoder.forward(&pose_features(&state.target, vs)?)?;
        let x = Tensor::cat(&[&se, &oe, &te], 1)?;
        let recurrent = self.lstm.step(&x, &state.recurrent)?;
        let h = recurrent.h();
        let d = self.config.latent_dim;
        let current = LatentDistribution::from_head(
            &self.head_current.forward(&Tensor::cat(&[h, &se], 1)?)?,
            d,
        )?;
        let target = LatentDistribution::from_head(
            &self.head_target.forward(&Tensor::cat(&[h, &te], 1)?)?,
            d,
        )?;
        Ok(Encoded {
            current,
            target,
            recurrent,
            state_embedding: se,
            target_embedding: te,
        })
    }

    /// Softmax expert coefficients `[B, E]` for a phase batch `[B, phase_dim]`.
    pub fn gate(&self, phase: &Tensor) -> Result<Tensor> {
        Ok(candle_nn::ops::softmax(&self.gate.forward(phase)?, 1)?)
    }

    pub fn decode(
        &self,
        z: &Tensor,
        state_embedding: &Tensor,
        target_embedding: &Tensor,
        phase: &Tensor,
    ) -> Result<DecoderOutput> {
        let coefficients = self.gate(phase)?;
        self.decode_with_coefficients(z, state_embedding, target_embedding, &coefficients)
    }

    /// Decoder with explicit expert coefficients. Each layer evaluates all
    /// experts and mixes their outputs, which equals evaluating one layer whose
    /// weights are the coefficient-weighted blend.
    pub fn decode_with_coefficients(
        &self,
        z: &Tensor,
        state_embedding: &Tensor,
        target_embedding: &Tensor,
        coefficients: &Tensor,
    ) -> Result<DecoderOutput> {
        if z.dims().last() != Some(&self.config.latent_dim) {
            return Err(Error::shape(format!(
                "latent has shape {:?}, expected last dimension {}",
                z.dims(),
                self.config.latent_dim
            )));
        }
        let b = z.dims()[0];
        let e = self.config.expert_count;
        let coeff = coefficients.reshape((b, e, 1))?;
        let mut h = Tensor::cat(&[z, state_embedding, target_embedding], 1)?;
        let last = self.experts.len() - 1;
        for (i, layer) in self.experts.iter().enumerate() {
            let all = layer.forward(&h)?;
            let width = all.dims()[1] / e;
            h = all.reshape((b, e, width))?.broadcast_mul(&coeff)?.sum(1)?;
            if i < last {
                h = h.elu(1.0)?;
            }
        }
        let j = self.joints;
        Ok(DecoderOutput {
            root_velocity: h.narrow(1, 0, 3)?.affine(self.config.velocity_scale, 0.0)?,
            quaternion_updates: h.narrow(1, 3, j * 4)?.reshape((b, j, 4))?,
            contact_logits: h.narrow(1, 3 + j * 4, CONTACT_COUNT)?,
        })
    }

    /// Phase of the current pose from the frozen phase network.
    pub fn current_phase(&self, pose: &PoseBatch) -> Result<Tensor> {
        Ok(self.phase.forward(&pose.detach())?.detach())
    }

    /// One autoregressive step with caller-provided noise `[B, latent_dim]`.
    pub fn step_with_noise(&self, state: &mut GeneratorState, eps: &Tensor) -> Result<StepOutput> {
        if state.step_index >= state.total_steps {
            return Err(Error::invalid(format!(
                "rollout already took all {} steps",
                state.total_steps
            )));
        }
        let gamma = self
            .config
            .gamma_mode
            .gamma(state.step_index + 1, state.total_steps);
        let enc = self.encode(state)?;
        let dist = latent_interpolate(&enc.current, &enc.target, gamma)?;
        let z = match self.config.sampling {
            SamplingMode::Posterior => sample_with_noise(&dist, eps)?,
            SamplingMode::Prior => eps.clone(),
            SamplingMode::Mean => dist.mean.clone(),
        };
        let phase = self.current_phase(&state.current)?;
        let out = self.decode(&z, &enc.state_embedding, &enc.target_embedding, &phase)?;
        let cur = &state.current;
        let root_velocity = out.root_velocity;
        let root_position = (&cur.root_position + &root_velocity)?;
        let rotations = normalize_last(&(&cur.rotations + &out.quaternion_updates)?)?;
        let contacts = out.contact_logits.gt(0.0)?.to_dtype(self.dtype)?.detach();
        let contact_probabilities = candle_nn::ops::sigmoid(&out.contact_logits)?;
        let pose = PoseBatch {
            root_position,
            root_velocity,
            rotations,
            contacts,
        };
        state.recurrent = enc.recurrent;
        state.current = pose.clone();
        state.step_index += 1;
        Ok(StepOutput {
            pose,
            contact_probabilities,
            distribution: dist,
        })
    }

    pub fn step(&self, state: &mut GeneratorState, rng: &mut impl Rng) -> Result<StepOutput> {
        let b = state.current.batch_size();
        let eps = standard_normal(rng, &[b, self.config.latent_dim], &self.device, self.dtype)?;
        self.step_with_noise(state, &eps)
    }

    /// Single-pose convenience wrapper around [`PhaseNet::identify_phase`].
    pub fn identify_phase(&self, pose: &Pose) -> Result<PhaseVector> {
        self.phase.identify_phase(pose)
    }

    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        self.varmap.save(dir.join(format!("{name}.safetensors")))?;
        self.phase.varmap.save(dir.join(format!("{name}_phase.safetensors")))?;
        Ok(())
    }

    pub fn load(
        config: GeneratorConfig,
        joints: usize,
        dir: &Path,
        name: &str,
        device: &Device,
        dtype: DType,
    ) -> Result<Self> {
        let mut g = Generator::new(config, joints, 0, device, dtype)?;
        for (vm, file) in [
            (&mut g.varmap, format!("{name}.safetensors")),
            (&mut g.phase.varmap, format!("{name}_phase.safetensors")),
        ] {
            let path = dir.join(&file);
            if !path.exists() {
                return Err(Error::file(
                    &path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "weight file missing"),
                ));
            }
            vm.load(&path)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        }
        Ok(g)
    }

    #[cfg(test)]
    pub(crate) fn expert_layers(&self) -> &[Linear] {
        &self.experts
    }
}
