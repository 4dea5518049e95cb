use candle_core::{Device, DType, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const LOG_VARIANCE_BOUND: f64 = 10.0;

/// Diagonal Gaussian; `mean` and `log_variance` share a shape, typically
/// `[B, latent_dim]`.
#[derive(Clone, Debug)]
pub struct LatentDistribution {
    pub mean: Tensor,
    pub log_variance: Tensor,
}

impl LatentDistribution {
    pub fn new(mean: Tensor, log_variance: Tensor) -> Result<Self> {
        if mean.dims() != log_variance.dims() {
            return Err(Error::shape(format!(
                "mean {:?} and log-variance {:?} differ in shape",
                mean.dims(),
                log_variance.dims()
            )));
        }
        Ok(LatentDistribution { mean, log_variance })
    }

    /// Splits a head output `[B, 2 * D]` into mean and clamped log-variance.
    pub fn from_head(out: &Tensor, latent_dim: usize) -> Result<Self> {
        let mean = out.narrow(1, 0, latent_dim)?;
        let lv = out
            .narrow(1, latent_dim, latent_dim)?
            .clamp(-LOG_VARIANCE_BOUND, LOG_VARIANCE_BOUND)?;
        Self::new(mean, lv)
    }

    pub fn dim(&self) -> usize {
        *self.mean.dims().last().unwrap_or(&0)
    }

    pub fn variance(&self) -> Result<Tensor> {
        Ok(self.log_variance.exp()?)
    }

    pub fn detach(&self) -> Self {
        LatentDistribution {
            mean: self.mean.detach(),
            log_variance: self.log_variance.detach(),
        }
    }
}

/// Parameter-space blend: means and variances are mixed with weight `gamma`
/// on `target`. The endpoints return the corresponding input unchanged.
pub fn latent_interpolate(
    current: &LatentDistribution,
    target: &LatentDistribution,
    gamma: f64,
) -> Result<LatentDistribution> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    if current.mean.dims() != target.mean.dims() {
        return Err(Error::shape("latent distributions differ in dimension"));
    }
    if gamma == 0.0 {
        return Ok(current.clone());
    }
    if gamma == 1.0 {
        return Ok(target.clone());
    }
    let mean = (current.mean.affine(1.0 - gamma, 0.0)? + target.mean.affine(gamma, 0.0)?)?;
    let var = (current.variance()?.affine(1.0 - gamma, 0.0)? + target.variance()?.affine(gamma, 0.0)?)?;
    LatentDistribution::new(mean, var.log()?)
}

/// Standard normal noise with the given shape, drawn in f64 from `rng`.
pub fn standard_normal(
    rng: &mut impl Rng,
    shape: &[usize],
    device: &Device,
    dtype: DType,
) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Ok(Tensor::from_vec(v, shape, device)?.to_dtype(dtype)?)
}

/// Reparameterized draw `mean + exp(log_variance / 2) * eps` with given noise.
pub fn sample_with_noise(dist: &LatentDistribution, eps: &Tensor) -> Result<Tensor> {
    let std = dist.log_variance.affine(0.5, 0.0)?.exp()?;
    Ok((&dist.mean + std.mul(eps)?)?)
}

pub fn sample_latent(dist: &LatentDistribution, rng: &mut impl Rng) -> Result<Tensor> {
    let eps = standard_normal(rng, dist.mean.dims(), dist.mean.device(), dist.mean.dtype())?;
    sample_with_noise(dist, &eps)
}
