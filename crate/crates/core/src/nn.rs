//! Small network building blocks shared by the generators and critics.

use candle_core::{Module, Tensor};
use candle_nn::{linear, Linear, VarBuilder, VarMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// Fully connected stack with ELU between layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Linear>,
    activate_output: bool,
}

impl Mlp {
    /// `dims` lists the input width followed by every layer's output width.
    pub fn new(dims: &[usize], activate_output: bool, vb: VarBuilder) -> Result<Self> {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| linear(w[0], w[1], vb.pp(format!("l{i}"))))
            .collect::<candle_core::Result<Vec<_>>>()?;
        Ok(Mlp {
            layers,
            activate_output,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(&h)?;
            if i < last || self.activate_output {
                h = h.elu(1.0)?;
            }
        }
        Ok(h)
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }
}

/// Deterministic re-initialization of every variable in `varmap`: uniform in
/// `±1/sqrt(fan_in)` where `fan_in` is a weight's last dimension; a bias uses
/// the fan-in of the weight with the same prefix. Variables are visited in
/// name order so the result depends only on `seed`.
pub fn init_varmap(varmap: &VarMap, seed: u64) -> Result<()> {
    let data = varmap.data().lock().expect("varmap lock poisoned");
    let mut names: Vec<&String> = data.keys().collect();
    names.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for name in names {
        let var = &data[name];
        let dims = var.dims().to_vec();
        let fan_in = if name.contains("bias") {
            let sibling = name.replace("bias", "weight");
            data.get(&sibling)
                .and_then(|w| w.dims().last().copied())
                .unwrap_or(dims[0])
        } else {
            *dims.last().unwrap_or(&1)
        };
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let count: usize = dims.iter().product();
        let values: Vec<f64> = (0..count).map(|_| rng.random_range(-bound..bound)).collect();
        let t = Tensor::from_vec(values, dims.as_slice(), var.device())?.to_dtype(var.dtype())?;
        var.set(&t)?;
    }
    Ok(())
}

/// Sets every variable matching `prefix` to zero.
pub fn zero_vars(varmap: &VarMap, prefix: &str) -> Result<()> {
    let data = varmap.data().lock().expect("varmap lock poisoned");
    for (name, var) in data.iter() {
        if name.starts_with(prefix) {
            var.set(&var.zeros_like()?)?;
        }
    }
    Ok(())
}

/// Snapshot of all variables as `(name, flattened f64 values)`, sorted by name.
pub fn snapshot(varmap: &VarMap) -> Result<Vec<(String, Vec<f64>)>> {
    let data = varmap.data().lock().expect("varmap lock poisoned");
    let mut out = Vec::with_capacity(data.len());
    for (name, var) in data.iter() {
        let v = var
            .as_tensor()
            .flatten_all()?
            .to_dtype(candle_core::DType::F64)?
            .to_vec1::<f64>()?;
        out.push((name.clone(), v));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}
