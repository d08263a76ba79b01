//! Small training substrate shared by the edge network and the detector:
//! seeded weight initialization, fixed bilinear up-sampling expressed as
//! matrix products (so it back-propagates through plain matmuls), and an
//! Adam optimizer whose moment state can be checkpointed for exact resume.

use std::collections::HashMap;

use candle_core::backprop::GradStore;
use candle_core::{DType, Device, Tensor, Var};
use candle_nn::VarMap;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// Overwrites every variable in the map with seeded values: zeros for names
/// ending in `bias`, uniform Kaiming-style `U(-b, b)` with
/// `b = sqrt(3 / fan_in)` otherwise. Variables are visited in sorted name
/// order so the result is identical across processes.
pub fn deterministic_init(varmap: &VarMap, seed: u64) -> Result<()> {
    let data = varmap.data().lock().unwrap();
    let mut names: Vec<&String> = data.keys().collect();
    names.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for name in names {
        let var = &data[name];
        let shape = var.shape().clone();
        let dims = shape.dims();
        let n: usize = dims.iter().product();
        let values: Vec<f32> = if name.ends_with("bias") || dims.len() < 2 {
            vec![0.0; n]
        } else {
            let fan_in: usize = dims[1..].iter().product();
            let bound = (3.0 / fan_in as f64).sqrt() as f32;
            (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        let t = Tensor::from_vec(values, shape, var.device())?.to_dtype(var.dtype())?;
        var.set(&t)?;
    }
    Ok(())
}

/// Interpolation matrix `(to, from)` for fixed bilinear resampling along one
/// axis; output sample `i` reads position `(i + 0.5) * from / to - 0.5` in
/// input coordinates, clamped at the ends.
pub fn bilinear_matrix(from: usize, to: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let mut data = vec![0.0f32; to * from];
    let scale = from as f64 / to as f64;
    for i in 0..to {
        let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (from - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(from - 1);
        let frac = pos - lo as f64;
        data[i * from + lo] += (1.0 - frac) as f32;
        if hi != lo {
            data[i * from + hi] += frac as f32;
        } else {
            // frac is 0 when clamped to the last sample
        }
    }
    Ok(Tensor::from_vec(data, (to, from), device)?.to_dtype(dtype)?)
}

/// Fixed bilinear up/down-sampling of an `(N, C, H, W)` tensor via two
/// matrix products; differentiable with respect to the input.
pub fn resize_bilinear(x: &Tensor, target_h: usize, target_w: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if (h, w) == (target_h, target_w) {
        return Ok(x.clone());
    }
    let a_h = bilinear_matrix(h, target_h, x.dtype(), x.device())?.unsqueeze(0)?;
    let a_w = bilinear_matrix(w, target_w, x.dtype(), x.device())?.t()?.unsqueeze(0)?;
    let flat = x.reshape((n * c, h, w))?;
    let rows = a_h.broadcast_matmul(&flat)?; // (n*c, target_h, w)
    let out = rows.broadcast_matmul(&a_w)?; // (n*c, target_h, target_w)
    Ok(out.reshape((n, c, target_h, target_w))?)
}

/// Adam with bias correction. Moments are kept per variable (sorted by
/// name) and can be saved/loaded so training resumes bit-for-bit.
pub struct Adam {
    entries: Vec<(String, Var)>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step_count: usize,
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(varmap: &VarMap, lr: f64) -> Result<Self> {
        let data = varmap.data().lock().unwrap();
        let mut entries: Vec<(String, Var)> =
            data.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let m = entries
            .iter()
            .map(|(_, v)| Tensor::zeros(v.shape(), v.dtype(), v.device()))
            .collect::<candle_core::Result<Vec<_>>>()?;
        let v = entries
            .iter()
            .map(|(_, var)| Tensor::zeros(var.shape(), var.dtype(), var.device()))
            .collect::<candle_core::Result<Vec<_>>>()?;
        Ok(Self {
            entries,
            m,
            v,
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        })
    }

    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for (i, (_, var)) in self.entries.iter().enumerate() {
            let Some(grad) = grads.get(var) else { continue };
            let m = ((&self.m[i] * self.beta1)? + (grad * (1.0 - self.beta1))?)?;
            let v = ((&self.v[i] * self.beta2)? + (grad.sqr()? * (1.0 - self.beta2))?)?;
            let m_hat = (&m / bc1)?;
            let v_hat = (&v / bc2)?;
            let update = (m_hat * self.lr)?.div(&(v_hat.sqrt()? + self.eps)?)?;
            var.set(&(var.as_tensor() - update)?)?;
            // detach so stored moments do not keep this step's graph alive
            self.m[i] = m.detach();
            self.v[i] = v.detach();
        }
        Ok(())
    }

    /// Serializes moments and step count as safetensors.
    pub fn save_state(&self, path: &std::path::Path) -> Result<()> {
        let mut map = HashMap::new();
        for (i, (name, _)) in self.entries.iter().enumerate() {
            map.insert(format!("m.{name}"), self.m[i].clone());
            map.insert(format!("v.{name}"), self.v[i].clone());
        }
        map.insert(
            "step_count".to_string(),
            Tensor::from_vec(vec![self.step_count as f64], 1, &Device::Cpu)?,
        );
        candle_core::safetensors::save(&map, path)?;
        Ok(())
    }

    pub fn load_state(&mut self, path: &std::path::Path) -> Result<()> {
        let map = candle_core::safetensors::load(path, &Device::Cpu)?;
        for (i, (name, _)) in self.entries.iter().enumerate() {
            self.m[i] = map
                .get(&format!("m.{name}"))
                .ok_or_else(|| {
                    crate::error::Error::InvalidConfig(format!("optimizer state missing {name}"))
                })?
                .clone();
            self.v[i] = map
                .get(&format!("v.{name}"))
                .ok_or_else(|| {
                    crate::error::Error::InvalidConfig(format!("optimizer state missing {name}"))
                })?
                .clone();
        }
        if let Some(t) = map.get("step_count") {
            self.step_count = t.to_vec1::<f64>()?[0] as usize;
        }
        Ok(())
    }
}

/// Converts an `ndarray` view to a tensor.
pub fn tensor_from_array2(a: &ndarray::Array2<f32>, device: &Device) -> Result<Tensor> {
    let (h, w) = a.dim();
    let data: Vec<f32> = a.iter().copied().collect();
    Ok(Tensor::from_vec(data, (h, w), device)?)
}

/// Converts a `(H, W)` tensor back to an `ndarray`.
pub fn array2_from_tensor(t: &Tensor) -> Result<ndarray::Array2<f32>> {
    let (h, w) = t.dims2()?;
    let data: Vec<f32> = t.flatten_all()?.to_vec1()?;
    Ok(ndarray::Array2::from_shape_vec((h, w), data)
        .expect("shape matches element count"))
}
