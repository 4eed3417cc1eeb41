use std::collections::{BTreeMap, HashMap};

use candle_core::{DType, Device, Shape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Named trainable parameters, ordered by name.
///
/// Initial values are drawn from a caller-owned seeded RNG (always in `f32`,
/// then cast), so a given seed yields the same parameters for every dtype.
#[derive(Clone)]
pub struct ParamStore {
    device: Device,
    dtype: DType,
    vars: BTreeMap<String, Var>,
}

impl ParamStore {
    pub fn new(device: Device, dtype: DType) -> Self {
        Self {
            device,
            dtype,
            vars: BTreeMap::new(),
        }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    fn insert(&mut self, name: String, values: Vec<f32>, shape: Shape) -> Result<Tensor> {
        if self.vars.contains_key(&name) {
            return Err(Error::InvalidArgument(format!(
                "parameter `{name}` defined twice"
            )));
        }
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name, var);
        Ok(out)
    }

    pub fn normal(
        &mut self,
        name: impl Into<String>,
        shape: impl Into<Shape>,
        std: f32,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor> {
        let shape = shape.into();
        let dist = Normal::new(0.0f32, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let values = (0..shape.elem_count()).map(|_| dist.sample(rng)).collect();
        self.insert(name.into(), values, shape)
    }

    pub fn constant(
        &mut self,
        name: impl Into<String>,
        shape: impl Into<Shape>,
        value: f32,
    ) -> Result<Tensor> {
        let shape = shape.into();
        let values = vec![value; shape.elem_count()];
        self.insert(name.into(), values, shape)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn var(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    /// Vars whose names start with `prefix`, in name order.
    pub fn vars_with_prefix(&self, prefix: &str) -> Vec<Var> {
        self.vars
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn num_elements(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    pub fn tensors(&self) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect()
    }

    /// Overwrites every parameter from `values`; names and shapes must match
    /// exactly.
    pub fn load(&self, values: &HashMap<String, Tensor>) -> Result<()> {
        if values.len() != self.vars.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                self.vars.len(),
                values.len()
            )));
        }
        for (name, var) in &self.vars {
            let t = values
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
            if t.dims() != var.dims() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(&t.to_dtype(self.dtype)?.to_device(&self.device)?)?;
        }
        Ok(())
    }

    /// Bitwise equality of all parameter values.
    pub fn same_values(&self, other: &ParamStore) -> Result<bool> {
        if self.vars.len() != other.vars.len() {
            return Ok(false);
        }
        for ((ka, va), (kb, vb)) in self.vars.iter().zip(&other.vars) {
            if ka != kb || va.dims() != vb.dims() {
                return Ok(false);
            }
            let a = va.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
            let b = vb.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
            if a.iter().zip(&b).any(|(x, y)| x.to_bits() != y.to_bits()) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Seeded RNG for parameter initialization and sampling.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
