//! Named, seeded parameter storage with DIMT checkpointing and freeze audits.

use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use ndarray::{ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor_file::{load_f32, save_tensor_file, TensorData};

/// Each parameter draws from its own stream, keyed by (seed, name), so that
/// construction order never changes initial values.
fn param_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(h ^ seed.rotate_left(17))
}

pub type Fingerprints = BTreeMap<String, [u8; 32]>;

#[derive(Debug)]
pub struct ParamStore {
    dtype: DType,
    device: Device,
    seed: u64,
    vars: BTreeMap<String, Var>,
}

impl ParamStore {
    pub fn new(dtype: DType, seed: u64) -> Self {
        Self {
            dtype,
            device: Device::Cpu,
            seed,
            vars: BTreeMap::new(),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn insert(&mut self, name: &str, values: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(Error::invalid(format!("parameter {name} defined twice")));
        }
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(out)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<Tensor> {
        let mut rng = param_rng(self.seed, name);
        let dist = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
        let n = shape.iter().product();
        let values = (0..n).map(|_| dist.sample(&mut rng)).collect();
        self.insert(name, values, shape)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Tensor> {
        let n = shape.iter().product();
        self.insert(name, vec![value; n], shape)
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn vars_where(&self, keep: impl Fn(&str) -> bool) -> Vec<Var> {
        self.vars
            .iter()
            .filter(|(n, _)| keep(n))
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn named_vars(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(n, v)| (n.as_str(), v))
    }

    /// Number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    fn bytes_of(var: &Var) -> Result<Vec<u8>> {
        let flat = var.as_tensor().flatten_all()?;
        Ok(match flat.dtype() {
            DType::F64 => flat.to_vec1::<f64>()?.iter().flat_map(|v| v.to_le_bytes()).collect(),
            _ => flat
                .to_dtype(DType::F32)?
                .to_vec1::<f32>()?
                .iter()
                .flat_map(|v| v.to_le_bytes())
                .collect(),
        })
    }

    /// Per-parameter SHA-256 of the raw values, for bit-equality audits.
    pub fn fingerprints(&self, keep: impl Fn(&str) -> bool) -> Result<Fingerprints> {
        self.vars
            .iter()
            .filter(|(n, _)| keep(n))
            .map(|(n, v)| Ok((n.clone(), Sha256::digest(Self::bytes_of(v)?).into())))
            .collect()
    }

    /// Digest over every parameter name and value.
    pub fn digest(&self) -> Result<String> {
        let mut h = Sha256::new();
        for (n, v) in &self.vars {
            h.update(n.as_bytes());
            h.update(Self::bytes_of(v)?);
        }
        Ok(hex::encode(h.finalize()))
    }

    /// Fails with the first parameter whose bits differ from `before`.
    pub fn audit_unchanged(&self, before: &Fingerprints) -> Result<()> {
        for (name, digest) in before {
            let var = self
                .vars
                .get(name)
                .ok_or_else(|| Error::FrozenParameterChanged(name.clone()))?;
            let now: [u8; 32] = Sha256::digest(Self::bytes_of(var)?).into();
            if &now != digest {
                return Err(Error::FrozenParameterChanged(name.clone()));
            }
        }
        Ok(())
    }

    /// Writes one `<name>.dimt` (f32) per parameter.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, var) in &self.vars {
            let t = var.as_tensor();
            let values = t.flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()?;
            let arr = ArrayD::from_shape_vec(IxDyn(t.dims()), values)
                .map_err(|e| Error::shape(e.to_string()))?;
            save_tensor_file(dir.join(format!("{name}.dimt")), &TensorData::F32(arr))?;
        }
        Ok(())
    }

    /// Overwrites every parameter from `<name>.dimt` files written by [`save`](Self::save).
    pub fn load(&self, dir: &Path) -> Result<()> {
        for (name, var) in &self.vars {
            let path = dir.join(format!("{name}.dimt"));
            if !path.exists() {
                return Err(Error::MissingPrerequisite(format!("checkpoint tensor {}", path.display())));
            }
            let arr = load_f32(&path)?;
            if arr.shape() != var.dims() {
                return Err(Error::shape(format!(
                    "{name}: checkpoint shape {:?}, model shape {:?}",
                    arr.shape(),
                    var.dims()
                )));
            }
            let values: Vec<f32> = arr.iter().copied().collect();
            let t = Tensor::from_vec(values, var.dims(), &self.device)?.to_dtype(self.dtype)?;
            var.set(&t)?;
        }
        Ok(())
    }

    /// Copies values of every parameter selected by `keep` from `other` (same names and shapes).
    pub fn copy_from(&self, other: &ParamStore, keep: impl Fn(&str) -> bool) -> Result<()> {
        for (name, var) in self.vars.iter().filter(|(n, _)| keep(n)) {
            let src = other
                .vars
                .get(name)
                .ok_or_else(|| Error::MissingPrerequisite(format!("parameter {name} in source model")))?;
            if src.dims() != var.dims() {
                return Err(Error::shape(format!("{name}: shapes differ")));
            }
            var.set(&src.as_tensor().to_dtype(self.dtype)?)?;
        }
        Ok(())
    }
}
