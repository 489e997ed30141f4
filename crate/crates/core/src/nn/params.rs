//! Named parameter storage and initialisation.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Standard deviation of the truncated-normal weight initialiser.
pub const INIT_STD: f64 = 0.02;

/// Every trainable array of one network, keyed by a dotted path such as `enc.stem.weight`.
#[derive(Debug, Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    frozen: bool,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Frozen stores hand detached tensors to their layers, so no gradient reaches them.
    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Total scalar parameter count.
    pub fn num_parameters(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Number of distinct modules whose path has a component starting with `marker`.
    ///
    /// `count_modules("se_")` counts squeeze-excitation blocks, `count_modules("conv")`
    /// counts convolution layers.
    pub fn count_modules(&self, marker: &str) -> usize {
        let mut modules = std::collections::BTreeSet::new();
        for name in self.vars.keys() {
            let parts: Vec<&str> = name.split('.').collect();
            if let Some(pos) = parts.iter().position(|p| p.starts_with(marker)) {
                modules.insert(parts[..=pos].join("."));
            }
        }
        modules.len()
    }

    /// Copies of every parameter as plain tensors, keyed by name.
    pub fn snapshot(&self) -> Result<BTreeMap<String, Tensor>> {
        self.vars
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.as_tensor().copy()?)))
            .collect()
    }

    /// Overwrites parameters in place; names and shapes must match exactly.
    pub fn load(&self, values: &BTreeMap<String, Tensor>) -> Result<()> {
        if values.len() != self.vars.len() || !values.keys().eq(self.vars.keys()) {
            let missing: Vec<_> = self.vars.keys().filter(|k| !values.contains_key(*k)).collect();
            let extra: Vec<_> = values.keys().filter(|k| !self.vars.contains_key(*k)).collect();
            return Err(Error::Checkpoint(format!(
                "parameter set mismatch (missing {missing:?}, unexpected {extra:?})"
            )));
        }
        for (name, var) in &self.vars {
            let value = &values[name];
            if value.dims() != var.dims() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, checkpoint holds {:?}",
                    var.dims(),
                    value.dims()
                )));
            }
            var.set(&value.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }

    /// True when every parameter is bitwise equal to `other`.
    pub fn bit_equal(&self, other: &BTreeMap<String, Tensor>) -> Result<bool> {
        if !other.keys().eq(self.vars.keys()) {
            return Ok(false);
        }
        for (name, var) in &self.vars {
            let a = var.as_tensor().flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
            let b = other[name].flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
            if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| x.to_bits() != y.to_bits()) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub fn bit_equal_maps(a: &BTreeMap<String, Tensor>, b: &BTreeMap<String, Tensor>) -> Result<bool> {
    if !a.keys().eq(b.keys()) {
        return Ok(false);
    }
    for (k, ta) in a {
        let x = ta.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
        let y = b[k].flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
        if x.len() != y.len() || x.iter().zip(&y).any(|(p, q)| p.to_bits() != q.to_bits()) {
            return Ok(false);
        }
    }
    Ok(true)
}

struct BuilderState {
    vars: BTreeMap<String, Var>,
    rng: ChaCha8Rng,
    frozen: bool,
    dtype: DType,
    device: Device,
}

/// Hands out initialised parameters under a dotted prefix while a network is built.
#[derive(Clone)]
pub struct ParamBuilder {
    state: Rc<RefCell<BuilderState>>,
    prefix: String,
}

impl ParamBuilder {
    pub fn new(seed: u64, dtype: DType, device: &Device) -> Self {
        Self {
            state: Rc::new(RefCell::new(BuilderState {
                vars: BTreeMap::new(),
                rng: ChaCha8Rng::seed_from_u64(seed),
                frozen: false,
                dtype,
                device: device.clone(),
            })),
            prefix: String::new(),
        }
    }

    pub fn frozen(self) -> Self {
        self.state.borrow_mut().frozen = true;
        self
    }

    pub fn pp(&self, name: impl AsRef<str>) -> Self {
        let prefix = if self.prefix.is_empty() {
            name.as_ref().to_string()
        } else {
            format!("{}.{}", self.prefix, name.as_ref())
        };
        Self {
            state: Rc::clone(&self.state),
            prefix,
        }
    }

    fn full_name(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    fn register(&self, name: &str, values: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        let full = self.full_name(name);
        let mut st = self.state.borrow_mut();
        if st.vars.contains_key(&full) {
            return Err(Error::config(format!("duplicate parameter name {full}")));
        }
        let t = Tensor::from_vec(values, shape, &st.device)?.to_dtype(st.dtype)?;
        let var = Var::from_tensor(&t)?;
        let handle = if st.frozen {
            var.as_tensor().detach()
        } else {
            var.as_tensor().clone()
        };
        st.vars.insert(full, var);
        Ok(handle)
    }

    /// Truncated normal (`INIT_STD`, cut at two standard deviations).
    pub fn weight(&self, name: &str, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let values = {
            let mut st = self.state.borrow_mut();
            let normal = Normal::new(0.0, INIT_STD).expect("valid std");
            (0..n)
                .map(|_| loop {
                    let v: f64 = normal.sample(&mut st.rng);
                    if v.abs() <= 2.0 * INIT_STD {
                        break v;
                    }
                })
                .collect()
        };
        self.register(name, values, shape)
    }

    pub fn zeros(&self, name: &str, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        self.register(name, vec![0.0; n], shape)
    }

    pub fn finish(self) -> ParamStore {
        let st = self.state.borrow();
        ParamStore {
            vars: st.vars.clone(),
            frozen: st.frozen,
            dtype: st.dtype,
            device: st.device.clone(),
        }
    }
}
