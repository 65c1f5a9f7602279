use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor2;
use crate::error::{Error, Result};

/// PRNG used for initialization and shuffling; recorded in checkpoints.
pub const PRNG_ALGORITHM: &str = "chacha8";

pub type Rng64 = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Whether a tensor is initialized as a weight matrix or as a bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// Uniform in ±1/√fan_in, with fan_in the number of rows.
    FanIn,
    Zeros,
}

/// A trainable tensor with its gradient and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor2,
    pub grad: Tensor2,
    pub adam_m: Tensor2,
    pub adam_v: Tensor2,
    pub init: InitKind,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor2, init: InitKind) -> Self {
        let (r, c) = value.shape();
        Self {
            name: name.into(),
            value,
            grad: Tensor2::zeros(r, c),
            adam_m: Tensor2::zeros(r, c),
            adam_v: Tensor2::zeros(r, c),
            init,
        }
    }

    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize, init: InitKind) -> Self {
        Self::new(name, Tensor2::zeros(rows, cols), init)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// All trainable tensors of a model, addressed by [`ParamId`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore {
    params: Vec<Param>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, param: Param) -> ParamId {
        self.params.push(param);
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor2 {
        &self.params[id.0].value
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.params[id.0].grad
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn scale_grad(&mut self, s: f64) {
        for p in &mut self.params {
            p.grad.scale(s);
        }
    }

    /// Fan-in uniform weights and zero biases, deterministic in `seed`.
    /// Tensors are filled in store order, row-major.
    pub fn initialize(&mut self, seed: u64) {
        let mut rng = Rng64::seed_from_u64(seed);
        for p in &mut self.params {
            match p.init {
                InitKind::Zeros => p.value.fill(0.0),
                InitKind::FanIn => {
                    let bound = 1.0 / (p.value.rows() as f64).sqrt();
                    for v in p.value.data_mut() {
                        *v = rng.random_range(-bound..bound);
                    }
                }
            }
            p.grad.fill(0.0);
            p.adam_m.fill(0.0);
            p.adam_v.fill(0.0);
        }
    }

    /// Copies values (not moments) from another store of identical layout.
    pub fn load_values(&mut self, other: &ParameterStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::shape("load_values", "parameter counts differ"));
        }
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            if a.shape() != b.shape() || a.name != b.name {
                return Err(Error::shape("load_values", format!("{} vs {}", a.name, b.name)));
            }
            a.value = b.value.clone();
        }
        Ok(())
    }
}

impl std::ops::Index<ParamId> for ParameterStore {
    type Output = Param;

    fn index(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }
}

impl std::ops::IndexMut<ParamId> for ParameterStore {
    fn index_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }
}
