use rand::seq::SliceRandom;
use rand::SeedableRng;

use super::{ModelConfig, OrderMode};
use crate::error::{Error, Result};
use crate::nn::gru::{GruStack, StackCache};
use crate::nn::layers::{linear, linear_backward, relu, relu_backward, softmax_rows, softmax_rows_backward};
use crate::nn::param::Rng64;
use crate::nn::tensor::{gemm, MatMut, MatRef};
use crate::nn::{InitKind, Param, ParamId, ParameterStore, Tensor2};
use crate::skeleton::{centroid, compute_stats, denormalize, normalize, order_for, NormStats, Ordering, Pose, Scene, Vec3};

/// Bilinear attention parameters: `A: E×E`, `b: 1×E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionParams {
    pub a: ParamId,
    pub b: ParamId,
}

/// Parameter layout and the forward/backward rules of the network. The
/// values live in a separate [`ParameterStore`] so the same layout can be
/// evaluated against perturbed copies.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub config: ModelConfig,
    pub rnn: GruStack,
    pub attention: Option<AttentionParams>,
    pub mlp: Vec<(ParamId, ParamId)>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub inputs: Tensor2,
    rnn: StackCache,
    pub embedding: Tensor2,
    scores_rhs: Option<Tensor2>,
    pub attention: Option<Tensor2>,
    pub updated: Tensor2,
    layer_inputs: Vec<Tensor2>,
    pre_activations: Vec<Tensor2>,
    pub output: Tensor2,
}

impl ForwardCache {
    /// Rectifier on/off pattern of the head.
    pub fn kinks(&self) -> impl Iterator<Item = bool> + '_ {
        self.pre_activations.iter().flat_map(|z| z.data().iter().map(|&v| v > 0.0))
    }
}

impl Architecture {
    /// Registers every tensor in a fresh store (values zero).
    pub fn build(config: &ModelConfig) -> Result<(Architecture, ParameterStore)> {
        config.validate()?;
        let mut store = ParameterStore::new();
        let rnn = GruStack::register(
            &mut store,
            "rnn",
            config.input_dim(),
            config.hidden,
            config.gru_layers,
            config.bidirectional,
        );
        let e = config.embed_dim();
        let attention = config.use_attention.then(|| AttentionParams {
            a: store.add(Param::zeros("att.a", e, e, InitKind::FanIn)),
            b: store.add(Param::zeros("att.b", 1, e, InitKind::Zeros)),
        });
        let dims = config.mlp_dims();
        let mlp = dims
            .windows(2)
            .enumerate()
            .map(|(l, d)| {
                (
                    store.add(Param::zeros(format!("head.l{l}.w"), d[0], d[1], InitKind::FanIn)),
                    store.add(Param::zeros(format!("head.l{l}.b"), 1, d[1], InitKind::Zeros)),
                )
            })
            .collect();
        Ok((
            Architecture {
                config: config.clone(),
                rnn,
                attention,
                mlp,
            },
            store,
        ))
    }

    /// Sequence order for person-of-interest `n` under the configured mode.
    pub fn ordering(&self, scene: &Scene, n: usize) -> Result<Ordering> {
        let base = order_for(scene, n, self.config.root_index)?;
        let mut perm = base.perm().to_vec();
        match self.config.order {
            OrderMode::Intuitive => return Ok(base),
            OrderMode::Reverse => perm[1..].reverse(),
            OrderMode::Random => {
                let persons = scene.persons();
                perm[1..].sort_by_key(|&m| persons[m].id);
                let mut rng = Rng64::seed_from_u64(persons[n].id ^ 0x5eed_0fde_ad0b_5e55);
                perm[1..].shuffle(&mut rng);
            }
        }
        Ordering::new(perm, n)
    }

    /// Offset subtracted from a pose before normalization: its joint
    /// centroid when centering, else the origin.
    pub fn anchor(&self, pose: &Pose) -> Vec3 {
        if self.config.center_poses {
            centroid(pose)
        } else {
            [0.0; 3]
        }
    }

    /// Normalized poses stacked in sequence order, `N×3J`.
    pub fn ordered_inputs(&self, scene: &Scene, ordering: &Ordering, stats: &NormStats) -> Result<Tensor2> {
        let rows = ordering
            .perm()
            .iter()
            .map(|&m| {
                let pose = scene.pose(m);
                let a = self.anchor(pose);
                normalize(&pose.translated([-a[0], -a[1], -a[2]]), stats)
            })
            .collect::<Result<Vec<_>>>()?;
        Tensor2::from_rows(&rows)
    }

    /// Pose in mm from a normalized output row of the person with input `pose`.
    pub fn decode(&self, row: &[f64], pose: &Pose, stats: &NormStats) -> Result<Pose> {
        Ok(denormalize(row, stats)?.translated(self.anchor(pose)))
    }

    /// Normalization statistics of the network inputs derived from `poses`.
    pub fn input_stats<'a>(&self, poses: impl IntoIterator<Item = &'a Pose>) -> Result<NormStats> {
        let shifted: Vec<Pose> = poses
            .into_iter()
            .map(|p| {
                let a = self.anchor(p);
                p.translated([-a[0], -a[1], -a[2]])
            })
            .collect();
        compute_stats(&shifted)
    }

    pub fn check_compat(&self, scene: &Scene, stats: &NormStats) -> Result<()> {
        let j = self.config.num_joints;
        if scene.num_joints() != j || stats.num_joints() != j {
            return Err(Error::JointCount {
                expected: j,
                got: if scene.num_joints() != j { scene.num_joints() } else { stats.num_joints() },
            });
        }
        Ok(())
    }

    /// `N×E` per-position embeddings.
    pub fn embed(&self, store: &ParameterStore, inputs: &Tensor2) -> Result<Tensor2> {
        Ok(self.rnn.forward(store, inputs)?.0)
    }

    /// Row-softmax of `W_nm = e_nᵀ(A e_m + b)`. Without attention parameters
    /// this is the identity.
    pub fn attention_weights(&self, store: &ParameterStore, emb: &Tensor2) -> Result<Tensor2> {
        match &self.attention {
            Some(att) => Ok(softmax_rows(&attention_scores(store, att, emb)?.0)),
            None => Ok(Tensor2::identity(emb.rows())),
        }
    }

    /// Shared head applied row-wise; `inputs` supplies the residual base.
    pub fn head(&self, store: &ParameterStore, updated: &Tensor2, inputs: &Tensor2) -> Result<Tensor2> {
        let mut h = updated.clone();
        for (l, &(w, b)) in self.mlp.iter().enumerate() {
            let z = linear(&h, store, w, b)?;
            h = if l + 1 < self.mlp.len() { relu(&z) } else { z };
        }
        if self.config.predict_residual {
            if inputs.shape() != h.shape() {
                return Err(Error::shape("head", "residual base shape"));
            }
            h.add_assign(inputs);
        }
        Ok(h)
    }

    pub fn forward(&self, store: &ParameterStore, inputs: &Tensor2) -> Result<ForwardCache> {
        if inputs.cols() != self.config.input_dim() {
            return Err(Error::shape("forward", format!("input width {}", inputs.cols())));
        }
        let (embedding, rnn) = self.rnn.forward(store, inputs)?;
        let (scores_rhs, attention, updated) = match &self.attention {
            Some(att) => {
                let (scores, rhs) = attention_scores(store, att, &embedding)?;
                let w = softmax_rows(&scores);
                let u = apply_attention(&w, &embedding)?;
                (Some(rhs), Some(w), u)
            }
            None => (None, None, embedding.clone()),
        };
        let mut layer_inputs = Vec::with_capacity(self.mlp.len());
        let mut pre_activations = Vec::with_capacity(self.mlp.len().saturating_sub(1));
        let mut h = updated.clone();
        for (l, &(w, b)) in self.mlp.iter().enumerate() {
            let z = linear(&h, store, w, b)?;
            layer_inputs.push(h);
            h = if l + 1 < self.mlp.len() {
                let a = relu(&z);
                pre_activations.push(z);
                a
            } else {
                z
            };
        }
        if self.config.predict_residual {
            h.add_assign(inputs);
        }
        Ok(ForwardCache {
            inputs: inputs.clone(),
            rnn,
            embedding,
            scores_rhs,
            attention,
            updated,
            layer_inputs,
            pre_activations,
            output: h,
        })
    }

    /// Accumulates parameter gradients for `∂L/∂output`.
    pub fn backward(&self, store: &mut ParameterStore, cache: &ForwardCache, d_output: &Tensor2) {
        let mut d = d_output.clone();
        for (l, &(w, b)) in self.mlp.iter().enumerate().rev() {
            if l + 1 < self.mlp.len() {
                d = relu_backward(&cache.pre_activations[l], &d);
            }
            d = linear_backward(store, w, b, &cache.layer_inputs[l], &d);
        }
        let d_emb = match (&self.attention, &cache.attention, &cache.scores_rhs) {
            (Some(att), Some(p), Some(rhs)) => attention_backward(store, att, &cache.embedding, rhs, p, &d),
            _ => d,
        };
        self.rnn.backward(store, &cache.rnn, &d_emb);
    }

    /// Test-time path: attention row and head evaluated for sequence position
    /// 0 only. Returns the normalized refined pose of the person-of-interest.
    pub fn refine_first(&self, store: &ParameterStore, inputs: &Tensor2) -> Result<Vec<f64>> {
        let emb = self.embed(store, inputs)?;
        let e = emb.cols();
        let u0 = match &self.attention {
            Some(att) => {
                let (a, b) = (store.value(att.a), store.value(att.b));
                // s_m = e_0·(A e_m) + e_0·b
                let e0 = emb.row(0);
                let mut e0a = vec![0.0; e];
                gemm(1.0, MatRef::row_vector(e0), a.view(), 0.0, MatMut::row_vector(&mut e0a));
                let bias = crate::nn::tensor::dot(e0, b.data());
                let scores: Vec<f64> = (0..emb.rows()).map(|m| crate::nn::tensor::dot(&e0a, emb.row(m)) + bias).collect();
                let w = softmax_rows(&Tensor2::from_vec(1, emb.rows(), scores)?);
                apply_attention(&w, &emb)?
            }
            None => emb.slice_rows(0, 1),
        };
        Ok(self.head(store, &u0, &inputs.slice_rows(0, 1))?.into_vec())
    }

    pub fn num_scalars(&self) -> usize {
        let e = self.config.embed_dim();
        let att = if self.attention.is_some() { e * e + e } else { 0 };
        let mlp: usize = self.config.mlp_dims().windows(2).map(|d| d[0] * d[1] + d[1]).sum();
        self.rnn.num_scalars() + att + mlp
    }
}

/// Raw scores `S = E·(E·Aᵀ)ᵀ + (E·bᵀ)1ᵀ` and the right factor `E·Aᵀ`.
pub(crate) fn attention_scores(store: &ParameterStore, att: &AttentionParams, emb: &Tensor2) -> Result<(Tensor2, Tensor2)> {
    let (a, b) = (store.value(att.a), store.value(att.b));
    let (n, e) = emb.shape();
    if a.shape() != (e, e) || b.shape() != (1, e) {
        return Err(Error::shape("attention", format!("E {e}, A {:?}", a.shape())));
    }
    let mut rhs = Tensor2::zeros(n, e);
    gemm(1.0, emb.view(), a.view().t(), 0.0, rhs.view_mut());
    let mut scores = Tensor2::zeros(n, n);
    gemm(1.0, emb.view(), rhs.view().t(), 0.0, scores.view_mut());
    for i in 0..n {
        let eb = crate::nn::tensor::dot(emb.row(i), b.data());
        scores.row_mut(i).iter_mut().for_each(|v| *v += eb);
    }
    Ok((scores, rhs))
}

pub(crate) fn attention_backward(
    store: &mut ParameterStore,
    att: &AttentionParams,
    emb: &Tensor2,
    rhs: &Tensor2,
    p: &Tensor2,
    d_updated: &Tensor2,
) -> Tensor2 {
    let (n, e) = emb.shape();
    // U = P·E
    let mut d_p = Tensor2::zeros(n, n);
    gemm(1.0, d_updated.view(), emb.view().t(), 0.0, d_p.view_mut());
    let mut d_emb = Tensor2::zeros(n, e);
    gemm(1.0, p.view().t(), d_updated.view(), 0.0, d_emb.view_mut());
    let d_s = softmax_rows_backward(p, &d_p);
    // S_nm = e_n·(rhs_m + b)
    gemm(1.0, d_s.view(), rhs.view(), 1.0, d_emb.view_mut());
    let row_sums: Vec<f64> = (0..n).map(|i| d_s.row(i).iter().sum()).collect();
    let b = store.value(att.b).data().to_vec();
    for (i, rs) in row_sums.iter().enumerate() {
        for (d, bv) in d_emb.row_mut(i).iter_mut().zip(&b) {
            *d += rs * bv;
        }
    }
    {
        let db = store.grad_mut(att.b);
        for (i, rs) in row_sums.iter().enumerate() {
            for (d, ev) in db.data_mut().iter_mut().zip(emb.row(i)) {
                *d += rs * ev;
            }
        }
    }
    // rhs = E·Aᵀ
    let mut d_rhs = Tensor2::zeros(n, e);
    gemm(1.0, d_s.view().t(), emb.view(), 0.0, d_rhs.view_mut());
    let Param { value: a, grad: da, .. } = &mut store[att.a];
    gemm(1.0, d_rhs.view(), a.view(), 1.0, d_emb.view_mut());
    gemm(1.0, d_rhs.view().t(), emb.view(), 1.0, da.view_mut());
    d_emb
}

/// `U = W·E`: row n is `Σ_m W_nm e_m`.
pub fn apply_attention(weights: &Tensor2, emb: &Tensor2) -> Result<Tensor2> {
    if weights.cols() != emb.rows() {
        return Err(Error::shape(
            "apply_attention",
            format!("{:?} x {:?}", weights.shape(), emb.shape()),
        ));
    }
    weights.matmul(emb)
}

/// Network parameters together with their layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PiNet {
    arch: Architecture,
    store: ParameterStore,
}

/// Output of a training-mode pass over one ordering.
#[derive(Debug, Clone)]
pub struct TrainPass {
    pub ordering: Ordering,
    /// Refined poses in the scene's person order.
    pub refined: Vec<Pose>,
    pub loss: f64,
    pub cache: ForwardCache,
    /// Denormalized predictions in sequence order (mm).
    pub predictions: Tensor2,
    /// Ground truth in sequence order (mm).
    pub targets: Tensor2,
}

impl PiNet {
    /// All parameters zero.
    pub fn zeroed(config: &ModelConfig) -> Result<Self> {
        let (arch, store) = Architecture::build(config)?;
        Ok(Self { arch, store })
    }

    /// Fan-in uniform weights, zero biases, deterministic in `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeroed(config)?;
        net.store.initialize(seed);
        Ok(net)
    }

    pub fn from_parts(arch: Architecture, store: ParameterStore) -> Self {
        Self { arch, store }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.arch.config
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    pub fn parts_mut(&mut self) -> (&Architecture, &mut ParameterStore) {
        (&self.arch, &mut self.store)
    }

    pub fn embed(&self, inputs: &Tensor2) -> Result<Tensor2> {
        self.arch.embed(&self.store, inputs)
    }

    pub fn attention_weights(&self, emb: &Tensor2) -> Result<Tensor2> {
        self.arch.attention_weights(&self.store, emb)
    }

    pub fn head(&self, updated: &Tensor2, inputs: &Tensor2) -> Result<Tensor2> {
        self.arch.head(&self.store, updated, inputs)
    }

    /// Full pass over every sequence position for person-of-interest `n`;
    /// L1 (mm) against the ground truth matched through the ordering.
    pub fn forward_train(&self, scene: &Scene, n: usize, stats: &NormStats) -> Result<(Vec<Pose>, f64)> {
        let pass = train_pass(&self.arch, &self.store, scene, n, stats)?;
        Ok((pass.refined, pass.loss))
    }

    /// Refined pose of person `n`, running attention and the head only for
    /// the person-of-interest.
    pub fn refine_person(&self, scene: &Scene, n: usize, stats: &NormStats) -> Result<Pose> {
        self.arch.check_compat(scene, stats)?;
        let ordering = self.arch.ordering(scene, n)?;
        let inputs = self.arch.ordered_inputs(scene, &ordering, stats)?;
        let out = self.arch.refine_first(&self.store, &inputs)?;
        self.arch.decode(&out, scene.pose(n), stats)
    }

    /// One independent refinement per person, each with its own ordering.
    pub fn refine_scene(&self, scene: &Scene, stats: &NormStats) -> Result<Vec<Pose>> {
        (0..scene.len()).map(|n| self.refine_person(scene, n, stats)).collect()
    }
}

/// Forward pass in training mode for one ordering, without gradients.
pub fn train_pass(arch: &Architecture, store: &ParameterStore, scene: &Scene, n: usize, stats: &NormStats) -> Result<TrainPass> {
    arch.check_compat(scene, stats)?;
    let gt = scene.gt().ok_or(Error::MissingGroundTruth)?;
    let ordering = arch.ordering(scene, n)?;
    let inputs = arch.ordered_inputs(scene, &ordering, stats)?;
    let cache = arch.forward(store, &inputs)?;
    let rows = cache.output.rows();
    let mut predictions = Tensor2::zeros(rows, cache.output.cols());
    let mut targets = Tensor2::zeros(rows, cache.output.cols());
    let mut refined: Vec<Option<Pose>> = vec![None; scene.len()];
    for (k, &m) in ordering.perm().iter().enumerate() {
        let pose = arch.decode(cache.output.row(k), scene.pose(m), stats)?;
        predictions.row_mut(k).copy_from_slice(&pose.flatten());
        targets.row_mut(k).copy_from_slice(&gt[m].flatten());
        refined[m] = Some(pose);
    }
    let loss = crate::nn::l1_loss(&predictions, &targets)?;
    Ok(TrainPass {
        ordering,
        refined: refined.into_iter().map(|p| p.expect("ordering is a permutation")).collect(),
        loss,
        cache,
        predictions,
        targets,
    })
}

/// Training-mode loss with gradients scaled by `weight` accumulated into the
/// store. Returns the unscaled loss.
pub fn accumulate_gradients(
    arch: &Architecture,
    store: &mut ParameterStore,
    scene: &Scene,
    n: usize,
    stats: &NormStats,
    weight: f64,
) -> Result<f64> {
    let pass = train_pass(arch, store, scene, n, stats)?;
    let mut d_out = crate::nn::l1_loss_grad(&pass.predictions, &pass.targets);
    for k in 0..d_out.rows() {
        for (g, s) in d_out.row_mut(k).iter_mut().zip(&stats.std) {
            *g *= s * weight;
        }
    }
    arch.backward(store, &pass.cache, &d_out);
    Ok(pass.loss)
}

/// Exact scalar parameter count for a configuration.
pub fn param_count(config: &ModelConfig) -> usize {
    let h = config.hidden;
    let dirs = if config.bidirectional { 2 } else { 1 };
    let e = config.embed_dim();
    let gru: usize = (0..config.gru_layers)
        .map(|l| {
            let d_in = if l == 0 { config.input_dim() } else { e };
            dirs * 3 * h * (d_in + h + 1)
        })
        .sum();
    let att = if config.use_attention { e * e + e } else { 0 };
    let mlp: usize = config.mlp_dims().windows(2).map(|d| d[0] * d[1] + d[1]).sum();
    gru + att + mlp
}
