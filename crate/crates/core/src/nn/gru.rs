//! Gated recurrent units and (bi)directional GRU stacks with
//! backpropagation through time.
//!
//! Cell convention, row vectors, gate columns ordered `[reset | update | candidate]`:
//!
//! ```text
//! r  = σ(x·W_r + h·U_r + b_r)
//! z  = σ(x·W_z + h·U_z + b_z)
//! h̃  = tanh(x·W_h + (r ⊙ h)·U_h + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ h̃
//! ```

use super::tensor::{gemm, MatMut, MatRef, Tensor2};
use super::{InitKind, Param, ParamId, ParameterStore};
use crate::error::{Error, Result};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Parameters of one GRU direction: `w_in: D×3H`, `w_hid: H×3H`, `bias: 1×3H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruDirection {
    pub w_in: ParamId,
    pub w_hid: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl GruDirection {
    pub fn register(store: &mut ParameterStore, prefix: &str, input_dim: usize, hidden: usize) -> Self {
        let w_in = store.add(Param::zeros(format!("{prefix}.w_in"), input_dim, 3 * hidden, InitKind::FanIn));
        let w_hid = store.add(Param::zeros(format!("{prefix}.w_hid"), hidden, 3 * hidden, InitKind::FanIn));
        let bias = store.add(Param::zeros(format!("{prefix}.bias"), 1, 3 * hidden, InitKind::Zeros));
        Self {
            w_in,
            w_hid,
            bias,
            input_dim,
            hidden,
        }
    }

    pub fn num_scalars(&self) -> usize {
        let h = self.hidden;
        3 * h * (self.input_dim + h + 1)
    }
}

struct StepOut {
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    rh: Vec<f64>,
    h: Vec<f64>,
}

/// One cell update given the precomputed input projection `x·W + b` (3H).
fn step(xw: &[f64], h_prev: &[f64], u: &Tensor2) -> StepOut {
    let hd = h_prev.len();
    let mut hu = vec![0.0; 2 * hd];
    gemm(1.0, MatRef::row_vector(h_prev), u.view().cols_range(0, 2 * hd), 0.0, MatMut::row_vector(&mut hu));
    let r: Vec<f64> = (0..hd).map(|j| sigmoid(xw[j] + hu[j])).collect();
    let z: Vec<f64> = (0..hd).map(|j| sigmoid(xw[hd + j] + hu[hd + j])).collect();
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut an = xw[2 * hd..3 * hd].to_vec();
    gemm(1.0, MatRef::row_vector(&rh), u.view().cols_range(2 * hd, 3 * hd), 1.0, MatMut::row_vector(&mut an));
    let n: Vec<f64> = an.iter().map(|v| v.tanh()).collect();
    let h = (0..hd).map(|j| (1.0 - z[j]) * h_prev[j] + z[j] * n[j]).collect();
    StepOut { r, z, n, rh, h }
}

/// Single GRU cell evaluation.
pub fn gru_cell(x: &[f64], h_prev: &[f64], dir: &GruDirection, store: &ParameterStore) -> Result<Vec<f64>> {
    if x.len() != dir.input_dim || h_prev.len() != dir.hidden {
        return Err(Error::shape(
            "gru_cell",
            format!("x {} / h {} for D={} H={}", x.len(), h_prev.len(), dir.input_dim, dir.hidden),
        ));
    }
    let mut xw = store.value(dir.bias).data().to_vec();
    gemm(1.0, MatRef::row_vector(x), store.value(dir.w_in).view(), 1.0, MatMut::row_vector(&mut xw));
    Ok(step(&xw, h_prev, store.value(dir.w_hid)).h)
}

/// Per-time-step activations of one direction, rows indexed by time.
#[derive(Debug, Clone)]
struct DirCache {
    h_prev: Tensor2,
    r: Tensor2,
    z: Tensor2,
    n: Tensor2,
    rh: Tensor2,
}

fn time_order(len: usize, reversed: bool) -> impl DoubleEndedIterator<Item = usize> {
    (0..len).map(move |s| if reversed { len - 1 - s } else { s })
}

fn run_direction(dir: &GruDirection, store: &ParameterStore, x: &Tensor2, reversed: bool) -> (Tensor2, DirCache) {
    let (len, hd) = (x.rows(), dir.hidden);
    let bias = store.value(dir.bias);
    let mut xw = Tensor2::zeros(len, 3 * hd);
    for t in 0..len {
        xw.row_mut(t).copy_from_slice(bias.data());
    }
    gemm(1.0, x.view(), store.value(dir.w_in).view(), 1.0, xw.view_mut());
    let u = store.value(dir.w_hid);
    let mut cache = DirCache {
        h_prev: Tensor2::zeros(len, hd),
        r: Tensor2::zeros(len, hd),
        z: Tensor2::zeros(len, hd),
        n: Tensor2::zeros(len, hd),
        rh: Tensor2::zeros(len, hd),
    };
    let mut out = Tensor2::zeros(len, hd);
    let mut h = vec![0.0; hd];
    for t in time_order(len, reversed) {
        let s = step(xw.row(t), &h, u);
        cache.h_prev.row_mut(t).copy_from_slice(&h);
        cache.r.row_mut(t).copy_from_slice(&s.r);
        cache.z.row_mut(t).copy_from_slice(&s.z);
        cache.n.row_mut(t).copy_from_slice(&s.n);
        cache.rh.row_mut(t).copy_from_slice(&s.rh);
        out.row_mut(t).copy_from_slice(&s.h);
        h = s.h;
    }
    (out, cache)
}

/// Backpropagation through time for one direction. Accumulates parameter
/// gradients and adds the input gradient into `dx`.
fn backward_direction(
    dir: &GruDirection,
    store: &mut ParameterStore,
    cache: &DirCache,
    x: &Tensor2,
    d_out: MatRef<'_>,
    reversed: bool,
    dx: &mut Tensor2,
) {
    let (len, hd) = (x.rows(), dir.hidden);
    let mut da = Tensor2::zeros(len, 3 * hd);
    {
        let Param { value: u, grad: du, .. } = &mut store[dir.w_hid];
        let mut carry = vec![0.0; hd];
        let mut drh = vec![0.0; hd];
        for t in time_order(len, reversed).rev() {
            let (hp, r, z, n) = (cache.h_prev.row(t), cache.r.row(t), cache.z.row(t), cache.n.row(t));
            let mut dhp = vec![0.0; hd];
            {
                let row = da.row_mut(t);
                for j in 0..hd {
                    let dh = d_out.at(t, j) + carry[j];
                    let dz = dh * (n[j] - hp[j]);
                    let dn = dh * z[j];
                    dhp[j] = dh * (1.0 - z[j]);
                    row[hd + j] = dz * z[j] * (1.0 - z[j]);
                    row[2 * hd + j] = dn * (1.0 - n[j] * n[j]);
                }
            }
            gemm(1.0, da.view().rows_range(t, t + 1).cols_range(2 * hd, 3 * hd), u.view().cols_range(2 * hd, 3 * hd).t(), 0.0, MatMut::row_vector(&mut drh));
            {
                let row = da.row_mut(t);
                for j in 0..hd {
                    let dr = drh[j] * hp[j];
                    dhp[j] += drh[j] * r[j];
                    row[j] = dr * r[j] * (1.0 - r[j]);
                }
            }
            gemm(1.0, da.view().rows_range(t, t + 1).cols_range(0, 2 * hd), u.view().cols_range(0, 2 * hd).t(), 1.0, MatMut::row_vector(&mut dhp));
            carry = dhp;
        }
        gemm(1.0, cache.h_prev.view().t(), da.view().cols_range(0, 2 * hd), 1.0, du.view_mut().cols_range(0, 2 * hd));
        gemm(1.0, cache.rh.view().t(), da.view().cols_range(2 * hd, 3 * hd), 1.0, du.view_mut().cols_range(2 * hd, 3 * hd));
    }
    {
        let Param { value: w, grad: dw, .. } = &mut store[dir.w_in];
        gemm(1.0, x.view().t(), da.view(), 1.0, dw.view_mut());
        gemm(1.0, da.view(), w.view().t(), 1.0, dx.view_mut());
    }
    let db = store.grad_mut(dir.bias);
    for t in 0..len {
        for (d, v) in db.data_mut().iter_mut().zip(da.row(t)) {
            *d += v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruLayer {
    pub forward: GruDirection,
    pub backward: Option<GruDirection>,
}

/// Stack of GRU layers; with `bidirectional` every layer runs a forward and
/// a backward pass and emits the per-step concatenation `[fwd; bwd]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GruStack {
    pub layers: Vec<GruLayer>,
    pub input_dim: usize,
    pub hidden: usize,
    pub bidirectional: bool,
}

/// Activations kept from the forward pass of a stack.
#[derive(Debug, Clone)]
pub struct StackCache {
    inputs: Vec<Tensor2>,
    dirs: Vec<(DirCache, Option<DirCache>)>,
}

impl GruStack {
    pub fn register(
        store: &mut ParameterStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        num_layers: usize,
        bidirectional: bool,
    ) -> Self {
        let width = if bidirectional { 2 * hidden } else { hidden };
        let layers = (0..num_layers)
            .map(|l| {
                let d_in = if l == 0 { input_dim } else { width };
                GruLayer {
                    forward: GruDirection::register(store, &format!("{prefix}.l{l}.fwd"), d_in, hidden),
                    backward: bidirectional
                        .then(|| GruDirection::register(store, &format!("{prefix}.l{l}.bwd"), d_in, hidden)),
                }
            })
            .collect();
        Self {
            layers,
            input_dim,
            hidden,
            bidirectional,
        }
    }

    pub fn output_dim(&self) -> usize {
        if self.bidirectional {
            2 * self.hidden
        } else {
            self.hidden
        }
    }

    pub fn forward(&self, store: &ParameterStore, seq: &Tensor2) -> Result<(Tensor2, StackCache)> {
        if seq.rows() == 0 {
            return Err(Error::Empty("recurrent input sequence"));
        }
        if seq.cols() != self.input_dim {
            return Err(Error::shape("gru stack", format!("input width {} for D={}", seq.cols(), self.input_dim)));
        }
        let mut cache = StackCache {
            inputs: Vec::with_capacity(self.layers.len()),
            dirs: Vec::with_capacity(self.layers.len()),
        };
        let mut x = seq.clone();
        for layer in &self.layers {
            let (fwd, fc) = run_direction(&layer.forward, store, &x, false);
            let (out, bc) = match &layer.backward {
                Some(b) => {
                    let (bwd, bc) = run_direction(b, store, &x, true);
                    (fwd.hcat(&bwd), Some(bc))
                }
                None => (fwd, None),
            };
            cache.inputs.push(std::mem::replace(&mut x, out));
            cache.dirs.push((fc, bc));
        }
        Ok((x, cache))
    }

    /// Accumulates parameter gradients and returns the gradient with respect
    /// to the input sequence.
    pub fn backward(&self, store: &mut ParameterStore, cache: &StackCache, d_out: &Tensor2) -> Tensor2 {
        let hd = self.hidden;
        let mut d = d_out.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.inputs[l];
            let mut dx = Tensor2::zeros(x.rows(), x.cols());
            let (fc, bc) = &cache.dirs[l];
            backward_direction(&layer.forward, store, fc, x, d.view().cols_range(0, hd), false, &mut dx);
            if let (Some(b), Some(bc)) = (&layer.backward, bc) {
                backward_direction(b, store, bc, x, d.view().cols_range(hd, 2 * hd), true, &mut dx);
            }
            d = dx;
        }
        d
    }

    pub fn num_scalars(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.forward.num_scalars() + l.backward.map_or(0, |b| b.num_scalars()))
            .sum()
    }
}

/// Runs the stack over an exact-length sequence and returns the `N×E`
/// per-step outputs of the last layer.
pub fn bi_gru_stack(seq: &Tensor2, stack: &GruStack, store: &ParameterStore) -> Result<Tensor2> {
    stack.forward(store, seq).map(|(out, _)| out)
}
