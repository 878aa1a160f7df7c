use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::filter::{apply_taps, inner, shift_stack, taps_gradient, FilterTaps, ShiftStack};
use super::gnn::{gnn_backward, gnn_forward, GnnCache, GnnParams, LayerSpec};
use super::Nonlinearity;
use crate::error::{Error, Result};
use crate::graph::{GraphSignal, Gso};
use crate::rng::Rng;

/// Per-node affine map `y_i = W^T x_i + b` shared by every node.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Readout {
    pub fn identity(g: usize) -> Self {
        Readout { weight: Array2::eye(g), bias: Array1::zeros(g) }
    }

    pub fn init(g: usize, g_out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (g as f64).sqrt();
        Readout {
            weight: Array2::from_shape_simple_fn((g, g_out), || rng.random_range(-bound..=bound)),
            bias: Array1::zeros(g_out),
        }
    }

    pub fn g_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn g_out(&self) -> usize {
        self.weight.ncols()
    }

    fn forward(&self, combined: &GraphSignal) -> GraphSignal {
        combined.dot(&self.weight) + &self.bias
    }
}

/// Parameters of a WD-GNN: `readout(α_W · A(X; S, 𝒜) + α_D · Φ(X; S, ℬ) + β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WdGnnParams {
    pub wide: FilterTaps,
    pub deep: GnnParams,
    pub alpha_w: f64,
    pub alpha_d: f64,
    pub beta: f64,
    pub readout: Readout,
}

/// Which of the three compared architectures a parameter set represents. A
/// graph filter is a WD-GNN with the deep branch switched off; a GNN is one
/// with the wide branch switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    WdGnn,
    Gnn,
    GraphFilter,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::WdGnn => "wdgnn",
            ModelKind::Gnn => "gnn",
            ModelKind::GraphFilter => "graph_filter",
        }
    }

    pub fn train_mask(self) -> GroupMask {
        match self {
            ModelKind::WdGnn => GroupMask::all(),
            ModelKind::Gnn => GroupMask { wide: false, alpha_w: false, ..GroupMask::all() },
            ModelKind::GraphFilter => GroupMask { deep: false, alpha_d: false, ..GroupMask::all() },
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wdgnn" | "wd_gnn" => Ok(ModelKind::WdGnn),
            "gnn" => Ok(ModelKind::Gnn),
            "graph_filter" | "filter" => Ok(ModelKind::GraphFilter),
            other => Err(Error::invalid(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Shape of a WD-GNN. The wide filter and the last deep layer both output
/// `g` features; the readout maps `g → g_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub f_in: usize,
    pub wide_order: usize,
    pub deep: Vec<LayerSpec>,
    pub g_out: usize,
}

impl Architecture {
    /// Uniform deep layers of width `g` and order `k`, wide filter of order `k`.
    pub fn uniform(f_in: usize, k: usize, g: usize, layers: usize, sigma: Nonlinearity, g_out: usize) -> Self {
        Architecture { f_in, wide_order: k, deep: vec![LayerSpec { order: k, features: g, sigma }; layers], g_out }
    }

    pub fn g(&self) -> usize {
        self.deep.last().map(|l| l.features).unwrap_or(0)
    }
}

/// Groups of parameters that can be trained or frozen independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupMask {
    pub wide: bool,
    pub deep: bool,
    pub alpha_w: bool,
    pub alpha_d: bool,
    pub beta: bool,
    pub readout: bool,
}

impl GroupMask {
    pub fn all() -> Self {
        GroupMask { wide: true, deep: true, alpha_w: true, alpha_d: true, beta: true, readout: true }
    }

    pub fn wide_only() -> Self {
        GroupMask { wide: true, deep: false, alpha_w: false, alpha_d: false, beta: false, readout: false }
    }
}

impl WdGnnParams {
    /// Taps uniform on `±1/√(f_in (K+1))`, `α_W = α_D = 1`, `β = 0`.
    pub fn init(arch: &Architecture, kind: ModelKind, rng: &mut Rng) -> Result<Self> {
        if arch.deep.is_empty() {
            return Err(Error::invalid("deep part needs at least one layer"));
        }
        let g = arch.g();
        let wide = FilterTaps::uniform_init(arch.wide_order, arch.f_in, g, rng);
        let deep = GnnParams::init(arch.f_in, &arch.deep, rng)?;
        let readout = Readout::init(g, arch.g_out, rng);
        let (alpha_w, alpha_d) = match kind {
            ModelKind::WdGnn => (1.0, 1.0),
            ModelKind::Gnn => (0.0, 1.0),
            ModelKind::GraphFilter => (1.0, 0.0),
        };
        WdGnnParams::new(wide, deep, alpha_w, alpha_d, 0.0, readout)
    }

    pub fn new(
        wide: FilterTaps,
        deep: GnnParams,
        alpha_w: f64,
        alpha_d: f64,
        beta: f64,
        readout: Readout,
    ) -> Result<Self> {
        if wide.f_out() != deep.f_out() {
            return Err(Error::dim(format!("wide part outputs {} features, deep part {}", wide.f_out(), deep.f_out())));
        }
        if wide.f_in() != deep.f_in() {
            return Err(Error::dim("wide and deep parts disagree on input features"));
        }
        if readout.g_in() != wide.f_out() || readout.bias.len() != readout.g_out() {
            return Err(Error::dim("readout does not match the branch outputs"));
        }
        Ok(WdGnnParams { wide, deep, alpha_w, alpha_d, beta, readout })
    }

    pub fn f_in(&self) -> usize {
        self.wide.f_in()
    }

    pub fn g(&self) -> usize {
        self.wide.f_out()
    }

    pub fn g_out(&self) -> usize {
        self.readout.g_out()
    }

    /// Number of scalar parameters.
    pub fn len_flat(&self) -> usize {
        self.wide.len_flat()
            + self.deep.layers().iter().map(|l| l.taps.len_flat()).sum::<usize>()
            + 3
            + self.readout.weight.len()
            + self.readout.bias.len()
    }

    /// Flattens in the order wide taps, deep taps (by layer), `α_W`, `α_D`,
    /// `β`, readout weight, readout bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len_flat());
        v.extend(self.wide.iter_flat());
        for l in self.deep.layers() {
            v.extend(l.taps.iter_flat());
        }
        v.extend([self.alpha_w, self.alpha_d, self.beta]);
        v.extend(self.readout.weight.iter().copied());
        v.extend(self.readout.bias.iter().copied());
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len_flat() {
            return Err(Error::dim(format!("expected {} parameters, got {}", self.len_flat(), flat.len())));
        }
        let mut it = flat.iter().copied();
        for p in self.wide.iter_flat_mut() {
            *p = it.next().unwrap();
        }
        for l in self.deep.layers_mut() {
            for p in l.taps.iter_flat_mut() {
                *p = it.next().unwrap();
            }
        }
        self.alpha_w = it.next().unwrap();
        self.alpha_d = it.next().unwrap();
        self.beta = it.next().unwrap();
        for p in self.readout.weight.iter_mut().chain(self.readout.bias.iter_mut()) {
            *p = it.next().unwrap();
        }
        Ok(())
    }

    /// Per-scalar trainability in [`to_flat`](Self::to_flat) order.
    pub fn flat_mask(&self, mask: GroupMask) -> Vec<bool> {
        let mut v = Vec::with_capacity(self.len_flat());
        v.extend(std::iter::repeat_n(mask.wide, self.wide.len_flat()));
        for l in self.deep.layers() {
            v.extend(std::iter::repeat_n(mask.deep, l.taps.len_flat()));
        }
        v.extend([mask.alpha_w, mask.alpha_d, mask.beta]);
        v.extend(std::iter::repeat_n(mask.readout, self.readout.weight.len() + self.readout.bias.len()));
        v
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub wide_stack: ShiftStack,
    pub wide_out: GraphSignal,
    pub deep: GnnCache,
    pub deep_out: GraphSignal,
    /// `α_W · wide + α_D · deep + β`, the readout input.
    pub combined: GraphSignal,
    pub output: GraphSignal,
}

/// Gradients with the same layout as [`WdGnnParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct WdGnnGrad {
    pub wide: FilterTaps,
    pub deep: Vec<FilterTaps>,
    pub alpha_w: f64,
    pub alpha_d: f64,
    pub beta: f64,
    pub readout_weight: Array2<f64>,
    pub readout_bias: Array1<f64>,
}

impl WdGnnGrad {
    /// Same order as [`WdGnnParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend(self.wide.iter_flat());
        for d in &self.deep {
            v.extend(d.iter_flat());
        }
        v.extend([self.alpha_w, self.alpha_d, self.beta]);
        v.extend(self.readout_weight.iter().copied());
        v.extend(self.readout_bias.iter().copied());
        v
    }
}

/// Frozen-branch sum `α_D · deep + β`; kept separate so the online phase
/// reproduces the forward pass bit for bit.
fn frozen_branch(deep_out: &GraphSignal, alpha_d: f64, beta: f64) -> GraphSignal {
    deep_out.mapv(|v| alpha_d * v + beta)
}

fn combine(wide_out: &GraphSignal, alpha_w: f64, frozen: &GraphSignal) -> GraphSignal {
    let mut c = wide_out.mapv(|v| alpha_w * v);
    c += frozen;
    c
}

pub fn wdgnn_forward(s: &Gso, x: &GraphSignal, params: &WdGnnParams) -> Result<(GraphSignal, ForwardCache)> {
    wdgnn_forward_with(s, x, None, params)
}

/// Forward pass with an optional precomputed wide-branch stack (for
/// instance a delayed stack); the deep branch always runs on `(s, x)`.
pub fn wdgnn_forward_with(
    s: &Gso,
    x: &GraphSignal,
    wide_stack: Option<ShiftStack>,
    params: &WdGnnParams,
) -> Result<(GraphSignal, ForwardCache)> {
    if x.ncols() != params.f_in() {
        return Err(Error::dim(format!("signal has {} features, model expects {}", x.ncols(), params.f_in())));
    }
    if s.n() != x.nrows() {
        return Err(Error::dim(format!("graph of {} nodes, signal of {} rows", s.n(), x.nrows())));
    }
    let wide_stack = match wide_stack {
        Some(st) => st,
        None => shift_stack(s, x, params.wide.order())?,
    };
    let wide_out = apply_taps(&wide_stack, &params.wide)?;
    let (deep_out, deep) = gnn_forward(s, x, &params.deep)?;
    if wide_out.dim() != deep_out.dim() {
        return Err(Error::dim("wide and deep branch outputs differ in shape"));
    }
    let frozen = frozen_branch(&deep_out, params.alpha_d, params.beta);
    let combined = combine(&wide_out, params.alpha_w, &frozen);
    let output = params.readout.forward(&combined);
    Ok((output.clone(), ForwardCache { wide_stack, wide_out, deep, deep_out, combined, output }))
}

/// Exact reverse-mode gradients of `<upstream, output>` with respect to every
/// parameter.
pub fn wdgnn_backward(
    cache: &ForwardCache,
    s: &Gso,
    params: &WdGnnParams,
    upstream: &GraphSignal,
) -> Result<WdGnnGrad> {
    if upstream.dim() != cache.output.dim() {
        return Err(Error::dim("upstream gradient does not match the output"));
    }
    if cache.combined.ncols() != params.readout.g_in()
        || cache.wide_stack.len() != params.wide.order() + 1
        || cache.wide_stack[0].ncols() != params.wide.f_in()
    {
        return Err(Error::dim("forward cache does not match parameters"));
    }
    let readout_weight = cache.combined.t().dot(upstream);
    let readout_bias = upstream.sum_axis(Axis(0));
    let d_comb = upstream.dot(&params.readout.weight.t());

    let alpha_w = inner(&d_comb, &cache.wide_out);
    let alpha_d = inner(&d_comb, &cache.deep_out);
    let beta = d_comb.sum();

    let wide = wide_branch_gradient(&cache.wide_stack, &d_comb, params.alpha_w);
    let d_deep = d_comb.mapv(|v| params.alpha_d * v);
    let deep = gnn_backward(&cache.deep, s, &params.deep, &d_deep)?;
    Ok(WdGnnGrad { wide, deep, alpha_w, alpha_d, beta, readout_weight, readout_bias })
}

fn wide_branch_gradient(stack: &[GraphSignal], d_comb: &GraphSignal, alpha_w: f64) -> FilterTaps {
    taps_gradient(stack, &d_comb.mapv(|v| alpha_w * v))
}

/// The WD-GNN as a function of its wide taps alone, with the deep branch,
/// combination scalars and readout frozen. Evaluating it with taps `𝒜` gives
/// bit-identical results to [`wdgnn_forward`] / [`wdgnn_backward`] with the
/// wide taps replaced by `𝒜`.
#[derive(Debug, Clone)]
pub struct WideProblem {
    stack: ShiftStack,
    frozen: GraphSignal,
    alpha_w: f64,
    readout: Readout,
}

impl WideProblem {
    pub fn new(s: &Gso, x: &GraphSignal, wide_stack: Option<ShiftStack>, params: &WdGnnParams) -> Result<Self> {
        if s.n() != x.nrows() {
            return Err(Error::dim(format!("graph of {} nodes, signal of {} rows", s.n(), x.nrows())));
        }
        let stack = match wide_stack {
            Some(st) => st,
            None => shift_stack(s, x, params.wide.order())?,
        };
        let (deep_out, _) = gnn_forward(s, x, &params.deep)?;
        Ok(WideProblem {
            stack,
            frozen: frozen_branch(&deep_out, params.alpha_d, params.beta),
            alpha_w: params.alpha_w,
            readout: params.readout.clone(),
        })
    }

    pub fn stack(&self) -> &[GraphSignal] {
        &self.stack
    }

    pub fn n(&self) -> usize {
        self.frozen.nrows()
    }

    pub fn output(&self, taps: &FilterTaps) -> Result<GraphSignal> {
        let wide_out = apply_taps(&self.stack, taps)?;
        Ok(self.readout.forward(&combine(&wide_out, self.alpha_w, &self.frozen)))
    }

    /// `∂<upstream, output>/∂𝒜`; independent of the taps because the output
    /// is affine in them.
    pub fn taps_gradient(&self, upstream: &GraphSignal) -> FilterTaps {
        let d_comb = upstream.dot(&self.readout.weight.t());
        wide_branch_gradient(&self.stack, &d_comb, self.alpha_w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::sbm_generate;
    use crate::nn::filter::filter_forward;
    use crate::rng;

    fn random(n: usize, f: usize, r: &mut Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((n, f), || r.random_range(-1.0..1.0))
    }

    fn small_model(r: &mut Rng) -> WdGnnParams {
        let arch = Architecture::uniform(2, 2, 3, 2, Nonlinearity::Tanh, 3);
        let mut p = WdGnnParams::init(&arch, ModelKind::WdGnn, r).unwrap();
        p.readout = Readout::identity(3);
        p
    }

    #[test]
    fn deep_branch_off() {
        let mut r = rng::seeded(1);
        let s = sbm_generate(6, 2, 0.8, 0.3, 1).unwrap();
        let x = random(6, 2, &mut r);
        let mut p = small_model(&mut r);
        p.alpha_d = 0.0;
        p.alpha_w = 0.7;
        p.beta = 0.25;
        let (y, _) = wdgnn_forward(&s, &x, &p).unwrap();
        let (w, _) = filter_forward(&s, &x, &p.wide).unwrap();
        assert!((y - (w * 0.7 + 0.25)).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn wide_branch_off() {
        let mut r = rng::seeded(2);
        let s = sbm_generate(6, 2, 0.8, 0.3, 1).unwrap();
        let x = random(6, 2, &mut r);
        let mut p = small_model(&mut r);
        p.alpha_w = 0.0;
        p.alpha_d = 1.5;
        let (y, _) = wdgnn_forward(&s, &x, &p).unwrap();
        let (d, _) = gnn_forward(&s, &x, &p.deep).unwrap();
        assert!((y - d * 1.5).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn branch_sum_oracle() {
        let mut r = rng::seeded(3);
        let s = sbm_generate(5, 1, 0.7, 0.7, 1).unwrap();
        let x = random(5, 2, &mut r);
        let mut p = small_model(&mut r);
        p.beta = 0.5;
        let (y, _) = wdgnn_forward(&s, &x, &p).unwrap();
        let (w, _) = filter_forward(&s, &x, &p.wide).unwrap();
        let (d, _) = gnn_forward(&s, &x, &p.deep).unwrap();
        assert!((y - (w + d + 0.5)).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut r = rng::seeded(4);
        let s = sbm_generate(5, 1, 0.7, 0.7, 1).unwrap();
        let x = random(5, 2, &mut r);
        let p = small_model(&mut r);
        let (y, cache) = wdgnn_forward(&s, &x, &p).unwrap();
        let g = wdgnn_backward(&cache, &s, &p, &Array2::zeros(y.dim())).unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_architecture_gradient() {
        let mut r = rng::seeded(5);
        let s = sbm_generate(5, 1, 0.7, 0.7, 1).unwrap();
        let x = random(5, 2, &mut r);
        let mut wide = FilterTaps::zeros(0, 2, 2);
        wide.taps_mut()[0] = Array2::eye(2);
        let deep =
            GnnParams::init(2, &[LayerSpec { order: 1, features: 2, sigma: Nonlinearity::Relu }], &mut r).unwrap();
        let p = WdGnnParams::new(wide, deep, 1.0, 0.0, 0.0, Readout::identity(2)).unwrap();
        let upstream = random(5, 2, &mut r);
        let (_, cache) = wdgnn_forward(&s, &x, &p).unwrap();
        let g = wdgnn_backward(&cache, &s, &p, &upstream).unwrap();
        let expected = x.t().dot(&upstream);
        assert!((&g.wide.taps()[0] - &expected).iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn flat_round_trip_and_mask() {
        let mut r = rng::seeded(6);
        let p = small_model(&mut r);
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.len_flat());
        let mut q = small_model(&mut rng::seeded(7));
        q.set_flat(&flat).unwrap();
        assert_eq!(p, q);
        let m = p.flat_mask(GroupMask::wide_only());
        assert_eq!(m.iter().filter(|&&b| b).count(), p.wide.len_flat());
        assert!(m[..p.wide.len_flat()].iter().all(|&b| b));
    }

    #[test]
    fn wide_problem_matches_forward_and_backward_bitwise() {
        let mut r = rng::seeded(8);
        let s = sbm_generate(7, 1, 0.6, 0.6, 2).unwrap();
        let x = random(7, 2, &mut r);
        let arch = Architecture::uniform(2, 2, 4, 1, Nonlinearity::Relu, 3);
        let mut p = WdGnnParams::init(&arch, ModelKind::WdGnn, &mut r).unwrap();
        p.beta = 0.3;
        p.alpha_w = 0.9;
        let problem = WideProblem::new(&s, &x, None, &p).unwrap();
        let other = FilterTaps::uniform_init(2, 2, 4, &mut r);
        let mut q = p.clone();
        q.wide = other.clone();
        let (y, cache) = wdgnn_forward(&s, &x, &q).unwrap();
        assert_eq!(problem.output(&other).unwrap(), y);
        let upstream = random(7, 3, &mut r);
        let g = wdgnn_backward(&cache, &s, &q, &upstream).unwrap();
        assert_eq!(problem.taps_gradient(&upstream), g.wide);
    }

    #[test]
    fn mismatched_parts_rejected() {
        let mut r = rng::seeded(9);
        let deep =
            GnnParams::init(2, &[LayerSpec { order: 1, features: 3, sigma: Nonlinearity::Relu }], &mut r).unwrap();
        assert!(
            WdGnnParams::new(FilterTaps::zeros(1, 2, 4), deep.clone(), 1.0, 1.0, 0.0, Readout::identity(3)).is_err()
        );
        assert!(WdGnnParams::new(FilterTaps::zeros(1, 2, 3), deep, 1.0, 1.0, 0.0, Readout::identity(4)).is_err());
    }

    #[test]
    fn backward_rejects_foreign_cache() {
        let mut r = rng::seeded(10);
        let s = sbm_generate(5, 1, 0.7, 0.7, 1).unwrap();
        let x = random(5, 2, &mut r);
        let p = small_model(&mut r);
        let (y, cache) = wdgnn_forward(&s, &x, &p).unwrap();
        let arch = Architecture::uniform(2, 3, 3, 2, Nonlinearity::Tanh, 3);
        let other = WdGnnParams::init(&arch, ModelKind::WdGnn, &mut r).unwrap();
        assert!(wdgnn_backward(&cache, &s, &other, &y).is_err());
    }
}
