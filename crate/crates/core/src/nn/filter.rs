use ndarray::{Array2, Zip};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{graph_shift, GraphSignal, Gso};
use crate::rng::Rng;

/// Shifted copies `[X, S X, S² X, …]` (or their delayed counterparts) that a
/// filter combines with its taps.
pub type ShiftStack = Vec<GraphSignal>;

/// The `K + 1` taps `A_0, …, A_K` of a graph filter, each `f_in × f_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTaps {
    taps: Vec<Array2<f64>>,
}

impl FilterTaps {
    pub fn new(taps: Vec<Array2<f64>>) -> Result<Self> {
        let first = taps.first().ok_or_else(|| Error::invalid("a filter needs at least one tap"))?;
        let shape = first.dim();
        if taps.iter().any(|t| t.dim() != shape) {
            return Err(Error::dim("filter taps of different shapes"));
        }
        if taps.iter().flat_map(|t| t.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("filter tap".into()));
        }
        Ok(FilterTaps { taps })
    }

    pub fn zeros(order: usize, f_in: usize, f_out: usize) -> Self {
        FilterTaps { taps: vec![Array2::zeros((f_in, f_out)); order + 1] }
    }

    /// I.i.d. uniform on `±1/√(f_in (K+1))`.
    pub fn uniform_init(order: usize, f_in: usize, f_out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / ((f_in * (order + 1)) as f64).sqrt();
        let taps = (0..=order)
            .map(|_| Array2::from_shape_simple_fn((f_in, f_out), || rng.random_range(-bound..=bound)))
            .collect();
        FilterTaps { taps }
    }

    /// Single-feature filter with coefficients `h_0, …, h_K`.
    pub fn scalar(coefficients: &[f64]) -> Self {
        FilterTaps { taps: coefficients.iter().map(|&c| Array2::from_elem((1, 1), c)).collect() }
    }

    pub fn order(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn f_in(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn f_out(&self) -> usize {
        self.taps[0].ncols()
    }

    pub fn taps(&self) -> &[Array2<f64>] {
        &self.taps
    }

    pub fn taps_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.taps
    }

    pub fn len_flat(&self) -> usize {
        self.taps.len() * self.f_in() * self.f_out()
    }

    pub fn iter_flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.taps.iter().flat_map(|t| t.iter().copied())
    }

    pub fn iter_flat_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.taps.iter_mut().flat_map(|t| t.iter_mut())
    }

    pub fn same_shape(&self, other: &FilterTaps) -> bool {
        self.taps.len() == other.taps.len() && self.taps[0].dim() == other.taps[0].dim()
    }

    pub fn zeros_like(&self) -> Self {
        FilterTaps::zeros(self.order(), self.f_in(), self.f_out())
    }

    /// `self += alpha · other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &FilterTaps) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.taps.iter_mut().zip(&other.taps) {
            a.scaled_add(alpha, b);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.taps {
            a.mapv_inplace(|v| v * alpha);
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.iter_flat().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius distance between two tap sets of equal shape.
    pub fn distance(&self, other: &FilterTaps) -> f64 {
        self.iter_flat().zip(other.iter_flat()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.iter_flat().all(f64::is_finite)
    }
}

/// `[X, S X, …, S^K X]` by repeated shifting.
pub fn shift_stack(s: &Gso, x: &GraphSignal, order: usize) -> Result<ShiftStack> {
    let mut stack = Vec::with_capacity(order + 1);
    stack.push(x.clone());
    for k in 1..=order {
        let next = graph_shift(s, &stack[k - 1])?;
        stack.push(next);
    }
    Ok(stack)
}

/// Delayed stack with `Z_k = S_t S_{t−1} ⋯ S_{t−k+1} X_{t−k}`; `history` is
/// newest first, so `history[0] = (S_t, X_t)`.
pub fn delayed_shift_stack(history: &[(Gso, GraphSignal)], order: usize) -> Result<ShiftStack> {
    if history.len() < order + 1 {
        return Err(Error::invalid(format!(
            "delayed filter of order {order} needs {} history entries, got {}",
            order + 1,
            history.len()
        )));
    }
    let n = history[0].0.n();
    if history.iter().any(|(s, x)| s.n() != n || x.nrows() != n) {
        return Err(Error::dim("history entries of different sizes"));
    }
    let mut stack = Vec::with_capacity(order + 1);
    for k in 0..=order {
        let mut z = history[k].1.clone();
        for tau in (0..k).rev() {
            z = graph_shift(&history[tau].0, &z)?;
        }
        stack.push(z);
    }
    Ok(stack)
}

/// `Σ_k Z_k A_k`.
pub fn apply_taps(stack: &[GraphSignal], taps: &FilterTaps) -> Result<GraphSignal> {
    if stack.len() != taps.taps.len() {
        return Err(Error::dim(format!("stack of {} shifts for {} taps", stack.len(), taps.taps.len())));
    }
    let n = stack[0].nrows();
    if stack.iter().any(|z| z.dim() != (n, taps.f_in())) {
        return Err(Error::dim(format!("signal features do not match filter input {}", taps.f_in())));
    }
    let mut y = Array2::zeros((n, taps.f_out()));
    for (z, a) in stack.iter().zip(&taps.taps) {
        ndarray::linalg::general_mat_mul(1.0, z, a, 1.0, &mut y);
    }
    Ok(y)
}

/// Gradient of `<upstream, Σ_k Z_k A_k>` with respect to each tap: `Z_kᵀ · upstream`.
pub fn taps_gradient(stack: &[GraphSignal], upstream: &GraphSignal) -> FilterTaps {
    FilterTaps { taps: stack.iter().map(|z| z.t().dot(upstream)).collect() }
}

/// `Y = Σ_k S^k X A_k`, returning the shift stack alongside.
pub fn filter_forward(s: &Gso, x: &GraphSignal, taps: &FilterTaps) -> Result<(GraphSignal, ShiftStack)> {
    if x.ncols() != taps.f_in() {
        return Err(Error::dim(format!("signal has {} features, filter expects {}", x.ncols(), taps.f_in())));
    }
    let stack = shift_stack(s, x, taps.order())?;
    let y = apply_taps(&stack, taps)?;
    Ok((y, stack))
}

/// Graph filter over a delayed information structure (see [`delayed_shift_stack`]).
pub fn delayed_filter_forward(history: &[(Gso, GraphSignal)], taps: &FilterTaps) -> Result<GraphSignal> {
    let stack = delayed_shift_stack(history, taps.order())?;
    apply_taps(&stack, taps)
}

/// Entry `(f, g)` is `Σ_k [A_k]_{fg} λ^k`.
pub fn frequency_response(taps: &FilterTaps, lambda: f64) -> Array2<f64> {
    let mut acc = taps.taps[taps.order()].clone();
    for k in (0..taps.order()).rev() {
        acc.mapv_inplace(|v| v * lambda);
        acc += &taps.taps[k];
    }
    acc
}

/// Entry `(f, g)` is `λ · a'_{fg}(λ) = Σ_k k [A_k]_{fg} λ^k`.
fn lambda_derivative(taps: &FilterTaps, lambda: f64) -> Array2<f64> {
    let mut acc = Array2::zeros(taps.taps[0].dim());
    let mut power = 1.0;
    for (k, a) in taps.taps.iter().enumerate().skip(1) {
        power *= lambda;
        acc.scaled_add(k as f64 * power, a);
    }
    acc
}

/// Largest `|λ a'_{fg}(λ)|` over a uniform grid of `grid` points in
/// `[lambda_lo, lambda_hi]` and all feature pairs.
pub fn integral_lipschitz_estimate(taps: &FilterTaps, lambda_lo: f64, lambda_hi: f64, grid: usize) -> f64 {
    integral_lipschitz_on(taps, &uniform_grid(lambda_lo, lambda_hi, grid))
}

/// As [`integral_lipschitz_estimate`] over explicit points (e.g. eigenvalues).
pub fn integral_lipschitz_on(taps: &FilterTaps, lambdas: &[f64]) -> f64 {
    lambdas.iter().map(|&l| lambda_derivative(taps, l).iter().fold(0.0_f64, |m, v| m.max(v.abs()))).fold(0.0, f64::max)
}

/// Largest `|a_{fg}(λ)|` over a uniform grid.
pub fn response_sup(taps: &FilterTaps, lambda_lo: f64, lambda_hi: f64, grid: usize) -> f64 {
    uniform_grid(lambda_lo, lambda_hi, grid)
        .into_iter()
        .map(|l| frequency_response(taps, l).iter().fold(0.0_f64, |m, v| m.max(v.abs())))
        .fold(0.0, f64::max)
}

fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

/// Elementwise `a · b` summed.
pub(crate) fn inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, &x, &y| acc + x * y)
}
