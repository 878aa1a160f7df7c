//! Closed-form stability and tracking bounds, plus empirical estimates of
//! the constants they need.

use std::io::Write;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::eigen::jacobi;
use crate::graph::ConsensusWeights;
use crate::nn::{integral_lipschitz_on, response_sup, FilterTaps, WdGnnParams, WideProblem};

/// `|α_D| · L · ∏_{ℓ=1}^{L−1} F_ℓ + |α_W|`, with `F_ℓ` the hidden widths of
/// the deep part.
pub fn stability_constant(params: &WdGnnParams) -> f64 {
    let dims = params.deep.dims();
    let layers = params.deep.depth();
    let hidden: f64 = dims[1..layers].iter().map(|&f| f as f64).product();
    params.alpha_d.abs() * layers as f64 * hidden + params.alpha_w.abs()
}

/// First-order output-difference bound `2 C_L C_Ψ (1 + 8√N) ‖X‖ ε`.
pub fn stability_bound(c_l: f64, c_psi: f64, n: usize, x_norm: f64, eps: f64) -> f64 {
    2.0 * c_l * c_psi * (1.0 + 8.0 * (n as f64).sqrt()) * x_norm * eps
}

/// The wide-only case of [`stability_bound`].
pub fn filter_stability_bound(c_l: f64, n: usize, x_norm: f64, eps: f64) -> f64 {
    stability_bound(c_l, 1.0, n, x_norm, eps)
}

/// Largest `|λ a'(λ)|` over every filter of the model (wide and each deep
/// layer) at the given frequencies.
pub fn model_integral_lipschitz(params: &WdGnnParams, lambdas: &[f64]) -> f64 {
    std::iter::once(&params.wide)
        .chain(params.deep.layers().iter().map(|l| &l.taps))
        .map(|t| integral_lipschitz_on(t, lambdas))
        .fold(0.0, f64::max)
}

/// `sup |a_{fg}(λ)|` on `[lo, hi]` for the wide filter followed by each deep
/// layer.
pub fn response_maxima(params: &WdGnnParams, lo: f64, hi: f64, grid: usize) -> Vec<f64> {
    std::iter::once(&params.wide)
        .chain(params.deep.layers().iter().map(|l| &l.taps))
        .map(|t| response_sup(t, lo, hi, grid))
        .collect()
}

/// `max{|1 − γ C_s|, |1 − γ C_c|}`. Requires `C_s ≥ C_c > 0` and
/// `γ ∈ (0, 2 / C_s)`.
pub fn convergence_rate(gamma: f64, c_s: f64, c_c: f64) -> Result<f64> {
    if !(c_c > 0.0 && c_s >= c_c) {
        return Err(Error::invalid(format!("need C_s ≥ C_c > 0, got C_s = {c_s}, C_c = {c_c}")));
    }
    if !(gamma > 0.0 && gamma < 2.0 / c_s) {
        return Err(Error::invalid(format!("step size {gamma} outside (0, {})", 2.0 / c_s)));
    }
    Ok((1.0 - gamma * c_s).abs().max((1.0 - gamma * c_c).abs()))
}

fn check_rates(rates: &[f64]) -> Result<()> {
    match rates.iter().find(|&&m| !(0.0..1.0).contains(&m)) {
        Some(m) => Err(Error::invalid(format!("rate {m} outside [0, 1)"))),
        None => Ok(()),
    }
}

/// Entry `t` bounds `‖𝒜_{t+1} − 𝒜*_{t+1}‖` given the rates `m_0, …, m_t`:
/// `(∏ m_τ) e_0 + (1 − m̂^{t+1}) / (1 − m̂) · C_B` with `m̂` the running maximum.
pub fn centralized_tracking_bound(initial_err: f64, rates: &[f64], c_b: f64) -> Result<Vec<f64>> {
    check_rates(rates)?;
    let mut product = 1.0;
    let mut m_hat = 0.0_f64;
    Ok(rates
        .iter()
        .enumerate()
        .map(|(t, &m)| {
            product *= m;
            m_hat = m_hat.max(m);
            product * initial_err + (1.0 - m_hat.powi(t as i32 + 1)) / (1.0 - m_hat) * c_b
        })
        .collect())
}

/// `1 + N / (1 − (1 − ε^Ĉ)^{1/Ĉ}) · (1 + ε^{−Ĉ}) / (1 − ε^Ĉ)` with
/// `Ĉ = C_d (N − 1)`. Returns `+∞` once the expression is not representable.
pub fn c_epsilon_constant(n: usize, epsilon_floor: f64, c_d: usize) -> Result<f64> {
    if !(epsilon_floor > 0.0 && epsilon_floor < 1.0) {
        return Err(Error::invalid(format!("epsilon {epsilon_floor} outside (0, 1)")));
    }
    if c_d == 0 || n < 2 {
        return Err(Error::invalid("need C_d ≥ 1 and N ≥ 2"));
    }
    let c_hat = (c_d * (n - 1)) as f64;
    let ln_eps = epsilon_floor.ln();
    let eps_pow = (c_hat * ln_eps).exp();
    // 1 − (1 − ε^Ĉ)^{1/Ĉ} = −expm1(ln(1 − ε^Ĉ) / Ĉ), accurate for tiny ε^Ĉ.
    let inner = -((-eps_pow).ln_1p() / c_hat).exp_m1();
    let value = 1.0 + n as f64 / inner * (1.0 + (-c_hat * ln_eps).exp()) / (1.0 - eps_pow);
    if value.is_finite() && inner > 0.0 {
        Ok(value)
    } else {
        log::warn!("C_epsilon overflows for N = {n}, epsilon = {epsilon_floor}, C_d = {c_d}");
        Ok(f64::INFINITY)
    }
}

/// Entry `t` bounds every node's `‖𝒜_{i,t+1} − 𝒜*_{t+1}‖`:
/// `(∏ m_τ) e_0 + 2 γ C_ε L (γ C_s / (1 − m̂) + 1) + C_B / (1 − m̂)`.
pub fn distributed_tracking_bound(
    initial_mean_err: f64,
    rates: &[f64],
    c_b: f64,
    gamma: f64,
    lipschitz_l: f64,
    c_s: f64,
    c_eps: f64,
) -> Result<Vec<f64>> {
    check_rates(rates)?;
    let mut product = 1.0;
    let mut m_hat = 0.0_f64;
    Ok(rates
        .iter()
        .map(|&m| {
            product *= m;
            m_hat = m_hat.max(m);
            product * initial_mean_err
                + 2.0 * gamma * c_eps * lipschitz_l * (gamma * c_s / (1.0 - m_hat) + 1.0)
                + c_b / (1.0 - m_hat)
        })
        .collect())
}

/// Limit of [`distributed_tracking_bound`] for a constant rate `m`.
pub fn distributed_bound_limit(m: f64, c_b: f64, gamma: f64, lipschitz_l: f64, c_s: f64, c_eps: f64) -> f64 {
    2.0 * gamma * c_eps * lipschitz_l * (gamma * c_s / (1.0 - m) + 1.0) + c_b / (1.0 - m)
}

/// `2 (1 + ε^{−Ĉ}) / (1 − ε^Ĉ) · (1 − ε^Ĉ)^{len/Ĉ}` with `Ĉ = C_d (N − 1)`.
pub fn lemma_bound(n: usize, epsilon_floor: f64, c_d: usize, len: usize) -> Result<f64> {
    if !(epsilon_floor > 0.0 && epsilon_floor < 1.0) {
        return Err(Error::invalid(format!("epsilon {epsilon_floor} outside (0, 1)")));
    }
    if c_d == 0 || n < 2 {
        return Err(Error::invalid("need C_d ≥ 1 and N ≥ 2"));
    }
    let c_hat = (c_d * (n - 1)) as f64;
    let eps_pow = (c_hat * epsilon_floor.ln()).exp();
    let decay = ((-eps_pow).ln_1p() * len as f64 / c_hat).exp();
    Ok(2.0 * (1.0 + (-c_hat * epsilon_floor.ln()).exp()) / (1.0 - eps_pow) * decay)
}

/// For `Λ = W_{T−1} ⋯ W_0`, returns `max_{ij} |Λ_ij − 1/N|` and
/// [`lemma_bound`] with the smallest floor in the sequence.
pub fn weight_product_deviation(weights: &[ConsensusWeights], c_d: usize) -> Result<(f64, f64)> {
    let first = weights.first().ok_or_else(|| Error::invalid("empty weight sequence"))?;
    let n = first.n();
    if weights.iter().any(|w| w.n() != n) {
        return Err(Error::dim("weight matrices of different sizes"));
    }
    let mut product = Array2::<f64>::eye(n);
    for w in weights {
        product = w.entries().dot(&product);
    }
    let avg = 1.0 / n as f64;
    let dev = product.iter().fold(0.0_f64, |m, &v| m.max((v - avg).abs()));
    let floor = weights.iter().map(|w| w.epsilon_floor()).fold(f64::INFINITY, f64::min);
    let bound = if n < 2 { 0.0 } else { lemma_bound(n, floor.min(1.0 - f64::EPSILON), c_d, weights.len())? };
    Ok((dev, bound))
}

/// `max_t ‖𝒜*_{t+1} − 𝒜*_t‖`.
pub fn estimate_drift_constant(optima: &[FilterTaps]) -> Result<f64> {
    if optima.len() < 2 {
        return Err(Error::invalid("drift needs at least two optima"));
    }
    Ok(optima.windows(2).map(|p| p[1].distance(&p[0])).fold(0.0, f64::max))
}

/// Extreme eigenvalues `(C_s, C_c)` of the Hessian of the weighted
/// mean-squared loss in the wide taps. The output is affine in the taps, so
/// the Hessian is `2 Mᵀ D M / Σ w` with `M` the linear part and `D` the
/// weights; `M` is assembled column by column from unit taps.
pub fn quadratic_curvature(
    problem: &WideProblem,
    template: &FilterTaps,
    mask: Option<&Array2<f64>>,
) -> Result<(f64, f64)> {
    let base = problem.output(&template.zeros_like())?;
    let weights = match mask {
        Some(m) if m.dim() != base.dim() => return Err(Error::dim("mask shape differs from output")),
        Some(m) => m.clone(),
        None => Array2::ones(base.dim()),
    };
    let total = weights.sum();
    if total <= 0.0 {
        return Err(Error::invalid("curvature of an empty loss"));
    }
    let p = template.len_flat();
    let mut columns = Array2::<f64>::zeros((base.len(), p));
    let mut unit = template.zeros_like();
    for c in 0..p {
        if let Some(v) = unit.iter_flat_mut().nth(c) {
            *v = 1.0;
        }
        let out = problem.output(&unit)? - &base;
        for (r, (&o, &w)) in out.iter().zip(weights.iter()).enumerate() {
            columns[[r, c]] = o * w.sqrt();
        }
        if let Some(v) = unit.iter_flat_mut().nth(c) {
            *v = 0.0;
        }
    }
    let hessian = columns.t().dot(&columns) * (2.0 / total);
    let values = jacobi(hessian)?.values;
    Ok((values[values.len() - 1], values[0].max(0.0)))
}

/// One instance of the stability comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub epsilon: f64,
    pub empirical_diff: f64,
    pub bound: f64,
    pub c_l: f64,
    pub c_psi: f64,
    pub n: usize,
    pub x_norm: f64,
}

impl StabilityReport {
    /// Whether `empirical_diff ≤ bound + slack · ε²· (bound / ε)`.
    pub fn dominated(&self, slack: f64) -> bool {
        let second_order = if self.epsilon > 0.0 { slack * self.epsilon * self.bound } else { 0.0 };
        self.empirical_diff <= self.bound + second_order
    }
}

pub fn write_stability_csv<W: Write>(reports: &[StabilityReport], slack: f64, mut out: W) -> Result<()> {
    writeln!(out, "instance,epsilon,empirical_diff,bound,c_l,c_psi,n,x_norm,slack,dominated")?;
    for (i, r) in reports.iter().enumerate() {
        writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{slack},{}",
            r.epsilon,
            r.empirical_diff,
            r.bound,
            r.c_l,
            r.c_psi,
            r.n,
            r.x_norm,
            r.dominated(slack)
        )?;
    }
    Ok(())
}

/// One step of a tracking comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub t: usize,
    pub tracking_error: f64,
    /// `None` where the bound does not apply (e.g. no strong convexity).
    pub bound: Option<f64>,
    pub m_t: Option<f64>,
}

/// Constants shared by every row of a convergence report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceConstants {
    pub c_b: f64,
    pub c_s: f64,
    pub c_c: f64,
    pub c_eps: f64,
    pub c_d_hat: f64,
    pub gamma: f64,
    pub lipschitz_l: f64,
}

pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], k: &ConvergenceConstants, mut out: W) -> Result<()> {
    writeln!(out, "t,tracking_error,bound,m_t,c_b,c_s,c_c,c_eps,c_d_hat,gamma,lipschitz_l,applicable")?;
    for r in rows {
        let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.tracking_error,
            fmt(r.bound),
            fmt(r.m_t),
            k.c_b,
            k.c_s,
            k.c_c,
            k.c_eps,
            k.c_d_hat,
            k.gamma,
            k.lipschitz_l,
            r.bound.is_some()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{metropolis_weights, sbm_generate, Gso};
    use crate::nn::{Architecture, GnnLayer, GnnParams, ModelKind, Nonlinearity, Readout};
    use crate::rng;

    fn model(alpha_w: f64, alpha_d: f64, widths: &[usize]) -> WdGnnParams {
        let mut layers = Vec::new();
        let mut f = 1;
        for &w in widths {
            layers.push(GnnLayer { taps: FilterTaps::zeros(1, f, w), sigma: Nonlinearity::Relu });
            f = w;
        }
        let g = *widths.last().unwrap();
        WdGnnParams::new(
            FilterTaps::zeros(1, 1, g),
            GnnParams::new(layers).unwrap(),
            alpha_w,
            alpha_d,
            0.0,
            Readout::identity(g),
        )
        .unwrap()
    }

    #[test]
    fn stability_constant_examples() {
        assert_eq!(stability_constant(&model(1.0, 1.0, &[32, 1])), 65.0);
        assert_eq!(stability_constant(&model(0.5, 0.0, &[4, 1])), 0.5);
        assert_eq!(stability_constant(&model(0.0, 1.0, &[1])), 1.0);
    }

    #[test]
    fn stability_bound_examples() {
        assert_eq!(stability_bound(1.0, 1.0, 1, 1.0, 0.0), 0.0);
        assert!((stability_bound(1.0, 1.0, 1, 1.0, 0.1) - 1.8).abs() < 1e-12);
        assert_eq!(stability_bound(2.0, 3.0, 9, 1.5, 0.2), 2.0 * stability_bound(2.0, 3.0, 9, 1.5, 0.1));
        assert!((filter_stability_bound(2.0, 4, 1.0, 0.05) - 3.4).abs() < 1e-12);
        assert_eq!(filter_stability_bound(1.3, 7, 2.0, 0.01), stability_bound(1.3, 1.0, 7, 2.0, 0.01));
    }

    #[test]
    fn convergence_rate_examples() {
        assert!((convergence_rate(0.1, 10.0, 1.0).unwrap() - 0.9).abs() < 1e-15);
        let (cs, cc) = (5.0, 2.0);
        let m = convergence_rate(2.0 / (cs + cc), cs, cc).unwrap();
        assert!((m - (cs - cc) / (cs + cc)).abs() < 1e-15);
        assert_eq!(convergence_rate(0.25, 4.0, 4.0).unwrap(), 0.0);
        assert!(convergence_rate(0.5, 4.0, 1.0).is_err());
        assert!(convergence_rate(0.1, 4.0, 0.0).is_err());
    }

    #[test]
    fn centralized_bound_examples() {
        let m = 0.8;
        let b = centralized_tracking_bound(2.0, &[m; 5], 0.0).unwrap();
        for (t, v) in b.iter().enumerate() {
            assert!((v - m.powi(t as i32 + 1) * 2.0).abs() < 1e-15);
        }
        let b = centralized_tracking_bound(0.0, &[m; 5], 0.3).unwrap();
        for (t, v) in b.iter().enumerate() {
            assert!((v - 0.3 * (1.0 - m.powi(t as i32 + 1)) / (1.0 - m)).abs() < 1e-14);
        }
        let long = centralized_tracking_bound(1.0, &[m; 400], 0.3).unwrap();
        assert!((long[399] - 0.3 / (1.0 - m)).abs() < 1e-12);
        assert!(centralized_tracking_bound(1.0, &[1.0], 0.0).is_err());
    }

    #[test]
    fn c_epsilon_examples() {
        assert!((c_epsilon_constant(2, 0.5, 1).unwrap() - 25.0).abs() < 1e-12);
        let mut last = f64::INFINITY;
        for k in 1..20 {
            let v = c_epsilon_constant(5, k as f64 * 0.045, 2).unwrap();
            assert!(v < last);
            last = v;
        }
        assert_eq!(c_epsilon_constant(50, 1e-3, 3).unwrap(), f64::INFINITY);
        assert!(c_epsilon_constant(3, 1.0, 1).is_err());
    }

    #[test]
    fn distributed_bound_examples() {
        let b = distributed_tracking_bound(1.0, &[0.5; 3], 0.0, 0.0, 1.0, 1.0, 10.0).unwrap();
        assert_eq!(b, vec![0.5, 0.25, 0.125]);
        let long = distributed_tracking_bound(1.0, &[0.6; 300], 0.1, 0.05, 2.0, 3.0, 25.0).unwrap();
        assert!((long[299] - distributed_bound_limit(0.6, 0.1, 0.05, 2.0, 3.0, 25.0)).abs() < 1e-12);
        let c = centralized_tracking_bound(1.0, &[0.6; 10], 0.1).unwrap();
        let d = distributed_tracking_bound(1.0, &[0.6; 10], 0.1, 0.05, 2.0, 3.0, 25.0).unwrap();
        assert!(c.iter().zip(&d).all(|(c, d)| d >= c));
    }

    #[test]
    fn bounds_nonincreasing_in_epsilon() {
        let mut last = (f64::INFINITY, f64::INFINITY);
        for k in 1..10 {
            let eps = 0.1 * k as f64;
            let c = c_epsilon_constant(4, eps, 1).unwrap();
            let d = distributed_tracking_bound(1.0, &[0.5; 4], 0.1, 0.1, 1.0, 1.0, c).unwrap()[3];
            assert!(c <= last.0 && d <= last.1);
            last = (c, d);
        }
    }

    #[test]
    fn weight_product_examples() {
        let (dev, _) = weight_product_deviation(&[ConsensusWeights::uniform(5)], 1).unwrap();
        assert!(dev < 1e-16);
        let g = sbm_generate(8, 2, 0.9, 0.3, 1).unwrap();
        let w = metropolis_weights(&g, 0.05).unwrap();
        let devs: Vec<f64> =
            [5, 10, 20, 40].iter().map(|&len| weight_product_deviation(&vec![w.clone(); len], 1).unwrap().0).collect();
        assert!(devs.windows(2).all(|p| p[1] < p[0]));
        // Geometric: doubling the length roughly squares the deviation ratio.
        let r1 = devs[1] / devs[0];
        let r2 = devs[2] / devs[1];
        assert!((r2.ln() / r1.ln() - 2.0).abs() < 0.2);
        for len in [1, 10, 100] {
            let (dev, bound) = weight_product_deviation(&vec![w.clone(); len], 1).unwrap();
            assert!(dev <= bound);
        }
    }

    #[test]
    fn drift_examples() {
        let c = FilterTaps::scalar(&[1.0, 2.0]);
        assert_eq!(estimate_drift_constant(&[c.clone(), c.clone(), c.clone()]).unwrap(), 0.0);
        let line: Vec<FilterTaps> = (0..5).map(|t| FilterTaps::scalar(&[0.3 * t as f64, 0.0])).collect();
        assert!((estimate_drift_constant(&line).unwrap() - 0.3).abs() < 1e-12);
        let mut rev = line.clone();
        rev.reverse();
        assert_eq!(estimate_drift_constant(&rev).unwrap(), estimate_drift_constant(&line).unwrap());
        assert!(estimate_drift_constant(&line[..1]).is_err());
    }

    #[test]
    fn curvature_matches_gram_matrix() {
        let mut r = rng::seeded(4);
        let s = sbm_generate(8, 1, 0.5, 0.5, 4).unwrap();
        let s = crate::graph::normalize_adjacency(&s).unwrap();
        let x = Array2::from_shape_fn((8, 1), |(i, _)| (i as f64 * 0.7).sin());
        let arch = Architecture::uniform(1, 2, 1, 1, Nonlinearity::Relu, 1);
        let mut p = WdGnnParams::init(&arch, ModelKind::GraphFilter, &mut r).unwrap();
        p.readout = Readout::identity(1);
        let problem = WideProblem::new(&s, &x, None, &p).unwrap();
        let (cs, cc) = quadratic_curvature(&problem, &p.wide, None).unwrap();
        let stack = crate::nn::shift_stack(&s, &x, 2).unwrap();
        let mut z = Array2::zeros((8, 3));
        for (k, col) in stack.iter().enumerate() {
            z.column_mut(k).assign(&col.column(0));
        }
        let gram: Array2<f64> = z.t().dot(&z) * (2.0 / 8.0);
        let sym = Gso::new(gram, true).unwrap();
        let e = crate::graph::symmetric_eigendecomposition(&sym).unwrap();
        assert!((cs - e.values[2]).abs() < 1e-10 && (cc - e.values[0]).abs() < 1e-10);
    }
}
