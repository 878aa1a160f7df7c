//! Empirical checks of the closed-form bounds: stability of single-feature
//! models under small relative perturbations, centralized and distributed
//! tracking on the quadratic stream, and consensus weight products.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    c_epsilon_constant, centralized_tracking_bound, convergence_rate, distributed_bound_limit,
    distributed_tracking_bound, estimate_drift_constant, model_integral_lipschitz, response_maxima, stability_bound,
    stability_constant, weight_product_deviation, ConvergenceConstants, ConvergenceRow, StabilityReport,
};
use crate::error::{Error, Result};
use crate::graph::eigen::spectral_norm;
use crate::graph::{
    metropolis_weights, normalize_adjacency, relative_error_from_perturbation, sbm_generate, ConsensusWeights, Gso,
};
use crate::nn::{wdgnn_forward, Architecture, FilterTaps, ModelKind, Nonlinearity, Readout, WdGnnParams, WideProblem};
use crate::online::{consensus_disagreement, NodeParams, OnlineConfig, OnlineLearner, OnlineMode};
use crate::rng::{self, derive_seed};
use crate::scenarios::quadratic::QuadraticStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub nodes: usize,
    pub edge_probability: f64,
    pub filter_order: usize,
    pub layers: usize,
    pub instances: usize,
    pub max_epsilon: f64,
    /// Coefficient of the second-order allowance `slack · ε · bound`.
    pub slack: f64,
    /// Frequency grid used for the filter constants.
    pub grid: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            nodes: 20,
            edge_probability: 0.3,
            filter_order: 3,
            layers: 2,
            instances: 200,
            max_epsilon: 0.05,
            slack: 10.0,
            grid: 401,
        }
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 || self.layers == 0 || self.grid < 2 {
            return Err(Error::invalid("stability check needs N ≥ 2, L ≥ 1 and a grid of ≥ 2 points"));
        }
        if !(self.max_epsilon > 0.0 && self.max_epsilon < 0.5) {
            return Err(Error::invalid(format!("max_epsilon {} outside (0, 0.5)", self.max_epsilon)));
        }
        if !(self.edge_probability > 0.0 && self.edge_probability <= 1.0) || !(self.slack >= 0.0) {
            return Err(Error::invalid("edge probability must lie in (0, 1] and slack be nonnegative"));
        }
        Ok(())
    }

    /// Spectral interval containing both graphs of any instance.
    fn band(&self) -> f64 {
        1.0 + 2.0 * self.max_epsilon + 1e-3
    }
}

/// A graph, a single-feature model with every filter response bounded by
/// one on the spectral band, a signal and a unit-norm symmetric direction.
struct StabilityProblem {
    s: Gso,
    params: WdGnnParams,
    x: Array2<f64>,
    direction: Array2<f64>,
}

fn stability_problem(cfg: &StabilityConfig, seed: u64) -> Result<StabilityProblem> {
    cfg.validate()?;
    let s = normalize_adjacency(&sbm_generate(
        cfg.nodes,
        1,
        cfg.edge_probability,
        cfg.edge_probability,
        derive_seed(seed, 0),
    )?)?;
    let mut r = rng::seeded(derive_seed(seed, 1));
    let arch = Architecture::uniform(1, cfg.filter_order, 1, cfg.layers, Nonlinearity::Relu, 1);
    let mut params = WdGnnParams::init(&arch, ModelKind::WdGnn, &mut r)?;
    params.readout = Readout::identity(1);
    params.alpha_w = r.random_range(-1.0..1.0);
    params.alpha_d = r.random_range(-1.0..1.0);
    params.beta = r.random_range(-1.0..1.0);
    let band = cfg.band();
    let maxima = response_maxima(&params, -band, band, cfg.grid);
    let scale = |taps: &mut FilterTaps, sup: f64| {
        if sup > 1.0 {
            taps.scale(1.0 / sup);
        }
    };
    scale(&mut params.wide, maxima[0]);
    for (layer, &sup) in params.deep.layers_mut().iter_mut().zip(&maxima[1..]) {
        scale(&mut layer.taps, sup);
    }
    let x = Array2::from_shape_simple_fn((cfg.nodes, 1), || StandardNormal.sample(&mut r));
    let raw = Array2::from_shape_simple_fn((cfg.nodes, cfg.nodes), || StandardNormal.sample(&mut r));
    let sym = (&raw + &raw.t()) * 0.5;
    let direction = &sym / spectral_norm(&sym)?;
    Ok(StabilityProblem { s, params, x, direction })
}

impl StabilityProblem {
    /// Perturbs along the direction with relative size `eps`, then compares
    /// the measured output difference with the bound at the measured `ε`.
    fn report(&self, cfg: &StabilityConfig, eps: f64) -> Result<StabilityReport> {
        let e = &self.direction * eps;
        let s = self.s.entries();
        let raw = s + &e.dot(s) + &s.dot(&e);
        let s_hat = Gso::new((&raw + &raw.t()) * 0.5, true)?;
        let measured = relative_error_from_perturbation(&self.s, &s_hat)?.operator_norm;
        let (y, _) = wdgnn_forward(&self.s, &self.x, &self.params)?;
        let (y_hat, _) = wdgnn_forward(&s_hat, &self.x, &self.params)?;
        let diff = (&y_hat - &y).mapv(|v| v * v).sum().sqrt();
        let band = cfg.band();
        let grid: Vec<f64> = (0..cfg.grid).map(|i| -band + 2.0 * band * i as f64 / (cfg.grid - 1) as f64).collect();
        let c_l = model_integral_lipschitz(&self.params, &grid);
        let c_psi = stability_constant(&self.params);
        let x_norm = self.x.mapv(|v| v * v).sum().sqrt();
        Ok(StabilityReport {
            epsilon: measured,
            empirical_diff: diff,
            bound: stability_bound(c_l, c_psi, cfg.nodes, x_norm, measured),
            c_l,
            c_psi,
            n: cfg.nodes,
            x_norm,
        })
    }
}

/// `cfg.instances` independent instances, each with measured `ε` drawn
/// uniformly from `(0, max_epsilon]`.
pub fn stability_reports(cfg: &StabilityConfig, seed: u64) -> Result<Vec<StabilityReport>> {
    (0..cfg.instances)
        .map(|i| {
            let s = derive_seed(seed, i as u64);
            let problem = stability_problem(cfg, s)?;
            let target = cfg.max_epsilon * (1.0 - rng::seeded(derive_seed(s, 2)).random::<f64>());
            // The measured size is linear in the construction size.
            let probe = problem.report(cfg, target)?;
            if probe.epsilon == 0.0 {
                return Ok(probe);
            }
            problem.report(cfg, target * target / probe.epsilon)
        })
        .collect()
}

/// One instance perturbed along a fixed direction at each size in
/// `epsilons`.
pub fn stability_curve(cfg: &StabilityConfig, epsilons: &[f64], seed: u64) -> Result<Vec<StabilityReport>> {
    let problem = stability_problem(cfg, seed)?;
    epsilons.iter().map(|&eps| problem.report(cfg, eps)).collect()
}

/// Tracking errors, bounds and constants of one online run on a quadratic
/// stream. Row `t` holds `‖𝒜_t − 𝒜*_t‖` (the node maximum in distributed
/// mode) and the bound on it; row 0 has no bound.
#[derive(Debug, Clone)]
pub struct TrackingReport {
    pub rows: Vec<ConvergenceRow>,
    pub constants: ConvergenceConstants,
    /// Consensus disagreement before each step; zero when centralized.
    pub disagreement: Vec<f64>,
    /// Limit of the bound for the worst rate of the stream; NaN when no
    /// bound applies.
    pub limit: f64,
}

/// Per-step rates and whether every step is strongly convex. A step whose
/// curvature floor is numerically zero keeps only the smoothness branch
/// `|1 − γ C_s|`, and no tracking bound applies to the run.
fn stream_rates(stream: &QuadraticStream, gamma: f64) -> Result<(Vec<f64>, bool)> {
    let mut applicable = true;
    let rates = stream
        .curvature
        .iter()
        .map(|&(cs, cc)| {
            if cc > STRONG_CONVEXITY_FLOOR * cs {
                convergence_rate(gamma, cs, cc)
            } else {
                applicable = false;
                convergence_rate(gamma, cs, cs)
            }
        })
        .collect::<Result<_>>()?;
    Ok((rates, applicable))
}

/// Curvature floors below this fraction of `C_s` count as zero.
const STRONG_CONVEXITY_FLOOR: f64 = 1e-12;

fn drift(stream: &QuadraticStream) -> Result<f64> {
    if stream.optima.len() < 2 {
        Ok(0.0)
    } else {
        estimate_drift_constant(&stream.optima)
    }
}

fn assemble_rows(errors: &[f64], rates: &[f64], bounds: Option<&[f64]>) -> Vec<ConvergenceRow> {
    errors
        .iter()
        .enumerate()
        .map(|(t, &e)| ConvergenceRow {
            t,
            tracking_error: e,
            bound: bounds.and_then(|b| t.checked_sub(1).map(|p| b[p])),
            m_t: rates.get(t).copied(),
        })
        .collect()
}

/// Centralized online descent on the stream from the stream model's taps.
pub fn centralized_tracking(stream: &QuadraticStream, gamma: f64) -> Result<TrackingReport> {
    let (rates, applicable) = stream_rates(stream, gamma)?;
    let c_b = drift(stream)?;
    let cfg = OnlineConfig { mode: OnlineMode::Centralized, gamma, epsilon_floor: None };
    let n = stream.graphs[0].n();
    let mut learner = OnlineLearner::new(&stream.model, cfg, n)?;
    let mut errors = Vec::with_capacity(stream.samples.len());
    for (sample, opt) in stream.samples.iter().zip(&stream.optima) {
        let rec = learner.step(sample, Some(opt))?;
        errors.push(rec.dist_to_opt.unwrap_or(f64::NAN));
    }
    let bounds = centralized_tracking_bound(errors[0], &rates, c_b)?;
    let (c_s, c_c) = stream.curvature_range();
    let m = rates.iter().copied().fold(0.0, f64::max);
    let limit = if !applicable {
        f64::NAN
    } else if m < 1.0 {
        c_b / (1.0 - m)
    } else {
        f64::INFINITY
    };
    Ok(TrackingReport {
        rows: assemble_rows(&errors, &rates, applicable.then_some(&bounds[..])),
        constants: ConvergenceConstants {
            c_b,
            c_s,
            c_c,
            c_eps: f64::NAN,
            c_d_hat: f64::NAN,
            gamma,
            lipschitz_l: f64::NAN,
        },
        disagreement: vec![0.0; errors.len()],
        limit,
    })
}

/// Distributed online descent with Metropolis weights (floor `1/N`) on the
/// stream's graphs, starting from `init`. Every graph is connected, so the
/// connectivity window is one step. The Lipschitz constant is the largest
/// local gradient norm met along the run.
pub fn distributed_tracking(stream: &QuadraticStream, gamma: f64, init: NodeParams) -> Result<TrackingReport> {
    let (rates, applicable) = stream_rates(stream, gamma)?;
    let c_b = drift(stream)?;
    let n = stream.graphs[0].n();
    if init.len() != n {
        return Err(Error::dim(format!("{} local copies for {n} nodes", init.len())));
    }
    let floor = 1.0 / n as f64;
    let c_d = 1;
    let c_eps = c_epsilon_constant(n, floor, c_d)?;
    let initial_mean_err = init.mean().distance(&stream.optima[0]);
    let cfg = OnlineConfig { mode: OnlineMode::Distributed, gamma, epsilon_floor: Some(floor) };
    let mut learner = OnlineLearner::with_locals(&stream.model, cfg, init)?;
    let mut errors = Vec::with_capacity(stream.samples.len());
    let mut disagreement = Vec::with_capacity(stream.samples.len());
    let mut lipschitz_l = 0.0_f64;
    for (sample, opt) in stream.samples.iter().zip(&stream.optima) {
        let problem = WideProblem::new(&sample.graph, &sample.x, sample.wide_stack.clone(), &stream.model)?;
        for (i, local) in learner.locals().locals().iter().enumerate() {
            let (_, up) = sample.target.local_loss_grad(i, &problem.output(local)?)?;
            lipschitz_l = lipschitz_l.max(problem.taps_gradient(&up).frobenius_norm());
        }
        disagreement.push(consensus_disagreement(learner.locals()));
        let rec = learner.step(sample, Some(opt))?;
        errors.push(rec.dist_to_opt.unwrap_or(f64::NAN));
    }
    let (c_s, c_c) = stream.curvature_range();
    let bounds = distributed_tracking_bound(initial_mean_err, &rates, c_b, gamma, lipschitz_l, c_s, c_eps)?;
    let m = rates.iter().copied().fold(0.0, f64::max);
    Ok(TrackingReport {
        rows: assemble_rows(&errors, &rates, applicable.then_some(&bounds[..])),
        constants: ConvergenceConstants { c_b, c_s, c_c, c_eps, c_d_hat: c_d as f64, gamma, lipschitz_l },
        disagreement,
        limit: if applicable { distributed_bound_limit(m, c_b, gamma, lipschitz_l, c_s, c_eps) } else { f64::NAN },
    })
}

/// `n` random local copies around the stream model's taps with entries
/// uniform on `±spread`.
pub fn random_locals(stream: &QuadraticStream, spread: f64, seed: u64) -> Result<NodeParams> {
    let n = stream.graphs[0].n();
    let mut r = rng::seeded(seed);
    let locals = (0..n)
        .map(|_| {
            let mut t = stream.model.wide.clone();
            for v in t.iter_flat_mut() {
                *v += r.random_range(-spread..=spread);
            }
            t
        })
        .collect();
    NodeParams::new(locals)
}

/// Metropolis weights (floor `1/N`) over `len` independent connected random
/// graphs on `n` nodes, each with edge probability drawn up to 0.9.
pub fn random_weight_sequence(n: usize, len: usize, seed: u64) -> Result<Vec<ConsensusWeights>> {
    let mut r = rng::seeded(seed);
    // Above the connectivity threshold 2 ln n / n so rejection sampling ends.
    let lo = (2.0 * (n as f64).ln() / n as f64).clamp(0.15, 0.75);
    (0..len)
        .map(|t| {
            let p = r.random_range(lo..=0.9);
            let g = sbm_generate(n, 1, p, p, derive_seed(seed, t as u64 + 1))?;
            metropolis_weights(&g, 1.0 / n as f64)
        })
        .collect()
}

/// Deviation of the product of `len` copies of one graph's weights, and the
/// matching lemma bound, for each length in `lengths`.
pub fn fixed_graph_deviation(s: &Gso, lengths: &[usize]) -> Result<Vec<(usize, f64, f64)>> {
    let w = metropolis_weights(s, 1.0 / s.n() as f64)?;
    lengths
        .iter()
        .map(|&len| {
            let seq = vec![w.clone(); len];
            let (dev, bound) = weight_product_deviation(&seq, 1)?;
            Ok((len, dev, bound))
        })
        .collect()
}
