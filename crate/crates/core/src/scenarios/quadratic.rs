//! Synthetic time-varying quadratic tracking task. The model is a plain
//! scalar graph filter (unit wide weight, deep branch switched off, identity
//! readout), targets are realizable by a drifting optimum `𝒜*_t`, and the
//! loss is the mean squared error, so every per-step optimum and curvature
//! is known in closed form.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::quadratic_curvature;
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, sbm_generate, Gso};
use crate::nn::{
    apply_taps, shift_stack, FilterTaps, GnnLayer, GnnParams, Nonlinearity, Readout, WdGnnParams, WideProblem,
};
use crate::rng::{self, derive_seed};
use crate::train::{Sample, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadraticConfig {
    pub nodes: usize,
    pub filter_order: usize,
    pub steps: usize,
    /// Distance the optimum moves per step.
    pub drift: f64,
    /// Number of graphs cycled through, one per step.
    pub graphs: usize,
    /// Edge probability of each random graph.
    pub edge_probability: f64,
}

impl Default for QuadraticConfig {
    fn default() -> Self {
        QuadraticConfig { nodes: 20, filter_order: 2, steps: 200, drift: 0.0, graphs: 1, edge_probability: 0.2 }
    }
}

/// A stream of samples with their per-step optima and curvatures.
#[derive(Debug, Clone)]
pub struct QuadraticStream {
    pub samples: Vec<Sample>,
    pub optima: Vec<FilterTaps>,
    /// `(C_s, C_c)` of each step's loss.
    pub curvature: Vec<(f64, f64)>,
    /// Model whose wide taps are tracked; the rest is fixed.
    pub model: WdGnnParams,
    pub graphs: Vec<Arc<Gso>>,
}

impl QuadraticStream {
    /// Extreme curvatures over the stream, `(max C_s, min C_c)`.
    pub fn curvature_range(&self) -> (f64, f64) {
        self.curvature.iter().fold((0.0, f64::INFINITY), |(s, c), &(cs, cc)| (s.max(cs), c.min(cc)))
    }
}

/// Scalar filter model of order `k` with the deep branch off.
pub fn filter_model(k: usize) -> WdGnnParams {
    let deep = GnnParams::new(vec![GnnLayer { taps: FilterTaps::zeros(0, 1, 1), sigma: Nonlinearity::Identity }])
        .expect("single layer");
    WdGnnParams::new(FilterTaps::zeros(k, 1, 1), deep, 1.0, 0.0, 0.0, Readout::identity(1)).expect("matching shapes")
}

pub fn quadratic_stream(cfg: &QuadraticConfig, seed: u64) -> Result<QuadraticStream> {
    if cfg.nodes < cfg.filter_order + 1 {
        return Err(Error::invalid("need at least K + 1 nodes for a strongly convex loss"));
    }
    if cfg.steps == 0 || cfg.graphs == 0 {
        return Err(Error::invalid("need at least one step and one graph"));
    }
    let graphs = (0..cfg.graphs)
        .map(|g| {
            let a = sbm_generate(
                cfg.nodes,
                1,
                cfg.edge_probability,
                cfg.edge_probability,
                derive_seed(seed, 100 + g as u64),
            )?;
            Ok(Arc::new(normalize_adjacency(&a)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let model = filter_model(cfg.filter_order);
    let mut r = rng::seeded(derive_seed(seed, 1));
    let p = cfg.filter_order + 1;
    let mut optimum = Array1::from_shape_simple_fn(p, || r.random_range(-1.0..1.0));
    let mut samples = Vec::with_capacity(cfg.steps);
    let mut optima = Vec::with_capacity(cfg.steps);
    let mut curvature = Vec::with_capacity(cfg.steps);
    for t in 0..cfg.steps {
        if t > 0 && cfg.drift > 0.0 {
            let dir: Array1<f64> = Array1::from_shape_simple_fn(p, || StandardNormal.sample(&mut r));
            let norm = dir.dot(&dir).sqrt();
            optimum = optimum + dir * (cfg.drift / norm);
        }
        let taps = FilterTaps::scalar(optimum.as_slice().expect("contiguous"));
        let graph = graphs[t % graphs.len()].clone();
        let x = Array2::from_shape_simple_fn((cfg.nodes, 1), || StandardNormal.sample(&mut r));
        let stack = shift_stack(&graph, &x, cfg.filter_order)?;
        let y = apply_taps(&stack, &taps)?;
        let problem = WideProblem::new(&graph, &x, Some(stack.clone()), &model)?;
        let (cs, cc) = quadratic_curvature(&problem, &model.wide, None)?;
        if cc <= 0.0 {
            return Err(Error::invalid(format!("step {t} loss is not strongly convex")));
        }
        curvature.push((cs, cc));
        optima.push(taps);
        let mut sample = Sample::new(graph, x, Target::Values { values: y, mask: None });
        sample.wide_stack = Some(stack);
        samples.push(sample);
    }
    Ok(QuadraticStream { samples, optima, curvature, model, graphs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::estimate_drift_constant;
    use crate::online::{run_online, OnlineConfig, OnlineMode};

    #[test]
    fn optima_fit_exactly_and_drift_is_as_configured() {
        let cfg = QuadraticConfig { drift: 0.05, steps: 30, ..Default::default() };
        let st = quadratic_stream(&cfg, 2).unwrap();
        for (s, o) in st.samples.iter().zip(&st.optima) {
            let mut m = st.model.clone();
            m.wide = o.clone();
            let (out, _) = s.forward(&m).unwrap();
            let (loss, _) = s.target.loss_grad(&out).unwrap();
            assert!(loss < 1e-24);
        }
        assert!((estimate_drift_constant(&st.optima).unwrap() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn centralized_descent_converges_without_drift() {
        let st = quadratic_stream(&QuadraticConfig::default(), 5).unwrap();
        let (cs, _) = st.curvature_range();
        let cfg = OnlineConfig { mode: OnlineMode::Centralized, gamma: 1.0 / cs, epsilon_floor: None };
        let out = run_online(&st.samples, &st.model, &cfg, Some(&st.optima)).unwrap();
        let first = out.trace.records[0].dist_to_opt.unwrap();
        let last = out.trace.records.last().unwrap().dist_to_opt.unwrap();
        assert!(last < 1e-2 * first, "{first} → {last}");
    }

    #[test]
    fn stream_is_deterministic() {
        let cfg = QuadraticConfig { graphs: 3, drift: 0.1, steps: 5, ..Default::default() };
        let a = quadratic_stream(&cfg, 9).unwrap();
        let b = quadratic_stream(&cfg, 9).unwrap();
        assert_eq!(a.optima, b.optima);
        assert_eq!(a.curvature, b.curvature);
        assert_eq!(a.graphs.len(), 3);
    }
}
