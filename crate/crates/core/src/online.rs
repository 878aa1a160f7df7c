//! Online phase: the deep part, combination scalars and readout stay at
//! their offline values while the wide taps follow one gradient step per
//! observed sample, either centrally or with per-node copies mixed through
//! doubly stochastic consensus weights.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{metropolis_weights, ConsensusWeights, GraphSignal, Gso};
use crate::nn::{FilterTaps, WdGnnParams, WideProblem};
use crate::train::{finish_metric, MetricKind, Sample, Target};

/// A task loss on the model output with a per-node local loss. For losses
/// that split over nodes the local losses average to the global one.
pub trait OutputLoss {
    fn loss_grad(&self, output: &GraphSignal) -> Result<(f64, Array2<f64>)>;
    fn local_loss_grad(&self, node: usize, output: &GraphSignal) -> Result<(f64, Array2<f64>)>;
}

impl OutputLoss for Target {
    fn loss_grad(&self, output: &GraphSignal) -> Result<(f64, Array2<f64>)> {
        Target::loss_grad(self, output)
    }

    fn local_loss_grad(&self, node: usize, output: &GraphSignal) -> Result<(f64, Array2<f64>)> {
        Target::local_loss_grad(self, node, output)
    }
}

/// One copy of the wide taps per node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeParams {
    locals: Vec<FilterTaps>,
}

impl NodeParams {
    pub fn new(locals: Vec<FilterTaps>) -> Result<Self> {
        let first = locals.first().ok_or_else(|| Error::invalid("no local parameters"))?;
        if locals.iter().any(|l| !l.same_shape(first)) {
            return Err(Error::dim("local parameters of different shapes"));
        }
        Ok(NodeParams { locals })
    }

    pub fn replicate(taps: &FilterTaps, n: usize) -> Self {
        NodeParams { locals: vec![taps.clone(); n.max(1)] }
    }

    pub fn len(&self) -> usize {
        self.locals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locals.is_empty()
    }

    pub fn locals(&self) -> &[FilterTaps] {
        &self.locals
    }

    pub fn locals_mut(&mut self) -> &mut [FilterTaps] {
        &mut self.locals
    }

    pub fn mean(&self) -> FilterTaps {
        let mut acc = self.locals[0].zeros_like();
        for l in &self.locals {
            acc.add_scaled(1.0, l);
        }
        acc.scale(1.0 / self.len() as f64);
        acc
    }
}

/// Largest Frobenius distance between two nodes' taps.
pub fn consensus_disagreement(locals: &NodeParams) -> f64 {
    let l = locals.locals();
    let mut worst = 0.0_f64;
    for i in 0..l.len() {
        for j in i + 1..l.len() {
            worst = worst.max(l[i].distance(&l[j]));
        }
    }
    worst
}

fn check_finite(taps: &FilterTaps, what: &str) -> Result<()> {
    if taps.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// `𝒜 − γ ∇_𝒜 J(Ψ(X; S, 𝒜))` on a prepared problem; returns the new taps and
/// the loss at `taps`.
pub fn centralized_update(
    problem: &WideProblem,
    taps: &FilterTaps,
    loss: &dyn OutputLoss,
    gamma: f64,
) -> Result<(FilterTaps, f64)> {
    let out = problem.output(taps)?;
    let (value, up) = loss.loss_grad(&out)?;
    let grad = problem.taps_gradient(&up);
    check_finite(&grad, "online gradient")?;
    let mut next = taps.clone();
    next.add_scaled(-gamma, &grad);
    Ok((next, value))
}

/// One centralized online step from `params.wide`; only the wide taps change.
pub fn centralized_online_step(
    params: &WdGnnParams,
    s: &Gso,
    x: &GraphSignal,
    loss: &dyn OutputLoss,
    gamma: f64,
) -> Result<FilterTaps> {
    let problem = WideProblem::new(s, x, None, params)?;
    Ok(centralized_update(&problem, &params.wide, loss, gamma)?.0)
}

/// Output assembled row by row, row `i` computed with node `i`'s taps.
pub fn nodewise_output(problem: &WideProblem, locals: &NodeParams) -> Result<GraphSignal> {
    if locals.len() != problem.n() {
        return Err(Error::dim(format!("{} local copies for {} nodes", locals.len(), problem.n())));
    }
    let mut out: Option<GraphSignal> = None;
    for (i, taps) in locals.locals().iter().enumerate() {
        let yi = problem.output(taps)?;
        let o = out.get_or_insert_with(|| Array2::zeros(yi.dim()));
        o.row_mut(i).assign(&yi.row(i));
    }
    Ok(out.expect("at least one node"))
}

/// `𝒜_i ← Σ_j W_ij 𝒜_j − γ ∇_{𝒜_i} J_i(Ψ(X; S, 𝒜_i))` for every node at once,
/// reading only the time-`t` snapshot. Returns the new copies and each
/// node's local loss.
pub fn distributed_online_step(
    locals: &NodeParams,
    w: &ConsensusWeights,
    s: &Gso,
    problem: &WideProblem,
    loss: &dyn OutputLoss,
    gamma: f64,
) -> Result<(NodeParams, Vec<f64>)> {
    let n = locals.len();
    if w.n() != n || s.n() != n || problem.n() != n {
        return Err(Error::dim("node count differs between parameters, weights, graph and signal"));
    }
    w.check_support(s)?;
    let mut next = Vec::with_capacity(n);
    let mut losses = Vec::with_capacity(n);
    for i in 0..n {
        let own = &locals.locals[i];
        let out = problem.output(own)?;
        let (li, up) = loss.local_loss_grad(i, &out)?;
        let grad = problem.taps_gradient(&up);
        check_finite(&grad, "local online gradient")?;
        let mut mixed = own.zeros_like();
        for (j, &wij) in w.entries().row(i).iter().enumerate() {
            if wij != 0.0 {
                mixed.add_scaled(wij, &locals.locals[j]);
            }
        }
        mixed.add_scaled(-gamma, &grad);
        next.push(mixed);
        losses.push(li);
    }
    Ok((NodeParams { locals: next }, losses))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnlineMode {
    Centralized,
    Distributed,
}

impl OnlineMode {
    pub fn name(self) -> &'static str {
        match self {
            OnlineMode::Centralized => "centralized",
            OnlineMode::Distributed => "distributed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineConfig {
    pub mode: OnlineMode,
    pub gamma: f64,
    /// Floor passed to [`metropolis_weights`]; `None` uses `1 / N`.
    pub epsilon_floor: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineRecord {
    pub t: usize,
    pub loss: f64,
    pub metric: f64,
    pub disagreement: f64,
    pub dist_to_opt: Option<f64>,
    pub gamma: f64,
}

/// One record per processed step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OnlineTrace {
    pub records: Vec<OnlineRecord>,
}

impl OnlineTrace {
    pub fn push(&mut self, r: OnlineRecord) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV with header `t,loss,metric,disagreement,dist_to_opt,gamma`; an
    /// unknown optimum leaves its cell empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,loss,metric,disagreement,dist_to_opt,gamma")?;
        for r in &self.records {
            let d = r.dist_to_opt.map(|d| d.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{},{}", r.t, r.loss, r.metric, r.disagreement, d, r.gamma)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OnlineOutcome {
    /// Offline parameters with the wide taps replaced by the final iterate
    /// (the node average in distributed mode).
    pub params: WdGnnParams,
    /// Final per-node copies in distributed mode.
    pub locals: Option<NodeParams>,
    pub trace: OnlineTrace,
}

/// Incremental form of [`run_online`]: holds the current iterate(s) and
/// processes one sample per [`step`](Self::step).
#[derive(Debug, Clone)]
pub struct OnlineLearner {
    trained: WdGnnParams,
    config: OnlineConfig,
    central: FilterTaps,
    locals: NodeParams,
    trace: OnlineTrace,
}

impl OnlineLearner {
    /// Every copy of the wide taps starts at the offline value.
    pub fn new(trained: &WdGnnParams, config: OnlineConfig, n: usize) -> Result<Self> {
        if !(config.gamma >= 0.0 && config.gamma.is_finite()) {
            return Err(Error::invalid(format!("step size {} must be finite and nonnegative", config.gamma)));
        }
        Ok(OnlineLearner {
            trained: trained.clone(),
            config,
            central: trained.wide.clone(),
            locals: NodeParams::replicate(&trained.wide, n),
            trace: OnlineTrace::default(),
        })
    }

    /// Starts distributed runs from arbitrary per-node copies.
    pub fn with_locals(trained: &WdGnnParams, config: OnlineConfig, locals: NodeParams) -> Result<Self> {
        let mut learner = OnlineLearner::new(trained, config, locals.len())?;
        learner.central = locals.mean();
        learner.locals = locals;
        Ok(learner)
    }

    pub fn trace(&self) -> &OnlineTrace {
        &self.trace
    }

    pub fn locals(&self) -> &NodeParams {
        &self.locals
    }

    /// Offline parameters with the current wide taps (the node average in
    /// distributed mode).
    pub fn params(&self) -> WdGnnParams {
        let mut p = self.trained.clone();
        p.wide = match self.config.mode {
            OnlineMode::Centralized => self.central.clone(),
            OnlineMode::Distributed => self.locals.mean(),
        };
        p
    }

    /// Predicts on `sample`, records loss and metric, then updates.
    /// `optimum` is the minimizer of this step's loss, when known.
    pub fn step(&mut self, sample: &Sample, optimum: Option<&FilterTaps>) -> Result<OnlineRecord> {
        let n = self.locals.len();
        if sample.graph.n() != n {
            return Err(Error::dim(format!("sample on {} nodes, learner has {n}", sample.graph.n())));
        }
        let problem = WideProblem::new(&sample.graph, &sample.x, sample.wide_stack.clone(), &self.trained)?;
        self.step_with(&sample.graph, &problem, &sample.target, optimum, Some(sample.target.metric_kind()))
    }

    /// As [`step`](Self::step) for an arbitrary loss on a prepared problem;
    /// the metric is recorded only when `metric` names how to score a
    /// [`Target`] loss, and is `NaN` otherwise.
    pub fn step_with_loss(&mut self, s: &Gso, problem: &WideProblem, loss: &dyn OutputLoss) -> Result<OnlineRecord> {
        self.step_with(s, problem, loss, None, None)
    }

    fn step_with<L: OutputLoss + ?Sized + AsTarget>(
        &mut self,
        s: &Gso,
        problem: &WideProblem,
        loss: &L,
        optimum: Option<&FilterTaps>,
        metric: Option<MetricKind>,
    ) -> Result<OnlineRecord> {
        let t = self.trace.len();
        let gamma = self.config.gamma;
        let score = |out: &GraphSignal| match (metric, loss.as_target()) {
            (Some(kind), Some(target)) => {
                let (num, den) = target.metric_parts(out);
                finish_metric(kind, num, den)
            }
            _ => f64::NAN,
        };
        let record = match self.config.mode {
            OnlineMode::Centralized => {
                let out = problem.output(&self.central)?;
                let metric = score(&out);
                let dist = optimum.map(|o| self.central.distance(o));
                let (next, value) = centralized_update(problem, &self.central, loss.as_dyn(), gamma)?;
                self.central = next;
                OnlineRecord { t, loss: value, metric, disagreement: 0.0, dist_to_opt: dist, gamma }
            }
            OnlineMode::Distributed => {
                let floor = self.config.epsilon_floor.unwrap_or(1.0 / s.n() as f64);
                let w = metropolis_weights(s, floor)?;
                let out = nodewise_output(problem, &self.locals)?;
                let (value, _) = loss.loss_grad(&out)?;
                let metric = score(&out);
                let dist = optimum.map(|o| self.locals.locals().iter().map(|l| l.distance(o)).fold(0.0, f64::max));
                let disagreement = consensus_disagreement(&self.locals);
                self.locals = distributed_online_step(&self.locals, &w, s, problem, loss.as_dyn(), gamma)?.0;
                OnlineRecord { t, loss: value, metric, disagreement, dist_to_opt: dist, gamma }
            }
        };
        self.trace.push(record);
        Ok(record)
    }

    /// Metric over `data` with the current iterate(s); row `i` uses node
    /// `i`'s taps in distributed mode.
    pub fn evaluate(&self, data: &[Sample]) -> Result<f64> {
        match self.config.mode {
            OnlineMode::Centralized => {
                evaluate_nodewise(&self.trained, &NodeParams::replicate(&self.central, self.locals.len()), data)
            }
            OnlineMode::Distributed => evaluate_nodewise(&self.trained, &self.locals, data),
        }
    }

    pub fn finish(self) -> OnlineOutcome {
        let params = self.params();
        let locals = match self.config.mode {
            OnlineMode::Centralized => None,
            OnlineMode::Distributed => Some(self.locals),
        };
        OnlineOutcome { params, locals, trace: self.trace }
    }
}

/// Lets the learner score [`Target`] losses while accepting any loss.
trait AsTarget {
    fn as_target(&self) -> Option<&Target>;
    fn as_dyn(&self) -> &dyn OutputLoss;
}

impl AsTarget for Target {
    fn as_target(&self) -> Option<&Target> {
        Some(self)
    }
    fn as_dyn(&self) -> &dyn OutputLoss {
        self
    }
}

impl AsTarget for dyn OutputLoss + '_ {
    fn as_target(&self) -> Option<&Target> {
        None
    }
    fn as_dyn(&self) -> &dyn OutputLoss {
        self
    }
}

/// Runs the online procedure over `stream`, starting every copy of the wide
/// taps at the offline value. Each step first predicts (row `i` with node
/// `i`'s taps in distributed mode), records loss and metric, then updates.
/// `optima[t]`, when given, is the minimizer of step `t`'s loss.
pub fn run_online(
    stream: &[Sample],
    trained: &WdGnnParams,
    config: &OnlineConfig,
    optima: Option<&[FilterTaps]>,
) -> Result<OnlineOutcome> {
    let first = stream.first().ok_or_else(|| Error::invalid("online stream is empty"))?;
    if let Some(o) = optima {
        if o.len() < stream.len() {
            return Err(Error::invalid("fewer optima than stream steps"));
        }
    }
    let mut learner = OnlineLearner::new(trained, *config, first.graph.n())?;
    for (t, sample) in stream.iter().enumerate() {
        learner.step(sample, optima.map(|o| &o[t]))?;
    }
    Ok(learner.finish())
}

/// Aggregated metric over `data` with row `i` of every output computed from
/// node `i`'s taps.
pub fn evaluate_nodewise(trained: &WdGnnParams, locals: &NodeParams, data: &[Sample]) -> Result<f64> {
    let kind = data.first().map(|s| s.target.metric_kind()).unwrap_or(MetricKind::Accuracy);
    let (mut num, mut den) = (0.0, 0.0);
    for s in data {
        let problem = WideProblem::new(&s.graph, &s.x, s.wide_stack.clone(), trained)?;
        let (a, b) = s.target.metric_parts(&nodewise_output(&problem, locals)?);
        num += a;
        den += b;
    }
    Ok(finish_metric(kind, num, den))
}
