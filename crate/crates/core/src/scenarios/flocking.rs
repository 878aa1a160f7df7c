//! Flocking of a robot swarm under double-integrator dynamics. A centralized
//! expert aligns velocities while keeping agents apart through a collision
//! potential; a decentralized policy imitates it from local features
//! exchanged over the communication graph, with the wide part seeing
//! neighbor information through delayed multi-hop exchanges.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphSignal, Gso};
use crate::nn::{delayed_shift_stack, Architecture, ModelKind, Nonlinearity, ShiftStack, WdGnnParams, WideProblem};
use crate::online::{nodewise_output, OnlineConfig, OnlineLearner, OnlineMode, OnlineTrace, OutputLoss};
use crate::rng::{self, derive_seed};
use crate::train::{train_with_validation, Dataset, Sample, Target, TrainConfig, TrainOutcome};

/// Number of input features per agent.
pub const FEATURES: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    /// `N × 2` meters.
    pub positions: Array2<f64>,
    /// `N × 2` meters per second.
    pub velocities: Array2<f64>,
}

impl SwarmState {
    pub fn new(positions: Array2<f64>, velocities: Array2<f64>) -> Result<Self> {
        if positions.ncols() != 2 || positions.dim() != velocities.dim() {
            return Err(Error::dim("positions and velocities must both be N × 2"));
        }
        let state = SwarmState { positions, velocities };
        state.check(0)?;
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.positions.nrows()
    }

    fn check(&self, step: usize) -> Result<()> {
        if self.positions.iter().chain(self.velocities.iter()).any(|v| !v.is_finite()) {
            return Err(Error::BlowUp(step));
        }
        Ok(())
    }

    fn delta(&self, i: usize, j: usize) -> [f64; 2] {
        [self.positions[[i, 0]] - self.positions[[j, 0]], self.positions[[i, 1]] - self.positions[[j, 1]]]
    }

    /// `Σ_i ‖v_i − v̄‖² / N`.
    pub fn velocity_variance(&self) -> f64 {
        velocity_variance(&self.velocities)
    }
}

fn velocity_variance(v: &Array2<f64>) -> f64 {
    let n = v.nrows() as f64;
    let mean = v.sum_axis(ndarray::Axis(0)) / n;
    v.rows().into_iter().map(|r| (r[0] - mean[0]).powi(2) + (r[1] - mean[1]).powi(2)).sum::<f64>() / n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwarmConfig {
    pub n_agents: usize,
    pub comm_radius: f64,
    pub sample_time: f64,
    pub duration: f64,
    pub max_accel: f64,
    /// Initial velocity components are uniform in `[−v, v]`.
    pub init_velocity: f64,
    pub min_init_spacing: f64,
    pub cutoff: f64,
    /// Radius of the disk of initial positions; `None` scales it with the
    /// swarm as `r √(N / π) / 2`.
    pub init_radius: Option<f64>,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        SwarmConfig {
            n_agents: 50,
            comm_radius: 2.0,
            sample_time: 0.01,
            duration: 2.0,
            max_accel: 10.0,
            init_velocity: 3.0,
            min_init_spacing: 0.1,
            cutoff: 2.0,
            init_radius: None,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            self.comm_radius,
            self.sample_time,
            self.duration,
            self.max_accel,
            self.init_velocity,
            self.min_init_spacing,
            self.cutoff,
        ];
        if self.n_agents == 0 || reals.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("swarm parameters must all be positive and finite"));
        }
        if matches!(self.init_radius, Some(r) if !(r > 0.0 && r.is_finite())) {
            return Err(Error::invalid("initial radius must be positive"));
        }
        Ok(())
    }

    /// Control steps per rollout.
    pub fn steps(&self) -> usize {
        (self.duration / self.sample_time).round() as usize
    }

    pub fn init_radius(&self) -> f64 {
        self.init_radius
            .unwrap_or_else(|| self.comm_radius * (self.n_agents as f64 / std::f64::consts::PI).sqrt() / 2.0)
    }
}

/// Uniform positions in a disk, rejection-sampled to respect the minimum
/// spacing, and uniform velocities.
pub fn initial_state(cfg: &SwarmConfig, seed: u64) -> Result<SwarmState> {
    cfg.validate()?;
    const RETRIES: usize = 10_000;
    let mut r = rng::seeded(seed);
    let radius = cfg.init_radius();
    let n = cfg.n_agents;
    let mut pos: Vec<[f64; 2]> = Vec::with_capacity(n);
    let mut misses = 0;
    while pos.len() < n {
        let (u, a): (f64, f64) = (r.random(), r.random_range(0.0..std::f64::consts::TAU));
        let p = [radius * u.sqrt() * a.cos(), radius * u.sqrt() * a.sin()];
        if pos.iter().all(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() >= cfg.min_init_spacing) {
            pos.push(p);
        } else {
            misses += 1;
            if misses > RETRIES {
                return Err(Error::invalid(format!("could not place {n} agents {} m apart", cfg.min_init_spacing)));
            }
        }
    }
    let positions = Array2::from_shape_fn((n, 2), |(i, k)| pos[i][k]);
    let v = cfg.init_velocity;
    let velocities = Array2::from_shape_simple_fn((n, 2), || r.random_range(-v..=v));
    SwarmState::new(positions, velocities)
}

/// 0/1 adjacency with an edge whenever two agents are within `r`.
pub fn build_communication_graph(state: &SwarmState, r: f64) -> Result<Gso> {
    if !(r > 0.0) {
        return Err(Error::invalid(format!("communication radius {r} must be positive")));
    }
    let n = state.n();
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = state.delta(i, j);
            if (d[0] * d[0] + d[1] * d[1]).sqrt() <= r {
                a[[i, j]] = 1.0;
                a[[j, i]] = 1.0;
            }
        }
    }
    Gso::new(a, true)
}

/// Shift operator used by the policy: the adjacency divided by the largest
/// degree, so that repeated exchanges do not amplify signals.
pub fn policy_gso(adjacency: &Gso) -> Result<Gso> {
    let d = (0..adjacency.n()).map(|i| adjacency.degree(i)).max().unwrap_or(0).max(1);
    Gso::new(adjacency.entries() / d as f64, true)
}

/// `∇_{p_i} V(p_i, p_j)` for `V = 1/‖Δ‖² + log ‖Δ‖²` inside the cutoff and
/// zero outside, with `Δ = p_i − p_j`.
pub fn collision_potential_gradient(p_i: [f64; 2], p_j: [f64; 2], cutoff: f64) -> Result<[f64; 2]> {
    let d = [p_i[0] - p_j[0], p_i[1] - p_j[1]];
    potential_gradient(d, cutoff)
}

fn potential_gradient(d: [f64; 2], cutoff: f64) -> Result<[f64; 2]> {
    let sq = d[0] * d[0] + d[1] * d[1];
    if sq == 0.0 {
        return Err(Error::invalid("coincident positions"));
    }
    if sq.sqrt() > cutoff {
        return Ok([0.0, 0.0]);
    }
    let c = -2.0 / (sq * sq) + 2.0 / sq;
    Ok([c * d[0], c * d[1]])
}

fn clip(u: &mut Array2<f64>, max_accel: f64) {
    u.mapv_inplace(|v| v.clamp(-max_accel, max_accel));
}

/// `u_i = −Σ_j (v_i − v_j) − Σ_j ∇_{p_i} V(p_i, p_j)` over all agents,
/// clipped per component.
pub fn optimal_controller(state: &SwarmState, cutoff: f64, max_accel: f64) -> Result<Array2<f64>> {
    let n = state.n();
    let v = &state.velocities;
    let mean = v.sum_axis(ndarray::Axis(0));
    let mut u = Array2::zeros((n, 2));
    for i in 0..n {
        for k in 0..2 {
            u[[i, k]] = -(n as f64 * v[[i, k]] - mean[k]);
        }
        for j in 0..n {
            if j != i {
                let g = potential_gradient(state.delta(i, j), cutoff)?;
                u[[i, 0]] -= g[0];
                u[[i, 1]] -= g[1];
            }
        }
    }
    clip(&mut u, max_accel);
    Ok(u)
}

/// `p⁺ = p + v T_s + u T_s² / 2`, `v⁺ = v + u T_s`.
pub fn step_dynamics(state: &SwarmState, u: &Array2<f64>, t_s: f64) -> Result<SwarmState> {
    if u.dim() != state.velocities.dim() {
        return Err(Error::dim("one acceleration per agent and axis"));
    }
    if u.iter().any(|v| !v.is_finite()) || !t_s.is_finite() {
        return Err(Error::NonFinite("accelerations".into()));
    }
    let positions = &state.positions + &(&state.velocities * t_s) + &(u * (t_s * t_s / 2.0));
    let velocities = &state.velocities + &(u * t_s);
    let next = SwarmState { positions, velocities };
    next.check(0)?;
    Ok(next)
}

/// Per agent `[Σ_j (v_i − v_j), Σ_j Δ_ij/‖Δ_ij‖⁴, Σ_j Δ_ij/‖Δ_ij‖²]` over its
/// neighbors in `graph`.
pub fn flocking_features(state: &SwarmState, graph: &Gso) -> Result<GraphSignal> {
    let n = state.n();
    if graph.n() != n {
        return Err(Error::dim("graph and swarm sizes differ"));
    }
    let mut x = Array2::zeros((n, FEATURES));
    for i in 0..n {
        for j in graph.neighbors(i) {
            let d = state.delta(i, j);
            let sq = d[0] * d[0] + d[1] * d[1];
            if sq == 0.0 {
                return Err(Error::invalid(format!("agents {i} and {j} coincide")));
            }
            for k in 0..2 {
                x[[i, k]] += state.velocities[[i, k]] - state.velocities[[j, k]];
                x[[i, 2 + k]] += d[k] / (sq * sq);
                x[[i, 4 + k]] += d[k] / sq;
            }
        }
    }
    Ok(x)
}

/// `(Σ_t var_t, var_T)` with `var_t = Σ_i ‖v_{i,t} − v̄_t‖² / N`.
pub fn velocity_variation(trajectory: &[SwarmState]) -> Result<(f64, f64)> {
    let last = trajectory.last().ok_or_else(|| Error::invalid("empty trajectory"))?;
    let total = trajectory.iter().map(SwarmState::velocity_variance).sum();
    Ok((total, last.velocity_variance()))
}

/// Velocity variance one step ahead, `v⁺ = v + clip(u) T_s`, as a loss on
/// the policy output `u`. Node `i`'s local loss is the variance over its
/// closed neighborhood.
#[derive(Debug, Clone)]
pub struct LookaheadVariance {
    velocities: Array2<f64>,
    neighborhoods: Vec<Vec<usize>>,
    t_s: f64,
    max_accel: f64,
}

impl LookaheadVariance {
    pub fn new(state: &SwarmState, graph: &Gso, t_s: f64, max_accel: f64) -> Self {
        let neighborhoods = (0..state.n())
            .map(|i| std::iter::once(i).chain(graph.neighbors(i).filter(move |&j| j != i)).collect())
            .collect();
        LookaheadVariance { velocities: state.velocities.clone(), neighborhoods, t_s, max_accel }
    }

    fn next_velocities(&self, output: &GraphSignal) -> Result<Array2<f64>> {
        if output.dim() != self.velocities.dim() {
            return Err(Error::dim("policy output must be N × 2"));
        }
        let mut u = output.clone();
        clip(&mut u, self.max_accel);
        Ok(&self.velocities + &(u * self.t_s))
    }

    /// Variance over `members` and its gradient in the output.
    fn group(&self, output: &GraphSignal, v: &Array2<f64>, members: &[usize]) -> (f64, Array2<f64>) {
        let m = members.len() as f64;
        let mut mean = [0.0; 2];
        for &j in members {
            mean[0] += v[[j, 0]] / m;
            mean[1] += v[[j, 1]] / m;
        }
        let mut value = 0.0;
        let mut grad = Array2::zeros(output.dim());
        for &j in members {
            for k in 0..2 {
                let dev = v[[j, k]] - mean[k];
                value += dev * dev / m;
                if output[[j, k]].abs() < self.max_accel {
                    grad[[j, k]] = 2.0 * dev / m * self.t_s;
                }
            }
        }
        (value, grad)
    }
}

impl OutputLoss for LookaheadVariance {
    fn loss_grad(&self, output: &GraphSignal) -> Result<(f64, Array2<f64>)> {
        let v = self.next_velocities(output)?;
        let all: Vec<usize> = (0..v.nrows()).collect();
        Ok(self.group(output, &v, &all))
    }

    fn local_loss_grad(&self, node: usize, output: &GraphSignal) -> Result<(f64, Array2<f64>)> {
        let v = self.next_velocities(output)?;
        let members = self.neighborhoods.get(node).ok_or_else(|| Error::dim(format!("node {node} out of range")))?;
        Ok(self.group(output, &v, members))
    }
}

/// Who chooses the accelerations in a rollout.
#[derive(Debug, Clone, Copy)]
pub enum FlockingPolicy<'a> {
    Expert,
    Zero,
    Network(&'a WdGnnParams),
}

/// How a network policy adapts during a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlockingMode {
    Offline,
    Centralized,
    Distributed,
}

impl FlockingMode {
    pub fn name(self) -> &'static str {
        match self {
            FlockingMode::Offline => "offline",
            FlockingMode::Centralized => "centralized",
            FlockingMode::Distributed => "distributed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlockingRun {
    /// States `0..=T`.
    pub trajectory: Vec<SwarmState>,
    /// Clipped accelerations applied at steps `0..T`.
    pub controls: Vec<Array2<f64>>,
    pub total_variation: f64,
    pub final_variation: f64,
    pub trace: OnlineTrace,
}

impl FlockingRun {
    /// CSV with header `t,agent,px,py,vx,vy,ux,uy`; the final state has no
    /// control and leaves its control cells empty.
    pub fn write_trajectory_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,agent,px,py,vx,vy,ux,uy")?;
        for (t, st) in self.trajectory.iter().enumerate() {
            for i in 0..st.n() {
                let (p, v) = (st.positions.row(i), st.velocities.row(i));
                match self.controls.get(t) {
                    Some(u) => {
                        writeln!(out, "{t},{i},{},{},{},{},{},{}", p[0], p[1], v[0], v[1], u[[i, 0]], u[[i, 1]])?
                    }
                    None => writeln!(out, "{t},{i},{},{},{},{},,", p[0], p[1], v[0], v[1])?,
                }
            }
        }
        Ok(())
    }
}

/// Rolling window of `(S_τ, X_τ)` pairs, newest first, padded with empty
/// graphs and zero signals before the first step.
struct History {
    entries: VecDeque<(Gso, GraphSignal)>,
}

impl History {
    fn new(order: usize, n: usize) -> Self {
        History { entries: (0..=order).map(|_| (Gso::zeros(n), Array2::zeros((n, FEATURES)))).collect() }
    }

    fn push(&mut self, s: Gso, x: GraphSignal) {
        self.entries.pop_back();
        self.entries.push_front((s, x));
    }

    fn stack(&self) -> Result<ShiftStack> {
        let h: Vec<(Gso, GraphSignal)> = self.entries.iter().cloned().collect();
        delayed_shift_stack(&h, self.entries.len() - 1)
    }
}

/// Policy inputs at one step.
struct Observation {
    graph: Gso,
    x: GraphSignal,
    stack: Option<ShiftStack>,
}

fn observe(state: &SwarmState, cfg: &SwarmConfig, history: Option<&mut History>) -> Result<Observation> {
    let a = build_communication_graph(state, cfg.comm_radius)?;
    let x = flocking_features(state, &a)?;
    let graph = policy_gso(&a)?;
    let stack = match history {
        Some(h) => {
            h.push(graph.clone(), x.clone());
            Some(h.stack()?)
        }
        None => None,
    };
    Ok(Observation { graph, x, stack })
}

/// Closed-loop rollout from `init`. Network policies see the current
/// features through the deep part and the delayed exchanges through the
/// wide part; online modes take one wide-tap step per control step on the
/// one-step-ahead velocity variance (global for centralized, neighborhood
/// for distributed).
pub fn run_flocking(
    policy: FlockingPolicy<'_>,
    cfg: &SwarmConfig,
    mode: FlockingMode,
    gamma: f64,
    init: SwarmState,
) -> Result<FlockingRun> {
    cfg.validate()?;
    let steps = cfg.steps();
    let n = init.n();
    let mut history = match policy {
        FlockingPolicy::Network(p) => Some(History::new(p.wide.order(), n)),
        _ => None,
    };
    let mut learner = match (policy, mode) {
        (FlockingPolicy::Network(p), FlockingMode::Centralized) => {
            Some(OnlineLearner::new(p, OnlineConfig { mode: OnlineMode::Centralized, gamma, epsilon_floor: None }, n)?)
        }
        (FlockingPolicy::Network(p), FlockingMode::Distributed) => {
            Some(OnlineLearner::new(p, OnlineConfig { mode: OnlineMode::Distributed, gamma, epsilon_floor: None }, n)?)
        }
        _ => None,
    };
    let mut trajectory = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps);
    let mut state = init;
    for t in 0..steps {
        let mut u = match policy {
            FlockingPolicy::Expert => optimal_controller(&state, cfg.cutoff, cfg.max_accel)?,
            FlockingPolicy::Zero => Array2::zeros((n, 2)),
            FlockingPolicy::Network(trained) => {
                let obs = observe(&state, cfg, history.as_mut())?;
                let problem = WideProblem::new(&obs.graph, &obs.x, obs.stack, trained)?;
                match learner.as_mut() {
                    None => problem.output(&trained.wide)?,
                    Some(l) => {
                        let out = match mode {
                            FlockingMode::Distributed => nodewise_output(&problem, l.locals())?,
                            _ => problem.output(&l.params().wide)?,
                        };
                        let loss = LookaheadVariance::new(&state, &obs.graph, cfg.sample_time, cfg.max_accel);
                        l.step_with_loss(&obs.graph, &problem, &loss)?;
                        out
                    }
                }
            }
        };
        clip(&mut u, cfg.max_accel);
        let next = step_dynamics(&state, &u, cfg.sample_time).map_err(|_| Error::BlowUp(t))?;
        trajectory.push(state);
        controls.push(u);
        state = next;
    }
    trajectory.push(state);
    let (total_variation, final_variation) = velocity_variation(&trajectory)?;
    let trace = learner.map(|l| l.finish().trace).unwrap_or_default();
    Ok(FlockingRun { trajectory, controls, total_variation, final_variation, trace })
}

/// Expert trajectory `i` of a dataset seeded with `seed` starts here.
pub fn trajectory_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, i as u64)
}

/// Imitation samples from `n_trajectories` expert rollouts: every
/// `sample_every`-th step records the features, graph, delayed stack of
/// order `order` and the expert action.
pub fn gen_flocking_dataset(
    cfg: &SwarmConfig,
    n_trajectories: usize,
    order: usize,
    sample_every: usize,
    seed: u64,
) -> Result<Dataset> {
    let every = sample_every.max(1);
    let per_traj: Vec<Result<Vec<Sample>>> = (0..n_trajectories)
        .into_par_iter()
        .map(|i| {
            let init = initial_state(cfg, trajectory_seed(seed, i))?;
            let run = run_flocking(FlockingPolicy::Expert, cfg, FlockingMode::Offline, 0.0, init)?;
            let mut history = History::new(order, cfg.n_agents);
            let mut out = Vec::new();
            for (t, (state, u)) in run.trajectory.iter().zip(&run.controls).enumerate() {
                let obs = observe(state, cfg, Some(&mut history))?;
                if t % every == 0 {
                    let mut sample =
                        Sample::new(Arc::new(obs.graph), obs.x, Target::Values { values: u.clone(), mask: None });
                    sample.wide_stack = obs.stack;
                    out.push(sample);
                }
            }
            Ok(out)
        })
        .collect();
    let mut samples = Vec::new();
    for r in per_traj {
        samples.extend(r?);
    }
    Ok(Dataset::new(samples))
}

/// Everything a flocking experiment needs besides the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlockingConfig {
    pub swarm: SwarmConfig,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub sample_every: usize,
    pub filter_order: usize,
    pub features: usize,
    pub layers: usize,
    pub sigma: Nonlinearity,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gamma_centralized: f64,
    pub gamma_distributed: f64,
}

impl Default for FlockingConfig {
    fn default() -> Self {
        FlockingConfig {
            swarm: SwarmConfig::default(),
            n_train: 400,
            n_valid: 40,
            n_test: 40,
            sample_every: 1,
            filter_order: 3,
            features: 32,
            layers: 1,
            sigma: Nonlinearity::Tanh,
            epochs: 30,
            batch_size: 20,
            learning_rate: 5e-4,
            gamma_centralized: 0.1,
            gamma_distributed: 0.1,
        }
    }
}

impl FlockingConfig {
    pub fn architecture(&self) -> Architecture {
        Architecture::uniform(FEATURES, self.filter_order, self.features, self.layers, self.sigma, 2)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
            ..TrainConfig::default()
        }
    }
}

/// Mean velocity variation of one policy over the test rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyScore {
    pub policy: String,
    pub mode: FlockingMode,
    pub total_variation: f64,
    pub final_variation: f64,
}

#[derive(Debug, Clone)]
pub struct FlockingExperiment {
    pub scores: Vec<PolicyScore>,
    pub wdgnn: TrainOutcome,
    pub filter: TrainOutcome,
    /// First test rollout of every scored policy, in the order of `scores`.
    pub examples: Vec<FlockingRun>,
}

impl FlockingExperiment {
    pub fn score(&self, policy: &str, mode: FlockingMode) -> Option<&PolicyScore> {
        self.scores.iter().find(|s| s.policy == policy && s.mode == mode)
    }
}

fn train_policy(
    cfg: &FlockingConfig,
    train: &Dataset,
    valid: &Dataset,
    kind: ModelKind,
    seed: u64,
) -> Result<TrainOutcome> {
    let init = WdGnnParams::init(&cfg.architecture(), kind, &mut rng::seeded(derive_seed(seed, 3)))?;
    let mut tc = cfg.train_config(derive_seed(seed, 4));
    tc.trainable = kind.train_mask();
    train_with_validation(train, valid, &init, &tc)
}

fn score(
    name: &str,
    policy: FlockingPolicy<'_>,
    mode: FlockingMode,
    gamma: f64,
    cfg: &FlockingConfig,
    inits: &[SwarmState],
) -> Result<(PolicyScore, FlockingRun)> {
    let runs = inits
        .par_iter()
        .map(|s| run_flocking(policy, &cfg.swarm, mode, gamma, s.clone()))
        .collect::<Result<Vec<_>>>()?;
    let k = runs.len() as f64;
    let total_variation = runs.iter().map(|r| r.total_variation).sum::<f64>() / k;
    let final_variation = runs.iter().map(|r| r.final_variation).sum::<f64>() / k;
    let first = runs.into_iter().next().ok_or_else(|| Error::invalid("no test rollouts"))?;
    Ok((PolicyScore { policy: name.into(), mode, total_variation, final_variation }, first))
}

/// Trains a WD-GNN and a graph filter by imitation, then scores the expert,
/// both offline policies and the WD-GNN with both online modes on the same
/// test initial states.
pub fn run_flocking_experiment(cfg: &FlockingConfig, seed: u64) -> Result<FlockingExperiment> {
    let order = cfg.filter_order;
    let train = gen_flocking_dataset(&cfg.swarm, cfg.n_train, order, cfg.sample_every, derive_seed(seed, 0))?;
    let valid = gen_flocking_dataset(&cfg.swarm, cfg.n_valid, order, cfg.sample_every, derive_seed(seed, 1))?;
    let inits = (0..cfg.n_test)
        .map(|i| initial_state(&cfg.swarm, trajectory_seed(derive_seed(seed, 2), i)))
        .collect::<Result<Vec<_>>>()?;
    let wdgnn = train_policy(cfg, &train, &valid, ModelKind::WdGnn, seed)?;
    let filter = train_policy(cfg, &train, &valid, ModelKind::GraphFilter, seed)?;
    let plan: Vec<(&str, FlockingPolicy<'_>, FlockingMode, f64)> = vec![
        ("expert", FlockingPolicy::Expert, FlockingMode::Offline, 0.0),
        ("wdgnn", FlockingPolicy::Network(&wdgnn.params), FlockingMode::Offline, 0.0),
        ("graph_filter", FlockingPolicy::Network(&filter.params), FlockingMode::Offline, 0.0),
        ("wdgnn", FlockingPolicy::Network(&wdgnn.params), FlockingMode::Centralized, cfg.gamma_centralized),
        ("wdgnn", FlockingPolicy::Network(&wdgnn.params), FlockingMode::Distributed, cfg.gamma_distributed),
    ];
    let mut scores = Vec::new();
    let mut examples = Vec::new();
    for (name, policy, mode, gamma) in plan {
        let (s, r) = score(name, policy, mode, gamma, cfg, &inits)?;
        scores.push(s);
        examples.push(r);
    }
    Ok(FlockingExperiment { scores, wdgnn, filter, examples })
}
