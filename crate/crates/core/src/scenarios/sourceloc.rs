//! Source localization on stochastic block model graphs: a signal diffused
//! from one source per community is classified by its community at a set of
//! detector nodes.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::with_graph;
use crate::error::{Error, Result};
use crate::graph::{community_labels, drop_edges, normalize_adjacency, sbm_generate, GraphSignal, Gso};
use crate::nn::{Architecture, ModelKind, Nonlinearity, WdGnnParams};
use crate::online::{OnlineConfig, OnlineLearner, OnlineMode};
use crate::rng::{self, derive_seed, Rng};
use crate::train::{argmax_rows, evaluate, train_with_validation, Dataset, Sample, Target, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct SourceLocScenario {
    pub graph: Arc<Gso>,
    /// Community of every node.
    pub communities: Vec<usize>,
    /// `sources[c]` and `detectors[c]` lie in community `c`.
    pub sources: Vec<usize>,
    pub detectors: Vec<usize>,
    pub noise_std: f64,
    pub max_diffusion_time: usize,
}

impl SourceLocScenario {
    pub fn new(
        graph: Gso,
        communities: Vec<usize>,
        sources: Vec<usize>,
        detectors: Vec<usize>,
        noise_std: f64,
        max_diffusion_time: usize,
    ) -> Result<Self> {
        let n = graph.n();
        if communities.len() != n {
            return Err(Error::dim(format!("{} community labels for {n} nodes", communities.len())));
        }
        let c = sources.len();
        if c == 0 || detectors.len() != c {
            return Err(Error::invalid("need one source and one detector per community"));
        }
        for (k, (&s, &d)) in sources.iter().zip(&detectors).enumerate() {
            if s >= n || d >= n {
                return Err(Error::invalid(format!("node id outside a {n}-node graph")));
            }
            if communities[s] != k || communities[d] != k {
                return Err(Error::invalid(format!("source or detector {k} is not in community {k}")));
            }
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::invalid(format!("noise level {noise_std} must be finite and nonnegative")));
        }
        Ok(SourceLocScenario { graph: Arc::new(graph), communities, sources, detectors, noise_std, max_diffusion_time })
    }

    /// Normalized SBM graph with one random source and one random detector
    /// per community; the source and detector of a community differ when the
    /// community has more than one node.
    pub fn sample(cfg: &SourceLocConfig, seed: u64) -> Result<Self> {
        let a = sbm_generate(cfg.nodes, cfg.communities, cfg.p_intra, cfg.p_inter, derive_seed(seed, 0))?;
        let s = normalize_adjacency(&a)?;
        let labels = community_labels(cfg.nodes, cfg.communities);
        let mut r = rng::seeded(derive_seed(seed, 1));
        let mut sources = Vec::with_capacity(cfg.communities);
        let mut detectors = Vec::with_capacity(cfg.communities);
        for c in 0..cfg.communities {
            let members: Vec<usize> = (0..cfg.nodes).filter(|&i| labels[i] == c).collect();
            let picked: Vec<usize> = members.choose_multiple(&mut r, 2).copied().collect();
            sources.push(picked[0]);
            detectors.push(*picked.get(1).unwrap_or(&picked[0]));
        }
        SourceLocScenario::new(s, labels, sources, detectors, cfg.noise_std, cfg.max_diffusion_time)
    }

    pub fn n_classes(&self) -> usize {
        self.sources.len()
    }

    /// `S^t δ_s` for every source and every `t ≤ max_diffusion_time`.
    fn diffusion_table(&self) -> Vec<Vec<Array1<f64>>> {
        let s = self.graph.entries();
        self.sources
            .iter()
            .map(|&src| {
                let mut x = Array1::zeros(self.graph.n());
                x[src] = 1.0;
                let mut rows = Vec::with_capacity(self.max_diffusion_time + 1);
                rows.push(x.clone());
                for _ in 0..self.max_diffusion_time {
                    x = s.dot(&x);
                    rows.push(x.clone());
                }
                rows
            })
            .collect()
    }
}

/// `S^t δ_source` plus i.i.d. Gaussian noise of standard deviation
/// `noise_std`, as an `N × 1` signal.
pub fn diffuse_signal(s: &Gso, source: usize, t: usize, noise_std: f64, seed: u64) -> Result<GraphSignal> {
    diffuse_with(s, source, t, noise_std, &mut rng::seeded(seed))
}

fn diffuse_with(s: &Gso, source: usize, t: usize, noise_std: f64, r: &mut Rng) -> Result<GraphSignal> {
    let n = s.n();
    if source >= n {
        return Err(Error::invalid(format!("source {source} outside a {n}-node graph")));
    }
    let mut x = Array1::zeros(n);
    x[source] = 1.0;
    for _ in 0..t {
        x = s.entries().dot(&x);
    }
    add_noise(x, noise_std, r)
}

fn add_noise(mut x: Array1<f64>, noise_std: f64, r: &mut Rng) -> Result<GraphSignal> {
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).map_err(|e| Error::invalid(e.to_string()))?;
        x.iter_mut().for_each(|v| *v += normal.sample(r));
    }
    let n = x.len();
    Ok(x.into_shape_with_order((n, 1)).expect("column of n entries"))
}

/// Samples with a uniformly random source and diffusion time in
/// `0..=max_diffusion_time`; the label is the source's community, read at
/// every detector.
pub fn gen_sourceloc_dataset(scenario: &SourceLocScenario, n_samples: usize, seed: u64) -> Result<Dataset> {
    if n_samples == 0 {
        return Err(Error::invalid("a dataset needs at least one sample"));
    }
    let table = scenario.diffusion_table();
    let mut r = rng::seeded(seed);
    let samples = (0..n_samples)
        .map(|_| {
            let c = r.random_range(0..scenario.n_classes());
            let t = r.random_range(0..=scenario.max_diffusion_time);
            let x = add_noise(table[c][t].clone(), scenario.noise_std, &mut r)?;
            let target =
                Target::Classes { nodes: scenario.detectors.clone(), labels: vec![c; scenario.detectors.len()] };
            Ok(Sample::new(scenario.graph.clone(), x, target))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(samples))
}

/// Fraction of (detector, sample) pairs whose highest score is the label.
/// `scores[s]` holds one row of class scores per detector.
pub fn sourceloc_accuracy(scores: &[Array2<f64>], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::dim(format!("{} score blocks for {} labels", scores.len(), labels.len())));
    }
    let mut hits = 0usize;
    let mut total = 0usize;
    for (block, &label) in scores.iter().zip(labels) {
        let picks = argmax_rows(block);
        hits += picks.iter().filter(|&&p| p == label).count();
        total += picks.len();
    }
    Ok(hits as f64 / total as f64)
}

/// Everything a source-localization experiment needs besides the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceLocConfig {
    pub nodes: usize,
    pub communities: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub noise_std: f64,
    pub max_diffusion_time: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    /// Signals observed during the online phase, drawn apart from the test set.
    pub n_online: usize,
    pub filter_order: usize,
    pub features: usize,
    pub layers: usize,
    pub sigma: Nonlinearity,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Edge-drop probability of the perturbed test graph.
    pub drop_probability: f64,
    pub gamma: f64,
}

impl Default for SourceLocConfig {
    fn default() -> Self {
        SourceLocConfig {
            nodes: 50,
            communities: 5,
            p_intra: 0.8,
            p_inter: 0.2,
            noise_std: 0.01,
            max_diffusion_time: 30,
            n_train: 10_000,
            n_valid: 2_500,
            n_test: 1_000,
            n_online: 1_000,
            filter_order: 5,
            features: 32,
            layers: 2,
            sigma: Nonlinearity::Relu,
            epochs: 100,
            batch_size: 50,
            learning_rate: 5e-3,
            drop_probability: 0.3,
            gamma: 5e-3,
        }
    }
}

impl SourceLocConfig {
    pub fn architecture(&self) -> Architecture {
        Architecture::uniform(1, self.filter_order, self.features, self.layers, self.sigma, self.communities)
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

/// A scenario with its train, validation and test sets.
#[derive(Debug, Clone)]
pub struct SourceLocSetup {
    pub scenario: SourceLocScenario,
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

impl SourceLocSetup {
    pub fn new(cfg: &SourceLocConfig, seed: u64) -> Result<Self> {
        let scenario = SourceLocScenario::sample(cfg, derive_seed(seed, 10))?;
        let total = cfg.n_train + cfg.n_valid + cfg.n_test;
        let all = gen_sourceloc_dataset(&scenario, total, derive_seed(seed, 11))?;
        let mut parts = all.split(&[cfg.n_train, cfg.n_valid, cfg.n_test])?.into_iter();
        let (train, valid, test) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());
        Ok(SourceLocSetup { scenario, train, valid, test })
    }

    pub fn train_model(&self, cfg: &SourceLocConfig, kind: ModelKind, seed: u64) -> Result<TrainOutcome> {
        let init = WdGnnParams::init(&cfg.architecture(), kind, &mut rng::seeded(derive_seed(seed, 12)))?;
        let mut tc = cfg.train_config(derive_seed(seed, 13));
        tc.trainable = kind.train_mask();
        train_with_validation(&self.train, &self.valid, &init, &tc)
    }

    /// The graph with each edge dropped with probability `p`; `p = 0` keeps
    /// the original graph.
    pub fn perturbed_graph(&self, p: f64, seed: u64) -> Result<Arc<Gso>> {
        if p == 0.0 {
            return Ok(self.scenario.graph.clone());
        }
        Ok(Arc::new(drop_edges(&self.scenario.graph, p, derive_seed(seed, 14))?))
    }

    /// Test signals diffused on the original graph, processed on `graph`.
    pub fn test_on(&self, graph: &Arc<Gso>) -> Dataset {
        with_graph(&self.test, graph)
    }

    /// Fresh signals for the online phase, processed on `graph`.
    pub fn online_stream(&self, n: usize, graph: &Arc<Gso>, seed: u64) -> Result<Dataset> {
        Ok(with_graph(&gen_sourceloc_dataset(&self.scenario, n, derive_seed(seed, 15))?, graph))
    }
}

/// Test accuracy after every `eval_every` online steps; the first point is
/// the offline model.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineCurve {
    pub mode: OnlineMode,
    pub points: Vec<(usize, f64)>,
}

impl OnlineCurve {
    pub fn final_accuracy(&self) -> f64 {
        self.points.last().map(|p| p.1).unwrap_or(f64::NAN)
    }
}

pub fn online_curve(
    trained: &WdGnnParams,
    stream: &Dataset,
    test: &Dataset,
    mode: OnlineMode,
    gamma: f64,
    eval_every: usize,
) -> Result<OnlineCurve> {
    let n = stream.samples.first().ok_or_else(|| Error::invalid("online stream is empty"))?.graph.n();
    let mut learner = OnlineLearner::new(trained, OnlineConfig { mode, gamma, epsilon_floor: None }, n)?;
    let mut points = vec![(0, learner.evaluate(&test.samples)?)];
    for (t, sample) in stream.samples.iter().enumerate() {
        learner.step(sample, None)?;
        if (t + 1) % eval_every.max(1) == 0 || t + 1 == stream.len() {
            points.push((t + 1, learner.evaluate(&test.samples)?));
        }
    }
    Ok(OnlineCurve { mode, points })
}

/// Accuracies of one seed of the source-localization experiment.
#[derive(Debug, Clone)]
pub struct SourceLocRun {
    pub clean_accuracy: f64,
    pub perturbed_accuracy: f64,
    pub centralized: OnlineCurve,
    pub distributed: OnlineCurve,
    pub training: TrainOutcome,
}

/// Trains on the clean graph, tests on the clean and the edge-dropped
/// graph, then adapts online on the edge-dropped graph in both modes.
pub fn run_sourceloc(cfg: &SourceLocConfig, kind: ModelKind, seed: u64, eval_every: usize) -> Result<SourceLocRun> {
    let setup = SourceLocSetup::new(cfg, seed)?;
    let training = setup.train_model(cfg, kind, seed)?;
    let clean_accuracy = evaluate(&training.params, &setup.test)?.1;
    let perturbed = setup.perturbed_graph(cfg.drop_probability, seed)?;
    let test = setup.test_on(&perturbed);
    let perturbed_accuracy = evaluate(&training.params, &test)?.1;
    let stream = setup.online_stream(cfg.n_online, &perturbed, seed)?;
    let centralized = online_curve(&training.params, &stream, &test, OnlineMode::Centralized, cfg.gamma, eval_every)?;
    let distributed = online_curve(&training.params, &stream, &test, OnlineMode::Distributed, cfg.gamma, eval_every)?;
    Ok(SourceLocRun { clean_accuracy, perturbed_accuracy, centralized, distributed, training })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SourceLocConfig {
        SourceLocConfig { nodes: 20, communities: 4, n_train: 40, n_valid: 10, n_test: 10, ..Default::default() }
    }

    #[test]
    fn diffusion_at_zero_and_one() {
        let s = normalize_adjacency(&sbm_generate(10, 2, 0.8, 0.2, 1).unwrap()).unwrap();
        let x0 = diffuse_signal(&s, 3, 0, 0.0, 0).unwrap();
        assert_eq!(x0.column(0).to_vec(), (0..10).map(|i| if i == 3 { 1.0 } else { 0.0 }).collect::<Vec<_>>());
        let x1 = diffuse_signal(&s, 3, 1, 0.0, 0).unwrap();
        assert_eq!(x1.column(0), s.entries().column(3));
        for t in 0..40 {
            let x = diffuse_signal(&s, 3, t, 0.0, 0).unwrap();
            assert!(x.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1.0 + 1e-12);
        }
        assert!(diffuse_signal(&s, 10, 0, 0.0, 0).is_err());
    }

    #[test]
    fn scenario_places_nodes_by_community() {
        let sc = SourceLocScenario::sample(&SourceLocConfig::default(), 4).unwrap();
        for c in 0..5 {
            assert_eq!(sc.communities[sc.sources[c]], c);
            assert_eq!(sc.communities[sc.detectors[c]], c);
            assert_ne!(sc.sources[c], sc.detectors[c]);
        }
    }

    #[test]
    fn labels_in_range_and_roughly_uniform() {
        let sc = SourceLocScenario::sample(&SourceLocConfig::default(), 2).unwrap();
        let d = gen_sourceloc_dataset(&sc, 5000, 9).unwrap();
        let mut hist = [0usize; 5];
        for s in &d.samples {
            let Target::Classes { labels, nodes } = &s.target else { panic!("class target") };
            assert_eq!(nodes, &sc.detectors);
            assert!(labels.iter().all(|&l| l == labels[0] && l < 5));
            hist[labels[0]] += 1;
        }
        let (mean, sd) = (1000.0, (5000.0_f64 * 0.2 * 0.8).sqrt());
        assert!(hist.iter().all(|&h| (h as f64 - mean).abs() < 3.0 * sd), "{hist:?}");
    }

    #[test]
    fn dataset_is_deterministic() {
        let sc = SourceLocScenario::sample(&small(), 2).unwrap();
        let a = gen_sourceloc_dataset(&sc, 20, 5).unwrap();
        let b = gen_sourceloc_dataset(&sc, 20, 5).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.x, y.x);
            assert_eq!(x.target, y.target);
        }
        assert!(gen_sourceloc_dataset(&sc, 0, 5).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let perfect: Vec<Array2<f64>> =
            (0..5).map(|c| Array2::from_shape_fn((5, 5), |(_, j)| if j == c { 1.0 } else { 0.0 })).collect();
        let labels: Vec<usize> = (0..5).collect();
        assert_eq!(sourceloc_accuracy(&perfect, &labels).unwrap(), 1.0);
        let scaled: Vec<Array2<f64>> = perfect.iter().map(|m| m * 7.5).collect();
        assert_eq!(sourceloc_accuracy(&scaled, &labels).unwrap(), 1.0);

        let mut r = rng::seeded(3);
        let random: Vec<Array2<f64>> =
            (0..4000).map(|_| Array2::from_shape_simple_fn((5, 5), || r.random::<f64>())).collect();
        let labels: Vec<usize> = (0..4000).map(|_| r.random_range(0..5)).collect();
        let acc = sourceloc_accuracy(&random, &labels).unwrap();
        assert!((acc - 0.2).abs() < 0.02, "{acc}");
    }

    #[test]
    fn source_reader_is_perfect_without_diffusion() {
        // Detectors at the sources, t = 0 and no noise: scoring class k by
        // the input at source k is exact.
        let cfg = SourceLocConfig { noise_std: 0.0, max_diffusion_time: 0, ..small() };
        let base = SourceLocScenario::sample(&cfg, 1).unwrap();
        let sc = SourceLocScenario::new(
            (*base.graph).clone(),
            base.communities.clone(),
            base.sources.clone(),
            base.sources.clone(),
            0.0,
            0,
        )
        .unwrap();
        let data = gen_sourceloc_dataset(&sc, 40, 2).unwrap();
        let c = sc.n_classes();
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for s in &data.samples {
            scores.push(Array2::from_shape_fn((c, c), |(_, k)| s.x[[sc.sources[k], 0]]));
            let Target::Classes { labels: l, .. } = &s.target else { panic!("class target") };
            labels.push(l[0]);
        }
        assert_eq!(sourceloc_accuracy(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn short_run_produces_curves() {
        let cfg = SourceLocConfig { epochs: 2, batch_size: 10, n_online: 6, ..small() };
        let run = run_sourceloc(&cfg, ModelKind::WdGnn, 3, 3).unwrap();
        assert_eq!(run.centralized.points.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 3, 6]);
        assert_eq!(run.distributed.points.len(), 3);
        assert_eq!(run.centralized.points[0].1, run.perturbed_accuracy);
        assert!((0.0..=1.0).contains(&run.clean_accuracy));
    }
}
