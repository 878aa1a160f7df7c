//! Movie recommendation on a movie similarity graph: a user's ratings are a
//! signal over movies and the rating of a target movie is predicted at its
//! node.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, Gso};
use crate::nn::{Architecture, ModelKind, Nonlinearity, WdGnnParams};
use crate::online::{OnlineConfig, OnlineLearner, OnlineMode, OnlineTrace};
use crate::rng::{self, derive_seed};
use crate::train::{evaluate, train_with_validation, Dataset, Sample, Target, TrainConfig, TrainOutcome};

pub const STAR_WARS: u32 = 50;
pub const CONTACT: u32 = 258;
pub const RETURN_OF_THE_JEDI: u32 = 181;

/// Users × movies ratings; unobserved entries hold 0 and have mask 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsMatrix {
    pub users: Vec<u32>,
    pub movies: Vec<u32>,
    pub values: Array2<f64>,
    pub mask: Array2<f64>,
    /// Empty when no titles were loaded.
    pub titles: Vec<String>,
}

impl RatingsMatrix {
    pub fn new(users: Vec<u32>, movies: Vec<u32>, values: Array2<f64>, mask: Array2<f64>) -> Result<Self> {
        if values.dim() != (users.len(), movies.len()) || mask.dim() != values.dim() {
            return Err(Error::dim("ratings shape does not match user and movie lists"));
        }
        for (&v, &m) in values.iter().zip(mask.iter()) {
            let ok = if m == 1.0 { (1.0..=5.0).contains(&v) } else { m == 0.0 && v == 0.0 };
            if !ok {
                return Err(Error::invalid(format!("rating {v} with mask {m} is inconsistent")));
            }
        }
        Ok(RatingsMatrix { users, movies, values, mask, titles: Vec::new() })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_movies(&self) -> usize {
        self.movies.len()
    }

    pub fn movie_index(&self, id: u32) -> Option<usize> {
        self.movies.iter().position(|&m| m == id)
    }

    pub fn observed(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1.0).count()
    }

    /// Users that rated movie column `m`.
    pub fn raters(&self, m: usize) -> Vec<usize> {
        (0..self.n_users()).filter(|&u| self.mask[[u, m]] == 1.0).collect()
    }

    /// Keeps the movie columns in `keep`, in that order.
    pub fn restrict_movies(&self, keep: &[usize]) -> RatingsMatrix {
        RatingsMatrix {
            users: self.users.clone(),
            movies: keep.iter().map(|&m| self.movies[m]).collect(),
            values: self.values.select(ndarray::Axis(1), keep),
            mask: self.mask.select(ndarray::Axis(1), keep),
            titles: if self.titles.is_empty() {
                Vec::new()
            } else {
                keep.iter().map(|&m| self.titles[m].clone()).collect()
            },
        }
    }

    /// Attaches titles from a `|`-separated item file (`id|title|…`); movies
    /// missing from it get an empty title.
    pub fn attach_titles<R: Read>(&mut self, mut items: R) -> Result<()> {
        let mut bytes = Vec::new();
        items.read_to_end(&mut bytes)?;
        let text = String::from_utf8_lossy(&bytes);
        let mut by_id = HashMap::new();
        for (line_no, line) in text.lines().enumerate() {
            let mut fields = line.split('|');
            let (Some(id), Some(title)) = (fields.next(), fields.next()) else { continue };
            let id: u32 = id
                .trim()
                .parse()
                .map_err(|_| Error::Parse { line: line_no + 1, msg: format!("bad movie id {id:?}") })?;
            by_id.insert(id, title.to_string());
        }
        self.titles = self.movies.iter().map(|m| by_id.get(m).cloned().unwrap_or_default()).collect();
        Ok(())
    }
}

/// Parses `user \t item \t rating \t timestamp` rows, keeping every user and
/// the `top_movies` most-rated movies (ties broken by smaller id). Users and
/// movies are ordered by id.
pub fn parse_movielens<R: BufRead>(input: R, top_movies: usize) -> Result<RatingsMatrix> {
    let mut rows = Vec::new();
    for (line_no, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse { line: line_no + 1, msg };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 tab-separated fields, got {}", fields.len())));
        }
        let int = |s: &str| s.trim().parse::<u32>().map_err(|_| bad(format!("non-integer field {s:?}")));
        let (user, item, rating) = (int(fields[0])?, int(fields[1])?, int(fields[2])?);
        int(fields[3])?;
        if !(1..=5).contains(&rating) {
            return Err(bad(format!("rating {rating} outside 1–5")));
        }
        rows.push((user, item, rating));
    }
    if rows.is_empty() {
        return Err(Error::invalid("no ratings in input"));
    }
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &(_, item, _) in &rows {
        *counts.entry(item).or_default() += 1;
    }
    let mut ranked: Vec<(u32, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut movies: Vec<u32> = ranked.iter().take(top_movies).map(|m| m.0).collect();
    movies.sort_unstable();
    let mut users: Vec<u32> = rows.iter().map(|r| r.0).collect();
    users.sort_unstable();
    users.dedup();
    let movie_col: HashMap<u32, usize> = movies.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let user_row: HashMap<u32, usize> = users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let mut values = Array2::zeros((users.len(), movies.len()));
    let mut mask = Array2::zeros(values.dim());
    for (user, item, rating) in rows {
        if let Some(&c) = movie_col.get(&item) {
            let r = user_row[&user];
            values[[r, c]] = rating as f64;
            mask[[r, c]] = 1.0;
        }
    }
    RatingsMatrix::new(users, movies, values, mask)
}

pub fn parse_movielens_file(path: &Path, top_movies: usize) -> Result<RatingsMatrix> {
    let file = std::fs::File::open(path)?;
    let mut ratings = parse_movielens(BufReader::new(file), top_movies)?;
    if let Some(items) = path.parent().map(|d| d.join("u.item")).filter(|p| p.exists()) {
        ratings.attach_titles(std::fs::File::open(items)?)?;
    }
    Ok(ratings)
}

/// Pearson correlation of every pair of movie columns over the users that
/// rated both; `None` with fewer than two co-raters. A constant column over
/// the co-raters correlates as 0.
pub fn pearson_similarity(ratings: &RatingsMatrix) -> Array2<Option<f64>> {
    let (r, m) = (&ratings.values, &ratings.mask);
    let n = m.t().dot(m);
    let sums = r.t().dot(m);
    let squares = r.mapv(|v| v * v).t().dot(m);
    let cross = r.t().dot(r);
    let k = ratings.n_movies();
    Array2::from_shape_fn((k, k), |(a, b)| {
        let c = n[[a, b]];
        if c < 2.0 {
            return None;
        }
        // sums[a, b] sums movie a's ratings over users who rated b.
        let (sa, sb) = (sums[[a, b]], sums[[b, a]]);
        let cov = cross[[a, b]] - sa * sb / c;
        let va = squares[[a, b]] - sa * sa / c;
        let vb = squares[[b, a]] - sb * sb / c;
        let tol = 1e-9 * c;
        if va <= tol || vb <= tol {
            return Some(0.0);
        }
        Some((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
    })
}

/// Similarity graph over the movies that kept at least one correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    pub gso: Gso,
    /// Movie columns of the input, in node order.
    pub movies: Vec<usize>,
}

/// Keeps each movie's `top_k` largest correlations, symmetrizes by union
/// and scales to unit spectral radius. Movies without any defined
/// correlation are dropped with a warning.
pub fn build_similarity_graph(ratings: &RatingsMatrix, top_k: usize) -> Result<SimilarityGraph> {
    if ratings.n_movies() < 2 {
        return Err(Error::invalid("need at least two movies"));
    }
    let sim = pearson_similarity(ratings);
    let k = ratings.n_movies();
    let keep: Vec<usize> = (0..k).filter(|&a| (0..k).any(|b| b != a && sim[[a, b]].is_some())).collect();
    for a in (0..k).filter(|a| !keep.contains(a)) {
        log::warn!("movie {} has fewer than two co-ratings with every other movie; dropped", ratings.movies[a]);
    }
    let n = keep.len();
    if n < 2 {
        return Err(Error::invalid("fewer than two movies with defined similarities"));
    }
    let mut w = Array2::zeros((n, n));
    for (i, &a) in keep.iter().enumerate() {
        let mut cand: Vec<(usize, f64)> = keep
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .filter_map(|(j, &b)| sim[[a, b]].map(|s| (j, s)))
            .collect();
        cand.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        for &(j, s) in cand.iter().take(top_k) {
            w[[i, j]] = s;
            w[[j, i]] = s;
        }
    }
    let gso = normalize_adjacency(&Gso::new(w, true)?)?;
    Ok(SimilarityGraph { gso, movies: keep })
}

/// One sample per user: the ratings with the target movie zeroed, scored
/// at the target node only.
pub fn rating_samples(ratings: &RatingsMatrix, graph: &Arc<Gso>, node: usize, users: &[usize]) -> Result<Dataset> {
    let n = ratings.n_movies();
    if graph.n() != n || node >= n {
        return Err(Error::dim("graph, ratings and target node disagree"));
    }
    let samples = users
        .iter()
        .map(|&u| {
            if ratings.mask[[u, node]] != 1.0 {
                return Err(Error::invalid(format!("user {} did not rate the target", ratings.users[u])));
            }
            let mut x = ratings.values.row(u).to_owned().into_shape_with_order((n, 1)).expect("column");
            x[[node, 0]] = 0.0;
            let mut values = Array2::zeros((n, 1));
            values[[node, 0]] = ratings.values[[u, node]];
            let mut mask = Array2::zeros((n, 1));
            mask[[node, 0]] = 1.0;
            Ok(Sample::new(graph.clone(), x, Target::Values { values, mask: Some(mask) }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(samples))
}

/// Whether test users are only scored or also used for online updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecommendationMode {
    Offline,
    Online,
}

/// RMSE over `test`. Online mode predicts each user before taking one
/// centralized step on the revealed rating, and the RMSE is over those
/// predictions.
pub fn run_recommendation(
    model: &WdGnnParams,
    test: &Dataset,
    mode: RecommendationMode,
    gamma: f64,
) -> Result<(f64, OnlineTrace)> {
    let first = test.samples.first().ok_or_else(|| Error::invalid("no test ratings for the target movie"))?;
    match mode {
        RecommendationMode::Offline => Ok((evaluate(model, test)?.1, OnlineTrace::default())),
        RecommendationMode::Online => {
            let cfg = OnlineConfig { mode: OnlineMode::Centralized, gamma, epsilon_floor: None };
            let mut learner = OnlineLearner::new(model, cfg, first.graph.n())?;
            let mut sq = 0.0;
            for s in &test.samples {
                let r = learner.step(s, None)?;
                sq += r.metric * r.metric;
            }
            let trace = learner.finish().trace;
            Ok(((sq / test.len() as f64).sqrt(), trace))
        }
    }
}

/// Everything a recommendation experiment needs besides the ratings and
/// the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommendationConfig {
    pub top_movies: usize,
    pub top_k: usize,
    pub target_movie: u32,
    pub transfer_movie: Option<u32>,
    pub test_fraction: f64,
    /// Validation share of the training users.
    pub validation_fraction: f64,
    pub filter_order: usize,
    pub features: usize,
    pub layers: usize,
    pub sigma: Nonlinearity,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    /// Cap on the users seen online for the transfer movie.
    pub online_users: usize,
}

impl Default for RecommendationConfig {
    fn default() -> Self {
        RecommendationConfig {
            top_movies: 400,
            top_k: 10,
            target_movie: STAR_WARS,
            transfer_movie: Some(CONTACT),
            test_fraction: 0.1,
            validation_fraction: 0.1,
            filter_order: 5,
            features: 64,
            layers: 1,
            sigma: Nonlinearity::Relu,
            epochs: 30,
            batch_size: 5,
            learning_rate: 5e-3,
            gamma: 5e-3,
            online_users: 400,
        }
    }
}

impl RecommendationConfig {
    pub fn architecture(&self) -> Architecture {
        Architecture::uniform(1, self.filter_order, self.features, self.layers, self.sigma, 1)
    }
}

#[derive(Debug, Clone)]
pub struct RecommendationRun {
    pub target_rmse: f64,
    /// Offline and online RMSE on the transfer movie, when configured.
    pub transfer: Option<(f64, f64)>,
    pub transfer_trace: OnlineTrace,
    pub training: TrainOutcome,
}

fn kept_index(ratings: &RatingsMatrix, id: u32) -> Result<usize> {
    ratings.movie_index(id).ok_or_else(|| Error::invalid(format!("movie {id} is not among the kept movies")))
}

/// Splits the target movie's raters into train and test users, trains a
/// WD-GNN, scores it on the test users, then scores it offline and online
/// on raters of the transfer movie.
pub fn run_recommendation_experiment(
    ratings: &RatingsMatrix,
    cfg: &RecommendationConfig,
    seed: u64,
) -> Result<RecommendationRun> {
    let graph = build_similarity_graph(ratings, cfg.top_k)?;
    let ratings = ratings.restrict_movies(&graph.movies);
    let gso = Arc::new(graph.gso.clone());
    let target = kept_index(&ratings, cfg.target_movie)?;
    let mut users = ratings.raters(target);
    users.shuffle(&mut rng::seeded(derive_seed(seed, 0)));
    let n_test = ((users.len() as f64) * cfg.test_fraction).round().max(1.0) as usize;
    if n_test >= users.len() {
        return Err(Error::invalid("no training users left for the target movie"));
    }
    let (test_users, train_users) = users.split_at(n_test);
    let n_valid = ((train_users.len() as f64) * cfg.validation_fraction).round().max(1.0) as usize;
    let (valid_users, fit_users) = train_users.split_at(n_valid.min(train_users.len() - 1));
    let train = rating_samples(&ratings, &gso, target, fit_users)?;
    let valid = rating_samples(&ratings, &gso, target, valid_users)?;
    let test = rating_samples(&ratings, &gso, target, test_users)?;
    let init = WdGnnParams::init(&cfg.architecture(), ModelKind::WdGnn, &mut rng::seeded(derive_seed(seed, 1)))?;
    let tc = TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size.min(train.len()),
        learning_rate: cfg.learning_rate,
        seed: derive_seed(seed, 2),
        ..TrainConfig::default()
    };
    let training = train_with_validation(&train, &valid, &init, &tc)?;
    let (target_rmse, _) = run_recommendation(&training.params, &test, RecommendationMode::Offline, 0.0)?;
    let (transfer, transfer_trace) = match cfg.transfer_movie {
        None => (None, OnlineTrace::default()),
        Some(id) => {
            let node = kept_index(&ratings, id)?;
            let mut raters = ratings.raters(node);
            raters.shuffle(&mut rng::seeded(derive_seed(seed, 3)));
            raters.truncate(cfg.online_users);
            let data = rating_samples(&ratings, &gso, node, &raters)?;
            let (offline, _) = run_recommendation(&training.params, &data, RecommendationMode::Offline, 0.0)?;
            let (online, trace) = run_recommendation(&training.params, &data, RecommendationMode::Online, cfg.gamma)?;
            (Some((offline, online)), trace)
        }
    };
    Ok(RecommendationRun { target_rmse, transfer, transfer_trace, training })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{FilterTaps, GnnLayer, GnnParams, Readout};
    use ndarray::{array, Array1};
    use rand::Rng as _;

    /// Ratings from a low-rank model, rounded and clipped to 1–5, with
    /// roughly `density` of entries observed.
    pub(crate) fn synthetic_tsv(users: usize, movies: usize, density: f64, seed: u64) -> String {
        let mut r = rng::seeded(seed);
        let uf: Vec<[f64; 2]> = (0..users).map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
        let mf: Vec<[f64; 2]> = (0..movies).map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
        let mut out = String::new();
        for (u, a) in uf.iter().enumerate() {
            for (m, b) in mf.iter().enumerate() {
                if r.random::<f64>() < density {
                    let v =
                        (3.0 + 1.5 * (a[0] * b[0] + a[1] * b[1]) + r.random_range(-0.5..0.5)).round().clamp(1.0, 5.0);
                    out.push_str(&format!("{}\t{}\t{}\t0\n", u + 1, m + 1, v));
                }
            }
        }
        out
    }

    #[test]
    fn parse_small_fixture_exactly() {
        let text = "1\t10\t5\t881250949\n2\t10\t3\t891717742\n1\t20\t1\t878887116\n";
        let r = parse_movielens(text.as_bytes(), 400).unwrap();
        assert_eq!(r.users, vec![1, 2]);
        assert_eq!(r.movies, vec![10, 20]);
        assert_eq!(r.values, array![[5.0, 1.0], [3.0, 0.0]]);
        assert_eq!(r.mask, array![[1.0, 1.0], [1.0, 0.0]]);
        assert_eq!(r.observed(), 3);
    }

    #[test]
    fn parse_keeps_most_rated_movies() {
        let text = "1\t7\t4\t0\n2\t7\t4\t0\n1\t3\t2\t0\n2\t5\t2\t0\n3\t5\t2\t0\n";
        let r = parse_movielens(text.as_bytes(), 2).unwrap();
        assert_eq!(r.movies, vec![5, 7]);
        assert_eq!(r.users, vec![1, 2, 3]);
        assert_eq!(r.observed(), 4);
    }

    #[test]
    fn parse_errors() {
        assert!(parse_movielens("".as_bytes(), 10).is_err());
        assert!(matches!(parse_movielens("1\tx\t3\t0\n".as_bytes(), 10), Err(Error::Parse { line: 1, .. })));
        assert!(parse_movielens("1\t2\t6\t0\n".as_bytes(), 10).is_err());
        assert!(parse_movielens("1\t2\t3\n".as_bytes(), 10).is_err());
    }

    #[test]
    fn titles_attach_by_id() {
        let mut r = parse_movielens("1\t50\t5\t0\n1\t258\t4\t0\n".as_bytes(), 10).unwrap();
        r.attach_titles("50|Star Wars (1977)|01-Jan-1977\n999|Other|x\n".as_bytes()).unwrap();
        assert_eq!(r.titles, vec!["Star Wars (1977)".to_string(), String::new()]);
    }

    fn columns(cols: &[Vec<f64>]) -> RatingsMatrix {
        let users = cols[0].len();
        let values = Array2::from_shape_fn((users, cols.len()), |(u, m)| cols[m][u]);
        let mask = values.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        RatingsMatrix::new((1..=users as u32).collect(), (1..=cols.len() as u32).collect(), values, mask).unwrap()
    }

    #[test]
    fn pearson_examples() {
        let r = columns(&[
            vec![1.0, 2.0, 3.0, 5.0],
            vec![1.0, 2.0, 3.0, 5.0],
            vec![5.0, 4.0, 3.0, 1.0],
            vec![0.0, 0.0, 0.0, 4.0],
        ]);
        let s = pearson_similarity(&r);
        assert!((s[[0, 1]].unwrap() - 1.0).abs() < 1e-12);
        assert!((s[[0, 2]].unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(s[[0, 3]], None);
        for v in s.iter().flatten() {
            assert!((-1.0..=1.0).contains(v));
        }
    }

    #[test]
    fn similarity_graph_sparsity_and_scale() {
        let text = synthetic_tsv(60, 30, 0.6, 1);
        let r = parse_movielens(text.as_bytes(), 30).unwrap();
        let g = build_similarity_graph(&r, 4).unwrap();
        assert_eq!(g.movies.len(), 30);
        assert!(g.gso.is_symmetric());
        let eig = crate::graph::symmetric_eigendecomposition(&g.gso).unwrap();
        let rho = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!((rho - 1.0).abs() < 1e-8);
        // Union symmetrization: every node keeps its own 4 picks.
        assert!((0..30).all(|i| g.gso.degree(i) >= 4));
        assert!(g.gso.undirected_edge_count() <= 30 * 4);
    }

    #[test]
    fn isolated_movie_is_dropped() {
        let r = columns(&[vec![1.0, 2.0, 3.0, 0.0], vec![2.0, 2.0, 5.0, 0.0], vec![0.0, 0.0, 0.0, 4.0]]);
        let g = build_similarity_graph(&r, 10).unwrap();
        assert_eq!(g.movies, vec![0, 1]);
    }

    fn constant_model(n_features: usize, value: f64) -> WdGnnParams {
        let deep =
            GnnParams::new(vec![GnnLayer { taps: FilterTaps::zeros(1, 1, n_features), sigma: Nonlinearity::Relu }])
                .unwrap();
        let readout = Readout { weight: Array2::zeros((n_features, 1)), bias: Array1::from_elem(1, value) };
        WdGnnParams::new(FilterTaps::zeros(1, 1, n_features), deep, 1.0, 1.0, 0.0, readout).unwrap()
    }

    #[test]
    fn mean_prediction_rmse_is_the_rating_spread() {
        let r = parse_movielens(synthetic_tsv(80, 12, 0.7, 3).as_bytes(), 12).unwrap();
        let g = build_similarity_graph(&r, 3).unwrap();
        let gso = Arc::new(g.gso.clone());
        let r = r.restrict_movies(&g.movies);
        let users = r.raters(0);
        let data = rating_samples(&r, &gso, 0, &users).unwrap();
        let ratings: Vec<f64> = users.iter().map(|&u| r.values[[u, 0]]).collect();
        let mean = ratings.iter().sum::<f64>() / ratings.len() as f64;
        let sd = (ratings.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / ratings.len() as f64).sqrt();
        let (rmse, _) = run_recommendation(&constant_model(3, mean), &data, RecommendationMode::Offline, 0.0).unwrap();
        assert!((rmse - sd).abs() < 1e-12);
        let target_zeroed = data.samples.iter().all(|s| s.x[[0, 0]] == 0.0);
        assert!(target_zeroed);
    }

    #[test]
    fn online_with_zero_step_matches_offline() {
        let r = parse_movielens(synthetic_tsv(50, 10, 0.7, 4).as_bytes(), 10).unwrap();
        let g = build_similarity_graph(&r, 3).unwrap();
        let r = r.restrict_movies(&g.movies);
        let data = rating_samples(&r, &Arc::new(g.gso), 1, &r.raters(1)).unwrap();
        let model = constant_model(2, 3.0);
        let (off, _) = run_recommendation(&model, &data, RecommendationMode::Offline, 0.0).unwrap();
        let (on, trace) = run_recommendation(&model, &data, RecommendationMode::Online, 0.0).unwrap();
        assert!((off - on).abs() < 1e-12);
        assert_eq!(trace.len(), data.len());
        assert!(run_recommendation(&model, &Dataset::default(), RecommendationMode::Offline, 0.0).is_err());
    }

    #[test]
    fn experiment_runs_on_synthetic_ratings() {
        let r = parse_movielens(synthetic_tsv(120, 20, 0.6, 5).as_bytes(), 20).unwrap();
        let cfg = RecommendationConfig {
            top_movies: 20,
            top_k: 4,
            target_movie: 3,
            transfer_movie: Some(7),
            features: 4,
            epochs: 3,
            online_users: 30,
            ..Default::default()
        };
        let run = run_recommendation_experiment(&r, &cfg, 1).unwrap();
        assert!(run.target_rmse.is_finite());
        let (off, on) = run.transfer.unwrap();
        assert!(off.is_finite() && on.is_finite());
        assert_eq!(run.transfer_trace.len(), 30);
    }
}
