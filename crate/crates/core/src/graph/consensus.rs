use ndarray::Array2;

use super::Gso;
use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// A doubly stochastic mixing matrix supported on a graph plus self-loops,
/// with every nonzero entry at least `epsilon_floor`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusWeights {
    entries: Array2<f64>,
    epsilon_floor: f64,
}

impl ConsensusWeights {
    /// Validates nonnegativity, row and column sums and the floor.
    pub fn new(entries: Array2<f64>, epsilon_floor: f64) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::dim(format!("weights must be square, got {r}×{c}")));
        }
        if !(epsilon_floor > 0.0 && epsilon_floor <= 1.0) {
            return Err(Error::invalid(format!("epsilon floor {epsilon_floor} outside (0, 1]")));
        }
        for ((i, j), &w) in entries.indexed_iter() {
            if w < 0.0 || !w.is_finite() {
                return Err(Error::invalid(format!("weight {w} at ({i}, {j})")));
            }
            // The floor is checked up to rounding in the row remainder.
            if w != 0.0 && w < epsilon_floor - SUM_TOL {
                return Err(Error::WeightBelowFloor { i, j, value: w, floor: epsilon_floor });
            }
        }
        for (i, row) in entries.outer_iter().enumerate() {
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(Error::invalid(format!("row {i} sums to {sum}")));
            }
        }
        for (j, col) in entries.columns().into_iter().enumerate() {
            let sum: f64 = col.sum();
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(Error::invalid(format!("column {j} sums to {sum}")));
            }
        }
        Ok(ConsensusWeights { entries, epsilon_floor })
    }

    /// All entries `1/n`.
    pub fn uniform(n: usize) -> Self {
        ConsensusWeights { entries: Array2::from_elem((n, n), 1.0 / n as f64), epsilon_floor: 1.0 / n as f64 }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn epsilon_floor(&self) -> f64 {
        self.epsilon_floor
    }

    /// Smallest nonzero entry.
    pub fn min_positive(&self) -> f64 {
        self.entries.iter().filter(|&&w| w > 0.0).fold(f64::INFINITY, |m, &w| m.min(w))
    }

    /// Errors unless every off-diagonal nonzero is an edge of `s`.
    pub fn check_support(&self, s: &Gso) -> Result<()> {
        if s.n() != self.n() {
            return Err(Error::dim(format!("weights of size {} for graph of size {}", self.n(), s.n())));
        }
        for ((i, j), &w) in self.entries.indexed_iter() {
            if i != j && w != 0.0 && !s.has_edge(i, j) {
                return Err(Error::WeightSupport(i, j));
            }
        }
        Ok(())
    }
}

/// Metropolis–Hastings weights: `1 / (1 + max(d_i, d_j))` on every edge and
/// the remainder of the row on the diagonal.
pub fn metropolis_weights(s: &Gso, epsilon_floor: f64) -> Result<ConsensusWeights> {
    if !s.is_symmetric() {
        return Err(Error::NotSymmetric(f64::NAN));
    }
    let n = s.n();
    let degrees: Vec<usize> = (0..n).map(|i| s.degree(i)).collect();
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        let mut off = 0.0;
        for j in s.neighbors(i) {
            let wij = 1.0 / (1.0 + degrees[i].max(degrees[j]) as f64);
            w[[i, j]] = wij;
            off += wij;
        }
        w[[i, i]] = 1.0 - off;
    }
    ConsensusWeights::new(w, epsilon_floor)
}

/// Whether the union of edge sets over every window of `window` consecutive
/// graphs is connected. Sequences shorter than the window are checked as a
/// single union.
pub fn check_union_connectivity(graphs: &[Gso], window: usize) -> Result<bool> {
    let first = graphs.first().ok_or_else(|| Error::invalid("empty graph sequence"))?;
    if window == 0 {
        return Err(Error::invalid("window must be at least 1"));
    }
    let n = first.n();
    if graphs.iter().any(|g| g.n() != n) {
        return Err(Error::dim("graphs of different sizes"));
    }
    let starts = if graphs.len() <= window { 1 } else { graphs.len() - window + 1 };
    for t in 0..starts {
        let end = (t + window).min(graphs.len());
        if !union_connected(&graphs[t..end], n) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn union_connected(graphs: &[Gso], n: usize) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for g in graphs {
        for i in 0..n {
            for j in (i + 1)..n {
                if g.has_edge(i, j) || g.has_edge(j, i) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a] = b;
                    }
                }
            }
        }
    }
    let root = find(&mut parent, 0);
    (0..n).all(|i| find(&mut parent, i) == root)
}
