//! Graph shift operators and the operations built directly on them.

mod consensus;
pub(crate) mod eigen;
mod io;
mod perturb;

pub use consensus::{check_union_connectivity, metropolis_weights, ConsensusWeights};
pub use eigen::{spectral_norm, symmetric_eigendecomposition, Eigen};
pub use io::{read_edge_list, write_edge_list};
pub use perturb::{relative_error_from_perturbation, RelativeError};

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

/// An `N × F` matrix; row `i` holds node `i`'s features.
pub type GraphSignal = Array2<f64>;

/// Tolerance below which an entry is treated as "no edge".
const EDGE_EPS: f64 = 0.0;

/// A graph shift operator: a square matrix whose off-diagonal support is the
/// edge set of the graph (`entries[i][j] != 0` iff `j` is an in-neighbor of
/// `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct Gso {
    entries: Array2<f64>,
    symmetric: bool,
}

impl Gso {
    /// Wraps a square matrix. When `symmetric` is set the matrix must be
    /// exactly symmetric.
    pub fn new(entries: Array2<f64>, symmetric: bool) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::dim(format!("shift operator must be square, got {r}×{c}")));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("shift operator entry".into()));
        }
        if symmetric {
            let asym = max_asymmetry(entries.view());
            if asym > 0.0 {
                return Err(Error::NotSymmetric(asym));
            }
        }
        Ok(Gso { entries, symmetric })
    }

    /// Wraps a matrix, setting the symmetric flag iff it is exactly symmetric.
    pub fn from_matrix(entries: Array2<f64>) -> Result<Self> {
        let symmetric = entries.nrows() == entries.ncols() && max_asymmetry(entries.view()) == 0.0;
        Gso::new(entries, symmetric)
    }

    /// Builds an undirected graph from `(i, j, w)` triples; each edge is
    /// written to both `(i, j)` and `(j, i)`.
    pub fn from_undirected_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut m = Array2::zeros((n, n));
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::invalid(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            m[[i, j]] = w;
            m[[j, i]] = w;
        }
        Gso::new(m, true)
    }

    pub fn identity(n: usize) -> Self {
        Gso { entries: Array2::eye(n), symmetric: true }
    }

    pub fn zeros(n: usize) -> Self {
        Gso { entries: Array2::zeros((n, n)), symmetric: true }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.entries[[i, j]].abs() > EDGE_EPS
    }

    /// In-neighbors of `i` (excluding `i` itself).
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(move |&j| self.has_edge(i, j))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    /// Number of off-diagonal nonzeros; for symmetric graphs this is twice
    /// the number of undirected edges.
    pub fn nnz_off_diagonal(&self) -> usize {
        let n = self.n();
        (0..n).map(|i| self.degree(i)).sum::<usize>().min(n * n)
    }

    /// Undirected edge count (pairs `i < j` with a nonzero in either direction).
    pub fn undirected_edge_count(&self) -> usize {
        let n = self.n();
        let mut count = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if self.has_edge(i, j) || self.has_edge(j, i) {
                    count += 1;
                }
            }
        }
        count
    }

    /// Connectivity of the undirected support.
    pub fn is_connected(&self) -> bool {
        let n = self.n();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for (j, s) in seen.iter_mut().enumerate() {
                if !*s && (self.has_edge(i, j) || self.has_edge(j, i)) {
                    *s = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Gershgorin interval `[min_i (s_ii - r_i), max_i (s_ii + r_i)]`, which
    /// contains every eigenvalue.
    pub fn gershgorin_interval(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, row) in self.entries.outer_iter().enumerate() {
            let radius: f64 = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v.abs()).sum();
            lo = lo.min(row[i] - radius);
            hi = hi.max(row[i] + radius);
        }
        if self.n() == 0 {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }

    /// `S^T` as a new operator.
    pub fn transpose(&self) -> Gso {
        Gso { entries: self.entries.t().to_owned(), symmetric: self.symmetric }
    }
}

fn max_asymmetry(m: ArrayView2<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    worst
}

/// Community label of every node in an SBM graph with contiguous blocks.
pub fn community_labels(n: usize, communities: usize) -> Vec<usize> {
    let size = n / communities.max(1);
    (0..n).map(|i| i / size.max(1)).collect()
}

/// Samples a stochastic block model with `communities` equal contiguous
/// blocks, redrawing until the graph is connected (at most 100 draws).
pub fn sbm_generate(n: usize, communities: usize, p_intra: f64, p_inter: f64, seed: u64) -> Result<Gso> {
    if communities == 0 || !n.is_multiple_of(communities) {
        return Err(Error::invalid(format!("{communities} communities do not divide {n} nodes")));
    }
    for p in [p_intra, p_inter] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
    }
    const ATTEMPTS: usize = 100;
    let labels = community_labels(n, communities);
    let mut rng = rng::seeded(seed);
    for _ in 0..ATTEMPTS {
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let p = if labels[i] == labels[j] { p_intra } else { p_inter };
                if rng.random::<f64>() < p {
                    m[[i, j]] = 1.0;
                    m[[j, i]] = 1.0;
                }
            }
        }
        let g = Gso { entries: m, symmetric: true };
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::Disconnected(ATTEMPTS))
}

/// Divides a symmetric operator by its largest eigenvalue magnitude.
pub fn normalize_adjacency(a: &Gso) -> Result<Gso> {
    if !a.is_symmetric() {
        return Err(Error::NotSymmetric(max_asymmetry(a.entries.view())));
    }
    let eig = symmetric_eigendecomposition(a)?;
    let lambda_max = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if lambda_max == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let mut entries = &a.entries / lambda_max;
    // Division can break exact symmetry only through NaN; re-mirror to be exact.
    let n = a.n();
    for i in 0..n {
        for j in (i + 1)..n {
            entries[[j, i]] = entries[[i, j]];
        }
    }
    Gso::new(entries, true)
}

/// One graph shift, `S · X`.
pub fn graph_shift(s: &Gso, x: &GraphSignal) -> Result<GraphSignal> {
    if s.n() != x.nrows() {
        return Err(Error::dim(format!("shift of size {} applied to signal with {} rows", s.n(), x.nrows())));
    }
    Ok(s.entries.dot(x))
}

/// Removes each undirected edge independently with probability `p`.
pub fn drop_edges(s: &Gso, p: f64, seed: u64) -> Result<Gso> {
    if !s.is_symmetric() {
        return Err(Error::NotSymmetric(max_asymmetry(s.entries.view())));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("drop probability {p} outside [0, 1]")));
    }
    let mut rng = rng::seeded(seed);
    let mut m = s.entries.clone();
    let n = s.n();
    for i in 0..n {
        for j in (i + 1)..n {
            if m[[i, j]] != 0.0 && rng.random::<f64>() < p {
                m[[i, j]] = 0.0;
                m[[j, i]] = 0.0;
            }
        }
    }
    Gso::new(m, true)
}

/// A node relabelling. As a 0/1 matrix `P` has `P[mapping[i], i] = 1`, so
/// `(Pᵀ X)[i] = X[mapping[i]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &m in &mapping {
            if m >= n || seen[m] {
                return Err(Error::invalid(format!("{mapping:?} is not a permutation")));
            }
            seen[m] = true;
        }
        Ok(Permutation { mapping })
    }

    pub fn identity(n: usize) -> Self {
        Permutation { mapping: (0..n).collect() }
    }

    pub fn random(n: usize, rng: &mut rng::Rng) -> Self {
        use rand::seq::SliceRandom;
        let mut mapping: Vec<usize> = (0..n).collect();
        mapping.shuffle(rng);
        Permutation { mapping }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.len()];
        for (i, &m) in self.mapping.iter().enumerate() {
            inv[m] = i;
        }
        Permutation { mapping: inv }
    }

    pub fn matrix(&self) -> Array2<f64> {
        let n = self.len();
        let mut p = Array2::zeros((n, n));
        for (i, &m) in self.mapping.iter().enumerate() {
            p[[m, i]] = 1.0;
        }
        p
    }
}

/// `Pᵀ S P`.
pub fn permute_graph(s: &Gso, perm: &Permutation) -> Result<Gso> {
    let n = s.n();
    if perm.len() != n {
        return Err(Error::dim(format!("permutation of {} applied to graph of {n}", perm.len())));
    }
    let map = perm.mapping();
    let entries = Array2::from_shape_fn((n, n), |(i, j)| s.entries[[map[i], map[j]]]);
    Ok(Gso { entries, symmetric: s.symmetric })
}

/// `Pᵀ X`.
pub fn permute_signal(x: &GraphSignal, perm: &Permutation) -> Result<GraphSignal> {
    let (n, f) = x.dim();
    if perm.len() != n {
        return Err(Error::dim(format!("permutation of {} applied to signal with {n} rows", perm.len())));
    }
    let map = perm.mapping();
    Ok(Array2::from_shape_fn((n, f), |(i, c)| x[[map[i], c]]))
}
