use ndarray::Array2;

use super::eigen::{spectral_norm, symmetric_eigendecomposition};
use super::Gso;
use crate::error::{Error, Result};

const RESONANCE_TOL: f64 = 1e-10;

/// Symmetric relative error `E` with `Ŝ = S + E S + S E`, and its spectral
/// norm (the measured perturbation size).
#[derive(Debug, Clone)]
pub struct RelativeError {
    pub matrix: Array2<f64>,
    pub operator_norm: f64,
}

impl RelativeError {
    /// `S + E S + S E`.
    pub fn apply(&self, s: &Gso) -> Array2<f64> {
        let se = s.entries().dot(&self.matrix);
        s.entries() + &self.matrix.dot(s.entries()) + &se
    }
}

/// Solves the Sylvester equation `Ŝ − S = E S + S E` for symmetric `E` in the
/// eigenbasis of `S`, with the node labelling held fixed.
///
/// With `S = V Λ Vᵀ` and `Δ = Vᵀ (Ŝ − S) V`, the rotated error is
/// `Δ_ij / (λ_i + λ_j)`. Pairs with `|λ_i + λ_j| < 1e-10` and a nonzero
/// `Δ_ij` have no solution and are reported as [`Error::Resonant`].
pub fn relative_error_from_perturbation(s: &Gso, s_hat: &Gso) -> Result<RelativeError> {
    if s.n() != s_hat.n() {
        return Err(Error::dim(format!("graphs of size {} and {}", s.n(), s_hat.n())));
    }
    if !s_hat.is_symmetric() {
        return Err(Error::NotSymmetric(f64::NAN));
    }
    let eig = symmetric_eigendecomposition(s)?;
    let v = &eig.vectors;
    let diff = s_hat.entries() - s.entries();
    let delta = v.t().dot(&diff).dot(v);
    let n = s.n();
    let delta_scale = delta.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let zero_tol = 1e-12 * delta_scale.max(1.0);

    let mut rotated = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let sum = eig.values[i] + eig.values[j];
            if sum.abs() < RESONANCE_TOL {
                if delta[[i, j]].abs() > zero_tol {
                    return Err(Error::Resonant { i, j, sum });
                }
            } else {
                rotated[[i, j]] = delta[[i, j]] / sum;
            }
        }
    }
    let mut e = v.dot(&rotated).dot(&v.t());
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (e[[i, j]] + e[[j, i]]);
            e[[i, j]] = avg;
            e[[j, i]] = avg;
        }
    }
    let operator_norm = spectral_norm(&e)?;
    Ok(RelativeError { matrix: e, operator_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::sbm_generate;
    use crate::rng;
    use rand::Rng as _;

    fn random_symmetric(n: usize, scale: f64, r: &mut rng::Rng) -> Array2<f64> {
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let x: f64 = r.random_range(-scale..scale);
                m[[i, j]] = x;
                m[[j, i]] = x;
            }
        }
        m
    }

    #[test]
    fn identical_graphs_have_zero_error() {
        let s = Gso::new(random_symmetric(6, 1.0, &mut rng::seeded(1)), true).unwrap();
        let e = relative_error_from_perturbation(&s, &s).unwrap();
        assert!(e.operator_norm < 1e-12);
    }

    #[test]
    fn uniform_scaling_is_scalar_error() {
        let s = Gso::new(random_symmetric(6, 1.0, &mut rng::seeded(2)), true).unwrap();
        let tau = 0.03;
        let s_hat = Gso::new(s.entries() * (1.0 + 2.0 * tau), true).unwrap();
        let e = relative_error_from_perturbation(&s, &s_hat).unwrap();
        let expected = Array2::<f64>::eye(6) * tau;
        assert!((&e.matrix - &expected).iter().all(|d| d.abs() < 1e-10));
        assert!((e.operator_norm - tau).abs() < 1e-10);
    }

    #[test]
    fn reconstruction_residual() {
        let mut r = rng::seeded(3);
        for _ in 0..10 {
            let s = Gso::new(random_symmetric(8, 1.0, &mut r), true).unwrap();
            let s_hat = Gso::new(s.entries() + &random_symmetric(8, 0.01, &mut r), true).unwrap();
            let e = relative_error_from_perturbation(&s, &s_hat).unwrap();
            let res = (e.apply(&s) - s_hat.entries()).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(res < 1e-8, "residual {res}");
        }
    }

    #[test]
    fn resonant_pair_is_an_error() {
        // K2 has eigenvalues ±1, so the off-diagonal rotated entries resonate.
        let k2 = Gso::from_undirected_edges(2, &[(0, 1, 1.0)]).unwrap();
        let s_hat = Gso::new(ndarray::array![[0.1, 1.0], [1.0, 0.0]], true).unwrap();
        assert!(matches!(relative_error_from_perturbation(&k2, &s_hat), Err(Error::Resonant { .. })));
    }

    #[test]
    fn dropped_edges_round_trip() {
        let s = crate::graph::normalize_adjacency(&sbm_generate(20, 4, 0.8, 0.2, 5).unwrap()).unwrap();
        let s_hat = crate::graph::drop_edges(&s, 0.05, 1).unwrap();
        if let Ok(e) = relative_error_from_perturbation(&s, &s_hat) {
            let res = (e.apply(&s) - s_hat.entries()).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(res < 1e-8);
        }
    }
}
