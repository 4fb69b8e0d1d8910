//! Product Gauss quadrature on the unit sphere.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SphereQuadrature {
    pub nodes: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Spherical harmonics up to this degree are integrated exactly.
    pub order: usize,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Golub–Welsch).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

impl SphereQuadrature {
    /// `n_theta` Gauss–Legendre nodes in `cos θ` times `2 n_theta` uniform azimuths.
    pub fn product(n_theta: usize) -> Result<Self> {
        if n_theta < 2 {
            return Err(Error::Config(
                "sphere quadrature needs at least 2 polar nodes".into(),
            ));
        }
        let (x, w) = gauss_legendre(n_theta);
        let n_phi = 2 * n_theta;
        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (ct, wt) in x.iter().zip(&w) {
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            for p in 0..n_phi {
                let ph = (p as f64 + 0.5) * dphi;
                nodes.push([st * ph.cos(), st * ph.sin(), *ct]);
                weights.push(wt * dphi);
            }
        }
        Ok(SphereQuadrature {
            nodes,
            weights,
            order: 2 * n_theta - 1,
        })
    }

    /// Quadrature exact at least up to spherical-harmonic degree `order`.
    pub fn with_order(order: usize) -> Result<Self> {
        Self::product((order + 2) / 2)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn([f64; 3]) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| w * f(*s))
            .sum()
    }
}
