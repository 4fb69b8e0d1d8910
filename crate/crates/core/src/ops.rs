//! Scalar Schrödinger operators `−Δ + w(x)` and their preconditioned inverses.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{self, SolveStats};

/// `u ↦ −Δu + w u` on a grid.
#[derive(Clone, Debug)]
pub struct Schrodinger {
    pub grid: Grid,
    pub w: Vec<f64>,
}

impl Schrodinger {
    pub fn new(grid: &Grid, w: Vec<f64>) -> Self {
        Schrodinger {
            grid: grid.clone(),
            w,
        }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = self.grid.neg_laplacian(u);
        for ((o, wi), ui) in out.iter_mut().zip(&self.w).zip(u) {
            *o += wi * ui;
        }
        out
    }

    /// Applies two (possibly different) operators on the same grid with one transform.
    pub fn apply_two(
        a: &Schrodinger,
        ua: &[f64],
        b: &Schrodinger,
        ub: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let (mut la, mut lb) = a.grid.neg_laplacian_pair(ua, ub);
        for ((o, wi), ui) in la.iter_mut().zip(&a.w).zip(ua) {
            *o += wi * ui;
        }
        for ((o, wi), ui) in lb.iter_mut().zip(&b.w).zip(ub) {
            *o += wi * ui;
        }
        (la, lb)
    }

    pub fn min_w(&self) -> f64 {
        self.w.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Two-level preconditioner for a positive operator with one small eigen-direction `d`:
/// `M⁻¹r = Q(−Δ + s)⁻¹Q r + d⟨d, r⟩/θ`, `Q = I − d dᵀ`, `θ = ⟨d, A d⟩`.
pub struct TwoLevel<'a> {
    grid: &'a Grid,
    s: f64,
    d: Vec<f64>,
    theta: f64,
}

impl<'a> TwoLevel<'a> {
    /// `d` is normalized in the Euclidean dot internally.
    pub fn new(op: &'a Schrodinger, d: &[f64], s: f64) -> Self {
        let nd = linalg::norm(d);
        let d: Vec<f64> = d.iter().map(|x| x / nd).collect();
        let theta = linalg::dot(&d, &op.apply(&d));
        TwoLevel {
            grid: &op.grid,
            s,
            d,
            theta,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let c = linalg::dot(&self.d, r);
        let mut q = r.to_vec();
        linalg::axpy(&mut q, -c, &self.d);
        let mut y = self.grid.multiplier_real(&q, |k2| 1.0 / (k2 + self.s));
        let cy = linalg::dot(&self.d, &y);
        linalg::axpy(&mut y, -cy, &self.d);
        if self.theta > 0.0 {
            linalg::axpy(&mut y, c / self.theta, &self.d);
        }
        y
    }
}

/// Solves `A x = b` for a positive operator by preconditioned CG.
pub fn solve_positive(
    op: &Schrodinger,
    pre: &TwoLevel<'_>,
    b: &[f64],
    x0: Option<Vec<f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let (x, st) = linalg::cg(|u| op.apply(u), |r| pre.apply(r), b, x0, tol, max_iter);
    if !st.converged {
        let nd = linalg::norm(&pre.d);
        return Err(Error::IllConditioned {
            residual: st.residual,
            min_eig: pre.theta / (nd * nd),
        });
    }
    Ok((x, st))
}
