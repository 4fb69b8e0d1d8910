//! Nonlinear ground states `φ^λ` of `−Δu + Vu + λu + u³ = 0` and their λ-derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg;
use crate::ops::{solve_positive, Schrodinger, TwoLevel};
use crate::spectrum::DiscreteSpectrum;

#[derive(Clone, Debug)]
pub struct SolitonOptions {
    pub tol: f64,
    pub max_newton: usize,
    /// Largest admissible `e₀ − λ`.
    pub delta0: f64,
    pub cg_tol: f64,
}

impl Default for SolitonOptions {
    fn default() -> Self {
        SolitonOptions {
            tol: 1e-10,
            max_newton: 40,
            delta0: f64::INFINITY,
            cg_tol: 1e-12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolitonPoint {
    pub grid: Grid,
    pub potential: Vec<f64>,
    pub e0: f64,
    pub lambda: f64,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub newton_residual: f64,
    pub dlambda_residual: f64,
    pub newton_iterations: usize,
    /// Fitted amplitude `⟨φ^λ, φ⟩/‖φ‖²`.
    pub delta: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchRow {
    pub lambda: f64,
    pub delta: f64,
    pub mass: f64,
    pub phi_dphi: f64,
    pub residual: f64,
}

impl SolitonPoint {
    /// `L₊ = −Δ + V + λ + 3(φ^λ)²`.
    pub fn l_plus(&self) -> Schrodinger {
        let w = self
            .potential
            .iter()
            .zip(&self.phi)
            .map(|(v, p)| v + self.lambda + 3.0 * p * p)
            .collect();
        Schrodinger::new(&self.grid, w)
    }

    /// `L₋ = −Δ + V + λ + (φ^λ)²`.
    pub fn l_minus(&self) -> Schrodinger {
        let w = self
            .potential
            .iter()
            .zip(&self.phi)
            .map(|(v, p)| v + self.lambda + p * p)
            .collect();
        Schrodinger::new(&self.grid, w)
    }

    /// `⟨φ^λ, ∂λφ^λ⟩ = ½ ∂λ‖φ^λ‖²`.
    pub fn phi_dphi(&self) -> f64 {
        self.grid.dot(&self.phi, &self.dphi)
    }

    pub fn mass(&self) -> f64 {
        self.grid.dot(&self.phi, &self.phi)
    }

    pub fn row(&self) -> BranchRow {
        BranchRow {
            lambda: self.lambda,
            delta: self.delta,
            mass: self.mass(),
            phi_dphi: self.phi_dphi(),
            residual: self.newton_residual,
        }
    }

    pub fn preconditioner_shift(&self) -> f64 {
        self.lambda.max(0.05)
    }

    /// Solves `L₊ w = b`.
    pub fn solve_l_plus(&self, b: &[f64], tol: f64) -> Result<Vec<f64>> {
        let lp = self.l_plus();
        let pre = TwoLevel::new(&lp, &self.phi, self.preconditioner_shift());
        Ok(solve_positive(&lp, &pre, b, None, tol, 2000)?.0)
    }

    /// `∂²λφ^λ` from `L₊ u_λλ = −2u_λ − 6 u u_λ²`.
    pub fn d2phi(&self, tol: f64) -> Result<Vec<f64>> {
        let rhs: Vec<f64> = self
            .dphi
            .iter()
            .zip(&self.phi)
            .map(|(d, p)| -2.0 * d - 6.0 * p * d * d)
            .collect();
        self.solve_l_plus(&rhs, tol)
    }

    /// Weighted-L² residual of the profile equation.
    pub fn profile_residual(&self) -> f64 {
        profile_residual(&self.grid, &self.potential, self.lambda, &self.phi)
    }
}

pub fn profile_residual(grid: &Grid, v: &[f64], lambda: f64, u: &[f64]) -> f64 {
    grid.norm(&profile_map(grid, v, lambda, u))
}

fn profile_map(grid: &Grid, v: &[f64], lambda: f64, u: &[f64]) -> Vec<f64> {
    let mut f = grid.neg_laplacian(u);
    for ((fi, vi), ui) in f.iter_mut().zip(v).zip(u) {
        *fi += (vi + lambda) * ui + ui * ui * ui;
    }
    f
}

/// Leading-order amplitude `δ = (∫φ⁴)^{-1/2}(e₀−λ)^{1/2}`.
pub fn leading_delta(spectrum: &DiscreteSpectrum, lambda: f64) -> f64 {
    ((spectrum.e0 - lambda) / phi_fourth(spectrum)).sqrt()
}

/// `∫φ⁴`.
pub fn phi_fourth(spectrum: &DiscreteSpectrum) -> f64 {
    let p2: Vec<f64> = spectrum.phi.iter().map(|p| p * p).collect();
    spectrum.grid.dot(&p2, &p2)
}

/// Default branch extent: largest `e₀ − λ` with `‖δφ‖∞ ≤ 0.2` at leading order.
pub fn default_delta0(spectrum: &DiscreteSpectrum) -> f64 {
    let phi4 = phi_fourth(spectrum);
    let pmax = spectrum.phi.iter().cloned().fold(0.0, f64::max);
    (0.2 / pmax).powi(2) * phi4
}

pub fn continue_soliton(
    spectrum: &DiscreteSpectrum,
    lambda: f64,
    opts: &SolitonOptions,
) -> Result<SolitonPoint> {
    continue_soliton_from(spectrum, lambda, None, opts)
}

/// Newton continuation at `λ`, optionally seeded by a neighbouring profile.
pub fn continue_soliton_from(
    spectrum: &DiscreteSpectrum,
    lambda: f64,
    seed: Option<&[f64]>,
    opts: &SolitonOptions,
) -> Result<SolitonPoint> {
    let gap = spectrum.e0 - lambda;
    if !(gap > 0.0 && gap <= opts.delta0) {
        return Err(Error::Config(format!(
            "e0 - lambda = {gap:.3e} outside (0, {:.3e}]",
            opts.delta0
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Config("soliton tolerance must be positive".into()));
    }
    let grid = &spectrum.grid;
    let v = &spectrum.potential;
    let mut u: Vec<f64> = match seed {
        Some(s) => s.to_vec(),
        None => {
            let d = leading_delta(spectrum, lambda);
            spectrum.phi.iter().map(|p| d * p).collect()
        }
    };
    let mut f = profile_map(grid, v, lambda, &u);
    let mut res = grid.norm(&f);
    let mut it = 0;
    while res > opts.tol {
        if it == opts.max_newton {
            return Err(Error::Continuation {
                lambda,
                reason: format!("Newton stalled at residual {res:.3e} after {it} steps"),
            });
        }
        let w: Vec<f64> = v
            .iter()
            .zip(&u)
            .map(|(vi, ui)| vi + lambda + 3.0 * ui * ui)
            .collect();
        let jac = Schrodinger::new(grid, w);
        let pre = TwoLevel::new(&jac, &spectrum.phi, lambda.max(0.05));
        let rhs: Vec<f64> = f.iter().map(|x| -x).collect();
        let (du, _) = linalg::cg(
            |x| jac.apply(x),
            |r| pre.apply(r),
            &rhs,
            None,
            opts.cg_tol,
            3000,
        );
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + step * b).collect();
            let ft = profile_map(grid, v, lambda, &trial);
            let rt = grid.norm(&ft);
            if rt < res || step < 1e-4 {
                u = trial;
                f = ft;
                res = rt;
                break;
            }
            step *= 0.5;
        }
        it += 1;
    }

    let total: f64 = u.iter().map(|x| x * x).sum();
    let neg: f64 = u.iter().filter(|&&x| x < 0.0).map(|x| x * x).sum();
    if total == 0.0 || neg > 1e-6 * total || grid.dot(&u, &spectrum.phi) <= 0.0 {
        return Err(Error::Positivity(if total > 0.0 {
            neg / total
        } else {
            1.0
        }));
    }
    let delta = grid.dot(&u, &spectrum.phi) / grid.dot(&spectrum.phi, &spectrum.phi);
    let mut point = SolitonPoint {
        grid: grid.clone(),
        potential: v.clone(),
        e0: spectrum.e0,
        lambda,
        phi: u,
        dphi: Vec::new(),
        newton_residual: res,
        dlambda_residual: f64::NAN,
        newton_iterations: it,
        delta,
    };
    solve_dlambda(&mut point, opts.tol)?;
    Ok(point)
}

/// Fills `point.dphi` with the solution of `L₊ w = −φ^λ`.
pub fn solve_dlambda(point: &mut SolitonPoint, tol: f64) -> Result<()> {
    let b: Vec<f64> = point.phi.iter().map(|p| -p).collect();
    let rel = (tol / point.grid.norm(&b)).min(1e-10);
    let w = point.solve_l_plus(&b, rel)?;
    let lw = point.l_plus().apply(&w);
    let r: Vec<f64> = lw.iter().zip(&point.phi).map(|(a, p)| a + p).collect();
    point.dlambda_residual = point.grid.norm(&r);
    point.dphi = w;
    Ok(())
}

/// Continues along a list of λ values, seeding each solve with the previous profile.
pub fn branch(
    spectrum: &DiscreteSpectrum,
    lambdas: &[f64],
    opts: &SolitonOptions,
) -> Result<Vec<SolitonPoint>> {
    let mut out: Vec<SolitonPoint> = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let seed = out.last().map(|p| {
            // first-order predictor along the branch
            p.phi
                .iter()
                .zip(&p.dphi)
                .map(|(a, d)| a + (l - p.lambda) * d)
                .collect::<Vec<f64>>()
        });
        out.push(continue_soliton_from(spectrum, l, seed.as_deref(), opts)?);
    }
    Ok(out)
}

pub fn write_branch_csv<W: std::io::Write>(points: &[SolitonPoint], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for p in points {
        wr.serialize(p.row())?;
    }
    wr.flush()?;
    Ok(())
}
