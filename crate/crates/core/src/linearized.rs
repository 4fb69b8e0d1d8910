//! Linearization `L(λ) = [[0, L₋], [−L₊, 0]]` about `φ^λ`: internal modes and Riesz projections.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexPair, FieldPair, Grid};
use crate::linalg::{self, sym_gen_eig};
use crate::ops::{Schrodinger, TwoLevel};
use crate::soliton::SolitonPoint;
use crate::spectrum::{
    canonical_basis, cluster_indices, potential_frame, probes, DiscreteSpectrum, CLUSTER_TOL,
};

/// Operator closures `L₋`, `L₊` at one soliton point.
#[derive(Clone, Debug)]
pub struct LinearizedOps {
    pub soliton: SolitonPoint,
    pub l_minus: Schrodinger,
    pub l_plus: Schrodinger,
}

impl LinearizedOps {
    pub fn new(soliton: &SolitonPoint) -> Self {
        LinearizedOps {
            soliton: soliton.clone(),
            l_minus: soliton.l_minus(),
            l_plus: soliton.l_plus(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.soliton.grid
    }

    pub fn lambda(&self) -> f64 {
        self.soliton.lambda
    }

    /// `L(f₁, f₂) = (L₋f₂, −L₊f₁)`.
    pub fn apply(&self, f: &FieldPair) -> FieldPair {
        let (a, b) = Schrodinger::apply_two(&self.l_minus, &f.second, &self.l_plus, &f.first);
        FieldPair {
            grid: f.grid.clone(),
            first: a,
            second: b.iter().map(|x| -x).collect(),
        }
    }

    pub fn apply_complex(&self, f: &ComplexPair) -> ComplexPair {
        let re = self.apply(&f.re());
        let im = self.apply(&FieldPair {
            grid: f.grid.clone(),
            first: f.first.iter().map(|v| v.im).collect(),
            second: f.second.iter().map(|v| v.im).collect(),
        });
        ComplexPair {
            grid: f.grid.clone(),
            first: re
                .first
                .iter()
                .zip(&im.first)
                .map(|(&a, &b)| C64::new(a, b))
                .collect(),
            second: re
                .second
                .iter()
                .zip(&im.second)
                .map(|(&a, &b)| C64::new(a, b))
                .collect(),
        }
    }

    /// Solves `L₋ w = y` on the complement of `φ^λ` (`y` must be orthogonal to `φ^λ`).
    pub fn solve_l_minus(&self, y: &[f64], tol: f64) -> Result<Vec<f64>> {
        let phi = &self.soliton.phi;
        let np = linalg::dot(phi, phi);
        let proj = |u: &[f64]| {
            let c = linalg::dot(phi, u) / np;
            let mut out = u.to_vec();
            linalg::axpy(&mut out, -c, phi);
            out
        };
        let s = self.soliton.preconditioner_shift();
        let grid = self.grid().clone();
        let b = proj(y);
        let (w, st) = linalg::cg(
            |u| proj(&self.l_minus.apply(u)),
            |r| proj(&grid.multiplier_real(&proj(r), |k2| 1.0 / (k2 + s))),
            &b,
            None,
            tol,
            3000,
        );
        if !st.converged {
            return Err(Error::IllConditioned {
                residual: st.residual,
                min_eig: 0.0,
            });
        }
        Ok(w)
    }

    pub fn solve_l_plus(&self, b: &[f64], tol: f64) -> Result<Vec<f64>> {
        let pre = TwoLevel::new(
            &self.l_plus,
            &self.soliton.phi,
            self.soliton.preconditioner_shift(),
        );
        let (x, st) = linalg::cg(
            |u| self.l_plus.apply(u),
            |r| pre.apply(r),
            b,
            None,
            tol,
            3000,
        );
        if !st.converged {
            return Err(Error::IllConditioned {
                residual: st.residual,
                min_eig: pre.theta(),
            });
        }
        Ok(x)
    }

    /// `T⁻¹y` for `T = L₋L₊` restricted to `{x ⊥ φ^λ}`.
    pub fn t_inverse(&self, y: &[f64], tol: f64) -> Result<Vec<f64>> {
        let w = self.solve_l_minus(y, tol)?;
        let mut x = self.solve_l_plus(&w, tol)?;
        let p = &self.soliton;
        let c = linalg::dot(&x, &p.phi) / linalg::dot(&p.dphi, &p.phi);
        linalg::axpy(&mut x, -c, &p.dphi);
        Ok(x)
    }
}

#[derive(Clone, Debug)]
pub struct InternalModes {
    pub lambda: f64,
    pub energies: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    /// `max(‖L₊ξ − Eη‖, ‖L₋η − Eξ‖)/‖ξ‖` per mode.
    pub residuals: Vec<f64>,
    /// `max |⟨ξ_n, η_m⟩ − δ_nm|`.
    pub biorth_error: f64,
    pub clusters: Vec<Vec<usize>>,
    /// Ritz values `E` of guard vectors found below the continuum edge `λ`.
    pub unexpected: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeReport {
    pub lambda: f64,
    pub energies: Vec<f64>,
    pub residuals: Vec<f64>,
    pub biorth_error: f64,
    pub clusters: Vec<Vec<usize>>,
    pub radiates: Vec<bool>,
    pub unexpected: Vec<f64>,
}

impl InternalModes {
    pub fn n(&self) -> usize {
        self.energies.len()
    }

    pub fn report(&self) -> ModeReport {
        ModeReport {
            lambda: self.lambda,
            energies: self.energies.clone(),
            residuals: self.residuals.clone(),
            biorth_error: self.biorth_error,
            clusters: self.clusters.clone(),
            radiates: self
                .energies
                .iter()
                .map(|&e| 2.0 * e > self.lambda)
                .collect(),
            unexpected: self.unexpected.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModeOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub inner_tol: f64,
}

impl Default for ModeOptions {
    fn default() -> Self {
        ModeOptions {
            tol: 1e-9,
            max_iter: 300,
            inner_tol: 1e-6,
        }
    }
}

/// Internal modes `(E_n, ξ_n, η_n)` of `L(λ)`, from `L₋L₊ξ = E²ξ` on `{ξ ⊥ φ^λ}`.
///
/// The composition is self-adjoint in the `L₊` inner product; the Ritz problem is solved by
/// block LOBPCG preconditioned with the exact inverse of the composition.
pub fn solve_internal_modes(
    ops: &LinearizedOps,
    spectrum: &DiscreteSpectrum,
    n_modes: usize,
    opts: &ModeOptions,
) -> Result<InternalModes> {
    let grid = ops.grid().clone();
    let p = &ops.soliton;
    let phi = &p.phi;
    let nphi = linalg::dot(phi, phi);
    let to_x = |u: &mut Vec<f64>| {
        let c = linalg::dot(phi, u) / nphi;
        linalg::axpy(u, -c, phi);
    };
    let block = n_modes + 2;
    let (center, spread) = potential_frame(&grid, &spectrum.potential);
    let mut x: Vec<Vec<f64>> = spectrum
        .neutral
        .iter()
        .take(n_modes)
        .map(|m| m.xi_lin.clone())
        .collect();
    for pr in probes(&grid, center, spread).into_iter().skip(1) {
        if x.len() == block {
            break;
        }
        x.push(pr);
    }
    for u in x.iter_mut() {
        to_x(u);
    }

    let t_apply = |u: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let lu = ops.l_plus.apply(u);
        let tu = ops.l_minus.apply(&lu);
        (lu, tu)
    };
    let lp_dot = |a: &[f64], b: &[f64]| linalg::dot(&ops.l_plus.apply(a), b);

    let mut theta = vec![0.0; block];
    let mut res = vec![f64::INFINITY; block];
    let mut pdir: Vec<Vec<f64>> = Vec::new();
    let mut first = true;
    for _ in 0..opts.max_iter {
        let mut s = linalg::orthonormalize(x.clone(), lp_dot, 0.0);
        let nx = s.len();
        if nx < block {
            return Err(Error::Degeneracy("internal-mode block lost rank".into()));
        }
        if !first {
            let lt: Vec<(Vec<f64>, Vec<f64>)> = s.iter().map(|u| t_apply(u)).collect();
            let mut r = Vec::new();
            for i in 0..block {
                let ri: Vec<f64> = lt[i]
                    .1
                    .iter()
                    .zip(&s[i])
                    .map(|(a, b)| a - theta[i] * b)
                    .collect();
                res[i] = linalg::norm(&ri) / linalg::norm(&s[i]);
                r.push(ri);
            }
            // `s` was re-orthonormalized; Ritz values of `s` equal `theta` up to rotation within X
            if res[..n_modes].iter().all(|&q| q <= 0.2 * opts.tol) {
                x = s;
                break;
            }
            let mut extra: Vec<Vec<f64>> = Vec::new();
            for i in 0..block {
                if res[i] > 0.05 * opts.tol {
                    let mut w = ops.t_inverse(&r[i], opts.inner_tol)?;
                    to_x(&mut w);
                    extra.push(w);
                }
            }
            extra.extend(pdir.iter().cloned());
            let mut q = s.clone();
            q.extend(extra);
            s = linalg::orthonormalize(q, lp_dot, 1e-9);
        }
        first = false;
        let lt: Vec<(Vec<f64>, Vec<f64>)> = s.iter().map(|u| t_apply(u)).collect();
        let m = s.len();
        let mut a = DMatrix::zeros(m, m);
        let mut b = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let aij = linalg::dot(&lt[i].0, &lt[j].1);
                let bij = linalg::dot(&lt[i].0, &s[j]);
                a[(i, j)] = aij;
                a[(j, i)] = aij;
                b[(i, j)] = bij;
                b[(j, i)] = bij;
            }
        }
        let (t, c) = sym_gen_eig(&a, &b)?;
        if t.len() < block {
            return Err(Error::Eigen("internal-mode search space collapsed".into()));
        }
        let combine = |c: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..block)
                .map(|col| {
                    let mut out = vec![0.0; grid.len()];
                    for (row, v) in s.iter().enumerate() {
                        linalg::axpy(&mut out, c[(row, col)], v);
                    }
                    out
                })
                .collect()
        };
        let new_x = combine(&c);
        let mut cp = c.clone();
        for row in 0..nx.min(block) {
            for col in 0..cp.ncols() {
                cp[(row, col)] = 0.0;
            }
        }
        pdir = combine(&cp)
            .into_iter()
            .filter(|q| linalg::norm(q) > 1e-14)
            .collect();
        x = new_x;
        theta = t[..block].to_vec();
    }

    // final Ritz pass on the converged block
    let s = linalg::orthonormalize(x, lp_dot, 0.0);
    let lt: Vec<(Vec<f64>, Vec<f64>)> = s.iter().map(|u| t_apply(u)).collect();
    let mut a = DMatrix::zeros(block, block);
    let mut b = DMatrix::zeros(block, block);
    for i in 0..block {
        for j in 0..block {
            a[(i, j)] = linalg::dot(&lt[i].0, &lt[j].1);
            b[(i, j)] = linalg::dot(&lt[i].0, &s[j]);
        }
    }
    let (t, c) = sym_gen_eig(&a, &b)?;
    let vecs: Vec<Vec<f64>> = (0..block)
        .map(|col| {
            let mut out = vec![0.0; grid.len()];
            for (row, v) in s.iter().enumerate() {
                linalg::axpy(&mut out, c[(row, col)], v);
            }
            out
        })
        .collect();

    let tol_e = 10.0 * opts.tol;
    for &e2 in &t[..n_modes] {
        if e2 <= tol_e {
            return Err(Error::ThresholdCollision(e2));
        }
    }
    let lambda = p.lambda;
    let unexpected: Vec<f64> = t[n_modes..]
        .iter()
        .filter(|&&e2| e2 < lambda * lambda * (1.0 - 1e-3))
        .map(|e2| e2.sqrt())
        .collect();
    for &e2 in &t[..n_modes] {
        if e2 >= lambda * lambda {
            return Err(Error::ThresholdCollision(e2));
        }
    }

    let energies: Vec<f64> = t[..n_modes].iter().map(|e2| e2.sqrt()).collect();
    let clusters = cluster_indices(&energies, CLUSTER_TOL * spectrum.e0);
    let probe_set = probes(&grid, center, spread);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
    for cl in &clusters {
        let members: Vec<Vec<f64>> = cl.iter().map(|&i| vecs[i].clone()).collect();
        basis.extend(canonical_basis(&members, &probe_set, lp_dot));
    }
    if basis.len() != n_modes {
        return Err(Error::Degeneracy("cluster basis is rank deficient".into()));
    }

    let mut xi = Vec::with_capacity(n_modes);
    let mut eta = Vec::with_capacity(n_modes);
    let mut energies_final = Vec::with_capacity(n_modes);
    let mut residuals = Vec::with_capacity(n_modes);
    for v in basis {
        let (lv, tv) = t_apply(&v);
        let e2 = linalg::dot(&lv, &tv) / linalg::dot(&lv, &v);
        let e = e2.sqrt();
        let scale_v = 1.0 / linalg::dot(&lv, &v).sqrt();
        // B-normalize in the weighted inner product ⟨ξ, η⟩ = 1
        let h3 = grid.cell_volume();
        let sx = e.sqrt() * scale_v / h3.sqrt();
        let xn: Vec<f64> = v.iter().map(|a| a * sx).collect();
        let en: Vec<f64> = lv.iter().map(|a| a * sx / e).collect();
        let r1: Vec<f64> = ops
            .l_plus
            .apply(&xn)
            .iter()
            .zip(&en)
            .map(|(a, b)| a - e * b)
            .collect();
        let r2: Vec<f64> = ops
            .l_minus
            .apply(&en)
            .iter()
            .zip(&xn)
            .map(|(a, b)| a - e * b)
            .collect();
        residuals.push(linalg::norm(&r1).max(linalg::norm(&r2)) / linalg::norm(&xn));
        xi.push(xn);
        eta.push(en);
        energies_final.push(e);
    }
    let mut biorth: f64 = 0.0;
    for i in 0..n_modes {
        for j in 0..n_modes {
            let g = grid.dot(&xi[i], &eta[j]);
            biorth = biorth.max((g - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    if biorth > 1e-6 {
        return Err(Error::Degeneracy(format!(
            "biorthonormality error {biorth:.3e}"
        )));
    }
    Ok(InternalModes {
        lambda,
        energies: energies_final,
        xi,
        eta,
        residuals,
        biorth_error: biorth,
        clusters,
        unexpected,
    })
}

/// Explicit Riesz projection onto the discrete subspace of `L(λ)`.
#[derive(Clone, Debug)]
pub struct RieszProjector {
    pub grid: Grid,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    /// `2/∂λ‖φ^λ‖² = 1/⟨φ^λ, ∂λφ^λ⟩`.
    pub norm: f64,
}

impl RieszProjector {
    pub fn new(soliton: &SolitonPoint, modes: &InternalModes) -> Self {
        RieszProjector {
            grid: soliton.grid.clone(),
            phi: soliton.phi.clone(),
            dphi: soliton.dphi.clone(),
            xi: modes.xi.clone(),
            eta: modes.eta.clone(),
            norm: 1.0 / soliton.phi_dphi(),
        }
    }

    /// Coefficients of `P_d f` on `(∂λφ,0), (0,φ), (ξ_n,0), (0,η_n)`.
    pub fn coefficients(&self, f: &FieldPair) -> (f64, f64, Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let a = self.norm * g.dot(&f.first, &self.phi);
        let b = self.norm * g.dot(&f.second, &self.dphi);
        let c = self.eta.iter().map(|e| g.dot(&f.first, e)).collect();
        let d = self.xi.iter().map(|x| g.dot(&f.second, x)).collect();
        (a, b, c, d)
    }

    pub fn project_discrete(&self, f: &FieldPair) -> FieldPair {
        let (a, b, c, d) = self.coefficients(f);
        let mut out = FieldPair::zeros(&self.grid);
        linalg::axpy(&mut out.first, a, &self.dphi);
        linalg::axpy(&mut out.second, b, &self.phi);
        for n in 0..self.xi.len() {
            linalg::axpy(&mut out.first, c[n], &self.xi[n]);
            linalg::axpy(&mut out.second, d[n], &self.eta[n]);
        }
        out
    }

    pub fn project_continuous(&self, f: &FieldPair) -> FieldPair {
        f.sub(&self.project_discrete(f))
    }

    /// Complex-linear extension of `P_d` (bilinear pairings, no conjugation).
    pub fn project_discrete_complex(&self, f: &ComplexPair) -> ComplexPair {
        let g = &self.grid;
        let a = g.dot_cr(&f.first, &self.phi) * self.norm;
        let b = g.dot_cr(&f.second, &self.dphi) * self.norm;
        let mut out = ComplexPair::zeros(g);
        for i in 0..g.len() {
            out.first[i] = a * self.dphi[i];
            out.second[i] = b * self.phi[i];
        }
        for n in 0..self.xi.len() {
            let c = g.dot_cr(&f.first, &self.eta[n]);
            let d = g.dot_cr(&f.second, &self.xi[n]);
            for i in 0..g.len() {
                out.first[i] += c * self.xi[n][i];
                out.second[i] += d * self.eta[n][i];
            }
        }
        out
    }

    pub fn project_continuous_complex(&self, f: &ComplexPair) -> ComplexPair {
        let pd = self.project_discrete_complex(f);
        let mut out = f.clone();
        out.axpy(C64::new(-1.0, 0.0), &pd);
        out
    }
}

/// Smooth localized test pair: a sum of Gaussians with seeded centres, widths and amplitudes.
pub fn random_pair(grid: &Grid, seed: u64) -> FieldPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bumps = || -> Vec<([f64; 3], f64, f64)> {
        (0..4)
            .map(|_| {
                let c = [
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                ];
                (c, rng.random_range(0.8..2.0), rng.random_range(-1.0..1.0))
            })
            .collect()
    };
    let (b1, b2) = (bumps(), bumps());
    let eval = |b: &[([f64; 3], f64, f64)], x: [f64; 3]| {
        b.iter()
            .map(|(c, w, a)| {
                let r2 = (0..3).map(|i| (x[i] - c[i]).powi(2)).sum::<f64>();
                a * (-r2 / (w * w)).exp()
            })
            .sum::<f64>()
    };
    FieldPair {
        grid: grid.clone(),
        first: grid.sample(|x| eval(&b1, x)),
        second: grid.sample(|x| eval(&b2, x)),
    }
}

/// Residuals of the projector algebra on seeded test pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProjectorChecks {
    /// `max ‖P_d P_d f − P_d f‖ / ‖f‖`.
    pub idempotency: f64,
    /// `max ‖P_d P_c f‖ / ‖f‖`.
    pub annihilation: f64,
    /// `‖L(∂λφ, 0) − (0, φ)‖ / ‖φ‖`.
    pub zero_mode_chain: f64,
    /// `max ‖P_c L f − L P_c f‖ / ‖L f‖`.
    pub commutation: f64,
}

pub fn projector_checks(
    ops: &LinearizedOps,
    p: &RieszProjector,
    samples: usize,
    seed: u64,
) -> ProjectorChecks {
    let mut c = ProjectorChecks {
        idempotency: 0.0,
        annihilation: 0.0,
        zero_mode_chain: 0.0,
        commutation: 0.0,
    };
    for s in 0..samples as u64 {
        let f = random_pair(&p.grid, seed.wrapping_add(s));
        let nf = f.norm();
        let pd = p.project_discrete(&f);
        c.idempotency = c
            .idempotency
            .max(p.project_discrete(&pd).sub(&pd).norm() / nf);
        c.annihilation = c
            .annihilation
            .max(p.project_discrete(&p.project_continuous(&f)).norm() / nf);
        let lf = ops.apply(&f);
        let a = p.project_continuous(&lf);
        let b = ops.apply(&p.project_continuous(&f));
        c.commutation = c.commutation.max(a.sub(&b).norm() / lf.norm());
    }
    let chain = ops.apply(&FieldPair {
        grid: p.grid.clone(),
        first: p.dphi.clone(),
        second: vec![0.0; p.grid.len()],
    });
    let target = FieldPair {
        grid: p.grid.clone(),
        first: vec![0.0; p.grid.len()],
        second: p.phi.clone(),
    };
    c.zero_mode_chain = chain.sub(&target).norm() / p.grid.norm(&p.phi);
    c
}

/// `ω(f, g) = Im ∫ F Ḡ` for the complex forms `F = f₁ + i f₂`.
pub fn omega(f: &FieldPair, g: &FieldPair) -> f64 {
    let gr = &f.grid;
    gr.dot(&f.second, &g.first) - gr.dot(&f.first, &g.second)
}
