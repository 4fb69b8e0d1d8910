//! Bound states of `−Δ + V`: ground pair `(e₀, φ)` and neutral pairs `(e_k, ξ_k^lin)`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, RealField};
use crate::linalg::{self, sym_gen_eig};

/// Relative width of an energy cluster treated as degenerate.
pub const CLUSTER_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct NeutralMode {
    pub e: f64,
    pub xi_lin: Vec<f64>,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct DiscreteSpectrum {
    pub grid: Grid,
    pub potential: Vec<f64>,
    pub e0: f64,
    pub phi: Vec<f64>,
    pub ground_residual: f64,
    pub neutral: Vec<NeutralMode>,
    /// Bound states found beyond the requested count.
    pub extra_bound_states: usize,
    /// `max |φ|, |ξ_k|` on the outermost grid shell, relative to the peak.
    pub boundary_tail: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub e0: f64,
    pub e: Vec<f64>,
    pub residuals: Vec<f64>,
    pub ground_gap: f64,
    /// `min_l (e₀ − 2e_l)`; positive when every mode pair radiates.
    pub radiation_gap: f64,
    pub clusters: Vec<Vec<usize>>,
    pub extra_bound_states: usize,
    pub boundary_tail: f64,
    pub resonance: ResonanceReport,
}

impl DiscreteSpectrum {
    pub fn n_modes(&self) -> usize {
        self.neutral.len()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.neutral.iter().map(|m| m.e).collect()
    }

    /// Index groups of neutral modes whose energies agree within `CLUSTER_TOL·e₀`.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        cluster_indices(&self.energies(), CLUSTER_TOL * self.e0)
    }

    /// `min_l (e₀ − 2e_l)`.
    pub fn radiation_gap(&self) -> f64 {
        self.neutral
            .iter()
            .map(|m| self.e0 - 2.0 * m.e)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn summary(&self) -> SpectrumSummary {
        let mut residuals = vec![self.ground_residual];
        residuals.extend(self.neutral.iter().map(|m| m.residual));
        SpectrumSummary {
            e0: self.e0,
            e: self.energies(),
            residuals,
            ground_gap: self.e0 - self.neutral.first().map(|m| m.e).unwrap_or(0.0),
            radiation_gap: self.radiation_gap(),
            clusters: self.clusters(),
            extra_bound_states: self.extra_bound_states,
            boundary_tail: self.boundary_tail,
            resonance: resonance_report(self, 2),
        }
    }

    /// Checks the radiation condition `2e_l < e₀` for every neutral mode.
    pub fn check_radiation_condition(&self) -> Result<()> {
        let gap = self.radiation_gap();
        if gap <= 0.0 {
            return Err(Error::Condition(format!(
                "e0 = {:.6} but min_l (e0 - 2 e_l) = {gap:.3e}; some mode pair does not reach the continuum",
                self.e0
            )));
        }
        Ok(())
    }
}

pub fn cluster_indices(e: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &ei) in e.iter().enumerate() {
        match out.last_mut() {
            Some(c) if (e[*c.last().unwrap()] - ei).abs() <= tol => c.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

/// `H u = −Δu + V u` applied to two vectors per transform.
pub fn apply_hamiltonian_block(grid: &Grid, v: &[f64], xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(xs.len());
    let mut i = 0;
    while i < xs.len() {
        if i + 1 < xs.len() {
            let (a, b) = grid.neg_laplacian_pair(&xs[i], &xs[i + 1]);
            out.push(
                a.iter()
                    .zip(v)
                    .zip(&xs[i])
                    .map(|((l, p), u)| l + p * u)
                    .collect(),
            );
            out.push(
                b.iter()
                    .zip(v)
                    .zip(&xs[i + 1])
                    .map(|((l, p), u)| l + p * u)
                    .collect(),
            );
            i += 2;
        } else {
            let a = grid.neg_laplacian(&xs[i]);
            out.push(
                a.iter()
                    .zip(v)
                    .zip(&xs[i])
                    .map(|((l, p), u)| l + p * u)
                    .collect(),
            );
            i += 1;
        }
    }
    out
}

/// Low-order polynomial probes times a Gaussian envelope, in a fixed order.
///
/// Used to pick reproducible bases inside degenerate eigenspaces.
pub fn probes(grid: &Grid, center: [f64; 3], scale: f64) -> Vec<Vec<f64>> {
    type P = fn(f64, f64, f64) -> f64;
    let polys: [P; 20] = [
        |_, _, _| 1.0,
        |x, _, _| x,
        |_, y, _| y,
        |_, _, z| z,
        |x, y, _| x * y,
        |x, _, z| x * z,
        |_, y, z| y * z,
        |x, y, _| x * x - y * y,
        |x, y, z| 2.0 * z * z - x * x - y * y,
        |x, y, z| x * x + y * y + z * z,
        |x, y, z| x * y * z,
        |x, _, _| x * x * x,
        |_, y, _| y * y * y,
        |_, _, z| z * z * z,
        |x, y, _| x * x * y,
        |x, y, _| x * y * y,
        |x, _, z| x * x * z,
        |_, y, z| y * y * z,
        |x, _, z| x * z * z,
        |_, y, z| y * z * z,
    ];
    polys
        .iter()
        .map(|p| {
            grid.sample(|q| {
                let (x, y, z) = (
                    (q[0] - center[0]) / scale,
                    (q[1] - center[1]) / scale,
                    (q[2] - center[2]) / scale,
                );
                p(x, y, z) * (-(x * x + y * y + z * z) / 2.0).exp()
            })
        })
        .collect()
}

/// Centroid and spread of `|V|`, used to place initial guesses and probes.
pub fn potential_frame(grid: &Grid, v: &[f64]) -> ([f64; 3], f64) {
    let mut m = 0.0;
    let mut c = [0.0; 3];
    for (i, &vi) in v.iter().enumerate() {
        let p = grid.point(i);
        let w = vi.abs();
        m += w;
        for a in 0..3 {
            c[a] += w * p[a];
        }
    }
    if m == 0.0 {
        return ([0.0; 3], 1.0);
    }
    for ca in c.iter_mut() {
        *ca /= m;
    }
    let mut s = 0.0;
    for (i, &vi) in v.iter().enumerate() {
        let p = grid.point(i);
        s += vi.abs() * (0..3).map(|a| (p[a] - c[a]).powi(2)).sum::<f64>();
    }
    (c, (s / m).sqrt().max(1.0))
}

/// Rotates a set of orthonormal vectors (under `ip`) spanning one eigenspace onto the
/// span's projections of the probe list, Gram–Schmidt in probe order, positive probe overlap.
pub fn canonical_basis<F>(basis: &[Vec<f64>], probes: &[Vec<f64>], ip: F) -> Vec<Vec<f64>>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let c = basis.len();
    if c == 0 {
        return Vec::new();
    }
    let mut chosen: Vec<Vec<f64>> = Vec::new();
    for p in probes {
        if chosen.len() == c {
            break;
        }
        let mut v = vec![0.0; basis[0].len()];
        for u in basis {
            linalg::axpy(&mut v, ip(u, p), u);
        }
        for w in &chosen {
            let a = ip(w, &v);
            linalg::axpy(&mut v, -a, w);
        }
        let nv = ip(&v, &v).sqrt();
        let np = ip(p, p).sqrt();
        if nv > 1e-6 * np {
            linalg::scale(&mut v, 1.0 / nv);
            chosen.push(v);
        }
    }
    // probes exhausted: complete with the remaining original directions
    for u in basis {
        if chosen.len() == c {
            break;
        }
        let mut v = u.clone();
        for w in &chosen {
            let a = ip(w, &v);
            linalg::axpy(&mut v, -a, w);
        }
        let nv = ip(&v, &v).sqrt();
        if nv > 1e-6 {
            linalg::scale(&mut v, 1.0 / nv);
            chosen.push(v);
        }
    }
    chosen
}

#[derive(Clone, Debug)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub inner_iters: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-9,
            max_iter: 600,
            inner_iters: 6,
            seed: 7,
        }
    }
}

/// Lowest `count` eigenpairs of `−Δ + V`; the first is the ground state.
pub fn solve_bound_states(v: &RealField, count: usize, tol: f64) -> Result<DiscreteSpectrum> {
    solve_bound_states_with(
        v,
        count,
        &EigenOptions {
            tol,
            ..Default::default()
        },
    )
}

pub fn solve_bound_states_with(
    v: &RealField,
    count: usize,
    opts: &EigenOptions,
) -> Result<DiscreteSpectrum> {
    if count < 2 {
        return Err(Error::Config(format!(
            "bound-state count {count} must be at least 2"
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Config("eigen tolerance must be positive".into()));
    }
    let grid = &v.grid;
    let vol = (2.0 * grid.half_width()).powi(3);
    let int_v: f64 = v.values.iter().sum::<f64>() * grid.cell_volume();
    // box states sit near ∫V/vol; anything above this floor is not a bound state
    let floor = 2.0 * int_v.abs() / vol + 1e-8;
    let vmin = v.values.iter().cloned().fold(0.0, f64::min);
    if vmin >= -floor {
        return Err(Error::SpectralDeficit {
            requested: count,
            found: 0,
        });
    }

    let (center, spread) = potential_frame(grid, &v.values);
    let block = count + 2;
    let (vals, vecs, res) = lobpcg(grid, &v.values, block, count, center, spread, opts)?;

    let bound: Vec<usize> = (0..block).filter(|&i| vals[i] < -floor).collect();
    if bound.len() < count {
        return Err(Error::SpectralDeficit {
            requested: count,
            found: bound.len(),
        });
    }
    for i in 0..count {
        if res[i] > opts.tol {
            return Err(Error::Eigen(format!(
                "eigenpair {i} residual {:.3e} above tol {:.1e}",
                res[i], opts.tol
            )));
        }
    }
    let extra = bound.len() - count;

    let energies: Vec<f64> = vals[..count].iter().map(|x| -x).collect();
    let e0 = energies[0];
    let probe_set = probes(grid, center, spread);
    let ip = |a: &[f64], b: &[f64]| grid.dot(a, b);
    let mut ordered: Vec<Vec<f64>> = Vec::with_capacity(count);
    for cl in cluster_indices(&energies, CLUSTER_TOL * e0) {
        let members: Vec<Vec<f64>> = cl.iter().map(|&i| vecs[i].clone()).collect();
        ordered.extend(canonical_basis(&members, &probe_set, ip));
    }
    let mut phi = ordered[0].clone();
    if phi.iter().sum::<f64>() < 0.0 {
        linalg::scale(&mut phi, -1.0);
    }
    let pmax = phi.iter().cloned().fold(0.0, f64::max);
    let pmin = phi.iter().cloned().fold(0.0, f64::min);
    if pmin < -1e-2 * pmax {
        return Err(Error::Eigen(format!(
            "ground state changes sign (min/max = {:.3e})",
            pmin / pmax
        )));
    }
    if e0 - energies[1] <= 10.0 * opts.tol {
        return Err(Error::Eigen(format!(
            "ground state is not simple: gap {:.3e}",
            e0 - energies[1]
        )));
    }

    let resid = |u: &[f64], e: f64| {
        let hu = apply_hamiltonian_block(grid, &v.values, &[u.to_vec()]).remove(0);
        let r: Vec<f64> = hu.iter().zip(u).map(|(a, b)| a + e * b).collect();
        linalg::norm(&r) / linalg::norm(u)
    };
    let ground_residual = resid(&phi, e0);
    let neutral: Vec<NeutralMode> = (1..count)
        .map(|i| NeutralMode {
            e: energies[i],
            residual: resid(&ordered[i], energies[i]),
            xi_lin: ordered[i].clone(),
        })
        .collect();

    let mut tail: f64 = 0.0;
    let n = grid.n();
    let shell = |idx: usize| {
        let (i, j, k) = (idx / (n * n), (idx / n) % n, idx % n);
        [i, j, k].iter().any(|&a| a == 0)
    };
    for u in std::iter::once(&phi).chain(neutral.iter().map(|m| &m.xi_lin)) {
        let peak = u.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let edge = (0..grid.len())
            .filter(|&i| shell(i))
            .fold(0.0f64, |a, i| a.max(u[i].abs()));
        tail = tail.max(edge / peak);
    }

    Ok(DiscreteSpectrum {
        grid: grid.clone(),
        potential: v.values.clone(),
        e0,
        phi,
        ground_residual,
        neutral,
        extra_bound_states: extra,
        boundary_tail: tail,
    })
}

/// Block LOBPCG for the lowest eigenpairs of `H = −Δ + V`, preconditioned by an
/// inexact shift-invert `(H + s)^{-1}` (a few CG steps with a Fourier inner preconditioner).
///
/// Only the first `watched` pairs are driven to `opts.tol`; the rest are guard vectors.
fn lobpcg(
    grid: &Grid,
    v: &[f64],
    block: usize,
    watched: usize,
    center: [f64; 3],
    spread: f64,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    let vmin = v.iter().cloned().fold(0.0, f64::min);
    let shift = -vmin + 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Vec<f64>> = probes(grid, center, spread)
        .into_iter()
        .take(block)
        .map(|mut p| {
            for s in p.iter_mut() {
                *s += 1e-3 * rng.random_range(-1.0..1.0) * s.abs().max(1e-3);
            }
            p
        })
        .collect();
    while x.len() < block {
        x.push(
            (0..grid.len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        );
    }

    let precond = |r: &[f64]| -> Vec<f64> {
        let apply = |u: &[f64]| {
            let mut hu = apply_hamiltonian_block(grid, v, &[u.to_vec()]).remove(0);
            linalg::axpy(&mut hu, shift, u);
            hu
        };
        let inner = |u: &[f64]| grid.multiplier_real(u, |k2| 1.0 / (k2 + shift));
        let (y, _) = linalg::cg(apply, inner, r, None, 1e-14, opts.inner_iters);
        y
    };

    let mut p: Vec<Vec<f64>> = Vec::new();
    let mut theta = vec![0.0; block];
    let mut res = vec![f64::INFINITY; block];
    for it in 0..opts.max_iter {
        // Rayleigh–Ritz on span{X, W, P}
        let hx = apply_hamiltonian_block(grid, v, &x);
        if it == 0 {
            let (t, c) = rayleigh_ritz(&x, &hx)?;
            x = combine(&x, &c, block);
            theta = t[..block].to_vec();
            continue;
        }
        let mut r: Vec<Vec<f64>> = Vec::with_capacity(block);
        for i in 0..block {
            let ri: Vec<f64> = hx[i]
                .iter()
                .zip(&x[i])
                .map(|(a, b)| a - theta[i] * b)
                .collect();
            res[i] = linalg::norm(&ri) / linalg::norm(&x[i]);
            r.push(ri);
        }
        if res[..watched].iter().all(|&q| q <= 0.2 * opts.tol) {
            break;
        }
        let active: Vec<usize> = (0..block).filter(|&i| res[i] > 0.05 * opts.tol).collect();
        let w: Vec<Vec<f64>> = active.iter().map(|&i| precond(&r[i])).collect();
        // orthonormal search basis keeps the Ritz problem well conditioned near convergence
        let mut s = linalg::orthonormalize(x.clone(), linalg::dot, 0.0);
        let nx = s.len();
        let mut extra: Vec<Vec<f64>> = w;
        extra.extend(p.iter().cloned());
        let mut q = s.clone();
        q.extend(extra);
        s = linalg::orthonormalize(q, linalg::dot, 1e-10);
        if s.len() < nx {
            return Err(Error::Eigen("block lost rank".into()));
        }
        let hs = apply_hamiltonian_block(grid, v, &s);
        let (t, c) = rayleigh_ritz(&s, &hs)?;
        if t.len() < block {
            return Err(Error::Eigen("search space collapsed".into()));
        }
        let new_x = combine(&s, &c, block);
        // P = new X minus its X-component
        let mut cp = c.clone();
        for row in 0..block {
            for col in 0..cp.ncols() {
                cp[(row, col)] = 0.0;
            }
        }
        p = combine(&s, &cp, block)
            .into_iter()
            .filter(|q| linalg::norm(q) > 1e-14)
            .map(|mut q| {
                let nq = linalg::norm(&q);
                linalg::scale(&mut q, 1.0 / nq);
                q
            })
            .collect();
        x = new_x;
        theta = t[..block].to_vec();
    }
    let hx = apply_hamiltonian_block(grid, v, &x);
    for i in 0..block {
        let ri: Vec<f64> = hx[i]
            .iter()
            .zip(&x[i])
            .map(|(a, b)| a - theta[i] * b)
            .collect();
        res[i] = linalg::norm(&ri) / linalg::norm(&x[i]);
    }
    let h3 = grid.cell_volume().sqrt();
    for xi in x.iter_mut() {
        let nx = linalg::norm(xi) * h3;
        linalg::scale(xi, 1.0 / nx);
    }
    Ok((theta, x, res))
}

fn rayleigh_ritz(s: &[Vec<f64>], hs: &[Vec<f64>]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = s.len();
    let mut a = DMatrix::zeros(m, m);
    let mut b = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let aij = linalg::dot(&s[i], &hs[j]);
            let bij = linalg::dot(&s[i], &s[j]);
            a[(i, j)] = aij;
            a[(j, i)] = aij;
            b[(i, j)] = bij;
            b[(j, i)] = bij;
        }
    }
    sym_gen_eig(&a, &b)
}

fn combine(s: &[Vec<f64>], c: &DMatrix<f64>, k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|col| {
            let mut out = vec![0.0; s[0].len()];
            for (row, v) in s.iter().enumerate() {
                let cf = c[(row, col)];
                if cf != 0.0 {
                    linalg::axpy(&mut out, cf, v);
                }
            }
            out
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub max_order: usize,
    /// `min |Σ n_k e_k|` over nonzero integer vectors with `Σ|n_k| ≤ max_order`, `k = 0..N`.
    pub gauge: f64,
    pub argmin: Vec<i32>,
    pub near_resonances: Vec<(Vec<i32>, f64)>,
    pub threshold: f64,
}

/// Integer-relation gauge of the linear frequencies `(e₀, e₁, …, e_N)`.
pub fn resonance_report(spectrum: &DiscreteSpectrum, max_order: usize) -> ResonanceReport {
    let mut e = vec![spectrum.e0];
    e.extend(spectrum.energies());
    let threshold = 1e-3 * spectrum.e0;
    resonance_gauge(&e, max_order, threshold)
}

pub fn resonance_gauge(e: &[f64], max_order: usize, threshold: f64) -> ResonanceReport {
    let max_order = max_order.clamp(2, 4);
    let k = e.len();
    let mut best = f64::INFINITY;
    let mut arg = vec![0; k];
    let mut near = Vec::new();
    let mut n = vec![0i32; k];
    fn rec(
        pos: usize,
        budget: i32,
        n: &mut Vec<i32>,
        e: &[f64],
        best: &mut f64,
        arg: &mut Vec<i32>,
        near: &mut Vec<(Vec<i32>, f64)>,
        threshold: f64,
    ) {
        if pos == e.len() {
            if n.iter().all(|&c| c == 0) {
                return;
            }
            // count each ± pair once: first nonzero entry positive
            if n.iter().find(|&&c| c != 0).copied().unwrap_or(0) < 0 {
                return;
            }
            let val: f64 = n
                .iter()
                .zip(e)
                .map(|(&c, &x)| c as f64 * x)
                .sum::<f64>()
                .abs();
            if val < *best {
                *best = val;
                *arg = n.clone();
            }
            if val < threshold {
                near.push((n.clone(), val));
            }
            return;
        }
        for c in -budget..=budget {
            n[pos] = c;
            rec(pos + 1, budget - c.abs(), n, e, best, arg, near, threshold);
        }
        n[pos] = 0;
    }
    rec(
        0,
        max_order as i32,
        &mut n,
        e,
        &mut best,
        &mut arg,
        &mut near,
        threshold,
    );
    ResonanceReport {
        max_order,
        gauge: best,
        argmin: arg,
        near_resonances: near,
        threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauge_degenerate() {
        let r = resonance_gauge(&[1.0, 0.3, 0.3], 2, 1e-6);
        assert!(r.gauge < 1e-15);
        assert_eq!(r.argmin.iter().map(|c| c.abs()).sum::<i32>(), 2);
    }

    #[test]
    fn gauge_incommensurate_brute_force() {
        let e = [1.0, 0.2f64.sqrt()];
        let r = resonance_gauge(&e, 3, 1e-6);
        let mut brute = f64::INFINITY;
        for a in -3i32..=3 {
            for b in -3i32..=3 {
                if (a, b) != (0, 0) && a.abs() + b.abs() <= 3 {
                    brute = brute.min((a as f64 * e[0] + b as f64 * e[1]).abs());
                }
            }
        }
        assert!(r.gauge > 0.0);
        assert_eq!(r.gauge, brute);
    }

    #[test]
    fn gauge_monotone_in_order() {
        let e = [1.0, 0.37, 0.21];
        let g2 = resonance_gauge(&e, 2, 0.0).gauge;
        let g3 = resonance_gauge(&e, 3, 0.0).gauge;
        assert!(g3 <= g2);
    }

    #[test]
    fn clusters_chain() {
        let c = cluster_indices(&[0.5, 0.5 + 1e-9, 0.3, 0.1], 1e-6);
        assert_eq!(c, vec![vec![0, 1], vec![2], vec![3]]);
    }
}
