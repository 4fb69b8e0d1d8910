//! The table `Ψ_{m,n}(σ)`, the Fermi Golden Rule form `Γ(z, z̄)` and its positivity scan.

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sphere::SphereQuadrature;
use super::waves::{distorted_transform, Interaction};
use crate::error::{Error, Result};
use crate::spectrum::DiscreteSpectrum;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FgrTable {
    pub quadrature: SphereQuadrature,
    pub n_modes: usize,
    /// Unordered pairs `m ≤ n`, in row-major order.
    pub pairs: Vec<(usize, usize)>,
    /// `|k|_{m,n} = (e₀ − e_m − e_n)^{1/2}` per pair.
    pub k_mn: Vec<f64>,
    /// `Ψ_{m,n}(σ_j)` per pair.
    pub psi: Vec<Vec<C64>>,
    /// Krylov iterations per pair.
    pub iterations: Vec<usize>,
}

impl FgrTable {
    fn pair_index(&self, m: usize, n: usize) -> usize {
        let (a, b) = if m <= n { (m, n) } else { (n, m) };
        a * self.n_modes - a * (a + 1) / 2 + b
    }

    /// `Ψ_{m,n}` at every node; the same storage serves `(m, n)` and `(n, m)`.
    pub fn psi(&self, m: usize, n: usize) -> &[C64] {
        &self.psi[self.pair_index(m, n)]
    }

    /// `‖Ψ_{m,n}‖_{L²(S²)}` per pair.
    pub fn norms(&self) -> Vec<f64> {
        self.psi
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&self.quadrature.weights)
                    .map(|(v, w)| w * v.norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// Table with prescribed values, for tests and synthetic scans.
    pub fn synthetic(
        quadrature: SphereQuadrature,
        n_modes: usize,
        f: impl Fn(usize, usize, [f64; 3]) -> C64,
    ) -> Self {
        let pairs: Vec<(usize, usize)> = (0..n_modes)
            .flat_map(|m| (m..n_modes).map(move |n| (m, n)))
            .collect();
        let psi = pairs
            .iter()
            .map(|&(m, n)| quadrature.nodes.iter().map(|&s| f(m, n, s)).collect())
            .collect();
        FgrTable {
            n_modes,
            k_mn: vec![1.0; pairs.len()],
            iterations: vec![0; pairs.len()],
            pairs,
            psi,
            quadrature,
        }
    }
}

pub fn build_fgr_table(
    spectrum: &DiscreteSpectrum,
    quad: &SphereQuadrature,
    tol: f64,
) -> Result<FgrTable> {
    let n = spectrum.n_modes();
    let e = spectrum.energies();
    if let Some(l) = (0..n).find(|&l| 2.0 * e[l] >= spectrum.e0) {
        return Err(Error::Condition(format!(
            "2 e_{} = {:.6} >= e0 = {:.6}: mode pair does not reach the continuum",
            l + 1,
            2.0 * e[l],
            spectrum.e0
        )));
    }
    let grid = &spectrum.grid;
    let inter = Interaction::new(grid, &spectrum.potential)?;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|m| (m..n).map(move |k| (m, k))).collect();
    let k_mn: Vec<f64> = pairs
        .iter()
        .map(|&(m, k)| (spectrum.e0 - e[m] - e[k]).sqrt())
        .collect();
    let solved: Vec<Result<(Vec<C64>, usize)>> = pairs
        .par_iter()
        .zip(&k_mn)
        .map(|(&(m, k), &r)| {
            let rho: Vec<f64> = spectrum
                .phi
                .iter()
                .zip(&spectrum.neutral[m].xi_lin)
                .zip(&spectrum.neutral[k].xi_lin)
                .map(|((p, a), b)| p * a * b)
                .collect();
            let (vals, st) = distorted_transform(&inter, &rho, r, &quad.nodes, tol)?;
            Ok((vals, st.iterations))
        })
        .collect();
    let mut psi = Vec::with_capacity(pairs.len());
    let mut iterations = Vec::with_capacity(pairs.len());
    for s in solved {
        let (v, it) = s?;
        psi.push(v);
        iterations.push(it);
    }
    Ok(FgrTable {
        quadrature: quad.clone(),
        n_modes: n,
        pairs,
        k_mn,
        psi,
        iterations,
    })
}

/// `s(σ_j) = Σ_{m,n} Ψ_{m,n}(σ_j) z_m z_n` at every node.
fn quadratic_amplitude(table: &FgrTable, z: &[C64]) -> Vec<C64> {
    let mut s = vec![C64::new(0.0, 0.0); table.quadrature.len()];
    for (p, &(m, n)) in table.pairs.iter().enumerate() {
        let c = if m == n {
            z[m] * z[n]
        } else {
            2.0 * z[m] * z[n]
        };
        for (sj, v) in s.iter_mut().zip(&table.psi[p]) {
            *sj += c * v;
        }
    }
    s
}

/// `Γ(z, z̄) = ‖Σ_{m,n} Ψ_{m,n}(σ) z_m z_n‖²_{L²(S²)}`.
pub fn gamma_form(table: &FgrTable, z: &[C64]) -> f64 {
    assert_eq!(z.len(), table.n_modes, "mode count");
    quadratic_amplitude(table, z)
        .iter()
        .zip(&table.quadrature.weights)
        .map(|(s, w)| w * s.norm_sqr())
        .sum()
}

/// Phase average of `Γ` over the flow `z_k ↦ e^{−iE_k t} z_k`: cross terms between pairs whose
/// shells `|k|²_{m,n}` differ by more than `tol` are dropped.
pub fn gamma_resonant(table: &FgrTable, z: &[C64], tol: f64) -> f64 {
    assert_eq!(z.len(), table.n_modes, "mode count");
    let amp: Vec<Vec<C64>> = table
        .pairs
        .iter()
        .zip(&table.psi)
        .map(|(&(m, n), psi)| {
            let c = if m == n {
                z[m] * z[n]
            } else {
                2.0 * z[m] * z[n]
            };
            psi.iter().map(|v| c * v).collect()
        })
        .collect();
    let mut g = 0.0;
    for (p, kp) in table.k_mn.iter().enumerate() {
        for (q, kq) in table.k_mn.iter().enumerate() {
            if (kp * kp - kq * kq).abs() > tol {
                continue;
            }
            g += amp[p]
                .iter()
                .zip(&amp[q])
                .zip(&table.quadrature.weights)
                .map(|((a, b), w)| w * (a * b.conj()).re)
                .sum::<f64>();
        }
    }
    g
}

/// Wirtinger gradient `2∂Γ/∂z̄`.
fn gamma_gradient(table: &FgrTable, z: &[C64]) -> Vec<C64> {
    let s = quadratic_amplitude(table, z);
    let mut g = vec![C64::new(0.0, 0.0); z.len()];
    for (p, &(m, n)) in table.pairs.iter().enumerate() {
        for (j, (v, w)) in table.psi[p]
            .iter()
            .zip(&table.quadrature.weights)
            .enumerate()
        {
            // ∂s/∂z_m = 2 Σ_n Ψ_{mn} z_n
            let t = w * s[j] * v.conj();
            if m == n {
                g[m] += 4.0 * t * z[m].conj();
            } else {
                g[m] += 4.0 * t * z[n].conj();
                g[n] += 4.0 * t * z[m].conj();
            }
        }
    }
    g
}

fn normalize(z: &mut [C64]) {
    let n = z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    z.iter_mut().for_each(|c| *c /= n);
}

/// Projected gradient descent of `Γ` on the unit sphere of `ℂ^N`.
fn descend(table: &FgrTable, z0: &[C64], steps: usize) -> (Vec<C64>, f64) {
    let mut z = z0.to_vec();
    let mut f = gamma_form(table, &z);
    let mut t = 0.1;
    for _ in 0..steps {
        let mut g = gamma_gradient(table, &z);
        let radial: C64 = g.iter().zip(&z).map(|(a, b)| a * b.conj()).sum();
        for (gi, zi) in g.iter_mut().zip(&z) {
            *gi -= radial.re * zi;
        }
        let gn = g.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if gn < 1e-14 * (1.0 + f) {
            break;
        }
        loop {
            let mut trial: Vec<C64> = z
                .iter()
                .zip(&g)
                .map(|(a, b)| a - t * b / (1.0 + f))
                .collect();
            normalize(&mut trial);
            let ft = gamma_form(table, &trial);
            if ft < f {
                z = trial;
                f = ft;
                t *= 1.5;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return (z, f);
            }
        }
    }
    (z, f)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanReport {
    /// Sampled-and-refined lower bound of `Γ` on `|z| = 1`.
    pub min: f64,
    pub max: f64,
    pub argmin: Vec<C64>,
    pub samples: usize,
    /// Minimum over unit vectors supported in each degenerate cluster.
    pub cluster_min: Vec<f64>,
    pub below_floor: bool,
}

fn haar_samples(n_modes: usize, count: usize, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut z: Vec<C64> = (0..n_modes)
                .map(|_| {
                    C64::new(
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                    )
                })
                .collect();
            normalize(&mut z);
            z
        })
        .collect()
}

fn scan_subspace(
    table: &FgrTable,
    modes: &[usize],
    samples: usize,
    seed: u64,
) -> (f64, f64, Vec<C64>) {
    let embed = |w: &[C64]| {
        let mut z = vec![C64::new(0.0, 0.0); table.n_modes];
        for (k, &m) in modes.iter().enumerate() {
            z[m] = w[k];
        }
        z
    };
    let zs: Vec<Vec<C64>> = haar_samples(modes.len(), samples, seed)
        .iter()
        .map(|w| embed(w))
        .collect();
    let vals: Vec<f64> = zs.par_iter().map(|z| gamma_form(table, z)).collect();
    let max = vals.iter().cloned().fold(0.0, f64::max);
    // refine from the minimizer of every prefix of length samples/2^j ≥ 100, so that a larger
    // sample set refines from a superset of starting points
    let mut best = (f64::INFINITY, Vec::new());
    let mut len = samples;
    loop {
        let (i, v) = vals[..len]
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |a, (i, &v)| if v < a.1 { (i, v) } else { a },
            );
        if v < best.0 {
            best = (v, zs[i].clone());
        }
        let (z, f) = descend(table, &zs[i], 200);
        if f < best.0 {
            best = (f, z);
        }
        if len / 2 < 100 {
            break;
        }
        len /= 2;
    }
    (best.0, max, best.1)
}

/// Lower bound of `Γ(z, z̄)/|z|⁴` from Haar-uniform samples plus a local descent.
pub fn fgr_positivity_scan(
    table: &FgrTable,
    clusters: &[Vec<usize>],
    samples: usize,
    seed: u64,
    floor: f64,
) -> Result<ScanReport> {
    if samples < 100 {
        return Err(Error::Config(format!(
            "positivity scan needs at least 100 samples, got {samples}"
        )));
    }
    let all: Vec<usize> = (0..table.n_modes).collect();
    let (min, max, argmin) = scan_subspace(table, &all, samples, seed);
    let cluster_min = clusters
        .iter()
        .map(|c| scan_subspace(table, c, samples, seed).0)
        .collect();
    Ok(ScanReport {
        min,
        max,
        argmin,
        samples,
        cluster_min,
        below_floor: min < floor,
    })
}
