//! The spectral measure of `−Δ + V` on the sphere `|k| = h`, and its limiting-absorption oracle.

use num_complex::Complex64 as C64;
use std::f64::consts::PI;

use super::green::wavenumber;
use super::sphere::SphereQuadrature;
use super::waves::{distorted_transform, Interaction, LippmannSchwinger};
use crate::error::Result;
use crate::grid::Grid;

/// `C` in `Im⟨(−Δ + V − h² − i0)^{-1} P_c f, g⟩ = C h ∫_{S²} f̂(hσ) conj(ĝ(hσ)) dσ`
/// for `f̂(k) = ∫ f(x) e(x, k) dx`.
pub const MEASURE_CONSTANT: f64 = 1.0 / (16.0 * PI * PI);

/// Default ε ladder of the limiting-absorption oracle.
pub const EPS_LADDER: [f64; 3] = [4e-2, 2e-2, 1e-2];

/// `C h Re ∫ f̂(hσ) conj(ĝ(hσ)) dσ` by quadrature of distorted transforms.
pub fn spectral_measure_pairing(
    inter: &Interaction,
    h: f64,
    f: &[f64],
    g: &[f64],
    quad: &SphereQuadrature,
    tol: f64,
) -> Result<f64> {
    let (fh, _) = distorted_transform(inter, f, h, &quad.nodes, tol)?;
    let gh = if std::ptr::eq(f, g) {
        fh.clone()
    } else {
        distorted_transform(inter, g, h, &quad.nodes, tol)?.0
    };
    let s: f64 = fh
        .iter()
        .zip(&gh)
        .zip(&quad.weights)
        .map(|((a, b), w)| w * (a * b.conj()).re)
        .sum();
    Ok(MEASURE_CONSTANT * h * s)
}

/// `f − Σ_j ⟨f, u_j⟩ u_j` for orthonormal bound states `u_j`.
pub fn project_continuum(grid: &Grid, f: &[f64], bound: &[&[f64]]) -> Vec<f64> {
    let mut out = f.to_vec();
    for u in bound {
        let c = grid.dot(f, u) / grid.dot(u, u);
        out.iter_mut().zip(u.iter()).for_each(|(o, b)| *o -= c * b);
    }
    out
}

/// `Im⟨(−Δ + V − h² − iε)^{-1} f, g⟩` by a full-grid Lippmann–Schwinger solve.
pub fn absorbed_pairing(
    inter: &Interaction,
    h: f64,
    eps: f64,
    f: &[f64],
    g: &[f64],
    tol: f64,
) -> Result<f64> {
    let kappa = wavenumber(C64::new(h * h, eps), 1.0);
    let ls = LippmannSchwinger::new(inter, kappa, tol).with_full();
    let fc: Vec<C64> = f.iter().map(|&x| C64::new(x, 0.0)).collect();
    let (u, _) = ls.resolvent_full(&fc)?;
    Ok(inter.grid.dot_cr(&u, g).im)
}

/// Quadratic Richardson extrapolation to ε = 0 from values at `ε, 2ε, 4ε`.
pub fn richardson(v_4e: f64, v_2e: f64, v_e: f64) -> f64 {
    (8.0 * v_e - 6.0 * v_2e + v_4e) / 3.0
}

/// Limiting-absorption value of `Im⟨(−Δ + V − h² − i0)^{-1} P_c f, g⟩` over the ε ladder; `f` and
/// `g` are projected off the given bound states first.
pub fn limiting_absorption_pairing(
    inter: &Interaction,
    bound: &[&[f64]],
    h: f64,
    f: &[f64],
    g: &[f64],
    tol: f64,
) -> Result<(f64, [f64; 3])> {
    let fc = project_continuum(&inter.grid, f, bound);
    let gc = project_continuum(&inter.grid, g, bound);
    let mut v = [0.0; 3];
    for (vi, &e) in v.iter_mut().zip(&EPS_LADDER) {
        *vi = absorbed_pairing(inter, h, e, &fc, &gc, tol)?;
    }
    Ok((richardson(v[0], v[1], v[2]), v))
}
