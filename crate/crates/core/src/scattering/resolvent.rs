//! `(L(λ) + iμ − ε)^{-1} P_c` with outgoing boundary behaviour.
//!
//! `L = L₀ + W` with `L₀ = [[0, −Δ+λ], [−(−Δ+λ), 0]]` diagonal on `v± = (1, ±i)/√2`:
//! `(L₀ + iμ − ε)^{-1} = −i G₊ ⊕ i G₋`, `G± = (−Δ − κ±²)^{-1}`, `κ₊² = −(λ+μ) − iε`, `κ₋² = μ − λ + iε`.
//! The full operator is inverted from the second-kind equation `u + G W u = G P_c f`.

use num_complex::Complex64 as C64;
use std::f64::consts::FRAC_1_SQRT_2;

use super::green::{wavenumber, GreenKernel, HelmholtzConv, SubBox};
use crate::error::{Error, Result};
use crate::grid::{ComplexPair, FieldPair};
use crate::linalg;
use crate::linearized::{LinearizedOps, RieszProjector};

const RESTART: usize = 80;
const MAX_ITER: usize = 3000;

#[derive(Clone, Debug)]
pub struct ResolventSolution {
    pub u: ComplexPair,
    /// Relative residual of the solved system.
    pub residual: f64,
    pub iterations: usize,
}

/// `G = (L₀ + iμ − ε)^{-1}` on the full grid.
struct FreeResolvent {
    plus: HelmholtzConv,
    minus: HelmholtzConv,
}

impl FreeResolvent {
    fn new(ops: &LinearizedOps, mu: f64, eps: f64) -> Self {
        let g = ops.grid();
        let lam = ops.lambda();
        let kp = wavenumber(C64::new(-(lam + mu), -eps), -1.0);
        let km = wavenumber(C64::new(mu - lam, eps), 1.0);
        let full = SubBox::full(g);
        FreeResolvent {
            plus: HelmholtzConv::new(&GreenKernel::new(g, kp), &full),
            minus: HelmholtzConv::new(&GreenKernel::new(g, km), &full),
        }
    }

    fn apply(&self, f1: &[C64], f2: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let i = C64::new(0.0, 1.0);
        let a: Vec<C64> = f1
            .iter()
            .zip(f2)
            .map(|(x, y)| (x - i * y) * FRAC_1_SQRT_2)
            .collect();
        let b: Vec<C64> = f1
            .iter()
            .zip(f2)
            .map(|(x, y)| (x + i * y) * FRAC_1_SQRT_2)
            .collect();
        let ga = self.plus.apply(&a);
        let gb = self.minus.apply(&b);
        let u1 = ga
            .iter()
            .zip(&gb)
            .map(|(p, m)| (-i * p + i * m) * FRAC_1_SQRT_2)
            .collect();
        let u2 = ga
            .iter()
            .zip(&gb)
            .map(|(p, m)| (p + m) * FRAC_1_SQRT_2)
            .collect();
        (u1, u2)
    }
}

fn split(p: &ComplexPair) -> (FieldPair, FieldPair) {
    let g = &p.grid;
    (
        FieldPair {
            grid: g.clone(),
            first: p.first.iter().map(|c| c.re).collect(),
            second: p.second.iter().map(|c| c.re).collect(),
        },
        FieldPair {
            grid: g.clone(),
            first: p.first.iter().map(|c| c.im).collect(),
            second: p.second.iter().map(|c| c.im).collect(),
        },
    )
}

fn join(re: &FieldPair, im: &FieldPair) -> ComplexPair {
    ComplexPair {
        grid: re.grid.clone(),
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

/// `L^{-1} P_c f` from `L₋u₂ = g₁`, `−L₊u₁ = g₂` (both blocks invertible on `Ran P_c`).
fn zero_shift(ops: &LinearizedOps, g: &ComplexPair, tol: f64) -> Result<ComplexPair> {
    let (re, im) = split(g);
    let solve = |p: &FieldPair| -> Result<FieldPair> {
        let u1: Vec<f64> = ops
            .solve_l_plus(&p.second, tol)?
            .iter()
            .map(|x| -x)
            .collect();
        let u2 = ops.solve_l_minus(&p.first, tol)?;
        Ok(FieldPair {
            grid: p.grid.clone(),
            first: u1,
            second: u2,
        })
    };
    Ok(join(&solve(&re)?, &solve(&im)?))
}

/// Solves `(L + iμ − ε) u = P_c f` and returns `P_c u`; `ε = 0` gives the outgoing boundary value.
pub fn resolvent_apply(
    ops: &LinearizedOps,
    p: &RieszProjector,
    mu: f64,
    eps: f64,
    f: &ComplexPair,
    tol: f64,
) -> Result<ResolventSolution> {
    if !(eps >= 0.0) {
        return Err(Error::Config(format!(
            "resolvent regularization must be nonnegative, got {eps}"
        )));
    }
    ops.grid().ensure_same(&f.grid)?;
    let g = p.project_continuous_complex(f);
    let gn = g.norm();
    if gn == 0.0 {
        return Ok(ResolventSolution {
            u: ComplexPair::zeros(ops.grid()),
            residual: 0.0,
            iterations: 0,
        });
    }
    if mu == 0.0 && eps == 0.0 {
        let u = p.project_continuous_complex(&zero_shift(ops, &g, tol)?);
        let mut r = ops.apply_complex(&u);
        r.axpy(C64::new(-1.0, 0.0), &g);
        return Ok(ResolventSolution {
            residual: r.norm() / gn,
            u,
            iterations: 0,
        });
    }
    let s = &ops.soliton;
    let w_minus: Vec<f64> = s
        .potential
        .iter()
        .zip(&s.phi)
        .map(|(v, q)| v + q * q)
        .collect();
    let w_plus: Vec<f64> = s
        .potential
        .iter()
        .zip(&s.phi)
        .map(|(v, q)| v + 3.0 * q * q)
        .collect();
    let free = FreeResolvent::new(ops, mu, eps);
    let n = g.first.len();
    let apply = |x: &[C64]| {
        let (u1, u2) = x.split_at(n);
        let w1: Vec<C64> = u2.iter().zip(&w_minus).map(|(a, w)| a * w).collect();
        let w2: Vec<C64> = u1.iter().zip(&w_plus).map(|(a, w)| -a * w).collect();
        let (g1, g2) = free.apply(&w1, &w2);
        let mut out = x.to_vec();
        out[..n].iter_mut().zip(g1).for_each(|(o, v)| *o += v);
        out[n..].iter_mut().zip(g2).for_each(|(o, v)| *o += v);
        out
    };
    let (b1, b2) = free.apply(&g.first, &g.second);
    let b: Vec<C64> = b1.into_iter().chain(b2).collect();
    let (x, st) = linalg::gmres(apply, |r| r.to_vec(), &b, None, tol, RESTART, MAX_ITER);
    if !st.converged {
        return Err(Error::Resolvent(st.residual));
    }
    let (u1, u2) = x.split_at(n);
    let u = ComplexPair {
        grid: g.grid.clone(),
        first: u1.to_vec(),
        second: u2.to_vec(),
    };
    Ok(ResolventSolution {
        u: p.project_continuous_complex(&u),
        residual: st.residual,
        iterations: st.iterations,
    })
}
