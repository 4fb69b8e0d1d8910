//! Krylov solvers on flat sample vectors and small dense helpers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn scale(y: &mut [f64], a: f64) {
    for v in y.iter_mut() {
        *v *= a;
    }
}

pub fn cdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn cnorm(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Preconditioned conjugate gradients for a symmetric positive operator.
///
/// Stops when `‖b − Ax‖ ≤ tol·‖b‖` (Euclidean).
pub fn cg<A, P>(
    apply: A,
    precond: P,
    b: &[f64],
    x0: Option<Vec<f64>>,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, SolveStats)
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let bn = norm(b);
    let mut x = x0.unwrap_or_else(|| vec![0.0; b.len()]);
    if bn == 0.0 {
        return (
            vec![0.0; b.len()],
            SolveStats {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        );
    }
    let mut r: Vec<f64> = {
        let ax = apply(&x);
        b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
    };
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = norm(&r) / bn;
    let mut it = 0;
    while res > tol && it < max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        res = norm(&r) / bn;
        it += 1;
        if res <= tol {
            break;
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        // guard against drift of the recursive residual
        if it % 50 == 0 {
            let ax = apply(&x);
            r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            res = norm(&r) / bn;
        }
    }
    let ax = apply(&x);
    let true_res = b
        .iter()
        .zip(&ax)
        .map(|(bi, ai)| (bi - ai).powi(2))
        .sum::<f64>()
        .sqrt()
        / bn;
    (
        x,
        SolveStats {
            iterations: it,
            residual: true_res,
            converged: true_res <= tol * 10.0,
        },
    )
}

/// Restarted GMRES with right preconditioning, `A M y = b`, `x = M y`.
pub fn gmres<A, P>(
    apply: A,
    precond: P,
    b: &[C64],
    x0: Option<Vec<C64>>,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> (Vec<C64>, SolveStats)
where
    A: Fn(&[C64]) -> Vec<C64>,
    P: Fn(&[C64]) -> Vec<C64>,
{
    let n = b.len();
    let bn = cnorm(b);
    let zero = C64::new(0.0, 0.0);
    if bn == 0.0 {
        return (
            vec![zero; n],
            SolveStats {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        );
    }
    let mut x = x0.unwrap_or_else(|| vec![zero; n]);
    let mut total = 0;
    let mut res;
    loop {
        let ax = apply(&x);
        let r: Vec<C64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = cnorm(&r);
        res = beta / bn;
        if res <= tol || total >= max_iter {
            break;
        }
        let m = restart.min(max_iter - total).max(1);
        let mut v: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|ri| ri / beta).collect());
        let mut zs: Vec<Vec<C64>> = Vec::with_capacity(m);
        let mut h = vec![vec![zero; m]; m + 1];
        let mut cs = vec![zero; m];
        let mut sn = vec![zero; m];
        let mut g = vec![zero; m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for j in 0..m {
            let zj = precond(&v[j]);
            let mut w = apply(&zj);
            zs.push(zj);
            for _pass in 0..2 {
                for (i, vi) in v.iter().enumerate() {
                    let hij = cdot(vi, &w);
                    h[i][j] += hij;
                    for (wk, vk) in w.iter_mut().zip(vi) {
                        *wk -= hij * vk;
                    }
                }
            }
            let hn = cnorm(&w);
            h[j + 1][j] = C64::new(hn, 0.0);
            for i in 0..j {
                let t = cs[i].conj() * h[i][j] + sn[i].conj() * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let a = h[j][j];
            let bb = h[j + 1][j];
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if den == 0.0 {
                cs[j] = C64::new(1.0, 0.0);
                sn[j] = zero;
            } else {
                cs[j] = a / den;
                sn[j] = bb / den;
            }
            h[j][j] = cs[j].conj() * a + sn[j].conj() * bb;
            h[j + 1][j] = zero;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j].conj() * g[j];
            total += 1;
            k_used = j + 1;
            if g[j + 1].norm() / bn <= tol || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / hn).collect());
        }
        let mut y = vec![zero; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for l in i + 1..k_used {
                s -= h[i][l] * y[l];
            }
            y[i] = s / h[i][i];
        }
        for (l, yl) in y.iter().enumerate() {
            for (xi, zi) in x.iter_mut().zip(&zs[l]) {
                *xi += yl * zi;
            }
        }
    }
    (
        x,
        SolveStats {
            iterations: total,
            residual: res,
            converged: res <= tol,
        },
    )
}

/// Generalized symmetric eigenproblem `A c = θ B c` with `B` positive definite.
///
/// Returns eigenvalues ascending and B-orthonormal eigenvectors as columns.
pub fn sym_gen_eig(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let bs = (b + b.transpose()) * 0.5;
    let as_ = (a + a.transpose()) * 0.5;
    // whiten with the spectral decomposition of B, dropping near-null directions
    let eb = nalgebra::SymmetricEigen::new(bs);
    let bmax = eb.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if !(bmax > 0.0) {
        return Err(Error::Eigen("Gram matrix is not positive".into()));
    }
    let keep: Vec<usize> = (0..n)
        .filter(|&i| eb.eigenvalues[i] > 1e-13 * bmax)
        .collect();
    let mut w = DMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let s = 1.0 / eb.eigenvalues[i].sqrt();
        for r in 0..n {
            w[(r, c)] = eb.eigenvectors[(r, i)] * s;
        }
    }
    let red = w.transpose() * &as_ * &w;
    let red = (&red + red.transpose()) * 0.5;
    let e = nalgebra::SymmetricEigen::new(red);
    let mut order: Vec<usize> = (0..keep.len()).collect();
    order.sort_by(|&i, &j| e.eigenvalues[i].partial_cmp(&e.eigenvalues[j]).unwrap());
    let vecs = &w * &e.eigenvectors;
    let mut out = DMatrix::zeros(n, keep.len());
    let mut vals = Vec::with_capacity(keep.len());
    for (c, &i) in order.iter().enumerate() {
        vals.push(e.eigenvalues[i]);
        out.set_column(c, &vecs.column(i));
    }
    Ok((vals, out))
}

/// Solves a small complex linear system, returning the solution and the smallest singular value.
pub fn solve_small(a: &DMatrix<C64>, b: &DVector<C64>) -> Result<(DVector<C64>, f64)> {
    let svd = a.clone().svd(false, false);
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let lu = a.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::Degeneracy("singular small system".into()))?;
    Ok((x, smin))
}

/// Modified Gram–Schmidt of column vectors under a caller-supplied inner product.
/// Vectors whose remaining norm falls below `drop_tol` times their initial norm are discarded.
pub fn orthonormalize<F>(vs: Vec<Vec<f64>>, ip: F, drop_tol: f64) -> Vec<Vec<f64>>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mut v in vs {
        let n0 = ip(&v, &v).sqrt();
        if n0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for u in &out {
                let c = ip(u, &v);
                axpy(&mut v, -c, u);
            }
        }
        let n1 = ip(&v, &v).sqrt();
        if n1 > drop_tol * n0 {
            scale(&mut v, 1.0 / n1);
            out.push(v);
        }
    }
    out
}
