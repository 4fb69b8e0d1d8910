//! Free-space Helmholtz convolutions on a box of grid nodes by the truncated-kernel method.
//!
//! The kernel `G(r) = e^{iκr}/(4πr)` is cut off at a radius `R` exceeding the grid diameter, so
//! its exact Fourier transform is an entire function of `|ξ|`; a periodic convolution on a
//! zero-padded grid of side `≥ D + R` then reproduces the aperiodic convolution.

use num_complex::Complex64 as C64;

use crate::fft::{frequency, next_smooth, Fft3};
use crate::grid::Grid;

/// Axis-aligned block of grid nodes `lo[a] .. lo[a] + dims[a]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubBox {
    pub lo: [usize; 3],
    pub dims: [usize; 3],
}

impl SubBox {
    pub fn full(grid: &Grid) -> Self {
        let n = grid.n();
        SubBox {
            lo: [0; 3],
            dims: [n; 3],
        }
    }

    /// Bounding box of the nodes where `|f| > cut · max|f|`, over all given fields.
    pub fn support(grid: &Grid, fields: &[&[f64]], cut: f64) -> Self {
        let n = grid.n();
        let mut lo = [n; 3];
        let mut hi = [0usize; 3];
        for f in fields {
            let m = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if m == 0.0 {
                continue;
            }
            for (idx, v) in f.iter().enumerate() {
                if v.abs() > cut * m {
                    let ijk = [idx / (n * n), (idx / n) % n, idx % n];
                    for a in 0..3 {
                        lo[a] = lo[a].min(ijk[a]);
                        hi[a] = hi[a].max(ijk[a]);
                    }
                }
            }
        }
        if lo[0] > hi[0] {
            return SubBox {
                lo: [n / 2; 3],
                dims: [1; 3],
            };
        }
        SubBox {
            lo,
            dims: [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1],
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid index of box-local node `l`.
    pub fn global(&self, grid: &Grid, l: usize) -> usize {
        let [_, d1, d2] = self.dims;
        let i = l / (d1 * d2);
        let j = (l / d2) % d1;
        let k = l % d2;
        grid.index(self.lo[0] + i, self.lo[1] + j, self.lo[2] + k)
    }

    pub fn indices(&self, grid: &Grid) -> Vec<usize> {
        (0..self.len()).map(|l| self.global(grid, l)).collect()
    }

    pub fn points(&self, grid: &Grid) -> Vec<[f64; 3]> {
        self.indices(grid)
            .into_iter()
            .map(|g| grid.point(g))
            .collect()
    }

    pub fn restrict<T: Copy>(&self, grid: &Grid, f: &[T]) -> Vec<T> {
        self.indices(grid).into_iter().map(|g| f[g]).collect()
    }

    pub fn extend<T: Copy + Default>(&self, grid: &Grid, f: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); grid.len()];
        for (l, g) in self.indices(grid).into_iter().enumerate() {
            out[g] = f[l];
        }
        out
    }

    /// Largest node-to-node distance.
    pub fn diameter(&self, h: f64) -> f64 {
        self.dims
            .iter()
            .map(|&d| ((d - 1) as f64 * h).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, grid: &Grid, idx: usize) -> bool {
        let n = grid.n();
        let ijk = [idx / (n * n), (idx / n) % n, idx % n];
        (0..3).all(|a| ijk[a] >= self.lo[a] && ijk[a] < self.lo[a] + self.dims[a])
    }
}

/// Wavenumber with `Im κ ≥ 0` from `κ²`; when `κ²` is real and positive, `side` selects the
/// boundary value `κ² ± i0` (`side > 0` outgoing, `side < 0` incoming).
pub fn wavenumber(kappa2: C64, side: f64) -> C64 {
    let mut k = kappa2.sqrt();
    if k.im < 0.0 {
        k = -k;
    }
    if k.im == 0.0 && k.re > 0.0 && side < 0.0 {
        k = -k;
    }
    k
}

/// Fourier transform of `e^{iκr}/(4πr)·1_{r<R}` at radial frequency `s`.
pub fn truncated_kernel(s: f64, kappa: C64, r: f64) -> C64 {
    let i = C64::new(0.0, 1.0);
    let e = (i * kappa * r).exp();
    let k2 = kappa * kappa;
    if s * r < 1e-6 {
        return (1.0 - e * (1.0 - i * kappa * r)) / (-k2);
    }
    let den = s * s - k2;
    if den.norm() < 1e-9 * (1.0 + k2.norm()) {
        // removable singularity at s = κ
        let (sn, cs) = (s * r).sin_cos();
        let dn = -e * (-r * sn - i * kappa * (r * cs / s - sn / (s * s)));
        return dn / (2.0 * s);
    }
    let (sn, cs) = (s * r).sin_cos();
    (1.0 - e * (cs - i * kappa * sn / s)) / den
}

/// Discrete free-space kernel `K[m]`, `m ∈ [0, n)³`, of one grid and wavenumber.
///
/// `K = IDFT(Ĝ_R)` on a padded grid with `R` above the grid diameter, so `Σ_m K[m] u[x − m]` is the
/// aperiodic convolution of the band-limited interpolant of `u`; every box convolution on the
/// grid is a restriction of this one operator.
#[derive(Clone)]
pub struct GreenKernel {
    pub kappa: C64,
    pub radius: f64,
    n: usize,
    values: Vec<C64>,
}

impl std::fmt::Debug for GreenKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "GreenKernel(κ = {}, n = {}, R = {})",
            self.kappa, self.n, self.radius
        )
    }
}

impl GreenKernel {
    pub fn new(grid: &Grid, kappa: C64) -> Self {
        let n = grid.n();
        let h = grid.spacing();
        let radius = 3f64.sqrt() * (n - 1) as f64 * h + h;
        let m = next_smooth((((n - 1) as f64 * h + radius) / h).ceil() as usize + 2);
        let fft = Fft3::cube(m);
        let f: Vec<f64> = (0..m).map(|i| frequency(i, m, m as f64 * h)).collect();
        let mut buf = Vec::with_capacity(m * m * m);
        for a in &f {
            for b in &f {
                for c in &f {
                    buf.push(truncated_kernel(
                        (a * a + b * b + c * c).sqrt(),
                        kappa,
                        radius,
                    ));
                }
            }
        }
        fft.inverse(&mut buf);
        let mut values = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                values.extend_from_slice(&buf[(i * m + j) * m..(i * m + j) * m + n]);
            }
        }
        GreenKernel {
            kappa,
            radius,
            n,
            values,
        }
    }

    /// `K` at the offset `(i, j, k)` in grid steps (any signs).
    pub fn at(&self, i: isize, j: isize, k: isize) -> C64 {
        let n = self.n;
        self.values[(i.unsigned_abs() * n + j.unsigned_abs()) * n + k.unsigned_abs()]
    }
}

/// `u ↦ Σ_y K[x − y] u(y)` for `x, y` in a box.
pub struct HelmholtzConv {
    pub sub: SubBox,
    pub kappa: C64,
    padded: [usize; 3],
    fft: Fft3,
    kernel: Vec<C64>,
}

impl std::fmt::Debug for HelmholtzConv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "HelmholtzConv(κ = {}, box {:?}, padded {:?})",
            self.kappa, self.sub.dims, self.padded
        )
    }
}

impl HelmholtzConv {
    pub fn new(kernel: &GreenKernel, sub: &SubBox) -> Self {
        let padded = [0, 1, 2].map(|a| next_smooth(2 * sub.dims[a] - 1));
        let fft = Fft3::new(padded[0], padded[1], padded[2]);
        let off = |i: usize, p: usize, d: usize| -> Option<isize> {
            if i < d {
                Some(i as isize)
            } else if i + d > p {
                Some(i as isize - p as isize)
            } else {
                None
            }
        };
        let [p0, p1, p2] = padded;
        let mut k = vec![C64::new(0.0, 0.0); p0 * p1 * p2];
        for i in 0..p0 {
            let Some(a) = off(i, p0, sub.dims[0]) else {
                continue;
            };
            for j in 0..p1 {
                let Some(b) = off(j, p1, sub.dims[1]) else {
                    continue;
                };
                for l in 0..p2 {
                    let Some(c) = off(l, p2, sub.dims[2]) else {
                        continue;
                    };
                    k[(i * p1 + j) * p2 + l] = kernel.at(a, b, c);
                }
            }
        }
        fft.forward(&mut k);
        HelmholtzConv {
            sub: sub.clone(),
            kappa: kernel.kappa,
            padded,
            fft,
            kernel: k,
        }
    }

    pub fn padded_dims(&self) -> [usize; 3] {
        self.padded
    }

    pub fn apply(&self, u: &[C64]) -> Vec<C64> {
        let [d0, d1, d2] = self.sub.dims;
        let [_, m1, m2] = self.padded;
        assert_eq!(u.len(), d0 * d1 * d2, "box field length");
        let mut buf = vec![C64::new(0.0, 0.0); self.fft.len()];
        for i in 0..d0 {
            for j in 0..d1 {
                let src = (i * d1 + j) * d2;
                let dst = (i * m1 + j) * m2;
                buf[dst..dst + d2].copy_from_slice(&u[src..src + d2]);
            }
        }
        self.fft.forward(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel) {
            *b *= k;
        }
        self.fft.inverse(&mut buf);
        let mut out = vec![C64::new(0.0, 0.0); u.len()];
        for i in 0..d0 {
            for j in 0..d1 {
                let src = (i * m1 + j) * m2;
                let dst = (i * d1 + j) * d2;
                out[dst..dst + d2].copy_from_slice(&buf[src..src + d2]);
            }
        }
        out
    }
}
