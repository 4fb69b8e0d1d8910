//! Three-dimensional complex FFT built from one-dimensional rustfft plans.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

/// Row-major `nx × ny × nz` transform; the last axis is contiguous.
pub struct Fft3 {
    dims: [usize; 3],
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft3({:?})", self.dims)
    }
}

impl Fft3 {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = [
            planner.plan_fft_forward(nx),
            planner.plan_fft_forward(ny),
            planner.plan_fft_forward(nz),
        ];
        let inv = [
            planner.plan_fft_inverse(nx),
            planner.plan_fft_inverse(ny),
            planner.plan_fft_inverse(nz),
        ];
        Fft3 {
            dims: [nx, ny, nz],
            fwd,
            inv,
        }
    }

    pub fn cube(n: usize) -> Self {
        Self::new(n, n, n)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform, `X_k = Σ_j x_j e^{-2πi jk/n}` per axis.
    pub fn forward(&self, data: &mut [C64]) {
        self.run(data, &self.fwd);
    }

    /// Inverse transform including the `1/(nx ny nz)` normalization.
    pub fn inverse(&self, data: &mut [C64]) {
        self.run(data, &self.inv);
        let s = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    fn run(&self, data: &mut [C64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let [nx, ny, nz] = self.dims;
        assert_eq!(data.len(), nx * ny * nz, "fft buffer length");
        let scratch_len = plans
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        let mut scratch = vec![C64::new(0.0, 0.0); scratch_len];

        plans[2].process_with_scratch(data, &mut scratch);

        let mut buf = vec![C64::new(0.0, 0.0); ny * nz];
        for i in 0..nx {
            let slab = &mut data[i * ny * nz..(i + 1) * ny * nz];
            for j in 0..ny {
                for k in 0..nz {
                    buf[k * ny + j] = slab[j * nz + k];
                }
            }
            plans[1].process_with_scratch(&mut buf, &mut scratch);
            for j in 0..ny {
                for k in 0..nz {
                    slab[j * nz + k] = buf[k * ny + j];
                }
            }
        }

        let mut buf = vec![C64::new(0.0, 0.0); nx * nz];
        for j in 0..ny {
            for i in 0..nx {
                let row = (i * ny + j) * nz;
                for k in 0..nz {
                    buf[k * nx + i] = data[row + k];
                }
            }
            plans[0].process_with_scratch(&mut buf, &mut scratch);
            for i in 0..nx {
                let row = (i * ny + j) * nz;
                for k in 0..nz {
                    data[row + k] = buf[k * nx + i];
                }
            }
        }
    }
}

/// Angular frequency of DFT index `i` on a periodic axis of `n` points and length `period`.
pub fn frequency(i: usize, n: usize, period: f64) -> f64 {
    let signed = if i < n.div_ceil(2) {
        i as f64
    } else {
        i as f64 - n as f64
    };
    2.0 * std::f64::consts::PI * signed / period
}

/// Smallest integer ≥ `n` whose only prime factors are 2, 3 and 5.
pub fn next_smooth(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_non_cubic() {
        let fft = Fft3::new(6, 4, 5);
        let orig: Vec<C64> = (0..fft.len())
            .map(|i| C64::new((i as f64).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let mut d = orig.clone();
        fft.forward(&mut d);
        fft.inverse(&mut d);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_mode_lands_in_one_bin() {
        let n = 8;
        let fft = Fft3::cube(n);
        let mut d = vec![C64::new(0.0, 0.0); n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let ph =
                        2.0 * std::f64::consts::PI * (i as f64 + 2.0 * j as f64 + 3.0 * k as f64)
                            / n as f64;
                    d[(i * n + j) * n + k] = C64::from_polar(1.0, ph);
                }
            }
        }
        fft.forward(&mut d);
        let peak = (n + 2) * n + 3;
        assert!((d[peak].re - (n * n * n) as f64).abs() < 1e-9);
        let rest: f64 = d
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != peak)
            .map(|(_, v)| v.norm())
            .sum();
        assert!(rest < 1e-8);
    }

    #[test]
    fn smooth_sizes() {
        assert_eq!(next_smooth(7), 8);
        assert_eq!(next_smooth(131), 135);
        assert_eq!(next_smooth(1), 1);
    }
}
