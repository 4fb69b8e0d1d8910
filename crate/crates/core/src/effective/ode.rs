//! Adaptive Dormand–Prince 5(4) for complex state vectors.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-9,
            atol: 1e-12,
            h0: 1e-2,
            h_max: f64::INFINITY,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0`, returning `y` at each of the increasing times `t_out`.
/// `on_step(t, y)` runs after every accepted step and may mutate `y`; returning `false` stops
/// the integration, and the samples reached so far are returned.
pub fn integrate<F, S>(
    mut f: F,
    t0: f64,
    y0: &[C64],
    t_out: &[f64],
    opts: &OdeOptions,
    mut on_step: S,
) -> Result<(Vec<Vec<C64>>, OdeStats)>
where
    F: FnMut(f64, &[C64]) -> Vec<C64>,
    S: FnMut(f64, &mut Vec<C64>) -> Result<bool>,
{
    if t_out.windows(2).any(|w| w[1] < w[0]) || t_out.first().is_some_and(|&t| t < t0) {
        return Err(Error::Config(
            "output times must be increasing and not before t0".into(),
        ));
    }
    let n = y0.len();
    let mut stats = OdeStats::default();
    let mut out = Vec::with_capacity(t_out.len());
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = opts.h0.min(opts.h_max);
    let mut k: Vec<Vec<C64>> = vec![Vec::new(); 7];
    k[0] = f(t, &y);
    stats.evaluations += 1;
    let mut idx = 0;
    while idx < t_out.len() && t_out[idx] == t {
        out.push(y.clone());
        idx += 1;
    }
    while idx < t_out.len() {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::Integrator {
                t,
                reason: "step budget exhausted".into(),
            });
        }
        let target = t_out[idx];
        let last = t + h >= target;
        let hs = if last { target - t } else { h };
        let mut ys = vec![C64::new(0.0, 0.0); n];
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    if A[s][j] != 0.0 {
                        acc += hs * A[s][j] * kj[i];
                    }
                }
                ys[i] = acc;
            }
            k[s] = f(t + C[s] * hs, &ys);
            stats.evaluations += 1;
        }
        // stage 7 is evaluated at the fifth-order solution (FSAL)
        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut e = C64::new(0.0, 0.0);
            for s in 0..7 {
                e += hs * (B5[s] - B4[s]) * k[s][i];
            }
            let sc = opts.atol + opts.rtol * y[i].norm().max(ys[i].norm());
            err = err.max(e.norm() / sc);
        }
        if !err.is_finite() {
            return Err(Error::Integrator {
                t,
                reason: "non-finite state".into(),
            });
        }
        if err <= 1.0 {
            t = if last { target } else { t + hs };
            y = ys;
            k[0] = k[6].clone();
            stats.accepted += 1;
            let before = y.clone();
            if !on_step(t, &mut y)? {
                return Ok((out, stats));
            }
            if y != before {
                k[0] = f(t, &y);
                stats.evaluations += 1;
            }
            while idx < t_out.len() && t_out[idx] <= t {
                out.push(y.clone());
                idx += 1;
            }
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if !last {
                h = (hs * fac).min(opts.h_max);
            }
        } else {
            h = hs * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            stats.rejected += 1;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::Integrator {
                t,
                reason: format!("step size underflow ({h:.3e})"),
            });
        }
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn riccati_envelope_matches_closed_form() {
        let (c, y0) = (0.3, 0.8);
        let ts: Vec<f64> = (0..=40)
            .map(|i| 10f64.powf(-1.0 + 5.0 * i as f64 / 40.0))
            .collect();
        let (ys, _) = integrate(
            |_, y| vec![-c * y[0] * y[0]],
            0.0,
            &[C64::new(y0, 0.0)],
            &ts,
            &OdeOptions {
                rtol: 1e-10,
                atol: 1e-14,
                ..Default::default()
            },
            |_, _| Ok(true),
        )
        .unwrap();
        for (t, y) in ts.iter().zip(&ys) {
            let want = y0 / (1.0 + c * y0 * t);
            assert!(
                (y[0].re - want).abs() < 1e-6 * want,
                "{t}: {} vs {want}",
                y[0].re
            );
        }
    }

    #[test]
    fn harmonic_rotation_conserves_modulus() {
        let ts = [10.0, 50.0];
        let (ys, st) = integrate(
            |_, y| vec![C64::new(0.0, -1.3) * y[0]],
            0.0,
            &[C64::new(1.0, 0.0)],
            &ts,
            &OdeOptions::default(),
            |_, _| Ok(true),
        )
        .unwrap();
        let want = C64::from_polar(1.0, -1.3 * 50.0);
        assert!((ys[1][0] - want).norm() < 1e-7);
        assert!(st.accepted > 0);
    }

    #[test]
    fn rejects_decreasing_outputs() {
        let r = integrate(
            |_, y| y.to_vec(),
            0.0,
            &[C64::new(1.0, 0.0)],
            &[2.0, 1.0],
            &OdeOptions::default(),
            |_, _| Ok(true),
        );
        assert!(r.unwrap_err().is_config());
    }
}
