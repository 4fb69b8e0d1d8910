//! Reduced modulation dynamics for `(z, λ, γ)` and the Lyapunov functional `|z|² + F`.

pub mod ode;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

pub use ode::{OdeOptions, OdeStats};

use crate::error::{Error, Result};
use crate::normal_form::{
    correction_rates, nonlinearity, Monomial, MultiIndex, NormalForm, ThetaTensors,
};
use crate::scattering::{gamma_resonant, FgrTable};
use crate::soliton::SolitonPoint;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Debug, Serialize)]
pub struct ModulationState {
    pub t: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub z: Vec<C64>,
}

/// `Θ` tensors on a `λ`-lattice, linearly interpolated.
#[derive(Clone, Debug)]
pub struct EffectiveModel {
    pub lambdas: Vec<f64>,
    pub theta: Vec<ThetaTensors>,
    pub upsilon: Vec<Vec<Vec<f64>>>,
    /// Half-width of the validity interval of a single-node model.
    pub window: f64,
}

impl EffectiveModel {
    /// One node, valid within `window` of its `λ`.
    pub fn frozen(nf: &NormalForm, window: f64) -> Self {
        EffectiveModel {
            lambdas: vec![nf.basis.lambda],
            theta: vec![nf.theta.clone()],
            upsilon: vec![nf.coeffs.upsilon.clone()],
            window,
        }
    }

    pub fn lattice(nfs: &[&NormalForm]) -> Result<Self> {
        let mut v: Vec<&&NormalForm> = nfs.iter().collect();
        v.sort_by(|a, b| a.basis.lambda.total_cmp(&b.basis.lambda));
        if v.is_empty() {
            return Err(Error::Config("empty lambda lattice".into()));
        }
        Ok(EffectiveModel {
            lambdas: v.iter().map(|n| n.basis.lambda).collect(),
            theta: v.iter().map(|n| n.theta.clone()).collect(),
            upsilon: v.iter().map(|n| n.coeffs.upsilon.clone()).collect(),
            window: 0.0,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.theta[0].n_modes()
    }

    fn range(&self) -> (f64, f64) {
        let lo = self.lambdas[0] - self.window;
        let hi = self.lambdas[self.lambdas.len() - 1] + self.window;
        (lo, hi)
    }

    /// Interpolated `(Θ, Υ)` at `λ`.
    pub fn at(&self, lambda: f64) -> Result<(ThetaTensors, Vec<Vec<f64>>)> {
        let (lo, hi) = self.range();
        if !(lambda >= lo && lambda <= hi) {
            return Err(Error::Interpolation { lambda, lo, hi });
        }
        if self.lambdas.len() == 1 {
            return Ok((self.theta[0].clone(), self.upsilon[0].clone()));
        }
        let j = self
            .lambdas
            .windows(2)
            .position(|w| lambda <= w[1])
            .unwrap_or(self.lambdas.len() - 2);
        let s =
            ((lambda - self.lambdas[j]) / (self.lambdas[j + 1] - self.lambdas[j])).clamp(0.0, 1.0);
        let (a, b) = (&self.theta[j], &self.theta[j + 1]);
        let mix = |x: f64, y: f64| (1.0 - s) * x + s * y;
        let theta = ThetaTensors {
            energies: a
                .energies
                .iter()
                .zip(&b.energies)
                .map(|(x, y)| mix(*x, *y))
                .collect(),
            monomials: a.monomials.clone(),
            coeff: a
                .coeff
                .iter()
                .zip(&b.coeff)
                .map(|(ca, cb)| {
                    ca.iter()
                        .zip(cb)
                        .map(|(ra, rb)| {
                            ra.iter()
                                .zip(rb)
                                .map(|(x, y)| x * (1.0 - s) + y * s)
                                .collect()
                        })
                        .collect()
                })
                .collect(),
        };
        let ups = self.upsilon[j]
            .iter()
            .zip(&self.upsilon[j + 1])
            .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| mix(*x, *y)).collect())
            .collect();
        Ok((theta, ups))
    }
}

/// `ż_k = −iE_k z_k + Σ_j Θ_j(k)`.
pub fn rhs_z(z: &[C64], theta: &ThetaTensors) -> Vec<C64> {
    let th = theta.total(z);
    z.iter()
        .zip(&theta.energies)
        .zip(th)
        .map(|((zk, e), t)| -I * e * zk + t)
        .collect()
}

/// `Re Σ_k z̄_k Θ_j(k)`.
pub fn re_theta_sum(z: &[C64], theta: &ThetaTensors, j: usize) -> (f64, f64) {
    let t = theta.theta(j, z);
    let s: C64 = z.iter().zip(&t).map(|(a, b)| a.conj() * b).sum();
    let mag = t.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    (s.re, mag)
}

fn hermitian(z: &[C64], upsilon: &[Vec<f64>]) -> f64 {
    let mut s = C64::new(0.0, 0.0);
    for (a, row) in upsilon.iter().enumerate() {
        for (b, u) in row.iter().enumerate() {
            s += u * z[a] * z[b].conj();
        }
    }
    s.re
}

/// `Υ(z, z̄)`.
pub fn upsilon(z: &[C64], upsilon: &[Vec<f64>]) -> f64 {
    hermitian(z, upsilon)
}

/// The `2×2` modulation system `[Id + M](λ̇, γ̇ − Υ)ᵀ = Ω` assembled from fields.
pub struct ModulationSystem<'a> {
    pub nf: &'a NormalForm,
    d2phi: Vec<f64>,
    dphi_sq: f64,
    d2phi_phi: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModulationRates {
    pub lambda_dot: f64,
    pub gamma_dot: f64,
    pub upsilon: f64,
    /// `‖M‖_∞`.
    pub m_norm: f64,
}

impl<'a> ModulationSystem<'a> {
    pub fn new(nf: &'a NormalForm, soliton: &SolitonPoint) -> Result<Self> {
        let d2phi = soliton.d2phi(1e-11)?;
        let g = &nf.basis.grid;
        Ok(ModulationSystem {
            dphi_sq: g.dot(&nf.basis.dphi, &nf.basis.dphi),
            d2phi_phi: g.dot(&d2phi, &nf.basis.phi),
            d2phi,
            nf,
        })
    }

    /// Solves for `(λ̇, γ̇)` given `z`, `ż` and the radiation `R`; `R = None` uses the
    /// quadratic normal-form radiation `Σ R_{m,n} z^m z̄^n`.
    pub fn rates(
        &self,
        z: &[C64],
        zdot: &[C64],
        r: Option<(&[f64], &[f64])>,
    ) -> Result<ModulationRates> {
        let b = &self.nf.basis;
        let g = &b.grid;
        let d = b.phi_dphi;
        let owned;
        let (r1, r2) = match r {
            Some(x) => x,
            None => {
                owned = self.nf.r_fields(z);
                (&owned.0[..], &owned.1[..])
            }
        };
        let (w1, w2, c) = self.nf.perturbation(z, Some((r1, r2)))?;
        let (imn, ren) = nonlinearity(&b.phi, &w1, &w2);
        let rate = correction_rates(&self.nf.coeffs, z, zdot);
        let ups = self.nf.coeffs.upsilon_at(z);
        let w2phi = g.dot(&w2, &b.phi) / d;
        let w1dphi = g.dot(&w1, &b.dphi) / d;
        let m11 = (c.a1 * self.d2phi_phi - g.dot(r1, &b.dphi)) / d;
        let m12 = -w2phi;
        let m21 = (c.a2 * self.dphi_sq - g.dot(r2, &self.d2phi)) / d;
        let m22 = w1dphi;
        let m_norm = (m11.abs() + m12.abs()).max(m21.abs() + m22.abs());
        if m_norm >= 0.5 {
            return Err(Error::Perturbativity(m_norm));
        }
        let o1 = -rate.a1 + g.dot(&imn, &b.phi) / d + ups * w2phi;
        let o2 = c.a1 - rate.a2 - g.dot(&ren, &b.dphi) / d - ups * (1.0 + w1dphi);
        let (a11, a12, a21, a22) = (1.0 + m11, m12, m21, 1.0 + m22);
        let det = a11 * a22 - a12 * a21;
        let lambda_dot = (o1 * a22 - a12 * o2) / det;
        let gdev = (a11 * o2 - a21 * o1) / det;
        Ok(ModulationRates {
            lambda_dot,
            gamma_dot: ups + gdev,
            upsilon: ups,
            m_norm,
        })
    }

    /// Pure-ODE rates: `ż` from the `Θ` tensors and quadratic radiation.
    pub fn rhs_lambda_gamma(&self, z: &[C64]) -> Result<ModulationRates> {
        let zdot = rhs_z(z, &self.nf.theta);
        self.rates(z, &zdot, None)
    }
}

/// `q² = |z|² + F(z, z̄)` with `∂ₜ q² = Q_res(z) + O(|z|⁶)`.
#[derive(Clone, Debug, Serialize)]
pub struct LyapunovFunctional {
    pub energies: Vec<f64>,
    /// Resonant part of `2 Re Σ z̄_k (Θ₁ + Θ₂)(k)`.
    pub resonant: Vec<(Monomial, C64)>,
    /// Coefficients of `F`.
    pub correction: Vec<(Monomial, C64)>,
    /// `C` in `Q_res ≈ −C (e₀ − λ) Γ`.
    pub c_gamma: f64,
    pub gap: f64,
    /// Shell tolerance for the phase-averaged `Γ`.
    pub shell_tol: f64,
    /// Relative least-squares misfit of the `C` fit.
    pub fit_residual: f64,
}

impl LyapunovFunctional {
    /// Splits `2 Re Σ z̄_k (Θ₁ + Θ₂)(k)` by frequency; `|ω| ≤ tol` counts as resonant.
    pub fn new(theta: &ThetaTensors, gap: f64, tol: f64) -> Self {
        let n = theta.n_modes();
        let mut c: std::collections::BTreeMap<Monomial, C64> = Default::default();
        for k in 0..n {
            for (i, mono) in theta.monomials.iter().enumerate() {
                let key = Monomial::new(mono.m.clone(), mono.n.add(&MultiIndex::unit(n, k)));
                *c.entry(key).or_default() += theta.coeff[0][k][i] + theta.coeff[1][k][i];
            }
        }
        let mut resonant = Vec::new();
        let mut correction = Vec::new();
        for m in Monomial::all(n, 2, 2) {
            let h = c.get(&m).copied().unwrap_or_default()
                + c.get(&m.conj()).copied().unwrap_or_default().conj();
            let w = m.frequency(&theta.energies);
            if w.abs() <= tol {
                resonant.push((m, h));
            } else {
                correction.push((m, h / (I * w)));
            }
        }
        LyapunovFunctional {
            energies: theta.energies.clone(),
            resonant,
            correction,
            c_gamma: f64::NAN,
            gap,
            shell_tol: 1e-6,
            fit_residual: f64::NAN,
        }
    }

    fn sum(terms: &[(Monomial, C64)], z: &[C64]) -> f64 {
        terms.iter().map(|(m, c)| c * m.eval(z)).sum::<C64>().re
    }

    pub fn f(&self, z: &[C64]) -> f64 {
        Self::sum(&self.correction, z)
    }

    pub fn q2(&self, z: &[C64]) -> f64 {
        z.iter().map(|x| x.norm_sqr()).sum::<f64>() + self.f(z)
    }

    pub fn q_res(&self, z: &[C64]) -> f64 {
        Self::sum(&self.resonant, z)
    }

    /// `d q²/dt` along `ż`.
    pub fn dq2(&self, z: &[C64], zdot: &[C64]) -> f64 {
        let a: f64 = z
            .iter()
            .zip(zdot)
            .map(|(x, y)| 2.0 * (x.conj() * y).re)
            .sum();
        a + self
            .correction
            .iter()
            .map(|(m, c)| c * m.derivative(z, zdot))
            .sum::<C64>()
            .re
    }

    /// Phase-averaged `Γ(z)`.
    pub fn gamma(&self, table: &FgrTable, z: &[C64]) -> f64 {
        gamma_resonant(table, z, self.shell_tol)
    }

    /// `−C (e₀ − λ) Γ(z)`.
    pub fn model(&self, table: &FgrTable, z: &[C64]) -> f64 {
        -self.c_gamma * self.gap * self.gamma(table, z)
    }

    /// Least-squares `C` over Gaussian unit-sphere samples.
    pub fn fit(&mut self, table: &FgrTable, samples: usize, seed: u64) -> Result<()> {
        if table.n_modes != self.energies.len() {
            return Err(Error::Dependency(
                "FGR table and Θ tensors have different mode counts".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.energies.len();
        let mut pts = Vec::with_capacity(samples);
        for _ in 0..samples {
            let z: Vec<C64> = (0..n)
                .map(|_| {
                    C64::new(
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                    )
                })
                .collect();
            let s = z.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            let z: Vec<C64> = z.iter().map(|x| x / s).collect();
            pts.push((self.q_res(&z), self.gap * self.gamma(table, &z)));
        }
        let num: f64 = pts.iter().map(|(q, g)| q * g).sum();
        let den: f64 = pts.iter().map(|(_, g)| g * g).sum();
        self.c_gamma = -num / den;
        let res: f64 = pts
            .iter()
            .map(|(q, g)| (q + self.c_gamma * g).powi(2))
            .sum();
        let tot: f64 = pts.iter().map(|(q, _)| q * q).sum();
        self.fit_residual = (res / tot).sqrt();
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub z: Vec<C64>,
    pub lambda: f64,
    pub gamma: f64,
    pub abs_z: f64,
    pub q2: Option<f64>,
    pub dq2: Option<f64>,
    pub gamma_form: Option<f64>,
    /// `d log|z| / d log t` from neighbouring samples.
    pub exponent: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    /// Set when the run stopped early on leaving the validity radius.
    pub truncated: bool,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

#[derive(Clone, Debug)]
pub struct IntegrateOptions {
    pub ode: OdeOptions,
    pub validity_radius: f64,
    /// Update `λ` from the modulation system every this many accepted steps (0 = frozen).
    pub lambda_stride: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            ode: OdeOptions::default(),
            validity_radius: 0.5,
            lambda_stride: 0,
        }
    }
}

/// Integrates `(z, γ)` with `γ̇ = Υ`; `λ` is advanced from the modulation system when a
/// system and a positive stride are supplied.
pub fn integrate(
    state0: &ModulationState,
    t_out: &[f64],
    model: &EffectiveModel,
    system: Option<&ModulationSystem>,
    lyapunov: Option<(&LyapunovFunctional, &FgrTable)>,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    let n = model.n_modes();
    if state0.z.len() != n {
        return Err(Error::Config(format!(
            "expected {n} mode amplitudes, got {}",
            state0.z.len()
        )));
    }
    let norm = |z: &[C64]| z.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if norm(&state0.z) > opts.validity_radius {
        return Err(Error::Config(format!(
            "|z(0)| = {} exceeds the validity radius",
            norm(&state0.z)
        )));
    }
    let (mut theta, mut ups) = model.at(state0.lambda)?;
    let mut lambda = state0.lambda;
    let mut lambdas = vec![(state0.t, lambda)];
    let mut y0: Vec<C64> = state0.z.clone();
    y0.push(C64::new(state0.gamma, 0.0));
    let mut steps = 0usize;
    let mut last_update = state0.t;
    let mut truncated = false;
    let cell = std::cell::RefCell::new((theta.clone(), ups.clone()));
    let f = |_t: f64, y: &[C64]| {
        let c = cell.borrow();
        let mut d = rhs_z(&y[..n], &c.0);
        d.push(C64::new(upsilon(&y[..n], &c.1), 0.0));
        d
    };
    let on_step = |t: f64, y: &mut Vec<C64>| -> Result<bool> {
        steps += 1;
        if norm(&y[..n]) > opts.validity_radius {
            truncated = true;
            return Ok(false);
        }
        if let (Some(sys), true) = (system, opts.lambda_stride > 0) {
            if steps % opts.lambda_stride == 0 {
                let r = sys.rhs_lambda_gamma(&y[..n])?;
                lambda += r.lambda_dot * (t - last_update);
                last_update = t;
                lambdas.push((t, lambda));
                if model.lambdas.len() > 1 {
                    let (th, u) = model.at(lambda)?;
                    theta = th;
                    ups = u;
                    *cell.borrow_mut() = (theta.clone(), ups.clone());
                }
            }
        }
        Ok(true)
    };
    let (ys, stats) = ode::integrate(f, state0.t, &y0, t_out, &opts.ode, on_step)?;
    let lambda_at = |t: f64| {
        lambdas
            .iter()
            .rev()
            .find(|(s, _)| *s <= t)
            .map(|x| x.1)
            .unwrap_or(state0.lambda)
    };
    let theta_now = cell.borrow().0.clone();
    let mut samples: Vec<TrajectorySample> = ys
        .iter()
        .zip(t_out)
        .map(|(y, &t)| {
            let z = y[..n].to_vec();
            let (q2, dq2, gf) = match lyapunov {
                Some((l, tab)) => {
                    let zd = rhs_z(&z, &theta_now);
                    (Some(l.q2(&z)), Some(l.dq2(&z, &zd)), Some(l.gamma(tab, &z)))
                }
                None => (None, None, None),
            };
            TrajectorySample {
                t,
                abs_z: norm(&z),
                lambda: lambda_at(t),
                gamma: y[n].re,
                z,
                q2,
                dq2,
                gamma_form: gf,
                exponent: None,
            }
        })
        .collect();
    for i in 1..samples.len().saturating_sub(1) {
        let (a, b) = (&samples[i - 1], &samples[i + 1]);
        if a.t > 0.0 && a.abs_z > 0.0 && b.abs_z > 0.0 {
            samples[i].exponent = Some((b.abs_z / a.abs_z).ln() / (b.t / a.t).ln());
        }
    }
    Ok(Trajectory {
        samples,
        truncated,
        accepted_steps: stats.accepted,
        rejected_steps: stats.rejected,
    })
}

/// Least-squares slope of `log|z|` against `log t` over `[t_lo, t_hi]`.
pub fn decay_exponent(traj: &Trajectory, t_lo: f64, t_hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = traj
        .samples
        .iter()
        .filter(|s| s.t >= t_lo && s.t <= t_hi && s.abs_z > 0.0)
        .map(|s| (s.t.ln(), s.abs_z.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / m, sy / m);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovReport {
    /// Largest `|∂ₜq² + C(e₀−λ)Γ|` over samples with `|z| ≤ radius`.
    pub max_residual: f64,
    /// Largest `|z|` among the samples considered.
    pub max_abs_z: f64,
    /// Samples with `|z| ≤ radius` where `q²` increased.
    pub increases: usize,
    /// Largest `|q² − |z|²| / |z|⁴`.
    pub f_ratio: f64,
    pub considered: usize,
}

/// Compares `∂ₜq²` with `−C(e₀−λ)Γ` and checks monotonicity of `q²` once `|z| ≤ radius`.
pub fn lyapunov_check(
    traj: &Trajectory,
    functional: &LyapunovFunctional,
    radius: f64,
) -> LyapunovReport {
    let mut rep = LyapunovReport {
        max_residual: 0.0,
        max_abs_z: 0.0,
        increases: 0,
        f_ratio: 0.0,
        considered: 0,
    };
    let mut prev: Option<f64> = None;
    for s in &traj.samples {
        let (Some(q2), Some(dq2), Some(gf)) = (s.q2, s.dq2, s.gamma_form) else {
            continue;
        };
        if s.abs_z > 0.0 {
            rep.f_ratio = rep
                .f_ratio
                .max((q2 - s.abs_z * s.abs_z).abs() / s.abs_z.powi(4));
        }
        if s.abs_z > radius {
            continue;
        }
        rep.considered += 1;
        rep.max_abs_z = rep.max_abs_z.max(s.abs_z);
        let res = dq2 + functional.c_gamma * functional.gap * gf;
        rep.max_residual = rep.max_residual.max(res.abs());
        if let Some(p) = prev {
            if q2 > p * (1.0 + 1e-12) {
                rep.increases += 1;
            }
        }
        prev = Some(q2);
    }
    rep
}
