//! Split-step evolution of `i∂ₜψ = (−Δ + V)ψ + |ψ|²ψ`, modulation decomposition and majorants.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::effective::ModulationState;
use crate::error::{Error, Result};
use crate::grid::{weight, FieldPair, Grid};
use crate::linalg;
use crate::linearized::InternalModes;
use crate::normal_form::{evaluate_corrections, NormalForm, NormalFormCoefficients};
use crate::soliton::SolitonPoint;

/// Composition of the exact kinetic and potential flows within one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Splitting {
    /// Second order.
    #[default]
    Strang,
    /// Fourth-order triple jump of Strang steps.
    TripleJump,
}

impl Splitting {
    /// Kinetic sub-step weights; potential flows sit at the midpoints between them.
    fn weights(self) -> Vec<f64> {
        match self {
            Splitting::Strang => vec![1.0],
            Splitting::TripleJump => {
                let c = 2f64.cbrt();
                let w1 = 1.0 / (2.0 - c);
                vec![w1, -c * w1, w1]
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between samples passed to the observer.
    pub sample_every: usize,
    pub splitting: Splitting,
}

impl EvolutionConfig {
    pub fn new(dt: f64, t_end: f64, sample_every: usize) -> Self {
        EvolutionConfig {
            dt,
            t_end,
            sample_every,
            splitting: Splitting::Strang,
        }
    }
}

impl EvolutionConfig {
    /// Checks `dt · max(|ξ|² + |V|∞ + λ) ≤ 0.5` and the sampling cadence.
    pub fn validate(&self, grid: &Grid, potential: &[f64], lambda: f64) -> Result<()> {
        let vmax = potential.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bound = self.dt * (grid.max_k2() + vmax + lambda.abs());
        if !(self.dt > 0.0) || bound > 0.5 {
            return Err(Error::Config(format!(
                "time step {} violates dt·max(|ξ|²+|V|+λ) ≤ 0.5 (got {bound:.3})",
                self.dt
            )));
        }
        if !(self.t_end >= 0.0) || self.sample_every == 0 {
            return Err(Error::Config(
                "horizon must be nonnegative and sample_every positive".into(),
            ));
        }
        Ok(())
    }

    /// Largest admissible step.
    pub fn max_dt(grid: &Grid, potential: &[f64], lambda: f64) -> f64 {
        let vmax = potential.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        0.5 / (grid.max_k2() + vmax + lambda.abs())
    }

    /// Time before radiation emitted at `2·max E` re-enters the centre of the periodic box.
    pub fn safe_horizon(grid: &Grid, energies: &[f64], lambda: f64) -> f64 {
        let e = energies.iter().fold(0.0f64, |m, &e| m.max(e));
        let k = (2.0 * e - lambda).max(1e-12).sqrt();
        2.0 * grid.half_width() / (2.0 * k)
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Split-step propagator built from the exact flows of `i∂ₜψ = −Δψ` and `i∂ₜψ = (V + |ψ|²)ψ`.
pub struct Propagator {
    grid: Grid,
    potential: Vec<f64>,
    /// Kinetic multipliers per sub-step.
    kinetic: Vec<Vec<C64>>,
    /// Potential flow durations before each sub-step, plus the final one.
    gaps: Vec<f64>,
}

impl Propagator {
    pub fn new(grid: &Grid, potential: &[f64], dt: f64, splitting: Splitting) -> Self {
        let w = splitting.weights();
        let kinetic = w
            .iter()
            .map(|wi| {
                grid.k2()
                    .iter()
                    .map(|k2| C64::from_polar(1.0, -k2 * wi * dt))
                    .collect()
            })
            .collect();
        let mut gaps = vec![0.5 * w[0] * dt];
        gaps.extend(w.windows(2).map(|p| 0.5 * (p[0] + p[1]) * dt));
        gaps.push(0.5 * w[w.len() - 1] * dt);
        Propagator {
            grid: grid.clone(),
            potential: potential.to_vec(),
            kinetic,
            gaps,
        }
    }

    fn potential_flow(&self, psi: &mut [C64], tau: f64) {
        for (p, v) in psi.iter_mut().zip(&self.potential) {
            *p *= C64::from_polar(1.0, -(v + p.norm_sqr()) * tau);
        }
    }

    fn kinetic_flow(&self, psi: &mut [C64], mult: &[C64]) {
        let fft = self.grid.fft();
        fft.forward(psi);
        psi.iter_mut().zip(mult).for_each(|(p, k)| *p *= k);
        fft.inverse(psi);
    }

    /// Advances `steps` steps; potential flows at step boundaries are merged since `|ψ|` is invariant under them.
    pub fn advance(&self, psi: &mut [C64], steps: usize) {
        if steps == 0 {
            return;
        }
        let (first, last) = (self.gaps[0], self.gaps[self.gaps.len() - 1]);
        self.potential_flow(psi, first);
        for s in 0..steps {
            for (j, mult) in self.kinetic.iter().enumerate() {
                self.kinetic_flow(psi, mult);
                let tau = match (j + 1 == self.kinetic.len(), s + 1 == steps) {
                    (false, _) => self.gaps[j + 1],
                    (true, true) => last,
                    (true, false) => last + first,
                };
                self.potential_flow(psi, tau);
            }
        }
    }
}

/// `N(ψ) = ‖ψ‖²`.
pub fn mass(grid: &Grid, psi: &[C64]) -> f64 {
    grid.norm_c(psi).powi(2)
}

/// `E(ψ) = ∫ |∇ψ|² + V|ψ|² + ½|ψ|⁴`.
pub fn energy(grid: &Grid, potential: &[f64], psi: &[C64]) -> f64 {
    let lap = grid.multiplier_complex(psi, |k2| C64::new(k2, 0.0));
    let kin = grid.inner(&lap, psi).re;
    let pot: f64 = psi
        .iter()
        .zip(potential)
        .map(|(p, v)| v * p.norm_sqr() + 0.5 * p.norm_sqr().powi(2))
        .sum();
    kin + pot * grid.cell_volume()
}

#[derive(Clone, Debug, Serialize)]
pub struct ConservationReport {
    pub mass0: f64,
    pub energy0: f64,
    /// `max_t |N(t) − N(0)| / (N(0) · max(t, 1))`.
    pub mass_drift_rate: f64,
    /// `max_t |E(t) − E(0)| / |E(0)|`.
    pub energy_drift: f64,
    pub steps: usize,
}

/// Evolves `psi` in place, calling `on_sample(t, ψ)` at `t = 0` and every `sample_every` steps.
pub fn evolve<S>(
    psi: &mut [C64],
    potential: &[f64],
    grid: &Grid,
    cfg: &EvolutionConfig,
    mut on_sample: S,
) -> Result<ConservationReport>
where
    S: FnMut(f64, &[C64]) -> Result<()>,
{
    if psi.len() != grid.len() || potential.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "field of length {} on a grid of {} nodes",
            psi.len(),
            grid.len()
        )));
    }
    let prop = Propagator::new(grid, potential, cfg.dt, cfg.splitting);
    let n = cfg.n_steps();
    let mass0 = mass(grid, psi);
    let energy0 = energy(grid, potential, psi);
    let mut rep = ConservationReport {
        mass0,
        energy0,
        mass_drift_rate: 0.0,
        energy_drift: 0.0,
        steps: 0,
    };
    on_sample(0.0, psi)?;
    let mut done = 0;
    while done < n {
        let k = cfg.sample_every.min(n - done);
        prop.advance(psi, k);
        done += k;
        let t = done as f64 * cfg.dt;
        if psi.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
            return Err(Error::Blowup(t));
        }
        let m = mass(grid, psi);
        rep.mass_drift_rate = rep
            .mass_drift_rate
            .max((m - mass0).abs() / (mass0 * t.max(1.0)));
        rep.energy_drift = rep
            .energy_drift
            .max((energy(grid, potential, psi) - energy0).abs() / energy0.abs());
        rep.steps = done;
        on_sample(t, psi)?;
    }
    Ok(rep)
}

/// Soliton and mode data at a reference `λ`; `φ^λ` is expanded to second order around it.
#[derive(Clone, Debug)]
pub struct Frame {
    pub grid: Grid,
    pub lambda: f64,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub d2phi: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
}

impl Frame {
    pub fn new(soliton: &SolitonPoint, modes: &InternalModes) -> Result<Self> {
        if (soliton.lambda - modes.lambda).abs() > 1e-12 {
            return Err(Error::Dependency(format!(
                "modes at λ = {} do not match soliton at λ = {}",
                modes.lambda, soliton.lambda
            )));
        }
        Ok(Frame {
            grid: soliton.grid.clone(),
            lambda: soliton.lambda,
            phi: soliton.phi.clone(),
            dphi: soliton.dphi.clone(),
            d2phi: soliton.d2phi(1e-11)?,
            xi: modes.xi.clone(),
            eta: modes.eta.clone(),
            energies: modes.energies.clone(),
        })
    }

    pub fn n_modes(&self) -> usize {
        self.xi.len()
    }

    /// `(φ^λ, ∂λφ^λ)` by Taylor expansion.
    pub fn profile(&self, lambda: f64) -> (Vec<f64>, Vec<f64>) {
        let d = lambda - self.lambda;
        let phi = self
            .phi
            .iter()
            .zip(&self.dphi)
            .zip(&self.d2phi)
            .map(|((p, a), b)| p + d * a + 0.5 * d * d * b)
            .collect();
        let dphi = self
            .dphi
            .iter()
            .zip(&self.d2phi)
            .map(|(a, b)| a + d * b)
            .collect();
        (phi, dphi)
    }

    /// `ψ₀ = φ^λ + (Re z)·ξ + i(Im z)·η`.
    pub fn prepare_initial(&self, z0: &[C64], lambda0: f64) -> Result<Vec<C64>> {
        if z0.len() != self.n_modes() {
            return Err(Error::Config(format!(
                "expected {} mode amplitudes, got {}",
                self.n_modes(),
                z0.len()
            )));
        }
        let (phi, _) = self.profile(lambda0);
        let mut re = phi;
        let mut im = vec![0.0; re.len()];
        for k in 0..self.n_modes() {
            linalg::axpy(&mut re, z0[k].re, &self.xi[k]);
            linalg::axpy(&mut im, z0[k].im, &self.eta[k]);
        }
        Ok(re
            .into_iter()
            .zip(im)
            .map(|(a, b)| C64::new(a, b))
            .collect())
    }
}

#[derive(Clone, Debug)]
pub struct DecomposeOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Smallest admissible `|⟨ψ, φ⟩| / (‖ψ‖‖φ‖)`.
    pub min_overlap: f64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            tol: 1e-12,
            max_iter: 30,
            min_overlap: 0.5,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionResult {
    /// `gamma` holds the full phase `Θ`; the caller subtracts `∫λ`.
    pub state: ModulationState,
    #[serde(skip)]
    pub r: FieldPair,
    /// `|⟨R₁, φ^λ⟩|, |⟨R₂, ∂λφ^λ⟩|, |⟨R₁, η_k⟩|, |⟨R₂, ξ_k⟩|`, each divided by the test-function norm.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl DecompositionResult {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }
}

struct Unknowns<'a> {
    frame: &'a Frame,
    coeffs: Option<&'a NormalFormCoefficients>,
    psi: &'a [C64],
}

impl Unknowns<'_> {
    fn n(&self) -> usize {
        2 + 2 * self.frame.n_modes()
    }

    fn z(&self, x: &[f64]) -> Vec<C64> {
        let n = self.frame.n_modes();
        (0..n).map(|k| C64::new(x[2 + k], x[2 + n + k])).collect()
    }

    fn remainder(&self, x: &[f64]) -> Result<(FieldPair, Vec<f64>, Vec<f64>)> {
        let f = self.frame;
        let (phi, dphi) = f.profile(x[0]);
        let rot = C64::from_polar(1.0, -x[1]);
        let mut r1: Vec<f64> = Vec::with_capacity(self.psi.len());
        let mut r2: Vec<f64> = Vec::with_capacity(self.psi.len());
        for (p, ph) in self.psi.iter().zip(&phi) {
            let u = p * rot;
            r1.push(u.re - ph);
            r2.push(u.im);
        }
        let z = self.z(x);
        let (a1, a2, p, q) = match self.coeffs {
            Some(c) => {
                let k = evaluate_corrections(c, &z)?;
                (k.a1, k.a2, k.p, k.q)
            }
            None => (0.0, 0.0, vec![0.0; z.len()], vec![0.0; z.len()]),
        };
        linalg::axpy(&mut r1, -a1, &dphi);
        linalg::axpy(&mut r2, -a2, &phi);
        for k in 0..z.len() {
            linalg::axpy(&mut r1, -(z[k].re + p[k]), &f.xi[k]);
            linalg::axpy(&mut r2, -(z[k].im + q[k]), &f.eta[k]);
        }
        Ok((
            FieldPair {
                grid: f.grid.clone(),
                first: r1,
                second: r2,
            },
            phi,
            dphi,
        ))
    }

    fn residual(&self, x: &[f64]) -> Result<(Vec<f64>, FieldPair)> {
        let g = &self.frame.grid;
        let (r, phi, dphi) = self.remainder(x)?;
        let mut out = vec![
            g.dot(&r.first, &phi) / g.norm(&phi),
            g.dot(&r.second, &dphi) / g.norm(&dphi),
        ];
        for e in &self.frame.eta {
            out.push(g.dot(&r.first, e) / g.norm(e));
        }
        for xi in &self.frame.xi {
            out.push(g.dot(&r.second, xi) / g.norm(xi));
        }
        Ok((out, r))
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton solve for `(λ, Θ, z)` making `R` symplectically orthogonal to the discrete modes.
pub fn decompose(
    psi: &[C64],
    frame: &Frame,
    coeffs: Option<&NormalFormCoefficients>,
    guess: &ModulationState,
    opts: &DecomposeOptions,
) -> Result<DecompositionResult> {
    let g = &frame.grid;
    if psi.len() != g.len() {
        return Err(Error::GridMismatch(format!(
            "field of length {} on a grid of {} nodes",
            psi.len(),
            g.len()
        )));
    }
    if guess.z.len() != frame.n_modes() {
        return Err(Error::Config(format!(
            "guess has {} amplitudes, frame has {} modes",
            guess.z.len(),
            frame.n_modes()
        )));
    }
    let overlap = g.dot_cr(psi, &frame.phi).norm() / (g.norm_c(psi) * g.norm(&frame.phi));
    if !(overlap >= opts.min_overlap) {
        return Err(Error::TubeExit(format!(
            "overlap with the soliton {overlap:.3e} below {}",
            opts.min_overlap
        )));
    }
    let sys = Unknowns { frame, coeffs, psi };
    let n = sys.n();
    let nm = frame.n_modes();
    let mut x = vec![0.0; n];
    x[0] = guess.lambda;
    x[1] = guess.gamma;
    for k in 0..nm {
        x[2 + k] = guess.z[k].re;
        x[2 + nm + k] = guess.z[k].im;
    }
    let (mut f, mut r) = sys.residual(&x)?;
    let mut it = 0;
    while inf_norm(&f) > opts.tol {
        if it == opts.max_iter {
            return Err(Error::FitQuality(inf_norm(&f)));
        }
        it += 1;
        let mut jac = nalgebra::DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let h = 1e-6 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let (fp, _) = sys.residual(&xp)?;
            let (fm, _) = sys.residual(&xm)?;
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let rhs = nalgebra::DVector::from_iterator(n, f.iter().map(|v| -v));
        let dx = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::TubeExit("singular decomposition Jacobian".into()))?;
        let before = inf_norm(&f);
        let mut step = 1.0;
        loop {
            let xt: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + step * d).collect();
            let (ft, rt) = sys.residual(&xt)?;
            if inf_norm(&ft) < before || step < 1e-3 {
                x = xt;
                f = ft;
                r = rt;
                break;
            }
            step *= 0.5;
        }
        if !(inf_norm(&f) < before) && it > 3 {
            return Err(Error::TubeExit(format!(
                "Newton stalled at residual {:.3e}",
                inf_norm(&f)
            )));
        }
    }
    let z = sys.z(&x);
    Ok(DecompositionResult {
        state: ModulationState {
            t: guess.t,
            lambda: x[0],
            gamma: x[1],
            z,
        },
        r,
        residuals: f.iter().map(|v| v.abs()).collect(),
        iterations: it,
    })
}

/// `R̃ = R − Σ_{|m|+|n|=2} R_{m,n} z^m z̄^n`.
pub fn extract_rtilde(result: &DecompositionResult, nf: &NormalForm) -> FieldPair {
    let (a, b) = nf.r_fields(&result.state.z);
    let mut out = result.r.clone();
    linalg::axpy(&mut out.first, -1.0, &a);
    linalg::axpy(&mut out.second, -1.0, &b);
    out
}

/// Instantaneous controlling quantities at one sample.
#[derive(Clone, Debug, Serialize)]
pub struct MajorantSample {
    pub t: f64,
    pub abs_z: f64,
    pub r_weighted_h3: f64,
    pub r_weighted_l2: f64,
    pub r_sup: f64,
    pub rtilde_weighted: f64,
    pub r_h3: f64,
    pub r_l3: f64,
}

impl MajorantSample {
    pub fn new(t: f64, abs_z: f64, r: &FieldPair, rtilde: &FieldPair, nu: f64) -> Self {
        let g = &r.grid;
        let w = weight(g, nu);
        let rc: Vec<C64> = r
            .first
            .iter()
            .zip(&r.second)
            .map(|(a, b)| C64::new(*a, *b))
            .collect();
        let rw: Vec<C64> = rc.iter().zip(&w).map(|(v, w)| v * w).collect();
        let l2 = |a: &[f64], b: &[f64]| {
            (a.iter()
                .zip(b)
                .zip(&w)
                .map(|((a, b), w)| w * w * (a * a + b * b))
                .sum::<f64>()
                * g.cell_volume())
            .sqrt()
        };
        MajorantSample {
            t,
            abs_z,
            r_weighted_h3: g.sobolev_norm(&rw, 3.0),
            r_weighted_l2: l2(&r.first, &r.second),
            r_sup: rc.iter().fold(0.0, |m, v| m.max(v.norm())),
            rtilde_weighted: l2(&rtilde.first, &rtilde.second),
            r_h3: g.sobolev_norm(&rc, 3.0),
            r_l3: (rc.iter().map(|v| v.norm().powi(3)).sum::<f64>() * g.cell_volume()).cbrt(),
        }
    }
}

/// Running maxima of the six controlling functions.
#[derive(Clone, Debug, Serialize)]
pub struct Majorants {
    pub t0: f64,
    pub t: Vec<f64>,
    /// `Z(T) = max (T₀+t)^{1/2}|z|`.
    pub z: Vec<f64>,
    /// `R₁ … R₅` in the order: weighted `H³`, sup, weighted `R̃`, `H³`, `L³`.
    pub r: [Vec<f64>; 5],
}

pub fn compute_majorants(samples: &[MajorantSample], t0: f64) -> Result<Majorants> {
    if !(t0 > 0.0) {
        return Err(Error::Config(format!("T0 must be positive, got {t0}")));
    }
    let mut m = Majorants {
        t0,
        t: Vec::new(),
        z: Vec::new(),
        r: Default::default(),
    };
    let mut cur = [0.0f64; 6];
    for s in samples {
        let a = t0 + s.t;
        let vals = [
            a.sqrt() * s.abs_z,
            a * s.r_weighted_h3,
            a * s.r_sup,
            (t0.powf(2.0 / 3.0) + s.t).powf(1.4) * s.rtilde_weighted,
            s.r_h3,
            a.sqrt() / a.ln() * s.r_l3,
        ];
        for (c, v) in cur.iter_mut().zip(vals) {
            *c = c.max(v);
        }
        m.t.push(s.t);
        m.z.push(cur[0]);
        for j in 0..5 {
            m.r[j].push(cur[j + 1]);
        }
    }
    Ok(m)
}

#[derive(Clone, Debug, Serialize)]
pub struct TrackSample {
    pub t: f64,
    pub lambda: f64,
    /// `Θ − ∫λ`.
    pub gamma: f64,
    pub z: Vec<C64>,
    pub abs_z: f64,
    pub max_residual: f64,
    pub iterations: usize,
    pub majorant: MajorantSample,
}

#[derive(Clone, Debug, Serialize)]
pub struct Track {
    pub samples: Vec<TrackSample>,
    pub conservation: ConservationReport,
    pub majorants: Majorants,
    /// Field at the end of the run.
    #[serde(skip)]
    pub psi: Vec<C64>,
    /// Last decomposition, with `gamma` the full phase `Θ`.
    pub last: ModulationState,
}

/// Evolves `ψ₀` and decomposes every sample, seeding Newton with the previous result.
pub fn track(
    psi0: &[C64],
    potential: &[f64],
    frame: &Frame,
    nf: &NormalForm,
    cfg: &EvolutionConfig,
    nu: f64,
    opts: &DecomposeOptions,
) -> Result<Track> {
    cfg.validate(&frame.grid, potential, frame.lambda)?;
    let mut psi = psi0.to_vec();
    let mut samples: Vec<TrackSample> = Vec::new();
    let mut guess = ModulationState {
        t: 0.0,
        lambda: frame.lambda,
        gamma: 0.0,
        z: vec![C64::new(0.0, 0.0); frame.n_modes()],
    };
    let mut int_lambda = 0.0;
    let mut last = (0.0, frame.lambda);
    let conservation = evolve(&mut psi, potential, &frame.grid, cfg, |t, p| {
        // the phase advances by about λ·Δt between samples
        guess.t = t;
        guess.gamma += guess.lambda * (t - last.0);
        let d = decompose(p, frame, Some(&nf.coeffs), &guess, opts)?;
        int_lambda += 0.5 * (last.1 + d.state.lambda) * (t - last.0);
        last = (t, d.state.lambda);
        let rt = extract_rtilde(&d, nf);
        let abs_z = d.state.z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        samples.push(TrackSample {
            t,
            lambda: d.state.lambda,
            gamma: d.state.gamma - int_lambda,
            z: d.state.z.clone(),
            abs_z,
            max_residual: d.max_residual(),
            iterations: d.iterations,
            majorant: MajorantSample::new(t, abs_z, &d.r, &rt, nu),
        });
        guess = d.state;
        Ok(())
    })?;
    let t0 = 1.0
        / samples
            .first()
            .map(|s| s.abs_z)
            .filter(|a| *a > 0.0)
            .unwrap_or(1.0);
    let ms: Vec<MajorantSample> = samples.iter().map(|s| s.majorant.clone()).collect();
    let majorants = compute_majorants(&ms, t0)?;
    Ok(Track {
        samples,
        conservation,
        majorants,
        psi,
        last: guess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_gaussian_keeps_mass_and_energy() {
        let g = Grid::new(16, 8.0).unwrap();
        let v = vec![0.0; g.len()];
        let mut psi = g.sample_complex(|[x, y, z]| {
            C64::new(
                (-(x * x + y * y + z * z) / 2.0).exp(),
                0.3 * x * (-(x * x + y * y + z * z) / 2.0).exp(),
            )
        });
        let cfg = EvolutionConfig::new(0.01, 1.0, 10);
        cfg.validate(&g, &v, 0.0).unwrap();
        let rep = evolve(&mut psi, &v, &g, &cfg, |_, _| Ok(())).unwrap();
        assert!(rep.mass_drift_rate < 1e-13);
        assert!(rep.energy_drift < 1e-3);
    }

    #[test]
    fn cfl_violation_is_a_config_error() {
        let g = Grid::new(16, 8.0).unwrap();
        let v = vec![0.0; g.len()];
        let cfg = EvolutionConfig::new(1.0, 1.0, 1);
        assert!(cfg.validate(&g, &v, 0.5).unwrap_err().is_config());
        let ok = EvolutionConfig {
            dt: EvolutionConfig::max_dt(&g, &v, 0.5),
            ..cfg
        };
        assert!(ok.validate(&g, &v, 0.5).is_ok());
    }

    #[test]
    fn majorants_are_running_maxima() {
        let g = Grid::new(16, 4.0).unwrap();
        let r = FieldPair::zeros(&g);
        let s: Vec<MajorantSample> = [0.1, 0.05, 0.2]
            .iter()
            .enumerate()
            .map(|(i, &a)| MajorantSample::new(i as f64, a, &r, &r, 4.0))
            .collect();
        let m = compute_majorants(&s, 10.0).unwrap();
        assert!(m.z.windows(2).all(|w| w[1] >= w[0]));
        assert!((m.z[0] - 10f64.sqrt() * 0.1).abs() < 1e-15);
        assert!(compute_majorants(&s, 0.0).unwrap_err().is_config());
    }
}
