//! Stage-sequential experiment pipeline: spectrum → soliton → modes → FGR → normal form → ODE → PDE → decomposition.

pub mod config;
pub mod report;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::effective::{
    self, decay_exponent, lyapunov_check, EffectiveModel, IntegrateOptions, LyapunovFunctional,
    ModulationState, OdeOptions, Trajectory,
};
use crate::error::{Error, Result};
use crate::evolution::{
    decompose, extract_rtilde, track, DecomposeOptions, DecompositionResult, EvolutionConfig,
    Frame, MajorantSample, Track,
};
use crate::grid::{self, ComplexField, Grid};
use crate::linearized::{
    projector_checks, solve_internal_modes, InternalModes, LinearizedOps, ModeOptions,
    RieszProjector,
};
use crate::normal_form::{NormalForm, NormalFormOptions};
use crate::potential::build_potential;
use crate::scattering::{
    build_fgr_table, fgr_positivity_scan, FgrTable, ScanReport, SphereQuadrature,
};
use crate::soliton::{branch, continue_soliton, write_branch_csv, SolitonOptions, SolitonPoint};
use crate::spectrum::{solve_bound_states, DiscreteSpectrum};

pub use config::ExperimentConfig;
pub use report::{emit_report, RunManifest, StageRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Spectrum,
    Soliton,
    Modes,
    Fgr,
    NormalForm,
    Ode,
    Evolve,
    Decompose,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Spectrum,
        Stage::Soliton,
        Stage::Modes,
        Stage::Fgr,
        Stage::NormalForm,
        Stage::Ode,
        Stage::Evolve,
        Stage::Decompose,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Spectrum => "spectrum",
            Stage::Soliton => "soliton",
            Stage::Modes => "modes",
            Stage::Fgr => "fgr",
            Stage::NormalForm => "normalform",
            Stage::Ode => "ode",
            Stage::Evolve => "evolve",
            Stage::Decompose => "decompose",
        }
    }

    pub fn parse(s: &str) -> Result<Stage> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown stage {s:?}; expected one of {}",
                    Stage::names().join(", ")
                ))
            })
    }

    pub fn names() -> Vec<&'static str> {
        Stage::ALL.iter().map(|s| s.name()).collect()
    }
}

/// Everything computed by the stages that ran.
#[derive(Default)]
pub struct Artifacts {
    pub grid: Option<Grid>,
    pub spectrum: Option<DiscreteSpectrum>,
    pub soliton: Option<SolitonPoint>,
    pub ops: Option<LinearizedOps>,
    pub modes: Option<InternalModes>,
    pub projector: Option<RieszProjector>,
    pub fgr: Option<(FgrTable, ScanReport)>,
    pub normal_form: Option<NormalForm>,
    pub lyapunov: Option<LyapunovFunctional>,
    pub ode: Option<Trajectory>,
    pub track: Option<Track>,
    pub decomposition: Option<DecompositionResult>,
}

pub struct PipelineRun {
    pub manifest: RunManifest,
    pub artifacts: Artifacts,
    /// The stage error that stopped the run, if any.
    pub error: Option<Error>,
}

type Residuals = BTreeMap<String, f64>;

fn need<'a, T>(x: &'a Option<T>, what: &str) -> Result<&'a T> {
    x.as_ref()
        .ok_or_else(|| Error::Dependency(format!("{what} not computed")))
}

fn csv_writer(out: Option<&Path>, name: &str) -> Result<Option<csv::Writer<File>>> {
    match out {
        Some(dir) => Ok(Some(csv::Writer::from_path(dir.join(name))?)),
        None => Ok(None),
    }
}

fn norm(z: &[C64]) -> f64 {
    z.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    out: Option<&'a Path>,
    art: Artifacts,
}

impl Runner<'_> {
    fn spectrum(&mut self, r: &mut Residuals) -> Result<()> {
        let c = self.cfg;
        let grid = Grid::new(c.grid.n, c.grid.half_width)?;
        let v = build_potential(&c.potential_spec(), &grid)?;
        let s = solve_bound_states(&v, c.spectrum.modes + 1, c.spectrum.tol)?;
        let sum = s.summary();
        r.insert("e0".into(), sum.e0);
        for (k, e) in sum.e.iter().enumerate() {
            r.insert(format!("e{}", k + 1), *e);
        }
        for (k, res) in sum.residuals.iter().enumerate() {
            r.insert(format!("eigen_residual_{k}"), *res);
        }
        r.insert("ground_gap".into(), sum.ground_gap);
        r.insert("radiation_gap".into(), sum.radiation_gap);
        r.insert("boundary_tail".into(), sum.boundary_tail);
        r.insert("resonance_gauge".into(), sum.resonance.gauge);
        if let Some(mut w) = csv_writer(self.out, "spectrum.csv")? {
            w.write_record(["level", "energy", "residual"])?;
            let energies = std::iter::once(sum.e0).chain(sum.e.iter().copied());
            for (k, (e, res)) in energies.zip(&sum.residuals).enumerate() {
                w.write_record([k.to_string(), (-e).to_string(), res.to_string()])?;
            }
            w.flush()?;
        }
        self.art.grid = Some(grid);
        let gate = s.check_radiation_condition();
        self.art.spectrum = Some(s);
        gate
    }

    fn soliton_options(&self) -> SolitonOptions {
        SolitonOptions {
            tol: self.cfg.soliton.tol,
            ..Default::default()
        }
    }

    fn soliton(&mut self, r: &mut Residuals) -> Result<()> {
        let s = need(&self.art.spectrum, "spectrum")?;
        let opts = self.soliton_options();
        let sol = continue_soliton(s, s.e0 - self.cfg.soliton.gap, &opts)?;
        r.insert("lambda".into(), sol.lambda);
        r.insert("newton_residual".into(), sol.newton_residual);
        r.insert("dlambda_residual".into(), sol.dlambda_residual);
        r.insert("profile_residual".into(), sol.profile_residual());
        r.insert("delta".into(), sol.delta);
        r.insert("mass".into(), sol.mass());
        r.insert("phi_dphi".into(), sol.phi_dphi());
        let mut gaps = self.cfg.soliton.lattice.clone();
        gaps.sort_by(|a, b| a.total_cmp(b));
        let lambdas: Vec<f64> = gaps.iter().map(|g| s.e0 - g).collect();
        let points = branch(s, &lambdas, &opts)?;
        let worst = points.iter().map(|p| p.newton_residual).fold(0.0, f64::max);
        r.insert("branch_max_residual".into(), worst);
        if let Some(dir) = self.out {
            write_branch_csv(&points, File::create(dir.join("branch.csv"))?)?;
        }
        self.art.soliton = Some(sol);
        Ok(())
    }

    fn modes(&mut self, r: &mut Residuals) -> Result<()> {
        let s = need(&self.art.spectrum, "spectrum")?;
        let sol = need(&self.art.soliton, "soliton")?;
        let c = &self.cfg.modes;
        let ops = LinearizedOps::new(sol);
        let opts = ModeOptions {
            tol: c.tol,
            max_iter: c.max_iter,
            inner_tol: c.inner_tol,
        };
        let modes = solve_internal_modes(&ops, s, self.cfg.spectrum.modes, &opts)?;
        let proj = RieszProjector::new(sol, &modes);
        let checks = projector_checks(&ops, &proj, 3, self.cfg.seed);
        let rep = modes.report();
        for (k, (e, res)) in rep.energies.iter().zip(&rep.residuals).enumerate() {
            r.insert(format!("E{}", k + 1), *e);
            r.insert(format!("mode_residual_{}", k + 1), *res);
            r.insert(format!("radiation_margin_{}", k + 1), 2.0 * e - rep.lambda);
        }
        r.insert("biorth_error".into(), rep.biorth_error);
        r.insert("unexpected_modes".into(), rep.unexpected.len() as f64);
        r.insert("projector_idempotency".into(), checks.idempotency);
        r.insert("projector_annihilation".into(), checks.annihilation);
        r.insert("zero_mode_chain".into(), checks.zero_mode_chain);
        r.insert("projector_commutation".into(), checks.commutation);
        if let Some(mut w) = csv_writer(self.out, "modes.csv")? {
            w.write_record(["mode", "energy", "residual", "radiates"])?;
            for (k, (e, res)) in rep.energies.iter().zip(&rep.residuals).enumerate() {
                w.write_record([
                    (k + 1).to_string(),
                    e.to_string(),
                    res.to_string(),
                    rep.radiates[k].to_string(),
                ])?;
            }
            w.flush()?;
        }
        self.art.ops = Some(ops);
        self.art.modes = Some(modes);
        self.art.projector = Some(proj);
        Ok(())
    }

    fn fgr(&mut self, r: &mut Residuals) -> Result<()> {
        let s = need(&self.art.spectrum, "spectrum")?;
        let c = &self.cfg.fgr;
        let quad = SphereQuadrature::with_order(c.sphere_order)?;
        let table = build_fgr_table(s, &quad, c.tol)?;
        let scan = fgr_positivity_scan(
            &table,
            &s.clusters(),
            c.scan_samples,
            self.cfg.seed,
            c.floor,
        )?;
        r.insert("gamma_min".into(), scan.min);
        r.insert("gamma_max".into(), scan.max);
        r.insert("gamma_ratio".into(), scan.min / scan.max);
        for (k, m) in scan.cluster_min.iter().enumerate() {
            r.insert(format!("gamma_cluster_min_{k}"), *m);
        }
        r.insert("quadrature_nodes".into(), quad.len() as f64);
        if let Some(mut w) = csv_writer(self.out, "fgr.csv")? {
            w.write_record(["m", "n", "k_mn", "psi_norm", "iterations"])?;
            let norms = table.norms();
            for (i, &(m, n)) in table.pairs.iter().enumerate() {
                let row = [
                    (m + 1).to_string(),
                    (n + 1).to_string(),
                    table.k_mn[i].to_string(),
                    norms[i].to_string(),
                    table.iterations[i].to_string(),
                ];
                w.write_record(row)?;
            }
            w.flush()?;
        }
        let below = scan.below_floor;
        self.art.fgr = Some((table, scan));
        if below {
            return Err(Error::Condition(format!(
                "min Γ/|z|⁴ below the configured floor {:.3e}",
                c.floor
            )));
        }
        Ok(())
    }

    fn normal_form(&mut self, r: &mut Residuals) -> Result<()> {
        let ops = need(&self.art.ops, "linearized operators")?;
        let proj = need(&self.art.projector, "projector")?;
        let modes = need(&self.art.modes, "internal modes")?;
        let c = &self.cfg.normal_form;
        let opts = NormalFormOptions {
            floor_factor: c.floor_factor,
            resolvent_tol: c.resolvent_tol,
            cancellation_tol: c.cancellation_tol,
            ..Default::default()
        };
        let nf = NormalForm::build(ops, proj, modes, &opts)?;
        r.insert(
            "cancellation_max_discrepancy".into(),
            nf.cancellation.max_discrepancy,
        );
        r.insert("resolvent_residual".into(), nf.resolvent_residual);
        r.insert(
            "resolvent_iterations".into(),
            nf.resolvent_iterations as f64,
        );
        r.insert("sup_coefficient".into(), nf.coeffs.sup(None));
        r.insert("sup_a1_11".into(), nf.coeffs.sup(Some((1, 1))));
        if let Some(m) = nf
            .coeffs
            .margins
            .iter()
            .map(|m| m.value.abs() / nf.coeffs.floor)
            .reduce(f64::min)
        {
            r.insert("min_margin_over_floor".into(), m);
        }
        if let Some(mut w) = csv_writer(self.out, "cancellation.csv")? {
            w.write_record(["m", "n", "lhs_re", "lhs_im", "rhs_im"])?;
            for p in &nf.cancellation.pairs {
                w.write_record([
                    (p.m + 1).to_string(),
                    (p.n + 1).to_string(),
                    p.lhs_re.to_string(),
                    p.lhs_im.to_string(),
                    p.rhs_im.to_string(),
                ])?;
            }
            w.flush()?;
        }
        if let Some(dir) = self.out {
            let text = serde_json::to_string_pretty(&nf.coeffs.to_json())?;
            fs::write(dir.join("coefficients.json"), text + "\n")?;
        }
        self.art.normal_form = Some(nf);
        Ok(())
    }

    fn ode(&mut self, r: &mut Residuals) -> Result<()> {
        let nf = need(&self.art.normal_form, "normal form")?;
        let (table, _) = need(&self.art.fgr, "FGR table")?;
        let sol = need(&self.art.soliton, "soliton")?;
        let c = &self.cfg.ode;
        let gap = sol.e0 - sol.lambda;
        let mut lyap = LyapunovFunctional::new(&nf.theta, gap, 1e-6);
        lyap.fit(table, c.calibration_samples, self.cfg.seed)?;
        r.insert("lyapunov_c".into(), lyap.c_gamma);
        r.insert("lyapunov_fit_residual".into(), lyap.fit_residual);
        let model = EffectiveModel::frozen(nf, 0.0);
        let state = ModulationState {
            t: 0.0,
            lambda: sol.lambda,
            gamma: 0.0,
            z: config::complex(&c.z0),
        };
        let n = c.samples;
        let ts: Vec<f64> = std::iter::once(0.0)
            .chain((0..n).map(|i| c.t_end.powf(i as f64 / (n - 1) as f64)))
            .collect();
        let opts = IntegrateOptions {
            ode: OdeOptions {
                rtol: c.rtol,
                atol: c.rtol * 1e-3 * norm(&state.z),
                ..Default::default()
            },
            validity_radius: c.validity_radius,
            lambda_stride: 0,
        };
        let traj = effective::integrate(&state, &ts, &model, None, Some((&lyap, table)), &opts)?;
        let [lo, hi] = c.fit_window;
        if let Some(slope) = decay_exponent(&traj, lo, hi) {
            r.insert("decay_slope".into(), slope);
        }
        let lr = lyapunov_check(&traj, &lyap, 0.05);
        r.insert("lyapunov_increases".into(), lr.increases as f64);
        r.insert("lyapunov_considered".into(), lr.considered as f64);
        r.insert(
            "abs_z_final".into(),
            traj.samples.last().map_or(0.0, |s| s.abs_z),
        );
        r.insert("accepted_steps".into(), traj.accepted_steps as f64);
        r.insert("truncated".into(), traj.truncated as u8 as f64);
        if let Some(mut w) = csv_writer(self.out, "ode.csv")? {
            w.write_record(["t", "abs_z", "q2", "dq2", "gamma_form", "exponent"])?;
            let f = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
            for s in &traj.samples {
                w.write_record([
                    s.t.to_string(),
                    s.abs_z.to_string(),
                    f(s.q2),
                    f(s.dq2),
                    f(s.gamma_form),
                    f(s.exponent),
                ])?;
            }
            w.flush()?;
        }
        self.art.lyapunov = Some(lyap);
        self.art.ode = Some(traj);
        Ok(())
    }

    fn frame(&self) -> Result<Frame> {
        Frame::new(
            need(&self.art.soliton, "soliton")?,
            need(&self.art.modes, "internal modes")?,
        )
    }

    fn evolve(&mut self, r: &mut Residuals) -> Result<()> {
        let nf = need(&self.art.normal_form, "normal form")?;
        let s = need(&self.art.spectrum, "spectrum")?;
        let frame = self.frame()?;
        let c = &self.cfg.evolve;
        let g = &frame.grid;
        let horizon = EvolutionConfig::safe_horizon(g, &frame.energies, frame.lambda);
        let t_end = c.t_end.unwrap_or(horizon);
        if t_end > horizon {
            return Err(Error::Config(format!(
                "evolve.t_end = {t_end} exceeds the wrap-around-safe horizon {horizon:.2}"
            )));
        }
        let dt =
            c.dt.unwrap_or_else(|| EvolutionConfig::max_dt(g, &s.potential, frame.lambda));
        let steps = (t_end / dt).round() as usize;
        let ecfg = EvolutionConfig {
            splitting: c.splitting,
            ..EvolutionConfig::new(dt, t_end, (steps / c.samples).max(1))
        };
        let psi0 = frame.prepare_initial(&config::complex(&c.z0), frame.lambda)?;
        let tr = track(
            &psi0,
            &s.potential,
            &frame,
            nf,
            &ecfg,
            self.cfg.nu,
            &DecomposeOptions::default(),
        )?;

        let first = tr
            .samples
            .first()
            .ok_or_else(|| Error::Config("evolution produced no samples".into()))?;
        let ts: Vec<f64> = tr.samples.iter().map(|s| s.t).collect();
        let s0 = ModulationState {
            t: 0.0,
            lambda: first.lambda,
            gamma: 0.0,
            z: first.z.clone(),
        };
        let model = EffectiveModel::frozen(nf, c.lambda_window);
        let ode = effective::integrate(&s0, &ts, &model, None, None, &IntegrateOptions::default())?;
        let mut dev: f64 = 0.0;
        let mut weighted: f64 = 0.0;
        let t0 = tr.majorants.t0;
        for (p, o) in tr.samples.iter().zip(&ode.samples) {
            dev = dev.max((p.abs_z - o.abs_z).abs() / o.abs_z);
            weighted = weighted.max((t0 + p.t) * p.majorant.r_weighted_l2);
        }
        r.insert("horizon".into(), t_end);
        r.insert("safe_horizon".into(), horizon);
        r.insert("dt".into(), dt);
        r.insert("steps".into(), tr.conservation.steps as f64);
        r.insert(
            "max_orthogonality_residual".into(),
            tr.samples
                .iter()
                .map(|s| s.max_residual)
                .fold(0.0, f64::max),
        );
        r.insert("mass_drift_rate".into(), tr.conservation.mass_drift_rate);
        r.insert("energy_drift".into(), tr.conservation.energy_drift);
        r.insert("ode_relative_deviation".into(), dev);
        r.insert("sup_weighted_radiation".into(), weighted);
        r.insert("T0".into(), t0);
        let m = &tr.majorants;
        r.insert("majorant_Z".into(), m.z.last().copied().unwrap_or(0.0));
        for j in 0..5 {
            r.insert(
                format!("majorant_R{}", j + 1),
                m.r[j].last().copied().unwrap_or(0.0),
            );
        }
        if let Some(mut w) = csv_writer(self.out, "evolve.csv")? {
            let n = frame.n_modes();
            let mut head = vec![
                "t".to_string(),
                "lambda".into(),
                "gamma".into(),
                "abs_z".into(),
                "ode_abs_z".into(),
            ];
            for k in 1..=n {
                head.push(format!("re_z{k}"));
                head.push(format!("im_z{k}"));
            }
            head.extend(
                ["orthogonality_residual", "r_weighted_l2", "rtilde_weighted"].map(String::from),
            );
            w.write_record(&head)?;
            for (p, o) in tr.samples.iter().zip(&ode.samples) {
                let mut row = vec![
                    p.t.to_string(),
                    p.lambda.to_string(),
                    p.gamma.to_string(),
                    p.abs_z.to_string(),
                    o.abs_z.to_string(),
                ];
                for z in &p.z {
                    row.push(z.re.to_string());
                    row.push(z.im.to_string());
                }
                row.extend(
                    [
                        p.max_residual,
                        p.majorant.r_weighted_l2,
                        p.majorant.rtilde_weighted,
                    ]
                    .map(|v| v.to_string()),
                );
                w.write_record(&row)?;
            }
            w.flush()?;
        }
        if let Some(mut w) = csv_writer(self.out, "majorants.csv")? {
            w.write_record(["t", "Z", "R1", "R2", "R3", "R4", "R5"])?;
            for i in 0..m.t.len() {
                let mut row = vec![m.t[i].to_string(), m.z[i].to_string()];
                row.extend(m.r.iter().map(|v| v[i].to_string()));
                w.write_record(&row)?;
            }
            w.flush()?;
        }
        self.art.track = Some(tr);
        Ok(())
    }

    fn decompose(&mut self, r: &mut Residuals) -> Result<()> {
        let nf = need(&self.art.normal_form, "normal form")?;
        let tr = need(&self.art.track, "PDE run")?;
        let frame = self.frame()?;
        let opts = DecomposeOptions::default();
        let d = decompose(&tr.psi, &frame, Some(&nf.coeffs), &tr.last, &opts)?;
        let rt = extract_rtilde(&d, nf);
        let abs_z = norm(&d.state.z);
        let ms = MajorantSample::new(tr.last.t, abs_z, &d.r, &rt, self.cfg.nu);

        let theta = ChaCha8Rng::seed_from_u64(self.cfg.seed).random_range(0.5..2.5);
        let rot: Vec<C64> = tr
            .psi
            .iter()
            .map(|p| p * C64::from_polar(1.0, theta))
            .collect();
        let guess = ModulationState {
            gamma: tr.last.gamma + theta,
            ..tr.last.clone()
        };
        let dr = decompose(&rot, &frame, Some(&nf.coeffs), &guess, &opts)?;
        let dz = d
            .state
            .z
            .iter()
            .zip(&dr.state.z)
            .map(|(a, b)| (a.norm() - b.norm()).abs())
            .fold(0.0, f64::max);
        r.insert("orthogonality_residual".into(), d.max_residual());
        r.insert("iterations".into(), d.iterations as f64);
        r.insert("lambda".into(), d.state.lambda);
        r.insert("abs_z".into(), abs_z);
        r.insert("r_weighted_l2".into(), ms.r_weighted_l2);
        r.insert("rtilde_weighted".into(), ms.rtilde_weighted);
        r.insert("r_h3".into(), ms.r_h3);
        r.insert(
            "gauge_phase_error".into(),
            (dr.state.gamma - d.state.gamma - theta).abs(),
        );
        r.insert(
            "gauge_lambda_error".into(),
            (dr.state.lambda - d.state.lambda).abs(),
        );
        r.insert("gauge_modulus_error".into(), dz);
        if let Some(dir) = self.out {
            let g = &frame.grid;
            grid::dump_complex(
                &dir.join("final_psi.nlsf"),
                &ComplexField::new(g.clone(), tr.psi.clone())?,
            )?;
        }
        self.art.decomposition = Some(d);
        Ok(())
    }

    fn run(&mut self, stage: Stage, r: &mut Residuals) -> Result<()> {
        match stage {
            Stage::Spectrum => self.spectrum(r),
            Stage::Soliton => self.soliton(r),
            Stage::Modes => self.modes(r),
            Stage::Fgr => self.fgr(r),
            Stage::NormalForm => self.normal_form(r),
            Stage::Ode => self.ode(r),
            Stage::Evolve => self.evolve(r),
            Stage::Decompose => self.decompose(r),
        }
    }
}

/// Runs every stage up to and including `target`, stopping at the first failure.
/// With `out` set, CSV artifacts and `manifest.json` are written there.
pub fn run_pipeline(
    cfg: &ExperimentConfig,
    target: Stage,
    out: Option<&Path>,
) -> Result<PipelineRun> {
    cfg.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.toml"), cfg.to_toml())?;
    }
    let mut manifest = RunManifest::new(cfg);
    let mut runner = Runner {
        cfg,
        out,
        art: Artifacts::default(),
    };
    let mut error = None;
    for stage in Stage::ALL.into_iter().filter(|s| *s <= target) {
        let start = Instant::now();
        let mut residuals = Residuals::new();
        let res = runner.run(stage, &mut residuals);
        residuals.retain(|_, v| v.is_finite());
        let mut rec = StageRecord {
            stage: stage.name().to_string(),
            ok: res.is_ok(),
            seconds: start.elapsed().as_secs_f64(),
            residuals,
            error: None,
        };
        if stage == Stage::Ode {
            manifest.lyapunov_c = rec.residuals.get("lyapunov_c").copied();
        }
        if let Err(e) = res {
            let e = e.in_stage(stage.name());
            rec.error = Some(e.to_string());
            manifest.stages.push(rec);
            error = Some(e);
            break;
        }
        manifest.stages.push(rec);
    }
    if let Some(dir) = out {
        manifest.write(&dir.join("manifest.json"))?;
    }
    Ok(PipelineRun {
        manifest,
        artifacts: runner.art,
        error,
    })
}

/// Output directory of one sweep member.
pub fn sweep_dir(base: &Path, key: &str, value: &str) -> PathBuf {
    let safe: String = value
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    base.join(format!("{key}={safe}"))
}

/// Sizes the global worker pool from `NLSLAB_THREADS` when set.
pub fn init_threads() -> Result<Option<usize>> {
    let Ok(v) = std::env::var("NLSLAB_THREADS") else {
        return Ok(None);
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        Error::Config(format!(
            "NLSLAB_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size worker pool: {e}")))?;
    Ok(Some(n))
}
