use std::collections::HashMap;
use std::sync::OnceLock;

use nlslab::effective::ode::integrate as integrate_ode;
use nlslab::effective::{
    integrate, lyapunov_check, re_theta_sum, EffectiveModel, IntegrateOptions, ModulationState,
    OdeOptions,
};
use nlslab::grid::{FieldPair, Grid};
use nlslab::linearized::LinearizedOps;
use nlslab::linearized::{
    projector_checks, random_pair, solve_internal_modes, InternalModes, ModeOptions,
};
use nlslab::normal_form::{
    a1_closed_form, a1_quotient, build_sources, verify_cancellation, ModeBasis, Monomial,
    MultiIndex,
};
use nlslab::pipeline::{run_pipeline, ExperimentConfig, PipelineRun, Stage};
use nlslab::potential::{build_potential, PotentialSpec, Well};
use nlslab::scattering::measure::{
    limiting_absorption_pairing, project_continuum, spectral_measure_pairing,
};
use nlslab::scattering::{gamma_form, Interaction, SphereQuadrature};
use nlslab::soliton::{continue_soliton, SolitonOptions, SolitonPoint};
use nlslab::spectrum::{solve_bound_states, DiscreteSpectrum};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RESONANT: &str = "double-well-resonant";
const SPLIT: &str = "split-ring";

fn ring(ax: f64, ay: f64) -> PotentialSpec {
    let c = [
        [ax, 0.0, 0.0],
        [-ax, 0.0, 0.0],
        [0.0, ay, 0.0],
        [0.0, -ay, 0.0],
    ];
    PotentialSpec {
        wells: c
            .iter()
            .map(|&center| Well {
                center,
                depth: 3.0,
                width: 1.2,
            })
            .collect(),
    }
}

fn split_ring() -> PotentialSpec {
    let c = [
        [1.3, 0.0, 0.0],
        [-1.3, 0.0, 0.0],
        [0.3, 1.8, 0.0],
        [0.0, -1.8, 0.0],
    ];
    PotentialSpec {
        wells: c
            .iter()
            .map(|&center| Well {
                center,
                depth: 3.0,
                width: 1.2,
            })
            .collect(),
    }
}

fn spectrum(spec: &PotentialSpec) -> DiscreteSpectrum {
    let g = Grid::new(32, 12.0).unwrap();
    solve_bound_states(&build_potential(spec, &g).unwrap(), 3, 1e-9).unwrap()
}

fn modes_at(s: &DiscreteSpectrum, gap: f64) -> (SolitonPoint, InternalModes) {
    let sol = continue_soliton(s, s.e0 - gap, &SolitonOptions::default()).unwrap();
    let modes =
        solve_internal_modes(&LinearizedOps::new(&sol), s, 2, &ModeOptions::default()).unwrap();
    (sol, modes)
}

/// Bundled configs run through the ODE stage, shared across criteria.
fn bundled(name: &str) -> &'static PipelineRun {
    static RUNS: OnceLock<HashMap<&'static str, PipelineRun>> = OnceLock::new();
    let runs = RUNS.get_or_init(|| {
        [RESONANT, SPLIT]
            .into_iter()
            .map(|n| {
                let run =
                    run_pipeline(&ExperimentConfig::bundled(n).unwrap(), Stage::Ode, None).unwrap();
                assert!(run.error.is_none(), "{n}: {:?}", run.error);
                (n, run)
            })
            .collect()
    });
    &runs[name]
}

fn random_z(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> Vec<C64> {
    let z: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let s = z.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    z.iter().map(|x| x * (amp / s)).collect()
}

fn unit_pair(n: usize, a: usize, b: usize) -> Monomial {
    Monomial::new(MultiIndex::unit(n, a), MultiIndex::unit(n, b))
}

#[test]
fn criterion_01_cancellation_lemma() {
    for (spec, degenerate) in [(ring(1.5, 1.5), true), (split_ring(), false)] {
        let s = spectrum(&spec);
        for gap in [0.025, 0.05, 0.1] {
            let (sol, modes) = modes_at(&s, gap);
            let basis = ModeBasis::new(&sol, &modes).unwrap();
            let sources = build_sources(&basis);
            let rep = verify_cancellation(&basis, &sources, f64::INFINITY).unwrap();
            let scale = sol.mass() * s.e0;
            for p in &rep.pairs {
                let lhs = C64::new(p.lhs_re, p.lhs_im);
                if p.m == p.n || degenerate {
                    assert!(
                        lhs.norm() <= 1e-8 * scale,
                        "gap {gap} ({},{}): |lhs| = {:e}",
                        p.m,
                        p.n,
                        lhs.norm()
                    );
                } else {
                    let rel = (lhs - C64::new(0.0, p.rhs_im)).norm() / p.rhs_im.abs();
                    assert!(
                        rel <= 1e-6,
                        "gap {gap} ({},{}): relative discrepancy {rel:e}",
                        p.m,
                        p.n
                    );
                }
            }
        }
    }
}

#[test]
fn criterion_02_resonance_safe_coefficients() {
    let mut sups = Vec::new();
    let mut splits = Vec::new();
    let mut quotient_checks = 0;
    let mut nonzero_checks = 0;
    {
        let s = spectrum(&split_ring());
        let (sol, modes) = modes_at(&s, 0.05);
        let basis = ModeBasis::new(&sol, &modes).unwrap();
        let sources = build_sources(&basis);
        for (m, k) in [(0, 1), (1, 0)] {
            let c = a1_closed_form(&basis, m, k);
            let mono = unit_pair(2, m, k);
            let w = mono.frequency(&basis.energies);
            if w.abs() > 0.1 {
                let q = a1_quotient(&basis, &sources, &mono).unwrap().unwrap();
                assert!(
                    (q - c).norm() <= 1e-6 * c.abs(),
                    "split ring ({m},{k}): {q} vs {c}"
                );
                nonzero_checks += 1;
            }
        }
    }
    for ay in [2.0, 1.8, 1.6, 1.51, 1.501, 1.5001, 1.50001, 1.5] {
        let s = spectrum(&ring(1.5, ay));
        splits.push((s.neutral[0].e - s.neutral[1].e).abs() / s.e0);
        let (sol, modes) = modes_at(&s, 0.05);
        let basis = ModeBasis::new(&sol, &modes).unwrap();
        let sources = build_sources(&basis);
        let coeffs: Vec<(usize, usize, f64)> = (0..2)
            .flat_map(|m| (0..2).map(move |k| (m, k)))
            .map(|(m, k)| (m, k, a1_closed_form(&basis, m, k)))
            .collect();
        let sup = coeffs.iter().fold(0.0f64, |a, c| a.max(c.2.abs()));
        assert!(sup > 0.0);
        for &(m, k, c) in &coeffs {
            let mono = unit_pair(2, m, k);
            if mono.frequency(&basis.energies).abs() > 0.1 {
                let q = a1_quotient(&basis, &sources, &mono).unwrap().unwrap();
                assert!(
                    (q - c).norm() <= 1e-6 * sup,
                    "ay {ay} ({m},{k}): quotient {q} vs closed form {c}"
                );
                quotient_checks += 1;
            }
        }
        sups.push(sup);
    }
    assert!(
        splits[0] >= 0.1 && *splits.last().unwrap() < 1e-6,
        "{splits:?}"
    );
    assert!(quotient_checks > 0 && nonzero_checks > 0);
    let (lo, hi) = sups
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(hi <= 2.0 * lo, "sup |A1| across sweep: {sups:?}");
}

#[test]
fn criterion_03_determinant_margins() {
    for name in [RESONANT, SPLIT] {
        let nf = bundled(name).artifacts.normal_form.as_ref().unwrap();
        let c = &nf.coeffs;
        let e = &c.energies;
        assert!((c.floor - 1e-3 * nf.basis.e0).abs() <= 1e-15 * nf.basis.e0);
        let monos: Vec<Monomial> = (0..=3)
            .flat_map(|p| (0..=3 - p).flat_map(move |q| Monomial::all(2, p, q)))
            .collect();
        let mut dets = 0;
        for mg in &c.margins {
            assert!(
                mg.value.abs() >= c.floor,
                "{name}: {} {} = {:e}",
                mg.family,
                mg.monomial,
                mg.value
            );
            if mg.family == "PQ" {
                let mono = monos.iter().find(|m| m.to_string() == mg.monomial).unwrap();
                let k = mg.k.unwrap();
                let w = mono.frequency(e);
                assert!(
                    (mg.value - (e[k] * e[k] - w * w)).abs() <= 1e-12,
                    "{name}: {} k={k}",
                    mg.monomial
                );
                dets += 1;
            }
        }
        assert!(dets > 0);
    }
    let deep = run_pipeline(
        &ExperimentConfig::bundled("single-deep-well").unwrap(),
        Stage::NormalForm,
        None,
    )
    .unwrap();
    assert!(deep.artifacts.normal_form.is_none() && deep.error.is_some());
}

#[test]
fn criterion_04_fgr_oracle_equivalence() {
    let s = spectrum(&ring(1.5, 1.5));
    let g = &s.grid;
    let inter = Interaction::new(g, &s.potential).unwrap();
    let q = SphereQuadrature::product(12).unwrap();
    let bound: Vec<&[f64]> = std::iter::once(&s.phi[..])
        .chain(s.neutral.iter().map(|m| &m.xi_lin[..]))
        .collect();
    for seed in 0..5 {
        let f = random_pair(g, 100 + seed).first;
        let h = random_pair(g, 200 + seed).second;
        let (fc, hc) = (
            project_continuum(g, &f, &bound),
            project_continuum(g, &h, &bound),
        );
        for k in [0.5, 0.8, 1.2] {
            let m = spectral_measure_pairing(&inter, k, &fc, &hc, &q, 1e-10).unwrap();
            let (la, _) = limiting_absorption_pairing(&inter, &bound, k, &f, &h, 1e-10).unwrap();
            assert!(
                (m - la).abs() <= 0.02 * m.abs(),
                "pair {seed}, k = {k}: {m} vs {la}"
            );
        }
    }
}

#[test]
fn criterion_05_fgr_positivity() {
    let run = bundled(RESONANT);
    let (table, scan) = run.artifacts.fgr.as_ref().unwrap();
    assert!(scan.samples >= 1000);
    assert!(
        scan.min >= 1e-4 * scan.max,
        "min {} max {}",
        scan.min,
        scan.max
    );
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let z = random_z(&mut rng, 2, 1.0);
        let g0 = gamma_form(table, &z);
        for t in [0.5, 2.0, 3.0] {
            let zt: Vec<C64> = z.iter().map(|x| x * t).collect();
            assert!((gamma_form(table, &zt) - t.powi(4) * g0).abs() <= 1e-14 * t.powi(4) * g0);
        }
    }
}

#[test]
fn criterion_06_theta_structure() {
    for name in [RESONANT, SPLIT] {
        let theta = &bundled(name).artifacts.normal_form.as_ref().unwrap().theta;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let amp = rng.random_range(0.001..0.1);
            let z = random_z(&mut rng, 2, amp);
            for j in 2..5 {
                let (re, mag) = re_theta_sum(&z, theta, j);
                assert!(
                    re.abs() <= 1e-10 * amp * mag,
                    "{name} Θ{}: {re:e} vs |Θ| {mag:e}",
                    j + 1
                );
            }
        }
    }
    let theta = &bundled(RESONANT)
        .artifacts
        .normal_form
        .as_ref()
        .unwrap()
        .theta;
    assert!((theta.energies[0] - theta.energies[1]).abs() < 1e-6 * theta.energies[0]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let z = random_z(&mut rng, 2, 0.05);
        let (re, mag) = re_theta_sum(&z, theta, 1);
        assert!(re.abs() <= 1e-9 * 0.05 * mag, "Θ2: {re:e} vs |Θ| {mag:e}");
    }
}

#[test]
fn criterion_07_decay_law() {
    for name in [RESONANT, SPLIT] {
        let m = &bundled(name).manifest;
        let slope = m.residual("ode", "decay_slope").unwrap();
        assert!((-0.6..=-0.4).contains(&slope), "{name}: slope {slope}");
        assert_eq!(m.residual("ode", "truncated"), Some(0.0));
    }
    let (c, y0) = (0.7, 2.0);
    let ts: Vec<f64> = (0..=50)
        .map(|i| 10f64.powf(-2.0 + 6.0 * i as f64 / 50.0))
        .collect();
    let opts = OdeOptions {
        rtol: 1e-10,
        atol: 1e-14,
        ..Default::default()
    };
    let (ys, _) = integrate_ode(
        |_, y| vec![-c * y[0] * y[0]],
        0.0,
        &[C64::new(y0, 0.0)],
        &ts,
        &opts,
        |_, _| Ok(true),
    )
    .unwrap();
    for (t, y) in ts.iter().zip(&ys) {
        let exact = y0 / (1.0 + c * y0 * t);
        assert!(
            (y[0].re - exact).abs() <= 1e-6 * exact,
            "t = {t}: {} vs {exact}",
            y[0].re
        );
    }
}

#[test]
fn criterion_08_lyapunov_monotonicity() {
    for name in [RESONANT, SPLIT] {
        let run = bundled(name);
        let nf = run.artifacts.normal_form.as_ref().unwrap();
        let (table, _) = run.artifacts.fgr.as_ref().unwrap();
        let lyap = run.artifacts.lyapunov.as_ref().unwrap();
        let model = EffectiveModel::frozen(nf, 0.0);
        let ts: Vec<f64> = (0..=200).map(|i| 25.0 * i as f64).collect();
        let peak = |amp: f64| {
            let z = vec![C64::new(0.6 * amp, 0.0), C64::new(0.0, 0.8 * amp)];
            let s0 = ModulationState {
                t: 0.0,
                lambda: nf.basis.lambda,
                gamma: 0.0,
                z,
            };
            let tr = integrate(
                &s0,
                &ts,
                &model,
                None,
                Some((lyap, table)),
                &IntegrateOptions::default(),
            )
            .unwrap();
            let rep = lyapunov_check(&tr, lyap, 0.05);
            assert_eq!(rep.considered, ts.len());
            assert_eq!(rep.increases, 0, "{name}: q² increased at amplitude {amp}");
            rep.max_residual
        };
        let exponent = (peak(0.04) / peak(0.02)).log2();
        assert!(
            (4.0..=6.0).contains(&exponent),
            "{name}: residual amplitude exponent {exponent}"
        );
    }
}

#[test]
fn criterion_09_pde_ode_consistency() {
    let cfg = ExperimentConfig::bundled(RESONANT)
        .unwrap()
        .with_override("grid.n", "48")
        .unwrap()
        .with_override("grid.half_width", "18")
        .unwrap();
    let z0: f64 = cfg
        .evolve
        .z0
        .iter()
        .map(|[a, b]| a * a + b * b)
        .sum::<f64>()
        .sqrt();
    assert!((z0 - 0.05).abs() < 1e-12);
    let run = run_pipeline(&cfg, Stage::Evolve, None).unwrap();
    assert!(run.error.is_none(), "{:?}", run.error);
    let m = &run.manifest;
    let r = |k: &str| m.residual("evolve", k).unwrap();
    assert!(r("horizon") <= 1e3 && r("horizon") <= r("safe_horizon"));
    assert!(
        r("ode_relative_deviation") <= 0.2,
        "{}",
        r("ode_relative_deviation")
    );
    assert!(r("max_orthogonality_residual") <= 1e-9);
    assert!(r("mass_drift_rate") <= 1e-10);

    let track = run.artifacts.track.as_ref().unwrap();
    let t0 = track.majorants.t0;
    let w: Vec<f64> = track
        .samples
        .iter()
        .map(|s| (t0 + s.t) * s.majorant.r_weighted_l2)
        .collect();
    let zmaj = track.majorants.z.last().copied().unwrap();
    let sup = w.iter().cloned().fold(0.0, f64::max);
    assert!(
        sup.is_finite() && sup <= zmaj * zmaj,
        "sup {sup:e} vs Z² {:e}",
        zmaj * zmaj
    );
    let half = w.len() / 2;
    let early = w[..half].iter().cloned().fold(0.0, f64::max);
    let late = w[half..].iter().cloned().fold(0.0, f64::max);
    assert!(late <= 2.0 * early, "early {early:e} late {late:e}");
}

#[test]
fn criterion_10_projector_algebra() {
    let run = bundled(RESONANT);
    let ops = run.artifacts.ops.as_ref().unwrap();
    let proj = run.artifacts.projector.as_ref().unwrap();
    let c = projector_checks(ops, proj, 5, 10);
    assert!(c.idempotency <= 1e-8, "{c:?}");
    assert!(c.annihilation <= 1e-8, "{c:?}");
    assert!(c.zero_mode_chain <= 1e-8, "{c:?}");
    let g = &proj.grid;
    let zero = vec![0.0; g.len()];
    let mut dirs = vec![
        (proj.dphi.clone(), zero.clone()),
        (zero.clone(), proj.phi.clone()),
    ];
    for n in 0..proj.xi.len() {
        dirs.push((proj.xi[n].clone(), zero.clone()));
        dirs.push((zero.clone(), proj.eta[n].clone()));
    }
    assert_eq!(dirs.len(), 2 * proj.xi.len() + 2);
    for (a, b) in dirs {
        let f = FieldPair::new(g.clone(), a, b).unwrap();
        assert!(proj.project_continuous(&f).norm() <= 1e-8 * f.norm());
    }
    let f = random_pair(g, 3);
    let pd = proj.project_discrete(&f);
    assert!(proj.project_discrete(&pd).sub(&pd).norm() <= 1e-8 * f.norm());
}
