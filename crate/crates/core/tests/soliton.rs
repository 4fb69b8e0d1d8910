use std::sync::OnceLock;

use nlslab::grid::Grid;
use nlslab::potential::{build_potential, PotentialSpec, Well};
use nlslab::soliton::{
    branch, continue_soliton, leading_delta, phi_fourth, write_branch_csv, SolitonOptions,
    SolitonPoint,
};
use nlslab::spectrum::{solve_bound_states, DiscreteSpectrum};
use nlslab::Error;

fn spectrum() -> &'static DiscreteSpectrum {
    static S: OnceLock<DiscreteSpectrum> = OnceLock::new();
    S.get_or_init(|| {
        let c = [
            [1.5, 0.0, 0.0],
            [-1.5, 0.0, 0.0],
            [0.0, 1.5, 0.0],
            [0.0, -1.5, 0.0],
        ];
        let spec = PotentialSpec {
            wells: c
                .iter()
                .map(|&center| Well {
                    center,
                    depth: 3.0,
                    width: 1.2,
                })
                .collect(),
        };
        let g = Grid::new(32, 12.0).unwrap();
        solve_bound_states(&build_potential(&spec, &g).unwrap(), 3, 1e-9).unwrap()
    })
}

fn point(gap: f64) -> SolitonPoint {
    let s = spectrum();
    continue_soliton(s, s.e0 - gap, &SolitonOptions::default()).unwrap()
}

const GAPS: [f64; 4] = [1e-4, 4e-4, 1.6e-3, 6.4e-3];

#[test]
fn profile_and_derivative_residuals_meet_tolerance() {
    for gap in [1e-4, 1e-2, 0.05] {
        let p = point(gap);
        assert!(
            p.newton_residual <= 1e-10 && p.profile_residual() <= 1e-10,
            "{gap}: {}",
            p.newton_residual
        );
        assert!(p.dlambda_residual <= 1e-10, "{gap}: {}", p.dlambda_residual);
        let l_minus_phi = p.l_minus().apply(&p.phi);
        assert!(p.grid.norm(&l_minus_phi) <= 1e-10);
        let peak = p.phi.iter().cloned().fold(0.0, f64::max);
        assert!(p.phi.iter().all(|&v| v > -1e-4 * peak));
        assert!(p.grid.dot(&p.phi, &spectrum().phi) > 0.0);
    }
}

#[test]
fn remainder_is_cubic_in_delta() {
    let s = spectrum();
    let c: Vec<f64> = GAPS
        .iter()
        .map(|&gap| {
            let p = point(gap);
            let r: Vec<f64> = p
                .phi
                .iter()
                .zip(&s.phi)
                .map(|(u, f)| u - p.delta * f)
                .collect();
            s.grid.norm(&r) / p.delta.powi(3)
        })
        .collect();
    let (lo, hi) = c
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(hi / lo < 1.5, "{c:?}");
}

#[test]
fn amplitude_obeys_leading_order_law() {
    let s = spectrum();
    let phi4 = phi_fourth(s);
    let dev: Vec<f64> = GAPS
        .iter()
        .map(|&gap| (point(gap).delta.powi(2) * phi4 / gap - 1.0).abs())
        .collect();
    assert!(dev[0] < 1e-3, "{dev:?}");
    for w in dev.windows(2) {
        assert!(w[0] < w[1], "{dev:?}");
    }
    let lead = leading_delta(s, s.e0 - 1e-4);
    assert!((point(1e-4).delta / lead - 1.0).abs() < 1e-3);
}

#[test]
fn mass_derivative_matches_finite_difference() {
    let (gap, h) = (0.05, 1e-4);
    let p = point(gap);
    let fd = (point(gap - h).mass() - point(gap + h).mass()) / (2.0 * h);
    let exact = 2.0 * p.phi_dphi();
    assert!((fd - exact).abs() <= 1e-4 * exact.abs(), "{fd} vs {exact}");
}

#[test]
fn derivative_has_the_mass_sign_and_scaling() {
    let s = spectrum();
    let norm2 = s.grid.dot(&s.phi, &s.phi);
    let c1: Vec<f64> = GAPS
        .iter()
        .map(|&gap| {
            let p = point(gap);
            assert!(p.phi_dphi() < 0.0);
            s.grid.dot(&p.dphi, &s.phi) / norm2 * gap.sqrt()
        })
        .collect();
    for c in &c1 {
        assert!((c / c1[0] - 1.0).abs() < 0.05, "{c1:?}");
    }
    let d: Vec<f64> = [1e-3, 1e-2, 0.05]
        .iter()
        .map(|&g| point(g).phi_dphi().abs())
        .collect();
    assert!(d.iter().all(|&x| x > 1.0), "{d:?}");
}

#[test]
fn out_of_range_lambda_is_rejected() {
    let s = spectrum();
    assert!(matches!(
        continue_soliton(s, s.e0 + 0.01, &SolitonOptions::default()),
        Err(Error::Config(_))
    ));
    let tight = SolitonOptions {
        delta0: 0.01,
        ..Default::default()
    };
    assert!(matches!(
        continue_soliton(s, s.e0 - 0.02, &tight),
        Err(Error::Config(_))
    ));
    let starved = SolitonOptions {
        max_newton: 1,
        ..Default::default()
    };
    assert!(matches!(
        continue_soliton(s, s.e0 - 0.05, &starved),
        Err(Error::Continuation { .. })
    ));
}

#[test]
fn branch_table_has_one_row_per_lambda() {
    let s = spectrum();
    let lambdas: Vec<f64> = [0.025, 0.05, 0.1].iter().map(|g| s.e0 - g).collect();
    let pts = branch(s, &lambdas, &SolitonOptions::default()).unwrap();
    let mut buf = Vec::new();
    write_branch_csv(&pts, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "lambda,delta,mass,phi_dphi,residual");
    assert_eq!(lines.count(), 3);
    assert!(pts.windows(2).all(|w| w[1].mass() > w[0].mass()));
}
