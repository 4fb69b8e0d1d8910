use std::sync::OnceLock;

use nlslab::grid::Grid;
use nlslab::linearized::{solve_internal_modes, LinearizedOps, ModeOptions, RieszProjector};
use nlslab::normal_form::*;
use nlslab::potential::{build_potential, PotentialSpec, Well};
use nlslab::soliton::{continue_soliton, SolitonOptions};
use nlslab::spectrum::solve_bound_states;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const I: C64 = C64::new(0.0, 1.0);

fn ring(ax: f64, ay: f64) -> PotentialSpec {
    wells(&[
        [ax, 0.0, 0.0],
        [-ax, 0.0, 0.0],
        [0.0, ay, 0.0],
        [0.0, -ay, 0.0],
    ])
}

fn wells(c: &[[f64; 3]]) -> PotentialSpec {
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

fn build(spec: &PotentialSpec, gap: f64) -> NormalForm {
    let g = Grid::new(32, 12.0).unwrap();
    let v = build_potential(spec, &g).unwrap();
    let s = solve_bound_states(&v, 3, 1e-9).unwrap();
    let sol = continue_soliton(&s, s.e0 - gap, &SolitonOptions::default()).unwrap();
    let ops = LinearizedOps::new(&sol);
    let modes = solve_internal_modes(&ops, &s, 2, &ModeOptions::default()).unwrap();
    let proj = RieszProjector::new(&sol, &modes);
    NormalForm::build(&ops, &proj, &modes, &NormalFormOptions::default()).unwrap()
}

fn symmetric() -> &'static NormalForm {
    static NF: OnceLock<NormalForm> = OnceLock::new();
    NF.get_or_init(|| build(&ring(1.5, 1.5), 0.05))
}

fn split() -> &'static NormalForm {
    static NF: OnceLock<NormalForm> = OnceLock::new();
    NF.get_or_init(|| {
        build(
            &wells(&[
                [1.3, 0.0, 0.0],
                [-1.3, 0.0, 0.0],
                [0.3, 1.8, 0.0],
                [0.0, -1.8, 0.0],
            ]),
            0.05,
        )
    })
}

fn random_z(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> Vec<C64> {
    let z: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let s = z.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    z.iter().map(|x| x * (amp / s)).collect()
}

fn cmax(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

#[test]
fn n_im_matches_antisymmetric_closed_form() {
    let nf = symmetric();
    let b = &nf.basis;
    let n = b.n_modes();
    for m in 0..n {
        for k in 0..n {
            let mono = Monomial::new(MultiIndex::unit(n, m), MultiIndex::unit(n, k));
            let got = nf.sources.n_im(&mono).unwrap();
            let scale = cmax(&got).max(1e-300);
            for i in 0..got.len() {
                let want =
                    -0.5 * I * b.phi[i] * (b.xi[k][i] * b.eta[m][i] - b.xi[m][i] * b.eta[k][i]);
                assert!((got[i] - want).norm() <= 1e-13 * scale.max(1.0));
            }
            if m == k {
                assert!(cmax(&got) == 0.0);
            }
        }
    }
}

#[test]
fn quadratic_sources_reconstruct_direct_nonlinearity() {
    let nf = symmetric();
    let b = &nf.basis;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let z = random_z(&mut rng, b.n_modes(), 0.7);
        let (a1, b1) = b.linear_fields(&z);
        let (f1, f2) = nf.sources.quadratic.eval(&z);
        for i in 0..a1.len() {
            let want1 = 2.0 * b.phi[i] * a1[i] * b1[i];
            let want2 = -3.0 * b.phi[i] * a1[i] * a1[i] - b.phi[i] * b1[i] * b1[i];
            assert!((f1[i] - want1).norm() < 1e-10);
            assert!((f2[i] - want2).norm() < 1e-10);
        }
    }
}

#[test]
fn cubic_sources_match_taylor_coefficient_of_exact_nonlinearity() {
    let nf = symmetric();
    let b = &nf.basis;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = random_z(&mut rng, b.n_modes(), 0.8);
    let (a1, b1) = b.linear_fields(&z);
    let (r1, r2) = nf.r_fields(&z);
    let c = evaluate_corrections(&nf.coeffs.of_degree(2), &z).unwrap();
    let len = a1.len();
    let mut a2 = vec![0.0; len];
    let mut b2 = vec![0.0; len];
    for i in 0..len {
        a2[i] = c.a1 * b.dphi[i] + r1[i];
        b2[i] = c.a2 * b.phi[i] + r2[i];
        for k in 0..b.n_modes() {
            a2[i] += c.p[k] * b.xi[k][i];
            b2[i] += c.q[k] * b.eta[k][i];
        }
    }
    // t³ coefficient of JN(t(A₁,B₁) + t²(A₂,B₂)) by an 8-point roots-of-unity transform
    let m = 8;
    let mut c1 = vec![C64::new(0.0, 0.0); len];
    let mut c2 = vec![C64::new(0.0, 0.0); len];
    for j in 0..m {
        let t = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / m as f64);
        let w = t.powi(-3) / m as f64;
        for i in 0..len {
            let x = t * a1[i] + t * t * a2[i];
            let y = t * b1[i] + t * t * b2[i];
            let s = x * x + y * y;
            c1[i] += w * (2.0 * b.phi[i] * x * y + s * y);
            c2[i] -= w * (3.0 * b.phi[i] * x * x + b.phi[i] * y * y + s * x);
        }
    }
    let (f1, f2) = nf.sources.cubic.as_ref().unwrap().total.eval(&z);
    let scale = cmax(&c1).max(cmax(&c2));
    for i in 0..len {
        assert!((f1[i] - c1[i]).norm() < 1e-10 * scale);
        assert!((f2[i] - c2[i]).norm() < 1e-10 * scale);
    }
}

#[test]
fn cancellation_lemma_holds() {
    for nf in [symmetric(), split()] {
        let rep = verify_cancellation(&nf.basis, &nf.sources, 1e-6).unwrap();
        assert!(rep.max_discrepancy < 1e-6, "{}", rep.max_discrepancy);
        for p in rep.pairs.iter().filter(|p| p.m == p.n) {
            assert_eq!(p.rhs_im, 0.0);
            assert!(p.lhs_re.abs() + p.lhs_im.abs() < 1e-14);
        }
    }
}

#[test]
fn degenerate_pair_lhs_vanishes() {
    let nf = symmetric();
    let e = &nf.basis.energies;
    assert!((e[0] - e[1]).abs() < 1e-6 * e[0], "{e:?}");
    let rep = verify_cancellation(&nf.basis, &nf.sources, 1e-6).unwrap();
    let off = rep.pairs.iter().find(|p| p.m != p.n).unwrap();
    assert!(
        off.lhs_re.hypot(off.lhs_im)
            < 1e-6 * nf.basis.grid.dot(&nf.basis.phi, &nf.basis.phi) * e[0]
    );
}

#[test]
fn quotient_and_closed_form_agree_off_resonance() {
    let nf = split();
    let b = &nf.basis;
    let n = b.n_modes();
    let mut tested = 0;
    for m in 0..n {
        for k in 0..n {
            let mono = Monomial::new(MultiIndex::unit(n, m), MultiIndex::unit(n, k));
            if mono.frequency(&b.energies).abs() <= 0.1 * b.e0.min(1.0) {
                continue;
            }
            let q = a1_quotient(b, &nf.sources, &mono).unwrap().unwrap();
            let c = a1_closed_form(b, m, k);
            assert!(c.abs() > 1e-6 * a1_closed_form(b, m, m).abs());
            assert!((q - c).norm() < 1e-6 * c.abs(), "{q} vs {c}");
            tested += 1;
        }
    }
    assert!(
        tested > 0,
        "no off-resonant pair, energies {:?}",
        b.energies
    );
}

#[test]
fn upsilon_two_routes_agree_and_is_real() {
    let nf = symmetric();
    let b = &nf.basis;
    let n = b.n_modes();
    for a in 0..n {
        for c in 0..n {
            let mono = Monomial::new(MultiIndex::unit(n, a), MultiIndex::unit(n, c));
            let via = nf.coeffs.a1[&mono]
                - b.grid.dot_cr(&nf.sources.n_re(&mono).unwrap(), &b.dphi) / b.phi_dphi;
            let u = nf.coeffs.upsilon[a][c];
            assert!((via - u).norm() < 1e-10 * u.abs().max(1e-3));
            assert!((u - nf.coeffs.upsilon[c][a]).abs() < 1e-12 * u.abs().max(1.0));
        }
    }
}

#[test]
fn coefficient_families_are_closed_and_checked() {
    for nf in [symmetric(), split()] {
        let c = &nf.coeffs;
        assert!(c.closure_defect < 1e-10, "{}", c.closure_defect);
        assert!(c.pq_residual < 1e-10, "{}", c.pq_residual);
        assert!(c.margins.iter().all(|m| m.value.abs() >= c.floor));
        for (m, v) in c.a1.iter().chain(&c.a2) {
            let w = c.a1.get(&m.conj()).or_else(|| c.a2.get(&m.conj()));
            assert!(w.is_some());
            let _ = v;
        }
        assert!(c.a2.keys().all(|m| m.degree().0 != m.degree().1));
        for k in 0..c.n_modes {
            for (m, v) in &c.p[k] {
                assert!((c.p[k][&m.conj()] - v.conj()).norm() < 1e-14 * v.norm().max(1.0));
            }
        }
        let e = &c.energies;
        for mg in c
            .margins
            .iter()
            .filter(|m| m.family == "PQ" && m.monomial.contains("(0,0)"))
        {
            let k = mg.k.unwrap();
            let mono = c.p[k]
                .keys()
                .find(|x| x.to_string() == mg.monomial)
                .unwrap();
            if mono.degree().1 == 0 {
                let w = mono.frequency(e);
                assert!((mg.value - (e[k] * e[k] - w * w)).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn corrections_are_real_and_quadratically_small() {
    let nf = symmetric();
    let n = nf.basis.n_modes();
    let zero = vec![C64::new(0.0, 0.0); n];
    let c0 = evaluate_corrections(&nf.coeffs, &zero).unwrap();
    assert_eq!(c0.a1, 0.0);
    assert!(c0.p.iter().chain(&c0.q).all(|x| *x == 0.0));
    let bound: f64 = nf
        .coeffs
        .a1
        .iter()
        .filter(|(m, _)| m.degree().0 + m.degree().1 == 2)
        .map(|(_, v)| v.norm())
        .sum();
    let bound3: f64 = nf
        .coeffs
        .a1
        .iter()
        .filter(|(m, _)| m.degree().0 + m.degree().1 == 3)
        .map(|(_, v)| v.norm())
        .sum();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let amp = rng.random_range(0.0..0.3);
        let z = random_z(&mut rng, n, amp);
        let c = evaluate_corrections(&nf.coeffs, &z).unwrap();
        assert!(c.a1.abs() <= bound * amp * amp + bound3 * amp.powi(3) + 1e-15);
    }
}

/// Residuals of the projected modulation equations at `z` with `R = Σ R_{m,n} z^m z̄^n`,
/// `γ̇ = Υ`, `λ̇ = 0` and `ż` from the `Θ` tensors.
fn modulation_residuals(nf: &NormalForm, z: &[C64]) -> (f64, f64, f64) {
    let b = &nf.basis;
    let g = &b.grid;
    let n = b.n_modes();
    let d = b.phi_dphi;
    let (r1, r2) = nf.r_fields(z);
    let (w1, w2, c) = nf.perturbation(z, Some((&r1, &r2))).unwrap();
    let (imn, ren) = nonlinearity(&b.phi, &w1, &w2);
    let th = nf.theta.total(z);
    let zdot: Vec<C64> = (0..n).map(|k| -I * b.energies[k] * z[k] + th[k]).collect();
    let rate = correction_rates(&nf.coeffs, z, &zdot);
    let gd = nf.coeffs.upsilon_at(z);
    let mut zres: f64 = 0.0;
    for k in 0..n {
        let y = z[k] + C64::new(c.p[k], c.q[k]);
        let lhs = zdot[k] + C64::new(rate.p[k], rate.q[k]) + I * b.energies[k] * y;
        let rhs = g.dot(&imn, &b.eta[k]) - I * g.dot(&ren, &b.xi[k])
            + gd * (g.dot(&w2, &b.eta[k]) - I * g.dot(&w1, &b.xi[k]));
        zres = zres.max((lhs - rhs).norm());
    }
    let lres = rate.a1 - g.dot(&imn, &b.phi) / d - gd * g.dot(&w2, &b.phi) / d;
    let gres = gd + rate.a2 - c.a1 + g.dot(&ren, &b.dphi) / d + gd * g.dot(&w1, &b.dphi) / d;
    (zres, lres.abs(), gres.abs())
}

#[test]
fn modulation_equations_close_at_quartic_order() {
    for nf in [symmetric(), split()] {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..3 {
            let z = random_z(&mut rng, nf.basis.n_modes(), 1.0);
            let at =
                |s: f64| modulation_residuals(nf, &z.iter().map(|x| x * s).collect::<Vec<_>>());
            let (a, b) = (at(0.02), at(0.01));
            for (x, y) in [(a.0, b.0), (a.1, b.1), (a.2, b.2)] {
                let slope = (x / y).log2();
                assert!(slope > 3.7, "residual slope {slope}: {a:?} {b:?}");
            }
        }
    }
}
