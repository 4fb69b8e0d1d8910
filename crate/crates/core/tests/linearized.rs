use std::sync::OnceLock;

use nlslab::grid::{FieldPair, Grid};
use nlslab::linearized::{
    omega, projector_checks, random_pair, solve_internal_modes, InternalModes, LinearizedOps,
    ModeOptions, RieszProjector,
};
use nlslab::potential::{build_potential, PotentialSpec, Well};
use nlslab::soliton::{continue_soliton, SolitonOptions, SolitonPoint};
use nlslab::spectrum::{solve_bound_states, DiscreteSpectrum};

struct Fixture {
    sol: SolitonPoint,
    ops: LinearizedOps,
    modes: InternalModes,
    proj: RieszProjector,
}

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

fn build(gap: f64) -> Fixture {
    let s = spectrum();
    let sol = continue_soliton(s, s.e0 - gap, &SolitonOptions::default()).unwrap();
    let ops = LinearizedOps::new(&sol);
    let modes = solve_internal_modes(&ops, s, 2, &ModeOptions::default()).unwrap();
    let proj = RieszProjector::new(&sol, &modes);
    Fixture {
        sol,
        ops,
        modes,
        proj,
    }
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| build(0.05))
}

fn pair(g: &Grid, first: &[f64], second: &[f64]) -> FieldPair {
    FieldPair::new(g.clone(), first.to_vec(), second.to_vec()).unwrap()
}

#[test]
fn mode_relations_and_biorthogonality() {
    let f = fixture();
    let g = &f.sol.grid;
    assert_eq!(f.modes.n(), 2);
    assert_eq!(f.modes.clusters, vec![vec![0, 1]]);
    assert!(f.modes.unexpected.is_empty(), "{:?}", f.modes.unexpected);
    for n in 0..2 {
        let e = f.modes.energies[n];
        let lp = f.ops.l_plus.apply(&f.modes.xi[n]);
        let lm = f.ops.l_minus.apply(&f.modes.eta[n]);
        let r1: Vec<f64> = lp
            .iter()
            .zip(&f.modes.eta[n])
            .map(|(a, b)| a - e * b)
            .collect();
        let r2: Vec<f64> = lm
            .iter()
            .zip(&f.modes.xi[n])
            .map(|(a, b)| a - e * b)
            .collect();
        let scale = g.norm(&f.modes.xi[n]);
        assert!(g.norm(&r1) <= 1e-8 * scale && g.norm(&r2) <= 1e-8 * scale);
        assert!(2.0 * e > f.sol.lambda);
        assert!(g.dot(&f.sol.phi, &f.modes.xi[n]).abs() < 1e-10);
        assert!(g.dot(&f.sol.dphi, &f.modes.eta[n]).abs() < 1e-10 * g.norm(&f.sol.dphi));
        for m in 0..2 {
            let target = if n == m { 1.0 } else { 0.0 };
            assert!((g.dot(&f.modes.xi[n], &f.modes.eta[m]) - target).abs() < 1e-10);
        }
    }
    assert!(f.modes.biorth_error < 1e-10);
}

#[test]
fn modes_bifurcate_from_linear_gaps() {
    let s = spectrum();
    let gaps = [2e-3, 8e-3, 3.2e-2];
    let mut shift = Vec::new();
    let mut split = Vec::new();
    for gap in gaps {
        let f = build(gap);
        let g = &f.sol.grid;
        for n in 0..2 {
            shift.push((f.modes.energies[n] - (s.e0 - s.neutral[n].e)).abs() / gap);
            let d: Vec<f64> = f.modes.xi[n]
                .iter()
                .zip(&f.modes.eta[n])
                .map(|(a, b)| a - b)
                .collect();
            split.push(g.norm(&d) / gap);
        }
    }
    for v in [&shift, &split] {
        let (lo, hi) = v
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        assert!(hi / lo < 1.5, "{v:?}");
        let slope = 1.0 + (v[2] / v[0]).ln() / (gaps[1] / gaps[0]).ln();
        assert!((slope - 1.0).abs() < 0.1, "{slope} {v:?}");
    }
}

#[test]
fn projector_fixes_the_discrete_span() {
    let f = fixture();
    let g = &f.sol.grid;
    let zero = vec![0.0; g.len()];
    let mut members = vec![pair(g, &zero, &f.sol.phi), pair(g, &f.sol.dphi, &zero)];
    for n in 0..2 {
        members.push(pair(g, &f.modes.xi[n], &f.modes.eta[n]));
    }
    for m in &members {
        assert!(f.proj.project_discrete(m).sub(m).norm() < 1e-10 * m.norm());
        assert!(f.proj.project_continuous(m).norm() < 1e-10 * m.norm());
    }
}

#[test]
fn projector_algebra_on_random_pairs() {
    let f = fixture();
    let c = projector_checks(&f.ops, &f.proj, 4, 11);
    assert!(c.idempotency < 1e-8, "{c:?}");
    assert!(c.annihilation < 1e-8, "{c:?}");
    assert!(c.zero_mode_chain < 1e-8, "{c:?}");
    assert!(c.commutation < 1e-7, "{c:?}");
    for seed in 0..4 {
        let r = random_pair(&f.sol.grid, seed);
        let pc = f.proj.project_continuous(&r);
        let twice = f.proj.project_continuous(&pc);
        assert!(twice.sub(&pc).norm() < 1e-8 * r.norm());
    }
}

#[test]
fn continuous_part_is_symplectically_orthogonal() {
    let f = fixture();
    let g = &f.sol.grid;
    let zero = vec![0.0; g.len()];
    let mut dirs = vec![pair(g, &zero, &f.sol.phi), pair(g, &f.sol.dphi, &zero)];
    for n in 0..2 {
        dirs.push(pair(g, &zero, &f.modes.eta[n]));
        dirs.push(pair(g, &f.modes.xi[n], &zero));
    }
    for seed in 20..24 {
        let r = random_pair(g, seed);
        let pc = f.proj.project_continuous(&r);
        for d in &dirs {
            assert!(
                omega(&pc, d).abs() < 1e-8 * r.norm() * d.norm(),
                "{}",
                omega(&pc, d)
            );
        }
    }
}
