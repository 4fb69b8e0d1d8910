use std::f64::consts::PI;

use nlslab::grid::{
    apply_laplacian, inner_product, symplectic_pairing, weighted_norm, ComplexField, FieldPair,
    Grid,
};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn gaussian(g: &Grid, c: [f64; 3], s: f64) -> Vec<f64> {
    g.sample(|[x, y, z]| {
        (-((x - c[0]).powi(2) + (y - c[1]).powi(2) + (z - c[2]).powi(2)) / (s * s)).exp()
    })
}

fn complex(g: &Grid, v: Vec<C64>) -> ComplexField {
    ComplexField::new(g.clone(), v).unwrap()
}

fn plane_wave(g: &Grid, m: [i32; 3]) -> ComplexField {
    let k = PI / g.half_width();
    complex(
        g,
        g.sample_complex(|[x, y, z]| {
            C64::from_polar(
                1.0,
                k * (m[0] as f64 * x + m[1] as f64 * y + m[2] as f64 * z),
            )
        }),
    )
}

fn smooth_field(g: &Grid, seed: &[f64; 8]) -> ComplexField {
    let c1 = [seed[0], seed[1], seed[2]];
    let c2 = [seed[3], seed[4], seed[5]];
    let (a, b) = (gaussian(g, c1, 1.0 + seed[6].abs()), gaussian(g, c2, 1.2));
    complex(
        g,
        a.iter()
            .zip(&b)
            .map(|(u, v)| C64::new(*u, seed[7] * v))
            .collect(),
    )
}

#[test]
fn grid_rejects_bad_sizes() {
    assert!(Grid::new(8, 4.0).is_err());
    assert!(Grid::new(33, 4.0).is_err());
    assert!(Grid::new(32, 0.0).is_err());
    let g = Grid::new(32, 12.0).unwrap();
    assert_eq!(g.spacing() * 32.0, 24.0);
}

#[test]
fn laplacian_of_plane_wave_is_k_squared() {
    let g = Grid::new(16, 4.0).unwrap();
    let m = [1, -2, 3];
    let f = plane_wave(&g, m);
    let k2 = (PI / 4.0).powi(2) * 14.0;
    let lf = apply_laplacian(&f);
    let err = lf
        .values
        .iter()
        .zip(&f.values)
        .map(|(a, b)| (a - b * k2).norm())
        .fold(0.0, f64::max);
    assert!(err < 1e-12 * k2, "{err}");
}

#[test]
fn laplacian_of_constant_vanishes() {
    let g = Grid::new(16, 4.0).unwrap();
    let f = complex(&g, vec![C64::new(2.5, -1.0); g.len()]);
    assert!(apply_laplacian(&f).values.iter().all(|v| v.norm() < 1e-12));
}

#[test]
fn laplacian_of_gaussian_matches_analytic() {
    let g = Grid::new(64, 8.0).unwrap();
    let f = complex(
        &g,
        gaussian(&g, [0.0; 3], 1.0)
            .into_iter()
            .map(C64::from)
            .collect(),
    );
    let lf = apply_laplacian(&f);
    let mut worst: f64 = 0.0;
    for idx in 0..g.len() {
        let [x, y, z] = g.point(idx);
        let r2 = x * x + y * y + z * z;
        if r2 > 36.0 {
            continue;
        }
        let exact = (6.0 - 4.0 * r2) * (-r2).exp();
        worst = worst.max((lf.values[idx].re - exact).abs());
    }
    assert!(worst < 1e-8 * 6.0, "{worst}");
}

#[test]
fn distinct_lattice_modes_are_orthogonal() {
    let g = Grid::new(16, 4.0).unwrap();
    let ip = inner_product(&plane_wave(&g, [1, 0, 0]), &plane_wave(&g, [0, 2, -1])).unwrap();
    assert!(ip.norm() < 1e-12);
}

#[test]
fn normalized_gaussian_has_unit_norm() {
    let g = Grid::new(48, 10.0).unwrap();
    let s = 1.3;
    let c = (2.0 / (PI * s * s)).powf(0.75);
    let f = complex(
        &g,
        gaussian(&g, [0.2, -0.1, 0.0], s)
            .into_iter()
            .map(|v| C64::from(c * v))
            .collect(),
    );
    let ip = inner_product(&f, &f).unwrap();
    assert!((ip.re - 1.0).abs() < 1e-10 && ip.im == 0.0, "{ip}");
}

#[test]
fn grid_mismatch_is_rejected() {
    let a = Grid::new(16, 4.0).unwrap();
    let b = Grid::new(16, 5.0).unwrap();
    let fa = complex(&a, vec![C64::from(1.0); a.len()]);
    let fb = complex(&b, vec![C64::from(1.0); b.len()]);
    assert!(inner_product(&fa, &fb).is_err());
    assert!(symplectic_pairing(&fa, &fb).is_err());
}

#[test]
fn symplectic_pairing_examples() {
    let g = Grid::new(32, 8.0).unwrap();
    let f = smooth_field(&g, &[0.5, 0.0, -1.0, 1.0, 0.3, 0.0, 0.4, -0.7]);
    assert_eq!(symplectic_pairing(&f, &f).unwrap(), 0.0);
    let i_f = complex(&g, f.values.iter().map(|v| v * C64::i()).collect());
    let norm2 = inner_product(&f, &f).unwrap().re;
    assert!((symplectic_pairing(&f, &i_f).unwrap() + norm2).abs() < 1e-12 * norm2);
}

#[test]
fn weighted_norm_examples() {
    let g = Grid::new(48, 12.0).unwrap();
    let zero = vec![0.0; g.len()];
    let far = FieldPair::new(g.clone(), gaussian(&g, [3.0, 0.0, 0.0], 0.25), zero.clone()).unwrap();
    let plain = weighted_norm(&far, 0.0).unwrap();
    assert!((plain - far.norm()).abs() < 1e-12 * plain);
    let ratio = weighted_norm(&far, 4.0).unwrap() / plain;
    assert!((ratio / 1e-2 - 1.0).abs() < 0.1, "{ratio}");
    let near = FieldPair::new(g.clone(), gaussian(&g, [0.0; 3], 0.1), zero).unwrap();
    let r0 = weighted_norm(&near, 4.0).unwrap() / near.norm();
    assert!(r0 > 0.95 && r0 <= 1.0, "{r0}");
    assert!(weighted_norm(&near, -1.0).is_err());
}

fn unit() -> impl Strategy<Value = [f64; 8]> {
    prop::array::uniform8(-2.0f64..2.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parseval(seed in unit()) {
        let g = Grid::new(16, 6.0).unwrap();
        let f = smooth_field(&g, &seed);
        let (a, b) = (f.norm(), g.fourier_norm(&f.values));
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn laplacian_is_self_adjoint(s1 in unit(), s2 in unit()) {
        let g = Grid::new(16, 6.0).unwrap();
        let (f, h) = (smooth_field(&g, &s1), smooth_field(&g, &s2));
        let lhs = inner_product(&apply_laplacian(&f), &h).unwrap();
        let rhs = inner_product(&f, &apply_laplacian(&h)).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * f.norm() * h.norm());
    }

    #[test]
    fn inner_product_is_conjugate_symmetric(s1 in unit(), s2 in unit()) {
        let g = Grid::new(16, 6.0).unwrap();
        let (f, h) = (smooth_field(&g, &s1), smooth_field(&g, &s2));
        let a = inner_product(&f, &h).unwrap();
        let b = inner_product(&h, &f).unwrap().conj();
        prop_assert!((a - b).norm() <= 1e-14 * f.norm() * h.norm());
    }

    #[test]
    fn symplectic_pairing_is_antisymmetric(s1 in unit(), s2 in unit()) {
        let g = Grid::new(16, 6.0).unwrap();
        let (f, h) = (smooth_field(&g, &s1), smooth_field(&g, &s2));
        let s = symplectic_pairing(&f, &h).unwrap() + symplectic_pairing(&h, &f).unwrap();
        prop_assert!(s.abs() <= 1e-14 * f.norm() * h.norm());
    }
}
