//! Normal-form coefficients of the modulation equations through cubic order.
//!
//! Conventions: `ψ = e^{iΘ}(φ + w)`, `w = w₁ + i w₂`, `JN = (Im N, −Re N)`, and
//! `∂ₜ w = L w + JN + γ̇ (w₂, −φ − w₁) − λ̇ (∂λφ, 0)`.
//! Coefficients are fixed by requiring that the projected equations carry no non-resonant
//! quadratic or cubic monomials when `∂ₜ z^m z̄^n = −i(m−n)·E z^m z̄^n`.

pub mod poly;

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

pub use poly::{FieldPoly, Monomial, MultiIndex, PairPoly, PolyMatrix};

use crate::error::{Error, Result};
use crate::grid::{ComplexPair, Grid};
use crate::linearized::{InternalModes, LinearizedOps, RieszProjector};
use crate::scattering::resolvent_apply;
use crate::soliton::SolitonPoint;

const I: C64 = C64::new(0.0, 1.0);

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Soliton and internal-mode data at fixed `λ`.
#[derive(Clone, Debug)]
pub struct ModeBasis {
    pub grid: Grid,
    pub lambda: f64,
    pub e0: f64,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
    /// `⟨φ, ∂λφ⟩`.
    pub phi_dphi: f64,
}

impl ModeBasis {
    pub fn new(soliton: &SolitonPoint, modes: &InternalModes) -> Result<Self> {
        if modes.xi.is_empty()
            || modes.xi.len() != modes.eta.len()
            || modes.energies.len() != modes.xi.len()
        {
            return Err(Error::Dependency(
                "internal modes are missing or inconsistent".into(),
            ));
        }
        if (modes.lambda - soliton.lambda).abs() > 1e-12 * soliton.lambda.abs().max(1.0) {
            return Err(Error::Dependency(format!(
                "modes computed at lambda = {} but soliton at {}",
                modes.lambda, soliton.lambda
            )));
        }
        Ok(ModeBasis {
            grid: soliton.grid.clone(),
            lambda: soliton.lambda,
            e0: soliton.e0,
            phi: soliton.phi.clone(),
            dphi: soliton.dphi.clone(),
            xi: modes.xi.clone(),
            eta: modes.eta.clone(),
            energies: modes.energies.clone(),
            phi_dphi: soliton.phi_dphi(),
        })
    }

    pub fn n_modes(&self) -> usize {
        self.xi.len()
    }

    fn len(&self) -> usize {
        self.phi.len()
    }

    /// `A₁ = Σ_k α_k ξ_k`, `α = (z + z̄)/2`.
    pub fn a1_poly(&self) -> FieldPoly {
        FieldPoly::linear(&self.xi, re(0.5), false).add(&FieldPoly::linear(&self.xi, re(0.5), true))
    }

    /// `B₁ = Σ_k β_k η_k`, `β = (z − z̄)/(2i)`.
    pub fn b1_poly(&self) -> FieldPoly {
        FieldPoly::linear(&self.eta, -I * 0.5, false).add(&FieldPoly::linear(
            &self.eta,
            I * 0.5,
            true,
        ))
    }

    /// `X = [[2φB₁, 2φA₁], [−6φA₁, −2φB₁]]`.
    pub fn x_matrix(&self) -> PolyMatrix {
        let a = self.a1_poly().times_field(&self.phi);
        let b = self.b1_poly().times_field(&self.phi);
        PolyMatrix([
            [b.scale(re(2.0)), a.scale(re(2.0))],
            [a.scale(re(-6.0)), b.scale(re(-2.0))],
        ])
    }

    fn gram(&self, a: &[Vec<f64>]) -> Vec<Vec<f64>> {
        a.iter()
            .map(|x| a.iter().map(|y| self.grid.dot(x, y)).collect())
            .collect()
    }

    /// Linear part `(A₁, B₁)` evaluated at `z`.
    pub fn linear_fields(&self, z: &[C64]) -> (Vec<f64>, Vec<f64>) {
        let mut a = vec![0.0; self.len()];
        let mut b = vec![0.0; self.len()];
        for k in 0..self.n_modes() {
            let (al, be) = (z[k].re, z[k].im);
            a.iter_mut()
                .zip(&self.xi[k])
                .for_each(|(o, x)| *o += al * x);
            b.iter_mut()
                .zip(&self.eta[k])
                .for_each(|(o, x)| *o += be * x);
        }
        (a, b)
    }
}

/// `(Im N, Re N)` for the perturbation `w = w₁ + i w₂` of `φ`.
pub fn nonlinearity(phi: &[f64], w1: &[f64], w2: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut im = Vec::with_capacity(phi.len());
    let mut rn = Vec::with_capacity(phi.len());
    for ((&p, &a), &b) in phi.iter().zip(w1).zip(w2) {
        let s = a * a + b * b;
        im.push(2.0 * p * a * b + s * b);
        rn.push(3.0 * p * a * a + p * b * b + s * a);
    }
    (im, rn)
}

/// Cubic sources split by origin.
#[derive(Clone, Debug)]
pub struct CubicSources {
    /// `X (R_{2,0} z² + R_{0,2} z̄²)`.
    pub resolvent_20: PairPoly,
    /// `X Σ_{|m|=|n|=1} R_{m,n} z^m z̄^n`.
    pub resolvent_11: PairPoly,
    /// `X (A₂, B₂)`.
    pub correction: PairPoly,
    /// `((A₁² + B₁²) B₁, −(A₁² + B₁²) A₁)`.
    pub local: PairPoly,
    pub total: PairPoly,
}

/// `JN_{m,n}` for `|m| + |n| ∈ {2, 3}`.
#[derive(Clone, Debug)]
pub struct SourceTerms {
    pub n_modes: usize,
    pub quadratic: PairPoly,
    pub cubic: Option<CubicSources>,
}

impl SourceTerms {
    fn poly_for(&self, mono: &Monomial) -> Result<&PairPoly> {
        let (a, b) = mono.degree();
        match a + b {
            2 => Ok(&self.quadratic),
            3 => self
                .cubic
                .as_ref()
                .map(|c| &c.total)
                .ok_or_else(|| Error::Dependency("cubic sources not built".into())),
            d => Err(Error::Config(format!("no source terms of degree {d}"))),
        }
    }

    /// `N^{Im}_{m,n}`, the first component of `JN_{m,n}`.
    pub fn n_im(&self, mono: &Monomial) -> Result<Vec<C64>> {
        Ok(self.poly_for(mono)?.coefficient(mono).0)
    }

    /// `N^{Re}_{m,n}`, minus the second component of `JN_{m,n}`.
    pub fn n_re(&self, mono: &Monomial) -> Result<Vec<C64>> {
        Ok(self
            .poly_for(mono)?
            .coefficient(mono)
            .1
            .into_iter()
            .map(|x| -x)
            .collect())
    }

    pub fn jn(&self, grid: &Grid, mono: &Monomial) -> Result<ComplexPair> {
        let (first, second) = self.poly_for(mono)?.coefficient(mono);
        Ok(ComplexPair {
            grid: grid.clone(),
            first,
            second,
        })
    }
}

/// Quadratic sources `JN₂ = (2φA₁B₁, −3φA₁² − φB₁²)`.
pub fn build_sources(basis: &ModeBasis) -> SourceTerms {
    let a = basis.a1_poly();
    let b = basis.b1_poly();
    let first = a.mul(&b).times_field(&basis.phi).scale(re(2.0));
    let second = a
        .mul(&a)
        .scale(re(-3.0))
        .add(&b.mul(&b).scale(re(-1.0)))
        .times_field(&basis.phi);
    SourceTerms {
        n_modes: basis.n_modes(),
        quadratic: PairPoly { first, second },
        cubic: None,
    }
}

/// `R_{m,n}` for `|m| + |n| = 2`.
pub type QuadraticR = BTreeMap<Monomial, ComplexPair>;

fn r_poly(r: &QuadraticR, len: usize, keep: impl Fn(&Monomial) -> bool) -> PairPoly {
    let mut p = PairPoly::zero(len);
    for (mono, f) in r.iter().filter(|(m, _)| keep(m)) {
        p.first.add_complex_term(mono.clone(), re(1.0), &f.first);
        p.second.add_complex_term(mono.clone(), re(1.0), &f.second);
    }
    p
}

/// Quadratic part of `(A₂, B₂) = (a₁∂λφ + p·ξ, a₂φ + q·η)`.
pub fn correction_poly(basis: &ModeBasis, coeffs: &NormalFormCoefficients) -> PairPoly {
    let mut out = PairPoly::zero(basis.len());
    for mono in quadratic_monomials(basis.n_modes()) {
        if let Some(a) = coeffs.a1.get(&mono) {
            out.first.add_term(mono.clone(), *a, &basis.dphi);
        }
        if let Some(a) = coeffs.a2.get(&mono) {
            out.second.add_term(mono.clone(), *a, &basis.phi);
        }
        for k in 0..basis.n_modes() {
            if let Some(p) = coeffs.p[k].get(&mono) {
                out.first.add_term(mono.clone(), *p, &basis.xi[k]);
            }
            if let Some(q) = coeffs.q[k].get(&mono) {
                out.second.add_term(mono.clone(), *q, &basis.eta[k]);
            }
        }
    }
    out
}

/// Cubic sources `JN₃ = X (R + (A₂, B₂)) + ((A₁² + B₁²) B₁, −(A₁² + B₁²) A₁)`.
pub fn build_cubic_sources(
    basis: &ModeBasis,
    sources: &mut SourceTerms,
    coeffs: &NormalFormCoefficients,
    r: &QuadraticR,
) -> Result<()> {
    for mono in quadratic_monomials(basis.n_modes()) {
        if !r.contains_key(&mono) {
            return Err(Error::Dependency(format!("missing R for monomial {mono}")));
        }
    }
    let x = basis.x_matrix();
    let len = basis.len();
    let r20 = x.apply(&r_poly(r, len, |m| m.degree() != (1, 1)));
    let r11 = x.apply(&r_poly(r, len, |m| m.degree() == (1, 1)));
    let correction = x.apply(&correction_poly(basis, coeffs));
    let a = basis.a1_poly();
    let b = basis.b1_poly();
    let rho = a.mul(&a).add(&b.mul(&b));
    let local = PairPoly {
        first: rho.mul(&b),
        second: rho.mul(&a).scale(re(-1.0)),
    };
    let total = r20.add(&r11).add(&correction).add(&local);
    sources.cubic = Some(CubicSources {
        resolvent_20: r20,
        resolvent_11: r11,
        correction,
        local,
        total,
    });
    Ok(())
}

/// All monomials with `|m| + |n| = 2`.
pub fn quadratic_monomials(n: usize) -> Vec<Monomial> {
    [(2, 0), (1, 1), (0, 2)]
        .iter()
        .flat_map(|&(a, b)| Monomial::all(n, a, b))
        .collect()
}

/// All monomials with `|m| + |n| = 3`.
pub fn cubic_monomials(n: usize) -> Vec<Monomial> {
    [(3, 0), (2, 1), (1, 2), (0, 3)]
        .iter()
        .flat_map(|&(a, b)| Monomial::all(n, a, b))
        .collect()
}

/// One checked denominator.
#[derive(Clone, Debug, Serialize)]
pub struct Margin {
    pub family: String,
    pub k: Option<usize>,
    pub monomial: String,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct NormalFormCoefficients {
    pub n_modes: usize,
    pub lambda: f64,
    pub energies: Vec<f64>,
    pub phi_dphi: f64,
    pub floor: f64,
    pub a1: BTreeMap<Monomial, C64>,
    pub a2: BTreeMap<Monomial, C64>,
    pub p: Vec<BTreeMap<Monomial, C64>>,
    pub q: Vec<BTreeMap<Monomial, C64>>,
    /// `Υ = Σ_{a,b} Υ_{ab} z_a z̄_b`, real symmetric.
    pub upsilon: Vec<Vec<f64>>,
    pub margins: Vec<Margin>,
    /// Largest relative residual of the `(P, Q)` solves.
    pub pq_residual: f64,
    /// Largest conjugate-closure defect found before symmetrization.
    pub closure_defect: f64,
}

impl NormalFormCoefficients {
    fn check(&mut self, family: &str, k: Option<usize>, mono: &Monomial, value: f64) -> Result<()> {
        self.margins.push(Margin {
            family: family.into(),
            k,
            monomial: mono.to_string(),
            value,
        });
        if value.abs() < self.floor {
            let idx = match k {
                Some(k) => format!("{family} k={k} {mono}"),
                None => format!("{family} {mono}"),
            };
            return Err(Error::Denominator {
                index: idx,
                value: value.abs(),
                floor: self.floor,
            });
        }
        Ok(())
    }

    /// Copy keeping only monomials of total degree `degree`.
    pub fn of_degree(&self, degree: usize) -> NormalFormCoefficients {
        let keep = |m: &BTreeMap<Monomial, C64>| -> BTreeMap<Monomial, C64> {
            m.iter()
                .filter(|(k, _)| k.degree().0 + k.degree().1 == degree)
                .map(|(k, v)| (k.clone(), *v))
                .collect()
        };
        NormalFormCoefficients {
            a1: keep(&self.a1),
            a2: keep(&self.a2),
            p: self.p.iter().map(keep).collect(),
            q: self.q.iter().map(keep).collect(),
            ..self.clone()
        }
    }

    /// `Υ(z) = Σ Υ_{ab} z_a z̄_b`.
    pub fn upsilon_at(&self, z: &[C64]) -> f64 {
        let mut s = C64::new(0.0, 0.0);
        for a in 0..self.n_modes {
            for b in 0..self.n_modes {
                s += self.upsilon[a][b] * z[a] * z[b].conj();
            }
        }
        s.re
    }

    /// Largest coefficient magnitude of a family, `None` for all families.
    pub fn sup(&self, degree: Option<(usize, usize)>) -> f64 {
        let keep = |m: &Monomial| degree.is_none_or(|d| m.degree() == d);
        let it = self
            .a1
            .iter()
            .chain(&self.a2)
            .chain(self.p.iter().flatten())
            .chain(self.q.iter().flatten());
        it.filter(|(m, _)| keep(m))
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
    }

    /// Diff-friendly dump ordered by `(|m|, |n|, m, n)`.
    pub fn to_json(&self) -> serde_json::Value {
        fn fam(map: &BTreeMap<Monomial, C64>) -> Vec<serde_json::Value> {
            let mut v: Vec<(&Monomial, &C64)> = map.iter().collect();
            v.sort_by(|a, b| (a.0.degree(), a.0).cmp(&(b.0.degree(), b.0)));
            v.into_iter()
                .map(|(m, c)| serde_json::json!({"m": m.m.0, "n": m.n.0, "re": c.re, "im": c.im}))
                .collect()
        }
        serde_json::json!({
            "lambda": self.lambda,
            "energies": self.energies,
            "phi_dphi": self.phi_dphi,
            "floor": self.floor,
            "upsilon": self.upsilon,
            "A1": fam(&self.a1),
            "A2": fam(&self.a2),
            "P": self.p.iter().map(fam).collect::<Vec<_>>(),
            "Q": self.q.iter().map(fam).collect::<Vec<_>>(),
            "margins": self.margins,
            "pq_residual": self.pq_residual,
            "closure_defect": self.closure_defect,
        })
    }
}

/// Solves `−iωP − E Q = s₁`, `E P − iωQ = s₂`; returns `(P, Q, det, relative residual)`.
fn solve_pq(omega: f64, e: f64, s1: C64, s2: C64) -> (C64, C64, f64, f64) {
    let det = e * e - omega * omega;
    let d = -I * omega;
    let p = (d * s1 + e * s2) / det;
    let q = (d * s2 - e * s1) / det;
    let r1 = d * p - e * q - s1;
    let r2 = e * p + d * q - s2;
    let scale = s1.norm().max(s2.norm()).max(f64::MIN_POSITIVE);
    (p, q, det, r1.norm().max(r2.norm()) / scale)
}

/// Closed-form `A^{(1)}_{e_a, e_b} = −¼(⟨ξ_a, ξ_b⟩ + ⟨η_a, η_b⟩)/⟨φ, ∂λφ⟩`.
pub fn a1_closed_form(basis: &ModeBasis, a: usize, b: usize) -> f64 {
    let g = &basis.grid;
    -0.25 * (g.dot(&basis.xi[a], &basis.xi[b]) + g.dot(&basis.eta[a], &basis.eta[b]))
        / basis.phi_dphi
}

/// Quotient `A^{(1)}_{m,n} = −⟨N^{Im}_{m,n}, φ⟩/(iωD)`; diagnostics only for `|m| = |n| = 1`.
pub fn a1_quotient(
    basis: &ModeBasis,
    sources: &SourceTerms,
    mono: &Monomial,
) -> Result<Option<C64>> {
    let w = mono.frequency(&basis.energies);
    if w == 0.0 {
        return Ok(None);
    }
    let num = basis.grid.dot_cr(&sources.n_im(mono)?, &basis.phi);
    Ok(Some(-num / (I * w * basis.phi_dphi)))
}

/// `Υ_{ab} = A^{(1)}_{e_a,e_b} − ⟨φ(3ξ_aξ_b + η_aη_b)/2, ∂λφ⟩/D`.
pub fn upsilon_matrix(basis: &ModeBasis) -> Vec<Vec<f64>> {
    let n = basis.n_modes();
    let g = &basis.grid;
    let w: Vec<f64> = basis
        .phi
        .iter()
        .zip(&basis.dphi)
        .map(|(p, d)| p * d)
        .collect();
    let mut u = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in 0..n {
            let f: Vec<f64> = (0..w.len())
                .map(|i| {
                    w[i] * (1.5 * basis.xi[a][i] * basis.xi[b][i]
                        + 0.5 * basis.eta[a][i] * basis.eta[b][i])
                })
                .collect();
            u[a][b] = a1_closed_form(basis, a, b)
                - f.iter().sum::<f64>() * g.cell_volume() / basis.phi_dphi;
        }
    }
    u
}

fn conj_close(map: &mut BTreeMap<Monomial, C64>, defect: &mut f64) {
    let keys: Vec<Monomial> = map.keys().cloned().collect();
    for k in keys {
        let c = k.conj();
        match (map.get(&k).copied(), map.get(&c).copied()) {
            (Some(x), Some(y)) if c > k => {
                let s = x.norm().max(y.norm()).max(f64::MIN_POSITIVE);
                *defect = defect.max((x - y.conj()).norm() / s);
                let avg = 0.5 * (x + y.conj());
                map.insert(k.clone(), avg);
                map.insert(c, avg.conj());
            }
            (Some(x), None) => {
                map.insert(c, x.conj());
            }
            _ => {}
        }
    }
}

fn fill_conjugates(map: &mut BTreeMap<Monomial, C64>, from: (usize, usize)) {
    let add: Vec<(Monomial, C64)> = map
        .iter()
        .filter(|(m, _)| m.degree() == from)
        .map(|(m, v)| (m.conj(), v.conj()))
        .collect();
    map.extend(add);
}

/// Quadratic-order coefficients, `Υ`, and their margins.
pub fn compute_coefficients(
    basis: &ModeBasis,
    sources: &SourceTerms,
    floor_factor: f64,
) -> Result<NormalFormCoefficients> {
    let n = basis.n_modes();
    let g = &basis.grid;
    let d = basis.phi_dphi;
    let e = &basis.energies;
    let mut c = NormalFormCoefficients {
        n_modes: n,
        lambda: basis.lambda,
        energies: e.clone(),
        phi_dphi: d,
        floor: floor_factor * basis.e0,
        a1: BTreeMap::new(),
        a2: BTreeMap::new(),
        p: vec![BTreeMap::new(); n],
        q: vec![BTreeMap::new(); n],
        upsilon: upsilon_matrix(basis),
        margins: Vec::new(),
        pq_residual: 0.0,
        closure_defect: 0.0,
    };
    for mono in quadratic_monomials(n) {
        let w = mono.frequency(e);
        let nim = sources.n_im(&mono)?;
        let nre = sources.n_re(&mono)?;
        if mono.degree() == (1, 1) {
            let (a, b) = (mono.m.as_unit().unwrap(), mono.n.as_unit().unwrap());
            c.a1.insert(mono.clone(), re(a1_closed_form(basis, a, b)));
        } else {
            c.check("A", None, &mono, w)?;
            let a1 = -g.dot_cr(&nim, &basis.phi) / (I * w * d);
            let a2 = (a1 - g.dot_cr(&nre, &basis.dphi) / d) / (-I * w);
            c.a1.insert(mono.clone(), a1);
            c.a2.insert(mono.clone(), a2);
        }
        for k in 0..n {
            let s1 = g.dot_cr(&nim, &basis.eta[k]);
            let s2 = -g.dot_cr(&nre, &basis.xi[k]);
            let (p, q, det, res) = solve_pq(w, e[k], s1, s2);
            c.check("PQ", Some(k), &mono, det)?;
            c.pq_residual = c.pq_residual.max(res);
            c.p[k].insert(mono.clone(), p);
            c.q[k].insert(mono.clone(), q);
        }
    }
    close_all(&mut c);
    Ok(c)
}

fn close_all(c: &mut NormalFormCoefficients) {
    let mut defect = c.closure_defect;
    conj_close(&mut c.a1, &mut defect);
    conj_close(&mut c.a2, &mut defect);
    for k in 0..c.n_modes {
        conj_close(&mut c.p[k], &mut defect);
        conj_close(&mut c.q[k], &mut defect);
    }
    c.closure_defect = defect;
}

/// Ordered splittings `m = e_a + e_r` of a multi-index with `|m| = 2`.
fn unit_splits(m: &MultiIndex) -> Vec<(usize, usize)> {
    (0..m.len())
        .filter_map(|a| m.minus_unit(a).and_then(|r| r.as_unit()).map(|r| (a, r)))
        .collect()
}

/// Cubic-order coefficients; requires cubic sources.
pub fn compute_cubic_coefficients(
    basis: &ModeBasis,
    sources: &SourceTerms,
    c: &mut NormalFormCoefficients,
) -> Result<()> {
    if sources.cubic.is_none() {
        return Err(Error::Dependency("cubic sources not built".into()));
    }
    let n = basis.n_modes();
    let g = &basis.grid;
    let d = basis.phi_dphi;
    let e = basis.energies.clone();
    let ups = c.upsilon.clone();
    let eta_phi: Vec<f64> = basis.eta.iter().map(|x| g.dot(x, &basis.phi)).collect();
    let xi_dphi: Vec<f64> = basis.xi.iter().map(|x| g.dot(x, &basis.dphi)).collect();
    let gx = basis.gram(&basis.xi);
    let ge = basis.gram(&basis.eta);
    for mono in Monomial::all(n, 3, 0)
        .into_iter()
        .chain(Monomial::all(n, 0, 3))
    {
        let w = mono.frequency(&e);
        c.check("A", None, &mono, w)?;
        let nim = sources.n_im(&mono)?;
        let nre = sources.n_re(&mono)?;
        let a1 = -g.dot_cr(&nim, &basis.phi) / (I * w * d);
        let a2 = (a1 - g.dot_cr(&nre, &basis.dphi) / d) / (-I * w);
        c.a1.insert(mono.clone(), a1);
        c.a2.insert(mono.clone(), a2);
        for k in 0..n {
            let s1 = g.dot_cr(&nim, &basis.eta[k]);
            let s2 = -g.dot_cr(&nre, &basis.xi[k]);
            let (p, q, det, res) = solve_pq(w, e[k], s1, s2);
            c.check("PQ", Some(k), &mono, det)?;
            c.pq_residual = c.pq_residual.max(res);
            c.p[k].insert(mono.clone(), p);
            c.q[k].insert(mono.clone(), q);
        }
    }
    for mono in Monomial::all(n, 2, 1) {
        let w = mono.frequency(&e);
        c.check("A", None, &mono, w)?;
        let b = mono.n.as_unit().unwrap();
        let nim = sources.n_im(&mono)?;
        let nre = sources.n_re(&mono)?;
        let splits = unit_splits(&mono.m);
        let y1: f64 = splits.iter().map(|&(a, r)| ups[a][b] * eta_phi[r]).sum();
        let y2: f64 = splits.iter().map(|&(a, r)| ups[a][b] * xi_dphi[r]).sum();
        let a1 = (g.dot_cr(&nim, &basis.phi) - I * 0.5 * y1) / (-I * w * d);
        let a2 = (a1 - (g.dot_cr(&nre, &basis.dphi) + 0.5 * y2) / d) / (-I * w);
        c.a1.insert(mono.clone(), a1);
        c.a2.insert(mono.clone(), a2);
    }
    fill_conjugates(&mut c.a1, (2, 1));
    fill_conjugates(&mut c.a2, (2, 1));
    for mono in Monomial::all(n, 1, 2) {
        let w = mono.frequency(&e);
        let a = mono.m.as_unit().unwrap();
        let nim = sources.n_im(&mono)?;
        let nre = sources.n_re(&mono)?;
        let splits = unit_splits(&mono.n);
        for k in 0..n {
            c.check("PQ1", Some(k), &mono, e[k] - w)?;
            let y: f64 = splits
                .iter()
                .map(|&(b, r)| ups[a][b] * (ge[r][k] - gx[r][k]))
                .sum();
            let s = g.dot_cr(&nim, &basis.eta[k]) - I * g.dot_cr(&nre, &basis.xi[k]) + I * 0.5 * y;
            let pt = s / (I * (e[k] - w));
            c.p[k].insert(mono.clone(), pt * 0.5);
            c.q[k].insert(mono.clone(), pt / (2.0 * I));
        }
    }
    for k in 0..n {
        fill_conjugates(&mut c.p[k], (1, 2));
        fill_conjugates(&mut c.q[k], (1, 2));
    }
    close_all(c);
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct CancellationPair {
    pub m: usize,
    pub n: usize,
    pub lhs_re: f64,
    pub lhs_im: f64,
    pub rhs_im: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CancellationReport {
    pub pairs: Vec<CancellationPair>,
    /// Largest `|LHS − RHS|` relative to `‖φ‖² max E`.
    pub max_discrepancy: f64,
}

/// `⟨N^{Im}_{e_m,e_n}, φ⟩` against `(1/4i)(E_n − E_m)(⟨ξ_m, ξ_n⟩ + ⟨η_m, η_n⟩)` for all pairs.
pub fn verify_cancellation(
    basis: &ModeBasis,
    sources: &SourceTerms,
    tol: f64,
) -> Result<CancellationReport> {
    let n = basis.n_modes();
    let g = &basis.grid;
    let scale = g.dot(&basis.phi, &basis.phi) * basis.energies.iter().cloned().fold(0.0, f64::max);
    let mut pairs = Vec::new();
    let mut worst: f64 = 0.0;
    for m in 0..n {
        for k in 0..n {
            let mono = Monomial::new(MultiIndex::unit(n, m), MultiIndex::unit(n, k));
            let lhs = g.dot_cr(&sources.n_im(&mono)?, &basis.phi);
            let s = g.dot(&basis.xi[m], &basis.xi[k]) + g.dot(&basis.eta[m], &basis.eta[k]);
            let rhs = C64::new(0.0, -0.25 * (basis.energies[k] - basis.energies[m]) * s);
            worst = worst.max((lhs - rhs).norm() / scale);
            pairs.push(CancellationPair {
                m,
                n: k,
                lhs_re: lhs.re,
                lhs_im: lhs.im,
                rhs_im: rhs.im,
            });
        }
    }
    if worst > tol {
        return Err(Error::LemmaViolation(worst));
    }
    Ok(CancellationReport {
        pairs,
        max_discrepancy: worst,
    })
}

/// `(a₁, a₂, p, q)` at `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct Corrections {
    pub a1: f64,
    pub a2: f64,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

fn eval_map(map: &BTreeMap<Monomial, C64>, z: &[C64]) -> C64 {
    map.iter().map(|(m, c)| c * m.eval(z)).sum()
}

fn real_part(v: C64, worst: &mut f64) -> f64 {
    *worst = worst.max(v.im.abs() / v.norm().max(1.0));
    v.re
}

/// Evaluates the correction polynomials; their values must be real.
pub fn evaluate_corrections(c: &NormalFormCoefficients, z: &[C64]) -> Result<Corrections> {
    if z.len() != c.n_modes {
        return Err(Error::Config(format!(
            "expected {} mode amplitudes, got {}",
            c.n_modes,
            z.len()
        )));
    }
    let mut worst = 0.0;
    let out = Corrections {
        a1: real_part(eval_map(&c.a1, z), &mut worst),
        a2: real_part(eval_map(&c.a2, z), &mut worst),
        p: c.p
            .iter()
            .map(|m| real_part(eval_map(m, z), &mut worst))
            .collect(),
        q: c.q
            .iter()
            .map(|m| real_part(eval_map(m, z), &mut worst))
            .collect(),
    };
    if worst > 1e-12 {
        return Err(Error::Closure(worst));
    }
    Ok(out)
}

/// Time derivative of the correction polynomials along `ż`.
pub fn correction_rates(c: &NormalFormCoefficients, z: &[C64], zdot: &[C64]) -> Corrections {
    let rate = |map: &BTreeMap<Monomial, C64>| -> f64 {
        map.iter()
            .map(|(m, v)| v * m.derivative(z, zdot))
            .sum::<C64>()
            .re
    };
    Corrections {
        a1: rate(&c.a1),
        a2: rate(&c.a2),
        p: c.p.iter().map(rate).collect(),
        q: c.q.iter().map(rate).collect(),
    }
}

/// Coefficients of `Θ_j(k) = Σ_{|m|=2,|n|=1} θ^{(k)}_{j,mn} z^m z̄^n`, `j = 1..5`.
#[derive(Clone, Debug, Serialize)]
pub struct ThetaTensors {
    pub energies: Vec<f64>,
    pub monomials: Vec<Monomial>,
    /// `coeff[j][k][i]` for `Θ_{j+1}`, mode `k`, monomial `i`.
    pub coeff: Vec<Vec<Vec<C64>>>,
}

impl ThetaTensors {
    pub fn n_modes(&self) -> usize {
        self.energies.len()
    }

    /// `Θ_{j+1}(k)` at `z` for every `k`.
    pub fn theta(&self, j: usize, z: &[C64]) -> Vec<C64> {
        let vals: Vec<C64> = self.monomials.iter().map(|m| m.eval(z)).collect();
        self.coeff[j]
            .iter()
            .map(|row| row.iter().zip(&vals).map(|(c, v)| c * v).sum())
            .collect()
    }

    /// `Σ_j Θ_j(k)`.
    pub fn total(&self, z: &[C64]) -> Vec<C64> {
        let vals: Vec<C64> = self.monomials.iter().map(|m| m.eval(z)).collect();
        (0..self.n_modes())
            .map(|k| {
                (0..5)
                    .map(|j| {
                        self.coeff[j][k]
                            .iter()
                            .zip(&vals)
                            .map(|(c, v)| c * v)
                            .sum::<C64>()
                    })
                    .sum()
            })
            .collect()
    }
}

/// `θ = ⟨F₁, η_k⟩ + i⟨F₂, ξ_k⟩` of the `(2,1)` part of `F`.
fn theta_from(basis: &ModeBasis, f: &PairPoly, monos: &[Monomial]) -> Vec<Vec<C64>> {
    let g = &basis.grid;
    (0..basis.n_modes())
        .map(|k| {
            monos
                .iter()
                .map(|m| {
                    let (a, b) = f.coefficient(m);
                    g.dot_cr(&a, &basis.eta[k]) + I * g.dot_cr(&b, &basis.xi[k])
                })
                .collect()
        })
        .collect()
}

/// Splits the resonant cubic part of the `z` equation into `Θ₁ … Θ₅`.
pub fn theta_tensors(
    basis: &ModeBasis,
    sources: &SourceTerms,
    c: &NormalFormCoefficients,
) -> Result<ThetaTensors> {
    let cubic = sources
        .cubic
        .as_ref()
        .ok_or_else(|| Error::Dependency("cubic sources not built".into()))?;
    let n = basis.n_modes();
    let monos = Monomial::all(n, 2, 1);
    let gx = basis.gram(&basis.xi);
    let ge = basis.gram(&basis.eta);
    let t4: Vec<Vec<C64>> = (0..n)
        .map(|k| {
            monos
                .iter()
                .map(|m| {
                    let b = m.n.as_unit().unwrap();
                    unit_splits(&m.m)
                        .iter()
                        .map(|&(a, r)| -I * 0.5 * c.upsilon[a][b] * (ge[r][k] + gx[r][k]))
                        .sum()
                })
                .collect()
        })
        .collect();
    let parts = [&cubic.resolvent_20, &cubic.correction, &cubic.local];
    let mut coeff: Vec<Vec<Vec<C64>>> = parts
        .par_iter()
        .map(|p| theta_from(basis, p, &monos))
        .collect();
    coeff.push(t4);
    coeff.push(theta_from(basis, &cubic.resolvent_11, &monos));
    Ok(ThetaTensors {
        energies: basis.energies.clone(),
        monomials: monos,
        coeff,
    })
}

#[derive(Clone, Debug)]
pub struct NormalFormOptions {
    /// Denominator floor as a multiple of `e₀`.
    pub floor_factor: f64,
    pub resolvent_tol: f64,
    /// Frequencies below this are treated as exactly resonant.
    pub resonance_tol: f64,
    pub cancellation_tol: f64,
}

impl Default for NormalFormOptions {
    fn default() -> Self {
        NormalFormOptions {
            floor_factor: 1e-3,
            resolvent_tol: 1e-9,
            resonance_tol: 1e-10,
            cancellation_tol: 1e-6,
        }
    }
}

/// The full cubic normal form at fixed `λ`.
#[derive(Clone, Debug)]
pub struct NormalForm {
    pub basis: ModeBasis,
    pub sources: SourceTerms,
    pub r: QuadraticR,
    pub coeffs: NormalFormCoefficients,
    pub theta: ThetaTensors,
    pub cancellation: CancellationReport,
    pub resolvent_residual: f64,
    pub resolvent_iterations: usize,
}

/// `R_{m,n} = −(L + iω − 0)^{-1} P_c JN_{m,n}` for `|m| + |n| = 2`, `ω = (m − n)·E`.
pub fn quadratic_r(
    ops: &LinearizedOps,
    projector: &RieszProjector,
    basis: &ModeBasis,
    sources: &SourceTerms,
    opts: &NormalFormOptions,
) -> Result<(QuadraticR, f64, usize)> {
    let n = basis.n_modes();
    let keys: Vec<Monomial> = quadratic_monomials(n)
        .into_iter()
        .filter(|m| m.conj() >= *m)
        .collect();
    let mut out = QuadraticR::new();
    let mut residual: f64 = 0.0;
    let mut iterations = 0;
    for mono in keys {
        let mut w = mono.frequency(&basis.energies);
        if w.abs() < opts.resonance_tol {
            w = 0.0;
        }
        let f = sources.jn(&basis.grid, &mono)?;
        let sol = resolvent_apply(ops, projector, w, 0.0, &f, opts.resolvent_tol)?;
        residual = residual.max(sol.residual);
        iterations += sol.iterations;
        let mut u = sol.u;
        u.first
            .iter_mut()
            .chain(u.second.iter_mut())
            .for_each(|x| *x = -*x);
        let uc = ComplexPair {
            grid: u.grid.clone(),
            first: u.first.iter().map(|x| x.conj()).collect(),
            second: u.second.iter().map(|x| x.conj()).collect(),
        };
        if mono.conj() != mono {
            out.insert(mono.conj(), uc);
            out.insert(mono, u);
        } else {
            let sym = ComplexPair {
                grid: u.grid.clone(),
                first: u.first.iter().map(|x| re(x.re)).collect(),
                second: u.second.iter().map(|x| re(x.re)).collect(),
            };
            out.insert(mono, sym);
        }
    }
    Ok((out, residual, iterations))
}

impl NormalForm {
    pub fn build(
        ops: &LinearizedOps,
        projector: &RieszProjector,
        modes: &InternalModes,
        opts: &NormalFormOptions,
    ) -> Result<Self> {
        let basis = ModeBasis::new(&ops.soliton, modes)?;
        let mut sources = build_sources(&basis);
        let cancellation = verify_cancellation(&basis, &sources, opts.cancellation_tol)?;
        let mut coeffs = compute_coefficients(&basis, &sources, opts.floor_factor)?;
        let (r, resolvent_residual, resolvent_iterations) =
            quadratic_r(ops, projector, &basis, &sources, opts)?;
        build_cubic_sources(&basis, &mut sources, &coeffs, &r)?;
        compute_cubic_coefficients(&basis, &sources, &mut coeffs)?;
        let theta = theta_tensors(&basis, &sources, &coeffs)?;
        Ok(NormalForm {
            basis,
            sources,
            r,
            coeffs,
            theta,
            cancellation,
            resolvent_residual,
            resolvent_iterations,
        })
    }

    /// Real fields `(R₁, R₂) = Σ R_{m,n} z^m z̄^n`.
    pub fn r_fields(&self, z: &[C64]) -> (Vec<f64>, Vec<f64>) {
        let len = self.basis.phi.len();
        let mut a = vec![0.0; len];
        let mut b = vec![0.0; len];
        for (m, f) in &self.r {
            let c = m.eval(z);
            for i in 0..len {
                a[i] += (c * f.first[i]).re;
                b[i] += (c * f.second[i]).re;
            }
        }
        (a, b)
    }

    /// `w = (w₁, w₂)` built from `z` and the corrections, plus `R` when given.
    pub fn perturbation(
        &self,
        z: &[C64],
        r: Option<(&[f64], &[f64])>,
    ) -> Result<(Vec<f64>, Vec<f64>, Corrections)> {
        let b = &self.basis;
        let c = evaluate_corrections(&self.coeffs, z)?;
        let mut w1: Vec<f64> = b.dphi.iter().map(|x| c.a1 * x).collect();
        let mut w2: Vec<f64> = b.phi.iter().map(|x| c.a2 * x).collect();
        for k in 0..b.n_modes() {
            let (al, be) = (z[k].re + c.p[k], z[k].im + c.q[k]);
            w1.iter_mut().zip(&b.xi[k]).for_each(|(o, x)| *o += al * x);
            w2.iter_mut().zip(&b.eta[k]).for_each(|(o, x)| *o += be * x);
        }
        if let Some((r1, r2)) = r {
            w1.iter_mut().zip(r1).for_each(|(o, x)| *o += x);
            w2.iter_mut().zip(r2).for_each(|(o, x)| *o += x);
        }
        Ok((w1, w2, c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pq_solve_is_exact() {
        let (p, q, det, res) = solve_pq(0.7, 0.3, C64::new(1.0, -2.0), C64::new(0.5, 0.1));
        assert!((det - (0.09 - 0.49)).abs() < 1e-15);
        assert!(res < 1e-14);
        let r1 = -I * 0.7 * p - 0.3 * q - C64::new(1.0, -2.0);
        assert!(r1.norm() < 1e-14);
    }

    #[test]
    fn unit_splits_are_ordered() {
        assert_eq!(unit_splits(&MultiIndex(vec![1, 1])), vec![(0, 1), (1, 0)]);
        assert_eq!(unit_splits(&MultiIndex(vec![2, 0])), vec![(0, 0)]);
    }

    #[test]
    fn closure_fills_and_symmetrizes() {
        let mut m = BTreeMap::new();
        let a = Monomial::new(MultiIndex(vec![2, 0]), MultiIndex(vec![0, 0]));
        m.insert(a.clone(), C64::new(1.0, 2.0));
        let mut d = 0.0;
        conj_close(&mut m, &mut d);
        assert_eq!(m[&a.conj()], C64::new(1.0, -2.0));
        assert_eq!(d, 0.0);
    }
}
