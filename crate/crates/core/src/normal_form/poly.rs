//! Multi-indices, monomials `z^m z̄^n` and polynomials with field-valued coefficients.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::grid::Grid;

/// `m ∈ (ℤ⁺ ∪ {0})^N`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u8>);

impl MultiIndex {
    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn unit(n: usize, k: usize) -> Self {
        let mut m = vec![0; n];
        m[k] = 1;
        MultiIndex(m)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `|m| = Σ m_k`.
    pub fn order(&self) -> usize {
        self.0.iter().map(|&x| x as usize).sum()
    }

    pub fn add(&self, o: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&o.0).map(|(a, b)| a + b).collect())
    }

    /// `m − e_k` when `m_k > 0`.
    pub fn minus_unit(&self, k: usize) -> Option<MultiIndex> {
        if self.0[k] == 0 {
            return None;
        }
        let mut m = self.0.clone();
        m[k] -= 1;
        Some(MultiIndex(m))
    }

    /// `m · E`.
    pub fn dot(&self, e: &[f64]) -> f64 {
        self.0.iter().zip(e).map(|(&a, b)| a as f64 * b).sum()
    }

    pub fn pow(&self, z: &[C64]) -> C64 {
        self.0
            .iter()
            .zip(z)
            .fold(C64::new(1.0, 0.0), |acc, (&a, zi)| acc * zi.powu(a as u32))
    }

    /// The single index `k` of a unit multi-index.
    pub fn as_unit(&self) -> Option<usize> {
        if self.order() == 1 {
            self.0.iter().position(|&x| x == 1)
        } else {
            None
        }
    }

    /// All multi-indices of length `n` and order `order`, lexicographically descending.
    pub fn of_order(n: usize, order: usize) -> Vec<MultiIndex> {
        fn rec(n: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<MultiIndex>) {
            if cur.len() + 1 == n {
                cur.push(left as u8);
                out.push(MultiIndex(cur.clone()));
                cur.pop();
                return;
            }
            for a in (0..=left).rev() {
                cur.push(a as u8);
                rec(n, left - a, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        if n == 0 {
            return out;
        }
        rec(n, order, &mut Vec::new(), &mut out);
        out
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        write!(f, "({})", s.join(","))
    }
}

/// `z^m z̄^n`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct Monomial {
    pub m: MultiIndex,
    pub n: MultiIndex,
}

impl Monomial {
    pub fn new(m: MultiIndex, n: MultiIndex) -> Self {
        Monomial { m, n }
    }

    pub fn conj(&self) -> Monomial {
        Monomial {
            m: self.n.clone(),
            n: self.m.clone(),
        }
    }

    pub fn degree(&self) -> (usize, usize) {
        (self.m.order(), self.n.order())
    }

    /// `(m − n) · E`.
    pub fn frequency(&self, e: &[f64]) -> f64 {
        self.m.dot(e) - self.n.dot(e)
    }

    pub fn eval(&self, z: &[C64]) -> C64 {
        let zb: Vec<C64> = z.iter().map(|c| c.conj()).collect();
        self.m.pow(z) * self.n.pow(&zb)
    }

    /// `d/dt z^m z̄^n` along `ż`.
    pub fn derivative(&self, z: &[C64], zdot: &[C64]) -> C64 {
        let mut out = C64::new(0.0, 0.0);
        for k in 0..z.len() {
            if let Some(m) = self.m.minus_unit(k) {
                out += self.m.0[k] as f64 * Monomial::new(m, self.n.clone()).eval(z) * zdot[k];
            }
            if let Some(n) = self.n.minus_unit(k) {
                out +=
                    self.n.0[k] as f64 * Monomial::new(self.m.clone(), n).eval(z) * zdot[k].conj();
            }
        }
        out
    }

    pub fn mul(&self, o: &Monomial) -> Monomial {
        Monomial {
            m: self.m.add(&o.m),
            n: self.n.add(&o.n),
        }
    }

    /// All monomials of bidegree `(dm, dn)` in `n_modes` variables.
    pub fn all(n_modes: usize, dm: usize, dn: usize) -> Vec<Monomial> {
        let ms = MultiIndex::of_order(n_modes, dm);
        let ns = MultiIndex::of_order(n_modes, dn);
        ms.iter()
            .flat_map(|m| ns.iter().map(move |n| Monomial::new(m.clone(), n.clone())))
            .collect()
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{};{}", self.m, self.n)
    }
}

/// `Σ c_{m,n}(x) z^m z̄^n` with complex field coefficients.
#[derive(Clone, Debug)]
pub struct FieldPoly {
    pub len: usize,
    pub terms: BTreeMap<Monomial, Vec<C64>>,
}

impl FieldPoly {
    pub fn zero(len: usize) -> Self {
        FieldPoly {
            len,
            terms: BTreeMap::new(),
        }
    }

    pub fn add_term(&mut self, mono: Monomial, c: C64, f: &[f64]) {
        let e = self
            .terms
            .entry(mono)
            .or_insert_with(|| vec![C64::new(0.0, 0.0); f.len()]);
        e.iter_mut().zip(f).for_each(|(a, b)| *a += c * b);
    }

    pub fn add_complex_term(&mut self, mono: Monomial, c: C64, f: &[C64]) {
        let e = self
            .terms
            .entry(mono)
            .or_insert_with(|| vec![C64::new(0.0, 0.0); f.len()]);
        e.iter_mut().zip(f).for_each(|(a, b)| *a += c * b);
    }

    /// `Σ_k c_k z_k f_k` (`conj = false`) or `Σ_k c_k z̄_k f_k`.
    pub fn linear(fields: &[Vec<f64>], c: C64, conj: bool) -> Self {
        let n = fields.len();
        let mut p = FieldPoly::zero(fields[0].len());
        for (k, f) in fields.iter().enumerate() {
            let (m, nn) = if conj {
                (MultiIndex::zero(n), MultiIndex::unit(n, k))
            } else {
                (MultiIndex::unit(n, k), MultiIndex::zero(n))
            };
            p.add_term(Monomial::new(m, nn), c, f);
        }
        p
    }

    pub fn add(&self, o: &FieldPoly) -> FieldPoly {
        let mut out = self.clone();
        out.add_assign(C64::new(1.0, 0.0), o);
        out
    }

    pub fn add_assign(&mut self, c: C64, o: &FieldPoly) {
        for (k, v) in &o.terms {
            self.add_complex_term(k.clone(), c, v);
        }
    }

    pub fn scale(&self, c: C64) -> FieldPoly {
        let mut out = FieldPoly::zero(self.len);
        out.add_assign(c, self);
        out
    }

    /// Pointwise product with a real field.
    pub fn times_field(&self, f: &[f64]) -> FieldPoly {
        FieldPoly {
            len: self.len,
            terms: self
                .terms
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().zip(f).map(|(a, b)| a * b).collect()))
                .collect(),
        }
    }

    pub fn mul(&self, o: &FieldPoly) -> FieldPoly {
        let mut out = FieldPoly::zero(self.len);
        for (ka, va) in &self.terms {
            for (kb, vb) in &o.terms {
                let e = out
                    .terms
                    .entry(ka.mul(kb))
                    .or_insert_with(|| vec![C64::new(0.0, 0.0); va.len()]);
                e.iter_mut()
                    .zip(va.iter().zip(vb))
                    .for_each(|(r, (a, b))| *r += a * b);
            }
        }
        out
    }

    /// Terms of bidegree `(dm, dn)`.
    pub fn part(&self, dm: usize, dn: usize) -> FieldPoly {
        FieldPoly {
            len: self.len,
            terms: self
                .terms
                .iter()
                .filter(|(k, _)| k.degree() == (dm, dn))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn eval(&self, z: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.len];
        for (k, v) in &self.terms {
            let c = k.eval(z);
            out.iter_mut().zip(v).for_each(|(a, b)| *a += c * b);
        }
        out
    }

    pub fn get(&self, mono: &Monomial) -> Option<&Vec<C64>> {
        self.terms.get(mono)
    }
}

/// Polynomial two-component field.
#[derive(Clone, Debug)]
pub struct PairPoly {
    pub first: FieldPoly,
    pub second: FieldPoly,
}

impl PairPoly {
    pub fn zero(len: usize) -> Self {
        PairPoly {
            first: FieldPoly::zero(len),
            second: FieldPoly::zero(len),
        }
    }

    pub fn add(&self, o: &PairPoly) -> PairPoly {
        PairPoly {
            first: self.first.add(&o.first),
            second: self.second.add(&o.second),
        }
    }

    pub fn part(&self, dm: usize, dn: usize) -> PairPoly {
        PairPoly {
            first: self.first.part(dm, dn),
            second: self.second.part(dm, dn),
        }
    }

    /// Monomials present in either component.
    pub fn monomials(&self) -> Vec<Monomial> {
        let mut k: Vec<Monomial> = self
            .first
            .terms
            .keys()
            .chain(self.second.terms.keys())
            .cloned()
            .collect();
        k.sort();
        k.dedup();
        k
    }

    /// Coefficient pair of one monomial (zero fields when absent).
    pub fn coefficient(&self, mono: &Monomial) -> (Vec<C64>, Vec<C64>) {
        let z = || vec![C64::new(0.0, 0.0); self.first.len];
        (
            self.first.get(mono).cloned().unwrap_or_else(z),
            self.second.get(mono).cloned().unwrap_or_else(z),
        )
    }

    pub fn eval(&self, z: &[C64]) -> (Vec<C64>, Vec<C64>) {
        (self.first.eval(z), self.second.eval(z))
    }
}

/// `2×2` matrix of scalar polynomials acting on a pair polynomial.
pub struct PolyMatrix(pub [[FieldPoly; 2]; 2]);

impl PolyMatrix {
    pub fn apply(&self, v: &PairPoly) -> PairPoly {
        let [[a, b], [c, d]] = &self.0;
        PairPoly {
            first: a.mul(&v.first).add(&b.mul(&v.second)),
            second: c.mul(&v.first).add(&d.mul(&v.second)),
        }
    }
}

/// Bilinear pairing `h³ Σ f g` of a complex and a real field.
pub fn pair(grid: &Grid, f: &[C64], g: &[f64]) -> C64 {
    grid.dot_cr(f, g)
}
