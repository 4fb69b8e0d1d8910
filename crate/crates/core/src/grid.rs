//! Periodic box, Fourier differential operators, quadrature and the field types.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{frequency, Fft3};

struct GridInner {
    n: usize,
    half_width: f64,
    spacing: f64,
    fft: Fft3,
    k2: Vec<f64>,
    kvec: Vec<f64>,
}

/// Uniform periodic grid on `[-L, L)³` with `n` points per axis.
#[derive(Clone)]
pub struct Grid(Arc<GridInner>);

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Grid(n={}, L={})", self.0.n, self.0.half_width)
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.0.n == other.0.n && self.0.half_width == other.0.half_width
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct GridSpec {
    pub n_per_axis: usize,
    pub box_half_width: f64,
}

impl Grid {
    pub fn new(n: usize, half_width: f64) -> Result<Grid> {
        if n < 16 || n % 2 != 0 || crate::fft::next_smooth(n) != n {
            return Err(Error::Config(format!(
                "n_per_axis = {n} must be an even 2,3,5-smooth size >= 16"
            )));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::Config(format!(
                "box_half_width = {half_width} must be positive"
            )));
        }
        let spacing = 2.0 * half_width / n as f64;
        let period = 2.0 * half_width;
        let kvec: Vec<f64> = (0..n).map(|i| frequency(i, n, period)).collect();
        let mut k2 = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    k2[(i * n + j) * n + k] =
                        kvec[i] * kvec[i] + kvec[j] * kvec[j] + kvec[k] * kvec[k];
                }
            }
        }
        Ok(Grid(Arc::new(GridInner {
            n,
            half_width,
            spacing,
            fft: Fft3::cube(n),
            k2,
            kvec,
        })))
    }

    pub fn from_spec(spec: GridSpec) -> Result<Grid> {
        Grid::new(spec.n_per_axis, spec.box_half_width)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            n_per_axis: self.0.n,
            box_half_width: self.0.half_width,
        }
    }

    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn half_width(&self) -> f64 {
        self.0.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.0.spacing
    }

    pub fn cell_volume(&self) -> f64 {
        self.0.spacing.powi(3)
    }

    pub fn len(&self) -> usize {
        self.0.n.pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.0.half_width + i as f64 * self.0.spacing
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.0.n + j) * self.0.n + k
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let n = self.0.n;
        [
            self.coord(idx / (n * n)),
            self.coord((idx / n) % n),
            self.coord(idx % n),
        ]
    }

    /// Squared Fourier symbol of −Δ in FFT ordering.
    pub fn k2(&self) -> &[f64] {
        &self.0.k2
    }

    /// Angular frequencies along one axis in FFT ordering.
    pub fn frequencies(&self) -> &[f64] {
        &self.0.kvec
    }

    pub fn max_k2(&self) -> f64 {
        self.0.k2.iter().cloned().fold(0.0, f64::max)
    }

    pub fn fft(&self) -> &Fft3 {
        &self.0.fft
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    pub fn sample<F: Fn([f64; 3]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|i| f(self.point(i))).collect()
    }

    pub fn sample_complex<F: Fn([f64; 3]) -> C64>(&self, f: F) -> Vec<C64> {
        (0..self.len()).map(|i| f(self.point(i))).collect()
    }

    /// Riemann sum `h³ Σ a b`.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cell_volume() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.dot(a, a).sqrt()
    }

    /// Bilinear `h³ Σ a b` with complex `a` and real `b`.
    pub fn dot_cr(&self, a: &[C64], b: &[f64]) -> C64 {
        let s: C64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        s * self.cell_volume()
    }

    /// Sesquilinear `h³ Σ a conj(b)`.
    pub fn inner(&self, a: &[C64], b: &[C64]) -> C64 {
        let s: C64 = a.iter().zip(b).map(|(x, y)| x * y.conj()).sum();
        s * self.cell_volume()
    }

    pub fn norm_c(&self, a: &[C64]) -> f64 {
        (self.cell_volume() * a.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// Applies the Fourier multiplier `m(|ξ|²)` to a complex field.
    pub fn multiplier_complex<M: Fn(f64) -> C64>(&self, a: &[C64], m: M) -> Vec<C64> {
        let mut buf = a.to_vec();
        self.0.fft.forward(&mut buf);
        for (v, &k2) in buf.iter_mut().zip(&self.0.k2) {
            *v *= m(k2);
        }
        self.0.fft.inverse(&mut buf);
        buf
    }

    /// Applies a real, even multiplier to two real fields with one complex transform.
    pub fn multiplier_real_pair<M: Fn(f64) -> f64>(
        &self,
        a: &[f64],
        b: &[f64],
        m: M,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut buf: Vec<C64> = a.iter().zip(b).map(|(&x, &y)| C64::new(x, y)).collect();
        self.0.fft.forward(&mut buf);
        for (v, &k2) in buf.iter_mut().zip(&self.0.k2) {
            *v *= m(k2);
        }
        self.0.fft.inverse(&mut buf);
        (
            buf.iter().map(|v| v.re).collect(),
            buf.iter().map(|v| v.im).collect(),
        )
    }

    pub fn multiplier_real<M: Fn(f64) -> f64>(&self, a: &[f64], m: M) -> Vec<f64> {
        let mut buf: Vec<C64> = a.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.0.fft.forward(&mut buf);
        for (v, &k2) in buf.iter_mut().zip(&self.0.k2) {
            *v *= m(k2);
        }
        self.0.fft.inverse(&mut buf);
        buf.iter().map(|v| v.re).collect()
    }

    /// `−Δa` for a real field.
    pub fn neg_laplacian(&self, a: &[f64]) -> Vec<f64> {
        self.multiplier_real(a, |k2| k2)
    }

    pub fn neg_laplacian_pair(&self, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.multiplier_real_pair(a, b, |k2| k2)
    }

    /// L² norm computed from Fourier coefficients (Parseval).
    pub fn fourier_norm(&self, a: &[C64]) -> f64 {
        let mut buf = a.to_vec();
        self.0.fft.forward(&mut buf);
        let s: f64 = buf.iter().map(|v| v.norm_sqr()).sum();
        (s * self.cell_volume() / self.len() as f64).sqrt()
    }

    /// Discrete H^s surrogate `‖(1+|ξ|²)^{s/2} f̂‖`, normalized to agree with L² at s = 0.
    pub fn sobolev_norm(&self, a: &[C64], s: f64) -> f64 {
        let mut buf = a.to_vec();
        self.0.fft.forward(&mut buf);
        let sum: f64 = buf
            .iter()
            .zip(&self.0.k2)
            .map(|(v, &k2)| v.norm_sqr() * (1.0 + k2).powf(s))
            .sum();
        (sum * self.cell_volume() / self.len() as f64).sqrt()
    }
}

/// Real scalar field on a grid.
#[derive(Clone, Debug)]
pub struct RealField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

/// Complex scalar field on a grid.
#[derive(Clone, Debug)]
pub struct ComplexField {
    pub grid: Grid,
    pub values: Vec<C64>,
}

/// Real two-component field `(R₁, R₂) = (Re R, Im R)`.
#[derive(Clone, Debug)]
pub struct FieldPair {
    pub grid: Grid,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// Two-component field with complex entries; the coefficient fields of polynomial expansions.
#[derive(Clone, Debug)]
pub struct ComplexPair {
    pub grid: Grid,
    pub first: Vec<C64>,
    pub second: Vec<C64>,
}

fn check_finite<I: IntoIterator<Item = f64>>(it: I) -> Result<()> {
    if it.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::Config("field contains non-finite samples".into()))
    }
}

impl RealField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for {:?}",
                values.len(),
                grid
            )));
        }
        check_finite(values.iter().cloned())?;
        Ok(RealField { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        RealField {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn norm(&self) -> f64 {
        self.grid.norm(&self.values)
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| C64::new(v, 0.0)).collect(),
        }
    }
}

impl ComplexField {
    pub fn new(grid: Grid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for {:?}",
                values.len(),
                grid
            )));
        }
        check_finite(values.iter().flat_map(|v| [v.re, v.im]))?;
        Ok(ComplexField { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        ComplexField {
            grid: grid.clone(),
            values: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn norm(&self) -> f64 {
        self.grid.norm_c(&self.values)
    }

    pub fn to_pair(&self) -> FieldPair {
        FieldPair {
            grid: self.grid.clone(),
            first: self.values.iter().map(|v| v.re).collect(),
            second: self.values.iter().map(|v| v.im).collect(),
        }
    }
}

impl FieldPair {
    pub fn new(grid: Grid, first: Vec<f64>, second: Vec<f64>) -> Result<Self> {
        if first.len() != grid.len() || second.len() != grid.len() {
            return Err(Error::GridMismatch("component length".into()));
        }
        check_finite(first.iter().chain(&second).cloned())?;
        Ok(FieldPair {
            grid,
            first,
            second,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        FieldPair {
            grid: grid.clone(),
            first: vec![0.0; grid.len()],
            second: vec![0.0; grid.len()],
        }
    }

    pub fn norm(&self) -> f64 {
        (self.grid.dot(&self.first, &self.first) + self.grid.dot(&self.second, &self.second)).sqrt()
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid.clone(),
            values: self
                .first
                .iter()
                .zip(&self.second)
                .map(|(&a, &b)| C64::new(a, b))
                .collect(),
        }
    }

    pub fn axpy(&mut self, a: f64, x: &FieldPair) {
        for (y, v) in self.first.iter_mut().zip(&x.first) {
            *y += a * v;
        }
        for (y, v) in self.second.iter_mut().zip(&x.second) {
            *y += a * v;
        }
    }

    pub fn sub(&self, other: &FieldPair) -> FieldPair {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }
}

impl ComplexPair {
    pub fn zeros(grid: &Grid) -> Self {
        let z = vec![C64::new(0.0, 0.0); grid.len()];
        ComplexPair {
            grid: grid.clone(),
            first: z.clone(),
            second: z,
        }
    }

    pub fn from_real(p: &FieldPair) -> Self {
        ComplexPair {
            grid: p.grid.clone(),
            first: p.first.iter().map(|&v| C64::new(v, 0.0)).collect(),
            second: p.second.iter().map(|&v| C64::new(v, 0.0)).collect(),
        }
    }

    pub fn conj(&self) -> Self {
        ComplexPair {
            grid: self.grid.clone(),
            first: self.first.iter().map(|v| v.conj()).collect(),
            second: self.second.iter().map(|v| v.conj()).collect(),
        }
    }

    pub fn axpy(&mut self, a: C64, x: &ComplexPair) {
        for (y, v) in self.first.iter_mut().zip(&x.first) {
            *y += a * v;
        }
        for (y, v) in self.second.iter_mut().zip(&x.second) {
            *y += a * v;
        }
    }

    pub fn norm(&self) -> f64 {
        let g = &self.grid;
        (g.norm_c(&self.first).powi(2) + g.norm_c(&self.second).powi(2)).sqrt()
    }

    /// Real parts as a field pair.
    pub fn re(&self) -> FieldPair {
        FieldPair {
            grid: self.grid.clone(),
            first: self.first.iter().map(|v| v.re).collect(),
            second: self.second.iter().map(|v| v.re).collect(),
        }
    }
}

/// `−Δf` by the Fourier multiplier `|ξ|²`.
pub fn apply_laplacian(f: &ComplexField) -> ComplexField {
    let values = f.grid.multiplier_complex(&f.values, |k2| C64::new(k2, 0.0));
    ComplexField {
        grid: f.grid.clone(),
        values,
    }
}

/// `⟨f, g⟩ = ∫ f ḡ` by the uniform-weight rule.
pub fn inner_product(f: &ComplexField, g: &ComplexField) -> Result<C64> {
    f.grid.ensure_same(&g.grid)?;
    Ok(f.grid.inner(&f.values, &g.values))
}

/// `ω(x, y) = Im ⟨x, y⟩`.
pub fn symplectic_pairing(x: &ComplexField, y: &ComplexField) -> Result<f64> {
    Ok(inner_product(x, y)?.im)
}

/// `‖⟨x⟩^{-ν} f‖₂` with `⟨x⟩ = (1+|x|²)^{1/2}`.
pub fn weighted_norm(f: &FieldPair, nu: f64) -> Result<f64> {
    if !(nu >= 0.0) {
        return Err(Error::Config(format!(
            "weight exponent nu = {nu} must be nonnegative"
        )));
    }
    let g = &f.grid;
    let mut s = 0.0;
    for idx in 0..g.len() {
        let [x, y, z] = g.point(idx);
        let w = (1.0 + x * x + y * y + z * z).powf(-0.5 * nu);
        s += w * w * (f.first[idx].powi(2) + f.second[idx].powi(2));
    }
    Ok((s * g.cell_volume()).sqrt())
}

/// `⟨x⟩^{-ν}` sampled on the grid.
pub fn weight(grid: &Grid, nu: f64) -> Vec<f64> {
    grid.sample(|[x, y, z]| (1.0 + x * x + y * y + z * z).powf(-0.5 * nu))
}

const DUMP_MAGIC: &[u8; 4] = b"NLSF";
const DUMP_VERSION: u32 = 1;

/// Writes interleaved components (`components.len()` values per node) in the binary dump format.
pub fn write_dump(path: &Path, grid: &Grid, components: &[&[f64]]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(DUMP_MAGIC)?;
    out.write_all(&DUMP_VERSION.to_le_bytes())?;
    out.write_all(&(grid.n() as u32).to_le_bytes())?;
    out.write_all(&grid.half_width().to_le_bytes())?;
    out.write_all(&(components.len() as u32).to_le_bytes())?;
    for idx in 0..grid.len() {
        for c in components {
            out.write_all(&c[idx].to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn dump_real(path: &Path, f: &RealField) -> Result<()> {
    write_dump(path, &f.grid, &[&f.values])
}

pub fn dump_complex(path: &Path, f: &ComplexField) -> Result<()> {
    let re: Vec<f64> = f.values.iter().map(|v| v.re).collect();
    let im: Vec<f64> = f.values.iter().map(|v| v.im).collect();
    write_dump(path, &f.grid, &[&re, &im])
}

pub fn dump_pair(path: &Path, f: &FieldPair) -> Result<()> {
    write_dump(path, &f.grid, &[&f.first, &f.second])
}

/// Reads a dump back as `(grid, components)`.
pub fn read_dump(path: &Path) -> Result<(Grid, Vec<Vec<f64>>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 24 || &bytes[0..4] != DUMP_MAGIC {
        return Err(Error::Config(format!(
            "{} is not a field dump",
            path.display()
        )));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != DUMP_VERSION {
        return Err(Error::Config(format!("unsupported dump version {version}")));
    }
    let n = u32_at(8) as usize;
    let l = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let count = u32_at(20) as usize;
    let grid = Grid::new(n, l)?;
    let expected = 24 + 8 * count * grid.len();
    if bytes.len() != expected {
        return Err(Error::Config(format!(
            "dump has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut comps = vec![Vec::with_capacity(grid.len()); count];
    for idx in 0..grid.len() {
        for (c, comp) in comps.iter_mut().enumerate() {
            let o = 24 + 8 * (idx * count + c);
            comp.push(f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()));
        }
    }
    Ok((grid, comps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_identity() {
        let g = Grid::new(16, 3.0).unwrap();
        assert_eq!(g.spacing() * 16.0, 6.0);
        assert!(Grid::new(48, 3.0).is_ok());
        assert!(Grid::new(34, 3.0).is_err());
        assert!(Grid::new(25, 3.0).is_err());
        assert!(Grid::new(8, 3.0).is_err());
    }

    #[test]
    fn dump_roundtrip() {
        let g = Grid::new(16, 4.0).unwrap();
        let f = ComplexField::new(
            g.clone(),
            g.sample_complex(|[x, y, z]| C64::new(x - y, z * x)),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        dump_complex(&p, &f).unwrap();
        let (g2, comps) = read_dump(&p).unwrap();
        assert_eq!(g2, g);
        assert_eq!(comps.len(), 2);
        for (i, v) in f.values.iter().enumerate() {
            assert_eq!(comps[0][i], v.re);
            assert_eq!(comps[1][i], v.im);
        }
    }
}
