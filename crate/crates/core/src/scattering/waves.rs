//! Lippmann–Schwinger solves for `−Δ + V` and the distorted Fourier transform.

use num_complex::Complex64 as C64;

use super::green::{GreenKernel, HelmholtzConv, SubBox};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{self, SolveStats};

/// Relative cutoff defining the interaction region `|V| > cut · max|V|`.
pub const SUPPORT_CUT: f64 = 1e-12;
/// Largest admissible fraction of `∫|V|` outside the interaction region.
pub const TRUNCATION_TOL: f64 = 1e-10;
const RESTART: usize = 60;
const MAX_ITER: usize = 2000;

/// The potential restricted to its interaction region.
#[derive(Clone, Debug)]
pub struct Interaction {
    pub grid: Grid,
    pub sub: SubBox,
    /// `V` at the box nodes.
    pub v: Vec<f64>,
    /// Fraction of `∫|V|` dropped by the restriction.
    pub lost: f64,
}

impl Interaction {
    pub fn new(grid: &Grid, v: &[f64]) -> Result<Self> {
        let sub = SubBox::support(grid, &[v], SUPPORT_CUT);
        let vb = sub.restrict(grid, v);
        let total: f64 = v.iter().map(|x| x.abs()).sum();
        let kept: f64 = vb.iter().map(|x| x.abs()).sum();
        let lost = if total > 0.0 {
            (total - kept) / total
        } else {
            0.0
        };
        if lost > TRUNCATION_TOL {
            return Err(Error::Config(format!(
                "interaction region drops {lost:.3e} of the potential mass"
            )));
        }
        Ok(Interaction {
            grid: grid.clone(),
            sub,
            v: vb,
            lost,
        })
    }

    pub fn is_free(&self) -> bool {
        self.v.iter().all(|&x| x == 0.0)
    }
}

/// `(I + G_κV)` and its transpose on the interaction region, plus `G_κ` on the full grid.
pub struct LippmannSchwinger<'a> {
    pub inter: &'a Interaction,
    pub kappa: C64,
    pub tol: f64,
    kernel: GreenKernel,
    boxed: HelmholtzConv,
    full: Option<HelmholtzConv>,
}

impl<'a> LippmannSchwinger<'a> {
    pub fn new(inter: &'a Interaction, kappa: C64, tol: f64) -> Self {
        let kernel = GreenKernel::new(&inter.grid, kappa);
        let boxed = HelmholtzConv::new(&kernel, &inter.sub);
        LippmannSchwinger {
            inter,
            kappa,
            tol,
            kernel,
            boxed,
            full: None,
        }
    }

    /// Also prepares the full-grid convolution used for sources outside the region.
    pub fn with_full(mut self) -> Self {
        self.full = Some(HelmholtzConv::new(
            &self.kernel,
            &SubBox::full(&self.inter.grid),
        ));
        self
    }

    fn full_conv(&self) -> &HelmholtzConv {
        self.full
            .as_ref()
            .expect("full-grid convolution not prepared")
    }

    /// `G_κ f` on the full grid.
    pub fn green_full(&self, f: &[C64]) -> Vec<C64> {
        self.full_conv().apply(f)
    }

    /// Solves `(I + G V) u = b` on the interaction region.
    pub fn solve(&self, b: &[C64]) -> Result<(Vec<C64>, SolveStats)> {
        let v = &self.inter.v;
        let apply = |u: &[C64]| {
            let vu: Vec<C64> = u.iter().zip(v).map(|(a, w)| a * w).collect();
            let g = self.boxed.apply(&vu);
            u.iter().zip(g).map(|(a, b)| a + b).collect::<Vec<C64>>()
        };
        self.run(apply, b)
    }

    /// Solves `(I + V G) w = b` on the interaction region.
    pub fn solve_transpose(&self, b: &[C64]) -> Result<(Vec<C64>, SolveStats)> {
        let v = &self.inter.v;
        let apply = |u: &[C64]| {
            let g = self.boxed.apply(u);
            u.iter()
                .zip(g)
                .zip(v)
                .map(|((a, b), w)| a + w * b)
                .collect::<Vec<C64>>()
        };
        self.run(apply, b)
    }

    fn run<A: Fn(&[C64]) -> Vec<C64>>(
        &self,
        apply: A,
        b: &[C64],
    ) -> Result<(Vec<C64>, SolveStats)> {
        if self.inter.is_free() {
            return Ok((
                b.to_vec(),
                SolveStats {
                    iterations: 0,
                    residual: 0.0,
                    converged: true,
                },
            ));
        }
        let (x, st) = linalg::gmres(apply, |r| r.to_vec(), b, None, self.tol, RESTART, MAX_ITER);
        if !st.converged {
            return Err(Error::Scattering(format!(
                "Lippmann-Schwinger GMRES stalled at {:.3e} (kappa = {})",
                st.residual, self.kappa
            )));
        }
        Ok((x, st))
    }

    /// Full-grid solution of `(−Δ + V − κ²) u = f` with `G_κ` boundary behaviour.
    pub fn resolvent_full(&self, f: &[C64]) -> Result<(Vec<C64>, SolveStats)> {
        let grid = &self.inter.grid;
        let gf = self.green_full(f);
        let (u, st) = self.solve(&self.inter.sub.restrict(grid, &gf))?;
        let vu: Vec<C64> = u.iter().zip(&self.inter.v).map(|(a, w)| a * w).collect();
        let corr = self.green_full(&self.inter.sub.extend(grid, &vu));
        Ok((gf.iter().zip(corr).map(|(a, b)| a - b).collect(), st))
    }

    /// `w = (I + V G)^{-1} f` for a full-grid source, as `w = f + V g` with `g` on the region.
    pub fn transpose_full(&self, f: &[C64]) -> Result<(Vec<C64>, SolveStats)> {
        let grid = &self.inter.grid;
        if self.inter.is_free() {
            return Ok((
                f.to_vec(),
                SolveStats {
                    iterations: 0,
                    residual: 0.0,
                    converged: true,
                },
            ));
        }
        let gf = self.green_full(f);
        let rhs: Vec<C64> = self
            .inter
            .sub
            .restrict(grid, &gf)
            .iter()
            .map(|x| -x)
            .collect();
        let (g, st) = self.solve(&rhs)?;
        let mut w = f.to_vec();
        for (l, idx) in self.inter.sub.indices(grid).into_iter().enumerate() {
            w[idx] += self.inter.v[l] * g[l];
        }
        Ok((w, st))
    }
}

/// Solution `e(·, k)` of `e = e^{ik·x} − G₀ V e` on the interaction region.
#[derive(Clone, Debug)]
pub struct DistortedWave {
    pub k: [f64; 3],
    pub sub: SubBox,
    pub values: Vec<C64>,
    /// Relative residual of the discrete Lippmann–Schwinger system.
    pub residual: f64,
    pub iterations: usize,
}

pub fn plane_wave(points: &[[f64; 3]], k: [f64; 3]) -> Vec<C64> {
    points
        .iter()
        .map(|p| C64::from_polar(1.0, k[0] * p[0] + k[1] * p[1] + k[2] * p[2]))
        .collect()
}

pub fn solve_distorted_wave(inter: &Interaction, k: [f64; 3], tol: f64) -> Result<DistortedWave> {
    let kn = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
    if !(kn > 0.0) {
        return Err(Error::Config("distorted wave needs |k| > 0".into()));
    }
    let ls = LippmannSchwinger::new(inter, C64::new(kn, 0.0), tol);
    let rhs = plane_wave(&inter.sub.points(&inter.grid), k);
    let (values, st) = ls.solve(&rhs)?;
    Ok(DistortedWave {
        k,
        sub: inter.sub.clone(),
        values,
        residual: st.residual,
        iterations: st.iterations,
    })
}

impl DistortedWave {
    /// `e(·, k)` on the full grid from `e = e^{ik·x} − G₀(V e)`.
    pub fn extend(&self, inter: &Interaction) -> Vec<C64> {
        let grid = &inter.grid;
        let kn = (self.k.iter().map(|x| x * x).sum::<f64>()).sqrt();
        let conv = HelmholtzConv::new(
            &GreenKernel::new(grid, C64::new(kn, 0.0)),
            &SubBox::full(grid),
        );
        let vu: Vec<C64> = self
            .values
            .iter()
            .zip(&inter.v)
            .map(|(a, w)| a * w)
            .collect();
        let g = conv.apply(&inter.sub.extend(grid, &vu));
        let pts: Vec<[f64; 3]> = (0..grid.len()).map(|i| grid.point(i)).collect();
        plane_wave(&pts, self.k)
            .into_iter()
            .zip(g)
            .map(|(p, c)| p - c)
            .collect()
    }
}

/// Fourier sums `h³ Σ_x w(x) e^{i r σ·x}` at every direction `σ`.
pub fn fourier_on_sphere(grid: &Grid, w: &[C64], radius: f64, dirs: &[[f64; 3]]) -> Vec<C64> {
    let n = grid.n();
    let xs: Vec<f64> = (0..n).map(|i| grid.coord(i)).collect();
    let dv = grid.cell_volume();
    dirs.iter()
        .map(|s| {
            let tab: Vec<Vec<C64>> = (0..3)
                .map(|a| {
                    xs.iter()
                        .map(|x| C64::from_polar(1.0, radius * s[a] * x))
                        .collect()
                })
                .collect();
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let row = &w[(i * n + j) * n..(i * n + j + 1) * n];
                    let inner: C64 = row.iter().zip(&tab[2]).map(|(a, b)| a * b).sum();
                    acc += tab[0][i] * tab[1][j] * inner;
                }
            }
            acc * dv
        })
        .collect()
}

/// `f̂(rσ) = ∫ f(x) e(x, rσ) dx` at every direction, by one transposed solve.
pub fn distorted_transform(
    inter: &Interaction,
    f: &[f64],
    radius: f64,
    dirs: &[[f64; 3]],
    tol: f64,
) -> Result<(Vec<C64>, SolveStats)> {
    let ls = LippmannSchwinger::new(inter, C64::new(radius, 0.0), tol).with_full();
    let fc: Vec<C64> = f.iter().map(|&x| C64::new(x, 0.0)).collect();
    let (w, st) = ls.transpose_full(&fc)?;
    Ok((fourier_on_sphere(&inter.grid, &w, radius, dirs), st))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{build_potential, PotentialSpec, Well};

    fn single_well(depth: f64) -> (Grid, Vec<f64>) {
        let g = Grid::new(24, 8.0).unwrap();
        let spec = PotentialSpec {
            wells: vec![Well {
                center: [0.3, 0.0, -0.2],
                depth,
                width: 0.9,
            }],
        };
        (g.clone(), build_potential(&spec, &g).unwrap().values)
    }

    #[test]
    fn free_wave_is_plane_wave() {
        let g = Grid::new(16, 6.0).unwrap();
        let inter = Interaction::new(&g, &vec![0.0; g.len()]).unwrap();
        let k = [0.3, -0.2, 0.5];
        let e = solve_distorted_wave(&inter, k, 1e-12).unwrap();
        let pw = plane_wave(&inter.sub.points(&g), k);
        assert_eq!(e.values, pw);
    }

    #[test]
    fn weak_potential_matches_first_born_term() {
        // at the well centre the Born term is a radial integral:
        // −e^{ik·c} ∫ e^{iκr}/(4πr) V(r) sin(κr)/(κr) 4πr² dr
        let g = Grid::new(32, 8.0).unwrap();
        let (depth, width) = (3e-3, 0.9);
        let spec = PotentialSpec {
            wells: vec![Well {
                center: [0.0; 3],
                depth,
                width,
            }],
        };
        let v = build_potential(&spec, &g).unwrap().values;
        let inter = Interaction::new(&g, &v).unwrap();
        let k: [f64; 3] = [0.0, 0.6, 0.5];
        let kn = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
        let e = solve_distorted_wave(&inter, k, 1e-12).unwrap();
        let c = g.index(16, 16, 16);
        let l = (0..inter.sub.len())
            .find(|&l| inter.sub.global(&g, l) == c)
            .unwrap();
        let vr = |r: f64| spec.eval([r, 0.0, 0.0]);
        let steps = 40000;
        let dr = 12.0 / steps as f64;
        let mut born = C64::new(0.0, 0.0);
        for i in 0..steps {
            let r = (i as f64 + 0.5) * dr;
            born -= C64::from_polar(1.0, kn * r) * vr(r) * (kn * r).sin() / kn * dr;
        }
        let got = e.values[l] - 1.0;
        assert!((got - born).norm() < 1e-2 * born.norm(), "{got} vs {born}");
    }

    #[test]
    fn transposed_transform_matches_direct_wave() {
        let (g, v) = single_well(2.0);
        let inter = Interaction::new(&g, &v).unwrap();
        let f: Vec<f64> =
            g.sample(|p| (-(p[0] * p[0] + 2.0 * p[1] * p[1] + (p[2] - 0.5).powi(2))).exp());
        let r = 0.8;
        let dirs = [[0.0, 0.0, 1.0], [0.6, 0.0, 0.8], [-0.48, 0.6, 0.64]];
        let (fh, _) = distorted_transform(&inter, &f, r, &dirs, 1e-12).unwrap();
        for (s, fs) in dirs.iter().zip(&fh) {
            let e = solve_distorted_wave(&inter, [r * s[0], r * s[1], r * s[2]], 1e-12).unwrap();
            let ef = e.extend(&inter);
            let direct: C64 = ef.iter().zip(&f).map(|(a, b)| a * b).sum::<C64>() * g.cell_volume();
            assert!(
                (direct - fs).norm() < 1e-8 * direct.norm(),
                "{direct} vs {fs}"
            );
        }
    }

    #[test]
    fn distorted_wave_solves_its_equation() {
        let (g, v) = single_well(2.0);
        let inter = Interaction::new(&g, &v).unwrap();
        let e = solve_distorted_wave(&inter, [0.5, 0.1, 0.0], 1e-10).unwrap();
        assert!(e.residual <= 1e-10);
    }

    #[test]
    fn truncation_loss_is_a_config_error() {
        // a background below the relative cutoff carrying 2e-9 of the mass
        let g = Grid::new(16, 6.0).unwrap();
        let mut v = vec![-1.0; g.len()];
        v[g.index(8, 8, 8)] = -2e12;
        assert!(matches!(Interaction::new(&g, &v), Err(Error::Config(_))));
        v[g.index(8, 8, 8)] = -1e15;
        assert!(Interaction::new(&g, &v).is_ok());
    }
}
