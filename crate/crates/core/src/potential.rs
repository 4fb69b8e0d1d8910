//! Gaussian-well trapping potentials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, RealField};

/// Below this magnitude the potential counts as decayed at the box boundary.
pub const BOUNDARY_DECAY: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Well {
    pub center: [f64; 3],
    pub depth: f64,
    pub width: f64,
}

/// `V(x) = −Σ depth_j exp(−|x − c_j|²/width_j²)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub wells: Vec<Well>,
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        if self.wells.is_empty() {
            return Err(Error::Config("potential needs at least one well".into()));
        }
        for (i, w) in self.wells.iter().enumerate() {
            if !(w.depth > 0.0 && w.width > 0.0) || !w.center.iter().all(|c| c.is_finite()) {
                return Err(Error::Config(format!(
                    "well {i}: depth and width must be positive"
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        self.wells
            .iter()
            .map(|w| {
                let r2: f64 = (0..3).map(|a| (x[a] - w.center[a]).powi(2)).sum();
                -w.depth * (-r2 / (w.width * w.width)).exp()
            })
            .sum()
    }

    /// Largest `|V|` over the six faces of `[-L, L]³`, sampled at grid coordinates.
    pub fn boundary_max(&self, grid: &Grid) -> f64 {
        let l = grid.half_width();
        let n = grid.n();
        let mut m: f64 = 0.0;
        for axis in 0..3 {
            for face in [-l, l] {
                for i in 0..=n {
                    for j in 0..=n {
                        let a = -l + i as f64 * grid.spacing();
                        let b = -l + j as f64 * grid.spacing();
                        let mut p = [0.0; 3];
                        p[axis] = face;
                        p[(axis + 1) % 3] = a;
                        p[(axis + 2) % 3] = b;
                        m = m.max(self.eval(p).abs());
                    }
                }
            }
        }
        m
    }
}

/// Samples `V` on the grid after checking the boundary-decay invariant.
pub fn build_potential(spec: &PotentialSpec, grid: &Grid) -> Result<RealField> {
    spec.validate()?;
    let edge = spec.boundary_max(grid);
    if edge >= BOUNDARY_DECAY {
        return Err(Error::Config(format!(
            "|V| = {edge:.3e} at the box boundary exceeds {BOUNDARY_DECAY:.0e}; enlarge box_half_width"
        )));
    }
    let values = grid.sample(|x| spec.eval(x));
    RealField::new(grid.clone(), values)
}

/// The zero potential, used for free-space reference computations.
pub fn zero_potential(grid: &Grid) -> RealField {
    RealField::zeros(grid)
}
