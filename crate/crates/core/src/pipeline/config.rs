//! Experiment configuration in TOML; unknown keys are rejected.

use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evolution::Splitting;
use crate::potential::{PotentialSpec, Well};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub half_width: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WellConfig {
    pub center: [f64; 3],
    pub depth: f64,
    pub width: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub wells: Vec<WellConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    /// Number of neutral modes `N`.
    pub modes: usize,
    pub tol: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            modes: 2,
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolitonConfig {
    /// `e₀ − λ` at the working point.
    pub gap: f64,
    /// Additional `e₀ − λ` values tabulated along the branch.
    pub lattice: Vec<f64>,
    pub tol: f64,
}

impl Default for SolitonConfig {
    fn default() -> Self {
        SolitonConfig {
            gap: 0.05,
            lattice: vec![0.025, 0.05, 0.1],
            tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModesConfig {
    pub tol: f64,
    pub inner_tol: f64,
    pub max_iter: usize,
}

impl Default for ModesConfig {
    fn default() -> Self {
        ModesConfig {
            tol: 1e-9,
            inner_tol: 1e-6,
            max_iter: 300,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FgrConfig {
    /// Spherical-harmonic degree integrated exactly by the sphere quadrature.
    pub sphere_order: usize,
    pub tol: f64,
    pub scan_samples: usize,
    /// Lower bound on `min Γ/|z|⁴` below which the scan is flagged.
    pub floor: f64,
    /// Regularizations for the limiting-absorption extrapolation.
    pub eps_ladder: [f64; 3],
}

impl Default for FgrConfig {
    fn default() -> Self {
        FgrConfig {
            sphere_order: 23,
            tol: 1e-10,
            scan_samples: 1000,
            floor: 1e-12,
            eps_ladder: [4e-2, 2e-2, 1e-2],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NormalFormConfig {
    /// Denominator floor as a multiple of `e₀`.
    pub floor_factor: f64,
    pub resolvent_tol: f64,
    pub cancellation_tol: f64,
}

impl Default for NormalFormConfig {
    fn default() -> Self {
        NormalFormConfig {
            floor_factor: 1e-3,
            resolvent_tol: 1e-10,
            cancellation_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OdeConfig {
    /// Initial amplitudes as `[re, im]` pairs.
    pub z0: Vec<[f64; 2]>,
    pub t_end: f64,
    /// `[t_lo, t_hi]` for the log-log slope of `|z|`.
    pub fit_window: [f64; 2],
    pub samples: usize,
    pub validity_radius: f64,
    pub rtol: f64,
    /// Unit-sphere samples used to calibrate the Lyapunov constant.
    pub calibration_samples: usize,
}

impl Default for OdeConfig {
    fn default() -> Self {
        OdeConfig {
            z0: vec![[9.6, 0.0], [0.0, 12.8]],
            t_end: 1e4,
            fit_window: [1e2, 1e4],
            samples: 200,
            validity_radius: 50.0,
            rtol: 1e-9,
            calibration_samples: 400,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveConfig {
    pub z0: Vec<[f64; 2]>,
    /// Defaults to the wrap-around-safe horizon of the grid.
    pub t_end: Option<f64>,
    /// Defaults to the largest admissible step.
    pub dt: Option<f64>,
    pub samples: usize,
    pub splitting: Splitting,
    /// Half-width of the λ interval on which the frozen coefficients are accepted.
    pub lambda_window: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            z0: vec![[0.03, 0.0], [0.0, 0.04]],
            t_end: None,
            dt: None,
            samples: 40,
            splitting: Splitting::TripleJump,
            lambda_window: 0.01,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Weight exponent in `⟨x⟩^{−ν}`.
    #[serde(default = "default_nu")]
    pub nu: f64,
    pub grid: GridConfig,
    pub potential: PotentialConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub soliton: SolitonConfig,
    #[serde(default)]
    pub modes: ModesConfig,
    #[serde(default)]
    pub fgr: FgrConfig,
    #[serde(default)]
    pub normal_form: NormalFormConfig,
    #[serde(default)]
    pub ode: OdeConfig,
    #[serde(default)]
    pub evolve: EvolveConfig,
}

fn default_nu() -> f64 {
    4.0
}

const BUNDLED: [(&str, &str); 3] = [
    (
        "double-well-resonant",
        include_str!("../../configs/double-well-resonant.toml"),
    ),
    ("split-ring", include_str!("../../configs/split-ring.toml")),
    (
        "single-deep-well",
        include_str!("../../configs/single-deep-well.toml"),
    ),
];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let value: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(value)
    }

    fn from_value(value: toml::Value) -> Result<Self> {
        let c: ExperimentConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// A bundled config by name.
    pub fn bundled(name: &str) -> Result<Self> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Config(format!("no bundled config named {name:?}")))?;
        Self::from_toml(text)
    }

    pub fn bundled_names() -> Vec<&'static str> {
        BUNDLED.iter().map(|(n, _)| *n).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Copy with the dotted `key` set to `value`, parsed as a TOML literal (bare words fall back to strings).
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = match slot {
                toml::Value::Table(t) => t
                    .entry(part.to_string())
                    .or_insert(toml::Value::Table(toml::Table::new())),
                toml::Value::Array(a) => {
                    let i: usize = part
                        .parse()
                        .map_err(|_| Error::Config(format!("{key}: {part:?} is not an index")))?;
                    let len = a.len();
                    a.get_mut(i).ok_or_else(|| {
                        Error::Config(format!("{key}: index {i} out of range ({len})"))
                    })?
                }
                _ => {
                    return Err(Error::Config(format!(
                        "{key}: cannot descend into a scalar"
                    )))
                }
            };
        }
        *slot = parsed;
        Self::from_value(root)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if self.name.is_empty() {
            return bad("name must be nonempty");
        }
        if !(self.nu > 0.0) {
            return bad("nu must be positive");
        }
        if self.spectrum.modes == 0 {
            return bad("spectrum.modes must be at least 1");
        }
        let positive = [
            ("grid.half_width", self.grid.half_width),
            ("spectrum.tol", self.spectrum.tol),
            ("soliton.gap", self.soliton.gap),
            ("soliton.tol", self.soliton.tol),
            ("modes.tol", self.modes.tol),
            ("modes.inner_tol", self.modes.inner_tol),
            ("fgr.tol", self.fgr.tol),
            ("fgr.floor", self.fgr.floor),
            ("normal_form.floor_factor", self.normal_form.floor_factor),
            ("normal_form.resolvent_tol", self.normal_form.resolvent_tol),
            (
                "normal_form.cancellation_tol",
                self.normal_form.cancellation_tol,
            ),
            ("ode.t_end", self.ode.t_end),
            ("ode.validity_radius", self.ode.validity_radius),
            ("ode.rtol", self.ode.rtol),
            ("evolve.lambda_window", self.evolve.lambda_window),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{k} must be positive and finite, got {v}"
                )));
            }
        }
        if self.soliton.lattice.iter().any(|g| !(*g > 0.0)) {
            return bad("soliton.lattice entries must be positive");
        }
        if self.fgr.eps_ladder.iter().any(|e| !(*e > 0.0))
            || self.fgr.eps_ladder.windows(2).any(|w| w[1] >= w[0])
        {
            return bad("fgr.eps_ladder must be positive and decreasing");
        }
        let [lo, hi] = self.ode.fit_window;
        if !(lo > 0.0 && hi > lo && hi <= self.ode.t_end) {
            return bad("ode.fit_window must satisfy 0 < lo < hi <= t_end");
        }
        if self.ode.samples < 2 {
            return bad("ode.samples must be at least 2");
        }
        for (k, z) in [("ode.z0", &self.ode.z0), ("evolve.z0", &self.evolve.z0)] {
            if z.len() != self.spectrum.modes {
                return Err(Error::Config(format!(
                    "{k} has {} entries, expected {}",
                    z.len(),
                    self.spectrum.modes
                )));
            }
        }
        if self.evolve.t_end.is_some_and(|t| !(t > 0.0))
            || self.evolve.dt.is_some_and(|t| !(t > 0.0))
        {
            return bad("evolve.t_end and evolve.dt must be positive");
        }
        if self.evolve.samples == 0 {
            return bad("evolve.samples must be positive");
        }
        self.potential_spec().validate()
    }

    pub fn potential_spec(&self) -> PotentialSpec {
        PotentialSpec {
            wells: self
                .potential
                .wells
                .iter()
                .map(|w| Well {
                    center: w.center,
                    depth: w.depth,
                    width: w.width,
                })
                .collect(),
        }
    }
}

pub fn complex(z: &[[f64; 2]]) -> Vec<C64> {
    z.iter().map(|[a, b]| C64::new(*a, *b)).collect()
}
