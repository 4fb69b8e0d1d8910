//! Run manifest and the Markdown/CSV report rendered from it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::scattering::MEASURE_CONSTANT;

const SIGN_CONVENTION: &str = "i∂ₜψ = (−Δ+V)ψ + |ψ|²ψ; soliton e^{iλt}φ^λ with −Δφ+Vφ+λφ+φ³ = 0; \
ψ = e^{iΘ}(φ^λ + w₁ + i w₂); L = [[0, L₋], [−L₊, 0]]; ω(X, Y) = Im ∫ X Ȳ; internal modes ⟨ξ_n, η_m⟩ = δ_nm";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StageRecord {
    pub stage: String,
    pub ok: bool,
    pub seconds: f64,
    pub residuals: BTreeMap<String, f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub name: String,
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub sign_convention: String,
    /// `C` in `Im⟨(−Δ+V−h²−i0)⁻¹P_c f, g⟩ = C h ∫ f̂ conj(ĝ) dσ`.
    pub measure_constant: f64,
    /// Fitted `C` in `Q_res ≈ −C(e₀−λ)Γ`.
    pub lyapunov_c: Option<f64>,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        RunManifest {
            name: cfg.name.clone(),
            config_hash: cfg.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            sign_convention: SIGN_CONVENTION.to_string(),
            measure_constant: MEASURE_CONSTANT,
            lyapunov_c: None,
            stages: Vec::new(),
        }
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn residual(&self, stage: &str, key: &str) -> Option<f64> {
        self.stage(stage)
            .and_then(|s| s.residuals.get(key).copied())
    }

    pub fn completed(&self) -> bool {
        self.stages.iter().all(|s| s.ok)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

const SECTIONS: [(&str, &str); 8] = [
    ("spectrum", "Linear spectrum"),
    ("soliton", "Soliton branch"),
    ("modes", "Internal modes, margins and projector algebra"),
    ("fgr", "FGR positivity scan"),
    ("normalform", "Cancellation lemma and coefficient families"),
    ("ode", "Effective dynamics and decay fit"),
    ("evolve", "PDE run and majorants"),
    ("decompose", "Final decomposition"),
];

fn fmt(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-3 && v.abs() < 1e5) {
        format!("{v:.6}")
    } else {
        format!("{v:.4e}")
    }
}

/// Markdown and CSV renderings of a manifest; every number comes from a manifest entry.
pub fn render_report(m: &RunManifest) -> (String, String) {
    let mut md = String::new();
    let _ = writeln!(md, "# Run report: {}\n", m.name);
    let _ = writeln!(md, "- config hash: `{}`", m.config_hash);
    let _ = writeln!(md, "- code version: {}", m.code_version);
    let _ = writeln!(md, "- seed: {}", m.seed);
    let _ = writeln!(md, "- sign convention: {}", m.sign_convention);
    let _ = writeln!(
        md,
        "- spectral measure constant: {}",
        fmt(m.measure_constant)
    );
    if let Some(c) = m.lyapunov_c {
        let _ = writeln!(md, "- Lyapunov constant C: {}", fmt(c));
    }
    let mut csv = String::from("stage,key,value\n");
    for (key, title) in SECTIONS {
        let Some(s) = m.stage(key) else { continue };
        let status = if s.ok { "ok" } else { "failed" };
        let _ = writeln!(md, "\n## {title}\n\nstatus: {status}, {:.2} s\n", s.seconds);
        if let Some(e) = &s.error {
            let _ = writeln!(md, "error: {e}\n");
        }
        if !s.residuals.is_empty() {
            let _ = writeln!(md, "| quantity | value |\n|---|---|");
            for (k, v) in &s.residuals {
                let _ = writeln!(md, "| {k} | {} |", fmt(*v));
                let _ = writeln!(csv, "{key},{k},{v}");
            }
        }
    }
    (md, csv)
}

/// Writes `report.md` and `report.csv` into `dir`.
pub fn emit_report(m: &RunManifest, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (md, csv) = render_report(m);
    fs::write(dir.join("report.md"), md)?;
    fs::write(dir.join("report.csv"), csv)?;
    Ok(())
}
