//! Hardware regimes. `gamma = 2M/N` and `lambda = 1/(2 p_det M)`.

use anyhow::{bail, Result};
use entpack_core::model::{max_ttl, ModelParams};
use serde::{Deserialize, Serialize};

const RAW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimePreset {
    /// `near-term`, `far-term` or `custom`.
    pub name: String,
    pub gamma: f64,
    pub lambda: f64,
    pub f_app: f64,
    /// Memory lifetime in single-click executions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_exec: Option<f64>,
    /// Photon detection probability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_det: Option<f64>,
    /// Single-click executions per time step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<u64>,
}

impl RegimePreset {
    pub fn near_term() -> Self {
        RegimePreset {
            name: "near-term".into(),
            gamma: 0.19,
            lambda: 2.0,
            f_app: 0.5,
            // the tabulated 5263.15 rounds 2M/0.19
            n_exec: Some(2.0 * 500.0 / 0.19),
            p_det: Some(5e-4),
            batch: Some(500),
        }
    }

    pub fn far_term() -> Self {
        RegimePreset {
            name: "far-term".into(),
            gamma: 0.1,
            lambda: 1.0,
            f_app: 0.5,
            n_exec: Some(20000.0),
            p_det: Some(5e-4),
            batch: Some(1000),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "near-term" => Ok(Self::near_term()),
            "far-term" => Ok(Self::far_term()),
            other => bail!("unknown regime {other:?} (expected near-term, far-term or custom)"),
        }
    }

    /// Custom regime from hardware parameters.
    pub fn from_raw(n_exec: f64, p_det: f64, batch: u64, f_app: f64) -> Result<Self> {
        if !(n_exec > 0.0) || !(p_det > 0.0 && p_det <= 1.0) || batch == 0 {
            bail!("need N > 0, p_det in (0, 1] and M >= 1");
        }
        let preset = RegimePreset {
            name: "custom".into(),
            gamma: 2.0 * batch as f64 / n_exec,
            lambda: 1.0 / (2.0 * p_det * batch as f64),
            f_app,
            n_exec: Some(n_exec),
            p_det: Some(p_det),
            batch: Some(batch),
        };
        preset.validate()?;
        Ok(preset)
    }

    /// Custom regime from the model rates directly.
    pub fn from_rates(gamma: f64, lambda: f64, f_app: f64) -> Result<Self> {
        let preset = RegimePreset {
            name: "custom".into(),
            gamma,
            lambda,
            f_app,
            n_exec: None,
            p_det: None,
            batch: None,
        };
        preset.validate()?;
        Ok(preset)
    }

    pub fn derived_gamma(&self) -> Option<f64> {
        Some(2.0 * self.batch? as f64 / self.n_exec?)
    }

    pub fn derived_lambda(&self) -> Option<f64> {
        Some(1.0 / (2.0 * self.p_det? * self.batch? as f64))
    }

    /// Checks the rates against the model's domain and, when hardware
    /// parameters are present, against the values they imply.
    pub fn validate(&self) -> Result<()> {
        ModelParams::new(self.gamma, self.f_app, 2, self.lambda)?;
        for (label, stated, derived) in [
            ("gamma", self.gamma, self.derived_gamma()),
            ("lambda", self.lambda, self.derived_lambda()),
        ] {
            if let Some(d) = derived {
                if (d - stated).abs() > RAW_TOLERANCE * stated.abs().max(1.0) {
                    bail!("{label} = {stated} disagrees with hardware parameters ({d})");
                }
            }
        }
        Ok(())
    }

    pub fn t_max(&self) -> u32 {
        max_ttl(self.gamma, self.f_app)
    }

    pub fn params(&self, n: usize) -> entpack_core::Result<ModelParams> {
        ModelParams::new(self.gamma, self.f_app, n, self.lambda)
    }
}
