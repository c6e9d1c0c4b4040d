//! Run settings: defaults, then the optional TOML config file, then flags.
//!
//! ```toml
//! regime = "far-term"          # near-term | far-term | custom
//! n = 2
//! n_max = 7
//! methods = ["policy-iteration", "heuristic", "best-constant", "random"]
//! tol = 1e-10
//! eval = "regenerative"        # regenerative | jacobi | gauss-seidel
//! episodes = 1000000
//! seed = 0
//! reduced = true
//! exact_state_limit = 1000000
//! step_cap = 10000000000
//!
//! [custom]                     # read when regime = "custom"
//! f_app = 0.5
//! gamma = 0.1                  # either gamma and lambda ...
//! lambda = 1.0
//! n_exec = 20000.0             # ... or N, p_det and M
//! p_det = 5e-4
//! batch = 1000
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use entpack_core::dp::{EvalMethod, EvalOptions};
use entpack_core::montecarlo::DEFAULT_STEP_CAP;
use serde::Deserialize;

use crate::args::CommonArgs;
use crate::experiment::Method;
use crate::presets::RegimePreset;

pub const DEFAULT_EPISODES: u64 = 1_000_000;
pub const DEFAULT_EXACT_STATE_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub regime: Option<String>,
    pub custom: Option<CustomRegime>,
    pub n: Option<usize>,
    pub n_max: Option<usize>,
    pub methods: Option<Vec<Method>>,
    pub tol: Option<f64>,
    pub eval: Option<EvalMethod>,
    pub episodes: Option<u64>,
    pub seed: Option<u64>,
    pub reduced: Option<bool>,
    pub exact_state_limit: Option<usize>,
    pub step_cap: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomRegime {
    pub f_app: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub n_exec: Option<f64>,
    pub p_det: Option<f64>,
    pub batch: Option<u64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub regime: RegimePreset,
    pub n: Option<usize>,
    pub n_max: Option<usize>,
    pub methods: Vec<Method>,
    pub eval: EvalOptions,
    pub episodes: u64,
    pub seed: u64,
    pub reduced: bool,
    pub exact_state_limit: usize,
    pub step_cap: u64,
}

impl Settings {
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        Self::merge(file, args)
    }

    pub fn merge(file: ConfigFile, args: &CommonArgs) -> Result<Self> {
        let name = args
            .regime
            .clone()
            .or(file.regime.clone())
            .unwrap_or_else(|| "near-term".into());
        let regime = if name == "custom" {
            custom_regime(file.custom.clone().unwrap_or_default(), args)?
        } else {
            if args.has_custom_parameters() {
                bail!("custom regime parameters need --regime custom");
            }
            RegimePreset::by_name(&name)?
        };
        let mut eval = EvalOptions::default();
        if let Some(m) = args.eval.or(file.eval) {
            eval = eval.with_method(m);
        }
        if let Some(t) = args.tol.or(file.tol) {
            if !(t > 0.0 && t.is_finite()) {
                bail!("tolerance must be positive, got {t}");
            }
            eval = eval.with_tol(t);
        }
        let reduced = if args.full {
            false
        } else if args.reduced {
            true
        } else {
            file.reduced.unwrap_or(true)
        };
        Ok(Settings {
            regime,
            n: args.n.or(file.n),
            n_max: args.n_max.or(file.n_max),
            methods: if args.method.is_empty() {
                file.methods.unwrap_or_default()
            } else {
                args.method.clone()
            },
            eval,
            episodes: args.episodes.or(file.episodes).unwrap_or(DEFAULT_EPISODES),
            seed: args.seed.or(file.seed).unwrap_or(0),
            reduced,
            exact_state_limit: args
                .exact_state_limit
                .or(file.exact_state_limit)
                .unwrap_or(DEFAULT_EXACT_STATE_LIMIT),
            step_cap: args.step_cap.or(file.step_cap).unwrap_or(DEFAULT_STEP_CAP),
        })
    }

    pub fn require_n(&self) -> Result<usize> {
        self.n.context("--n is required")
    }
}

fn custom_regime(file: CustomRegime, args: &CommonArgs) -> Result<RegimePreset> {
    let f_app = args.f_app.or(file.f_app).unwrap_or(0.5);
    let gamma = args.gamma.or(file.gamma);
    let lambda = args.lambda.or(file.lambda);
    let raw = (
        args.n_exec.or(file.n_exec),
        args.p_det.or(file.p_det),
        args.batch.or(file.batch),
    );
    match (gamma, lambda, raw) {
        (Some(g), Some(l), (None, None, None)) => RegimePreset::from_rates(g, l, f_app),
        (None, None, (Some(ne), Some(pd), Some(m))) => RegimePreset::from_raw(ne, pd, m, f_app),
        _ => bail!("custom regime needs either gamma and lambda, or n-exec, p-det and batch"),
    }
}

pub fn default_policy_path(settings: &Settings, n: usize, method: Method) -> PathBuf {
    PathBuf::from(format!(
        "policy_{}_n{}_{}.json",
        settings.regime.name,
        n,
        method.name()
    ))
}
