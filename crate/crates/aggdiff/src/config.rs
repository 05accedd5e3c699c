//! Flat `key = value` configuration files with dotted keys.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use aggdiff_core::{ExtremalOptions, Initialization, ModelParams, SimConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("key `{key}`: cannot parse `{value}`")]
    Value { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

/// Initial data for `evolve` and `classify`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialData {
    /// `amplitude · exp(−r²/width²)` on the configured grid.
    Gaussian { amplitude: f64, width: f64 },
    /// `amplitude · (1 − r²/width²)_+^{1/(m−1)}` on the configured grid.
    Bump { amplitude: f64, width: f64 },
    /// `kappa` times the threshold profile, on its padded grid.
    Threshold { kappa: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelftestScale {
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Unvalidated; commands report regime violations themselves.
    pub params: ModelParams,
    pub n: usize,
    pub r_max: f64,
    pub extremal: ExtremalOptions,
    /// `t_end` is replaced by `t_end_factor` characteristic times when
    /// `t_end_given` is false.
    pub sim: SimConfig,
    pub t_end_given: bool,
    pub t_end_factor: f64,
    pub initial: InitialData,
    pub kappas: Vec<f64>,
    /// Evolution grid radius in units of the threshold support radius.
    pub padding: f64,
    pub classify_tol: f64,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub selftest_scale: SelftestScale,
    /// Multiplies every kernel weight in the selftest (fault injection).
    pub corrupt_kernel: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: ModelParams { d: 3, s: 1.1, m: 1.2, eps: 0.0 },
            n: 256,
            r_max: 4.0,
            extremal: ExtremalOptions::default(),
            sim: SimConfig::default(),
            t_end_given: false,
            t_end_factor: 10.0,
            initial: InitialData::Gaussian { amplitude: 1.0, width: 1.0 },
            kappas: vec![0.8, 1.2],
            padding: 8.0,
            classify_tol: 1e-3,
            out_dir: PathBuf::from("out"),
            seed: 0,
            selftest_scale: SelftestScale::Quick,
            corrupt_kernel: None,
        }
    }
}

const KEYS: &[&str] = &[
    "params.d",
    "params.s",
    "params.m",
    "params.eps",
    "grid.n",
    "grid.r_max",
    "extremal.tol_j",
    "extremal.tol_res",
    "extremal.max_iter",
    "extremal.damping",
    "extremal.init",
    "sim.t_end",
    "sim.t_end_factor",
    "sim.cfl",
    "sim.dt_min",
    "sim.blowup_factor",
    "sim.record_every",
    "sim.eps",
    "initial.kind",
    "initial.amplitude",
    "initial.width",
    "initial.kappa",
    "dichotomy.kappas",
    "dichotomy.padding",
    "classify.tol",
    "output.dir",
    "seed",
    "selftest.scale",
    "selftest.corrupt_kernel",
];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        text.parse()
    }
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey { line, key: key.to_owned() });
            }
            if entries.insert(key.to_owned(), value.to_owned()).is_some() {
                return Err(ConfigError::Duplicate { line, key: key.to_owned() });
            }
        }
        build(&entries)
    }
}

fn value<T: FromStr>(entries: &BTreeMap<String, String>, key: &str, default: T) -> Result<T, ConfigError> {
    match entries.get(key) {
        None => Ok(default),
        Some(raw) => raw.parse().map_err(|_| ConfigError::Value { key: key.to_owned(), value: raw.clone() }),
    }
}

fn build(e: &BTreeMap<String, String>) -> Result<RunConfig, ConfigError> {
    let base = RunConfig::default();
    let params = ModelParams {
        d: value(e, "params.d", base.params.d)?,
        s: value(e, "params.s", base.params.s)?,
        m: value(e, "params.m", base.params.m)?,
        eps: value(e, "params.eps", base.params.eps)?,
    };
    let init = match e.get("extremal.init").map(String::as_str) {
        None | Some("bump") => Initialization::Bump,
        Some("gaussian") => Initialization::Gaussian,
        Some(other) => return Err(ConfigError::Value { key: "extremal.init".into(), value: other.into() }),
    };
    let extremal = ExtremalOptions {
        tol_j: value(e, "extremal.tol_j", base.extremal.tol_j)?,
        tol_res: value(e, "extremal.tol_res", base.extremal.tol_res)?,
        max_iter: value(e, "extremal.max_iter", base.extremal.max_iter)?,
        damping: value(e, "extremal.damping", base.extremal.damping)?,
        init,
    };
    let sim_eps = value(e, "sim.eps", params.eps)?;
    if sim_eps != params.eps {
        return Err(ConfigError::Invalid("sim.eps must equal params.eps".into()));
    }
    let sim = SimConfig {
        t_end: value(e, "sim.t_end", base.sim.t_end)?,
        cfl: value(e, "sim.cfl", base.sim.cfl)?,
        dt_min: value(e, "sim.dt_min", base.sim.dt_min)?,
        blowup_factor: value(e, "sim.blowup_factor", base.sim.blowup_factor)?,
        record_every: value(e, "sim.record_every", base.sim.record_every)?,
        eps: params.eps,
    };
    sim.validate().map_err(|err| ConfigError::Invalid(err.to_string()))?;
    let t_end_factor = value(e, "sim.t_end_factor", base.t_end_factor)?;
    if !(t_end_factor > 0.0 && t_end_factor.is_finite()) {
        return Err(ConfigError::Invalid("sim.t_end_factor must be positive".into()));
    }

    let amplitude = value(e, "initial.amplitude", 1.0)?;
    let width = value(e, "initial.width", 1.0)?;
    let initial = match e.get("initial.kind").map(String::as_str) {
        None | Some("gaussian") => InitialData::Gaussian { amplitude, width },
        Some("bump") => InitialData::Bump { amplitude, width },
        Some("threshold") => InitialData::Threshold { kappa: value(e, "initial.kappa", 1.0)? },
        Some(other) => return Err(ConfigError::Value { key: "initial.kind".into(), value: other.into() }),
    };
    if !(amplitude > 0.0 && width > 0.0) {
        return Err(ConfigError::Invalid("initial.amplitude and initial.width must be positive".into()));
    }

    let kappas = match e.get("dichotomy.kappas") {
        None => base.kappas,
        Some(raw) => raw
            .split(',')
            .map(|k| k.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| ConfigError::Value { key: "dichotomy.kappas".into(), value: raw.clone() })?,
    };
    if kappas.is_empty() || kappas.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
        return Err(ConfigError::Invalid("dichotomy.kappas must be positive".into()));
    }
    let padding = value(e, "dichotomy.padding", base.padding)?;
    if !(padding >= 1.0 && padding.is_finite()) {
        return Err(ConfigError::Invalid("dichotomy.padding must be at least 1".into()));
    }

    let n = value(e, "grid.n", base.n)?;
    let r_max = value(e, "grid.r_max", base.r_max)?;
    if n < 2 || !(r_max > 0.0 && r_max.is_finite()) {
        return Err(ConfigError::Invalid("grid needs n ≥ 2 and r_max > 0".into()));
    }
    let classify_tol = value(e, "classify.tol", base.classify_tol)?;
    if !(classify_tol >= 0.0) {
        return Err(ConfigError::Invalid("classify.tol must be nonnegative".into()));
    }
    let selftest_scale = match e.get("selftest.scale").map(String::as_str) {
        None | Some("quick") => SelftestScale::Quick,
        Some("full") => SelftestScale::Full,
        Some(other) => return Err(ConfigError::Value { key: "selftest.scale".into(), value: other.into() }),
    };
    let corrupt_kernel = match e.get("selftest.corrupt_kernel") {
        None => None,
        Some(_) => Some(value(e, "selftest.corrupt_kernel", 1.0)?),
    };

    Ok(RunConfig {
        params,
        n,
        r_max,
        extremal,
        sim,
        t_end_given: e.contains_key("sim.t_end"),
        t_end_factor,
        initial,
        kappas,
        padding,
        classify_tol,
        out_dir: e.get("output.dir").map_or(base.out_dir, PathBuf::from),
        seed: value(e, "seed", base.seed)?,
        selftest_scale,
        corrupt_kernel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c: RunConfig = "".parse().unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn dotted_keys_comments_and_spacing() {
        let text = "# reference run\nparams.s = 1.1\n\n  params.m=1.2  \ngrid.n = 512\ndichotomy.kappas = 0.5, 1.5\ninitial.kind = threshold\ninitial.kappa = 0.9\nsim.t_end = 3\n";
        let c: RunConfig = text.parse().unwrap();
        assert_eq!(c.n, 512);
        assert_eq!(c.kappas, vec![0.5, 1.5]);
        assert_eq!(c.initial, InitialData::Threshold { kappa: 0.9 });
        assert!(c.t_end_given);
        assert_eq!(c.sim.t_end, 3.0);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(matches!("params.s".parse::<RunConfig>(), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!("x\n= 3".parse::<RunConfig>(), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!("params.q = 1".parse::<RunConfig>(), Err(ConfigError::UnknownKey { .. })));
        assert!(matches!("seed = 1\nseed = 2".parse::<RunConfig>(), Err(ConfigError::Duplicate { line: 2, .. })));
        assert!(matches!("params.s = one".parse::<RunConfig>(), Err(ConfigError::Value { .. })));
        assert!(matches!("sim.cfl = 2".parse::<RunConfig>(), Err(ConfigError::Invalid(_))));
        assert!(matches!("sim.eps = 0.1".parse::<RunConfig>(), Err(ConfigError::Invalid(_))));
        assert!(matches!("extremal.init = ring".parse::<RunConfig>(), Err(ConfigError::Value { .. })));
    }

    #[test]
    fn regime_is_not_checked_at_parse_time() {
        let c: RunConfig = "params.s = 1.0".parse().unwrap();
        assert!(c.params.validate().is_err());
    }
}
