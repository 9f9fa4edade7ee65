//! Experiment configuration.
//!
//! Settings come from a `key = value` file (`#` starts a comment), then from
//! `IRT_<KEY>` environment variables, then from explicit overrides, each layer
//! replacing the one before. Unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autocorr::A3Method;
use crate::basis::Selection;
use crate::binning::{AngleConvention, BinningParams};
use crate::error::{Error, Result};
use crate::forward::default_quadrature;
use crate::recover::{Optimizer, RecoveryConfig};

pub const ENV_PREFIX: &str = "IRT_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    /// Number of eigenfunctions; ignored when `bandlimit` is set.
    pub basis_count: usize,
    pub bandlimit: Option<f64>,
    pub m: usize,
    /// Number of copies; when unset it is derived from `gamma`.
    pub p: Option<usize>,
    pub gamma: f64,
    pub sigma: f64,
    pub seed: u64,
    pub b1: f64,
    pub b2: f64,
    pub one_per_bin: bool,
    pub include_degenerate: bool,
    pub angle: AngleConvention,
    /// Quadrature angles; 0 picks the default for the basis.
    pub quadrature: usize,
    pub a3_method: A3Method,
    pub restarts: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub init_scale: f64,
    pub optimizer: Optimizer,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub output: PathBuf,
    pub label: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let b = BinningParams::default();
        let r = RecoveryConfig::default();
        ExperimentConfig {
            n: 8,
            basis_count: 100,
            bandlimit: None,
            m: 1024,
            p: None,
            gamma: 0.002,
            sigma: 0.0,
            seed: 0,
            b1: b.b1,
            b2: b.b2,
            one_per_bin: b.one_per_bin,
            include_degenerate: b.include_degenerate,
            angle: b.angle,
            quadrature: 0,
            a3_method: A3Method::default(),
            restarts: r.restarts,
            max_iterations: r.max_iterations,
            gradient_tolerance: r.gradient_tolerance,
            init_scale: r.init_scale,
            optimizer: r.optimizer,
            threads: 0,
            output: PathBuf::from("."),
            label: "run".into(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "n",
    "basis_count",
    "bandlimit",
    "m",
    "p",
    "gamma",
    "sigma",
    "seed",
    "b1",
    "b2",
    "one_per_bin",
    "include_degenerate",
    "angle",
    "quadrature",
    "a3_method",
    "restarts",
    "max_iterations",
    "gradient_tolerance",
    "init_scale",
    "optimizer",
    "threads",
    "output",
    "label",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} = {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key} expects a boolean, got {value:?}"
        ))),
    }
}

fn parse_optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value.is_empty() || value.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl ExperimentConfig {
    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "n" => self.n = parse(key, value)?,
            "basis_count" => self.basis_count = parse(key, value)?,
            "bandlimit" => self.bandlimit = parse_optional(key, value)?,
            "m" => self.m = parse(key, value)?,
            "p" => self.p = parse_optional(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "b1" => self.b1 = parse(key, value)?,
            "b2" => self.b2 = parse(key, value)?,
            "one_per_bin" => self.one_per_bin = parse_bool(key, value)?,
            "include_degenerate" => self.include_degenerate = parse_bool(key, value)?,
            "angle" => {
                self.angle = match value {
                    "unsigned" => AngleConvention::Unsigned,
                    "signed" => AngleConvention::Signed,
                    _ => {
                        return Err(Error::Config(format!(
                            "angle must be signed or unsigned, got {value:?}"
                        )))
                    }
                }
            }
            "quadrature" => self.quadrature = parse(key, value)?,
            "a3_method" => {
                self.a3_method = match value {
                    "direct" => A3Method::Direct,
                    "fft" => A3Method::Fft,
                    _ => {
                        return Err(Error::Config(format!(
                            "a3_method must be direct or fft, got {value:?}"
                        )))
                    }
                }
            }
            "restarts" => self.restarts = parse(key, value)?,
            "max_iterations" => self.max_iterations = parse(key, value)?,
            "gradient_tolerance" => self.gradient_tolerance = parse(key, value)?,
            "init_scale" => self.init_scale = parse(key, value)?,
            "optimizer" => {
                self.optimizer = match value {
                    "auto" => Optimizer::Auto,
                    "full" | "quasi-newton-full" => Optimizer::QuasiNewtonFull,
                    "limited" | "quasi-newton-limited" => Optimizer::QuasiNewtonLimited,
                    _ => {
                        return Err(Error::Config(format!(
                            "optimizer must be auto, full or limited, got {value:?}"
                        )))
                    }
                }
            }
            "threads" => self.threads = parse(key, value)?,
            "output" => self.output = PathBuf::from(value),
            "label" => self.label = value.to_string(),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Apply a `key = value` document.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key = value, got {raw:?}",
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    /// Apply every `IRT_<KEY>` variable. Variables with the prefix but no
    /// matching key are rejected.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut vars: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                k.as_ref()
                    .strip_prefix(ENV_PREFIX)
                    .map(|s| (s.to_ascii_lowercase(), v.as_ref().to_string()))
            })
            .collect();
        vars.sort();
        for (key, value) in vars {
            self.set(&key, &value).map_err(|e| {
                Error::Config(format!("{ENV_PREFIX}{}: {e}", key.to_ascii_uppercase()))
            })?;
        }
        Ok(())
    }

    /// Defaults, then `file`, then the process environment, then `overrides`.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        if let Some(path) = file {
            config.apply_text(&std::fs::read_to_string(path)?)?;
        }
        config.apply_env(std::env::vars())?;
        for (k, v) in overrides {
            config.set(k, v)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n < 2 {
            return fail(format!("n must be >= 2, got {}", self.n));
        }
        if self.bandlimit.is_none() && self.basis_count == 0 {
            return fail("basis_count must be positive".into());
        }
        if let Some(l) = self.bandlimit {
            if !(l.is_finite() && l > 0.0) {
                return fail(format!("bandlimit must be positive, got {l}"));
            }
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return fail(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return fail(format!("sigma must be non-negative, got {}", self.sigma));
        }
        if !(self.b1 > 0.0 && self.b2 > 0.0) {
            return fail("b1 and b2 must be positive".into());
        }
        self.recovery().validate()
    }

    pub fn selection(&self) -> Selection {
        match self.bandlimit {
            Some(l) => Selection::Bandlimit(l),
            None => Selection::Count(self.basis_count),
        }
    }

    pub fn binning(&self) -> BinningParams {
        BinningParams {
            b1: self.b1,
            b2: self.b2,
            one_per_bin: self.one_per_bin,
            include_degenerate: self.include_degenerate,
            angle: self.angle,
        }
    }

    pub fn recovery(&self) -> RecoveryConfig {
        RecoveryConfig {
            restarts: self.restarts,
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            init_scale: self.init_scale,
            seed: self.seed,
            optimizer: self.optimizer,
        }
    }

    pub fn copies(&self) -> usize {
        self.p
            .unwrap_or_else(|| (self.gamma * (self.m * self.m) as f64).round() as usize)
    }

    pub fn quadrature_for(&self, nu_max: u32) -> usize {
        if self.quadrature == 0 {
            default_quadrature(nu_max)
        } else {
            self.quadrature
        }
    }

    /// Every key with its current value, in `key = value` form.
    pub fn render(&self) -> String {
        let json = serde_json::to_value(self).expect("config serializes");
        let mut out = String::new();
        for key in KEYS {
            let v = &json[*key];
            let text = match v {
                serde_json::Value::Null => "none".to_string(),
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            out.push_str(&format!("{key} = {text}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layers_apply_in_order() {
        let mut c = ExperimentConfig::default();
        c.apply_text("# comment\nn = 4\nseed=3 # trailing\n\nangle = signed\n")
            .unwrap();
        assert_eq!((c.n, c.seed, c.angle), (4, 3, AngleConvention::Signed));
        c.apply_env([
            ("IRT_SEED", "9"),
            ("PATH", "/bin"),
            ("IRT_ONE_PER_BIN", "true"),
        ])
        .unwrap();
        assert_eq!(c.seed, 9);
        assert!(c.one_per_bin);
        c.set("seed", "11").unwrap();
        assert_eq!(c.seed, 11);
    }

    #[test]
    fn unknown_and_malformed_entries_fail() {
        let mut c = ExperimentConfig::default();
        assert!(c.apply_text("colour = red").is_err());
        assert!(c.apply_text("n").is_err());
        assert!(c.apply_text("n = four").is_err());
        assert!(c.apply_env([("IRT_NOPE", "1")]).is_err());
        assert!(c.set("angle", "sideways").is_err());
    }

    #[test]
    fn render_round_trips() {
        let mut c = ExperimentConfig::default();
        c.set("bandlimit", "12.5").unwrap();
        c.set("p", "40").unwrap();
        c.set("optimizer", "limited").unwrap();
        c.set("a3_method", "fft").unwrap();
        let mut back = ExperimentConfig::default();
        back.apply_text(&c.render()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn validation() {
        let mut c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        c.n = 1;
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            restarts: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            m: 100,
            gamma: 0.01,
            ..Default::default()
        };
        assert_eq!(c.copies(), 100);
    }
}
