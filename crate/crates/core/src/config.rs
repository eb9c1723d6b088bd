//! Experiment description files.
//!
//! One TOML file describes one experiment:
//!
//! ```toml
//! [network]
//! K = [25, 50]          # integer or list; lists of K and M are zipped
//! M = [25, 50]          # defaults to Q * K when a [tdma] table is present
//! P_max = 1.0
//! sigma_N_sq = 1.0
//! fading = "ideal"      # or "rayleigh_inverted"
//! phase_mode = "continuous"   # or "discrete:L" with even L
//! seed = 1
//!
//! [sensing]
//! s_min = -55.0
//! s_max = 130.0
//!
//! [readings]
//! lo = 1.0
//! hi = 30.0
//! distribution = "uniform_iid"
//!
//! [function]
//! kind = "arithmetic_mean"  # geometric_mean, weighted_sum, node_count, q_norm
//!
//! [tdma]
//! Q = 10
//!
//! [experiment]
//! scheme = "comac"          # comac_unbiased_ref, tdma
//! n_trials = 10000
//! ```
//!
//! Unknown keys are rejected and every error names the offending key path.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::experiments::{self, ExperimentSpec, Scheme};
use crate::model::{
    FadingMode, FunctionKind, NetworkConfig, NomographicFunction, PhaseMode, ReadingDistribution,
    ReadingRange, SensingRange,
};
use crate::tdma_baseline::TdmaConfig;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(u64),
    Many(Vec<u64>),
}

impl OneOrMany {
    fn values(&self) -> Vec<u64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(rename = "K")]
    pub k: OneOrMany,
    #[serde(rename = "M")]
    pub m: Option<OneOrMany>,
    #[serde(rename = "P_max", default = "one")]
    pub p_max: f64,
    #[serde(rename = "sigma_N_sq", default = "one")]
    pub sigma_n_sq: f64,
    #[serde(default = "default_fading")]
    pub fading: String,
    #[serde(default = "default_phase")]
    pub phase_mode: String,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingSection {
    pub s_min: f64,
    pub s_max: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadingsSection {
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "default_distribution")]
    pub distribution: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSection {
    pub kind: String,
    pub a: Option<f64>,
    pub s_prime: Option<f64>,
    pub q: Option<f64>,
    pub weights: Option<Vec<f64>>,
    pub offset: Option<f64>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdmaSection {
    #[serde(rename = "Q")]
    pub q: u32,
    #[serde(rename = "T", default = "one")]
    pub t: f64,
    #[serde(rename = "R", default)]
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Stem of the output file names; defaults to the config file stem.
    pub name: Option<String>,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    pub epsilon_grid: Option<Vec<f64>>,
    pub snr_db_list: Option<Vec<f64>>,
    #[serde(default = "default_analytic_samples")]
    pub analytic_samples: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            name: None,
            scheme: default_scheme(),
            n_trials: default_trials(),
            epsilon_grid: None,
            snr_db_list: None,
            analytic_samples: default_analytic_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub network: NetworkSection,
    pub sensing: SensingSection,
    pub readings: ReadingsSection,
    pub function: FunctionSection,
    pub tdma: Option<TdmaSection>,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

fn one() -> f64 {
    1.0
}
fn default_fading() -> String {
    "ideal".into()
}
fn default_phase() -> String {
    "continuous".into()
}
fn default_distribution() -> String {
    "uniform_iid".into()
}
fn default_scheme() -> String {
    "comac".into()
}
fn default_trials() -> usize {
    experiments::DEFAULT_TRIALS
}
fn default_analytic_samples() -> usize {
    crate::analysis::DEFAULT_ANALYTIC_SAMPLES
}

/// Parse `value` as a TOML value, falling back to a bare string.
fn parse_override_value(value: &str) -> toml::Value {
    let doc = format!("v = {value}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(value.into())),
        Err(_) => toml::Value::String(value.to_string()),
    }
}

/// Apply `key.path=value` overrides to a parsed table.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::config(item.clone(), "override must look like key=value"))?;
        let key = key.trim();
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::config(key, "malformed key"));
        }
        let mut node = &mut *table;
        for p in &parts[..parts.len() - 1] {
            let entry = node
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = entry
                .as_table_mut()
                .ok_or_else(|| Error::config(key, format!("`{p}` is not a table")))?;
        }
        node.insert(parts[parts.len() - 1].to_string(), parse_override_value(value.trim()));
    }
    Ok(())
}

fn key_path(path: &serde_path_to_error::Path) -> String {
    let s = path.to_string();
    if s == "." { String::new() } else { s }
}

/// Parse config text with overrides into the raw schema.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ConfigFile> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::config("<file>", e.message().to_string()))?;
    apply_overrides(&mut table, overrides)?;
    serde_path_to_error::deserialize(table).map_err(|e| {
        let key = key_path(e.path());
        Error::config(if key.is_empty() { "<root>".into() } else { key }, e.inner().to_string())
    })
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, overrides)
}

fn parse_fading(s: &str) -> Result<FadingMode> {
    match s {
        "ideal" => Ok(FadingMode::Ideal),
        "rayleigh_inverted" | "rayleigh" => Ok(FadingMode::RayleighInverted),
        other => Err(Error::config(
            "network.fading",
            format!("expected `ideal` or `rayleigh_inverted`, got `{other}`"),
        )),
    }
}

fn parse_phase(s: &str) -> Result<PhaseMode> {
    if s == "continuous" {
        return Ok(PhaseMode::Continuous);
    }
    let bad = || {
        Error::config(
            "network.phase_mode",
            format!("expected `continuous` or `discrete:L`, got `{s}`"),
        )
    };
    let l = s
        .strip_prefix("discrete:")
        .ok_or_else(bad)?
        .trim()
        .parse::<u32>()
        .map_err(|_| bad())?;
    let mode = PhaseMode::Discrete(l);
    mode.validate()?;
    Ok(mode)
}

fn parse_scheme(s: &str) -> Result<Scheme> {
    match s {
        "comac" => Ok(Scheme::Comac),
        "comac_unbiased_ref" => Ok(Scheme::ComacUnbiasedRef),
        "tdma" => Ok(Scheme::Tdma),
        other => Err(Error::config(
            "experiment.scheme",
            format!("expected `comac`, `comac_unbiased_ref` or `tdma`, got `{other}`"),
        )),
    }
}

fn require<T: Copy>(v: Option<T>, key: &str, kind: &str) -> Result<T> {
    v.ok_or_else(|| Error::config(key, format!("required for `{kind}`")))
}

impl FunctionSection {
    pub fn kind(&self) -> Result<FunctionKind> {
        let kind = self.kind.as_str();
        Ok(match kind {
            "arithmetic_mean" => FunctionKind::ArithmeticMean,
            "geometric_mean" => FunctionKind::GeometricMean {
                base: self.a.unwrap_or(2.0),
                floor: require(self.s_prime, "function.s_prime", kind)?,
            },
            "weighted_sum" => FunctionKind::WeightedSum {
                weights: self
                    .weights
                    .clone()
                    .ok_or_else(|| Error::config("function.weights", "required for `weighted_sum`"))?,
                offset: self.offset.unwrap_or(0.0),
            },
            "node_count" => FunctionKind::NodeCount {
                constant: self.c.unwrap_or(1.0),
            },
            "q_norm" => FunctionKind::QNorm {
                exponent: require(self.q, "function.q", kind)?,
            },
            other => {
                return Err(Error::config(
                    "function.kind",
                    format!("unknown function kind `{other}`"),
                ))
            }
        })
    }
}

/// Everything a subcommand needs, resolved and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub name: String,
    /// One spec per `(K, M)` point, for the configured scheme.
    pub specs: Vec<ExperimentSpec>,
    pub tdma: Option<TdmaConfig>,
    pub snr_db_list: Vec<f64>,
}

impl ConfigFile {
    /// `(K, M)` pairs, zipping lists and broadcasting scalars.
    pub fn shapes(&self) -> Result<Vec<(usize, usize)>> {
        let ks = self.network.k.values();
        let ms = match &self.network.m {
            Some(m) => m.values(),
            None => {
                let t = self.tdma.as_ref().ok_or_else(|| {
                    Error::config("network.M", "required unless a [tdma] table fixes M = Q K")
                })?;
                ks.iter().map(|&k| k * t.q as u64).collect()
            }
        };
        if ks.is_empty() || ms.is_empty() {
            return Err(Error::config("network.K", "empty node-count list"));
        }
        let n = ks.len().max(ms.len());
        let pick = |v: &[u64], i: usize, key: &str| -> Result<u64> {
            match v.len() {
                1 => Ok(v[0]),
                l if l == n => Ok(v[i]),
                _ => Err(Error::config(key, "K and M lists must have equal lengths")),
            }
        };
        (0..n)
            .map(|i| Ok((pick(&ks, i, "network.K")? as usize, pick(&ms, i, "network.M")? as usize)))
            .collect()
    }

    pub fn resolve(&self, default_name: &str) -> Result<ResolvedConfig> {
        let sensing = SensingRange::new(self.sensing.s_min, self.sensing.s_max)
            .map_err(|e| rekey(e, "sensing"))?;
        let readings = ReadingRange::new(self.readings.lo, self.readings.hi, &sensing)
            .map_err(|e| rekey(e, "readings"))?;
        if self.readings.distribution != "uniform_iid" {
            return Err(Error::config(
                "readings.distribution",
                format!("only `uniform_iid` is supported, got `{}`", self.readings.distribution),
            ));
        }
        let fading = parse_fading(&self.network.fading)?;
        let phase = parse_phase(&self.network.phase_mode)?;
        let scheme = parse_scheme(&self.experiment.scheme)?;
        let kind = self.function.kind()?;
        let tdma = match &self.tdma {
            Some(t) => {
                let c = TdmaConfig {
                    q: t.q,
                    symbol_duration: t.t,
                    overhead_r: t.r,
                };
                c.validate()?;
                Some(c)
            }
            None => None,
        };
        let grid = self
            .experiment
            .epsilon_grid
            .clone()
            .unwrap_or_else(experiments::default_epsilon_grid);
        let mut specs = Vec::new();
        for (k, m) in self.shapes()? {
            let network = NetworkConfig::new(k, m, self.network.p_max, self.network.sigma_n_sq, sensing, readings)?
                .with_fading(fading)
                .with_phase_mode(phase)
                .with_seed(self.network.seed);
            let function = NomographicFunction::new(kind.clone(), &network)?;
            let mut spec = ExperimentSpec::new(network, function, scheme);
            spec.epsilon_grid = grid.clone();
            spec.n_trials = self.experiment.n_trials;
            spec.tdma = tdma;
            spec.analytic_samples = self.experiment.analytic_samples;
            spec.reading_distribution = ReadingDistribution::UniformIid;
            spec.validate()?;
            specs.push(spec);
        }
        Ok(ResolvedConfig {
            name: self.experiment.name.clone().unwrap_or_else(|| default_name.to_string()),
            specs,
            tdma,
            snr_db_list: self.experiment.snr_db_list.clone().unwrap_or_default(),
        })
    }
}

/// Give a section-level error a more precise key.
fn rekey(e: Error, key: &str) -> Error {
    match e {
        Error::Config { message, .. } => Error::config(key, message),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[network]
K = [25, 250]
M = [25, 250]
P_max = 1.0
sigma_N_sq = 1.0
seed = 7

[sensing]
s_min = -55.0
s_max = 130.0

[readings]
lo = 1.0
hi = 30.0

[function]
kind = "arithmetic_mean"

[experiment]
n_trials = 100
"#;

    fn resolve(text: &str, overrides: &[&str]) -> Result<ResolvedConfig> {
        let ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        parse_config(text, &ov)?.resolve("base")
    }

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("not a config error: {other}"),
        }
    }

    #[test]
    fn zipped_shapes() {
        let r = resolve(BASE, &[]).unwrap();
        let shapes: Vec<_> = r.specs.iter().map(|s| (s.network.nodes, s.network.seq_len)).collect();
        assert_eq!(shapes, vec![(25, 25), (250, 250)]);
        assert_eq!(r.specs[0].epsilon_grid.len(), 40);
        assert_eq!(r.specs[0].network.seed, 7);
    }

    #[test]
    fn overrides_apply() {
        let r = resolve(BASE, &["network.K=3", "network.M=4", "experiment.epsilon_grid=[0.1, 0.2]", "network.fading=rayleigh_inverted"]).unwrap();
        assert_eq!(r.specs.len(), 1);
        assert_eq!(r.specs[0].network.nodes, 3);
        assert_eq!(r.specs[0].epsilon_grid, vec![0.1, 0.2]);
        assert_eq!(r.specs[0].network.fading, FadingMode::RayleighInverted);
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let e = resolve(BASE, &["network.sigma=1"]).unwrap_err();
        assert_eq!(key_of(e), "network.sigma");
        let e = resolve(BASE, &["bogus.x=1"]).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
    }

    #[test]
    fn empty_grid_names_epsilon_grid() {
        let e = resolve(BASE, &["experiment.epsilon_grid=[]"]).unwrap_err();
        assert_eq!(key_of(e), "experiment.epsilon_grid");
    }

    #[test]
    fn wrong_types_name_their_path() {
        let e = resolve(BASE, &["experiment.n_trials=\"many\""]).unwrap_err();
        assert_eq!(key_of(e), "experiment.n_trials");
        let e = resolve(BASE, &["network.phase_mode=discrete:3"]).unwrap_err();
        assert_eq!(key_of(e), "network.phase_mode");
    }

    #[test]
    fn geometric_needs_floor_and_existence() {
        let e = resolve(BASE, &["function.kind=geometric_mean"]).unwrap_err();
        assert_eq!(key_of(e), "function.s_prime");
        let r = resolve(BASE, &["function.kind=geometric_mean", "function.s_prime=0.5"]).unwrap();
        assert_eq!(r.specs[0].function.error_range(), 129.5);
        let e = resolve(BASE, &["function.kind=geometric_mean", "function.s_prime=0.5", "network.sigma_N_sq=1e9"]).unwrap_err();
        assert!(matches!(e, Error::LambdaExistence { .. }));
        assert!(e.is_configuration());
    }

    #[test]
    fn m_defaults_to_fair_length() {
        let text = BASE.replace("M = [25, 250]\n", "") + "\n[tdma]\nQ = 10\n";
        let r = resolve(&text, &[]).unwrap();
        assert_eq!(r.specs[1].network.seq_len, 2500);
        let e = resolve(&BASE.replace("M = [25, 250]\n", ""), &[]).unwrap_err();
        assert_eq!(key_of(e), "network.M");
    }
}
