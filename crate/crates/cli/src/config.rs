//! Run configuration and the per-command parameter sets.

use clap::ValueEnum;
use convexlab::harness::{
    EvaluatorKind, Regime, SaturationSpec, StrichartzSpec, SweepSpec, TransverseSpec, XSpan,
};
use convexlab::nls::{DomainConfig, EvolveConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    AiryCheck,
    PoissonCheck,
    GreenEval,
    CrossValidate,
    DispersionSweep,
    Saturation,
    Transverse,
    AirySums,
    StrichartzProbe,
    NlsRun,
    GrowthReport,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::AiryCheck => "airy-check",
            Command::PoissonCheck => "poisson-check",
            Command::GreenEval => "green-eval",
            Command::CrossValidate => "cross-validate",
            Command::DispersionSweep => "dispersion-sweep",
            Command::Saturation => "saturation",
            Command::Transverse => "transverse",
            Command::AirySums => "airy-sums",
            Command::StrichartzProbe => "strichartz-probe",
            Command::NlsRun => "nls-run",
            Command::GrowthReport => "growth-report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    /// Command parameters; absent means the command's defaults.
    #[serde(default)]
    pub params: Option<serde_json::Value>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
}

/// A config problem, with the path of the offending field when there is one.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn parse_run_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError(format!("config field `{}`: {}", e.path(), e.inner())))
}

/// Parameters of one command: the defaults when absent, otherwise parsed strictly.
pub fn parse_params<P: DeserializeOwned + Serialize>(value: &Option<serde_json::Value>, default: impl FnOnce() -> Option<P>) -> Result<P, ConfigError> {
    match value {
        None => default().ok_or_else(|| ConfigError("config field `params`: this command has no defaults".into())),
        Some(v) => serde_path_to_error::deserialize(v.clone()).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "params".to_string() } else { format!("params.{path}") };
            ConfigError(format!("config field `{path}`: {}", e.inner()))
        }),
    }
}

fn d<T: Default>() -> T {
    T::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AiryCheckParams {
    #[serde(default = "k50")]
    pub k_max: usize,
}

fn k50() -> usize {
    50
}

impl Default for AiryCheckParams {
    fn default() -> Self {
        AiryCheckParams { k_max: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonParams {
    pub n_max: Vec<usize>,
    pub k_max: usize,
    /// Bump centre; the first Airy zero when absent.
    #[serde(default)]
    pub center: Option<f64>,
    pub half_width: f64,
    pub tolerance: f64,
}

impl Default for PoissonParams {
    fn default() -> Self {
        PoissonParams { n_max: vec![25, 50, 100, 200], k_max: 10, center: None, half_width: 0.25, tolerance: 1e-6 }
    }
}

/// `n` evenly spaced points on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenParams {
    #[serde(default = "spectral")]
    pub evaluator: EvaluatorKind,
    pub h: f64,
    pub a: f64,
    pub eps0: f64,
    pub t: f64,
    pub x: Axis,
    pub y: Axis,
    #[serde(default = "tol6")]
    pub tol: f64,
    /// Dyadic block `gamma`; the full Green function when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Largest accepted gap between evaluators (cross-validation only).
    #[serde(default = "two_percent")]
    pub max_gap: f64,
}

fn spectral() -> EvaluatorKind {
    EvaluatorKind::Spectral
}

fn tol6() -> f64 {
    1e-6
}

fn two_percent() -> f64 {
    0.02
}

impl Default for GreenParams {
    fn default() -> Self {
        GreenParams {
            evaluator: EvaluatorKind::Spectral,
            h: 0.05,
            a: 0.25,
            eps0: 0.3,
            t: 0.6,
            x: Axis { lo: 0.05, hi: 0.45, n: 5 },
            y: Axis { lo: -1.6, hi: -0.6, n: 5 },
            tol: 1e-6,
            gamma: None,
            max_gap: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepClaim {
    /// `sup / [h^-2 (h/t)^{3/4}]` bounded.
    Upper,
    /// Reflection-free packet decays like `t^-1`.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionParams {
    pub claim: SweepClaim,
    pub sweep: SweepSpec,
}

impl Default for DispersionParams {
    fn default() -> Self {
        DispersionParams {
            claim: SweepClaim::Upper,
            sweep: SweepSpec {
                evaluator: EvaluatorKind::Spectral,
                regime: Regime::Tangential,
                h: 0.05,
                a: 0.25,
                eps0: 0.3,
                t_list: (0..9).map(|i| 0.5 + 0.05 * i as f64).collect(),
                x_span: XSpan::Full,
                nx: 9,
                ny: 141,
                tol: 1e-6,
                max_nodes: None,
                x_max: None,
            },
        }
    }
}

pub fn default_saturation() -> SaturationSpec {
    SaturationSpec {
        sweep: SweepSpec {
            evaluator: EvaluatorKind::Spectral,
            regime: Regime::Tangential,
            h: 0.02,
            a: 0.3,
            eps0: 0.45,
            t_list: (0..9).map(|i| 0.55 + 0.05 * i as f64).collect(),
            x_span: XSpan::Half,
            nx: 13,
            ny: 141,
            tol: 1e-6,
            max_nodes: None,
            x_max: None,
        },
        a_list: vec![0.15, 0.2, 0.3],
        a_fit_t: 0.55,
        min_decades: 0.2,
    }
}

pub fn default_transverse() -> TransverseSpec {
    TransverseSpec {
        h: 0.01,
        a: 0.02,
        eps0: 0.4,
        t_list: (0..9).map(|i| 0.1 * 1.3f64.powi(i)).chain([1.0]).collect(),
        nx: 5,
        ny: 141,
        tol: 1e-6,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AirySumParams {
    pub ls: Vec<usize>,
    pub b_step: f64,
}

impl Default for AirySumParams {
    fn default() -> Self {
        AirySumParams { ls: vec![16, 32, 64, 128, 256, 512, 1024], b_step: 0.02 }
    }
}

pub fn default_strichartz() -> StrichartzSpec {
    StrichartzSpec::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialData {
    /// First Airy mode on the rows `+-m0`.
    Gallery { m0: i64, amplitude: f64 },
    /// Seeded random coefficients on modes `k <= k_hi`.
    Random { k_hi: usize, amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NlsParams {
    #[serde(default = "d")]
    pub domain: DomainConfig,
    #[serde(default = "d")]
    pub evolve: EvolveConfig,
    pub data: InitialData,
    #[serde(default = "yes")]
    pub checkpoint: bool,
}

fn yes() -> bool {
    true
}

impl Default for NlsParams {
    fn default() -> Self {
        NlsParams { domain: d(), evolve: d(), data: InitialData::Gallery { m0: 1, amplitude: 0.3 }, checkpoint: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthParams {
    /// Series CSV written by `nls-run`.
    pub series: PathBuf,
    #[serde(default = "two")]
    pub order: u32,
}

fn two() -> u32 {
    2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_field_names_its_path() {
        let v = serde_json::json!({ "evaluator": "spectral", "a": 0.25, "eps0": 0.3, "t": 0.6, "x": {"lo": 0, "hi": 1, "n": 2}, "y": {"lo": 0, "hi": 1, "n": 2} });
        let e = parse_params::<GreenParams>(&Some(v), || None).unwrap_err();
        assert!(e.0.contains("params") && e.0.contains("missing field `h`"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = parse_run_config(r#"{"command": "airy-check", "colour": 1}"#).unwrap_err();
        assert!(e.0.contains("colour"), "{e}");
        let v = serde_json::json!({ "k_max": 10, "extra": true });
        assert!(parse_params::<AiryCheckParams>(&Some(v), || None).is_err());
    }

    #[test]
    fn nested_path_is_reported() {
        let v = serde_json::json!({ "claim": "upper", "sweep": { "evaluator": "spectral" } });
        let e = parse_params::<DispersionParams>(&Some(v), || None).unwrap_err();
        assert!(e.0.contains("params.sweep"), "{e}");
    }

    #[test]
    fn defaults_round_trip() {
        let p = NlsParams::default();
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(parse_params::<NlsParams>(&Some(v), || None).unwrap(), p);
        assert_eq!(Command::StrichartzProbe.name(), "strichartz-probe");
    }
}
