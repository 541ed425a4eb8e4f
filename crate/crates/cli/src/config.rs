//! Experiment configuration files.

use std::path::PathBuf;

use serde::Deserialize;
use serde_json::Value;

use ommap_core::bip::{ExperimentOptions, FistaOptions, PerturbationKind, ProblemSpec};
use ommap_core::gamma::LiminfOptions;
use ommap_core::measures::{geometric_radii, BallMassOptions, MeasureSpec};
use ommap_core::om::ModeOptions;
use ommap_core::spaces::WeightedSeqSpace;

/// A parsed config: the common header plus the kind-specific body.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub experiment: Experiment,
    /// The file as read, echoed into results.json.
    pub raw: Value,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    BallRatio {
        measure: MeasureSpec,
        x1: Vec<f64>,
        x2: Vec<f64>,
        radii: Radii,
        #[serde(default)]
        norm: Option<NormSpec>,
        #[serde(default)]
        options: BallMassOptions,
        /// Compare the limit against the OM difference when the measure has one.
        #[serde(default)]
        om_check: bool,
        #[serde(default)]
        abs_tol: f64,
    },
    ClassifyMode {
        measure: MeasureSpec,
        candidate: Vec<f64>,
        competitors: Vec<Vec<f64>>,
        radii: Radii,
        #[serde(default)]
        norm: Option<NormSpec>,
        #[serde(default)]
        options: BallMassOptions,
        #[serde(default)]
        mode: ModeOptions,
    },
    MProperty {
        measure: MeasureSpec,
        outside_points: Vec<Vec<f64>>,
        radii: Radii,
        /// Anchor of the OM functional for one-dimensional densities.
        #[serde(default)]
        anchor: Option<Vec<f64>>,
        #[serde(default)]
        norm: Option<NormSpec>,
        #[serde(default)]
        options: BallMassOptions,
    },
    GammaCheck {
        family: FamilySpec,
        points: Vec<Vec<f64>>,
        #[serde(default = "default_indices")]
        recovery_indices: Vec<usize>,
        #[serde(default = "default_levels")]
        levels: Vec<f64>,
        #[serde(default = "default_members")]
        members: usize,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default)]
        liminf: LiminfOptions,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    MapSolve {
        problem: ProblemSpec,
        #[serde(default)]
        fista: FistaOptions,
    },
    Perturbation {
        problem: ProblemSpec,
        perturbation: PerturbationKind,
        n: Vec<usize>,
        #[serde(default)]
        options: ExperimentOptions,
    },
    SmallNoise {
        problem: ProblemSpec,
        n: Vec<usize>,
        #[serde(default)]
        fista: FistaOptions,
    },
    Counterexample {
        example: Example,
    },
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::BallRatio { .. } => "ball_ratio",
            Experiment::ClassifyMode { .. } => "classify_mode",
            Experiment::MProperty { .. } => "m_property",
            Experiment::GammaCheck { .. } => "gamma_check",
            Experiment::MapSolve { .. } => "map_solve",
            Experiment::Perturbation { .. } => "perturbation",
            Experiment::SmallNoise { .. } => "small_noise",
            Experiment::Counterexample { .. } => "counterexample",
        }
    }
}

fn default_indices() -> Vec<usize> {
    (1..=12).map(|j| 1 << j).collect()
}

fn default_levels() -> Vec<f64> {
    vec![0.5, 2.0]
}

fn default_members() -> usize {
    20
}

fn default_samples() -> usize {
    2000
}

fn default_tol() -> f64 {
    1e-9
}

/// Either an explicit list or a halving schedule `r0·2^{-j}`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Radii {
    List(Vec<f64>),
    Geometric { r0: f64, levels: usize },
}

impl Radii {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Radii::List(v) => v.clone(),
            Radii::Geometric { r0, levels } => geometric_radii(*r0, *levels),
        }
    }
}

/// `p` is a number or `"inf"`; weights default to ones.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSpec {
    pub p: Exponent,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Exponent {
    Finite(f64),
    Named(String),
}

impl NormSpec {
    pub fn build(&self, dim: usize) -> Result<WeightedSeqSpace, String> {
        let p = match &self.p {
            Exponent::Finite(p) => *p,
            Exponent::Named(s) if s == "inf" => f64::INFINITY,
            Exponent::Named(s) => return Err(format!("norm.p: expected a number or \"inf\", got {s:?}")),
        };
        let w = self.weights.clone().unwrap_or_else(|| vec![1.0; dim]);
        WeightedSeqSpace::new(p, w).map_err(|e| format!("norm: {e}"))
    }
}

/// Families for `gamma_check`.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// `C_n = C + D/n`, `m_n = m + v/n`.
    Gaussian {
        limit: MeasureSpec,
        #[serde(default)]
        covariance_perturbation: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        mean_perturbation: Option<Vec<f64>>,
    },
    /// `s_n = s + amplitude·σ_n/n`, `σ_n = (−1)ⁿ` when alternating.
    Besov {
        limit: MeasureSpec,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "yes")]
        alternating: bool,
    },
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Example {
    LiminfOnly {
        #[serde(default = "default_depth")]
        depth: usize,
        #[serde(default = "default_n_max")]
        n_max: usize,
    },
    OmNotStrong {
        #[serde(default = "default_levels_b3")]
        levels: usize,
        #[serde(default = "default_ks")]
        ks: Vec<usize>,
        #[serde(default = "default_dips")]
        dips: Vec<usize>,
    },
    Crosses {},
    Spike {
        #[serde(default = "default_spike_n")]
        n: Vec<u64>,
    },
    Mixture {
        #[serde(default = "default_ts")]
        t: Vec<f64>,
        #[serde(default = "default_r")]
        r: f64,
    },
    KlGaussians {
        #[serde(default = "default_sigmas")]
        sigma: Vec<f64>,
    },
}

fn default_depth() -> usize {
    40
}

fn default_n_max() -> usize {
    30
}

fn default_levels_b3() -> usize {
    30
}

fn default_ks() -> Vec<usize> {
    vec![2, 3, 5]
}

fn default_dips() -> Vec<usize> {
    (2..=10).collect()
}

fn default_spike_n() -> Vec<u64> {
    vec![10, 20, 50, 100]
}

fn default_ts() -> Vec<f64> {
    vec![0.01, 0.02, 0.05, 0.1]
}

fn default_r() -> f64 {
    5.0
}

fn default_sigmas() -> Vec<f64> {
    vec![0.1, 0.5, 2.0, 10.0]
}

/// Schema problem with a location, when one is known.
#[derive(Debug)]
pub struct SchemaError {
    pub line: Option<usize>,
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.line, self.path.is_empty()) {
            (Some(l), false) => write!(f, "line {l}, field `{}`: {}", self.path, self.message),
            (Some(l), true) => write!(f, "line {l}: {}", self.message),
            (None, false) => write!(f, "field `{}`: {}", self.path, self.message),
            (None, true) => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for SchemaError {}

/// Line of the first occurrence of `"key"` in the text.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, SchemaError> {
    let raw: Value = serde_json::from_str(text)
        .map_err(|e| SchemaError { line: Some(e.line()), path: String::new(), message: e.to_string() })?;
    let Value::Object(mut map) = raw.clone() else {
        return Err(SchemaError { line: Some(1), path: String::new(), message: "config must be a JSON object".into() });
    };
    if !map.contains_key("kind") {
        return Err(SchemaError { line: None, path: "kind".into(), message: "missing required field".into() });
    }
    let seed = match map.remove("seed") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_u64().ok_or_else(|| SchemaError {
            line: line_of_key(text, "seed"),
            path: "seed".into(),
            message: format!("expected a non-negative integer, got {v}"),
        })?),
    };
    let output = match map.remove("output") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(v) => {
            return Err(SchemaError {
                line: line_of_key(text, "output"),
                path: "output".into(),
                message: format!("expected a path string, got {v}"),
            })
        }
    };
    let experiment: Experiment = serde_path_to_error::deserialize(Value::Object(map)).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        let message = e.into_inner().to_string();
        let key = path
            .rsplit('.')
            .map(|s| s.split('[').next().unwrap_or(""))
            .find(|s| !s.is_empty())
            .map(str::to_string)
            .or_else(|| message.split('`').nth(1).map(str::to_string));
        SchemaError { line: key.and_then(|k| line_of_key(text, &k)), path, message }
    })?;
    Ok(ExperimentConfig { seed, output, experiment, raw })
}
