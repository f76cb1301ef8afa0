//! Experiment configuration, validation and provenance hashing.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::anytime::{CodeParams, TreeCode, DEFAULT_HORIZON_CAP};
use crate::erasure::{ErasureMode, ErasureModel};
use crate::graph::{GeneratorSpec, Graph};
use crate::protocols::treecode::FRAME_BITS;
use crate::protocols::Protocol;
use crate::rng::CounterRng;
use crate::spectral::{spectral_summary, SpectralSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSpec {
    /// Generator string such as `path:3`, `grid:2x3` or `er:8:0.5:3`.
    Generator(String),
    /// Path to a graph JSON file `{"n": .., "edges": [[a, b], ..]}`.
    File(PathBuf),
    Inline(Graph),
}

impl GraphSpec {
    pub fn build(&self) -> Result<Graph, String> {
        match self {
            Self::Generator(s) => s
                .parse::<GeneratorSpec>()
                .and_then(|g| g.build())
                .map_err(|e| e.to_string()),
            Self::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                Graph::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
            }
            Self::Inline(g) => Ok(g.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoKeyword {
    Auto,
}

/// Step size: `"auto"` selects ε*.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsSpec {
    Keyword(AutoKeyword),
    Value(f64),
}

impl Default for EpsSpec {
    fn default() -> Self {
        Self::Keyword(AutoKeyword::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeConfig {
    pub lambda_bits: usize,
    pub n: usize,
    pub ensemble_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_cap: Option<usize>,
}

impl CodeConfig {
    pub fn params(&self) -> CodeParams {
        CodeParams {
            lambda_bits: self.lambda_bits,
            n: self.n,
            seed: self.ensemble_seed,
        }
    }

    pub fn cap(&self) -> usize {
        self.horizon_cap.unwrap_or(DEFAULT_HORIZON_CAP)
    }
}

/// Initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum X0Spec {
    /// `scale · e_node`; the default `scale` is `N`, giving average 1.
    ScaledBasis {
        #[serde(default)]
        node: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
    },
    /// I.i.d. uniform on `[lo, hi)`.
    Uniform {
        seed: u64,
        #[serde(default)]
        lo: f64,
        #[serde(default = "one")]
        hi: f64,
    },
    Explicit { values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

impl Default for X0Spec {
    fn default() -> Self {
        Self::ScaledBasis { node: 0, scale: None }
    }
}

const X0_STREAM: u64 = 0x7830;

impl X0Spec {
    pub fn build(&self, n: usize) -> Result<Vec<f64>, String> {
        match self {
            Self::ScaledBasis { node, scale } => {
                if *node >= n {
                    return Err(format!("node {node} out of range for {n} nodes"));
                }
                let mut x = vec![0.0; n];
                x[*node] = scale.unwrap_or(n as f64);
                Ok(x)
            }
            Self::Uniform { seed, lo, hi } => {
                if lo >= hi || lo.is_nan() || hi.is_nan() {
                    return Err(format!("empty interval [{lo}, {hi})"));
                }
                let mut rng = CounterRng::new(*seed, X0_STREAM);
                Ok((0..n).map(|_| lo + (hi - lo) * rng.next_f64()).collect())
            }
            Self::Explicit { values } => {
                if values.len() != n {
                    return Err(format!("expected {n} values, got {}", values.len()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err("values must be finite".into());
                }
                Ok(values.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Output directory; the CLI falls back to an environment variable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Number of leading trials whose per-round rows go to `runs.csv`
    /// (all when absent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs_trials: Option<usize>,
    /// Also dump a full JSON-lines trace and summary CSV of trial 0.
    #[serde(default)]
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    pub model: ErasureModel,
    #[serde(default)]
    pub eps: EpsSpec,
    pub protocol: Protocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<CodeConfig>,
    pub rounds: usize,
    #[serde(default = "one_trial")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub x0: X0Spec,
    /// `R'` values at which the tail probability at `M = rounds` is reported.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tail_rates: Vec<f64>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn one_trial() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}", render(.line, .column, .field, .message))]
pub struct ConfigError {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

fn render(line: &Option<usize>, column: &Option<usize>, field: &Option<String>, message: &str) -> String {
    let mut s = String::from("config");
    if let Some(l) = line {
        s += &format!(" line {l}");
        if let Some(c) = column {
            s += &format!(", column {c}");
        }
    }
    if let Some(f) = field {
        s += &format!(" (`{f}`)");
    }
    format!("{s}: {message}")
}

impl ConfigError {
    fn field(field: &str, message: impl Into<String>) -> Self {
        Self {
            line: None,
            column: None,
            field: Some(field.to_string()),
            message: message.into(),
        }
    }

    /// Attach the line of the first occurrence of the field's key in `text`.
    fn locate(mut self, text: &str) -> Self {
        if let (None, Some(field)) = (self.line, &self.field) {
            let key = field.rsplit('.').next().unwrap_or(field);
            let needle = format!("\"{key}\"");
            self.line = text.lines().position(|l| l.contains(&needle)).map(|i| i + 1);
        }
        self
    }
}

/// A validated configuration with everything derived from it.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub graph: Graph,
    pub spectral: SpectralSummary,
    pub eps: f64,
    pub x0: Vec<f64>,
    pub code: Option<Arc<TreeCode>>,
}

impl ExperimentConfig {
    /// Parse and validate, reporting the offending line on failure.
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError {
            line: Some(e.line()),
            column: Some(e.column()),
            field: None,
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|e| e.locate(text))?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON serialization, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.prepare().map(|_| ())
    }

    pub fn prepare(&self) -> Result<Prepared, ConfigError> {
        let graph = self.graph.build().map_err(|m| ConfigError::field("graph", m))?;
        if self.rounds == 0 {
            return Err(ConfigError::field("rounds", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(ConfigError::field("trials", "must be at least 1"));
        }
        let explicit = match self.eps {
            EpsSpec::Keyword(AutoKeyword::Auto) => None,
            EpsSpec::Value(v) => Some(v),
        };
        let spectral = spectral_summary(&graph, explicit).map_err(|e| ConfigError::field("eps", e.to_string()))?;
        let eps = spectral.eps;
        if self.protocol == Protocol::Repetition && self.model.mode != ErasureMode::Symmetric {
            return Err(ConfigError::field("mode", "the repetition protocol needs symmetric erasures"));
        }
        if let Some(r) = self.tail_rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(ConfigError::field("tail_rates", format!("R' = {r} is outside [0, 1]")));
        }
        let code = match (self.protocol, &self.code) {
            (Protocol::Treecode, None) => {
                return Err(ConfigError::field("protocol", "the tree-code protocol needs `code` parameters"));
            }
            (Protocol::Treecode, Some(c)) => {
                if c.lambda_bits < FRAME_BITS {
                    return Err(ConfigError::field(
                        "lambda_bits",
                        format!("packets carry a {FRAME_BITS}-bit frame; got {}", c.lambda_bits),
                    ));
                }
                if self.rounds > c.cap() {
                    return Err(ConfigError::field(
                        "rounds",
                        format!("{} rounds exceed the decoder horizon cap {}", self.rounds, c.cap()),
                    ));
                }
                let code = TreeCode::with_cap(c.params(), self.rounds, c.cap())
                    .map_err(|e| ConfigError::field("code", e.to_string()))?;
                Some(Arc::new(code))
            }
            (_, _) => None,
        };
        let x0 = self.x0.build(graph.n()).map_err(|m| ConfigError::field("x0", m))?;
        Ok(Prepared {
            config: self.clone(),
            config_hash: self.hash(),
            graph,
            spectral,
            eps,
            x0,
            code,
        })
    }
}
