//! JSON scenario files.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "graph": {"n": 3, "edges": [[1, 2], [2, 3]]},
//!   "agents": [{"objective": {...}, "constraints": [...]}, ...],
//!   "barrier": {"a1": 100, "a2": 0.1},
//!   "beta": 25,
//!   "init": {"kind": "random_line", "low": -10, "high": 0, "direction": [1, 1], "offset": [0, -2]},
//!   "integration": {"scheme": "rk4", "dt": 2e-4, "t_end": 20, "sample_stride": 500},
//!   "seed": 0
//! }
//! ```
//!
//! Edges are 1-based. Unknown keys anywhere are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::BarrierSchedule;
use crate::graph::{Graph, GraphError};
use crate::metrics::Thresholds;
use crate::problem::{AgentProblem, FieldError, ProblemSet};
use crate::simulator::{paper_scenario, random_line_init, IntegrationConfig, Scenario, ScenarioError, Scheme, SwarmState};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported schema version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("agents: {0}")]
    Field(#[from] FieldError),
    #[error("init: {0}")]
    Init(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub n: usize,
    /// 1-based undirected pairs.
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// `x_i = s_i·direction + offset` with `s_i ~ U[low, high]` drawn from the seed.
    RandomLine { low: f64, high: f64, direction: Vec<f64>, offset: Vec<f64> },
    Explicit { states: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub graph: GraphSpec,
    pub agents: Vec<AgentProblem>,
    pub barrier: BarrierSchedule,
    pub beta: f64,
    pub init: InitSpec,
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub thresholds: Thresholds,
}

/// Command-line overrides applied on top of a file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
    pub scheme: Option<Scheme>,
    pub epsilon: Option<f64>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        if config.schema != SCHEMA_VERSION {
            return Err(ConfigError::Schema(config.schema));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dt) = o.dt {
            let horizon = self.integration.dt * self.integration.sample_stride as f64;
            self.integration.dt = dt;
            // keep the sampling interval in seconds
            self.integration.sample_stride = ((horizon / dt).round() as usize).max(1);
        }
        if let Some(t_end) = o.t_end {
            self.integration.t_end = t_end;
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(scheme) = o.scheme {
            self.integration.scheme = scheme;
        }
        if let Some(eps) = o.epsilon {
            self.integration.smoothing_epsilon = eps;
        }
    }

    pub fn build_graph(&self) -> Result<Graph, ConfigError> {
        let pairs: Vec<(usize, usize)> = self.graph.edges.iter().map(|e| (e[0], e[1])).collect();
        Ok(Graph::from_one_based(self.graph.n, &pairs)?)
    }

    pub fn build_problems(&self) -> Result<ProblemSet, ConfigError> {
        Ok(ProblemSet::new(self.agents.clone())?)
    }

    /// Builds and validates the scenario.
    pub fn to_scenario(&self) -> Result<Scenario, ConfigError> {
        let graph = self.build_graph()?;
        let problems = self.build_problems()?;
        let n = graph.node_count();
        let m = problems.dim();
        let init = match &self.init {
            InitSpec::RandomLine { low, high, direction, offset } => {
                if direction.len() != m || offset.len() != m {
                    return Err(ConfigError::Init(format!("direction and offset must have length {m}")));
                }
                if !(low <= high) {
                    return Err(ConfigError::Init(format!("low {low} exceeds high {high}")));
                }
                random_line_init(n, *low, *high, direction, offset, self.seed)
            }
            InitSpec::Explicit { states } => SwarmState {
                t: 0.0,
                x: states.iter().map(|s| nalgebra::DVector::from_column_slice(s)).collect(),
            },
        };
        let scenario = Scenario {
            graph,
            problems,
            schedule: self.barrier,
            beta: self.beta,
            init,
            integration: self.integration,
            seed: self.seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// The 12-agent benchmark as a config, equivalent to [`paper_scenario`].
pub fn paper_config(seed: u64) -> ScenarioConfig {
    let s = paper_scenario(seed);
    ScenarioConfig {
        schema: SCHEMA_VERSION,
        graph: GraphSpec {
            n: s.graph.node_count(),
            edges: crate::graph::BENCHMARK_EDGES.iter().map(|&(i, j)| [i, j]).collect(),
        },
        agents: s.problems.agents().to_vec(),
        barrier: s.schedule,
        beta: s.beta,
        init: InitSpec::RandomLine { low: -10.0, high: 0.0, direction: vec![1.0, 1.0], offset: vec![0.0, -2.0] },
        integration: s.integration,
        seed,
        thresholds: Thresholds::default(),
    }
}
