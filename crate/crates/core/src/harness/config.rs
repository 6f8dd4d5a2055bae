//! JSON session config files.
//!
//! ```json
//! {
//!   "task": "...",
//!   "rounds": 2,
//!   "seed": 0,
//!   "graph": {"generate": {"kind": "random", "n_agents": 5, "p": 0.5, "seed": 0}},
//!   "profiles": [{"name": "Critic", "prompt": "..."}],
//!   "decay": {"lambda_s": 0.92, "lambda_t": 0.92, "theta": 0.65},
//!   "steering": {"mode": "anchor_export", "amplification": 1.0},
//!   "encoder": {"local": {"dim": 256}},
//!   "backend": {"scripted": {"outputs": [["..."]], "decider": "majority"}}
//! }
//! ```
//!
//! `graph` may also be `{"inline": <graph json>}` or `{"path": "graph.json"}`;
//! `profiles` may be `{"file": "profiles.json", "select": ["Critic", ...]}`.
//! Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::backend::ScriptedBackend;
use super::chat::ChatConfig;
use super::{AgentProfile, FinalReferConfig, SessionConfig, SteeringConfig};
use crate::graph::{build_topology, CommGraph, GraphError, GraphFile, LayerSpec, TopologyKind, TopologyParams};
use crate::select::{
    DecayParams, EmbedError, EmbeddingProvider, LocalHashEncoder, RemoteEncoder, RemoteEncoderConfig,
};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    pub n_agents: usize,
    #[serde(default)]
    pub p: Option<f64>,
    /// Layer count, or explicit groups of agent ids.
    #[serde(default)]
    pub layers: Option<LayersJson>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayersJson {
    Count(usize),
    Groups(Vec<Vec<usize>>),
}

impl TopologySpec {
    pub fn build(&self) -> Result<CommGraph, GraphError> {
        let mut params = TopologyParams::default();
        if let Some(p) = self.p {
            params.edge_probability = p;
        }
        if let Some(layers) = &self.layers {
            params.layers = match layers {
                LayersJson::Count(n) => LayerSpec::Count(*n),
                LayersJson::Groups(g) => LayerSpec::Groups(g.clone()),
            };
        }
        build_topology(self.kind, self.n_agents, &params, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    Inline(GraphFile),
    Path(PathBuf),
    Generate(TopologySpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfilesSource {
    Inline(Vec<AgentProfile>),
    File {
        file: PathBuf,
        #[serde(default)]
        select: Option<Vec<String>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderConfig {
    Local {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Remote(RemoteEncoderConfig),
}

fn default_dim() -> usize {
    crate::select::embed::LOCAL_ENCODER_DIM
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig::Local { dim: default_dim() }
    }
}

/// Environment variable for the remote embedding key; falls back to the chat key.
pub const EMBEDDING_API_KEY_ENV: &str = "EMBEDDING_API_KEY";

impl EncoderConfig {
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>, ConfigError> {
        match self {
            EncoderConfig::Local { dim } => {
                if *dim == 0 {
                    return Err(ConfigError::Invalid("encoder dim must be positive".into()));
                }
                Ok(Box::new(LocalHashEncoder::with_dim(*dim)))
            }
            EncoderConfig::Remote(cfg) => {
                let key = std::env::var(EMBEDDING_API_KEY_ENV)
                    .or_else(|_| std::env::var(super::chat::API_KEY_ENV))
                    .ok();
                Ok(Box::new(RemoteEncoder::new(cfg, key)?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BackendSection {
    #[serde(default)]
    pub scripted: Option<ScriptedBackend>,
    #[serde(default)]
    pub remote: Option<ChatConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFile {
    pub task: String,
    #[serde(default)]
    pub query: Option<String>,
    #[serde(default = "default_rounds")]
    pub rounds: u32,
    #[serde(default)]
    pub seed: u64,
    pub graph: GraphSource,
    pub profiles: ProfilesSource,
    #[serde(default)]
    pub decay: DecayParams,
    #[serde(default)]
    pub steering: SteeringConfig,
    #[serde(default)]
    pub final_refer: FinalReferConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn default_rounds() -> u32 {
    2
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

impl SessionFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let mut file: SessionFile = parse(path, &read(path)?)?;
        file.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(file)
    }

    /// Parses config text; relative paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let mut file: SessionFile = parse(Path::new("<config>"), text)?;
        file.base_dir = base_dir.into();
        Ok(file)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn graph(&self) -> Result<CommGraph, ConfigError> {
        match &self.graph {
            GraphSource::Inline(g) => Ok(CommGraph::try_from(g.clone())?),
            GraphSource::Generate(spec) => Ok(spec.build()?),
            GraphSource::Path(p) => {
                let path = self.resolve(p);
                let file: GraphFile = parse(&path, &read(&path)?)?;
                Ok(CommGraph::try_from(file)?)
            }
        }
    }

    pub fn profiles(&self) -> Result<Vec<AgentProfile>, ConfigError> {
        match &self.profiles {
            ProfilesSource::Inline(list) => Ok(list.clone()),
            ProfilesSource::File { file, select } => {
                let path = self.resolve(file);
                let all: Vec<AgentProfile> = parse(&path, &read(&path)?)?;
                match select {
                    None => Ok(all),
                    Some(names) => names
                        .iter()
                        .map(|n| {
                            all.iter()
                                .find(|p| &p.name == n)
                                .cloned()
                                .ok_or_else(|| ConfigError::Invalid(format!("no profile named '{n}' in {}", path.display())))
                        })
                        .collect(),
                }
            }
        }
    }

    pub fn session_config(&self) -> Result<SessionConfig, ConfigError> {
        let config = SessionConfig {
            graph: self.graph()?,
            rounds: self.rounds,
            task: self.task.clone(),
            query: self.query.clone(),
            profiles: self.profiles()?,
            decay: self.decay,
            steering: self.steering,
            final_refer: self.final_refer.clone(),
            seed: self.seed,
        };
        config.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(config)
    }
}
