//! Python bindings. Structured results come back as plain dicts and lists
//! (decoded from the same JSON the Rust side persists).

use pyo3::prelude::*;

#[pymodule]
mod agent_radar_py {
    use std::collections::BTreeSet;

    use agent_radar::graph::{build_topology, LayerSpec, TopologyKind, TopologyParams};
    use agent_radar::harness::{run_session as run, SessionFile};
    use agent_radar::select::{
        segment_sentences, sentence_spans, spatial_decay as spatial, temporal_decay as temporal, DEFAULT_LAMBDA_S,
        DEFAULT_LAMBDA_T, DEFAULT_THETA,
    };
    use agent_radar::steering::{build_request, render_prompt};
    use agent_radar::{
        select_context as select, AgentId, CommGraph, DecayParams, HopDistance, LocalHashEncoder, Matcher, Message,
        MessageId, Round, SteeringMode, TranscriptStore,
    };
    use pyo3::exceptions::PyValueError;
    use pyo3::prelude::*;

    fn err(e: impl std::fmt::Display) -> PyErr {
        PyValueError::new_err(e.to_string())
    }

    fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
        py.import("json")?.call_method1("loads", (text,))
    }

    fn to_round(t: u32) -> PyResult<Round> {
        Round::new(t).map_err(err)
    }

    #[pyclass(name = "CommGraph", frozen)]
    struct PyGraph {
        inner: CommGraph,
    }

    #[pymethods]
    impl PyGraph {
        /// Generated topology; `kind` is fully_connected, random, layered or debate.
        #[staticmethod]
        #[pyo3(signature = (kind, n, p=0.5, layers=None, seed=0))]
        fn generate(kind: &str, n: usize, p: f64, layers: Option<Vec<usize>>, seed: u64) -> PyResult<Self> {
            let kind: TopologyKind = kind.parse().map_err(err)?;
            let mut params = TopologyParams {
                edge_probability: p,
                ..Default::default()
            };
            if let Some(assign) = layers {
                let k = assign.iter().max().map_or(0, |m| m + 1);
                let groups = (0..k).map(|l| (0..n).filter(|&a| assign.get(a) == Some(&l)).collect()).collect();
                params.layers = LayerSpec::Groups(groups);
            }
            Ok(Self {
                inner: build_topology(kind, n, &params, seed).map_err(err)?,
            })
        }

        #[staticmethod]
        fn from_edges(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
            Ok(Self {
                inner: CommGraph::from_edges(n, TopologyKind::Custom, 0, edges, None).map_err(err)?,
            })
        }

        #[staticmethod]
        fn from_json(text: &str) -> PyResult<Self> {
            Ok(Self {
                inner: CommGraph::from_json(text).map_err(err)?,
            })
        }

        fn to_json(&self) -> String {
            self.inner.to_json()
        }

        #[getter]
        fn n_agents(&self) -> usize {
            self.inner.n_agents()
        }

        fn edges(&self) -> Vec<(usize, usize)> {
            self.inner.edges().collect()
        }

        /// Directed hop count, or None when unreachable.
        fn hop_distance(&self, src: usize, dst: usize) -> PyResult<Option<usize>> {
            Ok(self.inner.hop_distance(AgentId(src), AgentId(dst)).map_err(err)?.finite())
        }

        fn k_hop_neighborhood(&self, node: usize, k: usize) -> PyResult<BTreeSet<usize>> {
            let set = self.inner.k_hop_neighborhood(AgentId(node), k).map_err(err)?;
            Ok(set.into_iter().map(|a| a.0).collect())
        }

        fn reachable_set(&self, node: usize) -> PyResult<BTreeSet<usize>> {
            let set = self.inner.reachable_set(AgentId(node)).map_err(err)?;
            Ok(set.into_iter().map(|a| a.0).collect())
        }

        fn __repr__(&self) -> String {
            format!(
                "CommGraph(kind={}, n_agents={}, edges={})",
                self.inner.kind().as_str(),
                self.inner.n_agents(),
                self.inner.edge_count()
            )
        }
    }

    #[pyclass(name = "Transcript")]
    struct PyTranscript {
        inner: TranscriptStore,
    }

    #[pymethods]
    impl PyTranscript {
        #[new]
        fn new() -> Self {
            Self {
                inner: TranscriptStore::new(),
            }
        }

        #[staticmethod]
        fn from_jsonl(text: &str) -> PyResult<Self> {
            Ok(Self {
                inner: TranscriptStore::from_jsonl(text).map_err(err)?,
            })
        }

        #[pyo3(signature = (author, round, text, role_label=String::new()))]
        fn append(&mut self, author: usize, round: u32, text: String, role_label: String) -> PyResult<u64> {
            Ok(self.inner.append_message(AgentId(author), to_round(round)?, text, role_label).0)
        }

        fn to_jsonl(&self) -> String {
            self.inner.to_jsonl()
        }

        fn content_hash(&self) -> String {
            self.inner.content_hash()
        }

        /// Messages visible to `receiver` before round `t`, as dicts.
        fn context_pool<'py>(
            &self,
            py: Python<'py>,
            graph: &PyGraph,
            receiver: usize,
            t: u32,
        ) -> PyResult<Bound<'py, PyAny>> {
            let pool = self.inner.context_pool(&graph.inner, AgentId(receiver), to_round(t)?).map_err(err)?;
            let messages: Vec<&Message> = pool.messages.iter().collect();
            json_to_py(py, &serde_json_string(&messages)?)
        }

        fn __len__(&self) -> usize {
            self.inner.len()
        }
    }

    fn serde_json_string<T: serde::Serialize>(value: &T) -> PyResult<String> {
        serde_json::to_string(value).map_err(err)
    }

    #[pyfunction]
    #[pyo3(signature = (d, lambda_s=DEFAULT_LAMBDA_S))]
    fn spatial_decay(d: Option<usize>, lambda_s: f64) -> PyResult<f64> {
        let d = d.map_or(HopDistance::Unreachable, HopDistance::Finite);
        spatial(d, lambda_s).map_err(err)
    }

    #[pyfunction]
    #[pyo3(signature = (tau, t, lambda_t=DEFAULT_LAMBDA_T))]
    fn temporal_decay(tau: u32, t: u32, lambda_t: f64) -> PyResult<f64> {
        temporal(to_round(tau)?, to_round(t)?, lambda_t).map_err(err)
    }

    /// `(start, end, text)` per sentence, with byte offsets.
    #[pyfunction]
    fn segment(text: &str) -> Vec<(usize, usize, String)> {
        sentence_spans(text).into_iter().map(|(a, b)| (a, b, text[a..b].to_string())).collect()
    }

    fn params(
        lambda_s: f64,
        lambda_t: f64,
        theta: f64,
        no_spatial: bool,
        no_temporal: bool,
        matcher: &str,
    ) -> PyResult<DecayParams> {
        let matcher = match matcher {
            "dense" => Matcher::DenseCosine,
            "bm25" => Matcher::LexicalBm25,
            other => return Err(err(format!("unknown matcher '{other}' (dense or bm25)"))),
        };
        Ok(DecayParams {
            lambda_s,
            lambda_t,
            theta,
            disable_spatial: no_spatial,
            disable_temporal: no_temporal,
            matcher,
        })
    }

    /// Anchors for `receiver` at round `t`, using the local hashing encoder.
    #[pyfunction]
    #[pyo3(signature = (
        transcript, graph, receiver, t, query,
        lambda_s=DEFAULT_LAMBDA_S, lambda_t=DEFAULT_LAMBDA_T, theta=DEFAULT_THETA,
        no_spatial=false, no_temporal=false, matcher="dense"
    ))]
    #[allow(clippy::too_many_arguments)]
    fn select_context<'py>(
        py: Python<'py>,
        transcript: &PyTranscript,
        graph: &PyGraph,
        receiver: usize,
        t: u32,
        query: &str,
        lambda_s: f64,
        lambda_t: f64,
        theta: f64,
        no_spatial: bool,
        no_temporal: bool,
        matcher: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let p = params(lambda_s, lambda_t, theta, no_spatial, no_temporal, matcher)?;
        let t = to_round(t)?;
        let pool = transcript.inner.context_pool(&graph.inner, AgentId(receiver), t).map_err(err)?;
        let sel = select(&pool, &graph.inner, query, t, &p, &LocalHashEncoder::default()).map_err(err)?;
        json_to_py(py, &sel.to_json())
    }

    /// Rendered prompt plus anchor spans (`anchor_export`) or the appended
    /// key-context block (`prompt_append`).
    #[pyfunction]
    #[pyo3(signature = (
        transcript, graph, receiver, t, query, profile="",
        mode="anchor_export", amplification=1.0, theta=DEFAULT_THETA
    ))]
    #[allow(clippy::too_many_arguments)]
    fn steering_request<'py>(
        py: Python<'py>,
        transcript: &PyTranscript,
        graph: &PyGraph,
        receiver: usize,
        t: u32,
        query: &str,
        profile: &str,
        mode: &str,
        amplification: f64,
        theta: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let mode = match mode {
            "anchor_export" => SteeringMode::AnchorExport,
            "prompt_append" => SteeringMode::PromptAppend,
            other => return Err(err(format!("unknown steering mode '{other}'"))),
        };
        let p = DecayParams {
            theta,
            ..Default::default()
        };
        let t = to_round(t)?;
        let pool = transcript.inner.context_pool(&graph.inner, AgentId(receiver), t).map_err(err)?;
        let sel = select(&pool, &graph.inner, query, t, &p, &LocalHashEncoder::default()).map_err(err)?;
        let rendered = render_prompt(query, &pool, profile);
        let req = build_request(mode, &sel, &rendered, amplification).map_err(err)?;
        json_to_py(py, &serde_json_string(&req)?)
    }

    /// Sentences of one message: dicts with message_id, ordinal, char_span, text.
    #[pyfunction]
    fn message_sentences<'py>(py: Python<'py>, transcript: &PyTranscript, message_id: u64) -> PyResult<Bound<'py, PyAny>> {
        let m = transcript
            .inner
            .get(MessageId(message_id))
            .ok_or_else(|| err(format!("no message {message_id}")))?;
        json_to_py(py, &serde_json_string(&segment_sentences(m))?)
    }

    /// Runs a session config with its scripted backend.
    #[pyfunction]
    fn run_session<'py>(py: Python<'py>, config_path: &str) -> PyResult<Bound<'py, PyAny>> {
        let file = SessionFile::load(config_path).map_err(err)?;
        let cfg = file.session_config().map_err(err)?;
        let mut backend = file
            .backend
            .scripted
            .clone()
            .ok_or_else(|| err("config has no backend.scripted section"))?;
        let provider = file.encoder.build().map_err(err)?;
        let result = run(&cfg, &mut backend, provider.as_ref()).map_err(err)?;
        let out = pyo3::types::PyDict::new(py);
        out.set_item("transcript", result.transcript.to_jsonl())?;
        out.set_item("audit", result.audit_jsonl())?;
        out.set_item("final_answer", result.final_answer)?;
        Ok(out.into_any())
    }
}
