//! Horizontal federated SVM: round-based parameter averaging between `k`
//! clients and one server, driven as explicit message-passing state machines.
//!
//! Round structure:
//!
//! 1. server → clients `Start` (round 0);
//! 2. each client trains from a small random init and answers `LocalParams`
//!    (round 1);
//! 3. server averages: plain mean at round 1, `½(w_{t-1} + mean)` afterwards;
//! 4. server → clients `GlobalParams(w_t)`, clients train from it and answer
//!    `LocalParams` for round `t + 1`;
//! 5. after the last round (or early stop) the server sends `Stop(w_N)` and
//!    clients adopt it verbatim.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dataio::{Dataset, HorizontalPartition};
use crate::error::{Error, Result};
use crate::seed;
use crate::svm::{svm_train, LinearModel, SvmConfig};
use crate::transcript::TranscriptRecord;

/// Half-width of the uniform interval for client initial parameters.
pub const INIT_SPREAD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    Server,
    Client(usize),
}

impl std::fmt::Display for Party {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Party::Server => write!(f, "server"),
            Party::Client(i) => write!(f, "client-{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    Start,
    LocalParams,
    GlobalParams,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxRounds,
    Converged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMessage {
    pub round: u64,
    pub sender: Party,
    pub recipient: Party,
    pub kind: MessageKind,
    pub payload: Option<LinearModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<StopReason>,
}

impl ProtocolMessage {
    fn from_server(round: u64, to: usize, kind: MessageKind, payload: Option<LinearModel>) -> Self {
        Self { round, sender: Party::Server, recipient: Party::Client(to), kind, payload, stop_reason: None }
    }

    /// Direction and payload rules: `LocalParams` flows client → server,
    /// everything else server → client; only `Start` has no payload.
    pub fn check_shape(&self) -> Result<()> {
        let ok = match self.kind {
            MessageKind::LocalParams => {
                matches!((self.sender, self.recipient), (Party::Client(_), Party::Server)) && self.payload.is_some()
            }
            MessageKind::Start => {
                matches!((self.sender, self.recipient), (Party::Server, Party::Client(_))) && self.payload.is_none()
            }
            MessageKind::GlobalParams | MessageKind::Stop => {
                matches!((self.sender, self.recipient), (Party::Server, Party::Client(_))) && self.payload.is_some()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Protocol(format!("malformed {:?} message from {} to {}", self.kind, self.sender, self.recipient)))
        }
    }

    pub fn to_record(&self, run_id: &str, inline_payload: bool) -> TranscriptRecord {
        let payload = json!({
            "recipient": self.recipient.to_string(),
            "model": self.payload,
            "stop_reason": self.stop_reason,
        });
        TranscriptRecord::new(run_id, self.round, self.sender.to_string(), &format!("{:?}", self.kind), payload, inline_payload)
    }
}

/// Client-side protocol state.
#[derive(Debug, Clone)]
pub struct FedSvmClient<'a> {
    pub client_id: usize,
    pub local_data: &'a Dataset,
    pub current_model: Option<LinearModel>,
    /// Round of the last `LocalParams` sent (0 before `Start`).
    pub round: u64,
    pub finished: bool,
    seed: u64,
}

impl<'a> FedSvmClient<'a> {
    pub fn new(client_id: usize, local_data: &'a Dataset, seed: u64) -> Self {
        Self { client_id, local_data, current_model: None, round: 0, finished: false, seed }
    }

    /// The random `w_0` this client starts from.
    pub fn initial_model(&self) -> LinearModel {
        initial_model(self.seed, self.local_data.n_features())
    }

    /// Training config for producing `w_round`.
    pub fn round_config(&self, base: &SvmConfig, round: u64) -> SvmConfig {
        round_config(base, self.seed, round)
    }

    pub fn step(&mut self, incoming: &ProtocolMessage, cfg: &SvmConfig) -> Result<Option<ProtocolMessage>> {
        incoming.check_shape()?;
        if incoming.recipient != Party::Client(self.client_id) {
            return Err(Error::Protocol(format!("client {} received message for {}", self.client_id, incoming.recipient)));
        }
        if self.finished {
            return Err(Error::Protocol(format!("client {} got {:?} after Stop", self.client_id, incoming.kind)));
        }
        if incoming.round != self.round {
            return Err(Error::Protocol(format!(
                "client {} expected round {}, got {:?} for round {}",
                self.client_id, self.round, incoming.kind, incoming.round
            )));
        }
        let start_from = match incoming.kind {
            MessageKind::Start => self.initial_model(),
            MessageKind::GlobalParams if self.round > 0 => incoming.payload.clone().expect("checked shape"),
            MessageKind::Stop if self.round > 0 => {
                self.current_model = incoming.payload.clone();
                self.finished = true;
                return Ok(None);
            }
            kind => {
                return Err(Error::Protocol(format!("client {} cannot accept {kind:?} at round {}", self.client_id, self.round)));
            }
        };
        let next = self.round + 1;
        let trained = svm_train(&start_from, self.local_data, &self.round_config(cfg, next))?;
        self.current_model = Some(trained.clone());
        self.round = next;
        Ok(Some(ProtocolMessage {
            round: next,
            sender: Party::Client(self.client_id),
            recipient: Party::Server,
            kind: MessageKind::LocalParams,
            payload: Some(trained),
            stop_reason: None,
        }))
    }
}

pub fn initial_model(client_seed: u64, dim: usize) -> LinearModel {
    let mut rng = seed::rng(seed::derive(client_seed, 0));
    let weights = (0..dim).map(|_| rng.random_range(-INIT_SPREAD..=INIT_SPREAD)).collect();
    let intercept = rng.random_range(-INIT_SPREAD..=INIT_SPREAD);
    LinearModel { weights, intercept }
}

pub fn round_config(base: &SvmConfig, client_seed: u64, round: u64) -> SvmConfig {
    SvmConfig { seed: seed::derive(client_seed, round), ..base.clone() }
}

/// Server aggregation. Round 1 (no previous global): elementwise mean.
/// Later rounds: `½(previous + mean)`. Clients are summed in slice order.
pub fn server_aggregate(received: &[LinearModel], previous_global: Option<&LinearModel>) -> Result<LinearModel> {
    let first = received.first().ok_or_else(|| Error::Contract("no models to aggregate".into()))?;
    let dim = first.dim();
    if let Some(bad) = received.iter().chain(previous_global).find(|m| m.dim() != dim) {
        return Err(Error::Contract(format!("model dimension {} differs from {dim}", bad.dim())));
    }
    let k = received.len() as f64;
    let mut weights = vec![0.0; dim];
    let mut intercept = 0.0;
    for m in received {
        for (acc, w) in weights.iter_mut().zip(&m.weights) {
            *acc += w;
        }
        intercept += m.intercept;
    }
    weights.iter_mut().for_each(|w| *w /= k);
    intercept /= k;
    if let Some(prev) = previous_global {
        for (w, p) in weights.iter_mut().zip(&prev.weights) {
            *w = 0.5 * (p + *w);
        }
        intercept = 0.5 * (prev.intercept + intercept);
    }
    Ok(LinearModel { weights, intercept })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedSvmOptions {
    /// Maximum number of rounds N.
    pub rounds: u64,
    /// Stop early when `‖w_t − w_{t−1}‖∞` falls below this value.
    pub param_delta_tol: Option<f64>,
    /// Base seed; client `i` uses `seed::derive(seed, i)`.
    pub seed: u64,
}

impl Default for FedSvmOptions {
    fn default() -> Self {
        Self { rounds: 20, param_delta_tol: None, seed: 0 }
    }
}

impl FedSvmOptions {
    pub fn client_seeds(&self, k: usize) -> Vec<u64> {
        (0..k as u64).map(|i| seed::derive(self.seed, i)).collect()
    }
}

/// Server-side protocol state.
#[derive(Debug, Clone)]
pub struct FedSvmServer {
    pub k: usize,
    pub dim: usize,
    pub global_model: Option<LinearModel>,
    /// Number of completed aggregations.
    pub round: u64,
    pub max_rounds: u64,
    pub param_delta_tol: Option<f64>,
    pub stop_reason: Option<StopReason>,
    pending: Vec<Option<LinearModel>>,
}

impl FedSvmServer {
    pub fn new(k: usize, dim: usize, max_rounds: u64, param_delta_tol: Option<f64>) -> Self {
        Self { k, dim, global_model: None, round: 0, max_rounds, param_delta_tol, stop_reason: None, pending: vec![None; k] }
    }

    pub fn start(&self) -> Vec<ProtocolMessage> {
        (0..self.k).map(|i| ProtocolMessage::from_server(0, i, MessageKind::Start, None)).collect()
    }

    pub fn receive(&mut self, msg: &ProtocolMessage) -> Result<Vec<ProtocolMessage>> {
        msg.check_shape()?;
        let Party::Client(i) = msg.sender else { unreachable!("LocalParams always come from a client") };
        if self.stop_reason.is_some() {
            return Err(Error::Protocol(format!("server already stopped; got LocalParams from client {i}")));
        }
        if i >= self.k {
            return Err(Error::Protocol(format!("unknown client {i}")));
        }
        if msg.round != self.round + 1 {
            return Err(Error::Protocol(format!("client {i} sent round {} while server expects {}", msg.round, self.round + 1)));
        }
        let model = msg.payload.clone().expect("checked shape");
        if model.dim() != self.dim {
            return Err(Error::Protocol(format!("client {i} sent dimension {} (expected {})", model.dim(), self.dim)));
        }
        if self.pending[i].replace(model).is_some() {
            return Err(Error::Protocol(format!("client {i} sent LocalParams twice in round {}", msg.round)));
        }
        if self.pending.iter().any(Option::is_none) {
            return Ok(Vec::new());
        }

        let received: Vec<LinearModel> = self.pending.iter_mut().map(|m| m.take().expect("all present")).collect();
        let next = server_aggregate(&received, self.global_model.as_ref())?;
        let converged = match (self.param_delta_tol, &self.global_model) {
            (Some(tol), Some(prev)) => next.max_abs_diff(prev) < tol,
            _ => false,
        };
        self.round += 1;
        self.global_model = Some(next.clone());

        let reason = if converged {
            Some(StopReason::Converged)
        } else if self.round >= self.max_rounds {
            Some(StopReason::MaxRounds)
        } else {
            None
        };
        self.stop_reason = reason;
        let kind = if reason.is_some() { MessageKind::Stop } else { MessageKind::GlobalParams };
        Ok((0..self.k)
            .map(|c| ProtocolMessage { stop_reason: reason, ..ProtocolMessage::from_server(self.round, c, kind, Some(next.clone())) })
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct FedSvmRun {
    pub global: LinearModel,
    pub transcript: Vec<ProtocolMessage>,
    pub rounds_completed: u64,
    pub stop_reason: StopReason,
    pub client_models: Vec<LinearModel>,
}

pub fn run_fedsvm(partition: &HorizontalPartition, cfg: &SvmConfig, opts: &FedSvmOptions) -> Result<FedSvmRun> {
    run_fedsvm_with_seeds(partition, cfg, opts, &opts.client_seeds(partition.k()))
}

/// Runs the protocol to completion. Messages are delivered in
/// (round, client id) order and the transcript keeps that order.
pub fn run_fedsvm_with_seeds(
    partition: &HorizontalPartition,
    cfg: &SvmConfig,
    opts: &FedSvmOptions,
    client_seeds: &[u64],
) -> Result<FedSvmRun> {
    cfg.validate()?;
    let k = partition.k();
    if k == 0 {
        return Err(Error::Partition("no clients".into()));
    }
    if opts.rounds == 0 {
        return Err(Error::Config("rounds must be >= 1".into()));
    }
    if client_seeds.len() != k {
        return Err(Error::Config(format!("{} client seeds for {k} clients", client_seeds.len())));
    }
    let dim = partition.clients[0].n_features();
    let names = partition.clients[0].feature_names();
    if partition.clients.iter().any(|c| c.feature_names() != names) {
        return Err(Error::Partition("clients have different feature spaces".into()));
    }

    let mut clients: Vec<FedSvmClient> =
        partition.clients.iter().enumerate().map(|(i, d)| FedSvmClient::new(i, d, client_seeds[i])).collect();
    let mut server = FedSvmServer::new(k, dim, opts.rounds, opts.param_delta_tol);
    let mut transcript = Vec::new();
    let mut outbound = server.start();

    loop {
        transcript.extend(outbound.iter().cloned());
        let replies: Vec<Option<ProtocolMessage>> = clients
            .par_iter_mut()
            .zip(outbound.par_iter())
            .map(|(client, msg)| {
                client.step(msg, cfg).map_err(|e| match e {
                    Error::Protocol(m) => Error::Protocol(format!("{m} (offending message: {msg:?})")),
                    other => other,
                })
            })
            .collect::<Result<_>>()?;
        let replies: Vec<ProtocolMessage> = replies.into_iter().flatten().collect();
        if replies.is_empty() {
            break;
        }
        transcript.extend(replies.iter().cloned());
        let mut next = Vec::new();
        for reply in &replies {
            next.extend(server.receive(reply)?);
        }
        outbound = next;
    }

    Ok(FedSvmRun {
        global: server.global_model.clone().expect("at least one round completed"),
        transcript,
        rounds_completed: server.round,
        stop_reason: server.stop_reason.expect("loop ends after Stop"),
        client_models: clients.into_iter().map(|c| c.current_model.expect("adopted final model")).collect(),
    })
}
