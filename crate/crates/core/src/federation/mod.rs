//! Classical federated training and its personalized-layer variant.
//!
//! Both loops broadcast, train every client locally, gather pseudo-gradients
//! and aggregate. The personalized loop sends and aggregates only the shared
//! groups; personalized groups never leave the client. Every transfer goes
//! through [`CommLedger::communicate`].
//!
//! Client work inside a round may run on a thread pool. Results are always
//! gathered and reduced in client-index order, so output does not depend on
//! the degree of parallelism.

mod ledger;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ledger::{CommLedger, Direction, LedgerEntry};

use crate::client_opt::{client_opt, proximal_penalty_mask, ClientHyper, ClientKind, ClientState, ClientUpdate, PenaltyMask};
use crate::data::{ClientSplits, WindowedDataset};
use crate::error::{Error, Result};
use crate::metrics::{self, ForecastSeries};
use crate::model::{LstmForecaster, ParamVector, PartitionScheme};
use crate::numerics::SimRng;
use crate::server_opt::{server_opt, ServerHyper, ServerKind, ServerState};

#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    /// Global epochs `T_s`.
    pub rounds: usize,
    pub scheme: PartitionScheme,
    pub client_kind: ClientKind,
    pub client: ClientHyper,
    pub server_kind: ServerKind,
    pub server: ServerHyper,
    pub seed: u64,
    /// Bytes per transmitted element.
    pub wire_bytes: usize,
    /// Worker threads for client updates; 1 runs serially.
    pub parallel: usize,
    /// Score validation MASE after every round.
    pub validate: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            rounds: 10,
            scheme: PartitionScheme::P2,
            client_kind: ClientKind::Adam,
            client: ClientHyper::default(),
            server_kind: ServerKind::FedAvg,
            server: ServerHyper::default(),
            seed: 0,
            wire_bytes: 4,
            parallel: 1,
            validate: true,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::invalid("need at least one global round"));
        }
        if self.wire_bytes == 0 {
            return Err(Error::invalid("wire element width must be positive"));
        }
        self.client.validate()?;
        self.server.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientComm {
    pub client: usize,
    pub down_elements: usize,
    pub up_elements: usize,
    pub bytes: usize,
}

/// Telemetry for one global round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Mean local minibatch loss per client (normalized units).
    #[serde(deserialize_with = "nullable::vec")]
    pub train_loss: Vec<f64>,
    /// Validation MASE per client, if validation was requested.
    #[serde(default, deserialize_with = "nullable::opt_vec")]
    pub val_mase: Option<Vec<f64>>,
    pub mean_val_mase: Option<f64>,
    pub comm: Vec<ClientComm>,
}

/// JSON writes non-finite floats as `null`; read them back as NaN.
pub(crate) mod nullable {
    use serde::{Deserialize, Deserializer};

    pub fn vec<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v = Vec::<Option<f64>>::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }

    pub fn opt_vec<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
        let v = Option::<Vec<Option<f64>>>::deserialize(d)?;
        Ok(v.map(|v| v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect()))
    }
}

#[derive(Debug, Clone)]
pub struct FlOutcome {
    /// Final server parameters: the full model for classical training, the
    /// shared groups for the personalized loop.
    pub server: ParamVector,
    /// Final model each client forecasts with.
    pub clients: Vec<ParamVector>,
    pub client_states: Vec<ClientState>,
    pub rounds: Vec<RoundRecord>,
    pub ledger: CommLedger,
}

fn pool(parallel: usize) -> Result<Option<rayon::ThreadPool>> {
    if parallel <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map(Some)
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))
}

/// Run each client's update, serially or on the pool, collected in client order.
fn run_clients<F>(pool: &Option<rayon::ThreadPool>, n: usize, round: usize, f: F) -> Result<Vec<ClientUpdate>>
where
    F: Fn(usize) -> Result<ClientUpdate> + Sync,
{
    let wrap = |c: usize| {
        f(c).map_err(|e| Error::Client {
            round,
            client: c,
            source: Box::new(e),
        })
    };
    match pool {
        None => (0..n).map(wrap).collect(),
        Some(p) => p.install(|| (0..n).into_par_iter().map(wrap).collect::<Vec<_>>()).into_iter().collect(),
    }
}

fn client_rng(seed: u64, round: usize, client: usize) -> SimRng {
    SimRng::derive(seed, &[round as u64, client as u64])
}

fn check_inputs(cfg: &FederationConfig, model: &LstmForecaster, init: &ParamVector, data: &[ClientSplits]) -> Result<()> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("need at least one client dataset"));
    }
    if init.schema().as_ref() != model.schema().as_ref() {
        return Err(Error::SchemaMismatch("initial parameters do not match the model".into()));
    }
    Ok(())
}

fn round_record(round: usize, updates: &[ClientUpdate], ledger: &CommLedger, val: Option<Vec<f64>>) -> RoundRecord {
    let comm = (0..updates.len())
        .map(|c| {
            let mine = || ledger.round_entries(round).filter(move |e| e.client == c);
            let down = mine().filter(|e| e.direction == Direction::Down).map(|e| e.elements).sum();
            let up = mine().filter(|e| e.direction == Direction::Up).map(|e| e.elements).sum();
            ClientComm {
                client: c,
                down_elements: down,
                up_elements: up,
                bytes: mine().map(|e| e.bytes).sum(),
            }
        })
        .collect();
    RoundRecord {
        round,
        train_loss: updates.iter().map(|u| u.mean_loss).collect(),
        mean_val_mase: val.as_deref().and_then(metrics::mean),
        val_mase: val,
        comm,
    }
}

/// Classical federated training: the whole model is broadcast, trained
/// locally and aggregated every round.
pub fn run_classical_fl(
    cfg: &FederationConfig,
    model: &LstmForecaster,
    init: &ParamVector,
    data: &[ClientSplits],
) -> Result<FlOutcome> {
    check_inputs(cfg, model, init, data)?;
    let n = data.len();
    let pool = pool(cfg.parallel)?;
    let counts: Vec<usize> = data.iter().map(|d| d.train.len()).collect();
    let mask = PenaltyMask::all(model.schema());
    let mut server = ServerState::new(cfg.server_kind, init.clone(), n);
    let mut clients: Vec<ClientState> = (0..n).map(|_| ClientState::new(cfg.client_kind, init.clone())).collect();
    let mut ledger = CommLedger::new(cfg.wire_bytes);
    let mut rounds = Vec::with_capacity(cfg.rounds);

    for t in 1..=cfg.rounds {
        let received: Vec<ParamVector> = (0..n)
            .map(|c| ledger.communicate(t, c, Direction::Down, server.broadcast_for(c)))
            .collect();
        let updates = run_clients(&pool, n, t, |c| {
            let mut rng = client_rng(cfg.seed, t, c);
            client_opt(model, cfg.client_kind, &received[c], &clients[c], &data[c].train, &cfg.client, &mask, &mut rng)
        })?;
        let grads: Vec<ParamVector> = updates
            .iter()
            .enumerate()
            .map(|(c, u)| ledger.communicate(t, c, Direction::Up, &u.pseudo_grad))
            .collect();
        server = server_opt(&server, &grads, &counts, &cfg.server)?;
        for (slot, u) in clients.iter_mut().zip(&updates) {
            *slot = u.state.clone();
        }
        let models: Vec<ParamVector> = (0..n).map(|c| server.broadcast_for(c).clone()).collect();
        let val = if cfg.validate {
            Some(evaluate_round(model, &models, data, EvalSplit::Val)?)
        } else {
            None
        };
        rounds.push(round_record(t, &updates, &ledger, val));
    }

    let models = (0..n).map(|c| server.broadcast_for(c).clone()).collect();
    Ok(FlOutcome {
        server: server.params,
        clients: models,
        client_states: clients,
        rounds,
        ledger,
    })
}

/// Personalized-layer training: only shared groups travel; each client
/// keeps its personalized groups and trains on `[shared; personalized]`.
pub fn run_pl_fl(
    cfg: &FederationConfig,
    model: &LstmForecaster,
    init: &ParamVector,
    data: &[ClientSplits],
) -> Result<FlOutcome> {
    check_inputs(cfg, model, init, data)?;
    let n = data.len();
    let pool = pool(cfg.parallel)?;
    let scheme = &cfg.scheme;
    let schema = model.schema().clone();
    let counts: Vec<usize> = data.iter().map(|d| d.train.len()).collect();
    let mask = proximal_penalty_mask(scheme, &schema)?;
    let (init_shared, _) = init.split(scheme)?;
    let mut server = ServerState::new(cfg.server_kind, init_shared, n);
    let mut clients: Vec<ClientState> = (0..n).map(|_| ClientState::new(cfg.client_kind, init.clone())).collect();
    let mut ledger = CommLedger::new(cfg.wire_bytes);
    let mut rounds = Vec::with_capacity(cfg.rounds);

    let assemble = |shared: &ParamVector, local: &ClientState| -> Result<ParamVector> {
        let (_, personal) = local.params.split(scheme)?;
        ParamVector::merge(&schema, shared, &personal)
    };

    for t in 1..=cfg.rounds {
        let received: Vec<ParamVector> = (0..n)
            .map(|c| ledger.communicate(t, c, Direction::Down, server.broadcast_for(c)))
            .collect();
        let updates = run_clients(&pool, n, t, |c| {
            let start = assemble(&received[c], &clients[c])?;
            let mut rng = client_rng(cfg.seed, t, c);
            client_opt(model, cfg.client_kind, &start, &clients[c], &data[c].train, &cfg.client, &mask, &mut rng)
        })?;
        let mut grads = Vec::with_capacity(n);
        for (c, u) in updates.iter().enumerate() {
            let (shared_grad, _) = u.pseudo_grad.split(scheme)?;
            grads.push(ledger.communicate(t, c, Direction::Up, &shared_grad));
        }
        server = server_opt(&server, &grads, &counts, &cfg.server)?;
        for (slot, u) in clients.iter_mut().zip(&updates) {
            *slot = u.state.clone();
        }
        let val = if cfg.validate {
            let models = (0..n)
                .map(|c| assemble(server.broadcast_for(c), &clients[c]))
                .collect::<Result<Vec<_>>>()?;
            Some(evaluate_round(model, &models, data, EvalSplit::Val)?)
        } else {
            None
        };
        rounds.push(round_record(t, &updates, &ledger, val));
    }

    let models = (0..n)
        .map(|c| assemble(server.broadcast_for(c), &clients[c]))
        .collect::<Result<Vec<_>>>()?;
    Ok(FlOutcome {
        server: server.params,
        clients: models,
        client_states: clients,
        rounds,
        ledger,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Train,
    Val,
    Test,
}

impl EvalSplit {
    fn pick(self, s: &ClientSplits) -> &WindowedDataset {
        match self {
            EvalSplit::Train => &s.train,
            EvalSplit::Val => &s.val,
            EvalSplit::Test => &s.test,
        }
    }
}

/// Denormalized forecasts for every window of `ds`, paired with the
/// persistence history needed for MASE.
pub fn forecast_series(model: &LstmForecaster, params: &ParamVector, ds: &WindowedDataset) -> Result<ForecastSeries> {
    if ds.is_empty() {
        return Err(Error::Empty("evaluation split has no windows"));
    }
    let norm = ds.normalizer();
    let forecasts = (0..ds.len())
        .map(|i| model.predict(params, ds.input(i)).map(|y| norm.denormalize_load(y)))
        .collect::<Result<Vec<_>>>()?;
    ForecastSeries::new(forecasts, ds.persistence_actuals().to_vec(), ds.horizon())
}

/// Per-client MASE of each client's model on the chosen split.
pub fn evaluate_round(
    model: &LstmForecaster,
    params: &[ParamVector],
    data: &[ClientSplits],
    split: EvalSplit,
) -> Result<Vec<f64>> {
    if params.len() != data.len() {
        return Err(Error::invalid(format!("{} models for {} clients", params.len(), data.len())));
    }
    params
        .iter()
        .zip(data)
        .map(|(p, d)| metrics::mase(&forecast_series(model, p, split.pick(d))?))
        .collect()
}
