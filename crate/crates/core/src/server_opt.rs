//! Server aggregation: FedAvg, FedAdagrad, FedYogi, FedAdam, FedAvgAdaptive.
//!
//! Client pseudo-gradients are descent displacements (`θ_old − θ_new`), so
//! every update subtracts: FedAvg with `lr = 1` reproduces plain model
//! averaging. The aggregate is the (optionally sample-weighted) mean.
//!
//! `literal` mode switches to an alternative reading of the update rules:
//! additive step, unnormalized sum, non-accumulating Adagrad, `β·v` leading
//! term in Yogi, subtractive Adam second moment. It exists for auditing;
//! nothing in it is expected to converge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServerKind {
    FedAvg,
    FedAdagrad,
    FedYogi,
    FedAdam,
    FedAvgAdaptive,
}

impl ServerKind {
    pub const ALL: [ServerKind; 5] = [
        ServerKind::FedAvg,
        ServerKind::FedAdagrad,
        ServerKind::FedYogi,
        ServerKind::FedAdam,
        ServerKind::FedAvgAdaptive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ServerKind::FedAvg => "fedavg",
            ServerKind::FedAdagrad => "fedadagrad",
            ServerKind::FedYogi => "fedyogi",
            ServerKind::FedAdam => "fedadam",
            ServerKind::FedAvgAdaptive => "fedavgadaptive",
        }
    }
}

impl std::fmt::Display for ServerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ServerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ServerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown server optimizer `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// `1/N` per client.
    #[default]
    Uniform,
    /// `n_c / Σ n` by training-window count.
    Samples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weighting: Weighting,
    pub literal: bool,
}

impl Default for ServerHyper {
    fn default() -> Self {
        ServerHyper {
            lr: 1.0,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-3,
            weighting: Weighting::Uniform,
            literal: false,
        }
    }
}

impl ServerHyper {
    pub fn validate(&self) -> Result<()> {
        if self.lr > 0.0 && (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid server hyperparameters {self:?}")))
        }
    }
}

/// Per-client server copy kept by FedAvgAdaptive.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientSlot {
    pub params: ParamVector,
    pub v: ParamVector,
}

/// Server state: `{θ}` for FedAvg, `{θ, m, v}` for the adaptive kinds,
/// `N × {θ⁽ᶜ⁾, v⁽ᶜ⁾}` for FedAvgAdaptive.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub kind: ServerKind,
    pub params: ParamVector,
    pub m: Option<ParamVector>,
    pub v: Option<ParamVector>,
    pub per_client: Vec<ClientSlot>,
    pub round: usize,
}

impl ServerState {
    pub fn new(kind: ServerKind, params: ParamVector, clients: usize) -> Self {
        let zeros = || ParamVector::zeros(params.schema().clone());
        let adaptive = matches!(kind, ServerKind::FedAdagrad | ServerKind::FedYogi | ServerKind::FedAdam);
        let per_client = if kind == ServerKind::FedAvgAdaptive {
            (0..clients)
                .map(|_| ClientSlot {
                    params: params.clone(),
                    v: zeros(),
                })
                .collect()
        } else {
            Vec::new()
        };
        ServerState {
            kind,
            m: adaptive.then(zeros),
            v: adaptive.then(zeros),
            params,
            per_client,
            round: 0,
        }
    }

    /// What the server sends to client `c`.
    pub fn broadcast_for(&self, c: usize) -> &ParamVector {
        match self.kind {
            ServerKind::FedAvgAdaptive => &self.per_client[c].params,
            _ => &self.params,
        }
    }
}

/// Aggregate `Σ w_c g_c`, accumulated in client-index order.
fn aggregate(grads: &[ParamVector], weights: &[f64]) -> ParamVector {
    let mut acc = ParamVector::zeros(grads[0].schema().clone());
    for (g, &w) in grads.iter().zip(weights) {
        acc.axpy(w, g).expect("schemas checked by caller");
    }
    acc
}

/// One server update from the round's pseudo-gradients. `sample_counts` is
/// only read for [`Weighting::Samples`].
pub fn server_opt(
    state: &ServerState,
    grads: &[ParamVector],
    sample_counts: &[usize],
    hyper: &ServerHyper,
) -> Result<ServerState> {
    hyper.validate()?;
    if grads.is_empty() {
        return Err(Error::Empty("server received no client updates"));
    }
    for g in grads {
        state.params.check_schema(g)?;
    }
    let n = grads.len();
    if state.kind == ServerKind::FedAvgAdaptive && state.per_client.len() != n {
        return Err(Error::invalid(format!(
            "FedAvgAdaptive holds {} client slots, got {n} updates",
            state.per_client.len()
        )));
    }
    let weights: Vec<f64> = if hyper.literal {
        vec![1.0; n]
    } else {
        match hyper.weighting {
            Weighting::Uniform => vec![1.0 / n as f64; n],
            Weighting::Samples => {
                if sample_counts.len() != n {
                    return Err(Error::invalid("sample counts must be given per client"));
                }
                let total: usize = sample_counts.iter().sum();
                if total == 0 {
                    return Err(Error::invalid("total sample count is zero"));
                }
                sample_counts.iter().map(|&c| c as f64 / total as f64).collect()
            }
        }
    };
    // literal mode steps along +ḡ
    let dir = if hyper.literal { 1.0 } else { -1.0 };
    let (lr, b1, b2, eps) = (hyper.lr, hyper.beta1, hyper.beta2, hyper.eps);

    let mut next = state.clone();
    next.round += 1;
    match state.kind {
        ServerKind::FedAvg => {
            let g = aggregate(grads, &weights);
            next.params.axpy(dir * lr, &g)?;
        }
        ServerKind::FedAdagrad | ServerKind::FedYogi | ServerKind::FedAdam => {
            let g = aggregate(grads, &weights);
            let m = next.m.as_mut().expect("adaptive state has m").as_mut_slice();
            let v = next.v.as_mut().expect("adaptive state has v").as_mut_slice();
            let th = next.params.as_mut_slice();
            for (k, &gk) in g.flatten().iter().enumerate() {
                let g2 = gk * gk;
                m[k] = b1 * m[k] + (1.0 - b1) * gk;
                v[k] = match (state.kind, hyper.literal) {
                    (ServerKind::FedAdagrad, false) => v[k] + g2,
                    (ServerKind::FedAdagrad, true) => g2,
                    (ServerKind::FedYogi, false) => v[k] - (1.0 - b2) * g2 * sign(v[k] - g2),
                    (ServerKind::FedYogi, true) => b2 * v[k] - (1.0 - b2) * g2 * sign(v[k] - g2),
                    (ServerKind::FedAdam, false) => b2 * v[k] + (1.0 - b2) * g2,
                    (ServerKind::FedAdam, true) => b2 * v[k] - (1.0 - b2) * g2,
                    _ => unreachable!(),
                };
                th[k] += dir * lr * m[k] / (v[k].sqrt() + eps);
            }
        }
        ServerKind::FedAvgAdaptive => {
            for (slot, g) in next.per_client.iter_mut().zip(grads) {
                let v = slot.v.as_mut_slice();
                let th = slot.params.as_mut_slice();
                for (k, &gk) in g.flatten().iter().enumerate() {
                    v[k] = b1 * v[k] + (1.0 - b1) * gk * gk;
                    th[k] -= lr * gk / (v[k].sqrt() + eps);
                }
            }
        }
    }
    Ok(next)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
