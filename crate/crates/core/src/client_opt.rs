//! Local client training: Adam, AdamAMS, Prox and ProxAdam.
//!
//! Every call starts from freshly zeroed moments, runs `local_steps`
//! minibatch steps and returns the pseudo-gradient `θ_start − θ_end`.
//! Bias correction uses the local step index, since moments restart at zero
//! on each call.

use serde::{Deserialize, Serialize};

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::model::{LstmForecaster, ParamVector, PartitionScheme, Schema};
use crate::numerics::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClientKind {
    Adam,
    #[serde(alias = "amsgrad", alias = "adam_ams")]
    AdamAms,
    Prox,
    #[serde(alias = "prox_adam")]
    ProxAdam,
}

impl ClientKind {
    pub const ALL: [ClientKind; 4] = [
        ClientKind::Adam,
        ClientKind::AdamAms,
        ClientKind::Prox,
        ClientKind::ProxAdam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClientKind::Adam => "adam",
            ClientKind::AdamAms => "adamams",
            ClientKind::Prox => "prox",
            ClientKind::ProxAdam => "proxadam",
        }
    }

    /// Whether this kind keeps first/second moments in its state.
    pub fn is_adaptive(self) -> bool {
        !matches!(self, ClientKind::Prox)
    }

    pub fn is_proximal(self) -> bool {
        matches!(self, ClientKind::Prox | ClientKind::ProxAdam)
    }

    /// AdamAMS and ProxAdam continue from the client's own parameters;
    /// Adam and Prox start from what the server broadcast.
    pub fn starts_from_local(self) -> bool {
        matches!(self, ClientKind::AdamAms | ClientKind::ProxAdam)
    }
}

impl std::fmt::Display for ClientKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ClientKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClientKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown client optimizer `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Proximal weight α in `α‖θ − θ_broadcast‖²`.
    pub alpha: f64,
    /// Optimizer steps per call (one minibatch each).
    pub local_steps: usize,
    pub batch_size: usize,
}

impl Default for ClientHyper {
    fn default() -> Self {
        ClientHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            alpha: 0.01,
            local_steps: 10,
            batch_size: 16,
        }
    }
}

impl ClientHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.alpha >= 0.0
            && self.local_steps >= 1
            && self.batch_size >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid client hyperparameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: ParamVector,
    pub v: ParamVector,
}

/// What a client keeps between rounds: `{θ}` for Prox, `{θ, m, v}` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub kind: ClientKind,
    pub params: ParamVector,
    pub moments: Option<Moments>,
    /// Total local steps taken so far.
    pub steps: u64,
}

impl ClientState {
    pub fn new(kind: ClientKind, params: ParamVector) -> Self {
        let moments = kind.is_adaptive().then(|| Moments {
            m: ParamVector::zeros(params.schema().clone()),
            v: ParamVector::zeros(params.schema().clone()),
        });
        ClientState {
            kind,
            params,
            moments,
            steps: 0,
        }
    }
}

/// Groups that carry the proximal penalty: the shared ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PenaltyMask {
    names: Vec<String>,
    ranges: Vec<std::ops::Range<usize>>,
}

impl PenaltyMask {
    pub fn all(schema: &Schema) -> Self {
        PenaltyMask {
            names: schema.groups().iter().map(|g| g.name.clone()).collect(),
            ranges: schema.groups().iter().map(|g| g.range()).collect(),
        }
    }

    pub fn groups(&self) -> Vec<&str> {
        self.names.iter().map(String::as_str).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Penalty mask for personalized training: only shared groups are pulled
/// towards the broadcast.
pub fn proximal_penalty_mask(scheme: &PartitionScheme, schema: &Schema) -> Result<PenaltyMask> {
    let flags = scheme.shared_mask(schema)?;
    let picked: Vec<_> = schema
        .groups()
        .iter()
        .zip(flags)
        .filter(|(_, shared)| *shared)
        .map(|(g, _)| g)
        .collect();
    Ok(PenaltyMask {
        names: picked.iter().map(|g| g.name.clone()).collect(),
        ranges: picked.iter().map(|g| g.range()).collect(),
    })
}

/// Minibatches drawn without replacement from a shuffled permutation of the
/// window indices; the permutation is redrawn when used up.
#[derive(Debug, Clone)]
pub struct MinibatchSampler {
    order: Vec<usize>,
    pos: usize,
}

impl MinibatchSampler {
    pub fn new(n: usize, rng: &mut SimRng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        MinibatchSampler { order, pos: 0 }
    }

    /// Next `min(batch, n)` indices.
    pub fn next_batch(&mut self, batch: usize, rng: &mut SimRng) -> Vec<usize> {
        let b = batch.min(self.order.len());
        let mut out = Vec::with_capacity(b);
        while out.len() < b {
            if self.pos == self.order.len() {
                rng.shuffle(&mut self.order);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Hook called after every local step, mainly for tests.
pub trait StepObserver {
    fn on_step(&mut self, step: usize, params: &ParamVector, v_max: Option<&[f64]>);
}

impl<F: FnMut(usize, &ParamVector, Option<&[f64]>)> StepObserver for F {
    fn on_step(&mut self, step: usize, params: &ParamVector, v_max: Option<&[f64]>) {
        self(step, params, v_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub state: ClientState,
    /// `θ_{t,0} − θ_{t,T_c}`.
    pub pseudo_grad: ParamVector,
    /// Mean minibatch squared error over the local steps (normalized units).
    pub mean_loss: f64,
}

/// Mean squared-error gradient over a minibatch; returns the batch loss.
pub fn minibatch_gradient(
    model: &LstmForecaster,
    params: &ParamVector,
    data: &WindowedDataset,
    batch: &[usize],
    grad: &mut ParamVector,
) -> Result<f64> {
    grad.as_mut_slice().fill(0.0);
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for &i in batch {
        let (y_hat, tape) = model.forward(params, data.input(i))?;
        let r = y_hat - data.target(i);
        loss += r * r;
        model.backward_acc(params, &tape, 2.0 * r * scale, grad)?;
    }
    Ok(loss * scale)
}

#[allow(clippy::too_many_arguments)]
pub fn client_opt(
    model: &LstmForecaster,
    kind: ClientKind,
    broadcast: &ParamVector,
    state: &ClientState,
    data: &WindowedDataset,
    hyper: &ClientHyper,
    mask: &PenaltyMask,
    rng: &mut SimRng,
) -> Result<ClientUpdate> {
    client_opt_observed(model, kind, broadcast, state, data, hyper, mask, rng, &mut |_: usize, _: &ParamVector, _: Option<&[f64]>| {})
}

#[allow(clippy::too_many_arguments)]
pub fn client_opt_observed(
    model: &LstmForecaster,
    kind: ClientKind,
    broadcast: &ParamVector,
    state: &ClientState,
    data: &WindowedDataset,
    hyper: &ClientHyper,
    mask: &PenaltyMask,
    rng: &mut SimRng,
    observer: &mut dyn StepObserver,
) -> Result<ClientUpdate> {
    hyper.validate()?;
    if broadcast.schema().as_ref() != model.schema().as_ref() {
        return Err(Error::SchemaMismatch("broadcast does not match the model schema".into()));
    }
    state.params.check_schema(broadcast)?;
    if state.kind != kind {
        return Err(Error::invalid(format!(
            "client state holds {} contents, optimizer is {kind}",
            state.kind
        )));
    }
    if data.is_empty() {
        return Err(Error::Empty("client training set"));
    }

    let start = if kind.starts_from_local() {
        state.params.clone()
    } else {
        broadcast.clone()
    };
    let mut theta = start.clone();
    let schema = theta.schema().clone();
    let n = theta.len();
    let mut grad = ParamVector::zeros(schema.clone());
    let (mut m, mut v): (Vec<f64>, Vec<f64>) = (vec![0.0; n], vec![0.0; n]);
    let mut v_max: Vec<f64> = vec![0.0; n];
    let mut sampler = MinibatchSampler::new(data.len(), rng);
    let apply_penalty = kind.is_proximal() && hyper.alpha != 0.0;
    let mut loss_sum = 0.0;

    for step in 1..=hyper.local_steps {
        let batch = sampler.next_batch(hyper.batch_size, rng);
        loss_sum += minibatch_gradient(model, &theta, data, &batch, &mut grad)?;
        if apply_penalty {
            let (g, th, b) = (grad.as_mut_slice(), theta.flatten(), broadcast.flatten());
            for r in &mask.ranges {
                for k in r.clone() {
                    g[k] += 2.0 * hyper.alpha * (th[k] - b[k]);
                }
            }
        }
        let g = grad.flatten();
        let th = theta.as_mut_slice();
        match kind {
            ClientKind::Prox => {
                for k in 0..n {
                    th[k] -= hyper.lr * g[k];
                }
            }
            ClientKind::Adam | ClientKind::ProxAdam | ClientKind::AdamAms => {
                let bc1 = 1.0 - hyper.beta1.powi(step as i32);
                let bc2 = 1.0 - hyper.beta2.powi(step as i32);
                let ams = kind == ClientKind::AdamAms;
                for k in 0..n {
                    m[k] = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * g[k];
                    v[k] = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * g[k] * g[k];
                    let m_hat = m[k] / bc1;
                    let v_hat = v[k] / bc2;
                    let denom = if ams {
                        v_max[k] = v_max[k].max(v_hat);
                        v_max[k].sqrt() + hyper.eps
                    } else {
                        v_hat.sqrt() + hyper.eps
                    };
                    th[k] -= hyper.lr * m_hat / denom;
                }
            }
        }
        let vm = (kind == ClientKind::AdamAms).then_some(v_max.as_slice());
        observer.on_step(step, &theta, vm);
    }

    let pseudo_grad = start.sub(&theta)?;
    let moments = kind.is_adaptive().then(|| Moments {
        m: ParamVector::from_flat(schema.clone(), m).expect("moment length matches schema"),
        v: ParamVector::from_flat(schema.clone(), v).expect("moment length matches schema"),
    });
    Ok(ClientUpdate {
        state: ClientState {
            kind,
            params: theta,
            moments,
            steps: state.steps + hyper.local_steps as u64,
        },
        pseudo_grad,
        mean_loss: loss_sum / hyper.local_steps as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDims;

    fn schema() -> LstmForecaster {
        LstmForecaster::new(ModelDims {
            input: 8,
            hidden: 2,
            lookback: 3,
            mlp_hidden: vec![3],
        })
        .unwrap()
    }

    #[test]
    fn penalty_masks_follow_the_scheme() {
        let model = schema();
        let s = model.schema();
        assert_eq!(proximal_penalty_mask(&PartitionScheme::P1, s).unwrap().groups().len(), s.groups().len());
        assert!(proximal_penalty_mask(&PartitionScheme::P3, s).unwrap().is_empty());
        let p2 = proximal_penalty_mask(&PartitionScheme::P2, s).unwrap();
        assert_eq!(p2.groups().len(), 12);
        assert!(p2.groups().iter().all(|g| g.starts_with("lstm.")));
        assert_eq!(PenaltyMask::all(s), proximal_penalty_mask(&PartitionScheme::P1, s).unwrap());
    }

    #[test]
    fn sampler_covers_every_index_before_repeating() {
        let mut rng = SimRng::new(3);
        let mut s = MinibatchSampler::new(10, &mut rng);
        let mut seen: Vec<usize> = Vec::new();
        for _ in 0..2 {
            seen.extend(s.next_batch(5, &mut rng));
        }
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        // batch larger than the data is capped
        assert_eq!(s.next_batch(50, &mut rng).len(), 10);
    }

    #[test]
    fn hyper_validation() {
        assert!(ClientHyper::default().validate().is_ok());
        for bad in [
            ClientHyper { lr: 0.0, ..Default::default() },
            ClientHyper { beta1: 1.0, ..Default::default() },
            ClientHyper { beta2: -0.1, ..Default::default() },
            ClientHyper { eps: 0.0, ..Default::default() },
            ClientHyper { alpha: -1.0, ..Default::default() },
            ClientHyper { local_steps: 0, ..Default::default() },
            ClientHyper { batch_size: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn state_contents_match_kind() {
        let model = schema();
        let p = ParamVector::zeros(model.schema().clone());
        assert!(ClientState::new(ClientKind::Prox, p.clone()).moments.is_none());
        for k in [ClientKind::Adam, ClientKind::AdamAms, ClientKind::ProxAdam] {
            assert!(ClientState::new(k, p.clone()).moments.is_some());
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ClientKind::ALL {
            assert_eq!(k.name().parse::<ClientKind>().unwrap(), k);
        }
        assert!("sgd".parse::<ClientKind>().is_err());
    }
}
