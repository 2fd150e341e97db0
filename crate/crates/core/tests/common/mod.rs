//! Test-only oracles, independent of the crate's forward/backward code paths.
#![allow(dead_code)]

use plfl::model::{ForecastInput, LstmForecaster, ModelDims, ParamVector};
use plfl::numerics::SimRng;

fn sig(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Scalar LSTM + MLP forecaster written with plain index loops. Reads weights
/// element by element from named groups; shares no code with the model.
pub fn scalar_forecast(dims: &ModelDims, p: &ParamVector, x: &[f64]) -> f64 {
    let hn = dims.hidden;
    let d = dims.input;
    let get = |name: &str, r: usize, c: usize, cols: usize| p.group(name).unwrap()[r * cols + c];
    let mut h = vec![0.0; hn];
    let mut c = vec![0.0; hn];
    let mut hs: Vec<f64> = Vec::new();
    for t in 0..dims.lookback {
        let xt = &x[t * d..(t + 1) * d];
        let mut pre = [vec![0.0; hn], vec![0.0; hn], vec![0.0; hn], vec![0.0; hn]];
        for (k, gate) in ['i', 'f', 'g', 'o'].iter().enumerate() {
            for r in 0..hn {
                let mut s = get(&format!("lstm.b_{gate}"), r, 0, 1);
                for j in 0..d {
                    s += get(&format!("lstm.w_i{gate}"), r, j, d) * xt[j];
                }
                for j in 0..hn {
                    s += get(&format!("lstm.w_h{gate}"), r, j, hn) * h[j];
                }
                pre[k][r] = s;
            }
        }
        let mut h_new = vec![0.0; hn];
        for r in 0..hn {
            let i = sig(pre[0][r]);
            let f = sig(pre[1][r]);
            let g = pre[2][r].tanh();
            let o = sig(pre[3][r]);
            c[r] = f * c[r] + i * g;
            h_new[r] = o * c[r].tanh();
        }
        h = h_new;
        hs.extend_from_slice(&h);
    }
    let mut z = hs;
    let sizes = dims.mlp_layer_inputs();
    for k in 0..sizes.len() {
        let fan_in = sizes[k];
        let fan_out = if k + 1 < sizes.len() { sizes[k + 1] } else { 1 };
        let mut u = vec![0.0; fan_out];
        for r in 0..fan_out {
            let mut s = get(&format!("mlp.{k}.bias"), r, 0, 1);
            for j in 0..fan_in {
                s += get(&format!("mlp.{k}.weight"), r, j, fan_in) * z[j];
            }
            u[r] = s;
        }
        if k + 1 < sizes.len() {
            let a = p.group(&format!("mlp.{k}.prelu")).unwrap()[0];
            z = u.iter().map(|&v| if v > 0.0 { v } else { a * v }).collect();
        } else {
            z = u;
        }
    }
    z[0]
}

/// Random small model, parameters and input window.
pub fn random_case(seed: u64, hidden: usize, lookback: usize, mlp_hidden: Vec<usize>) -> (LstmForecaster, ParamVector, Vec<f64>) {
    let dims = ModelDims {
        input: 4,
        hidden,
        lookback,
        mlp_hidden,
    };
    let model = LstmForecaster::new(dims.clone()).unwrap();
    let mut rng = SimRng::new(seed);
    let mut p = model.init_params(&mut rng).unwrap();
    // widen the weights a little so gates leave their linear regime, and give
    // PReLU slopes a non-default value
    for v in p.as_mut_slice() {
        *v = *v * 1.5 + 0.1 * rng.normal();
    }
    let x: Vec<f64> = (0..lookback * dims.input).map(|_| 2.0 * rng.unit() - 1.0).collect();
    (model, p, x)
}

/// Central finite-difference gradient of `y_hat` w.r.t. every parameter.
pub fn fd_gradient(model: &LstmForecaster, p: &ParamVector, x: &[f64], eps: f64) -> Vec<f64> {
    let width = model.dims().input;
    let mut out = Vec::with_capacity(p.len());
    let mut q = p.clone();
    for k in 0..p.len() {
        let orig = q.flatten()[k];
        q.as_mut_slice()[k] = orig + eps;
        let up = model.predict(&q, ForecastInput::new(x, width).unwrap()).unwrap();
        q.as_mut_slice()[k] = orig - eps;
        let down = model.predict(&q, ForecastInput::new(x, width).unwrap()).unwrap();
        q.as_mut_slice()[k] = orig;
        out.push((up - down) / (2.0 * eps));
    }
    out
}

/// Relative error with a small absolute floor so that exact zeros compare.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(1e-6);
    (a - b).abs() / scale
}

/// Max relative error between analytic and finite-difference gradients.
pub fn gradient_check(seed: u64, hidden: usize, lookback: usize, mlp_hidden: Vec<usize>) -> f64 {
    let (model, p, x) = random_case(seed, hidden, lookback, mlp_hidden);
    let width = model.dims().input;
    let (_, tape) = model.forward(&p, ForecastInput::new(&x, width).unwrap()).unwrap();
    let analytic = model.backward(&p, &tape, 1.0).unwrap();
    let numeric = fd_gradient(&model, &p, &x, 1e-5);
    analytic
        .flatten()
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// Gradient-check configurations: hidden 1..=3, look-back 1, 2, 4, three head shapes.
pub fn gradient_configs() -> Vec<(u64, usize, usize, Vec<usize>)> {
    let mut v = Vec::new();
    let heads: [Vec<usize>; 3] = [vec![], vec![3], vec![4, 3]];
    let mut seed = 100;
    for hidden in [1, 2, 3] {
        for lookback in [1, 2, 4] {
            for head in &heads {
                v.push((seed, hidden, lookback, head.clone()));
                seed += 1;
            }
        }
    }
    v
}

use plfl::client_opt::{ClientHyper, ClientKind};
use plfl::data::{generate_synthetic, split_and_window, ClientSplits, Heterogeneity, SplitSpec, STEPS_PER_WEEK};
use plfl::federation::FederationConfig;
use plfl::model::PartitionScheme;
use plfl::server_opt::{ServerHyper, ServerKind};

pub const FIX_LOOKBACK: usize = 4;
pub const FIX_HORIZON: usize = 2;

/// Small model over the real 8-channel input.
pub fn tiny_model() -> LstmForecaster {
    LstmForecaster::new(ModelDims {
        input: 8,
        hidden: 3,
        lookback: FIX_LOOKBACK,
        mlp_hidden: vec![5],
    })
    .unwrap()
}

/// `n` heterogeneous synthetic clients, two weeks each, windowed for [`tiny_model`].
pub fn fixture_data(n: usize, seed: u64) -> Vec<ClientSplits> {
    let series = generate_synthetic(n, 2 * STEPS_PER_WEEK, &Heterogeneity::default(), &mut SimRng::new(seed)).unwrap();
    series
        .iter()
        .map(|s| split_and_window(s, &SplitSpec::default(), FIX_LOOKBACK, FIX_HORIZON).unwrap())
        .collect()
}

pub fn fixture_cfg(scheme: PartitionScheme, client_kind: ClientKind, server_kind: ServerKind, rounds: usize) -> FederationConfig {
    FederationConfig {
        rounds,
        scheme,
        client_kind,
        client: ClientHyper {
            lr: 5e-3,
            local_steps: 3,
            batch_size: 8,
            alpha: 0.05,
            ..ClientHyper::default()
        },
        server_kind,
        server: ServerHyper {
            lr: 0.5,
            ..ServerHyper::default()
        },
        seed: 99,
        wire_bytes: 4,
        parallel: 1,
        validate: true,
    }
}

use plfl::client_opt::{client_opt_observed, minibatch_gradient, MinibatchSampler, ClientState, PenaltyMask};
use plfl::data::WindowedDataset;

/// Parameters after every local step of one client call.
#[allow(clippy::too_many_arguments)]
pub fn trajectory(
    model: &LstmForecaster,
    kind: ClientKind,
    broadcast: &ParamVector,
    state: &ClientState,
    data: &WindowedDataset,
    h: &ClientHyper,
    mask: &PenaltyMask,
    seed: u64,
) -> Vec<ParamVector> {
    let mut out = Vec::new();
    let mut obs = |_: usize, p: &ParamVector, _: Option<&[f64]>| out.push(p.clone());
    client_opt_observed(model, kind, broadcast, state, data, h, mask, &mut SimRng::new(seed), &mut obs).unwrap();
    out
}

/// Plain SGD on the minibatch squared error, replaying the same batches.
pub fn sgd_reference(model: &LstmForecaster, start: &ParamVector, data: &WindowedDataset, h: &ClientHyper, seed: u64) -> Vec<ParamVector> {
    let mut rng = SimRng::new(seed);
    let mut sampler = MinibatchSampler::new(data.len(), &mut rng);
    let mut theta = start.clone();
    let mut grad = ParamVector::zeros(start.schema().clone());
    let mut out = Vec::new();
    for _ in 0..h.local_steps {
        let batch = sampler.next_batch(h.batch_size, &mut rng);
        minibatch_gradient(model, &theta, data, &batch, &mut grad).unwrap();
        theta.axpy(-h.lr, &grad).unwrap();
        out.push(theta.clone());
    }
    out
}

/// Textbook Adam with bias correction from a fresh start.
pub fn adam_reference(model: &LstmForecaster, start: &ParamVector, data: &WindowedDataset, h: &ClientHyper, seed: u64) -> Vec<ParamVector> {
    let mut rng = SimRng::new(seed);
    let mut sampler = MinibatchSampler::new(data.len(), &mut rng);
    let mut theta = start.clone();
    let mut grad = ParamVector::zeros(start.schema().clone());
    let n = start.len();
    let (mut m, mut v) = (vec![0.0f64; n], vec![0.0f64; n]);
    let mut out = Vec::new();
    for t in 1..=h.local_steps {
        let batch = sampler.next_batch(h.batch_size, &mut rng);
        minibatch_gradient(model, &theta, data, &batch, &mut grad).unwrap();
        for k in 0..n {
            let g = grad.flatten()[k];
            m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g;
            v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g * g;
            let mh = m[k] / (1.0 - h.beta1.powi(t as i32));
            let vh = v[k] / (1.0 - h.beta2.powi(t as i32));
            theta.as_mut_slice()[k] -= h.lr * mh / (vh.sqrt() + h.eps);
        }
        out.push(theta.clone());
    }
    out
}

