use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ParamVector, Schema, PRELU_INIT};
use crate::error::{Error, Result};
use crate::numerics::{kernels, sigmoid, SimRng};

const GATES: [char; 4] = ['i', 'f', 'g', 'o'];

/// Model dimensions. `input` is `1 + d` (load plus exogenous features).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input: usize,
    pub hidden: usize,
    pub lookback: usize,
    /// Widths of the MLP hidden layers; the head's first layer input is
    /// `lookback * hidden` and its last layer outputs one scalar.
    pub mlp_hidden: Vec<usize>,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            input: 8,
            hidden: 25,
            lookback: 12,
            mlp_hidden: vec![150, 75],
        }
    }
}

impl ModelDims {
    /// Layer input sizes of the MLP head, e.g. `[300, 150, 75]` by default.
    pub fn mlp_layer_inputs(&self) -> Vec<usize> {
        let mut v = vec![self.lookback * self.hidden];
        v.extend_from_slice(&self.mlp_hidden);
        v
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.hidden == 0 || self.lookback == 0 {
            return Err(Error::invalid(format!("degenerate model dims {self:?}")));
        }
        if self.mlp_hidden.contains(&0) {
            return Err(Error::invalid("MLP hidden widths must be positive"));
        }
        Ok(())
    }
}

/// Borrowed view of the twelve LSTM cell tensors, gates ordered `i, f, g, o`.
#[derive(Debug, Clone, Copy)]
pub struct LstmCellParams<'a> {
    pub hidden: usize,
    pub input: usize,
    pub w_input: [&'a [f64]; 4],
    pub w_hidden: [&'a [f64]; 4],
    pub bias: [&'a [f64]; 4],
}

impl<'a> LstmCellParams<'a> {
    pub fn new(
        hidden: usize,
        input: usize,
        w_input: [&'a [f64]; 4],
        w_hidden: [&'a [f64]; 4],
        bias: [&'a [f64]; 4],
    ) -> Result<Self> {
        for k in 0..4 {
            if w_input[k].len() != hidden * input
                || w_hidden[k].len() != hidden * hidden
                || bias[k].len() != hidden
            {
                return Err(Error::ShapeMismatch {
                    op: "lstm cell params",
                    left: (hidden, input),
                    right: (w_input[k].len(), w_hidden[k].len()),
                });
            }
        }
        Ok(LstmCellParams {
            hidden,
            input,
            w_input,
            w_hidden,
            bias,
        })
    }
}

/// Intermediates of one cell step, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GateCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

impl GateCache {
    pub fn h(&self) -> Vec<f64> {
        self.o.iter().zip(&self.tanh_c).map(|(o, t)| o * t).collect()
    }
}

/// One LSTM cell step. Returns `(h_t, c_t, cache)`.
pub fn lstm_cell_forward(
    p: &LstmCellParams<'_>,
    h_prev: &[f64],
    c_prev: &[f64],
    x: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, GateCache)> {
    let n = p.hidden;
    if h_prev.len() != n || c_prev.len() != n || x.len() != p.input {
        return Err(Error::ShapeMismatch {
            op: "lstm_cell_forward",
            left: (n, p.input),
            right: (h_prev.len(), x.len()),
        });
    }
    let mut pre: [Vec<f64>; 4] = Default::default();
    for k in 0..4 {
        let mut a = p.bias[k].to_vec();
        kernels::matvec_acc(p.w_input[k], n, p.input, x, &mut a);
        kernels::matvec_acc(p.w_hidden[k], n, n, h_prev, &mut a);
        pre[k] = a;
    }
    let [ai, af, ag, ao] = pre;
    let i: Vec<f64> = ai.into_iter().map(sigmoid).collect();
    let f: Vec<f64> = af.into_iter().map(sigmoid).collect();
    let g: Vec<f64> = ag.into_iter().map(f64::tanh).collect();
    let o: Vec<f64> = ao.into_iter().map(sigmoid).collect();
    let c: Vec<f64> = (0..n).map(|j| f[j] * c_prev[j] + i[j] * g[j]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = (0..n).map(|j| o[j] * tanh_c[j]).collect();
    let cache = GateCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        g,
        o,
        c: c.clone(),
        tanh_c,
    };
    Ok((h, c, cache))
}

/// `T` consecutive input vectors `[y_t; z_t]`, stored row-major.
#[derive(Debug, Clone, Copy)]
pub struct ForecastInput<'a> {
    data: &'a [f64],
    width: usize,
}

impl<'a> ForecastInput<'a> {
    pub fn new(data: &'a [f64], width: usize) -> Result<Self> {
        if width == 0 || data.len() % width != 0 {
            return Err(Error::ShapeMismatch {
                op: "forecast input",
                left: (data.len(), 1),
                right: (width, 1),
            });
        }
        Ok(ForecastInput { data, width })
    }

    pub fn steps(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn step(&self, t: usize) -> &'a [f64] {
        &self.data[t * self.width..(t + 1) * self.width]
    }
}

/// Everything the backward pass needs from one forward call.
#[derive(Debug, Clone)]
pub struct Tape {
    schema: Arc<Schema>,
    cells: Vec<GateCache>,
    /// Input to each MLP layer; `layer_inputs[0]` is `[h_1; ...; h_T]`.
    layer_inputs: Vec<Vec<f64>>,
    /// Pre-activations of each hidden MLP layer (before PReLU).
    hidden_pre: Vec<Vec<f64>>,
    y_hat: f64,
}

impl Tape {
    pub fn cells(&self) -> &[GateCache] {
        &self.cells
    }

    pub fn y_hat(&self) -> f64 {
        self.y_hat
    }
}

#[derive(Debug, Clone)]
struct LayerIdx {
    weight: usize,
    bias: usize,
    prelu: Option<usize>,
    fan_in: usize,
    fan_out: usize,
}

/// The forecaster: fixed dims plus the group layout it reads from a
/// [`ParamVector`]. Stateless otherwise; parameters are passed per call.
#[derive(Debug, Clone)]
pub struct LstmForecaster {
    dims: ModelDims,
    schema: Arc<Schema>,
    /// Group indices `[w_i*, w_h*, b_*]` per gate.
    gates: [[usize; 3]; 4],
    layers: Vec<LayerIdx>,
}

impl LstmForecaster {
    pub fn new(dims: ModelDims) -> Result<Self> {
        dims.validate()?;
        let (h, d) = (dims.hidden, dims.input);
        let mut groups: Vec<(String, usize, usize)> = Vec::new();
        for gate in GATES {
            groups.push((format!("lstm.w_i{gate}"), h, d));
            groups.push((format!("lstm.w_h{gate}"), h, h));
            groups.push((format!("lstm.b_{gate}"), h, 1));
        }
        let inputs = dims.mlp_layer_inputs();
        let n_layers = inputs.len();
        let mut layers = Vec::with_capacity(n_layers);
        for (k, &fan_in) in inputs.iter().enumerate() {
            let fan_out = if k + 1 < n_layers { inputs[k + 1] } else { 1 };
            let weight = groups.len();
            groups.push((format!("mlp.{k}.weight"), fan_out, fan_in));
            groups.push((format!("mlp.{k}.bias"), fan_out, 1));
            let prelu = if k + 1 < n_layers {
                groups.push((format!("mlp.{k}.prelu"), 1, 1));
                Some(weight + 2)
            } else {
                None
            };
            layers.push(LayerIdx {
                weight,
                bias: weight + 1,
                prelu,
                fan_in,
                fan_out,
            });
        }
        let mut gates = [[0usize; 3]; 4];
        for (k, g) in gates.iter_mut().enumerate() {
            *g = [3 * k, 3 * k + 1, 3 * k + 2];
        }
        Ok(LstmForecaster {
            dims,
            schema: Arc::new(Schema::new(groups)?),
            gates,
            layers,
        })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn param_count(&self) -> usize {
        self.schema.total_len()
    }

    /// Number of elements in the LSTM cell groups.
    pub fn lstm_param_count(&self) -> usize {
        self.schema
            .groups()
            .iter()
            .filter(|g| g.name.starts_with(super::LSTM_PREFIX))
            .map(|g| g.len())
            .sum()
    }

    fn slice<'p>(&self, params: &'p ParamVector, idx: usize) -> &'p [f64] {
        &params.flatten()[self.schema.groups()[idx].range()]
    }

    pub fn cell_params<'p>(&self, params: &'p ParamVector) -> Result<LstmCellParams<'p>> {
        self.check(params)?;
        let pick = |j: usize| -> [&'p [f64]; 4] {
            [0, 1, 2, 3].map(|k| self.slice(params, self.gates[k][j]))
        };
        LstmCellParams::new(self.dims.hidden, self.dims.input, pick(0), pick(1), pick(2))
    }

    fn check(&self, params: &ParamVector) -> Result<()> {
        if params.schema().as_ref() != self.schema.as_ref() {
            return Err(Error::SchemaMismatch(
                "parameter vector does not match the model schema".into(),
            ));
        }
        Ok(())
    }

    /// Uniform fan-in initialization: `±1/√hidden` for the LSTM cell,
    /// `±1/√fan_in` for MLP layers, PReLU slopes at 0.25.
    pub fn init_params(&self, rng: &mut SimRng) -> Result<ParamVector> {
        let mut data = Vec::with_capacity(self.schema.total_len());
        for g in self.schema.groups() {
            if g.name.ends_with(".prelu") {
                data.push(PRELU_INIT);
                continue;
            }
            let bound = if g.name.starts_with(super::LSTM_PREFIX) {
                1.0 / (self.dims.hidden as f64).sqrt()
            } else {
                let layer = self
                    .layers
                    .iter()
                    .find(|l| {
                        self.schema.groups()[l.weight].name == g.name
                            || self.schema.groups()[l.bias].name == g.name
                    })
                    .expect("every MLP group belongs to a layer");
                1.0 / (layer.fan_in as f64).sqrt()
            };
            let t = rng.sample_uniform(-bound, bound, (g.rows, g.cols))?;
            data.extend_from_slice(t.as_slice());
        }
        ParamVector::from_flat(self.schema.clone(), data)
    }

    /// Forecast for one window. Rolls the cell from `h_0 = c_0 = 0`, feeds
    /// `[h_1; ...; h_T]` through the MLP, returns the scalar and the tape.
    pub fn forward(&self, params: &ParamVector, input: ForecastInput<'_>) -> Result<(f64, Tape)> {
        let cell = self.cell_params(params)?;
        if input.steps() != self.dims.lookback || input.width() != self.dims.input {
            return Err(Error::ShapeMismatch {
                op: "forward",
                left: (self.dims.lookback, self.dims.input),
                right: (input.steps(), input.width()),
            });
        }
        let n = self.dims.hidden;
        let mut h = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut cells = Vec::with_capacity(self.dims.lookback);
        let mut concat = Vec::with_capacity(self.dims.lookback * n);
        for t in 0..self.dims.lookback {
            let (h_next, c_next, cache) = lstm_cell_forward(&cell, &h, &c, input.step(t))?;
            concat.extend_from_slice(&h_next);
            cells.push(cache);
            h = h_next;
            c = c_next;
        }

        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut hidden_pre = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let mut z = concat;
        for layer in &self.layers {
            let mut u = self.slice(params, layer.bias).to_vec();
            kernels::matvec_acc(
                self.slice(params, layer.weight),
                layer.fan_out,
                layer.fan_in,
                &z,
                &mut u,
            );
            layer_inputs.push(z);
            z = match layer.prelu {
                Some(p) => {
                    let a = self.slice(params, p)[0];
                    let act = u.iter().map(|&v| if v > 0.0 { v } else { a * v }).collect();
                    hidden_pre.push(u);
                    act
                }
                None => u,
            };
        }
        let y_hat = z[0];
        Ok((
            y_hat,
            Tape {
                schema: self.schema.clone(),
                cells,
                layer_inputs,
                hidden_pre,
                y_hat,
            },
        ))
    }

    /// Forecast without keeping the tape around.
    pub fn predict(&self, params: &ParamVector, input: ForecastInput<'_>) -> Result<f64> {
        self.forward(params, input).map(|(y, _)| y)
    }

    /// Gradient of `y_hat` with respect to every parameter, scaled by `dl_dyhat`.
    pub fn backward(&self, params: &ParamVector, tape: &Tape, dl_dyhat: f64) -> Result<ParamVector> {
        let mut grad = ParamVector::zeros(self.schema.clone());
        self.backward_acc(params, tape, dl_dyhat, &mut grad)?;
        Ok(grad)
    }

    /// Like [`backward`](Self::backward) but adds into `grad`.
    pub fn backward_acc(
        &self,
        params: &ParamVector,
        tape: &Tape,
        dl_dyhat: f64,
        grad: &mut ParamVector,
    ) -> Result<()> {
        self.check(params)?;
        self.check(grad)?;
        if tape.schema.as_ref() != self.schema.as_ref() || tape.cells.len() != self.dims.lookback {
            return Err(Error::SchemaMismatch("tape was not produced by this model".into()));
        }
        if dl_dyhat == 0.0 {
            return Ok(());
        }
        let groups = self.schema.groups();
        let ranges: Vec<_> = groups.iter().map(|g| g.range()).collect();
        let p = params.flatten();
        let gbuf = grad.as_mut_slice();

        // MLP head, last layer first
        let mut du = vec![dl_dyhat];
        let mut dz = Vec::new();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let z = &tape.layer_inputs[k];
            kernels::outer_acc(&mut gbuf[ranges[layer.weight].clone()], &du, z);
            kernels::axpy(1.0, &du, &mut gbuf[ranges[layer.bias].clone()]);
            dz = vec![0.0; layer.fan_in];
            kernels::matvec_t_acc(&p[ranges[layer.weight].clone()], layer.fan_out, layer.fan_in, &du, &mut dz);
            if k > 0 {
                // z = prelu(u_{k-1}) with slope a_{k-1}
                let prev = &self.layers[k - 1];
                let pi = prev.prelu.expect("hidden layers carry a slope");
                let a = p[ranges[pi].start];
                let u = &tape.hidden_pre[k - 1];
                let mut da = 0.0;
                let mut du_prev = vec![0.0; u.len()];
                for j in 0..u.len() {
                    if u[j] > 0.0 {
                        du_prev[j] = dz[j];
                    } else {
                        du_prev[j] = a * dz[j];
                        da += dz[j] * u[j];
                    }
                }
                gbuf[ranges[pi].start] += da;
                du = du_prev;
            }
        }

        // backprop through time; dz now holds d/d[h_1..h_T]
        let n = self.dims.hidden;
        let d_in = self.dims.input;
        let mut dh_next = vec![0.0; n];
        let mut dc_next = vec![0.0; n];
        let mut da = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for t in (0..self.dims.lookback).rev() {
            let cache = &tape.cells[t];
            let dh: Vec<f64> = (0..n).map(|j| dz[t * n + j] + dh_next[j]).collect();
            let mut dc_prev = vec![0.0; n];
            for j in 0..n {
                let (i, f, g, o, tc) = (cache.i[j], cache.f[j], cache.g[j], cache.o[j], cache.tanh_c[j]);
                let d_o = dh[j] * tc;
                let dc = dc_next[j] + dh[j] * o * (1.0 - tc * tc);
                let d_i = dc * g;
                let d_g = dc * i;
                let d_f = dc * cache.c_prev[j];
                dc_prev[j] = dc * f;
                da[0][j] = d_i * i * (1.0 - i);
                da[1][j] = d_f * f * (1.0 - f);
                da[2][j] = d_g * (1.0 - g * g);
                da[3][j] = d_o * o * (1.0 - o);
            }
            let mut dh_prev = vec![0.0; n];
            for (k, idx) in self.gates.iter().enumerate() {
                kernels::outer_acc(&mut gbuf[ranges[idx[0]].clone()], &da[k], &cache.x);
                kernels::outer_acc(&mut gbuf[ranges[idx[1]].clone()], &da[k], &cache.h_prev);
                kernels::axpy(1.0, &da[k], &mut gbuf[ranges[idx[2]].clone()]);
                kernels::matvec_t_acc(&p[ranges[idx[1]].clone()], n, n, &da[k], &mut dh_prev);
            }
            debug_assert_eq!(cache.x.len(), d_in);
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        Ok(())
    }
}
