mod common;

use plfl::model::{ForecastInput, LstmCellParams, LstmForecaster, ModelDims, ParamVector, PartitionScheme, Tag};
use plfl::model::lstm_cell_forward;
use plfl::numerics::SimRng;
use proptest::prelude::*;
use std::collections::BTreeMap;

fn tiny(hidden: usize, lookback: usize, mlp_hidden: Vec<usize>) -> LstmForecaster {
    LstmForecaster::new(ModelDims {
        input: 3,
        hidden,
        lookback,
        mlp_hidden,
    })
    .unwrap()
}

#[test]
fn default_dims_parameter_count() {
    // independent enumeration of every tensor shape
    let (h, d, t) = (25usize, 8usize, 12usize);
    let lstm: usize = 4 * (h * d + h * h + h);
    let layers = [(t * h, 150), (150, 75), (75, 1)];
    let mlp: usize = layers.iter().map(|(i, o)| i * o + o).sum::<usize>() + 2;
    assert_eq!(lstm, 3_400);
    assert_eq!(mlp, 56_553);

    let model = LstmForecaster::new(ModelDims::default()).unwrap();
    assert_eq!(model.dims().mlp_layer_inputs(), vec![300, 150, 75]);
    assert_eq!(model.param_count(), 59_953);
    assert_eq!(model.lstm_param_count(), 3_400);
    assert_eq!(model.param_count(), lstm + mlp);
}

#[test]
fn init_is_deterministic_and_bounded() {
    let model = LstmForecaster::new(ModelDims::default()).unwrap();
    let a = model.init_params(&mut SimRng::new(11)).unwrap();
    let b = model.init_params(&mut SimRng::new(11)).unwrap();
    assert!(a.bit_eq(&b));
    let lstm_bound = 1.0 / 5.0;
    for g in model.schema().groups() {
        let vals = a.group(&g.name).unwrap();
        if g.name.ends_with(".prelu") {
            assert_eq!(vals, &[0.25]);
        } else if g.name.starts_with("lstm.") {
            assert!(vals.iter().all(|v| v.abs() <= lstm_bound), "{}", g.name);
        } else {
            let fan_in = if g.name.starts_with("mlp.0") { 300.0 } else if g.name.starts_with("mlp.1") { 150.0 } else { 75.0f64 };
            assert!(vals.iter().all(|v| v.abs() <= 1.0 / fan_in.sqrt()), "{}", g.name);
        }
    }
    let c = model.init_params(&mut SimRng::new(12)).unwrap();
    assert!(!a.bit_eq(&c));
}

#[test]
fn p2_shares_exactly_the_lstm_cell() {
    let model = LstmForecaster::new(ModelDims::default()).unwrap();
    let p = model.init_params(&mut SimRng::new(1)).unwrap();
    let (sh, pe) = p.split(&PartitionScheme::P2).unwrap();
    assert_eq!(sh.len(), 3_400);
    assert_eq!(pe.len(), 56_553);
    assert!(sh.schema().groups().iter().all(|g| g.name.starts_with("lstm.")));
    assert!(pe.schema().groups().iter().all(|g| g.name.starts_with("mlp.")));

    let (sh, pe) = p.split(&PartitionScheme::P1).unwrap();
    assert_eq!((sh.len(), pe.len()), (59_953, 0));
    let (sh, pe) = p.split(&PartitionScheme::P3).unwrap();
    assert_eq!((sh.len(), pe.len()), (0, 59_953));
}

#[test]
fn custom_scheme_must_cover_every_group() {
    let model = tiny(2, 2, vec![3]);
    let p = ParamVector::zeros(model.schema().clone());
    let mut map = BTreeMap::new();
    map.insert("lstm.w_ii".to_string(), Tag::Shared);
    assert!(p.split(&PartitionScheme::Custom(map.clone())).is_err());
    for g in model.schema().groups() {
        map.insert(g.name.clone(), Tag::Personalized);
    }
    map.insert("not.a.group".into(), Tag::Shared);
    assert!(p.split(&PartitionScheme::Custom(map)).is_err());
}

#[test]
fn zero_cell_examples() {
    let z = vec![0.0; 2 * 3];
    let zh = vec![0.0; 4];
    let zb = vec![0.0; 2];
    let p = LstmCellParams::new(2, 3, [&z, &z, &z, &z], [&zh, &zh, &zh, &zh], [&zb, &zb, &zb, &zb]).unwrap();
    let c_prev = [0.8, -2.0];
    let (h, c, cache) = lstm_cell_forward(&p, &[0.3, 0.1], &c_prev, &[1.0, 2.0, 3.0]).unwrap();
    for j in 0..2 {
        assert_eq!(cache.i[j], 0.5);
        assert_eq!(cache.f[j], 0.5);
        assert_eq!(cache.o[j], 0.5);
        assert_eq!(cache.g[j], 0.0);
        assert_eq!(c[j], 0.5 * c_prev[j]);
        assert_eq!(h[j], 0.5 * (0.5 * c_prev[j]).tanh());
    }
    let (h, c, _) = lstm_cell_forward(&p, &[0.3, 0.1], &[0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap();
    assert_eq!((h, c), (vec![0.0, 0.0], vec![0.0, 0.0]));
    assert!(lstm_cell_forward(&p, &[0.0], &[0.0, 0.0], &[1.0, 2.0, 3.0]).is_err());
}

#[test]
fn cell_matches_scalar_reference() {
    // hidden 2, input 3, one step through the full model with lookback 1
    let (model, p, x) = common::random_case(7, 2, 1, vec![]);
    let cell = model.cell_params(&p).unwrap();
    let h0 = [0.2, -0.4];
    let c0 = [0.5, 0.1];
    let (h, c, _) = lstm_cell_forward(&cell, &h0, &c0, &x).unwrap();
    // scalar cell, written out
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let d = model.dims().input;
    for r in 0..2 {
        let pre = |gate: char| {
            let mut s = p.group(&format!("lstm.b_{gate}")).unwrap()[r];
            for j in 0..d {
                s += p.group(&format!("lstm.w_i{gate}")).unwrap()[r * d + j] * x[j];
            }
            for j in 0..2 {
                s += p.group(&format!("lstm.w_h{gate}")).unwrap()[r * 2 + j] * h0[j];
            }
            s
        };
        let cr = sig(pre('f')) * c0[r] + sig(pre('i')) * pre('g').tanh();
        let hr = sig(pre('o')) * cr.tanh();
        assert!((c[r] - cr).abs() < 1e-12);
        assert!((h[r] - hr).abs() < 1e-12);
    }
}

#[test]
fn forward_matches_scalar_reference() {
    for seed in 0..5 {
        let (model, p, x) = common::random_case(seed, 2, 3, vec![4, 3]);
        let y = model.predict(&p, ForecastInput::new(&x, 4).unwrap()).unwrap();
        let y_ref = common::scalar_forecast(model.dims(), &p, &x);
        assert!((y - y_ref).abs() < 1e-12, "seed {seed}: {y} vs {y_ref}");
    }
}

#[test]
fn zero_params_forecast_zero() {
    let model = tiny(3, 4, vec![5]);
    let p = ParamVector::zeros(model.schema().clone());
    let x: Vec<f64> = (0..12).map(|k| k as f64 * 0.7 - 3.0).collect();
    let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    assert_eq!(model.predict(&p, ForecastInput::new(&x, 3).unwrap()).unwrap(), 0.0);
    assert_eq!(model.predict(&p, ForecastInput::new(&x2, 3).unwrap()).unwrap(), 0.0);
}

#[test]
fn forward_is_pure() {
    let (model, p, x) = common::random_case(3, 3, 4, vec![3]);
    let a = model.predict(&p, ForecastInput::new(&x, 4).unwrap()).unwrap();
    let b = model.predict(&p, ForecastInput::new(&x, 4).unwrap()).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn forward_rejects_wrong_window() {
    let (model, p, x) = common::random_case(3, 2, 4, vec![]);
    assert!(model.predict(&p, ForecastInput::new(&x[..12], 4).unwrap()).is_err());
    let other = tiny(2, 4, vec![]);
    let q = ParamVector::zeros(other.schema().clone());
    assert!(model.predict(&q, ForecastInput::new(&x, 4).unwrap()).is_err());
}

#[test]
fn zero_upstream_gives_zero_gradient() {
    let (model, p, x) = common::random_case(5, 3, 2, vec![3]);
    let (_, tape) = model.forward(&p, ForecastInput::new(&x, 4).unwrap()).unwrap();
    let g = model.backward(&p, &tape, 0.0).unwrap();
    assert!(g.flatten().iter().all(|&v| v == 0.0));
}

#[test]
fn linear_head_gradient_by_hand() {
    // T = 1, single linear layer, LSTM weights zero but biases set so h is
    // known in closed form: h = σ(b_o)·tanh(σ(b_i)·tanh(b_g))
    let model = tiny(2, 1, vec![]);
    let mut p = ParamVector::zeros(model.schema().clone());
    p.group_mut("lstm.b_i").unwrap().copy_from_slice(&[0.3, -0.2]);
    p.group_mut("lstm.b_g").unwrap().copy_from_slice(&[0.7, 1.1]);
    p.group_mut("lstm.b_o").unwrap().copy_from_slice(&[-0.5, 0.4]);
    p.group_mut("mlp.0.weight").unwrap().copy_from_slice(&[1.5, -2.0]);
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let h: Vec<f64> = (0..2)
        .map(|r| {
            let bi = [0.3, -0.2][r];
            let bg = [0.7, 1.1][r];
            let bo = [-0.5, 0.4][r];
            sig(bo) * (sig(bi) * f64::tanh(bg)).tanh()
        })
        .collect();
    let x = [9.0, -4.0, 2.5];
    let (y, tape) = model.forward(&p, ForecastInput::new(&x, 3).unwrap()).unwrap();
    assert!((y - (1.5 * h[0] - 2.0 * h[1])).abs() < 1e-15);
    let dl = -0.75;
    let g = model.backward(&p, &tape, dl).unwrap();
    let gw = g.group("mlp.0.weight").unwrap();
    assert!((gw[0] - h[0] * dl).abs() < 1e-15);
    assert!((gw[1] - h[1] * dl).abs() < 1e-15);
    assert_eq!(g.group("mlp.0.bias").unwrap(), &[dl]);
    // input weights see no gradient through zero-weight... but they do through
    // the gates; they must not be zero since x is nonzero
    assert!(g.group("lstm.w_ii").unwrap().iter().any(|&v| v != 0.0));
}

#[test]
fn gradients_match_finite_differences() {
    for (seed, hidden, lookback, head) in common::gradient_configs() {
        let err = common::gradient_check(seed, hidden, lookback, head.clone());
        assert!(err < 1e-5, "seed {seed} hidden {hidden} T {lookback} head {head:?}: {err:e}");
    }
}

#[test]
fn backward_is_linear_in_upstream() {
    let (model, p, x) = common::random_case(8, 2, 2, vec![3]);
    let (_, tape) = model.forward(&p, ForecastInput::new(&x, 4).unwrap()).unwrap();
    let g1 = model.backward(&p, &tape, 1.0).unwrap();
    let g3 = model.backward(&p, &tape, -3.0).unwrap();
    for (a, b) in g1.flatten().iter().zip(g3.flatten()) {
        assert!((b + 3.0 * a).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn backward_rejects_foreign_tape() {
    let (model, p, x) = common::random_case(8, 2, 2, vec![3]);
    let (other, q, y) = common::random_case(8, 3, 2, vec![3]);
    let (_, tape) = other.forward(&q, ForecastInput::new(&y, 4).unwrap()).unwrap();
    assert!(model.backward(&p, &tape, 1.0).is_err());
    let _ = x;
}

fn scheme_strategy(names: Vec<String>) -> impl Strategy<Value = PartitionScheme> {
    prop::collection::vec(any::<bool>(), names.len()).prop_map(move |flags| {
        PartitionScheme::Custom(
            names
                .iter()
                .zip(flags)
                .map(|(n, s)| (n.clone(), if s { Tag::Shared } else { Tag::Personalized }))
                .collect(),
        )
    })
}

proptest! {
    #[test]
    fn split_then_merge_is_identity(seed in any::<u64>(), scheme in scheme_strategy(tiny(2, 3, vec![4]).schema().groups().iter().map(|g| g.name.clone()).collect())) {
        let model = tiny(2, 3, vec![4]);
        let p = model.init_params(&mut SimRng::new(seed)).unwrap();
        let (sh, pe) = p.split(&scheme).unwrap();
        prop_assert_eq!(sh.len() + pe.len(), p.len());
        let back = ParamVector::merge(model.schema(), &sh, &pe).unwrap();
        prop_assert!(back.bit_eq(&p));
        let flat = ParamVector::from_flat(model.schema().clone(), p.flatten().to_vec()).unwrap();
        prop_assert!(flat.bit_eq(&p));
    }
}
