//! Shapes of every stage at the paper preset.

use eventcast_core::model::{
    decode_graph, encode_series_graph, encode_text_graph, fuse_graph, init_params, regress_graph, Mode, ModelConfig,
    SeriesInput, TextInput,
};
use eventcast_numerics::{Graph, Tensor};

use crate::Outcome;

fn run(pred_len: usize, checks: &mut Vec<String>) -> eventcast_core::Result<()> {
    let cfg = ModelConfig::paper().with_tau(pred_len);
    let params = init_params(&cfg, 1)?;
    let mut g = Graph::new();
    let tokens = [3usize, 17, 400, 9];
    let window = Tensor::new(vec![cfg.input_len, cfg.d], (0..cfg.input_len * cfg.d).map(|i| (i as f64 * 0.1).sin()).collect())?;
    let e = encode_text_graph(&mut g, &params, &cfg, TextInput::Tokens(&tokens))?;
    let z = encode_series_graph(&mut g, &params, &cfg, SeriesInput::Window(&window))?;
    let combined = g.concat_cols(&[e, z])?;
    let fused = fuse_graph(&mut g, &params, &cfg, e, z)?;
    let h = decode_graph(&mut g, &params, &cfg, fused)?;
    let y = regress_graph(&mut g, &params, &cfg, h, &mut Mode::Eval)?;
    let y = g.value(y).clone().reshape(vec![cfg.d, cfg.pred_len])?;
    let mut expect = |what: &str, got: &[usize], want: &[usize]| {
        if got != want {
            checks.push(format!("L={pred_len} {what} {got:?} != {want:?}"));
        }
    };
    expect("E", g.value(e).shape(), &[1, 768]);
    expect("Z", g.value(z).shape(), &[1, 768]);
    expect("E_combined", g.value(combined).shape(), &[1, 1536]);
    expect("E_fused", g.value(fused).shape(), &[1, 1024]);
    expect("H", g.value(h).shape(), &[1, 1024]);
    expect("Y", y.shape(), &[1, pred_len]);
    Ok(())
}

pub fn criterion() -> Outcome {
    let mut mismatches = Vec::new();
    for pred_len in [35, 70, 140] {
        if let Err(e) = run(pred_len, &mut mismatches) {
            return Outcome::fail(format!("pred_len {pred_len}: {e}"));
        }
    }
    Outcome::check(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "E 768, E_combined 1536, E_fused 1024, Y (1, L) for L in 35/70/140".to_string()
        } else {
            mismatches.join("; ")
        },
    )
}
