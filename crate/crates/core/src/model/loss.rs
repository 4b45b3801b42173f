//! Forecast loss, triplet causal loss and their sum.

use eventcast_numerics::{Graph, NumericsError, Tensor, Var};

use super::config::Distance;
use crate::error::{CoreError, Result};

/// Added under square roots so the distance stays differentiable at zero.
/// Small enough that `x + EPS == x` for any distance of practical size.
pub const SQRT_EPS: f64 = 1e-18;

/// `mean((Ŷ - Y)²) + mean(|Ŷ - Y|)`.
pub fn time_loss_graph(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    let diff = g.sub(pred, target)?;
    let sq = g.square(diff);
    let mse = g.mean(sq);
    let ab = g.abs(diff);
    let mae = g.mean(ab);
    Ok(g.add(mse, mae)?)
}

fn norm_graph(g: &mut Graph, a: Var) -> Result<Var> {
    let sq = g.square(a);
    let s = g.sum(sq);
    let s = g.add_scalar(s, SQRT_EPS);
    Ok(g.sqrt(s)?)
}

pub fn distance_graph(g: &mut Graph, a: Var, b: Var, distance: Distance) -> Result<Var> {
    match distance {
        Distance::Euclidean => {
            let diff = g.sub(a, b)?;
            norm_graph(g, diff)
        }
        Distance::Cosine => {
            let prod = g.mul(a, b)?;
            let dot = g.sum(prod);
            let na = norm_graph(g, a)?;
            let nb = norm_graph(g, b)?;
            let denom = g.mul(na, nb)?;
            let cos = g.div(dot, denom)?;
            let neg = g.scale(cos, -1.0);
            Ok(g.add_scalar(neg, 1.0))
        }
    }
}

/// `mean_cf max(0, d(P_gt, T) - d(P_cf, T) + α)`.
pub fn triplet_loss_graph(
    g: &mut Graph,
    gt: Var,
    cfs: &[Var],
    t: Var,
    margin: f64,
    distance: Distance,
) -> Result<Var> {
    if cfs.is_empty() {
        return Err(NumericsError::Contract("triplet loss needs at least one counterfactual".into()).into());
    }
    let d_gt = distance_graph(g, gt, t, distance)?;
    let mut total: Option<Var> = None;
    for &cf in cfs {
        let d_cf = distance_graph(g, cf, t, distance)?;
        let gap = g.sub(d_gt, d_cf)?;
        let gap = g.add_scalar(gap, margin);
        let hinge = g.relu(gap);
        total = Some(match total {
            None => hinge,
            Some(acc) => g.add(acc, hinge)?,
        });
    }
    Ok(g.scale(total.expect("non-empty"), 1.0 / cfs.len() as f64))
}

pub fn total_loss_graph(g: &mut Graph, time: Var, causal: Option<Var>, time_weight: f64, causal_weight: f64) -> Result<Var> {
    let t = g.scale(time, time_weight);
    match causal {
        None => Ok(t),
        Some(c) => {
            let c = g.scale(c, causal_weight);
            Ok(g.add(t, c)?)
        }
    }
}

fn check_same(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(NumericsError::Shape(format!("{what}: {} vs {} values", a.len(), b.len())).into());
    }
    Ok(())
}

pub fn time_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check_same(pred, target, "prediction and target differ in size")?;
    let mut g = Graph::new();
    let (p, t) = (g.input(pred.clone()), g.input(target.clone()));
    let l = time_loss_graph(&mut g, p, t)?;
    Ok(g.value(l).item()?)
}

pub fn distance(a: &Tensor, b: &Tensor, kind: Distance) -> Result<f64> {
    check_same(a, b, "embeddings differ in size")?;
    let mut g = Graph::new();
    let (av, bv) = (g.input(a.clone()), g.input(b.clone()));
    let d = distance_graph(&mut g, av, bv, kind)?;
    Ok(g.value(d).item()?)
}

pub fn triplet_loss(gt: &Tensor, cfs: &[Tensor], t: &Tensor, margin: f64, distance: Distance) -> Result<f64> {
    for cf in cfs {
        check_same(gt, cf, "counterfactual embedding")?;
    }
    check_same(gt, t, "series embedding")?;
    let mut g = Graph::new();
    let gv = g.input(gt.clone());
    let tv = g.input(t.clone());
    let cv: Vec<Var> = cfs.iter().map(|c| g.input(c.clone())).collect();
    let l = triplet_loss_graph(&mut g, gv, &cv, tv, margin, distance)?;
    Ok(g.value(l).item()?)
}

/// `L_Total = L_Time + L_Causal`.
pub fn total_loss(time: f64, causal: f64) -> Result<f64> {
    if !time.is_finite() || !causal.is_finite() {
        return Err(CoreError::Numerics(NumericsError::Domain(format!(
            "non-finite loss term (time {time}, causal {causal})"
        ))));
    }
    Ok(time + causal)
}
