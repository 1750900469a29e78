//! Closed-form spike-time gradients.
//!
//! On its causal set `G_i` (inputs arriving strictly before its own spike) a
//! fired neuron's spike time has the closed form
//! `t_i = (v_th + sum_{j in G_i} w_ij t_j) / S_i` with
//! `S_i = sum_{j in G_i} w_ij > 0`, giving
//! `dt_i/dw_ij = (t_j - t_i)/S_i` and `dt_i/dt_j = w_ij/S_i` on the causal
//! set and zero elsewhere. Neurons that never fired propagate no gradient.

use crate::error::{Error, Result};
use crate::model::{LayerActivity, Matrix, NetworkModel};

/// Fan-in floor the hinge penalty pulls every neuron's summed input weight
/// towards: the same expected slope the initialization targets, which puts
/// the expected threshold crossing near `tau` even when a neuron is driven
/// by only part of its inputs. A neuron whose row sum sits at the floor can
/// always recover a spike, so the penalty can revive silent layers.
pub fn fan_in_floor(v_th: f64, tau: f64) -> f64 {
    2.0 * v_th / tau
}

/// Gradient of the sample loss with respect to every weight, including the
/// fan-in penalty term.
///
/// `activities` are the per-layer results of an exact (ideal-mode) forward
/// pass, input layer first; `dl_dt_output` is the loss gradient with
/// respect to the output spike times.
pub fn backprop_gradients(
    model: &NetworkModel,
    activities: &[LayerActivity],
    dl_dt_output: &[f64],
    penalty_coeff: f64,
) -> Result<Vec<Matrix>> {
    let mut grads: Vec<Matrix> = model
        .weights
        .iter()
        .map(|w| Matrix::zeros(w.rows, w.cols))
        .collect();
    backprop_into(&model.weights, activities, dl_dt_output, &mut grads, 1.0)?;
    let c_th = fan_in_floor(model.v_th_model, model.tau);
    add_penalty_grad(&model.weights, penalty_coeff, c_th, &mut grads, 1.0);
    Ok(grads)
}

/// Accumulate `scale *` data-loss gradients into `grads`.
pub(crate) fn backprop_into(
    weights: &[Matrix],
    activities: &[LayerActivity],
    dl_dt_output: &[f64],
    grads: &mut [Matrix],
    scale: f64,
) -> Result<()> {
    let n_layers = weights.len();
    if activities.len() != n_layers + 1 {
        return Err(Error::Shape(format!(
            "expected {} activities, got {}",
            n_layers + 1,
            activities.len()
        )));
    }
    let mut delta: Vec<f64> = dl_dt_output.to_vec();
    for l in (0..n_layers).rev() {
        let out = &activities[l + 1];
        let inp = &activities[l];
        let causal = out
            .causal
            .as_ref()
            .ok_or_else(|| Error::Shape(format!("layer {} activity has no causal sets", l + 1)))?;
        let mut next_delta = vec![0.0f64; inp.len()];
        for i in 0..out.len() {
            let d_i = delta[i];
            if d_i == 0.0 {
                continue;
            }
            let Some(t_i) = out.spike_times[i] else {
                continue; // no spike, no gradient path
            };
            let s_i = causal.slopes[i];
            debug_assert!(s_i > 0.0, "fired neuron must have positive causal slope");
            let g = d_i / s_i;
            let w_row = weights[l].row(i);
            let g_row = grads[l].row_mut(i);
            for &j in causal.causal_set(i) {
                let j = j as usize;
                let t_j = inp.spike_times[j].expect("causal source spiked");
                g_row[j] += scale * g * (t_j - t_i);
                next_delta[j] += g * w_row[j];
            }
        }
        delta = next_delta;
    }
    Ok(())
}

/// Fan-in hinge penalty `coeff * sum_i max(0, c_th - sum_j w_ij)^2`,
/// keeping each neuron's total input weight large enough to fire.
pub(crate) fn penalty_value(weights: &[Matrix], coeff: f64, c_th: f64) -> f64 {
    if coeff == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for w in weights {
        for i in 0..w.rows {
            let short = c_th - w.row(i).iter().sum::<f64>();
            if short > 0.0 {
                total += short * short;
            }
        }
    }
    coeff * total
}

/// Accumulate `scale *` the penalty gradient into `grads`.
pub(crate) fn add_penalty_grad(
    weights: &[Matrix],
    coeff: f64,
    c_th: f64,
    grads: &mut [Matrix],
    scale: f64,
) {
    if coeff == 0.0 {
        return;
    }
    for (w, g) in weights.iter().zip(grads.iter_mut()) {
        for i in 0..w.rows {
            let short = c_th - w.row(i).iter().sum::<f64>();
            if short > 0.0 {
                let dg = -2.0 * coeff * short * scale;
                for v in g.row_mut(i) {
                    *v += dg;
                }
            }
        }
    }
}
