//! Softmax cross-entropy over negative spike times: earlier spikes mean
//! stronger class evidence.

use crate::error::{Error, Result};

/// Loss and its gradient with respect to the output spike times.
///
/// `p_k = exp(-t_k/gamma) / sum_m exp(-t_m/gamma)`, `loss = -ln p_label`,
/// `dL/dt_k = (delta_{k,label} - p_k) / gamma`. Callers substitute the
/// horizon for neurons that never fired (their gradient entries are later
/// discarded by backpropagation).
pub fn compute_loss(output_times: &[f64], label: usize, gamma: f64) -> Result<(f64, Vec<f64>)> {
    if label >= output_times.len() {
        return Err(Error::Config(format!(
            "label {label} out of range for {} outputs",
            output_times.len()
        )));
    }
    let t_min = output_times.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut probs: Vec<f64> = output_times
        .iter()
        .map(|&t| (-(t - t_min) / gamma).exp())
        .collect();
    let norm: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= norm);
    let loss = -probs[label].max(f64::MIN_POSITIVE).ln();
    let grad = probs
        .iter()
        .enumerate()
        .map(|(k, &p)| ((k == label) as u8 as f64 - p) / gamma)
        .collect();
    Ok((loss, grad))
}
