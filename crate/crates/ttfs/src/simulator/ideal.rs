//! Exact continuous-time forward pass.
//!
//! Between consecutive presynaptic spikes the membrane slope is constant,
//! so the potential is piecewise linear and threshold crossings have closed
//! forms. Processing arrivals in time order keeps, per neuron, the running
//! sums `a = sum(w_j)` and `b = sum(w_j * t_j)` over arrived inputs, so that
//! `v(t) = a*t - b` on the current segment and the crossing instant is
//! `(v_th + b) / a` whenever `a > 0`.

use crate::model::{CausalInfo, LayerActivity, Matrix};

/// Presynaptic spikes sorted by arrival time.
#[derive(Clone, Debug, Default)]
pub(crate) struct EventList {
    pub times: Vec<f64>,
    pub sources: Vec<u32>,
}

impl EventList {
    pub fn from_spike_times(spike_times: &[Option<f64>]) -> Self {
        let mut pairs: Vec<(f64, u32)> = spike_times
            .iter()
            .enumerate()
            .filter_map(|(j, t)| t.map(|t| (t, j as u32)))
            .collect();
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        EventList {
            times: pairs.iter().map(|p| p.0).collect(),
            sources: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }
}

/// Exact forward pass of one layer.
///
/// `wt` is the transposed weight matrix, shape `(n_in, n_out)`, so the
/// weights of one arriving spike are a contiguous row. Neurons fire at the
/// first instant the potential reaches `v_th` with positive slope, at most
/// once; a crossing that lands exactly on the next arrival fires and the
/// simultaneous arrival stays out of the causal set.
pub(crate) fn ideal_layer(
    wt: &Matrix,
    n_out: usize,
    events: &EventList,
    v_th: f64,
    horizon: f64,
    want_traces: bool,
) -> LayerActivity {
    debug_assert_eq!(wt.cols, n_out);
    let m = events.len();
    let mut a = vec![0.0f64; n_out];
    let mut b = vec![0.0f64; n_out];
    let mut t_spike = vec![f64::INFINITY; n_out];
    let mut counts = vec![0u32; n_out];
    let mut slopes = vec![0.0f64; n_out];
    let mut remaining = n_out;

    let mut traces: Option<Vec<Vec<(f64, f64)>>> =
        want_traces.then(|| vec![vec![(0.0, 0.0)]; n_out]);

    for k in 0..m {
        let t_k = events.times[k];
        if t_k > horizon {
            break;
        }
        let col = wt.row(events.sources[k] as usize);
        let t_next = if k + 1 < m {
            events.times[k + 1].min(horizon)
        } else {
            horizon
        };
        for i in 0..n_out {
            let w = col[i];
            a[i] += w;
            b[i] += w * t_k;
            if t_spike[i].is_infinite() && a[i] > 0.0 {
                let lhs = v_th + b[i];
                // Crossing within (t_k, t_next]: equivalent to t* <= t_next.
                if lhs <= a[i] * t_next {
                    t_spike[i] = lhs / a[i];
                    counts[i] = (k + 1) as u32;
                    slopes[i] = a[i];
                    remaining -= 1;
                }
            }
        }
        if let Some(tr) = traces.as_mut() {
            for i in 0..n_out {
                let fired_now = counts[i] == (k + 1) as u32 && t_spike[i].is_finite();
                if t_spike[i].is_infinite() {
                    tr[i].push((t_k, a[i] * t_k - b[i]));
                } else if fired_now {
                    tr[i].push((t_k, a[i] * t_k - b[i]));
                    tr[i].push((t_spike[i], v_th));
                    tr[i].push((t_spike[i], 0.0));
                }
            }
        }
        if remaining == 0 {
            break;
        }
    }

    let final_potentials: Vec<f64> = (0..n_out)
        .map(|i| {
            if t_spike[i].is_finite() {
                0.0
            } else {
                a[i] * horizon - b[i]
            }
        })
        .collect();

    if let Some(tr) = traces.as_mut() {
        for i in 0..n_out {
            tr[i].push((horizon, final_potentials[i]));
        }
    }

    LayerActivity {
        spike_times: t_spike
            .iter()
            .map(|&t| t.is_finite().then_some(t))
            .collect(),
        tick_indices: vec![None; n_out],
        causal: Some(CausalInfo {
            order: events.sources.clone(),
            counts,
            slopes,
        }),
        final_potentials,
        traces,
    }
}

/// Exact forward pass of one layer from its natural `(n_out, n_in)` weight
/// matrix. Convenience wrapper that transposes internally; hot paths keep a
/// transposed copy and call [`ideal_layer`] directly.
pub fn forward_layer_ideal(
    weights: &Matrix,
    inputs: &LayerActivity,
    v_th: f64,
    horizon: f64,
) -> LayerActivity {
    let events = EventList::from_spike_times(&inputs.spike_times);
    let wt = weights.transposed();
    ideal_layer(&wt, weights.rows, &events, v_th, horizon, false)
}
