//! Constrained forward pass: the same integrate-and-fire dynamics as the
//! exact engine, but with any combination of
//!
//! * clock discretization — the membrane still evolves continuously, but
//!   firing is detected only at clock ticks `p*T` where the sampled
//!   potential has reached the threshold, and the spike time becomes `p*T`;
//! * a membrane floor `V_min` clamping the potential from below;
//! * per-tick (per-segment in continuous operation) Gaussian fluctuation of
//!   the firing threshold.
//!
//! Input spikes need not lie on the clock grid: an upstream layer may be
//! undiscretized while this one samples at ticks. An input arriving exactly
//! at a tick contributes no potential at that tick and adds slope only
//! afterwards.

use super::ideal::EventList;
use crate::model::{LayerActivity, Matrix};
use crate::rng::{mix, normal_at};

/// Constraint selection for a single layer.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct LayerConstraints {
    /// Clock period in ms; `Some` iff this layer's firing is tick-sampled.
    pub t_clock: Option<f64>,
    /// Membrane floor; `Some` iff clamping applies to this layer.
    pub v_min: Option<f64>,
    /// Threshold fluctuation standard deviation.
    pub sigma_vth: f64,
}

#[inline]
fn advance(v: f64, slope: f64, dt: f64, v_min: Option<f64>) -> f64 {
    let nv = v + slope * dt;
    match v_min {
        Some(vm) => nv.max(vm),
        None => nv,
    }
}

/// Tick count covering the horizon: ticks run over `0..=tick_count`.
#[inline]
fn last_tick(horizon: f64, t_clock: f64) -> u64 {
    (horizon / t_clock).ceil() as u64
}

pub(crate) fn constrained_layer(
    weights: &Matrix,
    events: &EventList,
    lc: &LayerConstraints,
    v_th: f64,
    horizon: f64,
    noise_stream: u64,
    want_traces: bool,
) -> LayerActivity {
    let n_out = weights.rows;
    let mut spike_times = vec![None; n_out];
    let mut tick_indices = vec![None; n_out];
    let mut final_potentials = vec![0.0; n_out];
    let mut traces: Option<Vec<Vec<(f64, f64)>>> = want_traces.then(|| vec![Vec::new(); n_out]);

    for i in 0..n_out {
        let row = weights.row(i);
        let stream = if lc.sigma_vth > 0.0 {
            mix(&[noise_stream, i as u64])
        } else {
            0
        };
        let trace = traces.as_mut().map(|t| &mut t[i]);
        let (spike, tick, v_end) = match lc.t_clock {
            Some(t_clock) => {
                discretized_neuron(row, events, lc, v_th, horizon, t_clock, stream, trace)
            }
            None => continuous_neuron(row, events, lc, v_th, horizon, stream, trace),
        };
        spike_times[i] = spike;
        tick_indices[i] = tick;
        final_potentials[i] = v_end;
    }

    LayerActivity {
        spike_times,
        tick_indices,
        causal: None,
        final_potentials,
        traces,
    }
}

/// Walk one neuron with tick-sampled firing. Returns (spike time, tick,
/// final potential).
#[allow(clippy::too_many_arguments)]
fn discretized_neuron(
    row: &[f64],
    events: &EventList,
    lc: &LayerConstraints,
    v_th: f64,
    horizon: f64,
    t_clock: f64,
    stream: u64,
    mut trace: Option<&mut Vec<(f64, f64)>>,
) -> (Option<f64>, Option<u32>, f64) {
    let m = events.len();
    let last = last_tick(horizon, t_clock);
    let mut v = 0.0;
    let mut slope = 0.0;
    let mut t_cur = 0.0;
    let mut ev = 0usize;

    for p in 0..=last {
        let tp = p as f64 * t_clock;
        while ev < m && events.times[ev] <= tp {
            let te = events.times[ev];
            v = advance(v, slope, te - t_cur, lc.v_min);
            t_cur = te;
            slope += row[events.sources[ev] as usize];
            ev += 1;
        }
        v = advance(v, slope, tp - t_cur, lc.v_min);
        t_cur = tp;
        let threshold = if lc.sigma_vth > 0.0 {
            v_th + lc.sigma_vth * normal_at(stream, p)
        } else {
            v_th
        };
        if v >= threshold {
            if let Some(tr) = trace.as_mut() {
                tr.push((tp, v));
                tr.push((tp, 0.0));
                tr.push((last as f64 * t_clock, 0.0));
            }
            return (Some(tp), Some(p as u32), 0.0);
        }
        if let Some(tr) = trace.as_mut() {
            tr.push((tp, v));
        }
    }
    (None, None, v)
}

/// Walk one neuron in continuous time with optional floor and per-segment
/// threshold fluctuation. Returns (spike time, tick = None, final potential).
fn continuous_neuron(
    row: &[f64],
    events: &EventList,
    lc: &LayerConstraints,
    v_th: f64,
    horizon: f64,
    stream: u64,
    mut trace: Option<&mut Vec<(f64, f64)>>,
) -> (Option<f64>, Option<u32>, f64) {
    let m = events.len();
    let mut v = 0.0;
    let mut slope = 0.0;
    let mut t_cur = 0.0;
    if let Some(tr) = trace.as_mut() {
        tr.push((0.0, 0.0));
    }

    for k in 0..=m {
        let t_end = if k < m {
            events.times[k].min(horizon)
        } else {
            horizon
        };
        let threshold = if lc.sigma_vth > 0.0 {
            v_th + lc.sigma_vth * normal_at(stream, k as u64)
        } else {
            v_th
        };
        let crossing = if v >= threshold {
            Some(t_cur)
        } else if slope > 0.0 {
            let t_star = t_cur + (threshold - v) / slope;
            (t_star <= t_end).then_some(t_star)
        } else {
            None
        };
        if let Some(t_star) = crossing {
            if let Some(tr) = trace.as_mut() {
                let v_at_crossing = if v >= threshold { v } else { threshold };
                tr.push((t_star, v_at_crossing));
                tr.push((t_star, 0.0));
                tr.push((horizon, 0.0));
            }
            return (Some(t_star), None, 0.0);
        }
        // Record the clamp inflection so exported traces keep the kink.
        if let (Some(tr), Some(vm)) = (trace.as_mut(), lc.v_min) {
            if slope < 0.0 && v > vm {
                let t_hit = t_cur + (vm - v) / slope;
                if t_hit < t_end {
                    tr.push((t_hit, vm));
                }
            }
        }
        v = advance(v, slope, t_end - t_cur, lc.v_min);
        t_cur = t_end;
        if let Some(tr) = trace.as_mut() {
            tr.push((t_end, v));
        }
        if k < m {
            if events.times[k] > horizon {
                break;
            }
            slope += row[events.sources[k] as usize];
        }
    }
    (None, None, v)
}
