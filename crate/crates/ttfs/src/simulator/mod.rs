//! Forward simulation of a TTFS network: input coding, the exact
//! continuous-time engine, the constrained engine, prediction, and
//! membrane-potential statistics.

mod constrained;
mod ideal;

pub use ideal::forward_layer_ideal;
pub(crate) use ideal::{ideal_layer, EventList};

use crate::error::{Error, Result};
use crate::model::{
    quantize_matrix, validate_config, ConstraintConfig, Histogram, LayerActivity, Matrix,
    NetworkModel, PotentialStats,
};
use crate::rng::{mix, normal_at};
use constrained::{constrained_layer, LayerConstraints};

const JITTER_TAG: u64 = 0x4A49_5454;
const NOISE_TAG: u64 = 0x5448_4E53;

/// Input spike coding parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncoderConfig {
    /// Time span of the input spikes in ms; a pixel of intensity `x > 0`
    /// spikes at `tau * (1 - x)`.
    pub tau: f64,
    /// Training-time Gaussian jitter on input spike times, in ms.
    pub jitter_sigma: f64,
    /// Seed of the jitter stream.
    pub seed: u64,
}

impl EncoderConfig {
    pub fn new(tau: f64, jitter_sigma: f64, seed: u64) -> Self {
        EncoderConfig {
            tau,
            jitter_sigma,
            seed,
        }
    }
}

/// Encode normalized pixel intensities into input spike times.
///
/// Zero pixels emit no spike. When `jitter_on` is set, each spike time gets
/// independent Gaussian noise of std `jitter_sigma`, clipped below at 0.
pub fn encode_input(
    pixels: &[f64],
    enc: &EncoderConfig,
    jitter_on: bool,
) -> Result<LayerActivity> {
    if let Some(bad) = pixels.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Config(format!(
            "pixel value {bad} outside [0, 1]"
        )));
    }
    let stream = mix(&[enc.seed, JITTER_TAG]);
    let jitter = jitter_on && enc.jitter_sigma > 0.0;
    let spike_times = pixels
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if x > 0.0 {
                let mut t = enc.tau * (1.0 - x);
                if jitter {
                    t = (t + enc.jitter_sigma * normal_at(stream, i as u64)).max(0.0);
                }
                Some(t)
            } else {
                None
            }
        })
        .collect();
    Ok(LayerActivity::from_spike_times(spike_times))
}

/// Which engine drives the non-input layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimulationMode {
    /// Exact continuous time, no constraints.
    Ideal,
    /// Apply the constraint configuration layer by layer.
    Constrained,
}

/// Which layers record membrane traces.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TraceMode {
    #[default]
    None,
    /// Only the output layer (enough for potential statistics).
    OutputLayer,
    /// Every non-input layer.
    All,
}

/// Per-run options.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Apply input-timing jitter (training only).
    pub jitter: bool,
    /// Trace recording.
    pub traces: TraceMode,
    /// Sample index; jitter and threshold-noise streams are derived from
    /// `(seed, sample_index)`, making batches independent of worker order.
    pub sample_index: u64,
}

/// Outcome of simulating one sample.
#[derive(Clone, Debug)]
pub struct SimulationResult {
    /// Activity per layer, input layer first.
    pub activities: Vec<LayerActivity>,
    pub predicted_label: usize,
    /// True if no output neuron fired within the horizon; the label then
    /// falls back to the highest final membrane potential.
    pub no_output_spike: bool,
    /// Earliest output spike time (ms), when any output neuron fired.
    pub earliest_output_time: Option<f64>,
}

impl SimulationResult {
    pub fn output(&self) -> &LayerActivity {
        self.activities.last().unwrap()
    }
}

/// Earliest-spike readout: the label is the output neuron with the earliest
/// spike (lowest index on ties). If no output neuron fired, the label falls
/// back to the highest final membrane potential and the no-spike flag is
/// set.
pub fn predict(output: &LayerActivity) -> (usize, bool) {
    if let Some((label, _)) = output.earliest() {
        return (label, false);
    }
    let mut best = 0usize;
    for (i, &v) in output.final_potentials.iter().enumerate() {
        if v > output.final_potentials[best] {
            best = i;
        }
    }
    (best, true)
}

/// A network prepared for repeated simulation: quantization applied once,
/// plus transposed weight copies for the event-major exact engine.
pub(crate) struct PreparedNet {
    pub weights: Vec<Matrix>,
    pub weights_t: Vec<Matrix>,
    pub layer_sizes: Vec<usize>,
    pub v_th: f64,
}

impl PreparedNet {
    pub fn new(model: &NetworkModel, w_min: Option<f64>) -> PreparedNet {
        let weights: Vec<Matrix> = match w_min {
            Some(w_min) => model
                .weights
                .iter()
                .map(|w| quantize_matrix(w, w_min).1)
                .collect(),
            None => model.weights.clone(),
        };
        let weights_t = weights.iter().map(Matrix::transposed).collect();
        PreparedNet {
            weights,
            weights_t,
            layer_sizes: model.layer_sizes.clone(),
            v_th: model.v_th_model,
        }
    }

    pub fn view(&self) -> SimNet<'_> {
        SimNet {
            weights: &self.weights,
            weights_t: &self.weights_t,
            layer_sizes: &self.layer_sizes,
            v_th: self.v_th,
        }
    }
}

/// Borrowed view of network weights in both layouts.
#[derive(Clone, Copy)]
pub(crate) struct SimNet<'a> {
    pub weights: &'a [Matrix],
    pub weights_t: &'a [Matrix],
    pub layer_sizes: &'a [usize],
    pub v_th: f64,
}

impl SimNet<'_> {
    /// Simulate one sample. `cfg.w_min` is ignored here; quantization is
    /// applied when the net is prepared.
    pub fn run(
        &self,
        pixels: &[f64],
        cfg: &ConstraintConfig,
        enc: &EncoderConfig,
        mode: SimulationMode,
        opts: &RunOptions,
    ) -> Result<SimulationResult> {
        let n_layers = self.layer_sizes.len();
        let mut enc_run = *enc;
        enc_run.seed = mix(&[enc.seed, opts.sample_index]);
        let mut input = encode_input(pixels, &enc_run, opts.jitter)?;

        if mode == SimulationMode::Constrained && cfg.discretize_flags[0] {
            let t_clock = cfg.t_clock_model.expect("validated config");
            let mut ticks = vec![None; input.len()];
            for (i, t) in input.spike_times.iter_mut().enumerate() {
                if let Some(time) = t {
                    let tick = (*time / t_clock).round();
                    *t = Some(tick * t_clock);
                    ticks[i] = Some(tick as u32);
                }
            }
            input.tick_indices = ticks;
        }

        let mut activities = Vec::with_capacity(n_layers);
        activities.push(input);

        for l in 1..n_layers {
            let want_traces = match opts.traces {
                TraceMode::None => false,
                TraceMode::OutputLayer => l == n_layers - 1,
                TraceMode::All => true,
            };
            let events = EventList::from_spike_times(&activities[l - 1].spike_times);
            let lc = LayerConstraints {
                t_clock: (cfg.discretize_flags[l]).then(|| cfg.t_clock_model.expect("validated"))
                    .filter(|_| mode == SimulationMode::Constrained),
                v_min: cfg
                    .v_min
                    .filter(|_| mode == SimulationMode::Constrained && cfg.clamp_flags[l - 1]),
                sigma_vth: if mode == SimulationMode::Constrained {
                    cfg.sigma_vth
                } else {
                    0.0
                },
            };
            let is_constrained =
                lc.t_clock.is_some() || lc.v_min.is_some() || lc.sigma_vth > 0.0;
            let activity = if is_constrained {
                let stream = mix(&[cfg.seed, NOISE_TAG, opts.sample_index, l as u64]);
                constrained_layer(
                    &self.weights[l - 1],
                    &events,
                    &lc,
                    self.v_th,
                    cfg.horizon,
                    stream,
                    want_traces,
                )
            } else {
                ideal_layer(
                    &self.weights_t[l - 1],
                    self.layer_sizes[l],
                    &events,
                    self.v_th,
                    cfg.horizon,
                    want_traces,
                )
            };
            activities.push(activity);
        }

        let output = activities.last().unwrap();
        let (predicted_label, no_output_spike) = predict(output);
        let earliest_output_time = output.earliest().map(|(_, t)| t);
        Ok(SimulationResult {
            activities,
            predicted_label,
            no_output_spike,
            earliest_output_time,
        })
    }
}

/// Simulate one sample through the whole network.
///
/// In `Ideal` mode every constraint is ignored and the exact engine runs
/// throughout (with causal sets recorded). In `Constrained` mode each
/// layer applies its own discretization/clamp flags plus the threshold
/// fluctuation; layers with no active constraint run the exact engine, so a
/// fully disabled configuration reproduces ideal results bit for bit.
pub fn run_network(
    model: &NetworkModel,
    pixels: &[f64],
    cfg: &ConstraintConfig,
    enc: &EncoderConfig,
    mode: SimulationMode,
    opts: &RunOptions,
) -> Result<SimulationResult> {
    validate_config(model, cfg)?;
    if pixels.len() != model.layer_sizes[0] {
        return Err(Error::Shape(format!(
            "expected {} pixels, got {}",
            model.layer_sizes[0],
            pixels.len()
        )));
    }
    let w_min = match mode {
        SimulationMode::Constrained => cfg.w_min,
        SimulationMode::Ideal => None,
    };
    let prepared = PreparedNet::new(model, w_min);
    prepared.view().run(pixels, cfg, enc, mode, opts)
}

/// Minimum of a piecewise-linear trace over `[0, t_end)`, taking the left
/// limit at `t_end`.
fn trace_min_before(trace: &[(f64, f64)], t_end: f64) -> f64 {
    let mut min = f64::INFINITY;
    for k in 0..trace.len() {
        let (t, v) = trace[k];
        if t < t_end {
            min = min.min(v);
        } else {
            // Interpolate the value approached at t_end from the previous
            // sample, then stop.
            if k > 0 {
                let (t0, v0) = trace[k - 1];
                if t0 < t_end && t > t0 {
                    let v_end = v0 + (v - v0) * (t_end - t0) / (t - t0);
                    min = min.min(v_end);
                }
            }
            break;
        }
    }
    if min.is_infinite() {
        0.0
    } else {
        min
    }
}

const STATS_BIN_WIDTH: f64 = 0.25;

/// Minimum output-layer membrane statistics over a batch of traced runs.
///
/// Per sample: the overall statistic is the lowest potential any output
/// neuron reaches before its own spike (or the horizon); the pre-earliest
/// statistic restricts every neuron's window to times before the earliest
/// output spike of the sample. Runs must have output-layer traces recorded,
/// with the membrane floor disabled.
pub fn potential_stats(results: &[SimulationResult]) -> Result<PotentialStats> {
    let mut per_v_min = Vec::with_capacity(results.len());
    let mut per_v_hat = Vec::with_capacity(results.len());
    for (idx, r) in results.iter().enumerate() {
        let (v_min, v_hat) = sample_minima(r)
            .ok_or_else(|| Error::MissingTraces(format!("sample {idx} has no output traces")))?;
        per_v_min.push(v_min);
        per_v_hat.push(v_hat);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Ok(PotentialStats {
        v_min_overall: mean(&per_v_min),
        v_min_pre_earliest: mean(&per_v_hat),
        hist_v_min: Histogram::build(&per_v_min, STATS_BIN_WIDTH),
        hist_v_min_pre_earliest: Histogram::build(&per_v_hat, STATS_BIN_WIDTH),
        per_sample_v_min: per_v_min,
        per_sample_v_min_pre_earliest: per_v_hat,
    })
}

/// Per-sample `(v_min, v_min_pre_earliest)` from a traced run, or `None`
/// when output traces are missing.
pub fn sample_minima(result: &SimulationResult) -> Option<(f64, f64)> {
    let output = result.output();
    let traces = output.traces.as_ref()?;
    let horizon = traces
        .iter()
        .filter_map(|t| t.last().map(|s| s.0))
        .fold(0.0f64, f64::max);
    let earliest = result.earliest_output_time.unwrap_or(horizon);
    let mut v_min = f64::INFINITY;
    let mut v_hat = f64::INFINITY;
    for (i, trace) in traces.iter().enumerate() {
        let own_end = output.spike_times[i].unwrap_or(horizon);
        v_min = v_min.min(trace_min_before(trace, own_end));
        v_hat = v_hat.min(trace_min_before(trace, earliest));
    }
    Some((v_min, v_hat))
}
