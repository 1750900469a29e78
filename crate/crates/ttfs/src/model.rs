//! Domain types shared by the simulators, the trainer and the circuit
//! mapping: the network itself, the inference-constraint configuration,
//! physical circuit parameters, and per-layer activity records.

use crate::error::{Error, Result};
use crate::rng::Rng;
use serde::{Deserialize, Serialize};

/// Dense row-major matrix of synaptic weights, shape `(n_out, n_in)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows_data: Vec<Vec<f64>>) -> Result<Self> {
        let rows = rows_data.len();
        let cols = rows_data.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows * cols);
        for (i, r) in rows_data.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows, cols, data })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Transposed copy, written into `out` (shape must be `(cols, rows)`).
    pub fn transpose_into(&self, out: &mut Matrix) {
        assert_eq!(out.rows, self.cols);
        assert_eq!(out.cols, self.rows);
        for i in 0..self.rows {
            let row = self.row(i);
            for (j, &w) in row.iter().enumerate() {
                out.data[j * self.rows + i] = w;
            }
        }
    }

    pub fn transposed(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        self.transpose_into(&mut out);
        out
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

/// Integer level matrix of a quantized layer, same layout as [`Matrix`].
#[derive(Clone, Debug, PartialEq)]
pub struct LevelMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<i32>,
}

impl LevelMatrix {
    #[inline]
    pub fn row(&self, i: usize) -> &[i32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.data
    }
}

/// Round a weight matrix to integer multiples of `w_min`.
///
/// Levels are `round(w / w_min)` with ties away from zero (the behaviour of
/// `f64::round`). Returns the level matrix and the reconstructed real-valued
/// weights `w_min * level`.
pub(crate) fn quantize_matrix(weights: &Matrix, w_min: f64) -> (LevelMatrix, Matrix) {
    let mut levels = Vec::with_capacity(weights.rows * weights.cols);
    let mut recon = Matrix::zeros(weights.rows, weights.cols);
    for (k, &w) in weights.as_slice().iter().enumerate() {
        let level = (w / w_min).round();
        levels.push(level as i32);
        recon.as_mut_slice()[k] = w_min * level;
    }
    (
        LevelMatrix {
            rows: weights.rows,
            cols: weights.cols,
            data: levels,
        },
        recon,
    )
}

/// A trained (or freshly initialized) fully connected feed-forward TTFS
/// network in continuous time.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel {
    /// Widths of every layer, input first, e.g. `[784, 800, 10]`.
    pub layer_sizes: Vec<usize>,
    /// One weight matrix per non-input layer, shape `(out, in)`.
    pub weights: Vec<Matrix>,
    /// Firing threshold of the abstract model (dimensionless).
    pub v_th_model: f64,
    /// Input time span in milliseconds.
    pub tau: f64,
}

impl NetworkModel {
    pub fn layer_count(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Check every structural invariant of the model itself.
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "need at least an input and an output layer, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if self.weights.len() != self.layer_sizes.len() - 1 {
            return Err(Error::Shape(format!(
                "expected {} weight matrices, got {}",
                self.layer_sizes.len() - 1,
                self.weights.len()
            )));
        }
        for (l, w) in self.weights.iter().enumerate() {
            if w.rows != self.layer_sizes[l + 1] || w.cols != self.layer_sizes[l] {
                return Err(Error::Shape(format!(
                    "weight matrix for layer {} has shape ({}, {}), expected ({}, {})",
                    l + 1,
                    w.rows,
                    w.cols,
                    self.layer_sizes[l + 1],
                    self.layer_sizes[l]
                )));
            }
            if w.as_slice().iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!(
                    "non-finite weight in layer {}",
                    l + 1
                )));
            }
        }
        if !(self.v_th_model > 0.0) || !self.v_th_model.is_finite() {
            return Err(Error::Config("v_th_model must be positive".into()));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config("tau must be positive".into()));
        }
        Ok(())
    }
}

/// Default model threshold. The abstract model is dimensionless; membrane
/// potentials and `V_min` values are expressed relative to a unit threshold.
pub const DEFAULT_V_TH_MODEL: f64 = 1.0;

/// Default input time span in milliseconds.
pub const DEFAULT_TAU_MS: f64 = 5.0;

/// Default simulation horizon as a multiple of tau.
pub const HORIZON_TAU_FACTOR: f64 = 3.0;

/// Inference-time constraint knobs. All constraints are off by default;
/// training never enables any of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintConfig {
    /// Clock period of the discretized model, in ms (`None` = no clock).
    pub t_clock_model: Option<f64>,
    /// Per layer, whether that layer's spike times are discretized to the
    /// clock grid. Index 0 is the input layer; one entry per layer.
    pub discretize_flags: Vec<bool>,
    /// Quantization step for the weights (`None` = full precision).
    pub w_min: Option<f64>,
    /// Lower bound of the membrane potential (`None` = unbounded).
    pub v_min: Option<f64>,
    /// Per non-input layer, whether the membrane floor applies there.
    pub clamp_flags: Vec<bool>,
    /// Standard deviation of the firing-threshold fluctuation.
    pub sigma_vth: f64,
    /// Simulation cutoff in ms.
    pub horizon: f64,
    /// Root seed for threshold noise (and jitter when enabled).
    pub seed: u64,
}

impl ConstraintConfig {
    /// A configuration with every constraint disabled.
    pub fn unconstrained(layer_count: usize, horizon: f64, seed: u64) -> Self {
        ConstraintConfig {
            t_clock_model: None,
            discretize_flags: vec![false; layer_count],
            w_min: None,
            v_min: None,
            clamp_flags: vec![false; layer_count.saturating_sub(1)],
            sigma_vth: 0.0,
            horizon,
            seed,
        }
    }

    /// Unconstrained config for a given model with the default horizon.
    pub fn for_model(model: &NetworkModel, seed: u64) -> Self {
        Self::unconstrained(model.layer_count(), HORIZON_TAU_FACTOR * model.tau, seed)
    }

    /// Enable clock discretization of every layer.
    pub fn with_clock(mut self, t_clock_ms: f64) -> Self {
        self.t_clock_model = Some(t_clock_ms);
        self.discretize_flags.iter_mut().for_each(|f| *f = true);
        self
    }

    /// Enable the membrane floor on every non-input layer.
    pub fn with_floor(mut self, v_min: f64) -> Self {
        self.v_min = Some(v_min);
        self.clamp_flags.iter_mut().for_each(|f| *f = true);
        self
    }

    pub fn with_quantization(mut self, w_min: f64) -> Self {
        self.w_min = Some(w_min);
        self
    }

    pub fn with_threshold_noise(mut self, sigma_vth: f64) -> Self {
        self.sigma_vth = sigma_vth;
        self
    }

    pub fn any_discretization(&self) -> bool {
        self.discretize_flags.iter().any(|&f| f)
    }

    pub fn any_clamp(&self) -> bool {
        self.clamp_flags.iter().any(|&f| f)
    }
}

/// Validate a model together with a constraint configuration, checking
/// both the individual invariants and mutual consistency of the flags.
pub fn validate_config(model: &NetworkModel, cfg: &ConstraintConfig) -> Result<()> {
    model.validate()?;
    if let Some(t) = cfg.t_clock_model {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Config("t_clock_model must be positive".into()));
        }
    }
    if cfg.discretize_flags.len() != model.layer_count() {
        return Err(Error::Config(format!(
            "expected {} discretize flags (one per layer), got {}",
            model.layer_count(),
            cfg.discretize_flags.len()
        )));
    }
    if cfg.clamp_flags.len() != model.layer_count() - 1 {
        return Err(Error::Config(format!(
            "expected {} clamp flags (one per non-input layer), got {}",
            model.layer_count() - 1,
            cfg.clamp_flags.len()
        )));
    }
    if cfg.any_discretization() && cfg.t_clock_model.is_none() {
        return Err(Error::Config(
            "discretization requested but t_clock_model is not set".into(),
        ));
    }
    if let Some(w_min) = cfg.w_min {
        if !(w_min > 0.0) || !w_min.is_finite() {
            return Err(Error::Config("w_min must be positive".into()));
        }
    }
    if let Some(v_min) = cfg.v_min {
        if !v_min.is_finite() {
            return Err(Error::Config("v_min must be finite".into()));
        }
        if v_min >= model.v_th_model {
            return Err(Error::Config("v_min must be below threshold".into()));
        }
    }
    if cfg.any_clamp() && cfg.v_min.is_none() {
        return Err(Error::Config(
            "membrane floor requested but v_min is not set".into(),
        ));
    }
    if !(cfg.sigma_vth >= 0.0) || !cfg.sigma_vth.is_finite() {
        return Err(Error::Config("sigma_vth must be non-negative".into()));
    }
    if !(cfg.horizon > 0.0) || !cfg.horizon.is_finite() {
        return Err(Error::Config("horizon must be positive".into()));
    }
    if cfg.horizon < model.tau {
        return Err(Error::Config(format!(
            "horizon ({} ms) must cover the input span tau ({} ms)",
            cfg.horizon, model.tau
        )));
    }
    Ok(())
}

/// Physical constants of the capacitor-integrator neuron circuit, SI units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    /// Membrane capacitance in farads.
    pub capacitance: f64,
    /// Minimum programmable synapse current in amperes.
    pub i_min: f64,
    /// Circuit firing threshold in volts.
    pub v_th_circuit: f64,
    /// Circuit clock period in seconds.
    pub t_clock_circuit: f64,
}

impl CircuitParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("capacitance", self.capacitance),
            ("i_min", self.i_min),
            ("v_th_circuit", self.v_th_circuit),
            ("t_clock_circuit", self.t_clock_circuit),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive and finite")));
            }
        }
        Ok(())
    }
}

impl Default for CircuitParams {
    /// Parameters characteristic of subthreshold-current integrator designs:
    /// C = 100 fF, I_min = 10 pA, V_th = 1 V, T_clock = 100 ns.
    fn default() -> Self {
        CircuitParams {
            capacitance: 100e-15,
            i_min: 10e-12,
            v_th_circuit: 1.0,
            t_clock_circuit: 100e-9,
        }
    }
}

/// Causal bookkeeping produced by the exact continuous-time engine: which
/// presynaptic spikes arrived strictly before each neuron's own spike.
#[derive(Clone, Debug, Default)]
pub struct CausalInfo {
    /// Presynaptic source indices sorted by arrival time.
    pub order: Vec<u32>,
    /// Per neuron, how many leading entries of `order` are causal.
    /// Meaningful only for neurons that fired.
    pub counts: Vec<u32>,
    /// Per neuron, the summed causal weight (the slope at the crossing).
    /// Meaningful only for neurons that fired; always positive there.
    pub slopes: Vec<f64>,
}

impl CausalInfo {
    /// Causal source indices of neuron `i` (callers must know it fired).
    pub fn causal_set(&self, i: usize) -> &[u32] {
        &self.order[..self.counts[i] as usize]
    }
}

/// Spiking activity of one layer for one sample.
///
/// Times are in milliseconds for the model-side engines and in seconds for
/// the physical circuit engine.
#[derive(Clone, Debug, Default)]
pub struct LayerActivity {
    /// Per neuron, the time of its single spike (`None` = never fired).
    pub spike_times: Vec<Option<f64>>,
    /// Per neuron, the clock tick of the spike. Populated only when this
    /// layer's spike times live on a clock grid.
    pub tick_indices: Vec<Option<u32>>,
    /// Causal sets; populated only by the exact continuous-time engine.
    pub causal: Option<CausalInfo>,
    /// Membrane potential at the end of the run (0 for fired neurons,
    /// which are reset and frozen).
    pub final_potentials: Vec<f64>,
    /// Optional sampled membrane traces, per neuron, as `(time, value)`.
    pub traces: Option<Vec<Vec<(f64, f64)>>>,
}

impl LayerActivity {
    /// Activity holding only spike times (input layers, external sources).
    pub fn from_spike_times(spike_times: Vec<Option<f64>>) -> Self {
        LayerActivity {
            spike_times,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.spike_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spike_times.is_empty()
    }

    /// Earliest finite spike time, with the neuron index (lowest index wins
    /// ties).
    pub fn earliest(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, t) in self.spike_times.iter().enumerate() {
            if let Some(t) = t {
                if best.map_or(true, |(_, bt)| *t < bt) {
                    best = Some((i, *t));
                }
            }
        }
        best
    }
}

/// Aggregated minimum-membrane-potential statistics over a batch of runs.
///
/// For each sample, `v_min` is the lowest output-layer potential observed
/// before each neuron's own spike, and `v_min_pre_earliest` restricts the
/// window further to times before the earliest output spike. The scalar
/// fields are means over samples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PotentialStats {
    pub v_min_overall: f64,
    pub v_min_pre_earliest: f64,
    pub per_sample_v_min: Vec<f64>,
    pub per_sample_v_min_pre_earliest: Vec<f64>,
    pub hist_v_min: Histogram,
    pub hist_v_min_pre_earliest: Histogram,
}

/// Fixed-width histogram.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_lo: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn build(values: &[f64], bin_width: f64) -> Self {
        assert!(bin_width > 0.0);
        if values.is_empty() {
            return Histogram {
                bin_lo: 0.0,
                bin_width,
                counts: vec![],
            };
        }
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bin_lo = (min / bin_width).floor() * bin_width;
        let nbins = (((max - bin_lo) / bin_width).floor() as usize) + 1;
        let mut counts = vec![0u64; nbins];
        for &v in values {
            let k = (((v - bin_lo) / bin_width).floor() as usize).min(nbins - 1);
            counts[k] += 1;
        }
        Histogram {
            bin_lo,
            bin_width,
            counts,
        }
    }

    /// Fraction of mass strictly above `threshold`.
    pub fn mass_above(values: &[f64], threshold: f64) -> f64 {
        if values.is_empty() {
            return 0.0;
        }
        values.iter().filter(|&&v| v > threshold).count() as f64 / values.len() as f64
    }
}

/// Initialize a network with mean-shifted Gaussian weights.
///
/// Weights of a layer with fan-in `n` are drawn i.i.d. from
/// `N(2 * v_th / (n * tau), (1/sqrt(n))^2)`, which puts the expected
/// threshold crossing of a fresh neuron near `tau` and keeps most neurons
/// firing within the horizon.
pub fn init_network(
    layer_sizes: &[usize],
    tau: f64,
    v_th_model: f64,
    seed: u64,
) -> Result<NetworkModel> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config(format!(
            "need at least an input and an output layer, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.iter().any(|&n| n == 0) {
        return Err(Error::Config("layer sizes must be positive".into()));
    }
    if !(tau > 0.0) || !(v_th_model > 0.0) {
        return Err(Error::Config("tau and v_th_model must be positive".into()));
    }
    let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
    for l in 1..layer_sizes.len() {
        let (n_out, n_in) = (layer_sizes[l], layer_sizes[l - 1]);
        let mean = 2.0 * v_th_model / (n_in as f64 * tau);
        let std = 1.0 / (n_in as f64).sqrt();
        let mut rng = Rng::derive(seed, &[0x494E_4954, l as u64]);
        let mut m = Matrix::zeros(n_out, n_in);
        for v in m.as_mut_slice() {
            *v = mean + std * rng.normal();
        }
        weights.push(m);
    }
    Ok(NetworkModel {
        layer_sizes: layer_sizes.to_vec(),
        weights,
        v_th_model,
        tau,
    })
}
