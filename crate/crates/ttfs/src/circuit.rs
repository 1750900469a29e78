//! Mapping the abstract model onto the capacitor-integrator circuit:
//! weight quantization to integer current levels, the physical-units tick
//! simulation, the model/circuit equivalence relation for `w_min`, and the
//! clock-period sweep that picks an operating point.

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::model::{
    quantize_matrix, CircuitParams, ConstraintConfig, LayerActivity, LevelMatrix, NetworkModel,
};
use crate::simulator::EncoderConfig;
use crate::trainer::{evaluate, EvalReport};

/// A network whose weights are integer multiples of `w_min`.
#[derive(Clone, Debug)]
pub struct QuantizedNetwork {
    pub layer_sizes: Vec<usize>,
    /// Integer levels per non-input layer, `level = round(w / w_min)`.
    pub levels: Vec<LevelMatrix>,
    pub w_min: f64,
    /// Per layer, `max |level|` — the number of representable magnitudes.
    pub level_counts: Vec<u32>,
    pub v_th_model: f64,
    pub tau: f64,
}

impl QuantizedNetwork {
    /// The real-valued network with weights `w_min * level`.
    pub fn reconstructed(&self) -> NetworkModel {
        let weights = self
            .levels
            .iter()
            .map(|lm| {
                let mut m = crate::model::Matrix::zeros(lm.rows, lm.cols);
                for (out, &level) in m.as_mut_slice().iter_mut().zip(lm.as_slice()) {
                    *out = self.w_min * level as f64;
                }
                m
            })
            .collect();
        NetworkModel {
            layer_sizes: self.layer_sizes.clone(),
            weights,
            v_th_model: self.v_th_model,
            tau: self.tau,
        }
    }

    /// Largest level magnitude across all layers.
    pub fn max_level_count(&self) -> u32 {
        self.level_counts.iter().copied().max().unwrap_or(0)
    }
}

/// Quantize every layer to integer multiples of `w_min` (ties away from
/// zero).
pub fn quantize_weights(model: &NetworkModel, w_min: f64) -> Result<QuantizedNetwork> {
    if !(w_min > 0.0) || !w_min.is_finite() {
        return Err(Error::Config("w_min must be positive".into()));
    }
    let mut levels = Vec::with_capacity(model.weights.len());
    let mut level_counts = Vec::with_capacity(model.weights.len());
    for w in &model.weights {
        let (lm, _) = quantize_matrix(w, w_min);
        level_counts.push(lm.as_slice().iter().map(|l| l.unsigned_abs()).max().unwrap_or(0));
        levels.push(lm);
    }
    Ok(QuantizedNetwork {
        layer_sizes: model.layer_sizes.clone(),
        levels,
        w_min,
        level_counts,
        v_th_model: model.v_th_model,
        tau: model.tau,
    })
}

/// The quantization step that makes the discretized model and the circuit
/// fire at identical ticks:
/// `w_min = T_clock_circuit * I_min * V_th_model / (C * V_th_circuit * T_clock_model)`.
///
/// `t_clock_model_ms` is in milliseconds (converted to seconds internally);
/// the result is dimensionless like the model weights.
pub fn derive_wmin(circuit: &CircuitParams, t_clock_model_ms: f64, v_th_model: f64) -> Result<f64> {
    circuit.validate()?;
    if !(t_clock_model_ms > 0.0) || !(v_th_model > 0.0) {
        return Err(Error::Config(
            "t_clock_model and v_th_model must be positive".into(),
        ));
    }
    let t_model_s = t_clock_model_ms * 1e-3;
    Ok(circuit.t_clock_circuit * circuit.i_min * v_th_model
        / (circuit.capacitance * circuit.v_th_circuit * t_model_s))
}

/// Simulate the quantized network on the physical circuit.
///
/// Synapse currents are `I_min * level`; the capacitor voltage integrates
/// `C dv/dt = I_min * sum(level_j * theta(t - t_j))` and a neuron fires at
/// the first clock tick where the voltage has reached `v_th_circuit`.
/// Inputs and outputs are tick indices on the circuit clock; spike times in
/// the returned activities are in seconds. Returns one activity per
/// non-input layer.
pub fn simulate_circuit_network(
    qnet: &QuantizedNetwork,
    circuit: &CircuitParams,
    input_ticks: &[Option<u32>],
    horizon_ticks: u32,
) -> Result<Vec<LayerActivity>> {
    circuit.validate()?;
    if input_ticks.len() != qnet.layer_sizes[0] {
        return Err(Error::Shape(format!(
            "expected {} input tick entries, got {}",
            qnet.layer_sizes[0],
            input_ticks.len()
        )));
    }
    let t_c = circuit.t_clock_circuit;
    let mut current_ticks: Vec<Option<u32>> = input_ticks.to_vec();
    let mut activities = Vec::with_capacity(qnet.levels.len());
    for lm in &qnet.levels {
        let next = circuit_layer_ticks(lm, circuit, &current_ticks, horizon_ticks);
        let activity = LayerActivity {
            spike_times: next
                .iter()
                .map(|p| p.map(|p| p as f64 * t_c))
                .collect(),
            tick_indices: next.clone(),
            causal: None,
            final_potentials: vec![0.0; next.len()],
            traces: None,
        };
        activities.push(activity);
        current_ticks = next;
    }
    Ok(activities)
}

/// One layer of the circuit: pure tick recurrence in volts.
fn circuit_layer_ticks(
    levels: &LevelMatrix,
    circuit: &CircuitParams,
    input_ticks: &[Option<u32>],
    horizon_ticks: u32,
) -> Vec<Option<u32>> {
    // Inputs grouped by tick: arrivals[p] lists source indices at tick p.
    let mut arrivals: Vec<Vec<u32>> = vec![Vec::new(); horizon_ticks as usize + 1];
    for (j, tick) in input_ticks.iter().enumerate() {
        if let Some(p) = tick {
            if *p <= horizon_ticks {
                arrivals[*p as usize].push(j as u32);
            }
        }
    }
    let dv_unit = circuit.i_min * circuit.t_clock_circuit / circuit.capacitance;
    (0..levels.rows)
        .map(|i| {
            let row = levels.row(i);
            let mut v = 0.0f64;
            let mut level_sum = 0i64;
            for p in 0..=horizon_ticks {
                if v >= circuit.v_th_circuit {
                    return Some(p);
                }
                for &j in &arrivals[p as usize] {
                    level_sum += row[j as usize] as i64;
                }
                v += dv_unit * level_sum as f64;
            }
            None
        })
        .collect()
}

/// Sweep template: which constraints the evaluation applies at each grid
/// point. Defaults reproduce the discretization + quantization variant.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepTemplate {
    pub discretize: bool,
    pub quantize: bool,
    pub v_min: Option<f64>,
    pub sigma_vth: f64,
    pub horizon: f64,
    pub seed: u64,
}

impl SweepTemplate {
    pub fn default_for(model: &NetworkModel) -> Self {
        SweepTemplate {
            discretize: true,
            quantize: true,
            v_min: None,
            sigma_vth: 0.0,
            horizon: crate::model::HORIZON_TAU_FACTOR * model.tau,
            seed: 0,
        }
    }
}

/// One grid point of the clock sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub t_clock_model_ms: f64,
    pub w_min: f64,
    pub levels_per_layer: Vec<u32>,
    pub accuracy: f64,
    pub mean_earliest_model_ms: Option<f64>,
    /// Mean earliest output spike latency on the circuit clock, seconds
    /// (tick count times the circuit clock period).
    pub mean_earliest_circuit_s: Option<f64>,
    pub no_spike_rate: f64,
}

/// The selected operating point: the largest model clock period whose
/// accuracy still meets the floor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub t_clock_model_ms: f64,
    pub accuracy: f64,
    pub floor: f64,
}

/// Evaluate the model over a grid of model clock periods with `w_min` tied
/// to each period by the equivalence relation, then select the largest
/// period meeting the accuracy floor (maximal energy efficiency under the
/// constraint).
pub fn sweep_and_select(
    model: &NetworkModel,
    ds: &Dataset,
    circuit: &CircuitParams,
    t_model_grid_ms: &[f64],
    accuracy_floor: f64,
    template: &SweepTemplate,
) -> Result<(Vec<SweepRow>, OperatingPoint)> {
    if t_model_grid_ms.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    if !accuracy_floor.is_finite() {
        return Err(Error::Config("accuracy floor must be finite".into()));
    }
    model.validate()?;
    circuit.validate()?;

    let rows: Vec<SweepRow> = t_model_grid_ms
        .iter()
        .map(|&t_model| {
            let w_min = derive_wmin(circuit, t_model, model.v_th_model)?;
            let qnet = quantize_weights(model, w_min)?;
            let mut cfg =
                ConstraintConfig::unconstrained(model.layer_count(), template.horizon, template.seed);
            if template.discretize {
                cfg = cfg.with_clock(t_model);
            }
            if template.quantize {
                cfg = cfg.with_quantization(w_min);
            }
            if let Some(v_min) = template.v_min {
                cfg = cfg.with_floor(v_min);
            }
            cfg.sigma_vth = template.sigma_vth;
            let enc = EncoderConfig::new(model.tau, 0.0, template.seed);
            let report: EvalReport = evaluate(model, ds, &cfg, &enc)?;
            let mean_earliest_circuit_s = if template.discretize {
                report
                    .mean_earliest_output_tick
                    .map(|ticks| ticks * circuit.t_clock_circuit)
            } else {
                report
                    .mean_earliest_output_time
                    .map(|ms| ms / t_model * circuit.t_clock_circuit)
            };
            Ok(SweepRow {
                t_clock_model_ms: t_model,
                w_min,
                levels_per_layer: qnet.level_counts.clone(),
                accuracy: report.accuracy,
                mean_earliest_model_ms: report.mean_earliest_output_time,
                mean_earliest_circuit_s,
                no_spike_rate: report.no_spike_rate,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best_feasible: Option<&SweepRow> = None;
    let mut best_accuracy = f64::NEG_INFINITY;
    for row in &rows {
        best_accuracy = best_accuracy.max(row.accuracy);
        if row.accuracy >= accuracy_floor
            && best_feasible.map_or(true, |b| row.t_clock_model_ms > b.t_clock_model_ms)
        {
            best_feasible = Some(row);
        }
    }
    let point = best_feasible.ok_or(Error::Infeasible {
        best_accuracy,
    })?;
    let op = OperatingPoint {
        t_clock_model_ms: point.t_clock_model_ms,
        accuracy: point.accuracy,
        floor: accuracy_floor,
    };
    Ok((rows, op))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_network, Matrix};

    #[test]
    fn quantization_examples() {
        let model = NetworkModel {
            layer_sizes: vec![2, 1],
            weights: vec![Matrix::from_rows(vec![vec![0.37, -0.049]]).unwrap()],
            v_th_model: 1.0,
            tau: 5.0,
        };
        let q = quantize_weights(&model, 0.1).unwrap();
        assert_eq!(q.levels[0].as_slice(), &[4, 0]);
        let recon = q.reconstructed();
        assert_eq!(recon.weights[0].get(0, 0), 0.4);
        assert_eq!(recon.weights[0].get(0, 1), 0.0);
        assert!(quantize_weights(&model, 0.0).is_err());
    }

    #[test]
    fn level_count_is_max_abs_level() {
        let model = NetworkModel {
            layer_sizes: vec![3, 1],
            weights: vec![Matrix::from_rows(vec![vec![2.0, -1.3, 0.04]]).unwrap()],
            v_th_model: 1.0,
            tau: 5.0,
        };
        let q = quantize_weights(&model, 0.1).unwrap();
        assert_eq!(q.level_counts, vec![20]);
        assert_eq!(q.max_level_count(), 20);
    }

    #[test]
    fn wmin_arithmetic() {
        // 100 ns * 10 pA * 1 / (100 fF * 1 V * 1 ms) = 0.01
        let circuit = CircuitParams {
            capacitance: 100e-15,
            i_min: 10e-12,
            v_th_circuit: 1.0,
            t_clock_circuit: 100e-9,
        };
        let w = derive_wmin(&circuit, 1.0, 1.0).unwrap();
        assert!((w - 0.01).abs() < 1e-15, "w_min {w}");

        // doubling C halves w_min
        let mut c2 = circuit;
        c2.capacitance *= 2.0;
        assert!((derive_wmin(&c2, 1.0, 1.0).unwrap() - w / 2.0).abs() < 1e-15);

        // halving T_model doubles w_min
        assert!((derive_wmin(&circuit, 0.5, 1.0).unwrap() - 2.0 * w).abs() < 1e-15);
    }

    #[test]
    fn single_synapse_circuit_crossing() {
        // level 100, I_min 10 pA, C 100 fF: slope = 1e4 V/s, so 1 V is
        // reached at 100 us = tick 1000 on a 100 ns clock.
        let model = NetworkModel {
            layer_sizes: vec![1, 1],
            weights: vec![Matrix::from_rows(vec![vec![1.0]]).unwrap()],
            v_th_model: 1.0,
            tau: 5.0,
        };
        let q = quantize_weights(&model, 0.01).unwrap(); // level 100
        assert_eq!(q.levels[0].as_slice(), &[100]);
        let circuit = CircuitParams::default();
        let acts =
            simulate_circuit_network(&q, &circuit, &[Some(0)], 2000).unwrap();
        assert_eq!(acts[0].tick_indices[0], Some(1000));
        assert!((acts[0].spike_times[0].unwrap() - 100e-6).abs() < 1e-18);
    }

    #[test]
    fn zero_current_never_fires() {
        let model = NetworkModel {
            layer_sizes: vec![2, 2],
            weights: vec![Matrix::from_rows(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap()],
            v_th_model: 1.0,
            tau: 5.0,
        };
        let q = quantize_weights(&model, 0.01).unwrap();
        let acts = simulate_circuit_network(&q, &CircuitParams::default(), &[Some(0), Some(5)], 500)
            .unwrap();
        assert!(acts[0].spike_times.iter().all(|t| t.is_none()));
    }

    /// Unit-tagged recomputation of the mapping relation: tagging every
    /// quantity with its SI dimension and simplifying must reproduce the
    /// plain-arithmetic value and cancel all units (the model threshold
    /// carries the model's time dimension, since v = sum(w) * t).
    #[test]
    fn wmin_is_dimensionally_consistent() {
        #[derive(Clone, Copy, PartialEq, Debug)]
        struct Tagged {
            value: f64,
            // exponents: seconds, amperes, farads, volts
            s: i32,
            a: i32,
            f: i32,
            v: i32,
        }
        impl Tagged {
            fn new(value: f64, s: i32, a: i32, f: i32, v: i32) -> Self {
                Tagged { value, s, a, f, v }
            }
            fn mul(self, o: Tagged) -> Tagged {
                Tagged::new(self.value * o.value, self.s + o.s, self.a + o.a, self.f + o.f, self.v + o.v)
            }
            fn div(self, o: Tagged) -> Tagged {
                Tagged::new(self.value / o.value, self.s - o.s, self.a - o.a, self.f - o.f, self.v - o.v)
            }
        }
        let circuit = CircuitParams::default();
        let t_c = Tagged::new(circuit.t_clock_circuit, 1, 0, 0, 0);
        let i_min = Tagged::new(circuit.i_min, 0, 1, 0, 0);
        let c = Tagged::new(circuit.capacitance, 0, 0, 1, 0);
        let v_thc = Tagged::new(circuit.v_th_circuit, 0, 0, 0, 1);
        // The model potential has time dimension (v = w * t with w
        // dimensionless), so the model threshold is tagged as seconds.
        let v_thm = Tagged::new(1.0, 1, 0, 0, 0);
        let t_m = Tagged::new(0.8e-3, 1, 0, 0, 0);
        let charge_step = i_min.mul(t_c).div(c); // A*s/F, i.e. volts
        let w_min_tagged = charge_step.div(v_thc).mul(v_thm).div(t_m);
        // Raw exponents s*A/(F*V); with F = A*s/V this reduces to 1, so the
        // quantization step is dimensionless like the model weights.
        assert_eq!(
            (w_min_tagged.s, w_min_tagged.a, w_min_tagged.f, w_min_tagged.v),
            (1, 1, -1, -1)
        );
        let direct = derive_wmin(&circuit, 0.8, 1.0).unwrap();
        assert!((w_min_tagged.value - direct).abs() < 1e-12 * direct.abs());
    }

    #[test]
    fn raising_the_floor_never_raises_the_selected_clock() {
        let model = init_network(&[4, 3, 2], 5.0, 1.0, 1).unwrap();
        let ds = crate::dataio::Dataset {
            name: crate::dataio::DatasetName::Mnist,
            split: crate::dataio::Split::Test,
            images: vec![200, 30, 90, 250, 10, 240, 128, 77],
            labels: vec![1, 0],
            count: 2,
            rows: 2,
            cols: 2,
        };
        let circuit = CircuitParams::default();
        let template = SweepTemplate::default_for(&model);
        let grid = [0.25, 0.5, 1.0, 2.0];
        let mut last_t = f64::INFINITY;
        let mut floor = 0.0;
        while floor <= 1.0 {
            match sweep_and_select(&model, &ds, &circuit, &grid, floor, &template) {
                Ok((_, op)) => {
                    assert!(
                        op.t_clock_model_ms <= last_t,
                        "floor {floor}: selected {} after {last_t}",
                        op.t_clock_model_ms
                    );
                    last_t = op.t_clock_model_ms;
                }
                Err(Error::Infeasible { .. }) => break,
                Err(e) => panic!("unexpected error {e}"),
            }
            floor += 0.25;
        }
    }

    #[test]
    fn selection_prefers_largest_feasible_clock() {
        // Synthesize rows directly through the public sweep on a tiny model
        // is expensive; the selection rule itself is pure, so exercise it
        // via sweep_and_select on a dataset of one sample with a floor of 0
        // (all feasible -> largest T wins).
        let model = init_network(&[4, 3, 2], 5.0, 1.0, 1).unwrap();
        let ds = crate::dataio::Dataset {
            name: crate::dataio::DatasetName::Mnist,
            split: crate::dataio::Split::Test,
            images: vec![200, 30, 90, 250],
            labels: vec![1],
            count: 1,
            rows: 2,
            cols: 2,
        };
        let circuit = CircuitParams::default();
        let template = SweepTemplate::default_for(&model);
        let grid = [0.5, 1.0, 2.0];
        let (rows, op) =
            sweep_and_select(&model, &ds, &circuit, &grid, 0.0, &template).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(op.t_clock_model_ms, 2.0);

        // An unreachable floor reports infeasibility with the best accuracy.
        match sweep_and_select(&model, &ds, &circuit, &grid, 1.01, &template) {
            Err(Error::Infeasible { best_accuracy }) => assert!(best_accuracy <= 1.0),
            other => panic!("expected infeasible, got {other:?}"),
        }

        // Empty grid is a usage error.
        assert!(sweep_and_select(&model, &ds, &circuit, &[], 0.5, &template).is_err());
    }
}
