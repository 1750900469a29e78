//! Continuous-time supervised training (exact gradients, no constraint in
//! the loop) and the evaluation harness that measures accuracy and latency
//! under any constraint configuration.

mod grad;
mod loss;
mod optim;

pub use grad::{backprop_gradients, fan_in_floor};
pub use loss::compute_loss;
pub use optim::OptimizerKind;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::model::{validate_config, ConstraintConfig, Matrix, NetworkModel};
use crate::rng::{mix, Rng};
use crate::simulator::{
    EncoderConfig, PreparedNet, RunOptions, SimNet, SimulationMode, TraceMode,
};
use grad::{add_penalty_grad, backprop_into, penalty_value};
use optim::Optimizer;

/// Fixed work-unit size for batch parallelism. Gradients are reduced in
/// chunk order, so results are independent of the worker count.
const TRAIN_CHUNK: usize = 16;
const EVAL_CHUNK: usize = 256;

const SHUFFLE_TAG: u64 = 0x5348_5546;

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Softmax scale over negative spike times, ms.
    pub gamma: f64,
    /// Training-time input jitter, ms.
    pub jitter_sigma: f64,
    pub seed: u64,
    /// Coefficient of the fan-in hinge penalty.
    pub fan_in_penalty_coeff: f64,
    /// Multiply the learning rate by `lr_decay_factor` once, at the start
    /// of epoch `lr_decay_epoch` (factor 1 disables the schedule).
    pub lr_decay_epoch: usize,
    pub lr_decay_factor: f64,
}

impl Default for TrainConfig {
    /// Plain SGD by default: the spike-time gradients carry millisecond
    /// scale information that per-weight normalization destroys — Adam's
    /// scale-free steps inflate the weight noise until neurons fall silent.
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 128,
            learning_rate: 1e-2,
            optimizer: OptimizerKind::Sgd,
            gamma: 1.0,
            jitter_sigma: 0.1,
            seed: 0,
            fan_in_penalty_coeff: 1e-1,
            lr_decay_epoch: 0,
            lr_decay_factor: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config("gamma must be positive".into()));
        }
        if !(self.jitter_sigma >= 0.0) {
            return Err(Error::Config("jitter_sigma must be non-negative".into()));
        }
        if !(self.fan_in_penalty_coeff >= 0.0) {
            return Err(Error::Config("fan_in_penalty_coeff must be non-negative".into()));
        }
        if !(self.lr_decay_factor > 0.0) {
            return Err(Error::Config("lr_decay_factor must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the loss curve.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// Accuracy and latency metrics of one evaluation run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Mean earliest output spike time in ms, over samples that produced at
    /// least one output spike.
    pub mean_earliest_output_time: Option<f64>,
    /// Mean earliest output spike tick (only when the output layer is
    /// discretized).
    pub mean_earliest_output_tick: Option<f64>,
    /// Fraction of samples with no output spike within the horizon.
    pub no_spike_rate: f64,
    /// Fraction of samples whose earliest output spike time is shared by
    /// two or more neurons.
    pub tie_rate: f64,
    /// Confusion counts, `confusion[true_label][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub samples: usize,
}

struct SampleOutcome {
    label: usize,
    predicted: usize,
    no_spike: bool,
    tie: bool,
    earliest: Option<f64>,
    earliest_tick: Option<u32>,
}

fn simulate_outcome(
    net: &SimNet<'_>,
    ds: &Dataset,
    i: usize,
    cfg: &ConstraintConfig,
    enc: &EncoderConfig,
    pixel_buf: &mut [f64],
) -> Result<SampleOutcome> {
    ds.pixels_into(i, pixel_buf);
    let opts = RunOptions {
        jitter: false,
        traces: TraceMode::None,
        sample_index: i as u64,
    };
    let r = net.run(pixel_buf, cfg, enc, SimulationMode::Constrained, &opts)?;
    let output = r.output();
    let tie = match r.earliest_output_time {
        Some(t0) => output.spike_times.iter().filter(|t| **t == Some(t0)).count() > 1,
        None => false,
    };
    let earliest_tick = r.earliest_output_time.and_then(|t0| {
        output
            .spike_times
            .iter()
            .zip(&output.tick_indices)
            .filter_map(|(t, tick)| (*t == Some(t0)).then_some(*tick).flatten())
            .min()
    });
    Ok(SampleOutcome {
        label: ds.label(i),
        predicted: r.predicted_label,
        no_spike: r.no_output_spike,
        tie,
        earliest: r.earliest_output_time,
        earliest_tick,
    })
}

pub(crate) fn evaluate_view(
    net: &SimNet<'_>,
    ds: &Dataset,
    cfg: &ConstraintConfig,
    enc: &EncoderConfig,
) -> Result<EvalReport> {
    let n_classes = *net.layer_sizes.last().unwrap();
    let indices: Vec<usize> = (0..ds.count).collect();
    let pixel_count = ds.pixel_count();
    let outcomes: Vec<Vec<SampleOutcome>> = indices
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let mut buf = vec![0.0f64; pixel_count];
            chunk
                .iter()
                .map(|&i| simulate_outcome(net, ds, i, cfg, enc, &mut buf))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    let mut correct = 0usize;
    let mut no_spike = 0usize;
    let mut ties = 0usize;
    let mut time_sum = 0.0f64;
    let mut tick_sum = 0.0f64;
    let mut spiking = 0usize;
    let mut ticked = 0usize;
    for o in outcomes.iter().flatten() {
        confusion[o.label][o.predicted] += 1;
        correct += (o.label == o.predicted) as usize;
        no_spike += o.no_spike as usize;
        ties += o.tie as usize;
        if let Some(t) = o.earliest {
            time_sum += t;
            spiking += 1;
        }
        if let Some(p) = o.earliest_tick {
            tick_sum += p as f64;
            ticked += 1;
        }
    }
    let n = ds.count;
    Ok(EvalReport {
        accuracy: correct as f64 / n as f64,
        mean_earliest_output_time: (spiking > 0).then(|| time_sum / spiking as f64),
        mean_earliest_output_tick: (ticked > 0).then(|| tick_sum / ticked as f64),
        no_spike_rate: no_spike as f64 / n as f64,
        tie_rate: ties as f64 / n as f64,
        confusion,
        samples: n,
    })
}

/// Run constrained inference (jitter off) over a dataset and aggregate the
/// report. With every constraint disabled this reproduces exact ideal-mode
/// results bit for bit.
pub fn evaluate(
    model: &NetworkModel,
    ds: &Dataset,
    cfg: &ConstraintConfig,
    enc: &EncoderConfig,
) -> Result<EvalReport> {
    validate_config(model, cfg)?;
    if ds.pixel_count() != model.layer_sizes[0] {
        return Err(Error::Shape(format!(
            "dataset has {} pixels per sample, model expects {}",
            ds.pixel_count(),
            model.layer_sizes[0]
        )));
    }
    let prepared = PreparedNet::new(model, cfg.w_min);
    evaluate_view(&prepared.view(), ds, cfg, enc)
}

/// Train in exact continuous time with input jitter; returns the trained
/// model and the per-epoch loss curve.
pub fn train(
    model: &NetworkModel,
    train_ds: &Dataset,
    val_ds: &Dataset,
    tcfg: &TrainConfig,
    enc: &EncoderConfig,
) -> Result<(NetworkModel, Vec<EpochMetrics>)> {
    tcfg.validate()?;
    model.validate()?;
    if train_ds.pixel_count() != model.layer_sizes[0] {
        return Err(Error::Shape(format!(
            "dataset has {} pixels per sample, model expects {}",
            train_ds.pixel_count(),
            model.layer_sizes[0]
        )));
    }
    let horizon = crate::model::HORIZON_TAU_FACTOR * model.tau;
    let cfg_ideal = ConstraintConfig::unconstrained(model.layer_count(), horizon, tcfg.seed);
    let enc_train = EncoderConfig {
        jitter_sigma: tcfg.jitter_sigma,
        ..*enc
    };
    let c_th = fan_in_floor(model.v_th_model, model.tau);
    let n_classes = model.output_size();

    let mut weights = model.weights.clone();
    let mut weights_t: Vec<Matrix> = weights.iter().map(Matrix::transposed).collect();
    let mut optimizer = Optimizer::new(tcfg.optimizer, tcfg.learning_rate, &weights);
    let mut curve = Vec::with_capacity(tcfg.epochs);
    let mut order: Vec<usize> = (0..train_ds.count).collect();

    for epoch in 0..tcfg.epochs {
        if epoch == tcfg.lr_decay_epoch && tcfg.lr_decay_factor != 1.0 {
            optimizer.scale_learning_rate(tcfg.lr_decay_factor);
        }
        let mut rng = Rng::derive(tcfg.seed, &[SHUFFLE_TAG, epoch as u64]);
        rng.shuffle(&mut order);

        let mut data_loss_sum = 0.0f64;
        let mut penalty_sum = 0.0f64;
        for batch in order.chunks(tcfg.batch_size) {
            let net = SimNet {
                weights: &weights,
                weights_t: &weights_t,
                layer_sizes: &model.layer_sizes,
                v_th: model.v_th_model,
            };
            let chunk_results: Vec<(Vec<Matrix>, f64)> = batch
                .par_chunks(TRAIN_CHUNK)
                .map(|chunk| {
                    let mut grads: Vec<Matrix> = weights
                        .iter()
                        .map(|w| Matrix::zeros(w.rows, w.cols))
                        .collect();
                    let mut loss_sum = 0.0;
                    let mut pixels = vec![0.0f64; train_ds.pixel_count()];
                    for &i in chunk {
                        train_ds.pixels_into(i, &mut pixels);
                        let opts = RunOptions {
                            jitter: true,
                            traces: TraceMode::None,
                            sample_index: mix(&[epoch as u64, i as u64]),
                        };
                        let r =
                            net.run(&pixels, &cfg_ideal, &enc_train, SimulationMode::Ideal, &opts)?;
                        let output = r.output();
                        let times: Vec<f64> = output
                            .spike_times
                            .iter()
                            .map(|t| t.unwrap_or(horizon))
                            .collect();
                        let label = train_ds.label(i);
                        if label >= n_classes {
                            return Err(Error::Config(format!("label {label} out of range")));
                        }
                        let (loss, dl_dt) = compute_loss(&times, label, tcfg.gamma)?;
                        loss_sum += loss;
                        backprop_into(&weights, &r.activities, &dl_dt, &mut grads, 1.0)?;
                    }
                    Ok((grads, loss_sum))
                })
                .collect::<Result<Vec<_>>>()?;

            let inv = 1.0 / batch.len() as f64;
            let mut grads: Vec<Matrix> = weights
                .iter()
                .map(|w| Matrix::zeros(w.rows, w.cols))
                .collect();
            let mut batch_loss = 0.0;
            for (chunk_grads, loss_sum) in &chunk_results {
                batch_loss += loss_sum;
                for (g, cg) in grads.iter_mut().zip(chunk_grads) {
                    for (gv, cv) in g.as_mut_slice().iter_mut().zip(cg.as_slice()) {
                        *gv += cv * inv;
                    }
                }
            }
            let penalty = penalty_value(&weights, tcfg.fan_in_penalty_coeff, c_th);
            add_penalty_grad(&weights, tcfg.fan_in_penalty_coeff, c_th, &mut grads, 1.0);

            let total = batch_loss * inv + penalty;
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            data_loss_sum += batch_loss;
            penalty_sum += penalty * batch.len() as f64;

            optimizer.apply(&mut weights, &grads);
            if weights
                .iter()
                .any(|w| w.as_slice().iter().any(|v| !v.is_finite()))
            {
                return Err(Error::NonFiniteLoss { epoch });
            }
            for (w, wt) in weights.iter().zip(weights_t.iter_mut()) {
                w.transpose_into(wt);
            }
        }

        let net = SimNet {
            weights: &weights,
            weights_t: &weights_t,
            layer_sizes: &model.layer_sizes,
            v_th: model.v_th_model,
        };
        let val_cfg = ConstraintConfig::unconstrained(model.layer_count(), horizon, tcfg.seed);
        let val = evaluate_view(&net, val_ds, &val_cfg, enc)?;
        curve.push(EpochMetrics {
            epoch,
            train_loss: (data_loss_sum + penalty_sum) / train_ds.count as f64,
            val_accuracy: val.accuracy,
        });
    }

    let trained = NetworkModel {
        layer_sizes: model.layer_sizes.clone(),
        weights,
        v_th_model: model.v_th_model,
        tau: model.tau,
    };
    Ok((trained, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{Dataset, DatasetName, Split};
    use crate::model::init_network;
    use crate::simulator::forward_layer_ideal;

    /// 16-sample 4-pixel toy problem. Pixel 0 carries the class (bright =
    /// class 0, dim = class 1), pixels 1-2 are distractors and pixel 3 is a
    /// constant bright timing reference.
    pub(crate) fn toy_dataset() -> Dataset {
        let levels = [64u8, 128, 192, 255];
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for code in 0..16u8 {
            let class_bit = code & 1;
            let d1 = levels[((code >> 1) & 3) as usize];
            let d2 = if (code >> 3) & 1 == 1 { 255 } else { 77 };
            images.extend([if class_bit == 0 { 255 } else { 77 }, d1, d2, 255]);
            labels.push(class_bit);
        }
        Dataset {
            name: DatasetName::Mnist,
            split: Split::Train,
            images,
            labels,
            count: 16,
            rows: 2,
            cols: 2,
        }
    }

    /// A separating weight setting exists: class 0 races on the class pixel,
    /// class 1 races on the reference pixel but is vetoed by an early class
    /// pixel. Verified by direct simulation over all 16 samples.
    #[test]
    fn toy_problem_is_separable() {
        let w = Matrix::from_rows(vec![
            vec![2.5, 0.0, 0.0, 0.0],
            vec![-5.0, 0.0, 0.0, 2.0],
        ])
        .unwrap();
        let enc = EncoderConfig::new(5.0, 0.0, 0);
        let ds = toy_dataset();
        for i in 0..ds.count {
            let act = crate::simulator::encode_input(&ds.pixels(i), &enc, false).unwrap();
            let out = forward_layer_ideal(&w, &act, 1.0, 15.0);
            let (pred, _) = crate::simulator::predict(&out);
            assert_eq!(pred, ds.label(i), "sample {i}");
        }
    }

    #[test]
    fn training_solves_toy_problem() {
        let ds = toy_dataset();
        let model = init_network(&[4, 8, 2], 5.0, 1.0, 11).unwrap();
        let tcfg = TrainConfig {
            epochs: 200,
            batch_size: 16,
            learning_rate: 5e-2,
            seed: 11,
            ..TrainConfig::default()
        };
        let enc = EncoderConfig::new(5.0, tcfg.jitter_sigma, 11);
        let (trained, curve) = train(&model, &ds, &ds, &tcfg, &enc).unwrap();
        let report = evaluate(
            &trained,
            &ds,
            &ConstraintConfig::for_model(&trained, 0),
            &EncoderConfig::new(5.0, 0.0, 0),
        )
        .unwrap();
        assert_eq!(report.accuracy, 1.0, "curve tail: {:?}", &curve[curve.len().saturating_sub(3)..]);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = toy_dataset();
        let model = init_network(&[4, 6, 2], 5.0, 1.0, 3).unwrap();
        let tcfg = TrainConfig {
            epochs: 5,
            batch_size: 8,
            seed: 21,
            ..TrainConfig::default()
        };
        let enc = EncoderConfig::new(5.0, tcfg.jitter_sigma, 21);
        let (a, ca) = train(&model, &ds, &ds, &tcfg, &enc).unwrap();
        let (b, cb) = train(&model, &ds, &ds, &tcfg, &enc).unwrap();
        assert_eq!(a, b, "identical seeds must give identical weights");
        assert_eq!(ca.len(), cb.len());
        for (x, y) in ca.iter().zip(&cb) {
            assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
        }
    }

    #[test]
    fn first_epoch_descends_on_toy_problem() {
        // Zero jitter, zero penalty, small learning rate: the loss after one
        // epoch must be below the initial loss.
        let ds = toy_dataset();
        let model = init_network(&[4, 8, 2], 5.0, 1.0, 11).unwrap();
        let enc = EncoderConfig::new(5.0, 0.0, 0);
        let eval_loss = |m: &NetworkModel| -> f64 {
            let horizon = 15.0;
            let cfg = ConstraintConfig::for_model(m, 0);
            let mut total = 0.0;
            for i in 0..ds.count {
                let r = crate::simulator::run_network(
                    m,
                    &ds.pixels(i),
                    &cfg,
                    &enc,
                    SimulationMode::Ideal,
                    &RunOptions::default(),
                )
                .unwrap();
                let times: Vec<f64> = r
                    .output()
                    .spike_times
                    .iter()
                    .map(|t| t.unwrap_or(horizon))
                    .collect();
                total += compute_loss(&times, ds.label(i), 1.0).unwrap().0;
            }
            total / ds.count as f64
        };
        let before = eval_loss(&model);
        let tcfg = TrainConfig {
            epochs: 1,
            batch_size: 4,
            learning_rate: 1e-4,
            jitter_sigma: 0.0,
            fan_in_penalty_coeff: 0.0,
            seed: 5,
            ..TrainConfig::default()
        };
        let (after_model, _) = train(&model, &ds, &ds, &tcfg, &enc).unwrap();
        let after = eval_loss(&after_model);
        assert!(
            after < before,
            "loss should decrease: before {before}, after {after}"
        );
    }

    #[test]
    fn evaluate_all_constraints_off_equals_ideal_exactly() {
        let ds = toy_dataset();
        let model = init_network(&[4, 6, 2], 5.0, 1.0, 9).unwrap();
        let enc = EncoderConfig::new(5.0, 0.0, 0);
        let cfg = ConstraintConfig::for_model(&model, 0);
        let report = evaluate(&model, &ds, &cfg, &enc).unwrap();
        // Reference: explicit ideal-mode runs.
        let mut correct = 0;
        for i in 0..ds.count {
            let r = crate::simulator::run_network(
                &model,
                &ds.pixels(i),
                &cfg,
                &enc,
                SimulationMode::Ideal,
                &RunOptions {
                    sample_index: i as u64,
                    ..Default::default()
                },
            )
            .unwrap();
            correct += (r.predicted_label == ds.label(i)) as usize;
        }
        assert_eq!(report.accuracy, correct as f64 / ds.count as f64);
    }

    #[test]
    fn diverging_training_is_reported() {
        let ds = toy_dataset();
        let model = init_network(&[4, 4, 2], 5.0, 1.0, 2).unwrap();
        let tcfg = TrainConfig {
            epochs: 3,
            batch_size: 16,
            learning_rate: f64::MAX, // guaranteed blow-up
            ..TrainConfig::default()
        };
        let enc = EncoderConfig::new(5.0, 0.1, 2);
        match train(&model, &ds, &ds, &tcfg, &enc) {
            Err(Error::NonFiniteLoss { .. }) => {}
            other => panic!("expected divergence error, got {other:?}"),
        }
    }
}
