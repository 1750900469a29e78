//! Scratch diagnostic for the toy training problem (not part of the suite).

use ttfs::dataio::{Dataset, DatasetName, Split};
use ttfs::model::{init_network, ConstraintConfig};
use ttfs::simulator::{run_network, RunOptions, SimulationMode};
use ttfs::trainer::{evaluate, train, OptimizerKind, TrainConfig};
use ttfs::EncoderConfig;

fn toy_dataset() -> Dataset {
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

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.05);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(200);
    let seed: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(11);
    let opt = args.get(4).map(|s| s.as_str()).unwrap_or("sgd");

    let ds = toy_dataset();
    let model = init_network(&[4, 8, 2], 5.0, 1.0, seed).unwrap();
    let tcfg = TrainConfig {
        epochs,
        batch_size: 16,
        learning_rate: lr,
        optimizer: if opt == "adam" {
            OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
        } else {
            OptimizerKind::Sgd
        },
        seed,
        ..TrainConfig::default()
    };
    let enc = EncoderConfig::new(5.0, tcfg.jitter_sigma, seed);
    let (trained, curve) = train(&model, &ds, &ds, &tcfg, &enc).unwrap();
    for m in curve.iter().step_by((epochs / 10).max(1)) {
        println!("epoch {:3} loss {:.4} val {:.3}", m.epoch, m.train_loss, m.val_accuracy);
    }
    let report = evaluate(
        &trained,
        &ds,
        &ConstraintConfig::for_model(&trained, 0),
        &EncoderConfig::new(5.0, 0.0, 0),
    )
    .unwrap();
    println!("final accuracy {:.3} no_spike {:.3}", report.accuracy, report.no_spike_rate);
    // Per-sample detail
    let cfg = ConstraintConfig::for_model(&trained, 0);
    for i in 0..ds.count {
        let r = run_network(
            &trained,
            &ds.pixels(i),
            &cfg,
            &EncoderConfig::new(5.0, 0.0, 0),
            SimulationMode::Ideal,
            &RunOptions::default(),
        )
        .unwrap();
        let hid: usize = r.activities[1].spike_times.iter().flatten().count();
        println!(
            "s{i:2} label {} pred {} out {:?} hidden_fired {hid}",
            ds.label(i),
            r.predicted_label,
            r.output().spike_times
        );
    }
}
