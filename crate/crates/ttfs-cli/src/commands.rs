//! Command implementations: each one wires configs to the library and
//! writes plot-ready artifacts into the output directory.

use std::path::Path;

use ttfs::circuit::{sweep_and_select, SweepTemplate};
use ttfs::dataio::{
    fetch_dataset, fmt_f64, load_dataset, load_model, save_model, write_csv, write_json, Dataset,
    DatasetName, HttpTransport, ModelArchive, Split,
};
use ttfs::model::{init_network, validate_config};
use ttfs::simulator::{run_network, RunOptions, SimulationMode, TraceMode};
use ttfs::trainer::{evaluate, train, EvalReport};
use ttfs::{ConstraintConfig, EncoderConfig, Error, NetworkModel, Result};

use crate::config::{
    levels_to_wmin, parse_f64_opt, parse_layer_flags, parse_list_f64, ExperimentConfig,
};

fn load_split(cfg: &ExperimentConfig, split: Split) -> Result<Dataset> {
    let name: DatasetName = cfg.dataset_name.parse()?;
    let ds = load_dataset(&cfg.cache_dir, name, split)?;
    Ok(if cfg.limit > 0 { ds.limited(cfg.limit) } else { ds })
}

fn eval_split_of(cfg: &ExperimentConfig) -> Result<Split> {
    match cfg.eval_split.as_str() {
        "test" => Ok(Split::Test),
        "train" => Ok(Split::Train),
        other => Err(Error::Config(format!(
            "eval_split must be train or test, got {other:?}"
        ))),
    }
}

fn load_archive_model(path: &Path) -> Result<NetworkModel> {
    load_model(path)?.to_model()
}

fn report_row(prefix: Vec<String>, report: &EvalReport) -> Vec<String> {
    let mut row = prefix;
    row.push(fmt_f64(report.accuracy));
    row.push(
        report
            .mean_earliest_output_time
            .map(fmt_f64)
            .unwrap_or_else(|| "none".into()),
    );
    row.push(fmt_f64(report.no_spike_rate));
    row.push(fmt_f64(report.tie_rate));
    row
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let train_ds = load_split(cfg, Split::Train)?;
    let val_ds = load_split(cfg, Split::Test)?;
    let model = init_network(&cfg.layer_sizes, cfg.tau_ms, cfg.v_th_model, cfg.seed)?;
    let enc = EncoderConfig::new(cfg.tau_ms, cfg.train.jitter_sigma, cfg.seed);
    let (trained, curve) = train(&model, &train_ds, &val_ds, &cfg.train, &enc)?;

    let rows: Vec<Vec<String>> = curve
        .iter()
        .map(|m| {
            vec![
                m.epoch.to_string(),
                fmt_f64(m.train_loss),
                fmt_f64(m.val_accuracy),
            ]
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("loss_curve.csv"),
        &cfg.provenance_comments(),
        &["epoch", "train_loss", "val_accuracy"],
        &rows,
    )?;

    let mut provenance = cfg.provenance_json();
    if let Some(last) = curve.last() {
        provenance["final_metrics"] = serde_json::json!({
            "train_loss": last.train_loss,
            "val_accuracy": last.val_accuracy,
            "epochs": curve.len(),
        });
    }
    provenance["train_config"] = serde_json::to_value(&cfg.train)?;
    let archive = ModelArchive::from_model(&trained, provenance);
    save_model(&cfg.out_dir.join("model.json"), &archive)?;
    println!(
        "trained {} epochs; final val accuracy {:.4}; archive at {}",
        curve.len(),
        curve.last().map_or(f64::NAN, |m| m.val_accuracy),
        cfg.out_dir.join("model.json").display()
    );
    Ok(())
}

pub fn cmd_eval(cfg: &ExperimentConfig, model_path: &Path) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let model = load_archive_model(model_path)?;
    let ds = load_split(cfg, eval_split_of(cfg)?)?;
    let enc = EncoderConfig::new(model.tau, 0.0, cfg.seed);
    let base = cfg.base_constraints(&model)?;
    validate_config(&model, &base)?;

    let header = [
        "axis",
        "value",
        "accuracy",
        "mean_earliest_output_time_ms",
        "no_spike_rate",
        "tie_rate",
    ];
    let mut rows: Vec<Vec<String>> = Vec::new();

    let base_report = evaluate(&model, &ds, &base, &enc)?;
    rows.push(report_row(
        vec!["base".into(), "-".into()],
        &base_report,
    ));

    let grid = cfg.sections.get("grid").cloned().unwrap_or_default();
    // Discretization variants cross with the clock axis when both present.
    let disc_variants: Vec<String> = grid
        .get("discretize")
        .map(|v| v.split('|').map(|s| s.trim().to_string()).collect())
        .unwrap_or_default();
    if let Some(ts) = grid.get("t_clock_model_ms") {
        for t in parse_list_f64(ts)? {
            if disc_variants.is_empty() {
                let mut c = base.clone().with_clock(t);
                c.w_min = base.w_min;
                let r = evaluate(&model, &ds, &c, &enc)?;
                rows.push(report_row(vec!["t_clock_model_ms".into(), fmt_f64(t)], &r));
            } else {
                for variant in &disc_variants {
                    let mut c = base.clone();
                    c.t_clock_model = Some(t);
                    c.discretize_flags = parse_layer_flags(variant, model.layer_count())?;
                    let r = evaluate(&model, &ds, &c, &enc)?;
                    rows.push(report_row(
                        vec![format!("discretize:{variant}"), fmt_f64(t)],
                        &r,
                    ));
                }
            }
        }
    }
    if let Some(vs) = grid.get("levels") {
        for spec in vs.split(',') {
            let spec = spec.trim();
            let mut c = base.clone();
            let label;
            if let Some(levels) = parse_f64_opt(spec)? {
                c.w_min = Some(levels_to_wmin(&model, levels)?);
                label = fmt_f64(levels);
            } else {
                c.w_min = None;
                label = "none".into();
            }
            let r = evaluate(&model, &ds, &c, &enc)?;
            rows.push(report_row(vec!["levels".into(), label], &r));
        }
    }
    if let Some(vs) = grid.get("v_min") {
        for spec in vs.split(',') {
            let mut c = base.clone();
            match parse_f64_opt(spec.trim())? {
                Some(v) => {
                    c = c.with_floor(v);
                }
                None => {
                    c.v_min = None;
                    c.clamp_flags.iter_mut().for_each(|f| *f = false);
                }
            }
            let r = evaluate(&model, &ds, &c, &enc)?;
            rows.push(report_row(
                vec!["v_min".into(), spec.trim().to_string()],
                &r,
            ));
        }
    }
    if let Some(vs) = grid.get("sigma_vth") {
        for sigma in parse_list_f64(vs)? {
            let mut c = base.clone();
            c.sigma_vth = sigma;
            let r = evaluate(&model, &ds, &c, &enc)?;
            rows.push(report_row(vec!["sigma_vth".into(), fmt_f64(sigma)], &r));
        }
    }

    write_csv(
        &cfg.out_dir.join("eval.csv"),
        &cfg.provenance_comments(),
        &header,
        &rows,
    )?;

    if cfg.stats_samples > 0 {
        write_potential_stats(cfg, &model, &ds, &enc)?;
    }
    println!(
        "evaluated {} grid cells; baseline accuracy {:.4}; results in {}",
        rows.len(),
        base_report.accuracy,
        cfg.out_dir.join("eval.csv").display()
    );
    Ok(())
}

/// Minimum-potential statistics (V_min disabled) at the stats clock.
fn write_potential_stats(
    cfg: &ExperimentConfig,
    model: &NetworkModel,
    ds: &Dataset,
    enc: &EncoderConfig,
) -> Result<()> {
    let mut c = ConstraintConfig::unconstrained(model.layer_count(), cfg.horizon_ms, cfg.seed);
    if let Some(t) = cfg.stats_t_clock {
        c = c.with_clock(t);
    }
    let n = cfg.stats_samples.min(ds.count);
    let mut minima = Vec::with_capacity(n);
    for i in 0..n {
        let r = run_network(
            model,
            &ds.pixels(i),
            &c,
            enc,
            SimulationMode::Constrained,
            &RunOptions {
                jitter: false,
                traces: TraceMode::OutputLayer,
                sample_index: i as u64,
            },
        )?;
        let (v_min, v_hat) = ttfs::simulator::sample_minima(&r)
            .ok_or_else(|| Error::MissingTraces("stats run".into()))?;
        minima.push((v_min, v_hat));
    }
    let rows: Vec<Vec<String>> = minima
        .iter()
        .enumerate()
        .map(|(i, (a, b))| vec![i.to_string(), fmt_f64(*a), fmt_f64(*b)])
        .collect();
    write_csv(
        &cfg.out_dir.join("potential_minima.csv"),
        &cfg.provenance_comments(),
        &["sample", "v_min", "v_min_pre_earliest"],
        &rows,
    )?;
    Ok(())
}

pub fn cmd_sweep(cfg: &ExperimentConfig, model_path: &Path) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let model = load_archive_model(model_path)?;
    let ds = load_split(cfg, eval_split_of(cfg)?)?;
    let mut template = SweepTemplate::default_for(&model);
    template.horizon = cfg.horizon_ms;
    template.seed = cfg.seed;
    match cfg.sweep_variant.as_str() {
        "disc+quant" => {}
        "disc" => template.quantize = false,
        "quant" => template.discretize = false,
        other => {
            return Err(Error::Config(format!(
                "[sweep] variant must be disc+quant, disc or quant; got {other:?}"
            )))
        }
    }
    let (rows, op) = sweep_and_select(
        &model,
        &ds,
        &cfg.circuit,
        &cfg.sweep_grid,
        cfg.accuracy_floor,
        &template,
    )?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.t_clock_model_ms),
                fmt_f64(r.w_min),
                r.levels_per_layer
                    .iter()
                    .map(|l| l.to_string())
                    .collect::<Vec<_>>()
                    .join("|"),
                fmt_f64(r.accuracy),
                r.mean_earliest_model_ms
                    .map(fmt_f64)
                    .unwrap_or_else(|| "none".into()),
                r.mean_earliest_circuit_s
                    .map(|s| fmt_f64(s * 1e6))
                    .unwrap_or_else(|| "none".into()),
                fmt_f64(r.no_spike_rate),
            ]
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("sweep.csv"),
        &cfg.provenance_comments(),
        &[
            "t_model_ms",
            "w_min",
            "levels",
            "accuracy",
            "mean_spike_time_model_ms",
            "mean_spike_time_circuit_us",
            "no_spike_rate",
        ],
        &csv_rows,
    )?;
    let mut op_json = serde_json::json!({
        "t_model_ms": op.t_clock_model_ms,
        "accuracy": op.accuracy,
        "floor": op.floor,
    });
    op_json["config"] = cfg.provenance_json();
    write_json(&cfg.out_dir.join("operating_point.json"), &op_json)?;
    println!(
        "operating point: t_model = {} ms at accuracy {:.4} (floor {})",
        op.t_clock_model_ms, op.accuracy, op.floor
    );
    Ok(())
}

pub fn cmd_export_traces(cfg: &ExperimentConfig, model_path: &Path) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let model = load_archive_model(model_path)?;
    let split = match cfg.trace_split.as_str() {
        "test" => Split::Test,
        "train" => Split::Train,
        other => {
            return Err(Error::Config(format!(
                "traces.split must be train or test, got {other:?}"
            )))
        }
    };
    let ds = load_split(cfg, split)?;
    let base = cfg.base_constraints(&model)?;
    let enc = EncoderConfig::new(model.tau, 0.0, cfg.seed);
    let mut n_potentials = 0usize;
    let mut n_spikes = 0usize;
    for &sample in &cfg.trace_samples {
        if sample >= ds.count {
            return Err(Error::Config(format!(
                "trace sample {sample} out of range ({} samples)",
                ds.count
            )));
        }
        let r = run_network(
            &model,
            &ds.pixels(sample),
            &base,
            &enc,
            SimulationMode::Constrained,
            &RunOptions {
                jitter: false,
                traces: TraceMode::All,
                sample_index: sample as u64,
            },
        )?;
        let mut potential_rows: Vec<Vec<String>> = Vec::new();
        let mut spike_rows: Vec<Vec<String>> = Vec::new();
        for (layer, act) in r.activities.iter().enumerate() {
            if let Some(traces) = &act.traces {
                for (neuron, trace) in traces.iter().enumerate() {
                    for (t, v) in trace {
                        potential_rows.push(vec![
                            layer.to_string(),
                            neuron.to_string(),
                            fmt_f64(*t),
                            fmt_f64(*v),
                        ]);
                    }
                }
            }
            for (neuron, time) in act.spike_times.iter().enumerate() {
                if let Some(time) = time {
                    let tick = act.tick_indices[neuron]
                        .map(|p| p.to_string())
                        .unwrap_or_else(|| "none".into());
                    spike_rows.push(vec![
                        layer.to_string(),
                        neuron.to_string(),
                        fmt_f64(*time),
                        tick,
                    ]);
                }
            }
        }
        let mut comments = cfg.provenance_comments();
        comments.push(("sample".into(), sample.to_string()));
        n_potentials += potential_rows.len();
        n_spikes += spike_rows.len();
        write_csv(
            &cfg.out_dir.join(format!("potentials_{sample}.csv")),
            &comments,
            &["layer", "neuron", "time_ms", "potential"],
            &potential_rows,
        )?;
        write_csv(
            &cfg.out_dir.join(format!("spikes_{sample}.csv")),
            &comments,
            &["layer", "neuron", "time_ms", "tick"],
            &spike_rows,
        )?;
    }
    println!(
        "exported {n_potentials} potential samples and {n_spikes} spikes for {} input samples to {}",
        cfg.trace_samples.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

pub fn cmd_fetch_data(cfg: &ExperimentConfig, mirror_flag: Option<&str>) -> Result<()> {
    let mirror = mirror_flag.unwrap_or(&cfg.mirror_url);
    if mirror.is_empty() {
        return Err(Error::Config(
            "no mirror url: set [dataset] mirror_url or pass --mirror".into(),
        ));
    }
    let name: DatasetName = cfg.dataset_name.parse()?;
    let paths = fetch_dataset(name, mirror, &cfg.cache_dir, &HttpTransport)?;
    for p in paths {
        println!("cached {}", p.display());
    }
    Ok(())
}
