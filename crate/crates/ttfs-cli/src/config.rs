//! Flat sectioned key-value experiment configs (INI-like):
//!
//! ```text
//! [dataset]
//! name = mnist
//! cache_dir = data
//!
//! [constraints]
//! t_clock_model_ms = 2
//! discretize = all
//! ```
//!
//! `#` and `;` start comments. Unknown sections or keys are errors so typos
//! surface immediately. Command-line flags override config keys; the
//! `TTFS_CACHE_DIR` environment variable overrides the cache directory.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ttfs::model::{CircuitParams, DEFAULT_TAU_MS, DEFAULT_V_TH_MODEL, HORIZON_TAU_FACTOR};
use ttfs::trainer::{OptimizerKind, TrainConfig};
use ttfs::{ConstraintConfig, Error, NetworkModel, Result};

pub type Sections = BTreeMap<String, BTreeMap<String, String>>;

pub fn parse_sections(text: &str) -> Result<Sections> {
    let mut sections: Sections = BTreeMap::new();
    let mut current = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let no_hash = raw.split_once('#').map_or(raw, |(a, _)| a);
        let line = no_hash.split_once(';').map_or(no_hash, |(a, _)| a).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::Config(format!("line {}: unterminated section", lineno + 1)))?;
            current = name.trim().to_string();
            sections.entry(current.clone()).or_default();
        } else if let Some((k, v)) = line.split_once('=') {
            if current.is_empty() {
                return Err(Error::Config(format!(
                    "line {}: key outside any section",
                    lineno + 1
                )));
            }
            sections
                .get_mut(&current)
                .unwrap()
                .insert(k.trim().to_string(), v.trim().to_string());
        } else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value` or `[section]`",
                lineno + 1
            )));
        }
    }
    Ok(sections)
}

const KNOWN: &[(&str, &[&str])] = &[
    ("dataset", &["name", "cache_dir", "mirror_url", "limit", "eval_split"]),
    ("network", &["layer_sizes", "v_th_model", "tau_ms"]),
    (
        "train",
        &[
            "epochs",
            "batch_size",
            "learning_rate",
            "optimizer",
            "adam_beta1",
            "adam_beta2",
            "adam_epsilon",
            "gamma_ms",
            "jitter_sigma_ms",
            "fan_in_penalty_coeff",
            "lr_decay_epoch",
            "lr_decay_factor",
        ],
    ),
    (
        "constraints",
        &[
            "t_clock_model_ms",
            "discretize",
            "w_min",
            "levels",
            "v_min",
            "clamp",
            "sigma_vth",
            "horizon_ms",
        ],
    ),
    (
        "grid",
        &["t_clock_model_ms", "levels", "v_min", "sigma_vth", "discretize"],
    ),
    (
        "circuit",
        &["capacitance_f", "i_min_a", "v_th_circuit_v", "t_clock_circuit_s"],
    ),
    ("sweep", &["t_model_grid_ms", "accuracy_floor", "variant"]),
    ("stats", &["samples", "t_clock_model_ms"]),
    ("traces", &["samples", "split"]),
    ("run", &["seed", "out_dir", "workers"]),
];

fn check_known(sections: &Sections) -> Result<()> {
    for (section, keys) in sections {
        let known = KNOWN
            .iter()
            .find(|(s, _)| s == section)
            .map(|(_, k)| *k)
            .ok_or_else(|| Error::Config(format!("unknown config section [{section}]")))?;
        for key in keys.keys() {
            if !known.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "unknown key `{key}` in section [{section}]"
                )));
            }
        }
    }
    Ok(())
}

/// Fully resolved experiment configuration.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub sections: Sections,
    pub dataset_name: String,
    pub cache_dir: PathBuf,
    pub mirror_url: String,
    pub limit: usize,
    pub eval_split: String,
    pub layer_sizes: Vec<usize>,
    pub v_th_model: f64,
    pub tau_ms: f64,
    pub train: TrainConfig,
    pub horizon_ms: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub circuit: CircuitParams,
    pub sweep_grid: Vec<f64>,
    pub accuracy_floor: f64,
    pub sweep_variant: String,
    pub stats_samples: usize,
    pub stats_t_clock: Option<f64>,
    pub trace_samples: Vec<usize>,
    pub trace_split: String,
}

fn get<'a>(sections: &'a Sections, section: &str, key: &str) -> Option<&'a str> {
    sections.get(section).and_then(|s| s.get(key)).map(|s| s.as_str())
}

fn parse_num<T: std::str::FromStr>(section: &str, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| {
        Error::Config(format!("[{section}] {key} = {v:?} is not a valid number"))
    })
}

pub fn parse_f64_opt(v: &str) -> Result<Option<f64>> {
    if v == "none" {
        Ok(None)
    } else {
        v.parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{v:?} is not a number or `none`")))
    }
}

pub fn parse_list_f64(v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{x:?} is not a number")))
        })
        .collect()
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let sections = parse_sections(&text)?;
        check_known(&sections)?;
        Self::from_sections(sections)
    }

    pub fn from_sections(sections: Sections) -> Result<ExperimentConfig> {
        let s = &sections;
        let dataset_name = get(s, "dataset", "name").unwrap_or("mnist").to_string();
        let cache_dir = std::env::var("TTFS_CACHE_DIR")
            .unwrap_or_else(|_| get(s, "dataset", "cache_dir").unwrap_or("data").to_string());
        let mirror_url = get(s, "dataset", "mirror_url").unwrap_or("").to_string();
        let limit = match get(s, "dataset", "limit") {
            Some(v) => parse_num("dataset", "limit", v)?,
            None => 0,
        };
        let eval_split = get(s, "dataset", "eval_split").unwrap_or("test").to_string();

        let layer_sizes = match get(s, "network", "layer_sizes") {
            Some(v) => v
                .split(',')
                .map(|x| parse_num("network", "layer_sizes", x.trim()))
                .collect::<Result<Vec<usize>>>()?,
            None => vec![784, 800, 10],
        };
        let v_th_model = match get(s, "network", "v_th_model") {
            Some(v) => parse_num("network", "v_th_model", v)?,
            None => DEFAULT_V_TH_MODEL,
        };
        let tau_ms = match get(s, "network", "tau_ms") {
            Some(v) => parse_num("network", "tau_ms", v)?,
            None => DEFAULT_TAU_MS,
        };

        let mut train = TrainConfig::default();
        if let Some(v) = get(s, "train", "epochs") {
            train.epochs = parse_num("train", "epochs", v)?;
        }
        if let Some(v) = get(s, "train", "batch_size") {
            train.batch_size = parse_num("train", "batch_size", v)?;
        }
        if let Some(v) = get(s, "train", "learning_rate") {
            train.learning_rate = parse_num("train", "learning_rate", v)?;
        }
        if let Some(v) = get(s, "train", "gamma_ms") {
            train.gamma = parse_num("train", "gamma_ms", v)?;
        }
        if let Some(v) = get(s, "train", "jitter_sigma_ms") {
            train.jitter_sigma = parse_num("train", "jitter_sigma_ms", v)?;
        }
        if let Some(v) = get(s, "train", "fan_in_penalty_coeff") {
            train.fan_in_penalty_coeff = parse_num("train", "fan_in_penalty_coeff", v)?;
        }
        if let Some(v) = get(s, "train", "lr_decay_epoch") {
            train.lr_decay_epoch = parse_num("train", "lr_decay_epoch", v)?;
        }
        if let Some(v) = get(s, "train", "lr_decay_factor") {
            train.lr_decay_factor = parse_num("train", "lr_decay_factor", v)?;
        }
        match get(s, "train", "optimizer") {
            Some("sgd") => train.optimizer = OptimizerKind::Sgd,
            Some("adam") | None => {
                let beta1 = match get(s, "train", "adam_beta1") {
                    Some(v) => parse_num("train", "adam_beta1", v)?,
                    None => 0.9,
                };
                let beta2 = match get(s, "train", "adam_beta2") {
                    Some(v) => parse_num("train", "adam_beta2", v)?,
                    None => 0.999,
                };
                let epsilon = match get(s, "train", "adam_epsilon") {
                    Some(v) => parse_num("train", "adam_epsilon", v)?,
                    None => 1e-8,
                };
                train.optimizer = OptimizerKind::Adam {
                    beta1,
                    beta2,
                    epsilon,
                };
            }
            Some(other) => {
                return Err(Error::Config(format!(
                    "[train] optimizer = {other:?} (expected sgd or adam)"
                )))
            }
        }

        let horizon_ms = match get(s, "constraints", "horizon_ms") {
            Some(v) => parse_num("constraints", "horizon_ms", v)?,
            None => HORIZON_TAU_FACTOR * tau_ms,
        };
        let seed = match get(s, "run", "seed") {
            Some(v) => parse_num("run", "seed", v)?,
            None => 0,
        };
        train.seed = seed;
        let out_dir = PathBuf::from(get(s, "run", "out_dir").unwrap_or("runs/out"));
        let workers = match get(s, "run", "workers") {
            Some(v) => parse_num("run", "workers", v)?,
            None => 0,
        };

        let mut circuit = CircuitParams::default();
        if let Some(v) = get(s, "circuit", "capacitance_f") {
            circuit.capacitance = parse_num("circuit", "capacitance_f", v)?;
        }
        if let Some(v) = get(s, "circuit", "i_min_a") {
            circuit.i_min = parse_num("circuit", "i_min_a", v)?;
        }
        if let Some(v) = get(s, "circuit", "v_th_circuit_v") {
            circuit.v_th_circuit = parse_num("circuit", "v_th_circuit_v", v)?;
        }
        if let Some(v) = get(s, "circuit", "t_clock_circuit_s") {
            circuit.t_clock_circuit = parse_num("circuit", "t_clock_circuit_s", v)?;
        }

        let sweep_grid = match get(s, "sweep", "t_model_grid_ms") {
            Some(v) => parse_list_f64(v)?,
            None => vec![0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0],
        };
        let accuracy_floor = match get(s, "sweep", "accuracy_floor") {
            Some(v) => parse_num("sweep", "accuracy_floor", v)?,
            None => 0.98,
        };
        let sweep_variant = get(s, "sweep", "variant").unwrap_or("disc+quant").to_string();

        let stats_samples = match get(s, "stats", "samples") {
            Some(v) => parse_num("stats", "samples", v)?,
            None => 0,
        };
        let stats_t_clock = match get(s, "stats", "t_clock_model_ms") {
            Some(v) => parse_f64_opt(v)?,
            None => None,
        };
        let trace_samples = match get(s, "traces", "samples") {
            Some(v) => v
                .split(',')
                .map(|x| parse_num("traces", "samples", x.trim()))
                .collect::<Result<Vec<usize>>>()?,
            None => vec![0],
        };
        let trace_split = get(s, "traces", "split").unwrap_or("test").to_string();

        Ok(ExperimentConfig {
            sections,
            dataset_name,
            cache_dir: PathBuf::from(cache_dir),
            mirror_url,
            limit,
            eval_split,
            layer_sizes,
            v_th_model,
            tau_ms,
            train,
            horizon_ms,
            seed,
            out_dir,
            workers,
            circuit,
            sweep_grid,
            accuracy_floor,
            sweep_variant,
            stats_samples,
            stats_t_clock,
            trace_samples,
            trace_split,
        })
    }

    /// Base constraint configuration from the `[constraints]` section.
    pub fn base_constraints(&self, model: &NetworkModel) -> Result<ConstraintConfig> {
        let s = &self.sections;
        let mut cfg =
            ConstraintConfig::unconstrained(model.layer_count(), self.horizon_ms, self.seed);
        if let Some(v) = get(s, "constraints", "t_clock_model_ms") {
            cfg.t_clock_model = parse_f64_opt(v)?;
        }
        if let Some(v) = get(s, "constraints", "discretize") {
            cfg.discretize_flags = parse_layer_flags(v, model.layer_count())?;
            if cfg.any_discretization() && cfg.t_clock_model.is_none() {
                return Err(Error::Config(
                    "[constraints] discretize set but t_clock_model_ms is none".into(),
                ));
            }
        } else if cfg.t_clock_model.is_some() {
            cfg.discretize_flags = vec![true; model.layer_count()];
        }
        if let Some(v) = get(s, "constraints", "w_min") {
            cfg.w_min = parse_f64_opt(v)?;
        }
        if let Some(v) = get(s, "constraints", "levels") {
            if let Some(levels) = parse_f64_opt(v)? {
                cfg.w_min = Some(levels_to_wmin(model, levels)?);
            }
        }
        if let Some(v) = get(s, "constraints", "v_min") {
            cfg.v_min = parse_f64_opt(v)?;
        }
        if cfg.v_min.is_some() {
            let spec = get(s, "constraints", "clamp").unwrap_or("all");
            cfg.clamp_flags = parse_clamp_flags(spec, model.layer_count())?;
        }
        if let Some(v) = get(s, "constraints", "sigma_vth") {
            cfg.sigma_vth = parse_num("constraints", "sigma_vth", v)?;
        }
        Ok(cfg)
    }

    /// Lines embedded at the top of every output artifact.
    pub fn provenance_comments(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (section, keys) in &self.sections {
            for (k, v) in keys {
                out.push((format!("{section}.{k}"), v.clone()));
            }
        }
        out.push(("run.seed.resolved".into(), self.seed.to_string()));
        out
    }

    pub fn provenance_json(&self) -> serde_json::Value {
        let mut cfg = serde_json::Map::new();
        for (section, keys) in &self.sections {
            let mut sec = serde_json::Map::new();
            for (k, v) in keys {
                sec.insert(k.clone(), serde_json::Value::String(v.clone()));
            }
            cfg.insert(section.clone(), serde_json::Value::Object(sec));
        }
        serde_json::json!({
            "config": serde_json::Value::Object(cfg),
            "seed": self.seed,
            "dataset": self.dataset_name,
        })
    }
}

/// Quantization step giving `levels` representable magnitudes over the
/// model's largest weight.
pub fn levels_to_wmin(model: &NetworkModel, levels: f64) -> Result<f64> {
    if !(levels >= 1.0) {
        return Err(Error::Config(format!("levels must be >= 1, got {levels}")));
    }
    let max_abs = model
        .weights
        .iter()
        .flat_map(|w| w.as_slice().iter())
        .fold(0.0f64, |acc, &w| acc.max(w.abs()));
    if max_abs == 0.0 {
        return Err(Error::Config("model has all-zero weights".into()));
    }
    Ok(max_abs / levels)
}

/// Layer-flag spec: `all`, `none`, or a comma list of `input`, `hidden`,
/// `output` (for deeper nets, `hidden` marks every interior layer).
pub fn parse_layer_flags(spec: &str, layer_count: usize) -> Result<Vec<bool>> {
    let mut flags = vec![false; layer_count];
    match spec {
        "all" => flags.iter_mut().for_each(|f| *f = true),
        "none" => {}
        list => {
            for part in list.split(',') {
                match part.trim() {
                    "input" => flags[0] = true,
                    "output" => flags[layer_count - 1] = true,
                    "hidden" => flags[1..layer_count - 1].iter_mut().for_each(|f| *f = true),
                    other => {
                        return Err(Error::Config(format!(
                            "bad layer flag {other:?} (expected input/hidden/output/all/none)"
                        )))
                    }
                }
            }
        }
    }
    Ok(flags)
}

/// Clamp-flag spec over non-input layers: `all`, `none`, `hidden`, `output`
/// or a comma list.
pub fn parse_clamp_flags(spec: &str, layer_count: usize) -> Result<Vec<bool>> {
    let n = layer_count - 1;
    let mut flags = vec![false; n];
    match spec {
        "all" => flags.iter_mut().for_each(|f| *f = true),
        "none" => {}
        list => {
            for part in list.split(',') {
                match part.trim() {
                    "output" => flags[n - 1] = true,
                    "hidden" => flags[..n - 1].iter_mut().for_each(|f| *f = true),
                    other => {
                        return Err(Error::Config(format!(
                            "bad clamp flag {other:?} (expected hidden/output/all/none)"
                        )))
                    }
                }
            }
        }
    }
    Ok(flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let text = "# top comment\n[dataset]\nname = mnist ; trailing\ncache_dir = data\n\n[run]\nseed = 7\n";
        let s = parse_sections(text).unwrap();
        assert_eq!(s["dataset"]["name"], "mnist");
        assert_eq!(s["run"]["seed"], "7");
    }

    #[test]
    fn rejects_unknown_keys() {
        let s = parse_sections("[dataset]\nnmae = mnist\n").unwrap();
        assert!(check_known(&s).is_err());
        let s = parse_sections("[datasets]\nname = mnist\n").unwrap();
        assert!(check_known(&s).is_err());
    }

    #[test]
    fn layer_flags() {
        assert_eq!(parse_layer_flags("all", 3).unwrap(), vec![true; 3]);
        assert_eq!(
            parse_layer_flags("input,output", 3).unwrap(),
            vec![true, false, true]
        );
        assert_eq!(
            parse_layer_flags("hidden", 4).unwrap(),
            vec![false, true, true, false]
        );
        assert!(parse_layer_flags("middle", 3).is_err());
    }

    #[test]
    fn defaults_resolve() {
        let cfg = ExperimentConfig::from_sections(Sections::new()).unwrap();
        assert_eq!(cfg.layer_sizes, vec![784, 800, 10]);
        assert_eq!(cfg.train.epochs, 30);
        assert_eq!(cfg.sweep_grid.len(), 10);
    }
}
