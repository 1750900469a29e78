//! End-to-end CLI checks: byte-identical reruns, exit codes, and config
//! embedding in artifacts. These use a synthetic miniature dataset cached
//! in a temp directory, so they run fully offline.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use ttfs::dataio::{save_model, ModelArchive};
use ttfs::model::init_network;

fn ttfs_bin() -> &'static str {
    env!("CARGO_BIN_EXE_ttfs")
}

/// Write a gzipped IDX pair forming a tiny but learnable dataset: bright
/// upper half = class 0, bright lower half = class 1.
fn write_synthetic_dataset(cache: &Path, count: usize) {
    use flate2::write::GzEncoder;
    use std::io::Write;

    let dir = cache.join("mnist");
    fs::create_dir_all(&dir).unwrap();
    let (rows, cols) = (4usize, 4usize);
    let make = |prefix: &str, n: usize, seed: u64| {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        let mut state = seed;
        for i in 0..n {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let class = (i % 2) as u8;
            for p in 0..rows * cols {
                let bright = (p < rows * cols / 2) == (class == 0);
                let noise = ((state >> (p % 32)) & 0x1f) as u8;
                images.push(if bright { 220u8.saturating_add(noise) } else { 40 + noise });
            }
            labels.push(class);
        }
        let mut img_idx = 0x00000803u32.to_be_bytes().to_vec();
        img_idx.extend((n as u32).to_be_bytes());
        img_idx.extend((rows as u32).to_be_bytes());
        img_idx.extend((cols as u32).to_be_bytes());
        img_idx.extend(&images);
        let mut lab_idx = 0x00000801u32.to_be_bytes().to_vec();
        lab_idx.extend((n as u32).to_be_bytes());
        lab_idx.extend(&labels);
        for (name, payload) in [
            (format!("{prefix}-images-idx3-ubyte.gz"), img_idx),
            (format!("{prefix}-labels-idx1-ubyte.gz"), lab_idx),
        ] {
            let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::fast());
            enc.write_all(&payload).unwrap();
            fs::write(dir.join(name), enc.finish().unwrap()).unwrap();
        }
    };
    make("train", count, 11);
    make("t10k", count / 2, 22);
}

fn write_config(path: &Path, cache: &Path, out_dir: &Path, extra: &str) {
    let text = format!(
        "[dataset]\nname = mnist\ncache_dir = {}\n\n[network]\nlayer_sizes = 16,12,2\n\n\
         [train]\nepochs = 8\nbatch_size = 8\nlearning_rate = 0.01\noptimizer = sgd\n\n\
         [run]\nseed = 42\nout_dir = {}\n\n{extra}",
        cache.display(),
        out_dir.display()
    );
    fs::write(path, text).unwrap();
}

fn run_ok(args: &[&str]) -> String {
    let out = Command::new(ttfs_bin()).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {:?} failed: {}\n{}",
        args,
        String::from_utf8_lossy(&out.stderr),
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read_dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.clone(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn commands_are_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    write_synthetic_dataset(&cache, 64);

    let cfg_path = tmp.path().join("exp.ini");
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    let extra = "[constraints]\nt_clock_model_ms = 0.5\ndiscretize = all\n\n\
                 [grid]\nsigma_vth = 0,0.04\nlevels = 8,32\n\n\
                 [sweep]\nt_model_grid_ms = 0.5,1\naccuracy_floor = 0\n\n[traces]\nsamples = 0,1\n";

    // train twice into separate dirs
    write_config(&cfg_path, &cache, &out_a, extra);
    run_ok(&["train", "--config", cfg_path.to_str().unwrap()]);
    run_ok(&[
        "train",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out-dir",
        out_b.to_str().unwrap(),
    ]);
    let model_a = out_a.join("model.json");
    assert_eq!(
        fs::read(&model_a).unwrap(),
        fs::read(out_b.join("model.json")).unwrap(),
        "train must be byte-reproducible"
    );
    assert_eq!(
        fs::read(out_a.join("loss_curve.csv")).unwrap(),
        fs::read(out_b.join("loss_curve.csv")).unwrap()
    );

    // eval / sweep / export-traces: run twice each and compare bytes
    for sub in ["eval", "sweep", "export-traces"] {
        let d1 = tmp.path().join(format!("{sub}-1"));
        let d2 = tmp.path().join(format!("{sub}-2"));
        for d in [&d1, &d2] {
            run_ok(&[
                sub,
                "--config",
                cfg_path.to_str().unwrap(),
                "--model",
                model_a.to_str().unwrap(),
                "--out-dir",
                d.to_str().unwrap(),
            ]);
        }
        let (a, b) = (read_dir_bytes(&d1), read_dir_bytes(&d2));
        assert_eq!(a.len(), b.len(), "{sub} file sets differ");
        for ((pa, ba), (_, bb)) in a.iter().zip(&b) {
            assert_eq!(ba, bb, "{sub}: {} differs between reruns", pa.display());
        }
    }

    // artifacts embed the resolved config
    let eval_csv = fs::read_to_string(tmp.path().join("eval-1").join("eval.csv")).unwrap();
    assert!(eval_csv.contains("# run.seed.resolved = 42"));
    assert!(eval_csv.contains("# dataset.name = mnist"));
}

#[test]
fn exit_codes_classify_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    write_synthetic_dataset(&cache, 16);

    // usage error: unknown flag
    let out = Command::new(ttfs_bin()).args(["train"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "missing --config is usage");

    // config error: unknown key
    let bad = tmp.path().join("bad.ini");
    fs::write(&bad, "[dataset]\nnmae = mnist\n").unwrap();
    let out = Command::new(ttfs_bin())
        .args(["train", "--config", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown key"), "{stderr}");

    // runtime error: dataset not cached (and no network possible)
    let cfg = tmp.path().join("exp.ini");
    write_config(&cfg, &tmp.path().join("empty-cache"), &tmp.path().join("out"), "");
    let out = Command::new(ttfs_bin())
        .args(["train", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // infeasible sweep: nonzero exit, best accuracy printed
    let cfg3 = tmp.path().join("exp3.ini");
    fs::write(
        &cfg3,
        format!(
            "[dataset]\nname = mnist\ncache_dir = {}\n\n[network]\nlayer_sizes = 16,12,2\n\n\
             [train]\nepochs = 1\nbatch_size = 8\nlearning_rate = 0.01\noptimizer = sgd\n\n\
             [run]\nseed = 1\nout_dir = {}\n\n[sweep]\nt_model_grid_ms = 1\naccuracy_floor = 1.01\n",
            cache.display(),
            tmp.path().join("out3").display()
        ),
    )
    .unwrap();
    run_ok(&["train", "--config", cfg3.to_str().unwrap()]);
    let out = Command::new(ttfs_bin())
        .args([
            "sweep",
            "--config",
            cfg3.to_str().unwrap(),
            "--model",
            tmp.path().join("out3").join("model.json").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("best achieved accuracy"), "{stderr}");
}

#[test]
fn fetch_data_is_idempotent_on_cache_hit() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    write_synthetic_dataset(&cache, 8);
    // Also stage the second file pair names fetch-data expects.
    let cfg = tmp.path().join("exp.ini");
    fs::write(
        &cfg,
        format!(
            "[dataset]\nname = mnist\ncache_dir = {}\nmirror_url = http://unreachable.invalid\n",
            cache.display()
        ),
    )
    .unwrap();
    // All four files are present, so no network request is attempted and
    // the command succeeds against an unreachable mirror.
    let out = run_ok(&["fetch-data", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.matches("cached").count(), 4);
}

#[test]
fn unknown_model_version_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    write_synthetic_dataset(&cache, 8);
    let model = init_network(&[16, 4, 2], 5.0, 1.0, 0).unwrap();
    let mut archive = ModelArchive::from_model(&model, serde_json::Value::Null);
    archive.format_version = 9;
    let path = tmp.path().join("model.json");
    save_model(&path, &archive).unwrap();
    let cfg = tmp.path().join("exp.ini");
    write_config(&cfg, &cache, &tmp.path().join("out"), "");
    let out = Command::new(ttfs_bin())
        .args([
            "eval",
            "--config",
            cfg.to_str().unwrap(),
            "--model",
            path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("format version"));
}
