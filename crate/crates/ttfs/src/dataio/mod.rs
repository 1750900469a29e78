//! Dataset acquisition and parsing, pixel normalization, model archives and
//! metric export.

mod archive;
mod export;
mod idx;

pub use archive::{load_model, save_model, ModelArchive, ARCHIVE_FORMAT_VERSION};
pub use export::{fmt_f64, write_csv, write_json};
pub use idx::{parse_idx, IdxTensor, MAGIC_IMAGES, MAGIC_LABELS};

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Supported datasets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetName {
    Mnist,
    FashionMnist,
}

impl DatasetName {
    pub fn dir_name(&self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::FashionMnist => "fashion-mnist",
        }
    }
}

impl FromStr for DatasetName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetName::Mnist),
            "fashion-mnist" | "fashion_mnist" => Ok(DatasetName::FashionMnist),
            other => Err(Error::Config(format!(
                "unknown dataset {other:?} (expected mnist or fashion-mnist)"
            ))),
        }
    }
}

impl std::fmt::Display for DatasetName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.dir_name())
    }
}

/// Train/test split tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn file_prefix(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

const FILE_NAMES: [&str; 4] = [
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
];

const MAX_LABEL: u8 = 9;

/// An immutable, fully loaded dataset split.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: DatasetName,
    pub split: Split,
    /// Row-major image bytes, `count * rows * cols`.
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Dataset {
    fn from_tensors(
        name: DatasetName,
        split: Split,
        images: IdxTensor,
        labels: IdxTensor,
    ) -> Result<Dataset> {
        if images.magic != MAGIC_IMAGES {
            return Err(Error::Idx("image file does not hold an image tensor".into()));
        }
        if labels.magic != MAGIC_LABELS {
            return Err(Error::Idx("label file does not hold a label vector".into()));
        }
        let (count, rows, cols) = (images.dims[0], images.dims[1], images.dims[2]);
        if labels.dims[0] != count {
            return Err(Error::Idx(format!(
                "{count} images but {} labels",
                labels.dims[0]
            )));
        }
        if let Some(bad) = labels.data.iter().find(|&&l| l > MAX_LABEL) {
            return Err(Error::Idx(format!("label {bad} out of range")));
        }
        Ok(Dataset {
            name,
            split,
            images: images.data,
            labels: labels.data,
            count,
            rows,
            cols,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image_bytes(&self, i: usize) -> &[u8] {
        let n = self.pixel_count();
        &self.images[i * n..(i + 1) * n]
    }

    /// Normalized pixels of sample `i`.
    pub fn pixels(&self, i: usize) -> Vec<f64> {
        normalize_pixels(self.image_bytes(i))
    }

    pub fn pixels_into(&self, i: usize, out: &mut [f64]) {
        for (o, &b) in out.iter_mut().zip(self.image_bytes(i)) {
            *o = b as f64 / 255.0;
        }
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    /// Truncate to the first `n` samples (for desk-scale runs).
    pub fn limited(mut self, n: usize) -> Dataset {
        if n < self.count {
            self.count = n;
            self.images.truncate(n * self.pixel_count());
            self.labels.truncate(n);
        }
        self
    }
}

/// Map bytes 0..=255 to [0, 1]. Zero stays exactly 0, which the encoder
/// turns into "no spike".
pub fn normalize_pixels(raw: &[u8]) -> Vec<f64> {
    raw.iter().map(|&b| b as f64 / 255.0).collect()
}

fn gunzip(path: &Path) -> Result<Vec<u8>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    flate2::read::GzDecoder::new(file)
        .read_to_end(&mut out)
        .map_err(|e| Error::Gzip {
            file: path.display().to_string(),
            source: e,
        })?;
    Ok(out)
}

/// Load one split of a cached dataset.
pub fn load_dataset(cache_dir: &Path, name: DatasetName, split: Split) -> Result<Dataset> {
    let dir = cache_dir.join(name.dir_name());
    let prefix = split.file_prefix();
    let images_path = dir.join(format!("{prefix}-images-idx3-ubyte.gz"));
    let labels_path = dir.join(format!("{prefix}-labels-idx1-ubyte.gz"));
    for p in [&images_path, &labels_path] {
        if !p.exists() {
            return Err(Error::Fetch(format!(
                "{} is not cached; run fetch-data or point the cache at existing files",
                p.display()
            )));
        }
    }
    let images = parse_idx(&gunzip(&images_path)?)?;
    let labels = parse_idx(&gunzip(&labels_path)?)?;
    Dataset::from_tensors(name, split, images, labels)
}

/// Byte-fetching abstraction so the cache logic is testable offline.
pub trait Transport {
    fn get(&self, url: &str) -> Result<Vec<u8>>;
}

/// Blocking HTTP transport.
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<Vec<u8>> {
        let response = reqwest::blocking::get(url)
            .map_err(|e| Error::Fetch(format!("GET {url}: {e}")))?;
        if !response.status().is_success() {
            return Err(Error::Fetch(format!(
                "GET {url}: HTTP {}",
                response.status()
            )));
        }
        let bytes = response
            .bytes()
            .map_err(|e| Error::Fetch(format!("GET {url}: {e}")))?;
        Ok(bytes.to_vec())
    }
}

struct FileLock {
    path: PathBuf,
}

impl FileLock {
    /// Serialize concurrent fetchers of the same file. Waits up to a minute
    /// for a competing download before giving up.
    fn acquire(path: PathBuf) -> Result<FileLock> {
        let deadline = std::time::Instant::now() + std::time::Duration::from_secs(60);
        loop {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => return Ok(FileLock { path }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    if std::time::Instant::now() > deadline {
                        return Err(Error::Fetch(format!(
                            "lock file {} held too long",
                            path.display()
                        )));
                    }
                    std::thread::sleep(std::time::Duration::from_millis(50));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}

impl Drop for FileLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Download any missing files of a dataset into the cache.
///
/// Cached files are never re-fetched (cache hits make no transport calls).
/// Downloads are verified — gunzip plus a full IDX parse — before an atomic
/// rename into place, and a lock file serializes concurrent fetchers.
pub fn fetch_dataset(
    name: DatasetName,
    mirror_url: &str,
    cache_dir: &Path,
    transport: &dyn Transport,
) -> Result<Vec<PathBuf>> {
    let dir = cache_dir.join(name.dir_name());
    fs::create_dir_all(&dir)?;
    let base = mirror_url.trim_end_matches('/');
    let mut paths = Vec::with_capacity(FILE_NAMES.len());
    for file in FILE_NAMES {
        let target = dir.join(file);
        if !target.exists() {
            let _lock = FileLock::acquire(dir.join(format!("{file}.lock")))?;
            if !target.exists() {
                let url = format!("{base}/{file}");
                let bytes = transport.get(&url)?;
                // Verify before committing to the cache.
                let mut decoded = Vec::new();
                flate2::read::GzDecoder::new(&bytes[..])
                    .read_to_end(&mut decoded)
                    .map_err(|e| Error::Gzip {
                        file: url.clone(),
                        source: e,
                    })?;
                parse_idx(&decoded)?;
                let tmp = dir.join(format!("{file}.partial"));
                fs::write(&tmp, &bytes)?;
                fs::rename(&tmp, &target)?;
            }
        }
        paths.push(target);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;
    use std::collections::HashMap;

    struct MockTransport {
        files: HashMap<String, Vec<u8>>,
        calls: RefCell<Vec<String>>,
    }

    impl Transport for MockTransport {
        fn get(&self, url: &str) -> Result<Vec<u8>> {
            self.calls.borrow_mut().push(url.to_string());
            self.files
                .get(url)
                .cloned()
                .ok_or_else(|| Error::Fetch(format!("404 {url}")))
        }
    }

    fn gz(bytes: &[u8]) -> Vec<u8> {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::fast());
        enc.write_all(bytes).unwrap();
        enc.finish().unwrap()
    }

    fn tiny_idx_images(n: u8) -> Vec<u8> {
        let mut v = MAGIC_IMAGES.to_be_bytes().to_vec();
        v.extend((n as u32).to_be_bytes());
        v.extend(2u32.to_be_bytes());
        v.extend(2u32.to_be_bytes());
        v.extend(std::iter::repeat(128u8).take(n as usize * 4));
        v
    }

    fn tiny_idx_labels(n: u8) -> Vec<u8> {
        let mut v = MAGIC_LABELS.to_be_bytes().to_vec();
        v.extend((n as u32).to_be_bytes());
        v.extend((0..n).map(|i| i % 10));
        v
    }

    fn mock_with_all_files(base: &str) -> MockTransport {
        let mut files = HashMap::new();
        for file in FILE_NAMES {
            let payload = if file.contains("images") {
                gz(&tiny_idx_images(5))
            } else {
                gz(&tiny_idx_labels(5))
            };
            files.insert(format!("{base}/{file}"), payload);
        }
        MockTransport {
            files,
            calls: RefCell::new(vec![]),
        }
    }

    #[test]
    fn fetch_then_cache_hit_makes_no_network_calls() {
        let dir = tempfile::tempdir().unwrap();
        let base = "http://mirror.example";
        let t = mock_with_all_files(base);
        fetch_dataset(DatasetName::Mnist, base, dir.path(), &t).unwrap();
        assert_eq!(t.calls.borrow().len(), 4);
        fetch_dataset(DatasetName::Mnist, base, dir.path(), &t).unwrap();
        assert_eq!(t.calls.borrow().len(), 4, "cache hit must not refetch");
        let ds = load_dataset(dir.path(), DatasetName::Mnist, Split::Train).unwrap();
        assert_eq!(ds.count, 5);
        assert_eq!(ds.pixel_count(), 4);
    }

    #[test]
    fn corrupted_download_is_rejected_and_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let base = "http://mirror.example";
        let mut t = mock_with_all_files(base);
        t.files
            .insert(format!("{base}/{}", FILE_NAMES[0]), b"not gzip".to_vec());
        let err = fetch_dataset(DatasetName::Mnist, base, dir.path(), &t).unwrap_err();
        assert!(err.to_string().contains("decompression"), "{err}");
        assert!(!dir.path().join("mnist").join(FILE_NAMES[0]).exists());
    }

    #[test]
    fn corrupted_cached_gzip_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("mnist");
        fs::create_dir_all(&sub).unwrap();
        for file in FILE_NAMES {
            fs::write(sub.join(file), b"garbage").unwrap();
        }
        let err = load_dataset(dir.path(), DatasetName::Mnist, Split::Train).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("train-images-idx3-ubyte.gz"),
            "error should name the file: {msg}"
        );
    }

    #[test]
    fn concurrent_fetch_downloads_each_file_once() {
        use std::sync::atomic::{AtomicUsize, Ordering};

        struct CountingTransport {
            files: HashMap<String, Vec<u8>>,
            calls: AtomicUsize,
        }
        impl Transport for CountingTransport {
            fn get(&self, url: &str) -> Result<Vec<u8>> {
                self.calls.fetch_add(1, Ordering::SeqCst);
                std::thread::sleep(std::time::Duration::from_millis(5));
                self.files
                    .get(url)
                    .cloned()
                    .ok_or_else(|| Error::Fetch(format!("404 {url}")))
            }
        }

        let base = "http://mirror.example";
        let src = mock_with_all_files(base);
        let transport = CountingTransport {
            files: src.files,
            calls: AtomicUsize::new(0),
        };
        let dir = tempfile::tempdir().unwrap();
        std::thread::scope(|s| {
            for _ in 0..3 {
                s.spawn(|| {
                    fetch_dataset(DatasetName::Mnist, base, dir.path(), &transport).unwrap();
                });
            }
        });
        assert_eq!(
            transport.calls.load(Ordering::SeqCst),
            4,
            "each file must be downloaded exactly once"
        );
        assert!(load_dataset(dir.path(), DatasetName::Mnist, Split::Train).is_ok());
    }

    #[test]
    fn normalize_boundaries() {
        let x = normalize_pixels(&[255, 0, 128]);
        assert_eq!(x[0], 1.0);
        assert_eq!(x[1], 0.0);
        assert!((x[2] - 128.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn mismatched_counts_rejected() {
        let images = parse_idx(&tiny_idx_images(5)).unwrap();
        let labels = parse_idx(&tiny_idx_labels(4)).unwrap();
        assert!(
            Dataset::from_tensors(DatasetName::Mnist, Split::Train, images, labels).is_err()
        );
    }
}
