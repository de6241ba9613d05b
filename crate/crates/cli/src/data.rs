//! Multi-view datasets: directory IO, synthesis, splitting, one-versus-one
//! binarization, and Gaussian view poisoning.
//!
//! On-disk format: a directory holding `meta.json`
//! (`{"views": V, "classes": C}`), `view_1.csv` … `view_V.csv`
//! (comma-separated reals, no header, one sample per row), `labels.csv`
//! (one integer per line), and optionally `unlabeled/view_k.csv` feature
//! files with the same column counts for an unlabeled pool.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use vouch_core::Matrix;

/// Mixing constant for deriving independent RNG streams from a base seed
/// (golden-ratio multiplier, same role as in splitmix-style generators).
const STREAM_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: row count mismatch (expected {expected} rows, found {got})")]
    RowCount {
        path: PathBuf,
        expected: usize,
        got: usize,
    },
    #[error("dataset needs at least 2 views, got {0}")]
    TooFewViews(usize),
    #[error("class {0} never occurs in the labels")]
    MissingClass(u16),
    #[error("binary task needs two distinct labels, both present in the data")]
    BadBinaryPair,
    #[error("split fractions must satisfy 0 < test < 1 and 0 < labeled ≤ 1")]
    BadFractions,
    #[error("no labeled split covering every class found in 100 seeded attempts")]
    SplitRetriesExhausted,
    #[error("synthesis needs V ≥ 2, C ≥ 2, m ≥ C, d ≥ 1, and one noise scale ≥ 0 per view")]
    BadSynthSpec,
    #[error("poisoning needs σ > 0 and a non-empty set of valid view indices")]
    BadPoisonTarget,
    #[error("{0}")]
    Invalid(String),
}

/// `V ≥ 2` feature matrices over shared samples, integer labels, and an
/// optional unlabeled feature pool used only by disagreement statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    pub name: String,
    pub views: Vec<Matrix>,
    pub labels: Vec<u16>,
    pub unlabeled: Option<Vec<Matrix>>,
    pub n_classes: usize,
}

impl MultiViewDataset {
    /// Validates every structural invariant before handing the dataset out.
    pub fn new(
        name: String,
        views: Vec<Matrix>,
        labels: Vec<u16>,
        unlabeled: Option<Vec<Matrix>>,
        n_classes: usize,
    ) -> Result<Self, DataError> {
        if views.len() < 2 {
            return Err(DataError::TooFewViews(views.len()));
        }
        let m = labels.len();
        if m == 0 {
            return Err(DataError::Invalid("dataset has no samples".into()));
        }
        if n_classes < 2 {
            return Err(DataError::Invalid(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        for (k, v) in views.iter().enumerate() {
            if v.rows() != m {
                return Err(DataError::Invalid(format!(
                    "view {} has {} rows but there are {} labels",
                    k + 1,
                    v.rows(),
                    m
                )));
            }
            if v.cols() == 0 {
                return Err(DataError::Invalid(format!("view {} has no features", k + 1)));
            }
        }
        let mut seen = vec![false; n_classes];
        for &y in &labels {
            let y = y as usize;
            if y >= n_classes {
                return Err(DataError::Invalid(format!(
                    "label {y} outside 0..{n_classes}"
                )));
            }
            seen[y] = true;
        }
        if let Some(c) = seen.iter().position(|&s| !s) {
            return Err(DataError::MissingClass(c as u16));
        }
        if let Some(u) = &unlabeled {
            if u.len() != views.len() {
                return Err(DataError::Invalid(format!(
                    "unlabeled pool has {} views, dataset has {}",
                    u.len(),
                    views.len()
                )));
            }
            let n_u = u[0].rows();
            for (k, (uv, lv)) in u.iter().zip(&views).enumerate() {
                if uv.rows() != n_u {
                    return Err(DataError::Invalid(format!(
                        "unlabeled view {} has {} rows, expected {}",
                        k + 1,
                        uv.rows(),
                        n_u
                    )));
                }
                if uv.cols() != lv.cols() {
                    return Err(DataError::Invalid(format!(
                        "unlabeled view {} has {} features, labeled view has {}",
                        k + 1,
                        uv.cols(),
                        lv.cols()
                    )));
                }
            }
        }
        Ok(Self {
            name,
            views,
            labels,
            unlabeled,
            n_classes,
        })
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_unlabeled(&self) -> usize {
        self.unlabeled.as_ref().map_or(0, |u| u[0].rows())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Meta {
    views: usize,
    classes: usize,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses one comma-separated feature file; every error names file and line.
fn read_feature_csv(path: &Path) -> Result<Matrix, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut cols: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let x: f64 = field.trim().parse().map_err(|_| DataError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: format!("bad number {field:?}"),
            })?;
            if !x.is_finite() {
                return Err(DataError::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    msg: format!("non-finite feature {x}"),
                });
            }
            row.push(x);
        }
        if let Some(c) = cols {
            if row.len() != c {
                return Err(DataError::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    msg: format!("expected {c} fields, found {}", row.len()),
                });
            }
        } else {
            cols = Some(row.len());
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "empty feature file".into(),
        });
    }
    Ok(Matrix::from_rows(&rows))
}

fn read_labels(path: &Path, n_classes: usize) -> Result<Vec<u16>, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let y: i64 = line.parse().map_err(|_| DataError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg: format!("bad label {line:?}"),
        })?;
        if y < 0 || y as usize >= n_classes {
            return Err(DataError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: format!("label {y} outside 0..{n_classes}"),
            });
        }
        labels.push(y as u16);
    }
    Ok(labels)
}

/// Loads a dataset directory (format in the module docs).
pub fn load_dataset(dir: &Path) -> Result<MultiViewDataset, DataError> {
    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: Meta = serde_json::from_str(&meta_text).map_err(|e| DataError::Parse {
        path: meta_path.clone(),
        line: e.line(),
        msg: e.to_string(),
    })?;

    let mut views = Vec::with_capacity(meta.views);
    for k in 1..=meta.views {
        views.push(read_feature_csv(&dir.join(format!("view_{k}.csv")))?);
    }
    let labels = read_labels(&dir.join("labels.csv"), meta.classes)?;
    for (k, v) in views.iter().enumerate() {
        if v.rows() != labels.len() {
            return Err(DataError::RowCount {
                path: dir.join(format!("view_{}.csv", k + 1)),
                expected: labels.len(),
                got: v.rows(),
            });
        }
    }

    let upath = dir.join("unlabeled");
    let unlabeled = if upath.join("view_1.csv").exists() {
        let mut pool = Vec::with_capacity(meta.views);
        for k in 1..=meta.views {
            pool.push(read_feature_csv(&upath.join(format!("view_{k}.csv")))?);
        }
        let n_u = pool[0].rows();
        for (k, u) in pool.iter().enumerate() {
            if u.rows() != n_u {
                return Err(DataError::RowCount {
                    path: upath.join(format!("view_{}.csv", k + 1)),
                    expected: n_u,
                    got: u.rows(),
                });
            }
        }
        Some(pool)
    } else {
        None
    };

    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    MultiViewDataset::new(name, views, labels, unlabeled, meta.classes)
}

fn write_feature_csv(path: &Path, m: &Matrix) -> Result<(), DataError> {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row = m.row(i);
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            // `{}` prints the shortest representation that round-trips, so
            // save → load reproduces the matrix bit-for-bit.
            out.push_str(&format!("{x}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Writes a dataset in the directory format `load_dataset` reads.
pub fn save_dataset(ds: &MultiViewDataset, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let meta = Meta {
        views: ds.n_views(),
        classes: ds.n_classes,
    };
    let meta_path = dir.join("meta.json");
    let meta_text = serde_json::to_string_pretty(&serde_json::to_value(meta).expect("meta"))
        .expect("meta json")
        + "\n";
    fs::write(&meta_path, meta_text).map_err(io_err(&meta_path))?;
    for (k, v) in ds.views.iter().enumerate() {
        write_feature_csv(&dir.join(format!("view_{}.csv", k + 1)), v)?;
    }
    let labels_path = dir.join("labels.csv");
    let labels_text: String = ds.labels.iter().map(|y| format!("{y}\n")).collect();
    fs::write(&labels_path, labels_text).map_err(io_err(&labels_path))?;
    if let Some(pool) = &ds.unlabeled {
        let upath = dir.join("unlabeled");
        fs::create_dir_all(&upath).map_err(io_err(&upath))?;
        for (k, u) in pool.iter().enumerate() {
            write_feature_csv(&upath.join(format!("view_{}.csv", k + 1)), u)?;
        }
    }
    Ok(())
}

/// One-versus-one reduction: keeps samples labeled `a` or `b`, relabels
/// `a → 0`, `b → 1`. The unlabeled pool (features only) passes through.
pub fn make_binary_task(
    ds: &MultiViewDataset,
    a: u16,
    b: u16,
) -> Result<MultiViewDataset, DataError> {
    let present = |t: u16| ds.labels.iter().any(|&y| y == t);
    if a == b || !present(a) || !present(b) {
        return Err(DataError::BadBinaryPair);
    }
    let keep: Vec<usize> = (0..ds.n_samples())
        .filter(|&i| ds.labels[i] == a || ds.labels[i] == b)
        .collect();
    let views = ds.views.iter().map(|v| v.select_rows(&keep)).collect();
    let labels = keep
        .iter()
        .map(|&i| u16::from(ds.labels[i] == b))
        .collect();
    MultiViewDataset::new(
        format!("{}-{a}v{b}", ds.name),
        views,
        labels,
        ds.unlabeled.clone(),
        2,
    )
}

/// Test fraction, labeled fraction (of the remaining train rows), and the
/// seed that makes the split reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub test_fraction: f64,
    pub labeled_fraction: f64,
}

/// Disjoint row-index sets covering `0..m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles rows and carves off `⌈test_fraction·m⌉` test rows, then
/// `⌈labeled_fraction·rest⌉` labeled train rows; the remainder becomes the
/// unlabeled pool. If the labeled part misses a class, the shuffle is
/// redrawn from a seed derived from `(seed, attempt)`, up to 100 attempts.
pub fn split(ds: &MultiViewDataset, spec: &SplitSpec) -> Result<SplitIndices, DataError> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)
        || !(spec.labeled_fraction > 0.0 && spec.labeled_fraction <= 1.0)
    {
        return Err(DataError::BadFractions);
    }
    let m = ds.n_samples();
    let t = (spec.test_fraction * m as f64).ceil() as usize;
    let l = ((m - t) as f64 * spec.labeled_fraction).ceil() as usize;
    for attempt in 0..100u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(spec.seed ^ attempt.wrapping_mul(STREAM_MIX));
        let mut idx: Vec<usize> = (0..m).collect();
        idx.shuffle(&mut rng);
        let test = idx[..t].to_vec();
        let labeled = idx[t..t + l].to_vec();
        let unlabeled = idx[t + l..].to_vec();
        let mut seen = vec![false; ds.n_classes];
        for &i in &labeled {
            seen[ds.labels[i] as usize] = true;
        }
        if seen.iter().all(|&s| s) {
            return Ok(SplitIndices {
                labeled,
                unlabeled,
                test,
            });
        }
    }
    Err(DataError::SplitRetriesExhausted)
}

/// Synthesizes class-conditional Gaussian clusters over `V` views.
///
/// All views share one latent noise draw per sample, scaled by the view's
/// noise level, plus a small independent per-view perturbation. Sharing the
/// latent makes the views' *errors* correlate, so their voters disagree far
/// less than independent noise would produce — deliberately, since the
/// disagreement-aware certificates are only interesting on such data. Class
/// means sit at `−1 + 2c/(C−1)` in every dimension.
pub fn synth_dataset(
    v: usize,
    m: usize,
    c: usize,
    d_per_view: usize,
    view_noise: &[f64],
    seed: u64,
) -> Result<MultiViewDataset, DataError> {
    if v < 2
        || c < 2
        || m < c
        || d_per_view < 1
        || view_noise.len() != v
        || view_noise.iter().any(|x| !(*x >= 0.0) || !x.is_finite())
    {
        return Err(DataError::BadSynthSpec);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut labels: Vec<u16> = (0..m).map(|i| (i % c) as u16).collect();
    labels.shuffle(&mut rng);
    let latent: Vec<f64> = (0..m * d_per_view)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut views = Vec::with_capacity(v);
    for &noise in view_noise {
        let mut data = Vec::with_capacity(m * d_per_view);
        for (i, &y) in labels.iter().enumerate() {
            let mu = -1.0 + 2.0 * y as f64 / (c - 1) as f64;
            for j in 0..d_per_view {
                let eps: f64 = rng.sample(StandardNormal);
                data.push(mu + noise * latent[i * d_per_view + j] + 0.1 * noise * eps);
            }
        }
        views.push(Matrix::new(m, d_per_view, data));
    }
    MultiViewDataset::new(format!("synth-v{v}-m{m}-c{c}"), views, labels, None, c)
}

/// Per-column population standard deviations over labeled + unlabeled rows.
fn column_stds(labeled: &Matrix, unlabeled: Option<&Matrix>) -> Vec<f64> {
    let cols = labeled.cols();
    let count = labeled.rows() + unlabeled.map_or(0, Matrix::rows);
    let mut mean = vec![0.0; cols];
    let mut sq = vec![0.0; cols];
    let mut add = |m: &Matrix| {
        for i in 0..m.rows() {
            for (j, &x) in m.row(i).iter().enumerate() {
                mean[j] += x;
                sq[j] += x * x;
            }
        }
    };
    add(labeled);
    if let Some(u) = unlabeled {
        add(u);
    }
    (0..cols)
        .map(|j| {
            let mu = mean[j] / count as f64;
            (sq[j] / count as f64 - mu * mu).max(0.0).sqrt()
        })
        .collect()
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma · column_std` to
/// every feature of the targeted views (labeled and unlabeled rows alike).
/// Untargeted views are returned bit-identical.
pub fn poison_views(
    ds: &MultiViewDataset,
    targets: &[usize],
    sigma: f64,
    seed: u64,
) -> Result<MultiViewDataset, DataError> {
    let targets: BTreeSet<usize> = targets.iter().copied().collect();
    if targets.is_empty() || !(sigma > 0.0) || targets.iter().any(|&t| t >= ds.n_views()) {
        return Err(DataError::BadPoisonTarget);
    }
    let mut out = ds.clone();
    out.name = format!("{}-poisoned", ds.name);
    for &t in &targets {
        let stds = column_stds(&ds.views[t], ds.unlabeled.as_ref().map(|u| &u[t]));
        // One stream per view, so poisoning {0,1} perturbs view 1 exactly as
        // poisoning {1} alone would.
        let mut rng =
            ChaCha12Rng::seed_from_u64(seed ^ (t as u64 + 1).wrapping_mul(STREAM_MIX));
        let mut perturb = |m: &mut Matrix| {
            for i in 0..m.rows() {
                for (j, x) in m.row_mut(i).iter_mut().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    *x += sigma * stds[j] * z;
                }
            }
        };
        perturb(&mut out.views[t]);
        if let Some(pool) = &mut out.unlabeled {
            perturb(&mut pool[t]);
        }
    }
    Ok(out)
}
