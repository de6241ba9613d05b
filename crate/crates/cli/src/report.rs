//! Run-file schema (`"schema": 1`), canonical JSON, and the CSV /
//! plot-data generators behind `vouch report`.
//!
//! Canonical JSON means: serialized through `serde_json::Value` (objects
//! are B-tree maps, so keys come out sorted), pretty-printed, newline
//! terminated. Files written this way satisfy the round-trip contract
//! `parse → serialize → byte-identical`.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vouch_core::BoundKind;

pub const SCHEMA_VERSION: u32 = 1;

/// One optimization (or evaluation-only) run of one bound kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub kind: BoundKind,
    /// Which ensemble the run certifies: `multiview`, `view-k`, or `concat`.
    pub group: String,
    pub seed: u64,
    /// Certified bound value (`raw` clamped to `[0, 4]`).
    pub certified: f64,
    /// Bound value exactly as computed.
    pub raw: f64,
    /// Final barrier-inclusive objective; absent for evaluation-only kinds.
    pub objective: Option<f64>,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    /// Objective evaluations recorded during training (0 when not trained).
    pub trace_len: usize,
    pub optimizer: Option<String>,
    pub gibbs: f64,
    pub joint: f64,
    pub disagreement: f64,
    /// Total divergence budget `D` at the final parameters.
    pub divergence: f64,
    pub mv_train_risk: f64,
    pub mv_test_risk: Option<f64>,
    /// Final hyper-posterior over views.
    pub rho: Vec<f64>,
    pub lambda: Option<f64>,
    pub lambda2: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha_hyper: Option<f64>,
    pub alpha_views: Option<Vec<f64>>,
    /// Labeled sample count and disagreement sample count.
    pub m: usize,
    pub n: usize,
    pub wall_time_s: f64,
}

/// Arithmetic means over every record sharing a `(group, kind)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub group: String,
    pub kind: BoundKind,
    pub runs: usize,
    pub mean_certified: f64,
    pub mean_gibbs: f64,
    pub mean_joint: f64,
    pub mean_disagreement: f64,
    pub mean_mv_train_risk: f64,
    pub mean_mv_test_risk: Option<f64>,
}

/// Everything one `train` invocation produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    pub schema: u32,
    pub dataset: String,
    pub mode: String,
    pub n_classes: usize,
    pub alpha: String,
    pub delta: f64,
    pub depth: usize,
    pub trees: usize,
    pub labeled_fraction: f64,
    pub test_fraction: f64,
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
}

/// Serializes any value to canonical JSON (sorted keys, pretty, newline).
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).context("serializing to a JSON value")?;
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = canonical_json(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_run_file(path: &Path) -> Result<RunFile> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: RunFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if file.schema != SCHEMA_VERSION {
        bail!(
            "{}: unsupported schema {} (this build reads schema {})",
            path.display(),
            file.schema,
            SCHEMA_VERSION
        );
    }
    Ok(file)
}

/// Checks the canonical round trip: parse, re-serialize, compare bytes.
pub fn round_trips(path: &Path) -> Result<bool> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    Ok(canonical_json(&value)? == text)
}

/// Groups records by `(group, kind)` in first-appearance order and takes
/// arithmetic means. The test-risk mean is reported only when every record
/// in the cell carries one.
pub fn aggregate(records: &[RunRecord]) -> Vec<Aggregate> {
    let mut order: Vec<(String, BoundKind)> = Vec::new();
    for r in records {
        let key = (r.group.clone(), r.kind);
        if !order.contains(&key) {
            order.push(key);
        }
    }
    order
        .into_iter()
        .map(|(group, kind)| {
            let cell: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.group == group && r.kind == kind)
                .collect();
            let n = cell.len() as f64;
            let mean = |f: &dyn Fn(&RunRecord) -> f64| cell.iter().map(|r| f(r)).sum::<f64>() / n;
            let mean_mv_test_risk = if cell.iter().all(|r| r.mv_test_risk.is_some()) {
                Some(mean(&|r| r.mv_test_risk.unwrap()))
            } else {
                None
            };
            Aggregate {
                group,
                kind,
                runs: cell.len(),
                mean_certified: mean(&|r| r.certified),
                mean_gibbs: mean(&|r| r.gibbs),
                mean_joint: mean(&|r| r.joint),
                mean_disagreement: mean(&|r| r.disagreement),
                mean_mv_train_risk: mean(&|r| r.mv_train_risk),
                mean_mv_test_risk,
            }
        })
        .collect()
}

/// Sort key placing per-view groups first (by view number), then the
/// concatenated baseline, then the multi-view ensemble.
fn group_rank(group: &str) -> (u8, usize) {
    if let Some(k) = group.strip_prefix("view-").and_then(|s| s.parse().ok()) {
        (0, k)
    } else if group == "concat" {
        (1, 0)
    } else if group == "multiview" {
        (2, 0)
    } else {
        (3, 0)
    }
}

fn kind_rank(kind: BoundKind) -> usize {
    BoundKind::ALL.iter().position(|&k| k == kind).unwrap_or(usize::MAX)
}

/// The wide CSV (rows = bound kinds, three columns per group) plus the flat
/// series list the CSV is derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTables {
    pub csv: String,
    pub plot: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Series {
    group: String,
    kind: BoundKind,
    runs: usize,
    bound: f64,
    gibbs: f64,
    /// Majority-vote risk: test when every pooled record has one,
    /// otherwise train.
    bayes: f64,
}

/// Pools the records of several run files into one table. All files must
/// share the schema version (checked on read) and the class count.
pub fn build_report(files: &[RunFile]) -> Result<ReportTables> {
    if files.is_empty() {
        bail!("need at least one run file");
    }
    let c0 = files[0].n_classes;
    if let Some(f) = files.iter().find(|f| f.n_classes != c0) {
        bail!(
            "run files mix class counts: {} has {} classes, {} has {}",
            files[0].dataset,
            c0,
            f.dataset,
            f.n_classes
        );
    }
    let pooled: Vec<&RunRecord> = files.iter().flat_map(|f| &f.records).collect();
    let mut cells: Vec<Series> = Vec::new();
    for r in &pooled {
        if cells.iter().any(|s| s.group == r.group && s.kind == r.kind) {
            continue;
        }
        let cell: Vec<&&RunRecord> = pooled
            .iter()
            .filter(|x| x.group == r.group && x.kind == r.kind)
            .collect();
        let n = cell.len() as f64;
        let bound = cell.iter().map(|x| x.certified).sum::<f64>() / n;
        let gibbs = cell.iter().map(|x| x.gibbs).sum::<f64>() / n;
        let bayes = if cell.iter().all(|x| x.mv_test_risk.is_some()) {
            cell.iter().map(|x| x.mv_test_risk.unwrap()).sum::<f64>() / n
        } else {
            cell.iter().map(|x| x.mv_train_risk).sum::<f64>() / n
        };
        cells.push(Series {
            group: r.group.clone(),
            kind: r.kind,
            runs: cell.len(),
            bound,
            gibbs,
            bayes,
        });
    }
    cells.sort_by(|a, b| {
        (group_rank(&a.group), kind_rank(a.kind)).cmp(&(group_rank(&b.group), kind_rank(b.kind)))
    });

    let mut groups: Vec<String> = Vec::new();
    for s in &cells {
        if !groups.contains(&s.group) {
            groups.push(s.group.clone());
        }
    }
    let mut kinds: Vec<BoundKind> = Vec::new();
    for s in &cells {
        if !kinds.contains(&s.kind) {
            kinds.push(s.kind);
        }
    }

    let mut csv = String::from("kind");
    for g in &groups {
        csv.push_str(&format!(",{g}:bound,{g}:gibbs,{g}:bayes"));
    }
    csv.push('\n');
    for &kind in &kinds {
        csv.push_str(kind.as_str());
        for g in &groups {
            match cells.iter().find(|s| &s.group == g && s.kind == kind) {
                Some(s) => {
                    csv.push_str(&format!(",{:.6},{:.6},{:.6}", s.bound, s.gibbs, s.bayes))
                }
                None => csv.push_str(",,,"),
            }
        }
        csv.push('\n');
    }

    let plot = serde_json::json!({
        "schema": SCHEMA_VERSION,
        "series": serde_json::to_value(&cells)?,
    });
    Ok(ReportTables { csv, plot })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(kind: BoundKind, group: &str, seed: u64, certified: f64) -> RunRecord {
        RunRecord {
            kind,
            group: group.into(),
            seed,
            certified,
            raw: certified,
            objective: Some(certified + 0.01),
            converged: Some(true),
            iterations: Some(10),
            trace_len: 11,
            optimizer: Some("adamw".into()),
            gibbs: 0.1 * (seed as f64 + 1.0),
            joint: 0.02,
            disagreement: 0.16,
            divergence: 0.5,
            mv_train_risk: 0.08,
            mv_test_risk: Some(0.12),
            rho: vec![0.5, 0.5],
            lambda: Some(1.0),
            lambda2: None,
            gamma: None,
            alpha_hyper: Some(1.1),
            alpha_views: Some(vec![1.1, 1.1]),
            m: 20,
            n: 30,
            wall_time_s: 0.01,
        }
    }

    fn sample_file() -> RunFile {
        let records = vec![
            record(BoundKind::K, "multiview", 0, 0.4),
            record(BoundKind::K, "multiview", 1, 0.5),
            record(BoundKind::R, "multiview", 0, 0.7),
        ];
        let aggregates = aggregate(&records);
        RunFile {
            schema: SCHEMA_VERSION,
            dataset: "toy".into(),
            mode: "multiview".into(),
            n_classes: 2,
            alpha: "fixed:1.1".into(),
            delta: 0.05,
            depth: 1,
            trees: 9,
            labeled_fraction: 1.0,
            test_fraction: 0.2,
            records,
            aggregates,
        }
    }

    #[test]
    fn canonical_files_round_trip_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        write_json(&path, &sample_file()).unwrap();
        assert!(round_trips(&path).unwrap());
        let back = read_run_file(&path).unwrap();
        assert_eq!(back, sample_file());
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let mut file = sample_file();
        file.schema = 2;
        write_json(&path, &file).unwrap();
        let err = read_run_file(&path).unwrap_err().to_string();
        assert!(err.contains("unsupported schema 2"), "{err}");
    }

    #[test]
    fn aggregate_means_match_a_naive_recomputation() {
        let f = sample_file();
        let k = f
            .aggregates
            .iter()
            .find(|a| a.kind == BoundKind::K)
            .unwrap();
        assert_eq!(k.runs, 2);
        let naive: f64 = f
            .records
            .iter()
            .filter(|r| r.kind == BoundKind::K)
            .map(|r| r.certified)
            .sum::<f64>()
            / 2.0;
        assert!((k.mean_certified - naive).abs() < 1e-12);
        let naive_gibbs = (0.1 + 0.2) / 2.0;
        assert!((k.mean_gibbs - naive_gibbs).abs() < 1e-12);
    }

    #[test]
    fn report_orders_groups_and_flags_mixed_class_counts() {
        let mut single = sample_file();
        single.mode = "view-2".into();
        for r in &mut single.records {
            r.group = "view-2".into();
        }
        single.aggregates = aggregate(&single.records);
        let multi = sample_file();
        let tables = build_report(&[single.clone(), multi]).unwrap();
        let header = tables.csv.lines().next().unwrap();
        assert_eq!(
            header,
            "kind,view-2:bound,view-2:gibbs,view-2:bayes,multiview:bound,multiview:gibbs,multiview:bayes"
        );
        assert!(tables.csv.lines().any(|l| l.starts_with("K,")));

        let mut other = sample_file();
        other.n_classes = 3;
        let err = build_report(&[single, other]).unwrap_err().to_string();
        assert!(err.contains("mix class counts"), "{err}");
    }
}
