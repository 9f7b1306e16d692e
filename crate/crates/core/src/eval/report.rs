//! `sweep_table.csv` and `per_subject.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GridPoint, SweepRow};
use crate::error::{Error, Result};

pub const SWEEP_TABLE_FILE: &str = "sweep_table.csv";
pub const PER_SUBJECT_FILE: &str = "per_subject.json";
/// Written next to the table when a sweep is repeated over seeds.
pub const SWEEP_REPEATS_FILE: &str = "sweep_repeats.csv";

/// Type-7 (linear interpolation) sample quantile of sorted-or-not `values`.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    Some(BoxStats {
        min: quantile(values, 0.0)?,
        q1: quantile(values, 0.25)?,
        median: quantile(values, 0.5)?,
        q3: quantile(values, 0.75)?,
        max: quantile(values, 1.0)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldEntry {
    pub held_out_subject: usize,
    /// `None` for a fold whose training diverged.
    pub main_acc: Option<f64>,
}

/// What the report files hold for one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(flatten)]
    pub point: GridPoint,
    pub main_acc: f64,
    pub adv_acc: f64,
    pub nuis_acc: f64,
    pub n_folds_failed: usize,
    pub folds: Vec<FoldEntry>,
}

impl From<&SweepRow> for ReportRow {
    fn from(row: &SweepRow) -> Self {
        Self {
            point: row.point,
            main_acc: row.main_acc,
            adv_acc: row.adv_acc,
            nuis_acc: row.nuis_acc,
            n_folds_failed: row.n_folds_failed,
            folds: row
                .folds
                .iter()
                .map(|f| FoldEntry {
                    held_out_subject: f.held_out_subject,
                    main_acc: f.failed.is_none().then_some(f.main_acc),
                })
                .collect(),
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl ReportRow {
    /// Averages one grid point over repeated sweeps. Per-fold accuracies are
    /// averaged over the repeats in which that fold succeeded.
    pub fn mean_over_repeats(repeats: &[&SweepRow]) -> Result<Self> {
        let first = repeats
            .first()
            .ok_or_else(|| Error::Validation("no repeats to average".into()))?;
        if repeats.iter().any(|r| r.point != first.point || r.folds.len() != first.folds.len()) {
            return Err(Error::Validation("repeats disagree on grid point or fold count".into()));
        }
        let folds = (0..first.folds.len())
            .map(|i| {
                let ok: Vec<f64> = repeats
                    .iter()
                    .filter(|r| r.folds[i].failed.is_none())
                    .map(|r| r.folds[i].main_acc)
                    .collect();
                FoldEntry {
                    held_out_subject: first.folds[i].held_out_subject,
                    main_acc: (!ok.is_empty()).then(|| mean(ok.into_iter())),
                }
            })
            .collect();
        Ok(Self {
            point: first.point,
            main_acc: mean(repeats.iter().map(|r| r.main_acc)),
            adv_acc: mean(repeats.iter().map(|r| r.adv_acc)),
            nuis_acc: mean(repeats.iter().map(|r| r.nuis_acc)),
            n_folds_failed: repeats.iter().map(|r| r.n_folds_failed).sum(),
            folds,
        })
    }

    pub fn fold_accuracies(&self) -> Vec<f64> {
        self.folds.iter().filter_map(|f| f.main_acc).collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TableRecord {
    lambda_a: f64,
    lambda_n: f64,
    r_n: f64,
    main_acc: f64,
    adv_acc: f64,
    nuis_acc: f64,
    n_folds_failed: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct PerSubjectRow {
    lambda_a: f64,
    lambda_n: f64,
    r_n: f64,
    folds: Vec<FoldEntry>,
    #[serde(rename = "box")]
    box_stats: Option<BoxStats>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PerSubjectFile {
    rows: Vec<PerSubjectRow>,
}

/// Writes both report files into `out_dir` and returns their paths.
pub fn emit_reports(rows: &[ReportRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::Validation("no rows to report".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let table = out_dir.join(SWEEP_TABLE_FILE);
    let mut w = csv::Writer::from_path(&table).map_err(|e| csv_err(&table, e))?;
    for r in rows {
        w.serialize(TableRecord {
            lambda_a: r.point.lambda_a,
            lambda_n: r.point.lambda_n,
            r_n: r.point.r_n,
            main_acc: r.main_acc,
            adv_acc: r.adv_acc,
            nuis_acc: r.nuis_acc,
            n_folds_failed: r.n_folds_failed,
        })
        .map_err(|e| csv_err(&table, e))?;
    }
    w.flush().map_err(|e| Error::io(&table, e))?;

    let per_subject = out_dir.join(PER_SUBJECT_FILE);
    let doc = PerSubjectFile {
        rows: rows
            .iter()
            .map(|r| PerSubjectRow {
                lambda_a: r.point.lambda_a,
                lambda_n: r.point.lambda_n,
                r_n: r.point.r_n,
                folds: r.folds.clone(),
                box_stats: box_stats(&r.fold_accuracies()),
            })
            .collect(),
    };
    let file = File::create(&per_subject).map_err(|e| Error::io(&per_subject, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n").map_err(|e| Error::io(&per_subject, e))?;
    out.flush().map_err(|e| Error::io(&per_subject, e))?;
    Ok(vec![table, per_subject])
}

/// Per-repeat rows with a leading `repeat` column.
pub fn write_repeats(repeats: &[Vec<SweepRow>], out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join(SWEEP_REPEATS_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["repeat", "lambda_a", "lambda_n", "r_n", "main_acc", "adv_acc", "nuis_acc", "n_folds_failed"])
        .map_err(|e| csv_err(&path, e))?;
    for (i, rows) in repeats.iter().enumerate() {
        for r in rows {
            w.write_record([
                i.to_string(),
                r.point.lambda_a.to_string(),
                r.point.lambda_n.to_string(),
                r.point.r_n.to_string(),
                r.main_acc.to_string(),
                r.adv_acc.to_string(),
                r.nuis_acc.to_string(),
                r.n_folds_failed.to_string(),
            ])
            .map_err(|e| csv_err(&path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            file: path.to_path_buf(),
            line: 0,
            msg: format!("{other:?}"),
        },
    }
}

/// Parses a `sweep_table.csv`; fold lists are left empty.
pub fn read_sweep_table(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<TableRecord>().enumerate() {
        let t = rec.map_err(|e| Error::Parse {
            file: path.to_path_buf(),
            line: i + 2,
            msg: e.to_string(),
        })?;
        rows.push(ReportRow {
            point: GridPoint::new(t.lambda_a, t.lambda_n, t.r_n),
            main_acc: t.main_acc,
            adv_acc: t.adv_acc,
            nuis_acc: t.nuis_acc,
            n_folds_failed: t.n_folds_failed,
            folds: Vec::new(),
        });
    }
    Ok(rows)
}

/// Grid point, fold list and box summary of each row in `per_subject.json`.
pub fn read_per_subject(path: &Path) -> Result<Vec<(GridPoint, Vec<FoldEntry>, Option<BoxStats>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: PerSubjectFile = serde_json::from_str(&text)?;
    Ok(doc
        .rows
        .into_iter()
        .map(|r| (GridPoint::new(r.lambda_a, r.lambda_n, r.r_n), r.folds, r.box_stats))
        .collect())
}
