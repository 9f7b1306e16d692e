//! Canonical on-disk layout: a `manifest.csv` listing one trial per row, and
//! one CSV per trial with a fixed seven-channel header.

use std::path::{Path, PathBuf};

use super::preprocess::downsample_to_1hz;
use super::{Dataset, TrialRecord, NUM_CHANNELS, NUM_SAMPLES, NUM_STRESS_LABELS};
use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const MANIFEST_HEADER: [&str; 5] = ["subject_id", "trial_id", "label", "native_rate_hz", "path"];
pub const CHANNEL_NAMES: [&str; NUM_CHANNELS] =
    ["eda", "temp", "acc_x", "acc_y", "acc_z", "heart_rate", "spo2"];

fn parse_err(file: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn csv_err(file: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(file, io),
        other => parse_err(file, line, format!("{other:?}")),
    }
}

fn check_header(file: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    let got: Vec<&str> = got.iter().map(str::trim).collect();
    if got != want {
        return Err(parse_err(
            file,
            1,
            format!("header {got:?}, expected {want:?}"),
        ));
    }
    Ok(())
}

/// Loads with the default trial length of 300 one-second samples.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    load_dataset_with(manifest_path, NUM_SAMPLES)
}

/// Reads the manifest and every trial file it lists, averaging each trial
/// down to 1 Hz and keeping `samples` seconds. Trial paths are resolved
/// relative to the manifest's directory.
pub fn load_dataset_with(manifest_path: &Path, samples: usize) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(manifest_path).map_err(|e| csv_err(manifest_path, e))?;
    let headers = reader.headers().map_err(|e| csv_err(manifest_path, e))?.clone();
    check_header(manifest_path, &headers, &MANIFEST_HEADER)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut trials = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| csv_err(manifest_path, e))?;
        if row.len() != MANIFEST_HEADER.len() {
            return Err(parse_err(
                manifest_path,
                line,
                format!("expected {} fields, found {}", MANIFEST_HEADER.len(), row.len()),
            ));
        }
        let field = |k: usize| -> Result<usize> {
            row[k].trim().parse::<usize>().map_err(|_| {
                parse_err(
                    manifest_path,
                    line,
                    format!("{} `{}` is not a non-negative integer", MANIFEST_HEADER[k], &row[k]),
                )
            })
        };
        let subject_id = field(0)?;
        let trial_id = field(1)?;
        let label = field(2)?;
        let rate = field(3)?;
        if subject_id == 0 {
            return Err(parse_err(manifest_path, line, "subject ids start at 1"));
        }
        if label >= NUM_STRESS_LABELS {
            return Err(parse_err(
                manifest_path,
                line,
                format!("label {label} outside 0..{NUM_STRESS_LABELS}"),
            ));
        }
        if rate == 0 {
            return Err(parse_err(manifest_path, line, "native_rate_hz must be at least 1"));
        }
        let path = base.join(row[4].trim());
        let signal = read_trial(&path, rate, samples)?;
        trials.push(TrialRecord {
            subject_id,
            label,
            trial_id,
            signal,
        });
    }
    let num_subjects = trials.iter().map(|t| t.subject_id).max().unwrap_or(0);
    Ok(Dataset::new(trials, num_subjects, NUM_STRESS_LABELS))
}

fn read_trial(path: &Path, rate: usize, samples: usize) -> Result<Matrix> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    check_header(path, &headers, &CHANNEL_NAMES)?;
    let mut channels: Vec<Vec<f64>> = vec![Vec::new(); NUM_CHANNELS];
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| csv_err(path, e))?;
        if row.len() != NUM_CHANNELS {
            return Err(parse_err(
                path,
                line,
                format!("expected {NUM_CHANNELS} columns, found {}", row.len()),
            ));
        }
        for (c, cell) in row.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line, format!("`{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("non-finite value `{cell}`")));
            }
            channels[c].push(v);
        }
    }
    let n_rows = channels[0].len();
    let mut values = Vec::with_capacity(NUM_CHANNELS * samples);
    for ch in &channels {
        let down = downsample_to_1hz(ch, rate, samples).map_err(|_| {
            parse_err(
                path,
                n_rows + 1,
                format!("{n_rows} rows at {rate} Hz is shorter than {samples} s"),
            )
        })?;
        values.extend(down);
    }
    Matrix::from_vec(NUM_CHANNELS, samples, values)
}

/// Writes `dataset` in the canonical layout under `dir` (1 Hz, one file per
/// trial in `dir/trials/`). Returns the manifest path.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    if let Some((c, _)) = dataset.shape() {
        if c != NUM_CHANNELS {
            return Err(Error::Validation(format!(
                "canonical layout has {NUM_CHANNELS} channels, dataset has {c}"
            )));
        }
    }
    let trial_dir = dir.join("trials");
    std::fs::create_dir_all(&trial_dir).map_err(|e| Error::io(&trial_dir, e))?;
    let manifest_path = dir.join("manifest.csv");
    let mut manifest = csv::Writer::from_path(&manifest_path).map_err(|e| csv_err(&manifest_path, e))?;
    manifest
        .write_record(MANIFEST_HEADER)
        .map_err(|e| csv_err(&manifest_path, e))?;
    for t in &dataset.trials {
        let rel = format!("trials/s{:02}_t{:02}.csv", t.subject_id, t.trial_id);
        let path = dir.join(&rel);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(CHANNEL_NAMES).map_err(|e| csv_err(&path, e))?;
        for s in 0..t.signal.cols() {
            w.write_record((0..NUM_CHANNELS).map(|c| t.signal.get(c, s).to_string()))
                .map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        manifest
            .write_record([
                t.subject_id.to_string(),
                t.trial_id.to_string(),
                t.label.to_string(),
                "1".to_owned(),
                rel,
            ])
            .map_err(|e| csv_err(&manifest_path, e))?;
    }
    manifest.flush().map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}
