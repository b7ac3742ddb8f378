//! Dataset ingestion from comma-separated text and the bundled synthetic
//! generators.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::pipeline::Dataset;
use crate::rng::{Purpose, RngStream};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("label error: {0}")]
    Label(String),
    #[error("no usable data: {0}")]
    Empty(String),
}

/// A row that was skipped during ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub rejected: Vec<RejectedRow>,
}

/// Which column holds the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelColumn<'a> {
    #[default]
    Last,
    Named(&'a str),
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses comma-separated text with a header row.
///
/// A column is numeric when at least half of its non-empty cells parse as
/// finite numbers; otherwise it is one-hot encoded (one column per distinct
/// value, in sorted order). Rows with an empty cell, or with a non-numeric
/// value in a numeric column, are skipped and reported. Classes are indexed
/// in sorted order: numerically when every label is a number, otherwise
/// lexicographically.
pub fn parse_dataset<R: Read>(input: R, label: LabelColumn<'_>) -> Result<LoadedDataset, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| DataError::Parse { line: 1, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 {
        return Err(DataError::Parse {
            line: 1,
            message: "need at least one feature column and a label column".into(),
        });
    }
    let label_idx = match label {
        LabelColumn::Last => header.len() - 1,
        LabelColumn::Named(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::Label(format!("no column named {name:?}")))?,
    };
    {
        let mut seen = BTreeSet::new();
        if let Some(dup) = header.iter().find(|h| !seen.insert(h.as_str())) {
            return Err(DataError::Parse { line: 1, message: format!("duplicate column name {dup:?}") });
        }
    }

    let mut rows: Vec<(u64, Vec<String>)> = Vec::new();
    let mut rejected = Vec::new();
    for record in reader.records() {
        let record = record
            .map_err(|e| DataError::Parse { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != header.len() {
            return Err(DataError::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        if let Some(col) = record.iter().position(str::is_empty) {
            rejected.push(RejectedRow { line, reason: format!("missing value in column {:?}", header[col]) });
            continue;
        }
        rows.push((line, record.iter().map(str::to_string).collect()));
    }

    let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| c != label_idx).collect();
    let numeric: Vec<bool> = feature_cols
        .iter()
        .map(|&c| {
            let ok = rows.iter().filter(|(_, r)| parse_number(&r[c]).is_some()).count();
            2 * ok >= rows.len()
        })
        .collect();
    rows.retain(|(line, r)| {
        for (k, &c) in feature_cols.iter().enumerate() {
            if numeric[k] && parse_number(&r[c]).is_none() {
                rejected.push(RejectedRow {
                    line: *line,
                    reason: format!("unparseable value {:?} in column {:?}", r[c], header[c]),
                });
                return false;
            }
        }
        true
    });
    rejected.sort_by_key(|r| r.line);
    for r in &rejected {
        log::warn!("line {}: row rejected ({})", r.line, r.reason);
    }
    if rows.is_empty() {
        return Err(DataError::Empty("every row was rejected or the file has no rows".into()));
    }

    let mut feature_names = Vec::new();
    let mut encoders: Vec<Option<Vec<String>>> = Vec::new();
    for (k, &c) in feature_cols.iter().enumerate() {
        if numeric[k] {
            feature_names.push(header[c].clone());
            encoders.push(None);
        } else {
            let levels: Vec<String> =
                rows.iter().map(|(_, r)| r[c].clone()).collect::<BTreeSet<_>>().into_iter().collect();
            feature_names.extend(levels.iter().map(|l| format!("{}={l}", header[c])));
            encoders.push(Some(levels));
        }
    }

    let raw_labels: Vec<&str> = rows.iter().map(|(_, r)| r[label_idx].as_str()).collect();
    let mut classes: Vec<String> =
        raw_labels.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>().into_iter().collect();
    if classes.iter().all(|c| parse_number(c).is_some()) {
        classes.sort_by(|a, b| parse_number(a).unwrap().total_cmp(&parse_number(b).unwrap()).then(a.cmp(b)));
    }
    if classes.len() < 2 {
        return Err(DataError::Label(format!("only one class ({:?}) present", classes.first().map_or("", |s| s))));
    }
    let class_index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|l| class_index[l]).collect();

    let width = feature_names.len();
    let mut x = DMatrix::zeros(rows.len(), width);
    for (i, (_, r)) in rows.iter().enumerate() {
        let mut col = 0;
        for (k, &c) in feature_cols.iter().enumerate() {
            match &encoders[k] {
                None => {
                    x[(i, col)] = parse_number(&r[c]).expect("checked above");
                    col += 1;
                }
                Some(levels) => {
                    let hit = levels.binary_search(&r[c]).expect("level collected above");
                    x[(i, col + hit)] = 1.0;
                    col += levels.len();
                }
            }
        }
    }
    let dataset = Dataset::new(x, labels, classes, feature_names).map_err(|e| DataError::Empty(e.to_string()))?;
    Ok(LoadedDataset { dataset, rejected })
}

pub fn load_dataset(path: &Path, label: LabelColumn<'_>) -> Result<LoadedDataset, DataError> {
    let file = std::fs::File::open(path)
        .map_err(|e| DataError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_dataset(std::io::BufReader::new(file), label)
}

/// Writes the dataset as comma-separated text with a trailing `label`
/// column holding class names.
pub fn write_dataset<W: Write>(dataset: &Dataset, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = dataset.feature_names.clone();
    header.push("label".into());
    w.write_record(&header)?;
    for i in 0..dataset.len() {
        let mut row: Vec<String> = (0..dataset.n_features()).map(|j| dataset.features[(i, j)].to_string()).collect();
        row.push(dataset.class_names[dataset.labels[i]].clone());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Two Gaussian clouds in 5 dimensions, means 2 sd apart per axis.
    Gauss2,
    /// Quadrant XOR on the unit square with 5% of labels flipped.
    Xor,
    /// Two concentric noisy rings.
    Rings,
}

impl SyntheticKind {
    pub fn from_name(name: &str) -> Option<SyntheticKind> {
        match name {
            "gauss2" => Some(SyntheticKind::Gauss2),
            "xor" => Some(SyntheticKind::Xor),
            "rings" => Some(SyntheticKind::Rings),
            _ => None,
        }
    }
}

pub const XOR_NOISE: f64 = 0.05;
pub const GAUSS2_DIM: usize = 5;
pub const GAUSS2_SEPARATION: f64 = 2.0;

/// `n` rows of the chosen synthetic problem, classes balanced, rows shuffled.
pub fn generate(kind: SyntheticKind, n: usize, seed: u64) -> Dataset {
    let mut rng = RngStream::new(seed, Purpose::Data, 0, 0).rng();
    let mut labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    labels.shuffle(&mut rng);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let (p, rows): (usize, Vec<Vec<f64>>) = match kind {
        SyntheticKind::Gauss2 => (
            GAUSS2_DIM,
            labels
                .iter()
                .map(|&c| (0..GAUSS2_DIM).map(|_| c as f64 * GAUSS2_SEPARATION + unit.sample(&mut rng)).collect())
                .collect(),
        ),
        SyntheticKind::Xor => {
            let mut rows = Vec::with_capacity(n);
            for l in labels.iter_mut() {
                // a uniform point in one of the two quadrants of class `l`
                let qx = rng.gen_range(0..2usize);
                let qy = qx ^ *l;
                let a = (qx as f64 + rng.gen::<f64>()) / 2.0;
                let b = (qy as f64 + rng.gen::<f64>()) / 2.0;
                if rng.gen::<f64>() < XOR_NOISE {
                    *l = 1 - *l;
                }
                rows.push(vec![a, b]);
            }
            (2, rows)
        }
        SyntheticKind::Rings => (
            2,
            labels
                .iter()
                .map(|&c| {
                    let theta = rng.gen::<f64>() * std::f64::consts::TAU;
                    let r = 1.0 + c as f64 + 0.15 * unit.sample(&mut rng);
                    vec![r * theta.cos(), r * theta.sin()]
                })
                .collect(),
        ),
    };
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    Dataset::new(x, labels, vec!["0".into(), "1".into()], names).expect("generated data is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_file() {
        let text = "f1,f2,y\n1,2,a\n3,4,b\n5,6,a\n7,8,b\n9,10,a\n";
        let d = parse_dataset(text.as_bytes(), LabelColumn::Last).unwrap().dataset;
        assert_eq!((d.len(), d.n_features()), (5, 2));
        assert_eq!(d.class_names, vec!["a", "b"]);
        assert_eq!(d.labels, vec![0, 1, 0, 1, 0]);
    }

    #[test]
    fn missing_cell_rejected_with_line() {
        let text = "f1,f2,y\n1,2,a\n3,,b\n5,6,b\n";
        let loaded = parse_dataset(text.as_bytes(), LabelColumn::Last).unwrap();
        assert_eq!(loaded.dataset.len(), 2);
        assert_eq!(loaded.rejected.len(), 1);
        assert_eq!(loaded.rejected[0].line, 3);
    }

    #[test]
    fn single_class_is_label_error() {
        let text = "f,y\n1,a\n2,a\n";
        assert!(matches!(parse_dataset(text.as_bytes(), LabelColumn::Last), Err(DataError::Label(_))));
    }

    #[test]
    fn ragged_row_is_parse_error() {
        let text = "f,g,y\n1,2,a\n1,b\n";
        match parse_dataset(text.as_bytes(), LabelColumn::Last) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn named_label_and_categorical_features() {
        let text = "class,colour,size\n2,red,1.5\n10,blue,2\n2,red,3\n";
        let d = parse_dataset(text.as_bytes(), LabelColumn::Named("class")).unwrap().dataset;
        assert_eq!(d.feature_names, vec!["colour=blue", "colour=red", "size"]);
        assert_eq!(d.class_names, vec!["2", "10"]);
        assert_eq!(d.features.row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 2.0]);
        assert!(parse_dataset(text.as_bytes(), LabelColumn::Named("nope")).is_err());
    }

    #[test]
    fn generators_round_trip_through_csv() {
        for kind in [SyntheticKind::Gauss2, SyntheticKind::Xor, SyntheticKind::Rings] {
            let d = generate(kind, 40, 3);
            if kind != SyntheticKind::Xor {
                assert_eq!(d.class_counts(), vec![20, 20]);
            }
            let mut buf = Vec::new();
            write_dataset(&d, &mut buf).unwrap();
            let back = parse_dataset(buf.as_slice(), LabelColumn::Last).unwrap().dataset;
            assert_eq!(back, d);
        }
    }
}
