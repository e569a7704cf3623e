//! Per-epoch metrics rows and the versioned CSV format they are stored in.
//!
//! The file starts with the comment line `# maxroam-metrics v1`, then a
//! header whose column count depends on the layer and task counts:
//!
//! ```text
//! epoch,update_steps,mean_overlap,unassigned_params,
//! r_l0..r_l{D-1}, train_loss_t0.., val_loss_t0.., val_f_t0.., seed
//! ```
//!
//! Floats are written in Rust's shortest round-trip representation, so a
//! file is a pure function of the run's inputs: two runs with the same
//! configuration and seed produce byte-identical files.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_FORMAT_HEADER: &str = "# maxroam-metrics v1";

/// One epoch's worth of measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    /// Partition update steps applied so far (the plan clock of the layer
    /// with the longest plan; 0 when partitions never move).
    pub update_steps: usize,
    /// Mean pairwise active-set overlap fraction across layers.
    pub mean_overlap: f64,
    /// Parameters currently assigned to no task, summed over layers.
    pub unassigned_params: usize,
    /// Per-layer update ratio.
    pub r_per_layer: Vec<f64>,
    /// Per-task mean training loss over the epoch's minibatches.
    pub train_loss: Vec<f64>,
    /// Per-task loss over the validation split.
    pub val_loss: Vec<f64>,
    /// Per-task F-score on the validation split; `None` for regression.
    pub val_f: Vec<Option<f64>>,
    pub seed: u64,
}

/// Streams [`MetricsRecord`]s to a CSV file.
pub struct MetricsWriter {
    writer: csv::Writer<std::fs::File>,
    layers: usize,
    tasks: usize,
}

impl MetricsWriter {
    pub fn create(path: &Path, layers: usize, tasks: usize) -> Result<Self> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "{METRICS_FORMAT_HEADER}")?;
        let mut writer = csv::Writer::from_writer(file);
        let mut header = vec![
            "epoch".to_string(),
            "update_steps".to_string(),
            "mean_overlap".to_string(),
            "unassigned_params".to_string(),
        ];
        header.extend((0..layers).map(|d| format!("r_l{d}")));
        header.extend((0..tasks).map(|t| format!("train_loss_t{t}")));
        header.extend((0..tasks).map(|t| format!("val_loss_t{t}")));
        header.extend((0..tasks).map(|t| format!("val_f_t{t}")));
        header.push("seed".to_string());
        writer.write_record(&header)?;
        Ok(MetricsWriter {
            writer,
            layers,
            tasks,
        })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        assert_eq!(record.r_per_layer.len(), self.layers, "layer count drifted");
        assert_eq!(record.train_loss.len(), self.tasks, "task count drifted");
        let mut row = vec![
            record.epoch.to_string(),
            record.update_steps.to_string(),
            record.mean_overlap.to_string(),
            record.unassigned_params.to_string(),
        ];
        row.extend(record.r_per_layer.iter().map(f64::to_string));
        row.extend(record.train_loss.iter().map(f64::to_string));
        row.extend(record.val_loss.iter().map(f64::to_string));
        row.extend(
            record
                .val_f
                .iter()
                .map(|f| f.map(|v| v.to_string()).unwrap_or_default()),
        );
        row.push(record.seed.to_string());
        self.writer.write_record(&row)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

/// Reads a metrics CSV back into records, checking the format header.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file);
    let mut first = String::new();
    lines.read_line(&mut first)?;
    if first.trim_end() != METRICS_FORMAT_HEADER {
        return Err(Error::Config(format!(
            "{}: expected format header {METRICS_FORMAT_HEADER:?}, found {:?}",
            path.display(),
            first.trim_end()
        )));
    }
    let mut reader = csv::Reader::from_reader(lines);
    let header = reader.headers()?.clone();
    let layers = header.iter().filter(|h| h.starts_with("r_l")).count();
    let tasks = header.iter().filter(|h| h.starts_with("train_loss_t")).count();
    let parse = |field: &str| -> Result<f64> {
        field
            .parse()
            .map_err(|e| Error::Config(format!("{}: bad float {field:?}: {e}", path.display())))
    };
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let mut fields = row.iter();
        let mut next = || {
            fields
                .next()
                .ok_or_else(|| Error::Config(format!("{}: short row", path.display())))
        };
        let epoch = next()?.parse().map_err(|e| Error::Config(format!("bad epoch: {e}")))?;
        let update_steps = next()?
            .parse()
            .map_err(|e| Error::Config(format!("bad update_steps: {e}")))?;
        let mean_overlap = parse(next()?)?;
        let unassigned_params = next()?
            .parse()
            .map_err(|e| Error::Config(format!("bad unassigned_params: {e}")))?;
        let r_per_layer = (0..layers).map(|_| parse(next()?)).collect::<Result<_>>()?;
        let train_loss = (0..tasks).map(|_| parse(next()?)).collect::<Result<_>>()?;
        let val_loss = (0..tasks).map(|_| parse(next()?)).collect::<Result<_>>()?;
        let val_f = (0..tasks)
            .map(|_| -> Result<Option<f64>> {
                let field = next()?;
                if field.is_empty() {
                    Ok(None)
                } else {
                    parse(field).map(Some)
                }
            })
            .collect::<Result<_>>()?;
        let seed = next()?.parse().map_err(|e| Error::Config(format!("bad seed: {e}")))?;
        records.push(MetricsRecord {
            epoch,
            update_steps,
            mean_overlap,
            unassigned_params,
            r_per_layer,
            train_loss,
            val_loss,
            val_f,
            seed,
        });
    }
    Ok(records)
}

/// F1 score of thresholded predictions against {0, 1} labels:
/// `2 TP / (2 TP + FP + FN)`. An empty confusion (no positives predicted or
/// labeled) counts as a perfect 1; predicted-or-labeled positives with zero
/// true positives count as 0.
pub fn f_score(predictions: &[bool], labels: &[f64]) -> f64 {
    assert_eq!(predictions.len(), labels.len());
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&pred, &label) in predictions.iter().zip(labels) {
        let actual = label >= 0.5;
        match (pred, actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 && fp == 0 && fn_ == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(epoch: usize) -> MetricsRecord {
        MetricsRecord {
            epoch,
            update_steps: epoch * 2,
            mean_overlap: 0.25 + epoch as f64 * 0.001,
            unassigned_params: 0,
            r_per_layer: vec![0.1 * epoch as f64, 0.2 * epoch as f64],
            train_loss: vec![0.693, 0.581],
            val_loss: vec![0.699, 0.603],
            val_f: vec![Some(0.5), None],
            seed: 17,
        }
    }

    #[test]
    fn csv_roundtrip_preserves_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let mut writer = MetricsWriter::create(&path, 2, 2).unwrap();
        let records = vec![record(0), record(1), record(2)];
        for r in &records {
            writer.write(r).unwrap();
        }
        writer.flush().unwrap();
        assert_eq!(read_metrics(&path).unwrap(), records);
    }

    #[test]
    fn format_header_is_first_line_and_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let mut writer = MetricsWriter::create(&path, 1, 1).unwrap();
        writer.flush().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# maxroam-metrics v1\n"));

        std::fs::write(&path, "epoch,seed\n0,1\n").unwrap();
        assert!(read_metrics(&path).is_err());
    }

    #[test]
    fn f_score_matches_hand_counts() {
        // TP = 2, FP = 1, FN = 1: F = 4 / (4 + 1 + 1) = 2/3.
        let preds = [true, true, true, false, false];
        let labels = [1.0, 1.0, 0.0, 1.0, 0.0];
        assert!((f_score(&preds, &labels) - 2.0 / 3.0).abs() < 1e-15);
        // Degenerate cases.
        assert_eq!(f_score(&[false, false], &[0.0, 0.0]), 1.0);
        assert_eq!(f_score(&[true, true], &[0.0, 0.0]), 0.0);
        assert_eq!(f_score(&[false, false], &[1.0, 1.0]), 0.0);
        assert_eq!(f_score(&[true, false], &[1.0, 0.0]), 1.0);
    }
}
