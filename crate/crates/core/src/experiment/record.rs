//! Per-epoch records and their CSV form.

use std::fmt::Write as _;
use std::path::Path;

use crate::controller::Verdict;
use crate::data::AuxSource;
use crate::error::{Error, Result};
use crate::nn::NeuronId;

pub const CSV_HEADER: &str = "epoch,train_loss,train_acc,test_loss,test_acc,val_loss,model_velocity,learning_rate,decision,wall_seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    pub val_loss: Option<f64>,
    /// Velocity on the first aux source; `None` when probing is off.
    pub model_velocity: Option<f64>,
    /// Rate in effect for the next epoch, i.e. after this epoch's decision.
    pub learning_rate: f64,
    pub decision: Verdict,
    pub wall_seconds: f64,
    /// Velocity per aux source, in configured order.
    pub source_velocity: Vec<(AuxSource, f64)>,
}

impl RunRecord {
    /// The record with timing zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> RunRecord {
        RunRecord {
            wall_seconds: 0.0,
            ..self.clone()
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn records_to_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.train_loss,
            r.train_acc,
            r.test_loss,
            r.test_acc,
            opt(r.val_loss),
            opt(r.model_velocity),
            r.learning_rate,
            r.decision.label(),
            r.wall_seconds
        );
    }
    out
}

/// One column per aux source.
pub fn source_velocity_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("epoch");
    if let Some(first) = records.first() {
        for (s, _) in &first.source_velocity {
            out.push(',');
            out.push_str(s.label());
        }
    }
    out.push('\n');
    for r in records {
        out.push_str(&r.epoch.to_string());
        for (_, v) in &r.source_velocity {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Per-neuron change rate and velocity after one epoch.
pub fn neuron_dump_csv(neurons: &[NeuronId], rho: &[f64], velocity: &[f64]) -> String {
    let mut out = String::from("neuron,layer,rho,velocity\n");
    for (i, ((n, r), v)) in neurons.iter().zip(rho).zip(velocity).enumerate() {
        let _ = writeln!(out, "{i},{},{r},{v}", n.layer);
    }
    out
}

/// Parsed row of a run CSV. Decisions come back as labels since the
/// rescale factor is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    pub val_loss: Option<f64>,
    pub model_velocity: Option<f64>,
    pub learning_rate: f64,
    pub decision: String,
    pub wall_seconds: f64,
}

pub fn parse_run_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::format(
                path,
                format!("unexpected header {:?}", other.unwrap_or("")),
            ))
        }
    }
    let bad = |line: usize, what: &str| Error::format(path, format!("line {line}: bad {what}"));
    let num = |s: &str, line: usize, what: &str| s.parse::<f64>().map_err(|_| bad(line, what));
    let optnum = |s: &str, line: usize, what: &str| {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s, line, what).map(Some)
        }
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let ln = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(Error::format(
                path,
                format!("line {ln}: {} fields", f.len()),
            ));
        }
        rows.push(CsvRow {
            epoch: f[0].parse().map_err(|_| bad(ln, "epoch"))?,
            train_loss: num(f[1], ln, "train_loss")?,
            train_acc: num(f[2], ln, "train_acc")?,
            test_loss: num(f[3], ln, "test_loss")?,
            test_acc: num(f[4], ln, "test_acc")?,
            val_loss: optnum(f[5], ln, "val_loss")?,
            model_velocity: optnum(f[6], ln, "model_velocity")?,
            learning_rate: num(f[7], ln, "learning_rate")?,
            decision: f[8].to_string(),
            wall_seconds: num(f[9], ln, "wall_seconds")?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: usize, val: Option<f64>) -> RunRecord {
        RunRecord {
            epoch,
            train_loss: 0.5,
            train_acc: 0.75,
            test_loss: 0.25,
            test_acc: 0.875,
            val_loss: val,
            model_velocity: Some(0.1 / 3.0),
            learning_rate: 0.01,
            decision: Verdict::RescaleLr(0.01),
            wall_seconds: 0.125,
            source_velocity: vec![(AuxSource::GaussianNoise, 0.1 / 3.0)],
        }
    }

    #[test]
    fn csv_round_trips_exact_values() {
        let rows = vec![rec(1, None), rec(2, Some(1.0 / 7.0))];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, records_to_csv(&rows)).unwrap();
        let back = parse_run_csv(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].val_loss, None);
        assert_eq!(back[1].val_loss, Some(1.0 / 7.0));
        assert_eq!(back[1].model_velocity, Some(0.1 / 3.0));
        assert_eq!(back[1].decision, "rescale");
    }

    #[test]
    fn header_is_exact() {
        let csv = records_to_csv(&[]);
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    }
}
