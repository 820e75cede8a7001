//! Study reports and their CSV/JSON forms.

use std::collections::BTreeMap;
use std::io::Write;

use lavc::kernels::Kernel;
use lavc::smoothing::{kde, silverman_bandwidth};
use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};

/// Aggregates of one configuration (an estimator, a test at one `a`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub metrics: BTreeMap<String, f64>,
}

/// Numerical results of a study. Contains no wall-clock data, so identical
/// configurations give identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: String,
    pub reps: usize,
    pub seed: u64,
    pub config: serde_json::Value,
    pub rows: Vec<ReportRow>,
    /// Per-replication values in replication order.
    pub samples: BTreeMap<String, Vec<f64>>,
}

impl StudyReport {
    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn metric(&self, label: &str, metric: &str) -> Option<f64> {
        self.row(label).and_then(|r| r.metrics.get(metric).copied())
    }

    /// Long format: `label,metric,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> SimResult<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| SimError::Serialize(e.to_string());
        w.write_record(["label", "metric", "value"]).map_err(err)?;
        for row in &self.rows {
            for (name, value) in &row.metrics {
                w.write_record([row.label.as_str(), name.as_str(), &value.to_string()])
                    .map_err(err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> SimResult<()> {
        serde_json::to_writer_pretty(&mut out, self).map_err(|e| SimError::Serialize(e.to_string()))?;
        writeln!(out)?;
        Ok(())
    }

    /// Kernel density traces of every sample series: `label,x,density`.
    pub fn write_density_csv<W: Write>(&self, out: W, points: usize) -> SimResult<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| SimError::Serialize(e.to_string());
        w.write_record(["label", "x", "density"]).map_err(err)?;
        for (label, samples) in &self.samples {
            for (x, d) in density_trace(samples, points) {
                w.write_record([label.as_str(), &x.to_string(), &d.to_string()])
                    .map_err(err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Epanechnikov density estimate of `samples` on `points` equally spaced
/// abscissae covering the sample range plus one bandwidth on each side.
pub fn density_trace(samples: &[f64], points: usize) -> Vec<(f64, f64)> {
    let finite: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < 2 || points < 2 {
        return Vec::new();
    }
    let h = silverman_bandwidth(&finite).max(f64::EPSILON);
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min) - h;
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max) + h;
    (0..points)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            (x, kde(&finite, Kernel::Epanechnikov, h, x))
        })
        .collect()
}

/// Wall-clock measurements, kept apart from the numerical report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub label: String,
    pub median_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
}

impl TimingReport {
    pub fn median(&self, label: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.label == label).map(|r| r.median_seconds)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> SimResult<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| SimError::Serialize(e.to_string());
        w.write_record(["label", "median_seconds", "min_seconds", "max_seconds", "reps"])
            .map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                r.median_seconds.to_string(),
                r.min_seconds.to_string(),
                r.max_seconds.to_string(),
                r.reps.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> StudyReport {
        StudyReport {
            study: "demo".into(),
            reps: 2,
            seed: 1,
            config: serde_json::json!({"n": 10}),
            rows: vec![ReportRow {
                label: "a".into(),
                metrics: BTreeMap::from([("mise".to_string(), 0.25), ("sd".to_string(), 1.5)]),
            }],
            samples: BTreeMap::from([("ise:a".to_string(), vec![0.2, 0.3, 0.1])]),
        }
    }

    #[test]
    fn csv_long_format() {
        let mut buf = Vec::new();
        report().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "label,metric,value\na,mise,0.25\na,sd,1.5\n");
    }

    #[test]
    fn json_round_trip() {
        let mut buf = Vec::new();
        report().write_json(&mut buf).unwrap();
        let back: StudyReport = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, report());
        assert_eq!(back.metric("a", "mise"), Some(0.25));
    }

    #[test]
    fn density_trace_integrates_to_one() {
        let samples: Vec<f64> = (0..200).map(|i| ((i * 31 % 200) as f64 / 40.0).sin()).collect();
        let trace = density_trace(&samples, 400);
        let step = trace[1].0 - trace[0].0;
        let mass: f64 = trace.iter().map(|p| p.1).sum::<f64>() * step;
        assert!((mass - 1.0).abs() < 0.01, "{mass}");
    }
}
