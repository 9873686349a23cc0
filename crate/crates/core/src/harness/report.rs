//! Experiment result assembly and formatting.

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator), 0 for fewer than two
/// values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Least-squares slope of `ln(y)` against `ln(x)`; used to check that
/// extraction time scales linearly with pixel count.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mx = mean(&logs.iter().map(|p| p.0).collect::<Vec<_>>());
    let my = mean(&logs.iter().map(|p| p.1).collect::<Vec<_>>());
    let cov: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    cov / var
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    /// Mean wall time of feature extraction, seconds per freshly extracted
    /// image (cache hits excluded).
    pub feature_extraction_s_per_image: f64,
    /// Mean wall time per classified query.
    pub matching_s_per_query: f64,
}

/// Everything a run produces: the resolved configuration, per-fold
/// accuracies and their summary, the confusion matrix, and (unless
/// suppressed) timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    /// Which evaluation protocol produced the numbers, e.g.
    /// `stratified-10-fold` or `suite-split`.
    pub protocol: String,
    pub class_names: Vec<String>,
    pub sample_count: usize,
    pub per_fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// Rows are true classes, columns predicted; row sums equal per-class
    /// test counts.
    pub confusion_matrix: Vec<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingReport>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned-column text rendering.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let kv = |out: &mut String, key: &str, value: String| {
            let _ = writeln!(out, "{key:<22} {value}");
        };
        kv(&mut out, "descriptor", self.config.feature.descriptor.to_string());
        kv(&mut out, "classifier", self.config.classifier.to_string());
        kv(&mut out, "protocol", self.protocol.clone());
        kv(&mut out, "sigma", format!("{}", self.config.feature.sigma));
        kv(
            &mut out,
            "sampling (R, N)",
            format!("({}, {})", self.config.feature.radius, self.config.feature.neighbors),
        );
        kv(&mut out, "mapping", self.config.feature.mapping.to_string());
        kv(&mut out, "seed", self.config.seed.to_string());
        if let Some(snr) = self.config.snr_db {
            kv(&mut out, "awgn snr (dB)", format!("{snr}"));
        }
        kv(&mut out, "classes", self.class_names.len().to_string());
        kv(&mut out, "samples", self.sample_count.to_string());
        out.push('\n');

        let _ = writeln!(out, "{:>5}  {:>9}", "fold", "accuracy");
        for (i, acc) in self.per_fold_accuracy.iter().enumerate() {
            let _ = writeln!(out, "{:>5}  {:>9.4}", i + 1, acc);
        }
        let _ = writeln!(
            out,
            "\nmean accuracy {:.4}  std {:.4}",
            self.mean_accuracy, self.std_accuracy
        );

        let _ = writeln!(out, "\nconfusion matrix (rows = true class):");
        let name_width = self
            .class_names
            .iter()
            .map(|n| n.len())
            .max()
            .unwrap_or(4)
            .max(4);
        let cell = 6;
        let _ = write!(out, "{:<name_width$}", "");
        for j in 0..self.class_names.len() {
            let _ = write!(out, " {j:>cell$}");
        }
        out.push('\n');
        for (i, row) in self.confusion_matrix.iter().enumerate() {
            let _ = write!(out, "{:<name_width$}", self.class_names[i]);
            for v in row {
                let _ = write!(out, " {v:>cell$}");
            }
            out.push('\n');
        }

        if let Some(t) = &self.timing {
            let _ = writeln!(
                out,
                "\nfeature extraction {:.6} s/image, matching {:.6} s/query",
                t.feature_extraction_s_per_image, t.matching_s_per_query
            );
        }
        out
    }
}
