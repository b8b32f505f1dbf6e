//! Report assembly and emission: canonical JSON, CSV rows, and an SVG
//! line plot for ratio sweeps.
//!
//! Reports are deterministic given config and seed: serialization sorts
//! keys and floats print in shortest-round-trip form, so identical runs
//! produce identical bytes. Wall-clock time is therefore kept out of the
//! report document and written to a separate run-info sidecar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Metrics of one fold evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_test: usize,
    pub acc: f64,
    pub auc: Option<f64>,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTriple {
    pub acc: f64,
    pub auc: Option<f64>,
    pub f1: f64,
}

/// All folds of one (model, variant, ratio) cell, with mean and standard
/// deviation over folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricGroup {
    pub model: String,
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    pub folds: Vec<FoldMetrics>,
    pub mean: SummaryTriple,
    pub std: SummaryTriple,
}

impl MetricGroup {
    pub fn new(
        model: String,
        variant: String,
        ratio: Option<f64>,
        folds: Vec<FoldMetrics>,
    ) -> Self {
        let mean = SummaryTriple {
            acc: mean(folds.iter().map(|f| f.acc)),
            auc: mean_opt(folds.iter().map(|f| f.auc)),
            f1: mean(folds.iter().map(|f| f.f1)),
        };
        let std = SummaryTriple {
            acc: std_dev(folds.iter().map(|f| f.acc)),
            auc: {
                let defined: Vec<f64> = folds.iter().filter_map(|f| f.auc).collect();
                if defined.is_empty() {
                    None
                } else {
                    Some(std_dev(defined.iter().copied()))
                }
            },
            f1: std_dev(folds.iter().map(|f| f.f1)),
        };
        Self {
            model,
            variant,
            ratio,
            folds,
            mean,
            std,
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Sample standard deviation; zero for fewer than two values.
fn std_dev(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Averaging conventions, recorded so the numbers are interpretable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub auc_averaging: String,
    pub f1_averaging: String,
    pub rng: String,
}

impl Default for ReportMetadata {
    fn default() -> Self {
        Self {
            auc_averaging: "macro one-vs-rest over classes present, midrank ties".into(),
            f1_averaging: "macro over classes present".into(),
            rng: "ChaCha8".into(),
        }
    }
}

/// The full experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub version: u32,
    pub protocol: String,
    pub config: serde_json::Value,
    pub metadata: ReportMetadata,
    pub groups: Vec<MetricGroup>,
    /// Wall-clock seconds; excluded from serialization so report bytes stay
    /// deterministic. Emitted separately in the run-info sidecar.
    #[serde(skip)]
    pub runtime_seconds: f64,
}

impl MetricsReport {
    /// Canonical JSON: sorted keys, shortest-round-trip floats, trailing
    /// newline.
    pub fn to_canonical_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        Ok(text)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("protocol,model,variant,ratio,fold,n_test,acc,auc,f1\n");
        for g in &self.groups {
            for f in &g.folds {
                let ratio = g.ratio.map(|r| r.to_string()).unwrap_or_default();
                let auc = f.auc.map(|a| a.to_string()).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    self.protocol, g.model, g.variant, ratio, f.fold, f.n_test, f.acc, auc, f.f1
                ));
            }
        }
        out
    }

    /// Line plot of mean metrics against the missing ratio for sweep runs:
    /// one polyline each for ACC, AUC, F1 on the full model. `None` when
    /// the report has no ratio axis.
    pub fn sweep_svg(&self) -> Option<String> {
        let mut points: Vec<(f64, f64, Option<f64>, f64)> = self
            .groups
            .iter()
            .filter(|g| g.model == "full" && g.ratio.is_some())
            .map(|g| (g.ratio.unwrap(), g.mean.acc, g.mean.auc, g.mean.f1))
            .collect();
        if points.is_empty() {
            return None;
        }
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        let (w, h) = (640.0, 420.0);
        let (left, right, top, bottom) = (70.0, 20.0, 20.0, 60.0);
        let x_min = points.first().unwrap().0;
        let x_max = points.last().unwrap().0.max(x_min + 1e-9);
        let sx = |r: f64| left + (r - x_min) / (x_max - x_min) * (w - left - right);
        let sy = |m: f64| top + (1.0 - m) * (h - top - bottom);

        let polyline = |values: Vec<(f64, f64)>, color: &str, label: &str| {
            let pts: Vec<String> = values
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            format!(
                "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"><title>{label}</title></polyline>\n",
                pts.join(" ")
            )
        };

        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
        );
        // axes
        svg.push_str(&format!(
            "  <line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            h - bottom,
            w - right,
            h - bottom
        ));
        svg.push_str(&format!(
            "  <line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\"/>\n",
            h - bottom
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">missing ratio</text>\n",
            (left + w - right) / 2.0,
            h - 15.0
        ));
        svg.push_str(&format!(
            "  <text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">metric</text>\n",
            (top + h - bottom) / 2.0,
            (top + h - bottom) / 2.0
        ));
        for (i, &(r, ..)) in points.iter().enumerate() {
            let x = sx(r);
            svg.push_str(&format!(
                "  <text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{r}</text>\n",
                h - bottom + 18.0
            ));
            let _ = i;
        }
        for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
            svg.push_str(&format!(
                "  <text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"11\">{tick}</text>\n",
                left - 8.0,
                sy(tick) + 4.0
            ));
        }
        svg.push_str(&polyline(
            points.iter().map(|&(x, acc, ..)| (x, acc)).collect(),
            "#1b6ca8",
            "ACC",
        ));
        svg.push_str(&polyline(
            points
                .iter()
                .map(|&(x, _, auc, _)| (x, auc.unwrap_or(0.0)))
                .collect(),
            "#b02a30",
            "AUC",
        ));
        svg.push_str(&polyline(
            points.iter().map(|&(x, _, _, f1)| (x, f1)).collect(),
            "#2c7a3f",
            "F1",
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#1b6ca8\">ACC</text>\n",
            w - 120.0,
            top + 16.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#b02a30\">AUC</text>\n",
            w - 80.0,
            top + 16.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#2c7a3f\">F1</text>\n",
            w - 40.0,
            top + 16.0
        ));
        svg.push_str("</svg>\n");
        Some(svg)
    }
}

/// Output formats for [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
}

/// Write the requested formats into `dir` and return the paths written.
/// The SVG is skipped (not an error) when the report has no ratio axis.
pub fn emit_report(
    report: &MetricsReport,
    formats: &[ReportFormat],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for format in formats {
        match format {
            ReportFormat::Json => {
                let path = dir.join("report.json");
                std::fs::write(&path, report.to_canonical_json()?)?;
                written.push(path);
            }
            ReportFormat::Csv => {
                let path = dir.join("report.csv");
                std::fs::write(&path, report.to_csv())?;
                written.push(path);
            }
            ReportFormat::Svg => {
                if let Some(svg) = report.sweep_svg() {
                    let path = dir.join("report.svg");
                    std::fs::write(&path, svg)?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}

/// Volatile run information (runtime), kept out of the deterministic report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunInfo {
    pub runtime_seconds: f64,
    pub threads: usize,
}

pub fn emit_run_info(report: &MetricsReport, threads: usize, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let info = RunInfo {
        runtime_seconds: report.runtime_seconds,
        threads,
    };
    let path = dir.join("run_info.json");
    std::fs::write(&path, serde_json::to_string_pretty(&info)?)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> MetricsReport {
        let fold = |fold, acc, auc, f1| FoldMetrics {
            fold,
            n_test: 10,
            acc,
            auc: Some(auc),
            f1,
        };
        MetricsReport {
            version: 1,
            protocol: "proportional_missing".into(),
            config: serde_json::json!({"seed": 1}),
            metadata: ReportMetadata::default(),
            groups: (0..4)
                .map(|i| {
                    MetricGroup::new(
                        "full".into(),
                        "missing".into(),
                        Some(i as f64 * 0.25),
                        vec![
                            fold(0, 0.9 - 0.05 * i as f64, 0.95, 0.9),
                            fold(1, 0.88 - 0.05 * i as f64, 0.93, 0.88),
                        ],
                    )
                })
                .collect(),
            runtime_seconds: 1.5,
        }
    }

    #[test]
    fn json_round_trips() {
        let report = sample_report();
        let text = report.to_canonical_json().unwrap();
        let back: MetricsReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_canonical_json().unwrap(), text);
    }

    #[test]
    fn json_is_key_sorted() {
        let text = sample_report().to_canonical_json().unwrap();
        let config_pos = text.find("\"config\"").unwrap();
        let groups_pos = text.find("\"groups\"").unwrap();
        let version_pos = text.find("\"version\"").unwrap();
        assert!(config_pos < groups_pos && groups_pos < version_pos);
    }

    #[test]
    fn csv_row_count_is_folds_times_groups() {
        let report = sample_report();
        let csv = report.to_csv();
        let rows = csv.lines().count();
        assert_eq!(rows, 1 + 4 * 2);
    }

    #[test]
    fn sweep_svg_structure() {
        let report = sample_report();
        let svg = report.sweep_svg().unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
        // every polyline has 4 vertices
        for chunk in svg.split("<polyline").skip(1) {
            let points = chunk.split("points=\"").nth(1).unwrap();
            let points = points.split('"').next().unwrap();
            assert_eq!(points.split(' ').count(), 4);
        }
        assert!(svg.contains("missing ratio"));
        assert!(svg.contains("metric"));
    }

    #[test]
    fn mean_and_std_are_sane() {
        let g = MetricGroup::new(
            "full".into(),
            "complete".into(),
            None,
            vec![
                FoldMetrics {
                    fold: 0,
                    n_test: 5,
                    acc: 0.8,
                    auc: Some(0.9),
                    f1: 0.7,
                },
                FoldMetrics {
                    fold: 1,
                    n_test: 5,
                    acc: 1.0,
                    auc: None,
                    f1: 0.9,
                },
            ],
        );
        assert!((g.mean.acc - 0.9).abs() <= 1e-12);
        assert_eq!(g.mean.auc, Some(0.9));
        let expect_std = ((0.1f64 * 0.1 + 0.1 * 0.1) / 1.0).sqrt();
        assert!((g.std.acc - expect_std).abs() <= 1e-12);
    }

    #[test]
    fn emit_writes_requested_formats() {
        let dir = tempfile::tempdir().unwrap();
        let report = sample_report();
        let written = emit_report(
            &report,
            &[ReportFormat::Json, ReportFormat::Csv, ReportFormat::Svg],
            dir.path(),
        )
        .unwrap();
        assert_eq!(written.len(), 3);
        for path in written {
            assert!(path.exists());
        }
    }
}
