use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::protocols::{FairnessReport, InversionReport, PooledReport, PrivacyReport, SweepReport};
use super::utility::UtilityReport;
use super::ExperimentError;
use crate::metrics::IdentificationOdds;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(ExperimentError::InvalidArgument(format!("unknown report format {other:?}"))),
        }
    }
}

/// Hex SHA-256 of the compact JSON encoding (object keys sorted).
pub fn config_hash(config: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(config).expect("JSON values always serialize")))
}

/// A report body with the metadata every artifact carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub kind: String,
    pub toolkit_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub body: T,
}

impl<T> Report<T> {
    pub fn new(kind: &str, seed: u64, config: serde_json::Value, body: T) -> Self {
        Self {
            kind: kind.into(),
            toolkit_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config_hash: config_hash(&config),
            config,
            body,
        }
    }
}

/// Flat tabular view of a report body.
pub trait CsvTable {
    fn header(&self) -> Vec<String>;
    fn rows(&self) -> Vec<Vec<String>>;
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn strings<const N: usize>(v: [&str; N]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl CsvTable for SweepReport {
    fn header(&self) -> Vec<String> {
        let mut h = strings(["alpha", "eer_percent", "auroc", "accuracy", "sensitivity", "specificity"]);
        if let Some(r) = self.rows.first() {
            h.extend(r.subgroup_eer.keys().map(|k| format!("eer[{k}]")));
            h.extend(r.disorder_auroc.keys().map(|k| format!("auroc[{k}]")));
        }
        h
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut row = vec![
                    r.alpha.to_string(),
                    r.eer_percent.to_string(),
                    r.auroc.to_string(),
                    r.accuracy.to_string(),
                    r.sensitivity.to_string(),
                    r.specificity.to_string(),
                ];
                row.extend(r.subgroup_eer.values().map(|v| opt(*v)));
                row.extend(r.disorder_auroc.values().map(|v| opt(*v)));
                row
            })
            .collect()
    }
}

impl CsvTable for PrivacyReport {
    fn header(&self) -> Vec<String> {
        strings(["dimension", "group", "n_trials", "eer_original", "eer_anonymized"])
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let mut rows = vec![vec![
            "all".into(),
            "all".into(),
            self.n_trials.to_string(),
            self.original.eer_percent.to_string(),
            self.anonymized.eer_percent.to_string(),
        ]];
        rows.extend(self.subgroups.iter().map(|s| {
            vec![
                s.dimension.clone(),
                s.group.clone(),
                s.n_trials.to_string(),
                opt(s.eer_original),
                opt(s.eer_anonymized),
            ]
        }));
        rows
    }
}

impl CsvTable for UtilityReport {
    fn header(&self) -> Vec<String> {
        strings([
            "dimension",
            "group",
            "n_items",
            "auroc",
            "accuracy",
            "sensitivity",
            "specificity",
            "ptd",
        ])
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let o = &self.overall;
        let mut rows = vec![vec![
            "all".into(),
            "all".into(),
            self.n_items.to_string(),
            o.auroc.to_string(),
            o.accuracy.to_string(),
            o.sensitivity.to_string(),
            o.specificity.to_string(),
            "0".into(),
        ]];
        rows.extend(self.subgroups.iter().map(|s| {
            vec![
                s.dimension.clone(),
                s.group.clone(),
                s.n_items.to_string(),
                opt(s.metrics.map(|m| m.auroc)),
                s.accuracy.to_string(),
                opt(s.metrics.map(|m| m.sensitivity)),
                opt(s.metrics.map(|m| m.specificity)),
                s.ptd.to_string(),
            ]
        }));
        rows
    }
}

impl CsvTable for PooledReport {
    fn header(&self) -> Vec<String> {
        strings(["subset", "eer_original", "eer_anonymized", "auroc_original", "auroc_anonymized"])
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let au = |r: &UtilityReport| r.overall.auroc.to_string();
        vec![
            vec![
                "combined".into(),
                self.combined.original.to_string(),
                self.combined.anonymized.to_string(),
                au(&self.utility_original),
                au(&self.utility_anonymized),
            ],
            vec![
                "patients".into(),
                self.patients.original.to_string(),
                self.patients.anonymized.to_string(),
                String::new(),
                String::new(),
            ],
            vec![
                "controls".into(),
                self.controls.original.to_string(),
                self.controls.anonymized.to_string(),
                String::new(),
                String::new(),
            ],
        ]
    }
}

impl CsvTable for InversionReport {
    fn header(&self) -> Vec<String> {
        strings(["method", "n_trials", "eer_original", "eer_naive", "eer_inverse"])
    }

    fn rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.method.clone(),
            self.n_trials.to_string(),
            self.eer_original.to_string(),
            self.eer_naive.to_string(),
            self.eer_inverse.to_string(),
        ]]
    }
}

impl CsvTable for FairnessReport {
    fn header(&self) -> Vec<String> {
        strings([
            "dimension",
            "group",
            "eer_original",
            "eer_anonymized",
            "n_items",
            "accuracy",
            "auroc",
            "ptd",
        ])
    }

    /// One row per subgroup, joining privacy and utility on (dimension, group).
    fn rows(&self) -> Vec<Vec<String>> {
        let mut keys: Vec<(String, String)> = self
            .privacy
            .subgroups
            .iter()
            .map(|s| (s.dimension.clone(), s.group.clone()))
            .chain(self.utility.subgroups.iter().map(|s| (s.dimension.clone(), s.group.clone())))
            .collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .map(|(dim, group)| {
                let p = self.privacy.subgroups.iter().find(|s| s.dimension == dim && s.group == group);
                let u = self.utility.subgroups.iter().find(|s| s.dimension == dim && s.group == group);
                vec![
                    dim.clone(),
                    group.clone(),
                    opt(p.and_then(|p| p.eer_original)),
                    opt(p.and_then(|p| p.eer_anonymized)),
                    u.map(|u| u.n_items.to_string()).unwrap_or_default(),
                    opt(u.map(|u| u.accuracy)),
                    opt(u.and_then(|u| u.metrics.map(|m| m.auroc))),
                    opt(u.map(|u| u.ptd)),
                ]
            })
            .collect()
    }
}

impl CsvTable for IdentificationOdds {
    fn header(&self) -> Vec<String> {
        strings(["expected_false_accepts", "odds"])
    }

    fn rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.expected_false_accepts.to_string(),
            format!("1:{}", self.odds_denominator),
        ]]
    }
}

/// Renders a report. CSV rows carry `seed`, `toolkit_version` and
/// `config_hash` columns; JSON is the full structure.
pub fn render_report<T: Serialize + CsvTable>(report: &Report<T>, format: ReportFormat) -> Result<Vec<u8>, ExperimentError> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report)?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = report.body.header();
            header.extend(strings(["seed", "toolkit_version", "config_hash"]));
            w.write_record(&header)?;
            for mut row in report.body.rows() {
                row.extend([
                    report.seed.to_string(),
                    report.toolkit_version.clone(),
                    report.config_hash.clone(),
                ]);
                w.write_record(&row)?;
            }
            w.into_inner()
                .map_err(|e| ExperimentError::Io(std::io::Error::other(e.to_string())))
        }
    }
}

pub fn emit_report<T: Serialize + CsvTable>(
    report: &Report<T>,
    format: ReportFormat,
    path: &Path,
) -> Result<(), ExperimentError> {
    let bytes = render_report(report, format)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}
