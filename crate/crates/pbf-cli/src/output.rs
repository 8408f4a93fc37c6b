//! Report rendering: text tables, CSV files, and the run manifest.

use pbf_core::experiment::{ConvergenceStudy, ExperimentConfig, StudyKind, TableStudy};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;

fn score_cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.3}"))
}

fn csv_to_string(wtr: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(wtr.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

/// Summary rows in the fixed column order; the covariate column appears
/// only for rosters over more than one covariate.
pub fn table_csv(study: &TableStudy) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let with_covs = study.covariate_names.len() > 1;
    let mut header: Vec<&str> = Vec::new();
    if with_covs {
        header.push("Covariates");
    }
    header.extend(["Model", "Link function", "Regression form", "Forward", "Inverse"]);
    wtr.write_record(&header).expect("in-memory csv");
    for row in &study.summary {
        let d = row.entry.display(&study.covariate_names);
        let mut rec: Vec<String> = Vec::new();
        if with_covs {
            rec.push(d.covariates);
        }
        rec.extend([
            d.model,
            d.link,
            d.regression,
            score_cell(row.mean_forward),
            score_cell(row.mean_inverse),
        ]);
        wtr.write_record(&rec).expect("in-memory csv");
    }
    csv_to_string(wtr)
}

pub fn table_pretty(study: &TableStudy) -> String {
    let with_covs = study.covariate_names.len() > 1;
    let mut header: Vec<String> = Vec::new();
    if with_covs {
        header.push("Covariates".into());
    }
    header.extend(
        ["Model", "Link", "Regression", "Forward", "Inverse", "Wins"]
            .map(String::from),
    );
    let mut rows: Vec<Vec<String>> = vec![header];
    for row in &study.summary {
        let d = row.entry.display(&study.covariate_names);
        let mut rec: Vec<String> = Vec::new();
        if with_covs {
            rec.push(d.covariates);
        }
        rec.extend([
            d.model,
            d.link,
            d.regression,
            score_cell(row.mean_forward),
            score_cell(row.mean_inverse),
            format!("{}/{}", row.forward_wins, study.per_seed.len()),
        ]);
        rows.push(rec);
    }
    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        let _ = writeln!(text, "{}", line.join("  ").trim_end());
    }
    let _ = writeln!(
        text,
        "n = {}, m = {}, scored replicate {}; {} seeds; scores are seed means",
        study.n,
        study.m,
        study.scored_replicate,
        study.per_seed.len()
    );
    let mut notes: BTreeMap<String, usize> = BTreeMap::new();
    for seed_table in &study.per_seed {
        for row in &seed_table.rows {
            for cell in [&row.forward, &row.inverse] {
                if let Some(note) = &cell.note {
                    *notes.entry(format!("{}: {}", row.label, note)).or_default() += 1;
                }
            }
        }
    }
    for (note, count) in notes {
        let _ = writeln!(text, "note ({count} seeds) {note}");
    }
    text
}

pub fn convergence_csv(study: &ConvergenceStudy) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["seed", "n", "normalized_log_pbf", "limit", "gap"])
        .expect("in-memory csv");
    for p in &study.points {
        wtr.write_record([
            p.seed.to_string(),
            p.n.to_string(),
            format!("{:.10}", p.normalized_log_pbf),
            format!("{:.10}", p.limit),
            format!("{:.10}", p.gap),
        ])
        .expect("in-memory csv");
    }
    csv_to_string(wtr)
}

/// The two curves a convergence plot needs: the estimate against n, and
/// the analytic limit as the reference line.
pub fn plot_data_csv(study: &ConvergenceStudy) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["n", "normalized_log_pbf", "limit"])
        .expect("in-memory csv");
    for p in &study.points {
        wtr.write_record([
            p.n.to_string(),
            format!("{:.10}", p.normalized_log_pbf),
            format!("{:.10}", p.limit),
        ])
        .expect("in-memory csv");
    }
    csv_to_string(wtr)
}

pub fn convergence_pretty(study: &ConvergenceStudy) -> String {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{} vs {}; analytic limit {:+.10}",
        study.numerator, study.denominator, study.limit
    );
    for p in &study.points {
        let _ = writeln!(
            text,
            "seed {:>3}  n {:>6}  score {:+.6}  gap {:.6}",
            p.seed, p.n, p.normalized_log_pbf, p.gap
        );
    }
    let _ = writeln!(
        text,
        "{} of {} seeds tightened from the first to the last n; trend {}",
        study.improving_seeds,
        study.total_seeds,
        if study.trend_met { "met" } else { "not met" }
    );
    text
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub study: StudyKind,
    pub seeds: Vec<u64>,
    pub versions: BTreeMap<String, String>,
}

/// Hash of the effective config (after command line overrides), so a
/// result directory pins exactly what produced it.
pub fn manifest_for(cfg: &ExperimentConfig) -> Manifest {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    let config_sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
    let mut versions = BTreeMap::new();
    versions.insert("pbf-core".to_string(), pbf_core::VERSION.to_string());
    versions.insert("pbf-cli".to_string(), env!("CARGO_PKG_VERSION").to_string());
    Manifest {
        config_sha256,
        study: cfg.study,
        seeds: cfg.seeds.clone(),
        versions,
    }
}
