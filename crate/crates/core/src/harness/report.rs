use std::fs;
use std::path::Path;

use super::config::AttackKind;
use super::run::{AuditReport, CellReport};
use crate::error::{Error, Result};

const HEURISTIC_COLUMNS: [&str; 6] = ["dcr", "dcr_ideal", "one_minus_nndr", "hitting_rate", "eir_train", "eir_diff"];
const QUALITY_COLUMNS: [&str; 8] = [
    "alpha_precision",
    "beta_coverage",
    "avg_ks",
    "avg_tvd",
    "corr_diff",
    "mi_diff",
    "delta_r2",
    "delta_f1",
];
const DIVERGENCE_COLUMNS: [&str; 3] = ["pct_marginals_differing", "corr_delta", "mi_delta"];

fn fmt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn heuristic_values(c: &CellReport) -> Vec<Option<f64>> {
    match c.heuristics.as_ref().and_then(|o| o.ok()) {
        Some(h) => vec![
            Some(h.dcr),
            Some(h.dcr_ideal),
            Some(h.one_minus_nndr),
            Some(h.hitting_rate),
            Some(h.eir_train),
            Some(h.eir_diff),
        ],
        None => vec![None; HEURISTIC_COLUMNS.len()],
    }
}

fn quality_values(c: &CellReport) -> Vec<Option<f64>> {
    match c.quality.as_ref().and_then(|o| o.ok()) {
        Some(q) => vec![
            Some(q.alpha_precision),
            Some(q.beta_coverage),
            q.avg_ks,
            q.avg_tvd,
            q.corr_diff,
            q.mi_diff,
            q.delta_r2,
            q.delta_f1,
        ],
        None => vec![None; QUALITY_COLUMNS.len()],
    }
}

fn divergence_values(c: &CellReport) -> Vec<Option<f64>> {
    match c.divergence.as_ref().and_then(|o| o.ok()) {
        Some(d) => vec![Some(d.pct_marginals_differing), Some(d.corr_delta), Some(d.mi_delta)],
        None => vec![None; DIVERGENCE_COLUMNS.len()],
    }
}

fn first_error(c: &CellReport, attack: Option<AttackKind>) -> Option<String> {
    if let Some(e) = &c.setup_error {
        return Some(e.clone());
    }
    if let Some(a) = attack {
        if let Some(e) = c.attacks.iter().find(|r| r.attack == a).and_then(|r| r.result.error()) {
            return Some(e.to_string());
        }
    }
    [
        c.heuristics.as_ref().and_then(|o| o.error()),
        c.quality.as_ref().and_then(|o| o.error()),
        c.divergence.as_ref().and_then(|o| o.error()),
    ]
    .into_iter()
    .flatten()
    .next()
    .map(str::to_string)
}

/// One row per (cell, attack); cells without attacks get a single row with
/// an empty attack column.
pub fn cells_csv(report: &AuditReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = vec!["axis", "axis_value", "attack", "status", "tpr_at_fpr", "auc"];
    header.extend(HEURISTIC_COLUMNS);
    header.extend(QUALITY_COLUMNS);
    header.extend(DIVERGENCE_COLUMNS);
    header.push("error");
    w.write_record(&header)?;
    for c in &report.cells {
        let attacks: Vec<Option<AttackKind>> = if c.attacks.is_empty() {
            vec![None]
        } else {
            c.attacks.iter().map(|a| Some(a.attack)).collect()
        };
        for a in attacks {
            let score = a.and_then(|a| c.attacks.iter().find(|r| r.attack == a)).and_then(|r| r.result.ok());
            let error = first_error(c, a);
            let mut rec = vec![
                report.axis.clone(),
                c.label.clone(),
                a.map(|a| a.name().to_string()).unwrap_or_default(),
                if error.is_some() { "failed".into() } else { "ok".into() },
                fmt(score.map(|s| s.tpr_at_fpr)),
                fmt(score.map(|s| s.auc)),
            ];
            rec.extend(heuristic_values(c).into_iter().map(fmt));
            rec.extend(quality_values(c).into_iter().map(fmt));
            rec.extend(divergence_values(c).into_iter().map(fmt));
            rec.push(error.unwrap_or_default());
            w.write_record(&rec)?;
        }
    }
    w.into_inner().map_err(|e| Error::Config(e.to_string()))
}

fn plot_table(report: &AuditReport, columns: &[String], values: impl Fn(&CellReport) -> Vec<Option<f64>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![report.axis.clone()];
    header.extend(columns.iter().cloned());
    w.write_record(&header)?;
    for c in &report.cells {
        let mut rec = vec![c.label.clone()];
        rec.extend(values(c).into_iter().map(fmt));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Config(e.to_string()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `report.json`, `cells.csv` and `plotdata/*.csv` (x = axis value,
/// one column per series).
pub fn emit_report(report: &AuditReport, out_dir: &Path) -> Result<()> {
    let plot_dir = out_dir.join("plotdata");
    fs::create_dir_all(&plot_dir).map_err(|e| Error::io(&plot_dir, e))?;
    write(&out_dir.join("report.json"), &serde_json::to_vec_pretty(report)?)?;
    write(&out_dir.join("cells.csv"), &cells_csv(report)?)?;

    let mut kinds: Vec<AttackKind> = report.cells.iter().flat_map(|c| c.attacks.iter().map(|a| a.attack)).collect();
    kinds.sort();
    kinds.dedup();
    if !kinds.is_empty() {
        let cols: Vec<String> = kinds.iter().map(|k| k.name().to_string()).collect();
        let bytes = plot_table(report, &cols, |c| kinds.iter().map(|&k| c.tpr(k)).collect())?;
        write(&plot_dir.join("tpr_at_fpr.csv"), &bytes)?;
    }
    let named = |cols: &[&str]| cols.iter().map(|c| c.to_string()).collect::<Vec<_>>();
    if report.cells.iter().any(|c| c.heuristics.is_some()) {
        write(&plot_dir.join("heuristics.csv"), &plot_table(report, &named(&HEURISTIC_COLUMNS), heuristic_values)?)?;
    }
    if report.cells.iter().any(|c| c.quality.is_some()) {
        write(&plot_dir.join("quality.csv"), &plot_table(report, &named(&QUALITY_COLUMNS), quality_values)?)?;
    }
    if report.cells.iter().any(|c| c.divergence.is_some()) {
        write(&plot_dir.join("divergence.csv"), &plot_table(report, &named(&DIVERGENCE_COLUMNS), divergence_values)?)?;
    }
    Ok(())
}

pub fn load_report(path: &Path) -> Result<AuditReport> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}
