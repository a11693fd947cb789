//! CSV and JSON outputs.
//!
//! `train_log.csv` has the columns of [`TRAIN_LOG_HEADER`]; cells without a
//! value (no supervised loss during RL, no dev snapshot) are empty. Curves are
//! one file per metric with columns `stage,batch,value`. The sweep heatmap
//! uses [`HEATMAP_HEADER`].

use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use ssrl_core::eval::{EvalReport, PartitionMetrics};
use ssrl_core::kg::{GraphStats, Vocabularies};
use ssrl_core::labels::CoverageReport;
use ssrl_core::train::{DevSnapshot, HeatmapCell, LogRow, TrainLog};

pub const TRAIN_LOG_HEADER: [&str; 11] =
    ["stage", "batch", "mean_reward", "sl_loss", "entropy", "baseline", "hits1", "hits3", "hits10", "hits20", "mrr"];
pub const CURVE_HEADER: [&str; 3] = ["stage", "batch", "value"];
pub const HEATMAP_HEADER: [&str; 4] = ["sl_epochs", "metric", "value", "delta_vs_epoch0"];

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("training log is empty")]
    EmptyLog,
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), OutputError> {
    let err = |source| OutputError::Csv { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| OutputError::Io { path: dir.to_path_buf(), source })?;
    }
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.flush().map_err(|source| OutputError::Io { path: path.to_path_buf(), source })
}

fn log_record(r: &LogRow) -> Vec<String> {
    let dev = |f: fn(&DevSnapshot) -> f64| r.dev.as_ref().map(|d| num(f(d))).unwrap_or_default();
    vec![
        r.stage.as_str().to_string(),
        r.batch.to_string(),
        num(r.mean_reward),
        r.sl_loss.map(num).unwrap_or_default(),
        num(r.entropy),
        num(r.baseline),
        dev(|d| d.hits1),
        dev(|d| d.hits3),
        dev(|d| d.hits10),
        dev(|d| d.hits20),
        dev(|d| d.mrr),
    ]
}

pub fn write_train_log(log: &TrainLog, path: &Path) -> Result<(), OutputError> {
    write_csv(path, &TRAIN_LOG_HEADER, log.rows().iter().map(log_record))
}

/// Curve names and how each is read off a log row.
const CURVES: [(&str, fn(&LogRow) -> Option<f64>); 8] = [
    ("reward", |r| Some(r.mean_reward)),
    ("entropy", |r| Some(r.entropy)),
    ("sl_loss", |r| r.sl_loss),
    ("hits1", |r| r.dev.map(|d| d.hits1)),
    ("hits3", |r| r.dev.map(|d| d.hits3)),
    ("hits10", |r| r.dev.map(|d| d.hits10)),
    ("hits20", |r| r.dev.map(|d| d.hits20)),
    ("mrr", |r| r.dev.map(|d| d.mrr)),
];

/// Writes `curve_<metric>.csv` for every metric; returns the paths written.
pub fn emit_curves(log: &TrainLog, dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    if log.is_empty() {
        return Err(OutputError::EmptyLog);
    }
    let mut paths = Vec::new();
    for (name, get) in CURVES {
        let path = dir.join(format!("curve_{name}.csv"));
        let rows = log
            .rows()
            .iter()
            .filter_map(|r| get(r).map(|v| vec![r.stage.as_str().to_string(), r.batch.to_string(), num(v)]));
        write_csv(&path, &CURVE_HEADER, rows)?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn write_heatmap(cells: &[HeatmapCell], path: &Path) -> Result<(), OutputError> {
    write_csv(
        path,
        &HEATMAP_HEADER,
        cells.iter().map(|c| vec![c.sl_epochs.to_string(), c.metric.to_string(), num(c.value), num(c.delta_vs_epoch0)]),
    )
}

pub fn stats_json(stats: &GraphStats, vocab: &Vocabularies) -> Value {
    let freq: Map<String, Value> =
        stats.relation_frequency.iter().map(|(r, n)| (vocab.relation_name(*r), json!(n))).collect();
    json!({
        "entity_count": stats.entity_count,
        "relation_count": stats.relation_count,
        "fact_count": stats.fact_count,
        "mean_degree": stats.mean_degree,
        "median_degree": stats.median_degree,
        "relation_frequency": freq,
        "k_hop_target_fraction": stats.k_hop_target_fraction,
    })
}

pub fn coverage_json(cov: &CoverageReport, vocab: &Vocabularies) -> Value {
    let per: Map<String, Value> = cov
        .per_relation
        .iter()
        .map(|(r, c)| (vocab.relation_name(*r), json!({"labeled": c.labeled, "total": c.total, "fraction": c.fraction()})))
        .collect();
    json!({
        "labeled": cov.overall.labeled,
        "total": cov.overall.total,
        "fraction": cov.overall.fraction(),
        "per_relation": per,
    })
}

fn partition_json(p: &Option<PartitionMetrics>) -> Value {
    match p {
        Some(p) => json!({"count": p.count, "mrr": p.mrr, "hits1": p.hits1}),
        None => Value::Null,
    }
}

/// Report JSON; per-query ranks and top candidates only with `per_query`.
pub fn report_json(report: &EvalReport, vocab: &Vocabularies, per_query: bool) -> Value {
    let m = &report.metrics;
    let hits: Map<String, Value> = m.hits.iter().map(|(k, v)| (format!("hits{k}"), json!(v))).collect();
    let per_relation: Map<String, Value> = report
        .split
        .per_relation
        .iter()
        .map(|(r, row)| {
            (
                vocab.relation_name(*r),
                json!({
                    "queries": row.queries,
                    "hits": row.hits,
                    "misses": row.misses,
                    "success_rate": row.success_rate(),
                    "mrr": row.mrr,
                }),
            )
        })
        .collect();
    let freq: Map<String, Value> =
        report.split.relation_frequency.iter().map(|(r, n)| (vocab.relation_name(*r), json!(n))).collect();
    let mut out = json!({
        "count": m.count,
        "hits": hits,
        "mrr": m.mrr,
        "splits": {
            "to_many": partition_json(&report.split.to_many),
            "to_one": partition_json(&report.split.to_one),
        },
        "per_relation": per_relation,
        "relation_frequency": freq,
        "unique_paths": {
            "answer_found": report.unique_paths_found,
            "answer_missed": report.unique_paths_missed,
        },
    });
    if per_query {
        let rows: Vec<Value> = report
            .results
            .iter()
            .map(|r| {
                let q = &r.query;
                json!({
                    "source": vocab.entity_name(q.source),
                    "relation": vocab.relation_name(q.relation),
                    "target": vocab.entity_name(q.target),
                    "rank": r.rank.0,
                    "unique_paths": r.unique_paths,
                    "top": r.candidates.iter().take(10).map(|(e, s)| json!([vocab.entity_name(*e), s])).collect::<Vec<_>>(),
                })
            })
            .collect();
        out["queries"] = Value::Array(rows);
    }
    out
}

pub fn write_json(value: &Value, path: &Path) -> Result<(), OutputError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| OutputError::Io { path: dir.to_path_buf(), source })?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| OutputError::Io { path: path.to_path_buf(), source })
}
