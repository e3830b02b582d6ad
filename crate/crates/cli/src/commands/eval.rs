use std::collections::BTreeSet;
use std::time::Instant;

use serde::Serialize;

use livelihood_core::dataset::{LabeledDataset, Part};
use livelihood_core::eval::{neighbor_baseline, random_baseline, EvalReport, PredictionRow};
use livelihood_core::models::Task;
use livelihood_core::Result;

use super::{
    checkpoint_path, indicators, labeled_rows, load_dataset, metric_key, scopes, targets, LoadedModel, Run, REPORT_DIR,
};
use crate::config::RunConfig;
use crate::manifest::{sha256_file, write_atomic, write_json, RunManifest};

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub eval_region: String,
    pub feature: String,
    pub method: String,
    pub scope: String,
    pub indicator: String,
    pub task: Task,
    pub accuracy: Option<f64>,
    pub r2: Option<f64>,
    pub n: usize,
}

fn prediction_rows(d: &LabeledDataset, rows: &[usize], truth: &[f64], preds: &[f64]) -> Vec<PredictionRow> {
    rows.iter()
        .zip(truth.iter().zip(preds))
        .map(|(&r, (&t, &p))| PredictionRow {
            cluster_id: d.clusters[r].cluster_id.clone(),
            truth: t,
            prediction: p,
        })
        .collect()
}

fn feature_label(cfg: &RunConfig, model: &str) -> String {
    match model {
        "gcn" => format!(
            "image graph ({})",
            serde_json::to_value(cfg.gcn_node_features)
                .unwrap_or_default()
                .as_str()
                .unwrap_or("")
        ),
        "random" | "neighbor" => "-".into(),
        _ => "object counts".into(),
    }
}

/// Score every trained model on the validation clusters of each country it
/// covers, next to the random and neighbor baselines.
pub fn cmd_eval(cfg: &RunConfig) -> Result<RunManifest> {
    let d = load_dataset(&cfg.out_dir)?;
    let mut run = Run::new("eval", cfg);
    run.manifest
        .inputs
        .insert("dataset".into(), sha256_file(&super::dataset_path(&cfg.out_dir))?);
    let dir = run.dir(REPORT_DIR)?;
    let mut table = Vec::new();
    let mut pairs = BTreeSet::new();

    let emit = |run: &mut Run, report: EvalReport, table: &mut Vec<TableRow>| -> Result<()> {
        let key = metric_key(&[
            &report.scope,
            &report.region,
            &report.model,
            &report.indicator,
            report.task.name(),
        ]);
        let path = dir.join(format!("{key}.json"));
        write_json(&path, &report)?;
        run.output(&path);
        if let Some(m) = report.metric() {
            run.manifest.metrics.insert(key, m);
        }
        table.push(TableRow {
            eval_region: report.region.clone(),
            feature: feature_label(cfg, &report.model),
            method: report.model.clone(),
            scope: report.scope.clone(),
            indicator: report.indicator.clone(),
            task: report.task,
            accuracy: report.accuracy,
            r2: report.r2.map(|r| r.value),
            n: report.n,
        });
        Ok(())
    };

    for (scope, sd) in scopes(cfg, &d)? {
        for indicator in indicators(cfg, &sd) {
            if labeled_rows(&sd, Part::Train, &indicator, None).len() < 2 {
                continue;
            }
            for &task in &cfg.tasks {
                for name in &cfg.models {
                    let model = LoadedModel::load(&checkpoint_path(&cfg.out_dir, &scope, name, &indicator, task))?;
                    for region in sd.countries() {
                        let rows = labeled_rows(&d, Part::Val, &indicator, Some(&region));
                        if rows.is_empty() {
                            continue;
                        }
                        pairs.insert((region.clone(), indicator.clone(), task));
                        let started = Instant::now();
                        let preds = model.predict(&d, &rows)?;
                        let truth = targets(&d, &rows, &indicator, task);
                        let report = EvalReport::build(
                            &scope,
                            &region,
                            &indicator,
                            task,
                            name,
                            prediction_rows(&d, &rows, &truth, &preds),
                            started.elapsed().as_secs_f64(),
                        )?;
                        emit(&mut run, report, &mut table)?;
                    }
                }
            }
        }
    }

    for (region, indicator, task) in pairs {
        let rows = labeled_rows(&d, Part::Val, &indicator, Some(&region));
        // neighbors are drawn from training labels only
        let pool = labeled_rows(&d, Part::Train, &indicator, Some(&region));
        let truth = targets(&d, &rows, &indicator, task);
        let started = Instant::now();
        let neighbor = neighbor_baseline(&d, &rows, &pool, &indicator, task, cfg.neighbor_k)?;
        let report = EvalReport::build(
            "baseline",
            &region,
            &indicator,
            task,
            "neighbor",
            prediction_rows(&d, &rows, &truth, &neighbor),
            started.elapsed().as_secs_f64(),
        )?;
        emit(&mut run, report, &mut table)?;
        let random = random_baseline(rows.len(), task, cfg.seed);
        let report = EvalReport::build(
            "baseline",
            &region,
            &indicator,
            task,
            "random",
            prediction_rows(&d, &rows, &truth, &random),
            0.0,
        )?;
        emit(&mut run, report, &mut table)?;
    }

    table.sort_by(|a, b| {
        (&a.eval_region, &a.indicator, a.task, &a.scope, &a.method).cmp(&(
            &b.eval_region,
            &b.indicator,
            b.task,
            &b.scope,
            &b.method,
        ))
    });
    let csv_path = dir.join("table.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &table {
        w.serialize(row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| livelihood_core::Error::io(&csv_path, e.into_error()))?;
    write_atomic(&csv_path, &bytes)?;
    run.output(&csv_path);
    let json_path = dir.join("table.json");
    write_json(&json_path, &table)?;
    run.output(&json_path);
    run.finish(REPORT_DIR)
}
