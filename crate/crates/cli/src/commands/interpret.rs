use livelihood_core::dataset::Part;
use livelihood_core::eval::{
    export_predictions_geojson, export_tree_dot, permutation_importance, EvalReport, PredictionRow,
};
use livelihood_core::features::cluster_feature_matrix;
use livelihood_core::models::{fit_cart, Task, TreeNode, TreeParams};
use livelihood_core::{Error, Result};

use super::{
    checkpoint_path, indicators, labeled_rows, load_dataset, metric_key, scopes, targets, LoadedModel, Run,
    INTERPRET_DIR,
};
use crate::config::RunConfig;
use crate::manifest::{sha256_file, write_atomic, write_json, RunManifest};

/// Importance ranking for the configured model, shallow trees per indicator
/// and per-country prediction maps.
pub fn cmd_interpret(cfg: &RunConfig) -> Result<RunManifest> {
    let d = load_dataset(&cfg.out_dir)?;
    let mut run = Run::new("interpret", cfg);
    run.manifest
        .inputs
        .insert("dataset".into(), sha256_file(&super::dataset_path(&cfg.out_dir))?);
    let dir = run.dir(INTERPRET_DIR)?;
    let name = cfg.importance_model.as_str();
    let names = d.taxonomy.feature_names();

    for (scope, sd) in scopes(cfg, &d)? {
        for indicator in indicators(cfg, &sd) {
            let train = labeled_rows(&sd, Part::Train, &indicator, None);
            let val = labeled_rows(&sd, Part::Val, &indicator, None);
            if train.len() < 2 {
                continue;
            }
            for task in [Task::Classification, Task::Regression] {
                let x = cluster_feature_matrix(&sd, &train)?;
                let params = TreeParams {
                    max_depth: Some(cfg.tree_depth),
                    ..TreeParams::default()
                };
                let tree = fit_cart(&x, &targets(&sd, &train, &indicator, task), task, params)?;
                let path = dir.join(format!(
                    "{}.dot",
                    metric_key(&["tree", &scope, &indicator, task.name()])
                ));
                write_atomic(&path, export_tree_dot(&tree, &names)?.as_bytes())?;
                run.output(&path);
                if let TreeNode::Split { feature, .. } = &tree.root {
                    run.manifest.metrics.insert(
                        metric_key(&["tree_root", &scope, &indicator, task.name()]),
                        *feature as f64,
                    );
                }
            }
            for &task in &cfg.tasks {
                let model = LoadedModel::load(&checkpoint_path(&cfg.out_dir, &scope, name, &indicator, task))?;
                match &model {
                    LoadedModel::Gcn { .. } => run.manifest.note(format!(
                        "{scope}/{indicator}/{task}: permutation importance skipped for gcn; its inputs are \
                         per-image node features with no cluster-level columns to permute"
                    )),
                    LoadedModel::Shallow(m) if val.len() >= 2 => {
                        let x = cluster_feature_matrix(&sd, &val)?;
                        let y = targets(&sd, &val, &indicator, task);
                        let ranking = permutation_importance(m, &x, &y, &names, cfg.importance_repeats, cfg.seed)?;
                        let key = metric_key(&["importance", &scope, name, &indicator, task.name()]);
                        let path = dir.join(format!("{key}.csv"));
                        let mut w = csv::Writer::from_writer(Vec::new());
                        w.write_record(["rank", "feature", "index", "mean_drop", "std_drop"])?;
                        for f in ranking.ranked() {
                            w.write_record([
                                f.rank.to_string(),
                                f.name.clone(),
                                f.index.to_string(),
                                f.mean_drop.to_string(),
                                f.std_drop.to_string(),
                            ])?;
                        }
                        let bytes = w.into_inner().map_err(|e| Error::io(&path, e.into_error()))?;
                        write_atomic(&path, &bytes)?;
                        run.output(&path);
                        run.manifest
                            .metrics
                            .insert(format!("{key}__baseline"), ranking.baseline);
                    }
                    LoadedModel::Shallow(_) => run.manifest.note(format!(
                        "{scope}/{indicator}: too few validation clusters for importance"
                    )),
                }
                for region in sd.countries() {
                    let rows = labeled_rows(&d, Part::Val, &indicator, Some(&region));
                    if rows.is_empty() {
                        continue;
                    }
                    let preds = model.predict(&d, &rows)?;
                    let truth = targets(&d, &rows, &indicator, task);
                    let predictions = rows
                        .iter()
                        .zip(truth.iter().zip(&preds))
                        .map(|(&r, (&t, &p))| PredictionRow {
                            cluster_id: d.clusters[r].cluster_id.clone(),
                            truth: t,
                            prediction: p,
                        })
                        .collect();
                    let report = EvalReport::build(&scope, &region, &indicator, task, name, predictions, 0.0)?;
                    let path = dir.join(format!(
                        "{}.geojson",
                        metric_key(&["map", &scope, &region, name, &indicator, task.name()])
                    ));
                    write_json(&path, &export_predictions_geojson(&report, &d)?)?;
                    run.output(&path);
                }
            }
        }
    }
    run.finish(INTERPRET_DIR)
}
