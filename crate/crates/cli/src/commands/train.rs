use std::time::Instant;

use livelihood_core::dataset::Part;
use livelihood_core::eval::task_metric;
use livelihood_core::features::check_node_mode;
use livelihood_core::gcn::train_gcn;
use livelihood_core::graph::{build_cluster_graph, fit_node_standardizer};
use livelihood_core::nn::save_checkpoint;
use livelihood_core::Result;

use super::{
    checkpoint_path, fit_shallow, graph_config, indicators, labeled_rows, load_dataset, metric_key, scopes, targets,
    LoadedModel, Run, CHECKPOINT_DIR,
};
use crate::config::RunConfig;
use crate::manifest::{sha256_file, RunManifest};

/// Train every (scope, model, indicator, task) combination.
pub fn cmd_train(cfg: &RunConfig) -> Result<RunManifest> {
    let d = load_dataset(&cfg.out_dir)?;
    let uses_gcn = cfg.models.iter().any(|m| m == "gcn");
    if uses_gcn {
        check_node_mode(&d, cfg.gcn_node_features)?;
    }
    let graph = if uses_gcn { Some(graph_config(cfg, &d)?) } else { None };
    let mut run = Run::new("train", cfg);
    run.manifest
        .inputs
        .insert("dataset".into(), sha256_file(&super::dataset_path(&cfg.out_dir))?);
    run.dir(CHECKPOINT_DIR)?;
    let mode = cfg.gcn_node_features;

    for (scope, sd) in scopes(cfg, &d)? {
        for indicator in indicators(cfg, &sd) {
            let train = labeled_rows(&sd, Part::Train, &indicator, None);
            let val = labeled_rows(&sd, Part::Val, &indicator, None);
            if train.len() < 2 {
                run.manifest.note(format!(
                    "{scope}/{indicator}: {} training clusters, nothing trained",
                    train.len()
                ));
                continue;
            }
            for &task in &cfg.tasks {
                for name in &cfg.models {
                    let key = metric_key(&[&scope, name, &indicator, task.name()]);
                    let started = Instant::now();
                    let ckpt = if name == "gcn" {
                        let g = graph.as_ref().expect("graph config built when gcn is requested");
                        let std = fit_node_standardizer(&sd, &train, g, mode)?;
                        let graphs = |rows: &[usize]| -> Result<Vec<_>> {
                            rows.iter()
                                .map(|&r| build_cluster_graph(&sd, &sd.clusters[r], g, mode, Some(&std)))
                                .collect()
                        };
                        let (gt, gv) = (graphs(&train)?, graphs(&val)?);
                        let (yt, yv) = (
                            targets(&sd, &train, &indicator, task),
                            targets(&sd, &val, &indicator, task),
                        );
                        let early = (!val.is_empty()).then_some((gv.as_slice(), yv.as_slice()));
                        let (mut model, _) = train_gcn(&gt, &yt, early, task, &indicator, &cfg.gcn())?;
                        model.standardizer = Some(std);
                        let mut ckpt = model.to_checkpoint()?;
                        ckpt.extra["graph"] = serde_json::to_value(g)?;
                        ckpt.extra["node_features"] = serde_json::to_value(mode)?;
                        ckpt
                    } else {
                        fit_shallow(cfg, name, &sd, &train, &val, &indicator, task)?.to_checkpoint()?
                    };
                    run.manifest
                        .timings_secs
                        .insert(key.clone(), started.elapsed().as_secs_f64());
                    let path = checkpoint_path(&cfg.out_dir, &scope, name, &indicator, task);
                    save_checkpoint(&path, &ckpt)?;
                    run.output(&path);
                    if val.len() >= 2 {
                        let model = LoadedModel::load(&path)?;
                        let m = task_metric(task, &model.predict(&sd, &val)?, &targets(&sd, &val, &indicator, task))?;
                        log::info!("{key}: validation {m:.4}");
                        run.manifest.metrics.insert(key, m);
                    }
                }
            }
        }
    }
    run.finish(CHECKPOINT_DIR)
}
