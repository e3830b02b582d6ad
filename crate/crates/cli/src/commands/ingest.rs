use std::collections::BTreeMap;

use serde::Serialize;

use livelihood_core::dataset::{
    build_labels, load_clusters, load_images, load_taxonomy, match_images_to_clusters, split_train_val, IndicatorStats,
    MatchReport, Part,
};
use livelihood_core::features::write_feature_csv;
use livelihood_core::{Error, Result};

use super::{dataset_path, Run, DATASET_DIR};
use crate::config::RunConfig;
use crate::manifest::{sha256_file, write_atomic, write_json, RunManifest};

#[derive(Serialize)]
struct IngestSummary {
    matching: MatchReport,
    load_warnings: Vec<String>,
    countries: Vec<String>,
    train_clusters: usize,
    val_clusters: usize,
    /// Per (country, indicator) label balance.
    indicators: Vec<IndicatorStats>,
}

/// Load, match, label and split the configured inputs.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<RunManifest> {
    let (images_path, clusters_path, taxonomy_path) = cfg.inputs()?;
    let mut run = Run::new("ingest", cfg);
    for (k, p) in [
        ("images", &images_path),
        ("clusters", &clusters_path),
        ("taxonomy", &taxonomy_path),
    ] {
        run.manifest.inputs.insert(k.into(), sha256_file(p)?);
    }
    let taxonomy = load_taxonomy(&taxonomy_path)?;
    let (images, load) = load_images(&images_path, &taxonomy)?;
    let clusters = load_clusters(&clusters_path)?;
    let (clusters, matching) = match_images_to_clusters(&images, clusters, cfg.match_radius_km, cfg.match_mode)?;
    if matching.clusters_kept == 0 {
        return Err(Error::InvalidInput(format!(
            "0 clusters retained: none of {} images lies within {} km of a cluster center",
            matching.images, cfg.match_radius_km
        )));
    }
    let mut d = build_labels(taxonomy, clusters, images)?;
    let split = split_train_val(&d, cfg.seed, cfg.train_fraction)?;
    let summary = IngestSummary {
        matching: matching.clone(),
        load_warnings: load.warnings,
        countries: d.countries(),
        train_clusters: split.count(Part::Train),
        val_clusters: split.count(Part::Val),
        indicators: d.stats.clone(),
    };
    d.split = Some(split);

    let dir = run.dir(DATASET_DIR)?;
    let artifact = dataset_path(cfg.out_dir.as_path());
    write_atomic(&artifact, serde_json::to_string(&d)?.as_bytes())?;
    run.output(&artifact);
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    run.output(&summary_path);
    let features_path = dir.join("features.csv");
    write_feature_csv(&features_path, &d)?;
    run.output(&features_path);

    let m: BTreeMap<String, f64> = [
        ("clusters_kept", matching.clusters_kept),
        ("clusters_dropped", matching.clusters_dropped),
        ("images_assigned", matching.assigned),
        ("images_unassigned", matching.unassigned),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v as f64))
    .collect();
    run.manifest.metrics = m;
    run.manifest.inputs.insert("dataset".into(), sha256_file(&artifact)?);
    run.finish(DATASET_DIR)
}
