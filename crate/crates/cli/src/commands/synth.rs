use livelihood_core::dataset::{
    generate_synthetic, write_clusters_csv, write_images_jsonl, write_taxonomy, SynthConfig,
};
use livelihood_core::Result;

use super::{Run, SYNTH_DIR};
use crate::config::RunConfig;
use crate::manifest::{write_json, RunManifest};

/// Write a synthetic dataset in the ingestion formats plus its oracle.
pub fn cmd_synth(cfg: &RunConfig) -> Result<RunManifest> {
    let mut run = Run::new("synth", cfg);
    let synth = SynthConfig {
        seed: cfg.seed,
        ..cfg.synth.clone()
    };
    let (d, oracle) = generate_synthetic(&synth)?;
    let dir = run.dir(SYNTH_DIR)?;
    let images = dir.join("images.jsonl");
    write_images_jsonl(&images, &d.images)?;
    let clusters = dir.join("clusters.csv");
    write_clusters_csv(&clusters, &d.clusters)?;
    let taxonomy = dir.join("taxonomy.txt");
    write_taxonomy(&taxonomy, &d.taxonomy)?;
    let oracle_path = dir.join("oracle.json");
    write_json(&oracle_path, &oracle)?;
    for p in [&images, &clusters, &taxonomy, &oracle_path] {
        run.output(p);
    }
    run.manifest
        .metrics
        .insert("bayes_accuracy".into(), oracle.bayes_accuracy);
    run.manifest
        .metrics
        .insert("realized_oracle_accuracy".into(), oracle.realized_oracle_accuracy);
    run.manifest.metrics.insert("sigma".into(), oracle.sigma);
    run.finish(SYNTH_DIR)
}
