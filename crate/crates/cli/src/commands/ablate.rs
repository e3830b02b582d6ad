use livelihood_core::eval::ablate_images;
use livelihood_core::{Error, Result};

use super::{indicators, load_dataset, metric_key, Run, REPORT_DIR};
use crate::config::RunConfig;
use crate::manifest::{sha256_file, write_atomic, RunManifest};

/// MLP validation accuracy per images-per-cluster sample size.
pub fn cmd_ablate_images(cfg: &RunConfig) -> Result<RunManifest> {
    let ablation = cfg.ablation();
    ablation.validate()?;
    let d = load_dataset(&cfg.out_dir)?;
    let mut run = Run::new("ablate-images", cfg);
    run.manifest
        .inputs
        .insert("dataset".into(), sha256_file(&super::dataset_path(&cfg.out_dir))?);
    let dir = run.dir(REPORT_DIR)?;
    let path = dir.join("ablation_images.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    for indicator in indicators(cfg, &d) {
        for row in ablate_images(&d, &indicator, &ablation)? {
            let key = metric_key(&[&row.country, &row.indicator, &row.n_images.to_string()]);
            run.manifest.metrics.insert(key, row.accuracy_mean);
            w.serialize(&row)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::io(&path, e.into_error()))?;
    write_atomic(&path, &bytes)?;
    run.output(&path);
    run.finish(REPORT_DIR)
}
