//! Assign images to household clusters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Cluster, ImageRecord};
use crate::geo::{haversine_km, GridIndex, KM_PER_DEGREE};
use crate::{Error, Result};

/// How images inside several overlapping clusters are assigned.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Only the nearest center within the radius (ties to the lower cluster id).
    #[default]
    Nearest,
    /// Every cluster whose disc contains the image.
    AllContaining,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub images: usize,
    pub assigned: usize,
    pub unassigned: usize,
    pub clusters_kept: usize,
    pub clusters_dropped: usize,
}

/// Fill `image_ids` of each cluster and drop clusters left without images.
///
/// Returned clusters are sorted by id and their image ids are sorted.
pub fn match_images_to_clusters(
    images: &[ImageRecord],
    mut clusters: Vec<Cluster>,
    radius_km: f64,
    mode: MatchMode,
) -> Result<(Vec<Cluster>, MatchReport)> {
    if !(radius_km.is_finite() && radius_km >= 0.0) {
        return Err(Error::InvalidInput(format!("invalid match radius {radius_km}")));
    }
    clusters.sort_by(|a, b| a.cluster_id.cmp(&b.cluster_id));
    for pair in clusters.windows(2) {
        if pair[0].cluster_id == pair[1].cluster_id {
            return Err(Error::InvalidInput(format!(
                "duplicate cluster id {}",
                pair[0].cluster_id
            )));
        }
    }
    let points: Vec<_> = images.iter().enumerate().map(|(i, r)| (i, r.location)).collect();
    let cell = (radius_km / KM_PER_DEGREE).max(1e-3);
    let index = GridIndex::build(&points, cell)?;

    // image slot -> (distance, cluster position); clusters visited in id order so
    // a strict improvement test keeps the lower id on ties.
    let mut nearest: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); clusters.len()];
    for (ci, cluster) in clusters.iter().enumerate() {
        for slot in index.query_radius(&cluster.center, radius_km)? {
            match mode {
                MatchMode::AllContaining => members[ci].push(slot),
                MatchMode::Nearest => {
                    let d = haversine_km(&cluster.center, &images[slot].location);
                    let better = nearest.get(&slot).is_none_or(|&(best, _)| d < best);
                    if better {
                        nearest.insert(slot, (d, ci));
                    }
                }
            }
        }
    }
    if mode == MatchMode::Nearest {
        for (slot, (_, ci)) in &nearest {
            members[*ci].push(*slot);
        }
    }

    let assigned_slots: std::collections::BTreeSet<usize> = members.iter().flatten().copied().collect();
    let n_clusters = clusters.len();
    let kept: Vec<Cluster> = clusters
        .into_iter()
        .zip(members)
        .filter(|(_, m)| !m.is_empty())
        .map(|(mut c, m)| {
            let mut ids: Vec<String> = m.iter().map(|&s| images[s].image_id.clone()).collect();
            ids.sort();
            c.image_ids = ids;
            c
        })
        .collect();
    let report = MatchReport {
        images: images.len(),
        assigned: assigned_slots.len(),
        unassigned: images.len() - assigned_slots.len(),
        clusters_kept: kept.len(),
        clusters_dropped: n_clusters - kept.len(),
    };
    if report.clusters_dropped > 0 {
        log::info!("dropped {} clusters without images", report.clusters_dropped);
    }
    Ok((kept, report))
}
