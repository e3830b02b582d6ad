//! Synthetic clusters with a planted, recoverable signal.
//!
//! Cluster centers are placed in a lat/lon box with a minimum separation so
//! discs never overlap. Every class has a per-cluster Poisson intensity whose
//! log is a mix of a smooth spatial field (random Fourier features with a
//! configurable correlation length) and independent noise. The indicator is
//!
//! ```text
//! latent_i = sum_{c in planted} w_c * total_count_{i,c} + N(0, sigma^2)
//! ```
//!
//! and is labeled like real data (rescale + median split). The generator keeps
//! the noiseless signal so the accuracy of the best possible threshold rule is
//! known, by Monte Carlo over the noise.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{build_labels, Cluster, ImageRecord, LabeledDataset, Taxonomy};
use crate::geo::{haversine_km, GeoPoint, KM_PER_DEGREE};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Fixed noise standard deviation on the latent scale.
    Sigma(f64),
    /// Pick sigma so the oracle threshold rule reaches this accuracy.
    TargetBayes(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_clusters: usize,
    /// Inclusive range of images per cluster.
    pub images_per_cluster: (usize, usize),
    pub n_classes: usize,
    pub n_planted: usize,
    /// Explicit planted classes; sampled from the seed when absent.
    pub planted: Option<Vec<usize>>,
    /// Weights of planted classes; when absent each class gets the inverse
    /// standard deviation of its cluster totals so all contribute equally.
    pub weights: Option<Vec<f64>>,
    pub noise: NoiseSpec,
    pub spatial_corr_km: f64,
    /// Share of the log-intensity variance explained by the smooth field.
    pub spatial_share: f64,
    pub intensity_log_sd: f64,
    /// (lat_min, lat_max, lon_min, lon_max)
    pub bbox: (f64, f64, f64, f64),
    pub cluster_radius_km: f64,
    pub indicator: String,
    pub country: String,
    pub id_prefix: String,
    pub embedding_dim: Option<usize>,
    pub mc_reps: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_clusters: 1000,
            images_per_cluster: (10, 40),
            n_classes: 65,
            n_planted: 5,
            planted: None,
            weights: None,
            noise: NoiseSpec::TargetBayes(0.97),
            spatial_corr_km: 50.0,
            spatial_share: 0.3,
            intensity_log_sd: 0.8,
            bbox: (8.0, 24.0, 72.0, 88.0),
            cluster_radius_km: 5.0,
            indicator: "wealth".into(),
            country: "synthetic".into(),
            id_prefix: "syn".into(),
            embedding_dim: None,
            mc_reps: 200,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let (lo, hi) = self.images_per_cluster;
        if self.n_clusters < 2 {
            return bad("synthetic data needs at least 2 clusters".into());
        }
        if lo == 0 || lo > hi {
            return bad(format!("invalid images_per_cluster range ({lo}, {hi})"));
        }
        if self.n_classes == 0 {
            return bad("n_classes must be positive".into());
        }
        let n_planted = self.planted.as_ref().map_or(self.n_planted, Vec::len);
        if n_planted == 0 || n_planted > self.n_classes {
            return bad(format!(
                "planted set size {n_planted} must be in 1..={}",
                self.n_classes
            ));
        }
        if let Some(p) = &self.planted {
            let mut s = p.clone();
            s.sort_unstable();
            s.dedup();
            if s.len() != p.len() || s.iter().any(|&c| c >= self.n_classes) {
                return bad(format!(
                    "planted classes {p:?} must be distinct and < {}",
                    self.n_classes
                ));
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != n_planted || w.iter().any(|v| !v.is_finite()) {
                return bad(format!("weights must be {n_planted} finite numbers"));
            }
        }
        match self.noise {
            NoiseSpec::Sigma(s) if !(s.is_finite() && s >= 0.0) => return bad(format!("sigma must be >= 0, got {s}")),
            NoiseSpec::TargetBayes(t) if !(t > 0.5 && t <= 1.0) => {
                return bad(format!("target Bayes accuracy must be in (0.5, 1], got {t}"))
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.spatial_share) {
            return bad("spatial_share must be in [0, 1]".into());
        }
        if !(self.spatial_corr_km > 0.0 && self.intensity_log_sd >= 0.0 && self.cluster_radius_km > 0.0) {
            return bad("spatial_corr_km and cluster_radius_km must be positive, intensity_log_sd >= 0".into());
        }
        let (a, b, c, d) = self.bbox;
        if !(a < b && c < d) || GeoPoint::new(a, c).is_err() || GeoPoint::new(b, d).is_err() {
            return bad(format!("invalid bounding box {:?}", self.bbox));
        }
        if self.mc_reps == 0 {
            return bad("mc_reps must be positive".into());
        }
        Ok(())
    }
}

/// Ground truth retained by the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracle {
    pub indicator: String,
    pub planted: Vec<usize>,
    pub planted_names: Vec<String>,
    pub weights: Vec<f64>,
    pub sigma: f64,
    /// Noiseless signal per cluster id.
    pub signal: BTreeMap<String, f64>,
    /// Signal plus noise (the raw indicator) per cluster id.
    pub latent: BTreeMap<String, f64>,
    /// Monte-Carlo expected accuracy of the rule `signal >= median(signal)`.
    pub bayes_accuracy: f64,
    /// Accuracy of that rule against the labels actually drawn.
    pub realized_oracle_accuracy: f64,
}

/// Draw a labeled synthetic dataset and its oracle.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(LabeledDataset, SyntheticOracle)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let taxonomy = Taxonomy::numbered(cfg.n_classes)?;
    let n = cfg.n_clusters;
    let c_dim = cfg.n_classes;

    let centers = place_centers(cfg, &mut rng)?;
    let (lat0, lon0) = (0.5 * (cfg.bbox.0 + cfg.bbox.1), 0.5 * (cfg.bbox.2 + cfg.bbox.3));
    let to_km = |p: &GeoPoint| {
        (
            (p.lon() - lon0) * lat0.to_radians().cos() * KM_PER_DEGREE,
            (p.lat() - lat0) * KM_PER_DEGREE,
        )
    };

    let log_base: Vec<f64> = (0..c_dim).map(|_| rng.random_range(0.3f64.ln()..3.0f64.ln())).collect();
    let fields: Vec<FourierField> = (0..c_dim)
        .map(|_| FourierField::new(cfg.spatial_corr_km, &mut rng))
        .collect();
    let rho = cfg.spatial_share;
    let s = cfg.intensity_log_sd;

    let projection: Option<Vec<Vec<f64>>> = cfg.embedding_dim.map(|d| {
        (0..d)
            .map(|_| (0..c_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    });

    let mut clusters = Vec::with_capacity(n);
    let mut images = Vec::new();
    let mut totals = vec![vec![0.0f64; c_dim]; n];
    for (i, center) in centers.iter().enumerate() {
        let xy = to_km(center);
        let intensity: Vec<f64> = (0..c_dim)
            .map(|c| {
                let smooth = fields[c].eval(xy);
                let own: f64 = rng.sample(StandardNormal);
                (log_base[c] + s * (rho.sqrt() * smooth + (1.0 - rho).sqrt() * own) - 0.5 * s * s).exp()
            })
            .collect();
        let n_images = rng.random_range(cfg.images_per_cluster.0..=cfg.images_per_cluster.1);
        let cluster_id = format!("{}{i:05}", cfg.id_prefix);
        let mut image_ids = Vec::with_capacity(n_images);
        for j in 0..n_images {
            let location = point_in_disc(center, 0.95 * cfg.cluster_radius_km, &mut rng)?;
            let counts: Vec<u32> = intensity
                .iter()
                .map(|&lambda| Poisson::new(lambda).map(|p| p.sample(&mut rng) as u32).unwrap_or(0))
                .collect();
            for (t, &k) in totals[i].iter_mut().zip(&counts) {
                *t += f64::from(k);
            }
            let embedding = projection.as_ref().map(|proj| {
                proj.iter()
                    .map(|row| {
                        let z: f64 = row.iter().zip(&counts).map(|(w, &k)| w * f64::from(k).ln_1p()).sum();
                        (z / (c_dim as f64).sqrt()).tanh() + 0.05 * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect()
            });
            let image_id = format!("{cluster_id}_{j:04}");
            image_ids.push(image_id.clone());
            images.push(ImageRecord {
                image_id,
                location,
                counts,
                embedding,
            });
        }
        clusters.push(Cluster {
            cluster_id,
            center: *center,
            country: cfg.country.clone(),
            image_ids,
            indicators: BTreeMap::new(),
            targets: BTreeMap::new(),
        });
    }

    let planted: Vec<usize> = match &cfg.planted {
        Some(p) => {
            let mut p = p.clone();
            p.sort_unstable();
            p
        }
        None => {
            let mut p = sample(&mut rng, c_dim, cfg.n_planted).into_vec();
            p.sort_unstable();
            p
        }
    };
    let weights: Vec<f64> = match &cfg.weights {
        Some(w) => w.clone(),
        None => planted
            .iter()
            .map(|&c| {
                let col: Vec<f64> = totals.iter().map(|t| t[c]).collect();
                let sd = std_dev(&col);
                if sd > 0.0 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect(),
    };
    let signal: Vec<f64> = totals
        .iter()
        .map(|t| planted.iter().zip(&weights).map(|(&c, w)| w * t[c]).sum())
        .collect();

    let mut mc_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6d63_6f72_6163_6c65);
    let sigma = match cfg.noise {
        NoiseSpec::Sigma(sigma) => sigma,
        NoiseSpec::TargetBayes(target) => calibrate_sigma(&signal, target, cfg.mc_reps, &mut mc_rng),
    };
    let bayes_accuracy = monte_carlo_accuracy(&signal, sigma, &draws(n, cfg.mc_reps, &mut mc_rng));

    let noise: Vec<f64> = if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
        (0..n).map(|_| normal.sample(&mut rng)).collect()
    } else {
        vec![0.0; n]
    };
    let latent: Vec<f64> = signal.iter().zip(&noise).map(|(s, e)| s + e).collect();
    for (c, &v) in clusters.iter_mut().zip(&latent) {
        c.indicators.insert(cfg.indicator.clone(), v);
    }
    let realized_oracle_accuracy = rule_accuracy(&signal, &latent);

    let oracle = SyntheticOracle {
        indicator: cfg.indicator.clone(),
        planted_names: planted.iter().map(|&c| taxonomy.names()[c].clone()).collect(),
        planted,
        weights,
        sigma,
        signal: clusters
            .iter()
            .map(|c| c.cluster_id.clone())
            .zip(signal.iter().copied())
            .collect(),
        latent: clusters
            .iter()
            .map(|c| c.cluster_id.clone())
            .zip(latent.iter().copied())
            .collect(),
        bayes_accuracy,
        realized_oracle_accuracy,
    };
    let dataset = build_labels(taxonomy, clusters, images)?;
    Ok((dataset, oracle))
}

fn place_centers(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<GeoPoint>> {
    let min_sep = 2.0 * cfg.cluster_radius_km + 0.5;
    let (la, lb, oa, ob) = cfg.bbox;
    let max_attempts = 200 * cfg.n_clusters;
    let mut centers: Vec<GeoPoint> = Vec::with_capacity(cfg.n_clusters);
    let mut attempts = 0;
    while centers.len() < cfg.n_clusters {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Config(format!(
                "could not place {} non-overlapping clusters in {:?}",
                cfg.n_clusters, cfg.bbox
            )));
        }
        let p = GeoPoint::new(rng.random_range(la..=lb), rng.random_range(oa..=ob))?;
        if centers.iter().all(|q| haversine_km(&p, q) >= min_sep) {
            centers.push(p);
        }
    }
    Ok(centers)
}

fn point_in_disc(center: &GeoPoint, radius_km: f64, rng: &mut ChaCha8Rng) -> Result<GeoPoint> {
    loop {
        let r = radius_km * rng.random::<f64>().sqrt();
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let dlat = r * theta.sin() / KM_PER_DEGREE;
        let dlon = r * theta.cos() / (KM_PER_DEGREE * center.lat().to_radians().cos().max(1e-6));
        let lat = (center.lat() + dlat).clamp(-90.0, 90.0);
        let mut lon = center.lon() + dlon;
        if lon > 180.0 {
            lon -= 360.0;
        } else if lon < -180.0 {
            lon += 360.0;
        }
        let p = GeoPoint::new(lat, lon)?;
        if haversine_km(center, &p) <= radius_km {
            return Ok(p);
        }
    }
}

/// Smooth zero-mean, unit-variance random field with a Gaussian covariance of
/// length `corr_km`.
struct FourierField {
    waves: Vec<(f64, f64, f64)>,
}

impl FourierField {
    const N_WAVES: usize = 32;

    fn new(corr_km: f64, rng: &mut ChaCha8Rng) -> Self {
        let waves = (0..Self::N_WAVES)
            .map(|_| {
                let wx: f64 = rng.sample::<f64, _>(StandardNormal) / corr_km;
                let wy: f64 = rng.sample::<f64, _>(StandardNormal) / corr_km;
                (wx, wy, rng.random_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        FourierField { waves }
    }

    fn eval(&self, (x, y): (f64, f64)) -> f64 {
        let scale = (2.0 / Self::N_WAVES as f64).sqrt();
        scale
            * self
                .waves
                .iter()
                .map(|(wx, wy, b)| (wx * x + wy * y + b).cos())
                .sum::<f64>()
    }
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn median_of(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Accuracy of `signal >= median(signal)` against `latent >= median(latent)`.
pub(crate) fn rule_accuracy(signal: &[f64], latent: &[f64]) -> f64 {
    let ms = median_of(signal);
    let ml = median_of(latent);
    let hits = signal
        .iter()
        .zip(latent)
        .filter(|(s, l)| (**s >= ms) == (**l >= ml))
        .count();
    hits as f64 / signal.len() as f64
}

fn draws(n: usize, reps: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..reps)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

fn monte_carlo_accuracy(signal: &[f64], sigma: f64, draws: &[Vec<f64>]) -> f64 {
    if sigma == 0.0 {
        return rule_accuracy(signal, signal);
    }
    let total: f64 = draws
        .iter()
        .map(|z| {
            let latent: Vec<f64> = signal.iter().zip(z).map(|(s, e)| s + sigma * e).collect();
            rule_accuracy(signal, &latent)
        })
        .sum();
    total / draws.len() as f64
}

/// Bisection on sigma with common random numbers; accuracy falls with sigma.
fn calibrate_sigma(signal: &[f64], target: f64, reps: usize, rng: &mut ChaCha8Rng) -> f64 {
    if target >= 1.0 {
        return 0.0;
    }
    let z = draws(signal.len(), reps, rng);
    let mut lo = 0.0;
    let mut hi = 10.0 * std_dev(signal).max(1e-12);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if monte_carlo_accuracy(signal, mid, &z) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
