//! Great-circle geometry and a uniform lat/lon grid index.
//!
//! Distances use the haversine formula on a sphere of radius
//! [`EARTH_RADIUS_KM`]. The [`GridIndex`] buckets points into square degree
//! cells and answers radius and k-nearest queries that are exactly equivalent
//! to a brute-force scan: candidate cells are a conservative superset and the
//! final membership test is the same haversine evaluation a scan would use.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// IUGG mean Earth radius.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Kilometres per degree of arc along a great circle.
pub const KM_PER_DEGREE: f64 = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;

/// A validated WGS84-style coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint", into = "RawPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = Error;

    fn try_from(raw: RawPoint) -> Result<Self> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl From<GeoPoint> for RawPoint {
    fn from(p: GeoPoint) -> Self {
        RawPoint { lat: p.lat, lon: p.lon }
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite coordinate ({lat}, {lon})")));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidInput(format!("latitude {lat} outside [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(Error::InvalidInput(format!("longitude {lon} outside [-180, 180]")));
        }
        Ok(GeoPoint { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Great-circle distance in kilometres.
///
/// Arguments are put in a canonical order before evaluation so the result is
/// bit-for-bit symmetric. Coordinates are validated when the [`GeoPoint`]s are
/// constructed, so this never fails.
pub fn haversine_km(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (p, q) = if (a.lat, a.lon) <= (b.lat, b.lon) {
        (a, b)
    } else {
        (b, a)
    };
    if p.lat == q.lat && p.lon == q.lon {
        return 0.0;
    }
    let phi1 = p.lat.to_radians();
    let phi2 = q.lat.to_radians();
    let dphi = (q.lat - p.lat).to_radians();
    let dlambda = (q.lon - p.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

type Cell = (i64, i64);

/// Uniform degree-grid index over identified points. Immutable after build.
#[derive(Debug, Clone)]
pub struct GridIndex {
    cell_size_deg: f64,
    n_lon_cells: i64,
    n_lat_cells: i64,
    cells: HashMap<Cell, Vec<usize>>,
    points: Vec<(usize, GeoPoint)>,
}

impl GridIndex {
    /// Build an index. Fails on a non-positive cell size or a repeated id.
    pub fn build(points: &[(usize, GeoPoint)], cell_size_deg: f64) -> Result<Self> {
        if !(cell_size_deg.is_finite() && cell_size_deg > 0.0) {
            return Err(Error::InvalidInput(format!(
                "cell size must be positive, got {cell_size_deg}"
            )));
        }
        let n_lon_cells = (360.0 / cell_size_deg).ceil().max(1.0) as i64;
        let n_lat_cells = (180.0 / cell_size_deg).ceil().max(1.0) as i64;
        let mut index = GridIndex {
            cell_size_deg,
            n_lon_cells,
            n_lat_cells,
            cells: HashMap::new(),
            points: Vec::with_capacity(points.len()),
        };
        let mut seen = HashSet::with_capacity(points.len());
        for &(id, p) in points {
            if !seen.insert(id) {
                return Err(Error::InvalidInput(format!("duplicate point id {id}")));
            }
            let slot = index.points.len();
            index.points.push((id, p));
            index.cells.entry(index.cell_of(&p)).or_default().push(slot);
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cell_size_deg(&self) -> f64 {
        self.cell_size_deg
    }

    /// Cell coordinates `(lon_cell, lat_cell)` of a point.
    pub fn cell_of(&self, p: &GeoPoint) -> (i64, i64) {
        (self.lon_cell(p.lon), self.lat_cell(p.lat))
    }

    /// Ids stored in one cell (empty if the cell holds nothing).
    pub fn cell_ids(&self, cell: (i64, i64)) -> Vec<usize> {
        self.cells
            .get(&cell)
            .map(|slots| slots.iter().map(|&s| self.points[s].0).collect())
            .unwrap_or_default()
    }

    pub fn point(&self, id: usize) -> Option<GeoPoint> {
        self.points.iter().find(|(i, _)| *i == id).map(|(_, p)| *p)
    }

    fn lon_cell(&self, lon: f64) -> i64 {
        (((lon + 180.0) / self.cell_size_deg).floor() as i64).clamp(0, self.n_lon_cells - 1)
    }

    fn lat_cell(&self, lat: f64) -> i64 {
        (((lat + 90.0) / self.cell_size_deg).floor() as i64).clamp(0, self.n_lat_cells - 1)
    }

    /// Ids within `r_km` of `center` (boundary inclusive), ascending.
    pub fn query_radius(&self, center: &GeoPoint, r_km: f64) -> Result<Vec<usize>> {
        if !(r_km.is_finite() && r_km >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "radius must be a non-negative finite number, got {r_km}"
            )));
        }
        let mut ids: Vec<usize> = self
            .candidate_slots(center, r_km)
            .into_iter()
            .filter_map(|slot| {
                let (id, p) = &self.points[slot];
                (haversine_km(center, p) <= r_km).then_some(*id)
            })
            .collect();
        ids.sort_unstable();
        Ok(ids)
    }

    /// The `min(k, N)` nearest ids ordered by distance, ties by ascending id.
    pub fn query_knn(&self, center: &GeoPoint, k: usize) -> Result<Vec<usize>> {
        if k == 0 {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        if self.points.is_empty() {
            return Ok(Vec::new());
        }
        let half_circumference = std::f64::consts::PI * EARTH_RADIUS_KM;
        let mut r = (self.cell_size_deg * KM_PER_DEGREE).max(1e-3);
        loop {
            let covers_globe = r >= half_circumference;
            let slots = if covers_globe {
                (0..self.points.len()).collect()
            } else {
                self.candidate_slots(center, r)
            };
            let mut hits: Vec<(f64, usize)> = slots
                .into_iter()
                .map(|slot| {
                    let (id, p) = &self.points[slot];
                    (haversine_km(center, p), *id)
                })
                .filter(|(d, _)| covers_globe || *d <= r)
                .collect();
            // Every point outside the radius is farther than every point inside,
            // so once k points are inside the k nearest are among them.
            if hits.len() >= k || covers_globe {
                hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                return Ok(hits.into_iter().take(k).map(|(_, id)| id).collect());
            }
            r *= 2.0;
        }
    }

    /// Slots of all points in cells that may intersect the spherical cap.
    fn candidate_slots(&self, center: &GeoPoint, r_km: f64) -> Vec<usize> {
        let delta = r_km / EARTH_RADIUS_KM;
        if delta >= std::f64::consts::PI {
            return (0..self.points.len()).collect();
        }
        let margin = 1e-7;
        let dlat = delta.to_degrees() + margin;
        let lat_lo = center.lat - dlat;
        let lat_hi = center.lat + dlat;
        let y_lo = self.lat_cell(lat_lo.max(-90.0));
        let y_hi = self.lat_cell(lat_hi.min(90.0));

        let crosses_pole = lat_hi >= 90.0 || lat_lo <= -90.0;
        let lon_intervals: Vec<(f64, f64)> = if crosses_pole {
            vec![(-180.0, 180.0)]
        } else {
            let s = delta.sin() / center.lat.to_radians().cos();
            if s >= 1.0 {
                vec![(-180.0, 180.0)]
            } else {
                let dlon = s.asin().to_degrees() + margin;
                let lo = center.lon - dlon;
                let hi = center.lon + dlon;
                if hi - lo >= 360.0 {
                    vec![(-180.0, 180.0)]
                } else if lo < -180.0 {
                    vec![(lo + 360.0, 180.0), (-180.0, hi)]
                } else if hi > 180.0 {
                    vec![(lo, 180.0), (-180.0, hi - 360.0)]
                } else {
                    vec![(lo, hi)]
                }
            }
        };

        let x_ranges: Vec<(i64, i64)> = lon_intervals
            .iter()
            .map(|&(lo, hi)| (self.lon_cell(lo), self.lon_cell(hi)))
            .collect();
        let n_candidate_cells: i64 = x_ranges.iter().map(|(a, b)| b - a + 1).sum::<i64>() * (y_hi - y_lo + 1);

        let in_range = |(x, y): Cell| y >= y_lo && y <= y_hi && x_ranges.iter().any(|&(a, b)| x >= a && x <= b);

        let mut slots = Vec::new();
        if n_candidate_cells as usize > self.cells.len() {
            for (cell, cell_slots) in &self.cells {
                if in_range(*cell) {
                    slots.extend_from_slice(cell_slots);
                }
            }
        } else {
            let mut visited = HashSet::new();
            for &(a, b) in &x_ranges {
                for x in a..=b {
                    for y in y_lo..=y_hi {
                        if visited.insert((x, y)) {
                            if let Some(cell_slots) = self.cells.get(&(x, y)) {
                                slots.extend_from_slice(cell_slots);
                            }
                        }
                    }
                }
            }
        }
        slots
    }
}
