//! Predict cluster-level livelihood indicators (wealth, population density, BMI)
//! from object counts and embeddings extracted from geotagged street-level images.
//!
//! The crate is organised bottom-up:
//!
//! * [`geo`]: great-circle distances and a uniform-grid spatial index.
//! * [`dataset`]: ingestion, image-to-cluster matching, label construction,
//!   splitting, pooling and a synthetic generator with a planted signal.
//! * [`features`]: cluster-level count vectors and per-image node features.
//! * [`graph`]: fixed-size cluster graphs (nodes, distance adjacency, mask).
//! * [`nn`]: dense layers, activations, losses, Adam and gradient checking.
//! * [`gcn`]: Graph-Conv / Graph-Embed-Pool layers and the cluster GCN.
//! * [`models`]: CART, random forest, gradient boosting, kNN and the MLP.
//! * [`eval`]: metrics, baselines, vote aggregation, permutation importance
//!   and DOT / GeoJSON exports.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod gcn;
pub mod geo;
pub mod graph;
pub mod models;
pub mod nn;

pub use error::{Error, Result};
