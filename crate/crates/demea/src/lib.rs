//! Mesh autoencoder with an embedded-deformation decoder.
//!
//! The crate builds a multi-resolution hierarchy of a template mesh by
//! constrained quadric edge collapse, trains a graph-convolutional
//! autoencoder on deformations of that template, and decodes latent codes
//! into per-node rigid transforms that an embedded deformation layer turns
//! back into dense vertex positions.

pub mod cli;
pub mod conv;
pub mod edl;
pub mod gradcheck;
pub mod hierarchy;
pub mod latent;
pub mod mesh;
pub mod model;
pub mod nn;
pub mod shapes;

pub use mesh::{compute_metrics, load_mesh, save_mesh, BoundingMetrics, Mesh, MeshError};
