//! Synthetic deformations: smooth random bend/twist fields over the graph
//! nodes, pushed through the deformation layer itself so every target is
//! exactly reachable by the decoder's output space. Each node's rotation is
//! the local rotation of the ambient map, which keeps the fields
//! kinematically consistent: the rotations are recoverable from the node
//! positions alone.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::edl::{edl_forward, rotation_to_euler, EdlState, NodeTransforms, SkinningBinding};
use crate::hierarchy::DeformationGraph;
use crate::mesh::{compute_metrics, Mesh};

use super::ModelError;

/// Controls for the generator. Scales are deliberately gentle so targets
/// stay in the well-conditioned regime of the deformation model.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub samples: usize,
    /// Sinusoidal basis fields shared by the dataset; more waves, a
    /// higher-dimensional deformation family.
    pub waves: usize,
    /// Peak Euler angle magnitude in radians.
    pub angle_scale: f64,
    /// Peak translation magnitude as a fraction of the bounding-box diagonal.
    pub translation_scale: f64,
    /// Spatial wavelength multiplier; larger values give smoother fields
    /// whose local neighborhoods stay closer to rigid.
    pub smoothness: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            samples: 10,
            waves: 2,
            angle_scale: 0.25,
            translation_scale: 0.03,
            smoothness: 2.0,
            seed: 7,
        }
    }
}

fn unit_direction<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 {
            return v / n;
        }
    }
}

struct BasisWave {
    /// Rotation axis of the bend or twist.
    axis: Unit<Vector3<f64>>,
    /// Spatial direction the sinusoid varies along.
    dir: Vector3<f64>,
    freq: f64,
    phase: f64,
    /// Peak rotation angle in radians.
    angle_amp: f64,
    /// Translation wave amplitude.
    t_amp: Vector3<f64>,
}

impl BasisWave {
    /// Applies the wave at strength `c` to a point carried to `p`, returning
    /// the new position and the local rotation of the map.
    fn apply(&self, center: Vector3<f64>, c: f64, p: Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
        let s = c * (self.freq * self.dir.dot(&p) + self.phase).sin();
        let rot = Rotation3::from_axis_angle(&self.axis, self.angle_amp * s).into_inner();
        (center + rot * (p - center) + self.t_amp * s, rot)
    }
}

/// Smooth random transform fields over the graph nodes. A small basis of
/// sinusoidal bend/twist waves is drawn once per dataset: each wave rotates
/// space about an axis through the template centroid by an angle that varies
/// sinusoidally along a random direction, plus a translation wave. Each
/// sample composes the basis at random strengths, so the whole set spans a
/// low-dimensional family of coherent deformations, and each node's rotation
/// is the true local rotation of the composed map. Deterministic in the
/// spec's seed.
pub fn generate_node_fields(
    template: &Mesh,
    graph: &DeformationGraph,
    spec: &SyntheticSpec,
) -> Vec<NodeTransforms> {
    let diag = compute_metrics(template)
        .map(|m| m.bbox_diagonal)
        .unwrap_or(1.0)
        .max(1e-12);
    let center = template
        .vertices()
        .iter()
        .sum::<Vector3<f64>>()
        / template.vertex_count().max(1) as f64;
    let nodes = graph.node_positions();
    let waves = spec.waves.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let wavelength = diag * spec.smoothness.max(1e-6);
    let basis: Vec<BasisWave> = (0..waves)
        .map(|_| BasisWave {
            axis: Unit::new_normalize(unit_direction(&mut rng)),
            dir: unit_direction(&mut rng),
            freq: rng.gen_range(0.5..1.5) * std::f64::consts::TAU / wavelength,
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
            angle_amp: spec.angle_scale / waves as f64,
            t_amp: Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ) * (spec.translation_scale * diag / waves as f64),
        })
        .collect();
    let mut fields = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        // Coefficient magnitude is bounded away from zero so every sample
        // visibly deforms; |c| <= 1 keeps the scale bounds.
        let coeffs: Vec<f64> = (0..waves)
            .map(|_| rng.gen_range(0.25..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let mut transforms = NodeTransforms::zeros(graph.node_count());
        for (i, g) in nodes.iter().enumerate() {
            let mut p = *g;
            let mut r = Matrix3::identity();
            for (wave, &c) in basis.iter().zip(&coeffs) {
                let (moved, rot) = wave.apply(center, c, p);
                p = moved;
                r = rot * r;
            }
            transforms.translations[i] = p - g;
            transforms.euler_angles[i] = rotation_to_euler(&r);
        }
        fields.push(transforms);
    }
    fields
}

/// Deforms the template once per field, yielding the dataset's vertex lists.
pub fn push_through_deformation(
    template: &Mesh,
    graph: &DeformationGraph,
    binding: &SkinningBinding,
    fields: &[NodeTransforms],
) -> Result<Vec<Vec<Vector3<f64>>>, ModelError> {
    let mut samples = Vec::with_capacity(fields.len());
    let mut state = EdlState::new();
    for field in fields {
        samples.push(edl_forward(template, graph, binding, field, &mut state)?);
    }
    Ok(samples)
}
