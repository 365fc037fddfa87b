//! Embedded deformation layer: each graph node carries a rigid transform
//! (Euler angles + translation); a vertex moves by the weighted blend of its
//! nearest nodes' transforms. Weights are Gaussian in rest-pose distance and
//! normalized per vertex so zero transforms reproduce the input exactly.
//! All math runs at f64 with exact reverse-mode gradients.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::hierarchy::DeformationGraph;
use crate::mesh::{compute_metrics, Mesh, MeshError};

#[derive(Debug, Error)]
pub enum EdlError {
    #[error("graph level must be 1 or 2, got {0}")]
    InvalidGraphLevel(usize),
    #[error("need at least {needed} graph nodes, got {got}")]
    TooFewNodes { needed: usize, got: usize },
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch { what: &'static str, expected: usize, got: usize },
    #[error("backward called without a cached forward pass")]
    MissingCache,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("transform io failed for {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid transform data in {path}: {msg}")]
    Format { path: std::path::PathBuf, msg: String },
}

/// Precomputed per-vertex skinning data: the nearest graph nodes and their
/// normalized Gaussian weights in the rest pose.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinningBinding {
    /// Per vertex: indices of the nearest nodes, closest first.
    neighbors: Vec<Vec<usize>>,
    /// Per vertex: weights aligned with `neighbors`, each row summing to 1.
    weights: Vec<Vec<f64>>,
    sigma: f64,
    neighbor_count: usize,
    node_count: usize,
}

impl SkinningBinding {
    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn neighbor_count(&self) -> usize {
        self.neighbor_count
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn vertex_count(&self) -> usize {
        self.neighbors.len()
    }
}

/// Per-node rigid transforms: intrinsic XYZ Euler angles plus translation.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTransforms {
    pub euler_angles: Vec<Vector3<f64>>,
    pub translations: Vec<Vector3<f64>>,
}

impl NodeTransforms {
    pub fn zeros(node_count: usize) -> Self {
        NodeTransforms {
            euler_angles: vec![Vector3::zeros(); node_count],
            translations: vec![Vector3::zeros(); node_count],
        }
    }

    pub fn node_count(&self) -> usize {
        self.euler_angles.len()
    }

    pub fn is_finite(&self) -> bool {
        self.euler_angles
            .iter()
            .chain(&self.translations)
            .all(|v| v.x.is_finite() && v.y.is_finite() && v.z.is_finite())
    }
}

/// Binds a mesh to its deformation graph. The neighbor count is 6 for a
/// graph at hierarchy level 1 and 12 at level 2.
pub fn bind_skinning(
    mesh: &Mesh,
    graph: &DeformationGraph,
    graph_level: usize,
) -> Result<SkinningBinding, EdlError> {
    let k = match graph_level {
        1 => 6,
        2 => 12,
        other => return Err(EdlError::InvalidGraphLevel(other)),
    };
    bind_skinning_with_neighbors(mesh, graph, k)
}

/// [`bind_skinning`] with an explicit neighbor count (small test graphs).
pub fn bind_skinning_with_neighbors(
    mesh: &Mesh,
    graph: &DeformationGraph,
    neighbor_count: usize,
) -> Result<SkinningBinding, EdlError> {
    let l = graph.node_count();
    if l < neighbor_count || neighbor_count == 0 {
        return Err(EdlError::TooFewNodes { needed: neighbor_count.max(1), got: l });
    }
    let metrics = compute_metrics(mesh)?;
    let sigma = (2.0 / 3.0) * metrics.d_max / (l as f64).sqrt();
    let two_sigma_sq = 2.0 * sigma * sigma;

    let nodes = graph.node_positions();
    let mut neighbors = Vec::with_capacity(mesh.vertex_count());
    let mut weights = Vec::with_capacity(mesh.vertex_count());
    for p in mesh.vertices() {
        // Exact nearest-node search; ties resolved by node index.
        let mut dist: Vec<(f64, usize)> = nodes
            .iter()
            .enumerate()
            .map(|(i, g)| ((g - p).norm_squared(), i))
            .collect();
        dist.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        dist.truncate(neighbor_count);

        // Gaussian weights, computed relative to the closest node so the
        // normalization never degenerates to 0/0 for distant vertices.
        let d_min = dist[0].0;
        let raw: Vec<f64> = dist
            .iter()
            .map(|&(d, _)| {
                if two_sigma_sq > 0.0 {
                    (-(d - d_min) / two_sigma_sq).exp()
                } else {
                    1.0
                }
            })
            .collect();
        let sum: f64 = raw.iter().sum();
        neighbors.push(dist.iter().map(|&(_, i)| i).collect());
        weights.push(raw.iter().map(|w| w / sum).collect());
    }

    Ok(SkinningBinding {
        neighbors,
        weights,
        sigma,
        neighbor_count,
        node_count: l,
    })
}

/// Rotation from intrinsic XYZ Euler angles: R = R_z(γ)·R_y(β)·R_x(α).
pub fn euler_to_rotation(angles: Vector3<f64>) -> Matrix3<f64> {
    let (sa, ca) = angles.x.sin_cos();
    let (sb, cb) = angles.y.sin_cos();
    let (sg, cg) = angles.z.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, ca, -sa, 0.0, sa, ca);
    let ry = Matrix3::new(cb, 0.0, sb, 0.0, 1.0, 0.0, -sb, 0.0, cb);
    let rz = Matrix3::new(cg, -sg, 0.0, sg, cg, 0.0, 0.0, 0.0, 1.0);
    rz * ry * rx
}

/// Inverse of [`euler_to_rotation`]: recovers (x, y, z) angles with the y
/// angle in [-pi/2, pi/2]. At gimbal lock (|r20| = 1) the x/z split is
/// ambiguous; the z angle is fixed to 0 there.
pub fn rotation_to_euler(r: &Matrix3<f64>) -> Vector3<f64> {
    let sb = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let beta = sb.asin();
    if sb.abs() < 1.0 - 1e-12 {
        let alpha = r[(2, 1)].atan2(r[(2, 2)]);
        let gamma = r[(1, 0)].atan2(r[(0, 0)]);
        Vector3::new(alpha, beta, gamma)
    } else {
        let alpha = (-r[(1, 2)]).atan2(r[(1, 1)]);
        Vector3::new(alpha, beta, 0.0)
    }
}

/// Partial derivatives of [`euler_to_rotation`] with respect to each angle.
fn euler_rotation_partials(angles: Vector3<f64>) -> [Matrix3<f64>; 3] {
    let (sa, ca) = angles.x.sin_cos();
    let (sb, cb) = angles.y.sin_cos();
    let (sg, cg) = angles.z.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, ca, -sa, 0.0, sa, ca);
    let ry = Matrix3::new(cb, 0.0, sb, 0.0, 1.0, 0.0, -sb, 0.0, cb);
    let rz = Matrix3::new(cg, -sg, 0.0, sg, cg, 0.0, 0.0, 0.0, 1.0);
    let drx = Matrix3::new(0.0, 0.0, 0.0, 0.0, -sa, -ca, 0.0, ca, -sa);
    let dry = Matrix3::new(-sb, 0.0, cb, 0.0, 0.0, 0.0, -cb, 0.0, -sb);
    let drz = Matrix3::new(-sg, -cg, 0.0, cg, -sg, 0.0, 0.0, 0.0, 0.0);
    [rz * ry * drx, rz * dry * rx, drz * ry * rx]
}

/// Forward state consumed by [`edl_backward`]. Owned by one training step.
#[derive(Debug, Default)]
pub struct EdlState {
    cache: Option<EdlCache>,
}

#[derive(Debug)]
struct EdlCache {
    rest_vertices: Vec<Vector3<f64>>,
    node_positions: Vec<Vector3<f64>>,
    euler_angles: Vec<Vector3<f64>>,
}

impl EdlState {
    pub fn new() -> Self {
        EdlState::default()
    }

    pub fn clear(&mut self) {
        self.cache = None;
    }
}

/// Deforms every vertex: G(p) = Σ_{l ∈ N_p} w_l(p)·(R_l(p − g_l) + g_l + t_l).
pub fn edl_forward(
    mesh: &Mesh,
    graph: &DeformationGraph,
    binding: &SkinningBinding,
    transforms: &NodeTransforms,
    state: &mut EdlState,
) -> Result<Vec<Vector3<f64>>, EdlError> {
    let l = graph.node_count();
    if binding.node_count != l {
        return Err(EdlError::ShapeMismatch {
            what: "binding nodes",
            expected: l,
            got: binding.node_count,
        });
    }
    if binding.vertex_count() != mesh.vertex_count() {
        return Err(EdlError::ShapeMismatch {
            what: "binding vertices",
            expected: mesh.vertex_count(),
            got: binding.vertex_count(),
        });
    }
    if transforms.node_count() != l || transforms.translations.len() != l {
        return Err(EdlError::ShapeMismatch {
            what: "transforms",
            expected: l,
            got: transforms.node_count().min(transforms.translations.len()),
        });
    }
    if !transforms.is_finite() {
        return Err(EdlError::NonFinite("node transforms"));
    }

    let rotations: Vec<Matrix3<f64>> = transforms
        .euler_angles
        .iter()
        .map(|&a| euler_to_rotation(a))
        .collect();
    let nodes = graph.node_positions();

    // Algebraically Σ_l w_l·(R_l(p−g_l) + g_l + t_l); rearranged via the
    // weight partition of unity to p + Σ_l w_l·(R_l d_l − d_l + t_l) so the
    // identity transform reproduces p exactly in floating point.
    let mut out = Vec::with_capacity(mesh.vertex_count());
    for (vi, p) in mesh.vertices().iter().enumerate() {
        let mut q = *p;
        for (&li, &w) in binding.neighbors[vi].iter().zip(&binding.weights[vi]) {
            let d = p - nodes[li];
            let t = transforms.translations[li];
            q += w * (rotations[li] * d - d + t);
        }
        out.push(q);
    }

    state.cache = Some(EdlCache {
        rest_vertices: mesh.vertices().to_vec(),
        node_positions: nodes.to_vec(),
        euler_angles: transforms.euler_angles.clone(),
    });
    Ok(out)
}

/// Parameter gradients produced by [`edl_backward`].
#[derive(Debug, Clone)]
pub struct EdlGradients {
    pub d_euler_angles: Vec<Vector3<f64>>,
    pub d_translations: Vec<Vector3<f64>>,
}

/// Exact vector-Jacobian products of the deformation: the translation block
/// is Σ_p w_l(p)·ḡ_p, the angle block chains the upstream gradient through
/// the Euler rotation partials.
pub fn edl_backward(
    binding: &SkinningBinding,
    state: &EdlState,
    upstream: &[Vector3<f64>],
) -> Result<EdlGradients, EdlError> {
    let cache = state.cache.as_ref().ok_or(EdlError::MissingCache)?;
    if upstream.len() != cache.rest_vertices.len() {
        return Err(EdlError::ShapeMismatch {
            what: "upstream gradient",
            expected: cache.rest_vertices.len(),
            got: upstream.len(),
        });
    }
    if binding.vertex_count() != cache.rest_vertices.len()
        || binding.node_count != cache.node_positions.len()
    {
        return Err(EdlError::ShapeMismatch {
            what: "binding for cached forward",
            expected: cache.rest_vertices.len(),
            got: binding.vertex_count(),
        });
    }

    let l = cache.node_positions.len();
    let partials: Vec<[Matrix3<f64>; 3]> = cache
        .euler_angles
        .iter()
        .map(|&a| euler_rotation_partials(a))
        .collect();

    let mut d_angles = vec![Vector3::zeros(); l];
    let mut d_trans = vec![Vector3::zeros(); l];
    for (vi, (&p, g_up)) in cache.rest_vertices.iter().zip(upstream).enumerate() {
        for (&li, &w) in binding.neighbors[vi].iter().zip(&binding.weights[vi]) {
            let local = p - cache.node_positions[li];
            d_trans[li] += w * g_up;
            let dr = &partials[li];
            for axis in 0..3 {
                d_angles[li][axis] += w * g_up.dot(&(dr[axis] * local));
            }
        }
    }
    Ok(EdlGradients { d_euler_angles: d_angles, d_translations: d_trans })
}

/// Least-squares rotation taking the centered canonical ring onto the
/// centered deformed ring, never a reflection. Returns the rotation and a
/// degeneracy flag (rank < 2 cross-covariance → identity, flag set). This
/// estimator is used as a fixed function: no gradients flow through it.
pub fn procrustes_rotation(
    canonical_ring: &[Vector3<f64>],
    deformed_ring: &[Vector3<f64>],
) -> Result<(Matrix3<f64>, bool), EdlError> {
    if canonical_ring.len() != deformed_ring.len() {
        return Err(EdlError::ShapeMismatch {
            what: "procrustes rings",
            expected: canonical_ring.len(),
            got: deformed_ring.len(),
        });
    }
    let n = canonical_ring.len();
    if n == 0 {
        return Ok((Matrix3::identity(), true));
    }
    let inv_n = 1.0 / n as f64;
    let ca: Vector3<f64> = canonical_ring.iter().sum::<Vector3<f64>>() * inv_n;
    let cb: Vector3<f64> = deformed_ring.iter().sum::<Vector3<f64>>() * inv_n;

    let mut h = Matrix3::zeros();
    for (a, b) in canonical_ring.iter().zip(deformed_ring) {
        h += (a - ca) * (b - cb).transpose();
    }

    let svd = nalgebra::linalg::SVD::new(h, true, true);
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    let s = svd.singular_values;
    if s[1] <= 1e-12 * s[0].max(f64::MIN_POSITIVE) {
        return Ok((Matrix3::identity(), true));
    }
    let v = v_t.transpose();
    let det = (v * u.transpose()).determinant();
    let d = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, det.signum()));
    Ok((v * d * u.transpose(), false))
}

/// Writes transforms as a little-endian f32 blob: node count, angles, then
/// translations.
pub fn save_transforms(path: &Path, transforms: &NodeTransforms) -> Result<(), EdlError> {
    let io_err = |source| EdlError::Io { path: path.to_path_buf(), source };
    let mut buf = Vec::with_capacity(4 + transforms.node_count() * 24);
    buf.write_u32::<LittleEndian>(transforms.node_count() as u32).map_err(io_err)?;
    for v in transforms.euler_angles.iter().chain(&transforms.translations) {
        for c in 0..3 {
            buf.write_f32::<LittleEndian>(v[c] as f32).map_err(io_err)?;
        }
    }
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    file.write_all(&buf).map_err(io_err)
}

pub fn load_transforms(path: &Path) -> Result<NodeTransforms, EdlError> {
    let io_err = |source| EdlError::Io { path: path.to_path_buf(), source };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(io_err)?
        .read_to_end(&mut bytes)
        .map_err(io_err)?;
    let mut cursor = std::io::Cursor::new(&bytes);
    let l = cursor.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let expected = 4 + l * 24;
    if bytes.len() != expected {
        return Err(EdlError::Format {
            path: path.to_path_buf(),
            msg: format!("expected {expected} bytes for {l} nodes, got {}", bytes.len()),
        });
    }
    let mut read_vecs = |count: usize| -> Result<Vec<Vector3<f64>>, EdlError> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let x = cursor.read_f32::<LittleEndian>().map_err(io_err)? as f64;
            let y = cursor.read_f32::<LittleEndian>().map_err(io_err)? as f64;
            let z = cursor.read_f32::<LittleEndian>().map_err(io_err)? as f64;
            out.push(Vector3::new(x, y, z));
        }
        Ok(out)
    };
    let euler_angles = read_vecs(l)?;
    let translations = read_vecs(l)?;
    Ok(NodeTransforms { euler_angles, translations })
}
