//! Mesh hierarchy construction: a stack of progressively coarser meshes in
//! which every coarse vertex is an original mesh vertex, plus sparse
//! up/downsampling operators between adjacent levels. One level coincides
//! with the deformation graph so decoded node features live on real mesh
//! geometry.

mod qem;

pub mod io;

pub(crate) use qem::closest_point_barycentric;

use nalgebra::Vector3;
use thiserror::Error;

use crate::mesh::{Mesh, MeshError};
use crate::nn::{real, FeatureMap, Real};

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("simplification target {target} must be at least 4 and below the vertex count {vertices}")]
    TargetOutOfRange { target: usize, vertices: usize },
    #[error("simplification infeasible: {0}")]
    Infeasible(String),
    #[error("invalid level counts: {0}")]
    LevelCounts(String),
    #[error("deformation graph does not match mesh: {0}")]
    GraphMismatch(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("hierarchy io failed for {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid hierarchy data in {path}: {msg}")]
    Format { path: std::path::PathBuf, msg: String },
}

/// Sparse deformation graph embedded in a mesh: every node sits exactly on
/// a mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationGraph {
    node_positions: Vec<Vector3<f64>>,
    node_to_vertex: Vec<usize>,
    graph_edges: Vec<(usize, usize)>,
}

impl DeformationGraph {
    pub fn new(
        node_positions: Vec<Vector3<f64>>,
        node_to_vertex: Vec<usize>,
        graph_edges: Vec<(usize, usize)>,
    ) -> Result<Self, HierarchyError> {
        if node_positions.len() != node_to_vertex.len() {
            return Err(HierarchyError::GraphMismatch(format!(
                "{} node positions but {} vertex indices",
                node_positions.len(),
                node_to_vertex.len()
            )));
        }
        let n = node_positions.len();
        let mut seen = std::collections::HashSet::new();
        for &v in &node_to_vertex {
            if !seen.insert(v) {
                return Err(HierarchyError::GraphMismatch(format!(
                    "vertex {v} is mapped by more than one node"
                )));
            }
        }
        for &(a, b) in &graph_edges {
            if a >= n || b >= n || a == b {
                return Err(HierarchyError::GraphMismatch(format!(
                    "edge ({a}, {b}) is invalid for {n} nodes"
                )));
            }
        }
        Ok(DeformationGraph { node_positions, node_to_vertex, graph_edges })
    }

    pub fn node_count(&self) -> usize {
        self.node_positions.len()
    }

    pub fn node_positions(&self) -> &[Vector3<f64>] {
        &self.node_positions
    }

    pub fn node_to_vertex(&self) -> &[usize] {
        &self.node_to_vertex
    }

    pub fn graph_edges(&self) -> &[(usize, usize)] {
        &self.graph_edges
    }

    /// Sorted neighbor lists, one per node.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for &(a, b) in &self.graph_edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Checks that every node lies exactly on its mesh vertex.
    pub fn validate_against(&self, mesh: &Mesh) -> Result<(), HierarchyError> {
        for (i, (&v, p)) in self.node_to_vertex.iter().zip(&self.node_positions).enumerate() {
            if v >= mesh.vertex_count() {
                return Err(HierarchyError::GraphMismatch(format!(
                    "node {i} maps to vertex {v} but the mesh has {} vertices",
                    mesh.vertex_count()
                )));
            }
            if mesh.vertices()[v] != *p {
                return Err(HierarchyError::GraphMismatch(format!(
                    "node {i} position differs from mesh vertex {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Extracts a deformation graph by simplifying the mesh to `target_nodes`
/// vertices; graph connectivity is the simplified mesh connectivity.
pub fn extract_graph(mesh: &Mesh, target_nodes: usize) -> Result<DeformationGraph, HierarchyError> {
    let n = mesh.vertex_count();
    if target_nodes < 4 || target_nodes >= n {
        return Err(HierarchyError::TargetOutOfRange { target: target_nodes, vertices: n });
    }
    let result = qem::simplify(mesh, target_nodes, &vec![false; n])?;

    // Snap each node onto its nearest original vertex, never reusing one.
    // Collapses already keep original vertices, so this is normally the
    // identity; it resolves exact-duplicate positions deterministically.
    let verts = mesh.vertices();
    let mut taken = vec![false; n];
    let mut node_to_vertex = Vec::with_capacity(target_nodes);
    for &kv in &result.kept {
        let p = verts[kv];
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (vi, v) in verts.iter().enumerate() {
            if taken[vi] {
                continue;
            }
            let d = (v - p).norm_squared();
            if d < best_d {
                best_d = d;
                best = vi;
            }
        }
        taken[best] = true;
        node_to_vertex.push(best);
    }

    let node_positions: Vec<Vector3<f64>> =
        node_to_vertex.iter().map(|&v| verts[v]).collect();
    // Connectivity comes from the simplified faces; reuse mesh validation
    // to derive the sorted, deduplicated edge set.
    let simplified = Mesh::new(
        result.kept.iter().map(|&v| verts[v]).collect(),
        result.faces,
    )?;
    DeformationGraph::new(node_positions, node_to_vertex, simplified.edges().to_vec())
}

/// One hierarchy level: its mesh, which finer-level vertices were kept, and
/// sparse interpolation weights mapping this level back up to the finer one.
#[derive(Debug, Clone)]
pub struct HierarchyLevel {
    mesh: Mesh,
    /// Local indices into the next finer level, ascending. Level 0 holds
    /// the identity.
    select_indices: Vec<usize>,
    /// One row per finer-level vertex: (local index here, weight).
    up_weights: Vec<Vec<(usize, f64)>>,
    /// Original full-mesh vertex index of each local vertex.
    original_indices: Vec<usize>,
}

impl HierarchyLevel {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh.vertex_count()
    }

    /// Vertex count of the next finer level.
    pub fn finer_count(&self) -> usize {
        self.up_weights.len()
    }

    pub fn select_indices(&self) -> &[usize] {
        &self.select_indices
    }

    pub fn up_weights(&self) -> &[Vec<(usize, f64)>] {
        &self.up_weights
    }

    pub fn original_indices(&self) -> &[usize] {
        &self.original_indices
    }

    pub(crate) fn from_parts(
        mesh: Mesh,
        select_indices: Vec<usize>,
        up_weights: Vec<Vec<(usize, f64)>>,
        original_indices: Vec<usize>,
    ) -> Self {
        HierarchyLevel { mesh, select_indices, up_weights, original_indices }
    }
}

#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    levels: Vec<HierarchyLevel>,
    graph_level: usize,
    /// Graph-level local vertex index of each graph node.
    node_local: Vec<usize>,
}

impl MeshHierarchy {
    pub fn levels(&self) -> &[HierarchyLevel] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &HierarchyLevel {
        &self.levels[k]
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn level_counts(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.vertex_count()).collect()
    }

    /// Index of the level whose vertices are exactly the graph nodes.
    pub fn graph_level(&self) -> usize {
        self.graph_level
    }

    /// Local vertex index at the graph level for each graph node.
    pub fn node_local(&self) -> &[usize] {
        &self.node_local
    }

    pub(crate) fn from_parts(
        levels: Vec<HierarchyLevel>,
        graph_level: usize,
        node_local: Vec<usize>,
    ) -> Self {
        MeshHierarchy { levels, graph_level, node_local }
    }
}

/// Builds the level stack. `level_counts` must start at the full vertex
/// count, decrease strictly, and contain the graph node count at index 1
/// or 2 (or be the single-entry full count when the graph covers every
/// vertex). Graph nodes are protected from removal down to the graph level.
pub fn build_hierarchy(
    mesh: &Mesh,
    graph: &DeformationGraph,
    level_counts: &[usize],
) -> Result<MeshHierarchy, HierarchyError> {
    let n = mesh.vertex_count();
    if level_counts.is_empty() {
        return Err(HierarchyError::LevelCounts("no levels requested".into()));
    }
    if level_counts[0] != n {
        return Err(HierarchyError::LevelCounts(format!(
            "counts[0] = {} must equal the mesh vertex count {n}",
            level_counts[0]
        )));
    }
    for w in level_counts.windows(2) {
        if w[1] >= w[0] {
            return Err(HierarchyError::LevelCounts(format!(
                "counts must strictly decrease, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    graph.validate_against(mesh)?;
    let l = graph.node_count();
    let graph_level = if level_counts.len() == 1 {
        if l != n {
            return Err(HierarchyError::LevelCounts(format!(
                "single-level hierarchy requires the graph to cover all {n} vertices, got {l}"
            )));
        }
        0
    } else if level_counts[1] == l {
        1
    } else if level_counts.len() > 2 && level_counts[2] == l {
        2
    } else {
        return Err(HierarchyError::LevelCounts(format!(
            "graph node count {l} must appear at level 1 or 2 of {level_counts:?}"
        )));
    };

    let graph_orig: std::collections::HashSet<usize> =
        graph.node_to_vertex().iter().copied().collect();

    let mut levels = Vec::with_capacity(level_counts.len());
    levels.push(HierarchyLevel::from_parts(
        mesh.clone(),
        (0..n).collect(),
        (0..n).map(|i| vec![(i, 1.0)]).collect(),
        (0..n).collect(),
    ));

    for (k, &count) in level_counts.iter().enumerate().skip(1) {
        let prev = &levels[k - 1];
        let protect = k <= graph_level;
        let mask: Vec<bool> = prev
            .original_indices
            .iter()
            .map(|orig| protect && graph_orig.contains(orig))
            .collect();
        let result = qem::simplify(prev.mesh(), count, &mask)?;

        let positions: Vec<Vector3<f64>> =
            result.kept.iter().map(|&v| prev.mesh().vertices()[v]).collect();
        let coarse_mesh = Mesh::new(positions, result.faces)?;
        let original_indices: Vec<usize> =
            result.kept.iter().map(|&v| prev.original_indices[v]).collect();

        let up_weights = interpolation_weights(prev.mesh(), &coarse_mesh, &result.kept);
        levels.push(HierarchyLevel::from_parts(
            coarse_mesh,
            result.kept,
            up_weights,
            original_indices,
        ));
    }

    // At the graph level the kept set must be exactly the node set.
    let node_local: Vec<usize> = {
        let level = &levels[graph_level];
        let mut local_of_orig = std::collections::HashMap::new();
        for (j, &orig) in level.original_indices.iter().enumerate() {
            local_of_orig.insert(orig, j);
        }
        let mut out = Vec::with_capacity(l);
        for (i, orig) in graph.node_to_vertex().iter().enumerate() {
            match local_of_orig.get(orig) {
                Some(&j) => out.push(j),
                None => {
                    return Err(HierarchyError::GraphMismatch(format!(
                        "node {i} (vertex {orig}) missing from level {graph_level}"
                    )))
                }
            }
        }
        out
    };

    Ok(MeshHierarchy::from_parts(levels, graph_level, node_local))
}

/// Sparse rows mapping coarse features to the finer level: kept vertices
/// copy themselves, removed vertices interpolate the closest point on the
/// closest coarse triangle (nearest coarse vertex when no faces exist).
fn interpolation_weights(
    fine: &Mesh,
    coarse: &Mesh,
    kept: &[usize],
) -> Vec<Vec<(usize, f64)>> {
    let fine_n = fine.vertex_count();
    let mut local_of_fine = vec![usize::MAX; fine_n];
    for (j, &v) in kept.iter().enumerate() {
        local_of_fine[v] = j;
    }
    let cv = coarse.vertices();
    let mut rows = Vec::with_capacity(fine_n);
    for i in 0..fine_n {
        if local_of_fine[i] != usize::MAX {
            rows.push(vec![(local_of_fine[i], 1.0)]);
            continue;
        }
        let p = fine.vertices()[i];
        let mut best: Option<(f64, usize, [f64; 3])> = None;
        for (fi, f) in coarse.faces().iter().enumerate() {
            let bary = closest_point_barycentric(p, cv[f[0]], cv[f[1]], cv[f[2]]);
            let q = cv[f[0]] * bary[0] + cv[f[1]] * bary[1] + cv[f[2]] * bary[2];
            let d = (p - q).norm_squared();
            if best.map_or(true, |(bd, _, _)| d < bd) {
                best = Some((d, fi, bary));
            }
        }
        let row = match best {
            Some((_, fi, bary)) => {
                let f = coarse.faces()[fi];
                let mut entries: Vec<(usize, f64)> = f
                    .iter()
                    .zip(bary)
                    .map(|(&v, w)| (v, w.max(0.0)))
                    .filter(|&(_, w)| w > 1e-12)
                    .collect();
                let sum: f64 = entries.iter().map(|&(_, w)| w).sum();
                for e in &mut entries {
                    e.1 /= sum;
                }
                entries
            }
            None => {
                // No coarse faces: fall back to the nearest coarse vertex.
                let mut bi = 0;
                let mut bd = f64::INFINITY;
                for (j, v) in cv.iter().enumerate() {
                    let d = (p - v).norm_squared();
                    if d < bd {
                        bd = d;
                        bi = j;
                    }
                }
                vec![(bi, 1.0)]
            }
        };
        rows.push(row);
    }
    rows
}

/// Restriction onto `level`: row j of the output copies the finer row the
/// level kept.
pub fn downsample<T: Real>(level: &HierarchyLevel, fine: &FeatureMap<T>) -> FeatureMap<T> {
    assert_eq!(fine.rows(), level.finer_count(), "downsample input rows");
    let mut out = FeatureMap::zeros(level.vertex_count(), fine.cols());
    for (j, &src) in level.select_indices.iter().enumerate() {
        out.row_mut(j).copy_from_slice(fine.row(src));
    }
    out
}

/// Transpose of [`downsample`]: scatters coarse gradients back to the rows
/// they were copied from.
pub fn downsample_backward<T: Real>(
    level: &HierarchyLevel,
    grad_coarse: &FeatureMap<T>,
) -> FeatureMap<T> {
    assert_eq!(grad_coarse.rows(), level.vertex_count(), "downsample grad rows");
    let mut out = FeatureMap::zeros(level.finer_count(), grad_coarse.cols());
    for (j, &src) in level.select_indices.iter().enumerate() {
        let g = grad_coarse.row(j);
        for (dst, &v) in out.row_mut(src).iter_mut().zip(g) {
            *dst = *dst + v;
        }
    }
    out
}

/// Sparse interpolation from `level` up to the finer level.
pub fn upsample<T: Real>(level: &HierarchyLevel, coarse: &FeatureMap<T>) -> FeatureMap<T> {
    assert_eq!(coarse.rows(), level.vertex_count(), "upsample input rows");
    let cols = coarse.cols();
    let mut out = FeatureMap::zeros(level.finer_count(), cols);
    for (i, row) in level.up_weights.iter().enumerate() {
        for &(idx, w) in row {
            let w = real::<T>(w);
            let src = coarse.row(idx);
            let dst = out.row_mut(i);
            for c in 0..cols {
                dst[c] = dst[c] + w * src[c];
            }
        }
    }
    out
}

/// Transpose of [`upsample`]: accumulates fine gradients into the coarse
/// rows they interpolated from.
pub fn upsample_backward<T: Real>(
    level: &HierarchyLevel,
    grad_fine: &FeatureMap<T>,
) -> FeatureMap<T> {
    assert_eq!(grad_fine.rows(), level.finer_count(), "upsample grad rows");
    let cols = grad_fine.cols();
    let mut out = FeatureMap::zeros(level.vertex_count(), cols);
    for (i, row) in level.up_weights.iter().enumerate() {
        let g = grad_fine.row(i);
        for &(idx, w) in row {
            let w = real::<T>(w);
            let dst = out.row_mut(idx);
            for c in 0..cols {
                dst[c] = dst[c] + w * g[c];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{bar, icosphere};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_features(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> FeatureMap<f64> {
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        FeatureMap::from_vec(rows, cols, data)
    }

    #[test]
    fn extract_graph_nodes_are_mesh_vertices() {
        let m = icosphere(2); // 162 vertices
        let g = extract_graph(&m, 42).unwrap();
        assert_eq!(g.node_count(), 42);
        g.validate_against(&m).unwrap();
        let mut seen = g.node_to_vertex().to_vec();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 42);
        assert!(!g.graph_edges().is_empty());
        for &(a, b) in g.graph_edges() {
            assert!(a < 42 && b < 42 && a != b);
        }
    }

    #[test]
    fn extract_graph_range_checks() {
        let m = icosphere(1);
        assert!(matches!(
            extract_graph(&m, 3),
            Err(HierarchyError::TargetOutOfRange { .. })
        ));
        assert!(matches!(
            extract_graph(&m, 42),
            Err(HierarchyError::TargetOutOfRange { .. })
        ));
        assert!(extract_graph(&m, 41).is_ok());
    }

    #[test]
    fn build_hierarchy_level_counts_and_subset() {
        let m = icosphere(2);
        let g = extract_graph(&m, 42).unwrap();
        let h = build_hierarchy(&m, &g, &[162, 42, 12]).unwrap();
        assert_eq!(h.level_counts(), vec![162, 42, 12]);
        assert_eq!(h.graph_level(), 1);
        // Every level's vertices are original vertices at original positions.
        for level in h.levels() {
            for (j, &orig) in level.original_indices().iter().enumerate() {
                assert_eq!(level.mesh().vertices()[j], m.vertices()[orig]);
            }
        }
        // select_indices are strictly increasing locals of the finer level.
        for level in &h.levels()[1..] {
            for w in level.select_indices().windows(2) {
                assert!(w[0] < w[1]);
            }
        }
    }

    #[test]
    fn graph_level_vertices_are_exactly_the_nodes() {
        let m = icosphere(2);
        let g = extract_graph(&m, 42).unwrap();
        let h = build_hierarchy(&m, &g, &[162, 42, 12]).unwrap();
        let level = h.level(h.graph_level());
        let mut level_orig = level.original_indices().to_vec();
        level_orig.sort_unstable();
        let mut node_orig = g.node_to_vertex().to_vec();
        node_orig.sort_unstable();
        assert_eq!(level_orig, node_orig);
        // node_local maps node i onto the vertex holding its position.
        for (i, &j) in h.node_local().iter().enumerate() {
            assert_eq!(level.mesh().vertices()[j], g.node_positions()[i]);
        }
    }

    #[test]
    fn graph_protected_through_deeper_level() {
        let m = icosphere(2);
        let g = extract_graph(&m, 12).unwrap();
        let h = build_hierarchy(&m, &g, &[162, 42, 12]).unwrap();
        assert_eq!(h.graph_level(), 2);
        let node_set: std::collections::HashSet<usize> =
            g.node_to_vertex().iter().copied().collect();
        // All nodes must already be present at the intermediate level.
        let level1: std::collections::HashSet<usize> =
            h.level(1).original_indices().iter().copied().collect();
        assert!(node_set.is_subset(&level1));
        let level2: std::collections::HashSet<usize> =
            h.level(2).original_indices().iter().copied().collect();
        assert_eq!(node_set, level2);
    }

    #[test]
    fn up_weights_rows_sum_to_one() {
        let m = bar(5, 25, 0.1, 1.0); // 500 vertices
        let g = extract_graph(&m, 60).unwrap();
        let h = build_hierarchy(&m, &g, &[500, 160, 60, 24]).unwrap();
        assert_eq!(h.graph_level(), 2);
        for level in &h.levels()[1..] {
            for row in level.up_weights() {
                assert!(!row.is_empty() && row.len() <= 3);
                let sum: f64 = row.iter().map(|&(_, w)| w).sum();
                assert!((sum - 1.0).abs() < 1e-6, "row sum {sum}");
                for &(idx, w) in row {
                    assert!(idx < level.vertex_count());
                    assert!(w >= 0.0);
                }
            }
        }
    }

    #[test]
    fn kept_vertices_upsample_to_themselves() {
        let m = icosphere(2);
        let g = extract_graph(&m, 42).unwrap();
        let h = build_hierarchy(&m, &g, &[162, 42]).unwrap();
        let level = h.level(1);
        for (j, &fine_idx) in level.select_indices().iter().enumerate() {
            let row = &level.up_weights()[fine_idx];
            assert_eq!(row.len(), 1);
            assert_eq!(row[0].0, j);
            assert_eq!(row[0].1, 1.0);
        }
    }

    #[test]
    fn downsample_then_upsample_is_identity_on_coarse() {
        let m = icosphere(2);
        let g = extract_graph(&m, 42).unwrap();
        let h = build_hierarchy(&m, &g, &[162, 42, 12]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for level in &h.levels()[1..] {
            let coarse = random_features(&mut rng, level.vertex_count(), 5);
            let fine = upsample(level, &coarse);
            let back = downsample(level, &fine);
            for j in 0..coarse.rows() {
                for c in 0..5 {
                    assert_eq!(back.row(j)[c], coarse.row(j)[c]);
                }
            }
        }
    }

    #[test]
    fn upsample_preserves_constants() {
        let m = bar(5, 25, 0.1, 1.0);
        let g = extract_graph(&m, 60).unwrap();
        let h = build_hierarchy(&m, &g, &[500, 160, 60]).unwrap();
        for level in &h.levels()[1..] {
            let ones = FeatureMap::from_vec(
                level.vertex_count(),
                2,
                vec![1.0f64; level.vertex_count() * 2],
            );
            let up = upsample(level, &ones);
            for i in 0..up.rows() {
                for c in 0..2 {
                    assert!((up.row(i)[c] - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn resample_backwards_are_transposes() {
        // <A x, y> == <x, A^T y> for both resampling operators.
        let m = icosphere(2);
        let g = extract_graph(&m, 42).unwrap();
        let h = build_hierarchy(&m, &g, &[162, 42]).unwrap();
        let level = h.level(1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cols = 3;

        let x = random_features(&mut rng, level.vertex_count(), cols);
        let y = random_features(&mut rng, level.finer_count(), cols);
        let ax = upsample(level, &x);
        let aty = upsample_backward(level, &y);
        let lhs: f64 = ax.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(aty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);

        let xf = random_features(&mut rng, level.finer_count(), cols);
        let yc = random_features(&mut rng, level.vertex_count(), cols);
        let dx = downsample(level, &xf);
        let dty = downsample_backward(level, &yc);
        let lhs: f64 = dx.data().iter().zip(yc.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = xf.data().iter().zip(dty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn single_level_hierarchy_is_identity() {
        let m = icosphere(0);
        let n = m.vertex_count();
        let node_to_vertex: Vec<usize> = (0..n).collect();
        let g = DeformationGraph::new(
            m.vertices().to_vec(),
            node_to_vertex,
            m.edges().to_vec(),
        )
        .unwrap();
        let h = build_hierarchy(&m, &g, &[n]).unwrap();
        assert_eq!(h.graph_level(), 0);
        assert_eq!(h.level_counts(), vec![n]);
        let level = h.level(0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_features(&mut rng, n, 4);
        let down = downsample(level, &x);
        let up = upsample(level, &x);
        assert_eq!(down.data(), x.data());
        assert_eq!(up.data(), x.data());
    }

    #[test]
    fn level_count_validation() {
        let m = icosphere(1);
        let g = extract_graph(&m, 20).unwrap();
        assert!(matches!(
            build_hierarchy(&m, &g, &[]),
            Err(HierarchyError::LevelCounts(_))
        ));
        assert!(matches!(
            build_hierarchy(&m, &g, &[40, 20]),
            Err(HierarchyError::LevelCounts(_))
        ));
        assert!(matches!(
            build_hierarchy(&m, &g, &[42, 20, 20]),
            Err(HierarchyError::LevelCounts(_))
        ));
        // Graph count appearing only at level 3 is rejected.
        assert!(matches!(
            build_hierarchy(&m, &g, &[42, 36, 30, 20]),
            Err(HierarchyError::LevelCounts(_))
        ));
    }

    #[test]
    fn rebuild_is_deterministic() {
        let m = bar(5, 25, 0.1, 1.0);
        let g1 = extract_graph(&m, 60).unwrap();
        let g2 = extract_graph(&m, 60).unwrap();
        assert_eq!(g1, g2);
        let h1 = build_hierarchy(&m, &g1, &[500, 160, 60, 24]).unwrap();
        let h2 = build_hierarchy(&m, &g2, &[500, 160, 60, 24]).unwrap();
        assert_eq!(h1.graph_level(), h2.graph_level());
        for (a, b) in h1.levels().iter().zip(h2.levels()) {
            assert_eq!(a.select_indices(), b.select_indices());
            assert_eq!(a.up_weights(), b.up_weights());
            assert_eq!(a.mesh().vertices(), b.mesh().vertices());
            assert_eq!(a.mesh().faces(), b.mesh().faces());
        }
    }
}
