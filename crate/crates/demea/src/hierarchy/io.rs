//! Hierarchy serialization: a JSON manifest plus per-level OBJ meshes, a
//! binary interpolation-weight blob, and per-level convolution supports
//! (spiral orderings as i64 with -1 padding, Laplacians as COO triplets),
//! all little-endian and byte-deterministic for identical inputs.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::conv::{
    build_spectral, build_spirals, default_spiral_length, SpectralOperator, SpiralSupport,
    SPIRAL_PAD,
};
use crate::mesh::{load_mesh, save_mesh};

use super::{DeformationGraph, HierarchyError, HierarchyLevel, MeshHierarchy};

const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    level_counts: Vec<usize>,
    graph_level: usize,
    node_to_vertex: Vec<usize>,
    graph_edges: Vec<(usize, usize)>,
    /// Kept local indices into the previous level, one list per level >= 1.
    /// OBJ coordinates round at write precision, so the kept-vertex map is
    /// recorded explicitly instead of being recovered geometrically.
    select_indices: Vec<Vec<usize>>,
    /// Stored spiral length per level, for reference.
    spiral_lengths: Vec<usize>,
}

/// Per-level convolution supports stored alongside the hierarchy.
#[derive(Debug, Clone)]
pub struct LevelSupports {
    pub spirals: Vec<SpiralSupport>,
    pub laplacians: Vec<SpectralOperator>,
}

/// Builds spiral and spectral supports for every level. A fixed spiral
/// length applies to all levels; otherwise each level gets the smallest
/// length covering the full 2-ring for 95% of its vertices.
pub fn build_supports(hierarchy: &MeshHierarchy, spiral_length: Option<usize>) -> LevelSupports {
    let spirals = hierarchy
        .levels()
        .iter()
        .map(|level| {
            let s = spiral_length.unwrap_or_else(|| default_spiral_length(level.mesh()));
            build_spirals(level.mesh(), s)
        })
        .collect();
    let laplacians = hierarchy
        .levels()
        .iter()
        .map(|level| build_spectral(level.mesh()))
        .collect();
    LevelSupports { spirals, laplacians }
}

/// A hierarchy read back from disk together with its graph and supports.
#[derive(Debug)]
pub struct LoadedHierarchy {
    pub hierarchy: MeshHierarchy,
    pub graph: DeformationGraph,
    pub supports: LevelSupports,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HierarchyError + '_ {
    move |source| HierarchyError::Io { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, msg: impl Into<String>) -> HierarchyError {
    HierarchyError::Format { path: path.to_path_buf(), msg: msg.into() }
}

fn level_obj(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("level_{k}.obj"))
}

fn spirals_bin(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("spirals_{k}.bin"))
}

fn laplacian_bin(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("laplacian_{k}.bin"))
}

/// Writes the hierarchy, graph, and supports into `dir`. Identical inputs
/// produce byte-identical files.
pub fn save_hierarchy(
    dir: &Path,
    hierarchy: &MeshHierarchy,
    graph: &DeformationGraph,
    supports: &LevelSupports,
) -> Result<(), HierarchyError> {
    let levels = hierarchy.levels();
    assert_eq!(supports.spirals.len(), levels.len(), "spiral supports per level");
    assert_eq!(supports.laplacians.len(), levels.len(), "laplacians per level");
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    for (k, level) in levels.iter().enumerate() {
        save_mesh(level.mesh(), level_obj(dir, k))?;
    }

    // Interpolation weights: one table per level >= 1, concatenated.
    let weights_path = dir.join("up_weights.bin");
    {
        let mut buf = Vec::new();
        let werr = io_err(&weights_path);
        for level in &levels[1..] {
            buf.write_u32::<LittleEndian>(level.finer_count() as u32).map_err(&werr)?;
            for row in level.up_weights() {
                buf.write_u32::<LittleEndian>(row.len() as u32).map_err(&werr)?;
                for &(idx, w) in row {
                    buf.write_u32::<LittleEndian>(idx as u32).map_err(&werr)?;
                    buf.write_f32::<LittleEndian>(w as f32).map_err(&werr)?;
                }
            }
        }
        std::fs::write(&weights_path, buf).map_err(&werr)?;
    }

    for (k, spiral) in supports.spirals.iter().enumerate() {
        let path = spirals_bin(dir, k);
        let serr = io_err(&path);
        let mut buf = Vec::new();
        buf.write_u32::<LittleEndian>(spiral.node_count() as u32).map_err(&serr)?;
        buf.write_u32::<LittleEndian>(spiral.length() as u32).map_err(&serr)?;
        for row in spiral.spirals() {
            for &e in row {
                buf.write_i64::<LittleEndian>(e).map_err(&serr)?;
            }
        }
        std::fs::write(&path, buf).map_err(&serr)?;
    }

    for (k, lap) in supports.laplacians.iter().enumerate() {
        let path = laplacian_bin(dir, k);
        let lerr = io_err(&path);
        let triplets = lap.triplets();
        let mut buf = Vec::new();
        buf.write_u32::<LittleEndian>(lap.node_count() as u32).map_err(&lerr)?;
        buf.write_u32::<LittleEndian>(triplets.len() as u32).map_err(&lerr)?;
        for (i, j, w) in triplets {
            buf.write_u32::<LittleEndian>(i).map_err(&lerr)?;
            buf.write_u32::<LittleEndian>(j).map_err(&lerr)?;
            buf.write_f64::<LittleEndian>(w).map_err(&lerr)?;
        }
        std::fs::write(&path, buf).map_err(&lerr)?;
    }

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        level_counts: hierarchy.level_counts(),
        graph_level: hierarchy.graph_level(),
        node_to_vertex: graph.node_to_vertex().to_vec(),
        graph_edges: graph.graph_edges().to_vec(),
        select_indices: levels[1..].iter().map(|l| l.select_indices().to_vec()).collect(),
        spiral_lengths: supports.spirals.iter().map(|s| s.length()).collect(),
    };
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| format_err(&manifest_path, e.to_string()))?;
    std::fs::write(&manifest_path, json).map_err(io_err(&manifest_path))?;
    Ok(())
}

/// Reads a hierarchy saved by [`save_hierarchy`], validating counts and
/// index ranges.
pub fn load_hierarchy(dir: &Path) -> Result<LoadedHierarchy, HierarchyError> {
    let manifest_path = dir.join("manifest.json");
    let json = std::fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest =
        serde_json::from_str(&json).map_err(|e| format_err(&manifest_path, e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(format_err(
            &manifest_path,
            format!("unsupported version {}", manifest.version),
        ));
    }
    let n_levels = manifest.level_counts.len();
    if n_levels == 0 {
        return Err(format_err(&manifest_path, "no levels"));
    }
    if manifest.select_indices.len() != n_levels - 1
        || manifest.spiral_lengths.len() != n_levels
        || manifest.graph_level >= n_levels
    {
        return Err(format_err(&manifest_path, "inconsistent level bookkeeping"));
    }

    // Level meshes.
    let mut meshes = Vec::with_capacity(n_levels);
    for (k, &count) in manifest.level_counts.iter().enumerate() {
        let path = level_obj(dir, k);
        let mesh = load_mesh(&path)?;
        if mesh.vertex_count() != count {
            return Err(format_err(
                &path,
                format!("expected {count} vertices, found {}", mesh.vertex_count()),
            ));
        }
        meshes.push(mesh);
    }

    // Interpolation weight tables for levels >= 1.
    let weights_path = dir.join("up_weights.bin");
    let bytes = std::fs::read(&weights_path).map_err(io_err(&weights_path))?;
    let mut cursor = Cursor::new(bytes.as_slice());
    let werr = io_err(&weights_path);
    let mut up_weights_per_level = Vec::with_capacity(n_levels.saturating_sub(1));
    for k in 1..n_levels {
        let rows = cursor.read_u32::<LittleEndian>().map_err(&werr)? as usize;
        if rows != manifest.level_counts[k - 1] {
            return Err(format_err(
                &weights_path,
                format!("level {k}: expected {} rows, found {rows}", manifest.level_counts[k - 1]),
            ));
        }
        let mut table = Vec::with_capacity(rows);
        for _ in 0..rows {
            let entries = cursor.read_u32::<LittleEndian>().map_err(&werr)? as usize;
            if entries == 0 || entries > rows {
                return Err(format_err(&weights_path, format!("bad row size {entries}")));
            }
            let mut row = Vec::with_capacity(entries);
            for _ in 0..entries {
                let idx = cursor.read_u32::<LittleEndian>().map_err(&werr)? as usize;
                let w = cursor.read_f32::<LittleEndian>().map_err(&werr)? as f64;
                if idx >= manifest.level_counts[k] {
                    return Err(format_err(
                        &weights_path,
                        format!("weight index {idx} out of range at level {k}"),
                    ));
                }
                row.push((idx, w));
            }
            table.push(row);
        }
        up_weights_per_level.push(table);
    }
    if cursor.position() != bytes.len() as u64 {
        return Err(format_err(&weights_path, "trailing bytes"));
    }

    // Assemble levels: level 0 is self-referential identity.
    let n0 = manifest.level_counts[0];
    let mut levels = Vec::with_capacity(n_levels);
    let mut meshes = meshes.into_iter();
    levels.push(HierarchyLevel::from_parts(
        meshes.next().expect("level 0 mesh"),
        (0..n0).collect(),
        (0..n0).map(|i| vec![(i, 1.0)]).collect(),
        (0..n0).collect(),
    ));
    for (k, (mesh, up_weights)) in meshes.zip(up_weights_per_level).enumerate() {
        let k = k + 1;
        let select = manifest.select_indices[k - 1].clone();
        if select.len() != manifest.level_counts[k] {
            return Err(format_err(
                &manifest_path,
                format!("level {k}: select length {} != count", select.len()),
            ));
        }
        let prev: &HierarchyLevel = &levels[k - 1];
        let mut original = Vec::with_capacity(select.len());
        for &s in &select {
            if s >= prev.vertex_count() {
                return Err(format_err(
                    &manifest_path,
                    format!("level {k}: select index {s} out of range"),
                ));
            }
            original.push(prev.original_indices()[s]);
        }
        levels.push(HierarchyLevel::from_parts(mesh, select, up_weights, original));
    }

    // Graph from the manifest plus level-0 geometry.
    let level0 = levels[0].mesh();
    let mut node_positions = Vec::with_capacity(manifest.node_to_vertex.len());
    for &v in &manifest.node_to_vertex {
        if v >= level0.vertex_count() {
            return Err(format_err(
                &manifest_path,
                format!("node vertex {v} out of range"),
            ));
        }
        node_positions.push(level0.vertices()[v]);
    }
    let graph = DeformationGraph::new(
        node_positions,
        manifest.node_to_vertex.clone(),
        manifest.graph_edges.clone(),
    )?;

    // Node order within the graph level.
    let graph_level = manifest.graph_level;
    let node_local = {
        let level = &levels[graph_level];
        let mut local_of_orig = std::collections::HashMap::new();
        for (j, &orig) in level.original_indices().iter().enumerate() {
            local_of_orig.insert(orig, j);
        }
        let mut out = Vec::with_capacity(graph.node_count());
        for (i, orig) in graph.node_to_vertex().iter().enumerate() {
            match local_of_orig.get(orig) {
                Some(&j) => out.push(j),
                None => {
                    return Err(format_err(
                        &manifest_path,
                        format!("node {i} missing from graph level {graph_level}"),
                    ))
                }
            }
        }
        out
    };
    let hierarchy = MeshHierarchy::from_parts(levels, graph_level, node_local);

    // Convolution supports.
    let mut spirals = Vec::with_capacity(n_levels);
    for (k, &count) in manifest.level_counts.iter().enumerate() {
        let path = spirals_bin(dir, k);
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        let mut cursor = Cursor::new(bytes.as_slice());
        let serr = io_err(&path);
        let nodes = cursor.read_u32::<LittleEndian>().map_err(&serr)? as usize;
        let length = cursor.read_u32::<LittleEndian>().map_err(&serr)? as usize;
        if nodes != count || length != manifest.spiral_lengths[k] || length == 0 {
            return Err(format_err(&path, "spiral header mismatch"));
        }
        if bytes.len() != 8 + nodes * length * 8 {
            return Err(format_err(&path, "spiral table size mismatch"));
        }
        let mut rows = Vec::with_capacity(nodes);
        for v in 0..nodes {
            let mut row = Vec::with_capacity(length);
            let mut padded = false;
            for _ in 0..length {
                let e = cursor.read_i64::<LittleEndian>().map_err(&serr)?;
                if e == SPIRAL_PAD {
                    padded = true;
                } else if padded || e < 0 || e as usize >= count {
                    return Err(format_err(&path, format!("bad spiral entry {e}")));
                }
                row.push(e);
            }
            if row[0] != v as i64 {
                return Err(format_err(&path, format!("spiral {v} does not start at itself")));
            }
            rows.push(row);
        }
        spirals.push(SpiralSupport::from_rows(rows, length));
    }

    let mut laplacians = Vec::with_capacity(n_levels);
    for (k, &count) in manifest.level_counts.iter().enumerate() {
        let path = laplacian_bin(dir, k);
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        let mut cursor = Cursor::new(bytes.as_slice());
        let lerr = io_err(&path);
        let nodes = cursor.read_u32::<LittleEndian>().map_err(&lerr)? as usize;
        let nnz = cursor.read_u32::<LittleEndian>().map_err(&lerr)? as usize;
        if nodes != count || bytes.len() != 8 + nnz * 16 {
            return Err(format_err(&path, "laplacian header mismatch"));
        }
        let mut rows = vec![Vec::new(); nodes];
        let mut last: Option<(u32, u32)> = None;
        for _ in 0..nnz {
            let i = cursor.read_u32::<LittleEndian>().map_err(&lerr)?;
            let j = cursor.read_u32::<LittleEndian>().map_err(&lerr)?;
            let w = cursor.read_f64::<LittleEndian>().map_err(&lerr)?;
            if i as usize >= nodes || j as usize >= nodes {
                return Err(format_err(&path, "triplet index out of range"));
            }
            if let Some(prev) = last {
                if prev >= (i, j) {
                    return Err(format_err(&path, "triplets not strictly sorted"));
                }
            }
            last = Some((i, j));
            rows[i as usize].push((j as usize, w));
        }
        laplacians.push(SpectralOperator::from_rows(nodes, rows));
    }

    Ok(LoadedHierarchy {
        hierarchy,
        graph,
        supports: LevelSupports { spirals, laplacians },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{build_hierarchy, extract_graph, upsample};
    use crate::nn::FeatureMap;
    use crate::shapes::bar;

    fn build_example() -> (MeshHierarchy, DeformationGraph, LevelSupports) {
        let m = bar(5, 25, 0.1, 1.0);
        let g = extract_graph(&m, 60).unwrap();
        let h = build_hierarchy(&m, &g, &[500, 160, 60, 24]).unwrap();
        let s = build_supports(&h, None);
        (h, g, s)
    }

    fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|p| {
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&p).unwrap(),
                )
            })
            .collect()
    }

    #[test]
    fn save_load_round_trip_preserves_structure() {
        let (h, g, s) = build_example();
        let dir = tempfile::tempdir().unwrap();
        save_hierarchy(dir.path(), &h, &g, &s).unwrap();
        let loaded = load_hierarchy(dir.path()).unwrap();

        assert_eq!(loaded.hierarchy.level_counts(), h.level_counts());
        assert_eq!(loaded.hierarchy.graph_level(), h.graph_level());
        assert_eq!(loaded.hierarchy.node_local(), h.node_local());
        assert_eq!(loaded.graph.node_to_vertex(), g.node_to_vertex());
        assert_eq!(loaded.graph.graph_edges(), g.graph_edges());
        for (a, b) in loaded.hierarchy.levels().iter().zip(h.levels()) {
            assert_eq!(a.select_indices(), b.select_indices());
            assert_eq!(a.original_indices(), b.original_indices());
            assert_eq!(a.mesh().faces(), b.mesh().faces());
            // Weights round through f32.
            for (ra, rb) in a.up_weights().iter().zip(b.up_weights()) {
                assert_eq!(ra.len(), rb.len());
                for (&(ia, wa), &(ib, wb)) in ra.iter().zip(rb) {
                    assert_eq!(ia, ib);
                    assert_eq!(wa, wb as f32 as f64);
                }
            }
        }
        for (a, b) in loaded.supports.spirals.iter().zip(&s.spirals) {
            assert_eq!(a, b);
        }
        for (a, b) in loaded.supports.laplacians.iter().zip(&s.laplacians) {
            assert_eq!(a, b);
        }
        // Graph nodes coincide with loaded level-0 vertices.
        loaded.graph.validate_against(loaded.hierarchy.level(0).mesh()).unwrap();
    }

    #[test]
    fn loaded_weights_still_partition_unity() {
        let (h, g, s) = build_example();
        let dir = tempfile::tempdir().unwrap();
        save_hierarchy(dir.path(), &h, &g, &s).unwrap();
        let loaded = load_hierarchy(dir.path()).unwrap();
        for level in &loaded.hierarchy.levels()[1..] {
            let ones = FeatureMap::from_vec(
                level.vertex_count(),
                1,
                vec![1.0f64; level.vertex_count()],
            );
            let up = upsample(level, &ones);
            for i in 0..up.rows() {
                assert!((up.row(i)[0] - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rebuild_and_resave_is_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        {
            let (h, g, s) = build_example();
            save_hierarchy(dir_a.path(), &h, &g, &s).unwrap();
        }
        {
            let (h, g, s) = build_example();
            save_hierarchy(dir_b.path(), &h, &g, &s).unwrap();
        }
        let a = dir_bytes(dir_a.path());
        let b = dir_bytes(dir_b.path());
        assert_eq!(a.len(), b.len());
        for ((name_a, bytes_a), (name_b, bytes_b)) in a.iter().zip(&b) {
            assert_eq!(name_a, name_b);
            assert_eq!(bytes_a, bytes_b, "file {name_a} differs");
        }
    }

    #[test]
    fn truncated_weights_rejected() {
        let (h, g, s) = build_example();
        let dir = tempfile::tempdir().unwrap();
        save_hierarchy(dir.path(), &h, &g, &s).unwrap();
        let path = dir.path().join("up_weights.bin");
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(load_hierarchy(dir.path()).is_err());
    }

    #[test]
    fn manifest_mismatch_rejected() {
        let (h, g, s) = build_example();
        let dir = tempfile::tempdir().unwrap();
        save_hierarchy(dir.path(), &h, &g, &s).unwrap();
        let path = dir.path().join("manifest.json");
        let json = std::fs::read_to_string(&path).unwrap();
        let tampered = json.replace("\"graph_level\": 2", "\"graph_level\": 9");
        assert_ne!(json, tampered);
        std::fs::write(&path, tampered).unwrap();
        assert!(matches!(
            load_hierarchy(dir.path()),
            Err(HierarchyError::Format { .. })
        ));
    }
}
