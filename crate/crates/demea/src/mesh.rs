//! Triangle mesh representation and ASCII OBJ file IO.
//!
//! Vertex order is authoritative: graphs, hierarchies and convolution
//! supports all refer to vertices by their position in the file. Only `v`
//! and `f` records are honored; normals, texture coordinates and grouping
//! statements are ignored on read and never written.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    FaceIndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("face {face} repeats a vertex: [{0}, {1}, {2}]", .indices[0], .indices[1], .indices[2])]
    DegenerateFace { face: usize, indices: [usize; 3] },
    #[error("mesh has {got} vertices but at least {need} are required")]
    TooFewVertices { need: usize, got: usize },
    #[error("vertex count mismatch: expected {expected}, got {got}")]
    VertexCount { expected: usize, got: usize },
}

/// Triangle mesh with a derived undirected edge set.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
    edges: Vec<(usize, usize)>,
}

impl Mesh {
    /// Builds a mesh, validating face indices and deriving the edge set.
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i >= vertices.len() {
                    return Err(MeshError::FaceIndexOutOfRange {
                        face: fi,
                        index: i,
                        count: vertices.len(),
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::DegenerateFace {
                    face: fi,
                    indices: *f,
                });
            }
        }
        let edges = derive_edges(&faces);
        Ok(Mesh {
            vertices,
            faces,
            edges,
        })
    }

    /// Same topology, new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vector3<f64>>) -> Result<Self, MeshError> {
        if vertices.len() != self.vertices.len() {
            return Err(MeshError::VertexCount {
                expected: self.vertices.len(),
                got: vertices.len(),
            });
        }
        Ok(Mesh {
            vertices,
            faces: self.faces.clone(),
            edges: self.edges.clone(),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Undirected edges as (min, max) pairs, sorted, no duplicates.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbor lists per vertex, each sorted ascending.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        // Edges are sorted by (min, max), so each list is already ascending
        // for the first endpoint but not the second; sort to be safe.
        for n in &mut adj {
            n.sort_unstable();
        }
        adj
    }
}

fn derive_edges(faces: &[[usize; 3]]) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = faces
        .iter()
        .flat_map(|f| {
            [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]
                .into_iter()
                .map(|(a, b)| (a.min(b), a.max(b)))
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Scale proxies used to size skinning kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingMetrics {
    /// Exact maximum pairwise vertex distance.
    pub d_max: f64,
    /// Axis-aligned bounding box diagonal length.
    pub bbox_diagonal: f64,
}

/// Computes the exact pairwise maximum distance (O(N²)) and the bounding
/// box diagonal.
pub fn compute_metrics(mesh: &Mesh) -> Result<BoundingMetrics, MeshError> {
    let vs = mesh.vertices();
    if vs.len() < 2 {
        return Err(MeshError::TooFewVertices {
            need: 2,
            got: vs.len(),
        });
    }
    let mut d2_max = 0.0f64;
    for i in 0..vs.len() {
        for j in (i + 1)..vs.len() {
            let d2 = (vs[i] - vs[j]).norm_squared();
            if d2 > d2_max {
                d2_max = d2;
            }
        }
    }
    let mut lo = vs[0];
    let mut hi = vs[0];
    for v in vs {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    Ok(BoundingMetrics {
        d_max: d2_max.sqrt(),
        bbox_diagonal: (hi - lo).norm(),
    })
}

/// Reads an ASCII OBJ file with triangle faces.
pub fn load_mesh<P: AsRef<Path>>(path: P) -> Result<Mesh, MeshError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let io_err = |source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    };
    let parse_err = |line: usize, msg: String| MeshError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    // Faces resolve after the whole file is read so vertex declarations may
    // follow their uses; each entry keeps its line for error reporting.
    let mut raw_faces: Vec<([i64; 3], usize)> = Vec::new();

    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(io_err)?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut coords = [0.0f64; 3];
                for c in &mut coords {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| parse_err(lineno, "vertex needs 3 coordinates".into()))?;
                    *c = tok.parse().map_err(|_| {
                        parse_err(lineno, format!("bad vertex coordinate '{tok}'"))
                    })?;
                }
                if tokens.next().is_some() {
                    return Err(parse_err(lineno, "vertex has more than 3 coordinates".into()));
                }
                vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let refs: Vec<&str> = tokens.collect();
                if refs.len() != 3 {
                    return Err(parse_err(
                        lineno,
                        format!("face has {} vertices; only triangles are supported", refs.len()),
                    ));
                }
                let mut idx = [0i64; 3];
                for (slot, r) in idx.iter_mut().zip(&refs) {
                    // "i", "i/t", "i/t/n" and "i//n" all start with the
                    // vertex index.
                    let head = r.split('/').next().unwrap_or("");
                    *slot = head
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("bad face index '{r}'")))?;
                }
                raw_faces.push((idx, lineno));
            }
            // Normals, texcoords, materials, groups, comments, blank lines.
            _ => {}
        }
    }

    let mut faces = Vec::with_capacity(raw_faces.len());
    for (idx, lineno) in raw_faces {
        let mut face = [0usize; 3];
        for (slot, &i) in face.iter_mut().zip(&idx) {
            if i < 1 || i as usize > vertices.len() {
                return Err(parse_err(
                    lineno,
                    format!(
                        "face index {} out of range (mesh has {} vertices, indices are 1-based)",
                        i,
                        vertices.len()
                    ),
                ));
            }
            *slot = (i - 1) as usize;
        }
        if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
            return Err(parse_err(lineno, format!("degenerate face {:?}", idx)));
        }
        faces.push(face);
    }

    Mesh::new(vertices, faces)
}

/// Writes an ASCII OBJ file. Coordinates are printed in scientific notation
/// with 10 significant digits; faces are 1-indexed.
pub fn save_mesh<P: AsRef<Path>>(mesh: &Mesh, path: P) -> Result<(), MeshError> {
    let path = path.as_ref();
    let mut out = String::new();
    for v in mesh.vertices() {
        writeln!(out, "v {:.9e} {:.9e} {:.9e}", v.x, v.y, v.z).expect("string write");
    }
    for f in mesh.faces() {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).expect("string write");
    }
    let mut file = std::fs::File::create(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(out.as_bytes()).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })
}
