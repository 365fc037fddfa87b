//! Procedural template meshes for tests, examples, and the synthetic
//! dataset generator.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::mesh::Mesh;

/// Icosphere with `subdivisions` rounds of edge splitting; vertex counts
/// are 12, 42, 162, 642, ...
pub fn icosphere(subdivisions: usize) -> Mesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = vec![
        Vector3::new(-1.0, phi, 0.0),
        Vector3::new(1.0, phi, 0.0),
        Vector3::new(-1.0, -phi, 0.0),
        Vector3::new(1.0, -phi, 0.0),
        Vector3::new(0.0, -1.0, phi),
        Vector3::new(0.0, 1.0, phi),
        Vector3::new(0.0, -1.0, -phi),
        Vector3::new(0.0, 1.0, -phi),
        Vector3::new(phi, 0.0, -1.0),
        Vector3::new(phi, 0.0, 1.0),
        Vector3::new(-phi, 0.0, -1.0),
        Vector3::new(-phi, 0.0, 1.0),
    ]
    .into_iter()
    .map(|v| v.normalize())
    .collect();

    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0usize; 3];
            for (k, (a, b)) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])].into_iter().enumerate() {
                let key = (a.min(b), a.max(b));
                mid[k] = *midpoints.entry(key).or_insert_with(|| {
                    let p = ((vertices[a] + vertices[b]) * 0.5).normalize();
                    vertices.push(p);
                    vertices.len() - 1
                });
            }
            next_faces.push([f[0], mid[0], mid[2]]);
            next_faces.push([f[1], mid[1], mid[0]]);
            next_faces.push([f[2], mid[2], mid[1]]);
            next_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = next_faces;
    }

    Mesh::new(vertices, faces).expect("icosphere construction is valid")
}

/// Sphere from `rings` latitude bands and `segments` meridians;
/// `rings * segments + 2` vertices including the two poles.
pub fn uv_sphere(rings: usize, segments: usize, radius: f64) -> Mesh {
    assert!(rings >= 1 && segments >= 3);
    let mut vertices = Vec::with_capacity(rings * segments + 2);
    vertices.push(Vector3::new(0.0, radius, 0.0));
    for r in 0..rings {
        let theta = std::f64::consts::PI * (r + 1) as f64 / (rings + 1) as f64;
        for s in 0..segments {
            let phi = std::f64::consts::TAU * s as f64 / segments as f64;
            vertices.push(Vector3::new(
                radius * theta.sin() * phi.cos(),
                radius * theta.cos(),
                radius * theta.sin() * phi.sin(),
            ));
        }
    }
    vertices.push(Vector3::new(0.0, -radius, 0.0));
    let south = vertices.len() - 1;

    let at = |r: usize, s: usize| 1 + r * segments + (s % segments);
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, at(0, s + 1), at(0, s)]);
    }
    for r in 0..rings - 1 {
        for s in 0..segments {
            let (a, b, c, d) = (at(r, s), at(r, s + 1), at(r + 1, s + 1), at(r + 1, s));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    for s in 0..segments {
        faces.push([south, at(rings - 1, s), at(rings - 1, s + 1)]);
    }
    Mesh::new(vertices, faces).expect("uv sphere construction is valid")
}

/// Open-ended bar: a square cross-section swept along the x axis. The
/// cross-section has `side_segments` edges per side (perimeter of
/// `4 * side_segments` vertices); the sweep has `length_segments` rings.
/// Total vertices: `4 * side_segments * length_segments`. The two end
/// rings are boundary loops.
pub fn bar(side_segments: usize, length_segments: usize, half_width: f64, length: f64) -> Mesh {
    assert!(side_segments >= 1 && length_segments >= 2);
    let perimeter = 4 * side_segments;
    // Walk the square cross-section counterclockwise in the yz plane.
    let mut profile = Vec::with_capacity(perimeter);
    let w = half_width;
    let step = 2.0 * w / side_segments as f64;
    for i in 0..side_segments {
        profile.push((-w + i as f64 * step, -w));
    }
    for i in 0..side_segments {
        profile.push((w, -w + i as f64 * step));
    }
    for i in 0..side_segments {
        profile.push((w - i as f64 * step, w));
    }
    for i in 0..side_segments {
        profile.push((-w, w - i as f64 * step));
    }

    let mut vertices = Vec::with_capacity(perimeter * length_segments);
    for r in 0..length_segments {
        let x = length * (r as f64 / (length_segments - 1) as f64 - 0.5);
        for &(y, z) in &profile {
            vertices.push(Vector3::new(x, y, z));
        }
    }

    let at = |r: usize, p: usize| r * perimeter + (p % perimeter);
    let mut faces = Vec::new();
    for r in 0..length_segments - 1 {
        for p in 0..perimeter {
            let (a, b, c, d) = (at(r, p), at(r, p + 1), at(r + 1, p + 1), at(r + 1, p));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    Mesh::new(vertices, faces).expect("bar construction is valid")
}
