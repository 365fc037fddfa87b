//! Quadric edge collapse constrained so kept vertices are always a subset
//! of the input vertex set: a collapse moves one endpoint onto the other,
//! never onto a free optimal point.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector3;

use crate::mesh::Mesh;

use super::HierarchyError;

/// Reserved sentinel for forbidden collapses; strictly greater than any
/// finite cost and safe to compare without IEEE infinity arithmetic.
const FORBIDDEN: f64 = f64::MAX;

const BOUNDARY_WEIGHT: f64 = 1000.0;

/// Symmetric 4×4 error quadric stored as its 10 unique coefficients.
#[derive(Debug, Clone, Copy, Default)]
struct Quadric {
    // Row-major upper triangle of [[a,b,c,d],[b,e,f,g],[c,f,h,i],[d,g,i,j]].
    q: [f64; 10],
}

impl Quadric {
    fn from_plane(n: Vector3<f64>, d: f64, weight: f64) -> Self {
        let (x, y, z) = (n.x, n.y, n.z);
        Quadric {
            q: [
                weight * x * x,
                weight * x * y,
                weight * x * z,
                weight * x * d,
                weight * y * y,
                weight * y * z,
                weight * y * d,
                weight * z * z,
                weight * z * d,
                weight * d * d,
            ],
        }
    }

    fn add(&mut self, other: &Quadric) {
        for (a, b) in self.q.iter_mut().zip(&other.q) {
            *a += b;
        }
    }

    fn eval(&self, p: Vector3<f64>) -> f64 {
        let [a, b, c, d, e, f, g, h, i, j] = self.q;
        a * p.x * p.x
            + e * p.y * p.y
            + h * p.z * p.z
            + 2.0 * (b * p.x * p.y + c * p.x * p.z + f * p.y * p.z)
            + 2.0 * (d * p.x + g * p.y + i * p.z)
            + j
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: f64,
    a: usize,
    b: usize,
    keep: usize,
    stamp_a: u64,
    stamp_b: u64,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Cheapest first; ties resolved by (min endpoint, max endpoint) so rebuilds
// are deterministic, then by stamps to fully order duplicates.
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| self.a.cmp(&other.a))
            .then_with(|| self.b.cmp(&other.b))
            .then_with(|| self.stamp_a.cmp(&other.stamp_a))
            .then_with(|| self.stamp_b.cmp(&other.stamp_b))
            .then_with(|| self.keep.cmp(&other.keep))
    }
}

#[derive(Debug)]
pub(crate) struct SimplifyResult {
    /// Surviving input-mesh vertex indices, ascending.
    pub kept: Vec<usize>,
    /// Faces in local indices of `kept`.
    pub faces: Vec<[usize; 3]>,
}

struct State<'a> {
    positions: &'a [Vector3<f64>],
    protected: &'a [bool],
    quadrics: Vec<Quadric>,
    faces: Vec<[usize; 3]>,
    face_alive: Vec<bool>,
    vertex_faces: Vec<Vec<usize>>,
    alive: Vec<bool>,
    stamps: Vec<u64>,
    heap: BinaryHeap<std::cmp::Reverse<Candidate>>,
}

impl State<'_> {
    fn live_neighbors(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for &fi in &self.vertex_faces[v] {
            if !self.face_alive[fi] {
                continue;
            }
            for &w in &self.faces[fi] {
                if w != v {
                    out.push(w);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn push_edge(&mut self, a: usize, b: usize) {
        debug_assert!(a < b);
        if !self.alive[a] || !self.alive[b] {
            return;
        }
        let mut qsum = self.quadrics[a];
        qsum.add(&self.quadrics[b]);
        // Keeping a removes b and vice versa.
        let cost_keep_a = if self.protected[b] {
            FORBIDDEN
        } else {
            qsum.eval(self.positions[a]).max(0.0)
        };
        let cost_keep_b = if self.protected[a] {
            FORBIDDEN
        } else {
            qsum.eval(self.positions[b]).max(0.0)
        };
        if cost_keep_a == FORBIDDEN && cost_keep_b == FORBIDDEN {
            return;
        }
        let (cost, keep) = if cost_keep_a <= cost_keep_b {
            (cost_keep_a, a)
        } else {
            (cost_keep_b, b)
        };
        self.heap.push(std::cmp::Reverse(Candidate {
            cost,
            a,
            b,
            keep,
            stamp_a: self.stamps[a],
            stamp_b: self.stamps[b],
        }));
    }
}

/// Collapses edges until exactly `target` vertices remain. `protected`
/// vertices are never removed.
pub(crate) fn simplify(
    mesh: &Mesh,
    target: usize,
    protected: &[bool],
) -> Result<SimplifyResult, HierarchyError> {
    let n = mesh.vertex_count();
    assert_eq!(protected.len(), n, "protection mask length");
    if target >= n {
        return Err(HierarchyError::TargetOutOfRange { target, vertices: n });
    }
    let protected_count = protected.iter().filter(|&&p| p).count();
    if target < protected_count {
        return Err(HierarchyError::Infeasible(format!(
            "target {target} is below the {protected_count} protected vertices"
        )));
    }

    let positions = mesh.vertices();
    let faces: Vec<[usize; 3]> = mesh.faces().to_vec();
    let mut vertex_faces = vec![Vec::new(); n];
    for (fi, f) in faces.iter().enumerate() {
        for &v in f {
            vertex_faces[v].push(fi);
        }
    }

    // Plane quadrics, area weighted.
    let mut quadrics = vec![Quadric::default(); n];
    let mut areas = Vec::with_capacity(faces.len());
    for f in &faces {
        let (a, b, c) = (positions[f[0]], positions[f[1]], positions[f[2]]);
        let cross = (b - a).cross(&(c - a));
        areas.push(0.5 * cross.norm());
    }
    let mean_area = if areas.is_empty() {
        0.0
    } else {
        areas.iter().sum::<f64>() / areas.len() as f64
    };
    for (f, &area) in faces.iter().zip(&areas) {
        if area <= 0.0 {
            continue;
        }
        let (a, b, c) = (positions[f[0]], positions[f[1]], positions[f[2]]);
        let normal = (b - a).cross(&(c - a)).normalize();
        let q = Quadric::from_plane(normal, -normal.dot(&a), area);
        for &v in f {
            quadrics[v].add(&q);
        }
    }

    // Boundary preservation: each edge on exactly one face receives a
    // plane through the edge, perpendicular to that face.
    let mut edge_faces: std::collections::HashMap<(usize, usize), (usize, usize)> =
        std::collections::HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            let e = edge_faces.entry((a.min(b), a.max(b))).or_insert((0, fi));
            e.0 += 1;
        }
    }
    for (&(a, b), &(count, fi)) in &edge_faces {
        if count != 1 {
            continue;
        }
        if areas[fi] <= 0.0 {
            continue;
        }
        let f = &faces[fi];
        let (p, q, r) = (positions[f[0]], positions[f[1]], positions[f[2]]);
        let face_normal = (q - p).cross(&(r - p)).normalize();
        let edge_dir = positions[b] - positions[a];
        let m = face_normal.cross(&edge_dir);
        let norm = m.norm();
        if norm <= 0.0 {
            continue;
        }
        let m = m / norm;
        let q = Quadric::from_plane(m, -m.dot(&positions[a]), BOUNDARY_WEIGHT * mean_area);
        quadrics[a].add(&q);
        quadrics[b].add(&q);
    }

    let mut state = State {
        positions,
        protected,
        quadrics,
        face_alive: vec![true; faces.len()],
        faces,
        vertex_faces,
        alive: vec![true; n],
        stamps: vec![0; n],
        heap: BinaryHeap::new(),
    };

    for &(a, b) in mesh.edges() {
        state.push_edge(a, b);
    }

    let mut n_alive = n;
    while n_alive > target {
        let cand = match state.heap.pop() {
            Some(std::cmp::Reverse(c)) => c,
            None => {
                return Err(HierarchyError::Infeasible(format!(
                    "ran out of collapsible edges at {n_alive} vertices (target {target})"
                )));
            }
        };
        if !state.alive[cand.a]
            || !state.alive[cand.b]
            || state.stamps[cand.a] != cand.stamp_a
            || state.stamps[cand.b] != cand.stamp_b
        {
            continue;
        }
        debug_assert!(cand.cost < FORBIDDEN);
        let keep = cand.keep;
        let remove = if keep == cand.a { cand.b } else { cand.a };
        debug_assert!(!state.protected[remove]);

        let removed_quadric = state.quadrics[remove];
        state.quadrics[keep].add(&removed_quadric);
        state.stamps[keep] += 1;
        state.stamps[remove] += 1;
        state.alive[remove] = false;
        n_alive -= 1;

        let moved: Vec<usize> = state.vertex_faces[remove].clone();
        for fi in moved {
            if !state.face_alive[fi] {
                continue;
            }
            let f = &mut state.faces[fi];
            for slot in f.iter_mut() {
                if *slot == remove {
                    *slot = keep;
                }
            }
            let f = state.faces[fi];
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                state.face_alive[fi] = false;
            } else {
                state.vertex_faces[keep].push(fi);
            }
        }
        state.vertex_faces[remove].clear();

        for nb in state.live_neighbors(keep) {
            state.push_edge(keep.min(nb), keep.max(nb));
        }
    }

    let kept: Vec<usize> = (0..n).filter(|&v| state.alive[v]).collect();
    let mut local = vec![usize::MAX; n];
    for (li, &v) in kept.iter().enumerate() {
        local[v] = li;
    }
    let mut out_faces: Vec<[usize; 3]> = Vec::new();
    let mut seen: std::collections::HashSet<[usize; 3]> = std::collections::HashSet::new();
    for (fi, f) in state.faces.iter().enumerate() {
        if !state.face_alive[fi] {
            continue;
        }
        let mapped = [local[f[0]], local[f[1]], local[f[2]]];
        let mut key = mapped;
        key.sort_unstable();
        // Collapses can fold two faces onto the same vertex triple; keep one.
        if seen.insert(key) {
            out_faces.push(mapped);
        }
    }

    Ok(SimplifyResult { kept, faces: out_faces })
}

/// Closest point on triangle (a, b, c) to p, returned as barycentric
/// coordinates (clamped to the triangle, summing to 1).
pub(crate) fn closest_point_barycentric(
    p: Vector3<f64>,
    a: Vector3<f64>,
    b: Vector3<f64>,
    c: Vector3<f64>,
) -> [f64; 3] {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return [1.0, 0.0, 0.0];
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return [0.0, 1.0, 0.0];
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let denom = d1 - d3;
        let v = if denom.abs() > 0.0 { d1 / denom } else { 0.0 };
        return [1.0 - v, v, 0.0];
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return [0.0, 0.0, 1.0];
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let denom = d2 - d6;
        let w = if denom.abs() > 0.0 { d2 / denom } else { 0.0 };
        return [1.0 - w, 0.0, w];
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let denom = (d4 - d3) + (d5 - d6);
        let w = if denom.abs() > 0.0 { (d4 - d3) / denom } else { 0.0 };
        return [0.0, 1.0 - w, w];
    }

    let denom = va + vb + vc;
    debug_assert!(denom > 0.0);
    let v = vb / denom;
    let w = vc / denom;
    [1.0 - v - w, v, w]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::icosphere;

    #[test]
    fn simplify_hits_exact_target() {
        let m = icosphere(1); // 42 vertices
        let res = simplify(&m, 12, &vec![false; 42]).unwrap();
        assert_eq!(res.kept.len(), 12);
        assert!(!res.faces.is_empty());
        for f in &res.faces {
            assert!(f.iter().all(|&v| v < 12));
            assert!(f[0] != f[1] && f[1] != f[2] && f[0] != f[2]);
        }
    }

    #[test]
    fn kept_vertices_are_input_vertices() {
        let m = icosphere(1);
        let res = simplify(&m, 20, &vec![false; 42]).unwrap();
        let mut sorted = res.kept.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted, res.kept);
        assert!(res.kept.iter().all(|&v| v < 42));
    }

    #[test]
    fn protected_vertices_survive() {
        let m = icosphere(1);
        let mut protected = vec![false; 42];
        for v in [0, 7, 13, 25, 41] {
            protected[v] = true;
        }
        let res = simplify(&m, 10, &protected).unwrap();
        for v in [0, 7, 13, 25, 41] {
            assert!(res.kept.contains(&v), "protected vertex {v} was removed");
        }
    }

    #[test]
    fn target_below_protected_is_infeasible() {
        let m = icosphere(0);
        let mut protected = vec![false; 12];
        for p in protected.iter_mut().take(8) {
            *p = true;
        }
        assert!(matches!(
            simplify(&m, 5, &protected),
            Err(HierarchyError::Infeasible(_))
        ));
    }

    #[test]
    fn target_at_or_above_count_rejected() {
        let m = icosphere(0);
        assert!(matches!(
            simplify(&m, 12, &vec![false; 12]),
            Err(HierarchyError::TargetOutOfRange { .. })
        ));
    }

    #[test]
    fn deterministic_rebuild() {
        let m = icosphere(2);
        let a = simplify(&m, 40, &vec![false; 162]).unwrap();
        let b = simplify(&m, 40, &vec![false; 162]).unwrap();
        assert_eq!(a.kept, b.kept);
        assert_eq!(a.faces, b.faces);
    }

    #[test]
    fn closest_point_centroid_is_symmetric() {
        let a = Vector3::new(0.0, 0.0, 0.0);
        let b = Vector3::new(1.0, 0.0, 0.0);
        let c = Vector3::new(0.0, 1.0, 0.0);
        let centroid = (a + b + c) / 3.0;
        let bary = closest_point_barycentric(centroid, a, b, c);
        for w in bary {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn closest_point_clamps_to_vertices_and_edges() {
        let a = Vector3::new(0.0, 0.0, 0.0);
        let b = Vector3::new(1.0, 0.0, 0.0);
        let c = Vector3::new(0.0, 1.0, 0.0);
        // Beyond vertex a.
        let bary = closest_point_barycentric(Vector3::new(-1.0, -1.0, 0.3), a, b, c);
        assert_eq!(bary, [1.0, 0.0, 0.0]);
        // Past the ab edge, below.
        let bary = closest_point_barycentric(Vector3::new(0.5, -2.0, 0.0), a, b, c);
        assert!((bary[0] - 0.5).abs() < 1e-12);
        assert!((bary[1] - 0.5).abs() < 1e-12);
        assert_eq!(bary[2], 0.0);
    }

    #[test]
    fn closest_point_matches_grid_search() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let rv = |rng: &mut rand_chacha::ChaCha8Rng| {
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            };
            let (a, b, c, p) = (rv(&mut rng), rv(&mut rng), rv(&mut rng), rv(&mut rng));
            let bary = closest_point_barycentric(p, a, b, c);
            let closest = a * bary[0] + b * bary[1] + c * bary[2];
            let analytic = (p - closest).norm_squared();
            // Dense barycentric sampling can only beat the analytic point
            // by a discretization margin.
            let steps = 60;
            let mut best = f64::INFINITY;
            for i in 0..=steps {
                for j in 0..=(steps - i) {
                    let u = i as f64 / steps as f64;
                    let v = j as f64 / steps as f64;
                    let q = a * u + b * v + c * (1.0 - u - v);
                    best = best.min((p - q).norm_squared());
                }
            }
            assert!(analytic <= best + 1e-3, "analytic {analytic} vs grid {best}");
            assert!((bary[0] + bary[1] + bary[2] - 1.0).abs() < 1e-12);
            assert!(bary.iter().all(|&w| (-1e-12..=1.0 + 1e-12).contains(&w)));
        }
    }
}
