//! Spiral convolution: every vertex gathers features along a fixed spiral
//! ordering of its neighborhood (self, 1-ring, 2-ring, ...) and applies one
//! weight matrix per spiral slot. Orderings are deterministic: the 1-ring
//! starts at the smallest-index neighbor and follows face winding; outer
//! rings follow the previous ring's traversal order.

use std::collections::HashMap;

use crate::mesh::Mesh;
use crate::nn::{FeatureMap, NnError, Real};

/// Marker for padded spiral slots.
pub const SPIRAL_PAD: i64 = -1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpiralSupport {
    /// Per vertex: `length` entries, [`SPIRAL_PAD`] once the spiral ends.
    spirals: Vec<Vec<i64>>,
    length: usize,
    /// Vertices with no neighbors (spiral is self plus padding).
    isolated: Vec<usize>,
}

impl SpiralSupport {
    pub fn node_count(&self) -> usize {
        self.spirals.len()
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn spirals(&self) -> &[Vec<i64>] {
        &self.spirals
    }

    pub fn isolated(&self) -> &[usize] {
        &self.isolated
    }

    pub(crate) fn from_rows(spirals: Vec<Vec<i64>>, length: usize) -> Self {
        let isolated = spirals
            .iter()
            .enumerate()
            .filter(|(_, row)| row.len() < 2 || row[1] == SPIRAL_PAD)
            .map(|(i, _)| i)
            .collect();
        SpiralSupport { spirals, length, isolated }
    }
}

/// Ordered 1-ring of `v`: starts at the smallest-index neighbor, walks in
/// the direction induced by face winding, and on boundaries continues
/// backward from the start. Non-manifold leftovers append by index.
fn ordered_one_ring(v: usize, faces: &[[usize; 3]], incident: &[usize], adj: &[usize]) -> Vec<usize> {
    if adj.is_empty() {
        return Vec::new();
    }
    // succ[u] = w when some incident face winds (v, u, w).
    let mut succ: HashMap<usize, usize> = HashMap::new();
    let mut pred: HashMap<usize, usize> = HashMap::new();
    for &fi in incident {
        let f = faces[fi];
        let k = f.iter().position(|&x| x == v).expect("incident face contains vertex");
        let u = f[(k + 1) % 3];
        let w = f[(k + 2) % 3];
        // Conflicting windings on non-manifold fans: first face wins.
        succ.entry(u).or_insert(w);
        pred.entry(w).or_insert(u);
    }

    let start = *adj.iter().min().expect("non-empty ring");
    let mut ring = vec![start];
    let mut taken: std::collections::HashSet<usize> = [start].into();
    let mut cur = start;
    while let Some(&next) = succ.get(&cur) {
        if taken.contains(&next) {
            break;
        }
        ring.push(next);
        taken.insert(next);
        cur = next;
    }
    // Boundary fan: extend from the start against the winding.
    let mut cur = start;
    while let Some(&prev) = pred.get(&cur) {
        if taken.contains(&prev) {
            break;
        }
        ring.push(prev);
        taken.insert(prev);
        cur = prev;
    }
    for &u in adj {
        if !taken.contains(&u) {
            ring.push(u);
            taken.insert(u);
        }
    }
    ring
}

fn spiral_rings(mesh: &Mesh, v: usize, adjacency: &[Vec<usize>], incident: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let one_ring = ordered_one_ring(v, mesh.faces(), &incident[v], &adjacency[v]);
    let mut seen = vec![false; mesh.vertex_count()];
    seen[v] = true;
    for &u in &one_ring {
        seen[u] = true;
    }
    let mut rings = vec![vec![v], one_ring];
    loop {
        let prev = rings.last().unwrap();
        if prev.is_empty() {
            rings.pop();
            break;
        }
        let mut next = Vec::new();
        for &u in prev {
            // Neighbors in index order; the outer order follows the
            // previous ring's traversal.
            for &w in &adjacency[u] {
                if !seen[w] {
                    seen[w] = true;
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        rings.push(next);
    }
    rings
}

/// Builds length-`length` spiral orderings for every vertex.
pub fn build_spirals(mesh: &Mesh, length: usize) -> SpiralSupport {
    assert!(length >= 1, "spiral length must be at least 1");
    let adjacency = mesh.adjacency();
    let mut incident = vec![Vec::new(); mesh.vertex_count()];
    for (fi, f) in mesh.faces().iter().enumerate() {
        for &u in f {
            incident[u].push(fi);
        }
    }
    let mut spirals = Vec::with_capacity(mesh.vertex_count());
    for v in 0..mesh.vertex_count() {
        let mut flat: Vec<i64> = spiral_rings(mesh, v, &adjacency, &incident)
            .into_iter()
            .flatten()
            .map(|u| u as i64)
            .collect();
        flat.truncate(length);
        flat.resize(length, SPIRAL_PAD);
        spirals.push(flat);
    }
    SpiralSupport::from_rows(spirals, length)
}

/// Smallest length covering the full 2-ring (self + 1-ring + 2-ring) for at
/// least 95% of vertices.
pub fn default_spiral_length(mesh: &Mesh) -> usize {
    let adjacency = mesh.adjacency();
    let mut incident = vec![Vec::new(); mesh.vertex_count()];
    for (fi, f) in mesh.faces().iter().enumerate() {
        for &u in f {
            incident[u].push(fi);
        }
    }
    let mut sizes: Vec<usize> = (0..mesh.vertex_count())
        .map(|v| {
            spiral_rings(mesh, v, &adjacency, &incident)
                .iter()
                .take(3)
                .map(|r| r.len())
                .sum()
        })
        .collect();
    if sizes.is_empty() {
        return 1;
    }
    sizes.sort_unstable();
    let needed = ((0.95 * sizes.len() as f64).ceil() as usize).clamp(1, sizes.len());
    sizes[needed - 1].max(1)
}

fn check_spiral_shapes<T: Real>(
    support: &SpiralSupport,
    x: &FeatureMap<T>,
    weights: &[T],
    bias: &[T],
) -> Result<(usize, usize), NnError> {
    if x.rows() != support.node_count() {
        return Err(NnError::shape_mismatch(
            "spiral conv input rows",
            support.node_count(),
            x.rows(),
        ));
    }
    let f_in = x.cols();
    let f_out = bias.len();
    let expected = support.length() * f_out * f_in;
    if weights.len() != expected || f_out == 0 {
        return Err(NnError::shape_mismatch(
            "spiral conv weights",
            expected,
            weights.len(),
        ));
    }
    Ok((f_in, f_out))
}

/// y_n = Σ_s G_s · x_{n_s} + bias. `weights` is [S][F_out][F_in] row-major;
/// padded slots contribute nothing.
pub fn spiral_conv<T: Real>(
    support: &SpiralSupport,
    x: &FeatureMap<T>,
    weights: &[T],
    bias: &[T],
) -> Result<FeatureMap<T>, NnError> {
    let (f_in, f_out) = check_spiral_shapes(support, x, weights, bias)?;
    let mut y = FeatureMap::zeros(x.rows(), f_out);
    for (n, spiral) in support.spirals().iter().enumerate() {
        let out = y.row_mut(n);
        out.copy_from_slice(bias);
        for (s, &idx) in spiral.iter().enumerate() {
            if idx == SPIRAL_PAD {
                continue;
            }
            let xv = x.row(idx as usize);
            let g = &weights[s * f_out * f_in..(s + 1) * f_out * f_in];
            for o in 0..f_out {
                let row = &g[o * f_in..(o + 1) * f_in];
                let mut acc = T::zero();
                for (w, v) in row.iter().zip(xv) {
                    acc = acc + *w * *v;
                }
                out[o] = out[o] + acc;
            }
        }
    }
    Ok(y)
}

/// Reverse mode of [`spiral_conv`]: accumulates into `gw`/`gb` and returns
/// the input gradient.
pub fn spiral_conv_backward<T: Real>(
    support: &SpiralSupport,
    x: &FeatureMap<T>,
    weights: &[T],
    gy: &FeatureMap<T>,
    gw: &mut [T],
    gb: &mut [T],
) -> FeatureMap<T> {
    let (f_in, f_out) = check_spiral_shapes(support, x, weights, gb)
        .expect("spiral backward shapes must match forward");
    assert_eq!(gy.rows(), x.rows(), "upstream rows");
    assert_eq!(gy.cols(), f_out, "upstream cols");
    assert_eq!(gw.len(), weights.len(), "weight grad size");

    let mut gx = FeatureMap::zeros(x.rows(), f_in);
    for (n, spiral) in support.spirals().iter().enumerate() {
        let g_up = gy.row(n);
        for (dst, &g) in gb.iter_mut().zip(g_up) {
            *dst = *dst + g;
        }
        for (s, &idx) in spiral.iter().enumerate() {
            if idx == SPIRAL_PAD {
                continue;
            }
            let idx = idx as usize;
            let xv = x.row(idx);
            let base = s * f_out * f_in;
            for o in 0..f_out {
                let go = g_up[o];
                let wrow = &weights[base + o * f_in..base + (o + 1) * f_in];
                let gwrow = &mut gw[base + o * f_in..base + (o + 1) * f_in];
                let gxrow = gx.row_mut(idx);
                for i in 0..f_in {
                    gwrow[i] = gwrow[i] + go * xv[i];
                    gxrow[i] = gxrow[i] + go * wrow[i];
                }
            }
        }
    }
    gx
}
