//! Chebyshev spectral convolution on the scaled normalized graph
//! Laplacian. With λ_max bounded by 2, the scaled operator is
//! L̃ = L − I = −D^{−1/2}·A·D^{−1/2}, whose spectrum lies in [−1, 1].

use crate::mesh::Mesh;
use crate::nn::{real, FeatureMap, NnError, Real};

/// Sparse symmetric operator L̃ stored row-wise. Isolated vertices have an
/// identity Laplacian row, hence an empty L̃ row.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOperator {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SpectralOperator {
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub(crate) fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        SpectralOperator { n, rows }
    }

    /// Sorted COO triplets (row, col, value) of L̃.
    pub fn triplets(&self) -> Vec<(u32, u32, f64)> {
        let mut out = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                out.push((i as u32, j as u32, w));
            }
        }
        out
    }

    /// y = L̃·x, evaluated in the feature precision.
    pub fn matvec<T: Real>(&self, x: &FeatureMap<T>) -> FeatureMap<T> {
        assert_eq!(x.rows(), self.n, "matvec rows");
        let cols = x.cols();
        let mut y = FeatureMap::zeros(self.n, cols);
        for (i, row) in self.rows.iter().enumerate() {
            let out = y.row_mut(i);
            for &(j, w) in row {
                let w = real::<T>(w);
                let src = x.row(j);
                for c in 0..cols {
                    out[c] = out[c] + w * src[c];
                }
            }
        }
        y
    }
}

/// Builds L̃ from an explicit edge list over `n` vertices.
pub fn build_spectral_from_edges(n: usize, edges: &[(usize, usize)]) -> SpectralOperator {
    let mut adjacency = vec![Vec::new(); n];
    for &(a, b) in edges {
        assert!(a < n && b < n && a != b, "invalid edge ({a}, {b})");
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }
    let degrees: Vec<f64> = adjacency.iter().map(|l| l.len() as f64).collect();
    let rows = adjacency
        .iter()
        .enumerate()
        .map(|(i, list)| {
            list.iter()
                .map(|&j| (j, -1.0 / (degrees[i] * degrees[j]).sqrt()))
                .collect()
        })
        .collect();
    SpectralOperator::from_rows(n, rows)
}

/// Builds L̃ for a hierarchy level mesh.
pub fn build_spectral(mesh: &Mesh) -> SpectralOperator {
    build_spectral_from_edges(mesh.vertex_count(), mesh.edges())
}

fn check_spectral_shapes<T: Real>(
    op: &SpectralOperator,
    x: &FeatureMap<T>,
    theta: &[T],
    bias: &[T],
    order: usize,
) -> Result<(usize, usize), NnError> {
    if x.rows() != op.node_count() {
        return Err(NnError::shape_mismatch(
            "spectral conv input rows",
            op.node_count(),
            x.rows(),
        ));
    }
    let f_in = x.cols();
    let f_out = bias.len();
    let expected = order * f_in * f_out;
    if order == 0 || f_out == 0 || theta.len() != expected {
        return Err(NnError::shape_mismatch(
            "spectral conv coefficients",
            expected,
            theta.len(),
        ));
    }
    Ok((f_in, f_out))
}

/// Applies X_k·θ_k into `y`, with X_k of shape [N, F_in] and θ_k row-major
/// [F_in][F_out].
fn accumulate_term<T: Real>(y: &mut FeatureMap<T>, xk: &FeatureMap<T>, theta_k: &[T], f_out: usize) {
    for n in 0..xk.rows() {
        let xv = xk.row(n);
        let out = y.row_mut(n);
        for (i, &xi) in xv.iter().enumerate() {
            let trow = &theta_k[i * f_out..(i + 1) * f_out];
            for o in 0..f_out {
                out[o] = out[o] + xi * trow[o];
            }
        }
    }
}

/// y = Σ_{k<K} T_k(L̃)·x·θ_k + bias with the Chebyshev recurrence
/// X₀ = x, X₁ = L̃x, X_k = 2·L̃·X_{k−1} − X_{k−2}.
pub fn spectral_conv<T: Real>(
    op: &SpectralOperator,
    x: &FeatureMap<T>,
    theta: &[T],
    bias: &[T],
    order: usize,
) -> Result<FeatureMap<T>, NnError> {
    let (f_in, f_out) = check_spectral_shapes(op, x, theta, bias, order)?;
    let mut y = FeatureMap::zeros(x.rows(), f_out);
    for n in 0..x.rows() {
        y.row_mut(n).copy_from_slice(bias);
    }
    let block = f_in * f_out;
    accumulate_term(&mut y, x, &theta[0..block], f_out);
    if order == 1 {
        return Ok(y);
    }
    let mut prev = x.clone();
    let mut cur = op.matvec(x);
    accumulate_term(&mut y, &cur, &theta[block..2 * block], f_out);
    for k in 2..order {
        let mut next = op.matvec(&cur);
        for (n, p) in next.data_mut().iter_mut().zip(prev.data()) {
            *n = *n + *n - *p;
        }
        accumulate_term(&mut y, &next, &theta[k * block..(k + 1) * block], f_out);
        prev = cur;
        cur = next;
    }
    Ok(y)
}

/// Reverse mode of [`spectral_conv`]: accumulates into `gtheta`/`gb` and
/// returns the input gradient. The input gradient
/// Σ_k T_k(L̃)·(gy·θ_kᵀ) is evaluated with the Clenshaw recurrence, using
/// the symmetry of T_k(L̃).
pub fn spectral_conv_backward<T: Real>(
    op: &SpectralOperator,
    x: &FeatureMap<T>,
    theta: &[T],
    order: usize,
    gy: &FeatureMap<T>,
    gtheta: &mut [T],
    gb: &mut [T],
) -> FeatureMap<T> {
    let (f_in, f_out) = check_spectral_shapes(op, x, theta, gb, order)
        .expect("spectral backward shapes must match forward");
    assert_eq!(gy.rows(), x.rows(), "upstream rows");
    assert_eq!(gy.cols(), f_out, "upstream cols");
    assert_eq!(gtheta.len(), theta.len(), "theta grad size");
    let block = f_in * f_out;

    for n in 0..gy.rows() {
        for (dst, &g) in gb.iter_mut().zip(gy.row(n)) {
            *dst = *dst + g;
        }
    }

    // gθ_k = X_kᵀ·gy, recomputing the X_k recurrence.
    // ḡ_k = gy·θ_kᵀ collected for the Clenshaw pass below.
    let mut bar: Vec<FeatureMap<T>> = Vec::with_capacity(order);
    let mut xk = x.clone();
    let mut prev: Option<FeatureMap<T>> = None;
    for k in 0..order {
        if k == 1 {
            let next = op.matvec(&xk);
            prev = Some(std::mem::replace(&mut xk, next));
        } else if k >= 2 {
            let mut next = op.matvec(&xk);
            let p = prev.as_ref().expect("recurrence history");
            for (n, q) in next.data_mut().iter_mut().zip(p.data()) {
                *n = *n + *n - *q;
            }
            prev = Some(std::mem::replace(&mut xk, next));
        }
        let theta_k = &theta[k * block..(k + 1) * block];
        let gtheta_k = &mut gtheta[k * block..(k + 1) * block];
        let mut bar_k = FeatureMap::zeros(x.rows(), f_in);
        for n in 0..x.rows() {
            let g_up = gy.row(n);
            let xv = xk.row(n);
            let bar_row = bar_k.row_mut(n);
            for i in 0..f_in {
                let trow = &theta_k[i * f_out..(i + 1) * f_out];
                let gtrow = &mut gtheta_k[i * f_out..(i + 1) * f_out];
                let mut acc = T::zero();
                for o in 0..f_out {
                    gtrow[o] = gtrow[o] + xv[i] * g_up[o];
                    acc = acc + trow[o] * g_up[o];
                }
                bar_row[i] = acc;
            }
        }
        bar.push(bar_k);
    }

    // Clenshaw: b_k = ḡ_k + 2·L̃·b_{k+1} − b_{k+2}; gx = ḡ_0 + L̃·b_1 − b_2.
    let rows = x.rows();
    let mut b_next = FeatureMap::zeros(rows, f_in);
    let mut b_cur = FeatureMap::zeros(rows, f_in);
    for k in (1..order).rev() {
        let mut b = op.matvec(&b_cur);
        for ((dst, &g), &bn) in b.data_mut().iter_mut().zip(bar[k].data()).zip(b_next.data()) {
            *dst = *dst + *dst + g - bn;
        }
        b_next = std::mem::replace(&mut b_cur, b);
    }
    let mut gx = op.matvec(&b_cur);
    for ((dst, &g), &bn) in gx.data_mut().iter_mut().zip(bar[0].data()).zip(b_next.data()) {
        *dst = *dst + g - bn;
    }
    gx
}
