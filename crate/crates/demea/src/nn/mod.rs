//! Dense-tensor machinery for the autoencoder: feature maps, a named
//! parameter store with Adam state, fully connected and ELU kernels, the
//! two ℓ1 losses, and binary checkpoints.
//!
//! Layers follow a fixed feed-forward composition, so there is no tape:
//! each layer's backward receives the layer input it cached and writes
//! parameter gradients into a [`GradStore`] whose slots mirror the
//! [`ParameterStore`]. Every kernel is generic over the scalar; the model
//! runs at `f64` in memory while checkpoints serialize values as `f32`.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use nalgebra::Vector3;
use rand::Rng;
use thiserror::Error;

/// Scalar type for network features and parameters.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Default
    + Send
    + Sync
    + 'static
{
    fn to_f64_val(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an f64 constant into the active scalar type.
pub fn real<T: Real>(x: f64) -> T {
    num_traits::FromPrimitive::from_f64(x).expect("finite f64 converts")
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad checkpoint {path}: {msg}")]
    Checkpoint {
        path: std::path::PathBuf,
        msg: String,
    },
}

impl NnError {
    pub fn shape_mismatch(
        what: &'static str,
        expected: impl std::fmt::Display,
        got: impl std::fmt::Display,
    ) -> Self {
        NnError::ShapeMismatch {
            what,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}

/// Row-major (rows × cols) feature tensor; rows index nodes or vertices,
/// cols index channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> FeatureMap<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        FeatureMap {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(rows * cols, data.len(), "feature map size mismatch");
        FeatureMap { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Reinterprets the buffer with a new shape of identical length.
    pub fn reshaped(mut self, rows: usize, cols: usize) -> Self {
        assert_eq!(rows * cols, self.data.len(), "reshape size mismatch");
        self.rows = rows;
        self.cols = cols;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Vertex positions as a (N × 3) feature map.
    pub fn from_vertices(vs: &[Vector3<f64>]) -> Self {
        let mut data = Vec::with_capacity(vs.len() * 3);
        for v in vs {
            data.push(real::<T>(v.x));
            data.push(real::<T>(v.y));
            data.push(real::<T>(v.z));
        }
        FeatureMap {
            rows: vs.len(),
            cols: 3,
            data,
        }
    }

    /// Rows of a 3-channel map as f64 vectors.
    pub fn to_vertices(&self) -> Vec<Vector3<f64>> {
        assert_eq!(self.cols, 3, "expected a 3-channel map");
        (0..self.rows)
            .map(|i| {
                let r = self.row(i);
                Vector3::new(r[0].to_f64_val(), r[1].to_f64_val(), r[2].to_f64_val())
            })
            .collect()
    }
}

/// Handle into a [`ParameterStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub(crate) struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

/// Weight initialization schemes.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    /// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
    Glorot { fan_in: usize, fan_out: usize },
}

/// Named parameter tensors with gradient accumulators and Adam moments.
#[derive(Debug, Clone)]
pub struct ParameterStore<T: Real> {
    params: Vec<Param<T>>,
    step: u64,
}

impl<T: Real> Default for ParameterStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore {
            params: Vec::new(),
            step: 0,
        }
    }

    /// Registers a tensor. Names must be unique; they key the checkpoint
    /// format.
    pub fn register<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        shape: &[usize],
        init: Init,
        rng: &mut R,
    ) -> ParamId {
        assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name:?}"
        );
        let len: usize = shape.iter().product();
        let value = match init {
            Init::Zeros => vec![T::zero(); len],
            Init::Glorot { fan_in, fan_out } => {
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..len)
                    .map(|_| real::<T>(rng.gen_range(-a..a)))
                    .collect()
            }
        };
        self.params.push(Param {
            name: name.to_string(),
            shape: shape.to_vec(),
            value,
            grad: vec![T::zero(); len],
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &[T] {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[T] {
        &self.params[id.0].grad
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.params[id.0].shape
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub(crate) fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    /// Fresh gradient buffer with one slot per parameter.
    pub fn new_grad_store(&self) -> GradStore<T> {
        GradStore {
            slots: self
                .params
                .iter()
                .map(|p| vec![T::zero(); p.value.len()])
                .collect(),
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    /// Adds `scale · g` into the store's gradient accumulators.
    pub fn accumulate(&mut self, g: &GradStore<T>, scale: T) {
        assert_eq!(g.slots.len(), self.params.len(), "grad store mismatch");
        for (p, slot) in self.params.iter_mut().zip(&g.slots) {
            for (acc, &gi) in p.grad.iter_mut().zip(slot) {
                *acc = *acc + scale * gi;
            }
        }
    }

    pub fn total_value_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Per-sample gradient buffer; slots parallel the parameter store so batch
/// elements can backpropagate independently and be reduced in a fixed
/// order.
#[derive(Debug, Clone)]
pub struct GradStore<T> {
    slots: Vec<Vec<T>>,
}

impl<T: Real> GradStore<T> {
    pub fn slot_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.slots[id.0]
    }

    pub fn slot(&self, id: ParamId) -> &[T] {
        &self.slots[id.0]
    }

    /// Disjoint mutable views of two slots, e.g. a layer's weight and bias.
    pub fn slot_pair_mut(&mut self, a: ParamId, b: ParamId) -> (&mut [T], &mut [T]) {
        assert_ne!(a.0, b.0, "slot pair must be distinct");
        if a.0 < b.0 {
            let (lo, hi) = self.slots.split_at_mut(b.0);
            (&mut lo[a.0], &mut hi[0])
        } else {
            let (lo, hi) = self.slots.split_at_mut(a.0);
            (&mut hi[0], &mut lo[b.0])
        }
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update applied in place; gradients are zeroed
/// afterwards.
pub fn adam_step<T: Real>(store: &mut ParameterStore<T>, hp: AdamParams) {
    store.step += 1;
    let t = store.step as i32;
    let b1 = real::<T>(hp.beta1);
    let b2 = real::<T>(hp.beta2);
    let one = T::one();
    let bc1 = real::<T>(1.0 - hp.beta1.powi(t));
    let bc2 = real::<T>(1.0 - hp.beta2.powi(t));
    let lr = real::<T>(hp.lr);
    let eps = real::<T>(hp.eps);
    for p in &mut store.params {
        for i in 0..p.value.len() {
            let g = p.grad[i];
            p.m[i] = b1 * p.m[i] + (one - b1) * g;
            p.v[i] = b2 * p.v[i] + (one - b2) * g * g;
            let m_hat = p.m[i] / bc1;
            let v_hat = p.v[i] / bc2;
            p.value[i] = p.value[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
        p.grad.fill(T::zero());
    }
}

/// y = Wx + b with W stored row-major (out_dim × in_dim).
pub fn fc_forward<T: Real>(w: &[T], b: &[T], x: &[T]) -> Vec<T> {
    let out_dim = b.len();
    let in_dim = x.len();
    assert_eq!(w.len(), out_dim * in_dim, "fc weight shape");
    let mut y = b.to_vec();
    for o in 0..out_dim {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let mut acc = T::zero();
        for i in 0..in_dim {
            acc = acc + row[i] * x[i];
        }
        y[o] = y[o] + acc;
    }
    y
}

/// Accumulates dW, db into the provided buffers and returns dx.
pub fn fc_backward<T: Real>(
    w: &[T],
    x: &[T],
    gy: &[T],
    gw: &mut [T],
    gb: &mut [T],
) -> Vec<T> {
    let out_dim = gy.len();
    let in_dim = x.len();
    assert_eq!(w.len(), out_dim * in_dim, "fc weight shape");
    assert_eq!(gw.len(), w.len(), "fc weight grad shape");
    assert_eq!(gb.len(), out_dim, "fc bias grad shape");
    let mut gx = vec![T::zero(); in_dim];
    for o in 0..out_dim {
        let g = gy[o];
        gb[o] = gb[o] + g;
        let wrow = &w[o * in_dim..(o + 1) * in_dim];
        let gwrow = &mut gw[o * in_dim..(o + 1) * in_dim];
        for i in 0..in_dim {
            gwrow[i] = gwrow[i] + g * x[i];
            gx[i] = gx[i] + g * wrow[i];
        }
    }
    gx
}

pub fn elu_scalar<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp() - T::one()
    }
}

pub fn elu_grad_scalar<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        x.exp()
    }
}

pub fn elu_forward<T: Real>(x: &FeatureMap<T>) -> FeatureMap<T> {
    let data = x.data().iter().map(|&v| elu_scalar(v)).collect();
    FeatureMap::from_vec(x.rows(), x.cols(), data)
}

pub fn elu_backward<T: Real>(x: &FeatureMap<T>, gy: &FeatureMap<T>) -> FeatureMap<T> {
    assert_eq!(x.rows(), gy.rows());
    assert_eq!(x.cols(), gy.cols());
    let data = x
        .data()
        .iter()
        .zip(gy.data())
        .map(|(&xi, &gi)| gi * elu_grad_scalar(xi))
        .collect();
    FeatureMap::from_vec(x.rows(), x.cols(), data)
}

fn l1_sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean over vertices of the 1-norm of the difference; the gradient uses
/// sign(0) = 0.
pub fn l1_vertex_loss(
    predicted: &[Vector3<f64>],
    target: &[Vector3<f64>],
) -> Result<(f64, Vec<Vector3<f64>>), NnError> {
    if predicted.len() != target.len() || predicted.is_empty() {
        return Err(NnError::ShapeMismatch {
            what: "l1_vertex_loss",
            expected: format!("{} nonempty vertices", target.len()),
            got: predicted.len().to_string(),
        });
    }
    let n = predicted.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(predicted.len());
    for (p, t) in predicted.iter().zip(target) {
        let d = p - t;
        loss += d.x.abs() + d.y.abs() + d.z.abs();
        grad.push(Vector3::new(l1_sign(d.x), l1_sign(d.y), l1_sign(d.z)) / n);
    }
    Ok((loss / n, grad))
}

/// Mean over graph nodes of the 1-norm against the target vertex each node
/// is anchored to.
pub fn l1_graph_loss(
    node_positions: &[Vector3<f64>],
    node_to_vertex: &[usize],
    target_vertices: &[Vector3<f64>],
) -> Result<(f64, Vec<Vector3<f64>>), NnError> {
    if node_positions.len() != node_to_vertex.len() || node_positions.is_empty() {
        return Err(NnError::ShapeMismatch {
            what: "l1_graph_loss",
            expected: format!("{} nonempty nodes", node_to_vertex.len()),
            got: node_positions.len().to_string(),
        });
    }
    let l = node_positions.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(node_positions.len());
    for (p, &iv) in node_positions.iter().zip(node_to_vertex) {
        if iv >= target_vertices.len() {
            return Err(NnError::ShapeMismatch {
                what: "l1_graph_loss",
                expected: format!("vertex index < {}", target_vertices.len()),
                got: iv.to_string(),
            });
        }
        let d = p - target_vertices[iv];
        loss += d.x.abs() + d.y.abs() + d.z.abs();
        grad.push(Vector3::new(l1_sign(d.x), l1_sign(d.y), l1_sign(d.z)) / l);
    }
    Ok((loss / l, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fc_identity_passes_through() {
        let w = vec![1.0f64, 0.0, 0.0, 1.0];
        let b = vec![0.0, 0.0];
        let x = vec![3.5, -2.0];
        assert_eq!(fc_forward(&w, &b, &x), x);
    }

    #[test]
    fn fc_zero_input_yields_bias() {
        let w = vec![0.3f64; 6];
        let b = vec![1.0, -2.0];
        let y = fc_forward(&w, &b, &[0.0, 0.0, 0.0]);
        assert_eq!(y, b);
    }

    #[test]
    fn fc_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        use rand::Rng as _;
        let w: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..4).map(|i| 0.3 * i as f64 - 0.5).collect();
        let proj = [0.7, -1.1, 0.4];

        let loss = |wv: &[f64], bv: &[f64], xv: &[f64]| -> f64 {
            fc_forward(wv, bv, xv)
                .iter()
                .zip(&proj)
                .map(|(y, p)| y * p)
                .sum()
        };

        let mut gw = vec![0.0; 12];
        let mut gb = vec![0.0; 3];
        let gx = fc_backward(&w, &x, &proj, &mut gw, &mut gb);

        let h = 1e-6;
        for i in 0..12 {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[i] += h;
            wm[i] -= h;
            let fd = (loss(&wp, &b, &x) - loss(&wm, &b, &x)) / (2.0 * h);
            assert!((fd - gw[i]).abs() < 1e-6, "w[{i}]");
        }
        for i in 0..3 {
            let mut bp = b.clone();
            let mut bm = b.clone();
            bp[i] += h;
            bm[i] -= h;
            let fd = (loss(&w, &bp, &x) - loss(&w, &bm, &x)) / (2.0 * h);
            assert!((fd - gb[i]).abs() < 1e-6, "b[{i}]");
        }
        for i in 0..4 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss(&w, &b, &xp) - loss(&w, &b, &xm)) / (2.0 * h);
            assert!((fd - gx[i]).abs() < 1e-6, "x[{i}]");
        }
    }

    #[test]
    fn elu_values() {
        assert_eq!(elu_scalar(0.0f64), 0.0);
        assert_eq!(elu_scalar(3.0f64), 3.0);
        assert!((elu_scalar(-10.0f64) - (-0.9999546000702375)).abs() < 1e-12);
        assert_eq!(elu_grad_scalar(0.0f64), 1.0); // subgradient convention: exp(0)
        assert_eq!(elu_grad_scalar(2.0f64), 1.0);
        assert!((elu_grad_scalar(-1.0f64) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn l1_vertex_loss_hand_case() {
        let pred = vec![Vector3::new(1.0, -2.0, 0.5)];
        let target = vec![Vector3::zeros()];
        let (loss, grad) = l1_vertex_loss(&pred, &target).unwrap();
        assert_eq!(loss, 3.5);
        assert_eq!(grad[0], Vector3::new(1.0, -1.0, 1.0));
    }

    #[test]
    fn l1_vertex_loss_zero_at_equality() {
        let pts = vec![Vector3::new(0.2, 0.4, -0.1); 5];
        let (loss, grad) = l1_vertex_loss(&pts, &pts).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == Vector3::zeros()));
    }

    #[test]
    fn l1_losses_match_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        use rand::Rng as _;
        let n = 17;
        let pred: Vec<Vector3<f64>> = (0..n)
            .map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let target: Vec<Vector3<f64>> = (0..n)
            .map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let (loss, _) = l1_vertex_loss(&pred, &target).unwrap();
        let mut oracle = 0.0;
        for i in 0..n {
            for c in 0..3 {
                oracle += (pred[i][c] - target[i][c]).abs();
            }
        }
        oracle /= n as f64;
        assert!((loss - oracle).abs() < 1e-9);

        let map: Vec<usize> = (0..5).map(|i| i * 3).collect();
        let nodes: Vec<Vector3<f64>> = (0..5).map(|i| pred[i]).collect();
        let (gl, _) = l1_graph_loss(&nodes, &map, &target).unwrap();
        let mut oracle = 0.0;
        for (l, &iv) in map.iter().enumerate() {
            let d = nodes[l] - target[iv];
            oracle += d.x.abs() + d.y.abs() + d.z.abs();
        }
        oracle /= 5.0;
        assert!((gl - oracle).abs() < 1e-9);
    }

    #[test]
    fn l1_graph_loss_single_node() {
        let nodes = vec![Vector3::new(0.0, 0.0, 4.0)];
        let targets = vec![Vector3::zeros()];
        let (loss, _) = l1_graph_loss(&nodes, &[0], &targets).unwrap();
        assert_eq!(loss, 4.0);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParameterStore::<f32>::new();
        let id = store.register("p", &[4], Init::Glorot { fan_in: 2, fan_out: 2 }, &mut rng);
        let before = store.value(id).to_vec();
        adam_step(&mut store, AdamParams::default());
        assert_eq!(store.value(id), &before[..]);
        assert_eq!(store.step(), 1);
    }

    #[test]
    fn adam_first_step_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParameterStore::<f64>::new();
        let id = store.register("p", &[1], Init::Zeros, &mut rng);
        let mut g = store.new_grad_store();
        g.slot_mut(id)[0] = 1.0;
        store.accumulate(&g, 1.0);
        adam_step(&mut store, AdamParams::default());
        // m̂ = v̂ = 1 on step one, so the update is lr/(1+ε).
        assert!((store.value(id)[0] + 1e-4).abs() < 1e-9);
    }

    #[test]
    fn adam_descends_under_constant_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParameterStore::<f64>::new();
        let id = store.register("p", &[1], Init::Zeros, &mut rng);
        let mut prev = 0.0;
        for _ in 0..50 {
            let mut g = store.new_grad_store();
            g.slot_mut(id)[0] = 2.0;
            store.accumulate(&g, 1.0);
            adam_step(&mut store, AdamParams::default());
            let cur = store.value(id)[0];
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn accumulate_scales_per_sample_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParameterStore::<f64>::new();
        let id = store.register("p", &[2], Init::Zeros, &mut rng);
        let mut g1 = store.new_grad_store();
        g1.slot_mut(id).copy_from_slice(&[1.0, 3.0]);
        let mut g2 = store.new_grad_store();
        g2.slot_mut(id).copy_from_slice(&[5.0, -1.0]);
        store.accumulate(&g1, 0.5);
        store.accumulate(&g2, 0.5);
        assert_eq!(store.grad(id), &[3.0, 1.0]);
    }

    #[test]
    fn glorot_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut store = ParameterStore::<f32>::new();
        let id = store.register(
            "w",
            &[32, 8],
            Init::Glorot { fan_in: 8, fan_out: 32 },
            &mut rng,
        );
        let a = (6.0f32 / 40.0).sqrt();
        assert!(store.value(id).iter().all(|v| v.abs() <= a));
        assert!(store.value(id).iter().any(|v| v.abs() > 0.01 * a));
    }

    #[test]
    fn feature_map_vertex_round_trip() {
        let vs = vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(-0.5, 0.0, 9.25)];
        let f = FeatureMap::<f64>::from_vertices(&vs);
        assert_eq!(f.rows(), 2);
        assert_eq!(f.cols(), 3);
        assert_eq!(f.to_vertices(), vs);
    }
}
