//! Finite-difference verification of the crate's analytic gradients.
//!
//! Each scope draws random instances per seed, runs the reverse-mode path
//! once, and compares every checked partial against the central difference
//! (f(x+h) - f(x-h)) / 2h at f64. Comparisons near the kinks of ELU and of
//! the l1 losses are avoided up front (margin checks on pre-activations and
//! residuals), so a failed comparison always means a wrong gradient.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conv::{
    build_spectral, build_spirals, spectral_conv, spectral_conv_backward, spiral_conv,
    spiral_conv_backward,
};
use crate::edl::{bind_skinning_with_neighbors, edl_backward, edl_forward, EdlState, NodeTransforms};
use crate::hierarchy::io::{build_supports, LevelSupports};
use crate::hierarchy::{build_hierarchy, extract_graph, DeformationGraph, MeshHierarchy};
use crate::mesh::Mesh;
use crate::model::{basic_config, ConvType, ModelSession, TrainingVariant};
use crate::nn::{
    elu_backward, elu_forward, fc_backward, fc_forward, l1_graph_loss, l1_vertex_loss, FeatureMap,
    ParamId,
};
use crate::shapes::{icosphere, uv_sphere};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Per-kernel relative-error gate.
pub const LAYER_TOLERANCE: f64 = 1e-4;
/// Gate for the decode -> deformation -> loss chain.
pub const CHAIN_TOLERANCE: f64 = 1e-3;
/// Seeds per scope unless overridden.
pub const DEFAULT_SEEDS: usize = 20;

/// Relative error is |a - n| / max(|a|, |n|, REL_FLOOR); differences below
/// ABS_FLOOR count as exact, since the quotient (f(x+h) - f(x-h)) / 2h
/// carries roundoff of roughly |f|·eps/h regardless of the true partial.
const REL_FLOOR: f64 = 1e-8;
const ABS_FLOOR: f64 = 1e-8;

/// Pre-activations and l1 residuals must clear this margin for the central
/// difference to stay on one side of the kink.
const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Edl,
    Spiral,
    Spectral,
    Fc,
    Elu,
    Losses,
    End2End,
}

impl Scope {
    pub const ALL: [Scope; 7] = [
        Scope::Edl,
        Scope::Spiral,
        Scope::Spectral,
        Scope::Fc,
        Scope::Elu,
        Scope::Losses,
        Scope::End2End,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scope::Edl => "edl",
            Scope::Spiral => "spiral",
            Scope::Spectral => "spectral",
            Scope::Fc => "fc",
            Scope::Elu => "elu",
            Scope::Losses => "losses",
            Scope::End2End => "end2end",
        }
    }

    pub fn parse(name: &str) -> Option<Scope> {
        Scope::ALL.iter().copied().find(|s| s.name() == name)
    }

    pub fn tolerance(self) -> f64 {
        match self {
            Scope::End2End => CHAIN_TOLERANCE,
            _ => LAYER_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    /// Independent random instances per scope.
    pub seeds: usize,
    /// Offset added to the per-instance counter when seeding the generator.
    pub base_seed: u64,
    /// Negative control: adds a large error to one analytic partial of the
    /// first instance, which a working harness must then report as FAIL.
    pub corrupt: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { seeds: DEFAULT_SEEDS, base_seed: 0, corrupt: false }
    }
}

#[derive(Debug, Clone)]
pub struct ScopeReport {
    pub scope: Scope,
    pub seeds: usize,
    /// Total partial derivatives compared across all seeds.
    pub partials: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl ScopeReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{:<8} seeds={} partials={} max_rel_err={:.3e} tolerance={:.0e} -> {}",
            self.scope.name(),
            self.seeds,
            self.partials,
            self.max_rel_err,
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Runs one scope and reports the worst relative error seen.
pub fn run_scope(scope: Scope, options: &CheckOptions) -> ScopeReport {
    let fixture = if scope == Scope::End2End { Some(ChainFixture::build()) } else { None };
    let mut max_rel_err = 0.0f64;
    let mut partials = 0usize;
    for i in 0..options.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(options.base_seed.wrapping_add(i as u64));
        let corrupt = options.corrupt && i == 0;
        let (worst, count) = match scope {
            Scope::Edl => check_edl(&mut rng, corrupt),
            Scope::Spiral => check_spiral(&mut rng, corrupt),
            Scope::Spectral => check_spectral(&mut rng, corrupt),
            Scope::Fc => check_fc(&mut rng, corrupt),
            Scope::Elu => check_elu(&mut rng, corrupt),
            Scope::Losses => check_losses(&mut rng, corrupt),
            Scope::End2End => {
                check_chain(fixture.as_ref().expect("fixture built above"), i, &mut rng, corrupt)
            }
        };
        max_rel_err = max_rel_err.max(worst);
        partials += count;
    }
    ScopeReport { scope, seeds: options.seeds, partials, max_rel_err, tolerance: scope.tolerance() }
}

/// Runs every scope in declaration order.
pub fn run_all(options: &CheckOptions) -> Vec<ScopeReport> {
    Scope::ALL.iter().map(|&s| run_scope(s, options)).collect()
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff < ABS_FLOOR {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences of `eval` at `point`,
/// one coordinate at a time. `eval` receives the full coordinate vector.
fn compare<F: FnMut(&[f64]) -> f64>(
    mut eval: F,
    point: &[f64],
    analytic: &[f64],
) -> (f64, usize) {
    assert_eq!(point.len(), analytic.len(), "one analytic partial per coordinate");
    let mut buf = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..buf.len() {
        let x0 = buf[i];
        buf[i] = x0 + FD_STEP;
        let above = eval(&buf);
        buf[i] = x0 - FD_STEP;
        let below = eval(&buf);
        buf[i] = x0;
        let numeric = (above - below) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    (worst, buf.len())
}

fn corrupt_first(analytic: &mut [f64]) {
    analytic[0] += 0.5 * (1.0 + analytic[0].abs());
}

fn random_unit_cube<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Mesh with vertices displaced uniformly in a cube of the given half-width;
/// topology is preserved.
fn jittered<R: Rng + ?Sized>(mesh: &Mesh, rng: &mut R, amount: f64) -> Mesh {
    let vertices = mesh
        .vertices()
        .iter()
        .map(|v| {
            v + Vector3::new(
                rng.gen_range(-amount..amount),
                rng.gen_range(-amount..amount),
                rng.gen_range(-amount..amount),
            )
        })
        .collect();
    mesh.with_vertices(vertices).expect("jitter keeps topology valid")
}

fn weighted_sum(y: &FeatureMap<f64>, c: &[f64]) -> f64 {
    y.data().iter().zip(c).map(|(a, b)| a * b).sum()
}

fn weighted_sum_vertices(v: &[Vector3<f64>], c: &[Vector3<f64>]) -> f64 {
    v.iter().zip(c).map(|(a, b)| a.dot(b)).sum()
}

/// Deformation layer: all angle and translation partials on a random
/// ~20-vertex mesh with a 4-node graph, read out through a fixed random
/// projection so the scalar exercises every vertex.
fn check_edl<R: Rng + ?Sized>(rng: &mut R, corrupt: bool) -> (f64, usize) {
    let mesh = jittered(&uv_sphere(4, 6, 1.0), rng, 0.05);
    let graph = extract_graph(&mesh, 4).expect("4-node graph on a sphere");
    let binding = bind_skinning_with_neighbors(&mesh, &graph, 3).expect("binding");
    let nodes = graph.node_count();

    let mut point: Vec<f64> = (0..nodes * 3).map(|_| rng.gen_range(-0.7..0.7)).collect();
    point.extend((0..nodes * 3).map(|_| rng.gen_range(-0.3..0.3)));
    let projection: Vec<Vector3<f64>> = (0..mesh.vertex_count())
        .map(|_| {
            Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();

    let unpack = |p: &[f64]| {
        let mut t = NodeTransforms::zeros(nodes);
        for l in 0..nodes {
            t.euler_angles[l] = Vector3::new(p[3 * l], p[3 * l + 1], p[3 * l + 2]);
            let base = 3 * nodes;
            t.translations[l] =
                Vector3::new(p[base + 3 * l], p[base + 3 * l + 1], p[base + 3 * l + 2]);
        }
        t
    };

    let mut state = EdlState::new();
    edl_forward(&mesh, &graph, &binding, &unpack(&point), &mut state).expect("forward");
    let grads = edl_backward(&binding, &state, &projection).expect("backward");
    let mut analytic = Vec::with_capacity(point.len());
    for g in &grads.d_euler_angles {
        analytic.extend_from_slice(&[g.x, g.y, g.z]);
    }
    for g in &grads.d_translations {
        analytic.extend_from_slice(&[g.x, g.y, g.z]);
    }
    if corrupt {
        corrupt_first(&mut analytic);
    }

    compare(
        |p| {
            let mut st = EdlState::new();
            let v = edl_forward(&mesh, &graph, &binding, &unpack(p), &mut st).expect("forward");
            weighted_sum_vertices(&v, &projection)
        },
        &point,
        &analytic,
    )
}

/// Spiral convolution: partials for the input, the per-slot weights, and
/// the bias.
fn check_spiral<R: Rng + ?Sized>(rng: &mut R, corrupt: bool) -> (f64, usize) {
    let mesh = jittered(&icosphere(0), rng, 0.05);
    let support = build_spirals(&mesh, rng.gen_range(4..=7));
    let n = support.node_count();
    let f_in = rng.gen_range(2..=4);
    let f_out = rng.gen_range(2..=4);
    let slots = support.length();

    let x = random_unit_cube(rng, n * f_in);
    let w = random_unit_cube(rng, slots * f_out * f_in);
    let b = random_unit_cube(rng, f_out);
    let projection = random_unit_cube(rng, n * f_out);

    let xm = FeatureMap::from_vec(n, f_in, x.clone());
    let gy = FeatureMap::from_vec(n, f_out, projection.clone());
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; b.len()];
    let gx = spiral_conv_backward(&support, &xm, &w, &gy, &mut gw, &mut gb);

    let mut analytic = gx.data().to_vec();
    analytic.extend_from_slice(&gw);
    analytic.extend_from_slice(&gb);
    if corrupt {
        corrupt_first(&mut analytic);
    }

    let point: Vec<f64> = x.iter().chain(&w).chain(&b).copied().collect();
    let (nx, nw) = (x.len(), w.len());
    compare(
        |p| {
            let xm = FeatureMap::from_vec(n, f_in, p[..nx].to_vec());
            let y = spiral_conv(&support, &xm, &p[nx..nx + nw], &p[nx + nw..]).expect("forward");
            weighted_sum(&y, &projection)
        },
        &point,
        &analytic,
    )
}

/// Spectral convolution: partials for the input, the polynomial
/// coefficients, and the bias, at a random order in 1..=6.
fn check_spectral<R: Rng + ?Sized>(rng: &mut R, corrupt: bool) -> (f64, usize) {
    let mesh = jittered(&icosphere(0), rng, 0.05);
    let op = build_spectral(&mesh);
    let n = op.node_count();
    let f_in = rng.gen_range(2..=4);
    let f_out = rng.gen_range(2..=4);
    let order = rng.gen_range(1..=6);

    let x = random_unit_cube(rng, n * f_in);
    let theta = random_unit_cube(rng, order * f_in * f_out);
    let b = random_unit_cube(rng, f_out);
    let projection = random_unit_cube(rng, n * f_out);

    let xm = FeatureMap::from_vec(n, f_in, x.clone());
    let gy = FeatureMap::from_vec(n, f_out, projection.clone());
    let mut gtheta = vec![0.0; theta.len()];
    let mut gb = vec![0.0; b.len()];
    let gx = spectral_conv_backward(&op, &xm, &theta, order, &gy, &mut gtheta, &mut gb);

    let mut analytic = gx.data().to_vec();
    analytic.extend_from_slice(&gtheta);
    analytic.extend_from_slice(&gb);
    if corrupt {
        corrupt_first(&mut analytic);
    }

    let point: Vec<f64> = x.iter().chain(&theta).chain(&b).copied().collect();
    let (nx, nt) = (x.len(), theta.len());
    compare(
        |p| {
            let xm = FeatureMap::from_vec(n, f_in, p[..nx].to_vec());
            let y = spectral_conv(&op, &xm, &p[nx..nx + nt], &p[nx + nt..], order)
                .expect("forward");
            weighted_sum(&y, &projection)
        },
        &point,
        &analytic,
    )
}

/// Fully connected layer: partials for the input, the weight matrix, and
/// the bias.
fn check_fc<R: Rng + ?Sized>(rng: &mut R, corrupt: bool) -> (f64, usize) {
    let in_dim = rng.gen_range(3..=8);
    let out_dim = rng.gen_range(2..=6);
    let x = random_unit_cube(rng, in_dim);
    let w = random_unit_cube(rng, out_dim * in_dim);
    let b = random_unit_cube(rng, out_dim);
    let projection = random_unit_cube(rng, out_dim);

    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; b.len()];
    let gx = fc_backward(&w, &x, &projection, &mut gw, &mut gb);

    let mut analytic = gx;
    analytic.extend_from_slice(&gw);
    analytic.extend_from_slice(&gb);
    if corrupt {
        corrupt_first(&mut analytic);
    }

    let point: Vec<f64> = x.iter().chain(&w).chain(&b).copied().collect();
    let (nx, nw) = (x.len(), w.len());
    compare(
        |p| {
            let y = fc_forward(&p[nx..nx + nw], &p[nx + nw..], &p[..nx]);
            y.iter().zip(&projection).map(|(a, c)| a * c).sum()
        },
        &point,
        &analytic,
    )
}

/// ELU activation, with inputs kept clear of the kink at zero.
fn check_elu<R: Rng + ?Sized>(rng: &mut R, corrupt: bool) -> (f64, usize) {
    let rows = 6;
    let cols = 5;
    let point: Vec<f64> = (0..rows * cols)
        .map(|_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            sign * rng.gen_range(10.0 * KINK_MARGIN..2.0)
        })
        .collect();
    let projection = random_unit_cube(rng, rows * cols);

    let xm = FeatureMap::from_vec(rows, cols, point.clone());
    let gy = FeatureMap::from_vec(rows, cols, projection.clone());
    let mut analytic = elu_backward(&xm, &gy).data().to_vec();
    if corrupt {
        corrupt_first(&mut analytic);
    }

    compare(
        |p| {
            let y = elu_forward(&FeatureMap::from_vec(rows, cols, p.to_vec()));
            weighted_sum(&y, &projection)
        },
        &point,
        &analytic,
    )
}

/// Both l1 losses, with every residual component kept clear of zero so the
/// subgradient is the exact gradient throughout the difference stencil.
fn check_losses<R: Rng + ?Sized>(rng: &mut R, corrupt: bool) -> (f64, usize) {
    let n = 10;
    let target: Vec<Vector3<f64>> = (0..n)
        .map(|_| {
            Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    let offset = |rng: &mut R| {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        sign * rng.gen_range(10.0 * KINK_MARGIN..0.5)
    };
    let predicted: Vec<Vector3<f64>> = target
        .iter()
        .map(|t| t + Vector3::new(offset(rng), offset(rng), offset(rng)))
        .collect();

    let point: Vec<f64> = predicted.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
    let (_, grad) = l1_vertex_loss(&predicted, &target).expect("vertex loss");
    let mut analytic: Vec<f64> = grad.iter().flat_map(|g| [g.x, g.y, g.z]).collect();
    if corrupt {
        corrupt_first(&mut analytic);
    }
    let unpack = |p: &[f64]| -> Vec<Vector3<f64>> {
        p.chunks(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect()
    };
    let (vertex_worst, vertex_count) = compare(
        |p| l1_vertex_loss(&unpack(p), &target).expect("vertex loss").0,
        &point,
        &analytic,
    );

    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    let node_to_vertex: Vec<usize> = indices.into_iter().take(4).collect();
    let positions: Vec<Vector3<f64>> = node_to_vertex
        .iter()
        .map(|&iv| target[iv] + Vector3::new(offset(rng), offset(rng), offset(rng)))
        .collect();
    let point: Vec<f64> = positions.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
    let (_, grad) = l1_graph_loss(&positions, &node_to_vertex, &target).expect("graph loss");
    let analytic: Vec<f64> = grad.iter().flat_map(|g| [g.x, g.y, g.z]).collect();
    let (graph_worst, graph_count) = compare(
        |p| l1_graph_loss(&unpack(p), &node_to_vertex, &target).expect("graph loss").0,
        &point,
        &analytic,
    );

    (vertex_worst.max(graph_worst), vertex_count + graph_count)
}

/// Shared topology for the decode -> deformation -> loss chain; built once
/// per run because simplification dominates the cost of a single check.
struct ChainFixture {
    hierarchy: MeshHierarchy,
    graph: DeformationGraph,
    supports: LevelSupports,
}

impl ChainFixture {
    fn build() -> Self {
        let mesh = icosphere(2);
        let counts = [162, 60, 20, 8];
        let graph = extract_graph(&mesh, counts[2]).expect("graph");
        let hierarchy = build_hierarchy(&mesh, &graph, &counts).expect("hierarchy");
        let supports = build_supports(&hierarchy, None);
        ChainFixture { hierarchy, graph, supports }
    }
}

/// Full chain: latent code -> decoder -> deformation -> l1 loss. Checks the
/// complete latent gradient plus sampled partials from every decoder
/// tensor, with freshly randomized parameters (the zero-initialized output
/// layer would make most partials trivially zero). Instances alternate
/// between the two convolution types.
fn check_chain<R: Rng + ?Sized>(
    fixture: &ChainFixture,
    instance: usize,
    rng: &mut R,
    corrupt: bool,
) -> (f64, usize) {
    let conv_type = if instance % 2 == 0 { ConvType::Spiral } else { ConvType::Spectral };
    let config = basic_config(5, conv_type, TrainingVariant::Edl, vec![4, 6, 8], 2);
    let mut session = ModelSession::new(
        config,
        fixture.hierarchy.clone(),
        fixture.graph.clone(),
        fixture.supports.clone(),
    )
    .expect("session");
    let ids: Vec<_> = session.params.ids().collect();
    for &id in &ids {
        for v in session.params.value_mut(id) {
            *v = rng.gen_range(-0.4..0.4);
        }
    }

    // Draw a latent code whose decode keeps every pre-activation away from
    // the ELU kink; the difference stencil moves them by O(h) only.
    let latent = session.latent_dim();
    let mut z: Vec<f64> = Vec::new();
    let mut best_margin = f64::NEG_INFINITY;
    for _ in 0..200 {
        let candidate: Vec<f64> = (0..latent).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let margin = session.decode_margin(&candidate).expect("decode");
        if margin > best_margin {
            best_margin = margin;
            z = candidate;
        }
        if best_margin > KINK_MARGIN {
            break;
        }
    }

    // Target with every residual component clear of the l1 kink.
    let predicted = session.reconstruct(&z).expect("reconstruct");
    let target: Vec<Vector3<f64>> = predicted
        .iter()
        .map(|v| {
            let mut offset = || {
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                sign * rng.gen_range(20.0 * KINK_MARGIN..0.06)
            };
            v + Vector3::new(offset(), offset(), offset())
        })
        .collect();

    let mut grads = session.params.new_grad_store();
    let (_, gz) = session.decode_loss_and_grads(&z, &target, &mut grads).expect("loss");

    // Coordinates: the whole latent plus up to four sampled entries of each
    // decoder tensor. Encoder tensors are not on the decode path.
    let mut coords: Vec<(ParamId, usize)> = Vec::new();
    for &id in &ids {
        if !session.params.name(id).starts_with("dec.") {
            continue;
        }
        let len = session.params.value(id).len();
        let mut picks: Vec<usize> = (0..len).collect();
        picks.shuffle(rng);
        for j in picks.into_iter().take(4) {
            coords.push((id, j));
        }
    }

    let mut point = z.clone();
    let mut analytic = gz;
    for &(id, j) in &coords {
        point.push(session.params.value(id)[j]);
        analytic.push(grads.slot(id)[j]);
    }
    if corrupt {
        corrupt_first(&mut analytic);
    }

    let session = &mut session;
    compare(
        |p| {
            for (k, &(id, j)) in coords.iter().enumerate() {
                session.params.value_mut(id)[j] = p[latent + k];
            }
            session.decode_loss(&p[..latent], &target).expect("loss")
        },
        &point,
        &analytic,
    )
}
