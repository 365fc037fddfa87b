//! Network assembly over a mesh hierarchy: encoder (conv + ELU + downsample
//! per level, then FC), decoder (FC + upsampling modules + refinement convs),
//! variant-specific reconstruction heads, and exact reverse-mode gradients.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conv::{spectral_conv, spectral_conv_backward, spiral_conv, spiral_conv_backward};
use crate::edl::{
    bind_skinning, edl_backward, edl_forward, procrustes_rotation, rotation_to_euler, EdlState,
    NodeTransforms, SkinningBinding,
};
use crate::hierarchy::io::LevelSupports;
use crate::hierarchy::{
    downsample, downsample_backward, upsample, upsample_backward, DeformationGraph, MeshHierarchy,
};
use crate::mesh::Mesh;
use crate::nn::{
    load_checkpoint, save_checkpoint,
    elu_backward, elu_forward, elu_grad_scalar, elu_scalar, fc_backward, fc_forward,
    l1_graph_loss, l1_vertex_loss, FeatureMap, GradStore, Init, NnError, ParamId, ParameterStore,
};

use super::{ConvType, ModelConfig, ModelError, TrainingVariant};

/// Chebyshev order used by every convolution except the decoder's final two.
pub const DEFAULT_ORDER: usize = 6;
/// Chebyshev order of the decoder's last two convolutions (local refinement).
pub const REFINE_ORDER: usize = 2;

/// Raw decoder emission: one row per graph node (row i belongs to node i),
/// 6 channels (3 Euler angles, 3 translations) for Edl/Lp or 3 (positions
/// relative to the rest nodes) for Gl.
#[derive(Debug, Clone)]
pub struct DecoderOutput {
    pub features: FeatureMap<f64>,
}

#[derive(Debug, Clone, Copy)]
struct ConvLayer {
    level: usize,
    w: ParamId,
    b: ParamId,
    order: usize,
}

#[derive(Debug, Clone)]
struct Network {
    enc_convs: Vec<ConvLayer>,
    enc_fc_w: ParamId,
    enc_fc_b: ParamId,
    dec_fc_w: ParamId,
    dec_fc_b: ParamId,
    coarse_rows: usize,
    coarse_ch: usize,
    up_convs: Vec<ConvLayer>,
    refine: [ConvLayer; 2],
    out_conv: ConvLayer,
    out_channels: usize,
}

/// Owns everything one model needs: hierarchy, supports, skinning binding,
/// parameters. Forward/backward methods borrow it immutably so batch
/// elements can run in parallel.
#[derive(Debug, Clone)]
pub struct ModelSession {
    config: ModelConfig,
    hierarchy: MeshHierarchy,
    graph: DeformationGraph,
    supports: LevelSupports,
    binding: SkinningBinding,
    graph_adjacency: Vec<Vec<usize>>,
    net: Network,
    pub params: ParameterStore<f64>,
}

pub(crate) struct EncodeCache {
    conv_in: Vec<FeatureMap<f64>>,
    conv_pre: Vec<FeatureMap<f64>>,
    fc_in: FeatureMap<f64>,
    fc_pre: Vec<f64>,
}

pub(crate) struct DecodeCache {
    z: Vec<f64>,
    fc_pre: Vec<f64>,
    conv_in: Vec<FeatureMap<f64>>,
    conv_pre: Vec<FeatureMap<f64>>,
    out_in: FeatureMap<f64>,
}

impl DecodeCache {
    /// Smallest pre-activation magnitude; finite-difference checks require
    /// headroom from the ELU kink at zero.
    pub(crate) fn min_abs_preactivation(&self) -> f64 {
        let conv = self
            .conv_pre
            .iter()
            .flat_map(|m| m.data())
            .fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
        self.fc_pre.iter().fold(conv, |acc, v| acc.min(v.abs()))
    }
}

fn register_conv<R: rand::Rng + ?Sized>(
    params: &mut ParameterStore<f64>,
    rng: &mut R,
    name: &str,
    conv_type: ConvType,
    supports: &LevelSupports,
    level: usize,
    f_in: usize,
    f_out: usize,
    order: usize,
    zero: bool,
) -> ConvLayer {
    let (shape, fan_in) = match conv_type {
        ConvType::Spiral => {
            let s = supports.spirals[level].length();
            (vec![s, f_out, f_in], s * f_in)
        }
        ConvType::Spectral => (vec![order, f_in, f_out], order * f_in),
    };
    let init = if zero {
        Init::Zeros
    } else {
        Init::Glorot {
            fan_in,
            fan_out: f_out,
        }
    };
    let w = params.register(&format!("{name}.weight"), &shape, init, rng);
    let b = params.register(&format!("{name}.bias"), &[f_out], Init::Zeros, rng);
    ConvLayer { level, w, b, order }
}

impl ModelSession {
    pub fn new(
        config: ModelConfig,
        hierarchy: MeshHierarchy,
        graph: DeformationGraph,
        supports: LevelSupports,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let levels = hierarchy.level_count();
        if levels < 2 {
            return Err(ModelError::Config(format!(
                "the autoencoder needs at least 2 hierarchy levels, got {levels}"
            )));
        }
        if hierarchy.graph_level() != config.graph_level {
            return Err(ModelError::Config(format!(
                "config graph_level {} does not match the hierarchy's {}",
                config.graph_level,
                hierarchy.graph_level()
            )));
        }
        if supports.spirals.len() != levels || supports.laplacians.len() != levels {
            return Err(ModelError::Config(format!(
                "supports cover {} spiral / {} spectral levels, hierarchy has {}",
                supports.spirals.len(),
                supports.laplacians.len(),
                levels
            )));
        }
        for (k, level) in hierarchy.levels().iter().enumerate() {
            if supports.spirals[k].node_count() != level.vertex_count()
                || supports.laplacians[k].node_count() != level.vertex_count()
            {
                return Err(ModelError::Config(format!(
                    "support node counts at level {k} do not match the hierarchy"
                )));
            }
            if let Some(s) = config.spiral_length {
                if config.conv_type == ConvType::Spiral && supports.spirals[k].length() != s {
                    return Err(ModelError::Config(format!(
                        "config spiral_length {s} but level {k} supports use {}",
                        supports.spirals[k].length()
                    )));
                }
            }
        }
        let modules = levels - 1;
        if config.widths.len() < modules {
            return Err(ModelError::Config(format!(
                "widths lists {} entries, the {levels}-level hierarchy needs {modules}",
                config.widths.len()
            )));
        }
        let widths = &config.widths[..modules];

        let binding = bind_skinning(hierarchy.level(0).mesh(), &graph, config.graph_level)?;
        let graph_adjacency = graph.adjacency();

        let mut params = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let conv_type = config.conv_type;

        let mut enc_convs = Vec::with_capacity(modules);
        for k in 0..modules {
            let f_in = if k == 0 { 3 } else { widths[k - 1] };
            enc_convs.push(register_conv(
                &mut params,
                &mut rng,
                &format!("enc.conv{k}"),
                conv_type,
                &supports,
                k,
                f_in,
                widths[k],
                DEFAULT_ORDER,
                false,
            ));
        }
        let coarse_rows = hierarchy.level(levels - 1).vertex_count();
        let coarse_ch = widths[modules - 1];
        let flat = coarse_rows * coarse_ch;
        let enc_fc_w = params.register(
            "enc.fc.weight",
            &[config.latent_dim, flat],
            Init::Glorot {
                fan_in: flat,
                fan_out: config.latent_dim,
            },
            &mut rng,
        );
        let enc_fc_b = params.register("enc.fc.bias", &[config.latent_dim], Init::Zeros, &mut rng);

        let dec_fc_w = params.register(
            "dec.fc.weight",
            &[flat, config.latent_dim],
            Init::Glorot {
                fan_in: config.latent_dim,
                fan_out: flat,
            },
            &mut rng,
        );
        let dec_fc_b = params.register("dec.fc.bias", &[flat], Init::Zeros, &mut rng);

        // One true upsampling module per level between the coarsest and the
        // graph level; together with the FC+reshape stage this matches the
        // documented module count.
        let up_count = modules - config.graph_level;
        let mut up_convs = Vec::with_capacity(up_count);
        for i in 0..up_count {
            let at_level = levels - 2 - i;
            let f_in = widths[at_level];
            let f_out = if at_level == 0 { widths[0] } else { widths[at_level - 1] };
            up_convs.push(register_conv(
                &mut params,
                &mut rng,
                &format!("dec.up{i}"),
                conv_type,
                &supports,
                at_level,
                f_in,
                f_out,
                DEFAULT_ORDER,
                false,
            ));
        }
        let graph_ch = widths[config.graph_level - 1];
        let refine0 = register_conv(
            &mut params,
            &mut rng,
            "dec.refine0",
            conv_type,
            &supports,
            config.graph_level,
            graph_ch,
            graph_ch,
            DEFAULT_ORDER,
            false,
        );
        // The final two decoder convolutions run at reduced order for local
        // refinement.
        let refine1 = register_conv(
            &mut params,
            &mut rng,
            "dec.refine1",
            conv_type,
            &supports,
            config.graph_level,
            graph_ch,
            graph_ch,
            REFINE_ORDER,
            false,
        );
        let out_channels = config.training_variant.output_channels();
        // Zero init makes the untrained decoder emit all-zero transforms, so
        // reconstruction starts at the template for every latent.
        let out_conv = register_conv(
            &mut params,
            &mut rng,
            "dec.out",
            conv_type,
            &supports,
            config.graph_level,
            graph_ch,
            out_channels,
            REFINE_ORDER,
            true,
        );

        let net = Network {
            enc_convs,
            enc_fc_w,
            enc_fc_b,
            dec_fc_w,
            dec_fc_b,
            coarse_rows,
            coarse_ch,
            up_convs,
            refine: [refine0, refine1],
            out_conv,
            out_channels,
        };
        Ok(ModelSession {
            config,
            hierarchy,
            graph,
            supports,
            binding,
            graph_adjacency,
            net,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn hierarchy(&self) -> &MeshHierarchy {
        &self.hierarchy
    }

    pub fn graph(&self) -> &DeformationGraph {
        &self.graph
    }

    pub fn template(&self) -> &Mesh {
        self.hierarchy.level(0).mesh()
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    /// (encoder conv modules, true decoder upsampling modules).
    pub fn module_counts(&self) -> (usize, usize) {
        (self.net.enc_convs.len(), self.net.up_convs.len())
    }

    pub fn save_params<P: AsRef<std::path::Path>>(&self, path: P) -> Result<(), ModelError> {
        Ok(save_checkpoint(&self.params, path)?)
    }

    pub fn load_params<P: AsRef<std::path::Path>>(&mut self, path: P) -> Result<(), ModelError> {
        Ok(load_checkpoint(&mut self.params, path)?)
    }

    fn conv_forward(&self, layer: &ConvLayer, x: &FeatureMap<f64>) -> Result<FeatureMap<f64>, NnError> {
        let w = self.params.value(layer.w);
        let b = self.params.value(layer.b);
        match self.config.conv_type {
            ConvType::Spiral => spiral_conv(&self.supports.spirals[layer.level], x, w, b),
            ConvType::Spectral => {
                spectral_conv(&self.supports.laplacians[layer.level], x, w, b, layer.order)
            }
        }
    }

    fn conv_backward(
        &self,
        layer: &ConvLayer,
        x: &FeatureMap<f64>,
        gy: &FeatureMap<f64>,
        grads: &mut GradStore<f64>,
    ) -> FeatureMap<f64> {
        let w = self.params.value(layer.w);
        let (gw, gb) = grads.slot_pair_mut(layer.w, layer.b);
        match self.config.conv_type {
            ConvType::Spiral => {
                spiral_conv_backward(&self.supports.spirals[layer.level], x, w, gy, gw, gb)
            }
            ConvType::Spectral => spectral_conv_backward(
                &self.supports.laplacians[layer.level],
                x,
                w,
                layer.order,
                gy,
                gw,
                gb,
            ),
        }
    }

    pub(crate) fn encode_features(
        &self,
        x: &FeatureMap<f64>,
    ) -> Result<(Vec<f64>, EncodeCache), ModelError> {
        let finest = self.hierarchy.level(0).vertex_count();
        if x.rows() != finest || x.cols() != 3 {
            return Err(ModelError::shape(
                "encoder input",
                format!("{finest}x3"),
                format!("{}x{}", x.rows(), x.cols()),
            ));
        }
        let mut conv_in = Vec::with_capacity(self.net.enc_convs.len());
        let mut conv_pre = Vec::with_capacity(self.net.enc_convs.len());
        let mut cur = x.clone();
        for (k, layer) in self.net.enc_convs.iter().enumerate() {
            let pre = self.conv_forward(layer, &cur)?;
            let act = elu_forward(&pre);
            let down = downsample(self.hierarchy.level(k + 1), &act);
            conv_in.push(cur);
            conv_pre.push(pre);
            cur = down;
        }
        let fc_in = cur;
        let fc_pre = fc_forward(
            self.params.value(self.net.enc_fc_w),
            self.params.value(self.net.enc_fc_b),
            fc_in.data(),
        );
        let z = fc_pre.iter().map(|&v| elu_scalar(v)).collect();
        Ok((
            z,
            EncodeCache {
                conv_in,
                conv_pre,
                fc_in,
                fc_pre,
            },
        ))
    }

    /// Gradient of the encoder inputs; parameter gradients accumulate into
    /// `grads`.
    pub(crate) fn encode_backward(
        &self,
        cache: &EncodeCache,
        g_z: &[f64],
        grads: &mut GradStore<f64>,
    ) -> FeatureMap<f64> {
        assert_eq!(g_z.len(), cache.fc_pre.len(), "latent grad length");
        let gu: Vec<f64> = cache
            .fc_pre
            .iter()
            .zip(g_z)
            .map(|(&p, &g)| g * elu_grad_scalar(p))
            .collect();
        let gflat = {
            let (gw, gb) = grads.slot_pair_mut(self.net.enc_fc_w, self.net.enc_fc_b);
            fc_backward(
                self.params.value(self.net.enc_fc_w),
                cache.fc_in.data(),
                &gu,
                gw,
                gb,
            )
        };
        let mut g = FeatureMap::from_vec(cache.fc_in.rows(), cache.fc_in.cols(), gflat);
        for k in (0..self.net.enc_convs.len()).rev() {
            let g_fine = downsample_backward(self.hierarchy.level(k + 1), &g);
            let g_pre = elu_backward(&cache.conv_pre[k], &g_fine);
            g = self.conv_backward(&self.net.enc_convs[k], &cache.conv_in[k], &g_pre, grads);
        }
        g
    }

    pub fn encode(&self, vertices: &[Vector3<f64>]) -> Result<Vec<f64>, ModelError> {
        let x = FeatureMap::from_vertices(vertices);
        Ok(self.encode_features(&x)?.0)
    }

    pub(crate) fn decode_features(
        &self,
        z: &[f64],
    ) -> Result<(FeatureMap<f64>, DecodeCache), ModelError> {
        if z.len() != self.config.latent_dim {
            return Err(ModelError::shape(
                "latent code",
                self.config.latent_dim,
                z.len(),
            ));
        }
        let fc_pre = fc_forward(
            self.params.value(self.net.dec_fc_w),
            self.params.value(self.net.dec_fc_b),
            z,
        );
        let act: Vec<f64> = fc_pre.iter().map(|&v| elu_scalar(v)).collect();
        let mut cur = FeatureMap::from_vec(self.net.coarse_rows, self.net.coarse_ch, act);
        let levels = self.hierarchy.level_count();
        let mut conv_in = Vec::with_capacity(self.net.up_convs.len() + 2);
        let mut conv_pre = Vec::with_capacity(self.net.up_convs.len() + 2);
        for (i, layer) in self.net.up_convs.iter().enumerate() {
            let fine = upsample(self.hierarchy.level(levels - 1 - i), &cur);
            let pre = self.conv_forward(layer, &fine)?;
            cur = elu_forward(&pre);
            conv_in.push(fine);
            conv_pre.push(pre);
        }
        for layer in &self.net.refine {
            let pre = self.conv_forward(layer, &cur)?;
            let next = elu_forward(&pre);
            conv_in.push(cur);
            conv_pre.push(pre);
            cur = next;
        }
        let out_in = cur;
        let raw = self.conv_forward(&self.net.out_conv, &out_in)?;
        // Rows leave in node order: row i belongs to graph node i.
        let node_local = self.hierarchy.node_local();
        let mut out = FeatureMap::zeros(raw.rows(), raw.cols());
        for (node, &local) in node_local.iter().enumerate() {
            out.row_mut(node).copy_from_slice(raw.row(local));
        }
        Ok((
            out,
            DecodeCache {
                z: z.to_vec(),
                fc_pre,
                conv_in,
                conv_pre,
                out_in,
            },
        ))
    }

    /// Gradient of the latent code; parameter gradients accumulate into
    /// `grads`. `g_out` rows are in node order, matching `decode_features`.
    pub(crate) fn decode_backward(
        &self,
        cache: &DecodeCache,
        g_out: &FeatureMap<f64>,
        grads: &mut GradStore<f64>,
    ) -> Vec<f64> {
        let node_local = self.hierarchy.node_local();
        let mut g_raw = FeatureMap::zeros(g_out.rows(), g_out.cols());
        for (node, &local) in node_local.iter().enumerate() {
            g_raw.row_mut(local).copy_from_slice(g_out.row(node));
        }
        let mut g = self.conv_backward(&self.net.out_conv, &cache.out_in, &g_raw, grads);
        let up_count = self.net.up_convs.len();
        let levels = self.hierarchy.level_count();
        for i in (0..up_count + 2).rev() {
            let layer = if i < up_count {
                &self.net.up_convs[i]
            } else {
                &self.net.refine[i - up_count]
            };
            let g_pre = elu_backward(&cache.conv_pre[i], &g);
            g = self.conv_backward(layer, &cache.conv_in[i], &g_pre, grads);
            if i < up_count {
                g = upsample_backward(self.hierarchy.level(levels - 1 - i), &g);
            }
        }
        let ga = g.data();
        let gu: Vec<f64> = cache
            .fc_pre
            .iter()
            .zip(ga)
            .map(|(&p, &gy)| gy * elu_grad_scalar(p))
            .collect();
        let (gw, gb) = grads.slot_pair_mut(self.net.dec_fc_w, self.net.dec_fc_b);
        fc_backward(
            self.params.value(self.net.dec_fc_w),
            &cache.z,
            &gu,
            gw,
            gb,
        )
    }

    pub fn decode(&self, z: &[f64]) -> Result<DecoderOutput, ModelError> {
        let (features, _) = self.decode_features(z)?;
        Ok(DecoderOutput { features })
    }

    /// Smallest |pre-activation| along the decode path. Finite-difference
    /// gradient checks need this margin to clear the activation kink.
    pub fn decode_margin(&self, z: &[f64]) -> Result<f64, ModelError> {
        let (_, cache) = self.decode_features(z)?;
        Ok(cache.min_abs_preactivation())
    }

    /// Converts raw decoder features into per-node transforms according to
    /// the training variant.
    pub fn node_transforms(&self, output: &DecoderOutput) -> Result<NodeTransforms, ModelError> {
        let l = self.graph.node_count();
        let f = &output.features;
        if f.rows() != l || f.cols() != self.net.out_channels {
            return Err(ModelError::shape(
                "decoder output",
                format!("{l}x{}", self.net.out_channels),
                format!("{}x{}", f.rows(), f.cols()),
            ));
        }
        match self.config.training_variant {
            TrainingVariant::Edl => {
                let mut t = NodeTransforms::zeros(l);
                for i in 0..l {
                    let row = f.row(i);
                    t.euler_angles[i] = Vector3::new(row[0], row[1], row[2]);
                    t.translations[i] = Vector3::new(row[3], row[4], row[5]);
                }
                Ok(t)
            }
            TrainingVariant::Lp => {
                // Translations come from the network; rotations are solved
                // per node from ring correspondences (no gradient path).
                let rest = self.graph.node_positions();
                let positions: Vec<Vector3<f64>> = (0..l)
                    .map(|i| {
                        let row = f.row(i);
                        rest[i] + Vector3::new(row[3], row[4], row[5])
                    })
                    .collect();
                Ok(transforms_from_positions(
                    &self.graph,
                    &self.graph_adjacency,
                    &positions,
                )?)
            }
            TrainingVariant::Gl => {
                let rest = self.graph.node_positions();
                let positions: Vec<Vector3<f64>> = (0..l)
                    .map(|i| {
                        let row = f.row(i);
                        rest[i] + Vector3::new(row[0], row[1], row[2])
                    })
                    .collect();
                Ok(transforms_from_positions(
                    &self.graph,
                    &self.graph_adjacency,
                    &positions,
                )?)
            }
        }
    }

    /// Decoded positions of the graph nodes (Gl parameterizes them as rest
    /// position + residual so the zero-initialized net starts at the rest
    /// graph).
    pub fn node_positions(&self, output: &DecoderOutput) -> Result<Vec<Vector3<f64>>, ModelError> {
        if self.config.training_variant != TrainingVariant::Gl {
            return Err(ModelError::Config(
                "node_positions is only defined for the Gl variant".into(),
            ));
        }
        let rest = self.graph.node_positions();
        let f = &output.features;
        Ok((0..f.rows())
            .map(|i| {
                let row = f.row(i);
                rest[i] + Vector3::new(row[0], row[1], row[2])
            })
            .collect())
    }

    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<Vector3<f64>>, ModelError> {
        let output = self.decode(z)?;
        let transforms = self.node_transforms(&output)?;
        let mut state = EdlState::new();
        Ok(edl_forward(
            self.template(),
            &self.graph,
            &self.binding,
            &transforms,
            &mut state,
        )?)
    }

    /// Encode-then-reconstruct round trip.
    pub fn roundtrip(
        &self,
        vertices: &[Vector3<f64>],
    ) -> Result<(Vec<f64>, Vec<Vector3<f64>>), ModelError> {
        let z = self.encode(vertices)?;
        let recon = self.reconstruct(&z)?;
        Ok((z, recon))
    }

    /// Variant loss of one decoded latent against a target mesh, without
    /// gradients.
    pub fn decode_loss(&self, z: &[f64], target: &[Vector3<f64>]) -> Result<f64, ModelError> {
        let (features, _) = self.decode_features(z)?;
        let output = DecoderOutput { features };
        match self.config.training_variant {
            TrainingVariant::Edl | TrainingVariant::Lp => {
                let transforms = self.node_transforms(&output)?;
                let mut state = EdlState::new();
                let pred = edl_forward(
                    self.template(),
                    &self.graph,
                    &self.binding,
                    &transforms,
                    &mut state,
                )?;
                Ok(l1_vertex_loss(&pred, target)?.0)
            }
            TrainingVariant::Gl => {
                let positions = self.node_positions(&output)?;
                Ok(l1_graph_loss(&positions, self.graph.node_to_vertex(), target)?.0)
            }
        }
    }

    /// Loss and gradients of the decode -> deformation -> loss chain with
    /// respect to the latent code; parameter gradients accumulate into
    /// `grads`.
    pub fn decode_loss_and_grads(
        &self,
        z: &[f64],
        target: &[Vector3<f64>],
        grads: &mut GradStore<f64>,
    ) -> Result<(f64, Vec<f64>), ModelError> {
        let (features, cache) = self.decode_features(z)?;
        let rows = features.rows();
        let cols = features.cols();
        let output = DecoderOutput { features };
        let mut g_out = FeatureMap::zeros(rows, cols);
        let loss = match self.config.training_variant {
            TrainingVariant::Edl => {
                let transforms = self.node_transforms(&output)?;
                let mut state = EdlState::new();
                let pred = edl_forward(
                    self.template(),
                    &self.graph,
                    &self.binding,
                    &transforms,
                    &mut state,
                )?;
                let (loss, g_vert) = l1_vertex_loss(&pred, target)?;
                let eg = edl_backward(&self.binding, &state, &g_vert)?;
                for i in 0..rows {
                    let row = g_out.row_mut(i);
                    let da = eg.d_euler_angles[i];
                    let dt = eg.d_translations[i];
                    row[0] = da.x;
                    row[1] = da.y;
                    row[2] = da.z;
                    row[3] = dt.x;
                    row[4] = dt.y;
                    row[5] = dt.z;
                }
                loss
            }
            TrainingVariant::Lp => {
                let transforms = self.node_transforms(&output)?;
                let mut state = EdlState::new();
                let pred = edl_forward(
                    self.template(),
                    &self.graph,
                    &self.binding,
                    &transforms,
                    &mut state,
                )?;
                let (loss, g_vert) = l1_vertex_loss(&pred, target)?;
                let eg = edl_backward(&self.binding, &state, &g_vert)?;
                // Only the translation channels carry gradient; the rotation
                // solve is excluded from differentiation by construction.
                for i in 0..rows {
                    let row = g_out.row_mut(i);
                    let dt = eg.d_translations[i];
                    row[3] = dt.x;
                    row[4] = dt.y;
                    row[5] = dt.z;
                }
                loss
            }
            TrainingVariant::Gl => {
                let positions = self.node_positions(&output)?;
                let (loss, g_pos) =
                    l1_graph_loss(&positions, self.graph.node_to_vertex(), target)?;
                for i in 0..rows {
                    let row = g_out.row_mut(i);
                    row[0] = g_pos[i].x;
                    row[1] = g_pos[i].y;
                    row[2] = g_pos[i].z;
                }
                loss
            }
        };
        let gz = self.decode_backward(&cache, &g_out, grads);
        Ok((loss, gz))
    }

    /// Full autoencoder loss and parameter gradients for one sample.
    pub fn sample_loss_and_grads(
        &self,
        sample: &[Vector3<f64>],
        grads: &mut GradStore<f64>,
    ) -> Result<f64, ModelError> {
        let x = FeatureMap::from_vertices(sample);
        let (z, enc_cache) = self.encode_features(&x)?;
        let (loss, gz) = self.decode_loss_and_grads(&z, sample, grads)?;
        let _g_input = self.encode_backward(&enc_cache, &gz, grads);
        Ok(loss)
    }
}

/// Per-node transforms implied by deformed node positions: translation is
/// the node displacement, rotation is the rigid Procrustes fit between the
/// rest and deformed rings (node plus graph neighbors). Degenerate rings
/// fall back to the identity rotation.
pub fn transforms_from_positions(
    graph: &DeformationGraph,
    adjacency: &[Vec<usize>],
    positions: &[Vector3<f64>],
) -> Result<NodeTransforms, ModelError> {
    let l = graph.node_count();
    if positions.len() != l {
        return Err(ModelError::shape("node positions", l, positions.len()));
    }
    let rest = graph.node_positions();
    let mut transforms = NodeTransforms::zeros(l);
    for i in 0..l {
        let mut canonical = Vec::with_capacity(adjacency[i].len() + 1);
        let mut deformed = Vec::with_capacity(adjacency[i].len() + 1);
        canonical.push(rest[i]);
        deformed.push(positions[i]);
        for &m in &adjacency[i] {
            canonical.push(rest[m]);
            deformed.push(positions[m]);
        }
        let (r, _degenerate) = procrustes_rotation(&canonical, &deformed)?;
        transforms.euler_angles[i] = rotation_to_euler(&r);
        transforms.translations[i] = positions[i] - rest[i];
    }
    Ok(transforms)
}
