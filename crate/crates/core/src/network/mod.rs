//! The two-hand reconstruction network.
//!
//! A strided convolutional encoder produces four maps `F_0..F_3`. The
//! initial estimate pools the coarsest map under one sigmoid attention map
//! per hand and regresses pose, shape and camera for each hand plus the
//! left-minus-right wrist offset. Each refinement stage then
//!
//! 1. fuses the upsampled decoder map with an encoder skip (1×1 conv),
//! 2. builds joint features from projected coordinates and bilinear reads,
//! 3. runs a skeletal GCN per hand and a transformer over both hands,
//! 4. projects every joint's feature into its own plane and reduces the
//!    planes back onto the decoder map, followed by a residual block,
//! 5. regresses residual updates of all parameters and the offset.
//!
//! Segmentation and correspondence heads read the final decoder map.

mod layers;
mod output;

pub use layers::{Conv, Dense};
pub use output::{HandOutput, ModelOutput, StageOutput};

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::MAX_PLANE_SIDE;
use crate::hand_model::{HandPair, HandTemplate, Handedness, NUM_JOINTS, POSE_DIM, THETA_DIM, NUM_SHAPE};
use crate::interaction::{GcnStack, TransformerStack, NUM_TOKENS};
use crate::numerics::{init, FeatureGrid, Graph, ParamId, ParamStore, Tensor, Var};
use crate::{Error, Result};

/// Raw camera `c` maps to `s = SCALE_BASE · size · exp(c_0)`,
/// `t = size/2 · (1 + c_{1,2})`.
pub const SCALE_BASE: f64 = 2.5;
/// Offsets are regressed in units of this many meters.
pub const OFFSET_UNIT: f64 = 0.1;
const HEAD_GAIN: f64 = 0.01;

/// How refined joint features return to the visual map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// One plane per joint and hand, reduced by a learned 1×1 map.
    MultiPlane,
    /// All joint features splatted into one shared plane.
    SinglePlane,
    /// One Gaussian heatmap per joint, no features.
    HeatmapPlane,
    NoGcn,
    NoTransformer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub image_size: usize,
    pub encoder_widths: [usize; 4],
    /// Decoder map channels.
    pub channels: usize,
    pub joint_channels: usize,
    pub gcn_depth: usize,
    pub transformer_depth: usize,
    pub heads: usize,
    pub ff_expansion: usize,
    /// Refinement stages `T`.
    pub stages: usize,
    pub variant: Variant,
    pub heatmap_sigma: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            image_size: 64,
            encoder_widths: [16, 32, 32, 32],
            channels: 32,
            joint_channels: 32,
            gcn_depth: 4,
            transformer_depth: 4,
            heads: 4,
            ff_expansion: 2,
            stages: 2,
            variant: Variant::MultiPlane,
            heatmap_sigma: 1.0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if ![64, 128, 256].contains(&self.image_size) {
            return Err(Error::config("net.image_size", "must be 64, 128 or 256"));
        }
        if self.encoder_widths.contains(&0) || self.channels == 0 || self.joint_channels == 0 {
            return Err(Error::config("net", "widths must be positive"));
        }
        if self.stages > 3 {
            return Err(Error::config("net.stages", "at most 3 refinement stages"));
        }
        if self.heads == 0 || self.joint_channels % self.heads != 0 {
            return Err(Error::config("net.heads", "must divide joint_channels"));
        }
        if self.ff_expansion == 0 {
            return Err(Error::config("net.ff_expansion", "must be positive"));
        }
        if !(self.heatmap_sigma > 0.0) {
            return Err(Error::config("net.heatmap_sigma", "must be > 0"));
        }
        Ok(())
    }

    /// Side of encoder map `n`.
    pub fn encoder_side(&self, n: usize) -> usize {
        self.image_size >> (n + 1)
    }

    /// Decoder side at refinement stage `t` (0-based).
    pub fn stage_side(&self, t: usize) -> usize {
        self.encoder_side(2 - t).min(MAX_PLANE_SIDE)
    }

    /// Side of the map the auxiliary heads see.
    pub fn final_side(&self) -> usize {
        if self.stages == 0 {
            self.encoder_side(3)
        } else {
            self.stage_side(self.stages - 1)
        }
    }
}

#[derive(Debug, Clone)]
struct EncoderStage {
    down: Conv,
    residual: Option<Conv>,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    stages: Vec<EncoderStage>,
}

impl Encoder {
    fn new(store: &mut ParamStore, cfg: &NetConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut cin = 3;
        let stages = cfg
            .encoder_widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let down = Conv::new(store, &format!("enc.{i}.down"), cin, w, 3, 2, 1.0, rng);
                let residual = (i > 0).then(|| Conv::new(store, &format!("enc.{i}.res"), w, w, 3, 1, 0.5, rng));
                cin = w;
                EncoderStage { down, residual }
            })
            .collect();
        Encoder { stages }
    }

    /// `F_0..F_3`, finest first.
    pub fn forward(&self, g: &mut Graph<'_>, image: Var) -> Result<Vec<Var>> {
        let mut x = image;
        let mut out = Vec::with_capacity(self.stages.len());
        for s in &self.stages {
            let y = s.down.forward(g, x)?;
            x = g.tape.relu(y);
            if let Some(r) = &s.residual {
                let y = r.forward(g, x)?;
                let y = g.tape.relu(y);
                x = g.tape.add(x, y)?;
            }
            out.push(x);
        }
        Ok(out)
    }
}

/// Per-hand sigmoid attention, masked average pooling and linear heads.
#[derive(Debug, Clone)]
pub struct InitialHead {
    pub attention: Conv,
    pub left: Dense,
    pub right: Dense,
    pub offset: Dense,
}

/// Recorded per-hand quantities of one stage.
#[derive(Debug, Clone, Copy)]
pub struct HandVars {
    /// Pose then shape, `[58]`.
    pub theta: Var,
    pub camera_raw: Var,
    /// `[s, tx, ty]`.
    pub camera: Var,
    /// Root-relative `[V, 3]` and `[21, 3]` in meters.
    pub vertices: Var,
    pub joints: Var,
    /// Pixel coordinates `[V, 2]` and `[21, 2]`.
    pub vertices_2d: Var,
    pub joints_2d: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct StageVars {
    pub left: HandVars,
    pub right: HandVars,
    /// Left wrist minus right wrist, meters.
    pub offset: Var,
}

impl StageVars {
    pub fn hand(&self, h: Handedness) -> &HandVars {
        match h {
            Handedness::Left => &self.left,
            Handedness::Right => &self.right,
        }
    }
}

/// Everything one forward pass records.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub features: Vec<Var>,
    /// `[2, h, w]` left/right attention of the initial estimate.
    pub attention: Var,
    pub stages: Vec<StageVars>,
    /// Decoder map after each refinement stage.
    pub decoder: Vec<Var>,
    /// Joint features `[21, C_j]` (left, right) entering the interaction
    /// blocks, per refinement stage.
    pub joint_features: Vec<(Var, Var)>,
    pub seg: Var,
    pub corr: Var,
}

#[derive(Debug, Clone)]
pub struct RefineStage {
    pub fuse: Conv,
    pub coord: Dense,
    pub visual: Dense,
    pub gcn: Option<GcnStack>,
    pub transformer: Option<TransformerStack>,
    /// `[C, 42·C_j]` for the multi-plane reduction.
    pub plane_weight: Option<ParamId>,
    /// 1×1 map of the single or heatmap plane onto `C` channels.
    pub plane_conv: Option<Conv>,
    pub enhance: Conv,
    pub enhance_out: Conv,
    pub left: Dense,
    pub right: Dense,
    pub offset: Dense,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: NetConfig,
    pub templates: HandPair,
    pub encoder: Encoder,
    pub initial: InitialHead,
    pub stages: Vec<RefineStage>,
    pub seg_head: Conv,
    pub corr_head: Conv,
}

fn hand_head_out() -> usize {
    THETA_DIM + 3
}

impl Model {
    /// Builds the model and its freshly initialised parameters.
    pub fn new(cfg: NetConfig, templates: HandPair, seed: u64) -> Result<(Model, ParamStore)> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let rng = &mut rng;
        let encoder = Encoder::new(&mut store, &cfg, rng);
        let [_, w1, w2, w3] = cfg.encoder_widths;
        let initial = InitialHead {
            attention: Conv::new(&mut store, "init.attention", w3, 2, 1, 1, 1.0, rng),
            left: Dense::new(&mut store, "init.left", w3, hand_head_out(), 0.1, rng),
            right: Dense::new(&mut store, "init.right", w3, hand_head_out(), 0.1, rng),
            offset: Dense::new(&mut store, "init.offset", w3, 3, 0.1, rng),
        };
        let (c, cj) = (cfg.channels, cfg.joint_channels);
        let mut stages = Vec::with_capacity(cfg.stages);
        let mut prev_c = w3;
        for t in 0..cfg.stages {
            let skip_c = [w2, w1, cfg.encoder_widths[0]][t];
            let n = format!("stage.{t}");
            let use_gcn = cfg.variant != Variant::NoGcn;
            let use_tf = cfg.variant != Variant::NoTransformer;
            let (plane_weight, plane_conv) = match cfg.variant {
                Variant::SinglePlane => (None, Some(Conv::new(&mut store, &format!("{n}.plane"), cj, c, 1, 1, 0.5, rng))),
                Variant::HeatmapPlane => (None, Some(Conv::new(&mut store, &format!("{n}.plane"), NUM_TOKENS, c, 1, 1, 0.5, rng))),
                _ => (
                    Some(store.add(format!("{n}.planes"), init::he(rng, &[c, NUM_TOKENS * cj], cj, 0.5))),
                    None,
                ),
            };
            stages.push(RefineStage {
                fuse: Conv::new(&mut store, &format!("{n}.fuse"), prev_c + skip_c, c, 1, 1, 1.0, rng),
                coord: Dense::new(&mut store, &format!("{n}.coord"), 3, cj, 1.0, rng),
                visual: Dense::new(&mut store, &format!("{n}.visual"), c, cj, 1.0, rng),
                gcn: use_gcn.then(|| GcnStack::new(&mut store, &format!("{n}.gcn"), cj, cfg.gcn_depth, rng)),
                transformer: use_tf.then(|| {
                    TransformerStack::new(&mut store, &format!("{n}.tf"), cj, cfg.transformer_depth, cfg.heads, cfg.ff_expansion, rng)
                }),
                plane_weight,
                plane_conv,
                enhance: Conv::new(&mut store, &format!("{n}.enhance"), c, c, 3, 1, 1.0, rng),
                enhance_out: Conv::new(&mut store, &format!("{n}.enhance_out"), c, c, 1, 1, 0.5, rng),
                left: Dense::new(&mut store, &format!("{n}.left"), NUM_JOINTS * cj + c, hand_head_out(), HEAD_GAIN, rng),
                right: Dense::new(&mut store, &format!("{n}.right"), NUM_JOINTS * cj + c, hand_head_out(), HEAD_GAIN, rng),
                offset: Dense::new(&mut store, &format!("{n}.offset"), 2 * NUM_JOINTS * cj + c, 3, HEAD_GAIN, rng),
            });
            prev_c = c;
        }
        let final_c = if cfg.stages == 0 { w3 } else { c };
        let seg_head = Conv::new(&mut store, "aux.seg", final_c, 2, 1, 1, 1.0, rng);
        let corr_head = Conv::new(&mut store, "aux.corr", final_c, 3, 1, 1, 1.0, rng);
        let model = Model {
            cfg,
            templates,
            encoder,
            initial,
            stages,
            seg_head,
            corr_head,
        };
        Ok((model, store))
    }

    fn template(&self, h: Handedness) -> &Arc<HandTemplate> {
        self.templates.get(h)
    }

    /// Meshes, joints and projections for raw `theta` and camera.
    fn hand_geometry(&self, g: &mut Graph<'_>, h: Handedness, theta: Var, camera_raw: Var) -> Result<HandVars> {
        let size = self.cfg.image_size as f64;
        let t = &mut g.tape;
        let c0 = t.slice_flat(camera_raw, 0, &[1])?;
        let s = t.exp(c0);
        let s = t.scale(s, SCALE_BASE * size);
        let ct = t.slice_flat(camera_raw, 1, &[2])?;
        let ct = t.scale(ct, size / 2.0);
        let ct = t.add_scalar(ct, size / 2.0);
        let camera = t.concat(&[s, ct])?;
        let pose = t.slice_flat(theta, 0, &[POSE_DIM])?;
        let shape = t.slice_flat(theta, POSE_DIM, &[NUM_SHAPE])?;
        let template = Arc::clone(self.template(h));
        let verts = g.tape.lbs(&template, pose, shape)?;
        let joints = g.tape.regress_joints(&template, verts)?;
        let t = &mut g.tape;
        let root = t.slice_flat(joints, 0, &[3])?;
        let neg = t.scale(root, -1.0);
        let vertices = t.add_row_bias(verts, neg)?;
        let joints = t.add_row_bias(joints, neg)?;
        let vertices_2d = t.project(vertices, camera)?;
        let joints_2d = t.project(joints, camera)?;
        Ok(HandVars {
            theta,
            camera_raw,
            camera,
            vertices,
            joints,
            vertices_2d,
            joints_2d,
        })
    }

    fn split_head(&self, g: &mut Graph<'_>, out: Var) -> Result<(Var, Var)> {
        let theta = g.tape.slice_flat(out, 0, &[THETA_DIM])?;
        let cam = g.tape.slice_flat(out, THETA_DIM, &[3])?;
        Ok((theta, cam))
    }

    fn initial_estimate(&self, g: &mut Graph<'_>, f3: Var) -> Result<(StageVars, Var)> {
        let (_, hh, ww) = g.tape.value(f3).dims3()?;
        let logits = self.initial.attention.forward(g, f3)?;
        let attention = g.tape.sigmoid(logits);
        let mut pooled = Vec::with_capacity(2);
        for k in 0..2 {
            let a = g.tape.slice_flat(attention, k * hh * ww, &[1, hh, ww])?;
            let masked = g.tape.mul_spatial(f3, a)?;
            pooled.push(g.tape.global_avg_pool(masked)?);
        }
        let plain = g.tape.global_avg_pool(f3)?;
        let lo = self.initial.left.forward(g, pooled[0])?;
        let ro = self.initial.right.forward(g, pooled[1])?;
        let oo = self.initial.offset.forward(g, plain)?;
        let (lt, lc) = self.split_head(g, lo)?;
        let (rt, rc) = self.split_head(g, ro)?;
        let offset = g.tape.scale(oo, OFFSET_UNIT);
        let left = self.hand_geometry(g, Handedness::Left, lt, lc)?;
        let right = self.hand_geometry(g, Handedness::Right, rt, rc)?;
        Ok((StageVars { left, right, offset }, attention))
    }

    /// Joint features `J = J_coord + J_visual` of one hand at map side `side`.
    fn joint_features(&self, g: &mut Graph<'_>, stage: &RefineStage, fused: Var, hand: &HandVars, shift: Option<Var>, side: usize) -> Result<Var> {
        let size = self.cfg.image_size as f64;
        let t = &mut g.tape;
        let grid = t.scale(hand.joints_2d, side as f64 / size);
        let grid = t.add_scalar(grid, -0.5);
        let visual = t.sample_joints(fused, grid)?;
        let coords = match shift {
            Some(o) => t.add_row_bias(hand.joints, o)?,
            None => hand.joints,
        };
        let coords = t.scale(coords, 1.0 / OFFSET_UNIT);
        let jc = stage.coord.forward_rows(g, coords)?;
        let jv = stage.visual.forward_rows(g, visual)?;
        g.tape.add(jc, jv)
    }

    fn refine(&self, g: &mut Graph<'_>, t: usize, prev: &StageVars, decoder: Var, skip: Var) -> Result<(StageVars, Var, (Var, Var))> {
        let stage = &self.stages[t];
        let side = self.cfg.stage_side(t);
        let cj = self.cfg.joint_channels;
        let (_, dh, _) = g.tape.value(decoder).dims3()?;
        let (_, sh, _) = g.tape.value(skip).dims3()?;
        let up = if side > dh { g.tape.upsample_nearest(decoder, side / dh)? } else { decoder };
        let skip = if sh > side { g.tape.avg_pool(skip, sh / side)? } else { skip };
        let cat = g.tape.concat(&[up, skip])?;
        let fused = stage.fuse.forward(g, cat)?;

        let jl = self.joint_features(g, stage, fused, &prev.left, Some(prev.offset), side)?;
        let jr = self.joint_features(g, stage, fused, &prev.right, None, side)?;
        let (mut hl, mut hr) = (jl, jr);
        if let Some(gcn) = &stage.gcn {
            (hl, hr) = gcn.forward_pair(g, hl, hr)?;
        }
        let mut tokens = g.tape.concat(&[hl, hr])?;
        if let Some(tf) = &stage.transformer {
            tokens = tf.forward(g, tokens)?;
        }

        let size = self.cfg.image_size as f64;
        let coords = g.tape.concat(&[prev.left.joints_2d, prev.right.joints_2d])?;
        let coords = g.tape.scale(coords, side as f64 / size);
        let coords = g.tape.add_scalar(coords, -0.5);
        let planes = match self.cfg.variant {
            Variant::SinglePlane => {
                let m = g.tape.splat_sum(tokens, coords, side, side)?;
                stage.plane_conv.as_ref().expect("single-plane conv").forward(g, m)?
            }
            Variant::HeatmapPlane => {
                let m = g.tape.gaussian_heatmaps(coords, side, side, self.cfg.heatmap_sigma)?;
                stage.plane_conv.as_ref().expect("heatmap conv").forward(g, m)?
            }
            _ => {
                let w = g.p(stage.plane_weight.expect("plane weight"));
                g.tape.splat_reduce(tokens, coords, w, side, side)?
            }
        };
        let x = g.tape.add(fused, planes)?;
        let h = stage.enhance.forward(g, x)?;
        let h = g.tape.relu(h);
        let h = stage.enhance_out.forward(g, h)?;
        let decoder = g.tape.add(x, h)?;

        let global = g.tape.global_avg_pool(decoder)?;
        let fl = g.tape.slice_flat(tokens, 0, &[NUM_JOINTS * cj])?;
        let fr = g.tape.slice_flat(tokens, NUM_JOINTS * cj, &[NUM_JOINTS * cj])?;
        let in_l = g.tape.concat(&[fl, global])?;
        let in_r = g.tape.concat(&[fr, global])?;
        let in_o = g.tape.concat(&[fl, fr, global])?;
        let dl = stage.left.forward(g, in_l)?;
        let dr = stage.right.forward(g, in_r)?;
        let dout = stage.offset.forward(g, in_o)?;
        let next = |g: &mut Graph<'_>, h: Handedness, prev: &HandVars, d: Var| -> Result<HandVars> {
            let (dt, dc) = self.split_head(g, d)?;
            let theta = g.tape.add(prev.theta, dt)?;
            let cam = g.tape.add(prev.camera_raw, dc)?;
            self.hand_geometry(g, h, theta, cam)
        };
        let left = next(g, Handedness::Left, &prev.left, dl)?;
        let right = next(g, Handedness::Right, &prev.right, dr)?;
        let d_off = g.tape.scale(dout, OFFSET_UNIT);
        let offset = g.tape.add(prev.offset, d_off)?;
        Ok((StageVars { left, right, offset }, decoder, (jl, jr)))
    }

    /// Records the full forward pass of one `[3, H, W]` image.
    pub fn forward(&self, g: &mut Graph<'_>, image: &FeatureGrid) -> Result<ForwardVars> {
        let s = self.cfg.image_size;
        if image.channels != 3 || image.height != s || image.width != s {
            return Err(Error::InvalidInput(format!(
                "image is {}x{}x{}, model expects 3x{s}x{s}",
                image.channels, image.height, image.width
            )));
        }
        let x = g.tape.constant(image.to_tensor());
        let features = self.encoder.forward(g, x)?;
        let (first, attention) = self.initial_estimate(g, features[3])?;
        let mut stages = vec![first];
        let mut decoder = features[3];
        let mut decoders = Vec::new();
        let mut joint_features = Vec::new();
        for t in 0..self.cfg.stages {
            let prev = stages[t];
            let (next, d, jf) = self.refine(g, t, &prev, decoder, features[2 - t])?;
            stages.push(next);
            decoder = d;
            decoders.push(d);
            joint_features.push(jf);
        }
        let seg = self.seg_head.forward(g, decoder)?;
        let seg = g.tape.sigmoid(seg);
        let corr = self.corr_head.forward(g, decoder)?;
        Ok(ForwardVars {
            features,
            attention,
            stages,
            decoder: decoders,
            joint_features,
            seg,
            corr,
        })
    }

    /// Inference without gradients.
    pub fn predict(&self, params: &ParamStore, image: &FeatureGrid) -> Result<ModelOutput> {
        let mut g = Graph::new(params, false);
        let vars = self.forward(&mut g, image)?;
        ModelOutput::read(&g.tape, &vars)
    }

    /// Parameter ids of the residual heads of every refinement stage.
    pub fn residual_head_params(&self) -> Vec<ParamId> {
        self.stages
            .iter()
            .flat_map(|s| [s.left.weight, s.left.bias, s.right.weight, s.right.bias, s.offset.weight, s.offset.bias])
            .collect()
    }
}

/// Zeroes the residual heads so that every stage repeats the initial
/// estimate.
pub fn zero_residual_heads(model: &Model, params: &mut ParamStore) {
    for id in model.residual_head_params() {
        let t = params.get_mut(id);
        *t = Tensor::zeros(t.shape().to_vec());
    }
}
