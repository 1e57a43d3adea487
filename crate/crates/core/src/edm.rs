//! Expression decoupling module: an encoder from observed 2D landmarks to
//! (expression, pose, morphology), trained self-supervised against the fixed
//! head-model decoder with the L1 landmark loss. The in-plane similarity
//! (scale + translation) is solved in closed form per sample and treated as a
//! constant for gradient purposes; gradients flow through the projection, the
//! linear model and the rotation into the encoder.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::headmodel::{
    landmark_loss, project_2d, solve_alignment, Alignment, FaceParams, HeadModel, LandmarkDecoder,
    Landmarks2D,
};
use crate::jsonio;
use crate::linalg::{dot3, rotate, rotate_grad_p, rotate_transpose};
use crate::nnet::{self, Activation, AdamState, Gradients, Network};
use crate::rng;
use crate::synthdata::FaceSample;

pub const EDM_FORMAT_VERSION: u32 = 1;
pub const CANONICALIZATION: &str = "center-rms";

const STREAM_NET: u64 = 0x6e65_7431;
const STREAM_SHUFFLE: u64 = 0x7368_7566;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdmTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    pub seed: u64,
}

fn default_hidden() -> Vec<usize> {
    vec![256, 256]
}

impl Default for EdmTrainConfig {
    fn default() -> Self {
        EdmTrainConfig {
            epochs: 500,
            lr: 1e-4,
            batch: 16,
            hidden: default_hidden(),
            seed: 0,
        }
    }
}

impl EdmTrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::invalid("zero-width hidden layer"));
        }
        Ok(())
    }
}

/// Dimension block the encoder was trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadModelRef {
    pub model_seed: u64,
    pub n_vertices: usize,
    pub n_shape: usize,
    pub n_expr: usize,
    pub n_landmarks: usize,
    pub canonicalization: String,
}

impl HeadModelRef {
    pub fn of(model: &HeadModel) -> HeadModelRef {
        HeadModelRef {
            model_seed: model.seed,
            n_vertices: model.n_vertices,
            n_shape: model.n_shape,
            n_expr: model.n_expr,
            n_landmarks: model.n_landmarks,
            canonicalization: CANONICALIZATION.to_string(),
        }
    }

    pub fn matches(&self, model: &HeadModel) -> bool {
        self.model_seed == model.seed
            && self.n_vertices == model.n_vertices
            && self.n_shape == model.n_shape
            && self.n_expr == model.n_expr
            && self.n_landmarks == model.n_landmarks
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdmModel {
    pub format_version: u32,
    pub role: String,
    pub net: Network,
    pub head_ref: HeadModelRef,
    pub config: EdmTrainConfig,
}

pub struct TrainedEdm {
    pub model: EdmModel,
    /// Mean per-sample training loss of each epoch.
    pub loss_trace: Vec<f64>,
}

/// Canonicalizes landmarks for the encoder: center on the landmark centroid,
/// scale by the RMS radius, flatten interleaved (x0, y0, x1, y1, ...).
pub fn canonicalize(observed: &Landmarks2D) -> Result<Vec<f64>> {
    let n = observed.len();
    if n == 0 {
        return Err(Error::invalid("empty landmark set"));
    }
    let nf = n as f64;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for p in &observed.points {
        cx += p[0];
        cy += p[1];
    }
    cx /= nf;
    cy /= nf;
    let mut sq = 0.0;
    for p in &observed.points {
        let dx = p[0] - cx;
        let dy = p[1] - cy;
        sq += dx * dx + dy * dy;
    }
    let rms = (sq / nf).sqrt();
    if rms == 0.0 || !rms.is_finite() {
        return Err(Error::degenerate("landmarks coincide; RMS radius is zero"));
    }
    let mut out = Vec::with_capacity(2 * n);
    for p in &observed.points {
        out.push((p[0] - cx) / rms);
        out.push((p[1] - cy) / rms);
    }
    Ok(out)
}

fn split_output(out: &[f64], n_expr: usize, n_shape: usize) -> FaceParams {
    FaceParams {
        expression: out[..n_expr].to_vec(),
        pose: [out[n_expr], out[n_expr + 1], out[n_expr + 2]],
        morphology: out[n_expr + 3..n_expr + 3 + n_shape].to_vec(),
    }
}

/// Runs the encoder on observed landmarks and splits the output into
/// (expression, pose, morphology).
pub fn infer(edm: &EdmModel, observed: &Landmarks2D) -> Result<FaceParams> {
    if observed.len() != edm.head_ref.n_landmarks {
        return Err(Error::dimension(format!(
            "{} landmarks, encoder expects {}",
            observed.len(),
            edm.head_ref.n_landmarks
        )));
    }
    let x = canonicalize(observed)?;
    let out = edm.net.predict(&x)?;
    Ok(split_output(&out, edm.head_ref.n_expr, edm.head_ref.n_shape))
}

/// Decodes the sample under the current network and evaluates the aligned L1
/// loss. When `fixed_align` is given it is used instead of the per-sample
/// solve; the gradient path always treats the alignment as a constant, so the
/// finite-difference oracle evaluates this with the base alignment frozen.
#[cfg(test)]
fn forward_loss(
    net: &Network,
    decoder: &LandmarkDecoder,
    observed: &Landmarks2D,
    fixed_align: Option<&Alignment>,
) -> Result<f64> {
    let x = canonicalize(observed)?;
    let out = net.predict(&x)?;
    let params = split_output(&out, decoder.n_expr, decoder.n_shape);
    let predicted = Landmarks2D {
        points: decoder
            .morph(&params.expression, &params.morphology)
            .into_iter()
            .map(|v| {
                let r = rotate(params.pose, v);
                [r[0], r[1]]
            })
            .collect(),
    };
    let align = match fixed_align {
        Some(a) => *a,
        None => solve_alignment(observed, &predicted)?,
    };
    landmark_loss(observed, &predicted, &align)
}

/// Loss and parameter gradients of one sample. Returns the alignment it
/// solved so callers can freeze it.
fn sample_loss_grads(
    net: &Network,
    decoder: &LandmarkDecoder,
    observed: &Landmarks2D,
) -> Result<(f64, Gradients, Alignment)> {
    let n_expr = decoder.n_expr;
    let n_shape = decoder.n_shape;
    let x = canonicalize(observed)?;
    let (out, tape) = net.forward(&x)?;
    let params = split_output(&out, n_expr, n_shape);

    let unrotated = decoder.morph(&params.expression, &params.morphology);
    let predicted: Vec<[f64; 2]> = unrotated
        .iter()
        .map(|&v| {
            let r = rotate(params.pose, v);
            [r[0], r[1]]
        })
        .collect();
    let predicted = Landmarks2D { points: predicted };
    let align = solve_alignment(observed, &predicted)?;

    let mut loss = 0.0;
    let s = align.scale;
    let mut g_e = vec![0.0; n_expr];
    let mut g_p = [0.0f64; 3];
    let mut g_m = vec![0.0; n_shape];
    let mut g_lm = Vec::with_capacity(observed.len());
    for (o, p) in observed.points.iter().zip(&predicted.points) {
        let rx = o[0] - (s * p[0] + align.t_x);
        let ry = o[1] - (s * p[1] + align.t_y);
        loss += rx.abs() + ry.abs();
        g_lm.push([-s * sign(rx), -s * sign(ry), 0.0]);
    }
    for (i, &g) in g_lm.iter().enumerate() {
        let gp = rotate_grad_p(params.pose, unrotated[i], g);
        g_p[0] += gp[0];
        g_p[1] += gp[1];
        g_p[2] += gp[2];
    }
    // dL/de_k = sum_i (R^T g_i) . expr_k_i, likewise for morphology.
    let back_rotated: Vec<[f64; 3]> = g_lm
        .iter()
        .map(|&g| rotate_transpose(params.pose, g))
        .collect();
    for k in 0..n_expr {
        let field = decoder.expr_field(k);
        let mut acc = 0.0;
        for (gt, f) in back_rotated.iter().zip(field) {
            acc += dot3(*gt, *f);
        }
        g_e[k] = acc;
    }
    for k in 0..n_shape {
        let field = decoder.shape_field(k);
        let mut acc = 0.0;
        for (gt, f) in back_rotated.iter().zip(field) {
            acc += dot3(*gt, *f);
        }
        g_m[k] = acc;
    }

    let mut upstream = Vec::with_capacity(n_expr + 3 + n_shape);
    upstream.extend_from_slice(&g_e);
    upstream.extend_from_slice(&g_p);
    upstream.extend_from_slice(&g_m);
    let (grads, _) = net.backward(&tape, &upstream)?;
    Ok((loss, grads, align))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Trains the decoupling encoder. Per batch: infer parameters, decode
/// landmarks through the fixed head model, solve the alignment (held constant
/// for gradients), evaluate the L1 landmark loss and take one Adam step on
/// the batch-mean gradient. Returns the final model and the per-epoch mean
/// training loss.
pub fn train(dataset: &[FaceSample], model: &HeadModel, cfg: &EdmTrainConfig) -> Result<TrainedEdm> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    for s in dataset {
        if s.observed.len() != model.n_landmarks {
            return Err(Error::dimension(format!(
                "sample has {} landmarks, model expects {}",
                s.observed.len(),
                model.n_landmarks
            )));
        }
    }
    let in_dim = 2 * model.n_landmarks;
    let out_dim = model.n_expr + 3 + model.n_shape;
    let mut sizes = Vec::with_capacity(cfg.hidden.len() + 2);
    sizes.push(in_dim);
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(out_dim);
    let mut acts = vec![Activation::Tanh; cfg.hidden.len()];
    acts.push(Activation::Linear);
    let mut net = nnet::init_network(&sizes, &acts, rng::derive(cfg.seed, STREAM_NET))?;
    let mut state = AdamState::new(&net);
    let decoder = model.landmark_decoder();

    let n = dataset.len();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = rng::stream(rng::item_seed(cfg.seed, STREAM_SHUFFLE, epoch as u64));
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i as u64) as usize;
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let mut grads = Gradients::zeros_like(&net);
            for &idx in chunk {
                let (loss, g, _) = sample_loss_grads(&net, &decoder, &dataset[idx].observed)?;
                epoch_loss += loss;
                grads.add_assign(&g);
            }
            grads.scale(1.0 / chunk.len() as f64);
            nnet::adam_step(&mut net, &grads, &mut state, cfg.lr)?;
        }
        trace.push(epoch_loss / n as f64);
    }

    Ok(TrainedEdm {
        model: EdmModel {
            format_version: EDM_FORMAT_VERSION,
            role: "edm".to_string(),
            net,
            head_ref: HeadModelRef::of(model),
            config: cfg.clone(),
        },
        loss_trace: trace,
    })
}

/// Mean aligned L1 landmark loss of the encoder's re-decoded faces over a
/// sample set (the self-supervision objective, measured).
pub fn mean_landmark_loss(
    edm: &EdmModel,
    model: &HeadModel,
    samples: &[&FaceSample],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("empty sample set"));
    }
    if !edm.head_ref.matches(model) {
        return Err(Error::dimension("encoder was trained against a different model"));
    }
    let mut total = 0.0;
    for s in samples {
        let params = infer(edm, &s.observed)?;
        let lm3d = model.landmarks_3d(&params)?;
        let predicted = project_2d(&lm3d, &Alignment::IDENTITY)?;
        let align = solve_alignment(&s.observed, &predicted)?;
        total += landmark_loss(&s.observed, &predicted, &align)?;
    }
    Ok(total / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockMetrics {
    pub mse: f64,
    pub mae: f64,
}

/// Representation error blocks: the concatenation (e | p | m), expression
/// alone, morphology alone; each averaged over dimensions then samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepresentationError {
    pub overall: BlockMetrics,
    pub expression: BlockMetrics,
    pub morphology: BlockMetrics,
}

pub fn representation_error_from_params(
    predicted: &[FaceParams],
    ground_truth: &[FaceParams],
) -> Result<RepresentationError> {
    if predicted.is_empty() || predicted.len() != ground_truth.len() {
        return Err(Error::invalid(format!(
            "need matching non-empty parameter sets, got {} vs {}",
            predicted.len(),
            ground_truth.len()
        )));
    }
    let block = |sel: &dyn Fn(&FaceParams) -> Vec<f64>| -> Result<BlockMetrics> {
        let mut mse = 0.0;
        let mut mae = 0.0;
        for (p, g) in predicted.iter().zip(ground_truth) {
            let pv = sel(p);
            let gv = sel(g);
            if pv.len() != gv.len() {
                return Err(Error::dimension("parameter block lengths differ"));
            }
            let d = pv.len() as f64;
            let mut se = 0.0;
            let mut ae = 0.0;
            for (a, b) in pv.iter().zip(&gv) {
                let r = a - b;
                se += r * r;
                ae += r.abs();
            }
            mse += se / d;
            mae += ae / d;
        }
        let n = predicted.len() as f64;
        Ok(BlockMetrics { mse: mse / n, mae: mae / n })
    };
    Ok(RepresentationError {
        overall: block(&|p: &FaceParams| p.concat())?,
        expression: block(&|p: &FaceParams| p.expression.clone())?,
        morphology: block(&|p: &FaceParams| p.morphology.clone())?,
    })
}

/// Infers parameters for every test sample and scores them against the
/// ground truth carried by the samples.
pub fn representation_error(edm: &EdmModel, test: &[&FaceSample]) -> Result<RepresentationError> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let mut pred = Vec::with_capacity(test.len());
    let mut gt = Vec::with_capacity(test.len());
    for s in test {
        pred.push(infer(edm, &s.observed)?);
        gt.push(s.params.clone());
    }
    representation_error_from_params(&pred, &gt)
}

impl EdmModel {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        jsonio::write_file(path, self)
    }

    pub fn load_json(path: &Path) -> Result<EdmModel> {
        let edm: EdmModel = jsonio::read_versioned(path, EDM_FORMAT_VERSION)?;
        if edm.role != "edm" {
            return Err(Error::malformed(format!(
                "expected an edm model file, found role {:?}",
                edm.role
            )));
        }
        let expect_in = 2 * edm.head_ref.n_landmarks;
        let expect_out = edm.head_ref.n_expr + 3 + edm.head_ref.n_shape;
        if edm.net.input_dim() != expect_in || edm.net.output_dim() != expect_out {
            return Err(Error::malformed("network dims inconsistent with head reference"));
        }
        Ok(edm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::headmodel::build_head_model;
    use crate::synthdata::{generate_face_dataset, ParamPrior};

    fn small_model() -> HeadModel {
        build_head_model(7, 64, 2, 3, 10).unwrap()
    }

    fn small_cfg() -> EdmTrainConfig {
        EdmTrainConfig {
            epochs: 3,
            lr: 1e-3,
            batch: 8,
            hidden: vec![32, 32],
            seed: 9,
        }
    }

    #[test]
    fn config_defaults_match_protocol() {
        let cfg = EdmTrainConfig::default();
        assert_eq!(cfg.epochs, 500);
        assert_eq!(cfg.lr, 1e-4);
        assert_eq!(cfg.batch, 16);
        assert_eq!(cfg.hidden, vec![256, 256]);
    }

    #[test]
    fn infer_output_shapes_under_defaults() {
        let model = build_head_model(7, 512, 8, 10, 68).unwrap();
        let cfg = EdmTrainConfig { epochs: 0, ..EdmTrainConfig::default() };
        let dataset = generate_face_dataset(&model, &ParamPrior::default(), 2).unwrap();
        let trained = train(&dataset, &model, &cfg).unwrap();
        let params = infer(&trained.model, &dataset[0].observed).unwrap();
        assert_eq!(params.expression.len(), 10);
        assert_eq!(params.morphology.len(), 8);
    }

    #[test]
    fn zero_final_layer_gives_zero_params() {
        let model = small_model();
        let dataset = generate_face_dataset(&model, &ParamPrior { seed: 2, ..Default::default() }, 4).unwrap();
        let mut trained = train(&dataset, &model, &EdmTrainConfig { epochs: 0, ..small_cfg() }).unwrap();
        let last = trained.model.net.layers.len() - 1;
        for w in trained.model.net.layers[last].weights.iter_mut() {
            *w = 0.0;
        }
        let params = infer(&trained.model, &dataset[0].observed).unwrap();
        assert!(params.expression.iter().all(|&v| v == 0.0));
        assert_eq!(params.pose, [0.0; 3]);
        assert!(params.morphology.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_epochs_returns_initialized_network() {
        let model = small_model();
        let dataset = generate_face_dataset(&model, &ParamPrior { seed: 2, ..Default::default() }, 4).unwrap();
        let cfg = EdmTrainConfig { epochs: 0, ..small_cfg() };
        let trained = train(&dataset, &model, &cfg).unwrap();
        let sizes = vec![20, 32, 32, 8];
        let acts = vec![Activation::Tanh, Activation::Tanh, Activation::Linear];
        let reference = nnet::init_network(&sizes, &acts, rng::derive(cfg.seed, STREAM_NET)).unwrap();
        assert_eq!(trained.model.net, reference);
        assert!(trained.loss_trace.is_empty());
    }

    #[test]
    fn canonicalization_invariance_to_pow2_scaling_is_exact() {
        let model = small_model();
        let dataset = generate_face_dataset(&model, &ParamPrior { seed: 4, ..Default::default() }, 3).unwrap();
        let trained = train(&dataset, &model, &EdmTrainConfig { epochs: 1, ..small_cfg() }).unwrap();
        for s in &dataset {
            let base = infer(&trained.model, &s.observed).unwrap();
            let scaled = Landmarks2D {
                points: s.observed.points.iter().map(|p| [4.0 * p[0], 4.0 * p[1]]).collect(),
            };
            let got = infer(&trained.model, &scaled).unwrap();
            assert_eq!(base, got);
        }
    }

    #[test]
    fn canonicalization_invariance_to_translation() {
        let model = small_model();
        let dataset = generate_face_dataset(&model, &ParamPrior { seed: 4, ..Default::default() }, 3).unwrap();
        let trained = train(&dataset, &model, &EdmTrainConfig { epochs: 1, ..small_cfg() }).unwrap();
        for s in &dataset {
            let base = infer(&trained.model, &s.observed).unwrap();
            let moved = Landmarks2D {
                points: s.observed.points.iter().map(|p| [p[0] + 3.7, p[1] - 1.2]).collect(),
            };
            let got = infer(&trained.model, &moved).unwrap();
            for (a, b) in base.concat().iter().zip(got.concat()) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn degenerate_landmarks_are_rejected() {
        let obs = Landmarks2D { points: vec![[1.0, 1.0]; 10] };
        assert!(canonicalize(&obs).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let model = small_model();
        let dataset = generate_face_dataset(&model, &ParamPrior { seed: 6, ..Default::default() }, 24).unwrap();
        let a = train(&dataset, &model, &small_cfg()).unwrap();
        let b = train(&dataset, &model, &small_cfg()).unwrap();
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.model.net, b.model.net);
    }

    #[test]
    fn training_reduces_loss_on_small_instance() {
        let model = small_model();
        let dataset = generate_face_dataset(&model, &ParamPrior { seed: 8, ..Default::default() }, 48).unwrap();
        let cfg = EdmTrainConfig { epochs: 40, lr: 3e-3, ..small_cfg() };
        let trained = train(&dataset, &model, &cfg).unwrap();
        let first = trained.loss_trace[0];
        let last = *trained.loss_trace.last().unwrap();
        assert!(last < 0.5 * first, "loss did not drop: {first} -> {last}");
    }

    /// Finite-difference oracle over the whole self-supervised pipeline:
    /// encoder -> decode -> align -> L1 loss, checked on a random subset of
    /// network parameters.
    #[test]
    fn pipeline_gradients_match_finite_differences() {
        let model = small_model();
        let dataset = generate_face_dataset(
            &model,
            &ParamPrior { seed: 12, noise_sigma: 0.01, ..Default::default() },
            3,
        )
        .unwrap();
        let cfg = EdmTrainConfig { epochs: 1, ..small_cfg() };
        let trained = train(&dataset, &model, &cfg).unwrap();
        let net = trained.model.net;
        let decoder = model.landmark_decoder();
        let h = 1e-6;
        for s in &dataset {
            let (_, grads, align) = sample_loss_grads(&net, &decoder, &s.observed).unwrap();
            let mut probe = rng::stream(77);
            for _ in 0..40 {
                let l = probe.random_range(0..net.layers.len() as u64) as usize;
                let i = probe.random_range(0..net.layers[l].weights.len() as u64) as usize;
                let mut plus = net.clone();
                plus.layers[l].weights[i] += h;
                let mut minus = net.clone();
                minus.layers[l].weights[i] -= h;
                // The alignment is a constant of the gradient path, so the
                // oracle keeps it frozen at the base solve.
                let lp = forward_loss(&plus, &decoder, &s.observed, Some(&align)).unwrap();
                let lm = forward_loss(&minus, &decoder, &s.observed, Some(&align)).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let got = grads.layers[l].d_weights[i];
                let tol = 1e-4 * got.abs().max(fd.abs()) + 1e-6;
                assert!(
                    (got - fd).abs() <= tol,
                    "layer {l} w[{i}]: analytic {got} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn representation_error_trivials() {
        let gt = vec![
            FaceParams {
                expression: vec![0.5, -1.0],
                pose: [0.1, 0.0, -0.2],
                morphology: vec![2.0],
            },
            FaceParams {
                expression: vec![1.5, 0.25],
                pose: [0.0, 0.05, 0.0],
                morphology: vec![-1.0],
            },
        ];
        let zero = representation_error_from_params(&gt, &gt).unwrap();
        assert_eq!(zero.overall, BlockMetrics { mse: 0.0, mae: 0.0 });
        assert_eq!(zero.expression, BlockMetrics { mse: 0.0, mae: 0.0 });
        assert_eq!(zero.morphology, BlockMetrics { mse: 0.0, mae: 0.0 });

        let offset: Vec<FaceParams> = gt
            .iter()
            .map(|p| FaceParams {
                expression: p.expression.iter().map(|v| v + 1.0).collect(),
                pose: [p.pose[0] + 1.0, p.pose[1] + 1.0, p.pose[2] + 1.0],
                morphology: p.morphology.iter().map(|v| v + 1.0).collect(),
            })
            .collect();
        let err = representation_error_from_params(&offset, &gt).unwrap();
        for b in [err.overall, err.expression, err.morphology] {
            assert!((b.mse - 1.0).abs() < 1e-12);
            assert!((b.mae - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn model_json_round_trip() {
        let model = small_model();
        let dataset = generate_face_dataset(&model, &ParamPrior { seed: 2, ..Default::default() }, 4).unwrap();
        let trained = train(&dataset, &model, &EdmTrainConfig { epochs: 1, ..small_cfg() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("edm.json");
        trained.model.save_json(&path).unwrap();
        let back = EdmModel::load_json(&path).unwrap();
        assert_eq!(trained.model, back);
    }
}
