//! Evaluation harness: CV / MSE / MAE metrics, the four baselines (random
//! generation, random init, ten-step init, nearest neighbor), the three
//! comparison tables, end-to-end imitation with its reachability benchmark,
//! and 2D PCA embeddings for representation scatter plots.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::edm::{self, EdmModel, RepresentationError};
use crate::error::{Error, Result};
use crate::etm::{self, EtmDecoder, EtmEncoder, EtmTrainConfig};
use crate::headmodel::{FaceParams, HeadModel, Landmarks2D};
use crate::jsonio;
use crate::linalg::{dot, jacobi_eigen_sym, squared_distance};
use crate::nnet::{self, AdamState, Gradients};
use crate::rng;
use crate::robotsim::{self, CommandSample, RobotRig};
use crate::synthdata::{sample_params, ExpressionLabel, FaceSample, ParamPrior, EXPRESSION_LABELS};

const CV_EPS: f64 = 1e-6;

const STREAM_RG: u64 = 0x7267_656e;
const STREAM_RI10: u64 = 0x7269_3130;

/// Coefficient of variation of a sample of equal-length vectors: per
/// dimension, population std divided by (|mean| + 1e-6); averaged over
/// dimensions and scaled by 100.
pub fn coefficient_of_variation(samples: &[Vec<f64>]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::invalid("need at least 2 samples for a CV"));
    }
    let dim = samples[0].len();
    if dim == 0 || samples.iter().any(|s| s.len() != dim) {
        return Err(Error::dimension("CV samples must share a nonzero length"));
    }
    let n = samples.len() as f64;
    let mut acc = 0.0;
    for d in 0..dim {
        let mut sum = 0.0;
        let mut sq = 0.0;
        for s in samples {
            sum += s[d];
            sq += s[d] * s[d];
        }
        let mean = sum / n;
        let var = (sq / n - mean * mean).max(0.0);
        acc += var.sqrt() / (mean.abs() + CV_EPS);
    }
    Ok(100.0 * acc / dim as f64)
}

/// (MSE, MAE) with the elementwise error averaged over dimensions first,
/// then over samples.
pub fn mse_mae(pred: &[Vec<f64>], gt: &[Vec<f64>]) -> Result<(f64, f64)> {
    if pred.is_empty() || pred.len() != gt.len() {
        return Err(Error::dimension(format!(
            "{} predictions vs {} references",
            pred.len(),
            gt.len()
        )));
    }
    let mut mse = 0.0;
    let mut mae = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        if p.len() != g.len() || p.is_empty() {
            return Err(Error::dimension("prediction/reference length mismatch"));
        }
        let d = p.len() as f64;
        let mut se = 0.0;
        let mut ae = 0.0;
        for (a, b) in p.iter().zip(g) {
            let r = a - b;
            se += r * r;
            ae += r.abs();
        }
        mse += se / d;
        mae += ae / d;
    }
    let n = pred.len() as f64;
    Ok((mse / n, mae / n))
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

/// Random-generation baseline: face parameters drawn from the training prior.
pub fn baseline_rg(
    prior: &ParamPrior,
    n: usize,
    n_expr: usize,
    n_shape: usize,
    seed: u64,
) -> Vec<FaceParams> {
    (0..n)
        .map(|i| {
            let mut r = rng::stream(rng::item_seed(seed, STREAM_RG, i as u64));
            sample_params(prior, &mut r, n_expr, n_shape)
        })
        .collect()
}

/// Randomly initialized transfer encoder, zero training steps.
pub fn baseline_ri(
    n_actuators: usize,
    n_expr: usize,
    hidden: &[usize],
    seed: u64,
) -> Result<EtmEncoder> {
    etm::init_encoder(n_actuators, n_expr, hidden, seed)
}

pub struct Ri10 {
    pub encoder: EtmEncoder,
    /// Optimizer step count after fine-tuning; always 10.
    pub adam_steps: u64,
}

/// The RI encoder after exactly 10 Adam batch steps on the command loss
/// alone.
pub fn baseline_ri10(
    pairs: &[CommandSample],
    hidden: &[usize],
    lr: f64,
    batch: usize,
    seed: u64,
) -> Result<Ri10> {
    if pairs.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let n_actuators = pairs[0].command.len();
    let n_expr = pairs[0].expression.len();
    let mut enc = etm::init_encoder(n_actuators, n_expr, hidden, seed)?;
    let mut state = AdamState::new(&enc.net);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut shuffle_rng = rng::stream(rng::derive(seed, STREAM_RI10));
    for i in (1..order.len()).rev() {
        let j = shuffle_rng.random_range(0..=i as u64) as usize;
        order.swap(i, j);
    }
    let mut cursor = 0usize;
    for _ in 0..10 {
        let mut grads = Gradients::zeros_like(&enc.net);
        let take = batch.min(pairs.len());
        for _ in 0..take {
            let pair = &pairs[order[cursor % order.len()]];
            cursor += 1;
            let (z, tape) = enc.net.forward(&pair.expression)?;
            let mut d_z = Vec::with_capacity(z.len());
            for (i, zi) in z.iter().enumerate() {
                let a_hat = 1.0 / (1.0 + (-zi).exp());
                let d_a = 2.0 * (a_hat - pair.command[i]);
                d_z.push(d_a * a_hat * (1.0 - a_hat));
            }
            let (g, _) = enc.net.backward(&tape, &d_z)?;
            grads.add_assign(&g);
        }
        grads.scale(1.0 / take as f64);
        nnet::adam_step(&mut enc.net, &grads, &mut state, lr)?;
    }
    Ok(Ri10 {
        encoder: enc,
        adam_steps: state.step,
    })
}

/// Nearest-neighbor command retrieval: the training pair whose expression
/// minimizes the Euclidean distance to the query; ties break to the lowest
/// index.
pub fn baseline_nn<'a>(
    train_pairs: &'a [CommandSample],
    query_expression: &[f64],
) -> Result<&'a CommandSample> {
    if train_pairs.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let mut best = &train_pairs[0];
    let mut best_d = squared_distance(&best.expression, query_expression);
    for p in &train_pairs[1..] {
        let d = squared_distance(&p.expression, query_expression);
        if d < best_d {
            best_d = d;
            best = p;
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Table reports
// ---------------------------------------------------------------------------

/// Per-category CV of the canonicalized-landmark representation versus the
/// decoupled expression representation.
#[derive(Debug, Clone, Serialize)]
pub struct CvRow {
    pub label: ExpressionLabel,
    pub landmark_cv: f64,
    pub expression_cv: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub rows: Vec<CvRow>,
}

/// Builds the stability comparison over a labeled cluster corpus. The
/// landmark representation is the same centered, RMS-scaled vector the
/// encoder consumes, so the comparison isolates what the representation
/// keeps, not how it is normalized.
pub fn table1_cv_report(edm: &EdmModel, corpus: &[FaceSample]) -> Result<CvReport> {
    let mut rows = Vec::with_capacity(EXPRESSION_LABELS.len());
    for label in EXPRESSION_LABELS {
        let members: Vec<&FaceSample> = corpus
            .iter()
            .filter(|s| s.cluster_label == Some(label))
            .collect();
        if members.len() < 2 {
            return Err(Error::invalid(format!(
                "category {label} has {} samples; need at least 2",
                members.len()
            )));
        }
        let mut landmark_vecs = Vec::with_capacity(members.len());
        let mut expr_vecs = Vec::with_capacity(members.len());
        for s in &members {
            landmark_vecs.push(edm::canonicalize(&s.observed)?);
            expr_vecs.push(edm::infer(edm, &s.observed)?.expression);
        }
        rows.push(CvRow {
            label,
            landmark_cv: coefficient_of_variation(&landmark_vecs)?,
            expression_cv: coefficient_of_variation(&expr_vecs)?,
        });
    }
    Ok(CvReport { rows })
}

#[derive(Debug, Clone, Serialize)]
pub struct Table2Report {
    pub rg: RepresentationError,
    pub edm: RepresentationError,
}

/// Representation-error comparison on a held-out set: the trained encoder
/// versus parameters drawn blindly from the prior.
pub fn table2_comparison(
    edm: &EdmModel,
    test: &[&FaceSample],
    prior: &ParamPrior,
    rg_seed: u64,
) -> Result<Table2Report> {
    let edm_err = edm::representation_error(edm, test)?;
    let gt: Vec<FaceParams> = test.iter().map(|s| s.params.clone()).collect();
    let rg = baseline_rg(prior, test.len(), edm.head_ref.n_expr, edm.head_ref.n_shape, rg_seed);
    let rg_err = edm::representation_error_from_params(&rg, &gt)?;
    Ok(Table2Report { rg: rg_err, edm: edm_err })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MethodTag {
    EdmRi,
    EdmRi10,
    EdmNn,
    RgEtm,
    EdmEtm,
}

impl std::fmt::Display for MethodTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MethodTag::EdmRi => "EDM + RI",
            MethodTag::EdmRi10 => "EDM + RI-10",
            MethodTag::EdmNn => "EDM + NN",
            MethodTag::RgEtm => "RG + ETM",
            MethodTag::EdmEtm => "EDM + ETM",
        };
        f.write_str(s)
    }
}

/// Reference command-error values attached to the table rows for context
/// (method, MSE, MAE).
pub const TABLE3_REFERENCE: [(MethodTag, f64, f64); 5] = [
    (MethodTag::EdmRi, 0.314, 0.479),
    (MethodTag::EdmRi10, 0.089, 0.283),
    (MethodTag::EdmNn, 0.101, 0.261),
    (MethodTag::RgEtm, 0.303, 0.465),
    (MethodTag::EdmEtm, 0.042, 0.174),
];

#[derive(Debug, Clone, Serialize)]
pub struct MethodComparison {
    pub method: MethodTag,
    pub mse: f64,
    pub mae: f64,
    pub reference_mse: f64,
    pub reference_mae: f64,
}

/// Command-error comparison on the held-out robot corpus. Every method
/// predicts commands for the held-out expression codes and is scored against
/// the ground-truth commands; rows are ordered RI, RI-10, NN, RG+ETM, ours.
pub fn table3_comparison(
    train_pairs: &[CommandSample],
    test_pairs: &[CommandSample],
    encoder: &EtmEncoder,
    prior: &ParamPrior,
    cfg: &EtmTrainConfig,
    baseline_seed: u64,
) -> Result<Vec<MethodComparison>> {
    if test_pairs.is_empty() {
        return Err(Error::invalid("empty held-out set"));
    }
    let n_actuators = encoder.n_actuators;
    let n_expr = encoder.n_expr;
    for p in test_pairs.iter().chain(train_pairs) {
        if p.command.len() != n_actuators || p.expression.len() != n_expr {
            return Err(Error::dimension("pair dims do not match the encoder"));
        }
    }
    let hidden: Vec<usize> = encoder.net.layer_sizes()[1..encoder.net.layer_sizes().len() - 1].to_vec();
    let gt: Vec<Vec<f64>> = test_pairs.iter().map(|p| p.command.clone()).collect();

    let ri = baseline_ri(n_actuators, n_expr, &hidden, baseline_seed)?;
    let ri10 = baseline_ri10(train_pairs, &hidden, cfg.lr, cfg.batch, baseline_seed)?;

    let mut ri_pred = Vec::with_capacity(test_pairs.len());
    let mut ri10_pred = Vec::with_capacity(test_pairs.len());
    let mut nn_pred = Vec::with_capacity(test_pairs.len());
    let mut rg_pred = Vec::with_capacity(test_pairs.len());
    let mut ours_pred = Vec::with_capacity(test_pairs.len());
    for (i, pair) in test_pairs.iter().enumerate() {
        ri_pred.push(etm::encoder_predict(&ri, &pair.expression)?);
        ri10_pred.push(etm::encoder_predict(&ri10.encoder, &pair.expression)?);
        nn_pred.push(baseline_nn(train_pairs, &pair.expression)?.command.clone());
        let mut r = rng::stream(rng::item_seed(baseline_seed, STREAM_RG, i as u64));
        let e_rg: Vec<f64> = (0..n_expr)
            .map(|_| prior.sigma_e * r.sample::<f64, _>(StandardNormal))
            .collect();
        rg_pred.push(etm::encoder_predict(encoder, &e_rg)?);
        ours_pred.push(etm::encoder_predict(encoder, &pair.expression)?);
    }

    let rows = [
        (MethodTag::EdmRi, ri_pred),
        (MethodTag::EdmRi10, ri10_pred),
        (MethodTag::EdmNn, nn_pred),
        (MethodTag::RgEtm, rg_pred),
        (MethodTag::EdmEtm, ours_pred),
    ];
    rows.into_iter()
        .map(|(method, pred)| {
            let (mse, mae) = mse_mae(&pred, &gt)?;
            let (_, rmse, rmae) = TABLE3_REFERENCE
                .iter()
                .find(|(m, _, _)| *m == method)
                .copied()
                .expect("reference table covers every method");
            Ok(MethodComparison {
                method,
                mse,
                mae,
                reference_mse: rmse,
                reference_mae: rmae,
            })
        })
        .collect()
}

/// Held-out expression fidelity of the trained encoder versus routing the
/// nearest-neighbor baseline's commands through the same frozen decoder:
/// mean |e - dec(a)|^2 for both routes.
pub fn expression_fidelity_vs_nn(
    train_pairs: &[CommandSample],
    test_pairs: &[CommandSample],
    encoder: &EtmEncoder,
    decoder: &EtmDecoder,
) -> Result<(f64, f64)> {
    if test_pairs.is_empty() {
        return Err(Error::invalid("empty held-out set"));
    }
    let mut enc_sum = 0.0;
    let mut nn_sum = 0.0;
    for pair in test_pairs {
        let e = &pair.expression;
        let via_enc = etm::reconstruct_expression(encoder, decoder, e)?;
        enc_sum += squared_distance(&via_enc, e);
        let a_nn = &baseline_nn(train_pairs, e)?.command;
        let via_nn = etm::decoder_predict(decoder, a_nn)?;
        nn_sum += squared_distance(&via_nn, e);
    }
    let n = test_pairs.len() as f64;
    Ok((enc_sum / n, nn_sum / n))
}

// ---------------------------------------------------------------------------
// End-to-end imitation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ImitationOutcome {
    pub command: Vec<f64>,
    pub robot_landmarks: Landmarks2D,
    pub human_expression: Vec<f64>,
    pub robot_expression: Vec<f64>,
    /// |e_human - e_robot|^2, both read through the decoupling encoder.
    pub expression_gap: f64,
}

/// Full pipeline on one observation: read the human expression, map it to
/// commands, actuate the simulated rig (no observation noise), read the
/// robot's expression back and report the gap.
pub fn end_to_end_imitation(
    observed_human: &Landmarks2D,
    edm: &EdmModel,
    encoder: &EtmEncoder,
    rig: &RobotRig,
    model: &HeadModel,
) -> Result<ImitationOutcome> {
    let human = edm::infer(edm, observed_human)?;
    let command = etm::encoder_predict(encoder, &human.expression)?;
    let robot_landmarks = robotsim::actuate_and_observe(rig, model, &command, 0.0, 0)?;
    let robot = edm::infer(edm, &robot_landmarks)?;
    let expression_gap = squared_distance(&human.expression, &robot.expression);
    Ok(ImitationOutcome {
        command,
        robot_landmarks,
        human_expression: human.expression,
        robot_expression: robot.expression,
        expression_gap,
    })
}

/// Budget of the reachability search. The benchmark is defined as the best
/// squared expression error a fixed grid/coordinate search attains against
/// the rig's true command->expression map, starting from the mid command:
/// one pass over the actuators, each minimized over an 11-point grid.
#[derive(Debug, Clone, Copy)]
pub struct FloorSearchOptions {
    pub sweeps: usize,
    pub grid_points: usize,
}

impl Default for FloorSearchOptions {
    fn default() -> Self {
        FloorSearchOptions {
            sweeps: 1,
            grid_points: 11,
        }
    }
}

/// Direct command fit: coordinate search of `|target - g_net(a)|^2` under the
/// fixed budget. Returns the best squared error and the command attaining it.
pub fn reachability_floor(
    target_expression: &[f64],
    rig: &RobotRig,
    opts: &FloorSearchOptions,
) -> Result<(f64, Vec<f64>)> {
    if target_expression.len() != rig.n_expr {
        return Err(Error::dimension(format!(
            "target has {} entries, rig produces {}",
            target_expression.len(),
            rig.n_expr
        )));
    }
    if opts.grid_points < 2 || opts.sweeps == 0 {
        return Err(Error::invalid("floor search needs at least 2 grid points and 1 sweep"));
    }
    let mut a = vec![0.5; rig.n_actuators];
    let objective = |a: &[f64]| -> Result<f64> {
        Ok(squared_distance(&rig.command_to_expression(a)?, target_expression))
    };
    let mut best = objective(&a)?;
    for _ in 0..opts.sweeps {
        for axis in 0..rig.n_actuators {
            let saved = a[axis];
            let mut best_v = saved;
            for g in 0..opts.grid_points {
                let v = g as f64 / (opts.grid_points - 1) as f64;
                a[axis] = v;
                let f = objective(&a)?;
                if f < best {
                    best = f;
                    best_v = v;
                }
            }
            a[axis] = best_v;
        }
    }
    Ok((best, a))
}

// ---------------------------------------------------------------------------
// PCA embedding
// ---------------------------------------------------------------------------

/// Mean-centered projection onto the top-2 principal axes. Sign convention:
/// the first nonzero loading of each axis is positive.
pub fn pca_embed_2d(vectors: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    if vectors.len() < 3 {
        return Err(Error::invalid("need at least 3 vectors for a 2D embedding"));
    }
    let dim = vectors[0].len();
    if dim < 2 || vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::dimension("embedding vectors must share a length of at least 2"));
    }
    let n = vectors.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let centered: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![0.0; dim * dim];
    for c in &centered {
        for i in 0..dim {
            let ci = c[i];
            for j in i..dim {
                cov[i * dim + j] += ci * c[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            cov[i * dim + j] /= n;
            cov[j * dim + i] = cov[i * dim + j];
        }
    }
    let total_var: f64 = (0..dim).map(|i| cov[i * dim + i]).sum();
    if total_var <= 0.0 {
        return Err(Error::degenerate("zero-variance input has no principal axes"));
    }
    let (_, vecs) = jacobi_eigen_sym(cov, dim);
    let mut axes = [vecs[0..dim].to_vec(), vecs[dim..2 * dim].to_vec()];
    for axis in axes.iter_mut() {
        if let Some(first) = axis.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                for v in axis.iter_mut() {
                    *v = -*v;
                }
            }
        }
    }
    Ok(centered
        .iter()
        .map(|c| [dot(c, &axes[0]), dot(c, &axes[1])])
        .collect())
}

// ---------------------------------------------------------------------------
// CSV emission (one table per file, header row mirroring the table layout)
// ---------------------------------------------------------------------------

fn csv_writer(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

pub fn write_table1_csv(report: &CvReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    write!(w, "representation")?;
    for row in &report.rows {
        write!(w, ",{}", row.label)?;
    }
    writeln!(w)?;
    write!(w, "landmark-based")?;
    for row in &report.rows {
        write!(w, ",{}", jsonio::fmt_f64(row.landmark_cv))?;
    }
    writeln!(w)?;
    write!(w, "morphology-independent")?;
    for row in &report.rows {
        write!(w, ",{}", jsonio::fmt_f64(row.expression_cv))?;
    }
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_table2_csv(report: &Table2Report, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    writeln!(
        w,
        "method,overall_mse,overall_mae,expression_mse,expression_mae,morphology_mse,morphology_mae"
    )?;
    for (name, e) in [("RG", &report.rg), ("EDM", &report.edm)] {
        writeln!(
            w,
            "{name},{},{},{},{},{},{}",
            jsonio::fmt_f64(e.overall.mse),
            jsonio::fmt_f64(e.overall.mae),
            jsonio::fmt_f64(e.expression.mse),
            jsonio::fmt_f64(e.expression.mae),
            jsonio::fmt_f64(e.morphology.mse),
            jsonio::fmt_f64(e.morphology.mae),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table3_csv(rows: &[MethodComparison], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    writeln!(w, "method,mse,mae,reference_mse,reference_mae")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.method,
            jsonio::fmt_f64(r.mse),
            jsonio::fmt_f64(r.mae),
            jsonio::fmt_f64(r.reference_mse),
            jsonio::fmt_f64(r.reference_mae),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ImitationRecord {
    pub index: usize,
    pub expression_gap: f64,
    pub reachability_floor: f64,
}

pub fn write_imitation_csv(records: &[ImitationRecord], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    writeln!(w, "sample,expression_gap,reachability_floor")?;
    for r in records {
        writeln!(
            w,
            "{},{},{}",
            r.index,
            jsonio::fmt_f64(r.expression_gap),
            jsonio::fmt_f64(r.reachability_floor),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_embedding_csv(
    labels: &[Option<ExpressionLabel>],
    coords: &[[f64; 2]],
    path: &Path,
) -> Result<()> {
    if labels.len() != coords.len() {
        return Err(Error::dimension("label/coordinate count mismatch"));
    }
    let mut w = csv_writer(path)?;
    writeln!(w, "label,x,y")?;
    for (l, c) in labels.iter().zip(coords) {
        let name = l.map(|l| l.to_string()).unwrap_or_else(|| "unlabeled".to_string());
        writeln!(w, "{name},{},{}", jsonio::fmt_f64(c[0]), jsonio::fmt_f64(c[1]))?;
    }
    w.flush()?;
    Ok(())
}
