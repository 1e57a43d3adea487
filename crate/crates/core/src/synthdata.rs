//! Synthetic supervised face data: parameter priors, the labeled
//! expression-cluster corpus used for stability evaluation, splits, and
//! JSON-lines persistence for all sample collections.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal, UnitBall};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::headmodel::{project_2d, Alignment, FaceParams, HeadModel, Landmarks2D};
use crate::jsonio;
use crate::linalg::squared_distance;
use crate::rng;

pub const DATASET_FORMAT_VERSION: u32 = 1;

const STREAM_FACE_SAMPLE: u64 = 0x6661_6365; // "face"
const STREAM_CLUSTER_SAMPLE: u64 = 0x636c_7573; // "clus"
const STREAM_ANCHORS: u64 = 0x616e_6368; // "anch"
const STREAM_SPLIT: u64 = 0x7370_6c69; // "spli"

/// Sampling prior for face parameters and landmark observation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPrior {
    pub sigma_e: f64,
    pub sigma_m: f64,
    /// Maximum rotation angle in radians; poses are uniform in the ball.
    pub pose_max: f64,
    /// Landmark observation noise, normalized units.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for ParamPrior {
    fn default() -> Self {
        ParamPrior {
            sigma_e: 1.0,
            sigma_m: 1.0,
            pose_max: 0.3,
            noise_sigma: 0.005,
            seed: 0,
        }
    }
}

impl ParamPrior {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma_e >= 0.0
            && self.sigma_m >= 0.0
            && self.pose_max >= 0.0
            && self.noise_sigma >= 0.0;
        if !ok {
            return Err(Error::invalid("prior standard deviations must be nonnegative"));
        }
        Ok(())
    }
}

/// One supervised sample: ground-truth parameters plus the observed
/// (projected, noise-perturbed) 2D landmarks. When `noise_sigma` is zero the
/// observation equals the exact identity-alignment projection of the params.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceSample {
    pub params: FaceParams,
    pub observed: Landmarks2D,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_label: Option<ExpressionLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpressionLabel {
    Surprise,
    Fear,
    Disgust,
    Happy,
    Sad,
    Anger,
    Neutral,
}

pub const EXPRESSION_LABELS: [ExpressionLabel; 7] = [
    ExpressionLabel::Surprise,
    ExpressionLabel::Fear,
    ExpressionLabel::Disgust,
    ExpressionLabel::Happy,
    ExpressionLabel::Sad,
    ExpressionLabel::Anger,
    ExpressionLabel::Neutral,
];

impl fmt::Display for ExpressionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExpressionLabel::Surprise => "surprise",
            ExpressionLabel::Fear => "fear",
            ExpressionLabel::Disgust => "disgust",
            ExpressionLabel::Happy => "happy",
            ExpressionLabel::Sad => "sad",
            ExpressionLabel::Anger => "anger",
            ExpressionLabel::Neutral => "neutral",
        };
        f.write_str(s)
    }
}

/// A labeled expression category: an anchor expression vector and the
/// within-category spread. The neutral anchor is the zero vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionCluster {
    pub label: ExpressionLabel,
    pub anchor: Vec<f64>,
    pub spread: f64,
}

/// Default within-category expression spread. Kept well below the anchor
/// separation so a category reads as one expression performed across
/// different morphologies.
pub const DEFAULT_CLUSTER_SPREAD: f64 = 0.05;

/// Anchor norm as a multiple of sigma_e.
pub const ANCHOR_SCALE: f64 = 2.5;

/// Builds the seven seeded category anchors. Non-neutral anchors are
/// unit-norm vectors scaled to `ANCHOR_SCALE * sigma_e` whose components are
/// bounded away from zero, drawn until all pairwise distances exceed
/// 0.8 * anchor norm; neutral is the zero vector.
pub fn default_clusters(
    seed: u64,
    n_expr: usize,
    sigma_e: f64,
    spread: f64,
) -> Vec<ExpressionCluster> {
    let norm_target = ANCHOR_SCALE * sigma_e;
    let mut min_dist = 0.8 * norm_target;
    let mut rng = rng::stream(rng::derive(seed, STREAM_ANCHORS));
    let mut anchors: Vec<Vec<f64>> = Vec::new();
    let mut attempts = 0u32;
    while anchors.len() < 6 {
        attempts += 1;
        if attempts % 10_000 == 0 {
            // Low-dimensional expression spaces cannot host six anchors at
            // the default separation; relax it rather than spin forever.
            min_dist *= 0.5;
        }
        let mut v: Vec<f64> = (0..n_expr)
            .map(|_| {
                let mag = 0.5 + rng.random_range(0.0..1.0);
                let sign = if rng.random_range(0..2u32) == 0 { -1.0 } else { 1.0 };
                sign * mag
            })
            .collect();
        let norm = crate::linalg::norm2(&v);
        for x in v.iter_mut() {
            *x *= norm_target / norm;
        }
        let far_enough = anchors
            .iter()
            .all(|a| squared_distance(a, &v).sqrt() >= min_dist);
        if far_enough {
            anchors.push(v);
        }
    }
    anchors.push(vec![0.0; n_expr]); // neutral
    EXPRESSION_LABELS
        .iter()
        .zip(anchors)
        .map(|(&label, anchor)| ExpressionCluster { label, anchor, spread })
        .collect()
}

/// Draws face parameters: e ~ N(0, sigma_e^2) per axis, m ~ N(0, sigma_m^2)
/// per axis, pose uniform in the ball of radius pose_max.
pub fn sample_params(
    prior: &ParamPrior,
    rng: &mut ChaCha8Rng,
    n_expr: usize,
    n_shape: usize,
) -> FaceParams {
    let expression = (0..n_expr)
        .map(|_| prior.sigma_e * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let morphology = (0..n_shape)
        .map(|_| prior.sigma_m * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let ball: [f64; 3] = rng.sample(UnitBall);
    let pose = [
        prior.pose_max * ball[0],
        prior.pose_max * ball[1],
        prior.pose_max * ball[2],
    ];
    FaceParams {
        expression,
        pose,
        morphology,
    }
}

fn observe(
    model: &HeadModel,
    params: &FaceParams,
    noise_sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Landmarks2D> {
    let lm3d = model.landmarks_3d(params)?;
    let mut observed = project_2d(&lm3d, &Alignment::IDENTITY)?;
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma)
            .map_err(|e| Error::invalid(format!("bad noise sigma: {e}")))?;
        for p in observed.points.iter_mut() {
            p[0] += rng.sample(normal);
            p[1] += rng.sample(normal);
        }
    }
    Ok(observed)
}

/// Generates `n` supervised samples. Sample `i` depends only on
/// (prior.seed, i), so the prefix of a longer dataset equals a shorter one.
pub fn generate_face_dataset(
    model: &HeadModel,
    prior: &ParamPrior,
    n: usize,
) -> Result<Vec<FaceSample>> {
    if n == 0 {
        return Err(Error::invalid("dataset size must be at least 1"));
    }
    prior.validate()?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = rng::stream(rng::item_seed(prior.seed, STREAM_FACE_SAMPLE, i as u64));
        let params = sample_params(prior, &mut rng, model.n_expr, model.n_shape);
        let observed = observe(model, &params, prior.noise_sigma, &mut rng)?;
        out.push(FaceSample {
            params,
            observed,
            cluster_label: None,
        });
    }
    Ok(out)
}

/// Generates the labeled cluster corpus: for each category,
/// e = anchor + N(0, spread^2) with morphology redrawn per sample from
/// `morph_prior` and small pose. Sample streams depend only on
/// (seed, cluster index, sample index).
pub fn generate_cluster_corpus(
    model: &HeadModel,
    clusters: &[ExpressionCluster],
    per_cluster: usize,
    morph_prior: &ParamPrior,
) -> Result<Vec<FaceSample>> {
    if per_cluster < 2 {
        return Err(Error::invalid("need at least 2 samples per cluster"));
    }
    morph_prior.validate()?;
    for c in clusters {
        if c.anchor.len() != model.n_expr {
            return Err(Error::dimension(format!(
                "cluster {} anchor length {} does not match model n_expr {}",
                c.label,
                c.anchor.len(),
                model.n_expr
            )));
        }
    }
    let mut out = Vec::with_capacity(clusters.len() * per_cluster);
    for (ci, cluster) in clusters.iter().enumerate() {
        for i in 0..per_cluster {
            let item = (ci * per_cluster + i) as u64;
            let mut rng = rng::stream(rng::item_seed(
                morph_prior.seed,
                STREAM_CLUSTER_SAMPLE,
                item,
            ));
            let base = sample_params(morph_prior, &mut rng, model.n_expr, model.n_shape);
            let expression: Vec<f64> = cluster
                .anchor
                .iter()
                .map(|&a| a + cluster.spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let params = FaceParams {
                expression,
                pose: base.pose,
                morphology: base.morphology,
            };
            let observed = observe(model, &params, morph_prior.noise_sigma, &mut rng)?;
            out.push(FaceSample {
                params,
                observed,
                cluster_label: Some(cluster.label),
            });
        }
    }
    Ok(out)
}

/// Deterministic shuffled split. `train_fraction` of the indices (rounded to
/// nearest) go to the training set.
pub fn split_indices(n: usize, train_fraction: f64, split_seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(rng::derive(split_seed, STREAM_SPLIT));
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i as u64) as usize;
        order.swap(i, j);
    }
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let train = order[..n_train].to_vec();
    let test = order[n_train..].to_vec();
    (train, test)
}

pub fn gather<'a>(samples: &'a [FaceSample], idx: &[usize]) -> Vec<&'a FaceSample> {
    idx.iter().map(|&i| &samples[i]).collect()
}

/// JSONL header carried on the first line of every dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub kind: String,
    pub model_seed: u64,
    pub n: usize,
    pub n_landmarks: usize,
    pub n_expr: usize,
    pub n_shape: usize,
    pub prior: ParamPrior,
}

/// Writes header + one sample per line.
pub fn save_dataset(path: &Path, header: &DatasetHeader, samples: &[FaceSample]) -> Result<()> {
    if header.n != samples.len() {
        return Err(Error::invalid(format!(
            "header says {} samples, got {}",
            header.n,
            samples.len()
        )));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", jsonio::to_string(header)?)?;
    for s in samples {
        writeln!(w, "{}", jsonio::to_string(s)?)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset saved by [`save_dataset`]. A version mismatch and a
/// malformed file are reported as distinct errors.
pub fn load_dataset(path: &Path) -> Result<(DatasetHeader, Vec<FaceSample>)> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::malformed(format!("{}: empty file", path.display())))??;
    jsonio::check_version_str(&header_line, DATASET_FORMAT_VERSION)?;
    let header: DatasetHeader = jsonio::from_str(&header_line)?;
    let mut samples = Vec::with_capacity(header.n);
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: FaceSample = jsonio::from_str(&line).map_err(|e| {
            Error::malformed(format!("{} line {}: {e}", path.display(), lineno + 2))
        })?;
        samples.push(sample);
    }
    if samples.len() != header.n {
        return Err(Error::malformed(format!(
            "{}: header says {} samples, file has {}",
            path.display(),
            header.n,
            samples.len()
        )));
    }
    Ok((header, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::headmodel::build_head_model;

    fn model() -> HeadModel {
        build_head_model(7, 64, 3, 4, 12).unwrap()
    }

    #[test]
    fn zero_prior_gives_zero_params() {
        let prior = ParamPrior {
            sigma_e: 0.0,
            sigma_m: 0.0,
            pose_max: 0.0,
            noise_sigma: 0.0,
            seed: 1,
        };
        let mut rng = rng::stream(1);
        let p = sample_params(&prior, &mut rng, 4, 3);
        assert!(p.expression.iter().all(|&v| v == 0.0));
        assert!(p.morphology.iter().all(|&v| v == 0.0));
        assert_eq!(p.pose, [0.0; 3]);
    }

    #[test]
    fn sampling_is_reproducible() {
        let prior = ParamPrior::default();
        let mut a = rng::stream(9);
        let mut b = rng::stream(9);
        for _ in 0..10 {
            assert_eq!(
                sample_params(&prior, &mut a, 4, 3),
                sample_params(&prior, &mut b, 4, 3)
            );
        }
    }

    #[test]
    fn sample_std_matches_prior_within_5_percent() {
        let prior = ParamPrior::default();
        let n = 10_000;
        let n_expr = 4;
        let mut sums = vec![0.0f64; n_expr];
        let mut sq = vec![0.0f64; n_expr];
        for i in 0..n {
            let mut rng = rng::stream(rng::item_seed(77, 0, i));
            let p = sample_params(&prior, &mut rng, n_expr, 1);
            for (k, &v) in p.expression.iter().enumerate() {
                sums[k] += v;
                sq[k] += v * v;
            }
        }
        for k in 0..n_expr {
            let mean = sums[k] / n as f64;
            let std = (sq[k] / n as f64 - mean * mean).sqrt();
            assert!(
                (std - prior.sigma_e).abs() < 0.05 * prior.sigma_e,
                "axis {k}: std {std}"
            );
        }
    }

    #[test]
    fn pose_stays_in_ball() {
        let prior = ParamPrior { pose_max: 0.3, ..Default::default() };
        let mut rng = rng::stream(5);
        for _ in 0..100 {
            let p = sample_params(&prior, &mut rng, 2, 2);
            let norm = (p.pose[0].powi(2) + p.pose[1].powi(2) + p.pose[2].powi(2)).sqrt();
            assert!(norm <= prior.pose_max + 1e-12);
        }
    }

    #[test]
    fn dataset_count_and_reproducibility() {
        let model = model();
        let prior = ParamPrior { seed: 3, ..Default::default() };
        let a = generate_face_dataset(&model, &prior, 1000).unwrap();
        assert_eq!(a.len(), 1000);
        let b = generate_face_dataset(&model, &prior, 1000).unwrap();
        assert_eq!(a, b);
        // Prefix property: the first samples of a longer run are identical.
        let c = generate_face_dataset(&model, &prior, 10).unwrap();
        assert_eq!(&a[..10], &c[..]);
    }

    #[test]
    fn noiseless_observation_matches_projection_exactly() {
        let model = model();
        let prior = ParamPrior { noise_sigma: 0.0, seed: 11, ..Default::default() };
        for sample in generate_face_dataset(&model, &prior, 20).unwrap() {
            let lm3d = model.landmarks_3d(&sample.params).unwrap();
            let proj = project_2d(&lm3d, &Alignment::IDENTITY).unwrap();
            assert_eq!(sample.observed, proj);
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (train, test) = split_indices(1000, 0.8, 42);
        assert_eq!(train.len(), 800);
        assert_eq!(test.len(), 200);
        let (t2, s2) = split_indices(1000, 0.8, 42);
        assert_eq!(train, t2);
        assert_eq!(test, s2);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        assert_ne!(split_indices(1000, 0.8, 43).0, train);
    }

    #[test]
    fn cluster_corpus_counts_and_labels() {
        let model = model();
        let clusters = default_clusters(2, model.n_expr, 1.0, DEFAULT_CLUSTER_SPREAD);
        assert_eq!(clusters.len(), 7);
        assert!(clusters[6].anchor.iter().all(|&v| v == 0.0));
        assert_eq!(clusters[6].label, ExpressionLabel::Neutral);
        let corpus =
            generate_cluster_corpus(&model, &clusters, 50, &ParamPrior::default()).unwrap();
        assert_eq!(corpus.len(), 350);
        for label in EXPRESSION_LABELS {
            assert_eq!(
                corpus.iter().filter(|s| s.cluster_label == Some(label)).count(),
                50
            );
        }
    }

    #[test]
    fn zero_spread_fixed_morphology_gives_identical_observations() {
        let model = model();
        let clusters: Vec<ExpressionCluster> = default_clusters(2, model.n_expr, 1.0, 0.0);
        let prior = ParamPrior {
            sigma_m: 0.0,
            pose_max: 0.0,
            noise_sigma: 0.0,
            seed: 5,
            ..Default::default()
        };
        let corpus = generate_cluster_corpus(&model, &clusters[..1], 5, &prior).unwrap();
        for s in &corpus[1..] {
            assert_eq!(s.observed, corpus[0].observed);
        }
    }

    /// Nearest-anchor oracle: with the default spread every sample's
    /// ground-truth expression is closest to its own cluster's anchor.
    #[test]
    fn cluster_labels_recoverable_by_nearest_anchor() {
        let model = model();
        let clusters = default_clusters(2, model.n_expr, 1.0, DEFAULT_CLUSTER_SPREAD);
        let corpus = generate_cluster_corpus(
            &model,
            &clusters,
            50,
            &ParamPrior { seed: 21, ..Default::default() },
        )
        .unwrap();
        for s in &corpus {
            let mut best = None;
            let mut best_d = f64::INFINITY;
            for c in &clusters {
                let d = squared_distance(&s.params.expression, &c.anchor);
                if d < best_d {
                    best_d = d;
                    best = Some(c.label);
                }
            }
            assert_eq!(best, s.cluster_label);
        }
    }

    #[test]
    fn anchors_are_separated_and_scaled() {
        let clusters = default_clusters(2, 10, 1.0, DEFAULT_CLUSTER_SPREAD);
        for c in &clusters[..6] {
            let norm = crate::linalg::norm2(&c.anchor);
            assert!((norm - ANCHOR_SCALE).abs() < 1e-9);
        }
        for i in 0..7 {
            for j in (i + 1)..7 {
                let d = squared_distance(&clusters[i].anchor, &clusters[j].anchor).sqrt();
                assert!(d > 3.0 * DEFAULT_CLUSTER_SPREAD, "clusters {i},{j} too close: {d}");
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let model = model();
        let prior = ParamPrior { seed: 13, ..Default::default() };
        let samples = generate_face_dataset(&model, &prior, 25).unwrap();
        let header = DatasetHeader {
            format_version: DATASET_FORMAT_VERSION,
            kind: "face_dataset".into(),
            model_seed: model.seed,
            n: samples.len(),
            n_landmarks: model.n_landmarks,
            n_expr: model.n_expr,
            n_shape: model.n_shape,
            prior: prior.clone(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        save_dataset(&path, &header, &samples).unwrap();
        let (h2, s2) = load_dataset(&path).unwrap();
        assert_eq!(header, h2);
        assert_eq!(samples, s2);
    }

    #[test]
    fn truncated_file_reports_malformed() {
        let model = model();
        let prior = ParamPrior { seed: 13, ..Default::default() };
        let samples = generate_face_dataset(&model, &prior, 5).unwrap();
        let header = DatasetHeader {
            format_version: DATASET_FORMAT_VERSION,
            kind: "face_dataset".into(),
            model_seed: model.seed,
            n: samples.len(),
            n_landmarks: model.n_landmarks,
            n_expr: model.n_expr,
            n_shape: model.n_shape,
            prior,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        save_dataset(&path, &header, &samples).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() * 2 / 3]).unwrap();
        match load_dataset(&path) {
            Err(Error::MalformedFile(_)) => {}
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_version_reports_version_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        std::fs::write(
            &path,
            "{\"format_version\":99,\"kind\":\"face_dataset\",\"model_seed\":0,\"n\":0,\
             \"n_landmarks\":0,\"n_expr\":0,\"n_shape\":0,\
             \"prior\":{\"sigma_e\":1.0,\"sigma_m\":1.0,\"pose_max\":0.1,\"noise_sigma\":0.0,\"seed\":0}}\n",
        )
        .unwrap();
        match load_dataset(&path) {
            Err(Error::FormatVersion { found: 99, expected: 1 }) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }
}
