//! Simulated human-face robot: a fixed seeded nonlinear command->expression
//! map standing in for the physical rig, the robot's own morphology, landmark
//! observation of its face, and raw-command normalization.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::edm::{self, EdmModel};
use crate::error::{Error, Result};
use crate::headmodel::{project_2d, Alignment, FaceParams, HeadModel, Landmarks2D};
use crate::jsonio;
use crate::nnet::{self, Activation, Network};
use crate::rng;

pub const RIG_FORMAT_VERSION: u32 = 1;
pub const PAIRS_FORMAT_VERSION: u32 = 1;

/// Default actuator count driving facial expressions.
pub const DEFAULT_ACTUATORS: usize = 22;

const G_HIDDEN: usize = 32;
const G_WEIGHT_SIGMA: f64 = 0.5;
const CALIBRATION_DRAWS: usize = 512;

const STREAM_G_NET: u64 = 0x676e_6574;
const STREAM_MORPH: u64 = 0x6d6f_7270;
const STREAM_CALIB: u64 = 0x6361_6c69;
const STREAM_COLLECT: u64 = 0x636f_6c6c;

/// The simulated rig. `g_net` is the fixed ground-truth map from normalized
/// commands in [0,1]^n to expression coefficients; it is immutable after
/// construction. Raw command bounds are in arbitrary device units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotRig {
    pub format_version: u32,
    pub seed: u64,
    pub n_actuators: usize,
    pub n_expr: usize,
    pub g_net: Network,
    pub morphology: Vec<f64>,
    pub raw_min: Vec<f64>,
    pub raw_max: Vec<f64>,
}

/// One collected training pair: a normalized command and the expression code
/// the decoupling encoder reads off the robot's observed face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandSample {
    pub command: Vec<f64>,
    pub expression: Vec<f64>,
}

/// Builds the rig: a 1-hidden-layer tanh map with Normal(0, 0.5^2) weights,
/// output recentered and rescaled (over a fixed calibration sample of
/// commands) so robot expressions cover roughly the human prior's range, a
/// seeded robot morphology, and +-1000 device-unit raw bounds per actuator.
pub fn build_rig(seed: u64, n_actuators: usize, n_expr: usize, n_shape: usize) -> Result<RobotRig> {
    if n_actuators == 0 || n_expr == 0 {
        return Err(Error::invalid("rig needs at least one actuator and one expression axis"));
    }
    let mut g_net = nnet::init_network(
        &[n_actuators, G_HIDDEN, n_expr],
        &[Activation::Tanh, Activation::Linear],
        rng::derive(seed, STREAM_G_NET),
    )?;
    let mut wrng = rng::stream(rng::derive(seed, STREAM_G_NET) ^ 1);
    for layer in g_net.layers.iter_mut() {
        for w in layer.weights.iter_mut() {
            *w = G_WEIGHT_SIGMA * wrng.sample::<f64, _>(StandardNormal);
        }
        for b in layer.bias.iter_mut() {
            *b = G_WEIGHT_SIGMA * wrng.sample::<f64, _>(StandardNormal);
        }
    }

    // Calibrate: per-dimension mean to zero, RMS of per-dimension stds to one.
    let mut crng = rng::stream(rng::derive(seed, STREAM_CALIB));
    let mut sums = vec![0.0f64; n_expr];
    let mut sqs = vec![0.0f64; n_expr];
    for _ in 0..CALIBRATION_DRAWS {
        let a: Vec<f64> = (0..n_actuators).map(|_| crng.random_range(0.0..1.0)).collect();
        let e = g_net.predict(&a)?;
        for (j, v) in e.iter().enumerate() {
            sums[j] += v;
            sqs[j] += v * v;
        }
    }
    let nf = CALIBRATION_DRAWS as f64;
    let mut var_sum = 0.0;
    let means: Vec<f64> = (0..n_expr)
        .map(|j| {
            let mean = sums[j] / nf;
            var_sum += sqs[j] / nf - mean * mean;
            mean
        })
        .collect();
    let rms_std = (var_sum / n_expr as f64).sqrt();
    if !(rms_std > 0.0) {
        return Err(Error::degenerate("rig map collapsed during calibration"));
    }
    let alpha = 1.0 / rms_std;
    let out = g_net.layers.last_mut().expect("two layers by construction");
    for w in out.weights.iter_mut() {
        *w *= alpha;
    }
    for (b, mean) in out.bias.iter_mut().zip(&means) {
        *b = alpha * (*b - mean);
    }

    let mut mrng = rng::stream(rng::derive(seed, STREAM_MORPH));
    let morphology = (0..n_shape).map(|_| mrng.sample::<f64, _>(StandardNormal)).collect();

    Ok(RobotRig {
        format_version: RIG_FORMAT_VERSION,
        seed,
        n_actuators,
        n_expr,
        g_net,
        morphology,
        raw_min: vec![-1000.0; n_actuators],
        raw_max: vec![1000.0; n_actuators],
    })
}

fn check_command(rig: &RobotRig, a: &[f64]) -> Result<()> {
    if a.len() != rig.n_actuators {
        return Err(Error::dimension(format!(
            "command has {} entries, rig has {} actuators",
            a.len(),
            rig.n_actuators
        )));
    }
    if a.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::invalid("command components must lie in [0, 1]"));
    }
    Ok(())
}

impl RobotRig {
    /// Ground-truth expression produced by a normalized command.
    pub fn command_to_expression(&self, a: &[f64]) -> Result<Vec<f64>> {
        check_command(self, a)?;
        self.g_net.predict(a)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        jsonio::write_file(path, self)
    }

    pub fn load_json(path: &Path) -> Result<RobotRig> {
        let rig: RobotRig = jsonio::read_versioned(path, RIG_FORMAT_VERSION)?;
        if rig.g_net.input_dim() != rig.n_actuators
            || rig.g_net.output_dim() != rig.n_expr
            || rig.raw_min.len() != rig.n_actuators
            || rig.raw_max.len() != rig.n_actuators
        {
            return Err(Error::malformed("rig dims inconsistent"));
        }
        if rig.raw_min.iter().zip(&rig.raw_max).any(|(lo, hi)| hi <= lo) {
            return Err(Error::malformed("rig raw bounds not increasing"));
        }
        Ok(rig)
    }
}

/// Normalization result; `clamped` flags raw values outside the bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCommands {
    pub values: Vec<f64>,
    pub clamped: bool,
}

/// Maps raw device units into [0, 1] per actuator:
/// (raw - raw_min) / (raw_max - raw_min). Out-of-range inputs are clamped and
/// flagged.
pub fn normalize_commands(
    raw: &[f64],
    raw_min: &[f64],
    raw_max: &[f64],
) -> Result<NormalizedCommands> {
    if raw.len() != raw_min.len() || raw.len() != raw_max.len() {
        return Err(Error::dimension(format!(
            "raw {} vs bounds {}/{}",
            raw.len(),
            raw_min.len(),
            raw_max.len()
        )));
    }
    let mut clamped = false;
    let mut values = Vec::with_capacity(raw.len());
    for i in 0..raw.len() {
        let (lo, hi) = (raw_min[i], raw_max[i]);
        if !(hi > lo) {
            return Err(Error::invalid(format!(
                "actuator {i}: raw_max {hi} must exceed raw_min {lo}"
            )));
        }
        let mut v = raw[i];
        if v < lo {
            v = lo;
            clamped = true;
        } else if v > hi {
            v = hi;
            clamped = true;
        }
        values.push((v - lo) / (hi - lo));
    }
    Ok(NormalizedCommands { values, clamped })
}

/// Inverse of [`normalize_commands`] for in-range values.
pub fn denormalize_commands(a: &[f64], raw_min: &[f64], raw_max: &[f64]) -> Result<Vec<f64>> {
    if a.len() != raw_min.len() || a.len() != raw_max.len() {
        return Err(Error::dimension("normalized command/bounds length mismatch"));
    }
    let mut out = Vec::with_capacity(a.len());
    for i in 0..a.len() {
        let (lo, hi) = (raw_min[i], raw_max[i]);
        if !(hi > lo) {
            return Err(Error::invalid(format!(
                "actuator {i}: raw_max {hi} must exceed raw_min {lo}"
            )));
        }
        out.push(lo + a[i] * (hi - lo));
    }
    Ok(out)
}

/// Drives the rig with a normalized command and observes its face as 2D
/// landmarks: expression = g_net(a), pose zero, the rig's own morphology,
/// identity projection, Gaussian observation noise from the given substream.
pub fn actuate_and_observe(
    rig: &RobotRig,
    model: &HeadModel,
    a: &[f64],
    noise_sigma: f64,
    noise_seed: u64,
) -> Result<Landmarks2D> {
    if rig.n_expr != model.n_expr || rig.morphology.len() != model.n_shape {
        return Err(Error::dimension(
            "rig expression/morphology dims do not match the head model",
        ));
    }
    let expression = rig.command_to_expression(a)?;
    let params = FaceParams {
        expression,
        pose: [0.0; 3],
        morphology: rig.morphology.clone(),
    };
    let lm3d = model.landmarks_3d(&params)?;
    let mut observed = project_2d(&lm3d, &Alignment::IDENTITY)?;
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma)
            .map_err(|e| Error::invalid(format!("bad noise sigma: {e}")))?;
        let mut nrng = rng::stream(noise_seed);
        for p in observed.points.iter_mut() {
            p[0] += nrng.sample(normal);
            p[1] += nrng.sample(normal);
        }
    }
    Ok(observed)
}

/// Collects command/expression pairs by driving the rig with uniform random
/// commands and reading the expression code off the observed face with the
/// frozen decoupling encoder. Pair `i` depends only on (seed, i).
pub fn collect_robot_dataset(
    rig: &RobotRig,
    model: &HeadModel,
    edm: &EdmModel,
    n: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<CommandSample>> {
    if n == 0 {
        return Err(Error::invalid("need at least one pair"));
    }
    if !edm.head_ref.matches(model) {
        return Err(Error::dimension("encoder was trained against a different model"));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let item = rng::item_seed(seed, STREAM_COLLECT, i as u64);
        let mut arng = rng::stream(item);
        let a: Vec<f64> = (0..rig.n_actuators).map(|_| arng.random_range(0.0..1.0)).collect();
        let observed = actuate_and_observe(rig, model, &a, noise_sigma, item ^ 0x5eed)?;
        let params = edm::infer(edm, &observed)?;
        out.push(CommandSample {
            command: a,
            expression: params.expression,
        });
    }
    Ok(out)
}

/// JSONL header for collected pair corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairsHeader {
    pub format_version: u32,
    pub kind: String,
    pub rig_seed: u64,
    pub n: usize,
    pub n_actuators: usize,
    pub n_expr: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

pub fn save_pairs(path: &Path, header: &PairsHeader, pairs: &[CommandSample]) -> Result<()> {
    if header.n != pairs.len() {
        return Err(Error::invalid(format!(
            "header says {} pairs, got {}",
            header.n,
            pairs.len()
        )));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", jsonio::to_string(header)?)?;
    for p in pairs {
        writeln!(w, "{}", jsonio::to_string(p)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_pairs(path: &Path) -> Result<(PairsHeader, Vec<CommandSample>)> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::malformed(format!("{}: empty file", path.display())))??;
    jsonio::check_version_str(&header_line, PAIRS_FORMAT_VERSION)?;
    let header: PairsHeader = jsonio::from_str(&header_line)?;
    let mut pairs = Vec::with_capacity(header.n);
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: CommandSample = jsonio::from_str(&line).map_err(|e| {
            Error::malformed(format!("{} line {}: {e}", path.display(), lineno + 2))
        })?;
        pairs.push(pair);
    }
    if pairs.len() != header.n {
        return Err(Error::malformed(format!(
            "{}: header says {} pairs, file has {}",
            path.display(),
            header.n,
            pairs.len()
        )));
    }
    Ok((header, pairs))
}
