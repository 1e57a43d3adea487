//! Batch pipeline: resolved run configuration, the derived seed set, artifact
//! layout inside an output directory, the individual generation / training /
//! evaluation steps, and the end-to-end `repro` run with its hash manifest.
//! Every artifact embeds the format version and the resolved seeds; every
//! command also writes the fully resolved config next to its outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::edm::{self, EdmModel, EdmTrainConfig};
use crate::error::{Error, Result};
use crate::etm::{self, EtmDecoder, EtmEncoder, EtmTrainConfig};
use crate::evalkit::{self, FloorSearchOptions, ImitationRecord};
use crate::headmodel::{self, project_2d, Alignment, FaceParams, HeadModel, Landmarks2D};
use crate::jsonio;
use crate::rng;
use crate::robotsim::{self, CommandSample, PairsHeader, RobotRig};
use crate::synthdata::{self, DatasetHeader, FaceSample, ParamPrior};

pub const RUN_CONFIG_FORMAT_VERSION: u32 = 1;
pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

const STREAM_IMITATION: u64 = 0x696d_6974;
const STREAM_NOISE: u64 = 0x6e6f_6973;

/// Fully resolved run configuration. Defaults reproduce the reference
/// protocol; a JSON config file may override any subset of fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub master_seed: u64,

    // head model
    pub n_vertices: usize,
    pub n_shape: usize,
    pub n_expr: usize,
    pub n_landmarks: usize,

    // face dataset
    pub n_samples: usize,
    pub sigma_e: f64,
    pub sigma_m: f64,
    pub pose_max: f64,
    pub noise_sigma: f64,
    pub train_fraction: f64,

    // cluster corpus
    pub per_cluster: usize,
    pub cluster_spread: f64,
    pub cluster_pose_max: f64,
    pub cluster_sigma_m: f64,

    // rig and robot corpus
    pub n_actuators: usize,
    pub n_robot_samples: usize,

    // decoupling training
    pub edm_epochs: usize,
    pub edm_lr: f64,
    pub edm_batch: usize,
    pub edm_hidden: Vec<usize>,

    // transfer training
    pub etm_epochs: usize,
    pub etm_lr: f64,
    pub etm_batch: usize,
    pub etm_lambda: f64,
    pub etm_hidden: Vec<usize>,

    // evaluation
    pub imitation_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            master_seed: 7,
            n_vertices: 512,
            n_shape: 8,
            n_expr: 10,
            n_landmarks: 68,
            n_samples: 1000,
            sigma_e: 1.0,
            sigma_m: 1.0,
            pose_max: 0.3,
            noise_sigma: 0.005,
            train_fraction: 0.8,
            per_cluster: 60,
            cluster_spread: synthdata::DEFAULT_CLUSTER_SPREAD,
            cluster_pose_max: 0.1,
            cluster_sigma_m: 1.0,
            n_actuators: robotsim::DEFAULT_ACTUATORS,
            n_robot_samples: 1000,
            edm_epochs: 500,
            edm_lr: 1e-4,
            edm_batch: 16,
            edm_hidden: vec![256, 256],
            etm_epochs: 300,
            etm_lr: 1e-3,
            etm_batch: 32,
            etm_lambda: 1.0,
            etm_hidden: vec![128, 128],
            imitation_samples: 20,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)?;
        jsonio::from_str(&text)
    }

    pub fn seeds(&self) -> SeedSet {
        SeedSet::derive(self.master_seed)
    }

    pub fn data_prior(&self) -> ParamPrior {
        ParamPrior {
            sigma_e: self.sigma_e,
            sigma_m: self.sigma_m,
            pose_max: self.pose_max,
            noise_sigma: self.noise_sigma,
            seed: self.seeds().data,
        }
    }

    pub fn cluster_prior(&self) -> ParamPrior {
        ParamPrior {
            sigma_e: self.sigma_e,
            sigma_m: self.cluster_sigma_m,
            pose_max: self.cluster_pose_max,
            noise_sigma: self.noise_sigma,
            seed: self.seeds().clusters,
        }
    }

    pub fn edm_config(&self) -> EdmTrainConfig {
        EdmTrainConfig {
            epochs: self.edm_epochs,
            lr: self.edm_lr,
            batch: self.edm_batch,
            hidden: self.edm_hidden.clone(),
            seed: self.seeds().edm_train,
        }
    }

    pub fn etm_config(&self, seed: u64) -> EtmTrainConfig {
        EtmTrainConfig {
            epochs: self.etm_epochs,
            lr: self.etm_lr,
            batch: self.etm_batch,
            lambda: self.etm_lambda,
            hidden: self.etm_hidden.clone(),
            seed,
        }
    }
}

/// All randomness in a run flows from these, derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedSet {
    pub master: u64,
    pub model: u64,
    pub data: u64,
    pub clusters: u64,
    pub rig: u64,
    pub pairs: u64,
    pub edm_train: u64,
    pub etm_dec_train: u64,
    pub etm_enc_train: u64,
    pub split: u64,
    pub eval: u64,
}

impl SeedSet {
    pub fn derive(master: u64) -> SeedSet {
        SeedSet {
            master,
            model: rng::derive(master, 1),
            data: rng::derive(master, 2),
            clusters: rng::derive(master, 3),
            rig: rng::derive(master, 4),
            pairs: rng::derive(master, 5),
            edm_train: rng::derive(master, 6),
            etm_dec_train: rng::derive(master, 7),
            etm_enc_train: rng::derive(master, 8),
            split: rng::derive(master, 9),
            eval: rng::derive(master, 10),
        }
    }
}

/// Envelope written around every report JSON.
#[derive(Debug, Clone, Serialize)]
pub struct Report<T: Serialize> {
    pub format_version: u32,
    pub kind: String,
    pub seeds: SeedSet,
    pub data: T,
}

/// Artifact layout inside the output directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub dir: PathBuf,
}

macro_rules! artifact {
    ($name:ident, $file:literal) => {
        pub fn $name(&self) -> PathBuf {
            self.dir.join($file)
        }
    };
}

impl Workspace {
    pub fn new(dir: impl Into<PathBuf>) -> Workspace {
        Workspace { dir: dir.into() }
    }

    artifact!(run_config, "run_config.json");
    artifact!(head_model, "head_model.json");
    artifact!(face_dataset, "face_dataset.jsonl");
    artifact!(cluster_corpus, "cluster_corpus.jsonl");
    artifact!(robot_rig, "robot_rig.json");
    artifact!(robot_pairs, "robot_pairs.jsonl");
    artifact!(edm_model, "edm_model.json");
    artifact!(edm_trace, "edm_trace.csv");
    artifact!(etm_decoder, "etm_decoder.json");
    artifact!(etm_decoder_trace, "etm_decoder_trace.csv");
    artifact!(etm_encoder, "etm_encoder.json");
    artifact!(etm_encoder_trace, "etm_encoder_trace.csv");
    artifact!(table1_csv, "table1.csv");
    artifact!(table1_json, "table1.json");
    artifact!(table2_csv, "table2.csv");
    artifact!(table2_json, "table2.json");
    artifact!(table3_csv, "table3.csv");
    artifact!(table3_json, "table3.json");
    artifact!(imitation_csv, "imitation.csv");
    artifact!(imitation_json, "imitation.json");
    artifact!(embed_expression_csv, "embed_expression.csv");
    artifact!(embed_landmarks_csv, "embed_landmarks.csv");
    artifact!(manifest, "manifest.json");

    /// Every artifact a full run produces, in manifest order.
    pub fn all_artifacts(&self) -> Vec<PathBuf> {
        vec![
            self.run_config(),
            self.head_model(),
            self.face_dataset(),
            self.cluster_corpus(),
            self.robot_rig(),
            self.robot_pairs(),
            self.edm_model(),
            self.edm_trace(),
            self.etm_decoder(),
            self.etm_decoder_trace(),
            self.etm_encoder(),
            self.etm_encoder_trace(),
            self.table1_csv(),
            self.table1_json(),
            self.table2_csv(),
            self.table2_json(),
            self.table3_csv(),
            self.table3_json(),
            self.imitation_csv(),
            self.imitation_json(),
            self.embed_expression_csv(),
            self.embed_landmarks_csv(),
        ]
    }

    pub fn ensure_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        Ok(())
    }

    /// Existing-output policy: `force` overwrites, `resume` reuses, anything
    /// else is an error.
    pub fn check_output(&self, path: &Path, force: bool, resume: bool) -> Result<OutputState> {
        if !path.exists() {
            return Ok(OutputState::Absent);
        }
        if resume {
            return Ok(OutputState::Reuse);
        }
        if force {
            return Ok(OutputState::Overwrite);
        }
        Err(Error::invalid(format!(
            "{} already exists; pass --force to overwrite or --resume to reuse",
            path.display()
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputState {
    Absent,
    Reuse,
    Overwrite,
}

#[derive(Debug, Clone, Serialize)]
struct RunConfigFile<'a> {
    format_version: u32,
    seeds: SeedSet,
    config: &'a RunConfig,
}

/// Writes the fully resolved config (with its derived seed set) into the
/// output directory for provenance.
pub fn write_run_config(cfg: &RunConfig, ws: &Workspace) -> Result<()> {
    ws.ensure_dir()?;
    jsonio::write_file(
        &ws.run_config(),
        &RunConfigFile {
            format_version: RUN_CONFIG_FORMAT_VERSION,
            seeds: cfg.seeds(),
            config: cfg,
        },
    )
}

fn write_report<T: Serialize>(path: &Path, kind: &str, seeds: SeedSet, data: T) -> Result<()> {
    jsonio::write_file(
        path,
        &Report {
            format_version: REPORT_FORMAT_VERSION,
            kind: kind.to_string(),
            seeds,
            data,
        },
    )
}

// ---------------------------------------------------------------------------
// Generation steps
// ---------------------------------------------------------------------------

pub fn gen_model(cfg: &RunConfig, ws: &Workspace, force: bool, resume: bool) -> Result<HeadModel> {
    let path = ws.head_model();
    if ws.check_output(&path, force, resume)? == OutputState::Reuse {
        let model = HeadModel::load_json(&path)?;
        println!("head model: reused {} (seed {})", path.display(), model.seed);
        return Ok(model);
    }
    ws.ensure_dir()?;
    let model = headmodel::build_head_model(
        cfg.seeds().model,
        cfg.n_vertices,
        cfg.n_shape,
        cfg.n_expr,
        cfg.n_landmarks,
    )?;
    model.save_json(&path)?;
    write_run_config(cfg, ws)?;
    println!(
        "head model: {} vertices, {} shape + {} expression fields, {} landmarks, seed {} -> {}",
        cfg.n_vertices,
        cfg.n_shape,
        cfg.n_expr,
        cfg.n_landmarks,
        cfg.seeds().model,
        path.display()
    );
    Ok(model)
}

fn load_model(ws: &Workspace) -> Result<HeadModel> {
    HeadModel::load_json(&ws.head_model()).map_err(|e| match e {
        Error::Io(io) => Error::invalid(format!(
            "missing head model at {} (run `gen model` first): {io}",
            ws.head_model().display()
        )),
        other => other,
    })
}

pub fn gen_dataset(
    cfg: &RunConfig,
    ws: &Workspace,
    force: bool,
    resume: bool,
) -> Result<(DatasetHeader, Vec<FaceSample>)> {
    let path = ws.face_dataset();
    if ws.check_output(&path, force, resume)? == OutputState::Reuse {
        let (header, samples) = synthdata::load_dataset(&path)?;
        println!("face dataset: reused {} ({} samples)", path.display(), samples.len());
        return Ok((header, samples));
    }
    let model = load_model(ws)?;
    let prior = cfg.data_prior();
    let samples = synthdata::generate_face_dataset(&model, &prior, cfg.n_samples)?;
    let header = DatasetHeader {
        format_version: synthdata::DATASET_FORMAT_VERSION,
        kind: "face_dataset".into(),
        model_seed: model.seed,
        n: samples.len(),
        n_landmarks: model.n_landmarks,
        n_expr: model.n_expr,
        n_shape: model.n_shape,
        prior: prior.clone(),
    };
    synthdata::save_dataset(&path, &header, &samples)?;
    write_run_config(cfg, ws)?;
    println!(
        "face dataset: {} samples, noise {}, seed {} -> {}",
        samples.len(),
        prior.noise_sigma,
        prior.seed,
        path.display()
    );
    Ok((header, samples))
}

pub fn gen_clusters(
    cfg: &RunConfig,
    ws: &Workspace,
    force: bool,
    resume: bool,
) -> Result<Vec<FaceSample>> {
    let path = ws.cluster_corpus();
    if ws.check_output(&path, force, resume)? == OutputState::Reuse {
        let (_, samples) = synthdata::load_dataset(&path)?;
        println!("cluster corpus: reused {} ({} samples)", path.display(), samples.len());
        return Ok(samples);
    }
    let model = load_model(ws)?;
    let prior = cfg.cluster_prior();
    let clusters = synthdata::default_clusters(
        cfg.seeds().clusters,
        model.n_expr,
        cfg.sigma_e,
        cfg.cluster_spread,
    );
    let samples = synthdata::generate_cluster_corpus(&model, &clusters, cfg.per_cluster, &prior)?;
    let header = DatasetHeader {
        format_version: synthdata::DATASET_FORMAT_VERSION,
        kind: "cluster_corpus".into(),
        model_seed: model.seed,
        n: samples.len(),
        n_landmarks: model.n_landmarks,
        n_expr: model.n_expr,
        n_shape: model.n_shape,
        prior: prior.clone(),
    };
    synthdata::save_dataset(&path, &header, &samples)?;
    write_run_config(cfg, ws)?;
    println!(
        "cluster corpus: 7 categories x {} samples, spread {}, seed {} -> {}",
        cfg.per_cluster,
        cfg.cluster_spread,
        prior.seed,
        path.display()
    );
    Ok(samples)
}

pub fn gen_rig(cfg: &RunConfig, ws: &Workspace, force: bool, resume: bool) -> Result<RobotRig> {
    let path = ws.robot_rig();
    if ws.check_output(&path, force, resume)? == OutputState::Reuse {
        let rig = RobotRig::load_json(&path)?;
        println!("robot rig: reused {} ({} actuators)", path.display(), rig.n_actuators);
        return Ok(rig);
    }
    ws.ensure_dir()?;
    let rig = robotsim::build_rig(cfg.seeds().rig, cfg.n_actuators, cfg.n_expr, cfg.n_shape)?;
    rig.save_json(&path)?;
    write_run_config(cfg, ws)?;
    println!(
        "robot rig: {} actuators, {} expression axes, seed {} -> {}",
        rig.n_actuators,
        rig.n_expr,
        rig.seed,
        path.display()
    );
    Ok(rig)
}

pub fn gen_pairs(
    cfg: &RunConfig,
    ws: &Workspace,
    force: bool,
    resume: bool,
) -> Result<(PairsHeader, Vec<CommandSample>)> {
    let path = ws.robot_pairs();
    if ws.check_output(&path, force, resume)? == OutputState::Reuse {
        let (header, pairs) = robotsim::load_pairs(&path)?;
        println!("robot pairs: reused {} ({} pairs)", path.display(), pairs.len());
        return Ok((header, pairs));
    }
    let model = load_model(ws)?;
    let rig = RobotRig::load_json(&ws.robot_rig())?;
    let edm = EdmModel::load_json(&ws.edm_model())?;
    let seed = cfg.seeds().pairs;
    let pairs = robotsim::collect_robot_dataset(
        &rig,
        &model,
        &edm,
        cfg.n_robot_samples,
        cfg.noise_sigma,
        seed,
    )?;
    let header = PairsHeader {
        format_version: robotsim::PAIRS_FORMAT_VERSION,
        kind: "robot_pairs".into(),
        rig_seed: rig.seed,
        n: pairs.len(),
        n_actuators: rig.n_actuators,
        n_expr: rig.n_expr,
        noise_sigma: cfg.noise_sigma,
        seed,
    };
    robotsim::save_pairs(&path, &header, &pairs)?;
    write_run_config(cfg, ws)?;
    println!(
        "robot pairs: {} commands observed (noise {}), seed {} -> {}",
        pairs.len(),
        cfg.noise_sigma,
        seed,
        path.display()
    );
    Ok((header, pairs))
}

// ---------------------------------------------------------------------------
// Training steps
// ---------------------------------------------------------------------------

fn write_trace_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut w = fs::File::create(path).map(std::io::BufWriter::new)?;
    writeln!(w, "{header}")?;
    for (i, row) in rows.iter().enumerate() {
        write!(w, "{i}")?;
        for v in row {
            write!(w, ",{}", jsonio::fmt_f64(*v))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn train_edm_step(cfg: &RunConfig, ws: &Workspace, force: bool, resume: bool) -> Result<EdmModel> {
    let path = ws.edm_model();
    if ws.check_output(&path, force, resume)? == OutputState::Reuse {
        let edm = EdmModel::load_json(&path)?;
        println!("edm: reused {}", path.display());
        return Ok(edm);
    }
    let model = load_model(ws)?;
    let (header, samples) = synthdata::load_dataset(&ws.face_dataset())?;
    if header.model_seed != model.seed
        || header.n_landmarks != model.n_landmarks
        || header.n_expr != model.n_expr
        || header.n_shape != model.n_shape
    {
        return Err(Error::dimension(format!(
            "dataset {} was generated against a different head model",
            ws.face_dataset().display()
        )));
    }
    let train_cfg = cfg.edm_config();
    println!(
        "edm: training {} epochs, lr {}, batch {}, hidden {:?}, seed {}",
        train_cfg.epochs, train_cfg.lr, train_cfg.batch, train_cfg.hidden, train_cfg.seed
    );
    let (train_idx, _) = synthdata::split_indices(samples.len(), cfg.train_fraction, cfg.seeds().split);
    let train_set: Vec<FaceSample> = train_idx.iter().map(|&i| samples[i].clone()).collect();
    let trained = edm::train(&train_set, &model, &train_cfg)?;
    trained.model.save_json(&path)?;
    write_trace_csv(
        &ws.edm_trace(),
        "epoch,mean_landmark_loss",
        &trained.loss_trace.iter().map(|&l| vec![l]).collect::<Vec<_>>(),
    )?;
    write_run_config(cfg, ws)?;
    let last = trained.loss_trace.last().copied().unwrap_or(f64::NAN);
    println!(
        "edm: trained on {} samples, final mean landmark loss {last:.6} -> {}",
        train_set.len(),
        path.display()
    );
    Ok(trained.model)
}

pub fn train_decoder_step(
    cfg: &RunConfig,
    ws: &Workspace,
    force: bool,
    resume: bool,
) -> Result<EtmDecoder> {
    let path = ws.etm_decoder();
    if ws.check_output(&path, force, resume)? == OutputState::Reuse {
        let dec = EtmDecoder::load_json(&path)?;
        println!("etm decoder: reused {}", path.display());
        return Ok(dec);
    }
    let (_, pairs) = robotsim::load_pairs(&ws.robot_pairs())?;
    let train_cfg = cfg.etm_config(cfg.seeds().etm_dec_train);
    println!(
        "etm decoder: training {} epochs, lr {}, batch {}, hidden {:?}, seed {}",
        train_cfg.epochs, train_cfg.lr, train_cfg.batch, train_cfg.hidden, train_cfg.seed
    );
    let (train_idx, _) = synthdata::split_indices(pairs.len(), cfg.train_fraction, cfg.seeds().split);
    let train_set: Vec<CommandSample> = train_idx.iter().map(|&i| pairs[i].clone()).collect();
    let trained = etm::train_decoder(&train_set, &train_cfg)?;
    trained.decoder.save_json(&path)?;
    write_trace_csv(
        &ws.etm_decoder_trace(),
        "epoch,l_dec",
        &trained.loss_trace.iter().map(|&l| vec![l]).collect::<Vec<_>>(),
    )?;
    write_run_config(cfg, ws)?;
    let last = trained.loss_trace.last().copied().unwrap_or(f64::NAN);
    println!(
        "etm decoder: trained on {} pairs, final l_dec {last:.6} -> {}",
        train_set.len(),
        path.display()
    );
    Ok(trained.decoder)
}

pub fn train_encoder_step(
    cfg: &RunConfig,
    ws: &Workspace,
    force: bool,
    resume: bool,
) -> Result<EtmEncoder> {
    let path = ws.etm_encoder();
    if ws.check_output(&path, force, resume)? == OutputState::Reuse {
        let enc = EtmEncoder::load_json(&path)?;
        println!("etm encoder: reused {}", path.display());
        return Ok(enc);
    }
    let decoder = EtmDecoder::load_json(&ws.etm_decoder())?;
    let (_, pairs) = robotsim::load_pairs(&ws.robot_pairs())?;
    let train_cfg = cfg.etm_config(cfg.seeds().etm_enc_train);
    println!(
        "etm encoder: training {} epochs, lr {}, batch {}, lambda {}, hidden {:?}, seed {}",
        train_cfg.epochs,
        train_cfg.lr,
        train_cfg.batch,
        train_cfg.lambda,
        train_cfg.hidden,
        train_cfg.seed
    );
    let (train_idx, _) = synthdata::split_indices(pairs.len(), cfg.train_fraction, cfg.seeds().split);
    let train_set: Vec<CommandSample> = train_idx.iter().map(|&i| pairs[i].clone()).collect();
    let trained = etm::train_encoder(&train_set, &decoder, &train_cfg)?;
    trained.encoder.save_json(&path)?;
    write_trace_csv(
        &ws.etm_encoder_trace(),
        "epoch,l_com,l_rec,l_enc",
        &trained
            .trace
            .iter()
            .map(|p| vec![p.l_com, p.l_rec, p.l_enc])
            .collect::<Vec<_>>(),
    )?;
    write_run_config(cfg, ws)?;
    let last = trained.trace.last().map(|p| p.l_enc).unwrap_or(f64::NAN);
    println!(
        "etm encoder: trained on {} pairs, final l_enc {last:.6} -> {}",
        train_set.len(),
        path.display()
    );
    Ok(trained.encoder)
}

// ---------------------------------------------------------------------------
// Evaluation steps
// ---------------------------------------------------------------------------

pub fn eval_table1(cfg: &RunConfig, ws: &Workspace) -> Result<evalkit::CvReport> {
    let edm = EdmModel::load_json(&ws.edm_model())?;
    let (_, corpus) = synthdata::load_dataset(&ws.cluster_corpus())?;
    let report = evalkit::table1_cv_report(&edm, &corpus)?;
    evalkit::write_table1_csv(&report, &ws.table1_csv())?;
    write_report(&ws.table1_json(), "cv_by_category", cfg.seeds(), &report)?;
    write_run_config(cfg, ws)?;
    let wins = report
        .rows
        .iter()
        .filter(|r| r.expression_cv < r.landmark_cv)
        .count();
    println!(
        "table1: decoupled representation more stable in {wins}/7 categories -> {}",
        ws.table1_csv().display()
    );
    Ok(report)
}

pub fn eval_table2(cfg: &RunConfig, ws: &Workspace) -> Result<evalkit::Table2Report> {
    let edm = EdmModel::load_json(&ws.edm_model())?;
    let (header, samples) = synthdata::load_dataset(&ws.face_dataset())?;
    let (_, test_idx) = synthdata::split_indices(samples.len(), cfg.train_fraction, cfg.seeds().split);
    let test: Vec<&FaceSample> = test_idx.iter().map(|&i| &samples[i]).collect();
    let report = evalkit::table2_comparison(&edm, &test, &header.prior, cfg.seeds().eval)?;
    evalkit::write_table2_csv(&report, &ws.table2_csv())?;
    write_report(&ws.table2_json(), "representation_errors", cfg.seeds(), &report)?;
    write_run_config(cfg, ws)?;
    println!(
        "table2: overall mse RG {:.4} vs EDM {:.4} on {} held-out samples -> {}",
        report.rg.overall.mse,
        report.edm.overall.mse,
        test.len(),
        ws.table2_csv().display()
    );
    Ok(report)
}

pub fn eval_table3(cfg: &RunConfig, ws: &Workspace) -> Result<Vec<evalkit::MethodComparison>> {
    let encoder = EtmEncoder::load_json(&ws.etm_encoder())?;
    let (_, pairs) = robotsim::load_pairs(&ws.robot_pairs())?;
    let (train_idx, test_idx) = synthdata::split_indices(pairs.len(), cfg.train_fraction, cfg.seeds().split);
    let train: Vec<CommandSample> = train_idx.iter().map(|&i| pairs[i].clone()).collect();
    let test: Vec<CommandSample> = test_idx.iter().map(|&i| pairs[i].clone()).collect();
    let rows = evalkit::table3_comparison(
        &train,
        &test,
        &encoder,
        &cfg.data_prior(),
        &cfg.etm_config(cfg.seeds().etm_enc_train),
        cfg.seeds().eval,
    )?;
    evalkit::write_table3_csv(&rows, &ws.table3_csv())?;
    write_report(&ws.table3_json(), "command_errors", cfg.seeds(), &rows)?;
    write_run_config(cfg, ws)?;
    let ours = rows.last().expect("five rows");
    println!(
        "table3: {} rows, ours mse {:.4} mae {:.4} -> {}",
        rows.len(),
        ours.mse,
        ours.mae,
        ws.table3_csv().display()
    );
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct ImitationReport {
    pub records: Vec<ImitationRecord>,
    pub mean_gap: f64,
    pub mean_floor: f64,
    pub outcomes: Vec<evalkit::ImitationOutcome>,
}

/// Synthesizes human faces whose expressions the rig can produce exactly,
/// runs the end-to-end imitation on each and scores the expression gap
/// against the budgeted direct-fit benchmark.
pub fn eval_imitate(cfg: &RunConfig, ws: &Workspace) -> Result<ImitationReport> {
    let model = load_model(ws)?;
    let rig = RobotRig::load_json(&ws.robot_rig())?;
    let edm = EdmModel::load_json(&ws.edm_model())?;
    let encoder = EtmEncoder::load_json(&ws.etm_encoder())?;
    let seeds = cfg.seeds();
    let prior = cfg.data_prior();

    let mut records = Vec::with_capacity(cfg.imitation_samples);
    let mut outcomes = Vec::with_capacity(cfg.imitation_samples);
    let mut gap_sum = 0.0;
    let mut floor_sum = 0.0;
    for i in 0..cfg.imitation_samples {
        let item = rng::item_seed(seeds.eval, STREAM_IMITATION, i as u64);
        let mut r = rng::stream(item);
        // Reachable expression with a human morphology and pose.
        let command: Vec<f64> = (0..rig.n_actuators).map(|_| r.random_range(0.0..1.0)).collect();
        let expression = rig.command_to_expression(&command)?;
        let base = synthdata::sample_params(&prior, &mut r, model.n_expr, model.n_shape);
        let params = FaceParams {
            expression,
            pose: base.pose,
            morphology: base.morphology,
        };
        let observed = observe_human(&model, &params, prior.noise_sigma, rng::derive(item, STREAM_NOISE))?;
        let outcome = evalkit::end_to_end_imitation(&observed, &edm, &encoder, &rig, &model)?;
        let (floor, _) = evalkit::reachability_floor(
            &outcome.human_expression,
            &rig,
            &FloorSearchOptions::default(),
        )?;
        gap_sum += outcome.expression_gap;
        floor_sum += floor;
        records.push(ImitationRecord {
            index: i,
            expression_gap: outcome.expression_gap,
            reachability_floor: floor,
        });
        outcomes.push(outcome);
    }
    let n = cfg.imitation_samples.max(1) as f64;
    let report = ImitationReport {
        records,
        mean_gap: gap_sum / n,
        mean_floor: floor_sum / n,
        outcomes,
    };
    evalkit::write_imitation_csv(&report.records, &ws.imitation_csv())?;
    write_report(&ws.imitation_json(), "imitation", seeds, &report)?;
    write_run_config(cfg, ws)?;
    println!(
        "imitate: mean expression gap {:.5}, mean reachability benchmark {:.5} over {} samples -> {}",
        report.mean_gap,
        report.mean_floor,
        cfg.imitation_samples,
        ws.imitation_csv().display()
    );
    Ok(report)
}

fn observe_human(
    model: &HeadModel,
    params: &FaceParams,
    noise_sigma: f64,
    noise_seed: u64,
) -> Result<Landmarks2D> {
    let lm3d = model.landmarks_3d(params)?;
    let mut observed = project_2d(&lm3d, &Alignment::IDENTITY)?;
    if noise_sigma > 0.0 {
        let normal = rand_distr::Normal::new(0.0, noise_sigma)
            .map_err(|e| Error::invalid(format!("bad noise sigma: {e}")))?;
        let mut nrng = rng::stream(noise_seed);
        for p in observed.points.iter_mut() {
            p[0] += nrng.sample(normal);
            p[1] += nrng.sample(normal);
        }
    }
    Ok(observed)
}

pub fn eval_embed(cfg: &RunConfig, ws: &Workspace) -> Result<()> {
    let edm = EdmModel::load_json(&ws.edm_model())?;
    let (_, corpus) = synthdata::load_dataset(&ws.cluster_corpus())?;
    if corpus.len() < 3 {
        return Err(Error::invalid("cluster corpus too small to embed"));
    }
    let labels: Vec<_> = corpus.iter().map(|s| s.cluster_label).collect();
    let landmark_vecs: Vec<Vec<f64>> = corpus
        .iter()
        .map(|s| edm::canonicalize(&s.observed))
        .collect::<Result<_>>()?;
    let expr_vecs: Vec<Vec<f64>> = corpus
        .iter()
        .map(|s| edm::infer(&edm, &s.observed).map(|p| p.expression))
        .collect::<Result<_>>()?;
    let lm_coords = evalkit::pca_embed_2d(&landmark_vecs)?;
    let ex_coords = evalkit::pca_embed_2d(&expr_vecs)?;
    evalkit::write_embedding_csv(&labels, &lm_coords, &ws.embed_landmarks_csv())?;
    evalkit::write_embedding_csv(&labels, &ex_coords, &ws.embed_expression_csv())?;
    write_run_config(cfg, ws)?;
    println!(
        "embed: {} samples -> {}, {}",
        corpus.len(),
        ws.embed_landmarks_csv().display(),
        ws.embed_expression_csv().display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// Full reproduction run
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub master_seed: u64,
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}

pub fn write_manifest(cfg: &RunConfig, ws: &Workspace) -> Result<Manifest> {
    let mut artifacts = BTreeMap::new();
    for path in ws.all_artifacts() {
        if path.exists() {
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            artifacts.insert(name, sha256_hex(&path)?);
        }
    }
    let manifest = Manifest {
        format_version: MANIFEST_FORMAT_VERSION,
        master_seed: cfg.master_seed,
        artifacts,
    };
    jsonio::write_file(&ws.manifest(), &manifest)?;
    Ok(manifest)
}

/// Runs the whole pipeline in order with one master seed and writes the
/// artifact hash manifest. With `resume`, steps whose outputs already exist
/// are reused.
pub fn repro(cfg: &RunConfig, ws: &Workspace, force: bool, resume: bool) -> Result<Manifest> {
    gen_model(cfg, ws, force, resume)?;
    gen_dataset(cfg, ws, force, resume)?;
    train_edm_step(cfg, ws, force, resume)?;
    gen_clusters(cfg, ws, force, resume)?;
    gen_rig(cfg, ws, force, resume)?;
    gen_pairs(cfg, ws, force, resume)?;
    train_decoder_step(cfg, ws, force, resume)?;
    train_encoder_step(cfg, ws, force, resume)?;
    eval_table1(cfg, ws)?;
    eval_table2(cfg, ws)?;
    eval_table3(cfg, ws)?;
    eval_imitate(cfg, ws)?;
    eval_embed(cfg, ws)?;
    let manifest = write_manifest(cfg, ws)?;
    println!(
        "repro: complete, {} artifacts hashed -> {}",
        manifest.artifacts.len(),
        ws.manifest().display()
    );
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_set_is_deterministic_and_distinct() {
        let a = SeedSet::derive(7);
        let b = SeedSet::derive(7);
        assert_eq!(a, b);
        let seeds = [
            a.model,
            a.data,
            a.clusters,
            a.rig,
            a.pairs,
            a.edm_train,
            a.etm_dec_train,
            a.etm_enc_train,
            a.split,
            a.eval,
        ];
        for (i, x) in seeds.iter().enumerate() {
            for y in &seeds[i + 1..] {
                assert_ne!(x, y);
            }
        }
    }

    #[test]
    fn defaults_match_reference_protocol() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.n_samples, 1000);
        assert_eq!(cfg.train_fraction, 0.8);
        assert_eq!(cfg.edm_epochs, 500);
        assert_eq!(cfg.edm_lr, 1e-4);
        assert_eq!(cfg.edm_batch, 16);
        assert_eq!(cfg.etm_lr, 1e-3);
        assert_eq!(cfg.etm_batch, 32);
        assert_eq!(cfg.etm_lambda, 1.0);
        assert_eq!(cfg.n_actuators, 22);
        assert_eq!((cfg.n_expr, cfg.n_shape, cfg.n_landmarks), (10, 8, 68));
    }

    #[test]
    fn partial_config_file_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, "{\"master_seed\": 99, \"n_samples\": 50}").unwrap();
        let cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!(cfg.master_seed, 99);
        assert_eq!(cfg.n_samples, 50);
        assert_eq!(cfg.edm_epochs, 500);
    }
}
