//! Expression transfer module. The decoder maps normalized commands to
//! expression codes and is trained first; the encoder maps expression codes
//! to commands and is trained against the composite objective
//! L_enc = L_com + lambda * L_rec, where L_rec routes the encoder output
//! through the frozen decoder. The encoder output passes through a logistic
//! clamp so commands always lie in [0, 1].

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonio;
use crate::nnet::{self, Activation, AdamState, Gradients, Network};
use crate::rng;
use crate::robotsim::CommandSample;

pub const ETM_FORMAT_VERSION: u32 = 1;

const STREAM_DEC_NET: u64 = 0x6465_6331;
const STREAM_ENC_NET: u64 = 0x656e_6331;
const STREAM_SHUFFLE: u64 = 0x7368_7532;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtmTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub lambda: f64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    pub seed: u64,
}

fn default_hidden() -> Vec<usize> {
    vec![128, 128]
}

impl Default for EtmTrainConfig {
    fn default() -> Self {
        EtmTrainConfig {
            epochs: 300,
            lr: 1e-3,
            batch: 32,
            lambda: 1.0,
            hidden: default_hidden(),
            seed: 0,
        }
    }
}

impl EtmTrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if self.lambda < 0.0 {
            return Err(Error::invalid("lambda must be nonnegative"));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::invalid("zero-width hidden layer"));
        }
        Ok(())
    }
}

/// Command -> expression network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtmDecoder {
    pub format_version: u32,
    pub role: String,
    pub n_actuators: usize,
    pub n_expr: usize,
    pub net: Network,
}

/// Expression -> command network with logistic output clamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtmEncoder {
    pub format_version: u32,
    pub role: String,
    pub n_actuators: usize,
    pub n_expr: usize,
    pub net: Network,
}

pub struct TrainedDecoder {
    pub decoder: EtmDecoder,
    /// Per-epoch mean L_dec.
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EncoderTracePoint {
    pub l_com: f64,
    pub l_rec: f64,
    pub l_enc: f64,
}

pub struct TrainedEncoder {
    pub encoder: EtmEncoder,
    /// Per-epoch mean losses; l_enc = l_com + lambda * l_rec on every point.
    pub trace: Vec<EncoderTracePoint>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_pairs(pairs: &[CommandSample], n_actuators: usize, n_expr: usize) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    for p in pairs {
        if p.command.len() != n_actuators || p.expression.len() != n_expr {
            return Err(Error::dimension(format!(
                "pair dims ({}, {}) do not match ({}, {})",
                p.command.len(),
                p.expression.len(),
                n_actuators,
                n_expr
            )));
        }
    }
    Ok(())
}

fn shuffled(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(rng::item_seed(seed, STREAM_SHUFFLE, epoch as u64));
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i as u64) as usize;
        order.swap(i, j);
    }
    order
}

pub fn init_decoder(n_actuators: usize, n_expr: usize, hidden: &[usize], seed: u64) -> Result<EtmDecoder> {
    let mut sizes = vec![n_actuators];
    sizes.extend_from_slice(hidden);
    sizes.push(n_expr);
    let mut acts = vec![Activation::Tanh; hidden.len()];
    acts.push(Activation::Linear);
    Ok(EtmDecoder {
        format_version: ETM_FORMAT_VERSION,
        role: "etm_decoder".to_string(),
        n_actuators,
        n_expr,
        net: nnet::init_network(&sizes, &acts, seed)?,
    })
}

pub fn init_encoder(n_actuators: usize, n_expr: usize, hidden: &[usize], seed: u64) -> Result<EtmEncoder> {
    let mut sizes = vec![n_expr];
    sizes.extend_from_slice(hidden);
    sizes.push(n_actuators);
    let mut acts = vec![Activation::Tanh; hidden.len()];
    acts.push(Activation::Linear);
    Ok(EtmEncoder {
        format_version: ETM_FORMAT_VERSION,
        role: "etm_encoder".to_string(),
        n_actuators,
        n_expr,
        net: nnet::init_network(&sizes, &acts, seed)?,
    })
}

/// Trains the decoder on mean L_dec = |e - dec(a)|^2 over batches.
pub fn train_decoder(pairs: &[CommandSample], cfg: &EtmTrainConfig) -> Result<TrainedDecoder> {
    cfg.validate()?;
    let n_actuators = pairs.first().map(|p| p.command.len()).unwrap_or(0);
    let n_expr = pairs.first().map(|p| p.expression.len()).unwrap_or(0);
    check_pairs(pairs, n_actuators, n_expr)?;
    let mut dec = init_decoder(n_actuators, n_expr, &cfg.hidden, rng::derive(cfg.seed, STREAM_DEC_NET))?;
    let mut state = AdamState::new(&dec.net);
    let n = pairs.len();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = shuffled(n, cfg.seed, epoch);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let mut grads = Gradients::zeros_like(&dec.net);
            for &idx in chunk {
                let pair = &pairs[idx];
                let (pred, tape) = dec.net.forward(&pair.command)?;
                let mut upstream = Vec::with_capacity(n_expr);
                let mut loss = 0.0;
                for (p, e) in pred.iter().zip(&pair.expression) {
                    let r = p - e;
                    loss += r * r;
                    upstream.push(2.0 * r);
                }
                epoch_loss += loss;
                let (g, _) = dec.net.backward(&tape, &upstream)?;
                grads.add_assign(&g);
            }
            grads.scale(1.0 / chunk.len() as f64);
            nnet::adam_step(&mut dec.net, &grads, &mut state, cfg.lr)?;
        }
        trace.push(epoch_loss / n as f64);
    }
    Ok(TrainedDecoder { decoder: dec, loss_trace: trace })
}

/// Predicted expression for a normalized command.
pub fn decoder_predict(dec: &EtmDecoder, a: &[f64]) -> Result<Vec<f64>> {
    if a.len() != dec.n_actuators {
        return Err(Error::dimension(format!(
            "command has {} entries, decoder expects {}",
            a.len(),
            dec.n_actuators
        )));
    }
    if a.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::invalid("command components must lie in [0, 1]"));
    }
    dec.net.predict(a)
}

/// Commands for an expression code, clamped into [0, 1] by the logistic.
pub fn encoder_predict(enc: &EtmEncoder, e: &[f64]) -> Result<Vec<f64>> {
    if e.len() != enc.n_expr {
        return Err(Error::dimension(format!(
            "expression has {} entries, encoder expects {}",
            e.len(),
            enc.n_expr
        )));
    }
    Ok(enc.net.predict(e)?.into_iter().map(sigmoid).collect())
}

/// dec(enc(e)): the expression the chosen command is predicted to produce.
pub fn reconstruct_expression(enc: &EtmEncoder, dec: &EtmDecoder, e: &[f64]) -> Result<Vec<f64>> {
    decoder_predict(dec, &encoder_predict(enc, e)?)
}

/// Trains the encoder against the frozen decoder. Gradients of L_rec flow
/// through the decoder into the encoder; the decoder's parameters are never
/// updated.
pub fn train_encoder(
    pairs: &[CommandSample],
    frozen: &EtmDecoder,
    cfg: &EtmTrainConfig,
) -> Result<TrainedEncoder> {
    cfg.validate()?;
    check_pairs(pairs, frozen.n_actuators, frozen.n_expr)?;
    let mut enc = init_encoder(
        frozen.n_actuators,
        frozen.n_expr,
        &cfg.hidden,
        rng::derive(cfg.seed, STREAM_ENC_NET),
    )?;
    let mut state = AdamState::new(&enc.net);
    let n = pairs.len();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = shuffled(n, cfg.seed, epoch);
        let mut com_sum = 0.0;
        let mut rec_sum = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let mut grads = Gradients::zeros_like(&enc.net);
            for &idx in chunk {
                let pair = &pairs[idx];
                let (z, tape) = enc.net.forward(&pair.expression)?;
                let a_hat: Vec<f64> = z.iter().copied().map(sigmoid).collect();

                let mut l_com = 0.0;
                let mut d_a = Vec::with_capacity(a_hat.len());
                for (p, a) in a_hat.iter().zip(&pair.command) {
                    let r = p - a;
                    l_com += r * r;
                    d_a.push(2.0 * r);
                }

                let (e_hat, dec_tape) = frozen.net.forward(&a_hat)?;
                let mut l_rec = 0.0;
                let mut d_e = Vec::with_capacity(e_hat.len());
                for (p, e) in e_hat.iter().zip(&pair.expression) {
                    let r = p - e;
                    l_rec += r * r;
                    d_e.push(2.0 * r);
                }
                // Route the reconstruction gradient through the frozen
                // decoder down to its input, then into the encoder.
                let (_, d_a_rec) = frozen.net.backward(&dec_tape, &d_e)?;

                let mut d_z = Vec::with_capacity(z.len());
                for i in 0..z.len() {
                    let total = d_a[i] + cfg.lambda * d_a_rec[i];
                    d_z.push(total * a_hat[i] * (1.0 - a_hat[i]));
                }
                let (g, _) = enc.net.backward(&tape, &d_z)?;
                grads.add_assign(&g);
                com_sum += l_com;
                rec_sum += l_rec;
            }
            grads.scale(1.0 / chunk.len() as f64);
            nnet::adam_step(&mut enc.net, &grads, &mut state, cfg.lr)?;
        }
        let l_com = com_sum / n as f64;
        let l_rec = rec_sum / n as f64;
        trace.push(EncoderTracePoint {
            l_com,
            l_rec,
            l_enc: l_com + cfg.lambda * l_rec,
        });
    }
    Ok(TrainedEncoder { encoder: enc, trace })
}

/// Mean L_dec of a decoder over a pair set.
pub fn decoder_loss(dec: &EtmDecoder, pairs: &[CommandSample]) -> Result<f64> {
    check_pairs(pairs, dec.n_actuators, dec.n_expr)?;
    let mut total = 0.0;
    for p in pairs {
        let pred = decoder_predict(dec, &p.command)?;
        total += crate::linalg::squared_distance(&pred, &p.expression);
    }
    Ok(total / pairs.len() as f64)
}

/// Mean (L_com, L_rec) of an encoder over a pair set with a frozen decoder.
pub fn encoder_losses(
    enc: &EtmEncoder,
    dec: &EtmDecoder,
    pairs: &[CommandSample],
) -> Result<(f64, f64)> {
    check_pairs(pairs, enc.n_actuators, enc.n_expr)?;
    let mut com = 0.0;
    let mut rec = 0.0;
    for p in pairs {
        let a_hat = encoder_predict(enc, &p.expression)?;
        com += crate::linalg::squared_distance(&a_hat, &p.command);
        let e_hat = decoder_predict(dec, &a_hat)?;
        rec += crate::linalg::squared_distance(&e_hat, &p.expression);
    }
    let n = pairs.len() as f64;
    Ok((com / n, rec / n))
}

macro_rules! impl_model_io {
    ($ty:ty, $role:literal) => {
        impl $ty {
            pub fn save_json(&self, path: &Path) -> Result<()> {
                jsonio::write_file(path, self)
            }

            pub fn load_json(path: &Path) -> Result<$ty> {
                let m: $ty = jsonio::read_versioned(path, ETM_FORMAT_VERSION)?;
                if m.role != $role {
                    return Err(Error::malformed(format!(
                        "expected role {:?}, found {:?}",
                        $role, m.role
                    )));
                }
                Ok(m)
            }
        }
    };
}

impl_model_io!(EtmDecoder, "etm_decoder");
impl_model_io!(EtmEncoder, "etm_encoder");
