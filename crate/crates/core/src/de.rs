//! Monte Carlo density evolution for (2, d_c)-regular codes over GF(2^m)
//! on the detected MIMO channel, BPSK only.
//!
//! The ensemble holds variable-to-check messages. One iteration forms every
//! new message from a fresh channel prior and one check output; each check
//! output combines `d_c − 1` messages drawn with replacement, with random
//! nonzero edge coefficients. Channel priors come from the full simulator
//! path (all-zero codeword, channel, detector, symbol priors).

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{self, gray_constellation, ChannelError, Constellation, SymbolMapper};
use crate::complexity::NoTally;
use crate::decoder::{floor_normalize, fwht};
use crate::detect::{self, DetectError, DetectorKind};
use crate::galois::{FieldTable, GfSymbol};
use crate::rng;

/// Ensemble entries processed per random stream; fixed so results do not
/// depend on the number of workers.
const CHUNK: usize = 1000;

/// Smallest accepted ensemble.
pub const MIN_ENSEMBLE: usize = 10_000;

#[derive(Debug, Error)]
pub enum DeError {
    #[error("density evolution supports BPSK only; {0}-point constellations lack the needed symmetry")]
    UnsupportedModulation(usize),
    #[error("invalid density evolution setting: {0}")]
    Config(String),
    #[error("starting SNR {0} dB does not decode; start higher")]
    StartFails(f64),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Detect(#[from] DetectError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeConfig {
    /// Ensemble size `L`.
    pub ensemble: usize,
    pub l_max: usize,
    pub gamma0_db: f64,
    pub step_db: f64,
    pub h_stop: f64,
    pub d_c: usize,
    pub m: u32,
    pub n_t: usize,
    pub n_r: usize,
    pub modulation: usize,
    pub detector: DetectorKind,
    pub sigma2_e: f64,
    /// Repetition factor `t`: each variable sees `t` channel priors combined
    /// through random nonzero coefficients.
    pub repetition: usize,
    /// Cap on SNR points visited by [`find_threshold`].
    pub max_points: usize,
    pub seed: u64,
}

impl DeConfig {
    pub fn validate(&self) -> Result<(), DeError> {
        if self.modulation != 2 {
            return Err(DeError::UnsupportedModulation(self.modulation));
        }
        let mut problems = Vec::new();
        if self.ensemble < MIN_ENSEMBLE {
            problems.push(format!("ensemble size {} below {MIN_ENSEMBLE}", self.ensemble));
        }
        if !(self.step_db > 0.0) {
            problems.push(format!("step {} dB must be positive", self.step_db));
        }
        if !(self.h_stop > 0.0 && self.h_stop < 1.0) {
            problems.push(format!("entropy threshold {} outside (0, 1)", self.h_stop));
        }
        if self.d_c < 2 {
            problems.push(format!("check degree {} below 2", self.d_c));
        }
        if self.l_max == 0 {
            problems.push("iteration cap is zero".into());
        }
        if self.repetition == 0 {
            problems.push("repetition factor is zero".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(DeError::Config(problems.join("; ")))
        }
    }
}

/// Outcome at one SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct DePoint {
    pub gamma_db: f64,
    pub iterations: usize,
    pub final_entropy: f64,
    pub converged: bool,
    pub entropy_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeResult {
    pub threshold_db: f64,
    pub trajectory: Vec<DePoint>,
}

impl DeResult {
    pub fn converged_points(&self) -> impl Iterator<Item = &DePoint> {
        self.trajectory.iter().filter(|p| p.converged)
    }
}

/// Mean Shannon entropy of the ensemble in base `q`.
pub fn ensemble_entropy(ensemble: &[f64], q: usize) -> f64 {
    let l = ensemble.len() / q;
    let inv_ln_q = 1.0 / (q as f64).ln();
    let total: f64 = ensemble
        .par_chunks(q * CHUNK)
        .map(|c| c.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum::<f64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    total * inv_ln_q / l as f64
}

/// Source of channel priors for the all-zero codeword.
struct EquivalentChannel {
    field_size: usize,
    mapper: SymbolMapper,
    constellation: Constellation,
    detector: DetectorKind,
    n_t: usize,
    n_r: usize,
    sigma2_n: f64,
    sigma2_e: f64,
    repetition: usize,
}

impl EquivalentChannel {
    fn new(cfg: &DeConfig, gamma_db: f64) -> Result<Self, DeError> {
        let constellation = gray_constellation(cfg.modulation, 1.0 / cfg.n_t as f64)?;
        let mapper = SymbolMapper::new(cfg.m, constellation.bits(), cfg.n_t)?;
        Ok(EquivalentChannel {
            field_size: 1 << cfg.m,
            mapper,
            constellation,
            detector: cfg.detector,
            n_t: cfg.n_t,
            n_r: cfg.n_r,
            sigma2_n: channel::snr_to_noise(gamma_db, 1.0),
            sigma2_e: cfg.sigma2_e,
            repetition: cfg.repetition,
        })
    }

    /// Fills `out` (length multiple of `q`) with priors of zero symbols.
    fn fill<R: Rng>(&self, out: &mut [f64], rng: &mut R) -> Result<(), DeError> {
        let t = self.repetition;
        if t == 1 {
            return self.fill_copies(out, rng);
        }
        let q = self.field_size;
        let mut copies = vec![0.0; out.len() * t];
        self.fill_copies(&mut copies, rng)?;
        let field = FieldTable::new(q.trailing_zeros(), None).map_err(|e| DeError::Config(e.to_string()))?;
        for (v, prior) in out.chunks_exact_mut(q).enumerate() {
            prior.copy_from_slice(&copies[v * t * q..(v * t + 1) * q]);
            for j in 1..t {
                let c = GfSymbol(rng.random_range(1..q as u32) as u8);
                let row = field.mul_row(c);
                let copy = &copies[(v * t + j) * q..(v * t + j + 1) * q];
                for x in 0..q {
                    prior[x] *= copy[row[x] as usize];
                }
                floor_normalize(prior);
            }
        }
        Ok(())
    }

    fn fill_copies<R: Rng>(&self, out: &mut [f64], rng: &mut R) -> Result<(), DeError> {
        let q = self.field_size;
        let per_use = self.mapper.k_t();
        let zero = vec![self.constellation.point(0); self.n_t];
        let mut filled = 0;
        let needed = out.len() / q;
        while filled < needed {
            let h = channel::sample_iid(self.n_t, self.n_r, rng);
            let y = channel::transmit(&h, &zero, self.sigma2_n, rng);
            let h_est = channel::perturb_estimate(&h, self.sigma2_e, rng)?;
            let est = detect::detect(self.detector, &h_est, &y, 1.0, self.sigma2_n)?;
            let lik = detect::gaussian_likelihoods(&est, &self.constellation, &mut NoTally);
            let take = per_use.min(needed - filled);
            let priors = detect::symbol_priors(&lik, &self.mapper, take, q, &mut NoTally)?;
            out[filled * q..(filled + take) * q].copy_from_slice(priors.as_slice());
            filled += take;
        }
        Ok(())
    }
}

/// `L` channel priors at `gamma_db` for the all-zero codeword.
pub fn de_initial_ensemble(cfg: &DeConfig, gamma_db: f64, tag: u64) -> Result<Vec<f64>, DeError> {
    cfg.validate()?;
    let ch = EquivalentChannel::new(cfg, gamma_db)?;
    let q = 1usize << cfg.m;
    let mut out = vec![0.0; cfg.ensemble * q];
    out.par_chunks_mut(CHUNK * q).enumerate().try_for_each(|(i, chunk)| {
        let mut r = rng::stream(cfg.seed, &[0xde, tag, 0, i as u64]);
        ch.fill(chunk, &mut r)
    })?;
    Ok(out)
}

/// Check-node output: distribution of `x` with `h_out·x = Σ h_i x_i`.
fn check_output(field: &FieldTable, inputs: &[&[f64]], coefs: &[GfSymbol], h_out: GfSymbol, acc: &mut [f64], tmp: &mut [f64], out: &mut [f64]) {
    let q = field.size();
    acc.iter_mut().for_each(|v| *v = 1.0);
    for (inp, &h) in inputs.iter().zip(coefs) {
        let perm = field.mul_row(h);
        for x in 0..q {
            tmp[perm[x] as usize] = inp[x];
        }
        fwht(tmp);
        acc.iter_mut().zip(tmp.iter()).for_each(|(a, t)| *a *= t);
    }
    fwht(acc);
    let perm = field.mul_row(h_out);
    for x in 0..q {
        out[x] = acc[perm[x] as usize];
    }
}

/// One density-evolution iteration.
pub fn de_iterate(ensemble: &[f64], cfg: &DeConfig, field: &FieldTable, gamma_db: f64, tag: u64, iteration: usize) -> Result<Vec<f64>, DeError> {
    let ch = EquivalentChannel::new(cfg, gamma_db)?;
    Ok(de_step(ensemble, cfg, field, &ch, tag, iteration)?)
}

fn de_step(ensemble: &[f64], cfg: &DeConfig, field: &FieldTable, ch: &EquivalentChannel, tag: u64, iteration: usize) -> Result<Vec<f64>, DeError> {
    let q = field.size();
    let l = ensemble.len() / q;
    let mut next = vec![0.0; l * q];
    next.par_chunks_mut(CHUNK * q).enumerate().try_for_each(|(i, chunk)| {
        let mut r = rng::stream(cfg.seed, &[0xde, tag, iteration as u64 + 1, i as u64]);
        ch.fill(chunk, &mut r)?;
        let mut acc = vec![0.0; q];
        let mut tmp = vec![0.0; q];
        let mut check = vec![0.0; q];
        let mut coefs = vec![GfSymbol::ONE; cfg.d_c - 1];
        let mut inputs: Vec<&[f64]> = Vec::with_capacity(cfg.d_c - 1);
        for prior in chunk.chunks_exact_mut(q) {
            inputs.clear();
            for c in coefs.iter_mut() {
                let j = r.random_range(0..l);
                inputs.push(&ensemble[j * q..(j + 1) * q]);
                *c = GfSymbol(r.random_range(1..q as u32) as u8);
            }
            let h_out = GfSymbol(r.random_range(1..q as u32) as u8);
            check_output(field, &inputs, &coefs, h_out, &mut acc, &mut tmp, &mut check);
            floor_normalize(&mut check);
            prior.iter_mut().zip(&check).for_each(|(p, c)| *p *= c);
            floor_normalize(prior);
        }
        Ok::<_, DeError>(())
    })?;
    Ok(next)
}

/// Runs density evolution at one SNR until the entropy drops below
/// `h_stop` or `l_max` iterations pass.
pub fn run_point(cfg: &DeConfig, gamma_db: f64, tag: u64) -> Result<DePoint, DeError> {
    cfg.validate()?;
    let field = FieldTable::new(cfg.m, None).map_err(|e| DeError::Config(e.to_string()))?;
    let ch = EquivalentChannel::new(cfg, gamma_db)?;
    let q = field.size();
    let mut ens = de_initial_ensemble(cfg, gamma_db, tag)?;
    let mut trace = vec![ensemble_entropy(&ens, q)];
    let mut iterations = 0;
    while iterations < cfg.l_max && *trace.last().unwrap() >= cfg.h_stop {
        ens = de_step(&ens, cfg, &field, &ch, tag, iterations)?;
        iterations += 1;
        trace.push(ensemble_entropy(&ens, q));
    }
    let final_entropy = *trace.last().unwrap();
    Ok(DePoint { gamma_db, iterations, final_entropy, converged: final_entropy < cfg.h_stop, entropy_trace: trace })
}

/// Descends from `gamma0_db` in `step_db` steps until a point fails and
/// declares the last decodable SNR the threshold.
pub fn find_threshold(cfg: &DeConfig) -> Result<DeResult, DeError> {
    cfg.validate()?;
    let mut trajectory = Vec::new();
    let mut last_ok = None;
    for i in 0..cfg.max_points.max(1) {
        let gamma = cfg.gamma0_db - i as f64 * cfg.step_db;
        let point = run_point(cfg, gamma, i as u64)?;
        let ok = point.converged;
        trajectory.push(point);
        if !ok {
            break;
        }
        last_ok = Some(gamma);
    }
    match last_ok {
        Some(threshold_db) => Ok(DeResult { threshold_db, trajectory }),
        None => Err(DeError::StartFails(cfg.gamma0_db)),
    }
}
