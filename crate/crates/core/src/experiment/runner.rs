//! Sweep drivers behind the CLI subcommands.

use std::sync::Arc;

use num_complex::Complex64;
use num_rational::Ratio;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::config::{Command, ConfigError, ExperimentConfig};
use super::output::Metadata;
use crate::channel::{self, ChannelError, Constellation, CorrelationSpec, FadingMode, SymbolMapper};
use crate::code::{CodeError, CodeSpec, SparseParityMatrix};
use crate::complexity::{self, NoTally};
use crate::de::{self, DeConfig, DeError};
use crate::decoder::{BpDecoder, DecodeError, DecoderOptions, PriorBlock};
use crate::detect::{self, DetectError, DetectorKind, LikelihoodBlock, LinearReceiver, MfMode};
use crate::galois::{FieldError, FieldTable, GfSymbol};
use crate::linalg::CMatrix;
use crate::rng;
use crate::stats::{self, StatsError};

/// Frames simulated per parallel batch in coded runs.
const FRAME_BATCH: usize = 16;
/// Channel uses per parallel batch in uncoded runs.
const USE_BATCH: usize = 64;
/// Δ_k samples per random stream.
const KS_CHUNK: usize = 1000;

const TAG_DATA: u64 = 0xda7a;
const TAG_CHANNEL: u64 = 0xc4a1;
const TAG_ESTIMATE: u64 = 0xe57e;
const TAG_UNCODED: u64 = 0x75e;
const TAG_KS: u64 = 0x6b5d;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    De(#[from] DeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("cannot read matrix file {path}: {source}")]
    MatrixFile { path: std::path::PathBuf, source: std::io::Error },
}

/// Receives one line per finished sweep point.
pub type Progress<'a> = &'a (dyn Fn(&str) + Sync);

/// Progress sink that drops everything.
pub fn quiet(_: &str) {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    FrameErrors,
    FrameCap,
    BitErrors,
    UseCap,
}

/// One (curve, SNR) point of a BER sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BerRecord {
    pub rate: String,
    pub detector: DetectorKind,
    pub sigma2_e: f64,
    pub rho_t: f64,
    pub rho_r: f64,
    pub gamma_db: f64,
    /// Frames (coded) or channel uses (uncoded).
    pub frames: u64,
    pub bits_per_frame: u64,
    pub bit_errors: u64,
    pub frame_errors: u64,
    pub ber: f64,
    /// Standard error with frames as independent clusters.
    pub ber_se: f64,
    pub fer: f64,
    pub fer_se: f64,
    pub mean_iterations: f64,
    pub bits_per_frame_error: Option<f64>,
    /// Closed-form detection plus soft-output flops; none for the exact MF.
    pub flops_per_vector: Option<u64>,
    pub stop: StopReason,
    pub spectral_efficiency: f64,
}

/// Count of frame errors with a given number of bit errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorCount {
    pub rate: String,
    pub detector: DetectorKind,
    pub sigma2_e: f64,
    pub rho_t: f64,
    pub rho_r: f64,
    pub gamma_db: f64,
    pub bit_errors: u64,
    pub frames: u64,
}

#[derive(Debug, Clone)]
pub struct BerOutput {
    pub metadata: Metadata,
    pub records: Vec<BerRecord>,
    pub error_histogram: Vec<ErrorCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityRecord {
    pub n_t: usize,
    pub n_r: usize,
    pub gamma_db: f64,
    pub rho_t: f64,
    pub rho_r: f64,
    pub trials: usize,
    pub capacity: f64,
    pub capacity_se: f64,
    /// Loss against the uncorrelated channel on the same draws.
    pub loss: f64,
    pub loss_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRecord {
    pub rate: String,
    pub repetition: usize,
    pub d_c: usize,
    pub m: u32,
    pub detector: DetectorKind,
    pub sigma2_e: f64,
    pub ensemble: usize,
    pub l_max: usize,
    pub step_db: f64,
    pub threshold_db: f64,
    /// SNR at which the ergodic capacity equals the spectral efficiency.
    pub capacity_snr_db: f64,
    pub gap_db: f64,
    pub spectral_efficiency: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub rate: String,
    pub gamma_db: f64,
    pub iterations: usize,
    pub final_entropy: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct ThresholdOutput {
    pub metadata: Metadata,
    pub records: Vec<ThresholdRecord>,
    pub trajectory: Vec<TrajectoryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlopsRecord {
    pub n_r: u64,
    pub modulation: u64,
    pub proposed_detect: u64,
    pub proposed_soft: u64,
    pub proposed_total: u64,
    pub mmse_detect: u64,
    pub mmse_soft: u64,
    pub mmse_total: u64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsRecord {
    pub n_t: usize,
    pub n_r: usize,
    pub gamma_db: f64,
    pub stream: usize,
    pub realizations: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub ks_statistic: f64,
    pub p_value: f64,
    pub significance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
    /// Density of the fitted normal law at the bin centre.
    pub gaussian_density: f64,
}

#[derive(Debug, Clone)]
pub struct KsOutput {
    pub metadata: Metadata,
    pub record: KsRecord,
    pub histogram: Vec<HistogramBin>,
    pub samples: Vec<f64>,
}

/// One curve of a BER figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curve {
    pub rate: Ratio<usize>,
    pub detector: DetectorKind,
    pub sigma2_e: f64,
    pub rho_t: f64,
    pub rho_r: f64,
}

/// Cartesian product rate × detector × σ_e² × ρ, in that nesting order.
pub fn curves(cfg: &ExperimentConfig, rates: &[Ratio<usize>]) -> Vec<Curve> {
    let mut out = Vec::new();
    for &rate in rates {
        for &detector in &cfg.detector.kind {
            for &sigma2_e in &cfg.channel.error_variances() {
                for &(rho_t, rho_r) in &cfg.channel.correlations() {
                    out.push(Curve { rate, detector, sigma2_e, rho_t, rho_r });
                }
            }
        }
    }
    out
}

fn rate_string(r: Ratio<usize>) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn flops_for(kind: DetectorKind, n_r: usize, order: usize) -> Option<u64> {
    match kind {
        DetectorKind::Mmse => Some(complexity::flops_mmse(n_r as u64, order as u64).total()),
        DetectorKind::MfSimplified => Some(complexity::flops_proposed(n_r as u64, order as u64).total()),
        DetectorKind::MfExact => None,
    }
}

fn base_metadata(cfg: &ExperimentConfig, command: Command) -> Metadata {
    let mut m = Metadata::new();
    m.push("subcommand", command.name());
    m.push("config_sha256", cfg.digest());
    m.push("seed", cfg.seed);
    m.push("system", format!("{}x{} M={} fading={}", cfg.system.n_t, cfg.system.n_r, cfg.system.modulation, cfg.system.fading));
    m.push("workers", rayon::current_num_threads());
    m
}

/// Builds (or loads) the base code of a configuration.
pub fn build_code(cfg: &ExperimentConfig) -> Result<CodeSpec, RunError> {
    let code = cfg.code.as_ref().ok_or_else(|| ConfigError::Invalid(vec!["[code] section is required".into()]))?;
    let field = Arc::new(FieldTable::new(code.m, code.polynomial)?);
    match &code.matrix_file {
        Some(path) => {
            let f = std::fs::File::open(path).map_err(|source| RunError::MatrixFile { path: path.clone(), source })?;
            let matrix = SparseParityMatrix::read_text(std::io::BufReader::new(f))?;
            Ok(CodeSpec::from_matrix(field, matrix, code.seed)?)
        }
        None => {
            let n = code.base_symbols().map_err(|e| ConfigError::Invalid(vec![e]))?;
            Ok(CodeSpec::regular(field, n, code.d_c, code.seed)?)
        }
    }
}

/// Link parameters shared by every frame of one curve at one SNR.
struct Link {
    n_t: usize,
    n_r: usize,
    constellation: Constellation,
    mapper: SymbolMapper,
    corr: Option<CorrelationSpec>,
    fading: FadingMode,
    detector: DetectorKind,
    sigma2_e: f64,
    sigma2_n: f64,
}

impl Link {
    fn new(cfg: &ExperimentConfig, m: u32, curve: &Curve, gamma_db: f64) -> Result<Self, RunError> {
        let s = &cfg.system;
        let constellation = channel::gray_constellation(s.modulation, 1.0 / s.n_t as f64)?;
        let mapper = SymbolMapper::new(m, constellation.bits(), s.n_t)?;
        let corr = if curve.rho_t == 0.0 && curve.rho_r == 0.0 {
            None
        } else {
            Some(CorrelationSpec::exponential(s.n_t, s.n_r, curve.rho_t, curve.rho_r)?)
        };
        Ok(Link {
            n_t: s.n_t,
            n_r: s.n_r,
            constellation,
            mapper,
            corr,
            fading: s.fading,
            detector: curve.detector,
            sigma2_e: curve.sigma2_e,
            sigma2_n: channel::snr_to_noise(gamma_db, 1.0),
        })
    }

    fn draw_channel<R: Rng>(&self, rng: &mut R) -> Result<CMatrix, RunError> {
        let h = channel::sample_iid(self.n_t, self.n_r, rng);
        Ok(match &self.corr {
            Some(c) => channel::apply_correlation(&h, c)?,
            None => h,
        })
    }

    /// Sends each vector through the channel and returns the stream likelihoods.
    fn receive<R: Rng>(&self, tx: &[Vec<Complex64>], ch_rng: &mut R, est_rng: &mut R) -> Result<LikelihoodBlock, RunError> {
        let mut block = LikelihoodBlock::empty(self.constellation.order());
        let mut current: Option<(CMatrix, LinearReceiver)> = None;
        for s in tx {
            if current.is_none() || self.fading == FadingMode::PerUse {
                let h = self.draw_channel(ch_rng)?;
                let h_est = channel::perturb_estimate(&h, self.sigma2_e, est_rng)?;
                let rx = LinearReceiver::new(self.detector, &h_est, 1.0, self.sigma2_n)?;
                current = Some((h, rx));
            }
            let (h, rx) = current.as_ref().unwrap();
            let y = channel::transmit(h, s, self.sigma2_n, ch_rng);
            let est = rx.estimate(&y)?;
            block.extend(&detect::gaussian_likelihoods(&est, &self.constellation, &mut NoTally));
        }
        Ok(block)
    }
}

struct FrameOutcome {
    bit_errors: u64,
    frame_error: bool,
    iterations: usize,
}

fn gamma_tag(gamma_db: f64) -> u64 {
    gamma_db.to_bits()
}

fn simulate_frame(
    code: &CodeSpec,
    link: &Link,
    opts: DecoderOptions,
    seed: u64,
    gamma_db: f64,
    frame: u64,
) -> Result<FrameOutcome, RunError> {
    let field = code.field();
    let q = field.size();
    let g = gamma_tag(gamma_db);
    let mut data_rng = rng::stream(seed, &[TAG_DATA, g, frame]);
    let mut ch_rng = rng::stream(seed, &[TAG_CHANNEL, g, frame]);
    let mut est_rng = rng::stream(seed, &[TAG_ESTIMATE, g, frame]);

    let info: Vec<GfSymbol> = (0..code.k()).map(|_| GfSymbol(data_rng.random_range(0..q as u32) as u8)).collect();
    let codeword = code.encode(&info)?;
    let sent = code.transmit_symbols(&codeword);
    let tx = link.mapper.map_codeword(&sent, &link.constellation)?;
    let block = link.receive(&tx, &mut ch_rng, &mut est_rng)?;
    let copies = detect::symbol_priors(&block, &link.mapper, sent.len(), q, &mut NoTally)?;
    let priors = PriorBlock::from_raw(code.combine_priors(copies.as_slice())?, q)?;

    let mut decoder = BpDecoder::new(code.matrix(), field);
    let result = decoder.decode(&priors, opts)?;
    let decoded = code.extract_info(&result.hard);
    let bit_errors: u64 = info.iter().zip(&decoded).map(|(a, b)| (a.0 ^ b.0).count_ones() as u64).sum();
    Ok(FrameOutcome { bit_errors, frame_error: result.hard != codeword, iterations: result.iterations_used })
}

/// Running totals for one sweep point.
#[derive(Default)]
struct Tally {
    frames: u64,
    bit_errors: u64,
    bit_errors_sq: f64,
    frame_errors: u64,
    iterations: u64,
    histogram: std::collections::BTreeMap<u64, u64>,
}

impl Tally {
    fn push(&mut self, bit_errors: u64, frame_error: bool, iterations: usize) {
        self.frames += 1;
        self.bit_errors += bit_errors;
        self.bit_errors_sq += (bit_errors as f64).powi(2);
        self.iterations += iterations as u64;
        if frame_error {
            self.frame_errors += 1;
            *self.histogram.entry(bit_errors).or_default() += 1;
        }
    }

    fn record(&self, curve: &Curve, rate: String, gamma_db: f64, bits_per_frame: u64, stop: StopReason, cfg: &ExperimentConfig) -> BerRecord {
        let n = self.frames as f64;
        let b = bits_per_frame as f64;
        let ber = self.bit_errors as f64 / (n * b);
        // Per-frame error fractions as clusters.
        let mean = self.bit_errors as f64 / n;
        let var = if self.frames > 1 { (self.bit_errors_sq - n * mean * mean).max(0.0) / (n - 1.0) } else { 0.0 };
        let fer = self.frame_errors as f64 / n;
        BerRecord {
            rate,
            detector: curve.detector,
            sigma2_e: curve.sigma2_e,
            rho_t: curve.rho_t,
            rho_r: curve.rho_r,
            gamma_db,
            frames: self.frames,
            bits_per_frame,
            bit_errors: self.bit_errors,
            frame_errors: self.frame_errors,
            ber,
            ber_se: (var / n).sqrt() / b,
            fer,
            fer_se: stats::proportion_se(fer, n),
            mean_iterations: self.iterations as f64 / n,
            bits_per_frame_error: (self.frame_errors > 0).then(|| self.bit_errors as f64 / self.frame_errors as f64),
            flops_per_vector: flops_for(curve.detector, cfg.system.n_r, cfg.system.modulation),
            stop,
            spectral_efficiency: 0.0,
        }
    }

    fn histogram_rows(&self, rec: &BerRecord) -> Vec<ErrorCount> {
        self.histogram
            .iter()
            .map(|(&bit_errors, &frames)| ErrorCount {
                rate: rec.rate.clone(),
                detector: rec.detector,
                sigma2_e: rec.sigma2_e,
                rho_t: rec.rho_t,
                rho_r: rec.rho_r,
                gamma_db: rec.gamma_db,
                bit_errors,
                frames,
            })
            .collect()
    }
}

/// Coded BER/FER at every SNR of every curve.
pub fn run_ber(cfg: &ExperimentConfig, progress: Progress) -> Result<BerOutput, RunError> {
    cfg.validate(Command::Ber)?;
    let base = build_code(cfg)?;
    let code_cfg = cfg.code.as_ref().unwrap();
    let rates = code_cfg.rates().map_err(|e| ConfigError::Invalid(vec![e]))?;
    let codes: Vec<CodeSpec> = rates.iter().map(|&r| base.lower_rate(r)).collect::<Result<_, _>>()?;
    let gammas = cfg.sweep.points().map_err(|e| ConfigError::Invalid(vec![e]))?;
    let opts = DecoderOptions { l_max: cfg.decoder.l_max, early_stop: cfg.decoder.early_stop, keep_posteriors: false };

    let mut metadata = base_metadata(cfg, Command::Ber);
    metadata.push("pi", format!("{:#x}", base.field().polynomial()));
    metadata.push("code", format!("N={} K={} d_c={} m={}", base.n(), base.k(), code_cfg.d_c, base.field().m()));
    metadata.push("construction_seed", base.seed());
    metadata.push("stop_rule", format!("{} frame errors or {} frames", cfg.stop.min_frame_errors, cfg.stop.max_frames));
    metadata.push("decoder", format!("l_max={} early_stop={}", opts.l_max, opts.early_stop));

    let mut records = Vec::new();
    let mut error_histogram = Vec::new();
    for curve in curves(cfg, &rates) {
        let code = &codes[rates.iter().position(|&r| r == curve.rate).unwrap()];
        for &gamma in &gammas {
            let link = Link::new(cfg, base.field().m(), &curve, gamma)?;
            let mut tally = Tally::default();
            let mut stop = None;
            let mut next = 0u64;
            while stop.is_none() {
                let batch: Vec<FrameOutcome> = (next..next + FRAME_BATCH as u64)
                    .into_par_iter()
                    .map(|f| simulate_frame(code, &link, opts, cfg.seed, gamma, f))
                    .collect::<Result<_, _>>()?;
                next += FRAME_BATCH as u64;
                // Outcomes are folded in frame order so the stopping point
                // does not depend on the batch size.
                for o in batch {
                    tally.push(o.bit_errors, o.frame_error, o.iterations);
                    if tally.frame_errors >= cfg.stop.min_frame_errors as u64 {
                        stop = Some(StopReason::FrameErrors);
                    } else if tally.frames >= cfg.stop.max_frames as u64 {
                        stop = Some(StopReason::FrameCap);
                    }
                    if stop.is_some() {
                        break;
                    }
                }
            }
            let mut rec = tally.record(&curve, rate_string(curve.rate), gamma, code.info_bits() as u64, stop.unwrap(), cfg);
            rec.spectral_efficiency = cfg.spectral_efficiency(curve.rate);
            progress(&format!(
                "ber R={} {} s2e={} rho={}/{} {:+.2} dB: BER {:.3e} FER {:.3e} ({} frames)",
                rec.rate, rec.detector, rec.sigma2_e, rec.rho_t, rec.rho_r, gamma, rec.ber, rec.fer, rec.frames
            ));
            error_histogram.extend(tally.histogram_rows(&rec));
            records.push(rec);
        }
    }
    Ok(BerOutput { metadata, records, error_histogram })
}

fn simulate_use(link: &Link, seed: u64, gamma_db: f64, index: u64) -> Result<u64, RunError> {
    let g = gamma_tag(gamma_db);
    let mut data_rng = rng::stream(seed, &[TAG_UNCODED, g, index]);
    let mut ch_rng = rng::stream(seed, &[TAG_CHANNEL, g, index]);
    let mut est_rng = rng::stream(seed, &[TAG_ESTIMATE, g, index]);
    let order = link.constellation.order();
    let labels: Vec<usize> = (0..link.n_t).map(|_| data_rng.random_range(0..order)).collect();
    let s: Vec<Complex64> = labels.iter().map(|&l| link.constellation.point(l)).collect();
    let h = link.draw_channel(&mut ch_rng)?;
    let h_est = channel::perturb_estimate(&h, link.sigma2_e, &mut est_rng)?;
    let rx = LinearReceiver::new(link.detector, &h_est, 1.0, link.sigma2_n)?;
    let y = channel::transmit(&h, &s, link.sigma2_n, &mut ch_rng);
    let est = rx.estimate(&y)?;
    let decided = detect::hard_labels(&est, &link.constellation);
    Ok(labels.iter().zip(&decided).map(|(a, b)| (a ^ b).count_ones() as u64).sum())
}

/// Uncoded BER with hard slicing; each channel use counts as one frame.
pub fn run_uncoded(cfg: &ExperimentConfig, progress: Progress) -> Result<BerOutput, RunError> {
    cfg.validate(Command::Uncoded)?;
    let gammas = cfg.sweep.points().map_err(|e| ConfigError::Invalid(vec![e]))?;
    let bits = cfg.system.bits_per_symbol();
    let per_use = (cfg.system.n_t * bits) as u64;
    let one = Ratio::new(1, 1);

    let mut metadata = base_metadata(cfg, Command::Uncoded);
    metadata.push("stop_rule", format!("{} bit errors or {} uses", cfg.stop.min_bit_errors, cfg.stop.max_uses));

    let mut records = Vec::new();
    for curve in curves(cfg, &[one]) {
        for &gamma in &gammas {
            // The bit mapper is irrelevant here; any m divisible by p works.
            let link = Link::new(cfg, bits as u32, &curve, gamma)?;
            let mut tally = Tally::default();
            let mut stop = None;
            let mut next = 0u64;
            while stop.is_none() {
                let batch: Vec<u64> = (next..next + USE_BATCH as u64)
                    .into_par_iter()
                    .map(|u| simulate_use(&link, cfg.seed, gamma, u))
                    .collect::<Result<_, _>>()?;
                next += USE_BATCH as u64;
                for e in batch {
                    tally.push(e, e > 0, 0);
                    if tally.bit_errors >= cfg.stop.min_bit_errors as u64 {
                        stop = Some(StopReason::BitErrors);
                    } else if tally.frames >= cfg.stop.max_uses as u64 {
                        stop = Some(StopReason::UseCap);
                    }
                    if stop.is_some() {
                        break;
                    }
                }
            }
            let mut rec = tally.record(&curve, "1".into(), gamma, per_use, stop.unwrap(), cfg);
            rec.spectral_efficiency = (bits * cfg.system.n_t) as f64;
            progress(&format!(
                "uncoded {} s2e={} rho={}/{} {:+.2} dB: BER {:.4e} ± {:.1e} ({} uses)",
                rec.detector, rec.sigma2_e, rec.rho_t, rec.rho_r, gamma, rec.ber, rec.ber_se, rec.frames
            ));
            records.push(rec);
        }
    }
    Ok(BerOutput { metadata, records, error_histogram: Vec::new() })
}

/// Ergodic capacity per SNR and correlation setting; every setting shares
/// the same i.i.d. draws so losses are paired differences.
pub fn run_capacity(cfg: &ExperimentConfig, progress: Progress) -> Result<(Metadata, Vec<CapacityRecord>), RunError> {
    cfg.validate(Command::Capacity)?;
    let s = &cfg.system;
    let gammas = cfg.sweep.points().map_err(|e| ConfigError::Invalid(vec![e]))?;
    let settings = cfg.channel.correlations();
    let mut corrs = vec![None];
    for &(rt, rr) in &settings {
        corrs.push(if rt == 0.0 && rr == 0.0 { None } else { Some(CorrelationSpec::exponential(s.n_t, s.n_r, rt, rr)?) });
    }
    let mut metadata = base_metadata(cfg, Command::Capacity);
    metadata.push("trials", cfg.capacity.trials);
    let mut records = Vec::new();
    for &gamma in &gammas {
        let sweep = channel::capacity_sweep(s.n_t, s.n_r, gamma, cfg.capacity.trials, cfg.seed, &corrs)?;
        for (j, &(rho_t, rho_r)) in settings.iter().enumerate() {
            let (est, loss) = (sweep.estimates[j + 1], sweep.losses[j + 1]);
            progress(&format!("capacity rho={rho_t}/{rho_r} {gamma:+.2} dB: {:.3} ± {:.3} bps/Hz", est.mean, est.std_err));
            records.push(CapacityRecord {
                n_t: s.n_t,
                n_r: s.n_r,
                gamma_db: gamma,
                rho_t,
                rho_r,
                trials: cfg.capacity.trials,
                capacity: est.mean,
                capacity_se: est.std_err,
                loss: loss.mean,
                loss_se: loss.std_err,
            });
        }
    }
    Ok((metadata, records))
}

/// Density-evolution threshold for each configured rate, with its gap to
/// the capacity SNR at the same spectral efficiency.
pub fn run_threshold(cfg: &ExperimentConfig, progress: Progress) -> Result<ThresholdOutput, RunError> {
    cfg.validate(Command::Threshold)?;
    let code = cfg.code.as_ref().unwrap();
    let rates = code.rates().map_err(|e| ConfigError::Invalid(vec![e]))?;
    let sigma2_e = cfg.channel.error_variances()[0];
    let d = &cfg.de;
    let mut metadata = base_metadata(cfg, Command::Threshold);
    let field = FieldTable::new(code.m, code.polynomial)?;
    metadata.push("pi", format!("{:#x}", field.polynomial()));
    metadata.push("de", format!("L={} l_max={} step={} dB H_stop={}", d.ensemble, d.l_max, d.step_db, d.h_stop));
    metadata.push("capacity_trials", cfg.capacity.trials);

    let mut records = Vec::new();
    let mut trajectory = Vec::new();
    for (i, &rate) in rates.iter().enumerate() {
        let t = (code.base_rate() / rate).to_integer();
        let de_cfg = DeConfig {
            ensemble: d.ensemble,
            l_max: d.l_max,
            gamma0_db: if d.gamma0_db.len() == 1 { d.gamma0_db[0] } else { d.gamma0_db[i] },
            step_db: d.step_db,
            h_stop: d.h_stop,
            d_c: code.d_c,
            m: code.m,
            n_t: cfg.system.n_t,
            n_r: cfg.system.n_r,
            modulation: cfg.system.modulation,
            detector: d.detector,
            sigma2_e,
            repetition: t,
            max_points: d.max_points,
            seed: cfg.seed,
        };
        let result = de::find_threshold(&de_cfg)?;
        let se = cfg.spectral_efficiency(rate);
        let cap_db = channel::snr_for_capacity(cfg.system.n_t, cfg.system.n_r, se, cfg.capacity.trials, cfg.seed)?;
        let rs = rate_string(rate);
        for p in &result.trajectory {
            trajectory.push(TrajectoryRecord {
                rate: rs.clone(),
                gamma_db: p.gamma_db,
                iterations: p.iterations,
                final_entropy: p.final_entropy,
                converged: p.converged,
            });
        }
        progress(&format!(
            "threshold R={rs}: {:.2} dB, capacity {:.2} dB, gap {:.2} dB",
            result.threshold_db,
            cap_db,
            result.threshold_db - cap_db
        ));
        records.push(ThresholdRecord {
            rate: rs,
            repetition: t,
            d_c: code.d_c,
            m: code.m,
            detector: d.detector,
            sigma2_e,
            ensemble: d.ensemble,
            l_max: d.l_max,
            step_db: d.step_db,
            threshold_db: result.threshold_db,
            capacity_snr_db: cap_db,
            gap_db: result.threshold_db - cap_db,
            spectral_efficiency: se,
            points: result.trajectory.len(),
        });
    }
    Ok(ThresholdOutput { metadata, records, trajectory })
}

/// Closed-form flop counts over the configured grid.
pub fn run_flops(cfg: &ExperimentConfig) -> Result<(Metadata, Vec<FlopsRecord>), RunError> {
    cfg.validate(Command::Flops)?;
    let mut records = Vec::new();
    for &m in &cfg.flops.modulation {
        for &n in &cfg.flops.n_r {
            let p = complexity::flops_proposed(n, m);
            let q = complexity::flops_mmse(n, m);
            records.push(FlopsRecord {
                n_r: n,
                modulation: m,
                proposed_detect: p.detect,
                proposed_soft: p.soft,
                proposed_total: p.total(),
                mmse_detect: q.detect,
                mmse_soft: q.soft,
                mmse_total: q.total(),
                ratio: p.total() as f64 / q.total() as f64,
            });
        }
    }
    let mut metadata = Metadata::new();
    metadata.push("subcommand", Command::Flops.name());
    metadata.push("config_sha256", cfg.digest());
    Ok((metadata, records))
}

/// Samples of the exact matched-filter Δ_k for one stream across i.i.d.
/// (or correlated) channel draws.
pub fn delta_samples(cfg: &ExperimentConfig) -> Result<Vec<f64>, RunError> {
    let s = &cfg.system;
    let k = &cfg.ksdelta;
    let sigma2_n = channel::snr_to_noise(k.gamma_db, 1.0);
    let (rho_t, rho_r) = cfg.channel.correlations()[0];
    let corr = if rho_t == 0.0 && rho_r == 0.0 { None } else { Some(CorrelationSpec::exponential(s.n_t, s.n_r, rho_t, rho_r)?) };
    let chunks = k.realizations.div_ceil(KS_CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(cfg.seed, &[TAG_KS, c as u64]);
            let n = KS_CHUNK.min(k.realizations - c * KS_CHUNK);
            (0..n)
                .map(|_| {
                    let mut h = channel::sample_iid(s.n_t, s.n_r, &mut r);
                    if let Some(c) = &corr {
                        h = channel::apply_correlation(&h, c)?;
                    }
                    Ok(detect::mf_sinr(&h, k.stream, 1.0, sigma2_n, MfMode::Exact)?.1)
                })
                .collect::<Result<Vec<f64>, RunError>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(parts.concat())
}

/// KS normality test of Δ_k plus a histogram for plotting.
pub fn run_ksdelta(cfg: &ExperimentConfig, progress: Progress) -> Result<KsOutput, RunError> {
    cfg.validate(Command::KsDelta)?;
    let k = &cfg.ksdelta;
    let samples = delta_samples(cfg)?;
    let ks = stats::ks_gaussian_test(&samples, k.significance)?;
    let sd = ks.variance.sqrt();
    let n = samples.len() as f64;
    let skewness = samples.iter().map(|x| ((x - ks.mean) / sd).powi(3)).sum::<f64>() / n;
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let bins = k.bins.max(1);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in &samples {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let (a, b) = (lo + i as f64 * width, lo + (i + 1) as f64 * width);
            let z = (0.5 * (a + b) - ks.mean) / sd;
            HistogramBin {
                lo: a,
                hi: b,
                density: c as f64 / (n * width),
                gaussian_density: (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt()),
            }
        })
        .collect();
    progress(&format!(
        "ksdelta {:+.2} dB stream {}: D = {:.4}, p = {:.3e}, skewness {:.3} -> {}",
        k.gamma_db,
        k.stream,
        ks.statistic,
        ks.p_value,
        skewness,
        if ks.passed { "gaussian" } else { "rejected" }
    ));
    let mut metadata = base_metadata(cfg, Command::KsDelta);
    metadata.push("p_value_method", "asymptotic Kolmogorov with Stephens correction, parameters estimated");
    let s = &cfg.system;
    let record = KsRecord {
        n_t: s.n_t,
        n_r: s.n_r,
        gamma_db: k.gamma_db,
        stream: k.stream,
        realizations: samples.len(),
        mean: ks.mean,
        variance: ks.variance,
        skewness,
        ks_statistic: ks.statistic,
        p_value: ks.p_value,
        significance: k.significance,
        passed: ks.passed,
    };
    Ok(KsOutput { metadata, record, histogram, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::presets::preset;

    #[test]
    fn tally_accounting() {
        let cfg = preset("ci-small").unwrap().config;
        let curve = Curve { rate: Ratio::new(1, 3), detector: DetectorKind::Mmse, sigma2_e: 0.0, rho_t: 0.0, rho_r: 0.0 };
        let mut t = Tally::default();
        // 100 frame errors carrying 1752 bit errors, plus 900 clean frames.
        for i in 0..100 {
            t.push(if i < 52 { 18 } else { 17 }, true, 200);
        }
        for _ in 0..900 {
            t.push(0, false, 3);
        }
        let rec = t.record(&curve, "1/3".into(), -1.0, 800, StopReason::FrameErrors, &cfg);
        assert_eq!(rec.bit_errors, 1752);
        assert_eq!(rec.bits_per_frame_error, Some(17.52));
        assert_eq!(rec.fer, 0.1);
        assert!((rec.ber - 1752.0 / 800_000.0).abs() < 1e-15);
        assert!((rec.mean_iterations - 22.7).abs() < 1e-12);
        let rows = t.histogram_rows(&rec);
        assert_eq!(rows.iter().map(|r| r.frames).sum::<u64>(), 100);
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn crossing_products() {
        let mut cfg = preset("fig12").unwrap().config;
        cfg.channel.rho = vec![0.0, 0.3];
        let c = curves(&cfg, &[Ratio::new(1, 3)]);
        assert_eq!(c.len(), 2 * 3 * 2);
        assert!(c.iter().all(|c| c.rho_t == c.rho_r));
    }
}
