//! Experiment configuration: TOML sections mirroring the simulator modules.

use std::path::PathBuf;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::FadingMode;
use crate::detect::DetectorKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
}

/// Subcommand an experiment is validated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ber,
    Uncoded,
    Capacity,
    Threshold,
    Flops,
    KsDelta,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ber => "ber",
            Command::Uncoded => "uncoded",
            Command::Capacity => "capacity",
            Command::Threshold => "threshold",
            Command::Flops => "flops",
            Command::KsDelta => "ksdelta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub code: Option<CodeConfig>,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub stop: StopConfig,
    #[serde(default)]
    pub decoder: DecoderConfig,
    #[serde(default)]
    pub de: DeSection,
    #[serde(default)]
    pub capacity: CapacitySection,
    #[serde(default)]
    pub ksdelta: KsDeltaSection,
    #[serde(default)]
    pub flops: FlopsSection,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n_t: usize,
    pub n_r: usize,
    /// Constellation size M: 2, 4 or 16.
    pub modulation: usize,
    #[serde(default)]
    pub fading: FadingMode,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig { n_t: 200, n_r: 200, modulation: 2, fading: FadingMode::PerUse }
    }
}

impl SystemConfig {
    pub fn bits_per_symbol(&self) -> usize {
        self.modulation.trailing_zeros() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeConfig {
    #[serde(default = "default_m")]
    pub m: u32,
    /// Primitive polynomial; the field default when absent.
    #[serde(default)]
    pub polynomial: Option<u32>,
    /// Base code length in symbols.
    #[serde(default)]
    pub n_symbols: Option<usize>,
    /// Base code length in bits.
    #[serde(default)]
    pub coded_bits: Option<usize>,
    #[serde(default)]
    pub info_bits: Option<usize>,
    pub d_c: usize,
    /// Target rates such as "1/6"; each must be the base rate over an integer.
    #[serde(default)]
    pub rate: Vec<String>,
    #[serde(default = "default_code_seed")]
    pub seed: u64,
    /// Parity-check matrix in the plain-text format, instead of a random draw.
    #[serde(default)]
    pub matrix_file: Option<PathBuf>,
}

fn default_m() -> u32 {
    8
}

fn default_code_seed() -> u64 {
    1
}

impl CodeConfig {
    /// Base code length in symbols, if the size fields are consistent.
    pub fn base_symbols(&self) -> Result<usize, String> {
        let m = self.m as usize;
        let given = [self.n_symbols.is_some(), self.coded_bits.is_some(), self.info_bits.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        if given != 1 {
            return Err("code: give exactly one of n_symbols, coded_bits, info_bits".into());
        }
        if self.d_c < 3 {
            return Err(format!("code.d_c = {} must be at least 3", self.d_c));
        }
        if let Some(n) = self.n_symbols {
            return Ok(n);
        }
        if let Some(bits) = self.coded_bits {
            if bits % m != 0 {
                return Err(format!("code.coded_bits = {bits} is not a multiple of m = {m}"));
            }
            return Ok(bits / m);
        }
        let bits = self.info_bits.unwrap();
        if bits % m != 0 {
            return Err(format!("code.info_bits = {bits} is not a multiple of m = {m}"));
        }
        // K = N (d_c − 2) / d_c
        let k = bits / m;
        let dc = self.d_c;
        if (k * dc) % (dc - 2) != 0 {
            return Err(format!("code.info_bits = {bits} does not give an integer length for d_c = {dc}"));
        }
        Ok(k * dc / (dc - 2))
    }

    pub fn base_rate(&self) -> Ratio<usize> {
        Ratio::new(self.d_c - 2, self.d_c)
    }

    /// Parsed target rates; the base rate when none are listed.
    pub fn rates(&self) -> Result<Vec<Ratio<usize>>, String> {
        if self.rate.is_empty() {
            return Ok(vec![self.base_rate()]);
        }
        self.rate.iter().map(|r| parse_rate(r)).collect()
    }
}

pub fn parse_rate(s: &str) -> Result<Ratio<usize>, String> {
    let bad = || format!("rate `{s}` is not of the form a/b");
    let (a, b) = match s.split_once('/') {
        Some((a, b)) => (a.trim().parse::<usize>().map_err(|_| bad())?, b.trim().parse::<usize>().map_err(|_| bad())?),
        None => return Err(bad()),
    };
    if a == 0 || b == 0 || a > b {
        return Err(format!("rate `{s}` must lie in (0, 1]"));
    }
    Ok(Ratio::new(a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub kind: Vec<DetectorKind>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig { kind: vec![DetectorKind::Mmse] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    /// Common ρ = ρ_t = ρ_r; one curve per entry. Overrides `rho_t`/`rho_r`.
    #[serde(default)]
    pub rho: Vec<f64>,
    #[serde(default)]
    pub rho_t: f64,
    #[serde(default)]
    pub rho_r: f64,
    /// Estimation error variances; one curve per entry.
    #[serde(default)]
    pub sigma2_e: Vec<f64>,
}

impl ChannelConfig {
    pub fn correlations(&self) -> Vec<(f64, f64)> {
        if self.rho.is_empty() {
            vec![(self.rho_t, self.rho_r)]
        } else {
            self.rho.iter().map(|&r| (r, r)).collect()
        }
    }

    pub fn error_variances(&self) -> Vec<f64> {
        if self.sigma2_e.is_empty() {
            vec![0.0]
        } else {
            self.sigma2_e.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub gamma_db: Vec<f64>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub stop: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
}

impl SweepConfig {
    pub fn points(&self) -> Result<Vec<f64>, String> {
        match (self.gamma_db.is_empty(), self.start, self.stop, self.step) {
            (false, None, None, None) => Ok(self.gamma_db.clone()),
            (true, Some(a), Some(b), Some(s)) => {
                if !(s > 0.0) || b < a {
                    return Err(format!("sweep: need start <= stop and step > 0 (got {a}, {b}, {s})"));
                }
                let n = ((b - a) / s + 1e-9).floor() as usize + 1;
                Ok((0..n).map(|i| ((a + i as f64 * s) * 1e9).round() / 1e9).collect())
            }
            (true, None, None, None) => Err("sweep: no SNR points given".into()),
            _ => Err("sweep: give either gamma_db or all of start/stop/step".into()),
        }
    }

    pub fn list(points: &[f64]) -> Self {
        SweepConfig { gamma_db: points.to_vec(), ..Default::default() }
    }

    pub fn range(start: f64, stop: f64, step: f64) -> Self {
        SweepConfig { gamma_db: Vec::new(), start: Some(start), stop: Some(stop), step: Some(step) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopConfig {
    /// Coded runs stop after this many frame errors ...
    pub min_frame_errors: usize,
    /// ... or this many frames.
    pub max_frames: usize,
    /// Uncoded runs stop after this many bit errors ...
    pub min_bit_errors: usize,
    /// ... or this many channel uses.
    pub max_uses: usize,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig { min_frame_errors: 100, max_frames: 100_000, min_bit_errors: 1000, max_uses: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    pub l_max: usize,
    #[serde(default = "yes")]
    pub early_stop: bool,
}

fn yes() -> bool {
    true
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig { l_max: 200, early_stop: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeSection {
    pub ensemble: usize,
    pub l_max: usize,
    /// Starting SNR per rate, in the order of `code.rate`; one value applies to all.
    pub gamma0_db: Vec<f64>,
    pub step_db: f64,
    pub h_stop: f64,
    pub max_points: usize,
    #[serde(default = "default_de_detector")]
    pub detector: DetectorKind,
}

fn default_de_detector() -> DetectorKind {
    DetectorKind::MfSimplified
}

impl Default for DeSection {
    fn default() -> Self {
        DeSection {
            ensemble: 100_000,
            l_max: 2000,
            gamma0_db: vec![-4.0],
            step_db: 0.05,
            h_stop: 1e-6,
            max_points: 200,
            detector: DetectorKind::MfSimplified,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySection {
    pub trials: usize,
}

impl Default for CapacitySection {
    fn default() -> Self {
        CapacitySection { trials: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KsDeltaSection {
    pub realizations: usize,
    pub gamma_db: f64,
    /// Stream whose Δ_k is sampled.
    pub stream: usize,
    pub significance: f64,
    /// Histogram bins for the density estimate written alongside.
    pub bins: usize,
}

impl Default for KsDeltaSection {
    fn default() -> Self {
        KsDeltaSection { realizations: 100_000, gamma_db: -2.0, stream: 0, significance: 1e-3, bins: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlopsSection {
    pub n_r: Vec<u64>,
    pub modulation: Vec<u64>,
}

impl Default for FlopsSection {
    fn default() -> Self {
        FlopsSection { n_r: (1..=10).map(|i| i * 100).collect(), modulation: vec![2] }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_toml().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks everything the given command needs, reporting all problems at once.
    pub fn validate(&self, command: Command) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let s = &self.system;
        if s.n_t == 0 || s.n_r == 0 {
            errs.push("system: antenna counts must be positive".to_string());
        }
        if ![2, 4, 16].contains(&s.modulation) {
            errs.push(format!("system.modulation = {} must be 2, 4 or 16", s.modulation));
        }
        let needs_sweep = matches!(command, Command::Ber | Command::Uncoded | Command::Capacity);
        if needs_sweep {
            if let Err(e) = self.sweep.points() {
                errs.push(e);
            }
        }
        for &(rt, rr) in &self.channel.correlations() {
            for rho in [rt, rr] {
                if !(0.0..1.0).contains(&rho) {
                    errs.push(format!("channel: correlation {rho} outside [0, 1)"));
                }
            }
        }
        for &v in &self.channel.error_variances() {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("channel.sigma2_e = {v} must be non-negative"));
            }
        }
        if matches!(command, Command::Ber | Command::Uncoded) && self.detector.kind.is_empty() {
            errs.push("detector.kind is empty".into());
        }
        if matches!(command, Command::Ber | Command::Threshold) {
            match &self.code {
                None => errs.push(format!("[code] section is required for `{}`", command.name())),
                Some(code) => self.validate_code(code, command, &mut errs),
            }
        }
        match command {
            Command::Ber => {
                if self.stop.max_frames == 0 {
                    errs.push("stop.max_frames must be positive".into());
                }
                if self.decoder.l_max == 0 {
                    errs.push("decoder.l_max must be positive".into());
                }
            }
            Command::Uncoded => {
                if self.stop.max_uses == 0 {
                    errs.push("stop.max_uses must be positive".into());
                }
            }
            Command::Capacity => {
                if self.capacity.trials == 0 {
                    errs.push("capacity.trials must be positive".into());
                }
            }
            Command::Threshold => {
                let d = &self.de;
                if s.modulation != 2 {
                    errs.push("threshold: density evolution supports BPSK (modulation = 2) only".into());
                }
                if d.ensemble < crate::de::MIN_ENSEMBLE {
                    errs.push(format!("de.ensemble = {} must be at least {}", d.ensemble, crate::de::MIN_ENSEMBLE));
                }
                if !(d.step_db > 0.0) {
                    errs.push("de.step_db must be positive".into());
                }
                if !(d.h_stop > 0.0 && d.h_stop < 1.0) {
                    errs.push("de.h_stop must lie in (0, 1)".into());
                }
                if d.gamma0_db.is_empty() {
                    errs.push("de.gamma0_db is empty".into());
                }
                if let Some(Ok(rates)) = self.code.as_ref().map(|c| c.rates()) {
                    if d.gamma0_db.len() != 1 && d.gamma0_db.len() != rates.len() {
                        errs.push(format!("de.gamma0_db has {} entries for {} rates", d.gamma0_db.len(), rates.len()));
                    }
                }
            }
            Command::Flops => {
                if self.flops.n_r.is_empty() || self.flops.n_r.contains(&0) {
                    errs.push("flops.n_r must list positive antenna counts".into());
                }
                if self.flops.modulation.is_empty() {
                    errs.push("flops.modulation is empty".into());
                }
            }
            Command::KsDelta => {
                let k = &self.ksdelta;
                if k.realizations < crate::stats::KS_MIN_SAMPLES {
                    errs.push(format!("ksdelta.realizations = {} below {}", k.realizations, crate::stats::KS_MIN_SAMPLES));
                }
                if k.stream >= s.n_t {
                    errs.push(format!("ksdelta.stream = {} out of range for {} streams", k.stream, s.n_t));
                }
                if !(k.significance > 0.0 && k.significance < 1.0) {
                    errs.push("ksdelta.significance must lie in (0, 1)".into());
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    fn validate_code(&self, code: &CodeConfig, command: Command, errs: &mut Vec<String>) {
        if !(2..=8).contains(&code.m) {
            errs.push(format!("code.m = {} must lie in 2..=8", code.m));
        }
        let p = if [2, 4, 16].contains(&self.system.modulation) { self.system.bits_per_symbol() } else { 0 };
        if p > 0 && code.m as usize % p != 0 {
            errs.push(format!("code.m = {} is not a multiple of {p} bits per modulated symbol", code.m));
        } else if p > 0 && self.system.n_t % (code.m as usize / p) != 0 {
            errs.push(format!(
                "system.n_t = {} is not a multiple of q = {} modulated symbols per coded symbol",
                self.system.n_t,
                code.m as usize / p
            ));
        }
        if code.matrix_file.is_none() {
            match code.base_symbols() {
                Ok(n) => {
                    if (2 * n) % code.d_c.max(1) != 0 {
                        errs.push(format!("code: 2N = {} is not divisible by d_c = {}", 2 * n, code.d_c));
                    }
                }
                Err(e) => errs.push(e),
            }
        }
        match code.rates() {
            Ok(rates) => {
                let base = code.base_rate();
                for r in rates {
                    let t = base / r;
                    if !t.is_integer() {
                        errs.push(format!("code.rate {r} is not the base rate {base} divided by an integer"));
                    }
                }
            }
            Err(e) => errs.push(e),
        }
        if command == Command::Threshold && code.matrix_file.is_some() {
            errs.push("threshold: density evolution uses the (2, d_c) ensemble, not a matrix file".into());
        }
    }

    /// Spectral efficiency `p·R·N_t` in bits/s/Hz.
    pub fn spectral_efficiency(&self, rate: Ratio<usize>) -> f64 {
        self.system.bits_per_symbol() as f64 * self.system.n_t as f64 * (*rate.numer() as f64 / *rate.denom() as f64)
    }
}
