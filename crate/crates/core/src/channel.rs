//! Gray-labelled constellations, symbol-to-antenna mapping, Rayleigh MIMO
//! channel sampling with Kronecker correlation and estimation error, and
//! ergodic capacity estimation.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::galois::GfSymbol;
use crate::linalg::{self, CMatrix, Cholesky};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("unsupported constellation size {0}; expected 2, 4 or 16")]
    UnsupportedOrder(usize),
    #[error("{m} bits per coded symbol cannot be split into {p}-bit modulated symbols")]
    BitSplit { m: u32, p: usize },
    #[error("{n_t} transmit antennas are not a multiple of q={q} streams per coded symbol")]
    AntennaSplit { n_t: usize, q: usize },
    #[error("correlation parameter {0} outside [0, 1)")]
    Correlation(f64),
    #[error("negative estimation error variance {0}")]
    ErrorVariance(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("capacity needs at least one trial")]
    NoTrials,
}

/// Square Gray-labelled constellation.
///
/// `points[label]` is the point for a `p`-bit label whose first bit is the
/// most significant. Points are scaled to mean energy `E_s / N_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    bits: usize,
    points: Vec<Complex64>,
}

/// Gray mapping of one axis: label → level index on `{−(L−1), …, L−1}`.
fn gray_axis(bits: usize) -> Vec<f64> {
    match bits {
        // 0 → +1, 1 → −1
        1 => vec![1.0, -1.0],
        // 00 → −3, 01 → −1, 11 → +1, 10 → +3
        2 => vec![-3.0, -1.0, 3.0, 1.0],
        _ => unreachable!(),
    }
}

pub fn gray_constellation(order: usize, energy: f64) -> Result<Constellation, ChannelError> {
    let a = energy.sqrt();
    let points = match order {
        2 => gray_axis(1).into_iter().map(|x| Complex64::new(a * x, 0.0)).collect(),
        4 => {
            let axis = gray_axis(1);
            let s = a / 2f64.sqrt();
            (0..4).map(|l| Complex64::new(s * axis[l >> 1], s * axis[l & 1])).collect()
        }
        16 => {
            let axis = gray_axis(2);
            let s = a / 10f64.sqrt();
            (0..16).map(|l| Complex64::new(s * axis[l >> 2], s * axis[l & 3])).collect()
        }
        other => return Err(ChannelError::UnsupportedOrder(other)),
    };
    Ok(Constellation { bits: order.trailing_zeros() as usize, points })
}

impl Constellation {
    pub fn order(&self) -> usize {
        self.points.len()
    }

    /// Bits per modulated symbol `p`.
    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    #[inline]
    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.order() as f64
    }

    /// Label of the nearest point.
    pub fn slice(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (l, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = l;
            }
        }
        best
    }

    /// Bits of a label, most significant first.
    pub fn label_bits(&self, label: usize) -> impl Iterator<Item = u8> + '_ {
        (0..self.bits).rev().map(move |i| ((label >> i) & 1) as u8)
    }
}

/// Demultiplexing of GF(2^m) symbols onto transmit antennas.
///
/// Each coded symbol is split into `q = m/p` labels filling `q` consecutive
/// antennas; one channel use carries `K_t = N_t/q` coded symbols. The last
/// use is padded with label 0 on unused antennas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymbolMapper {
    m: u32,
    p: usize,
    q: usize,
    n_t: usize,
}

impl SymbolMapper {
    pub fn new(m: u32, p: usize, n_t: usize) -> Result<Self, ChannelError> {
        if p == 0 || m as usize % p != 0 {
            return Err(ChannelError::BitSplit { m, p });
        }
        let q = m as usize / p;
        if n_t == 0 || n_t % q != 0 {
            return Err(ChannelError::AntennaSplit { n_t, q });
        }
        Ok(SymbolMapper { m, p, q, n_t })
    }

    /// Modulated symbols per coded symbol.
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn bits_per_label(&self) -> usize {
        self.p
    }

    /// Coded symbols per channel use.
    pub fn k_t(&self) -> usize {
        self.n_t / self.q
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn uses(&self, n_symbols: usize) -> usize {
        n_symbols.div_ceil(self.k_t())
    }

    /// The `q` labels of a coded symbol, in antenna order.
    ///
    /// The symbol's bit vector (lowest polynomial coefficient first) is cut
    /// into `p`-bit groups; the first bit of each group is its label's MSB.
    pub fn labels(&self, x: GfSymbol) -> impl Iterator<Item = usize> + '_ {
        let v = x.value();
        (0..self.q).map(move |j| {
            (0..self.p).fold(0usize, |acc, b| (acc << 1) | ((v >> (j * self.p + b)) & 1))
        })
    }

    /// Inverse of [`labels`](Self::labels).
    pub fn symbol(&self, labels: &[usize]) -> GfSymbol {
        let mut v = 0usize;
        for (j, &l) in labels.iter().enumerate() {
            for b in 0..self.p {
                let bit = (l >> (self.p - 1 - b)) & 1;
                v |= bit << (j * self.p + b);
            }
        }
        GfSymbol(v as u8)
    }

    /// Label matrix of a symbol sequence: `uses × N_t`, row-major.
    pub fn map_labels(&self, symbols: &[GfSymbol]) -> Vec<usize> {
        let uses = self.uses(symbols.len());
        let mut out = vec![0usize; uses * self.n_t];
        for (i, &x) in symbols.iter().enumerate() {
            let base = (i / self.k_t()) * self.n_t + (i % self.k_t()) * self.q;
            for (j, l) in self.labels(x).enumerate() {
                out[base + j] = l;
            }
        }
        out
    }

    /// Transmit vectors for a symbol sequence, one `N_t` vector per use.
    pub fn map_codeword(&self, symbols: &[GfSymbol], c: &Constellation) -> Result<Vec<Vec<Complex64>>, ChannelError> {
        if c.bits() != self.p {
            return Err(ChannelError::BitSplit { m: self.m, p: c.bits() });
        }
        let labels = self.map_labels(symbols);
        Ok(labels.chunks_exact(self.n_t).map(|use_| use_.iter().map(|&l| c.point(l)).collect()).collect())
    }

    /// Symbols recovered from per-antenna labels (padding dropped).
    pub fn demap_labels(&self, labels: &[usize], n_symbols: usize) -> Vec<GfSymbol> {
        (0..n_symbols)
            .map(|i| {
                let base = (i / self.k_t()) * self.n_t + (i % self.k_t()) * self.q;
                self.symbol(&labels[base..base + self.q])
            })
            .collect()
    }
}

/// How often the channel matrix is redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FadingMode {
    /// New matrix for every transmit vector.
    #[default]
    PerUse,
    /// One matrix for all uses of a codeword.
    PerCodeword,
}

impl std::fmt::Display for FadingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FadingMode::PerUse => "per-use",
            FadingMode::PerCodeword => "per-codeword",
        })
    }
}

/// One channel matrix together with its noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: CMatrix,
    /// Noise variance per real component.
    pub sigma2_n: f64,
}

impl ChannelRealization {
    pub fn n_t(&self) -> usize {
        self.h.ncols()
    }

    pub fn n_r(&self) -> usize {
        self.h.nrows()
    }
}

/// Circularly symmetric complex Gaussian with total variance `var`.
#[inline]
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// `N_r × N_t` matrix of i.i.d. CN(0, 1) entries.
pub fn sample_iid<R: Rng + ?Sized>(n_t: usize, n_r: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(n_r, n_t, |_, _| complex_gaussian(rng, 1.0))
}

/// Exponential model `R[i][j] = ρ^|i−j|`.
pub fn exponential_correlation(n: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

/// Principal square root of a symmetric PSD matrix via eigendecomposition.
/// Slightly negative eigenvalues from rounding are clamped to zero.
pub fn psd_sqrt(r: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(r.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Transmit and receive correlation of the Kronecker model.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSpec {
    pub rho_t: f64,
    pub rho_r: f64,
    pub r_t: DMatrix<f64>,
    pub r_r: DMatrix<f64>,
    pub sqrt_t: DMatrix<f64>,
    pub sqrt_r: DMatrix<f64>,
}

impl CorrelationSpec {
    pub fn exponential(n_t: usize, n_r: usize, rho_t: f64, rho_r: f64) -> Result<Self, ChannelError> {
        for rho in [rho_t, rho_r] {
            if !(0.0..1.0).contains(&rho) {
                return Err(ChannelError::Correlation(rho));
            }
        }
        let r_t = exponential_correlation(n_t, rho_t);
        let r_r = exponential_correlation(n_r, rho_r);
        let sqrt_t = psd_sqrt(&r_t);
        let sqrt_r = psd_sqrt(&r_r);
        Ok(CorrelationSpec { rho_t, rho_r, r_t, r_r, sqrt_t, sqrt_r })
    }

    pub fn is_identity(&self) -> bool {
        self.rho_t == 0.0 && self.rho_r == 0.0
    }
}

/// `H = R_r^{1/2} · H_iid · R_t^{1/2}`.
pub fn apply_correlation(h_iid: &CMatrix, corr: &CorrelationSpec) -> Result<CMatrix, ChannelError> {
    if corr.sqrt_r.nrows() != h_iid.nrows() || corr.sqrt_t.nrows() != h_iid.ncols() {
        return Err(ChannelError::Dimension(format!(
            "H is {}x{}, correlation is for {}x{}",
            h_iid.nrows(),
            h_iid.ncols(),
            corr.sqrt_r.nrows(),
            corr.sqrt_t.nrows()
        )));
    }
    if corr.is_identity() {
        return Ok(h_iid.clone());
    }
    let mut h = h_iid.clone();
    if corr.rho_r != 0.0 {
        h = linalg::real_mul_complex(&corr.sqrt_r, &h);
    }
    if corr.rho_t != 0.0 {
        h = linalg::complex_mul_real(&h, &corr.sqrt_t);
    }
    Ok(h)
}

/// `H̃ = H + ΔH` with ΔH entries CN(0, σ_e²).
pub fn perturb_estimate<R: Rng + ?Sized>(h: &CMatrix, sigma2_e: f64, rng: &mut R) -> Result<CMatrix, ChannelError> {
    if sigma2_e < 0.0 || !sigma2_e.is_finite() {
        return Err(ChannelError::ErrorVariance(sigma2_e));
    }
    if sigma2_e == 0.0 {
        return Ok(h.clone());
    }
    Ok(h.map(|x| x + complex_gaussian(rng, sigma2_e)))
}

/// `y = H s + n`, `n` with variance `σ_n²` per real component.
pub fn transmit<R: Rng + ?Sized>(h: &CMatrix, s: &[Complex64], sigma2_n: f64, rng: &mut R) -> Vec<Complex64> {
    let mut y = linalg::mat_vec(h, s);
    if sigma2_n > 0.0 {
        y.iter_mut().for_each(|v| *v += complex_gaussian(rng, 2.0 * sigma2_n));
    }
    y
}

/// Noise variance per real component for `γ = E_s / (2σ_n²)` in dB.
pub fn snr_to_noise(gamma_db: f64, es: f64) -> f64 {
    es / (2.0 * db_to_linear(gamma_db))
}

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// `log₂ det(I + (γ/N_t) H Hᴴ)` for one realization, `γ` linear.
pub fn capacity_of(h: &CMatrix, gamma: f64) -> f64 {
    let n_t = h.ncols() as f64;
    let mut g = if h.nrows() <= h.ncols() { linalg::gram_outer(h) } else { linalg::gram_inner(h) };
    let c = gamma / n_t;
    g.iter_mut().for_each(|x| *x *= c);
    for i in 0..g.nrows() {
        g[(i, i)] += Complex64::new(1.0, 0.0);
    }
    let chol = Cholesky::new(g).expect("identity plus a Gram matrix is positive definite");
    chol.ln_det() / std::f64::consts::LN_2
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn from_samples(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = if x.len() > 1 { x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Estimate { mean, std_err: (var / n).sqrt() }
    }
}

/// Capacities of several correlation settings on shared i.i.d. draws.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacitySweep {
    /// Per setting.
    pub estimates: Vec<Estimate>,
    /// Per-setting loss relative to the first setting, from paired differences.
    pub losses: Vec<Estimate>,
}

/// Ergodic capacity for each entry of `corrs` (`None` means uncorrelated).
///
/// Trial `i` draws its i.i.d. matrix from stream `(seed, i)` and reuses it
/// for every setting, so comparisons are paired.
pub fn capacity_sweep(
    n_t: usize,
    n_r: usize,
    gamma_db: f64,
    trials: usize,
    seed: u64,
    corrs: &[Option<CorrelationSpec>],
) -> Result<CapacitySweep, ChannelError> {
    if trials == 0 {
        return Err(ChannelError::NoTrials);
    }
    let gamma = db_to_linear(gamma_db);
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &[0xca9a, i as u64]);
            let h = sample_iid(n_t, n_r, &mut r);
            corrs
                .iter()
                .map(|c| match c {
                    None => Ok(capacity_of(&h, gamma)),
                    Some(c) => apply_correlation(&h, c).map(|hc| capacity_of(&hc, gamma)),
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let col = |j: usize| per_trial.iter().map(|t| t[j]).collect::<Vec<_>>();
    let estimates = (0..corrs.len()).map(|j| Estimate::from_samples(&col(j))).collect();
    let losses = (0..corrs.len())
        .map(|j| Estimate::from_samples(&per_trial.iter().map(|t| t[0] - t[j]).collect::<Vec<_>>()))
        .collect();
    Ok(CapacitySweep { estimates, losses })
}

pub fn ergodic_capacity(
    n_t: usize,
    n_r: usize,
    gamma_db: f64,
    trials: usize,
    seed: u64,
    corr: Option<&CorrelationSpec>,
) -> Result<Estimate, ChannelError> {
    let sweep = capacity_sweep(n_t, n_r, gamma_db, trials, seed, &[corr.cloned()])?;
    Ok(sweep.estimates[0])
}

/// Smallest SNR (dB) with ergodic capacity at least `target` bits/s/Hz,
/// by bisection on a fixed sample set.
pub fn snr_for_capacity(n_t: usize, n_r: usize, target: f64, trials: usize, seed: u64) -> Result<f64, ChannelError> {
    if trials == 0 {
        return Err(ChannelError::NoTrials);
    }
    // Eigenvalues of the smaller Gram matrix make each bisection step cheap.
    let spectra: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let h = sample_iid(n_t, n_r, &mut rng::stream(seed, &[0xca9a, i as u64]));
            let g = if n_r <= n_t { linalg::gram_outer(&h) } else { linalg::gram_inner(&h) };
            g.symmetric_eigenvalues().iter().map(|&l| l.max(0.0)).collect()
        })
        .collect();
    let cap = |db: f64| {
        let c = db_to_linear(db) / n_t as f64;
        spectra.par_iter().map(|ls| ls.iter().map(|l| (1.0 + c * l).log2()).sum::<f64>()).sum::<f64>() / trials as f64
    };
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if cap(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
