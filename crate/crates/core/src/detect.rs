//! Linear MIMO detection with soft output: MMSE, matched filter with exact
//! SINR, and matched filter with the noise-dominated SINR approximation.

use num_complex::Complex64;
use thiserror::Error;

use crate::channel::{Constellation, SymbolMapper};
use crate::complexity::{self, Tally};
use crate::decoder::PriorBlock;
use crate::linalg::{self, CMatrix, Cholesky};

/// Floor on equivalent noise variances.
pub const VARIANCE_FLOOR: f64 = 1e-15;

#[derive(Debug, Error, PartialEq)]
pub enum DetectError {
    #[error("regularised Gram matrix is not positive definite (pivot {pivot})")]
    Factorization { pivot: usize },
    #[error("channel column {0} is zero")]
    ZeroColumn(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("mapping needs {needed} streams but the likelihood block has {available}")]
    Mapping { needed: usize, available: usize },
}

/// Which linear detector produces the stream estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    Mmse,
    MfExact,
    MfSimplified,
}

impl DetectorKind {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::Mmse => "mmse",
            DetectorKind::MfExact => "mf-exact",
            DetectorKind::MfSimplified => "mf-simplified",
        }
    }
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mmse" => Ok(DetectorKind::Mmse),
            "mf-exact" => Ok(DetectorKind::MfExact),
            "mf-simplified" => Ok(DetectorKind::MfSimplified),
            other => Err(format!("unknown detector `{other}` (expected mmse, mf-exact or mf-simplified)")),
        }
    }
}

/// Equivalent scalar channel of one stream: `ŝ = μ·s + noise(var)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamEstimate {
    pub k: usize,
    pub s_hat: Complex64,
    pub mu: f64,
    /// Total complex noise variance; for the matched filter this is `Δ_k = 2σ_k²`.
    pub var: f64,
    /// Set when `var` was raised to [`VARIANCE_FLOOR`].
    pub clamped: bool,
}

/// Per-stream likelihood rows over the constellation labels, each summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodBlock {
    order: usize,
    data: Vec<f64>,
}

impl LikelihoodBlock {
    pub fn from_rows(order: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len() % order, 0);
        LikelihoodBlock { order, data }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn streams(&self) -> usize {
        self.data.len() / self.order
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.order..(k + 1) * self.order]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Concatenates blocks stream-wise.
    pub fn extend(&mut self, other: &LikelihoodBlock) {
        assert_eq!(self.order, other.order);
        self.data.extend_from_slice(&other.data);
    }

    pub fn empty(order: usize) -> Self {
        LikelihoodBlock { order, data: Vec::new() }
    }
}

/// MMSE factorisation for one realization.
///
/// With `G = (N_0/P)·I + H Hᴴ = L Lᴴ` and `P = E_s/N_t`, the columns of
/// `Z = L⁻¹ H` give `μ_k = ‖Z_k‖²` and `ŝ_k = Z_kᴴ L⁻¹ y`.
#[derive(Debug, Clone)]
pub struct MmseFilter {
    chol: Cholesky,
    z: CMatrix,
    mu: Vec<f64>,
    power: f64,
}

impl MmseFilter {
    pub fn new(h: &CMatrix, es: f64, n0: f64) -> Result<Self, DetectError> {
        let n_t = h.ncols();
        let n_r = h.nrows();
        let power = es / n_t as f64;
        let mut g = linalg::gram_outer(h);
        let reg = n0 / power;
        for i in 0..n_r {
            g[(i, i)] += Complex64::new(reg, 0.0);
        }
        let chol = Cholesky::new(g).map_err(|e| DetectError::Factorization { pivot: e.pivot })?;
        let mut z = h.clone();
        chol.solve_lower_in_place(&mut z);
        let mu = z.column_iter().map(|c| c.norm_squared()).collect();
        Ok(MmseFilter { chol, z, mu, power })
    }

    /// Explicit weight matrix `W = G⁻¹ H`, one column per stream.
    pub fn weights(&self) -> CMatrix {
        let mut w = self.z.clone();
        self.chol.solve_upper_adjoint_in_place(&mut w);
        w
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn estimate(&self, y: &[Complex64]) -> Result<Vec<StreamEstimate>, DetectError> {
        if y.len() != self.z.nrows() {
            return Err(DetectError::Dimension(format!("y has {} entries, H has {} rows", y.len(), self.z.nrows())));
        }
        let mut u = CMatrix::from_column_slice(y.len(), 1, y);
        self.chol.solve_lower_in_place(&mut u);
        let s_hat = linalg::adjoint_mat_vec(&self.z, u.as_slice());
        Ok(s_hat
            .into_iter()
            .zip(&self.mu)
            .enumerate()
            .map(|(k, (s_hat, &mu))| {
                let raw = self.power * (mu - mu * mu);
                let clamped = !(raw > VARIANCE_FLOOR);
                StreamEstimate { k, s_hat, mu, var: if clamped { VARIANCE_FLOOR } else { raw }, clamped }
            })
            .collect())
    }
}

/// MMSE weights `W_k = ((N_0/P)·I + H Hᴴ)⁻¹ H_k`.
pub fn mmse_weights(h: &CMatrix, es: f64, n0: f64) -> Result<CMatrix, DetectError> {
    Ok(MmseFilter::new(h, es, n0)?.weights())
}

/// Matched-filter variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfMode {
    /// `W_k = H_kᴴ / ‖H_k‖²` with the exact interference-plus-noise power.
    Exact,
    /// `W_k = H_kᴴ / N_r` with `Δ = 2σ_n²/N_r`.
    Simplified,
}

/// Matched-filter outputs `ŝ_k = W_k y`.
pub fn mf_detect<T: Tally>(h: &CMatrix, y: &[Complex64], mode: MfMode, tally: &mut T) -> Result<Vec<Complex64>, DetectError> {
    let n_r = h.nrows();
    if y.len() != n_r {
        return Err(DetectError::Dimension(format!("y has {} entries, H has {n_r} rows", y.len())));
    }
    let mut w = vec![Complex64::new(0.0, 0.0); n_r];
    let mut out = Vec::with_capacity(h.ncols());
    for (k, col) in h.column_iter().enumerate() {
        let scale = match mode {
            MfMode::Simplified => 1.0 / n_r as f64,
            MfMode::Exact => {
                let e = col.norm_squared();
                tally.inner_product(n_r);
                if e == 0.0 {
                    return Err(DetectError::ZeroColumn(k));
                }
                1.0 / e
            }
        };
        for (wi, hi) in w.iter_mut().zip(col.iter()) {
            *wi = hi.conj() * scale;
        }
        tally.scalar_vector(n_r);
        let s: Complex64 = w.iter().zip(y).map(|(a, b)| a * b).sum();
        tally.inner_product(n_r);
        out.push(s);
    }
    Ok(out)
}

/// Interference-plus-noise power `Δ_k` of every stream.
///
/// Exact mode uses `W_k H_i = (HᴴH)_{ki} / ‖H_k‖²` and `‖W_k‖² = 1/‖H_k‖²`.
pub fn mf_delta(h: &CMatrix, es: f64, sigma2_n: f64, mode: MfMode) -> Result<Vec<f64>, DetectError> {
    let n_r = h.nrows();
    let n_t = h.ncols();
    let power = es / n_t as f64;
    match mode {
        MfMode::Simplified => Ok(vec![2.0 * sigma2_n / n_r as f64; n_t]),
        MfMode::Exact => {
            let g = linalg::gram_inner(h);
            (0..n_t)
                .map(|k| {
                    let gkk = g[(k, k)].re;
                    if gkk == 0.0 {
                        return Err(DetectError::ZeroColumn(k));
                    }
                    let interference: f64 = (0..n_t).filter(|&i| i != k).map(|i| g[(k, i)].norm_sqr()).sum();
                    Ok(power * interference / (gkk * gkk) + 2.0 * sigma2_n / gkk)
                })
                .collect()
        }
    }
}

/// `(δ_k, Δ_k, σ_k²)` for one stream, with `δ_k = (E_s/N_t)/Δ_k`.
pub fn mf_sinr(h: &CMatrix, k: usize, es: f64, sigma2_n: f64, mode: MfMode) -> Result<(f64, f64, f64), DetectError> {
    let n_t = h.ncols();
    if k >= n_t {
        return Err(DetectError::Dimension(format!("stream {k} out of {n_t}")));
    }
    let delta = match mode {
        MfMode::Simplified => 2.0 * sigma2_n / h.nrows() as f64,
        MfMode::Exact => {
            let col = h.column(k);
            let gkk = col.norm_squared();
            if gkk == 0.0 {
                return Err(DetectError::ZeroColumn(k));
            }
            let interference: f64 = (0..n_t)
                .filter(|&i| i != k)
                .map(|i| col.dotc(&h.column(i)).norm_sqr())
                .sum();
            (es / n_t as f64) * interference / (gkk * gkk) + 2.0 * sigma2_n / gkk
        }
    };
    Ok(((es / n_t as f64) / delta, delta, delta / 2.0))
}

/// Gaussian likelihood rows `∝ exp(−|ŝ − μ s|² / var)`, max-subtracted in the log domain.
pub fn gaussian_likelihoods<T: Tally>(estimates: &[StreamEstimate], c: &Constellation, tally: &mut T) -> LikelihoodBlock {
    let order = c.order();
    let mut data = vec![0.0; estimates.len() * order];
    for (e, row) in estimates.iter().zip(data.chunks_exact_mut(order)) {
        let inv = 1.0 / e.var;
        let mut max = f64::NEG_INFINITY;
        for (r, p) in row.iter_mut().zip(c.points()) {
            let d = e.s_hat - p * e.mu;
            *r = -d.norm_sqr() * inv;
            max = max.max(*r);
        }
        // Subtraction 1, squared norm 3, scaling 1, exponential 50.
        tally.add(order as u64 * (complexity::COMPLEX_ADD + 3 + complexity::REAL_MUL + complexity::EXP));
        let mut sum = 0.0;
        for r in row.iter_mut() {
            *r = (*r - max).exp();
            sum += *r;
        }
        row.iter_mut().for_each(|r| *r /= sum);
    }
    LikelihoodBlock { order, data }
}

/// Matched-filter likelihoods `∝ exp(−|ŝ − s|²/(2σ_k²))`.
pub fn mf_soft<T: Tally>(s_hat: &[Complex64], sigma2_k: &[f64], c: &Constellation, tally: &mut T) -> LikelihoodBlock {
    let est: Vec<StreamEstimate> = s_hat
        .iter()
        .zip(sigma2_k)
        .enumerate()
        .map(|(k, (&s, &v))| {
            let var = 2.0 * v;
            let clamped = !(var > VARIANCE_FLOOR);
            StreamEstimate { k, s_hat: s, mu: 1.0, var: if clamped { VARIANCE_FLOOR } else { var }, clamped }
        })
        .collect();
    gaussian_likelihoods(&est, c, tally)
}

/// Detector state built once per channel estimate and reused for every
/// received vector seen through it.
#[derive(Debug, Clone)]
pub enum LinearReceiver {
    Mmse(MmseFilter),
    Mf { h: CMatrix, mode: MfMode, delta: Vec<f64> },
}

impl LinearReceiver {
    /// `h_est` is the channel known to the receiver; `sigma2_n` is the noise
    /// variance per real component.
    pub fn new(kind: DetectorKind, h_est: &CMatrix, es: f64, sigma2_n: f64) -> Result<Self, DetectError> {
        Ok(match kind {
            DetectorKind::Mmse => LinearReceiver::Mmse(MmseFilter::new(h_est, es, 2.0 * sigma2_n)?),
            DetectorKind::MfExact | DetectorKind::MfSimplified => {
                let mode = if kind == DetectorKind::MfExact { MfMode::Exact } else { MfMode::Simplified };
                let delta = mf_delta(h_est, es, sigma2_n, mode)?;
                LinearReceiver::Mf { h: h_est.clone(), mode, delta }
            }
        })
    }

    pub fn estimate(&self, y: &[Complex64]) -> Result<Vec<StreamEstimate>, DetectError> {
        match self {
            LinearReceiver::Mmse(f) => f.estimate(y),
            LinearReceiver::Mf { h, mode, delta } => {
                let s_hat = mf_detect(h, y, *mode, &mut complexity::NoTally)?;
                Ok(s_hat
                    .into_iter()
                    .zip(delta)
                    .enumerate()
                    .map(|(k, (s_hat, &d))| {
                        let clamped = !(d > VARIANCE_FLOOR);
                        StreamEstimate { k, s_hat, mu: 1.0, var: if clamped { VARIANCE_FLOOR } else { d }, clamped }
                    })
                    .collect())
            }
        }
    }
}

/// Stream estimates of any detector for one received vector.
pub fn detect(kind: DetectorKind, h_est: &CMatrix, y: &[Complex64], es: f64, sigma2_n: f64) -> Result<Vec<StreamEstimate>, DetectError> {
    LinearReceiver::new(kind, h_est, es, sigma2_n)?.estimate(y)
}

/// Hard label decisions from stream estimates (`ŝ/μ` sliced).
pub fn hard_labels(estimates: &[StreamEstimate], c: &Constellation) -> Vec<usize> {
    estimates.iter().map(|e| c.slice(e.s_hat / e.mu)).collect()
}

/// Symbol priors from stream likelihoods.
///
/// Coded symbol `v` occupies the `q` streams the mapper assigns it; its prior
/// at `x` is the product of those streams' likelihoods at the labels of `x`,
/// costing `2^m (q − 1)` multiplications before normalisation.
pub fn symbol_priors<T: Tally>(
    block: &LikelihoodBlock,
    mapper: &SymbolMapper,
    n_symbols: usize,
    field_size: usize,
    tally: &mut T,
) -> Result<PriorBlock, DetectError> {
    let q = mapper.q();
    let needed = if n_symbols == 0 { 0 } else { (mapper.uses(n_symbols) - 1) * mapper.n_t() + ((n_symbols - 1) % mapper.k_t() + 1) * q };
    if block.streams() < needed {
        return Err(DetectError::Mapping { needed, available: block.streams() });
    }
    if block.order() != 1 << mapper.bits_per_label() {
        return Err(DetectError::Dimension(format!(
            "likelihood rows have {} entries for {}-bit labels",
            block.order(),
            mapper.bits_per_label()
        )));
    }
    let labels: Vec<usize> =
        (0..field_size).flat_map(|x| mapper.labels(crate::galois::GfSymbol(x as u8)).collect::<Vec<_>>()).collect();
    let mut out = vec![0.0; n_symbols * field_size];
    let k_t = mapper.k_t();
    for v in 0..n_symbols {
        let base = (v / k_t) * mapper.n_t() + (v % k_t) * q;
        let dst = &mut out[v * field_size..(v + 1) * field_size];
        let mut sum = 0.0;
        for x in 0..field_size {
            let lab = &labels[x * q..(x + 1) * q];
            let mut p = block.row(base)[lab[0]];
            for j in 1..q {
                p *= block.row(base + j)[lab[j]];
            }
            dst[x] = p;
            sum += p;
        }
        tally.add((field_size * (q - 1)) as u64);
        dst.iter_mut().for_each(|p| *p /= sum);
    }
    PriorBlock::from_raw(out, field_size).map_err(|e| DetectError::Dimension(e.to_string()))
}
