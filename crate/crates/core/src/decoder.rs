//! Probability-domain belief propagation over GF(2^m), flooding schedule.
//!
//! Check-node convolutions run in the Walsh-Hadamard domain of the additive
//! group, so one check update costs O(d_c · m · 2^m).

use thiserror::Error;

use crate::code::SparseParityMatrix;
use crate::galois::{FieldTable, GfSymbol};

/// Floor applied to message entries before normalisation.
pub const MESSAGE_FLOOR: f64 = 1e-30;

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("non-finite or vanishing message at iteration {iteration}")]
    Numerical { iteration: usize },
    #[error("prior block has {got} vectors of size {got_q}, expected {expected} of size {expected_q}")]
    Shape { got: usize, got_q: usize, expected: usize, expected_q: usize },
    #[error("prior vector {index} is invalid: {reason}")]
    InvalidPrior { index: usize, reason: String },
}

/// `N` probability vectors of length `q = 2^m`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorBlock {
    q: usize,
    data: Vec<f64>,
}

impl PriorBlock {
    pub fn uniform(n: usize, q: usize) -> Self {
        PriorBlock { q, data: vec![1.0 / q as f64; n * q] }
    }

    /// Delta vectors at the given symbols.
    pub fn delta(symbols: &[GfSymbol], q: usize) -> Self {
        let mut data = vec![0.0; symbols.len() * q];
        for (v, s) in symbols.iter().enumerate() {
            data[v * q + s.value()] = 1.0;
        }
        PriorBlock { q, data }
    }

    /// Wraps raw values and normalises each vector; rejects negative or
    /// non-finite entries and all-zero vectors.
    pub fn from_raw(data: Vec<f64>, q: usize) -> Result<Self, DecodeError> {
        if q == 0 || data.len() % q != 0 {
            return Err(DecodeError::Shape { got: data.len() / q.max(1), got_q: q, expected: 0, expected_q: q });
        }
        let mut block = PriorBlock { q, data };
        for v in 0..block.n() {
            let row = block.row_mut(v);
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(DecodeError::InvalidPrior { index: v, reason: "negative or non-finite entry".into() });
            }
            let s: f64 = row.iter().sum();
            if s <= 0.0 {
                return Err(DecodeError::InvalidPrior { index: v, reason: "all entries zero".into() });
            }
            row.iter_mut().for_each(|p| *p /= s);
        }
        Ok(block)
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.q
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn row(&self, v: usize) -> &[f64] {
        &self.data[v * self.q..(v + 1) * self.q]
    }

    pub fn row_mut(&mut self, v: usize) -> &mut [f64] {
        &mut self.data[v * self.q..(v + 1) * self.q]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Per-vector argmax, lowest symbol on ties.
    pub fn hard_decisions(&self) -> Vec<GfSymbol> {
        (0..self.n()).map(|v| GfSymbol(argmax(self.row(v)) as u8)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub hard: Vec<GfSymbol>,
    pub iterations_used: usize,
    pub converged: bool,
    pub posteriors: Option<PriorBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderOptions {
    pub l_max: usize,
    /// Stop as soon as the hard decisions satisfy every check.
    pub early_stop: bool,
    pub keep_posteriors: bool,
}

impl Default for DecoderOptions {
    fn default() -> Self {
        DecoderOptions { l_max: 200, early_stop: true, keep_posteriors: false }
    }
}

/// In-place unnormalised Walsh-Hadamard transform; applying it twice scales by `len`.
pub fn fwht(a: &mut [f64]) {
    let n = a.len();
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let (x, y) = (a[j], a[j + h]);
                a[j] = x + y;
                a[j + h] = x - y;
            }
        }
        h *= 2;
    }
}

#[inline]
pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Floors entries at [`MESSAGE_FLOOR`] and rescales to unit sum.
#[inline]
pub(crate) fn floor_normalize(p: &mut [f64]) -> bool {
    let mut s = 0.0;
    for v in p.iter_mut() {
        if *v < MESSAGE_FLOOR {
            *v = MESSAGE_FLOOR;
        }
        s += *v;
    }
    if !s.is_finite() || s <= 0.0 {
        return false;
    }
    let inv = 1.0 / s;
    p.iter_mut().for_each(|v| *v *= inv);
    true
}

/// Reusable transform-domain scratch for one check-node update.
#[derive(Debug, Clone)]
pub struct CheckNodeKernel {
    q: usize,
    spectra: Vec<f64>,
    prefix: Vec<f64>,
    work: Vec<f64>,
}

impl CheckNodeKernel {
    pub fn new(q: usize) -> Self {
        CheckNodeKernel { q, spectra: Vec::new(), prefix: Vec::new(), work: vec![0.0; q] }
    }

    /// Extrinsic check-to-variable messages.
    ///
    /// Chunk `i` of `inputs` (length `q` each) is the message from the i-th
    /// adjacent variable and `coefs[i]` its edge coefficient; chunk `i` of
    /// `outputs` receives the distribution of that variable implied by the
    /// check and all other inputs. Outputs are floored and normalised.
    pub fn update(&mut self, field: &FieldTable, coefs: &[GfSymbol], inputs: &[f64], outputs: &mut [f64]) -> bool {
        let q = self.q;
        let d = coefs.len();
        self.spectra.resize(d * q, 0.0);
        self.prefix.resize(d * q, 0.0);
        for i in 0..d {
            let perm = field.mul_row(coefs[i]);
            let spec = &mut self.spectra[i * q..(i + 1) * q];
            for x in 0..q {
                spec[perm[x] as usize] = inputs[i * q + x];
            }
            fwht(spec);
        }
        // prefix[i] = product of spectra 0..i (exclusive).
        self.prefix[..q].iter_mut().for_each(|v| *v = 1.0);
        for i in 1..d {
            let (done, rest) = self.prefix.split_at_mut(i * q);
            let prev = &done[(i - 1) * q..];
            let spec = &self.spectra[(i - 1) * q..i * q];
            for z in 0..q {
                rest[z] = prev[z] * spec[z];
            }
        }
        let mut ok = true;
        let suffix = &mut self.work;
        suffix.iter_mut().for_each(|v| *v = 1.0);
        for i in (0..d).rev() {
            let out = &mut outputs[i * q..(i + 1) * q];
            let pre = &self.prefix[i * q..(i + 1) * q];
            let mut tmp = [0.0f64; 256];
            let tmp = &mut tmp[..q];
            for z in 0..q {
                tmp[z] = pre[z] * suffix[z];
            }
            fwht(tmp);
            let perm = field.mul_row(coefs[i]);
            for x in 0..q {
                // The other terms must sum to h·x (characteristic 2).
                out[x] = tmp[perm[x] as usize];
            }
            ok &= floor_normalize(out);
            let spec = &self.spectra[i * q..(i + 1) * q];
            for z in 0..q {
                suffix[z] *= spec[z];
            }
        }
        ok
    }
}

/// Flooding BP decoder bound to one matrix; buffers are reused across calls.
#[derive(Debug, Clone)]
pub struct BpDecoder<'a> {
    matrix: &'a SparseParityMatrix,
    field: &'a FieldTable,
    q: usize,
    /// Edges in check-major order: (variable, coefficient).
    edge_var: Vec<usize>,
    edge_coef: Vec<GfSymbol>,
    check_start: Vec<usize>,
    /// Edge ids per variable.
    var_edges: Vec<Vec<usize>>,
    v2c: Vec<f64>,
    c2v: Vec<f64>,
    priors: Vec<f64>,
    posterior: Vec<f64>,
    hard: Vec<GfSymbol>,
    kernel: CheckNodeKernel,
    iteration: usize,
}

impl<'a> BpDecoder<'a> {
    pub fn new(matrix: &'a SparseParityMatrix, field: &'a FieldTable) -> Self {
        let q = field.size();
        let mut edge_var = Vec::new();
        let mut edge_coef = Vec::new();
        let mut check_start = vec![0];
        let mut var_edges = vec![Vec::new(); matrix.n_vars()];
        for row in matrix.rows() {
            for &(v, a) in row {
                var_edges[v].push(edge_var.len());
                edge_var.push(v);
                edge_coef.push(a);
            }
            check_start.push(edge_var.len());
        }
        let e = edge_var.len();
        let n = matrix.n_vars();
        BpDecoder {
            matrix,
            field,
            q,
            edge_var,
            edge_coef,
            check_start,
            var_edges,
            v2c: vec![0.0; e * q],
            c2v: vec![0.0; e * q],
            priors: vec![0.0; n * q],
            posterior: vec![0.0; n * q],
            hard: vec![GfSymbol::ZERO; n],
            kernel: CheckNodeKernel::new(q),
            iteration: 0,
        }
    }

    /// Loads priors and sends them as the first variable-to-check messages.
    pub fn initialize(&mut self, priors: &PriorBlock) -> Result<(), DecodeError> {
        let n = self.matrix.n_vars();
        if priors.n() != n || priors.q() != self.q {
            return Err(DecodeError::Shape { got: priors.n(), got_q: priors.q(), expected: n, expected_q: self.q });
        }
        let q = self.q;
        self.priors.copy_from_slice(priors.as_slice());
        for v in 0..n {
            let p = &mut self.priors[v * q..(v + 1) * q];
            if !floor_normalize(p) {
                return Err(DecodeError::InvalidPrior { index: v, reason: "not normalisable".into() });
            }
            for &e in &self.var_edges[v] {
                self.v2c[e * q..(e + 1) * q].copy_from_slice(p);
            }
        }
        self.posterior.copy_from_slice(&self.priors);
        self.update_hard();
        self.iteration = 0;
        Ok(())
    }

    /// One flooding iteration: all checks, then all variables.
    pub fn iterate(&mut self) -> Result<(), DecodeError> {
        let q = self.q;
        self.iteration += 1;
        let iteration = self.iteration;
        for c in 0..self.check_start.len() - 1 {
            let (lo, hi) = (self.check_start[c], self.check_start[c + 1]);
            let inputs = &self.v2c[lo * q..hi * q];
            let outputs = &mut self.c2v[lo * q..hi * q];
            if !self.kernel.update(self.field, &self.edge_coef[lo..hi], inputs, outputs) {
                return Err(DecodeError::Numerical { iteration });
            }
        }
        let mut scratch = vec![0.0; q];
        for v in 0..self.matrix.n_vars() {
            let edges = &self.var_edges[v];
            let prior = &self.priors[v * q..(v + 1) * q];
            let post = &mut self.posterior[v * q..(v + 1) * q];
            post.copy_from_slice(prior);
            for &e in edges {
                let m = &self.c2v[e * q..(e + 1) * q];
                post.iter_mut().zip(m).for_each(|(p, m)| *p *= m);
            }
            for &e in edges {
                // Extrinsic: prior times all incoming messages but this edge's.
                scratch.copy_from_slice(prior);
                for &f in edges {
                    if f != e {
                        let m = &self.c2v[f * q..(f + 1) * q];
                        scratch.iter_mut().zip(m).for_each(|(p, m)| *p *= m);
                    }
                }
                if !floor_normalize(&mut scratch) {
                    return Err(DecodeError::Numerical { iteration });
                }
                self.v2c[e * q..(e + 1) * q].copy_from_slice(&scratch);
            }
            if !floor_normalize(post) {
                return Err(DecodeError::Numerical { iteration });
            }
        }
        self.update_hard();
        Ok(())
    }

    fn update_hard(&mut self) {
        let q = self.q;
        for (v, h) in self.hard.iter_mut().enumerate() {
            *h = GfSymbol(argmax(&self.posterior[v * q..(v + 1) * q]) as u8);
        }
    }

    pub fn syndrome_is_zero(&self) -> bool {
        (0..self.check_start.len() - 1).all(|c| {
            let (lo, hi) = (self.check_start[c], self.check_start[c + 1]);
            (lo..hi).fold(GfSymbol::ZERO, |acc, e| {
                self.field.add(acc, self.field.mul(self.edge_coef[e], self.hard[self.edge_var[e]]))
            }).is_zero()
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn hard(&self) -> &[GfSymbol] {
        &self.hard
    }

    /// Current posteriors, one normalised vector per variable.
    pub fn posteriors(&self) -> &[f64] {
        &self.posterior
    }

    /// Variable-to-check messages in check-major edge order.
    pub fn v2c_messages(&self) -> &[f64] {
        &self.v2c
    }

    pub fn c2v_messages(&self) -> &[f64] {
        &self.c2v
    }

    pub fn decode(&mut self, priors: &PriorBlock, opts: DecoderOptions) -> Result<DecodeResult, DecodeError> {
        self.initialize(priors)?;
        let mut converged = self.syndrome_is_zero();
        if !(converged && opts.early_stop) {
            for _ in 0..opts.l_max {
                self.iterate()?;
                converged = self.syndrome_is_zero();
                if converged && opts.early_stop {
                    break;
                }
            }
        }
        let posteriors = opts
            .keep_posteriors
            .then(|| PriorBlock { q: self.q, data: self.posterior.clone() });
        Ok(DecodeResult { hard: self.hard.clone(), iterations_used: self.iteration, converged, posteriors })
    }
}

/// Convenience wrapper that allocates a decoder for a single call.
pub fn decode(
    priors: &PriorBlock,
    matrix: &SparseParityMatrix,
    field: &FieldTable,
    opts: DecoderOptions,
) -> Result<DecodeResult, DecodeError> {
    BpDecoder::new(matrix, field).decode(priors, opts)
}
