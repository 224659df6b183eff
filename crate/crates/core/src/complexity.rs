//! Flop accounting for linear detection and soft-output generation.
//!
//! Unit costs: real multiply 1, complex multiply 3, real or complex add 1,
//! length-`n` inner product `4n − 1`, scalar-vector product `n`, exponential 50.

pub const REAL_MUL: u64 = 1;
pub const COMPLEX_MUL: u64 = 3;
pub const REAL_ADD: u64 = 1;
pub const COMPLEX_ADD: u64 = 1;
pub const EXP: u64 = 50;

pub const fn inner_product(n: u64) -> u64 {
    4 * n - 1
}

pub const fn scalar_vector(n: u64) -> u64 {
    n
}

/// Flops per received vector, split into detection and soft-output parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flops {
    pub detect: u64,
    pub soft: u64,
}

impl Flops {
    pub fn total(&self) -> u64 {
        self.detect + self.soft
    }
}

/// Simplified matched filter: `5N² − N` detection, `55MN` soft output.
pub fn flops_proposed(n_r: u64, order: u64) -> Flops {
    Flops { detect: 5 * n_r * n_r - n_r, soft: 55 * order * n_r }
}

/// MMSE: `10N³ + 5.5N² + 1.5N` detection, `4MN² + 58MN` soft output.
pub fn flops_mmse(n_r: u64, order: u64) -> Flops {
    // 5.5N² + 1.5N = (11N² + 3N)/2, and 11N² + 3N = N(11N + 3) is always even.
    Flops { detect: 10 * n_r.pow(3) + (11 * n_r * n_r + 3 * n_r) / 2, soft: 4 * order * n_r * n_r + 58 * order * n_r }
}

/// Operation sink for instrumented kernels.
pub trait Tally {
    fn add(&mut self, flops: u64);

    #[inline]
    fn inner_product(&mut self, n: usize) {
        self.add(inner_product(n as u64));
    }

    #[inline]
    fn scalar_vector(&mut self, n: usize) {
        self.add(scalar_vector(n as u64));
    }
}

/// Discards all counts.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoTally;

impl Tally for NoTally {
    #[inline(always)]
    fn add(&mut self, _: u64) {}
}

/// Accumulates counts.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct FlopCounter {
    pub flops: u64,
}

impl Tally for FlopCounter {
    #[inline]
    fn add(&mut self, flops: u64) {
        self.flops += flops;
    }
}
