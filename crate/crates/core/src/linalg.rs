//! Dense complex kernels used by the channel and detector code.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>` (column-major, contiguous).
//! Products go through `matrixmultiply`'s packed GEMM; the Cholesky
//! factorization and triangular solves are blocked on top of it.

use matrixmultiply::CGemmOption;
use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;

const BLOCK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
pub struct NotPositiveDefinite {
    pub pivot: usize,
    pub value: f64,
}

/// `C ← alpha·A·B + beta·C` on raw strided storage.
///
/// # Safety
/// All pointers must address valid storage for the given shapes and strides,
/// and `c` must not alias `a` or `b`.
#[allow(clippy::too_many_arguments)]
unsafe fn zgemm_raw(
    m: usize,
    k: usize,
    n: usize,
    alpha: Complex64,
    a: *const Complex64,
    rsa: isize,
    csa: isize,
    b: *const Complex64,
    rsb: isize,
    csb: isize,
    beta: Complex64,
    c: *mut Complex64,
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    // Complex64 is #[repr(C)] { re, im }, layout-identical to [f64; 2].
    matrixmultiply::zgemm(
        CGemmOption::Standard,
        CGemmOption::Standard,
        m,
        k,
        n,
        [alpha.re, alpha.im],
        a as *const [f64; 2],
        rsa,
        csa,
        b as *const [f64; 2],
        rsb,
        csb,
        [beta.re, beta.im],
        c as *mut [f64; 2],
        rsc,
        csc,
    );
}

/// `A·B`.
pub fn mul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut c = CMatrix::zeros(m, n);
    unsafe {
        zgemm_raw(
            m,
            k,
            n,
            Complex64::new(1.0, 0.0),
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            1,
            k as isize,
            Complex64::new(0.0, 0.0),
            c.as_mut_ptr(),
            1,
            m as isize,
        );
    }
    c
}

/// `A·A^H`.
pub fn gram_outer(a: &CMatrix) -> CMatrix {
    let (m, k) = (a.nrows(), a.ncols());
    let ac = a.map(|x| x.conj());
    let mut c = CMatrix::zeros(m, m);
    unsafe {
        // B = conj(A)^T: element (t, j) = conj(A[j, t]) at ac[j + t·m].
        zgemm_raw(
            m,
            k,
            m,
            Complex64::new(1.0, 0.0),
            a.as_ptr(),
            1,
            m as isize,
            ac.as_ptr(),
            m as isize,
            1,
            Complex64::new(0.0, 0.0),
            c.as_mut_ptr(),
            1,
            m as isize,
        );
    }
    c
}

/// `A^H·A`.
pub fn gram_inner(a: &CMatrix) -> CMatrix {
    let (r, n) = (a.nrows(), a.ncols());
    let ac = a.map(|x| x.conj());
    let mut c = CMatrix::zeros(n, n);
    unsafe {
        // A^H element (i, t) = conj(A[t, i]) at ac[t + i·r].
        zgemm_raw(
            n,
            r,
            n,
            Complex64::new(1.0, 0.0),
            ac.as_ptr(),
            r as isize,
            1,
            a.as_ptr(),
            1,
            r as isize,
            Complex64::new(0.0, 0.0),
            c.as_mut_ptr(),
            1,
            n as isize,
        );
    }
    c
}

/// `S·H` with real `S`.
pub fn real_mul_complex(s: &DMatrix<f64>, h: &CMatrix) -> CMatrix {
    assert_eq!(s.ncols(), h.nrows(), "inner dimensions differ");
    let (m, k, n) = (s.nrows(), s.ncols(), h.ncols());
    let mut out = CMatrix::zeros(m, n);
    let hp = h.as_ptr() as *const f64;
    let op = out.as_mut_ptr() as *mut f64;
    for part in 0..2 {
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                s.as_ptr(),
                1,
                m as isize,
                hp.add(part),
                2,
                2 * k as isize,
                0.0,
                op.add(part),
                2,
                2 * m as isize,
            );
        }
    }
    out
}

/// `H·S` with real `S`.
pub fn complex_mul_real(h: &CMatrix, s: &DMatrix<f64>) -> CMatrix {
    assert_eq!(h.ncols(), s.nrows(), "inner dimensions differ");
    let (m, k, n) = (h.nrows(), h.ncols(), s.ncols());
    let mut out = CMatrix::zeros(m, n);
    let hp = h.as_ptr() as *const f64;
    let op = out.as_mut_ptr() as *mut f64;
    for part in 0..2 {
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                hp.add(part),
                2,
                2 * m as isize,
                s.as_ptr(),
                1,
                k as isize,
                0.0,
                op.add(part),
                2,
                2 * m as isize,
            );
        }
    }
    out
}

/// `H·x`.
pub fn mat_vec(h: &CMatrix, x: &[Complex64]) -> Vec<Complex64> {
    assert_eq!(h.ncols(), x.len());
    let mut y = vec![Complex64::new(0.0, 0.0); h.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (yi, &hij) in y.iter_mut().zip(h.column(j).iter()) {
            *yi += hij * xj;
        }
    }
    y
}

/// `H^H·y`.
pub fn adjoint_mat_vec(h: &CMatrix, y: &[Complex64]) -> Vec<Complex64> {
    assert_eq!(h.nrows(), y.len());
    (0..h.ncols())
        .map(|j| h.column(j).iter().zip(y).map(|(hij, yi)| hij.conj() * yi).sum())
        .collect()
}

/// Lower Cholesky factor `L` of a Hermitian positive definite matrix, `A = L·L^H`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: CMatrix,
}

impl Cholesky {
    /// Factors `a`, reading only its lower triangle.
    pub fn new(mut a: CMatrix) -> Result<Self, NotPositiveDefinite> {
        assert!(a.is_square(), "Cholesky needs a square matrix");
        let n = a.nrows();
        let ld = n as isize;
        let mut panel_conj: Vec<Complex64> = Vec::new();
        let mut j0 = 0;
        while j0 < n {
            let jb = BLOCK.min(n - j0);
            factor_diagonal_block(&mut a, j0, jb)?;
            let below = n - j0 - jb;
            if below > 0 {
                // Panel rows below the diagonal block: X·L_jj^H = A_panel.
                for c in 0..jb {
                    for t in 0..c {
                        let lct = a[(j0 + c, j0 + t)].conj();
                        for r in (j0 + jb)..n {
                            let v = a[(r, j0 + t)] * lct;
                            a[(r, j0 + c)] -= v;
                        }
                    }
                    let d = a[(j0 + c, j0 + c)].re;
                    for r in (j0 + jb)..n {
                        a[(r, j0 + c)] /= d;
                    }
                }
                // conj(P), stored column-major with leading dimension `below`.
                panel_conj.clear();
                for c in 0..jb {
                    for r in (j0 + jb)..n {
                        panel_conj.push(a[(r, j0 + c)].conj());
                    }
                }
                // Trailing lower triangle, one block column at a time.
                let base = a.as_mut_ptr();
                let mut b0 = 0;
                while b0 < below {
                    let bb = BLOCK.min(below - b0);
                    let rows = below - b0;
                    let row0 = j0 + jb + b0;
                    unsafe {
                        // C[row0.., row0..row0+bb] -= P[b0..] · (P[b0..b0+bb])^H
                        zgemm_raw(
                            rows,
                            jb,
                            bb,
                            Complex64::new(-1.0, 0.0),
                            base.add(row0 + j0 * n),
                            1,
                            ld,
                            panel_conj.as_ptr().add(b0),
                            below as isize,
                            1,
                            Complex64::new(1.0, 0.0),
                            base.add(row0 + row0 * n),
                            1,
                            ld,
                        );
                    }
                    b0 += bb;
                }
            }
            j0 += jb;
        }
        for j in 0..n {
            for i in 0..j {
                a[(i, j)] = Complex64::new(0.0, 0.0);
            }
        }
        Ok(Cholesky { l: a })
    }

    pub fn l(&self) -> &CMatrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Natural logarithm of `det A`.
    pub fn ln_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].re.ln()).sum::<f64>()
    }

    /// Overwrites `b` with `L⁻¹·b`.
    pub fn solve_lower_in_place(&self, b: &mut CMatrix) {
        let n = self.dim();
        assert_eq!(b.nrows(), n);
        let nrhs = b.ncols();
        let l = &self.l;
        let mut j0 = 0;
        while j0 < n {
            let jb = BLOCK.min(n - j0);
            for col in 0..nrhs {
                for k in j0..j0 + jb {
                    let xk = b[(k, col)] / l[(k, k)].re;
                    b[(k, col)] = xk;
                    for i in (k + 1)..(j0 + jb) {
                        let v = l[(i, k)] * xk;
                        b[(i, col)] -= v;
                    }
                }
            }
            let below = n - j0 - jb;
            if below > 0 && nrhs > 0 {
                unsafe {
                    zgemm_raw(
                        below,
                        jb,
                        nrhs,
                        Complex64::new(-1.0, 0.0),
                        l.as_ptr().add(j0 + jb + j0 * n),
                        1,
                        n as isize,
                        b.as_ptr().add(j0),
                        1,
                        n as isize,
                        Complex64::new(1.0, 0.0),
                        b.as_mut_ptr().add(j0 + jb),
                        1,
                        n as isize,
                    );
                }
            }
            j0 += jb;
        }
    }

    /// Overwrites `b` with `L⁻ᴴ·b`.
    pub fn solve_upper_adjoint_in_place(&self, b: &mut CMatrix) {
        let n = self.dim();
        assert_eq!(b.nrows(), n);
        let nrhs = b.ncols();
        let l = &self.l;
        let mut blocks = Vec::new();
        let mut j0 = 0;
        while j0 < n {
            blocks.push((j0, BLOCK.min(n - j0)));
            j0 += BLOCK;
        }
        let mut lconj: Vec<Complex64> = Vec::new();
        for &(j0, jb) in blocks.iter().rev() {
            for col in 0..nrhs {
                for k in (j0..j0 + jb).rev() {
                    let mut acc = b[(k, col)];
                    for i in (k + 1)..(j0 + jb) {
                        acc -= l[(i, k)].conj() * b[(i, col)];
                    }
                    b[(k, col)] = acc / l[(k, k)].re;
                }
            }
            if j0 > 0 && nrhs > 0 {
                // B[0..j0] -= (L[j0..j0+jb, 0..j0])^H · X[j0..j0+jb]
                lconj.clear();
                for c in 0..j0 {
                    for r in j0..j0 + jb {
                        lconj.push(l[(r, c)].conj());
                    }
                }
                unsafe {
                    zgemm_raw(
                        j0,
                        jb,
                        nrhs,
                        Complex64::new(-1.0, 0.0),
                        lconj.as_ptr(),
                        jb as isize,
                        1,
                        b.as_ptr().add(j0),
                        1,
                        n as isize,
                        Complex64::new(1.0, 0.0),
                        b.as_mut_ptr(),
                        1,
                        n as isize,
                    );
                }
            }
        }
    }

    /// `A⁻¹·b`.
    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        let mut x = b.clone();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_adjoint_in_place(&mut x);
        x
    }
}

fn factor_diagonal_block(a: &mut CMatrix, j0: usize, jb: usize) -> Result<(), NotPositiveDefinite> {
    for j in j0..j0 + jb {
        let mut d = a[(j, j)].re;
        for t in j0..j {
            d -= a[(j, t)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(NotPositiveDefinite { pivot: j, value: d });
        }
        let d = d.sqrt();
        a[(j, j)] = Complex64::new(d, 0.0);
        for i in (j + 1)..(j0 + jb) {
            let mut v = a[(i, j)];
            for t in j0..j {
                v -= a[(i, t)] * a[(j, t)].conj();
            }
            a[(i, j)] = v / d;
        }
    }
    Ok(())
}
