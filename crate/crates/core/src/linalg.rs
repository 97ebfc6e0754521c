//! Small dense complex kernels on column-major slices.

use num_complex::Complex64;

use crate::error::{Result, TomoError};
use crate::random::Stream;

pub(crate) const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `y += A·x` for a column-major `rows × x.len()` matrix.
pub(crate) fn gemv_add(a: &[Complex64], rows: usize, x: &[Complex64], y: &mut [Complex64]) {
    for (col, &xc) in a.chunks_exact(rows).zip(x) {
        if xc == ZERO {
            continue;
        }
        for (yi, &aij) in y.iter_mut().zip(col) {
            *yi += aij * xc;
        }
    }
}

/// `out[j] = scale · a_jᴴ·v` for each column of a column-major matrix.
pub(crate) fn gemv_adjoint(
    a: &[Complex64],
    rows: usize,
    v: &[Complex64],
    scale: f64,
    out: &mut [Complex64],
) {
    for (col, o) in a.chunks_exact(rows).zip(out.iter_mut()) {
        *o = dotc(col, v) * scale;
    }
}

/// `xᴴ·y`.
#[inline]
pub(crate) fn dotc(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        re += a.re * b.re + a.im * b.im;
        im += a.re * b.im - a.im * b.re;
    }
    Complex64::new(re, im)
}

#[inline]
pub(crate) fn norm_sqr(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// A complex matrix stored as separate real and imaginary planes in both
/// column-major and row-major order, so block products run as contiguous
/// real axpy loops. Arithmetic order matches [`gemv_add`] / [`gemv_adjoint`].
pub(crate) struct SplitMatrix {
    rows: usize,
    cols: usize,
    col_re: Vec<f64>,
    col_im: Vec<f64>,
    row_re: Vec<f64>,
    row_im: Vec<f64>,
}

impl SplitMatrix {
    pub(crate) fn from_column_major(a: &[Complex64], rows: usize) -> Self {
        let cols = a.len() / rows.max(1);
        let mut row_re = vec![0.0; rows * cols];
        let mut row_im = vec![0.0; rows * cols];
        for (l, col) in a.chunks_exact(rows).enumerate() {
            for (n, z) in col.iter().enumerate() {
                row_re[n * cols + l] = z.re;
                row_im[n * cols + l] = z.im;
            }
        }
        Self {
            rows,
            cols,
            col_re: a.iter().map(|z| z.re).collect(),
            col_im: a.iter().map(|z| z.im).collect(),
            row_re,
            row_im,
        }
    }

    /// `y += A[:, start..]·x` with `x.len()` columns.
    pub(crate) fn forward_add(&self, start: usize, x: &[Complex64], y: &mut [Complex64]) {
        let rows = self.rows;
        for (k, &xc) in x.iter().enumerate() {
            if xc == ZERO {
                continue;
            }
            let off = (start + k) * rows;
            let re = &self.col_re[off..off + rows];
            let im = &self.col_im[off..off + rows];
            for ((yi, &ar), &ai) in y.iter_mut().zip(re).zip(im) {
                yi.re += ar * xc.re - ai * xc.im;
                yi.im += ar * xc.im + ai * xc.re;
            }
        }
    }

    /// `out[k] = scale · a_{start+k}ᴴ·v`.
    pub(crate) fn adjoint(&self, start: usize, v: &[Complex64], scale: f64, out: &mut [Complex64]) {
        let m = out.len();
        out.iter_mut().for_each(|z| *z = ZERO);
        for (n, vn) in v.iter().enumerate().take(self.rows) {
            let off = n * self.cols + start;
            let re = &self.row_re[off..off + m];
            let im = &self.row_im[off..off + m];
            for ((o, &ar), &ai) in out.iter_mut().zip(re).zip(im) {
                o.re += ar * vn.re + ai * vn.im;
                o.im += ar * vn.im - ai * vn.re;
            }
        }
        if scale != 1.0 {
            out.iter_mut().for_each(|z| *z *= scale);
        }
    }
}

/// Largest eigenvalue of `AᴴA` (squared spectral norm of `A`) by power
/// iteration, stopping when successive Rayleigh quotients agree to `rel_tol`.
pub(crate) fn spectral_norm_sqr(
    a: &[Complex64],
    rows: usize,
    rel_tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let cols = a.len() / rows;
    let mut stream = Stream::new(0x5eed_cafe, cols as u64);
    let mut v: Vec<Complex64> = (0..cols)
        .map(|_| Complex64::new(1.0 + 0.1 * stream.normal(), 0.1 * stream.normal()))
        .collect();
    let mut av = vec![ZERO; rows];
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let vnorm = norm_sqr(&v).sqrt();
        if vnorm == 0.0 {
            return Ok(0.0);
        }
        v.iter_mut().for_each(|z| *z /= vnorm);
        av.iter_mut().for_each(|z| *z = ZERO);
        gemv_add(a, rows, &v, &mut av);
        let next = norm_sqr(&av);
        gemv_adjoint(a, rows, &av, 1.0, &mut v);
        if (next - estimate).abs() <= rel_tol * next {
            return Ok(next);
        }
        estimate = next;
    }
    Err(TomoError::PowerIterationDiverged(max_iter))
}

/// Least-squares fit of `g` on the columns listed in `support`, via modified
/// Gram–Schmidt QR with one re-orthogonalisation pass.
///
/// Returns the coefficients and the residual `g − A_S·x`. Fails when the
/// condition estimate of the normal matrix, `(max|r_ii| / min|r_ii|)²`,
/// exceeds `cond_cap`.
pub(crate) fn least_squares(
    a: &[Complex64],
    rows: usize,
    support: &[usize],
    g: &[Complex64],
    cond_cap: f64,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let k = support.len();
    let mut q: Vec<Vec<Complex64>> = Vec::with_capacity(k);
    let mut r = vec![ZERO; k * k]; // r[i*k + j], upper triangular
    for (j, &col) in support.iter().enumerate() {
        let mut v = a[col * rows..(col + 1) * rows].to_vec();
        for _pass in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = dotc(qi, &v);
                r[i * k + j] += c;
                for (vv, &qq) in v.iter_mut().zip(qi) {
                    *vv -= qq * c;
                }
            }
        }
        let nrm = norm_sqr(&v).sqrt();
        r[j * k + j] = Complex64::new(nrm, 0.0);
        if nrm > 0.0 {
            v.iter_mut().for_each(|z| *z /= nrm);
        }
        q.push(v);
    }
    if k > 0 {
        let diag: Vec<f64> = (0..k).map(|i| r[i * k + i].re).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let cond = if min > 0.0 { (max / min).powi(2) } else { f64::INFINITY };
        if !(cond <= cond_cap) {
            return Err(TomoError::Singular(cond));
        }
    }
    // project g onto the orthonormal basis, again with a second pass
    let mut residual = g.to_vec();
    let mut coeffs_q = vec![ZERO; k];
    for _pass in 0..2 {
        for (i, qi) in q.iter().enumerate() {
            let c = dotc(qi, &residual);
            coeffs_q[i] += c;
            for (rv, &qq) in residual.iter_mut().zip(qi) {
                *rv -= qq * c;
            }
        }
    }
    // back substitution R·x = Qᴴg
    let mut x = vec![ZERO; k];
    for i in (0..k).rev() {
        let mut acc = coeffs_q[i];
        for j in i + 1..k {
            acc -= r[i * k + j] * x[j];
        }
        x[i] = acc / r[i * k + i];
    }
    Ok((x, residual))
}
