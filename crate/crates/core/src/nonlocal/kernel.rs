//! Whole-region non-local filter.
//!
//! For every displacement `d` in the search window the per-pixel similarity
//! `D_d(x) = Σ_k ℓ_k(x, x + d)` is evaluated once, then summed over the patch
//! around each core pixel with a separable box sum in a fixed order. A core
//! pixel's result only depends on data within `search + patch + 1` pixels
//! (the extra pixel feeds the 3×3 pilot), so filtering any sub-region that
//! contains that halo reproduces the whole-image result bit for bit.

use std::ops::Range;

use ndarray::{Array2, Array3, ArrayView3};
use num_complex::Complex64;

use super::likelihood::{density_constants, log_density, PairParams, WmleAccumulator};
use super::{NlParams, MU_MAX};

pub(crate) struct RegionOutput {
    /// `[acquisition, core row, core col]`
    pub filtered: Array3<Complex64>,
    /// `[pair, core row, core col]`
    pub psi: Array3<f64>,
    pub mu: Array3<f64>,
    pub sigma2: Array3<f64>,
    pub enl: Array2<f64>,
}

/// Per-pixel, per-pair quantities laid out `[pixel * pairs + k]`; pair `k`
/// is the master with the k-th other acquisition.
struct PixelData {
    pairs: usize,
    /// `|g₀|² + |g_k|²`
    power: Vec<f64>,
    /// `g₀*·g_k`
    z: Vec<Complex64>,
    /// `|g₀|·|g_k|`
    amp: Vec<f64>,
    pilot_a: Vec<f64>,
    pilot_b: Vec<f64>,
    pilot_c: Vec<Complex64>,
}

/// 3×3 boxcar estimate of the pair `(master, k)` parameters at `(r, c)`, clipped
/// at the region border, with the coherence capped at [`MU_MAX`].
pub(crate) fn pilot_at(images: &ArrayView3<Complex64>, master: usize, k: usize, r: usize, c: usize) -> PairParams {
    let (_, h, w) = images.dim();
    let mut acc = WmleAccumulator::default();
    for rr in r.saturating_sub(1)..(r + 2).min(h) {
        for cc in c.saturating_sub(1)..(c + 2).min(w) {
            acc.add(1.0, images[[master, rr, cc]], images[[k, rr, cc]]);
        }
    }
    let mut p = acc.finish();
    p.mu = p.mu.min(MU_MAX);
    p
}

impl PixelData {
    fn new(images: &ArrayView3<Complex64>, master: usize) -> Self {
        let (n, h, w) = images.dim();
        let pairs = n - 1;
        let len = h * w * pairs;
        let mut data = PixelData {
            pairs,
            power: Vec::with_capacity(len),
            z: Vec::with_capacity(len),
            amp: Vec::with_capacity(len),
            pilot_a: Vec::with_capacity(len),
            pilot_b: Vec::with_capacity(len),
            pilot_c: Vec::with_capacity(len),
        };
        for r in 0..h {
            for c in 0..w {
                let g0 = images[[master, r, c]];
                for k in (0..n).filter(|&k| k != master) {
                    let gk = images[[k, r, c]];
                    data.power.push(g0.norm_sqr() + gk.norm_sqr());
                    data.z.push(g0.conj() * gk);
                    data.amp.push(g0.norm() * gk.norm());
                    let (a, b, cc) = density_constants(&pilot_at(images, master, k, r, c));
                    data.pilot_a.push(a);
                    data.pilot_b.push(b);
                    data.pilot_c.push(cc);
                }
            }
        }
        data
    }

    /// `Σ_k ½[log p(x | Θ_y) + log p(y | Θ_x)]`.
    #[inline]
    fn similarity(&self, x: usize, y: usize) -> f64 {
        let (xs, ys) = (x * self.pairs, y * self.pairs);
        let mut total = 0.0;
        for k in 0..self.pairs {
            let (i, j) = (xs + k, ys + k);
            let to_y = log_density(self.power[i], self.z[i], self.pilot_a[j], self.pilot_b[j], self.pilot_c[j]);
            let to_x = log_density(self.power[j], self.z[j], self.pilot_a[i], self.pilot_b[i], self.pilot_c[i]);
            total += 0.5 * (to_y + to_x);
        }
        total
    }
}

fn clip(lo: isize, hi: isize, range: &Range<usize>) -> Range<usize> {
    let a = lo.max(range.start as isize);
    let b = hi.min(range.end as isize);
    if b <= a {
        0..0
    } else {
        a as usize..b as usize
    }
}

/// Filters the core pixels of `images` (`[acquisition, row, col]`), treating
/// `images` as the entire image.
pub(crate) fn filter_region(
    images: ArrayView3<Complex64>,
    master: usize,
    core_rows: Range<usize>,
    core_cols: Range<usize>,
    params: &NlParams,
) -> RegionOutput {
    let (n, h, w) = images.dim();
    let pairs = n - 1;
    let data = PixelData::new(&images, master);
    let s = params.search_radius as isize;
    let p = params.patch_radius as isize;
    let m_full = ((2 * p + 1) * (2 * p + 1)) as f64;
    let scale = params.h * pairs as f64;
    let (cr, cc) = (core_rows.len(), core_cols.len());
    let core_len = cr * cc;

    // rows/cols touched by the patches of core pixels
    let ext_r = clip(core_rows.start as isize - p, core_rows.end as isize + p, &(0..h));
    let ext_c = clip(core_cols.start as isize - p, core_cols.end as isize + p, &(0..w));
    let ew = ext_c.len();
    let mut dbuf = vec![0.0f64; ext_r.len() * ew];
    let mut hbuf = vec![0.0f64; ext_r.len() * cc];

    let side = (2 * s + 1) as usize;
    let displacements: Vec<(isize, isize)> = (-s..=s).flat_map(|dy| (-s..=s).map(move |dx| (dy, dx))).collect();
    let mut logw = vec![f64::NEG_INFINITY; displacements.len() * core_len];

    for (di, &(dy, dx)) in displacements.iter().enumerate() {
        if dy == 0 && dx == 0 {
            continue;
        }
        // x and x + d both inside the region
        let vr = clip(-dy, h as isize - dy, &(0..h));
        let vc = clip(-dx, w as isize - dx, &(0..w));
        let rr = clip(vr.start as isize, vr.end as isize, &ext_r);
        let rc = clip(vc.start as isize, vc.end as isize, &ext_c);
        if rr.is_empty() || rc.is_empty() {
            continue;
        }
        for r in rr.clone() {
            let row = (r - ext_r.start) * ew;
            let yr = (r as isize + dy) as usize;
            for c in rc.clone() {
                let yc = (c as isize + dx) as usize;
                dbuf[row + c - ext_c.start] = data.similarity(r * w + c, yr * w + yc);
            }
        }
        // horizontal patch sums at core columns
        for r in rr.clone() {
            let row = (r - ext_r.start) * ew;
            for (j, col) in core_cols.clone().enumerate() {
                let span = clip(col as isize - p, col as isize + p + 1, &rc);
                let mut acc = 0.0;
                for c in span {
                    acc += dbuf[row + c - ext_c.start];
                }
                hbuf[(r - ext_r.start) * cc + j] = acc;
            }
        }
        // vertical patch sums at core pixels whose candidate exists
        for (i, row) in core_rows.clone().enumerate() {
            if !vr.contains(&row) {
                continue;
            }
            let rspan = clip(row as isize - p, row as isize + p + 1, &rr);
            for (j, col) in core_cols.clone().enumerate() {
                if !vc.contains(&col) {
                    continue;
                }
                let ncols = clip(col as isize - p, col as isize + p + 1, &rc).len();
                let mut acc = 0.0;
                for r in rspan.clone() {
                    acc += hbuf[(r - ext_r.start) * cc + j];
                }
                let count = (rspan.len() * ncols) as f64;
                let lw = acc * (m_full / count) / scale;
                logw[di * core_len + i * cc + j] = if lw.is_finite() { lw } else { f64::NEG_INFINITY };
            }
        }
    }

    let mut out = RegionOutput {
        filtered: Array3::zeros((n, cr, cc)),
        psi: Array3::zeros((pairs, cr, cc)),
        mu: Array3::zeros((pairs, cr, cc)),
        sigma2: Array3::zeros((pairs, cr, cc)),
        enl: Array2::zeros((cr, cc)),
    };
    let mut acc_g = vec![Complex64::new(0.0, 0.0); n];
    let mut acc_pair = vec![WmleAccumulator::default(); pairs];
    let centre = (s as usize) * side + s as usize;
    for (i, row) in core_rows.clone().enumerate() {
        for (j, col) in core_cols.clone().enumerate() {
            let idx = i * cc + j;
            let peak = (0..displacements.len())
                .filter(|&di| di != centre)
                .map(|di| logw[di * core_len + idx])
                .fold(f64::NEG_INFINITY, f64::max);
            acc_g.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
            acc_pair.iter_mut().for_each(|a| *a = WmleAccumulator::default());
            let (mut sw, mut sw2) = (0.0, 0.0);
            for (di, &(dy, dx)) in displacements.iter().enumerate() {
                let wt = if di == centre {
                    1.0
                } else if peak.is_finite() {
                    (logw[di * core_len + idx] - peak).exp()
                } else {
                    0.0
                };
                if wt == 0.0 {
                    continue;
                }
                let (qr, qc) = ((row as isize + dy) as usize, (col as isize + dx) as usize);
                let y = qr * w + qc;
                sw += wt;
                sw2 += wt * wt;
                for (a, t) in acc_g.iter_mut().enumerate() {
                    *t += (images[[a, qr, qc]] - images[[a, row, col]]) * wt;
                }
                for (k, acc) in acc_pair.iter_mut().enumerate() {
                    let q = y * pairs + k;
                    acc.weight += wt;
                    acc.cross += data.z[q].conj() * wt;
                    acc.amp += wt * data.amp[q];
                    acc.power += wt * data.power[q];
                }
            }
            for (a, t) in acc_g.iter().enumerate() {
                out.filtered[[a, i, j]] = images[[a, row, col]] + t / sw;
            }
            for (k, acc) in acc_pair.iter().enumerate() {
                let est = acc.finish();
                out.psi[[k, i, j]] = est.psi;
                out.mu[[k, i, j]] = est.mu;
                out.sigma2[[k, i, j]] = est.sigma2;
            }
            out.enl[[i, j]] = sw * sw / sw2;
        }
    }
    out
}
