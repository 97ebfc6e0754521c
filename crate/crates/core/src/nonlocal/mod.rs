//! Non-local estimation on interferometric stacks.
//!
//! Patch-similarity weights come from the joint likelihood of each
//! master–slave pair under 3×3 pilot estimates; log-likelihoods are summed
//! over all pairs and patch pixels, divided by `h` times the number of
//! pairs, and exponentiated after
//! subtracting the best non-self candidate, which also becomes the self
//! weight. The same weights produce
//!
//! * the filtered stack, the weighted mean of every acquisition,
//! * a per-pair weighted MLE of phase, coherence and variance,
//! * the equivalent number of looks `(Σw)² / Σw²`.
//!
//! Tiles are processed independently from their halo and give results that
//! are bit-identical to a single whole-image pass.

mod kernel;
mod likelihood;

use std::ops::Range;

use ndarray::{s, Array2, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};
use crate::simulate::InsarStack;

pub use likelihood::{
    equivalent_looks, pair_likelihood, pair_log_likelihood, patch_log_weight, patch_weight,
    sample_similarity, wmle, PairParams, PatchSample,
};

/// Upper bound on pilot coherence; keeps `1 − μ²` away from zero on
/// noiseless or amplitude-matched data.
pub const MU_MAX: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NlParams {
    /// Patch is `(2·patch_radius + 1)²` pixels.
    pub patch_radius: usize,
    /// Search window is `(2·search_radius + 1)²` pixels.
    pub search_radius: usize,
    /// Per-pair bandwidth: the log-likelihood summed over pairs and patch
    /// pixels is divided by `h·(N − 1)`.
    pub h: f64,
}

impl Default for NlParams {
    fn default() -> Self {
        Self {
            patch_radius: 3,
            search_radius: 10,
            h: 48.0,
        }
    }
}

impl NlParams {
    pub fn validate(&self) -> Result<()> {
        if self.patch_radius < 1 {
            return Err(TomoError::InvalidParameter("patch radius must be ≥ 1".into()));
        }
        if self.search_radius < self.patch_radius {
            return Err(TomoError::InvalidParameter(format!(
                "search radius {} smaller than patch radius {}",
                self.search_radius, self.patch_radius
            )));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(TomoError::InvalidParameter(format!("h must be positive, got {}", self.h)));
        }
        Ok(())
    }

    /// Pixels of context a tile needs around its core.
    pub fn halo(&self) -> usize {
        self.search_radius + self.patch_radius + 1
    }
}

/// Weighted-MLE estimates per master–slave pair. Pair `k` couples the master
/// with the k-th non-master acquisition in stack order.
#[derive(Debug, Clone, PartialEq)]
pub struct WmleField {
    /// `[pair, row, col]`, radians in (−π, π].
    pub psi: Array3<f64>,
    /// `[pair, row, col]`, in [0, 1].
    pub mu: Array3<f64>,
    /// `[pair, row, col]`.
    pub sigma2: Array3<f64>,
    /// `[row, col]`, ≥ 1.
    pub enl: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlOutput {
    pub filtered: InsarStack,
    pub wmle: WmleField,
}

/// A rectangular piece of the image: the core it produces and the halo it
/// reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    pub core_rows: Range<usize>,
    pub core_cols: Range<usize>,
    pub halo_rows: Range<usize>,
    pub halo_cols: Range<usize>,
}

/// Splits the image into `tile_size`-square cores (the last row/column of
/// tiles may be smaller) with halos of [`NlParams::halo`] pixels, clipped at
/// the image border.
pub fn partition_tiles(rows: usize, cols: usize, params: &NlParams, tile_size: usize) -> Result<Vec<Tile>> {
    if tile_size == 0 {
        return Err(TomoError::InvalidParameter("tile size must be ≥ 1".into()));
    }
    let halo = params.halo();
    let mut tiles = Vec::new();
    for r0 in (0..rows).step_by(tile_size) {
        let r1 = (r0 + tile_size).min(rows);
        for c0 in (0..cols).step_by(tile_size) {
            let c1 = (c0 + tile_size).min(cols);
            tiles.push(Tile {
                core_rows: r0..r1,
                core_cols: c0..c1,
                halo_rows: r0.saturating_sub(halo)..(r1 + halo).min(rows),
                halo_cols: c0.saturating_sub(halo)..(c1 + halo).min(cols),
            });
        }
    }
    Ok(tiles)
}

/// Filters a stack in a single whole-image pass.
pub fn filter_stack(stack: &InsarStack, params: &NlParams) -> Result<NlOutput> {
    let size = stack.rows().max(stack.cols()).max(1);
    filter_stack_tiled(stack, params, size, None)
}

/// Filters a stack tile by tile. `threads` sets the worker count (`None`:
/// the current rayon pool). The output does not depend on `tile_size` or
/// `threads`.
pub fn filter_stack_tiled(
    stack: &InsarStack,
    params: &NlParams,
    tile_size: usize,
    threads: Option<usize>,
) -> Result<NlOutput> {
    params.validate()?;
    let (n, rows, cols) = stack.images.dim();
    if n < 2 {
        return Err(TomoError::InvalidParameter("non-local filtering needs at least 2 acquisitions".into()));
    }
    let tiles = partition_tiles(rows, cols, params, tile_size)?;
    let master = stack.master_index;
    let run = || {
        tiles
            .par_iter()
            .map(|t| {
                let view = stack.images.slice(s![.., t.halo_rows.clone(), t.halo_cols.clone()]);
                let core_r = t.core_rows.start - t.halo_rows.start..t.core_rows.end - t.halo_rows.start;
                let core_c = t.core_cols.start - t.halo_cols.start..t.core_cols.end - t.halo_cols.start;
                kernel::filter_region(view, master, core_r, core_c, params)
            })
            .collect::<Vec<_>>()
    };
    let results = match threads {
        Some(count) => rayon::ThreadPoolBuilder::new()
            .num_threads(count.max(1))
            .build()
            .map_err(|e| TomoError::InvalidParameter(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let pairs = n - 1;
    let mut images = Array3::zeros((n, rows, cols));
    let mut field = WmleField {
        psi: Array3::zeros((pairs, rows, cols)),
        mu: Array3::zeros((pairs, rows, cols)),
        sigma2: Array3::zeros((pairs, rows, cols)),
        enl: Array2::zeros((rows, cols)),
    };
    for (t, out) in tiles.iter().zip(results) {
        let (r, c) = (t.core_rows.clone(), t.core_cols.clone());
        images.slice_mut(s![.., r.clone(), c.clone()]).assign(&out.filtered);
        field.psi.slice_mut(s![.., r.clone(), c.clone()]).assign(&out.psi);
        field.mu.slice_mut(s![.., r.clone(), c.clone()]).assign(&out.mu);
        field.sigma2.slice_mut(s![.., r.clone(), c.clone()]).assign(&out.sigma2);
        field.enl.slice_mut(s![r, c]).assign(&out.enl);
    }
    Ok(NlOutput {
        filtered: InsarStack::new(stack.geometry.clone(), images, master)?,
        wmle: field,
    })
}

/// Normalised weights of every search-window candidate of one pixel,
/// `[dy + S, dx + S]`, computed sample by sample with [`patch_log_weight`].
/// Candidates outside the image have weight 0. Slow; meant for inspection
/// and testing.
pub fn pixel_weights(stack: &InsarStack, params: &NlParams, row: usize, col: usize) -> Result<Array2<f64>> {
    params.validate()?;
    let (n, rows, cols) = stack.images.dim();
    if row >= rows || col >= cols {
        return Err(TomoError::OutOfRange(format!("pixel ({row}, {col}) outside {rows}×{cols}")));
    }
    if n < 2 {
        return Err(TomoError::InvalidParameter("need at least 2 acquisitions".into()));
    }
    let view = stack.images.view();
    let master = stack.master_index;
    let slaves: Vec<usize> = (0..n).filter(|&k| k != master).collect();
    let samples = |r: usize, c: usize| -> Vec<PatchSample> {
        slaves
            .iter()
            .map(|&k| PatchSample {
                g1: view[[master, r, c]],
                g2: view[[k, r, c]],
                pilot: kernel::pilot_at(&view, master, k, r, c),
            })
            .collect()
    };
    let (s, p) = (params.search_radius as isize, params.patch_radius as isize);
    let side = (2 * s + 1) as usize;
    let m_full = ((2 * p + 1) * (2 * p + 1)) as f64;
    let inside = |r: isize, c: isize| r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols;
    let mut logw = Array2::from_elem((side, side), f64::NEG_INFINITY);
    for dy in -s..=s {
        for dx in -s..=s {
            let (qr, qc) = (row as isize + dy, col as isize + dx);
            if (dy == 0 && dx == 0) || !inside(qr, qc) {
                continue;
            }
            let mut centre = Vec::new();
            let mut cand = Vec::new();
            for oy in -p..=p {
                for ox in -p..=p {
                    let (ar, ac) = (row as isize + oy, col as isize + ox);
                    let (br, bc) = (qr + oy, qc + ox);
                    if inside(ar, ac) && inside(br, bc) {
                        centre.push(samples(ar as usize, ac as usize));
                        cand.push(samples(br as usize, bc as usize));
                    }
                }
            }
            let count = centre.len() as f64;
            let flat_a: Vec<PatchSample> = centre.into_iter().flatten().collect();
            let flat_b: Vec<PatchSample> = cand.into_iter().flatten().collect();
            let lw = patch_log_weight(&flat_a, &flat_b, params.h * (n - 1) as f64)? * (m_full / count);
            logw[[(dy + s) as usize, (dx + s) as usize]] = if lw.is_finite() { lw } else { f64::NEG_INFINITY };
        }
    }
    let peak = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut weights = logw.mapv(|l| if peak.is_finite() { (l - peak).exp() } else { 0.0 });
    weights[[s as usize, s as usize]] = 1.0;
    Ok(weights)
}

#[cfg(test)]
mod tests;
