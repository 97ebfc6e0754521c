use std::ops::Range;

use ndarray::ArrayView2;
use num_complex::Complex64;

use crate::error::{Result, TomoError};
use crate::linalg;

const POWER_TOL: f64 = 1e-9;
const POWER_MAX_ITER: usize = 100_000;

/// Lipschitz constant of the block gradient: `2·σ_max(R_block)²`.
pub fn lipschitz_block(matrix: ArrayView2<Complex64>, block: Range<usize>) -> Result<f64> {
    let (rows, cols) = matrix.dim();
    if block.is_empty() || block.end > cols {
        return Err(TomoError::InvalidParameter(format!(
            "block {block:?} is empty or exceeds {cols} columns"
        )));
    }
    let sub: Vec<Complex64> = block
        .flat_map(|l| matrix.column(l).to_vec())
        .collect();
    Ok(2.0 * linalg::spectral_norm_sqr(&sub, rows, POWER_TOL, POWER_MAX_ITER)?)
}

/// Block sampling probabilities `P_j = L_j / Σ L`.
pub fn block_probabilities(lipschitz: &[f64]) -> Result<Vec<f64>> {
    if lipschitz.is_empty() {
        return Err(TomoError::InvalidParameter("no blocks".into()));
    }
    if let Some(bad) = lipschitz.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
        return Err(TomoError::InvalidParameter(format!(
            "Lipschitz constants must be positive, got {bad}"
        )));
    }
    let total: f64 = lipschitz.iter().sum();
    Ok(lipschitz.iter().map(|l| l / total).collect())
}

/// Contiguous column blocks of a matrix with their Lipschitz constants and
/// sampling distribution. Depends only on the matrix, so one partition can be
/// shared by every pixel of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    ranges: Vec<Range<usize>>,
    lipschitz: Vec<f64>,
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
}

impl BlockPartition {
    /// Splits `cols` columns into `count` contiguous blocks whose sizes differ
    /// by at most one.
    pub fn new(matrix: &[Complex64], rows: usize, count: usize) -> Result<Self> {
        let cols = matrix.len() / rows.max(1);
        if count == 0 || count > cols {
            return Err(TomoError::InvalidParameter(format!(
                "block count {count} must lie in 1..={cols}"
            )));
        }
        let base = cols / count;
        let extra = cols % count;
        let mut ranges = Vec::with_capacity(count);
        let mut start = 0;
        for j in 0..count {
            let len = base + usize::from(j < extra);
            ranges.push(start..start + len);
            start += len;
        }
        let lipschitz = ranges
            .iter()
            .map(|r| {
                let sub = &matrix[r.start * rows..r.end * rows];
                linalg::spectral_norm_sqr(sub, rows, POWER_TOL, POWER_MAX_ITER).map(|s| 2.0 * s)
            })
            .collect::<Result<Vec<f64>>>()?;
        let probabilities = block_probabilities(&lipschitz)?;
        let mut acc = 0.0;
        let cumulative = probabilities
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self {
            ranges,
            lipschitz,
            probabilities,
            cumulative,
        })
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub(crate) fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Number of columns covered.
    pub fn cols(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.end)
    }
}
