//! Evaluation against ground truth: region height statistics, profile
//! slices, double-scatterer separation histograms and detection rates.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Result, TomoError};
use crate::simulate::SceneSpec;
use crate::slimmer::{ImageInversion, ScattererSet};

/// A named set of pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub name: String,
    pub mask: Array2<bool>,
}

impl RegionMask {
    pub fn new(name: impl Into<String>, mask: Array2<bool>) -> Self {
        Self { name: name.into(), mask }
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Removes every pixel closer than `e + 1` pixels (Chebyshev distance)
    /// to a pixel outside the region; the image exterior counts as outside.
    pub fn eroded(&self, e: usize) -> RegionMask {
        if e == 0 {
            return self.clone();
        }
        let (rows, cols) = self.mask.dim();
        // separable min filter: rows first, then columns
        let mut horiz = Array2::from_elem((rows, cols), false);
        for r in 0..rows {
            for c in 0..cols {
                horiz[[r, c]] = c >= e && c + e < cols && (c - e..=c + e).all(|cc| self.mask[[r, cc]]);
            }
        }
        let mut out = Array2::from_elem((rows, cols), false);
        for r in 0..rows {
            for c in 0..cols {
                out[[r, c]] = r >= e && r + e < rows && (r - e..=r + e).all(|rr| horiz[[rr, c]]);
            }
        }
        RegionMask::new(self.name.clone(), out)
    }
}

/// One region per building: rectangles that overlap or share an edge and
/// have equal height are merged. Regions are named `shape1`, `shape2`, …
/// in order of their first rectangle. Later rectangles overwrite earlier
/// ones, exactly as when the scene is painted.
pub fn scene_regions(scene: &SceneSpec) -> Result<Vec<RegionMask>> {
    scene.validate()?;
    let rects = &scene.rectangles;
    // union-find over rectangles
    let mut parent: Vec<usize> = (0..rects.len()).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut i = i;
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let touches = |a: usize, b: usize| {
        let (x, y) = (&rects[a], &rects[b]);
        let rows = x.origin_row <= y.origin_row + y.rows && y.origin_row <= x.origin_row + x.rows;
        let cols = x.origin_col <= y.origin_col + y.cols && y.origin_col <= x.origin_col + x.cols;
        // sharing only a corner does not count
        let corner = (x.origin_row + x.rows == y.origin_row || y.origin_row + y.rows == x.origin_row)
            && (x.origin_col + x.cols == y.origin_col || y.origin_col + y.cols == x.origin_col);
        rows && cols && !corner && x.height == y.height
    };
    for a in 0..rects.len() {
        for b in a + 1..rects.len() {
            if touches(a, b) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut label = Array2::from_elem((scene.height, scene.width), usize::MAX);
    for (i, r) in rects.iter().enumerate() {
        let root = find(&mut parent, i);
        label
            .slice_mut(ndarray::s![r.origin_row..r.origin_row + r.rows, r.origin_col..r.origin_col + r.cols])
            .fill(root);
    }
    let mut roots: Vec<usize> = (0..rects.len()).map(|i| find(&mut parent, i)).collect();
    roots.dedup();
    let mut seen = Vec::new();
    for r in roots {
        if !seen.contains(&r) {
            seen.push(r);
        }
    }
    Ok(seen
        .iter()
        .enumerate()
        .map(|(i, &root)| RegionMask::new(format!("shape{}", i + 1), label.mapv(|l| l == root)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeightStats {
    pub region: String,
    /// Mean ground-truth height over the evaluated pixels [m].
    pub truth: f64,
    pub mean: f64,
    /// Sample standard deviation [m].
    pub std: f64,
    /// Mean of estimate − truth [m].
    pub mean_error: f64,
    /// Detected pixels used for the statistics.
    pub count: usize,
    /// Detected pixels over pixels in the eroded region.
    pub detection_rate: f64,
}

fn check_dims(a: (usize, usize), b: (usize, usize), what: &str) -> Result<()> {
    if a != b {
        return Err(TomoError::DimensionMismatch(format!(
            "{what}: {}×{} vs {}×{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

/// Statistics of a height map (NaN = not detected) over each region after
/// erosion by `erosion` pixels. Only detected pixels enter mean and std.
pub fn height_stats(
    height: &Array2<f64>,
    truth: &Array2<f64>,
    masks: &[RegionMask],
    erosion: usize,
) -> Result<Vec<HeightStats>> {
    check_dims(height.dim(), truth.dim(), "height vs truth")?;
    masks
        .iter()
        .map(|m| {
            check_dims(height.dim(), m.mask.dim(), &format!("mask {}", m.name))?;
            let region = m.eroded(erosion);
            let total = region.count();
            if total == 0 {
                return Err(TomoError::EmptyRegion(format!("{} is empty after erosion {erosion}", m.name)));
            }
            let pairs: Vec<(f64, f64)> = region
                .mask
                .indexed_iter()
                .filter(|&(idx, &inside)| inside && height[idx].is_finite())
                .map(|(idx, _)| (height[idx], truth[idx]))
                .collect();
            let count = pairs.len();
            if count == 0 {
                return Err(TomoError::EmptyRegion(format!("no detected pixels in {}", m.name)));
            }
            let n = count as f64;
            let mean = pairs.iter().map(|p| p.0).sum::<f64>() / n;
            let truth_mean = pairs.iter().map(|p| p.1).sum::<f64>() / n;
            let mean_error = pairs.iter().map(|p| p.0 - p.1).sum::<f64>() / n;
            let std = if count > 1 {
                (pairs.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            Ok(HeightStats {
                region: m.name.clone(),
                truth: truth_mean,
                mean,
                std,
                mean_error,
                count,
                detection_rate: n / total as f64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceAxis {
    Row,
    Col,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePoint {
    /// Column index for a row slice, row index for a column slice.
    pub position: usize,
    pub height: f64,
    pub truth: f64,
}

/// One row or column of the estimate next to the truth.
pub fn profile_slice(height: &Array2<f64>, truth: &Array2<f64>, axis: SliceAxis, index: usize) -> Result<Vec<ProfilePoint>> {
    check_dims(height.dim(), truth.dim(), "height vs truth")?;
    let (rows, cols) = height.dim();
    let (limit, len) = match axis {
        SliceAxis::Row => (rows, cols),
        SliceAxis::Col => (cols, rows),
    };
    if index >= limit {
        return Err(TomoError::OutOfRange(format!("{axis:?} {index} outside 0..{limit}")));
    }
    Ok((0..len)
        .map(|position| {
            let idx = match axis {
                SliceAxis::Row => [index, position],
                SliceAxis::Col => [position, index],
            };
            ProfilePoint {
                position,
                height: height[idx],
                truth: truth[idx],
            }
        })
        .collect())
}

/// κ = s / ρ_s.
pub fn normalized_distance(s: f64, rho_s: f64) -> Result<f64> {
    if !(rho_s > 0.0 && rho_s.is_finite()) {
        return Err(TomoError::Domain(format!("rayleigh resolution must be positive, got {rho_s}")));
    }
    Ok(s / rho_s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationHistogram {
    pub bin_width: f64,
    /// `counts[i]` covers κ ∈ [i·w, (i+1)·w).
    pub counts: Vec<usize>,
    /// Pixels with exactly two scatterers.
    pub total: usize,
    /// Share with κ < 1 (super-resolution regime).
    pub sr_fraction: f64,
    /// Share with κ ≥ 1.
    pub non_sr_fraction: f64,
}

impl SeparationHistogram {
    /// Lower edge of bin `i`.
    pub fn bin_start(&self, i: usize) -> f64 {
        i as f64 * self.bin_width
    }
}

/// Histogram of `|s_top − s_bottom| / ρ_s` over all pixels with K = 2.
pub fn separation_histogram(pixels: &[ScattererSet], rho_s: f64, bin_width: f64) -> Result<SeparationHistogram> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(TomoError::InvalidParameter(format!("bin width must be positive, got {bin_width}")));
    }
    let mut counts: Vec<usize> = Vec::new();
    let (mut total, mut sr) = (0usize, 0usize);
    for set in pixels.iter().filter(|s| s.order() == 2) {
        let (top, bottom) = (set.top().expect("order 2"), set.bottom().expect("order 2"));
        let kappa = normalized_distance((top.elevation - bottom.elevation).abs(), rho_s)?;
        let bin = (kappa / bin_width).floor() as usize;
        if counts.len() <= bin {
            counts.resize(bin + 1, 0);
        }
        counts[bin] += 1;
        total += 1;
        if kappa < 1.0 {
            sr += 1;
        }
    }
    let (sr_fraction, non_sr_fraction) = if total > 0 {
        (sr as f64 / total as f64, (total - sr) as f64 / total as f64)
    } else {
        (0.0, 0.0)
    };
    Ok(SeparationHistogram {
        bin_width,
        counts,
        total,
        sr_fraction,
        non_sr_fraction,
    })
}

/// True two-layer content: where it applies and the layer elevations [m].
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleTruth {
    pub mask: Array2<bool>,
    pub top: Array2<f64>,
    pub bottom: Array2<f64>,
}

/// Fraction of true double pixels where exactly two scatterers were found
/// and each lies within ρ_s/2 of the corresponding true elevation.
pub fn detection_rate(inversion: &ImageInversion, truth: &DoubleTruth, rho_s: f64) -> Result<f64> {
    let dim = (inversion.rows, inversion.cols);
    check_dims(dim, truth.mask.dim(), "inversion vs mask")?;
    check_dims(dim, truth.top.dim(), "inversion vs top")?;
    check_dims(dim, truth.bottom.dim(), "inversion vs bottom")?;
    if !(rho_s > 0.0 && rho_s.is_finite()) {
        return Err(TomoError::Domain(format!("rayleigh resolution must be positive, got {rho_s}")));
    }
    let (mut total, mut hits) = (0usize, 0usize);
    for ((r, c), &inside) in truth.mask.indexed_iter() {
        if !inside {
            continue;
        }
        total += 1;
        let set = inversion.pixel(r, c);
        if set.order() != 2 {
            continue;
        }
        let (hi, lo) = (set.top().expect("order 2").elevation, set.bottom().expect("order 2").elevation);
        let (t_hi, t_lo) = {
            let (a, b) = (truth.top[[r, c]], truth.bottom[[r, c]]);
            (a.max(b), a.min(b))
        };
        if (hi - t_hi).abs() <= rho_s / 2.0 && (lo - t_lo).abs() <= rho_s / 2.0 {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(TomoError::EmptyRegion("double-scatterer truth mask is empty".into()));
    }
    Ok(hits as f64 / total as f64)
}
