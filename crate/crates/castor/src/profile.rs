//! Dilated, padded, boundary-scaled distance profiles.
//!
//! This is the numeric kernel: sliding a dilated shapelet over a
//! (conceptually zero-padded) series and recording the Euclidean distance
//! at every start position. Padding keeps the profile the same length as
//! the series; windows that overlap the padding are compared only on their
//! in-bounds values and the distance is rescaled by `l / c`, where `c`
//! counts the in-bounds positions. Optionally the comparison happens under
//! z-normalization of both shapelet and window.
//!
//! Two implementations ship side by side: `distance_profile` (index
//! arithmetic, no per-window allocation) and `distance_profile_oracle`
//! (literal definition over a materialized padded series). The oracle is
//! deliberately naive and exists so tests can cross-check the fast path.

use crate::dataset::TimeSeries;
use crate::error::{CastorError, Result};

/// Windows (and shapelets) whose value spread falls below this are treated
/// as constant and normalize to the zero vector.
pub const ZNORM_SPREAD_EPS: f64 = 1e-13;

/// A fixed pattern compared against series windows at stride `dilation`.
///
/// When `normalized` is set the stored values are kept z-normalized
/// (mean 0, population std 1) and windows are z-normalized on the fly
/// before the distance is taken.
#[derive(Debug, Clone, PartialEq)]
pub struct DilatedShapelet {
    values: Vec<f64>,
    dilation: usize,
    normalized: bool,
}

impl DilatedShapelet {
    /// Builds a shapelet from raw values, z-normalizing them first when
    /// `normalized` is set. Length must be odd and at least 3 so padding
    /// stays symmetric.
    pub fn new(values: Vec<f64>, dilation: usize, normalized: bool) -> Result<Self> {
        Self::validate_shape(&values, dilation)?;
        let values = if normalized { znormalize(&values) } else { values };
        Ok(Self {
            values,
            dilation,
            normalized,
        })
    }

    /// Rebuilds a shapelet from already-stored values (model load path).
    /// Normalized values are checked, not re-normalized, so round-trips
    /// preserve every bit.
    pub fn from_stored(values: Vec<f64>, dilation: usize, normalized: bool) -> Result<Self> {
        Self::validate_shape(&values, dilation)?;
        if normalized {
            let (mean, std) = moments(&values);
            let ok = if std < ZNORM_SPREAD_EPS {
                values.iter().all(|&v| v == 0.0)
            } else {
                mean.abs() <= 1e-9 && (std - 1.0).abs() <= 1e-9
            };
            if !ok {
                return Err(CastorError::InvalidConfig(
                    "stored shapelet marked normalized but values are not z-normalized".into(),
                ));
            }
        }
        Ok(Self {
            values,
            dilation,
            normalized,
        })
    }

    fn validate_shape(values: &[f64], dilation: usize) -> Result<()> {
        let l = values.len();
        if l < 3 || l % 2 == 0 {
            return Err(CastorError::InvalidShapeletLength(l));
        }
        if dilation == 0 {
            return Err(CastorError::InvalidConfig(
                "shapelet dilation must be at least 1".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CastorError::InvalidConfig(
                "shapelet values must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Span covered in the series: `(l - 1) * d + 1`.
    pub fn effective_len(&self) -> usize {
        (self.values.len() - 1) * self.dilation + 1
    }
}

/// Distances between one shapelet and every padded window of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceProfile {
    distances: Vec<f64>,
}

impl DistanceProfile {
    pub fn values(&self) -> &[f64] {
        &self.distances
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.distances
    }
}

/// Population-moment z-normalization. Near-constant input (population std
/// below [`ZNORM_SPREAD_EPS`]) maps to the zero vector.
pub fn znormalize(values: &[f64]) -> Vec<f64> {
    let (mean, std) = moments(values);
    if std < ZNORM_SPREAD_EPS {
        return vec![0.0; values.len()];
    }
    values.iter().map(|&v| (v - mean) / std).collect()
}

/// Two-pass population mean and standard deviation. The two-pass form is
/// what makes exactly-constant input yield std exactly 0.
fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Padding that keeps the profile the same length as the series:
/// `p = floor(((l - 1) * d + 1) / 2)` for odd `l`.
pub fn standard_padding(length: usize, dilation: usize) -> Result<usize> {
    if length < 3 || length % 2 == 0 {
        return Err(CastorError::InvalidShapeletLength(length));
    }
    if dilation == 0 {
        return Err(CastorError::InvalidConfig(
            "dilation must be at least 1".into(),
        ));
    }
    Ok(((length - 1) * dilation + 1) / 2)
}

/// Reads `length` values from the series at stride `dilation`, starting at
/// 1-based position `start`.
pub fn extract_dilated_subsequence(
    series: &TimeSeries,
    dilation: usize,
    start: usize,
    length: usize,
) -> Result<Vec<f64>> {
    let m = series.len();
    if length == 0 || dilation == 0 || start < 1 || start + (length - 1) * dilation > m {
        return Err(CastorError::SubsequenceOutOfBounds {
            start,
            dilation,
            length,
            series_len: m,
        });
    }
    let values = series.values();
    Ok((0..length)
        .map(|q| values[start - 1 + q * dilation])
        .collect())
}

fn profile_len(shapelet: &DilatedShapelet, m: usize, padding: usize) -> Result<usize> {
    let span = shapelet.effective_len();
    let padded_len = m + 2 * padding;
    if span > padded_len {
        return Err(CastorError::ShapeletTooLong {
            effective_len: span,
            padded_len,
        });
    }
    Ok(padded_len - span + 1)
}

/// Distance profile of `shapelet` against `series` under `padding` zeros on
/// each side.
///
/// For every start position the window is gathered at stride `d`; only the
/// `c` positions that land inside the unpadded region contribute to the
/// Euclidean distance, which is then scaled by `l / c`. Normalized
/// shapelets compare against the z-normalized in-bounds window values.
/// With [`standard_padding`] the output has exactly the series length.
pub fn distance_profile(
    shapelet: &DilatedShapelet,
    series: &TimeSeries,
    padding: usize,
) -> Result<DistanceProfile> {
    let out_len = profile_len(shapelet, series.len(), padding)?;
    let mut distances = vec![0.0; out_len];
    fill_distance_profile(shapelet, series.values(), padding, &mut distances)?;
    Ok(DistanceProfile { distances })
}

/// Fast-path worker behind [`distance_profile`]: writes the profile into a
/// caller-provided row, never touching a materialized padded series.
pub(crate) fn fill_distance_profile(
    shapelet: &DilatedShapelet,
    series: &[f64],
    padding: usize,
    out: &mut [f64],
) -> Result<()> {
    let m = series.len();
    let l = shapelet.len();
    let d = shapelet.dilation();
    let p = padding;
    debug_assert_eq!(out.len(), profile_len(shapelet, m, p)?);

    let sv = shapelet.values();
    let scale_l = l as f64;

    for (idx, slot) in out.iter_mut().enumerate() {
        let s = idx + 1; // 1-based start in the padded series
        // In-bounds window offsets q satisfy p < s + q*d <= m + p.
        let lo_num = p as i64 + 1 - s as i64;
        let q_lo = if lo_num <= 0 {
            0
        } else {
            ((lo_num + d as i64 - 1) / d as i64) as usize
        };
        let hi_num = (m + p) as i64 - s as i64;
        if hi_num < 0 || q_lo >= l {
            return Err(CastorError::InternalPaddingError { position: s });
        }
        let q_hi = (hi_num as usize / d).min(l - 1);
        if q_hi < q_lo {
            return Err(CastorError::InternalPaddingError { position: s });
        }
        let c = q_hi - q_lo + 1;
        // First in-bounds series index (0-based): (s + q_lo*d) - p - 1.
        let base = s + q_lo * d - p - 1;

        let sq_sum = if shapelet.is_normalized() {
            let cf = c as f64;
            let mut sum = 0.0;
            for q in 0..c {
                sum += series[base + q * d];
            }
            let mean = sum / cf;
            let mut var_acc = 0.0;
            for q in 0..c {
                var_acc += (series[base + q * d] - mean).powi(2);
            }
            let std = (var_acc / cf).sqrt();
            let mut acc = 0.0;
            if std < ZNORM_SPREAD_EPS {
                for q in 0..c {
                    acc += sv[q_lo + q].powi(2);
                }
            } else {
                for q in 0..c {
                    let w = (series[base + q * d] - mean) / std;
                    acc += (w - sv[q_lo + q]).powi(2);
                }
            }
            acc
        } else {
            let mut acc = 0.0;
            for q in 0..c {
                let diff = series[base + q * d] - sv[q_lo + q];
                acc += diff * diff;
            }
            acc
        };

        *slot = scale_l / c as f64 * sq_sum.sqrt();
    }
    Ok(())
}

/// Literal-definition twin of [`distance_profile`]: materializes the padded
/// series, walks every window position with explicit loops, and applies the
/// same in-bounds masking, normalization, and `l / c` scaling. Slow on
/// purpose; used as ground truth when testing the fast path.
pub fn distance_profile_oracle(
    shapelet: &DilatedShapelet,
    series: &TimeSeries,
    padding: usize,
) -> Result<DistanceProfile> {
    let m = series.len();
    let out_len = profile_len(shapelet, m, padding)?;
    let l = shapelet.len();
    let d = shapelet.dilation();

    let mut padded = vec![0.0; m + 2 * padding];
    padded[padding..padding + m].copy_from_slice(series.values());

    let mut distances = Vec::with_capacity(out_len);
    for s in 1..=out_len {
        // Gather the window and mark which positions are real data.
        let mut window = Vec::with_capacity(l);
        let mut in_bounds = Vec::with_capacity(l);
        for q in 0..l {
            let j = s + q * d; // 1-based position in the padded series
            window.push(padded[j - 1]);
            in_bounds.push(j > padding && j <= m + padding);
        }
        let c = in_bounds.iter().filter(|&&b| b).count();
        if c == 0 {
            return Err(CastorError::InternalPaddingError { position: s });
        }

        let mut effective = window.clone();
        if shapelet.is_normalized() {
            let kept: Vec<f64> = (0..l)
                .filter(|&q| in_bounds[q])
                .map(|q| window[q])
                .collect();
            let normalized = znormalize(&kept);
            let mut next = 0;
            for q in 0..l {
                if in_bounds[q] {
                    effective[q] = normalized[next];
                    next += 1;
                }
            }
        }

        let mut acc = 0.0;
        for q in 0..l {
            if in_bounds[q] {
                let diff = effective[q] - shapelet.values()[q];
                acc += diff * diff;
            }
        }
        distances.push(l as f64 / c as f64 * acc.sqrt());
    }
    Ok(DistanceProfile { distances })
}
