//! Feature extraction: distance-profile blocks and competing statistics.
//!
//! For every (group, exponent) the k shapelets of the group are slid over
//! a series, giving a k x m block of distances. Per time step the
//! shapelets compete: the one with the smallest distance scores a min
//! point, the one with the largest scores a max point (hard = count 1,
//! soft = accumulate the winning distance), and occurrence counts time
//! steps below each shapelet's threshold. Flattened over representations,
//! groups, and exponents this yields the fixed-length feature vector.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::parallel::prelude::*;
use ndarray::{Array2, Axis};

use crate::dataset::{first_order_difference, TimeSeries};
use crate::error::{CastorError, Result};
use crate::params::{AggregateMode, CastorParams, OccurrenceMode, Representation};
use crate::profile::{fill_distance_profile, standard_padding, DilatedShapelet, ZNORM_SPREAD_EPS};

/// Distances of one group's k shapelets against every window of one
/// series: row j is the distance profile of shapelet j.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupProfileBlock {
    data: Array2<f64>,
}

impl GroupProfileBlock {
    /// Computes the block for one (group, exponent) row of shapelets, each
    /// under its own standard padding. All rows must share one profile
    /// length, which holds whenever they share length and dilation.
    pub fn compute(shapelets: &[DilatedShapelet], series: &TimeSeries) -> Result<Self> {
        if shapelets.is_empty() {
            return Err(CastorError::InvalidConfig(
                "profile block needs at least one shapelet".into(),
            ));
        }
        let mut block = Self {
            data: Array2::zeros((shapelets.len(), series.len())),
        };
        block.fill(shapelets, series.values())?;
        Ok(block)
    }

    /// Wraps a literal distance block (row-major, k x o).
    pub fn from_array(data: Array2<f64>) -> Self {
        Self { data }
    }

    /// Refills the block in place; shapes must match.
    ///
    /// When all rows share one length and dilation (the normal case for a
    /// group) the window moments and z-normalized window are computed once
    /// per time step and reused by every shapelet, which keeps the result
    /// bit-identical to the per-shapelet path while skipping most of its
    /// redundant arithmetic.
    pub(crate) fn fill(&mut self, shapelets: &[DilatedShapelet], series: &[f64]) -> Result<()> {
        debug_assert_eq!(self.data.nrows(), shapelets.len());
        let Some(first) = shapelets.first() else {
            return Ok(());
        };
        let l = first.len();
        let d = first.dilation();
        if shapelets
            .iter()
            .any(|s| s.len() != l || s.dilation() != d)
        {
            for (shapelet, mut row) in shapelets.iter().zip(self.data.rows_mut()) {
                let padding = standard_padding(shapelet.len(), shapelet.dilation())?;
                let row = row.as_slice_mut().expect("row-major block row");
                fill_distance_profile(shapelet, series, padding, row)?;
            }
            return Ok(());
        }
        self.fill_uniform(shapelets, series, l, d)
    }

    fn fill_uniform(
        &mut self,
        shapelets: &[DilatedShapelet],
        series: &[f64],
        l: usize,
        d: usize,
    ) -> Result<()> {
        let p = standard_padding(l, d)?;
        let m = series.len();
        let span = (l - 1) * d + 1;
        let padded = m + 2 * p;
        if span > padded {
            return Err(CastorError::ShapeletTooLong {
                effective_len: span,
                padded_len: padded,
            });
        }
        let out_len = padded - span + 1;
        debug_assert_eq!(self.data.ncols(), out_len);
        let any_norm = shapelets.iter().any(|s| s.is_normalized());
        let scale_l = l as f64;
        // positions whose window lies fully inside the unpadded series
        let interior_lo = p;
        let interior_hi = (m + p).saturating_sub(span);
        let mut z = vec![0.0; l];
        let flat = self
            .data
            .as_slice_mut()
            .expect("profile block is row-major contiguous");

        for t in 0..out_len {
            let interior = t >= interior_lo && t <= interior_hi && m + p >= span;
            let (q_lo, c, base) = if interior {
                (0usize, l, t - p)
            } else {
                let s = t + 1; // 1-based start in the padded series
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
                (q_lo, q_hi - q_lo + 1, s + q_lo * d - p - 1)
            };
            let cf = c as f64;
            let scale = scale_l / cf;

            let std = if any_norm {
                let mut sum = 0.0;
                let mut var_acc = 0.0;
                if interior && d == 1 {
                    let w = &series[base..base + span];
                    for &x in w {
                        sum += x;
                    }
                    let mean = sum / cf;
                    for &x in w {
                        var_acc += (x - mean).powi(2);
                    }
                    let std = (var_acc / cf).sqrt();
                    if std >= ZNORM_SPREAD_EPS {
                        for (zq, &x) in z[..c].iter_mut().zip(w) {
                            *zq = (x - mean) / std;
                        }
                    }
                    std
                } else if interior {
                    let w = &series[base..base + span];
                    for &x in w.iter().step_by(d) {
                        sum += x;
                    }
                    let mean = sum / cf;
                    for &x in w.iter().step_by(d) {
                        var_acc += (x - mean).powi(2);
                    }
                    let std = (var_acc / cf).sqrt();
                    if std >= ZNORM_SPREAD_EPS {
                        for (zq, &x) in z[..c].iter_mut().zip(w.iter().step_by(d)) {
                            *zq = (x - mean) / std;
                        }
                    }
                    std
                } else {
                    for q in 0..c {
                        sum += series[base + q * d];
                    }
                    let mean = sum / cf;
                    for q in 0..c {
                        var_acc += (series[base + q * d] - mean).powi(2);
                    }
                    let std = (var_acc / cf).sqrt();
                    if std >= ZNORM_SPREAD_EPS {
                        for q in 0..c {
                            z[q] = (series[base + q * d] - mean) / std;
                        }
                    }
                    std
                }
            } else {
                0.0
            };
            let have_z = any_norm && std >= ZNORM_SPREAD_EPS;

            for (row, shapelet) in shapelets.iter().enumerate() {
                let sv = &shapelet.values()[q_lo..q_lo + c];
                let acc = if shapelet.is_normalized() {
                    let mut a = 0.0;
                    if have_z {
                        for (&zq, &v) in z[..c].iter().zip(sv) {
                            a += (zq - v).powi(2);
                        }
                    } else {
                        for &v in sv {
                            a += v.powi(2);
                        }
                    }
                    a
                } else if interior {
                    let w = &series[base..base + span];
                    let mut a = 0.0;
                    if d == 1 {
                        for (&x, &v) in w.iter().zip(sv) {
                            let diff = x - v;
                            a += diff * diff;
                        }
                    } else {
                        for (&x, &v) in w.iter().step_by(d).zip(sv) {
                            let diff = x - v;
                            a += diff * diff;
                        }
                    }
                    a
                } else {
                    let mut a = 0.0;
                    for (q, &v) in sv.iter().enumerate() {
                        let diff = series[base + q * d] - v;
                        a += diff * diff;
                    }
                    a
                };
                flat[row * out_len + t] = scale * acc.sqrt();
            }
        }
        Ok(())
    }

    /// Number of competing shapelets (rows).
    pub fn shapelet_count(&self) -> usize {
        self.data.nrows()
    }

    /// Profile length (columns / time steps).
    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        self.data.row(j).to_slice().expect("row-major block row")
    }

    fn column_min(&self, col: usize) -> (usize, f64) {
        let mut best_row = 0;
        let mut best = self.data[(0, col)];
        for j in 1..self.data.nrows() {
            let v = self.data[(j, col)];
            if v < best {
                best = v;
                best_row = j;
            }
        }
        (best_row, best)
    }

    fn column_max(&self, col: usize) -> (usize, f64) {
        let mut best_row = 0;
        let mut best = self.data[(0, col)];
        for j in 1..self.data.nrows() {
            let v = self.data[(j, col)];
            if v > best {
                best = v;
                best_row = j;
            }
        }
        (best_row, best)
    }
}

/// How often (or how strongly) shapelet `j` wins the within-group minimum.
///
/// Per time step the block's column is scanned for its smallest entry
/// (ties to the lowest row); when row `j` wins, hard mode adds 1 and soft
/// mode adds the winning distance.
pub fn min_aggregate(j: usize, dp: &GroupProfileBlock, mode: AggregateMode) -> f64 {
    assert!(j < dp.shapelet_count(), "shapelet index out of range");
    let mut total = 0.0;
    for col in 0..dp.len() {
        let (row, value) = dp.column_min(col);
        if row == j {
            total += match mode {
                AggregateMode::Hard => 1.0,
                AggregateMode::Soft => value,
            };
        }
    }
    total
}

/// Mirror of [`min_aggregate`] for the within-group maximum.
pub fn max_aggregate(j: usize, dp: &GroupProfileBlock, mode: AggregateMode) -> f64 {
    assert!(j < dp.shapelet_count(), "shapelet index out of range");
    let mut total = 0.0;
    for col in 0..dp.len() {
        let (row, value) = dp.column_max(col);
        if row == j {
            total += match mode {
                AggregateMode::Hard => 1.0,
                AggregateMode::Soft => value,
            };
        }
    }
    total
}

/// Number of time steps where shapelet `j` stays strictly below its
/// threshold; the competing variant additionally requires `j` to win the
/// column minimum.
pub fn occurrence(
    j: usize,
    dp: &GroupProfileBlock,
    thresholds: &[f64],
    mode: OccurrenceMode,
) -> f64 {
    assert!(j < dp.shapelet_count(), "shapelet index out of range");
    assert_eq!(thresholds.len(), dp.shapelet_count());
    let lambda = thresholds[j];
    let row = dp.row(j);
    match mode {
        OccurrenceMode::Independent => row.iter().filter(|&&v| v < lambda).count() as f64,
        OccurrenceMode::Competing => (0..dp.len())
            .filter(|&col| {
                let (winner, value) = dp.column_min(col);
                winner == j && value < lambda
            })
            .count() as f64,
    }
}

/// Reusable per-column winner arrays for the fused feature pass.
struct FoldScratch {
    min_val: Vec<f64>,
    min_row: Vec<usize>,
    max_val: Vec<f64>,
    max_row: Vec<usize>,
}

impl FoldScratch {
    fn new() -> Self {
        Self {
            min_val: Vec::new(),
            min_row: Vec::new(),
            max_val: Vec::new(),
            max_row: Vec::new(),
        }
    }

    fn reset(&mut self, len: usize) {
        self.min_val.clear();
        self.min_val.resize(len, f64::INFINITY);
        self.min_row.clear();
        self.min_row.resize(len, 0);
        self.max_val.clear();
        self.max_val.resize(len, f64::NEG_INFINITY);
        self.max_row.clear();
        self.max_row.resize(len, 0);
    }
}

/// Single-pass equivalent of calling the three per-shapelet aggregates for
/// every j: walks each row once, tracks per-column winners, then
/// distributes the wins. Writes `[k min | k max | k occurrence]` into
/// `out`.
fn fold_block_features(
    dp: &GroupProfileBlock,
    min_mode: AggregateMode,
    max_mode: AggregateMode,
    occurrence_mode: OccurrenceMode,
    thresholds: &[f64],
    scratch: &mut FoldScratch,
    out: &mut [f64],
) {
    let k = dp.shapelet_count();
    let o = dp.len();
    debug_assert_eq!(out.len(), 3 * k);
    debug_assert_eq!(thresholds.len(), k);
    scratch.reset(o);
    out.fill(0.0);
    let (min_out, rest) = out.split_at_mut(k);
    let (max_out, occ_out) = rest.split_at_mut(k);

    for j in 0..k {
        let row = dp.row(j);
        // Strict comparisons keep the lowest row index on ties.
        for (col, &v) in row.iter().enumerate() {
            if v < scratch.min_val[col] {
                scratch.min_val[col] = v;
                scratch.min_row[col] = j;
            }
            if v > scratch.max_val[col] {
                scratch.max_val[col] = v;
                scratch.max_row[col] = j;
            }
        }
        if occurrence_mode == OccurrenceMode::Independent {
            let lambda = thresholds[j];
            occ_out[j] = row.iter().filter(|&&v| v < lambda).count() as f64;
        }
    }

    for col in 0..o {
        let (jmin, vmin) = (scratch.min_row[col], scratch.min_val[col]);
        min_out[jmin] += match min_mode {
            AggregateMode::Hard => 1.0,
            AggregateMode::Soft => vmin,
        };
        let (jmax, vmax) = (scratch.max_row[col], scratch.max_val[col]);
        max_out[jmax] += match max_mode {
            AggregateMode::Hard => 1.0,
            AggregateMode::Soft => vmax,
        };
        if occurrence_mode == OccurrenceMode::Competing && vmin < thresholds[jmin] {
            occ_out[jmin] += 1.0;
        }
    }
}

/// What one feature column measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Min,
    Max,
    Occurrence,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Min => "min",
            FeatureKind::Max => "max",
            FeatureKind::Occurrence => "occ",
        }
    }
}

/// Position of one feature column in the flattened output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureColumn {
    pub representation: Representation,
    pub group: usize,
    pub exponent: usize,
    pub kind: FeatureKind,
    pub shapelet: usize,
}

impl FeatureColumn {
    pub fn label(&self) -> String {
        format!(
            "{}_g{}_e{}_{}_s{}",
            self.representation,
            self.group,
            self.exponent,
            self.kind.as_str(),
            self.shapelet
        )
    }
}

/// The frozen column order of the feature matrix: representation-major,
/// then group, then exponent, then `[k min | k max | k occurrence]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureLayout {
    columns: Vec<FeatureColumn>,
}

impl FeatureLayout {
    pub fn from_params(params: &CastorParams) -> Self {
        let mut columns = Vec::with_capacity(params.feature_count());
        for bank in params.banks() {
            let k = bank.shapelets_per_group();
            for group in 0..bank.groups() {
                for exponent in 0..bank.exponents() {
                    for kind in [FeatureKind::Min, FeatureKind::Max, FeatureKind::Occurrence] {
                        for shapelet in 0..k {
                            columns.push(FeatureColumn {
                                representation: bank.representation(),
                                group,
                                exponent,
                                kind,
                                shapelet,
                            });
                        }
                    }
                }
            }
        }
        Self { columns }
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

const FEATURE_MAGIC: &[u8; 8] = b"CFEAT01\0";

/// Dense n x F feature matrix plus the layout describing its columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Array2<f64>,
    layout: FeatureLayout,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>, layout: FeatureLayout) -> Result<Self> {
        if values.ncols() != layout.len() {
            return Err(CastorError::FeatureDimensionMismatch {
                expected: layout.len(),
                actual: values.ncols(),
            });
        }
        Ok(Self { values, layout })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i).to_slice().expect("row-major matrix")
    }

    /// Writes `label,...` header (column labels) plus one row per sample,
    /// values in shortest round-trip decimal form.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut text = String::new();
        let labels: Vec<String> = self.layout.columns().iter().map(|c| c.label()).collect();
        text.push_str(&labels.join(","));
        text.push('\n');
        for row in self.values.rows() {
            let mut first = true;
            for v in row {
                if !first {
                    text.push(',');
                }
                let _ = write!(text, "{v}");
                first = false;
            }
            text.push('\n');
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Raw little-endian dump: magic, n, F, then row-major values. The
    /// layout itself is not stored; readers must know the generating
    /// parameters.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(FEATURE_MAGIC)?;
        w.write_all(&(self.n_samples() as u64).to_le_bytes())?;
        w.write_all(&(self.n_features() as u64).to_le_bytes())?;
        for v in self.values.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a [`write_binary`](Self::write_binary) dump; the layout must
    /// be supplied by the caller and is checked against the stored width.
    pub fn read_binary<R: Read>(mut r: R, layout: FeatureLayout) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != FEATURE_MAGIC {
            return Err(CastorError::ModelFormat(
                "feature file magic bytes mismatch".into(),
            ));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let f = u64::from_le_bytes(word) as usize;
        if f != layout.len() {
            return Err(CastorError::FeatureDimensionMismatch {
                expected: layout.len(),
                actual: f,
            });
        }
        let mut data = Vec::with_capacity(n * f);
        for _ in 0..n * f {
            r.read_exact(&mut word)?;
            data.push(f64::from_le_bytes(word));
        }
        let values = Array2::from_shape_vec((n, f), data)
            .map_err(|e| CastorError::ModelFormat(format!("feature file truncated: {e}")))?;
        Self::new(values, layout)
    }
}

fn transform_row(
    series: &TimeSeries,
    params: &CastorParams,
    needs_diff: bool,
    row: &mut [f64],
) -> Result<()> {
    let config = params.config();
    let diff = if needs_diff {
        Some(first_order_difference(series)?)
    } else {
        None
    };

    let mut scratch = FoldScratch::new();
    let mut offset = 0;
    for bank in params.banks() {
        let src: &TimeSeries = match bank.representation() {
            Representation::Original => series,
            Representation::Differenced => diff.as_ref().expect("differenced view prepared"),
        };
        debug_assert_eq!(src.len(), bank.series_len());
        let k = bank.shapelets_per_group();
        let mut block =
            GroupProfileBlock::from_array(Array2::zeros((k, bank.series_len())));
        for group in 0..bank.groups() {
            for exponent in 0..bank.exponents() {
                block.fill(bank.shapelet_row(group, exponent), src.values())?;
                fold_block_features(
                    &block,
                    config.min_mode,
                    config.max_mode,
                    config.occurrence_mode,
                    bank.threshold_row(group, exponent),
                    &mut scratch,
                    &mut row[offset..offset + 3 * k],
                );
                offset += 3 * k;
            }
        }
    }
    debug_assert_eq!(offset, row.len());
    Ok(())
}

/// Applies fitted parameters to a batch of series. Purely deterministic;
/// samples are processed in parallel and written to disjoint rows, so the
/// result does not depend on the worker count.
pub fn transform(series: &[TimeSeries], params: &CastorParams) -> Result<FeatureMatrix> {
    let expected = params.series_len();
    for s in series {
        if s.len() != expected {
            return Err(CastorError::SeriesLengthMismatch {
                expected,
                actual: s.len(),
            });
        }
    }
    let needs_diff = params
        .banks()
        .iter()
        .any(|b| b.representation() == Representation::Differenced);

    let layout = FeatureLayout::from_params(params);
    let mut values = Array2::zeros((series.len(), layout.len()));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(series.par_iter())
        .map(|(mut row, s)| {
            let row = row.as_slice_mut().expect("row-major output");
            transform_row(s, params, needs_diff, row)
        })
        .collect::<Result<()>>()?;
    FeatureMatrix::new(values, layout)
}

/// Brute-force twin of [`transform`] built from the per-shapelet public
/// operations on literally computed profile blocks. Quadratic in k; only
/// for cross-checking the fused path in tests.
pub fn transform_oracle(series: &[TimeSeries], params: &CastorParams) -> Result<FeatureMatrix> {
    use crate::profile::distance_profile_oracle;

    let expected = params.series_len();
    let config = params.config();
    let layout = FeatureLayout::from_params(params);
    let mut values = Array2::zeros((series.len(), layout.len()));
    for (idx, s) in series.iter().enumerate() {
        if s.len() != expected {
            return Err(CastorError::SeriesLengthMismatch {
                expected,
                actual: s.len(),
            });
        }
        let diff = first_order_difference(s)?;
        let mut offset = 0;
        for bank in params.banks() {
            let src = match bank.representation() {
                Representation::Original => s,
                Representation::Differenced => &diff,
            };
            let k = bank.shapelets_per_group();
            for group in 0..bank.groups() {
                for exponent in 0..bank.exponents() {
                    let shapelets = bank.shapelet_row(group, exponent);
                    let mut rows = Vec::new();
                    for shapelet in shapelets {
                        let p = standard_padding(shapelet.len(), shapelet.dilation())?;
                        rows.extend(distance_profile_oracle(shapelet, src, p)?.into_vec());
                    }
                    let dp = GroupProfileBlock::from_array(
                        Array2::from_shape_vec((k, bank.series_len()), rows)
                            .expect("profile rows have the series length"),
                    );
                    let thresholds = bank.threshold_row(group, exponent);
                    for j in 0..k {
                        values[(idx, offset + j)] = min_aggregate(j, &dp, config.min_mode);
                        values[(idx, offset + k + j)] = max_aggregate(j, &dp, config.max_mode);
                        values[(idx, offset + 2 * k + j)] =
                            occurrence(j, &dp, thresholds, config.occurrence_mode);
                    }
                    offset += 3 * k;
                }
            }
        }
    }
    FeatureMatrix::new(values, layout)
}
