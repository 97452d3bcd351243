//! Feature scaling and one-vs-rest ridge classification with exact
//! leave-one-out selection of the regularization strength.
//!
//! The feature matrices produced by the transform are nonnegative and
//! mostly zero, so the default scaler square-roots the values and
//! standardizes them behind a zero mask. Classification is linear ridge
//! regression onto +-1 one-vs-rest targets with an unpenalized intercept;
//! the leave-one-out error for every candidate alpha comes from the hat
//! matrix of the centered problem in closed form, no refitting.

use nalgebra::DMatrix;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{CastorError, Result};

/// Feature preprocessing applied before the linear model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerKind {
    /// sqrt + zero-masked standardization for sparse nonnegative features.
    Sparse,
    /// Plain per-feature standardization.
    Standard,
    /// Identity.
    None,
}

/// Per-feature statistics backing a fitted scaler.
///
/// For the sparse kind, `mean` and `std` describe the square-rooted
/// training features and `epsilon` is `zero_fraction^4 + 1e-8`; mostly-zero
/// features therefore get a damped denominator instead of exploding.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub epsilon: Vec<f64>,
}

/// A scaler ready to be applied to feature matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedScaler {
    kind: ScalerKind,
    stats: Option<ScalerStats>,
}

impl FittedScaler {
    pub(crate) fn from_parts(kind: ScalerKind, stats: Option<ScalerStats>) -> Self {
        Self { kind, stats }
    }

    pub fn kind(&self) -> ScalerKind {
        self.kind
    }

    pub fn stats(&self) -> Option<&ScalerStats> {
        self.stats.as_ref()
    }

    /// Number of features this scaler was fitted on; `None` for the
    /// identity scaler, which accepts any width.
    pub fn n_features(&self) -> Option<usize> {
        self.stats.as_ref().map(|s| s.mean.len())
    }

    /// Applies the fitted transformation.
    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let stats = match (&self.kind, &self.stats) {
            (ScalerKind::None, _) => return Ok(x.clone()),
            (_, Some(stats)) => stats,
            (_, None) => {
                return Err(CastorError::InvalidFeatures(
                    "scaler has no fitted statistics".into(),
                ))
            }
        };
        if x.ncols() != stats.mean.len() {
            return Err(CastorError::FeatureDimensionMismatch {
                expected: stats.mean.len(),
                actual: x.ncols(),
            });
        }
        validate_features(x, self.kind == ScalerKind::Sparse)?;
        let mut out = Array2::zeros(x.raw_dim());
        for (mut orow, xrow) in out.rows_mut().into_iter().zip(x.rows()) {
            for (f, (o, &v)) in orow.iter_mut().zip(xrow).enumerate() {
                *o = match self.kind {
                    ScalerKind::Sparse => {
                        if v == 0.0 {
                            0.0
                        } else {
                            (v.sqrt() - stats.mean[f]) / (stats.std[f] + stats.epsilon[f])
                        }
                    }
                    ScalerKind::Standard => (v - stats.mean[f]) / (stats.std[f] + stats.epsilon[f]),
                    ScalerKind::None => unreachable!(),
                };
            }
        }
        Ok(out)
    }
}

fn validate_features(x: &Array2<f64>, require_nonnegative: bool) -> Result<()> {
    for &v in x.iter() {
        if !v.is_finite() {
            return Err(CastorError::InvalidFeatures(
                "feature matrix contains non-finite values".into(),
            ));
        }
        if require_nonnegative && v < 0.0 {
            return Err(CastorError::InvalidFeatures(format!(
                "sparse scaling requires nonnegative features, got {v}"
            )));
        }
    }
    Ok(())
}

fn column_moments(col: &[f64]) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fits per-feature scaling statistics on a training matrix.
pub fn fit_scaler(x: &Array2<f64>, kind: ScalerKind) -> Result<FittedScaler> {
    if kind == ScalerKind::None {
        return Ok(FittedScaler::from_parts(kind, None));
    }
    validate_features(x, kind == ScalerKind::Sparse)?;
    let n = x.nrows();
    if n == 0 {
        return Err(CastorError::InsufficientData(
            "cannot fit a scaler on an empty matrix".into(),
        ));
    }
    let f = x.ncols();
    let mut mean = Vec::with_capacity(f);
    let mut std = Vec::with_capacity(f);
    let mut epsilon = Vec::with_capacity(f);
    let mut col_buf = vec![0.0; n];
    for c in 0..f {
        let column = x.column(c);
        match kind {
            ScalerKind::Sparse => {
                let mut zeros = 0usize;
                for (dst, &v) in col_buf.iter_mut().zip(column.iter()) {
                    if v == 0.0 {
                        zeros += 1;
                    }
                    *dst = v.sqrt();
                }
                let (m, s) = column_moments(&col_buf);
                let zero_fraction = zeros as f64 / n as f64;
                mean.push(m);
                std.push(s);
                epsilon.push(zero_fraction.powi(4) + 1e-8);
            }
            ScalerKind::Standard => {
                for (dst, &v) in col_buf.iter_mut().zip(column.iter()) {
                    *dst = v;
                }
                let (m, s) = column_moments(&col_buf);
                mean.push(m);
                std.push(s);
                epsilon.push(1e-8);
            }
            ScalerKind::None => unreachable!(),
        }
    }
    Ok(FittedScaler::from_parts(
        kind,
        Some(ScalerStats { mean, std, epsilon }),
    ))
}

/// A fitted linear classifier: scaler, one weight row per class, chosen
/// regularization strength, and the label vocabulary for decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    scaler: FittedScaler,
    /// C x F.
    weights: Array2<f64>,
    intercepts: Vec<f64>,
    alpha: f64,
    vocabulary: Vec<String>,
}

impl RidgeModel {
    pub(crate) fn from_parts(
        scaler: FittedScaler,
        weights: Array2<f64>,
        intercepts: Vec<f64>,
        alpha: f64,
        vocabulary: Vec<String>,
    ) -> Result<Self> {
        if weights.nrows() != vocabulary.len() || weights.nrows() != intercepts.len() {
            return Err(CastorError::InvalidConfig(format!(
                "classifier shape mismatch: {} weight rows, {} intercepts, {} classes",
                weights.nrows(),
                intercepts.len(),
                vocabulary.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(CastorError::InvalidFeatures(
                "classifier weights must be finite".into(),
            ));
        }
        Ok(Self {
            scaler,
            weights,
            intercepts,
            alpha,
            vocabulary,
        })
    }

    pub fn scaler(&self) -> &FittedScaler {
        &self.scaler
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    /// Scales raw features and scores them; labels fall out of the
    /// per-class argmax with ties to the lowest class index.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Predictions> {
        if x.ncols() != self.n_features() {
            return Err(CastorError::FeatureDimensionMismatch {
                expected: self.n_features(),
                actual: x.ncols(),
            });
        }
        let scaled = self.scaler.apply(x)?;
        let mut scores = scaled.dot(&self.weights.t());
        for mut row in scores.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v += self.intercepts[c];
            }
        }
        let indices: Vec<usize> = scores
            .rows()
            .into_iter()
            .map(|row| argmax(row.as_slice().expect("row-major scores")))
            .collect();
        let labels = indices
            .iter()
            .map(|&i| self.vocabulary[i].clone())
            .collect();
        Ok(Predictions {
            indices,
            labels,
            scores,
        })
    }
}

/// Decoded predictions plus the raw per-class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub indices: Vec<usize>,
    pub labels: Vec<String>,
    pub scores: Array2<f64>,
}

/// Leave-one-out summary for every candidate alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeReport {
    /// (alpha, total squared leave-one-out error), in grid order.
    pub alpha_errors: Vec<(f64, f64)>,
    pub selected_alpha: f64,
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

/// Default candidate grid for the regularization strength.
pub const DEFAULT_ALPHAS: [f64; 3] = [0.01, 1.0, 10.0];

/// Fits the scaler and the ridge classifier in one step.
///
/// Targets are +-1 one-vs-rest indicators. Features and targets are
/// centered, which makes the intercept unpenalized; the hat matrix of the
/// centered problem then gives exact leave-one-out residuals
/// `e_i / (1 - h_ii - 1/n)` (the `1/n` accounts for the intercept, whose
/// all-ones direction is an eigenvector of the centered Gram with
/// eigenvalue zero). The alpha with the smallest total squared
/// leave-one-out error wins; earlier grid entries win ties.
pub fn fit_ridge_loocv(
    x: &Array2<f64>,
    labels: &[usize],
    vocabulary: &[String],
    alphas: &[f64],
    scaler_kind: ScalerKind,
) -> Result<(RidgeModel, RidgeReport)> {
    let n = x.nrows();
    if n < 2 {
        return Err(CastorError::InsufficientData(format!(
            "ridge fitting needs at least 2 samples, got {n}"
        )));
    }
    if labels.len() != n {
        return Err(CastorError::InvalidDataset(format!(
            "{n} samples but {} labels",
            labels.len()
        )));
    }
    let c = vocabulary.len();
    if c < 2 {
        return Err(CastorError::InvalidConfig(
            "classification needs at least 2 classes".into(),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(CastorError::InvalidDataset(format!(
            "label index {bad} out of range for {c} classes"
        )));
    }
    if alphas.is_empty() || alphas.iter().any(|a| !a.is_finite() || *a <= 0.0) {
        return Err(CastorError::InvalidConfig(
            "alpha grid must be nonempty and strictly positive".into(),
        ));
    }
    validate_features(x, false)?;

    let scaler = fit_scaler(x, scaler_kind)?;
    let xs = scaler.apply(x)?;

    // +-1 one-vs-rest targets.
    let mut y = Array2::from_elem((n, c), -1.0);
    for (i, &l) in labels.iter().enumerate() {
        y[(i, l)] = 1.0;
    }

    let x_mean = xs.mean_axis(Axis(0)).expect("n >= 2");
    let y_mean = y.mean_axis(Axis(0)).expect("n >= 2");
    let xc = &xs - &x_mean;
    let yc = &y - &y_mean;

    // Centered Gram and its eigendecomposition; clamping tiny negative
    // eigenvalues keeps the PSD structure under rounding.
    let gram = xc.dot(&xc.t());
    let gram_sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (gram[(i, j)] + gram[(j, i)]));
    let eigen = gram_sym.symmetric_eigen();
    let evals: Vec<f64> = eigen.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let u = eigen.eigenvectors;

    let yc_dm = DMatrix::from_fn(n, c, |i, j| yc[(i, j)]);
    let b = u.transpose() * &yc_dm; // n x C in the eigenbasis

    let mut report = RidgeReport {
        alpha_errors: Vec::with_capacity(alphas.len()),
        selected_alpha: alphas[0],
    };
    let mut best_err = f64::INFINITY;
    for &alpha in alphas {
        let shrink: Vec<f64> = evals.iter().map(|&l| l / (l + alpha)).collect();
        // Fitted values U * diag(shrink) * B and leverages h_ii.
        let mut sb = b.clone();
        for (k, &s) in shrink.iter().enumerate() {
            for j in 0..c {
                sb[(k, j)] *= s;
            }
        }
        let yhat = &u * sb;
        let mut err = 0.0;
        for i in 0..n {
            let mut leverage = 0.0;
            for (k, &s) in shrink.iter().enumerate() {
                leverage += u[(i, k)] * u[(i, k)] * s;
            }
            let denom = 1.0 - leverage - 1.0 / n as f64;
            for j in 0..c {
                let residual = yc_dm[(i, j)] - yhat[(i, j)];
                err += (residual / denom).powi(2);
            }
        }
        report.alpha_errors.push((alpha, err));
        if err < best_err {
            best_err = err;
            report.selected_alpha = alpha;
        }
    }
    let alpha = report.selected_alpha;

    // Refit on everything: w = Xc^T U diag(1/(l + alpha)) U^T Yc.
    let mut ib = u.transpose() * &yc_dm;
    for (k, &l) in evals.iter().enumerate() {
        let inv = 1.0 / (l + alpha);
        for j in 0..c {
            ib[(k, j)] *= inv;
        }
    }
    let dual = &u * ib; // n x C
    let dual_nd = Array2::from_shape_fn((n, c), |(i, j)| dual[(i, j)]);
    let w = xc.t().dot(&dual_nd); // F x C

    let mut intercepts = Vec::with_capacity(c);
    for j in 0..c {
        let xw: f64 = x_mean
            .iter()
            .zip(w.column(j))
            .map(|(&xm, &wv)| xm * wv)
            .sum();
        intercepts.push(y_mean[j] - xw);
    }

    let weights = w.t().to_owned(); // C x F
    let model = RidgeModel::from_parts(scaler, weights, intercepts, alpha, vocabulary.to_vec())?;
    Ok((model, report))
}
