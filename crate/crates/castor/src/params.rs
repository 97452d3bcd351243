//! Configuration and sampled parameter banks.
//!
//! Fitting draws `g` groups of `k` dilated shapelets per dyadic dilation
//! level from the training set, together with one occurrence threshold per
//! shapelet. Half the groups (by default) work on the first-order
//! differenced series. Every random decision comes from its own seed
//! substream, so the result is identical no matter how the work is split
//! across threads.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, TimeSeries};
use crate::error::{CastorError, Result};
use crate::profile::{
    distance_profile, extract_dilated_subsequence, standard_padding, DilatedShapelet,
};
use crate::rng::{substream, STREAM_NORM_FLAG, STREAM_SHAPELET};

/// Counting style for the competing min/max features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateMode {
    /// Add 1 whenever the shapelet wins a time step.
    Hard,
    /// Add the winning distance itself.
    Soft,
}

impl std::fmt::Display for AggregateMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AggregateMode::Hard => write!(f, "hard"),
            AggregateMode::Soft => write!(f, "soft"),
        }
    }
}

/// How occurrence counts treat competition inside a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OccurrenceMode {
    /// Count every time step below the threshold.
    Independent,
    /// Count only time steps the shapelet also wins.
    Competing,
}

impl std::fmt::Display for OccurrenceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OccurrenceMode::Independent => write!(f, "independent"),
            OccurrenceMode::Competing => write!(f, "competing"),
        }
    }
}

/// Whether the z-normalization coin is flipped once per group or once per
/// shapelet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormScope {
    Group,
    Shapelet,
}

impl std::fmt::Display for NormScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormScope::Group => write!(f, "group"),
            NormScope::Shapelet => write!(f, "shapelet"),
        }
    }
}

/// Input view a group of shapelets is sampled from and applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Original,
    Differenced,
}

impl Representation {
    pub(crate) fn stream_code(self) -> u64 {
        match self {
            Representation::Original => 0,
            Representation::Differenced => 1,
        }
    }
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Representation::Original => write!(f, "original"),
            Representation::Differenced => write!(f, "differenced"),
        }
    }
}

/// Hyperparameters for sampling and transforming.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CastorConfig {
    /// Number of shapelet groups `g` (split over representations).
    pub groups: usize,
    /// Shapelets per group `k`.
    pub shapelets_per_group: usize,
    /// Shapelet length `l` (odd, at least 3).
    pub shapelet_len: usize,
    /// Lower percentile of the sorted profile for threshold sampling.
    pub rho_lower: f64,
    /// Upper percentile of the sorted profile for threshold sampling.
    pub rho_upper: f64,
    /// Probability that a group compares under z-normalization.
    pub rho_norm: f64,
    /// Give half the groups the first-order differenced series.
    pub use_diff: bool,
    pub min_mode: AggregateMode,
    pub max_mode: AggregateMode,
    pub occurrence_mode: OccurrenceMode,
    /// Granularity of the normalization coin flip.
    pub norm_scope: NormScope,
    /// Master seed; every random draw is derived from it.
    pub seed: u64,
}

impl Default for CastorConfig {
    fn default() -> Self {
        Self {
            groups: 128,
            shapelets_per_group: 16,
            shapelet_len: 9,
            rho_lower: 0.01,
            rho_upper: 0.2,
            rho_norm: 0.5,
            use_diff: true,
            min_mode: AggregateMode::Soft,
            max_mode: AggregateMode::Hard,
            occurrence_mode: OccurrenceMode::Independent,
            norm_scope: NormScope::Group,
            seed: 0,
        }
    }
}

impl CastorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 {
            return Err(CastorError::InvalidConfig("groups must be at least 1".into()));
        }
        if self.shapelets_per_group == 0 {
            return Err(CastorError::InvalidConfig(
                "shapelets per group must be at least 1".into(),
            ));
        }
        if self.shapelet_len < 3 || self.shapelet_len % 2 == 0 {
            return Err(CastorError::InvalidShapeletLength(self.shapelet_len));
        }
        for (name, v) in [
            ("rho_lower", self.rho_lower),
            ("rho_upper", self.rho_upper),
            ("rho_norm", self.rho_norm),
        ] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(CastorError::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        if self.rho_lower > self.rho_upper {
            return Err(CastorError::InvalidConfig(format!(
                "rho_lower ({}) must not exceed rho_upper ({})",
                self.rho_lower, self.rho_upper
            )));
        }
        if self.use_diff && self.groups % 2 != 0 {
            return Err(CastorError::InvalidConfig(format!(
                "groups must be even to split over two representations, got {}",
                self.groups
            )));
        }
        Ok(())
    }
}

/// Number of dyadic dilation levels: `floor(log2(m / l)) + 1`, clamped so
/// the largest dilation still fits the series.
pub fn num_exponents(series_len: usize, shapelet_len: usize) -> Result<usize> {
    if series_len < shapelet_len {
        return Err(CastorError::ShapeletLongerThanSeries {
            required: shapelet_len,
            series_len,
        });
    }
    // Largest e with l * 2^(e-1) <= m, via integers to dodge float log.
    let mut cap = shapelet_len;
    let mut e = 1usize;
    while cap <= series_len / 2 {
        cap *= 2;
        e += 1;
    }
    // Safety clamp: the top dilation's span (l-1)*2^(e-1)+1 must fit. The
    // formula above already guarantees it, but keep the guard explicit.
    while e > 1 && (shapelet_len - 1) * (1usize << (e - 1)) + 1 > series_len {
        e -= 1;
    }
    Ok(e)
}

/// Where a shapelet came from: donor sample, 1-based start, and the
/// same-class partner its threshold was sampled against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeletProvenance {
    pub donor: usize,
    pub start: usize,
    pub partner: usize,
}

/// Sampled bank for one representation: `groups x exponents x k` shapelets
/// plus their occurrence thresholds, flattened group-major then
/// exponent-major (slot `(i * E + e) * k + j`).
#[derive(Debug, Clone)]
pub struct RepresentationBank {
    representation: Representation,
    groups: usize,
    shapelets_per_group: usize,
    exponents: usize,
    series_len: usize,
    shapelets: Vec<DilatedShapelet>,
    thresholds: Vec<f64>,
    provenance: Vec<ShapeletProvenance>,
}

impl RepresentationBank {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        representation: Representation,
        groups: usize,
        shapelets_per_group: usize,
        exponents: usize,
        series_len: usize,
        shapelets: Vec<DilatedShapelet>,
        thresholds: Vec<f64>,
        provenance: Vec<ShapeletProvenance>,
    ) -> Result<Self> {
        let expected = groups * exponents * shapelets_per_group;
        if shapelets.len() != expected || thresholds.len() != expected {
            return Err(CastorError::InvalidConfig(format!(
                "bank shape mismatch: expected {expected} slots, got {} shapelets / {} thresholds",
                shapelets.len(),
                thresholds.len()
            )));
        }
        if thresholds.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(CastorError::InvalidConfig(
                "occurrence thresholds must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            representation,
            groups,
            shapelets_per_group,
            exponents,
            series_len,
            shapelets,
            thresholds,
            provenance,
        })
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn shapelets_per_group(&self) -> usize {
        self.shapelets_per_group
    }

    pub fn exponents(&self) -> usize {
        self.exponents
    }

    /// Series length this bank was sampled from (original `m`, or `m - 1`
    /// for the differenced representation).
    pub fn series_len(&self) -> usize {
        self.series_len
    }

    fn slot(&self, group: usize, shapelet: usize, exponent: usize) -> usize {
        debug_assert!(group < self.groups);
        debug_assert!(shapelet < self.shapelets_per_group);
        debug_assert!(exponent < self.exponents);
        (group * self.exponents + exponent) * self.shapelets_per_group + shapelet
    }

    pub fn shapelet(&self, group: usize, shapelet: usize, exponent: usize) -> &DilatedShapelet {
        &self.shapelets[self.slot(group, shapelet, exponent)]
    }

    pub fn threshold(&self, group: usize, shapelet: usize, exponent: usize) -> f64 {
        self.thresholds[self.slot(group, shapelet, exponent)]
    }

    /// Threshold row for one (group, exponent): `k` values in shapelet order.
    pub fn threshold_row(&self, group: usize, exponent: usize) -> &[f64] {
        let start = self.slot(group, 0, exponent);
        &self.thresholds[start..start + self.shapelets_per_group]
    }

    pub fn shapelet_row(&self, group: usize, exponent: usize) -> &[DilatedShapelet] {
        let start = self.slot(group, 0, exponent);
        &self.shapelets[start..start + self.shapelets_per_group]
    }

    pub fn shapelets(&self) -> &[DilatedShapelet] {
        &self.shapelets
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Provenance in slot order; empty for banks restored from disk.
    pub fn provenance(&self) -> &[ShapeletProvenance] {
        &self.provenance
    }

    /// Normalization flag of a whole group (meaningful under group scope;
    /// under shapelet scope this reports the group's first shapelet).
    pub fn group_normalized(&self, group: usize) -> bool {
        self.shapelet(group, 0, 0).is_normalized()
    }
}

/// The complete fitted transform state: one bank per representation plus
/// the configuration it was sampled with.
#[derive(Debug, Clone)]
pub struct CastorParams {
    config: CastorConfig,
    series_len: usize,
    banks: Vec<RepresentationBank>,
}

impl CastorParams {
    pub(crate) fn from_parts(
        config: CastorConfig,
        series_len: usize,
        banks: Vec<RepresentationBank>,
    ) -> Self {
        Self {
            config,
            series_len,
            banks,
        }
    }

    pub fn config(&self) -> &CastorConfig {
        &self.config
    }

    /// Length every input series must have.
    pub fn series_len(&self) -> usize {
        self.series_len
    }

    pub fn banks(&self) -> &[RepresentationBank] {
        &self.banks
    }

    pub fn total_shapelets(&self) -> usize {
        self.banks.iter().map(|b| b.shapelets().len()).sum()
    }

    /// Width of the feature matrix: three features per shapelet slot.
    pub fn feature_count(&self) -> usize {
        3 * self.total_shapelets()
    }
}

/// Draws one occurrence threshold: the profile of `shapelet` against
/// `series` (standard padding) is sorted ascending and a 1-based index is
/// drawn uniformly from `[max(1, floor(rho_lower * o)), max(1,
/// floor(rho_upper * o))]`, clamped to the profile length `o`.
pub fn sample_threshold<R: Rng>(
    shapelet: &DilatedShapelet,
    series: &TimeSeries,
    rho_lower: f64,
    rho_upper: f64,
    rng: &mut R,
) -> Result<f64> {
    let padding = standard_padding(shapelet.len(), shapelet.dilation())?;
    let mut sorted = distance_profile(shapelet, series, padding)?.into_vec();
    sorted.sort_by(f64::total_cmp);
    let o = sorted.len();
    let lo = ((rho_lower * o as f64).floor() as usize).clamp(1, o);
    let hi = ((rho_upper * o as f64).floor() as usize).clamp(1, o);
    let idx = rng.gen_range(lo..=hi.max(lo));
    Ok(sorted[idx - 1])
}

struct GroupSample {
    shapelets: Vec<DilatedShapelet>,
    thresholds: Vec<f64>,
    provenance: Vec<ShapeletProvenance>,
}

/// Samples one group: for every (exponent, shapelet) slot, pick a donor
/// series, extract a dilated subsequence at a random start, and sample its
/// threshold against a same-class partner.
///
/// Per-slot draw order (one substream per slot): donor, start, partner,
/// threshold index. The normalization flag comes from its own stream so
/// flipping scope does not disturb the other draws.
fn sample_group(
    series: &[TimeSeries],
    labels: &[usize],
    class_members: &[Vec<usize>],
    config: &CastorConfig,
    representation: Representation,
    exponents: usize,
    group: usize,
) -> Result<GroupSample> {
    let n = series.len();
    let m = series[0].len();
    let l = config.shapelet_len;
    let k = config.shapelets_per_group;
    let rep_code = representation.stream_code();
    let seed = config.seed;

    let group_flag = match config.norm_scope {
        NormScope::Group => {
            substream(seed, &[STREAM_NORM_FLAG, rep_code, group as u64]).gen_bool(config.rho_norm)
        }
        NormScope::Shapelet => false, // decided per slot below
    };

    let slots = exponents * k;
    let mut shapelets = Vec::with_capacity(slots);
    let mut thresholds = Vec::with_capacity(slots);
    let mut provenance = Vec::with_capacity(slots);

    for exponent in 0..exponents {
        let dilation = 1usize << exponent;
        let span = (l - 1) * dilation + 1;
        debug_assert!(span <= m);
        for j in 0..k {
            let normalized = match config.norm_scope {
                NormScope::Group => group_flag,
                NormScope::Shapelet => substream(
                    seed,
                    &[STREAM_NORM_FLAG, rep_code, group as u64, j as u64, exponent as u64],
                )
                .gen_bool(config.rho_norm),
            };

            let mut rng = substream(
                seed,
                &[STREAM_SHAPELET, rep_code, group as u64, j as u64, exponent as u64],
            );
            let donor = rng.gen_range(0..n);
            let start = rng.gen_range(1..=m - span + 1);
            let members = &class_members[labels[donor]];
            let partner = if members.len() <= 1 {
                donor // singleton class: threshold against the donor itself
            } else {
                let donor_pos = members
                    .iter()
                    .position(|&s| s == donor)
                    .expect("donor belongs to its class");
                let pick = rng.gen_range(0..members.len() - 1);
                members[if pick >= donor_pos { pick + 1 } else { pick }]
            };

            let values = extract_dilated_subsequence(&series[donor], dilation, start, l)?;
            let shapelet = DilatedShapelet::new(values, dilation, normalized)?;
            let threshold = sample_threshold(
                &shapelet,
                &series[partner],
                config.rho_lower,
                config.rho_upper,
                &mut rng,
            )?;

            shapelets.push(shapelet);
            thresholds.push(threshold);
            provenance.push(ShapeletProvenance {
                donor,
                start,
                partner,
            });
        }
    }

    Ok(GroupSample {
        shapelets,
        thresholds,
        provenance,
    })
}

fn fit_bank(
    series: &[TimeSeries],
    labels: &[usize],
    class_members: &[Vec<usize>],
    config: &CastorConfig,
    representation: Representation,
    groups: usize,
) -> Result<RepresentationBank> {
    let m = series[0].len();
    let exponents = num_exponents(m, config.shapelet_len)?;
    let sampled: Vec<GroupSample> = (0..groups)
        .into_par_iter()
        .map(|group| {
            sample_group(
                series,
                labels,
                class_members,
                config,
                representation,
                exponents,
                group,
            )
        })
        .collect::<Result<_>>()?;

    let slots = groups * exponents * config.shapelets_per_group;
    let mut shapelets = Vec::with_capacity(slots);
    let mut thresholds = Vec::with_capacity(slots);
    let mut provenance = Vec::with_capacity(slots);
    for group in sampled {
        shapelets.extend(group.shapelets);
        thresholds.extend(group.thresholds);
        provenance.extend(group.provenance);
    }
    RepresentationBank::from_parts(
        representation,
        groups,
        config.shapelets_per_group,
        exponents,
        m,
        shapelets,
        thresholds,
        provenance,
    )
}

/// Samples the full parameter bank from a training dataset. Deterministic
/// for a fixed seed and independent of thread count.
pub fn fit_params(dataset: &LabeledDataset, config: &CastorConfig) -> Result<CastorParams> {
    config.validate()?;
    let m = dataset.series_len();
    if m < config.shapelet_len {
        return Err(CastorError::ShapeletLongerThanSeries {
            required: config.shapelet_len,
            series_len: m,
        });
    }
    let labels = dataset.labels();
    let class_members = dataset.class_members();

    let mut banks = Vec::new();
    if config.use_diff {
        let g_half = config.groups / 2;
        if m - 1 < config.shapelet_len {
            return Err(CastorError::ShapeletLongerThanSeries {
                required: config.shapelet_len,
                series_len: m - 1,
            });
        }
        banks.push(fit_bank(
            dataset.series(),
            labels,
            &class_members,
            config,
            Representation::Original,
            g_half,
        )?);
        banks.push(fit_bank(
            dataset.differenced()?,
            labels,
            &class_members,
            config,
            Representation::Differenced,
            g_half,
        )?);
    } else {
        banks.push(fit_bank(
            dataset.series(),
            labels,
            &class_members,
            config,
            Representation::Original,
            config.groups,
        )?);
    }

    Ok(CastorParams::from_parts(config.clone(), m, banks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::first_order_difference;
    use crate::profile::znormalize;

    fn toy_dataset(n_per_class: usize, m: usize, seed: u64) -> LabeledDataset {
        let mut rng = substream(seed, &[0xD5]);
        let mut series = Vec::new();
        let mut labels = Vec::new();
        for class in 0..2 {
            for _ in 0..n_per_class {
                let base = class as f64 * 2.0;
                let values = (0..m)
                    .map(|t| base + (t as f64 * 0.3).sin() + rng.gen_range(-0.5..0.5))
                    .collect();
                series.push(TimeSeries::new(values).unwrap());
                labels.push(class);
            }
        }
        LabeledDataset::new(series, labels, vec!["a".into(), "b".into()]).unwrap()
    }

    fn small_config() -> CastorConfig {
        CastorConfig {
            groups: 4,
            shapelets_per_group: 2,
            shapelet_len: 3,
            seed: 9,
            ..CastorConfig::default()
        }
    }

    #[test]
    fn exponent_count_formula() {
        assert_eq!(num_exponents(150, 9).unwrap(), 5);
        assert_eq!(num_exponents(9, 9).unwrap(), 1);
        assert_eq!(num_exponents(5, 3).unwrap(), 1);
        assert_eq!(num_exponents(128, 9).unwrap(), 4);
        assert_eq!(num_exponents(144, 9).unwrap(), 5);
        assert!(matches!(
            num_exponents(5, 7),
            Err(CastorError::ShapeletLongerThanSeries {
                required: 7,
                series_len: 5
            })
        ));
    }

    #[test]
    fn exponent_dilations_always_fit() {
        for m in 3..200 {
            for l in [3usize, 5, 7, 9, 11, 13, 15] {
                if m < l {
                    continue;
                }
                let e = num_exponents(m, l).unwrap();
                let top_span = (l - 1) * (1 << (e - 1)) + 1;
                assert!(top_span <= m, "m={m} l={l} E={e} span={top_span}");
            }
        }
    }

    #[test]
    fn default_bank_dimensions() {
        // 150-step series, default config: 64 + 64 groups, 5 levels, 16 each.
        let ds = toy_dataset(3, 150, 1);
        let config = CastorConfig { seed: 5, ..CastorConfig::default() };
        let params = fit_params(&ds, &config).unwrap();
        assert_eq!(params.banks().len(), 2);
        for bank in params.banks() {
            assert_eq!(bank.groups(), 64);
            assert_eq!(bank.exponents(), 5);
            assert_eq!(bank.shapelets_per_group(), 16);
            assert_eq!(bank.shapelets().len(), 64 * 16 * 5);
        }
        assert_eq!(params.total_shapelets(), 10240);
        assert_eq!(params.feature_count(), 30720);
        assert_eq!(params.banks()[1].series_len(), 149);
    }

    #[test]
    fn fit_is_deterministic() {
        let ds = toy_dataset(4, 40, 2);
        let config = small_config();
        let a = fit_params(&ds, &config).unwrap();
        let b = fit_params(&ds, &config).unwrap();
        for (ba, bb) in a.banks().iter().zip(b.banks()) {
            assert_eq!(ba.shapelets(), bb.shapelets());
            assert_eq!(ba.thresholds(), bb.thresholds());
            assert_eq!(ba.provenance(), bb.provenance());
        }
    }

    #[test]
    fn provenance_reconstructs_every_shapelet() {
        let ds = toy_dataset(4, 40, 3);
        let config = small_config();
        let params = fit_params(&ds, &config).unwrap();
        let diffs: Vec<TimeSeries> = ds
            .series()
            .iter()
            .map(|s| first_order_difference(s).unwrap())
            .collect();
        for bank in params.banks() {
            let source: &[TimeSeries] = match bank.representation() {
                Representation::Original => ds.series(),
                Representation::Differenced => &diffs,
            };
            for i in 0..bank.groups() {
                for e in 0..bank.exponents() {
                    for j in 0..bank.shapelets_per_group() {
                        let s = bank.shapelet(i, j, e);
                        let slot = (i * bank.exponents() + e) * bank.shapelets_per_group() + j;
                        let prov = bank.provenance()[slot];
                        let raw = extract_dilated_subsequence(
                            &source[prov.donor],
                            s.dilation(),
                            prov.start,
                            s.len(),
                        )
                        .unwrap();
                        let expected = if s.is_normalized() { znormalize(&raw) } else { raw };
                        assert_eq!(s.values(), expected.as_slice());
                        assert_eq!(s.dilation(), 1 << e);
                    }
                }
            }
        }
    }

    #[test]
    fn partners_share_the_donor_class() {
        let ds = toy_dataset(5, 30, 4);
        let params = fit_params(&ds, &small_config()).unwrap();
        for bank in params.banks() {
            for prov in bank.provenance() {
                assert_ne!(prov.donor, prov.partner);
                assert_eq!(ds.labels()[prov.donor], ds.labels()[prov.partner]);
            }
        }
    }

    #[test]
    fn singleton_class_falls_back_to_self_partner() {
        let mut series = Vec::new();
        let mut labels = Vec::new();
        let mut rng = substream(8, &[0xAB]);
        for i in 0..5 {
            let values = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
            series.push(TimeSeries::new(values).unwrap());
            labels.push(usize::from(i == 4)); // one lone sample of class 1
        }
        let ds = LabeledDataset::new(series, labels, vec!["x".into(), "y".into()]).unwrap();
        let params = fit_params(&ds, &small_config()).unwrap();
        for bank in params.banks() {
            for prov in bank.provenance() {
                if ds.labels()[prov.donor] == 1 {
                    assert_eq!(prov.partner, prov.donor);
                } else {
                    assert_ne!(prov.partner, prov.donor);
                }
            }
        }
    }

    #[test]
    fn thresholds_are_achievable_profile_values() {
        let ds = toy_dataset(4, 30, 6);
        let params = fit_params(&ds, &small_config()).unwrap();
        let diffs: Vec<TimeSeries> = ds
            .series()
            .iter()
            .map(|s| first_order_difference(s).unwrap())
            .collect();
        for bank in params.banks() {
            let source: &[TimeSeries] = match bank.representation() {
                Representation::Original => ds.series(),
                Representation::Differenced => &diffs,
            };
            for i in 0..bank.groups() {
                for e in 0..bank.exponents() {
                    for j in 0..bank.shapelets_per_group() {
                        let s = bank.shapelet(i, j, e);
                        let slot = (i * bank.exponents() + e) * bank.shapelets_per_group() + j;
                        let prov = bank.provenance()[slot];
                        let p = standard_padding(s.len(), s.dilation()).unwrap();
                        let profile = distance_profile(s, &source[prov.partner], p).unwrap();
                        let lambda = bank.threshold(i, j, e);
                        assert!(lambda >= 0.0 && lambda.is_finite());
                        assert!(
                            profile.values().contains(&lambda),
                            "threshold {lambda} not in partner profile"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn threshold_percentile_endpoints() {
        let ds = toy_dataset(3, 25, 7);
        let mut rng = substream(1, &[0xEE]);
        let sub = extract_dilated_subsequence(&ds.series()[0], 1, 4, 5).unwrap();
        let s = DilatedShapelet::new(sub, 1, false).unwrap();
        let target = &ds.series()[1];
        let p = standard_padding(5, 1).unwrap();
        let mut profile = distance_profile(&s, target, p).unwrap().into_vec();
        profile.sort_by(f64::total_cmp);

        let max = sample_threshold(&s, target, 1.0, 1.0, &mut rng).unwrap();
        assert_eq!(max, *profile.last().unwrap());
        let min = sample_threshold(&s, target, 0.0, 0.0, &mut rng).unwrap();
        assert_eq!(min, profile[0]);
    }

    #[test]
    fn self_sampled_minimum_threshold_is_zero() {
        let ds = toy_dataset(3, 25, 12);
        let t = &ds.series()[0];
        let sub = extract_dilated_subsequence(t, 1, 3, 5).unwrap();
        let s = DilatedShapelet::new(sub, 1, false).unwrap();
        let mut rng = substream(2, &[0xEF]);
        let lambda = sample_threshold(&s, t, 0.0, 0.0, &mut rng).unwrap();
        assert_eq!(lambda, 0.0);
    }

    #[test]
    fn norm_probability_endpoints() {
        let ds = toy_dataset(4, 30, 9);
        for (rho, expect) in [(0.0, false), (1.0, true)] {
            let config = CastorConfig {
                rho_norm: rho,
                ..small_config()
            };
            let params = fit_params(&ds, &config).unwrap();
            for bank in params.banks() {
                assert!(bank.shapelets().iter().all(|s| s.is_normalized() == expect));
            }
        }
    }

    #[test]
    fn norm_fraction_tracks_probability() {
        // 25 seeds x 40 groups = 1000 coin flips at rho = 0.5; stay within
        // 3 sigma of the binomial mean (confidence band 452..548).
        let ds = toy_dataset(3, 20, 10);
        let mut normalized = 0usize;
        let mut total = 0usize;
        for seed in 0..25 {
            let config = CastorConfig {
                groups: 40,
                shapelets_per_group: 1,
                shapelet_len: 3,
                use_diff: false,
                seed,
                ..CastorConfig::default()
            };
            let params = fit_params(&ds, &config).unwrap();
            for bank in params.banks() {
                for i in 0..bank.groups() {
                    total += 1;
                    if bank.group_normalized(i) {
                        normalized += 1;
                    }
                }
            }
        }
        assert_eq!(total, 1000);
        assert!((452..=548).contains(&normalized), "normalized={normalized}");
    }

    #[test]
    fn group_scope_shares_one_flag_per_group() {
        let ds = toy_dataset(4, 40, 11);
        let params = fit_params(&ds, &small_config()).unwrap();
        let mut saw_both = (false, false);
        for bank in params.banks() {
            for i in 0..bank.groups() {
                let flag = bank.group_normalized(i);
                if flag {
                    saw_both.0 = true;
                } else {
                    saw_both.1 = true;
                }
                for e in 0..bank.exponents() {
                    for s in bank.shapelet_row(i, e) {
                        assert_eq!(s.is_normalized(), flag);
                    }
                }
            }
        }
        // with rho = 0.5 over 8 group flags, both outcomes should appear
        assert!(saw_both.0 || saw_both.1);
    }

    #[test]
    fn shapelet_scope_varies_within_groups() {
        let ds = toy_dataset(4, 80, 13);
        let config = CastorConfig {
            groups: 4,
            shapelets_per_group: 8,
            shapelet_len: 3,
            norm_scope: NormScope::Shapelet,
            seed: 3,
            ..CastorConfig::default()
        };
        let params = fit_params(&ds, &config).unwrap();
        let mixed = params.banks().iter().any(|bank| {
            (0..bank.groups()).any(|i| {
                let flags: Vec<bool> = (0..bank.exponents())
                    .flat_map(|e| bank.shapelet_row(i, e).iter().map(|s| s.is_normalized()))
                    .collect();
                flags.iter().any(|&f| f) && flags.iter().any(|&f| !f)
            })
        });
        assert!(mixed, "expected at least one group with mixed flags");
    }

    #[test]
    fn config_validation() {
        let ok = CastorConfig::default();
        assert!(ok.validate().is_ok());
        assert!(CastorConfig { groups: 0, ..ok.clone() }.validate().is_err());
        assert!(CastorConfig { shapelet_len: 8, ..ok.clone() }.validate().is_err());
        assert!(CastorConfig { rho_lower: 0.5, rho_upper: 0.2, ..ok.clone() }
            .validate()
            .is_err());
        assert!(CastorConfig { rho_norm: 1.5, ..ok.clone() }.validate().is_err());
        assert!(CastorConfig { groups: 7, use_diff: true, ..ok.clone() }
            .validate()
            .is_err());
        assert!(CastorConfig { groups: 7, use_diff: false, ..ok }.validate().is_ok());
    }

    #[test]
    fn short_series_is_rejected() {
        let ds = toy_dataset(3, 8, 14);
        let config = CastorConfig {
            shapelet_len: 9,
            ..small_config()
        };
        assert!(matches!(
            fit_params(&ds, &config),
            Err(CastorError::ShapeletLongerThanSeries {
                required: 9,
                series_len: 8
            })
        ));
        // m = l works for the original but not the differenced view
        let ds = toy_dataset(3, 9, 15);
        assert!(matches!(
            fit_params(&ds, &config),
            Err(CastorError::ShapeletLongerThanSeries {
                required: 9,
                series_len: 8
            })
        ));
        let no_diff = CastorConfig {
            use_diff: false,
            ..config
        };
        assert!(fit_params(&ds, &no_diff).is_ok());
    }
}
