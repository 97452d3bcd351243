//! Labeled time series datasets: loading, validation, differencing, splits.
//!
//! The on-disk format is the UCR-style delimited text file: one sample per
//! line, label token first, then the series values. Tabs, commas, or runs
//! of spaces separate fields; blank lines are ignored and `#` starts a
//! comment line. All series in a dataset must have the same length and
//! every value must be finite.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{CastorError, Result};
use crate::rng::{substream, STREAM_FOLDS};

/// A uniform-length, finite-valued univariate series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
}

impl TimeSeries {
    /// Wraps raw values, rejecting series shorter than 2 or containing
    /// non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(CastorError::InvalidDataset(format!(
                "series must have at least 2 values, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(CastorError::InvalidDataset(format!(
                "non-finite value at position {pos}"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// First-order difference: `out[i] = values[i+1] - values[i]`.
///
/// The result has length `m - 1`; the input must have at least 3 values so
/// that the differenced series is still a valid [`TimeSeries`].
pub fn first_order_difference(series: &TimeSeries) -> Result<TimeSeries> {
    if series.len() < 3 {
        return Err(CastorError::SeriesTooShort { len: series.len() });
    }
    let values = series
        .values()
        .windows(2)
        .map(|w| w[1] - w[0])
        .collect::<Vec<_>>();
    TimeSeries::new(values)
}

/// A collection of equally long labeled series.
///
/// Labels are dense indices into `vocabulary`, which preserves the original
/// label tokens in first-appearance order. The dataset is immutable after
/// construction and safe to share across threads; the differenced view is
/// computed once on first use.
#[derive(Debug)]
pub struct LabeledDataset {
    series: Vec<TimeSeries>,
    labels: Vec<usize>,
    vocabulary: Vec<String>,
    differenced: OnceLock<Vec<TimeSeries>>,
}

impl Clone for LabeledDataset {
    fn clone(&self) -> Self {
        Self {
            series: self.series.clone(),
            labels: self.labels.clone(),
            vocabulary: self.vocabulary.clone(),
            differenced: OnceLock::new(),
        }
    }
}

impl LabeledDataset {
    pub fn new(
        series: Vec<TimeSeries>,
        labels: Vec<usize>,
        vocabulary: Vec<String>,
    ) -> Result<Self> {
        if series.len() < 2 {
            return Err(CastorError::InvalidDataset(format!(
                "need at least 2 samples, got {}",
                series.len()
            )));
        }
        if series.len() != labels.len() {
            return Err(CastorError::InvalidDataset(format!(
                "{} series but {} labels",
                series.len(),
                labels.len()
            )));
        }
        if vocabulary.len() < 2 {
            return Err(CastorError::InvalidDataset(format!(
                "need at least 2 classes, got {}",
                vocabulary.len()
            )));
        }
        let m = series[0].len();
        for (i, s) in series.iter().enumerate() {
            if s.len() != m {
                return Err(CastorError::InvalidDataset(format!(
                    "series {i} has length {} but series 0 has length {m}",
                    s.len()
                )));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= vocabulary.len()) {
            return Err(CastorError::InvalidDataset(format!(
                "label index {bad} out of range for {} classes",
                vocabulary.len()
            )));
        }
        Ok(Self {
            series,
            labels,
            vocabulary,
            differenced: OnceLock::new(),
        })
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Length of every series in the dataset.
    pub fn series_len(&self) -> usize {
        self.series[0].len()
    }

    pub fn series(&self) -> &[TimeSeries] {
        &self.series
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn n_classes(&self) -> usize {
        self.vocabulary.len()
    }

    /// Sample indices grouped by class label.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.vocabulary.len()];
        for (i, &label) in self.labels.iter().enumerate() {
            members[label].push(i);
        }
        members
    }

    /// The first-order differenced view of every series, computed once and
    /// cached. Fails if the series are too short to difference.
    pub fn differenced(&self) -> Result<&[TimeSeries]> {
        if self.series_len() < 3 {
            return Err(CastorError::SeriesTooShort {
                len: self.series_len(),
            });
        }
        let diffs = self.differenced.get_or_init(|| {
            self.series
                .iter()
                .map(|s| first_order_difference(s).expect("length checked above"))
                .collect()
        });
        Ok(diffs)
    }

    /// A new dataset containing the given sample indices, in order.
    /// The vocabulary is kept as-is so label indices remain comparable.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let series = indices.iter().map(|&i| self.series[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(series, labels, self.vocabulary.clone())
    }

    /// Same series with a replacement label vector (used by the
    /// label-shuffling negative control).
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(self.series.clone(), labels, self.vocabulary.clone())
    }
}

fn is_separator(c: char) -> bool {
    c == '\t' || c == ',' || c == ' '
}

/// Parses UCR-style delimited text from a reader.
///
/// Each non-blank, non-comment line is `label value value ...`. The label
/// vocabulary is built in first-appearance order.
pub fn parse_ucr<R: Read>(reader: R) -> Result<LabeledDataset> {
    let reader = BufReader::new(reader);
    let mut series = Vec::new();
    let mut labels = Vec::new();
    let mut vocabulary: Vec<String> = Vec::new();
    let mut expected_fields: Option<usize> = None;

    for (line_idx, line) in reader.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(is_separator).filter(|f| !f.is_empty()).collect();
        if fields.len() < 3 {
            return Err(CastorError::InvalidDataset(format!(
                "line {line_no}: need a label and at least 2 values, got {} fields",
                fields.len()
            )));
        }
        match expected_fields {
            None => expected_fields = Some(fields.len()),
            Some(expected) if expected != fields.len() => {
                return Err(CastorError::RaggedDataset {
                    line: line_no,
                    expected,
                    got: fields.len(),
                });
            }
            Some(_) => {}
        }

        let token = fields[0];
        let label = match vocabulary.iter().position(|t| t == token) {
            Some(idx) => idx,
            None => {
                vocabulary.push(token.to_string());
                vocabulary.len() - 1
            }
        };
        labels.push(label);

        let mut values = Vec::with_capacity(fields.len() - 1);
        for (field_idx, raw) in fields.iter().enumerate().skip(1) {
            let column = field_idx + 1; // 1-based field position in the row
            let value: f64 = raw.parse().map_err(|_| CastorError::ParseError {
                line: line_no,
                column,
                token: raw.to_string(),
            })?;
            if !value.is_finite() {
                return Err(CastorError::NonFiniteValue {
                    line: line_no,
                    column,
                });
            }
            values.push(value);
        }
        series.push(TimeSeries::new(values)?);
    }

    if series.is_empty() {
        return Err(CastorError::InvalidDataset("file contains no samples".into()));
    }
    LabeledDataset::new(series, labels, vocabulary)
}

/// Loads a UCR-style delimited text file.
pub fn load_ucr_tsv<P: AsRef<Path>>(path: P) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_ucr(file)
}

/// Writes a dataset back out in UCR TSV form.
///
/// Values use the shortest decimal representation that round-trips, so
/// load -> write -> load preserves every bit.
pub fn write_ucr_tsv<P: AsRef<Path>>(dataset: &LabeledDataset, path: P) -> Result<()> {
    let mut out = String::new();
    for (s, &label) in dataset.series().iter().zip(dataset.labels()) {
        out.push_str(&dataset.vocabulary()[label]);
        for v in s.values() {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path.as_ref())?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Assignment of every sample to one of `folds` folds.
#[derive(Debug, Clone)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    folds: usize,
    stratified: bool,
}

impl FoldAssignment {
    pub fn folds(&self) -> usize {
        self.folds
    }

    /// Fold index per sample.
    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    /// False when a class was too small and the split fell back to an
    /// unstratified shuffle.
    pub fn is_stratified(&self) -> bool {
        self.stratified
    }

    /// (train, test) sample indices for the given fold.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &f) in self.fold_of.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Stratified k-fold assignment, deterministic for a fixed seed.
///
/// Each class is shuffled and dealt round-robin from a random starting
/// fold, so per-class fold counts differ by at most one. If any class has
/// fewer members than `folds`, the split falls back to an unstratified
/// shuffle and flags the result.
pub fn stratified_kfold(
    dataset: &LabeledDataset,
    folds: usize,
    seed: u64,
) -> Result<FoldAssignment> {
    let n = dataset.len();
    if folds < 2 || folds > n {
        return Err(CastorError::InvalidFoldCount { folds, samples: n });
    }

    let mut rng = substream(seed, &[STREAM_FOLDS]);
    let members = dataset.class_members();
    let stratified = members.iter().all(|m| m.is_empty() || m.len() >= folds);
    let mut fold_of = vec![0usize; n];

    if stratified {
        for class_members in &members {
            let mut shuffled = class_members.clone();
            shuffled.shuffle(&mut rng);
            let start = rng.gen_range(0..folds);
            for (q, &sample) in shuffled.iter().enumerate() {
                fold_of[sample] = (start + q) % folds;
            }
        }
    } else {
        let mut shuffled: Vec<usize> = (0..n).collect();
        shuffled.shuffle(&mut rng);
        for (q, &sample) in shuffled.iter().enumerate() {
            fold_of[sample] = q % folds;
        }
    }

    Ok(FoldAssignment {
        fold_of,
        folds,
        stratified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(text: &str) -> Result<LabeledDataset> {
        parse_ucr(text.as_bytes())
    }

    #[test]
    fn parses_tab_separated_lines() {
        let ds = parse_str("1\t0.0\t1.0\t2.0\n2\t2.0\t1.0\t0.0\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.series_len(), 3);
        assert_eq!(ds.vocabulary(), &["1".to_string(), "2".to_string()]);
        assert_eq!(ds.labels(), &[0, 1]);
        assert_eq!(ds.series()[0].values(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn accepts_commas_spaces_comments_and_blank_lines() {
        let ds = parse_str("# header\n\na, 1.0, 2.0,3.0\nb  4.0 5.0  6.0\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.vocabulary(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ds.series()[1].values(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn ragged_rows_name_the_line() {
        let err = parse_str("1\t0\t1\t2\t3\n2\t0\t1\t2\t3\t4\n").unwrap_err();
        match err {
            CastorError::RaggedDataset { line, expected, got } => {
                assert_eq!(line, 2);
                assert_eq!(expected, 5);
                assert_eq!(got, 6);
            }
            other => panic!("expected RaggedDataset, got {other:?}"),
        }
    }

    #[test]
    fn bad_token_reports_line_and_column() {
        let err = parse_str("1\t0.0\tx\t2.0\n2\t0.0\t1.0\t2.0\n").unwrap_err();
        match err {
            CastorError::ParseError { line, column, token } => {
                assert_eq!(line, 1);
                assert_eq!(column, 3);
                assert_eq!(token, "x");
            }
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let err = parse_str("1\t0.0\tnan\t2.0\n2\t0.0\t1.0\t2.0\n").unwrap_err();
        assert!(matches!(
            err,
            CastorError::NonFiniteValue { line: 1, column: 3 }
        ));
    }

    #[test]
    fn single_class_is_rejected() {
        let err = parse_str("1\t0.0\t1.0\n1\t2.0\t3.0\n").unwrap_err();
        assert!(matches!(err, CastorError::InvalidDataset(_)));
    }

    #[test]
    fn difference_examples() {
        let t = TimeSeries::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(first_order_difference(&t).unwrap().values(), &[1.0, 1.0, 1.0]);

        let t = TimeSeries::new(vec![0.0, 5.0, 1.0]).unwrap();
        assert_eq!(first_order_difference(&t).unwrap().values(), &[5.0, -4.0]);

        let t = TimeSeries::new(vec![3.5, 3.5, 3.5, 3.5]).unwrap();
        assert_eq!(first_order_difference(&t).unwrap().values(), &[0.0, 0.0, 0.0]);

        let t = TimeSeries::new(vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            first_order_difference(&t),
            Err(CastorError::SeriesTooShort { len: 2 })
        ));
    }

    #[test]
    fn difference_telescopes() {
        let values: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 * 0.5 - 2.0).collect();
        let t = TimeSeries::new(values.clone()).unwrap();
        let d = first_order_difference(&t).unwrap();
        assert_eq!(d.len(), t.len() - 1);
        let sum: f64 = d.values().iter().sum();
        assert!((sum - (values[values.len() - 1] - values[0])).abs() < 1e-12);
    }

    #[test]
    fn roundtrip_preserves_bits() {
        let text = "1\t0.1\t-2.5e-3\t3.25\n2\t7.125\t0.3333333333333333\t-1e10\n";
        let ds = parse_str(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roundtrip.tsv");
        write_ucr_tsv(&ds, &path).unwrap();
        let reloaded = load_ucr_tsv(&path).unwrap();
        assert_eq!(ds.labels(), reloaded.labels());
        assert_eq!(ds.vocabulary(), reloaded.vocabulary());
        for (a, b) in ds.series().iter().zip(reloaded.series()) {
            assert_eq!(a.values(), b.values());
        }
    }

    fn toy_dataset(class_counts: &[usize], m: usize) -> LabeledDataset {
        let mut series = Vec::new();
        let mut labels = Vec::new();
        for (c, &count) in class_counts.iter().enumerate() {
            for i in 0..count {
                let values = (0..m).map(|t| (c * 100 + i + t) as f64).collect();
                series.push(TimeSeries::new(values).unwrap());
                labels.push(c);
            }
        }
        let vocab = (0..class_counts.len()).map(|c| c.to_string()).collect();
        LabeledDataset::new(series, labels, vocab).unwrap()
    }

    #[test]
    fn kfold_balanced_classes_get_one_per_fold() {
        let ds = toy_dataset(&[5, 5], 4);
        let assignment = stratified_kfold(&ds, 5, 3).unwrap();
        assert!(assignment.is_stratified());
        for fold in 0..5 {
            let (_, test) = assignment.split(fold);
            assert_eq!(test.len(), 2);
            let classes: Vec<usize> = test.iter().map(|&i| ds.labels()[i]).collect();
            assert!(classes.contains(&0) && classes.contains(&1));
        }
    }

    #[test]
    fn kfold_is_deterministic_and_a_partition() {
        let ds = toy_dataset(&[5, 4], 4);
        let a = stratified_kfold(&ds, 3, 99).unwrap();
        let b = stratified_kfold(&ds, 3, 99).unwrap();
        assert_eq!(a.fold_of(), b.fold_of());
        // partition: every sample in exactly one fold
        let mut seen = vec![0usize; ds.len()];
        for fold in 0..3 {
            let (_, test) = a.split(fold);
            for i in test {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn kfold_class_counts_within_one() {
        let ds = toy_dataset(&[5, 4], 4);
        let assignment = stratified_kfold(&ds, 3, 7).unwrap();
        for class in 0..2 {
            let mut counts = vec![0usize; 3];
            for (i, &f) in assignment.fold_of().iter().enumerate() {
                if ds.labels()[i] == class {
                    counts[f] += 1;
                }
            }
            let (min, max) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(max - min <= 1, "class {class} counts {counts:?}");
        }
    }

    #[test]
    fn kfold_falls_back_when_class_too_small() {
        let ds = toy_dataset(&[6, 2], 4);
        let assignment = stratified_kfold(&ds, 4, 1).unwrap();
        assert!(!assignment.is_stratified());
        let mut seen = vec![0usize; ds.len()];
        for fold in 0..4 {
            for i in assignment.split(fold).1 {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn kfold_rejects_bad_fold_counts() {
        let ds = toy_dataset(&[3, 3], 4);
        assert!(matches!(
            stratified_kfold(&ds, 7, 0),
            Err(CastorError::InvalidFoldCount { folds: 7, samples: 6 })
        ));
        assert!(matches!(
            stratified_kfold(&ds, 1, 0),
            Err(CastorError::InvalidFoldCount { .. })
        ));
    }

    #[test]
    fn subset_keeps_vocabulary() {
        let ds = toy_dataset(&[3, 3], 4);
        let sub = ds.subset(&[0, 1, 3]).unwrap();
        assert_eq!(sub.len(), 3);
        assert_eq!(sub.vocabulary(), ds.vocabulary());
        assert_eq!(sub.labels(), &[0, 0, 1]);
    }

    #[test]
    fn differenced_is_cached_and_consistent() {
        let ds = toy_dataset(&[2, 2], 5);
        let d1 = ds.differenced().unwrap();
        assert_eq!(d1.len(), ds.len());
        assert_eq!(d1[0].len(), ds.series_len() - 1);
        let expected = first_order_difference(&ds.series()[0]).unwrap();
        assert_eq!(d1[0].values(), expected.values());
    }

    mod roundtrip_properties {
        use super::*;
        use proptest::prelude::*;

        fn finite_f64() -> impl Strategy<Value = f64> {
            any::<f64>().prop_filter("finite", |v| v.is_finite())
        }

        fn arbitrary_dataset() -> impl Strategy<Value = LabeledDataset> {
            (2usize..6, 2usize..16).prop_flat_map(|(n, m)| {
                (
                    proptest::collection::vec(0usize..2, n),
                    proptest::collection::vec(proptest::collection::vec(finite_f64(), m), n),
                )
            })
            .prop_map(|(mut labels, rows)| {
                // guarantee both classes appear so construction succeeds
                labels[0] = 0;
                labels[1] = 1;
                let series = rows
                    .into_iter()
                    .map(|v| TimeSeries::new(v).unwrap())
                    .collect();
                let vocab = vec!["a".to_string(), "b".to_string()];
                LabeledDataset::new(series, labels, vocab).unwrap()
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            // The writer promises a shortest round-tripping decimal form,
            // so write -> load must preserve every bit of every value.
            #[test]
            fn write_then_load_preserves_every_bit(ds in arbitrary_dataset()) {
                let dir = tempfile::tempdir().unwrap();
                let path = dir.path().join("prop.tsv");
                write_ucr_tsv(&ds, &path).unwrap();
                let reloaded = load_ucr_tsv(&path).unwrap();

                prop_assert_eq!(ds.len(), reloaded.len());
                prop_assert_eq!(ds.series_len(), reloaded.series_len());
                for i in 0..ds.len() {
                    let original = &ds.vocabulary()[ds.labels()[i]];
                    let reread = &reloaded.vocabulary()[reloaded.labels()[i]];
                    prop_assert_eq!(original, reread);
                    let a = ds.series()[i].values();
                    let b = reloaded.series()[i].values();
                    for (x, y) in a.iter().zip(b) {
                        prop_assert_eq!(x.to_bits(), y.to_bits());
                    }
                }
            }
        }
    }
}
