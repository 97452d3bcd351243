//! Seeded synthetic classification data for tests and benchmarks.
//!
//! Each class owns a short template shape (spike, step, triangle, double
//! spike — cycled by class index) and an anchor region drawn once per
//! class. A sample is white noise plus the class template injected near
//! the anchor with a small positional jitter. Labels are dealt
//! round-robin, so classes stay balanced. Per-class and per-sample seed
//! substreams make generation order-independent and reproducible.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{LabeledDataset, TimeSeries};
use crate::error::{CastorError, Result};
use crate::rng::{substream, STREAM_SHUFFLE, STREAM_SYNTH_CLASS, STREAM_SYNTH_SAMPLE};

/// Shape of the synthetic generator's output.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub samples: usize,
    pub series_len: usize,
    /// Peak height of the injected template relative to unit noise.
    pub amplitude: f64,
    /// Standard deviation of the white-noise floor.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 2,
            samples: 200,
            series_len: 128,
            amplitude: 4.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(CastorError::InvalidConfig(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.samples < self.classes.max(2) {
            return Err(CastorError::InvalidConfig(format!(
                "need at least one sample per class ({} classes), got {}",
                self.classes, self.samples
            )));
        }
        if self.series_len < 32 {
            return Err(CastorError::InvalidConfig(format!(
                "series length must be at least 32, got {}",
                self.series_len
            )));
        }
        if !self.amplitude.is_finite() || !self.noise.is_finite() || self.noise < 0.0 {
            return Err(CastorError::InvalidConfig(
                "amplitude must be finite and noise nonnegative".into(),
            ));
        }
        Ok(())
    }

    fn template_width(&self) -> usize {
        (self.series_len / 8).max(8)
    }
}

/// Template value at offset `i` of a width-`w` window, in [0, 1].
fn template_value(kind: usize, i: usize, w: usize) -> f64 {
    let x = i as f64;
    let wf = w as f64;
    match kind % 4 {
        // narrow bump in the middle
        0 => (-((x - wf / 2.0) / (wf / 6.0)).powi(2)).exp(),
        // half-window step
        1 => {
            if i >= w / 2 {
                1.0
            } else {
                0.0
            }
        }
        // symmetric ramp
        2 => 1.0 - (x - wf / 2.0).abs() / (wf / 2.0),
        // two narrow bumps
        _ => {
            let b1 = (-((x - wf / 4.0) / (wf / 10.0)).powi(2)).exp();
            let b2 = (-((x - 3.0 * wf / 4.0) / (wf / 10.0)).powi(2)).exp();
            b1.max(b2)
        }
    }
}

/// Generates a balanced labeled dataset per the recipe above. Label
/// tokens are the class indices as strings.
pub fn generate(config: &SynthConfig) -> Result<LabeledDataset> {
    config.validate()?;
    let m = config.series_len;
    let w = config.template_width();
    let seed = config.seed;

    // one anchor per class, drawn from the class substream
    let anchors: Vec<usize> = (0..config.classes)
        .map(|c| substream(seed, &[STREAM_SYNTH_CLASS, c as u64]).gen_range(0..=m - w))
        .collect();

    let noise_dist = Normal::new(0.0, config.noise).map_err(|e| {
        CastorError::InvalidConfig(format!("invalid noise distribution: {e}"))
    })?;

    let mut series = Vec::with_capacity(config.samples);
    let mut labels = Vec::with_capacity(config.samples);
    for i in 0..config.samples {
        let class = i % config.classes;
        let mut rng = substream(seed, &[STREAM_SYNTH_SAMPLE, i as u64]);
        // draw order: jitter first, then the noise floor
        let jitter = rng.gen_range(-(w as i64 / 4)..=w as i64 / 4);
        let start = (anchors[class] as i64 + jitter).clamp(0, (m - w) as i64) as usize;
        let mut values: Vec<f64> = (0..m).map(|_| noise_dist.sample(&mut rng)).collect();
        for offset in 0..w {
            values[start + offset] += config.amplitude * template_value(class, offset, w);
        }
        series.push(TimeSeries::new(values)?);
        labels.push(class);
    }

    let vocabulary = (0..config.classes).map(|c| c.to_string()).collect();
    LabeledDataset::new(series, labels, vocabulary)
}

/// Returns a copy of the dataset with its label vector randomly permuted —
/// the negative control: any real class signal is destroyed while label
/// counts stay identical.
pub fn shuffle_labels(dataset: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    use rand::seq::SliceRandom;
    let mut labels = dataset.labels().to_vec();
    labels.shuffle(&mut substream(seed, &[STREAM_SHUFFLE]));
    dataset.with_labels(labels)
}
