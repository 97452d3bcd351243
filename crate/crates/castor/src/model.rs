//! Model persistence: a little-endian binary container and a JSON mirror.
//!
//! A saved model starts with the magic bytes `CASTOR01`, then the
//! configuration echo, the per-representation shapelet banks (flags,
//! values, thresholds), and optionally the fitted scaler and ridge
//! weights. Every multi-byte value is little-endian; saving the same
//! model twice produces byte-identical files.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde_json::json;

use crate::classifier::{FittedScaler, Predictions, RidgeModel, ScalerKind, ScalerStats};
use crate::dataset::TimeSeries;
use crate::error::{CastorError, Result};
use crate::params::{
    AggregateMode, CastorConfig, CastorParams, NormScope, OccurrenceMode, Representation,
    RepresentationBank,
};
use crate::profile::DilatedShapelet;
use crate::transform::transform;

const MODEL_MAGIC: &[u8; 8] = b"CASTOR01";

/// Fitted transform parameters plus (optionally) the trained classifier.
#[derive(Debug, Clone)]
pub struct CastorModel {
    params: CastorParams,
    classifier: Option<RidgeModel>,
}

impl CastorModel {
    pub fn new(params: CastorParams, classifier: Option<RidgeModel>) -> Self {
        Self { params, classifier }
    }

    pub fn params(&self) -> &CastorParams {
        &self.params
    }

    pub fn classifier(&self) -> Option<&RidgeModel> {
        self.classifier.as_ref()
    }

    /// Transforms the series and scores them with the stored classifier.
    pub fn predict(&self, series: &[TimeSeries]) -> Result<Predictions> {
        let classifier = self.classifier.as_ref().ok_or_else(|| {
            CastorError::InvalidConfig("model holds no classifier; fit one first".into())
        })?;
        let features = transform(series, &self.params)?;
        classifier.predict(features.values())
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(&mut BufReader::new(file))
    }

    /// Serializes into any writer; see the module docs for the layout.
    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        write_config(w, self.params.config())?;
        write_u64(w, self.params.series_len() as u64)?;
        write_u64(w, self.params.banks().len() as u64)?;
        for bank in self.params.banks() {
            write_bank(w, bank)?;
        }
        match &self.classifier {
            None => w.write_all(&[0u8])?,
            Some(model) => {
                w.write_all(&[1u8])?;
                write_classifier(w, model)?;
            }
        }
        Ok(())
    }

    /// Deserializes from any reader, validating magic bytes and shapes.
    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(CastorError::ModelFormat(format!(
                "bad magic bytes {magic:?}; not a model file"
            )));
        }
        let config = read_config(r)?;
        let series_len = read_u64(r)? as usize;
        let bank_count = read_u64(r)? as usize;
        if bank_count > 2 {
            return Err(CastorError::ModelFormat(format!(
                "implausible bank count {bank_count}"
            )));
        }
        let mut banks = Vec::with_capacity(bank_count);
        for _ in 0..bank_count {
            banks.push(read_bank(r, config.shapelet_len)?);
        }
        let params = CastorParams::from_parts(config, series_len, banks);

        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let classifier = match flag[0] {
            0 => None,
            1 => Some(read_classifier(r)?),
            other => {
                return Err(CastorError::ModelFormat(format!(
                    "bad classifier flag {other}"
                )))
            }
        };
        Ok(Self { params, classifier })
    }

    /// A JSON tree mirroring the binary layout, for inspection and
    /// downstream tooling.
    pub fn to_json(&self) -> serde_json::Value {
        let banks: Vec<serde_json::Value> = self
            .params
            .banks()
            .iter()
            .map(|bank| {
                let shapelets: Vec<serde_json::Value> = bank
                    .shapelets()
                    .iter()
                    .map(|s| {
                        json!({
                            "dilation": s.dilation(),
                            "normalized": s.is_normalized(),
                            "values": s.values(),
                        })
                    })
                    .collect();
                json!({
                    "representation": bank.representation(),
                    "groups": bank.groups(),
                    "shapelets_per_group": bank.shapelets_per_group(),
                    "exponents": bank.exponents(),
                    "series_len": bank.series_len(),
                    "shapelets": shapelets,
                    "thresholds": bank.thresholds(),
                })
            })
            .collect();
        let classifier = self.classifier.as_ref().map(|model| {
            let scaler = match model.scaler().stats() {
                None => json!({ "kind": scaler_kind_name(model.scaler().kind()) }),
                Some(stats) => json!({
                    "kind": scaler_kind_name(model.scaler().kind()),
                    "mean": stats.mean,
                    "std": stats.std,
                    "epsilon": stats.epsilon,
                }),
            };
            let weights: Vec<Vec<f64>> = model
                .weights()
                .rows()
                .into_iter()
                .map(|row| row.to_vec())
                .collect();
            json!({
                "scaler": scaler,
                "vocabulary": model.vocabulary(),
                "weights": weights,
                "intercepts": model.intercepts(),
                "alpha": model.alpha(),
            })
        });
        json!({
            "format": "CASTOR01",
            "config": self.params.config(),
            "series_len": self.params.series_len(),
            "banks": banks,
            "classifier": classifier,
        })
    }
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut buf = [0u8; 1];
    r.read_exact(&mut buf)?;
    Ok(buf[0])
}

fn scaler_kind_name(kind: ScalerKind) -> &'static str {
    match kind {
        ScalerKind::Sparse => "sparse",
        ScalerKind::Standard => "standard",
        ScalerKind::None => "none",
    }
}

fn write_config<W: Write>(w: &mut W, c: &CastorConfig) -> Result<()> {
    write_u64(w, c.groups as u64)?;
    write_u64(w, c.shapelets_per_group as u64)?;
    write_u64(w, c.shapelet_len as u64)?;
    write_f64(w, c.rho_lower)?;
    write_f64(w, c.rho_upper)?;
    write_f64(w, c.rho_norm)?;
    let flags = [
        u8::from(c.use_diff),
        match c.min_mode {
            AggregateMode::Hard => 0,
            AggregateMode::Soft => 1,
        },
        match c.max_mode {
            AggregateMode::Hard => 0,
            AggregateMode::Soft => 1,
        },
        match c.occurrence_mode {
            OccurrenceMode::Independent => 0,
            OccurrenceMode::Competing => 1,
        },
        match c.norm_scope {
            NormScope::Group => 0,
            NormScope::Shapelet => 1,
        },
    ];
    w.write_all(&flags)?;
    write_u64(w, c.seed)?;
    Ok(())
}

fn read_config<R: Read>(r: &mut R) -> Result<CastorConfig> {
    let groups = read_u64(r)? as usize;
    let shapelets_per_group = read_u64(r)? as usize;
    let shapelet_len = read_u64(r)? as usize;
    let rho_lower = read_f64(r)?;
    let rho_upper = read_f64(r)?;
    let rho_norm = read_f64(r)?;
    let mut flags = [0u8; 5];
    r.read_exact(&mut flags)?;
    let bad = |what: &str, v: u8| CastorError::ModelFormat(format!("bad {what} code {v}"));
    let config = CastorConfig {
        groups,
        shapelets_per_group,
        shapelet_len,
        rho_lower,
        rho_upper,
        rho_norm,
        use_diff: match flags[0] {
            0 => false,
            1 => true,
            v => return Err(bad("use_diff", v)),
        },
        min_mode: match flags[1] {
            0 => AggregateMode::Hard,
            1 => AggregateMode::Soft,
            v => return Err(bad("min_mode", v)),
        },
        max_mode: match flags[2] {
            0 => AggregateMode::Hard,
            1 => AggregateMode::Soft,
            v => return Err(bad("max_mode", v)),
        },
        occurrence_mode: match flags[3] {
            0 => OccurrenceMode::Independent,
            1 => OccurrenceMode::Competing,
            v => return Err(bad("occurrence_mode", v)),
        },
        norm_scope: match flags[4] {
            0 => NormScope::Group,
            1 => NormScope::Shapelet,
            v => return Err(bad("norm_scope", v)),
        },
        seed: read_u64(r)?,
    };
    config.validate()?;
    Ok(config)
}

fn write_bank<W: Write>(w: &mut W, bank: &RepresentationBank) -> Result<()> {
    w.write_all(&[match bank.representation() {
        Representation::Original => 0u8,
        Representation::Differenced => 1u8,
    }])?;
    write_u64(w, bank.groups() as u64)?;
    write_u64(w, bank.shapelets_per_group() as u64)?;
    write_u64(w, bank.exponents() as u64)?;
    write_u64(w, bank.series_len() as u64)?;
    for s in bank.shapelets() {
        w.write_all(&[u8::from(s.is_normalized())])?;
    }
    for s in bank.shapelets() {
        for &v in s.values() {
            write_f64(w, v)?;
        }
    }
    for &t in bank.thresholds() {
        write_f64(w, t)?;
    }
    Ok(())
}

fn read_bank<R: Read>(r: &mut R, shapelet_len: usize) -> Result<RepresentationBank> {
    let representation = match read_u8(r)? {
        0 => Representation::Original,
        1 => Representation::Differenced,
        v => {
            return Err(CastorError::ModelFormat(format!(
                "bad representation code {v}"
            )))
        }
    };
    let groups = read_u64(r)? as usize;
    let shapelets_per_group = read_u64(r)? as usize;
    let exponents = read_u64(r)? as usize;
    let series_len = read_u64(r)? as usize;
    let slots = groups
        .checked_mul(shapelets_per_group)
        .and_then(|v| v.checked_mul(exponents))
        .ok_or_else(|| CastorError::ModelFormat("bank dimensions overflow".into()))?;

    let mut flags = vec![0u8; slots];
    r.read_exact(&mut flags)?;

    let mut shapelets = Vec::with_capacity(slots);
    for (slot, &flag) in flags.iter().enumerate() {
        let normalized = match flag {
            0 => false,
            1 => true,
            v => {
                return Err(CastorError::ModelFormat(format!(
                    "bad normalization flag {v}"
                )))
            }
        };
        let mut values = Vec::with_capacity(shapelet_len);
        for _ in 0..shapelet_len {
            values.push(read_f64(r)?);
        }
        // slot order is (group * E + exponent) * k + j
        let exponent = (slot / shapelets_per_group) % exponents;
        let dilation = 1usize << exponent;
        shapelets.push(DilatedShapelet::from_stored(values, dilation, normalized)?);
    }

    let mut thresholds = Vec::with_capacity(slots);
    for _ in 0..slots {
        thresholds.push(read_f64(r)?);
    }

    RepresentationBank::from_parts(
        representation,
        groups,
        shapelets_per_group,
        exponents,
        series_len,
        shapelets,
        thresholds,
        Vec::new(), // provenance is a fitting artifact, not persisted
    )
}

fn write_classifier<W: Write>(w: &mut W, model: &RidgeModel) -> Result<()> {
    let kind = match model.scaler().kind() {
        ScalerKind::Sparse => 0u8,
        ScalerKind::Standard => 1u8,
        ScalerKind::None => 2u8,
    };
    w.write_all(&[kind])?;
    if let Some(stats) = model.scaler().stats() {
        write_u64(w, stats.mean.len() as u64)?;
        for &v in stats.mean.iter().chain(&stats.std).chain(&stats.epsilon) {
            write_f64(w, v)?;
        }
    }
    write_u64(w, model.n_classes() as u64)?;
    write_u64(w, model.n_features() as u64)?;
    for token in model.vocabulary() {
        let bytes = token.as_bytes();
        write_u64(w, bytes.len() as u64)?;
        w.write_all(bytes)?;
    }
    for &v in model.weights().iter() {
        write_f64(w, v)?;
    }
    for &b in model.intercepts() {
        write_f64(w, b)?;
    }
    write_f64(w, model.alpha())?;
    Ok(())
}

fn read_classifier<R: Read>(r: &mut R) -> Result<RidgeModel> {
    let kind = match read_u8(r)? {
        0 => ScalerKind::Sparse,
        1 => ScalerKind::Standard,
        2 => ScalerKind::None,
        v => return Err(CastorError::ModelFormat(format!("bad scaler kind {v}"))),
    };
    let scaler = if kind == ScalerKind::None {
        FittedScaler::from_parts(kind, None)
    } else {
        let f = read_u64(r)? as usize;
        let read_vec = |r: &mut R| -> Result<Vec<f64>> {
            let mut v = Vec::with_capacity(f);
            for _ in 0..f {
                v.push(read_f64(r)?);
            }
            Ok(v)
        };
        let mean = read_vec(r)?;
        let std = read_vec(r)?;
        let epsilon = read_vec(r)?;
        FittedScaler::from_parts(kind, Some(ScalerStats { mean, std, epsilon }))
    };

    let classes = read_u64(r)? as usize;
    let features = read_u64(r)? as usize;
    let mut vocabulary = Vec::with_capacity(classes);
    for _ in 0..classes {
        let len = read_u64(r)? as usize;
        if len > 1 << 20 {
            return Err(CastorError::ModelFormat(format!(
                "implausible label length {len}"
            )));
        }
        let mut bytes = vec![0u8; len];
        r.read_exact(&mut bytes)?;
        vocabulary.push(String::from_utf8(bytes).map_err(|e| {
            CastorError::ModelFormat(format!("label is not valid UTF-8: {e}"))
        })?);
    }

    let total = classes
        .checked_mul(features)
        .ok_or_else(|| CastorError::ModelFormat("weight dimensions overflow".into()))?;
    let mut raw = Vec::with_capacity(total);
    for _ in 0..total {
        raw.push(read_f64(r)?);
    }
    let weights = Array2::from_shape_vec((classes, features), raw)
        .map_err(|e| CastorError::ModelFormat(format!("weight matrix truncated: {e}")))?;
    let mut intercepts = Vec::with_capacity(classes);
    for _ in 0..classes {
        intercepts.push(read_f64(r)?);
    }
    let alpha = read_f64(r)?;
    RidgeModel::from_parts(scaler, weights, intercepts, alpha, vocabulary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::fit_ridge_loocv;
    use crate::dataset::LabeledDataset;
    use crate::params::fit_params;
    use crate::rng::substream;
    use crate::transform::transform;
    use rand::Rng;

    fn toy_dataset(n_per_class: usize, m: usize, seed: u64) -> LabeledDataset {
        let mut rng = substream(seed, &[0x81]);
        let mut series = Vec::new();
        let mut labels = Vec::new();
        for class in 0..2 {
            for _ in 0..n_per_class {
                let values = (0..m)
                    .map(|t| {
                        let shape = if class == 0 { (t as f64 * 0.4).sin() } else { 0.0 };
                        shape + rng.gen_range(-0.3..0.3)
                    })
                    .collect();
                series.push(TimeSeries::new(values).unwrap());
                labels.push(class);
            }
        }
        LabeledDataset::new(series, labels, vec!["lo".into(), "hi".into()]).unwrap()
    }

    fn fitted_model(seed: u64) -> (LabeledDataset, CastorModel) {
        let ds = toy_dataset(5, 32, seed);
        let config = CastorConfig {
            groups: 4,
            shapelets_per_group: 3,
            shapelet_len: 5,
            seed,
            ..CastorConfig::default()
        };
        let params = fit_params(&ds, &config).unwrap();
        let features = transform(ds.series(), &params).unwrap();
        let (ridge, _) = fit_ridge_loocv(
            features.values(),
            ds.labels(),
            ds.vocabulary(),
            &crate::classifier::DEFAULT_ALPHAS,
            ScalerKind::Sparse,
        )
        .unwrap();
        (ds, CastorModel::new(params, Some(ridge)))
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let (_, model) = fitted_model(3);
        let mut first = Vec::new();
        model.write(&mut first).unwrap();
        let reloaded = CastorModel::read(&mut first.as_slice()).unwrap();
        let mut second = Vec::new();
        reloaded.write(&mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn reloaded_model_predicts_identically() {
        let (ds, model) = fitted_model(5);
        let mut buf = Vec::new();
        model.write(&mut buf).unwrap();
        let reloaded = CastorModel::read(&mut buf.as_slice()).unwrap();
        let a = model.predict(ds.series()).unwrap();
        let b = reloaded.predict(ds.series()).unwrap();
        assert_eq!(a.indices, b.indices);
        assert_eq!(a.scores, b.scores);
    }

    #[test]
    fn params_only_model_roundtrips() {
        let (ds, model) = fitted_model(7);
        let bare = CastorModel::new(model.params().clone(), None);
        let mut buf = Vec::new();
        bare.write(&mut buf).unwrap();
        let reloaded = CastorModel::read(&mut buf.as_slice()).unwrap();
        assert!(reloaded.classifier().is_none());
        assert!(matches!(
            reloaded.predict(ds.series()),
            Err(CastorError::InvalidConfig(_))
        ));
        let fa = transform(ds.series(), model.params()).unwrap();
        let fb = transform(ds.series(), reloaded.params()).unwrap();
        assert_eq!(fa, fb);
    }

    #[test]
    fn save_and_load_through_files() {
        let (ds, model) = fitted_model(9);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        model.save(&path).unwrap();
        model.save(dir.path().join("model2.bin")).unwrap();
        let bytes1 = std::fs::read(&path).unwrap();
        let bytes2 = std::fs::read(dir.path().join("model2.bin")).unwrap();
        assert_eq!(bytes1, bytes2);
        let reloaded = CastorModel::load(&path).unwrap();
        assert_eq!(
            model.predict(ds.series()).unwrap().labels,
            reloaded.predict(ds.series()).unwrap().labels
        );
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = Vec::new();
        fitted_model(11).1.write(&mut bytes).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            CastorModel::read(&mut bytes.as_slice()),
            Err(CastorError::ModelFormat(_))
        ));
    }

    #[test]
    fn truncated_file_fails_cleanly() {
        let mut bytes = Vec::new();
        fitted_model(13).1.write(&mut bytes).unwrap();
        bytes.truncate(bytes.len() / 2);
        assert!(CastorModel::read(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn json_export_mirrors_the_model() {
        let (_, model) = fitted_model(15);
        let v = model.to_json();
        assert_eq!(v["format"], "CASTOR01");
        assert_eq!(v["banks"].as_array().unwrap().len(), 2);
        assert_eq!(
            v["banks"][0]["shapelets"].as_array().unwrap().len(),
            model.params().banks()[0].shapelets().len()
        );
        assert_eq!(
            v["classifier"]["vocabulary"].as_array().unwrap().len(),
            2
        );
        assert_eq!(v["config"]["groups"], 4);
        // serialized tree parses back as JSON text
        let text = serde_json::to_string(&v).unwrap();
        let _: serde_json::Value = serde_json::from_str(&text).unwrap();
    }
}
