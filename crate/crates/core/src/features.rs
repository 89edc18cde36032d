//! Patient records, the declarative feature schema, and synthetic populations.
//!
//! A record holds one or more observations (field name to raw value). The
//! schema fixes the field order, imputes missing fields with their defaults,
//! z-normalizes, and expands the observations to `frames_per_record` frames by
//! cycling through them. A record with a single observation therefore yields
//! identical frames.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{FeatureSet, FeatureVector, GmmModel};

pub const DEFAULT_FRAMES_PER_RECORD: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub fields: BTreeMap<String, f64>,
    /// Further observations beyond `fields`, used as additional frames.
    #[serde(default, rename = "frames", skip_serializing_if = "Vec::is_empty")]
    pub extra_frames: Vec<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submitted_at: Option<f64>,
    /// Ground-truth specialty, present in labeled training data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl PatientRecord {
    pub fn new(patient_id: impl Into<String>, fields: BTreeMap<String, f64>) -> Self {
        Self {
            patient_id: patient_id.into(),
            fields,
            extra_frames: Vec::new(),
            submitted_at: None,
            label: None,
        }
    }

    pub fn observations(&self) -> impl Iterator<Item = &BTreeMap<String, f64>> {
        std::iter::once(&self.fields).chain(self.extra_frames.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub default: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaFile", into = "SchemaFile")]
pub struct FeatureSchema {
    fields: Vec<FieldSpec>,
    frames_per_record: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    fields: Vec<FieldSpec>,
    #[serde(default = "default_frames")]
    frames_per_record: usize,
}

fn default_frames() -> usize {
    DEFAULT_FRAMES_PER_RECORD
}

impl TryFrom<SchemaFile> for FeatureSchema {
    type Error = Error;

    fn try_from(f: SchemaFile) -> Result<Self> {
        FeatureSchema::new(f.fields, f.frames_per_record)
    }
}

impl From<FeatureSchema> for SchemaFile {
    fn from(s: FeatureSchema) -> Self {
        SchemaFile {
            fields: s.fields,
            frames_per_record: s.frames_per_record,
        }
    }
}

impl FeatureSchema {
    pub fn new(fields: Vec<FieldSpec>, frames_per_record: usize) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::InvalidSchema("schema declares no fields".into()));
        }
        if frames_per_record == 0 {
            return Err(Error::InvalidSchema(
                "frames_per_record must be >= 1".into(),
            ));
        }
        for (i, f) in fields.iter().enumerate() {
            if f.name.is_empty() {
                return Err(Error::InvalidSchema(format!("field {i} has an empty name")));
            }
            if fields[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate field `{}`",
                    f.name
                )));
            }
            if !(f.std > 0.0) || !f.std.is_finite() {
                return Err(Error::InvalidSchema(format!(
                    "field `{}`: std must be positive and finite",
                    f.name
                )));
            }
            if !f.mean.is_finite() || !f.default.is_finite() {
                return Err(Error::InvalidSchema(format!(
                    "field `{}`: mean and default must be finite",
                    f.name
                )));
            }
        }
        Ok(Self {
            fields,
            frames_per_record,
        })
    }

    /// A schema with identity normalization (mean 0, std 1, default 0).
    pub fn identity<S: Into<String>>(
        names: impl IntoIterator<Item = S>,
        frames_per_record: usize,
    ) -> Result<Self> {
        let fields = names
            .into_iter()
            .map(|n| FieldSpec {
                name: n.into(),
                mean: 0.0,
                std: 1.0,
                default: 0.0,
            })
            .collect();
        Self::new(fields, frames_per_record)
    }

    pub fn dimension(&self) -> usize {
        self.fields.len()
    }

    pub fn frames_per_record(&self) -> usize {
        self.frames_per_record
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    fn normalize(&self, patient: &str, obs: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        self.fields
            .iter()
            .map(|f| {
                let raw = obs.get(&f.name).copied().unwrap_or(f.default);
                if !raw.is_finite() {
                    return Err(Error::NonFiniteField {
                        patient: patient.to_string(),
                        field: f.name.clone(),
                    });
                }
                Ok((raw - f.mean) / f.std)
            })
            .collect()
    }

    /// Maps a normalized vector back to raw field values.
    pub fn denormalize(&self, z: &[f64]) -> BTreeMap<String, f64> {
        self.fields
            .iter()
            .zip(z)
            .map(|(f, v)| (f.name.clone(), v * f.std + f.mean))
            .collect()
    }
}

/// Frames extracted from one record plus the number of ignored field entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub features: FeatureSet,
    pub unknown_fields: usize,
}

pub fn extract_features(record: &PatientRecord, schema: &FeatureSchema) -> Result<Extraction> {
    if record.patient_id.is_empty() {
        return Err(Error::InvalidRecord("patient_id is empty".into()));
    }
    let mut unknown_fields = 0;
    let mut observations = Vec::with_capacity(1 + record.extra_frames.len());
    for obs in record.observations() {
        unknown_fields += obs
            .keys()
            .filter(|k| !schema.fields.iter().any(|f| &f.name == *k))
            .count();
        observations.push(schema.normalize(&record.patient_id, obs)?);
    }
    let m = observations.len();
    let vectors = (0..schema.frames_per_record)
        .map(|h| FeatureVector::new(observations[h % m].clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Extraction {
        features: FeatureSet::new(schema.dimension(), vectors)?,
        unknown_fields,
    })
}

/// One specialty of a synthetic arrival stream.
///
/// `generator` lives in normalized feature space; sampled vectors are mapped
/// back to raw values through the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub label: String,
    pub proportion: f64,
    pub generator: GmmModel,
}

pub fn validate_population(specs: &[PopulationSpec], schema: &FeatureSchema) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::InvalidPopulation("no specialties given".into()));
    }
    let mut total = 0.0;
    for (i, s) in specs.iter().enumerate() {
        if specs[..i].iter().any(|o| o.label == s.label) {
            return Err(Error::InvalidPopulation(format!(
                "duplicate label `{}`",
                s.label
            )));
        }
        if !(s.proportion >= 0.0) || !s.proportion.is_finite() {
            return Err(Error::InvalidPopulation(format!(
                "`{}`: proportion must be a finite non-negative number",
                s.label
            )));
        }
        if s.generator.dimension() != schema.dimension() {
            return Err(Error::DimensionMismatch {
                expected: schema.dimension(),
                found: s.generator.dimension(),
            });
        }
        total += s.proportion;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidPopulation(format!(
            "proportions sum to {total}, not 1"
        )));
    }
    Ok(())
}

pub fn load_population(path: impl AsRef<Path>) -> Result<Vec<PopulationSpec>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Index of the specialty drawn by mixing proportion.
pub fn choose_specialty<R: Rng + ?Sized>(specs: &[PopulationSpec], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, s) in specs.iter().enumerate() {
        acc += s.proportion;
        if u < acc {
            return i;
        }
    }
    // rounding left a sliver above the last cumulative sum
    specs
        .iter()
        .rposition(|s| s.proportion > 0.0)
        .unwrap_or(specs.len() - 1)
}

/// Builds one synthetic record with `frames_per_record` i.i.d. observations.
pub fn synth_patient<R: Rng + ?Sized>(
    spec: &PopulationSpec,
    schema: &FeatureSchema,
    patient_id: String,
    rng: &mut R,
) -> PatientRecord {
    let mut frames =
        (0..schema.frames_per_record()).map(|_| schema.denormalize(&spec.generator.sample(rng)));
    let first = frames.next().expect("frames_per_record >= 1");
    PatientRecord {
        patient_id,
        fields: first,
        extra_frames: frames.collect(),
        submitted_at: None,
        label: Some(spec.label.clone()),
    }
}

/// Draws `count` labeled synthetic patients with a ChaCha8 stream seeded by
/// `seed`. Ids are `p000000`, `p000001`, ...
pub fn synth_patients(
    specs: &[PopulationSpec],
    schema: &FeatureSchema,
    count: usize,
    seed: u64,
) -> Result<Vec<(PatientRecord, String)>> {
    validate_population(specs, schema)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|i| {
            let s = &specs[choose_specialty(specs, &mut rng)];
            let rec = synth_patient(s, schema, format!("p{i:06}"), &mut rng);
            (rec, s.label.clone())
        })
        .collect())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<PatientRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| Error::JsonLine {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records<'a>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = &'a PatientRecord>,
) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("record serialization is infallible");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}
