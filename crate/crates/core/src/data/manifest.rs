//! Dataset directory: `manifest.json` plus one raw little-endian `f32` file
//! per sample (row-major, exactly `H * W` values, no header).

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Attribute, AttributeSchema, Dataset, Sample, Scenario, Signal, Split};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SchemaRecord {
    attributes: Vec<Attribute>,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    id: String,
    file: String,
    scenario: Vec<usize>,
    split: Split,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    synthetic: bool,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    #[serde(rename = "H")]
    height: usize,
    #[serde(rename = "W")]
    width: usize,
    schema: SchemaRecord,
    unseen: Vec<Vec<usize>>,
    samples: Vec<SampleRecord>,
}

fn signal_file_name(id: &str) -> String {
    format!("{id}.f32")
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(ds.samples.len());
    for s in &ds.samples {
        let file = signal_file_name(&s.id);
        let bytes: Vec<u8> = s.signal.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        records.push(SampleRecord {
            id: s.id.clone(),
            file,
            scenario: s.scenario.0.clone(),
            split: s.split,
            synthetic: s.synthetic,
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        height: ds.height,
        width: ds.width,
        schema: SchemaRecord {
            attributes: ds.schema.attributes.clone(),
        },
        unseen: ds.unseen.iter().map(|u| u.0.clone()).collect(),
        samples: records,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::format(MANIFEST_FILE, format!("malformed manifest: {e}")))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::format(
            MANIFEST_FILE,
            format!("unsupported version {}", manifest.version),
        ));
    }
    let schema = AttributeSchema::new(manifest.schema.attributes)
        .map_err(|e| Error::format(MANIFEST_FILE, e.to_string()))?;
    let (h, w) = (manifest.height, manifest.width);
    if h == 0 || w == 0 {
        return Err(Error::format(MANIFEST_FILE, format!("invalid dimensions {h}x{w}")));
    }
    let expected_bytes = h * w * 4;

    let mut samples = Vec::with_capacity(manifest.samples.len());
    for rec in manifest.samples {
        let scenario = Scenario(rec.scenario);
        schema
            .check(&scenario)
            .map_err(|e| Error::format(&rec.id, e.to_string()))?;
        let file_path = dir.join(&rec.file);
        let bytes = fs::read(&file_path).map_err(|e| {
            Error::format(&rec.id, format!("cannot read signal file `{}`: {e}", rec.file))
        })?;
        if bytes.len() != expected_bytes {
            return Err(Error::format(
                &rec.id,
                format!(
                    "signal file `{}` has {} bytes, expected {} ({}x{} f32)",
                    rec.file,
                    bytes.len(),
                    expected_bytes,
                    h,
                    w
                ),
            ));
        }
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let signal = Signal::new(h, w, data)?;
        if let Some((i, v)) = signal.first_invalid() {
            return Err(Error::format(&rec.id, format!("pixel {i} = {v} outside [0,1]")));
        }
        samples.push(Sample {
            id: rec.id,
            signal,
            scenario,
            split: rec.split,
            synthetic: rec.synthetic,
        });
    }
    let unseen: BTreeSet<Scenario> = manifest.unseen.into_iter().map(Scenario).collect();
    let ds = Dataset {
        schema,
        height: h,
        width: w,
        samples,
        unseen,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_toy_dataset, split_dataset};

    fn sample_ds() -> Dataset {
        let schema = AttributeSchema::from_sizes(&[2, 3]).unwrap();
        let ds = generate_toy_dataset(&schema, 8, 12, 3, 0.1, 9).unwrap();
        split_dataset(&ds, 0.5, 2).unwrap()
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = sample_ds();
        ds.samples[0].synthetic = true;
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn missing_signal_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample_ds();
        save_dataset(&ds, dir.path()).unwrap();
        let victim = format!("{}.f32", ds.samples[2].id);
        fs::remove_file(dir.path().join(&victim)).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        assert!(err.to_string().contains(&victim), "{err}");
    }

    #[test]
    fn wrong_byte_length_reports_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample_ds();
        save_dataset(&ds, dir.path()).unwrap();
        fs::write(dir.path().join(format!("{}.f32", ds.samples[1].id)), [0u8; 10]).unwrap();
        let msg = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("10 bytes") && msg.contains("384"), "{msg}");
    }

    #[test]
    fn out_of_range_pixel_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample_ds();
        save_dataset(&ds, dir.path()).unwrap();
        let mut bytes = vec![0u8; 8 * 12 * 4];
        bytes[..4].copy_from_slice(&1.5f32.to_le_bytes());
        fs::write(dir.path().join(format!("{}.f32", ds.samples[0].id)), bytes).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains(&ds.samples[0].id));
    }

    #[test]
    fn malformed_manifest() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), "{\"version\":1}").unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Format { .. })));
    }
}
