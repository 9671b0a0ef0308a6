//! Checkpoint directories: `manifest.json` (version, config, schema, log and
//! the layout of `weights.bin`) plus `weights.bin` (little-endian f64).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{skeleton, Checkpoint, Imputer, ModelBody, Schema, Standardizer, TrainConfig, TrainingLog};
use crate::datagen::write_json;
use crate::models::ForestModel;
use crate::tensor::{ParamStore, Segment};
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Group {
    name: String,
    len: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    segments: Vec<Segment>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    config: TrainConfig,
    schema: Schema,
    groups: Vec<Group>,
    weights_bytes: usize,
    weights_sha256: String,
    log: TrainingLog,
}

fn stores(body: &ModelBody) -> Vec<&ParamStore> {
    match body {
        ModelBody::Forest(_) => Vec::new(),
        ModelBody::Net { predictor, imputer } => {
            let mut v = match imputer {
                Imputer::None => Vec::new(),
                Imputer::Cvae(c) => vec![&c.recognition_params, &c.generation_params],
                Imputer::Cgan(g) => vec![&g.generator_params, &g.discriminator_params],
            };
            v.push(&predictor.params);
            v
        }
    }
}

fn stores_mut(body: &mut ModelBody) -> Vec<&mut ParamStore> {
    match body {
        ModelBody::Forest(_) => Vec::new(),
        ModelBody::Net { predictor, imputer } => {
            let mut v = match imputer {
                Imputer::None => Vec::new(),
                Imputer::Cvae(c) => vec![&mut c.recognition_params, &mut c.generation_params],
                Imputer::Cgan(g) => vec![&mut g.generator_params, &mut g.discriminator_params],
            };
            v.push(&mut predictor.params);
            v
        }
    }
}

impl Checkpoint {
    fn layout(&self) -> (Vec<Group>, Vec<f64>) {
        let mut groups = Vec::new();
        let mut flat = Vec::new();
        let mut push = |name: &str, values: &[f64], segments: Vec<Segment>| {
            groups.push(Group {
                name: name.into(),
                len: values.len(),
                segments,
            });
            flat.extend_from_slice(values);
        };
        push("input_scaler", &self.input_scaler.flat(), Vec::new());
        push("output_scaler", &self.output_scaler.flat(), Vec::new());
        if let ModelBody::Forest(f) = &self.body {
            push("forest", &f.to_flat(), Vec::new());
        }
        for s in stores(&self.body) {
            push(s.name(), s.values(), s.segments().to_vec());
        }
        (groups, flat)
    }

    /// Writes the checkpoint directory, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (groups, flat) = self.layout();
        let bytes: Vec<u8> = flat.iter().flat_map(|v| v.to_le_bytes()).collect();
        let manifest = Manifest {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            schema: self.schema.clone(),
            groups,
            weights_bytes: bytes.len(),
            weights_sha256: hex::encode(Sha256::digest(&bytes)),
            log: self.log.clone(),
        };
        let wpath = dir.join(WEIGHTS_FILE);
        std::fs::write(&wpath, &bytes).map_err(|e| Error::io(&wpath, e))?;
        write_json(&dir.join(MANIFEST_FILE), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::parse(&mpath, e.to_string()))?;
        let found = raw.get("version").cloned().unwrap_or(serde_json::Value::Null);
        if found.as_u64() != Some(CHECKPOINT_VERSION as u64) {
            return Err(Error::Version {
                found: found.to_string(),
                expected: CHECKPOINT_VERSION.to_string(),
            });
        }
        let man: Manifest = serde_json::from_value(raw).map_err(|e| Error::parse(&mpath, e.to_string()))?;
        man.config.validate()?;
        let wpath = dir.join(WEIGHTS_FILE);
        let bytes = std::fs::read(&wpath).map_err(|e| Error::io(&wpath, e))?;
        if bytes.len() != man.weights_bytes {
            return Err(Error::Integrity(format!(
                "{} holds {} bytes, manifest expects {}",
                wpath.display(),
                bytes.len(),
                man.weights_bytes
            )));
        }
        if hex::encode(Sha256::digest(&bytes)) != man.weights_sha256 {
            return Err(Error::Integrity(format!("{} does not match its manifest hash", wpath.display())));
        }
        let flat: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let total: usize = man.groups.iter().map(|g| g.len).sum();
        if total != flat.len() {
            return Err(Error::Integrity(format!("weight groups cover {total} values, file has {}", flat.len())));
        }

        let mut chunks = std::collections::BTreeMap::new();
        let mut at = 0;
        for g in &man.groups {
            chunks.insert(g.name.clone(), (&flat[at..at + g.len], &g.segments));
            at += g.len;
        }
        let mut take = |name: &str| {
            chunks
                .remove(name)
                .ok_or_else(|| Error::Integrity(format!("weight group {name} missing")))
        };
        let width = man.schema.width();
        let input_scaler = scaler(take("input_scaler")?.0, width)?;
        let output_scaler = scaler(take("output_scaler")?.0, man.schema.outputs.len())?;
        let mut body = skeleton(&man.config, man.schema.clone());
        if let ModelBody::Forest(f) = &mut body {
            *f = ForestModel::from_flat(take("forest")?.0, width, man.schema.outputs.len())?;
        }
        for store in stores_mut(&mut body) {
            let (values, segments) = take(store.name())?;
            if segments.as_slice() != store.segments() {
                return Err(Error::Integrity(format!("layout of {} differs from its configuration", store.name())));
            }
            store.load_values(values).map_err(|e| Error::Integrity(e.to_string()))?;
        }
        if let Some(extra) = chunks.keys().next() {
            return Err(Error::Integrity(format!("unexpected weight group {extra}")));
        }
        Ok(Checkpoint {
            config: man.config,
            schema: man.schema,
            input_scaler,
            output_scaler,
            body,
            log: man.log,
        })
    }
}

fn scaler(flat: &[f64], width: usize) -> Result<Standardizer> {
    if flat.len() != 2 * width {
        return Err(Error::Integrity(format!("scaler holds {} values, expected {}", flat.len(), 2 * width)));
    }
    Ok(Standardizer::from_flat(flat))
}
