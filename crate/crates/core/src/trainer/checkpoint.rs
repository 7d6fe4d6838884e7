//! Binary checkpoints: magic, format version, a JSON header with the
//! parameter manifest and run metadata, then every value as little-endian f64.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{load_embeddings, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{ModelDims, Mqan};
use crate::tensor::{ParamSet, Tensor};

const MAGIC: &[u8; 8] = b"MQANCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
}

/// What is needed to rebuild the model around the stored values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub dims: ModelDims,
    pub vocab: Vocabulary,
    pub iteration: usize,
    /// Pretrained vector file, when the model uses one.
    #[serde(default)]
    pub embeddings: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub version: u32,
    pub params: Vec<ManifestEntry>,
    pub meta: CheckpointMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub values: Vec<(String, Tensor)>,
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ParamSet, meta: &CheckpointMeta) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        version: FORMAT_VERSION,
        params: params
            .iter()
            .map(|(_, name, t)| ManifestEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                dtype: "f64".into(),
            })
            .collect(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(20 + json.len() + 8 * params.num_values());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for (_, _, t) in params.iter() {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = data.as_slice();
    if take(&mut bytes, 8)? != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display())));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let len = u64::from_le_bytes(take(&mut bytes, 8)?.try_into().expect("8 bytes")) as usize;
    let header: Header = serde_json::from_slice(take(&mut bytes, len)?)?;
    let mut values = Vec::with_capacity(header.params.len());
    for entry in &header.params {
        if entry.dtype != "f64" {
            return Err(Error::Checkpoint(format!("`{}` has dtype {}", entry.name, entry.dtype)));
        }
        let n: usize = entry.shape.iter().product();
        let raw = take(&mut bytes, 8 * n)?;
        let vals = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        values.push((entry.name.clone(), Tensor::from_vec(&entry.shape, vals)?));
    }
    if !bytes.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len())));
    }
    Ok(Checkpoint { header, values })
}

impl Checkpoint {
    /// Copies stored values into `params`. Every parameter whose name is
    /// missing, unexpected or differently shaped is reported at once.
    pub fn apply(&self, params: &mut ParamSet) -> Result<()> {
        let mut bad = Vec::new();
        for (_, name, t) in params.iter() {
            match self.values.iter().find(|(n, _)| n == name) {
                Some((_, v)) if v.shape() == t.shape() => {}
                _ => bad.push(name.to_string()),
            }
        }
        for (name, _) in &self.values {
            if params.id(name).is_none() {
                bad.push(name.clone());
            }
        }
        if !bad.is_empty() {
            return Err(Error::Manifest(bad));
        }
        for (name, v) in &self.values {
            let id = params.id(name).expect("checked above");
            *params.get_mut(id) = v.clone();
        }
        Ok(())
    }

    /// Rebuilds the model recorded in the header.
    pub fn into_model(self) -> Result<Mqan> {
        let meta = &self.header.meta;
        let pretrained = match &meta.embeddings {
            Some(p) => Some(load_embeddings(p, meta.dims.word_dim)?),
            None => None,
        };
        let mut model = Mqan::new(meta.dims, meta.vocab.clone(), pretrained, 0)?;
        self.apply(&mut model.params)?;
        Ok(model)
    }
}
