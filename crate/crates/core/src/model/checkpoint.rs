//! Checkpoint files: one JSON header line, then little-endian `f32` data.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::{Model, ModelError};
use crate::ctc::Codec;
use crate::diffcore::{AdamConfig, AdamState, Params, Tensor};

type Named<'a> = (&'a String, &'a Tensor<f32>);

pub const CHECKPOINT_VERSION: u32 = 1;

/// Weights, optimizer moments and the update counter; enough to resume
/// training exactly where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: AdamState<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Group {
    Param,
    First,
    Second,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    group: Group,
    name: String,
    shape: Vec<usize>,
    /// Index of the first value in the data section.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    codec: Codec,
    step: u64,
    adam: AdamConfig,
    tensors: Vec<Entry>,
}

impl Checkpoint {
    pub fn new(model: Model, adam: AdamConfig) -> Self {
        Checkpoint {
            model,
            optimizer: AdamState::new(adam),
        }
    }

    pub fn step(&self) -> u64 {
        self.optimizer.step
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<(), ModelError> {
        let groups: [(Group, Vec<Named>); 3] = [
            (Group::Param, self.model.params.iter().collect()),
            (Group::First, self.optimizer.first.iter().collect()),
            (Group::Second, self.optimizer.second.iter().collect()),
        ];
        let mut tensors = Vec::new();
        let mut offset = 0;
        for (group, items) in &groups {
            for (name, t) in items {
                tensors.push(Entry {
                    group: *group,
                    name: (*name).clone(),
                    shape: t.shape().to_vec(),
                    offset,
                });
                offset += t.len();
            }
        }
        let header = Header {
            version: CHECKPOINT_VERSION,
            config: self.model.config.clone(),
            codec: self.model.codec.clone(),
            step: self.optimizer.step,
            adam: self.optimizer.config,
            tensors,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        let mut bytes = Vec::with_capacity(offset * 4);
        for (_, items) in &groups {
            for (_, t) in items {
                for v in t.data() {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_from(input: impl Read) -> Result<Self, ModelError> {
        let mut reader = BufReader::new(input);
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let header: Header = serde_json::from_str(line.trim_end())?;
        if header.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {}", header.version)));
        }
        header.config.validate()?;
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        if bytes.len() % 4 != 0 {
            return Err(ModelError::Checkpoint("data section is not a whole number of floats".into()));
        }
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();

        let mut params = Params::new();
        let mut first = BTreeMap::new();
        let mut second = BTreeMap::new();
        let mut expected_offset = 0;
        for e in header.tensors {
            let len: usize = e.shape.iter().product();
            if e.offset != expected_offset || e.offset + len > values.len() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {:?} at offset {} with {} values does not fit the data section of {}",
                    e.name,
                    e.offset,
                    len,
                    values.len()
                )));
            }
            let t = Tensor::new(&e.shape, values[e.offset..e.offset + len].to_vec())?;
            expected_offset += len;
            match e.group {
                Group::Param => params.insert(e.name, t),
                Group::First => {
                    first.insert(e.name, t);
                }
                Group::Second => {
                    second.insert(e.name, t);
                }
            }
        }
        if expected_offset != values.len() {
            return Err(ModelError::Checkpoint(format!(
                "{} trailing values after the last tensor",
                values.len() - expected_offset
            )));
        }
        let reference = super::init_params(&header.config, header.codec.classes(), 0);
        for (name, t) in reference.iter() {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(ModelError::Checkpoint(format!(
                        "parameter {name:?} has shape {:?}, config needs {:?}",
                        p.shape(),
                        t.shape()
                    )))
                }
                None => return Err(ModelError::Checkpoint(format!("parameter {name:?} missing"))),
            }
        }
        if params.len() != reference.len() {
            return Err(ModelError::Checkpoint("unexpected extra parameters".into()));
        }
        Ok(Checkpoint {
            model: Model {
                config: header.config,
                codec: header.codec,
                params,
            },
            optimizer: AdamState {
                config: header.adam,
                step: header.step,
                first,
                second,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        self.write_to(&mut f)?;
        f.flush()?;
        drop(f);
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::read_from(std::fs::File::open(path)?)
    }

    /// Loads and checks the alphabet against `codec`.
    pub fn load_for(path: impl AsRef<Path>, codec: &Codec) -> Result<Self, ModelError> {
        let ckpt = Self::load(path)?;
        if &ckpt.model.codec != codec {
            return Err(ModelError::CodecMismatch {
                expected: codec.alphabet(),
                found: ckpt.model.codec.alphabet(),
            });
        }
        Ok(ckpt)
    }
}
