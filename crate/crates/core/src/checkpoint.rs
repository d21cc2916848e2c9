//! Self-describing model files.
//!
//! A short text header (one `tensor <name> <dims...>` line per parameter)
//! followed by a `data` line and the values as little-endian `f64`, in
//! header order. Saving the same model twice yields identical bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DEFAULT_FRAME_RATE;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ModelParams};
use crate::tensor::Tensor;

const MAGIC: &str = "irb-motion-checkpoint 1";

/// How input sequences were prepared during training; replayed at inference.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocessing {
    pub center_root: bool,
    pub root_joint: usize,
    pub frame_rate: u32,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Self {
            center_root: false,
            root_joint: 0,
            frame_rate: DEFAULT_FRAME_RATE,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub preprocessing: Preprocessing,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    preprocessing: Preprocessing,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.model.config.clone(),
            preprocessing: self.preprocessing.clone(),
        };
        let mut text = format!("{MAGIC}\nmodel {}\n", serde_json::to_string(&header).expect("header serializes"));
        for (name, t) in self.model.params.names().iter().zip(self.model.params.tensors()) {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            text += &format!("tensor {name} {}\n", dims.join(" "));
        }
        text += "data\n";
        let mut bytes = text.into_bytes();
        for t in self.model.params.tensors() {
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[pos..];
            let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header"))?;
            pos += end + 1;
            std::str::from_utf8(&rest[..end]).map_err(|_| bad("header is not text"))
        };
        if next_line()? != MAGIC {
            return Err(bad("not an irb-motion checkpoint (bad magic line)"));
        }
        let json = next_line()?
            .strip_prefix("model ")
            .ok_or_else(|| bad("missing model line"))?;
        let header: Header = serde_json::from_str(json).map_err(|e| bad(format!("model line: {e}")))?;
        header.config.validate()?;
        let expected = ModelParams::zeros(&header.config);
        let mut shapes = Vec::new();
        for (name, t) in expected.names().iter().zip(expected.tensors()) {
            let line = next_line()?;
            let mut parts = line.split(' ');
            if parts.next() != Some("tensor") || parts.next() != Some(name.as_str()) {
                return Err(bad(format!("expected tensor `{name}`, found `{line}`")));
            }
            let dims = parts
                .map(|d| d.parse::<usize>().map_err(|_| bad(format!("bad dimension in `{line}`"))))
                .collect::<Result<Vec<_>>>()?;
            if dims != t.shape() {
                return Err(Error::shape("checkpoint tensor", &dims, t.shape()));
            }
            shapes.push(dims);
        }
        if next_line()? != "data" {
            return Err(bad("missing data line"));
        }
        let payload = &bytes[pos..];
        let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
        if payload.len() != total * 8 {
            return Err(bad(format!("expected {} data bytes, found {}", total * 8, payload.len())));
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let tensors = shapes
            .into_iter()
            .map(|s| {
                let n = s.iter().product();
                Tensor::new(s, values.by_ref().take(n).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let params = ModelParams::from_tensors(&header.config, tensors)?;
        Ok(Self {
            model: Model::new(header.config, params)?,
            preprocessing: header.preprocessing,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => bad(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let config = ModelConfig::reference(4, 10, 2).unwrap();
        Checkpoint {
            model: Model::init(config, 3).unwrap(),
            preprocessing: Preprocessing { center_root: true, ..Default::default() },
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(b"hello\n").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
