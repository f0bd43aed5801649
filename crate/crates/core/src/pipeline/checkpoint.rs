//! Model checkpoint container.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "CDETCKPT"
//! 8       4     format version, u32 little-endian (currently 1)
//! 12      4     header length H, u32 little-endian
//! 16      H     UTF-8 header, one key=value per line (LF)
//! 16+H    ...   parameter payload, f64 little-endian
//! ```
//!
//! Header keys: `input_dim`, `hidden_sizes` (comma list, empty for none),
//! `dropout_p`, `output_size`, `seed`, `threshold`, `vocab_size`,
//! `vocab_sha256`, `vocabulary` (`;`-joined concepts), `layers`, and
//! `layer<i>=<fan_in>x<fan_out>` for each layer. The payload holds, per layer in
//! order, the row-major `fan_in x fan_out` weight matrix followed by the
//! `fan_out` biases. Unknown header keys are ignored on read.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::label_space::{ConceptId, LabelVocabulary};
use crate::model::{DenseLayer, HeadConfig, ModelParams};

pub const MAGIC: &[u8; 8] = b"CDETCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocabulary: LabelVocabulary,
    /// Decision threshold used during training.
    pub threshold: f64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let cfg = self.params.config();
        if cfg.output_size != self.vocabulary.len() {
            return Err(Error::invalid(format!(
                "model has {} outputs but vocabulary has {} concepts",
                cfg.output_size,
                self.vocabulary.len()
            )));
        }
        let hidden: Vec<String> = cfg.hidden_sizes.iter().map(usize::to_string).collect();
        let concepts: Vec<&str> = self
            .vocabulary
            .concepts()
            .iter()
            .map(ConceptId::as_str)
            .collect();
        let mut header = String::new();
        let mut kv = |k: &str, v: String| {
            header.push_str(k);
            header.push('=');
            header.push_str(&v);
            header.push('\n');
        };
        kv("input_dim", self.params.input_dim().to_string());
        kv("hidden_sizes", hidden.join(","));
        kv("dropout_p", format!("{:?}", cfg.dropout_p));
        kv("output_size", cfg.output_size.to_string());
        kv("seed", cfg.seed.to_string());
        kv("threshold", format!("{:?}", self.threshold));
        kv("vocab_size", self.vocabulary.len().to_string());
        kv("vocab_sha256", self.vocabulary.fingerprint());
        kv("vocabulary", concepts.join(";"));
        kv("layers", self.params.layers().len().to_string());
        for (i, l) in self.params.layers().iter().enumerate() {
            kv(
                &format!("layer{i}"),
                format!("{}x{}", l.weights.nrows(), l.weights.ncols()),
            );
        }

        let mut out = Vec::with_capacity(16 + header.len() + self.params.num_parameters() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for l in self.params.layers() {
            for v in l.weights.iter().chain(l.bias.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err("not a checkpoint (bad magic)".into());
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let header_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let header = bytes.get(16..16 + header_len).ok_or("truncated header")?;
        let header = std::str::from_utf8(header).map_err(|_| "header is not UTF-8")?;
        let fields: HashMap<&str, &str> =
            header.lines().filter_map(|l| l.split_once('=')).collect();
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| format!("missing header key {k}"))
        };
        let num = |k: &str| -> std::result::Result<usize, String> {
            get(k)?.parse().map_err(|_| format!("bad value for {k}"))
        };
        let float = |k: &str| -> std::result::Result<f64, String> {
            get(k)?.parse().map_err(|_| format!("bad value for {k}"))
        };

        let hidden_raw = get("hidden_sizes")?;
        let hidden_sizes = if hidden_raw.is_empty() {
            Vec::new()
        } else {
            hidden_raw
                .split(',')
                .map(|s| s.parse().map_err(|_| format!("bad hidden size {s:?}")))
                .collect::<std::result::Result<Vec<usize>, String>>()?
        };
        let config = HeadConfig {
            hidden_sizes,
            dropout_p: float("dropout_p")?,
            output_size: num("output_size")?,
            seed: get("seed")?.parse().map_err(|_| "bad value for seed")?,
        };
        let input_dim = num("input_dim")?;
        let threshold = float("threshold")?;

        let concepts = get("vocabulary")?
            .split(';')
            .map(|c| ConceptId::new(c).map_err(|e| e.to_string()))
            .collect::<std::result::Result<Vec<_>, String>>()?;
        let vocabulary = LabelVocabulary::from_sorted(concepts).map_err(|e| e.to_string())?;
        if vocabulary.len() != num("vocab_size")? {
            return Err("vocab_size does not match vocabulary".into());
        }
        if vocabulary.fingerprint() != get("vocab_sha256")? {
            return Err("vocabulary hash mismatch".into());
        }

        let n_layers = num("layers")?;
        let mut offset = 16 + header_len;
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let dims = get(&format!("layer{i}"))?;
            let (r, c) = dims
                .split_once('x')
                .and_then(|(r, c)| Some((r.parse::<usize>().ok()?, c.parse::<usize>().ok()?)))
                .ok_or_else(|| format!("bad manifest entry layer{i}={dims}"))?;
            let mut read = |n: usize| -> std::result::Result<Vec<f64>, String> {
                let end = offset + n * 8;
                let chunk = bytes.get(offset..end).ok_or("truncated payload")?;
                offset = end;
                Ok(chunk
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                    .collect())
            };
            let weights =
                Array2::from_shape_vec((r, c), read(r * c)?).map_err(|e| e.to_string())?;
            let bias = Array1::from_vec(read(c)?);
            layers.push(DenseLayer { weights, bias });
        }
        if offset != bytes.len() {
            return Err(format!(
                "{} trailing bytes after payload",
                bytes.len() - offset
            ));
        }
        let params =
            ModelParams::from_layers(config, input_dim, layers).map_err(|e| e.to_string())?;
        if params.output_size() != vocabulary.len() {
            return Err("output size does not match vocabulary".into());
        }
        Ok(Checkpoint {
            params,
            vocabulary,
            threshold,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes).map_err(|message| Error::Format {
        path: path.to_owned(),
        message,
    })
}
