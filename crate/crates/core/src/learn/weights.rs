//! Binary policy weight files.
//!
//! Layout, all integers little-endian `u32`:
//! `b"RTPW"`, version, metadata length, metadata JSON, layer count, then per
//! layer `rows`, `cols`, `rows * cols` weights and `rows` biases as
//! little-endian `f64`, row-major.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{Layer, Mlp, MlpSpec};
use super::LearnError;

const MAGIC: &[u8; 4] = b"RTPW";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMeta {
    /// Describes the action index set the outputs refer to.
    pub action_set: String,
    /// Identifier of the feature pre-filter the inputs come from.
    pub filter: String,
    pub spec: MlpSpec,
}

pub fn write_weights(out: &mut impl Write, net: &Mlp, action_set: &str, filter: &str) -> Result<(), LearnError> {
    let meta = WeightMeta { action_set: action_set.to_string(), filter: filter.to_string(), spec: net.spec.clone() };
    let json = serde_json::to_vec(&meta).map_err(|e| LearnError::Format(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    out.write_all(&(net.layers.len() as u32).to_le_bytes())?;
    for layer in &net.layers {
        out.write_all(&(layer.rows as u32).to_le_bytes())?;
        out.write_all(&(layer.cols as u32).to_le_bytes())?;
        for v in layer.weights.iter().chain(&layer.bias) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32(input: &mut impl Read) -> Result<u32, LearnError> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s(input: &mut impl Read, n: usize) -> Result<Vec<f64>, LearnError> {
    let mut buf = vec![0u8; n * 8];
    input.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn read_weights(input: &mut impl Read) -> Result<(Mlp, WeightMeta), LearnError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(LearnError::Format("not a policy weight file".into()));
    }
    let version = read_u32(input)?;
    if version != VERSION {
        return Err(LearnError::Format(format!("unsupported version {version}")));
    }
    let len = read_u32(input)? as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let meta: WeightMeta = serde_json::from_slice(&json).map_err(|e| LearnError::Format(e.to_string()))?;
    let count = read_u32(input)? as usize;
    if count + 1 != meta.spec.layers.len() {
        return Err(LearnError::Format(format!("{count} layers but spec lists {:?}", meta.spec.layers)));
    }
    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let rows = read_u32(input)? as usize;
        let cols = read_u32(input)? as usize;
        if rows != meta.spec.layers[i + 1] || cols != meta.spec.layers[i] {
            return Err(LearnError::Format(format!("layer {i} is {rows}x{cols}, spec disagrees")));
        }
        let weights = read_f64s(input, rows * cols)?;
        let bias = read_f64s(input, rows)?;
        layers.push(Layer { rows, cols, weights, bias });
    }
    Ok((Mlp { spec: meta.spec.clone(), layers }, meta))
}

pub fn save_weights(path: &Path, net: &Mlp, action_set: &str, filter: &str) -> Result<(), LearnError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_weights(&mut file, net, action_set, filter)?;
    file.flush()?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<(Mlp, WeightMeta), LearnError> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    read_weights(&mut file)
}
