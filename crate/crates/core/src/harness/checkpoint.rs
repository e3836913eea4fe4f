//! Parameter checkpoints: a little-endian f64 dump plus a text manifest
//! listing each tensor's name and shape in storage order.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{ModelParams, ModelSizes};

pub fn manifest_path(checkpoint: &Path) -> PathBuf {
    let mut p = checkpoint.as_os_str().to_owned();
    p.push(".manifest");
    PathBuf::from(p)
}

fn manifest_text(sizes: ModelSizes) -> String {
    let mut s = String::new();
    for (name, shape) in sizes.layout() {
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        s.push_str(&format!("{name} {}\n", dims.join(",")));
    }
    s
}

/// Writes `path` and `path.manifest`.
pub fn save(path: &Path, params: &ModelParams<f64>) -> Result<()> {
    let bytes: Vec<u8> = params
        .as_flat()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    fs::write(path, bytes)?;
    fs::write(manifest_path(path), manifest_text(params.sizes()))?;
    Ok(())
}

/// Reads a checkpoint written for `sizes`. The manifest must match the
/// layout exactly and the data length must match the parameter count.
pub fn load(path: &Path, sizes: ModelSizes) -> Result<ModelParams<f64>> {
    let manifest = fs::read_to_string(manifest_path(path))?;
    let expected = manifest_text(sizes);
    if manifest != expected {
        let found = manifest.lines().zip(expected.lines()).find(|(a, b)| a != b);
        let detail = match found {
            Some((a, b)) => format!("found {a:?}, expected {b:?}"),
            None => "tensor count differs".into(),
        };
        return Err(Error::Format(format!(
            "checkpoint manifest does not match the model: {detail}"
        )));
    }
    let bytes = fs::read(path)?;
    if bytes.len() != sizes.parameter_count() * 8 {
        return Err(Error::Format(format!(
            "checkpoint holds {} bytes, expected {}",
            bytes.len(),
            sizes.parameter_count() * 8
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    ModelParams::from_flat(sizes, data)
}
