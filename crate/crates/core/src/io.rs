//! Plain-file serialization for masks, feature maps and images.
//!
//! * Masks and instance masks: ASCII PGM (`P2`), maxval = 1 for binary masks
//!   and max(id, 1) for instance masks.
//! * Feature maps: 16-byte little-endian header (height, width, channels,
//!   reserved; `u32` each) followed by `f64` values in pixel-major order.
//! * RGB images: ASCII PPM (`P3`), maxval 255, for inspection only.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Dim2, FeatureMap, InstanceIdMask};

pub fn write_pgm<W: Write>(mut out: W, dims: Dim2, maxval: u32, values: &[u32]) -> Result<()> {
    writeln!(out, "P2")?;
    writeln!(out, "{} {}", dims.width(), dims.height())?;
    writeln!(out, "{maxval}")?;
    for row in values.chunks(dims.width()) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Parses a `P2` file into (dims, maxval, values). `#` comments are skipped.
pub fn read_pgm<R: Read>(mut input: R) -> Result<(Dim2, u32, Vec<u32>)> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    if tokens.next() != Some("P2") {
        return Err(Error::Format("missing P2 magic".into()));
    }
    let mut number = |what: &str| -> Result<u32> {
        tokens
            .next()
            .ok_or_else(|| Error::Format(format!("missing {what}")))?
            .parse::<u32>()
            .map_err(|e| Error::Format(format!("bad {what}: {e}")))
    };
    let width = number("width")? as usize;
    let height = number("height")? as usize;
    let maxval = number("maxval")?;
    let dims = Dim2::new(height, width)?;
    let mut values = Vec::with_capacity(dims.len());
    for _ in 0..dims.len() {
        let v = number("pixel")?;
        if v > maxval {
            return Err(Error::Format(format!("pixel {v} exceeds maxval {maxval}")));
        }
        values.push(v);
    }
    Ok((dims, maxval, values))
}

pub fn write_mask_pgm<W: Write>(out: W, mask: &BinaryMask) -> Result<()> {
    let values: Vec<u32> = mask.bits().iter().map(|&b| b as u32).collect();
    write_pgm(out, mask.dims(), 1, &values)
}

pub fn read_mask_pgm<R: Read>(input: R) -> Result<BinaryMask> {
    let (dims, _, values) = read_pgm(input)?;
    let bytes = values
        .iter()
        .map(|&v| u8::try_from(v).map_err(|_| Error::Format(format!("mask value {v}"))))
        .collect::<Result<Vec<u8>>>()?;
    BinaryMask::from_u8(dims, &bytes)
}

pub fn write_instance_pgm<W: Write>(out: W, mask: &InstanceIdMask) -> Result<()> {
    write_pgm(out, mask.dims(), mask.max_id().max(1), mask.ids())
}

pub fn read_instance_pgm<R: Read>(input: R) -> Result<InstanceIdMask> {
    let (dims, _, values) = read_pgm(input)?;
    InstanceIdMask::new(dims, values)
}

pub fn write_feature_map<W: Write>(mut out: W, f: &FeatureMap<f64>) -> Result<()> {
    let header = [f.dims().height(), f.dims().width(), f.channels(), 0];
    for h in header {
        let v = u32::try_from(h).map_err(|_| Error::Format(format!("{h} exceeds u32")))?;
        out.write_all(&v.to_le_bytes())?;
    }
    for v in f.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_feature_map<R: Read>(mut input: R) -> Result<FeatureMap<f64>> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    let field =
        |k: usize| u32::from_le_bytes(header[4 * k..4 * k + 4].try_into().unwrap()) as usize;
    let dims = Dim2::new(field(0), field(1))?;
    let channels = field(2);
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() != dims.len() * channels * 8 {
        return Err(Error::Format(format!(
            "feature body has {} bytes, header implies {}",
            body.len(),
            dims.len() * channels * 8
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureMap::new(dims, channels, values)
}

/// Writes a 3-channel image with values in `[0, 1]` as an ASCII PPM.
pub fn write_ppm<W: Write>(mut out: W, image: &FeatureMap<f64>) -> Result<()> {
    if image.channels() != 3 {
        return Err(Error::ChannelMismatch {
            expected: 3,
            found: image.channels(),
        });
    }
    let dims = image.dims();
    writeln!(out, "P3")?;
    writeln!(out, "{} {}", dims.width(), dims.height())?;
    writeln!(out, "255")?;
    for row in image.values().chunks(dims.width() * 3) {
        let line: Vec<String> = row
            .iter()
            .map(|v| ((v.clamp(0.0, 1.0) * 255.0).round() as u8).to_string())
            .collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}
