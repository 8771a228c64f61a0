//! Parameter checkpoints: a one-line magic, a plain-text tensor manifest,
//! then a raw little-endian `f32` payload. Round trips are bit-exact, and
//! magic/dtype/length corruption each surface as a distinct error.
//!
//! Layout:
//!
//! ```text
//! E2EAEC1
//! tensors <count>
//! <name> f32 <d0>x<d1>x... <byte-offset> <byte-len>   (one line per tensor)
//! data
//! <raw little-endian f32 payload>
//! ```
//!
//! Offsets are relative to the first payload byte and must tile the payload
//! contiguously in manifest order.

use std::fs;
use std::path::Path;

use crate::numcore::{ParamSet, Tensor};
use crate::{Error, Result, Scalar};

const MAGIC: &str = "E2EAEC1";

/// Serialize all parameters (converted to `f32`) to `path`.
pub fn save_checkpoint<S: Scalar>(params: &ParamSet<S>, path: &Path) -> Result<()> {
    let f32_params = params.cast::<f32>();
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(&format!("tensors {}\n", f32_params.len()));
    let mut payload: Vec<u8> = Vec::new();
    for entry in f32_params.iter() {
        let dims: Vec<String> = entry.tensor.shape().iter().map(|d| d.to_string()).collect();
        let bytes = entry.tensor.numel() * 4;
        header.push_str(&format!(
            "{} f32 {} {} {}\n",
            entry.name,
            dims.join("x"),
            payload.len(),
            bytes
        ));
        for v in entry.tensor.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    header.push_str("data\n");
    let mut out = header.into_bytes();
    out.extend_from_slice(&payload);
    fs::write(path, out)?;
    Ok(())
}

/// Read one text line (without newline) starting at `*pos`, advancing past it.
fn next_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    let rest = &bytes[*pos..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or(Error::CheckpointManifest("unterminated header line".into()))?;
    let line = std::str::from_utf8(&rest[..end])
        .map_err(|_| Error::CheckpointManifest("non-UTF-8 header".into()))?;
    *pos += end + 1;
    Ok(line)
}

/// Load a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<ParamSet<f32>> {
    let bytes = fs::read(path)?;
    let mut pos = 0;
    let magic = next_line(&bytes, &mut pos)
        .map_err(|_| Error::CheckpointMagic("missing header".into()))?;
    if magic != MAGIC {
        return Err(Error::CheckpointMagic(format!(
            "expected {MAGIC:?}, found {magic:?}"
        )));
    }
    let count_line = next_line(&bytes, &mut pos)?;
    let count: usize = count_line
        .strip_prefix("tensors ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| Error::CheckpointManifest(format!("bad count line {count_line:?}")))?;

    struct Entry {
        name: String,
        shape: Vec<usize>,
        offset: usize,
        bytes: usize,
    }
    let mut entries = Vec::with_capacity(count);
    let mut expect_offset = 0usize;
    for _ in 0..count {
        let line = next_line(&bytes, &mut pos)?;
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 5 {
            return Err(Error::CheckpointManifest(format!(
                "expected 5 fields, got {}: {line:?}",
                fields.len()
            )));
        }
        let (name, dtype, dims, offset, nbytes) =
            (fields[0], fields[1], fields[2], fields[3], fields[4]);
        if dtype != "f32" {
            return Err(Error::CheckpointDtype(format!(
                "tensor {name:?} has dtype {dtype:?}, only f32 is supported"
            )));
        }
        let shape: Vec<usize> = dims
            .split('x')
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::CheckpointManifest(format!("bad shape {dims:?} for {name:?}")))?;
        let offset: usize = offset
            .parse()
            .map_err(|_| Error::CheckpointManifest(format!("bad offset for {name:?}")))?;
        let nbytes: usize = nbytes
            .parse()
            .map_err(|_| Error::CheckpointManifest(format!("bad length for {name:?}")))?;
        let numel: usize = shape.iter().product();
        if nbytes != numel * 4 || offset != expect_offset {
            return Err(Error::CheckpointLength(format!(
                "tensor {name:?}: shape {shape:?} with offset {offset}/{nbytes} bytes does not \
                 tile the payload (expected offset {expect_offset}, {} bytes)",
                numel * 4
            )));
        }
        expect_offset += nbytes;
        entries.push(Entry {
            name: name.to_string(),
            shape,
            offset,
            bytes: nbytes,
        });
    }
    let data_line = next_line(&bytes, &mut pos)?;
    if data_line != "data" {
        return Err(Error::CheckpointManifest(format!(
            "expected data marker, found {data_line:?}"
        )));
    }
    let payload = &bytes[pos..];
    if payload.len() != expect_offset {
        return Err(Error::CheckpointLength(format!(
            "payload is {} bytes, manifest declares {expect_offset}",
            payload.len()
        )));
    }
    let mut params = ParamSet::new();
    for e in entries {
        let raw = &payload[e.offset..e.offset + e.bytes];
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        params.push(&e.name, Tensor::new(e.shape, data));
    }
    Ok(params)
}
