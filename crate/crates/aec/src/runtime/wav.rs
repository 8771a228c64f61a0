//! Minimal RIFF/WAVE reader and writer: mono, 16-bit PCM or 32-bit IEEE
//! float. Float I/O is bit-exact; PCM-16 reads divide by 32768 and writes
//! clamp and round symmetrically.

use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// Decoded mono audio.
#[derive(Debug, Clone)]
pub struct WavData {
    pub samples: Vec<f32>,
    pub rate: u32,
}

const FMT_PCM: u16 = 1;
const FMT_IEEE_FLOAT: u16 = 3;

fn bad(detail: impl Into<String>) -> Error {
    Error::WavFormat(detail.into())
}

fn le_u32(b: &[u8], at: usize) -> Result<u32> {
    b.get(at..at + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| bad(format!("truncated at byte {at}")))
}

fn le_u16(b: &[u8], at: usize) -> Result<u16> {
    b.get(at..at + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or_else(|| bad(format!("truncated at byte {at}")))
}

/// Read a mono WAV file.
pub fn read_wav(path: &Path) -> Result<WavData> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("not a RIFF/WAVE file"));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(&bytes, pos + 4)? as usize;
        let body = bytes
            .get(pos + 8..pos + 8 + size)
            .ok_or_else(|| bad(format!("chunk {:?} overruns file", String::from_utf8_lossy(id))))?;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(bad("fmt chunk too short"));
                }
                fmt = Some((
                    le_u16(body, 0)?,
                    le_u16(body, 2)?,
                    le_u32(body, 4)?,
                    le_u16(body, 14)?,
                ));
            }
            b"data" => data = Some(body),
            _ => {} // fact, LIST, etc. are irrelevant here
        }
        // chunks are word-aligned
        pos += 8 + size + (size & 1);
    }
    let (format, channels, rate, bits) = fmt.ok_or_else(|| bad("missing fmt chunk"))?;
    let data = data.ok_or_else(|| bad("missing data chunk"))?;
    if channels != 1 {
        return Err(bad(format!("expected mono, got {channels} channels")));
    }
    let samples = match (format, bits) {
        (FMT_PCM, 16) => data
            .chunks_exact(2)
            .map(|p| i16::from_le_bytes([p[0], p[1]]) as f32 / 32768.0)
            .collect(),
        (FMT_IEEE_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|p| f32::from_le_bytes([p[0], p[1], p[2], p[3]]))
            .collect(),
        _ => {
            return Err(bad(format!(
                "unsupported encoding: format {format}, {bits} bits"
            )))
        }
    };
    Ok(WavData { samples, rate })
}

fn write_riff(path: &Path, fmt_body: &[u8], fact: Option<&[u8]>, data: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(44 + data.len());
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&[0; 4]); // patched below
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&(fmt_body.len() as u32).to_le_bytes());
    out.extend_from_slice(fmt_body);
    if let Some(fact) = fact {
        out.extend_from_slice(b"fact");
        out.extend_from_slice(&(fact.len() as u32).to_le_bytes());
        out.extend_from_slice(fact);
    }
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    out.extend_from_slice(data);
    if data.len() & 1 == 1 {
        out.push(0);
    }
    let riff_size = (out.len() - 8) as u32;
    out[4..8].copy_from_slice(&riff_size.to_le_bytes());
    fs::write(path, out)?;
    Ok(())
}

fn fmt_chunk(format: u16, rate: u32, bits: u16) -> Vec<u8> {
    let block_align = bits / 8; // mono
    let byte_rate = rate * block_align as u32;
    let mut b = Vec::with_capacity(16);
    b.extend_from_slice(&format.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&rate.to_le_bytes());
    b.extend_from_slice(&byte_rate.to_le_bytes());
    b.extend_from_slice(&block_align.to_le_bytes());
    b.extend_from_slice(&bits.to_le_bytes());
    b
}

/// Write mono 32-bit IEEE float samples (bit-exact round trip).
pub fn write_wav_f32(path: &Path, samples: &[f32], rate: u32) -> Result<()> {
    let mut data = Vec::with_capacity(samples.len() * 4);
    for s in samples {
        data.extend_from_slice(&s.to_le_bytes());
    }
    let fact = (samples.len() as u32).to_le_bytes();
    write_riff(path, &fmt_chunk(FMT_IEEE_FLOAT, rate, 32), Some(&fact), &data)
}

/// Write mono 16-bit PCM, clamping to full scale.
pub fn write_wav_pcm16(path: &Path, samples: &[f32], rate: u32) -> Result<()> {
    let mut data = Vec::with_capacity(samples.len() * 2);
    for s in samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        data.extend_from_slice(&v.to_le_bytes());
    }
    write_riff(path, &fmt_chunk(FMT_PCM, rate, 16), None, &data)
}
