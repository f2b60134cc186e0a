//! RIFF/WAVE reader and writer, 16-bit PCM mono only.

use std::fs;
use std::path::Path;

use super::{AudioError, Waveform};
use crate::scalar::Scalar;

const PCM_FORMAT: u16 = 1;

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Parses a complete WAV file image.
pub fn decode_wav<S: Scalar>(bytes: &[u8]) -> Result<Waveform<S>, AudioError> {
    let malformed = |m: &str| AudioError::MalformedWav(m.to_string());
    if bytes.len() < 12 {
        return Err(malformed("file shorter than RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("missing RIFF/WAVE signature"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| malformed("chunk extends past end of file"))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(malformed("fmt chunk shorter than 16 bytes"));
                }
                fmt = Some((u16_at(body, 0), u16_at(body, 2), u32_at(body, 4), u16_at(body, 14)));
            }
            b"data" => {
                data = Some(body);
                break;
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }

    let (format, channels, sample_rate, bits) = fmt.ok_or_else(|| malformed("no fmt chunk"))?;
    if format != PCM_FORMAT {
        return Err(AudioError::UnsupportedFormat(format!("format tag {format} (need PCM = 1)")));
    }
    if channels != 1 {
        return Err(AudioError::UnsupportedFormat(format!("{channels} channels (need mono)")));
    }
    if bits != 16 {
        return Err(AudioError::UnsupportedFormat(format!("{bits} bits per sample (need 16)")));
    }
    if sample_rate == 0 {
        return Err(malformed("sample rate is zero"));
    }
    let data = data.ok_or_else(|| malformed("no data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(malformed("data chunk has odd length"));
    }
    let scale = S::lit(32768.0);
    let samples = data
        .chunks_exact(2)
        .map(|c| S::lit(i16::from_le_bytes([c[0], c[1]]) as f64) / scale)
        .collect();
    Waveform::new(samples, sample_rate)
}

/// Serialises a waveform as a 44-byte-header PCM16 mono WAV image.
pub fn encode_wav<S: Scalar>(w: &Waveform<S>) -> Vec<u8> {
    let data_len = (w.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM_FORMAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate().to_le_bytes());
    out.extend_from_slice(&(w.sample_rate() * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in w.samples() {
        let q = (s.to_f64_lossy() * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn read_wav<S: Scalar>(path: impl AsRef<Path>) -> Result<Waveform<S>, AudioError> {
    let bytes = fs::read(path)?;
    decode_wav(&bytes)
}

pub fn write_wav<S: Scalar>(w: &Waveform<S>, path: impl AsRef<Path>) -> Result<(), AudioError> {
    fs::write(path, encode_wav(w))?;
    Ok(())
}
