//! On-disk layout of a labelled corpus directory.

use std::fs;
use std::path::Path;

use super::{write_wav, AudioError, SynthUtterance};
use crate::scalar::Scalar;

pub const CORPUS_MANIFEST: &str = "corpus.manifest.tsv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub utt_id: String,
    pub speaker_id: usize,
    pub frame_count: usize,
}

/// Writes `<utt_id>.wav`, `<utt_id>.align.tsv`, `<utt_id>.vad.txt` and the manifest.
pub fn write_corpus<S: Scalar>(utts: &[SynthUtterance<S>], dir: &Path) -> Result<(), AudioError> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::from("utt_id\tspeaker_id\tframe_count\n");
    for u in utts {
        write_wav(&u.waveform, dir.join(format!("{}.wav", u.utt_id)))?;
        fs::write(dir.join(format!("{}.align.tsv", u.utt_id)), u.alignment.to_tsv())?;
        fs::write(dir.join(format!("{}.vad.txt", u.utt_id)), u.vad_truth.to_text())?;
        manifest.push_str(&format!("{}\t{}\t{}\n", u.utt_id, u.speaker_id, u.alignment.num_frames()));
    }
    fs::write(dir.join(CORPUS_MANIFEST), manifest)?;
    Ok(())
}

pub fn read_corpus_manifest(dir: &Path) -> Result<Vec<ManifestEntry>, AudioError> {
    let text = fs::read_to_string(dir.join(CORPUS_MANIFEST))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("utt_id")) {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let parse = |s: &str| {
            s.trim().parse::<usize>().map_err(|_| {
                AudioError::Io(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("manifest line {}: bad integer {s:?}", i + 1),
                ))
            })
        };
        if f.len() != 3 {
            return Err(AudioError::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("manifest line {}: expected 3 fields", i + 1),
            )));
        }
        out.push(ManifestEntry {
            utt_id: f[0].to_string(),
            speaker_id: parse(f[1])?,
            frame_count: parse(f[2])?,
        });
    }
    Ok(out)
}
