//! Output files appear complete or not at all.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use lrac::{write_wav, Audio, WavEncoding};
use tempfile::NamedTempFile;

fn temp_beside(path: &Path) -> Result<NamedTempFile> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    NamedTempFile::new_in(parent).with_context(|| format!("creating a temporary file in {}", parent.display()))
}

fn persist(tmp: NamedTempFile, path: &Path) -> Result<()> {
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = temp_beside(path)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    persist(tmp, path)
}

pub fn write_wav_atomic(path: &Path, audio: &Audio, encoding: WavEncoding) -> Result<()> {
    let tmp = temp_beside(path)?;
    write_wav(tmp.path(), audio, encoding).with_context(|| format!("writing {}", path.display()))?;
    persist(tmp, path)
}
