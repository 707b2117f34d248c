//! On-disk layout of a generated dataset:
//!
//! ```text
//! manifest.json
//! 000000_short.png  000000_long.png  000000_target.png  000000_meta.json
//! 000001_short.png  ...
//! ```
//!
//! With raw output the image files use the `.f32` extension instead. The
//! meta file of an entry is written after its images, and the manifest after
//! all entries, so a manifest only ever references complete entries.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gyro::Intrinsics;
use crate::image::Image;
use crate::io;
use crate::synth::{SampleMeta, SynthParams, SynthSample};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionRecord {
    pub gyro: Option<String>,
    pub exposure_s: f64,
    pub readout_s: f64,
    pub intrinsics: Intrinsics,
    pub tile_size: usize,
    pub psf_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub count: usize,
    pub width: usize,
    pub height: usize,
    /// `png` or `f32`.
    pub image_ext: String,
    pub fusion_mode: bool,
    pub params: SynthParams,
    pub motion: Option<MotionRecord>,
    /// Source of entry `i` is `sources[i % sources.len()]`.
    pub sources: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Short,
    Long,
    Target,
}

impl Role {
    fn suffix(self) -> &'static str {
        match self {
            Role::Short => "short",
            Role::Long => "long",
            Role::Target => "target",
        }
    }
}

pub fn entry_path(dir: &Path, index: usize, role: Role, ext: &str) -> PathBuf {
    dir.join(format!("{index:06}_{}.{ext}", role.suffix()))
}

pub fn meta_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("{index:06}_meta.json"))
}

pub fn write_entry(dir: &Path, index: usize, sample: &SynthSample, ext: &str) -> Result<()> {
    io::write_image(&entry_path(dir, index, Role::Short, ext), &sample.short)?;
    io::write_image(&entry_path(dir, index, Role::Long, ext), &sample.long)?;
    io::write_image(&entry_path(dir, index, Role::Target, ext), &sample.target)?;
    io::write_json(&meta_path(dir, index), &sample.meta)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    io::write_json(&dir.join(MANIFEST), manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let m: Manifest = io::read_json(&dir.join(MANIFEST))?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::InvalidInput(format!(
            "{}: unsupported dataset format version {}",
            dir.display(),
            m.format_version
        )));
    }
    Ok(m)
}

/// One loaded dataset entry.
#[derive(Clone, Debug)]
pub struct Entry {
    pub index: usize,
    pub short: Image,
    pub long: Image,
    pub target: Image,
    pub meta: SampleMeta,
}

pub fn read_entry(dir: &Path, index: usize, ext: &str) -> Result<Entry> {
    Ok(Entry {
        index,
        short: io::read_image(&entry_path(dir, index, Role::Short, ext))?,
        long: io::read_image(&entry_path(dir, index, Role::Long, ext))?,
        target: io::read_image(&entry_path(dir, index, Role::Target, ext))?,
        meta: io::read_json(&meta_path(dir, index))?,
    })
}

/// Reads the manifest and every entry it lists.
pub fn load(dir: &Path) -> Result<(Manifest, Vec<Entry>)> {
    let manifest = read_manifest(dir)?;
    let entries = (0..manifest.count)
        .map(|i| read_entry(dir, i, &manifest.image_ext))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::scene::procedural_scene;
    use crate::synth::synthesize_pair;

    #[test]
    fn entries_round_trip_raw() {
        let dir = tempfile::tempdir().unwrap();
        let img = procedural_scene(3, 0, 16, 12);
        let sample = synthesize_pair(&img, None, &SynthParams::lsd2(), &mut Rng::new(1)).unwrap();
        write_entry(dir.path(), 4, &sample, "f32").unwrap();
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            seed: 1,
            count: 0,
            width: 16,
            height: 12,
            image_ext: "f32".into(),
            fusion_mode: false,
            params: SynthParams::lsd2(),
            motion: None,
            sources: vec!["procedural".into()],
        };
        write_manifest(dir.path(), &manifest).unwrap();
        assert_eq!(read_manifest(dir.path()).unwrap(), manifest);
        let e = read_entry(dir.path(), 4, "f32").unwrap();
        assert_eq!(e.short, sample.short);
        assert_eq!(e.long, sample.long);
        assert_eq!(e.target, sample.target);
        assert_eq!(e.meta, sample.meta);
        assert!(dir.path().join("000004_short.f32").exists());
    }
}
