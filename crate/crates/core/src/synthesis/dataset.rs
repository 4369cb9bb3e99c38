use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{generate, ParamRanges, SynthesisError, WordSample, CANVAS_HEIGHT, CANVAS_WIDTH};
use crate::geometry::Quad;
use crate::imaging::{read_pgm, write_pgm, GrayImage};
use crate::seed::derive_seed;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub template_file: String,
    pub transcript: String,
    /// TL, TR, BR, BL corners as x, y pairs.
    pub quad: [f64; 8],
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    /// Characters of the lexicon, sorted.
    pub codec: String,
    /// Scene extents as `[height, width]`.
    pub canvas: [usize; 2],
    pub ranges: ParamRanges,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Manifest, SynthesisError> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(SynthesisError::Manifest(format!("unsupported version {}", manifest.version)));
        }
        for e in &manifest.entries {
            Quad::from_array(e.quad)?;
        }
        Ok(manifest)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), SynthesisError> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Renders `n` samples cycling through `lexicon` and writes them, their
/// templates and `manifest.json` under `dir`. Sample `i` uses seed
/// `derive_seed(seed, i)`.
pub fn gen_dataset(
    lexicon: &[String],
    n: usize,
    ranges: &ParamRanges,
    seed: u64,
    dir: impl AsRef<Path>,
) -> Result<Manifest, SynthesisError> {
    if lexicon.is_empty() {
        return Err(SynthesisError::Manifest("empty lexicon".into()));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let word = &lexicon[i % lexicon.len()];
        let sample_seed = derive_seed(seed, i as u64);
        let sample = generate(word, ranges, sample_seed)?;
        let entry = ManifestEntry {
            file: format!("{i:06}.pgm"),
            template_file: format!("{i:06}.tmpl.pgm"),
            transcript: word.clone(),
            quad: sample.quad.to_array(),
            seed: sample_seed,
        };
        write_pgm(dir.join(&entry.file), &sample.scene)?;
        write_pgm(dir.join(&entry.template_file), &sample.template.image)?;
        entries.push(entry);
    }
    let codec: BTreeSet<char> = lexicon.iter().flat_map(|w| w.chars()).collect();
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        codec: codec.into_iter().collect(),
        canvas: [CANVAS_HEIGHT, CANVAS_WIDTH],
        ranges: ranges.clone(),
        entries,
    };
    manifest.write(dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Re-renders an entry from its seed.
pub fn regenerate(manifest: &Manifest, entry: &ManifestEntry) -> Result<WordSample, SynthesisError> {
    generate(&entry.transcript, &manifest.ranges, entry.seed)
}

/// Scene, template and quad of an entry as stored on disk.
pub fn load_entry(dir: impl AsRef<Path>, entry: &ManifestEntry) -> Result<(GrayImage, GrayImage, Quad), SynthesisError> {
    let dir = dir.as_ref();
    Ok((
        read_pgm(dir.join(&entry.file))?,
        read_pgm(dir.join(&entry.template_file))?,
        Quad::from_array(entry.quad)?,
    ))
}
