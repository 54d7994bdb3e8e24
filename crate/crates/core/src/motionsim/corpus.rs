use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{gen_real_motion, load_motion, save_motion, Label, MotionFamily, MotionSequence};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::rng::derive_seed;

pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub seed: u64,
    pub train: usize,
    pub eval: usize,
    pub frames: usize,
    pub family: String,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            seed: 0,
            train: 2000,
            eval: 200,
            frames: 16,
            family: "sinusoid".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub seed: u64,
    pub family: String,
    pub label: Label,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub frames: usize,
    pub entries: Vec<CorpusEntry>,
    pub sequences: Vec<MotionSequence>,
}

impl Corpus {
    /// Per-sequence seeds are `derive_seed(seed, "corpus.<split>", i)`.
    pub fn generate(config: &CorpusConfig) -> Result<Self> {
        let mut entries = Vec::with_capacity(config.train + config.eval);
        for (split, count) in [(Split::Train, config.train), (Split::Eval, config.eval)] {
            for i in 0..count {
                entries.push(CorpusEntry {
                    seed: derive_seed(config.seed, &format!("corpus.{}", split.name()), i as u64),
                    family: config.family.clone(),
                    label: Label::Real,
                    split,
                });
            }
        }
        Corpus::from_entries(config.frames, entries)
    }

    fn from_entries(frames: usize, entries: Vec<CorpusEntry>) -> Result<Self> {
        let sequences = entries
            .iter()
            .map(|e| {
                if e.label != Label::Real {
                    return Err(Error::Validation(format!("corpus entries must be real, got {}", e.label.name())));
                }
                gen_real_motion(&MotionFamily::by_name(&e.family)?, frames, e.seed)
            })
            .collect::<Result<_>>()?;
        Ok(Corpus {
            frames,
            entries,
            sequences,
        })
    }

    pub fn split(&self, split: Split) -> Vec<&MotionSequence> {
        self.entries
            .iter()
            .zip(&self.sequences)
            .filter(|(e, _)| e.split == split)
            .map(|(_, s)| s)
            .collect()
    }

    /// Line-oriented: `frames = T`, then `[train]` / `[eval]` sections of
    /// `seed family label` lines.
    pub fn manifest(&self) -> String {
        let mut s = format!("# motion corpus manifest\nframes = {}\n", self.frames);
        for split in [Split::Train, Split::Eval] {
            let _ = writeln!(s, "[{}]", split.name());
            for e in self.entries.iter().filter(|e| e.split == split) {
                let _ = writeln!(s, "{} {} {}", e.seed, e.family, e.label.name());
            }
        }
        s
    }

    /// Regenerates every sequence from a manifest's seeds.
    pub fn from_manifest(text: &str) -> Result<Self> {
        let (frames, entries) = parse_manifest(text)?;
        Corpus::from_entries(frames, entries)
    }

    pub fn sequence_path(dir: &Path, split: Split, index: usize) -> PathBuf {
        dir.join(split.name()).join(format!("{index:06}.motion"))
    }

    /// Writes every sequence file, then the manifest last.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut counters = [0usize; 2];
        for (e, s) in self.entries.iter().zip(&self.sequences) {
            let c = &mut counters[e.split as usize];
            save_motion(s, &Corpus::sequence_path(dir, e.split, *c))?;
            *c += 1;
        }
        write_atomic(&dir.join(MANIFEST_NAME), self.manifest().as_bytes())
    }

    /// Reads the manifest and the sequence files it lists.
    pub fn load(dir: &Path) -> Result<Self> {
        let (frames, entries) = parse_manifest(&fs::read_to_string(dir.join(MANIFEST_NAME))?)?;
        let mut counters = [0usize; 2];
        let mut sequences = Vec::with_capacity(entries.len());
        for e in &entries {
            let c = &mut counters[e.split as usize];
            let seq = load_motion(&Corpus::sequence_path(dir, e.split, *c))?;
            if seq.len() != frames {
                return Err(Error::mismatch("sequence length", frames, seq.len()));
            }
            sequences.push(seq);
            *c += 1;
        }
        Ok(Corpus {
            frames,
            entries,
            sequences,
        })
    }
}

fn parse_manifest(text: &str) -> Result<(usize, Vec<CorpusEntry>)> {
    let mut frames = None;
    let mut split = None;
    let mut entries = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        let bad = |msg: &str| Error::Validation(format!("manifest line {}: {msg}", no + 1));
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(v) = line.strip_prefix("frames") {
            let v = v.trim().trim_start_matches('=').trim();
            frames = Some(v.parse::<usize>().map_err(|_| bad("bad frame count"))?);
            continue;
        }
        match line {
            "[train]" => split = Some(Split::Train),
            "[eval]" => split = Some(Split::Eval),
            _ => {
                let mut it = line.split_whitespace();
                let seed = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad seed"))?;
                let family = it.next().ok_or_else(|| bad("missing family"))?.to_string();
                let label = it.next().and_then(Label::parse).ok_or_else(|| bad("bad label"))?;
                let split = split.ok_or_else(|| bad("entry before any [train]/[eval] section"))?;
                entries.push(CorpusEntry {
                    seed,
                    family,
                    label,
                    split,
                });
            }
        }
    }
    let frames = frames.ok_or_else(|| Error::Validation("manifest lacks a frames line".into()))?;
    Ok((frames, entries))
}
