//! On-disk corpus format and split management.
//!
//! Corpus file (little-endian):
//!   header: magic "MXPD", u32 version, u32 sample count, u16 H, u16 W,
//!           u8 channels
//!   record: u8 domain code, u16 task_label, u16 round(ambiguity*10000),
//!           u32 crc32 over the three fields above plus the pixel bytes,
//!           then H*W*C pixel bytes with pixel = round(value*255)
//!
//! Manifest: plain `key = value` lines.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::generator::{generate, generate_ambiguous, mix64, GEN_VERSION};
use super::{DomainLabel, Sample, IMG_PIXELS, IMG_SIZE};
use crate::error::{MixpertError, Result};
use crate::nncore::Tensor;

pub const CORPUS_MAGIC: &[u8; 4] = b"MXPD";
pub const CORPUS_VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 4 + 4 + 4 + 2 + 2 + 1;
pub const RECORD_BYTES: usize = 1 + 2 + 2 + 4 + IMG_PIXELS;

/// Everything needed to regenerate a corpus deterministically.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub seed: u64,
    pub train_per_domain: usize,
    pub val_per_domain: usize,
    pub test_per_domain: usize,
    pub ambiguous_count: usize,
    pub ambiguous_mix_lo: f32,
    pub ambiguous_mix_hi: f32,
    pub generator_version: u32,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self {
            seed: 0,
            train_per_domain: 5000,
            val_per_domain: 1000,
            test_per_domain: 1000,
            ambiguous_count: 1000,
            ambiguous_mix_lo: 0.35,
            ambiguous_mix_hi: 0.65,
            generator_version: GEN_VERSION,
        }
    }
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        format!(
            "seed = {}\ntrain_per_domain = {}\nval_per_domain = {}\ntest_per_domain = {}\nambiguous_count = {}\nambiguous_mix_lo = {}\nambiguous_mix_hi = {}\ngenerator_version = {}\nfile.train = train.mxpd\nfile.val = val.mxpd\nfile.test = test.mxpd\nfile.ambiguous = ambiguous.mxpd\n",
            self.seed,
            self.train_per_domain,
            self.val_per_domain,
            self.test_per_domain,
            self.ambiguous_count,
            self.ambiguous_mix_lo,
            self.ambiguous_mix_hi,
            self.generator_version,
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut m = Self::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(MixpertError::Config(format!("bad manifest line: {line}")));
            };
            let (key, value) = (key.trim(), value.trim());
            let parse = |v: &str| -> Result<usize> {
                v.parse()
                    .map_err(|_| MixpertError::Config(format!("bad manifest value for {key}")))
            };
            match key {
                "seed" => {
                    m.seed = value
                        .parse()
                        .map_err(|_| MixpertError::Config("bad seed".into()))?
                }
                "train_per_domain" => m.train_per_domain = parse(value)?,
                "val_per_domain" => m.val_per_domain = parse(value)?,
                "test_per_domain" => m.test_per_domain = parse(value)?,
                "ambiguous_count" => m.ambiguous_count = parse(value)?,
                "ambiguous_mix_lo" => {
                    m.ambiguous_mix_lo = value
                        .parse()
                        .map_err(|_| MixpertError::Config("bad mix lo".into()))?
                }
                "ambiguous_mix_hi" => {
                    m.ambiguous_mix_hi = value
                        .parse()
                        .map_err(|_| MixpertError::Config("bad mix hi".into()))?
                }
                "generator_version" => m.generator_version = parse(value)? as u32,
                _ if key.starts_with("file.") => {}
                _ => return Err(MixpertError::Config(format!("unknown manifest key {key}"))),
            }
        }
        Ok(m)
    }
}

/// Per-split sample index bases keep train/val/test index sets disjoint by
/// construction: a sample's RNG stream is derived from its global index.
fn split_base(m: &DatasetManifest, split: &str) -> usize {
    match split {
        "train" => 0,
        "val" => m.train_per_domain,
        "test" => m.train_per_domain + m.val_per_domain,
        _ => unreachable!("known splits only"),
    }
}

fn sample_seed(manifest_seed: u64, domain: DomainLabel, global_index: usize) -> u64 {
    mix64(&[manifest_seed, domain.code() as u64, global_index as u64])
}

fn generate_split(m: &DatasetManifest, split: &str, per_domain: usize) -> Vec<Sample> {
    let base = split_base(m, split);
    let jobs: Vec<(DomainLabel, usize)> = DomainLabel::ALL
        .into_iter()
        .flat_map(|d| (0..per_domain).map(move |i| (d, base + i)))
        .collect();
    jobs.into_par_iter()
        .map(|(d, gi)| generate(d, sample_seed(m.seed, d, gi)))
        .collect()
}

fn generate_ambiguous_split(m: &DatasetManifest) -> Vec<Sample> {
    use rand::Rng;
    use rand::SeedableRng;
    (0..m.ambiguous_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(mix64(&[
                m.seed,
                0xa11b1e,
                i as u64,
            ]));
            let a = DomainLabel::ALL[rng.random_range(0..5)];
            let b = loop {
                let cand = DomainLabel::ALL[rng.random_range(0..5)];
                if cand != a {
                    break cand;
                }
            };
            let mix = rng.random_range(m.ambiguous_mix_lo..m.ambiguous_mix_hi);
            generate_ambiguous(a, b, mix, mix64(&[m.seed, 0x5eed, i as u64]))
                .expect("blend arguments are valid by construction")
        })
        .collect()
}

/// A generated corpus held in memory, quantized exactly as the file format
/// stores it so in-memory and on-disk pipelines see identical pixels.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: DatasetManifest,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
    pub ambiguous: Vec<Sample>,
}

fn quantize(sample: &mut Sample) {
    for p in sample.image.data_mut() {
        *p = (*p * 255.0).round().clamp(0.0, 255.0) / 255.0;
    }
}

impl Corpus {
    /// Generates all splits. Pixels are quantized to u8 resolution.
    pub fn generate(manifest: &DatasetManifest) -> Self {
        let mut c = Corpus {
            manifest: manifest.clone(),
            train: generate_split(manifest, "train", manifest.train_per_domain),
            val: generate_split(manifest, "val", manifest.val_per_domain),
            test: generate_split(manifest, "test", manifest.test_per_domain),
            ambiguous: generate_ambiguous_split(manifest),
        };
        for split in [&mut c.train, &mut c.val, &mut c.test, &mut c.ambiguous] {
            split.iter_mut().for_each(quantize);
        }
        c
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("manifest.txt"), self.manifest.to_text())?;
        write_corpus(&self.train, &dir.join("train.mxpd"))?;
        write_corpus(&self.val, &dir.join("val.mxpd"))?;
        write_corpus(&self.test, &dir.join("test.mxpd"))?;
        write_corpus(&self.ambiguous, &dir.join("ambiguous.mxpd"))?;
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let manifest =
            DatasetManifest::from_text(&std::fs::read_to_string(dir.join("manifest.txt"))?)?;
        let load = |name: &str| -> Result<Vec<Sample>> {
            read_corpus(&dir.join(name))?.collect::<Result<Vec<_>>>()
        };
        Ok(Corpus {
            manifest,
            train: load("train.mxpd")?,
            val: load("val.mxpd")?,
            test: load("test.mxpd")?,
            ambiguous: load("ambiguous.mxpd")?,
        })
    }

    /// Indices of a split's samples for one domain.
    pub fn domain_indices(split: &[Sample], domain: DomainLabel) -> Vec<usize> {
        split
            .iter()
            .enumerate()
            .filter(|(_, s)| s.domain == domain)
            .map(|(i, _)| i)
            .collect()
    }

    /// The first `per_domain` train samples of each domain; subsets are
    /// nested, matching the router data-scaling experiment design.
    pub fn train_subset(&self, per_domain: usize) -> Vec<&Sample> {
        let mut out = Vec::new();
        for d in DomainLabel::ALL {
            out.extend(
                self.train
                    .iter()
                    .filter(|s| s.domain == d)
                    .take(per_domain),
            );
        }
        out
    }
}

fn record_crc(domain: u8, label: u16, ambig: u16, pixels: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&[domain]);
    h.update(&label.to_le_bytes());
    h.update(&ambig.to_le_bytes());
    h.update(pixels);
    h.finalize()
}

pub fn write_corpus(samples: &[Sample], path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(CORPUS_MAGIC)?;
    w.write_all(&CORPUS_VERSION.to_le_bytes())?;
    w.write_all(&(samples.len() as u32).to_le_bytes())?;
    w.write_all(&(IMG_SIZE as u16).to_le_bytes())?;
    w.write_all(&(IMG_SIZE as u16).to_le_bytes())?;
    w.write_all(&[1u8])?;
    let mut pixels = vec![0u8; IMG_PIXELS];
    for s in samples {
        for (b, &p) in pixels.iter_mut().zip(s.pixels()) {
            *b = (p * 255.0).round().clamp(0.0, 255.0) as u8;
        }
        let ambig = (s.ambiguity * 10_000.0).round() as u16;
        let crc = record_crc(s.domain.code(), s.task_label, ambig, &pixels);
        w.write_all(&[s.domain.code()])?;
        w.write_all(&s.task_label.to_le_bytes())?;
        w.write_all(&ambig.to_le_bytes())?;
        w.write_all(&crc.to_le_bytes())?;
        w.write_all(&pixels)?;
    }
    w.flush()?;
    Ok(())
}

/// Streaming reader over a corpus file.
pub struct CorpusReader {
    reader: BufReader<File>,
    remaining: usize,
    index: usize,
    path: PathBuf,
}

impl CorpusReader {
    pub fn len(&self) -> usize {
        self.remaining
    }

    pub fn is_empty(&self) -> bool {
        self.remaining == 0
    }
}

pub fn read_corpus(path: &Path) -> Result<CorpusReader> {
    let file = File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut header = [0u8; HEADER_BYTES];
    reader
        .read_exact(&mut header)
        .map_err(|_| MixpertError::Truncated(format!("{} (header)", path.display())))?;
    if &header[0..4] != CORPUS_MAGIC {
        return Err(MixpertError::CorruptCheckpoint(format!(
            "{} is not a corpus file",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().expect("fixed header layout"));
    if version != CORPUS_VERSION {
        return Err(MixpertError::VersionMismatch {
            found: version,
            expected: CORPUS_VERSION,
        });
    }
    let count = u32::from_le_bytes(header[8..12].try_into().expect("fixed header layout"));
    let h = u16::from_le_bytes(header[12..14].try_into().expect("fixed header layout"));
    let w = u16::from_le_bytes(header[14..16].try_into().expect("fixed header layout"));
    let c = header[16];
    if (h as usize, w as usize, c) != (IMG_SIZE, IMG_SIZE, 1) {
        return Err(MixpertError::Config(format!(
            "unsupported corpus geometry {h}x{w}x{c}"
        )));
    }
    Ok(CorpusReader {
        reader,
        remaining: count as usize,
        index: 0,
        path: path.to_path_buf(),
    })
}

impl Iterator for CorpusReader {
    type Item = Result<Sample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        let mut buf = vec![0u8; RECORD_BYTES];
        if let Err(_e) = self.reader.read_exact(&mut buf) {
            self.remaining = 0;
            return Some(Err(MixpertError::Truncated(format!(
                "{} at record {}",
                self.path.display(),
                self.index
            ))));
        }
        let domain_code = buf[0];
        let label = u16::from_le_bytes(buf[1..3].try_into().expect("fixed record layout"));
        let ambig = u16::from_le_bytes(buf[3..5].try_into().expect("fixed record layout"));
        let stored_crc = u32::from_le_bytes(buf[5..9].try_into().expect("fixed record layout"));
        let pixels = &buf[9..];
        if record_crc(domain_code, label, ambig, pixels) != stored_crc {
            let index = self.index;
            self.remaining = 0;
            return Some(Err(MixpertError::Checksum { index }));
        }
        let domain = match DomainLabel::from_code(domain_code) {
            Ok(d) => d,
            Err(e) => {
                self.remaining = 0;
                return Some(Err(e));
            }
        };
        let data: Vec<f32> = pixels.iter().map(|&b| b as f32 / 255.0).collect();
        self.remaining -= 1;
        self.index += 1;
        Some(Ok(Sample {
            image: Tensor::new(vec![1, IMG_SIZE, IMG_SIZE], data)
                .expect("record length is fixed"),
            domain,
            task_label: label,
            ambiguity: ambig as f32 / 10_000.0,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn tiny_manifest() -> DatasetManifest {
        DatasetManifest {
            train_per_domain: 8,
            val_per_domain: 4,
            test_per_domain: 4,
            ambiguous_count: 6,
            ..DatasetManifest::default()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let corpus = Corpus::generate(&tiny_manifest());
        let path = dir.path().join("t.mxpd");
        write_corpus(&corpus.train, &path).unwrap();
        let back: Vec<Sample> = read_corpus(&path)
            .unwrap()
            .collect::<Result<Vec<_>>>()
            .unwrap();
        assert_eq!(back.len(), corpus.train.len());
        for (a, b) in corpus.train.iter().zip(&back) {
            assert_eq!(a.domain, b.domain);
            assert_eq!(a.task_label, b.task_label);
            assert_eq!(a.image.data(), b.image.data(), "pixels must round-trip");
        }
        // byte-level: writing the read-back samples reproduces the file
        let path2 = dir.path().join("t2.mxpd");
        write_corpus(&back, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn corpus_generation_is_pure_function_of_manifest() {
        let a = Corpus::generate(&tiny_manifest());
        let b = Corpus::generate(&tiny_manifest());
        assert_eq!(a.train, b.train);
        assert_eq!(a.ambiguous, b.ambiguous);
    }

    #[test]
    fn corrupted_record_reports_checksum_with_index() {
        let dir = tempdir().unwrap();
        let corpus = Corpus::generate(&tiny_manifest());
        let path = dir.path().join("t.mxpd");
        write_corpus(&corpus.train, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // flip one pixel bit inside record 3
        let offset = HEADER_BYTES + 3 * RECORD_BYTES + 9 + 100;
        bytes[offset] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        let result: Result<Vec<Sample>> = read_corpus(&path).unwrap().collect();
        match result {
            Err(MixpertError::Checksum { index }) => assert_eq!(index, 3),
            other => panic!("expected checksum error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_and_truncation_are_distinct_errors() {
        let dir = tempdir().unwrap();
        let corpus = Corpus::generate(&tiny_manifest());
        let path = dir.path().join("t.mxpd");
        write_corpus(&corpus.val, &path).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 99;
        let vpath = dir.path().join("v.mxpd");
        std::fs::write(&vpath, &bytes).unwrap();
        assert!(matches!(
            read_corpus(&vpath),
            Err(MixpertError::VersionMismatch { found: 99, .. })
        ));

        let bytes = std::fs::read(&path).unwrap();
        let tpath = dir.path().join("trunc.mxpd");
        std::fs::write(&tpath, &bytes[..bytes.len() - 10]).unwrap();
        let result: Result<Vec<Sample>> = read_corpus(&tpath).unwrap().collect();
        assert!(matches!(result, Err(MixpertError::Truncated(_))));
    }

    #[test]
    fn file_size_matches_header_arithmetic() {
        let dir = tempdir().unwrap();
        let m = DatasetManifest {
            train_per_domain: 200, // 1000 samples over 5 domains
            val_per_domain: 1,
            test_per_domain: 1,
            ambiguous_count: 1,
            ..DatasetManifest::default()
        };
        let corpus = Corpus::generate(&m);
        assert_eq!(corpus.train.len(), 1000);
        let path = dir.path().join("t.mxpd");
        write_corpus(&corpus.train, &path).unwrap();
        let size = std::fs::metadata(&path).unwrap().len() as usize;
        assert_eq!(size, HEADER_BYTES + 1000 * RECORD_BYTES);
    }

    #[test]
    fn manifest_round_trips_through_text() {
        let m = tiny_manifest();
        let back = DatasetManifest::from_text(&m.to_text()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn splits_are_disjoint_by_construction() {
        // Same domain and position, different splits: different samples.
        let m = tiny_manifest();
        let c = Corpus::generate(&m);
        let tr = Corpus::domain_indices(&c.train, DomainLabel::Chart);
        let va = Corpus::domain_indices(&c.val, DomainLabel::Chart);
        assert_ne!(
            c.train[tr[0]].image,
            c.val[va[0]].image,
            "train/val overlap"
        );
    }

    #[test]
    fn nested_subsets_are_prefixes() {
        let c = Corpus::generate(&tiny_manifest());
        let small = c.train_subset(3);
        let large = c.train_subset(6);
        for d in 0..5 {
            for i in 0..3 {
                assert_eq!(small[d * 3 + i], large[d * 6 + i]);
            }
        }
    }
}
