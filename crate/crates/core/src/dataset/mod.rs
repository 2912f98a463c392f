//! Procedural five-domain synthetic image corpus: chart, document, math,
//! OCR and general styles at 32x32, each with a small per-domain
//! classification task, plus an ambiguous blended subset used only for
//! routing evaluation.

mod corpus;
mod generator;

pub use corpus::{
    read_corpus, write_corpus, Corpus, CorpusReader, DatasetManifest, CORPUS_VERSION, RECORD_BYTES,
};
pub use generator::{generate, generate_ambiguous, mix64, GEN_VERSION};

use crate::error::{MixpertError, Result};
use crate::nncore::Tensor;

pub const IMG_SIZE: usize = 32;
pub const IMG_PIXELS: usize = IMG_SIZE * IMG_SIZE;

/// The five data domains. Codes are stable and index everything
/// domain-keyed (heads, experts, accuracy tables).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DomainLabel {
    Chart,
    Doc,
    Math,
    Ocr,
    General,
}

impl DomainLabel {
    pub const ALL: [DomainLabel; 5] = [
        DomainLabel::Chart,
        DomainLabel::Doc,
        DomainLabel::Math,
        DomainLabel::Ocr,
        DomainLabel::General,
    ];

    pub fn code(self) -> u8 {
        match self {
            DomainLabel::Chart => 0,
            DomainLabel::Doc => 1,
            DomainLabel::Math => 2,
            DomainLabel::Ocr => 3,
            DomainLabel::General => 4,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| MixpertError::Contract(format!("invalid domain code {code}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            DomainLabel::Chart => "chart",
            DomainLabel::Doc => "doc",
            DomainLabel::Math => "math",
            DomainLabel::Ocr => "ocr",
            DomainLabel::General => "general",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == name)
            .ok_or_else(|| MixpertError::Config(format!("unknown domain '{name}'")))
    }

    /// Number of classes in this domain's downstream task.
    pub fn task_classes(self) -> usize {
        match self {
            DomainLabel::Chart => 5,   // bar count 2..=6
            DomainLabel::Doc => 6,     // text-line count 3..=8
            DomainLabel::Math => 4,    // shape type
            DomainLabel::Ocr => 2,     // glyph count parity
            DomainLabel::General => 4, // dominant quadrant
        }
    }
}

/// One image with its domain, task label and ambiguity level.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub domain: DomainLabel,
    pub task_label: u16,
    pub ambiguity: f32,
}

impl Sample {
    pub fn pixels(&self) -> &[f32] {
        self.image.data()
    }
}
