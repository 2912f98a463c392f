use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::real::Real;

/// Learning-rate group a parameter belongs to. Peak learning rates are
/// configured per group; the projector group runs 5x hotter than the
/// encoder group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LrGroup {
    /// Trunk / joint-phase encoder blocks, patch and position embeddings.
    Encoder,
    /// Expert branch blocks after the split.
    ExpertBlock,
    /// Projector MLPs.
    Projector,
    /// Router MLP.
    Router,
    /// Task heads.
    Head,
}

/// What a parameter is, structurally. Controls weight decay (weights only)
/// and initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Norm,
    PosEmbed,
}

impl ParamKind {
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::Weight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) u32);

impl ParamId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A named trainable tensor. `rows == 1` for biases and norm parameters.
#[derive(Debug, Clone)]
pub struct Param<T = f32> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
    pub grad: Vec<T>,
    pub frozen: bool,
    pub kind: ParamKind,
    pub group: LrGroup,
}

impl<T: Real> Param<T> {
    pub fn numel(&self) -> usize {
        self.rows * self.cols
    }
}

/// Flat registry of every parameter a model owns. Layers hold `ParamId`s
/// into their model's store; forward passes copy values onto the tape and
/// `Tape::export_grads` accumulates gradients back here.
#[derive(Debug, Clone, Default)]
pub struct Params<T = f32> {
    entries: Vec<Param<T>>,
}

impl<T: Real> Params<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        data: Vec<T>,
        kind: ParamKind,
        group: LrGroup,
    ) -> ParamId {
        assert_eq!(rows * cols, data.len(), "param data length mismatch");
        let id = ParamId(self.entries.len() as u32);
        self.entries.push(Param {
            name: name.into(),
            rows,
            cols,
            grad: vec![T::zero(); data.len()],
            data,
            frozen: false,
            kind,
            group,
        });
        id
    }

    /// Gaussian init, std 0.02 unless scaled.
    pub fn add_normal(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        std: f32,
        rng: &mut ChaCha8Rng,
        kind: ParamKind,
        group: LrGroup,
    ) -> ParamId
    where
        StandardNormal: Distribution<T>,
    {
        let dist = Normal::new(T::zero(), T::from_f32c(std)).expect("valid normal");
        let data: Vec<T> = (0..rows * cols).map(|_| dist.sample(rng)).collect();
        self.add(name, rows, cols, data, kind, group)
    }

    pub fn add_const(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        value: f32,
        kind: ParamKind,
        group: LrGroup,
    ) -> ParamId {
        self.add(
            name,
            rows,
            cols,
            vec![T::from_f32c(value); rows * cols],
            kind,
            group,
        )
    }

    /// Deep-copies an existing entry under a new name; the copy starts
    /// unfrozen with zero grad.
    pub fn duplicate(&mut self, src: ParamId, new_name: impl Into<String>) -> ParamId {
        let p = &self.entries[src.index()];
        let (rows, cols, data, kind, group) = (p.rows, p.cols, p.data.clone(), p.kind, p.group);
        self.add(new_name, rows, cols, data, kind, group)
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.entries[id.index()]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.entries[id.index()]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, p)| (ParamId(i as u32), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param<T>)> {
        self.entries
            .iter_mut()
            .enumerate()
            .map(|(i, p)| (ParamId(i as u32), p))
    }

    /// Total stored scalar count (the reflective ground truth the
    /// structural counters are checked against).
    pub fn total_count(&self) -> u64 {
        self.entries.iter().map(|p| p.numel() as u64).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.entries {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn freeze_all(&mut self) {
        for p in &mut self.entries {
            p.frozen = true;
        }
    }

    pub fn unfreeze_all(&mut self) {
        for p in &mut self.entries {
            p.frozen = false;
        }
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.entries[id.index()].frozen = frozen;
    }

    pub fn set_group(&mut self, id: ParamId, group: LrGroup) {
        self.entries[id.index()].group = group;
    }

    /// FNV-1a over the raw bytes of the listed entries; used by the
    /// freezing-contract checks and the per-branch change detection.
    pub fn checksum(&self, ids: &[ParamId]) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for id in ids {
            let p = self.get(*id);
            for v in &p.data {
                for b in v.to_f64c().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }

    pub fn checksum_all(&self) -> u64 {
        let ids: Vec<ParamId> = self.iter().map(|(id, _)| id).collect();
        self.checksum(&ids)
    }
}
