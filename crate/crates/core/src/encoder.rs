//! Vision encoder split into a shared trunk (patch embedding, position
//! table, shallow blocks) and per-expert deep branches (remaining blocks
//! plus a two-layer projector). The pooled trunk features feed the router.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::IMG_SIZE;
use crate::error::{MixpertError, Result};
use crate::nncore::{EncoderBlock, LinearLayer, LrGroup, ParamId, Params, Real, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub total_layers: usize,
    pub shared_layers: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub patch_size: usize,
    pub image_size: usize,
    pub channels: usize,
    pub projector_hidden: usize,
    pub projector_out: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            total_layers: 6,
            shared_layers: 4,
            embed_dim: 64,
            heads: 4,
            mlp_ratio: 4,
            patch_size: 4,
            image_size: IMG_SIZE,
            channels: 1,
            projector_hidden: 128,
            projector_out: 64,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shared_layers > self.total_layers {
            return Err(MixpertError::Config(format!(
                "shared_layers {} exceeds total_layers {}",
                self.shared_layers, self.total_layers
            )));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(MixpertError::Config(format!(
                "embed_dim {} not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if self.image_size % self.patch_size != 0 {
            return Err(MixpertError::Config(format!(
                "image_size {} not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        Ok(())
    }

    pub fn expert_layers(&self) -> usize {
        self.total_layers - self.shared_layers
    }

    pub fn tokens_per_side(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens_per_side() * self.tokens_per_side()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    /// Same split point, different shared depth.
    pub fn with_shared_layers(mut self, shared: usize) -> Self {
        self.shared_layers = shared;
        self
    }
}

/// Rearranges `[batch, channels, H, W]` pixels into `[batch * n_tokens,
/// patch_dim]` rows (row-major patches, patches ordered row-major).
pub fn patchify(pixels: &[f32], batch: usize, cfg: &EncoderConfig) -> Vec<f32> {
    let (img, patch) = (cfg.image_size, cfg.patch_size);
    let per_side = cfg.tokens_per_side();
    let pd = cfg.patch_dim();
    let n_tok = cfg.n_tokens();
    debug_assert_eq!(pixels.len(), batch * cfg.channels * img * img);
    let mut out = vec![0.0f32; batch * n_tok * pd];
    for b in 0..batch {
        let src = &pixels[b * img * img..(b + 1) * img * img];
        for pi in 0..per_side {
            for pj in 0..per_side {
                let tok = pi * per_side + pj;
                let dst = &mut out[(b * n_tok + tok) * pd..(b * n_tok + tok + 1) * pd];
                for di in 0..patch {
                    for dj in 0..patch {
                        dst[di * patch + dj] = src[(pi * patch + di) * img + pj * patch + dj];
                    }
                }
            }
        }
    }
    out
}

/// Shallow shared component: patch embedding, learned position table and
/// the first `shared_layers` transformer blocks.
#[derive(Debug, Clone)]
pub struct SharedTrunk {
    pub patch_embed: LinearLayer,
    pub pos_embed: ParamId,
    pub blocks: Vec<EncoderBlock>,
}

impl SharedTrunk {
    pub fn init<T: Real>(
        ps: &mut Params<T>,
        rng: &mut ChaCha8Rng,
        cfg: &EncoderConfig,
        layers: usize,
        prefix: &str,
    ) -> Self
    where
        StandardNormal: Distribution<T>,
    {
        let patch_embed = LinearLayer::init(
            ps,
            rng,
            &format!("{prefix}.patch_embed"),
            cfg.patch_dim(),
            cfg.embed_dim,
            LrGroup::Encoder,
        );
        let pos_embed = ps.add_normal(
            format!("{prefix}.pos_embed"),
            cfg.n_tokens(),
            cfg.embed_dim,
            crate::nncore::INIT_STD,
            rng,
            crate::nncore::ParamKind::PosEmbed,
            LrGroup::Encoder,
        );
        let blocks = (0..layers)
            .map(|i| {
                EncoderBlock::init(
                    ps,
                    rng,
                    &format!("{prefix}.block{i}"),
                    cfg.embed_dim,
                    cfg.heads,
                    cfg.mlp_ratio,
                    LrGroup::Encoder,
                )
            })
            .collect();
        Self {
            patch_embed,
            pos_embed,
            blocks,
        }
    }

    /// Embeds a batch of images and runs the shared blocks.
    /// Output is `[batch * n_tokens, embed_dim]`.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        ps: &Params<T>,
        pixels: &[f32],
        batch: usize,
        cfg: &EncoderConfig,
    ) -> Result<Var> {
        let expected = batch * cfg.channels * cfg.image_size * cfg.image_size;
        if pixels.len() != expected {
            return Err(MixpertError::Config(format!(
                "encoder expects {} pixels for batch {}, got {}",
                expected,
                batch,
                pixels.len()
            )));
        }
        let patches = patchify(pixels, batch, cfg);
        let patches_t: Vec<T> = patches.into_iter().map(T::from_f32c).collect();
        let x = tape.leaf(patches_t, batch * cfg.n_tokens(), cfg.patch_dim());
        let embedded = self.patch_embed.forward(tape, ps, x)?;
        let pos = tape.param(ps, self.pos_embed);
        let mut h = tape.add_cycle(embedded, pos, cfg.n_tokens())?;
        for block in &self.blocks {
            h = block.forward(tape, ps, h, batch)?;
        }
        Ok(h)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.patch_embed.param_ids();
        ids.push(self.pos_embed);
        for b in &self.blocks {
            ids.extend(b.param_ids());
        }
        ids
    }
}

/// Two-layer MLP projector applied tokenwise after the deep blocks.
#[derive(Debug, Clone)]
pub struct Projector {
    pub fc1: LinearLayer,
    pub fc2: LinearLayer,
}

impl Projector {
    pub fn init<T: Real>(
        ps: &mut Params<T>,
        rng: &mut ChaCha8Rng,
        cfg: &EncoderConfig,
        prefix: &str,
    ) -> Self
    where
        StandardNormal: Distribution<T>,
    {
        Self {
            fc1: LinearLayer::init(
                ps,
                rng,
                &format!("{prefix}.proj1"),
                cfg.embed_dim,
                cfg.projector_hidden,
                LrGroup::Projector,
            ),
            fc2: LinearLayer::init(
                ps,
                rng,
                &format!("{prefix}.proj2"),
                cfg.projector_hidden,
                cfg.projector_out,
                LrGroup::Projector,
            ),
        }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, ps: &Params<T>, x: Var) -> Result<Var> {
        let h = self.fc1.forward(tape, ps, x)?;
        let h = tape.gelu(h)?;
        self.fc2.forward(tape, ps, h)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.fc1.param_ids();
        ids.extend(self.fc2.param_ids());
        ids
    }

    pub fn clone_into<T: Real>(&self, ps: &mut Params<T>, prefix: &str) -> Self {
        Self {
            fc1: self.fc1.clone_into(ps, &format!("{prefix}.proj1")),
            fc2: self.fc2.clone_into(ps, &format!("{prefix}.proj2")),
        }
    }
}

/// Deep expert branch: the remaining transformer blocks plus a projector.
#[derive(Debug, Clone)]
pub struct ExpertBranch {
    pub blocks: Vec<EncoderBlock>,
    pub projector: Projector,
}

impl ExpertBranch {
    pub fn init<T: Real>(
        ps: &mut Params<T>,
        rng: &mut ChaCha8Rng,
        cfg: &EncoderConfig,
        layers: usize,
        prefix: &str,
    ) -> Self
    where
        StandardNormal: Distribution<T>,
    {
        let blocks = (0..layers)
            .map(|i| {
                EncoderBlock::init(
                    ps,
                    rng,
                    &format!("{prefix}.block{i}"),
                    cfg.embed_dim,
                    cfg.heads,
                    cfg.mlp_ratio,
                    LrGroup::ExpertBlock,
                )
            })
            .collect();
        Self {
            blocks,
            projector: Projector::init(ps, rng, cfg, prefix),
        }
    }

    /// Runs the deep blocks and projector on shared features
    /// `[batch * n_tokens, embed_dim]`.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        ps: &Params<T>,
        h_shared: Var,
        batch: usize,
    ) -> Result<Var> {
        let mut h = h_shared;
        for block in &self.blocks {
            h = block.forward(tape, ps, h, batch)?;
        }
        self.projector.forward(tape, ps, h)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = Vec::new();
        for b in &self.blocks {
            ids.extend(b.param_ids());
        }
        ids.extend(self.projector.param_ids());
        ids
    }
}

/// Deep-copies a branch; training the clone never touches the source.
pub fn clone_branch<T: Real>(
    ps: &mut Params<T>,
    source: &ExpertBranch,
    prefix: &str,
) -> ExpertBranch {
    let blocks = source
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| b.clone_into(ps, &format!("{prefix}.block{i}")))
        .collect();
    ExpertBranch {
        blocks,
        projector: source.projector.clone_into(ps, prefix),
    }
}

/// Arithmetic mean over the token axis: `[batch * n_tokens, d]` -> `[batch, d]`.
pub fn pool_global<T: Real>(tape: &mut Tape<T>, tokens: Var, n_tokens: usize) -> Result<Var> {
    tape.pool_mean(tokens, n_tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, DomainLabel};
    use rand::SeedableRng;

    fn cfg() -> EncoderConfig {
        EncoderConfig::default()
    }

    fn trunk_with_layers(layers: usize) -> (Params<f32>, SharedTrunk) {
        let mut ps = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trunk = SharedTrunk::init(&mut ps, &mut rng, &cfg(), layers, "enc");
        (ps, trunk)
    }

    #[test]
    fn encode_shared_has_token_grid_shape() {
        let (ps, trunk) = trunk_with_layers(4);
        let img = generate(DomainLabel::Chart, 0);
        let mut tape = Tape::<f32>::strict();
        let h = trunk
            .forward(&mut tape, &ps, img.pixels(), 1, &cfg())
            .unwrap();
        assert_eq!(tape.rows(h), 64);
        assert_eq!(tape.cols(h), 64);
    }

    #[test]
    fn encode_shared_is_deterministic() {
        let (ps, trunk) = trunk_with_layers(4);
        let img = generate(DomainLabel::Doc, 3);
        let mut t1 = Tape::<f32>::new();
        let h1 = trunk.forward(&mut t1, &ps, img.pixels(), 1, &cfg()).unwrap();
        let mut t2 = Tape::<f32>::new();
        let h2 = trunk.forward(&mut t2, &ps, img.pixels(), 1, &cfg()).unwrap();
        assert_eq!(t1.value(h1), t2.value(h2));
    }

    #[test]
    fn zero_shared_layers_is_embedding_plus_positions() {
        let (ps, trunk) = trunk_with_layers(0);
        let img = generate(DomainLabel::Math, 5);
        let mut tape = Tape::<f32>::new();
        let h = trunk.forward(&mut tape, &ps, img.pixels(), 1, &cfg()).unwrap();

        let mut tape2 = Tape::<f32>::new();
        let patches = patchify(img.pixels(), 1, &cfg());
        let x = tape2.leaf(patches, 64, 16);
        let e = trunk.patch_embed.forward(&mut tape2, &ps, x).unwrap();
        let pos = tape2.param(&ps, trunk.pos_embed);
        let want = tape2.add_cycle(e, pos, 64).unwrap();
        assert_eq!(tape.value(h), tape2.value(want));
    }

    #[test]
    fn cloned_branches_agree_then_diverge_after_updates() {
        let mut ps = Params::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = cfg();
        let branch = ExpertBranch::init(&mut ps, &mut rng, &c, 2, "a");
        let clone = clone_branch(&mut ps, &branch, "b");

        // bit-identical clone
        for (pa, pb) in branch.param_ids().iter().zip(clone.param_ids()) {
            assert_eq!(ps.get(*pa).data, ps.get(pb).data);
        }

        let input: Vec<f32> = (0..64 * 64).map(|i| ((i % 31) as f32) * 0.01).collect();
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(input.clone(), 64, 64);
        let ya = branch.forward(&mut tape, &ps, x, 1).unwrap();
        let yb = clone.forward(&mut tape, &ps, x, 1).unwrap();
        assert_eq!(tape.value(ya), tape.value(yb));

        // mutate the clone; the source must stay bit-identical
        let before = ps.checksum(&branch.param_ids());
        let first = clone.param_ids()[2];
        ps.get_mut(first).data[0] += 0.25;
        assert_eq!(ps.checksum(&branch.param_ids()), before);

        let mut tape2 = Tape::<f32>::new();
        let x2 = tape2.leaf(input, 64, 64);
        let ya2 = branch.forward(&mut tape2, &ps, x2, 1).unwrap();
        let yb2 = clone.forward(&mut tape2, &ps, x2, 1).unwrap();
        assert_ne!(tape2.value(ya2), tape2.value(yb2));
    }

    #[test]
    fn clone_of_clone_equals_original() {
        let mut ps = Params::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let branch = ExpertBranch::init(&mut ps, &mut rng, &cfg(), 2, "a");
        let c1 = clone_branch(&mut ps, &branch, "b");
        let c2 = clone_branch(&mut ps, &c1, "c");
        for (pa, pb) in branch.param_ids().iter().zip(c2.param_ids()) {
            assert_eq!(ps.get(*pa).data, ps.get(pb).data);
        }
    }

    #[test]
    fn zero_expert_layers_is_projector_only() {
        let mut ps = Params::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = cfg();
        let branch = ExpertBranch::init(&mut ps, &mut rng, &c, 0, "e");
        let input: Vec<f32> = (0..64 * 64).map(|i| ((i % 17) as f32) * 0.02 - 0.1).collect();
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(input.clone(), 64, 64);
        let y = branch.forward(&mut tape, &ps, x, 1).unwrap();

        let mut tape2 = Tape::<f32>::new();
        let x2 = tape2.leaf(input, 64, 64);
        let want = branch.projector.forward(&mut tape2, &ps, x2).unwrap();
        assert_eq!(tape.value(y), tape2.value(want));
    }

    #[test]
    fn pooling_mean_constants_symmetry_and_precision() {
        let mut tape = Tape::<f32>::new();
        // all tokens equal v -> pooled == v
        let v = vec![0.25f32, -1.5, 3.125];
        let mut rows = Vec::new();
        for _ in 0..4 {
            rows.extend_from_slice(&v);
        }
        let x = tape.leaf(rows, 4, 3);
        let pooled = pool_global(&mut tape, x, 4).unwrap();
        assert_eq!(tape.value(pooled), v.as_slice());

        // {+v, -v} -> 0
        let x2 = tape.leaf(vec![1.25, -0.5, -1.25, 0.5], 2, 2);
        let p2 = pool_global(&mut tape, x2, 2).unwrap();
        assert_eq!(tape.value(p2), &[0.0, 0.0]);

        // random input matches an f64 mean within 1e-6
        let data: Vec<f32> = (0..64 * 8)
            .map(|i| (((i * 2654435761usize) % 1000) as f32) / 500.0 - 1.0)
            .collect();
        let x3 = tape.leaf(data.clone(), 64, 8);
        let p3 = pool_global(&mut tape, x3, 64).unwrap();
        for c in 0..8 {
            let want: f64 = (0..64).map(|r| data[r * 8 + c] as f64).sum::<f64>() / 64.0;
            assert!(((tape.value(p3)[c] as f64) - want).abs() < 1e-6);
        }
    }

    #[test]
    fn pooling_is_permutation_invariant() {
        let data: Vec<f32> = (0..16 * 4).map(|i| (i as f32) * 0.37 - 3.0).collect();
        let mut permuted = data.clone();
        // rotate rows by 5
        for r in 0..16 {
            let src = (r + 5) % 16;
            for c in 0..4 {
                permuted[r * 4 + c] = data[src * 4 + c];
            }
        }
        let mut tape = Tape::<f32>::new();
        let a = tape.leaf(data, 16, 4);
        let b = tape.leaf(permuted, 16, 4);
        let pa = pool_global(&mut tape, a, 16).unwrap();
        let pb = pool_global(&mut tape, b, 16).unwrap();
        for (x, y) in tape.value(pa).iter().zip(tape.value(pb)) {
            assert!((x - y).abs() < 1e-6);
        }
    }
}
