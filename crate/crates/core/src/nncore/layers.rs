use rand_chacha::ChaCha8Rng;

use rand_distr::{Distribution, StandardNormal};

use super::params::{LrGroup, ParamId, ParamKind, Params};
use super::real::Real;
use super::tape::{Tape, Var};
use super::LAYER_NORM_EPS;
use crate::error::Result;

pub const INIT_STD: f32 = 0.02;

/// Fully connected layer, weight [out, in], bias [out].
#[derive(Debug, Clone)]
pub struct LinearLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl LinearLayer {
    pub fn init<T: Real>(
        ps: &mut Params<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
        group: LrGroup,
    ) -> Self
    where
        StandardNormal: Distribution<T>,
    {
        let w = ps.add_normal(
            format!("{name}.w"),
            d_out,
            d_in,
            INIT_STD,
            rng,
            ParamKind::Weight,
            group,
        );
        let b = ps.add_const(format!("{name}.b"), 1, d_out, 0.0, ParamKind::Bias, group);
        Self { w, b, d_in, d_out }
    }

    /// All-zero weights and bias (router output layer starts silent).
    pub fn init_zero<T: Real>(
        ps: &mut Params<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        group: LrGroup,
    ) -> Self {
        let w = ps.add_const(format!("{name}.w"), d_out, d_in, 0.0, ParamKind::Weight, group);
        let b = ps.add_const(format!("{name}.b"), 1, d_out, 0.0, ParamKind::Bias, group);
        Self { w, b, d_in, d_out }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, ps: &Params<T>, x: Var) -> Result<Var> {
        let w = tape.param(ps, self.w);
        let b = tape.param(ps, self.b);
        tape.linear(x, w, b)
    }

    pub fn param_count(&self) -> u64 {
        (self.d_out * self.d_in + self.d_out) as u64
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w, self.b]
    }

    pub fn clone_into<T: Real>(&self, ps: &mut Params<T>, name: &str) -> Self {
        Self {
            w: ps.duplicate(self.w, format!("{name}.w")),
            b: ps.duplicate(self.b, format!("{name}.b")),
            d_in: self.d_in,
            d_out: self.d_out,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNormLayer {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

impl LayerNormLayer {
    pub fn init<T: Real>(ps: &mut Params<T>, name: &str, dim: usize, group: LrGroup) -> Self {
        let gamma = ps.add_const(format!("{name}.gamma"), 1, dim, 1.0, ParamKind::Norm, group);
        let beta = ps.add_const(format!("{name}.beta"), 1, dim, 0.0, ParamKind::Norm, group);
        Self { gamma, beta, dim }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, ps: &Params<T>, x: Var) -> Result<Var> {
        let g = tape.param(ps, self.gamma);
        let b = tape.param(ps, self.beta);
        tape.layer_norm(x, g, b, T::from_f32c(LAYER_NORM_EPS))
    }

    pub fn param_count(&self) -> u64 {
        2 * self.dim as u64
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.gamma, self.beta]
    }

    pub fn clone_into<T: Real>(&self, ps: &mut Params<T>, name: &str) -> Self {
        Self {
            gamma: ps.duplicate(self.gamma, format!("{name}.gamma")),
            beta: ps.duplicate(self.beta, format!("{name}.beta")),
            dim: self.dim,
        }
    }
}

/// Multi-head self-attention: q/k/v/out projections plus the fused
/// attention core.
#[derive(Debug, Clone)]
pub struct AttentionLayer {
    pub q: LinearLayer,
    pub k: LinearLayer,
    pub v: LinearLayer,
    pub o: LinearLayer,
    pub heads: usize,
}

impl AttentionLayer {
    pub fn init<T: Real>(
        ps: &mut Params<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        dim: usize,
        heads: usize,
        group: LrGroup,
    ) -> Self
    where
        StandardNormal: Distribution<T>,
    {
        Self {
            q: LinearLayer::init(ps, rng, &format!("{name}.q"), dim, dim, group),
            k: LinearLayer::init(ps, rng, &format!("{name}.k"), dim, dim, group),
            v: LinearLayer::init(ps, rng, &format!("{name}.v"), dim, dim, group),
            o: LinearLayer::init(ps, rng, &format!("{name}.o"), dim, dim, group),
            heads,
        }
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        ps: &Params<T>,
        x: Var,
        batch: usize,
    ) -> Result<Var> {
        let q = self.q.forward(tape, ps, x)?;
        let k = self.k.forward(tape, ps, x)?;
        let v = self.v.forward(tape, ps, x)?;
        let a = tape.mhsa(q, k, v, batch, self.heads)?;
        self.o.forward(tape, ps, a)
    }

    pub fn param_count(&self) -> u64 {
        self.q.param_count() + self.k.param_count() + self.v.param_count() + self.o.param_count()
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        [&self.q, &self.k, &self.v, &self.o]
            .iter()
            .flat_map(|l| l.param_ids())
            .collect()
    }

    pub fn clone_into<T: Real>(&self, ps: &mut Params<T>, name: &str) -> Self {
        Self {
            q: self.q.clone_into(ps, &format!("{name}.q")),
            k: self.k.clone_into(ps, &format!("{name}.k")),
            v: self.v.clone_into(ps, &format!("{name}.v")),
            o: self.o.clone_into(ps, &format!("{name}.o")),
            heads: self.heads,
        }
    }
}

/// Pre-norm transformer block: x + attn(ln1(x)), then x + mlp(ln2(x)).
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub ln1: LayerNormLayer,
    pub attn: AttentionLayer,
    pub ln2: LayerNormLayer,
    pub fc1: LinearLayer,
    pub fc2: LinearLayer,
}

impl EncoderBlock {
    pub fn init<T: Real>(
        ps: &mut Params<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        dim: usize,
        heads: usize,
        mlp_ratio: usize,
        group: LrGroup,
    ) -> Self
    where
        StandardNormal: Distribution<T>,
    {
        let hidden = dim * mlp_ratio;
        Self {
            ln1: LayerNormLayer::init(ps, &format!("{name}.ln1"), dim, group),
            attn: AttentionLayer::init(ps, rng, &format!("{name}.attn"), dim, heads, group),
            ln2: LayerNormLayer::init(ps, &format!("{name}.ln2"), dim, group),
            fc1: LinearLayer::init(ps, rng, &format!("{name}.fc1"), dim, hidden, group),
            fc2: LinearLayer::init(ps, rng, &format!("{name}.fc2"), hidden, dim, group),
        }
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        ps: &Params<T>,
        x: Var,
        batch: usize,
    ) -> Result<Var> {
        let h = self.ln1.forward(tape, ps, x)?;
        let a = self.attn.forward(tape, ps, h, batch)?;
        let x = tape.add(x, a)?;
        let h = self.ln2.forward(tape, ps, x)?;
        let h = self.fc1.forward(tape, ps, h)?;
        let h = tape.gelu(h)?;
        let h = self.fc2.forward(tape, ps, h)?;
        tape.add(x, h)
    }

    pub fn param_count(&self) -> u64 {
        self.ln1.param_count()
            + self.attn.param_count()
            + self.ln2.param_count()
            + self.fc1.param_count()
            + self.fc2.param_count()
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.ln1.param_ids();
        ids.extend(self.attn.param_ids());
        ids.extend(self.ln2.param_ids());
        ids.extend(self.fc1.param_ids());
        ids.extend(self.fc2.param_ids());
        ids
    }

    pub fn clone_into<T: Real>(&self, ps: &mut Params<T>, name: &str) -> Self {
        Self {
            ln1: self.ln1.clone_into(ps, &format!("{name}.ln1")),
            attn: self.attn.clone_into(ps, &format!("{name}.attn")),
            ln2: self.ln2.clone_into(ps, &format!("{name}.ln2")),
            fc1: self.fc1.clone_into(ps, &format!("{name}.fc1")),
            fc2: self.fc2.clone_into(ps, &format!("{name}.fc2")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn linear_zero_input_gives_bias() {
        let mut ps = Params::<f32>::new();
        let mut r = rng();
        let layer = LinearLayer::init(&mut ps, &mut r, "l", 4, 3, LrGroup::Encoder);
        ps.get_mut(layer.b).data = vec![0.5, -1.0, 2.0];
        let mut tape = Tape::<f32>::strict();
        let x = tape.leaf(vec![0.0; 8], 2, 4);
        let y = layer.forward(&mut tape, &ps, x).unwrap();
        assert_eq!(tape.value(y), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    }

    #[test]
    fn linear_identity_weight_passes_through() {
        let mut ps = Params::<f32>::new();
        let w = ps.add(
            "l.w",
            3,
            3,
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            ParamKind::Weight,
            LrGroup::Encoder,
        );
        let b = ps.add_const("l.b", 1, 3, 0.0, ParamKind::Bias, LrGroup::Encoder);
        let layer = LinearLayer { w, b, d_in: 3, d_out: 3 };
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(vec![0.3, -1.2, 7.5], 1, 3);
        let y = layer.forward(&mut tape, &ps, x).unwrap();
        assert_eq!(tape.value(y), &[0.3, -1.2, 7.5]);
    }

    #[test]
    fn linear_hand_multiplied_example() {
        // x = [1, 2], W = [[1,0],[0,1],[1,1]], b = [0,0,1] -> y = [1, 2, 4]
        let mut ps = Params::<f32>::new();
        let w = ps.add(
            "l.w",
            3,
            2,
            vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0],
            ParamKind::Weight,
            LrGroup::Encoder,
        );
        let b = ps.add("l.b", 1, 3, vec![0.0, 0.0, 1.0], ParamKind::Bias, LrGroup::Encoder);
        let layer = LinearLayer { w, b, d_in: 2, d_out: 3 };
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(vec![1.0, 2.0], 1, 2);
        let y = layer.forward(&mut tape, &ps, x).unwrap();
        assert_eq!(tape.value(y), &[1.0, 2.0, 4.0]);
    }

    #[test]
    fn linear_shape_mismatch_is_error() {
        let mut ps = Params::<f32>::new();
        let mut r = rng();
        let layer = LinearLayer::init(&mut ps, &mut r, "l", 4, 3, LrGroup::Encoder);
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(vec![0.0; 10], 2, 5);
        assert!(layer.forward(&mut tape, &ps, x).is_err());
    }

    #[test]
    fn block_preserves_shape_and_is_deterministic() {
        let mut ps = Params::<f32>::new();
        let mut r = rng();
        let block = EncoderBlock::init(&mut ps, &mut r, "b", 16, 4, 4, LrGroup::Encoder);
        let data: Vec<f32> = (0..4 * 16).map(|i| ((i * 37 % 11) as f32 - 5.0) * 0.1).collect();
        let mut tape = Tape::<f32>::strict();
        let x = tape.leaf(data.clone(), 4, 16);
        let y = block.forward(&mut tape, &ps, x, 1).unwrap();
        assert_eq!(tape.rows(y), 4);
        assert_eq!(tape.cols(y), 16);

        let mut tape2 = Tape::strict();
        let x2 = tape2.leaf(data, 4, 16);
        let y2 = block.forward(&mut tape2, &ps, x2, 1).unwrap();
        assert_eq!(tape.value(y), tape2.value(y2));
    }

    #[test]
    fn attention_over_single_token_returns_value_projection() {
        // With one key the softmax is 1, so the fused attention output is
        // exactly the value row.
        let mut tape = Tape::<f32>::new();
        let q = tape.leaf(vec![0.3, -0.7, 1.1, 0.0], 1, 4);
        let k = tape.leaf(vec![2.0, 0.1, -0.5, 0.9], 1, 4);
        let v = tape.leaf(vec![5.0, -3.0, 0.25, 1.5], 1, 4);
        let out = tape.mhsa(q, k, v, 1, 2).unwrap();
        assert_eq!(tape.value(out), &[5.0, -3.0, 0.25, 1.5]);
    }

    #[test]
    fn block_parameter_count_matches_reflective_walk() {
        let mut ps = Params::<f32>::new();
        let mut r = rng();
        let block = EncoderBlock::init(&mut ps, &mut r, "b", 64, 4, 4, LrGroup::Encoder);
        let walked: u64 = block
            .param_ids()
            .iter()
            .map(|&id| ps.get(id).numel() as u64)
            .sum();
        assert_eq!(block.param_count(), walked);
    }
}
