use super::kernels;
use super::params::{ParamId, Params};
use super::real::Real;
use super::tensor::Tensor;
use crate::error::{MixpertError, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Var },
    Add { a: Var, b: Var },
    AddCycle { x: Var, table: Var, period: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, stats: Vec<T> },
    Gelu { x: Var },
    Mhsa { q: Var, k: Var, v: Var, batch: usize, n_tok: usize, heads: usize, probs: Vec<T> },
    SoftmaxRows { x: Var },
    PoolMean { x: Var, group: usize },
    CrossEntropy { logits: Var, labels: Vec<u32>, probs: Vec<T> },
    SelectRows { x: Var, indices: Vec<u32> },
    Sum { x: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: T },
}

struct Node<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
    needs_grad: bool,
    op: Op<T>,
}

/// Reverse-mode tape. One tape records one forward pass; `backward`
/// walks it in reverse and `export_grads` accumulates parameter
/// gradients back into the owning `Params` store.
///
/// Models run at `f32`; the gradient-check oracles instantiate the same
/// code at `f64`.
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    /// When set, every op output is scanned for NaN/Inf and the op name
    /// is reported. Training loops leave this off and watch the loss.
    strict: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            strict: false,
        }
    }

    pub fn strict() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            strict: true,
        }
    }

    fn push(&mut self, rows: usize, cols: usize, data: Vec<T>, needs_grad: bool, op: Op<T>) -> Var {
        debug_assert_eq!(rows * cols, data.len());
        self.nodes.push(Node {
            rows,
            cols,
            data,
            needs_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var, what: &str) -> Result<Var> {
        if self.strict {
            let n = &self.nodes[v.0];
            if !n.data.iter().all(|x| x.is_finite()) {
                return Err(MixpertError::NonFinite(what.to_string()));
            }
        }
        Ok(v)
    }

    pub fn rows(&self, v: Var) -> usize {
        self.nodes[v.0].rows
    }

    pub fn cols(&self, v: Var) -> usize {
        self.nodes[v.0].cols
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].data
    }

    /// Gradient of `v` after `backward` ran. None if nothing flowed here.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    // -- inputs ------------------------------------------------------------

    pub fn leaf(&mut self, data: Vec<T>, rows: usize, cols: usize) -> Var {
        self.push(rows, cols, data, false, Op::Leaf)
    }

    /// Copies the parameter value onto the tape. Frozen parameters join the
    /// graph as constants and never receive gradients.
    pub fn param(&mut self, ps: &Params<T>, id: ParamId) -> Var {
        let p = ps.get(id);
        self.push(p.rows, p.cols, p.data.clone(), !p.frozen, Op::Param(id))
    }

    // -- ops ---------------------------------------------------------------

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, din) = (self.rows(x), self.cols(x));
        let (dout, win) = (self.rows(w), self.cols(w));
        if din != win || self.cols(b) != dout {
            return Err(MixpertError::Shape(format!(
                "linear: x[{n},{din}] w[{dout},{win}] b[{},{}]",
                self.rows(b),
                self.cols(b)
            )));
        }
        let mut y = vec![T::zero(); n * dout];
        kernels::linear_fwd(
            &self.nodes[x.0].data,
            n,
            din,
            &self.nodes[w.0].data,
            dout,
            &self.nodes[b.0].data,
            &mut y,
        );
        let ng = self.needs(&[x, w, b]);
        let v = self.push(n, dout, y, ng, Op::Linear { x, w, b });
        self.check(v, "linear output")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.rows(a) != self.rows(b) || self.cols(a) != self.cols(b) {
            return Err(MixpertError::Shape("add: operand shapes differ".into()));
        }
        let mut y = vec![T::zero(); self.nodes[a.0].data.len()];
        kernels::add_fwd(&self.nodes[a.0].data, &self.nodes[b.0].data, &mut y);
        let ng = self.needs(&[a, b]);
        let (r, c) = (self.rows(a), self.cols(a));
        let v = self.push(r, c, y, ng, Op::Add { a, b });
        self.check(v, "add output")
    }

    /// Adds a `[period, cols]` table cyclically over rows (position embeddings).
    pub fn add_cycle(&mut self, x: Var, table: Var, period: usize) -> Result<Var> {
        if self.cols(x) != self.cols(table) || self.rows(table) != period {
            return Err(MixpertError::Shape("add_cycle: table shape mismatch".into()));
        }
        if self.rows(x) % period != 0 {
            return Err(MixpertError::Shape(
                "add_cycle: rows not a multiple of period".into(),
            ));
        }
        let (r, c) = (self.rows(x), self.cols(x));
        let mut y = vec![T::zero(); r * c];
        kernels::add_cycle_fwd(&self.nodes[x.0].data, c, &self.nodes[table.0].data, period, &mut y);
        let ng = self.needs(&[x, table]);
        let v = self.push(r, c, y, ng, Op::AddCycle { x, table, period });
        self.check(v, "position add output")
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let (r, c) = (self.rows(x), self.cols(x));
        if self.cols(gamma) != c || self.cols(beta) != c {
            return Err(MixpertError::Shape("layer_norm: parameter dims".into()));
        }
        let mut y = vec![T::zero(); r * c];
        let mut stats = vec![T::zero(); 2 * r];
        kernels::layer_norm_fwd(
            &self.nodes[x.0].data,
            r,
            c,
            &self.nodes[gamma.0].data,
            &self.nodes[beta.0].data,
            eps,
            &mut y,
            &mut stats,
        );
        let ng = self.needs(&[x, gamma, beta]);
        let v = self.push(r, c, y, ng, Op::LayerNorm { x, gamma, beta, stats });
        self.check(v, "layer_norm output")
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let (r, c) = (self.rows(x), self.cols(x));
        let mut y = vec![T::zero(); r * c];
        kernels::gelu_fwd(&self.nodes[x.0].data, &mut y);
        let ng = self.needs(&[x]);
        let v = self.push(r, c, y, ng, Op::Gelu { x });
        self.check(v, "gelu output")
    }

    pub fn mhsa(&mut self, q: Var, k: Var, v: Var, batch: usize, heads: usize) -> Result<Var> {
        let (r, d) = (self.rows(q), self.cols(q));
        for other in [k, v] {
            if self.rows(other) != r || self.cols(other) != d {
                return Err(MixpertError::Shape("mhsa: q/k/v shapes differ".into()));
            }
        }
        if batch == 0 || r % batch != 0 {
            return Err(MixpertError::Shape("mhsa: rows not divisible by batch".into()));
        }
        let n_tok = r / batch;
        if d % heads != 0 {
            return Err(MixpertError::Shape(
                "mhsa: embed dim not divisible by heads".into(),
            ));
        }
        let mut out = vec![T::zero(); r * d];
        let mut probs = vec![T::zero(); batch * heads * n_tok * n_tok];
        kernels::mhsa_fwd(
            &self.nodes[q.0].data,
            &self.nodes[k.0].data,
            &self.nodes[v.0].data,
            batch,
            n_tok,
            d,
            heads,
            &mut out,
            &mut probs,
        );
        let ng = self.needs(&[q, k, v]);
        let var = self.push(
            r,
            d,
            out,
            ng,
            Op::Mhsa {
                q,
                k,
                v,
                batch,
                n_tok,
                heads,
                probs,
            },
        );
        self.check(var, "attention output")
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = (self.rows(x), self.cols(x));
        if c == 0 {
            return Err(MixpertError::Shape("softmax: empty input".into()));
        }
        let mut y = vec![T::zero(); r * c];
        kernels::softmax_rows_fwd(&self.nodes[x.0].data, r, c, &mut y);
        let ng = self.needs(&[x]);
        let v = self.push(r, c, y, ng, Op::SoftmaxRows { x });
        self.check(v, "softmax output")
    }

    /// Mean over consecutive groups of `group` rows: [g*group, cols] -> [g, cols].
    pub fn pool_mean(&mut self, x: Var, group: usize) -> Result<Var> {
        let (r, c) = (self.rows(x), self.cols(x));
        if group == 0 || r % group != 0 {
            return Err(MixpertError::Shape(
                "pool_mean: rows not divisible by group".into(),
            ));
        }
        let out_rows = r / group;
        let mut y = vec![T::zero(); out_rows * c];
        kernels::pool_mean_fwd(&self.nodes[x.0].data, c, group, &mut y);
        let ng = self.needs(&[x]);
        let v = self.push(out_rows, c, y, ng, Op::PoolMean { x, group });
        self.check(v, "pool output")
    }

    /// Mean negative log-likelihood over rows; scalar output.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[u32]) -> Result<Var> {
        let (r, c) = (self.rows(logits), self.cols(logits));
        if labels.len() != r {
            return Err(MixpertError::Shape(format!(
                "cross_entropy: {} labels for {} rows",
                labels.len(),
                r
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= c) {
            return Err(MixpertError::Contract(format!(
                "cross_entropy: label {bad} out of range for {c} classes"
            )));
        }
        let mut probs = vec![T::zero(); r * c];
        let loss = kernels::cross_entropy_fwd(&self.nodes[logits.0].data, r, c, labels, &mut probs);
        let ng = self.needs(&[logits]);
        let v = self.push(
            1,
            1,
            vec![loss],
            ng,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        );
        self.check(v, "cross_entropy output")
    }

    /// Gathers rows by index (used to regroup a batch by domain).
    pub fn select_rows(&mut self, x: Var, indices: &[u32]) -> Result<Var> {
        let (r, c) = (self.rows(x), self.cols(x));
        if let Some(&bad) = indices.iter().find(|&&i| i as usize >= r) {
            return Err(MixpertError::Shape(format!(
                "select_rows: index {bad} out of range for {r} rows"
            )));
        }
        let mut y = vec![T::zero(); indices.len() * c];
        for (i, &src) in indices.iter().enumerate() {
            y[i * c..(i + 1) * c]
                .copy_from_slice(&self.nodes[x.0].data[src as usize * c..(src as usize + 1) * c]);
        }
        let ng = self.needs(&[x]);
        Ok(self.push(
            indices.len(),
            c,
            y,
            ng,
            Op::SelectRows {
                x,
                indices: indices.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total: f64 = self.nodes[x.0].data.iter().map(|v| v.to_f64c()).sum();
        let ng = self.needs(&[x]);
        let v = self.push(1, 1, vec![T::from_f64c(total)], ng, Op::Sum { x });
        self.check(v, "sum output")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.rows(a) != self.rows(b) || self.cols(a) != self.cols(b) {
            return Err(MixpertError::Shape("mul: operand shapes differ".into()));
        }
        let y: Vec<T> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x1, &x2)| x1 * x2)
            .collect();
        let ng = self.needs(&[a, b]);
        let (r, c) = (self.rows(a), self.cols(a));
        let v = self.push(r, c, y, ng, Op::Mul { a, b });
        self.check(v, "mul output")
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let y: Vec<T> = self.nodes[x.0].data.iter().map(|&v| v * c).collect();
        let ng = self.needs(&[x]);
        let (r, cl) = (self.rows(x), self.cols(x));
        let v = self.push(r, cl, y, ng, Op::Scale { x, c });
        self.check(v, "scale output")
    }

    fn needs(&self, inputs: &[Var]) -> bool {
        inputs.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    // -- backward ----------------------------------------------------------

    /// Reverse pass from a scalar loss. Fills gradients for every node on a
    /// differentiable path; nodes behind frozen parameters are skipped.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let node = &self.nodes[loss.0];
        if node.rows * node.cols != 1 {
            return Err(MixpertError::Contract(format!(
                "backward requires a scalar loss, got [{}, {}]",
                node.rows, node.cols
            )));
        }
        if !node.data[0].is_finite() {
            return Err(MixpertError::NonFinite("loss".into()));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(dy) = self.grads[idx].take() else {
                continue;
            };
            self.dispatch(idx, &dy)?;
            self.grads[idx] = Some(dy);
        }
        Ok(())
    }

    fn take_grad(&mut self, v: Var) -> Vec<T> {
        let len = self.nodes[v.0].data.len();
        self.grads[v.0].take().unwrap_or_else(|| vec![T::zero(); len])
    }

    fn put_grad(&mut self, v: Var, g: Vec<T>) {
        self.grads[v.0] = Some(g);
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn dispatch(&mut self, idx: usize, dy: &[T]) -> Result<()> {
        // Saved buffers are moved out with std::mem::take and restored after.
        match &self.nodes[idx].op {
            Op::Leaf | Op::Param(_) => {}
            &Op::Linear { x, w, b } => {
                let (n, din) = (self.rows(x), self.cols(x));
                let dout = self.rows(w);
                if self.wants(x) {
                    let mut dx = self.take_grad(x);
                    kernels::linear_bwd_dx(dy, n, dout, &self.nodes[w.0].data, din, &mut dx);
                    self.put_grad(x, dx);
                }
                if self.wants(w) || self.wants(b) {
                    let mut dw = self.take_grad(w);
                    let mut db = self.take_grad(b);
                    kernels::linear_bwd_dwdb(
                        dy,
                        &self.nodes[x.0].data,
                        n,
                        din,
                        dout,
                        &mut dw,
                        &mut db,
                    );
                    self.put_grad(w, dw);
                    self.put_grad(b, db);
                }
            }
            &Op::Add { a, b } => {
                for side in [a, b] {
                    if self.wants(side) {
                        let mut g = self.take_grad(side);
                        kernels::accumulate(&mut g, dy);
                        self.put_grad(side, g);
                    }
                }
            }
            &Op::AddCycle { x, table, period } => {
                let (rows, cols) = (self.rows(x), self.cols(x));
                if self.wants(x) {
                    let mut g = self.take_grad(x);
                    kernels::accumulate(&mut g, dy);
                    self.put_grad(x, g);
                }
                if self.wants(table) {
                    let mut g = self.take_grad(table);
                    kernels::add_cycle_bwd_table(dy, rows, cols, period, &mut g);
                    self.put_grad(table, g);
                }
            }
            Op::LayerNorm { x, gamma, beta, .. } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let stats = match &mut self.nodes[idx].op {
                    Op::LayerNorm { stats, .. } => std::mem::take(stats),
                    _ => unreachable!(),
                };
                let (rows, cols) = (self.rows(x), self.cols(x));
                if self.wants(x) {
                    let mut dx = self.take_grad(x);
                    kernels::layer_norm_bwd_dx(
                        &self.nodes[x.0].data,
                        rows,
                        cols,
                        &self.nodes[gamma.0].data,
                        &stats,
                        dy,
                        &mut dx,
                    );
                    self.put_grad(x, dx);
                }
                if self.wants(gamma) || self.wants(beta) {
                    let mut dg = self.take_grad(gamma);
                    let mut db = self.take_grad(beta);
                    kernels::layer_norm_bwd_dparams(
                        &self.nodes[x.0].data,
                        rows,
                        cols,
                        &stats,
                        dy,
                        &mut dg,
                        &mut db,
                    );
                    self.put_grad(gamma, dg);
                    self.put_grad(beta, db);
                }
                if let Op::LayerNorm { stats: slot, .. } = &mut self.nodes[idx].op {
                    *slot = stats;
                }
            }
            &Op::Gelu { x } => {
                if self.wants(x) {
                    let mut dx = self.take_grad(x);
                    kernels::gelu_bwd(&self.nodes[x.0].data, dy, &mut dx);
                    self.put_grad(x, dx);
                }
            }
            Op::Mhsa {
                q,
                k,
                v,
                batch,
                n_tok,
                heads,
                ..
            } => {
                let (q, k, v, batch, n_tok, heads) = (*q, *k, *v, *batch, *n_tok, *heads);
                let probs = match &mut self.nodes[idx].op {
                    Op::Mhsa { probs, .. } => std::mem::take(probs),
                    _ => unreachable!(),
                };
                let d = self.cols(q);
                let mut dq = self.take_grad(q);
                let mut dk = self.take_grad(k);
                let mut dv = self.take_grad(v);
                kernels::mhsa_bwd(
                    &self.nodes[q.0].data,
                    &self.nodes[k.0].data,
                    &self.nodes[v.0].data,
                    &probs,
                    dy,
                    batch,
                    n_tok,
                    d,
                    heads,
                    &mut dq,
                    &mut dk,
                    &mut dv,
                );
                self.put_grad(q, dq);
                self.put_grad(k, dk);
                self.put_grad(v, dv);
                if let Op::Mhsa { probs: slot, .. } = &mut self.nodes[idx].op {
                    *slot = probs;
                }
            }
            &Op::SoftmaxRows { x } => {
                if self.wants(x) {
                    let (rows, cols) = (self.rows(x), self.cols(x));
                    let mut dx = self.take_grad(x);
                    kernels::softmax_rows_bwd(&self.nodes[idx].data, rows, cols, dy, &mut dx);
                    self.put_grad(x, dx);
                }
            }
            &Op::PoolMean { x, group } => {
                if self.wants(x) {
                    let cols = self.cols(x);
                    let mut dx = self.take_grad(x);
                    kernels::pool_mean_bwd(dy, cols, group, &mut dx);
                    self.put_grad(x, dx);
                }
            }
            Op::CrossEntropy { logits, .. } => {
                let logits = *logits;
                if self.wants(logits) {
                    let (rows, cols) = (self.rows(logits), self.cols(logits));
                    let (probs, labels) = match &self.nodes[idx].op {
                        Op::CrossEntropy { probs, labels, .. } => (probs.clone(), labels.clone()),
                        _ => unreachable!(),
                    };
                    let mut dl = self.take_grad(logits);
                    kernels::cross_entropy_bwd(&probs, rows, cols, &labels, dy[0], &mut dl);
                    self.put_grad(logits, dl);
                }
            }
            Op::SelectRows { x, .. } => {
                let x = *x;
                if self.wants(x) {
                    let indices = match &self.nodes[idx].op {
                        Op::SelectRows { indices, .. } => indices.clone(),
                        _ => unreachable!(),
                    };
                    let cols = self.cols(x);
                    let mut dx = self.take_grad(x);
                    for (i, &src) in indices.iter().enumerate() {
                        let dst = &mut dx[src as usize * cols..(src as usize + 1) * cols];
                        for (slot, &g) in dst.iter_mut().zip(&dy[i * cols..(i + 1) * cols]) {
                            *slot = *slot + g;
                        }
                    }
                    self.put_grad(x, dx);
                }
            }
            &Op::Sum { x } => {
                if self.wants(x) {
                    let mut dx = self.take_grad(x);
                    for g in dx.iter_mut() {
                        *g = *g + dy[0];
                    }
                    self.put_grad(x, dx);
                }
            }
            &Op::Mul { a, b } => {
                if self.wants(a) {
                    let mut da = self.take_grad(a);
                    let bd = &self.nodes[b.0].data;
                    for i in 0..da.len() {
                        da[i] = da[i] + dy[i] * bd[i];
                    }
                    self.put_grad(a, da);
                }
                if self.wants(b) {
                    let mut db = self.take_grad(b);
                    let ad = &self.nodes[a.0].data;
                    for i in 0..db.len() {
                        db[i] = db[i] + dy[i] * ad[i];
                    }
                    self.put_grad(b, db);
                }
            }
            &Op::Scale { x, c } => {
                if self.wants(x) {
                    let mut dx = self.take_grad(x);
                    for (g, &up) in dx.iter_mut().zip(dy) {
                        *g = *g + c * up;
                    }
                    self.put_grad(x, dx);
                }
            }
        }
        Ok(())
    }

    /// Accumulates gradients of every parameter node into the store.
    /// Frozen parameters were constants on the tape, so they get nothing.
    pub fn export_grads(&self, ps: &mut Params<T>) {
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if let Some(Some(g)) = self.grads.get(idx) {
                    let p = ps.get_mut(id);
                    if !p.frozen {
                        for (dst, &src) in p.grad.iter_mut().zip(g) {
                            *dst = *dst + src;
                        }
                    }
                }
            }
        }
    }
}

impl Tape<f32> {
    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        let shape = if n.rows == 1 {
            vec![n.cols]
        } else {
            vec![n.rows, n.cols]
        };
        Tensor::new(shape, n.data.clone()).expect("tape node is consistent")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{LrGroup, ParamKind};

    #[test]
    fn backward_of_sum_gives_ones() {
        let mut ps = Params::<f32>::new();
        let x = ps.add("x", 2, 3, vec![0.5, -1.0, 2.0, 3.0, -0.25, 0.0], ParamKind::Weight, LrGroup::Encoder);
        let mut tape = Tape::<f32>::new();
        let xv = tape.param(&ps, x);
        let loss = tape.sum(xv).unwrap();
        tape.backward(loss).unwrap();
        tape.export_grads(&mut ps);
        assert_eq!(ps.get(x).grad, vec![1.0; 6]);
    }

    #[test]
    fn backward_of_half_squared_norm_gives_x() {
        let data = vec![0.5f32, -1.0, 2.0, 3.0];
        let mut ps = Params::<f32>::new();
        let x = ps.add("x", 1, 4, data.clone(), ParamKind::Weight, LrGroup::Encoder);
        let mut tape = Tape::<f32>::new();
        let xv = tape.param(&ps, x);
        let sq = tape.mul(xv, xv).unwrap();
        let s = tape.sum(sq).unwrap();
        let loss = tape.scale(s, 0.5).unwrap();
        tape.backward(loss).unwrap();
        tape.export_grads(&mut ps);
        assert_eq!(ps.get(x).grad, data);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut ps = Params::<f32>::new();
        let x = ps.add("x", 1, 4, vec![1.0; 4], ParamKind::Weight, LrGroup::Encoder);
        let mut tape = Tape::<f32>::new();
        let xv = tape.param(&ps, x);
        assert!(tape.backward(xv).is_err());
    }

    #[test]
    fn frozen_params_receive_no_grad() {
        let mut ps = Params::<f32>::new();
        let a = ps.add("a", 1, 2, vec![1.0, 2.0], ParamKind::Weight, LrGroup::Encoder);
        let b = ps.add("b", 1, 2, vec![3.0, 4.0], ParamKind::Weight, LrGroup::Encoder);
        ps.set_frozen(a, true);
        let mut tape = Tape::<f32>::new();
        let av = tape.param(&ps, a);
        let bv = tape.param(&ps, b);
        let sum = tape.add(av, bv).unwrap();
        let loss = tape.sum(sum).unwrap();
        tape.backward(loss).unwrap();
        tape.export_grads(&mut ps);
        assert_eq!(ps.get(a).grad, vec![0.0, 0.0]);
        assert_eq!(ps.get(b).grad, vec![1.0, 1.0]);
    }

    #[test]
    fn softmax_uniform_singleton_and_reference() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(vec![0.0; 5], 1, 5);
        let y = tape.softmax_rows(x).unwrap();
        for &p in tape.value(y) {
            assert!((p - 0.2).abs() < 1e-6);
        }

        let x1 = tape.leaf(vec![123.456], 1, 1);
        let y1 = tape.softmax_rows(x1).unwrap();
        assert_eq!(tape.value(y1), &[1.0]);

        // high-precision exp-normalize reference for [1, 2, 3]
        let x3 = tape.leaf(vec![1.0, 2.0, 3.0], 1, 3);
        let y3 = tape.softmax_rows(x3).unwrap();
        let denom: f64 = (1..=3).map(|i| (i as f64).exp()).sum();
        for (i, &p) in tape.value(y3).iter().enumerate() {
            let want = ((i + 1) as f64).exp() / denom;
            assert!(((p as f64) - want).abs() < 1e-6, "{p} vs {want}");
        }
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let logits = vec![0.3f32, -1.7, 2.2, 0.0, 0.9];
        let mut tape = Tape::<f32>::new();
        let a = tape.leaf(logits.clone(), 1, 5);
        let sa = tape.softmax_rows(a).unwrap();
        let shifted: Vec<f32> = logits.iter().map(|v| v + 7.5).collect();
        let b = tape.leaf(shifted, 1, 5);
        let sb = tape.softmax_rows(b).unwrap();
        for (p, q) in tape.value(sa).iter().zip(tape.value(sb)) {
            assert!((p - q).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_rejects_empty() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(vec![], 1, 0);
        assert!(tape.softmax_rows(x).is_err());
    }

    #[test]
    fn strict_tape_flags_non_finite() {
        let mut tape = Tape::<f32>::strict();
        let x = tape.leaf(vec![1.0, f32::INFINITY], 1, 2);
        let y = tape.leaf(vec![1.0, 1.0], 1, 2);
        assert!(matches!(
            tape.add(x, y),
            Err(crate::MixpertError::NonFinite(_))
        ));
    }

    #[test]
    fn pool_mean_constant_and_antisymmetric() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(vec![3.5; 8], 4, 2);
        let y = tape.pool_mean(x, 4).unwrap();
        assert_eq!(tape.value(y), &[3.5, 3.5]);

        let x2 = tape.leaf(vec![1.0, -2.0, -1.0, 2.0], 2, 2);
        let y2 = tape.pool_mean(x2, 2).unwrap();
        assert_eq!(tape.value(y2), &[0.0, 0.0]);
    }
}
