//! Raw compute kernels. All parallel loops split over independent output
//! units (rows, output neurons, batch items) and keep every reduction
//! sequential inside one unit, so results are bit-identical regardless of
//! thread count. Reductions that feed statistics (means, variances,
//! softmax denominators, losses) accumulate in f64.

use rayon::prelude::*;

use super::real::Real;

/// Dot product; the f32 instantiation dispatches to hand-vectorized code.
#[inline(always)]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    T::vdot(a, b)
}

/// acc += a * x, elementwise.
#[inline(always)]
pub(crate) fn axpy<T: Real>(acc: &mut [T], a: T, x: &[T]) {
    debug_assert_eq!(acc.len(), x.len());
    T::vaxpy(acc, a, x)
}

// ---------------------------------------------------------------------------
// Linear: y = x * W^T + b, x [n, din], w [dout, din], b [dout]
// ---------------------------------------------------------------------------

pub fn linear_fwd<T: Real>(x: &[T], n: usize, din: usize, w: &[T], dout: usize, b: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), n * din);
    debug_assert_eq!(w.len(), dout * din);
    debug_assert_eq!(y.len(), n * dout);
    if T::vlinear_fwd(x, n, din, w, dout, b, y) {
        return;
    }
    y.par_chunks_mut(dout)
        .with_min_len(16)
        .enumerate()
        .for_each(|(r, yr)| {
            let xr = &x[r * din..(r + 1) * din];
            for (j, out) in yr.iter_mut().enumerate() {
                *out = dot(xr, &w[j * din..(j + 1) * din]) + b[j];
            }
        });
}

/// dx += dy * W
pub fn linear_bwd_dx<T: Real>(dy: &[T], n: usize, dout: usize, w: &[T], din: usize, dx: &mut [T]) {
    if T::vlinear_dx(dy, n, dout, w, din, dx) {
        return;
    }
    dx.par_chunks_mut(din)
        .with_min_len(16)
        .enumerate()
        .for_each(|(r, dxr)| {
            let dyr = &dy[r * dout..(r + 1) * dout];
            for (j, &g) in dyr.iter().enumerate() {
                if g != T::zero() {
                    axpy(dxr, g, &w[j * din..(j + 1) * din]);
                }
            }
        });
}

/// dw[j,:] += sum_r dy[r,j] * x[r,:], db[j] += sum_r dy[r,j].
/// Parallel over blocks of output neurons; each block walks the rows once.
pub fn linear_bwd_dwdb<T: Real>(
    dy: &[T],
    x: &[T],
    n: usize,
    din: usize,
    dout: usize,
    dw: &mut [T],
    db: &mut [T],
) {
    if T::vlinear_dwdb(dy, x, n, din, dout, dw, db) {
        return;
    }
    const JB: usize = 8;
    let blocks: Vec<(usize, &mut [T], &mut [T])> = {
        let mut out = Vec::new();
        let mut dw_rest = dw;
        let mut db_rest = db;
        let mut j0 = 0;
        while j0 < dout {
            let jb = JB.min(dout - j0);
            let (dw_blk, dw_tail) = dw_rest.split_at_mut(jb * din);
            let (db_blk, db_tail) = db_rest.split_at_mut(jb);
            out.push((j0, dw_blk, db_blk));
            dw_rest = dw_tail;
            db_rest = db_tail;
            j0 += jb;
        }
        out
    };
    blocks.into_par_iter().for_each(|(j0, dw_blk, db_blk)| {
        let jb = db_blk.len();
        for r in 0..n {
            let xr = &x[r * din..(r + 1) * din];
            let dyr = &dy[r * dout + j0..r * dout + j0 + jb];
            for (jj, &g) in dyr.iter().enumerate() {
                if g != T::zero() {
                    axpy(&mut dw_blk[jj * din..(jj + 1) * din], g, xr);
                    db_blk[jj] = db_blk[jj] + g;
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Multi-head self-attention over a batch of token blocks.
// q/k/v/out: [batch * n_tok, d]; head h uses columns [h*dh, (h+1)*dh).
// probs: [batch * heads, n_tok, n_tok] row-softmaxed attention weights.
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn mhsa_fwd<T: Real>(
    q: &[T],
    k: &[T],
    v: &[T],
    _batch: usize,
    n_tok: usize,
    d: usize,
    heads: usize,
    out: &mut [T],
    probs: &mut [T],
) {
    let dh = d / heads;
    let scale = T::from_f64c(1.0 / (dh as f64).sqrt());
    out.par_chunks_mut(n_tok * d)
        .zip(probs.par_chunks_mut(heads * n_tok * n_tok))
        .enumerate()
        .for_each(|(b, (out_b, probs_b))| {
            let base = b * n_tok * d;
            // Head slices are repacked so every inner product runs over a
            // contiguous n_tok-length row.
            let mut q_h = vec![T::zero(); n_tok * dh];
            let mut kt_h = vec![T::zero(); dh * n_tok];
            let mut vt_h = vec![T::zero(); dh * n_tok];
            for h in 0..heads {
                let c0 = h * dh;
                for i in 0..n_tok {
                    for c in 0..dh {
                        q_h[i * dh + c] = q[base + i * d + c0 + c];
                        kt_h[c * n_tok + i] = k[base + i * d + c0 + c];
                        vt_h[c * n_tok + i] = v[base + i * d + c0 + c];
                    }
                }
                let p_h = &mut probs_b[h * n_tok * n_tok..(h + 1) * n_tok * n_tok];
                for i in 0..n_tok {
                    let row = &mut p_h[i * n_tok..(i + 1) * n_tok];
                    row.iter_mut().for_each(|s| *s = T::zero());
                    // S[i,:] = scale * sum_c q[i,c] * K^T[c,:]
                    for c in 0..dh {
                        axpy(row, q_h[i * dh + c] * scale, &kt_h[c * n_tok..(c + 1) * n_tok]);
                    }
                    let mut max = T::neg_infinity();
                    for &slot in row.iter() {
                        if slot > max {
                            max = slot;
                        }
                    }
                    let denom = T::vexp_shift_inplace(row, max);
                    let inv = T::from_f64c(1.0 / denom);
                    for slot in row.iter_mut() {
                        *slot = *slot * inv;
                    }
                    // out[i, head col c] = <P[i,:], V^T[c,:]>
                    let orow = &mut out_b[i * d + c0..i * d + c0 + dh];
                    for (c, o) in orow.iter_mut().enumerate() {
                        *o = dot(row, &vt_h[c * n_tok..(c + 1) * n_tok]);
                    }
                }
            }
        });
}

#[allow(clippy::too_many_arguments)]
pub fn mhsa_bwd<T: Real>(
    q: &[T],
    k: &[T],
    v: &[T],
    probs: &[T],
    dout: &[T],
    _batch: usize,
    n_tok: usize,
    d: usize,
    heads: usize,
    dq: &mut [T],
    dk: &mut [T],
    dv: &mut [T],
) {
    let dh = d / heads;
    let scale = T::from_f64c(1.0 / (dh as f64).sqrt());
    let nn = n_tok * n_tok;
    dq.par_chunks_mut(n_tok * d)
        .zip(dk.par_chunks_mut(n_tok * d))
        .zip(dv.par_chunks_mut(n_tok * d))
        .enumerate()
        .for_each(|(b, ((dq_b, dk_b), dv_b))| {
            let base = b * n_tok * d;
            let mut q_h = vec![T::zero(); n_tok * dh];
            let mut kt_h = vec![T::zero(); dh * n_tok];
            let mut vt_h = vec![T::zero(); dh * n_tok];
            let mut do_h = vec![T::zero(); n_tok * dh];
            let mut dvt_h = vec![T::zero(); dh * n_tok];
            let mut dkt_h = vec![T::zero(); dh * n_tok];
            let mut dp = vec![T::zero(); nn];
            for h in 0..heads {
                let c0 = h * dh;
                for i in 0..n_tok {
                    for c in 0..dh {
                        q_h[i * dh + c] = q[base + i * d + c0 + c];
                        kt_h[c * n_tok + i] = k[base + i * d + c0 + c];
                        vt_h[c * n_tok + i] = v[base + i * d + c0 + c];
                        do_h[i * dh + c] = dout[base + i * d + c0 + c];
                    }
                }
                dvt_h.iter_mut().for_each(|x| *x = T::zero());
                dkt_h.iter_mut().for_each(|x| *x = T::zero());
                let p_h = &probs[(b * heads + h) * nn..(b * heads + h + 1) * nn];
                // dV^T[c,:] += dO[i,c] * P[i,:];  dP[i,:] = sum_c dO[i,c] * V^T[c,:]
                for i in 0..n_tok {
                    let doi = &do_h[i * dh..(i + 1) * dh];
                    let prow = &p_h[i * n_tok..(i + 1) * n_tok];
                    let dprow = &mut dp[i * n_tok..(i + 1) * n_tok];
                    dprow.iter_mut().for_each(|x| *x = T::zero());
                    for c in 0..dh {
                        axpy(&mut dvt_h[c * n_tok..(c + 1) * n_tok], doi[c], prow);
                        axpy(dprow, doi[c], &vt_h[c * n_tok..(c + 1) * n_tok]);
                    }
                }
                // dS = P o (dP - rowsum(dP o P)), then scale; reuse dp for dS
                for i in 0..n_tok {
                    let prow = &p_h[i * n_tok..(i + 1) * n_tok];
                    let dprow = &mut dp[i * n_tok..(i + 1) * n_tok];
                    let mut srow = 0.0f64;
                    for j in 0..n_tok {
                        srow += (dprow[j] * prow[j]).to_f64c();
                    }
                    let srow = T::from_f64c(srow);
                    for j in 0..n_tok {
                        dprow[j] = prow[j] * (dprow[j] - srow) * scale;
                    }
                }
                // dQ[i,c] = <dS[i,:], K^T[c,:]>;  dK^T[c,:] += q[i,c] * dS[i,:]
                for i in 0..n_tok {
                    let dsrow = &dp[i * n_tok..(i + 1) * n_tok];
                    for c in 0..dh {
                        dq_b[i * d + c0 + c] =
                            dq_b[i * d + c0 + c] + dot(dsrow, &kt_h[c * n_tok..(c + 1) * n_tok]);
                        axpy(&mut dkt_h[c * n_tok..(c + 1) * n_tok], q_h[i * dh + c], dsrow);
                    }
                }
                for i in 0..n_tok {
                    for c in 0..dh {
                        dk_b[i * d + c0 + c] = dk_b[i * d + c0 + c] + dkt_h[c * n_tok + i];
                        dv_b[i * d + c0 + c] = dv_b[i * d + c0 + c] + dvt_h[c * n_tok + i];
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Layer norm over each row. stats holds (mean, rstd) per row.
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn layer_norm_fwd<T: Real>(
    x: &[T],
    _rows: usize,
    cols: usize,
    gamma: &[T],
    beta: &[T],
    eps: T,
    y: &mut [T],
    stats: &mut [T],
) {
    y.par_chunks_mut(cols)
        .zip(stats.par_chunks_mut(2))
        .with_min_len(16)
        .enumerate()
        .for_each(|(r, (yr, st))| {
            let xr = &x[r * cols..(r + 1) * cols];
            let mean = T::from_f64c(xr.iter().map(|v| v.to_f64c()).sum::<f64>() / cols as f64);
            let var = T::from_f64c(
                xr.iter()
                    .map(|&v| {
                        let dlt = (v - mean).to_f64c();
                        dlt * dlt
                    })
                    .sum::<f64>()
                    / cols as f64,
            );
            let rstd = (var + eps).sqrt().recip();
            st[0] = mean;
            st[1] = rstd;
            for c in 0..cols {
                yr[c] = (xr[c] - mean) * rstd * gamma[c] + beta[c];
            }
        });
}

pub fn layer_norm_bwd_dx<T: Real>(
    x: &[T],
    _rows: usize,
    cols: usize,
    gamma: &[T],
    stats: &[T],
    dy: &[T],
    dx: &mut [T],
) {
    dx.par_chunks_mut(cols)
        .with_min_len(16)
        .enumerate()
        .for_each(|(r, dxr)| {
            let xr = &x[r * cols..(r + 1) * cols];
            let dyr = &dy[r * cols..(r + 1) * cols];
            let (mean, rstd) = (stats[2 * r], stats[2 * r + 1]);
            let mut sum_dxhat = 0.0f64;
            let mut sum_dxhat_xhat = 0.0f64;
            for c in 0..cols {
                let dxhat = dyr[c] * gamma[c];
                let xhat = (xr[c] - mean) * rstd;
                sum_dxhat += dxhat.to_f64c();
                sum_dxhat_xhat += (dxhat * xhat).to_f64c();
            }
            let m1 = T::from_f64c(sum_dxhat / cols as f64);
            let m2 = T::from_f64c(sum_dxhat_xhat / cols as f64);
            for c in 0..cols {
                let dxhat = dyr[c] * gamma[c];
                let xhat = (xr[c] - mean) * rstd;
                dxr[c] = dxr[c] + rstd * (dxhat - m1 - xhat * m2);
            }
        });
}

pub fn layer_norm_bwd_dparams<T: Real>(
    x: &[T],
    rows: usize,
    cols: usize,
    stats: &[T],
    dy: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) {
    for r in 0..rows {
        let (mean, rstd) = (stats[2 * r], stats[2 * r + 1]);
        let xr = &x[r * cols..(r + 1) * cols];
        let dyr = &dy[r * cols..(r + 1) * cols];
        for c in 0..cols {
            let xhat = (xr[c] - mean) * rstd;
            dgamma[c] = dgamma[c] + dyr[c] * xhat;
            dbeta[c] = dbeta[c] + dyr[c];
        }
    }
}

// ---------------------------------------------------------------------------
// GELU (tanh approximation)
// ---------------------------------------------------------------------------

pub use super::real::gelu_value as gelu_scalar;

pub fn gelu_fwd<T: Real>(x: &[T], y: &mut [T]) {
    y.par_chunks_mut(4096)
        .zip(x.par_chunks(4096))
        .for_each(|(yc, xc)| T::vgelu(xc, yc));
}

pub fn gelu_bwd<T: Real>(x: &[T], dy: &[T], dx: &mut [T]) {
    dx.par_chunks_mut(4096)
        .zip(x.par_chunks(4096))
        .zip(dy.par_chunks(4096))
        .for_each(|((dxc, xc), dyc)| T::vgelu_grad(xc, dyc, dxc));
}

// ---------------------------------------------------------------------------
// Row softmax
// ---------------------------------------------------------------------------

pub fn softmax_rows_fwd<T: Real>(x: &[T], _rows: usize, cols: usize, y: &mut [T]) {
    y.par_chunks_mut(cols)
        .with_min_len(16)
        .enumerate()
        .for_each(|(r, yr)| {
            softmax_slice(&x[r * cols..(r + 1) * cols], yr);
        });
}

/// Softmax of one logit row into `out` (shift-invariant, f64 denominator).
pub fn softmax_slice<T: Real>(logits: &[T], out: &mut [T]) {
    let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let denom = T::vexp_shift(logits, max, out);
    let inv = T::from_f64c(1.0 / denom);
    for o in out.iter_mut() {
        *o = *o * inv;
    }
}

pub fn softmax_rows_bwd<T: Real>(y: &[T], _rows: usize, cols: usize, dy: &[T], dx: &mut [T]) {
    dx.par_chunks_mut(cols)
        .with_min_len(16)
        .enumerate()
        .for_each(|(r, dxr)| {
            let yr = &y[r * cols..(r + 1) * cols];
            let dyr = &dy[r * cols..(r + 1) * cols];
            let mut s = 0.0f64;
            for c in 0..cols {
                s += (dyr[c] * yr[c]).to_f64c();
            }
            let s = T::from_f64c(s);
            for c in 0..cols {
                dxr[c] = dxr[c] + yr[c] * (dyr[c] - s);
            }
        });
}

// ---------------------------------------------------------------------------
// Mean pooling over fixed-size groups of rows
// ---------------------------------------------------------------------------

pub fn pool_mean_fwd<T: Real>(x: &[T], cols: usize, group: usize, y: &mut [T]) {
    let inv = T::from_f64c(1.0 / group as f64);
    y.par_chunks_mut(cols).enumerate().for_each(|(g, yg)| {
        let mut acc = vec![0.0f64; cols];
        for r in g * group..(g + 1) * group {
            for c in 0..cols {
                acc[c] += x[r * cols + c].to_f64c();
            }
        }
        for c in 0..cols {
            yg[c] = T::from_f64c(acc[c]) * inv;
        }
    });
}

pub fn pool_mean_bwd<T: Real>(dy: &[T], cols: usize, group: usize, dx: &mut [T]) {
    let inv = T::from_f64c(1.0 / group as f64);
    dx.par_chunks_mut(cols)
        .with_min_len(16)
        .enumerate()
        .for_each(|(r, dxr)| {
            let g = r / group;
            for c in 0..cols {
                dxr[c] = dxr[c] + dy[g * cols + c] * inv;
            }
        });
}

// ---------------------------------------------------------------------------
// Cross-entropy (mean NLL over rows). Returns loss, fills softmax probs.
// ---------------------------------------------------------------------------

pub fn cross_entropy_fwd<T: Real>(
    logits: &[T],
    rows: usize,
    cols: usize,
    labels: &[u32],
    probs: &mut [T],
) -> T {
    probs
        .par_chunks_mut(cols)
        .with_min_len(16)
        .enumerate()
        .for_each(|(r, pr)| {
            softmax_slice(&logits[r * cols..(r + 1) * cols], pr);
        });
    let mut total = 0.0f64;
    for r in 0..rows {
        let label = labels[r] as usize;
        let row = &logits[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let denom: f64 = row.iter().map(|&l| (l - max).fexp().to_f64c()).sum();
        total += denom.ln() + max.to_f64c() - row[label].to_f64c();
    }
    T::from_f64c(total / rows as f64)
}

pub fn cross_entropy_bwd<T: Real>(
    probs: &[T],
    rows: usize,
    cols: usize,
    labels: &[u32],
    upstream: T,
    dlogits: &mut [T],
) {
    let g = upstream / T::from_f64c(rows as f64);
    dlogits
        .par_chunks_mut(cols)
        .with_min_len(16)
        .enumerate()
        .for_each(|(r, dr)| {
            let pr = &probs[r * cols..(r + 1) * cols];
            let label = labels[r] as usize;
            for c in 0..cols {
                let ind = if c == label { T::one() } else { T::zero() };
                dr[c] = dr[c] + (pr[c] - ind) * g;
            }
        });
}

// ---------------------------------------------------------------------------
// Small elementwise helpers
// ---------------------------------------------------------------------------

pub fn add_fwd<T: Real>(a: &[T], b: &[T], y: &mut [T]) {
    y.par_chunks_mut(4096)
        .zip(a.par_chunks(4096))
        .zip(b.par_chunks(4096))
        .for_each(|((yc, ac), bc)| {
            for ((o, &x1), &x2) in yc.iter_mut().zip(ac).zip(bc) {
                *o = x1 + x2;
            }
        });
}

pub fn accumulate<T: Real>(dst: &mut [T], src: &[T]) {
    dst.par_chunks_mut(4096)
        .zip(src.par_chunks(4096))
        .for_each(|(dc, sc)| {
            for (o, &s) in dc.iter_mut().zip(sc) {
                *o = *o + s;
            }
        });
}

/// y[r,:] = x[r,:] + table[r % period,:]
pub fn add_cycle_fwd<T: Real>(x: &[T], cols: usize, table: &[T], period: usize, y: &mut [T]) {
    y.par_chunks_mut(cols)
        .with_min_len(16)
        .enumerate()
        .for_each(|(r, yr)| {
            let t = r % period;
            let xr = &x[r * cols..(r + 1) * cols];
            let tr = &table[t * cols..(t + 1) * cols];
            for c in 0..cols {
                yr[c] = xr[c] + tr[c];
            }
        });
}

/// dtable[t,:] += sum over rows congruent to t.
pub fn add_cycle_bwd_table<T: Real>(dy: &[T], rows: usize, cols: usize, period: usize, dtable: &mut [T]) {
    dtable.par_chunks_mut(cols).enumerate().for_each(|(t, dt)| {
        let mut r = t;
        while r < rows {
            let dyr = &dy[r * cols..(r + 1) * cols];
            for c in 0..cols {
                dt[c] = dt[c] + dyr[c];
            }
            r += period;
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f32, b: f64, tol: f64) -> bool {
        ((a as f64) - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn f32_linear_paths_match_f64_reference() {
        // dout multiple of 16 exercises the SIMD fast path on capable hosts;
        // the f64 run always takes the generic path.
        let (n, din, dout) = (32usize, 48usize, 32usize);
        let xs: Vec<f64> = (0..n * din).map(|i| ((i * 37 % 101) as f64 - 50.0) * 0.013).collect();
        let ws: Vec<f64> = (0..dout * din).map(|i| ((i * 53 % 89) as f64 - 44.0) * 0.011).collect();
        let bs: Vec<f64> = (0..dout).map(|i| (i as f64 - 16.0) * 0.02).collect();
        let xf: Vec<f32> = xs.iter().map(|&v| v as f32).collect();
        let wf: Vec<f32> = ws.iter().map(|&v| v as f32).collect();
        let bf: Vec<f32> = bs.iter().map(|&v| v as f32).collect();

        let mut y32 = vec![0.0f32; n * dout];
        let mut y64 = vec![0.0f64; n * dout];
        linear_fwd(&xf, n, din, &wf, dout, &bf, &mut y32);
        linear_fwd(&xs, n, din, &ws, dout, &bs, &mut y64);
        for i in 0..n * dout {
            assert!(close(y32[i], y64[i], 1e-5), "fwd {i}: {} vs {}", y32[i], y64[i]);
        }

        let dys: Vec<f64> = (0..n * dout).map(|i| ((i * 29 % 97) as f64 - 48.0) * 0.017).collect();
        let dyf: Vec<f32> = dys.iter().map(|&v| v as f32).collect();
        let mut dx32 = vec![0.0f32; n * din];
        let mut dx64 = vec![0.0f64; n * din];
        linear_bwd_dx(&dyf, n, dout, &wf, din, &mut dx32);
        linear_bwd_dx(&dys, n, dout, &ws, din, &mut dx64);
        for i in 0..n * din {
            assert!(close(dx32[i], dx64[i], 1e-5), "dx {i}");
        }

        let mut dw32 = vec![0.0f32; dout * din];
        let mut db32 = vec![0.0f32; dout];
        let mut dw64 = vec![0.0f64; dout * din];
        let mut db64 = vec![0.0f64; dout];
        linear_bwd_dwdb(&dyf, &xf, n, din, dout, &mut dw32, &mut db32);
        linear_bwd_dwdb(&dys, &xs, n, din, dout, &mut dw64, &mut db64);
        for i in 0..dout * din {
            assert!(close(dw32[i], dw64[i], 1e-4), "dw {i}: {} vs {}", dw32[i], dw64[i]);
        }
        for i in 0..dout {
            assert!(close(db32[i], db64[i], 1e-4), "db {i}");
        }
    }

    #[test]
    fn mhsa_f32_matches_f64_reference() {
        let (batch, n_tok, d, heads) = (2usize, 8usize, 32usize, 2usize);
        let rows = batch * n_tok;
        let qs: Vec<f64> = (0..rows * d).map(|i| ((i * 31 % 71) as f64 - 35.0) * 0.02).collect();
        let ks: Vec<f64> = (0..rows * d).map(|i| ((i * 43 % 83) as f64 - 41.0) * 0.02).collect();
        let vs: Vec<f64> = (0..rows * d).map(|i| ((i * 59 % 67) as f64 - 33.0) * 0.02).collect();
        let qf: Vec<f32> = qs.iter().map(|&v| v as f32).collect();
        let kf: Vec<f32> = ks.iter().map(|&v| v as f32).collect();
        let vf: Vec<f32> = vs.iter().map(|&v| v as f32).collect();

        let mut o32 = vec![0.0f32; rows * d];
        let mut p32 = vec![0.0f32; batch * heads * n_tok * n_tok];
        let mut o64 = vec![0.0f64; rows * d];
        let mut p64 = vec![0.0f64; batch * heads * n_tok * n_tok];
        mhsa_fwd(&qf, &kf, &vf, batch, n_tok, d, heads, &mut o32, &mut p32);
        mhsa_fwd(&qs, &ks, &vs, batch, n_tok, d, heads, &mut o64, &mut p64);
        for i in 0..rows * d {
            assert!(close(o32[i], o64[i], 1e-5), "attn out {i}: {} vs {}", o32[i], o64[i]);
        }
    }
}
