use num_traits::Float;

/// Scalar type the kernels and tape are generic over. Models run f32;
/// the finite-difference test oracles instantiate the same code at f64.
///
/// `fexp`/`ftanh` are the transcendentals the kernels call. The f32
/// instantiation uses branch-free polynomial approximations (~1 ulp for
/// exp, ~1e-7 for tanh) that the compiler can vectorize; the f64
/// instantiation keeps libm so the gradient-check oracle is exact.
pub trait Real: Float + Send + Sync + std::fmt::Debug + Default + 'static {
    fn from_f32c(x: f32) -> Self;
    fn from_f64c(x: f64) -> Self;
    fn to_f64c(self) -> f64;
    fn to_f32c(self) -> f32;
    fn fexp(self) -> Self;
    fn ftanh(self) -> Self;

    /// Dot product of equal-length slices, fixed summation order.
    fn vdot(a: &[Self], b: &[Self]) -> Self {
        let mut acc = [Self::zero(); 8];
        let mut ca = a.chunks_exact(8);
        let mut cb = b.chunks_exact(8);
        for (xa, xb) in (&mut ca).zip(&mut cb) {
            for k in 0..8 {
                acc[k] = xa[k].mul_add(xb[k], acc[k]);
            }
        }
        let mut s =
            ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
        for (xa, xb) in ca.remainder().iter().zip(cb.remainder()) {
            s = xa.mul_add(*xb, s);
        }
        s
    }

    /// acc += a * x elementwise.
    fn vaxpy(acc: &mut [Self], a: Self, x: &[Self]) {
        for (dst, src) in acc.iter_mut().zip(x) {
            *dst = src.mul_add(a, *dst);
        }
    }

    /// y = gelu(x) elementwise.
    fn vgelu(x: &[Self], y: &mut [Self]) {
        for (o, &i) in y.iter_mut().zip(x) {
            *o = gelu_value(i);
        }
    }

    /// dx += dy * gelu'(x) elementwise.
    fn vgelu_grad(x: &[Self], dy: &[Self], dx: &mut [Self]) {
        for ((o, &i), &g) in dx.iter_mut().zip(x).zip(dy) {
            *o = *o + g * gelu_grad_value(i);
        }
    }

    /// out[i] = exp(row[i] - max); returns the f64 sum of the outputs.
    fn vexp_shift(row: &[Self], max: Self, out: &mut [Self]) -> f64 {
        let mut denom = 0.0f64;
        for (o, &l) in out.iter_mut().zip(row) {
            let e = (l - max).fexp();
            *o = e;
            denom += e.to_f64c();
        }
        denom
    }

    /// row[i] = exp(row[i] - max) in place; returns the f64 sum.
    fn vexp_shift_inplace(row: &mut [Self], max: Self) -> f64 {
        let mut denom = 0.0f64;
        for slot in row.iter_mut() {
            let e = (*slot - max).fexp();
            *slot = e;
            denom += e.to_f64c();
        }
        denom
    }

    /// Specialized y = x*W^T + b. Returns false when this type/shape has no
    /// fast path, in which case the caller falls back to the dot-form loop.
    fn vlinear_fwd(
        _x: &[Self],
        _n: usize,
        _din: usize,
        _w: &[Self],
        _dout: usize,
        _b: &[Self],
        _y: &mut [Self],
    ) -> bool {
        false
    }

    /// Specialized dx += dy*W. Returns false when unavailable.
    fn vlinear_dx(
        _dy: &[Self],
        _n: usize,
        _dout: usize,
        _w: &[Self],
        _din: usize,
        _dx: &mut [Self],
    ) -> bool {
        false
    }

    /// Specialized dw += dy^T x, db += colsum(dy). Returns false when unavailable.
    fn vlinear_dwdb(
        _dy: &[Self],
        _x: &[Self],
        _n: usize,
        _din: usize,
        _dout: usize,
        _dw: &mut [Self],
        _db: &mut [Self],
    ) -> bool {
        false
    }
}

pub(crate) const GELU_A: f64 = 0.7978845608028654; // sqrt(2/pi)
pub(crate) const GELU_B: f64 = 0.044715;

#[inline]
pub fn gelu_value<T: Real>(x: T) -> T {
    let a = T::from_f64c(GELU_A);
    let b = T::from_f64c(GELU_B);
    let half = T::from_f64c(0.5);
    let u = a * (x + b * x * x * x);
    half * x * (T::one() + u.ftanh())
}

#[inline]
pub fn gelu_grad_value<T: Real>(x: T) -> T {
    let a = T::from_f64c(GELU_A);
    let b = T::from_f64c(GELU_B);
    let half = T::from_f64c(0.5);
    let three = T::from_f64c(3.0);
    let u = a * (x + b * x * x * x);
    let t = u.ftanh();
    let du = a * (T::one() + three * b * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

/// Cephes-style single-precision exp.
#[inline]
pub fn fast_exp_f32(x: f32) -> f32 {
    const LOG2EF: f32 = std::f32::consts::LOG2_E;
    const C1: f32 = 0.693_359_4; // ln2 split, high part
    const C2: f32 = -2.121_944_4e-4; // ln2 split, low part
    const P: [f32; 6] = [
        1.987_569_1e-4,
        1.398_199_9e-3,
        8.333_452e-3,
        4.166_579_6e-2,
        1.666_666_6e-1,
        5.000_000_1e-1,
    ];
    let x = x.clamp(-87.336_54, 88.376_26);
    let n = (x * LOG2EF + 0.5).floor();
    let x = x - n * C1 - n * C2;
    let z = x * x;
    let mut y = P[0];
    for &p in &P[1..] {
        y = y * x + p;
    }
    y = y * z + x + 1.0;
    let bits = (((n as i32) + 127) << 23) as u32;
    y * f32::from_bits(bits)
}

/// Rational tanh approximation (Eigen's coefficients), |err| < 1e-6.
#[inline]
pub fn fast_tanh_f32(x: f32) -> f32 {
    const A: [f32; 7] = [
        4.893_525e-3,
        6.372_619_5e-4,
        1.485_722_4e-5,
        5.122_297e-8,
        -8.604_671_6e-11,
        2.000_188e-13,
        -2.760_768_4e-16,
    ];
    const B: [f32; 4] = [4.893_525_4e-3, 2.268_434_7e-3, 1.185_347e-4, 1.198_258_4e-6];
    let x = x.clamp(-7.905_311, 7.905_311);
    let x2 = x * x;
    let mut p = A[6];
    for &a in A[..6].iter().rev() {
        p = p * x2 + a;
    }
    let p = p * x;
    let mut q = B[3];
    for &b in B[..3].iter().rev() {
        q = q * x2 + b;
    }
    p / q
}

impl Real for f32 {
    #[inline]
    fn from_f32c(x: f32) -> Self {
        x
    }
    #[inline]
    fn from_f64c(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64c(self) -> f64 {
        self as f64
    }
    #[inline]
    fn to_f32c(self) -> f32 {
        self
    }
    #[inline]
    fn fexp(self) -> Self {
        fast_exp_f32(self)
    }
    #[inline]
    fn ftanh(self) -> Self {
        fast_tanh_f32(self)
    }
    #[inline(always)]
    fn vdot(a: &[f32], b: &[f32]) -> f32 {
        simd::dot_f32(a, b)
    }
    #[inline(always)]
    fn vaxpy(acc: &mut [f32], a: f32, x: &[f32]) {
        simd::axpy_f32(acc, a, x)
    }
    // Concrete-typed loops so the autovectorizer engages; the generic
    // defaults compile to scalar code.
    fn vgelu(x: &[f32], y: &mut [f32]) {
        const A: f32 = GELU_A as f32;
        const B: f32 = GELU_B as f32;
        for (o, &i) in y.iter_mut().zip(x) {
            let u = A * (i + B * i * i * i);
            *o = 0.5 * i * (1.0 + fast_tanh_f32(u));
        }
    }
    fn vgelu_grad(x: &[f32], dy: &[f32], dx: &mut [f32]) {
        const A: f32 = GELU_A as f32;
        const B: f32 = GELU_B as f32;
        for ((o, &i), &g) in dx.iter_mut().zip(x).zip(dy) {
            let u = A * (i + B * i * i * i);
            let t = fast_tanh_f32(u);
            let du = A * (1.0 + 3.0 * B * i * i);
            *o += g * (0.5 * (1.0 + t) + 0.5 * i * (1.0 - t * t) * du);
        }
    }
    fn vexp_shift(row: &[f32], max: f32, out: &mut [f32]) -> f64 {
        for (o, &l) in out.iter_mut().zip(row) {
            *o = fast_exp_f32(l - max);
        }
        let mut denom = 0.0f64;
        for &e in out.iter() {
            denom += e as f64;
        }
        denom
    }
    fn vexp_shift_inplace(row: &mut [f32], max: f32) -> f64 {
        for slot in row.iter_mut() {
            *slot = fast_exp_f32(*slot - max);
        }
        let mut denom = 0.0f64;
        for &e in row.iter() {
            denom += e as f64;
        }
        denom
    }
    fn vlinear_fwd(x: &[f32], n: usize, din: usize, w: &[f32], dout: usize, b: &[f32], y: &mut [f32]) -> bool {
        simd::linear_fwd_f32(x, n, din, w, dout, b, y)
    }
    fn vlinear_dx(dy: &[f32], n: usize, dout: usize, w: &[f32], din: usize, dx: &mut [f32]) -> bool {
        simd::linear_dx_f32(dy, n, dout, w, din, dx)
    }
    fn vlinear_dwdb(dy: &[f32], x: &[f32], n: usize, din: usize, dout: usize, dw: &mut [f32], db: &mut [f32]) -> bool {
        simd::linear_dwdb_f32(dy, x, n, din, dout, dw, db)
    }
}

/// Hand-vectorized f32 helpers. The scalar loop in the trait default is the
/// fallback on targets without the required features; these variants keep a
/// fixed lane/summation order so results stay deterministic per build.
mod simd {
    #[cfg(all(target_arch = "x86_64", target_feature = "avx512f"))]
    #[inline(always)]
    pub fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
        unsafe {
            use std::arch::x86_64::*;
            let n = a.len();
            debug_assert_eq!(n, b.len());
            let (pa, pb) = (a.as_ptr(), b.as_ptr());
            let mut acc0 = _mm512_setzero_ps();
            let mut acc1 = _mm512_setzero_ps();
            let mut i = 0;
            while i + 32 <= n {
                acc0 = _mm512_fmadd_ps(_mm512_loadu_ps(pa.add(i)), _mm512_loadu_ps(pb.add(i)), acc0);
                acc1 = _mm512_fmadd_ps(
                    _mm512_loadu_ps(pa.add(i + 16)),
                    _mm512_loadu_ps(pb.add(i + 16)),
                    acc1,
                );
                i += 32;
            }
            if i + 16 <= n {
                acc0 = _mm512_fmadd_ps(_mm512_loadu_ps(pa.add(i)), _mm512_loadu_ps(pb.add(i)), acc0);
                i += 16;
            }
            let mut s = _mm512_reduce_add_ps(_mm512_add_ps(acc0, acc1));
            while i < n {
                s = a[i].mul_add(b[i], s);
                i += 1;
            }
            s
        }
    }

    #[cfg(all(
        target_arch = "x86_64",
        target_feature = "fma",
        not(target_feature = "avx512f")
    ))]
    #[inline]
    pub fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
        unsafe {
            use std::arch::x86_64::*;
            let n = a.len();
            debug_assert_eq!(n, b.len());
            let (pa, pb) = (a.as_ptr(), b.as_ptr());
            let mut acc0 = _mm256_setzero_ps();
            let mut acc1 = _mm256_setzero_ps();
            let mut i = 0;
            while i + 16 <= n {
                acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(pa.add(i)), _mm256_loadu_ps(pb.add(i)), acc0);
                acc1 = _mm256_fmadd_ps(
                    _mm256_loadu_ps(pa.add(i + 8)),
                    _mm256_loadu_ps(pb.add(i + 8)),
                    acc1,
                );
                i += 16;
            }
            if i + 8 <= n {
                acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(pa.add(i)), _mm256_loadu_ps(pb.add(i)), acc0);
                i += 8;
            }
            let acc = _mm256_add_ps(acc0, acc1);
            let hi = _mm256_extractf128_ps(acc, 1);
            let lo = _mm256_castps256_ps128(acc);
            let q = _mm_add_ps(lo, hi);
            let q = _mm_add_ps(q, _mm_movehl_ps(q, q));
            let q = _mm_add_ss(q, _mm_shuffle_ps(q, q, 1));
            let mut s = _mm_cvtss_f32(q);
            while i < n {
                s = a[i].mul_add(b[i], s);
                i += 1;
            }
            s
        }
    }

    #[cfg(not(all(
        target_arch = "x86_64",
        any(target_feature = "fma", target_feature = "avx512f")
    )))]
    #[inline]
    pub fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
        let mut acc = [0.0f32; 8];
        let mut ca = a.chunks_exact(8);
        let mut cb = b.chunks_exact(8);
        for (xa, xb) in (&mut ca).zip(&mut cb) {
            for k in 0..8 {
                acc[k] += xa[k] * xb[k];
            }
        }
        let mut s =
            ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
        for (xa, xb) in ca.remainder().iter().zip(cb.remainder()) {
            s += xa * xb;
        }
        s
    }

    #[cfg(all(target_arch = "x86_64", target_feature = "avx512f"))]
    #[inline(always)]
    pub fn axpy_f32(acc: &mut [f32], a: f32, x: &[f32]) {
        unsafe {
            use std::arch::x86_64::*;
            let n = acc.len();
            debug_assert_eq!(n, x.len());
            let av = _mm512_set1_ps(a);
            let pd = acc.as_mut_ptr();
            let px = x.as_ptr();
            let mut i = 0;
            while i + 16 <= n {
                let v = _mm512_fmadd_ps(av, _mm512_loadu_ps(px.add(i)), _mm512_loadu_ps(pd.add(i)));
                _mm512_storeu_ps(pd.add(i), v);
                i += 16;
            }
            while i < n {
                acc[i] = x[i].mul_add(a, acc[i]);
                i += 1;
            }
        }
    }

    #[cfg(all(
        target_arch = "x86_64",
        target_feature = "fma",
        not(target_feature = "avx512f")
    ))]
    #[inline]
    pub fn axpy_f32(acc: &mut [f32], a: f32, x: &[f32]) {
        unsafe {
            use std::arch::x86_64::*;
            let n = acc.len();
            debug_assert_eq!(n, x.len());
            let av = _mm256_set1_ps(a);
            let pd = acc.as_mut_ptr();
            let px = x.as_ptr();
            let mut i = 0;
            while i + 8 <= n {
                let v = _mm256_fmadd_ps(av, _mm256_loadu_ps(px.add(i)), _mm256_loadu_ps(pd.add(i)));
                _mm256_storeu_ps(pd.add(i), v);
                i += 8;
            }
            while i < n {
                acc[i] = x[i].mul_add(a, acc[i]);
                i += 1;
            }
        }
    }

    #[cfg(not(all(
        target_arch = "x86_64",
        any(target_feature = "fma", target_feature = "avx512f")
    )))]
    #[inline]
    pub fn axpy_f32(acc: &mut [f32], a: f32, x: &[f32]) {
        for (dst, src) in acc.iter_mut().zip(x) {
            *dst += a * src;
        }
    }

    /// y = x*W^T + b with W pre-transposed into a scratch panel, so each
    /// output row accumulates in registers with pure broadcast-FMA.
    #[cfg(all(target_arch = "x86_64", target_feature = "avx512f"))]
    pub fn linear_fwd_f32(
        x: &[f32],
        n: usize,
        din: usize,
        w: &[f32],
        dout: usize,
        b: &[f32],
        y: &mut [f32],
    ) -> bool {
        if dout % 16 != 0 || !matches!(dout / 16, 1 | 2 | 4 | 8 | 16) || n < 8 {
            return false;
        }
        // wt[k][j] = w[j][k]
        let mut wt = vec![0.0f32; din * dout];
        for j in 0..dout {
            for kk in 0..din {
                wt[kk * dout + j] = w[j * din + kk];
            }
        }
        match dout / 16 {
            1 => fwd_rows::<1>(x, n, din, &wt, dout, b, y),
            2 => fwd_rows::<2>(x, n, din, &wt, dout, b, y),
            4 => fwd_rows::<4>(x, n, din, &wt, dout, b, y),
            8 => fwd_rows::<8>(x, n, din, &wt, dout, b, y),
            16 => fwd_rows::<16>(x, n, din, &wt, dout, b, y),
            _ => return false,
        }
        true
    }

    #[cfg(all(target_arch = "x86_64", target_feature = "avx512f"))]
    fn fwd_rows<const LANES: usize>(
        x: &[f32],
        _n: usize,
        din: usize,
        wt: &[f32],
        dout: usize,
        b: &[f32],
        y: &mut [f32],
    ) {
        use rayon::prelude::*;
        y.par_chunks_mut(dout)
            .with_min_len(32)
            .enumerate()
            .for_each(|(r, yr)| unsafe {
                use std::arch::x86_64::*;
                let mut acc = [_mm512_setzero_ps(); LANES];
                for (l, slot) in acc.iter_mut().enumerate() {
                    *slot = _mm512_loadu_ps(b.as_ptr().add(l * 16));
                }
                let xr = &x[r * din..(r + 1) * din];
                for (kk, &xv) in xr.iter().enumerate() {
                    let bc = _mm512_set1_ps(xv);
                    let wrow = wt.as_ptr().add(kk * dout);
                    for (l, slot) in acc.iter_mut().enumerate() {
                        *slot = _mm512_fmadd_ps(bc, _mm512_loadu_ps(wrow.add(l * 16)), *slot);
                    }
                }
                for (l, slot) in acc.iter().enumerate() {
                    _mm512_storeu_ps(yr.as_mut_ptr().add(l * 16), *slot);
                }
            });
    }

    /// dx += dy*W; W rows are already contiguous in the needed direction.
    #[cfg(all(target_arch = "x86_64", target_feature = "avx512f"))]
    pub fn linear_dx_f32(
        dy: &[f32],
        n: usize,
        dout: usize,
        w: &[f32],
        din: usize,
        dx: &mut [f32],
    ) -> bool {
        if din % 16 != 0 || !matches!(din / 16, 1 | 2 | 4 | 8 | 16) || n < 8 {
            return false;
        }
        match din / 16 {
            1 => dx_rows::<1>(dy, dout, w, din, dx),
            2 => dx_rows::<2>(dy, dout, w, din, dx),
            4 => dx_rows::<4>(dy, dout, w, din, dx),
            8 => dx_rows::<8>(dy, dout, w, din, dx),
            16 => dx_rows::<16>(dy, dout, w, din, dx),
            _ => return false,
        }
        true
    }

    #[cfg(all(target_arch = "x86_64", target_feature = "avx512f"))]
    fn dx_rows<const LANES: usize>(dy: &[f32], dout: usize, w: &[f32], din: usize, dx: &mut [f32]) {
        use rayon::prelude::*;
        dx.par_chunks_mut(din)
            .with_min_len(32)
            .enumerate()
            .for_each(|(r, dxr)| unsafe {
                use std::arch::x86_64::*;
                let mut acc = [_mm512_setzero_ps(); LANES];
                for (l, slot) in acc.iter_mut().enumerate() {
                    *slot = _mm512_loadu_ps(dxr.as_ptr().add(l * 16));
                }
                let dyr = &dy[r * dout..(r + 1) * dout];
                for (j, &g) in dyr.iter().enumerate() {
                    if g != 0.0 {
                        let bc = _mm512_set1_ps(g);
                        let wrow = w.as_ptr().add(j * din);
                        for (l, slot) in acc.iter_mut().enumerate() {
                            *slot = _mm512_fmadd_ps(bc, _mm512_loadu_ps(wrow.add(l * 16)), *slot);
                        }
                    }
                }
                for (l, slot) in acc.iter().enumerate() {
                    _mm512_storeu_ps(dxr.as_mut_ptr().add(l * 16), *slot);
                }
            });
    }

    /// dw += dy^T x, db += colsum(dy). Blocks of output neurons are held in
    /// registers across the whole row walk.
    #[cfg(all(target_arch = "x86_64", target_feature = "avx512f"))]
    pub fn linear_dwdb_f32(
        dy: &[f32],
        x: &[f32],
        n: usize,
        din: usize,
        dout: usize,
        dw: &mut [f32],
        db: &mut [f32],
    ) -> bool {
        if din % 16 != 0 || n < 8 {
            return false;
        }
        let xl = din / 16;
        if !matches!(xl, 1 | 2 | 4 | 8 | 16) {
            return false;
        }
        let jb = (16 / xl).clamp(1, 4);
        let tasks: Vec<(usize, &mut [f32], &mut [f32])> = {
            let mut out = Vec::new();
            let mut dw_rest = dw;
            let mut db_rest = db;
            let mut j0 = 0;
            while j0 < dout {
                let len = jb.min(dout - j0);
                let (dw_blk, dw_tail) = dw_rest.split_at_mut(len * din);
                let (db_blk, db_tail) = db_rest.split_at_mut(len);
                out.push((j0, dw_blk, db_blk));
                dw_rest = dw_tail;
                db_rest = db_tail;
                j0 += len;
            }
            out
        };
        use rayon::prelude::*;
        tasks.into_par_iter().for_each(|(j0, dw_blk, db_blk)| {
            let len = db_blk.len();
            match (xl, len) {
                (1, 1) => dw_task::<1, 1>(dy, x, n, din, dout, j0, dw_blk, db_blk),
                (1, 2) => dw_task::<1, 2>(dy, x, n, din, dout, j0, dw_blk, db_blk),
                (1, 3) => dw_task::<1, 3>(dy, x, n, din, dout, j0, dw_blk, db_blk),
                (1, 4) => dw_task::<1, 4>(dy, x, n, din, dout, j0, dw_blk, db_blk),
                (2, 1) => dw_task::<2, 1>(dy, x, n, din, dout, j0, dw_blk, db_blk),
                (2, 2) => dw_task::<2, 2>(dy, x, n, din, dout, j0, dw_blk, db_blk),
                (2, 3) => dw_task::<2, 3>(dy, x, n, din, dout, j0, dw_blk, db_blk),
                (2, 4) => dw_task::<2, 4>(dy, x, n, din, dout, j0, dw_blk, db_blk),
                (4, 1) => dw_task::<4, 1>(dy, x, n, din, dout, j0, dw_blk, db_blk),
                (4, 2) => dw_task::<4, 2>(dy, x, n, din, dout, j0, dw_blk, db_blk),
                (4, 3) => dw_task::<4, 3>(dy, x, n, din, dout, j0, dw_blk, db_blk),
                (4, 4) => dw_task::<4, 4>(dy, x, n, din, dout, j0, dw_blk, db_blk),
                (8, 1) => dw_task::<8, 1>(dy, x, n, din, dout, j0, dw_blk, db_blk),
                (8, 2) => dw_task::<8, 2>(dy, x, n, din, dout, j0, dw_blk, db_blk),
                (16, 1) => dw_task::<16, 1>(dy, x, n, din, dout, j0, dw_blk, db_blk),
                _ => unreachable!("dw dispatch covers jb derivation"),
            }
        });
        true
    }

    #[cfg(all(target_arch = "x86_64", target_feature = "avx512f"))]
    #[allow(clippy::too_many_arguments)]
    fn dw_task<const XL: usize, const JBN: usize>(
        dy: &[f32],
        x: &[f32],
        n: usize,
        din: usize,
        dout: usize,
        j0: usize,
        dw_blk: &mut [f32],
        db_blk: &mut [f32],
    ) {
        unsafe {
            use std::arch::x86_64::*;
            let mut acc = [[_mm512_setzero_ps(); XL]; JBN];
            let mut bacc = [0.0f32; JBN];
            for r in 0..n {
                let xr = x.as_ptr().add(r * din);
                let dyr = &dy[r * dout + j0..r * dout + j0 + JBN];
                for (jj, &g) in dyr.iter().enumerate() {
                    if g != 0.0 {
                        let bc = _mm512_set1_ps(g);
                        for (l, slot) in acc[jj].iter_mut().enumerate() {
                            *slot = _mm512_fmadd_ps(bc, _mm512_loadu_ps(xr.add(l * 16)), *slot);
                        }
                        bacc[jj] += g;
                    }
                }
            }
            for jj in 0..JBN {
                for l in 0..XL {
                    let base = dw_blk.as_mut_ptr().add(jj * din + l * 16);
                    let prev = _mm512_loadu_ps(base);
                    _mm512_storeu_ps(base, _mm512_add_ps(prev, acc[jj][l]));
                }
                db_blk[jj] += bacc[jj];
            }
        }
    }

    #[cfg(not(all(target_arch = "x86_64", target_feature = "avx512f")))]
    pub fn linear_fwd_f32(
        _x: &[f32],
        _n: usize,
        _din: usize,
        _w: &[f32],
        _dout: usize,
        _b: &[f32],
        _y: &mut [f32],
    ) -> bool {
        false
    }

    #[cfg(not(all(target_arch = "x86_64", target_feature = "avx512f")))]
    pub fn linear_dx_f32(
        _dy: &[f32],
        _n: usize,
        _dout: usize,
        _w: &[f32],
        _din: usize,
        _dx: &mut [f32],
    ) -> bool {
        false
    }

    #[cfg(not(all(target_arch = "x86_64", target_feature = "avx512f")))]
    pub fn linear_dwdb_f32(
        _dy: &[f32],
        _x: &[f32],
        _n: usize,
        _din: usize,
        _dout: usize,
        _dw: &mut [f32],
        _db: &mut [f32],
    ) -> bool {
        false
    }
}

impl Real for f64 {
    #[inline]
    fn from_f32c(x: f32) -> Self {
        x as f64
    }
    #[inline]
    fn from_f64c(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64c(self) -> f64 {
        self
    }
    #[inline]
    fn to_f32c(self) -> f32 {
        self as f32
    }
    #[inline]
    fn fexp(self) -> Self {
        self.exp()
    }
    #[inline]
    fn ftanh(self) -> Self {
        self.tanh()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_exp_matches_libm() {
        let mut worst = 0.0f64;
        for i in -4000..4000 {
            let x = i as f32 * 0.02;
            let got = fast_exp_f32(x) as f64;
            let want = (x as f64).exp();
            let rel = ((got - want) / want).abs();
            worst = worst.max(rel);
        }
        assert!(worst < 3e-7, "fast_exp worst rel err {worst}");
    }

    #[test]
    fn fast_tanh_matches_libm() {
        let mut worst = 0.0f64;
        for i in -5000..5000 {
            let x = i as f32 * 0.004;
            let got = fast_tanh_f32(x) as f64;
            let want = (x as f64).tanh();
            let abs = (got - want).abs();
            worst = worst.max(abs);
        }
        assert!(worst < 1e-6, "fast_tanh worst abs err {worst}");
    }
}
