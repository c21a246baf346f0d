//! Raw layer kernels on row-major slices.

use crate::error::{Error, Result};
use crate::linalg::{MatMut, MatRef, Real};

/// Geometry of a valid cross-correlation `[B, Ci, H, W] ⋆ [Co, Ci, kh, kw]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_maps: usize,
    pub height: usize,
    pub width: usize,
    pub out_maps: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
}

impl ConvGeometry {
    pub fn new(input: &[usize], weight: &[usize], stride: (usize, usize)) -> Result<Self> {
        let (&[batch, in_maps, height, width], &[out_maps, w_in, kh, kw]) = (input, weight) else {
            return Err(Error::Shape(format!("conv expects 4-d input and weight, got {input:?} and {weight:?}")));
        };
        if w_in != in_maps {
            return Err(Error::Shape(format!("weight expects {w_in} input maps, input has {in_maps}")));
        }
        if kh > height || kw > width {
            return Err(Error::Shape(format!("{kh}×{kw} kernel larger than {height}×{width} input")));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::Shape("zero stride".into()));
        }
        Ok(ConvGeometry {
            batch,
            in_maps,
            height,
            width,
            out_maps,
            kernel: (kh, kw),
            stride,
        })
    }

    pub fn out_height(&self) -> usize {
        (self.height - self.kernel.0) / self.stride.0 + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width - self.kernel.1) / self.stride.1 + 1
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.out_maps, self.out_height(), self.out_width()]
    }
}

/// Map pairs up to which a stride-1 convolution is evaluated directly rather
/// than through GEMM.
const DIRECT_MAX_PAIRS: usize = 32;

impl ConvGeometry {
    fn direct(&self) -> bool {
        self.stride == (1, 1) && self.in_maps * self.out_maps <= DIRECT_MAX_PAIRS
    }
}

/// Valid cross-correlation. Narrow stride-1 layers treat each input plane as
/// one long row and correlate it directly (the few wrapped-around columns are
/// computed and discarded); everything else uses one GEMM per output row.
pub fn conv2d_forward<T: Real>(g: &ConvGeometry, x: &[T], w: &[T], bias: Option<&[T]>) -> Vec<T> {
    if g.direct() {
        conv2d_forward_plane(g, x, w, bias)
    } else {
        conv2d_forward_rows(g, x, w, bias)
    }
}

/// Gradients of [`conv2d_forward`]: `(dx, dw, dbias)`; `dx` is skipped when
/// `want_input` is false.
pub fn conv2d_backward<T: Real>(
    g: &ConvGeometry,
    x: &[T],
    w: &[T],
    gy: &[T],
    want_input: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    if g.direct() {
        conv2d_backward_plane(g, x, w, gy, want_input)
    } else {
        conv2d_backward_rows(g, x, w, gy, want_input)
    }
}

fn bias_grad<T: Real>(g: &ConvGeometry, gy: &[T]) -> Vec<T> {
    let plane = g.out_height() * g.out_width();
    let mut db = vec![T::zero(); g.out_maps];
    for (i, chunk) in gy.chunks(plane).enumerate() {
        let co = i % g.out_maps;
        db[co] = db[co] + chunk.iter().copied().sum::<T>();
    }
    db
}

/// Rows of the flattened plane that reach the last valid output.
fn plane_rows(g: &ConvGeometry) -> usize {
    (g.out_height() - 1) * g.width + g.out_width()
}

fn conv2d_forward_plane<T: Real>(g: &ConvGeometry, x: &[T], w: &[T], bias: Option<&[T]>) -> Vec<T> {
    let (ho_n, wo_n) = (g.out_height(), g.out_width());
    let (kh, kw) = g.kernel;
    let in_plane = g.height * g.width;
    let out_plane = ho_n * wo_n;
    let r = plane_rows(g);
    let mut full = vec![T::zero(); r];
    let mut terms = Vec::with_capacity(g.in_maps * kh * kw);
    let mut y = vec![T::zero(); g.batch * g.out_maps * out_plane];
    for co in 0..g.out_maps {
        terms.clear();
        for ci in 0..g.in_maps {
            for i in 0..kh {
                for j in 0..kw {
                    terms.push((ci * in_plane + i * g.width + j, w[((co * g.in_maps + ci) * kh + i) * kw + j]));
                }
            }
        }
        let bv = bias.map_or(T::zero(), |b| b[co]);
        for b in 0..g.batch {
            full.iter_mut().for_each(|v| *v = bv);
            correlate_accumulate(&mut full, &x[b * g.in_maps * in_plane..][..g.in_maps * in_plane], &terms);
            let dst = &mut y[(b * g.out_maps + co) * out_plane..][..out_plane];
            for (ho, row) in dst.chunks_exact_mut(wo_n).enumerate() {
                row.copy_from_slice(&full[ho * g.width..][..wo_n]);
            }
        }
    }
    y
}

fn conv2d_backward_plane<T: Real>(
    g: &ConvGeometry,
    x: &[T],
    w: &[T],
    gy: &[T],
    want_input: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let (ho_n, wo_n) = (g.out_height(), g.out_width());
    let (kh, kw) = g.kernel;
    let in_plane = g.height * g.width;
    let out_plane = ho_n * wo_n;
    let r = plane_rows(g);
    // Output gradient re-laid at full input width behind a zero front pad, so
    // the input gradient is again a correlation, with reversed offsets.
    let front = (kh - 1) * g.width + kw - 1;
    let padded = front + in_plane;
    let mut gpad = vec![T::zero(); g.out_maps * padded];
    let mut dw = vec![T::zero(); w.len()];
    let mut dx = want_input.then(|| vec![T::zero(); x.len()]);
    let mut terms = Vec::with_capacity(g.out_maps * kh * kw);
    for b in 0..g.batch {
        for co in 0..g.out_maps {
            let src = &gy[(b * g.out_maps + co) * out_plane..][..out_plane];
            let dst = &mut gpad[co * padded + front..][..in_plane];
            for (ho, row) in src.chunks_exact(wo_n).enumerate() {
                dst[ho * g.width..][..wo_n].copy_from_slice(row);
            }
        }
        let xb = &x[b * g.in_maps * in_plane..][..g.in_maps * in_plane];
        for co in 0..g.out_maps {
            let gfull = &gpad[co * padded + front..][..r];
            for ci in 0..g.in_maps {
                for i in 0..kh {
                    let base = ((co * g.in_maps + ci) * kh + i) * kw;
                    sliding_dots(&mut dw[base..base + kw], gfull, &xb[ci * in_plane + i * g.width..]);
                }
            }
        }
        if let Some(dx) = dx.as_mut() {
            for ci in 0..g.in_maps {
                terms.clear();
                for co in 0..g.out_maps {
                    for i in 0..kh {
                        for j in 0..kw {
                            terms.push((co * padded + front - i * g.width - j, w[((co * g.in_maps + ci) * kh + i) * kw + j]));
                        }
                    }
                }
                correlate_accumulate(&mut dx[(b * g.in_maps + ci) * in_plane..][..in_plane], &gpad, &terms);
            }
        }
    }
    (dx, dw, bias_grad(g, gy))
}

const TILE: usize = 32;

/// `out[r] += Σ w · src[offset + r]` over `terms = [(offset, w)]`.
///
/// Outputs are processed in register-sized tiles so each term costs one pass
/// of loads and fused multiply-adds over the tile.
pub fn correlate_accumulate<T: Real>(out: &mut [T], src: &[T], terms: &[(usize, T)]) {
    #[cfg(target_arch = "x86_64")]
    if fma_available() {
        // SAFETY: the required CPU features were detected at run time.
        unsafe { correlate_fma(out, src, terms) };
        return;
    }
    correlate_impl::<T, false>(out, src, terms);
}

/// `out[j] += Σ_r g[r] · x[r + j]` for every `j < out.len()`.
pub fn sliding_dots<T: Real>(out: &mut [T], g: &[T], x: &[T]) {
    #[cfg(target_arch = "x86_64")]
    if fma_available() {
        // SAFETY: the required CPU features were detected at run time.
        unsafe { sliding_dots_fma(out, g, x) };
        return;
    }
    sliding_dots_impl::<T, false>(out, g, x);
}

#[cfg(target_arch = "x86_64")]
fn fma_available() -> bool {
    use std::sync::OnceLock;
    static FLAG: OnceLock<bool> = OnceLock::new();
    *FLAG.get_or_init(|| is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma"))
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn correlate_fma<T: Real>(out: &mut [T], src: &[T], terms: &[(usize, T)]) {
    correlate_impl::<T, true>(out, src, terms)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn sliding_dots_fma<T: Real>(out: &mut [T], g: &[T], x: &[T]) {
    sliding_dots_impl::<T, true>(out, g, x)
}

#[inline(always)]
fn madd<T: Real, const FUSED: bool>(a: T, b: T, c: T) -> T {
    if FUSED {
        a.mul_add(b, c)
    } else {
        a * b + c
    }
}

#[inline(always)]
fn correlate_impl<T: Real, const FUSED: bool>(out: &mut [T], src: &[T], terms: &[(usize, T)]) {
    let len = out.len();
    if let Some(max) = terms.iter().map(|t| t.0).max() {
        assert!(max + len <= src.len(), "correlation source too short");
    }
    let mut tiles = out.chunks_exact_mut(TILE);
    let mut start = 0;
    for tile in &mut tiles {
        let mut acc = [T::zero(); TILE];
        acc.copy_from_slice(tile);
        for &(off, w) in terms {
            let s: &[T; TILE] = src[off + start..off + start + TILE].try_into().unwrap();
            for q in 0..TILE {
                acc[q] = madd::<T, FUSED>(w, s[q], acc[q]);
            }
        }
        tile.copy_from_slice(&acc);
        start += TILE;
    }
    let rest = tiles.into_remainder();
    for &(off, w) in terms {
        for (o, &s) in rest.iter_mut().zip(&src[off + start..]) {
            *o = madd::<T, FUSED>(w, s, *o);
        }
    }
}

#[inline(always)]
fn sliding_dots_impl<T: Real, const FUSED: bool>(out: &mut [T], g: &[T], x: &[T]) {
    let n = g.len();
    assert!(out.len() + n <= x.len() + 1, "sliding dot source too short");
    for (j, o) in out.iter_mut().enumerate() {
        let xs = &x[j..j + n];
        let mut acc = [T::zero(); TILE];
        let mut gc = g.chunks_exact(TILE);
        let mut xc = xs.chunks_exact(TILE);
        for (ga, xa) in (&mut gc).zip(&mut xc) {
            let ga: &[T; TILE] = ga.try_into().unwrap();
            let xa: &[T; TILE] = xa.try_into().unwrap();
            for q in 0..TILE {
                acc[q] = madd::<T, FUSED>(ga[q], xa[q], acc[q]);
            }
        }
        let mut total = acc.iter().copied().fold(T::zero(), |a, b| a + b);
        for (&a, &b) in gc.remainder().iter().zip(xc.remainder()) {
            total = madd::<T, FUSED>(a, b, total);
        }
        *o = *o + total;
    }
}

fn conv2d_forward_rows<T: Real>(g: &ConvGeometry, x: &[T], w: &[T], bias: Option<&[T]>) -> Vec<T> {
    let (ho_n, wo_n) = (g.out_height(), g.out_width());
    let (kh, kw) = g.kernel;
    let (sh, sw) = g.stride;
    let plane = ho_n * wo_n;
    let mut y = vec![T::zero(); g.batch * g.out_maps * plane];
    let w_co_stride = (g.in_maps * kh * kw) as isize;
    for b in 0..g.batch {
        let y_base = b * g.out_maps * plane;
        if let Some(bias) = bias {
            for (co, &bv) in bias.iter().enumerate() {
                y[y_base + co * plane..y_base + (co + 1) * plane].iter_mut().for_each(|v| *v = bv);
            }
        }
        for ho in 0..ho_n {
            for ci in 0..g.in_maps {
                for i in 0..kh {
                    let row = ((b * g.in_maps + ci) * g.height + ho * sh + i) * g.width;
                    let a = MatRef::new(x, row, wo_n, kw, sw as isize, 1);
                    let k = MatRef::new(w, (ci * kh + i) * kw, kw, g.out_maps, 1, w_co_stride);
                    let c = MatMut::new(&mut y, y_base + ho * wo_n, wo_n, g.out_maps, 1, plane as isize);
                    T::gemm(T::one(), a, k, T::one(), c);
                }
            }
        }
    }
    y
}

fn conv2d_backward_rows<T: Real>(
    g: &ConvGeometry,
    x: &[T],
    w: &[T],
    gy: &[T],
    want_input: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let (ho_n, wo_n) = (g.out_height(), g.out_width());
    let (kh, kw) = g.kernel;
    let (sh, sw) = g.stride;
    let plane = ho_n * wo_n;
    let w_co_stride = (g.in_maps * kh * kw) as isize;
    let mut dw = vec![T::zero(); w.len()];
    let mut dx = want_input.then(|| vec![T::zero(); x.len()]);
    let mut scratch = vec![T::zero(); wo_n * kw];
    for b in 0..g.batch {
        let gy_base = b * g.out_maps * plane;
        for ho in 0..ho_n {
            let gyv = MatRef::new(gy, gy_base + ho * wo_n, wo_n, g.out_maps, 1, plane as isize);
            for ci in 0..g.in_maps {
                for i in 0..kh {
                    let row = ((b * g.in_maps + ci) * g.height + ho * sh + i) * g.width;
                    let a = MatRef::new(x, row, wo_n, kw, sw as isize, 1);
                    let dwv = MatMut::new(&mut dw, (ci * kh + i) * kw, kw, g.out_maps, 1, w_co_stride);
                    T::gemm(T::one(), a.t(), gyv, T::one(), dwv);
                    if let Some(dx) = dx.as_mut() {
                        let k = MatRef::new(w, (ci * kh + i) * kw, kw, g.out_maps, 1, w_co_stride);
                        T::gemm(T::one(), gyv, k.t(), T::zero(), MatMut::row_major(&mut scratch, wo_n, kw));
                        for wo in 0..wo_n {
                            let dst = &mut dx[row + wo * sw..row + wo * sw + kw];
                            for (d, s) in dst.iter_mut().zip(&scratch[wo * kw..(wo + 1) * kw]) {
                                *d = *d + *s;
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw, bias_grad(g, gy))
}

/// One `H × 1` kernel per map collapsing the electrode axis:
/// `[B, M, H, W] → [B, M, 1, W]`.
pub fn depthwise_forward<T: Real>(shape: [usize; 4], x: &[T], w: &[T], bias: Option<&[T]>) -> Vec<T> {
    let [bn, m, h, wd] = shape;
    let mut y = vec![T::zero(); bn * m * wd];
    for b in 0..bn {
        for mi in 0..m {
            let out = &mut y[(b * m + mi) * wd..(b * m + mi + 1) * wd];
            if let Some(bias) = bias {
                out.iter_mut().for_each(|v| *v = bias[mi]);
            }
            for hi in 0..h {
                let k = w[mi * h + hi];
                let row = &x[((b * m + mi) * h + hi) * wd..][..wd];
                for (o, &v) in out.iter_mut().zip(row) {
                    *o = *o + k * v;
                }
            }
        }
    }
    y
}

pub fn depthwise_backward<T: Real>(
    shape: [usize; 4],
    x: &[T],
    w: &[T],
    gy: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let [bn, m, h, wd] = shape;
    let mut dx = vec![T::zero(); x.len()];
    let mut dw = vec![T::zero(); w.len()];
    let mut db = vec![T::zero(); m];
    for b in 0..bn {
        for mi in 0..m {
            let g = &gy[(b * m + mi) * wd..][..wd];
            db[mi] = db[mi] + g.iter().copied().sum::<T>();
            for hi in 0..h {
                let off = ((b * m + mi) * h + hi) * wd;
                let k = w[mi * h + hi];
                let mut acc = T::zero();
                for t in 0..wd {
                    acc = acc + x[off + t] * g[t];
                    dx[off + t] = k * g[t];
                }
                dw[mi * h + hi] = dw[mi * h + hi] + acc;
            }
        }
    }
    (dx, dw, db)
}

/// Non-overlapping (or strided) mean over the last axis; a trailing remainder
/// shorter than the kernel is dropped.
pub fn avgpool_forward<T: Real>(x: &[T], width: usize, k: usize, stride: usize) -> Vec<T> {
    let out_w = (width - k) / stride + 1;
    let scale = T::one() / T::from_usize(k).unwrap();
    let rows = x.len() / width;
    let mut y = Vec::with_capacity(rows * out_w);
    for r in 0..rows {
        let row = &x[r * width..(r + 1) * width];
        for o in 0..out_w {
            y.push(row[o * stride..o * stride + k].iter().copied().sum::<T>() * scale);
        }
    }
    y
}

pub fn avgpool_backward<T: Real>(gy: &[T], width: usize, k: usize, stride: usize) -> Vec<T> {
    let out_w = (width - k) / stride + 1;
    let scale = T::one() / T::from_usize(k).unwrap();
    let rows = gy.len() / out_w;
    let mut dx = vec![T::zero(); rows * width];
    for r in 0..rows {
        for o in 0..out_w {
            let g = gy[r * out_w + o] * scale;
            for d in &mut dx[r * width + o * stride..r * width + o * stride + k] {
                *d = *d + g;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(g: &ConvGeometry, x: &[f64], w: &[f64], bias: &[f64]) -> Vec<f64> {
        let [bn, co_n, ho_n, wo_n] = g.output_shape();
        let (kh, kw) = g.kernel;
        let mut y = vec![0.0; bn * co_n * ho_n * wo_n];
        for b in 0..bn {
            for co in 0..co_n {
                for ho in 0..ho_n {
                    for wo in 0..wo_n {
                        let mut s = bias[co];
                        for ci in 0..g.in_maps {
                            for i in 0..kh {
                                for j in 0..kw {
                                    let xi = ((b * g.in_maps + ci) * g.height + ho * g.stride.0 + i) * g.width
                                        + wo * g.stride.1
                                        + j;
                                    s += w[((co * g.in_maps + ci) * kh + i) * kw + j] * x[xi];
                                }
                            }
                        }
                        y[((b * co_n + co) * ho_n + ho) * wo_n + wo] = s;
                    }
                }
            }
        }
        y
    }

    fn seq(n: usize, a: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 * a).sin() * 3.0).fract()).collect()
    }

    #[test]
    fn gemm_conv_matches_loops_with_strides() {
        let g = ConvGeometry::new(&[2, 3, 5, 17], &[4, 3, 2, 4], (2, 3)).unwrap();
        let x = seq(2 * 3 * 5 * 17, 0.7);
        let w = seq(4 * 3 * 2 * 4, 1.3);
        let b = [0.1, -0.2, 0.3, 0.0];
        let got = conv2d_forward(&g, &x, &w, Some(&b));
        let want = naive_conv(&g, &x, &w, &b);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    /// Backward of both code paths against loops over the forward definition.
    #[test]
    fn backward_matches_loops() {
        for (shape, wshape, stride) in [
            ([2, 3, 5, 17], [4, 3, 2, 4], (1, 1)),
            ([2, 3, 5, 17], [4, 3, 2, 4], (2, 3)),
            ([1, 1, 4, 30], [3, 1, 1, 9], (1, 1)),
            ([2, 6, 3, 20], [6, 6, 1, 5], (1, 1)),
        ] {
            let g = ConvGeometry::new(&shape, &wshape, stride).unwrap();
            let x = seq(shape.iter().product(), 0.37);
            let w = seq(wshape.iter().product(), 0.91);
            let [bn, co_n, ho_n, wo_n] = g.output_shape();
            let gy = seq(bn * co_n * ho_n * wo_n, 0.53);
            let (dx, dw, db) = conv2d_backward(&g, &x, &w, &gy, true);
            let dx = dx.unwrap();
            let (kh, kw) = g.kernel;
            let mut want_dx = vec![0.0; x.len()];
            let mut want_dw = vec![0.0; w.len()];
            let mut want_db = vec![0.0; co_n];
            for b in 0..bn {
                for co in 0..co_n {
                    for ho in 0..ho_n {
                        for wo in 0..wo_n {
                            let gv = gy[((b * co_n + co) * ho_n + ho) * wo_n + wo];
                            want_db[co] += gv;
                            for ci in 0..g.in_maps {
                                for i in 0..kh {
                                    for j in 0..kw {
                                        let xi = ((b * g.in_maps + ci) * g.height + ho * stride.0 + i) * g.width
                                            + wo * stride.1
                                            + j;
                                        let wi = ((co * g.in_maps + ci) * kh + i) * kw + j;
                                        want_dx[xi] += w[wi] * gv;
                                        want_dw[wi] += x[xi] * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            for (got, want) in [(&dx, &want_dx), (&dw, &want_dw), (&db, &want_db)] {
                for (a, b) in got.iter().zip(want.iter()) {
                    assert!((a - b).abs() < 1e-11, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn plane_and_row_paths_agree() {
        let g = ConvGeometry::new(&[2, 2, 6, 40], &[3, 2, 2, 9], (1, 1)).unwrap();
        let x = seq(2 * 2 * 6 * 40, 0.29);
        let w = seq(3 * 2 * 2 * 9, 0.71);
        let a = conv2d_forward_plane(&g, &x, &w, Some(&[0.5, -0.5, 0.1]));
        let b = conv2d_forward_rows(&g, &x, &w, Some(&[0.5, -0.5, 0.1]));
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn table_sizes() {
        let g = ConvGeometry::new(&[1, 1, 64, 500], &[40, 1, 1, 50], (1, 1)).unwrap();
        assert_eq!(g.output_shape(), [1, 40, 64, 451]);
        assert_eq!(avgpool_forward(&vec![0.0f32; 402], 402, 7, 7).len(), 57);
        assert_eq!(avgpool_forward(&vec![0.0f32; 57], 57, 7, 7).len(), 8);
    }

    #[test]
    fn impulse_kernel_copies_input() {
        let g = ConvGeometry::new(&[1, 1, 2, 10], &[1, 1, 1, 3], (1, 1)).unwrap();
        let x: Vec<f64> = (0..20).map(|v| v as f64).collect();
        let y = conv2d_forward(&g, &x, &[1.0, 0.0, 0.0], None);
        assert_eq!(&y[..8], &x[..8]);
        assert_eq!(&y[8..], &x[10..18]);
    }

    #[test]
    fn oversized_kernel_is_a_shape_error() {
        assert!(matches!(
            ConvGeometry::new(&[1, 1, 4, 10], &[2, 1, 1, 11], (1, 1)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn constant_pools_to_constant() {
        let y = avgpool_forward(&[2.5f64; 30], 15, 7, 7);
        assert_eq!(y, vec![2.5; 4]);
    }
}
