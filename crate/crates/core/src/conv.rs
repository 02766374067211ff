//! Direct 3-D cross-correlation kernels over `[C, T, H, W]` volumes.
//!
//! Inputs are unfolded into a patch matrix so every inner loop walks
//! contiguous memory; reduction order is fixed, so results are bitwise
//! reproducible.

use crate::error::{bail, Result};
use crate::real::Real;

/// Resolved shapes of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub output: [usize; 3],
}

impl ConvGeometry {
    pub fn new(
        input_shape: &[usize],
        kernel_shape: &[usize],
        stride: [usize; 3],
        padding: [usize; 3],
    ) -> Result<Self> {
        if input_shape.len() != 4 {
            bail!(Shape, "conv3d input must be [C,T,H,W], got {:?}", input_shape);
        }
        if kernel_shape.len() != 5 {
            bail!(
                Shape,
                "conv3d kernel must be [C_out,C_in,kt,kh,kw], got {:?}",
                kernel_shape
            );
        }
        if kernel_shape[1] != input_shape[0] {
            bail!(
                Shape,
                "kernel {:?} expects {} input channels but input {:?} has {}",
                kernel_shape,
                kernel_shape[1],
                input_shape,
                input_shape[0]
            );
        }
        if stride.contains(&0) {
            bail!(Parameter, "conv3d stride components must be >= 1, got {:?}", stride);
        }
        let mut output = [0; 3];
        for a in 0..3 {
            let padded = input_shape[a + 1] + 2 * padding[a];
            let k = kernel_shape[a + 2];
            if k > padded {
                bail!(
                    Shape,
                    "kernel {:?} exceeds padded input {:?} (padding {:?})",
                    kernel_shape,
                    input_shape,
                    padding
                );
            }
            output[a] = (padded - k) / stride[a] + 1;
        }
        Ok(ConvGeometry {
            in_channels: input_shape[0],
            out_channels: kernel_shape[0],
            input: [input_shape[1], input_shape[2], input_shape[3]],
            kernel: [kernel_shape[2], kernel_shape[3], kernel_shape[4]],
            stride,
            padding,
            output,
        })
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.out_channels, self.output[0], self.output[1], self.output[2]]
    }

    /// Same convolution with the H and W axes merged into one row when the
    /// kernel is pointwise in space, so inner loops run over whole planes.
    fn flattened(&self) -> Self {
        let pointwise = self.kernel[1] == 1
            && self.kernel[2] == 1
            && self.stride[1] == 1
            && self.stride[2] == 1
            && self.padding[1] == 0
            && self.padding[2] == 0;
        if !pointwise {
            return *self;
        }
        let mut g = *self;
        g.input = [self.input[0], 1, self.input[1] * self.input[2]];
        g.output = [self.output[0], 1, self.output[1] * self.output[2]];
        g
    }

    fn input_volume(&self) -> usize {
        self.input.iter().product()
    }

    fn output_volume(&self) -> usize {
        self.output.iter().product()
    }

    fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    /// Output positions `o` along axis `a` whose input index `o*s + k - p`
    /// lands inside the input, as a half-open range.
    #[inline]
    fn valid(&self, a: usize, k: usize) -> (usize, usize) {
        let (s, p, n, out) = (self.stride[a], self.padding[a], self.input[a], self.output[a]);
        let lo = if p > k { (p - k).div_ceil(s) } else { 0 };
        let hi = if n + p > k { ((n - 1 + p - k) / s + 1).min(out) } else { 0 };
        (lo.min(hi), hi)
    }

    #[inline]
    fn src(&self, a: usize, o: usize, k: usize) -> usize {
        o * self.stride[a] + k - self.padding[a]
    }

    /// Visits every (kernel tap, output row) pair that touches the input.
    /// The callback gets the kernel offset, the output row offset, the input
    /// row offset, and the valid output column range.
    #[inline]
    fn for_each_row(&self, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
        let [_, kh, kw] = self.kernel;
        let [_, oh, ow] = self.output;
        let [_, ih, iw] = self.input;
        for dt in 0..self.kernel[0] {
            let (t_lo, t_hi) = self.valid(0, dt);
            for dh in 0..kh {
                let (h_lo, h_hi) = self.valid(1, dh);
                for dw in 0..kw {
                    let (w_lo, w_hi) = self.valid(2, dw);
                    if w_lo >= w_hi {
                        continue;
                    }
                    let tap = (dt * kh + dh) * kw + dw;
                    for ot in t_lo..t_hi {
                        let it = self.src(0, ot, dt);
                        for oy in h_lo..h_hi {
                            let iy = self.src(1, oy, dh);
                            let out_row = (ot * oh + oy) * ow;
                            let in_row = (it * ih + iy) * iw;
                            f(tap, out_row, in_row, w_lo, w_hi);
                        }
                    }
                }
            }
        }
    }

    /// Gathers every kernel tap's view of the input into a
    /// `[C_in * taps, output volume]` patch matrix. `cols` must arrive zeroed;
    /// padded positions are left untouched.
    fn im2col<R: Real>(&self, input: &[R], cols: &mut [R]) {
        let (vin, vout, vk) = (self.input_volume(), self.output_volume(), self.kernel_volume());
        let (sw, pw, kw) = (self.stride[2], self.padding[2], self.kernel[2]);
        for ci in 0..self.in_channels {
            let in_c = &input[ci * vin..(ci + 1) * vin];
            let block = &mut cols[ci * vk * vout..(ci + 1) * vk * vout];
            self.for_each_row(|tap, out_row, in_row, lo, hi| {
                let dst = &mut block[tap * vout + out_row..];
                let start = in_row + lo * sw + (tap % kw) - pw;
                if sw == 1 {
                    dst[lo..hi].copy_from_slice(&in_c[start..start + (hi - lo)]);
                } else {
                    for (d, s) in dst[lo..hi].iter_mut().zip(in_c[start..].iter().step_by(sw)) {
                        *d = *s;
                    }
                }
            });
        }
    }

    /// Scatter-adds a patch-matrix gradient back onto the input gradient.
    fn col2im<R: Real>(&self, cols: &[R], grad_input: &mut [R]) {
        let (vin, vout, vk) = (self.input_volume(), self.output_volume(), self.kernel_volume());
        let (sw, pw, kw) = (self.stride[2], self.padding[2], self.kernel[2]);
        for ci in 0..self.in_channels {
            let gi_c = &mut grad_input[ci * vin..(ci + 1) * vin];
            let block = &cols[ci * vk * vout..(ci + 1) * vk * vout];
            self.for_each_row(|tap, out_row, in_row, lo, hi| {
                let src = &block[tap * vout + out_row..][lo..hi];
                let start = in_row + lo * sw + (tap % kw) - pw;
                if sw == 1 {
                    for (d, s) in gi_c[start..start + (hi - lo)].iter_mut().zip(src) {
                        *d += *s;
                    }
                } else {
                    for (d, s) in gi_c[start..].iter_mut().step_by(sw).zip(src) {
                        *d += *s;
                    }
                }
            });
        }
    }

    fn patch_rows(&self) -> usize {
        self.in_channels * self.kernel_volume()
    }

    pub fn forward<R: Real>(&self, input: &[R], kernel: &[R], bias: &[R], out: &mut [R]) {
        let g = self.flattened();
        let (vout, rows) = (g.output_volume(), g.patch_rows());
        let mut cols = alloc::vec![R::zero(); rows * vout];
        g.im2col(input, &mut cols);
        for co in 0..g.out_channels {
            let out_c = &mut out[co * vout..(co + 1) * vout];
            out_c.iter_mut().for_each(|v| *v = R::zero());
            for (&w, col) in kernel[co * rows..(co + 1) * rows].iter().zip(cols.chunks_exact(vout)) {
                axpy(w, col, out_c);
            }
            let b = bias[co];
            out_c.iter_mut().for_each(|v| *v += b);
        }
    }

    /// Accumulates (`+=`) gradients with respect to whichever of input,
    /// kernel and bias are requested.
    pub fn backward<R: Real>(
        &self,
        input: &[R],
        kernel: &[R],
        grad_out: &[R],
        grad_input: Option<&mut [R]>,
        grad_kernel: Option<&mut [R]>,
        grad_bias: Option<&mut [R]>,
    ) {
        let g = self.flattened();
        let (vout, rows) = (g.output_volume(), g.patch_rows());
        if let Some(gb) = grad_bias {
            for (co, b) in gb.iter_mut().enumerate().take(g.out_channels) {
                *b += dot_sum(&grad_out[co * vout..(co + 1) * vout]);
            }
        }
        if let Some(gk) = grad_kernel {
            let mut cols = alloc::vec![R::zero(); rows * vout];
            g.im2col(input, &mut cols);
            for co in 0..g.out_channels {
                let go_c = &grad_out[co * vout..(co + 1) * vout];
                for (w, col) in gk[co * rows..(co + 1) * rows].iter_mut().zip(cols.chunks_exact(vout)) {
                    *w += dot(go_c, col);
                }
            }
        }
        if let Some(gi) = grad_input {
            let mut cols = alloc::vec![R::zero(); rows * vout];
            for co in 0..g.out_channels {
                let go_c = &grad_out[co * vout..(co + 1) * vout];
                for (&w, col) in kernel[co * rows..(co + 1) * rows].iter().zip(cols.chunks_exact_mut(vout)) {
                    axpy(w, go_c, col);
                }
            }
            g.col2im(&cols, gi);
        }
    }
}

/// `y += a * x`.
#[inline]
fn axpy<R: Real>(a: R, x: &[R], y: &mut [R]) {
    for (y, &x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

const LANES: usize = 8;

/// Dot product with eight interleaved partial sums combined in a fixed order.
#[inline]
fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    let mut acc = [R::zero(); LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = R::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    acc.iter().fold(R::zero(), |s, &v| s + v) + tail
}

#[inline]
fn dot_sum<R: Real>(a: &[R]) -> R {
    let mut acc = [R::zero(); LANES];
    let c = a.chunks_exact(LANES);
    let r = c.remainder();
    for x in c {
        for l in 0..LANES {
            acc[l] += x[l];
        }
    }
    acc.iter().fold(R::zero(), |s, &v| s + v) + r.iter().fold(R::zero(), |s, &v| s + v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    /// Straightforward seven-deep loop used as a reference.
    fn naive(g: &ConvGeometry, x: &[f64], k: &[f64], b: &[f64]) -> Vec<f64> {
        let [t, h, w] = g.input;
        let [kt, kh, kw] = g.kernel;
        let [ot, oh, ow] = g.output;
        let mut out = vec![0.0; g.out_channels * ot * oh * ow];
        for co in 0..g.out_channels {
            for a in 0..ot {
                for bb in 0..oh {
                    for c in 0..ow {
                        let mut s = b[co];
                        for ci in 0..g.in_channels {
                            for i in 0..kt {
                                for j in 0..kh {
                                    for l in 0..kw {
                                        let ti = (a * g.stride[0] + i) as isize - g.padding[0] as isize;
                                        let hi = (bb * g.stride[1] + j) as isize - g.padding[1] as isize;
                                        let wi = (c * g.stride[2] + l) as isize - g.padding[2] as isize;
                                        if ti < 0 || hi < 0 || wi < 0 {
                                            continue;
                                        }
                                        let (ti, hi, wi) = (ti as usize, hi as usize, wi as usize);
                                        if ti >= t || hi >= h || wi >= w {
                                            continue;
                                        }
                                        s += x[((ci * t + ti) * h + hi) * w + wi]
                                            * k[((((co * g.in_channels + ci) * kt + i) * kh + j) * kw) + l];
                                    }
                                }
                            }
                        }
                        out[((co * ot + a) * oh + bb) * ow + c] = s;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_naive_loops_with_stride_and_padding() {
        let cases = [
            ([2, 3, 5, 6], [3, 2, 3, 3, 3], [1, 2, 2], [1, 1, 1]),
            ([1, 4, 7, 7], [2, 1, 1, 3, 3], [1, 2, 2], [0, 1, 1]),
            ([2, 5, 4, 4], [2, 2, 3, 1, 1], [1, 1, 1], [1, 0, 0]),
            ([1, 3, 6, 5], [1, 1, 2, 2, 3], [2, 3, 1], [0, 2, 1]),
        ];
        for (n, (xs, ks, st, pd)) in cases.iter().enumerate() {
            let g = ConvGeometry::new(xs, ks, *st, *pd).unwrap();
            let nx: usize = xs.iter().product();
            let nk: usize = ks.iter().product();
            let x: Vec<f64> = (0..nx).map(|i| ((i * 37 + n) % 11) as f64 * 0.1 - 0.5).collect();
            let k: Vec<f64> = (0..nk).map(|i| ((i * 13 + 5) % 7) as f64 * 0.2 - 0.6).collect();
            let b: Vec<f64> = (0..ks[0]).map(|i| i as f64 * 0.25).collect();
            let mut out = vec![0.0; g.output_shape().iter().product()];
            g.forward(&x, &k, &b, &mut out);
            let want = naive(&g, &x, &k, &b);
            for (a, b) in out.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "case {n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn output_extent_formula() {
        let g = ConvGeometry::new(&[3, 8, 32, 32], &[8, 3, 1, 3, 3], [1, 2, 2], [0, 1, 1]).unwrap();
        assert_eq!(g.output_shape(), [8, 8, 16, 16]);
        let g = ConvGeometry::new(&[1, 5, 9, 9], &[1, 1, 3, 4, 2], [2, 3, 1], [1, 0, 2]).unwrap();
        // floor((5+2-3)/2)+1 = 3, floor((9-4)/3)+1 = 2, floor((9+4-2)/1)+1 = 12
        assert_eq!(g.output_shape(), [1, 3, 2, 12]);
    }

    #[test]
    fn rejects_channel_mismatch_and_oversized_kernel() {
        let err = ConvGeometry::new(&[2, 4, 4, 4], &[1, 3, 1, 1, 1], [1; 3], [0; 3]).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("[1, 3, 1, 1, 1]") && msg.contains("[2, 4, 4, 4]"), "{msg}");
        assert!(ConvGeometry::new(&[1, 2, 2, 2], &[1, 1, 3, 1, 1], [1; 3], [0; 3]).is_err());
        assert!(ConvGeometry::new(&[1, 2, 2, 2], &[1, 1, 1, 1, 1], [0, 1, 1], [0; 3]).is_err());
    }
}
