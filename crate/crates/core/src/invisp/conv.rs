//! 3×3 "same" convolutions over `C × H × W` buffers via im2col + GEMM.

use crate::tensor::Real;

pub(crate) const KERNEL: usize = 3;
pub(crate) const TAPS: usize = KERNEL * KERNEL;

/// Unrolls `x` (`c × h × w`) into a `(c·9) × (h·w)` patch matrix with zero
/// padding of one pixel.
pub(crate) fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut cols = vec![T::zero(); c * TAPS * hw];
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut cols[((ch * TAPS) + ky * KERNEL + kx) * hw..][..hw];
                let (x_lo, x_hi) = (1usize.saturating_sub(kx), (w + 1 - kx).min(w));
                for y in 0..h {
                    let sy = y + ky;
                    if sy < 1 || sy > h {
                        continue;
                    }
                    let src = &plane[(sy - 1) * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    for xx in x_lo..x_hi {
                        dst[xx] = src[xx + kx - 1];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch-matrix gradients back onto `gx`.
pub(crate) fn col2im_add<T: Real>(cols: &[T], c: usize, h: usize, w: usize, gx: &mut [T]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut gx[ch * hw..(ch + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &cols[((ch * TAPS) + ky * KERNEL + kx) * hw..][..hw];
                let (x_lo, x_hi) = (1usize.saturating_sub(kx), (w + 1 - kx).min(w));
                for y in 0..h {
                    let sy = y + ky;
                    if sy < 1 || sy > h {
                        continue;
                    }
                    let dst = &mut plane[(sy - 1) * w..][..w];
                    let src = &row[y * w..][..w];
                    for xx in x_lo..x_hi {
                        dst[xx + kx - 1] += src[xx];
                    }
                }
            }
        }
    }
}

/// `weight` is `cout × cin × 3 × 3`; returns `cout × hw` outputs.
pub(crate) fn conv_forward<T: Real>(
    cols: &[T],
    weight: &[T],
    bias: &[T],
    cin: usize,
    cout: usize,
    hw: usize,
) -> Vec<T> {
    let k = cin * TAPS;
    let mut out = Vec::with_capacity(cout * hw);
    for &b in bias {
        out.extend(std::iter::repeat_n(b, hw));
    }
    T::gemm(
        cout,
        k,
        hw,
        T::one(),
        weight,
        k as isize,
        1,
        cols,
        hw as isize,
        1,
        T::one(),
        &mut out,
        hw as isize,
        1,
    );
    out
}

/// Accumulates weight and bias gradients and returns the gradient with
/// respect to the patch matrix.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Real>(
    cols: &[T],
    weight: &[T],
    gout: &[T],
    cin: usize,
    cout: usize,
    hw: usize,
    gweight: &mut [T],
    gbias: &mut [T],
) -> Vec<T> {
    let k = cin * TAPS;
    // gW += gout · colsᵀ
    T::gemm(
        cout,
        hw,
        k,
        T::one(),
        gout,
        hw as isize,
        1,
        cols,
        1,
        hw as isize,
        T::one(),
        gweight,
        k as isize,
        1,
    );
    for (gb, row) in gbias.iter_mut().zip(gout.chunks_exact(hw)) {
        let mut acc = T::zero();
        for &g in row {
            acc += g;
        }
        *gb += acc;
    }
    // gcols = Wᵀ · gout
    let mut gcols = vec![T::zero(); k * hw];
    T::gemm(
        k,
        cout,
        hw,
        T::one(),
        weight,
        1,
        k as isize,
        gout,
        hw as isize,
        1,
        T::zero(),
        &mut gcols,
        hw as isize,
        1,
    );
    gcols
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Prng;

    /// Direct nested-loop convolution with zero padding.
    fn naive(x: &[f64], wt: &[f64], b: &[f64], cin: usize, cout: usize, h: usize, w: usize) -> Vec<f64> {
        let mut out = vec![0.0; cout * h * w];
        for o in 0..cout {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = b[o];
                    for i in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let sy = y as isize + ky as isize - 1;
                                let sx = xx as isize + kx as isize - 1;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                acc += wt[((o * cin + i) * 3 + ky) * 3 + kx]
                                    * x[(i * h + sy as usize) * w + sx as usize];
                            }
                        }
                    }
                    out[(o * h + y) * w + xx] = acc;
                }
            }
        }
        out
    }

    fn randv(p: &mut Prng, n: usize) -> Vec<f64> {
        (0..n).map(|_| p.next_gaussian(1.0)).collect()
    }

    #[test]
    fn matches_naive_loops() {
        let mut p = Prng::new(1);
        for &(cin, cout, h, w) in &[(1, 1, 1, 1), (2, 3, 4, 5), (3, 2, 7, 2), (6, 4, 8, 8)] {
            let x = randv(&mut p, cin * h * w);
            let wt = randv(&mut p, cout * cin * 9);
            let b = randv(&mut p, cout);
            let cols = im2col(&x, cin, h, w);
            let got = conv_forward(&cols, &wt, &b, cin, cout, h * w);
            let want = naive(&x, &wt, &b, cin, cout, h, w);
            for (g, e) in got.iter().zip(&want) {
                assert!((g - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for any x, y.
        let mut p = Prng::new(2);
        let (c, h, w) = (3, 5, 4);
        let x = randv(&mut p, c * h * w);
        let y = randv(&mut p, c * 9 * h * w);
        let lhs: f64 = im2col(&x, c, h, w).iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; c * h * w];
        col2im_add(&y, c, h, w, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
