//! Forward and reverse-mode kernels for the network layers.
//!
//! Activations are `[channels, height, width]` slices. Convolutions are 3x3
//! with zero padding 1; weights are laid out `[cout, cin, 3, 3]`.

use crate::scalar::Real;

pub const LEAKY_SLOPE: f64 = 0.01;
pub const NORM_EPS: f64 = 1e-5;

/// Output spatial size of a padded 3x3 convolution.
pub fn conv_out(n: usize, stride: usize) -> usize {
    (n - 1) / stride + 1
}

/// Output positions `o` whose tap `k` lands inside `0..n`.
fn tap_range(k: usize, n: usize, n_out: usize, stride: usize) -> std::ops::Range<usize> {
    let lo = if k == 0 { 1usize.div_ceil(stride) } else { 0 };
    let hi = if n + 1 > k { ((n + 1 - k - 1) / stride + 1).min(n_out) } else { 0 };
    lo..hi.max(lo)
}

/// Unfolds the 3x3 neighbourhoods of `x` into a `[cin * 9, ho * wo]` matrix.
fn im2col<T: Real>(x: &[T], [cin, h, w]: [usize; 3], stride: usize) -> Vec<T> {
    let (ho, wo) = (conv_out(h, stride), conv_out(w, stride));
    let np = ho * wo;
    let mut cols = vec![T::zero(); cin * 9 * np];
    for ci in 0..cin {
        let xin = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * np..][..np];
                let xs = tap_range(kx, w, wo, stride);
                for oy in tap_range(ky, h, ho, stride) {
                    let irow = &xin[(oy * stride + ky - 1) * w..][..w];
                    let orow = &mut row[oy * wo..(oy + 1) * wo];
                    if stride == 1 {
                        orow[xs.clone()].copy_from_slice(&irow[xs.start + kx - 1..xs.end + kx - 1]);
                    } else {
                        for ox in xs.clone() {
                            orow[ox] = irow[ox * stride + kx - 1];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: sums the columns back onto the input grid.
fn col2im<T: Real>(cols: &[T], [cin, h, w]: [usize; 3], stride: usize) -> Vec<T> {
    let (ho, wo) = (conv_out(h, stride), conv_out(w, stride));
    let np = ho * wo;
    let mut x = vec![T::zero(); cin * h * w];
    for ci in 0..cin {
        let xin = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * 9 + ky * 3 + kx) * np..][..np];
                let xs = tap_range(kx, w, wo, stride);
                for oy in tap_range(ky, h, ho, stride) {
                    let irow = &mut xin[(oy * stride + ky - 1) * w..][..w];
                    let orow = &row[oy * wo..(oy + 1) * wo];
                    if stride == 1 {
                        let dst = &mut irow[xs.start + kx - 1..xs.end + kx - 1];
                        dst.iter_mut().zip(&orow[xs.clone()]).for_each(|(d, &g)| *d += g);
                    } else {
                        for ox in xs.clone() {
                            irow[ox * stride + kx - 1] += orow[ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Padded 3x3 convolution, computed as a product with the unfolded input.
pub fn conv2d<T: Real>(x: &[T], shape: [usize; 3], weight: &[T], bias: &[T], cout: usize, stride: usize) -> Vec<T> {
    let [cin, h, w] = shape;
    let np = conv_out(h, stride) * conv_out(w, stride);
    let cols = im2col(x, shape, stride);
    let mut out: Vec<T> = bias.iter().flat_map(|&b| std::iter::repeat_n(b, np)).collect();
    let kk = cin * 9;
    T::gemm([cout, kk, np], (weight, kk, 1), (&cols, np, 1), T::one(), (&mut out, np, 1));
    out
}

/// Gradients `(dx, dweight, dbias)` of a convolution given `dy`.
pub fn conv2d_backward<T: Real>(
    x: &[T],
    shape: [usize; 3],
    weight: &[T],
    cout: usize,
    stride: usize,
    dy: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let [cin, h, w] = shape;
    let np = conv_out(h, stride) * conv_out(w, stride);
    let kk = cin * 9;
    let cols = im2col(x, shape, stride);
    let db = dy.chunks(np).map(|g| g.iter().copied().sum()).collect();
    let mut dw = vec![T::zero(); weight.len()];
    T::gemm([cout, np, kk], (dy, np, 1), (&cols, 1, np), T::zero(), (&mut dw, kk, 1));
    let mut dcols = vec![T::zero(); kk * np];
    T::gemm([kk, cout, np], (weight, 1, kk), (dy, np, 1), T::zero(), (&mut dcols, np, 1));
    (col2im(&dcols, shape, stride), dw, db)
}

/// Per-channel spatial normalization with affine scale and shift.
/// Returns the output and, per channel, `(mean, 1 / sqrt(var + eps))`.
pub fn instance_norm<T: Real>(x: &[T], [c, h, w]: [usize; 3], gamma: &[T], beta: &[T]) -> (Vec<T>, Vec<(T, T)>) {
    let n = h * w;
    let nt = T::lit(n as f64);
    let mut y = vec![T::zero(); x.len()];
    let mut stats = Vec::with_capacity(c);
    for ch in 0..c {
        let xs = &x[ch * n..(ch + 1) * n];
        let mean = xs.iter().copied().sum::<T>() / nt;
        let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nt;
        let inv = T::one() / (var + T::lit(NORM_EPS)).sqrt();
        for (o, &v) in y[ch * n..(ch + 1) * n].iter_mut().zip(xs) {
            *o = gamma[ch] * (v - mean) * inv + beta[ch];
        }
        stats.push((mean, inv));
    }
    (y, stats)
}

/// Gradients `(dx, dgamma, dbeta)` of [`instance_norm`].
pub fn instance_norm_backward<T: Real>(
    x: &[T],
    [c, h, w]: [usize; 3],
    gamma: &[T],
    stats: &[(T, T)],
    dy: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = h * w;
    let nt = T::lit(n as f64);
    let mut dx = vec![T::zero(); x.len()];
    let mut dg = vec![T::zero(); c];
    let mut db = vec![T::zero(); c];
    for ch in 0..c {
        let (mean, inv) = stats[ch];
        let xs = &x[ch * n..(ch + 1) * n];
        let gs = &dy[ch * n..(ch + 1) * n];
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for (&v, &g) in xs.iter().zip(gs) {
            sum_g += g;
            sum_gx += g * (v - mean) * inv;
        }
        dg[ch] = sum_gx;
        db[ch] = sum_g;
        let k = gamma[ch] * inv / nt;
        for ((d, &v), &g) in dx[ch * n..(ch + 1) * n].iter_mut().zip(xs).zip(gs) {
            *d = k * (nt * g - sum_g - (v - mean) * inv * sum_gx);
        }
    }
    (dx, dg, db)
}

pub fn leaky_relu<T: Real>(x: &[T]) -> Vec<T> {
    let a = T::lit(LEAKY_SLOPE);
    x.iter().map(|&v| if v > T::zero() { v } else { a * v }).collect()
}

pub fn leaky_relu_backward<T: Real>(x: &[T], dy: &[T]) -> Vec<T> {
    let a = T::lit(LEAKY_SLOPE);
    x.iter().zip(dy).map(|(&v, &g)| if v > T::zero() { g } else { a * g }).collect()
}

pub fn relu<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| v.max(T::zero())).collect()
}

pub fn relu_backward<T: Real>(x: &[T], dy: &[T]) -> Vec<T> {
    x.iter().zip(dy).map(|(&v, &g)| if v > T::zero() { g } else { T::zero() }).collect()
}

/// Source taps of 2x bilinear upsampling with half-pixel centres.
fn up_taps(n: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * n)
        .map(|o| {
            let s = ((o as f64 + 0.5) * 0.5 - 0.5).max(0.0);
            let i0 = (s.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

pub fn upsample2x<T: Real>(x: &[T], [c, h, w]: [usize; 3]) -> Vec<T> {
    let (ty, tx) = (up_taps(h), up_taps(w));
    let (ho, wo) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); c * ho * wo];
    for ch in 0..c {
        let xs = &x[ch * h * w..(ch + 1) * h * w];
        let os = &mut out[ch * ho * wo..(ch + 1) * ho * wo];
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            let (ay, by) = (T::lit(1.0 - ly), T::lit(ly));
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let (ax, bx) = (T::lit(1.0 - lx), T::lit(lx));
                let top = ax * xs[y0 * w + x0] + bx * xs[y0 * w + x1];
                let bot = ax * xs[y1 * w + x0] + bx * xs[y1 * w + x1];
                os[oy * wo + ox] = ay * top + by * bot;
            }
        }
    }
    out
}

/// Adjoint of [`upsample2x`]; `shape` is the input shape.
pub fn upsample2x_backward<T: Real>(dy: &[T], [c, h, w]: [usize; 3]) -> Vec<T> {
    let (ty, tx) = (up_taps(h), up_taps(w));
    let (ho, wo) = (2 * h, 2 * w);
    let mut dx = vec![T::zero(); c * h * w];
    for ch in 0..c {
        let gs = &dy[ch * ho * wo..(ch + 1) * ho * wo];
        let ds = &mut dx[ch * h * w..(ch + 1) * h * w];
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            let (ay, by) = (T::lit(1.0 - ly), T::lit(ly));
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let (ax, bx) = (T::lit(1.0 - lx), T::lit(lx));
                let g = gs[oy * wo + ox];
                ds[y0 * w + x0] += ay * ax * g;
                ds[y0 * w + x1] += ay * bx * g;
                ds[y1 * w + x0] += by * ax * g;
                ds[y1 * w + x1] += by * bx * g;
            }
        }
    }
    dx
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    pub fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut g = rng::seeded(seed);
        (0..n).map(|_| g.random::<f64>() * 2.0 - 1.0).collect()
    }

    #[test]
    fn conv_hand_values() {
        // single 3x3 input, all-ones kernel: each output sums its padded window
        let x: Vec<f64> = (1..=9).map(f64::from).collect();
        let y = conv2d(&x, [1, 3, 3], &[1.0; 9], &[0.5], 1, 1);
        assert_eq!(y, vec![12.5, 21.5, 16.5, 27.5, 45.5, 33.5, 24.5, 39.5, 28.5]);
        let x: Vec<f64> = (0..16).map(f64::from).collect();
        let centre = [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(conv2d(&x, [1, 4, 4], &centre, &[0.0], 1, 2), vec![0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn upsample_hand_values() {
        let y = upsample2x(&[0.0, 4.0], [1, 1, 2]);
        assert_eq!(y, vec![0.0, 1.0, 3.0, 4.0, 0.0, 1.0, 3.0, 4.0]);
        let c = upsample2x(&[2.5f64; 9], [1, 3, 3]);
        assert!(c.iter().all(|&v| (v - 2.5).abs() < 1e-15));
    }

    #[test]
    fn norm_output_is_standardized() {
        let x = random(2 * 64, 3);
        let (y, _) = instance_norm(&x, [2, 8, 8], &[1.0, 1.0], &[0.0, 0.0]);
        for ch in y.chunks(64) {
            let m: f64 = ch.iter().sum::<f64>() / 64.0;
            let v: f64 = ch.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 64.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let x = random(2 * 64, 1);
        let wt = random(3 * 2 * 9, 2);
        let (dx, dw, db) = conv2d_backward(&x, [2, 8, 8], &wt, 3, 1, &vec![0.0; 3 * 64]);
        assert!(dx.iter().chain(&dw).chain(&db).all(|&v| v == 0.0));
    }

    #[test]
    fn tap_ranges_cover_valid_positions() {
        for n in 2..9 {
            for stride in 1..3 {
                let no = conv_out(n, stride);
                for k in 0..3 {
                    let expect: Vec<usize> =
                        (0..no).filter(|&o| (o * stride + k) >= 1 && o * stride + k - 1 < n).collect();
                    assert_eq!(tap_range(k, n, no, stride).collect::<Vec<_>>(), expect);
                }
            }
        }
    }
}
