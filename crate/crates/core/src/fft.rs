//! Two-dimensional FFT helpers on row-major buffers and linear convolution by
//! zero-padded cyclic convolution.
//!
//! Transforms are unnormalized in both directions: `inverse(forward(x)) = n1*n2*x`.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

fn transform_rows(data: &mut [Complex64], n1: usize, n2: usize, inverse: bool) {
    if n2 <= 1 {
        return;
    }
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(n2) } else { planner.plan_fft_forward(n2) };
    debug_assert_eq!(data.len(), n1 * n2);
    data.par_chunks_mut(n2).for_each(|row| fft.process(row));
}

fn transpose(data: &[Complex64], n1: usize, n2: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n1 * n2];
    out.par_chunks_mut(n1).enumerate().for_each(|(k, col)| {
        for (i, c) in col.iter_mut().enumerate() {
            *c = data[i * n2 + k];
        }
    });
    out
}

/// In-place 2D transform of an `n1 x n2` row-major buffer.
pub fn fft2(data: &mut Vec<Complex64>, n1: usize, n2: usize, inverse: bool) {
    assert_eq!(data.len(), n1 * n2);
    transform_rows(data, n1, n2, inverse);
    if n1 > 1 {
        let mut t = transpose(data, n1, n2);
        transform_rows(&mut t, n2, n1, inverse);
        *data = transpose(&t, n2, n1);
    }
}

pub fn to_complex(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

/// Embeds an `a1 x a2` array in the top-left corner of an `n1 x n2` zero array.
fn embed(src: &[f64], [a1, a2]: [usize; 2], [n1, n2]: [usize; 2]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n1 * n2];
    for i in 0..a1 {
        for k in 0..a2 {
            out[i * n2 + k] = Complex64::new(src[i * a2 + k], 0.0);
        }
    }
    out
}

/// Full linear convolution of two real row-major arrays.
/// Output shape is `[a1 + b1 - 1, a2 + b2 - 1]` and
/// `out[p + q] = Σ a[p] b[q]` componentwise.
pub fn convolve_full(a: &[f64], sa: [usize; 2], b: &[f64], sb: [usize; 2]) -> (Vec<f64>, [usize; 2]) {
    assert_eq!(a.len(), sa[0] * sa[1]);
    assert_eq!(b.len(), sb[0] * sb[1]);
    let shape = [sa[0] + sb[0] - 1, sa[1] + sb[1] - 1];
    // any padding at least `shape` avoids wrap-around; smooth sizes are faster
    let padded = [next_smooth(shape[0]), next_smooth(shape[1])];
    let mut fa = embed(a, sa, padded);
    let mut fb = embed(b, sb, padded);
    fft2(&mut fa, padded[0], padded[1], false);
    fft2(&mut fb, padded[0], padded[1], false);
    fa.par_iter_mut().zip(fb.par_iter()).for_each(|(x, y)| *x *= y);
    fft2(&mut fa, padded[0], padded[1], true);
    let scale = 1.0 / (padded[0] * padded[1]) as f64;
    let mut out = Vec::with_capacity(shape[0] * shape[1]);
    for i in 0..shape[0] {
        out.extend(fa[i * padded[1]..i * padded[1] + shape[1]].iter().map(|c| c.re * scale));
    }
    (out, shape)
}

/// Smallest `m ≥ n` whose only prime factors are 2, 3, 5 and 7.
pub fn next_smooth(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Frequencies of an `n`-point transform with sample spacing `h`, in FFT order.
pub fn angular_frequencies(n: usize, h: f64) -> Vec<f64> {
    let l = n as f64 * h;
    (0..n)
        .map(|i| {
            let m = if i <= n / 2 { i as i64 } else { i as i64 - n as i64 };
            2.0 * std::f64::consts::PI * m as f64 / l
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let (n1, n2) = (6, 10);
        let src: Vec<f64> = (0..n1 * n2).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut d = to_complex(&src);
        fft2(&mut d, n1, n2, false);
        fft2(&mut d, n1, n2, true);
        for (x, y) in d.iter().zip(&src) {
            assert!((x.re / (n1 * n2) as f64 - y).abs() < 1e-13);
        }
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let sa = [3, 4];
        let sb = [5, 2];
        let a: Vec<f64> = (0..12).map(|i| i as f64 - 3.5).collect();
        let b: Vec<f64> = (0..10).map(|i| (i * i) as f64 * 0.1).collect();
        let (c, shape) = convolve_full(&a, sa, &b, sb);
        assert_eq!(shape, [7, 5]);
        for p in 0..shape[0] {
            for q in 0..shape[1] {
                let mut s = 0.0;
                for i in 0..sa[0] {
                    for k in 0..sa[1] {
                        let (bi, bk) = (p as i64 - i as i64, q as i64 - k as i64);
                        if (0..sb[0] as i64).contains(&bi) && (0..sb[1] as i64).contains(&bk) {
                            s += a[i * sa[1] + k] * b[bi as usize * sb[1] + bk as usize];
                        }
                    }
                }
                assert!((c[p * shape[1] + q] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_dimensional_convolution() {
        let (c, shape) = convolve_full(&[1.0, 2.0], [2, 1], &[1.0, 1.0, 1.0], [3, 1]);
        assert_eq!(shape, [4, 1]);
        let expected = [1.0, 3.0, 3.0, 2.0];
        for (x, y) in c.iter().zip(expected) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
