//! Iterative radix-2 complex FFT, enough for power-of-two STFT windows.

use crate::scalar::Scalar;

/// In-place decimation-in-time FFT over split real/imaginary buffers.
/// Length must be a power of two. Twiddles are evaluated in f64 and narrowed.
pub fn fft_in_place<T: Scalar>(re: &mut [T], im: &mut [T]) {
    let n = re.len();
    assert_eq!(n, im.len(), "re/im length mismatch");
    assert!(n.is_power_of_two(), "fft length must be a power of two");
    if n <= 1 {
        return;
    }

    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let ang = -2.0 * std::f64::consts::PI / len as f64;
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = ang * k as f64;
                let (wr, wi) = (T::from_f64(w.cos()), T::from_f64(w.sin()));
                let (i, j) = (start + k, start + k + half);
                let tr = re[j] * wr - im[j] * wi;
                let ti = re[j] * wi + im[j] * wr;
                re[j] = re[i] - tr;
                im[j] = im[i] - ti;
                re[i] += tr;
                im[i] += ti;
            }
        }
        len <<= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Naive O(n^2) DFT, the oracle for the fast path.
    fn dft(signal: &[f64]) -> Vec<(f64, f64)> {
        let n = signal.len();
        (0..n)
            .map(|k| {
                let mut acc = (0.0, 0.0);
                for (t, &x) in signal.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                    acc.0 += x * ang.cos();
                    acc.1 += x * ang.sin();
                }
                acc
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        let mut state = 0x12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64 - 1.0
        };
        let signal: Vec<f64> = (0..64).map(|_| next()).collect();
        let expected = dft(&signal);
        let mut re = signal.clone();
        let mut im = vec![0.0; 64];
        fft_in_place(&mut re, &mut im);
        for k in 0..64 {
            assert!((re[k] - expected[k].0).abs() < 1e-10, "bin {k} re");
            assert!((im[k] - expected[k].1).abs() < 1e-10, "bin {k} im");
        }
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let mut re = vec![0.0f64; 16];
        let mut im = vec![0.0f64; 16];
        re[0] = 1.0;
        fft_in_place(&mut re, &mut im);
        for k in 0..16 {
            assert!((re[k] - 1.0).abs() < 1e-12);
            assert!(im[k].abs() < 1e-12);
        }
    }
}
