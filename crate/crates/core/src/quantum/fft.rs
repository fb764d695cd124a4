//! Iterative radix-2 FFT for power-of-two grids.
//!
//! Self-contained so that runs are bitwise deterministic in serial mode.
//! Forward transform uses the `e^{-i 2π jk/N}` kernel; the inverse is
//! normalized by `1/N`.

use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    /// Twiddles `e^{-i 2π k / N}` for `k < N/2`.
    twiddles: Vec<Complex64>,
}

impl Fft {
    /// `n` must be a power of two.
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 2, "FFT size must be a power of two");
        let twiddles = (0..n / 2)
            .map(|k| {
                let angle = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
                Complex64::new(angle.cos(), angle.sin())
            })
            .collect();
        Fft { n, twiddles }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, true);
        let scale = 1.0 / self.n as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        assert_eq!(data.len(), n);

        // bit-reversal permutation
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                data.swap(i, j);
            }
        }

        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let a = data[start + k];
                    let b = data[start + k + half] * w;
                    data[start + k] = a + b;
                    data[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

/// Momentum value of FFT bin `k` on a periodic box of length `l`.
pub fn momentum(k: usize, n: usize, l: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    if k < n / 2 {
        two_pi * k as f64 / l
    } else {
        two_pi * (k as f64 - n as f64) / l
    }
}
