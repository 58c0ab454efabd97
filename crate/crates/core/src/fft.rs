//! Thin FFT layer over `rustfft` for the convolution-based operators.
//!
//! All fast multiplies in the crate reduce to length-L circular
//! convolutions/correlations with L a power of two chosen large enough
//! that zero padding prevents wraparound.

use std::sync::Mutex;

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rustfft::FftPlanner;

static PLANNER: Lazy<Mutex<FftPlanner<f64>>> = Lazy::new(|| Mutex::new(FftPlanner::new()));

/// Smallest power of two >= n.
pub fn fft_len(n: usize) -> usize {
    n.next_power_of_two()
}

/// Forward FFT of a real sequence zero-padded to `len` (must be a power of two).
pub fn forward(x: &[f64], len: usize) -> Vec<Complex64> {
    debug_assert!(len.is_power_of_two() && len >= x.len());
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    let fft = PLANNER.lock().unwrap().plan_fft_forward(len);
    fft.process(&mut buf);
    buf
}

/// Inverse FFT returning real parts, normalized by 1/len.
pub fn inverse(mut spec: Vec<Complex64>) -> Vec<f64> {
    let len = spec.len();
    let ifft = PLANNER.lock().unwrap().plan_fft_inverse(len);
    ifft.process(&mut spec);
    let scale = 1.0 / len as f64;
    spec.iter().map(|c| c.re * scale).collect()
}

/// Circular convolution in the frequency domain: `ifft(a_spec ∘ fft(b))`.
pub fn convolve_spec(a_spec: &[Complex64], b: &[f64]) -> Vec<f64> {
    let len = a_spec.len();
    let mut b_spec = forward(b, len);
    for (bs, a) in b_spec.iter_mut().zip(a_spec) {
        *bs *= a;
    }
    inverse(b_spec)
}

/// Circular correlation: `ifft(conj(a_spec) ∘ fft(b))`, so entry m equals
/// `Σ_k a[k] b[(k+m) mod L]`.
pub fn correlate_spec(a_spec: &[Complex64], b: &[f64]) -> Vec<f64> {
    let len = a_spec.len();
    let mut b_spec = forward(b, len);
    for (bs, a) in b_spec.iter_mut().zip(a_spec) {
        *bs *= a.conj();
    }
    inverse(b_spec)
}
