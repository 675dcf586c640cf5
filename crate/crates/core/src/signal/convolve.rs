use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::scalar::Scalar;

/// Full linear convolution, `len(x) + len(h) - 1` samples, by definition.
pub fn convolve_direct<T: Scalar>(x: &[T], h: &[T]) -> Vec<T> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut y = vec![T::zero(); x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        for (k, &hk) in h.iter().enumerate() {
            y[i + k] += xi * hk;
        }
    }
    y
}

/// Full linear convolution; FFT-based for long inputs.
pub fn convolve_full<T: Scalar>(x: &[T], h: &[T]) -> Vec<T> {
    if x.len().min(h.len()) <= 64 {
        return convolve_direct(x, h);
    }
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<T>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let spectrum = |s: &[T]| {
        let mut v: Vec<Complex<T>> = s.iter().map(|&r| Complex::new(r, T::zero())).collect();
        v.resize(n, Complex::new(T::zero(), T::zero()));
        fwd.process(&mut v);
        v
    };
    let mut a = spectrum(x);
    let b = spectrum(h);
    for (p, q) in a.iter_mut().zip(&b) {
        *p = *p * *q;
    }
    inv.process(&mut a);
    let scale = T::one() / T::of(n as f64);
    a[..out_len].iter().map(|c| c.re * scale).collect()
}
