//! Thin 2-D FFT layer over `rustfft`.
//!
//! Forward transforms are unnormalised; the inverse divides by `n²`, so
//! `inverse ∘ forward` is the identity. Plans are cached per thread.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        cell.borrow_mut()
            .entry((n, forward))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                let dir = if forward {
                    FftDirection::Forward
                } else {
                    FftDirection::Inverse
                };
                planner.plan_fft(n, dir)
            })
            .clone()
    })
}

fn transpose(n: usize, src: &[Complex64], dst: &mut [Complex64]) {
    for iy in 0..n {
        for ix in 0..n {
            dst[ix * n + iy] = src[iy * n + ix];
        }
    }
}

fn fft2_in_place(n: usize, data: &mut [Complex64], forward: bool) {
    debug_assert_eq!(data.len(), n * n);
    let fft = plan(n, forward);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(n) {
        fft.process_with_scratch(row, &mut scratch);
    }
    let mut tmp = vec![Complex64::default(); n * n];
    transpose(n, data, &mut tmp);
    for row in tmp.chunks_exact_mut(n) {
        fft.process_with_scratch(row, &mut scratch);
    }
    transpose(n, &tmp, data);
}

/// Unnormalised forward 2-D DFT of one real component.
pub fn forward(n: usize, physical: &[f64]) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = physical.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_in_place(n, &mut data, true);
    data
}

/// Inverse 2-D DFT divided by `n²`; the imaginary residue of a Hermitian
/// spectrum is dropped.
pub fn inverse(n: usize, spectral: &[Complex64]) -> Vec<f64> {
    let mut data = spectral.to_vec();
    fft2_in_place(n, &mut data, false);
    let scale = 1.0 / (n * n) as f64;
    data.iter().map(|c| c.re * scale).collect()
}
