//! Fitted-constant checks for the paraproduct and composition bounds, and
//! the brute-force paraproduct oracle computed without any FFT.

use ddeuler::dyadic::{BesovIndex, CutoffPair, DyadicLadder, Exponent};
use ddeuler::field::Field;
use ddeuler::grid::Grid;
use ddeuler::init;
use ddeuler::norms;
use ddeuler::ops;
use rustfft::num_complex::Complex64;

fn band_field(grid: Grid, kmax: i64, seed: u64) -> Field {
    let f = init::random_band_scalar(grid, 1, kmax, seed);
    f.scale(1.0 / norms::linf_norm(&f).max(1e-300))
}

/// `‖T_u v‖_{B^s} ≤ C ‖u‖_{L^∞} ‖v‖_{B^s}`: the fitted constant stays
/// under a cap pinned at calibration time (measured max ≈ its half).
#[test]
fn paraproduct_operator_bound_fitted_constant() {
    let grid = Grid::square(64).unwrap();
    let ladder = DyadicLadder::new(grid);
    let idx = BesovIndex::new(1.0, Exponent::Inf, Exponent::One);
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let u = band_field(grid, 18, 1_000 + seed);
        let v = band_field(grid, 18, 2_000 + seed);
        let t = ladder.paraproduct(&u, &v).unwrap();
        let ratio =
            ladder.besov_norm(&t, idx) / (norms::linf_norm(&u) * ladder.besov_norm(&v, idx));
        worst = worst.max(ratio);
    }
    assert!(
        worst < 3.0,
        "paraproduct bound constant {worst:.3} above the calibrated cap"
    );
}

/// Composition with `F = log` on densities bounded away from vacuum:
/// `‖∇ log a‖_{B^{s−1}} ≤ C ‖∇a‖_{B^{s−1}}` with a uniform fitted C.
#[test]
fn composition_bound_for_log_density() {
    let grid = Grid::square(64).unwrap();
    let ladder = DyadicLadder::new(grid);
    let idx = BesovIndex::new(0.0, Exponent::Inf, Exponent::One);
    let mut worst: f64 = 0.0;
    for seed in 0..30 {
        // densities confined to [0.6, 1.4]
        let a = band_field(grid, 10, 3_000 + seed).map(|v| 1.0 + 0.4 * v);
        let log_a = a.map(f64::ln);
        let num = {
            let g = ops::gradient(&log_a);
            (0..2)
                .map(|c| ladder.besov_norm(&g.component(c), idx))
                .fold(0.0f64, f64::max)
        };
        let den = {
            let g = ops::gradient(&a);
            (0..2)
                .map(|c| ladder.besov_norm(&g.component(c), idx))
                .fold(0.0f64, f64::max)
        };
        worst = worst.max(num / den);
    }
    assert!(
        worst < 4.0,
        "composition constant {worst:.3} above the calibrated cap"
    );
}

/// Direct double-sum oracle for the paraproduct on the smallest legal
/// grid: blocks evaluated by naive DFT (no FFT anywhere), cutoffs from the
/// profile itself, products summed pointwise.
#[test]
fn paraproduct_matches_bruteforce_block_sum() {
    let n = 16usize;
    let grid = Grid::square(n).unwrap();
    let ladder = DyadicLadder::new(grid);
    let cut = CutoffPair;

    let u = band_field(grid, 5, 77);
    let v = band_field(grid, 5, 78);

    // naive forward DFT
    let dft = |f: &Field| -> Vec<Complex64> {
        let phys = f.physical();
        let mut out = vec![Complex64::default(); n * n];
        for my in 0..n {
            for mx in 0..n {
                let mut acc = Complex64::default();
                for iy in 0..n {
                    for ix in 0..n {
                        let (x, y) = grid.point(ix, iy);
                        let kx = grid.wavenumber(grid.mode(mx));
                        let ky = grid.wavenumber(grid.mode(my));
                        let phase = -(kx * x + ky * y);
                        acc += phys[grid.index(ix, iy)] * Complex64::new(phase.cos(), phase.sin());
                    }
                }
                out[my * n + mx] = acc;
            }
        }
        out
    };
    // naive inverse with a spectral multiplier
    let inverse_with = |spec: &[Complex64], mult: &dyn Fn(f64) -> f64| -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for iy in 0..n {
            for ix in 0..n {
                let (x, y) = grid.point(ix, iy);
                let mut acc = Complex64::default();
                for my in 0..n {
                    for mx in 0..n {
                        let kx = grid.wavenumber(grid.mode(mx));
                        let ky = grid.wavenumber(grid.mode(my));
                        let r = kx.hypot(ky);
                        let phase = kx * x + ky * y;
                        acc +=
                            spec[my * n + mx] * mult(r) * Complex64::new(phase.cos(), phase.sin());
                    }
                }
                out[grid.index(ix, iy)] = acc.re / (n * n) as f64;
            }
        }
        out
    };

    let su = dft(&u);
    let sv = dft(&v);
    let mut acc = vec![0.0; n * n];
    for j in 1..=ladder.jmax() {
        let scale_j = 2f64.powi(-j);
        let scale_low = 2f64.powi(-(j - 1));
        let low = inverse_with(&su, &|r| cut.chi(r * scale_low));
        let blk = inverse_with(&sv, &|r| cut.phi(r * scale_j));
        for i in 0..n * n {
            acc[i] += low[i] * blk[i];
        }
    }
    // same 2/3 truncation as the library applies
    let kd = grid.dealias_mode();
    let spec_acc = dft(&Field::from_physical(grid, 1, acc).unwrap());
    let brute = inverse_with(&spec_acc, &|_| 1.0);
    let mut brute_dealias = vec![0.0; n * n];
    {
        let spec = dft(&Field::from_physical(grid, 1, brute).unwrap());
        let masked: Vec<Complex64> = spec
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let (mx, my) = grid.modes_at(idx);
                if mx.abs() > kd || my.abs() > kd {
                    Complex64::default()
                } else {
                    *c
                }
            })
            .collect();
        let f = inverse_with(&masked, &|_| 1.0);
        brute_dealias.copy_from_slice(&f);
    }

    let fast = ladder.paraproduct(&u, &v).unwrap();
    let mut worst: f64 = 0.0;
    for (a, b) in fast.physical().iter().zip(&brute_dealias) {
        worst = worst.max((a - b).abs());
    }
    assert!(
        worst <= 1e-11,
        "brute-force oracle disagrees with the ladder paraproduct by {worst:.3e}"
    );
}
