//! Initial data recipes.
//!
//! `taylor_green` gives the reproducible cellular baseline at amplitude
//! `init.u_amp`; `random_band` draws a divergence-free velocity from
//! independent complex Gaussian stream-function modes in the annulus
//! `kmin ≤ |m| ≤ kmax`, Hermitian-symmetrized for realness and normalized
//! so that `‖ω₀‖_{B⁰_{∞,1}} + ‖u₀‖_{L²}` equals `init.u_amp`.
//!
//! The heterogeneity profile (cellular for `taylor_green`, a random band
//! otherwise) is unit-normalized in `B¹_{∞,1}` and scaled by `init.b_amp`,
//! so `‖b₀‖_{B¹_{∞,1}} = η` with `a = 1 + b`.

use crate::config::{ExperimentConfig, InitProfile};
use crate::dyadic::{BesovIndex, DyadicLadder, Exponent};
use crate::field::Field;
use crate::grid::Grid;
use crate::norms;
use crate::ops;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

pub struct InitialData {
    pub a: Field,
    pub u: Field,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u1.ln()).sqrt() * u2.cos()
}

/// Random real scalar field with independent complex Gaussian coefficients
/// on the annulus `kmin ≤ |m| ≤ kmax`, mean zero, unnormalized.
pub fn random_band_scalar(grid: Grid, kmin: i64, kmax: i64, seed: u64) -> Field {
    let n = grid.n();
    let np = grid.num_points();
    let mut spec = vec![Complex64::default(); np];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = np as f64;
    for my in -kmax..=kmax {
        for mx in -kmax..=kmax {
            // fill one representative of each ±m pair
            if my < 0 || (my == 0 && mx <= 0) {
                continue;
            }
            let r2 = mx * mx + my * my;
            if r2 < kmin * kmin || r2 > kmax * kmax {
                continue;
            }
            let c = Complex64::new(gaussian(&mut rng), gaussian(&mut rng));
            let idx_pos = grid.index(
                mx.rem_euclid(n as i64) as usize,
                my.rem_euclid(n as i64) as usize,
            );
            let idx_neg = grid.index(
                (-mx).rem_euclid(n as i64) as usize,
                (-my).rem_euclid(n as i64) as usize,
            );
            spec[idx_pos] = c * scale;
            spec[idx_neg] = c.conj() * scale;
        }
    }
    Field::from_spectral(grid, 1, spec).unwrap()
}

/// Divergence-free velocity for the configured profile, at the
/// designated amplitude.
pub fn velocity(cfg: &ExperimentConfig, ladder: &DyadicLadder) -> Field {
    let grid = ladder.grid();
    match cfg.init_profile {
        InitProfile::TaylorGreen => {
            let k = grid.wavenumber(1);
            let amp = cfg.init_u_amp;
            Field::sample_vector(grid, move |x, y| {
                (
                    amp * (k * x).sin() * (k * y).cos(),
                    -amp * (k * x).cos() * (k * y).sin(),
                )
            })
        }
        InitProfile::RandomBand => {
            let psi = random_band_scalar(grid, cfg.init_kmin, cfg.init_kmax, cfg.init_seed);
            let g = ops::gradient(&psi);
            let u = Field::from_components(&g.component(1), &g.component(0).scale(-1.0)).unwrap();
            if cfg.init_u_amp == 0.0 {
                return Field::zeros(grid, 2);
            }
            let omega = ops::curl(&u);
            let b0 = BesovIndex::new(0.0, Exponent::Inf, Exponent::One);
            let designated = ladder.besov_norm(&omega, b0) + norms::l2_norm(&u);
            u.scale(cfg.init_u_amp / designated.max(f64::MIN_POSITIVE))
        }
    }
}

/// Heterogeneity `b = a − 1`, normalized so `‖b‖_{B¹_{∞,1}} = init.b_amp`.
pub fn b_field(cfg: &ExperimentConfig, ladder: &DyadicLadder) -> Field {
    let grid = ladder.grid();
    if cfg.init_b_amp == 0.0 {
        return Field::zeros(grid, 1);
    }
    let profile = match cfg.init_profile {
        InitProfile::TaylorGreen => {
            let k = grid.wavenumber(1);
            Field::sample(grid, move |x, y| (k * x).cos() * (k * y).cos())
        }
        InitProfile::RandomBand => {
            random_band_scalar(grid, cfg.init_kmin, cfg.init_kmax, cfg.init_seed ^ 0x5eed)
        }
    };
    let b1 = BesovIndex::new(1.0, Exponent::Inf, Exponent::One);
    let norm = ladder.besov_norm(&profile, b1);
    profile.scale(cfg.init_b_amp / norm.max(f64::MIN_POSITIVE))
}

/// Assemble `(a, u)` from the configuration.
pub fn build(cfg: &ExperimentConfig, ladder: &DyadicLadder) -> InitialData {
    let b = b_field(cfg, ladder);
    let a = b.map(|v| 1.0 + v);
    let u = velocity(cfg, ladder);
    InitialData { a, u }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ladder_for(n: usize) -> DyadicLadder {
        DyadicLadder::new(Grid::square(n).unwrap())
    }

    #[test]
    fn taylor_green_has_requested_amplitude_and_no_divergence() {
        let ladder = ladder_for(64);
        let cfg = ExperimentConfig {
            init_u_amp: 0.7,
            ..ExperimentConfig::default()
        };
        let u = velocity(&cfg, &ladder);
        let (dmax, gmax) = ops::divergence_residual(&u);
        assert!(dmax <= 1e-10 * gmax.max(1.0));
        assert!((norms::linf_norm(&u) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn random_band_hits_designated_norm_and_band() {
        let ladder = ladder_for(64);
        let cfg = ExperimentConfig {
            init_profile: InitProfile::RandomBand,
            init_kmin: 2,
            init_kmax: 6,
            init_u_amp: 0.5,
            init_seed: 42,
            ..ExperimentConfig::default()
        };
        let u = velocity(&cfg, &ladder);
        let omega = ops::curl(&u);
        let b0 = BesovIndex::new(0.0, Exponent::Inf, Exponent::One);
        let designated = ladder.besov_norm(&omega, b0) + norms::l2_norm(&u);
        assert!((designated - 0.5).abs() < 1e-10);
        let (dmax, gmax) = ops::divergence_residual(&u);
        assert!(dmax <= 1e-10 * gmax.max(1.0));
        // spectral support respects the band
        let grid = ladder.grid();
        for (idx, v) in omega.spectral().iter().enumerate() {
            let (mx, my) = grid.modes_at(idx);
            let r2 = mx * mx + my * my;
            if v.norm() > 1e-9 {
                assert!(r2 >= 4 && r2 <= 36, "mode ({mx},{my}) outside band");
            }
        }
        // determinism
        let u2 = velocity(&cfg, &ladder);
        assert_eq!(u.physical(), u2.physical());
    }

    #[test]
    fn b_field_normalized_in_besov_one() {
        let ladder = ladder_for(64);
        for profile in [InitProfile::TaylorGreen, InitProfile::RandomBand] {
            let cfg = ExperimentConfig {
                init_profile: profile,
                init_b_amp: 0.2,
                init_seed: 3,
                ..ExperimentConfig::default()
            };
            let b = b_field(&cfg, &ladder);
            let b1 = BesovIndex::new(1.0, Exponent::Inf, Exponent::One);
            let norm = ladder.besov_norm(&b, b1);
            assert!((norm - 0.2).abs() < 1e-10, "{profile:?}: {norm}");
            // density stays well away from vacuum
            let a = b.map(|v| 1.0 + v);
            let amin = a.physical().iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(amin > 0.5);
        }
    }

    #[test]
    fn zero_amplitudes_give_rest_homogeneous_state() {
        let ladder = ladder_for(32);
        let cfg = ExperimentConfig {
            init_u_amp: 0.0,
            init_b_amp: 0.0,
            init_profile: InitProfile::RandomBand,
            ..ExperimentConfig::default()
        };
        let data = build(&cfg, &ladder);
        assert_eq!(norms::linf_norm(&data.u), 0.0);
        assert!(data.a.physical().iter().all(|&v| v == 1.0));
    }
}
