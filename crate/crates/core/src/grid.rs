//! Uniform periodic sampling grid with Fourier-mode bookkeeping.

use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid size must be even, got {0}")]
    OddSize(usize),
    #[error("grid size must be at least 16, got {0}")]
    TooSmall(usize),
    #[error("domain period must be positive and finite, got {0}")]
    BadLength(f64),
}

/// Uniform `n × n` grid on the periodic square `[0, L)²`.
///
/// Samples live at `x = (i·L/n, j·L/n)`. The integer frequency lattice is
/// `{−n/2, …, n/2−1}²`, scaled by `2π/L`; the Nyquist row/column `m = −n/2`
/// is zeroed by every derivative operator so that real fields stay real.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self, GridError> {
        if n % 2 != 0 {
            return Err(GridError::OddSize(n));
        }
        if n < 16 {
            return Err(GridError::TooSmall(n));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(GridError::BadLength(length));
        }
        Ok(Grid { n, length })
    }

    /// Grid with the default period `L = 2π`, giving integer wavenumbers.
    pub fn square(n: usize) -> Result<Self, GridError> {
        Grid::new(n, 2.0 * PI)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.length
    }

    #[inline]
    pub fn num_points(&self) -> usize {
        self.n * self.n
    }

    /// Sample spacing `h = L/n`.
    #[inline]
    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Quadrature weight of one sample, `h²`.
    #[inline]
    pub fn cell_area(&self) -> f64 {
        let h = self.spacing();
        h * h
    }

    /// Signed integer mode for storage index `i` along one axis.
    #[inline]
    pub fn mode(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i <= n / 2 - 1 {
            i
        } else {
            i - n
        }
    }

    /// Physical wavenumber `2π m / L`.
    #[inline]
    pub fn wavenumber(&self, m: i64) -> f64 {
        2.0 * PI * m as f64 / self.length
    }

    #[inline]
    pub fn is_nyquist(&self, m: i64) -> bool {
        m == -((self.n / 2) as i64)
    }

    /// Largest integer mode kept by the 2/3 dealiasing rule.
    #[inline]
    pub fn dealias_mode(&self) -> i64 {
        (self.n / 3) as i64
    }

    /// Largest wavenumber magnitude present on the lattice (corner mode).
    pub fn max_frequency(&self) -> f64 {
        let m = self.n as f64 / 2.0;
        self.wavenumber(1) * m * std::f64::consts::SQRT_2
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.n + ix
    }

    /// Physical coordinates of sample `(ix, iy)`.
    #[inline]
    pub fn point(&self, ix: usize, iy: usize) -> (f64, f64) {
        let h = self.spacing();
        (ix as f64 * h, iy as f64 * h)
    }

    /// Iterate over `(index, kx, ky)` for every lattice point, with the
    /// Nyquist convention applied by the caller.
    pub fn wavenumbers(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let n = self.n;
        (0..n * n).map(move |idx| {
            let mx = self.mode(idx % n);
            let my = self.mode(idx / n);
            (idx, self.wavenumber(mx), self.wavenumber(my))
        })
    }

    /// Integer modes `(mx, my)` for a spectral storage index.
    #[inline]
    pub fn modes_at(&self, idx: usize) -> (i64, i64) {
        (self.mode(idx % self.n), self.mode(idx / self.n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_small_and_bad_length() {
        assert_eq!(Grid::new(17, 1.0).unwrap_err(), GridError::OddSize(17));
        assert_eq!(Grid::new(8, 1.0).unwrap_err(), GridError::TooSmall(8));
        assert_eq!(Grid::new(16, 0.0).unwrap_err(), GridError::BadLength(0.0));
        assert!(Grid::new(16, f64::NAN).is_err());
    }

    #[test]
    fn mode_lattice_covers_expected_range() {
        let g = Grid::square(16).unwrap();
        let modes: Vec<i64> = (0..16).map(|i| g.mode(i)).collect();
        assert_eq!(modes[0], 0);
        assert_eq!(modes[7], 7);
        assert_eq!(modes[8], -8);
        assert_eq!(modes[15], -1);
        assert!(g.is_nyquist(-8));
        assert!(!g.is_nyquist(7));
    }

    #[test]
    fn wavenumber_scaling_follows_period() {
        let g = Grid::new(32, PI).unwrap();
        assert!((g.wavenumber(1) - 2.0).abs() < 1e-15);
        let g2 = Grid::square(32).unwrap();
        assert!((g2.wavenumber(5) - 5.0).abs() < 1e-15);
    }
}
