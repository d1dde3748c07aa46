//! Smooth dyadic decomposition of grid frequencies: dyadic blocks, low
//! cutoffs, Besov norms, the paraproduct/remainder calculus and Bernstein
//! ratio checks.
//!
//! The radial profile `χ` equals 1 on the ball of radius 3/4, vanishes
//! outside the ball of radius 4/3 and is built from the standard
//! `exp(−1/t)` mollifier, so it is exactly 0/1 outside the transition band.
//! With `φ(r) = χ(r/2) − χ(r)`, the telescoping
//! `χ(r) + Σ_{j≤J} φ(2^{−j} r) = χ(2^{−J−1} r)` is bitwise exact (scaling
//! by powers of two is exact in floating point), which makes the partition
//! of unity on the lattice hold to rounding.

use crate::field::Field;
use crate::grid::Grid;
use crate::norms;
use crate::ops;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DyadicError {
    #[error("block index {j} outside [-1, {jmax}]")]
    BlockOutOfRange { j: i32, jmax: i32 },
    #[error("cutoff index {j} outside [0, {jmax}]")]
    CutoffOutOfRange { j: i32, jmax: i32 },
    #[error("grids do not match")]
    GridMismatch,
}

/// Inner/outer radii of the `χ` transition band.
const CHI_ONE_BELOW: f64 = 0.75;
const CHI_ZERO_ABOVE: f64 = 4.0 / 3.0;

/// Smooth radial cutoff pair `(χ, φ)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CutoffPair;

impl CutoffPair {
    fn bump(t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            (-1.0 / t).exp()
        }
    }

    /// `C^∞` transition from 0 at `t ≤ 0` to 1 at `t ≥ 1`.
    fn smoothstep(t: f64) -> f64 {
        let a = Self::bump(t);
        let b = Self::bump(1.0 - t);
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            1.0
        } else {
            a / (a + b)
        }
    }

    /// Radially nonincreasing profile: 1 on `r ≤ 3/4`, 0 on `r ≥ 4/3`.
    pub fn chi(&self, r: f64) -> f64 {
        let t = (r.abs() - CHI_ONE_BELOW) / (CHI_ZERO_ABOVE - CHI_ONE_BELOW);
        1.0 - Self::smoothstep(t)
    }

    /// Annulus profile `φ(r) = χ(r/2) − χ(r)`, supported in `3/4 ≤ r ≤ 8/3`.
    pub fn phi(&self, r: f64) -> f64 {
        self.chi(r / 2.0) - self.chi(r)
    }
}

/// Lebesgue exponent restricted to the quadratures we ship.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exponent {
    One,
    Two,
    Inf,
}

impl Exponent {
    pub fn value(self) -> f64 {
        match self {
            Exponent::One => 1.0,
            Exponent::Two => 2.0,
            Exponent::Inf => f64::INFINITY,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "1" => Some(Exponent::One),
            "2" => Some(Exponent::Two),
            "inf" | "Inf" | "INF" => Some(Exponent::Inf),
            _ => None,
        }
    }
}

impl std::fmt::Display for Exponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Exponent::One => write!(f, "1"),
            Exponent::Two => write!(f, "2"),
            Exponent::Inf => write!(f, "inf"),
        }
    }
}

/// Besov index `(s, p, r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesovIndex {
    pub s: f64,
    pub p: Exponent,
    pub r: Exponent,
}

impl BesovIndex {
    pub fn new(s: f64, p: Exponent, r: Exponent) -> Self {
        BesovIndex { s, p, r }
    }

    /// The well-posedness condition in dimension 2:
    /// `s > 1 + 2/p`, or `s = 1 + 2/p` with `r = 1`.
    pub fn satisfies_condition_c(&self) -> bool {
        let threshold = 1.0 + 2.0 / self.p.value();
        self.s > threshold || (self.s == threshold && self.r == Exponent::One)
    }
}

/// Precomputed dyadic multiplier tables on a grid's frequencies.
///
/// Immutable after construction; safe to share across workers.
#[derive(Debug, Clone)]
pub struct DyadicLadder {
    grid: Grid,
    cutoffs: CutoffPair,
    jmax: i32,
    /// `phi_tables[j+1]` holds `φ(2^{−j}|k|)`; index 0 holds `χ(|k|)` (j = −1).
    phi_tables: Vec<Vec<f64>>,
    /// `chi_tables[j]` holds `χ(2^{−j}|k|)` for `j ≥ 0` (the `S_j` symbols).
    chi_tables: Vec<Vec<f64>>,
}

impl DyadicLadder {
    pub fn new(grid: Grid) -> Self {
        let cutoffs = CutoffPair;
        let kmax = grid.max_frequency();
        // largest j with 2^j · 3/4 ≤ kmax; the partition is then complete on
        // the whole lattice because kmax < 3/2 · 2^jmax.
        let mut jmax = 0;
        while CHI_ONE_BELOW * 2f64.powi(jmax + 1) <= kmax {
            jmax += 1;
        }
        let radii: Vec<f64> = (0..grid.num_points())
            .map(|idx| {
                let (mx, my) = grid.modes_at(idx);
                grid.wavenumber(mx).hypot(grid.wavenumber(my))
            })
            .collect();
        let mut phi_tables = Vec::with_capacity((jmax + 2) as usize);
        phi_tables.push(radii.iter().map(|&r| cutoffs.chi(r)).collect());
        for j in 0..=jmax {
            let scale = 2f64.powi(-j);
            phi_tables.push(radii.iter().map(|&r| cutoffs.phi(r * scale)).collect());
        }
        let mut chi_tables = Vec::with_capacity((jmax + 1) as usize);
        for j in 0..=jmax {
            let scale = 2f64.powi(-j);
            chi_tables.push(radii.iter().map(|&r| cutoffs.chi(r * scale)).collect());
        }
        DyadicLadder {
            grid,
            cutoffs,
            jmax,
            phi_tables,
            chi_tables,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn jmax(&self) -> i32 {
        self.jmax
    }

    pub fn cutoffs(&self) -> &CutoffPair {
        &self.cutoffs
    }

    fn check_grid(&self, f: &Field) -> Result<(), DyadicError> {
        if f.grid() != self.grid {
            return Err(DyadicError::GridMismatch);
        }
        Ok(())
    }

    fn apply_table(&self, table: &[f64], f: &Field) -> Field {
        let np = self.grid.num_points();
        let mut out: Vec<Complex64> = Vec::with_capacity(f.ncomp() * np);
        for c in 0..f.ncomp() {
            out.extend(f.comp_spectral(c).iter().zip(table).map(|(v, m)| v * *m));
        }
        Field::from_spectral(self.grid, f.ncomp(), out).unwrap()
    }

    /// Dyadic block `Δ_j f` for `−1 ≤ j ≤ jmax`.
    pub fn block(&self, j: i32, f: &Field) -> Result<Field, DyadicError> {
        self.check_grid(f)?;
        if j < -1 || j > self.jmax {
            return Err(DyadicError::BlockOutOfRange { j, jmax: self.jmax });
        }
        Ok(self.apply_table(&self.phi_tables[(j + 1) as usize], f))
    }

    /// Low-frequency cutoff `S_j f = χ(2^{−j}D) f` for `0 ≤ j ≤ jmax`.
    pub fn low_cutoff(&self, j: i32, f: &Field) -> Result<Field, DyadicError> {
        self.check_grid(f)?;
        if j < 0 || j > self.jmax {
            return Err(DyadicError::CutoffOutOfRange { j, jmax: self.jmax });
        }
        Ok(self.apply_table(&self.chi_tables[j as usize], f))
    }

    /// Per-block `L^p` norms `‖Δ_j f‖`, indexed from `j = −1`.
    /// Vector fields take the componentwise maximum.
    pub fn block_norms(&self, f: &Field, p: Exponent) -> Result<Vec<f64>, DyadicError> {
        self.check_grid(f)?;
        let mut out = Vec::with_capacity(self.phi_tables.len());
        for j in -1..=self.jmax {
            let b = self.block(j, f)?;
            let norm = (0..f.ncomp())
                .map(|c| norms::lp_norm(&b.component(c), p.value()))
                .fold(0.0f64, f64::max);
            out.push(norm);
        }
        Ok(out)
    }

    /// Besov norm `(Σ_j 2^{rjs} ‖Δ_j f‖_{L^p}^r)^{1/r}` (sup over `j` when
    /// `r = ∞`), summing from `j = −1` to the ladder top.
    pub fn besov_norm(&self, f: &Field, idx: BesovIndex) -> f64 {
        let block_norms = self.block_norms(f, idx.p).expect("grid mismatch");
        let weighted = block_norms
            .iter()
            .enumerate()
            .map(|(i, norm)| 2f64.powf(idx.s * (i as f64 - 1.0)) * norm);
        match idx.r {
            Exponent::One => weighted.sum(),
            Exponent::Two => weighted.map(|t| t * t).sum::<f64>().sqrt(),
            Exponent::Inf => weighted.fold(0.0, f64::max),
        }
    }

    /// Bony paraproduct `T_u v = Σ_{j≥1} S_{j−1}u · Δ_j v`, products in
    /// physical space under the 2/3 rule.
    pub fn paraproduct(&self, u: &Field, v: &Field) -> Result<Field, DyadicError> {
        self.check_grid(u)?;
        self.check_grid(v)?;
        let np = self.grid.num_points();
        let mut acc = vec![0.0; np];
        for j in 1..=self.jmax {
            let low = self.low_cutoff(j - 1, u)?;
            let blk = self.block(j, v)?;
            for ((a, l), b) in acc.iter_mut().zip(low.comp(0)).zip(blk.comp(0)) {
                *a += l * b;
            }
        }
        let f = Field::from_physical(self.grid, 1, acc).unwrap();
        Ok(ops::dealias(&f))
    }

    /// Bony remainder `R(u, v) = Σ_{|j−j′|≤1} Δ_j u · Δ_{j′} v`.
    pub fn remainder(&self, u: &Field, v: &Field) -> Result<Field, DyadicError> {
        self.check_grid(u)?;
        self.check_grid(v)?;
        let np = self.grid.num_points();
        let blocks_u: Vec<Field> = (-1..=self.jmax)
            .map(|j| self.block(j, u))
            .collect::<Result<_, _>>()?;
        let blocks_v: Vec<Field> = (-1..=self.jmax)
            .map(|j| self.block(j, v))
            .collect::<Result<_, _>>()?;
        let mut acc = vec![0.0; np];
        for (i, bu) in blocks_u.iter().enumerate() {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(blocks_v.len() - 1);
            for bv in &blocks_v[lo..=hi] {
                for ((a, x), y) in acc.iter_mut().zip(bu.comp(0)).zip(bv.comp(0)) {
                    *a += x * y;
                }
            }
        }
        let f = Field::from_physical(self.grid, 1, acc).unwrap();
        Ok(ops::dealias(&f))
    }

    /// Random real field spectrally supported in annulus `j`, unit `L²` norm.
    pub fn random_annulus_field(&self, j: i32, rng: &mut ChaCha8Rng) -> Result<Field, DyadicError> {
        let noise: Vec<f64> = (0..self.grid.num_points())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let white = Field::from_physical(self.grid, 1, noise).unwrap();
        let blocked = self.block(j, &white)?;
        let norm = norms::l2_norm(&blocked);
        Ok(blocked.scale(1.0 / norm.max(f64::MIN_POSITIVE)))
    }

    /// Empirical Bernstein ratios on `trials` random annulus-`j` fields:
    /// `‖∇u‖_{L^p} / (2^j ‖u‖_{L^p})` for `p ∈ {2, ∞}` plus the
    /// low-to-high embedding ratio `‖u‖_{L^∞} / (2^j ‖u‖_{L²})`.
    pub fn bernstein_check(
        &self,
        j: i32,
        trials: usize,
        seed: u64,
    ) -> Result<BernsteinReport, DyadicError> {
        if j < 0 || j > self.jmax {
            return Err(DyadicError::BlockOutOfRange { j, jmax: self.jmax });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 2f64.powi(j);
        let mut report = BernsteinReport::new(j, trials);
        for _ in 0..trials {
            let u = self.random_annulus_field(j, &mut rng)?;
            let grad = ops::gradient(&u);
            let r2 = norms::lp_norm(&grad, 2.0) / (scale * norms::lp_norm(&u, 2.0));
            let rinf =
                norms::lp_norm(&grad, f64::INFINITY) / (scale * norms::lp_norm(&u, f64::INFINITY));
            let emb = norms::lp_norm(&u, f64::INFINITY) / (scale * norms::lp_norm(&u, 2.0));
            report.push(r2, rinf, emb);
        }
        Ok(report)
    }

    /// Test hook: damp one annulus table so partition checks fail loudly.
    /// Used by the self-test fault-injection control.
    #[doc(hidden)]
    pub fn corrupt_table_for_test(&mut self, j: i32) {
        let idx = (j + 1) as usize;
        for v in self.phi_tables[idx].iter_mut() {
            *v *= 0.9;
        }
    }
}

/// Min/max Bernstein ratios observed for one annulus index.
#[derive(Debug, Clone)]
pub struct BernsteinReport {
    pub j: i32,
    pub trials: usize,
    pub p2_min: f64,
    pub p2_max: f64,
    pub pinf_min: f64,
    pub pinf_max: f64,
    pub embed_min: f64,
    pub embed_max: f64,
}

impl BernsteinReport {
    fn new(j: i32, trials: usize) -> Self {
        BernsteinReport {
            j,
            trials,
            p2_min: f64::INFINITY,
            p2_max: 0.0,
            pinf_min: f64::INFINITY,
            pinf_max: 0.0,
            embed_min: f64::INFINITY,
            embed_max: 0.0,
        }
    }

    fn push(&mut self, r2: f64, rinf: f64, emb: f64) {
        self.p2_min = self.p2_min.min(r2);
        self.p2_max = self.p2_max.max(r2);
        self.pinf_min = self.pinf_min.min(rinf);
        self.pinf_max = self.pinf_max.max(rinf);
        self.embed_min = self.embed_min.min(emb);
        self.embed_max = self.embed_max.max(emb);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::{linf_norm, max_diff};

    fn random_band(grid: Grid, kmax: i64, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Field::zeros(grid, 1);
        for _ in 0..30 {
            let mx = rng.gen_range(-kmax..=kmax);
            let my = rng.gen_range(-kmax..=kmax);
            let amp: f64 = rng.gen_range(-1.0..1.0);
            let ph: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            f = f.add(&Field::sample(grid, |x, y| {
                amp * (grid.wavenumber(mx) * x + grid.wavenumber(my) * y + ph).cos()
            }));
        }
        f
    }

    #[test]
    fn chi_profile_support_and_monotonicity() {
        let c = CutoffPair;
        assert_eq!(c.chi(0.0), 1.0);
        assert_eq!(c.chi(0.75), 1.0);
        assert_eq!(c.chi(4.0 / 3.0), 0.0);
        assert_eq!(c.chi(5.0), 0.0);
        let mut prev = 1.0;
        for i in 0..1000 {
            let r = i as f64 * 0.003;
            let v = c.chi(r);
            assert!(v <= prev + 1e-15, "chi not nonincreasing at r={r}");
            prev = v;
        }
        // phi support: [3/4, 8/3]
        assert_eq!(c.phi(0.5), 0.0);
        assert_eq!(c.phi(0.75), 0.0);
        assert!(c.phi(1.0) > 0.0);
        assert!(c.phi(2.0) > 0.0);
        assert_eq!(c.phi(8.0 / 3.0), 0.0);
    }

    #[test]
    fn partition_of_unity_pointwise_on_profiles() {
        let c = CutoffPair;
        let ladder = DyadicLadder::new(Grid::square(64).unwrap());
        let kmax = ladder.grid().max_frequency();
        for i in 0..2000 {
            let r = kmax * i as f64 / 1999.0;
            let mut sum = c.chi(r);
            for j in 0..=ladder.jmax() {
                sum += c.phi(r * 2f64.powi(-j));
            }
            assert!((sum - 1.0).abs() <= 1e-12, "partition off at r={r}: {sum}");
        }
    }

    #[test]
    fn blocks_reconstruct_band_limited_fields() {
        let grid = Grid::square(64).unwrap();
        let ladder = DyadicLadder::new(grid);
        for seed in 0..5 {
            let f = random_band(grid, 20, seed);
            let mut sum = Field::zeros(grid, 1);
            for j in -1..=ladder.jmax() {
                sum = sum.add(&ladder.block(j, &f).unwrap());
            }
            assert!(max_diff(&sum, &f) <= 1e-12 * linf_norm(&f).max(1.0));
        }
    }

    #[test]
    fn blocks_two_apart_are_disjoint() {
        let grid = Grid::square(64).unwrap();
        let ladder = DyadicLadder::new(grid);
        let f = random_band(grid, 20, 42);
        for j in -1..=ladder.jmax() {
            let bj = ladder.block(j, &f).unwrap();
            for j2 in -1..=ladder.jmax() {
                if (j - j2).abs() >= 2 {
                    let b = ladder.block(j2, &bj).unwrap();
                    assert!(linf_norm(&b) <= 1e-12 * linf_norm(&f).max(1.0));
                }
            }
        }
    }

    #[test]
    fn block_of_constant_lives_at_minus_one() {
        let grid = Grid::square(32).unwrap();
        let ladder = DyadicLadder::new(grid);
        let c = Field::sample(grid, |_, _| 3.25);
        let low = ladder.block(-1, &c).unwrap();
        assert!(max_diff(&low, &c) < 1e-12);
        for j in 0..=ladder.jmax() {
            assert!(linf_norm(&ladder.block(j, &c).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn pure_mode_five_touches_blocks_one_and_two() {
        let grid = Grid::square(32).unwrap();
        let ladder = DyadicLadder::new(grid);
        let f = Field::sample(grid, |x, _| (5.0 * x).cos());
        let mut sum = Field::zeros(grid, 1);
        for j in -1..=ladder.jmax() {
            let b = ladder.block(j, &f).unwrap();
            if j == 1 || j == 2 {
                assert!(linf_norm(&b) > 1e-3, "block {j} unexpectedly empty");
            } else {
                assert!(linf_norm(&b) < 1e-12, "block {j} should be empty");
            }
            sum = sum.add(&b);
        }
        assert!(max_diff(&sum, &f) <= 1e-12);
    }

    #[test]
    fn low_cutoff_equals_partial_block_sum() {
        let grid = Grid::square(64).unwrap();
        let ladder = DyadicLadder::new(grid);
        let f = random_band(grid, 20, 9);
        for j in 0..=ladder.jmax() {
            let s = ladder.low_cutoff(j, &f).unwrap();
            let mut sum = Field::zeros(grid, 1);
            for j2 in -1..=(j - 1) {
                sum = sum.add(&ladder.block(j2, &f).unwrap());
            }
            assert!(max_diff(&s, &sum) <= 1e-12 * linf_norm(&f).max(1.0));
        }
    }

    #[test]
    fn block_index_range_enforced() {
        let ladder = DyadicLadder::new(Grid::square(32).unwrap());
        let f = Field::zeros(ladder.grid(), 1);
        assert!(matches!(
            ladder.block(-2, &f),
            Err(DyadicError::BlockOutOfRange { .. })
        ));
        assert!(ladder.block(ladder.jmax() + 1, &f).is_err());
        assert!(matches!(
            ladder.low_cutoff(-1, &f),
            Err(DyadicError::CutoffOutOfRange { .. })
        ));
        let other = Field::zeros(Grid::square(64).unwrap(), 1);
        assert!(matches!(
            ladder.block(0, &other),
            Err(DyadicError::GridMismatch)
        ));
    }

    #[test]
    fn besov_norm_of_constant_is_its_magnitude() {
        let grid = Grid::square(32).unwrap();
        let ladder = DyadicLadder::new(grid);
        let c = Field::sample(grid, |_, _| -2.5);
        for s in [0.0, 1.0, 2.0] {
            for r in [Exponent::One, Exponent::Inf] {
                let idx = BesovIndex::new(s, Exponent::Inf, r);
                let norm = ladder.besov_norm(&c, idx);
                // only Δ₋₁ contributes, with weight 2^{−s}
                let expected = 2f64.powf(-s) * 2.5;
                assert!((norm - expected).abs() < 1e-12, "s={s} norm={norm}");
            }
        }
    }

    #[test]
    fn besov_norm_matches_direct_cutoff_evaluation_for_pure_mode() {
        let grid = Grid::square(64).unwrap();
        let ladder = DyadicLadder::new(grid);
        let f = Field::sample(grid, |x, _| (5.0 * x).cos());
        let idx = BesovIndex::new(1.0, Exponent::Inf, Exponent::One);
        let norm = ladder.besov_norm(&f, idx);
        let c = CutoffPair;
        let mut expected = 0.5 * c.chi(5.0);
        for j in 0..=ladder.jmax() {
            expected += 2f64.powi(j) * c.phi(5.0 * 2f64.powi(-j));
        }
        assert!(
            (norm - expected).abs() <= 1e-12 * expected,
            "norm {norm} vs direct {expected}"
        );
    }

    #[test]
    fn besov_norm_monotone_in_s_for_high_frequency_fields() {
        let grid = Grid::square(64).unwrap();
        let ladder = DyadicLadder::new(grid);
        for seed in 0..5 {
            let raw = random_band(grid, 18, 100 + seed);
            // remove the Δ₋₁ block so every weight 2^{js} has j ≥ 0
            let low = ladder.block(-1, &raw).unwrap();
            let f = raw.sub(&low);
            for r in [Exponent::One, Exponent::Two, Exponent::Inf] {
                let lo = ladder.besov_norm(&f, BesovIndex::new(0.5, Exponent::Inf, r));
                let hi = ladder.besov_norm(&f, BesovIndex::new(1.0, Exponent::Inf, r));
                assert!(lo <= hi * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn condition_c_predicate() {
        assert!(BesovIndex::new(1.0, Exponent::Inf, Exponent::One).satisfies_condition_c());
        assert!(!BesovIndex::new(1.0, Exponent::Inf, Exponent::Two).satisfies_condition_c());
        assert!(BesovIndex::new(1.5, Exponent::Inf, Exponent::Two).satisfies_condition_c());
        assert!(BesovIndex::new(2.0, Exponent::Two, Exponent::One).satisfies_condition_c());
        assert!(!BesovIndex::new(2.0, Exponent::Two, Exponent::Two).satisfies_condition_c());
    }

    #[test]
    fn paraproduct_by_constant_strips_low_blocks() {
        let grid = Grid::square(64).unwrap();
        let ladder = DyadicLadder::new(grid);
        let c = Field::sample(grid, |_, _| 1.7);
        let v = random_band(grid, 18, 5);
        let t = ladder.paraproduct(&c, &v).unwrap();
        let expected = v
            .sub(&ladder.block(-1, &v).unwrap())
            .sub(&ladder.block(0, &v).unwrap())
            .scale(1.7);
        assert!(max_diff(&t, &expected) <= 1e-12 * linf_norm(&expected).max(1.0));
    }

    #[test]
    fn bony_decomposition_reconstructs_products() {
        let grid = Grid::square(64).unwrap();
        let ladder = DyadicLadder::new(grid);
        for seed in 0..5 {
            let u = random_band(grid, 20, 200 + seed);
            let v = random_band(grid, 20, 300 + seed);
            let sum = ladder
                .paraproduct(&u, &v)
                .unwrap()
                .add(&ladder.paraproduct(&v, &u).unwrap())
                .add(&ladder.remainder(&u, &v).unwrap());
            let product = ops::dealiased_product(&u, &v);
            assert!(
                max_diff(&sum, &product) <= 1e-10 * linf_norm(&product).max(1.0),
                "Bony identity violated (seed {seed})"
            );
        }
    }

    #[test]
    fn bernstein_ratio_is_one_for_pure_sine() {
        let grid = Grid::square(64).unwrap();
        // u = sin(2^j x): |∇u| = 2^j |cos|, so the L² ratio is exactly 1
        for j in [2, 3] {
            let f = Field::sample(grid, |x, _| (2f64.powi(j) * x).sin());
            let grad = ops::gradient(&f);
            let ratio = norms::lp_norm(&grad, 2.0) / (2f64.powi(j) * norms::lp_norm(&f, 2.0));
            assert!((ratio - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bernstein_ratios_stable_across_annuli() {
        let grid = Grid::square(64).unwrap();
        let ladder = DyadicLadder::new(grid);
        let mut all_min = f64::INFINITY;
        let mut all_max: f64 = 0.0;
        for j in 2..ladder.jmax() {
            let rep = ladder.bernstein_check(j, 20, 7000 + j as u64).unwrap();
            all_min = all_min.min(rep.p2_min);
            all_max = all_max.max(rep.p2_max);
        }
        assert!(
            all_max / all_min < 4.0,
            "L² Bernstein spread too wide: [{all_min}, {all_max}]"
        );
    }

    #[test]
    fn corrupted_table_breaks_partition() {
        let grid = Grid::square(32).unwrap();
        let mut ladder = DyadicLadder::new(grid);
        ladder.corrupt_table_for_test(1);
        let f = Field::sample(grid, |x, _| (3.0 * x).cos());
        let mut sum = Field::zeros(grid, 1);
        for j in -1..=ladder.jmax() {
            sum = sum.add(&ladder.block(j, &f).unwrap());
        }
        assert!(max_diff(&sum, &f) > 1e-3);
    }
}
