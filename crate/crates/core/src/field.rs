//! Scalar and vector sampled fields with a lazily synchronised
//! physical/spectral representation pair, plus the FLD1 file format.

use crate::fft;
use crate::grid::Grid;
use rustfft::num_complex::Complex64;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("component count must be 1 or 2, got {0}")]
    BadComponents(usize),
    #[error("data length {got} does not match {want} for this grid")]
    BadLength { got: usize, want: usize },
    #[error("grids do not match")]
    GridMismatch,
    #[error("FLD1 header malformed: {0}")]
    BadHeader(String),
    #[error("FLD1 payload truncated")]
    Truncated,
    #[error("only square grids are supported, got {nx}x{ny}")]
    NotSquare { nx: usize, ny: usize },
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sampled field on a [`Grid`], scalar (`ncomp = 1`) or vector (`ncomp = 2`).
///
/// Storage is component-major, row-major within a component: the sample at
/// `(ix, iy)` of component `c` sits at `c·n² + iy·n + ix`. Whichever
/// representation a constructor did not receive is computed on first access
/// and cached; a `Field` is immutable afterwards, so sharing across workers
/// is safe.
#[derive(Debug)]
pub struct Field {
    grid: Grid,
    ncomp: usize,
    physical: OnceLock<Vec<f64>>,
    spectral: OnceLock<Vec<Complex64>>,
}

impl Clone for Field {
    fn clone(&self) -> Self {
        Field {
            grid: self.grid,
            ncomp: self.ncomp,
            physical: self.physical.clone(),
            spectral: self.spectral.clone(),
        }
    }
}

impl Field {
    fn check(grid: Grid, ncomp: usize, len: usize) -> Result<(), FieldError> {
        if ncomp != 1 && ncomp != 2 {
            return Err(FieldError::BadComponents(ncomp));
        }
        let want = ncomp * grid.num_points();
        if len != want {
            return Err(FieldError::BadLength { got: len, want });
        }
        Ok(())
    }

    pub fn from_physical(grid: Grid, ncomp: usize, data: Vec<f64>) -> Result<Self, FieldError> {
        Self::check(grid, ncomp, data.len())?;
        let physical = OnceLock::new();
        physical.set(data).unwrap();
        Ok(Field {
            grid,
            ncomp,
            physical,
            spectral: OnceLock::new(),
        })
    }

    pub fn from_spectral(
        grid: Grid,
        ncomp: usize,
        data: Vec<Complex64>,
    ) -> Result<Self, FieldError> {
        Self::check(grid, ncomp, data.len())?;
        let spectral = OnceLock::new();
        spectral.set(data).unwrap();
        Ok(Field {
            grid,
            ncomp,
            physical: OnceLock::new(),
            spectral,
        })
    }

    pub fn zeros(grid: Grid, ncomp: usize) -> Self {
        Field::from_physical(grid, ncomp, vec![0.0; ncomp * grid.num_points()]).unwrap()
    }

    /// Scalar field built by sampling `f(x, y)` on the grid.
    pub fn sample(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let mut data = vec![0.0; grid.num_points()];
        for iy in 0..n {
            for ix in 0..n {
                let (x, y) = grid.point(ix, iy);
                data[grid.index(ix, iy)] = f(x, y);
            }
        }
        Field::from_physical(grid, 1, data).unwrap()
    }

    /// Vector field built by sampling `(f₁, f₂)(x, y)` on the grid.
    pub fn sample_vector(grid: Grid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let n = grid.n();
        let np = grid.num_points();
        let mut data = vec![0.0; 2 * np];
        for iy in 0..n {
            for ix in 0..n {
                let (x, y) = grid.point(ix, iy);
                let (u, v) = f(x, y);
                data[grid.index(ix, iy)] = u;
                data[np + grid.index(ix, iy)] = v;
            }
        }
        Field::from_physical(grid, 2, data).unwrap()
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn is_scalar(&self) -> bool {
        self.ncomp == 1
    }

    /// Physical samples, computed from the spectral side on first access.
    pub fn physical(&self) -> &[f64] {
        self.physical.get_or_init(|| {
            let spec = self
                .spectral
                .get()
                .expect("field constructed with neither representation");
            let n = self.grid.n();
            let np = self.grid.num_points();
            let mut out = Vec::with_capacity(self.ncomp * np);
            for c in 0..self.ncomp {
                out.extend(fft::inverse(n, &spec[c * np..(c + 1) * np]));
            }
            out
        })
    }

    /// Spectral coefficients, computed from the physical side on first access.
    pub fn spectral(&self) -> &[Complex64] {
        self.spectral.get_or_init(|| {
            let phys = self
                .physical
                .get()
                .expect("field constructed with neither representation");
            let n = self.grid.n();
            let np = self.grid.num_points();
            let mut out = Vec::with_capacity(self.ncomp * np);
            for c in 0..self.ncomp {
                out.extend(fft::forward(n, &phys[c * np..(c + 1) * np]));
            }
            out
        })
    }

    /// Physical samples of one component.
    pub fn comp(&self, c: usize) -> &[f64] {
        assert!(c < self.ncomp, "component {c} out of range");
        let np = self.grid.num_points();
        &self.physical()[c * np..(c + 1) * np]
    }

    /// Spectral coefficients of one component.
    pub fn comp_spectral(&self, c: usize) -> &[Complex64] {
        assert!(c < self.ncomp, "component {c} out of range");
        let np = self.grid.num_points();
        &self.spectral()[c * np..(c + 1) * np]
    }

    /// One component as a standalone scalar field.
    pub fn component(&self, c: usize) -> Field {
        Field::from_physical(self.grid, 1, self.comp(c).to_vec()).unwrap()
    }

    /// Assemble a vector field from two scalar components.
    pub fn from_components(u: &Field, v: &Field) -> Result<Field, FieldError> {
        if u.grid != v.grid {
            return Err(FieldError::GridMismatch);
        }
        let mut data = u.physical().to_vec();
        data.extend_from_slice(v.physical());
        Field::from_physical(u.grid, 2, data)
    }

    /// Mean of one component over the torus.
    pub fn mean(&self, c: usize) -> f64 {
        let vals = self.comp(c);
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    /// Pointwise map of a scalar field.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_physical(
            self.grid,
            self.ncomp,
            self.physical().iter().map(|&v| f(v)).collect(),
        )
        .unwrap()
    }

    /// `self + alpha * other`, matching layouts.
    pub fn axpy(&self, alpha: f64, other: &Field) -> Field {
        assert_eq!(self.grid, other.grid);
        assert_eq!(self.ncomp, other.ncomp);
        let data = self
            .physical()
            .iter()
            .zip(other.physical())
            .map(|(a, b)| a + alpha * b)
            .collect();
        Field::from_physical(self.grid, self.ncomp, data).unwrap()
    }

    pub fn scale(&self, alpha: f64) -> Field {
        self.map(|v| alpha * v)
    }

    /// Evaluate the trigonometric interpolant on a `factor`-times finer
    /// grid by zero-padding the spectrum. The source Nyquist bin is
    /// dropped. Used for interpolant-aware range checks.
    pub fn oversampled(&self, factor: usize) -> Field {
        assert!(factor >= 1);
        if factor == 1 {
            return self.clone();
        }
        let grid = self.grid;
        let n = grid.n();
        let big = Grid::new(n * factor, grid.length()).unwrap();
        let nb = big.n();
        let np_big = big.num_points();
        let scale = (factor * factor) as f64;
        let mut out = vec![Complex64::default(); self.ncomp * np_big];
        for c in 0..self.ncomp {
            let spec = self.comp_spectral(c);
            for (idx, v) in spec.iter().enumerate() {
                let (mx, my) = grid.modes_at(idx);
                if grid.is_nyquist(mx) || grid.is_nyquist(my) {
                    continue;
                }
                let bx = if mx >= 0 {
                    mx as usize
                } else {
                    (mx + nb as i64) as usize
                };
                let by = if my >= 0 {
                    my as usize
                } else {
                    (my + nb as i64) as usize
                };
                out[c * np_big + by * nb + bx] = v * scale;
            }
        }
        Field::from_spectral(big, self.ncomp, out).unwrap()
    }

    /// Min/max of one component's trigonometric interpolant, evaluated on
    /// a grid `factor` times finer than the sampling grid.
    pub fn range_oversampled(&self, c: usize, factor: usize) -> (f64, f64) {
        let fine = self.oversampled(factor);
        fine.comp(c)
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.axpy(-1.0, other)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.axpy(1.0, other)
    }
}

// --- FLD1 binary format -------------------------------------------------
//
// ASCII header line `FLD1 <nx> <ny> <ncomp> <L>\n`, then little-endian
// float64 physical samples, component-major then row-major. The float `L`
// is printed with Rust's shortest round-trip formatting, so write → read →
// write reproduces the file byte for byte.

pub fn write_fld1<W: Write>(field: &Field, mut w: W) -> Result<(), FieldError> {
    let n = field.grid().n();
    writeln!(
        w,
        "FLD1 {} {} {} {}",
        n,
        n,
        field.ncomp(),
        field.grid().length()
    )?;
    for v in field.physical() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_fld1<R: Read>(r: R) -> Result<Field, FieldError> {
    let mut reader = BufReader::new(r);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 5 || parts[0] != "FLD1" {
        return Err(FieldError::BadHeader(header.trim_end().to_string()));
    }
    let nx: usize = parts[1]
        .parse()
        .map_err(|_| FieldError::BadHeader(header.trim_end().to_string()))?;
    let ny: usize = parts[2]
        .parse()
        .map_err(|_| FieldError::BadHeader(header.trim_end().to_string()))?;
    let ncomp: usize = parts[3]
        .parse()
        .map_err(|_| FieldError::BadHeader(header.trim_end().to_string()))?;
    let length: f64 = parts[4]
        .parse()
        .map_err(|_| FieldError::BadHeader(header.trim_end().to_string()))?;
    if nx != ny {
        return Err(FieldError::NotSquare { nx, ny });
    }
    let grid = Grid::new(nx, length)?;
    let want = ncomp * grid.num_points();
    let mut bytes = vec![0u8; want * 8];
    reader
        .read_exact(&mut bytes)
        .map_err(|_| FieldError::Truncated)?;
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Field::from_physical(grid, ncomp, data)
}

pub fn write_fld1_file(field: &Field, path: impl AsRef<Path>) -> Result<(), FieldError> {
    let f = std::fs::File::create(path)?;
    write_fld1(field, std::io::BufWriter::new(f))
}

pub fn read_fld1_file(path: impl AsRef<Path>) -> Result<Field, FieldError> {
    read_fld1(std::fs::File::open(path)?)
}
