//! Spectral differential and multiplier operators.
//!
//! Every operator is pure: inputs are untouched, outputs are fresh fields.
//! Derivatives multiply by `ik` and zero the Nyquist row/column so real
//! fields stay real; dealiasing is applied at product sites only.

use crate::field::Field;
use crate::grid::Grid;
use rustfft::num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpsError {
    #[error("vorticity mean must vanish on torus")]
    NonZeroMeanVorticity,
    #[error("expected a {want}-component field, got {got}")]
    WrongComponents { want: usize, got: usize },
    #[error("grids do not match")]
    GridMismatch,
}

fn scalar_only(f: &Field) -> Result<(), OpsError> {
    if f.ncomp() != 1 {
        return Err(OpsError::WrongComponents {
            want: 1,
            got: f.ncomp(),
        });
    }
    Ok(())
}

/// Apply a spectral multiplier to one component.
fn multiply(grid: Grid, spec: &[Complex64], f: impl Fn(i64, i64) -> Complex64) -> Vec<Complex64> {
    let n = grid.n();
    let mut out = vec![Complex64::default(); spec.len()];
    for (idx, c) in spec.iter().enumerate() {
        let (mx, my) = (grid.mode(idx % n), grid.mode(idx / n));
        out[idx] = c * f(mx, my);
    }
    out
}

/// Derivative multiplier `ik` along one axis. The whole Nyquist row and
/// column are zeroed: the output vanishes whenever either mode index sits
/// at `−n/2`, so there is no asymmetric Nyquist derivative and every
/// derivative operator maps into the same symmetric band.
fn ik(grid: Grid, m: i64, other: i64) -> Complex64 {
    if grid.is_nyquist(m) || grid.is_nyquist(other) {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::new(0.0, grid.wavenumber(m))
    }
}

/// Gradient of a scalar field.
pub fn gradient(f: &Field) -> Field {
    assert_eq!(f.ncomp(), 1, "gradient expects a scalar field");
    let grid = f.grid();
    let spec = f.spectral();
    let mut out = multiply(grid, spec, |mx, my| ik(grid, mx, my));
    out.extend(multiply(grid, spec, |mx, my| ik(grid, my, mx)));
    Field::from_spectral(grid, 2, out).unwrap()
}

/// Divergence of a vector field.
pub fn divergence(v: &Field) -> Field {
    assert_eq!(v.ncomp(), 2, "divergence expects a vector field");
    let grid = v.grid();
    let dx = multiply(grid, v.comp_spectral(0), |mx, my| ik(grid, mx, my));
    let dy = multiply(grid, v.comp_spectral(1), |mx, my| ik(grid, my, mx));
    let out: Vec<Complex64> = dx.iter().zip(&dy).map(|(a, b)| a + b).collect();
    Field::from_spectral(grid, 1, out).unwrap()
}

/// Componentwise Laplacian, Nyquist zeroed.
pub fn laplacian(f: &Field) -> Field {
    let grid = f.grid();
    let np = grid.num_points();
    let mut out = Vec::with_capacity(f.ncomp() * np);
    for c in 0..f.ncomp() {
        out.extend(multiply(grid, f.comp_spectral(c), |mx, my| {
            if grid.is_nyquist(mx) || grid.is_nyquist(my) {
                Complex64::new(0.0, 0.0)
            } else {
                let kx = grid.wavenumber(mx);
                let ky = grid.wavenumber(my);
                Complex64::new(-(kx * kx + ky * ky), 0.0)
            }
        }));
    }
    Field::from_spectral(grid, f.ncomp(), out).unwrap()
}

/// Mean-zero inverse Laplacian: mode 0 and Nyquist go to zero.
pub fn inverse_laplacian(f: &Field) -> Field {
    let grid = f.grid();
    let np = grid.num_points();
    let mut out = Vec::with_capacity(f.ncomp() * np);
    for c in 0..f.ncomp() {
        out.extend(multiply(grid, f.comp_spectral(c), |mx, my| {
            if (mx == 0 && my == 0) || grid.is_nyquist(mx) || grid.is_nyquist(my) {
                Complex64::new(0.0, 0.0)
            } else {
                let kx = grid.wavenumber(mx);
                let ky = grid.wavenumber(my);
                Complex64::new(-1.0 / (kx * kx + ky * ky), 0.0)
            }
        }));
    }
    Field::from_spectral(grid, f.ncomp(), out).unwrap()
}

/// Scalar curl `∂₁u² − ∂₂u¹` of a 2-D vector field.
pub fn curl(v: &Field) -> Field {
    assert_eq!(v.ncomp(), 2, "curl expects a vector field");
    let grid = v.grid();
    let d1u2 = multiply(grid, v.comp_spectral(1), |mx, my| ik(grid, mx, my));
    let d2u1 = multiply(grid, v.comp_spectral(0), |mx, my| ik(grid, my, mx));
    let out: Vec<Complex64> = d1u2.iter().zip(&d2u1).map(|(a, b)| a - b).collect();
    Field::from_spectral(grid, 1, out).unwrap()
}

/// Leray projection onto divergence-free fields,
/// `û ↦ û − k (k·û)/|k|²`; mode 0 passes through unchanged.
pub fn leray_project(v: &Field) -> Field {
    assert_eq!(v.ncomp(), 2, "leray_project expects a vector field");
    let grid = v.grid();
    let np = grid.num_points();
    let sx = v.comp_spectral(0);
    let sy = v.comp_spectral(1);
    let n = grid.n();
    let mut ox = vec![Complex64::default(); np];
    let mut oy = vec![Complex64::default(); np];
    for idx in 0..np {
        let (mx, my) = (grid.mode(idx % n), grid.mode(idx / n));
        if mx == 0 && my == 0 {
            ox[idx] = sx[idx];
            oy[idx] = sy[idx];
            continue;
        }
        let kx = grid.wavenumber(mx);
        let ky = grid.wavenumber(my);
        let k2 = kx * kx + ky * ky;
        let kd = (sx[idx] * kx + sy[idx] * ky) / k2;
        ox[idx] = sx[idx] - kd * kx;
        oy[idx] = sy[idx] - kd * ky;
    }
    let mut out = ox;
    out.append(&mut oy);
    Field::from_spectral(grid, 2, out).unwrap()
}

/// Divergence-free velocity with vorticity `ω` and prescribed mean velocity.
///
/// Spectrally, `û = (ik₂, −ik₁) ω̂ / |k|²`; mode 0 is fixed from `mean_u`,
/// the torus analogue of decay at infinity. Errors if `ω` has nonzero mean.
pub fn biot_savart(omega: &Field, mean_u: (f64, f64)) -> Result<Field, OpsError> {
    scalar_only(omega)?;
    let grid = omega.grid();
    let spec = omega.spectral();
    let np = grid.num_points();
    let n = grid.n();
    let scale = np as f64;
    let omega_linf = omega.physical().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if spec[0].norm() / scale > 1e-10 * omega_linf.max(1e-300) && spec[0].norm() / scale > 1e-14 {
        return Err(OpsError::NonZeroMeanVorticity);
    }
    let mut ox = vec![Complex64::default(); np];
    let mut oy = vec![Complex64::default(); np];
    ox[0] = Complex64::new(mean_u.0 * scale, 0.0);
    oy[0] = Complex64::new(mean_u.1 * scale, 0.0);
    for idx in 1..np {
        let (mx, my) = (grid.mode(idx % n), grid.mode(idx / n));
        if grid.is_nyquist(mx) || grid.is_nyquist(my) {
            continue;
        }
        let kx = grid.wavenumber(mx);
        let ky = grid.wavenumber(my);
        let k2 = kx * kx + ky * ky;
        let w = spec[idx];
        ox[idx] = Complex64::new(0.0, ky / k2) * w;
        oy[idx] = Complex64::new(0.0, -kx / k2) * w;
    }
    let mut out = ox;
    out.append(&mut oy);
    Ok(Field::from_spectral(grid, 2, out).unwrap())
}

/// Zero every mode outside the 2/3 band `max(|m₁|, |m₂|) ≤ n/3`.
pub fn dealias(f: &Field) -> Field {
    let grid = f.grid();
    let cutoff = grid.dealias_mode();
    let np = grid.num_points();
    let mut out = Vec::with_capacity(f.ncomp() * np);
    for c in 0..f.ncomp() {
        out.extend(multiply(grid, f.comp_spectral(c), |mx, my| {
            if mx.abs() > cutoff || my.abs() > cutoff {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(1.0, 0.0)
            }
        }));
    }
    Field::from_spectral(grid, f.ncomp(), out).unwrap()
}

/// Pointwise product of a scalar with a scalar or vector field.
pub fn pointwise_product(a: &Field, b: &Field) -> Field {
    assert_eq!(a.ncomp(), 1, "first factor must be scalar");
    assert_eq!(a.grid(), b.grid());
    let av = a.comp(0);
    let np = a.grid().num_points();
    let mut out = Vec::with_capacity(b.ncomp() * np);
    for c in 0..b.ncomp() {
        out.extend(b.comp(c).iter().zip(av).map(|(x, s)| x * s));
    }
    Field::from_physical(a.grid(), b.ncomp(), out).unwrap()
}

/// Pointwise product followed by the 2/3 truncation.
pub fn dealiased_product(a: &Field, b: &Field) -> Field {
    dealias(&pointwise_product(a, b))
}

/// Advection term `u·∇q`, componentwise for vector `q`, optionally dealiased.
pub fn dot_grad(u: &Field, q: &Field, dealias_product: bool) -> Field {
    assert_eq!(u.ncomp(), 2, "advecting velocity must be a vector field");
    assert_eq!(u.grid(), q.grid());
    let ux = u.comp(0);
    let uy = u.comp(1);
    let np = q.grid().num_points();
    let mut out = Vec::with_capacity(q.ncomp() * np);
    for c in 0..q.ncomp() {
        let g = gradient(&q.component(c));
        let gx = g.comp(0);
        let gy = g.comp(1);
        out.extend(
            gx.iter()
                .zip(gy)
                .zip(ux.iter().zip(uy))
                .map(|((a, b), (p, q))| p * a + q * b),
        );
    }
    let f = Field::from_physical(q.grid(), q.ncomp(), out).unwrap();
    if dealias_product {
        dealias(&f)
    } else {
        f
    }
}

/// Max-norm of the full Jacobian magnitude of a vector field
/// (pointwise Frobenius norm over the four entries).
pub fn jacobian_linf(u: &Field) -> f64 {
    assert_eq!(u.ncomp(), 2);
    let g0 = gradient(&u.component(0));
    let g1 = gradient(&u.component(1));
    let mut max = 0.0f64;
    for i in 0..u.grid().num_points() {
        let s = g0.comp(0)[i].powi(2)
            + g0.comp(1)[i].powi(2)
            + g1.comp(0)[i].powi(2)
            + g1.comp(1)[i].powi(2);
        max = max.max(s.sqrt());
    }
    max
}

/// `L²` norm of the full Jacobian of a vector field.
pub fn jacobian_l2(u: &Field) -> f64 {
    assert_eq!(u.ncomp(), 2);
    let g0 = gradient(&u.component(0));
    let g1 = gradient(&u.component(1));
    let h2 = u.grid().cell_area();
    let mut sum = 0.0f64;
    for i in 0..u.grid().num_points() {
        sum += g0.comp(0)[i].powi(2)
            + g0.comp(1)[i].powi(2)
            + g1.comp(0)[i].powi(2)
            + g1.comp(1)[i].powi(2);
    }
    (sum * h2).sqrt()
}

/// Divergence residual of a vector field: `(max |div u|, max |∇u|)`.
/// A field counts as divergence-free when the first is at most
/// `1e−10` times the second.
pub fn divergence_residual(u: &Field) -> (f64, f64) {
    let d = divergence(u);
    let dmax = d.physical().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (dmax, jacobian_linf(u))
}

/// Energy fraction carried by modes above `2/3` of the resolved band
/// (the dealiased band when `dealias` is in force). A resolution-loss
/// surrogate: smooth, resolved fields keep this near zero.
pub fn spectral_tail_fraction(u: &Field) -> f64 {
    let grid = u.grid();
    let n = grid.n();
    let kept = grid.dealias_mode() as f64;
    let cutoff2 = (2.0 * kept / 3.0).powi(2);
    let mut tail = 0.0;
    let mut total = 0.0;
    for c in 0..u.ncomp() {
        for (idx, v) in u.comp_spectral(c).iter().enumerate() {
            let (mx, my) = (grid.mode(idx % n), grid.mode(idx / n));
            if mx == 0 && my == 0 {
                continue;
            }
            let e = v.norm_sqr();
            total += e;
            let m2 = (mx * mx + my * my) as f64;
            if m2 >= cutoff2 {
                tail += e;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}
