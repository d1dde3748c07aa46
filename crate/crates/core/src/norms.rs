//! Grid norms: trapezoidal `L^p` quadrature (exact for band-limited
//! integrands on the torus) and the sample max for `L^∞`.

use crate::field::Field;

/// `L^p` norm of the pointwise magnitude of a field. Scalars use `|f|`;
/// vector fields the Euclidean magnitude of `(f₁, f₂)`.
pub fn lp_norm(f: &Field, p: f64) -> f64 {
    let mags = magnitudes(f);
    if p.is_infinite() {
        return mags.into_iter().fold(0.0, f64::max);
    }
    assert!(p >= 1.0, "p must be >= 1");
    let h2 = f.grid().cell_area();
    let sum: f64 = mags.into_iter().map(|m| m.powf(p) * h2).sum();
    sum.powf(1.0 / p)
}

pub fn l2_norm(f: &Field) -> f64 {
    let h2 = f.grid().cell_area();
    (f.physical().iter().map(|v| v * v).sum::<f64>() * h2).sqrt()
}

pub fn linf_norm(f: &Field) -> f64 {
    magnitudes(f).into_iter().fold(0.0, f64::max)
}

fn magnitudes(f: &Field) -> Vec<f64> {
    match f.ncomp() {
        1 => f.physical().iter().map(|v| v.abs()).collect(),
        _ => {
            let a = f.comp(0);
            let b = f.comp(1);
            a.iter().zip(b).map(|(x, y)| x.hypot(*y)).collect()
        }
    }
}

/// Relative `L²` distance `‖a − b‖ / max(‖b‖, floor)`.
pub fn rel_l2(a: &Field, b: &Field) -> f64 {
    let diff = a.sub(b);
    let denom = l2_norm(b);
    l2_norm(&diff) / denom.max(f64::MIN_POSITIVE.sqrt())
}

/// Max-norm of the difference.
pub fn max_diff(a: &Field, b: &Field) -> f64 {
    a.physical()
        .iter()
        .zip(b.physical())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Kinetic energy `‖√ρ u‖²_{L²} = ∫ ρ |u|²`.
pub fn energy(rho: &Field, u: &Field) -> f64 {
    assert_eq!(u.ncomp(), 2);
    let h2 = u.grid().cell_area();
    let r = rho.physical();
    let ux = u.comp(0);
    let uy = u.comp(1);
    r.iter()
        .zip(ux.iter().zip(uy))
        .map(|(rho, (a, b))| rho * (a * a + b * b) * h2)
        .sum()
}
