//! Advection of scalars and vectors by a frozen divergence-free velocity,
//! the 2-D vorticity wedge source, and the vorticity-stretching
//! cancellation check.
//!
//! One [`advect`] call performs a single RK4 step of `∂_t q = −u·∇q + src`
//! with `u` and `src` held fixed over the step; the caller owns sequencing
//! and any per-step refresh of the inputs.

use crate::field::Field;
use crate::norms;
use crate::ops;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("time step must be positive, got {0}")]
    BadDt(f64),
    #[error("CFL number {measured:.3} exceeds cap {cap:.3}")]
    CflViolation { measured: f64, cap: f64 },
    #[error("density must stay positive, min rho = {0}")]
    NonPositiveDensity(f64),
    #[error("grids do not match")]
    GridMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdvectionScheme {
    #[default]
    Rk4Spectral,
}

/// One advection step: RK4 in time, spectral in space, products dealiased
/// by the 2/3 rule unless disabled.
#[derive(Debug, Clone, Copy)]
pub struct AdvectionStep {
    pub dt: f64,
    pub scheme: AdvectionScheme,
    pub dealias: bool,
    pub cfl_cap: f64,
}

impl AdvectionStep {
    pub fn new(dt: f64) -> Self {
        AdvectionStep {
            dt,
            scheme: AdvectionScheme::Rk4Spectral,
            dealias: true,
            cfl_cap: 0.5,
        }
    }

    pub fn with_cfl_cap(mut self, cap: f64) -> Self {
        self.cfl_cap = cap;
        self
    }

    pub fn without_dealiasing(mut self) -> Self {
        self.dealias = false;
        self
    }
}

/// Advective CFL number `dt · max|u| · n / L`.
pub fn cfl_number(u: &Field, dt: f64) -> f64 {
    let grid = u.grid();
    dt * norms::linf_norm(u) * grid.n() as f64 / grid.length()
}

/// Classic RK4 sweep for a time-independent right-hand side.
pub(crate) fn rk4(q: &Field, dt: f64, rhs: impl Fn(&Field) -> Field) -> Field {
    let k1 = rhs(q);
    let k2 = rhs(&q.axpy(0.5 * dt, &k1));
    let k3 = rhs(&q.axpy(0.5 * dt, &k2));
    let k4 = rhs(&q.axpy(dt, &k3));
    let mut acc = k1;
    acc = acc.axpy(2.0, &k2);
    acc = acc.axpy(2.0, &k3);
    acc = acc.axpy(1.0, &k4);
    q.axpy(dt / 6.0, &acc)
}

/// One RK4 step of `∂_t q = −u·∇q + src` with `u` and `src` frozen.
/// Constants are preserved exactly; the step errors when the measured
/// CFL number exceeds the configured cap.
pub fn advect(
    q: &Field,
    u: &Field,
    src: Option<&Field>,
    step: &AdvectionStep,
) -> Result<Field, TransportError> {
    if !(step.dt > 0.0) {
        return Err(TransportError::BadDt(step.dt));
    }
    if u.grid() != q.grid() || src.is_some_and(|s| s.grid() != q.grid() || s.ncomp() != q.ncomp()) {
        return Err(TransportError::GridMismatch);
    }
    let measured = cfl_number(u, step.dt);
    if measured > step.cfl_cap {
        return Err(TransportError::CflViolation {
            measured,
            cap: step.cfl_cap,
        });
    }
    let rhs = |f: &Field| {
        let adv = ops::dot_grad(u, f, step.dealias).scale(-1.0);
        match src {
            Some(s) => adv.add(s),
            None => adv,
        }
    };
    Ok(rk4(q, step.dt, rhs))
}

/// Vorticity wedge source `−∇(1/ρ) ∧ ∇Π`, the term that breaks 2-D
/// vorticity conservation for nonconstant density. Dealiased.
pub fn vorticity_source(rho: &Field, grad_pi: &Field) -> Result<Field, TransportError> {
    assert_eq!(rho.ncomp(), 1);
    assert_eq!(grad_pi.ncomp(), 2);
    if rho.grid() != grad_pi.grid() {
        return Err(TransportError::GridMismatch);
    }
    let rho_min = rho.physical().iter().cloned().fold(f64::INFINITY, f64::min);
    if !(rho_min > 0.0) {
        return Err(TransportError::NonPositiveDensity(rho_min));
    }
    let inv_rho = rho.map(|v| 1.0 / v);
    let grad_a = ops::gradient(&inv_rho);
    let np = rho.grid().num_points();
    let mut wedge = vec![0.0; np];
    let (ax, ay) = (grad_a.comp(0), grad_a.comp(1));
    let (px, py) = (grad_pi.comp(0), grad_pi.comp(1));
    for i in 0..np {
        wedge[i] = -(ax[i] * py[i] - ay[i] * px[i]);
    }
    Ok(ops::dealias(
        &Field::from_physical(rho.grid(), 1, wedge).unwrap(),
    ))
}

/// Discrepancy between the two spectral evaluations of the vorticity
/// stretching cancellation for divergence-free `u`:
/// the product form `Σ_k (∂_i u^k ∂_k u^j − ∂_j u^k ∂_k u^i)` and its
/// divergence form `Σ_k (∂_k(u^j ∂_i u^k) − ∂_k(u^i ∂_j u^k))`.
#[derive(Debug, Clone, Copy)]
pub struct CancellationReport {
    /// Max-norm of (product form − divergence form) at `(i, j) = (1, 2)`.
    pub discrepancy: f64,
    /// Max-norm of the product form, for scale.
    pub magnitude: f64,
}

pub fn cancellation_identity_check(u: &Field) -> Result<CancellationReport, TransportError> {
    assert_eq!(u.ncomp(), 2);
    let grid = u.grid();
    let np = grid.num_points();
    // du[i][k] = ∂_{i+1} u^{k+1}
    let g0 = ops::gradient(&u.component(0));
    let g1 = ops::gradient(&u.component(1));
    let du = [
        [g0.component(0), g1.component(0)],
        [g0.component(1), g1.component(1)],
    ];

    let mut product_form = vec![0.0; np];
    for k in 0..2 {
        let a = ops::dealiased_product(&du[0][k], &du[k][1]);
        let b = ops::dealiased_product(&du[1][k], &du[k][0]);
        for (acc, (x, y)) in product_form
            .iter_mut()
            .zip(a.physical().iter().zip(b.physical()))
        {
            *acc += x - y;
        }
    }
    let product_form = Field::from_physical(grid, 1, product_form).unwrap();

    let mut divergence_form = Field::zeros(grid, 1);
    for k in 0..2 {
        let p = ops::dealiased_product(&u.component(1), &du[0][k]);
        let q = ops::dealiased_product(&u.component(0), &du[1][k]);
        let d = p.sub(&q);
        let grad_d = ops::gradient(&d);
        divergence_form = divergence_form.add(&grad_d.component(k));
    }

    Ok(CancellationReport {
        discrepancy: norms::max_diff(&product_form, &divergence_form),
        magnitude: norms::linf_norm(&product_form),
    })
}
