//! Nonlinear time integration of the density-dependent incompressible
//! Euler system on the torus, in two formulations:
//!
//! * velocity–pressure: advance `(a, u)` with `∂_t a = −u·∇a`,
//!   `∂_t u = P(−u·∇u − a∇Π)`;
//! * vorticity–pressure (2-D): advance `(a, ω, ū)` with the wedge source
//!   and recover `u` by Biot–Savart at every stage.
//!
//! One step advances the pair as a single coupled RK4 system with
//! per-stage Leray projection. The pressure gradient is re-solved at every
//! stage by default, which keeps the stage RHS divergence-free and the
//! energy drift at RK4 size; `time.pressure_per_stage = false` freezes it
//! at the step-start solve instead (one elliptic solve per step, but a
//! measured O(dt) energy drift from the stale gradient).

use crate::dyadic::{BesovIndex, DyadicLadder, Exponent};
use crate::field::Field;
use crate::grid::Grid;
use crate::norms;
use crate::ops::{self, OpsError};
use crate::pressure::{self, EllipticProblem, PressureConfig, PressureError};
use crate::transport::{self, AdvectionStep, TransportError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("CFL number {measured:.3} exceeds cap {cap:.3} at t = {t:.6e}")]
    Cfl {
        measured: f64,
        cap: f64,
        t: f64,
        diagnostics: Box<DiagnosticsRecord>,
    },
    #[error("pressure solve failed at t = {t:.6e}: {source}")]
    Pressure {
        t: f64,
        source: PressureError,
        diagnostics: Box<DiagnosticsRecord>,
    },
    #[error(
        "density range [{rho_min:.6}, {rho_max:.6}] escaped initial bounds \
         [{lo:.6}, {hi:.6}] beyond drift tolerance {tol:.1e} at t = {t:.6e}"
    )]
    DensityDrift {
        t: f64,
        rho_min: f64,
        rho_max: f64,
        lo: f64,
        hi: f64,
        tol: f64,
        diagnostics: Box<DiagnosticsRecord>,
    },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Ops(#[from] OpsError),
    #[error("picard iterates grew over {0} consecutive iterations; reduce the horizon")]
    PicardDivergence(usize),
    #[error("trajectories do not match: {0}")]
    TrajectoryMismatch(String),
}

/// Snapshot of the flow: `a = 1/ρ`, divergence-free `u`, the last pressure
/// gradient, and the scalar vorticity kept consistent with `u`.
#[derive(Debug, Clone)]
pub struct FluidState {
    pub t: f64,
    pub a: Field,
    pub u: Field,
    pub grad_pi: Field,
    pub omega: Field,
}

impl FluidState {
    /// Density `ρ = 1/a`, derived pointwise.
    pub fn rho(&self) -> Field {
        self.a.map(|v| 1.0 / v)
    }

    pub fn mean_velocity(&self) -> (f64, f64) {
        (self.u.mean(0), self.u.mean(1))
    }
}

/// Per-step scalar diagnostics.
#[derive(Debug, Clone)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `‖√ρ u‖²_{L²}`.
    pub energy: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// `‖∇u‖_{L^∞}` (pointwise Frobenius norm of the Jacobian).
    pub sup_grad_u: f64,
    /// Continuation-criterion integrand:
    /// `‖∇u‖_{L^∞} + ‖∇Π‖_{B^{s−1}_{∞,r}}` (`‖ω‖_{L^∞}` replaces the first
    /// term in the alternate proxy mode).
    pub bkm_integrand: f64,
    pub omega_linf: f64,
    pub omega_l2: f64,
    /// `‖u‖_{H¹} + ‖u‖_{B¹_{∞,1}}`.
    pub x_norm: f64,
    /// `‖b‖_{B¹_{∞,1}}` with `b = a − 1`.
    pub b_norm: f64,
    /// Spectral-energy fraction in the top third of the resolved band.
    pub tail_fraction: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub pressure: PressureConfig,
    pub cfl_cap: f64,
    pub dealias: bool,
    /// Allowed escape of the sampled density range beyond its initial
    /// bounds before the step reports an error.
    pub drift_tol: f64,
    /// Besov regularity `s` of the diagnostics index; the continuation
    /// integrand uses `B^{s−1}_{∞,r}`.
    pub diag_s: f64,
    pub diag_r: Exponent,
    /// Replace `‖∇u‖_{L^∞}` with `‖ω‖_{L^∞}` in the BKM integrand.
    pub use_omega_proxy: bool,
    pub pressure_per_stage: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            pressure: PressureConfig::default(),
            cfl_cap: 0.5,
            dealias: true,
            drift_tol: 1e-3,
            diag_s: 1.0,
            diag_r: Exponent::One,
            use_omega_proxy: false,
            pressure_per_stage: true,
        }
    }
}

/// Blow-up proxy thresholds; the tripping time is the measured lifespan.
#[derive(Debug, Clone, Copy)]
pub struct ProxyConfig {
    pub bkm_cap: f64,
    pub tail_cap: f64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            bkm_cap: 100.0,
            tail_cap: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProxyTrip {
    Bkm { value: f64, cap: f64 },
    Tail { value: f64, cap: f64 },
}

impl std::fmt::Display for ProxyTrip {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProxyTrip::Bkm { value, cap } => write!(f, "bkm {value:.3e} >= cap {cap:.3e}"),
            ProxyTrip::Tail { value, cap } => write!(f, "tail {value:.3e} >= cap {cap:.3e}"),
        }
    }
}

/// Check one diagnostics row against the proxy thresholds.
pub fn blow_up_proxy(rec: &DiagnosticsRecord, cfg: &ProxyConfig) -> Option<ProxyTrip> {
    if rec.bkm_integrand >= cfg.bkm_cap {
        return Some(ProxyTrip::Bkm {
            value: rec.bkm_integrand,
            cap: cfg.bkm_cap,
        });
    }
    if rec.tail_fraction >= cfg.tail_cap {
        return Some(ProxyTrip::Tail {
            value: rec.tail_fraction,
            cap: cfg.tail_cap,
        });
    }
    None
}

/// Stepper: configuration plus the dyadic ladder for diagnostics.
#[derive(Debug, Clone)]
pub struct Solver {
    cfg: SolverConfig,
    ladder: DyadicLadder,
    /// Initial density bounds for the containment failsafe; set by `run`.
    rho_bounds: Option<(f64, f64)>,
}

impl Solver {
    pub fn new(grid: Grid, cfg: SolverConfig) -> Self {
        Solver {
            cfg,
            ladder: DyadicLadder::new(grid),
            rho_bounds: None,
        }
    }

    pub fn grid(&self) -> Grid {
        self.ladder.grid()
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn ladder(&self) -> &DyadicLadder {
        &self.ladder
    }

    pub fn with_rho_bounds(mut self, bounds: (f64, f64)) -> Self {
        self.rho_bounds = Some(bounds);
        self
    }

    fn prod(&self, a: &Field, b: &Field) -> Field {
        if self.cfg.dealias {
            ops::dealiased_product(a, b)
        } else {
            ops::pointwise_product(a, b)
        }
    }

    fn dot_grad(&self, u: &Field, q: &Field) -> Field {
        ops::dot_grad(u, q, self.cfg.dealias)
    }

    /// Componentwise-max Besov norm of a field.
    fn besov(&self, f: &Field, idx: BesovIndex) -> f64 {
        (0..f.ncomp())
            .map(|c| self.ladder.besov_norm(&f.component(c), idx))
            .fold(0.0f64, f64::max)
    }

    /// Assemble the diagnostics row for a state.
    pub fn diagnostics(&self, state: &FluidState) -> DiagnosticsRecord {
        let rho = state.rho();
        let rho_min = rho.physical().iter().cloned().fold(f64::INFINITY, f64::min);
        let rho_max = rho
            .physical()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let sup_grad_u = ops::jacobian_linf(&state.u);
        let omega_linf = norms::linf_norm(&state.omega);
        let omega_l2 = norms::l2_norm(&state.omega);
        let s = self.cfg.diag_s;
        let bkm_pressure = self.besov(
            &state.grad_pi,
            BesovIndex::new(s - 1.0, Exponent::Inf, self.cfg.diag_r),
        );
        let bkm_first = if self.cfg.use_omega_proxy {
            omega_linf
        } else {
            sup_grad_u
        };
        let h1 = (norms::l2_norm(&state.u).powi(2) + ops::jacobian_l2(&state.u).powi(2)).sqrt();
        let b1 = BesovIndex::new(1.0, Exponent::Inf, Exponent::One);
        let x_norm = h1 + self.besov(&state.u, b1);
        let b_field = state.a.map(|v| v - 1.0);
        let b_norm = self.ladder.besov_norm(&b_field, b1);
        DiagnosticsRecord {
            t: state.t,
            energy: norms::energy(&rho, &state.u),
            rho_min,
            rho_max,
            sup_grad_u,
            bkm_integrand: bkm_first + bkm_pressure,
            omega_linf,
            omega_l2,
            x_norm,
            b_norm,
            tail_fraction: ops::spectral_tail_fraction(&state.u),
        }
    }

    /// Build a consistent initial state from `a` and `u`: project the
    /// velocity, derive the vorticity, solve the pressure once.
    pub fn initialize(&self, a: Field, u: Field) -> Result<FluidState, SolverError> {
        let u = ops::leray_project(&u);
        let omega = ops::curl(&u);
        let mut state = FluidState {
            t: 0.0,
            a,
            u,
            grad_pi: Field::zeros(self.grid(), 2),
            omega,
        };
        state.grad_pi = self.solve_pressure(&state, None)?;
        Ok(state)
    }

    fn solve_pressure(
        &self,
        state: &FluidState,
        forcing: Option<&Field>,
    ) -> Result<Field, SolverError> {
        // −div(a∇Π) = div(u·∇Pu − f); with this sign the step RHS
        // −u·∇u − a∇Π is divergence-free at the solve state.
        let pu = ops::leray_project(&state.u);
        let mut flux = self.dot_grad(&state.u, &pu);
        if let Some(f) = forcing {
            flux = flux.sub(f);
        }
        let prob = EllipticProblem::new(state.a.clone(), flux).map_err(|source| {
            SolverError::Pressure {
                t: state.t,
                source,
                diagnostics: Box::new(self.diagnostics(state)),
            }
        })?;
        let sol =
            pressure::solve(&prob, &self.cfg.pressure).map_err(|source| SolverError::Pressure {
                t: state.t,
                source,
                diagnostics: Box::new(self.diagnostics(state)),
            })?;
        Ok(sol.grad_pi)
    }

    fn check_cfl(&self, state: &FluidState, dt: f64) -> Result<(), SolverError> {
        let measured = transport::cfl_number(&state.u, dt);
        if measured > self.cfg.cfl_cap {
            return Err(SolverError::Cfl {
                measured,
                cap: self.cfg.cfl_cap,
                t: state.t,
                diagnostics: Box::new(self.diagnostics(state)),
            });
        }
        Ok(())
    }

    fn check_density(&self, state: &FluidState) -> Result<(), SolverError> {
        let Some((lo, hi)) = self.rho_bounds else {
            return Ok(());
        };
        let rho = state.rho();
        let rho_min = rho.physical().iter().cloned().fold(f64::INFINITY, f64::min);
        let rho_max = rho
            .physical()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let tol = self.cfg.drift_tol;
        if rho_min < lo - tol || rho_max > hi + tol {
            return Err(SolverError::DensityDrift {
                t: state.t,
                rho_min,
                rho_max,
                lo,
                hi,
                tol,
                diagnostics: Box::new(self.diagnostics(state)),
            });
        }
        Ok(())
    }

    /// One velocity–pressure step. The pressure gradient is solved from
    /// the step-start state (per stage when configured); `(a, u)` advance
    /// as a coupled RK4 system with the velocity RHS Leray-projected at
    /// every stage.
    pub fn step(
        &self,
        state: &FluidState,
        dt: f64,
    ) -> Result<(FluidState, DiagnosticsRecord), SolverError> {
        self.step_forced(state, dt, None)
    }

    pub fn step_forced(
        &self,
        state: &FluidState,
        dt: f64,
        forcing: Option<&Field>,
    ) -> Result<(FluidState, DiagnosticsRecord), SolverError> {
        self.check_cfl(state, dt)?;
        let grad_pi = self.solve_pressure(state, forcing)?;

        let rhs = |a: &Field, u: &Field| -> Result<(Field, Field), SolverError> {
            let gp = if self.cfg.pressure_per_stage {
                let stage = FluidState {
                    t: state.t,
                    a: a.clone(),
                    u: u.clone(),
                    grad_pi: grad_pi.clone(),
                    omega: state.omega.clone(),
                };
                self.solve_pressure(&stage, forcing)?
            } else {
                grad_pi.clone()
            };
            let da = self.dot_grad(u, a).scale(-1.0);
            let mut du = self.dot_grad(u, u).scale(-1.0).sub(&self.prod(a, &gp));
            if let Some(f) = forcing {
                du = du.add(f);
            }
            Ok((da, ops::leray_project(&du)))
        };

        let (a0, u0) = (&state.a, &state.u);
        let (ka1, ku1) = rhs(a0, u0)?;
        let (ka2, ku2) = rhs(&a0.axpy(0.5 * dt, &ka1), &u0.axpy(0.5 * dt, &ku1))?;
        let (ka3, ku3) = rhs(&a0.axpy(0.5 * dt, &ka2), &u0.axpy(0.5 * dt, &ku2))?;
        let (ka4, ku4) = rhs(&a0.axpy(dt, &ka3), &u0.axpy(dt, &ku3))?;
        let a_new = a0.axpy(
            dt / 6.0,
            &ka1.axpy(2.0, &ka2).axpy(2.0, &ka3).axpy(1.0, &ka4),
        );
        let u_new = ops::leray_project(&u0.axpy(
            dt / 6.0,
            &ku1.axpy(2.0, &ku2).axpy(2.0, &ku3).axpy(1.0, &ku4),
        ));
        let omega = ops::curl(&u_new);
        let next = FluidState {
            t: state.t + dt,
            a: a_new,
            u: u_new,
            grad_pi,
            omega,
        };
        self.check_density(&next)?;
        let rec = self.diagnostics(&next);
        Ok((next, rec))
    }

    /// One vorticity–pressure step: advance `(a, ω, ū)` with the wedge
    /// source, recovering `u` by Biot–Savart at every stage. The wedge is
    /// taken as the curl of the dealiased momentum source `−a∇Π`, the
    /// discrete twin of `−∇(1/ρ)∧∇Π`.
    pub fn step_vorticity(
        &self,
        state: &FluidState,
        dt: f64,
    ) -> Result<(FluidState, DiagnosticsRecord), SolverError> {
        self.step_vorticity_forced(state, dt, None)
    }

    pub fn step_vorticity_forced(
        &self,
        state: &FluidState,
        dt: f64,
        forcing: Option<&Field>,
    ) -> Result<(FluidState, DiagnosticsRecord), SolverError> {
        self.check_cfl(state, dt)?;
        let grad_pi = self.solve_pressure(state, forcing)?;

        type VortDot = (Field, Field, f64, f64);
        let rhs = |a: &Field, omega: &Field, mean: (f64, f64)| -> Result<VortDot, SolverError> {
            let u = ops::biot_savart(omega, mean)?;
            let src = self.prod(a, &grad_pi).scale(-1.0);
            let da = self.dot_grad(&u, a).scale(-1.0);
            let mut domega = self.dot_grad(&u, omega).scale(-1.0).add(&ops::curl(&src));
            let mut dmean = (src.mean(0), src.mean(1));
            if let Some(f) = forcing {
                domega = domega.add(&ops::curl(f));
                dmean.0 += f.mean(0);
                dmean.1 += f.mean(1);
            }
            Ok((da, domega, dmean.0, dmean.1))
        };

        let a0 = &state.a;
        let w0 = &state.omega;
        let m0 = state.mean_velocity();
        let k1 = rhs(a0, w0, m0)?;
        let k2 = rhs(
            &a0.axpy(0.5 * dt, &k1.0),
            &w0.axpy(0.5 * dt, &k1.1),
            (m0.0 + 0.5 * dt * k1.2, m0.1 + 0.5 * dt * k1.3),
        )?;
        let k3 = rhs(
            &a0.axpy(0.5 * dt, &k2.0),
            &w0.axpy(0.5 * dt, &k2.1),
            (m0.0 + 0.5 * dt * k2.2, m0.1 + 0.5 * dt * k2.3),
        )?;
        let k4 = rhs(
            &a0.axpy(dt, &k3.0),
            &w0.axpy(dt, &k3.1),
            (m0.0 + dt * k3.2, m0.1 + dt * k3.3),
        )?;
        let a_new = a0.axpy(
            dt / 6.0,
            &k1.0.axpy(2.0, &k2.0).axpy(2.0, &k3.0).axpy(1.0, &k4.0),
        );
        let omega_new = w0.axpy(
            dt / 6.0,
            &k1.1.axpy(2.0, &k2.1).axpy(2.0, &k3.1).axpy(1.0, &k4.1),
        );
        let mean_new = (
            m0.0 + dt / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2),
            m0.1 + dt / 6.0 * (k1.3 + 2.0 * k2.3 + 2.0 * k3.3 + k4.3),
        );
        let u_new = ops::biot_savart(&omega_new, mean_new)?;
        let next = FluidState {
            t: state.t + dt,
            a: a_new,
            u: u_new,
            grad_pi,
            omega: omega_new,
        };
        self.check_density(&next)?;
        let rec = self.diagnostics(&next);
        Ok((next, rec))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    Velocity,
    Vorticity,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Time step; non-positive requests the CFL-derived step.
    pub dt: f64,
    pub t_end: f64,
    /// Record diagnostics every `stride` steps (the initial state and the
    /// final or tripping step are always recorded).
    pub stride: usize,
    pub proxy: ProxyConfig,
    pub collect_states: bool,
    pub formulation: Formulation,
    pub forcing: Option<Field>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            dt: 0.0,
            t_end: 1.0,
            stride: 1,
            proxy: ProxyConfig::default(),
            collect_states: false,
            formulation: Formulation::Velocity,
            forcing: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    ProxyTripped { t: f64, reason: ProxyTrip },
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<DiagnosticsRecord>,
    /// States at recorded rows when requested (endpoints otherwise).
    pub states: Vec<FluidState>,
    pub status: RunStatus,
    pub steps: usize,
    pub dt: f64,
}

impl RunResult {
    pub fn final_state(&self) -> Option<&FluidState> {
        self.states.last()
    }

    pub fn tripped(&self) -> Option<(f64, ProxyTrip)> {
        match self.status {
            RunStatus::ProxyTripped { t, reason } => Some((t, reason)),
            RunStatus::Completed => None,
        }
    }
}

/// CFL-derived step with a safety factor, or a crude fallback at rest.
pub fn auto_dt(u0: &Field, cfl_cap: f64, t_end: f64) -> f64 {
    let grid = u0.grid();
    let umax = norms::linf_norm(u0);
    if umax > 1e-12 {
        0.8 * cfl_cap * grid.length() / (grid.n() as f64 * umax)
    } else {
        (t_end / 100.0).max(1e-3)
    }
}

/// Integrate until `t_end` or until the blow-up proxy trips. Solver errors
/// (CFL, pressure, density drift) abort with the diagnostics at failure.
pub fn run(
    solver: &Solver,
    initial: FluidState,
    opts: &RunOptions,
) -> Result<RunResult, SolverError> {
    let dt = if opts.dt > 0.0 {
        opts.dt
    } else {
        auto_dt(&initial.u, solver.config().cfl_cap, opts.t_end)
    };
    // containment bounds from the initial interpolant: raw sample extrema
    // jitter upward by O(h²k²) as density extrema move between lattice
    // points, which is not a transport violation
    let (lo, hi) = initial.rho().range_oversampled(0, 8);
    let solver = solver.clone().with_rho_bounds((lo, hi));

    let mut records = vec![solver.diagnostics(&initial)];
    let mut states = vec![initial.clone()];
    let stride = opts.stride.max(1);

    if let Some(reason) = blow_up_proxy(&records[0], &opts.proxy) {
        return Ok(RunResult {
            records,
            states,
            status: RunStatus::ProxyTripped {
                t: initial.t,
                reason,
            },
            steps: 0,
            dt,
        });
    }

    let mut state = initial;
    let t_final = state.t + opts.t_end;
    let mut steps = 0usize;
    let mut status = RunStatus::Completed;
    let eps = 1e-12 * opts.t_end.max(1.0);
    while state.t < t_final - eps {
        let dt_step = dt.min(t_final - state.t);
        let (next, rec) = match opts.formulation {
            Formulation::Velocity => solver.step_forced(&state, dt_step, opts.forcing.as_ref())?,
            Formulation::Vorticity => {
                solver.step_vorticity_forced(&state, dt_step, opts.forcing.as_ref())?
            }
        };
        state = next;
        steps += 1;
        let trip = blow_up_proxy(&rec, &opts.proxy);
        let last = state.t >= t_final - eps;
        let on_stride = steps % stride == 0;
        if on_stride || last || trip.is_some() {
            records.push(rec);
            states.push(state.clone());
        }
        if let Some(reason) = trip {
            status = RunStatus::ProxyTripped { t: state.t, reason };
            break;
        }
    }
    if !opts.collect_states {
        // keep endpoints only; callers needing full trajectories ask for them
        if states.len() > 1 {
            let last = states.pop().unwrap();
            states.truncate(1);
            states.push(last);
        }
    }
    Ok(RunResult {
        records,
        states,
        status,
        steps,
        dt,
    })
}

/// Linear-system iterate of the approximation scheme: trajectories of
/// `(a, u, ∇Π)` at the shared time samples and the Cauchy gap against the
/// previous iterate.
#[derive(Debug)]
pub struct PicardIterate {
    pub index: usize,
    pub a: Vec<Field>,
    pub u: Vec<Field>,
    pub grad_pi: Vec<Field>,
    /// `sup_k (‖δa(t_k)‖_{L²} + ‖δu(t_k)‖_{L²})` against the previous iterate.
    pub cauchy_gap: f64,
}

/// The approximation scheme: iterate linear transport problems
/// `∂_t a^{n+1} + u^n·∇a^{n+1} = 0`,
/// `∂_t u^{n+1} + u^n·∇u^{n+1} = −a^{n+1}∇Π^n`, then refresh the pressure
/// from `div(a^{n+1}∇Π^{n+1}) = −div(u^{n+1}·∇P u^{n+1})`.
///
/// Iterate 0 is the constant-in-time extension of the data with ∇Π⁰ = 0.
/// Errors when the Cauchy gap grows over three consecutive iterates.
pub fn picard_solve(
    solver: &Solver,
    a0: &Field,
    u0: &Field,
    t_end: f64,
    dt: f64,
    n_iters: usize,
) -> Result<Vec<PicardIterate>, SolverError> {
    assert!(n_iters >= 2, "need at least two iterates");
    let samples = (t_end / dt).round().max(1.0) as usize;
    let u0 = ops::leray_project(u0);
    let cfg = solver.config();
    let step = AdvectionStep {
        dt,
        scheme: Default::default(),
        dealias: cfg.dealias,
        cfl_cap: cfg.cfl_cap,
    };

    let mut prev_a: Vec<Field> = vec![a0.clone(); samples + 1];
    let mut prev_u: Vec<Field> = vec![u0.clone(); samples + 1];
    let mut prev_gp: Vec<Field> = vec![Field::zeros(solver.grid(), 2); samples + 1];
    let mut out = Vec::with_capacity(n_iters);
    let mut growing = 0usize;
    let mut last_gap = f64::INFINITY;

    for index in 1..=n_iters {
        let mut a_traj = Vec::with_capacity(samples + 1);
        let mut u_traj = Vec::with_capacity(samples + 1);
        a_traj.push(a0.clone());
        u_traj.push(u0.clone());
        for k in 0..samples {
            let a_next = transport::advect(&a_traj[k], &prev_u[k], None, &step)?;
            let src = ops::dealiased_product(&a_traj[k], &prev_gp[k]).scale(-1.0);
            let u_next = transport::advect(&u_traj[k], &prev_u[k], Some(&src), &step)?;
            a_traj.push(a_next);
            u_traj.push(u_next);
        }
        let mut gp_traj = Vec::with_capacity(samples + 1);
        for k in 0..=samples {
            let state = FluidState {
                t: k as f64 * dt,
                a: a_traj[k].clone(),
                u: u_traj[k].clone(),
                grad_pi: Field::zeros(solver.grid(), 2),
                omega: Field::zeros(solver.grid(), 1),
            };
            gp_traj.push(solver.solve_pressure(&state, None)?);
        }
        let gap = (0..=samples)
            .map(|k| {
                norms::l2_norm(&a_traj[k].sub(&prev_a[k]))
                    + norms::l2_norm(&u_traj[k].sub(&prev_u[k]))
            })
            .fold(0.0f64, f64::max);
        if gap > last_gap {
            growing += 1;
            if growing >= 3 {
                return Err(SolverError::PicardDivergence(growing));
            }
        } else {
            growing = 0;
        }
        last_gap = gap;
        prev_a.clone_from(&a_traj);
        prev_u.clone_from(&u_traj);
        prev_gp.clone_from(&gp_traj);
        out.push(PicardIterate {
            index,
            a: a_traj,
            u: u_traj,
            grad_pi: gp_traj,
            cauchy_gap: gap,
        });
    }
    Ok(out)
}

/// Stability comparison of two trajectories at matched time samples,
/// following the uniqueness functional: distances
/// `‖δρ‖_{L²} + ‖√ρ₂ δu‖_{L²}` against the growth integral
/// `A(t) = ∫ (‖∇ρ₁/√ρ₂‖_{L^∞} + ‖∇Π₁/(ρ₁√ρ₂)‖_{L^∞} + ‖∇u₁‖_{L^∞})`.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub growth: Vec<f64>,
    /// Smallest C with distance(t) ≤ e^{C·A(t)} · distance(0) at all samples.
    pub fitted_c: f64,
    pub envelope_ok: bool,
}

pub fn stability_gap(
    run_a: &[FluidState],
    run_b: &[FluidState],
) -> Result<StabilityReport, SolverError> {
    if run_a.len() != run_b.len() || run_a.is_empty() {
        return Err(SolverError::TrajectoryMismatch(format!(
            "sample counts {} vs {}",
            run_a.len(),
            run_b.len()
        )));
    }
    for (s1, s2) in run_a.iter().zip(run_b) {
        if (s1.t - s2.t).abs() > 1e-10 * (1.0 + s1.t.abs()) {
            return Err(SolverError::TrajectoryMismatch(format!(
                "time samples {} vs {}",
                s1.t, s2.t
            )));
        }
        if s1.a.grid() != s2.a.grid() {
            return Err(SolverError::TrajectoryMismatch("grids differ".into()));
        }
    }
    let mut times = Vec::with_capacity(run_a.len());
    let mut distances = Vec::with_capacity(run_a.len());
    let mut rates = Vec::with_capacity(run_a.len());
    for (s1, s2) in run_a.iter().zip(run_b) {
        let rho1 = s1.rho();
        let rho2 = s2.rho();
        let drho = rho2.sub(&rho1);
        let sqrt_rho2 = rho2.map(f64::sqrt);
        let du = s2.u.sub(&s1.u);
        let weighted = Field::from_components(
            &ops::pointwise_product(&sqrt_rho2, &du.component(0)),
            &ops::pointwise_product(&sqrt_rho2, &du.component(1)),
        )
        .unwrap();
        let dist = norms::l2_norm(&drho) + norms::l2_norm(&weighted);
        times.push(s1.t);
        distances.push(dist);

        let grad_rho1 = ops::gradient(&rho1);
        let inv_sqrt_rho2 = rho2.map(|v| 1.0 / v.sqrt());
        let t1 = norms::linf_norm(
            &Field::from_components(
                &ops::pointwise_product(&inv_sqrt_rho2, &grad_rho1.component(0)),
                &ops::pointwise_product(&inv_sqrt_rho2, &grad_rho1.component(1)),
            )
            .unwrap(),
        );
        let w2: Vec<f64> = rho1
            .physical()
            .iter()
            .zip(rho2.physical())
            .map(|(r1, r2)| 1.0 / (r1 * r2.sqrt()))
            .collect();
        let w2 = Field::from_physical(rho1.grid(), 1, w2).unwrap();
        let t2 = norms::linf_norm(
            &Field::from_components(
                &ops::pointwise_product(&w2, &s1.grad_pi.component(0)),
                &ops::pointwise_product(&w2, &s1.grad_pi.component(1)),
            )
            .unwrap(),
        );
        let t3 = ops::jacobian_linf(&s1.u);
        rates.push(t1 + t2 + t3);
    }
    // trapezoid growth integral
    let mut growth = vec![0.0; times.len()];
    for k in 1..times.len() {
        let dt = times[k] - times[k - 1];
        growth[k] = growth[k - 1] + 0.5 * dt * (rates[k] + rates[k - 1]);
    }
    let d0 = distances[0];
    let fitted_c = if d0 > 0.0 {
        distances
            .iter()
            .zip(&growth)
            .skip(1)
            .map(|(d, a)| {
                if *a > 0.0 && *d > d0 {
                    (d / d0).ln() / a
                } else {
                    0.0
                }
            })
            .fold(0.0f64, f64::max)
    } else {
        0.0
    };
    let envelope_ok = if d0 > 0.0 {
        distances
            .iter()
            .zip(&growth)
            .all(|(d, a)| *d <= d0 * (fitted_c * a).exp() * (1.0 + 1e-9))
    } else {
        distances.iter().all(|d| *d == 0.0)
    };
    Ok(StabilityReport {
        times,
        distances,
        growth,
        fitted_c,
        envelope_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::{linf_norm, rel_l2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(grid: Grid, kmax: i64, seed: u64, terms: usize) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Field::zeros(grid, 1);
        for _ in 0..terms {
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

    fn taylor_green(grid: Grid, amp: f64) -> Field {
        Field::sample_vector(grid, move |x, y| {
            (amp * x.sin() * y.cos(), -amp * x.cos() * y.sin())
        })
    }

    fn heterogeneous_a(grid: Grid, eta: f64) -> Field {
        Field::sample(grid, move |x, y| 1.0 + eta * x.cos() * y.cos())
    }

    fn perturbed_tg(grid: Grid, amp: f64, seed: u64) -> Field {
        let base = taylor_green(grid, amp);
        let psi = random_band(grid, 3, seed, 6);
        let g = ops::gradient(&psi);
        let pert = Field::from_components(&g.component(1), &g.component(0).scale(-1.0)).unwrap();
        let pmax = linf_norm(&pert).max(1e-12);
        ops::leray_project(&base.add(&pert.scale(0.1 * amp / pmax)))
    }

    #[test]
    fn rest_state_is_steady() {
        let grid = Grid::square(32).unwrap();
        let solver = Solver::new(grid, SolverConfig::default());
        let state = solver
            .initialize(heterogeneous_a(grid, 0.3), Field::zeros(grid, 2))
            .unwrap();
        assert_eq!(norms::l2_norm(&state.grad_pi), 0.0);
        let (next, rec) = solver.step(&state, 0.01).unwrap();
        assert!(norms::max_diff(&next.a, &state.a) < 1e-14);
        assert!(linf_norm(&next.u) < 1e-14);
        assert_eq!(rec.energy, 0.0);
    }

    #[test]
    fn homogeneous_taylor_green_is_steady() {
        let grid = Grid::square(64).unwrap();
        let solver = Solver::new(grid, SolverConfig::default());
        let a = Field::sample(grid, |_, _| 1.0);
        let mut state = solver.initialize(a, taylor_green(grid, 1.0)).unwrap();
        let u0 = state.u.clone();
        for _ in 0..10 {
            let (next, _) = solver.step(&state, 0.02).unwrap();
            state = next;
        }
        assert!(
            rel_l2(&state.u, &u0) < 1e-10,
            "steady state drifted by {}",
            rel_l2(&state.u, &u0)
        );
    }

    #[test]
    fn energy_conserved_on_heterogeneous_run() {
        let grid = Grid::square(64).unwrap();
        let solver = Solver::new(grid, SolverConfig::default());
        let state = solver
            .initialize(heterogeneous_a(grid, 0.2), perturbed_tg(grid, 1.0, 5))
            .unwrap();
        let e0 = solver.diagnostics(&state).energy;
        let mut s = state;
        for _ in 0..25 {
            let (next, _) = solver.step(&s, 0.02).unwrap();
            s = next;
        }
        let e1 = solver.diagnostics(&s).energy;
        let drift = (e1 - e0).abs() / e0;
        // t = 0.5, so this is half the 1e−6-per-unit-time contract
        assert!(drift < 5e-7, "energy drift {drift:.3e}");
    }

    #[test]
    fn omega_stays_consistent_and_projection_idempotent() {
        let grid = Grid::square(64).unwrap();
        let solver = Solver::new(grid, SolverConfig::default());
        let mut state = solver
            .initialize(heterogeneous_a(grid, 0.15), perturbed_tg(grid, 1.0, 7))
            .unwrap();
        for _ in 0..5 {
            let (next, _) = solver.step(&state, 0.02).unwrap();
            state = next;
            let curl = ops::curl(&state.u);
            assert!(
                norms::max_diff(&curl, &state.omega) <= 1e-9 * linf_norm(&state.omega).max(1.0)
            );
            let reproj = ops::leray_project(&state.u);
            assert!(rel_l2(&reproj, &state.u) <= 1e-10);
        }
    }

    #[test]
    fn one_step_formulation_equivalence() {
        let grid = Grid::square(64).unwrap();
        let solver = Solver::new(grid, SolverConfig::default());
        let state = solver
            .initialize(heterogeneous_a(grid, 0.2), perturbed_tg(grid, 1.0, 11))
            .unwrap();
        let dt = 0.02;
        let (vel, _) = solver.step(&state, dt).unwrap();
        let (vort, _) = solver.step_vorticity(&state, dt).unwrap();
        let diff = rel_l2(&vort.u, &vel.u);
        assert!(diff <= 1e-6, "formulations disagree by {diff:.3e}");
    }

    #[test]
    fn density_drift_guard_trips_on_tightened_bounds() {
        let grid = Grid::square(64).unwrap();
        let cfg = SolverConfig {
            drift_tol: 0.0,
            ..SolverConfig::default()
        };
        let solver = Solver::new(grid, cfg);
        let state = solver
            .initialize(heterogeneous_a(grid, 0.2), perturbed_tg(grid, 1.0, 13))
            .unwrap();
        let rho = state.rho();
        let lo = rho.physical().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = rho
            .physical()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        // bounds strictly inside the initial range must trip immediately
        let pinch = 0.05 * (hi - lo);
        let solver = solver.with_rho_bounds((lo + pinch, hi - pinch));
        match solver.step(&state, 0.02) {
            Err(SolverError::DensityDrift {
                diagnostics,
                rho_min,
                rho_max,
                ..
            }) => {
                assert!(diagnostics.energy > 0.0);
                assert!(rho_min < lo + pinch || rho_max > hi - pinch);
            }
            other => panic!("expected density guard, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn cfl_guard_reports_diagnostics() {
        let grid = Grid::square(64).unwrap();
        let solver = Solver::new(grid, SolverConfig::default());
        let state = solver
            .initialize(heterogeneous_a(grid, 0.1), taylor_green(grid, 1.0))
            .unwrap();
        match solver.step(&state, 1.0) {
            Err(SolverError::Cfl {
                measured,
                diagnostics,
                ..
            }) => {
                assert!(measured > 0.5);
                assert!(diagnostics.energy > 0.0);
            }
            other => panic!("expected CFL error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn run_with_zero_horizon_emits_initial_row_only() {
        let grid = Grid::square(32).unwrap();
        let solver = Solver::new(grid, SolverConfig::default());
        let state = solver
            .initialize(heterogeneous_a(grid, 0.1), taylor_green(grid, 0.5))
            .unwrap();
        let opts = RunOptions {
            t_end: 0.0,
            dt: 0.01,
            ..RunOptions::default()
        };
        let result = run(&solver, state, &opts).unwrap();
        assert_eq!(result.records.len(), 1);
        assert_eq!(result.steps, 0);
        assert_eq!(result.status, RunStatus::Completed);
    }

    #[test]
    fn proxy_trip_time_monotone_in_bkm_cap() {
        let grid = Grid::square(32).unwrap();
        let solver = Solver::new(grid, SolverConfig::default());
        let state = solver
            .initialize(heterogeneous_a(grid, 0.3), perturbed_tg(grid, 1.0, 17))
            .unwrap();
        let base = solver.diagnostics(&state).bkm_integrand;
        let trip_time = |cap: f64| {
            let opts = RunOptions {
                dt: 0.02,
                t_end: 0.4,
                proxy: ProxyConfig {
                    bkm_cap: cap,
                    tail_cap: 1.0,
                },
                ..RunOptions::default()
            };
            let res = run(&solver, state.clone(), &opts).unwrap();
            res.tripped().map(|(t, _)| t).unwrap_or(f64::INFINITY)
        };
        let t1 = trip_time(base * 1.0000001);
        let t2 = trip_time(base * 2.0);
        assert!(
            t2 >= t1,
            "doubling the cap shortened the trip: {t1} -> {t2}"
        );
        // rest state never trips
        let rest = solver
            .initialize(heterogeneous_a(grid, 0.3), Field::zeros(grid, 2))
            .unwrap();
        let rec = solver.diagnostics(&rest);
        assert!(blow_up_proxy(&rec, &ProxyConfig::default()).is_none());
    }

    #[test]
    fn picard_gap_contracts_on_small_horizon() {
        let grid = Grid::square(32).unwrap();
        let solver = Solver::new(grid, SolverConfig::default());
        let a0 = Field::sample(grid, |_, _| 1.0);
        let u0 = taylor_green(grid, 0.4).add(&perturbed_tg(grid, 0.2, 23));
        let iters = picard_solve(&solver, &a0, &u0, 0.1, 0.0125, 5).unwrap();
        let gaps: Vec<f64> = iters.iter().map(|it| it.cauchy_gap).collect();
        for w in gaps.windows(2).skip(1) {
            assert!(w[1] < w[0], "cauchy gap failed to contract: {gaps:?}");
        }
        let ratio = gaps.last().unwrap() / gaps[gaps.len() - 2];
        assert!(ratio < 1.0, "final contraction ratio {ratio}");
    }

    #[test]
    fn picard_rest_state_iterates_are_constant() {
        let grid = Grid::square(32).unwrap();
        let solver = Solver::new(grid, SolverConfig::default());
        let a0 = heterogeneous_a(grid, 0.2);
        let u0 = Field::zeros(grid, 2);
        let iters = picard_solve(&solver, &a0, &u0, 0.05, 0.0125, 3).unwrap();
        for it in &iters[1..] {
            assert!(it.cauchy_gap < 1e-14);
            for u in &it.u {
                assert!(linf_norm(u) < 1e-14);
            }
        }
    }

    #[test]
    fn stability_gap_of_identical_runs_is_zero() {
        let grid = Grid::square(32).unwrap();
        let solver = Solver::new(grid, SolverConfig::default());
        let state = solver
            .initialize(heterogeneous_a(grid, 0.2), taylor_green(grid, 0.5))
            .unwrap();
        let opts = RunOptions {
            dt: 0.02,
            t_end: 0.1,
            collect_states: true,
            ..RunOptions::default()
        };
        let res = run(&solver, state, &opts).unwrap();
        let report = stability_gap(&res.states, &res.states).unwrap();
        assert!(report.distances.iter().all(|d| *d == 0.0));
        assert_eq!(report.fitted_c, 0.0);
        assert!(report.envelope_ok);
    }

    #[test]
    fn stability_gap_rejects_mismatched_trajectories() {
        let grid = Grid::square(32).unwrap();
        let solver = Solver::new(grid, SolverConfig::default());
        let state = solver
            .initialize(heterogeneous_a(grid, 0.2), taylor_green(grid, 0.5))
            .unwrap();
        let opts = RunOptions {
            dt: 0.02,
            t_end: 0.1,
            collect_states: true,
            ..RunOptions::default()
        };
        let res = run(&solver, state, &opts).unwrap();
        let shorter = &res.states[..res.states.len() - 1];
        assert!(matches!(
            stability_gap(&res.states, shorter),
            Err(SolverError::TrajectoryMismatch(_))
        ));
    }
}
