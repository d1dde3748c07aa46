//! Experiment drivers: the simulate pipeline with CSV/FLD1 output, the
//! rescaling-equivariance check, lifespan scans in the velocity amplitude
//! and in the heterogeneity, and the self-test battery.

use crate::config::{ConfigError, ExperimentConfig};
use crate::dyadic::DyadicLadder;
use crate::field::{self, Field, FieldError};
use crate::grid::Grid;
use crate::init;
use crate::norms;
use crate::ops;
use crate::pressure;
use crate::solver::{
    self, DiagnosticsRecord, Formulation, RunOptions, RunResult, RunStatus, Solver, SolverError,
};
use crate::transport;
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    BadArgument(String),
}

// --- diagnostics CSV ------------------------------------------------------

pub const DIAGNOSTICS_HEADER: &str =
    "t,energy,rho_min,rho_max,sup_grad_u,bkm_integrand,omega_linf,omega_l2,X,B,tail_fraction";

/// Render diagnostics rows with 17 significant digits.
pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut s = String::from(DIAGNOSTICS_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.t,
            r.energy,
            r.rho_min,
            r.rho_max,
            r.sup_grad_u,
            r.bkm_integrand,
            r.omega_linf,
            r.omega_l2,
            r.x_norm,
            r.b_norm,
            r.tail_fraction
        ));
    }
    s
}

// --- simulate -------------------------------------------------------------

pub struct SimulateOutcome {
    pub result: RunResult,
    pub csv_path: PathBuf,
}

/// Run the configured simulation, writing `diagnostics.csv`, the effective
/// config echo and FLD1 snapshots (`a_NNNN.fld`, `u_NNNN.fld` per recorded
/// row) into `out_dir`.
pub fn simulate(
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<SimulateOutcome, ExperimentError> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let solver = Solver::new(grid, cfg.solver_config());
    let data = init::build(cfg, solver.ladder());
    let state = solver.initialize(data.a, data.u)?;
    let opts = RunOptions {
        dt: cfg.time_dt,
        t_end: cfg.time_t_end,
        stride: cfg.output_stride,
        proxy: cfg.proxy_config(),
        collect_states: true,
        formulation: Formulation::Velocity,
        forcing: None,
    };
    let result = solver::run(&solver, state, &opts)?;

    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("config_echo.cfg"), cfg.echo())?;
    let csv_path = out_dir.join("diagnostics.csv");
    std::fs::write(&csv_path, diagnostics_csv(&result.records))?;
    for (i, s) in result.states.iter().enumerate() {
        field::write_fld1_file(&s.a, out_dir.join(format!("a_{i:04}.fld")))?;
        field::write_fld1_file(&s.u, out_dir.join(format!("u_{i:04}.fld")))?;
    }
    Ok(SimulateOutcome { result, csv_path })
}

// --- rescaling equivariance -------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum RescaleStatus {
    Conclusive,
    /// A blow-up proxy tripped in one of the runs.
    Inconclusive(String),
}

#[derive(Debug, Clone)]
pub struct RescaleReport {
    pub eps: f64,
    pub rho_discrepancy: f64,
    pub u_discrepancy: f64,
    pub grad_pi_discrepancy: f64,
    pub status: RescaleStatus,
}

impl RescaleReport {
    pub fn max_discrepancy(&self) -> f64 {
        self.rho_discrepancy
            .max(self.u_discrepancy)
            .max(self.grad_pi_discrepancy)
    }
}

/// Exact scaling symmetry check: data `(ρ₀, ũ₀)` run to `ε·t_end` with
/// step `ε·dt` must coincide with data `(ρ₀, ε·ũ₀)` run to `t_end` with
/// step `dt`, after unscaling `u` by `ε` and `∇Π` by `ε²`. The symmetry
/// is exact for the discrete scheme, so any discrepancy is solver error.
pub fn rescale_equivariance_check(
    cfg: &ExperimentConfig,
    eps: f64,
) -> Result<RescaleReport, ExperimentError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(ExperimentError::BadArgument(format!(
            "eps must lie in (0, 1], got {eps}"
        )));
    }
    cfg.validate()?;
    let grid = cfg.grid()?;
    let solver = Solver::new(grid, cfg.solver_config());
    let data = init::build(cfg, solver.ladder());

    // base step sized for the slow run (velocity ε·ũ); both runs then share
    // the same CFL number and step count
    let dt = if cfg.time_dt > 0.0 {
        cfg.time_dt
    } else {
        solver::auto_dt(&data.u.scale(eps), cfg.time_cfl_cap, cfg.time_t_end)
    };

    let run_with = |u0: Field, t_end: f64, dt: f64| -> Result<RunResult, ExperimentError> {
        let state = solver.initialize(data.a.clone(), u0)?;
        let opts = RunOptions {
            dt,
            t_end,
            stride: usize::MAX,
            proxy: cfg.proxy_config(),
            collect_states: false,
            formulation: Formulation::Velocity,
            forcing: None,
        };
        Ok(solver::run(&solver, state, &opts)?)
    };

    let fast = run_with(data.u.clone(), eps * cfg.time_t_end, eps * dt)?;
    let slow = run_with(data.u.scale(eps), cfg.time_t_end, dt)?;
    if let Some((t, reason)) = fast.tripped() {
        return Ok(RescaleReport {
            eps,
            rho_discrepancy: f64::NAN,
            u_discrepancy: f64::NAN,
            grad_pi_discrepancy: f64::NAN,
            status: RescaleStatus::Inconclusive(format!(
                "reference run tripped at t = {t:.6}: {reason}"
            )),
        });
    }
    if let Some((t, reason)) = slow.tripped() {
        return Ok(RescaleReport {
            eps,
            rho_discrepancy: f64::NAN,
            u_discrepancy: f64::NAN,
            grad_pi_discrepancy: f64::NAN,
            status: RescaleStatus::Inconclusive(format!(
                "scaled run tripped at t = {t:.6}: {reason}"
            )),
        });
    }

    let sf = fast.final_state().expect("states kept");
    let ss = slow.final_state().expect("states kept");
    let rho_f = sf.rho();
    let rho_s = ss.rho();
    Ok(RescaleReport {
        eps,
        rho_discrepancy: norms::rel_l2(&rho_s, &rho_f),
        u_discrepancy: norms::rel_l2(&ss.u.scale(1.0 / eps), &sf.u),
        grad_pi_discrepancy: norms::rel_l2(&ss.grad_pi.scale(1.0 / (eps * eps)), &sf.grad_pi),
        status: RescaleStatus::Conclusive,
    })
}

// --- lifespan scans ---------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    Epsilon,
    Eta,
}

impl ScanMode {
    pub fn param_name(&self) -> &'static str {
        match self {
            ScanMode::Epsilon => "eps",
            ScanMode::Eta => "eta",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScanRow {
    pub param: f64,
    /// Proxy-tripping time; `None` when the run reached `t_end`.
    pub trip_time: Option<f64>,
    pub trip_reason: String,
    pub steps: usize,
    pub final_t: f64,
    /// Trapezoid `∫ bkm dt` over the recorded rows.
    pub bkm_integral: f64,
    /// Trapezoid `∫ X dt`.
    pub x_integral: f64,
    pub b_initial: f64,
    pub b_final: f64,
    /// Trapezoid `∫ ‖∇b ∧ ∇Π‖_{L^∞} dt` over recorded states.
    pub wedge_integral: f64,
    /// Fitted C in the envelope `B(t) ≤ B₀ · exp(C ∫X)`.
    pub envelope_c: f64,
    /// Fixed-point sweep count of the final pressure solve (0 when CG ran),
    /// a growth flag for the heterogeneity scan.
    pub pressure_iters: usize,
}

#[derive(Debug, Clone)]
pub struct ScanReport {
    pub mode: ScanMode,
    /// Rows completed before any failure, in parameter order.
    pub rows: Vec<ScanRow>,
    /// Set when a run failed for a non-proxy reason; the scan stops there
    /// and `rows` holds the partial results.
    pub aborted: Option<String>,
    /// ε-scan: `ε·T(ε)` nondecreasing within a 2× band;
    /// η-scan: `T(η)` nondecreasing as η decreases. No-trip rows count as
    /// unbounded lifespans.
    pub monotone_ok: bool,
    /// η-scan only: least-squares fit `T ≈ α + β·log(1 + log(1/η))` over
    /// tripped rows, with its r².
    pub fit: Option<(f64, f64, f64)>,
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

fn scan_run(
    cfg: &ExperimentConfig,
    param: f64,
    mode: ScanMode,
) -> Result<ScanRow, ExperimentError> {
    let mut local = cfg.clone();
    match mode {
        ScanMode::Epsilon => local.init_u_amp = cfg.init_u_amp * param,
        ScanMode::Eta => local.init_b_amp = param,
    }
    let grid = local.grid()?;
    let solver = Solver::new(grid, local.solver_config());
    let data = init::build(&local, solver.ladder());
    let state = solver.initialize(data.a, data.u)?;
    let opts = RunOptions {
        dt: local.time_dt,
        t_end: local.time_t_end,
        stride: local.output_stride,
        proxy: local.proxy_config(),
        collect_states: true,
        formulation: Formulation::Velocity,
        forcing: None,
    };
    let result = solver::run(&solver, state, &opts)?;

    let times: Vec<f64> = result.records.iter().map(|r| r.t).collect();
    let bkm: Vec<f64> = result.records.iter().map(|r| r.bkm_integrand).collect();
    let xs: Vec<f64> = result.records.iter().map(|r| r.x_norm).collect();
    let bs: Vec<f64> = result.records.iter().map(|r| r.b_norm).collect();
    let wedge: Vec<f64> = result
        .states
        .iter()
        .map(|s| {
            transport::vorticity_source(&s.rho(), &s.grad_pi)
                .map(|f| norms::linf_norm(&f))
                .unwrap_or(f64::NAN)
        })
        .collect();
    let state_times: Vec<f64> = result.states.iter().map(|s| s.t).collect();

    let b0 = bs[0];
    let mut envelope_c = 0.0f64;
    if b0 > 0.0 {
        let mut xint = 0.0;
        for k in 1..times.len() {
            xint += 0.5 * (times[k] - times[k - 1]) * (xs[k] + xs[k - 1]);
            if bs[k] > b0 && xint > 0.0 {
                envelope_c = envelope_c.max((bs[k] / b0).ln() / xint);
            }
        }
    }

    let pressure_iters = {
        let last = result.states.last().expect("states");
        let pu = ops::leray_project(&last.u);
        let flux = ops::dot_grad(&last.u, &pu, true);
        let prob = pressure::EllipticProblem::new(last.a.clone(), flux)
            .expect("scan state keeps ellipticity");
        pressure::solve_fixed_point(
            &prob,
            local.pressure_tol,
            local.pressure_max_iter.max(500),
            1.0,
        )
        .map(|s| s.iterations)
        .unwrap_or(0)
    };

    let (trip_time, trip_reason) = match &result.status {
        RunStatus::ProxyTripped { t, reason } => (Some(*t), reason.to_string()),
        RunStatus::Completed => (None, String::from("none")),
    };
    Ok(ScanRow {
        param,
        trip_time,
        trip_reason,
        steps: result.steps,
        final_t: *times.last().unwrap(),
        bkm_integral: trapezoid(&times, &bkm),
        x_integral: trapezoid(&times, &xs),
        b_initial: b0,
        b_final: *bs.last().unwrap(),
        wedge_integral: trapezoid(&state_times, &wedge),
        envelope_c,
        pressure_iters,
    })
}

/// Lifespan scan in the velocity amplitude: run with `u₀` scaled by each
/// ε at fixed density. Runs use the CFL-derived step so the cost per run
/// stays roughly constant across the scan.
pub fn lifespan_scan_epsilon(
    cfg: &ExperimentConfig,
    eps_list: &[f64],
) -> Result<ScanReport, ExperimentError> {
    if eps_list.windows(2).any(|w| w[1] >= w[0]) || eps_list.iter().any(|&e| e > 1.0 || e <= 0.0) {
        return Err(ExperimentError::BadArgument(
            "eps list must be strictly decreasing within (0, 1]".into(),
        ));
    }
    let (rows, aborted) = run_scan_rows(cfg, eps_list, ScanMode::Epsilon);
    // ε·T(ε) nondecreasing within a 2× band; no-trip rows are unbounded
    let mut monotone_ok = true;
    let mut prev = f64::NEG_INFINITY;
    for row in &rows {
        let v = row
            .trip_time
            .map(|t| row.param * t)
            .unwrap_or(f64::INFINITY);
        if v < prev * 0.5 {
            monotone_ok = false;
        }
        if v.is_finite() || prev.is_infinite() {
            prev = v.max(prev * 0.5);
        }
        if v.is_infinite() {
            prev = f64::INFINITY;
        }
    }
    Ok(ScanReport {
        mode: ScanMode::Epsilon,
        rows,
        aborted,
        monotone_ok,
        fit: None,
    })
}

/// Run the scan rows in parallel; on a non-proxy failure keep the rows
/// that completed before the failing parameter (partial-output contract).
fn run_scan_rows(
    cfg: &ExperimentConfig,
    params: &[f64],
    mode: ScanMode,
) -> (Vec<ScanRow>, Option<String>) {
    let results: Vec<Result<ScanRow, ExperimentError>> =
        params.par_iter().map(|&p| scan_run(cfg, p, mode)).collect();
    let mut rows = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                return (
                    rows,
                    Some(format!("{} = {} failed: {e}", mode.param_name(), params[i])),
                )
            }
        }
    }
    (rows, None)
}

/// Lifespan scan in the heterogeneity: `b₀ = η ·` unit profile at fixed
/// `u₀`. Reports the double-log fit of the tripped lifespans.
pub fn lifespan_scan_eta(
    cfg: &ExperimentConfig,
    eta_list: &[f64],
) -> Result<ScanReport, ExperimentError> {
    if eta_list.windows(2).any(|w| w[1] >= w[0]) || eta_list.iter().any(|&e| e >= 1.0 || e < 0.0) {
        return Err(ExperimentError::BadArgument(
            "eta list must be strictly decreasing within [0, 1)".into(),
        ));
    }
    let (rows, aborted) = run_scan_rows(cfg, eta_list, ScanMode::Eta);
    let mut monotone_ok = true;
    let mut prev = f64::NEG_INFINITY;
    for row in &rows {
        let t = row.trip_time.unwrap_or(f64::INFINITY);
        if t < prev {
            monotone_ok = false;
        }
        prev = t;
    }
    // informational fit of T against log(1 + log(1/η)) over tripped rows
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| {
            r.trip_time
                .filter(|_| r.param > 0.0)
                .map(|t| ((1.0 + (1.0 / r.param).ln()).ln(), t))
        })
        .collect();
    let fit = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let denom = n * sxx - sx * sx;
        if denom.abs() > 1e-30 {
            let beta = (n * sxy - sx * sy) / denom;
            let alpha = (sy - beta * sx) / n;
            let mean_y = sy / n;
            let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
            let ss_res: f64 = pts.iter().map(|p| (p.1 - alpha - beta * p.0).powi(2)).sum();
            let r2 = if ss_tot > 0.0 {
                1.0 - ss_res / ss_tot
            } else {
                1.0
            };
            Some((alpha, beta, r2))
        } else {
            None
        }
    } else {
        None
    };
    Ok(ScanReport {
        mode: ScanMode::Eta,
        rows,
        aborted,
        monotone_ok,
        fit,
    })
}

/// Deterministic CSV of a scan report, ordered by parameter.
pub fn scan_csv(report: &ScanReport) -> String {
    let mut s = format!(
        "{},trip_time,trip_reason,steps,final_t,bkm_integral,x_integral,b_initial,b_final,wedge_integral,envelope_c,pressure_iters\n",
        report.mode.param_name()
    );
    for r in &report.rows {
        let trip = r
            .trip_time
            .map(|t| format!("{t:.16e}"))
            .unwrap_or_else(|| "no_trip".into());
        s.push_str(&format!(
            "{:.16e},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            r.param,
            trip,
            r.trip_reason.replace(',', ";"),
            r.steps,
            r.final_t,
            r.bkm_integral,
            r.x_integral,
            r.b_initial,
            r.b_final,
            r.wedge_integral,
            r.envelope_c,
            r.pressure_iters
        ));
    }
    s
}

// --- self-test battery -------------------------------------------------------

pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

pub struct SelftestReport {
    pub suites: Vec<SuiteOutcome>,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    /// Deterministic summary (no timings): one `name: PASS/FAIL` line per
    /// suite. Timings go to stderr in the CLI so reruns stay byte-identical.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for suite in &self.suites {
            s.push_str(&format!(
                "{}: {}{}\n",
                suite.name,
                if suite.passed { "PASS" } else { "FAIL" },
                if suite.detail.is_empty() {
                    String::new()
                } else {
                    format!(" ({})", suite.detail)
                }
            ));
        }
        s.push_str(if self.all_passed() {
            "selftest: all suites passed\n"
        } else {
            "selftest: FAILURES detected\n"
        });
        s
    }
}

fn random_band(grid: Grid, kmax: i64, seed: u64, terms: usize) -> Field {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
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

/// The property battery at n = 64 with fixed seeds. Returns per-suite
/// outcomes; the CLI maps failures to a nonzero exit.
pub fn selftest() -> SelftestReport {
    let grid = Grid::square(64).unwrap();
    let ladder = DyadicLadder::new(grid);
    let mut suites = Vec::new();
    let mut push = |name: &'static str, f: &dyn Fn() -> (bool, String)| {
        let start = std::time::Instant::now();
        let (passed, detail) = f();
        suites.push(SuiteOutcome {
            name,
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        });
    };

    push("fft_round_trip", &|| {
        let f = random_band(grid, 20, 1, 20);
        let g = Field::from_spectral(grid, 1, f.spectral().to_vec()).unwrap();
        let err = norms::max_diff(&f, &g) / norms::linf_norm(&f).max(1.0);
        (err <= 1e-12, format!("max rel err {err:.2e}"))
    });

    push("partition_of_unity", &|| {
        let mut worst: f64 = 0.0;
        for seed in 0..20 {
            let f = random_band(grid, 20, 100 + seed, 15);
            let mut sum = Field::zeros(grid, 1);
            for j in -1..=ladder.jmax() {
                sum = sum.add(&ladder.block(j, &f).unwrap());
            }
            worst = worst.max(norms::max_diff(&sum, &f) / norms::linf_norm(&f).max(1.0));
        }
        (worst <= 1e-12, format!("worst reconstruction {worst:.2e}"))
    });

    push("quasi_orthogonality", &|| {
        let f = random_band(grid, 20, 7, 15);
        let mut worst: f64 = 0.0;
        for j in -1..=ladder.jmax() {
            let bj = ladder.block(j, &f).unwrap();
            for j2 in -1..=ladder.jmax() {
                if (j - j2).abs() >= 2 {
                    worst = worst.max(norms::linf_norm(&ladder.block(j2, &bj).unwrap()));
                }
            }
        }
        let rel = worst / norms::linf_norm(&f).max(1.0);
        (rel <= 1e-12, format!("worst leakage {rel:.2e}"))
    });

    push("bony_identity", &|| {
        let mut worst: f64 = 0.0;
        for seed in 0..10 {
            let u = random_band(grid, 20, 200 + seed, 15);
            let v = random_band(grid, 20, 300 + seed, 15);
            let sum = ladder
                .paraproduct(&u, &v)
                .unwrap()
                .add(&ladder.paraproduct(&v, &u).unwrap())
                .add(&ladder.remainder(&u, &v).unwrap());
            let product = ops::dealiased_product(&u, &v);
            worst =
                worst.max(norms::max_diff(&sum, &product) / norms::linf_norm(&product).max(1.0));
        }
        (worst <= 1e-10, format!("worst defect {worst:.2e}"))
    });

    push("leray_biot_savart", &|| {
        let mut ok = true;
        let mut detail = String::new();
        for seed in 0..5 {
            let omega = {
                let raw = random_band(grid, 12, 400 + seed, 10);
                let m = raw.mean(0);
                raw.map(move |v| v - m)
            };
            let u = ops::biot_savart(&omega, (0.1, -0.2)).unwrap();
            let back = ops::curl(&u);
            let curl_err = norms::max_diff(&back, &omega) / norms::linf_norm(&omega).max(1.0);
            let (dmax, gmax) = ops::divergence_residual(&u);
            let p = ops::leray_project(&u);
            let proj_err = norms::rel_l2(&p, &u);
            if curl_err > 1e-10 || dmax > 1e-10 * gmax.max(1.0) || proj_err > 1e-12 {
                ok = false;
                detail = format!("seed {seed}: curl {curl_err:.2e} div {dmax:.2e}");
                break;
            }
        }
        (ok, detail)
    });

    push("pressure_oracle", &|| {
        let mut worst: f64 = 0.0;
        let mut bound_ok = true;
        for seed in 0..5 {
            let raw = random_band(grid, 5, 500 + seed, 8);
            let m = norms::linf_norm(&raw).max(1e-12);
            let a = raw.map(move |v| 1.0 + 0.4 * v / m);
            let flux = Field::from_components(
                &random_band(grid, 8, 600 + seed, 8),
                &random_band(grid, 8, 700 + seed, 8),
            )
            .unwrap();
            let prob = pressure::EllipticProblem::new(a, flux).unwrap();
            let fp = pressure::solve_fixed_point(&prob, 1e-11, 2000, 1.0).unwrap();
            let cg = pressure::solve_cg(&prob, 1e-11, 500).unwrap();
            worst = worst.max(norms::rel_l2(&fp.grad_pi, &cg.grad_pi));
            let lhs = prob.a_star() * norms::l2_norm(&cg.grad_pi);
            let rhs = norms::lp_norm(prob.flux(), 2.0);
            if lhs > rhs * (1.0 + 1e-8) {
                bound_ok = false;
            }
        }
        (
            worst <= 1e-7 && bound_ok,
            format!("worst route gap {worst:.2e}, energy bound {}", bound_ok),
        )
    });

    push("transport_translation", &|| {
        let q0 = Field::sample(grid, |x, y| (3.0 * x).cos() + 0.5 * (2.0 * x + y).sin());
        let u = Field::sample_vector(grid, |_, _| (1.0, 0.0));
        let dt = 3e-3;
        let step = transport::AdvectionStep::new(dt);
        let mut q = q0.clone();
        for _ in 0..100 {
            q = transport::advect(&q, &u, None, &step).unwrap();
        }
        let t = dt * 100.0;
        let exact: Vec<rustfft::num_complex::Complex64> = q0
            .spectral()
            .iter()
            .enumerate()
            .map(|(idx, v)| {
                let (mx, _) = grid.modes_at(idx);
                let phase = -grid.wavenumber(mx) * t;
                v * rustfft::num_complex::Complex64::new(phase.cos(), phase.sin())
            })
            .collect();
        let exact = Field::from_spectral(grid, 1, exact).unwrap();
        let err = norms::max_diff(&q, &exact);
        (err <= 1e-8, format!("translation err {err:.2e}"))
    });

    push("cancellation_identity", &|| {
        let mut worst: f64 = 0.0;
        for seed in 0..5 {
            let psi = random_band(grid, 10, 800 + seed, 10);
            let g = ops::gradient(&psi);
            let u = Field::from_components(&g.component(1), &g.component(0).scale(-1.0)).unwrap();
            let rep = transport::cancellation_identity_check(&u).unwrap();
            worst = worst.max(rep.discrepancy / rep.magnitude.max(1.0));
        }
        (worst <= 1e-9, format!("worst discrepancy {worst:.2e}"))
    });

    push("euler_conservation", &|| {
        let solver = Solver::new(grid, crate::solver::SolverConfig::default());
        let a = Field::sample(grid, |x, y| 1.0 + 0.2 * x.cos() * y.cos());
        let k = grid.wavenumber(1);
        let base = Field::sample_vector(grid, move |x, y| {
            (
                (k * x).sin() * (k * y).cos(),
                -(k * x).cos() * (k * y).sin(),
            )
        });
        let psi = random_band(grid, 3, 900, 6);
        let gp = ops::gradient(&psi);
        let pert = Field::from_components(&gp.component(1), &gp.component(0).scale(-1.0)).unwrap();
        let u0 =
            ops::leray_project(&base.add(&pert.scale(0.1 / norms::linf_norm(&pert).max(1e-12))));
        let state = solver.initialize(a, u0).unwrap();
        let e0 = solver.diagnostics(&state).energy;
        let mut s = state;
        for _ in 0..10 {
            let (n, _) = solver.step(&s, 0.02).unwrap();
            s = n;
        }
        let drift = (solver.diagnostics(&s).energy - e0).abs() / e0;
        let curl_err =
            norms::max_diff(&ops::curl(&s.u), &s.omega) / norms::linf_norm(&s.omega).max(1.0);
        (
            drift <= 1e-8 && curl_err <= 1e-9,
            format!("energy drift {drift:.2e}, curl err {curl_err:.2e}"),
        )
    });

    push("picard_contraction", &|| {
        let solver = Solver::new(grid, crate::solver::SolverConfig::default());
        let a0 = Field::sample(grid, |_, _| 1.0);
        let k = grid.wavenumber(1);
        let u0 = Field::sample_vector(grid, move |x, y| {
            (
                0.4 * (k * x).sin() * (k * y).cos(),
                -0.4 * (k * x).cos() * (k * y).sin(),
            )
        });
        let psi = random_band(grid, 3, 950, 5);
        let gp = ops::gradient(&psi);
        let pert = Field::from_components(&gp.component(1), &gp.component(0).scale(-1.0)).unwrap();
        let u0 = ops::leray_project(&u0.add(&pert.scale(0.1 / norms::linf_norm(&pert).max(1e-12))));
        match solver::picard_solve(&solver, &a0, &u0, 0.1, 0.0125, 5) {
            Ok(iters) => {
                let gaps: Vec<f64> = iters.iter().map(|i| i.cauchy_gap).collect();
                let contracting = gaps.windows(2).skip(1).all(|w| w[1] < w[0]);
                (contracting, format!("gaps {gaps:?}"))
            }
            Err(e) => (false, format!("{e}")),
        }
    });

    push("fault_injection_control", &|| {
        // the battery must notice a corrupted cutoff table; |k| = 3 lands
        // squarely in annulus 1
        let mut bad = DyadicLadder::new(grid);
        bad.corrupt_table_for_test(1);
        let f = random_band(grid, 10, 999, 10).add(&Field::sample(grid, |x, _| {
            (3.0 * grid.wavenumber(1) * x).cos()
        }));
        let mut sum = Field::zeros(grid, 1);
        for j in -1..=bad.jmax() {
            sum = sum.add(&bad.block(j, &f).unwrap());
        }
        let err = norms::max_diff(&sum, &f) / norms::linf_norm(&f).max(1.0);
        (
            err > 1e-12,
            format!("corruption visible at {err:.2e} (detector alive)"),
        )
    });

    SelftestReport { suites }
}
