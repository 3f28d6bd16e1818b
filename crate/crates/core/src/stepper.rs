//! Semi-implicit time stepping for the coupled system.
//!
//! Each step splits into two sub-updates. First the order parameter,
//! cellwise and implicit in beta,
//!
//! ```text
//! rho_new = (I + tau beta)^{-1} (rho + tau (mu g'(rho) - pi(rho)))
//! ```
//!
//! with xi_new the associated selection, so that the inclusion
//! (rho_new - rho)/tau + xi_new + pi(rho) = mu g'(rho) holds cellwise to
//! prox tolerance. Then the chemical potential, linear and implicit, in the
//! conserved variable u = (1 + 2 g(rho)) mu with lagged mobility:
//!
//! ```text
//! [(1 + 2 g(rho_new)) - g'(rho_new)(rho_new - rho)] mu_new / tau
//!     + A mu_new = u / tau
//! ```
//!
//! where A is the Neumann operator assembled from kappa(mu).
//!
//! The mu-coefficient is chosen so that summing the update over cells
//! reproduces the integral balance d/dt \int u = \int mu g'(rho) d_t rho
//! exactly up to the linear-solver residual; the step refuses to run (rather
//! than silently shrinking tau) if that coefficient loses positivity. The
//! system matrix is an M-matrix, so nonnegative u yields nonnegative mu.

use crate::error::{Error, Result};
use crate::grid::{assemble_diffusion, integrate, Grid, ScalarField};
use crate::linsolve::{solve_cg, solve_tridiagonal, SpdSystem};
use crate::model::ModelSpec;
use crate::prox::resolve_field_stats;

/// Analytic initial-data profiles. Cosine modes have zero normal derivative
/// at the boundary, so they are compatible with the Neumann closure.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    Constant(f64),
    /// base + amplitude * cos(mode_x pi x / Lx) * cos(mode_y pi y / Ly)
    Cosine {
        base: f64,
        amplitude: f64,
        mode_x: u32,
        mode_y: u32,
    },
}

impl Profile {
    pub fn evaluate(&self, grid: Grid) -> ScalarField {
        match *self {
            Profile::Constant(v) => ScalarField::constant(grid, v),
            Profile::Cosine {
                base,
                amplitude,
                mode_x,
                mode_y,
            } => {
                let [lx, ly] = grid.lengths();
                ScalarField::from_fn(grid, |x, y| {
                    let mut v = (mode_x as f64 * std::f64::consts::PI * x / lx).cos();
                    if grid.dim() == 2 && mode_y > 0 {
                        v *= (mode_y as f64 * std::f64::consts::PI * y / ly).cos();
                    }
                    base + amplitude * v
                })
            }
        }
    }
}

/// Deterministic cosine perturbation field used by the study harness.
pub fn cosine_mode(grid: Grid, mode_x: u32, mode_y: u32) -> ScalarField {
    Profile::Cosine {
        base: 0.0,
        amplitude: 1.0,
        mode_x,
        mode_y,
    }
    .evaluate(grid)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolverKind {
    /// Tridiagonal sweep in 1D, conjugate gradients in 2D.
    Auto,
    Direct,
    Cg,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kind: SolverKind::Auto,
            tolerance: 1e-10,
            max_iterations: 5000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub grid: Grid,
    pub tau: f64,
    pub t_final: f64,
    pub model: ModelSpec,
    pub initial_mu: Profile,
    pub initial_rho: Profile,
    pub solver: SolverConfig,
    /// Relative basis of the prox tolerance (per cell: tol * max(1, |r|)).
    pub prox_tolerance: f64,
    /// Keep every k-th state in the trajectory (the initial and final states
    /// are always kept). Studies need 1.
    pub output_every: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "final time must be nonnegative, got {}",
                self.t_final
            )));
        }
        if self.output_every == 0 {
            return Err(Error::InvalidParameter(
                "output cadence must be at least 1".into(),
            ));
        }
        if !(self.prox_tolerance > 0.0) {
            return Err(Error::InvalidParameter(
                "prox tolerance must be positive".into(),
            ));
        }
        let report = self.model.validate(128)?;
        if !report.all_passed() {
            let names: Vec<&str> = report.failed().iter().map(|c| c.name).collect();
            return Err(Error::Validation(format!(
                "model conditions failed: {}",
                names.join(", ")
            )));
        }
        Ok(())
    }

    pub fn step_count(&self) -> usize {
        (self.t_final / self.tau).round() as usize
    }
}

/// The discrete solution triplet plus the redundant conserved variable.
#[derive(Clone, Debug)]
pub struct State {
    pub time: f64,
    pub mu: ScalarField,
    pub rho: ScalarField,
    pub xi: ScalarField,
    pub u: ScalarField,
}

#[derive(Clone, Copy, Debug)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    /// |sum vol (u_new - u_old) - sum vol mu_new g'(rho_new) (rho_new - rho)|.
    pub balance_residual: f64,
    pub min_mu: f64,
    pub rho_range: (f64, f64),
    pub xi_range: (f64, f64),
    pub cg_iterations: usize,
    pub prox_max_iterations: usize,
    /// min over cells of the mu-equation diagonal coefficient.
    pub safeguard_margin: f64,
}

/// Evaluate the configured initial profiles on the grid.
pub fn initial_fields(config: &RunConfig) -> (ScalarField, ScalarField) {
    (
        config.initial_mu.evaluate(config.grid),
        config.initial_rho.evaluate(config.grid),
    )
}

/// Build the time-zero state from explicit fields, enforcing the initial-data
/// assumptions: mu0 nonnegative and bounded, rho0 inside the compatibility
/// interval (hence inside the domain of beta).
pub fn init_state_from_fields(
    config: &RunConfig,
    mu0: ScalarField,
    rho0: ScalarField,
) -> Result<State> {
    if mu0.grid() != config.grid || rho0.grid() != config.grid {
        return Err(Error::Shape(
            "initial fields do not match the run grid".into(),
        ));
    }
    let model = &config.model;
    for (cell, &v) in mu0.values().iter().enumerate() {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Validation(format!(
                "mu0 must be nonnegative and finite: {v} at cell {cell}"
            )));
        }
    }
    let cc = model.constants;
    for (cell, &r) in rho0.values().iter().enumerate() {
        if !(r >= cc.rho_min && r <= cc.rho_max) {
            return Err(Error::Validation(format!(
                "rho0 must lie in [{}, {}]: {r} at cell {cell}",
                cc.rho_min, cc.rho_max
            )));
        }
        if model.potential.is_single_valued() && model.potential.beta(r).is_none() {
            return Err(Error::Validation(format!(
                "rho0 outside the domain of beta: {r} at cell {cell}"
            )));
        }
    }

    // xi0 is the zero-length-prox selection: beta(rho0) where single-valued,
    // the minimal selection 0 for the obstacle.
    let xi = if model.potential.is_single_valued() {
        let vals = rho0
            .values()
            .iter()
            .map(|&r| model.potential.beta(r).unwrap())
            .collect();
        ScalarField::from_values(config.grid, vals)?
    } else {
        ScalarField::constant(config.grid, 0.0)
    };

    let u_vals = rho0
        .values()
        .iter()
        .zip(mu0.values())
        .map(|(&r, &m)| (1.0 + 2.0 * model.coupling.g(r)) * m)
        .collect();
    let u = ScalarField::from_values(config.grid, u_vals)?;

    Ok(State {
        time: 0.0,
        mu: mu0,
        rho: rho0,
        xi,
        u,
    })
}

pub fn init_state(config: &RunConfig) -> Result<State> {
    let (mu0, rho0) = initial_fields(config);
    init_state_from_fields(config, mu0, rho0)
}

/// Order-parameter sub-step: explicit in mu and pi, implicit in beta.
/// Returns (rho_new, xi_new, worst prox iteration count).
pub fn step_rho(
    state: &State,
    model: &ModelSpec,
    tau: f64,
    prox_tol: f64,
) -> Result<(ScalarField, ScalarField, usize)> {
    let r_vals: Vec<f64> = state
        .rho
        .values()
        .iter()
        .zip(state.mu.values())
        .map(|(&rho, &mu)| rho + tau * (mu * model.coupling.g_prime(rho) - model.potential.pi(rho)))
        .collect();
    let r_field = ScalarField::from_values(state.rho.grid(), r_vals)?;
    resolve_field_stats(&model.potential, tau, &r_field, prox_tol)
}

/// Chemical-potential sub-step. Returns (mu_new, cg iterations, safeguard
/// margin); fails with a step-size error when the diagonal coefficient is
/// not strictly positive.
pub fn step_mu(
    state: &State,
    rho_new: &ScalarField,
    model: &ModelSpec,
    tau: f64,
    solver: &SolverConfig,
) -> Result<(ScalarField, usize, f64)> {
    let n = state.mu.len();
    let mut diagonal = Vec::with_capacity(n);
    let mut margin = f64::INFINITY;
    for cell in 0..n {
        let rn = rho_new.values()[cell];
        let delta = rn - state.rho.values()[cell];
        let coef = 1.0 + 2.0 * model.coupling.g(rn) - model.coupling.g_prime(rn) * delta;
        if coef < margin {
            margin = coef;
        }
        if !(coef > 0.0) {
            return Err(Error::StepSize { cell, margin: coef });
        }
        diagonal.push(coef / tau);
    }

    let matrix = assemble_diffusion(state.mu.grid(), &state.mu, &model.mobility)?;
    let rhs_vals: Vec<f64> = state.u.values().iter().map(|&u| u / tau).collect();
    let rhs = ScalarField::from_values(state.mu.grid(), rhs_vals)?;
    let system = SpdSystem::new(
        &matrix,
        diagonal,
        rhs,
        solver.tolerance,
        solver.max_iterations,
    )?;

    let use_direct = match solver.kind {
        SolverKind::Auto => state.mu.grid().dim() == 1,
        SolverKind::Direct => {
            if state.mu.grid().dim() != 1 {
                return Err(Error::InvalidParameter(
                    "direct solver is only available on 1D grids".into(),
                ));
            }
            true
        }
        SolverKind::Cg => false,
    };
    if use_direct {
        let mu_new = solve_tridiagonal(&system)?;
        Ok((mu_new, 0, margin))
    } else {
        let (mu_new, report) = solve_cg(&system)?;
        Ok((mu_new, report.iterations, margin))
    }
}

/// One full step: rho sub-step, mu sub-step, refresh of u, and the balance
/// monitor.
pub fn step(state: &State, model: &ModelSpec, config: &RunConfig) -> Result<(State, StepReport)> {
    let tau = config.tau;
    let (rho_new, xi_new, prox_iters) = step_rho(state, model, tau, config.prox_tolerance)?;
    let (mu_new, cg_iterations, safeguard_margin) =
        step_mu(state, &rho_new, model, tau, &config.solver)?;

    let u_vals: Vec<f64> = rho_new
        .values()
        .iter()
        .zip(mu_new.values())
        .map(|(&r, &m)| (1.0 + 2.0 * model.coupling.g(r)) * m)
        .collect();
    let u_new = ScalarField::from_values(config.grid, u_vals)?;

    let du = u_new.sub(&state.u)?;
    let source_vals: Vec<f64> = (0..mu_new.len())
        .map(|i| {
            mu_new.values()[i]
                * model.coupling.g_prime(rho_new.values()[i])
                * (rho_new.values()[i] - state.rho.values()[i])
        })
        .collect();
    let source = ScalarField::from_values(config.grid, source_vals)?;
    let balance_residual = (integrate(&du) - integrate(&source)).abs();

    let report = StepReport {
        step: 0, // filled by run()
        time: state.time + tau,
        balance_residual,
        min_mu: mu_new.min(),
        rho_range: (rho_new.min(), rho_new.max()),
        xi_range: (xi_new.min(), xi_new.max()),
        cg_iterations,
        prox_max_iterations: prox_iters,
        safeguard_margin,
    };
    let new_state = State {
        time: state.time + tau,
        mu: mu_new,
        rho: rho_new,
        xi: xi_new,
        u: u_new,
    };
    Ok((new_state, report))
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    /// States at the output cadence, always including the initial and final
    /// states. With cadence 1 this is every time level.
    pub states: Vec<State>,
    /// One report per step taken.
    pub reports: Vec<StepReport>,
}

impl Trajectory {
    pub fn last(&self) -> &State {
        self.states
            .last()
            .expect("trajectory holds at least the initial state")
    }
}

pub fn run(config: &RunConfig) -> Result<Trajectory> {
    config.validate()?;
    let state = init_state(config)?;
    run_from_state(config, state)
}

/// Advance an already-validated initial state to the final time.
pub fn run_from_state(config: &RunConfig, initial: State) -> Result<Trajectory> {
    let steps = config.step_count();
    let mut states = Vec::with_capacity(steps / config.output_every + 2);
    let mut reports = Vec::with_capacity(steps);
    let mut current = initial;
    states.push(current.clone());
    for n in 1..=steps {
        let (next, mut report) = step(&current, &config.model, config)?;
        report.step = n;
        reports.push(report);
        current = next;
        if n % config.output_every == 0 || n == steps {
            states.push(current.clone());
        }
    }
    Ok(Trajectory { states, reports })
}
