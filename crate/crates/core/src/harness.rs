//! Verification harness: solution-pair experiments against the stability
//! estimate, the cellwise estimate audit, scheme self-convergence, and
//! range-invariant audits.
//!
//! The stability constant of the estimate is existential, so pair studies
//! record empirical ratios and check boundedness and spread rather than a
//! closed-form constant. The one exception is the cellwise check, whose
//! structural constant C = 3 max(1, sup|g'|, L_{g'} sup mu_1 + L_pi) follows
//! from the Lipschitz bookkeeping of the contraction argument and is
//! computed from the stored constants.

use crate::error::{Error, Result};
use crate::grid::{h_norm, history_norms, ScalarField};
use crate::model::ModelSpec;
use crate::stepper::{
    cosine_mode, init_state_from_fields, initial_fields, run_from_state, RunConfig, Trajectory,
};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Distinguishes genuinely identical initial data from tiny perturbations.
const RHS_FLOOR: f64 = 1e-14;

/// Below this, two trajectories count as numerically identical.
const IDENTICAL_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbTarget {
    Mu0,
    Rho0,
    Both,
}

/// Deterministic analytic perturbation of the initial data.
#[derive(Clone, Copy, Debug)]
pub struct Perturbation {
    pub target: PerturbTarget,
    pub mode_x: u32,
    pub mode_y: u32,
    pub amplitude: f64,
}

#[derive(Clone, Debug)]
pub struct PairExperiment {
    pub base: RunConfig,
    pub perturbation: Perturbation,
}

#[derive(Clone, Copy, Debug)]
pub struct PairReport {
    pub mu_l2: f64,
    pub rho_linf: f64,
    pub xi_l1: f64,
    /// mu_l2 + rho_linf + xi_l1.
    pub lhs: f64,
    /// H-norm of the initial mu difference plus the initial rho difference.
    pub rhs: f64,
    /// None means the initial data were identical (rhs below floor).
    pub ratio: Option<f64>,
    /// Set when identical data produced trajectories that differ above the
    /// numerical floor; a uniqueness violation and a test-failure signal.
    pub uniqueness_violation: bool,
}

#[derive(Debug)]
pub struct PairOutput {
    pub report: PairReport,
    pub first: Trajectory,
    pub second: Trajectory,
}

fn perturbed_fields(base: &RunConfig, pert: &Perturbation) -> Result<(ScalarField, ScalarField)> {
    let (mut mu0, mut rho0) = initial_fields(base);
    let bump = cosine_mode(base.grid, pert.mode_x, pert.mode_y);
    let add = |f: &mut ScalarField, eps: f64| {
        for (v, b) in f.values_mut().iter_mut().zip(bump.values()) {
            *v += eps * b;
        }
    };
    match pert.target {
        PerturbTarget::Mu0 => add(&mut mu0, pert.amplitude),
        PerturbTarget::Rho0 => add(&mut rho0, pert.amplitude),
        PerturbTarget::Both => {
            add(&mut mu0, pert.amplitude);
            add(&mut rho0, pert.amplitude);
        }
    }
    Ok((mu0, rho0))
}

/// Runs the base and the perturbed trajectory on the same grid and step, and
/// measures the stability-estimate norms of their difference.
pub fn run_pair(experiment: &PairExperiment) -> Result<PairOutput> {
    let mut config = experiment.base.clone();
    config.output_every = 1; // norm histories need every time level
    config.validate()?;

    let (mu0_a, rho0_a) = initial_fields(&config);
    let (mu0_b, rho0_b) = perturbed_fields(&config, &experiment.perturbation)?;
    // perturbed data must satisfy the same initial-data assumptions
    let state_a = init_state_from_fields(&config, mu0_a, rho0_a)?;
    let state_b = init_state_from_fields(&config, mu0_b, rho0_b)?;

    let first = run_from_state(&config, state_a)?;
    let second = run_from_state(&config, state_b)?;
    let report = pair_report(&first, &second, config.tau)?;
    Ok(PairOutput {
        report,
        first,
        second,
    })
}

/// Norms of the difference of two already-computed trajectories.
pub fn pair_report(first: &Trajectory, second: &Trajectory, tau: f64) -> Result<PairReport> {
    if first.states.len() != second.states.len() {
        return Err(Error::Shape(format!(
            "trajectories have {} and {} states",
            first.states.len(),
            second.states.len()
        )));
    }
    let diff = |pick: fn(&crate::stepper::State) -> &ScalarField| -> Result<Vec<ScalarField>> {
        first
            .states
            .iter()
            .zip(&second.states)
            .map(|(a, b)| pick(a).sub(pick(b)))
            .collect()
    };
    let mu = history_norms(&diff(|s| &s.mu)?, tau)?;
    let rho = history_norms(&diff(|s| &s.rho)?, tau)?;
    let xi = history_norms(&diff(|s| &s.xi)?, tau)?;

    let rhs = h_norm(&first.states[0].mu.sub(&second.states[0].mu)?)
        + h_norm(&first.states[0].rho.sub(&second.states[0].rho)?);
    let lhs = mu.l2_q + rho.linf_h + xi.l1_q;

    let data_scale = h_norm(&first.states[0].mu) + h_norm(&first.states[0].rho);
    let floor = RHS_FLOOR * data_scale.max(1.0);
    let (ratio, uniqueness_violation) = if rhs > floor {
        (Some(lhs / rhs), false)
    } else {
        (None, lhs > IDENTICAL_FLOOR)
    };
    Ok(PairReport {
        mu_l2: mu.l2_q,
        rho_linf: rho.linf_h,
        xi_l1: xi.l1_q,
        lhs,
        rhs,
        ratio,
        uniqueness_violation,
    })
}

// ---------------------------------------------------------------------------
// Continuous-dependence study
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct StudyRow {
    pub epsilon: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    /// max ratio / min ratio over rows with a finite ratio.
    pub spread: Option<f64>,
    /// Ratios grow strictly through the whole epsilon sweep (toward small
    /// epsilon) by more than 50 percent in total.
    pub growth_trend: bool,
    pub uniqueness_violation: bool,
    pub pass: bool,
}

/// Maximum admissible ratio spread for a linear-looking stability response.
pub const SPREAD_LIMIT: f64 = 4.0;

/// Runs one pair experiment per epsilon (in the given order, which must be
/// positive and decreasing) and aggregates the ratio table.
pub fn continuous_dependence_study(
    base: &RunConfig,
    perturbation: &Perturbation,
    epsilons: &[f64],
) -> Result<StudyReport> {
    if epsilons.is_empty() {
        return Err(Error::InvalidParameter("epsilon list is empty".into()));
    }
    for w in epsilons.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidParameter(
                "epsilon list must be strictly decreasing".into(),
            ));
        }
    }
    if !(epsilons[epsilons.len() - 1] > 0.0) {
        return Err(Error::InvalidParameter("epsilons must be positive".into()));
    }
    // model and config are validated once up front so an inadmissible model
    // is rejected before any trajectory runs
    base.validate()?;

    let experiment = |eps: f64| -> Result<PairReport> {
        let exp = PairExperiment {
            base: base.clone(),
            perturbation: Perturbation {
                amplitude: eps,
                ..*perturbation
            },
        };
        Ok(run_pair(&exp)?.report)
    };

    #[cfg(feature = "parallel")]
    let results: Vec<Result<PairReport>> =
        epsilons.par_iter().map(|&eps| experiment(eps)).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<PairReport>> = epsilons.iter().map(|&eps| experiment(eps)).collect();

    let mut rows = Vec::with_capacity(epsilons.len());
    let mut uniqueness_violation = false;
    for (eps, res) in epsilons.iter().zip(results) {
        let rep = res?;
        uniqueness_violation |= rep.uniqueness_violation;
        rows.push(StudyRow {
            epsilon: *eps,
            lhs: rep.lhs,
            rhs: rep.rhs,
            ratio: rep.ratio,
        });
    }

    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let spread = if ratios.is_empty() {
        None
    } else {
        let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        Some(max / min)
    };
    let growth_trend = ratios.len() >= 2
        && ratios.windows(2).all(|w| w[1] > w[0])
        && ratios[ratios.len() - 1] / ratios[0] > 1.5;
    let pass = !uniqueness_violation
        && spread.is_none_or(|s| s <= SPREAD_LIMIT)
        && !growth_trend
        && ratios.iter().all(|r| r.is_finite());

    Ok(StudyReport {
        rows,
        spread,
        growth_trend,
        uniqueness_violation,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Cellwise estimate audit
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct PointwiseRow {
    pub time: f64,
    pub worst_cell: usize,
    pub l: f64,
    pub r: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct PointwiseReport {
    /// 3 max(1, sup|g'|, L_{g'} sup mu_1 + L_pi) from the stored constants
    /// and the first trajectory.
    pub c_struct: f64,
    pub worst_ratio: f64,
    pub worst_cell: usize,
    pub worst_time: f64,
    /// Per time level: the worst cell by ratio.
    pub rows: Vec<PointwiseRow>,
    /// Cellwise per-step contraction |d rho| + tau |d xi| <=
    /// |d rho_prev| + tau |d w_prev| + slack held at every step.
    pub one_step_ok: bool,
    pub one_step_failure: Option<String>,
    pub pass: bool,
}

/// Audits, cell by cell and time level by time level, the accumulated
/// estimate
///   |d rho|(t) + sum tau (|d_t d rho| + |d xi|)
///     <= C ( |d rho(0)| + sum tau (|d mu| + (1 + mu_1)|d rho|) )
/// with the time integrals taken with right endpoints on the left side and
/// left endpoints on the right side (the combination the discrete
/// contraction argument proves). Also asserts the per-step contraction that
/// drives it.
pub fn pointwise_estimate_check(
    first: &Trajectory,
    second: &Trajectory,
    model: &ModelSpec,
    tau: f64,
    prox_tol: f64,
) -> Result<PointwiseReport> {
    let n_times = first.states.len();
    if n_times != second.states.len() || n_times == 0 {
        return Err(Error::Shape("trajectories do not share a time grid".into()));
    }
    let grid = first.states[0].mu.grid();
    if grid != second.states[0].mu.grid() {
        return Err(Error::Shape("trajectories do not share a grid".into()));
    }
    let n_cells = grid.cell_count();

    let sup_mu1 = first
        .states
        .iter()
        .map(|s| s.mu.max())
        .fold(f64::NEG_INFINITY, f64::max);
    let c_struct = 3.0
        * 1.0_f64
            .max(model.coupling.g_prime_sup())
            .max(model.coupling.g_prime_lipschitz * sup_mu1 + model.potential.pi_lipschitz);

    let mut l_sum = vec![0.0_f64; n_cells];
    let mut r_sum = vec![0.0_f64; n_cells];
    let mut rows = Vec::with_capacity(n_times.saturating_sub(1));
    let mut worst_ratio = 0.0_f64;
    let mut worst_cell = 0usize;
    let mut worst_time = 0.0_f64;
    let mut one_step_ok = true;
    let mut one_step_failure = None;

    let drho0: Vec<f64> = first.states[0]
        .rho
        .values()
        .iter()
        .zip(second.states[0].rho.values())
        .map(|(a, b)| (a - b).abs())
        .collect();

    for n in 1..n_times {
        let (pa, pb) = (&first.states[n - 1], &second.states[n - 1]);
        let (ca, cb) = (&first.states[n], &second.states[n]);
        let mut row_best = PointwiseRow {
            time: ca.time,
            worst_cell: 0,
            l: 0.0,
            r: 0.0,
            ratio: 0.0,
        };
        for i in 0..n_cells {
            let drho_prev = pa.rho.values()[i] - pb.rho.values()[i];
            let drho_now = ca.rho.values()[i] - cb.rho.values()[i];
            let dmu_prev = pa.mu.values()[i] - pb.mu.values()[i];
            let dxi_now = ca.xi.values()[i] - cb.xi.values()[i];

            let r_inc = tau * (dmu_prev.abs() + (1.0 + pa.mu.values()[i]) * drho_prev.abs());
            let l_inc = (drho_now - drho_prev).abs() + tau * dxi_now.abs();
            // both accumulators are sums of nonnegative terms, so L and R
            // minus their first terms are nondecreasing in time
            debug_assert!(r_inc >= 0.0 && l_inc >= 0.0);
            r_sum[i] += r_inc;
            l_sum[i] += l_inc;
            let l = drho_now.abs() + l_sum[i];
            let r = drho0[i] + r_sum[i];
            if r > RHS_FLOOR {
                let ratio = l / r;
                if ratio > row_best.ratio {
                    row_best = PointwiseRow {
                        time: ca.time,
                        worst_cell: i,
                        l,
                        r,
                        ratio,
                    };
                }
                if ratio > worst_ratio {
                    worst_ratio = ratio;
                    worst_cell = i;
                    worst_time = ca.time;
                }
            }

            // per-step contraction, the engine of the whole estimate
            let w = |s: &crate::stepper::State| {
                s.mu.values()[i] * model.coupling.g_prime(s.rho.values()[i])
                    - model.potential.pi(s.rho.values()[i])
            };
            let dw_prev = w(pa) - w(pb);
            let ra = pa.rho.values()[i] + tau * w(pa);
            let rb = pb.rho.values()[i] + tau * w(pb);
            let tol_scale = prox_tol * ra.abs().max(rb.abs()).max(1.0);
            let lhs_step = drho_now.abs() + tau * dxi_now.abs();
            let rhs_step = drho_prev.abs() + tau * dw_prev.abs() + 4.0 * tol_scale;
            if lhs_step > rhs_step && one_step_ok {
                one_step_ok = false;
                one_step_failure = Some(format!(
                    "cell {i} at t = {}: {lhs_step} > {rhs_step}",
                    ca.time
                ));
            }
            if n == 1 {
                // first-step form of the accumulated bound; the extra
                // tau |d xi| slack covers the jump term the continuous
                // estimate absorbs into the time integral
                let l_first = drho_now.abs() + (drho_now - drho_prev).abs() + tau * dxi_now.abs();
                let r_first = drho_prev.abs()
                    + 2.0 * tau * dw_prev.abs()
                    + tau * dxi_now.abs()
                    + 8.0 * tol_scale;
                if l_first > r_first && one_step_ok {
                    one_step_ok = false;
                    one_step_failure = Some(format!(
                        "first-step bound at cell {i}: {l_first} > {r_first}"
                    ));
                }
            }
        }
        rows.push(row_best);
    }

    let pass = one_step_ok && worst_ratio <= c_struct * (1.0 + 1e-6);
    Ok(PointwiseReport {
        c_struct,
        worst_ratio,
        worst_cell,
        worst_time,
        rows,
        one_step_ok,
        one_step_failure,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Self-convergence
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct ConvergenceRow {
    pub level: usize,
    pub tau: f64,
    /// Distance to the next-finer level in the combined norm triple; absent
    /// on the finest level.
    pub distance: Option<f64>,
    /// log2 of the previous distance over this one.
    pub observed_order: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvergenceVerdict {
    Pass,
    Fail,
    /// All successive distances at the numerical floor (e.g. zero data).
    DegenerateExact,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub verdict: ConvergenceVerdict,
}

/// Expected first-order window for the observed temporal order.
pub const ORDER_WINDOW: (f64, f64) = (0.7, 1.3);

/// Runs the base configuration at tau, tau/2, ..., tau/2^(levels-1) and
/// measures successive trajectory distances in the norm triple at matched
/// times (the coarser grid of each pair).
pub fn self_convergence_study(base: &RunConfig, levels: usize) -> Result<ConvergenceReport> {
    if levels < 3 {
        return Err(Error::InvalidParameter(format!(
            "convergence study needs at least 3 levels, got {levels}"
        )));
    }
    let run_level = |k: usize| -> Result<Trajectory> {
        let mut cfg = base.clone();
        cfg.tau = base.tau / 2f64.powi(k as i32);
        cfg.output_every = 1;
        crate::stepper::run(&cfg)
    };

    #[cfg(feature = "parallel")]
    let runs: Vec<Result<Trajectory>> = (0..levels).into_par_iter().map(run_level).collect();
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<Result<Trajectory>> = (0..levels).map(run_level).collect();
    let trajectories: Vec<Trajectory> = runs.into_iter().collect::<Result<_>>()?;

    let mut distances = Vec::with_capacity(levels - 1);
    for k in 0..levels - 1 {
        let coarse = &trajectories[k];
        let fine = &trajectories[k + 1];
        let tau_k = base.tau / 2f64.powi(k as i32);
        let pick_pairs =
            |select: fn(&crate::stepper::State) -> &ScalarField| -> Result<Vec<ScalarField>> {
                coarse
                    .states
                    .iter()
                    .enumerate()
                    .map(|(n, s)| select(s).sub(select(&fine.states[2 * n])))
                    .collect()
            };
        let mu = history_norms(&pick_pairs(|s| &s.mu)?, tau_k)?;
        let rho = history_norms(&pick_pairs(|s| &s.rho)?, tau_k)?;
        let xi = history_norms(&pick_pairs(|s| &s.xi)?, tau_k)?;
        distances.push(mu.l2_q + rho.linf_h + xi.l1_q);
    }

    let degenerate = distances.iter().all(|d| *d <= 1e-14);
    let mut rows = Vec::with_capacity(levels - 1);
    for (k, d) in distances.iter().enumerate() {
        let order = if k > 0 && *d > 0.0 {
            Some((distances[k - 1] / d).log2())
        } else {
            None
        };
        rows.push(ConvergenceRow {
            level: k,
            tau: base.tau / 2f64.powi(k as i32),
            distance: Some(*d),
            observed_order: order,
        });
    }
    let verdict = if degenerate {
        ConvergenceVerdict::DegenerateExact
    } else {
        match rows.last().and_then(|r| r.observed_order) {
            Some(p) if p >= ORDER_WINDOW.0 && p <= ORDER_WINDOW.1 => ConvergenceVerdict::Pass,
            _ => ConvergenceVerdict::Fail,
        }
    };
    Ok(ConvergenceReport { rows, verdict })
}

// ---------------------------------------------------------------------------
// Invariant audit
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct AuditReport {
    pub pass: bool,
    /// Hard-assertion failures, each naming cell and time.
    pub failures: Vec<String>,
    pub min_mu: f64,
    /// Worst distance of rho from the boundary of the domain of beta
    /// (positive = strictly interior everywhere).
    pub rho_domain_margin: f64,
    /// Worst soft margin of rho against [rho_min, rho_max].
    pub rho_margin: f64,
    /// Worst soft margin of xi against [xi_min, xi_max].
    pub xi_margin: f64,
}

/// Scans a trajectory: hard assertions on mu nonnegativity (up to solver
/// residual) and rho confinement in the closed domain of beta; soft margin
/// reports against the compatibility intervals.
pub fn invariant_audit(trajectory: &Trajectory, model: &ModelSpec) -> AuditReport {
    let mut failures = Vec::new();
    let mut min_mu = f64::INFINITY;
    let mut rho_domain_margin = f64::INFINITY;
    let mut rho_margin = f64::INFINITY;
    let mut xi_margin = f64::INFINITY;

    let mu_scale = trajectory
        .states
        .iter()
        .map(|s| s.mu.max().abs())
        .fold(1.0_f64, f64::max);
    let dom = model.potential.beta_domain;
    let cc = model.constants;

    for state in &trajectory.states {
        for (cell, &mu) in state.mu.values().iter().enumerate() {
            min_mu = min_mu.min(mu);
            if mu < -1e-10 * mu_scale {
                failures.push(format!("mu = {mu} at cell {cell}, t = {}", state.time));
            }
        }
        for (cell, &rho) in state.rho.values().iter().enumerate() {
            rho_domain_margin = rho_domain_margin.min((rho - dom.lo).min(dom.hi - rho));
            if rho < dom.lo || rho > dom.hi {
                failures.push(format!(
                    "rho = {rho} outside the domain of beta at cell {cell}, t = {}",
                    state.time
                ));
            }
            rho_margin = rho_margin.min((rho - cc.rho_min).min(cc.rho_max - rho));
        }
        for &xi in state.xi.values() {
            xi_margin = xi_margin.min((xi - cc.xi_min).min(cc.xi_max - xi));
        }
    }
    AuditReport {
        pass: failures.is_empty(),
        failures,
        min_mu,
        rho_domain_margin,
        rho_margin,
        xi_margin,
    }
}
