//! Resolvent (I + tau*beta)^{-1} of the monotone graph beta, the single
//! nonlinear kernel of the order-parameter update.
//!
//! For the obstacle potential the resolvent is the exact projection onto the
//! interval. For single-valued beta it is the root of x + tau*beta(x) = r,
//! computed by safeguarded Newton inside a maintained bracket: the Newton
//! step is rejected in favor of bisection whenever it leaves the bracket,
//! which keeps the logarithmic kind stable where beta' blows up near the
//! walls. The selection xi = (r - x)/tau is a member of beta(x) by
//! construction, matching how the inclusion is discretized.

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::model::{PotentialKind, PotentialSplit};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Iteration cap for the scalar solve. Exceeding it signals a bug for the
/// built-in potentials.
pub const MAX_ITERATIONS: usize = 200;

/// Default tolerance on the residual x + tau*beta(x) - r.
pub fn default_tolerance(r: f64) -> f64 {
    1e-12 * r.abs().max(1.0)
}

/// One resolvent query: potential, step length and argument.
#[derive(Clone, Copy, Debug)]
pub struct ProxQuery<'a> {
    pub potential: &'a PotentialSplit,
    pub tau: f64,
    pub r: f64,
}

impl<'a> ProxQuery<'a> {
    pub fn new(potential: &'a PotentialSplit, tau: f64, r: f64) -> Result<ProxQuery<'a>> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "prox step length must be positive, got {tau}"
            )));
        }
        if !r.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "prox argument must be finite, got {r}"
            )));
        }
        Ok(ProxQuery { potential, tau, r })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ProxResult {
    /// Resolvent value, always in the closure of the domain of beta.
    pub x: f64,
    /// The selection xi = (r - x)/tau in beta(x).
    pub xi: f64,
    pub iterations: usize,
    /// |x + tau*beta(x) - r| at the returned iterate (0 where the solve is
    /// exact by construction).
    pub residual: f64,
}

/// Solve x + tau*beta(x) = r (as an inclusion for multivalued beta).
pub fn resolve(q: &ProxQuery, tol: f64) -> Result<ProxResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "prox tolerance must be positive, got {tol}"
        )));
    }
    match q.potential.kind {
        PotentialKind::Obstacle { lower, upper } => {
            // resolvent of an indicator is the projection
            let x = q.r.clamp(lower, upper);
            Ok(ProxResult {
                x,
                xi: (q.r - x) / q.tau,
                iterations: 0,
                residual: 0.0,
            })
        }
        _ => newton_resolve(q, tol),
    }
}

fn newton_resolve(q: &ProxQuery, tol: f64) -> Result<ProxResult> {
    let p = q.potential;
    let (tau, r) = (q.tau, q.r);

    // beta(0) = 0 for both single-valued kinds, so the root shares the sign
    // of r and x = 0 is exact for r = 0.
    if r == 0.0 {
        return Ok(ProxResult {
            x: 0.0,
            xi: 0.0,
            iterations: 0,
            residual: 0.0,
        });
    }

    let h = |x: f64| x + tau * p.beta(x).unwrap() - r;

    // Bracket [lo, hi] with h(lo) <= 0 <= h(hi).
    let (mut lo, mut hi) = match p.kind {
        PotentialKind::Logarithmic { .. } => {
            // largest representable points strictly inside (-1, 1)
            let wall = 1.0 - 0.5 * f64::EPSILON;
            if r > 0.0 {
                (0.0, wall)
            } else {
                (-wall, 0.0)
            }
        }
        _ => {
            if r > 0.0 {
                (0.0, r)
            } else {
                (r, 0.0)
            }
        }
    };

    // Roots pushed beyond floating-point resolution at a domain wall: return
    // the bracket end. The iterate is then exact to representability even
    // though the residual cannot reach tol (beta' is enormous there).
    if h(hi) <= 0.0 {
        let x = hi;
        return Ok(ProxResult {
            x,
            xi: (r - x) / tau,
            iterations: 0,
            residual: h(x).abs(),
        });
    }
    if h(lo) >= 0.0 {
        let x = lo;
        return Ok(ProxResult {
            x,
            xi: (r - x) / tau,
            iterations: 0,
            residual: h(x).abs(),
        });
    }

    let mut x = 0.5 * (lo + hi);
    let mut polished = false;
    for it in 1..=MAX_ITERATIONS {
        let hx = h(x);
        let residual = hx.abs();
        if hx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }

        let width = hi - lo;
        let converged = residual <= tol || width <= f64::EPSILON * lo.abs().max(hi.abs());
        if converged && polished {
            return Ok(ProxResult {
                x,
                xi: (r - x) / tau,
                iterations: it,
                residual,
            });
        }
        if converged {
            // one more Newton step sharpens x to near machine precision
            polished = true;
        }

        let slope = 1.0 + tau * p.beta_prime(x).unwrap();
        let mut next = x - hx / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == x {
            return Ok(ProxResult {
                x,
                xi: (r - x) / tau,
                iterations: it,
                residual,
            });
        }
        x = next;
    }
    Err(Error::ProxFailure {
        iterations: MAX_ITERATIONS,
        last_iterate: x,
        residual: h(x).abs(),
    })
}

/// Cellwise resolvent over a field. Output grids match the input grid; cell
/// results are independent of execution order.
pub fn resolve_field(
    potential: &PotentialSplit,
    tau: f64,
    r_field: &ScalarField,
    tol: f64,
) -> Result<(ScalarField, ScalarField)> {
    let (x, xi, _) = resolve_field_stats(potential, tau, r_field, tol)?;
    Ok((x, xi))
}

/// Sequential variant, kept available for benchmarks and as the fallback
/// when the `parallel` feature is disabled.
pub fn resolve_field_seq(
    potential: &PotentialSplit,
    tau: f64,
    r_field: &ScalarField,
    tol: f64,
) -> Result<(ScalarField, ScalarField)> {
    let results: Vec<Result<ProxResult>> = r_field
        .values()
        .iter()
        .map(|&r| ProxQuery::new(potential, tau, r).and_then(|q| resolve(&q, tol)))
        .collect();
    assemble(r_field, results).map(|(x, xi, _)| (x, xi))
}

/// Field resolvent that also reports the worst per-cell iteration count
/// (monitored by the stepper).
pub fn resolve_field_stats(
    potential: &PotentialSplit,
    tau: f64,
    r_field: &ScalarField,
    tol: f64,
) -> Result<(ScalarField, ScalarField, usize)> {
    #[cfg(feature = "parallel")]
    let results: Vec<Result<ProxResult>> = r_field
        .values()
        .par_iter()
        .map(|&r| ProxQuery::new(potential, tau, r).and_then(|q| resolve(&q, tol)))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<ProxResult>> = r_field
        .values()
        .iter()
        .map(|&r| ProxQuery::new(potential, tau, r).and_then(|q| resolve(&q, tol)))
        .collect();

    assemble(r_field, results)
}

fn assemble(
    r_field: &ScalarField,
    results: Vec<Result<ProxResult>>,
) -> Result<(ScalarField, ScalarField, usize)> {
    let mut xs = Vec::with_capacity(results.len());
    let mut xis = Vec::with_capacity(results.len());
    let mut max_iterations = 0;
    for (cell, res) in results.into_iter().enumerate() {
        let r = res.map_err(|e| e.at_cell(cell))?;
        xs.push(r.x);
        xis.push(r.xi);
        max_iterations = max_iterations.max(r.iterations);
    }
    let grid = r_field.grid();
    Ok((
        ScalarField::from_values(grid, xs)?,
        ScalarField::from_values(grid, xis)?,
        max_iterations,
    ))
}
