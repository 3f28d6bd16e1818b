//! The transform K(m) = integral of kappa from 0 to m, its inverse, and the
//! bi-Lipschitz diagnostics that the uniqueness argument rests on.
//!
//! K is evaluated through a cached table of breakpoints at powers of two:
//! each evaluation integrates only from the nearest cached point below the
//! argument, with adaptive composite 5-point Gauss-Legendre panels. Constant
//! mobilities short-circuit to the exact closed form K(m) = kappa * m.

use crate::error::{Error, Result};
use crate::model::{Mobility, MobilityKind};

/// Relative accuracy target of K: |K(m) - exact| <= QUAD_TOL * max(1, m).
const QUAD_TOL: f64 = 1e-10;

/// Breakpoint exponents: m = 2^k for k in [MIN_EXP, MAX_EXP], plus m = 0.
const MIN_EXP: i32 = -10;
const MAX_EXP: i32 = 20;

// 5-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    -0.906179845938664,
    -0.5384693101056831,
    0.0,
    0.5384693101056831,
    0.906179845938664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.2369268850561891,
    0.4786286704993665,
    0.5688888888888889,
    0.4786286704993665,
    0.2369268850561891,
];

fn gauss5(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut s = 0.0;
    for (node, weight) in GL_NODES.iter().zip(&GL_WEIGHTS) {
        s += weight * f(mid + half * node);
    }
    s * half
}

fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let whole = gauss5(f, a, b);
    let mid = 0.5 * (a + b);
    let split = gauss5(f, a, mid) + gauss5(f, mid, b);
    if (split - whole).abs() <= tol || depth >= 40 {
        split
    } else {
        adaptive(f, a, mid, 0.5 * tol, depth + 1) + adaptive(f, mid, b, 0.5 * tol, depth + 1)
    }
}

/// Cached antiderivative of the mobility.
#[derive(Clone, Debug)]
pub struct KirchhoffTransform {
    mobility: Mobility,
    /// Sorted (m, K(m)) pairs; first entry is (0, 0).
    breakpoints: Vec<(f64, f64)>,
}

impl KirchhoffTransform {
    /// Builds the breakpoint cache eagerly; the transform is immutable (and
    /// freely shareable) afterwards.
    pub fn new(mobility: &Mobility) -> KirchhoffTransform {
        let mut breakpoints = vec![(0.0, 0.0)];
        if let MobilityKind::Constant(k0) = mobility.kind {
            for e in MIN_EXP..=MAX_EXP {
                let m = 2f64.powi(e);
                breakpoints.push((m, k0 * m));
            }
        } else {
            let f = |m: f64| mobility.kappa(m);
            let mut acc = 0.0;
            let mut prev = 0.0;
            for e in MIN_EXP..=MAX_EXP {
                let m = 2f64.powi(e);
                acc += adaptive(&f, prev, m, QUAD_TOL * m.max(1.0) * 0.25, 0);
                breakpoints.push((m, acc));
                prev = m;
            }
        }
        KirchhoffTransform {
            mobility: mobility.clone(),
            breakpoints,
        }
    }

    pub fn mobility(&self) -> &Mobility {
        &self.mobility
    }

    /// K(m) for m >= 0.
    pub fn evaluate(&self, m: f64) -> Result<f64> {
        if !(m >= 0.0) || !m.is_finite() {
            return Err(Error::Domain {
                condition: "kirchhoff_argument_nonnegative".into(),
                message: format!("K is defined on [0, inf), got {m}"),
            });
        }
        if let MobilityKind::Constant(k0) = self.mobility.kind {
            return Ok(k0 * m);
        }
        // integrate from the last breakpoint at or below m
        let idx = self
            .breakpoints
            .partition_point(|&(b, _)| b <= m)
            .saturating_sub(1);
        let (b, kb) = self.breakpoints[idx];
        if b == m {
            return Ok(kb);
        }
        let f = |x: f64| self.mobility.kappa(x);
        Ok(kb + adaptive(&f, b, m, QUAD_TOL * m.max(1.0) * 0.5, 0))
    }

    /// Inverse of K on [0, inf), by bracketed Newton with K' = kappa.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) || !y.is_finite() {
            return Err(Error::Domain {
                condition: "kirchhoff_inverse_nonnegative".into(),
                message: format!("K^-1 is defined on [0, inf), got {y}"),
            });
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        let tol = 1e-10 * y.max(1.0);
        let mut lo = 0.0;
        let mut hi = y / self.mobility.kappa_min + 1.0;
        let mut m = y / self.mobility.kappa(0.0).max(self.mobility.kappa_min);
        for _ in 0..200 {
            let err = self.evaluate(m)? - y;
            if err.abs() <= tol {
                return Ok(m);
            }
            if err > 0.0 {
                hi = m;
            } else {
                lo = m;
            }
            let mut next = m - err / self.mobility.kappa(m);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if next == m {
                return Ok(m);
            }
            m = next;
        }
        Err(Error::LinearNonConvergence {
            iterations: 200,
            residual: (self.evaluate(m)? - y).abs() / y.max(1.0),
        })
    }

    /// Mobility recovered from the cached table as piecewise secant slopes of
    /// K. For a constant mobility the powers-of-two breakpoints make every
    /// slope exact, so the reconstruction returns kappa bit for bit; for
    /// general kappa it is a coarse diagnostic approximation.
    pub fn reconstructed_mobility(&self) -> Mobility {
        let table = self.breakpoints.clone();
        let (kmin, kmax) = (self.mobility.kappa_min, self.mobility.kappa_max);
        let slope_at = move |m: f64| -> f64 {
            let idx = table.partition_point(|&(b, _)| b <= m).saturating_sub(1);
            let hi = (idx + 1).min(table.len() - 1);
            let lo = if hi == idx { idx - 1 } else { idx };
            let (m0, k0) = table[lo];
            let (m1, k1) = table[hi];
            (k1 - k0) / (m1 - m0)
        };
        Mobility {
            kind: MobilityKind::Custom(std::sync::Arc::new(slope_at)),
            kappa_min: kmin,
            kappa_max: kmax,
        }
    }

    /// Samples pairs (m1, m2) and checks both bi-Lipschitz inequalities and
    /// the strong monotonicity bound. Margins are normalized per unit of
    /// |m1 - m2| (difference quotients against the stored bounds).
    pub fn check_bilipschitz(&self, samples: usize) -> Result<BiLipschitzReport> {
        if samples < 2 {
            return Err(Error::InvalidParameter(format!(
                "bi-Lipschitz check needs at least 2 samples, got {samples}"
            )));
        }
        // 0 plus a logarithmic sweep over [1e-3, 1e2]
        let mut points = vec![0.0];
        for i in 0..samples - 1 {
            let t = if samples == 2 {
                0.0
            } else {
                i as f64 / (samples - 2) as f64
            };
            points.push(10f64.powf(-3.0 + 5.0 * t));
        }
        let values: Vec<f64> = points
            .iter()
            .map(|&m| self.evaluate(m))
            .collect::<Result<_>>()?;

        let mut lower = f64::INFINITY;
        let mut upper = f64::INFINITY;
        let mut monotone = f64::INFINITY;
        let mut pairs = 0usize;
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                let dm = points[j] - points[i];
                let dk = values[j] - values[i];
                let q = dk / dm;
                lower = lower.min(q.abs() - self.mobility.kappa_min);
                upper = upper.min(self.mobility.kappa_max - q.abs());
                // (m1-m2)(K(m1)-K(m2)) >= kappa_min (m1-m2)^2, per unit dm^2
                monotone = monotone.min(q - self.mobility.kappa_min);
                pairs += 1;
            }
        }
        Ok(BiLipschitzReport {
            pairs,
            lower_margin: lower,
            upper_margin: upper,
            monotone_margin: monotone,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BiLipschitzReport {
    pub pairs: usize,
    /// min over pairs of |dK|/|dm| - kappa_min.
    pub lower_margin: f64,
    /// min over pairs of kappa_max - |dK|/|dm|.
    pub upper_margin: f64,
    /// min over pairs of dK*dm/dm^2 - kappa_min.
    pub monotone_margin: f64,
}

impl BiLipschitzReport {
    pub fn passes(&self, slack: f64) -> bool {
        self.lower_margin >= -slack && self.upper_margin >= -slack && self.monotone_margin >= -slack
    }
}
