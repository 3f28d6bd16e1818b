//! Structural nonlinearities of the phase-segregation system and their
//! admissibility checks.
//!
//! A model is the quadruple (potential split, coupling g, mobility kappa,
//! compatibility constants). The potential enters only through the monotone
//! graph `beta` (derivative or subdifferential of the convex part) and the
//! smooth perturbation `pi`; the dynamics never evaluate the potential
//! itself. `validate_model` audits every structural condition by dense
//! sampling plus exact evaluation at the compatibility constants.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Shared scalar function handle, used where a nonlinearity is supplied as
/// data (obstacle `pi`, custom mobilities in tests).
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Closed real interval, possibly unbounded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REALS: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Result<Interval> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.lo && r <= self.hi
    }

    pub fn interior_contains(&self, r: f64) -> bool {
        r > self.lo && r < self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

// ---------------------------------------------------------------------------
// Potential split f = f1 + f2, represented through beta = d f1 and pi = f2'
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialKind {
    /// beta(r) = ln((1+r)/(1-r)), pi(r) = -2cr on (-1,1); needs c > 1.
    Logarithmic { c: f64 },
    /// beta(r) = r^3, pi(r) = -r on all of R.
    DoubleWell,
    /// beta = normal cone of [lower, upper]; pi supplied separately.
    Obstacle { lower: f64, upper: f64 },
}

#[derive(Clone)]
pub struct PotentialSplit {
    pub kind: PotentialKind,
    /// Effective domain of beta.
    pub beta_domain: Interval,
    pi: ScalarFn,
    pub pi_lipschitz: f64,
}

impl fmt::Debug for PotentialSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialSplit")
            .field("kind", &self.kind)
            .field("beta_domain", &self.beta_domain)
            .field("pi_lipschitz", &self.pi_lipschitz)
            .finish()
    }
}

/// Logarithmic potential: beta(r) = ln((1+r)/(1-r)), pi(r) = -2cr.
/// Rejects c <= 1 (no double well below that).
pub fn make_logarithmic(c: f64) -> Result<PotentialSplit> {
    if !(c > 1.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "logarithmic potential requires c > 1, got {c}"
        )));
    }
    Ok(PotentialSplit {
        kind: PotentialKind::Logarithmic { c },
        beta_domain: Interval { lo: -1.0, hi: 1.0 },
        pi: Arc::new(move |r| -2.0 * c * r),
        pi_lipschitz: 2.0 * c,
    })
}

/// Double-well potential (r^2-1)^2/4 split as r^4/4 + (1-2r^2)/4,
/// so beta(r) = r^3 and pi(r) = -r.
pub fn make_double_well() -> PotentialSplit {
    PotentialSplit {
        kind: PotentialKind::DoubleWell,
        beta_domain: Interval::REALS,
        pi: Arc::new(|r| -r),
        pi_lipschitz: 1.0,
    }
}

/// Obstacle potential: f1 is the indicator of [lower, upper], so beta is its
/// normal-cone map. `pi` must be Lipschitz with the supplied constant.
pub fn make_obstacle(
    lower: f64,
    upper: f64,
    pi: ScalarFn,
    pi_lipschitz: f64,
) -> Result<PotentialSplit> {
    let domain = Interval::new(lower, upper)?;
    if !(pi_lipschitz >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "pi Lipschitz constant must be nonnegative, got {pi_lipschitz}"
        )));
    }
    Ok(PotentialSplit {
        kind: PotentialKind::Obstacle { lower, upper },
        beta_domain: domain,
        pi,
        pi_lipschitz,
    })
}

impl PotentialSplit {
    pub fn pi(&self, r: f64) -> f64 {
        (self.pi)(r)
    }

    pub fn is_single_valued(&self) -> bool {
        !matches!(self.kind, PotentialKind::Obstacle { .. })
    }

    /// Value of beta at an interior point of its domain. `None` where beta is
    /// multivalued or undefined.
    pub fn beta(&self, r: f64) -> Option<f64> {
        match self.kind {
            PotentialKind::Logarithmic { .. } => {
                if r > -1.0 && r < 1.0 {
                    // ln((1+r)/(1-r)) via ln_1p for accuracy near 0 and near the walls
                    Some(f64::ln_1p(r) - f64::ln_1p(-r))
                } else {
                    None
                }
            }
            PotentialKind::DoubleWell => Some(r * r * r),
            PotentialKind::Obstacle { lower, upper } => {
                if r > lower && r < upper {
                    Some(0.0)
                } else {
                    None
                }
            }
        }
    }

    /// Derivative of beta where it is single-valued and differentiable.
    pub fn beta_prime(&self, r: f64) -> Option<f64> {
        match self.kind {
            PotentialKind::Logarithmic { .. } => {
                if r > -1.0 && r < 1.0 {
                    Some(2.0 / ((1.0 - r) * (1.0 + r)))
                } else {
                    None
                }
            }
            PotentialKind::DoubleWell => Some(3.0 * r * r),
            PotentialKind::Obstacle { lower, upper } => {
                if r > lower && r < upper {
                    Some(0.0)
                } else {
                    None
                }
            }
        }
    }

    /// Graph membership xi in beta(r). For single-valued kinds this is an
    /// equality test up to 1e-12 relative; for the obstacle it is the exact
    /// normal-cone case analysis.
    pub fn beta_contains(&self, r: f64, xi: f64) -> bool {
        match self.kind {
            PotentialKind::Obstacle { lower, upper } => {
                if r < lower || r > upper {
                    false
                } else if r == lower {
                    xi <= 0.0
                } else if r == upper {
                    xi >= 0.0
                } else {
                    xi == 0.0
                }
            }
            _ => match self.beta(r) {
                Some(b) => (xi - b).abs() <= 1e-12 * xi.abs().max(1.0),
                None => false,
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Coupling g
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum CouplingKind {
    /// g(r) = 1 - r^2/2 on [-1,1], continued linearly outside (this keeps
    /// concavity and the Lipschitz bound; nonnegativity is certified on the
    /// validity interval only).
    DefaultConcave,
    /// g identically equal to a nonnegative constant; decouples the system.
    Constant(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    pub kind: CouplingKind,
    pub g_lipschitz: f64,
    pub g_prime_lipschitz: f64,
    /// Interval on which g >= 0 and g'' <= 0 are certified. Must contain
    /// [rho_min, rho_max]; the dynamics never evaluate g outside it.
    pub validity_interval: Interval,
}

impl Coupling {
    pub fn default_concave() -> Coupling {
        Coupling {
            kind: CouplingKind::DefaultConcave,
            g_lipschitz: 1.0,
            g_prime_lipschitz: 1.0,
            validity_interval: Interval { lo: -1.0, hi: 1.0 },
        }
    }

    pub fn constant(value: f64) -> Result<Coupling> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "constant coupling must be nonnegative, got {value}"
            )));
        }
        Ok(Coupling {
            kind: CouplingKind::Constant(value),
            g_lipschitz: 0.0,
            g_prime_lipschitz: 0.0,
            validity_interval: Interval::REALS,
        })
    }

    pub fn g(&self, r: f64) -> f64 {
        match self.kind {
            CouplingKind::DefaultConcave => {
                if r.abs() <= 1.0 {
                    1.0 - 0.5 * r * r
                } else {
                    1.5 - r.abs()
                }
            }
            CouplingKind::Constant(c) => c,
        }
    }

    pub fn g_prime(&self, r: f64) -> f64 {
        match self.kind {
            CouplingKind::DefaultConcave => {
                if r.abs() <= 1.0 {
                    -r
                } else {
                    -r.signum()
                }
            }
            CouplingKind::Constant(_) => 0.0,
        }
    }

    /// sup |g'| over the validity interval (used by the structural constant
    /// of the pointwise estimate).
    pub fn g_prime_sup(&self) -> f64 {
        match self.kind {
            CouplingKind::DefaultConcave => {
                let a = self.validity_interval.lo.abs().min(1.0);
                let b = self.validity_interval.hi.abs().min(1.0);
                a.max(b)
            }
            CouplingKind::Constant(_) => 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Mobility kappa
// ---------------------------------------------------------------------------

#[derive(Clone)]
pub enum MobilityKind {
    Constant(f64),
    /// kappa(m) = 1 + 1/(1+m); range (1, 2].
    Rational,
    Custom(ScalarFn),
}

#[derive(Clone)]
pub struct Mobility {
    pub kind: MobilityKind,
    /// Uniform parabolicity bounds 0 < kappa_min <= kappa <= kappa_max.
    pub kappa_min: f64,
    pub kappa_max: f64,
}

impl fmt::Debug for Mobility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            MobilityKind::Constant(k) => format!("Constant({k})"),
            MobilityKind::Rational => "Rational".to_string(),
            MobilityKind::Custom(_) => "Custom(..)".to_string(),
        };
        f.debug_struct("Mobility")
            .field("kind", &kind)
            .field("kappa_min", &self.kappa_min)
            .field("kappa_max", &self.kappa_max)
            .finish()
    }
}

impl Mobility {
    pub fn constant(value: f64) -> Result<Mobility> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "constant mobility must be positive, got {value}"
            )));
        }
        Ok(Mobility {
            kind: MobilityKind::Constant(value),
            kappa_min: value,
            kappa_max: value,
        })
    }

    pub fn rational() -> Mobility {
        Mobility {
            kind: MobilityKind::Rational,
            kappa_min: 1.0,
            kappa_max: 2.0,
        }
    }

    pub fn custom(f: ScalarFn, kappa_min: f64, kappa_max: f64) -> Result<Mobility> {
        if !(kappa_min > 0.0) || !(kappa_max >= kappa_min) {
            return Err(Error::InvalidParameter(format!(
                "mobility bounds must satisfy 0 < kappa_min <= kappa_max, got ({kappa_min}, {kappa_max})"
            )));
        }
        Ok(Mobility {
            kind: MobilityKind::Custom(f),
            kappa_min,
            kappa_max,
        })
    }

    pub fn kappa(&self, m: f64) -> f64 {
        match &self.kind {
            MobilityKind::Constant(k) => *k,
            MobilityKind::Rational => 1.0 + 1.0 / (1.0 + m),
            MobilityKind::Custom(f) => f(m),
        }
    }
}

// ---------------------------------------------------------------------------
// Compatibility constants and the assembled model
// ---------------------------------------------------------------------------

/// The constants (rho_min, rho_max, xi_min, xi_max) tying the potential, pi
/// and g together. They pin the invariant region of the order parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompatibilityConstants {
    pub rho_min: f64,
    pub rho_max: f64,
    pub xi_min: f64,
    pub xi_max: f64,
}

#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub potential: PotentialSplit,
    pub coupling: Coupling,
    pub mobility: Mobility,
    pub constants: CompatibilityConstants,
}

impl ModelSpec {
    /// Logarithmic model with the default coupling, rational mobility and the
    /// stock constants (+-0.98, +-ln 99). The stock constants satisfy the
    /// sign conditions only for c up to about 2.34; larger c needs explicit
    /// constants.
    pub fn default_logarithmic(c: f64) -> Result<ModelSpec> {
        Ok(ModelSpec {
            potential: make_logarithmic(c)?,
            coupling: Coupling::default_concave(),
            mobility: Mobility::rational(),
            constants: CompatibilityConstants {
                rho_min: -0.98,
                rho_max: 0.98,
                xi_min: -(99.0_f64).ln(),
                xi_max: (99.0_f64).ln(),
            },
        })
    }

    /// Double-well model; the wells +-1 are also the compatibility bounds.
    pub fn default_double_well() -> ModelSpec {
        ModelSpec {
            potential: make_double_well(),
            coupling: Coupling::default_concave(),
            mobility: Mobility::rational(),
            constants: CompatibilityConstants {
                rho_min: -1.0,
                rho_max: 1.0,
                xi_min: -1.0,
                xi_max: 1.0,
            },
        }
    }

    pub fn validate(&self, sample_count: usize) -> Result<ValidationReport> {
        validate_model(self, sample_count)
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Outcome of one structural condition. `margin` is the signed distance to
/// violation: positive means the condition holds with that slack.
#[derive(Clone, Debug)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub conditions: Vec<ConditionCheck>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&ConditionCheck> {
        self.conditions.iter().filter(|c| !c.passed).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.conditions {
            writeln!(
                f,
                "{:<28} {}  margin {:+.6e}",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.margin
            )?;
        }
        Ok(())
    }
}

/// Slack allowed when confirming stored Lipschitz constants against sampled
/// difference quotients.
const LIPSCHITZ_SLACK: f64 = 1e-10;

/// Audits every structural condition of the model by sampling: mobility
/// bounds on a logarithmic grid, nonnegativity/concavity/Lipschitz bounds of
/// g and pi on the validity interval, and the four compatibility conditions
/// exactly at (rho_min, rho_max).
pub fn validate_model(spec: &ModelSpec, sample_count: usize) -> Result<ValidationReport> {
    if sample_count < 2 {
        return Err(Error::InvalidParameter(format!(
            "sample_count must be >= 2, got {sample_count}"
        )));
    }
    let mut conditions = Vec::new();

    // Mobility bounds on m = 0 plus a logarithmic grid spanning [1e-8, 1e8].
    {
        let mut lower = f64::INFINITY;
        let mut upper = f64::INFINITY;
        let mut probe = |m: f64| {
            let k = spec.mobility.kappa(m);
            lower = lower.min(k - spec.mobility.kappa_min);
            upper = upper.min(spec.mobility.kappa_max - k);
        };
        probe(0.0);
        for i in 0..sample_count {
            let t = i as f64 / (sample_count - 1) as f64;
            probe(10f64.powf(-8.0 + 16.0 * t));
        }
        conditions.push(ConditionCheck {
            name: "kappa_lower_bound",
            passed: lower >= 0.0,
            margin: lower,
        });
        conditions.push(ConditionCheck {
            name: "kappa_upper_bound",
            passed: upper >= 0.0,
            margin: upper,
        });
    }

    // g >= 0, concavity by second divided differences, and Lipschitz bounds
    // for g, g' and pi on the validity interval.
    {
        let iv = spec.coupling.validity_interval;
        let (lo, hi) = if iv.length().is_finite() {
            (iv.lo, iv.hi)
        } else {
            (-1.0, 1.0)
        };
        let h = (hi - lo) / sample_count as f64;
        let n = sample_count;

        let mut g_min = f64::INFINITY;
        let mut g_sup = 0.0_f64;
        let mut d2_max = f64::NEG_INFINITY;
        let mut q_g = 0.0_f64;
        let mut q_gp = 0.0_f64;
        let mut q_pi = 0.0_f64;
        for i in 0..=n {
            let r = lo + h * i as f64;
            let g = spec.coupling.g(r);
            g_min = g_min.min(g);
            g_sup = g_sup.max(g.abs());
            let d2 = (spec.coupling.g(r - h) - 2.0 * g + spec.coupling.g(r + h)) / (h * h);
            d2_max = d2_max.max(d2);
            if i > 0 {
                let rp = lo + h * (i - 1) as f64;
                q_g = q_g.max(((g - spec.coupling.g(rp)) / h).abs());
                q_gp = q_gp.max(((spec.coupling.g_prime(r) - spec.coupling.g_prime(rp)) / h).abs());
                q_pi = q_pi.max(((spec.potential.pi(r) - spec.potential.pi(rp)) / h).abs());
            }
        }
        let conc_tol = 1e-8 * g_sup.max(1.0);
        conditions.push(ConditionCheck {
            name: "g_nonnegative",
            passed: g_min >= 0.0,
            margin: g_min,
        });
        conditions.push(ConditionCheck {
            name: "g_concave",
            passed: d2_max <= conc_tol,
            margin: -d2_max,
        });
        let lip = |stored: f64, sampled: f64| ConditionCheck {
            name: "",
            passed: sampled <= stored * (1.0 + LIPSCHITZ_SLACK) + f64::MIN_POSITIVE,
            margin: stored - sampled,
        };
        conditions.push(ConditionCheck {
            name: "g_lipschitz",
            ..lip(spec.coupling.g_lipschitz, q_g)
        });
        conditions.push(ConditionCheck {
            name: "g_prime_lipschitz",
            ..lip(spec.coupling.g_prime_lipschitz, q_gp)
        });
        conditions.push(ConditionCheck {
            name: "pi_lipschitz",
            ..lip(spec.potential.pi_lipschitz, q_pi)
        });
    }

    // Compatibility conditions, evaluated exactly at rho_min / rho_max.
    {
        let cc = spec.constants;
        let dom = spec.potential.beta_domain;
        for (name, rho) in [
            ("rho_min_in_domain", cc.rho_min),
            ("rho_max_in_domain", cc.rho_max),
        ] {
            let inside = if spec.potential.is_single_valued() {
                // open domain for the logarithmic kind, all of R for the cubic
                spec.potential.beta(rho).is_some()
            } else {
                dom.contains(rho)
            };
            if !inside {
                return Err(Error::Domain {
                    condition: name.to_string(),
                    message: format!("{rho} is outside the effective domain of beta"),
                });
            }
            let margin = (rho - dom.lo).min(dom.hi - rho);
            conditions.push(ConditionCheck {
                name,
                passed: true,
                margin,
            });
        }

        let member = |name: &'static str, rho: f64, xi: f64| {
            let (passed, margin) = match spec.potential.kind {
                PotentialKind::Obstacle { lower, upper } => {
                    if rho == lower {
                        (xi <= 0.0, -xi)
                    } else if rho == upper {
                        (xi >= 0.0, xi)
                    } else {
                        (xi == 0.0, -xi.abs())
                    }
                }
                _ => {
                    let b = spec.potential.beta(rho).unwrap();
                    let err = (xi - b).abs();
                    (err <= 1e-12 * b.abs().max(1.0), -err)
                }
            };
            ConditionCheck {
                name,
                passed,
                margin,
            }
        };
        conditions.push(member("xi_min_in_beta", cc.rho_min, cc.xi_min));
        conditions.push(member("xi_max_in_beta", cc.rho_max, cc.xi_max));

        let s1 = cc.xi_min + spec.potential.pi(cc.rho_min);
        conditions.push(ConditionCheck {
            name: "xi_min_plus_pi_nonpositive",
            passed: s1 <= 0.0,
            margin: -s1,
        });
        let s2 = cc.xi_max + spec.potential.pi(cc.rho_max);
        conditions.push(ConditionCheck {
            name: "xi_max_plus_pi_nonnegative",
            passed: s2 >= 0.0,
            margin: s2,
        });
        let gp_lo = spec.coupling.g_prime(cc.rho_min);
        conditions.push(ConditionCheck {
            name: "g_prime_at_rho_min",
            passed: gp_lo >= 0.0,
            margin: gp_lo,
        });
        let gp_hi = spec.coupling.g_prime(cc.rho_max);
        conditions.push(ConditionCheck {
            name: "g_prime_at_rho_max",
            passed: -gp_hi >= 0.0,
            margin: -gp_hi,
        });
    }

    Ok(ValidationReport { conditions })
}

/// Bisection helper: smallest positive root of beta(r) + pi(r) = 0 for a
/// single-valued potential. A symmetric pair (-r, r) at or beyond the root
/// satisfies the sign conditions of the compatibility constants.
pub fn symmetric_bound_search(potential: &PotentialSplit) -> Option<f64> {
    if !potential.is_single_valued() {
        return None;
    }
    let h = |r: f64| potential.beta(r).map(|b| b + potential.pi(r));
    let hi0 = if potential.beta_domain.hi.is_finite() {
        potential.beta_domain.hi - 1e-12
    } else {
        // the cubic dominates any Lipschitz pi eventually; grow a bracket
        let mut b = 1.0;
        while h(b)? < 0.0 && b < 1e6 {
            b *= 2.0;
        }
        b
    };
    if h(hi0)? < 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (1e-12, hi0);
    if h(lo)? > 0.0 {
        return Some(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid)? <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_log_model() -> ModelSpec {
        ModelSpec::default_logarithmic(2.0).unwrap()
    }

    #[test]
    fn logarithmic_beta_values() {
        let p = make_logarithmic(2.0).unwrap();
        assert_eq!(p.beta(0.0).unwrap(), 0.0);
        let b = p.beta(0.5).unwrap();
        assert!((b - 3.0_f64.ln()).abs() < 1e-15, "beta(0.5) = {b}");
        assert!(p.beta(1.0).is_none());
    }

    #[test]
    fn logarithmic_rejects_small_c() {
        assert!(matches!(
            make_logarithmic(0.5),
            Err(Error::InvalidParameter(_))
        ));
        assert!(make_logarithmic(1.0).is_err());
    }

    #[test]
    fn double_well_derivative_structure() {
        let p = make_double_well();
        // +-1 are the wells: f'(+-1) = 0
        assert_eq!(p.beta(1.0).unwrap() + p.pi(1.0), 0.0);
        assert_eq!(p.beta(0.0).unwrap() + p.pi(0.0), 0.0);
        // symbolic oracle: f'(r) = r^3 - r
        let f_prime = |r: f64| r * r * r - r;
        for r in [-2.0, -0.3, 0.7, 2.0] {
            assert_eq!(p.beta(r).unwrap() + p.pi(r), f_prime(r));
        }
        assert_eq!(p.beta(2.0).unwrap() + p.pi(2.0), 6.0);
    }

    #[test]
    fn obstacle_membership() {
        let p = make_obstacle(-1.0, 1.0, Arc::new(|r| -r), 1.0).unwrap();
        assert!(p.beta_contains(0.3, 0.0));
        assert!(p.beta_contains(1.0, 5.0));
        assert!(!p.beta_contains(1.0, -1.0));
        assert!(p.beta_contains(-1.0, -2.0));
        assert!(!p.beta_contains(1.5, 0.0));
        assert!(matches!(
            make_obstacle(1.0, -1.0, Arc::new(|_| 0.0), 0.0),
            Err(Error::InvalidInterval { .. })
        ));
    }

    #[test]
    fn beta_is_monotone_on_samples() {
        for p in [make_logarithmic(2.0).unwrap(), make_double_well()] {
            let dom = p.beta_domain;
            let (lo, hi) = if dom.length().is_finite() {
                (dom.lo + 1e-6, dom.hi - 1e-6)
            } else {
                (-5.0, 5.0)
            };
            let n = 97;
            let pts: Vec<f64> = (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect();
            for i in 0..n {
                for j in (i + 1)..n {
                    let (b1, b2) = (p.beta(pts[i]).unwrap(), p.beta(pts[j]).unwrap());
                    assert!(
                        (b2 - b1) * (pts[j] - pts[i]) >= 0.0,
                        "monotonicity fails between {} and {}",
                        pts[i],
                        pts[j]
                    );
                }
            }
        }
    }

    #[test]
    fn logarithmic_beta_blows_up_at_walls() {
        let p = make_logarithmic(2.0).unwrap();
        let mut last = 0.0;
        for k in 1..=12 {
            let r = 1.0 - 10f64.powi(-k);
            let b = p.beta(r).unwrap();
            assert!(b > last, "beta not increasing toward +1 at k={k}");
            let bm = p.beta(-r).unwrap();
            assert_eq!(bm, -b);
            last = b;
        }
    }

    #[test]
    fn validate_default_logarithmic_passes() {
        let report = validate_model(&default_log_model(), 256).unwrap();
        assert!(report.all_passed(), "failures: {:?}", report.failed());
        // sign margin at rho_min: -(xi_min + pi(rho_min)) = ln 99 - 3.92
        let c = report
            .conditions
            .iter()
            .find(|c| c.name == "xi_min_plus_pi_nonpositive")
            .unwrap();
        assert!((c.margin - ((99.0_f64).ln() - 3.92)).abs() < 1e-12);
    }

    #[test]
    fn validate_flags_bad_rho_max() {
        // rho_max = 0.95 gives xi_max + pi(rho_max) = ln 39 - 3.8 < 0
        let mut m = default_log_model();
        m.constants.rho_max = 0.95;
        m.constants.xi_max = (39.0_f64).ln();
        let report = validate_model(&m, 128).unwrap();
        let c = report
            .conditions
            .iter()
            .find(|c| c.name == "xi_max_plus_pi_nonnegative")
            .unwrap();
        assert!(!c.passed);
        assert!((c.margin - ((39.0_f64).ln() - 3.8)).abs() < 1e-12);
        assert!(c.margin < 0.0);
    }

    #[test]
    fn validate_constant_mobility_zero_margin() {
        let mut m = default_log_model();
        m.mobility = Mobility::constant(1.0).unwrap();
        let report = validate_model(&m, 64).unwrap();
        for name in ["kappa_lower_bound", "kappa_upper_bound"] {
            let c = report.conditions.iter().find(|c| c.name == name).unwrap();
            assert!(c.passed);
            assert_eq!(c.margin, 0.0);
        }
    }

    #[test]
    fn validate_domain_error_outside_beta_domain() {
        let mut m = default_log_model();
        m.constants.rho_max = 1.5;
        match validate_model(&m, 64) {
            Err(Error::Domain { condition, .. }) => {
                assert_eq!(condition, "rho_max_in_domain")
            }
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn validate_is_deterministic() {
        let m = default_log_model();
        let a = validate_model(&m, 173).unwrap();
        let b = validate_model(&m, 173).unwrap();
        assert_eq!(a.conditions.len(), b.conditions.len());
        for (x, y) in a.conditions.iter().zip(&b.conditions) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.passed, y.passed);
            assert_eq!(x.margin.to_bits(), y.margin.to_bits());
        }
    }

    #[test]
    fn validate_rejects_mobility_outside_bounds() {
        let mut m = default_log_model();
        m.mobility = Mobility::custom(Arc::new(|mv: f64| 0.5 + mv.min(0.2)), 1.0, 2.0).unwrap();
        let report = validate_model(&m, 64).unwrap();
        assert!(!report.all_passed());
        let c = report
            .conditions
            .iter()
            .find(|c| c.name == "kappa_lower_bound")
            .unwrap();
        assert!(!c.passed && c.margin < 0.0);
    }

    #[test]
    fn symmetric_bound_search_matches_known_roots() {
        // double well: beta + pi = r^3 - r vanishes at 1
        let r = symmetric_bound_search(&make_double_well()).unwrap();
        assert!((r - 1.0).abs() < 1e-10, "got {r}");
        // logarithmic c=2: root of ln((1+r)/(1-r)) = 4r, approx 0.9575
        let p = make_logarithmic(2.0).unwrap();
        let r = symmetric_bound_search(&p).unwrap();
        assert!(p.beta(r).unwrap() + p.pi(r) >= -1e-9);
        assert!(r > 0.95 && r < 0.96, "got {r}");
        // and the stock constant 0.98 is beyond it
        assert!(r < 0.98);
    }

    #[test]
    fn default_double_well_constants_pass() {
        let report = validate_model(&ModelSpec::default_double_well(), 128).unwrap();
        assert!(report.all_passed(), "failures: {:?}", report.failed());
    }
}
