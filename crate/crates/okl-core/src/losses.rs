//! Loss functions, their Fenchel conjugates, and the per-coordinate
//! conjugate term used by the coordinate-ascent subproblem.
//!
//! For a sample with label `y` and current dual value `alpha`, the
//! subproblem's loss contribution is `L*((-alpha - delta) / C)` as a function
//! of the step `delta`; [`ConjugateTerm`] packages its value, derivatives and
//! feasible interval. The conjugate's domain translates into box constraints
//! on the dual variables:
//!
//! - hinge: `y * (alpha + delta) in [0, C]`
//! - squared: unconstrained
//! - epsilon-SVR: `|alpha + delta| <= C`

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("epsilon must be nonnegative, got {0}")]
    BadEpsilon(f64),
    #[error("classification loss requires labels in {{-1,+1}}, got {0}")]
    BadLabel(f64),
    #[error("C must be positive, got {0}")]
    BadC(f64),
    #[error("alpha={alpha} is outside the conjugate domain for this loss (C={c}); solver state is corrupt")]
    AlphaOutOfDomain { alpha: f64, c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    Hinge,
    Squared,
    EpsSvr { epsilon: f64 },
}

impl LossSpec {
    pub fn eps_svr(epsilon: f64) -> Result<Self, LossError> {
        if epsilon >= 0.0 {
            Ok(LossSpec::EpsSvr { epsilon })
        } else {
            Err(LossError::BadEpsilon(epsilon))
        }
    }

    /// Hinge is the only classification loss; it restricts labels to {-1,+1}.
    pub fn is_classification(&self) -> bool {
        matches!(self, LossSpec::Hinge)
    }

    pub fn validate_label(&self, y: f64) -> Result<(), LossError> {
        if self.is_classification() && y != 1.0 && y != -1.0 {
            Err(LossError::BadLabel(y))
        } else {
            Ok(())
        }
    }
}

/// Loss value `L(y, u)`.
pub fn loss(spec: &LossSpec, y: f64, u: f64) -> Result<f64, LossError> {
    spec.validate_label(y)?;
    Ok(match *spec {
        LossSpec::Hinge => (1.0 - y * u).max(0.0),
        LossSpec::Squared => (y - u) * (y - u),
        LossSpec::EpsSvr { epsilon } => ((y - u).abs() - epsilon).max(0.0),
    })
}

/// Fenchel conjugate `L*(v) = sup_u (u v - L(y, u))`; `+inf` outside the
/// conjugate's domain.
pub fn conjugate(spec: &LossSpec, y: f64, v: f64) -> f64 {
    match *spec {
        LossSpec::Hinge => {
            let yv = y * v;
            if (-1.0..=0.0).contains(&yv) {
                yv
            } else {
                f64::INFINITY
            }
        }
        LossSpec::Squared => v * v / 4.0 + y * v,
        LossSpec::EpsSvr { epsilon } => {
            if v.abs() <= 1.0 {
                y * v + epsilon * v.abs()
            } else {
                f64::INFINITY
            }
        }
    }
}

/// Relative slack used when checking that a stored `alpha` still lies in the
/// conjugate-domain box (guards against accumulated rounding).
const DOMAIN_SLACK: f64 = 1e-9;

/// The map `delta -> L*((-alpha - delta) / C)` for one sample, with its
/// feasible interval. Immutable and cheap to construct.
#[derive(Debug, Clone, Copy)]
pub struct ConjugateTerm {
    spec: LossSpec,
    y: f64,
    alpha: f64,
    c: f64,
    lo: f64,
    hi: f64,
}

impl ConjugateTerm {
    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Location of a nondifferentiable point strictly inside the interval,
    /// if any (the epsilon-SVR tube boundary).
    pub fn kink(&self) -> Option<f64> {
        match self.spec {
            LossSpec::EpsSvr { epsilon } if epsilon > 0.0 => {
                let k = -self.alpha;
                (self.lo < k && k < self.hi).then_some(k)
            }
            _ => None,
        }
    }

    /// `L*((-alpha - delta) / C)`; `+inf` outside `[lo, hi]`.
    pub fn value(&self, delta: f64) -> f64 {
        if delta < self.lo || delta > self.hi {
            return f64::INFINITY;
        }
        let a = self.alpha + delta;
        match self.spec {
            LossSpec::Hinge => -self.y * a / self.c,
            LossSpec::Squared => a * a / (4.0 * self.c * self.c) - self.y * a / self.c,
            LossSpec::EpsSvr { epsilon } => -self.y * a / self.c + epsilon * a.abs() / self.c,
        }
    }

    /// One-sided (right) derivative with respect to `delta`.
    pub fn deriv(&self, delta: f64) -> f64 {
        let a = self.alpha + delta;
        match self.spec {
            LossSpec::Hinge => -self.y / self.c,
            LossSpec::Squared => a / (2.0 * self.c * self.c) - self.y / self.c,
            LossSpec::EpsSvr { epsilon } => {
                let s = if a >= 0.0 { 1.0 } else { -1.0 };
                -self.y / self.c + epsilon * s / self.c
            }
        }
    }

    /// Left-sided derivative; differs from [`Self::deriv`] only at the kink.
    pub fn deriv_left(&self, delta: f64) -> f64 {
        let a = self.alpha + delta;
        match self.spec {
            LossSpec::Hinge => -self.y / self.c,
            LossSpec::Squared => a / (2.0 * self.c * self.c) - self.y / self.c,
            LossSpec::EpsSvr { epsilon } => {
                let s = if a > 0.0 { 1.0 } else { -1.0 };
                -self.y / self.c + epsilon * s / self.c
            }
        }
    }

    pub fn deriv2(&self, _delta: f64) -> f64 {
        match self.spec {
            LossSpec::Hinge | LossSpec::EpsSvr { .. } => 0.0,
            LossSpec::Squared => 1.0 / (2.0 * self.c * self.c),
        }
    }
}

/// Builds the [`ConjugateTerm`] for sample state `(y, alpha)` at trade-off
/// `C`. Fails if `alpha` is already outside the conjugate-domain box.
pub fn conjugate_term(
    spec: &LossSpec,
    y: f64,
    alpha: f64,
    c: f64,
) -> Result<ConjugateTerm, LossError> {
    if c <= 0.0 {
        return Err(LossError::BadC(c));
    }
    spec.validate_label(y)?;
    let slack = DOMAIN_SLACK * c.max(1.0);
    let (lo, hi) = match *spec {
        LossSpec::Hinge => {
            // y * (alpha + delta) in [0, C]
            let (a_lo, a_hi) = if y > 0.0 { (0.0, c) } else { (-c, 0.0) };
            if alpha < a_lo - slack || alpha > a_hi + slack {
                return Err(LossError::AlphaOutOfDomain { alpha, c });
            }
            (a_lo - alpha, a_hi - alpha)
        }
        LossSpec::Squared => (f64::NEG_INFINITY, f64::INFINITY),
        LossSpec::EpsSvr { .. } => {
            if alpha.abs() > c + slack {
                return Err(LossError::AlphaOutOfDomain { alpha, c });
            }
            (-c - alpha, c - alpha)
        }
    };
    // absorb rounding so that delta = 0 is always feasible
    Ok(ConjugateTerm {
        spec: *spec,
        y,
        alpha,
        c,
        lo: lo.min(0.0),
        hi: hi.max(0.0),
    })
}

/// Projects `alpha` onto the conjugate-domain box (identity for losses with
/// unbounded dual).
pub fn clamp_alpha(spec: &LossSpec, y: f64, alpha: f64, c: f64) -> f64 {
    match *spec {
        LossSpec::Hinge => {
            if y > 0.0 {
                alpha.clamp(0.0, c)
            } else {
                alpha.clamp(-c, 0.0)
            }
        }
        LossSpec::Squared => alpha,
        LossSpec::EpsSvr { .. } => alpha.clamp(-c, c),
    }
}
