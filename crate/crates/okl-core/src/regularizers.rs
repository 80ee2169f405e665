//! Output-kernel regularizers and the analytic recovery of `Theta` from the
//! dual variables.
//!
//! Each regularizer kind is generated by a convex scalar function `phi` with
//! a nonnegative-coefficient power series, so the elementwise maximizer map
//! preserves positive semidefiniteness:
//!
//! | kind     | phi(z)        | V(Theta) (penalty)                                  | Theta map      |
//! |----------|---------------|------------------------------------------------------|----------------|
//! | pnorm(k) | z^{2k} / 2k   | (1/2) sum |Theta|^p, p = 2k/(2k-1)                   | scaled z^{2k-1}|
//! | entropy  | e^z           | sum Theta ln Theta - Theta (requires Theta > 0)      | e^z            |
//! | cosh_gen | cosh(z) - 1   | sum Theta asinh Theta - sqrt(1+Theta^2), plus T^2    | sinh(z)        |
//!
//! All matrix-level entry points take the task inner-product matrix
//! `inner[r][s] = <alpha^r, K_rs alpha^s>`; the `1/(2 lambda)` scaling to the
//! `rho` scale happens inside this module only. For the p-norm family the
//! constants are chosen for the `(1/2)||Theta||_p^p` convention, so penalty,
//! maximizer and dual objective are mutually consistent and the duality gap
//! vanishes at the optimum.

use thiserror::Error;

use crate::mat::SquareMat;
use crate::model::OutputKernel;

#[derive(Debug, Error)]
pub enum RegError {
    #[error("pnorm exponent parameter k must be >= 1, got {0}")]
    BadK(u32),
    #[error("lambda must be positive, got {0}")]
    BadLambda(f64),
    #[error("C must be positive, got {0}")]
    BadC(f64),
    #[error("eta is defined only for the pnorm family")]
    NotPNorm,
    #[error("matrix is not symmetric (violation {violation:e} > {tol:e})")]
    NonSymmetric { violation: f64, tol: f64 },
    #[error(
        "recovered Theta has non-finite entries (inner products outside the representable range)"
    )]
    NonFiniteTheta,
    #[error("recovered Theta failed validation: {0}")]
    BadTheta(#[from] crate::model::ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegKind {
    /// `V(Theta) = (1/2) ||Theta||_p^p` with `p = 2k/(2k-1)`.
    PNorm { k: u32 },
    /// Generalized KL penalty `sum Theta ln Theta - Theta`.
    Entropy,
    /// The cosh-generated penalty interpolating between 2-norm and 1-norm.
    CoshGen,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerSpec {
    pub kind: RegKind,
    pub lambda: f64,
    /// Loss trade-off; only the subproblem constant `eta` needs it.
    pub c: f64,
}

impl RegularizerSpec {
    pub fn new(kind: RegKind, lambda: f64, c: f64) -> Result<Self, RegError> {
        if let RegKind::PNorm { k } = kind {
            if k < 1 {
                return Err(RegError::BadK(k));
            }
        }
        if !(lambda > 0.0) {
            return Err(RegError::BadLambda(lambda));
        }
        if !(c > 0.0) {
            return Err(RegError::BadC(c));
        }
        Ok(RegularizerSpec { kind, lambda, c })
    }

    /// The norm exponent `p = 2k/(2k-1)`, in `(1, 2]`; only for pnorm.
    pub fn p(&self) -> Option<f64> {
        match self.kind {
            RegKind::PNorm { k } => {
                let k = k as f64;
                Some(2.0 * k / (2.0 * k - 1.0))
            }
            _ => None,
        }
    }

    /// Generating function `phi`.
    pub fn phi(&self, z: f64) -> f64 {
        match self.kind {
            RegKind::PNorm { k } => z.powi(2 * k as i32) / (2.0 * k as f64),
            RegKind::Entropy => z.exp(),
            RegKind::CoshGen => z.cosh() - 1.0,
        }
    }

    pub fn phi_prime(&self, z: f64) -> f64 {
        match self.kind {
            RegKind::PNorm { k } => z.powi(2 * k as i32 - 1),
            RegKind::Entropy => z.exp(),
            RegKind::CoshGen => z.sinh(),
        }
    }

    pub fn phi_double(&self, z: f64) -> f64 {
        match self.kind {
            RegKind::PNorm { k } => (2.0 * k as f64 - 1.0) * z.powi(2 * k as i32 - 2),
            RegKind::Entropy => z.exp(),
            RegKind::CoshGen => z.cosh(),
        }
    }

    /// `((2k-1) / (2k lambda))^{2k-1}`, the maximizer constant.
    fn theta_coeff(&self, k: u32) -> f64 {
        let kf = k as f64;
        ((2.0 * kf - 1.0) / (2.0 * kf * self.lambda)).powi(2 * k as i32 - 1)
    }

    /// `lambda/(4k-2) * ((2k-1)/(2k lambda))^{2k}`, the dual-penalty constant.
    fn pen_coeff(&self, k: u32) -> f64 {
        let kf = k as f64;
        self.lambda / (4.0 * kf - 2.0)
            * ((2.0 * kf - 1.0) / (2.0 * kf * self.lambda)).powi(2 * k as i32)
    }

    /// Elementwise maximizer map from the inner-product scale:
    /// the `(r,s)` entry of the optimal `Theta` given
    /// `c = <alpha^r, K_rs alpha^s>`.
    pub fn theta_cell(&self, c: f64) -> f64 {
        match self.kind {
            RegKind::PNorm { k } => self.theta_coeff(k) * c.powi(2 * k as i32 - 1),
            RegKind::Entropy => (c / (2.0 * self.lambda)).exp(),
            RegKind::CoshGen => (c / (2.0 * self.lambda)).sinh(),
        }
    }

    /// Per-cell dual penalty as a function of the raw inner product.
    /// Summed over all `(r,s)` this is [`Self::dual_penalty`].
    pub fn pen_cell(&self, c: f64) -> f64 {
        match self.kind {
            RegKind::PNorm { k } => self.pen_coeff(k) * c.powi(2 * k as i32),
            RegKind::Entropy => self.lambda * (c / (2.0 * self.lambda)).exp(),
            RegKind::CoshGen => self.lambda * ((c / (2.0 * self.lambda)).cosh() - 1.0),
        }
    }

    /// Derivative of [`Self::pen_cell`]; equals `theta_cell(c) / 2`.
    pub fn pen_cell_prime(&self, c: f64) -> f64 {
        match self.kind {
            RegKind::PNorm { k } => self.pen_coeff(k) * 2.0 * k as f64 * c.powi(2 * k as i32 - 1),
            RegKind::Entropy => 0.5 * (c / (2.0 * self.lambda)).exp(),
            RegKind::CoshGen => 0.5 * (c / (2.0 * self.lambda)).sinh(),
        }
    }

    /// Second derivative of [`Self::pen_cell`].
    pub fn pen_cell_second(&self, c: f64) -> f64 {
        match self.kind {
            RegKind::PNorm { k } => {
                let kf = k as f64;
                self.pen_coeff(k) * 2.0 * kf * (2.0 * kf - 1.0) * c.powi(2 * k as i32 - 2)
            }
            RegKind::Entropy => (c / (2.0 * self.lambda)).exp() / (4.0 * self.lambda),
            RegKind::CoshGen => (c / (2.0 * self.lambda)).cosh() / (4.0 * self.lambda),
        }
    }

    /// Largest `|c|` for which `pen_cell(c)` and its derivatives stay
    /// finite; the subproblem solver clips its search interval so arguments
    /// never exceed this.
    pub fn max_pen_arg(&self) -> f64 {
        match self.kind {
            RegKind::PNorm { k } => {
                let coeff = self.pen_coeff(k).max(f64::MIN_POSITIVE);
                (1e300 / coeff).powf(1.0 / (2.0 * k as f64)) / 4.0
            }
            RegKind::Entropy | RegKind::CoshGen => {
                // lambda * exp(x / 2 lambda) <= ~1e300
                2.0 * self.lambda * (690.0 - self.lambda.max(1.0).ln())
            }
        }
    }

    /// Analytic maximizer over the PSD cone: applies the elementwise map to
    /// the (symmetric, PSD) inner-product matrix.
    pub fn theta_from_rho(&self, inner: &SquareMat) -> Result<OutputKernel, RegError> {
        let tol = 1e-8 * inner.max_abs().max(1.0);
        let violation = inner.symmetry_violation();
        if violation > tol {
            return Err(RegError::NonSymmetric { violation, tol });
        }
        let mut sym = inner.clone();
        sym.symmetrize();
        let mapped = sym.map(|c| self.theta_cell(c));
        if mapped.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(RegError::NonFiniteTheta);
        }
        Ok(OutputKernel::from_mat(mapped)?)
    }

    /// The dual objective's regularization penalty,
    /// `lambda * max_Theta (<rho, Theta> - V(Theta))` evaluated in closed
    /// form on the inner-product matrix. Constant offsets (the entropy
    /// `phi(0) = 1` per cell) are retained so the duality gap is exactly
    /// zero at the optimum.
    pub fn dual_penalty(&self, inner: &SquareMat) -> f64 {
        inner.as_slice().iter().map(|&c| self.pen_cell(c)).sum()
    }

    /// The primal regularizer `V(Theta)`; `+inf` for the entropy kind when
    /// some entry is not strictly positive.
    pub fn v_of_theta(&self, theta: &OutputKernel) -> f64 {
        let m = theta.mat();
        match self.kind {
            RegKind::PNorm { k } => {
                let p = 2.0 * k as f64 / (2.0 * k as f64 - 1.0);
                0.5 * m.as_slice().iter().map(|&t| t.abs().powf(p)).sum::<f64>()
            }
            RegKind::Entropy => {
                let mut acc = 0.0;
                for &t in m.as_slice() {
                    if t <= 0.0 {
                        return f64::INFINITY;
                    }
                    acc += t * t.ln() - t;
                }
                acc
            }
            RegKind::CoshGen => {
                let t2 = (m.dim() * m.dim()) as f64;
                m.as_slice()
                    .iter()
                    .map(|&t| t * t.asinh() - (1.0 + t * t).sqrt())
                    .sum::<f64>()
                    + t2
            }
        }
    }

    /// The subproblem constant `eta = lambda/(C(4k-2)) ((2k-1)/(2k lambda))^{2k}`.
    pub fn eta(&self) -> Result<f64, RegError> {
        match self.kind {
            RegKind::PNorm { k } => Ok(self.pen_coeff(k) / self.c),
            _ => Err(RegError::NotPNorm),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pnorm(k: u32, lambda: f64, c: f64) -> RegularizerSpec {
        RegularizerSpec::new(RegKind::PNorm { k }, lambda, c).unwrap()
    }

    fn random_psd(t: usize, rng: &mut ChaCha8Rng, scale: f64) -> SquareMat {
        // A A^T is PSD by construction
        let a: Vec<f64> = (0..t * t).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let mut m = SquareMat::zeros(t);
        for i in 0..t {
            for j in 0..t {
                let v: f64 = (0..t).map(|l| a[i * t + l] * a[j * t + l]).sum();
                m.set(i, j, scale * v);
            }
        }
        m
    }

    #[test]
    fn phi_values() {
        let r = pnorm(1, 1.0, 1.0);
        assert_eq!(r.phi(3.0), 4.5);
        let e = RegularizerSpec::new(RegKind::Entropy, 1.0, 1.0).unwrap();
        assert_eq!(e.phi(0.0), 1.0);
        assert_eq!(e.phi_prime(0.0), 1.0);
        let ch = RegularizerSpec::new(RegKind::CoshGen, 1.0, 1.0).unwrap();
        assert_eq!(ch.phi(0.0), 0.0);
        assert_eq!(ch.phi_prime(0.0), 0.0);
    }

    #[test]
    fn theta_from_rho_examples() {
        let r = pnorm(1, 1.0, 1.0);
        let zero = SquareMat::zeros(2);
        let th = r.theta_from_rho(&zero).unwrap();
        assert_eq!(th.mat().max_abs(), 0.0);

        // <a^r, K_rs a^s> = diag(2,2), k=1, lambda=1 -> Theta = I
        let inner = SquareMat::from_vec(2, vec![2.0, 0.0, 0.0, 2.0]);
        let th = r.theta_from_rho(&inner).unwrap();
        assert_eq!(th.get(0, 0), 1.0);
        assert_eq!(th.get(0, 1), 0.0);
        assert_eq!(th.get(1, 1), 1.0);

        let e = RegularizerSpec::new(RegKind::Entropy, 1.0, 1.0).unwrap();
        let th = e.theta_from_rho(&zero).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(th.get(i, j), 1.0);
            }
        }
    }

    #[test]
    fn theta_from_rho_rejects_asymmetric() {
        let r = pnorm(1, 1.0, 1.0);
        let bad = SquareMat::from_vec(2, vec![1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            r.theta_from_rho(&bad),
            Err(RegError::NonSymmetric { .. })
        ));
    }

    #[test]
    fn dual_penalty_examples() {
        let zero = SquareMat::zeros(2);
        assert_eq!(pnorm(1, 1.0, 1.0).dual_penalty(&zero), 0.0);
        assert_eq!(
            RegularizerSpec::new(RegKind::CoshGen, 1.0, 1.0)
                .unwrap()
                .dual_penalty(&zero),
            0.0
        );
        // lambda * T^2 for entropy: phi(0) = 1 per cell
        assert_eq!(
            RegularizerSpec::new(RegKind::Entropy, 0.5, 1.0)
                .unwrap()
                .dual_penalty(&zero),
            0.5 * 4.0
        );

        let inner = SquareMat::from_vec(2, vec![2.0, 0.0, 0.0, 2.0]);
        assert!((pnorm(1, 1.0, 1.0).dual_penalty(&inner) - 1.0).abs() < 1e-15);

        let mut single = SquareMat::zeros(1);
        single.set(0, 0, 1.0);
        let expect = (1.0 / 6.0) * (3.0f64 / 4.0).powi(4);
        assert!((pnorm(2, 1.0, 1.0).dual_penalty(&single) - expect).abs() < 1e-15);
    }

    #[test]
    fn v_of_theta_examples() {
        let r = pnorm(1, 1.0, 1.0);
        let eye = OutputKernel::from_mat(SquareMat::identity(2)).unwrap();
        assert_eq!(r.v_of_theta(&eye), 1.0);

        let e = RegularizerSpec::new(RegKind::Entropy, 1.0, 1.0).unwrap();
        let ones = OutputKernel::from_mat(SquareMat::from_vec(2, vec![1.0; 4])).unwrap();
        assert_eq!(e.v_of_theta(&ones), -4.0);

        let ch = RegularizerSpec::new(RegKind::CoshGen, 1.0, 1.0).unwrap();
        let zero = OutputKernel::from_mat(SquareMat::zeros(2)).unwrap();
        assert_eq!(ch.v_of_theta(&zero), 0.0);
    }

    #[test]
    fn entropy_v_is_infinite_at_zero_entries() {
        let e = RegularizerSpec::new(RegKind::Entropy, 1.0, 1.0).unwrap();
        let z = OutputKernel::from_mat(SquareMat::zeros(2)).unwrap();
        assert!(e.v_of_theta(&z).is_infinite());
    }

    #[test]
    fn eta_examples() {
        assert!((pnorm(1, 1.0, 1.0).eta().unwrap() - 0.125).abs() < 1e-18);
        assert!((pnorm(1, 2.0, 1.0).eta().unwrap() - 1.0 / 16.0).abs() < 1e-18);
        let expect = (1.0 / 6.0) * (3.0f64 / 4.0).powi(4);
        assert!((pnorm(2, 1.0, 1.0).eta().unwrap() - expect).abs() < 1e-18);
        assert!(RegularizerSpec::new(RegKind::Entropy, 1.0, 1.0)
            .unwrap()
            .eta()
            .is_err());
    }

    /// Conjugacy (the generic-family identity): at the analytic maximizer,
    /// `<rho, Theta*> - V(Theta*) = dual_penalty(inner) / lambda`.
    #[test]
    fn conjugacy_identity_for_all_kinds() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let kinds = [
            RegKind::PNorm { k: 1 },
            RegKind::PNorm { k: 2 },
            RegKind::PNorm { k: 4 },
            RegKind::Entropy,
            RegKind::CoshGen,
        ];
        for trial in 0..40 {
            let t = 2 + trial % 3;
            let lambda = 0.5 + rng.gen::<f64>();
            let inner = random_psd(t, &mut rng, 1.5);
            for kind in kinds {
                let spec = RegularizerSpec::new(kind, lambda, 1.0).unwrap();
                let theta = spec.theta_from_rho(&inner).unwrap();
                let rho = inner.map(|v| v / (2.0 * lambda));
                let lhs = rho.dot(theta.mat()) - spec.v_of_theta(&theta);
                let rhs = spec.dual_penalty(&inner) / lambda;
                assert!(
                    (lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1.0),
                    "{kind:?} T={t}: {lhs} vs {rhs}"
                );
            }
        }
    }

    /// For pnorm, plugging the analytic maximizer into the relaxed objective
    /// reproduces the closed-form optimal value.
    #[test]
    fn pnorm_closed_form_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for &k in &[1u32, 2, 4] {
            for _ in 0..20 {
                let t = 2 + (rng.gen::<u32>() % 3) as usize;
                let lambda = 0.5 + rng.gen::<f64>();
                let spec = pnorm(k, lambda, 1.0);
                let inner = random_psd(t, &mut rng, 1.0);
                let rho = inner.map(|v| v / (2.0 * lambda));
                let theta = spec.theta_from_rho(&inner).unwrap();
                let p = spec.p().unwrap();
                let direct = rho.dot(theta.mat())
                    - 0.5
                        * theta
                            .mat()
                            .as_slice()
                            .iter()
                            .map(|&x| x.abs().powf(p))
                            .sum::<f64>();
                let kf = k as f64;
                let closed = 1.0 / (4.0 * kf - 2.0)
                    * ((2.0 * kf - 1.0) / kf).powi(2 * k as i32)
                    * rho
                        .as_slice()
                        .iter()
                        .map(|&x| x.powi(2 * k as i32))
                        .sum::<f64>();
                assert!(
                    (direct - closed).abs() <= 1e-10 * closed.abs().max(1e-30),
                    "k={k}: {direct} vs {closed}"
                );
            }
        }
    }

    #[test]
    fn pen_cell_prime_is_half_theta_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let kinds = [RegKind::PNorm { k: 3 }, RegKind::Entropy, RegKind::CoshGen];
        for kind in kinds {
            let spec = RegularizerSpec::new(kind, 0.7, 2.0).unwrap();
            for _ in 0..50 {
                let c = rng.gen::<f64>() * 4.0 - 2.0;
                let lhs = spec.pen_cell_prime(c);
                let rhs = 0.5 * spec.theta_cell(c);
                assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
            }
        }
    }

    #[test]
    fn pen_cell_derivatives_match_finite_differences() {
        let kinds = [
            RegKind::PNorm { k: 1 },
            RegKind::PNorm { k: 2 },
            RegKind::Entropy,
            RegKind::CoshGen,
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for kind in kinds {
            let spec = RegularizerSpec::new(kind, 1.3, 1.0).unwrap();
            for _ in 0..30 {
                let c = rng.gen::<f64>() * 3.0 - 1.5;
                let h = 1e-5 * c.abs().max(1.0);
                let fd = (spec.pen_cell(c + h) - spec.pen_cell(c - h)) / (2.0 * h);
                let d = spec.pen_cell_prime(c);
                assert!(
                    (fd - d).abs() <= 1e-6 * d.abs().max(1e-6),
                    "{kind:?} at {c}: {d} vs fd {fd}"
                );
                let fd2 = (spec.pen_cell(c + h) - 2.0 * spec.pen_cell(c) + spec.pen_cell(c - h))
                    / (h * h);
                let d2 = spec.pen_cell_second(c);
                assert!(
                    (fd2 - d2).abs() <= 1e-4 * d2.abs().max(1e-4),
                    "{kind:?} at {c}: {d2} vs fd {fd2}"
                );
            }
        }
    }

    /// Single-entry derivative of the matrix-level penalty (entries treated
    /// as independent).
    #[test]
    fn dual_penalty_entry_derivative_matches_fd() {
        let spec = pnorm(2, 0.8, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let inner = random_psd(3, &mut rng, 1.0);
        let (i, j) = (0, 1);
        let h = 1e-5;
        let mut plus = inner.clone();
        plus.add(i, j, h);
        let mut minus = inner.clone();
        minus.add(i, j, -h);
        let fd = (spec.dual_penalty(&plus) - spec.dual_penalty(&minus)) / (2.0 * h);
        let d = spec.pen_cell_prime(inner.get(i, j));
        assert!((fd - d).abs() <= 1e-6 * d.abs().max(1e-9), "{d} vs {fd}");
    }

    #[test]
    fn validation() {
        assert!(RegularizerSpec::new(RegKind::PNorm { k: 0 }, 1.0, 1.0).is_err());
        assert!(RegularizerSpec::new(RegKind::Entropy, 0.0, 1.0).is_err());
        assert!(RegularizerSpec::new(RegKind::Entropy, 1.0, -1.0).is_err());
        assert_eq!(pnorm(1, 1.0, 1.0).p(), Some(2.0));
        assert_eq!(pnorm(4, 1.0, 1.0).p(), Some(8.0 / 7.0));
    }
}
