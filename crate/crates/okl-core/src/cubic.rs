//! Closed-form real roots of low-degree polynomials.
//!
//! Used by the coordinate subproblem in the `p = 2` special case, where the
//! stationarity condition is a cubic in the step.

/// Real roots of `a3 x^3 + a2 x^2 + a1 x + a0 = 0`, in ascending order.
/// Degenerate leading coefficients fall through to the quadratic / linear
/// formulas. Each root is polished with two Newton steps.
pub fn real_roots(a3: f64, a2: f64, a1: f64, a0: f64) -> Vec<f64> {
    let scale = a3.abs().max(a2.abs()).max(a1.abs()).max(a0.abs());
    if scale == 0.0 || !scale.is_finite() {
        return Vec::new();
    }
    let (a3, a2, a1, a0) = (a3 / scale, a2 / scale, a1 / scale, a0 / scale);

    let mut roots = if a3.abs() <= 1e-14 {
        quadratic_roots(a2, a1, a0)
    } else {
        depressed_cubic_roots(a2 / a3, a1 / a3, a0 / a3)
    };

    for r in roots.iter_mut() {
        for _ in 0..2 {
            let f = ((a3 * *r + a2) * *r + a1) * *r + a0;
            let df = (3.0 * a3 * *r + 2.0 * a2) * *r + a1;
            if df.abs() > 1e-300 {
                let step = f / df;
                if step.is_finite() {
                    *r -= step;
                }
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (a.abs() + b.abs() + 1.0));
    roots
}

/// Roots of the monic cubic `x^3 + b x^2 + c x + d`.
fn depressed_cubic_roots(b: f64, c: f64, d: f64) -> Vec<f64> {
    // substitute x = t - b/3: t^3 + p t + q = 0
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let shift = -b / 3.0;
    let disc = 0.25 * q * q + p * p * p / 27.0;
    let disc_scale = 0.25 * q * q + (p * p * p / 27.0).abs();

    if disc.abs() <= 1e-12 * disc_scale && p.abs() > 1e-300 {
        // boundary case: a simple root and a double root
        vec![3.0 * q / p + shift, -1.5 * q / p + shift]
    } else if disc > 0.0 {
        // one real root; pick the large-magnitude cube root first to avoid
        // cancellation, recover the partner from u v = -p/3
        let s = disc.sqrt();
        let u = if q <= 0.0 {
            (-0.5 * q + s).cbrt()
        } else {
            (-0.5 * q - s).cbrt()
        };
        let v = if u != 0.0 { -p / (3.0 * u) } else { 0.0 };
        vec![u + v + shift]
    } else if p.abs() <= 1e-300 {
        // triple root
        vec![shift + (-q).cbrt()]
    } else {
        // three real roots (trigonometric form)
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - std::f64::consts::TAU * k as f64 / 3.0).cos() + shift)
            .collect()
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() <= 1e-14 {
        if b.abs() <= 1e-14 {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    // citardauq for the small root
    let s = disc.sqrt();
    let q = -0.5 * (b + s.copysign(b));
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}
