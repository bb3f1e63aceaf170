//! Finite-difference gradient checking.

/// Absolute floor for the vector error's denominator. An identically zero
/// gradient leaves only stencil roundoff (about `ε·|f|/step`) on both sides.
pub const NORM_FLOOR: f64 = 1e-6;

/// Outcome of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `‖a − n‖ / (‖a‖ + ‖n‖ + NORM_FLOOR)` over the whole gradient; decides `passed`.
    pub rel_error: f64,
    /// Worst per-coordinate `|a − n| / (|a| + |n| + 1e-12)`. Diagnostic only:
    /// an exactly zero gradient against roundoff-level noise scores near 1.
    pub max_rel_error: f64,
    /// Coordinate where the worst error occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub passed: bool,
}

/// Compare the analytic gradient returned by `f` against a fourth-order
/// central difference `(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h`.
///
/// Passes when the relative error of the whole gradient vector is below
/// `tolerance`; the worst coordinate is reported alongside.
pub fn finite_diff_check<F>(mut f: F, params: &[f64], step: f64, tolerance: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(params);
    assert_eq!(analytic.len(), params.len(), "gradient length");
    let mut probe = params.to_vec();
    let mut eval = |probe: &mut Vec<f64>, i: usize, offset: f64| {
        probe[i] = params[i] + offset;
        let v = f(probe).0;
        probe[i] = params[i];
        v
    };

    let mut report = GradCheckReport {
        rel_error: 0.0,
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        passed: true,
    };
    let (mut diff_sq, mut a_sq, mut n_sq) = (0.0, 0.0, 0.0);
    for i in 0..params.len() {
        let fp2 = eval(&mut probe, i, 2.0 * step);
        let fp1 = eval(&mut probe, i, step);
        let fm1 = eval(&mut probe, i, -step);
        let fm2 = eval(&mut probe, i, -2.0 * step);
        let numeric = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * step);
        let a = analytic[i];
        diff_sq += (a - numeric) * (a - numeric);
        a_sq += a * a;
        n_sq += numeric * numeric;
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
        if !(rel <= report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = i;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    report.rel_error = diff_sq.sqrt() / (a_sq.sqrt() + n_sq.sqrt() + NORM_FLOOR);
    report.passed = report.rel_error < tolerance;
    report
}
