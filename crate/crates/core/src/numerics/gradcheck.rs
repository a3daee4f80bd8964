use super::NumericsError;

/// Central-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

/// Central finite-difference gradient of `f` at `at`.
pub fn numeric_gradient(
    f: impl Fn(&[f64]) -> f64,
    at: &[f64],
    h: f64,
) -> Result<Vec<f64>, NumericsError> {
    let mut x = at.to_vec();
    let mut out = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let orig = x[i];
        x[i] = orig + h;
        let fp = f(&x);
        x[i] = orig - h;
        let fm = f(&x);
        x[i] = orig;
        if !(fp.is_finite() && fm.is_finite()) {
            return Err(NumericsError::NonFinite("objective during gradient check"));
        }
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// Largest relative disagreement between `analytic` and central differences
/// of `f` at `at`, each term divided by `max(1, |analytic|, |numeric|)`.
pub fn grad_check(
    f: impl Fn(&[f64]) -> f64,
    analytic: &[f64],
    at: &[f64],
) -> Result<f64, NumericsError> {
    if analytic.len() != at.len() {
        return Err(NumericsError::Shape(format!(
            "{} analytic components for {} parameters",
            analytic.len(),
            at.len()
        )));
    }
    let numeric = numeric_gradient(f, at, FD_STEP)?;
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / 1f64.max(a.abs()).max(n.abs()))
        .fold(0.0, f64::max))
}
