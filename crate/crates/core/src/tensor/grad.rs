use crate::error::{Error, Result};

/// Central-difference gradient `(f(x+εe_i) − f(x−εe_i)) / 2ε` of a scalar function.
pub fn numeric_gradient<F>(f: F, x: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::invalid(format!("finite-difference step {eps} must be positive")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let plus = f(&probe);
        probe[i] = x[i] - eps;
        let minus = f(&probe);
        probe[i] = x[i];
        for v in [plus, minus] {
            if !v.is_finite() {
                return Err(Error::NonFinite { coordinate: i, value: v });
            }
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}
