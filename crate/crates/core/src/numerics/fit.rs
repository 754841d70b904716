use serde::Serialize;

use super::NumericsError;

/// Least-squares line through `(log10 eps, log10 y)`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SlopeFit {
    /// `(log10 eps, log10 y)` pairs in input order.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    /// Intercept in log10 units.
    pub intercept: f64,
    /// Largest absolute residual, in decades.
    pub max_residual: f64,
}

impl SlopeFit {
    pub fn predict(&self, eps: f64) -> f64 {
        10f64.powf(self.intercept + self.slope * eps.log10())
    }
}

pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit, NumericsError> {
    if points.len() < 3 {
        return Err(NumericsError::TooFewPoints(points.len()));
    }
    let mut logs = Vec::with_capacity(points.len());
    for &(eps, y) in points {
        if !(eps > 0.0 && y > 0.0 && eps.is_finite() && y.is_finite()) {
            return Err(NumericsError::NonPositive { eps, y });
        }
        logs.push((eps.log10(), y.log10()));
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= f64::EPSILON * n {
        return Err(NumericsError::Degenerate);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = logs
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).abs())
        .fold(0.0, f64::max);
    Ok(SlopeFit {
        points: logs,
        slope,
        intercept,
        max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_law() {
        let f = fit_slope(&[(0.1, 0.1), (0.01, 0.01), (0.001, 0.001)]).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!(f.max_residual < 1e-12);
    }

    #[test]
    fn exact_square_law() {
        let f = fit_slope(&[(0.1, 0.01), (0.01, 1e-4), (0.001, 1e-6)]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn perturbed_power_law() {
        let eps = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4];
        let signs = [1.0, -1.0, -1.0, 1.0, 1.0, -1.0];
        let pts: Vec<_> = eps
            .iter()
            .zip(signs)
            .map(|(&e, s)| (e, 3.0 * f64::powf(e, 1.5) * (1.0 + 0.01 * s)))
            .collect();
        let f = fit_slope(&pts).unwrap();
        assert!((1.45..=1.55).contains(&f.slope), "{}", f.slope);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            fit_slope(&[(0.1, 0.1), (0.01, 0.0), (0.001, 1.0)]),
            Err(NumericsError::NonPositive { .. })
        ));
        assert!(matches!(
            fit_slope(&[(0.1, 0.1), (0.1, 0.2), (0.1, 0.3)]),
            Err(NumericsError::Degenerate)
        ));
        assert!(matches!(
            fit_slope(&[(0.1, 0.1), (0.01, 0.2)]),
            Err(NumericsError::TooFewPoints(2))
        ));
    }
}
