//! Least-squares quadratic fit of toll revenue against annual flow.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::CbaError;

/// `revenue = c0 + c1 * flow + c2 * flow^2`, clamped at zero when evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quadratic {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Quadratic {
    pub fn raw(&self, x: f64) -> f64 {
        self.c0 + x * (self.c1 + x * self.c2)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.raw(x).max(0.0)
    }
}

/// Fits a quadratic to `(flow, revenue)` pairs. Flows are rescaled before
/// solving so that vehicle counts in the tens of millions stay well
/// conditioned.
pub fn fit_revenue_curve(history: &[(f64, f64)]) -> Result<Quadratic, CbaError> {
    let mut distinct: Vec<f64> = history.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 || history.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(CbaError::DegenerateFit {
            distinct_flows: distinct.len(),
        });
    }
    let scale = distinct.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let n = history.len();
    let a = DMatrix::from_fn(n, 3, |i, j| (history[i].0 / scale).powi(j as i32));
    let b = DVector::from_iterator(n, history.iter().map(|p| p.1));
    let svd = a.svd(true, true);
    if svd.rank(1e-12 * svd.singular_values.max()) < 3 {
        return Err(CbaError::DegenerateFit {
            distinct_flows: distinct.len(),
        });
    }
    let c = svd
        .solve(&b, 0.0)
        .map_err(|_| CbaError::DegenerateFit {
            distinct_flows: distinct.len(),
        })?;
    Ok(Quadratic {
        c0: c[0],
        c1: c[1] / scale,
        c2: c[2] / (scale * scale),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_quadratic() {
        let truth = Quadratic {
            c0: -12_951.6,
            c1: 3.3856e-3,
            c2: -6.632e-12,
        };
        let pts: Vec<(f64, f64)> = (0..10)
            .map(|k| {
                let x = 8.0e6 + 1.3e6 * k as f64;
                (x, truth.raw(x))
            })
            .collect();
        let q = fit_revenue_curve(&pts).unwrap();
        for (got, want) in [(q.c0, truth.c0), (q.c1, truth.c1), (q.c2, truth.c2)] {
            assert!(((got - want) / want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn two_flows_are_degenerate() {
        let pts = [(1.0, 2.0), (1.0, 2.5), (2.0, 3.0), (2.0, 3.1)];
        assert!(matches!(
            fit_revenue_curve(&pts),
            Err(CbaError::DegenerateFit { distinct_flows: 2 })
        ));
    }

    #[test]
    fn evaluation_clamps_at_zero() {
        let q = Quadratic {
            c0: -5.0,
            c1: 1.0,
            c2: 0.0,
        };
        assert_eq!(q.eval(2.0), 0.0);
        assert_eq!(q.eval(7.0), 2.0);
    }
}
