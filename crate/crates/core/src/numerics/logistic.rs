use nalgebra::{DMatrix, DVector};

use super::linalg::{independent_columns, DesignMatrix};
use crate::error::{Error, Result};

/// Fitted probabilities are kept inside `[PROBABILITY_FLOOR, 1 - PROBABILITY_FLOOR]`.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

const TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 100;
const SEPARATION_COEFFICIENT: f64 = 15.0;
const PINNED_ITERATIONS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticFit {
    /// One entry per design column; columns dropped as collinear carry 0.
    pub coefficients: Vec<f64>,
    pub fitted_probabilities: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub separation_flag: bool,
    pub log_likelihood: f64,
    /// Design columns that entered the fit.
    pub kept_columns: Vec<usize>,
    /// Max-norm of the mean score at the returned coefficients.
    pub gradient_max_norm: f64,
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            // log(1 + exp(e)) computed stably
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            yi * e - softplus
        })
        .sum()
}

/// Logistic regression by Newton-Raphson (IRLS) with step-halving.
///
/// Collinear and all-zero design columns are dropped before fitting, so only
/// the rank of the design is bounded by the number of rows. The fit
/// stops when the largest coefficient update falls below 1e-8, or flags
/// separation when a coefficient exceeds 15 in absolute value or some
/// probability stays pinned at the floor for three consecutive iterations.
pub fn logistic_irls(design: &DesignMatrix, labels: &[bool]) -> Result<LogisticFit> {
    let n = design.rows();
    if labels.len() != n {
        return Err(Error::invalid("label count does not match design rows"));
    }
    if n == 0 {
        return Err(Error::invalid("logistic regression needs at least one row"));
    }
    let ones = labels.iter().filter(|&&l| l).count();
    if ones == 0 || ones == n {
        return Err(Error::DegenerateLabels);
    }
    let kept = independent_columns(design);
    let x = design.select_columns(&kept).to_matrix();
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let k = kept.len();

    let mut beta = DVector::zeros(k);
    let mut ll = log_likelihood(&x, &y, &beta);
    let mut converged = false;
    let mut separation = false;
    let mut pinned_streak = 0;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let eta = &x * &beta;
        let p: Vec<f64> = eta.iter().map(|&e| sigmoid(e).clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)).collect();
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        for i in 0..n {
            let row = x.row(i);
            let r = y[i] - p[i];
            let w = p[i] * (1.0 - p[i]);
            for a in 0..k {
                grad[a] += row[a] * r;
                let wa = w * row[a];
                for b in 0..=a {
                    hess[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => {
                // Hessian collapses when probabilities pin at the bounds.
                separation = true;
                break;
            }
        };
        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_ll = log_likelihood(&x, &y, &candidate);
        while cand_ll < ll && scale > 1e-10 {
            scale *= 0.5;
            candidate = &beta + &step * scale;
            cand_ll = log_likelihood(&x, &y, &candidate);
        }
        let max_update = (&step * scale).amax();
        if cand_ll >= ll {
            beta = candidate;
            ll = cand_ll;
        }

        let eta = &x * &beta;
        let pinned = eta.iter().any(|&e| {
            let p = sigmoid(e);
            p <= PROBABILITY_FLOOR || p >= 1.0 - PROBABILITY_FLOOR
        });
        pinned_streak = if pinned { pinned_streak + 1 } else { 0 };

        if max_update < TOLERANCE {
            converged = true;
            break;
        }
        if beta.iter().any(|b| b.abs() > SEPARATION_COEFFICIENT) || pinned_streak >= PINNED_ITERATIONS {
            separation = true;
            break;
        }
    }
    if !converged && !separation {
        return Err(Error::NotConverged { iterations });
    }

    let eta = &x * &beta;
    let fitted: Vec<f64> = eta.iter().map(|&e| sigmoid(e).clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)).collect();
    let mut gradient = DVector::zeros(k);
    for i in 0..n {
        gradient += x.row(i).transpose() * (y[i] - fitted[i]);
    }
    let gradient_max_norm = if k == 0 { 0.0 } else { gradient.amax() / n as f64 };
    let mut coefficients = vec![0.0; design.cols()];
    for (slot, &j) in kept.iter().enumerate() {
        coefficients[j] = beta[slot];
    }
    Ok(LogisticFit {
        coefficients,
        fitted_probabilities: fitted,
        iterations,
        converged: converged && !separation,
        separation_flag: separation,
        log_likelihood: ll,
        kept_columns: kept,
        gradient_max_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn intercept(n: usize) -> DesignMatrix {
        DesignMatrix::from_rows(&vec![vec![1.0]; n], None).unwrap()
    }

    #[test]
    fn intercept_only_recovers_logit_of_share() {
        let labels: Vec<bool> = (0..10).map(|i| i < 6).collect();
        let fit = logistic_irls(&intercept(10), &labels).unwrap();
        assert!(fit.converged);
        assert!(!fit.separation_flag);
        assert_abs_diff_eq!(fit.coefficients[0], (0.6f64 / 0.4).ln(), epsilon = 1e-9);
        assert!(fit.gradient_max_norm <= 1e-8);
    }

    #[test]
    fn complete_separation_is_flagged() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, if i < 10 { 1.0 } else { 0.0 }]).collect();
        let labels: Vec<bool> = (0..20).map(|i| i < 10).collect();
        let fit = logistic_irls(&DesignMatrix::from_rows(&rows, None).unwrap(), &labels).unwrap();
        assert!(fit.separation_flag);
        assert!(!fit.converged);
        assert!(fit.fitted_probabilities.iter().all(|&p| (PROBABILITY_FLOOR..=1.0 - PROBABILITY_FLOOR).contains(&p)));
    }

    #[test]
    fn degenerate_labels() {
        assert!(matches!(logistic_irls(&intercept(4), &[true; 4]), Err(Error::DegenerateLabels)));
        assert!(matches!(logistic_irls(&intercept(4), &[false; 4]), Err(Error::DegenerateLabels)));
    }

    #[test]
    fn collinear_columns_are_dropped() {
        let rows: Vec<Vec<f64>> = (0..10).map(|_| vec![1.0, 2.0, 0.0]).collect();
        let labels: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let fit = logistic_irls(&DesignMatrix::from_rows(&rows, None).unwrap(), &labels).unwrap();
        assert_eq!(fit.kept_columns, vec![0]);
        assert_eq!(fit.coefficients[1], 0.0);
        assert_abs_diff_eq!(fit.coefficients[0], 0.0, epsilon = 1e-9);
    }
}
