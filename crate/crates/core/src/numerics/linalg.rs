use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense regression design, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    column_labels: Vec<String>,
}

impl DesignMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, column_labels: Vec<String>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::invalid(format!(
                "design has {} values, expected {rows}x{cols}",
                values.len()
            )));
        }
        if column_labels.len() != cols {
            return Err(Error::invalid("column label count does not match column count"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite design entry at row {}, column {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(DesignMatrix { rows, cols, values, column_labels })
    }

    /// Build from rows; labels default to `x0, x1, ...` when not given.
    pub fn from_rows(rows: &[Vec<f64>], column_labels: Option<Vec<String>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged design rows"));
        }
        let labels = column_labels.unwrap_or_else(|| (0..cols).map(|j| format!("x{j}")).collect());
        let values = rows.iter().flatten().copied().collect();
        DesignMatrix::new(rows.len(), cols, values, labels)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column_labels(&self) -> &[String] {
        &self.column_labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.values)
    }

    /// Keep only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.cols);
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        DesignMatrix { rows: rows.len(), cols: self.cols, values, column_labels: self.column_labels.clone() }
    }

    /// Keep only the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> DesignMatrix {
        let mut values = Vec::with_capacity(self.rows * cols.len());
        for i in 0..self.rows {
            let row = self.row(i);
            values.extend(cols.iter().map(|&j| row[j]));
        }
        let column_labels = cols.iter().map(|&j| self.column_labels[j].clone()).collect();
        DesignMatrix { rows: self.rows, cols: cols.len(), values, column_labels }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rank: usize,
    /// Always true; kept for symmetry with [`super::LogisticFit`].
    pub converged: bool,
}

impl LinearFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum()
    }
}

/// Least squares via singular value decomposition. Rank-deficient designs get
/// the minimum-norm solution.
pub fn ols(design: &DesignMatrix, response: &[f64]) -> Result<LinearFit> {
    if design.rows() == 0 {
        return Err(Error::invalid("ols needs at least one row"));
    }
    if response.len() != design.rows() {
        return Err(Error::invalid(format!(
            "response has {} entries, design has {} rows",
            response.len(),
            design.rows()
        )));
    }
    if response.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite response value"));
    }
    let x = design.to_matrix();
    let y = DVector::from_column_slice(response);
    let (coefficients, rank) = if design.cols() == 0 {
        (DVector::zeros(0), 0)
    } else {
        let svd = x.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let tol = smax * f64::EPSILON * design.rows().max(design.cols()) as f64;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        let beta = svd.solve(&y, tol.max(f64::MIN_POSITIVE)).map_err(|e| Error::invalid(e.to_string()))?;
        (beta, rank)
    };
    let fitted = &x * &coefficients;
    let residuals = (y - fitted).iter().copied().collect();
    Ok(LinearFit { coefficients: coefficients.iter().copied().collect(), residuals, rank, converged: true })
}

/// Indices of a maximal set of linearly independent columns, chosen greedily
/// in column order (Gram-Schmidt with reorthogonalisation). All-zero columns
/// are never selected.
pub fn independent_columns(design: &DesignMatrix) -> Vec<usize> {
    let n = design.rows();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for j in 0..design.cols() {
        let col: Vec<f64> = (0..n).map(|i| design.get(i, j)).collect();
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let mut v = col;
        for _ in 0..2 {
            for q in &basis {
                let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= dot * qi);
            }
        }
        let rest = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if rest > 1e-9 * norm {
            v.iter_mut().for_each(|x| *x /= rest);
            basis.push(v);
            kept.push(j);
        }
    }
    kept
}

/// Moore-Penrose inverse of a symmetric positive semi-definite matrix, with
/// the numerical rank.
pub fn pseudo_inverse_sym(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let k = m.nrows();
    if k == 0 {
        return (DMatrix::zeros(0, 0), 0);
    }
    let eig = m.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let tol = lmax * f64::EPSILON * k as f64 * 10.0;
    let mut inv = DMatrix::zeros(k, k);
    let mut rank = 0;
    for (idx, &l) in eig.eigenvalues.iter().enumerate() {
        if l > tol && l > 0.0 {
            rank += 1;
            let v = eig.eigenvectors.column(idx);
            inv += (v * v.transpose()) / l;
        }
    }
    (inv, rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn intercept_only_is_the_mean() {
        let d = DesignMatrix::from_rows(&[vec![1.0], vec![1.0]], None).unwrap();
        let fit = ols(&d, &[3.0, 5.0]).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.residuals[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.residuals[1], 1.0, epsilon = 1e-12);
        assert_eq!(fit.rank, 1);
    }

    #[test]
    fn exact_two_point_fit() {
        let d = DesignMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]], None).unwrap();
        let fit = ols(&d, &[2.0, 5.0]).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[1], 3.0, epsilon = 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn rank_deficient_gives_min_norm() {
        // Two identical columns: min-norm splits the coefficient evenly.
        let d = DesignMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]], None).unwrap();
        let fit = ols(&d, &[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(fit.rank, 1);
        assert_abs_diff_eq!(fit.coefficients[0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coefficients[1], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn non_finite_is_rejected() {
        assert!(DesignMatrix::from_rows(&[vec![f64::NAN]], None).is_err());
        let d = DesignMatrix::from_rows(&[vec![1.0]], None).unwrap();
        assert!(matches!(ols(&d, &[f64::INFINITY]), Err(Error::InvalidInput(_))));
        assert!(matches!(ols(&d, &[1.0, 2.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn independent_columns_skip_duplicates_and_zeros() {
        let d = DesignMatrix::from_rows(
            &[vec![1.0, 0.0, 2.0, 1.0], vec![1.0, 0.0, 2.0, 0.0], vec![1.0, 0.0, 2.0, 1.0]],
            None,
        )
        .unwrap();
        assert_eq!(independent_columns(&d), vec![0, 3]);
    }

    #[test]
    fn pseudo_inverse_of_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (inv, rank) = pseudo_inverse_sym(&m);
        assert_eq!(rank, 1);
        assert_abs_diff_eq!(inv[(0, 0)], 0.25, epsilon = 1e-12);
    }
}
