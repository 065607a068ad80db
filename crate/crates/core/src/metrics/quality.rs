use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Sample mean and unbiased covariance of equal-width rows.
pub fn fit_gaussian(rows: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let dim = rows.first().map(Vec::len).unwrap_or(0);
    if dim == 0 || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Contract(
            "feature rows must be non-empty and of equal width".into(),
        ));
    }
    if rows.len() < dim + 1 {
        return Err(Error::Contract(format!(
            "{} rows cannot fit a {dim}-dimensional covariance",
            rows.len()
        )));
    }
    let n = rows.len() as f64;
    let mut mean = DVector::zeros(dim);
    for r in rows {
        mean += DVector::from_column_slice(r);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(dim, dim);
    for r in rows {
        let d = DVector::from_column_slice(r) - &mean;
        cov += &d * d.transpose();
    }
    cov /= n - 1.0;
    Ok((mean, cov))
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussians fitted to two feature sets:
/// `|μ1-μ2|² + Tr(Σ1 + Σ2 - 2(Σ1Σ2)^½)`.
///
/// The trace of `(Σ1Σ2)^½` is taken as the sum of root eigenvalues of the
/// symmetric `Σ1^½ Σ2 Σ1^½`; negative eigenvalues are clamped to zero.
pub fn compute_frechet(real: &[Vec<f64>], generated: &[Vec<f64>]) -> Result<f64> {
    let (mu1, s1) = fit_gaussian(real)?;
    let (mu2, s2) = fit_gaussian(generated)?;
    if mu1.len() != mu2.len() {
        return Err(Error::Contract("feature widths differ".into()));
    }
    let root1 = psd_sqrt(&s1);
    let mut inner = &root1 * &s2 * &root1;
    inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    let d = (&mu1 - &mu2).norm_squared() + s1.trace() + s2.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

/// Inception-style score: per split, `exp(mean_x KL(p(y|x) || p(y)))` with
/// `p(y)` the split marginal. Returns mean and population std over splits;
/// trailing rows that do not fill a split are dropped.
pub fn compute_is(rows: &[Vec<f64>], n_splits: usize) -> Result<(f64, f64)> {
    if n_splits == 0 {
        return Err(Error::Contract("n_splits must be at least 1".into()));
    }
    let per = rows.len() / n_splits;
    if per == 0 {
        return Err(Error::Contract(format!(
            "{} rows cannot fill {n_splits} splits",
            rows.len()
        )));
    }
    let k = rows[0].len();
    for r in rows {
        let total: f64 = r.iter().sum();
        if r.len() != k || r.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!(
                "row {r:?} is not a probability vector"
            )));
        }
    }

    let scores: Vec<f64> = rows
        .chunks_exact(per)
        .take(n_splits)
        .map(|split| {
            let mut marginal = vec![0.0; k];
            for r in split {
                for (m, p) in marginal.iter_mut().zip(r) {
                    *m += p;
                }
            }
            marginal.iter_mut().for_each(|m| *m /= per as f64);
            let kl: f64 = split
                .iter()
                .map(|r| {
                    r.iter()
                        .zip(&marginal)
                        .filter(|(p, _)| **p > 0.0)
                        .map(|(p, m)| p * (p / m).ln())
                        .sum::<f64>()
                })
                .sum::<f64>()
                / per as f64;
            kl.exp()
        })
        .collect();
    let mean = scores.iter().sum::<f64>() / n_splits as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n_splits as f64;
    Ok((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frechet_one_dimensional_shift() {
        let a = vec![vec![-1.0], vec![0.0], vec![1.0]];
        let b = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!((compute_frechet(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!(compute_frechet(&a, &a).unwrap().abs() < 1e-12);
    }

    #[test]
    fn frechet_needs_enough_rows() {
        let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(matches!(compute_frechet(&a, &a), Err(Error::Contract(_))));
    }

    #[test]
    fn is_identities() {
        let uniform = vec![vec![0.1; 10]; 20];
        let (m, s) = compute_is(&uniform, 10).unwrap();
        assert!((m - 1.0).abs() < 1e-12 && s == 0.0);

        let onehot: Vec<Vec<f64>> = (0..10)
            .map(|c| (0..10).map(|k| if k == c { 1.0 } else { 0.0 }).collect())
            .collect();
        assert!((compute_is(&onehot, 1).unwrap().0 - 10.0).abs() < 1e-9);
        let two = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!((compute_is(&two, 1).unwrap().0 - 2.0).abs() < 1e-12);
        assert!(compute_is(&two, 3).is_err());
        assert!(compute_is(&[vec![0.7, 0.7]], 1).is_err());
    }
}
