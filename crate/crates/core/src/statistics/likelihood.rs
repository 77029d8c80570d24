// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::diffcore::Tensor;
use crate::encoders::EncoderModel;
use crate::error::{Error, Result};
use crate::specnorm::{invert_hidden, InversionStats};

pub(crate) fn to_matrix(t: &Tensor) -> Result<DMatrix<f64>> {
    if t.ndim() != 2 {
        return Err(Error::dim(format!(
            "expected a matrix, got shape {:?}",
            t.shape()
        )));
    }
    Ok(DMatrix::from_row_slice(
        t.shape()[0],
        t.shape()[1],
        t.data(),
    ))
}

pub(crate) fn from_matrix(m: &DMatrix<f64>) -> Tensor {
    let rows = m.nrows();
    let data: Vec<f64> = (0..rows)
        .flat_map(|r| m.row(r).iter().copied().collect::<Vec<_>>())
        .collect();
    Tensor::new(vec![rows, m.ncols()], data).expect("nonempty matrix")
}

fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let sym = (m - m.transpose()).abs().max();
    if sym > 1e-10 * m.abs().max().max(1.0) {
        return Err(Error::Decomposition(format!("{what} is not symmetric")));
    }
    Cholesky::new(m.clone())
        .ok_or_else(|| Error::Decomposition(format!("{what} is not positive definite")))
}

/// `X ~ MN(M, U, V)` with `t x t` row covariance `U` and `D x D` column
/// covariance `V`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixNormalParams {
    pub mean: DMatrix<f64>,
    pub row_cov: DMatrix<f64>,
    pub col_cov: DMatrix<f64>,
}

impl MatrixNormalParams {
    pub fn new(mean: DMatrix<f64>, row_cov: DMatrix<f64>, col_cov: DMatrix<f64>) -> Result<Self> {
        let (t, d) = mean.shape();
        if row_cov.shape() != (t, t) || col_cov.shape() != (d, d) {
            return Err(Error::dim(format!(
                "mean {t}x{d} needs U {t}x{t} and V {d}x{d}, got {:?} and {:?}",
                row_cov.shape(),
                col_cov.shape()
            )));
        }
        Ok(Self {
            mean,
            row_cov,
            col_cov,
        })
    }

    /// Independent unit-variance entries around `mean`.
    pub fn isotropic(mean: DMatrix<f64>) -> Self {
        let (t, d) = mean.shape();
        Self {
            mean,
            row_cov: DMatrix::identity(t, t),
            col_cov: DMatrix::identity(d, d),
        }
    }
}

/// Log-density of the matrix normal distribution at `x`, normalizing
/// constant included.
pub fn matrix_normal_logpdf(x: &Tensor, p: &MatrixNormalParams) -> Result<f64> {
    let x = to_matrix(x)?;
    if x.shape() != p.mean.shape() {
        return Err(Error::dim(format!(
            "observation {:?} does not match mean {:?}",
            x.shape(),
            p.mean.shape()
        )));
    }
    let (t, d) = x.shape();
    let cu = cholesky(&p.row_cov, "row covariance")?;
    let cv = cholesky(&p.col_cov, "column covariance")?;
    let e = x - &p.mean;
    // tr(V⁻¹ Eᵀ U⁻¹ E) = ‖L_U⁻¹ E L_V⁻ᵀ‖²_F.
    let a = cu
        .l()
        .solve_lower_triangular(&e)
        .ok_or_else(|| Error::Decomposition("singular row factor".into()))?;
    let b = cv
        .l()
        .solve_lower_triangular(&a.transpose())
        .ok_or_else(|| Error::Decomposition("singular column factor".into()))?;
    let quad = b.norm_squared();
    let logdet =
        |c: &Cholesky<f64, Dyn>| 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let (tf, df) = (t as f64, d as f64);
    Ok(-0.5 * tf * df * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * df * logdet(&cu)
        - 0.5 * tf * logdet(&cv)
        - 0.5 * quad)
}

/// `log p0(X) - log p∞(X)`.
pub fn likelihood_ratio(
    x: &Tensor,
    p0: &MatrixNormalParams,
    pinf: &MatrixNormalParams,
) -> Result<f64> {
    Ok(matrix_normal_logpdf(x, p0)? - matrix_normal_logpdf(x, pinf)?)
}

/// Raw and embedded log-likelihood ratios of one observation window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrCheck {
    pub raw_log_lr: f64,
    pub embedded_log_lr: f64,
    pub inversion: InversionStats,
}

impl LrCheck {
    pub fn abs_diff(&self) -> f64 {
        (self.raw_log_lr - self.embedded_log_lr).abs()
    }
}

/// Computes the log-LR of `x` directly and through the embedding `Y = G(x)`.
///
/// The embedded densities are the pushforwards of `p0`, `p∞` under `G`. Both
/// share the Jacobian factor of `G⁻¹`, which cancels in the ratio, so the
/// embedded log-LR is the raw log-LR evaluated at `G⁻¹(Y)`. The inverse is
/// computed numerically: fixed-point inversion of the residual stack, then
/// the inverse of the affine input map. `G` must have no output head and a
/// square input map.
pub fn lr_preservation_check(
    x: &Tensor,
    model: &EncoderModel,
    p0: &MatrixNormalParams,
    pinf: &MatrixNormalParams,
    max_iter: usize,
    tol: f64,
) -> Result<LrCheck> {
    if model.head.is_some() {
        return Err(Error::config(
            "likelihood-ratio check needs an encoder without output head",
        ));
    }
    let a = to_matrix(&model.input.weight)?;
    if !a.is_square() {
        return Err(Error::config(format!(
            "input map is {}x{}, not square",
            a.nrows(),
            a.ncols()
        )));
    }
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax.max(1e-300)) {
        return Err(Error::Decomposition(format!(
            "input map is rank deficient (singular values {smin:.3e}..{smax:.3e})"
        )));
    }
    let a_inv = a
        .try_inverse()
        .ok_or_else(|| Error::Decomposition("input map is not invertible".into()))?;

    let raw = likelihood_ratio(x, p0, pinf)?;
    let (t, d) = (x.shape()[0], x.shape()[1]);
    let y = model.encode_sequence(x)?;
    let (z, inversion) = invert_hidden(model, &y.reshape(&[1, t, d])?, max_iter, tol)?;
    let z = to_matrix(&z.reshape(&[t, d])?)?;
    let bias = DVector::from_column_slice(model.input.bias.data());
    // Rows are observations: x_row = A⁻¹ (z_row - b).
    let mut xr = z;
    for mut row in xr.row_iter_mut() {
        let centered = row.transpose() - &bias;
        row.copy_from(&(&a_inv * centered).transpose());
    }
    let embedded = likelihood_ratio(&from_matrix(&xr), p0, pinf)?;
    Ok(LrCheck {
        raw_log_lr: raw,
        embedded_log_lr: embedded,
        inversion,
    })
}

/// Gaussian fitted to embeddings, used to score how atypical a sample is.
#[derive(Clone, Debug)]
pub struct GaussianFit {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl GaussianFit {
    /// Sample mean and covariance of `rows`, with `1e-6 · tr(Σ)/d` added to
    /// the diagonal.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::contract("Gaussian fit needs at least two samples"));
        }
        let d = rows[0].len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::dim("Gaussian fit needs equal-length nonempty rows"));
        }
        let mut mean = DVector::zeros(d);
        for r in rows {
            mean += DVector::from_column_slice(r);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        for r in rows {
            let c = DVector::from_column_slice(r) - &mean;
            cov += &c * c.transpose();
        }
        cov /= (n - 1) as f64;
        let reg = 1e-6 * cov.trace() / d as f64;
        let reg = if reg > 0.0 { reg } else { 1e-12 };
        for i in 0..d {
            cov[(i, i)] += reg;
        }
        let chol = cholesky(&cov, "regularized covariance")?;
        Ok(Self {
            mean,
            covariance: cov,
            chol,
        })
    }

    pub fn score(&self, y: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(y) - &self.mean;
        let w = self
            .chol
            .l()
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        w.norm()
    }
}

/// `sqrt((y - μ)ᵀ Σ⁻¹ (y - μ))`.
pub fn mahalanobis_score(y: &[f64], mean: &[f64], covariance: &DMatrix<f64>) -> Result<f64> {
    let d = mean.len();
    if y.len() != d || covariance.shape() != (d, d) {
        return Err(Error::dim("Mahalanobis inputs disagree in dimension"));
    }
    let chol = cholesky(covariance, "covariance")?;
    let diff = DVector::from_column_slice(y) - DVector::from_column_slice(mean);
    let w = chol
        .l()
        .solve_lower_triangular(&diff)
        .ok_or_else(|| Error::Decomposition("singular covariance factor".into()))?;
    Ok(w.norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_has_unit_ratio() {
        let x = Tensor::from_rows(&[vec![0.5]]).unwrap();
        let p0 = MatrixNormalParams::isotropic(DMatrix::from_element(1, 1, 0.0));
        let pinf = MatrixNormalParams::isotropic(DMatrix::from_element(1, 1, 1.0));
        assert!(likelihood_ratio(&x, &p0, &pinf).unwrap().abs() < 1e-15);
    }

    #[test]
    fn standard_normal_logpdf() {
        let x = Tensor::from_rows(&[vec![1.0]]).unwrap();
        let p = MatrixNormalParams::isotropic(DMatrix::zeros(1, 1));
        let expect = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5;
        assert!((matrix_normal_logpdf(&x, &p).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn non_spd_rejected() {
        let p = MatrixNormalParams::new(
            DMatrix::zeros(2, 1),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let x = Tensor::zeros(&[2, 1]);
        assert!(matches!(
            matrix_normal_logpdf(&x, &p),
            Err(Error::Decomposition(_))
        ));
    }

    #[test]
    fn identity_encoder_preserves_lr_exactly() {
        let model = EncoderModel::identity(2, 3, crate::encoders::Activation::Tanh).unwrap();
        let x = Tensor::from_rows(&[vec![0.1, -0.3], vec![0.7, 0.2], vec![-1.0, 0.4]]).unwrap();
        let p0 = MatrixNormalParams::isotropic(DMatrix::from_element(3, 2, 1.0));
        let pinf = MatrixNormalParams::isotropic(DMatrix::zeros(3, 2));
        let r = lr_preservation_check(&x, &model, &p0, &pinf, 200, 1e-8).unwrap();
        assert_eq!(r.raw_log_lr, r.embedded_log_lr);
    }

    #[test]
    fn mahalanobis_basics() {
        let eye = DMatrix::identity(2, 2);
        assert_eq!(
            mahalanobis_score(&[1.0, 2.0], &[1.0, 2.0], &eye).unwrap(),
            0.0
        );
        assert!((mahalanobis_score(&[3.0, 4.0], &[0.0, 0.0], &eye).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn fit_of_constant_rows_is_regularized() {
        let rows = vec![vec![1.0, 1.0]; 5];
        let fit = GaussianFit::fit(&rows).unwrap();
        assert_eq!(fit.score(&[1.0, 1.0]), 0.0);
    }
}
