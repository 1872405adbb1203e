use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::engine::DatasetRecord;
use crate::error::{Error, Result};
use crate::genmodel::ResidualModel;

/// Linear-Gaussian residual model in normalized units:
/// `r ~ N(C [ca50_n, imep_n] + d, cov)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianResidual {
    pub c: [[f64; 2]; 2],
    pub d: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

/// Parameters per residual component (two slopes and an offset).
const PARAMS: usize = 3;

impl GaussianResidual {
    pub fn zero() -> Self {
        Self {
            c: [[0.0; 2]; 2],
            d: [0.0; 2],
            cov: [[0.0; 2]; 2],
        }
    }

    /// Least-squares fit of the mean on `[ca50_n, imep_n, 1]` and the
    /// empirical covariance of what is left.
    pub fn fit(data: &[DatasetRecord]) -> Result<Self> {
        let n = data.len();
        if n < 10 * 2 * PARAMS {
            return Err(Error::InvalidArgument(format!(
                "gaussian residual fit needs at least {} records, got {n}",
                10 * 2 * PARAMS
            )));
        }
        let x = DMatrix::from_fn(n, PARAMS, |i, k| match k {
            0 => data[i].state[0],
            1 => data[i].state[1],
            _ => 1.0,
        });
        let y = DMatrix::from_fn(n, 2, |i, k| data[i].residual[k]);
        let gram = x.transpose() * &x;
        let eig = gram.clone().symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        if !(lo > 1e-10 * hi) {
            return Err(Error::Singular(format!(
                "gaussian residual regression is rank deficient (eigenvalues {lo:.3e}..{hi:.3e})"
            )));
        }
        let beta = gram
            .cholesky()
            .ok_or_else(|| Error::Singular("gaussian residual normal equations".into()))?
            .solve(&(x.transpose() * &y));
        let res = &y - &x * &beta;
        let cov = res.transpose() * &res / n as f64;
        Ok(Self {
            c: [[beta[(0, 0)], beta[(1, 0)]], [beta[(0, 1)], beta[(1, 1)]]],
            d: [beta[(2, 0)], beta[(2, 1)]],
            cov: [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
        })
    }

    pub fn mean(&self, x: &[f64; 3]) -> [f64; 2] {
        std::array::from_fn(|r| self.c[r][0] * x[0] + self.c[r][1] * x[1] + self.d[r])
    }

    pub fn covariance(&self) -> Matrix2<f64> {
        Matrix2::new(self.cov[0][0], self.cov[0][1], self.cov[1][0], self.cov[1][1])
    }

    /// Lower Cholesky factor of the covariance (zero for a degenerate fit).
    pub fn cov_factor(&self) -> Matrix2<f64> {
        let s = self.covariance();
        let a = s[(0, 0)].max(0.0).sqrt();
        let b = if a > 0.0 { s[(1, 0)] / a } else { 0.0 };
        let c = (s[(1, 1)] - b * b).max(0.0).sqrt();
        Matrix2::new(a, 0.0, b, c)
    }
}

impl ResidualModel for GaussianResidual {
    fn residual(&self, x: &[f64; 3], w: &[f64; 2]) -> [f64; 2] {
        let m = self.mean(x);
        let l = self.cov_factor() * Vector2::new(w[0], w[1]);
        [m[0] + l[0], m[1] + l[1]]
    }
}
