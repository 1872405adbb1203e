use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{eval_basis_into, MultiIndexSet};
use crate::error::{Error, Result};
use crate::rng;

/// How the collocation density values enter the least-squares weights.
///
/// The regression minimizes `scale * ||G (v - Phi c)||^2 + ||W c||^2` with a
/// diagonal `G`; this picks the diagonal of `G' G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityWeighting {
    /// `G = diag(p(w_j))`, so `G' G` holds squared densities.
    Squared,
    /// `G' G = diag(p(w_j))`.
    Linear,
    /// `G = I`.
    Uniform,
}

/// Collocation and regularization settings for one projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PceConfig {
    /// Number of collocation points.
    pub samples: usize,
    /// Rescaling of the density weights.
    pub scale: f64,
    /// Regularization weight per total degree, lowest first.
    pub degree_weights: Vec<f64>,
    pub seed: u64,
    pub weighting: DensityWeighting,
}

impl PceConfig {
    /// First prediction step: germ `w` only (2-D), degree 3, 20 points.
    pub fn initial_step() -> Self {
        Self {
            samples: 20,
            scale: 200.0,
            degree_weights: vec![0.0, 0.3, 0.1, 0.03],
            seed: 11,
            weighting: DensityWeighting::Uniform,
        }
    }

    /// Later prediction steps: joint `(xi, w)` germ (5-D), degree 2, 45 points.
    pub fn later_step() -> Self {
        Self {
            samples: 45,
            scale: 2000.0,
            degree_weights: vec![0.0, 0.3, 0.1],
            seed: 12,
            weighting: DensityWeighting::Uniform,
        }
    }

    fn validate(&self, set: &MultiIndexSet) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidArgument(
                "PCE needs at least one collocation point".into(),
            ));
        }
        if !(self.scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "PCE scale must be positive, got {}",
                self.scale
            )));
        }
        if self.degree_weights.len() < set.degree() + 1 {
            return Err(Error::InvalidArgument(format!(
                "need {} degree weights, got {}",
                set.degree() + 1,
                self.degree_weights.len()
            )));
        }
        if self.degree_weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidArgument("degree weights must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Diagonal of the regularization matrix expanded onto the index set.
    pub fn index_weights(&self, set: &MultiIndexSet) -> Vec<f64> {
        (0..set.len())
            .map(|k| self.degree_weights[set.total_degree(k)])
            .collect()
    }

    /// Draws the seeded standard-normal collocation points (`samples x dim`).
    pub fn draw_points(&self, dim: usize) -> DMatrix<f64> {
        let mut stream = rng::stream(self.seed, rng::ids::COLLOCATION);
        let mut pts = DMatrix::zeros(self.samples, dim);
        for j in 0..self.samples {
            for i in 0..dim {
                pts[(j, i)] = rng::normal(&mut stream);
            }
        }
        pts
    }

    /// Diagonal of `G' G` at the given points.
    pub fn point_weights(&self, points: &DMatrix<f64>) -> Vec<f64> {
        let dim = points.ncols() as i32;
        let norm = (2.0 * std::f64::consts::PI).powf(-0.5 * dim as f64);
        (0..points.nrows())
            .map(|j| {
                let density = norm * (-0.5 * points.row(j).norm_squared()).exp();
                match self.weighting {
                    DensityWeighting::Squared => density * density,
                    DensityWeighting::Linear => density,
                    DensityWeighting::Uniform => 1.0,
                }
            })
            .collect()
    }
}

/// Frozen collocation design and the linear map from sampled outputs to PCE
/// coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PceProjection {
    set: MultiIndexSet,
    points: DMatrix<f64>,
    basis: DMatrix<f64>,
    operator: DMatrix<f64>,
}

fn basis_matrix(set: &MultiIndexSet, points: &DMatrix<f64>) -> DMatrix<f64> {
    let mut phi = DMatrix::zeros(points.nrows(), set.len());
    let mut row = vec![0.0; set.len()];
    let mut w = vec![0.0; set.dim()];
    for j in 0..points.nrows() {
        for i in 0..set.dim() {
            w[i] = points[(j, i)];
        }
        eval_basis_into(set, &w, &mut row);
        for k in 0..set.len() {
            phi[(j, k)] = row[k];
        }
    }
    phi
}

/// `lambda * Phi' D` with `D = diag(weights)`.
fn weighted_transpose(basis: &DMatrix<f64>, weights: &[f64], scale: f64) -> DMatrix<f64> {
    let mut t = basis.transpose();
    for (j, w) in weights.iter().enumerate() {
        t.column_mut(j).scale_mut(scale * w);
    }
    t
}

fn direct_operator(basis: &DMatrix<f64>, weights: &[f64], scale: f64, reg: &[f64]) -> Result<DMatrix<f64>> {
    let rhs = weighted_transpose(basis, weights, scale);
    let mut normal = &rhs * basis;
    for (k, r) in reg.iter().enumerate() {
        normal[(k, k)] += r * r;
    }
    let eig = normal.clone().symmetric_eigenvalues();
    let max = eig.amax();
    if !(eig.min() > 1e-12 * max) {
        return Err(Error::Singular(
            "PCE normal matrix is singular; add regularization or points".into(),
        ));
    }
    normal
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::Singular("PCE normal matrix is not positive definite".into()))
}

fn woodbury_operator(basis: &DMatrix<f64>, weights: &[f64], scale: f64, reg: &[f64]) -> Result<DMatrix<f64>> {
    if reg.iter().any(|r| *r <= 0.0) {
        return Err(Error::InvalidArgument(
            "Woodbury projection needs every regularization weight > 0".into(),
        ));
    }
    let n = basis.nrows();
    let inv_w2 = DVector::from_iterator(reg.len(), reg.iter().map(|r| 1.0 / (r * r)));
    let sqrt_d = DVector::from_iterator(n, weights.iter().map(|w| w.sqrt()));
    // S Phi (N x P) and S Phi W^-2 (N x P)
    let mut s_phi = basis.clone();
    for j in 0..n {
        s_phi.row_mut(j).scale_mut(sqrt_d[j]);
    }
    let mut s_phi_w = s_phi.clone();
    for k in 0..reg.len() {
        s_phi_w.column_mut(k).scale_mut(inv_w2[k]);
    }
    // I + lambda S Phi W^-2 Phi' S  (N x N)
    let mut inner = &s_phi_w * s_phi.transpose() * scale;
    for j in 0..n {
        inner[(j, j)] += 1.0;
    }
    let inner_inv_b = inner
        .cholesky()
        .ok_or_else(|| Error::Singular("Woodbury inner matrix".into()))?
        .solve(&s_phi_w);
    // M^-1 = W^-2 - lambda (S Phi W^-2)' (inner^-1 S Phi W^-2)
    let mut m_inv = -(s_phi_w.transpose() * inner_inv_b) * scale;
    for k in 0..reg.len() {
        m_inv[(k, k)] += inv_w2[k];
    }
    Ok(m_inv * weighted_transpose(basis, weights, scale))
}

/// Builds the projection `A = (l Phi' D Phi + W'W)^-1 l Phi' D` by direct inversion.
pub fn build_projection(set: &MultiIndexSet, cfg: &PceConfig) -> Result<PceProjection> {
    cfg.validate(set)?;
    let points = cfg.draw_points(set.dim());
    let weights = cfg.point_weights(&points);
    build_projection_from_points(set, points, &weights, cfg.scale, &cfg.index_weights(set))
}

/// Same operator as [`build_projection`] through the Woodbury identity, which
/// only factors an `N x N` matrix. Requires every regularization weight > 0.
pub fn build_projection_woodbury(set: &MultiIndexSet, cfg: &PceConfig) -> Result<PceProjection> {
    cfg.validate(set)?;
    let points = cfg.draw_points(set.dim());
    let weights = cfg.point_weights(&points);
    let basis = basis_matrix(set, &points);
    let operator = woodbury_operator(&basis, &weights, cfg.scale, &cfg.index_weights(set))?;
    Ok(PceProjection {
        set: set.clone(),
        points,
        basis,
        operator,
    })
}

/// Direct build from explicit points, point weights (diagonal of `G' G`) and
/// per-index regularization weights.
pub fn build_projection_from_points(
    set: &MultiIndexSet,
    points: DMatrix<f64>,
    point_weights: &[f64],
    scale: f64,
    index_weights: &[f64],
) -> Result<PceProjection> {
    if points.ncols() != set.dim() {
        return Err(Error::Dimension(format!(
            "points have {} columns, set dimension {}",
            points.ncols(),
            set.dim()
        )));
    }
    if point_weights.len() != points.nrows() || index_weights.len() != set.len() {
        return Err(Error::Dimension("weight vector lengths".into()));
    }
    let basis = basis_matrix(set, &points);
    let operator = direct_operator(&basis, point_weights, scale, index_weights)?;
    Ok(PceProjection {
        set: set.clone(),
        points,
        basis,
        operator,
    })
}

impl PceProjection {
    pub(crate) fn from_stored(set: MultiIndexSet, points: DMatrix<f64>, operator: DMatrix<f64>) -> Result<Self> {
        if operator.nrows() != set.len() || operator.ncols() != points.nrows() || points.ncols() != set.dim() {
            return Err(Error::Dimension("stored projection shapes".into()));
        }
        let basis = basis_matrix(&set, &points);
        Ok(Self {
            set,
            points,
            basis,
            operator,
        })
    }

    pub fn set(&self) -> &MultiIndexSet {
        &self.set
    }

    /// Collocation points, `N x dim`.
    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    /// Basis evaluated at the points, `N x P`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Projection operator, `P x N`.
    pub fn operator(&self) -> &DMatrix<f64> {
        &self.operator
    }

    pub fn samples(&self) -> usize {
        self.points.nrows()
    }

    /// First row of the operator: sampled outputs to the expectation.
    pub fn mean_row(&self) -> Vec<f64> {
        self.operator.row(0).iter().copied().collect()
    }

    pub fn project(&self, outputs: &DMatrix<f64>) -> Result<PceCoefficients> {
        if outputs.nrows() != self.samples() {
            return Err(Error::Dimension(format!(
                "{} output rows for {} collocation points",
                outputs.nrows(),
                self.samples()
            )));
        }
        Ok(PceCoefficients {
            coeffs: &self.operator * outputs,
        })
    }
}

/// Coefficients, one row per basis term and one column per output.
#[derive(Debug, Clone, PartialEq)]
pub struct PceCoefficients {
    pub coeffs: DMatrix<f64>,
}

impl PceCoefficients {
    /// Zeroth coefficient row.
    pub fn mean(&self) -> DVector<f64> {
        self.coeffs.row(0).transpose()
    }

    /// `X' X` over the non-constant rows.
    pub fn covariance(&self) -> DMatrix<f64> {
        let p = self.coeffs.nrows();
        let tail = self.coeffs.rows(1, p - 1);
        tail.transpose() * tail
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pce::eval_basis;

    fn unregularized(set: &MultiIndexSet, points: DMatrix<f64>) -> PceProjection {
        let n = points.nrows();
        build_projection_from_points(set, points, &vec![1.0; n], 1.0, &vec![0.0; set.len()]).unwrap()
    }

    #[test]
    fn recovers_affine_function_exactly() {
        let set = MultiIndexSet::new(1, 2);
        let cfg = PceConfig {
            samples: 8,
            ..PceConfig::later_step()
        };
        let pts = cfg.draw_points(1);
        let proj = unregularized(&set, pts.clone());
        let y = DMatrix::from_fn(8, 1, |j, _| 2.0 + 3.0 * pts[(j, 0)]);
        let c = proj.project(&y).unwrap();
        assert!((c.coeffs[(0, 0)] - 2.0).abs() < 1e-8);
        assert!((c.coeffs[(1, 0)] - 3.0).abs() < 1e-8);
        assert!(c.coeffs[(2, 0)].abs() < 1e-8);
    }

    #[test]
    fn projector_on_basis_columns() {
        let set = MultiIndexSet::new(2, 3);
        let pts = PceConfig {
            samples: 30,
            ..PceConfig::initial_step()
        }
        .draw_points(2);
        let proj = unregularized(&set, pts);
        for k in 0..set.len() {
            let col = proj.basis().columns(k, 1).into_owned();
            let c = proj.project(&col).unwrap();
            for q in 0..set.len() {
                let want = if q == k { 1.0 } else { 0.0 };
                assert!((c.coeffs[(q, 0)] - want).abs() < 1e-8, "k={k} q={q}");
            }
        }
    }

    #[test]
    fn heavy_regularization_on_null_data_gives_zero() {
        let set = MultiIndexSet::new(2, 3);
        let mut cfg = PceConfig::initial_step();
        cfg.degree_weights = vec![1e6; 4];
        let proj = build_projection(&set, &cfg).unwrap();
        let c = proj.project(&DMatrix::zeros(20, 2)).unwrap();
        assert!(c.coeffs.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn controller_configurations_have_expected_shapes() {
        let p0 = build_projection(&MultiIndexSet::new(2, 3), &PceConfig::initial_step()).unwrap();
        assert_eq!(p0.operator().shape(), (10, 20));
        let pi = build_projection(&MultiIndexSet::new(5, 2), &PceConfig::later_step()).unwrap();
        assert_eq!(pi.operator().shape(), (21, 45));
        // the unpenalized constant term reproduces constants exactly
        for p in [&p0, &pi] {
            let c = p.project(&DMatrix::from_element(p.samples(), 1, 0.7)).unwrap();
            assert!((c.mean()[0] - 0.7).abs() < 1e-12);
            assert!(c.covariance()[(0, 0)] < 1e-24);
        }
    }

    #[test]
    fn woodbury_matches_direct() {
        for (dim, deg, n) in [(5, 2, 10), (2, 3, 40), (5, 2, 45)] {
            let set = MultiIndexSet::new(dim, deg);
            let cfg = PceConfig {
                samples: n,
                seed: 99,
                ..PceConfig::later_step()
            };
            let mut cfg = cfg;
            cfg.degree_weights = vec![1.0, 0.3, 0.1, 0.03];
            let a = build_projection(&set, &cfg).unwrap();
            let b = build_projection_woodbury(&set, &cfg).unwrap();
            let diff = (a.operator() - b.operator()).abs().max();
            assert!(diff <= 1e-8, "dim={dim} n={n} diff={diff}");
        }
    }

    #[test]
    fn woodbury_rejects_zero_weight() {
        let set = MultiIndexSet::new(2, 1);
        let cfg = PceConfig {
            degree_weights: vec![0.0, 1.0],
            ..PceConfig::initial_step()
        };
        assert!(build_projection_woodbury(&set, &cfg).is_err());
    }

    #[test]
    fn singular_normal_matrix_is_rejected() {
        let set = MultiIndexSet::new(2, 3);
        let pts = PceConfig {
            samples: 5,
            ..PceConfig::initial_step()
        }
        .draw_points(2);
        let r = build_projection_from_points(&set, pts, &[1.0; 5], 1.0, &[0.0; 10]);
        assert!(matches!(r, Err(Error::Singular(_))));
    }

    #[test]
    fn row_mismatch_is_rejected() {
        let p = build_projection(&MultiIndexSet::new(2, 3), &PceConfig::initial_step()).unwrap();
        assert!(p.project(&DMatrix::zeros(19, 1)).is_err());
    }

    #[test]
    fn moments_of_simple_expansions() {
        let c = PceCoefficients {
            coeffs: DMatrix::from_column_slice(3, 1, &[3.0, 0.5, 0.1]),
        };
        assert_eq!(c.mean()[0], 3.0);
        assert!((c.covariance()[(0, 0)] - 0.26).abs() < 1e-15);
        // f(w) = w
        let c = PceCoefficients {
            coeffs: DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        };
        assert_eq!((c.mean()[0], c.covariance()[(0, 0)]), (0.0, 1.0));
    }

    #[test]
    fn square_of_germ_has_mean_one_and_variance_two() {
        let set = MultiIndexSet::new(1, 2);
        let pts = PceConfig {
            samples: 12,
            ..PceConfig::later_step()
        }
        .draw_points(1);
        let proj = unregularized(&set, pts.clone());
        let y = DMatrix::from_fn(12, 1, |j, _| pts[(j, 0)].powi(2));
        let c = proj.project(&y).unwrap();
        assert!((c.mean()[0] - 1.0).abs() < 1e-10);
        assert!((c.covariance()[(0, 0)] - 2.0).abs() < 1e-10);
        assert!((c.coeffs[(2, 0)] - 2f64.sqrt()).abs() < 1e-10);
        let _ = eval_basis(&set, &[0.0]).unwrap();
    }
}
