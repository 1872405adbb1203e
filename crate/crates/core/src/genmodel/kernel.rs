use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Gaussian kernel `exp(-|a-b|^2 / (2 sigma^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    bandwidth: f64,
}

impl GaussianKernel {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "kernel bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self { bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// `-1 / (2 sigma^2)`
    #[inline]
    fn gamma(&self) -> f64 {
        -0.5 / (self.bandwidth * self.bandwidth)
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        (self.gamma() * d2).exp()
    }
}

pub fn gaussian_kernel(a: &[f64], b: &[f64], k: GaussianKernel) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "kernel arguments of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(k.eval(a, b))
}

fn flatten<T: AsRef<[f64]>>(pts: &[T]) -> Result<(Vec<f64>, usize)> {
    let dim = pts.first().map(|p| p.as_ref().len()).unwrap_or(0);
    let mut flat = Vec::with_capacity(pts.len() * dim);
    for p in pts {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(Error::Dimension("sample points of unequal length".into()));
        }
        flat.extend_from_slice(p);
    }
    Ok((flat, dim))
}

/// Sum of `k(a_i, a_j)` over `i < j`.
fn within_sum(a: &[f64], dim: usize, k: GaussianKernel) -> f64 {
    let n = a.len() / dim;
    let g = k.gamma();
    let mut total = 0.0;
    for i in 0..n {
        let ai = &a[i * dim..(i + 1) * dim];
        let mut row = 0.0;
        for j in i + 1..n {
            let aj = &a[j * dim..(j + 1) * dim];
            let mut d2 = 0.0;
            for c in 0..dim {
                let d = ai[c] - aj[c];
                d2 += d * d;
            }
            row += (g * d2).exp();
        }
        total += row;
    }
    total
}

fn cross_sum(a: &[f64], b: &[f64], dim: usize, k: GaussianKernel) -> f64 {
    let g = k.gamma();
    let mut total = 0.0;
    for ai in a.chunks_exact(dim) {
        let mut row = 0.0;
        for bj in b.chunks_exact(dim) {
            let mut d2 = 0.0;
            for c in 0..dim {
                let d = ai[c] - bj[c];
                d2 += d * d;
            }
            row += (g * d2).exp();
        }
        total += row;
    }
    total
}

fn mmd2_flat(x: &[f64], y: &[f64], dim: usize, k: GaussianKernel) -> f64 {
    let n = (x.len() / dim) as f64;
    let m = (y.len() / dim) as f64;
    2.0 * within_sum(x, dim, k) / (n * (n - 1.0)) + 2.0 * within_sum(y, dim, k) / (m * (m - 1.0))
        - 2.0 * cross_sum(x, y, dim, k) / (n * m)
}

fn check_sizes(n: usize, m: usize) -> Result<()> {
    if n < 2 || m < 2 {
        return Err(Error::InvalidArgument(format!(
            "unbiased MMD needs at least 2 samples per set, got {n} and {m}"
        )));
    }
    Ok(())
}

/// Unbiased estimate of the squared MMD between the distributions behind `x`
/// and `y`:
///
/// `1/(n(n-1)) sum_{i!=j} k(x_i,x_j) + 1/(m(m-1)) sum_{i!=j} k(y_i,y_j)
///  - 2/(nm) sum_{i,j} k(x_i,y_j)`
pub fn mmd2_unbiased<T: AsRef<[f64]>>(x: &[T], y: &[T], k: GaussianKernel) -> Result<f64> {
    check_sizes(x.len(), y.len())?;
    let (xf, dx) = flatten(x)?;
    let (yf, dy) = flatten(y)?;
    if dx != dy {
        return Err(Error::Dimension(format!("sample dimensions {dx} and {dy}")));
    }
    Ok(mmd2_flat(&xf, &yf, dx, k))
}

/// [`mmd2_unbiased`] together with its gradient with respect to every point of
/// `x` (row-major, `n x dim`). `y` is treated as constant.
pub fn mmd2_unbiased_grad(x: &[f64], y: &[f64], dim: usize, k: GaussianKernel) -> Result<(f64, Vec<f64>)> {
    let (n, m) = (x.len() / dim, y.len() / dim);
    check_sizes(n, m)?;
    let inv_s2 = 1.0 / (k.bandwidth * k.bandwidth);
    let cxx = 2.0 / (n as f64 * (n as f64 - 1.0));
    let cyy = 2.0 / (m as f64 * (m as f64 - 1.0));
    let cxy = 2.0 / (n as f64 * m as f64);
    let mut grad = vec![0.0; x.len()];
    let mut sxx = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (xi, xj) = (&x[i * dim..(i + 1) * dim], &x[j * dim..(j + 1) * dim]);
            let kv = k.eval(xi, xj);
            sxx += kv;
            for c in 0..dim {
                // d k(xi,xj)/d xi = -k (xi - xj) / s^2
                let g = -cxx * kv * (xi[c] - xj[c]) * inv_s2;
                grad[i * dim + c] += g;
                grad[j * dim + c] -= g;
            }
        }
    }
    let mut sxy = 0.0;
    for i in 0..n {
        let xi = &x[i * dim..(i + 1) * dim];
        for yj in y.chunks_exact(dim) {
            let kv = k.eval(xi, yj);
            sxy += kv;
            for c in 0..dim {
                grad[i * dim + c] += cxy * kv * (xi[c] - yj[c]) * inv_s2;
            }
        }
    }
    let value = cxx * sxx + cyy * within_sum(y, dim, k) - cxy * sxy;
    Ok((value, grad))
}

/// Empirical `q`-quantile of the MMD^2 permutation null: the pooled sample is
/// reshuffled `permutations` times and split back into sets of the original
/// sizes. Each permutation uses its own seeded stream, so the result does not
/// depend on thread scheduling.
pub fn permutation_null_quantile<T: AsRef<[f64]> + Sync>(
    x: &[T],
    y: &[T],
    k: GaussianKernel,
    permutations: usize,
    q: f64,
    seed: u64,
) -> Result<f64> {
    check_sizes(x.len(), y.len())?;
    if permutations == 0 || !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument("permutation count and quantile".into()));
    }
    let (xf, dim) = flatten(x)?;
    let (yf, dy) = flatten(y)?;
    if dim != dy {
        return Err(Error::Dimension(format!("sample dimensions {dim} and {dy}")));
    }
    let pooled: Vec<&[f64]> = xf.chunks_exact(dim).chain(yf.chunks_exact(dim)).collect();
    let n = x.len();
    let mut stats: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|p| {
            let mut s = rng::stream(seed, rng::ids::PERMUTATION + p as u64);
            let mut order: Vec<usize> = (0..pooled.len()).collect();
            order.shuffle(&mut s);
            let mut a = Vec::with_capacity(n * dim);
            let mut b = Vec::with_capacity((pooled.len() - n) * dim);
            for (r, idx) in order.iter().enumerate() {
                if r < n {
                    a.extend_from_slice(pooled[*idx]);
                } else {
                    b.extend_from_slice(pooled[*idx]);
                }
            }
            mmd2_flat(&a, &b, dim, k)
        })
        .collect();
    Ok(empirical_quantile(&mut stats, q))
}

/// Linear-interpolation quantile; sorts `v` in place.
pub fn empirical_quantile(v: &mut [f64], q: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn k1() -> GaussianKernel {
        GaussianKernel::new(1.0).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(gaussian_kernel(&[0.3, 1.0], &[0.3, 1.0], k1()).unwrap(), 1.0);
        let v = gaussian_kernel(&[0.0], &[1.0], k1()).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.606531).abs() < 1e-6);
        assert_eq!(
            gaussian_kernel(&[0.1, 2.0], &[-1.0, 0.5], k1()).unwrap(),
            gaussian_kernel(&[-1.0, 0.5], &[0.1, 2.0], k1()).unwrap()
        );
        assert!(GaussianKernel::new(0.0).is_err());
        assert!(GaussianKernel::new(-1.0).is_err());
        assert!(gaussian_kernel(&[0.0], &[0.0, 1.0], k1()).is_err());
    }

    #[test]
    fn hand_computed_mmd() {
        let z = [[0.0], [0.0]];
        let o = [[1.0], [1.0]];
        assert_eq!(mmd2_unbiased(&z, &z, k1()).unwrap(), 0.0);
        let v = mmd2_unbiased(&z, &o, k1()).unwrap();
        assert!((v - 2.0 * (1.0 - (-0.5f64).exp())).abs() < 1e-12);
        assert!((v - 0.786939).abs() < 1e-6);
        assert_eq!(v, mmd2_unbiased(&o, &z, k1()).unwrap());
        assert!(mmd2_unbiased(&z[..1], &o, k1()).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let k = GaussianKernel::new(0.5).unwrap();
        let mut s = rng::stream(3, 0);
        let x = rng::normals(&mut s, 14);
        let y = rng::normals(&mut s, 10);
        let (v, g) = mmd2_unbiased_grad(&x, &y, 2, k).unwrap();
        let xs: Vec<[f64; 2]> = x.chunks(2).map(|c| [c[0], c[1]]).collect();
        let ys: Vec<[f64; 2]> = y.chunks(2).map(|c| [c[0], c[1]]).collect();
        assert!((v - mmd2_unbiased(&xs, &ys, k).unwrap()).abs() < 1e-12);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (mmd2_flat(&xp, &y, 2, k) - mmd2_flat(&xm, &y, 2, k)) / (2.0 * h);
            assert!((g[i] - fd).abs() < 1e-7 * (1.0 + fd.abs()), "{i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn gram_matrix_is_positive_semidefinite() {
        let mut s = rng::stream(8, 0);
        let pts = rng::normals(&mut s, 100);
        let k = GaussianKernel::new(0.5).unwrap();
        let g = DMatrix::from_fn(50, 50, |i, j| k.eval(&pts[2 * i..2 * i + 2], &pts[2 * j..2 * j + 2]));
        assert!(g.symmetric_eigenvalues().min() >= -1e-10);
    }

    #[test]
    fn permutation_quantile_is_deterministic() {
        let mut s = rng::stream(2, 0);
        let x: Vec<[f64; 2]> = (0..30).map(|_| [rng::normal(&mut s), rng::normal(&mut s)]).collect();
        let y: Vec<[f64; 2]> = (0..30).map(|_| [rng::normal(&mut s), rng::normal(&mut s)]).collect();
        let k = GaussianKernel::new(0.5).unwrap();
        let a = permutation_null_quantile(&x, &y, k, 50, 0.95, 4).unwrap();
        let b = permutation_null_quantile(&x, &y, k, 50, 0.95, 4).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0);
    }

    #[test]
    fn quantile_interpolates() {
        let mut v = vec![3.0, 1.0, 2.0, 4.0, 5.0];
        assert_eq!(empirical_quantile(&mut v, 0.5), 3.0);
        assert_eq!(empirical_quantile(&mut v, 0.875), 4.5);
    }
}
