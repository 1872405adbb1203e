use super::MultiIndexSet;
use crate::error::{Error, Result};

/// Probabilists' Hermite polynomial `He_n(t) / sqrt(n!)`, orthonormal under
/// the standard normal weight.
pub fn hermite_orthonormal(n: usize, t: f64) -> f64 {
    // Orthonormal recurrence: p_{k+1} = (t p_k - sqrt(k) p_{k-1}) / sqrt(k+1)
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..n {
        let next = (t * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `table[k]` with the orthonormal polynomial of degree `k` at `t`.
fn hermite_table(t: f64, table: &mut [f64]) {
    table[0] = 1.0;
    if table.len() > 1 {
        table[1] = t;
    }
    for k in 1..table.len() - 1 {
        table[k + 1] = (t * table[k] - (k as f64).sqrt() * table[k - 1]) / ((k + 1) as f64).sqrt();
    }
}

/// Tensor-product basis `prod_i phi_{alpha_i}(w_i)` for every index of `set`.
pub fn eval_basis(set: &MultiIndexSet, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != set.dim() {
        return Err(Error::Dimension(format!(
            "basis point has length {}, set dimension is {}",
            w.len(),
            set.dim()
        )));
    }
    let mut out = vec![0.0; set.len()];
    eval_basis_into(set, w, &mut out);
    Ok(out)
}

/// Unchecked variant of [`eval_basis`] writing into `out`.
pub fn eval_basis_into(set: &MultiIndexSet, w: &[f64], out: &mut [f64]) {
    let p = set.degree() + 1;
    let mut table = vec![0.0; set.dim() * p];
    for (i, wi) in w.iter().enumerate() {
        hermite_table(*wi, &mut table[i * p..(i + 1) * p]);
    }
    for (o, alpha) in out.iter_mut().zip(set.indices()) {
        *o = alpha
            .iter()
            .enumerate()
            .map(|(i, &a)| table[i * p + a as usize])
            .product();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn low_degree_values() {
        for t in [-3.0, 0.0, 0.7, 5.0] {
            assert_eq!(hermite_orthonormal(0, t), 1.0);
        }
        assert_eq!(hermite_orthonormal(1, 2.0), 2.0);
        assert!((hermite_orthonormal(2, 0.0) + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        // He3(t) = t^3 - 3t, norm sqrt(6)
        let t = 1.3f64;
        assert!((hermite_orthonormal(3, t) - (t.powi(3) - 3.0 * t) / 6f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn basis_examples() {
        let s = MultiIndexSet::new(2, 3);
        let b = eval_basis(&s, &[0.4, -1.1]).unwrap();
        assert_eq!(b[0], 1.0);
        let b0 = eval_basis(&s, &[0.0, 0.0]).unwrap();
        let k = s.position(&[2, 0]).unwrap();
        assert!((b0[k] + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(eval_basis(&s, &[1.0]).is_err());
    }

    #[test]
    fn monte_carlo_gram_is_identity() {
        let s = MultiIndexSet::new(2, 3);
        let n = 1_000_000;
        let mut rng = rng::stream(21, 0);
        let p = s.len();
        let mut gram = vec![0.0; p * p];
        let mut b = vec![0.0; p];
        for _ in 0..n {
            let w = [rng::normal(&mut rng), rng::normal(&mut rng)];
            eval_basis_into(&s, &w, &mut b);
            for i in 0..p {
                for j in i..p {
                    gram[i * p + j] += b[i] * b[j];
                }
            }
        }
        for i in 0..p {
            for j in i..p {
                let g = gram[i * p + j] / n as f64;
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() <= 0.02, "({i},{j}) = {g}");
            }
        }
    }
}
