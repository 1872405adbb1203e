use serde::{Deserialize, Serialize};

/// All exponent tuples of total degree `<= degree`, graded-lexicographic:
/// ascending total degree, and within a degree descending lexicographic order
/// (`(2,0), (1,1), (0,2)`). The all-zeros tuple is always first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiIndexSet {
    dim: usize,
    degree: usize,
    indices: Vec<Vec<u32>>,
}

fn push_with_sum(dim: usize, sum: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == dim {
        prefix.push(sum as u32);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=sum).rev() {
        prefix.push(first as u32);
        push_with_sum(dim, sum - first, prefix, out);
        prefix.pop();
    }
}

impl MultiIndexSet {
    /// # Panics
    /// When `dim == 0`.
    pub fn new(dim: usize, degree: usize) -> Self {
        assert!(dim >= 1, "multi-index dimension must be positive");
        let mut indices = Vec::with_capacity(binomial(dim + degree, dim));
        let mut prefix = Vec::with_capacity(dim);
        for d in 0..=degree {
            push_with_sum(dim, d, &mut prefix, &mut indices);
        }
        Self { dim, degree, indices }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[Vec<u32>] {
        &self.indices
    }

    pub fn total_degree(&self, k: usize) -> usize {
        self.indices[k].iter().map(|&a| a as usize).sum()
    }

    pub fn position(&self, alpha: &[u32]) -> Option<usize> {
        self.indices.iter().position(|a| a == alpha)
    }

    pub(crate) fn from_parts(dim: usize, degree: usize, indices: Vec<Vec<u32>>) -> Option<Self> {
        let set = Self::new(dim, degree);
        (set.indices == indices).then_some(set)
    }
}

/// `n choose k` for small arguments.
pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_used_by_the_controller() {
        assert_eq!(MultiIndexSet::new(2, 3).len(), 10);
        assert_eq!(MultiIndexSet::new(5, 2).len(), 21);
        assert_eq!(MultiIndexSet::new(3, 0).len(), 1);
    }

    #[test]
    fn count_law_matches_binomial() {
        for n in 1..=6 {
            for p in 0..=4 {
                let f = |m: usize| (1..=m).product::<usize>();
                let expected = f(n + p) / (f(n) * f(p));
                assert_eq!(MultiIndexSet::new(n, p).len(), expected, "n={n} p={p}");
                assert_eq!(binomial(n + p, n), expected);
            }
        }
    }

    #[test]
    fn graded_lex_order() {
        let s = MultiIndexSet::new(2, 2);
        let want: Vec<Vec<u32>> = vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]];
        assert_eq!(s.indices(), want.as_slice());
        for k in 1..s.len() {
            assert!(s.total_degree(k) >= s.total_degree(k - 1));
        }
    }
}
