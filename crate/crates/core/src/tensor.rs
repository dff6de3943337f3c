//! Symmetric tensors indexed by multisets.

use serde::{Deserialize, Serialize};

/// All multisets of size `n` over `{0..d}`, as sorted index lists in lexicographic order.
pub fn multisets(d: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(d: usize, n: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for j in start..d {
            cur.push(j);
            rec(d, n, j, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, n, 0, &mut Vec::with_capacity(n), &mut out);
    out
}

/// All ordered tuples of length `n` over `{0..d}`.
pub fn tuples(d: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..d).map(move |j| {
                    let mut s = t.clone();
                    s.push(j);
                    s
                })
            })
            .collect();
    }
    out
}

/// Position of a multiset (any order) in the list returned by [`multisets`].
pub fn multiset_index(d: usize, idx: &[usize]) -> usize {
    let mut s = idx.to_vec();
    s.sort_unstable();
    // Count multisets that precede `s` lexicographically.
    let n = s.len();
    let mut pos = 0;
    let mut lo = 0;
    for (k, &v) in s.iter().enumerate() {
        let rest = n - k - 1;
        for j in lo..v {
            pos += binomial(rest + d - j - 1, rest);
        }
        lo = v;
    }
    pos
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r = 1usize;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Number of distinct orderings of a multiset.
pub fn multiplicity(d: usize, idx: &[usize]) -> f64 {
    let mut counts = vec![0usize; d];
    for &j in idx {
        counts[j] += 1;
    }
    factorial(idx.len()) / counts.iter().map(|&c| factorial(c)).product::<f64>()
}

/// All permutations of `0..n` (n is small: at most six here).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, used: &mut Vec<bool>, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(n, used, cur, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(n, &mut vec![false; n], &mut Vec::new(), &mut out);
    out
}

/// A fully symmetric tensor stored once per multiset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymTensor {
    pub order: usize,
    pub d: usize,
    pub comps: Vec<f64>,
}

impl SymTensor {
    pub fn zeros(order: usize, d: usize) -> Self {
        SymTensor { order, d, comps: vec![0.0; binomial(order + d - 1, order)] }
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.comps[multiset_index(self.d, idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let i = multiset_index(self.d, idx);
        self.comps[i] = v;
    }

    /// Frobenius norm of the full (unsymmetrized) tensor.
    pub fn norm(&self) -> f64 {
        multisets(self.d, self.order)
            .iter()
            .map(|k| multiplicity(self.d, k) * self.get(k).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Full contraction with `ξ^{⊗order}`.
    pub fn contract(&self, xi: [f64; 2]) -> f64 {
        multisets(self.d, self.order)
            .iter()
            .map(|k| multiplicity(self.d, k) * self.get(k) * k.iter().map(|&j| xi[j]).product::<f64>())
            .sum()
    }
}
