//! Reference implementations written straight from the update equations,
//! sharing no code with the library.

#![allow(dead_code)]

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surplus_core::protocol::{ExplicitWeights, WeightTable};
use surplus_core::{Digraph, WeightPolicy};

pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }

    pub fn digraph(&mut self, n: usize, p: f64) -> Digraph {
        let mut edges = Vec::new();
        for j in 1..=n {
            for i in 1..=n {
                if i != j && self.unit() < p {
                    edges.push((j, i));
                }
            }
        }
        Digraph::new(n, edges).unwrap()
    }

    /// Uniform weights valid on any digraph with `n` nodes.
    pub fn uniform_policy(&mut self, n: usize) -> WeightPolicy {
        let eps = self.range(0.05, 0.95);
        let a = self.range(0.05, 0.95) / n as f64;
        let b = self.range(0.05, 0.95) * (1.0 - eps) / n as f64;
        WeightPolicy::uniform(a, b, eps)
    }

    /// Heterogeneous per-edge weights satisfying the parameter rules on `g`.
    pub fn table(&mut self, g: &Digraph) -> WeightTable {
        let n = g.n();
        let mut a = vec![vec![0.0; n]; n];
        let mut b = vec![vec![0.0; n]; n];
        let mut eps = vec![0.0; n];
        for i in 1..=n {
            eps[i - 1] = self.range(0.01, 0.99);
            let ins = g.in_neighbors(i).unwrap();
            for &j in ins {
                a[i - 1][j - 1] = self.range(0.01, 0.99) / (ins.len() + 1) as f64;
            }
            let outs = g.out_neighbors(i).unwrap();
            for &h in outs {
                b[i - 1][h - 1] =
                    self.range(0.01, 0.99) * (1.0 - eps[i - 1]) / (outs.len() + 1) as f64;
            }
        }
        WeightTable { a, b, eps }
    }

    pub fn vector(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| self.range(lo, hi)).collect()
    }
}

pub fn explicit(t: WeightTable) -> WeightPolicy {
    WeightPolicy::Explicit(ExplicitWeights::Constant(t))
}

/// Dense weights `(a, b, eps)` with zeros off the edge set.
pub fn dense(g: &Digraph, t: &WeightTable) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
    let n = g.n();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if g.has_edge(j + 1, i + 1) {
                a[i][j] = t.a[i][j];
            }
            if g.has_edge(i + 1, j + 1) {
                b[i][j] = t.b[i][j];
            }
        }
    }
    (a, b, t.eps.clone())
}

/// One round straight from the agent update rules.
pub fn agent_step(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    eps: &[f64],
    x: &[f64],
    s: &[f64],
    switching: bool,
) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut xn = vec![0.0; n];
    let mut sn = vec![0.0; n];
    for i in 0..n {
        let mut term = 0.0;
        for j in 0..n {
            term += a[i][j] * (x[j] - x[i]);
        }
        let c = if !switching || term <= 0.0 { 1.0 } else { 0.0 };
        xn[i] = x[i] + c * term + eps[i] * s[i];
        let sent: f64 = b[i].iter().sum();
        let got: f64 = (0..n).map(|j| b[j][i] * s[j]).sum();
        sn[i] = (1.0 - sent) * s[i] + got - (xn[i] - x[i]);
    }
    (xn, sn)
}

/// `M` as nested vectors, from the block formulas.
pub fn block_matrix(a: &[Vec<f64>], b: &[Vec<f64>], eps: &[f64], c: &[bool]) -> Vec<Vec<f64>> {
    let n = eps.len();
    let mut m = vec![vec![0.0; 2 * n]; 2 * n];
    for i in 0..n {
        let ci = if c[i] { 1.0 } else { 0.0 };
        let deg: f64 = a[i].iter().sum::<f64>() * ci;
        let sent: f64 = b[i].iter().sum();
        for j in 0..n {
            let l = if i == j {
                deg - ci * a[i][j]
            } else {
                -ci * a[i][j]
            };
            let id = if i == j { 1.0 } else { 0.0 };
            m[i][j] = id - l;
            m[n + i][j] = l;
            // surplus flows from j to i with share b_ji
            let s = if i == j { 1.0 - sent } else { b[j][i] };
            let e = if i == j { eps[i] } else { 0.0 };
            m[i][n + j] = e;
            m[n + i][n + j] = s - e;
        }
    }
    m
}

pub fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Transitive closure by Floyd–Warshall; `r[i][j]` means `i` reaches `j`.
pub fn closure(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Vec<Vec<bool>> {
    let mut r = vec![vec![false; n]; n];
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = true;
    }
    for (j, i) in edges {
        r[j - 1][i - 1] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if r[i][k] && r[k][j] {
                    r[i][j] = true;
                }
            }
        }
    }
    r
}

/// Strong components by mutual reachability, in the library's ordering.
pub fn brute_components(g: &Digraph) -> Vec<Vec<usize>> {
    let n = g.n();
    let r = closure(n, g.edges());
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let comp: Vec<usize> = (0..n).filter(|&j| r[i][j] && r[j][i]).collect();
        for &j in &comp {
            seen[j] = true;
        }
        out.push(comp.into_iter().map(|j| j + 1).collect());
    }
    out
}

pub fn brute_strongly_connected(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> bool {
    closure(n, edges).iter().all(|row| row.iter().all(|&v| v))
}
