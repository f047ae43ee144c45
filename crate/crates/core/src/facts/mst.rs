use serde::{Deserialize, Serialize};

use crate::linalg::{CorrelationMatrix, SymmetricMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// `√(2(1 − ρ))`, clamped at zero against round-off above one.
pub fn correlation_distance(rho: f64) -> f64 {
    (2.0 * (1.0 - rho)).max(0.0).sqrt()
}

/// Row-major distance matrix of `correlation_distance`.
pub fn distance_matrix(c: &CorrelationMatrix) -> Vec<f64> {
    let n = c.dim();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[i * n + j] = correlation_distance(c.get(i, j));
            }
        }
    }
    d
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Kruskal's algorithm; edges sorted by `(weight, i, j)` with `i < j`.
pub fn mst(c: &CorrelationMatrix) -> Vec<Edge> {
    mst_of_similarity(c.as_symmetric())
}

/// Same as [`mst`] for any symmetric similarity with entries in `[-1, 1]`,
/// PSD or not.
pub fn mst_of_similarity(c: &SymmetricMatrix) -> Vec<Edge> {
    let n = c.dim();
    let mut edges: Vec<Edge> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            edges.push(Edge { i, j, weight: correlation_distance(c.get(i, j)) });
        }
    }
    edges.sort_by(|a, b| a.weight.total_cmp(&b.weight).then(a.i.cmp(&b.i)).then(a.j.cmp(&b.j)));
    let mut parent: Vec<usize> = (0..n).collect();
    let mut tree = Vec::with_capacity(n - 1);
    for e in edges {
        let (a, b) = (find(&mut parent, e.i), find(&mut parent, e.j));
        if a != b {
            parent[a.max(b)] = a.min(b);
            tree.push(e);
            if tree.len() == n - 1 {
                break;
            }
        }
    }
    tree
}

pub fn degrees(n: usize, tree: &[Edge]) -> Vec<usize> {
    let mut deg = vec![0; n];
    for e in tree {
        deg[e.i] += 1;
        deg[e.j] += 1;
    }
    deg
}

/// Exponent `α` of `P(k) ∝ k^{-α}` by least squares on log–log degree
/// frequencies over degrees `k ≥ 2`. `None` with fewer than two distinct
/// such degrees.
pub fn tail_exponent(deg: &[usize]) -> Option<f64> {
    let max = *deg.iter().max()?;
    let n = deg.len() as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 2..=max {
        let count = deg.iter().filter(|&&d| d == k).count();
        if count > 0 {
            xs.push((k as f64).ln());
            ys.push((count as f64 / n).ln());
        }
    }
    if xs.len() < 2 {
        return None;
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(-sxy / sxx)
}
