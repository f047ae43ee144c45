//! Average-linkage dendrograms, cophenetic correlation and k-medoids.

use serde::{Deserialize, Serialize};

/// One agglomeration step. Leaves are `0..n`; the cluster created by merge
/// `k` has id `n + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Leaves under `node` in left-to-right order.
    pub fn leaves(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            if v < self.n {
                out.push(v);
            } else {
                let m = &self.merges[v - self.n];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
        out
    }

    pub fn root(&self) -> usize {
        if self.merges.is_empty() {
            0
        } else {
            self.n + self.merges.len() - 1
        }
    }

    pub fn size(&self, node: usize) -> usize {
        if node < self.n {
            1
        } else {
            self.merges[node - self.n].size
        }
    }

    pub fn height(&self, node: usize) -> f64 {
        if node < self.n {
            0.0
        } else {
            self.merges[node - self.n].height
        }
    }

    /// Cophenetic distance matrix, row-major `n × n`.
    pub fn cophenetic(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for m in &self.merges {
            let a = self.leaves(m.left);
            let b = self.leaves(m.right);
            for &i in &a {
                for &j in &b {
                    out[i * n + j] = m.height;
                    out[j * n + i] = m.height;
                }
            }
        }
        out
    }
}

/// UPGMA on a row-major distance matrix. The closest pair of active
/// clusters merges first; ties go to the pair with the lowest ids.
pub fn average_linkage(dist: &[f64], n: usize) -> Dendrogram {
    assert_eq!(dist.len(), n * n);
    let mut d: Vec<Vec<f64>> = (0..n).map(|i| dist[i * n..(i + 1) * n].to_vec()).collect();
    let mut ids: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1usize; n];
    let mut active: Vec<bool> = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..n {
            if !active[a] {
                continue;
            }
            for b in a + 1..n {
                if !active[b] {
                    continue;
                }
                let (lo, hi) = (ids[a].min(ids[b]), ids[a].max(ids[b]));
                let better = match best {
                    None => true,
                    Some((bd, blo, bhi, _, _)) => {
                        d[a][b] < bd || (d[a][b] == bd && (lo, hi) < (blo, bhi))
                    }
                };
                if better {
                    best = Some((d[a][b], lo, hi, a, b));
                }
            }
        }
        let (h, _, _, a, b) = best.expect("at least two active clusters");
        let (left, right) = if ids[a] < ids[b] { (ids[a], ids[b]) } else { (ids[b], ids[a]) };
        let size = sizes[a] + sizes[b];
        for c in 0..n {
            if active[c] && c != a && c != b {
                let v = (sizes[a] as f64 * d[a][c] + sizes[b] as f64 * d[b][c]) / size as f64;
                d[a][c] = v;
                d[c][a] = v;
            }
        }
        active[b] = false;
        sizes[a] = size;
        ids[a] = n + step;
        merges.push(Merge { left, right, height: h, size });
    }
    Dendrogram { n, merges }
}

/// Pearson correlation between original and cophenetic distances over all
/// pairs `i < j`. `None` when either side has zero variance.
pub fn cophenetic_correlation(dist: &[f64], n: usize, tree: &Dendrogram) -> Option<f64> {
    let coph = tree.cophenetic();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            x.push(dist[i * n + j]);
            y.push(coph[i * n + j]);
        }
    }
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(&y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let scale = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().max(f64::MIN_POSITIVE);
    if sxx <= 1e-24 * scale(&x) || syy <= 1e-24 * scale(&y) {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Sorted distance row of every point. Used to break exact cost ties in a
/// way that does not depend on point order.
fn fingerprints(dist: &[f64], n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut row = dist[i * n..(i + 1) * n].to_vec();
            row.sort_by(f64::total_cmp);
            row
        })
        .collect()
}

fn fp_less(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()) == Some(std::cmp::Ordering::Less)
}

fn assign(dist: &[f64], n: usize, medoids: &[usize], fp: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut labels = vec![0; n];
    let mut cost = 0.0;
    for i in 0..n {
        let mut best = 0;
        for (k, &m) in medoids.iter().enumerate() {
            let (d, bd) = (dist[i * n + m], dist[i * n + medoids[best]]);
            if d < bd || (d == bd && fp_less(&fp[m], &fp[medoids[best]])) {
                best = k;
            }
        }
        labels[i] = best;
        cost += dist[i * n + medoids[best]];
    }
    (labels, cost)
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

/// PAM: greedy build followed by best-improvement swaps. Cost ties are
/// resolved by the points' sorted distance rows, so the chosen medoid set
/// is equivariant under relabelling of the points.
pub fn k_medoids(dist: &[f64], n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n).max(1);
    let fp = fingerprints(dist, n);
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    while medoids.len() < k {
        let mut best: Option<(f64, usize)> = None;
        for c in 0..n {
            if medoids.contains(&c) {
                continue;
            }
            let mut trial = medoids.clone();
            trial.push(c);
            let (_, cost) = assign(dist, n, &trial, &fp);
            let better = match best {
                None => true,
                Some((b, bc)) => {
                    if tied(cost, b) {
                        fp_less(&fp[c], &fp[bc])
                    } else {
                        cost < b
                    }
                }
            };
            if better {
                best = Some((cost, c));
            }
        }
        medoids.push(best.unwrap().1);
    }
    let (_, mut cost) = assign(dist, n, &medoids, &fp);
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for slot in 0..k {
            for c in 0..n {
                if medoids.contains(&c) {
                    continue;
                }
                let mut trial = medoids.clone();
                trial[slot] = c;
                let (_, tc) = assign(dist, n, &trial, &fp);
                if tc >= cost - 1e-12 * (1.0 + cost) {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((b, bs, bc)) => {
                        if tied(tc, b) {
                            let key = |s: usize, c: usize| (&fp[medoids[s]], &fp[c]);
                            let (m1, c1) = key(slot, c);
                            let (m2, c2) = key(bs, bc);
                            fp_less(c1, c2) || (c1 == c2 && fp_less(m1, m2))
                        } else {
                            tc < b
                        }
                    }
                };
                if better {
                    best = Some((tc, slot, c));
                }
            }
        }
        match best {
            Some((tc, slot, c)) => {
                medoids[slot] = c;
                cost = tc;
            }
            None => break,
        }
    }
    medoids
}

/// Cluster label of every point for the given medoids.
pub fn labels_for(dist: &[f64], n: usize, medoids: &[usize]) -> Vec<usize> {
    assign(dist, n, medoids, &fingerprints(dist, n)).0
}

/// Mean silhouette width; singleton clusters contribute zero.
pub fn silhouette(dist: &[f64], n: usize, labels: &[usize], k: usize) -> f64 {
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        if counts[labels[i]] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += dist[i * n + j];
            }
        }
        let a = sums[labels[i]] / (counts[labels[i]] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i] && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if !b.is_finite() {
            continue;
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// Best mean silhouette over `k` in `2..=6` (capped at `n - 1`) and the `k`
/// attaining it; smaller `k` wins ties.
pub fn best_silhouette(dist: &[f64], n: usize) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 2);
    for k in 2..=6.min(n - 1) {
        let medoids = k_medoids(dist, n, k);
        let labels = labels_for(dist, n, &medoids);
        let s = silhouette(dist, n, &labels, k);
        if s > best.0 + 1e-12 {
            best = (s, k);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> Vec<f64> {
        let n = points.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = (points[i] - points[j]).abs();
            }
        }
        d
    }

    #[test]
    fn upgma_heights_by_hand() {
        // points 0, 1, 5: merge {0,1} at 1, then with 5 at (5 + 4) / 2
        let d = line(&[0.0, 1.0, 5.0]);
        let t = average_linkage(&d, 3);
        assert_eq!(t.merges[0], Merge { left: 0, right: 1, height: 1.0, size: 2 });
        assert_eq!(t.merges[1], Merge { left: 2, right: 3, height: 4.5, size: 3 });
        assert_eq!(t.leaves(t.root()), vec![2, 0, 1]);
    }

    #[test]
    fn ultrametric_has_unit_cophenetic_correlation() {
        let d = line(&[0.0, 0.1, 10.0, 10.1]);
        let t = average_linkage(&d, 4);
        let c = cophenetic_correlation(&d, 4, &t).unwrap();
        assert!(c > 0.99);
    }

    #[test]
    fn equal_distances_leave_cophenetic_undefined() {
        let n = 4;
        let d: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { 1.0 }).collect();
        let t = average_linkage(&d, n);
        assert!(cophenetic_correlation(&d, n, &t).is_none());
    }

    #[test]
    fn medoids_split_two_groups() {
        let d = line(&[0.0, 0.2, 0.1, 9.0, 9.3, 9.1]);
        let m = k_medoids(&d, 6, 2);
        let labels = labels_for(&d, 6, &m);
        assert_eq!(labels[0], labels[1]);
        assert_eq!(labels[0], labels[2]);
        assert_ne!(labels[0], labels[3]);
        let (s, k) = best_silhouette(&d, 6);
        assert_eq!(k, 2);
        assert!(s > 0.9);
    }
}
