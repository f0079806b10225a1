//! Average-linkage agglomerative clustering (Euclidean) via the
//! nearest-neighbour chain algorithm, and credibility from cluster sizes.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_points(points: &[Vec<f64>]) -> Result<()> {
    let Some(first) = points.first() else {
        return Ok(());
    };
    let d = first.len();
    for p in points {
        if p.len() != d {
            return Err(Error::Dimension {
                segment: "user meta features".into(),
                expected: d,
                actual: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("user meta features".into()));
        }
    }
    Ok(())
}

/// Full average-linkage dendrogram as `n − 1` merges of point indices
/// (each merge names one representative point of either side). Merges are
/// returned in non-decreasing distance order.
pub fn average_linkage(points: &[Vec<f64>]) -> Result<Vec<Merge>> {
    check_points(points)?;
    let n = points.len();
    if n < 2 {
        return Ok(Vec::new());
    }
    // Condensed upper-triangular distance matrix.
    let idx = |i: usize, j: usize| {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * n - i * (i + 1) / 2 + (j - i - 1)
    };
    let mut dist = vec![0.0; n * (n - 1) / 2];
    for i in 0..n {
        for j in i + 1..n {
            dist[idx(i, j)] = euclidean(&points[i], &points[j]);
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n - 1);
    let mut chain: Vec<usize> = Vec::new();
    let mut remaining = n;
    while remaining > 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("remaining > 1"));
        }
        loop {
            let x = *chain.last().expect("non-empty");
            let prev = chain.len().checked_sub(2).map(|i| chain[i]);
            // Nearest active neighbour; the chain predecessor wins ties so the
            // chain terminates.
            let mut best = prev;
            let mut best_d = prev.map_or(f64::INFINITY, |p| dist[idx(x, p)]);
            for y in 0..n {
                if y != x && active[y] {
                    let d = dist[idx(x, y)];
                    if d < best_d {
                        best_d = d;
                        best = Some(y);
                    }
                }
            }
            let y = best.expect("another active cluster exists");
            if Some(y) == prev {
                chain.pop();
                chain.pop();
                let (keep, gone) = (x.min(y), x.max(y));
                merges.push(Merge {
                    a: keep,
                    b: gone,
                    distance: best_d,
                });
                let (sk, sg) = (size[keep] as f64, size[gone] as f64);
                for k in 0..n {
                    if active[k] && k != keep && k != gone {
                        dist[idx(keep, k)] = (sk * dist[idx(keep, k)] + sg * dist[idx(gone, k)]) / (sk + sg);
                    }
                }
                size[keep] += size[gone];
                active[gone] = false;
                remaining -= 1;
                break;
            }
            chain.push(y);
        }
    }
    merges.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    Ok(merges)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Cluster id per point after applying every merge at distance ≤ `cut`.
/// Ids are the smallest member index of each cluster.
pub fn cut_clusters(points: &[Vec<f64>], cut: f64) -> Result<Vec<usize>> {
    if !(cut >= 0.0) {
        return Err(Error::config("credibility.cut", format!("{cut} must be ≥ 0")));
    }
    let merges = average_linkage(points)?;
    let mut uf = UnionFind((0..points.len()).collect());
    for m in merges.iter().take_while(|m| m.distance <= cut) {
        uf.union(m.a, m.b);
    }
    Ok((0..points.len()).map(|i| uf.find(i)).collect())
}

/// `1 / |cluster(u)|` per user, in input order.
pub fn credibility_scores(points: &[Vec<f64>], cut: f64) -> Result<Vec<f64>> {
    let clusters = cut_clusters(points, cut)?;
    let mut sizes = vec![0usize; points.len()];
    for &c in &clusters {
        sizes[c] += 1;
    }
    Ok(clusters.iter().map(|&c| 1.0 / sizes[c] as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Naive agglomeration: recompute every cluster-pair average distance
    /// from the raw points and merge the closest pair until it exceeds `cut`.
    fn brute_force(points: &[Vec<f64>], cut: f64) -> Vec<Vec<usize>> {
        let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
        loop {
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..clusters.len() {
                for j in i + 1..clusters.len() {
                    let mut s = 0.0;
                    for &a in &clusters[i] {
                        for &b in &clusters[j] {
                            s += euclidean(&points[a], &points[b]);
                        }
                    }
                    let d = s / (clusters[i].len() * clusters[j].len()) as f64;
                    if best.map_or(true, |(bd, _, _)| d < bd) {
                        best = Some((d, i, j));
                    }
                }
            }
            match best {
                Some((d, i, j)) if d <= cut => {
                    let moved = clusters.remove(j);
                    clusters[i].extend(moved);
                }
                _ => break,
            }
        }
        let mut out: Vec<Vec<usize>> = clusters
            .into_iter()
            .map(|mut c| {
                c.sort();
                c
            })
            .collect();
        out.sort();
        out
    }

    fn partition(labels: &[usize]) -> Vec<Vec<usize>> {
        let mut map = std::collections::BTreeMap::<usize, Vec<usize>>::new();
        for (i, &c) in labels.iter().enumerate() {
            map.entry(c).or_default().push(i);
        }
        let mut out: Vec<Vec<usize>> = map.into_values().collect();
        out.sort();
        out
    }

    #[test]
    fn singleton_and_identical_users() {
        assert_eq!(credibility_scores(&[vec![1.0, 2.0]], 0.5).unwrap(), vec![1.0]);
        let same = vec![vec![3.0, 3.0]; 4];
        assert_eq!(credibility_scores(&same, 0.1).unwrap(), vec![0.25; 4]);
        assert!(credibility_scores(&[], 1.0).unwrap().is_empty());
    }

    #[test]
    fn two_groups_fixture_matches_brute_force() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![0.3, 0.1],
            vec![0.1, 0.4],
            vec![0.35, 0.3],
            vec![5.0, 5.0],
            vec![5.2, 4.9],
        ];
        let cut = 1.0;
        let labels = cut_clusters(&pts, cut).unwrap();
        let p = partition(&labels);
        assert_eq!(p, brute_force(&pts, cut));
        assert_eq!(p, vec![vec![0, 1, 2, 3], vec![4, 5]]);
        let cred = credibility_scores(&pts, cut).unwrap();
        assert_eq!(cred, vec![0.25, 0.25, 0.25, 0.25, 0.5, 0.5]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(matches!(
            credibility_scores(&[vec![1.0], vec![1.0, 2.0]], 1.0),
            Err(Error::Dimension { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn nn_chain_matches_naive_agglomeration(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..14),
            cut in 0.0f64..6.0,
        ) {
            let labels = cut_clusters(&pts, cut).unwrap();
            prop_assert_eq!(partition(&labels), brute_force(&pts, cut));
        }

        #[test]
        fn credibility_sums_to_cluster_count(
            pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..20),
            cut in 0.0f64..4.0,
        ) {
            let cred = credibility_scores(&pts, cut).unwrap();
            let clusters = partition(&cut_clusters(&pts, cut).unwrap()).len();
            prop_assert!(cred.iter().all(|&c| c > 0.0 && c <= 1.0));
            prop_assert!((cred.iter().sum::<f64>() - clusters as f64).abs() < 1e-9);
        }
    }
}
