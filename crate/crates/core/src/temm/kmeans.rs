//! Lloyd's k-means with k-means++ seeding and silhouette-based selection of k.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub k: usize,
    /// Cluster of each point; clusters are numbered by first appearance.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn seed_centroids<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.gen_range(0..points.len())
        } else {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = sq_dist(p, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KMeans {
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest(p, &centroids);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an empty cluster with the point farthest from its centroid
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = sq_dist(&points[a], &centroids[assignment[a]]);
                        let db = sq_dist(&points[b], &centroids[assignment[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("non-empty");
                centroids[c] = points[far].clone();
                assignment[far] = c;
            } else {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = points.iter().zip(&assignment).map(|(p, &c)| sq_dist(p, &centroids[c])).sum();
    relabel(KMeans { k, assignment, centroids, inertia })
}

fn relabel(km: KMeans) -> KMeans {
    let mut map = vec![usize::MAX; km.k];
    let mut next = 0;
    for &c in &km.assignment {
        if map[c] == usize::MAX {
            map[c] = next;
            next += 1;
        }
    }
    for m in map.iter_mut() {
        if *m == usize::MAX {
            *m = next;
            next += 1;
        }
    }
    let mut centroids = vec![Vec::new(); km.k];
    for (old, c) in km.centroids.into_iter().enumerate() {
        centroids[map[old]] = c;
    }
    KMeans {
        k: km.k,
        assignment: km.assignment.iter().map(|&c| map[c]).collect(),
        centroids,
        inertia: km.inertia,
    }
}

/// Best of `restarts` seeded runs by inertia.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> KMeans {
    assert!(!points.is_empty() && k >= 1 && k <= points.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts.max(1) {
        let init = seed_centroids(points, k, &mut rng);
        let run = lloyd(points, init, 300);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia - 1e-12) {
            best = Some(run);
        }
    }
    best.expect("at least one restart")
}

/// Mean silhouette coefficient; points in singleton clusters score 0.
pub fn silhouette(points: &[Vec<f64>], assignment: &[usize], k: usize) -> f64 {
    let n = points.len();
    if n < 2 || k < 2 {
        return 0.0;
    }
    let sizes = (0..k).map(|c| assignment.iter().filter(|&&a| a == c).count()).collect::<Vec<_>>();
    let mut total = 0.0;
    for i in 0..n {
        let own = assignment[i];
        if sizes[own] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if i != j {
                sums[assignment[j]] += sq_dist(&points[i], &points[j]).sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 && b.is_finite() {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

/// Picks k in `ks` with the highest silhouette; ties go to the smaller k.
/// Returns `k = 1` when fewer than two distinct points exist.
pub fn select_k(points: &[Vec<f64>], ks: std::ops::RangeInclusive<usize>, seed: u64) -> (KMeans, f64) {
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !distinct.contains(&p) {
            distinct.push(p);
        }
    }
    let upper = (*ks.end()).min(distinct.len());
    let lower = (*ks.start()).max(2);
    if distinct.len() < 2 || lower > upper {
        return (kmeans(points, 1, seed, 1), 0.0);
    }
    let mut best: Option<(KMeans, f64)> = None;
    for k in lower..=upper {
        let km = kmeans(points, k, seed, 4);
        let s = silhouette(points, &km.assignment, k);
        if best.as_ref().is_none_or(|(_, bs)| s > bs + 1e-12) {
            best = Some((km, s));
        }
    }
    best.expect("non-empty range")
}
