//! Lloyd's k-means with k-means++ seeding, a Hartigan single-point refinement
//! pass, and best-of-restarts selection.

use rand::Rng;

use crate::seeding::{task_rng, TaskRng};

const MAX_LLOYD_ITERS: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to assigned centroids.
    pub objective: f64,
    /// Restart index that produced this fit.
    pub restart: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut TaskRng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn means(points: &[Vec<f64>], assignment: &[usize], k: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignment) {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|x| *x /= n as f64);
        }
    }
    (sums, counts)
}

fn lloyd(points: &[Vec<f64>], k: usize, rng: &mut TaskRng) -> (Vec<usize>, Vec<Vec<f64>>) {
    let dim = points[0].len();
    let mut centroids = seed_plus_plus(points, k, rng);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    for _ in 0..MAX_LLOYD_ITERS {
        let (mut next, counts) = means(points, &assignment, k, dim);
        for empty in (0..k).filter(|&c| counts[c] == 0) {
            // Reseed with the point lying farthest from its own centroid.
            let far = points
                .iter()
                .zip(&assignment)
                .enumerate()
                .map(|(i, (p, &c))| (i, sq_dist(p, &next[c])))
                .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
                .0;
            next[empty] = points[far].clone();
            assignment[far] = empty;
        }
        centroids = next;
        let updated: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if updated == assignment {
            break;
        }
        assignment = updated;
    }
    (assignment, centroids)
}

/// Move single points between clusters while that lowers the objective,
/// accounting for the centroid shift of both clusters.
fn hartigan(points: &[Vec<f64>], assignment: &mut [usize], k: usize) {
    let dim = points[0].len();
    let (mut centroids, mut counts) = means(points, assignment, k, dim);
    let mut improved = true;
    let mut sweeps = 0;
    while improved && sweeps < 100 {
        improved = false;
        sweeps += 1;
        for (i, p) in points.iter().enumerate() {
            let from = assignment[i];
            if counts[from] <= 1 {
                continue;
            }
            let nf = counts[from] as f64;
            let removal = nf / (nf - 1.0) * sq_dist(p, &centroids[from]);
            let mut best = (from, 0.0);
            for to in (0..k).filter(|&c| c != from) {
                let nt = counts[to] as f64;
                let gain = removal - nt / (nt + 1.0) * sq_dist(p, &centroids[to]);
                if gain > best.1 + 1e-15 {
                    best = (to, gain);
                }
            }
            if best.0 != from {
                let to = best.0;
                let nt = counts[to] as f64;
                for d in 0..dim {
                    centroids[from][d] = (centroids[from][d] * nf - p[d]) / (nf - 1.0);
                    centroids[to][d] = (centroids[to][d] * nt + p[d]) / (nt + 1.0);
                }
                counts[from] -= 1;
                counts[to] += 1;
                assignment[i] = to;
                improved = true;
            }
        }
    }
}

/// Run `restarts` independent fits and keep the one with the smallest
/// objective; ties go to the lowest restart index.
///
/// Callers must ensure there are at least `k` distinct points.
pub fn kmeans_best_of(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> KMeansFit {
    assert!(k >= 1 && points.len() >= k, "need at least k points");
    let dim = points[0].len();
    let mut best: Option<KMeansFit> = None;
    for restart in 0..restarts.max(1) {
        let mut rng = task_rng(seed, &[restart as u64]);
        let (mut assignment, _) = lloyd(points, k, &mut rng);
        hartigan(points, &mut assignment, k);
        let (centroids, _) = means(points, &assignment, k, dim);
        let objective = points.iter().zip(&assignment).map(|(p, &c)| sq_dist(p, &centroids[c])).sum();
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(KMeansFit { assignment, centroids, objective, restart });
        }
    }
    best.expect("at least one restart")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(points: &[Vec<f64>], k: usize) -> f64 {
        let n = points.len();
        let mut best = f64::INFINITY;
        let mut labels = vec![0usize; n];
        loop {
            let used = (0..k).all(|c| labels.contains(&c));
            if used {
                let (centroids, _) = means(points, &labels, k, points[0].len());
                let obj: f64 = points.iter().zip(&labels).map(|(p, &c)| sq_dist(p, &centroids[c])).sum();
                best = best.min(obj);
            }
            let mut i = 0;
            loop {
                if i == n {
                    return best;
                }
                labels[i] += 1;
                if labels[i] < k {
                    break;
                }
                labels[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn four_point_instance() {
        let pts = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![5.0, 5.0], vec![5.1, 5.0]];
        assert!((brute_force(&pts, 2) - 0.01).abs() < 1e-12);
        let fit = kmeans_best_of(&pts, 2, 10, 1);
        assert_eq!(fit.assignment[0], fit.assignment[1]);
        assert_eq!(fit.assignment[2], fit.assignment[3]);
        assert_ne!(fit.assignment[0], fit.assignment[2]);
        assert!((fit.objective - 0.01).abs() < 1e-12);
    }

    #[test]
    fn k_equal_distinct_rows_gives_zero() {
        let pts = vec![vec![1.0], vec![1.0], vec![2.0], vec![7.0], vec![7.0]];
        let fit = kmeans_best_of(&pts, 3, 5, 9);
        assert_eq!(fit.objective, 0.0);
        assert_eq!(fit.assignment[0], fit.assignment[1]);
        assert_eq!(fit.assignment[3], fit.assignment[4]);
    }

    #[test]
    fn deterministic_given_seed() {
        let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * 7 % 13) as f64, (i * 3 % 5) as f64]).collect();
        assert_eq!(kmeans_best_of(&pts, 4, 20, 5), kmeans_best_of(&pts, 4, 20, 5));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn best_of_restarts_matches_brute_force(
            raw in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..=8),
            k in 2usize..=3,
            seed in any::<u64>(),
        ) {
            let pts: Vec<Vec<f64>> = raw.iter().map(|(x, y)| vec![*x, *y]).collect();
            let fit = kmeans_best_of(&pts, k, 100, seed);
            let oracle = brute_force(&pts, k);
            prop_assert!(fit.objective <= oracle + 1e-9, "{} > {}", fit.objective, oracle);
        }
    }
}
