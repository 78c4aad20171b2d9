//! Lloyd's KMeans with k-means++ seeding over postprocessed features.

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rng::{below, stream, uniform_f64};

/// Default Lloyd iteration cap.
pub const KMEANS_MAX_ITER: usize = 100;
/// Default relative-inertia-improvement stopping threshold.
pub const KMEANS_TOL: f64 = 1e-4;

/// Outcome of one KMeans run.
#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub k: usize,
    pub d: usize,
    /// k×d row-major centroid coordinates.
    pub centroids: Vec<f32>,
    /// Cluster index per input row; every index in `[0,k)` occurs at least
    /// once (empty clusters are repaired before termination).
    pub assignments: Vec<u32>,
    /// Sum of squared distances from each point to its centroid.
    pub inertia: f64,
    pub iterations_run: usize,
    /// Inertia recorded after each assignment pass; nonincreasing.
    pub inertia_trace: Vec<f64>,
}

/// The cluster assignments read as training pseudo-labels.
pub fn pseudo_labels(result: &KMeansResult) -> Vec<u32> {
    result.assignments.clone()
}

fn dist_sq(a: &[f32], b: &[f64]) -> f64 {
    let mut acc = 0.0f64;
    for (&x, &c) in a.iter().zip(b) {
        let diff = x as f64 - c;
        acc += diff * diff;
    }
    acc
}

/// k-means++ seeding: first centroid uniform, the rest drawn with
/// probability proportional to squared distance from the nearest chosen
/// centroid. If every remaining point is coincident with a centroid the
/// next one is drawn uniformly from the unchosen points.
fn init_plus_plus(f: &FeatureMatrix, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, "kmeans++", 0);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut chosen = vec![false; f.n];
    let first = below(&mut rng, f.n);
    chosen[first] = true;
    centroids.push(f.row(first).iter().map(|&v| v as f64).collect());
    let mut best = vec![0.0f64; f.n];
    for (i, b) in best.iter_mut().enumerate() {
        *b = dist_sq(f.row(i), &centroids[0]);
    }
    while centroids.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let mut target = uniform_f64(&mut rng) * total;
            let mut pick = f.n - 1;
            for (i, &w) in best.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            let free: Vec<usize> = (0..f.n).filter(|&i| !chosen[i]).collect();
            free[below(&mut rng, free.len())]
        };
        chosen[next] = true;
        let c: Vec<f64> = f.row(next).iter().map(|&v| v as f64).collect();
        for (i, b) in best.iter_mut().enumerate() {
            let d = dist_sq(f.row(i), &c);
            if d < *b {
                *b = d;
            }
        }
        centroids.push(c);
    }
    centroids
}

/// Assigns every row to its nearest centroid (ties to the lowest index).
/// Returns the resulting inertia.
fn assign(f: &FeatureMatrix, centroids: &[Vec<f64>], out: &mut [u32]) -> f64 {
    let mut inertia = 0.0f64;
    for i in 0..f.n {
        let row = f.row(i);
        let mut best = 0usize;
        let mut best_d = dist_sq(row, &centroids[0]);
        for (j, c) in centroids.iter().enumerate().skip(1) {
            let d = dist_sq(row, c);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        out[i] = best as u32;
        inertia += best_d;
    }
    inertia
}

fn update_centroids(f: &FeatureMatrix, assignments: &[u32], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut centroids = vec![vec![0.0f64; f.d]; k];
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a as usize] += 1;
        for (c, &v) in centroids[a as usize].iter_mut().zip(f.row(i)) {
            *c += v as f64;
        }
    }
    for (c, &n) in centroids.iter_mut().zip(&counts) {
        if n > 0 {
            for v in c.iter_mut() {
                *v /= n as f64;
            }
        }
    }
    (centroids, counts)
}

/// Relocates each empty centroid onto the point farthest from its own
/// centroid within the currently largest cluster, claims that point, and
/// runs one extra assignment pass. The claimed points are re-forced after
/// the pass so no repaired cluster collapses back to empty when distances
/// tie (coincident points).
fn repair_empty(
    f: &FeatureMatrix,
    centroids: &mut [Vec<f64>],
    counts: &mut [usize],
    assignments: &mut [u32],
) -> Option<f64> {
    let empties: Vec<usize> = counts.iter().enumerate().filter(|(_, &c)| c == 0).map(|(j, _)| j).collect();
    if empties.is_empty() {
        return None;
    }
    let mut forced: Vec<(usize, usize)> = Vec::new();
    for e in empties {
        let largest = (0..counts.len()).max_by_key(|&j| counts[j]).expect("k ≥ 1");
        let victim = (0..f.n)
            .filter(|&i| assignments[i] as usize == largest)
            .max_by(|&a, &b| {
                dist_sq(f.row(a), &centroids[largest])
                    .partial_cmp(&dist_sq(f.row(b), &centroids[largest]))
                    .expect("finite distances")
            })
            .expect("largest cluster is nonempty");
        centroids[e] = f.row(victim).iter().map(|&v| v as f64).collect();
        assignments[victim] = e as u32;
        counts[largest] -= 1;
        counts[e] += 1;
        forced.push((e, victim));
    }
    let mut inertia = assign(f, centroids, assignments);
    for &(e, victim) in &forced {
        if !assignments.contains(&(e as u32)) {
            // The victim sits exactly on centroid e; moving it there keeps
            // its distance contribution at zero.
            assignments[victim] = e as u32;
            inertia = f64::NAN; // recomputed below
        }
    }
    if inertia.is_nan() {
        inertia = (0..f.n)
            .map(|i| dist_sq(f.row(i), &centroids[assignments[i] as usize]))
            .sum();
    }
    Some(inertia)
}

/// Lloyd's algorithm: k-means++ init, then alternate assignment and
/// centroid updates until the assignments stop changing, the relative
/// inertia improvement drops below `tol`, or `max_iter` passes run.
pub fn kmeans(
    f: &FeatureMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansResult> {
    if k < 2 {
        return Err(Error::Invalid(format!("kmeans requires k ≥ 2, got {k}")));
    }
    if k > f.n {
        return Err(Error::Invalid(format!("kmeans requires k ≤ N, got k={k} for N={}", f.n)));
    }
    let mut centroids = init_plus_plus(f, k, seed);
    let mut assignments = vec![0u32; f.n];
    let mut trace = Vec::new();
    let mut inertia = assign(f, &centroids, &mut assignments);
    trace.push(inertia);
    let mut iterations = 1usize;
    for _ in 1..max_iter {
        let (new_centroids, mut counts) = update_centroids(f, &assignments, k);
        centroids = new_centroids;
        let mut next = assignments.clone();
        let mut next_inertia = assign(f, &centroids, &mut next);
        // counts must reflect the fresh assignment before repair looks for
        // empties
        counts.iter_mut().for_each(|c| *c = 0);
        for &a in &next {
            counts[a as usize] += 1;
        }
        if let Some(repaired) = repair_empty(f, &mut centroids, &mut counts, &mut next) {
            next_inertia = repaired;
        }
        iterations += 1;
        let unchanged = next == assignments;
        let converged = inertia - next_inertia <= tol * inertia;
        assignments = next;
        inertia = next_inertia;
        trace.push(inertia);
        if unchanged || converged {
            break;
        }
    }
    let centroids_f32: Vec<f32> = centroids.iter().flat_map(|c| c.iter().map(|&v| v as f32)).collect();
    Ok(KMeansResult {
        k,
        d: f.d,
        centroids: centroids_f32,
        assignments,
        inertia,
        iterations_run: iterations,
        inertia_trace: trace,
    })
}
