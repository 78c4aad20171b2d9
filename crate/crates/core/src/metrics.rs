//! Partition-comparison metrics: NMI, per-cycle consistency, classification
//! accuracy, and initial alignment of an untrained network's features.

use std::collections::BTreeMap;

use crate::data::{ImageDataset, TransformSpec};
use crate::error::{Error, Result};
use crate::features::{extract_features, fit_pca, postprocess};
use crate::nn::Network;
use crate::rng::derive_seed;

fn dense_relabel(labels: &[u32]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    let mut dense = Vec::with_capacity(labels.len());
    for &l in labels {
        let next = map.len();
        dense.push(*map.entry(l).or_insert(next));
    }
    (dense, map.len())
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information between two equal-length partitions:
/// `I(a;b) / sqrt(H(a)·H(b))` with natural logarithms, in `[0,1]`.
///
/// Zero-entropy conventions: two single-cluster partitions agree perfectly
/// (1.0); a single-cluster partition against a non-constant one shares no
/// information (0.0). Both arguments are reduced to first-occurrence
/// canonical form and summation runs over a canonical argument order, so
/// the result is bitwise invariant under argument swaps and under any
/// injective relabeling of either side; identical partitions score an
/// exact 1.0.
pub fn nmi(a: &[u32], b: &[u32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Invalid(format!(
            "nmi: partition lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Invalid("nmi of empty partitions".into()));
    }
    let (da, ka) = dense_relabel(a);
    let (db, kb) = dense_relabel(b);
    if da == db {
        return Ok(1.0);
    }
    let (da, ka, db, kb) = if da > db { (db, kb, da, ka) } else { (da, ka, db, kb) };
    let n = a.len() as f64;
    let mut table = vec![0usize; ka * kb];
    let mut rows = vec![0usize; ka];
    let mut cols = vec![0usize; kb];
    for (&i, &j) in da.iter().zip(&db) {
        table[i * kb + j] += 1;
        rows[i] += 1;
        cols[j] += 1;
    }
    let ha = entropy(&rows, n);
    let hb = entropy(&cols, n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0f64;
    for i in 0..ka {
        for j in 0..kb {
            let c = table[i * kb + j];
            if c > 0 {
                let pij = c as f64 / n;
                mi += pij * (n * c as f64 / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

/// NMI between the pseudo-label partitions of two consecutive cycles.
pub fn cycle_consistency(prev: &[u32], curr: &[u32]) -> Result<f64> {
    nmi(prev, curr)
}

/// Fraction of positions where the two label vectors agree exactly.
pub fn accuracy(predicted: &[u32], truth: &[u32]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Invalid(format!(
            "accuracy: label lengths differ ({} vs {})",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Invalid("accuracy of empty label vectors".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Initial alignment of a feature extractor against ground truth: cluster
/// the postprocessed features into `k` groups and report
/// NMI(truth, pseudo-labels). Called on a freshly initialized network this
/// is the IA(θ, k) statistic; the kmeans seed is derived from `seed` the
/// same way a training run derives its clustering seed, so IA equals the
/// alignment of that run's first clustering.
pub fn ia(
    net: &mut Network,
    ds: &ImageDataset,
    spec: &TransformSpec,
    pca_components: Option<usize>,
    k: usize,
    batch_size: usize,
    seed: u64,
) -> Result<f64> {
    let truth = ds.labels_u32()?;
    let raw = extract_features(net, ds, spec, batch_size)?;
    let pca = match pca_components {
        Some(d) => Some(fit_pca(&raw, d)?),
        None => None,
    };
    let processed = postprocess(&raw, pca.as_ref())?;
    let result = crate::clustering::kmeans(
        &processed,
        k,
        derive_seed(seed, "kmeans", 0),
        crate::clustering::KMEANS_MAX_ITER,
        crate::clustering::KMEANS_TOL,
    )?;
    nmi(&truth, &result.assignments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{kmeans, KMEANS_MAX_ITER, KMEANS_TOL};
    use crate::features::FeatureMatrix;
    use crate::rng::{below, standard_normal, stream};

    #[test]
    fn identical_partitions_score_one() {
        let a = vec![0u32, 0, 1, 1, 2, 2];
        assert!((nmi(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn relabeling_scores_one() {
        let a = vec![0u32, 0, 1, 1, 2, 2];
        let b = vec![5u32, 5, 9, 9, 2, 2];
        assert!((nmi(&a, &b).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn independent_partitions_score_zero() {
        let a = vec![0u32, 0, 1, 1];
        let b = vec![0u32, 1, 0, 1];
        assert!(nmi(&a, &b).unwrap().abs() < 1e-9);
    }

    #[test]
    fn symmetry_is_bitwise() {
        let mut rng = stream(21, "nmi-test", 0);
        for _ in 0..20 {
            let a: Vec<u32> = (0..200).map(|_| below(&mut rng, 7) as u32).collect();
            let b: Vec<u32> = (0..200).map(|_| below(&mut rng, 4) as u32).collect();
            let ab = nmi(&a, &b).unwrap();
            let ba = nmi(&b, &a).unwrap();
            assert_eq!(ab.to_bits(), ba.to_bits());
        }
    }

    #[test]
    fn zero_entropy_conventions() {
        let constant = vec![3u32; 5];
        let varied = vec![0u32, 1, 0, 1, 0];
        assert_eq!(nmi(&constant, &constant).unwrap(), 1.0);
        assert_eq!(nmi(&constant, &varied).unwrap(), 0.0);
        assert_eq!(nmi(&varied, &constant).unwrap(), 0.0);
    }

    #[test]
    fn rejects_mismatch_and_empty() {
        assert!(nmi(&[0, 1], &[0]).is_err());
        assert!(nmi(&[], &[]).is_err());
    }

    /// Probability-form reference implementation: joint/marginal tables in
    /// f64 from the start, arithmetic arranged differently from `nmi`.
    fn nmi_reference(a: &[u32], b: &[u32]) -> f64 {
        let ka = (*a.iter().max().unwrap() + 1) as usize;
        let kb = (*b.iter().max().unwrap() + 1) as usize;
        let n = a.len() as f64;
        let mut joint = vec![vec![0.0f64; kb]; ka];
        for (&x, &y) in a.iter().zip(b) {
            joint[x as usize][y as usize] += 1.0 / n;
        }
        let pa: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
        let pb: Vec<f64> = (0..kb).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
        let h = |p: &[f64]| -> f64 { p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum() };
        let mut mi = 0.0;
        for i in 0..ka {
            for j in 0..kb {
                if joint[i][j] > 0.0 {
                    mi += joint[i][j] * (joint[i][j] / (pa[i] * pb[j])).ln();
                }
            }
        }
        mi / (h(&pa) * h(&pb)).sqrt()
    }

    #[test]
    fn matches_probability_form_reference() {
        let mut rng = stream(22, "nmi-test", 1);
        for _ in 0..25 {
            let a: Vec<u32> = (0..100).map(|_| below(&mut rng, 6) as u32).collect();
            let b: Vec<u32> = (0..100).map(|_| below(&mut rng, 9) as u32).collect();
            let ours = nmi(&a, &b).unwrap();
            let reference = nmi_reference(&a, &b);
            assert!((ours - reference).abs() < 1e-10, "{ours} vs {reference}");
        }
    }

    #[test]
    fn random_partitions_score_low() {
        let mut rng = stream(23, "nmi-test", 2);
        let a: Vec<u32> = (0..1000).map(|_| below(&mut rng, 10) as u32).collect();
        let b: Vec<u32> = (0..1000).map(|_| below(&mut rng, 10) as u32).collect();
        assert!(nmi(&a, &b).unwrap() < 0.05);
    }

    #[test]
    fn halted_cycles_are_perfectly_consistent() {
        let labels = vec![0u32, 2, 1, 2, 0];
        assert!((cycle_consistency(&labels, &labels).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 2, 3], &[0, 1, 0, 0]).unwrap(), 0.5);
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn separated_blobs_align_perfectly_with_their_classes() {
        // Three tight blobs, labels = blob id: kmeans(k=3) recovers the
        // blobs and NMI reaches 1.
        let mut rng = stream(24, "ia-test", 0);
        let n_per = 20;
        let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
        let mut data = Vec::new();
        let mut truth = Vec::new();
        for (cls, &(cx, cy)) in centers.iter().enumerate() {
            for _ in 0..n_per {
                data.push((cx + 0.05 * standard_normal(&mut rng)) as f32);
                data.push((cy + 0.05 * standard_normal(&mut rng)) as f32);
                truth.push(cls as u32);
            }
        }
        let f = FeatureMatrix::new(3 * n_per, 2, data, "test").unwrap();
        let r = kmeans(&f, 3, 0, KMEANS_MAX_ITER, KMEANS_TOL).unwrap();
        assert!((nmi(&truth, &r.assignments).unwrap() - 1.0).abs() < 1e-9);
    }
}
