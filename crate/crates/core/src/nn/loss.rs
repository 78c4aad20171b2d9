//! Softmax cross-entropy with mean reduction — the training objective for
//! pseudo-label classification and for linear probes.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Returns (mean loss, d loss / d logits). The per-row softmax is computed in
/// f64 with max subtraction, so the loss value is stable regardless of the
/// network's element type.
pub fn softmax_cross_entropy<S: Scalar>(
    logits: &Tensor<S>,
    targets: &[u32],
) -> Result<(f64, Tensor<S>)> {
    let (n, k) = logits.dims2();
    if targets.len() != n {
        return Err(Error::Invalid(format!(
            "loss: {} logits rows vs {} targets",
            n,
            targets.len()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t as usize >= k) {
        return Err(Error::Invalid(format!("target {t} out of range for {k} classes")));
    }

    let ld = logits.data();
    let mut dlogits = Tensor::zeros(&[n, k]);
    let dl = dlogits.data_mut();
    let mut loss = 0.0f64;
    let inv_n = 1.0 / n as f64;
    for row in 0..n {
        let r = &ld[row * k..(row + 1) * k];
        let mut maxv = f64::NEG_INFINITY;
        for v in r {
            maxv = maxv.max(v.to_f64());
        }
        let mut denom = 0.0f64;
        for v in r {
            denom += (v.to_f64() - maxv).exp();
        }
        let log_denom = denom.ln();
        let t = targets[row] as usize;
        loss += log_denom - (r[t].to_f64() - maxv);
        for (j, v) in r.iter().enumerate() {
            let p = (v.to_f64() - maxv).exp() / denom;
            let grad = if j == t { p - 1.0 } else { p };
            dl[row * k + j] = S::from_f64(grad * inv_n);
        }
    }
    loss *= inv_n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross-entropy loss".into()));
    }
    Ok((loss, dlogits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_cost_ln_k() {
        for k in [2usize, 5, 10] {
            let logits: Tensor<f64> = Tensor::zeros(&[3, k]);
            let (loss, _) = softmax_cross_entropy(&logits, &[0, 1, (k - 1) as u32]).unwrap();
            assert!((loss - (k as f64).ln()).abs() < 1e-12, "k={k}: {loss}");
        }
    }

    #[test]
    fn identical_rows_average_to_the_single_sample_gradient() {
        let row = vec![0.3f64, -1.2, 0.8];
        let single = Tensor::from_vec(&[1, 3], row.clone());
        let (l1, g1) = softmax_cross_entropy(&single, &[2]).unwrap();
        let batch = Tensor::from_vec(&[4, 3], row.repeat(4));
        let (l4, g4) = softmax_cross_entropy(&batch, &[2, 2, 2, 2]).unwrap();
        assert!((l1 - l4).abs() < 1e-12);
        // Mean reduction: each row's gradient is the single-sample gradient / 4,
        // so (sum over the batch rows) equals the single-sample gradient.
        for j in 0..3 {
            let summed: f64 = (0..4).map(|r| g4.data()[r * 3 + j]).sum();
            assert!((summed - g1.data()[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits = vec![0.5f64, -0.3, 1.7, 0.2, 0.0, -2.0];
        let targets = [2u32, 0];
        let t = Tensor::from_vec(&[2, 3], logits.clone());
        let (_, grad) = softmax_cross_entropy(&t, &targets).unwrap();
        let h = 1e-6;
        for i in 0..logits.len() {
            let mut up = logits.clone();
            up[i] += h;
            let (lu, _) = softmax_cross_entropy(&Tensor::from_vec(&[2, 3], up), &targets).unwrap();
            let mut dn = logits.clone();
            dn[i] -= h;
            let (ld, _) = softmax_cross_entropy(&Tensor::from_vec(&[2, 3], dn), &targets).unwrap();
            let fd = (lu - ld) / (2.0 * h);
            assert!((fd - grad.data()[i]).abs() < 1e-8, "logit {i}");
        }
    }

    #[test]
    fn rejects_out_of_range_targets_and_bad_lengths() {
        let logits: Tensor<f32> = Tensor::zeros(&[2, 3]);
        assert!(softmax_cross_entropy(&logits, &[0, 3]).is_err());
        assert!(softmax_cross_entropy(&logits, &[0]).is_err());
    }
}
