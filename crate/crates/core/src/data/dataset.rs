//! In-memory image dataset: N×C×H×W u8 pixels plus optional ground-truth
//! labels.

use crate::error::{Error, Result};
use crate::rng::{shuffle, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Seed of the deterministic shuffle behind `subset`: a fixed constant, not
/// the run seed, so every run and every sweep entry sees the same subset and
/// cross-seed comparisons vary only the random state of the network.
const SUBSET_SEED: u64 = 0x5eed_da7a_5e75_0001;

#[derive(Debug, Clone)]
pub struct ImageDataset {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    /// Row-major NCHW pixel values.
    pub images: Vec<u8>,
    pub labels: Option<Vec<u8>>,
    pub class_count: usize,
    pub split: Split,
}

impl ImageDataset {
    pub fn new(
        n: usize,
        c: usize,
        h: usize,
        w: usize,
        images: Vec<u8>,
        labels: Option<Vec<u8>>,
        class_count: usize,
        split: Split,
    ) -> Result<Self> {
        if images.len() != n * c * h * w {
            return Err(Error::Invalid(format!(
                "dataset: {} pixels for {}×{}×{}×{}",
                images.len(),
                n,
                c,
                h,
                w
            )));
        }
        if let Some(labels) = labels.as_ref() {
            if labels.len() != n {
                return Err(Error::Invalid(format!(
                    "dataset: {} labels for {} images",
                    labels.len(),
                    n
                )));
            }
            if let Some(&bad) = labels.iter().find(|&&l| l as usize >= class_count) {
                return Err(Error::Invalid(format!(
                    "label {bad} out of range for {class_count} classes"
                )));
            }
        }
        Ok(ImageDataset { n, c, h, w, images, labels, class_count, split })
    }

    /// Pixels of image `i` (C×H×W contiguous).
    pub fn image(&self, i: usize) -> &[u8] {
        let sz = self.c * self.h * self.w;
        &self.images[i * sz..(i + 1) * sz]
    }

    /// Ground-truth labels widened for metric code; errors if absent.
    pub fn labels_u32(&self) -> Result<Vec<u32>> {
        self.labels
            .as_ref()
            .map(|l| l.iter().map(|&v| v as u32).collect())
            .ok_or_else(|| Error::Invalid("dataset has no ground-truth labels".into()))
    }

    /// Deterministic desk-scale truncation: the first `max` entries of a
    /// fixed seeded shuffle of the dataset. `max ≥ n` returns the dataset
    /// unchanged (in original order).
    pub fn subset(&self, max: usize) -> Self {
        if max >= self.n {
            return self.clone();
        }
        let mut order: Vec<usize> = (0..self.n).collect();
        shuffle(&mut stream(SUBSET_SEED, "subset", 0), &mut order);
        order.truncate(max);
        let sz = self.c * self.h * self.w;
        let mut images = Vec::with_capacity(max * sz);
        for &i in &order {
            images.extend_from_slice(self.image(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| order.iter().map(|&i| l[i]).collect());
        ImageDataset { n: max, images, labels, ..self.clone() }
    }
}
