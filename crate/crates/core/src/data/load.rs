//! Named-dataset registry: resolves a dataset id + split to files under a
//! data root and loads them into an [`ImageDataset`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{ImageDataset, Split};
use super::idx::{load_idx_images, load_idx_labels, load_raw_nchw};
use super::transforms::TransformSpec;
use crate::error::Result;

/// Datasets the lab knows how to load. FMNIST ships as IDX files; the RGB
/// datasets use raw NCHW u8 blobs with IDX label sidecars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetId {
    Fmnist,
    Svhn,
    Cifar10,
}

impl DatasetId {
    pub fn name(self) -> &'static str {
        match self {
            DatasetId::Fmnist => "fmnist",
            DatasetId::Svhn => "svhn",
            DatasetId::Cifar10 => "cifar10",
        }
    }

    /// Image geometry as stored on disk: (channels, height, width).
    pub fn geometry(self) -> (usize, usize, usize) {
        match self {
            DatasetId::Fmnist => (1, 28, 28),
            DatasetId::Svhn | DatasetId::Cifar10 => (3, 32, 32),
        }
    }

    pub fn class_count(self) -> usize {
        10
    }

    /// Per-dataset preprocessing defaults: native-size resize and crop,
    /// mean/std 0.5, flip on; Sobel on for the RGB datasets.
    pub fn default_transforms(self) -> TransformSpec {
        let (_, h, _) = self.geometry();
        TransformSpec {
            normalize_mean: vec![0.5],
            normalize_std: vec![0.5],
            resize_to: h,
            crop_size: h,
            horizontal_flip: true,
            sobel: self != DatasetId::Fmnist,
        }
    }
}

fn split_prefix(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Test => "t10k",
    }
}

/// Loads `root/<id>/<split>-…` into memory. FMNIST reads
/// `{train,t10k}-images-idx3-ubyte` pairs; SVHN and CIFAR10 read
/// `{train,t10k}-images.nchw` raw blobs with the same label sidecars.
pub fn load_dataset(root: &Path, id: DatasetId, split: Split) -> Result<ImageDataset> {
    let dir = root.join(id.name());
    let prefix = split_prefix(split);
    let (c, h, w) = id.geometry();
    let labels = load_idx_labels(&dir.join(format!("{prefix}-labels-idx1-ubyte")))?;
    let (n, images) = match id {
        DatasetId::Fmnist => {
            let (n, ih, iw, images) =
                load_idx_images(&dir.join(format!("{prefix}-images-idx3-ubyte")))?;
            if (ih, iw) != (h, w) {
                return Err(crate::error::Error::Invalid(format!(
                    "{} images are {ih}×{iw}, expected {h}×{w}",
                    id.name()
                )));
            }
            (n, images)
        }
        DatasetId::Svhn | DatasetId::Cifar10 => {
            load_raw_nchw(&dir.join(format!("{prefix}-images.nchw")), c, h, w)?
        }
    };
    ImageDataset::new(n, c, h, w, images, Some(labels), id.class_count(), split)
}
