//! Deterministic image preprocessing: scale, normalize, bilinear resize,
//! center crop, optional horizontal flip, optional Sobel edge extraction.

use serde::{Deserialize, Serialize};

use super::dataset::ImageDataset;
use crate::error::{Error, Result};
use crate::rng::{stream, uniform_f32};
use crate::tensor::Tensor;

/// Which preprocessing variant to run: `Cluster` is fully deterministic
/// (used for feature extraction), `Train` additionally flips each image
/// horizontally with probability 1/2 when the spec enables it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Cluster,
    Train,
}

/// Preprocessing parameters, applied in order: scale to `[0,1]`, normalize
/// `(x − mean) / std` per channel, bilinear resize to `resize_to`, center
/// crop to `crop_size`, horizontal flip (train phase), Sobel.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    /// Per-channel normalization mean; a single entry broadcasts.
    pub normalize_mean: Vec<f32>,
    /// Per-channel normalization std; a single entry broadcasts.
    pub normalize_std: Vec<f32>,
    pub resize_to: usize,
    pub crop_size: usize,
    pub horizontal_flip: bool,
    pub sobel: bool,
}

impl Default for TransformSpec {
    fn default() -> Self {
        TransformSpec {
            normalize_mean: vec![0.5],
            normalize_std: vec![0.5],
            resize_to: 28,
            crop_size: 28,
            horizontal_flip: true,
            sobel: false,
        }
    }
}

impl TransformSpec {
    /// Checks internal consistency and compatibility with `channels`-deep
    /// input images.
    pub fn validate(&self, channels: usize) -> Result<()> {
        if self.crop_size == 0 || self.resize_to == 0 {
            return Err(Error::Config("resize_to and crop_size must be positive".into()));
        }
        if self.crop_size > self.resize_to {
            return Err(Error::Config(format!(
                "crop_size {} exceeds resize_to {}",
                self.crop_size, self.resize_to
            )));
        }
        for (name, v) in [("normalize_mean", &self.normalize_mean), ("normalize_std", &self.normalize_std)] {
            if v.len() != 1 && v.len() != channels {
                return Err(Error::Config(format!(
                    "{name} has {} entries for {channels}-channel images",
                    v.len()
                )));
            }
        }
        if self.normalize_std.iter().any(|&s| s <= 0.0) {
            return Err(Error::Config("normalize_std entries must be positive".into()));
        }
        if self.sobel && channels != 1 && channels != 3 {
            return Err(Error::Config(format!(
                "sobel requires 1- or 3-channel input, got {channels}"
            )));
        }
        Ok(())
    }

    /// Channel count after the full transform chain.
    pub fn out_channels(&self, in_channels: usize) -> usize {
        if self.sobel {
            2
        } else {
            in_channels
        }
    }
}

fn channel_param(v: &[f32], c: usize) -> f32 {
    if v.len() == 1 {
        v[0]
    } else {
        v[c]
    }
}

/// Bilinear resize of one channel to `out×out`, pixel-center sampling
/// (`src = (dst + 0.5)·scale − 0.5`, clamped at the edges). An identity
/// size change copies the input bit-for-bit.
fn resize_channel(src: &[f32], h: usize, w: usize, out: usize) -> Vec<f32> {
    if h == out && w == out {
        return src.to_vec();
    }
    let coords = |in_len: usize| -> Vec<(usize, usize, f32)> {
        let scale = in_len as f32 / out as f32;
        (0..out)
            .map(|d| {
                let s = ((d as f32 + 0.5) * scale - 0.5).max(0.0);
                let lo = (s as usize).min(in_len - 1);
                let hi = (lo + 1).min(in_len - 1);
                (lo, hi, s - lo as f32)
            })
            .collect()
    };
    let ys = coords(h);
    let xs = coords(w);
    let mut dst = vec![0.0f32; out * out];
    for (dy, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (dx, &(x0, x1, fx)) in xs.iter().enumerate() {
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            dst[dy * out + dx] = top * (1.0 - fy) + bot * fy;
        }
    }
    dst
}

fn center_crop_channel(src: &[f32], size: usize, crop: usize) -> Vec<f32> {
    if size == crop {
        return src.to_vec();
    }
    let start = (size - crop) / 2;
    let mut dst = Vec::with_capacity(crop * crop);
    for r in 0..crop {
        let row = (start + r) * size + start;
        dst.extend_from_slice(&src[row..row + crop]);
    }
    dst
}

/// Reverses each row of every channel in place.
pub fn flip_horizontal(data: &mut [f32], c: usize, h: usize, w: usize) {
    for ch in 0..c {
        for r in 0..h {
            data[(ch * h + r) * w..(ch * h + r) * w + w].reverse();
        }
    }
}

const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// Sobel edge extraction: 3-channel input is first collapsed to luminance
/// (ITU-R 601 weights), then convolved with the horizontal gradient kernel
/// `[[-1,0,1],[-2,0,2],[-1,0,1]]` and its transpose. Edge-replicate padding
/// keeps the spatial size and maps constant images to exactly zero. Output
/// has 2 channels (dx, dy).
pub fn sobel(batch: &Tensor<f32>) -> Result<Tensor<f32>> {
    let (n, c, h, w) = batch.dims4();
    if c != 1 && c != 3 {
        return Err(Error::Invalid(format!("sobel requires 1 or 3 channels, got {c}")));
    }
    let src = batch.data();
    let mut out = vec![0.0f32; n * 2 * h * w];
    let mut gray = vec![0.0f32; h * w];
    for i in 0..n {
        let img = &src[i * c * h * w..(i + 1) * c * h * w];
        if c == 1 {
            gray.copy_from_slice(img);
        } else {
            for p in 0..h * w {
                gray[p] = LUMA[0] * img[p] + LUMA[1] * img[h * w + p] + LUMA[2] * img[2 * h * w + p];
            }
        }
        let at = |r: isize, col: isize| -> f32 {
            let r = r.clamp(0, h as isize - 1) as usize;
            let col = col.clamp(0, w as isize - 1) as usize;
            gray[r * w + col]
        };
        for r in 0..h as isize {
            for col in 0..w as isize {
                // Weighted column/row differences rather than a literal
                // kernel sum: equal neighbours cancel exactly, so constant
                // regions produce bitwise-zero gradients.
                let dx = (at(r - 1, col + 1) - at(r - 1, col - 1))
                    + 2.0 * (at(r, col + 1) - at(r, col - 1))
                    + (at(r + 1, col + 1) - at(r + 1, col - 1));
                let dy = (at(r + 1, col - 1) - at(r - 1, col - 1))
                    + 2.0 * (at(r + 1, col) - at(r - 1, col))
                    + (at(r + 1, col + 1) - at(r - 1, col + 1));
                let base = i * 2 * h * w + (r as usize) * w + col as usize;
                out[base] = dx;
                out[base + h * w] = dy;
            }
        }
    }
    Ok(Tensor::from_vec(&[n, 2, h, w], out))
}

/// Transforms one image (`c×h×w` u8 pixels) through every stage except the
/// flip decision, which the caller supplies. Returns `out_channels×crop²`
/// values.
pub fn transform_image(
    spec: &TransformSpec,
    pixels: &[u8],
    c: usize,
    h: usize,
    w: usize,
    flip: bool,
) -> Result<Vec<f32>> {
    let crop = spec.crop_size;
    let mut staged = Vec::with_capacity(c * crop * crop);
    for ch in 0..c {
        let mean = channel_param(&spec.normalize_mean, ch);
        let std = channel_param(&spec.normalize_std, ch);
        let plane: Vec<f32> = pixels[ch * h * w..(ch + 1) * h * w]
            .iter()
            .map(|&p| (p as f32 / 255.0 - mean) / std)
            .collect();
        let resized = resize_channel(&plane, h, w, spec.resize_to);
        staged.extend(center_crop_channel(&resized, spec.resize_to, crop));
    }
    if flip {
        flip_horizontal(&mut staged, c, crop, crop);
    }
    if spec.sobel {
        let t = sobel(&Tensor::from_vec(&[1, c, crop, crop], staged))?;
        Ok(t.into_data())
    } else {
        Ok(staged)
    }
}

/// Materializes the transformed dataset as one `N×C_out×crop×crop` tensor
/// in dataset order. `Cluster` phase is a pure function of `(ds, spec)`;
/// `Train` phase draws one flip decision per image from the `seed` stream.
pub fn transform_dataset(
    ds: &ImageDataset,
    spec: &TransformSpec,
    phase: Phase,
    seed: u64,
) -> Result<Tensor<f32>> {
    spec.validate(ds.c)?;
    let flips: Vec<bool> = if phase == Phase::Train && spec.horizontal_flip {
        let mut rng = stream(seed, "flip", 0);
        (0..ds.n).map(|_| uniform_f32(&mut rng) < 0.5).collect()
    } else {
        vec![false; ds.n]
    };
    let out_c = spec.out_channels(ds.c);
    let crop = spec.crop_size;
    let mut data = Vec::with_capacity(ds.n * out_c * crop * crop);
    for i in 0..ds.n {
        data.extend(transform_image(spec, ds.image(i), ds.c, ds.h, ds.w, flips[i])?);
    }
    Ok(Tensor::from_vec(&[ds.n, out_c, crop, crop], data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::Split;

    fn spec(resize: usize, crop: usize) -> TransformSpec {
        TransformSpec {
            normalize_mean: vec![0.0],
            normalize_std: vec![1.0],
            resize_to: resize,
            crop_size: crop,
            horizontal_flip: false,
            sobel: false,
        }
    }

    #[test]
    fn constant_image_normalizes_to_zero() {
        let spec = TransformSpec {
            normalize_mean: vec![100.0 / 255.0],
            normalize_std: vec![1.0],
            ..spec(4, 4)
        };
        let out = transform_image(&spec, &[100u8; 16], 1, 4, 4, false).unwrap();
        assert!(out.iter().all(|&v| v.abs() < 1e-6));
    }

    #[test]
    fn center_crop_retains_central_window() {
        // 36×36 image, identity resize, crop 32 → rows/cols 2..=33 survive.
        let pixels: Vec<u8> = (0..36 * 36).map(|p| ((p / 36) * 5 + p % 36) as u8).collect();
        let out = transform_image(&spec(36, 32), &pixels, 1, 36, 36, false).unwrap();
        for r in 0..32 {
            for c in 0..32 {
                let expect = ((r + 2) * 5 + (c + 2)) as f32 / 255.0;
                assert!((out[r * 32 + c] - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn bilinear_upsample_2x2_to_4x4() {
        // Row [0, 255] upsamples to fractions [0, 0.25, 0.75, 1] of 255.
        let out = transform_image(&spec(4, 4), &[0, 255, 0, 255], 1, 2, 2, false).unwrap();
        let expect = [0.0, 0.25, 0.75, 1.0];
        for r in 0..4 {
            for c in 0..4 {
                assert!((out[r * 4 + c] - expect[c]).abs() < 1e-6, "r={r} c={c}");
            }
        }
    }

    #[test]
    fn bilinear_downsample_averages_pairs() {
        // Row [0,1,2,3] at half size → midpoints [0.5, 2.5] (of /255 values).
        let pixels = [0u8, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3];
        let out = transform_image(&spec(2, 2), &pixels, 1, 4, 4, false).unwrap();
        assert!((out[0] - 0.5 / 255.0).abs() < 1e-7);
        assert!((out[1] - 2.5 / 255.0).abs() < 1e-7);
    }

    #[test]
    fn flip_reverses_rows_and_is_involutive() {
        let mut data = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        flip_horizontal(&mut data, 1, 2, 3);
        assert_eq!(data, vec![3.0, 2.0, 1.0, 6.0, 5.0, 4.0]);
        flip_horizontal(&mut data, 1, 2, 3);
        assert_eq!(data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn sobel_constant_is_zero() {
        let t = Tensor::from_vec(&[1, 1, 5, 5], vec![0.7f32; 25]);
        let out = sobel(&t).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sobel_step_edge_lights_dx_only() {
        // Columns 0..3 are 0, columns 3..6 are 1: dx = 4 at the two boundary
        // columns, dy identically zero.
        let mut img = vec![0.0f32; 36];
        for r in 0..6 {
            for c in 3..6 {
                img[r * 6 + c] = 1.0;
            }
        }
        let out = sobel(&Tensor::from_vec(&[1, 1, 6, 6], img)).unwrap();
        let d = out.data();
        for r in 0..6 {
            for c in 0..6 {
                let expect = if c == 2 || c == 3 { 4.0 } else { 0.0 };
                assert_eq!(d[r * 6 + c], expect, "dx at r={r} c={c}");
                assert_eq!(d[36 + r * 6 + c], 0.0, "dy at r={r} c={c}");
            }
        }
    }

    #[test]
    fn sobel_uses_luminance_weights() {
        // Step edge in the green channel only scales the response by 0.587.
        let mut img = vec![0.0f32; 3 * 36];
        for r in 0..6 {
            for c in 3..6 {
                img[36 + r * 6 + c] = 1.0;
            }
        }
        let out = sobel(&Tensor::from_vec(&[1, 3, 6, 6], img)).unwrap();
        assert!((out.data()[2] - 4.0 * 0.587).abs() < 1e-5);
    }

    #[test]
    fn sobel_output_keeps_spatial_size() {
        let t = Tensor::from_vec(&[2, 3, 7, 9], vec![0.1f32; 2 * 3 * 63]);
        assert_eq!(sobel(&t).unwrap().shape(), &[2, 2, 7, 9]);
    }

    #[test]
    fn cluster_phase_is_deterministic_and_train_flips() {
        let images: Vec<u8> = (0..40 * 16).map(|v| (v * 7 % 256) as u8).collect();
        let ds = ImageDataset::new(40, 1, 4, 4, images, None, 10, Split::Train).unwrap();
        let spec = TransformSpec { horizontal_flip: true, ..spec(4, 4) };
        let a = transform_dataset(&ds, &spec, Phase::Cluster, 1).unwrap();
        let b = transform_dataset(&ds, &spec, Phase::Cluster, 2).unwrap();
        assert_eq!(a.data(), b.data(), "cluster phase ignores the seed");
        let t1 = transform_dataset(&ds, &spec, Phase::Train, 7).unwrap();
        let t2 = transform_dataset(&ds, &spec, Phase::Train, 7).unwrap();
        assert_eq!(t1.data(), t2.data(), "same seed, same flips");
        let t3 = transform_dataset(&ds, &spec, Phase::Train, 8).unwrap();
        assert_ne!(t1.data(), t3.data(), "different seed flips different images");
    }

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(spec(28, 32).validate(1).is_err(), "crop exceeds resize");
        let bad_std = TransformSpec { normalize_std: vec![0.0], ..spec(4, 4) };
        assert!(bad_std.validate(1).is_err());
        let bad_mean = TransformSpec { normalize_mean: vec![0.1, 0.2], ..spec(4, 4) };
        assert!(bad_mean.validate(3).is_err(), "2 means for 3 channels");
        let sobel_4ch = TransformSpec { sobel: true, ..spec(4, 4) };
        assert!(sobel_4ch.validate(4).is_err());
    }
}
