//! Digit datasets: IDX parsing, pixel scaling, digit filtering, and seeded
//! batch sampling.
//!
//! A [`LabeledSet`] holds scaled images (one row per sample, pixels in
//! `[0, 1]`) together with their digit labels and a train/test tag. Sets are
//! immutable after construction; filtering and sampling return new sets.

pub mod idx;
pub mod synth;

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::SeededRng;

pub use idx::{RawImages, IMAGE_PIXELS, IMAGE_SIDE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Scaled images plus labels for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    images: Matrix,
    labels: Vec<u8>,
    split: Split,
}

impl LabeledSet {
    /// Build a set from already-scaled images. Validates that every pixel is
    /// in `[0, 1]`, that labels pair up with image rows, and that every
    /// label is a digit.
    pub fn new(images: Matrix, labels: Vec<u8>, split: Split) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} image rows but {} labels",
                images.rows(),
                labels.len()
            )));
        }
        if images.rows() > 0 && images.cols() != IMAGE_PIXELS {
            return Err(Error::invalid(format!(
                "expected {IMAGE_PIXELS} pixels per image, got {}",
                images.cols()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
            return Err(Error::invalid(format!("label {bad} outside 0..=9")));
        }
        if images.data().iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::invalid("pixel outside [0, 1]"));
        }
        Ok(Self {
            images,
            labels,
            split,
        })
    }

    /// Parse paired IDX image/label byte buffers and scale pixels to `[0, 1]`.
    pub fn from_idx_bytes(image_bytes: &[u8], label_bytes: &[u8], split: Split) -> Result<Self> {
        let raw = idx::parse_images(image_bytes)?;
        let labels = idx::parse_labels(label_bytes)?;
        if raw.count != labels.len() {
            return Err(idx::IdxError::CountMismatch {
                images: raw.count,
                labels: labels.len(),
            }
            .into());
        }
        Ok(Self {
            images: scale_pixels(&raw),
            labels,
            split,
        })
    }

    pub fn from_idx_files(
        image_path: impl AsRef<Path>,
        label_path: impl AsRef<Path>,
        split: Split,
    ) -> Result<Self> {
        let image_bytes = std::fs::read(image_path)?;
        let label_bytes = std::fs::read(label_path)?;
        Self::from_idx_bytes(&image_bytes, &label_bytes, split)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn images(&self) -> &Matrix {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &[f64] {
        self.images.row(i)
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn counts_by_digit(&self) -> [usize; 10] {
        let mut counts = [0usize; 10];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Consume the set, handing the image matrix over without a copy.
    pub fn into_parts(self) -> (Matrix, Vec<u8>) {
        (self.images, self.labels)
    }

    /// Row indices of all samples whose label is in `digits`, in order.
    pub fn indices_of_digits(&self, digits: &[u8]) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| digits.contains(&self.labels[i]))
            .collect()
    }

    /// Keep exactly the samples whose label is in `digits`, in order.
    pub fn filter_by_digits(&self, digits: &[u8]) -> LabeledSet {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| digits.contains(&self.labels[i]))
            .collect();
        self.subset(&keep)
    }

    /// Draw `n` samples uniformly with replacement.
    pub fn sample_batch(&self, n: usize, rng: &mut SeededRng) -> Result<LabeledSet> {
        if self.is_empty() && n > 0 {
            return Err(Error::EmptySet("cannot sample from an empty set"));
        }
        let picks: Vec<usize> = (0..n).map(|_| rng.index(self.len().max(1))).collect();
        Ok(self.subset(&picks))
    }

    /// New set holding the given rows (indices may repeat).
    pub fn subset(&self, indices: &[usize]) -> LabeledSet {
        let mut data = Vec::with_capacity(indices.len() * IMAGE_PIXELS);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.images.row(i));
            labels.push(self.labels[i]);
        }
        LabeledSet {
            images: Matrix::from_vec(indices.len(), IMAGE_PIXELS, data)
                .expect("subset dimensions are consistent"),
            labels,
            split: self.split,
        }
    }

    /// Re-encode as raw IDX bytes. Pixel values were produced by `byte/255`,
    /// so rounding back recovers the original bytes exactly.
    pub fn to_idx_bytes(&self) -> (Vec<u8>, Vec<u8>) {
        let pixels: Vec<u8> = self
            .images
            .data()
            .iter()
            .map(|&p| (p * 255.0).round() as u8)
            .collect();
        let raw = RawImages {
            count: self.len(),
            pixels,
        };
        (idx::write_images(&raw), idx::write_labels(&self.labels))
    }
}

/// Scale raw 8-bit pixels to `[0, 1]` by dividing by 255.
pub fn scale_pixels(raw: &RawImages) -> Matrix {
    let data: Vec<f64> = raw.pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    Matrix::from_vec(raw.count, IMAGE_PIXELS, data).expect("raw image payload length")
}

/// The split of the ten digits into pre-training and novel ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitPartition {
    pretrain: Vec<u8>,
    novel: Vec<u8>,
}

impl DigitPartition {
    /// Partition with the given novel digits; the pre-training digits are
    /// the complement. Novel digits must be distinct and leave at least one
    /// digit for pre-training.
    pub fn new(novel: &[u8]) -> Result<Self> {
        if novel.is_empty() || novel.len() > 9 {
            return Err(Error::invalid("novel digit set must have 1..=9 digits"));
        }
        let mut novel = novel.to_vec();
        novel.sort_unstable();
        if novel.iter().any(|&d| d > 9) {
            return Err(Error::invalid("novel digits must be in 0..=9"));
        }
        if novel.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("novel digits must be distinct"));
        }
        let pretrain: Vec<u8> = (0..=9).filter(|d| !novel.contains(d)).collect();
        Ok(Self { pretrain, novel })
    }

    pub fn pretrain_digits(&self) -> &[u8] {
        &self.pretrain
    }

    pub fn novel_digits(&self) -> &[u8] {
        &self.novel
    }
}

impl Default for DigitPartition {
    /// Digits 2 and 8 are withheld from pre-training.
    fn default() -> Self {
        Self::new(&[2, 8]).expect("default partition is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_set(labels: &[u8]) -> LabeledSet {
        let n = labels.len();
        let mut data = vec![0.0; n * IMAGE_PIXELS];
        for (i, &l) in labels.iter().enumerate() {
            // Give each sample a distinguishable pixel.
            data[i * IMAGE_PIXELS + l as usize] = 1.0;
        }
        LabeledSet::new(
            Matrix::from_vec(n, IMAGE_PIXELS, data).unwrap(),
            labels.to_vec(),
            Split::Train,
        )
        .unwrap()
    }

    #[test]
    fn scale_pixels_boundary_values() {
        let raw = RawImages {
            count: 1,
            pixels: {
                let mut p = vec![0u8; IMAGE_PIXELS];
                p[0] = 0;
                p[1] = 255;
                p[2] = 51;
                p
            },
        };
        let m = scale_pixels(&raw);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(0, 2), 51.0 / 255.0);
        assert_eq!(m.get(0, 2), 0.2);
    }

    #[test]
    fn filter_by_all_digits_is_identity() {
        let set = tiny_set(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 2, 8]);
        let all: Vec<u8> = (0..=9).collect();
        assert_eq!(set.filter_by_digits(&all), set);
    }

    #[test]
    fn filter_by_empty_set_is_empty() {
        let set = tiny_set(&[1, 2, 3]);
        assert!(set.filter_by_digits(&[]).is_empty());
    }

    #[test]
    fn filter_preserves_order_and_partitions() {
        let set = tiny_set(&[0, 2, 5, 8, 2, 9]);
        let novel = set.filter_by_digits(&[2, 8]);
        assert_eq!(novel.labels(), &[2, 8, 2]);
        let old = set.filter_by_digits(&[0, 1, 3, 4, 5, 6, 7, 9]);
        assert_eq!(old.labels(), &[0, 5, 9]);
        assert_eq!(novel.len() + old.len(), set.len());
    }

    #[test]
    fn sample_batch_zero_is_empty() {
        let set = tiny_set(&[1]);
        let mut rng = SeededRng::new(1);
        assert!(set.sample_batch(0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn sample_batch_from_singleton_repeats() {
        let set = tiny_set(&[7]);
        let mut rng = SeededRng::new(1);
        let batch = set.sample_batch(5, &mut rng).unwrap();
        assert_eq!(batch.labels(), &[7, 7, 7, 7, 7]);
        assert_eq!(batch.image(0), batch.image(4));
    }

    #[test]
    fn sample_batch_is_deterministic() {
        let set = tiny_set(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
        let a = set.sample_batch(32, &mut SeededRng::new(99)).unwrap();
        let b = set.sample_batch(32, &mut SeededRng::new(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_batch_from_empty_errors() {
        let set = tiny_set(&[]);
        let mut rng = SeededRng::new(1);
        assert!(set.sample_batch(1, &mut rng).is_err());
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        let set = tiny_set(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
        let mut rng = SeededRng::new(5);
        let mut counts = [0usize; 10];
        let draws = 100_000;
        for _ in 0..draws {
            counts[rng.index(set.len())] += 1;
        }
        let expected = draws as f64 / 10.0;
        for &c in &counts {
            let dev = (c as f64 - expected).abs() / expected;
            assert!(dev < 0.05, "frequency deviates {dev:.3} from uniform");
        }
    }

    #[test]
    fn labeled_set_roundtrips_through_idx() {
        let raw = RawImages {
            count: 4,
            pixels: (0..4 * IMAGE_PIXELS).map(|i| (i % 256) as u8).collect(),
        };
        let labels = vec![0, 3, 7, 9];
        let image_bytes = idx::write_images(&raw);
        let label_bytes = idx::write_labels(&labels);
        let set = LabeledSet::from_idx_bytes(&image_bytes, &label_bytes, Split::Test).unwrap();
        let (image_bytes2, label_bytes2) = set.to_idx_bytes();
        assert_eq!(image_bytes, image_bytes2);
        assert_eq!(label_bytes, label_bytes2);
    }

    #[test]
    fn every_byte_value_survives_scaling_roundtrip() {
        for b in 0u16..=255 {
            let p = f64::from(b) / 255.0;
            assert_eq!((p * 255.0).round() as u16, b);
        }
    }

    #[test]
    fn mismatched_image_label_counts_error() {
        let raw = RawImages {
            count: 2,
            pixels: vec![0; 2 * IMAGE_PIXELS],
        };
        let err = LabeledSet::from_idx_bytes(
            &idx::write_images(&raw),
            &idx::write_labels(&[1]),
            Split::Train,
        )
        .unwrap_err();
        assert!(err.to_string().contains("mismatch"));
    }

    #[test]
    fn default_partition_is_2_and_8() {
        let p = DigitPartition::default();
        assert_eq!(p.novel_digits(), &[2, 8]);
        assert_eq!(p.pretrain_digits(), &[0, 1, 3, 4, 5, 6, 7, 9]);
    }

    #[test]
    fn partition_is_disjoint_and_complete() {
        let p = DigitPartition::new(&[9, 0]).unwrap();
        let mut all: Vec<u8> = p
            .pretrain_digits()
            .iter()
            .chain(p.novel_digits())
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..=9).collect::<Vec<u8>>());
    }

    #[test]
    fn partition_rejects_duplicates_and_out_of_range() {
        assert!(DigitPartition::new(&[2, 2]).is_err());
        assert!(DigitPartition::new(&[10]).is_err());
        assert!(DigitPartition::new(&[]).is_err());
    }
}
