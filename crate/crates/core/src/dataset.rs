//! Fashion-MNIST ingestion: IDX parsing, train/validation partitioning and
//! stratified subsampling for small-scale runs.
//!
//! IDX layout (all integers big-endian):
//!
//! ```text
//! images: 0x00000803 | n | rows | cols | n*rows*cols bytes, row-major
//! labels: 0x00000801 | n | n bytes
//! ```
//!
//! Both files may be gzip-compressed; compression is detected from the
//! `0x1F 0x8B` prefix rather than the file name.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;
pub const NUM_CLASSES: usize = 10;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Fraction of the training pool moved into the validation split
/// (9000 of 60000).
pub const VALID_FRACTION: f64 = 0.15;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("truncated payload in {what}: expected {expected} bytes, found {found}")]
    Truncated {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A 28×28 grayscale image with its class label.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    pub pixels: [u8; PIXELS],
    pub label: u8,
}

impl Image {
    pub fn new(pixels: [u8; PIXELS], label: u8) -> Self {
        debug_assert!((label as usize) < NUM_CLASSES);
        Self { pixels, label }
    }

    pub fn blank(label: u8) -> Self {
        Self::new([0; PIXELS], label)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * SIDE + col]
    }

    /// Pixels scaled to `[0, 1]`, the classifier input encoding.
    pub fn write_features(&self, out: &mut [f64]) {
        for (o, &p) in out.iter_mut().zip(self.pixels.iter()) {
            *o = f64::from(p) / 255.0;
        }
    }
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sum: u64 = self.pixels.iter().map(|&p| u64::from(p)).sum();
        f.debug_struct("Image")
            .field("label", &self.label)
            .field("pixel_sum", &sum)
            .finish()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataSplit {
    pub train: Vec<Image>,
    pub valid: Vec<Image>,
    pub test: Vec<Image>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl DataSplit {
    pub fn sizes(&self) -> SplitSizes {
        SplitSizes {
            train: self.train.len(),
            valid: self.valid.len(),
            test: self.test.len(),
        }
    }
}

fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>, DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let raw = fs::read(path).map_err(io_err)?;
    if raw.len() >= 2 && raw[0] == 0x1F && raw[1] == 0x8B {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(io_err)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Parses an image/label IDX pair already held in memory (decompressed).
pub fn parse_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Vec<Image>, DatasetError> {
    if image_bytes.len() < 16 {
        return Err(DatasetError::Truncated {
            what: "image header",
            expected: 16,
            found: image_bytes.len(),
        });
    }
    if label_bytes.len() < 8 {
        return Err(DatasetError::Truncated {
            what: "label header",
            expected: 8,
            found: label_bytes.len(),
        });
    }
    let image_magic = be_u32(image_bytes, 0);
    if image_magic != IMAGE_MAGIC {
        return Err(DatasetError::Format(format!(
            "image magic 0x{image_magic:08X}, expected 0x{IMAGE_MAGIC:08X}"
        )));
    }
    let label_magic = be_u32(label_bytes, 0);
    if label_magic != LABEL_MAGIC {
        return Err(DatasetError::Format(format!(
            "label magic 0x{label_magic:08X}, expected 0x{LABEL_MAGIC:08X}"
        )));
    }

    let n_images = be_u32(image_bytes, 4) as usize;
    let rows = be_u32(image_bytes, 8) as usize;
    let cols = be_u32(image_bytes, 12) as usize;
    let n_labels = be_u32(label_bytes, 4) as usize;
    if rows != SIDE || cols != SIDE {
        return Err(DatasetError::Format(format!(
            "images are {rows}x{cols}, expected {SIDE}x{SIDE}"
        )));
    }
    if n_images != n_labels {
        return Err(DatasetError::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }

    let pixel_bytes = n_images * PIXELS;
    if image_bytes.len() - 16 < pixel_bytes {
        return Err(DatasetError::Truncated {
            what: "image payload",
            expected: pixel_bytes,
            found: image_bytes.len() - 16,
        });
    }
    if label_bytes.len() - 8 < n_labels {
        return Err(DatasetError::Truncated {
            what: "label payload",
            expected: n_labels,
            found: label_bytes.len() - 8,
        });
    }

    let pixels = &image_bytes[16..16 + pixel_bytes];
    let labels = &label_bytes[8..8 + n_labels];
    pixels
        .chunks_exact(PIXELS)
        .zip(labels)
        .enumerate()
        .map(|(i, (chunk, &label))| {
            if label as usize >= NUM_CLASSES {
                return Err(DatasetError::Format(format!(
                    "label {label} at index {i} outside 0..{NUM_CLASSES}"
                )));
            }
            let mut px = [0u8; PIXELS];
            px.copy_from_slice(chunk);
            Ok(Image::new(px, label))
        })
        .collect()
}

/// Loads an IDX image file and its label file, raw or gzip-compressed.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Vec<Image>, DatasetError> {
    let images = read_maybe_gzip(images_path.as_ref())?;
    let labels = read_maybe_gzip(labels_path.as_ref())?;
    parse_idx(&images, &labels)
}

/// Serializes images back into uncompressed `(image_file, label_file)` bytes.
pub fn to_idx_bytes(images: &[Image]) -> (Vec<u8>, Vec<u8>) {
    let n = images.len() as u32;
    let mut img = Vec::with_capacity(16 + images.len() * PIXELS);
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&n.to_be_bytes());
    img.extend_from_slice(&(SIDE as u32).to_be_bytes());
    img.extend_from_slice(&(SIDE as u32).to_be_bytes());
    let mut lbl = Vec::with_capacity(8 + images.len());
    lbl.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lbl.extend_from_slice(&n.to_be_bytes());
    for im in images {
        img.extend_from_slice(&im.pixels);
        lbl.push(im.label);
    }
    (img, lbl)
}

/// Number of validation images carved out of a pool of `n`.
pub fn valid_count(n: usize) -> usize {
    let v = (n as f64 * VALID_FRACTION).round() as usize;
    v.clamp(1, n.saturating_sub(1))
}

/// Shuffles the training pool with `seed` and partitions it 85/15 into
/// train and validation. The test set is carried through untouched.
pub fn split(
    train_pool: Vec<Image>,
    test: Vec<Image>,
    seed: u64,
) -> Result<DataSplit, DatasetError> {
    if train_pool.len() < 2 {
        return Err(DatasetError::InvalidArgument(format!(
            "training pool needs at least 2 images, got {}",
            train_pool.len()
        )));
    }
    let mut pool = train_pool;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let n_valid = valid_count(pool.len());
    let valid = pool.split_off(pool.len() - n_valid);
    Ok(DataSplit {
        train: pool,
        valid,
        test,
    })
}

/// Picks `count` images balanced across classes. Each class is shuffled with
/// the stream, then classes are drained round-robin in ascending label order,
/// so per-class counts differ by at most one unless a class runs out.
pub fn stratified_pick(images: &[Image], count: usize, rng: &mut ChaCha8Rng) -> Vec<Image> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, im) in images.iter().enumerate() {
        by_class[im.label as usize].push(i);
    }
    for bucket in &mut by_class {
        bucket.shuffle(rng);
    }
    let count = count.min(images.len());
    let mut picked = Vec::with_capacity(count);
    let mut depth = 0;
    while picked.len() < count {
        for bucket in &by_class {
            if picked.len() == count {
                break;
            }
            if let Some(&i) = bucket.get(depth) {
                picked.push(images[i].clone());
            }
        }
        depth += 1;
    }
    picked
}

/// Shrinks a split to `n_train` training images; validation and test are
/// scaled by the same ratio. All three are class-stratified.
pub fn subsample(split: &DataSplit, n_train: usize, seed: u64) -> Result<DataSplit, DatasetError> {
    if n_train == 0 {
        return Err(DatasetError::InvalidArgument(
            "subsample size must be positive".into(),
        ));
    }
    if n_train > split.train.len() {
        return Err(DatasetError::InvalidArgument(format!(
            "subsample size {n_train} exceeds training split of {}",
            split.train.len()
        )));
    }
    if n_train == split.train.len() {
        return Ok(split.clone());
    }
    let ratio = n_train as f64 / split.train.len() as f64;
    let scaled = |n: usize| ((n as f64 * ratio).round() as usize).max(usize::from(n > 0));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = stratified_pick(&split.train, n_train, &mut rng);
    let valid = stratified_pick(&split.valid, scaled(split.valid.len()), &mut rng);
    let test = stratified_pick(&split.test, scaled(split.test.len()), &mut rng);
    Ok(DataSplit { train, valid, test })
}

pub fn class_histogram(images: &[Image]) -> [usize; NUM_CLASSES] {
    let mut h = [0; NUM_CLASSES];
    for im in images {
        h[im.label as usize] += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n: usize) -> Vec<Image> {
        (0..n)
            .map(|i| {
                let mut px = [0u8; PIXELS];
                for (j, p) in px.iter_mut().enumerate() {
                    *p = ((i * 31 + j * 7) % 256) as u8;
                }
                Image::new(px, (i % NUM_CLASSES) as u8)
            })
            .collect()
    }

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut out = magic.to_be_bytes().to_vec();
        for d in dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out
    }

    #[test]
    fn parses_hand_built_two_image_file() {
        let mut img = header(IMAGE_MAGIC, &[2, 28, 28]);
        let first: Vec<u8> = (0..PIXELS).map(|j| (j % 256) as u8).collect();
        let second: Vec<u8> = (0..PIXELS).map(|j| 255 - (j % 256) as u8).collect();
        img.extend_from_slice(&first);
        img.extend_from_slice(&second);
        let mut lbl = header(LABEL_MAGIC, &[2]);
        lbl.extend_from_slice(&[3, 9]);

        let images = parse_idx(&img, &lbl).unwrap();
        assert_eq!(images.len(), 2);
        assert_eq!(images[0].label, 3);
        assert_eq!(images[1].label, 9);
        assert_eq!(&images[0].pixels[..], &first[..]);
        assert_eq!(&images[1].pixels[..], &second[..]);
        assert_eq!(images[0].get(1, 0), 28);
    }

    #[test]
    fn empty_headers_give_empty_list() {
        let img = header(IMAGE_MAGIC, &[0, 28, 28]);
        let lbl = header(LABEL_MAGIC, &[0]);
        assert!(parse_idx(&img, &lbl).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_magic() {
        let img = header(0x0000_0801, &[0, 28, 28]);
        let lbl = header(LABEL_MAGIC, &[0]);
        assert!(matches!(parse_idx(&img, &lbl), Err(DatasetError::Format(_))));
        let img = header(IMAGE_MAGIC, &[0, 28, 28]);
        let lbl = header(IMAGE_MAGIC, &[0]);
        assert!(matches!(parse_idx(&img, &lbl), Err(DatasetError::Format(_))));
    }

    #[test]
    fn rejects_count_mismatch() {
        let mut img = header(IMAGE_MAGIC, &[1, 28, 28]);
        img.extend_from_slice(&[0; PIXELS]);
        let lbl = header(LABEL_MAGIC, &[2, 0]);
        assert!(matches!(
            parse_idx(&img, &lbl),
            Err(DatasetError::CountMismatch { images: 1, labels: 2 })
        ));
    }

    #[test]
    fn rejects_truncated_payload() {
        let mut img = header(IMAGE_MAGIC, &[2, 28, 28]);
        img.extend_from_slice(&[0; PIXELS + 10]);
        let mut lbl = header(LABEL_MAGIC, &[2]);
        lbl.extend_from_slice(&[0, 1]);
        assert!(matches!(
            parse_idx(&img, &lbl),
            Err(DatasetError::Truncated { .. })
        ));
    }

    #[test]
    fn rejects_out_of_range_label() {
        let mut img = header(IMAGE_MAGIC, &[1, 28, 28]);
        img.extend_from_slice(&[0; PIXELS]);
        let mut lbl = header(LABEL_MAGIC, &[1]);
        lbl.push(10);
        assert!(matches!(parse_idx(&img, &lbl), Err(DatasetError::Format(_))));
    }

    #[test]
    fn loads_gzip_and_raw_files() {
        use flate2::write::GzEncoder;
        use std::io::Write;

        let images = synthetic(5);
        let (img, lbl) = to_idx_bytes(&images);
        let dir = tempfile::tempdir().unwrap();
        let raw_img = dir.path().join("img");
        let raw_lbl = dir.path().join("lbl");
        fs::write(&raw_img, &img).unwrap();
        fs::write(&raw_lbl, &lbl).unwrap();
        assert_eq!(load_idx(&raw_img, &raw_lbl).unwrap(), images);

        let gz_img = dir.path().join("img.gz");
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&img).unwrap();
        fs::write(&gz_img, enc.finish().unwrap()).unwrap();
        assert_eq!(load_idx(&gz_img, &raw_lbl).unwrap(), images);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_idx("/nonexistent/a", "/nonexistent/b").unwrap_err();
        assert!(matches!(err, DatasetError::Io { .. }));
    }

    #[test]
    fn split_sizes() {
        assert_eq!(valid_count(60_000), 9_000);
        assert_eq!(60_000 - valid_count(60_000), 51_000);
        let s = split(synthetic(100), vec![], 1).unwrap();
        assert_eq!((s.train.len(), s.valid.len()), (85, 15));
        assert!(split(synthetic(1), vec![], 1).is_err());
        let s = split(synthetic(2), vec![], 1).unwrap();
        assert_eq!((s.train.len(), s.valid.len()), (1, 1));
    }

    #[test]
    fn split_is_deterministic_partition() {
        let pool = synthetic(200);
        let test = synthetic(3);
        let a = split(pool.clone(), test.clone(), 42).unwrap();
        let b = split(pool.clone(), test.clone(), 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.test, test);
        // the synthetic images are pairwise distinct, so multiset equality
        // of the union with the pool proves a partition.
        let mut union: Vec<Vec<u8>> = a
            .train
            .iter()
            .chain(&a.valid)
            .map(|i| i.pixels.to_vec())
            .collect();
        let mut original: Vec<Vec<u8>> = pool.iter().map(|i| i.pixels.to_vec()).collect();
        union.sort();
        original.sort();
        assert_eq!(union, original);
        let c = split(pool, test, 43).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn subsample_identity_and_errors() {
        let s = split(synthetic(100), synthetic(20), 3).unwrap();
        assert_eq!(subsample(&s, s.train.len(), 9).unwrap(), s);
        assert!(subsample(&s, 0, 9).is_err());
        assert!(subsample(&s, s.train.len() + 1, 9).is_err());
    }

    #[test]
    fn subsample_stratifies_balanced_pool() {
        let s = DataSplit {
            train: synthetic(5_000),
            valid: synthetic(900),
            test: synthetic(1_000),
        };
        let sub = subsample(&s, 2000, 5).unwrap();
        assert_eq!(class_histogram(&sub.train), [200; NUM_CLASSES]);
        assert_eq!(sub.valid.len(), 360);
        assert_eq!(sub.test.len(), 400);
        assert_eq!(sub, subsample(&s, 2000, 5).unwrap());
    }

    #[test]
    fn subsample_remainder_goes_to_low_labels() {
        let s = DataSplit {
            train: synthetic(1_000),
            valid: vec![],
            test: vec![],
        };
        let sub = subsample(&s, 23, 5).unwrap();
        // brute-force expectation: 2 each, plus one for labels 0,1,2
        let expected = [3, 3, 3, 2, 2, 2, 2, 2, 2, 2];
        assert_eq!(class_histogram(&sub.train), expected);
    }

    #[test]
    fn subsample_redistributes_when_a_class_runs_out() {
        // class 0 has only 2 images; the deficit is spread across the others
        let mut train: Vec<Image> = synthetic(1_000)
            .into_iter()
            .filter(|im| im.label != 0)
            .collect();
        train.extend(synthetic(20).into_iter().filter(|im| im.label == 0));
        let s = DataSplit {
            train,
            valid: vec![],
            test: vec![],
        };
        let sub = subsample(&s, 100, 1).unwrap();
        let h = class_histogram(&sub.train);
        assert_eq!(h.iter().sum::<usize>(), 100);
        assert_eq!(h[0], 2);
        let rest = &h[1..];
        assert!(rest.iter().max().unwrap() - rest.iter().min().unwrap() <= 1);
    }
}
