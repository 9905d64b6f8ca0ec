//! The nine grayscale augmentations and the binary mask selecting them.

pub mod kernels;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::dataset::Image;

pub const NUM_AUGMENTATIONS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AugmentationId {
    Transpose = 0,
    Blur = 1,
    Downscale = 2,
    Equalize = 3,
    GaussNoise = 4,
    GaussianBlur = 5,
    InvertImg = 6,
    ShiftScaleRotate = 7,
    RandomRotate90 = 8,
}

impl AugmentationId {
    pub const ALL: [AugmentationId; NUM_AUGMENTATIONS] = [
        AugmentationId::Transpose,
        AugmentationId::Blur,
        AugmentationId::Downscale,
        AugmentationId::Equalize,
        AugmentationId::GaussNoise,
        AugmentationId::GaussianBlur,
        AugmentationId::InvertImg,
        AugmentationId::ShiftScaleRotate,
        AugmentationId::RandomRotate90,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            AugmentationId::Transpose => "Transpose",
            AugmentationId::Blur => "Blur",
            AugmentationId::Downscale => "Downscale",
            AugmentationId::Equalize => "Equalize",
            AugmentationId::GaussNoise => "GaussNoise",
            AugmentationId::GaussianBlur => "GaussianBlur",
            AugmentationId::InvertImg => "InvertImg",
            AugmentationId::ShiftScaleRotate => "ShiftScaleRotate",
            AugmentationId::RandomRotate90 => "RandomRotate90",
        }
    }
}

impl fmt::Display for AugmentationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AugmentError {
    #[error("augmentation vector must be 9 characters of '0'/'1', got {0:?}")]
    BadVector(String),
    #[error("invalid augmentation parameters: {0}")]
    BadParams(String),
}

/// Which augmentations a run applies. Text form is nine `0`/`1` characters,
/// index 0 leftmost.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct AugVector([bool; NUM_AUGMENTATIONS]);

impl AugVector {
    pub const ZERO: AugVector = AugVector([false; NUM_AUGMENTATIONS]);

    pub fn new(bits: [bool; NUM_AUGMENTATIONS]) -> Self {
        Self(bits)
    }

    /// Bit `i` of the mask corresponds to augmentation `i`.
    pub fn from_mask(mask: u16) -> Self {
        let mut bits = [false; NUM_AUGMENTATIONS];
        for (i, b) in bits.iter_mut().enumerate() {
            *b = mask & (1 << i) != 0;
        }
        Self(bits)
    }

    pub fn mask(&self) -> u16 {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .fold(0, |m, (i, _)| m | (1 << i))
    }

    pub fn from_ids(ids: &[AugmentationId]) -> Self {
        let mut bits = [false; NUM_AUGMENTATIONS];
        for id in ids {
            bits[id.index()] = true;
        }
        Self(bits)
    }

    pub fn bits(&self) -> &[bool; NUM_AUGMENTATIONS] {
        &self.0
    }

    pub fn is_set(&self, id: AugmentationId) -> bool {
        self.0[id.index()]
    }

    pub fn is_zero(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Active augmentations in ascending id order.
    pub fn active(&self) -> impl Iterator<Item = AugmentationId> + '_ {
        AugmentationId::ALL.into_iter().filter(|id| self.is_set(*id))
    }

    /// Design-matrix row: 1.0 where set.
    pub fn as_features(&self) -> [f64; NUM_AUGMENTATIONS] {
        self.0.map(|b| if b { 1.0 } else { 0.0 })
    }
}

impl fmt::Display for AugVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for AugVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AugVector({self})")
    }
}

impl FromStr for AugVector {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = s.as_bytes();
        if bytes.len() != NUM_AUGMENTATIONS {
            return Err(AugmentError::BadVector(s.to_string()));
        }
        let mut bits = [false; NUM_AUGMENTATIONS];
        for (b, &c) in bits.iter_mut().zip(bytes) {
            *b = match c {
                b'0' => false,
                b'1' => true,
                _ => return Err(AugmentError::BadVector(s.to_string())),
            };
        }
        Ok(Self(bits))
    }
}

impl Serialize for AugVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AugVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-augmentation application probabilities and kernel magnitudes.
///
/// Defaults follow the usual albumentations defaults where they are known;
/// the remaining magnitudes are fixed choices and get recorded alongside
/// every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationParams {
    /// Indexed by `AugmentationId`.
    pub probability: [f64; NUM_AUGMENTATIONS],
    pub blur_kernel_sizes: Vec<usize>,
    pub gaussian_blur_kernel_sizes: Vec<usize>,
    pub downscale_factor: f64,
    /// Noise variance range in gray-level² units.
    pub gauss_noise_var: (f64, f64),
    /// Shift as a fraction of the image side.
    pub shift_limit: f64,
    pub scale_limit: f64,
    pub rotate_limit_deg: f64,
}

impl Default for AugmentationParams {
    fn default() -> Self {
        Self {
            probability: [0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.8, 0.5],
            blur_kernel_sizes: vec![3, 5, 7],
            gaussian_blur_kernel_sizes: vec![3, 5, 7],
            downscale_factor: 0.25,
            gauss_noise_var: (10.0, 50.0),
            shift_limit: 0.0625,
            scale_limit: 0.1,
            rotate_limit_deg: 15.0,
        }
    }
}

impl AugmentationParams {
    /// Same magnitudes, every augmentation applied with certainty.
    pub fn always() -> Self {
        Self::default().with_probability(1.0)
    }

    pub fn never() -> Self {
        Self::default().with_probability(0.0)
    }

    pub fn with_probability(mut self, p: f64) -> Self {
        self.probability = [p; NUM_AUGMENTATIONS];
        self
    }

    pub fn p(&self, id: AugmentationId) -> f64 {
        self.probability[id.index()]
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: String| Err(AugmentError::BadParams(m));
        for (id, &p) in AugmentationId::ALL.iter().zip(&self.probability) {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability for {id} is {p}, outside [0, 1]"));
            }
        }
        for (name, sizes) in [
            ("blur_kernel_sizes", &self.blur_kernel_sizes),
            ("gaussian_blur_kernel_sizes", &self.gaussian_blur_kernel_sizes),
        ] {
            if sizes.is_empty() {
                return bad(format!("{name} is empty"));
            }
            if let Some(k) = sizes.iter().find(|&&k| k < 3 || k % 2 == 0) {
                return bad(format!("{name} contains {k}; sizes must be odd and >= 3"));
            }
        }
        if !(self.downscale_factor > 0.0 && self.downscale_factor <= 1.0) {
            return bad(format!(
                "downscale_factor {} outside (0, 1]",
                self.downscale_factor
            ));
        }
        let (lo, hi) = self.gauss_noise_var;
        if !(lo >= 0.0 && hi >= lo) {
            return bad(format!("gauss_noise_var ({lo}, {hi}) is not a range"));
        }
        for (name, v) in [
            ("shift_limit", self.shift_limit),
            ("scale_limit", self.scale_limit),
            ("rotate_limit_deg", self.rotate_limit_deg),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if self.scale_limit >= 1.0 {
            return bad("scale_limit must be below 1".into());
        }
        Ok(())
    }
}

/// Applies one augmentation with its configured probability. The coin is
/// always drawn first; kernel randomness is drawn only when it fires.
pub fn apply_one<R: Rng + ?Sized>(
    image: &Image,
    id: AugmentationId,
    params: &AugmentationParams,
    rng: &mut R,
) -> Image {
    let fire = rng.random::<f64>() < params.p(id);
    if !fire {
        return image.clone();
    }
    let pixels = kernels::apply_kernel(&image.pixels, id, params, rng);
    Image::new(pixels, image.label)
}

/// Chains the selected augmentations in ascending id order.
pub fn apply_vector<R: Rng + ?Sized>(
    image: &Image,
    v: &AugVector,
    params: &AugmentationParams,
    rng: &mut R,
) -> Image {
    let mut out = image.clone();
    for id in v.active() {
        out = apply_one(&out, id, params, rng);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gradient_image() -> Image {
        let mut px = [0u8; crate::dataset::PIXELS];
        for (i, p) in px.iter_mut().enumerate() {
            *p = ((i * 13) % 251) as u8;
        }
        Image::new(px, 4)
    }

    #[test]
    fn vector_text_form() {
        let v: AugVector = "100010111".parse().unwrap();
        assert_eq!(v.to_string(), "100010111");
        assert!(v.is_set(AugmentationId::Transpose));
        assert!(!v.is_set(AugmentationId::Blur));
        assert_eq!(v.count(), 5);
        assert_eq!(AugVector::from_mask(v.mask()), v);
        assert!("10001011".parse::<AugVector>().is_err());
        assert!("10001011x".parse::<AugVector>().is_err());
    }

    #[test]
    fn table_row_maps_to_zero_based_ids() {
        // a1,a5,a6,a8,a9 in one-based notation
        let v = AugVector::from_ids(&[
            AugmentationId::Transpose,
            AugmentationId::GaussNoise,
            AugmentationId::GaussianBlur,
            AugmentationId::ShiftScaleRotate,
            AugmentationId::RandomRotate90,
        ]);
        assert_eq!(v.to_string(), "100011011");
        let ids: Vec<usize> = v.active().map(|id| id.index()).collect();
        assert_eq!(ids, vec![0, 4, 5, 7, 8]);
    }

    #[test]
    fn serde_uses_bit_string() {
        let v: AugVector = "011000001".parse().unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, "\"011000001\"");
        assert_eq!(serde_json::from_str::<AugVector>(&json).unwrap(), v);
    }

    #[test]
    fn default_params_are_valid() {
        let p = AugmentationParams::default();
        p.validate().unwrap();
        assert_eq!(p.p(AugmentationId::ShiftScaleRotate), 0.8);
        assert_eq!(p.p(AugmentationId::InvertImg), 0.5);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = AugmentationParams::default();
        p.probability[2] = 1.5;
        assert!(p.validate().is_err());
        let mut p = AugmentationParams::default();
        p.blur_kernel_sizes = vec![3, 4];
        assert!(p.validate().is_err());
        let mut p = AugmentationParams::default();
        p.shift_limit = -0.1;
        assert!(p.validate().is_err());
    }

    #[test]
    fn zero_vector_is_identity() {
        let img = gradient_image();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = apply_vector(&img, &AugVector::ZERO, &AugmentationParams::always(), &mut rng);
        assert_eq!(out, img);
    }

    #[test]
    fn invert_twice_is_identity() {
        let img = gradient_image();
        let v = AugVector::from_ids(&[AugmentationId::InvertImg]);
        let params = AugmentationParams::always();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let once = apply_vector(&img, &v, &params, &mut rng);
        assert_ne!(once, img);
        assert_eq!(apply_vector(&once, &v, &params, &mut rng), img);
    }

    #[test]
    fn probability_zero_never_fires() {
        let img = gradient_image();
        let all = AugVector::from_mask(0x1FF);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            assert_eq!(apply_vector(&img, &all, &AugmentationParams::never(), &mut rng), img);
        }
    }

    #[test]
    fn probability_is_respected() {
        let img = gradient_image();
        let params = AugmentationParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fired = (0..2000)
            .filter(|_| apply_one(&img, AugmentationId::InvertImg, &params, &mut rng) != img)
            .count();
        assert!((900..1100).contains(&fired), "fired {fired} of 2000");
    }
}
