//! Histogram feature vectors and multi-scale extraction.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::bsif::{compute_code_map, filter_file_path, load_filter_bank, synthesize_filter_bank};
use crate::bsif::{CodeMap, FilterBank};
use crate::error::{Error, Result};
use crate::imgio::{downsample_half, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Resolution {
    Full,
    Half,
}

impl Resolution {
    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::Full => "full",
            Resolution::Half => "half",
        }
    }
}

/// One of the feature sets: a native filter size applied at full or half
/// resolution. Ordering is full-resolution first, then by filter size, which
/// is the fixed extraction order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScaleId {
    pub resolution: Resolution,
    pub size: usize,
}

impl ScaleId {
    pub fn full(size: usize) -> Self {
        ScaleId {
            resolution: Resolution::Full,
            size,
        }
    }

    pub fn half(size: usize) -> Self {
        ScaleId {
            resolution: Resolution::Half,
            size,
        }
    }

    /// Filter support measured in full-resolution pixels.
    pub fn effective_size(self) -> usize {
        match self.resolution {
            Resolution::Full => self.size,
            Resolution::Half => 2 * self.size,
        }
    }
}

/// Tags look like `full-7x7` and `half-14x14` (half-resolution tags carry the
/// effective size).
impl fmt::Display for ScaleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = self.effective_size();
        write!(f, "{}-{e}x{e}", self.resolution.as_str())
    }
}

impl FromStr for ScaleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("bad scale tag `{s}`"));
        let (res, dims) = s.trim().split_once('-').ok_or_else(bad)?;
        let (a, b) = dims.split_once('x').ok_or_else(bad)?;
        let a: usize = a.parse().map_err(|_| bad())?;
        let b: usize = b.parse().map_err(|_| bad())?;
        if a != b || a == 0 {
            return Err(bad());
        }
        match res {
            "full" => Ok(ScaleId::full(a)),
            "half" if a % 2 == 0 => Ok(ScaleId::half(a / 2)),
            _ => Err(bad()),
        }
    }
}

/// L1-normalized 2^n-bin histogram of BSIF codes for one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub scale: ScaleId,
    pub bits: usize,
    pub bins: Vec<f64>,
}

pub fn histogram_counts(map: &CodeMap) -> Vec<u64> {
    let mut counts = vec![0u64; 1 << map.bits()];
    for &c in map.codes() {
        counts[c as usize] += 1;
    }
    counts
}

pub fn histogram(map: &CodeMap, scale: ScaleId) -> FeatureVector {
    let total = (map.width() * map.height()) as f64;
    let bins = histogram_counts(map)
        .into_iter()
        .map(|c| c as f64 / total)
        .collect();
    FeatureVector {
        scale,
        bits: map.bits(),
        bins,
    }
}

/// Filter banks for every configured native size, all at one bit depth.
#[derive(Debug, Clone)]
pub struct FilterSet {
    bits: usize,
    banks: BTreeMap<usize, FilterBank>,
}

impl FilterSet {
    pub fn new(banks: Vec<FilterBank>) -> Result<Self> {
        let bits = banks
            .first()
            .map(FilterBank::bits)
            .ok_or_else(|| Error::Validation("filter set is empty".into()))?;
        let mut map = BTreeMap::new();
        for bank in banks {
            if bank.bits() != bits {
                return Err(Error::Validation(format!(
                    "mixed bit depths in filter set ({} and {bits})",
                    bank.bits()
                )));
            }
            if map.insert(bank.size(), bank).is_some() {
                return Err(Error::Validation("duplicate filter size in filter set".into()));
            }
        }
        Ok(FilterSet { bits, banks: map })
    }

    pub fn load(dir: &Path, bits: usize, sizes: &[usize]) -> Result<Self> {
        let banks = sizes
            .iter()
            .map(|&s| load_filter_bank(&filter_file_path(dir, s, bits)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(banks)
    }

    /// Seeded synthetic banks; each size draws from its own stream.
    pub fn synthesize(bits: usize, sizes: &[usize], seed: u64) -> Result<Self> {
        let banks = sizes
            .iter()
            .map(|&s| synthesize_filter_bank(s, bits, seed.wrapping_mul(1000).wrapping_add(s as u64)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(banks)
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.banks.keys().copied().collect()
    }

    pub fn banks(&self) -> impl Iterator<Item = &FilterBank> {
        self.banks.values()
    }

    /// Scale ids produced by [`extract_all`], in extraction order.
    pub fn scale_ids(&self) -> Vec<ScaleId> {
        let full = self.banks.keys().map(|&s| ScaleId::full(s));
        let half = self.banks.keys().map(|&s| ScaleId::half(s));
        full.chain(half).collect()
    }
}

/// Histograms at every configured scale for the image and its half-resolution
/// copy: full resolution in ascending filter size, then half resolution.
pub fn extract_all(img: &GrayImage, filters: &FilterSet) -> Result<Vec<FeatureVector>> {
    extract_with(img, filters, histogram)
}

/// As [`extract_all`] but with unnormalized bin counts.
pub fn extract_all_counts(img: &GrayImage, filters: &FilterSet) -> Result<Vec<FeatureVector>> {
    extract_with(img, filters, |map, scale| FeatureVector {
        scale,
        bits: map.bits(),
        bins: histogram_counts(map).into_iter().map(|c| c as f64).collect(),
    })
}

fn extract_with(
    img: &GrayImage,
    filters: &FilterSet,
    hist: impl Fn(&CodeMap, ScaleId) -> FeatureVector,
) -> Result<Vec<FeatureVector>> {
    let half = downsample_half(img)?;
    let mut out = Vec::with_capacity(2 * filters.banks.len());
    for (source, resolution) in [(img, Resolution::Full), (&half, Resolution::Half)] {
        for bank in filters.banks() {
            let map = compute_code_map(source, bank)?;
            out.push(hist(
                &map,
                ScaleId {
                    resolution,
                    size: bank.size(),
                },
            ));
        }
    }
    Ok(out)
}
