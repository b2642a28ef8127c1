//! BSIF filter banks: n zero-mean s x s filters for one scale.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fsutil;

/// Native filter side lengths.
pub const NATIVE_SIZES: [usize; 8] = [3, 5, 7, 9, 11, 13, 15, 17];
pub const MIN_BITS: usize = 5;
pub const MAX_BITS: usize = 12;
pub const DEFAULT_BITS: usize = 8;

const ZERO_MEAN_TOL: f64 = 1e-9;
const MAX_SYNTH_ATTEMPTS: usize = 8;

/// Whether `(size, bits)` is one of the 60 combinations with published filters.
pub fn is_valid_combination(size: usize, bits: usize) -> bool {
    NATIVE_SIZES.contains(&size) && (MIN_BITS..=MAX_BITS).contains(&bits) && !(size == 3 && bits > 8)
}

fn check_combination(size: usize, bits: usize) -> Result<()> {
    if is_valid_combination(size, bits) {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "no BSIF filter set exists for {size}x{size} with {bits} bits"
        )))
    }
}

pub fn filter_file_name(size: usize, bits: usize) -> String {
    format!("ICAtextureFilters_{size}x{size}_{bits}bit.txt")
}

pub fn filter_file_path(dir: &Path, size: usize, bits: usize) -> PathBuf {
    dir.join(filter_file_name(size, bits))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    size: usize,
    bits: usize,
    /// Filter-major, each filter row-major.
    coeffs: Vec<f64>,
}

impl FilterBank {
    pub fn new(size: usize, bits: usize, coeffs: Vec<f64>) -> Result<Self> {
        check_combination(size, bits)?;
        let area = size * size;
        if coeffs.len() != bits * area {
            return Err(Error::Format(format!(
                "expected {} coefficients for {bits} filters of {size}x{size}, found {}",
                bits * area,
                coeffs.len()
            )));
        }
        if let Some(v) = coeffs.iter().find(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite filter coefficient {v}")));
        }
        for (i, filter) in coeffs.chunks_exact(area).enumerate() {
            let mean = filter.iter().sum::<f64>() / area as f64;
            if mean.abs() > ZERO_MEAN_TOL {
                return Err(Error::Validation(format!(
                    "filter {} of the {size}x{size} bank has mean {mean:e}, expected zero",
                    i + 1
                )));
            }
            if filter.iter().all(|&v| v == 0.0) {
                return Err(Error::Validation(format!(
                    "filter {} of the {size}x{size} bank is identically zero",
                    i + 1
                )));
            }
        }
        Ok(FilterBank { size, bits, coeffs })
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn bits(&self) -> usize {
        self.bits
    }

    #[inline]
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficients of filter `i` (0-based), row-major.
    pub fn filter(&self, i: usize) -> &[f64] {
        let area = self.size * self.size;
        &self.coeffs[i * area..(i + 1) * area]
    }

    /// Parse the text asset format: `"<n> <s>"` then n*s*s reals.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut header = |what: &str| -> Result<usize> {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::Format(format!("filter file is missing the {what} header field")))?;
            tok.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad {what} header field `{tok}`")))
        };
        let bits = header("bit depth")?;
        let size = header("filter size")?;
        check_combination(size, bits)?;
        let coeffs = tokens
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad filter coefficient `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        FilterBank::new(size, bits, coeffs)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.bits, self.size);
        for filter in self.coeffs.chunks_exact(self.size * self.size) {
            for row in filter.chunks_exact(self.size) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, self.to_text().as_bytes())
    }
}

pub fn load_filter_bank(path: &Path) -> Result<FilterBank> {
    let text = fsutil::read_to_string(path)?;
    FilterBank::parse(&text).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Deterministic stand-in for ICA-learned filters: uniform random vectors with
/// the constant component projected out, orthonormalized in draw order.
pub fn synthesize_filter_bank(size: usize, bits: usize, seed: u64) -> Result<FilterBank> {
    check_combination(size, bits)?;
    let area = size * size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(bits);
    let mut rejected = 0;

    while basis.len() < bits {
        let mut v: Vec<f64> = (0..area).map(|_| rng.gen_range(-1.0..1.0)).collect();
        remove_mean(&mut v);
        // Two Gram-Schmidt passes keep the basis orthogonal to ~1e-15.
        for _ in 0..2 {
            for b in &basis {
                let d = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        remove_mean(&mut v);
        let norm = dot(&v, &v).sqrt();
        if norm < 1e-6 {
            rejected += 1;
            if rejected >= MAX_SYNTH_ATTEMPTS {
                return Err(Error::Validation(format!(
                    "could not draw {bits} independent zero-mean {size}x{size} filters"
                )));
            }
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }

    FilterBank::new(size, bits, basis.concat())
}

fn remove_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
