//! BSIF code maps: wrap-around correlation with every filter of a bank,
//! binarized at zero and packed into one n-bit code per pixel.

use crate::bsif::FilterBank;
use crate::error::{Error, Result};
use crate::imgio::GrayImage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeMap {
    width: usize,
    height: usize,
    bits: usize,
    codes: Vec<u16>,
}

impl CodeMap {
    pub fn new(width: usize, height: usize, bits: usize, codes: Vec<u16>) -> Result<Self> {
        if codes.len() != width * height {
            return Err(Error::Validation(format!(
                "code buffer holds {} values, expected {}",
                codes.len(),
                width * height
            )));
        }
        if let Some(c) = codes.iter().find(|&&c| (c as usize) >> bits != 0) {
            return Err(Error::Validation(format!("code {c} does not fit in {bits} bits")));
        }
        Ok(CodeMap {
            width,
            height,
            bits,
            codes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn codes(&self) -> &[u16] {
        &self.codes
    }

    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.codes[y * self.width + x]
    }
}

/// Pixel intensities as f64 with an `r`-pixel wrap-around border on all sides.
fn wrap_pad(img: &GrayImage, r: usize) -> (Vec<f64>, usize) {
    let (w, h) = (img.width(), img.height());
    let pw = w + 2 * r;
    let mut padded = Vec::with_capacity(pw * (h + 2 * r));
    for py in 0..h + 2 * r {
        let sy = (py + h - r) % h;
        let row = &img.data()[sy * w..(sy + 1) * w];
        for px in 0..pw {
            padded.push(row[(px + w - r) % w] as f64);
        }
    }
    (padded, pw)
}

const BLOCK: usize = 8;
const GROUP: usize = 4;

/// Responses of one group of `NF` filters for pixels `x0..x0+BLOCK` of
/// output row `y`. `group_coeffs` is offset-major (`k * NF + f`).
///
/// Every output sums its terms in row-major offset order with one fused
/// multiply-add per term, starting from zero; vector lanes and the scalar
/// tail therefore produce identical bits. The centre offset contributes an
/// exact zero and is not skipped.
#[inline(always)]
fn tile<const NF: usize>(
    padded: &[f64],
    pw: usize,
    s: usize,
    group_coeffs: &[f64],
    y: usize,
    x0: usize,
) -> [[f64; BLOCK]; NF] {
    let r = s / 2;
    let mut acc = [[0.0f64; BLOCK]; NF];
    let cstart = (y + r) * pw + r + x0;
    let centre: &[f64; BLOCK] = padded[cstart..cstart + BLOCK].try_into().unwrap();
    for dy in 0..s {
        let start = (y + dy) * pw + x0;
        let row = &padded[start..start + s - 1 + BLOCK];
        let coeff_row = &group_coeffs[dy * s * NF..(dy + 1) * s * NF];
        for (win, cs) in row.windows(BLOCK).zip(coeff_row.chunks_exact(NF)) {
            let seg: &[f64; BLOCK] = win.try_into().unwrap();
            let cs: &[f64; NF] = cs.try_into().unwrap();
            let mut diff = [0.0f64; BLOCK];
            for b in 0..BLOCK {
                diff[b] = seg[b] - centre[b];
            }
            for f in 0..NF {
                for b in 0..BLOCK {
                    acc[f][b] = cs[f].mul_add(diff[b], acc[f][b]);
                }
            }
        }
    }
    acc
}

/// Filters split into groups of at most `GROUP`, each stored offset-major.
fn grouped_coeffs(bank: &FilterBank) -> Vec<(usize, usize, Vec<f64>)> {
    let n = bank.bits();
    let area = bank.size() * bank.size();
    let mut groups = Vec::new();
    let mut f0 = 0;
    while f0 < n {
        let nf = (n - f0).min(GROUP);
        let mut gc = vec![0.0; area * nf];
        for f in 0..nf {
            for (k, &c) in bank.filter(f0 + f).iter().enumerate() {
                gc[k * nf + f] = c;
            }
        }
        groups.push((f0, nf, gc));
        f0 += nf;
    }
    groups
}

#[inline(always)]
fn set_bits<const NF: usize>(out: &mut [u16], resp: &[[f64; BLOCK]; NF], f0: usize) {
    for (f, rf) in resp.iter().enumerate() {
        for (o, &v) in out.iter_mut().zip(rf) {
            *o |= ((v > 0.0) as u16) << (f0 + f);
        }
    }
}

#[inline(always)]
fn code_rows(padded: &[f64], pw: usize, w: usize, h: usize, bank: &FilterBank, codes: &mut [u16]) {
    let s = bank.size();
    let r = s / 2;
    let groups = grouped_coeffs(bank);
    for y in 0..h {
        let out_row = &mut codes[y * w..(y + 1) * w];
        let mut x0 = 0;
        while x0 + BLOCK <= w {
            let out = &mut out_row[x0..x0 + BLOCK];
            for (f0, nf, gc) in &groups {
                match nf {
                    4 => set_bits(out, &tile::<4>(padded, pw, s, gc, y, x0), *f0),
                    3 => set_bits(out, &tile::<3>(padded, pw, s, gc, y, x0), *f0),
                    2 => set_bits(out, &tile::<2>(padded, pw, s, gc, y, x0), *f0),
                    _ => set_bits(out, &tile::<1>(padded, pw, s, gc, y, x0), *f0),
                }
            }
            x0 += BLOCK;
        }
        for x in x0..w {
            let centre = padded[(y + r) * pw + r + x];
            let mut code = 0u16;
            for f in 0..bank.bits() {
                let filter = bank.filter(f);
                let mut acc = 0.0f64;
                for dy in 0..s {
                    for dx in 0..s {
                        let p = padded[(y + dy) * pw + x + dx];
                        acc = filter[dy * s + dx].mul_add(p - centre, acc);
                    }
                }
                code |= ((acc > 0.0) as u16) << f;
            }
            out_row[x] = code;
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn code_rows_avx2(padded: &[f64], pw: usize, w: usize, h: usize, bank: &FilterBank, codes: &mut [u16]) {
    code_rows(padded, pw, w, h, bank, codes)
}

/// Compute the BSIF code of every pixel.
///
/// Filter `i` (0-based) is correlated, without flipping, with the s x s
/// neighbourhood centred on the pixel; bit `i` is set iff the response is
/// strictly positive. Each neighbourhood is taken relative to its centre
/// pixel: the filters have zero mean, so this leaves the response unchanged
/// while making flat neighbourhoods produce an exact zero.
pub fn compute_code_map(img: &GrayImage, bank: &FilterBank) -> Result<CodeMap> {
    let s = bank.size();
    let (w, h) = (img.width(), img.height());
    if w < s || h < s {
        return Err(Error::Validation(format!(
            "{w}x{h} image is smaller than the {s}x{s} filter"
        )));
    }
    let (padded, pw) = wrap_pad(img, s / 2);
    let mut codes = vec![0u16; w * h];

    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            // SAFETY: the CPU supports AVX2 and FMA, checked above.
            unsafe { code_rows_avx2(&padded, pw, w, h, bank, &mut codes) };
            return CodeMap::new(w, h, bank.bits(), codes);
        }
    }
    code_rows(&padded, pw, w, h, bank, &mut codes);
    CodeMap::new(w, h, bank.bits(), codes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsif::synthesize_filter_bank;

    #[test]
    fn constant_image_codes_zero() {
        for &s in &crate::bsif::NATIVE_SIZES {
            let bank = synthesize_filter_bank(s, 8, 9).unwrap();
            let img = GrayImage::filled(40, 36, 201).unwrap();
            let map = compute_code_map(&img, &bank).unwrap();
            assert!(map.codes().iter().all(|&c| c == 0));
        }
    }

    #[test]
    fn too_small_image() {
        let bank = synthesize_filter_bank(7, 8, 9).unwrap();
        let img = GrayImage::filled(6, 20, 1).unwrap();
        assert!(matches!(compute_code_map(&img, &bank), Err(Error::Validation(_))));
    }

    #[test]
    fn filter_equal_to_image_size_is_allowed() {
        let bank = synthesize_filter_bank(5, 6, 9).unwrap();
        let img = GrayImage::from_fn(5, 5, |x, y| (x * 40 + y * 3) as u8).unwrap();
        let map = compute_code_map(&img, &bank).unwrap();
        assert!(map.codes().iter().all(|&c| c < 64));
    }

    #[test]
    fn code_map_rejects_out_of_range() {
        assert!(CodeMap::new(1, 1, 5, vec![32]).is_err());
        assert!(CodeMap::new(1, 1, 5, vec![31]).is_ok());
    }
}
