//! Deterministic surrogate iris images for exercising the pipeline without
//! restricted data. Bona fide images are band-limited smooth noise around a
//! dark pupil; attack images add a jittered dot lattice over the iris
//! annulus, with lattice period, angle and dot size varying by group.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bsif::{filter_file_path, FilterSet};
use crate::error::{Error, Result};
use crate::fsutil::create_dir_all;
use crate::imgio::{save_pgm, GrayImage};
use crate::pipeline::{Manifest, ManifestEntry};
use crate::svm::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// Images per class.
    pub count: usize,
    /// Images per class written to the test manifest; the rest go to the
    /// training manifest. Zero writes only the combined manifest.
    pub holdout: usize,
    pub seed: u64,
    /// Attack groups; attack image `i` belongs to group `i % groups`.
    pub groups: usize,
    pub width: usize,
    pub height: usize,
    /// Filter banks to synthesize alongside the images.
    pub bits: usize,
    pub filter_sizes: Vec<usize>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            count: 20,
            holdout: 0,
            seed: 1,
            groups: 1,
            width: 640,
            height: 480,
            bits: crate::bsif::DEFAULT_BITS,
            filter_sizes: crate::bsif::NATIVE_SIZES.to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub image_dir: PathBuf,
    pub filter_dir: PathBuf,
    pub manifest: PathBuf,
    pub train_manifest: Option<PathBuf>,
    pub test_manifest: Option<PathBuf>,
}

fn image_rng(seed: u64, label: Label, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match label {
        Label::BonaFide => 2 * index as u64,
        Label::Attack => 2 * index as u64 + 1,
    });
    rng
}

/// Value noise: random lattice values at spacing `cell`, smoothstep-blended.
fn add_value_noise(buf: &mut [f64], w: usize, h: usize, cell: usize, amp: f64, rng: &mut ChaCha8Rng) {
    let gw = w / cell + 2;
    let gh = h / cell + 2;
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    for y in 0..h {
        let gy = y / cell;
        let ty = smooth((y % cell) as f64 / cell as f64);
        for x in 0..w {
            let gx = x / cell;
            let tx = smooth((x % cell) as f64 / cell as f64);
            let v00 = lattice[gy * gw + gx];
            let v10 = lattice[gy * gw + gx + 1];
            let v01 = lattice[(gy + 1) * gw + gx];
            let v11 = lattice[(gy + 1) * gw + gx + 1];
            let top = v00 + (v10 - v00) * tx;
            let bottom = v01 + (v11 - v01) * tx;
            buf[y * w + x] += amp * (top + (bottom - top) * ty);
        }
    }
}

struct Geometry {
    cx: f64,
    cy: f64,
    pupil: f64,
    iris: f64,
}

fn base_texture(w: usize, h: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Geometry) {
    let mut buf = vec![rng.gen_range(100.0..140.0); w * h];
    let scale = (w.min(h) as f64 / 480.0).max(0.05);
    for (cell, amp) in [(96.0, 30.0), (48.0, 18.0), (24.0, 10.0), (12.0, 5.0)] {
        let cell = ((cell * scale) as usize).max(2);
        add_value_noise(&mut buf, w, h, cell, amp, rng);
    }
    let geo = Geometry {
        cx: w as f64 / 2.0 + rng.gen_range(-0.05..0.05) * w as f64,
        cy: h as f64 / 2.0 + rng.gen_range(-0.05..0.05) * h as f64,
        pupil: rng.gen_range(0.09..0.14) * h as f64,
        iris: rng.gen_range(0.38..0.44) * h as f64,
    };
    for y in 0..h {
        for x in 0..w {
            let r = ((x as f64 - geo.cx).powi(2) + (y as f64 - geo.cy).powi(2)).sqrt();
            // soft pupil edge over about 2 px
            let t = ((r - geo.pupil) / 2.0).clamp(-1.0, 1.0) * 0.5 + 0.5;
            let v = &mut buf[y * w + x];
            *v = 25.0 + (*v - 25.0) * t;
        }
    }
    (buf, geo)
}

fn add_dot_lattice(buf: &mut [f64], w: usize, h: usize, geo: &Geometry, group: usize, rng: &mut ChaCha8Rng) {
    let scale = (w.min(h) as f64 / 480.0).max(0.25);
    let period = (6.0 + 1.5 * (group % 4) as f64 + rng.gen_range(-0.4..0.4)) * scale;
    let angle = (group as f64 * 0.37 + rng.gen_range(-0.15..0.15)) % (PI / 2.0);
    let sigma = (0.9 + 0.2 * (group % 3) as f64 + rng.gen_range(-0.1..0.1)) * scale;
    let depth = rng.gen_range(45.0..70.0);
    let (u, v) = ((angle.cos(), angle.sin()), (-angle.sin(), angle.cos()));
    let n = (geo.iris / period).ceil() as i64 + 1;
    let reach = (3.0 * sigma).ceil() as i64;
    for a in -n..=n {
        for b in -n..=n {
            let (fa, fb) = (a as f64 * period, b as f64 * period);
            let px = geo.cx + fa * u.0 + fb * v.0 + rng.gen_range(-0.12..0.12) * period;
            let py = geo.cy + fa * u.1 + fb * v.1 + rng.gen_range(-0.12..0.12) * period;
            let amp = depth * rng.gen_range(0.7..1.0);
            let r = ((px - geo.cx).powi(2) + (py - geo.cy).powi(2)).sqrt();
            if r < geo.pupil + 2.0 * sigma || r > geo.iris {
                continue;
            }
            let (ix, iy) = (px.round() as i64, py.round() as i64);
            for y in (iy - reach).max(0)..=(iy + reach).min(h as i64 - 1) {
                for x in (ix - reach).max(0)..=(ix + reach).min(w as i64 - 1) {
                    let d2 = (x as f64 - px).powi(2) + (y as f64 - py).powi(2);
                    buf[y as usize * w + x as usize] -= amp * (-d2 / (2.0 * sigma * sigma)).exp();
                }
            }
        }
    }
}

fn quantize(buf: &[f64], w: usize, h: usize, rng: &mut ChaCha8Rng) -> Result<GrayImage> {
    let data = buf
        .iter()
        .map(|&v| (v + rng.gen_range(-2.0..2.0)).round().clamp(0.0, 255.0) as u8)
        .collect();
    GrayImage::new(w, h, data)
}

pub fn bonafide_image(width: usize, height: usize, seed: u64, index: usize) -> Result<GrayImage> {
    let mut rng = image_rng(seed, Label::BonaFide, index);
    let (buf, _) = base_texture(width, height, &mut rng);
    quantize(&buf, width, height, &mut rng)
}

pub fn attack_image(width: usize, height: usize, seed: u64, index: usize, group: usize) -> Result<GrayImage> {
    let mut rng = image_rng(seed, Label::Attack, index);
    let (mut buf, geo) = base_texture(width, height, &mut rng);
    add_dot_lattice(&mut buf, width, height, &geo, group, &mut rng);
    quantize(&buf, width, height, &mut rng)
}

pub fn image_name(label: Label, index: usize) -> String {
    format!("{}_{index:04}.pgm", label.as_str())
}

/// Write images, manifests and filter banks under `out_dir`:
/// `images/`, `filters/`, `manifest.csv` and, with a holdout, `train.csv`
/// and `test.csv`.
pub fn generate(out_dir: &Path, spec: &SyntheticSpec) -> Result<SyntheticSet> {
    if spec.count == 0 || spec.holdout > spec.count {
        return Err(Error::Validation(format!(
            "need a positive count and holdout <= count, got {} and {}",
            spec.count, spec.holdout
        )));
    }
    if spec.groups == 0 || spec.width % 2 != 0 || spec.height % 2 != 0 {
        return Err(Error::Validation(
            "groups must be positive and image dimensions even".into(),
        ));
    }
    let image_dir = out_dir.join("images");
    let filter_dir = out_dir.join("filters");
    create_dir_all(&image_dir)?;
    create_dir_all(&filter_dir)?;

    let jobs: Vec<(Label, usize)> = (0..spec.count)
        .flat_map(|i| [(Label::BonaFide, i), (Label::Attack, i)])
        .collect();
    use rayon::prelude::*;
    jobs.par_iter().try_for_each(|&(label, i)| {
        let img = match label {
            Label::BonaFide => bonafide_image(spec.width, spec.height, spec.seed, i)?,
            Label::Attack => attack_image(spec.width, spec.height, spec.seed, i, i % spec.groups)?,
        };
        save_pgm(&img, &image_dir.join(image_name(label, i)))
    })?;

    let entry = |label: Label, i: usize| {
        let mut e = ManifestEntry::new(image_name(label, i), label);
        e.subject = Some(format!("{}{:04}", if label == Label::Attack { "a" } else { "b" }, i / 2));
        if label == Label::Attack {
            e.group = Some(format!("group{}", i % spec.groups));
        }
        e
    };
    let all: Vec<ManifestEntry> = jobs.iter().map(|&(l, i)| entry(l, i)).collect();
    let manifest = out_dir.join("manifest.csv");
    Manifest::new(all.clone())?.save(&manifest)?;

    let (mut train_manifest, mut test_manifest) = (None, None);
    if spec.holdout > 0 {
        let cut = spec.count - spec.holdout;
        let (train, test): (Vec<_>, Vec<_>) = jobs
            .iter()
            .zip(all)
            .partition(|((_, i), _)| *i < cut);
        let strip = |v: Vec<(&(Label, usize), ManifestEntry)>| v.into_iter().map(|(_, e)| e).collect();
        let train_path = out_dir.join("train.csv");
        let test_path = out_dir.join("test.csv");
        Manifest::new(strip(train))?.save(&train_path)?;
        Manifest::new(strip(test))?.save(&test_path)?;
        train_manifest = Some(train_path);
        test_manifest = Some(test_path);
    }

    let filters = FilterSet::synthesize(spec.bits, &spec.filter_sizes, spec.seed)?;
    for bank in filters.banks() {
        bank.save(&filter_file_path(&filter_dir, bank.size(), bank.bits()))?;
    }
    Ok(SyntheticSet {
        image_dir,
        filter_dir,
        manifest,
        train_manifest,
        test_manifest,
    })
}

/// Mean squared 4-neighbour Laplacian, a simple high-frequency energy score.
pub fn high_frequency_energy(img: &GrayImage) -> f64 {
    let (w, h) = (img.width(), img.height());
    let mut sum = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let c = 4.0 * img.get(x, y) as f64;
            let n = img.get(x - 1, y) as f64 + img.get(x + 1, y) as f64 + img.get(x, y - 1) as f64 + img.get(x, y + 1) as f64;
            sum += (c - n).powi(2);
        }
    }
    sum / ((w - 2) * (h - 2)) as f64
}
