use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ini::Ini;

use crate::bsif::{is_valid_combination, ScaleId, DEFAULT_BITS, NATIVE_SIZES};
use crate::ensemble::MAX_MEMBERS;
use crate::error::{Error, Result};
use crate::fsutil::read_to_string;
use crate::svm::{ParamGrid, SmoParams};

/// Every configuration key as `(section, key, description)`. Key names are
/// unique across sections so they can also be given bare.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("modes", "extract_features", "compute BSIF histograms for the manifest images"),
    ("modes", "train_models", "train one SVM per scale on the training manifest"),
    ("modes", "test_images", "evaluate models on the testing manifest"),
    ("paths", "image_dir", "directory the manifest filenames are relative to"),
    ("paths", "filter_dir", "directory holding ICAtextureFilters_<s>x<s>_<n>bit.txt files"),
    ("paths", "feature_dir", "feature CSV directory"),
    ("paths", "model_dir", "model file directory"),
    ("paths", "output_dir", "report directory"),
    ("paths", "manifest", "images to extract (default: union of the training, testing and validation manifests)"),
    ("paths", "training_manifest", "training images"),
    ("paths", "testing_manifest", "test images"),
    ("paths", "validation_manifest", "images used to rank models for the ensemble"),
    ("bsif", "bit_depth", "filters per bank, 5 to 12"),
    ("bsif", "scales", "native filter sizes; each is also applied at half resolution"),
    ("bsif", "raw_counts", "store bin counts instead of normalized histograms"),
    ("svm", "c_grid", "C values, numbers or 2^k"),
    ("svm", "gamma_grid", "RBF gamma values, numbers or 2^k"),
    ("svm", "folds", "cross-validation folds"),
    ("svm", "tol", "SMO stopping tolerance on the KKT gap"),
    ("svm", "max_iter", "SMO iteration budget"),
    ("svm", "sv_threshold", "multipliers at or below this are dropped"),
    ("ensemble", "voting", "majority vote (on) or per-model accuracy table (off)"),
    ("ensemble", "ensemble_size", "number of top-ranked models that vote"),
    ("ensemble", "ensemble_members", "explicit scale tags, e.g. full-3x3,half-6x6"),
    ("protocol", "train_fraction", "training share of the 80:20 split"),
    ("protocol", "groups", "held-out group order for leave-one-group-out"),
    ("protocol", "attack_per_group", "attack images drawn per group"),
    ("protocol", "bonafide_train", "bona fide training images per held-out group"),
    ("protocol", "bonafide_test", "bona fide test images per held-out group"),
    ("seeds", "split", "80:20 and leave-one-group-out sampling"),
    ("seeds", "fold", "cross-validation folds"),
    ("seeds", "tie", "majority-vote tie breaks"),
    ("seeds", "synthetic", "synthetic image generation and filter banks"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Modes {
    pub extract_features: bool,
    pub train_models: bool,
    pub test_images: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub image_dir: Option<PathBuf>,
    pub filter_dir: Option<PathBuf>,
    pub feature_dir: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub training_manifest: Option<PathBuf>,
    pub testing_manifest: Option<PathBuf>,
    pub validation_manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seeds {
    pub split: u64,
    pub fold: u64,
    pub tie: u64,
    pub synthetic: u64,
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Seeds {
            split: seed,
            fold: seed,
            tie: seed,
            synthetic: seed,
        }
    }

    /// `seed_split=.. seed_fold=..` for summary lines.
    pub fn summary(&self) -> String {
        format!(
            "seed_split={} seed_fold={} seed_tie={} seed_synthetic={}",
            self.split, self.fold, self.tie, self.synthetic
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub modes: Modes,
    pub paths: Paths,
    pub bits: usize,
    pub scales: Vec<usize>,
    pub raw_counts: bool,
    pub grid: ParamGrid,
    pub folds: usize,
    pub smo: SmoParams,
    pub voting: bool,
    pub ensemble_size: usize,
    pub ensemble_members: Option<Vec<ScaleId>>,
    pub train_fraction: f64,
    pub groups: Option<Vec<String>>,
    pub attack_per_group: Option<usize>,
    pub bonafide_train: Option<usize>,
    pub bonafide_test: Option<usize>,
    pub seeds: Seeds,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            modes: Modes {
                extract_features: false,
                train_models: false,
                test_images: false,
            },
            paths: Paths::default(),
            bits: DEFAULT_BITS,
            scales: NATIVE_SIZES.to_vec(),
            raw_counts: false,
            grid: ParamGrid::default(),
            folds: 10,
            smo: SmoParams::default(),
            voting: true,
            ensemble_size: MAX_MEMBERS,
            ensemble_members: None,
            train_fraction: 0.8,
            groups: None,
            attack_per_group: None,
            bonafide_train: None,
            bonafide_test: None,
            seeds: Seeds::all(0),
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(key, format!("expected on/off, got {v:?}"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(key, format!("malformed value {v:?}")))
}

fn parse_opt<T>(v: &str, f: impl FnOnce(&str) -> Result<T>) -> Result<Option<T>> {
    if v.is_empty() {
        Ok(None)
    } else {
        f(v).map(Some)
    }
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// Grid values are plain numbers or `2^k`.
fn parse_grid(key: &str, v: &str) -> Result<Vec<f64>> {
    let values = list(v)
        .map(|item| match item.strip_prefix("2^") {
            Some(e) => parse_num::<i32>(key, e).map(|e| 2f64.powi(e)),
            None => parse_num::<f64>(key, item),
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() || values.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
        return Err(Error::config(key, "needs one or more positive values"));
    }
    Ok(values)
}

fn render_grid(values: &[f64]) -> String {
    values
        .iter()
        .map(|&x| {
            let e = x.log2().round() as i32;
            if 2f64.powi(e) == x {
                format!("2^{e}")
            } else {
                format!("{x:e}")
            }
        })
        .collect::<Vec<_>>()
        .join(",")
}

fn render_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

fn render_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

impl Config {
    /// Section owning `key`, which may be bare or `section.key`.
    pub fn resolve_key(key: &str) -> Option<(&'static str, &'static str)> {
        let (section, name) = match key.split_once('.') {
            Some((s, k)) => (Some(s), k),
            None => (None, key),
        };
        KEYS.iter()
            .find(|(s, k, _)| *k == name && section.map_or(true, |want| want == *s))
            .map(|&(s, k, _)| (s, k))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (_, name) = Config::resolve_key(key)
            .ok_or_else(|| Error::Usage(format!("unknown configuration key {key:?}")))?;
        let v = value.trim();
        let path = || parse_opt(v, |s| Ok(PathBuf::from(s)));
        let p = &mut self.paths;
        match name {
            "extract_features" => self.modes.extract_features = parse_bool(name, v)?,
            "train_models" => self.modes.train_models = parse_bool(name, v)?,
            "test_images" => self.modes.test_images = parse_bool(name, v)?,
            "image_dir" => p.image_dir = path()?,
            "filter_dir" => p.filter_dir = path()?,
            "feature_dir" => p.feature_dir = path()?,
            "model_dir" => p.model_dir = path()?,
            "output_dir" => p.output_dir = path()?,
            "manifest" => p.manifest = path()?,
            "training_manifest" => p.training_manifest = path()?,
            "testing_manifest" => p.testing_manifest = path()?,
            "validation_manifest" => p.validation_manifest = path()?,
            "bit_depth" => self.bits = parse_num(name, v)?,
            "scales" => {
                self.scales = list(v).map(|s| parse_num(name, s)).collect::<Result<_>>()?;
            }
            "raw_counts" => self.raw_counts = parse_bool(name, v)?,
            "c_grid" => self.grid.c = parse_grid(name, v)?,
            "gamma_grid" => self.grid.gamma = parse_grid(name, v)?,
            "folds" => self.folds = parse_num(name, v)?,
            "tol" => self.smo.tol = parse_num(name, v)?,
            "max_iter" => self.smo.max_iter = parse_num(name, v)?,
            "sv_threshold" => self.smo.sv_threshold = parse_num(name, v)?,
            "voting" => self.voting = parse_bool(name, v)?,
            "ensemble_size" => self.ensemble_size = parse_num(name, v)?,
            "ensemble_members" => {
                self.ensemble_members = parse_opt(v, |s| {
                    list(s)
                        .map(|t| t.parse().map_err(|e: Error| Error::config(name, e.to_string())))
                        .collect()
                })?;
            }
            "train_fraction" => self.train_fraction = parse_num(name, v)?,
            "groups" => self.groups = parse_opt(v, |s| Ok(list(s).map(str::to_owned).collect()))?,
            "attack_per_group" => self.attack_per_group = parse_opt(v, |s| parse_num(name, s))?,
            "bonafide_train" => self.bonafide_train = parse_opt(v, |s| parse_num(name, s))?,
            "bonafide_test" => self.bonafide_test = parse_opt(v, |s| parse_num(name, s))?,
            "split" => self.seeds.split = parse_num(name, v)?,
            "fold" => self.seeds.fold = parse_num(name, v)?,
            "tie" => self.seeds.tie = parse_num(name, v)?,
            "synthetic" => self.seeds.synthetic = parse_num(name, v)?,
            _ => unreachable!("key table and setter disagree on {name}"),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let (_, name) = Config::resolve_key(key)?;
        let p = &self.paths;
        Some(match name {
            "extract_features" => on_off(self.modes.extract_features).into(),
            "train_models" => on_off(self.modes.train_models).into(),
            "test_images" => on_off(self.modes.test_images).into(),
            "image_dir" => render_path(&p.image_dir),
            "filter_dir" => render_path(&p.filter_dir),
            "feature_dir" => render_path(&p.feature_dir),
            "model_dir" => render_path(&p.model_dir),
            "output_dir" => render_path(&p.output_dir),
            "manifest" => render_path(&p.manifest),
            "training_manifest" => render_path(&p.training_manifest),
            "testing_manifest" => render_path(&p.testing_manifest),
            "validation_manifest" => render_path(&p.validation_manifest),
            "bit_depth" => self.bits.to_string(),
            "scales" => self.scales.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
            "raw_counts" => on_off(self.raw_counts).into(),
            "c_grid" => render_grid(&self.grid.c),
            "gamma_grid" => render_grid(&self.grid.gamma),
            "folds" => self.folds.to_string(),
            "tol" => format!("{:e}", self.smo.tol),
            "max_iter" => self.smo.max_iter.to_string(),
            "sv_threshold" => format!("{:e}", self.smo.sv_threshold),
            "voting" => on_off(self.voting).into(),
            "ensemble_size" => self.ensemble_size.to_string(),
            "ensemble_members" => self
                .ensemble_members
                .as_ref()
                .map(|m| m.iter().map(ScaleId::to_string).collect::<Vec<_>>().join(","))
                .unwrap_or_default(),
            "train_fraction" => self.train_fraction.to_string(),
            "groups" => self.groups.as_ref().map(|g| g.join(",")).unwrap_or_default(),
            "attack_per_group" => render_opt(&self.attack_per_group),
            "bonafide_train" => render_opt(&self.bonafide_train),
            "bonafide_test" => render_opt(&self.bonafide_test),
            "split" => self.seeds.split.to_string(),
            "fold" => self.seeds.fold.to_string(),
            "tie" => self.seeds.tie.to_string(),
            "synthetic" => self.seeds.synthetic.to_string(),
            _ => return None,
        })
    }

    /// Parse INI text over the defaults. Unknown keys are returned as
    /// warnings; value and range errors are fatal. Modes are not checked.
    pub fn parse(text: &str) -> Result<(Config, Vec<String>)> {
        let ini = Ini::load_from_str_noescape(text).map_err(|e| Error::config("<file>", e.to_string()))?;
        let mut cfg = Config::default();
        let mut warnings = Vec::new();
        for (section, props) in ini.iter() {
            for (key, value) in props.iter() {
                let full = match section {
                    Some(s) => format!("{s}.{key}"),
                    None => key.to_owned(),
                };
                if Config::resolve_key(&full).is_none() {
                    warnings.push(format!("unknown configuration key {full}"));
                    continue;
                }
                cfg.set(&full, value).map_err(|e| match e {
                    Error::Config { message, .. } => Error::config(&full, message),
                    other => other,
                })?;
            }
        }
        cfg.check_values()?;
        Ok((cfg, warnings))
    }

    pub fn load(path: &Path) -> Result<(Config, Vec<String>)> {
        Config::parse(&read_to_string(path)?)
    }

    /// Range checks that do not depend on the mode being run.
    pub fn check_values(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::config("scales", "at least one filter size is required"));
        }
        for &s in &self.scales {
            if !is_valid_combination(s, self.bits) {
                return Err(Error::config(
                    "scales",
                    format!("no {s}x{s} filters with {} bits", self.bits),
                ));
            }
        }
        let mut sorted = self.scales.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.scales.len() {
            return Err(Error::config("scales", "sizes must be distinct"));
        }
        if self.folds < 2 {
            return Err(Error::config("folds", "at least 2 folds are required"));
        }
        if !(self.smo.tol > 0.0) || self.smo.max_iter == 0 || !(self.smo.sv_threshold >= 0.0) {
            return Err(Error::config("tol", "tol must be positive, max_iter non-zero, sv_threshold non-negative"));
        }
        if !(1..=MAX_MEMBERS).contains(&self.ensemble_size) {
            return Err(Error::config("ensemble_size", format!("must be 1 to {MAX_MEMBERS}")));
        }
        if let Some(m) = &self.ensemble_members {
            if m.is_empty() || m.len() > MAX_MEMBERS {
                return Err(Error::config("ensemble_members", format!("must list 1 to {MAX_MEMBERS} scales")));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction", "must lie strictly between 0 and 1"));
        }
        Ok(())
    }

    /// At least one mode enabled and every enabled mode's paths set.
    pub fn validate(&self) -> Result<()> {
        let m = &self.modes;
        if !(m.extract_features || m.train_models || m.test_images) {
            return Err(Error::config("modes", "no mode of operation is enabled"));
        }
        if m.extract_features {
            self.require(&["image_dir", "filter_dir", "feature_dir"])?;
            if self.paths.manifest.is_none()
                && self.paths.training_manifest.is_none()
                && self.paths.testing_manifest.is_none()
            {
                return Err(Error::config("manifest", "extraction needs a manifest"));
            }
        }
        if m.train_models {
            self.require(&["feature_dir", "model_dir", "training_manifest"])?;
        }
        if m.test_images {
            self.require(&["feature_dir", "model_dir", "testing_manifest", "output_dir"])?;
        }
        Ok(())
    }

    pub fn require(&self, keys: &[&str]) -> Result<()> {
        for key in keys {
            if self.get(key).map_or(true, |v| v.is_empty()) {
                return Err(Error::config(*key, "required but not set"));
            }
        }
        Ok(())
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        self.require(&[key])?;
        Ok(PathBuf::from(self.get(key).unwrap_or_default()))
    }

    /// Native sizes crossed with both resolutions, full first.
    pub fn scale_ids(&self) -> Vec<ScaleId> {
        let mut sizes = self.scales.clone();
        sizes.sort_unstable();
        let full = sizes.iter().map(|&s| ScaleId::full(s));
        let half = sizes.iter().map(|&s| ScaleId::half(s));
        full.chain(half).collect()
    }

    /// The effective configuration as INI text that parses back to `self`.
    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for (section, key, help) in KEYS {
            if *section != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{section}]");
                current = section;
            }
            let _ = writeln!(out, "; {help}");
            let _ = writeln!(out, "{key} = {}", self.get(key).unwrap_or_default());
        }
        out
    }

    /// Keys with descriptions and default values, for `--help`.
    pub fn key_help() -> String {
        let defaults = Config::default();
        let mut out = String::from("Configuration keys (section.key, default):\n");
        for (section, key, help) in KEYS {
            let _ = writeln!(
                out,
                "  {section}.{key} = {}\n      {help}",
                defaults.get(key).unwrap_or_default()
            );
        }
        out
    }
}
