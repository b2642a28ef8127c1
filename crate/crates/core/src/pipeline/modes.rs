use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::bsif::{extract_all, extract_all_counts, FeatureVector, FilterSet, ScaleId};
use crate::ensemble::{evaluate, evaluate_model, rank_models, ranking_csv, Confusion, Ensemble, EvalReport, LabeledFeatures};
use crate::error::{Error, Result};
use crate::fsutil::{create_dir_all, read_to_string, write_atomic};
use crate::imgio::load_image;
use crate::pipeline::config::Config;
use crate::pipeline::manifest::Manifest;
use crate::pipeline::store::{load_labeled, FeatureTable};
use crate::svm::{train_auto, SvmModel, TuningReport};

pub fn model_file_name(scale: ScaleId, bits: usize) -> String {
    format!("svm_{scale}_{bits}bit.model")
}

pub fn tuning_file_name(scale: ScaleId, bits: usize) -> String {
    format!("tuning_{scale}_{bits}bit.csv")
}

pub const RANKING_FILE: &str = "ranking.csv";

fn load_manifest(cfg: &Config, key: &str) -> Result<Manifest> {
    Manifest::load(&cfg.path(key)?)
}

/// Explicit extraction manifest, else the union of the training, testing and
/// validation manifests that are set.
pub fn extraction_manifest(cfg: &Config) -> Result<Manifest> {
    if cfg.paths.manifest.is_some() {
        return load_manifest(cfg, "manifest");
    }
    let mut out = Manifest::default();
    let mut any = false;
    for key in ["training_manifest", "testing_manifest", "validation_manifest"] {
        if cfg.get(key).is_some_and(|v| !v.is_empty()) {
            out = out.union(&load_manifest(cfg, key)?)?;
            any = true;
        }
    }
    if !any {
        return Err(Error::config("manifest", "extraction needs a manifest"));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ExtractionSummary {
    pub images: usize,
    pub extracted: usize,
    /// Image and error message for every image that could not be processed.
    pub failures: Vec<(String, String)>,
    pub files: Vec<PathBuf>,
}

impl ExtractionSummary {
    pub fn summary_line(&self, cfg: &Config) -> String {
        format!(
            "stage=extract images={} extracted={} failed={} feature_files={} {}",
            self.images,
            self.extracted,
            self.failures.len(),
            self.files.len(),
            cfg.seeds.summary()
        )
    }
}

/// Histograms for every manifest image at every configured scale, written
/// as one CSV per scale. Unreadable images are skipped and reported.
pub fn run_extraction(cfg: &Config) -> Result<ExtractionSummary> {
    cfg.require(&["image_dir", "filter_dir", "feature_dir"])?;
    let manifest = extraction_manifest(cfg)?;
    let image_dir = cfg.path("image_dir")?;
    let feature_dir = cfg.path("feature_dir")?;
    let filters = FilterSet::load(&cfg.path("filter_dir")?, cfg.bits, &cfg.scales)?;
    create_dir_all(&feature_dir)?;
    if manifest.is_empty() {
        log::warn!("extraction manifest is empty; writing header-only feature files");
    }

    let results: Vec<Result<Vec<FeatureVector>>> = manifest
        .entries()
        .par_iter()
        .map(|e| {
            let img = load_image(&image_dir.join(&e.filename))?;
            if cfg.raw_counts {
                extract_all_counts(&img, &filters)
            } else {
                extract_all(&img, &filters)
            }
        })
        .collect();

    let scales = filters.scale_ids();
    let mut tables: Vec<FeatureTable> = scales
        .iter()
        .map(|&s| FeatureTable::new(s, cfg.bits, cfg.raw_counts))
        .collect();
    let mut failures = Vec::new();
    for (entry, result) in manifest.entries().iter().zip(results) {
        match result {
            Ok(vectors) => {
                for (table, fv) in tables.iter_mut().zip(vectors) {
                    debug_assert_eq!(table.scale, fv.scale);
                    table.push(entry.filename.clone(), fv.bins)?;
                }
            }
            Err(e) => {
                log::error!("{}: {e}", entry.filename);
                failures.push((entry.filename.clone(), e.to_string()));
            }
        }
    }
    let files = tables.iter().map(|t| t.save(&feature_dir)).collect::<Result<Vec<_>>>()?;
    Ok(ExtractionSummary {
        images: manifest.len(),
        extracted: manifest.len() - failures.len(),
        failures,
        files,
    })
}

#[derive(Debug, Clone)]
pub struct TrainingSummary {
    pub models: Vec<PathBuf>,
    pub reports: Vec<TuningReport>,
    pub ranking: Option<PathBuf>,
}

impl TrainingSummary {
    pub fn summary_line(&self, cfg: &Config) -> String {
        format!(
            "stage=train models={} ranking={} {}",
            self.models.len(),
            self.ranking.as_ref().map_or("none".into(), |p| p.display().to_string()),
            cfg.seeds.summary()
        )
    }
}

/// Tune and train one model per scale, writing models, tuning reports and
/// (with a validation store) the ranking into `model_dir`.
pub fn train_all(
    cfg: &Config,
    train: &LabeledFeatures,
    validation: Option<&LabeledFeatures>,
    model_dir: &Path,
) -> Result<(Vec<SvmModel>, TrainingSummary)> {
    create_dir_all(model_dir)?;
    let mut models = Vec::new();
    let mut paths = Vec::new();
    let mut reports = Vec::new();
    for scale in cfg.scale_ids() {
        let data = train.train_set(scale)?;
        let (model, report) = train_auto(&data, &cfg.grid, cfg.folds, cfg.seeds.fold, &cfg.smo)?;
        log::info!(
            "{scale}: C={} gamma={} cv_ccr={:.4} support_vectors={}",
            model.c,
            model.gamma,
            report.selected_ccr,
            model.support_vectors.len()
        );
        let path = model_dir.join(model_file_name(scale, cfg.bits));
        model.save(&path)?;
        write_atomic(&model_dir.join(tuning_file_name(scale, cfg.bits)), report.to_csv().as_bytes())?;
        paths.push(path);
        reports.push(report);
        models.push(model);
    }
    let ranking = match validation {
        Some(v) => {
            let ranked = rank_models(models.clone(), v)?;
            let path = model_dir.join(RANKING_FILE);
            write_atomic(&path, ranking_csv(&ranked).as_bytes())?;
            Some(path)
        }
        None => None,
    };
    Ok((
        models,
        TrainingSummary {
            models: paths,
            reports,
            ranking,
        },
    ))
}

pub fn run_training(cfg: &Config) -> Result<TrainingSummary> {
    cfg.require(&["feature_dir", "model_dir", "training_manifest"])?;
    let feature_dir = cfg.path("feature_dir")?;
    let scales = cfg.scale_ids();
    let train = load_labeled(&feature_dir, &scales, cfg.bits, &load_manifest(cfg, "training_manifest")?)?;
    let validation = match &cfg.paths.validation_manifest {
        Some(p) => Some(load_labeled(&feature_dir, &scales, cfg.bits, &Manifest::load(p)?)?),
        None => None,
    };
    Ok(train_all(cfg, &train, validation.as_ref(), &cfg.path("model_dir")?)?.1)
}

/// Load the configured scales' models, checking each file holds the scale
/// and bit depth its name promises.
pub fn load_models(cfg: &Config, model_dir: &Path) -> Result<Vec<SvmModel>> {
    cfg.scale_ids()
        .into_iter()
        .map(|scale| {
            let model = SvmModel::load(&model_dir.join(model_file_name(scale, cfg.bits)))?;
            if model.scale != scale || model.bits != cfg.bits {
                return Err(Error::Validation(format!(
                    "model for {scale} holds {} at {} bits",
                    model.scale, model.bits
                )));
            }
            Ok(model)
        })
        .collect()
}

fn read_ranking(path: &Path) -> Result<Vec<ScaleId>> {
    let text = read_to_string(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let col = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .iter()
        .position(|h| h == "scale")
        .ok_or_else(|| Error::Format(format!("{}: no scale column", path.display())))?;
    reader
        .records()
        .map(|r| {
            let r = r.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            r.get(col).unwrap_or("").parse()
        })
        .collect()
}

/// Ensemble members: the explicit list, else the top of `ranking.csv`, else
/// the first models in canonical scale order.
pub fn select_members(cfg: &Config, models: &[SvmModel], model_dir: &Path) -> Result<Vec<SvmModel>> {
    let find = |s: ScaleId| {
        models
            .iter()
            .find(|m| m.scale == s)
            .cloned()
            .ok_or_else(|| Error::Validation(format!("no model loaded for ensemble member {s}")))
    };
    if let Some(list) = &cfg.ensemble_members {
        return list.iter().map(|&s| find(s)).collect();
    }
    let ranking_path = model_dir.join(RANKING_FILE);
    let order: Vec<ScaleId> = if ranking_path.exists() {
        read_ranking(&ranking_path)?
            .into_iter()
            .filter(|s| models.iter().any(|m| m.scale == *s))
            .collect()
    } else {
        models.iter().map(|m| m.scale).collect()
    };
    order.into_iter().take(cfg.ensemble_size).map(find).collect()
}

#[derive(Debug, Clone)]
pub enum TestingOutcome {
    PerModel(Vec<(ScaleId, Confusion)>),
    Ensemble(EvalReport),
}

#[derive(Debug, Clone)]
pub struct TestingSummary {
    pub outcome: TestingOutcome,
    pub files: Vec<PathBuf>,
}

impl TestingSummary {
    pub fn summary_line(&self, cfg: &Config) -> String {
        match &self.outcome {
            TestingOutcome::PerModel(rows) => format!(
                "stage=test voting=off models={} mean_ccr={:.6} {}",
                rows.len(),
                rows.iter().map(|(_, c)| c.ccr()).sum::<f64>() / rows.len().max(1) as f64,
                cfg.seeds.summary()
            ),
            TestingOutcome::Ensemble(r) => format!(
                "stage=test voting=on members={} ccr={:.6} apcer={:.6} bpcer={:.6} tie_draws={} {}",
                r.per_model_ccr.len(),
                r.ccr,
                r.apcer,
                r.bpcer,
                r.tie_draws,
                cfg.seeds.summary()
            ),
        }
    }

    /// Human-readable table for the console.
    pub fn table(&self) -> String {
        let mut out = String::new();
        match &self.outcome {
            TestingOutcome::PerModel(rows) => {
                let _ = writeln!(out, "{:<12} {:>8} {:>8} {:>8}", "scale", "ccr", "apcer", "bpcer");
                for (s, c) in rows {
                    let _ = writeln!(out, "{:<12} {:>8.4} {:>8.4} {:>8.4}", s.to_string(), c.ccr(), c.apcer(), c.bpcer());
                }
            }
            TestingOutcome::Ensemble(r) => {
                for (s, ccr) in &r.per_model_ccr {
                    let _ = writeln!(out, "member {:<12} ccr {:.4}", s.to_string(), ccr);
                }
                let _ = writeln!(out, "ensemble ccr {:.4} apcer {:.4} bpcer {:.4}", r.ccr, r.apcer, r.bpcer);
            }
        }
        out
    }
}

pub fn per_model_csv(rows: &[(ScaleId, Confusion)]) -> String {
    let mut out = String::from("scale,ccr,apcer,bpcer,true_attack,missed_attack,true_bonafide,false_attack\n");
    for (s, c) in rows {
        let _ = writeln!(
            out,
            "{s},{:e},{:e},{:e},{},{},{},{}",
            c.ccr(),
            c.apcer(),
            c.bpcer(),
            c.true_attack,
            c.missed_attack,
            c.true_bonafide,
            c.false_attack
        );
    }
    out
}

pub fn run_testing(cfg: &Config) -> Result<TestingSummary> {
    cfg.require(&["feature_dir", "model_dir", "testing_manifest", "output_dir"])?;
    let model_dir = cfg.path("model_dir")?;
    let output_dir = cfg.path("output_dir")?;
    let models = load_models(cfg, &model_dir)?;
    let manifest = load_manifest(cfg, "testing_manifest")?;
    create_dir_all(&output_dir)?;
    if cfg.voting {
        let members = select_members(cfg, &models, &model_dir)?;
        let scales: Vec<ScaleId> = members.iter().map(|m| m.scale).collect();
        let test = load_labeled(&cfg.path("feature_dir")?, &scales, cfg.bits, &manifest)?;
        let report = evaluate(&Ensemble::new(members, cfg.seeds.tie)?, &test)?;
        let summary = output_dir.join("ensemble_report.csv");
        let decisions = output_dir.join("ensemble_decisions.csv");
        write_atomic(&summary, report.summary_csv().as_bytes())?;
        write_atomic(&decisions, report.decisions_csv().as_bytes())?;
        Ok(TestingSummary {
            outcome: TestingOutcome::Ensemble(report),
            files: vec![summary, decisions],
        })
    } else {
        let test = load_labeled(&cfg.path("feature_dir")?, &cfg.scale_ids(), cfg.bits, &manifest)?;
        let rows = models
            .iter()
            .map(|m| Ok((m.scale, evaluate_model(m, &test)?)))
            .collect::<Result<Vec<_>>>()?;
        let path = output_dir.join("per_model_accuracy.csv");
        write_atomic(&path, per_model_csv(&rows).as_bytes())?;
        Ok(TestingSummary {
            outcome: TestingOutcome::PerModel(rows),
            files: vec![path],
        })
    }
}
