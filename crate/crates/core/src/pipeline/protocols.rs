use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ensemble::{
    box_stats_row, ensemble_size_sweep, evaluate, leave_one_group_out, rank_models, ranking_csv, sweep_csv,
    Ensemble, EvalReport, LogoConfig, LogoResult, BOX_STATS_HEADER,
};
use crate::error::Result;
use crate::fsutil::{create_dir_all, write_atomic};
use crate::pipeline::config::Config;
use crate::pipeline::manifest::Manifest;
use crate::pipeline::modes::{model_file_name, train_all, tuning_file_name, RANKING_FILE};
use crate::pipeline::store::load_labeled;

/// Seeded shuffle of `0..n`; the first `round(fraction * n)` indices train.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (fraction * n as f64).round() as usize;
    let mut train = idx[..cut].to_vec();
    let mut validation = idx[cut..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    (train, validation)
}

fn protocol_manifest(cfg: &Config) -> Result<Manifest> {
    match &cfg.paths.manifest {
        Some(p) => Manifest::load(p),
        None => Manifest::load(&cfg.path("training_manifest")?),
    }
}

fn protocol_model_dir(cfg: &Config) -> Result<PathBuf> {
    match &cfg.paths.model_dir {
        Some(p) => Ok(p.clone()),
        None => Ok(cfg.path("output_dir")?.join("models")),
    }
}

#[derive(Debug, Clone)]
pub struct SplitSummary {
    pub train: usize,
    pub validation: usize,
    pub models: usize,
    pub sweep: Vec<(usize, f64)>,
    pub ensemble: EvalReport,
    /// Where the sweep and ensemble were scored: `validation` or `test`.
    pub scored_on: &'static str,
}

impl SplitSummary {
    pub fn summary_line(&self, cfg: &Config) -> String {
        format!(
            "stage=protocol-8020 train={} validation={} models={} scored_on={} ensemble_size={} ccr={:.6} apcer={:.6} bpcer={:.6} {}",
            self.train,
            self.validation,
            self.models,
            self.scored_on,
            self.ensemble.per_model_ccr.len(),
            self.ensemble.ccr,
            self.ensemble.apcer,
            self.ensemble.bpcer,
            cfg.seeds.summary()
        )
    }
}

/// Seeded train/validation split of the manifest, one model per scale on
/// the training part, ranking on the validation part and a best-first
/// ensemble sweep. A testing manifest, when set, is used for the sweep and
/// the final ensemble instead of the validation part.
pub fn run_split_protocol(cfg: &Config) -> Result<SplitSummary> {
    let output_dir = cfg.path("output_dir")?;
    let feature_dir = cfg.path("feature_dir")?;
    let model_dir = protocol_model_dir(cfg)?;
    create_dir_all(&output_dir)?;
    let manifest = protocol_manifest(cfg)?;
    let (train_idx, val_idx) = split_indices(manifest.len(), cfg.train_fraction, cfg.seeds.split);
    let train_manifest = manifest.subset(&train_idx);
    let val_manifest = manifest.subset(&val_idx);
    train_manifest.save(&output_dir.join("split_train.csv"))?;
    val_manifest.save(&output_dir.join("split_validation.csv"))?;

    let scales = cfg.scale_ids();
    let all = load_labeled(&feature_dir, &scales, cfg.bits, &manifest)?;
    let train = all.subset(&train_idx);
    let validation = all.subset(&val_idx);
    let (models, _) = train_all(cfg, &train, None, &model_dir)?;
    let ranked = rank_models(models, &validation)?;
    write_atomic(&model_dir.join(RANKING_FILE), ranking_csv(&ranked).as_bytes())?;
    write_atomic(&output_dir.join(RANKING_FILE), ranking_csv(&ranked).as_bytes())?;

    let (scored, scored_on) = match &cfg.paths.testing_manifest {
        Some(p) => (load_labeled(&feature_dir, &scales, cfg.bits, &Manifest::load(p)?)?, "test"),
        None => (validation, "validation"),
    };
    let order: Vec<_> = ranked.iter().map(|r| r.model.clone()).collect();
    let sweep = ensemble_size_sweep(&order, &scored, cfg.seeds.tie)?;
    write_atomic(&output_dir.join("ensemble_sweep.csv"), sweep_csv(&sweep).as_bytes())?;
    let size = cfg.ensemble_size.min(order.len());
    let ensemble = evaluate(&Ensemble::new(order[..size].to_vec(), cfg.seeds.tie)?, &scored)?;
    write_atomic(&output_dir.join("ensemble_report.csv"), ensemble.summary_csv().as_bytes())?;
    write_atomic(&output_dir.join("ensemble_decisions.csv"), ensemble.decisions_csv().as_bytes())?;
    Ok(SplitSummary {
        train: train_idx.len(),
        validation: val_idx.len(),
        models: order.len(),
        sweep: sweep.iter().map(|(k, r)| (*k, r.ccr)).collect(),
        ensemble,
        scored_on,
    })
}

#[derive(Debug, Clone)]
pub struct LogoSummary {
    pub groups: usize,
    pub models: usize,
    pub mean_model_ccr: f64,
    pub mean_ensemble_ccr: f64,
    pub files: Vec<PathBuf>,
}

impl LogoSummary {
    pub fn summary_line(&self, cfg: &Config) -> String {
        format!(
            "stage=protocol-logo groups={} models={} mean_model_ccr={:.6} mean_ensemble_ccr={:.6} {}",
            self.groups,
            self.models,
            self.mean_model_ccr,
            self.mean_ensemble_ccr,
            cfg.seeds.summary()
        )
    }
}

pub fn logo_config(cfg: &Config) -> LogoConfig {
    LogoConfig {
        groups: cfg.groups.clone(),
        attack_per_group: cfg.attack_per_group,
        bonafide_train: cfg.bonafide_train,
        bonafide_test: cfg.bonafide_test,
        split_seed: cfg.seeds.split,
        grid: cfg.grid.clone(),
        folds: cfg.folds,
        fold_seed: cfg.seeds.fold,
        smo: cfg.smo.clone(),
        ensemble_size: cfg.ensemble_size,
        tie_seed: cfg.seeds.tie,
    }
}

fn per_scale_csv(result: &LogoResult) -> String {
    let mut out = String::from("group,scale,test_ccr,cv_ccr,c,gamma\n");
    for fold in &result.folds {
        for ((scale, ccr), report) in fold.per_scale_ccr.iter().zip(&fold.tuning) {
            let _ = writeln!(
                out,
                "{},{scale},{ccr:e},{:e},{:e},{:e}",
                fold.partition.group, report.selected_ccr, report.selected_c, report.selected_gamma
            );
        }
    }
    out
}

fn ensemble_csv(result: &LogoResult) -> String {
    let mut out = String::from("group,train_images,test_images,members,ccr,apcer,bpcer,tie_draws\n");
    for fold in &result.folds {
        let r = &fold.ensemble;
        let _ = writeln!(
            out,
            "{},{},{},{},{:e},{:e},{:e},{}",
            fold.partition.group,
            fold.partition.train.len(),
            fold.partition.test.len(),
            r.per_model_ccr.len(),
            r.ccr,
            r.apcer,
            r.bpcer,
            r.tie_draws
        );
    }
    out
}

fn stats_csv<K: ToString>(rows: &[(K, crate::ensemble::BoxStats)]) -> String {
    let mut out = format!("{BOX_STATS_HEADER}\n");
    for (k, s) in rows {
        out.push_str(&box_stats_row(&k.to_string(), s));
        out.push('\n');
    }
    out
}

/// Leave-one-group-out over the manifest's attack groups. Models for each
/// held-out group go to `<model_dir>/<group>/`; reports to `output_dir`.
pub fn run_logo_protocol(cfg: &Config) -> Result<LogoSummary> {
    let output_dir = cfg.path("output_dir")?;
    let model_root = protocol_model_dir(cfg)?;
    create_dir_all(&output_dir)?;
    let manifest = protocol_manifest(cfg)?;
    let store = load_labeled(&cfg.path("feature_dir")?, &cfg.scale_ids(), cfg.bits, &manifest)?;
    let result = leave_one_group_out(&store, &manifest.groups(), &manifest.subjects(), &logo_config(cfg))?;

    let mut models = 0;
    for fold in &result.folds {
        let dir = model_root.join(&fold.partition.group);
        create_dir_all(&dir)?;
        for (model, report) in fold.models.iter().zip(&fold.tuning) {
            model.save(&dir.join(model_file_name(model.scale, cfg.bits)))?;
            write_atomic(&dir.join(tuning_file_name(model.scale, cfg.bits)), report.to_csv().as_bytes())?;
            models += 1;
        }
        manifest
            .subset(&fold.partition.train)
            .save(&dir.join("train.csv"))?;
        manifest.subset(&fold.partition.test).save(&dir.join("test.csv"))?;
    }
    let files = vec![
        (output_dir.join("logo_per_scale.csv"), per_scale_csv(&result)),
        (output_dir.join("logo_ensemble.csv"), ensemble_csv(&result)),
        (output_dir.join("logo_scale_stats.csv"), stats_csv(&result.scale_stats)),
        (output_dir.join("logo_group_stats.csv"), stats_csv(&result.group_stats)),
    ];
    for (path, text) in &files {
        write_atomic(path, text.as_bytes())?;
    }
    let n = result.folds.len();
    Ok(LogoSummary {
        groups: n,
        models,
        mean_model_ccr: result.mean_model_ccr,
        mean_ensemble_ccr: result.folds.iter().map(|f| f.ensemble.ccr).sum::<f64>() / n as f64,
        files: files.into_iter().map(|(p, _)| p).collect(),
    })
}
