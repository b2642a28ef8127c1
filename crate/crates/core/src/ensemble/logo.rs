use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bsif::ScaleId;
use crate::ensemble::eval::{evaluate, evaluate_model, sort_ranked, Ensemble, EvalReport, LabeledFeatures, RankedModel};
use crate::ensemble::stats::{boxplot_stats, BoxStats};
use crate::error::{Error, Result};
use crate::svm::{train_auto, Label, ParamGrid, SmoParams, SvmModel, TuningReport};

#[derive(Debug, Clone)]
pub struct LogoConfig {
    /// Held-out groups in order; `None` uses every group tag found, sorted.
    pub groups: Option<Vec<String>>,
    /// Attack images drawn from each group (all when `None`).
    pub attack_per_group: Option<usize>,
    /// Bona fide training images; defaults to the attack training count.
    pub bonafide_train: Option<usize>,
    /// Bona fide test images; defaults to the attack test count.
    pub bonafide_test: Option<usize>,
    pub split_seed: u64,
    pub grid: ParamGrid,
    pub folds: usize,
    pub fold_seed: u64,
    pub smo: SmoParams,
    pub ensemble_size: usize,
    pub tie_seed: u64,
}

/// Row indices into the full store for one held-out group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogoPartition {
    pub group: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LogoFold {
    pub partition: LogoPartition,
    pub models: Vec<SvmModel>,
    pub tuning: Vec<TuningReport>,
    /// Test CCR of each individual model.
    pub per_scale_ccr: Vec<(ScaleId, f64)>,
    pub ensemble: EvalReport,
}

#[derive(Debug, Clone)]
pub struct LogoResult {
    pub folds: Vec<LogoFold>,
    /// Per scale, over held-out groups.
    pub scale_stats: Vec<(ScaleId, BoxStats)>,
    /// Per held-out group, over scales.
    pub group_stats: Vec<(String, BoxStats)>,
    /// Mean test CCR over every trained model.
    pub mean_model_ccr: f64,
}

fn take(pool: &[usize], n: usize, what: &str, group: &str) -> Result<Vec<usize>> {
    if pool.len() < n {
        return Err(Error::Validation(format!(
            "holding out {group}: need {n} {what} images, only {} available",
            pool.len()
        )));
    }
    Ok(pool[..n].to_vec())
}

/// Split bona fide rows into test and train so that no subject appears in
/// both. Untagged rows count as their own subject.
fn split_bonafide(
    rows: &[usize],
    subjects: &[Option<String>],
    n_test: usize,
    n_train: Option<usize>,
    default_train: usize,
    rng: &mut ChaCha8Rng,
    group: &str,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_subject: BTreeMap<(u8, String), Vec<usize>> = BTreeMap::new();
    for &r in rows {
        let key = match &subjects[r] {
            Some(s) => (0, s.clone()),
            None => (1, r.to_string()),
        };
        by_subject.entry(key).or_default().push(r);
    }
    let mut buckets: Vec<Vec<usize>> = by_subject.into_values().collect();
    buckets.shuffle(rng);
    let mut test = Vec::new();
    let mut train_pool = Vec::new();
    for bucket in buckets {
        if test.len() < n_test {
            let room = n_test - test.len();
            test.extend(bucket.into_iter().take(room));
        } else {
            train_pool.extend(bucket);
        }
    }
    if test.len() < n_test {
        return Err(Error::Validation(format!(
            "holding out {group}: need {n_test} bona fide test images, only {} available",
            test.len()
        )));
    }
    let train = match n_train {
        Some(n) => take(&train_pool, n, "bona fide training", group)?,
        None => {
            if train_pool.len() < default_train {
                log::warn!(
                    "holding out {group}: only {} bona fide training images for {default_train} attack images",
                    train_pool.len()
                );
            }
            train_pool[..default_train.min(train_pool.len())].to_vec()
        }
    };
    Ok((test, train))
}

/// Train/test index sets for every held-out group. Attack test rows all
/// carry the held-out tag and no attack training row does; bona fide rows
/// are split subject-disjointly and never shared.
pub fn logo_partitions(
    labels: &[Label],
    groups: &[Option<String>],
    subjects: &[Option<String>],
    cfg: &LogoConfig,
) -> Result<Vec<LogoPartition>> {
    if groups.len() != labels.len() || subjects.len() != labels.len() {
        return Err(Error::Validation("group and subject tags must align with labels".into()));
    }
    let mut attack_by_group: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut untagged = Vec::new();
    let mut bonafide = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        match (label, &groups[i]) {
            (Label::Attack, Some(g)) => attack_by_group.entry(g.clone()).or_default().push(i),
            (Label::Attack, None) => untagged.push(i),
            (Label::BonaFide, _) => bonafide.push(i),
        }
    }
    if !untagged.is_empty() {
        return Err(Error::Validation(format!(
            "{} attack images have no group tag (first row {})",
            untagged.len(),
            untagged[0]
        )));
    }
    let held_out: Vec<String> = match &cfg.groups {
        Some(list) => list.clone(),
        None => attack_by_group.keys().cloned().collect(),
    };
    if held_out.len() < 2 {
        return Err(Error::Validation(format!(
            "leave-one-group-out needs at least 2 groups, found {}",
            held_out.len()
        )));
    }
    for g in &held_out {
        if attack_by_group.get(g).map_or(true, Vec::is_empty) {
            return Err(Error::Validation(format!("group {g} has no attack images")));
        }
    }

    held_out
        .iter()
        .enumerate()
        .map(|(gi, group)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.split_seed.wrapping_add(gi as u64));
            let mut attack_test = Vec::new();
            let mut attack_train = Vec::new();
            for g in &held_out {
                let mut pool = attack_by_group[g].clone();
                pool.shuffle(&mut rng);
                let n = cfg.attack_per_group.unwrap_or(pool.len());
                let chosen = take(&pool, n, &format!("attack ({g})"), group)?;
                if g == group {
                    attack_test = chosen;
                } else {
                    attack_train.extend(chosen);
                }
            }
            let n_test = cfg.bonafide_test.unwrap_or(attack_test.len());
            let (bona_test, bona_train) = split_bonafide(
                &bonafide,
                subjects,
                n_test,
                cfg.bonafide_train,
                attack_train.len(),
                &mut rng,
                group,
            )?;
            let mut train: Vec<usize> = attack_train.into_iter().chain(bona_train).collect();
            let mut test: Vec<usize> = attack_test.into_iter().chain(bona_test).collect();
            train.sort_unstable();
            test.sort_unstable();
            Ok(LogoPartition {
                group: group.clone(),
                train,
                test,
            })
        })
        .collect()
}

/// Train every scale on each partition, score the individual models and the
/// CV-ranked ensemble on the held-out group.
pub fn leave_one_group_out(
    store: &LabeledFeatures,
    groups: &[Option<String>],
    subjects: &[Option<String>],
    cfg: &LogoConfig,
) -> Result<LogoResult> {
    let partitions = logo_partitions(store.labels(), groups, subjects, cfg)?;
    let scales = store.scales();
    if scales.is_empty() {
        return Err(Error::Validation("no feature scales to train".into()));
    }
    let mut folds = Vec::with_capacity(partitions.len());
    for partition in partitions {
        let train = store.subset(&partition.train);
        let test = store.subset(&partition.test);
        let mut models = Vec::with_capacity(scales.len());
        let mut tuning = Vec::with_capacity(scales.len());
        let mut per_scale_ccr = Vec::with_capacity(scales.len());
        let mut ranked = Vec::with_capacity(scales.len());
        for &scale in &scales {
            let (model, report) = train_auto(&train.train_set(scale)?, &cfg.grid, cfg.folds, cfg.fold_seed, &cfg.smo)?;
            per_scale_ccr.push((scale, evaluate_model(&model, &test)?.ccr()));
            ranked.push(RankedModel {
                model: model.clone(),
                ccr: report.selected_ccr,
            });
            models.push(model);
            tuning.push(report);
        }
        sort_ranked(&mut ranked);
        let size = cfg.ensemble_size.clamp(1, ranked.len());
        let members = ranked.into_iter().take(size).map(|r| r.model).collect();
        let ensemble = evaluate(&Ensemble::new(members, cfg.tie_seed)?, &test)?;
        log::info!("held out {}: ensemble ccr {:.4}", partition.group, ensemble.ccr);
        folds.push(LogoFold {
            partition,
            models,
            tuning,
            per_scale_ccr,
            ensemble,
        });
    }
    summarize(folds, &scales)
}

fn summarize(folds: Vec<LogoFold>, scales: &[ScaleId]) -> Result<LogoResult> {
    let scale_stats = scales
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let values: Vec<f64> = folds.iter().map(|f| f.per_scale_ccr[i].1).collect();
            Ok((s, boxplot_stats(&values)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let group_stats = folds
        .iter()
        .map(|f| {
            let values: Vec<f64> = f.per_scale_ccr.iter().map(|&(_, c)| c).collect();
            Ok((f.partition.group.clone(), boxplot_stats(&values)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<f64> = folds.iter().flat_map(|f| f.per_scale_ccr.iter().map(|&(_, c)| c)).collect();
    let mean_model_ccr = all.iter().sum::<f64>() / all.len() as f64;
    Ok(LogoResult {
        folds,
        scale_stats,
        group_stats,
        mean_model_ccr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> LogoConfig {
        LogoConfig {
            groups: None,
            attack_per_group: None,
            bonafide_train: None,
            bonafide_test: None,
            split_seed: 5,
            grid: ParamGrid::single(1.0, 1.0),
            folds: 2,
            fold_seed: 0,
            smo: SmoParams::default(),
            ensemble_size: 16,
            tie_seed: 0,
        }
    }

    fn toy(groups_n: usize, per_group: usize, bona: usize) -> (Vec<Label>, Vec<Option<String>>, Vec<Option<String>>) {
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        let mut subjects = Vec::new();
        for g in 0..groups_n {
            for _ in 0..per_group {
                labels.push(Label::Attack);
                groups.push(Some(format!("brand{g}")));
                subjects.push(None);
            }
        }
        for b in 0..bona {
            labels.push(Label::BonaFide);
            groups.push(None);
            subjects.push(Some(format!("s{}", b / 3)));
        }
        (labels, groups, subjects)
    }

    #[test]
    fn partitions_are_group_pure_and_disjoint() {
        let (labels, groups, subjects) = toy(2, 6, 24);
        let parts = logo_partitions(&labels, &groups, &subjects, &cfg()).unwrap();
        assert_eq!(parts.len(), 2);
        for p in &parts {
            for &i in &p.test {
                if labels[i] == Label::Attack {
                    assert_eq!(groups[i].as_deref(), Some(p.group.as_str()));
                }
            }
            for &i in &p.train {
                assert!(!p.test.contains(&i));
                if labels[i] == Label::Attack {
                    assert_ne!(groups[i].as_deref(), Some(p.group.as_str()));
                }
            }
            let subj = |set: &[usize]| -> Vec<String> {
                set.iter().filter_map(|&i| subjects[i].clone()).collect()
            };
            let test_subjects = subj(&p.test);
            assert!(subj(&p.train).iter().all(|s| !test_subjects.contains(s)));
            let count = |set: &[usize], l| set.iter().filter(|&&i| labels[i] == l).count();
            assert_eq!(count(&p.test, Label::Attack), 6);
            assert_eq!(count(&p.test, Label::BonaFide), 6);
            assert_eq!(count(&p.train, Label::BonaFide), 6);
        }
    }

    #[test]
    fn per_group_cap_and_seeding() {
        let (labels, groups, subjects) = toy(3, 10, 60);
        let mut c = cfg();
        c.attack_per_group = Some(4);
        let a = logo_partitions(&labels, &groups, &subjects, &c).unwrap();
        assert_eq!(a, logo_partitions(&labels, &groups, &subjects, &c).unwrap());
        for p in &a {
            assert_eq!(p.train.len(), 16);
            assert_eq!(p.test.len(), 8);
        }
        c.split_seed = 6;
        assert_ne!(a, logo_partitions(&labels, &groups, &subjects, &c).unwrap());
    }

    #[test]
    fn empty_or_untagged_groups() {
        let (labels, mut groups, subjects) = toy(2, 3, 12);
        let mut c = cfg();
        c.groups = Some(vec!["brand0".into(), "brand7".into()]);
        assert!(logo_partitions(&labels, &groups, &subjects, &c).is_err());
        groups[0] = None;
        assert!(logo_partitions(&labels, &groups, &subjects, &cfg()).is_err());
    }

    #[test]
    fn too_few_bonafide() {
        let (labels, groups, subjects) = toy(2, 6, 3);
        assert!(logo_partitions(&labels, &groups, &subjects, &cfg()).is_err());
    }
}
