use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::bsif::{Resolution, ScaleId};
use crate::ensemble::vote::{vote, TieBreaker};
use crate::error::{Error, Result};
use crate::svm::{Label, SvmModel, TrainSet};

/// Labeled images with one feature row per scale, all aligned by index.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures {
    names: Vec<String>,
    labels: Vec<Label>,
    features: BTreeMap<ScaleId, Vec<Vec<f64>>>,
}

impl LabeledFeatures {
    pub fn new(
        names: Vec<String>,
        labels: Vec<Label>,
        features: BTreeMap<ScaleId, Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if names.len() != labels.len() {
            return Err(Error::Validation(format!(
                "{} image names but {} labels",
                names.len(),
                labels.len()
            )));
        }
        for (scale, rows) in &features {
            if rows.len() != names.len() {
                return Err(Error::Validation(format!(
                    "{scale} has {} feature rows for {} images",
                    rows.len(),
                    names.len()
                )));
            }
        }
        Ok(LabeledFeatures {
            names,
            labels,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn scales(&self) -> Vec<ScaleId> {
        self.features.keys().copied().collect()
    }

    pub fn rows(&self, scale: ScaleId) -> Result<&[Vec<f64>]> {
        self.features
            .get(&scale)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Validation(format!("no features stored for scale {scale}")))
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledFeatures {
        LabeledFeatures {
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            features: self
                .features
                .iter()
                .map(|(&s, rows)| (s, idx.iter().map(|&i| rows[i].clone()).collect()))
                .collect(),
        }
    }

    pub fn train_set(&self, scale: ScaleId) -> Result<TrainSet> {
        TrainSet::new(scale, self.rows(scale)?.to_vec(), self.labels.clone())
    }
}

/// Counts with attack as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    /// attack classified as attack
    pub true_attack: u64,
    /// attack classified as bona fide
    pub missed_attack: u64,
    /// bona fide classified as bona fide
    pub true_bonafide: u64,
    /// bona fide classified as attack
    pub false_attack: u64,
}

impl Confusion {
    pub fn record(&mut self, truth: Label, decision: Label) {
        match (truth, decision) {
            (Label::Attack, Label::Attack) => self.true_attack += 1,
            (Label::Attack, Label::BonaFide) => self.missed_attack += 1,
            (Label::BonaFide, Label::BonaFide) => self.true_bonafide += 1,
            (Label::BonaFide, Label::Attack) => self.false_attack += 1,
        }
    }

    pub fn attacks(&self) -> u64 {
        self.true_attack + self.missed_attack
    }

    pub fn bonafides(&self) -> u64 {
        self.true_bonafide + self.false_attack
    }

    pub fn total(&self) -> u64 {
        self.attacks() + self.bonafides()
    }

    fn ratio(num: u64, den: u64) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    /// Correct classification rate.
    pub fn ccr(&self) -> f64 {
        Self::ratio(self.true_attack + self.true_bonafide, self.total())
    }

    /// Attacks accepted as bona fide, over all attacks (0 when there are none).
    pub fn apcer(&self) -> f64 {
        Self::ratio(self.missed_attack, self.attacks())
    }

    /// Bona fide presentations rejected as attacks, over all bona fide (0 when
    /// there are none).
    pub fn bpcer(&self) -> f64 {
        Self::ratio(self.false_attack, self.bonafides())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub name: String,
    pub truth: Label,
    pub decision: Label,
    pub attack_votes: usize,
    pub bonafide_votes: usize,
    pub tie_broken: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub ccr: f64,
    pub apcer: f64,
    pub bpcer: f64,
    pub confusion: Confusion,
    /// Individual CCR of every member, in member order.
    pub per_model_ccr: Vec<(ScaleId, f64)>,
    pub tie_seed: u64,
    pub tie_draws: u64,
    pub decisions: Vec<Decision>,
}

impl EvalReport {
    fn new(confusion: Confusion, per_model_ccr: Vec<(ScaleId, f64)>, ties: &TieBreaker, decisions: Vec<Decision>) -> Self {
        EvalReport {
            ccr: confusion.ccr(),
            apcer: confusion.apcer(),
            bpcer: confusion.bpcer(),
            confusion,
            per_model_ccr,
            tie_seed: ties.seed(),
            tie_draws: ties.draws(),
            decisions,
        }
    }

    /// Summary CSV: metrics, confusion counts and the members' individual CCRs.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "members,ccr,apcer,bpcer,true_attack,missed_attack,true_bonafide,false_attack,tie_seed,tie_draws\n",
        );
        let members: Vec<String> = self.per_model_ccr.iter().map(|(s, _)| s.to_string()).collect();
        let c = &self.confusion;
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{},{},{},{},{},{}",
            members.join(";"),
            self.ccr,
            self.apcer,
            self.bpcer,
            c.true_attack,
            c.missed_attack,
            c.true_bonafide,
            c.false_attack,
            self.tie_seed,
            self.tie_draws
        );
        out.push_str("\nscale,member_ccr\n");
        for (s, ccr) in &self.per_model_ccr {
            let _ = writeln!(out, "{s},{ccr:e}");
        }
        out
    }

    pub fn decisions_csv(&self) -> String {
        let mut out = String::from("filename,truth,decision,attack_votes,bonafide_votes,tie_broken\n");
        for d in &self.decisions {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                d.name, d.truth, d.decision, d.attack_votes, d.bonafide_votes, d.tie_broken as u8
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Vec<SvmModel>,
    tie_seed: u64,
}

pub const MAX_MEMBERS: usize = 16;

impl Ensemble {
    pub fn new(members: Vec<SvmModel>, tie_seed: u64) -> Result<Self> {
        if members.is_empty() || members.len() > MAX_MEMBERS {
            return Err(Error::Validation(format!(
                "an ensemble needs 1 to {MAX_MEMBERS} members, got {}",
                members.len()
            )));
        }
        for (i, m) in members.iter().enumerate() {
            if members[..i].iter().any(|o| o.scale == m.scale) {
                return Err(Error::Validation(format!("scale {} appears twice in the ensemble", m.scale)));
            }
        }
        Ok(Ensemble { members, tie_seed })
    }

    pub fn members(&self) -> &[SvmModel] {
        &self.members
    }

    pub fn tie_seed(&self) -> u64 {
        self.tie_seed
    }
}

fn predictions(model: &SvmModel, store: &LabeledFeatures) -> Result<Vec<Label>> {
    store
        .rows(model.scale)?
        .iter()
        .map(|x| model.predict(x).map(|(l, _)| l))
        .collect()
}

/// Confusion counts of one model on its own scale's features.
pub fn evaluate_model(model: &SvmModel, store: &LabeledFeatures) -> Result<Confusion> {
    let mut confusion = Confusion::default();
    for (p, &truth) in predictions(model, store)?.into_iter().zip(store.labels()) {
        confusion.record(truth, p);
    }
    Ok(confusion)
}

/// Majority vote of the members on every image in `store`.
pub fn evaluate(ensemble: &Ensemble, store: &LabeledFeatures) -> Result<EvalReport> {
    let missing: Vec<String> = ensemble
        .members
        .iter()
        .filter(|m| store.rows(m.scale).is_err())
        .map(|m| m.scale.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "test features lack scales {} for images {}",
            missing.join(", "),
            store.names().join(", ")
        )));
    }
    let per_member: Vec<Vec<Label>> = ensemble
        .members
        .iter()
        .map(|m| predictions(m, store))
        .collect::<Result<_>>()?;

    let mut per_model_ccr = Vec::with_capacity(ensemble.members.len());
    for (m, preds) in ensemble.members.iter().zip(&per_member) {
        let mut c = Confusion::default();
        for (&p, &t) in preds.iter().zip(store.labels()) {
            c.record(t, p);
        }
        per_model_ccr.push((m.scale, c.ccr()));
    }

    let mut ties = TieBreaker::new(ensemble.tie_seed);
    let mut confusion = Confusion::default();
    let mut decisions = Vec::with_capacity(store.len());
    let mut ballot = Vec::with_capacity(ensemble.members.len());
    for (i, (name, &truth)) in store.names().iter().zip(store.labels()).enumerate() {
        ballot.clear();
        ballot.extend(per_member.iter().map(|p| p[i]));
        let draws_before = ties.draws();
        let decision = vote(&ballot, &mut ties)?;
        confusion.record(truth, decision);
        let attack_votes = ballot.iter().filter(|&&l| l == Label::Attack).count();
        decisions.push(Decision {
            name: name.clone(),
            truth,
            decision,
            attack_votes,
            bonafide_votes: ballot.len() - attack_votes,
            tie_broken: ties.draws() > draws_before,
        });
    }
    Ok(EvalReport::new(confusion, per_model_ccr, &ties, decisions))
}

#[derive(Debug, Clone)]
pub struct RankedModel {
    pub model: SvmModel,
    pub ccr: f64,
}

fn resolution_order(r: Resolution) -> u8 {
    match r {
        Resolution::Full => 0,
        Resolution::Half => 1,
    }
}

/// Sort by descending CCR; ties go to the smaller native filter size, then
/// full resolution before half.
pub fn sort_ranked(ranked: &mut [RankedModel]) {
    ranked.sort_by(|a, b| {
        b.ccr
            .partial_cmp(&a.ccr)
            .unwrap_or(Ordering::Equal)
            .then(a.model.scale.size.cmp(&b.model.scale.size))
            .then(resolution_order(a.model.scale.resolution).cmp(&resolution_order(b.model.scale.resolution)))
    });
}

/// Rank by CCR on a validation store.
pub fn rank_models(models: Vec<SvmModel>, validation: &LabeledFeatures) -> Result<Vec<RankedModel>> {
    let mut ranked = models
        .into_iter()
        .map(|model| {
            let ccr = evaluate_model(&model, validation)?.ccr();
            Ok(RankedModel { model, ccr })
        })
        .collect::<Result<Vec<_>>>()?;
    sort_ranked(&mut ranked);
    Ok(ranked)
}

/// Evaluate best-first ensembles of every size `1..=ranked.len()`.
pub fn ensemble_size_sweep(
    ranked: &[SvmModel],
    test: &LabeledFeatures,
    tie_seed: u64,
) -> Result<Vec<(usize, EvalReport)>> {
    (1..=ranked.len())
        .map(|size| {
            let ensemble = Ensemble::new(ranked[..size].to_vec(), tie_seed)?;
            Ok((size, evaluate(&ensemble, test)?))
        })
        .collect()
}

pub fn sweep_csv(sweep: &[(usize, EvalReport)]) -> String {
    let mut out = String::from("size,ccr,apcer,bpcer,tie_draws,added_scale\n");
    for (size, r) in sweep {
        let added = r.per_model_ccr.last().map(|(s, _)| s.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{size},{:e},{:e},{:e},{},{added}", r.ccr, r.apcer, r.bpcer, r.tie_draws);
    }
    out
}

pub fn ranking_csv(ranked: &[RankedModel]) -> String {
    let mut out = String::from("rank,scale,effective_size,resolution,ccr\n");
    for (i, r) in ranked.iter().enumerate() {
        let s = r.model.scale;
        let _ = writeln!(
            out,
            "{},{s},{},{},{:e}",
            i + 1,
            s.effective_size(),
            s.resolution.as_str(),
            r.ccr
        );
    }
    out
}
