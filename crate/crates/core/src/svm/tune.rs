//! Grid search over `(C, gamma)` scored by stratified k-fold cross validation.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bsif::ScaleId;
use crate::error::{Error, Result};
use crate::svm::kernel::distance_matrix;
use crate::svm::model::{train_smo, SvmModel, TrainSet};
use crate::svm::smo::{self, Gram, SmoParams};
use crate::svm::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Default for ParamGrid {
    /// C in 2^-5, 2^-3, ..., 2^15 and gamma in 2^-15, 2^-13, ..., 2^3.
    fn default() -> Self {
        ParamGrid {
            c: (-5..=15).step_by(2).map(|e| 2f64.powi(e)).collect(),
            gamma: (-15..=3).step_by(2).map(|e| 2f64.powi(e)).collect(),
        }
    }
}

impl ParamGrid {
    pub fn single(c: f64, gamma: f64) -> Self {
        ParamGrid {
            c: vec![c],
            gamma: vec![gamma],
        }
    }

    pub fn len(&self) -> usize {
        self.c.len() * self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Validation("parameter grid is empty".into()));
        }
        if let Some(v) = self.c.iter().chain(&self.gamma).find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Validation(format!("grid value {v} is not positive")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub c: f64,
    pub gamma: f64,
    pub fold_ccr: Vec<f64>,
    pub mean_ccr: f64,
    /// Folds whose solver hit the iteration budget; they are scored with the
    /// last iterate.
    pub nonconverged_folds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningReport {
    pub scale: ScaleId,
    pub folds: usize,
    pub seed: u64,
    pub cells: Vec<CellResult>,
    pub selected_c: f64,
    pub selected_gamma: f64,
    pub selected_ccr: f64,
}

impl TuningReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# scale={} folds={} seed={} selected_c={:e} selected_gamma={:e} selected_ccr={:e}",
            self.scale, self.folds, self.seed, self.selected_c, self.selected_gamma, self.selected_ccr
        );
        let _ = write!(out, "c,gamma,mean_ccr,nonconverged_folds,selected");
        for k in 0..self.folds {
            let _ = write!(out, ",fold{k}");
        }
        out.push('\n');
        for cell in &self.cells {
            let selected = cell.c == self.selected_c && cell.gamma == self.selected_gamma;
            let _ = write!(
                out,
                "{:e},{:e},{:e},{},{}",
                cell.c, cell.gamma, cell.mean_ccr, cell.nonconverged_folds, selected as u8
            );
            for v in &cell.fold_ccr {
                let _ = write!(out, ",{v:e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Fold index for every sample. Each class is shuffled with the seed and the
/// classes are dealt round-robin in sequence, so fold sizes differ by at most
/// one and every fold sees both classes.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Validation(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0usize; labels.len()];
    let mut next = 0usize;
    for class in [Label::Attack, Label::BonaFide] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(Error::Validation(format!(
                "only {} {class} samples, cannot stratify into {k} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    Ok(fold)
}

/// Kernel expansion `sum coef_t K_t + bias`, summed in support vector order.
/// Shared by training-time scoring and [`SvmModel::decision_value`].
#[inline]
pub(crate) fn expansion(terms: impl Iterator<Item = (f64, f64)>, bias: f64) -> f64 {
    let mut sum = 0.0;
    for (coef, k) in terms {
        sum += coef * k;
    }
    sum + bias
}

fn better(a: &CellResult, b: &CellResult) -> bool {
    match a.mean_ccr.partial_cmp(&b.mean_ccr) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Less) | None => false,
        Some(Ordering::Equal) => (a.c, a.gamma) < (b.c, b.gamma),
    }
}

/// Cross-validate every grid cell, pick the best mean CCR (ties: smaller C,
/// then smaller gamma) and retrain on all data with the winner.
pub fn train_auto(
    data: &TrainSet,
    grid: &ParamGrid,
    k: usize,
    seed: u64,
    params: &SmoParams,
) -> Result<(SvmModel, TuningReport)> {
    grid.validate()?;
    if data.len() < k {
        return Err(Error::Validation(format!(
            "{} samples cannot be split into {k} folds",
            data.len()
        )));
    }
    let folds = stratified_folds(data.labels(), k, seed)?;
    let n = data.len();
    let y = data.signs();
    let dist = distance_matrix(data.features());
    let split: Vec<(Vec<usize>, Vec<usize>)> = (0..k)
        .map(|f| {
            let train = (0..n).filter(|&i| folds[i] != f).collect();
            let val = (0..n).filter(|&i| folds[i] == f).collect();
            (train, val)
        })
        .collect();

    let per_gamma: Vec<Vec<CellResult>> = grid
        .gamma
        .par_iter()
        .map(|&gamma| {
            let gram = Gram::from_distances(&dist, n, gamma);
            let subgrams: Vec<Gram> = split.iter().map(|(train, _)| gram.select(train)).collect();
            grid.c
                .iter()
                .map(|&c| {
                    let mut fold_ccr = Vec::with_capacity(k);
                    let mut nonconverged_folds = 0;
                    for ((train, val), sub) in split.iter().zip(&subgrams) {
                        let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
                        let sol = smo::solve(sub, &ty, c, params);
                        if !sol.converged {
                            nonconverged_folds += 1;
                        }
                        let svs: Vec<(usize, f64)> = train
                            .iter()
                            .zip(&sol.alpha)
                            .filter(|(_, &a)| a > params.sv_threshold)
                            .map(|(&i, &a)| (i, a * y[i]))
                            .collect();
                        let correct = val
                            .iter()
                            .filter(|&&v| {
                                let row = gram.row(v);
                                let f = expansion(svs.iter().map(|&(i, coef)| (coef, row[i])), sol.bias);
                                Label::from_decision(f).sign() == y[v]
                            })
                            .count();
                        fold_ccr.push(correct as f64 / val.len() as f64);
                    }
                    let mean_ccr = fold_ccr.iter().sum::<f64>() / k as f64;
                    CellResult {
                        c,
                        gamma,
                        fold_ccr,
                        mean_ccr,
                        nonconverged_folds,
                    }
                })
                .collect()
        })
        .collect();

    // report cells in C-major order
    let mut cells = Vec::with_capacity(grid.len());
    for ci in 0..grid.c.len() {
        for row in &per_gamma {
            cells.push(row[ci].clone());
        }
    }
    let best = cells
        .iter()
        .fold(None::<&CellResult>, |best, cell| match best {
            Some(b) if !better(cell, b) => Some(b),
            _ => Some(cell),
        })
        .expect("grid is non-empty");
    let (selected_c, selected_gamma, selected_ccr) = (best.c, best.gamma, best.mean_ccr);
    let model = train_smo(data, selected_c, selected_gamma, params)?;
    Ok((
        model,
        TuningReport {
            scale: data.scale(),
            folds: k,
            seed,
            cells,
            selected_c,
            selected_gamma,
            selected_ccr,
        },
    ))
}
