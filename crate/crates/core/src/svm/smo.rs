//! Sequential minimal optimization for the soft-margin SVM dual.
//!
//! Minimizes `f(a) = 1/2 a'Qa - e'a` with `Q_ij = y_i y_j K_ij` subject to
//! `0 <= a_i <= C` and `y'a = 0`. Working pairs are chosen by the maximal
//! violating index `i` and the second-order gain rule for `j`; the solver
//! stops once the largest KKT violation gap `m(a) - M(a)` drops below `tol`.

use crate::error::TrainingDiagnostics;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoParams {
    pub tol: f64,
    /// Budget of pair updates.
    pub max_iter: u64,
    /// Multipliers at or below this are not kept as support vectors.
    pub sv_threshold: f64,
}

impl Default for SmoParams {
    fn default() -> Self {
        SmoParams {
            tol: 1e-3,
            max_iter: 10_000_000,
            sv_threshold: 1e-8,
        }
    }
}

/// Dense symmetric kernel matrix over the training points.
#[derive(Debug, Clone)]
pub(crate) struct Gram {
    n: usize,
    data: Vec<f64>,
}

impl Gram {
    pub fn from_distances(dist: &[f64], n: usize, gamma: f64) -> Self {
        Gram {
            n,
            data: dist.iter().map(|&d| (-gamma * d).exp()).collect(),
        }
    }

    /// Sub-matrix over `idx` (in that order).
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * idx.len());
        for &i in idx {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            data.extend(idx.iter().map(|&j| row[j]));
        }
        Gram { n: idx.len(), data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

#[derive(Debug, Clone)]
pub(crate) struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: u64,
    pub kkt_gap: f64,
    pub objective: f64,
    pub converged: bool,
}

impl DualSolution {
    pub fn diagnostics(&self, c: f64, gamma: f64) -> TrainingDiagnostics {
        TrainingDiagnostics {
            iterations: self.iterations,
            kkt_gap: self.kkt_gap,
            objective: self.objective,
            c,
            gamma,
        }
    }
}

/// `y` holds +1.0 / -1.0.
pub(crate) fn solve(gram: &Gram, y: &[f64], c: f64, params: &SmoParams) -> DualSolution {
    let n = y.len();
    debug_assert_eq!(gram.n, n);
    let mut alpha = vec![0.0f64; n];
    // gradient of f: Q a - e
    let mut grad = vec![-1.0f64; n];
    let diag: Vec<f64> = (0..n).map(|i| gram.get(i, i)).collect();

    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0u64;
    let mut gap;
    let converged = loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if in_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = t;
                }
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut best_gain = f64::INFINITY;
        if i_sel != usize::MAX {
            let ki = gram.row(i_sel);
            for t in 0..n {
                if !in_low(alpha[t], y[t]) {
                    continue;
                }
                let yg = y[t] * grad[t];
                if yg > gmax2 {
                    gmax2 = yg;
                }
                let b = gmax + yg;
                if b > 0.0 {
                    let mut a = diag[i_sel] + diag[t] - 2.0 * ki[t];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let gain = -(b * b) / a;
                    if gain < best_gain {
                        best_gain = gain;
                        j_sel = t;
                    }
                }
            }
        }
        gap = gmax + gmax2;
        if i_sel == usize::MAX || j_sel == usize::MAX || gap < params.tol {
            break true;
        }
        if iterations >= params.max_iter {
            break false;
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let kij = gram.get(i, j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = diag[i] + diag[j] - 2.0 * kij;
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let di = (alpha[i] - old_i) * y[i];
        let dj = (alpha[j] - old_j) * y[j];
        let (ki, kj) = (gram.row(i), gram.row(j));
        for t in 0..n {
            grad[t] += y[t] * (ki[t] * di + kj[t] * dj);
        }
    };

    let bias = -rho(&alpha, &grad, y, c);
    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (1.0 - g)).sum::<f64>();
    DualSolution {
        alpha,
        bias,
        iterations,
        kkt_gap: gap.max(0.0),
        objective,
        converged,
    }
}

/// Offset such that `f(x) = sum a_i y_i K(x_i, x) - rho`: the mean of
/// `y_i G_i` over free multipliers, or the midpoint of the feasible interval
/// when every multiplier sits at a bound.
fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}
