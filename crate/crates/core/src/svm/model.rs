use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::bsif::ScaleId;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::svm::kernel::{distance_matrix, squared_distance};
use crate::svm::smo::{self, Gram, SmoParams};
use crate::svm::tune::expansion;
use crate::svm::Label;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_MAGIC: &str = "irispad-svm";

/// Training features for a single scale with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSet {
    scale: ScaleId,
    features: Vec<Vec<f64>>,
    labels: Vec<Label>,
}

impl TrainSet {
    pub fn new(scale: ScaleId, features: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Validation(format!(
                "{} feature vectors but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dim = features
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Validation("training set is empty".into()))?;
        if dim == 0 || features.iter().any(|f| f.len() != dim) {
            return Err(Error::Validation(format!(
                "feature vectors for {scale} do not share one non-zero dimension"
            )));
        }
        let attacks = labels.iter().filter(|&&l| l == Label::Attack).count();
        if attacks == 0 || attacks == labels.len() {
            return Err(Error::Validation(format!(
                "training set for {scale} contains a single class"
            )));
        }
        Ok(TrainSet {
            scale,
            features,
            labels,
        })
    }

    pub fn scale(&self) -> ScaleId {
        self.scale
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.features[0].len()
    }

    pub(crate) fn signs(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.sign()).collect()
    }

    pub fn with_flipped_labels(&self) -> TrainSet {
        TrainSet {
            scale: self.scale,
            features: self.features.clone(),
            labels: self.labels.iter().map(|l| l.flipped()).collect(),
        }
    }
}

/// Trained binary RBF SVM. Positive decision values mean attack.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub scale: ScaleId,
    pub bits: usize,
    pub gamma: f64,
    pub c: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
}

fn check_params(c: f64, gamma: f64, tol: f64) -> Result<()> {
    for (name, v) in [("C", c), ("gamma", gamma), ("tolerance", tol)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Validation(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

pub(crate) fn bits_for_dimension(dim: usize) -> usize {
    if dim.is_power_of_two() {
        dim.trailing_zeros() as usize
    } else {
        0
    }
}

impl SvmModel {
    pub(crate) fn from_solution(
        scale: ScaleId,
        points: &[&[f64]],
        y: &[f64],
        alpha: &[f64],
        bias: f64,
        c: f64,
        gamma: f64,
        sv_threshold: f64,
    ) -> Result<SvmModel> {
        let mut support_vectors = Vec::new();
        let mut dual_coefs = Vec::new();
        for ((p, &yi), &a) in points.iter().zip(y).zip(alpha) {
            if a > sv_threshold {
                support_vectors.push(p.to_vec());
                dual_coefs.push(a * yi);
            }
        }
        if support_vectors.is_empty() {
            return Err(Error::Validation("training produced no support vectors".into()));
        }
        let bits = bits_for_dimension(points[0].len());
        Ok(SvmModel {
            scale,
            bits,
            gamma,
            c,
            support_vectors,
            dual_coefs,
            bias,
        })
    }

    pub fn dimension(&self) -> usize {
        self.support_vectors[0].len()
    }

    /// `sum_i coef_i K(sv_i, x) + b`
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension() {
            return Err(Error::Validation(format!(
                "model for {} expects dimension {}, got {}",
                self.scale,
                self.dimension(),
                x.len()
            )));
        }
        let terms = self
            .support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, &coef)| (coef, (-self.gamma * squared_distance(sv, x)).exp()));
        Ok(expansion(terms, self.bias))
    }

    /// A zero decision value counts as bona fide.
    pub fn predict(&self, x: &[f64]) -> Result<(Label, f64)> {
        let f = self.decision_value(x)?;
        Ok((Label::from_decision(f), f))
    }

    pub fn to_text(&self) -> String {
        let mut body = String::new();
        let _ = writeln!(body, "{MODEL_MAGIC} {MODEL_FORMAT_VERSION}");
        let _ = writeln!(body, "scale {}", self.scale);
        let _ = writeln!(body, "bits {}", self.bits);
        let _ = writeln!(body, "dimension {}", self.dimension());
        let _ = writeln!(body, "gamma {:e}", self.gamma);
        let _ = writeln!(body, "c {:e}", self.c);
        let _ = writeln!(body, "sv_count {}", self.support_vectors.len());
        for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coefs) {
            let _ = write!(body, "sv {coef:e}");
            for v in sv {
                let _ = write!(body, " {v:e}");
            }
            body.push('\n');
        }
        let _ = writeln!(body, "bias {:e}", self.bias);
        let digest = hex_digest(body.as_bytes());
        let _ = writeln!(body, "checksum {digest}");
        body
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_text().into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<SvmModel> {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| Error::Format("model file is not valid UTF-8".into()))?;
        let body_end = text
            .rfind("checksum ")
            .ok_or_else(|| Error::Format("model file has no checksum line".into()))?;
        let (body, tail) = text.split_at(body_end);
        let stored = tail
            .strip_prefix("checksum ")
            .and_then(|t| t.strip_suffix('\n'))
            .ok_or_else(|| Error::Format("malformed checksum line".into()))?;
        if !body.ends_with('\n') || stored != hex_digest(body.as_bytes()) {
            return Err(Error::Format("model checksum mismatch".into()));
        }

        let mut lines = body.lines();
        let mut field = |key: &str| -> Result<&str> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("model file ends before `{key}`")))?;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .ok_or_else(|| Error::Format(format!("expected `{key}` line, found `{line}`")))
        };
        let version: u32 = parse_num(field(MODEL_MAGIC)?, "format version")?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "model format version {version} is not supported (expected {MODEL_FORMAT_VERSION})"
            )));
        }
        let scale: ScaleId = field("scale")?.parse()?;
        let bits: usize = parse_num(field("bits")?, "bits")?;
        let dim: usize = parse_num(field("dimension")?, "dimension")?;
        let gamma: f64 = parse_num(field("gamma")?, "gamma")?;
        let c: f64 = parse_num(field("c")?, "c")?;
        let count: usize = parse_num(field("sv_count")?, "sv_count")?;
        if count == 0 || dim == 0 {
            return Err(Error::Format("model has no support vectors".into()));
        }
        let mut support_vectors = Vec::with_capacity(count);
        let mut dual_coefs = Vec::with_capacity(count);
        for _ in 0..count {
            let values = field("sv")?
                .split(' ')
                .map(|t| parse_num::<f64>(t, "support vector"))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != dim + 1 {
                return Err(Error::Format(format!(
                    "support vector line has {} values, expected {}",
                    values.len(),
                    dim + 1
                )));
            }
            dual_coefs.push(values[0]);
            support_vectors.push(values[1..].to_vec());
        }
        let bias: f64 = parse_num(field("bias")?, "bias")?;
        if lines.next().is_some() {
            return Err(Error::Format("unexpected content before checksum".into()));
        }
        Ok(SvmModel {
            scale,
            bits,
            gamma,
            c,
            support_vectors,
            dual_coefs,
            bias,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<SvmModel> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        SvmModel::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Largest KKT violation over the training set, read from the margins
    /// `y_i f(x_i)`: points with a zero multiplier need margin >= 1, points
    /// at the box bound need margin <= 1, and free points need margin = 1.
    /// Training points absent from the support set have a zero multiplier.
    pub fn kkt_violation(&self, data: &TrainSet) -> Result<f64> {
        let mut worst = 0.0f64;
        for (x, label) in data.features().iter().zip(data.labels()) {
            let margin = label.sign() * self.decision_value(x)?;
            let alpha = self
                .support_vectors
                .iter()
                .position(|sv| sv == x)
                .map(|k| self.dual_coefs[k].abs())
                .unwrap_or(0.0);
            let v = if alpha <= 0.0 {
                1.0 - margin
            } else if alpha >= self.c * (1.0 - 1e-12) {
                margin - 1.0
            } else {
                (margin - 1.0).abs()
            };
            worst = worst.max(v);
        }
        Ok(worst)
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, what: &str) -> Result<T> {
    tok.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad {what} value `{tok}`")))
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Train one RBF SVM with fixed `(C, gamma)`.
pub fn train_smo(data: &TrainSet, c: f64, gamma: f64, params: &SmoParams) -> Result<SvmModel> {
    check_params(c, gamma, params.tol)?;
    let n = data.len();
    let gram = Gram::from_distances(&distance_matrix(data.features()), n, gamma);
    let y = data.signs();
    let sol = smo::solve(&gram, &y, c, params);
    if !sol.converged {
        return Err(Error::Training(sol.diagnostics(c, gamma)));
    }
    let points: Vec<&[f64]> = data.features().iter().map(Vec::as_slice).collect();
    SvmModel::from_solution(
        data.scale(),
        &points,
        &y,
        &sol.alpha,
        sol.bias,
        c,
        gamma,
        params.sv_threshold,
    )
}

/// Dual objective `sum a - 1/2 a'Qa` of a trained model over its training set.
pub fn dual_objective(model: &SvmModel) -> f64 {
    let mut quad = 0.0;
    for (a, ca) in model.support_vectors.iter().zip(&model.dual_coefs) {
        for (b, cb) in model.support_vectors.iter().zip(&model.dual_coefs) {
            quad += ca * cb * (-model.gamma * squared_distance(a, b)).exp();
        }
    }
    model.dual_coefs.iter().map(|v| v.abs()).sum::<f64>() - 0.5 * quad
}
