//! Binary RBF-kernel SVMs: SMO training, cross-validated parameter search,
//! prediction and a versioned text model format.

mod kernel;
mod model;
mod smo;
mod tune;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use kernel::rbf_kernel;
pub use model::{dual_objective, train_smo, SvmModel, TrainSet, MODEL_FORMAT_VERSION};
pub use smo::SmoParams;
pub use tune::{stratified_folds, train_auto, CellResult, ParamGrid, TuningReport};

/// Presentation class. Attacks (textured lenses) are the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Attack,
    BonaFide,
}

impl Label {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Label::Attack => 1.0,
            Label::BonaFide => -1.0,
        }
    }

    /// Zero maps to bona fide.
    #[inline]
    pub fn from_decision(value: f64) -> Label {
        if value > 0.0 {
            Label::Attack
        } else {
            Label::BonaFide
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Attack => Label::BonaFide,
            Label::BonaFide => Label::Attack,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Attack => "attack",
            Label::BonaFide => "bonafide",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "attack" | "textured" | "1" | "+1" => Ok(Label::Attack),
            "bonafide" | "bona_fide" | "bona-fide" | "-1" => Ok(Label::BonaFide),
            other => Err(Error::Format(format!("unknown label `{other}`"))),
        }
    }
}
