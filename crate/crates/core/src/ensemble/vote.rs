use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::svm::Label;

/// Seeded coin for breaking exact ties. Draws are counted so reports can
/// show how many decisions were random.
#[derive(Debug, Clone)]
pub struct TieBreaker {
    seed: u64,
    rng: ChaCha8Rng,
    draws: u64,
}

impl TieBreaker {
    pub fn new(seed: u64) -> Self {
        TieBreaker {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            draws: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    fn draw(&mut self) -> Label {
        self.draws += 1;
        if self.rng.gen_bool(0.5) {
            Label::Attack
        } else {
            Label::BonaFide
        }
    }
}

/// Strict majority of `predictions`; an exact tie is settled by `ties`.
pub fn vote(predictions: &[Label], ties: &mut TieBreaker) -> Result<Label> {
    if predictions.is_empty() {
        return Err(Error::Validation("cannot vote on an empty prediction list".into()));
    }
    let attack = predictions.iter().filter(|&&p| p == Label::Attack).count();
    let bona = predictions.len() - attack;
    Ok(match attack.cmp(&bona) {
        std::cmp::Ordering::Greater => Label::Attack,
        std::cmp::Ordering::Less => Label::BonaFide,
        std::cmp::Ordering::Equal => ties.draw(),
    })
}
