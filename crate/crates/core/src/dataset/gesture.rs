use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Suturing gesture vocabulary. There is no `G7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GestureLabel {
    G1,
    G2,
    G3,
    G4,
    G5,
    G6,
    G8,
    G9,
    G10,
    G11,
    /// Frames not covered by any annotated segment. Never a training target.
    Unlabeled,
}

/// Number of gesture classes in the vocabulary.
pub const NUM_GESTURES: usize = 10;

pub type GestureTimeline = Vec<GestureLabel>;

impl GestureLabel {
    pub const ALL: [GestureLabel; NUM_GESTURES] = [
        GestureLabel::G1,
        GestureLabel::G2,
        GestureLabel::G3,
        GestureLabel::G4,
        GestureLabel::G5,
        GestureLabel::G6,
        GestureLabel::G8,
        GestureLabel::G9,
        GestureLabel::G10,
        GestureLabel::G11,
    ];

    /// Dense class index in `0..10`, or `None` for [`GestureLabel::Unlabeled`].
    pub fn class_index(self) -> Option<usize> {
        Self::ALL.iter().position(|&g| g == self)
    }

    pub fn from_class_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_labeled(self) -> bool {
        self != GestureLabel::Unlabeled
    }

    pub fn description(self) -> &'static str {
        match self {
            GestureLabel::G1 => "Reaching for needle with right hand",
            GestureLabel::G2 => "Positioning needle",
            GestureLabel::G3 => "Pushing needle through tissue",
            GestureLabel::G4 => "Transferring needle from left to right",
            GestureLabel::G5 => "Moving to center with needle in grip",
            GestureLabel::G6 => "Pulling suture with left hand",
            GestureLabel::G8 => "Orienting needle",
            GestureLabel::G9 => "Using right hand to help tighten suture",
            GestureLabel::G10 => "Loosening more suture",
            GestureLabel::G11 => "Dropping suture at end and moving to end points",
            GestureLabel::Unlabeled => "unlabeled",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GestureLabel::G1 => "G1",
            GestureLabel::G2 => "G2",
            GestureLabel::G3 => "G3",
            GestureLabel::G4 => "G4",
            GestureLabel::G5 => "G5",
            GestureLabel::G6 => "G6",
            GestureLabel::G8 => "G8",
            GestureLabel::G9 => "G9",
            GestureLabel::G10 => "G10",
            GestureLabel::G11 => "G11",
            GestureLabel::Unlabeled => "U",
        }
    }
}

impl fmt::Display for GestureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GestureLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        if s == "U" || s == "-" {
            return Ok(GestureLabel::Unlabeled);
        }
        Self::ALL
            .iter()
            .copied()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown gesture label {s:?}")))
    }
}
