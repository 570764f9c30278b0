//! Run-length codec for binary masks.
//!
//! Runs alternate unset/set over the row-major pixels, always starting with
//! an unset run (which may be zero long). Every later run is non-zero and
//! the runs sum to `width * height`, so each mask has exactly one encoding.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::MaskPlane;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RleError {
    #[error("runs sum to {got}, expected {expected}")]
    RunSum { expected: u64, got: u64 },
    #[error("zero-length run at position {0}")]
    ZeroRun(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub width: u32,
    pub height: u32,
    pub runs: Vec<u32>,
}

impl RleMask {
    #[allow(clippy::len_zero)]
    pub fn encode(m: &MaskPlane) -> Self {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for i in 0..m.len() {
            let bit = m.get_index(i);
            if bit != current {
                runs.push(len);
                current = bit;
                len = 0;
            }
            len += 1;
        }
        if m.len() != 0 {
            runs.push(len);
        }
        RleMask { width: m.width(), height: m.height(), runs }
    }

    pub fn validate(&self) -> Result<(), RleError> {
        if let Some(pos) = self.runs.iter().skip(1).position(|r| *r == 0) {
            return Err(RleError::ZeroRun(pos + 1));
        }
        let expected = self.width as u64 * self.height as u64;
        let got: u64 = self.runs.iter().map(|r| *r as u64).sum();
        if got != expected || (expected == 0 && !self.runs.is_empty()) {
            return Err(RleError::RunSum { expected, got });
        }
        Ok(())
    }

    pub fn decode(&self) -> Result<MaskPlane, RleError> {
        self.validate()?;
        let mut m = MaskPlane::new(self.width, self.height);
        let mut pos = 0usize;
        for (ri, &r) in self.runs.iter().enumerate() {
            if ri % 2 == 1 {
                for i in pos..pos + r as usize {
                    m.set_index(i, true);
                }
            }
            pos += r as usize;
        }
        Ok(m)
    }
}
