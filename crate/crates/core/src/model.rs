use crate::criticality::{classify, CatalystSet, Regime, DEFAULT_TOLERANCE};
use crate::error::Result;
use crate::walk::WalkSpec;

/// A catalytic branching random walk: the jump law plus the catalysts.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub walk: WalkSpec,
    pub catalysts: CatalystSet,
}

impl Model {
    pub fn new(walk: WalkSpec, catalysts: CatalystSet) -> Self {
        Model { walk, catalysts }
    }

    pub fn classify(&self) -> Result<Regime> {
        classify(&self.walk, &self.catalysts, DEFAULT_TOLERANCE)
    }

    pub fn positions(&self) -> Vec<i64> {
        self.catalysts.positions()
    }
}
