//! Acceptance test for sampled task pairs with disjoint safe regions.

use super::GridFunction;
use crate::error::{Error, Result};
use crate::metrics::ccl_label;

/// Share of the grid a target region must have in common with the source.
pub const MIN_SHARED_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RejectReason {
    TooFewTargetRegions,
    RegionWithoutSharedArea,
    SharedAreaTooSmall,
}

impl RejectReason {
    pub fn describe(self) -> &'static str {
        match self {
            RejectReason::TooFewTargetRegions => "the target has fewer than two disjoint safe regions",
            RejectReason::RegionWithoutSharedArea => {
                "a target safe region shares no safe area with the source"
            }
            RejectReason::SharedAreaTooSmall => {
                "fewer than two target regions share more than 5% of the space with the source"
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

/// Checks the three conditions on boolean safe masks over one grid.
pub fn rejection_filter_masks(source_safe: &[bool], target_safe: &[bool], shape: &[usize]) -> Result<Verdict> {
    if source_safe.len() != target_safe.len() {
        return Err(Error::Dimension("source and target masks differ in size".into()));
    }
    let lab = ccl_label(target_safe, shape)?;
    if lab.count < 2 {
        return Ok(Verdict::Reject(RejectReason::TooFewTargetRegions));
    }
    let mut shared = vec![0usize; lab.count];
    for (i, l) in lab.labels.iter().enumerate() {
        if *l > 0 && source_safe[i] {
            shared[l - 1] += 1;
        }
    }
    if shared.iter().any(|s| *s == 0) {
        return Ok(Verdict::Reject(RejectReason::RegionWithoutSharedArea));
    }
    let n = target_safe.len() as f64;
    let big = shared.iter().filter(|s| **s as f64 > MIN_SHARED_FRACTION * n).count();
    if big < 2 {
        return Ok(Verdict::Reject(RejectReason::SharedAreaTooSmall));
    }
    Ok(Verdict::Accept)
}

/// Same test on grid functions; a cell is safe when every safety output
/// clears its threshold.
pub fn rejection_filter(source: &GridFunction, target: &GridFunction, thresholds: &[f64]) -> Result<Verdict> {
    if source.grid != target.grid {
        return Err(Error::Dimension("source and target grids differ".into()));
    }
    rejection_filter_masks(&source.safe_mask(thresholds)?, &target.safe_mask(thresholds)?, &target.grid.shape)
}
