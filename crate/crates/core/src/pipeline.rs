//! Plan, sample, construct, and verify in one call.

use serde::Serialize;

use crate::alignment::{execute_plan, plan_alignment, prepare_channels, AlignmentPlan, Unit};
use crate::channel::ChannelSet;
use crate::error::Result;
use crate::linalg::Tolerance;
use crate::relay::{
    assemble_forward_matrix, build_uplink_projectors, design_downlink, estimate_dof_slope, verify_end_to_end,
    RelayProcessor, VerificationReport,
};
use crate::rng::{streams, trial_rng};

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    /// Use relay antenna deactivation where it helps.
    pub improved: bool,
    pub identical_blocks: bool,
    pub tol: Tolerance,
}

impl BuildOptions {
    pub fn new(m: usize, n: usize, k: usize, seed: u64) -> Self {
        Self {
            m,
            n,
            k,
            seed,
            improved: false,
            identical_blocks: false,
            tol: Tolerance::default(),
        }
    }

    pub fn improved(mut self, improved: bool) -> Self {
        self.improved = improved;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Construction {
    pub plan: AlignmentPlan,
    pub channels: ChannelSet,
    pub units: Vec<Unit>,
    #[serde(skip)]
    pub processor: RelayProcessor,
    pub report: VerificationReport,
}

impl Construction {
    pub fn downlink_units(&self) -> &[Unit] {
        &self.processor.downlink.units
    }

    pub fn slope(&self, snr_db: &[f64]) -> Result<f64> {
        estimate_dof_slope(&self.channels, &self.units, &self.processor, snr_db)
    }
}

/// Runs the whole construction for one seed. Errors are construction
/// failures; a construction that builds but does not verify is returned with
/// `report.pass == false`.
pub fn build(opts: &BuildOptions) -> Result<Construction> {
    let tol = opts.tol;
    let plan = plan_alignment(opts.m, opts.n, opts.k, opts.improved)?;
    let channels = prepare_channels(&plan, opts.seed, tol, opts.identical_blocks)?;
    let units = execute_plan(&plan, &channels, &mut trial_rng(opts.seed, streams::UPLINK_UNITS), &tol)?;
    let uplink = build_uplink_projectors(&units, &tol)?;
    let downlink = design_downlink(&plan, &channels, &mut trial_rng(opts.seed, streams::DOWNLINK_UNITS), &tol)?;
    let processor = assemble_forward_matrix(uplink, downlink, &units, 1.0)?;
    let report = verify_end_to_end(&channels, &units, &processor, &tol)?;
    Ok(Construction {
        plan,
        channels,
        units,
        processor,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dof::Rational;

    #[test]
    fn builds_and_counts() {
        let c = build(&BuildOptions::new(7, 12, 4, 1)).unwrap();
        assert!(c.report.pass);
        assert_eq!(c.report.counted_d_sum, Rational::from_integer(24));
        let c = build(&BuildOptions::new(1, 2, 4, 1).improved(true)).unwrap();
        assert!(c.report.pass);
        assert_eq!(c.report.counted_d_sum, Rational::new(24, 7));
    }

    #[test]
    fn json_has_sections() {
        let c = build(&BuildOptions::new(2, 3, 3, 1)).unwrap();
        let v = serde_json::to_value(&c).unwrap();
        for key in ["plan", "channels", "units", "report"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["report"]["d_sum"], 6);
    }
}
