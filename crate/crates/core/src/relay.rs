//! Relay forwarding by pairwise projections, downlink receive vectors, and
//! end-to-end checks of the resulting user-to-user chains.
//!
//! For unit `l` and pair `{k, k'}` the relay projects its received signal
//! with `P` onto the complement of every other stream's direction, leaving
//! only the superposition of the pair's two streams, and re-transmits it
//! through `W`, which is orthogonal to every other pair's downlink direction.
//! User `k` then sees `g^T W P (h^(k',k) x' + h^(k,k') x)` and removes its own
//! signal.

use nalgebra::RowDVector;
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::alignment::{construct_units, AlignmentPlan, Unit};
use crate::channel::ChannelSet;
use crate::dof::Rational;
use crate::error::{Error, Result};
use crate::linalg::{column_basis, from_columns, ComplexMatrix, ComplexVector, Tolerance};

/// Smallest coefficient magnitude that counts as a usable desired or self
/// signal.
pub const COEFFICIENT_FLOOR: f64 = 1e-6;

/// Projector serving one unordered pair `(k, k')`, `k < k'`, of one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PairProjector {
    pub unit: usize,
    pub pair: (usize, usize),
    pub matrix: ComplexMatrix,
    pub rank: usize,
}

/// Downlink half of the design: receive units built on the transposed
/// downlink channels, and the transmit projectors `W` derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct Downlink {
    /// Receive vectors `v^(k,k')` are the beamformers of these units; their
    /// equivalent vectors are `g^(k,k') = G_k^T v^(k,k')`.
    pub units: Vec<Unit>,
    pub projectors: Vec<PairProjector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelayProcessor {
    pub uplink_projectors: Vec<PairProjector>,
    pub downlink: Downlink,
    /// `sum W P` before power scaling.
    pub unscaled: ComplexMatrix,
    /// `alpha * unscaled`.
    pub forward: ComplexMatrix,
    pub alpha: f64,
}

fn all_vectors(units: &[Unit]) -> Vec<(usize, (usize, usize), &ComplexVector)> {
    units
        .iter()
        .enumerate()
        .flat_map(|(l, u)| u.streams.iter().map(move |s| (l, s.pair, &s.equivalent)))
        .collect()
}

fn relay_dim(units: &[Unit]) -> usize {
    units
        .iter()
        .flat_map(|u| u.streams.first())
        .map(|s| s.equivalent.len())
        .next()
        .unwrap_or(0)
}

/// Projector onto the complement of every equivalent vector except those of
/// pair `pair` in unit `unit`.
fn pair_projectors(units: &[Unit], tol: &Tolerance) -> Result<Vec<PairProjector>> {
    let n = relay_dim(units);
    let vectors = all_vectors(units);
    let mut out = Vec::new();
    for (l, unit) in units.iter().enumerate() {
        for (a, b) in unit.pairs() {
            let others: Vec<&ComplexVector> = vectors
                .iter()
                .filter(|(l2, p, _)| !(*l2 == l && (*p == (a, b) || *p == (b, a))))
                .map(|(_, _, v)| *v)
                .collect();
            let q = column_basis(&from_columns(n, &others)?, tol)?;
            let rank = n - q.ncols();
            if rank == 0 {
                return Err(Error::ProjectorCollapse { unit: l, pair: (a, b) });
            }
            let mut matrix = ComplexMatrix::identity(n, n);
            if q.ncols() > 0 {
                matrix -= &q * q.adjoint();
            }
            out.push(PairProjector {
                unit: l,
                pair: (a, b),
                matrix,
                rank,
            });
        }
    }
    Ok(out)
}

/// `P^(k,k')_l` for every unit and pair: the complement of all other streams
/// of all units.
pub fn build_uplink_projectors(units: &[Unit], tol: &Tolerance) -> Result<Vec<PairProjector>> {
    pair_projectors(units, tol)
}

/// Runs the uplink construction on `G_k^T` and builds `W^(k,k')_l` as the
/// transpose of the complement projector of all other downlink directions,
/// so that `g^T W = 0` for every `g` outside the pair.
pub fn design_downlink<R: Rng + ?Sized>(
    plan: &AlignmentPlan,
    ch: &ChannelSet,
    rng: &mut R,
    tol: &Tolerance,
) -> Result<Downlink> {
    let units = construct_units(plan, &ch.downlink_transposed(), rng, tol)?;
    let projectors = pair_projectors(&units, tol)?
        .into_iter()
        .map(|p| PairProjector {
            matrix: p.matrix.transpose(),
            ..p
        })
        .collect();
    Ok(Downlink { units, projectors })
}

/// `E[y y^H] = power * sum h h^H + noise * I` at the relay.
fn received_covariance(units: &[Unit], n: usize, stream_power: f64, noise: f64) -> ComplexMatrix {
    let mut e = ComplexMatrix::identity(n, n) * Complex64::new(noise, 0.0);
    for (_, _, h) in all_vectors(units) {
        e += (h * h.adjoint()) * Complex64::new(stream_power, 0.0);
    }
    e
}

/// `alpha` with `alpha^2 tr(F0 E F0^H) = power`.
fn power_scale(unscaled: &ComplexMatrix, covariance: &ComplexMatrix, power: f64) -> f64 {
    let load = (unscaled * covariance * unscaled.adjoint()).trace().re;
    if load > 0.0 {
        (power / load).sqrt()
    } else {
        1.0
    }
}

/// `F = alpha sum_l sum_{k<k'} W^(k,k')_l P^(k,k')_l` with `alpha` meeting the
/// relay power `power` exactly under unit-power streams and unit noise.
pub fn assemble_forward_matrix(
    uplink_projectors: Vec<PairProjector>,
    downlink: Downlink,
    units: &[Unit],
    power: f64,
) -> Result<RelayProcessor> {
    let n = uplink_projectors
        .first()
        .map_or_else(|| relay_dim(units), |p| p.matrix.nrows());
    let mut unscaled = ComplexMatrix::zeros(n, n);
    for p in &uplink_projectors {
        let w = downlink
            .projectors
            .iter()
            .find(|w| w.unit == p.unit && w.pair == p.pair)
            .ok_or_else(|| {
                Error::ShapeMismatch(format!("no downlink projector for unit {} pair {:?}", p.unit, p.pair))
            })?;
        if w.matrix.shape() != p.matrix.shape() {
            return Err(Error::ShapeMismatch("uplink and downlink projectors differ in size".into()));
        }
        unscaled += &w.matrix * &p.matrix;
    }
    let alpha = power_scale(&unscaled, &received_covariance(units, n, 1.0, 1.0), power);
    Ok(RelayProcessor {
        forward: &unscaled * Complex64::new(alpha, 0.0),
        uplink_projectors,
        downlink,
        unscaled,
        alpha,
    })
}

/// Measured coefficients of one stream at its receiver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamRecord {
    pub unit: usize,
    /// `[receiver, sender]`: user `pair[0]` decodes the message from `pair[1]`.
    pub pair: [usize; 2],
    /// `|c|` for the partner's stream towards the receiver.
    pub desired: f64,
    /// `|c|` for the receiver's own stream in the pair (removed as known
    /// self-interference).
    pub partner: f64,
    /// Largest `|c|` over all other streams, relative to `max(desired, 1)`.
    pub leakage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub streams: Vec<StreamRecord>,
    /// Streams meeting the decodability conditions.
    pub decodable: usize,
    pub extension: usize,
    /// `decodable / extension`.
    pub counted_d_sum: Rational,
    pub pass: bool,
}

impl Serialize for VerificationReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut out = s.serialize_struct("VerificationReport", 4)?;
        out.serialize_field("pass", &self.pass)?;
        if self.counted_d_sum.is_integer() {
            out.serialize_field("d_sum", &self.counted_d_sum.to_integer())?;
        } else {
            out.serialize_field("d_sum", &(*self.counted_d_sum.numer() as f64 / *self.counted_d_sum.denom() as f64))?;
        }
        out.serialize_field("d_sum_exact", &self.counted_d_sum.to_string())?;
        out.serialize_field("streams", &self.streams)?;
        out.end()
    }
}

/// Everything needed to evaluate the user-to-user chains.
struct Chains {
    /// `(unit, (from, to), h)` recomputed from channels and beamformers.
    sources: Vec<(usize, (usize, usize), ComplexVector)>,
    /// `(unit, (receiver, sender), g)`.
    receivers: Vec<(usize, (usize, usize), ComplexVector)>,
}

fn chains(ch: &ChannelSet, units: &[Unit], downlink: &Downlink) -> Result<Chains> {
    if downlink.units.len() != units.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} uplink units but {} downlink units",
            units.len(),
            downlink.units.len()
        )));
    }
    let mut sources = Vec::new();
    let mut receivers = Vec::new();
    for (l, (up, down)) in units.iter().zip(&downlink.units).enumerate() {
        for s in &up.streams {
            sources.push((l, s.pair, &ch.uplink[s.pair.0] * &s.beamformer));
            let v = &down
                .stream(s.pair.0, s.pair.1)
                .ok_or_else(|| Error::ShapeMismatch(format!("downlink unit {l} lacks pair {:?}", s.pair)))?
                .beamformer;
            receivers.push((l, s.pair, ch.downlink[s.pair.0].transpose() * v));
        }
    }
    Ok(Chains { sources, receivers })
}

/// Chain coefficient `row . h` (plain transpose product).
fn coefficient(row: &RowDVector<Complex64>, h: &ComplexVector) -> Complex64 {
    row.iter().zip(h.iter()).map(|(a, b)| a * b).sum()
}

/// Evaluates every stream's chain `g^T F h` (with `F` taken before power
/// scaling) against every transmitted stream.
///
/// Source directions are recomputed from the channels and the units'
/// beamformers, so a beamformer altered after the relay was designed shows up
/// as leakage.
pub fn verify_end_to_end(
    ch: &ChannelSet,
    units: &[Unit],
    processor: &RelayProcessor,
    tol: &Tolerance,
) -> Result<VerificationReport> {
    let Chains { sources, receivers } = chains(ch, units, &processor.downlink)?;
    let mut records = Vec::with_capacity(receivers.len());
    let mut decodable = 0;
    for (l, (me, other), g) in &receivers {
        let row = g.transpose() * &processor.unscaled;
        let mut desired = 0.0;
        let mut partner = 0.0;
        let mut worst: f64 = 0.0;
        for (l2, pair, h) in &sources {
            let c = coefficient(&row, h).norm();
            if l2 == l && *pair == (*other, *me) {
                desired = c;
            } else if l2 == l && *pair == (*me, *other) {
                partner = c;
            } else {
                worst = worst.max(c);
            }
        }
        let leakage = worst / desired.max(1.0);
        if desired > COEFFICIENT_FLOOR && partner > COEFFICIENT_FLOOR && leakage <= tol.leakage_abs {
            decodable += 1;
        }
        records.push(StreamRecord {
            unit: *l,
            pair: [*me, *other],
            desired,
            partner,
            leakage,
        });
    }
    Ok(VerificationReport {
        pass: decodable == records.len(),
        streams: records,
        decodable,
        extension: ch.extension,
        counted_d_sum: Rational::new(decodable as i64, ch.extension as i64),
    })
}

/// Least-squares slope of the achievable sum rate (bits per channel use)
/// against `log2(SNR)`.
///
/// Users and relay transmit at power `SNR` with unit noise everywhere; each
/// user splits its power evenly over its streams, the relay rescales `F` to
/// its power budget at every SNR, and each stream's SINR counts leakage,
/// forwarded relay noise and receiver noise, with self-interference removed.
pub fn estimate_dof_slope(
    ch: &ChannelSet,
    units: &[Unit],
    processor: &RelayProcessor,
    snr_db: &[f64],
) -> Result<f64> {
    if snr_db.len() < 2 {
        return Err(Error::InvalidSweep(format!("need at least 2 SNR points, got {}", snr_db.len())));
    }
    if snr_db.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSweep("SNR points must be strictly ascending".into()));
    }
    if snr_db.iter().any(|&s| !s.is_finite() || s < 30.0) {
        return Err(Error::InvalidSweep("SNR points must be finite and at least 30 dB".into()));
    }
    if units.is_empty() {
        return Ok(0.0);
    }
    let Chains { sources, receivers } = chains(ch, units, &processor.downlink)?;
    let max_streams = (0..ch.k)
        .map(|k| sources.iter().filter(|(_, p, _)| p.0 == k).count())
        .max()
        .unwrap_or(1)
        .max(1);
    let n = processor.unscaled.nrows();
    let mut xs = Vec::with_capacity(snr_db.len());
    let mut ys = Vec::with_capacity(snr_db.len());
    for &db in snr_db {
        let snr = 10f64.powf(db / 10.0);
        let p = snr / max_streams as f64;
        let alpha = power_scale(&processor.unscaled, &received_covariance(units, n, p, 1.0), snr);
        let mut rate = 0.0;
        for (l, (me, other), g) in &receivers {
            let row = g.transpose() * &processor.unscaled * Complex64::new(alpha, 0.0);
            let mut signal = 0.0;
            let mut interference = 0.0;
            for (l2, pair, h) in &sources {
                let c = coefficient(&row, h).norm_sqr() * p;
                if l2 == l && *pair == (*other, *me) {
                    signal = c;
                } else if !(l2 == l && *pair == (*me, *other)) {
                    interference += c;
                }
            }
            let relay_noise = row.norm_squared();
            let receiver_noise = 1.0;
            rate += (1.0 + signal / (interference + relay_noise + receiver_noise)).log2();
        }
        xs.push(snr.log2());
        ys.push(rate / ch.extension as f64);
    }
    let mean_x = xs.iter().sum::<f64>() / xs.len() as f64;
    let mean_y = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{build_random_unit, execute_plan, plan_alignment, prepare_channels};
    use crate::channel::{sample_channel_set, SystemConfig};
    use crate::linalg::numerical_rank;
    use crate::rng::{streams, trial_rng};

    fn full(m: usize, n: usize, k: usize, seed: u64) -> (ChannelSet, Vec<Unit>, RelayProcessor) {
        let tol = Tolerance::default();
        let plan = plan_alignment(m, n, k, false).unwrap();
        let ch = prepare_channels(&plan, seed, tol, false).unwrap();
        let units = execute_plan(&plan, &ch, &mut trial_rng(seed, streams::UPLINK_UNITS), &tol).unwrap();
        let up = build_uplink_projectors(&units, &tol).unwrap();
        let down = design_downlink(&plan, &ch, &mut trial_rng(seed, streams::DOWNLINK_UNITS), &tol).unwrap();
        let proc = assemble_forward_matrix(up, down, &units, 1.0).unwrap();
        (ch, units, proc)
    }

    #[test]
    fn random_unit_projector_rank() {
        let tol = Tolerance::default();
        let ch = sample_channel_set(&SystemConfig::new(2, 6, 3, 1).unwrap()).unwrap();
        let unit = build_random_unit(&ch.uplink, &mut trial_rng(1, 2)).unwrap();
        let ps = build_uplink_projectors(&[unit], &tol).unwrap();
        assert_eq!(ps.len(), 3);
        assert!(ps.iter().all(|p| p.rank == 2));
    }

    #[test]
    fn projectors_are_orthogonal_projections() {
        let tol = Tolerance::default();
        let (_, units, proc) = full(2, 3, 3, 4);
        assert_eq!(proc.uplink_projectors.len(), 3);
        for p in &proc.uplink_projectors {
            assert_eq!(p.rank, 1);
            let m = &p.matrix;
            assert!((m * m - m).norm() <= 10.0 * tol.leakage_abs);
            assert!((m.adjoint() - m).norm() <= 10.0 * tol.leakage_abs);
            assert_eq!(numerical_rank(m, &tol).unwrap(), 1);
        }
        // downlink pairs mirror the uplink alignment
        for (up, down) in units.iter().zip(&proc.downlink.units) {
            assert_eq!(up.span_dim(&tol).unwrap(), down.span_dim(&tol).unwrap());
        }
    }

    #[test]
    fn single_pair_identity() {
        let ch = sample_channel_set(&SystemConfig::new(3, 5, 3, 2).unwrap()).unwrap();
        let tol = Tolerance::default();
        let unit = crate::alignment::build_aligned_unit(&ch.uplink, &[0, 1], 0, &tol).unwrap();
        let ps = build_uplink_projectors(std::slice::from_ref(&unit), &tol).unwrap();
        assert_eq!(ps[0].matrix, ComplexMatrix::identity(5, 5));
        let down = Downlink {
            units: vec![unit.clone()],
            projectors: ps.clone(),
        };
        let proc = assemble_forward_matrix(ps, down, &[unit], 2.0).unwrap();
        assert!(proc.alpha > 0.0);
        let expect = ComplexMatrix::identity(5, 5) * Complex64::new(proc.alpha, 0.0);
        assert!((proc.forward - expect).norm() < 1e-12);
    }

    #[test]
    fn relay_power_is_met() {
        let (_, units, proc) = full(2, 3, 3, 8);
        let n = proc.forward.nrows();
        let e = received_covariance(&units, n, 1.0, 1.0);
        let used = (&proc.forward * e * proc.forward.adjoint()).trace().re;
        assert!((used - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pair_aligned_system_is_decodable() {
        let tol = Tolerance::default();
        let (ch, units, proc) = full(2, 3, 3, 1);
        let report = verify_end_to_end(&ch, &units, &proc, &tol).unwrap();
        assert!(report.pass);
        assert_eq!(report.counted_d_sum, Rational::from_integer(6));
        let v = serde_json::to_value(&report).unwrap();
        assert_eq!(v["d_sum"], 6);
        assert_eq!(v["streams"].as_array().unwrap().len(), 6);
    }

    #[test]
    fn corrupted_beamformer_fails() {
        let tol = Tolerance::default();
        let (ch, mut units, proc) = full(2, 3, 3, 1);
        units[0].streams[0].beamformer[0] += Complex64::new(1.0, 0.0);
        let report = verify_end_to_end(&ch, &units, &proc, &tol).unwrap();
        assert!(!report.pass);
        assert!(report.streams.iter().any(|s| s.leakage > tol.leakage_abs));
    }

    #[test]
    fn slope_tracks_streams() {
        let (ch, units, proc) = full(2, 3, 3, 1);
        let slope = estimate_dof_slope(&ch, &units, &proc, &[40.0, 50.0, 60.0]).unwrap();
        assert!((slope - 6.0).abs() < 0.3, "slope {slope}");
        assert!(matches!(
            estimate_dof_slope(&ch, &units, &proc, &[40.0]),
            Err(Error::InvalidSweep(_))
        ));
        assert!(estimate_dof_slope(&ch, &units, &proc, &[50.0, 40.0]).is_err());
        assert!(estimate_dof_slope(&ch, &units, &proc, &[10.0, 40.0]).is_err());
        assert_eq!(estimate_dof_slope(&ch, &[], &proc, &[40.0, 50.0]).unwrap(), 0.0);
    }
}
