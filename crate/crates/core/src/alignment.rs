//! Beamforming units and the planner that decides how many of each pattern
//! order fill the relay signal space.
//!
//! User indices are 0-based throughout. An order-`t` unit is built on the
//! nullspace of the stacked channels of a `t`-user group; its `t(t-1)` streams
//! occupy `(t-1)^2` relay dimensions. A random unit spans all `K` users with
//! unaligned beamformers and occupies `K(K-1)` dimensions.

use num_integer::Integer;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    deactivate_relay_antennas, restrict_relay_subspace, sample_channel_set, ChannelSet, SystemConfig,
};
use crate::dof::{self, alpha_beta_ext, DofResult, Rational};
use crate::error::{Error, Result};
use crate::linalg::{
    column_basis, from_columns, hstack, nullspace_basis, numerical_rank, ComplexMatrix, ComplexVector,
    Tolerance,
};
use crate::rng::{complex_gaussian_vector, random_unitary};
use crate::wire::vector_pairs;

/// Largest symbol extension the planner will use.
pub const MAX_EXTENSION: u64 = 64;

/// Relative norm a pair vector must keep after the other streams of its unit
/// are projected out.
const SURVIVAL_REL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternOrder {
    /// Aligned on a group of `t` users.
    Aligned(usize),
    /// Unaligned, all users, random beamformers.
    Random,
}

impl PatternOrder {
    /// Streams a member user sends in one unit.
    pub fn streams_per_user(self, k: usize) -> usize {
        match self {
            PatternOrder::Aligned(t) => t - 1,
            PatternOrder::Random => k - 1,
        }
    }

    /// Relay dimensions one unit occupies.
    pub fn dims_per_unit(self, k: usize) -> usize {
        match self {
            PatternOrder::Aligned(t) => (t - 1) * (t - 1),
            PatternOrder::Random => k * (k - 1),
        }
    }
}

impl Serialize for PatternOrder {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PatternOrder::Aligned(t) => s.serialize_u64(*t as u64),
            PatternOrder::Random => s.serialize_str("random"),
        }
    }
}

impl<'de> Deserialize<'de> for PatternOrder {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) if s == "random" => Ok(PatternOrder::Random),
            serde_json::Value::Number(n) => n
                .as_u64()
                .filter(|&t| t >= 2)
                .map(|t| PatternOrder::Aligned(t as usize))
                .ok_or_else(|| D::Error::custom("pattern order must be an integer >= 2")),
            other => Err(D::Error::custom(format!("invalid pattern order {other}"))),
        }
    }
}

/// One stream of a unit: user `pair.0` sending to user `pair.1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub pair: (usize, usize),
    /// Unit-norm transmit beamformer.
    pub beamformer: ComplexVector,
    /// Direction the stream occupies at the relay, `H_k u`.
    pub equivalent: ComplexVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub order: PatternOrder,
    pub group: Vec<usize>,
    /// One stream per ordered pair of the group, sorted by pair.
    pub streams: Vec<Stream>,
}

impl Unit {
    pub fn stream(&self, from: usize, to: usize) -> Option<&Stream> {
        self.streams.iter().find(|s| s.pair == (from, to))
    }

    /// Unordered pairs `(k, k')` with `k < k'`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.streams
            .iter()
            .filter(|s| s.pair.0 < s.pair.1)
            .map(|s| s.pair)
            .collect()
    }

    /// Equivalent vectors as columns, in stream order.
    pub fn equivalent_matrix(&self) -> ComplexMatrix {
        let rows = self.streams.first().map_or(0, |s| s.equivalent.len());
        let cols: Vec<&ComplexVector> = self.streams.iter().map(|s| &s.equivalent).collect();
        from_columns(rows, &cols).expect("equivalent vectors share a length")
    }

    pub fn span_dim(&self, tol: &Tolerance) -> Result<usize> {
        numerical_rank(&self.equivalent_matrix(), tol)
    }
}

#[derive(Serialize)]
struct WireStream {
    pair: [usize; 2],
    beamformer: Vec<[f64; 2]>,
    equivalent: Vec<[f64; 2]>,
}

impl Serialize for Unit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let streams: Vec<WireStream> = self
            .streams
            .iter()
            .map(|st| WireStream {
                pair: [st.pair.0, st.pair.1],
                beamformer: vector_pairs(&st.beamformer),
                equivalent: vector_pairs(&st.equivalent),
            })
            .collect();
        let mut out = s.serialize_struct("Unit", 3)?;
        out.serialize_field("order", &self.order)?;
        out.serialize_field("group", &self.group)?;
        out.serialize_field("streams", &streams)?;
        out.end()
    }
}

fn normalized(v: ComplexVector, group: &[usize]) -> Result<ComplexVector> {
    let norm = v.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::AlignmentDegenerate {
            group: group.to_vec(),
            reason: "zero beamformer".into(),
        });
    }
    Ok(v.unscale(norm))
}

fn check_channels(channels: &[ComplexMatrix]) -> Result<(usize, usize)> {
    let first = channels
        .first()
        .ok_or_else(|| Error::ShapeMismatch("no channel matrices".into()))?;
    let shape = first.shape();
    if channels.iter().any(|h| h.shape() != shape) {
        return Err(Error::ShapeMismatch("channel matrices differ in shape".into()));
    }
    Ok(shape)
}

fn make_unit(
    channels: &[ComplexMatrix],
    order: PatternOrder,
    group: Vec<usize>,
    mut beamformers: Vec<((usize, usize), ComplexVector)>,
) -> Result<Unit> {
    beamformers.sort_by_key(|(p, _)| *p);
    let streams = beamformers
        .into_iter()
        .map(|(pair, u)| {
            let u = normalized(u, &group)?;
            Ok(Stream {
                pair,
                equivalent: &channels[pair.0] * &u,
                beamformer: u,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Unit { order, group, streams })
}

/// A unit over all users with independently drawn beamformers.
///
/// `channels[k]` maps user `k`'s signal space to the relay.
pub fn build_random_unit<R: Rng + ?Sized>(channels: &[ComplexMatrix], rng: &mut R) -> Result<Unit> {
    let (_, user_dim) = check_channels(channels)?;
    let k = channels.len();
    let mut bf = Vec::with_capacity(k * (k - 1));
    for from in 0..k {
        for to in (0..k).filter(|&to| to != from) {
            bf.push(((from, to), complex_gaussian_vector(rng, user_dim)));
        }
    }
    make_unit(channels, PatternOrder::Random, (0..k).collect(), bf)
}

/// Orthonormal basis of the nullspace of `[H_{g_1}, ..., H_{g_t}]`.
pub fn group_nullspace(channels: &[ComplexMatrix], group: &[usize], tol: &Tolerance) -> Result<ComplexMatrix> {
    check_channels(channels)?;
    let blocks: Vec<&ComplexMatrix> = group.iter().map(|&g| &channels[g]).collect();
    nullspace_basis(&hstack(&blocks)?, tol)
}

fn sign(i: usize, j: usize) -> f64 {
    if i == 0 || j == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Order-`t` unit from `t-1` nullspace columns of the group's stacked channels.
///
/// Column `j` (for local user index `j < t-1`) gives every other member `m`
/// its beamformer towards `j` directly from the `m`-th segment; user `j`'s
/// beamformer towards the last member is solved from the signed combination
/// that must reproduce its own segment. The last member's beamformers all
/// come directly from the columns.
pub fn aligned_unit_from_columns(
    channels: &[ComplexMatrix],
    group: &[usize],
    columns: &ComplexMatrix,
    tol: &Tolerance,
) -> Result<Unit> {
    let (_, dim) = check_channels(channels)?;
    let t = group.len();
    if t < 2 || t > channels.len() {
        return Err(Error::InvalidPatternOrder { t, k: channels.len() });
    }
    if columns.shape() != (t * dim, t - 1) {
        return Err(Error::ShapeMismatch(format!(
            "expected {}x{} nullspace columns, got {:?}",
            t * dim,
            t - 1,
            columns.shape()
        )));
    }
    let segment = |m: usize, j: usize| -> ComplexVector { columns.column(j).rows(m * dim, dim).into_owned() };
    let mut local: Vec<((usize, usize), ComplexVector)> = Vec::with_capacity(t * (t - 1));
    for j in 0..t - 1 {
        for m in (0..t).filter(|&m| m != j) {
            local.push(((m, j), segment(m, j)));
        }
    }
    for j in 0..t - 1 {
        let mut rest = segment(j, j);
        for i in (0..t - 1).filter(|&i| i != j) {
            let u = &local.iter().find(|(p, _)| *p == (j, i)).expect("assigned above").1;
            rest -= u * num_complex::Complex64::new(sign(j, i), 0.0);
        }
        rest.unscale_mut(sign(j, t - 1));
        local.push(((j, t - 1), rest));
    }
    let bf = local
        .into_iter()
        .map(|((m, n), u)| ((group[m], group[n]), u))
        .collect();
    let unit = make_unit(channels, PatternOrder::Aligned(t), group.to_vec(), bf)?;
    check_aligned_unit(&unit, tol)?;
    Ok(unit)
}

/// Order-`t` unit from column block `column_block` (0-based) of the group
/// nullspace.
pub fn build_aligned_unit(
    channels: &[ComplexMatrix],
    group: &[usize],
    column_block: usize,
    tol: &Tolerance,
) -> Result<Unit> {
    let t = group.len();
    if t < 2 || t > channels.len() {
        return Err(Error::InvalidPatternOrder { t, k: channels.len() });
    }
    let basis = group_nullspace(channels, group, tol)?;
    let needed = (column_block + 1) * (t - 1);
    if basis.ncols() < needed {
        return Err(Error::SupplyExhausted {
            group: group.to_vec(),
            block: column_block,
            needed,
            available: basis.ncols(),
        });
    }
    let cols = basis.columns(column_block * (t - 1), t - 1).into_owned();
    aligned_unit_from_columns(channels, group, &cols, tol)
}

/// Span of `(t-1)^2` and survival of both vectors of every pair once the
/// rest of the unit is projected out.
fn check_aligned_unit(unit: &Unit, tol: &Tolerance) -> Result<()> {
    let PatternOrder::Aligned(t) = unit.order else {
        return Ok(());
    };
    let degenerate = |reason: String| Error::AlignmentDegenerate {
        group: unit.group.clone(),
        reason,
    };
    let dim = unit.span_dim(tol)?;
    if dim != (t - 1) * (t - 1) {
        return Err(degenerate(format!("unit spans {dim} dimensions, expected {}", (t - 1) * (t - 1))));
    }
    let rows = unit.streams[0].equivalent.len();
    for (a, b) in unit.pairs() {
        let others: Vec<&ComplexVector> = unit
            .streams
            .iter()
            .filter(|s| s.pair != (a, b) && s.pair != (b, a))
            .map(|s| &s.equivalent)
            .collect();
        let q = column_basis(&from_columns(rows, &others)?, tol)?;
        for p in [(a, b), (b, a)] {
            let h = &unit.stream(p.0, p.1).expect("pair present").equivalent;
            let residual = h - &q * (q.adjoint() * h);
            if residual.norm() <= SURVIVAL_REL * h.norm() {
                return Err(degenerate(format!("stream {p:?} vanishes under projection")));
            }
        }
    }
    Ok(())
}

/// `count` units of one order on one group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub group: Vec<usize>,
    pub order: PatternOrder,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPlan {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub improved: bool,
    /// Symbol extension factor.
    pub extension: usize,
    /// Relay dimensions in use over the whole extension (`N' * extension`).
    pub active_relay: usize,
    pub allocations: Vec<Allocation>,
    /// Formula value the allocation reproduces.
    pub predicted: DofResult,
    /// Relay dimensions the units occupy over the whole extension.
    pub dims_used: usize,
}

impl AlignmentPlan {
    pub fn unit_count(&self) -> usize {
        self.allocations.iter().map(|a| a.count).sum()
    }

    /// Streams sent by `user` over the whole extension.
    pub fn streams_of(&self, user: usize) -> usize {
        self.allocations
            .iter()
            .filter(|a| a.order == PatternOrder::Random || a.group.contains(&user))
            .map(|a| a.count * a.order.streams_per_user(self.k))
            .sum()
    }

    /// Ordered-pair streams of the whole plan.
    pub fn total_streams(&self) -> usize {
        (0..self.k).map(|u| self.streams_of(u)).sum()
    }
}

fn groups_of(k: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..t).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..t).rev().find(|&i| cur[i] < k - t + i) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..t {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

fn frac(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

/// Per-group counts per channel use, before extension, plus the effective
/// relay antenna count.
struct RationalPlan {
    relay: Rational,
    counts: Vec<(PatternOrder, Rational)>,
}

fn rational_plan(m: u64, n: u64, k: usize, improved: bool) -> Result<RationalPlan> {
    let m_eff = m.min(n) as i64;
    let ni = n as i64;
    let ki = k as i64;
    let ratio = frac(m_eff, ni);
    let order = |t: usize| {
        if t == k + 1 {
            PatternOrder::Random
        } else {
            PatternOrder::Aligned(t)
        }
    };
    // Per-group count of order-t units that saturate `relay` dimensions.
    let saturating = |t: usize, relay: Rational| relay / Rational::from_integer(alpha_beta_ext(k, t).1);

    if ratio <= frac(1, ki) {
        return Ok(RationalPlan {
            relay: Rational::from_integer(ni),
            counts: vec![(PatternOrder::Random, frac(m_eff, ki - 1))],
        });
    }
    if improved && k >= 4 {
        let (lo, hi) = dof::capacity_ranges(k);
        if ratio > lo && ratio < hi {
            let t = dof::improved_order(ratio, k)?;
            if let Some((t, corner)) = dof::deactivation_target(m_eff as u64, n, k)? {
                let relay = Rational::from_integer(m_eff) / corner;
                return Ok(RationalPlan {
                    relay,
                    counts: vec![(order(t), saturating(t, relay))],
                });
            }
            let relay = Rational::from_integer(ni);
            return Ok(RationalPlan {
                relay,
                counts: vec![(order(t + 1), saturating(t + 1, relay))],
            });
        }
    }
    let t = dof::regime_index(m_eff as u64, n);
    let ti = t as i64;
    let relay = Rational::from_integer(ni);
    let per_group = frac(ti * m_eff - ni, ti - 1);
    let dims_t = per_group * alpha_beta_ext(k, t).1;
    if dims_t >= relay {
        return Ok(RationalPlan {
            relay,
            counts: vec![(order(t), saturating(t, relay))],
        });
    }
    Ok(RationalPlan {
        relay,
        counts: vec![(order(t), per_group), (order(t + 1), saturating(t + 1, relay - dims_t))],
    })
}

/// Smallest extension making every count and the relay dimension integral.
fn needed_extension(rp: &RationalPlan) -> u64 {
    rp.counts
        .iter()
        .map(|(_, c)| *c.denom())
        .fold(*rp.relay.denom(), |acc, d| acc.lcm(&d)) as u64
}

/// Splits the relay signal space into units of each pattern order so that the
/// per-user DoF equals the closed-form value (`achievable_improved` when
/// `improved`, else `achievable_basic`).
pub fn plan_alignment(m: usize, n: usize, k: usize, improved: bool) -> Result<AlignmentPlan> {
    let (m64, n64) = (m as u64, n as u64);
    let formula = if improved {
        dof::achievable_improved(m64, n64, k)?
    } else {
        dof::achievable_basic(m64, n64, k)?
    };
    let rp = rational_plan(m64, n64, k, improved)?;
    let sigma = needed_extension(&rp);
    if sigma > MAX_EXTENSION {
        return Err(Error::ExtensionOverflow {
            limit: MAX_EXTENSION,
            needed: sigma,
        });
    }
    let s = Rational::from_integer(sigma as i64);
    let active_relay = (rp.relay * s).to_integer() as usize;
    let mut allocations = Vec::new();
    for (order, per_group) in &rp.counts {
        let count = (*per_group * s).to_integer() as usize;
        if count == 0 {
            continue;
        }
        match order {
            PatternOrder::Random => allocations.push(Allocation {
                group: (0..k).collect(),
                order: *order,
                count,
            }),
            PatternOrder::Aligned(t) => {
                for group in groups_of(k, *t) {
                    allocations.push(Allocation { group, order: *order, count });
                }
            }
        }
    }
    let dims_used = allocations.iter().map(|a| a.count * a.order.dims_per_unit(k)).sum();
    let plan = AlignmentPlan {
        m,
        n,
        k,
        improved,
        extension: sigma as usize,
        active_relay,
        allocations,
        predicted: formula,
        dims_used,
    };
    check_plan(&plan)?;
    Ok(plan)
}

/// Relay, antenna and nullspace budgets, and agreement with the formula.
fn check_plan(plan: &AlignmentPlan) -> Result<()> {
    let user_dim = plan.m.min(plan.n) * plan.extension;
    if plan.dims_used > plan.active_relay {
        return Err(Error::InternalPlanError(format!(
            "units occupy {} of {} relay dimensions",
            plan.dims_used, plan.active_relay
        )));
    }
    for user in 0..plan.k {
        if plan.streams_of(user) > user_dim {
            return Err(Error::InternalPlanError(format!(
                "user {user} sends {} streams with {user_dim} antennas",
                plan.streams_of(user)
            )));
        }
    }
    for a in &plan.allocations {
        if let PatternOrder::Aligned(t) = a.order {
            let nullity = (t * user_dim).saturating_sub(plan.active_relay);
            if a.count * (t - 1) > nullity {
                return Err(Error::InternalPlanError(format!(
                    "group {:?} needs {} nullspace columns, {} exist",
                    a.group,
                    a.count * (t - 1),
                    nullity
                )));
            }
        }
    }
    let d_user = Rational::new(plan.streams_of(0) as i64, plan.extension as i64);
    if (1..plan.k).any(|u| plan.streams_of(u) != plan.streams_of(0)) || d_user != plan.predicted.d_user {
        return Err(Error::InternalPlanError(format!(
            "allocation gives {d_user} streams per user, formula gives {}",
            plan.predicted.d_user
        )));
    }
    Ok(())
}

/// Samples channels for a plan: the plan's extension is applied, and the
/// relay is cut down to `plan.active_relay` dimensions (antenna prefix without
/// extension, random relay subspace with it).
pub fn prepare_channels(plan: &AlignmentPlan, seed: u64, tol: Tolerance, identical_blocks: bool) -> Result<ChannelSet> {
    let cfg = SystemConfig {
        m: plan.m,
        n: plan.n,
        k: plan.k,
        extension: plan.extension,
        seed,
        tol,
        identical_blocks,
    };
    let ch = sample_channel_set(&cfg)?;
    if plan.active_relay == ch.active_relay {
        Ok(ch)
    } else if plan.extension == 1 {
        deactivate_relay_antennas(&ch, plan.active_relay)
    } else {
        restrict_relay_subspace(&ch, plan.active_relay, seed)
    }
}

/// Builds every unit of the plan on `channels` (one matrix per user, mapping
/// the user's signal space to the relay).
///
/// Each aligned allocation consumes consecutive, disjoint column blocks of
/// its group nullspace. Under symbol extension, or with more user antennas
/// than relay antennas, the nullspace basis is first rotated by a random
/// unitary drawn from `rng`, so that the columns are generic rather than
/// confined to single channel slots or to the users' own nullspaces.
pub fn construct_units<R: Rng + ?Sized>(
    plan: &AlignmentPlan,
    channels: &[ComplexMatrix],
    rng: &mut R,
    tol: &Tolerance,
) -> Result<Vec<Unit>> {
    let (relay, user_dim) = check_channels(channels)?;
    if channels.len() != plan.k || relay != plan.active_relay || user_dim != plan.m * plan.extension {
        return Err(Error::ShapeMismatch(format!(
            "{} channels of {relay}x{user_dim} do not fit the plan (K={}, {}x{})",
            channels.len(),
            plan.k,
            plan.active_relay,
            plan.m * plan.extension
        )));
    }
    let mix = plan.extension > 1 || plan.m > plan.n;
    let mut units = Vec::with_capacity(plan.unit_count());
    for a in &plan.allocations {
        match a.order {
            PatternOrder::Random => {
                for _ in 0..a.count {
                    units.push(build_random_unit(channels, rng)?);
                }
            }
            PatternOrder::Aligned(t) => {
                let mut basis = group_nullspace(channels, &a.group, tol)?;
                let needed = a.count * (t - 1);
                if basis.ncols() < needed {
                    return Err(Error::SupplyExhausted {
                        group: a.group.clone(),
                        block: a.count - 1,
                        needed,
                        available: basis.ncols(),
                    });
                }
                if mix {
                    basis = &basis * random_unitary(rng, basis.ncols());
                }
                for block in 0..a.count {
                    let cols = basis.columns(block * (t - 1), t - 1).into_owned();
                    units.push(aligned_unit_from_columns(channels, &a.group, &cols, tol)?);
                }
            }
        }
    }
    check_independence(plan, &units, tol)?;
    Ok(units)
}

/// Uplink construction on a prepared channel set.
pub fn execute_plan<R: Rng + ?Sized>(
    plan: &AlignmentPlan,
    ch: &ChannelSet,
    rng: &mut R,
    tol: &Tolerance,
) -> Result<Vec<Unit>> {
    construct_units(plan, &ch.uplink, rng, tol)
}

fn check_independence(plan: &AlignmentPlan, units: &[Unit], tol: &Tolerance) -> Result<()> {
    let all: Vec<&ComplexVector> = units.iter().flat_map(|u| u.streams.iter().map(|s| &s.equivalent)).collect();
    let spanned = if all.is_empty() {
        0
    } else {
        numerical_rank(&from_columns(plan.active_relay, &all)?, tol)?
    };
    if spanned != plan.dims_used {
        return Err(Error::IndependenceViolation(format!(
            "units span {spanned} relay dimensions, plan uses {}",
            plan.dims_used
        )));
    }
    for user in 0..plan.k {
        let bf: Vec<&ComplexVector> = units
            .iter()
            .flat_map(|u| u.streams.iter())
            .filter(|s| s.pair.0 == user)
            .map(|s| &s.beamformer)
            .collect();
        if bf.is_empty() {
            continue;
        }
        let rank = numerical_rank(&from_columns(bf[0].len(), &bf)?, tol)?;
        if rank != bf.len() {
            return Err(Error::IndependenceViolation(format!(
                "user {user} precodes {} streams with rank {rank}",
                bf.len()
            )));
        }
    }
    Ok(())
}
