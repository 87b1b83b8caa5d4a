//! Monte Carlo checks of the subspace-dimension lemmas behind the
//! constructions, and of the exact scaling property of the DoF formula.
//!
//! Trial `i` of a check with master seed `s` draws from
//! `trial_rng(s, i)`, i.e. ChaCha20 keyed by `s` on stream `i`, so any single
//! trial can be replayed on its own.

use std::collections::BTreeMap;

use num_integer::binomial;
use serde::{Deserialize, Serialize};

use crate::dof::scaling_check;
use crate::error::{Error, Result};
use crate::linalg::{
    hstack, intersection_basis, nullspace_basis, numerical_rank, union_span_dim, ComplexMatrix, Tolerance,
};
use crate::rng::{complex_gaussian_matrix, trial_rng};
use crate::wire::WireMatrix;

/// Failed trials kept with their matrices for replay.
const KEPT_FAILURES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LemmaId {
    /// `dim(span A ∩ span B) = (2M - N)^+`.
    Intersection,
    /// `rank [A_1 U_1, ..., A_K U_K] = min((K-1)(KM - N), N)`.
    StackedRank,
    /// The aligned spans of all `t`-user groups form a direct sum up to `N`.
    DirectSum,
    /// `d(sM, sN) = s d(M, N)`.
    Scaling,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extension: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedTrial {
    pub trial: usize,
    pub seed: u64,
    pub observed: usize,
    /// Sampled matrices, in draw order.
    pub matrices: Vec<WireMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaTrialResult {
    pub lemma: LemmaId,
    pub params: LemmaParams,
    pub trials: usize,
    pub failures: usize,
    pub expected: usize,
    /// Observed value -> number of trials.
    pub observed: BTreeMap<usize, usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failed: Vec<FailedTrial>,
}

impl LemmaTrialResult {
    fn new(lemma: LemmaId, params: LemmaParams, expected: usize) -> Self {
        Self {
            lemma,
            params,
            trials: 0,
            failures: 0,
            expected,
            observed: BTreeMap::new(),
            failed: Vec::new(),
        }
    }

    fn record(&mut self, trial: usize, seed: u64, observed: usize, matrices: impl FnOnce() -> Vec<WireMatrix>) {
        self.trials += 1;
        *self.observed.entry(observed).or_default() += 1;
        if observed != self.expected {
            self.failures += 1;
            if self.failed.len() < KEPT_FAILURES {
                self.failed.push(FailedTrial {
                    trial,
                    seed,
                    observed,
                    matrices: matrices(),
                });
            }
        }
    }
}

fn wire(ms: &[ComplexMatrix]) -> Vec<WireMatrix> {
    ms.iter().map(WireMatrix::from).collect()
}

fn block_diagonal_draw(rng: &mut rand_chacha::ChaCha20Rng, rows: usize, cols: usize, blocks: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(rows * blocks, cols * blocks);
    for b in 0..blocks {
        let block = complex_gaussian_matrix(rng, rows, cols);
        out.view_mut((b * rows, b * cols), (rows, cols)).copy_from(&block);
    }
    out
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::InvalidLemmaParams(format!("{name} must be positive")));
    }
    Ok(())
}

/// Intersection of two independent `N x M` column spans.
pub fn check_intersection(m: usize, n: usize, trials: usize, seed: u64) -> Result<LemmaTrialResult> {
    positive("M", m)?;
    positive("N", n)?;
    if m > n {
        return Err(Error::InvalidLemmaParams(format!("need M <= N, got M={m}, N={n}")));
    }
    let tol = Tolerance::default();
    let expected = (2 * m).saturating_sub(n);
    let params = LemmaParams {
        m: Some(m),
        n: Some(n),
        ..Default::default()
    };
    let mut out = LemmaTrialResult::new(LemmaId::Intersection, params, expected);
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial as u64);
        let a = complex_gaussian_matrix(&mut rng, n, m);
        let b = complex_gaussian_matrix(&mut rng, n, m);
        let dim = intersection_basis(&a, &b, &tol)?.ncols();
        out.record(trial, seed, dim, || wire(&[a, b]));
    }
    Ok(out)
}

/// Aligned directions `A_i U_i` of one group, where `U` is a nullspace basis
/// of `[A_1, ..., A_t]` split into per-member row blocks.
fn aligned_directions(blocks: &[&ComplexMatrix], tol: &Tolerance) -> Result<ComplexMatrix> {
    let cols = blocks[0].ncols();
    let u = nullspace_basis(&hstack(blocks)?, tol)?;
    let parts: Vec<ComplexMatrix> = blocks
        .iter()
        .enumerate()
        .map(|(i, a)| *a * u.rows(i * cols, cols))
        .collect();
    hstack(&parts.iter().collect::<Vec<_>>())
}

/// Rank of `[A_1 U_1, ..., A_K U_K]` for the nullspace of `[A_1, ..., A_K]`.
pub fn check_stacked_rank(k: usize, m: usize, n: usize, trials: usize, seed: u64) -> Result<LemmaTrialResult> {
    positive("M", m)?;
    positive("N", n)?;
    if k < 2 || m > n || k * m <= n {
        return Err(Error::InvalidLemmaParams(format!(
            "need K >= 2, M <= N and KM > N, got K={k}, M={m}, N={n}"
        )));
    }
    let tol = Tolerance::default();
    let expected = ((k - 1) * (k * m - n)).min(n);
    let params = LemmaParams {
        k: Some(k),
        m: Some(m),
        n: Some(n),
        ..Default::default()
    };
    let mut out = LemmaTrialResult::new(LemmaId::StackedRank, params, expected);
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial as u64);
        let a: Vec<ComplexMatrix> = (0..k).map(|_| complex_gaussian_matrix(&mut rng, n, m)).collect();
        let stacked = aligned_directions(&a.iter().collect::<Vec<_>>(), &tol)?;
        let rank = numerical_rank(&stacked, &tol)?;
        out.record(trial, seed, rank, || wire(&a));
    }
    Ok(out)
}

fn groups_of(k: usize, t: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, k: usize, t: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == t {
            out.push(cur.clone());
            return;
        }
        for i in start..k {
            cur.push(i);
            rec(i + 1, k, t, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, k, t, &mut Vec::new(), &mut out);
    out
}

/// Dimension of the sum of the aligned spans of all `C(K, t)` groups, on
/// channels extended block-diagonally over `extension` uses.
pub fn check_direct_sum(
    k: usize,
    t: usize,
    m: usize,
    n: usize,
    extension: usize,
    trials: usize,
    seed: u64,
) -> Result<LemmaTrialResult> {
    positive("M", m)?;
    positive("N", n)?;
    positive("extension", extension)?;
    if t < 2 || t > k || t * m <= n {
        return Err(Error::InvalidLemmaParams(format!(
            "need 2 <= t <= K and tM > N, got K={k}, t={t}, M={m}, N={n}"
        )));
    }
    let tol = Tolerance::default();
    let groups = binomial(k, t);
    let expected = (groups * (t - 1) * (t * m - n) * extension).min(n * extension);
    let params = LemmaParams {
        k: Some(k),
        t: Some(t),
        m: Some(m),
        n: Some(n),
        extension: Some(extension),
    };
    let mut out = LemmaTrialResult::new(LemmaId::DirectSum, params, expected);
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial as u64);
        let a: Vec<ComplexMatrix> = (0..k)
            .map(|_| block_diagonal_draw(&mut rng, n, m, extension))
            .collect();
        let spans = groups_of(k, t)
            .iter()
            .map(|g| aligned_directions(&g.iter().map(|&i| &a[i]).collect::<Vec<_>>(), &tol))
            .collect::<Result<Vec<_>>>()?;
        let dim = union_span_dim(&spans.iter().collect::<Vec<_>>(), &tol)?;
        out.record(trial, seed, dim, || wire(&a));
    }
    Ok(out)
}

/// Exact scaling identity over a grid of `(M, N)` and extension factors.
/// Each grid point and factor counts as one trial; `1` means the identity held.
pub fn check_scaling(k: usize, grid: &[(u64, u64)], sigmas: &[u64]) -> Result<LemmaTrialResult> {
    if k < 3 {
        return Err(Error::InvalidLemmaParams(format!("need K >= 3, got {k}")));
    }
    let params = LemmaParams {
        k: Some(k),
        ..Default::default()
    };
    let mut out = LemmaTrialResult::new(LemmaId::Scaling, params, 1);
    let mut trial = 0;
    for &(m, n) in grid {
        for &s in sigmas {
            let ok = scaling_check(m, n, k, s).map_err(|e| Error::InvalidLemmaParams(e.to_string()))?;
            out.record(trial, 0, ok as usize, Vec::new);
            trial += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectSumCase {
    pub k: usize,
    pub t: usize,
    pub m: usize,
    pub n: usize,
    #[serde(default = "one")]
    pub extension: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalingCase {
    pub k: usize,
    pub m_max: u64,
    pub n_max: u64,
    pub sigmas: Vec<u64>,
}

/// Parameter grid of a lemma run. Missing sections of a JSON config fall back
/// to the built-in grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LemmaBattery {
    /// `(M, N)` pairs.
    pub intersection: Vec<(usize, usize)>,
    /// `(K, M, N)` triples.
    pub stacked_rank: Vec<(usize, usize, usize)>,
    pub direct_sum: Vec<DirectSumCase>,
    pub scaling: Vec<ScalingCase>,
}

impl Default for LemmaBattery {
    fn default() -> Self {
        Self {
            intersection: vec![(3, 5), (2, 5), (4, 4)],
            stacked_rank: vec![(3, 2, 4), (3, 3, 4), (4, 2, 7)],
            direct_sum: vec![
                DirectSumCase { k: 4, t: 3, m: 3, n: 8, extension: 1 },
                DirectSumCase { k: 4, t: 3, m: 7, n: 20, extension: 1 },
                DirectSumCase { k: 3, t: 3, m: 2, n: 5, extension: 2 },
            ],
            scaling: (3..=6)
                .map(|k| ScalingCase {
                    k,
                    m_max: 8,
                    n_max: 16,
                    sigmas: vec![1, 2, 3, 5, 7],
                })
                .collect(),
        }
    }
}

/// Runs every configured check; each check gets the same master seed.
pub fn run_battery(battery: &LemmaBattery, trials: usize, seed: u64) -> Result<Vec<LemmaTrialResult>> {
    let mut out = Vec::new();
    for &(m, n) in &battery.intersection {
        out.push(check_intersection(m, n, trials, seed)?);
    }
    for &(k, m, n) in &battery.stacked_rank {
        out.push(check_stacked_rank(k, m, n, trials, seed)?);
    }
    for c in &battery.direct_sum {
        out.push(check_direct_sum(c.k, c.t, c.m, c.n, c.extension, trials, seed)?);
    }
    for c in &battery.scaling {
        let grid: Vec<(u64, u64)> = (1..=c.m_max).flat_map(|m| (1..=c.n_max).map(move |n| (m, n))).collect();
        out.push(check_scaling(c.k, &grid, &c.sigmas)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intersection_cases() {
        for (m, n, e) in [(3, 5, 1), (2, 5, 0), (4, 4, 4)] {
            let r = check_intersection(m, n, 20, 1).unwrap();
            assert_eq!((r.expected, r.failures, r.trials), (e, 0, 20));
        }
        assert!(check_intersection(5, 4, 1, 0).is_err());
    }

    #[test]
    fn stacked_rank_cases() {
        for (k, m, n, e) in [(3, 2, 4, 4), (3, 3, 4, 4), (4, 2, 7, 3)] {
            let r = check_stacked_rank(k, m, n, 20, 2).unwrap();
            assert_eq!((r.expected, r.failures), (e, 0));
        }
        assert!(matches!(check_stacked_rank(3, 1, 4, 1, 0), Err(Error::InvalidLemmaParams(_))));
    }

    #[test]
    fn direct_sum_cases() {
        for (k, t, m, n, s, e) in [(4, 3, 3, 8, 1, 8), (4, 3, 7, 20, 1, 8), (3, 3, 2, 5, 2, 4)] {
            let r = check_direct_sum(k, t, m, n, s, 10, 3).unwrap();
            assert_eq!((r.expected, r.failures), (e, 0));
        }
        assert!(check_direct_sum(4, 3, 2, 6, 1, 1, 0).is_err());
    }

    #[test]
    fn scaling_grid() {
        let grid: Vec<(u64, u64)> = (1..=8).flat_map(|m| (1..=16).map(move |n| (m, n))).collect();
        let r = check_scaling(4, &grid, &[2, 3, 5]).unwrap();
        assert_eq!(r.trials, 8 * 16 * 3);
        assert_eq!(r.failures, 0);
    }

    #[test]
    fn failures_are_recorded() {
        let mut r = LemmaTrialResult::new(LemmaId::Intersection, LemmaParams::default(), 1);
        r.record(3, 9, 2, || wire(&[ComplexMatrix::identity(2, 2)]));
        assert_eq!(r.failures, 1);
        assert_eq!(r.failed[0].trial, 3);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["lemma"], "INTERSECTION");
        assert_eq!(v["observed"]["2"], 1);
    }

    #[test]
    fn battery_config_defaults() {
        let b: LemmaBattery = serde_json::from_str(r#"{"intersection": [[3, 5]]}"#).unwrap();
        assert_eq!(b.intersection, vec![(3, 5)]);
        assert_eq!(b.stacked_rank, LemmaBattery::default().stacked_rank);
    }
}
