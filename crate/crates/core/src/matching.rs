//! Channel assignment by two-sided matching.
//!
//! Users and subchannels are the two sides. Utilities are evaluated on a
//! frozen resource snapshot (equal power, even time share, initial surface
//! coefficients). The module provides the deferred-acceptance
//! initializations, the swap procedure, location-based (LMA) and
//! same-region (SMA) variants and an exhaustive enumerator.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::starface::{StarCoefficients, SurfaceMode};
use crate::sysmodel::{Scenario, Side};

/// Strict-improvement tolerance of the swap test.
pub const STRICT_TOL: f64 = 1e-12;
/// Relative tolerance under which two gains count as equal.
pub const GAIN_TIE_TOL: f64 = 1e-10;
/// Largest user count accepted by the exhaustive enumerator.
pub const EXHAUSTIVE_MAX_USERS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    pairs: Vec<Vec<usize>>,
    channel_of: Vec<usize>,
}

impl Assignment {
    /// Builds an assignment from the user list of every subchannel.
    pub fn from_pairs(mut pairs: Vec<Vec<usize>>, num_users: usize) -> Result<Self> {
        let mut channel_of = vec![usize::MAX; num_users];
        for (k, users) in pairs.iter_mut().enumerate() {
            if users.is_empty() || users.len() > 2 {
                return Err(Error::Precondition(format!(
                    "subchannel {k} carries {} users",
                    users.len()
                )));
            }
            users.sort_unstable();
            for &i in users.iter() {
                if i >= num_users || channel_of[i] != usize::MAX {
                    return Err(Error::Precondition(format!("user {i} placed twice or unknown")));
                }
                channel_of[i] = k;
            }
        }
        if let Some(i) = channel_of.iter().position(|&k| k == usize::MAX) {
            return Err(Error::Precondition(format!("user {i} is unassigned")));
        }
        Ok(Self { pairs, channel_of })
    }

    pub fn num_subchannels(&self) -> usize {
        self.pairs.len()
    }

    pub fn num_users(&self) -> usize {
        self.channel_of.len()
    }

    pub fn pairs(&self) -> &[Vec<usize>] {
        &self.pairs
    }

    pub fn users_on(&self, k: usize) -> &[usize] {
        &self.pairs[k]
    }

    pub fn channel_of(&self, i: usize) -> usize {
        self.channel_of[i]
    }

    pub fn partner(&self, i: usize) -> Option<usize> {
        self.pairs[self.channel_of[i]].iter().copied().find(|&j| j != i)
    }

    /// The matching with the channels of `i` and `j` exchanged.
    pub fn swapped(&self, i: usize, j: usize) -> Self {
        let (ki, kj) = (self.channel_of[i], self.channel_of[j]);
        let mut out = self.clone();
        if ki == kj {
            return out;
        }
        for u in out.pairs[ki].iter_mut() {
            if *u == i {
                *u = j;
            }
        }
        for u in out.pairs[kj].iter_mut() {
            if *u == j {
                *u = i;
            }
        }
        out.pairs[ki].sort_unstable();
        out.pairs[kj].sort_unstable();
        out.channel_of[i] = kj;
        out.channel_of[j] = ki;
        out
    }

    /// Whether every subchannel hosts exactly one T and one R user.
    pub fn is_tr_paired(&self, regions: &[Side]) -> bool {
        self.pairs.iter().all(|p| {
            p.len() == 2 && regions[p[0]] != regions[p[1]]
        })
    }

    /// Flat encoding used for seed derivation.
    pub fn key(&self) -> Vec<u64> {
        self.channel_of.iter().map(|&k| k as u64).collect()
    }

    /// CSV rows `k,user_1,user_2,region_1,region_2`.
    pub fn to_csv(&self, regions: &[Side]) -> String {
        let mut out = String::from("k,user_1,user_2,region_1,region_2\n");
        for (k, p) in self.pairs.iter().enumerate() {
            let second = p.get(1).map_or(String::new(), |u| u.to_string());
            let second_region = p.get(1).map_or(String::new(), |u| regions[*u].to_string());
            let _ = writeln!(out, "{k},{},{second},{},{second_region}", p[0], regions[p[0]]);
        }
        out
    }
}

/// Utilities of users and subchannels for a candidate matching.
pub trait UtilityOracle {
    fn user_utility(&self, a: &Assignment, i: usize) -> f64;

    fn channel_utility(&self, a: &Assignment, k: usize) -> f64 {
        a.users_on(k).iter().map(|&i| self.user_utility(a, i)).sum()
    }

    fn total_utility(&self, a: &Assignment) -> f64 {
        (0..a.num_subchannels()).map(|k| self.channel_utility(a, k)).sum()
    }
}

/// `gains[k][i]`: effective gain over noise of user `i` on subchannel `k`
/// under `coeffs`.
pub fn snapshot_gains(scenario: &Scenario, coeffs: &StarCoefficients) -> Vec<Vec<f64>> {
    let cfg = &scenario.config;
    (0..cfg.num_subchannels)
        .map(|k| (0..cfg.num_users).map(|i| scenario.gain(coeffs, k, i)).collect())
        .collect()
}

/// Decides whether user `i` is the stronger (interference-free) user of
/// the pair `(i, j)`. Near-equal gains favour the T user, then the lower
/// index.
pub fn is_stronger(gi: f64, gj: f64, ri: Side, rj: Side, i: usize, j: usize) -> bool {
    if (gi - gj).abs() <= GAIN_TIE_TOL * gi.abs().max(gj.abs()) {
        if ri != rj {
            ri == Side::T
        } else {
            i < j
        }
    } else {
        gi > gj
    }
}

/// Time-shared utilities with `omega = 0.5` and equal power.
#[derive(Debug, Clone)]
pub struct OmaSnapshot {
    pub gains: Vec<Vec<f64>>,
    pub power: f64,
}

impl OmaSnapshot {
    pub fn new(scenario: &Scenario, coeffs: &StarCoefficients) -> Self {
        let cfg = &scenario.config;
        Self {
            gains: snapshot_gains(scenario, coeffs),
            power: cfg.p_max / cfg.num_users as f64,
        }
    }
}

impl UtilityOracle for OmaSnapshot {
    fn user_utility(&self, a: &Assignment, i: usize) -> f64 {
        let g = self.gains[a.channel_of(i)][i];
        let share = if a.partner(i).is_some() { 0.5 } else { 1.0 };
        share * (1.0 + self.power * g / share).log2()
    }
}

/// Superposition utilities with equal power: the stronger user decodes
/// interference-free, the weaker treats its partner as noise.
#[derive(Debug, Clone)]
pub struct NomaSnapshot {
    pub gains: Vec<Vec<f64>>,
    pub power: f64,
    pub regions: Vec<Side>,
}

impl NomaSnapshot {
    pub fn new(scenario: &Scenario, coeffs: &StarCoefficients) -> Self {
        let cfg = &scenario.config;
        Self {
            gains: snapshot_gains(scenario, coeffs),
            power: cfg.p_max / cfg.num_users as f64,
            regions: scenario.layout.regions.clone(),
        }
    }
}

impl UtilityOracle for NomaSnapshot {
    fn user_utility(&self, a: &Assignment, i: usize) -> f64 {
        let k = a.channel_of(i);
        let gi = self.gains[k][i];
        let s = self.power * gi;
        match a.partner(i) {
            None => (1.0 + s).log2(),
            Some(j) => {
                let gj = self.gains[k][j];
                if is_stronger(gi, gj, self.regions[i], self.regions[j], i, j) {
                    (1.0 + s).log2()
                } else {
                    (1.0 + s / (s + 1.0)).log2()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwapScope {
    AllPairs,
    /// Only users of the same region may exchange channels.
    SameRegion,
}

/// Swap-blocking test: the exchange weakly improves the two users and the
/// two subchannels and strictly improves at least one of them.
pub fn is_swap_blocking(
    a: &Assignment,
    i: usize,
    j: usize,
    oracle: &dyn UtilityOracle,
) -> Result<bool> {
    let (ki, kj) = (a.channel_of(i), a.channel_of(j));
    if ki == kj {
        return Err(Error::Precondition(format!(
            "users {i} and {j} share subchannel {ki}"
        )));
    }
    let b = a.swapped(i, j);
    let before = [
        oracle.user_utility(a, i),
        oracle.user_utility(a, j),
        oracle.channel_utility(a, ki),
        oracle.channel_utility(a, kj),
    ];
    let after = [
        oracle.user_utility(&b, i),
        oracle.user_utility(&b, j),
        oracle.channel_utility(&b, ki),
        oracle.channel_utility(&b, kj),
    ];
    let weak = before.iter().zip(&after).all(|(u, v)| v >= u);
    let strict = before.iter().zip(&after).any(|(u, v)| *v > u + STRICT_TOL);
    Ok(weak && strict)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SwapStats {
    pub swaps: usize,
    pub passes: usize,
    pub swaps_per_pass: Vec<usize>,
    pub cap_reached: bool,
}

fn in_scope(scope: SwapScope, regions: &[Side], i: usize, j: usize) -> bool {
    match scope {
        SwapScope::AllPairs => true,
        SwapScope::SameRegion => regions[i] == regions[j],
    }
}

/// Scans user pairs lexicographically and executes every blocking swap
/// immediately, until a full pass finds none (or `10 I` passes ran).
pub fn swap_match(
    start: &Assignment,
    oracle: &dyn UtilityOracle,
    scope: SwapScope,
    regions: &[Side],
) -> (Assignment, SwapStats) {
    let n = start.num_users();
    let mut a = start.clone();
    let mut stats = SwapStats::default();
    let max_passes = 10 * n.max(1);
    loop {
        if stats.passes == max_passes {
            stats.cap_reached = true;
            break;
        }
        stats.passes += 1;
        let mut swaps = 0;
        for i in 0..n {
            for j in i + 1..n {
                if a.channel_of(i) == a.channel_of(j) || !in_scope(scope, regions, i, j) {
                    continue;
                }
                if is_swap_blocking(&a, i, j, oracle).unwrap_or(false) {
                    a = a.swapped(i, j);
                    swaps += 1;
                }
            }
        }
        stats.swaps += swaps;
        stats.swaps_per_pass.push(swaps);
        if swaps == 0 {
            break;
        }
    }
    (a, stats)
}

/// Every in-scope blocking pair of `a` (empty means exchange-stable).
pub fn blocking_pairs(
    a: &Assignment,
    oracle: &dyn UtilityOracle,
    scope: SwapScope,
    regions: &[Side],
) -> Vec<(usize, usize)> {
    let n = a.num_users();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if a.channel_of(i) != a.channel_of(j)
                && in_scope(scope, regions, i, j)
                && is_swap_blocking(a, i, j, oracle).unwrap_or(false)
            {
                out.push((i, j));
            }
        }
    }
    out
}

/// Initial coefficients: even split, and per side the phases that
/// co-phase the cascade with the largest energy among that region's users
/// over all subchannels.
pub fn initial_coefficients(scenario: &Scenario, mode: SurfaceMode) -> Result<StarCoefficients> {
    let cfg = &scenario.config;
    let m = cfg.num_elements;
    let mut theta = [vec![0.0; m], vec![0.0; m]];
    for side in Side::BOTH {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in scenario.layout.users_in(side) {
            for k in 0..cfg.num_subchannels {
                let e = scenario.channels.cascade_energy(k, i);
                if best.is_none_or(|b| e > b.0) {
                    best = Some((e, k, i));
                }
            }
        }
        if let Some((_, k, i)) = best {
            let beta = vec![0.5; m];
            let (_, phases) = crate::starface::max_cascaded_gain(scenario.channels.cascade(k, i), &beta);
            theta[side.index()] = phases;
        }
    }
    let [tt, tr] = theta;
    let mut c = StarCoefficients::new(vec![0.5; m], tt, tr)?;
    mode.apply(&mut c);
    Ok(c)
}

/// Proposal rounds: every free user proposes to its best-gain subchannel
/// among those that have not rejected it; a subchannel takes proposers in
/// decreasing gain while `admits(k, occupants, user)` holds and rejects
/// the rest. Accepted users are never bumped.
fn deferred_acceptance(
    gains: &[Vec<f64>],
    num_users: usize,
    admits: impl Fn(usize, &[usize], usize) -> bool,
) -> Result<Vec<Vec<usize>>> {
    let num_ch = gains.len();
    let mut rejected = vec![vec![false; num_ch]; num_users];
    let mut occupants: Vec<Vec<usize>> = vec![Vec::new(); num_ch];
    let mut free: Vec<usize> = (0..num_users).collect();
    while !free.is_empty() {
        let mut proposals: Vec<Vec<usize>> = vec![Vec::new(); num_ch];
        for &i in &free {
            let mut best: Option<usize> = None;
            for k in 0..num_ch {
                if !rejected[i][k] && best.is_none_or(|b| gains[k][i] > gains[b][i]) {
                    best = Some(k);
                }
            }
            let k = best.ok_or_else(|| {
                Error::Precondition(format!("user {i} was rejected by every subchannel"))
            })?;
            proposals[k].push(i);
        }
        let mut still_free = Vec::new();
        for (k, mut props) in proposals.into_iter().enumerate() {
            props.sort_by(|&a, &b| gains[k][b].total_cmp(&gains[k][a]).then(a.cmp(&b)));
            for i in props {
                if admits(k, &occupants[k], i) {
                    occupants[k].push(i);
                } else {
                    rejected[i][k] = true;
                    still_free.push(i);
                }
            }
        }
        still_free.sort_unstable();
        free = still_free;
    }
    Ok(occupants)
}

/// Result of a matching procedure.
#[derive(Debug, Clone)]
pub struct MatchOutcome {
    pub assignment: Assignment,
    pub coeffs: StarCoefficients,
    pub stats: SwapStats,
}

fn check_balanced(scenario: &Scenario) -> Result<()> {
    let t = scenario.layout.users_in(Side::T).len();
    let r = scenario.layout.users_in(Side::R).len();
    if t != r || t != scenario.config.num_subchannels {
        return Err(Error::Precondition(format!(
            "region counts T={t}, R={r} do not match the subchannel count"
        )));
    }
    Ok(())
}

/// Initial OMA matching: two users per subchannel by deferred acceptance.
pub fn init_oma(scenario: &Scenario, mode: SurfaceMode) -> Result<(Assignment, StarCoefficients)> {
    let coeffs = initial_coefficients(scenario, mode)?;
    let gains = snapshot_gains(scenario, &coeffs);
    let n = scenario.config.num_users;
    let occ = deferred_acceptance(&gains, n, |_, occ, _| occ.len() < 2)?;
    Ok((Assignment::from_pairs(occ, n)?, coeffs))
}

/// General swap matching for OMA: the initial matching followed by swaps
/// between any two users.
pub fn swap_oma(scenario: &Scenario, mode: SurfaceMode) -> Result<MatchOutcome> {
    let (a0, coeffs) = init_oma(scenario, mode)?;
    let oracle = OmaSnapshot::new(scenario, &coeffs);
    let (assignment, stats) = swap_match(&a0, &oracle, SwapScope::AllPairs, &scenario.layout.regions);
    Ok(MatchOutcome {
        assignment,
        coeffs,
        stats,
    })
}

/// Which access scheme supplies the matching utilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UtilityKind {
    Oma,
    Noma,
}

fn oracle_for(kind: UtilityKind, scenario: &Scenario, coeffs: &StarCoefficients) -> Box<dyn UtilityOracle> {
    match kind {
        UtilityKind::Oma => Box::new(OmaSnapshot::new(scenario, coeffs)),
        UtilityKind::Noma => Box::new(NomaSnapshot::new(scenario, coeffs)),
    }
}

/// Location-based matching: each subchannel takes one T and one R user,
/// then same-region swaps refine the matching.
pub fn lma(scenario: &Scenario, mode: SurfaceMode, kind: UtilityKind) -> Result<MatchOutcome> {
    check_balanced(scenario)?;
    let coeffs = initial_coefficients(scenario, mode)?;
    let gains = snapshot_gains(scenario, &coeffs);
    let regions = &scenario.layout.regions;
    let n = scenario.config.num_users;
    let occ = deferred_acceptance(&gains, n, |_, occ, i| {
        occ.iter().all(|&u| regions[u] != regions[i])
    })?;
    let a0 = Assignment::from_pairs(occ, n)?;
    let oracle = oracle_for(kind, scenario, &coeffs);
    let (assignment, stats) = swap_match(&a0, oracle.as_ref(), SwapScope::SameRegion, regions);
    Ok(MatchOutcome {
        assignment,
        coeffs,
        stats,
    })
}

/// Same-region matching baseline. Subchannels are ranked by how much more
/// they favour T users than R users; the top `K/2` host two T users, the
/// bottom `K/2` two R users and a middle one (odd `K`) a mixed pair.
pub fn sma(scenario: &Scenario, mode: SurfaceMode, kind: UtilityKind) -> Result<MatchOutcome> {
    check_balanced(scenario)?;
    let coeffs = initial_coefficients(scenario, mode)?;
    let gains = snapshot_gains(scenario, &coeffs);
    let regions = &scenario.layout.regions;
    let n = scenario.config.num_users;
    let kk = scenario.config.num_subchannels;
    let t_users = scenario.layout.users_in(Side::T);
    let r_users = scenario.layout.users_in(Side::R);
    let mean = |k: usize, us: &[usize]| us.iter().map(|&i| gains[k][i]).sum::<f64>() / us.len() as f64;
    let mut order: Vec<usize> = (0..kk).collect();
    let score: Vec<f64> = (0..kk).map(|k| mean(k, &t_users) - mean(k, &r_users)).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    // capacity[k] = (T slots, R slots)
    let mut capacity = vec![(1usize, 1usize); kk];
    for (rank, &k) in order.iter().enumerate() {
        capacity[k] = if rank < kk / 2 {
            (2, 0)
        } else if rank >= kk - kk / 2 {
            (0, 2)
        } else {
            (1, 1)
        };
    }
    let occ = deferred_acceptance(&gains, n, |k, occ, i| {
        let used = occ.iter().filter(|&&u| regions[u] == regions[i]).count();
        let cap = match regions[i] {
            Side::T => capacity[k].0,
            Side::R => capacity[k].1,
        };
        used < cap
    })?;
    let a0 = Assignment::from_pairs(occ, n)?;
    let oracle = oracle_for(kind, scenario, &coeffs);
    let (assignment, stats) = swap_match(&a0, oracle.as_ref(), SwapScope::SameRegion, regions);
    Ok(MatchOutcome {
        assignment,
        coeffs,
        stats,
    })
}

fn pairings(users: &[usize], acc: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
    if users.is_empty() {
        out.push(acc.clone());
        return;
    }
    let first = users[0];
    for idx in 1..users.len() {
        let rest: Vec<usize> = users[1..]
            .iter()
            .enumerate()
            .filter(|&(j, _)| j + 1 != idx)
            .map(|(_, &u)| u)
            .collect();
        acc.push(vec![first, users[idx]]);
        pairings(&rest, acc, out);
        acc.pop();
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    let mut used = vec![false; n];
    fn rec(n: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                rec(n, cur, used, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    rec(n, &mut cur, &mut used, &mut out);
    out
}

/// All assignments of `2K` users to `K` labelled subchannels, two per
/// subchannel, in a fixed order.
pub fn enumerate_assignments(num_users: usize, num_subchannels: usize) -> Result<Vec<Assignment>> {
    if num_users > EXHAUSTIVE_MAX_USERS {
        return Err(Error::Guard(format!(
            "exhaustive assignment supports at most {EXHAUSTIVE_MAX_USERS} users, got {num_users}"
        )));
    }
    if num_users != 2 * num_subchannels {
        return Err(Error::Precondition("exhaustive assignment needs I = 2K".into()));
    }
    let users: Vec<usize> = (0..num_users).collect();
    let mut all = Vec::new();
    pairings(&users, &mut Vec::new(), &mut all);
    let perms = permutations(num_subchannels);
    let mut out = Vec::with_capacity(all.len() * perms.len());
    for p in &all {
        for perm in &perms {
            let pairs = perm.iter().map(|&j| p[j].clone()).collect();
            out.push(Assignment::from_pairs(pairs, num_users)?);
        }
    }
    Ok(out)
}

/// Outcome of an exhaustive search.
#[derive(Debug, Clone)]
pub struct ExhaustiveOutcome<T> {
    pub assignment: Assignment,
    pub value: f64,
    pub result: T,
    pub candidates: usize,
    pub feasible_candidates: usize,
}

/// Evaluates `inner` on every assignment (in parallel) and returns the
/// first strict maximum of the reported sum-rate. `inner` returns `None`
/// for infeasible candidates.
pub fn exhaustive_assignment<T, F>(
    num_users: usize,
    num_subchannels: usize,
    inner: F,
) -> Result<ExhaustiveOutcome<T>>
where
    T: Send,
    F: Fn(&Assignment) -> Option<(f64, T)> + Sync,
{
    let cands = enumerate_assignments(num_users, num_subchannels)?;
    let results: Vec<Option<(f64, T)>> = cands.par_iter().map(&inner).collect();
    let candidates = cands.len();
    let mut feasible = 0;
    let mut best: Option<(usize, f64, T)> = None;
    for (idx, r) in results.into_iter().enumerate() {
        if let Some((v, t)) = r {
            feasible += 1;
            if best.as_ref().is_none_or(|b| v > b.1) {
                best = Some((idx, v, t));
            }
        }
    }
    let (idx, value, result) =
        best.ok_or_else(|| Error::Infeasible("no feasible assignment candidate".into()))?;
    Ok(ExhaustiveOutcome {
        assignment: cands[idx].clone(),
        value,
        result,
        candidates,
        feasible_candidates: feasible,
    })
}
