//! Priority-order constructors for the supported protection policies.
//!
//! Every seat category fills its quota by walking a strict total order over
//! the roster (with an explicit vacancy marker: individuals ranked below it
//! are unacceptable and the seat would rather stay empty). Four constructors
//! are provided:
//!
//! * [`baseline_order`] — descending merit; everyone acceptable. Used for the
//!   open category.
//! * [`hard_order`] — category members by merit, then the vacancy marker:
//!   unfilled seats are non-transferable.
//! * [`soft_order`] — members by merit, then a reversion pool (general-category
//!   applicants only, or everyone) rather than a vacancy.
//! * [`elevated_order`] — members compete with a score boost of `k`: a member
//!   `i` ranks above a non-member `j` exactly when `score(i) + k > score(j)`;
//!   within the member block and within the non-member block plain merit
//!   applies, and everyone is acceptable.
//!
//! Score ties are completed deterministically by ascending id. Note the
//! boundary in the elevated order: on `score(i) + k == score(j)` the
//! non-member `j` ranks above the member `i`, because the member only wins on
//! a strict inequality.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CategoryId, IndividualId, Instance, Score};

/// Who benefits when unfilled soft-reserved seats revert.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SoftScope {
    /// Only general-category applicants (the default reading).
    #[serde(rename = "gc")]
    GcOnly,
    /// Every non-member, including members of other reserve categories.
    #[serde(rename = "all")]
    Everyone,
}

/// A vertical-reservation protection policy for reserved seats.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    Hard,
    Soft(SoftScope),
    Elevated(Score),
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Policy::Hard => write!(f, "hard"),
            Policy::Soft(SoftScope::GcOnly) => write!(f, "soft(gc)"),
            Policy::Soft(SoftScope::Everyone) => write!(f, "soft(all)"),
            Policy::Elevated(k) => write!(f, "elevated(k={k})"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("{0} is not a reserve category")]
    NotReserve(CategoryId),
    #[error("boost must be non-negative, got {0}")]
    NegativeBoost(Score),
    #[error("elevated ranking of {first} over {second} contradicts the pairwise properties")]
    IntransitiveTie { first: IndividualId, second: IndividualId },
}

/// A strict total order over individual ids with a vacancy marker.
///
/// Ids at positions `0..vacancy_rank` are acceptable (best first); ids at or
/// after `vacancy_rank` would be passed over even if seats remain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PriorityOrder {
    ranked: Vec<IndividualId>,
    vacancy_rank: usize,
}

impl PriorityOrder {
    pub fn ranked(&self) -> &[IndividualId] {
        &self.ranked
    }

    pub fn vacancy_rank(&self) -> usize {
        self.vacancy_rank
    }

    pub fn acceptable(&self) -> &[IndividualId] {
        &self.ranked[..self.vacancy_rank]
    }

    pub fn unacceptable(&self) -> &[IndividualId] {
        &self.ranked[self.vacancy_rank..]
    }

    pub fn is_acceptable(&self, id: &IndividualId) -> bool {
        self.acceptable().iter().any(|r| r == id)
    }

    pub fn position(&self, id: &IndividualId) -> Option<usize> {
        self.ranked.iter().position(|r| r == id)
    }
}

/// Roster ranking by indices; `cut` plays the role of the vacancy marker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Ranking {
    pub order: Vec<u32>,
    pub cut: usize,
}

impl Ranking {
    fn into_priority_order(self, inst: &Instance) -> PriorityOrder {
        let roster = inst.individuals();
        PriorityOrder {
            ranked: self.order.iter().map(|&ix| roster[ix as usize].id.clone()).collect(),
            vacancy_rank: self.cut,
        }
    }
}

fn merit_cmp(inst: &Instance, a: u32, b: u32) -> Ordering {
    let roster = inst.individuals();
    let (a, b) = (&roster[a as usize], &roster[b as usize]);
    b.score.cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

fn sorted_by_merit(inst: &Instance, mut indices: Vec<u32>) -> Vec<u32> {
    indices.sort_unstable_by(|&a, &b| merit_cmp(inst, a, b));
    indices
}

fn split_members(inst: &Instance, category: CategoryId) -> (Vec<u32>, Vec<u32>) {
    let mut members = Vec::new();
    let mut others = Vec::new();
    for (ix, ind) in inst.individuals().iter().enumerate() {
        if ind.memberships.contains(&category) {
            members.push(ix as u32);
        } else {
            others.push(ix as u32);
        }
    }
    (members, others)
}

pub(crate) fn baseline_ranking(inst: &Instance) -> Ranking {
    let order = sorted_by_merit(inst, (0..inst.len() as u32).collect());
    let cut = order.len();
    Ranking { order, cut }
}

pub(crate) fn hard_ranking(inst: &Instance, category: CategoryId) -> Result<Ranking, PolicyError> {
    if !category.is_reserve() {
        return Err(PolicyError::NotReserve(category));
    }
    let (members, others) = split_members(inst, category);
    let mut order = sorted_by_merit(inst, members);
    let cut = order.len();
    order.extend(sorted_by_merit(inst, others));
    Ok(Ranking { order, cut })
}

pub(crate) fn soft_ranking(
    inst: &Instance,
    category: CategoryId,
    scope: SoftScope,
) -> Result<Ranking, PolicyError> {
    if !category.is_reserve() {
        return Err(PolicyError::NotReserve(category));
    }
    let (members, others) = split_members(inst, category);
    let (pool, rest): (Vec<u32>, Vec<u32>) = match scope {
        SoftScope::Everyone => (others, Vec::new()),
        SoftScope::GcOnly => others
            .into_iter()
            .partition(|&ix| inst.individuals()[ix as usize].is_general()),
    };
    let mut order = sorted_by_merit(inst, members);
    order.extend(sorted_by_merit(inst, pool));
    let cut = order.len();
    order.extend(sorted_by_merit(inst, rest));
    Ok(Ranking { order, cut })
}

/// The literal pairwise reading of the elevated policy, used to double-check
/// the key-based sort below. Ties between same-class individuals fall back to
/// ascending id; a member never outranks a non-member on an exact boost tie.
fn elevated_above(inst: &Instance, category: CategoryId, k: Score, a: u32, b: u32) -> bool {
    let roster = inst.individuals();
    let (ia, ib) = (&roster[a as usize], &roster[b as usize]);
    match (ia.memberships.contains(&category), ib.memberships.contains(&category)) {
        (true, false) => ia.score + k > ib.score,
        (false, true) => ib.score + k <= ia.score,
        _ => merit_cmp(inst, a, b) == Ordering::Less,
    }
}

pub(crate) fn elevated_ranking(
    inst: &Instance,
    category: CategoryId,
    k: Score,
) -> Result<Ranking, PolicyError> {
    if !category.is_reserve() {
        return Err(PolicyError::NotReserve(category));
    }
    if k.is_negative() {
        return Err(PolicyError::NegativeBoost(k));
    }
    let roster = inst.individuals();
    let mut keyed: Vec<(Score, bool, u32)> = roster
        .iter()
        .enumerate()
        .map(|(ix, ind)| {
            let member = ind.memberships.contains(&category);
            let effective = if member { ind.score + k } else { ind.score };
            (effective, member, ix as u32)
        })
        .collect();
    // Effective score descending; on an exact tie the non-member wins; same-class
    // ties fall back to ascending id.
    keyed.sort_unstable_by(|a, b| {
        b.0.cmp(&a.0)
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| roster[a.2 as usize].id.cmp(&roster[b.2 as usize].id))
    });
    let order: Vec<u32> = keyed.into_iter().map(|(_, _, ix)| ix).collect();
    for (pos, &a) in order.iter().enumerate() {
        for &b in &order[pos + 1..] {
            if !elevated_above(inst, category, k, a, b) {
                return Err(PolicyError::IntransitiveTie {
                    first: roster[a as usize].id.clone(),
                    second: roster[b as usize].id.clone(),
                });
            }
        }
    }
    let cut = order.len();
    Ok(Ranking { order, cut })
}

/// Ranking used when filling `seat` under `policy`; OPEN always uses the
/// baseline order.
pub(crate) fn stage_ranking(
    inst: &Instance,
    seat: CategoryId,
    policy: Policy,
) -> Result<Ranking, PolicyError> {
    match seat {
        CategoryId::Open => Ok(baseline_ranking(inst)),
        reserve => match policy {
            Policy::Hard => hard_ranking(inst, reserve),
            Policy::Soft(scope) => soft_ranking(inst, reserve, scope),
            Policy::Elevated(k) => elevated_ranking(inst, reserve, k),
        },
    }
}

/// Everyone ranked by descending merit (ties by ascending id); all acceptable.
pub fn baseline_order(inst: &Instance) -> PriorityOrder {
    baseline_ranking(inst).into_priority_order(inst)
}

/// Members of `category` by merit; everyone else is unacceptable.
pub fn hard_order(inst: &Instance, category: CategoryId) -> Result<PriorityOrder, PolicyError> {
    hard_ranking(inst, category).map(|r| r.into_priority_order(inst))
}

/// Members of `category` by merit, then the reversion pool by merit; the seat
/// prefers members but reverts instead of staying vacant.
pub fn soft_order(
    inst: &Instance,
    category: CategoryId,
    scope: SoftScope,
) -> Result<PriorityOrder, PolicyError> {
    soft_ranking(inst, category, scope).map(|r| r.into_priority_order(inst))
}

/// The score-elevated order for `category` with boost `k`; everyone acceptable.
pub fn elevated_order(
    inst: &Instance,
    category: CategoryId,
    k: Score,
) -> Result<PriorityOrder, PolicyError> {
    elevated_ranking(inst, category, k).map(|r| r.into_priority_order(inst))
}
