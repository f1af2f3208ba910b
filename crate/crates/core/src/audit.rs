//! Cutoff reports and axiom checks: the cutoff-gap directive, within-category
//! fairness, non-wastefulness, and an exhaustive substitutes check.
//!
//! Violations are reported as [`ViolationWitness`] values that carry the
//! instance (and rule, when known) needed to replay them: feeding a witness
//! back through the engine re-derives the violation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::engine::{self, Assignment, ChoiceRule};
use crate::model::{CategoryId, Instance, IndividualId, Score};
use crate::policies;

/// Default ceiling on the universe size accepted by [`check_substitutes`].
pub const DEFAULT_MAX_UNIVERSE: usize = 12;

/// Above this the subset enumeration is unreasonable no matter what the caller
/// asks for.
const HARD_UNIVERSE_CAP: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuditError {
    #[error("assignment references {0}, which is not in the instance")]
    ForeignAssignment(IndividualId),
    #[error("universe of {size} individuals exceeds the substitutes-check bound of {limit}")]
    UniverseTooLarge { size: usize, limit: usize },
    #[error("witness does not replay: {0}")]
    NonReplayingWitness(String),
}

/// The axioms the audit layer can check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum CheckKind {
    Gap,
    Fairness,
    NonWaste,
    Substitutes,
}

impl CheckKind {
    pub const ALL: [CheckKind; 4] =
        [CheckKind::Gap, CheckKind::Fairness, CheckKind::NonWaste, CheckKind::Substitutes];

    pub fn token(self) -> &'static str {
        match self {
            CheckKind::Gap => "gap",
            CheckKind::Fairness => "fairness",
            CheckKind::NonWaste => "waste",
            CheckKind::Substitutes => "substitutes",
        }
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for CheckKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gap" => Ok(CheckKind::Gap),
            "fairness" => Ok(CheckKind::Fairness),
            "waste" | "nonwaste" | "non-waste" => Ok(CheckKind::NonWaste),
            "substitutes" => Ok(CheckKind::Substitutes),
            other => Err(format!(
                "unknown check {other:?} (expected gap, fairness, waste, or substitutes)"
            )),
        }
    }
}

/// Minimum raw seated score per seat category, plus the open-vs-OBC gap.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CutoffReport {
    cutoffs: BTreeMap<CategoryId, Score>,
}

impl CutoffReport {
    pub fn cutoff(&self, category: CategoryId) -> Option<Score> {
        self.cutoffs.get(&category).copied()
    }

    pub fn cutoffs(&self) -> &BTreeMap<CategoryId, Score> {
        &self.cutoffs
    }

    /// Open cutoff minus OBC cutoff; present only when both are.
    pub fn gap(&self) -> Option<Score> {
        match (self.cutoff(CategoryId::Open), self.cutoff(CategoryId::Obc)) {
            (Some(open), Some(obc)) => Some(open - obc),
            _ => None,
        }
    }
}

/// Per-category minimum raw seated score; categories with nobody seated are
/// simply absent from the report.
pub fn cutoffs(inst: &Instance, assignment: &Assignment) -> Result<CutoffReport, AuditError> {
    for id in assignment.rejected() {
        if inst.individual(id).is_none() {
            return Err(AuditError::ForeignAssignment(id.clone()));
        }
    }
    let mut cutoffs: BTreeMap<CategoryId, Score> = BTreeMap::new();
    for (id, &category) in assignment.seats() {
        let ind = inst.individual(id).ok_or_else(|| AuditError::ForeignAssignment(id.clone()))?;
        cutoffs
            .entry(category)
            .and_modify(|c| {
                if ind.score < *c {
                    *c = ind.score;
                }
            })
            .or_insert(ind.score);
    }
    Ok(CutoffReport { cutoffs })
}

/// A cutoff gap exceeding its bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GapBreach {
    pub gap: Score,
    pub bound: Score,
}

/// Passes when the gap is absent or at most `bound` (the boundary is
/// inclusive: a gap of exactly `bound` passes).
pub fn gap_check(report: &CutoffReport, bound: Score) -> Result<(), GapBreach> {
    match report.gap() {
        Some(gap) if gap > bound => Err(GapBreach { gap, bound }),
        _ => Ok(()),
    }
}

/// What a [`ViolationWitness`] actually witnessed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WitnessDetail {
    Gap {
        bound: Score,
        gap: Score,
    },
    Fairness {
        category: CategoryId,
        /// The higher-scored member left unseated...
        passed_over: IndividualId,
        /// ...while this lower-scored member of the same category holds a seat.
        seated: IndividualId,
    },
    NonWaste {
        category: CategoryId,
        /// Unseated but acceptable to the vacant seat.
        unseated: IndividualId,
    },
    Substitutes {
        /// The applicant pool exhibiting the failure, sorted by id.
        subset: Vec<IndividualId>,
        /// The newcomer whose arrival rescues `rescued`.
        entrant: IndividualId,
        /// Rejected from `subset` alone, chosen once `entrant` joins.
        rescued: IndividualId,
    },
}

/// A replayable record of an axiom violation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViolationWitness {
    pub axiom: CheckKind,
    /// The rule that produced the violation; `None` when the check was run
    /// against an externally supplied assignment, in which case the witness
    /// cannot be replayed.
    pub rule: Option<ChoiceRule>,
    pub instance: Instance,
    /// The individuals witnessing the failure.
    pub individuals: Vec<IndividualId>,
    pub detail: WitnessDetail,
    pub trace: String,
}

impl ViolationWitness {
    pub fn with_rule(mut self, rule: ChoiceRule) -> Self {
        self.rule = Some(rule);
        self
    }

    pub fn summary(&self) -> String {
        match &self.detail {
            WitnessDetail::Gap { bound, gap } => format!("gap {gap} exceeds bound {bound}"),
            WitnessDetail::Fairness { category, passed_over, seated } => {
                format!("{category} member {passed_over} passed over while {seated} is seated")
            }
            WitnessDetail::NonWaste { category, unseated } => {
                format!("{category} seat vacant while {unseated} is acceptable and unseated")
            }
            WitnessDetail::Substitutes { entrant, rescued, .. } => {
                format!("adding {entrant} rescues {rescued}")
            }
        }
    }

    /// Re-derives the violation through the engine. Errors when the witness
    /// carries no rule or the violation no longer reproduces.
    pub fn replay(&self) -> Result<(), AuditError> {
        fn fail(reason: &str) -> Result<(), AuditError> {
            Err(AuditError::NonReplayingWitness(reason.to_string()))
        }
        let Some(rule) = self.rule else {
            return fail("witness carries no choice rule");
        };
        match &self.detail {
            WitnessDetail::Gap { bound, gap } => {
                let assignment = rule.apply(&self.instance);
                let report = cutoffs(&self.instance, &assignment)?;
                match gap_check(&report, *bound) {
                    Err(breach) if breach.gap == *gap => Ok(()),
                    Err(_) => fail("gap violation reproduces with a different gap"),
                    Ok(()) => fail("gap check passes on replay"),
                }
            }
            WitnessDetail::Fairness { .. } => {
                let assignment = rule.apply(&self.instance);
                match check_fairness(&self.instance, &assignment) {
                    Some(w) if w.detail == self.detail => Ok(()),
                    Some(_) => fail("fairness violation reproduces with a different pair"),
                    None => fail("fairness check passes on replay"),
                }
            }
            WitnessDetail::NonWaste { .. } => {
                let assignment = rule.apply(&self.instance);
                match check_nonwaste(&self.instance, &assignment, &rule) {
                    Some(w) if w.detail == self.detail => Ok(()),
                    Some(_) => fail("non-wastefulness violation reproduces differently"),
                    None => fail("non-wastefulness check passes on replay"),
                }
            }
            WitnessDetail::Substitutes { subset, entrant, rescued } => {
                let subset_ids: BTreeSet<IndividualId> = subset.iter().cloned().collect();
                let before = rule.apply(&self.instance.restrict(&subset_ids));
                if !before.rejected().contains(rescued) {
                    return fail("individual is not rejected from the subset alone");
                }
                let mut grown = subset_ids;
                grown.insert(entrant.clone());
                let after = rule.apply(&self.instance.restrict(&grown));
                if !after.is_seated(rescued) {
                    return fail("individual is not chosen after the entrant joins");
                }
                Ok(())
            }
        }
    }
}

/// Pass iff within every category (reserves and `g`) no member is seated while
/// a strictly higher-scored member of the same category is left out.
pub fn check_fairness(inst: &Instance, assignment: &Assignment) -> Option<ViolationWitness> {
    let mut categories = CategoryId::RESERVES.to_vec();
    categories.push(CategoryId::General);
    for category in categories {
        let mut members = inst.members_of(category).expect("reserve or general label");
        members.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        let mut best_unseated: Option<&crate::model::Individual> = None;
        for member in members {
            if assignment.is_seated(&member.id) {
                if let Some(passed) = best_unseated {
                    if passed.score > member.score {
                        return Some(ViolationWitness {
                            axiom: CheckKind::Fairness,
                            rule: None,
                            instance: inst.clone(),
                            individuals: vec![passed.id.clone(), member.id.clone()],
                            detail: WitnessDetail::Fairness {
                                category,
                                passed_over: passed.id.clone(),
                                seated: member.id.clone(),
                            },
                            trace: format!(
                                "{category} member {} (score {}) is unseated while {} (score {}) \
                                 holds a seat",
                                passed.id, passed.score, member.id, member.score
                            ),
                        });
                    }
                }
            } else if best_unseated.is_none() {
                best_unseated = Some(member);
            }
        }
    }
    None
}

/// Pass iff no seat stays vacant while an unseated individual acceptable to
/// that seat's priority order (and, for a gap-constrained OBC stage, above the
/// raw-score floor) exists.
pub fn check_nonwaste(
    inst: &Instance,
    assignment: &Assignment,
    rule: &ChoiceRule,
) -> Option<ViolationWitness> {
    let open_pos = inst.precedence().iter().position(|&c| c == CategoryId::Open);
    let obc_pos = inst.precedence().iter().position(|&c| c == CategoryId::Obc);
    let floor = match (rule.gap_bound, open_pos, obc_pos) {
        (Some(bound), Some(op), Some(bp)) if op < bp => {
            let open_cutoff = assignment
                .seated_in(CategoryId::Open)
                .iter()
                .filter_map(|id| inst.individual(id))
                .map(|i| i.score)
                .min();
            open_cutoff.map(|c| c - bound)
        }
        _ => None,
    };
    for &category in inst.precedence() {
        let quota = inst.quota(category);
        let seated = assignment.seated_in(category).len() as u32;
        if seated >= quota {
            continue;
        }
        let ranking = policies::stage_ranking(inst, category, rule.policy)
            .expect("precedence contains only seat categories");
        for &ix in &ranking.order[..ranking.cut] {
            let ind = &inst.individuals()[ix as usize];
            if assignment.is_seated(&ind.id) {
                continue;
            }
            if category == CategoryId::Obc {
                if let Some(f) = floor {
                    if ind.score < f {
                        continue;
                    }
                }
            }
            return Some(ViolationWitness {
                axiom: CheckKind::NonWaste,
                rule: Some(*rule),
                instance: inst.clone(),
                individuals: vec![ind.id.clone()],
                detail: WitnessDetail::NonWaste { category, unseated: ind.id.clone() },
                trace: format!(
                    "{category} has {} vacant seat(s) while {} (score {}) is acceptable and \
                     unseated",
                    quota - seated,
                    ind.id,
                    ind.score
                ),
            });
        }
    }
    None
}

fn ids_of_mask(inst: &Instance, mask: u64) -> Vec<IndividualId> {
    let mut ids: Vec<IndividualId> = inst
        .individuals()
        .iter()
        .enumerate()
        .filter(|(ix, _)| mask & (1 << ix) != 0)
        .map(|(_, i)| i.id.clone())
        .collect();
    ids.sort();
    ids
}

/// Exhaustive substitutes check: for every subset `S` of the universe and
/// every outsider `j`, anyone rejected by the rule on `S` must stay rejected
/// on `S ∪ {j}`. A pass is a proof over the whole double enumeration; a
/// violation reports the lexicographically smallest `(S, j, i)` witness.
///
/// The enumeration walks all `2^n` subsets, so the universe size is capped at
/// `max_universe` (and at a hard ceiling of 20 regardless).
pub fn check_substitutes(
    rule: &ChoiceRule,
    universe: &Instance,
    max_universe: usize,
) -> Result<Option<ViolationWitness>, AuditError> {
    let n = universe.len();
    let limit = max_universe.min(HARD_UNIVERSE_CAP);
    if n > limit {
        return Err(AuditError::UniverseTooLarge { size: n, limit });
    }
    if n == 0 {
        return Ok(None);
    }

    let prepared = engine::Prepared::new(universe, *rule);
    let subsets = 1usize << n;
    let mut chosen = vec![0u64; subsets];
    for (mask, slot) in chosen.iter_mut().enumerate() {
        *slot = prepared.chosen_mask(mask as u64);
    }

    let roster = universe.individuals();
    let mut best: Option<(Vec<IndividualId>, IndividualId, IndividualId)> = None;
    for grown in 0..subsets {
        let grown_mask = grown as u64;
        let mut entrants = grown_mask;
        while entrants != 0 {
            let j_bit = entrants & entrants.wrapping_neg();
            entrants ^= j_bit;
            let subset = grown_mask ^ j_bit;
            // Rejected from the subset alone but chosen once j joins.
            let rescued_bits = subset & !chosen[subset as usize] & chosen[grown];
            if rescued_bits == 0 {
                continue;
            }
            let j_id = roster[j_bit.trailing_zeros() as usize].id.clone();
            let subset_ids = ids_of_mask(universe, subset);
            let mut bits = rescued_bits;
            while bits != 0 {
                let i_bit = bits & bits.wrapping_neg();
                bits ^= i_bit;
                let candidate = (
                    subset_ids.clone(),
                    j_id.clone(),
                    roster[i_bit.trailing_zeros() as usize].id.clone(),
                );
                if best.as_ref().is_none_or(|b| candidate < *b) {
                    best = Some(candidate);
                }
            }
        }
    }

    Ok(best.map(|(subset, entrant, rescued)| ViolationWitness {
        axiom: CheckKind::Substitutes,
        rule: Some(*rule),
        instance: universe.clone(),
        individuals: vec![entrant.clone(), rescued.clone()],
        detail: WitnessDetail::Substitutes {
            subset: subset.clone(),
            entrant: entrant.clone(),
            rescued: rescued.clone(),
        },
        trace: format!(
            "{rescued} is rejected from {{{}}} but chosen once {entrant} joins",
            subset.iter().map(|i| i.as_str()).collect::<Vec<_>>().join(", ")
        ),
    }))
}

/// Outcome of one audit check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditEntry {
    pub check: CheckKind,
    pub witness: Option<ViolationWitness>,
}

/// Results of the selected checks, in canonical check order.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.witness.is_none())
    }

    pub fn violations(&self) -> impl Iterator<Item = &ViolationWitness> {
        self.entries.iter().filter_map(|e| e.witness.as_ref())
    }

    /// One line per check: name, verdict, witness summary.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            match &entry.witness {
                None => out.push_str(&format!("{}: PASS\n", entry.check)),
                Some(w) => out.push_str(&format!("{}: VIOLATION - {}\n", entry.check, w.summary())),
            }
        }
        out
    }
}

/// Runs the selected checks against `rule` on `inst`. The assignment audited
/// is the rule's own output; `gap_bound` is the directive bound for the gap
/// check, and `max_universe` caps the substitutes enumeration.
pub fn run_audit(
    inst: &Instance,
    rule: &ChoiceRule,
    checks: &[CheckKind],
    gap_bound: Score,
    max_universe: usize,
) -> Result<AuditReport, AuditError> {
    let assignment = rule.apply(inst);
    let mut report = AuditReport::default();
    for check in CheckKind::ALL {
        if !checks.contains(&check) {
            continue;
        }
        let witness = match check {
            CheckKind::Gap => {
                let cutoff_report = cutoffs(inst, &assignment)?;
                match gap_check(&cutoff_report, gap_bound) {
                    Ok(()) => None,
                    Err(breach) => {
                        let marginal = |category| {
                            assignment
                                .seated_in(category)
                                .iter()
                                .filter_map(|id| inst.individual(id))
                                .min_by(|a, b| a.score.cmp(&b.score).then_with(|| a.id.cmp(&b.id)))
                                .map(|i| i.id.clone())
                        };
                        let individuals: Vec<IndividualId> =
                            [marginal(CategoryId::Open), marginal(CategoryId::Obc)]
                                .into_iter()
                                .flatten()
                                .collect();
                        Some(ViolationWitness {
                            axiom: CheckKind::Gap,
                            rule: Some(*rule),
                            instance: inst.clone(),
                            individuals,
                            detail: WitnessDetail::Gap { bound: breach.bound, gap: breach.gap },
                            trace: format!(
                                "open cutoff {} minus OBC cutoff {} is {}, above the bound {}",
                                cutoff_report.cutoff(CategoryId::Open).unwrap(),
                                cutoff_report.cutoff(CategoryId::Obc).unwrap(),
                                breach.gap,
                                breach.bound
                            ),
                        })
                    }
                }
            }
            CheckKind::Fairness => check_fairness(inst, &assignment).map(|w| w.with_rule(*rule)),
            CheckKind::NonWaste => check_nonwaste(inst, &assignment, rule),
            CheckKind::Substitutes => check_substitutes(rule, inst, max_universe)?,
        };
        report.entries.push(AuditEntry { check, witness });
    }
    Ok(report)
}
