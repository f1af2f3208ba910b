//! Sequential seat filling over the precedence order.
//!
//! Seat categories are processed one after another (OPEN first by default);
//! each category fills its quota from the not-yet-assigned individuals by
//! walking its policy-specific priority order. A reserve member who wins an
//! open seat therefore never consumes her category's quota ("over and above").
//!
//! The gap-constrained variant is identical except at the OBC stage: once the
//! open stage has seated anyone, OBC seats only accept individuals whose *raw*
//! score is at least `open cutoff - bound`. Boosted scores play no part in the
//! floor; they only order the queue.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{CategoryId, Individual, Instance, IndividualId, ModelError, Score};
use crate::policies::{self, Policy};

/// A base policy plus an optional cutoff-gap bound for the OBC stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChoiceRule {
    pub policy: Policy,
    pub gap_bound: Option<Score>,
}

impl ChoiceRule {
    pub fn base(policy: Policy) -> Self {
        ChoiceRule { policy, gap_bound: None }
    }

    pub fn with_gap(policy: Policy, bound: Score) -> Self {
        ChoiceRule { policy, gap_bound: Some(bound) }
    }

    /// Runs the rule on `inst` and returns the assignment.
    pub fn apply(&self, inst: &Instance) -> Assignment {
        run(inst, *self).assignment
    }
}

impl std::fmt::Display for ChoiceRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.gap_bound {
            Some(bound) => write!(f, "{} + gap {bound}", self.policy),
            None => write!(f, "{}", self.policy),
        }
    }
}

/// Where everyone ended up: seat category per chosen individual, the rejected
/// set, and unfilled seats per category. `seats` and `rejected` partition the
/// roster the rule was run on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    seats: BTreeMap<IndividualId, CategoryId>,
    rejected: BTreeSet<IndividualId>,
    vacancies: BTreeMap<CategoryId, u32>,
}

impl Assignment {
    pub fn from_parts(
        seats: BTreeMap<IndividualId, CategoryId>,
        rejected: BTreeSet<IndividualId>,
        vacancies: BTreeMap<CategoryId, u32>,
    ) -> Self {
        Assignment { seats, rejected, vacancies }
    }

    pub fn seats(&self) -> &BTreeMap<IndividualId, CategoryId> {
        &self.seats
    }

    pub fn rejected(&self) -> &BTreeSet<IndividualId> {
        &self.rejected
    }

    pub fn vacancies(&self) -> &BTreeMap<CategoryId, u32> {
        &self.vacancies
    }

    pub fn seat_of(&self, id: &IndividualId) -> Option<CategoryId> {
        self.seats.get(id).copied()
    }

    pub fn is_seated(&self, id: &IndividualId) -> bool {
        self.seats.contains_key(id)
    }

    pub fn chosen_ids(&self) -> BTreeSet<IndividualId> {
        self.seats.keys().cloned().collect()
    }

    /// Ids seated in `category`, in id order.
    pub fn seated_in(&self, category: CategoryId) -> Vec<&IndividualId> {
        self.seats.iter().filter(|(_, &c)| c == category).map(|(id, _)| id).collect()
    }
}

/// One line of the fill trace: what a stage did.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StageReport {
    pub category: CategoryId,
    /// Seated ids in the order the stage picked them.
    pub seated: Vec<IndividualId>,
    /// Minimum raw score seated at this stage.
    pub cutoff: Option<Score>,
    /// Raw-score floor in force (gap-constrained OBC stage only).
    pub floor: Option<Score>,
    pub vacancies: u32,
}

/// Assignment plus the per-stage trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub assignment: Assignment,
    pub stages: Vec<StageReport>,
}

impl Outcome {
    pub fn open_cutoff(&self) -> Option<Score> {
        self.stages.iter().find(|s| s.category == CategoryId::Open).and_then(|s| s.cutoff)
    }

    /// The floor applied at the OBC stage, if one was in force.
    pub fn obc_floor(&self) -> Option<Score> {
        self.stages.iter().find(|s| s.category == CategoryId::Obc).and_then(|s| s.floor)
    }
}

struct PreparedStage {
    category: CategoryId,
    quota: u32,
    /// Acceptable roster indices, best first.
    order: Vec<u32>,
}

/// A rule bound to an instance, with stage orders precomputed so that many
/// roster subsets can be evaluated cheaply (the substitutes check walks every
/// subset of the universe through this).
pub(crate) struct Prepared<'a> {
    inst: &'a Instance,
    rule: ChoiceRule,
    scores: Vec<Score>,
    stages: Vec<PreparedStage>,
}

#[inline]
fn bit(words: &[u64], ix: u32) -> bool {
    words[(ix >> 6) as usize] & (1u64 << (ix & 63)) != 0
}

#[inline]
fn set_bit(words: &mut [u64], ix: u32) {
    words[(ix >> 6) as usize] |= 1u64 << (ix & 63);
}

impl<'a> Prepared<'a> {
    /// Panics if the rule is malformed (negative boost or gap bound); both are
    /// rejected at every parsing boundary before reaching the engine.
    pub(crate) fn new(inst: &'a Instance, rule: ChoiceRule) -> Self {
        if let Some(bound) = rule.gap_bound {
            assert!(!bound.is_negative(), "gap bound must be non-negative");
        }
        let stages = inst
            .precedence()
            .iter()
            .map(|&category| PreparedStage {
                category,
                quota: inst.quota(category),
                order: {
                    let ranking = policies::stage_ranking(inst, category, rule.policy)
                        .expect("precedence contains only seat categories and the policy is valid");
                    let mut order = ranking.order;
                    order.truncate(ranking.cut);
                    order
                },
            })
            .collect();
        let scores = inst.individuals().iter().map(|i| i.score).collect();
        Prepared { inst, rule, scores, stages }
    }

    fn word_count(&self) -> usize {
        self.inst.len().div_ceil(64).max(1)
    }

    /// Core fill loop. `present` masks which roster indices exist in this
    /// evaluation; `assigned` must come in zeroed and holds the chosen set on
    /// return. `on_seat` fires per seated individual, `on_stage` once per
    /// stage with (stage index, seats left, floor, stage cutoff).
    fn walk(
        &self,
        present: &[u64],
        assigned: &mut [u64],
        mut on_seat: impl FnMut(usize, u32),
        mut on_stage: impl FnMut(usize, u32, Option<Score>, Option<Score>),
    ) {
        let mut open_cutoff: Option<Score> = None;
        let mut open_processed = false;
        for (stage_ix, stage) in self.stages.iter().enumerate() {
            let floor = if stage.category == CategoryId::Obc && open_processed {
                self.rule.gap_bound.and_then(|d| open_cutoff.map(|c| c - d))
            } else {
                None
            };
            let mut left = stage.quota;
            let mut min_raw: Option<Score> = None;
            for &ix in &stage.order {
                if left == 0 {
                    break;
                }
                if !bit(present, ix) || bit(assigned, ix) {
                    continue;
                }
                let raw = self.scores[ix as usize];
                if let Some(f) = floor {
                    if raw < f {
                        continue;
                    }
                }
                set_bit(assigned, ix);
                left -= 1;
                min_raw = Some(match min_raw {
                    Some(m) if m <= raw => m,
                    _ => raw,
                });
                on_seat(stage_ix, ix);
            }
            if stage.category == CategoryId::Open {
                open_processed = true;
                open_cutoff = min_raw;
            }
            on_stage(stage_ix, left, floor, min_raw);
        }
    }

    /// Chosen set for the sub-roster `present`; requires a roster of at most
    /// 64 individuals.
    pub(crate) fn chosen_mask(&self, present: u64) -> u64 {
        debug_assert!(self.inst.len() <= 64);
        let mut assigned = [0u64];
        self.walk(&[present], &mut assigned, |_, _| {}, |_, _, _, _| {});
        assigned[0]
    }

    /// Full evaluation over the whole roster, with the stage trace.
    pub(crate) fn outcome(&self) -> Outcome {
        let words = self.word_count();
        let present = vec![u64::MAX; words];
        let mut assigned = vec![0u64; words];
        let roster = self.inst.individuals();
        let mut seated_per_stage: Vec<Vec<IndividualId>> =
            vec![Vec::new(); self.stages.len()];
        let mut stage_meta: Vec<(u32, Option<Score>, Option<Score>)> = Vec::new();
        self.walk(
            &present,
            &mut assigned,
            |stage_ix, ix| seated_per_stage[stage_ix].push(roster[ix as usize].id.clone()),
            |_, left, floor, cutoff| stage_meta.push((left, floor, cutoff)),
        );

        let mut seats = BTreeMap::new();
        let mut stages = Vec::with_capacity(self.stages.len());
        for (stage_ix, stage) in self.stages.iter().enumerate() {
            let (left, floor, cutoff) = stage_meta[stage_ix];
            for id in &seated_per_stage[stage_ix] {
                seats.insert(id.clone(), stage.category);
            }
            stages.push(StageReport {
                category: stage.category,
                seated: std::mem::take(&mut seated_per_stage[stage_ix]),
                cutoff,
                floor,
                vacancies: left,
            });
        }
        let rejected = roster
            .iter()
            .map(|i| &i.id)
            .filter(|id| !seats.contains_key(*id))
            .cloned()
            .collect();
        let vacancies = stages.iter().map(|s| (s.category, s.vacancies)).collect();
        Outcome { assignment: Assignment { seats, rejected, vacancies }, stages }
    }
}

/// Runs `rule` on `inst`, returning the assignment and the stage trace.
pub fn run(inst: &Instance, rule: ChoiceRule) -> Outcome {
    Prepared::new(inst, rule).outcome()
}

/// Fills seats under `policy` with no gap constraint.
pub fn choose(inst: &Instance, policy: Policy) -> Assignment {
    run(inst, ChoiceRule::base(policy)).assignment
}

/// Like [`choose`], but the OBC stage only seats individuals whose raw score
/// is at least the open cutoff minus `bound`. No floor applies when nothing
/// was seated at OPEN (or when OPEN is processed after OBC).
pub fn gap_constrained_choose(inst: &Instance, base: Policy, bound: Score) -> Assignment {
    run(inst, ChoiceRule::with_gap(base, bound)).assignment
}

/// A new instance with `individual` added; the original is untouched.
pub fn add_individual(inst: &Instance, individual: Individual) -> Result<Instance, ModelError> {
    inst.with_individual(individual)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::Individual;
    use crate::policies::SoftScope;
    use proptest::prelude::*;

    fn seats_of(a: &Assignment) -> Vec<(&str, CategoryId)> {
        a.seats().iter().map(|(id, &c)| (id.as_str(), c)).collect()
    }

    fn rejected_of(a: &Assignment) -> Vec<&str> {
        a.rejected().iter().map(|id| id.as_str()).collect()
    }

    pub(crate) fn four_seat_instance() -> Instance {
        Instance::new(
            vec![
                Individual::new("i1", [CategoryId::General], Score::from_int(100)),
                Individual::new("i2", [CategoryId::Sc], Score::from_int(99)),
                Individual::new("i3", [CategoryId::St], Score::from_int(98)),
                Individual::new("i4", [CategoryId::General], Score::from_int(98)),
                Individual::new("i5", [CategoryId::Obc], Score::from_int(89)),
            ],
            4,
            [(CategoryId::Sc, 1), (CategoryId::St, 1), (CategoryId::Obc, 1)].into(),
            None,
            false,
        )
        .unwrap()
    }

    pub(crate) fn five_seat_instance() -> Instance {
        Instance::new(
            vec![
                Individual::new("i1", [CategoryId::General], Score::from_int(100)),
                Individual::new("i2", [CategoryId::Sc], Score::from_int(99)),
                Individual::new("i3", [CategoryId::St], Score::from_int(98)),
                Individual::new("i4", [CategoryId::Obc], Score::from_int(91)),
                Individual::new("i5", [CategoryId::Obc], Score::from_int(90)),
                Individual::new("i6", [CategoryId::General], Score::from_int(98)),
            ],
            5,
            [(CategoryId::Sc, 1), (CategoryId::St, 1), (CategoryId::Obc, 2)].into(),
            None,
            false,
        )
        .unwrap()
    }

    pub(crate) fn entrant() -> Individual {
        Individual::new("i7", [CategoryId::General], Score::from_int(102))
    }

    #[test]
    fn elevated_boost_displaces_the_runner_up() {
        let a = choose(&four_seat_instance(), Policy::Elevated(Score::from_int(10)));
        assert_eq!(
            seats_of(&a),
            [
                ("i1", CategoryId::Open),
                ("i2", CategoryId::Sc),
                ("i3", CategoryId::St),
                ("i5", CategoryId::Obc),
            ]
        );
        assert_eq!(rejected_of(&a), ["i4"]);
        assert!(a.vacancies().values().all(|&v| v == 0));
    }

    #[test]
    fn hard_policy_gives_same_seats_on_four_seat_roster() {
        let elevated = choose(&four_seat_instance(), Policy::Elevated(Score::from_int(10)));
        let hard = choose(&four_seat_instance(), Policy::Hard);
        assert_eq!(elevated, hard);
    }

    #[test]
    fn empty_roster_leaves_all_seats_vacant() {
        let inst = Instance::new(
            vec![],
            4,
            [(CategoryId::Sc, 1), (CategoryId::Obc, 2)].into(),
            None,
            false,
        )
        .unwrap();
        for policy in [Policy::Hard, Policy::Soft(SoftScope::GcOnly), Policy::Elevated(Score::ZERO)]
        {
            let a = choose(&inst, policy);
            assert!(a.seats().is_empty());
            assert!(a.rejected().is_empty());
            assert_eq!(a.vacancies()[&CategoryId::Open], 1);
            assert_eq!(a.vacancies()[&CategoryId::Sc], 1);
            assert_eq!(a.vacancies()[&CategoryId::Obc], 2);
        }
    }

    #[test]
    fn gap_floor_binds_to_raw_scores() {
        let rule = ChoiceRule::with_gap(Policy::Elevated(Score::from_int(10)), Score::from_int(10));
        let pre = run(&five_seat_instance(), rule);
        assert_eq!(
            seats_of(&pre.assignment),
            [
                ("i1", CategoryId::Open),
                ("i2", CategoryId::Sc),
                ("i3", CategoryId::St),
                ("i4", CategoryId::Obc),
                ("i5", CategoryId::Obc),
            ]
        );
        assert_eq!(pre.obc_floor(), Some(Score::from_int(90)));

        // A stronger entrant raises the open cutoff to 102, so the floor of 92
        // now excludes both category members (raw 91 and 90) even though the
        // boost lifts them past it.
        let post_inst = add_individual(&five_seat_instance(), entrant()).unwrap();
        let post = run(&post_inst, rule);
        assert_eq!(
            seats_of(&post.assignment),
            [
                ("i1", CategoryId::Obc),
                ("i2", CategoryId::Sc),
                ("i3", CategoryId::St),
                ("i6", CategoryId::Obc),
                ("i7", CategoryId::Open),
            ]
        );
        assert_eq!(post.obc_floor(), Some(Score::from_int(92)));
        assert_eq!(rejected_of(&post.assignment), ["i4", "i5"]);
    }

    #[test]
    fn unbounded_gap_equals_plain_choose() {
        for inst in [four_seat_instance(), five_seat_instance()] {
            let base = Policy::Elevated(Score::from_int(10));
            assert_eq!(
                gap_constrained_choose(&inst, base, Score::from_int(1_000_000)),
                choose(&inst, base)
            );
        }
    }

    #[test]
    fn stage_trace_records_fill_order() {
        let outcome = run(
            &four_seat_instance(),
            ChoiceRule::base(Policy::Elevated(Score::from_int(10))),
        );
        let brief: Vec<(CategoryId, Vec<&str>, Option<i64>)> = outcome
            .stages
            .iter()
            .map(|s| {
                (
                    s.category,
                    s.seated.iter().map(|i| i.as_str()).collect(),
                    s.cutoff.map(|c| c.to_string().parse().unwrap()),
                )
            })
            .collect();
        assert_eq!(
            brief,
            [
                (CategoryId::Open, vec!["i1"], Some(100)),
                (CategoryId::Sc, vec!["i2"], Some(99)),
                (CategoryId::St, vec!["i3"], Some(98)),
                (CategoryId::Obc, vec!["i5"], Some(89)),
            ]
        );
        assert_eq!(outcome.open_cutoff(), Some(Score::from_int(100)));
        assert_eq!(outcome.obc_floor(), None);
    }

    #[test]
    fn no_floor_when_obc_precedes_open() {
        let inst = Instance::new(
            five_seat_instance().individuals().to_vec(),
            5,
            [(CategoryId::Sc, 1), (CategoryId::St, 1), (CategoryId::Obc, 2)].into(),
            Some(vec![CategoryId::Obc, CategoryId::Open, CategoryId::Sc, CategoryId::St]),
            false,
        )
        .unwrap();
        let rule = ChoiceRule::with_gap(Policy::Elevated(Score::from_int(10)), Score::ZERO);
        let outcome = run(&inst, rule);
        assert_eq!(outcome.obc_floor(), None);
    }

    #[test]
    fn no_floor_when_open_quota_is_zero() {
        let inst = Instance::new(
            vec![
                Individual::new("a", [CategoryId::Obc], Score::from_int(10)),
                Individual::new("b", [CategoryId::General], Score::from_int(99)),
            ],
            1,
            [(CategoryId::Obc, 1)].into(),
            None,
            false,
        )
        .unwrap();
        let rule = ChoiceRule::with_gap(Policy::Hard, Score::ZERO);
        let outcome = run(&inst, rule);
        assert_eq!(outcome.obc_floor(), None);
        assert_eq!(seats_of(&outcome.assignment), [("a", CategoryId::Obc)]);
    }

    #[test]
    fn multi_membership_claimed_at_first_admitting_stage() {
        let inst = Instance::new(
            vec![
                Individual::new("x", [CategoryId::Sc, CategoryId::Obc], Score::from_int(50)),
                Individual::new("y", [CategoryId::Obc], Score::from_int(40)),
            ],
            2,
            [(CategoryId::Sc, 1), (CategoryId::Obc, 1)].into(),
            None,
            false,
        )
        .unwrap();
        let a = choose(&inst, Policy::Hard);
        assert_eq!(seats_of(&a), [("x", CategoryId::Sc), ("y", CategoryId::Obc)]);
    }

    #[test]
    fn add_individual_leaves_original_untouched() {
        let inst = five_seat_instance();
        let grown = add_individual(&inst, entrant()).unwrap();
        assert_eq!(grown.len(), 7);
        assert_eq!(inst.len(), 6);
        assert_eq!(grown.without(&IndividualId::new("i7")), inst);

        let err = add_individual(&inst, Individual::new("i4", [CategoryId::General], Score::ZERO))
            .unwrap_err();
        assert_eq!(err, ModelError::DuplicateId(IndividualId::new("i4")));
    }

    // -- property tests ------------------------------------------------------

    prop_compose! {
        pub(crate) fn arb_setup()(
            entries in prop::collection::vec((0u8..30, 0u8..6), 0..8),
            quotas in (0u32..3, 0u32..3),
            extra_capacity in 0u32..3,
            policy_code in 0u8..4,
            gap in prop::option::of(0i64..20),
        ) -> (Instance, ChoiceRule) {
            let roster = entries
                .into_iter()
                .enumerate()
                .map(|(k, (score, code))| {
                    let memberships: Vec<CategoryId> = match code {
                        0 | 1 => vec![CategoryId::General],
                        2 => vec![CategoryId::Sc],
                        3 => vec![CategoryId::Obc],
                        4 => vec![CategoryId::Ews],
                        _ => vec![CategoryId::Sc, CategoryId::Obc],
                    };
                    Individual::new(format!("p{k}"), memberships, Score::from_int(i64::from(score)))
                })
                .collect();
            let reserved: std::collections::BTreeMap<CategoryId, u32> =
                [(CategoryId::Sc, quotas.0), (CategoryId::Obc, quotas.1)]
                    .into_iter()
                    .filter(|&(_, q)| q > 0)
                    .collect();
            let capacity = quotas.0 + quotas.1 + extra_capacity;
            let inst = Instance::new(roster, capacity, reserved, None, false).unwrap();
            let policy = match policy_code {
                0 => Policy::Hard,
                1 => Policy::Soft(SoftScope::GcOnly),
                2 => Policy::Soft(SoftScope::Everyone),
                _ => Policy::Elevated(Score::from_int(7)),
            };
            let rule = ChoiceRule { policy, gap_bound: gap.map(Score::from_int) };
            (inst, rule)
        }
    }

    proptest! {
        #[test]
        fn seats_and_rejected_partition_the_roster((inst, rule) in arb_setup()) {
            let a = rule.apply(&inst);
            let mut all: BTreeSet<IndividualId> = a.chosen_ids();
            prop_assert!(all.is_disjoint(a.rejected()));
            all.extend(a.rejected().iter().cloned());
            let roster: BTreeSet<IndividualId> =
                inst.individuals().iter().map(|i| i.id.clone()).collect();
            prop_assert_eq!(all, roster);
        }

        #[test]
        fn quotas_are_never_exceeded((inst, rule) in arb_setup()) {
            let a = rule.apply(&inst);
            for &cat in inst.precedence() {
                prop_assert!(a.seated_in(cat).len() as u32 <= inst.quota(cat));
            }
            prop_assert!(a.seats().len() as u32 <= inst.capacity());
            prop_assert!(a.seats().values().all(|c| *c == CategoryId::Open || c.is_reserve()));
        }

        #[test]
        fn identical_inputs_identical_assignments((inst, rule) in arb_setup()) {
            prop_assert_eq!(rule.apply(&inst), rule.apply(&inst));
        }

        #[test]
        fn subset_masks_agree_with_restricted_instances(
            (inst, rule) in arb_setup(),
            mask_seed in 0u64..,
        ) {
            // The fast mask path used by the substitutes check must match
            // running the rule on the restricted instance through the full
            // public path.
            let n = inst.len();
            let mask = if n == 0 { 0 } else { mask_seed & ((1u64 << n) - 1) };
            let prepared = Prepared::new(&inst, rule);
            let chosen = prepared.chosen_mask(mask);

            let ids: BTreeSet<IndividualId> = inst
                .individuals()
                .iter()
                .enumerate()
                .filter(|(ix, _)| mask & (1 << ix) != 0)
                .map(|(_, i)| i.id.clone())
                .collect();
            let restricted = inst.restrict(&ids);
            let expected: BTreeSet<IndividualId> = rule.apply(&restricted).chosen_ids();
            let got: BTreeSet<IndividualId> = inst
                .individuals()
                .iter()
                .enumerate()
                .filter(|(ix, _)| chosen & (1 << ix) != 0)
                .map(|(_, i)| i.id.clone())
                .collect();
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn open_winners_do_not_consume_reserve_quota((inst, rule) in arb_setup()) {
            // Flipping a seated OPEN winner's reserve membership to general
            // must not change who holds the reserve seats, as long as the
            // winner still takes an open seat afterwards.
            let a = rule.apply(&inst);
            for (id, &seat) in a.seats() {
                if seat != CategoryId::Open {
                    continue;
                }
                let ind = inst.individual(id).unwrap();
                if ind.is_general() || ind.memberships.len() != 1 {
                    continue;
                }
                let reserve = *ind.memberships.iter().next().unwrap();
                let flipped: Vec<Individual> = inst
                    .individuals()
                    .iter()
                    .map(|i| {
                        if &i.id == id {
                            Individual::new(i.id.clone(), [CategoryId::General], i.score)
                        } else {
                            i.clone()
                        }
                    })
                    .collect();
                let flipped_inst = Instance::new(
                    flipped,
                    inst.capacity(),
                    inst.reserved().clone(),
                    Some(inst.precedence().to_vec()),
                    false,
                )
                .unwrap();
                let b = rule.apply(&flipped_inst);
                if b.seat_of(id) == Some(CategoryId::Open) {
                    let before: Vec<_> = a.seated_in(reserve);
                    let after: Vec<_> = b.seated_in(reserve);
                    prop_assert_eq!(before, after);
                }
            }
        }
    }
}
