//! Domain types for individuals, categories, quotas, and validated instances.
//!
//! Everything here is immutable after construction. An [`Instance`] can only be
//! built through [`Instance::new`], which enforces the structural invariants
//! (quota totals, membership shape, id uniqueness, precedence well-formedness),
//! so the rest of the crate operates on known-good data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num::rational::Ratio;
use num::{One, Signed};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Exact rational backing for merit marks, boosts, and cutoff gaps.
pub type Rational = Ratio<i128>;

/// Seat and membership labels.
///
/// `Open` is seat-side only: it names the unreserved positions and never
/// appears in an individual's membership set. `General` is membership-side
/// only: an individual holding it holds no other label, and no seats are
/// labelled `General`. The variant order doubles as the canonical processing
/// order for seat categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CategoryId {
    Open,
    Sc,
    St,
    Obc,
    Ews,
    General,
}

impl CategoryId {
    /// The vertical reserve labels in canonical order.
    pub const RESERVES: [CategoryId; 4] =
        [CategoryId::Sc, CategoryId::St, CategoryId::Obc, CategoryId::Ews];

    pub fn is_reserve(self) -> bool {
        matches!(self, CategoryId::Sc | CategoryId::St | CategoryId::Obc | CategoryId::Ews)
    }

    /// Stable text token used in files and CLI flags.
    pub fn token(self) -> &'static str {
        match self {
            CategoryId::Open => "OPEN",
            CategoryId::Sc => "SC",
            CategoryId::St => "ST",
            CategoryId::Obc => "OBC",
            CategoryId::Ews => "EWS",
            CategoryId::General => "g",
        }
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for CategoryId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "open" => Ok(CategoryId::Open),
            "sc" => Ok(CategoryId::Sc),
            "st" => Ok(CategoryId::St),
            "obc" => Ok(CategoryId::Obc),
            "ews" => Ok(CategoryId::Ews),
            "g" | "gen" | "general" => Ok(CategoryId::General),
            _ => Err(ModelError::UnknownCategoryToken(s.to_string())),
        }
    }
}

impl Serialize for CategoryId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.token())
    }
}

impl<'de> Deserialize<'de> for CategoryId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Opaque unique token identifying an individual.
///
/// Ids compare bytewise; that ordering is also the deterministic tie-break
/// completing every priority order when merit scores collide.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndividualId(String);

impl IndividualId {
    pub fn new(id: impl Into<String>) -> Self {
        IndividualId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for IndividualId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for IndividualId {
    fn from(s: &str) -> Self {
        IndividualId::new(s)
    }
}

impl From<String> for IndividualId {
    fn from(s: String) -> Self {
        IndividualId(s)
    }
}

/// An exact merit score (or boost / gap amount, which share the unit).
///
/// Backed by an `i128` rational so mark comparisons such as "difference of at
/// most 10" are exact. Parsing accepts integers, plain decimals, and `p/q`
/// fractions; binary floating point is deliberately not an input format.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Score(Rational);

/// Digit budgets keep every downstream comparison comfortably inside `i128`.
const MAX_INT_DIGITS: usize = 12;
const MAX_FRAC_DIGITS: usize = 6;

impl Score {
    pub const ZERO: Score = Score(Ratio::new_raw(0, 1));

    pub fn from_int(value: i64) -> Self {
        Score(Ratio::from_integer(value as i128))
    }

    /// Builds `numer / denom`. Panics if `denom == 0`.
    pub fn new(numer: i128, denom: i128) -> Self {
        Score(Ratio::new(numer, denom))
    }

    pub fn as_ratio(&self) -> Rational {
        self.0
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn checked_add(self, other: Score) -> Score {
        Score(self.0 + other.0)
    }

    pub fn checked_sub(self, other: Score) -> Score {
        Score(self.0 - other.0)
    }

    /// True when the value has an exact decimal representation.
    fn decimal_parts(&self) -> Option<(i128, u32)> {
        let mut denom = *self.0.denom();
        let mut twos = 0u32;
        let mut fives = 0u32;
        while denom % 2 == 0 {
            denom /= 2;
            twos += 1;
        }
        while denom % 5 == 0 {
            denom /= 5;
            fives += 1;
        }
        if denom != 1 {
            return None;
        }
        let places = twos.max(fives);
        let scale = 10i128.checked_pow(places)? / self.0.denom();
        Some((self.0.numer().checked_mul(scale)?, places))
    }
}

impl std::ops::Add for Score {
    type Output = Score;
    fn add(self, rhs: Score) -> Score {
        self.checked_add(rhs)
    }
}

impl std::ops::Sub for Score {
    type Output = Score;
    fn sub(self, rhs: Score) -> Score {
        self.checked_sub(rhs)
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.decimal_parts() {
            Some((scaled, 0)) => write!(f, "{scaled}"),
            Some((scaled, places)) => {
                let sign = if scaled < 0 { "-" } else { "" };
                let abs = scaled.unsigned_abs();
                let pow = 10u128.pow(places);
                let int = abs / pow;
                let frac = format!("{:0width$}", abs % pow, width = places as usize);
                let frac = frac.trim_end_matches('0');
                if frac.is_empty() {
                    write!(f, "{sign}{int}")
                } else {
                    write!(f, "{sign}{int}.{frac}")
                }
            }
            None => write!(f, "{}/{}", self.0.numer(), self.0.denom()),
        }
    }
}

impl fmt::Debug for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Score({self})")
    }
}

fn parse_digits(s: &str, max_digits: usize, what: &str) -> Result<i128, ModelError> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ModelError::ScoreParse(format!("invalid {what} digits: {s:?}")));
    }
    if s.len() > max_digits {
        return Err(ModelError::ScoreParse(format!(
            "{what} part of {s:?} exceeds {max_digits} digits"
        )));
    }
    s.parse::<i128>()
        .map_err(|_| ModelError::ScoreParse(format!("invalid {what}: {s:?}")))
}

impl FromStr for Score {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let (negative, body) = match trimmed.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, trimmed),
        };
        if body.is_empty() {
            return Err(ModelError::ScoreParse(format!("empty score: {s:?}")));
        }
        let ratio = if let Some((num, den)) = body.split_once('/') {
            let num = parse_digits(num, MAX_INT_DIGITS + MAX_FRAC_DIGITS, "numerator")?;
            let den = parse_digits(den, MAX_INT_DIGITS + MAX_FRAC_DIGITS, "denominator")?;
            if den == 0 {
                return Err(ModelError::ScoreParse(format!("zero denominator: {s:?}")));
            }
            Ratio::new(num, den)
        } else if let Some((int, frac)) = body.split_once('.') {
            let int = if int.is_empty() { 0 } else { parse_digits(int, MAX_INT_DIGITS, "integer")? };
            let frac_digits = parse_digits(frac, MAX_FRAC_DIGITS, "fractional")?;
            let scale = 10i128.pow(frac.len() as u32);
            Ratio::new(int * scale + frac_digits, scale)
        } else {
            Ratio::from_integer(parse_digits(body, MAX_INT_DIGITS, "integer")?)
        };
        Ok(Score(if negative { -ratio } else { ratio }))
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0.denom().is_one() {
            if let Ok(n) = i64::try_from(*self.0.numer()) {
                return serializer.serialize_i64(n);
            }
        }
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ScoreVisitor;

        impl serde::de::Visitor<'_> for ScoreVisitor {
            type Value = Score;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an integer or a decimal string")
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<Score, E> {
                Ok(Score::from_int(v))
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<Score, E> {
                i64::try_from(v).map(Score::from_int).map_err(|_| E::custom("score out of range"))
            }

            fn visit_f64<E: serde::de::Error>(self, _: f64) -> Result<Score, E> {
                Err(E::custom(
                    "scores must be integers or decimal strings (e.g. \"98.5\"); \
                     floating point literals are not parsed exactly",
                ))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<Score, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(ScoreVisitor)
    }
}

/// One applicant: an opaque id, a non-empty membership set, and a merit score.
///
/// A membership set is either exactly `{g}` or a non-empty subset of the
/// reserve labels; [`Instance::new`] rejects anything else.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Individual {
    pub id: IndividualId,
    #[serde(rename = "categories")]
    pub memberships: BTreeSet<CategoryId>,
    pub score: Score,
}

impl Individual {
    pub fn new(
        id: impl Into<IndividualId>,
        memberships: impl IntoIterator<Item = CategoryId>,
        score: Score,
    ) -> Self {
        Individual { id: id.into(), memberships: memberships.into_iter().collect(), score }
    }

    /// True when the individual belongs to the general category only.
    pub fn is_general(&self) -> bool {
        self.memberships.len() == 1 && self.memberships.contains(&CategoryId::General)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("reserved quotas total {reserved_total} but capacity is only {capacity}")]
    QuotaOverflow { reserved_total: u64, capacity: u32 },
    #[error("duplicate individual id {0}")]
    DuplicateId(IndividualId),
    #[error(
        "individual {0} has a malformed membership set: it must be exactly {{g}} \
         or a non-empty set of reserve labels"
    )]
    MalformedMembership(IndividualId),
    #[error("individuals {0} and {1} share a score but distinct scores were demanded")]
    DuplicateScore(IndividualId, IndividualId),
    #[error("individual {0} has a negative score")]
    NegativeScore(IndividualId),
    #[error("{0} is not valid here: expected a reserve label or g")]
    UnknownCategory(CategoryId),
    #[error("unknown category token {0:?}")]
    UnknownCategoryToken(String),
    #[error("reserved quota given for {0}, which is not a reserve label")]
    NonReserveQuota(CategoryId),
    #[error("precedence must list OPEN")]
    PrecedenceMissingOpen,
    #[error("precedence omits {0}, which has a positive quota")]
    PrecedenceMissing(CategoryId),
    #[error("precedence lists {0} more than once")]
    PrecedenceDuplicate(CategoryId),
    #[error("precedence lists {0}, which is not a seat category")]
    PrecedenceNotSeat(CategoryId),
    #[error("invalid score: {0}")]
    ScoreParse(String),
}

/// A validated single-institution problem: roster, capacity, per-category
/// quotas, and the order in which seat categories are processed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    individuals: Vec<Individual>,
    capacity: u32,
    reserved: BTreeMap<CategoryId, u32>,
    precedence: Vec<CategoryId>,
    distinct_scores: bool,
}

impl Instance {
    /// Validates and builds an instance.
    ///
    /// `precedence` defaults to OPEN followed by the positive-quota reserve
    /// labels in canonical order. The open quota is always derived as
    /// `capacity - sum(reserved)`, never stored.
    pub fn new(
        individuals: Vec<Individual>,
        capacity: u32,
        reserved: BTreeMap<CategoryId, u32>,
        precedence: Option<Vec<CategoryId>>,
        distinct_scores: bool,
    ) -> Result<Self, ModelError> {
        let mut total: u64 = 0;
        for (&cat, &quota) in &reserved {
            if !cat.is_reserve() {
                return Err(ModelError::NonReserveQuota(cat));
            }
            total += u64::from(quota);
        }
        if total > u64::from(capacity) {
            return Err(ModelError::QuotaOverflow { reserved_total: total, capacity });
        }

        let mut seen = BTreeSet::new();
        for ind in &individuals {
            if !seen.insert(ind.id.clone()) {
                return Err(ModelError::DuplicateId(ind.id.clone()));
            }
            if ind.score.is_negative() {
                return Err(ModelError::NegativeScore(ind.id.clone()));
            }
            let has_general = ind.memberships.contains(&CategoryId::General);
            let well_formed = if has_general {
                ind.memberships.len() == 1
            } else {
                !ind.memberships.is_empty()
                    && ind.memberships.iter().all(|c| c.is_reserve())
            };
            if !well_formed {
                return Err(ModelError::MalformedMembership(ind.id.clone()));
            }
        }

        if distinct_scores {
            let mut by_score: BTreeMap<Score, &IndividualId> = BTreeMap::new();
            for ind in &individuals {
                if let Some(other) = by_score.insert(ind.score, &ind.id) {
                    return Err(ModelError::DuplicateScore(other.clone(), ind.id.clone()));
                }
            }
        }

        let precedence =
            precedence.unwrap_or_else(|| Self::default_precedence(&reserved));
        let mut listed = BTreeSet::new();
        for &cat in &precedence {
            if cat == CategoryId::General {
                return Err(ModelError::PrecedenceNotSeat(cat));
            }
            if !listed.insert(cat) {
                return Err(ModelError::PrecedenceDuplicate(cat));
            }
        }
        if !listed.contains(&CategoryId::Open) {
            return Err(ModelError::PrecedenceMissingOpen);
        }
        for (&cat, &quota) in &reserved {
            if quota > 0 && !listed.contains(&cat) {
                return Err(ModelError::PrecedenceMissing(cat));
            }
        }

        Ok(Instance { individuals, capacity, reserved, precedence, distinct_scores })
    }

    /// OPEN first, then every positive-quota reserve label in canonical order.
    pub fn default_precedence(reserved: &BTreeMap<CategoryId, u32>) -> Vec<CategoryId> {
        let mut order = vec![CategoryId::Open];
        for cat in CategoryId::RESERVES {
            if reserved.get(&cat).copied().unwrap_or(0) > 0 {
                order.push(cat);
            }
        }
        order
    }

    pub fn individuals(&self) -> &[Individual] {
        &self.individuals
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn reserved(&self) -> &BTreeMap<CategoryId, u32> {
        &self.reserved
    }

    /// Derived number of open-category positions.
    pub fn open_quota(&self) -> u32 {
        let reserved: u64 = self.reserved.values().map(|&q| u64::from(q)).sum();
        self.capacity - reserved as u32
    }

    /// Seats available in `seat` (OPEN maps to the derived open quota).
    pub fn quota(&self, seat: CategoryId) -> u32 {
        match seat {
            CategoryId::Open => self.open_quota(),
            c => self.reserved.get(&c).copied().unwrap_or(0),
        }
    }

    pub fn precedence(&self) -> &[CategoryId] {
        &self.precedence
    }

    pub fn distinct_scores(&self) -> bool {
        self.distinct_scores
    }

    pub fn individual(&self, id: &IndividualId) -> Option<&Individual> {
        self.individuals.iter().find(|i| &i.id == id)
    }

    pub fn index_of(&self, id: &IndividualId) -> Option<usize> {
        self.individuals.iter().position(|i| &i.id == id)
    }

    /// Members of `category`: for a reserve label, everyone carrying it; for
    /// `g`, the individuals belonging to no reserve. Errors on `OPEN`, which
    /// has no membership side.
    pub fn members_of(&self, category: CategoryId) -> Result<Vec<&Individual>, ModelError> {
        match category {
            CategoryId::Open => Err(ModelError::UnknownCategory(category)),
            CategoryId::General => Ok(self.individuals.iter().filter(|i| i.is_general()).collect()),
            reserve => {
                Ok(self.individuals.iter().filter(|i| i.memberships.contains(&reserve)).collect())
            }
        }
    }

    /// A new instance with `individual` appended; the original is untouched.
    pub fn with_individual(&self, individual: Individual) -> Result<Instance, ModelError> {
        let mut individuals = self.individuals.clone();
        individuals.push(individual);
        Instance::new(
            individuals,
            self.capacity,
            self.reserved.clone(),
            Some(self.precedence.clone()),
            self.distinct_scores,
        )
    }

    /// The sub-instance containing only `ids`; quotas and precedence carry over.
    pub fn restrict(&self, ids: &BTreeSet<IndividualId>) -> Instance {
        Instance {
            individuals: self.individuals.iter().filter(|i| ids.contains(&i.id)).cloned().collect(),
            capacity: self.capacity,
            reserved: self.reserved.clone(),
            precedence: self.precedence.clone(),
            distinct_scores: self.distinct_scores,
        }
    }

    /// The sub-instance with `id` removed.
    pub fn without(&self, id: &IndividualId) -> Instance {
        Instance {
            individuals: self.individuals.iter().filter(|i| &i.id != id).cloned().collect(),
            capacity: self.capacity,
            reserved: self.reserved.clone(),
            precedence: self.precedence.clone(),
            distinct_scores: self.distinct_scores,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceRepr {
    capacity: u32,
    #[serde(default)]
    reserved: BTreeMap<CategoryId, u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    precedence: Option<Vec<CategoryId>>,
    individuals: Vec<Individual>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    distinct_scores: bool,
}

impl Serialize for Instance {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        InstanceRepr {
            capacity: self.capacity,
            reserved: self.reserved.clone(),
            precedence: Some(self.precedence.clone()),
            individuals: self.individuals.clone(),
            distinct_scores: self.distinct_scores,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Instance {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = InstanceRepr::deserialize(deserializer)?;
        Instance::new(
            repr.individuals,
            repr.capacity,
            repr.reserved,
            repr.precedence,
            repr.distinct_scores,
        )
        .map_err(D::Error::custom)
    }
}
