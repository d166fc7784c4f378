//! Domain vocabulary: items, filters, votes, classifier profiles, loss and price.
//!
//! An item is *in scope* when no filter applies to it. A filter that applies
//! screens the item out.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bayes::BetaAccuracy;
use crate::error::{Result, ScreenError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FilterId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassifierId(pub String);

impl ClassifierId {
    pub fn new(id: impl Into<String>) -> Self {
        ClassifierId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for FilterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ClassifierId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Outcome of one filter on one item. `Applies` screens the item out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FilterLabel {
    Applies,
    NotApplies,
}

impl FilterLabel {
    pub fn flipped(self) -> Self {
        match self {
            FilterLabel::Applies => FilterLabel::NotApplies,
            FilterLabel::NotApplies => FilterLabel::Applies,
        }
    }

    pub fn from_applies(applies: bool) -> Self {
        if applies {
            FilterLabel::Applies
        } else {
            FilterLabel::NotApplies
        }
    }

    pub fn applies(self) -> bool {
        self == FilterLabel::Applies
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FilterLabel::Applies => "applies",
            FilterLabel::NotApplies => "not_applies",
        }
    }
}

impl fmt::Display for FilterLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "applies" | "1" | "true" => Ok(FilterLabel::Applies),
            "not_applies" | "notapplies" | "0" | "false" => Ok(FilterLabel::NotApplies),
            other => Err(format!("unrecognised label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Machine,
    Crowd,
    Expert,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Machine => "machine",
            SourceKind::Crowd => "crowd",
            SourceKind::Expert => "expert",
        }
    }
}

impl FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "machine" => Ok(SourceKind::Machine),
            "crowd" => Ok(SourceKind::Crowd),
            "expert" => Ok(SourceKind::Expert),
            other => Err(format!("unrecognised source kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldRecord {
    pub item_id: ItemId,
    pub labels: BTreeMap<FilterId, FilterLabel>,
}

impl GoldRecord {
    pub fn new(item_id: ItemId, labels: impl IntoIterator<Item = (FilterId, FilterLabel)>) -> Self {
        GoldRecord {
            item_id,
            labels: labels.into_iter().collect(),
        }
    }

    pub fn label(&self, filter: FilterId) -> Result<FilterLabel> {
        self.labels
            .get(&filter)
            .copied()
            .ok_or(ScreenError::MissingGoldLabel {
                item: self.item_id,
                filter,
            })
    }
}

/// True iff every declared filter is `NotApplies` for the item.
pub fn ground_truth_in_scope(gold: &GoldRecord, filters: &[FilterId]) -> Result<bool> {
    let mut in_scope = true;
    for &filter in filters {
        in_scope &= gold.label(filter)? == FilterLabel::NotApplies;
    }
    Ok(in_scope)
}

/// Gold labels over a declared, sorted filter set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldSet {
    filters: Vec<FilterId>,
    records: BTreeMap<ItemId, GoldRecord>,
}

impl GoldSet {
    pub fn new(filters: impl IntoIterator<Item = FilterId>) -> Self {
        let mut filters: Vec<_> = filters.into_iter().collect();
        filters.sort();
        filters.dedup();
        GoldSet {
            filters,
            records: BTreeMap::new(),
        }
    }

    /// Inserts a record, rejecting duplicates and incomplete or over-complete label maps.
    pub fn insert(&mut self, record: GoldRecord) -> Result<()> {
        for &filter in record.labels.keys() {
            if self.filters.binary_search(&filter).is_err() {
                return Err(ScreenError::UndeclaredFilter {
                    item: record.item_id,
                    filter,
                });
            }
        }
        for &filter in &self.filters {
            record.label(filter)?;
        }
        if self.records.contains_key(&record.item_id) {
            return Err(ScreenError::DuplicateGold {
                item: record.item_id,
                filter: self.filters.first().copied().unwrap_or(FilterId(0)),
            });
        }
        self.records.insert(record.item_id, record);
        Ok(())
    }

    pub fn filters(&self) -> &[FilterId] {
        &self.filters
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, item: ItemId) -> Option<&GoldRecord> {
        self.records.get(&item)
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.records.contains_key(&item)
    }

    pub fn label(&self, item: ItemId, filter: FilterId) -> Result<FilterLabel> {
        self.records
            .get(&item)
            .ok_or(ScreenError::UnknownItem(item))?
            .label(filter)
    }

    pub fn in_scope(&self, item: ItemId) -> Result<bool> {
        let record = self
            .records
            .get(&item)
            .ok_or(ScreenError::UnknownItem(item))?;
        ground_truth_in_scope(record, &self.filters)
    }

    /// Item ids in ascending order.
    pub fn item_ids(&self) -> Vec<ItemId> {
        self.records.keys().copied().collect()
    }

    pub fn records(&self) -> impl Iterator<Item = &GoldRecord> {
        self.records.values()
    }

    /// Union of two gold sets over the same filters; overlapping items are rejected.
    pub fn merged(&self, other: &GoldSet) -> Result<GoldSet> {
        if self.filters != other.filters {
            return Err(ScreenError::invalid("gold sets declare different filters"));
        }
        let mut out = self.clone();
        for r in other.records() {
            out.insert(r.clone())?;
        }
        Ok(out)
    }

    pub fn count_applies(&self, filter: FilterId) -> usize {
        self.records
            .values()
            .filter(|r| r.labels.get(&filter) == Some(&FilterLabel::Applies))
            .count()
    }
}

/// One classifier's opinion on one (item, filter) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vote {
    pub classifier_id: ClassifierId,
    pub item_id: ItemId,
    pub filter_id: FilterId,
    pub value: FilterLabel,
    pub source_kind: SourceKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierProfile {
    pub id: ClassifierId,
    pub kind: SourceKind,
    pub cost_per_vote: f64,
    pub accuracy: BTreeMap<FilterId, BetaAccuracy>,
}

impl ClassifierProfile {
    pub fn machine(id: ClassifierId, filters: &[FilterId]) -> Self {
        Self::with_cost(id, SourceKind::Machine, 0.0, filters)
    }

    pub fn crowd(id: ClassifierId, filters: &[FilterId]) -> Self {
        Self::with_cost(id, SourceKind::Crowd, 1.0, filters)
    }

    /// Experts are perfectly accurate; their accuracy map stays empty.
    pub fn expert(id: ClassifierId, ec: f64) -> Self {
        ClassifierProfile {
            id,
            kind: SourceKind::Expert,
            cost_per_vote: ec,
            accuracy: BTreeMap::new(),
        }
    }

    fn with_cost(id: ClassifierId, kind: SourceKind, cost: f64, filters: &[FilterId]) -> Self {
        ClassifierProfile {
            id,
            kind,
            cost_per_vote: cost,
            accuracy: filters
                .iter()
                .map(|&f| (f, BetaAccuracy::uniform()))
                .collect(),
        }
    }

    pub fn accuracy_on(&self, filter: FilterId) -> BetaAccuracy {
        self.accuracy
            .get(&filter)
            .copied()
            .unwrap_or_else(BetaAccuracy::uniform)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    /// Weight of a false exclusion relative to a false inclusion.
    pub k: f64,
    /// Exclude once the probability of being in scope is at most this.
    pub fe_threshold: f64,
    /// Include once the probability of being out of scope is at most this.
    pub include_threshold: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams {
            k: 5.0,
            fe_threshold: 0.01,
            include_threshold: 0.05,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 1.0 && self.k.is_finite()) {
            return Err(ScreenError::invalid(format!(
                "k must be >= 1, got {}",
                self.k
            )));
        }
        let (fe, inc) = (self.fe_threshold, self.include_threshold);
        if !(0.0 < fe && fe < inc && inc < 0.5) {
            return Err(ScreenError::invalid(format!(
                "thresholds must satisfy 0 < fe_threshold < include_threshold < 0.5, got {fe} and {inc}"
            )));
        }
        Ok(())
    }
}

/// Final per-item screening verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Include,
    Exclude,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub fe_count: usize,
    pub fi_count: usize,
    pub loss: f64,
}

impl LossBreakdown {
    pub fn from_counts(fe_count: usize, fi_count: usize, k: f64) -> Self {
        LossBreakdown {
            fe_count,
            fi_count,
            loss: k * fe_count as f64 + fi_count as f64,
        }
    }
}

/// Counts false exclusions and false inclusions per item, weighting FE by `k`.
pub fn compute_loss(
    decisions: &BTreeMap<ItemId, Verdict>,
    gold: &GoldSet,
    params: &LossParams,
) -> Result<LossBreakdown> {
    let mut fe = 0;
    let mut fi = 0;
    for (&item, &verdict) in decisions {
        let in_scope = gold.in_scope(item)?;
        match (verdict, in_scope) {
            (Verdict::Exclude, true) => fe += 1,
            (Verdict::Include, false) => fi += 1,
            _ => {}
        }
    }
    Ok(LossBreakdown::from_counts(fe, fi, params.k))
}

/// Money spent on a run: per-vote costs plus `ec` for each item handed to an expert.
///
/// Expert work is charged per item, so votes tagged as expert are not summed again.
pub fn price_of_run(
    votes: &[Vote],
    profiles: &HashMap<ClassifierId, ClassifierProfile>,
    expert_items: usize,
    ec: f64,
) -> Result<f64> {
    let mut price = 0.0;
    for vote in votes {
        let profile = profiles
            .get(&vote.classifier_id)
            .ok_or_else(|| ScreenError::UnknownClassifier(vote.classifier_id.clone()))?;
        if vote.source_kind != SourceKind::Expert {
            price += profile.cost_per_vote;
        }
    }
    Ok(price + expert_items as f64 * ec)
}
