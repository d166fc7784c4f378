//! Machine classifiers: gold-test screening, output correlation, greedy
//! correlation pruning, and folding pooled machine votes into priors.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::bayes::{
    clamp_rate, posterior_update, prob_accuracy_above, update_accuracy, FilterPosterior,
};
use crate::error::{Result, ScreenError};
use crate::model::{
    ClassifierId, ClassifierProfile, FilterId, FilterLabel, GoldSet, ItemId, SourceKind, Vote,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningRule {
    pub accuracy_floor: f64,
    pub confidence: f64,
    pub test_size: usize,
}

impl Default for ScreeningRule {
    fn default() -> Self {
        ScreeningRule {
            accuracy_floor: 0.5,
            confidence: 0.95,
            test_size: 20,
        }
    }
}

impl ScreeningRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence > 0.5 && self.confidence < 1.0) {
            return Err(ScreenError::invalid(format!(
                "screening confidence must lie in (0.5, 1), got {}",
                self.confidence
            )));
        }
        if !(self.accuracy_floor > 0.0 && self.accuracy_floor < 1.0) {
            return Err(ScreenError::invalid("accuracy floor must lie in (0, 1)"));
        }
        if self.test_size == 0 {
            return Err(ScreenError::invalid("test size must be at least 1"));
        }
        Ok(())
    }
}

/// Labels output by a fixed set of classifiers, indexed by (filter, classifier, item).
#[derive(Debug, Clone, PartialEq)]
pub struct VoteMatrix {
    filters: Vec<FilterId>,
    classifiers: Vec<ClassifierId>,
    items: Vec<ItemId>,
    item_index: HashMap<ItemId, usize>,
    labels: Vec<Option<FilterLabel>>,
}

impl VoteMatrix {
    pub fn new(
        filters: Vec<FilterId>,
        classifiers: Vec<ClassifierId>,
        mut items: Vec<ItemId>,
    ) -> Self {
        items.sort();
        items.dedup();
        let item_index = items.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let len = filters.len() * classifiers.len() * items.len();
        VoteMatrix {
            filters,
            classifiers,
            items,
            item_index,
            labels: vec![None; len],
        }
    }

    /// Builds a matrix from machine votes; ids are collected from the votes themselves.
    pub fn from_votes(votes: &[Vote]) -> Self {
        let mut filters: Vec<_> = votes.iter().map(|v| v.filter_id).collect();
        filters.sort();
        filters.dedup();
        let mut classifiers: Vec<_> = votes.iter().map(|v| v.classifier_id.clone()).collect();
        classifiers.sort();
        classifiers.dedup();
        let items = votes.iter().map(|v| v.item_id).collect();
        let mut m = VoteMatrix::new(filters, classifiers, items);
        for v in votes {
            let fi = m.filter_index(v.filter_id).unwrap();
            let ci = m.classifier_index(&v.classifier_id).unwrap();
            let ii = m.item_index[&v.item_id];
            m.set(fi, ci, ii, v.value);
        }
        m
    }

    pub fn filters(&self) -> &[FilterId] {
        &self.filters
    }

    pub fn classifiers(&self) -> &[ClassifierId] {
        &self.classifiers
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn filter_index(&self, f: FilterId) -> Option<usize> {
        self.filters.iter().position(|&x| x == f)
    }

    pub fn classifier_index(&self, c: &ClassifierId) -> Option<usize> {
        self.classifiers.iter().position(|x| x == c)
    }

    pub fn item_position(&self, item: ItemId) -> Option<usize> {
        self.item_index.get(&item).copied()
    }

    fn offset(&self, fi: usize, ci: usize, ii: usize) -> usize {
        (fi * self.classifiers.len() + ci) * self.items.len() + ii
    }

    pub fn set(&mut self, fi: usize, ci: usize, ii: usize, label: FilterLabel) {
        let o = self.offset(fi, ci, ii);
        self.labels[o] = Some(label);
    }

    pub fn get(&self, fi: usize, ci: usize, item: ItemId) -> Option<FilterLabel> {
        let ii = self.item_position(item)?;
        self.labels[self.offset(fi, ci, ii)]
    }

    /// Binary outputs (Applies = true) of one classifier over the given items.
    pub fn outputs(&self, fi: usize, ci: usize, items: &[ItemId]) -> Result<Vec<bool>> {
        items
            .iter()
            .map(|&item| {
                self.get(fi, ci, item)
                    .map(FilterLabel::applies)
                    .ok_or_else(|| {
                        ScreenError::invalid(format!(
                            "classifier {} has no output for item {item}, filter {}",
                            self.classifiers[ci], self.filters[fi]
                        ))
                    })
            })
            .collect()
    }

    /// All present entries as votes, ordered by (classifier, item, filter).
    pub fn to_votes(&self) -> Vec<Vote> {
        let mut out = Vec::with_capacity(self.labels.len());
        for (ci, c) in self.classifiers.iter().enumerate() {
            for (ii, &item) in self.items.iter().enumerate() {
                for (fi, &filter) in self.filters.iter().enumerate() {
                    if let Some(value) = self.labels[self.offset(fi, ci, ii)] {
                        out.push(Vote {
                            classifier_id: c.clone(),
                            item_id: item,
                            filter_id: filter,
                            value,
                            source_kind: SourceKind::Machine,
                        });
                    }
                }
            }
        }
        out
    }

    /// Restriction to the given items (missing items are skipped).
    pub fn votes_on(&self, items: &[ItemId]) -> Vec<Vote> {
        let wanted: HashSet<_> = items.iter().copied().collect();
        self.to_votes()
            .into_iter()
            .filter(|v| wanted.contains(&v.item_id))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Screening {
    pub profiles: Vec<ClassifierProfile>,
    /// Classifiers that passed, per filter, in profile order.
    pub kept: BTreeMap<FilterId, Vec<ClassifierId>>,
}

/// Updates each machine's per-filter accuracy on the gold test votes and keeps a
/// classifier for a filter when its pooled accuracy clears the rule.
pub fn screen_classifiers(
    profiles: &[ClassifierProfile],
    test_votes: &[Vote],
    test_gold: &GoldSet,
    rule: &ScreeningRule,
) -> Result<Screening> {
    rule.validate()?;
    let mut by_classifier: HashMap<&ClassifierId, Vec<&Vote>> = HashMap::new();
    for v in test_votes {
        by_classifier.entry(&v.classifier_id).or_default().push(v);
    }

    let mut updated = Vec::with_capacity(profiles.len());
    let mut kept: BTreeMap<FilterId, Vec<ClassifierId>> = test_gold
        .filters()
        .iter()
        .map(|&f| (f, Vec::new()))
        .collect();

    for profile in profiles {
        let votes = by_classifier
            .get(&profile.id)
            .ok_or_else(|| ScreenError::NoTestVotes(profile.id.clone()))?;
        let mut profile = profile.clone();
        for v in votes {
            let truth = test_gold.label(v.item_id, v.filter_id)?;
            let acc = profile.accuracy_on(v.filter_id);
            profile
                .accuracy
                .insert(v.filter_id, update_accuracy(acc, truth, v.value == truth));
        }
        for &filter in test_gold.filters() {
            let pooled = profile.accuracy_on(filter).pooled();
            if prob_accuracy_above(pooled, rule.accuracy_floor)? >= rule.confidence {
                kept.entry(filter).or_default().push(profile.id.clone());
            }
        }
        updated.push(profile);
    }
    Ok(Screening {
        profiles: updated,
        kept,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    ids: Vec<ClassifierId>,
    rho: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn ids(&self) -> &[ClassifierId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.rho[i * self.ids.len() + j]
    }

    pub fn get(&self, a: &ClassifierId, b: &ClassifierId) -> Option<f64> {
        let i = self.ids.iter().position(|x| x == a)?;
        let j = self.ids.iter().position(|x| x == b)?;
        Some(self.at(i, j))
    }

    /// Mean of the strictly upper triangle; 0 for fewer than two classifiers.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.ids.len();
        if n < 2 {
            return 0.0;
        }
        let mut sum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                sum += self.at(i, j);
            }
        }
        sum / (n * (n - 1) / 2) as f64
    }

    /// Element-wise mean of matrices over the same ids.
    pub fn average(matrices: &[CorrelationMatrix]) -> Result<CorrelationMatrix> {
        let first = matrices
            .first()
            .ok_or_else(|| ScreenError::invalid("cannot average zero correlation matrices"))?;
        let mut rho = vec![0.0; first.rho.len()];
        for m in matrices {
            if m.ids != first.ids {
                return Err(ScreenError::invalid(
                    "correlation matrices cover different classifiers",
                ));
            }
            rho.iter_mut().zip(&m.rho).for_each(|(acc, r)| *acc += r);
        }
        let n = matrices.len() as f64;
        rho.iter_mut().for_each(|r| *r /= n);
        Ok(CorrelationMatrix {
            ids: first.ids.clone(),
            rho,
        })
    }
}

/// Pearson correlation of two binary vectors. Constant vectors correlate 0 by convention.
pub fn pearson(x: &[bool], y: &[bool]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(ScreenError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len() as f64;
    let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (a, b) = (a as u8 as f64, b as u8 as f64);
        sx += a;
        sy += b;
        sxy += a * b;
    }
    let cov = sxy / n - (sx / n) * (sy / n);
    let vx = sx / n * (1.0 - sx / n);
    let vy = sy / n * (1.0 - sy / n);
    if vx <= 0.0 || vy <= 0.0 {
        return Ok(0.0);
    }
    Ok((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// Pairwise output correlation for one filter. `outputs[i]` belongs to `ids[i]`.
pub fn correlation_matrix(
    ids: &[ClassifierId],
    outputs: &[Vec<bool>],
) -> Result<CorrelationMatrix> {
    if ids.len() != outputs.len() {
        return Err(ScreenError::LengthMismatch(ids.len(), outputs.len()));
    }
    if let Some(first) = outputs.first() {
        if first.len() < 2 {
            return Err(ScreenError::TooFewBaselineItems(first.len()));
        }
    }
    let n = ids.len();
    let mut rho = vec![0.0; n * n];
    for i in 0..n {
        rho[i * n + i] = 1.0;
        for j in i + 1..n {
            let r = pearson(&outputs[i], &outputs[j])?;
            rho[i * n + j] = r;
            rho[j * n + i] = r;
        }
    }
    Ok(CorrelationMatrix {
        ids: ids.to_vec(),
        rho,
    })
}

#[derive(Debug, Clone)]
pub struct FilterCorrelations {
    pub per_filter: BTreeMap<FilterId, CorrelationMatrix>,
    pub mean: CorrelationMatrix,
}

/// Correlation matrices over every classifier in `matrix`, on the given items.
pub fn correlations_by_filter(matrix: &VoteMatrix, items: &[ItemId]) -> Result<FilterCorrelations> {
    if items.len() < 2 {
        return Err(ScreenError::TooFewBaselineItems(items.len()));
    }
    let mut per_filter = BTreeMap::new();
    for (fi, &filter) in matrix.filters().iter().enumerate() {
        let outputs = (0..matrix.classifiers().len())
            .map(|ci| matrix.outputs(fi, ci, items))
            .collect::<Result<Vec<_>>>()?;
        per_filter.insert(filter, correlation_matrix(matrix.classifiers(), &outputs)?);
    }
    let all: Vec<_> = per_filter.values().cloned().collect();
    let mean = if all.is_empty() {
        correlation_matrix(
            matrix.classifiers(),
            &vec![vec![false; items.len()]; matrix.classifiers().len()],
        )?
    } else {
        CorrelationMatrix::average(&all)?
    };
    Ok(FilterCorrelations { per_filter, mean })
}

/// Greedy accuracy-first pruning: walk classifiers from most to least accurate and
/// keep one only if its correlation with everything already kept is at most `c_max`.
pub fn prune_correlated(
    candidates: &[(ClassifierId, f64)],
    matrix: &CorrelationMatrix,
    c_max: f64,
) -> Result<Vec<ClassifierId>> {
    let mut order: Vec<(usize, &ClassifierId, f64)> = Vec::with_capacity(candidates.len());
    for (id, acc) in candidates {
        let idx = matrix
            .ids
            .iter()
            .position(|x| x == id)
            .ok_or_else(|| ScreenError::UnknownClassifier(id.clone()))?;
        order.push((idx, id, *acc));
    }
    order.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.1.cmp(b.1)));

    let mut kept: Vec<(usize, &ClassifierId)> = Vec::new();
    for (idx, id, _) in order {
        let max_rho = kept
            .iter()
            .map(|&(k, _)| matrix.at(idx, k))
            .fold(f64::NEG_INFINITY, f64::max);
        if kept.is_empty() || max_rho <= c_max {
            kept.push((idx, id));
        }
    }
    Ok(kept.into_iter().map(|(_, id)| id.clone()).collect())
}

/// Folds machine votes into a prior, one Bayes step per vote.
pub fn fold_votes(
    prior: FilterPosterior,
    votes: impl IntoIterator<Item = (FilterLabel, f64, f64)>,
) -> FilterPosterior {
    votes
        .into_iter()
        .fold(prior, |p, (label, s, sp)| posterior_update(p, label, s, sp))
}

/// Prior for one (item, filter) pair from the votes of kept machine classifiers.
pub fn ensemble_prior(
    filter: FilterId,
    votes: &[Vote],
    profiles: &HashMap<ClassifierId, ClassifierProfile>,
    kept: &[ClassifierId],
    selectivity_prior: f64,
) -> Result<FilterPosterior> {
    let prior = FilterPosterior::new(selectivity_prior)?;
    let mut steps = Vec::with_capacity(votes.len());
    for v in votes {
        if !kept.contains(&v.classifier_id) {
            return Err(ScreenError::PrunedClassifier(v.classifier_id.clone()));
        }
        let profile = profiles
            .get(&v.classifier_id)
            .ok_or_else(|| ScreenError::UnknownClassifier(v.classifier_id.clone()))?;
        let acc = profile.accuracy_on(filter);
        steps.push((v.value, acc.sensitivity(), acc.specificity()));
    }
    Ok(fold_votes(prior, steps))
}

/// ln(a / (1 - a)) on the clamped accuracy.
pub fn log_odds_weight(accuracy: f64) -> f64 {
    let a = clamp_rate(accuracy);
    (a / (1.0 - a)).ln()
}

/// Label with the larger total weight; ties and empty input go to `NotApplies`.
pub fn weighted_majority(votes: &[(FilterLabel, f64)]) -> FilterLabel {
    let (mut applies, mut not) = (0.0, 0.0);
    for &(label, w) in votes {
        match label {
            FilterLabel::Applies => applies += w,
            FilterLabel::NotApplies => not += w,
        }
    }
    FilterLabel::from_applies(applies > not)
}

/// One surviving classifier on one filter with its point estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub id: ClassifierId,
    pub column: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    pub weight: f64,
}

/// Outcome of screening and pruning: which machines speak for which filter.
#[derive(Debug, Clone)]
pub struct MachineEnsemble {
    pub profiles: Vec<ClassifierProfile>,
    pub screened: BTreeMap<FilterId, Vec<ClassifierId>>,
    pub members: BTreeMap<FilterId, Vec<Member>>,
    pub correlations: FilterCorrelations,
}

#[derive(Debug, Clone, Copy)]
pub struct EnsembleSettings {
    pub rule: ScreeningRule,
    pub c_max: f64,
    /// Keep the single most accurate classifier for a filter where none passes screening.
    pub fallback_to_best: bool,
}

impl MachineEnsemble {
    /// Screens on the test items, measures correlation on the baseline items and prunes.
    pub fn build(
        matrix: &VoteMatrix,
        test_gold: &GoldSet,
        baseline_items: &[ItemId],
        settings: &EnsembleSettings,
    ) -> Result<MachineEnsemble> {
        let filters = test_gold.filters().to_vec();
        let profiles: Vec<_> = matrix
            .classifiers()
            .iter()
            .map(|id| ClassifierProfile::machine(id.clone(), &filters))
            .collect();
        let test_votes = matrix.votes_on(&test_gold.item_ids());
        let screening = screen_classifiers(&profiles, &test_votes, test_gold, &settings.rule)?;
        let correlations = correlations_by_filter(matrix, baseline_items)?;

        let mut members = BTreeMap::new();
        for &filter in &filters {
            let pooled_mean = |id: &ClassifierId| {
                let p = screening.profiles.iter().find(|p| &p.id == id).unwrap();
                p.accuracy_on(filter).pooled().mean()
            };
            let mut candidates: Vec<(ClassifierId, f64)> = screening.kept[&filter]
                .iter()
                .map(|id| (id.clone(), pooled_mean(id)))
                .collect();
            if candidates.is_empty() && settings.fallback_to_best {
                candidates = screening
                    .profiles
                    .iter()
                    .map(|p| (p.id.clone(), pooled_mean(&p.id)))
                    .collect();
                candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                candidates.truncate(1);
            }
            let chosen = match correlations.per_filter.get(&filter) {
                Some(m) if !candidates.is_empty() => {
                    prune_correlated(&candidates, m, settings.c_max)?
                }
                _ => Vec::new(),
            };
            let list = chosen
                .into_iter()
                .map(|id| {
                    let p = screening.profiles.iter().find(|p| p.id == id).unwrap();
                    let acc = p.accuracy_on(filter);
                    Member {
                        column: matrix.classifier_index(&id).unwrap(),
                        sensitivity: acc.sensitivity(),
                        specificity: acc.specificity(),
                        weight: log_odds_weight(acc.pooled().mean()),
                        id,
                    }
                })
                .collect();
            members.insert(filter, list);
        }
        Ok(MachineEnsemble {
            profiles: screening.profiles,
            screened: screening.kept,
            members,
            correlations,
        })
    }

    pub fn members(&self, filter: FilterId) -> &[Member] {
        self.members.get(&filter).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn kept_count(&self) -> usize {
        self.members.values().map(Vec::len).sum()
    }

    /// Naive-Bayes fold of member votes starting from `selectivity_prior`.
    pub fn prior(
        &self,
        matrix: &VoteMatrix,
        item: ItemId,
        filter: FilterId,
        selectivity_prior: f64,
    ) -> Result<FilterPosterior> {
        let fi = matrix.filter_index(filter).ok_or_else(|| {
            ScreenError::invalid(format!("no machine outputs for filter {filter}"))
        })?;
        let prior = FilterPosterior::new(selectivity_prior)?;
        let steps = self.members(filter).iter().filter_map(|m| {
            matrix
                .get(fi, m.column, item)
                .map(|l| (l, m.sensitivity, m.specificity))
        });
        Ok(fold_votes(prior, steps))
    }

    pub fn majority(&self, matrix: &VoteMatrix, item: ItemId, filter: FilterId) -> FilterLabel {
        let Some(fi) = matrix.filter_index(filter) else {
            return FilterLabel::NotApplies;
        };
        let votes: Vec<_> = self
            .members(filter)
            .iter()
            .filter_map(|m| matrix.get(fi, m.column, item).map(|l| (l, m.weight)))
            .collect();
        weighted_majority(&votes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::BetaParams;
    use crate::model::GoldRecord;
    use proptest::prelude::*;

    fn id(s: &str) -> ClassifierId {
        ClassifierId::new(s)
    }

    fn bits(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&b| b == 1).collect()
    }

    /// Gold set with one filter where items 0..n_applies apply.
    fn gold(n: u32, n_applies: u32) -> GoldSet {
        let mut g = GoldSet::new([FilterId(0)]);
        for i in 0..n {
            g.insert(GoldRecord::new(
                ItemId(i),
                [(FilterId(0), FilterLabel::from_applies(i < n_applies))],
            ))
            .unwrap();
        }
        g
    }

    fn test_votes(c: &str, gold: &GoldSet, correct: usize) -> Vec<Vote> {
        gold.item_ids()
            .into_iter()
            .enumerate()
            .map(|(k, item)| {
                let truth = gold.label(item, FilterId(0)).unwrap();
                Vote {
                    classifier_id: id(c),
                    item_id: item,
                    filter_id: FilterId(0),
                    value: if k < correct { truth } else { truth.flipped() },
                    source_kind: SourceKind::Machine,
                }
            })
            .collect()
    }

    fn screen_score(correct: usize) -> (bool, BetaParams) {
        let g = gold(20, 6);
        let profiles = [ClassifierProfile::machine(id("m"), g.filters())];
        let s = screen_classifiers(
            &profiles,
            &test_votes("m", &g, correct),
            &g,
            &ScreeningRule::default(),
        )
        .unwrap();
        let kept = s.kept[&FilterId(0)].contains(&id("m"));
        (kept, s.profiles[0].accuracy_on(FilterId(0)).pooled())
    }

    #[test]
    fn screening_examples() {
        let (kept, pooled) = screen_score(16);
        assert!(kept);
        assert_eq!(pooled, BetaParams::from_counts(16, 4));
        assert!(!screen_score(11).0);
        let (kept, pooled) = screen_score(20);
        assert!(kept);
        assert_eq!(pooled, BetaParams::from_counts(20, 0));
        let p = prob_accuracy_above(pooled, 0.5).unwrap();
        assert!((p - (1.0 - 0.5f64.powi(21))).abs() < 1e-15);
    }

    #[test]
    fn screening_splits_sides() {
        let g = gold(20, 6);
        let profiles = [ClassifierProfile::machine(id("m"), g.filters())];
        // all correct: 6 positives, 14 negatives
        let s = screen_classifiers(
            &profiles,
            &test_votes("m", &g, 20),
            &g,
            &ScreeningRule::default(),
        )
        .unwrap();
        let acc = s.profiles[0].accuracy_on(FilterId(0));
        assert_eq!(acc.pos, BetaParams::from_counts(6, 0));
        assert_eq!(acc.neg, BetaParams::from_counts(14, 0));
    }

    #[test]
    fn screening_without_votes_errors() {
        let g = gold(20, 6);
        let profiles = [ClassifierProfile::machine(id("silent"), g.filters())];
        assert!(matches!(
            screen_classifiers(&profiles, &[], &g, &ScreeningRule::default()),
            Err(ScreenError::NoTestVotes(_))
        ));
    }

    #[test]
    fn pearson_examples() {
        let x = bits(&[1, 1, 0, 0]);
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!(pearson(&x, &bits(&[1, 0, 1, 0])).unwrap().abs() < 1e-15);
        let r = pearson(&x, &bits(&[1, 1, 1, 0])).unwrap();
        assert!((r - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(pearson(&x, &bits(&[1, 1, 1, 1])).unwrap(), 0.0);
    }

    #[test]
    fn correlation_matrix_shape_and_errors() {
        let ids = [id("a"), id("b"), id("c")];
        let outs = vec![
            bits(&[1, 1, 0, 0]),
            bits(&[1, 0, 1, 0]),
            bits(&[1, 1, 1, 0]),
        ];
        let m = correlation_matrix(&ids, &outs).unwrap();
        for i in 0..3 {
            assert_eq!(m.at(i, i), 1.0);
            for j in 0..3 {
                assert_eq!(m.at(i, j), m.at(j, i));
                assert!((-1.0..=1.0).contains(&m.at(i, j)));
            }
        }
        assert!(matches!(
            correlation_matrix(&ids[..1], &[bits(&[1])]),
            Err(ScreenError::TooFewBaselineItems(1))
        ));
    }

    fn matrix_from(ids: &[&str], rho: &[(usize, usize, f64)]) -> CorrelationMatrix {
        let n = ids.len();
        let mut r = vec![0.0; n * n];
        for i in 0..n {
            r[i * n + i] = 1.0;
        }
        for &(i, j, v) in rho {
            r[i * n + j] = v;
            r[j * n + i] = v;
        }
        CorrelationMatrix {
            ids: ids.iter().map(|s| id(s)).collect(),
            rho: r,
        }
    }

    #[test]
    fn prune_clones() {
        let m = matrix_from(&["a", "b"], &[(0, 1, 1.0)]);
        let kept = prune_correlated(&[(id("a"), 0.9), (id("b"), 0.8)], &m, 0.5).unwrap();
        assert_eq!(kept, vec![id("a")]);
    }

    #[test]
    fn prune_keeps_independent() {
        let m = matrix_from(&["a", "b", "c"], &[]);
        let kept =
            prune_correlated(&[(id("a"), 0.7), (id("b"), 0.9), (id("c"), 0.8)], &m, 0.5).unwrap();
        assert_eq!(kept, vec![id("b"), id("c"), id("a")]);
    }

    #[test]
    fn prune_greedy_trace() {
        let m = matrix_from(&["x", "y", "z"], &[(0, 1, 0.6), (0, 2, 0.2), (1, 2, 0.2)]);
        let kept =
            prune_correlated(&[(id("x"), 0.9), (id("y"), 0.8), (id("z"), 0.7)], &m, 0.5).unwrap();
        assert_eq!(kept, vec![id("x"), id("z")]);
    }

    #[test]
    fn prune_always_keeps_best() {
        let m = matrix_from(&["a", "b"], &[(0, 1, 0.99)]);
        let kept = prune_correlated(&[(id("a"), 0.6), (id("b"), 0.7)], &m, -1.0).unwrap();
        assert_eq!(kept, vec![id("b")]);
    }

    fn profiles_with(acc: &[(&str, f64, f64)]) -> HashMap<ClassifierId, ClassifierProfile> {
        acc.iter()
            .map(|&(name, s, sp)| {
                let mut p = ClassifierProfile::machine(id(name), &[FilterId(0)]);
                // Betas whose means are exactly s and sp.
                p.accuracy.insert(
                    FilterId(0),
                    crate::bayes::BetaAccuracy {
                        pos: BetaParams::new(s * 10.0, (1.0 - s) * 10.0).unwrap(),
                        neg: BetaParams::new(sp * 10.0, (1.0 - sp) * 10.0).unwrap(),
                    },
                );
                (id(name), p)
            })
            .collect()
    }

    fn vote(c: &str, value: FilterLabel) -> Vote {
        Vote {
            classifier_id: id(c),
            item_id: ItemId(0),
            filter_id: FilterId(0),
            value,
            source_kind: SourceKind::Machine,
        }
    }

    #[test]
    fn ensemble_prior_examples() {
        let profiles = profiles_with(&[("a", 0.8, 0.8), ("b", 0.8, 0.8), ("c", 0.9, 0.6)]);
        let kept = [id("a"), id("b"), id("c")];
        let both = [
            vote("a", FilterLabel::Applies),
            vote("b", FilterLabel::Applies),
        ];
        let p = ensemble_prior(FilterId(0), &both, &profiles, &kept, 0.5).unwrap();
        assert!((p.prob_applies() - 0.64 / 0.68).abs() < 1e-12);

        let p = ensemble_prior(FilterId(0), &[], &profiles, &kept, 0.5).unwrap();
        assert_eq!(p.prob_applies(), 0.5);

        let p = ensemble_prior(
            FilterId(0),
            &[vote("c", FilterLabel::Applies)],
            &profiles,
            &kept,
            0.3,
        )
        .unwrap();
        assert!((p.prob_applies() - 0.27 / 0.55).abs() < 1e-12);

        assert!(matches!(
            ensemble_prior(FilterId(0), &both, &profiles, &[id("a")], 0.5),
            Err(ScreenError::PrunedClassifier(_))
        ));
    }

    #[test]
    fn weighted_majority_examples() {
        let w: Vec<f64> = [0.9, 0.6, 0.6]
            .iter()
            .map(|&a| log_odds_weight(a))
            .collect();
        assert!((w[0] - 9f64.ln()).abs() < 1e-12);
        let votes = [
            (FilterLabel::Applies, w[0]),
            (FilterLabel::NotApplies, w[1]),
            (FilterLabel::NotApplies, w[2]),
        ];
        assert_eq!(weighted_majority(&votes), FilterLabel::Applies);
        assert_eq!(
            weighted_majority(&[(FilterLabel::Applies, 0.3)]),
            FilterLabel::Applies
        );
        assert_eq!(
            weighted_majority(&[(FilterLabel::Applies, 1.0), (FilterLabel::NotApplies, 1.0)]),
            FilterLabel::NotApplies
        );
    }

    proptest! {
        #[test]
        fn pruned_set_respects_cap_and_is_idempotent(
            accs in prop::collection::vec(0.5f64..1.0, 1..8),
            raw in prop::collection::vec(-1.0f64..1.0, 28),
            c_max in 0.0f64..1.0,
        ) {
            let n = accs.len();
            let names: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
            let mut pairs = Vec::new();
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    pairs.push((i, j, raw[k]));
                    k += 1;
                }
            }
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let m = matrix_from(&refs, &pairs);
            let cands: Vec<_> = names.iter().zip(&accs).map(|(n, &a)| (id(n), a)).collect();
            let kept = prune_correlated(&cands, &m, c_max).unwrap();
            prop_assert!(!kept.is_empty());
            for a in &kept {
                for b in &kept {
                    if a != b {
                        prop_assert!(m.get(a, b).unwrap() <= c_max);
                    }
                }
            }
            let sub: Vec<_> = cands.iter().filter(|(i, _)| kept.contains(i)).cloned().collect();
            let again = prune_correlated(&sub, &m, c_max).unwrap();
            prop_assert_eq!(again, kept);
        }

        #[test]
        fn correlation_invariant_under_label_flip(
            x in prop::collection::vec(any::<bool>(), 2..40),
            y_seed in prop::collection::vec(any::<bool>(), 40),
        ) {
            let y: Vec<bool> = y_seed[..x.len()].to_vec();
            let fx: Vec<bool> = x.iter().map(|b| !b).collect();
            let fy: Vec<bool> = y.iter().map(|b| !b).collect();
            let r1 = pearson(&x, &y).unwrap();
            let r2 = pearson(&fx, &fy).unwrap();
            prop_assert!((r1 - r2).abs() < 1e-12);
        }

        #[test]
        fn naive_bayes_agrees_with_weighted_vote(
            acc in 0.55f64..0.95,
            labels in prop::collection::vec(any::<bool>(), 1..9),
        ) {
            let votes: Vec<FilterLabel> = labels.iter().map(|&b| FilterLabel::from_applies(b)).collect();
            let n_app = labels.iter().filter(|&&b| b).count();
            prop_assume!(2 * n_app != labels.len());
            let prior = fold_votes(
                FilterPosterior::new(0.5).unwrap(),
                votes.iter().map(|&l| (l, acc, acc)),
            );
            let w = log_odds_weight(acc);
            let maj = weighted_majority(&votes.iter().map(|&l| (l, w)).collect::<Vec<_>>());
            prop_assert_eq!(prior.prob_applies() > 0.5, maj.applies());
        }
    }

    #[test]
    fn vote_matrix_round_trip() {
        let mut m = VoteMatrix::new(
            vec![FilterId(0), FilterId(1)],
            vec![id("a"), id("b")],
            vec![ItemId(2), ItemId(1)],
        );
        m.set(1, 0, 0, FilterLabel::Applies);
        m.set(0, 1, 1, FilterLabel::NotApplies);
        let votes = m.to_votes();
        assert_eq!(votes.len(), 2);
        let back = VoteMatrix::from_votes(&votes);
        assert_eq!(back.get(1, 0, ItemId(1)), Some(FilterLabel::Applies));
        assert_eq!(back.get(0, 1, ItemId(2)), Some(FilterLabel::NotApplies));
    }
}
