//! The crowd phase: worker test gate, baseline run, greedy next-vote selection,
//! stopping, and expert fallback.
//!
//! Every item starts from a per-filter prior (selectivity alone, or selectivity
//! folded with machine votes). The scheduler repeatedly picks the open
//! (item, filter) pair whose vote is most likely to screen an item out, asks the
//! crowd for one vote, updates the posterior and checks the include/exclude rule.
//! Items whose expected remaining crowd cost exceeds the expert cost, or that
//! exhaust their vote budget, are handed to an expert.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

use crate::bayes::{
    decide_on_p_in, logit, posterior_update, update_accuracy, BetaAccuracy, BetaParams, Decision,
    FilterPosterior,
};
use crate::ensemble::ScreeningRule;
use crate::error::{Result, ScreenError};
use crate::model::{
    ClassifierId, FilterId, FilterLabel, GoldRecord, GoldSet, ItemId, LossParams, Verdict, Vote,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub test_size: usize,
    pub baseline_size: usize,
    /// Minimum overall test accuracy for a worker to pass (inclusive).
    pub worker_pass_rule: f64,
    /// Output-correlation cap for pruning. 0.35 is the largest value on a 0.05
    /// grid that kept hybrid false exclusions at or under 0.02 on a held-out seed.
    pub c_max: f64,
    pub loss: LossParams,
    pub ec: f64,
    pub max_votes_per_item: usize,
    /// Crowd votes collected per (item, filter) during the baseline run.
    pub votes_per_pair: usize,
    pub screening_accuracy_floor: f64,
    pub screening_confidence: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            test_size: 20,
            baseline_size: 100,
            worker_pass_rule: 0.6,
            c_max: 0.35,
            loss: LossParams::default(),
            ec: 20.0,
            max_votes_per_item: 30,
            votes_per_pair: 3,
            screening_accuracy_floor: 0.5,
            screening_confidence: 0.95,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.screening_rule().validate()?;
        if self.baseline_size < 2 {
            return Err(ScreenError::invalid("baseline size must be at least 2"));
        }
        if self.ec.is_nan() || self.ec <= 1.0 {
            return Err(ScreenError::invalid(format!(
                "expert cost must exceed 1, got {}",
                self.ec
            )));
        }
        if self.votes_per_pair == 0 || self.max_votes_per_item == 0 {
            return Err(ScreenError::invalid("vote counts must be positive"));
        }
        if !(0.0..=1.0).contains(&self.worker_pass_rule) {
            return Err(ScreenError::invalid("worker pass rule must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn screening_rule(&self) -> ScreeningRule {
        ScreeningRule {
            accuracy_floor: self.screening_accuracy_floor,
            confidence: self.screening_confidence,
            test_size: self.test_size,
        }
    }
}

/// Where crowd votes and expert judgements come from: a simulator or a recorded log.
pub trait CrowdSource {
    /// Candidate workers before the test gate.
    fn candidates(&self) -> Vec<ClassifierId>;
    /// The worker's answers on the gold test set.
    fn test_answers(&mut self, worker: &ClassifierId) -> Vec<Vote>;
    /// Restricts future vote requests to these workers.
    fn admit(&mut self, passing: &[ClassifierId]);
    /// One more crowd vote on the pair, or `None` if no admitted worker can supply one.
    fn request(&mut self, item: ItemId, filter: FilterId) -> Option<Vote>;
    /// A perfectly accurate judgement of the whole item.
    fn expert(&mut self, item: ItemId) -> Option<GoldRecord>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerTestResult {
    pub worker: ClassifierId,
    pub passed: bool,
    pub correct: usize,
    pub total: usize,
    pub accuracy: BTreeMap<FilterId, BetaAccuracy>,
}

/// Scores a worker against the gold test set. Missing answers fail the worker.
pub fn run_worker_tests(
    worker: &ClassifierId,
    answers: &[Vote],
    gold_t: &GoldSet,
    min_accuracy: f64,
) -> WorkerTestResult {
    let mut seen: HashMap<(ItemId, FilterId), FilterLabel> = HashMap::new();
    for v in answers.iter().filter(|v| &v.classifier_id == worker) {
        seen.entry((v.item_id, v.filter_id)).or_insert(v.value);
    }
    let mut accuracy: BTreeMap<FilterId, BetaAccuracy> = gold_t
        .filters()
        .iter()
        .map(|&f| (f, BetaAccuracy::uniform()))
        .collect();
    let (mut correct, mut total, mut complete) = (0, 0, true);
    for record in gold_t.records() {
        for (&filter, &truth) in &record.labels {
            match seen.get(&(record.item_id, filter)) {
                Some(&answer) => {
                    let ok = answer == truth;
                    let acc = accuracy.get_mut(&filter).unwrap();
                    *acc = update_accuracy(*acc, truth, ok);
                    correct += ok as usize;
                    total += 1;
                }
                None => complete = false,
            }
        }
    }
    let passed = complete && total > 0 && correct as f64 >= min_accuracy * total as f64;
    WorkerTestResult {
        worker: worker.clone(),
        passed,
        correct,
        total,
        accuracy,
    }
}

/// Workers admitted by the test gate and their pooled per-filter accuracy.
#[derive(Debug, Clone)]
pub struct CrowdPanel {
    pub results: Vec<WorkerTestResult>,
    pub passing: Vec<ClassifierId>,
    pub accuracy: Vec<BetaAccuracy>,
}

pub fn screen_workers(
    source: &mut dyn CrowdSource,
    gold_t: &GoldSet,
    min_accuracy: f64,
) -> CrowdPanel {
    let filters = gold_t.filters();
    let mut results = Vec::new();
    for worker in source.candidates() {
        let answers = source.test_answers(&worker);
        results.push(run_worker_tests(&worker, &answers, gold_t, min_accuracy));
    }
    let passing: Vec<_> = results
        .iter()
        .filter(|r| r.passed)
        .map(|r| r.worker.clone())
        .collect();
    let accuracy = filters
        .iter()
        .map(|f| {
            results
                .iter()
                .filter(|r| r.passed)
                .fold(BetaAccuracy::uniform(), |acc, r| acc.merge(&r.accuracy[f]))
        })
        .collect();
    source.admit(&passing);
    CrowdPanel {
        results,
        passing,
        accuracy,
    }
}

/// Per-filter selectivity and crowd accuracy, frozen after the baseline run.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineStats {
    pub filters: Vec<FilterId>,
    pub selectivity: Vec<BetaParams>,
    pub crowd_accuracy: Vec<BetaAccuracy>,
}

impl BaselineStats {
    pub fn uninformed(filters: &[FilterId]) -> Self {
        BaselineStats {
            filters: filters.to_vec(),
            selectivity: vec![BetaParams::UNIFORM; filters.len()],
            crowd_accuracy: vec![BetaAccuracy::uniform(); filters.len()],
        }
    }

    pub fn selectivity_mean(&self, fi: usize) -> f64 {
        self.selectivity[fi].mean()
    }

    pub fn crowd_accuracy_mean(&self, fi: usize) -> f64 {
        self.crowd_accuracy[fi].balanced_mean()
    }

    /// Crowd accuracy averaged over filters.
    pub fn mean_crowd_accuracy(&self) -> f64 {
        if self.filters.is_empty() {
            return 0.5;
        }
        (0..self.filters.len())
            .map(|fi| self.crowd_accuracy_mean(fi))
            .sum::<f64>()
            / self.filters.len() as f64
    }
}

/// Collects `votes_per_pair` crowd votes on every (item, filter) of the baseline
/// items and estimates selectivity from the per-pair majority (ties count as NotApplies).
pub fn baseline_run(
    items_b: &[ItemId],
    filters: &[FilterId],
    source: &mut dyn CrowdSource,
    panel: &CrowdPanel,
    votes_per_pair: usize,
) -> Result<(BaselineStats, Vec<Vote>)> {
    if panel.passing.len() < votes_per_pair {
        return Err(ScreenError::InsufficientWorkers {
            available: panel.passing.len(),
            needed: votes_per_pair,
        });
    }
    let mut log = Vec::with_capacity(items_b.len() * filters.len() * votes_per_pair);
    let mut counts = vec![(0usize, 0usize); filters.len()];
    for &item in items_b {
        for (fi, &filter) in filters.iter().enumerate() {
            let mut applies = 0;
            let mut got = 0;
            for _ in 0..votes_per_pair {
                let Some(v) = source.request(item, filter) else {
                    break;
                };
                applies += v.value.applies() as usize;
                got += 1;
                log.push(v);
            }
            if got == 0 {
                continue;
            }
            if 2 * applies > got {
                counts[fi].0 += 1;
            } else {
                counts[fi].1 += 1;
            }
        }
    }
    let stats = BaselineStats {
        filters: filters.to_vec(),
        selectivity: counts
            .iter()
            .map(|&(a, n)| BetaParams::from_counts(a, n))
            .collect(),
        crowd_accuracy: panel.accuracy.clone(),
    };
    Ok((stats, log))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ItemStatus {
    Open,
    Included,
    Excluded,
    SentToExpert,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemState {
    pub item_id: ItemId,
    pub posteriors: Vec<FilterPosterior>,
    pub filter_votes: Vec<usize>,
    pub votes_spent: usize,
    pub status: ItemStatus,
    /// Set when the source could not supply a requested vote.
    pub exhausted: bool,
}

impl ItemState {
    pub fn new(item_id: ItemId, priors: Vec<FilterPosterior>) -> Self {
        let n = priors.len();
        ItemState {
            item_id,
            posteriors: priors,
            filter_votes: vec![0; n],
            votes_spent: 0,
            status: ItemStatus::Open,
            exhausted: false,
        }
    }

    pub fn p_in(&self) -> f64 {
        self.posteriors
            .iter()
            .map(|p| 1.0 - p.prob_applies())
            .product()
    }

    pub fn is_open(&self) -> bool {
        self.status == ItemStatus::Open
    }

    /// Folds one crowd vote; a no-op once the item has left `Open`.
    pub fn apply_vote(&mut self, fi: usize, value: FilterLabel, stats: &BaselineStats) {
        if !self.is_open() {
            return;
        }
        let acc = &stats.crowd_accuracy[fi];
        self.posteriors[fi] = posterior_update(
            self.posteriors[fi],
            value,
            acc.sensitivity(),
            acc.specificity(),
        );
        self.filter_votes[fi] += 1;
        self.votes_spent += 1;
    }
}

fn query_score(state: &ItemState, fi: usize, stats: &BaselineStats) -> f64 {
    state.posteriors[fi].prob_applies() * stats.crowd_accuracy_mean(fi)
}

/// The item's best filter to ask about next and its score; lower filter wins ties.
fn best_filter(state: &ItemState, stats: &BaselineStats) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for fi in 0..state.posteriors.len() {
        let s = query_score(state, fi, stats);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((fi, s));
        }
    }
    best
}

/// Open (item, filter) pair maximising posterior x crowd accuracy.
/// Ties go to the lower item id, then the lower filter id.
pub fn next_query(states: &[ItemState], stats: &BaselineStats) -> Option<(ItemId, FilterId)> {
    let mut best: Option<(f64, ItemId, usize)> = None;
    for state in states.iter().filter(|s| s.is_open()) {
        let Some((fi, score)) = best_filter(state, stats) else {
            continue;
        };
        let better = match best {
            None => true,
            Some((b, item, _)) => score > b || (score == b && state.item_id < item),
        };
        if better {
            best = Some((score, state.item_id, fi));
        }
    }
    best.map(|(_, item, fi)| (item, stats.filters[fi]))
}

/// Votes needed for the leading hypothesis to cross its threshold, assuming each
/// vote moves the item's log-odds by the crowd's mean log-odds step.
pub fn expected_crowd_cost(state: &ItemState, stats: &BaselineStats, params: &LossParams) -> f64 {
    let p_in = state.p_in();
    if decide_on_p_in(p_in, params).is_terminal() {
        return 0.0;
    }
    let acc = stats.mean_crowd_accuracy();
    if acc <= 0.5 {
        return f64::INFINITY;
    }
    let step = logit(acc);
    let gap = if p_in > 0.5 {
        logit(1.0 - params.include_threshold) - logit(p_in)
    } else {
        logit(p_in) - logit(params.fe_threshold)
    };
    (gap / step).ceil().max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    AskCrowd,
    ToExpert,
}

pub fn route_or_vote(state: &ItemState, stats: &BaselineStats, config: &StrategyConfig) -> Route {
    const CROWD_VOTE_COST: f64 = 1.0;
    if state.exhausted
        || state.votes_spent >= config.max_votes_per_item
        || expected_crowd_cost(state, stats, &config.loss) * CROWD_VOTE_COST > config.ec
    {
        Route::ToExpert
    } else {
        Route::AskCrowd
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemDecision {
    pub item_id: ItemId,
    pub verdict: Verdict,
    pub by_expert: bool,
    pub p_in_at_decision: f64,
    pub votes_spent: usize,
}

impl ItemDecision {
    pub fn label(&self) -> &'static str {
        match (self.verdict, self.by_expert) {
            (Verdict::Include, false) => "include",
            (Verdict::Exclude, false) => "exclude",
            (Verdict::Include, true) => "expert_include",
            (Verdict::Exclude, true) => "expert_exclude",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ShortestRun {
    /// Decisions in item-id order.
    pub decisions: Vec<ItemDecision>,
    /// Crowd votes requested by the main loop, in request order.
    pub votes: Vec<Vote>,
    pub expert_items: usize,
    /// Scheduler iterations (one per vote or routing).
    pub steps: usize,
    /// Item and filter of every main-loop query, in order.
    pub queries: Vec<(ItemId, FilterId)>,
}

fn finalize(
    state: &mut ItemState,
    decision: Decision,
    source: &mut dyn CrowdSource,
    gold_filters: &[FilterId],
) -> Result<ItemDecision> {
    let p_in = state.p_in();
    let (verdict, by_expert) = match decision {
        Decision::Include => {
            state.status = ItemStatus::Included;
            (Verdict::Include, false)
        }
        Decision::Exclude => {
            state.status = ItemStatus::Excluded;
            (Verdict::Exclude, false)
        }
        Decision::ToExpert => {
            let record = source
                .expert(state.item_id)
                .ok_or(ScreenError::NoExpertLabel(state.item_id))?;
            for (fi, &filter) in gold_filters.iter().enumerate() {
                state.posteriors[fi] = FilterPosterior::certain(record.label(filter)?);
            }
            state.status = ItemStatus::SentToExpert;
            let verdict = if state.p_in() == 1.0 {
                Verdict::Include
            } else {
                Verdict::Exclude
            };
            (verdict, true)
        }
        Decision::Continue => unreachable!("Continue is not terminal"),
    };
    Ok(ItemDecision {
        item_id: state.item_id,
        verdict,
        by_expert,
        p_in_at_decision: p_in,
        votes_spent: state.votes_spent,
    })
}

type QueueKey = (Reverse<OrderedFloat<f64>>, ItemId, usize);

/// The main greedy loop over already-initialised item states.
///
/// `states` must be sorted by item id. Terminates after at most
/// `|items| * max_votes_per_item` votes.
pub fn shortest_run(
    states: &mut [ItemState],
    stats: &BaselineStats,
    config: &StrategyConfig,
    source: &mut dyn CrowdSource,
) -> Result<ShortestRun> {
    let filters = stats.filters.clone();
    let mut out = ShortestRun::default();
    let mut decided: BTreeMap<ItemId, ItemDecision> = BTreeMap::new();
    let index: HashMap<ItemId, usize> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.item_id, i))
        .collect();

    let mut queue: BTreeSet<QueueKey> = BTreeSet::new();
    for state in states.iter_mut() {
        if !state.is_open() {
            continue;
        }
        let d = decide_on_p_in(state.p_in(), &config.loss);
        if d.is_terminal() {
            decided.insert(state.item_id, finalize(state, d, source, &filters)?);
        } else {
            // An undecided item has p_in < 1, so at least one filter is uncertain.
            let (fi, score) = best_filter(state, stats).expect("undecided item has a filter");
            queue.insert((Reverse(OrderedFloat(score)), state.item_id, fi));
        }
    }

    while let Some((_, item, fi)) = queue.pop_first() {
        out.steps += 1;
        let state = &mut states[index[&item]];
        if route_or_vote(state, stats, config) == Route::ToExpert {
            decided.insert(item, finalize(state, Decision::ToExpert, source, &filters)?);
            out.expert_items += 1;
            continue;
        }
        out.queries.push((item, filters[fi]));
        match source.request(item, filters[fi]) {
            Some(vote) => {
                state.apply_vote(fi, vote.value, stats);
                out.votes.push(vote);
            }
            None => state.exhausted = true,
        }
        let d = decide_on_p_in(state.p_in(), &config.loss);
        if d.is_terminal() {
            decided.insert(item, finalize(state, d, source, &filters)?);
        } else if state.exhausted {
            decided.insert(item, finalize(state, Decision::ToExpert, source, &filters)?);
            out.expert_items += 1;
        } else {
            let (fi, score) = best_filter(state, stats).unwrap();
            queue.insert((Reverse(OrderedFloat(score)), item, fi));
        }
    }
    out.decisions = decided.into_values().collect();
    Ok(out)
}

/// How per-(item, filter) starting priors are produced once selectivity is known.
pub enum Priors<'a> {
    /// Every pair starts at its filter's selectivity mean.
    Selectivity,
    /// Called with (item, filter index, selectivity mean).
    Custom(&'a dyn Fn(ItemId, usize, f64) -> Result<FilterPosterior>),
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub panel: CrowdPanel,
    pub stats: BaselineStats,
    pub baseline_items: Vec<ItemId>,
    pub baseline_votes: Vec<Vote>,
    pub run: ShortestRun,
}

impl Classification {
    /// Every paid crowd vote: baseline first, then the main loop.
    pub fn crowd_votes(&self) -> usize {
        self.baseline_votes.len() + self.run.votes.len()
    }
}

/// The full crowd phase: test gate, baseline run on the first `baseline_size`
/// items, prior assignment, then the greedy loop.
///
/// With `allow_empty_crowd`, an empty worker pool skips the baseline run instead
/// of failing; every item then starts from uninformed stats.
pub fn classify_items(
    items: &[ItemId],
    filters: &[FilterId],
    priors: Priors<'_>,
    source: &mut dyn CrowdSource,
    gold_t: &GoldSet,
    config: &StrategyConfig,
    allow_empty_crowd: bool,
) -> Result<Classification> {
    config.validate()?;
    let mut items = items.to_vec();
    items.sort();
    items.dedup();

    let panel = screen_workers(source, gold_t, config.worker_pass_rule);
    let baseline_items: Vec<ItemId> = items.iter().copied().take(config.baseline_size).collect();
    let (stats, baseline_votes) =
        if items.is_empty() || (allow_empty_crowd && panel.passing.is_empty()) {
            let mut stats = BaselineStats::uninformed(filters);
            stats.crowd_accuracy = panel.accuracy.clone();
            (stats, Vec::new())
        } else {
            baseline_run(
                &baseline_items,
                filters,
                source,
                &panel,
                config.votes_per_pair,
            )?
        };

    let mut states = Vec::with_capacity(items.len());
    for &item in &items {
        let p = (0..filters.len())
            .map(|fi| {
                let sel = stats.selectivity_mean(fi);
                match &priors {
                    Priors::Selectivity => FilterPosterior::new(sel),
                    Priors::Custom(f) => f(item, fi, sel),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        states.push(ItemState::new(item, p));
    }
    let position: HashMap<ItemId, usize> =
        items.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let filter_pos: HashMap<FilterId, usize> =
        filters.iter().enumerate().map(|(i, &f)| (f, i)).collect();
    for v in &baseline_votes {
        let (Some(&i), Some(&fi)) = (position.get(&v.item_id), filter_pos.get(&v.filter_id)) else {
            continue;
        };
        states[i].apply_vote(fi, v.value, &stats);
    }

    let run = shortest_run(&mut states, &stats, config, source)?;
    Ok(Classification {
        panel,
        stats,
        baseline_items,
        baseline_votes,
        run,
    })
}
