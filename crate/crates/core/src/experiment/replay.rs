use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use super::runner::{
    assemble_metrics, crowd_pipeline, crowd_price, MetricInputs, RunOutcome, Strategy,
};
use crate::ensemble::{correlations_by_filter, VoteMatrix};
use crate::error::{Result, ScreenError};
use crate::model::{ClassifierId, FilterId, GoldRecord, GoldSet, ItemId, SourceKind, Vote};
use crate::scheduler::{CrowdSource, StrategyConfig};

/// A crowd backed by a recorded log. Requests for a pair are served in file
/// order, skipping workers that did not pass the test gate.
pub struct LogCrowd<'a> {
    gold: &'a GoldSet,
    candidates: Vec<ClassifierId>,
    test_votes: HashMap<ClassifierId, Vec<Vote>>,
    queues: HashMap<(ItemId, FilterId), VecDeque<Vote>>,
    admitted: HashSet<ClassifierId>,
}

impl<'a> LogCrowd<'a> {
    pub fn new(votes: &[Vote], gold: &'a GoldSet, test_gold: &'a GoldSet) -> Self {
        let mut candidates = BTreeSet::new();
        let mut test_votes: HashMap<ClassifierId, Vec<Vote>> = HashMap::new();
        let mut queues: HashMap<(ItemId, FilterId), VecDeque<Vote>> = HashMap::new();
        for v in votes.iter().filter(|v| v.source_kind == SourceKind::Crowd) {
            if test_gold.contains(v.item_id) {
                candidates.insert(v.classifier_id.clone());
                test_votes
                    .entry(v.classifier_id.clone())
                    .or_default()
                    .push(v.clone());
            } else {
                queues
                    .entry((v.item_id, v.filter_id))
                    .or_default()
                    .push_back(v.clone());
            }
        }
        LogCrowd {
            gold,
            candidates: candidates.into_iter().collect(),
            test_votes,
            queues,
            admitted: HashSet::new(),
        }
    }
}

impl CrowdSource for LogCrowd<'_> {
    fn candidates(&self) -> Vec<ClassifierId> {
        self.candidates.clone()
    }

    fn test_answers(&mut self, worker: &ClassifierId) -> Vec<Vote> {
        self.test_votes.get(worker).cloned().unwrap_or_default()
    }

    fn admit(&mut self, passing: &[ClassifierId]) {
        self.admitted = passing.iter().cloned().collect();
    }

    fn request(&mut self, item: ItemId, filter: FilterId) -> Option<Vote> {
        let queue = self.queues.get_mut(&(item, filter))?;
        while let Some(v) = queue.pop_front() {
            if self.admitted.contains(&v.classifier_id) {
                return Some(v);
            }
        }
        None
    }

    fn expert(&mut self, item: ItemId) -> Option<GoldRecord> {
        self.gold.get(item).cloned()
    }
}

fn check_ids(votes: &[Vote], gold: &GoldSet, test_gold: &GoldSet) -> Result<()> {
    if gold.filters() != test_gold.filters() {
        return Err(ScreenError::invalid(
            "gold and test gold files declare different filters",
        ));
    }
    if let Some(item) = gold.item_ids().into_iter().find(|&i| test_gold.contains(i)) {
        return Err(ScreenError::invalid(format!(
            "item {item} appears in both gold and test gold"
        )));
    }
    for v in votes {
        if !gold.contains(v.item_id) && !test_gold.contains(v.item_id) {
            return Err(ScreenError::UnknownItem(v.item_id));
        }
        if !gold.filters().contains(&v.filter_id) {
            return Err(ScreenError::UndeclaredFilter {
                item: v.item_id,
                filter: v.filter_id,
            });
        }
        if v.source_kind == SourceKind::Expert {
            return Err(ScreenError::invalid(format!(
                "expert votes are not accepted in a replay log (classifier {})",
                v.classifier_id
            )));
        }
    }
    Ok(())
}

/// Runs the hybrid pipeline over recorded votes. Without machine votes the
/// crowd phase starts from selectivity priors.
pub fn replay(
    votes: &[Vote],
    gold: &GoldSet,
    test_gold: &GoldSet,
    config: &StrategyConfig,
) -> Result<RunOutcome> {
    config.validate()?;
    check_ids(votes, gold, test_gold)?;
    let machine_votes: Vec<Vote> = votes
        .iter()
        .filter(|v| v.source_kind == SourceKind::Machine)
        .cloned()
        .collect();
    let matrix = (!machine_votes.is_empty()).then(|| VoteMatrix::from_votes(&machine_votes));
    let items = gold.item_ids();
    let measured_output_rho = match &matrix {
        Some(m) if items.len() >= 2 => correlations_by_filter(m, &items)?.mean.mean_off_diagonal(),
        _ => 0.0,
    };
    let mut crowd = LogCrowd::new(votes, gold, test_gold);
    let out = crowd_pipeline(&items, test_gold, matrix.as_ref(), &mut crowd, config, true)?;
    let c = out.classification;
    let (paid, price) = crowd_price(&c, config)?;
    let metrics = assemble_metrics(
        MetricInputs {
            strategy: Strategy::Hybrid,
            correlation: None,
            iteration: 0,
            decisions: &c.run.decisions,
            gold,
            price,
            crowd_votes: paid.len(),
            expert_items: c.run.expert_items,
            measured_output_rho,
            checksum: crate::sim::world_checksum(gold),
        },
        config,
    )?;
    Ok(RunOutcome {
        metrics,
        decisions: c.run.decisions.clone(),
        crowd_votes: paid,
        test_answers: votes
            .iter()
            .filter(|v| v.source_kind == SourceKind::Crowd && test_gold.contains(v.item_id))
            .cloned()
            .collect(),
        classification: Some(c),
        ensemble: out.ensemble,
    })
}
