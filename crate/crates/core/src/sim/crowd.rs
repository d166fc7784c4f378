use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::seeds::stream;
use crate::error::{Result, ScreenError};
use crate::model::{
    ClassifierId, FilterId, FilterLabel, GoldRecord, GoldSet, ItemId, SourceKind, Vote,
};
use crate::scheduler::CrowdSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrowdSpec {
    /// Candidate workers before the test gate.
    pub pool_size: usize,
    pub accuracy_range: (f64, f64),
    /// When set, specificity is drawn from this range and `accuracy_range`
    /// only governs sensitivity.
    pub specificity_range: Option<(f64, f64)>,
}

impl Default for CrowdSpec {
    fn default() -> Self {
        CrowdSpec {
            pool_size: 100,
            accuracy_range: (0.55, 0.8),
            specificity_range: None,
        }
    }
}

impl CrowdSpec {
    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in std::iter::once(self.accuracy_range).chain(self.specificity_range) {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(ScreenError::invalid(format!(
                    "bad worker accuracy range [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimWorker {
    pub worker_id: ClassifierId,
    /// Per filter index.
    pub sensitivity: Vec<f64>,
    pub specificity: Vec<f64>,
}

impl SimWorker {
    pub fn symmetric(worker_id: ClassifierId, accuracy: Vec<f64>) -> Self {
        SimWorker {
            worker_id,
            specificity: accuracy.clone(),
            sensitivity: accuracy,
        }
    }
}

fn uniform_in(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

pub fn sample_workers(spec: &CrowdSpec, n_filters: usize, rng: &mut impl Rng) -> Vec<SimWorker> {
    (0..spec.pool_size)
        .map(|w| {
            let sens: Vec<f64> = (0..n_filters)
                .map(|_| uniform_in(rng, spec.accuracy_range))
                .collect();
            let spec_side = match spec.specificity_range {
                Some(r) => (0..n_filters).map(|_| uniform_in(rng, r)).collect(),
                None => sens.clone(),
            };
            SimWorker {
                worker_id: ClassifierId::new(format!("w{w:04}")),
                sensitivity: sens,
                specificity: spec_side,
            }
        })
        .collect()
}

/// The gold label with probability equal to the worker's accuracy on that side, else flipped.
pub fn sample_crowd_vote(
    worker: &SimWorker,
    fi: usize,
    gold: FilterLabel,
    rng: &mut impl Rng,
) -> FilterLabel {
    let p_correct = match gold {
        FilterLabel::Applies => worker.sensitivity[fi],
        FilterLabel::NotApplies => worker.specificity[fi],
    };
    if rng.random::<f64>() < p_correct {
        gold
    } else {
        gold.flipped()
    }
}

/// Simulated crowd over a known gold world.
///
/// Votes for an item come from that item's own RNG stream, so an item's vote
/// sequence does not depend on how other items are scheduled.
pub struct SimCrowd<'a> {
    workers: &'a [SimWorker],
    filters: Vec<FilterId>,
    gold: &'a GoldSet,
    test_gold: &'a GoldSet,
    seed: u64,
    admitted: Vec<usize>,
    item_rngs: HashMap<ItemId, ChaCha8Rng>,
    used: HashMap<(ItemId, FilterId), Vec<usize>>,
}

impl<'a> SimCrowd<'a> {
    pub fn new(
        workers: &'a [SimWorker],
        gold: &'a GoldSet,
        test_gold: &'a GoldSet,
        seed: u64,
    ) -> Self {
        SimCrowd {
            workers,
            filters: gold.filters().to_vec(),
            gold,
            test_gold,
            seed,
            admitted: Vec::new(),
            item_rngs: HashMap::new(),
            used: HashMap::new(),
        }
    }

    fn worker_index(&self, id: &ClassifierId) -> Option<usize> {
        self.workers.iter().position(|w| &w.worker_id == id)
    }
}

impl CrowdSource for SimCrowd<'_> {
    fn candidates(&self) -> Vec<ClassifierId> {
        self.workers.iter().map(|w| w.worker_id.clone()).collect()
    }

    fn test_answers(&mut self, worker: &ClassifierId) -> Vec<Vote> {
        let Some(wi) = self.worker_index(worker) else {
            return Vec::new();
        };
        let mut rng = stream(self.seed, "worker-test", wi as u64);
        let w = &self.workers[wi];
        let mut out = Vec::new();
        for r in self.test_gold.records() {
            for (fi, &filter) in self.filters.iter().enumerate() {
                let truth = r.labels[&filter];
                out.push(Vote {
                    classifier_id: w.worker_id.clone(),
                    item_id: r.item_id,
                    filter_id: filter,
                    value: sample_crowd_vote(w, fi, truth, &mut rng),
                    source_kind: SourceKind::Crowd,
                });
            }
        }
        out
    }

    fn admit(&mut self, passing: &[ClassifierId]) {
        let mut admitted: Vec<usize> = passing
            .iter()
            .filter_map(|id| self.worker_index(id))
            .collect();
        admitted.sort_unstable();
        self.admitted = admitted;
    }

    fn request(&mut self, item: ItemId, filter: FilterId) -> Option<Vote> {
        let fi = self.filters.iter().position(|&f| f == filter)?;
        let truth = self.gold.label(item, filter).ok()?;
        let used = self.used.entry((item, filter)).or_default();
        let available: Vec<usize> = self
            .admitted
            .iter()
            .copied()
            .filter(|w| !used.contains(w))
            .collect();
        if available.is_empty() {
            return None;
        }
        let seed = self.seed;
        let rng = self
            .item_rngs
            .entry(item)
            .or_insert_with(|| stream(seed, "crowd-vote", item.0 as u64));
        let wi = available[rng.random_range(0..available.len())];
        used.push(wi);
        let worker = &self.workers[wi];
        Some(Vote {
            classifier_id: worker.worker_id.clone(),
            item_id: item,
            filter_id: filter,
            value: sample_crowd_vote(worker, fi, truth, rng),
            source_kind: SourceKind::Crowd,
        })
    }

    fn expert(&mut self, item: ItemId) -> Option<GoldRecord> {
        self.gold.get(item).cloned()
    }
}
