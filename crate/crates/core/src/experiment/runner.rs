use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::SweepSpec;
use crate::bayes::FilterPosterior;
use crate::ensemble::{correlations_by_filter, EnsembleSettings, MachineEnsemble, VoteMatrix};
use crate::error::{Result, ScreenError};
use crate::model::{compute_loss, price_of_run, ClassifierProfile, GoldSet, ItemId, Verdict, Vote};
use crate::scheduler::{
    classify_items, Classification, CrowdSource, ItemDecision, Priors, StrategyConfig,
};
use crate::sim::seeds::stream;
use crate::sim::{
    generate_items, generate_machine_outputs, sample_workers, world_checksum, SimCrowd,
    SimMachineSpec, SimMachines, SimWorker,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Machine,
    Crowd,
    Hybrid,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Machine, Strategy::Crowd, Strategy::Hybrid];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Machine => "machine",
            Strategy::Crowd => "crowd",
            Strategy::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = ScreenError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "machine" | "machine-only" => Ok(Strategy::Machine),
            "crowd" | "crowd-only" => Ok(Strategy::Crowd),
            "hybrid" => Ok(Strategy::Hybrid),
            other => Err(ScreenError::invalid(format!("unknown strategy {other:?}"))),
        }
    }
}

/// One simulated world: main items, gold test items, a worker pool and machine outputs.
#[derive(Debug, Clone)]
pub struct SimWorld {
    pub seed: u64,
    pub rho: f64,
    pub gold: GoldSet,
    pub test_gold: GoldSet,
    pub workers: Vec<SimWorker>,
    pub machines: SimMachines,
    pub checksum: String,
    /// Mean pairwise output correlation over all machines, averaged across filters.
    pub measured_output_rho: f64,
}

impl SimWorld {
    /// Builds every random component from named streams of `seed`.
    pub fn generate(spec: &SweepSpec, rho: f64, seed: u64) -> Result<SimWorld> {
        let filters = &spec.world.filters;
        let n = spec.world.n_items;
        let gold = generate_items(0, n, filters, &mut stream(seed, "gold", 0))?;
        let test_gold = generate_items(
            n as u32,
            spec.strategy_config.test_size,
            filters,
            &mut stream(seed, "test-gold", 0),
        )?;
        let workers = sample_workers(&spec.crowd, filters.len(), &mut stream(seed, "workers", 0));
        let machine_spec = SimMachineSpec {
            target_rho: rho,
            ..spec.machines.clone()
        };
        let all = gold.merged(&test_gold)?;
        let machines = generate_machine_outputs(
            &machine_spec,
            &all,
            &mut stream(seed, "machine-accuracy", 0),
            &mut stream(seed, "machine-latent", 0),
        )?;
        let measured_output_rho = if n >= 2 {
            correlations_by_filter(&machines.matrix, &gold.item_ids())?
                .mean
                .mean_off_diagonal()
        } else {
            0.0
        };
        Ok(SimWorld {
            seed,
            rho,
            checksum: world_checksum(&gold),
            gold,
            test_gold,
            workers,
            machines,
            measured_output_rho,
        })
    }

    pub fn crowd(&self) -> SimCrowd<'_> {
        SimCrowd::new(&self.workers, &self.gold, &self.test_gold, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub strategy: Strategy,
    /// Configured latent correlation; empty for replayed runs.
    pub correlation: Option<f64>,
    pub iteration: usize,
    pub loss_per_item: f64,
    pub price_per_item: f64,
    pub fe_rate: f64,
    pub fi_rate: f64,
    pub crowd_votes: usize,
    pub expert_items: usize,
    pub measured_output_rho: f64,
    pub world_checksum: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metrics: RunMetrics,
    pub decisions: Vec<ItemDecision>,
    /// Paid crowd votes: baseline run first, then the main loop in request order.
    pub crowd_votes: Vec<Vote>,
    /// Every candidate worker's answers on the gold test items.
    pub test_answers: Vec<Vote>,
    pub classification: Option<Classification>,
    pub ensemble: Option<MachineEnsemble>,
}

/// Output of the crowd-backed strategies, shared by simulation and replay.
pub struct CrowdOutcome {
    pub classification: Classification,
    pub ensemble: Option<MachineEnsemble>,
}

fn baseline_slice(items: &[ItemId], config: &StrategyConfig) -> Vec<ItemId> {
    let mut sorted = items.to_vec();
    sorted.sort();
    sorted.dedup();
    sorted.truncate(config.baseline_size);
    sorted
}

/// Crowd-only when `machines` is `None`, otherwise hybrid: machine screening and
/// pruning produce per-(item, filter) priors for the crowd phase.
pub fn crowd_pipeline(
    items: &[ItemId],
    gold_t: &GoldSet,
    machines: Option<&VoteMatrix>,
    source: &mut dyn CrowdSource,
    config: &StrategyConfig,
    allow_empty_crowd: bool,
) -> Result<CrowdOutcome> {
    let filters = gold_t.filters().to_vec();
    match machines {
        None => {
            let classification = classify_items(
                items,
                &filters,
                Priors::Selectivity,
                source,
                gold_t,
                config,
                allow_empty_crowd,
            )?;
            Ok(CrowdOutcome {
                classification,
                ensemble: None,
            })
        }
        Some(matrix) => {
            let settings = EnsembleSettings {
                rule: config.screening_rule(),
                c_max: config.c_max,
                fallback_to_best: false,
            };
            let ensemble =
                MachineEnsemble::build(matrix, gold_t, &baseline_slice(items, config), &settings)?;
            let prior = |item: ItemId, fi: usize, sel: f64| -> Result<FilterPosterior> {
                ensemble.prior(matrix, item, filters[fi], sel)
            };
            let classification = classify_items(
                items,
                &filters,
                Priors::Custom(&prior),
                source,
                gold_t,
                config,
                allow_empty_crowd,
            )?;
            Ok(CrowdOutcome {
                classification,
                ensemble: Some(ensemble),
            })
        }
    }
}

/// Screen, prune, weighted-majority per (item, filter); an item is excluded iff
/// any filter's majority says it applies.
pub fn machine_only(
    items: &[ItemId],
    gold_t: &GoldSet,
    matrix: &VoteMatrix,
    config: &StrategyConfig,
) -> Result<(Vec<ItemDecision>, MachineEnsemble)> {
    let settings = EnsembleSettings {
        rule: config.screening_rule(),
        c_max: config.c_max,
        fallback_to_best: true,
    };
    let ensemble =
        MachineEnsemble::build(matrix, gold_t, &baseline_slice(items, config), &settings)?;
    let mut sorted = items.to_vec();
    sorted.sort();
    let decisions = sorted
        .into_iter()
        .map(|item| {
            let excluded = gold_t
                .filters()
                .iter()
                .any(|&f| ensemble.majority(matrix, item, f).applies());
            ItemDecision {
                item_id: item,
                verdict: if excluded {
                    Verdict::Exclude
                } else {
                    Verdict::Include
                },
                by_expert: false,
                p_in_at_decision: f64::NAN,
                votes_spent: 0,
            }
        })
        .collect();
    Ok((decisions, ensemble))
}

pub(crate) struct MetricInputs<'a> {
    pub strategy: Strategy,
    pub correlation: Option<f64>,
    pub iteration: usize,
    pub decisions: &'a [ItemDecision],
    pub gold: &'a GoldSet,
    pub price: f64,
    pub crowd_votes: usize,
    pub expert_items: usize,
    pub measured_output_rho: f64,
    pub checksum: String,
}

pub(crate) fn assemble_metrics(m: MetricInputs<'_>, config: &StrategyConfig) -> Result<RunMetrics> {
    let verdicts: BTreeMap<ItemId, Verdict> =
        m.decisions.iter().map(|d| (d.item_id, d.verdict)).collect();
    let loss = compute_loss(&verdicts, m.gold, &config.loss)?;
    let n = m.gold.len().max(1) as f64;
    Ok(RunMetrics {
        strategy: m.strategy,
        correlation: m.correlation,
        iteration: m.iteration,
        loss_per_item: loss.loss / n,
        price_per_item: m.price / n,
        fe_rate: loss.fe_count as f64 / n,
        fi_rate: loss.fi_count as f64 / n,
        crowd_votes: m.crowd_votes,
        expert_items: m.expert_items,
        measured_output_rho: m.measured_output_rho,
        world_checksum: m.checksum,
    })
}

pub(crate) fn crowd_price(c: &Classification, config: &StrategyConfig) -> Result<(Vec<Vote>, f64)> {
    let votes: Vec<Vote> = c
        .baseline_votes
        .iter()
        .chain(&c.run.votes)
        .cloned()
        .collect();
    let filters = &c.stats.filters;
    let profiles: HashMap<_, _> = votes
        .iter()
        .map(|v| {
            (
                v.classifier_id.clone(),
                ClassifierProfile::crowd(v.classifier_id.clone(), filters),
            )
        })
        .collect();
    let price = price_of_run(&votes, &profiles, c.run.expert_items, config.ec)?;
    Ok((votes, price))
}

/// Runs one strategy on a simulated world.
pub fn run_strategy(
    strategy: Strategy,
    world: &SimWorld,
    config: &StrategyConfig,
    iteration: usize,
) -> Result<RunOutcome> {
    config.validate()?;
    let items = world.gold.item_ids();
    let metrics_for = |decisions: &[ItemDecision], price, crowd_votes, expert_items| {
        let inputs = MetricInputs {
            strategy,
            correlation: Some(world.rho),
            iteration,
            decisions,
            gold: &world.gold,
            price,
            crowd_votes,
            expert_items,
            measured_output_rho: world.measured_output_rho,
            checksum: world.checksum.clone(),
        };
        assemble_metrics(inputs, config)
    };
    match strategy {
        Strategy::Machine => {
            let (decisions, ensemble) =
                machine_only(&items, &world.test_gold, &world.machines.matrix, config)?;
            let metrics = metrics_for(&decisions, 0.0, 0, 0)?;
            Ok(RunOutcome {
                metrics,
                decisions,
                crowd_votes: Vec::new(),
                test_answers: Vec::new(),
                classification: None,
                ensemble: Some(ensemble),
            })
        }
        Strategy::Crowd | Strategy::Hybrid => {
            let mut crowd = world.crowd();
            let machines = (strategy == Strategy::Hybrid).then_some(&world.machines.matrix);
            let out = crowd_pipeline(
                &items,
                &world.test_gold,
                machines,
                &mut crowd,
                config,
                false,
            )?;
            let c = out.classification;
            let (votes, price) = crowd_price(&c, config)?;
            let metrics = metrics_for(&c.run.decisions, price, votes.len(), c.run.expert_items)?;
            let test_answers = test_answers(world);
            Ok(RunOutcome {
                metrics,
                decisions: c.run.decisions.clone(),
                crowd_votes: votes,
                test_answers,
                classification: Some(c),
                ensemble: out.ensemble,
            })
        }
    }
}

fn test_answers(world: &SimWorld) -> Vec<Vote> {
    let mut crowd = world.crowd();
    crowd
        .candidates()
        .iter()
        .flat_map(|w| crowd.test_answers(w))
        .collect()
}

/// The recorded inputs a replay needs to reproduce `outcome`.
pub fn export_log(world: &SimWorld, outcome: &RunOutcome) -> Vec<Vote> {
    let mut log = outcome.test_answers.clone();
    if outcome.metrics.strategy == Strategy::Hybrid {
        log.extend(world.machines.matrix.to_votes());
    }
    log.extend(outcome.crowd_votes.iter().cloned());
    log
}
