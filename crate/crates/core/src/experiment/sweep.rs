use rayon::prelude::*;
use serde::Serialize;

use super::config::SweepSpec;
use super::runner::{run_strategy, RunMetrics, SimWorld, Strategy};
use crate::error::{Result, ScreenError};
use crate::sim::seeds::derive_u64;

/// Mean and sample standard deviation per (correlation, strategy).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub correlation: f64,
    pub strategy: Strategy,
    pub mean_loss_per_item: f64,
    pub std_loss_per_item: f64,
    pub mean_price_per_item: f64,
    pub std_price_per_item: f64,
    pub mean_fe_rate: f64,
    pub mean_fi_rate: f64,
    pub iterations: usize,
}

impl AggregateRow {
    /// Standard error of the mean price.
    pub fn price_sem(&self) -> f64 {
        self.std_price_per_item / (self.iterations as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SavingsRow {
    pub correlation: f64,
    pub crowd_price_per_item: f64,
    pub hybrid_price_per_item: f64,
    pub savings: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Ordered by (correlation index, iteration, strategy).
    pub runs: Vec<RunMetrics>,
    pub aggregate: Vec<AggregateRow>,
    pub savings: Vec<SavingsRow>,
}

impl SweepResult {
    pub fn row(&self, correlation: f64, strategy: Strategy) -> Option<&AggregateRow> {
        self.aggregate
            .iter()
            .find(|r| r.correlation == correlation && r.strategy == strategy)
    }

    pub fn mean_savings(&self) -> f64 {
        self.savings.iter().map(|s| s.savings).sum::<f64>() / self.savings.len().max(1) as f64
    }
}

/// Seed of the world used at (correlation index, iteration).
pub fn world_seed(master: u64, correlation_index: usize, iteration: usize) -> u64 {
    derive_u64(
        master,
        &format!("sweep-world/{correlation_index}"),
        iteration as u64,
    )
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(runs: &[RunMetrics], correlations: &[f64]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for &rho in correlations {
        for strategy in Strategy::ALL {
            let sel: Vec<&RunMetrics> = runs
                .iter()
                .filter(|r| r.strategy == strategy && r.correlation == Some(rho))
                .collect();
            if sel.is_empty() {
                continue;
            }
            let col = |f: fn(&RunMetrics) -> f64| sel.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let (ml, sl) = mean_std(&col(|r| r.loss_per_item));
            let (mp, sp) = mean_std(&col(|r| r.price_per_item));
            out.push(AggregateRow {
                correlation: rho,
                strategy,
                mean_loss_per_item: ml,
                std_loss_per_item: sl,
                mean_price_per_item: mp,
                std_price_per_item: sp,
                mean_fe_rate: mean_std(&col(|r| r.fe_rate)).0,
                mean_fi_rate: mean_std(&col(|r| r.fi_rate)).0,
                iterations: sel.len(),
            });
        }
    }
    out
}

pub fn savings(aggregate: &[AggregateRow], correlations: &[f64]) -> Vec<SavingsRow> {
    correlations
        .iter()
        .filter_map(|&rho| {
            let price = |s| {
                aggregate
                    .iter()
                    .find(|r| r.correlation == rho && r.strategy == s)
                    .map(|r| r.mean_price_per_item)
            };
            let (crowd, hybrid) = (price(Strategy::Crowd)?, price(Strategy::Hybrid)?);
            Some(SavingsRow {
                correlation: rho,
                crowd_price_per_item: crowd,
                hybrid_price_per_item: hybrid,
                savings: 1.0 - hybrid / crowd,
            })
        })
        .collect()
}

/// Runs `strategies` on a fresh world for every (correlation, iteration).
///
/// Cells run in parallel; each draws only from streams of its own world seed,
/// and results are merged in (correlation, iteration, strategy) order.
pub fn sweep_strategies(spec: &SweepSpec, strategies: &[Strategy]) -> Result<SweepResult> {
    spec.validate()?;
    if strategies.is_empty() {
        return Err(ScreenError::invalid("no strategies selected"));
    }
    let mut strategies = strategies.to_vec();
    strategies.sort();
    strategies.dedup();
    let cells: Vec<(usize, usize)> = (0..spec.correlations.len())
        .flat_map(|ci| (0..spec.iterations).map(move |it| (ci, it)))
        .collect();
    let per_cell = cells
        .par_iter()
        .map(|&(ci, it)| {
            let rho = spec.correlations[ci];
            let world = SimWorld::generate(spec, rho, world_seed(spec.seed(), ci, it))?;
            strategies
                .iter()
                .map(|&s| run_strategy(s, &world, &spec.strategy_config, it).map(|o| o.metrics))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let runs: Vec<RunMetrics> = per_cell.into_iter().flatten().collect();
    let aggregate = aggregate(&runs, &spec.correlations);
    let savings = savings(&aggregate, &spec.correlations);
    Ok(SweepResult {
        runs,
        aggregate,
        savings,
    })
}

pub fn sweep(spec: &SweepSpec) -> Result<SweepResult> {
    sweep_strategies(spec, &Strategy::ALL)
}
