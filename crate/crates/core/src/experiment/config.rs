use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScreenError};
use crate::model::FilterId;
use crate::scheduler::StrategyConfig;
use crate::sim::{CrowdSpec, FilterSpec, SimMachineSpec, WorldConfig};

/// Everything a correlation sweep needs. `world.seed` is the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub correlations: Vec<f64>,
    pub iterations: usize,
    pub world: WorldConfig,
    pub machines: SimMachineSpec,
    pub crowd: CrowdSpec,
    pub strategy_config: StrategyConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            correlations: vec![0.0, 0.2, 0.3, 0.5, 0.7, 0.9],
            iterations: 50,
            world: WorldConfig::default(),
            machines: SimMachineSpec::default(),
            crowd: CrowdSpec::default(),
            strategy_config: StrategyConfig::default(),
        }
    }
}

impl SweepSpec {
    pub fn seed(&self) -> u64 {
        self.world.seed
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(ScreenError::invalid("iterations must be at least 1"));
        }
        if self.correlations.is_empty() {
            return Err(ScreenError::invalid("at least one correlation is required"));
        }
        for &rho in &self.correlations {
            SimMachineSpec {
                target_rho: rho,
                ..self.machines.clone()
            }
            .validate()?;
        }
        self.world.validate()?;
        self.crowd.validate()?;
        self.strategy_config.validate()
    }
}

/// Flat JSON configuration; every key is optional and overrides the default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub correlations: Option<Vec<f64>>,
    pub iterations: Option<usize>,
    pub n_items: Option<usize>,
    /// One entry per filter; filter ids are assigned 0, 1, 2, ...
    pub selectivities: Option<Vec<f64>>,
    pub machine_count: Option<usize>,
    pub machine_accuracy_range: Option<(f64, f64)>,
    pub worker_pool_size: Option<usize>,
    pub worker_accuracy_range: Option<(f64, f64)>,
    pub worker_specificity_range: Option<(f64, f64)>,
    pub test_size: Option<usize>,
    pub baseline_size: Option<usize>,
    pub worker_pass_rule: Option<f64>,
    pub c_max: Option<f64>,
    pub k: Option<f64>,
    pub fe_threshold: Option<f64>,
    pub include_threshold: Option<f64>,
    pub ec: Option<f64>,
    pub max_votes_per_item: Option<usize>,
    pub votes_per_pair: Option<usize>,
    pub screening_accuracy_floor: Option<f64>,
    pub screening_confidence: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path).map_err(|e| ScreenError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn apply(&self, spec: &mut SweepSpec) {
        macro_rules! set {
            ($src:ident => $($dst:tt)+) => {
                if let Some(v) = self.$src.clone() {
                    $($dst)+ = v;
                }
            };
        }
        set!(seed => spec.world.seed);
        set!(correlations => spec.correlations);
        set!(iterations => spec.iterations);
        set!(n_items => spec.world.n_items);
        if let Some(sel) = &self.selectivities {
            spec.world.filters = sel
                .iter()
                .enumerate()
                .map(|(i, &s)| FilterSpec {
                    filter_id: FilterId(i as u32),
                    selectivity: s,
                })
                .collect();
        }
        set!(machine_count => spec.machines.count);
        set!(machine_accuracy_range => spec.machines.accuracy_range);
        set!(worker_pool_size => spec.crowd.pool_size);
        set!(worker_accuracy_range => spec.crowd.accuracy_range);
        if self.worker_specificity_range.is_some() {
            spec.crowd.specificity_range = self.worker_specificity_range;
        }
        let sc = &mut spec.strategy_config;
        set!(test_size => sc.test_size);
        set!(baseline_size => sc.baseline_size);
        set!(worker_pass_rule => sc.worker_pass_rule);
        set!(c_max => sc.c_max);
        set!(k => sc.loss.k);
        set!(fe_threshold => sc.loss.fe_threshold);
        set!(include_threshold => sc.loss.include_threshold);
        set!(ec => sc.ec);
        set!(max_votes_per_item => sc.max_votes_per_item);
        set!(votes_per_pair => sc.votes_per_pair);
        set!(screening_accuracy_floor => sc.screening_accuracy_floor);
        set!(screening_confidence => sc.screening_confidence);
    }
}
