use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ScreenError};
use crate::model::{FilterId, FilterLabel, GoldRecord, GoldSet, ItemId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub filter_id: FilterId,
    /// Probability that the filter applies to a random item.
    pub selectivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n_items: usize,
    pub filters: Vec<FilterSpec>,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_items: 1000,
            filters: (0..4)
                .map(|i| FilterSpec {
                    filter_id: FilterId(i),
                    selectivity: 0.3,
                })
                .collect(),
            seed: 2018,
        }
    }
}

impl WorldConfig {
    pub fn filter_ids(&self) -> Vec<FilterId> {
        self.filters.iter().map(|f| f.filter_id).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_items == 0 {
            return Err(ScreenError::invalid("n_items must be at least 1"));
        }
        for f in &self.filters {
            if !(f.selectivity > 0.0 && f.selectivity < 1.0) {
                return Err(ScreenError::invalid(format!(
                    "selectivity of filter {} must lie in (0, 1), got {}",
                    f.filter_id, f.selectivity
                )));
            }
        }
        Ok(())
    }
}

/// Gold labels for items `0..n_items`, each (item, filter) drawn independently.
pub fn generate_world(config: &WorldConfig, rng: &mut impl Rng) -> Result<GoldSet> {
    generate_items(0, config.n_items, &config.filters, rng)
}

/// Gold labels for `count` items numbered from `first_id`.
pub fn generate_items(
    first_id: u32,
    count: usize,
    filters: &[FilterSpec],
    rng: &mut impl Rng,
) -> Result<GoldSet> {
    for f in filters {
        if !(0.0..=1.0).contains(&f.selectivity) {
            return Err(ScreenError::invalid(format!(
                "selectivity must lie in [0, 1], got {}",
                f.selectivity
            )));
        }
    }
    let mut gold = GoldSet::new(filters.iter().map(|f| f.filter_id));
    for i in 0..count {
        let labels = filters.iter().map(|f| {
            (
                f.filter_id,
                FilterLabel::from_applies(rng.random_bool(f.selectivity)),
            )
        });
        gold.insert(GoldRecord::new(ItemId(first_id + i as u32), labels))?;
    }
    Ok(gold)
}

/// Short hex digest of every gold label, used to check that runs shared a world.
pub fn world_checksum(gold: &GoldSet) -> String {
    let mut h = Sha256::new();
    for r in gold.records() {
        h.update(r.item_id.0.to_le_bytes());
        for (f, l) in &r.labels {
            h.update(f.0.to_le_bytes());
            h.update([l.applies() as u8]);
        }
    }
    let digest: [u8; 32] = h.finalize().into();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::seeds::stream;

    #[test]
    fn selectivity_matches_binomial_expectation() {
        let config = WorldConfig::default();
        let gold = generate_world(&config, &mut stream(1, "gold", 0)).unwrap();
        assert_eq!(gold.len(), 1000);
        // Bin(1000, 0.3): mean 300, sd ~14.5, 4 sd ~ 58
        for f in config.filter_ids() {
            let n = gold.count_applies(f) as f64;
            assert!((n - 300.0).abs() <= 58.0, "filter {f}: {n}");
        }
    }

    #[test]
    fn zero_selectivity_never_applies() {
        let filters = [FilterSpec {
            filter_id: FilterId(0),
            selectivity: 0.0,
        }];
        let gold = generate_items(0, 500, &filters, &mut stream(1, "gold", 0)).unwrap();
        assert_eq!(gold.count_applies(FilterId(0)), 0);
    }

    #[test]
    fn same_seed_same_world() {
        let config = WorldConfig::default();
        let a = generate_world(&config, &mut stream(9, "gold", 0)).unwrap();
        let b = generate_world(&config, &mut stream(9, "gold", 0)).unwrap();
        let c = generate_world(&config, &mut stream(10, "gold", 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(world_checksum(&a), world_checksum(&b));
        assert_ne!(world_checksum(&a), world_checksum(&c));
    }
}
