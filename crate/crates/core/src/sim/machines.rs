//! Machine classifiers with controlled error correlation.
//!
//! Equicorrelated Gaussian copula: for each (item, filter) a common factor is
//! shared by every classifier, z_j = sqrt(rho) * z_common + sqrt(1 - rho) * eps_j,
//! and classifier j answers correctly iff Phi(z_j) <= a_j. Marginal accuracy is
//! exactly a_j for every rho; rho only couples the error events.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::normal::normal_quantile;
use crate::ensemble::VoteMatrix;
use crate::error::{Result, ScreenError};
use crate::model::{ClassifierId, GoldSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMachineSpec {
    pub count: usize,
    pub accuracy_range: (f64, f64),
    pub target_rho: f64,
}

impl Default for SimMachineSpec {
    fn default() -> Self {
        SimMachineSpec {
            count: 10,
            accuracy_range: (0.5, 0.95),
            target_rho: 0.0,
        }
    }
}

impl SimMachineSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.accuracy_range;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(ScreenError::invalid(format!(
                "machine accuracy range must lie within (0, 1), got [{lo}, {hi}]"
            )));
        }
        check_rho(self.target_rho)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(ScreenError::invalid(format!(
            "target correlation must lie in [0, 1), got {rho}"
        )))
    }
}

pub fn machine_id(j: usize) -> ClassifierId {
    ClassifierId::new(format!("m{j:02}"))
}

/// Simulated machine outputs with the accuracies that produced them.
#[derive(Debug, Clone)]
pub struct SimMachines {
    /// `accuracies[j][fi]` for classifier j on filter index fi.
    pub accuracies: Vec<Vec<f64>>,
    pub matrix: VoteMatrix,
}

/// One accuracy per (classifier, filter), uniform over `spec.accuracy_range`.
pub fn sample_machine_accuracies(
    spec: &SimMachineSpec,
    n_filters: usize,
    rng: &mut impl Rng,
) -> Vec<Vec<f64>> {
    let (lo, hi) = spec.accuracy_range;
    (0..spec.count)
        .map(|_| {
            (0..n_filters)
                .map(|_| {
                    if hi > lo {
                        rng.random_range(lo..hi)
                    } else {
                        lo
                    }
                })
                .collect()
        })
        .collect()
}

pub fn generate_machine_outputs(
    spec: &SimMachineSpec,
    gold: &GoldSet,
    accuracy_rng: &mut impl Rng,
    latent_rng: &mut impl Rng,
) -> Result<SimMachines> {
    spec.validate()?;
    let accuracies = sample_machine_accuracies(spec, gold.filters().len(), accuracy_rng);
    let matrix = copula_outputs(&accuracies, spec.target_rho, gold, latent_rng)?;
    Ok(SimMachines { accuracies, matrix })
}

/// Outputs for every gold item given fixed accuracies (`accuracies[j][fi]`).
pub fn copula_outputs(
    accuracies: &[Vec<f64>],
    rho: f64,
    gold: &GoldSet,
    rng: &mut impl Rng,
) -> Result<VoteMatrix> {
    check_rho(rho)?;
    let filters = gold.filters().to_vec();
    let ids: Vec<_> = (0..accuracies.len()).map(machine_id).collect();
    // Phi(z) <= a  <=>  z <= Phi^-1(a)
    let thresholds = accuracies
        .iter()
        .map(|row| {
            if row.len() != filters.len() {
                return Err(ScreenError::LengthMismatch(row.len(), filters.len()));
            }
            row.iter()
                .map(|&a| match a {
                    a if a >= 1.0 => Ok(f64::INFINITY),
                    a if a <= 0.0 => Ok(f64::NEG_INFINITY),
                    a => normal_quantile(a),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let items = gold.item_ids();
    let mut matrix = VoteMatrix::new(filters.clone(), ids, items.clone());
    let (shared, own) = (rho.sqrt(), (1.0 - rho).sqrt());
    for (fi, &filter) in filters.iter().enumerate() {
        for (ii, &item) in items.iter().enumerate() {
            let truth = gold.label(item, filter)?;
            let common: f64 = rng.sample(StandardNormal);
            for (j, row) in thresholds.iter().enumerate() {
                let eps: f64 = rng.sample(StandardNormal);
                let z = shared * common + own * eps;
                let label = if z <= row[fi] { truth } else { truth.flipped() };
                matrix.set(fi, j, ii, label);
            }
        }
    }
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::pearson;
    use crate::model::FilterId;
    use crate::sim::seeds::stream;
    use crate::sim::{generate_items, FilterSpec};

    fn world(n: usize) -> GoldSet {
        let filters = [FilterSpec {
            filter_id: FilterId(0),
            selectivity: 0.3,
        }];
        generate_items(0, n, &filters, &mut stream(5, "gold", 0)).unwrap()
    }

    fn outputs(m: &VoteMatrix, j: usize, gold: &GoldSet) -> Vec<bool> {
        m.outputs(0, j, &gold.item_ids()).unwrap()
    }

    #[test]
    fn independent_when_rho_zero() {
        let gold = world(20_000);
        let acc = vec![vec![0.75]; 2];
        let m = copula_outputs(&acc, 0.0, &gold, &mut stream(1, "latent", 0)).unwrap();
        // Error indicators are independent; output correlation comes only from the shared truth.
        let items = gold.item_ids();
        let errs = |j: usize| -> Vec<bool> {
            items
                .iter()
                .map(|&i| m.get(0, j, i).unwrap() != gold.label(i, FilterId(0)).unwrap())
                .collect()
        };
        assert!(pearson(&errs(0), &errs(1)).unwrap().abs() <= 0.03);
    }

    #[test]
    fn shared_latent_limit_gives_identical_errors() {
        let gold = world(2000);
        let acc = vec![vec![0.8]; 2];
        let m = copula_outputs(&acc, 0.999_999_999, &gold, &mut stream(1, "latent", 0)).unwrap();
        let r = pearson(&outputs(&m, 0, &gold), &outputs(&m, 1, &gold)).unwrap();
        assert!(r > 0.999, "{r}");
    }

    #[test]
    fn marginal_accuracy_is_preserved() {
        let gold = world(20_000);
        let accs = [0.55, 0.7, 0.9];
        let acc: Vec<Vec<f64>> = accs.iter().map(|&a| vec![a]).collect();
        for rho in [0.0, 0.5, 0.9] {
            let m = copula_outputs(&acc, rho, &gold, &mut stream(2, "latent", 0)).unwrap();
            for (j, &a) in accs.iter().enumerate() {
                let hits = gold
                    .item_ids()
                    .iter()
                    .filter(|&&i| m.get(0, j, i) == Some(gold.label(i, FilterId(0)).unwrap()))
                    .count();
                let emp = hits as f64 / 20_000.0;
                let tol = 4.0 * (a * (1.0 - a) / 20_000.0).sqrt();
                assert!((emp - a).abs() <= tol, "rho={rho} a={a} emp={emp}");
            }
        }
    }

    #[test]
    fn rejects_rho_of_one() {
        let gold = world(10);
        assert!(copula_outputs(&[vec![0.7]], 1.0, &gold, &mut stream(1, "l", 0)).is_err());
    }

    #[test]
    fn deterministic_given_streams() {
        let gold = world(500);
        let spec = SimMachineSpec::default();
        let a =
            generate_machine_outputs(&spec, &gold, &mut stream(1, "a", 0), &mut stream(1, "l", 0))
                .unwrap();
        let b =
            generate_machine_outputs(&spec, &gold, &mut stream(1, "a", 0), &mut stream(1, "l", 0))
                .unwrap();
        assert_eq!(a.matrix, b.matrix);
        assert_eq!(a.accuracies, b.accuracies);
    }
}
