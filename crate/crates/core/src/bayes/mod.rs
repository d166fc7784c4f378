//! Posterior mathematics: Beta-modelled classifier accuracy, vote-conditioned
//! filter posteriors, exclusion probability and the include/exclude rule.

mod special;

pub use special::{regularized_incomplete_beta, regularized_incomplete_beta_upper};

use crate::error::{Result, ScreenError};
use crate::model::{FilterLabel, LossParams};

/// Point estimates of sensitivity/specificity are clamped into this range
/// before they enter a Bayes update, so no single vote can produce certainty.
pub const RATE_CLAMP: (f64, f64) = (0.01, 0.99);

pub fn clamp_rate(p: f64) -> f64 {
    p.clamp(RATE_CLAMP.0, RATE_CLAMP.1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub const UNIFORM: BetaParams = BetaParams {
        alpha: 1.0,
        beta: 1.0,
    };

    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(ScreenError::invalid(format!(
                "Beta parameters must be finite and positive, got ({alpha}, {beta})"
            )));
        }
        Ok(BetaParams { alpha, beta })
    }

    /// Beta(1 + successes, 1 + failures).
    pub fn from_counts(successes: usize, failures: usize) -> Self {
        BetaParams {
            alpha: 1.0 + successes as f64,
            beta: 1.0 + failures as f64,
        }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn observe(&mut self, success: bool) {
        if success {
            self.alpha += 1.0;
        } else {
            self.beta += 1.0;
        }
    }
}

impl Default for BetaParams {
    fn default() -> Self {
        BetaParams::UNIFORM
    }
}

/// A 2x2 confusion model with a Beta posterior on each diagonal entry.
///
/// `pos` is sensitivity, P(vote Applies | truth Applies); `neg` is
/// specificity, P(vote NotApplies | truth NotApplies).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaAccuracy {
    pub pos: BetaParams,
    pub neg: BetaParams,
}

impl BetaAccuracy {
    pub fn uniform() -> Self {
        BetaAccuracy {
            pos: BetaParams::UNIFORM,
            neg: BetaParams::UNIFORM,
        }
    }

    pub fn side(&self, truth: FilterLabel) -> BetaParams {
        match truth {
            FilterLabel::Applies => self.pos,
            FilterLabel::NotApplies => self.neg,
        }
    }

    fn side_mut(&mut self, truth: FilterLabel) -> &mut BetaParams {
        match truth {
            FilterLabel::Applies => &mut self.pos,
            FilterLabel::NotApplies => &mut self.neg,
        }
    }

    pub fn sensitivity(&self) -> f64 {
        clamp_rate(self.pos.mean())
    }

    pub fn specificity(&self) -> f64 {
        clamp_rate(self.neg.mean())
    }

    /// Both sides merged into one correct/incorrect Beta sharing a single uniform prior.
    pub fn pooled(&self) -> BetaParams {
        BetaParams {
            alpha: self.pos.alpha + self.neg.alpha - 1.0,
            beta: self.pos.beta + self.neg.beta - 1.0,
        }
    }

    /// Scalar accuracy: average of the two side means.
    pub fn balanced_mean(&self) -> f64 {
        0.5 * (self.pos.mean() + self.neg.mean())
    }

    /// Sums the evidence of two posteriors that started from uniform priors.
    pub fn merge(&self, other: &BetaAccuracy) -> BetaAccuracy {
        BetaAccuracy {
            pos: BetaParams {
                alpha: self.pos.alpha + other.pos.alpha - 1.0,
                beta: self.pos.beta + other.pos.beta - 1.0,
            },
            neg: BetaParams {
                alpha: self.neg.alpha + other.neg.alpha - 1.0,
                beta: self.neg.beta + other.neg.beta - 1.0,
            },
        }
    }
}

impl Default for BetaAccuracy {
    fn default() -> Self {
        Self::uniform()
    }
}

/// Records one gold-checked answer on the side matching the true label.
pub fn update_accuracy(acc: BetaAccuracy, truth: FilterLabel, was_correct: bool) -> BetaAccuracy {
    let mut out = acc;
    out.side_mut(truth).observe(was_correct);
    out
}

pub fn accuracy_mean(acc: &BetaAccuracy, side: FilterLabel) -> f64 {
    acc.side(side).mean()
}

/// P(accuracy > threshold) under the given Beta, i.e. 1 - I_threshold(alpha, beta).
pub fn prob_accuracy_above(params: BetaParams, threshold: f64) -> Result<f64> {
    check_threshold(threshold)?;
    regularized_incomplete_beta_upper(params.alpha, params.beta, threshold)
}

pub fn prob_accuracy_below(params: BetaParams, threshold: f64) -> Result<f64> {
    check_threshold(threshold)?;
    regularized_incomplete_beta(params.alpha, params.beta, threshold)
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(ScreenError::invalid(format!(
            "accuracy threshold must lie in (0, 1), got {threshold}"
        )))
    }
}

/// Probability that one filter applies to one item.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FilterPosterior(f64);

impl FilterPosterior {
    pub fn new(prob_applies: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&prob_applies) {
            Ok(FilterPosterior(prob_applies))
        } else {
            Err(ScreenError::invalid(format!(
                "probability must lie in [0, 1], got {prob_applies}"
            )))
        }
    }

    /// Clamps into [0, 1]; NaN maps to 0.5.
    pub fn saturating(prob_applies: f64) -> Self {
        if prob_applies.is_nan() {
            FilterPosterior(0.5)
        } else {
            FilterPosterior(prob_applies.clamp(0.0, 1.0))
        }
    }

    pub fn certain(label: FilterLabel) -> Self {
        FilterPosterior(if label.applies() { 1.0 } else { 0.0 })
    }

    pub fn prob_applies(self) -> f64 {
        self.0
    }
}

/// Bayes' rule for one vote from a classifier with the given sensitivity and specificity.
pub fn posterior_update(
    prior: FilterPosterior,
    vote: FilterLabel,
    sensitivity: f64,
    specificity: f64,
) -> FilterPosterior {
    let s = clamp_rate(sensitivity);
    let sp = clamp_rate(specificity);
    let p = prior.0;
    let (like_applies, like_not) = match vote {
        FilterLabel::Applies => (s, 1.0 - sp),
        FilterLabel::NotApplies => (1.0 - s, sp),
    };
    let num = p * like_applies;
    FilterPosterior::saturating(num / (num + (1.0 - p) * like_not))
}

/// Probability the item passes every filter, filters independent given the item.
pub fn prob_in_scope(filter_probs: &[f64]) -> f64 {
    filter_probs.iter().map(|p| 1.0 - p).product()
}

/// 1 - prod(1 - p_f).
pub fn prob_item_excluded(filter_probs: &[f64]) -> f64 {
    1.0 - prob_in_scope(filter_probs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Include,
    Exclude,
    Continue,
    ToExpert,
}

impl Decision {
    pub fn is_terminal(self) -> bool {
        self != Decision::Continue
    }
}

/// Threshold rule on the in-scope probability. Never returns `ToExpert`.
pub fn decide(posteriors: &[FilterPosterior], params: &LossParams) -> Decision {
    let p_in: f64 = posteriors.iter().map(|p| 1.0 - p.0).product();
    decide_on_p_in(p_in, params)
}

pub(crate) fn decide_on_p_in(p_in: f64, params: &LossParams) -> Decision {
    if p_in <= params.fe_threshold {
        Decision::Exclude
    } else if 1.0 - p_in <= params.include_threshold {
        Decision::Include
    } else {
        Decision::Continue
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
