//! GRPO learning-signal math: group-normalized advantages and the clipped,
//! KL-regularized surrogate with its analytic gradient. No model involved;
//! callers supply rewards and token log-probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Estimator of the per-token KL penalty towards the reference policy,
/// written in terms of `d = ref - cur`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KlEstimator {
    /// `exp(d) - d - 1`, non-negative.
    #[default]
    K3,
    /// `-d`, unbiased but signed.
    K1,
}

/// How token terms are reduced to a scalar loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Mean over each sample's valid tokens, then mean over the group.
    #[default]
    SampleMean,
    /// Mean over all valid tokens of the group.
    TokenMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_eps: f64,
    pub kl_coeff: f64,
    /// Policy updates per batch of rollouts. With more than one, `old` and
    /// `current` log-probs differ after the first update.
    pub inner_iterations: usize,
    pub std_floor: f64,
    pub kl_estimator: KlEstimator,
    pub aggregation: Aggregation,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            clip_eps: 0.2,
            kl_coeff: 0.04,
            inner_iterations: 1,
            std_floor: 1e-4,
            kl_estimator: KlEstimator::K3,
            aggregation: Aggregation::SampleMean,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::invalid_argument(format!(
                "group size {} must be at least 2",
                self.group_size
            )));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::invalid_argument(format!("clip epsilon {} outside (0, 1)", self.clip_eps)));
        }
        if !(self.kl_coeff >= 0.0 && self.kl_coeff.is_finite()) {
            return Err(Error::invalid_argument(format!("KL coefficient {} must be >= 0", self.kl_coeff)));
        }
        if self.inner_iterations == 0 {
            return Err(Error::invalid_argument("inner iterations must be positive"));
        }
        if !(self.std_floor > 0.0 && self.std_floor.is_finite()) {
            return Err(Error::invalid_argument(format!("std floor {} must be positive", self.std_floor)));
        }
        Ok(())
    }
}

/// Reward z-scores within one group: `(r - mean) / (std + std_floor)` with the
/// population standard deviation. A group of identical rewards gets all-zero
/// advantages.
pub fn group_advantages(rewards: &[f64], cfg: &GrpoConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if rewards.len() != cfg.group_size {
        return Err(Error::invalid_argument(format!(
            "expected {} rewards per group, got {}",
            cfg.group_size,
            rewards.len()
        )));
    }
    if let Some(bad) = rewards.iter().find(|r| !r.is_finite()) {
        return Err(Error::invalid_argument(format!("non-finite reward {bad}")));
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + cfg.std_floor;
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

/// Token log-probabilities of one sampled completion under the current,
/// behaviour (old) and reference policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleLogprobs {
    pub current: Vec<f64>,
    pub old: Vec<f64>,
    pub reference: Vec<f64>,
    /// Valid-token mask; all tokens are valid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<bool>>,
}

impl SampleLogprobs {
    fn is_valid(&self, t: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[t])
    }

    fn valid_tokens(&self) -> usize {
        match &self.mask {
            Some(m) => m.iter().filter(|&&v| v).count(),
            None => self.current.len(),
        }
    }
}

/// Rewards and log-probs for the completions of one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub rewards: Vec<f64>,
    pub samples: Vec<SampleLogprobs>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveOutput {
    pub loss: f64,
    /// `d loss / d current[i][t]`; zero at masked tokens.
    pub grad: Vec<Vec<f64>>,
    /// Mean KL estimate over valid tokens.
    pub mean_kl: f64,
    /// Fraction of valid tokens where the clipped branch was selected.
    pub clip_fraction: f64,
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(t) => Err(Error::invalid_argument(format!("{name}[{t}] is not finite"))),
        None => Ok(()),
    }
}

/// Clipped surrogate with KL penalty, to be minimized.
///
/// Per valid token: `ratio = exp(cur - old)`,
/// `term = min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)` and
/// `loss_t = -term + beta * kl(cur, ref)`. Token losses are reduced according
/// to `cfg.aggregation`.
pub fn grpo_objective(samples: &[SampleLogprobs], advantages: &[f64], cfg: &GrpoConfig) -> Result<ObjectiveOutput> {
    cfg.validate()?;
    if samples.len() != advantages.len() {
        return Err(Error::invalid_argument(format!(
            "{} samples but {} advantages",
            samples.len(),
            advantages.len()
        )));
    }
    if samples.is_empty() {
        return Err(Error::invalid_argument("empty rollout group"));
    }
    check_finite("advantages", advantages)?;
    for (i, s) in samples.iter().enumerate() {
        let len = s.current.len();
        if s.old.len() != len || s.reference.len() != len || s.mask.as_ref().is_some_and(|m| m.len() != len) {
            return Err(Error::invalid_argument(format!(
                "sample {i}: current, old, reference and mask lengths differ"
            )));
        }
        check_finite("current", &s.current)?;
        check_finite("old", &s.old)?;
        check_finite("reference", &s.reference)?;
    }

    let total_tokens: usize = samples.iter().map(SampleLogprobs::valid_tokens).sum();
    let group = samples.len() as f64;
    let (lo, hi) = (1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);

    let mut loss = 0.0;
    let mut kl_sum = 0.0;
    let mut clipped = 0usize;
    let mut grad = Vec::with_capacity(samples.len());
    for (s, &adv) in samples.iter().zip(advantages) {
        let weight = match cfg.aggregation {
            Aggregation::SampleMean => match s.valid_tokens() {
                0 => 0.0,
                t => 1.0 / (group * t as f64),
            },
            Aggregation::TokenMean if total_tokens > 0 => 1.0 / total_tokens as f64,
            Aggregation::TokenMean => 0.0,
        };
        let mut g = vec![0.0; s.current.len()];
        for (t, gt) in g.iter_mut().enumerate() {
            if !s.is_valid(t) {
                continue;
            }
            let cur = s.current[t];
            let ratio = (cur - s.old[t]).exp();
            let unclipped = ratio * adv;
            let clipped_term = ratio.clamp(lo, hi) * adv;
            // d(term)/d(cur): ratio * A on the unclipped branch, 0 once clipped.
            let (term, dterm) = if unclipped <= clipped_term {
                (unclipped, unclipped)
            } else {
                clipped += 1;
                (clipped_term, 0.0)
            };
            let d = s.reference[t] - cur;
            let (kl, dkl) = match cfg.kl_estimator {
                KlEstimator::K3 => (d.exp() - d - 1.0, 1.0 - d.exp()),
                KlEstimator::K1 => (-d, 1.0),
            };
            kl_sum += kl;
            loss += weight * (-term + cfg.kl_coeff * kl);
            *gt = weight * (-dterm + cfg.kl_coeff * dkl);
        }
        grad.push(g);
    }

    let denom = total_tokens.max(1) as f64;
    Ok(ObjectiveOutput {
        loss,
        grad,
        mean_kl: kl_sum / denom,
        clip_fraction: clipped as f64 / denom,
    })
}

/// Advantages plus, when log-probs are present, the objective for a group.
pub fn learning_signal(group: &RolloutGroup, cfg: &GrpoConfig) -> Result<(Vec<f64>, Option<ObjectiveOutput>)> {
    let advantages = group_advantages(&group.rewards, cfg)?;
    if group.samples.is_empty() {
        return Ok((advantages, None));
    }
    let objective = grpo_objective(&group.samples, &advantages, cfg)?;
    Ok((advantages, Some(objective)))
}
