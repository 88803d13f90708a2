use serde::{Deserialize, Serialize};

use super::emc::{expected_model_change, norm, update_ability};
use super::filter::filter_candidates;
use super::gain::Coverage;
use super::weights::{weight_matrix, WeightMatrix};
use crate::data::{KnowledgeGraph, QMatrix};
use crate::error::{Error, Result};
use crate::ncd::{sigmoid, NcdModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Items per session.
    pub budget: usize,
    /// Weight of the normalized expected model change against the
    /// normalized coverage gain.
    pub lambda_mix: f64,
    /// Monte Carlo samples for the weight matrix.
    pub n_samples: usize,
    /// Mastery below this marks a knowledge point as weak.
    pub threshold: f64,
    /// Step size of the ability update, also used inside EMC.
    pub ability_lr: f64,
    /// Larger pools are cut to the top items by EMC.
    pub max_pool: usize,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            budget: 10,
            lambda_mix: 0.5,
            n_samples: 16,
            threshold: 0.6,
            ability_lr: 0.05,
            max_pool: 512,
            seed: 0,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_mix) {
            return Err(Error::InvalidConfig("lambda_mix must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig("threshold must lie in [0, 1]".into()));
        }
        if !(self.ability_lr > 0.0 && self.ability_lr.is_finite()) {
            return Err(Error::InvalidConfig("ability_lr must be positive".into()));
        }
        if self.n_samples == 0 || self.max_pool == 0 {
            return Err(Error::InvalidConfig(
                "n_samples and max_pool must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Scores of the item chosen at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepScore {
    pub item: usize,
    pub emc: f64,
    pub gain: f64,
    pub score: f64,
    pub predicted_p: f64,
}

/// One student's adaptive session: a private ability row, the candidate
/// pool with its weight matrix, and the selections and answers so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionState {
    pub ability: Vec<f64>,
    pub candidate_ids: Vec<usize>,
    pub selected: Vec<usize>,
    pub weight: WeightMatrix,
    pub budget: usize,
    pub lambda_mix: f64,
    pub ability_lr: f64,
    pub responses: Vec<(usize, bool)>,
    /// EMC per candidate at the current ability; rebuilt after updates.
    #[serde(skip)]
    emc_cache: Option<Vec<f64>>,
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    values
        .iter()
        .map(|&v| if range > 0.0 { (v - lo) / range } else { 0.0 })
        .collect()
}

impl SelectionState {
    /// Builds a session over `pool`. Pools larger than `cfg.max_pool` keep
    /// the items with the highest EMC (ties to the lower id); the pool is
    /// then held in ascending id order.
    pub fn new(
        model: &NcdModel,
        q: &QMatrix,
        ability: Vec<f64>,
        pool: &[usize],
        cfg: &SelectionConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if pool.is_empty() {
            return Err(Error::EmptyPool);
        }
        let mut candidates = pool.to_vec();
        candidates.sort_unstable();
        candidates.dedup();
        let mut emc = candidates
            .iter()
            .map(|&i| expected_model_change(model, &ability, i, q.get(i)?, cfg.ability_lr))
            .collect::<Result<Vec<_>>>()?;
        if candidates.len() > cfg.max_pool {
            let mut ranked: Vec<usize> = (0..candidates.len()).collect();
            ranked.sort_by(|&a, &b| emc[b].total_cmp(&emc[a]).then(a.cmp(&b)));
            ranked.truncate(cfg.max_pool);
            ranked.sort_unstable();
            candidates = ranked.iter().map(|&r| candidates[r]).collect();
            emc = ranked.iter().map(|&r| emc[r]).collect();
        }
        let weight = weight_matrix(model, &ability, &candidates, q, cfg.n_samples, cfg.seed)?;
        Ok(SelectionState {
            ability,
            candidate_ids: candidates,
            selected: Vec::new(),
            weight,
            budget: cfg.budget,
            lambda_mix: cfg.lambda_mix,
            ability_lr: cfg.ability_lr,
            responses: Vec::new(),
            emc_cache: Some(emc),
        })
    }

    pub fn is_exhausted(&self) -> bool {
        self.selected.len() >= self.budget || self.selected.len() >= self.candidate_ids.len()
    }

    pub fn remaining(&self) -> usize {
        self.budget.saturating_sub(self.selected.len())
    }

    /// Item selected but not yet answered, if any.
    pub fn outstanding(&self) -> Option<usize> {
        (self.selected.len() > self.responses.len()).then(|| self.selected[self.responses.len()])
    }

    pub fn mastery(&self) -> Vec<f64> {
        self.ability.iter().map(|&t| sigmoid(t)).collect()
    }

    fn emc(&mut self, model: &NcdModel, q: &QMatrix) -> Result<&[f64]> {
        if self.emc_cache.is_none() {
            let values = self
                .candidate_ids
                .iter()
                .map(|&i| {
                    expected_model_change(model, &self.ability, i, q.get(i)?, self.ability_lr)
                })
                .collect::<Result<Vec<_>>>()?;
            self.emc_cache = Some(values);
        }
        Ok(self.emc_cache.as_deref().unwrap_or_default())
    }

    /// Picks the unselected candidate maximising
    /// `λ · norm(EMC) + (1 − λ) · norm(gain)`, with min-max normalization
    /// over the unselected pool and ties going to the lower item id.
    pub fn select_next(&mut self, model: &NcdModel, q: &QMatrix) -> Result<StepScore> {
        if self.selected.len() >= self.budget {
            return Err(Error::BudgetExhausted);
        }
        let cov = Coverage::new(&self.weight, &self.selected)?;
        let open: Vec<usize> = (0..self.candidate_ids.len())
            .filter(|&p| !cov.contains(p))
            .collect();
        if open.is_empty() {
            return Err(Error::EmptyPool);
        }
        let lambda = self.lambda_mix;
        let emc_all = self.emc(model, q)?.to_vec();
        let emc: Vec<f64> = open.iter().map(|&p| emc_all[p]).collect();
        let gain: Vec<f64> = open.iter().map(|&p| cov.gain(&self.weight, p)).collect();
        let (emc_n, gain_n) = (min_max(&emc), min_max(&gain));

        let mut best: Option<(usize, f64)> = None;
        for (o, &pos) in open.iter().enumerate() {
            let score = lambda * emc_n[o] + (1.0 - lambda) * gain_n[o];
            let better = match best {
                None => true,
                Some((b, s)) => {
                    score > s
                        || (score == s && self.candidate_ids[pos] < self.candidate_ids[open[b]])
                }
            };
            if better {
                best = Some((o, score));
            }
        }
        let (o, score) = best.ok_or(Error::EmptyPool)?;
        let item = self.candidate_ids[open[o]];
        self.selected.push(item);
        Ok(StepScore {
            item,
            emc: emc[o],
            gain: gain[o],
            score,
            predicted_p: model.predict_with(&self.ability, item, q.get(item)?)?,
        })
    }

    /// Applies the answer to the outstanding item and returns `‖Δθ‖₂`.
    pub fn observe(
        &mut self,
        model: &NcdModel,
        q: &QMatrix,
        item: usize,
        correct: bool,
    ) -> Result<f64> {
        match self.outstanding() {
            Some(o) if o == item => {}
            _ => return Err(Error::NotACandidate(item)),
        }
        let next = update_ability(
            model,
            &self.ability,
            item,
            q.get(item)?,
            correct,
            self.ability_lr,
        )?;
        let moved = norm(
            &next
                .iter()
                .zip(&self.ability)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        self.ability = next;
        self.responses.push((item, correct));
        self.emc_cache = None;
        Ok(moved)
    }
}

/// Recommendation without answers: filters the pool by the current
/// mastery, then takes `cfg.budget` greedy picks at a fixed ability.
pub fn recommend(
    model: &NcdModel,
    q: &QMatrix,
    graph: &KnowledgeGraph,
    ability: &[f64],
    cfg: &SelectionConfig,
) -> Result<Vec<usize>> {
    let mastery: Vec<f64> = ability.iter().map(|&t| sigmoid(t)).collect();
    let all: Vec<usize> = (0..q.n_items()).collect();
    let pool = filter_candidates(q, graph, &mastery, cfg.threshold, &all);
    let mut state = SelectionState::new(model, q, ability.to_vec(), &pool, cfg)?;
    let mut picks = Vec::new();
    while !state.is_exhausted() {
        picks.push(state.select_next(model, q)?.item);
    }
    Ok(picks)
}
