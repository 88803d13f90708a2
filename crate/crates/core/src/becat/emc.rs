use crate::error::{Error, Result};
use crate::ncd::NcdModel;

pub(crate) use crate::ncd::dloss_dlogit;

/// Prediction and `∇_θ logit` for one item at a given ability.
#[derive(Debug, Clone, PartialEq)]
pub struct AbilityProbe {
    pub p: f64,
    pub logit_grad: Vec<f64>,
}

impl AbilityProbe {
    pub fn logit_grad_norm(&self) -> f64 {
        norm(&self.logit_grad)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_ability(model: &NcdModel, ability: &[f64]) -> Result<()> {
    if ability.len() != model.n_knowledge() {
        return Err(Error::DimensionMismatch(format!(
            "ability row has {} entries, expected {}",
            ability.len(),
            model.n_knowledge()
        )));
    }
    Ok(())
}

pub fn probe(
    model: &NcdModel,
    ability: &[f64],
    item: usize,
    q_row: &[usize],
) -> Result<AbilityProbe> {
    check_ability(model, ability)?;
    let p = model.predict_with(ability, item, q_row)?;
    let t = model.trace(ability, item, q_row);
    debug_assert_eq!(p, t.p);
    Ok(AbilityProbe {
        p,
        logit_grad: model.ability_logit_gradient(&t),
    })
}

/// `∇_θ loss` for the given label.
pub fn ability_gradient(probe: &AbilityProbe, correct: bool) -> Vec<f64> {
    let c = dloss_dlogit(probe.p, if correct { 1.0 } else { 0.0 });
    probe.logit_grad.iter().map(|g| c * g).collect()
}

/// `p · ‖Δθ_correct‖ + (1 − p) · ‖Δθ_incorrect‖`.
pub fn emc_from_norms(p: f64, norm_correct: f64, norm_incorrect: f64) -> f64 {
    p * norm_correct + (1.0 - p) * norm_incorrect
}

/// Expected norm of the ability change caused by one SGD step of size `lr`
/// on the answer to `item`, weighting each outcome by its predicted
/// probability. The model is not touched.
pub fn expected_model_change(
    model: &NcdModel,
    ability: &[f64],
    item: usize,
    q_row: &[usize],
    lr: f64,
) -> Result<f64> {
    let pr = probe(model, ability, item, q_row)?;
    let g = pr.logit_grad_norm();
    let step = |label: f64| lr * dloss_dlogit(pr.p, label).abs() * g;
    Ok(emc_from_norms(pr.p, step(1.0), step(0.0)))
}

/// One SGD step on the ability row alone under the observed answer.
pub fn update_ability(
    model: &NcdModel,
    ability: &[f64],
    item: usize,
    q_row: &[usize],
    correct: bool,
    lr: f64,
) -> Result<Vec<f64>> {
    let pr = probe(model, ability, item, q_row)?;
    let g = ability_gradient(&pr, correct);
    Ok(ability.iter().zip(&g).map(|(t, g)| t - lr * g).collect())
}
