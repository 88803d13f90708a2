use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grads::batch_gradients;
use super::metrics::{evaluate, Metrics};
use super::model::{Dims, NcdModel};
use super::optim::{OptimState, Optimizer};
use crate::data::{QMatrix, ResponseDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub seed: u64,
    pub init_scale: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            learning_rate: 0.002,
            batch_size: 256,
            hidden_sizes: vec![64, 32],
            seed: 0,
            init_scale: 0.1,
            optimizer: Optimizer::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a finite non-negative number");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.hidden_sizes.contains(&0) {
            return bad("hidden sizes must be positive");
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid: Option<Metrics>,
}

/// One shuffled pass of minibatch SGD over `train`. Every step updates the
/// touched embedding rows, the discriminations and the MLP, then projects
/// the MLP weights onto the non-negative orthant.
///
/// Returns the mean per-record loss, each batch evaluated before its update.
/// Optimizer state starts fresh.
pub fn train_epoch<R: Rng>(
    model: &mut NcdModel,
    train: &ResponseDataset,
    q: &QMatrix,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    let mut opt = OptimState::new(cfg.optimizer, model);
    run_epoch(model, train, q, cfg, &mut opt, rng, 1)
}

fn run_epoch<R: Rng>(
    model: &mut NcdModel,
    train: &ResponseDataset,
    q: &QMatrix,
    cfg: &TrainConfig,
    opt: &mut OptimState,
    rng: &mut R,
    epoch: usize,
) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::Empty("training set is empty"));
    }
    model.check_compatible(q)?;
    let mut order = train.records.clone();
    order.shuffle(rng);
    let mut total = 0.0;
    for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
        let (grads, loss) = batch_gradients(model, chunk, q);
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch });
        }
        opt.step(model, &grads, cfg.learning_rate);
        model.project();
        if !parameters_finite(model) {
            return Err(Error::NonFiniteLoss { epoch, batch });
        }
        total += loss * chunk.len() as f64;
    }
    Ok(total / train.len() as f64)
}

fn parameters_finite(model: &NcdModel) -> bool {
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
    finite(model.theta.as_slice())
        && finite(model.beta.as_slice())
        && finite(&model.alpha_raw)
        && model
            .mlp
            .iter()
            .all(|l| finite(l.weights.as_slice()) && finite(&l.bias))
}

/// Initializes a model from `cfg.seed` and trains it for `cfg.epochs`,
/// recording the training loss and, when `valid` is non-empty, validation
/// metrics after every epoch.
pub fn fit(
    train: &ResponseDataset,
    valid: Option<&ResponseDataset>,
    q: &QMatrix,
    cfg: &TrainConfig,
) -> Result<(NcdModel, Vec<EpochRecord>)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set is empty"));
    }
    train.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = Dims {
        n_students: train.n_students,
        n_items: train.n_items,
        n_knowledge: train.n_knowledge,
        hidden_sizes: cfg.hidden_sizes.clone(),
    };
    let mut model = NcdModel::init(dims, cfg.init_scale, &mut rng);
    model.train_config = Some(cfg.clone());
    model.seed = Some(cfg.seed);

    let mut opt = OptimState::new(cfg.optimizer, &model);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let train_loss = run_epoch(&mut model, train, q, cfg, &mut opt, &mut rng, epoch)?;
        let valid = match valid {
            Some(v) if !v.is_empty() => Some(evaluate(&model, v, q)?),
            _ => None,
        };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.5}{}",
            valid
                .map(|m| format!(
                    ", valid auc {:.4} acc {:.4}",
                    m.auc.unwrap_or(f64::NAN),
                    m.acc
                ))
                .unwrap_or_default()
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            valid,
        });
    }
    Ok((model, history))
}
