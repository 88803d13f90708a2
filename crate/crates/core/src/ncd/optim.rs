use serde::{Deserialize, Serialize};

use super::grads::Gradients;
use super::model::{DenseLayer, Matrix, NcdModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// `p -= lr * g`.
    Sgd,
    /// Adam with β₁ = 0.9, β₂ = 0.999. Embedding rows absent from a batch
    /// keep their moments and are not moved.
    #[default]
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(format!(
                "unknown optimizer {other:?} (expected adam or sgd)"
            )),
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Per-run optimizer state.
#[derive(Debug, Clone)]
pub enum OptimState {
    Sgd,
    Adam(Box<AdamState>),
}

#[derive(Debug, Clone)]
pub struct AdamState {
    step: i32,
    theta: (Matrix, Matrix),
    beta: (Matrix, Matrix),
    alpha_raw: (Vec<f64>, Vec<f64>),
    mlp: Vec<(DenseLayer, DenseLayer)>,
}

fn adam(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr_t: f64) {
    for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        *p -= lr_t * *m / (v.sqrt() + ADAM_EPS);
    }
}

impl OptimState {
    pub fn new(kind: Optimizer, model: &NcdModel) -> Self {
        match kind {
            Optimizer::Sgd => OptimState::Sgd,
            Optimizer::Adam => {
                let like = |m: &Matrix| {
                    (
                        Matrix::zeros(m.rows(), m.cols()),
                        Matrix::zeros(m.rows(), m.cols()),
                    )
                };
                let n = model.alpha_raw.len();
                OptimState::Adam(Box::new(AdamState {
                    step: 0,
                    theta: like(&model.theta),
                    beta: like(&model.beta),
                    alpha_raw: (vec![0.0; n], vec![0.0; n]),
                    mlp: model
                        .mlp
                        .iter()
                        .map(|l| {
                            let z = || DenseLayer::zeros(l.inputs(), l.outputs());
                            (z(), z())
                        })
                        .collect(),
                }))
            }
        }
    }

    /// Applies one update with base learning rate `lr`.
    pub fn step(&mut self, model: &mut NcdModel, grads: &Gradients, lr: f64) {
        let st = match self {
            OptimState::Sgd => return grads.apply(model, lr),
            OptimState::Adam(st) => st,
        };
        st.step += 1;
        let t = st.step;
        let lr_t = lr * (1.0 - BETA2.powi(t)).sqrt() / (1.0 - BETA1.powi(t));
        for (&s, g) in &grads.theta {
            let (m, v) = &mut st.theta;
            adam(model.theta.row_mut(s), g, m.row_mut(s), v.row_mut(s), lr_t);
        }
        for (&q, g) in &grads.beta {
            let (m, v) = &mut st.beta;
            adam(model.beta.row_mut(q), g, m.row_mut(q), v.row_mut(q), lr_t);
        }
        for (&q, &g) in &grads.alpha_raw {
            let (m, v) = &mut st.alpha_raw;
            adam(
                std::slice::from_mut(&mut model.alpha_raw[q]),
                &[g],
                std::slice::from_mut(&mut m[q]),
                std::slice::from_mut(&mut v[q]),
                lr_t,
            );
        }
        for ((layer, g), (m, v)) in model.mlp.iter_mut().zip(&grads.mlp).zip(&mut st.mlp) {
            adam(
                layer.weights.as_mut_slice(),
                g.weights.as_slice(),
                m.weights.as_mut_slice(),
                v.weights.as_mut_slice(),
                lr_t,
            );
            adam(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias, lr_t);
        }
    }
}
