use std::collections::BTreeMap;

use super::metrics::record_loss;
use super::model::{sigmoid, DenseLayer, NcdModel};
use crate::data::{QMatrix, ResponseRecord};
use crate::par;

/// Records per parallel work unit. Fixed so the reduction order, and hence
/// the floating-point result, does not depend on the thread count.
const CHUNK: usize = 64;

/// Gradient of a mean loss. Embedding rows are stored sparsely: only rows
/// touched by the batch appear.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub theta: BTreeMap<usize, Vec<f64>>,
    pub beta: BTreeMap<usize, Vec<f64>>,
    pub alpha_raw: BTreeMap<usize, f64>,
    pub mlp: Vec<DenseLayer>,
}

impl Gradients {
    pub fn zeros(model: &NcdModel) -> Self {
        Gradients {
            theta: BTreeMap::new(),
            beta: BTreeMap::new(),
            alpha_raw: BTreeMap::new(),
            mlp: model
                .mlp
                .iter()
                .map(|l| DenseLayer::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    fn add(&mut self, other: Gradients) {
        for (s, row) in other.theta {
            add_row(
                self.theta.entry(s).or_insert_with(|| vec![0.0; row.len()]),
                &row,
            );
        }
        for (q, row) in other.beta {
            add_row(
                self.beta.entry(q).or_insert_with(|| vec![0.0; row.len()]),
                &row,
            );
        }
        for (q, g) in other.alpha_raw {
            *self.alpha_raw.entry(q).or_default() += g;
        }
        for (mine, theirs) in self.mlp.iter_mut().zip(other.mlp) {
            add_row(mine.weights.as_mut_slice(), theirs.weights.as_slice());
            add_row(&mut mine.bias, &theirs.bias);
        }
    }

    fn scale(&mut self, c: f64) {
        let rows = self.theta.values_mut().chain(self.beta.values_mut());
        rows.flatten().for_each(|v| *v *= c);
        self.alpha_raw.values_mut().for_each(|v| *v *= c);
        for l in &mut self.mlp {
            l.weights.as_mut_slice().iter_mut().for_each(|v| *v *= c);
            l.bias.iter_mut().for_each(|v| *v *= c);
        }
    }

    /// `model -= lr * self`.
    pub fn apply(&self, model: &mut NcdModel, lr: f64) {
        for (&s, g) in &self.theta {
            axpy(model.theta.row_mut(s), -lr, g);
        }
        for (&q, g) in &self.beta {
            axpy(model.beta.row_mut(q), -lr, g);
        }
        for (&q, &g) in &self.alpha_raw {
            model.alpha_raw[q] -= lr * g;
        }
        for (layer, g) in model.mlp.iter_mut().zip(&self.mlp) {
            axpy(layer.weights.as_mut_slice(), -lr, g.weights.as_slice());
            axpy(&mut layer.bias, -lr, &g.bias);
        }
    }

    pub fn is_finite(&self) -> bool {
        let rows = self.theta.values().chain(self.beta.values()).flatten();
        rows.chain(self.alpha_raw.values())
            .chain(
                self.mlp
                    .iter()
                    .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias)),
            )
            .all(|v| v.is_finite())
    }
}

fn add_row(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    for (d, v) in dst.iter_mut().zip(x) {
        *d += a * v;
    }
}

/// Cross-entropy derivative with respect to the logit, `p − label`. The
/// loss clamp does not apply here.
pub(crate) fn dloss_dlogit(p: f64, label: f64) -> f64 {
    p - label
}

/// Adds `weight * ∇ loss(record)` into `grads` and returns the record loss.
fn accumulate(
    model: &NcdModel,
    r: &ResponseRecord,
    q: &QMatrix,
    weight: f64,
    grads: &mut Gradients,
) -> f64 {
    let q_row = q.row(r.item);
    let t = model.trace(model.theta.row(r.student), r.item, q_row);
    let label = r.label();
    let loss = record_loss(t.p, label);
    let dlogit = weight * dloss_dlogit(t.p, label);
    let dx = model.backprop(&t, dlogit, Some(&mut grads.mlp));

    let d = model.n_knowledge();
    let theta = grads.theta.entry(r.student).or_insert_with(|| vec![0.0; d]);
    let beta = grads.beta.entry(r.item).or_insert_with(|| vec![0.0; d]);
    let mut dalpha = 0.0;
    for (m, &k) in t.mask.iter().enumerate() {
        let (u, v) = (t.ability[m], t.difficulty[m]);
        theta[k] += dx[m] * t.alpha * u * (1.0 - u);
        beta[k] -= dx[m] * t.alpha * v * (1.0 - v);
        dalpha += dx[m] * (u - v);
    }
    // d softplus(a) / da = σ(a)
    *grads.alpha_raw.entry(r.item).or_default() += dalpha * sigmoid(model.alpha_raw[r.item]);
    loss
}

/// Gradient of the mean clamped BCE over `records`, and that mean loss.
/// An empty slice yields zero gradients and zero loss.
pub fn batch_gradients(
    model: &NcdModel,
    records: &[ResponseRecord],
    q: &QMatrix,
) -> (Gradients, f64) {
    if records.is_empty() {
        return (Gradients::zeros(model), 0.0);
    }
    let partials = par::map_chunks(records, CHUNK, |chunk| {
        let mut g = Gradients::zeros(model);
        let loss: f64 = chunk
            .iter()
            .map(|r| accumulate(model, r, q, 1.0, &mut g))
            .sum();
        (g, loss)
    });
    let mut total = Gradients::zeros(model);
    let mut loss = 0.0;
    for (g, l) in partials {
        total.add(g);
        loss += l;
    }
    let n = records.len() as f64;
    total.scale(1.0 / n);
    (total, loss / n)
}
