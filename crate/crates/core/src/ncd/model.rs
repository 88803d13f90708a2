use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::data::{check_index, IdMaps, QMatrix};
use crate::error::{Error, Result};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)`, stable for large `|z|`.
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else if z < -30.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

/// Dense row-major matrix. Serialized as an array of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, String> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err("ragged matrix".into());
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.data
            .chunks(m.cols.max(1))
            .map(<[f64]>::to_vec)
            .take(m.rows)
            .collect()
    }
}

/// `out = σ(W in + b)` for hidden layers; the last layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out × in`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseLayer {
            weights: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_students: usize,
    pub n_items: usize,
    pub n_knowledge: usize,
    pub hidden_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcdModel {
    pub dims: Dims,
    /// `n_students × n_knowledge`.
    pub theta: Matrix,
    /// `n_items × n_knowledge`.
    pub beta: Matrix,
    pub alpha_raw: Vec<f64>,
    pub mlp: Vec<DenseLayer>,
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Covered knowledge points, ascending.
    pub mask: Vec<usize>,
    /// `σ(θ_s[k])` for `k` in `mask`.
    pub ability: Vec<f64>,
    /// `σ(β_q[k])` for `k` in `mask`.
    pub difficulty: Vec<f64>,
    /// Nonzero entries of the interaction feature, aligned with `mask`.
    pub x: Vec<f64>,
    pub alpha: f64,
    /// Output of each hidden layer.
    pub hidden: Vec<Vec<f64>>,
    pub logit: f64,
    pub p: f64,
}

impl NcdModel {
    /// Parameters drawn from `uniform(-scale, scale)` in a fixed order
    /// (θ, β, α, then each layer's weights and bias), followed by the
    /// non-negativity projection of the MLP weights.
    pub fn init<R: Rng>(dims: Dims, scale: f64, rng: &mut R) -> Self {
        let mut draw = || rng.random_range(-scale..=scale);
        let d = dims.n_knowledge;
        let theta = Matrix::from_fn(dims.n_students, d, |_, _| draw());
        let beta = Matrix::from_fn(dims.n_items, d, |_, _| draw());
        let alpha_raw = (0..dims.n_items).map(|_| draw()).collect();
        let mut mlp = Vec::new();
        let mut fan_in = d;
        for &out in dims.hidden_sizes.iter().chain(std::iter::once(&1)) {
            let weights = Matrix::from_fn(out, fan_in, |_, _| draw());
            let bias = (0..out).map(|_| draw()).collect();
            mlp.push(DenseLayer { weights, bias });
            fan_in = out;
        }
        let mut model = NcdModel {
            dims,
            theta,
            beta,
            alpha_raw,
            mlp,
            train_config: None,
            seed: None,
        };
        model.project();
        model
    }

    pub fn n_knowledge(&self) -> usize {
        self.dims.n_knowledge
    }

    /// Clamps negative MLP weights to zero. Biases are unconstrained.
    pub fn project(&mut self) {
        for layer in &mut self.mlp {
            for w in layer.weights.as_mut_slice() {
                if *w < 0.0 {
                    *w = 0.0;
                }
            }
        }
    }

    pub fn alpha(&self, item: usize) -> f64 {
        softplus(self.alpha_raw[item])
    }

    /// Checks that every stored shape agrees with `dims`.
    pub fn validate(&self) -> Result<()> {
        let d = self.dims.n_knowledge;
        let mismatch = |what: String| Err(Error::DimensionMismatch(what));
        if self.theta.rows() != self.dims.n_students || self.theta.cols() != d {
            return mismatch(format!(
                "theta is {}x{}, expected {}x{d}",
                self.theta.rows(),
                self.theta.cols(),
                self.dims.n_students
            ));
        }
        if self.beta.rows() != self.dims.n_items || self.beta.cols() != d {
            return mismatch(format!(
                "beta is {}x{}, expected {}x{d}",
                self.beta.rows(),
                self.beta.cols(),
                self.dims.n_items
            ));
        }
        if self.alpha_raw.len() != self.dims.n_items {
            return mismatch(format!("alpha_raw has {} entries", self.alpha_raw.len()));
        }
        if self.mlp.len() != self.dims.hidden_sizes.len() + 1 {
            return mismatch(format!("{} MLP layers", self.mlp.len()));
        }
        let mut fan_in = d;
        for (i, layer) in self.mlp.iter().enumerate() {
            let out = self.dims.hidden_sizes.get(i).copied().unwrap_or(1);
            if layer.inputs() != fan_in || layer.outputs() != out || layer.bias.len() != out {
                return mismatch(format!(
                    "layer {i} is {}x{} with {} biases, expected {out}x{fan_in}",
                    layer.outputs(),
                    layer.inputs(),
                    layer.bias.len()
                ));
            }
            fan_in = out;
        }
        Ok(())
    }

    fn check_ids(&self, student: Option<usize>, item: usize, q_row: &[usize]) -> Result<()> {
        if let Some(s) = student {
            check_index("student", s, self.dims.n_students)?;
        }
        check_index("item", item, self.dims.n_items)?;
        if q_row.is_empty() {
            return Err(Error::EmptyKnowledgeRow(item.to_string()));
        }
        for &k in q_row {
            check_index("knowledge", k, self.dims.n_knowledge)?;
        }
        Ok(())
    }

    /// Forward pass for an explicit ability row. `q_row` must be sorted and
    /// in range; see [`NcdModel::predict`] for the checked entry point.
    pub fn trace(&self, ability_row: &[f64], item: usize, q_row: &[usize]) -> Trace {
        let alpha = self.alpha(item);
        let beta = self.beta.row(item);
        let mut ability = Vec::with_capacity(q_row.len());
        let mut difficulty = Vec::with_capacity(q_row.len());
        let mut x = Vec::with_capacity(q_row.len());
        for &k in q_row {
            let u = sigmoid(ability_row[k]);
            let v = sigmoid(beta[k]);
            ability.push(u);
            difficulty.push(v);
            x.push(alpha * (u - v));
        }

        let n_layers = self.mlp.len();
        let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(n_layers - 1);
        let mut logit = 0.0;
        for (l, layer) in self.mlp.iter().enumerate() {
            let mut out = layer.bias.clone();
            if l == 0 {
                for (j, o) in out.iter_mut().enumerate() {
                    let w = layer.weights.row(j);
                    for (m, &k) in q_row.iter().enumerate() {
                        *o += w[k] * x[m];
                    }
                }
            } else {
                let input = &hidden[l - 1];
                for (j, o) in out.iter_mut().enumerate() {
                    *o += dot(layer.weights.row(j), input);
                }
            }
            if l + 1 == n_layers {
                logit = out[0];
            } else {
                out.iter_mut().for_each(|v| *v = sigmoid(*v));
                hidden.push(out);
            }
        }
        Trace {
            mask: q_row.to_vec(),
            ability,
            difficulty,
            x,
            alpha,
            hidden,
            logit,
            p: sigmoid(logit),
        }
    }

    /// The interaction feature as a dense vector of length `n_knowledge`.
    pub fn interaction(&self, student: usize, item: usize, q_row: &[usize]) -> Result<Vec<f64>> {
        self.check_ids(Some(student), item, q_row)?;
        let t = self.trace(self.theta.row(student), item, q_row);
        let mut x = vec![0.0; self.dims.n_knowledge];
        for (m, &k) in t.mask.iter().enumerate() {
            x[k] = t.x[m];
        }
        Ok(x)
    }

    /// Probability that `student` answers `item` correctly.
    pub fn predict(&self, student: usize, item: usize, q_row: &[usize]) -> Result<f64> {
        self.check_ids(Some(student), item, q_row)?;
        Ok(self.trace(self.theta.row(student), item, q_row).p)
    }

    /// Same as [`NcdModel::predict`] for an ability row held outside the
    /// model (a session-local copy, for instance).
    pub fn predict_with(&self, ability_row: &[f64], item: usize, q_row: &[usize]) -> Result<f64> {
        if ability_row.len() != self.dims.n_knowledge {
            return Err(Error::DimensionMismatch(format!(
                "ability row has {} entries, expected {}",
                ability_row.len(),
                self.dims.n_knowledge
            )));
        }
        self.check_ids(None, item, q_row)?;
        Ok(self.trace(ability_row, item, q_row).p)
    }

    pub fn check_compatible(&self, q: &QMatrix) -> Result<()> {
        if q.n_items() != self.dims.n_items || q.n_knowledge() != self.dims.n_knowledge {
            return Err(Error::DimensionMismatch(format!(
                "model has {} items x {} knowledge points, Q-matrix has {} x {}",
                self.dims.n_items,
                self.dims.n_knowledge,
                q.n_items(),
                q.n_knowledge()
            )));
        }
        Ok(())
    }

    /// Backpropagates `d loss / d logit` to the nonzero entries of `x`.
    /// When `layer_grads` is given, weight and bias gradients are added
    /// into it.
    pub(crate) fn backprop(
        &self,
        t: &Trace,
        dlogit: f64,
        mut layer_grads: Option<&mut [DenseLayer]>,
    ) -> Vec<f64> {
        let n_layers = self.mlp.len();
        // delta holds d loss / d (pre-activation) of the current layer.
        let mut delta = vec![dlogit];
        for l in (0..n_layers).rev() {
            let layer = &self.mlp[l];
            if let Some(g) = layer_grads.as_deref_mut() {
                let g = &mut g[l];
                for (j, &dj) in delta.iter().enumerate() {
                    g.bias[j] += dj;
                    let row = g.weights.row_mut(j);
                    if l == 0 {
                        for (m, &k) in t.mask.iter().enumerate() {
                            row[k] += dj * t.x[m];
                        }
                    } else {
                        for (w, &h) in row.iter_mut().zip(&t.hidden[l - 1]) {
                            *w += dj * h;
                        }
                    }
                }
            }
            if l == 0 {
                return t
                    .mask
                    .iter()
                    .map(|&k| {
                        delta
                            .iter()
                            .enumerate()
                            .map(|(j, &dj)| dj * layer.weights.get(j, k))
                            .sum()
                    })
                    .collect();
            }
            let h = &t.hidden[l - 1];
            let mut next = vec![0.0; layer.inputs()];
            for (j, &dj) in delta.iter().enumerate() {
                for (n, &w) in next.iter_mut().zip(layer.weights.row(j)) {
                    *n += dj * w;
                }
            }
            for (n, &hv) in next.iter_mut().zip(h) {
                *n *= hv * (1.0 - hv);
            }
            delta = next;
        }
        unreachable!("model has at least one layer")
    }

    /// `∇_θ logit` as a dense vector over knowledge points.
    pub fn ability_logit_gradient(&self, t: &Trace) -> Vec<f64> {
        let dx = self.backprop(t, 1.0, None);
        let mut g = vec![0.0; self.dims.n_knowledge];
        for (m, &k) in t.mask.iter().enumerate() {
            let u = t.ability[m];
            g[k] = dx[m] * t.alpha * u * (1.0 - u);
        }
        g
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(self).map_err(|e| Error::json("serializing model", e))?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let model: NcdModel = serde_json::from_slice(&bytes)
            .map_err(|e| Error::json(path.display().to_string(), e))?;
        model.validate()?;
        Ok(model)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-student, per-knowledge mastery `σ(θ_s[k])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasteryTable {
    pub values: Matrix,
}

pub fn mastery_table(model: &NcdModel) -> MasteryTable {
    let theta = &model.theta;
    MasteryTable {
        values: Matrix::from_fn(theta.rows(), theta.cols(), |s, k| sigmoid(theta.get(s, k))),
    }
}

impl MasteryTable {
    pub fn row(&self, student: usize) -> &[f64] {
        self.values.row(student)
    }

    /// `student_id,skill_id,mastery` with raw ids.
    pub fn write_csv(&self, path: &Path, maps: &IdMaps) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["student_id", "skill_id", "mastery"])
            .map_err(|e| Error::csv(path, e))?;
        for s in 0..self.values.rows() {
            for k in 0..self.values.cols() {
                w.write_record([
                    maps.raw_student(s),
                    maps.raw_knowledge(k),
                    &self.values.get(s, k).to_string(),
                ])
                .map_err(|e| Error::csv(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
