//! Central finite-difference check of the analytic gradients.

use super::grads::{batch_gradients, Gradients};
use super::metrics::record_loss;
use super::model::NcdModel;
use crate::data::{QMatrix, ResponseRecord};
use crate::error::{Error, Result};

/// Lower bound on the relative-error denominator. Partials smaller than this
/// are compared in absolute terms, where central-difference roundoff
/// (around 1e-10 at a step of 1e-5) would otherwise dominate.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

fn mean_loss(model: &NcdModel, records: &[ResponseRecord], q: &QMatrix) -> f64 {
    let sum: f64 = records
        .iter()
        .map(|r| {
            let t = model.trace(model.theta.row(r.student), r.item, q.row(r.item));
            record_loss(t.p, r.label())
        })
        .sum();
    sum / records.len() as f64
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

/// Largest relative error between the analytic gradient of the mean loss
/// over `records` and central differences with step `epsilon`.
pub fn grad_check(
    model: &NcdModel,
    records: &[ResponseRecord],
    q: &QMatrix,
    epsilon: f64,
) -> Result<f64> {
    let (grads, _) = batch_gradients(model, records, q);
    grad_check_with(model, records, q, epsilon, &grads)
}

/// Like [`grad_check`] but against a caller-supplied gradient.
///
/// Checked parameters: every entry of the θ and β rows and the
/// discrimination of each student and item in `records`, and every MLP
/// weight and bias.
pub fn grad_check_with(
    model: &NcdModel,
    records: &[ResponseRecord],
    q: &QMatrix,
    epsilon: f64,
    analytic: &Gradients,
) -> Result<f64> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step {epsilon} outside [1e-6, 1e-3]"
        )));
    }
    if records.is_empty() {
        return Ok(0.0);
    }
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let mut check =
        |probe: &mut NcdModel, get: &dyn Fn(&mut NcdModel) -> &mut f64, analytic: f64| {
            let orig = *get(probe);
            *get(probe) = orig + epsilon;
            let plus = mean_loss(probe, records, q);
            *get(probe) = orig - epsilon;
            let minus = mean_loss(probe, records, q);
            *get(probe) = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            worst = worst.max(rel_error(analytic, numeric));
        };

    let d = model.n_knowledge();
    let mut students: Vec<usize> = records.iter().map(|r| r.student).collect();
    students.sort_unstable();
    students.dedup();
    let mut items: Vec<usize> = records.iter().map(|r| r.item).collect();
    items.sort_unstable();
    items.dedup();

    for &s in &students {
        for k in 0..d {
            let a = analytic.theta.get(&s).map_or(0.0, |row| row[k]);
            check(
                &mut probe,
                &move |m: &mut NcdModel| &mut m.theta.row_mut(s)[k],
                a,
            );
        }
    }
    for &i in &items {
        for k in 0..d {
            let a = analytic.beta.get(&i).map_or(0.0, |row| row[k]);
            check(
                &mut probe,
                &move |m: &mut NcdModel| &mut m.beta.row_mut(i)[k],
                a,
            );
        }
        let a = analytic.alpha_raw.get(&i).copied().unwrap_or(0.0);
        check(&mut probe, &move |m: &mut NcdModel| &mut m.alpha_raw[i], a);
    }
    for (l, layer) in analytic.mlp.iter().enumerate() {
        for (w, &a) in layer.weights.as_slice().iter().enumerate() {
            check(
                &mut probe,
                &move |m: &mut NcdModel| &mut m.mlp[l].weights.as_mut_slice()[w],
                a,
            );
        }
        for (b, &a) in layer.bias.iter().enumerate() {
            check(
                &mut probe,
                &move |m: &mut NcdModel| &mut m.mlp[l].bias[b],
                a,
            );
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ncd::Dims;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture(seed: u64) -> (NcdModel, Vec<ResponseRecord>, QMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n_s, n_i, d) = (5, 6, 4);
        let q = QMatrix::from_rows(
            (0..n_i)
                .map(|i| {
                    let mut row = vec![i % d];
                    if i % 2 == 0 {
                        row.push((i + 1) % d);
                    }
                    row
                })
                .collect(),
            d,
        )
        .unwrap();
        let dims = Dims {
            n_students: n_s,
            n_items: n_i,
            n_knowledge: d,
            hidden_sizes: vec![6, 3],
        };
        let model = NcdModel::init(dims, 0.5, &mut rng);
        let records = (0..16)
            .map(|i| ResponseRecord {
                student: rng.random_range(0..n_s),
                item: rng.random_range(0..n_i),
                correct: rng.random(),
                order_index: i,
            })
            .collect();
        (model, records, q)
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        for seed in 0..5 {
            let (model, records, q) = fixture(seed);
            let err = grad_check(&model, &records, &q, 1e-5).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn empty_sample_is_vacuous() {
        let (model, _, q) = fixture(0);
        assert_eq!(grad_check(&model, &[], &q, 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn flipped_sign_is_caught() {
        let (model, records, q) = fixture(1);
        let (mut grads, _) = batch_gradients(&model, &records, &q);
        let b = &mut grads.mlp.last_mut().unwrap().bias[0];
        assert!(b.abs() > 1e-6);
        *b = -*b;
        let err = grad_check_with(&model, &records, &q, 1e-5, &grads).unwrap();
        assert!(err > 0.1, "{err}");
    }

    #[test]
    fn step_out_of_range_is_rejected() {
        let (model, records, q) = fixture(0);
        assert!(grad_check(&model, &records, &q, 1e-2).is_err());
    }
}
