//! Offline adaptive-testing simulation.
//!
//! Each sampled student starts from a fresh ability row (all zeros) and
//! answers the items a policy picks. Answers come from the student's
//! held-out log when the item is there, otherwise from a Bernoulli draw at
//! the probability predicted under the trained ability row. The draw for a
//! `(student, item)` pair depends only on the seed, so every policy sees the
//! same answers. After each step the error is the RMSE between current and
//! trained mastery over the knowledge points the student practised.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::becat::{update_ability, SelectionConfig, SelectionState};
use crate::data::{split_dataset, QMatrix, ResponseDataset};
use crate::error::{Error, Result};
use crate::ncd::{sigmoid, NcdModel};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Mixed EMC and coverage gain.
    Becat,
    Random,
    /// EMC only.
    Emc,
    /// Coverage gain only.
    Gain,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Becat, Policy::Random, Policy::Emc, Policy::Gain];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Becat => "becat",
            Policy::Random => "random",
            Policy::Emc => "emc",
            Policy::Gain => "gain",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown policy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_students: usize,
    pub budget: usize,
    pub seed: u64,
    /// Must match the split used for training.
    pub test_fraction: f64,
    pub selection: SelectionConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_students: 100,
            budget: 10,
            seed: 0,
            test_fraction: 0.2,
            selection: SelectionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentRun {
    pub student: usize,
    pub items: Vec<usize>,
    pub answers: Vec<bool>,
    /// Answers taken from the held-out log rather than drawn.
    pub logged_answers: usize,
    pub initial_error: f64,
    /// Error after each step.
    pub errors: Vec<f64>,
}

impl StudentRun {
    pub fn final_error(&self) -> f64 {
        self.errors.last().copied().unwrap_or(self.initial_error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub policy: Policy,
    pub budget: usize,
    pub seed: u64,
    pub n_students: usize,
    pub mean_initial_error: f64,
    /// Mean error after each step; empty for a zero budget.
    pub mean_error_curve: Vec<f64>,
    pub mean_final_error: f64,
    pub students: Vec<StudentRun>,
}

/// One-sided paired sign test that the first sample is smaller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// `P(X ≥ wins)` for `X ~ Binomial(wins + losses, 1/2)`.
    pub p_value: f64,
}

pub fn sign_test(a: &[f64], b: &[f64]) -> Result<SignTest> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let wins = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let ties = a.len() - wins - losses;
    Ok(SignTest {
        wins,
        losses,
        ties,
        p_value: binomial_upper_tail(wins + losses, wins),
    })
}

/// `P(X ≥ k)` for `X ~ Binomial(n, 1/2)`, summed in log space.
fn binomial_upper_tail(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, i| {
            *acc += (i as f64).ln();
            Some(*acc)
        }))
        .collect();
    let half = (n as f64) * 0.5f64.ln();
    (k..=n)
        .map(|j| (ln_fact[n] - ln_fact[j] - ln_fact[n - j] + half).exp())
        .sum::<f64>()
        .min(1.0)
}

/// Chosen students and their held-out answers.
struct Plan {
    students: Vec<usize>,
    held_out: HashMap<usize, HashMap<usize, bool>>,
    practised: HashMap<usize, BTreeSet<usize>>,
}

fn plan(data: &ResponseDataset, q: &QMatrix, cfg: &SimConfig) -> Result<Plan> {
    let (_, test) = split_dataset(data, cfg.test_fraction)?;
    let mut held_out: HashMap<usize, HashMap<usize, bool>> = HashMap::new();
    for r in &test.records {
        held_out
            .entry(r.student)
            .or_default()
            .insert(r.item, r.correct);
    }
    let mut practised: HashMap<usize, BTreeSet<usize>> = HashMap::new();
    for r in &data.records {
        practised
            .entry(r.student)
            .or_default()
            .extend(q.get(r.item)?.iter().copied());
    }
    let mut students: Vec<usize> = held_out.keys().copied().collect();
    students.sort_unstable();
    students.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    students.truncate(cfg.n_students);
    students.sort_unstable();
    Ok(Plan {
        students,
        held_out,
        practised,
    })
}

fn drawn_answer(seed: u64, student: usize, item: usize, p: f64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((student as u64) << 32) | item as u64);
    rng.random::<f64>() < p
}

fn mastery_rmse(ability: &[f64], reference: &[f64], ks: &BTreeSet<usize>) -> f64 {
    if ks.is_empty() {
        return 0.0;
    }
    let sq: f64 = ks
        .iter()
        .map(|&k| (sigmoid(ability[k]) - sigmoid(reference[k])).powi(2))
        .sum();
    (sq / ks.len() as f64).sqrt()
}

fn run_student(
    model: &NcdModel,
    q: &QMatrix,
    plan: &Plan,
    student: usize,
    policy: Policy,
    cfg: &SimConfig,
) -> Result<StudentRun> {
    let reference = model.theta.row(student);
    let ks = &plan.practised[&student];
    let logged = &plan.held_out[&student];
    let pool: Vec<usize> = (0..q.n_items())
        .filter(|&i| q.row(i).iter().any(|k| ks.contains(k)))
        .collect();
    let mut ability = vec![0.0; model.n_knowledge()];
    let initial_error = mastery_rmse(&ability, reference, ks);
    let mut run = StudentRun {
        student,
        items: Vec::new(),
        answers: Vec::new(),
        logged_answers: 0,
        initial_error,
        errors: Vec::new(),
    };
    let budget = cfg.budget.min(pool.len());
    let answer = |item: usize, run: &mut StudentRun| -> Result<bool> {
        Ok(match logged.get(&item) {
            Some(&c) => {
                run.logged_answers += 1;
                c
            }
            None => drawn_answer(
                cfg.seed,
                student,
                item,
                model.predict(student, item, q.get(item)?)?,
            ),
        })
    };

    let lambda = match policy {
        Policy::Becat => Some(cfg.selection.lambda_mix),
        Policy::Emc => Some(1.0),
        Policy::Gain => Some(0.0),
        Policy::Random => None,
    };
    match lambda {
        Some(lambda_mix) if budget > 0 => {
            let sel = SelectionConfig {
                lambda_mix,
                budget,
                seed: cfg.seed ^ (student as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                ..cfg.selection.clone()
            };
            let mut state = SelectionState::new(model, q, ability, &pool, &sel)?;
            while !state.is_exhausted() {
                let item = state.select_next(model, q)?.item;
                let correct = answer(item, &mut run)?;
                state.observe(model, q, item, correct)?;
                run.items.push(item);
                run.answers.push(correct);
                run.errors.push(mastery_rmse(&state.ability, reference, ks));
            }
        }
        Some(_) => {}
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream((1u64 << 63) | student as u64);
            let mut order = pool;
            order.shuffle(&mut rng);
            for &item in order.iter().take(budget) {
                let correct = answer(item, &mut run)?;
                ability = update_ability(
                    model,
                    &ability,
                    item,
                    q.get(item)?,
                    correct,
                    cfg.selection.ability_lr,
                )?;
                run.items.push(item);
                run.answers.push(correct);
                run.errors.push(mastery_rmse(&ability, reference, ks));
            }
        }
    }
    Ok(run)
}

/// Runs `policy` for up to `cfg.n_students` students that have held-out
/// records. Students are processed in parallel; the report does not
/// depend on scheduling.
pub fn simulate(
    model: &NcdModel,
    q: &QMatrix,
    data: &ResponseDataset,
    policy: Policy,
    cfg: &SimConfig,
) -> Result<SimReport> {
    model.check_compatible(q)?;
    data.validate()?;
    cfg.selection.validate()?;
    let plan = plan(data, q, cfg)?;
    let students = par::map_slice(&plan.students, |&s| {
        run_student(model, q, &plan, s, policy, cfg)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let n = students.len();
    let mean = |f: &dyn Fn(&StudentRun) -> f64| {
        if n == 0 {
            0.0
        } else {
            students.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let steps = students.iter().map(|r| r.errors.len()).min().unwrap_or(0);
    let mean_error_curve = (0..steps).map(|t| mean(&|r| r.errors[t])).collect();
    Ok(SimReport {
        policy,
        budget: cfg.budget,
        seed: cfg.seed,
        n_students: n,
        mean_initial_error: mean(&|r| r.initial_error),
        mean_final_error: mean(&|r| r.final_error()),
        mean_error_curve,
        students,
    })
}
