//! Synthetic raw exports in the ASSISTments skill-builder layout.
//!
//! Students hold a general ability plus per-skill offsets; items carry a
//! difficulty and a discrimination and are tagged with one or two skills.
//! Correctness follows a logistic response curve with a small practice
//! effect. A share of rows is deliberately dirty (missing skill tag,
//! partial credit) so the cleaning path is exercised.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ncd::sigmoid;

pub const RAW_LOG: &str = "skill_builder.csv";
pub const RAW_ITEM_TEXTS: &str = "problem_texts.csv";
pub const RAW_GRAPH: &str = "skill_graph.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_students: usize,
    pub n_skills: usize,
    pub n_items: usize,
    pub mean_attempts: usize,
    /// Share of items tagged with a second skill.
    pub multi_skill_fraction: f64,
    /// Share of rows corrupted.
    pub dirty_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_students: 2000,
            n_skills: 60,
            n_items: 1500,
            mean_attempts: 25,
            multi_skill_fraction: 0.15,
            dirty_fraction: 0.02,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub rows: usize,
    pub attempts: usize,
    pub dirty_rows: usize,
    pub students: usize,
    pub items: usize,
    pub skills: usize,
    pub graph_edges: usize,
    pub mean_correct: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthFiles {
    pub log: PathBuf,
    pub item_texts: PathBuf,
    pub graph: PathBuf,
}

const TOPICS: [&str; 30] = [
    "Addition and Subtraction Integers",
    "Addition and Subtraction Fractions",
    "Multiplication and Division Integers",
    "Multiplication Fractions",
    "Division Fractions",
    "Equivalent Fractions",
    "Ordering Fractions",
    "Ordering Real Numbers",
    "Absolute Value",
    "Order of Operations",
    "Exponents",
    "Square Root",
    "Scientific Notation",
    "Percent Of",
    "Proportion",
    "Unit Rate",
    "Ratio",
    "Area Rectangle",
    "Area Triangle",
    "Circumference",
    "Volume Cylinder",
    "Pythagorean Theorem",
    "Angles on Parallel Lines",
    "Reading Graph",
    "Mean",
    "Median",
    "Probability of a Single Event",
    "Equation Solving Two or Fewer Steps",
    "Slope",
    "Venn Diagram",
];

fn skill_name(k: usize) -> String {
    let base = TOPICS[k % TOPICS.len()];
    match k / TOPICS.len() {
        0 => base.to_owned(),
        level => format!("{base} (level {})", level + 1),
    }
}

struct World {
    skill_ids: Vec<u32>,
    item_ids: Vec<u32>,
    item_skills: Vec<Vec<usize>>,
    items_of_skill: Vec<Vec<usize>>,
    difficulty: Vec<f64>,
    discrimination: Vec<f64>,
    edges: Vec<(usize, usize)>,
}

fn world(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> World {
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut skill_ids: Vec<u32> = (1..=(cfg.n_skills as u32 * 5)).collect();
    skill_ids.shuffle(rng);
    skill_ids.truncate(cfg.n_skills);
    let mut item_ids: Vec<u32> = (0..cfg.n_items as u32 * 4).map(|i| 40_000 + i).collect();
    item_ids.shuffle(rng);
    item_ids.truncate(cfg.n_items);

    let mut item_skills = Vec::with_capacity(cfg.n_items);
    let mut items_of_skill = vec![Vec::new(); cfg.n_skills];
    for i in 0..cfg.n_items {
        let primary = i % cfg.n_skills;
        let mut ks = vec![primary];
        if cfg.n_skills > 1 && rng.random::<f64>() < cfg.multi_skill_fraction {
            let other = (primary + rng.random_range(1..cfg.n_skills)) % cfg.n_skills;
            ks.push(other);
        }
        for &k in &ks {
            items_of_skill[k].push(i);
        }
        item_skills.push(ks);
    }
    let difficulty = (0..cfg.n_items).map(|_| std.sample(rng) - 0.9).collect();
    let discrimination = (0..cfg.n_items)
        .map(|_| rng.random_range(0.8..2.0))
        .collect();
    let mut edges = Vec::new();
    for k in 1..cfg.n_skills {
        if rng.random::<f64>() < 0.7 {
            let lo = k.saturating_sub(5);
            edges.push((rng.random_range(lo..k), k));
        }
    }
    World {
        skill_ids,
        item_ids,
        item_skills,
        items_of_skill,
        difficulty,
        discrimination,
        edges,
    }
}

fn io(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Csv {
        path: path.to_owned(),
        source: e,
    }
}

/// Writes a raw log, a problem text table and a skill prerequisite table
/// into `dir`. The same config always produces the same bytes.
pub fn write_synthetic(dir: &Path, cfg: &SynthConfig) -> Result<(SynthFiles, SynthReport)> {
    if cfg.n_students == 0
        || cfg.n_skills == 0
        || cfg.n_items < cfg.n_skills
        || cfg.mean_attempts < 2
    {
        return Err(Error::InvalidConfig(
            "synthetic data needs students, skills, at least one item per skill and a mean of 2+ attempts"
                .into(),
        ));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_owned(),
        source: e,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let w = world(cfg, &mut rng);
    let std = Normal::new(0.0, 1.0).expect("unit normal");

    let files = SynthFiles {
        log: dir.join(RAW_LOG),
        item_texts: dir.join(RAW_ITEM_TEXTS),
        graph: dir.join(RAW_GRAPH),
    };
    let mut report = SynthReport {
        students: cfg.n_students,
        items: cfg.n_items,
        skills: cfg.n_skills,
        ..SynthReport::default()
    };

    // (order_id, user, item, skill column, correct column)
    let mut rows: Vec<(u64, u32, usize, String, String)> = Vec::new();
    let mut order: u64 = 20_000_000;
    let mut n_correct = 0usize;
    for s in 0..cfg.n_students {
        let user = 70_000 + s as u32 * 3;
        let general = 1.1 * std.sample(&mut rng);
        let offset: Vec<f64> = (0..cfg.n_skills)
            .map(|_| 0.6 * std.sample(&mut rng))
            .collect();
        let n_topics = rng.random_range(2..=5usize.min(cfg.n_skills.max(2)));
        let mut topics: Vec<usize> = (0..cfg.n_skills).collect();
        topics.shuffle(&mut rng);
        topics.truncate(n_topics.min(cfg.n_skills));
        let n_attempts = rng.random_range(cfg.mean_attempts / 2..=cfg.mean_attempts * 3 / 2);
        let mut practice = vec![0usize; cfg.n_skills];
        for _ in 0..n_attempts {
            let k = topics[rng.random_range(0..topics.len())];
            let pool = &w.items_of_skill[k];
            let item = pool[rng.random_range(0..pool.len())];
            let ks = &w.item_skills[item];
            let ability = ks
                .iter()
                .map(|&j| general + offset[j] + 0.03 * practice[j] as f64)
                .sum::<f64>()
                / ks.len() as f64;
            let p = sigmoid(w.discrimination[item] * (ability - w.difficulty[item]));
            let correct = rng.random::<f64>() < p;
            n_correct += usize::from(correct);
            for &j in ks {
                practice[j] += 1;
            }
            order += rng.random_range(1..40u64);
            report.attempts += 1;
            for &j in ks {
                let mut skill = w.skill_ids[j].to_string();
                let mut value = u8::from(correct).to_string();
                if rng.random::<f64>() < cfg.dirty_fraction {
                    report.dirty_rows += 1;
                    if rng.random::<bool>() {
                        skill.clear();
                    } else {
                        value = "0.5".into();
                    }
                }
                rows.push((order, user, item, skill, value));
            }
        }
    }
    report.mean_correct = n_correct as f64 / report.attempts.max(1) as f64;
    // Exports are ordered by time across students.
    rows.sort_by_key(|r| r.0);
    report.rows = rows.len();

    let mut out = csv::Writer::from_path(&files.log).map_err(io(&files.log))?;
    out.write_record([
        "order_id",
        "assignment_id",
        "user_id",
        "problem_id",
        "original",
        "correct",
        "attempt_count",
        "skill_id",
        "skill_name",
    ])
    .map_err(io(&files.log))?;
    let names: Vec<String> = (0..cfg.n_skills).map(skill_name).collect();
    for (order, user, item, skill, correct) in &rows {
        let name = w
            .skill_ids
            .iter()
            .position(|id| id.to_string() == *skill)
            .map(|k| names[k].as_str())
            .unwrap_or("");
        let attempts = if correct == "1" { "1" } else { "2" };
        out.write_record([
            order.to_string().as_str(),
            (30_000 + item % 97).to_string().as_str(),
            user.to_string().as_str(),
            w.item_ids[*item].to_string().as_str(),
            "1",
            correct.as_str(),
            attempts,
            skill.as_str(),
            name,
        ])
        .map_err(io(&files.log))?;
    }
    out.flush().map_err(|e| Error::io(&files.log, e))?;

    let mut out = csv::Writer::from_path(&files.item_texts).map_err(io(&files.item_texts))?;
    out.write_record(["problem_id", "text"])
        .map_err(io(&files.item_texts))?;
    for (i, ks) in w.item_skills.iter().enumerate() {
        let a = 2 + (w.item_ids[i] % 17);
        let b = 3 + (w.item_ids[i] % 11);
        let topics: Vec<&str> = ks.iter().map(|&k| names[k].as_str()).collect();
        let text = format!(
            "{}: work with the numbers {a} and {b} and give your answer in simplest form.",
            topics.join(" / ")
        );
        out.write_record([w.item_ids[i].to_string().as_str(), text.as_str()])
            .map_err(io(&files.item_texts))?;
    }
    out.flush().map_err(|e| Error::io(&files.item_texts, e))?;

    let mut out = csv::Writer::from_path(&files.graph).map_err(io(&files.graph))?;
    out.write_record(["src_skill_id", "dst_skill_id", "relation"])
        .map_err(io(&files.graph))?;
    for &(src, dst) in &w.edges {
        out.write_record([
            w.skill_ids[src].to_string().as_str(),
            w.skill_ids[dst].to_string().as_str(),
            "prerequisite",
        ])
        .map_err(io(&files.graph))?;
    }
    // A retired skill that never appears in the log.
    out.write_record(["999999", &w.skill_ids[0].to_string(), "prerequisite"])
        .map_err(io(&files.graph))?;
    out.flush().map_err(|e| Error::io(&files.graph, e))?;
    report.graph_edges = w.edges.len();

    Ok((files, report))
}
