//! Cleaning raw response exports (ASSISTments layout by default).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    IdMap, IdMaps, KnowledgeEdge, KnowledgeGraph, Relation, ResponseDataset, ResponseRecord,
};
use crate::error::{Error, Result};

/// Column names in the raw log. `order` and `skill_name` are optional and
/// ignored when the header lacks them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogSchema {
    pub user: String,
    pub item: String,
    pub skill: String,
    pub correct: String,
    pub order: Option<String>,
    pub skill_name: Option<String>,
}

impl Default for LogSchema {
    fn default() -> Self {
        LogSchema {
            user: "user_id".into(),
            item: "problem_id".into(),
            skill: "skill_id".into(),
            correct: "correct".into(),
            order: Some("order_id".into()),
            skill_name: Some("skill_name".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    MissingField,
    NonBinaryCorrect,
    UnparseableCorrect,
    UnparseableOrder,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub records: usize,
    /// Extra rows for an already-seen attempt, carrying another skill tag.
    pub merged_rows: usize,
    pub dropped_total: usize,
    pub dropped: BTreeMap<DropReason, usize>,
    pub n_students: usize,
    pub n_items: usize,
    pub n_knowledge: usize,
    pub q_pairs: usize,
    pub graph_edges: usize,
    pub graph_edges_dropped: usize,
    pub item_texts_loaded: usize,
}

impl IngestReport {
    fn drop_row(&mut self, reason: DropReason) {
        *self.dropped.entry(reason).or_default() += 1;
        self.dropped_total += 1;
    }
}

#[derive(Debug, Clone)]
pub struct ParsedLog {
    pub dataset: ResponseDataset,
    pub maps: IdMaps,
    /// Dense `(item, knowledge)` pairs observed in the log.
    pub item_skills: Vec<(usize, usize)>,
    pub report: IngestReport,
}

pub(crate) struct Header {
    path: std::path::PathBuf,
    columns: HashMap<String, usize>,
}

impl Header {
    pub(crate) fn new(path: &Path, record: &csv::StringRecord) -> Self {
        let columns = record
            .iter()
            .enumerate()
            .map(|(i, name)| (name.trim().trim_start_matches('\u{feff}').to_owned(), i))
            .collect();
        Header {
            path: path.to_owned(),
            columns,
        }
    }

    pub(crate) fn require(&self, name: &str) -> Result<usize> {
        self.columns
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn {
                path: self.path.clone(),
                column: name.to_owned(),
            })
    }

    pub(crate) fn optional(&self, name: Option<&str>) -> Option<usize> {
        name.and_then(|n| self.columns.get(n).copied())
    }
}

pub(crate) fn open_csv(path: &Path) -> Result<(csv::Reader<std::fs::File>, Header)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    Ok((reader, Header::new(path, &header)))
}

fn field(row: &csv::StringRecord, col: usize) -> Option<&str> {
    row.get(col).map(str::trim).filter(|s| !s.is_empty())
}

struct Attempt {
    student: usize,
    item: usize,
    correct: bool,
    order: Option<i64>,
}

/// Reads a raw log, drops unusable rows and densifies ids in first-seen
/// order.
///
/// Rows sharing `(user, order, item)` are one attempt tagged with several
/// skills; they become a single record. Within a student, records are
/// sorted by the order column when present, file order otherwise.
pub fn parse_logs(path: &Path, schema: &LogSchema) -> Result<ParsedLog> {
    let (mut reader, header) = open_csv(path)?;
    let user_col = header.require(&schema.user)?;
    let item_col = header.require(&schema.item)?;
    let skill_col = header.require(&schema.skill)?;
    let correct_col = header.require(&schema.correct)?;
    let order_col = header.optional(schema.order.as_deref());
    let name_col = header.optional(schema.skill_name.as_deref());

    let mut report = IngestReport::default();
    let mut students = IdMap::new();
    let mut items = IdMap::new();
    let mut knowledge = IdMap::new();
    let mut names: Vec<Option<String>> = Vec::new();
    let mut attempts: Vec<Attempt> = Vec::new();
    let mut seen: HashMap<(usize, i64, usize), usize> = HashMap::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();

    for row in reader.records() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        report.rows_read += 1;

        let (Some(user), Some(item), Some(skill), Some(correct)) = (
            field(&row, user_col),
            field(&row, item_col),
            field(&row, skill_col),
            field(&row, correct_col),
        ) else {
            report.drop_row(DropReason::MissingField);
            continue;
        };
        let correct = match correct.parse::<f64>() {
            Ok(0.0) => false,
            Ok(1.0) => true,
            Ok(_) => {
                report.drop_row(DropReason::NonBinaryCorrect);
                continue;
            }
            Err(_) => {
                report.drop_row(DropReason::UnparseableCorrect);
                continue;
            }
        };
        let order = match order_col {
            None => None,
            Some(col) => match field(&row, col) {
                None => {
                    report.drop_row(DropReason::MissingField);
                    continue;
                }
                Some(v) => match v.parse::<i64>() {
                    Ok(v) => Some(v),
                    Err(_) => {
                        report.drop_row(DropReason::UnparseableOrder);
                        continue;
                    }
                },
            },
        };

        let student = students.intern(user);
        let item = items.intern(item);
        let k = knowledge.intern(skill);
        if names.len() < knowledge.len() {
            names.push(None);
        }
        if names[k].is_none() {
            names[k] = name_col.and_then(|c| field(&row, c)).map(str::to_owned);
        }
        pairs.push((item, k));

        if let Some(order) = order {
            if seen.contains_key(&(student, order, item)) {
                report.merged_rows += 1;
                continue;
            }
            seen.insert((student, order, item), attempts.len());
        }
        attempts.push(Attempt {
            student,
            item,
            correct,
            order,
        });
    }

    if attempts.is_empty() {
        return Err(Error::NoUsableRows {
            path: path.to_owned(),
        });
    }

    let mut by_student: Vec<Vec<Attempt>> = (0..students.len()).map(|_| Vec::new()).collect();
    for a in attempts {
        by_student[a.student].push(a);
    }
    let mut records = Vec::new();
    for log in &mut by_student {
        // Stable sort keeps file order among equal order values.
        log.sort_by_key(|a| a.order.unwrap_or(0));
        records.extend(log.iter().enumerate().map(|(i, a)| ResponseRecord {
            student: a.student,
            item: a.item,
            correct: a.correct,
            order_index: i,
        }));
    }

    pairs.sort_unstable();
    pairs.dedup();

    let knowledge_names = names
        .into_iter()
        .enumerate()
        .map(|(k, n)| n.unwrap_or_else(|| format!("Skill {}", knowledge.raw(k).unwrap_or("?"))))
        .collect();
    let item_texts = (0..items.len())
        .map(|i| format!("Problem {}", items.raw(i).unwrap_or("?")))
        .collect();

    let dataset = ResponseDataset {
        n_students: students.len(),
        n_items: items.len(),
        n_knowledge: knowledge.len(),
        records,
    };
    report.records = dataset.records.len();
    report.n_students = dataset.n_students;
    report.n_items = dataset.n_items;
    report.n_knowledge = dataset.n_knowledge;
    report.q_pairs = pairs.len();

    Ok(ParsedLog {
        dataset,
        maps: IdMaps {
            students,
            items,
            knowledge,
            knowledge_names,
            item_texts,
        },
        item_skills: pairs,
        report,
    })
}

/// Reads a `problem_id,text` table into `maps.item_texts`. Rows for items
/// that never appear in the log are skipped. Returns the number applied.
pub fn read_item_texts(path: &Path, maps: &mut IdMaps) -> Result<usize> {
    let (mut reader, header) = open_csv(path)?;
    let item_col = header.require("problem_id")?;
    let text_col = header.require("text")?;
    let mut applied = 0;
    for row in reader.records() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let (Some(item), Some(text)) = (field(&row, item_col), field(&row, text_col)) else {
            continue;
        };
        if let Some(i) = maps.items.get(item) {
            maps.item_texts[i] = text.to_owned();
            applied += 1;
        }
    }
    Ok(applied)
}

/// Reads `src_skill_id,dst_skill_id,relation`.
///
/// With `strict`, unknown ids, self-loops and unknown relation labels are
/// errors; otherwise such rows are skipped and counted in the second return
/// value.
pub fn read_knowledge_graph(
    path: &Path,
    maps: &IdMaps,
    strict: bool,
) -> Result<(KnowledgeGraph, usize)> {
    let (mut reader, header) = open_csv(path)?;
    let src_col = header.require("src_skill_id")?;
    let dst_col = header.require("dst_skill_id")?;
    let rel_col = header.require("relation")?;
    let mut edges = Vec::new();
    let mut dropped = 0;
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let parsed = (|| {
            let src = field(&row, src_col).ok_or("missing src_skill_id")?;
            let dst = field(&row, dst_col).ok_or("missing dst_skill_id")?;
            let rel = field(&row, rel_col).ok_or("missing relation")?;
            let relation = Relation::parse(rel).ok_or("unknown relation")?;
            let src = maps.knowledge.get(src).ok_or("unknown src skill")?;
            let dst = maps.knowledge.get(dst).ok_or("unknown dst skill")?;
            if src == dst {
                return Err("self-loop");
            }
            Ok(KnowledgeEdge { src, dst, relation })
        })();
        match parsed {
            Ok(e) => edges.push(e),
            Err(message) if strict => {
                return Err(Error::BadRow {
                    path: path.to_owned(),
                    line: line as u64 + 2,
                    message: message.to_owned(),
                })
            }
            Err(_) => dropped += 1,
        }
    }
    let before = edges.len();
    let graph = KnowledgeGraph::new(edges, maps.knowledge.len())?;
    dropped += before - graph.len();
    Ok((graph, dropped))
}
