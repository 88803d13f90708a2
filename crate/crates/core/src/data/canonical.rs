//! The canonical on-disk layout shared by training, selection and serving.
//!
//! All files carry raw ids. Dense indices are recovered from row order:
//! students by first appearance in `responses.csv`, items by row order in
//! `item_texts.csv`, knowledge points by row order in `knowledge_names.csv`.

use std::path::{Path, PathBuf};

use super::ingest::open_csv;
use super::{IdMap, IdMaps, KnowledgeGraph, QMatrix, ResponseDataset, ResponseRecord};
use crate::data::read_knowledge_graph;
use crate::error::{Error, Result};

pub const RESPONSES: &str = "responses.csv";
pub const Q_MATRIX: &str = "q_matrix.csv";
pub const KNOWLEDGE_GRAPH: &str = "knowledge_graph.csv";
pub const KNOWLEDGE_NAMES: &str = "knowledge_names.csv";
pub const ITEM_TEXTS: &str = "item_texts.csv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalData {
    pub dataset: ResponseDataset,
    pub q_matrix: QMatrix,
    pub graph: KnowledgeGraph,
    pub maps: IdMaps,
}

#[derive(Debug, Clone)]
pub struct CanonicalFiles {
    pub responses: PathBuf,
    pub q_matrix: PathBuf,
    pub knowledge_graph: PathBuf,
    pub knowledge_names: PathBuf,
    pub item_texts: PathBuf,
}

impl CanonicalFiles {
    pub fn in_dir(dir: &Path) -> Self {
        CanonicalFiles {
            responses: dir.join(RESPONSES),
            q_matrix: dir.join(Q_MATRIX),
            knowledge_graph: dir.join(KNOWLEDGE_GRAPH),
            knowledge_names: dir.join(KNOWLEDGE_NAMES),
            item_texts: dir.join(ITEM_TEXTS),
        }
    }

    pub fn all(&self) -> [&Path; 5] {
        [
            &self.responses,
            &self.q_matrix,
            &self.knowledge_graph,
            &self.knowledge_names,
            &self.item_texts,
        ]
    }
}

fn writer(path: &Path, quote: csv::QuoteStyle) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .quote_style(quote)
        .from_writer(file))
}

fn write_rows<I, R>(path: &Path, quote: csv::QuoteStyle, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = writer(path, quote)?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the five canonical CSVs into `dir` (created if needed).
pub fn write_canonical(dir: &Path, data: &CanonicalData) -> Result<CanonicalFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = CanonicalFiles::in_dir(dir);
    let maps = &data.maps;
    let mut records = data.dataset.records.clone();
    records.sort_by_key(|r| (r.student, r.order_index));

    write_rows(
        &files.responses,
        csv::QuoteStyle::Necessary,
        &["user_id", "problem_id", "correct", "order_id"],
        records.iter().map(|r| {
            [
                maps.raw_student(r.student).to_owned(),
                maps.raw_item(r.item).to_owned(),
                if r.correct { "1" } else { "0" }.to_owned(),
                r.order_index.to_string(),
            ]
        }),
    )?;
    write_rows(
        &files.q_matrix,
        csv::QuoteStyle::Necessary,
        &["problem_id", "skill_id"],
        data.q_matrix
            .rows()
            .iter()
            .enumerate()
            .flat_map(|(item, row)| {
                row.iter().map(move |&k| {
                    [
                        maps.raw_item(item).to_owned(),
                        maps.raw_knowledge(k).to_owned(),
                    ]
                })
            }),
    )?;
    write_rows(
        &files.knowledge_graph,
        csv::QuoteStyle::Necessary,
        &["src_skill_id", "dst_skill_id", "relation"],
        data.graph.edges().iter().map(|e| {
            [
                maps.raw_knowledge(e.src).to_owned(),
                maps.raw_knowledge(e.dst).to_owned(),
                e.relation.as_str().to_owned(),
            ]
        }),
    )?;
    write_rows(
        &files.knowledge_names,
        csv::QuoteStyle::Necessary,
        &["skill_id", "name"],
        maps.knowledge_names
            .iter()
            .enumerate()
            .map(|(k, name)| [maps.raw_knowledge(k).to_owned(), name.clone()]),
    )?;
    write_rows(
        &files.item_texts,
        csv::QuoteStyle::NonNumeric,
        &["problem_id", "text"],
        maps.item_texts
            .iter()
            .enumerate()
            .map(|(i, text)| [maps.raw_item(i).to_owned(), text.clone()]),
    )?;
    Ok(files)
}

fn read_table(path: &Path, key: &str, value: &str) -> Result<(IdMap, Vec<String>)> {
    let (mut reader, header) = open_csv(path)?;
    let key_col = header.require(key)?;
    let value_col = header.require(value)?;
    let mut map = IdMap::new();
    let mut values = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let raw = row.get(key_col).map(str::trim).unwrap_or_default();
        if raw.is_empty() || map.get(raw).is_some() {
            return Err(Error::BadRow {
                path: path.to_owned(),
                line: line as u64 + 2,
                message: format!("empty or duplicate {key} `{raw}`"),
            });
        }
        map.intern(raw);
        values.push(row.get(value_col).unwrap_or_default().to_owned());
    }
    Ok((map, values))
}

/// Builds the Q-matrix from a `problem_id,skill_id` mapping. Every item
/// known to `maps` must receive at least one knowledge point.
pub fn build_q_matrix(path: &Path, maps: &IdMaps) -> Result<QMatrix> {
    let (mut reader, header) = open_csv(path)?;
    let item_col = header.require("problem_id")?;
    let skill_col = header.require("skill_id")?;
    let mut pairs = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let item = row.get(item_col).map(str::trim).unwrap_or_default();
        let skill = row.get(skill_col).map(str::trim).unwrap_or_default();
        pairs.push((maps.item(item)?, maps.knowledge_point(skill)?));
    }
    let n_items = maps.items.len();
    let mut covered = vec![false; n_items];
    for &(i, _) in &pairs {
        covered[i] = true;
    }
    if let Some(i) = covered.iter().position(|c| !c) {
        return Err(Error::EmptyKnowledgeRow(maps.raw_item(i).to_owned()));
    }
    QMatrix::from_pairs(n_items, maps.knowledge.len(), pairs)
}

/// Loads a directory written by [`write_canonical`].
pub fn read_canonical(dir: &Path) -> Result<CanonicalData> {
    let files = CanonicalFiles::in_dir(dir);
    let (knowledge, knowledge_names) = read_table(&files.knowledge_names, "skill_id", "name")?;
    let (items, item_texts) = read_table(&files.item_texts, "problem_id", "text")?;

    let (mut reader, header) = open_csv(&files.responses)?;
    let user_col = header.require("user_id")?;
    let item_col = header.require("problem_id")?;
    let correct_col = header.require("correct")?;
    let order_col = header.require("order_id")?;
    let mut students = IdMap::new();
    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::csv(&files.responses, e))?;
        let bad = |message: String| Error::BadRow {
            path: files.responses.clone(),
            line: line as u64 + 2,
            message,
        };
        let get = |col: usize| row.get(col).map(str::trim).unwrap_or_default();
        let item = items
            .get(get(item_col))
            .ok_or_else(|| Error::UnknownItem(get(item_col).to_owned()))?;
        let correct = match get(correct_col) {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("correct must be 0 or 1, got `{other}`"))),
        };
        let order_index = get(order_col)
            .parse()
            .map_err(|_| bad(format!("bad order_id `{}`", get(order_col))))?;
        records.push(ResponseRecord {
            student: students.intern(get(user_col)),
            item,
            correct,
            order_index,
        });
    }
    if records.is_empty() {
        return Err(Error::NoUsableRows {
            path: files.responses.clone(),
        });
    }

    let maps = IdMaps {
        students,
        items,
        knowledge,
        knowledge_names,
        item_texts,
    };
    let q_matrix = build_q_matrix(&files.q_matrix, &maps)?;
    let (graph, _) = read_knowledge_graph(&files.knowledge_graph, &maps, true)?;
    let dataset = ResponseDataset {
        records,
        n_students: maps.students.len(),
        n_items: maps.items.len(),
        n_knowledge: maps.knowledge.len(),
    };
    Ok(CanonicalData {
        dataset,
        q_matrix,
        graph,
        maps,
    })
}
