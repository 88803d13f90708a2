//! Response logs, item/knowledge mappings and the prerequisite graph.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod canonical;
mod ingest;
mod split;

pub use canonical::{
    build_q_matrix, read_canonical, write_canonical, CanonicalData, CanonicalFiles,
};
pub use ingest::{
    parse_logs, read_item_texts, read_knowledge_graph, DropReason, IngestReport, LogSchema,
    ParsedLog,
};
pub use split::split_dataset;

/// One observed answer. Ids are dense indices into [`IdMaps`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub student: usize,
    pub item: usize,
    pub correct: bool,
    /// Position in the student's chronological log.
    pub order_index: usize,
}

impl ResponseRecord {
    pub fn label(&self) -> f64 {
        if self.correct {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseDataset {
    pub records: Vec<ResponseRecord>,
    pub n_students: usize,
    pub n_items: usize,
    pub n_knowledge: usize,
}

impl ResponseDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Same id spaces, different records.
    pub fn with_records(&self, records: Vec<ResponseRecord>) -> Self {
        ResponseDataset {
            records,
            n_students: self.n_students,
            n_items: self.n_items,
            n_knowledge: self.n_knowledge,
        }
    }

    /// Records of one student in log order.
    pub fn student_log(&self, student: usize) -> Vec<ResponseRecord> {
        let mut log: Vec<_> = self
            .records
            .iter()
            .filter(|r| r.student == student)
            .copied()
            .collect();
        log.sort_by_key(|r| r.order_index);
        log
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.records {
            check_index("student", r.student, self.n_students)?;
            check_index("item", r.item, self.n_items)?;
        }
        Ok(())
    }
}

pub(crate) fn check_index(kind: &'static str, index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { kind, index, len })
    }
}

/// Bijection between raw string ids and dense indices, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    raw: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the dense index for `raw`, assigning the next one if unseen.
    pub fn intern(&mut self, raw: &str) -> usize {
        if let Some(&i) = self.index.get(raw) {
            return i;
        }
        let i = self.raw.len();
        self.raw.push(raw.to_owned());
        self.index.insert(raw.to_owned(), i);
        i
    }

    pub fn get(&self, raw: &str) -> Option<usize> {
        self.index.get(raw).copied()
    }

    pub fn raw(&self, index: usize) -> Option<&str> {
        self.raw.get(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw_ids(&self) -> &[String] {
        &self.raw
    }
}

impl FromIterator<String> for IdMap {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        let mut map = IdMap::new();
        for raw in iter {
            map.intern(&raw);
        }
        map
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMaps {
    pub students: IdMap,
    pub items: IdMap,
    pub knowledge: IdMap,
    /// Indexed by dense knowledge id.
    pub knowledge_names: Vec<String>,
    /// Indexed by dense item id.
    pub item_texts: Vec<String>,
}

impl IdMaps {
    pub fn student(&self, raw: &str) -> Result<usize> {
        self.students
            .get(raw)
            .ok_or_else(|| Error::UnknownStudent(raw.to_owned()))
    }

    pub fn item(&self, raw: &str) -> Result<usize> {
        self.items
            .get(raw)
            .ok_or_else(|| Error::UnknownItem(raw.to_owned()))
    }

    pub fn knowledge_point(&self, raw: &str) -> Result<usize> {
        self.knowledge
            .get(raw)
            .ok_or_else(|| Error::UnknownKnowledge(raw.to_owned()))
    }

    pub fn raw_student(&self, index: usize) -> &str {
        self.students.raw(index).unwrap_or("?")
    }

    pub fn raw_item(&self, index: usize) -> &str {
        self.items.raw(index).unwrap_or("?")
    }

    pub fn raw_knowledge(&self, index: usize) -> &str {
        self.knowledge.raw(index).unwrap_or("?")
    }
}

/// Item to knowledge-point incidence. Each row is sorted and non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QMatrix {
    rows: Vec<Vec<usize>>,
    n_knowledge: usize,
}

impl QMatrix {
    /// Builds from dense `(item, knowledge)` pairs. Duplicate pairs collapse.
    pub fn from_pairs(
        n_items: usize,
        n_knowledge: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut sets = vec![BTreeSet::new(); n_items];
        for (item, k) in pairs {
            check_index("item", item, n_items)?;
            check_index("knowledge", k, n_knowledge)?;
            sets[item].insert(k);
        }
        let rows: Vec<Vec<usize>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        Self::from_rows(rows, n_knowledge)
    }

    pub fn from_rows(rows: Vec<Vec<usize>>, n_knowledge: usize) -> Result<Self> {
        let mut clean = Vec::with_capacity(rows.len());
        for (item, row) in rows.into_iter().enumerate() {
            let set: BTreeSet<usize> = row.into_iter().collect();
            if set.is_empty() {
                return Err(Error::EmptyKnowledgeRow(item.to_string()));
            }
            if let Some(&k) = set.iter().next_back() {
                check_index("knowledge", k, n_knowledge)?;
            }
            clean.push(set.into_iter().collect());
        }
        Ok(QMatrix {
            rows: clean,
            n_knowledge,
        })
    }

    pub fn row(&self, item: usize) -> &[usize] {
        &self.rows[item]
    }

    pub fn get(&self, item: usize) -> Result<&[usize]> {
        check_index("item", item, self.rows.len())?;
        Ok(&self.rows[item])
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn n_items(&self) -> usize {
        self.rows.len()
    }

    pub fn n_knowledge(&self) -> usize {
        self.n_knowledge
    }

    pub fn covers(&self, item: usize, k: usize) -> bool {
        self.rows[item].binary_search(&k).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Prerequisite,
}

impl Relation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Relation::Prerequisite => "prerequisite",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        label
            .trim()
            .eq_ignore_ascii_case("prerequisite")
            .then_some(Relation::Prerequisite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KnowledgeEdge {
    pub src: usize,
    pub dst: usize,
    pub relation: Relation,
}

/// Directed prerequisite relations between knowledge points: `src` is a
/// prerequisite of `dst`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    edges: Vec<KnowledgeEdge>,
}

impl KnowledgeGraph {
    /// Validates and deduplicates. Self-loops and out-of-range ids are
    /// rejected.
    pub fn new(edges: impl IntoIterator<Item = KnowledgeEdge>, n_knowledge: usize) -> Result<Self> {
        let mut set = BTreeSet::new();
        for e in edges {
            check_index("knowledge", e.src, n_knowledge)?;
            check_index("knowledge", e.dst, n_knowledge)?;
            if e.src == e.dst {
                return Err(Error::InvalidConfig(format!(
                    "self-loop on knowledge point {}",
                    e.src
                )));
            }
            set.insert(e);
        }
        Ok(KnowledgeGraph {
            edges: set.into_iter().collect(),
        })
    }

    pub fn edges(&self) -> &[KnowledgeEdge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Direct prerequisites of `k`.
    pub fn prerequisites_of(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .filter(move |e| e.dst == k && e.relation == Relation::Prerequisite)
            .map(|e| e.src)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_map_round_trip() {
        let map: IdMap = ["70", "12", "70", "5"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(map.len(), 3);
        for i in 0..map.len() {
            assert_eq!(map.get(map.raw(i).unwrap()), Some(i));
        }
    }

    #[test]
    fn q_matrix_groups_and_dedups() {
        let q = QMatrix::from_pairs(2, 3, [(0, 2), (0, 1), (1, 1), (0, 1)]).unwrap();
        assert_eq!(q.row(0), &[1, 2]);
        assert_eq!(q.row(1), &[1]);
        assert!(QMatrix::from_pairs(3, 3, [(0, 0), (1, 1)]).is_err());
        assert!(QMatrix::from_pairs(1, 2, [(0, 2)]).is_err());
    }

    #[test]
    fn graph_dedups_and_rejects_self_loops() {
        let e = |src, dst| KnowledgeEdge {
            src,
            dst,
            relation: Relation::Prerequisite,
        };
        let g = KnowledgeGraph::new([e(0, 1), e(0, 1), e(2, 1)], 3).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.prerequisites_of(1).collect::<Vec<_>>(), vec![0, 2]);
        assert!(KnowledgeGraph::new([e(1, 1)], 3).is_err());
        assert!(KnowledgeGraph::new([e(0, 3)], 3).is_err());
    }
}
