//! The experience database: (state, task, plan, outcome) tuples with
//! weighted multi-field top-k retrieval and append-only JSONL persistence.
//!
//! Retrieval is an exact flat scan. Field similarities are computed against
//! vectors cached at insert time; query fields are embedded once per call.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_unchecked, Embedder, EmbeddingError, EmbeddingVector};
use crate::outcome::{parse_outcome_text, OutcomeTextError};

/// Flat scans stay exact at any size; past this we still answer, but loudly.
const SCAN_WARN_THRESHOLD: usize = 100_000;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{field} must be non-empty")]
    EmptyField { field: &'static str },
    #[error("{field} vector has dimension {got}, store uses {want}")]
    VectorDimension {
        field: &'static str,
        got: usize,
        want: usize,
    },
    #[error("outcome text does not follow the outcome|success|explanation grammar: {0}")]
    OutcomeGrammar(#[from] OutcomeTextError),
    #[error("outcome text says success={text} but the success flag is {flag}")]
    SuccessMismatch { text: bool, flag: bool },
    #[error("invalid retrieval weights: {0}")]
    Weights(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("persistence failure (tuple {id} kept in memory): {source}")]
    Persist {
        id: u64,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// One unit of memory: the four natural-language fields, a success flag,
/// and the cached per-field embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceTuple {
    pub id: u64,
    pub created_at: u64,
    pub state_text: String,
    pub task_text: String,
    pub plan_text: String,
    pub outcome_text: String,
    pub success: bool,
    pub state_vec: EmbeddingVector,
    pub task_vec: EmbeddingVector,
    pub plan_vec: EmbeddingVector,
    pub outcome_vec: EmbeddingVector,
}

/// An [`ExperienceTuple`] before the store assigns its id.
#[derive(Debug, Clone)]
pub struct NewExperience {
    pub created_at: u64,
    pub state_text: String,
    pub task_text: String,
    pub plan_text: String,
    pub outcome_text: String,
    pub success: bool,
    pub state_vec: EmbeddingVector,
    pub task_vec: EmbeddingVector,
    pub plan_vec: EmbeddingVector,
    pub outcome_vec: EmbeddingVector,
}

/// Per-field weights for the aggregate retrieval score. All non-negative,
/// at least one strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalWeights {
    pub state: f64,
    pub task: f64,
    pub plan: f64,
}

impl Default for RetrievalWeights {
    fn default() -> Self {
        Self {
            state: 0.4,
            task: 0.4,
            plan: 0.2,
        }
    }
}

impl RetrievalWeights {
    pub fn new(state: f64, task: f64, plan: f64) -> Self {
        Self { state, task, plan }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let all = [self.state, self.task, self.plan];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(StoreError::Weights(
                "weights must be finite and non-negative".into(),
            ));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(StoreError::Weights(
                "at least one weight must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// Which tuple field a similarity was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SimilarityField {
    State,
    Task,
    Plan,
}

impl SimilarityField {
    pub fn name(&self) -> &'static str {
        match self {
            SimilarityField::State => "state",
            SimilarityField::Task => "task",
            SimilarityField::Plan => "plan",
        }
    }
}

/// One retrieval hit: the tuple id, the aggregate score, and the per-field
/// similarities it decomposes into.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub tuple_id: u64,
    pub score: f64,
    pub per_field_sims: BTreeMap<SimilarityField, f64>,
}

// Ranking key: higher score first, then smaller (older) id.
#[derive(PartialEq)]
struct RankKey {
    score: f64,
    id: u64,
}

impl Eq for RankKey {}

impl Ord for RankKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for RankKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// The experience database. Reads take `&self` and never observe a partially
/// inserted tuple; writes take `&mut self`, so concurrent use goes through
/// the usual shared-reader / exclusive-writer wrapping.
#[derive(Debug, Clone)]
pub struct ExperienceStore {
    embedder: Embedder,
    tuples: Vec<ExperienceTuple>,
    next_id: u64,
    log_path: Option<PathBuf>,
}

impl ExperienceStore {
    /// In-memory store; nothing is persisted until [`save`](Self::save).
    pub fn new(embedder: Embedder) -> Self {
        Self {
            embedder,
            tuples: Vec::new(),
            next_id: 1,
            log_path: None,
        }
    }

    /// Store that appends every accepted tuple to `path` before `add` returns.
    pub fn with_log(embedder: Embedder, path: impl Into<PathBuf>) -> Self {
        let mut store = Self::new(embedder);
        store.log_path = Some(path.into());
        store
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    pub fn dim(&self) -> usize {
        self.embedder.dim()
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&ExperienceTuple> {
        self.tuples.iter().find(|t| t.id == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ExperienceTuple> {
        self.tuples.iter()
    }

    /// Inserts a tuple, assigning the next id. The tuple is retrievable
    /// immediately; if a persistence log is configured the record is appended
    /// before this returns. A failed append keeps the in-memory insert and
    /// reports [`StoreError::Persist`].
    pub fn add(&mut self, new: NewExperience) -> Result<u64, StoreError> {
        self.validate(&new)?;
        let id = self.next_id;
        let tuple = ExperienceTuple {
            id,
            created_at: new.created_at,
            state_text: new.state_text,
            task_text: new.task_text,
            plan_text: new.plan_text,
            outcome_text: new.outcome_text,
            success: new.success,
            state_vec: new.state_vec,
            task_vec: new.task_vec,
            plan_vec: new.plan_vec,
            outcome_vec: new.outcome_vec,
        };
        self.next_id += 1;
        self.tuples.push(tuple);
        if let Some(path) = self.log_path.clone() {
            let record = TupleRecord::from_tuple(self.tuples.last().expect("just pushed"));
            append_record(&path, &record).map_err(|source| StoreError::Persist { id, source })?;
        }
        Ok(id)
    }

    /// Embeds the four field texts and inserts the tuple in one step.
    pub fn add_texts(
        &mut self,
        created_at: u64,
        state_text: &str,
        task_text: &str,
        plan_text: &str,
        outcome_text: &str,
        success: bool,
    ) -> Result<u64, StoreError> {
        let new = NewExperience {
            created_at,
            state_text: state_text.to_string(),
            task_text: task_text.to_string(),
            plan_text: plan_text.to_string(),
            outcome_text: outcome_text.to_string(),
            success,
            state_vec: self.embedder.embed(state_text)?,
            task_vec: self.embedder.embed(task_text)?,
            plan_vec: self.embedder.embed(plan_text)?,
            outcome_vec: self.embedder.embed(outcome_text)?,
        };
        self.add(new)
    }

    fn validate(&self, new: &NewExperience) -> Result<(), StoreError> {
        for (field, text) in [
            ("state_text", &new.state_text),
            ("task_text", &new.task_text),
            ("plan_text", &new.plan_text),
        ] {
            if text.trim().is_empty() {
                return Err(StoreError::EmptyField { field });
            }
        }
        let want = self.dim();
        for (field, vec) in [
            ("state", &new.state_vec),
            ("task", &new.task_vec),
            ("plan", &new.plan_vec),
            ("outcome", &new.outcome_vec),
        ] {
            if vec.dim() != want {
                return Err(StoreError::VectorDimension {
                    field,
                    got: vec.dim(),
                    want,
                });
            }
        }
        let parsed = parse_outcome_text(&new.outcome_text)?;
        if parsed.success != new.success {
            return Err(StoreError::SuccessMismatch {
                text: parsed.success,
                flag: new.success,
            });
        }
        Ok(())
    }

    /// Top-k by `state·λs + task·λt`, score descending, older id first on
    /// ties. The plan weight is ignored here. An empty store yields an empty
    /// list.
    pub fn retrieve_by_state_task(
        &self,
        state_text: &str,
        task_text: &str,
        k: usize,
        weights: &RetrievalWeights,
    ) -> Result<Vec<RetrievalResult>, StoreError> {
        weights.validate()?;
        let state_q = self.embedder.embed(state_text)?;
        let task_q = self.embedder.embed(task_text)?;
        Ok(self.top_k(k, |tuple| {
            let mut sims = BTreeMap::new();
            sims.insert(
                SimilarityField::State,
                cosine_unchecked(&tuple.state_vec, &state_q),
            );
            sims.insert(
                SimilarityField::Task,
                cosine_unchecked(&tuple.task_vec, &task_q),
            );
            let score = weights.state * sims[&SimilarityField::State]
                + weights.task * sims[&SimilarityField::Task];
            (score, sims)
        }))
    }

    /// Top-k by `state·λs + task·λt + plan·λp`, same ordering rules.
    pub fn retrieve_by_state_task_plan(
        &self,
        state_text: &str,
        task_text: &str,
        plan_text: &str,
        k: usize,
        weights: &RetrievalWeights,
    ) -> Result<Vec<RetrievalResult>, StoreError> {
        weights.validate()?;
        let state_q = self.embedder.embed(state_text)?;
        let task_q = self.embedder.embed(task_text)?;
        let plan_q = self.embedder.embed(plan_text)?;
        Ok(self.top_k(k, |tuple| {
            let mut sims = BTreeMap::new();
            sims.insert(
                SimilarityField::State,
                cosine_unchecked(&tuple.state_vec, &state_q),
            );
            sims.insert(
                SimilarityField::Task,
                cosine_unchecked(&tuple.task_vec, &task_q),
            );
            sims.insert(
                SimilarityField::Plan,
                cosine_unchecked(&tuple.plan_vec, &plan_q),
            );
            let score = weights.state * sims[&SimilarityField::State]
                + weights.task * sims[&SimilarityField::Task]
                + weights.plan * sims[&SimilarityField::Plan];
            (score, sims)
        }))
    }

    fn top_k<F>(&self, k: usize, score_fn: F) -> Vec<RetrievalResult>
    where
        F: Fn(&ExperienceTuple) -> (f64, BTreeMap<SimilarityField, f64>),
    {
        if self.tuples.len() > SCAN_WARN_THRESHOLD {
            log::warn!(
                "flat scan over {} tuples; retrieval is exact but O(N*d)",
                self.tuples.len()
            );
        }
        if k == 0 {
            return Vec::new();
        }
        // Min-heap of the k best seen so far; the weakest hit sits on top.
        let mut heap: BinaryHeap<Reverse<(RankKey, usize)>> = BinaryHeap::with_capacity(k + 1);
        let mut sims_by_index: Vec<Option<(f64, BTreeMap<SimilarityField, f64>)>> =
            vec![None; self.tuples.len()];
        for (index, tuple) in self.tuples.iter().enumerate() {
            let (score, sims) = score_fn(tuple);
            sims_by_index[index] = Some((score, sims));
            heap.push(Reverse((
                RankKey {
                    score,
                    id: tuple.id,
                },
                index,
            )));
            if heap.len() > k {
                heap.pop();
            }
        }
        let mut picked: Vec<(RankKey, usize)> = heap.into_iter().map(|Reverse(p)| p).collect();
        picked.sort_by(|a, b| b.0.cmp(&a.0));
        picked
            .into_iter()
            .map(|(_, index)| {
                let (score, per_field_sims) =
                    sims_by_index[index].take().expect("scored above");
                RetrievalResult {
                    tuple_id: self.tuples[index].id,
                    score,
                    per_field_sims,
                }
            })
            .collect()
    }

    /// Writes the whole store as JSONL, one record per tuple.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let path = path.as_ref();
        let mut file = File::create(path).map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        for tuple in &self.tuples {
            let record = TupleRecord::from_tuple(tuple);
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(file, "{line}").map_err(|source| StoreError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
        Ok(())
    }

    /// Reads a JSONL store. Records missing their vectors are re-embedded
    /// with `embedder`. A malformed line aborts with its line number, except
    /// for an unterminated final line (the footprint of a crashed append),
    /// which is skipped with a warning.
    pub fn load(path: impl AsRef<Path>, embedder: Embedder) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let ends_with_newline = raw.ends_with('\n');
        let lines: Vec<&str> = raw.lines().collect();
        let last_content_line = lines
            .iter()
            .rposition(|l| !l.trim().is_empty())
            .unwrap_or(0);

        let mut store = Self::new(embedder);
        for (number, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: TupleRecord = match serde_json::from_str(line) {
                Ok(r) => r,
                Err(e) => {
                    if number == last_content_line && !ends_with_newline {
                        log::warn!(
                            "{}:{}: skipping unterminated trailing record: {e}",
                            path.display(),
                            number + 1
                        );
                        continue;
                    }
                    return Err(StoreError::MalformedRecord {
                        path: path.to_path_buf(),
                        line: number + 1,
                        message: e.to_string(),
                    });
                }
            };
            store
                .insert_record(record)
                .map_err(|e| StoreError::MalformedRecord {
                    path: path.to_path_buf(),
                    line: number + 1,
                    message: e.to_string(),
                })?;
        }
        Ok(store)
    }

    fn insert_record(&mut self, record: TupleRecord) -> Result<(), StoreError> {
        if record.dim != self.dim() {
            return Err(StoreError::VectorDimension {
                field: "record",
                got: record.dim,
                want: self.dim(),
            });
        }
        if record.id < self.next_id {
            return Err(StoreError::Invalid(format!(
                "ids must be strictly increasing, saw {} after {}",
                record.id,
                self.next_id - 1
            )));
        }
        let vectors = match record.vectors {
            Some(v) => VectorSet {
                state: EmbeddingVector::new(v.state)?,
                task: EmbeddingVector::new(v.task)?,
                plan: EmbeddingVector::new(v.plan)?,
                outcome: EmbeddingVector::new(v.outcome)?,
            },
            None => VectorSet {
                state: self.embedder.embed(&record.state)?,
                task: self.embedder.embed(&record.task)?,
                plan: self.embedder.embed(&record.plan)?,
                outcome: self.embedder.embed(&record.outcome)?,
            },
        };
        let new = NewExperience {
            created_at: record.created_at,
            state_text: record.state,
            task_text: record.task,
            plan_text: record.plan,
            outcome_text: record.outcome,
            success: record.success,
            state_vec: vectors.state,
            task_vec: vectors.task,
            plan_vec: vectors.plan,
            outcome_vec: vectors.outcome,
        };
        self.validate(&new)?;
        let id = record.id;
        self.tuples.push(ExperienceTuple {
            id,
            created_at: new.created_at,
            state_text: new.state_text,
            task_text: new.task_text,
            plan_text: new.plan_text,
            outcome_text: new.outcome_text,
            success: new.success,
            state_vec: new.state_vec,
            task_vec: new.task_vec,
            plan_vec: new.plan_vec,
            outcome_vec: new.outcome_vec,
        });
        self.next_id = id + 1;
        Ok(())
    }
}

struct VectorSet {
    state: EmbeddingVector,
    task: EmbeddingVector,
    plan: EmbeddingVector,
    outcome: EmbeddingVector,
}

/// On-disk JSONL record. `vectors` is optional on load; missing vectors are
/// recomputed from the texts.
#[derive(Debug, Serialize, Deserialize)]
struct TupleRecord {
    id: u64,
    created_at: u64,
    state: String,
    task: String,
    plan: String,
    outcome: String,
    success: bool,
    dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    vectors: Option<VectorsRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VectorsRecord {
    state: Vec<f64>,
    task: Vec<f64>,
    plan: Vec<f64>,
    outcome: Vec<f64>,
}

impl TupleRecord {
    fn from_tuple(tuple: &ExperienceTuple) -> Self {
        Self {
            id: tuple.id,
            created_at: tuple.created_at,
            state: tuple.state_text.clone(),
            task: tuple.task_text.clone(),
            plan: tuple.plan_text.clone(),
            outcome: tuple.outcome_text.clone(),
            success: tuple.success,
            dim: tuple.state_vec.dim(),
            vectors: Some(VectorsRecord {
                state: tuple.state_vec.components().to_vec(),
                task: tuple.task_vec.components().to_vec(),
                plan: tuple.plan_vec.components().to_vec(),
                outcome: tuple.outcome_vec.components().to_vec(),
            }),
        }
    }
}

fn append_record(path: &Path, record: &TupleRecord) -> std::io::Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let line = serde_json::to_string(record).expect("record serializes");
    writeln!(file, "{line}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbedderConfig;

    fn embedder() -> Embedder {
        Embedder::new(EmbedderConfig::hashed(32)).unwrap()
    }

    fn experience(store: &ExperienceStore, seq: u64, task: &str, success: bool) -> NewExperience {
        let outcome = if success {
            format!("obtained {task}|true|done")
        } else {
            format!("failed: requires stone_pickaxe|false|blocked at 'mine {task}'")
        };
        NewExperience {
            created_at: seq,
            state_text: format!("state {seq}"),
            task_text: task.to_string(),
            plan_text: format!("mine {task}"),
            outcome_text: outcome,
            success,
            state_vec: store.embedder().embed(&format!("state {seq}")).unwrap(),
            task_vec: store.embedder().embed(task).unwrap(),
            plan_vec: store.embedder().embed(&format!("mine {task}")).unwrap(),
            outcome_vec: store.embedder().embed("outcome").unwrap(),
        }
    }

    #[test]
    fn first_insert_gets_id_one_and_ids_are_monotone() {
        let mut store = ExperienceStore::new(embedder());
        let a = experience(&store, 1, "mine coal", false);
        let b = experience(&store, 2, "mine iron_ore", false);
        assert_eq!(store.add(a).unwrap(), 1);
        assert_eq!(store.add(b).unwrap(), 2);
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn empty_store_retrieval_is_empty_not_an_error() {
        let store = ExperienceStore::new(embedder());
        let hits = store
            .retrieve_by_state_task("s", "t", 5, &RetrievalWeights::default())
            .unwrap();
        assert!(hits.is_empty());
    }

    #[test]
    fn rejects_empty_required_texts() {
        let mut store = ExperienceStore::new(embedder());
        let mut bad = experience(&store, 1, "mine coal", true);
        bad.plan_text = "  ".into();
        assert!(matches!(
            store.add(bad),
            Err(StoreError::EmptyField { field: "plan_text" })
        ));
        assert_eq!(store.len(), 0);
    }

    #[test]
    fn rejects_outcome_flag_mismatch_and_bad_grammar() {
        let mut store = ExperienceStore::new(embedder());
        let mut bad = experience(&store, 1, "mine coal", true);
        bad.outcome_text = "ok|false|mismatch".into();
        assert!(matches!(store.add(bad), Err(StoreError::SuccessMismatch { .. })));

        let mut bad = experience(&store, 1, "mine coal", true);
        bad.outcome_text = "only|two".into();
        assert!(matches!(store.add(bad), Err(StoreError::OutcomeGrammar(_))));
    }

    #[test]
    fn rejects_wrong_vector_dimension() {
        let mut store = ExperienceStore::new(embedder());
        let mut bad = experience(&store, 1, "mine coal", true);
        bad.task_vec = EmbeddingVector::zero(16);
        assert!(matches!(
            store.add(bad),
            Err(StoreError::VectorDimension { field: "task", .. })
        ));
    }

    // Hand-built two-field example: tuple A has sims (1.0, 0.0), B (0.0, 1.0),
    // C (0.8, 0.8). With weights (0.4, 0.4, 0.2) and k=2 the ranking is
    // C (0.64) then A (0.40, tied with B, lower id wins).
    #[test]
    fn weighted_two_field_ranking_with_tie_break() {
        let axis = |i: usize| {
            let mut v = vec![0.0; 8];
            v[i] = 1.0;
            EmbeddingVector::new(v).unwrap()
        };
        let blend = |i: usize, j: usize| {
            let mut v = vec![0.0; 8];
            v[i] = 0.8;
            v[j] = 0.6;
            EmbeddingVector::new(v).unwrap()
        };
        let make = |state_vec: EmbeddingVector, task_vec: EmbeddingVector, seq: u64| NewExperience {
            created_at: seq,
            state_text: "s".into(),
            task_text: "t".into(),
            plan_text: "p".into(),
            outcome_text: "ok|true|done".into(),
            success: true,
            state_vec,
            task_vec,
            plan_vec: EmbeddingVector::zero(8),
            outcome_vec: EmbeddingVector::zero(8),
        };

        let mut store = ExperienceStore::new(Embedder::new(EmbedderConfig::hashed(8)).unwrap());
        let tuples = [
            make(axis(0), axis(3), 1),         // A: sims (1.0, 0.0)
            make(axis(1), axis(2), 2),         // B: sims (0.0, 1.0)
            make(blend(0, 1), blend(2, 3), 3), // C: sims (0.8, 0.8)
        ];
        for t in tuples {
            store.add(t).unwrap();
        }
        let weights = RetrievalWeights::default();
        let hits = raw_query(&store, axis(0), axis(2), 2, &weights);
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].tuple_id, 3);
        assert!((hits[0].score - 0.64).abs() < 1e-9);
        assert_eq!(hits[1].tuple_id, 1, "tie at 0.40 broken by lower id");
        assert!((hits[1].score - 0.40).abs() < 1e-9);
    }

    // Scores tuples against explicit query vectors, reusing the store's
    // two-field scoring path via a scratch store whose embedder is bypassed.
    fn raw_query(
        store: &ExperienceStore,
        state_q: EmbeddingVector,
        task_q: EmbeddingVector,
        k: usize,
        weights: &RetrievalWeights,
    ) -> Vec<RetrievalResult> {
        store.top_k(k, |tuple| {
            let mut sims = BTreeMap::new();
            sims.insert(
                SimilarityField::State,
                cosine_unchecked(&tuple.state_vec, &state_q),
            );
            sims.insert(
                SimilarityField::Task,
                cosine_unchecked(&tuple.task_vec, &task_q),
            );
            let score = weights.state * sims[&SimilarityField::State]
                + weights.task * sims[&SimilarityField::Task];
            (score, sims)
        })
    }

    #[test]
    fn k_clamps_to_store_size() {
        let mut store = ExperienceStore::new(embedder());
        for i in 0..5 {
            let e = experience(&store, i, &format!("task {i}"), i % 2 == 0);
            store.add(e).unwrap();
        }
        let hits = store
            .retrieve_by_state_task("state 1", "task 1", 20, &RetrievalWeights::default())
            .unwrap();
        assert_eq!(hits.len(), 5);
        for pair in hits.windows(2) {
            assert!(
                pair[0].score > pair[1].score
                    || (pair[0].score == pair[1].score && pair[0].tuple_id < pair[1].tuple_id)
            );
        }
    }

    #[test]
    fn perfect_match_scores_one_under_default_weights() {
        let mut store = ExperienceStore::new(embedder());
        store
            .add_texts(1, "the state", "the task", "the plan", "ok|true|done", true)
            .unwrap();
        let hits = store
            .retrieve_by_state_task_plan(
                "the state",
                "the task",
                "the plan",
                5,
                &RetrievalWeights::default(),
            )
            .unwrap();
        assert_eq!(hits.len(), 1);
        assert!((hits[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scaled_weights_preserve_order() {
        let mut store = ExperienceStore::new(embedder());
        for i in 0..20 {
            let e = experience(&store, i, &format!("mine item{i} now"), i % 3 == 0);
            store.add(e).unwrap();
        }
        let base = RetrievalWeights::default();
        let doubled = RetrievalWeights::new(0.8, 0.8, 0.4);
        let a = store
            .retrieve_by_state_task_plan("state 3", "mine item3 now", "plan", 20, &base)
            .unwrap();
        let b = store
            .retrieve_by_state_task_plan("state 3", "mine item3 now", "plan", 20, &doubled)
            .unwrap();
        let ids_a: Vec<u64> = a.iter().map(|r| r.tuple_id).collect();
        let ids_b: Vec<u64> = b.iter().map(|r| r.tuple_id).collect();
        assert_eq!(ids_a, ids_b);
    }

    #[test]
    fn save_then_load_preserves_retrieval() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let mut store = ExperienceStore::new(embedder());
        for i in 0..10 {
            let e = experience(&store, i, &format!("task number {i}"), i % 2 == 0);
            store.add(e).unwrap();
        }
        store.save(&path).unwrap();
        let loaded = ExperienceStore::load(&path, embedder()).unwrap();
        assert_eq!(loaded.len(), store.len());
        let w = RetrievalWeights::default();
        for q in 0..10 {
            let query = format!("task number {q}");
            let a = store
                .retrieve_by_state_task_plan("state 1", &query, "mine plan", 4, &w)
                .unwrap();
            let b = loaded
                .retrieve_by_state_task_plan("state 1", &query, "mine plan", 4, &w)
                .unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn load_reembeds_records_without_vectors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        std::fs::write(
            &path,
            r#"{"id":1,"created_at":0,"state":"s","task":"t","plan":"p","outcome":"ok|true|x","success":true,"dim":32}
"#,
        )
        .unwrap();
        let loaded = ExperienceStore::load(&path, embedder()).unwrap();
        assert_eq!(loaded.len(), 1);
        let tuple = loaded.get(1).unwrap();
        assert_eq!(tuple.state_vec, loaded.embedder().embed("s").unwrap());
    }

    #[test]
    fn load_aborts_on_malformed_interior_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        std::fs::write(&path, "not json\n{\"id\":1}\n").unwrap();
        match ExperienceStore::load(&path, embedder()) {
            Err(StoreError::MalformedRecord { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected malformed-record error, got {other:?}"),
        }
    }

    #[test]
    fn load_skips_unterminated_trailing_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let mut store = ExperienceStore::new(embedder());
        let e = experience(&store, 1, "mine coal", false);
        store.add(e).unwrap();
        store.save(&path).unwrap();
        // Simulate a crash mid-append: a truncated record with no newline.
        let mut raw = std::fs::read_to_string(&path).unwrap();
        raw.push_str("{\"id\":2,\"created_at\":1,\"state\":\"s\"");
        std::fs::write(&path, raw).unwrap();
        let loaded = ExperienceStore::load(&path, embedder()).unwrap();
        assert_eq!(loaded.len(), 1);
    }

    #[test]
    fn log_appends_on_every_add() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut store = ExperienceStore::with_log(embedder(), &path);
        for i in 0..3 {
            let e = experience(&store, i, &format!("task {i}"), true);
            store.add(e).unwrap();
        }
        let loaded = ExperienceStore::load(&path, embedder()).unwrap();
        assert_eq!(loaded.len(), 3);
    }

    #[test]
    fn weights_validation() {
        assert!(RetrievalWeights::new(0.0, 0.0, 0.0).validate().is_err());
        assert!(RetrievalWeights::new(-0.1, 0.4, 0.2).validate().is_err());
        assert!(RetrievalWeights::new(0.0, 0.0, 1.0).validate().is_ok());
    }
}
