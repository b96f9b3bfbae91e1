//! Planner abstraction: experience analysis, plan generation, outcome
//! prediction, plan revision, and next-subtask selection.
//!
//! Two implementations ship: a deterministic scripted planner that expands
//! goals through the visible recipe table and learns hidden rules from
//! recorded failures, and an LLM-backed planner that drives the same
//! dataflow through chat-completion prompts.

mod llm;
mod scripted;

pub use llm::{parse_llm_actions, prompts, LlmConfig, LlmPlanner};
pub use scripted::ScriptedPlanner;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::outcome::parse_outcome_text;
use crate::store::{ExperienceStore, RetrievalResult, RetrievalWeights, StoreError};
use crate::world::{parse_step_line, ActionStep, Inventory, PlannerView, TaskSpec};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("goal unreachable in the visible recipe table: no way to obtain '{item}'")]
    Unreachable { item: String },
    #[error("plan text does not follow the plan grammar: {0}")]
    Grammar(String),
    #[error("model reply could not be parsed: {0}")]
    UnparseableReply(String),
    #[error("language-model service error: {0}")]
    Service(String),
}

/// Default floor below which retrieved neighbors are ignored for prediction.
pub const DEFAULT_MIN_SIMILARITY: f64 = 0.25;
/// Default failure-mass threshold above which a plan is predicted to fail.
pub const DEFAULT_FAILURE_THRESHOLD: f64 = 0.5;

/// An ordered action plan plus its canonical text form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<ActionStep>,
    pub raw_text: String,
}

impl Plan {
    /// Builds a plan from steps, rendering the canonical one-step-per-line
    /// text.
    pub fn from_steps(steps: Vec<ActionStep>) -> Self {
        let raw_text = steps
            .iter()
            .map(ActionStep::render)
            .collect::<Vec<_>>()
            .join("\n");
        Self { steps, raw_text }
    }

    /// Parses plan text: one `verb item [xN]` step per line, blank lines
    /// ignored, case-insensitive.
    pub fn parse(text: &str) -> Result<Self, PlannerError> {
        let mut steps = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let step = parse_step_line(line)
                .ok_or_else(|| PlannerError::Grammar(format!("bad step line '{line}'")))?;
            steps.push(step);
        }
        Ok(Self::from_steps(steps))
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// True if some step applies `verb` to `item`.
    pub fn contains_step(&self, verb: crate::world::Verb, item: &str) -> bool {
        self.steps.iter().any(|s| s.verb == verb && s.item == item)
    }

    /// True if some step targets `item`, whatever the verb.
    pub fn touches_item(&self, item: &str) -> bool {
        self.steps.iter().any(|s| s.item == item)
    }
}

/// A retrieval hit joined with the tuple it points at.
#[derive(Debug, Clone)]
pub struct RetrievedExperience {
    pub result: RetrievalResult,
    pub tuple: crate::store::ExperienceTuple,
}

/// Pulls the top-k state/task neighbors and resolves their tuples.
pub fn retrieve_experiences(
    store: &ExperienceStore,
    state_text: &str,
    task_text: &str,
    k: usize,
    weights: &RetrievalWeights,
) -> Result<Vec<RetrievedExperience>, StoreError> {
    let hits = store.retrieve_by_state_task(state_text, task_text, k, weights)?;
    Ok(hits
        .into_iter()
        .map(|result| {
            let tuple = store
                .get(result.tuple_id)
                .expect("retrieval returns live ids")
                .clone();
            RetrievedExperience { result, tuple }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsightKind {
    FailureMode,
    Strategy,
    Dynamics,
}

/// A generalization drawn from retrieved experiences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insight {
    pub text: String,
    pub kind: InsightKind,
    pub source_tuple_ids: Vec<u64>,
}

/// Outcome estimate for a candidate plan, aggregated from similar past
/// plans by a score-weighted vote.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomePrediction {
    pub predicted_success: bool,
    /// Weight of the neighbors agreeing with the prediction over the total
    /// neighbor weight; 0 when no neighbors survive the similarity floor.
    pub confidence: f64,
    pub supporting: Vec<(u64, f64, bool)>,
    pub dominant_failure_text: Option<String>,
}

impl OutcomePrediction {
    /// The optimistic cold-start prediction used when nothing relevant is
    /// in memory.
    pub fn cold_start() -> Self {
        Self {
            predicted_success: true,
            confidence: 0.0,
            supporting: Vec::new(),
            dominant_failure_text: None,
        }
    }
}

/// Predicts a plan's outcome from the store: retrieves state/task/plan
/// neighbors, drops those scoring under `min_sim`, and votes by score. The
/// plan is predicted to fail when the failure share of the total score
/// exceeds `threshold`.
pub fn predict_outcome(
    store: &ExperienceStore,
    state_text: &str,
    task_text: &str,
    plan: &Plan,
    k: usize,
    weights: &RetrievalWeights,
    min_sim: f64,
    threshold: f64,
) -> Result<OutcomePrediction, StoreError> {
    if k == 0 {
        return Err(StoreError::Invalid("k must be at least 1".into()));
    }
    let hits = store.retrieve_by_state_task_plan(state_text, task_text, &plan.raw_text, k, weights)?;
    let kept: Vec<RetrievalResult> = hits.into_iter().filter(|h| h.score >= min_sim).collect();
    if kept.is_empty() {
        return Ok(OutcomePrediction::cold_start());
    }
    let mut total = 0.0;
    let mut failure_mass = 0.0;
    let mut supporting = Vec::with_capacity(kept.len());
    let mut dominant: Option<(f64, u64, String)> = None;
    for hit in &kept {
        let tuple = store.get(hit.tuple_id).expect("retrieval returns live ids");
        total += hit.score;
        if !tuple.success {
            failure_mass += hit.score;
            let failure_text = parse_outcome_text(&tuple.outcome_text)
                .map(|o| o.summary)
                .unwrap_or_else(|_| tuple.outcome_text.clone());
            let better = match &dominant {
                None => true,
                Some((score, id, _)) => {
                    hit.score > *score || (hit.score == *score && hit.tuple_id < *id)
                }
            };
            if better {
                dominant = Some((hit.score, hit.tuple_id, failure_text));
            }
        }
        supporting.push((hit.tuple_id, hit.score, tuple.success));
    }
    let failure_share = failure_mass / total;
    let predicted_success = failure_share <= threshold;
    let confidence = if predicted_success {
        (total - failure_mass) / total
    } else {
        failure_share
    };
    Ok(OutcomePrediction {
        predicted_success,
        confidence,
        supporting,
        dominant_failure_text: dominant.map(|(_, _, text)| text),
    })
}

/// What a revision produced: a changed plan, or a signal that nothing more
/// can be done (the caller's loop must terminate on it).
#[derive(Debug, Clone, PartialEq)]
pub enum Revision {
    Revised(Plan),
    FixedPoint,
}

/// The next immediate objective toward a goal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subtask {
    pub text: String,
    /// True when the goal itself is already satisfied.
    pub complete: bool,
}

/// Everything a planner call may want to know about the current situation.
#[derive(Debug, Clone)]
pub struct PlanningContext {
    /// World-rendered state description (what gets stored and retrieved on).
    pub state_text: String,
    /// Structured state snapshot as JSON.
    pub state_json: String,
    /// Planner-facing description; equals `state_text` for the scripted
    /// planner, may be model-generated in LLM mode.
    pub description: String,
    pub task: TaskSpec,
    pub task_text: String,
}

/// The planning interface. Implementations are stateless between calls.
pub trait Planner {
    /// Renders a planner-facing description of a structured state snapshot.
    fn describe_environment(&self, state_json: &str) -> Result<String, PlannerError>;

    /// Extracts insights (failure modes, strategies, dynamics) from
    /// retrieved neighbors. An empty neighbor list yields an empty list.
    fn analyze_experiences(
        &self,
        ctx: &PlanningContext,
        neighbors: &[RetrievedExperience],
    ) -> Result<Vec<Insight>, PlannerError>;

    /// Produces a plan for the task, conditioned on neighbors and insights.
    fn generate_plan(
        &self,
        ctx: &PlanningContext,
        neighbors: &[RetrievedExperience],
        insights: &[Insight],
        view: &PlannerView<'_>,
    ) -> Result<Plan, PlannerError>;

    /// Reworks a plan that is predicted to fail. Must either change the plan
    /// or signal a fixed point.
    fn revise_plan(
        &self,
        ctx: &PlanningContext,
        plan: &Plan,
        prediction: &OutcomePrediction,
        view: &PlannerView<'_>,
    ) -> Result<Revision, PlannerError>;

    /// The earliest unmet prerequisite of the goal under the current
    /// inventory, or the goal itself (flagged complete when already met).
    fn next_subtask(
        &self,
        inventory: &Inventory,
        goal: &TaskSpec,
        view: &PlannerView<'_>,
    ) -> Result<Subtask, PlannerError>;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{Embedder, EmbedderConfig};
    use crate::store::NewExperience;
    use crate::world::Verb;

    fn store_with(neighbor_specs: &[(f64, bool)]) -> (ExperienceStore, Plan) {
        // Build tuples whose retrieval scores are controlled by construction:
        // identical state/task/plan texts give score 1.0; we then check the
        // vote arithmetic through predict_outcome on hand-placed vectors.
        let embedder = Embedder::new(EmbedderConfig::hashed(8)).unwrap();
        let mut store = ExperienceStore::new(embedder);
        let plan = Plan::parse("mine iron_ore").unwrap();
        for (i, (_score, success)) in neighbor_specs.iter().enumerate() {
            let outcome = if *success {
                "obtained iron_ore x1|true|completed in 60 steps".to_string()
            } else {
                "failed: requires stone_pickaxe|false|blocked at 'mine iron_ore': requires stone_pickaxe"
                    .to_string()
            };
            store
                .add_texts(
                    i as u64,
                    "the state",
                    "mine iron_ore",
                    &plan.raw_text,
                    &outcome,
                    *success,
                )
                .unwrap();
        }
        (store, plan)
    }

    #[test]
    fn empty_store_predicts_optimistic_cold_start() {
        let (store, plan) = store_with(&[]);
        let p = predict_outcome(
            &store,
            "the state",
            "mine iron_ore",
            &plan,
            5,
            &RetrievalWeights::default(),
            DEFAULT_MIN_SIMILARITY,
            DEFAULT_FAILURE_THRESHOLD,
        )
        .unwrap();
        assert!(p.predicted_success);
        assert_eq!(p.confidence, 0.0);
        assert!(p.supporting.is_empty());
    }

    #[test]
    fn single_successful_neighbor_gives_full_confidence() {
        let (store, plan) = store_with(&[(1.0, true)]);
        let p = predict_outcome(
            &store,
            "the state",
            "mine iron_ore",
            &plan,
            5,
            &RetrievalWeights::default(),
            DEFAULT_MIN_SIMILARITY,
            DEFAULT_FAILURE_THRESHOLD,
        )
        .unwrap();
        assert!(p.predicted_success);
        assert!((p.confidence - 1.0).abs() < 1e-12);
    }

    // Builds a unit vector at the given cosine against `query` by mixing in
    // an orthogonal complement, so retrieval scores come out exactly as
    // designed even though queries go through the real embedder.
    fn at_cosine(query: &crate::embedding::EmbeddingVector, cos: f64) -> crate::embedding::EmbeddingVector {
        let q = query.components();
        // Gram-Schmidt against the first basis vector not parallel to q.
        let mut u: Vec<f64> = vec![0.0; q.len()];
        for i in 0..q.len() {
            u.fill(0.0);
            u[i] = 1.0;
            let proj: f64 = q[i];
            for (x, qi) in u.iter_mut().zip(q) {
                *x -= proj * qi;
            }
            let norm: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                for x in &mut u {
                    *x /= norm;
                }
                break;
            }
        }
        let s = (1.0 - cos * cos).sqrt();
        let mixed: Vec<f64> = q.iter().zip(&u).map(|(qi, ui)| cos * qi + s * ui).collect();
        crate::embedding::EmbeddingVector::normalized(mixed)
    }

    // Two failures at scores 0.9 and 0.8 plus one success at 0.5 under
    // threshold 0.5: failure mass 1.7 of 2.2 predicts failure with
    // confidence 1.7 / 2.2.
    #[test]
    fn weighted_vote_matches_hand_computation() {
        let embedder = Embedder::new(EmbedderConfig::hashed(32)).unwrap();
        let state_q = embedder.embed("query state").unwrap();
        let task_q = embedder.embed("query task").unwrap();
        let plan_q = embedder.embed("query plan").unwrap();
        let mut store = ExperienceStore::new(embedder);
        // score = 0.4*s + 0.4*1 + 0.2*1 => state cos s = (score - 0.6) / 0.4
        for (score, success, seq) in [(0.9, false, 1u64), (0.8, false, 2), (0.5, true, 3)] {
            let s = (score - 0.6) / 0.4;
            store
                .add(NewExperience {
                    created_at: seq,
                    state_text: "s".into(),
                    task_text: "t".into(),
                    plan_text: "p".into(),
                    outcome_text: if success {
                        "ok|true|done".into()
                    } else {
                        format!("failed: requires tool_{seq}|false|blocked")
                    },
                    success,
                    state_vec: at_cosine(&state_q, s),
                    task_vec: task_q.clone(),
                    plan_vec: plan_q.clone(),
                    outcome_vec: crate::embedding::EmbeddingVector::zero(32),
                })
                .unwrap();
        }
        let plan = Plan {
            steps: vec![],
            raw_text: "query plan".into(),
        };
        let p = predict_outcome(
            &store,
            "query state",
            "query task",
            &plan,
            5,
            &RetrievalWeights::default(),
            DEFAULT_MIN_SIMILARITY,
            DEFAULT_FAILURE_THRESHOLD,
        )
        .unwrap();
        assert!(!p.predicted_success);
        assert!((p.confidence - 1.7 / 2.2).abs() < 1e-6, "{}", p.confidence);
        assert_eq!(
            p.dominant_failure_text.as_deref(),
            Some("failed: requires tool_1")
        );
        assert_eq!(p.supporting.len(), 3);
    }

    #[test]
    fn flipping_all_success_flags_flips_the_prediction() {
        let build = |flip: bool| {
            let embedder = Embedder::new(EmbedderConfig::hashed(32)).unwrap();
            let mut store = ExperienceStore::new(embedder);
            for (seq, success) in [(1u64, false), (2, false), (3, true)] {
                let success = success ^ flip;
                let outcome = if success {
                    "ok|true|done".to_string()
                } else {
                    "failed: requires thing|false|blocked".to_string()
                };
                store
                    .add_texts(seq, "same state", "same task", "same plan", &outcome, success)
                    .unwrap();
            }
            store
        };
        let plan = Plan {
            steps: vec![],
            raw_text: "same plan".into(),
        };
        let args = |store: &ExperienceStore| {
            predict_outcome(
                store,
                "same state",
                "same task",
                &plan,
                5,
                &RetrievalWeights::default(),
                DEFAULT_MIN_SIMILARITY,
                DEFAULT_FAILURE_THRESHOLD,
            )
            .unwrap()
        };
        let before = args(&build(false));
        let after = args(&build(true));
        assert!(!before.predicted_success);
        assert!(after.predicted_success);
        assert!((before.confidence - after.confidence).abs() < 1e-9);
    }

    #[test]
    fn plan_grammar_round_trips_and_rejects_garbage() {
        let plan = Plan::parse("mine wood\ncraft planks x9\n\nEAT beef").unwrap();
        assert_eq!(plan.steps.len(), 3);
        assert_eq!(plan.steps[1].quantity, 9);
        let reparsed = Plan::parse(&plan.raw_text).unwrap();
        assert_eq!(reparsed, plan);
        assert!(Plan::parse("mine wood\nwibble").is_err());
        assert!(plan.contains_step(Verb::Eat, "beef"));
        assert!(!plan.contains_step(Verb::Mine, "beef"));
    }
}
