//! Experience-augmented planning for a deterministic crafting world.
//!
//! Agents accumulate (state, task, plan, outcome) tuples in an embedded
//! experience database, retrieve them by weighted semantic similarity, and
//! use them to generate, outcome-check, and revise plans. The crate holds
//! the embedder, the experience store, the world simulator, the planners,
//! and the episode/trial drivers; the companion CLI crate wraps them into
//! an experiment harness.

pub mod agent;
pub mod embedding;
pub mod outcome;
pub mod planner;
pub mod store;
pub mod world;

pub use agent::{
    run_episode, run_trials, AgentError, Attempt, EpisodeConfig, EpisodeRecord, MetricsReport,
    PlannerKind, TaskMetrics, TrialOptions, METRICS_CSV_HEADER,
};
pub use embedding::{
    cosine_similarity, embed_text, Embedder, EmbedderConfig, EmbedderMode, EmbeddingError,
    EmbeddingVector,
};
pub use planner::{
    parse_llm_actions, predict_outcome, prompts, retrieve_experiences, Insight, InsightKind,
    LlmConfig, LlmPlanner, OutcomePrediction, Plan, Planner, PlannerError, PlanningContext,
    RetrievedExperience, Revision, ScriptedPlanner, Subtask,
};
pub use store::{
    ExperienceStore, ExperienceTuple, NewExperience, RetrievalResult, RetrievalWeights,
    SimilarityField, StoreError,
};
pub use world::{
    blocked_detail, default_step_budget, executions_for, parse_blocked_step, parse_step_line,
    ActionStep, FailureReason, Inventory, Outcome, PlannerView, Recipe, RecipeTable, TaskSpec,
    ToolSpec, Verb, VisibleRecipe, World, WorldError, WorldRules, WorldState,
    DEFAULT_GIVEN_TOOL,
};
