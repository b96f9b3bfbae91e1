//! Episode and trial drivers: retrieve, analyze, plan, predict/revise,
//! execute, record.
//!
//! One episode runs the full cycle against a fresh world reset and records
//! exactly one experience tuple — the final plan and its real outcome —
//! whatever happened along the way. Trials stack episodes on one task;
//! continuous runs thread a single growing store across a task ladder.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::outcome::OutcomeText;
use crate::planner::{
    predict_outcome, retrieve_experiences, OutcomePrediction, Plan, Planner, PlanningContext,
    Revision, DEFAULT_FAILURE_THRESHOLD, DEFAULT_MIN_SIMILARITY,
};
use crate::store::{ExperienceStore, RetrievalWeights, StoreError};
use crate::world::{Outcome, TaskSpec, World};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Which planner implementation an experiment uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    Scripted,
    Llm,
}

/// Per-episode knobs. The defaults are the tuned operating point: five
/// neighbors, field weights 0.4/0.4/0.2, three revisions, seed 42.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub k: usize,
    pub weights: RetrievalWeights,
    pub max_revisions: u32,
    pub seed: u64,
    pub memory_enabled: bool,
    pub prediction_enabled: bool,
    pub planner_kind: PlannerKind,
    pub min_similarity: f64,
    pub failure_threshold: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            k: 5,
            weights: RetrievalWeights::default(),
            max_revisions: 3,
            seed: 42,
            memory_enabled: true,
            prediction_enabled: true,
            planner_kind: PlannerKind::Scripted,
            min_similarity: DEFAULT_MIN_SIMILARITY,
            failure_threshold: DEFAULT_FAILURE_THRESHOLD,
        }
    }
}

impl EpisodeConfig {
    /// The no-retrieval ablation: planning sees an empty memory.
    pub fn without_memory(mut self) -> Self {
        self.memory_enabled = false;
        self
    }

    /// The single-shot ablation: no outcome prediction, no revision loop.
    pub fn single_shot(mut self) -> Self {
        self.prediction_enabled = false;
        self
    }
}

/// One candidate plan inside an episode. Only the last attempt executes;
/// earlier ones were rejected by prediction.
#[derive(Debug, Clone)]
pub struct Attempt {
    pub plan: Plan,
    pub prediction: Option<OutcomePrediction>,
    pub outcome: Option<Outcome>,
}

/// Everything one episode did.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub task: TaskSpec,
    pub task_text: String,
    /// Next immediate objective, consulted for tier 3 and above.
    pub subtask: Option<String>,
    pub attempts: Vec<Attempt>,
    pub final_success: bool,
    pub steps_used: u32,
    pub revisions: u32,
    pub recorded_tuple_id: u64,
}

/// Runs one full cycle on `task` and records exactly one tuple in `store`.
/// `episode_index` becomes the tuple's sequence stamp.
pub fn run_episode(
    world: &World,
    store: &mut ExperienceStore,
    planner: &dyn Planner,
    task: &TaskSpec,
    config: &EpisodeConfig,
    episode_index: u64,
) -> Result<EpisodeRecord, AgentError> {
    let view = world.planner_view();
    let state = world.reset(task, config.seed);
    let task_text = task.text(world.table());

    // Sub-task decomposition is consulted from tier 3 up; the objective is
    // folded into the state text so retrieval and prompts both see it.
    let subtask = if task.tier >= 3 {
        planner
            .next_subtask(&state.inventory, task, &view)
            .ok()
            .map(|s| s.text)
    } else {
        None
    };
    let mut state_text = world.describe_state(&state);
    if let Some(objective) = &subtask {
        state_text.push_str(&format!("\nNext objective: {objective}."));
    }
    let state_json = serde_json::to_string(&state).expect("state serializes");
    let description = match planner.describe_environment(&state_json) {
        Ok(d) => d,
        Err(e) => {
            log::warn!("describe_environment failed, using world text: {e}");
            state_text.clone()
        }
    };
    let ctx = PlanningContext {
        state_text,
        state_json,
        description,
        task: task.clone(),
        task_text: task_text.clone(),
    };

    let neighbors = if config.memory_enabled {
        retrieve_experiences(store, &ctx.state_text, &ctx.task_text, config.k, &config.weights)?
    } else {
        Vec::new()
    };
    let insights = match planner.analyze_experiences(&ctx, &neighbors) {
        Ok(insights) => insights,
        Err(e) => {
            log::warn!("experience analysis failed, planning without insights: {e}");
            Vec::new()
        }
    };

    let initial_plan = match planner.generate_plan(&ctx, &neighbors, &insights, &view) {
        Ok(plan) => plan,
        Err(e) => {
            // Planner errors still close the loop: the episode is recorded
            // as a failure so the miss itself becomes an experience.
            let outcome_text =
                OutcomeText::new("failed: planner_error", false, &e.to_string()).render();
            let recorded_tuple_id = store.add_texts(
                episode_index,
                &ctx.state_text,
                &ctx.task_text,
                "(planner error: no plan produced)",
                &outcome_text,
                false,
            )?;
            return Ok(EpisodeRecord {
                task: task.clone(),
                task_text,
                subtask,
                attempts: Vec::new(),
                final_success: false,
                steps_used: 0,
                revisions: 0,
                recorded_tuple_id,
            });
        }
    };

    let mut attempts = vec![Attempt {
        plan: initial_plan,
        prediction: None,
        outcome: None,
    }];
    let mut revisions = 0u32;
    if config.prediction_enabled {
        loop {
            let current = attempts.last().expect("non-empty").plan.clone();
            let prediction = if config.memory_enabled {
                predict_outcome(
                    store,
                    &ctx.state_text,
                    &ctx.task_text,
                    &current,
                    config.k.max(1),
                    &config.weights,
                    config.min_similarity,
                    config.failure_threshold,
                )?
            } else {
                OutcomePrediction::cold_start()
            };
            let predicted_success = prediction.predicted_success;
            attempts.last_mut().expect("non-empty").prediction = Some(prediction.clone());
            if predicted_success || revisions >= config.max_revisions {
                break;
            }
            match planner.revise_plan(&ctx, &current, &prediction, &view) {
                Ok(Revision::Revised(plan)) => {
                    revisions += 1;
                    attempts.push(Attempt {
                        plan,
                        prediction: None,
                        outcome: None,
                    });
                }
                Ok(Revision::FixedPoint) => break,
                Err(e) => {
                    log::warn!("revision failed, executing the current plan: {e}");
                    break;
                }
            }
        }
    }

    let final_plan = attempts.last().expect("non-empty").plan.clone();
    let (outcome_text, final_success, steps_used) =
        match world.execute_plan(task, &state, &final_plan.steps) {
            Ok((outcome, after)) => {
                let text = outcome.to_outcome_text();
                let success = outcome.success;
                let steps = after.steps_used;
                attempts.last_mut().expect("non-empty").outcome = Some(outcome);
                (text, success, steps)
            }
            Err(world_error) => {
                // A plan the world refuses to run is a planner fault.
                let text = OutcomeText::new(
                    "failed: planner_error",
                    false,
                    &format!("plan rejected: {world_error}"),
                )
                .render();
                (text, false, 0)
            }
        };

    let plan_text_for_record = if final_plan.raw_text.trim().is_empty() {
        "(planner error: empty plan)".to_string()
    } else {
        final_plan.raw_text.clone()
    };
    let recorded_tuple_id = store.add_texts(
        episode_index,
        &ctx.state_text,
        &ctx.task_text,
        &plan_text_for_record,
        &outcome_text,
        final_success,
    )?;

    Ok(EpisodeRecord {
        task: task.clone(),
        task_text,
        subtask,
        attempts,
        final_success,
        steps_used,
        revisions,
        recorded_tuple_id,
    })
}

/// Trial-level settings.
#[derive(Debug, Clone, Copy)]
pub struct TrialOptions {
    pub trials: u32,
    /// Episodes a trial may spend on one task before giving up.
    pub episodes_per_trial: u32,
    /// Thread one store across all tasks in sequence instead of starting
    /// fresh per trial.
    pub continuous: bool,
}

impl Default for TrialOptions {
    fn default() -> Self {
        Self {
            trials: 30,
            episodes_per_trial: 1,
            continuous: false,
        }
    }
}

/// Aggregates for one task across trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskMetrics {
    pub task: String,
    pub tier: u8,
    pub trials: u32,
    pub successes: u32,
    pub success_rate: f64,
    pub mean_steps: f64,
    /// Mean episodes until first success, censored at the episode cap for
    /// trials that never succeeded.
    pub novel_learning_iterations: u32,
    pub db_size_final: usize,
}

/// Full report: per-task rows plus run-level series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub rows: Vec<TaskMetrics>,
    /// Store size after each task (continuous mode; last trial's sweep).
    pub db_size_timeline: Vec<usize>,
    pub cumulative_steps: u64,
}

pub const METRICS_CSV_HEADER: &str =
    "task,tier,trials,successes,success_rate,mean_steps,novel_learning_iterations,db_size_final";

impl TaskMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.4},{:.1},{},{}",
            self.task,
            self.tier,
            self.trials,
            self.successes,
            self.success_rate,
            self.mean_steps,
            self.novel_learning_iterations,
            self.db_size_final
        )
    }
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_row());
            out.push('\n');
        }
        out
    }

    /// Aligned human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<20} {:>4} {:>6} {:>9} {:>12} {:>10} {:>8} {:>8}\n",
            "task", "tier", "trials", "successes", "success_rate", "mean_steps", "learn", "db"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<20} {:>4} {:>6} {:>9} {:>12.4} {:>10.1} {:>8} {:>8}\n",
                r.task,
                r.tier,
                r.trials,
                r.successes,
                r.success_rate,
                r.mean_steps,
                r.novel_learning_iterations,
                r.db_size_final
            ));
        }
        out.push_str(&format!("cumulative steps: {}\n", self.cumulative_steps));
        if !self.db_size_timeline.is_empty() {
            let sizes: Vec<String> = self.db_size_timeline.iter().map(|s| s.to_string()).collect();
            out.push_str(&format!("db size timeline: {}\n", sizes.join(" -> ")));
        }
        out
    }
}

struct TaskAccumulator {
    successes: u32,
    learned_at_sum: u64,
    steps_sum: u64,
    db_final: usize,
}

/// Runs the trial matrix. Non-continuous mode gives every trial a fresh
/// clone of `store_template`; continuous mode threads one clone across the
/// whole task sequence per trial. Trial `j` plans with seed `base + j`.
pub fn run_trials(
    world: &World,
    planner: &dyn Planner,
    tasks: &[TaskSpec],
    options: &TrialOptions,
    config: &EpisodeConfig,
    store_template: &ExperienceStore,
) -> Result<MetricsReport, AgentError> {
    let mut accumulators: Vec<TaskAccumulator> = tasks
        .iter()
        .map(|_| TaskAccumulator {
            successes: 0,
            learned_at_sum: 0,
            steps_sum: 0,
            db_final: 0,
        })
        .collect();
    let mut timeline: Vec<usize> = Vec::new();
    let mut cumulative_steps: u64 = 0;

    for trial in 0..options.trials {
        let mut trial_config = config.clone();
        trial_config.seed = config.seed.wrapping_add(trial as u64);
        let mut shared_store = options.continuous.then(|| store_template.clone());
        if options.continuous {
            timeline.clear();
        }
        let mut episode_counter: u64 = 0;
        for (task_index, task) in tasks.iter().enumerate() {
            let mut own_store = if options.continuous {
                None
            } else {
                Some(store_template.clone())
            };
            let store: &mut ExperienceStore = shared_store
                .as_mut()
                .or(own_store.as_mut())
                .expect("one store exists");
            let mut learned_at: Option<u32> = None;
            let mut task_steps: u64 = 0;
            for episode in 1..=options.episodes_per_trial {
                episode_counter += 1;
                let record =
                    run_episode(world, store, planner, task, &trial_config, episode_counter)?;
                task_steps += record.steps_used as u64;
                if record.final_success {
                    learned_at = Some(episode);
                    break;
                }
            }
            let acc = &mut accumulators[task_index];
            if learned_at.is_some() {
                acc.successes += 1;
            }
            acc.learned_at_sum +=
                learned_at.unwrap_or(options.episodes_per_trial).max(1) as u64;
            acc.steps_sum += task_steps;
            acc.db_final = store.len();
            cumulative_steps += task_steps;
            if options.continuous {
                timeline.push(store.len());
            }
        }
    }

    let trials = options.trials.max(1);
    let rows = tasks
        .iter()
        .zip(&accumulators)
        .map(|(task, acc)| TaskMetrics {
            task: task.goal_item.clone(),
            tier: task.tier,
            trials: options.trials,
            successes: acc.successes,
            success_rate: acc.successes as f64 / trials as f64,
            mean_steps: acc.steps_sum as f64 / trials as f64,
            novel_learning_iterations: (acc.learned_at_sum as f64 / trials as f64).round() as u32,
            db_size_final: acc.db_final,
        })
        .collect();
    Ok(MetricsReport {
        rows,
        db_size_timeline: timeline,
        cumulative_steps,
    })
}
