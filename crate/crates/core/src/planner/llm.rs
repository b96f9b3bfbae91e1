//! Language-model-backed planner over an OpenAI-compatible chat API.
//!
//! Prompts are shipped as resource files with `${...}` interpolation slots
//! and sent one user message at a time at temperature 0. Replies to the
//! action-selection prompt are parsed with the plan grammar; lines from the
//! low-level movement vocabulary are treated as no-ops at this abstraction
//! level and skipped.

use serde::Deserialize;
use serde_json::json;

use crate::outcome::{parse_outcome_text, OutcomeText};
use crate::world::{parse_step_line, ActionStep, Inventory, PlannerView, TaskSpec};

use super::{
    Insight, InsightKind, OutcomePrediction, Plan, Planner, PlannerError, PlanningContext,
    RetrievedExperience, Revision, Subtask,
};

/// Environment variable holding the bearer token for the chat API.
pub const LLM_TOKEN_ENV: &str = "MINDSTORES_LLM_TOKEN";

/// The prompt templates shipped with the crate, verbatim apart from their
/// `${...}` interpolation slots.
pub mod prompts {
    pub const ENVIRONMENT_DESCRIPTION: &str =
        include_str!("../../prompts/environment_description.txt");
    pub const SITUATION_ANALYSIS: &str = include_str!("../../prompts/situation_analysis.txt");
    pub const STRATEGY_PLANNING: &str = include_str!("../../prompts/strategy_planning.txt");
    pub const ACTION_SELECTION: &str = include_str!("../../prompts/action_selection.txt");
    pub const OUTCOME_EVALUATION: &str = include_str!("../../prompts/outcome_evaluation.txt");

    /// Replaces each `${name}` slot with its value.
    pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
        let mut out = template.to_string();
        for (name, value) in values {
            out = out.replace(&format!("${{{name}}}"), value);
        }
        out
    }
}

// Reply lines from the prompt's low-level action vocabulary; they have no
// counterpart at the sub-goal level and are skipped as no-ops.
const LOW_LEVEL_VOCAB: &[&str] = &[
    "forward",
    "backward",
    "move_forward",
    "move_backward",
    "move_left",
    "move_right",
    "jump",
    "sneak",
    "sprint",
    "attack",
    "use",
    "drop",
    "craft",
    "equip",
    "place",
    "destroy",
    "look_horizontal",
    "look_vertical",
    "no_op",
];

/// Parses an action-selection reply into plan steps. Lines are trimmed of
/// list markers; grammar lines become steps, low-level vocabulary lines are
/// dropped, anything else fails the parse.
pub fn parse_llm_actions(reply: &str) -> Result<Vec<ActionStep>, PlannerError> {
    let mut steps = Vec::new();
    for raw_line in reply.lines() {
        let mut line = raw_line.trim();
        for marker in ["- ", "* "] {
            line = line.strip_prefix(marker).unwrap_or(line).trim();
        }
        if let Some((numbering, rest)) = line.split_once('.') {
            if !numbering.is_empty() && numbering.chars().all(|c| c.is_ascii_digit()) {
                line = rest.trim();
            }
        }
        if line.is_empty() {
            continue;
        }
        if let Some(step) = parse_step_line(line) {
            steps.push(step);
            continue;
        }
        let head = line
            .split_whitespace()
            .next()
            .unwrap_or("")
            .to_ascii_lowercase();
        if LOW_LEVEL_VOCAB.contains(&head.as_str()) {
            continue;
        }
        return Err(PlannerError::UnparseableReply(format!(
            "unrecognized action line '{raw_line}'"
        )));
    }
    if steps.is_empty() {
        return Err(PlannerError::UnparseableReply(
            "reply contained no executable steps".into(),
        ));
    }
    Ok(steps)
}

/// Connection settings for the chat-completions endpoint.
#[derive(Debug, Clone)]
pub struct LlmConfig {
    pub url: String,
    pub model: String,
}

/// Planner that drives every operation through chat-completion prompts.
pub struct LlmPlanner {
    config: LlmConfig,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl LlmPlanner {
    pub fn new(config: LlmConfig) -> Self {
        Self {
            config,
            client: reqwest::blocking::Client::new(),
        }
    }

    fn chat(&self, prompt: &str) -> Result<String, PlannerError> {
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut request = self.client.post(&self.config.url).json(&body);
        if let Ok(token) = std::env::var(LLM_TOKEN_ENV) {
            request = request.bearer_auth(token);
        }
        let response = request
            .send()
            .map_err(|e| PlannerError::Service(format!("transport: {e}")))?;
        if !response.status().is_success() {
            return Err(PlannerError::Service(format!(
                "status {}",
                response.status()
            )));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| PlannerError::Service(format!("malformed response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| PlannerError::Service("empty choices".into()))
    }

    fn experiences_digest(neighbors: &[RetrievedExperience]) -> String {
        if neighbors.is_empty() {
            return "(no similar past experiences on record)".to_string();
        }
        let mut out = String::from("Similar past experiences:\n");
        for (index, n) in neighbors.iter().enumerate() {
            out.push_str(&format!(
                "{}. [score {:.3}] task: {} | plan: {} | outcome: {}\n",
                index + 1,
                n.result.score,
                n.tuple.task_text,
                n.tuple.plan_text.replace('\n', "; "),
                n.tuple.outcome_text,
            ));
        }
        out
    }

    fn insights_digest(insights: &[Insight]) -> String {
        if insights.is_empty() {
            return "(no insights yet)".to_string();
        }
        insights
            .iter()
            .map(|i| i.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn plan_from_strategy(
        &self,
        ctx: &PlanningContext,
        strategy_reply: &str,
    ) -> Result<Plan, PlannerError> {
        let action_prompt = prompts::fill(
            prompts::ACTION_SELECTION,
            &[("plan", strategy_reply), ("state_json_str", &ctx.state_json)],
        );
        let reply = self.chat(&action_prompt)?;
        match parse_llm_actions(&reply) {
            Ok(steps) => Ok(Plan::from_steps(steps)),
            // One re-prompt, then give up.
            Err(_) => {
                let reply = self.chat(&action_prompt)?;
                let steps = parse_llm_actions(&reply)?;
                Ok(Plan::from_steps(steps))
            }
        }
    }

    /// Runs the outcome-evaluation prompt and parses the grammar reply.
    pub fn evaluate_outcome(
        &self,
        initial_state_json: &str,
        final_state_json: &str,
        reward: f64,
        done: bool,
        plan_text: &str,
        executed_actions: &str,
    ) -> Result<OutcomeText, PlannerError> {
        let prompt = prompts::fill(
            prompts::OUTCOME_EVALUATION,
            &[
                ("initial_state", initial_state_json),
                ("final_state", final_state_json),
                ("reward", &reward.to_string()),
                ("done", &done.to_string()),
                ("gpt_plan", plan_text),
                ("executed_actions", executed_actions),
            ],
        );
        let reply = self.chat(&prompt)?;
        let line = reply
            .lines()
            .find(|l| l.contains('|'))
            .unwrap_or(reply.trim());
        parse_outcome_text(line).map_err(|e| PlannerError::UnparseableReply(e.to_string()))
    }
}

impl Planner for LlmPlanner {
    fn describe_environment(&self, state_json: &str) -> Result<String, PlannerError> {
        let prompt = prompts::fill(
            prompts::ENVIRONMENT_DESCRIPTION,
            &[("state_json_str", state_json)],
        );
        self.chat(&prompt)
    }

    fn analyze_experiences(
        &self,
        ctx: &PlanningContext,
        neighbors: &[RetrievedExperience],
    ) -> Result<Vec<Insight>, PlannerError> {
        if neighbors.is_empty() {
            return Ok(Vec::new());
        }
        let description = format!(
            "{}\n\n{}",
            ctx.description,
            Self::experiences_digest(neighbors)
        );
        let prompt = prompts::fill(
            prompts::SITUATION_ANALYSIS,
            &[
                ("description", &description),
                ("state_json_str", &ctx.state_json),
            ],
        );
        let reply = self.chat(&prompt)?;
        let sources: Vec<u64> = neighbors.iter().map(|n| n.tuple.id).collect();
        Ok(vec![Insight {
            text: reply.trim().to_string(),
            kind: InsightKind::Dynamics,
            source_tuple_ids: sources,
        }])
    }

    fn generate_plan(
        &self,
        ctx: &PlanningContext,
        neighbors: &[RetrievedExperience],
        insights: &[Insight],
        _view: &PlannerView<'_>,
    ) -> Result<Plan, PlannerError> {
        let description = format!(
            "{}\n\n{}",
            ctx.description,
            Self::experiences_digest(neighbors)
        );
        let prompt = prompts::fill(
            prompts::STRATEGY_PLANNING,
            &[
                ("goal", &ctx.task_text),
                ("description", &description),
                ("explanation", &Self::insights_digest(insights)),
                ("state_json_str", &ctx.state_json),
            ],
        );
        let strategy = self.chat(&prompt)?;
        self.plan_from_strategy(ctx, &strategy)
    }

    fn revise_plan(
        &self,
        ctx: &PlanningContext,
        plan: &Plan,
        prediction: &OutcomePrediction,
        _view: &PlannerView<'_>,
    ) -> Result<Revision, PlannerError> {
        let failure = prediction
            .dominant_failure_text
            .as_deref()
            .unwrap_or("predicted failure");
        let explanation = format!(
            "The previous plan:\n{}\n\nis predicted to fail: {failure} (confidence {:.2}). Revise it.",
            plan.raw_text, prediction.confidence
        );
        let prompt = prompts::fill(
            prompts::STRATEGY_PLANNING,
            &[
                ("goal", &ctx.task_text),
                ("description", &ctx.description),
                ("explanation", &explanation),
                ("state_json_str", &ctx.state_json),
            ],
        );
        let strategy = self.chat(&prompt)?;
        let revised = self.plan_from_strategy(ctx, &strategy)?;
        if revised.raw_text == plan.raw_text {
            Ok(Revision::FixedPoint)
        } else {
            Ok(Revision::Revised(revised))
        }
    }

    fn next_subtask(
        &self,
        inventory: &Inventory,
        goal: &TaskSpec,
        _view: &PlannerView<'_>,
    ) -> Result<Subtask, PlannerError> {
        let inventory_json =
            serde_json::to_string(inventory).unwrap_or_else(|_| "{}".to_string());
        let prompt = format!(
            "You are an expert Minecraft strategist. The goal is: obtain {} x{}.\n\
             Current inventory (JSON): {inventory_json}\n\
             Reply with ONLY the single next immediate task as 'verb item', nothing else.",
            goal.goal_item, goal.goal_count
        );
        let reply = self.chat(&prompt)?;
        let text = reply
            .lines()
            .find(|l| !l.trim().is_empty())
            .unwrap_or("")
            .trim()
            .to_lowercase();
        if text.is_empty() {
            return Err(PlannerError::UnparseableReply("empty subtask reply".into()));
        }
        let complete = inventory.get(&goal.goal_item).copied().unwrap_or(0) >= goal.goal_count;
        Ok(Subtask { text, complete })
    }
}
