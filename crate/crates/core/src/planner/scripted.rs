//! Deterministic planner: topological expansion over the visible recipe
//! table, plus failure-informed repairs.
//!
//! The visible table omits hidden tool requirements and the hunger rule, so
//! a cold plan is "naive" by construction. Lessons arrive as failure
//! insights parsed from recorded outcomes: `failed: requires <item>` injects
//! the item's acquisition chain, `failed: hunger` paces the plan with food
//! stops sized from where past plans starved.

use std::collections::BTreeSet;

use crate::outcome::parse_outcome_text;
use crate::world::{
    executions_for, parse_blocked_step, ActionStep, Inventory, PlannerView, TaskSpec, Verb,
};

use super::{
    Insight, InsightKind, OutcomePrediction, Plan, Planner, PlannerError, PlanningContext,
    RetrievedExperience, Revision, Subtask,
};

/// Extra cost budgeted for a hunt-plus-eat stop when pacing; covers the eat
/// itself, which has no visible cost.
const FOOD_STOP_PADDING: u32 = 8;
/// Never pace below this stretch length, or plans degenerate into feasting.
const MIN_STRETCH: u32 = 16;

#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedPlanner;

impl ScriptedPlanner {
    pub fn new() -> Self {
        Self
    }
}

impl Planner for ScriptedPlanner {
    fn describe_environment(&self, state_json: &str) -> Result<String, PlannerError> {
        Ok(state_json.to_string())
    }

    fn analyze_experiences(
        &self,
        ctx: &PlanningContext,
        neighbors: &[RetrievedExperience],
    ) -> Result<Vec<Insight>, PlannerError> {
        let mut failures: std::collections::BTreeMap<String, Vec<u64>> = Default::default();
        for n in neighbors {
            if n.tuple.success {
                continue;
            }
            let summary = parse_outcome_text(&n.tuple.outcome_text)
                .map(|o| o.summary)
                .unwrap_or_else(|_| n.tuple.outcome_text.clone());
            failures.entry(summary).or_default().push(n.tuple.id);
        }
        let mut insights: Vec<Insight> = failures
            .into_iter()
            .map(|(text, source_tuple_ids)| Insight {
                text,
                kind: InsightKind::FailureMode,
                source_tuple_ids,
            })
            .collect();
        for n in neighbors {
            if n.tuple.success && n.tuple.task_text == ctx.task_text {
                insights.push(Insight {
                    text: format!("proven plan on record for '{}'", ctx.task_text),
                    kind: InsightKind::Strategy,
                    source_tuple_ids: vec![n.tuple.id],
                });
            }
        }
        Ok(insights)
    }

    fn generate_plan(
        &self,
        ctx: &PlanningContext,
        neighbors: &[RetrievedExperience],
        insights: &[Insight],
        view: &PlannerView<'_>,
    ) -> Result<Plan, PlannerError> {
        let inventory = starting_inventory(&ctx.task);
        let draft = expand(view, inventory.clone(), &[], Some(&ctx.task))?;
        let lessons = gather_lessons(insights, neighbors, view, &draft);

        // A proven same-task plan is reused verbatim, but only when no
        // failure lesson applies: avoiding known failure modes wins over
        // repeating old successes.
        if lessons.required_items.is_empty() && !lessons.hunger {
            if let Some(plan) = reusable_success(insights, neighbors) {
                return Ok(plan);
            }
        }

        let steps = expand(view, inventory, &lessons.required_items, Some(&ctx.task))?;
        let steps = if lessons.hunger {
            pace_with_food(view, steps, lessons.hunger_budget)
        } else {
            steps
        };
        Ok(Plan::from_steps(steps))
    }

    fn revise_plan(
        &self,
        ctx: &PlanningContext,
        plan: &Plan,
        prediction: &OutcomePrediction,
        view: &PlannerView<'_>,
    ) -> Result<Revision, PlannerError> {
        let Some(failure_text) = prediction.dominant_failure_text.as_deref() else {
            return Ok(Revision::FixedPoint);
        };
        if let Some(item) = failure_text.strip_prefix("failed: requires ") {
            let item = item.trim();
            if plan.touches_item(item) {
                return Ok(Revision::FixedPoint);
            }
            // Prepend a self-contained acquisition chain for the missing
            // item; tools are not consumed, so the original steps still hold.
            let chain = expand(
                view,
                starting_inventory(&ctx.task),
                std::slice::from_ref(&item.to_string()),
                None,
            )?;
            if chain.is_empty() {
                return Ok(Revision::FixedPoint);
            }
            let mut steps = chain;
            steps.extend(plan.steps.iter().cloned());
            return Ok(Revision::Revised(Plan::from_steps(steps)));
        }
        if failure_text == "failed: hunger" {
            return Ok(match insert_single_food_stop(view, &plan.steps) {
                Some(steps) => Revision::Revised(Plan::from_steps(steps)),
                None => Revision::FixedPoint,
            });
        }
        Ok(Revision::FixedPoint)
    }

    fn next_subtask(
        &self,
        inventory: &Inventory,
        goal: &TaskSpec,
        view: &PlannerView<'_>,
    ) -> Result<Subtask, PlannerError> {
        let have = inventory.get(&goal.goal_item).copied().unwrap_or(0);
        if have >= goal.goal_count {
            return Ok(Subtask {
                text: subtask_text(view, &goal.goal_item),
                complete: true,
            });
        }
        let mut visiting = BTreeSet::new();
        let unmet = first_unmet(view, inventory, &goal.goal_item, &mut visiting)?
            .unwrap_or_else(|| goal.goal_item.clone());
        Ok(Subtask {
            text: subtask_text(view, &unmet),
            complete: false,
        })
    }
}

fn subtask_text(view: &PlannerView<'_>, item: &str) -> String {
    let verb = view
        .visible(item)
        .map(|r| r.verb.name())
        .unwrap_or("obtain");
    format!("{verb} {item}")
}

// Depth-first walk for the earliest unmet prerequisite: station first, then
// the visible tool, then ingredients. Returns None when `item` is already in
// the inventory.
fn first_unmet(
    view: &PlannerView<'_>,
    inventory: &Inventory,
    item: &str,
    visiting: &mut BTreeSet<String>,
) -> Result<Option<String>, PlannerError> {
    if inventory.get(item).copied().unwrap_or(0) > 0 {
        return Ok(None);
    }
    if !visiting.insert(item.to_string()) {
        return Err(PlannerError::Unreachable {
            item: item.to_string(),
        });
    }
    let recipe = view.visible(item).ok_or_else(|| PlannerError::Unreachable {
        item: item.to_string(),
    })?;
    let mut deps: Vec<&str> = Vec::new();
    if let Some(station) = recipe.station {
        deps.push(station);
    }
    if let Some(tool) = recipe.required_tool {
        deps.push(tool);
    }
    deps.extend(recipe.ingredients.keys().map(String::as_str));
    for dep in deps {
        if let Some(unmet) = first_unmet(view, inventory, dep, visiting)? {
            visiting.remove(item);
            return Ok(Some(unmet));
        }
    }
    visiting.remove(item);
    Ok(Some(item.to_string()))
}

fn starting_inventory(task: &TaskSpec) -> Inventory {
    let mut inventory = Inventory::new();
    for tool in &task.given_tools {
        *inventory.entry(tool.clone()).or_insert(0) += 1;
    }
    inventory
}

/// Lessons extracted from failure insights, gated on relevance to the draft.
#[derive(Debug, Default)]
struct Lessons {
    required_items: Vec<String>,
    hunger: bool,
    hunger_budget: Option<u32>,
}

fn gather_lessons(
    insights: &[Insight],
    neighbors: &[RetrievedExperience],
    view: &PlannerView<'_>,
    draft: &[ActionStep],
) -> Lessons {
    let tuple_by_id = |id: u64| neighbors.iter().find(|n| n.tuple.id == id);
    let mut required: BTreeSet<String> = BTreeSet::new();
    let mut lessons = Lessons::default();
    for insight in insights {
        if insight.kind != InsightKind::FailureMode {
            continue;
        }
        // An insight applies when some source failure was blocked at a step
        // this draft also contains, or when the source recorded no blocked
        // step at all (e.g. a plan that simply never reached its goal).
        let applies = insight.source_tuple_ids.iter().any(|id| {
            let Some(n) = tuple_by_id(*id) else {
                return false;
            };
            match blocked_step_of(&n.tuple.outcome_text) {
                Some(blocked) => draft
                    .iter()
                    .any(|s| s.verb == blocked.verb && s.item == blocked.item),
                None => true,
            }
        });
        if !applies {
            continue;
        }
        if let Some(item) = insight.text.strip_prefix("failed: requires ") {
            required.insert(item.trim().to_string());
        } else if insight.text == "failed: hunger" {
            lessons.hunger = true;
            let estimate = insight
                .source_tuple_ids
                .iter()
                .filter_map(|id| tuple_by_id(*id))
                .filter_map(|n| starvation_point(view, &n.tuple.plan_text, &n.tuple.outcome_text))
                .min();
            lessons.hunger_budget = match (lessons.hunger_budget, estimate) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
        }
    }
    // Tool chains build bottom-up: order required items by tool rank so each
    // chain's own hidden prerequisite (the previous tier) is already planned.
    let mut items: Vec<String> = required.into_iter().collect();
    items.sort_by(|a, b| {
        let key = |item: &str| {
            view.visible(item)
                .and_then(|r| r.tool.map(|t| (0u8, t.class.clone(), t.rank)))
                .unwrap_or((1, String::new(), 0))
        };
        key(a).cmp(&key(b)).then_with(|| a.cmp(b))
    });
    lessons.required_items = items;
    lessons
}

fn blocked_step_of(outcome_text: &str) -> Option<ActionStep> {
    let parsed = parse_outcome_text(outcome_text).ok()?;
    parse_blocked_step(&parsed.explanation)
}

// How much visible step cost a failed plan accumulated before the step it
// starved at. Survival up to that point proves the world tolerated at least
// this much, so it's a safe pacing budget.
fn starvation_point(view: &PlannerView<'_>, plan_text: &str, outcome_text: &str) -> Option<u32> {
    let blocked = blocked_step_of(outcome_text)?;
    let plan = Plan::parse(plan_text).ok()?;
    let mut accumulated: u32 = 0;
    for step in &plan.steps {
        if step.verb == blocked.verb && step.item == blocked.item {
            return Some(accumulated);
        }
        accumulated = accumulated.saturating_add(visible_cost(view, step));
    }
    None
}

fn visible_cost(view: &PlannerView<'_>, step: &ActionStep) -> u32 {
    if step.verb == Verb::Eat {
        return 1;
    }
    match view.visible(&step.item) {
        Some(recipe) => executions_for(step.quantity, recipe.quantity) * recipe.steps_cost,
        None => 0,
    }
}

fn reusable_success(insights: &[Insight], neighbors: &[RetrievedExperience]) -> Option<Plan> {
    for insight in insights {
        if insight.kind != InsightKind::Strategy {
            continue;
        }
        for id in &insight.source_tuple_ids {
            if let Some(n) = neighbors.iter().find(|n| n.tuple.id == *id) {
                if let Ok(plan) = Plan::parse(&n.tuple.plan_text) {
                    if !plan.is_empty() {
                        return Some(plan);
                    }
                }
            }
        }
    }
    None
}

/// Expands acquisition chains through the visible table with one simulated
/// inventory threaded across the whole sequence: first each pre-required
/// item (tool lessons), then the task goal.
fn expand(
    view: &PlannerView<'_>,
    inventory: Inventory,
    pre_items: &[String],
    task: Option<&TaskSpec>,
) -> Result<Vec<ActionStep>, PlannerError> {
    let mut expansion = Expansion {
        view,
        inventory,
        steps: Vec::new(),
        in_progress: BTreeSet::new(),
    };
    for item in pre_items {
        expansion.ensure_requirement(item)?;
    }
    if let Some(task) = task {
        // When the goal is already in the starting inventory the plan must
        // still produce one, so the sim forgets what it holds.
        if expansion
            .inventory
            .get(&task.goal_item)
            .copied()
            .unwrap_or(0)
            >= task.goal_count
        {
            expansion.inventory.remove(&task.goal_item);
        }
        expansion.acquire(&task.goal_item, task.goal_count)?;
    }
    Ok(expansion.steps)
}

struct Expansion<'a, 'v> {
    view: &'a PlannerView<'v>,
    inventory: Inventory,
    steps: Vec<ActionStep>,
    in_progress: BTreeSet<String>,
}

impl Expansion<'_, '_> {
    fn acquire(&mut self, item: &str, count: u32) -> Result<(), PlannerError> {
        let have = self.inventory.get(item).copied().unwrap_or(0);
        if have >= count {
            return Ok(());
        }
        let missing = count - have;
        let recipe = self
            .view
            .visible(item)
            .ok_or_else(|| PlannerError::Unreachable {
                item: item.to_string(),
            })?;
        if !self.in_progress.insert(item.to_string()) {
            // Tool or station loop with nothing given to break it.
            return Err(PlannerError::Unreachable {
                item: item.to_string(),
            });
        }
        let executions = executions_for(missing, recipe.quantity);
        if let Some(station) = recipe.station {
            self.ensure_requirement(station)?;
        }
        if let Some(tool) = recipe.required_tool {
            self.ensure_tool(tool)?;
        }
        for (ingredient, per_execution) in recipe.ingredients {
            let needed = per_execution * executions;
            self.acquire(ingredient, needed)?;
            self.consume(ingredient, needed);
        }
        match recipe.verb {
            // Searching verbs are emitted one execution at a time so food
            // stops can interleave with long hauls.
            Verb::Mine | Verb::Hunt => {
                for _ in 0..executions {
                    self.steps
                        .push(ActionStep::new(recipe.verb, item, recipe.quantity));
                }
            }
            _ => self.steps.push(ActionStep::new(recipe.verb, item, missing)),
        }
        *self.inventory.entry(item.to_string()).or_insert(0) += executions * recipe.quantity;
        self.in_progress.remove(item);
        Ok(())
    }

    // Presence is enough for stations and plain requirements; nothing is
    // consumed.
    fn ensure_requirement(&mut self, item: &str) -> Result<(), PlannerError> {
        if self.inventory.get(item).copied().unwrap_or(0) == 0 {
            // A required tool may already be covered by a better one.
            if self.view.visible(item).and_then(|r| r.tool).is_some() {
                return self.ensure_tool(item);
            }
            self.acquire(item, 1)?;
        }
        Ok(())
    }

    fn ensure_tool(&mut self, required: &str) -> Result<(), PlannerError> {
        let satisfied = self
            .inventory
            .iter()
            .any(|(item, count)| *count > 0 && self.view.tool_satisfies(item, required));
        if !satisfied {
            self.acquire(required, 1)?;
        }
        Ok(())
    }

    fn consume(&mut self, item: &str, count: u32) {
        if let Some(have) = self.inventory.get_mut(item) {
            *have = have.saturating_sub(count);
            if *have == 0 {
                self.inventory.remove(item);
            }
        }
    }
}

/// Inserts `hunt <food>` + `eat <food>` stops so no stretch of visible step
/// cost since the last meal exceeds the learned budget. Without an estimate,
/// a single stop goes in front of the most expensive step (last such step on
/// ties), the long haul most likely to starve.
fn pace_with_food(
    view: &PlannerView<'_>,
    steps: Vec<ActionStep>,
    budget: Option<u32>,
) -> Vec<ActionStep> {
    let Some(food) = view.cheapest_food() else {
        return steps;
    };
    let food_item = food.output.to_string();
    match budget {
        Some(estimate) => {
            let estimate = estimate.max(MIN_STRETCH + food.steps_cost + FOOD_STOP_PADDING);
            let stretch_limit = estimate - food.steps_cost - FOOD_STOP_PADDING;
            let mut out = Vec::with_capacity(steps.len() + 4);
            let mut accumulated: u32 = 0;
            for step in steps {
                let cost = visible_cost(view, &step);
                if accumulated + cost > stretch_limit {
                    out.push(ActionStep::new(Verb::Hunt, &food_item, 1));
                    out.push(ActionStep::new(Verb::Eat, &food_item, 1));
                    accumulated = 0;
                }
                accumulated += cost;
                out.push(step);
            }
            out
        }
        None => insert_single_food_stop(view, &steps).unwrap_or(steps),
    }
}

// One food stop before the most expensive step; None when the stop is
// already there (nothing left to change).
fn insert_single_food_stop(view: &PlannerView<'_>, steps: &[ActionStep]) -> Option<Vec<ActionStep>> {
    let food = view.cheapest_food()?;
    let mut target: Option<(usize, u32)> = None;
    for (index, step) in steps.iter().enumerate() {
        if step.verb == Verb::Eat {
            continue;
        }
        let cost = visible_cost(view, step);
        if target.map(|(_, best)| cost >= best).unwrap_or(true) {
            target = Some((index, cost));
        }
    }
    let (index, _) = target?;
    if index >= 1 && steps[index - 1].verb == Verb::Eat {
        return None;
    }
    let mut out = steps.to_vec();
    out.insert(index, ActionStep::new(Verb::Eat, food.output, 1));
    out.insert(index, ActionStep::new(Verb::Hunt, food.output, 1));
    Some(out)
}
