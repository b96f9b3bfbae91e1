//! Deterministic crafting-world simulator.
//!
//! Plans execute step by step against the recipe table: stations, tool
//! requirements (hidden ones included), ingredients, the step budget, and the
//! hunger clock are all checked in a fixed order. Execution halts at the
//! first failure and reports it in a fixed grammar that downstream insight
//! extraction can parse. The world is a pure function: (state, plan) fully
//! determines (outcome, next state).

mod recipes;

pub use recipes::{
    executions_for, PlannerView, Recipe, RecipeTable, ToolSpec, Verb, VisibleRecipe, WorldError,
    WorldRules,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Inventory contents, item name to count.
pub type Inventory = BTreeMap<String, u32>;

/// Step budgets per task tier.
pub fn default_step_budget(tier: u8) -> u32 {
    match tier {
        0..=2 => 3_000,
        3 | 4 => 6_000,
        5 => 3_000,
        6 | 7 => 6_000,
        _ => 12_000,
    }
}

/// The tool every task starts with.
pub const DEFAULT_GIVEN_TOOL: &str = "wooden_axe";

/// A task: obtain `goal_count` of `goal_item` within the step budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub goal_item: String,
    pub goal_count: u32,
    pub tier: u8,
    pub step_budget: u32,
    pub given_tools: Vec<String>,
}

impl TaskSpec {
    /// Builds the task for obtaining one unit of a table item, with the
    /// tier's default budget and the standard starting tool.
    pub fn for_item(table: &RecipeTable, item: &str) -> Result<Self, WorldError> {
        let recipe = table
            .recipe(item)
            .ok_or_else(|| WorldError::UnknownTask(item.to_string()))?;
        Ok(Self {
            goal_item: recipe.output.clone(),
            goal_count: 1,
            tier: recipe.tier,
            step_budget: default_step_budget(recipe.tier),
            given_tools: vec![DEFAULT_GIVEN_TOOL.to_string()],
        })
    }

    /// Natural-language task text, e.g. `"mine iron_ore"`.
    pub fn text(&self, table: &RecipeTable) -> String {
        let verb = table
            .recipe(&self.goal_item)
            .map(|r| r.verb.name())
            .unwrap_or("obtain");
        if self.goal_count == 1 {
            format!("{verb} {}", self.goal_item)
        } else {
            format!("{verb} {} {}", self.goal_count, self.goal_item)
        }
    }
}

/// Immutable world snapshot. Executing a plan returns a new state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub inventory: Inventory,
    pub hunger: u32,
    pub steps_used: u32,
    pub step_budget: u32,
    pub rng_seed: u64,
}

/// One plan step: apply `verb` to `item`, aiming for `quantity` units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionStep {
    pub verb: Verb,
    pub item: String,
    pub quantity: u32,
}

impl ActionStep {
    pub fn new(verb: Verb, item: &str, quantity: u32) -> Self {
        Self {
            verb,
            item: item.to_string(),
            quantity,
        }
    }

    /// Grammar form: `verb item` or `verb item xN`.
    pub fn render(&self) -> String {
        if self.quantity == 1 {
            format!("{} {}", self.verb, self.item)
        } else {
            format!("{} {} x{}", self.verb, self.item, self.quantity)
        }
    }
}

impl std::fmt::Display for ActionStep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.render())
    }
}

/// Why a plan failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    MissingTool,
    MissingIngredient,
    MissingStation,
    HungerDeath,
    BudgetExhausted,
}

/// Execution result. `failure_reason` and `failure_text` are present exactly
/// when `success` is false; `failure_text` follows the fixed grammar
/// `failed: requires <item>` / `failed: hunger` / `failed: budget`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub success: bool,
    pub summary: String,
    pub failure_reason: Option<FailureReason>,
    pub failure_text: Option<String>,
    pub detail: String,
}

impl Outcome {
    fn succeeded(goal_item: &str, goal_count: u32, steps_used: u32) -> Self {
        Self {
            success: true,
            summary: format!("obtained {goal_item} x{goal_count}"),
            failure_reason: None,
            failure_text: None,
            detail: format!("completed in {steps_used} steps"),
        }
    }

    fn failed(reason: FailureReason, failure_text: String, detail: String) -> Self {
        Self {
            success: false,
            summary: failure_text.clone(),
            failure_reason: Some(reason),
            failure_text: Some(failure_text),
            detail,
        }
    }

    /// Serializes to the `outcome|success|explanation` grammar.
    pub fn to_outcome_text(&self) -> String {
        crate::outcome::OutcomeText::new(&self.summary, self.success, &self.detail).render()
    }
}

/// The step at which execution stopped, recorded inside failure details as
/// `blocked at '<verb> <item> [xN]'` so planners can localize the failure.
pub fn blocked_detail(step: &ActionStep, cause: &str) -> String {
    format!("blocked at '{}': {cause}", step.render())
}

/// Recovers the blocked step from a failure detail, if one is recorded.
pub fn parse_blocked_step(detail: &str) -> Option<ActionStep> {
    let rest = detail.split("blocked at '").nth(1)?;
    let step_text = rest.split('\'').next()?;
    parse_step_line(step_text)
}

/// Parses one `verb item [xN]` line, case-insensitively.
pub fn parse_step_line(line: &str) -> Option<ActionStep> {
    let mut parts = line.split_whitespace();
    let verb = Verb::parse(parts.next()?)?;
    let item = parts.next()?.to_lowercase();
    let quantity = match parts.next() {
        None => 1,
        Some(q) => {
            let q = q.to_ascii_lowercase();
            let digits = q.strip_prefix('x')?;
            digits.parse::<u32>().ok().filter(|n| *n >= 1)?
        }
    };
    if parts.next().is_some() {
        return None;
    }
    Some(ActionStep {
        verb,
        item,
        quantity,
    })
}

/// The simulator: a recipe table plus world rules.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    table: RecipeTable,
}

impl World {
    pub fn new(table: RecipeTable) -> Self {
        Self { table }
    }

    /// Builtin table with hunger as shipped.
    pub fn builtin() -> Self {
        Self::new(RecipeTable::builtin())
    }

    /// Builtin table with the hunger mechanic switched off.
    pub fn builtin_without_hunger() -> Self {
        let mut table = RecipeTable::builtin();
        table.rules.hunger_limit = None;
        Self::new(table)
    }

    pub fn table(&self) -> &RecipeTable {
        &self.table
    }

    pub fn planner_view(&self) -> PlannerView<'_> {
        self.table.planner_view()
    }

    /// Fresh state for a task: given tools in the inventory, clocks at zero.
    /// The seed drives any cost jitter the table declares.
    pub fn reset(&self, task: &TaskSpec, seed: u64) -> WorldState {
        let mut inventory = Inventory::new();
        for tool in &task.given_tools {
            *inventory.entry(tool.clone()).or_insert(0) += 1;
        }
        WorldState {
            inventory,
            hunger: 0,
            steps_used: 0,
            step_budget: task.step_budget,
            rng_seed: seed,
        }
    }

    /// Runs a plan to completion or first failure. Malformed steps (unknown
    /// item, wrong verb, eating a non-food) reject the plan before any
    /// mutation. Success means the goal count is in the inventory at the end.
    pub fn execute_plan(
        &self,
        task: &TaskSpec,
        state: &WorldState,
        steps: &[ActionStep],
    ) -> Result<(Outcome, WorldState), WorldError> {
        for step in steps {
            self.validate_step(step)?;
        }
        let mut st = state.clone();
        let hunger_limit = self.table.rules.hunger_limit;
        for step in steps {
            let (cost, executions) = self.step_cost(step, &st);

            if st.steps_used.saturating_add(cost) > st.step_budget {
                let outcome = Outcome::failed(
                    FailureReason::BudgetExhausted,
                    "failed: budget".into(),
                    blocked_detail(step, "budget"),
                );
                return Ok((outcome, st));
            }

            if step.verb == Verb::Eat {
                if st.inventory.get(&step.item).copied().unwrap_or(0) < step.quantity {
                    let outcome = Outcome::failed(
                        FailureReason::MissingIngredient,
                        format!("failed: requires {}", step.item),
                        blocked_detail(step, &format!("requires {}", step.item)),
                    );
                    return Ok((outcome, st));
                }
                consume(&mut st.inventory, &step.item, step.quantity);
                st.steps_used += cost;
                st.hunger = 0;
                continue;
            }

            let recipe = self.table.recipe(&step.item).expect("validated");
            if let Some(required) = self.table.effective_tool(recipe) {
                if !self.has_tool(&st.inventory, required) {
                    let outcome = Outcome::failed(
                        FailureReason::MissingTool,
                        format!("failed: requires {required}"),
                        blocked_detail(step, &format!("requires {required}")),
                    );
                    return Ok((outcome, st));
                }
            }
            if let Some(station) = recipe.station.as_deref() {
                if st.inventory.get(station).copied().unwrap_or(0) == 0 {
                    let outcome = Outcome::failed(
                        FailureReason::MissingStation,
                        format!("failed: requires {station}"),
                        blocked_detail(step, &format!("requires {station}")),
                    );
                    return Ok((outcome, st));
                }
            }
            for (ingredient, per_execution) in &recipe.ingredients {
                let needed = per_execution * executions;
                if st.inventory.get(ingredient).copied().unwrap_or(0) < needed {
                    let outcome = Outcome::failed(
                        FailureReason::MissingIngredient,
                        format!("failed: requires {ingredient}"),
                        blocked_detail(step, &format!("requires {ingredient}")),
                    );
                    return Ok((outcome, st));
                }
            }

            for (ingredient, per_execution) in &recipe.ingredients {
                consume(&mut st.inventory, ingredient, per_execution * executions);
            }
            *st.inventory.entry(recipe.output.clone()).or_insert(0) +=
                recipe.quantity * executions;
            st.steps_used += cost;
            if let Some(limit) = hunger_limit {
                st.hunger += cost;
                if st.hunger > limit {
                    let outcome = Outcome::failed(
                        FailureReason::HungerDeath,
                        "failed: hunger".into(),
                        blocked_detail(step, "hunger"),
                    );
                    return Ok((outcome, st));
                }
            }
        }

        let have = st.inventory.get(&task.goal_item).copied().unwrap_or(0);
        let outcome = if have >= task.goal_count {
            Outcome::succeeded(&task.goal_item, task.goal_count, st.steps_used)
        } else {
            Outcome::failed(
                FailureReason::MissingIngredient,
                format!("failed: requires {}", task.goal_item),
                format!(
                    "plan completed without obtaining {} x{}",
                    task.goal_item, task.goal_count
                ),
            )
        };
        Ok((outcome, st))
    }

    fn validate_step(&self, step: &ActionStep) -> Result<(), WorldError> {
        if step.quantity == 0 {
            return Err(WorldError::MalformedStep(format!(
                "'{step}': quantity must be positive"
            )));
        }
        let recipe = self.table.recipe(&step.item).ok_or_else(|| {
            WorldError::MalformedStep(format!("'{step}': unknown item '{}'", step.item))
        })?;
        if step.verb == Verb::Eat {
            if !recipe.food {
                return Err(WorldError::MalformedStep(format!(
                    "'{step}': '{}' is not food",
                    step.item
                )));
            }
            return Ok(());
        }
        if recipe.verb != step.verb {
            return Err(WorldError::MalformedStep(format!(
                "'{step}': '{}' is produced by '{}', not '{}'",
                step.item, recipe.verb, step.verb
            )));
        }
        Ok(())
    }

    fn step_cost(&self, step: &ActionStep, state: &WorldState) -> (u32, u32) {
        if step.verb == Verb::Eat {
            return (self.table.rules.eat_cost * step.quantity, step.quantity);
        }
        let recipe = self.table.recipe(&step.item).expect("validated");
        let executions = executions_for(step.quantity, recipe.quantity);
        let mut cost = recipe.steps_cost * executions;
        if recipe.jitter > 0 {
            cost += jitter_draw(state.rng_seed, state.steps_used, &step.item, recipe.jitter);
        }
        (cost, executions)
    }

    fn has_tool(&self, inventory: &Inventory, required: &str) -> bool {
        inventory
            .iter()
            .any(|(item, count)| *count > 0 && self.table.tool_satisfies(item, required))
    }

    /// Deterministic natural-language state rendering: inventory, hunger,
    /// remaining budget, and which verbs have a currently satisfiable recipe
    /// in the planner view.
    pub fn describe_state(&self, state: &WorldState) -> String {
        let mut lines = Vec::with_capacity(4);
        if state.inventory.is_empty() || state.inventory.values().all(|c| *c == 0) {
            lines.push("Inventory: empty.".to_string());
        } else {
            let items: Vec<String> = state
                .inventory
                .iter()
                .filter(|(_, count)| **count > 0)
                .map(|(item, count)| format!("{item} x{count}"))
                .collect();
            lines.push(format!("Inventory: {}.", items.join(", ")));
        }
        match self.table.rules.hunger_limit {
            Some(limit) => {
                let mut line = format!("Hunger: {} of {limit}.", state.hunger);
                if state.hunger * 5 >= limit * 4 {
                    line.push_str(" Warning: dangerously hungry, find food soon.");
                }
                lines.push(line);
            }
            None => lines.push("Hunger: not tracked.".to_string()),
        }
        lines.push(format!(
            "Steps: {} used of {} ({} remaining).",
            state.steps_used,
            state.step_budget,
            state.step_budget - state.steps_used
        ));
        let verbs = self.satisfiable_verbs(state);
        if verbs.is_empty() {
            lines.push("No actions currently satisfiable.".to_string());
        } else {
            let names: Vec<&str> = verbs.iter().map(|v| v.name()).collect();
            lines.push(format!("Actions available now: {}.", names.join(", ")));
        }
        lines.join("\n")
    }

    // Affordances are computed from the planner view on purpose: the
    // description is the agent's sensory input and must not leak hidden
    // requirements.
    fn satisfiable_verbs(&self, state: &WorldState) -> Vec<Verb> {
        let view = self.planner_view();
        let mut verbs = Vec::new();
        for verb in [Verb::Mine, Verb::Craft, Verb::Smelt, Verb::Hunt] {
            let possible = view.items().any(|item| {
                let Some(recipe) = view.visible(item) else {
                    return false;
                };
                if recipe.verb != verb {
                    return false;
                }
                if let Some(tool) = recipe.required_tool {
                    if !self.has_tool(&state.inventory, tool) {
                        return false;
                    }
                }
                if let Some(station) = recipe.station {
                    if state.inventory.get(station).copied().unwrap_or(0) == 0 {
                        return false;
                    }
                }
                recipe.ingredients.iter().all(|(ingredient, count)| {
                    state.inventory.get(ingredient).copied().unwrap_or(0) >= *count
                })
            });
            if possible {
                verbs.push(verb);
            }
        }
        verbs
    }
}

// Counter-style draw: a pure function of (seed, progress, item), so repeated
// execution of the same (state, plan) is bit-identical.
fn jitter_draw(seed: u64, steps_used: u32, item: &str, max: u32) -> u32 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &b in item.as_bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= steps_used as u64;
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    (h % (max as u64 + 1)) as u32
}

fn consume(inventory: &mut Inventory, item: &str, count: u32) {
    if let Some(have) = inventory.get_mut(item) {
        *have -= count;
        if *have == 0 {
            inventory.remove(item);
        }
    }
}
