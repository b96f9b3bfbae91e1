//! Recipe table: the crafting tech tree as data.
//!
//! A table is loaded from TOML (one `[[recipe]]` record per item) plus a
//! `[world]` section with the hunger rule. Tool requirements can be declared
//! either visibly (`required_tool`, part of the planner view) or hidden
//! (`hidden_tool`, enforced during execution but stripped from the view).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("recipe file parse error: {0}")]
    Parse(String),
    #[error("duplicate recipe for item '{0}'")]
    DuplicateRecipe(String),
    #[error("recipe '{recipe}' references unknown item '{item}'")]
    UnknownItem { recipe: String, item: String },
    #[error("ingredient cycle involving item '{0}'")]
    IngredientCycle(String),
    #[error("invalid recipe '{recipe}': {message}")]
    InvalidRecipe { recipe: String, message: String },
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("malformed plan step: {0}")]
    MalformedStep(String),
}

/// Action verbs a recipe can carry. `eat` is a plan verb only; no recipe
/// produces anything by eating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verb {
    Mine,
    Craft,
    Smelt,
    Hunt,
    Eat,
}

impl Verb {
    pub fn name(&self) -> &'static str {
        match self {
            Verb::Mine => "mine",
            Verb::Craft => "craft",
            Verb::Smelt => "smelt",
            Verb::Hunt => "hunt",
            Verb::Eat => "eat",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mine" => Some(Verb::Mine),
            "craft" => Some(Verb::Craft),
            "smelt" => Some(Verb::Smelt),
            "hunt" => Some(Verb::Hunt),
            "eat" => Some(Verb::Eat),
            _ => None,
        }
    }
}

impl std::fmt::Display for Verb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Tool identity for tier comparisons: a tool satisfies a requirement when
/// it shares the class and has equal or higher rank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub class: String,
    pub rank: u8,
}

/// One recipe: how `quantity` units of `output` are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub output: String,
    #[serde(default = "one")]
    pub quantity: u32,
    pub verb: Verb,
    #[serde(default)]
    pub ingredients: BTreeMap<String, u32>,
    /// Tool requirement visible to planners.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_tool: Option<String>,
    /// Tool requirement enforced by the world but absent from the planner
    /// view; takes precedence over `required_tool` when both are set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_tool: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub station: Option<String>,
    pub steps_cost: u32,
    pub tier: u8,
    #[serde(default)]
    pub food: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<ToolSpec>,
    /// Maximum extra steps a seeded draw can add to one execution of this
    /// recipe. Zero (the default) keeps costs fixed.
    #[serde(default)]
    pub jitter: u32,
}

fn one() -> u32 {
    1
}

/// World-level rules that are not attached to a single recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldRules {
    /// Accumulated step cost allowed since the last meal; `None` disables
    /// the hunger mechanic entirely.
    #[serde(default)]
    pub hunger_limit: Option<u32>,
    #[serde(default = "one")]
    pub eat_cost: u32,
}

impl Default for WorldRules {
    fn default() -> Self {
        Self {
            hunger_limit: Some(120),
            eat_cost: 1,
        }
    }
}

#[derive(Debug, Deserialize)]
struct RecipeFile {
    #[serde(default)]
    world: Option<WorldRules>,
    recipe: Vec<Recipe>,
}

/// The validated recipe table plus world rules.
#[derive(Debug, Clone, PartialEq)]
pub struct RecipeTable {
    recipes: BTreeMap<String, Recipe>,
    pub rules: WorldRules,
}

impl RecipeTable {
    /// Parses and validates a TOML recipe table.
    pub fn parse(text: &str) -> Result<Self, WorldError> {
        let file: RecipeFile = toml::from_str(text).map_err(|e| WorldError::Parse(e.to_string()))?;
        let mut recipes = BTreeMap::new();
        for recipe in file.recipe {
            if recipes.insert(recipe.output.clone(), recipe.clone()).is_some() {
                return Err(WorldError::DuplicateRecipe(recipe.output));
            }
        }
        let table = Self {
            recipes,
            rules: file.world.unwrap_or_default(),
        };
        table.validate()?;
        Ok(table)
    }

    /// Loads a recipe table from a file path.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, WorldError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// The table shipped with the crate, covering the full task ladder.
    pub fn builtin() -> Self {
        Self::parse(include_str!("../../data/recipes.toml")).expect("builtin table is valid")
    }

    fn validate(&self) -> Result<(), WorldError> {
        for recipe in self.recipes.values() {
            if recipe.quantity == 0 || recipe.steps_cost == 0 {
                return Err(WorldError::InvalidRecipe {
                    recipe: recipe.output.clone(),
                    message: "quantity and steps_cost must be positive".into(),
                });
            }
            if recipe.tier > 8 {
                return Err(WorldError::InvalidRecipe {
                    recipe: recipe.output.clone(),
                    message: format!("tier {} out of range 0..=8", recipe.tier),
                });
            }
            if recipe.verb == Verb::Eat {
                return Err(WorldError::InvalidRecipe {
                    recipe: recipe.output.clone(),
                    message: "eat is not a production verb".into(),
                });
            }
            let referenced = recipe
                .ingredients
                .keys()
                .chain(recipe.required_tool.iter())
                .chain(recipe.hidden_tool.iter())
                .chain(recipe.station.iter());
            for item in referenced {
                if !self.recipes.contains_key(item) {
                    return Err(WorldError::UnknownItem {
                        recipe: recipe.output.clone(),
                        item: item.clone(),
                    });
                }
            }
        }
        self.check_acyclic()?;
        Ok(())
    }

    // Cycle detection over ingredient edges only. Tool and station edges are
    // usage, not consumption, and the axe/wood loop is broken at runtime by
    // the given starting tools.
    fn check_acyclic(&self) -> Result<(), WorldError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Visiting,
            Done,
        }
        fn visit(
            item: &str,
            recipes: &BTreeMap<String, Recipe>,
            marks: &mut BTreeMap<String, Mark>,
        ) -> Result<(), WorldError> {
            match marks.get(item) {
                Some(Mark::Done) => return Ok(()),
                Some(Mark::Visiting) => {
                    return Err(WorldError::IngredientCycle(item.to_string()))
                }
                None => {}
            }
            marks.insert(item.to_string(), Mark::Visiting);
            if let Some(recipe) = recipes.get(item) {
                for ingredient in recipe.ingredients.keys() {
                    visit(ingredient, recipes, marks)?;
                }
            }
            marks.insert(item.to_string(), Mark::Done);
            Ok(())
        }
        let mut marks = BTreeMap::new();
        for item in self.recipes.keys() {
            visit(item, &self.recipes, &mut marks)?;
        }
        Ok(())
    }

    pub fn recipe(&self, item: &str) -> Option<&Recipe> {
        self.recipes.get(item)
    }

    pub fn items(&self) -> impl Iterator<Item = &str> {
        self.recipes.keys().map(String::as_str)
    }

    pub fn recipes(&self) -> impl Iterator<Item = &Recipe> {
        self.recipes.values()
    }

    /// Names of items runnable as tasks at `tier`.
    pub fn items_at_tier(&self, tier: u8) -> Vec<String> {
        self.recipes
            .values()
            .filter(|r| r.tier == tier)
            .map(|r| r.output.clone())
            .collect()
    }

    /// The tool requirement the world enforces for a recipe.
    pub fn effective_tool<'a>(&self, recipe: &'a Recipe) -> Option<&'a str> {
        recipe
            .hidden_tool
            .as_deref()
            .or(recipe.required_tool.as_deref())
    }

    /// True when `candidate` can stand in for `required`: same item, or same
    /// tool class at equal or higher rank.
    pub fn tool_satisfies(&self, candidate: &str, required: &str) -> bool {
        if candidate == required {
            return true;
        }
        match (
            self.recipes.get(candidate).and_then(|r| r.tool.as_ref()),
            self.recipes.get(required).and_then(|r| r.tool.as_ref()),
        ) {
            (Some(c), Some(r)) => c.class == r.class && c.rank >= r.rank,
            _ => false,
        }
    }

    /// The restricted view handed to planners: hidden tool requirements and
    /// the hunger rule are not part of it.
    pub fn planner_view(&self) -> PlannerView<'_> {
        PlannerView { table: self }
    }
}

/// What a recipe looks like from the planner's side of the fence.
#[derive(Debug, Clone, Copy)]
pub struct VisibleRecipe<'a> {
    pub output: &'a str,
    pub quantity: u32,
    pub verb: Verb,
    pub ingredients: &'a BTreeMap<String, u32>,
    pub required_tool: Option<&'a str>,
    pub station: Option<&'a str>,
    pub steps_cost: u32,
    pub tier: u8,
    pub food: bool,
    pub tool: Option<&'a ToolSpec>,
}

/// Read-only planner-facing view of a [`RecipeTable`].
#[derive(Debug, Clone, Copy)]
pub struct PlannerView<'a> {
    table: &'a RecipeTable,
}

impl<'a> PlannerView<'a> {
    pub fn visible(&self, item: &str) -> Option<VisibleRecipe<'a>> {
        self.table.recipe(item).map(|r| VisibleRecipe {
            output: &r.output,
            quantity: r.quantity,
            verb: r.verb,
            ingredients: &r.ingredients,
            required_tool: r.required_tool.as_deref(),
            station: r.station.as_deref(),
            steps_cost: r.steps_cost,
            tier: r.tier,
            food: r.food,
            tool: r.tool.as_ref(),
        })
    }

    pub fn items(&self) -> impl Iterator<Item = &'a str> + '_ {
        self.table.items()
    }

    pub fn tool_satisfies(&self, candidate: &str, required: &str) -> bool {
        self.table.tool_satisfies(candidate, required)
    }

    /// Cheapest hunt-able food, ties broken alphabetically.
    pub fn cheapest_food(&self) -> Option<VisibleRecipe<'a>> {
        self.table
            .recipes()
            .filter(|r| r.food && r.verb == Verb::Hunt)
            .min_by(|a, b| a.steps_cost.cmp(&b.steps_cost).then(a.output.cmp(&b.output)))
            .and_then(|r| self.visible(&r.output))
    }
}

/// Executions needed to end with at least `quantity` outputs of `recipe`.
pub fn executions_for(quantity: u32, per_execution_yield: u32) -> u32 {
    quantity.div_ceil(per_execution_yield)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_table_parses_and_validates() {
        let table = RecipeTable::builtin();
        assert!(table.recipe("wood").is_some());
        assert!(table.recipe("diamond").is_some());
        assert_eq!(table.rules.hunger_limit, Some(120));
    }

    #[test]
    fn builtin_table_covers_the_full_task_list() {
        let table = RecipeTable::builtin();
        let expected_counts = [(1u8, 7usize), (3, 7), (5, 7), (6, 6), (8, 1)];
        for (tier, at_least) in expected_counts {
            let got = table.items_at_tier(tier).len();
            assert!(got >= at_least, "tier {tier}: {got} < {at_least}");
        }
        // Named spot checks across the ladder.
        for item in [
            "wooden_door",
            "stick",
            "planks",
            "furnace",
            "crafting_table",
            "stone_pickaxe",
            "cooked_beef",
            "painting",
            "torch",
            "coal",
            "iron_boots",
            "leather_helmet",
            "iron_pickaxe",
            "shears",
            "minecart",
            "tripwire_hook",
            "hopper",
            "diamond",
        ] {
            assert!(table.recipe(item).is_some(), "missing {item}");
        }
    }

    #[test]
    fn unknown_ingredient_is_rejected_by_name() {
        let toml = r#"
            [[recipe]]
            output = "thing"
            verb = "craft"
            steps_cost = 1
            tier = 1
            [recipe.ingredients]
            nonexistent = 2
        "#;
        match RecipeTable::parse(toml) {
            Err(WorldError::UnknownItem { item, .. }) => assert_eq!(item, "nonexistent"),
            other => panic!("expected unknown-item error, got {other:?}"),
        }
    }

    #[test]
    fn ingredient_cycles_are_rejected() {
        let toml = r#"
            [[recipe]]
            output = "a"
            verb = "craft"
            steps_cost = 1
            tier = 1
            [recipe.ingredients]
            b = 1

            [[recipe]]
            output = "b"
            verb = "craft"
            steps_cost = 1
            tier = 1
            [recipe.ingredients]
            a = 1
        "#;
        assert!(matches!(
            RecipeTable::parse(toml),
            Err(WorldError::IngredientCycle(_))
        ));
    }

    #[test]
    fn tool_tier_ordering() {
        let table = RecipeTable::builtin();
        assert!(table.tool_satisfies("stone_pickaxe", "wooden_pickaxe"));
        assert!(table.tool_satisfies("iron_pickaxe", "stone_pickaxe"));
        assert!(!table.tool_satisfies("wooden_pickaxe", "stone_pickaxe"));
        assert!(!table.tool_satisfies("wooden_axe", "wooden_pickaxe"));
        assert!(table.tool_satisfies("wooden_axe", "wooden_axe"));
    }

    #[test]
    fn planner_view_hides_hidden_tools() {
        let table = RecipeTable::builtin();
        let view = table.planner_view();
        let iron = view.visible("iron_ore").unwrap();
        assert_eq!(iron.required_tool, None);
        let stone = view.visible("stone").unwrap();
        assert_eq!(stone.required_tool, Some("wooden_pickaxe"));
        // The world still enforces the hidden requirement.
        let recipe = table.recipe("iron_ore").unwrap();
        assert_eq!(table.effective_tool(recipe), Some("stone_pickaxe"));
    }

    #[test]
    fn cheapest_food_is_beef() {
        let table = RecipeTable::builtin();
        let food = table.planner_view().cheapest_food().unwrap();
        assert_eq!(food.output, "beef");
    }

    #[test]
    fn executions_round_up() {
        assert_eq!(executions_for(1, 4), 1);
        assert_eq!(executions_for(4, 4), 1);
        assert_eq!(executions_for(5, 4), 2);
        assert_eq!(executions_for(9, 4), 3);
    }
}
