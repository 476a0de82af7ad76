//! Domain types shared by every pipeline stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::taxonomy::TaxonomyLabel;

/// The five authoring tasks of the instruction set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    AdsGeneration,
    TitleRewriting,
    ProductClassification,
    IntentSpeculation,
    GeneralQa,
}

/// Feature slots contributed by the seller (S), customer (C0 explicit, C1
/// implicit) and platform (P0 taxonomy, P1 background knowledge).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObjectFeature {
    S,
    C0,
    C1,
    P0,
    P1,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::AdsGeneration,
        TaskKind::TitleRewriting,
        TaskKind::ProductClassification,
        TaskKind::IntentSpeculation,
        TaskKind::GeneralQa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::AdsGeneration => "ads_generation",
            TaskKind::TitleRewriting => "title_rewriting",
            TaskKind::ProductClassification => "product_classification",
            TaskKind::IntentSpeculation => "intent_speculation",
            TaskKind::GeneralQa => "general_qa",
        }
    }

    pub fn features(self) -> &'static [ObjectFeature] {
        use ObjectFeature::*;
        match self {
            TaskKind::AdsGeneration => &[S],
            TaskKind::TitleRewriting => &[S, C0],
            TaskKind::ProductClassification => &[S, P0],
            TaskKind::IntentSpeculation => &[C1, P0],
            TaskKind::GeneralQa => &[P1],
        }
    }

    /// Tasks whose responses are a closed label set.
    pub fn is_classification(self) -> bool {
        matches!(self, TaskKind::ProductClassification | TaskKind::IntentSpeculation)
    }

    pub fn is_generative(self) -> bool {
        !self.is_classification()
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown task {s:?}"))
    }
}

/// Customer interaction recorded against a product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    NoAction,
    Click,
    CartAdd,
    Purchase,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::NoAction => "no_action",
            Action::Click => "click",
            Action::CartAdd => "cart_add",
            Action::Purchase => "purchase",
        }
    }
}

impl FromStr for Action {
    type Err = String;

    /// Accepts the snake_case form and the spaced form used in raw dumps
    /// (`"no action"`, `"cart add"`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().replace(' ', "_").as_str() {
            "no_action" => Ok(Action::NoAction),
            "click" => Ok(Action::Click),
            "cart_add" => Ok(Action::CartAdd),
            "purchase" => Ok(Action::Purchase),
            _ => Err(format!("unknown action {s:?}")),
        }
    }
}

/// One e-commerce interaction row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductRecord {
    pub id: String,
    pub title: String,
    pub description: Option<String>,
    pub taxonomy: TaxonomyLabel,
    pub query: Option<String>,
    pub action: Action,
}
