//! The fixed 15-category product taxonomy and free-text label resolution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::text::is_punctuation;

/// One of the 15 canonical product categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TaxonomyLabel {
    Clothing,
    Accessories,
    HomeAndLiving,
    Weddings,
    ArtAndCollectibles,
    CraftSuppliesAndTools,
    Jewelry,
    PaperAndPartySupplies,
    ToysAndGames,
    ElectronicsAndAccessories,
    BooksMoviesAndMusic,
    BathAndBeauty,
    BagsAndPurses,
    Shoes,
    PetSupplies,
}

impl TaxonomyLabel {
    pub const ALL: [TaxonomyLabel; 15] = [
        TaxonomyLabel::Clothing,
        TaxonomyLabel::Accessories,
        TaxonomyLabel::HomeAndLiving,
        TaxonomyLabel::Weddings,
        TaxonomyLabel::ArtAndCollectibles,
        TaxonomyLabel::CraftSuppliesAndTools,
        TaxonomyLabel::Jewelry,
        TaxonomyLabel::PaperAndPartySupplies,
        TaxonomyLabel::ToysAndGames,
        TaxonomyLabel::ElectronicsAndAccessories,
        TaxonomyLabel::BooksMoviesAndMusic,
        TaxonomyLabel::BathAndBeauty,
        TaxonomyLabel::BagsAndPurses,
        TaxonomyLabel::Shoes,
        TaxonomyLabel::PetSupplies,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaxonomyLabel::Clothing => "clothing",
            TaxonomyLabel::Accessories => "accessories",
            TaxonomyLabel::HomeAndLiving => "home and living",
            TaxonomyLabel::Weddings => "weddings",
            TaxonomyLabel::ArtAndCollectibles => "art and collectibles",
            TaxonomyLabel::CraftSuppliesAndTools => "craft supplies and tools",
            TaxonomyLabel::Jewelry => "jewelry",
            TaxonomyLabel::PaperAndPartySupplies => "paper and party supplies",
            TaxonomyLabel::ToysAndGames => "toys and games",
            TaxonomyLabel::ElectronicsAndAccessories => "electronics and accessories",
            TaxonomyLabel::BooksMoviesAndMusic => "books movies and music",
            TaxonomyLabel::BathAndBeauty => "bath and beauty",
            TaxonomyLabel::BagsAndPurses => "bags and purses",
            TaxonomyLabel::Shoes => "shoes",
            TaxonomyLabel::PetSupplies => "pet supplies",
        }
    }

    fn word_count(self) -> usize {
        self.as_str().split(' ').count()
    }
}

impl fmt::Display for TaxonomyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a canonical taxonomy label: {0:?}")]
pub struct InvalidLabel(pub String);

impl FromStr for TaxonomyLabel {
    type Err = InvalidLabel;

    /// Accepts only the canonical lowercase spelling.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaxonomyLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| InvalidLabel(s.to_string()))
    }
}

impl TryFrom<String> for TaxonomyLabel {
    type Error = InvalidLabel;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<TaxonomyLabel> for String {
    fn from(value: TaxonomyLabel) -> Self {
        value.as_str().to_string()
    }
}

/// A model answer resolved against the taxonomy. `Unmapped` never matches gold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Known(TaxonomyLabel),
    Unmapped,
}

impl Label {
    pub fn known(self) -> Option<TaxonomyLabel> {
        match self {
            Label::Known(l) => Some(l),
            Label::Unmapped => None,
        }
    }
}

impl From<TaxonomyLabel> for Label {
    fn from(value: TaxonomyLabel) -> Self {
        Label::Known(value)
    }
}

/// Resolve a free-text model answer to a taxonomy label.
///
/// The answer is lowercased, `&` becomes `and`, punctuation is dropped and
/// whitespace collapsed. The longest category phrase that occurs as a
/// contiguous run of words wins; ties go to the earlier category.
pub fn normalize_label(free_text: &str) -> Label {
    let lowered = free_text.to_lowercase().replace('&', " and ");
    let stripped: String = lowered
        .chars()
        .map(|c| if is_punctuation(c) { ' ' } else { c })
        .collect();
    let words: Vec<&str> = stripped.split_whitespace().collect();

    let mut best: Option<TaxonomyLabel> = None;
    for label in TaxonomyLabel::ALL {
        let phrase: Vec<&str> = label.as_str().split(' ').collect();
        let hit = words.windows(phrase.len()).any(|w| w == phrase.as_slice());
        if hit && best.map_or(true, |b| label.word_count() > b.word_count()) {
            best = Some(label);
        }
    }
    best.map_or(Label::Unmapped, Label::Known)
}
