use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{AnnotatedImage, ModelGroup, StyleClass};

/// A way of partitioning the dataset into reporting subsets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SubsetCriterion {
    All,
    ModelGroup,
    PromptLength,
    Style,
}

impl SubsetCriterion {
    pub fn as_str(self) -> &'static str {
        match self {
            SubsetCriterion::All => "all",
            SubsetCriterion::ModelGroup => "model_group",
            SubsetCriterion::PromptLength => "prompt_length",
            SubsetCriterion::Style => "style",
        }
    }

    /// Every subset of this criterion, in reporting order.
    pub fn selectors(self) -> Vec<SubsetSelector> {
        match self {
            SubsetCriterion::All => vec![SubsetSelector::All],
            SubsetCriterion::ModelGroup => ModelGroup::ALL.map(SubsetSelector::ModelGroup).to_vec(),
            SubsetCriterion::PromptLength => (0..=3).map(SubsetSelector::PromptLength).collect(),
            SubsetCriterion::Style => StyleClass::ALL.map(SubsetSelector::Style).to_vec(),
        }
    }

    /// Parses a comma-separated list such as `all,model_group,style`.
    pub fn parse_list(list: &str) -> Result<Vec<SubsetCriterion>> {
        let mut out: Vec<SubsetCriterion> = Vec::new();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let c: SubsetCriterion = item.parse()?;
            if !out.contains(&c) {
                out.push(c);
            }
        }
        if out.is_empty() {
            return Err(Error::Config("no subset criteria given".into()));
        }
        Ok(out)
    }
}

impl FromStr for SubsetCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(SubsetCriterion::All),
            "model_group" | "model" => Ok(SubsetCriterion::ModelGroup),
            "prompt_length" | "prompt_length_class" | "length" => Ok(SubsetCriterion::PromptLength),
            "style" | "style_class" => Ok(SubsetCriterion::Style),
            other => Err(Error::Config(format!("unknown subset criterion {other:?}"))),
        }
    }
}

/// One subset: a criterion together with the value it selects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SubsetSelector {
    All,
    ModelGroup(ModelGroup),
    PromptLength(u8),
    Style(StyleClass),
}

impl SubsetSelector {
    pub fn criterion(self) -> SubsetCriterion {
        match self {
            SubsetSelector::All => SubsetCriterion::All,
            SubsetSelector::ModelGroup(_) => SubsetCriterion::ModelGroup,
            SubsetSelector::PromptLength(_) => SubsetCriterion::PromptLength,
            SubsetSelector::Style(_) => SubsetCriterion::Style,
        }
    }

    pub fn matches(self, image: &AnnotatedImage) -> bool {
        match self {
            SubsetSelector::All => true,
            SubsetSelector::ModelGroup(g) => image.model_group == g,
            SubsetSelector::PromptLength(n) => image.prompt_length_class == n,
            SubsetSelector::Style(s) => image.style_class == s,
        }
    }
}

impl fmt::Display for SubsetSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubsetSelector::All => f.write_str("all"),
            SubsetSelector::ModelGroup(g) => write!(f, "model_group={}", g.as_str()),
            SubsetSelector::PromptLength(n) => write!(f, "prompt_length={n}"),
            SubsetSelector::Style(s) => write!(f, "style={}", s.as_str()),
        }
    }
}

impl FromStr for SubsetSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(SubsetSelector::All);
        }
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("subset {s:?} is not criterion=value")))?;
        match key.parse::<SubsetCriterion>()? {
            SubsetCriterion::All => Err(Error::Config(format!("subset {s:?}: `all` takes no value"))),
            SubsetCriterion::ModelGroup => Ok(SubsetSelector::ModelGroup(value.parse()?)),
            SubsetCriterion::PromptLength => match value.parse::<u8>() {
                Ok(n) if n <= 3 => Ok(SubsetSelector::PromptLength(n)),
                _ => Err(Error::Config(format!("prompt length class {value:?} not in 0..=3"))),
            },
            SubsetCriterion::Style => {
                let class = StyleClass::ALL
                    .into_iter()
                    .find(|c| c.as_str() == value)
                    .map_or_else(|| StyleClass::from_raw(value), Ok)?;
                Ok(SubsetSelector::Style(class))
            }
        }
    }
}

/// Images selected by one subset, in input order.
pub fn subset_filter(images: &[AnnotatedImage], selector: SubsetSelector) -> Vec<&AnnotatedImage> {
    images.iter().filter(|i| selector.matches(i)).collect()
}

/// Splits the images by every value of `criterion`.
pub fn partition(
    images: &[AnnotatedImage],
    criterion: SubsetCriterion,
) -> Vec<(SubsetSelector, Vec<&AnnotatedImage>)> {
    criterion
        .selectors()
        .into_iter()
        .map(|s| (s, subset_filter(images, s)))
        .collect()
}
