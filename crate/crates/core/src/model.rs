//! Domain types shared by every stage of the toolkit.
//!
//! All types are immutable once built; constructors reject values that break
//! their invariants.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Decoded 8-bit RGB image, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Raster {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "raster dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::invalid(format!(
                "raster buffer holds {} bytes, {width}x{height} RGB needs {expected}",
                pixels.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            pixels,
        })
    }

    /// Raster filled with one color.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let n = width as usize * height as usize;
        let pixels = rgb.iter().copied().cycle().take(n * 3).collect();
        Raster::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn row(&self, y: u32) -> &[u8] {
        let stride = self.width as usize * 3;
        let start = y as usize * stride;
        &self.pixels[start..start + stride]
    }
}

impl fmt::Debug for Raster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Raster")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

/// A prompt that is nonempty after trimming.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PromptText(String);

impl PromptText {
    pub fn new(raw: impl Into<String>) -> Result<Self> {
        let raw = raw.into();
        if raw.trim().is_empty() {
            return Err(Error::invalid("prompt is empty"));
        }
        Ok(PromptText(raw))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PromptText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A prompt split into ordered morphemes. Built by [`crate::prompt_seg::split_prompt`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptDecomposition {
    source: PromptText,
    morphemes: Vec<String>,
}

impl PromptDecomposition {
    pub fn new(source: PromptText, morphemes: Vec<String>) -> Result<Self> {
        if morphemes.is_empty() {
            return Err(Error::DegeneratePrompt(source.0));
        }
        if let Some(bad) = morphemes.iter().position(|m| m.trim().is_empty()) {
            return Err(Error::invalid(format!("morpheme {bad} is blank")));
        }
        Ok(PromptDecomposition { source, morphemes })
    }

    pub fn source(&self) -> &PromptText {
        &self.source
    }

    pub fn morphemes(&self) -> &[String] {
        &self.morphemes
    }

    pub fn count(&self) -> usize {
        self.morphemes.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ModelTag {
    AttnGan,
    Dalle2,
    Glide,
    Midjourney,
    Sd,
    Sdxl,
    Other(String),
}

impl ModelTag {
    /// Fixed quality grouping of the six known generators.
    pub fn default_group(&self) -> Option<ModelGroup> {
        match self {
            ModelTag::AttnGan | ModelTag::Glide => Some(ModelGroup::Bad),
            ModelTag::Dalle2 | ModelTag::Sd => Some(ModelGroup::Medium),
            ModelTag::Midjourney | ModelTag::Sdxl => Some(ModelGroup::Good),
            ModelTag::Other(_) => None,
        }
    }
}

impl FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "attngan" => ModelTag::AttnGan,
            "dalle2" => ModelTag::Dalle2,
            "glide" => ModelTag::Glide,
            "midjourney" | "mj" => ModelTag::Midjourney,
            "sd" | "stablediffusion" | "sd15" => ModelTag::Sd,
            "sdxl" | "stablediffusionxl" => ModelTag::Sdxl,
            "" => return Err(Error::invalid("model tag is empty")),
            _ => ModelTag::Other(s.trim().to_string()),
        })
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelTag::AttnGan => f.write_str("AttnGAN"),
            ModelTag::Dalle2 => f.write_str("DALLE2"),
            ModelTag::Glide => f.write_str("GLIDE"),
            ModelTag::Midjourney => f.write_str("Midjourney"),
            ModelTag::Sd => f.write_str("SD"),
            ModelTag::Sdxl => f.write_str("SDXL"),
            ModelTag::Other(name) => f.write_str(name),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelGroup {
    Bad,
    Medium,
    Good,
}

impl ModelGroup {
    pub const ALL: [ModelGroup; 3] = [ModelGroup::Bad, ModelGroup::Medium, ModelGroup::Good];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelGroup::Bad => "bad",
            ModelGroup::Medium => "medium",
            ModelGroup::Good => "good",
        }
    }
}

impl FromStr for ModelGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bad" => Ok(ModelGroup::Bad),
            "medium" => Ok(ModelGroup::Medium),
            "good" => Ok(ModelGroup::Good),
            other => Err(Error::invalid(format!("unknown model group {other:?}"))),
        }
    }
}

/// Reporting group for the prompt style item. The five raw styles collapse
/// into four columns: the two specialised styles, the two broad styles,
/// baroque on its own, and prompts with no style item.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StyleClass {
    AbstractScifi,
    AnimeRealistic,
    Baroque,
    None,
}

impl StyleClass {
    pub const ALL: [StyleClass; 4] = [
        StyleClass::AbstractScifi,
        StyleClass::AnimeRealistic,
        StyleClass::Baroque,
        StyleClass::None,
    ];

    /// Maps a raw style string onto its reporting group.
    pub fn from_raw(raw: &str) -> Result<Self> {
        let key: String = raw
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "abstract" | "scifi" | "abstractscifi" => Ok(StyleClass::AbstractScifi),
            "anime" | "realistic" | "animerealistic" => Ok(StyleClass::AnimeRealistic),
            "baroque" => Ok(StyleClass::Baroque),
            "" | "none" | "na" | "nostyle" => Ok(StyleClass::None),
            _ => Err(Error::invalid(format!("unknown style {raw:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StyleClass::AbstractScifi => "abstract_scifi",
            StyleClass::AnimeRealistic => "anime_realistic",
            StyleClass::Baroque => "baroque",
            StyleClass::None => "none",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamVariant {
    Default,
    LowCfg,
    HighCfg,
    LowStep,
    NotApplicable,
}

impl FromStr for ParamVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "default" => Ok(ParamVariant::Default),
            "low_cfg" => Ok(ParamVariant::LowCfg),
            "high_cfg" => Ok(ParamVariant::HighCfg),
            "low_step" => Ok(ParamVariant::LowStep),
            "" | "n/a" | "na" | "none" => Ok(ParamVariant::NotApplicable),
            other => Err(Error::invalid(format!("unknown parameter variant {other:?}"))),
        }
    }
}

impl ParamVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamVariant::Default => "default",
            ParamVariant::LowCfg => "low_cfg",
            ParamVariant::HighCfg => "high_cfg",
            ParamVariant::LowStep => "low_step",
            ParamVariant::NotApplicable => "n/a",
        }
    }
}

/// One dataset image and its metadata.
///
/// Fields are public so records can be assembled from any source; call
/// [`validate_annotated_image`] before trusting one.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedImage {
    pub image_id: String,
    pub file_ref: PathBuf,
    pub prompt: PromptText,
    pub model_tag: ModelTag,
    pub model_group: ModelGroup,
    /// Number of detail and style items in the prompt.
    pub prompt_length_class: u8,
    pub style_raw: String,
    pub style_class: StyleClass,
    /// Grouping key for train/test splits.
    pub object_label: String,
    pub param_variant: ParamVariant,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    EmptyImageId,
    ClassOutOfRange(u8),
    EmptyGroupingKey,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyImageId => f.write_str("empty image id"),
            Violation::ClassOutOfRange(c) => write!(f, "class out of range ({c} not in 0..=3)"),
            Violation::EmptyGroupingKey => f.write_str("empty grouping key"),
        }
    }
}

/// Checks the record invariants. Violations are returned as data.
pub fn validate_annotated_image(record: &AnnotatedImage) -> std::result::Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if record.image_id.trim().is_empty() {
        violations.push(Violation::EmptyImageId);
    }
    if record.prompt_length_class > 3 {
        violations.push(Violation::ClassOutOfRange(record.prompt_length_class));
    }
    if record.object_label.trim().is_empty() {
        violations.push(Violation::EmptyGroupingKey);
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// A finite alignment score on whatever scale the scorer produces.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct AlignmentScore(f64);

impl AlignmentScore {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(AlignmentScore(value))
        } else {
            Err(Error::InvalidScore(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationTriple {
    pub srocc: f64,
    pub krocc: f64,
    pub plcc: f64,
}

impl CorrelationTriple {
    pub fn new(srocc: f64, krocc: f64, plcc: f64) -> Result<Self> {
        for (name, v) in [("srocc", srocc), ("krocc", krocc), ("plcc", plcc)] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::stats(format!("{name} = {v} outside [-1, 1]")));
            }
        }
        Ok(CorrelationTriple { srocc, krocc, plcc })
    }
}
