//! Alignment scorers: `A(prompt, image)`.
//!
//! Two deterministic built-ins live in-process (a constant and a caption
//! token-overlap toy used for testing); real neural models run as child
//! processes behind the JSON-lines protocol in [`protocol`].

mod external;
pub mod protocol;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

pub use external::ExternalConfig;
use external::ExternalPool;
pub use protocol::ImageMode;

use crate::error::{Error, Result};
use crate::model::{AlignmentScore, Raster};
use crate::stair_crop::crop_center_box;

/// An image handed to a scorer, plus what the scorer may need to know about
/// where it came from.
#[derive(Clone, Debug)]
pub struct ImageRef {
    raster: Arc<Raster>,
    source_path: Option<PathBuf>,
    image_id: Option<String>,
    box_length: f64,
}

impl ImageRef {
    pub fn new(raster: Raster) -> Self {
        ImageRef::from_arc(Arc::new(raster))
    }

    pub fn from_arc(raster: Arc<Raster>) -> Self {
        ImageRef {
            raster,
            source_path: None,
            image_id: None,
            box_length: 1.0,
        }
    }

    pub fn with_source(mut self, path: impl Into<PathBuf>) -> Self {
        self.source_path = Some(path.into());
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.image_id = Some(id.into());
        self
    }

    /// Centered crop that keeps the identity of the source image.
    pub fn cropped(&self, length: f64) -> Result<ImageRef> {
        if length == 1.0 {
            return Ok(self.clone());
        }
        Ok(ImageRef {
            raster: Arc::new(crop_center_box(&self.raster, length)?),
            source_path: self.source_path.clone(),
            image_id: self.image_id.clone(),
            box_length: self.box_length * length,
        })
    }

    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    pub fn source_path(&self) -> Option<&Path> {
        self.source_path.as_deref()
    }

    pub fn image_id(&self) -> Option<&str> {
        self.image_id.as_deref()
    }

    /// Box length relative to the source image.
    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn is_whole(&self) -> bool {
        self.box_length == 1.0
    }
}

/// Scorer kind and its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum ScorerKind {
    Constant { value: f64 },
    /// Jaccard similarity between the prompt's tokens and a caption looked
    /// up by image id. Ignores pixels.
    LexicalOverlap { captions: HashMap<String, String> },
    ExternalProcess(ExternalConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScorerDescriptor {
    pub name: String,
    pub kind: ScorerKind,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScorerFile {
    name: Option<String>,
    kind: String,
    value: Option<f64>,
    command: Option<Vec<String>>,
    workers: Option<usize>,
    image_mode: Option<ImageMode>,
    window: Option<usize>,
}

impl ScorerDescriptor {
    pub fn constant(value: f64) -> Self {
        ScorerDescriptor {
            name: format!("constant:{value}"),
            kind: ScorerKind::Constant { value },
        }
    }

    pub fn lexical(captions: HashMap<String, String>) -> Self {
        ScorerDescriptor {
            name: "lexical".into(),
            kind: ScorerKind::LexicalOverlap { captions },
        }
    }

    pub fn external(name: impl Into<String>, config: ExternalConfig) -> Self {
        ScorerDescriptor {
            name: name.into(),
            kind: ScorerKind::ExternalProcess(config),
        }
    }

    /// Resolves a `--scorer` argument: `constant:<c>`, `lexical`, or the path
    /// of a TOML scorer file. `command_override` replaces the external
    /// command line (split with shell quoting rules).
    pub fn from_spec(
        spec: &str,
        captions: &HashMap<String, String>,
        command_override: Option<&str>,
    ) -> Result<Self> {
        if let Some(c) = spec.strip_prefix("constant:") {
            let value: f64 = c
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("constant scorer value {c:?} is not a number")))?;
            let d = ScorerDescriptor::constant(value);
            d.validate()?;
            return Ok(d);
        }
        if spec == "lexical" {
            return Ok(ScorerDescriptor::lexical(captions.clone()));
        }
        ScorerDescriptor::from_file(Path::new(spec), captions, command_override)
    }

    pub fn from_file(
        path: &Path,
        captions: &HashMap<String, String>,
        command_override: Option<&str>,
    ) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read scorer config {}: {e}", path.display()))
        })?;
        let file: ScorerFile = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let name = file.name.clone().unwrap_or_else(|| file.kind.clone());
        let kind = match file.kind.as_str() {
            "constant" => ScorerKind::Constant {
                value: file
                    .value
                    .ok_or_else(|| Error::Config("constant scorer needs `value`".into()))?,
            },
            "lexical_overlap" | "lexical" => ScorerKind::LexicalOverlap {
                captions: captions.clone(),
            },
            "external_process" | "external" => {
                let command = match command_override {
                    Some(cmd) => shlex::split(cmd).ok_or_else(|| {
                        Error::Config(format!("cannot parse scorer command override {cmd:?}"))
                    })?,
                    None => file
                        .command
                        .clone()
                        .ok_or_else(|| Error::Config("external scorer needs `command`".into()))?,
                };
                let mut config = ExternalConfig::new(command);
                if let Some(w) = file.workers {
                    config.workers = w;
                }
                if let Some(m) = file.image_mode {
                    config.image_mode = m;
                }
                if let Some(w) = file.window {
                    config.window = w;
                }
                ScorerKind::ExternalProcess(config)
            }
            other => return Err(Error::Config(format!("unknown scorer kind {other:?}"))),
        };
        let d = ScorerDescriptor { name, kind };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Config("scorer name is empty".into()));
        }
        match &self.kind {
            ScorerKind::Constant { value } if !value.is_finite() => {
                Err(Error::Config(format!("constant scorer value {value} is not finite")))
            }
            ScorerKind::ExternalProcess(c) => c.validate(),
            _ => Ok(()),
        }
    }
}

enum Engine {
    Constant(f64),
    Lexical(HashMap<String, BTreeSet<String>>),
    External(ExternalPool),
}

/// A ready-to-use scorer. External backends are started on construction and
/// shut down on drop.
pub struct Scorer {
    name: String,
    engine: Engine,
}

impl Scorer {
    pub fn new(descriptor: &ScorerDescriptor) -> Result<Self> {
        descriptor.validate()?;
        let engine = match &descriptor.kind {
            ScorerKind::Constant { value } => Engine::Constant(*value),
            ScorerKind::LexicalOverlap { captions } => Engine::Lexical(
                captions
                    .iter()
                    .map(|(id, caption)| (id.clone(), tokens(caption)))
                    .collect(),
            ),
            ScorerKind::ExternalProcess(config) => Engine::External(ExternalPool::spawn(config)?),
        };
        Ok(Scorer {
            name: descriptor.name.clone(),
            engine,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Name the backend reported at handshake, for external scorers.
    pub fn backend_name(&self) -> Option<&str> {
        match &self.engine {
            Engine::External(pool) => Some(pool.reported_name()),
            _ => None,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self.engine, Engine::External(_))
    }

    pub fn score(&self, prompt: &str, image: &ImageRef) -> Result<AlignmentScore> {
        match &self.engine {
            Engine::Constant(c) => AlignmentScore::new(*c),
            Engine::Lexical(captions) => {
                let id = image
                    .image_id()
                    .ok_or_else(|| Error::invalid("lexical scorer needs an image id"))?;
                let caption = captions
                    .get(id)
                    .ok_or_else(|| Error::invalid(format!("no caption for image {id:?}")))?;
                AlignmentScore::new(jaccard(&tokens(prompt), caption))
            }
            Engine::External(_) => self.batch_score(&[(prompt, image)]).map(|mut v| v.remove(0)).map_err(|e| match e {
                Error::BatchElement { source, .. } => *source,
                other => other,
            }),
        }
    }

    /// Scores every pair; element `i` of the result belongs to `pairs[i]`.
    /// The first failing element aborts the batch and is reported with its
    /// index.
    pub fn batch_score(&self, pairs: &[(&str, &ImageRef)]) -> Result<Vec<AlignmentScore>> {
        match &self.engine {
            Engine::External(pool) => pool
                .score_batch(pairs)?
                .into_iter()
                .map(AlignmentScore::new)
                .collect(),
            _ => pairs
                .iter()
                .enumerate()
                .map(|(index, (prompt, image))| {
                    self.score(prompt, image).map_err(|e| Error::BatchElement {
                        index,
                        source: Box::new(e),
                    })
                })
                .collect(),
        }
    }
}

/// Lowercase alphanumeric tokens.
pub fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Jaccard index `|a ∩ b| / |a ∪ b|`; two empty sets count as identical.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
