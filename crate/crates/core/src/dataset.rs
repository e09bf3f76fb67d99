//! Manifests, images, ratings, MOS and metric-score files.
//!
//! All writers use `\n` line endings and shortest round-trip float
//! formatting, so identical inputs give identical bytes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use csv::StringRecord;

use crate::benchmark::MetricScore;
use crate::error::{Error, Result};
use crate::model::{
    validate_annotated_image, AnnotatedImage, ModelGroup, ModelTag, ParamVariant, PromptText, Raster,
    StyleClass,
};
use crate::mos::{check_raw_score, Dimension, MosRow, MosTable, Rating, RatingTable};

pub const MANIFEST_COLUMNS: [&str; 8] = [
    "image_id",
    "file",
    "prompt",
    "model",
    "style",
    "prompt_length_class",
    "object_label",
    "param_variant",
];
pub const OPTIONAL_MANIFEST_COLUMNS: [&str; 2] = ["model_group", "caption"];
pub const RATING_COLUMNS: [&str; 5] = ["image_id", "rater_id", "session_id", "dimension", "score"];
pub const MOS_COLUMNS: [&str; 4] = ["image_id", "dimension", "mos", "n_raters"];
pub const SCORE_COLUMNS: [&str; 3] = ["image_id", "metric_name", "value"];

/// Shortest text that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        // no "-0"
        return "0".into();
    }
    format!("{v}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root_dir: PathBuf,
    pub images: Vec<AnnotatedImage>,
    /// Reference captions keyed by image id, for the lexical scorer.
    pub captions: HashMap<String, String>,
}

impl DatasetManifest {
    /// Absolute (or root-relative) location of an image file.
    pub fn path_of(&self, image: &AnnotatedImage) -> PathBuf {
        self.root_dir.join(&image.file_ref)
    }

    pub fn get(&self, image_id: &str) -> Option<&AnnotatedImage> {
        self.images.iter().find(|i| i.image_id == image_id)
    }
}

struct Columns {
    index: HashMap<String, usize>,
}

impl Columns {
    fn new(headers: &StringRecord) -> Self {
        Columns {
            index: headers
                .iter()
                .enumerate()
                .map(|(i, h)| (h.trim().trim_start_matches('\u{feff}').to_string(), i))
                .collect(),
        }
    }

    fn require(&self, path: &Path, names: &[&str]) -> Result<()> {
        let missing: Vec<&str> = names.iter().copied().filter(|n| !self.index.contains_key(*n)).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::File {
                path: path.into(),
                message: format!("missing required column(s): {}", missing.join(", ")),
            })
        }
    }

    fn get<'r>(&self, rec: &'r StringRecord, name: &str) -> Option<&'r str> {
        self.index.get(name).and_then(|&i| rec.get(i))
    }
}

fn line_of(rec: &StringRecord, fallback: usize) -> usize {
    rec.position().map_or(fallback, |p| p.line() as usize)
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::File {
        path: path.into(),
        message: e.to_string(),
    })?;
    Ok(csv::ReaderBuilder::new().flexible(false).from_reader(file))
}

/// Loads a manifest in the canonical column layout. Relative `file`
/// entries resolve under `root_dir`.
pub fn load_manifest(metadata_csv: &Path, root_dir: &Path) -> Result<DatasetManifest> {
    let mut rdr = open_csv(metadata_csv)?;
    let cols = Columns::new(rdr.headers()?);
    cols.require(metadata_csv, &MANIFEST_COLUMNS)?;
    parse_manifest_records(metadata_csv, root_dir, &cols, rdr.records())
}

fn parse_manifest_records(
    source: &Path,
    root_dir: &Path,
    cols: &Columns,
    records: impl Iterator<Item = csv::Result<StringRecord>>,
) -> Result<DatasetManifest> {
    let mut images = Vec::new();
    let mut captions = HashMap::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let line = line_of(&rec, i + 2);
        let field = |name: &str| cols.get(&rec, name).unwrap_or("").trim();
        let bad = |m: String| Error::row(source, line, m);

        let image_id = field("image_id").to_string();
        if let Some(first) = seen.insert(image_id.clone(), line) {
            return Err(bad(format!("duplicate image_id {image_id:?} (first on row {first})")));
        }
        let file_ref = PathBuf::from(field("file"));
        if file_ref.as_os_str().is_empty() {
            return Err(bad("empty file reference".into()));
        }
        let full = root_dir.join(&file_ref);
        if !full.is_file() {
            return Err(bad(format!("image file {} not found", full.display())));
        }
        let prompt = PromptText::new(cols.get(&rec, "prompt").unwrap_or("")).map_err(|e| bad(e.to_string()))?;
        let model_tag: ModelTag = field("model").parse().map_err(|e: Error| bad(e.to_string()))?;
        let model_group = match field("model_group") {
            "" => model_tag.default_group().ok_or_else(|| {
                bad(format!("model {model_tag} is not a known generator; add a model_group column"))
            })?,
            g => g.parse::<ModelGroup>().map_err(|e| bad(e.to_string()))?,
        };
        let style_raw = field("style").to_string();
        let style_class = StyleClass::from_raw(&style_raw).map_err(|e| bad(e.to_string()))?;
        let prompt_length_class: u8 = field("prompt_length_class")
            .parse()
            .map_err(|_| bad(format!("prompt_length_class {:?} is not an integer", field("prompt_length_class"))))?;
        let param_variant: ParamVariant = field("param_variant").parse().map_err(|e: Error| bad(e.to_string()))?;

        let image = AnnotatedImage {
            image_id,
            file_ref,
            prompt,
            model_tag,
            model_group,
            prompt_length_class,
            style_raw,
            style_class,
            object_label: field("object_label").to_string(),
            param_variant,
        };
        if let Err(violations) = validate_annotated_image(&image) {
            let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(bad(text.join("; ")));
        }
        let caption = field("caption");
        if !caption.is_empty() {
            captions.insert(image.image_id.clone(), caption.to_string());
        }
        images.push(image);
    }
    Ok(DatasetManifest {
        root_dir: root_dir.to_path_buf(),
        images,
        captions,
    })
}

/// Maps a foreign metadata layout onto the canonical columns.
///
/// Mapping file lines are `canonical = source_column` or
/// `canonical.default = value`; `#` starts a comment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ColumnMapping {
    pub sources: BTreeMap<String, String>,
    pub defaults: BTreeMap<String, String>,
}

impl ColumnMapping {
    pub fn parse(text: &str) -> Result<Self> {
        let known: BTreeSet<&str> = MANIFEST_COLUMNS.iter().chain(&OPTIONAL_MANIFEST_COLUMNS).copied().collect();
        let mut m = ColumnMapping::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("mapping line {}: expected key=value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim().to_string());
            let (column, is_default) = match key.strip_suffix(".default") {
                Some(c) => (c, true),
                None => (key, false),
            };
            if !known.contains(column) {
                return Err(Error::Config(format!("mapping line {}: unknown column {column:?}", n + 1)));
            }
            let target = if is_default { &mut m.defaults } else { &mut m.sources };
            if target.insert(column.to_string(), value).is_some() {
                return Err(Error::Config(format!("mapping line {}: {key} given twice", n + 1)));
            }
        }
        Ok(m)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read mapping {}: {e}", path.display())))?;
        ColumnMapping::parse(&text)
    }

    /// Source column feeding `canonical`, which is the canonical name itself
    /// unless the mapping renames it.
    fn source_of<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.sources.get(canonical).map_or(canonical, String::as_str)
    }
}

/// Loads a manifest whose columns are described by `mapping`.
pub fn import_manifest(metadata_csv: &Path, mapping: &ColumnMapping, root_dir: &Path) -> Result<DatasetManifest> {
    let mut rdr = open_csv(metadata_csv)?;
    let src = Columns::new(rdr.headers()?);
    let all: Vec<&str> = MANIFEST_COLUMNS.iter().chain(&OPTIONAL_MANIFEST_COLUMNS).copied().collect();
    let mut missing = Vec::new();
    for c in &MANIFEST_COLUMNS {
        if !src.index.contains_key(mapping.source_of(c)) && !mapping.defaults.contains_key(*c) {
            missing.push(format!("{c} (from {:?})", mapping.source_of(c)));
        }
    }
    if !missing.is_empty() {
        return Err(Error::File {
            path: metadata_csv.into(),
            message: format!("missing mapped column(s): {}", missing.join(", ")),
        });
    }
    let canonical = Columns::new(&StringRecord::from(all.clone()));
    let records = rdr.records().map(|rec| {
        rec.map(|rec| {
            let mut out: StringRecord = all
                .iter()
                .map(|c| match src.get(&rec, mapping.source_of(c)) {
                    Some(v) if !v.trim().is_empty() => v.to_string(),
                    _ => mapping.defaults.get(*c).cloned().unwrap_or_default(),
                })
                .collect();
            out.set_position(rec.position().cloned());
            out
        })
    });
    parse_manifest_records(metadata_csv, root_dir, &canonical, records)
}

/// Decodes a PNG or JPEG file to 8-bit RGB; grey is expanded and alpha
/// dropped.
pub fn decode_image(path: &Path) -> Result<Raster> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?
        .with_guessed_format()
        .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?;
    let img = reader
        .decode()
        .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?;
    let rgb = img.to_rgb8();
    Raster::new(rgb.width(), rgb.height(), rgb.into_raw())
}

pub fn decode_image_bytes(bytes: &[u8]) -> Result<Raster> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::Decode(e.to_string()))?;
    let rgb = img.to_rgb8();
    Raster::new(rgb.width(), rgb.height(), rgb.into_raw())
}

pub fn encode_png(raster: &Raster) -> Result<Vec<u8>> {
    let img = image::RgbImage::from_raw(raster.width(), raster.height(), raster.pixels().to_vec())
        .ok_or_else(|| Error::invalid("raster buffer does not match its dimensions"))?;
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::invalid(format!("png encoding failed: {e}")))?;
    Ok(out.into_inner())
}

pub fn read_ratings(path: &Path) -> Result<RatingTable> {
    let mut rdr = open_csv(path)?;
    let cols = Columns::new(rdr.headers()?);
    cols.require(path, &RATING_COLUMNS)?;
    let mut entries = Vec::new();
    let mut seen = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = line_of(&rec, i + 2);
        let field = |name: &str| cols.get(&rec, name).unwrap_or("").trim();
        let bad = |m: String| Error::row(path, line, m);
        let score: f64 = field("score")
            .parse()
            .map_err(|_| bad(format!("score {:?} is not a number", field("score"))))?;
        check_raw_score(score).map_err(bad)?;
        let session: u32 = field("session_id")
            .parse()
            .map_err(|_| bad(format!("session_id {:?} is not a non-negative integer", field("session_id"))))?;
        let dimension: Dimension = field("dimension").parse().map_err(|e: Error| bad(e.to_string()))?;
        let (image_id, rater_id) = (field("image_id").to_string(), field("rater_id").to_string());
        if image_id.is_empty() || rater_id.is_empty() {
            return Err(bad("empty image_id or rater_id".into()));
        }
        if let Some(first) = seen.insert((image_id.clone(), rater_id.clone(), dimension), line) {
            return Err(bad(format!(
                "rater {rater_id} already rated {image_id} ({dimension}) on row {first}"
            )));
        }
        entries.push(Rating {
            image_id,
            rater_id,
            session,
            dimension,
            score,
        });
    }
    RatingTable::new(entries)
}

fn csv_string(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::File {
        path: path.into(),
        message: e.to_string(),
    })
}

/// MOS CSV sorted by image id, then dimension.
pub fn mos_to_csv(table: &MosTable) -> Result<String> {
    let mut rows: Vec<&MosRow> = table.rows().iter().collect();
    rows.sort_by(|a, b| a.image_id.cmp(&b.image_id).then(a.dimension.cmp(&b.dimension)));
    csv_string(
        &MOS_COLUMNS,
        rows.into_iter().map(|r| {
            vec![
                r.image_id.clone(),
                r.dimension.to_string(),
                format_float(r.mos),
                r.rater_count.to_string(),
            ]
        }),
    )
}

pub fn write_mos(table: &MosTable, path: &Path) -> Result<()> {
    write_text(path, &mos_to_csv(table)?)
}

pub fn read_mos(path: &Path) -> Result<MosTable> {
    let mut rdr = open_csv(path)?;
    let cols = Columns::new(rdr.headers()?);
    cols.require(path, &MOS_COLUMNS[..3])?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = line_of(&rec, i + 2);
        let field = |name: &str| cols.get(&rec, name).unwrap_or("").trim();
        let bad = |m: String| Error::row(path, line, m);
        let mos: f64 = field("mos")
            .parse()
            .map_err(|_| bad(format!("mos {:?} is not a number", field("mos"))))?;
        let rater_count = match field("n_raters") {
            "" => 1,
            n => n
                .parse()
                .map_err(|_| bad(format!("n_raters {n:?} is not a non-negative integer")))?,
        };
        rows.push(MosRow {
            image_id: field("image_id").to_string(),
            dimension: field("dimension").parse().map_err(|e: Error| bad(e.to_string()))?,
            mos,
            rater_count,
        });
    }
    MosTable::new(rows).map_err(|e| Error::File {
        path: path.into(),
        message: e.to_string(),
    })
}

/// Metric-score CSV sorted by image id, then metric name.
pub fn scores_to_csv(rows: &[MetricScore]) -> Result<String> {
    let mut sorted: Vec<&MetricScore> = rows.iter().collect();
    sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id).then_with(|| a.metric.cmp(&b.metric)));
    csv_string(
        &SCORE_COLUMNS,
        sorted
            .into_iter()
            .map(|r| vec![r.image_id.clone(), r.metric.clone(), format_float(r.value)]),
    )
}

pub fn write_scores(rows: &[MetricScore], path: &Path) -> Result<()> {
    write_text(path, &scores_to_csv(rows)?)
}

pub fn read_scores(path: &Path) -> Result<Vec<MetricScore>> {
    let mut rdr = open_csv(path)?;
    let cols = Columns::new(rdr.headers()?);
    cols.require(path, &SCORE_COLUMNS)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = line_of(&rec, i + 2);
        let field = |name: &str| cols.get(&rec, name).unwrap_or("").trim();
        let value: f64 = field("value")
            .parse()
            .map_err(|_| Error::row(path, line, format!("value {:?} is not a number", field("value"))))?;
        if !value.is_finite() {
            return Err(Error::row(path, line, "value is not finite"));
        }
        out.push(MetricScore {
            image_id: field("image_id").to_string(),
            metric: field("metric_name").to_string(),
            value,
        });
    }
    Ok(out)
}
