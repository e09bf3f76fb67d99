//! Synthetic corpus written to a temp directory: images, manifest with
//! captions, and a ratings table correlated with caption overlap.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stairward::dataset::encode_png;
use stairward::scorer::{jaccard, tokens};
use stairward::Raster;

const NOUNS: [&str; 30] = [
    "cat", "dog", "fox", "owl", "horse", "castle", "ship", "tree", "robot", "dragon", "bridge", "lamp", "violin",
    "tiger", "river", "tower", "apple", "clock", "train", "whale", "garden", "knight", "rabbit", "mountain",
    "teapot", "bicycle", "lighthouse", "butterfly", "piano", "cactus",
];
const ADJECTIVES: [&str; 8] = ["red", "tiny", "ancient", "glowing", "wooden", "golden", "misty", "broken"];
const PLACES: [&str; 6] = ["hill", "beach", "table", "moon", "street", "lake"];
const STYLES: [&str; 6] = ["", "baroque", "anime", "realistic", "abstract", "sci-fi"];
const MODELS: [&str; 6] = ["AttnGAN", "GLIDE", "DALLE2", "SD", "Midjourney", "SDXL"];
const FILLER: [&str; 6] = ["photo", "scene", "blurry", "colorful", "picture", "view"];

pub struct Corpus {
    pub dir: tempfile::TempDir,
    pub manifest: PathBuf,
    pub ratings: PathBuf,
    pub ids: Vec<String>,
    pub prompts: Vec<String>,
    pub captions: Vec<String>,
}

impl Corpus {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn prompt_for(i: usize, noun: &str) -> (String, u8, &'static str) {
    let class = (i % 4) as u8;
    let adj = ADJECTIVES[i % ADJECTIVES.len()];
    let place = PLACES[(i / 3) % PLACES.len()];
    let style = STYLES[(i / 4) % STYLES.len()];
    let mut p = match class {
        0 => format!("a {noun}"),
        1 => format!("a {adj} {noun}"),
        _ => format!("a {adj} {noun} on the {place}"),
    };
    if class == 3 && style.is_empty() {
        p.push_str(" at night");
    }
    if !style.is_empty() && class >= 2 {
        p.push_str(&format!(", {style} style"));
    }
    let style = if class >= 2 { style } else { "" };
    (p, class, style)
}

fn image_for(i: usize) -> Raster {
    let (w, h) = (24 + (i % 5) as u32 * 4, 16 + (i % 3) as u32 * 4);
    let mut px = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            px.extend([
                (x * 9 + i as u32 * 13) as u8,
                (y * 11 + i as u32 * 7) as u8,
                ((x ^ y) * 5 + i as u32) as u8,
            ]);
        }
    }
    Raster::new(w, h, px).unwrap()
}

fn grid(v: f64) -> f64 {
    (v.clamp(0.0, 5.0) * 10.0).round() / 10.0
}

/// `n` images over `labels` object labels with `raters` raters and two
/// sessions each.
pub fn build(n: usize, labels: usize, raters: usize, seed: u64) -> Corpus {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::create_dir(root.join("images")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let manifest = root.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest).unwrap();
    w.write_record([
        "image_id",
        "file",
        "prompt",
        "model",
        "style",
        "prompt_length_class",
        "object_label",
        "param_variant",
        "caption",
    ])
    .unwrap();
    let (mut ids, mut prompts, mut captions) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let noun = NOUNS[i % labels.min(NOUNS.len())];
        let (prompt, class, style) = prompt_for(i / labels.max(1) + i, noun);
        let id = format!("img{i:04}");
        let file = format!("images/{id}.png");
        fs::write(root.join(&file), encode_png(&image_for(i)).unwrap()).unwrap();
        let mut words: Vec<String> = prompt
            .split(|c: char| !c.is_alphanumeric() && c != '-')
            .filter(|t| !t.is_empty())
            .filter(|_| rng.random::<f64>() < 0.75)
            .map(String::from)
            .collect();
        for _ in 0..rng.random_range(0..3) {
            words.push(FILLER[rng.random_range(0..FILLER.len())].to_string());
        }
        if words.is_empty() {
            words.push(noun.to_string());
        }
        let caption = words.join(" ");
        w.write_record([
            id.as_str(),
            file.as_str(),
            prompt.as_str(),
            MODELS[i % MODELS.len()],
            style,
            &class.to_string(),
            noun,
            "default",
            caption.as_str(),
        ])
        .unwrap();
        ids.push(id);
        prompts.push(prompt);
        captions.push(caption);
    }
    w.flush().unwrap();

    let ratings = root.join("ratings.csv");
    write_ratings(&ratings, &ids, &prompts, &captions, raters, &mut rng);
    Corpus {
        dir,
        manifest,
        ratings,
        ids,
        prompts,
        captions,
    }
}

fn write_ratings(
    path: &Path,
    ids: &[String],
    prompts: &[String],
    captions: &[String],
    raters: usize,
    rng: &mut ChaCha8Rng,
) {
    let mut w = csv::Writer::from_path(path).unwrap();
    w.write_record(["image_id", "rater_id", "session_id", "dimension", "score"]).unwrap();
    for r in 0..raters {
        let bias = rng.random_range(-0.4..0.4);
        for (i, id) in ids.iter().enumerate() {
            let session = if i < ids.len() / 2 { "0" } else { "1" };
            let overlap = jaccard(&tokens(&prompts[i]), &tokens(&captions[i]));
            let align = grid(0.5 + 4.0 * overlap + bias + rng.random_range(-0.3..0.3));
            let quality = grid(1.0 + 3.0 * ((i * 37 % 101) as f64 / 100.0) + bias + rng.random_range(-0.3..0.3));
            for (dim, v) in [("alignment", align), ("perception", quality)] {
                w.write_record([id.as_str(), &format!("r{r:02}"), session, dim, &format!("{v:.1}")])
                    .unwrap();
            }
        }
    }
    w.flush().unwrap();
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_stairward"))
}

pub fn mock_scorer() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mock_scorer.py")
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run(args: &[&str]) -> Run {
    run_env(args, &[])
}

pub fn run_env(args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = std::process::Command::new(bin());
    cmd.args(args).env_remove("STAIRWARD_SCORER_CMD").env_remove("RUST_LOG");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
