//! The StairReward score: the whole-prompt score plus a halving-weighted sum
//! of morpheme-versus-stair scores.
//!
//! ```text
//! F = A(p0, I0) + sum_k w_k * A(p_k, I_k),   w_k = 2^-k / (1 - 2^-K)
//! ```

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{AlignmentScore, PromptText};
use crate::prompt_seg::{split_prompt, SegmentationRules};
use crate::scorer::{ImageRef, Scorer};
use crate::stair_crop::stair_lengths;

/// Which components are switched off.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AblationMode {
    /// Full metric.
    None,
    /// Every morpheme replaced by the whole prompt; stair crops kept.
    Word,
    /// Every stair replaced by the whole image; morphemes kept.
    Image,
    /// Both replaced, so the result is `2 * A(p0, I0)`.
    All,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] = [
        AblationMode::None,
        AblationMode::Word,
        AblationMode::Image,
        AblationMode::All,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::None => "none",
            AblationMode::Word => "word",
            AblationMode::Image => "image",
            AblationMode::All => "all",
        }
    }

    fn keeps_morphemes(self) -> bool {
        matches!(self, AblationMode::None | AblationMode::Image)
    }

    fn keeps_stairs(self) -> bool {
        matches!(self, AblationMode::None | AblationMode::Word)
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AblationMode::None),
            "word" => Ok(AblationMode::Word),
            "image" => Ok(AblationMode::Image),
            "all" => Ok(AblationMode::All),
            other => Err(Error::Config(format!("unknown ablation mode {other:?}"))),
        }
    }
}

/// Every intermediate value behind one StairReward score.
#[derive(Clone, Debug, PartialEq)]
pub struct StairBreakdown {
    pub whole_score: f64,
    /// Prompt text actually scored against each stair.
    pub morphemes: Vec<String>,
    /// Box length actually used for each morpheme.
    pub box_lengths: Vec<f64>,
    pub morpheme_scores: Vec<f64>,
    pub weights: Vec<f64>,
    pub final_score: AlignmentScore,
}

/// `w_k = 2^-k / (1 - 2^-K)` for `k = 1..=K`.
pub fn morpheme_weights(count: i64) -> Result<Vec<f64>> {
    if count <= 0 {
        return Err(Error::InvalidMorphemeCount(count));
    }
    let norm = 1.0 - 0.5f64.powi(count as i32);
    Ok((1..=count)
        .map(|k| 0.5f64.powi(k as i32) / norm)
        .collect())
}

/// `whole + Σ w_k s_k`.
///
/// The sum is accumulated as a running weighted mean, which returns equal
/// inputs unchanged; so equal morpheme scores `s` give exactly `whole + s`.
pub fn combine(whole: f64, morpheme_scores: &[f64]) -> Result<f64> {
    let weights = morpheme_weights(morpheme_scores.len() as i64)?;
    let mut mean = morpheme_scores[0];
    let mut seen = weights[0];
    for (w, s) in weights.iter().zip(morpheme_scores).skip(1) {
        seen += w;
        mean += (w / seen) * (s - mean);
    }
    Ok(whole + mean)
}

/// Scores one (prompt, image) pair.
///
/// Identical (text, box) requests are sent to the scorer once; with a
/// segmentation-free or crop-free mode that collapses most of the `K + 1`
/// requests.
pub fn compute_stair_reward(
    scorer: &Scorer,
    prompt: &PromptText,
    image: &ImageRef,
    rules: &SegmentationRules,
    mode: AblationMode,
) -> Result<StairBreakdown> {
    let decomposition = split_prompt(prompt, rules)?;
    let count = decomposition.count();
    let geometry = stair_lengths(count as i64)?;
    let weights = morpheme_weights(count as i64)?;

    let whole_text = prompt.as_str();
    let morphemes: Vec<String> = if mode.keeps_morphemes() {
        decomposition.morphemes().to_vec()
    } else {
        vec![whole_text.to_string(); count]
    };
    let box_lengths: Vec<f64> = if mode.keeps_stairs() {
        geometry.lengths().to_vec()
    } else {
        vec![1.0; count]
    };

    // slot 0 is the whole pair; slot k is morpheme k
    let mut unique: Vec<(&str, f64)> = Vec::with_capacity(count + 1);
    let mut index: HashMap<(&str, u64), usize> = HashMap::new();
    let mut slots = Vec::with_capacity(count + 1);
    let wanted = std::iter::once((whole_text, 1.0))
        .chain(morphemes.iter().map(String::as_str).zip(box_lengths.iter().copied()));
    for (text, length) in wanted {
        let slot = *index.entry((text, length.to_bits())).or_insert_with(|| {
            unique.push((text, length));
            unique.len() - 1
        });
        slots.push(slot);
    }

    let mut crops: HashMap<u64, ImageRef> = HashMap::new();
    for &(_, length) in &unique {
        if let std::collections::hash_map::Entry::Vacant(e) = crops.entry(length.to_bits()) {
            e.insert(image.cropped(length)?);
        }
    }
    let pairs: Vec<(&str, &ImageRef)> = unique
        .iter()
        .map(|(text, length)| (*text, &crops[&length.to_bits()]))
        .collect();
    let scores = scorer.batch_score(&pairs).map_err(|e| match e {
        Error::BatchElement { source, .. } => *source,
        other => other,
    })?;

    let whole_score = scores[slots[0]].value();
    let morpheme_scores: Vec<f64> = slots[1..].iter().map(|&s| scores[s].value()).collect();
    let total = combine(whole_score, &morpheme_scores)?;
    Ok(StairBreakdown {
        whole_score,
        morphemes,
        box_lengths,
        morpheme_scores,
        weights,
        final_score: AlignmentScore::new(total)?,
    })
}
