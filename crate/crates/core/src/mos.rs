//! Raw ratings to mean opinion scores.
//!
//! The pipeline is: drop raters whose ranking disagrees with the consensus,
//! re-center each rater's sessions on 2.5, z-score each rater, rescale
//! z-scores onto the 0–5 slider range and average per image.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use log::warn;

use crate::benchmark::correlation::srocc;
use crate::error::{Error, Result};

/// Default leave-one-out SRoCC below which a rater is dropped.
pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dimension {
    Perception,
    Alignment,
}

impl Dimension {
    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Perception => "perception",
            Dimension::Alignment => "alignment",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "perception" | "quality" => Ok(Dimension::Perception),
            "alignment" | "align" => Ok(Dimension::Alignment),
            other => Err(Error::invalid(format!("unknown dimension {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rating {
    pub image_id: String,
    pub rater_id: String,
    pub session: u32,
    pub dimension: Dimension,
    pub score: f64,
}

/// Checks the slider constraints on one raw score: `[0, 5]` in steps of 0.1.
pub fn check_raw_score(score: f64) -> std::result::Result<(), String> {
    if !(0.0..=5.0).contains(&score) {
        return Err(format!("score out of range: {score} not in [0, 5]"));
    }
    let tenths = score * 10.0;
    if (tenths - tenths.round()).abs() > 1e-8 {
        return Err(format!("score {score} is not a multiple of 0.1"));
    }
    Ok(())
}

/// Validated raw ratings.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RatingTable {
    entries: Vec<Rating>,
}

impl RatingTable {
    pub fn new(entries: Vec<Rating>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (i, r) in entries.iter().enumerate() {
            check_raw_score(r.score).map_err(|m| Error::invalid(format!("rating {i}: {m}")))?;
            if !seen.insert((&r.image_id, &r.rater_id, r.dimension)) {
                return Err(Error::invalid(format!(
                    "rating {i}: rater {} scored {} ({}) twice",
                    r.rater_id, r.image_id, r.dimension
                )));
            }
        }
        Ok(RatingTable { entries })
    }

    pub fn entries(&self) -> &[Rating] {
        &self.entries
    }

    pub fn raters(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|r| r.rater_id.as_str()).collect()
    }

    pub fn session_count(&self) -> u32 {
        self.entries.iter().map(|r| r.session + 1).max().unwrap_or(0)
    }

    pub fn without_raters(&self, rejected: &BTreeSet<String>) -> RatingTable {
        RatingTable {
            entries: self
                .entries
                .iter()
                .filter(|r| !rejected.contains(&r.rater_id))
                .cloned()
                .collect(),
        }
    }
}

/// One processed score per (image, rater, dimension).
#[derive(Clone, Debug, PartialEq)]
pub struct RaterScore {
    pub image_id: String,
    pub rater_id: String,
    pub dimension: Dimension,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutlierReport {
    /// Leave-one-out SRoCC per rater; `None` when it could not be computed.
    pub agreement: BTreeMap<String, Option<f64>>,
    pub rejected: Vec<String>,
}

type ItemKey<'a> = (&'a str, Dimension);

/// Drops raters whose scores rank images differently from everyone else.
///
/// For each rater, the SRoCC between their raw scores and the mean of all
/// other raters' raw scores on the same (image, dimension) items is
/// compared with `threshold`; lower means rejected. A rater whose own
/// scores are constant is rejected too. Applied once, not iterated.
pub fn reject_outlier_raters(table: &RatingTable, threshold: f64) -> Result<(RatingTable, OutlierReport)> {
    let raters = table.raters();
    if raters.len() < 3 {
        return Err(Error::InsufficientRaters(raters.len()));
    }
    let mut by_item: BTreeMap<ItemKey, Vec<(&str, f64)>> = BTreeMap::new();
    for r in table.entries() {
        by_item
            .entry((r.image_id.as_str(), r.dimension))
            .or_default()
            .push((r.rater_id.as_str(), r.score));
    }

    let mut agreement = BTreeMap::new();
    let mut rejected = Vec::new();
    for &rater in &raters {
        let mut own = Vec::new();
        let mut others = Vec::new();
        for scores in by_item.values() {
            let Some(&(_, mine)) = scores.iter().find(|(id, _)| *id == rater) else {
                continue;
            };
            let rest: Vec<f64> = scores.iter().filter(|(id, _)| *id != rater).map(|s| s.1).collect();
            if rest.is_empty() {
                continue;
            }
            own.push(mine);
            others.push(rest.iter().sum::<f64>() / rest.len() as f64);
        }
        let constant = own.windows(2).all(|w| w[0] == w[1]);
        let rho = if own.len() >= 3 && !constant {
            srocc(&own, &others).ok()
        } else {
            None
        };
        match rho {
            Some(r) if r < threshold => rejected.push(rater.to_string()),
            Some(_) => {}
            None if constant && own.len() >= 2 => {
                warn!("rater {rater} gave every image the same score; rejecting");
                rejected.push(rater.to_string());
            }
            None => warn!("cannot assess agreement of rater {rater} ({} shared items); keeping", own.len()),
        }
        agreement.insert(rater.to_string(), rho);
    }

    let remaining = raters.len() - rejected.len();
    if remaining < 2 {
        return Err(Error::InsufficientRaters(remaining));
    }
    let drop: BTreeSet<String> = rejected.iter().cloned().collect();
    Ok((table.without_raters(&drop), OutlierReport { agreement, rejected }))
}

/// `s = r - mean(rater's scores in that session) + 2.5`, per rater, session
/// and dimension.
pub fn session_normalize(table: &RatingTable) -> Vec<RaterScore> {
    let mut sums: BTreeMap<(&str, u32, Dimension), (f64, usize)> = BTreeMap::new();
    for r in table.entries() {
        let e = sums.entry((r.rater_id.as_str(), r.session, r.dimension)).or_default();
        e.0 += r.score;
        e.1 += 1;
    }
    table
        .entries()
        .iter()
        .map(|r| {
            let (sum, n) = sums[&(r.rater_id.as_str(), r.session, r.dimension)];
            RaterScore {
                image_id: r.image_id.clone(),
                rater_id: r.rater_id.clone(),
                dimension: r.dimension,
                value: r.score - sum / n as f64 + 2.5,
            }
        })
        .collect()
}

/// Per-rater, per-dimension z-scores using the sample standard deviation.
pub fn zscore(normalized: &[RaterScore]) -> Result<Vec<RaterScore>> {
    let mut groups: BTreeMap<(&str, Dimension), Vec<f64>> = BTreeMap::new();
    for s in normalized {
        groups.entry((s.rater_id.as_str(), s.dimension)).or_default().push(s.value);
    }
    let mut stats: BTreeMap<(&str, Dimension), (f64, f64)> = BTreeMap::new();
    for (&key, values) in &groups {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let sd = var.sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::DegenerateRater {
                rater: key.0.to_string(),
                dimension: key.1.to_string(),
            });
        }
        stats.insert(key, (mean, sd));
    }
    Ok(normalized
        .iter()
        .map(|s| {
            let (mean, sd) = stats[&(s.rater_id.as_str(), s.dimension)];
            RaterScore {
                value: (s.value - mean) / sd,
                ..s.clone()
            }
        })
        .collect())
}

/// Maps a z-score onto the slider range: ±3 to 0 and 5, clamped.
pub fn rescale(z: f64) -> f64 {
    ((z + 3.0) * 5.0 / 6.0).clamp(0.0, 5.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MosRow {
    pub image_id: String,
    pub dimension: Dimension,
    pub mos: f64,
    pub rater_count: usize,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct MosTable {
    rows: Vec<MosRow>,
}

impl MosTable {
    pub fn new(rows: Vec<MosRow>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &rows {
            if !(0.0..=5.0).contains(&r.mos) {
                return Err(Error::invalid(format!("MOS {} of {} outside [0, 5]", r.mos, r.image_id)));
            }
            if r.rater_count == 0 {
                return Err(Error::invalid(format!("MOS of {} has no raters", r.image_id)));
            }
            if !seen.insert((r.image_id.clone(), r.dimension)) {
                return Err(Error::invalid(format!("duplicate MOS for {} ({})", r.image_id, r.dimension)));
            }
        }
        Ok(MosTable { rows })
    }

    pub fn rows(&self) -> &[MosRow] {
        &self.rows
    }

    pub fn get(&self, image_id: &str, dimension: Dimension) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.image_id == image_id && r.dimension == dimension)
            .map(|r| r.mos)
    }

    /// `image_id -> mos` for one dimension.
    pub fn for_dimension(&self, dimension: Dimension) -> BTreeMap<String, f64> {
        self.rows
            .iter()
            .filter(|r| r.dimension == dimension)
            .map(|r| (r.image_id.clone(), r.mos))
            .collect()
    }
}

/// Averages rescaled z-scores per image and dimension.
pub fn compute_mos(z: &[RaterScore]) -> MosTable {
    let mut acc: BTreeMap<(&str, Dimension), (f64, usize)> = BTreeMap::new();
    for s in z {
        if !s.value.is_finite() {
            warn!("dropping non-finite z-score of {} for {}", s.rater_id, s.image_id);
            continue;
        }
        let e = acc.entry((s.image_id.as_str(), s.dimension)).or_default();
        e.0 += rescale(s.value);
        e.1 += 1;
    }
    let rows = acc
        .into_iter()
        .map(|((id, dimension), (sum, n))| MosRow {
            image_id: id.to_string(),
            dimension,
            mos: sum / n as f64,
            rater_count: n,
        })
        .collect();
    MosTable { rows }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MosOutcome {
    pub table: MosTable,
    pub outliers: OutlierReport,
}

/// Rejection, session normalization, z-scoring and averaging in one go.
pub fn run_pipeline(table: &RatingTable, threshold: f64) -> Result<MosOutcome> {
    let (kept, outliers) = reject_outlier_raters(table, threshold)?;
    let normalized = session_normalize(&kept);
    let z = zscore(&normalized)?;
    Ok(MosOutcome {
        table: compute_mos(&z),
        outliers,
    })
}
