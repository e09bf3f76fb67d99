//! Train/test splits that keep every object label on one side.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::AnnotatedImage;

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub seed: u64,
    pub stream: u64,
    pub train_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
    pub test_labels: BTreeSet<String>,
}

impl SplitPlan {
    pub fn test_fraction(&self) -> f64 {
        self.test_ids.len() as f64 / (self.test_ids.len() + self.train_ids.len()) as f64
    }
}

/// RNG for repetition `stream` of a run seeded with `seed`. Streams are
/// independent, so repetitions may run in any order.
pub fn repetition_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Shuffles the object labels and moves whole labels into the test side
/// until it holds at least `test_fraction` of the images.
pub fn grouped_split(images: &[AnnotatedImage], seed: u64, test_fraction: f64) -> Result<SplitPlan> {
    grouped_split_stream(images, seed, 0, test_fraction)
}

pub fn grouped_split_stream(
    images: &[AnnotatedImage],
    seed: u64,
    stream: u64,
    test_fraction: f64,
) -> Result<SplitPlan> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::CannotSplit(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for img in images {
        groups.entry(img.object_label.as_str()).or_default().push(img.image_id.as_str());
    }
    if groups.len() < 2 {
        return Err(Error::CannotSplit(format!(
            "need at least 2 object labels, found {}",
            groups.len()
        )));
    }
    let mut labels: Vec<&str> = groups.keys().copied().collect();
    labels.shuffle(&mut repetition_rng(seed, stream));

    let target = test_fraction * images.len() as f64;
    let mut test_count = 0usize;
    let mut taken = 0;
    while (test_count as f64) < target && taken < labels.len() - 1 {
        test_count += groups[labels[taken]].len();
        taken += 1;
    }
    if (test_count as f64) < target {
        warn!("test side holds {test_count} images, short of the {target:.1} requested");
    }

    let test_labels: BTreeSet<String> = labels[..taken].iter().map(|s| s.to_string()).collect();
    let mut plan = SplitPlan {
        seed,
        stream,
        train_ids: BTreeSet::new(),
        test_ids: BTreeSet::new(),
        test_labels,
    };
    for (label, ids) in &groups {
        let side = if plan.test_labels.contains(*label) {
            &mut plan.test_ids
        } else {
            &mut plan.train_ids
        };
        side.extend(ids.iter().map(|s| s.to_string()));
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelGroup, ModelTag, ParamVariant, PromptText, StyleClass};

    pub(crate) fn corpus(sizes: &[usize]) -> Vec<AnnotatedImage> {
        let mut out = Vec::new();
        for (l, &n) in sizes.iter().enumerate() {
            for i in 0..n {
                out.push(AnnotatedImage {
                    image_id: format!("L{l}-{i}"),
                    file_ref: format!("L{l}-{i}.png").into(),
                    prompt: PromptText::new("x").unwrap(),
                    model_tag: ModelTag::Sd,
                    model_group: ModelGroup::Medium,
                    prompt_length_class: 0,
                    style_raw: String::new(),
                    style_class: StyleClass::None,
                    object_label: format!("label{l}"),
                    param_variant: ParamVariant::NotApplicable,
                });
            }
        }
        out
    }

    #[test]
    fn uniform_groups_split_exactly() {
        let images = corpus(&[10; 10]);
        for seed in 0..20 {
            let plan = grouped_split(&images, seed, 0.2).unwrap();
            assert_eq!(plan.test_labels.len(), 2);
            assert_eq!(plan.test_ids.len(), 20);
            assert_eq!(plan.train_ids.len(), 80);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let images = corpus(&[3, 7, 5, 9, 4, 6]);
        assert_eq!(grouped_split(&images, 42, 0.2).unwrap(), grouped_split(&images, 42, 0.2).unwrap());
        let differ = (0..20).any(|s| {
            grouped_split(&images, s, 0.2).unwrap().test_ids != grouped_split(&images, 42, 0.2).unwrap().test_ids
        });
        assert!(differ);
    }

    #[test]
    fn greedy_walk_stops_at_threshold() {
        // sizes 50, 30, 20: find a seed whose shuffle puts label2 (20 images) first
        let images = corpus(&[50, 30, 20]);
        let mut hit = false;
        for seed in 0..200 {
            let mut labels = vec!["label0", "label1", "label2"];
            labels.shuffle(&mut repetition_rng(seed, 0));
            if labels[0] == "label2" {
                let plan = grouped_split(&images, seed, 0.2).unwrap();
                assert_eq!(plan.test_labels, BTreeSet::from(["label2".to_string()]));
                assert_eq!(plan.test_ids.len(), 20);
                hit = true;
            }
        }
        assert!(hit);
    }

    #[test]
    fn single_label_cannot_split() {
        assert!(matches!(grouped_split(&corpus(&[10]), 0, 0.2), Err(Error::CannotSplit(_))));
    }

    #[test]
    fn train_side_never_empty() {
        let plan = grouped_split(&corpus(&[1, 99]), 3, 0.2).unwrap();
        assert!(!plan.train_ids.is_empty() && !plan.test_ids.is_empty());
    }

    #[test]
    fn labels_never_straddle() {
        let sizes: Vec<usize> = (0..25).map(|i| 2 + (i * 7) % 11).collect();
        let images = corpus(&sizes);
        let label_of: BTreeMap<&str, &str> =
            images.iter().map(|i| (i.image_id.as_str(), i.object_label.as_str())).collect();
        for seed in 0..1000 {
            let plan = grouped_split(&images, seed, 0.2).unwrap();
            let test: BTreeSet<&str> = plan.test_ids.iter().map(|id| label_of[id.as_str()]).collect();
            let train: BTreeSet<&str> = plan.train_ids.iter().map(|id| label_of[id.as_str()]).collect();
            assert!(test.is_disjoint(&train));
            assert_eq!(plan.test_ids.len() + plan.train_ids.len(), images.len());
        }
    }
}
