//! Evaluation harness: repeated grouped splits, logistic remapping and
//! correlation against MOS, broken down by subset.

pub mod correlation;
pub mod logistic;
pub mod report;
pub mod split;
pub mod subsets;

use std::collections::{BTreeMap, BTreeSet};
use std::thread;

use log::warn;

pub use correlation::{fractional_ranks, krocc, plcc, srocc};
pub use logistic::{fit_logistic, LogisticFit, LogisticParams};
pub use report::{BenchmarkReport, ReportRow, ScatterSet};
pub use split::{grouped_split, grouped_split_stream, SplitPlan, DEFAULT_TEST_FRACTION};
pub use subsets::{partition, subset_filter, SubsetCriterion, SubsetSelector};

use crate::error::{Error, Result};
use crate::model::{AnnotatedImage, CorrelationTriple};
use crate::mos::{Dimension, MosTable};

/// Minimum test images for a subset to be reported in a repetition.
pub const MIN_SUBSET_SIZE: usize = 3;
/// Below this many test images PLCC uses a straight-line fit instead of the
/// five-parameter logistic.
pub const MIN_LOGISTIC_SIZE: usize = 10;

/// `(image_id, metric_name, value)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricScore {
    pub image_id: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkConfig {
    pub dimension: Dimension,
    pub criteria: Vec<SubsetCriterion>,
    pub repetitions: usize,
    pub seed: u64,
    pub test_fraction: f64,
    /// Worker threads for repetitions.
    pub jobs: usize,
    /// Keep (X, X̂, MOS) triples of the first repetition.
    pub scatter: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            dimension: Dimension::Alignment,
            criteria: vec![SubsetCriterion::All],
            repetitions: 10,
            seed: 0,
            test_fraction: DEFAULT_TEST_FRACTION,
            jobs: 1,
            scatter: false,
        }
    }
}

/// Metric values and MOS joined on image id.
#[derive(Clone, Debug)]
pub struct JoinedData<'a> {
    images: &'a [AnnotatedImage],
    metrics: BTreeMap<String, BTreeMap<String, f64>>,
    mos: BTreeMap<String, f64>,
}

impl<'a> JoinedData<'a> {
    /// Fails, naming the ids, if any image lacks a MOS or a value for some
    /// metric.
    pub fn new(
        images: &'a [AnnotatedImage],
        scores: &[MetricScore],
        mos: &MosTable,
        dimension: Dimension,
    ) -> Result<Self> {
        let mut metrics: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for s in scores {
            if !s.value.is_finite() {
                return Err(Error::invalid(format!(
                    "metric {} of {} is not finite",
                    s.metric, s.image_id
                )));
            }
            if metrics
                .entry(s.metric.clone())
                .or_default()
                .insert(s.image_id.clone(), s.value)
                .is_some()
            {
                return Err(Error::invalid(format!(
                    "duplicate {} score for {}",
                    s.metric, s.image_id
                )));
            }
        }
        if metrics.is_empty() {
            return Err(Error::invalid("no metric scores given"));
        }
        let all_mos = mos.for_dimension(dimension);
        let missing_mos: Vec<&str> = images
            .iter()
            .map(|i| i.image_id.as_str())
            .filter(|id| !all_mos.contains_key(*id))
            .collect();
        if !missing_mos.is_empty() {
            return Err(Error::invalid(format!(
                "no {dimension} MOS for {} image(s): {}",
                missing_mos.len(),
                preview(&missing_mos)
            )));
        }
        for (metric, values) in &metrics {
            let missing: Vec<&str> = images
                .iter()
                .map(|i| i.image_id.as_str())
                .filter(|id| !values.contains_key(*id))
                .collect();
            if !missing.is_empty() {
                return Err(Error::invalid(format!(
                    "metric {metric} has no score for {} image(s): {}",
                    missing.len(),
                    preview(&missing)
                )));
            }
        }
        let wanted: BTreeSet<&str> = images.iter().map(|i| i.image_id.as_str()).collect();
        let mos = all_mos
            .into_iter()
            .filter(|(id, _)| wanted.contains(id.as_str()))
            .collect();
        Ok(JoinedData { images, metrics, mos })
    }

    pub fn metric_names(&self) -> impl Iterator<Item = &str> {
        self.metrics.keys().map(String::as_str)
    }
}

fn preview(ids: &[&str]) -> String {
    let head: Vec<&str> = ids.iter().take(10).copied().collect();
    if ids.len() > head.len() {
        format!("{}, ...", head.join(", "))
    } else {
        head.join(", ")
    }
}

/// One (subset, metric) result of a single repetition.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub subset: SubsetSelector,
    pub metric: String,
    pub triple: CorrelationTriple,
    pub params: Option<LogisticParams>,
    pub test_size: usize,
    pub scatter: Option<Vec<[f64; 3]>>,
}

/// Correlations of one metric against MOS on one set of images.
///
/// SRoCC and KRoCC use the raw scores; PLCC uses the remapped scores.
pub fn evaluate(predicted: &[f64], mos: &[f64]) -> Result<(CorrelationTriple, Option<LogisticParams>, Vec<f64>)> {
    let s = srocc(predicted, mos)?;
    let k = krocc(predicted, mos)?;
    let (params, mapped) = if predicted.len() >= MIN_LOGISTIC_SIZE {
        let fit = fit_logistic(predicted, mos)?;
        if !fit.converged {
            warn!("logistic fit stopped after {} iterations without converging", fit.iterations);
        }
        (Some(fit.params), fit.params.apply(predicted))
    } else {
        (None, linear_map(predicted, mos))
    };
    let p = plcc(&mapped, mos)?;
    Ok((CorrelationTriple::new(s, k, p)?, params, mapped))
}

fn linear_map(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    x.iter().map(|a| my + slope * (a - mx)).collect()
}

/// Runs repetition `index`: a grouped split from stream `index` of the
/// seed, then every (subset, metric) evaluated on the test side.
pub fn run_repetition(data: &JoinedData<'_>, config: &BenchmarkConfig, index: usize) -> Result<Vec<Cell>> {
    let plan = grouped_split_stream(data.images, config.seed, index as u64, config.test_fraction)?;
    let mut cells = Vec::new();
    for &criterion in &config.criteria {
        for (selector, members) in partition(data.images, criterion) {
            let ids: Vec<&str> = members
                .iter()
                .map(|i| i.image_id.as_str())
                .filter(|id| plan.test_ids.contains(*id))
                .collect();
            if ids.len() < MIN_SUBSET_SIZE {
                warn!(
                    "repetition {index}: subset {selector} has {} test image(s), skipped",
                    ids.len()
                );
                continue;
            }
            let mos: Vec<f64> = ids.iter().map(|id| data.mos[*id]).collect();
            for (metric, values) in &data.metrics {
                let x: Vec<f64> = ids.iter().map(|id| values[*id]).collect();
                match evaluate(&x, &mos) {
                    Ok((triple, params, mapped)) => cells.push(Cell {
                        subset: selector,
                        metric: metric.clone(),
                        triple,
                        params,
                        test_size: ids.len(),
                        scatter: (config.scatter && index == 0).then(|| {
                            x.iter()
                                .zip(&mapped)
                                .zip(&mos)
                                .map(|((a, b), c)| [*a, *b, *c])
                                .collect()
                        }),
                    }),
                    Err(e) => warn!("repetition {index}: {selector} / {metric} skipped: {e}"),
                }
            }
        }
    }
    Ok(cells)
}

/// Averages cells with the same (subset, metric) across repetitions.
pub fn aggregate(config: &BenchmarkConfig, repetitions: Vec<Vec<Cell>>) -> BenchmarkReport {
    struct Acc {
        sums: [f64; 3],
        count: usize,
        test_sizes: usize,
        params: Vec<LogisticParams>,
    }
    let mut acc: BTreeMap<(SubsetSelector, String), Acc> = BTreeMap::new();
    let mut scatter = Vec::new();
    for cells in repetitions {
        for cell in cells {
            let e = acc.entry((cell.subset, cell.metric.clone())).or_insert(Acc {
                sums: [0.0; 3],
                count: 0,
                test_sizes: 0,
                params: Vec::new(),
            });
            e.sums[0] += cell.triple.srocc;
            e.sums[1] += cell.triple.krocc;
            e.sums[2] += cell.triple.plcc;
            e.count += 1;
            e.test_sizes += cell.test_size;
            e.params.extend(cell.params);
            if let Some(points) = cell.scatter {
                scatter.push(ScatterSet {
                    subset: cell.subset,
                    metric: cell.metric,
                    points,
                });
            }
        }
    }
    let order: Vec<SubsetSelector> = config.criteria.iter().flat_map(|c| c.selectors()).collect();
    let mut rows: Vec<ReportRow> = acc
        .into_iter()
        .map(|((subset, metric), a)| {
            let n = a.count as f64;
            ReportRow {
                subset: subset.to_string(),
                metric,
                triple: CorrelationTriple {
                    srocc: a.sums[0] / n,
                    krocc: a.sums[1] / n,
                    plcc: a.sums[2] / n,
                },
                repetitions: a.count,
                mean_test_size: a.test_sizes as f64 / n,
                params: a.params,
            }
        })
        .collect();
    let position = |name: &str| order.iter().position(|s| s.to_string() == name).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| {
        position(&a.subset)
            .cmp(&position(&b.subset))
            .then_with(|| a.metric.cmp(&b.metric))
    });
    BenchmarkReport {
        dimension: config.dimension,
        seed: config.seed,
        requested_repetitions: config.repetitions,
        rows,
        scatter,
    }
}

/// Repeated grouped-split evaluation averaged per (subset, metric).
pub fn run_benchmark(data: &JoinedData<'_>, config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    if config.repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    let jobs = config.jobs.clamp(1, config.repetitions);
    let results: Vec<Result<Vec<Cell>>> = if jobs == 1 {
        (0..config.repetitions).map(|r| run_repetition(data, config, r)).collect()
    } else {
        let mut slots: Vec<Option<Result<Vec<Cell>>>> = (0..config.repetitions).map(|_| None).collect();
        thread::scope(|scope| {
            let handles: Vec<_> = (0..jobs)
                .map(|worker| {
                    scope.spawn(move || {
                        (worker..config.repetitions)
                            .step_by(jobs)
                            .map(|r| (r, run_repetition(data, config, r)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (r, res) in h.join().expect("benchmark worker panicked") {
                    slots[r] = Some(res);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every repetition ran")).collect()
    };
    let repetitions = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(aggregate(config, repetitions))
}
