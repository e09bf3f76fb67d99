//! Five-parameter logistic remapping of metric scores onto MOS,
//!
//! ```text
//! f(x) = a1 * (0.5 - 1 / (1 + exp(a2 * (x - a3)))) + a4 * x + a5
//! ```
//!
//! fitted by Levenberg–Marquardt on standardized data.

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 500;
const RELATIVE_TOLERANCE: f64 = 1e-10;
const MIN_SAMPLES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogisticParams {
    /// a1: height of the sigmoid part.
    pub amplitude: f64,
    /// a2: sigmoid steepness.
    pub steepness: f64,
    /// a3: sigmoid midpoint.
    pub midpoint: f64,
    /// a4: linear slope.
    pub slope: f64,
    /// a5: offset.
    pub offset: f64,
}

impl LogisticParams {
    pub fn from_array(a: [f64; 5]) -> Self {
        LogisticParams {
            amplitude: a[0],
            steepness: a[1],
            midpoint: a[2],
            slope: a[3],
            offset: a[4],
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.amplitude, self.steepness, self.midpoint, self.slope, self.offset]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let s = falling_sigmoid(self.steepness * (x - self.midpoint));
        self.amplitude * (0.5 - s) + self.slope * x + self.offset
    }

    pub fn apply(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }
}

/// `1 / (1 + e^t)` without overflow.
fn falling_sigmoid(t: f64) -> f64 {
    if t > 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogisticFit {
    pub params: LogisticParams,
    pub sse: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit; `params` is then the best
    /// point seen.
    pub converged: bool,
}

/// Least-squares fit of the five-parameter logistic.
pub fn fit_logistic(predicted: &[f64], mos: &[f64]) -> Result<LogisticFit> {
    if predicted.len() != mos.len() {
        return Err(Error::stats(format!(
            "length mismatch: {} predictions vs {} targets",
            predicted.len(),
            mos.len()
        )));
    }
    if predicted.len() < MIN_SAMPLES {
        return Err(Error::stats(format!(
            "logistic fit needs at least {MIN_SAMPLES} samples, got {}",
            predicted.len()
        )));
    }
    if predicted.iter().chain(mos).any(|v| !v.is_finite()) {
        return Err(Error::stats("non-finite input to logistic fit"));
    }
    let (mx, sx) = mean_sd(predicted);
    if !(sx > 0.0) {
        return Err(Error::stats("constant predictions cannot be fitted"));
    }
    let (my, sy) = mean_sd(mos);
    let sy = if sy > 0.0 { sy } else { 1.0 };
    let xs: Vec<f64> = predicted.iter().map(|x| (x - mx) / sx).collect();
    let ys: Vec<f64> = mos.iter().map(|y| (y - my) / sy).collect();

    let (lo, hi) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)));
    let direction = if covariance(&xs, &ys) < 0.0 { -1.0 } else { 1.0 };
    let sigmoid_start = [direction * (hi - lo), 1.0, 0.0, 0.0, 0.0];
    let (slope, intercept) = ordinary_least_squares(&xs, &ys);
    let linear_start = [0.0, 1.0, 0.0, slope, intercept];

    let a = levenberg_marquardt(&xs, &ys, sigmoid_start);
    let b = levenberg_marquardt(&xs, &ys, linear_start);
    let best = if b.sse < a.sse { b } else { a };

    let [a1, a2, a3, a4, a5] = best.params;
    let params = LogisticParams {
        amplitude: sy * a1,
        steepness: a2 / sx,
        midpoint: mx + sx * a3,
        slope: sy * a4 / sx,
        offset: sy * (a5 - a4 * mx / sx) + my,
    };
    if !params.is_finite() {
        return Err(Error::stats("logistic fit diverged"));
    }
    Ok(LogisticFit {
        params,
        sse: best.sse * sy * sy,
        iterations: best.iterations,
        converged: best.converged,
    })
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn covariance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>()
}

/// Slope and intercept of the least-squares line; `x` is centered.
fn ordinary_least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

struct Run {
    params: [f64; 5],
    sse: f64,
    iterations: usize,
    converged: bool,
}

fn model(p: &[f64; 5], x: f64) -> f64 {
    LogisticParams::from_array(*p).eval(x)
}

fn sse(p: &[f64; 5], xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter().zip(ys).map(|(&x, &y)| (model(p, x) - y).powi(2)).sum()
}

fn gradient_row(p: &[f64; 5], x: f64) -> [f64; 5] {
    let s = falling_sigmoid(p[1] * (x - p[2]));
    let ds = s * (1.0 - s);
    [0.5 - s, p[0] * ds * (x - p[2]), -p[0] * ds * p[1], x, 1.0]
}

fn levenberg_marquardt(xs: &[f64], ys: &[f64], start: [f64; 5]) -> Run {
    let mut p = start;
    let mut current = sse(&p, xs, ys);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if current == 0.0 {
            converged = true;
            break;
        }
        let mut jtj = [[0.0; 5]; 5];
        let mut jtr = [0.0; 5];
        for (&x, &y) in xs.iter().zip(ys) {
            let g = gradient_row(&p, x);
            let r = model(&p, x) - y;
            for i in 0..5 {
                jtr[i] += g[i] * r;
                for j in 0..=i {
                    jtj[i][j] += g[i] * g[j];
                }
            }
        }
        for i in 0..5 {
            for j in 0..i {
                jtj[j][i] = jtj[i][j];
            }
        }
        let scale = (0..5).map(|i| jtj[i][i]).fold(0.0, f64::max).max(1e-300);

        let mut accepted = false;
        while !accepted {
            let mut a = jtj;
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += lambda * jtj[i][i].max(1e-9 * scale);
            }
            let step = solve5(a, jtr.map(|v| -v));
            if let Some(step) = step {
                let mut trial = p;
                for i in 0..5 {
                    trial[i] += step[i];
                }
                let value = sse(&trial, xs, ys);
                if value.is_finite() && value < current {
                    let improvement = (current - value) / current;
                    p = trial;
                    current = value;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if improvement < RELATIVE_TOLERANCE {
                        converged = true;
                    }
                    continue;
                }
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                // no descent direction left: a minimum up to rounding
                converged = true;
                break;
            }
            iterations += 1;
            if iterations >= MAX_ITERATIONS {
                break;
            }
        }
        if converged {
            break;
        }
    }
    Run {
        params: p,
        sse: current,
        iterations,
        converged,
    }
}

/// Gaussian elimination with partial pivoting.
fn solve5(mut a: [[f64; 5]; 5], mut b: [f64; 5]) -> Option<[f64; 5]> {
    for col in 0..5 {
        let pivot = (col..5).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if !(a[pivot][col].abs() > 1e-300) {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..5 {
            let f = a[row][col] / a[col][col];
            for k in col..5 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 5];
    for row in (0..5).rev() {
        let tail: f64 = (row + 1..5).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::correlation::plcc;

    fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    fn rmse(a: &[f64], b: &[f64]) -> f64 {
        (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
    }

    #[test]
    fn recovers_noiseless_logistic() {
        let truth = LogisticParams::from_array([2.0, 1.0, 0.0, 0.5, 1.0]);
        let x = grid(101, -5.0, 5.0);
        let y = truth.apply(&x);
        let fit = fit_logistic(&x, &y).unwrap();
        let r = rmse(&fit.params.apply(&x), &y);
        assert!(r < 1e-6, "rmse {r}, fit {fit:?}");
    }

    #[test]
    fn linear_data_gives_unit_plcc() {
        let x = grid(30, -1.0, 4.0);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let fit = fit_logistic(&x, &y).unwrap();
        let r = plcc(&fit.params.apply(&x), &y).unwrap();
        assert!((r - 1.0).abs() < 1e-9, "{r}");
    }

    #[test]
    fn decreasing_relation_is_fitted() {
        let x = grid(40, 0.0, 10.0);
        let y: Vec<f64> = x.iter().map(|v| 5.0 - 0.4 * v).collect();
        let fit = fit_logistic(&x, &y).unwrap();
        assert!((plcc(&fit.params.apply(&x), &y).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        let x = vec![1.0; 12];
        let y = grid(12, 0.0, 1.0);
        assert!(fit_logistic(&x, &y).is_err());
        assert!(fit_logistic(&grid(5, 0.0, 1.0), &grid(5, 0.0, 1.0)).is_err());
        let mut bad = grid(12, 0.0, 1.0);
        bad[3] = f64::NAN;
        assert!(fit_logistic(&bad, &y).is_err());
        assert!(fit_logistic(&grid(12, 0.0, 1.0), &grid(11, 0.0, 1.0)).is_err());
    }

    #[test]
    fn sigmoid_is_overflow_safe() {
        let p = LogisticParams::from_array([1.0, 1e6, 0.0, 0.0, 0.0]);
        assert_eq!(p.eval(1.0), 0.5);
        assert_eq!(p.eval(-1.0), -0.5);
    }

    #[test]
    fn solver_handles_identity() {
        let mut a = [[0.0; 5]; 5];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = 2.0;
        }
        assert_eq!(solve5(a, [2.0, 4.0, 6.0, 8.0, 10.0]).unwrap(), [1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(solve5([[0.0; 5]; 5], [1.0; 5]).is_none());
    }
}
