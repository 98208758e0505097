//! Boxplot summaries with Tukey fences, Gaussian kernel density estimates and
//! Jensen-Shannon divergence between scenario populations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::ScenarioLabel;

pub const DEFAULT_OUTLIER_MULTIPLIER: f64 = 3.0;
pub const KDE_MIN_SAMPLES: usize = 5;
pub const KDE_GRID_POINTS: usize = 512;
/// Grid padding beyond the data range, in bandwidths.
pub const KDE_GRID_PADDING: f64 = 3.0;
pub const DENSITY_FLOOR: f64 = 1e-12;
/// Kernel contributions beyond this many bandwidths are dropped (below 1e-13 relative).
pub const KERNEL_CUTOFF: f64 = 8.0;

/// Quantile by linear interpolation between order statistics at position `p·(n−1)`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0);
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn sorted_copy(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub mean: f64,
    pub iqr: f64,
    pub fence_multiplier: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
    /// Extremes of the non-outlier samples.
    pub whisker_low: f64,
    pub whisker_high: f64,
    /// Samples outside the fences, ascending.
    pub outliers: Vec<f64>,
}

/// Quartiles, mean and Tukey-fence outliers `[q1 − M·iqr, q3 + M·iqr]`.
pub fn summarize(samples: &[f64], fence_multiplier: f64) -> Result<SampleSummary> {
    if samples.is_empty() {
        return Err(Error::Domain("cannot summarize an empty sample".into()));
    }
    if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("non-finite sample {x}")));
    }
    let s = sorted_copy(samples);
    let (q1, median, q3) = (quantile(&s, 0.25), quantile(&s, 0.5), quantile(&s, 0.75));
    let iqr = q3 - q1;
    let lower_fence = q1 - fence_multiplier * iqr;
    let upper_fence = q3 + fence_multiplier * iqr;
    let inside = |x: f64| x >= lower_fence && x <= upper_fence;
    let outliers: Vec<f64> = s.iter().copied().filter(|&x| !inside(x)).collect();
    let kept = s.iter().copied().filter(|&x| inside(x));
    let (whisker_low, whisker_high) = kept.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    Ok(SampleSummary {
        n: s.len(),
        q1,
        median,
        q3,
        mean: s.iter().sum::<f64>() / s.len() as f64,
        iqr,
        fence_multiplier,
        lower_fence,
        upper_fence,
        whisker_low,
        whisker_high,
        outliers,
    })
}

/// Silverman's rule: `1.06 · min(std, iqr/1.349) · n^(−1/5)`. When one spread
/// measure is zero the other is used; the result is floored at `1e-6 · range`, or at
/// `1e-6 · max(|x|, 1)` for constant samples.
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let std = var.sqrt();
    let iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    let robust = iqr / 1.349;
    let sigma = match (std > 0.0, robust > 0.0) {
        (true, true) => std.min(robust),
        (true, false) => std,
        (false, true) => robust,
        (false, false) => 0.0,
    };
    let range = sorted[sorted.len() - 1] - sorted[0];
    let floor = if range > 0.0 {
        1e-6 * range
    } else {
        1e-6 * sorted[0].abs().max(1.0)
    };
    (1.06 * sigma * n.powf(-0.2)).max(floor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityEstimate {
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

/// Gaussian KDE of sorted samples evaluated on `grid`, renormalized so that its
/// trapezoidal integral over the grid is one.
fn density_on_grid(sorted: &[f64], h: f64, grid: &[f64]) -> Vec<f64> {
    let norm = 1.0 / (sorted.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let mut values: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let lo = sorted.partition_point(|&s| s < x - KERNEL_CUTOFF * h);
            let hi = sorted.partition_point(|&s| s <= x + KERNEL_CUTOFF * h);
            sorted[lo..hi]
                .iter()
                .map(|&s| {
                    let z = (x - s) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    let total = trapezoid(grid, &values);
    if total > 0.0 {
        for v in &mut values {
            *v /= total;
        }
    }
    values
}

/// Kernel density estimate on its own 512-point grid spanning the data ± 3h.
/// `None` below the minimum sample count.
pub fn kde(samples: &[f64]) -> Option<DensityEstimate> {
    if samples.len() < KDE_MIN_SAMPLES || samples.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let s = sorted_copy(samples);
    let h = silverman_bandwidth(&s);
    let grid = linspace(
        s[0] - KDE_GRID_PADDING * h,
        s[s.len() - 1] + KDE_GRID_PADDING * h,
        KDE_GRID_POINTS,
    );
    let values = density_on_grid(&s, h, &grid);
    Some(DensityEstimate { grid, values, bandwidth: h })
}

/// Kullback-Leibler divergence in bits of `p` from `q` on a common grid.
fn kl_bits(grid: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let integrand: Vec<f64> = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| {
            if a <= 0.0 {
                0.0
            } else {
                a * (a.max(DENSITY_FLOOR) / b.max(DENSITY_FLOOR)).log2()
            }
        })
        .collect();
    trapezoid(grid, &integrand)
}

/// Jensen-Shannon divergence (base 2) between the KDEs of two samples, evaluated
/// on a common grid over the pooled range ± 3·max(h). `None` when either side has
/// fewer than the minimum number of samples.
pub fn js_divergence(f_samples: &[f64], g_samples: &[f64]) -> Option<f64> {
    if f_samples.len() < KDE_MIN_SAMPLES || g_samples.len() < KDE_MIN_SAMPLES {
        return None;
    }
    if f_samples.iter().chain(g_samples).any(|x| !x.is_finite()) {
        return None;
    }
    let f = sorted_copy(f_samples);
    let g = sorted_copy(g_samples);
    let (hf, hg) = (silverman_bandwidth(&f), silverman_bandwidth(&g));
    let pad = KDE_GRID_PADDING * hf.max(hg);
    let lo = f[0].min(g[0]) - pad;
    let hi = f[f.len() - 1].max(g[g.len() - 1]) + pad;
    let grid = linspace(lo, hi, KDE_GRID_POINTS);
    let fd = density_on_grid(&f, hf, &grid);
    let gd = density_on_grid(&g, hg, &grid);
    let m: Vec<f64> = fd.iter().zip(&gd).map(|(a, b)| 0.5 * (a + b)).collect();
    let js = 0.5 * kl_bits(&grid, &fd, &m) + 0.5 * kl_bits(&grid, &gd, &m);
    Some(js.clamp(0.0, 1.0))
}

/// Identifies one comparison group.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub indicator: String,
    pub location: String,
    pub vehicle_class: String,
    /// Threshold in meters, formatted.
    pub threshold: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceMatrix {
    pub key: GroupKey,
    pub n: [usize; 8],
    /// `js[i][j]` between scenarios `i` and `j`; `None` when masked.
    pub js: [[Option<f64>; 8]; 8],
}

impl DivergenceMatrix {
    pub fn masked(&self, i: usize) -> bool {
        self.n[i] < KDE_MIN_SAMPLES
    }
}

/// Pairwise divergence matrix over the eight scenario populations of one group.
pub fn divergence_matrix(key: GroupKey, samples: &[Vec<f64>; 8]) -> DivergenceMatrix {
    let n = std::array::from_fn(|i| samples[i].len());
    let mut js = [[None; 8]; 8];
    for i in 0..8 {
        if n[i] >= KDE_MIN_SAMPLES {
            js[i][i] = Some(0.0);
        }
        for j in i + 1..8 {
            let v = js_divergence(&samples[i], &samples[j]);
            js[i][j] = v;
            js[j][i] = v;
        }
    }
    DivergenceMatrix { key, n, js }
}

/// Computes matrices for many groups concurrently, preserving input order.
pub fn divergence_matrices(groups: Vec<(GroupKey, [Vec<f64>; 8])>) -> Vec<DivergenceMatrix> {
    groups
        .into_par_iter()
        .map(|(key, samples)| divergence_matrix(key, &samples))
        .collect()
}

/// Label of matrix row/column `i`.
pub fn label_at(i: usize) -> ScenarioLabel {
    ScenarioLabel::ALL[i]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.25), 1.75);
        assert_eq!(quantile(&s, 0.5), 2.5);
        assert_eq!(quantile(&s, 0.75), 3.25);
    }

    #[test]
    fn summary_edge_cases() {
        let eq = summarize(&[2.0; 7], 3.0).unwrap();
        assert_eq!((eq.iqr, eq.outliers.len()), (0.0, 0));
        let one = summarize(&[4.5], 3.0).unwrap();
        assert_eq!((one.q1, one.median, one.q3), (4.5, 4.5, 4.5));
        assert!(summarize(&[], 3.0).is_err());
    }

    #[test]
    fn one_far_value_is_the_only_outlier() {
        // Order statistics of {1..9, 100}: q1 at position 2.25 -> 3.25, q3 at 6.75 -> 7.75.
        let mut x: Vec<f64> = (1..=9).map(f64::from).collect();
        x.push(100.0);
        let s = summarize(&x, 3.0).unwrap();
        assert_eq!((s.q1, s.q3), (3.25, 7.75));
        assert_eq!(s.upper_fence, 7.75 + 3.0 * 4.5);
        assert_eq!(s.outliers, vec![100.0]);
        assert_eq!(s.whisker_high, 9.0);
    }

    #[test]
    fn kde_minimum_and_constant_samples() {
        assert!(kde(&[1.0, 2.0, 3.0, 4.0]).is_none());
        let d = kde(&[5.0; 20]).unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-6);
        assert!(d.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn identical_groups_have_zero_divergence() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut samples: [Vec<f64>; 8] = Default::default();
        samples[0] = a.clone();
        samples[1] = a;
        samples[2] = vec![1.0, 2.0];
        let m = divergence_matrix(
            GroupKey {
                indicator: "x".into(),
                location: "all".into(),
                vehicle_class: "car".into(),
                threshold: "100".into(),
            },
            &samples,
        );
        assert!(m.js[0][1].unwrap() < 1e-12);
        assert!(m.masked(2) && m.js[0][2].is_none() && m.js[2][2].is_none());
    }
}
