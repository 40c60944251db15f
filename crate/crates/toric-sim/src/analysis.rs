//! Estimators on top of the sampled data: static parity curves, threshold
//! extraction from curve crossings, lifetime readout, bootstrap confidence
//! intervals, and the capacity bound for CSS codes.

use rand::distributions::Distribution;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::Binomial;
use serde::{Deserialize, Serialize};

use crate::decoder::{self, DecoderConfig};
use crate::error::{Error, Result};
use crate::kmc::EnsembleSeries;
use crate::lattice::LatticeSpec;
use crate::parallel::par_map;
use crate::rng;

/// Which logical operator a curve tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorLabel {
    Z1,
    Z2,
    /// Z1 and Z2 samples pooled into one curve.
    Pooled,
}

/// One grid point of a parity curve: `n` binary success samples of which
/// `n_plus` had parity +1; `mean` is the parity mean in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub n: u64,
    pub n_plus: u64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicalCurve {
    pub l: usize,
    pub p_mix: f64,
    pub label: OperatorLabel,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub f_cr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub sizes: Vec<usize>,
    pub method: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeResult {
    pub tau: f64,
    pub level: f64,
    /// True when the curve never crossed the level; `tau` is then the t_end
    /// lower bound rather than an estimate.
    pub censored: bool,
}

fn parity_mean(n: u64, n_plus: u64) -> f64 {
    (2.0 * n_plus as f64 - n as f64) / n as f64
}

/// Percentile bootstrap CI for a parity mean from its binomial counts.
fn binomial_ci(n: u64, n_plus: u64, resamples: usize, rng: &mut ChaCha12Rng) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    if resamples == 0 {
        let m = parity_mean(n, n_plus);
        return (m, m);
    }
    let p = n_plus as f64 / n as f64;
    let dist = Binomial::new(n, p).expect("valid binomial");
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| parity_mean(n, dist.sample(rng)))
        .collect();
    means.sort_by(|a, b| a.total_cmp(b));
    let lo = means[(resamples as f64 * 0.025) as usize];
    let hi = means[((resamples as f64 * 0.975) as usize).min(resamples - 1)];
    (lo, hi)
}

/// Sampling plan for a static (fixed-error-pattern) parity curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StaticPlan {
    /// Independent lattice instances (1 for the square lattice).
    pub n_instances: usize,
    /// Error patterns drawn per instance.
    pub n_errors: usize,
    pub bootstrap: usize,
    /// Decode on the dual of each instance: measures the star-sector
    /// threshold of the sampled ensemble instead of the plaquette sector.
    pub use_dual: bool,
}

impl Default for StaticPlan {
    fn default() -> Self {
        StaticPlan {
            n_instances: 100,
            n_errors: 200,
            bootstrap: 1000,
            use_dual: false,
        }
    }
}

/// Sample corrected-parity curves over an error-probability grid. Each spin
/// is flipped independently with probability `f`; the state is decoded once
/// and the Z1/Z2 parities of the residual are recorded. Returns the Z1 and
/// Z2 curves (pool them with [`pool_curves`] when a single number is wanted).
pub fn static_curve(
    base: &LatticeSpec,
    f_grid: &[f64],
    plan: &StaticPlan,
    seed: u64,
) -> Result<[LogicalCurve; 2]> {
    if f_grid.iter().any(|&f| !(0.0..0.5).contains(&f)) {
        return Err(Error::invalid_parameter(
            "f_grid",
            "error probabilities must lie in [0, 0.5)",
        ));
    }
    let decoder_cfg = DecoderConfig::default();
    let n_inst = if matches!(base.kind, crate::lattice::LatticeKind::Square) {
        1
    } else {
        plan.n_instances
    };
    // One task per (instance, f) pair; instances differ in lattice seed.
    let tasks: Vec<(usize, usize)> = (0..n_inst)
        .flat_map(|i| (0..f_grid.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<[(u64, u64); 2]>> = par_map(tasks.len(), |t| {
        let (inst, j) = tasks[t];
        let f = f_grid[j];
        let mut spec = base.clone();
        spec.seed = rng::derive_seed(seed, inst as u64);
        let built = spec.build()?;
        let code = if plan.use_dual {
            crate::lattice::dual(&built)
        } else {
            built
        };
        let mut rng = rng::stream(seed, (1 + t) as u64);
        let mut counts = [(0u64, 0u64); 2];
        for _ in 0..plan.n_errors {
            let error: Vec<bool> = (0..code.num_spins).map(|_| rng.gen_bool(f)).collect();
            let syndrome = decoder::extract_syndrome(&code, &error);
            let correction = decoder::decode(&code, &syndrome, &decoder_cfg)?;
            let mut residual = error;
            for &s in &correction.spins {
                residual[s] = !residual[s];
            }
            let (z1, z2) = decoder::logical_parities(&code, &residual);
            for (k, z) in [z1, z2].into_iter().enumerate() {
                counts[k].0 += 1;
                if z > 0 {
                    counts[k].1 += 1;
                }
            }
        }
        Ok(counts)
    });
    // Reduce counts per (f, operator) in task order.
    let mut totals = vec![[(0u64, 0u64); 2]; f_grid.len()];
    for (t, r) in results.into_iter().enumerate() {
        let counts = r?;
        let (_, j) = tasks[t];
        for k in 0..2 {
            totals[j][k].0 += counts[k].0;
            totals[j][k].1 += counts[k].1;
        }
    }
    let mut boot_rng = rng::stream(seed, 0);
    let mk = |label: OperatorLabel, k: usize, boot_rng: &mut ChaCha12Rng| LogicalCurve {
        l: base.l,
        p_mix: base.p_mix,
        label,
        points: f_grid
            .iter()
            .zip(&totals)
            .map(|(&f, t)| {
                let (n, n_plus) = t[k];
                let (lo, hi) = binomial_ci(n, n_plus, plan.bootstrap, boot_rng);
                CurvePoint {
                    x: f,
                    n,
                    n_plus,
                    mean: parity_mean(n, n_plus),
                    ci_low: lo,
                    ci_high: hi,
                }
            })
            .collect(),
    };
    let z1 = mk(OperatorLabel::Z1, 0, &mut boot_rng);
    let z2 = mk(OperatorLabel::Z2, 1, &mut boot_rng);
    Ok([z1, z2])
}

/// Pool the binary samples of curves over identical grids (e.g. Z1 and Z2
/// into one averaged curve).
pub fn pool_curves(curves: &[&LogicalCurve], bootstrap: usize, seed: u64) -> Result<LogicalCurve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::invalid_parameter("curves", "empty"))?;
    let mut rng = rng::stream(seed, 3);
    let points = (0..first.points.len())
        .map(|i| {
            let x = first.points[i].x;
            let mut n = 0;
            let mut n_plus = 0;
            for c in curves {
                assert_eq!(c.points[i].x, x, "pooled curves must share a grid");
                n += c.points[i].n;
                n_plus += c.points[i].n_plus;
            }
            let (lo, hi) = binomial_ci(n, n_plus, bootstrap, &mut rng);
            CurvePoint {
                x,
                n,
                n_plus,
                mean: parity_mean(n, n_plus),
                ci_low: lo,
                ci_high: hi,
            }
        })
        .collect();
    Ok(LogicalCurve {
        l: first.l,
        p_mix: first.p_mix,
        label: OperatorLabel::Pooled,
        points,
    })
}

/// First intersection of two piecewise-linear curves sharing a grid.
fn pair_crossing(xs: &[f64], ya: &[f64], yb: &[f64]) -> Option<f64> {
    let d: Vec<f64> = ya.iter().zip(yb).map(|(a, b)| a - b).collect();
    // A crossing needs an actual sign change. Exact zeros (curves saturated
    // to the same value at the grid edges) only count when bracketed by
    // differences of opposite sign.
    let mut prev: Option<usize> = None;
    for i in 0..d.len() {
        if d[i] == 0.0 {
            continue;
        }
        if let Some(p) = prev {
            if d[p] * d[i] < 0.0 {
                return Some(if i == p + 1 {
                    let t = d[p] / (d[p] - d[i]);
                    xs[p] + t * (xs[i] - xs[p])
                } else {
                    // the curves coincide on the zero run between the two
                    // signs; report its midpoint
                    (xs[p + 1] + xs[i - 1]) / 2.0
                });
            }
        }
        prev = Some(i);
    }
    None
}

/// Mean of pairwise crossings over adjacent sizes (sorted ascending).
/// First sign change of `d` among points where |d| exceeds its tolerance;
/// a straddled sub-tolerance band maps to its midpoint.
fn significant_crossing(xs: &[f64], d: &[f64], tol: &[f64]) -> Option<f64> {
    let mut prev: Option<usize> = None;
    for i in 0..d.len() {
        if d[i].abs() <= tol[i] {
            continue;
        }
        if let Some(p) = prev {
            if d[p] * d[i] < 0.0 {
                return Some(if i == p + 1 {
                    let t = d[p] / (d[p] - d[i]);
                    xs[p] + t * (xs[i] - xs[p])
                } else {
                    0.5 * (xs[p + 1] + xs[i - 1])
                });
            }
        }
        prev = Some(i);
    }
    None
}

/// Pairwise significant crossings averaged over adjacent size pairs.
fn masked_crossing(sizes: &[usize], xs: &[f64], ys: &[Vec<f64>], ses: &[Vec<f64>]) -> Option<f64> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&i| sizes[i]);
    let mut acc = 0.0;
    let mut cnt = 0;
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        let d: Vec<f64> = ys[a].iter().zip(&ys[b]).map(|(p, q)| p - q).collect();
        let tol: Vec<f64> = ses[a]
            .iter()
            .zip(&ses[b])
            .map(|(p, q)| 2.0 * (p * p + q * q).sqrt())
            .collect();
        let c = significant_crossing(xs, &d, &tol)?;
        acc += c;
        cnt += 1;
    }
    (cnt > 0).then(|| acc / cnt as f64)
}

fn crossing_estimate(sizes: &[usize], xs: &[f64], ys: &[Vec<f64>]) -> Option<f64> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&i| sizes[i]);
    let mut acc = 0.0;
    let mut cnt = 0;
    for w in order.windows(2) {
        let c = pair_crossing(xs, &ys[w[0]], &ys[w[1]])?;
        acc += c;
        cnt += 1;
    }
    (cnt > 0).then(|| acc / cnt as f64)
}

/// Threshold from the crossing of per-size parity curves: pairwise linear
/// interpolation intersections averaged over adjacent size pairs, with a
/// percentile bootstrap CI from binomial resampling of every curve point.
pub fn find_crossing(
    curves: &[LogicalCurve],
    bootstrap: usize,
    seed: u64,
) -> Result<ThresholdEstimate> {
    if curves.len() < 2 {
        return Err(Error::invalid_parameter(
            "curves",
            format!("need >= 2 sizes, got {}", curves.len()),
        ));
    }
    let xs: Vec<f64> = curves[0].points.iter().map(|p| p.x).collect();
    for c in curves {
        if c.points.iter().map(|p| p.x).ne(xs.iter().copied()) {
            return Err(Error::invalid_parameter(
                "curves",
                "all curves must share the same grid",
            ));
        }
    }
    let sizes: Vec<usize> = curves.iter().map(|c| c.l).collect();
    let means: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| c.points.iter().map(|p| p.mean).collect())
        .collect();
    let f_cr = crossing_estimate(&sizes, &xs, &means).ok_or_else(|| {
        Error::NoCrossing(format!(
            "no intersection of parity curves for sizes {sizes:?} over f in [{:.4}, {:.4}]",
            xs.first().unwrap(),
            xs.last().unwrap()
        ))
    })?;
    // Bootstrap: resample every point's binomial count, redo the estimate.
    let mut rng = rng::stream(seed, 11);
    let mut boots = Vec::with_capacity(bootstrap);
    for _ in 0..bootstrap {
        let ys: Vec<Vec<f64>> = curves
            .iter()
            .map(|c| {
                c.points
                    .iter()
                    .map(|p| {
                        let d = Binomial::new(p.n, p.n_plus as f64 / p.n as f64)
                            .expect("valid binomial");
                        parity_mean(p.n, d.sample(&mut rng))
                    })
                    .collect()
            })
            .collect();
        if let Some(c) = crossing_estimate(&sizes, &xs, &ys) {
            boots.push(c);
        }
    }
    if boots.len() < bootstrap / 2 {
        return Err(Error::NoCrossing(
            "crossing unstable under bootstrap resampling".to_string(),
        ));
    }
    boots.sort_by(|a, b| a.total_cmp(b));
    let lo = boots[(boots.len() as f64 * 0.025) as usize];
    let hi = boots[((boots.len() as f64 * 0.975) as usize).min(boots.len() - 1)];
    Ok(ThresholdEstimate {
        f_cr,
        ci_low: lo,
        ci_high: hi,
        sizes,
        method: "pairwise linear-interpolation crossings, percentile bootstrap".to_string(),
    })
}

/// Time at which a mean curve first decays through `level` times its initial
/// value, linearly interpolated; censored at the last sample time if it
/// never does.
pub fn lifetime(times: &[f64], means: &[f64], level: f64) -> Result<LifetimeResult> {
    if times.len() != means.len() || times.is_empty() {
        return Err(Error::invalid_parameter(
            "series",
            "times and means must be non-empty and equally long",
        ));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::invalid_parameter(
            "level",
            format!("{level} not in (0, 1)"),
        ));
    }
    let target = level * means[0];
    for i in 1..means.len() {
        if means[i] <= target && means[i - 1] > target {
            let t = (means[i - 1] - target) / (means[i - 1] - means[i]);
            return Ok(LifetimeResult {
                tau: times[i - 1] + t * (times[i] - times[i - 1]),
                level,
                censored: false,
            });
        }
    }
    Ok(LifetimeResult {
        tau: *times.last().unwrap(),
        level,
        censored: true,
    })
}

/// Corrected-parity mean curve of an ensemble: average of the Z1 and Z2
/// corrected parities at each time.
pub fn corrected_parity_mean(series: &EnsembleSeries) -> Vec<f64> {
    series
        .z1_corrected
        .iter()
        .zip(&series.z2_corrected)
        .map(|(a, b)| 0.5 * (a + b))
        .collect()
}

pub fn shannon_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid_parameter(
            "probability",
            format!("{x} not in [0, 1]"),
        ));
    }
    let term = |p: f64| if p == 0.0 { 0.0 } else { -p * p.log2() };
    Ok(term(x) + term(1.0 - x))
}

/// Capacity bound for CSS codes: `1 - H(p_x) - H(p_z)`.
pub fn css_bound(p_x: f64, p_z: f64) -> Result<f64> {
    for (name, p) in [("p_x", p_x), ("p_z", p_z)] {
        if !(0.0..=0.5).contains(&p) {
            return Err(Error::invalid_parameter(
                name,
                format!("{p} not in [0, 0.5]"),
            ));
        }
    }
    Ok(1.0 - shannon_entropy(p_x)? - shannon_entropy(p_z)?)
}

/// Zero contour of the capacity bound: the `p_z` with
/// `1 - H(p_x) - H(p_z) = 0`, by bisection to 1e-8 absolute.
pub fn bound_contour(p_x: f64) -> Result<f64> {
    if !(0.0 < p_x && p_x < 0.5) {
        return Err(Error::invalid_parameter(
            "p_x",
            format!("{p_x} not in (0, 0.5)"),
        ));
    }
    let target = 1.0 - shannon_entropy(p_x)?;
    if target <= 0.0 || target >= 1.0 {
        return Err(Error::invalid_parameter(
            "p_x",
            format!("no root: H({p_x}) outside (0, 1)"),
        ));
    }
    // H is strictly increasing on [0, 0.5]
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if shannon_entropy(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Threshold from relaxation dynamics: the crossing time of per-size
/// corrected-parity curves, read off against the (size-collapsed) error
/// fraction f(t). Expects each entry as `(L, ensemble)` on a shared grid.
pub fn threshold_from_dynamics(
    series: &[(usize, EnsembleSeries)],
    bootstrap: usize,
    seed: u64,
) -> Result<ThresholdEstimate> {
    if series.len() < 2 {
        return Err(Error::invalid_parameter(
            "series",
            "need >= 2 sizes",
        ));
    }
    let times = &series[0].1.times;
    let sizes: Vec<usize> = series.iter().map(|&(l, _)| l).collect();
    let parity: Vec<Vec<f64>> = series.iter().map(|(_, s)| corrected_parity_mean(s)).collect();
    let se: Vec<Vec<f64>> = series
        .iter()
        .map(|(_, s)| {
            s.z1_corrected_se
                .iter()
                .zip(&s.z2_corrected_se)
                .map(|(a, b)| 0.5 * (a * a + b * b).sqrt())
                .collect()
        })
        .collect();
    let frac = |_l: usize, s: &EnsembleSeries| -> Vec<f64> {
        let spins = s.num_spins as f64;
        s.errors.iter().map(|e| e / spins).collect()
    };
    // Early times have both curves pinned at parity 1 with only sampling
    // noise separating them; a raw sign-change search latches onto that.
    // Only separations beyond twice the combined standard error count.
    let tau = masked_crossing(&sizes, times, &parity, &se).ok_or_else(|| {
        Error::NoCrossing(format!(
            "parity curves for sizes {sizes:?} never separate significantly"
        ))
    })?;
    let f_at = |l: usize, s: &EnsembleSeries, t: f64| -> f64 {
        let f = frac(l, s);
        interp(times, &f, t)
    };
    let f_cr = series.iter().map(|(l, s)| f_at(*l, s, tau)).sum::<f64>() / series.len() as f64;
    // Parametric bootstrap: perturb each curve point by its standard error.
    let mut rng = rng::stream(seed, 13);
    let mut boots = Vec::with_capacity(bootstrap);
    for _ in 0..bootstrap {
        let ys: Vec<Vec<f64>> = series
            .iter()
            .map(|(_, s)| {
                let se: Vec<f64> = s
                    .z1_corrected_se
                    .iter()
                    .zip(&s.z2_corrected_se)
                    .map(|(a, b)| 0.5 * (a * a + b * b).sqrt())
                    .collect();
                corrected_parity_mean(s)
                    .iter()
                    .zip(&se)
                    .map(|(m, e)| m + e * normal_sample(&mut rng))
                    .collect()
            })
            .collect();
        if let Some(t) = masked_crossing(&sizes, times, &ys, &se) {
            let f = series.iter().map(|(l, s)| f_at(*l, s, t)).sum::<f64>()
                / series.len() as f64;
            boots.push(f);
        }
    }
    if boots.len() < bootstrap / 2 {
        return Err(Error::NoCrossing(
            "dynamic crossing unstable under bootstrap resampling".to_string(),
        ));
    }
    boots.sort_by(|a, b| a.total_cmp(b));
    let lo = boots[(boots.len() as f64 * 0.025) as usize];
    let hi = boots[((boots.len() as f64 * 0.975) as usize).min(boots.len() - 1)];
    Ok(ThresholdEstimate {
        f_cr,
        ci_low: lo,
        ci_high: hi,
        sizes,
        method: "parity-curve crossing time mapped through f(t)".to_string(),
    })
}

fn normal_sample(rng: &mut ChaCha12Rng) -> f64 {
    use rand_distr::StandardNormal;
    rng.sample(StandardNormal)
}

/// Piecewise-linear interpolation, clamped at the ends.
fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    for i in 1..xs.len() {
        if x <= xs[i] {
            let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            return ys[i - 1] + t * (ys[i] - ys[i - 1]);
        }
    }
    *ys.last().unwrap()
}
