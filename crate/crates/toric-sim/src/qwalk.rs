//! Coherent single-particle dynamics of one anyon hopping between
//! plaquettes: dense tight-binding Hamiltonian on the plaquette graph,
//! exact propagation by eigendecomposition, and spreading statistics.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::energy::torus_distance;
use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, StabilizerCode};
use crate::parallel::par_map;
use crate::rng;

/// Dense solves get slow and memory-hungry beyond this many plaquettes.
const MAX_DENSE: usize = 4096;

/// Onsite potentials for the walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WalkDisorder {
    Uniform { j: f64 },
    /// `J ± sigma` with equal probability, drawn per plaquette.
    Ising { j: f64, sigma: f64 },
}

/// How the spread is measured: root-mean-square displacement, or the
/// standard deviation of the displacement distribution (RMS with the squared
/// mean distance subtracted).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadKind {
    Rms,
    StdDev,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WalkSpec {
    pub lattice: LatticeSpec,
    /// Hopping strength between adjacent plaquettes.
    pub h: f64,
    pub disorder: WalkDisorder,
    pub times: Vec<f64>,
    /// Disorder / lattice realizations to average over.
    pub samples: usize,
    pub seed: u64,
    pub spread: SpreadKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpreadSeries {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    /// False where the ensemble-mean spread exceeded L/4 and boundary
    /// interference may contaminate the value.
    pub boundary_ok: Vec<bool>,
    pub exponent: f64,
    pub exponent_se: f64,
    /// Time window (final pre-boundary half-decade) the exponent was fitted on.
    pub fit_window: (f64, f64),
    pub samples: usize,
}

/// Tight-binding matrix on the plaquette graph: `h` between plaquettes
/// sharing a spin, `j_p` on the diagonal.
pub fn build_walk_hamiltonian(
    code: &StabilizerCode,
    h: f64,
    j_p: &[f64],
) -> Result<Array2<f64>> {
    let n = code.plaquettes.len();
    if j_p.len() != n {
        return Err(Error::invalid_parameter(
            "j_p",
            format!("{} potentials for {} plaquettes", j_p.len(), n),
        ));
    }
    if n > MAX_DENSE {
        return Err(Error::MatrixTooLarge(n, MAX_DENSE));
    }
    let mut m = Array2::zeros((n, n));
    for p in 0..n {
        m[[p, p]] = j_p[p];
    }
    for (spin, &[p, q]) in code.spin_to_plaquettes.iter().enumerate() {
        let _ = spin;
        if p != q {
            m[[p, q]] = h;
            m[[q, p]] = h;
        }
    }
    Ok(m)
}

/// Spectral propagator: amplitudes at arbitrary times from one
/// eigendecomposition.
pub struct Propagator {
    eigvals: Array1<f64>,
    eigvecs: Array2<f64>,
    /// Overlaps of the initial basis state with each eigenvector.
    coeffs: Array1<f64>,
}

impl Propagator {
    pub fn new(m: &Array2<f64>, origin: usize) -> Result<Self> {
        let (eigvals, eigvecs) = m
            .eigh(UPLO::Lower)
            .map_err(|e| Error::Linalg(format!("symmetric eigensolve failed: {e}")))?;
        let coeffs = eigvecs.row(origin).to_owned();
        Ok(Propagator {
            eigvals,
            eigvecs,
            coeffs,
        })
    }

    /// `psi(t) = V (c ∘ e^{-i lambda t})`, computed as two real gemv calls.
    pub fn state_at(&self, t: f64) -> Array1<Complex64> {
        let re = &self.coeffs * &self.eigvals.mapv(|l| (l * t).cos());
        let im = &self.coeffs * &self.eigvals.mapv(|l| -(l * t).sin());
        let re = self.eigvecs.dot(&re);
        let im = self.eigvecs.dot(&im);
        Array1::from_iter(re.iter().zip(im.iter()).map(|(&r, &i)| Complex64::new(r, i)))
    }
}

/// Evolve the walker from `origin` and return the state at each time.
pub fn evolve(m: &Array2<f64>, origin: usize, times: &[f64]) -> Result<Vec<Array1<Complex64>>> {
    let prop = Propagator::new(m, origin)?;
    Ok(times.iter().map(|&t| prop.state_at(t)).collect())
}

/// Spread of a normalized state around `origin`, in lattice units, using
/// torus minimal-image distances between plaquette positions.
pub fn spread(
    state: &Array1<Complex64>,
    origin: usize,
    code: &StabilizerCode,
    kind: SpreadKind,
) -> f64 {
    let mut mean_d = 0.0;
    let mut mean_d2 = 0.0;
    for (p, amp) in state.iter().enumerate() {
        let w = amp.norm_sqr();
        let d = torus_distance(p, origin, code);
        mean_d += w * d;
        mean_d2 += w * d * d;
    }
    match kind {
        SpreadKind::Rms => mean_d2.sqrt(),
        SpreadKind::StdDev => (mean_d2 - mean_d * mean_d).max(0.0).sqrt(),
    }
}

/// Deterministic origin: the plaquette closest to the lattice centre.
pub fn central_plaquette(code: &StabilizerCode) -> usize {
    let c = code.l as f64 / 2.0;
    let dist = |p: usize| {
        let [x, y] = code.plaquettes[p].position;
        let l = code.l as f64;
        let dx = (x - c).rem_euclid(l).min((c - x).rem_euclid(l));
        let dy = (y - c).rem_euclid(l).min((c - y).rem_euclid(l));
        dx * dx + dy * dy
    };
    (0..code.plaquettes.len())
        .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
        .unwrap()
}

fn sample_potentials(
    code: &StabilizerCode,
    disorder: &WalkDisorder,
    seed: u64,
    index: u64,
) -> Vec<f64> {
    use rand::Rng;
    match *disorder {
        WalkDisorder::Uniform { j } => vec![j; code.plaquettes.len()],
        WalkDisorder::Ising { j, sigma } => {
            let mut rng = rng::stream(seed, index);
            (0..code.plaquettes.len())
                .map(|_| if rng.gen_bool(0.5) { j + sigma } else { j - sigma })
                .collect()
        }
    }
}

/// Ordinary least squares of y on x; returns (slope, slope standard error).
fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    if x.len() <= 2 {
        return (slope, 0.0);
    }
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let se = (ssr / (n - 2.0) / sxx).sqrt();
    (slope, se)
}

/// Average the spread over disorder / lattice realizations and fit the
/// growth exponent on the final pre-boundary decade of times (log-log OLS).
pub fn run_walk_ensemble(spec: &WalkSpec) -> Result<SpreadSeries> {
    if spec.h <= 0.0 {
        return Err(Error::invalid_parameter("h", "hopping must be > 0"));
    }
    if spec.samples == 0 {
        return Err(Error::invalid_parameter("samples", "must be >= 1"));
    }
    let results: Vec<Result<Vec<f64>>> = par_map(spec.samples, |i| {
        let mut lattice = spec.lattice.clone();
        lattice.seed = rng::derive_seed(spec.seed, i as u64);
        let code = lattice.build()?;
        let j_p = sample_potentials(&code, &spec.disorder, spec.seed, (1 + i) as u64);
        let m = build_walk_hamiltonian(&code, spec.h, &j_p)?;
        let origin = central_plaquette(&code);
        let prop = Propagator::new(&m, origin)?;
        Ok(spec
            .times
            .iter()
            .map(|&t| spread(&prop.state_at(t), origin, &code, spec.spread))
            .collect())
    });
    let nt = spec.times.len();
    let mut sum = vec![0.0; nt];
    let mut sumsq = vec![0.0; nt];
    for r in results {
        let deltas = r?;
        for (k, d) in deltas.into_iter().enumerate() {
            sum[k] += d;
            sumsq[k] += d * d;
        }
    }
    let n = spec.samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let se: Vec<f64> = sum
        .iter()
        .zip(&sumsq)
        .map(|(s, sq)| {
            if spec.samples < 2 {
                0.0
            } else {
                ((sq - s * s / n).max(0.0) / (n - 1.0) / n).sqrt()
            }
        })
        .collect();
    let limit = spec.lattice.l as f64 / 4.0;
    let boundary_ok: Vec<bool> = mean.iter().map(|&d| d < limit).collect();
    // Fit window: last half-decade of times before the first boundary
    // violation. A full decade reaches back into the early-time transient
    // on disordered lattices and biases the exponent upward.
    let t_hi = spec
        .times
        .iter()
        .zip(&boundary_ok)
        .take_while(|&(_, &ok)| ok)
        .map(|(&t, _)| t)
        .fold(0.0f64, f64::max);
    let t_lo = t_hi / 10.0f64.sqrt();
    let (xs, ys): (Vec<f64>, Vec<f64>) = spec
        .times
        .iter()
        .zip(&mean)
        .filter(|&(&t, &d)| t > 0.0 && t >= t_lo && t <= t_hi && d > 0.0)
        .map(|(&t, &d)| (t.ln(), d.ln()))
        .unzip();
    if xs.len() < 3 {
        return Err(Error::invalid_parameter(
            "times",
            format!(
                "only {} usable points in the fit window [{t_lo:.3}, {t_hi:.3}]",
                xs.len()
            ),
        ));
    }
    let (exponent, exponent_se) = ols_slope(&xs, &ys);
    Ok(SpreadSeries {
        times: spec.times.clone(),
        mean,
        se,
        boundary_ok,
        exponent,
        exponent_se,
        fit_window: (t_lo, t_hi),
        samples: spec.samples,
    })
}
