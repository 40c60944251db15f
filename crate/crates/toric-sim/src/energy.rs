//! Onsite disorder, anyon interaction energetics, and bath rate functions.
//!
//! The configuration energy is
//! `E = sum_p J_p n_p + 1/2 sum_{p != p'} (A / r_{pp'}^alpha) n_p n_{p'}`
//! with `r` the minimal-image torus distance between plaquette positions.
//! Star-sector interactions are identically zero.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::StabilizerCode;
use crate::rng;

/// Error environment. The Ohmic bath is the `n = 1`, `omega_c -> infinity`
/// spin-boson rate; energies are measured in the unit that makes
/// `temperature` dimensionless (k_B = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum BathSpec {
    ConstantRate { gamma0: f64 },
    Ohmic { temperature: f64, kappa1: f64 },
}

impl BathSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BathSpec::ConstantRate { gamma0 } if gamma0 <= 0.0 => Err(
                Error::invalid_parameter("gamma0", format!("{gamma0} must be > 0")),
            ),
            BathSpec::Ohmic {
                temperature,
                kappa1,
            } if temperature <= 0.0 || kappa1 <= 0.0 => Err(Error::invalid_parameter(
                "bath",
                format!("temperature {temperature} and kappa1 {kappa1} must be > 0"),
            )),
            _ => Ok(()),
        }
    }
}

/// Transition rate for a flip with energy difference
/// `omega = E_current - E_after`.
///
/// Constant-rate baths return `gamma0` regardless of `omega`. The Ohmic bath
/// returns `2 kappa1 |omega / (1 - exp(-beta omega))|`, whose removable
/// singularity at `omega = 0` evaluates to `2 kappa1 / beta`. Satisfies
/// detailed balance `rate(omega) / rate(-omega) = exp(beta omega)`.
pub fn rate(omega: f64, bath: &BathSpec) -> f64 {
    match *bath {
        BathSpec::ConstantRate { gamma0 } => gamma0,
        BathSpec::Ohmic {
            temperature,
            kappa1,
        } => {
            let beta = 1.0 / temperature;
            let x = beta * omega;
            if x.abs() < 1e-12 {
                2.0 * kappa1 / beta
            } else {
                // omega / (1 - e^{-beta omega}) is positive for either sign
                2.0 * kappa1 * omega / (-f64::exp_m1(-x))
            }
        }
    }
}

/// Distribution of the onsite potentials `J_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DisorderKind {
    None,
    /// `J_p in {-sigma, +sigma}` with `Pr[-sigma] = eta = (1 - P)/2`.
    Ising { sigma: f64, polarization: f64 },
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    #[serde(flatten)]
    pub kind: DisorderKind,
    pub seed: u64,
}

impl DisorderSpec {
    pub fn none() -> Self {
        DisorderSpec {
            kind: DisorderKind::None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            DisorderKind::None => Ok(()),
            DisorderKind::Ising {
                sigma,
                polarization,
            } => {
                if sigma < 0.0 {
                    return Err(Error::invalid_parameter(
                        "sigma",
                        format!("{sigma} must be >= 0"),
                    ));
                }
                if !(-1.0..=1.0).contains(&polarization) {
                    return Err(Error::invalid_parameter(
                        "polarization",
                        format!("{polarization} not in [-1, 1]"),
                    ));
                }
                Ok(())
            }
            DisorderKind::Gaussian { sigma } => {
                if sigma < 0.0 {
                    return Err(Error::invalid_parameter(
                        "sigma",
                        format!("{sigma} must be >= 0"),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Sample one onsite potential per plaquette, in plaquette-index order from
/// the disorder seed stream.
pub fn sample_onsite(code: &StabilizerCode, disorder: &DisorderSpec) -> Result<Vec<f64>> {
    disorder.validate()?;
    let n = code.plaquettes.len();
    let mut stream = rng::stream(disorder.seed, 1);
    Ok(match disorder.kind {
        DisorderKind::None => vec![0.0; n],
        DisorderKind::Ising {
            sigma,
            polarization,
        } => {
            let eta = (1.0 - polarization) / 2.0;
            (0..n)
                .map(|_| {
                    if stream.gen::<f64>() < eta {
                        -sigma
                    } else {
                        sigma
                    }
                })
                .collect()
        }
        DisorderKind::Gaussian { sigma } => {
            let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).map_err(|e| {
                Error::invalid_parameter("sigma", format!("bad gaussian width: {e}"))
            })?;
            if sigma == 0.0 {
                vec![0.0; n]
            } else {
                (0..n).map(|_| normal.sample(&mut stream)).collect()
            }
        }
    })
}

/// Minimal-image Euclidean distance between two plaquette positions, in
/// lattice units.
pub fn torus_distance(p: usize, q: usize, code: &StabilizerCode) -> f64 {
    let l = code.l as f64;
    let a = code.plaquettes[p].position;
    let b = code.plaquettes[q].position;
    let mut dx = (a[0] - b[0]).abs() % l;
    let mut dy = (a[1] - b[1]).abs() % l;
    if dx > l / 2.0 {
        dx = l - dx;
    }
    if dy > l / 2.0 {
        dy = l - dy;
    }
    (dx * dx + dy * dy).sqrt()
}

/// Repulsive pairwise interaction `A / r^alpha` with an optional artificial
/// anyon-number cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpec {
    pub strength: f64,
    pub exponent: f64,
    #[serde(default)]
    pub n_max: Option<usize>,
}

impl InteractionSpec {
    pub fn none() -> Self {
        InteractionSpec {
            strength: 0.0,
            exponent: 0.0,
            n_max: None,
        }
    }

    pub fn constant(strength: f64) -> Self {
        InteractionSpec {
            strength,
            exponent: 0.0,
            n_max: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strength < 0.0 {
            return Err(Error::invalid_parameter(
                "strength",
                format!("{} must be >= 0", self.strength),
            ));
        }
        if !(0.0..2.0).contains(&self.exponent) {
            return Err(Error::invalid_parameter(
                "exponent",
                format!("{} not in [0, 2)", self.exponent),
            ));
        }
        Ok(())
    }
}

/// Immutable energetics of a code: per-plaquette onsite potentials
/// (uniform gap plus disorder) and the interaction. For `alpha > 0` the
/// pairwise couplings are precomputed into a dense table.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    pub onsite: Vec<f64>,
    pub interaction: InteractionSpec,
    pub uniform_gap: f64,
    /// `pair[p * n + q] = A / r_pq^alpha` for `p != q`; empty when `alpha = 0`
    /// or `A = 0` (both handled analytically).
    pair: Vec<f64>,
    n_plaq: usize,
}

impl EnergyModel {
    /// `onsite_disorder` must have one entry per plaquette; the effective
    /// onsite potential is `uniform_gap + disorder`.
    pub fn new(
        code: &StabilizerCode,
        uniform_gap: f64,
        onsite_disorder: &[f64],
        interaction: InteractionSpec,
    ) -> Result<Self> {
        interaction.validate()?;
        let n = code.plaquettes.len();
        if onsite_disorder.len() != n {
            return Err(Error::invalid_parameter(
                "onsite",
                format!("{} potentials for {} plaquettes", onsite_disorder.len(), n),
            ));
        }
        let onsite: Vec<f64> = onsite_disorder.iter().map(|j| uniform_gap + j).collect();
        let pair = if interaction.strength > 0.0 && interaction.exponent > 0.0 {
            let mut t = vec![0.0; n * n];
            for p in 0..n {
                for q in 0..n {
                    if p != q {
                        t[p * n + q] = interaction.strength
                            / torus_distance(p, q, code).powf(interaction.exponent);
                    }
                }
            }
            t
        } else {
            Vec::new()
        };
        Ok(EnergyModel {
            onsite,
            interaction,
            uniform_gap,
            pair,
            n_plaq: n,
        })
    }

    pub fn n_plaquettes(&self) -> usize {
        self.n_plaq
    }

    fn uses_pair_table(&self) -> bool {
        !self.pair.is_empty()
    }

    pub fn pair_coupling(&self, p: usize, q: usize) -> f64 {
        if p == q {
            0.0
        } else if self.uses_pair_table() {
            self.pair[p * self.n_plaq + q]
        } else {
            self.interaction.strength
        }
    }

    /// Total energy of an occupation pattern by the explicit double sum.
    /// Quadratic; used for initialization and cross-checks, not in the KMC
    /// inner loop.
    pub fn total_energy(&self, occupation: &[bool]) -> f64 {
        let occupied: Vec<usize> = occupation
            .iter()
            .enumerate()
            .filter_map(|(p, &o)| o.then_some(p))
            .collect();
        let mut e: f64 = occupied.iter().map(|&p| self.onsite[p]).sum();
        for (i, &p) in occupied.iter().enumerate() {
            for &q in &occupied[i + 1..] {
                e += self.pair_coupling(p, q);
            }
        }
        e
    }
}

/// Per-trajectory mutable energy bookkeeping: occupations, anyon count and
/// (for `alpha > 0`) the interaction field `phi[p] = sum_q U_pq n_q`.
#[derive(Debug, Clone)]
pub struct EnergyState {
    pub occupation: Vec<bool>,
    pub n_anyons: usize,
    phi: Vec<f64>,
}

impl EnergyState {
    pub fn vacuum(model: &EnergyModel) -> Self {
        let n = model.n_plaquettes();
        EnergyState {
            occupation: vec![false; n],
            n_anyons: 0,
            phi: if model.uses_pair_table() {
                vec![0.0; n]
            } else {
                Vec::new()
            },
        }
    }

    pub fn from_occupation(model: &EnergyModel, occupation: Vec<bool>) -> Self {
        let n_anyons = occupation.iter().filter(|&&o| o).count();
        let phi = if model.uses_pair_table() {
            (0..occupation.len())
                .map(|p| {
                    occupation
                        .iter()
                        .enumerate()
                        .filter(|&(q, &o)| o && q != p)
                        .map(|(q, _)| model.pair_coupling(p, q))
                        .sum()
                })
                .collect()
        } else {
            Vec::new()
        };
        EnergyState {
            occupation,
            n_anyons,
            phi,
        }
    }

    /// Interaction field seen by plaquette `p` from all occupied plaquettes.
    fn field(&self, model: &EnergyModel, p: usize) -> f64 {
        if model.uses_pair_table() {
            self.phi[p]
        } else {
            let n_other = self.n_anyons - usize::from(self.occupation[p]);
            model.interaction.strength * n_other as f64
        }
    }
}

/// Energy difference `omega = E_current - E_after` for flipping `spin`, which
/// toggles exactly the two plaquettes containing it. O(1) for `alpha = 0`.
pub fn flip_omega(
    state: &EnergyState,
    spin: usize,
    model: &EnergyModel,
    code: &StabilizerCode,
) -> f64 {
    let [q1, q2] = code.spin_to_plaquettes[spin];
    let d1 = if state.occupation[q1] { -1.0 } else { 1.0 };
    let d2 = if state.occupation[q2] { -1.0 } else { 1.0 };
    let onsite = d1 * model.onsite[q1] + d2 * model.onsite[q2];
    let inter = d1 * state.field(model, q1)
        + d2 * state.field(model, q2)
        + d1 * d2 * model.pair_coupling(q1, q2);
    -(onsite + inter)
}

/// Toggle the two plaquettes of `spin`, maintaining count and field caches.
pub fn apply_flip(state: &mut EnergyState, spin: usize, model: &EnergyModel, code: &StabilizerCode) {
    let [q1, q2] = code.spin_to_plaquettes[spin];
    for q in [q1, q2] {
        let delta = if state.occupation[q] { -1i64 } else { 1 };
        state.occupation[q] = !state.occupation[q];
        state.n_anyons = (state.n_anyons as i64 + delta) as usize;
        if model.uses_pair_table() {
            let sign = delta as f64;
            for p in 0..state.phi.len() {
                if p != q {
                    state.phi[p] += sign * model.pair_coupling(p, q);
                }
            }
        }
    }
}
