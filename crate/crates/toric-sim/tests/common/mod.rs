//! Helpers shared between the oracle and acceptance suites: brute-force
//! matching, the 256-state master-equation oracle, and a disorder-averaged
//! lifetime runner.

// each test target compiles its own copy, so helpers used only by the other
// suite would warn
#![allow(dead_code)]

use rand::Rng;
use toric_sim::analysis::{self, LifetimeResult};
use toric_sim::decoder::{self, MatchEdge, MatchGraph};
use toric_sim::energy::{
    torus_distance, BathSpec, DisorderKind, DisorderSpec, EnergyModel, InteractionSpec,
    sample_onsite,
};
use toric_sim::kmc::{ensemble_run, ensemble_run_with, EnsembleSeries, Schedule};
use toric_sim::lattice::{LatticeSpec, StabilizerCode};
use toric_sim::rng;

// ---------------------------------------------------------------------------
// matching oracle

/// Minimum total weight over all perfect matchings, by exhaustive pairing.
pub fn brute_force_min(n: usize, edges: &[(usize, usize, usize)]) -> Option<usize> {
    let mut w = vec![vec![None; n]; n];
    for &(i, j, wt) in edges {
        let best = w[i][j].map_or(wt, |old: usize| old.min(wt));
        w[i][j] = Some(best);
        w[j][i] = Some(best);
    }
    fn rec(used: &mut [bool], w: &[Vec<Option<usize>>]) -> Option<usize> {
        let i = match used.iter().position(|&u| !u) {
            None => return Some(0),
            Some(i) => i,
        };
        used[i] = true;
        let mut best = None;
        for j in i + 1..used.len() {
            if used[j] {
                continue;
            }
            if let Some(wij) = w[i][j] {
                used[j] = true;
                if let Some(rest) = rec(used, w) {
                    let total = wij + rest;
                    best = Some(best.map_or(total, |b: usize| b.min(total)));
                }
                used[j] = false;
            }
        }
        used[i] = false;
        best
    }
    rec(&mut vec![false; n], &w)
}

/// Compare the blossom matcher against the brute-force oracle on `trials`
/// random graphs with at most 10 nodes. Returns the number of feasible
/// instances, or a description of the first disagreement.
pub fn blossom_vs_brute_force(trials: usize, seed: u64) -> Result<usize, String> {
    let mut rng = rng::stream(seed, 0);
    let mut nontrivial = 0usize;
    for trial in 0..trials {
        let n = rng.gen_range(2..=10usize);
        let density: f64 = rng.gen_range(0.25..=1.0);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(density) {
                    edges.push((i, j, rng.gen_range(0..=30usize)));
                }
            }
        }
        let graph = MatchGraph {
            nodes: (0..n).collect(),
            edges: edges
                .iter()
                .map(|&(i, j, w)| MatchEdge {
                    i,
                    j,
                    weight: w,
                    path: Vec::new(),
                })
                .collect(),
        };
        let oracle = brute_force_min(n, &edges);
        match (decoder::mwpm(&graph), oracle) {
            (Ok(pairs), Some(want)) => {
                if pairs.len() != n / 2 {
                    return Err(format!("trial {trial}: incomplete matching"));
                }
                let got: usize = pairs
                    .iter()
                    .map(|&(i, j)| {
                        edges
                            .iter()
                            .filter(|e| (e.0, e.1) == (i.min(j), i.max(j)))
                            .map(|e| e.2)
                            .min()
                            .expect("matched pair must be an edge")
                    })
                    .sum();
                if got != want {
                    return Err(format!("trial {trial}: weight {got} vs brute {want}"));
                }
                nontrivial += 1;
            }
            (Err(_), None) => {}
            (got, want) => {
                return Err(format!(
                    "trial {trial}: feasibility disagrees: {got:?} vs {want:?}"
                ))
            }
        }
    }
    Ok(nontrivial)
}

// ---------------------------------------------------------------------------
// L = 2 master-equation / Gibbs oracle

pub const NSPIN: usize = 8;
pub const NCONF: usize = 1 << NSPIN;

pub struct TinyOracle {
    pub code: StabilizerCode,
    /// Brute-force energies of all 256 spin configurations.
    pub energy: Vec<f64>,
    /// occupation parity per (config, plaquette)
    pub occ: Vec<[bool; 4]>,
    pub beta: f64,
    pub kappa1: f64,
}

impl TinyOracle {
    pub fn new(
        interaction: InteractionSpec,
        onsite: &[f64; 4],
        beta: f64,
        kappa1: f64,
    ) -> Self {
        let code = LatticeSpec::square(2).build().unwrap();
        assert_eq!(code.num_spins, NSPIN);
        let mut occ = Vec::with_capacity(NCONF);
        let mut energies = Vec::with_capacity(NCONF);
        for c in 0..NCONF {
            let mut o = [false; 4];
            for s in 0..NSPIN {
                if c >> s & 1 == 1 {
                    for &p in &code.spin_to_plaquettes[s] {
                        o[p] = !o[p];
                    }
                }
            }
            // independent double-sum evaluation of the energy
            let mut e = 0.0;
            for p in 0..4 {
                if o[p] {
                    e += 1.0 + onsite[p];
                }
            }
            if interaction.strength > 0.0 {
                for p in 0..4 {
                    for q in 0..4 {
                        if p != q && o[p] && o[q] {
                            let r = torus_distance(p, q, &code);
                            e += 0.5 * interaction.strength / r.powf(interaction.exponent);
                        }
                    }
                }
            }
            occ.push(o);
            energies.push(e);
        }
        TinyOracle {
            code,
            energy: energies,
            occ,
            beta,
            kappa1,
        }
    }

    fn rate(&self, omega: f64) -> f64 {
        let x = self.beta * omega;
        if x.abs() < 1e-12 {
            2.0 * self.kappa1 / self.beta
        } else {
            2.0 * self.kappa1 * omega / (-f64::exp_m1(-x))
        }
    }

    /// RK4 integration of the 256-state master equation, sampling `P` at the
    /// requested times.
    pub fn integrate(&self, times: &[f64], dt: f64) -> Vec<Vec<f64>> {
        let deriv = |p: &[f64]| -> Vec<f64> {
            let mut d = vec![0.0; NCONF];
            for c in 0..NCONF {
                for s in 0..NSPIN {
                    let c2 = c ^ (1 << s);
                    let r = self.rate(self.energy[c] - self.energy[c2]);
                    d[c] -= p[c] * r;
                    d[c2] += p[c] * r;
                }
            }
            d
        };
        let mut p = vec![0.0; NCONF];
        p[0] = 1.0;
        let mut t = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &target in times {
            while t < target - 1e-12 {
                let h = dt.min(target - t);
                let k1 = deriv(&p);
                let mid1: Vec<f64> = p.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
                let k2 = deriv(&mid1);
                let mid2: Vec<f64> = p.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
                let k3 = deriv(&mid2);
                let end: Vec<f64> = p.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
                let k4 = deriv(&end);
                for c in 0..NCONF {
                    p[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
                }
                t += h;
            }
            out.push(p.clone());
        }
        out
    }

    pub fn gibbs(&self) -> Vec<f64> {
        let weights: Vec<f64> = self.energy.iter().map(|e| (-self.beta * e).exp()).collect();
        let z: f64 = weights.iter().sum();
        weights.iter().map(|w| w / z).collect()
    }

    pub fn mean_anyons(&self, p: &[f64]) -> f64 {
        p.iter()
            .enumerate()
            .map(|(c, &w)| w * self.occ[c].iter().filter(|&&o| o).count() as f64)
            .sum()
    }

    pub fn mean_errors(&self, p: &[f64]) -> f64 {
        p.iter()
            .enumerate()
            .map(|(c, &w)| w * (c.count_ones() as f64))
            .sum()
    }

    pub fn mean_z1(&self, p: &[f64]) -> f64 {
        p.iter()
            .enumerate()
            .map(|(c, &w)| {
                let mut err = vec![false; NSPIN];
                for (s, e) in err.iter_mut().enumerate() {
                    *e = c >> s & 1 == 1;
                }
                let (z1, _) = decoder::logical_parities(&self.code, &err);
                w * z1 as f64
            })
            .sum()
    }
}

/// KMC ensemble vs the explicit master equation, all observables within
/// 3 standard errors, plus Gibbs convergence of the master equation itself.
pub fn kmc_vs_master_equation(interaction: InteractionSpec, seed: u64) -> Result<(), String> {
    let onsite = [0.0, 0.3, -0.2, 0.5];
    let (temperature, kappa1) = (1.0, 0.25);
    let oracle = TinyOracle::new(interaction, &onsite, 1.0 / temperature, kappa1);
    let bath = BathSpec::Ohmic {
        temperature,
        kappa1,
    };
    let model = EnergyModel::new(&oracle.code, 1.0, &onsite, interaction).unwrap();
    let schedule = Schedule::log_spaced(0.5, 20.0, 3).unwrap();
    let n_traj = 3000;
    let es = ensemble_run(&oracle.code, &model, &bath, &schedule, n_traj, seed)
        .map_err(|e| e.to_string())?;

    let mut oracle_times = es.times.clone();
    oracle_times.push(150.0); // far past the slowest relaxation time
    let dist = oracle.integrate(&oracle_times, 2e-3);
    for (i, p) in dist[..es.times.len()].iter().enumerate() {
        let checks = [
            ("anyons", es.anyons[i], es.anyons_se[i], oracle.mean_anyons(p)),
            ("errors", es.errors[i], es.errors_se[i], oracle.mean_errors(p)),
            ("z1", es.z1[i], es.z1_se[i], oracle.mean_z1(p)),
        ];
        for (name, got, se, want) in checks {
            if (got - want).abs() > 3.0 * se.max(1e-3) {
                return Err(format!(
                    "{name} at t = {}: kmc {got} vs oracle {want} (se {se})",
                    es.times[i]
                ));
            }
        }
    }

    // the master equation's fixed point is the Gibbs distribution
    let gibbs = oracle.gibbs();
    let last = dist.last().unwrap();
    let drift: f64 = last.iter().zip(&gibbs).map(|(a, b)| (a - b).abs()).sum();
    if drift >= 1e-4 {
        return Err(format!("master equation does not reach Gibbs: {drift}"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// disorder-averaged lifetime runner

#[derive(Debug, Clone, Copy)]
pub struct LifetimePlan {
    pub l: usize,
    pub interaction: InteractionSpec,
    pub sigma: f64,
    pub polarization: f64,
    pub temperature: f64,
    pub n_traj: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub per_decade: usize,
    pub level: f64,
    pub seed: u64,
}

impl LifetimePlan {
    pub fn base(l: usize, seed: u64) -> Self {
        LifetimePlan {
            l,
            interaction: InteractionSpec::none(),
            sigma: 0.0,
            polarization: 0.0,
            temperature: 1.0,
            n_traj: 500,
            t_start: 1e-2,
            t_end: 60.0,
            per_decade: 6,
            level: 0.9,
            seed,
        }
    }
}

/// Square-lattice memory lifetime with fresh binary onsite disorder per
/// trajectory (uniform gap J = 1, ohmic bath kappa1 = 1).
pub fn disorder_lifetime(plan: &LifetimePlan) -> (LifetimeResult, EnsembleSeries) {
    let code = LatticeSpec::square(plan.l).build().unwrap();
    let bath = BathSpec::Ohmic {
        temperature: plan.temperature,
        kappa1: 1.0,
    };
    let schedule = Schedule::log_spaced(plan.t_start, plan.t_end, plan.per_decade).unwrap();
    let disorder_seed = rng::derive_seed(plan.seed, 1);
    let interaction = plan.interaction;
    let (sigma, polarization) = (plan.sigma, plan.polarization);
    let series = ensemble_run_with(
        &code,
        &bath,
        &schedule,
        plan.n_traj,
        rng::derive_seed(plan.seed, 0),
        |traj| {
            let kind = if sigma > 0.0 {
                DisorderKind::Ising {
                    sigma,
                    polarization,
                }
            } else {
                DisorderKind::None
            };
            let spec = DisorderSpec {
                kind,
                seed: rng::derive_seed(disorder_seed, traj as u64),
            };
            let onsite = sample_onsite(&code, &spec)?;
            EnergyModel::new(&code, 1.0, &onsite, interaction)
        },
    )
    .unwrap();
    let corrected = analysis::corrected_parity_mean(&series);
    let life = analysis::lifetime(&series.times, &corrected, plan.level).unwrap();
    (life, series)
}
