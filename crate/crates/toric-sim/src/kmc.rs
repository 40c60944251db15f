//! Continuous-time kinetic Monte Carlo for the bit-flip dynamics.
//!
//! Every spin carries an unnormalized flip rate; an event draws an
//! exponential waiting time from the total rate, picks a spin proportionally
//! to its rate, and flips it. Per-spin rates live in a partial-sum tree so
//! selection is logarithmic, and only rates invalidated by a flip are
//! recomputed. Trajectories are independent units of parallelism with seeds
//! derived from the master seed by index, so ensemble aggregates are bitwise
//! independent of the worker count.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{self, DecoderConfig, Syndrome};
use crate::energy::{apply_flip, flip_omega, rate, BathSpec, EnergyModel, EnergyState};
use crate::error::{Error, Result};
use crate::lattice::StabilizerCode;
use crate::parallel::par_map;
use crate::rng;

/// Sampling grid for observables; all times lie in `[0, t_end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub sample_times: Vec<f64>,
    pub t_end: f64,
}

impl Schedule {
    /// `t = 0` plus `per_decade` logarithmically spaced points per decade
    /// between `t_start` and `t_end`.
    pub fn log_spaced(t_start: f64, t_end: f64, per_decade: usize) -> Result<Self> {
        if !(t_start > 0.0 && t_end > t_start) {
            return Err(Error::invalid_parameter(
                "schedule",
                format!("need 0 < t_start < t_end, got [{t_start}, {t_end}]"),
            ));
        }
        if per_decade == 0 {
            return Err(Error::invalid_parameter("per_decade", "must be >= 1"));
        }
        let decades = (t_end / t_start).log10();
        let n = (decades * per_decade as f64).ceil() as usize;
        let mut sample_times = vec![0.0];
        for i in 0..=n {
            let t = t_start * 10f64.powf(decades * i as f64 / n as f64);
            sample_times.push(t.min(t_end));
        }
        Ok(Schedule { sample_times, t_end })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self
            .sample_times
            .windows(2)
            .all(|w| w[0] < w[1])
            && self
                .sample_times
                .iter()
                .all(|&t| (0.0..=self.t_end).contains(&t));
        if ok {
            Ok(())
        } else {
            Err(Error::invalid_parameter(
                "schedule",
                "sample times must be increasing and within [0, t_end]",
            ))
        }
    }
}

/// Observables of one trajectory at each sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub anyons: Vec<u32>,
    pub errors: Vec<u32>,
    pub z1: Vec<i8>,
    pub z2: Vec<i8>,
    /// Parities after decoding a copy of the state; the correction is never
    /// applied to the evolving trajectory.
    pub z1_corrected: Vec<i8>,
    pub z2_corrected: Vec<i8>,
}

/// Pointwise ensemble mean and standard error of every observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSeries {
    pub times: Vec<f64>,
    pub n_traj: usize,
    /// Spin count of the simulated code; randomized lattices have fewer
    /// spins than the 2L² of the square lattice, so error fractions must
    /// divide by this rather than by a size formula.
    pub num_spins: usize,
    pub anyons: Vec<f64>,
    pub anyons_se: Vec<f64>,
    pub errors: Vec<f64>,
    pub errors_se: Vec<f64>,
    pub z1: Vec<f64>,
    pub z1_se: Vec<f64>,
    pub z2: Vec<f64>,
    pub z2_se: Vec<f64>,
    pub z1_corrected: Vec<f64>,
    pub z1_corrected_se: Vec<f64>,
    pub z2_corrected: Vec<f64>,
    pub z2_corrected_se: Vec<f64>,
}

/// Fenwick tree over per-spin rates: point update, total, and selection of
/// the first index whose prefix sum exceeds a target.
#[derive(Debug, Clone)]
struct RateTree {
    tree: Vec<f64>,
    values: Vec<f64>,
}

impl RateTree {
    fn new(values: Vec<f64>) -> Self {
        let mut t = RateTree {
            tree: vec![0.0; values.len() + 1],
            values,
        };
        t.rebuild();
        t
    }

    fn rebuild(&mut self) {
        self.tree.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..self.values.len() {
            let v = self.values[i];
            let mut j = i + 1;
            while j < self.tree.len() {
                self.tree[j] += v;
                j += j & j.wrapping_neg();
            }
        }
    }

    fn set(&mut self, i: usize, v: f64) {
        let delta = v - self.values[i];
        self.values[i] = v;
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] += delta;
            j += j & j.wrapping_neg();
        }
    }

    fn total(&self) -> f64 {
        let mut sum = 0.0;
        let mut j = self.tree.len() - 1;
        while j > 0 {
            sum += self.tree[j];
            j -= j & j.wrapping_neg();
        }
        sum
    }

    /// Smallest index with prefix sum (inclusive) exceeding `target`. Falls
    /// back to the last positive-rate spin if rounding pushes `target` past
    /// the accumulated total.
    fn select(&self, target: f64) -> usize {
        let n = self.values.len();
        let mut idx = 0usize;
        let mut bit = (n + 1).next_power_of_two() / 2;
        let mut rest = target;
        while bit > 0 {
            let next = idx + bit;
            if next < self.tree.len() && self.tree[next] <= rest {
                rest -= self.tree[next];
                idx = next;
            }
            bit /= 2;
        }
        // idx is the count of entries whose cumulative sum is <= target
        let mut i = idx.min(n - 1);
        while i > 0 && self.values[i] == 0.0 {
            i -= 1;
        }
        while self.values[i] == 0.0 && i + 1 < n {
            i += 1;
        }
        i
    }
}

/// Mutable trajectory state: the error pattern, its energetic bookkeeping
/// (occupation is always the syndrome of `error`), and the wall-clock time.
#[derive(Debug, Clone)]
pub struct SimState {
    pub error: Vec<bool>,
    pub energy: EnergyState,
    pub t: f64,
}

pub enum StepOutcome {
    /// Flipped the given spin after the given waiting time.
    Flipped { spin: usize, dt: f64 },
    /// All rates vanish; the trajectory is frozen.
    Absorbing,
}

pub struct Engine<'a> {
    code: &'a StabilizerCode,
    model: &'a EnergyModel,
    bath: &'a BathSpec,
    pub state: SimState,
    rates: RateTree,
    events_since_rebuild: u64,
}

impl<'a> Engine<'a> {
    pub fn new(code: &'a StabilizerCode, model: &'a EnergyModel, bath: &'a BathSpec) -> Self {
        let state = SimState {
            error: vec![false; code.num_spins],
            energy: EnergyState::vacuum(model),
            t: 0.0,
        };
        let mut engine = Engine {
            code,
            model,
            bath,
            state,
            rates: RateTree::new(vec![0.0; code.num_spins]),
            events_since_rebuild: 0,
        };
        engine.recompute_all_rates();
        engine
    }

    fn spin_rate(&self, spin: usize) -> f64 {
        if let Some(n_max) = self.model.interaction.n_max {
            let [q1, q2] = self.code.spin_to_plaquettes[spin];
            let creation =
                !self.state.energy.occupation[q1] && !self.state.energy.occupation[q2];
            if creation && self.state.energy.n_anyons + 2 > n_max {
                return 0.0;
            }
        }
        rate(
            flip_omega(&self.state.energy, spin, self.model, self.code),
            self.bath,
        )
    }

    fn recompute_all_rates(&mut self) {
        for spin in 0..self.code.num_spins {
            self.rates.values[spin] = self.spin_rate(spin);
        }
        self.rates.rebuild();
    }

    /// Recompute the rates invalidated by flipping `spin`. A flip always
    /// changes the local occupations of its two plaquettes; whether distant
    /// spins are affected depends on the interaction and the cutoff.
    fn invalidate_after(&mut self, spin: usize) {
        let interacting = self.model.interaction.strength > 0.0;
        let long_range = interacting && self.model.interaction.exponent > 0.0;
        let [q1, q2] = self.code.spin_to_plaquettes[spin];
        // Any occupation change moves the long-range field everywhere; a
        // change of the anyon number shifts the constant-interaction energy
        // of every move and can open or close cutoff-gated creations.
        let full = long_range
            || (interacting && self.last_flip_changed_n(q1, q2))
            || (self.model.interaction.n_max.is_some() && self.last_flip_changed_n(q1, q2));
        if full {
            self.recompute_all_rates();
            return;
        }
        for q in [q1, q2] {
            for &s in &self.code.plaquettes[q].support {
                let r = self.spin_rate(s);
                self.rates.set(s, r);
            }
        }
    }

    // After the flip, q1/q2 occupations are updated; the flip changed N iff
    // both plaquettes now agree (both created or both annihilated).
    fn last_flip_changed_n(&self, q1: usize, q2: usize) -> bool {
        self.state.energy.occupation[q1] == self.state.energy.occupation[q2]
    }

    pub fn total_rate(&self) -> f64 {
        self.rates.total()
    }

    /// One KMC event: draw a waiting time from the total rate, pick a spin
    /// proportionally to its rate, flip it and update the caches.
    pub fn step(&mut self, rng: &mut ChaCha12Rng) -> StepOutcome {
        let total = self.rates.total();
        if total <= 0.0 {
            return StepOutcome::Absorbing;
        }
        let dt = -f64::ln(1.0 - rng.gen::<f64>()) / total;
        let spin = self.rates.select(rng.gen::<f64>() * total);
        self.state.error[spin] = !self.state.error[spin];
        apply_flip(&mut self.state.energy, spin, self.model, self.code);
        self.state.t += dt;
        self.events_since_rebuild += 1;
        if self.events_since_rebuild >= 1 << 20 {
            // guard against float drift in the incremental prefix sums
            self.events_since_rebuild = 0;
            self.recompute_all_rates();
        } else {
            self.invalidate_after(spin);
        }
        StepOutcome::Flipped { spin, dt }
    }
}

fn record(
    series: &mut TimeSeries,
    code: &StabilizerCode,
    state: &SimState,
    decoder_cfg: &DecoderConfig,
) -> Result<()> {
    let anyons: Vec<usize> = state
        .energy
        .occupation
        .iter()
        .enumerate()
        .filter_map(|(p, &o)| o.then_some(p))
        .collect();
    let (z1, z2) = decoder::logical_parities(code, &state.error);
    let syndrome = Syndrome { anyons };
    let correction = decoder::decode(code, &syndrome, decoder_cfg)?;
    let mut residual = state.error.clone();
    for &s in &correction.spins {
        residual[s] = !residual[s];
    }
    let (z1c, z2c) = decoder::logical_parities(code, &residual);
    series.anyons.push(state.energy.n_anyons as u32);
    series
        .errors
        .push(state.error.iter().filter(|&&e| e).count() as u32);
    series.z1.push(z1 as i8);
    series.z2.push(z2 as i8);
    series.z1_corrected.push(z1c as i8);
    series.z2_corrected.push(z2c as i8);
    Ok(())
}

/// Run one trajectory from the error-free state, recording observables at
/// each sample time. Samples see the state at the largest event time not
/// exceeding them; a frozen (absorbing) trajectory holds its observables to
/// `t_end`.
pub fn run_trajectory(
    code: &StabilizerCode,
    model: &EnergyModel,
    bath: &BathSpec,
    schedule: &Schedule,
    seed: u64,
) -> Result<TimeSeries> {
    schedule.validate()?;
    let decoder_cfg = DecoderConfig::default();
    let mut rng = rng::stream(seed, 0);
    let mut engine = Engine::new(code, model, bath);
    let mut series = TimeSeries {
        times: schedule.sample_times.clone(),
        anyons: Vec::with_capacity(schedule.sample_times.len()),
        errors: Vec::with_capacity(schedule.sample_times.len()),
        z1: Vec::with_capacity(schedule.sample_times.len()),
        z2: Vec::with_capacity(schedule.sample_times.len()),
        z1_corrected: Vec::with_capacity(schedule.sample_times.len()),
        z2_corrected: Vec::with_capacity(schedule.sample_times.len()),
    };
    let mut next_sample = 0;
    while next_sample < schedule.sample_times.len() {
        let total = engine.total_rate();
        if total <= 0.0 {
            // frozen: every remaining sample sees the current state
            while next_sample < schedule.sample_times.len() {
                record(&mut series, code, &engine.state, &decoder_cfg)?;
                next_sample += 1;
            }
            break;
        }
        // Peek the event time before committing the flip, so samples falling
        // inside the waiting interval see the pre-flip state.
        let t_next = engine.state.t - f64::ln(1.0 - rng.gen::<f64>()) / total;
        while next_sample < schedule.sample_times.len()
            && schedule.sample_times[next_sample] < t_next
        {
            record(&mut series, code, &engine.state, &decoder_cfg)?;
            next_sample += 1;
        }
        if next_sample >= schedule.sample_times.len() {
            break;
        }
        let spin = engine.rates.select(rng.gen::<f64>() * total);
        engine.state.error[spin] = !engine.state.error[spin];
        apply_flip(&mut engine.state.energy, spin, engine.model, code);
        engine.state.t = t_next;
        engine.events_since_rebuild += 1;
        if engine.events_since_rebuild >= 1 << 20 {
            engine.events_since_rebuild = 0;
            engine.recompute_all_rates();
        } else {
            engine.invalidate_after(spin);
        }
    }
    Ok(series)
}

struct Accum {
    n: usize,
    sum: Vec<Vec<f64>>,
    sumsq: Vec<Vec<f64>>,
}

impl Accum {
    fn new(n_times: usize) -> Self {
        Accum {
            n: 0,
            sum: vec![vec![0.0; n_times]; 6],
            sumsq: vec![vec![0.0; n_times]; 6],
        }
    }

    fn add(&mut self, ts: &TimeSeries) {
        self.n += 1;
        for k in 0..ts.times.len() {
            let vals = [
                ts.anyons[k] as f64,
                ts.errors[k] as f64,
                ts.z1[k] as f64,
                ts.z2[k] as f64,
                ts.z1_corrected[k] as f64,
                ts.z2_corrected[k] as f64,
            ];
            for (o, v) in vals.into_iter().enumerate() {
                self.sum[o][k] += v;
                self.sumsq[o][k] += v * v;
            }
        }
    }

    fn finish(self, times: Vec<f64>, num_spins: usize) -> EnsembleSeries {
        let n = self.n as f64;
        let stats = |o: usize| -> (Vec<f64>, Vec<f64>) {
            let mean: Vec<f64> = self.sum[o].iter().map(|s| s / n).collect();
            let se = self.sum[o]
                .iter()
                .zip(&self.sumsq[o])
                .map(|(s, sq)| {
                    if self.n < 2 {
                        0.0
                    } else {
                        let var = (sq - s * s / n).max(0.0) / (n - 1.0);
                        (var / n).sqrt()
                    }
                })
                .collect();
            (mean, se)
        };
        let (anyons, anyons_se) = stats(0);
        let (errors, errors_se) = stats(1);
        let (z1, z1_se) = stats(2);
        let (z2, z2_se) = stats(3);
        let (z1_corrected, z1_corrected_se) = stats(4);
        let (z2_corrected, z2_corrected_se) = stats(5);
        EnsembleSeries {
            times,
            n_traj: self.n,
            num_spins,
            anyons,
            anyons_se,
            errors,
            errors_se,
            z1,
            z1_se,
            z2,
            z2_se,
            z1_corrected,
            z1_corrected_se,
            z2_corrected,
            z2_corrected_se,
        }
    }
}

/// Ensemble with a per-trajectory energy model (used for disorder averages:
/// `model_of(i)` may sample a fresh disorder realization for trajectory `i`).
/// Trajectory `i` always uses the seed derived from `(master_seed, i)`, and
/// the reduction runs in trajectory order, so aggregates do not depend on the
/// worker count.
pub fn ensemble_run_with<F>(
    code: &StabilizerCode,
    bath: &BathSpec,
    schedule: &Schedule,
    n_traj: usize,
    master_seed: u64,
    model_of: F,
) -> Result<EnsembleSeries>
where
    F: Fn(usize) -> Result<EnergyModel> + Sync,
{
    if n_traj == 0 {
        return Err(Error::invalid_parameter("n_traj", "must be >= 1"));
    }
    schedule.validate()?;
    let mut accum = Accum::new(schedule.sample_times.len());
    // Batching keeps peak memory bounded while leaving the reduction order
    // (trajectory index) fixed.
    let batch = 256;
    let mut start = 0;
    while start < n_traj {
        let len = batch.min(n_traj - start);
        let results: Vec<Result<TimeSeries>> = par_map(len, |i| {
            let idx = start + i;
            let model = model_of(idx)?;
            run_trajectory(code, &model, bath, schedule, rng::derive_seed(master_seed, idx as u64))
        });
        for r in results {
            accum.add(&r?);
        }
        start += len;
    }
    Ok(accum.finish(schedule.sample_times.clone(), code.num_spins))
}

/// Pool ensembles taken on different lattice instances of the same ensemble
/// (equal sample times and spin count). Means are trajectory-weighted; the
/// pooled standard error combines the per-run errors with the same weights.
pub fn merge_series(runs: &[EnsembleSeries]) -> Result<EnsembleSeries> {
    let first = runs
        .first()
        .ok_or_else(|| Error::invalid_parameter("runs", "must be non-empty"))?;
    for r in &runs[1..] {
        if r.times != first.times || r.num_spins != first.num_spins {
            return Err(Error::invalid_parameter(
                "runs",
                "sample times and spin counts must match",
            ));
        }
    }
    let total: usize = runs.iter().map(|r| r.n_traj).sum();
    let w: Vec<f64> = runs.iter().map(|r| r.n_traj as f64 / total as f64).collect();
    let pool = |f: fn(&EnsembleSeries) -> &Vec<f64>| -> Vec<f64> {
        (0..first.times.len())
            .map(|t| runs.iter().zip(&w).map(|(r, wi)| wi * f(r)[t]).sum())
            .collect()
    };
    let pool_se = |f: fn(&EnsembleSeries) -> &Vec<f64>| -> Vec<f64> {
        (0..first.times.len())
            .map(|t| {
                runs.iter()
                    .zip(&w)
                    .map(|(r, wi)| (wi * f(r)[t]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    };
    Ok(EnsembleSeries {
        times: first.times.clone(),
        n_traj: total,
        num_spins: first.num_spins,
        anyons: pool(|r| &r.anyons),
        anyons_se: pool_se(|r| &r.anyons_se),
        errors: pool(|r| &r.errors),
        errors_se: pool_se(|r| &r.errors_se),
        z1: pool(|r| &r.z1),
        z1_se: pool_se(|r| &r.z1_se),
        z2: pool(|r| &r.z2),
        z2_se: pool_se(|r| &r.z2_se),
        z1_corrected: pool(|r| &r.z1_corrected),
        z1_corrected_se: pool_se(|r| &r.z1_corrected_se),
        z2_corrected: pool(|r| &r.z2_corrected),
        z2_corrected_se: pool_se(|r| &r.z2_corrected_se),
    })
}

/// Ensemble average over trajectories of a fixed energy model.
pub fn ensemble_run(
    code: &StabilizerCode,
    model: &EnergyModel,
    bath: &BathSpec,
    schedule: &Schedule,
    n_traj: usize,
    master_seed: u64,
) -> Result<EnsembleSeries> {
    ensemble_run_with(code, bath, schedule, n_traj, master_seed, |_| Ok(model.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::InteractionSpec;
    use crate::lattice::LatticeSpec;
    use approx::assert_relative_eq;

    fn uniform_model(code: &StabilizerCode, gap: f64, inter: InteractionSpec) -> EnergyModel {
        let zeros = vec![0.0; code.plaquettes.len()];
        EnergyModel::new(code, gap, &zeros, inter).unwrap()
    }

    #[test]
    fn fenwick_select_and_total() {
        let mut t = RateTree::new(vec![0.5, 0.0, 1.5, 2.0]);
        assert_relative_eq!(t.total(), 4.0);
        assert_eq!(t.select(0.0), 0);
        assert_eq!(t.select(0.49), 0);
        assert_eq!(t.select(0.51), 2);
        assert_eq!(t.select(1.99), 2);
        assert_eq!(t.select(2.01), 3);
        assert_eq!(t.select(3.99), 3);
        t.set(0, 0.0);
        t.set(3, 0.0);
        assert_relative_eq!(t.total(), 1.5);
        assert_eq!(t.select(0.7), 2);
    }

    #[test]
    fn constant_rate_total_and_uniform_selection() {
        let code = LatticeSpec::square(4).build().unwrap();
        let model = uniform_model(&code, 1.0, InteractionSpec::none());
        let bath = BathSpec::ConstantRate { gamma0: 1.0 };
        let engine = Engine::new(&code, &model, &bath);
        assert_relative_eq!(engine.total_rate(), 32.0, max_relative = 1e-12);
        // every spin has the same rate, so selection is uniform
        let mut counts = vec![0usize; code.num_spins];
        let mut rng = rng::stream(9, 0);
        let mut engine = Engine::new(&code, &model, &bath);
        for _ in 0..32_000 {
            match engine.step(&mut rng) {
                StepOutcome::Flipped { spin, .. } => counts[spin] += 1,
                StepOutcome::Absorbing => unreachable!(),
            }
        }
        for &c in &counts {
            // 1000 expected per spin; loose 5-sigma band on sqrt(1000) ~ 31
            assert!((840..1160).contains(&c), "count {c} out of band");
        }
    }

    #[test]
    fn vacuum_creation_rate_is_suppressed() {
        let code = LatticeSpec::square(4).build().unwrap();
        let j = 8.0; // J >> k_B T = 1
        let model = uniform_model(&code, j, InteractionSpec::none());
        let bath = BathSpec::Ohmic {
            temperature: 1.0,
            kappa1: 1.0,
        };
        let engine = Engine::new(&code, &model, &bath);
        let expected = 2.0 * 2.0 * j / ((2.0 * j).exp() - 1.0);
        assert_relative_eq!(
            engine.total_rate(),
            32.0 * expected,
            max_relative = 1e-10
        );
    }

    #[test]
    fn n_max_gates_creations_only() {
        let code = LatticeSpec::square(4).build().unwrap();
        let inter = InteractionSpec {
            strength: 0.0,
            exponent: 0.0,
            n_max: Some(2),
        };
        let model = uniform_model(&code, 1.0, inter);
        let bath = BathSpec::ConstantRate { gamma0: 1.0 };
        let mut engine = Engine::new(&code, &model, &bath);
        // force one pair: flip spin 0
        engine.state.error[0] = true;
        apply_flip(&mut engine.state.energy, 0, &model, &code);
        engine.recompute_all_rates();
        assert_eq!(engine.state.energy.n_anyons, 2);
        let [q1, q2] = code.spin_to_plaquettes[0];
        for spin in 0..code.num_spins {
            let [a, b] = code.spin_to_plaquettes[spin];
            let touches = [a, b].iter().any(|&p| p == q1 || p == q2);
            let r = engine.rates.values[spin];
            if touches {
                // hop or annihilation: unaffected by the cutoff
                assert_relative_eq!(r, 1.0);
            } else {
                assert_eq!(r, 0.0, "creation move {spin} not gated");
            }
        }
    }

    #[test]
    fn n_max_zero_freezes_immediately() {
        let code = LatticeSpec::square(4).build().unwrap();
        let inter = InteractionSpec {
            strength: 0.0,
            exponent: 0.0,
            n_max: Some(0),
        };
        let model = uniform_model(&code, 1.0, inter);
        let bath = BathSpec::ConstantRate { gamma0: 1.0 };
        let mut engine = Engine::new(&code, &model, &bath);
        let mut rng = rng::stream(1, 0);
        assert!(matches!(engine.step(&mut rng), StepOutcome::Absorbing));
        // frozen trajectories hold the initial observables to t_end
        let schedule = Schedule::log_spaced(0.1, 10.0, 4).unwrap();
        let ts = run_trajectory(&code, &model, &bath, &schedule, 3).unwrap();
        assert!(ts.anyons.iter().all(|&a| a == 0));
        assert!(ts.z1_corrected.iter().all(|&z| z == 1));
    }

    #[test]
    fn t_zero_sample_is_clean() {
        let code = LatticeSpec::square(4).build().unwrap();
        let model = uniform_model(&code, 1.0, InteractionSpec::none());
        let bath = BathSpec::ConstantRate { gamma0: 1.0 };
        let schedule = Schedule::log_spaced(0.01, 1.0, 8).unwrap();
        let ts = run_trajectory(&code, &model, &bath, &schedule, 11).unwrap();
        assert_eq!(ts.times[0], 0.0);
        assert_eq!(ts.anyons[0], 0);
        assert_eq!(ts.errors[0], 0);
        assert_eq!(
            (ts.z1[0], ts.z2[0], ts.z1_corrected[0], ts.z2_corrected[0]),
            (1, 1, 1, 1)
        );
    }

    #[test]
    fn syndrome_stays_consistent_and_even() {
        let code = LatticeSpec::random(6, 0.5, 2).build().unwrap();
        let inter = InteractionSpec {
            strength: 0.5,
            exponent: 1.0,
            n_max: None,
        };
        let model = uniform_model(&code, 1.0, inter);
        let bath = BathSpec::Ohmic {
            temperature: 1.0,
            kappa1: 1.0,
        };
        let mut engine = Engine::new(&code, &model, &bath);
        let mut rng = rng::stream(21, 0);
        for step in 0..500 {
            match engine.step(&mut rng) {
                StepOutcome::Flipped { .. } => {}
                StepOutcome::Absorbing => unreachable!(),
            }
            if step % 25 == 0 {
                let syn = decoder::extract_syndrome(&code, &engine.state.error);
                let occ: Vec<usize> = engine
                    .state
                    .energy
                    .occupation
                    .iter()
                    .enumerate()
                    .filter_map(|(p, &o)| o.then_some(p))
                    .collect();
                assert_eq!(syn.anyons, occ);
                assert_eq!(engine.state.energy.n_anyons % 2, 0);
            }
        }
    }

    #[test]
    fn incremental_rates_match_recompute() {
        // Exercise every invalidation path (short/long range, with cutoff)
        // and compare the cached rates against a fresh recompute.
        let code = LatticeSpec::square(4).build().unwrap();
        let cases = [
            InteractionSpec::none(),
            InteractionSpec::constant(0.7),
            InteractionSpec {
                strength: 0.7,
                exponent: 1.0,
                n_max: None,
            },
            InteractionSpec {
                strength: 0.0,
                exponent: 0.0,
                n_max: Some(6),
            },
        ];
        let bath = BathSpec::Ohmic {
            temperature: 1.0,
            kappa1: 1.0,
        };
        for inter in cases {
            let model = uniform_model(&code, 1.0, inter);
            let mut engine = Engine::new(&code, &model, &bath);
            let mut rng = rng::stream(31, 0);
            for _ in 0..300 {
                match engine.step(&mut rng) {
                    StepOutcome::Flipped { .. } => {}
                    StepOutcome::Absorbing => break,
                }
            }
            let cached = engine.rates.values.clone();
            engine.recompute_all_rates();
            for (&c, &f) in cached.iter().zip(&engine.rates.values) {
                assert_relative_eq!(c, f, max_relative = 1e-9, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn n_max_never_exceeded() {
        let code = LatticeSpec::square(4).build().unwrap();
        let inter = InteractionSpec {
            strength: 0.0,
            exponent: 0.0,
            n_max: Some(4),
        };
        let model = uniform_model(&code, 0.5, inter);
        let bath = BathSpec::ConstantRate { gamma0: 1.0 };
        let mut engine = Engine::new(&code, &model, &bath);
        let mut rng = rng::stream(41, 0);
        for _ in 0..2000 {
            match engine.step(&mut rng) {
                StepOutcome::Flipped { .. } => {}
                StepOutcome::Absorbing => break,
            }
            assert!(engine.state.energy.n_anyons <= 4);
        }
    }

    #[test]
    fn single_trajectory_equals_ensemble_of_one() {
        let code = LatticeSpec::square(4).build().unwrap();
        let model = uniform_model(&code, 1.0, InteractionSpec::none());
        let bath = BathSpec::ConstantRate { gamma0: 1.0 };
        let schedule = Schedule::log_spaced(0.01, 1.0, 8).unwrap();
        let seed = 77;
        let ts = run_trajectory(&code, &model, &bath, &schedule, rng::derive_seed(seed, 0)).unwrap();
        let es = ensemble_run(&code, &model, &bath, &schedule, 1, seed).unwrap();
        let anyons: Vec<f64> = ts.anyons.iter().map(|&a| a as f64).collect();
        assert_eq!(es.anyons, anyons);
        let z1: Vec<f64> = ts.z1.iter().map(|&z| z as f64).collect();
        assert_eq!(es.z1, z1);
    }

    #[test]
    fn aggregates_independent_of_worker_count() {
        let code = LatticeSpec::square(4).build().unwrap();
        let model = uniform_model(&code, 1.0, InteractionSpec::none());
        let bath = BathSpec::ConstantRate { gamma0: 1.0 };
        let schedule = Schedule::log_spaced(0.01, 1.0, 4).unwrap();
        let run = || ensemble_run(&code, &model, &bath, &schedule, 40, 5).unwrap();
        let a = crate::parallel::with_workers(1, run);
        let b = crate::parallel::with_workers(4, run);
        assert_eq!(a, b);
    }

    #[test]
    fn merged_series_equals_one_big_run_in_expectation() {
        let code = LatticeSpec::square(4).build().unwrap();
        let model = uniform_model(&code, 1.0, InteractionSpec::none());
        let bath = BathSpec::ConstantRate { gamma0: 1.0 };
        let schedule = Schedule::log_spaced(0.05, 0.5, 4).unwrap();
        let a = ensemble_run(&code, &model, &bath, &schedule, 300, 21).unwrap();
        let b = ensemble_run(&code, &model, &bath, &schedule, 100, 22).unwrap();
        let m = merge_series(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(m.n_traj, 400);
        assert_eq!(m.num_spins, code.num_spins);
        for t in 0..m.times.len() {
            assert_relative_eq!(m.errors[t], 0.75 * a.errors[t] + 0.25 * b.errors[t]);
            // pooled SE shrinks relative to either component
            assert!(m.z1_se[t] <= a.z1_se[t].max(b.z1_se[t]) + 1e-12);
        }
        // mismatched schedules are rejected
        let other = Schedule::log_spaced(0.05, 0.6, 4).unwrap();
        let c = ensemble_run(&code, &model, &bath, &other, 50, 23).unwrap();
        assert!(merge_series(&[a, c]).is_err());
    }

    #[test]
    fn short_time_error_growth_is_linear() {
        // non-interacting, sigma = 0, J = 0, constant rate: every spin flips
        // independently at rate gamma0, so <errors> ~ 2 L^2 gamma0 t early on.
        let code = LatticeSpec::square(4).build().unwrap();
        let model = uniform_model(&code, 0.0, InteractionSpec::none());
        let bath = BathSpec::ConstantRate { gamma0: 1.0 };
        let t_small = 0.01;
        let schedule = Schedule {
            sample_times: vec![t_small],
            t_end: t_small,
        };
        let es = ensemble_run(&code, &model, &bath, &schedule, 4000, 13).unwrap();
        let expected = 32.0 * t_small; // 2 L^2 gamma0 t
        assert!(
            (es.errors[0] - expected).abs() < 4.0 * es.errors_se[0].max(0.01),
            "got {} expected {}",
            es.errors[0],
            expected
        );
    }

    #[test]
    fn uncorrected_parity_decays_monotonically() {
        let code = LatticeSpec::square(4).build().unwrap();
        let model = uniform_model(&code, 0.0, InteractionSpec::none());
        let bath = BathSpec::ConstantRate { gamma0: 1.0 };
        let schedule = Schedule {
            sample_times: vec![0.0, 0.05, 0.1, 0.2, 0.4, 0.8],
            t_end: 0.8,
        };
        let es = ensemble_run(&code, &model, &bath, &schedule, 3000, 17).unwrap();
        // Independent spin flips: <z1> = exp(-2 gamma0 L t) exactly; check
        // monotone decay well outside the noise.
        for w in es.z1.windows(2) {
            assert!(w[1] < w[0] + 0.05);
        }
        let t: f64 = 0.2;
        assert_relative_eq!(
            es.z1[3],
            (-2.0 * 4.0 * t).exp(),
            epsilon = 5.0 * es.z1_se[3].max(0.01)
        );
    }
}
