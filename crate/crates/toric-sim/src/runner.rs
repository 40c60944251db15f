//! Experiment orchestration: TOML configuration, seed management, dispatch
//! to the module pipelines, and delimited-text output with a replayable
//! manifest.
//!
//! Every run is fully determined by the config (which includes the master
//! seed); per-task seeds are derived from it by index, so the output bytes
//! do not depend on the worker count.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{self, LogicalCurve, StaticPlan};
use crate::decoder::{self, DecoderConfig};
use crate::energy::{
    sample_onsite, BathSpec, DisorderKind, DisorderSpec, EnergyModel, InteractionSpec,
};
use crate::error::{Error, Result};
use crate::kmc::{self, Schedule};
use crate::lattice::{self, LatticeKind, LatticeSpec};
use crate::parallel::with_workers;
use crate::qwalk::{self, SpreadKind, WalkDisorder, WalkSpec};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GenerateLattice,
    StaticThreshold,
    Dynamics,
    Walk,
    Bound,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GenerateLattice => "generate_lattice",
            ExperimentKind::StaticThreshold => "static_threshold",
            ExperimentKind::Dynamics => "dynamics",
            ExperimentKind::Walk => "walk",
            ExperimentKind::Bound => "bound",
        }
    }
}

fn default_kind() -> LatticeKind {
    LatticeKind::Square
}

/// Lattice section without an explicit seed: instance seeds derive from the
/// master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeCfg {
    pub l: usize,
    #[serde(default = "default_kind")]
    pub kind: LatticeKind,
    #[serde(default)]
    pub p_mix: f64,
}

impl LatticeCfg {
    pub fn spec(&self, seed: u64) -> LatticeSpec {
        LatticeSpec {
            l: self.l,
            kind: self.kind,
            p_mix: self.p_mix,
            seed,
        }
    }
}

fn default_bootstrap() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdCfg {
    pub sizes: Vec<usize>,
    pub f_grid: Vec<f64>,
    #[serde(default = "StaticPlan::default_instances")]
    pub n_instances: usize,
    #[serde(default = "StaticPlan::default_errors")]
    pub n_errors: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
}

fn default_per_decade() -> usize {
    20
}

fn default_level() -> f64 {
    0.9
}

fn default_n_traj() -> usize {
    500
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsCfg {
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default = "default_per_decade")]
    pub per_decade: usize,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    /// Decay level defining the memory lifetime.
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_samples() -> usize {
    100
}

fn default_spread() -> SpreadKind {
    SpreadKind::Rms
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkCfg {
    pub h: f64,
    /// Mean onsite potential.
    #[serde(default)]
    pub j: f64,
    /// Binary disorder amplitude; 0 disables disorder.
    #[serde(default)]
    pub sigma: f64,
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default = "default_per_decade")]
    pub per_decade: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_spread")]
    pub spread: SpreadKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundCfg {
    pub px_grid: Vec<f64>,
}

fn default_master_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    /// 0 = use all available cores.
    #[serde(default)]
    pub workers: usize,
    pub lattice: LatticeCfg,
    #[serde(default)]
    pub bath: Option<BathSpec>,
    #[serde(default)]
    pub disorder: Option<DisorderKind>,
    #[serde(default)]
    pub interaction: Option<InteractionSpec>,
    #[serde(default)]
    pub decoder: DecoderConfig,
    #[serde(default)]
    pub threshold: Option<ThresholdCfg>,
    #[serde(default)]
    pub dynamics: Option<DynamicsCfg>,
    #[serde(default)]
    pub walk: Option<WalkCfg>,
    #[serde(default)]
    pub bound: Option<BoundCfg>,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lattice.l < 2 {
            return Err(Error::invalid_parameter("l", "lattice size must be >= 2"));
        }
        if !(0.0..=1.0).contains(&self.lattice.p_mix) {
            return Err(Error::invalid_parameter(
                "p_mix",
                format!("{} not in [0, 1]", self.lattice.p_mix),
            ));
        }
        if let Some(b) = &self.bath {
            b.validate()?;
        }
        if let Some(d) = &self.disorder {
            DisorderSpec { kind: *d, seed: 0 }.validate()?;
        }
        if let Some(i) = &self.interaction {
            i.validate()?;
        }
        if self.decoder.k == 0 {
            return Err(Error::invalid_parameter("k", "must be >= 1"));
        }
        match self.experiment {
            ExperimentKind::GenerateLattice => Ok(()),
            ExperimentKind::StaticThreshold => {
                let t = self.threshold.as_ref().ok_or_else(|| {
                    Error::Config("static_threshold requires a [threshold] section".into())
                })?;
                if t.sizes.len() < 2 {
                    return Err(Error::invalid_parameter("sizes", "need >= 2 sizes"));
                }
                if t.f_grid.len() < 2 {
                    return Err(Error::invalid_parameter("f_grid", "need >= 2 points"));
                }
                Ok(())
            }
            ExperimentKind::Dynamics => {
                let d = self.dynamics.as_ref().ok_or_else(|| {
                    Error::Config("dynamics requires a [dynamics] section".into())
                })?;
                if self.bath.is_none() {
                    return Err(Error::Config("dynamics requires a [bath] section".into()));
                }
                if !(0.0..1.0).contains(&d.level) {
                    return Err(Error::invalid_parameter(
                        "level",
                        format!("{} not in (0, 1)", d.level),
                    ));
                }
                Schedule::log_spaced(d.t_start, d.t_end, d.per_decade).map(|_| ())
            }
            ExperimentKind::Walk => {
                let w = self.walk.as_ref().ok_or_else(|| {
                    Error::Config("walk requires a [walk] section".into())
                })?;
                if w.h <= 0.0 {
                    return Err(Error::invalid_parameter("h", "hopping must be > 0"));
                }
                if w.sigma < 0.0 {
                    return Err(Error::invalid_parameter("sigma", "must be >= 0"));
                }
                if w.samples == 0 {
                    return Err(Error::invalid_parameter("samples", "must be >= 1"));
                }
                Schedule::log_spaced(w.t_start, w.t_end, w.per_decade).map(|_| ())
            }
            ExperimentKind::Bound => {
                let b = self.bound.as_ref().ok_or_else(|| {
                    Error::Config("bound requires a [bound] section".into())
                })?;
                if b.px_grid.is_empty() {
                    return Err(Error::invalid_parameter("px_grid", "must be non-empty"));
                }
                Ok(())
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Hash identifying (config, seed); embedded in every output file so a
    /// mismatched replay is detectable. The worker count is an execution
    /// parameter, not data, and is excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.workers = 0;
        let mut h = Sha256::new();
        h.update(canonical.to_toml().as_bytes());
        let digest = h.finalize();
        let mut out = String::with_capacity(16);
        for b in &digest[..8] {
            let _ = write!(out, "{b:02x}");
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub experiment: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub workers: usize,
    pub task_seeds: Vec<u64>,
    pub elapsed_seconds: f64,
    pub outputs: Vec<String>,
    pub config: ExperimentConfig,
}

/// A '#'-commented metadata header followed by a tab-delimited table.
struct Table {
    meta: Vec<(String, String)>,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(cfg: &ExperimentConfig, columns: &[&str]) -> Self {
        Table {
            meta: vec![
                ("experiment".into(), cfg.experiment.name().into()),
                ("version".into(), env!("CARGO_PKG_VERSION").into()),
                ("manifest".into(), cfg.hash()),
                ("master_seed".into(), cfg.master_seed.to_string()),
            ],
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let _ = writeln!(out, "# {}", self.columns.join("\t"));
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join("\t"));
        }
        out
    }
}

fn fmt_g(x: f64) -> String {
    // full round-trip precision so replays are byte-identical
    format!("{x:.17e}")
}

/// Run the configured experiment, writing `<experiment>.dat` and
/// `manifest.json` under `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let name = cfg.experiment.name();
    let (table, task_seeds) = with_workers(cfg.workers, || -> Result<(Table, Vec<u64>)> {
        match cfg.experiment {
            ExperimentKind::GenerateLattice => run_generate(cfg),
            ExperimentKind::StaticThreshold => run_threshold(cfg),
            ExperimentKind::Dynamics => run_dynamics(cfg),
            ExperimentKind::Walk => run_walk(cfg),
            ExperimentKind::Bound => run_bound(cfg),
        }
        .map_err(|e| e.in_experiment(name))
    })?;
    std::fs::create_dir_all(out_dir)?;
    let data_path = out_dir.join(format!("{name}.dat"));
    std::fs::write(&data_path, table.render())?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: name.to_string(),
        config_hash: cfg.hash(),
        master_seed: cfg.master_seed,
        workers: cfg.workers,
        task_seeds,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        outputs: vec![data_path.to_string_lossy().into_owned()],
        config: cfg.clone(),
    };
    let manifest_path = out_dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    Ok(manifest)
}

fn run_generate(cfg: &ExperimentConfig) -> Result<(Table, Vec<u64>)> {
    let seed = rng::derive_seed(cfg.master_seed, 0);
    let code = cfg.lattice.spec(seed).build()?;
    let report = lattice::validate(&code);
    let mut t = Table::new(cfg, &["plaquette", "size", "x", "y", "spins"]);
    t.meta("l", code.l);
    t.meta("num_spins", code.num_spins);
    t.meta("num_plaquettes", code.plaquettes.len());
    t.meta("num_stars", code.stars.len());
    t.meta("valid", report.is_valid());
    for (i, p) in code.plaquettes.iter().enumerate() {
        let spins: Vec<String> = p.support.iter().map(|s| s.to_string()).collect();
        t.row(vec![
            i.to_string(),
            p.support.len().to_string(),
            format!("{:.1}", p.position[0]),
            format!("{:.1}", p.position[1]),
            spins.join(","),
        ]);
    }
    Ok((t, vec![seed]))
}

/// Per-size pooled parity curves; runs both logical sectors and pools them.
fn threshold_curves(cfg: &ExperimentConfig, t: &ThresholdCfg) -> Result<Vec<LogicalCurve>> {
    let plan = StaticPlan {
        n_instances: t.n_instances,
        n_errors: t.n_errors,
        bootstrap: t.bootstrap,
        use_dual: false,
    };
    let mut pooled = Vec::new();
    for (i, &l) in t.sizes.iter().enumerate() {
        let seed = rng::derive_seed(cfg.master_seed, i as u64);
        let mut spec = cfg.lattice.spec(seed);
        spec.l = l;
        let [z1, z2] = analysis::static_curve(&spec, &t.f_grid, &plan, seed)?;
        pooled.push(analysis::pool_curves(&[&z1, &z2], t.bootstrap, seed)?);
    }
    Ok(pooled)
}

fn run_threshold(cfg: &ExperimentConfig) -> Result<(Table, Vec<u64>)> {
    let tc = cfg.threshold.as_ref().expect("validated");
    let curves = threshold_curves(cfg, tc)?;
    let est = analysis::find_crossing(&curves, tc.bootstrap, cfg.master_seed)?;
    let mut t = Table::new(cfg, &["l", "f", "n", "n_plus", "mean", "ci_low", "ci_high"]);
    t.meta("threshold", fmt_g(est.f_cr));
    t.meta("ci_low", fmt_g(est.ci_low));
    t.meta("ci_high", fmt_g(est.ci_high));
    t.meta("method", &est.method);
    for c in &curves {
        for p in &c.points {
            t.row(vec![
                c.l.to_string(),
                fmt_g(p.x),
                p.n.to_string(),
                p.n_plus.to_string(),
                fmt_g(p.mean),
                fmt_g(p.ci_low),
                fmt_g(p.ci_high),
            ]);
        }
    }
    let seeds = (0..tc.sizes.len())
        .map(|i| rng::derive_seed(cfg.master_seed, i as u64))
        .collect();
    Ok((t, seeds))
}

fn run_dynamics(cfg: &ExperimentConfig) -> Result<(Table, Vec<u64>)> {
    let dc = cfg.dynamics.as_ref().expect("validated");
    let bath = cfg.bath.as_ref().expect("validated");
    let lattice_seed = rng::derive_seed(cfg.master_seed, 0);
    let disorder_seed = rng::derive_seed(cfg.master_seed, 1);
    let ensemble_seed = rng::derive_seed(cfg.master_seed, 2);
    let code = cfg.lattice.spec(lattice_seed).build()?;
    let interaction = cfg.interaction.unwrap_or_else(InteractionSpec::none);
    let disorder_kind = cfg.disorder.unwrap_or(DisorderKind::None);
    let schedule = Schedule::log_spaced(dc.t_start, dc.t_end, dc.per_decade)?;
    // Fresh disorder sample per trajectory, seeded by trajectory index.
    let series = kmc::ensemble_run_with(
        &code,
        bath,
        &schedule,
        dc.n_traj,
        ensemble_seed,
        |traj| {
            let spec = DisorderSpec {
                kind: disorder_kind,
                seed: rng::derive_seed(disorder_seed, traj as u64),
            };
            let onsite = sample_onsite(&code, &spec)?;
            EnergyModel::new(&code, 1.0, &onsite, interaction)
        },
    )?;
    let corrected = analysis::corrected_parity_mean(&series);
    let life = analysis::lifetime(&series.times, &corrected, dc.level)?;
    let mut t = Table::new(
        cfg,
        &[
            "time", "anyons", "anyons_se", "errors", "errors_se", "z1c", "z1c_se", "z2c",
            "z2c_se", "parity",
        ],
    );
    t.meta("n_traj", dc.n_traj);
    t.meta("lifetime", fmt_g(life.tau));
    t.meta("level", fmt_g(life.level));
    t.meta("censored", life.censored);
    for i in 0..series.times.len() {
        t.row(vec![
            fmt_g(series.times[i]),
            fmt_g(series.anyons[i]),
            fmt_g(series.anyons_se[i]),
            fmt_g(series.errors[i]),
            fmt_g(series.errors_se[i]),
            fmt_g(series.z1_corrected[i]),
            fmt_g(series.z1_corrected_se[i]),
            fmt_g(series.z2_corrected[i]),
            fmt_g(series.z2_corrected_se[i]),
            fmt_g(corrected[i]),
        ]);
    }
    Ok((t, vec![lattice_seed, disorder_seed, ensemble_seed]))
}

fn run_walk(cfg: &ExperimentConfig) -> Result<(Table, Vec<u64>)> {
    let wc = cfg.walk.as_ref().expect("validated");
    let seed = rng::derive_seed(cfg.master_seed, 0);
    let schedule = Schedule::log_spaced(wc.t_start, wc.t_end, wc.per_decade)?;
    let disorder = if wc.sigma > 0.0 {
        WalkDisorder::Ising {
            j: wc.j,
            sigma: wc.sigma,
        }
    } else {
        WalkDisorder::Uniform { j: wc.j }
    };
    let spec = WalkSpec {
        lattice: cfg.lattice.spec(seed),
        h: wc.h,
        disorder,
        times: schedule.sample_times,
        samples: wc.samples,
        seed,
        spread: wc.spread,
    };
    let series = qwalk::run_walk_ensemble(&spec)?;
    let mut t = Table::new(cfg, &["time", "spread", "se", "boundary_ok"]);
    t.meta("samples", series.samples);
    t.meta("exponent", fmt_g(series.exponent));
    t.meta("exponent_se", fmt_g(series.exponent_se));
    t.meta(
        "fit_window",
        format!("{} {}", fmt_g(series.fit_window.0), fmt_g(series.fit_window.1)),
    );
    for i in 0..series.times.len() {
        t.row(vec![
            fmt_g(series.times[i]),
            fmt_g(series.mean[i]),
            fmt_g(series.se[i]),
            series.boundary_ok[i].to_string(),
        ]);
    }
    Ok((t, vec![seed]))
}

fn run_bound(cfg: &ExperimentConfig) -> Result<(Table, Vec<u64>)> {
    let bc = cfg.bound.as_ref().expect("validated");
    let mut t = Table::new(cfg, &["p_x", "p_z", "residual"]);
    for &px in &bc.px_grid {
        let pz = analysis::bound_contour(px)?;
        let residual = analysis::css_bound(px, pz)?;
        t.row(vec![fmt_g(px), fmt_g(pz), fmt_g(residual)]);
    }
    Ok((t, Vec::new()))
}

/// Input for the standalone decode pipeline: a lattice spec plus the indices
/// of flipped spins.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeInput {
    pub lattice: LatticeSpec,
    pub error_spins: Vec<usize>,
    #[serde(default)]
    pub decoder: DecoderConfig,
}

/// Decode a serialized code + error vector; returns structured text with the
/// syndrome, matching, correction, and logical parities.
pub fn decode_report(input: &DecodeInput) -> Result<String> {
    let code = input.lattice.build()?;
    let mut error = vec![false; code.num_spins];
    for &s in &input.error_spins {
        if s >= code.num_spins {
            return Err(Error::invalid_parameter(
                "error_spins",
                format!("spin {s} out of range (num_spins = {})", code.num_spins),
            ));
        }
        error[s] = !error[s];
    }
    let syndrome = decoder::extract_syndrome(&code, &error);
    let correction = decoder::decode(&code, &syndrome, &input.decoder)
        .map_err(|e| e.in_experiment("decode"))?;
    let mut residual = error.clone();
    for &s in &correction.spins {
        residual[s] = !residual[s];
    }
    let (z1, z2) = decoder::logical_parities(&code, &residual);
    let mut out = String::new();
    let _ = writeln!(out, "# experiment = decode");
    let _ = writeln!(out, "# version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "# l = {}", code.l);
    let _ = writeln!(out, "# num_spins = {}", code.num_spins);
    let _ = writeln!(out, "# anyons = {}", syndrome.anyons.len());
    let list = |v: &[usize]| {
        v.iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    let _ = writeln!(out, "syndrome\t{}", list(&syndrome.anyons));
    let _ = writeln!(out, "correction\t{}", list(&correction.spins));
    let _ = writeln!(out, "parity_z1\t{z1}");
    let _ = writeln!(out, "parity_z2\t{z2}");
    Ok(out)
}

impl StaticPlan {
    pub fn default_instances() -> usize {
        StaticPlan::default().n_instances
    }

    pub fn default_errors() -> usize {
        StaticPlan::default().n_errors
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn walk_toml() -> &'static str {
        r#"
            experiment = "walk"

            [lattice]
            l = 8

            [walk]
            h = 1.0
            t_start = 0.3
            t_end = 2.0
            samples = 2
        "#
    }

    #[test]
    fn minimal_walk_config_applies_defaults() {
        let cfg = parse_config(walk_toml()).unwrap();
        assert_eq!(cfg.master_seed, 1);
        assert_eq!(cfg.lattice.kind, LatticeKind::Square);
        assert_eq!(cfg.decoder.k, 10);
        let wc = cfg.walk.unwrap();
        assert_eq!(wc.spread, SpreadKind::Rms);
        assert_eq!(wc.per_decade, 20);
    }

    #[test]
    fn unknown_key_is_a_hard_error() {
        let text = walk_toml().replace("samples = 2", "samples = 2\nspeling = 1");
        match parse_config(&text) {
            Err(Error::Config(msg)) => assert!(msg.contains("speling"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_p_mix_names_the_field() {
        let text = walk_toml().replace("l = 8", "l = 8\nkind = \"random\"\np_mix = 1.3");
        match parse_config(&text) {
            Err(Error::InvalidParameter { name, .. }) => assert_eq!(name, "p_mix"),
            other => panic!("expected p_mix range error, got {other:?}"),
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = parse_config(walk_toml()).unwrap();
        let again = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
    }

    #[test]
    fn missing_section_is_reported() {
        let text = r#"
            experiment = "bound"
            [lattice]
            l = 8
        "#;
        match parse_config(text) {
            Err(Error::Config(msg)) => assert!(msg.contains("bound"), "{msg}"),
            other => panic!("expected missing-section error, got {other:?}"),
        }
    }

    #[test]
    fn bound_run_reproduces_reference_pair() {
        let text = r#"
            experiment = "bound"
            [lattice]
            l = 8
            [bound]
            px_grid = [0.05, 0.0674, 0.11]
        "#;
        let cfg = parse_config(text).unwrap();
        let dir = tempdir().unwrap();
        let manifest = run(&cfg, dir.path()).unwrap();
        let data = std::fs::read_to_string(dir.path().join("bound.dat")).unwrap();
        assert!(data.contains(&manifest.config_hash));
        let row: Vec<&str> = data
            .lines()
            .find(|l| l.starts_with("6.74"))
            .expect("px = 0.0674 row")
            .split('\t')
            .collect();
        let pz: f64 = row[1].parse().unwrap();
        assert!((pz - 0.1640).abs() < 5e-4, "contour {pz}");
    }

    #[test]
    fn identical_output_for_different_worker_counts() {
        let base = parse_config(walk_toml()).unwrap();
        let mut bytes = Vec::new();
        for workers in [1usize, 4] {
            let mut cfg = base.clone();
            cfg.workers = workers;
            let dir = tempdir().unwrap();
            run(&cfg, dir.path()).unwrap();
            let mut data = std::fs::read_to_string(dir.path().join("walk.dat")).unwrap();
            // the worker count is config metadata, not data; it does not
            // appear in the table
            assert!(!data.contains("workers"));
            data.push('\n');
            bytes.push(data);
        }
        assert_eq!(bytes[0], bytes[1]);
    }

    #[test]
    fn replaying_a_manifest_reproduces_outputs() {
        let cfg = parse_config(walk_toml()).unwrap();
        let d1 = tempdir().unwrap();
        let m = run(&cfg, d1.path()).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let replay: RunManifest = serde_json::from_str(&text).unwrap();
        let d2 = tempdir().unwrap();
        run(&replay.config, d2.path()).unwrap();
        let a = std::fs::read_to_string(d1.path().join("walk.dat")).unwrap();
        let b = std::fs::read_to_string(d2.path().join("walk.dat")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generate_lattice_writes_table_and_manifest() {
        let text = r#"
            experiment = "generate_lattice"
            master_seed = 5
            [lattice]
            l = 6
            kind = "random"
            p_mix = 0.5
        "#;
        let cfg = parse_config(text).unwrap();
        let dir = tempdir().unwrap();
        let manifest = run(&cfg, dir.path()).unwrap();
        assert_eq!(manifest.task_seeds.len(), 1);
        let data =
            std::fs::read_to_string(dir.path().join("generate_lattice.dat")).unwrap();
        assert!(data.contains("# valid = true"));
        let rows = data.lines().filter(|l| !l.starts_with('#')).count();
        // defect merging removes plaquettes; count matches metadata
        assert!(data.contains(&format!("# num_plaquettes = {rows}")));
    }

    #[test]
    fn decode_report_round_trip() {
        let input = DecodeInput {
            lattice: LatticeSpec::square(8),
            error_spins: vec![0],
            decoder: DecoderConfig::default(),
        };
        let report = decode_report(&input).unwrap();
        assert!(report.contains("correction\t0"));
        assert!(report.contains("parity_z1\t1"));
        assert!(report.contains("parity_z2\t1"));
    }

    #[test]
    fn module_errors_carry_experiment_context() {
        let text = r#"
            experiment = "static_threshold"
            [lattice]
            l = 8
            [threshold]
            sizes = [4, 6]
            f_grid = [0.01, 0.02]
            n_instances = 1
            n_errors = 20
            bootstrap = 50
        "#;
        let cfg = parse_config(text).unwrap();
        let dir = tempdir().unwrap();
        // far below threshold on a short grid: no crossing, wrapped with
        // the experiment name
        match run(&cfg, dir.path()) {
            Err(Error::Experiment { experiment, .. }) => {
                assert_eq!(experiment, "static_threshold")
            }
            other => panic!("expected contextual error, got {other:?}"),
        }
    }
}
