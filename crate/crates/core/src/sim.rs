//! Monte Carlo drivers: transmit power against SNR, symbol error rate and
//! runtime comparisons.
//!
//! Trial `t` draws its channel from `split_seed(seed, t)`, so results do not
//! depend on how trials are scheduled across workers. All methods of a trial
//! see the same channel.

use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamform::{db_to_linear, linear_to_db, optimal_beamforming};
use crate::channel::{
    complex_gaussian, rng_from_seed, sample_correlated, sample_iid, split_seed, ChannelFile,
    ChannelMatrix,
};
use crate::conic::Tolerances;
use crate::datavec::{enumerate_all, reduced_set};
use crate::modem::Constellation;
use crate::slpro::{self, Options};
use crate::{oracle, slp, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "OB")]
    Ob,
    #[serde(rename = "SLP")]
    Slp,
    #[serde(rename = "SLP-symmetry")]
    SlpSymmetry,
    #[serde(rename = "SLPRo")]
    SlpRo,
    #[serde(rename = "SLPRo-symmetry")]
    SlpRoSymmetry,
    #[serde(rename = "oracle")]
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ob => "OB",
            Method::Slp => "SLP",
            Method::SlpSymmetry => "SLP-symmetry",
            Method::SlpRo => "SLPRo",
            Method::SlpRoSymmetry => "SLPRo-symmetry",
            Method::Oracle => "oracle",
        }
    }

    /// Power scales linearly with a target shared by all users.
    fn homogeneous(self) -> bool {
        self != Method::Ob
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ChannelModel {
    Iid {
        #[serde(default = "one")]
        variance: f64,
    },
    /// Exponential spatial correlation with coefficient `a = [re, im]`.
    Correlated { a: [f64; 2] },
    Fixed { rows: ChannelFile },
}

fn one() -> f64 {
    1.0
}

impl ChannelModel {
    pub fn draw(&self, users: usize, antennas: usize, seed: u64) -> Result<ChannelMatrix> {
        let mut rng = rng_from_seed(seed);
        match self {
            ChannelModel::Iid { variance } => sample_iid(users, antennas, *variance, &mut rng),
            ChannelModel::Correlated { a } => {
                sample_correlated(users, antennas, Complex64::new(a[0], a[1]), &mut rng)
            }
            ChannelModel::Fixed { rows } => {
                let h = ChannelMatrix::from_file_format(rows)?;
                if h.users() != users || h.antennas() != antennas {
                    return Err(Error::Dimension(format!(
                        "fixed channel is {}×{}, config asks for {users}×{antennas}",
                        h.users(),
                        h.antennas()
                    )));
                }
                Ok(h)
            }
        }
    }
}

fn default_eps() -> f64 {
    1e-4
}
fn default_node_cap() -> usize {
    10_000
}
fn default_workers() -> usize {
    1
}
fn default_repeats() -> usize {
    3
}
fn default_oracle_resolution() -> f64 {
    2.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub users: usize,
    pub antennas: usize,
    /// One name per user, or a single name shared by all users.
    pub modulations: Vec<String>,
    pub snr_db: Vec<f64>,
    pub channel: ChannelModel,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_node_cap")]
    pub node_cap: usize,
    #[serde(default)]
    pub oracle: bool,
    #[serde(default = "default_oracle_resolution")]
    pub oracle_resolution_deg: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Modulations compared by [`run_bench`]; defaults to `modulations[0]`.
    #[serde(default)]
    pub bench_modulations: Vec<String>,
    #[serde(default = "default_repeats")]
    pub bench_repeats: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.snr_db.is_empty() {
            return bad("SNR list is empty");
        }
        if self.methods.is_empty() {
            return bad("no methods selected");
        }
        if self.users == 0 || self.antennas == 0 {
            return bad("users and antennas must be at least 1");
        }
        if !(self.eps > 0.0) || !(self.sigma > 0.0) {
            return bad("eps and sigma must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        self.constellations().map(|_| ())
    }

    pub fn constellations(&self) -> Result<Vec<Constellation>> {
        per_user(&self.modulations, self.users)
    }

    pub fn options(&self) -> Options {
        Options {
            eps: self.eps,
            node_cap: self.node_cap,
            tolerances: self.tolerances,
            ..Options::default()
        }
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        split_seed(self.seed, trial as u64)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))
    }
}

fn per_user(names: &[String], users: usize) -> Result<Vec<Constellation>> {
    let parsed = names.iter().map(|n| n.parse()).collect::<Result<Vec<Constellation>>>()?;
    match parsed.len() {
        1 => Ok(vec![parsed[0].clone(); users]),
        n if n == users => Ok(parsed),
        n => Err(Error::Dimension(format!("{n} modulations for {users} users"))),
    }
}

/// Outcome of one method on one channel at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub method: Method,
    pub snr_db: f64,
    pub power: f64,
    /// Relative gap and certification of the rotation search, when run.
    pub gap: Option<f64>,
    pub certified: Option<bool>,
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub method: Method,
    pub snr_db: f64,
    /// `10·log10` of the mean linear power.
    pub mean_power_db: f64,
    /// Mean of per-trial powers in dB.
    pub mean_db: f64,
    /// Sample standard deviation of per-trial powers in dB.
    pub std_db: f64,
    pub trials: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<PowerRow>,
    /// Mean wall-clock seconds per trial for each method.
    pub timing: Vec<(Method, f64)>,
    pub records: Vec<TrialRecord>,
}

impl ExperimentResult {
    pub fn row(&self, method: Method, snr_db: f64) -> Option<&PowerRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && (r.snr_db - snr_db).abs() < 1e-9)
    }

    /// Per-trial powers of `method` at `snr_db`, indexed by trial.
    pub fn paired(&self, method: Method, snr_db: f64) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter(|r| r.method == method && (r.snr_db - snr_db).abs() < 1e-9)
            .map(|r| (r.trial, r.power))
            .collect()
    }
}

struct MethodRun {
    /// Power at each configured SNR.
    powers: Vec<f64>,
    gap: Option<f64>,
    certified: Option<bool>,
    theta: Option<Vec<f64>>,
    seconds: f64,
}

fn run_method(
    cfg: &ExperimentConfig,
    method: Method,
    h: &ChannelMatrix,
    constellations: &[Constellation],
) -> Result<MethodRun> {
    let k = h.users();
    let gammas: Vec<f64> = cfg.snr_db.iter().map(|&s| db_to_linear(s)).collect();
    let tol = &cfg.tolerances;
    let start = Instant::now();
    let mut gap = None;
    let mut certified = None;
    let mut theta = None;
    let powers = if method.homogeneous() {
        let base = gammas[0];
        let gamma = vec![base; k];
        let p = match method {
            Method::Slp => slp::solve_block(h, &enumerate_all(constellations)?, &gamma, cfg.sigma, None, tol)?.average_power,
            Method::SlpSymmetry => slp::solve_block(h, &reduced_set(constellations)?, &gamma, cfg.sigma, None, tol)?.average_power,
            Method::SlpRo | Method::SlpRoSymmetry => {
                let set = if method == Method::SlpRo {
                    enumerate_all(constellations)?
                } else {
                    reduced_set(constellations)?
                };
                let sol = slpro::solve_on(h, &set, &gamma, cfg.sigma, &cfg.options())?;
                gap = Some(sol.gap);
                certified = Some(sol.certified);
                theta = Some(sol.theta);
                sol.upper
            }
            Method::Oracle => {
                oracle::grid_search(h, constellations, &gamma, cfg.sigma, cfg.oracle_resolution_deg, tol)?.power
            }
            Method::Ob => unreachable!("not homogeneous"),
        };
        gammas.iter().map(|g| p * g / base).collect()
    } else {
        gammas
            .iter()
            .map(|&g| optimal_beamforming(h, &vec![g; k], cfg.sigma, tol).map(|s| s.power))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(MethodRun {
        powers,
        gap,
        certified,
        theta,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Power of every configured method at every SNR, averaged over trials.
pub fn run_power_sweep(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let constellations = cfg.constellations()?;
    let mut methods = cfg.methods.clone();
    if cfg.oracle && cfg.users <= oracle::MAX_USERS && !methods.contains(&Method::Oracle) {
        methods.push(Method::Oracle);
    }
    type TrialRuns = Result<Vec<(Method, Result<MethodRun>)>>;
    let per_trial: Vec<TrialRuns> = cfg.pool()?.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let h = cfg.channel.draw(cfg.users, cfg.antennas, cfg.trial_seed(t))?;
                Ok(methods
                    .iter()
                    .map(|&m| (m, run_method(cfg, m, &h, &constellations)))
                    .collect())
            })
            .collect()
    });

    let mut records = Vec::new();
    let mut failures = vec![0usize; methods.len()];
    let mut seconds = vec![Vec::new(); methods.len()];
    for (t, runs) in per_trial.into_iter().enumerate() {
        let runs = runs?;
        for (mi, (m, run)) in runs.into_iter().enumerate() {
            match run {
                Ok(run) => {
                    seconds[mi].push(run.seconds);
                    for (&snr, &power) in cfg.snr_db.iter().zip(&run.powers) {
                        records.push(TrialRecord {
                            trial: t,
                            method: m,
                            snr_db: snr,
                            power,
                            gap: run.gap,
                            certified: run.certified,
                            theta: run.theta.clone(),
                        });
                    }
                }
                Err(e) => {
                    log::warn!("trial {t}: {m} failed: {e}");
                    failures[mi] += 1;
                }
            }
        }
    }

    let mut rows = Vec::new();
    for (mi, &m) in methods.iter().enumerate() {
        for &snr in &cfg.snr_db {
            let powers: Vec<f64> = records
                .iter()
                .filter(|r| r.method == m && r.snr_db == snr)
                .map(|r| r.power)
                .collect();
            if powers.is_empty() {
                continue;
            }
            let db: Vec<f64> = powers.iter().map(|&p| linear_to_db(p)).collect();
            rows.push(PowerRow {
                method: m,
                snr_db: snr,
                mean_power_db: linear_to_db(mean(&powers)),
                mean_db: mean(&db),
                std_db: sample_std(&db),
                trials: powers.len(),
                failures: failures[mi],
            });
        }
    }
    let timing = methods
        .iter()
        .zip(&seconds)
        .filter(|(_, s)| !s.is_empty())
        .map(|(&m, s)| (m, mean(s)))
        .collect();
    Ok(ExperimentResult {
        rows,
        timing,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerRow {
    pub method: Method,
    pub snr_db: f64,
    pub ser: f64,
    pub sends: usize,
}

/// Symbol error rate of a lookup-table method under receiver noise.
///
/// Every table entry is sent `noise_trials` times per channel draw with
/// `CN(0, (noise_scale·σ)²)` added at each receiver; decisions use the
/// per-user rotation returned by the method.
pub fn run_ser(
    cfg: &ExperimentConfig,
    method: Method,
    noise_trials: usize,
    noise_scale: f64,
) -> Result<Vec<SerRow>> {
    cfg.validate()?;
    let rotate = match method {
        Method::Slp | Method::SlpSymmetry => false,
        Method::SlpRo | Method::SlpRoSymmetry => true,
        other => {
            return Err(Error::InvalidArgument(format!("{other} does not produce a lookup table")))
        }
    };
    let constellations = cfg.constellations()?;
    let k = cfg.users;
    let base = db_to_linear(cfg.snr_db[0]);
    let full = enumerate_all(&constellations)?;

    let counts: Vec<Result<Vec<(usize, usize)>>> = cfg.pool()?.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let seed = cfg.trial_seed(t);
                let h = cfg.channel.draw(cfg.users, cfg.antennas, seed)?;
                let table = slp::lookup_table(&h, &constellations, &vec![base; k], cfg.sigma, rotate, &cfg.options())?;
                let outputs = table.outputs();
                let mut per_snr = Vec::with_capacity(cfg.snr_db.len());
                for (si, &snr) in cfg.snr_db.iter().enumerate() {
                    let gamma = db_to_linear(snr);
                    let scale = (gamma / base).sqrt();
                    let amplitude = cfg.sigma * gamma.sqrt();
                    let mut rng = rng_from_seed(split_seed(seed, 1 + si as u64));
                    let mut errors = 0usize;
                    let mut sends = 0usize;
                    for (n, x) in outputs.iter().enumerate() {
                        let syms = full.symbols(n);
                        for _ in 0..noise_trials {
                            for (j, kj) in constellations.iter().enumerate() {
                                let clean = h.apply_row(j, x) * scale;
                                let noise = if noise_scale > 0.0 {
                                    complex_gaussian(&mut rng, (noise_scale * cfg.sigma).powi(2))
                                } else {
                                    Complex64::new(0.0, 0.0)
                                };
                                if kj.detect(clean + noise, table.rotation[j], amplitude) != syms[j] {
                                    errors += 1;
                                }
                                sends += 1;
                            }
                        }
                    }
                    per_snr.push((errors, sends));
                }
                Ok(per_snr)
            })
            .collect()
    });

    let mut totals = vec![(0usize, 0usize); cfg.snr_db.len()];
    for (t, c) in counts.into_iter().enumerate() {
        match c {
            Ok(c) => {
                for (tot, (e, s)) in totals.iter_mut().zip(c) {
                    tot.0 += e;
                    tot.1 += s;
                }
            }
            Err(e) => log::warn!("trial {t}: {method} failed: {e}"),
        }
    }
    Ok(cfg
        .snr_db
        .iter()
        .zip(totals)
        .map(|(&snr_db, (errors, sends))| SerRow {
            method,
            snr_db,
            ser: if sends == 0 { f64::NAN } else { errors as f64 / sends as f64 },
            sends,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub modulation: String,
    pub median_sec: f64,
    pub repeats: usize,
}

/// Median wall-clock of each method for each benchmark modulation, on
/// `bench_repeats` channel draws at the first SNR.
pub fn run_bench(cfg: &ExperimentConfig) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let mods = if cfg.bench_modulations.is_empty() {
        vec![cfg.modulations[0].clone()]
    } else {
        cfg.bench_modulations.clone()
    };
    let single = ExperimentConfig {
        snr_db: vec![cfg.snr_db[0]],
        ..cfg.clone()
    };
    let mut rows = Vec::new();
    for name in &mods {
        let constellations = per_user(std::slice::from_ref(name), cfg.users)?;
        for &m in &cfg.methods {
            let mut times = Vec::with_capacity(cfg.bench_repeats);
            for r in 0..cfg.bench_repeats.max(1) {
                let h = cfg.channel.draw(cfg.users, cfg.antennas, cfg.trial_seed(r))?;
                times.push(run_method(&single, m, &h, &constellations)?.seconds);
            }
            times.sort_by(f64::total_cmp);
            let mid = times.len() / 2;
            let median = if times.len() % 2 == 1 {
                times[mid]
            } else {
                0.5 * (times[mid - 1] + times[mid])
            };
            rows.push(BenchRow {
                method: m,
                modulation: name.clone(),
                median_sec: median,
                repeats: times.len(),
            });
        }
    }
    Ok(rows)
}

/// `median(a)/median(b)` for one modulation.
pub fn bench_ratio(rows: &[BenchRow], a: Method, b: Method, modulation: &str) -> Option<f64> {
    let find = |m: Method| {
        rows.iter()
            .find(|r| r.method == m && r.modulation == modulation)
            .map(|r| r.median_sec)
    };
    Some(find(a)? / find(b)?)
}

pub fn power_sweep_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("method,snr_db,mean_power_db,std,trials,mean_db,failures\n");
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{},{:.6},{}",
            r.method, r.snr_db, r.mean_power_db, r.std_db, r.trials, r.mean_db, r.failures
        );
    }
    out
}

pub fn ser_csv(rows: &[SerRow]) -> String {
    let mut out = String::from("method,snr_db,ser,sends\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.8e},{}", r.method, r.snr_db, r.ser, r.sends);
    }
    out
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("method,modulation,median_sec\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.6}", r.method, r.modulation, r.median_sec);
    }
    out
}

/// Everything needed to rerun an experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub trial_seeds: Vec<u64>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            trial_seeds: (0..config.trials).map(|t| config.trial_seed(t)).collect(),
        }
    }
}

/// Uniform draw in `[0, 1)` from a trial-specific stream; used by tests to
/// perturb inputs reproducibly.
pub fn trial_uniform(seed: u64, stream: u64) -> f64 {
    rng_from_seed(split_seed(seed, stream)).gen()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "methods": ["OB", "SLP", "SLP-symmetry"],
                "users": 2, "antennas": 2,
                "modulations": ["qpsk"],
                "snr_db": [4.7712, 7.7815],
                "channel": {"model": "iid"},
                "trials": 3, "seed": 7
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = base_config();
        assert_eq!(cfg.eps, 1e-4);
        assert_eq!(cfg.node_cap, 10_000);
        assert_eq!(cfg.sigma, 1.0);
        assert_eq!(cfg.constellations().unwrap().len(), 2);
        let mut bad = cfg.clone();
        bad.trials = 0;
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.snr_db.clear();
        assert!(bad.validate().is_err());
        assert_eq!("SLPRo-symmetry".parse::<Method>().unwrap(), Method::SlpRoSymmetry);
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn sweep_is_reproducible_and_symmetric() {
        let cfg = base_config();
        let a = run_power_sweep(&cfg).unwrap();
        let b = run_power_sweep(&cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.rows.len(), 6);
        for &snr in &cfg.snr_db {
            let full = a.paired(Method::Slp, snr);
            let red = a.paired(Method::SlpSymmetry, snr);
            for ((_, p), (_, q)) in full.iter().zip(&red) {
                assert!((p - q).abs() <= 1e-6 * p);
            }
        }
        assert_eq!(power_sweep_csv(&a).lines().count(), 7);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = base_config();
        let mut multi = cfg.clone();
        multi.workers = 3;
        assert_eq!(run_power_sweep(&cfg).unwrap().records, run_power_sweep(&multi).unwrap().records);
    }

    #[test]
    fn scaled_targets_match_direct_solves() {
        let cfg = base_config();
        let result = run_power_sweep(&cfg).unwrap();
        let h = cfg.channel.draw(2, 2, cfg.trial_seed(1)).unwrap();
        let g = db_to_linear(cfg.snr_db[1]);
        let direct = slp::solve_block_reduced(&h, &cfg.constellations().unwrap(), &[g, g], 1.0, None, &Tolerances::default())
            .unwrap()
            .average_power;
        let swept = result.paired(Method::Slp, cfg.snr_db[1])[1].1;
        assert!((direct - swept).abs() <= 1e-7 * direct);
    }

    #[test]
    fn rotation_never_costs_power() {
        let mut cfg = base_config();
        cfg.methods = vec![Method::SlpSymmetry, Method::SlpRoSymmetry];
        cfg.eps = 1e-2;
        let r = run_power_sweep(&cfg).unwrap();
        for &snr in &cfg.snr_db {
            for ((_, p), (_, q)) in r.paired(Method::SlpSymmetry, snr).iter().zip(&r.paired(Method::SlpRoSymmetry, snr)) {
                assert!(linear_to_db(*q) <= linear_to_db(*p) + 1e-6);
            }
        }
        assert!(r.records.iter().filter(|t| t.method == Method::SlpRoSymmetry).all(|t| t.certified == Some(true)));
    }

    #[test]
    fn noiseless_ser_is_zero() {
        let mut cfg = base_config();
        cfg.trials = 2;
        let rows = run_ser(&cfg, Method::Slp, 1, 0.0).unwrap();
        assert!(rows.iter().all(|r| r.ser == 0.0 && r.sends == 2 * 16 * 2));
        assert!(run_ser(&cfg, Method::Ob, 1, 1.0).is_err());
    }

    #[test]
    fn fixed_channel_model() {
        let rows = crate::fixtures::h_test().to_file_format();
        let model = ChannelModel::Fixed { rows };
        let h = model.draw(2, 2, 99).unwrap();
        assert_eq!(h, crate::fixtures::h_test());
        assert!(model.draw(3, 2, 0).is_err());
    }

    #[test]
    fn bench_rows() {
        let mut cfg = base_config();
        cfg.bench_repeats = 1;
        cfg.bench_modulations = vec!["qpsk".into(), "bpsk".into()];
        let rows = run_bench(&cfg).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(bench_ratio(&rows, Method::Slp, Method::SlpSymmetry, "qpsk").unwrap() > 0.0);
        assert_eq!(bench_csv(&rows).lines().count(), 7);
    }
}
