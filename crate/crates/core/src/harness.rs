//! Seeded Monte Carlo driver: oversampling sweeps comparing SVP-RKA with
//! the HSVT baseline, the hyperplane-tessellation probe, and the
//! convergence-bound diagnostic. All outputs are CSV and byte-reproducible
//! for a fixed config and master seed, independent of thread count.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::quantize::{
    dither_scale_from_dynamic_range, dynamic_range, generate_dithers, quantize, DitherPlan,
    OneBitRecord,
};
use crate::rng::{mix64, rng_from_seed};
use crate::sensing::{generate_gaussian_ensemble, generate_low_rank, SensingEnsemble};
use crate::solvers::{hsvt_baseline, hsvt_oracle_scale, lemma1_bound, svp_rka, RkaConfig};

pub const CSV_HEADER: &str =
    "lambda,n,trial,seed,algorithm,rel_error,fro_error,iterations,final_violation,kappa_v,runtime_ms";

/// How the dither standard deviation is chosen per trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DitherRule {
    /// `sigma = beta_y / 3` from the measured dynamic range.
    #[serde(rename = "beta_over_3")]
    BetaOver3,
    /// Fixed sigma regardless of the measurements.
    Fixed(f64),
}

/// Which measurement vector calibrates the dynamic range when noise is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DitherCalibration {
    #[default]
    Clean,
    Noisy,
}

/// Solver budget overrides; `None` falls back to `50 * n * m` iterations
/// and one trace point per epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverDefaults {
    #[serde(default)]
    pub max_iters: Option<u64>,
    #[serde(default = "default_violation_tol")]
    pub violation_tol: f64,
    #[serde(default)]
    pub trace_every: Option<u64>,
}

fn default_violation_tol() -> f64 {
    1e-6
}

impl Default for SolverDefaults {
    fn default() -> Self {
        SolverDefaults {
            max_iters: None,
            violation_tol: default_violation_tol(),
            trace_every: None,
        }
    }
}

impl SolverDefaults {
    pub fn rka_config(&self, n: usize, m: usize, seed: u64) -> RkaConfig {
        let mut cfg = RkaConfig::defaults_for(n, m, seed);
        if let Some(mi) = self.max_iters {
            cfg.max_iters = mi;
        }
        cfg.violation_tol = self.violation_tol;
        if let Some(te) = self.trace_every {
            cfg.trace_every = te.max(1);
        }
        cfg
    }
}

/// Full sweep configuration. JSON config files mirror these field names;
/// unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n1: usize,
    pub n2: usize,
    pub rank: usize,
    /// Oversampling factors `lambda = n / (n1 * rank)`.
    pub lambda_grid: Vec<f64>,
    pub m: usize,
    pub trials: u64,
    pub dither_rule: DitherRule,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default = "default_true")]
    pub normalize_truth: bool,
    #[serde(default)]
    pub dither_calibration: DitherCalibration,
    #[serde(default)]
    pub solver: SolverDefaults,
    pub master_seed: u64,
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n1 == 0 || self.n2 == 0 {
            return fail(format!("dimensions must be positive: {}x{}", self.n1, self.n2));
        }
        if self.rank == 0 || self.rank > self.n1.min(self.n2) {
            return fail(format!(
                "rank {} out of range for {}x{}",
                self.rank, self.n1, self.n2
            ));
        }
        if self.lambda_grid.is_empty() {
            return fail("lambda_grid must be nonempty".into());
        }
        for &lam in &self.lambda_grid {
            if lam.is_nan() || lam <= 0.0 {
                return fail(format!("oversampling factor must be positive, got {lam}"));
            }
            if self.n_for(lam) < 1 {
                return fail(format!("lambda {lam} yields zero measurements"));
            }
        }
        if self.m == 0 {
            return fail("m must be at least 1".into());
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.noise_std.is_nan() || self.noise_std < 0.0 {
            return fail(format!("noise_std must be nonnegative, got {}", self.noise_std));
        }
        if let DitherRule::Fixed(s) = self.dither_rule {
            if s.is_nan() || s < 0.0 {
                return fail(format!("fixed dither sigma must be nonnegative, got {s}"));
            }
        }
        Ok(())
    }

    /// Measurement count for an oversampling factor: `round(lambda * n1 * r)`.
    pub fn n_for(&self, lambda: f64) -> usize {
        (lambda * self.n1 as f64 * self.rank as f64).round() as usize
    }

    /// Per-trial seed: `mix64(mix64(master_seed, bits(lambda)), trial)`.
    pub fn trial_seed(&self, lambda: f64, trial: u64) -> u64 {
        mix64(mix64(self.master_seed, lambda.to_bits()), trial)
    }
}

/// Parse a JSON config, mapping parse failures (including unknown keys)
/// to configuration errors.
pub fn parse_config(json: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig =
        serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    let json = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    parse_config(&json)
}

/// Per-algorithm outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmResult {
    pub algorithm: &'static str,
    pub rel_error: f64,
    pub fro_error: f64,
    pub iterations: u64,
    pub final_violation: f64,
    /// Measured wall time. Excluded from deterministic CSV output unless
    /// timing is explicitly enabled.
    pub runtime_ms: f64,
}

/// One seeded trial: instance metadata plus per-algorithm errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub lambda: f64,
    pub n: usize,
    pub trial: u64,
    pub seed: u64,
    pub kappa_v: f64,
    pub algorithms: Vec<AlgorithmResult>,
}

struct TrialInstance {
    ens: SensingEnsemble,
    truth: DenseMatrix,
    truth_norm: f64,
    rec: OneBitRecord,
    sigma: f64,
    seed: u64,
    n: usize,
}

fn build_instance(cfg: &ExperimentConfig, lambda: f64, trial: u64) -> Result<TrialInstance> {
    let n = cfg.n_for(lambda);
    let seed = cfg.trial_seed(lambda, trial);
    let truth = generate_low_rank(cfg.n1, cfg.n2, cfg.rank, cfg.normalize_truth, mix64(seed, 1))?;
    let ens = generate_gaussian_ensemble(n, cfg.n1, cfg.n2, mix64(seed, 2));
    let y_clean = ens.apply_operator(&truth.matrix, false)?;
    let y = if cfg.noise_std > 0.0 {
        let mut rng = rng_from_seed(mix64(seed, 3));
        y_clean
            .iter()
            .map(|v| v + cfg.noise_std * rng.sample::<f64, _>(StandardNormal))
            .collect()
    } else {
        y_clean.clone()
    };
    let calib = match cfg.dither_calibration {
        DitherCalibration::Clean => &y_clean,
        DitherCalibration::Noisy => &y,
    };
    let sigma = match cfg.dither_rule {
        DitherRule::BetaOver3 => dither_scale_from_dynamic_range(dynamic_range(calib)?),
        DitherRule::Fixed(s) => s,
    };
    let plan = DitherPlan {
        m: cfg.m,
        sigma,
        seed: mix64(seed, 4),
    };
    let gamma = generate_dithers(&plan, n);
    let rec = quantize(&y, &gamma)?;
    let truth_norm = truth.frob_norm;
    Ok(TrialInstance {
        ens,
        truth: truth.matrix,
        truth_norm,
        rec,
        sigma,
        seed,
        n,
    })
}

/// Run SVP-RKA and the HSVT baseline on one seeded instance.
pub fn run_trial(cfg: &ExperimentConfig, lambda: f64, trial: u64) -> Result<TrialResult> {
    let inst = build_instance(cfg, lambda, trial)?;
    let kappa_v = inst.ens.assemble_v().scaled_condition_number()?;

    let solver_cfg = cfg.solver.rka_config(inst.n, cfg.m, mix64(inst.seed, 5));
    let x0 = DenseMatrix::zeros(cfg.n1, cfg.n2);

    let t0 = Instant::now();
    let (xhat, trace) = svp_rka(&inst.rec, &inst.ens, cfg.rank, &x0, &solver_cfg, None)?;
    let svp_ms = t0.elapsed().as_secs_f64() * 1e3;
    let svp = AlgorithmResult {
        algorithm: "svp_rka",
        rel_error: xhat.sub(&inst.truth).frobenius_norm() / inst.truth_norm,
        fro_error: xhat.sub(&inst.truth).frobenius_norm(),
        iterations: trace.total_iterations,
        final_violation: inst.rec.max_violation(&inst.ens, &xhat)?,
        runtime_ms: svp_ms,
    };

    let t1 = Instant::now();
    let scale = hsvt_oracle_scale(inst.truth_norm, inst.sigma);
    let est = hsvt_baseline(&inst.rec, &inst.ens, cfg.rank, scale)?;
    let hsvt_ms = t1.elapsed().as_secs_f64() * 1e3;
    let hsvt = AlgorithmResult {
        algorithm: "hsvt",
        rel_error: est.sub(&inst.truth).frobenius_norm() / inst.truth_norm,
        fro_error: est.sub(&inst.truth).frobenius_norm(),
        iterations: 1,
        final_violation: inst.rec.max_violation(&inst.ens, &est)?,
        runtime_ms: hsvt_ms,
    };

    Ok(TrialResult {
        lambda,
        n: inst.n,
        trial,
        seed: inst.seed,
        kappa_v,
        algorithms: vec![svp, hsvt],
    })
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn median(sorted: &[f64]) -> f64 {
    let k = sorted.len();
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    }
}

/// Execute the full sweep and stream CSV to `out`.
///
/// Trials run in parallel but results are merged in (lambda, trial,
/// algorithm) order, so output bytes do not depend on the thread count.
/// `timing` switches the `runtime_ms` column between measured wall time
/// (non-reproducible) and a fixed 0.
pub fn run_sweep<W: Write>(cfg: &ExperimentConfig, out: &mut W, timing: bool) -> Result<Vec<TrialResult>> {
    cfg.validate()?;
    let jobs: Vec<(f64, u64)> = cfg
        .lambda_grid
        .iter()
        .flat_map(|&lam| (0..cfg.trials).map(move |t| (lam, t)))
        .collect();
    let results: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(lam, t)| run_trial(cfg, lam, t))
        .collect::<Result<Vec<_>>>()?;

    let io = |e: std::io::Error| Error::Io {
        context: "writing sweep CSV".into(),
        source: e,
    };
    writeln!(out, "{CSV_HEADER}").map_err(io)?;
    for r in &results {
        for a in &r.algorithms {
            let ms = if timing { a.runtime_ms } else { 0.0 };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                fmt(r.lambda),
                r.n,
                r.trial,
                r.seed,
                a.algorithm,
                fmt(a.rel_error),
                fmt(a.fro_error),
                a.iterations,
                fmt(a.final_violation),
                fmt(r.kappa_v),
                fmt(ms)
            )
            .map_err(io)?;
        }
    }

    // Summary rows: mean and median per (lambda, algorithm).
    for &lam in &cfg.lambda_grid {
        let n = cfg.n_for(lam);
        for algo in ["svp_rka", "hsvt"] {
            let rows: Vec<&AlgorithmResult> = results
                .iter()
                .filter(|r| r.lambda == lam)
                .flat_map(|r| r.algorithms.iter().filter(|a| a.algorithm == algo))
                .collect();
            let kappas: Vec<f64> = results
                .iter()
                .filter(|r| r.lambda == lam)
                .map(|r| r.kappa_v)
                .collect();
            for stat in ["mean", "median"] {
                let agg = |values: Vec<f64>| -> f64 {
                    if stat == "mean" {
                        values.iter().sum::<f64>() / values.len() as f64
                    } else {
                        let mut s = values;
                        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
                        median(&s)
                    }
                };
                let ms_values: Vec<f64> = if timing {
                    rows.iter().map(|a| a.runtime_ms).collect()
                } else {
                    vec![0.0; rows.len()]
                };
                writeln!(
                    out,
                    "{},{},{},,{},{},{},{},{},{},{}",
                    fmt(lam),
                    n,
                    stat,
                    algo,
                    fmt(agg(rows.iter().map(|a| a.rel_error).collect())),
                    fmt(agg(rows.iter().map(|a| a.fro_error).collect())),
                    fmt(agg(rows.iter().map(|a| a.iterations as f64).collect())),
                    fmt(agg(rows.iter().map(|a| a.final_violation).collect())),
                    fmt(agg(kappas.clone())),
                    fmt(agg(ms_values))
                )
                .map_err(io)?;
            }
        }
    }
    Ok(results)
}

/// One cell of the tessellation probe report.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeCell {
    pub n: usize,
    pub trials: u64,
    pub consistent_trials: u64,
    /// Median / max of `||Xhat - X||_F` over sign-consistent trials;
    /// `None` marks an empty cell.
    pub median_distance: Option<f64>,
    pub max_distance: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub cells: Vec<ProbeCell>,
}

/// Empirical hyperplane-tessellation probe: solve to near sign consistency
/// at each measurement count and report recovery distances restricted to
/// trials whose recovered matrix reproduces the recorded signs up to the
/// solver's violation tolerance. Thresholds are standard normal
/// (`sigma = 1`), one sequence.
pub fn tessellation_probe(
    n1: usize,
    n2: usize,
    rank: usize,
    n_grid: &[usize],
    trials: u64,
    master_seed: u64,
    solver: &SolverDefaults,
) -> Result<ProbeReport> {
    if n_grid.is_empty() {
        return Err(Error::Config("probe n_grid must be nonempty".into()));
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("probe n_grid must be strictly increasing".into()));
    }
    let mut cells = Vec::new();
    for &n in n_grid {
        let distances: Vec<Option<f64>> = (0..trials)
            .into_par_iter()
            .map(|t| -> Result<Option<f64>> {
                let seed = mix64(mix64(master_seed, n as u64), t);
                let truth = generate_low_rank(n1, n2, rank, true, mix64(seed, 1))?;
                let ens = generate_gaussian_ensemble(n, n1, n2, mix64(seed, 2));
                let y = ens.apply_operator(&truth.matrix, false)?;
                let plan = DitherPlan {
                    m: 1,
                    sigma: 1.0,
                    seed: mix64(seed, 4),
                };
                let gamma = generate_dithers(&plan, n);
                let rec = quantize(&y, &gamma)?;
                let mut scfg = solver.rka_config(n, 1, mix64(seed, 5));
                if solver.max_iters.is_none() {
                    // Reaching feasibility takes far longer than the error
                    // sweep's 50*n budget; early exit keeps this cheap.
                    scfg.max_iters = 2_000_000;
                }
                let x0 = DenseMatrix::zeros(n1, n2);
                let (xhat, _) = svp_rka(&rec, &ens, rank, &x0, &scfg, None)?;
                if rec.max_violation(&ens, &xhat)? <= scfg.violation_tol {
                    Ok(Some(xhat.sub(&truth.matrix).frobenius_norm()))
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut consistent: Vec<f64> = distances.into_iter().flatten().collect();
        consistent.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cells.push(ProbeCell {
            n,
            trials,
            consistent_trials: consistent.len() as u64,
            median_distance: (!consistent.is_empty()).then(|| median(&consistent)),
            max_distance: consistent.last().copied(),
        });
    }
    Ok(ProbeReport { cells })
}

impl ProbeReport {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let io = |e: std::io::Error| Error::Io {
            context: "writing probe CSV".into(),
            source: e,
        };
        writeln!(
            out,
            "n,trials,consistent_trials,consistent_fraction,median_distance,max_distance"
        )
        .map_err(io)?;
        for c in &self.cells {
            let frac = c.consistent_trials as f64 / c.trials as f64;
            writeln!(
                out,
                "{},{},{},{},{},{}",
                c.n,
                c.trials,
                c.consistent_trials,
                fmt(frac),
                c.median_distance.map(fmt).unwrap_or_default(),
                c.max_distance.map(fmt).unwrap_or_default()
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

/// One traced step of the bound diagnostic.
#[derive(Debug, Clone, Serialize)]
pub struct BoundStep {
    pub iteration: u64,
    /// `||X_{i-1} - X||_F` entering the step.
    pub pre_step_distance: f64,
    /// `||Z_i - X||_F` after the Kaczmarz update, before the projection.
    pub pre_projection_distance: f64,
    /// `||X_i - X||_F` after the projection.
    pub distance: f64,
    pub max_violation: f64,
    /// `(1 - 1/kappa^2)^(i/2) * e0` with `rho = 0`.
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub lambda: f64,
    pub n: usize,
    pub trial: u64,
    pub kappa_v: f64,
    pub e0: f64,
    pub non_expansive_ok: bool,
    pub steps: Vec<BoundStep>,
}

/// Densely traced SVP-RKA run with the per-step non-expansiveness check
/// and the linear-convergence bound overlaid on the measured distances.
pub fn bound_diagnostic(cfg: &ExperimentConfig, lambda: f64, trial: u64) -> Result<BoundReport> {
    cfg.validate()?;
    let inst = build_instance(cfg, lambda, trial)?;
    let kappa_v = inst.ens.assemble_v().scaled_condition_number()?;

    let mut solver_cfg = cfg.solver.rka_config(inst.n, cfg.m, mix64(inst.seed, 5));
    solver_cfg.trace_every = 1;
    let x0 = DenseMatrix::zeros(cfg.n1, cfg.n2);
    let (xhat, trace) = svp_rka(
        &inst.rec,
        &inst.ens,
        cfg.rank,
        &x0,
        &solver_cfg,
        Some(&inst.truth),
    )?;
    let e0 = x0.sub(&xhat).frobenius_norm();

    let mut steps = Vec::with_capacity(trace.iterations.len());
    let mut non_expansive_ok = true;
    for k in 0..trace.iterations.len() {
        let i = trace.iterations[k];
        let pre = trace.pre_step_distance[k];
        let preproj = trace.pre_projection_distance[k];
        if preproj > pre + 1e-10 {
            non_expansive_ok = false;
        }
        steps.push(BoundStep {
            iteration: i,
            pre_step_distance: pre,
            pre_projection_distance: preproj,
            distance: trace.distance_to_truth[k],
            max_violation: trace.max_violations[k],
            bound: lemma1_bound(kappa_v, i, e0, 0.0)?,
        });
    }
    Ok(BoundReport {
        lambda,
        n: inst.n,
        trial,
        kappa_v,
        e0,
        non_expansive_ok,
        steps,
    })
}

impl BoundReport {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let io = |e: std::io::Error| Error::Io {
            context: "writing bound CSV".into(),
            source: e,
        };
        writeln!(
            out,
            "iteration,pre_step_distance,pre_projection_distance,distance,max_violation,bound"
        )
        .map_err(io)?;
        for s in &self.steps {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                s.iteration,
                fmt(s.pre_step_distance),
                fmt(s.pre_projection_distance),
                fmt(s.distance),
                fmt(s.max_violation),
                fmt(s.bound)
            )
            .map_err(io)?;
        }
        Ok(())
    }
}
