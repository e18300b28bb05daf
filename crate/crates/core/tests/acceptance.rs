//! End-to-end acceptance checks for the recovery toolkit. Each criterion
//! prints one `acceptance <name>: pass` / `FAIL` line (visible with
//! `cargo test --test acceptance -- --nocapture`).

use rand::Rng;
use rand_distr::StandardNormal;

use onebit_lowrank::harness::{parse_config, run_sweep, tessellation_probe, SolverDefaults};
use onebit_lowrank::matrix::DenseMatrix;
use onebit_lowrank::quantize::{
    dither_scale_from_dynamic_range, dynamic_range, generate_dithers, quantize, DitherPlan,
};
use onebit_lowrank::rng::{mix64, rng_from_seed};
use onebit_lowrank::sensing::{generate_gaussian_ensemble, generate_low_rank, SensingEnsemble};
use onebit_lowrank::solvers::{rka_feasibility, svp_rka, RkaConfig, RowKind};
use onebit_lowrank::OneBitRecord;

fn report(name: &str, r: Result<(), String>) {
    match r {
        Ok(()) => println!("acceptance {name}: pass"),
        Err(msg) => {
            println!("acceptance {name}: FAIL - {msg}");
            panic!("{name}: {msg}");
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Percentile bootstrap 95% confidence interval for the mean.
fn bootstrap_ci(values: &[f64], seed: u64) -> (f64, f64) {
    let mut rng = rng_from_seed(seed);
    let resamples = 2000;
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let total: f64 = (0..values.len())
                .map(|_| values[rng.gen_range(0..values.len())])
                .sum();
            total / values.len() as f64
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (means[resamples * 25 / 1000], means[resamples * 975 / 1000])
}

/// Seeded one-bit instance: normalized rank-r truth, Gaussian ensemble,
/// dithers at sigma = beta_y / 3.
fn onebit_instance(
    n: usize,
    n1: usize,
    n2: usize,
    r: usize,
    seed: u64,
) -> (SensingEnsemble, DenseMatrix, OneBitRecord) {
    let truth = generate_low_rank(n1, n2, r, true, mix64(seed, 1)).unwrap();
    let ens = generate_gaussian_ensemble(n, n1, n2, mix64(seed, 2));
    let y = ens.apply_operator(&truth.matrix, false).unwrap();
    let sigma = dither_scale_from_dynamic_range(dynamic_range(&y).unwrap());
    let plan = DitherPlan {
        m: 1,
        sigma,
        seed: mix64(seed, 4),
    };
    let gamma = generate_dithers(&plan, n);
    let rec = quantize(&y, &gamma).unwrap();
    (ens, truth.matrix, rec)
}

/// Mean recovery error falls monotonically with oversampling and SVP-RKA
/// beats the HSVT baseline, with disjoint bootstrap confidence intervals
/// from moderate oversampling onward.
#[test]
fn error_vs_oversampling_sweep() {
    report("error-vs-oversampling sweep", (|| {
        let cfg = parse_config(
            r#"{
                "n1": 30, "n2": 30, "rank": 2,
                "lambda_grid": [8, 16, 32, 64],
                "m": 1, "trials": 100,
                "dither_rule": "beta_over_3",
                "master_seed": 20260823
            }"#,
        )
        .map_err(|e| e.to_string())?;
        let mut sink = Vec::new();
        let results = run_sweep(&cfg, &mut sink, false).map_err(|e| e.to_string())?;

        let errors = |lam: f64, algo: &str| -> Vec<f64> {
            results
                .iter()
                .filter(|r| r.lambda == lam)
                .flat_map(|r| r.algorithms.iter().filter(|a| a.algorithm == algo))
                .map(|a| a.rel_error)
                .collect()
        };

        let mut prev_svp = f64::INFINITY;
        for (k, &lam) in cfg.lambda_grid.iter().enumerate() {
            let svp = errors(lam, "svp_rka");
            let hsvt = errors(lam, "hsvt");
            if svp.len() != 100 || hsvt.len() != 100 {
                return Err(format!("lambda {lam}: expected 100 trials per algorithm"));
            }
            let (ms, mh) = (mean(&svp), mean(&hsvt));
            if ms >= prev_svp {
                return Err(format!(
                    "mean SVP-RKA error not strictly decreasing at lambda {lam}: {ms} >= {prev_svp}"
                ));
            }
            prev_svp = ms;
            if ms >= mh {
                return Err(format!(
                    "SVP-RKA mean {ms} not below HSVT mean {mh} at lambda {lam}"
                ));
            }
            if lam >= 16.0 {
                let (_, svp_hi) = bootstrap_ci(&svp, mix64(555, k as u64));
                let (hsvt_lo, _) = bootstrap_ci(&hsvt, mix64(556, k as u64));
                if svp_hi >= hsvt_lo {
                    return Err(format!(
                        "95% intervals overlap at lambda {lam}: svp_hi {svp_hi} >= hsvt_lo {hsvt_lo}"
                    ));
                }
            }
        }
        Ok(())
    })());
}

/// Mean squared error of randomized Kaczmarz on a consistent Gaussian
/// equality system stays within 1.5x of the (1 - 1/kappa^2)^i rate.
#[test]
fn kaczmarz_linear_rate() {
    report("kaczmarz linear convergence rate", (|| {
        let (rows, dim) = (200, 20);
        let mut rng = rng_from_seed(41);
        let data: Vec<f64> = (0..rows * dim).map(|_| rng.sample(StandardNormal)).collect();
        let c = DenseMatrix::from_rows(rows, dim, &data).unwrap();
        let xstar: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..rows)
            .map(|j| (0..dim).map(|k| c.get(j, k) * xstar[k]).sum())
            .collect();
        let kinds = vec![RowKind::Equality; rows];
        let kappa = c.scaled_condition_number().map_err(|e| e.to_string())?;
        let q = 1.0 - 1.0 / (kappa * kappa);
        let e0sq: f64 = xstar.iter().map(|v| v * v).sum();

        let checkpoints = [20u64, 50, 100];
        let runs = 200;
        let mut sums = [0.0f64; 3];
        for run in 0..runs {
            let cfg = RkaConfig {
                max_iters: 100,
                violation_tol: 0.0,
                seed: mix64(4100, run),
                trace_every: 1,
            };
            let (_, trace) =
                rka_feasibility(&c, &b, &kinds, &vec![0.0; dim], &cfg, Some(&xstar))
                    .map_err(|e| e.to_string())?;
            for (k, &cp) in checkpoints.iter().enumerate() {
                let pos = trace
                    .iterations
                    .iter()
                    .position(|&i| i == cp)
                    .ok_or_else(|| format!("iteration {cp} not traced"))?;
                sums[k] += trace.distance_to_truth[pos].powi(2);
            }
        }
        for (k, &cp) in checkpoints.iter().enumerate() {
            let mse = sums[k] / runs as f64;
            let bound = 1.5 * q.powi(cp as i32) * e0sq;
            if mse >= bound {
                return Err(format!(
                    "MSE {mse} at iteration {cp} exceeds 1.5x rate bound {bound} (kappa {kappa})"
                ));
            }
        }
        Ok(())
    })());
}

/// Every Kaczmarz half-space step moves the iterate no farther from the
/// planted matrix, checked with dense tracing before each rank projection.
#[test]
fn per_step_non_expansiveness() {
    report("per-step non-expansiveness", (|| {
        let mut violations = 0usize;
        let mut steps = 0usize;
        for run in 0..20u64 {
            let (n1, n2, r) = if run % 2 == 0 { (6, 6, 2) } else { (8, 5, 1) };
            let n = 64 + 8 * (run as usize % 5);
            let (ens, x, rec) = onebit_instance(n, n1, n2, r, mix64(7100, run));
            let cfg = RkaConfig {
                max_iters: 400,
                violation_tol: 0.0,
                seed: mix64(7200, run),
                trace_every: 1,
            };
            let (_, trace) = svp_rka(&rec, &ens, r, &DenseMatrix::zeros(n1, n2), &cfg, Some(&x))
                .map_err(|e| e.to_string())?;
            if trace.pre_projection_distance.is_empty() {
                return Err(format!("run {run}: empty dense trace"));
            }
            for (&z, &prev) in trace
                .pre_projection_distance
                .iter()
                .zip(&trace.pre_step_distance)
            {
                steps += 1;
                if z > prev + 1e-10 {
                    violations += 1;
                }
            }
        }
        if violations > 0 {
            return Err(format!("{violations} of {steps} steps expanded"));
        }
        Ok(())
    })());
}

/// The rank-r projection is never beaten by any other rank-r matrix.
#[test]
fn best_rank_r_approximation() {
    report("best rank-r approximation", (|| {
        let mut rng = rng_from_seed(88);
        let mut draw = |rows: usize, cols: usize| -> DenseMatrix {
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
            DenseMatrix::from_rows(rows, cols, &data).unwrap()
        };
        for trial in 0..1000usize {
            let r = 1 + trial % 3;
            let z = draw(6, 5);
            let a = draw(6, r);
            let bm = draw(5, r);
            let y = DenseMatrix::from_dmatrix(a.as_dmatrix() * bm.as_dmatrix().transpose())
                .unwrap();
            let p = z.rank_r_project(r).map_err(|e| e.to_string())?;
            let best = z.sub(&p).frobenius_norm();
            let other = z.sub(&y).frobenius_norm();
            if best > other + 1e-10 {
                return Err(format!(
                    "trial {trial} (r = {r}): projection residual {best} > competitor {other}"
                ));
            }
        }
        Ok(())
    })());
}

/// Monte Carlo check of the back-projection identity behind the HSVT
/// scale: E[r_j A_j] = sqrt(2/pi) X / sqrt(||X||_F^2 + sigma^2).
#[test]
fn sign_measurement_mean_identity() {
    report("sign-measurement mean identity", (|| {
        let n = 100_000usize;
        let (n1, n2) = (4, 4);
        let truth = generate_low_rank(n1, n2, 2, true, 91).unwrap();
        let x = &truth.matrix;
        let sigma = 1.0;
        let ens = generate_gaussian_ensemble(n, n1, n2, 92);
        let y = ens.apply_operator(x, false).unwrap();
        let plan = DitherPlan { m: 1, sigma, seed: 93 };
        let gamma = generate_dithers(&plan, n);
        let rec = quantize(&y, &gamma).map_err(|e| e.to_string())?;

        let mut sum = vec![0.0f64; n1 * n2];
        let mut sumsq = vec![0.0f64; n1 * n2];
        for j in 0..n {
            let r = rec.sign(j, 0);
            let a = ens.matrix(j).unwrap();
            for col in 0..n2 {
                for row in 0..n1 {
                    let v = r * a.get(row, col);
                    let idx = row + col * n1;
                    sum[idx] += v;
                    sumsq[idx] += v * v;
                }
            }
        }
        let denom = (truth.frob_norm * truth.frob_norm + sigma * sigma).sqrt();
        let scale = (2.0 / std::f64::consts::PI).sqrt() / denom;
        let mut within = 0usize;
        for col in 0..n2 {
            for row in 0..n1 {
                let idx = row + col * n1;
                let m = sum[idx] / n as f64;
                let var = (sumsq[idx] / n as f64 - m * m).max(0.0);
                let se = (var / n as f64).sqrt();
                let target = scale * x.get(row, col);
                if (m - target).abs() <= 3.0 * se {
                    within += 1;
                }
            }
        }
        if within < 14 {
            return Err(format!("only {within} of 16 entries within 3 standard errors"));
        }
        Ok(())
    })());
}

/// More sign hyperplanes tessellate the low-rank set more finely: the
/// median recovery distance among sign-consistent trials never grows.
#[test]
fn tessellation_probe_monotonicity() {
    report("tessellation probe monotonicity", (|| {
        let report = tessellation_probe(8, 8, 1, &[120, 480, 1920], 50, 61, &SolverDefaults::default())
            .map_err(|e| e.to_string())?;
        let mut prev = f64::INFINITY;
        for cell in &report.cells {
            let med = cell.median_distance.ok_or_else(|| {
                format!("no sign-consistent trials at n = {}", cell.n)
            })?;
            if med > prev {
                return Err(format!(
                    "median distance increased at n = {}: {med} > {prev}",
                    cell.n
                ));
            }
            prev = med;
        }
        Ok(())
    })());
}

/// The sweep CSV is a pure function of config and seed: different worker
/// thread counts produce byte-identical files.
#[test]
fn thread_count_replay() {
    report("thread-count replay", (|| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cfg_path = dir.path().join("replay.json");
        std::fs::write(
            &cfg_path,
            r#"{
                "n1": 10, "n2": 10, "rank": 2,
                "lambda_grid": [4, 8],
                "m": 1, "trials": 3,
                "dither_rule": "beta_over_3",
                "master_seed": 7
            }"#,
        )
        .map_err(|e| e.to_string())?;
        let bin = env!("CARGO_BIN_EXE_onebit-lowrank");
        let mut outputs = Vec::new();
        for threads in ["1", "4"] {
            let out_path = dir.path().join(format!("sweep_{threads}.csv"));
            let status = std::process::Command::new(bin)
                .args(["sweep", "--config"])
                .arg(&cfg_path)
                .args(["--threads", threads, "--out"])
                .arg(&out_path)
                .status()
                .map_err(|e| e.to_string())?;
            if !status.success() {
                return Err(format!("sweep --threads {threads} exited with {status}"));
            }
            outputs.push(std::fs::read(&out_path).map_err(|e| e.to_string())?);
        }
        if outputs[0] != outputs[1] {
            return Err("CSV output differs between --threads 1 and --threads 4".into());
        }
        if outputs[0].is_empty() {
            return Err("sweep produced empty CSV".into());
        }
        Ok(())
    })());
}

/// Empirical Kaczmarz row-selection frequencies match the squared-row-norm
/// sampling law within 3 standard errors per row.
#[test]
fn row_sampling_distribution() {
    report("row-sampling distribution", (|| {
        let (rows, dim) = (50, 3);
        let mut rng = rng_from_seed(23);
        let data: Vec<f64> = (0..rows * dim).map(|_| rng.sample(StandardNormal)).collect();
        let c = DenseMatrix::from_rows(rows, dim, &data).unwrap();
        let b: Vec<f64> = vec![0.0; rows];
        let kinds = vec![RowKind::Equality; rows];
        let draws = 100_000u64;
        let cfg = RkaConfig {
            max_iters: draws,
            violation_tol: -1.0,
            seed: 24,
            trace_every: draws,
        };
        let (_, trace) = rka_feasibility(&c, &b, &kinds, &[1.0, -0.5, 2.0], &cfg, None)
            .map_err(|e| e.to_string())?;
        if trace.chosen_rows.len() as u64 != draws {
            return Err(format!("expected {draws} draws, saw {}", trace.chosen_rows.len()));
        }
        let mut counts = vec![0u64; rows];
        for &(j, _) in &trace.chosen_rows {
            counts[j] += 1;
        }
        let total_w: f64 = (0..rows)
            .map(|j| (0..dim).map(|k| c.get(j, k).powi(2)).sum::<f64>())
            .sum();
        for (j, &cnt) in counts.iter().enumerate() {
            let p = (0..dim).map(|k| c.get(j, k).powi(2)).sum::<f64>() / total_w;
            let expect = draws as f64 * p;
            let se = (draws as f64 * p * (1.0 - p)).sqrt();
            let got = cnt as f64;
            if (got - expect).abs() > 3.0 * se {
                return Err(format!(
                    "row {j}: count {got} vs expected {expect} (3 SE = {})",
                    3.0 * se
                ));
            }
        }
        Ok(())
    })());
}
