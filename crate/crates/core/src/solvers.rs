//! Randomized Kaczmarz feasibility solver, SVP-RKA for one-bit low-rank
//! sensing, the HSVT baseline, and the convergence-bound evaluator.

use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::quantize::OneBitRecord;
use crate::rng::rng_from_seed;
use crate::sensing::SensingEnsemble;

/// Solver budget and telemetry settings for one run.
#[derive(Debug, Clone)]
pub struct RkaConfig {
    pub max_iters: u64,
    pub violation_tol: f64,
    pub seed: u64,
    /// Telemetry stride; distances and violations are recorded every
    /// `trace_every` iterations (1 = dense tracing).
    pub trace_every: u64,
}

impl RkaConfig {
    /// Defaults for an `n x m` one-bit system: budget `50*n*m`, tolerance
    /// 1e-6, one trace point per epoch.
    pub fn defaults_for(n: usize, m: usize, seed: u64) -> Self {
        let nm = (n * m) as u64;
        RkaConfig {
            max_iters: 50 * nm,
            violation_tol: 1e-6,
            seed,
            trace_every: nm.max(1),
        }
    }
}

/// Kind of constraint attached to each row of a Kaczmarz system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// `<c_j, x> >= b_j`
    Inequality,
    /// `<c_j, x> = b_j`
    Equality,
}

/// Per-run telemetry. All vectors share the same length; the k-th entry
/// describes the state after iteration `iterations[k]`. Distance fields are
/// populated only when a ground truth is supplied.
#[derive(Debug, Clone, Default)]
pub struct SolveTrace {
    pub iterations: Vec<u64>,
    /// `||x_i - truth||` after the traced step.
    pub distance_to_truth: Vec<f64>,
    /// `||x_{i-1} - truth||` before the traced step.
    pub pre_step_distance: Vec<f64>,
    /// `||z_i - truth||` after the Kaczmarz update but before the rank
    /// projection (equals `distance_to_truth` for the vector solver).
    pub pre_projection_distance: Vec<f64>,
    pub max_violations: Vec<f64>,
    pub chosen_rows: Vec<(usize, usize)>,
    pub total_iterations: u64,
}

impl SolveTrace {
    fn assert_finite(&self) {
        debug_assert!(self.distance_to_truth.iter().all(|v| v.is_finite()));
        debug_assert!(self.max_violations.iter().all(|v| v.is_finite()));
    }
}

/// Randomized Kaczmarz iteration for the mixed system
/// `<c_j, x> >= b_j (j in inequalities)` and `<c_j, x> = b_j (j in
/// equalities)`. Rows are sampled with probability proportional to their
/// squared Euclidean norm; the iterate moves by
/// `x <- x + beta_j / ||c_j||^2 * c_j`.
pub fn rka_feasibility(
    c: &DenseMatrix,
    b: &[f64],
    kinds: &[RowKind],
    x0: &[f64],
    cfg: &RkaConfig,
    truth: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveTrace)> {
    let rows = c.rows();
    let dim = c.cols();
    if rows == 0 || dim == 0 {
        return Err(Error::EmptyInput("rka_feasibility"));
    }
    if b.len() != rows || kinds.len() != rows {
        return Err(Error::DimensionMismatch {
            context: "rka_feasibility rhs",
            expected: format!("{rows} rows"),
            actual: format!("{} / {}", b.len(), kinds.len()),
        });
    }
    if x0.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "rka_feasibility x0",
            expected: format!("{dim}"),
            actual: format!("{}", x0.len()),
        });
    }

    let cm = c.as_dmatrix();
    let mut row_norms_sq = Vec::with_capacity(rows);
    for j in 0..rows {
        let ns: f64 = cm.row(j).iter().map(|v| v * v).sum();
        if ns == 0.0 {
            return Err(Error::ZeroRow(j));
        }
        row_norms_sq.push(ns);
    }
    let sampler = WeightedIndex::new(&row_norms_sq)
        .map_err(|e| Error::Config(format!("row sampling weights: {e}")))?;
    let mut rng = rng_from_seed(cfg.seed);

    let residual = |x: &DVector<f64>| -> f64 {
        let cx = cm * x;
        let mut worst = 0.0f64;
        for j in 0..rows {
            let r = b[j] - cx[j];
            let v = match kinds[j] {
                RowKind::Inequality => r.max(0.0),
                RowKind::Equality => r.abs(),
            };
            worst = worst.max(v);
        }
        worst
    };
    let dist = |x: &DVector<f64>| -> f64 {
        truth
            .map(|t| {
                x.iter()
                    .zip(t)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .unwrap_or(0.0)
    };

    let mut x = DVector::from_column_slice(x0);
    let mut trace = SolveTrace::default();
    let mut last_iter = 0u64;
    for i in 1..=cfg.max_iters {
        let j = sampler.sample(&mut rng);
        let cj = cm.row(j);
        let proj = cj.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>();
        let beta = match kinds[j] {
            RowKind::Inequality => (b[j] - proj).max(0.0),
            RowKind::Equality => b[j] - proj,
        };
        let pre = if truth.is_some() { dist(&x) } else { 0.0 };
        if beta != 0.0 {
            let coeff = beta / row_norms_sq[j];
            for (k, v) in cj.iter().enumerate() {
                x[k] += coeff * v;
            }
        }
        last_iter = i;
        if i % cfg.trace_every == 0 || i == cfg.max_iters {
            let res = residual(&x);
            trace.iterations.push(i);
            trace.max_violations.push(res);
            trace.chosen_rows.push((j, 0));
            if truth.is_some() {
                let d = dist(&x);
                trace.pre_step_distance.push(pre);
                trace.distance_to_truth.push(d);
                trace.pre_projection_distance.push(d);
            }
            if res <= cfg.violation_tol {
                break;
            }
        } else {
            // Cheap per-step row bookkeeping for the sampling tests.
            trace.chosen_rows.push((j, 0));
        }
    }
    trace.total_iterations = last_iter;
    trace.assert_finite();
    Ok((x.iter().copied().collect(), trace))
}

/// SVP-RKA: one Kaczmarz half-space step on a randomly chosen one-bit
/// constraint, followed by a rank-r projection, per iteration. Rows are
/// drawn with probability proportional to `||A_j||_F^2`, uniformly over the
/// threshold sequences. Stops on budget or when the maximum polyhedron
/// violation drops to `violation_tol`.
pub fn svp_rka(
    rec: &OneBitRecord,
    ens: &SensingEnsemble,
    r: usize,
    x0: &DenseMatrix,
    cfg: &RkaConfig,
    truth: Option<&DenseMatrix>,
) -> Result<(DenseMatrix, SolveTrace)> {
    if rec.n != ens.n {
        return Err(Error::DimensionMismatch {
            context: "svp_rka record/ensemble",
            expected: format!("{} measurements", ens.n),
            actual: format!("{}", rec.n),
        });
    }
    if r == 0 || r > ens.n1.min(ens.n2) {
        return Err(Error::RankOutOfRange {
            rank: r,
            rows: ens.n1,
            cols: ens.n2,
        });
    }
    if x0.rows() != ens.n1 || x0.cols() != ens.n2 {
        return Err(Error::DimensionMismatch {
            context: "svp_rka x0",
            expected: format!("{}x{}", ens.n1, ens.n2),
            actual: format!("{}x{}", x0.rows(), x0.cols()),
        });
    }

    let mut weights = Vec::with_capacity(ens.n);
    for j in 0..ens.n {
        let w = ens.matrix(j)?.frobenius_norm();
        if w == 0.0 {
            return Err(Error::ZeroRow(j));
        }
        weights.push(w * w);
    }
    let sampler = WeightedIndex::new(&weights)
        .map_err(|e| Error::Config(format!("row sampling weights: {e}")))?;
    let mut rng = rng_from_seed(cfg.seed);

    let dist = |m: &DenseMatrix| -> f64 {
        truth.map(|t| m.sub(t).frobenius_norm()).unwrap_or(0.0)
    };

    let mut x = x0.clone();
    let mut trace = SolveTrace::default();
    let mut last_iter = 0u64;
    for i in 1..=cfg.max_iters {
        let j = sampler.sample(&mut rng);
        let l = if rec.m > 1 {
            rng.gen_range(0..rec.m)
        } else {
            0
        };
        let a = ens.matrix(j)?;
        let rsign = rec.sign(j, l);
        let beta = (rsign * rec.threshold(j, l) - rsign * a.trace_product(&x)?).max(0.0);
        let pre = if truth.is_some() { dist(&x) } else { 0.0 };
        let pre_proj;
        if beta > 0.0 {
            let z = x.add(&a.scale(rsign * beta / weights[j]));
            pre_proj = if truth.is_some() { dist(&z) } else { 0.0 };
            x = z.rank_r_project(r)?;
        } else {
            // z = x: the iterate is already feasible for this row and
            // already rank-r, so the projection is a no-op.
            pre_proj = pre;
        }
        last_iter = i;
        if i % cfg.trace_every == 0 || i == cfg.max_iters {
            let viol = rec.max_violation(ens, &x)?;
            trace.iterations.push(i);
            trace.max_violations.push(viol);
            trace.chosen_rows.push((j, l));
            if truth.is_some() {
                trace.pre_step_distance.push(pre);
                trace.pre_projection_distance.push(pre_proj);
                trace.distance_to_truth.push(dist(&x));
            }
            if viol <= cfg.violation_tol {
                break;
            }
        }
    }
    trace.total_iterations = last_iter;
    trace.assert_finite();
    Ok((x, trace))
}

/// Hard singular value thresholding baseline:
/// `P_r( scale / (n m) * sum_{j,l} R[j,l] A_j )`.
///
/// The estimator is given the oracle scale (see
/// [`hsvt_oracle_scale`]); without it the sign data only determine the
/// direction of the back-projection.
pub fn hsvt_baseline(
    rec: &OneBitRecord,
    ens: &SensingEnsemble,
    r: usize,
    scale: f64,
) -> Result<DenseMatrix> {
    if !scale.is_finite() {
        return Err(Error::Config("HSVT scale must be finite".into()));
    }
    let mut acc = DMatrix::<f64>::zeros(ens.n1, ens.n2);
    for j in 0..rec.n {
        let mut sign_sum = 0.0;
        for l in 0..rec.m {
            sign_sum += rec.sign(j, l);
        }
        if sign_sum != 0.0 {
            acc += ens.matrix(j)?.as_dmatrix() * sign_sum;
        }
    }
    acc *= scale / (rec.n as f64 * rec.m as f64);
    if scale == 0.0 {
        return DenseMatrix::from_dmatrix(acc);
    }
    DenseMatrix::from_dmatrix(acc)?.rank_r_project(r)
}

/// Oracle scale for the HSVT back-projection under Gaussian sensing and
/// Gaussian dithers: `sqrt(pi/2) * sqrt(||X||_F^2 + sigma^2)`, the inverse
/// of the sign-correlation shrinkage `E[r_j A_j] = sqrt(2/pi) * X /
/// sqrt(||X||_F^2 + sigma^2)`.
pub fn hsvt_oracle_scale(truth_frob_norm: f64, dither_sigma: f64) -> f64 {
    (std::f64::consts::PI / 2.0).sqrt()
        * (truth_frob_norm * truth_frob_norm + dither_sigma * dither_sigma).sqrt()
}

/// Right-hand side of the linear convergence bound:
/// `(1 - 1/kappa^2)^(i/2) * e0 + rho`.
pub fn lemma1_bound(kappa: f64, i: u64, e0: f64, rho: f64) -> Result<f64> {
    if kappa.is_nan() || kappa < 1.0 {
        return Err(Error::Config(format!(
            "convergence bound requires kappa >= 1, got {kappa}"
        )));
    }
    let q = 1.0 - 1.0 / (kappa * kappa);
    Ok(q.powf(i as f64 / 2.0) * e0 + rho)
}
