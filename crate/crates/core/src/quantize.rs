//! Dithered one-bit acquisition: threshold generation, sign comparison, the
//! stacked sign record, and row-level access to the one-bit polyhedron.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::rng_from_seed;
use crate::sensing::SensingEnsemble;

/// Threshold-sequence plan: `m` sequences of i.i.d. `N(0, sigma^2)` dithers.
#[derive(Debug, Clone)]
pub struct DitherPlan {
    pub m: usize,
    pub sigma: f64,
    pub seed: u64,
}

/// Sign data `R` in `{-1, +1}^{n x m}` together with the threshold matrix
/// `Gamma`. Column `l` holds the l-th threshold sequence. Immutable after
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct OneBitRecord {
    signs: Vec<i8>, // column-major, n x m
    gamma: DenseMatrix,
    pub n: usize,
    pub m: usize,
}

/// One half-space of the one-bit polyhedron: `<p, vec(X')> >= t` with
/// `p = r * vec(A_j)` and `t = r * tau`.
#[derive(Debug, Clone)]
pub struct PolyhedronRow {
    pub p: Vec<f64>,
    pub t: f64,
    pub j: usize,
    pub l: usize,
}

/// Dynamic range of a measurement vector: `max_j |y_j|`.
pub fn dynamic_range(y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::EmptyInput("dynamic_range"));
    }
    Ok(y.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())))
}

/// Draw the `n x m` threshold matrix with i.i.d. `N(0, sigma^2)` entries.
/// `sigma = 0` yields the classical fixed-zero thresholds.
pub fn generate_dithers(plan: &DitherPlan, n: usize) -> DenseMatrix {
    let mut rng = rng_from_seed(plan.seed);
    let g = DMatrix::from_fn(n, plan.m, |_, _| {
        plan.sigma * rng.sample::<f64, _>(StandardNormal)
    });
    DenseMatrix::from_dmatrix(g).expect("normal draws are finite")
}

/// Compare measurements against each threshold sequence.
/// `R[j, l] = +1` iff `y_j >= Gamma[j, l]` (sgn(0) := +1).
pub fn quantize(y: &[f64], gamma: &DenseMatrix) -> Result<OneBitRecord> {
    let (n, m) = (gamma.rows(), gamma.cols());
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            context: "quantize",
            expected: format!("{n} measurements"),
            actual: format!("{}", y.len()),
        });
    }
    let mut signs = vec![0i8; n * m];
    for l in 0..m {
        for j in 0..n {
            signs[j + l * n] = if y[j] >= gamma.get(j, l) { 1 } else { -1 };
        }
    }
    Ok(OneBitRecord {
        signs,
        gamma: gamma.clone(),
        n,
        m,
    })
}

impl OneBitRecord {
    /// Sign `r_j^(l)` as a float (+1 or -1).
    pub fn sign(&self, j: usize, l: usize) -> f64 {
        self.signs[j + l * self.n] as f64
    }

    pub fn gamma(&self) -> &DenseMatrix {
        &self.gamma
    }

    pub fn threshold(&self, j: usize, l: usize) -> f64 {
        self.gamma.get(j, l)
    }

    /// Materialize one row of the stacked polyhedron.
    pub fn polyhedron_row(
        &self,
        ens: &SensingEnsemble,
        j: usize,
        l: usize,
    ) -> Result<PolyhedronRow> {
        if j >= self.n {
            return Err(Error::IndexOutOfRange {
                context: "measurement index",
                index: j,
                len: self.n,
            });
        }
        if l >= self.m {
            return Err(Error::IndexOutOfRange {
                context: "sequence index",
                index: l,
                len: self.m,
            });
        }
        let r = self.sign(j, l);
        let a = ens.matrix(j)?;
        let p = a.vectorize().into_iter().map(|v| r * v).collect();
        Ok(PolyhedronRow {
            p,
            t: r * self.threshold(j, l),
            j,
            l,
        })
    }

    /// Maximum constraint violation `max_{j,l} (t - <p, vec(X')>)^+`.
    /// Zero iff `X'` lies in the polyhedron.
    pub fn max_violation(&self, ens: &SensingEnsemble, x: &DenseMatrix) -> Result<f64> {
        let mut worst = 0.0f64;
        for j in 0..self.n {
            let yj = ens.matrix(j)?.trace_product(x)?;
            for l in 0..self.m {
                let r = self.sign(j, l);
                let viol = (r * self.threshold(j, l) - r * yj).max(0.0);
                worst = worst.max(viol);
            }
        }
        Ok(worst)
    }

    /// Whether quantizing `y` against this record's thresholds reproduces
    /// the stored signs exactly.
    pub fn is_sign_consistent(&self, y: &[f64]) -> Result<bool> {
        let requantized = quantize(y, &self.gamma)?;
        Ok(requantized.signs == self.signs)
    }

    /// Serialize as a flat binary dump: magic `OB1R`, version byte, n and m
    /// as u64 LE, signs as +1/-1 bytes (column-major), thresholds as f64 LE
    /// (column-major).
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let ctx = |e| Error::Io {
            context: "writing one-bit record".into(),
            source: e,
        };
        w.write_all(b"OB1R").map_err(ctx)?;
        w.write_all(&[1u8]).map_err(ctx)?;
        w.write_all(&(self.n as u64).to_le_bytes()).map_err(ctx)?;
        w.write_all(&(self.m as u64).to_le_bytes()).map_err(ctx)?;
        let bytes: Vec<u8> = self.signs.iter().map(|&s| s as u8).collect();
        w.write_all(&bytes).map_err(ctx)?;
        for l in 0..self.m {
            for j in 0..self.n {
                w.write_all(&self.gamma.get(j, l).to_le_bytes()).map_err(ctx)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let ctx = |e| Error::Io {
            context: "reading one-bit record".into(),
            source: e,
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(ctx)?;
        if &magic != b"OB1R" {
            return Err(Error::RecordFormat("bad magic header".into()));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version).map_err(ctx)?;
        if version[0] != 1 {
            return Err(Error::RecordFormat(format!(
                "unknown version {}",
                version[0]
            )));
        }
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf8).map_err(ctx)?;
        let n = u64::from_le_bytes(buf8) as usize;
        r.read_exact(&mut buf8).map_err(ctx)?;
        let m = u64::from_le_bytes(buf8) as usize;
        let mut sign_bytes = vec![0u8; n * m];
        r.read_exact(&mut sign_bytes).map_err(ctx)?;
        let signs: Vec<i8> = sign_bytes.iter().map(|&b| b as i8).collect();
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::RecordFormat("sign byte not +1/-1".into()));
        }
        let mut gamma = DMatrix::<f64>::zeros(n, m);
        for l in 0..m {
            for j in 0..n {
                r.read_exact(&mut buf8).map_err(ctx)?;
                gamma[(j, l)] = f64::from_le_bytes(buf8);
            }
        }
        Ok(OneBitRecord {
            signs,
            gamma: DenseMatrix::from_dmatrix(gamma)?,
            n,
            m,
        })
    }
}

/// Dither scale from the dynamic range rule `sigma = beta_y / 3`, with a
/// floor of 1 when the measurements are identically zero.
pub fn dither_scale_from_dynamic_range(beta_y: f64) -> f64 {
    if beta_y == 0.0 {
        eprintln!("warning: zero dynamic range; falling back to dither sigma = 1");
        1.0
    } else {
        beta_y / 3.0
    }
}
