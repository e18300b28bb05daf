//! Gaussian sensing ensemble, planted low-rank ground truth, the linear
//! measurement operator, and the stacked vectorized sensing matrix V.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::rng_from_seed;

/// The n sensing matrices `{A_j}`, each `n1 x n2`, with i.i.d. standard
/// normal entries drawn from a ChaCha8 stream. Regenerating with the same
/// seed reproduces identical entries bit-for-bit.
#[derive(Debug, Clone)]
pub struct SensingEnsemble {
    matrices: Vec<DenseMatrix>,
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    pub seed: u64,
}

/// Planted low-rank matrix together with its rank and Frobenius norm.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub matrix: DenseMatrix,
    pub rank: usize,
    pub frob_norm: f64,
}

/// Draw `n` sensing matrices with i.i.d. standard normal entries.
pub fn generate_gaussian_ensemble(n: usize, n1: usize, n2: usize, seed: u64) -> SensingEnsemble {
    let mut rng = rng_from_seed(seed);
    let matrices = (0..n)
        .map(|_| {
            let m = DMatrix::from_fn(n1, n2, |_, _| rng.sample(StandardNormal));
            DenseMatrix::from_dmatrix(m).expect("normal draws are finite")
        })
        .collect();
    SensingEnsemble {
        matrices,
        n,
        n1,
        n2,
        seed,
    }
}

/// Plant `X = G1 G2^T` with Gaussian factors of width `r`, optionally
/// rescaled to unit Frobenius norm.
pub fn generate_low_rank(
    n1: usize,
    n2: usize,
    r: usize,
    normalize: bool,
    seed: u64,
) -> Result<GroundTruth> {
    if r == 0 || r > n1.min(n2) {
        return Err(Error::RankOutOfRange {
            rank: r,
            rows: n1,
            cols: n2,
        });
    }
    let mut rng = rng_from_seed(seed);
    let g1 = DMatrix::from_fn(n1, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let g2 = DMatrix::from_fn(n2, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut x = g1 * g2.transpose();
    if normalize {
        let norm = x.norm();
        // Gaussian factors are a.s. nonzero; guard anyway.
        if norm > 0.0 {
            x /= norm;
        }
    }
    let matrix = DenseMatrix::from_dmatrix(x)?;
    let frob_norm = matrix.frobenius_norm();
    Ok(GroundTruth {
        matrix,
        rank: r,
        frob_norm,
    })
}

impl SensingEnsemble {
    pub fn matrix(&self, j: usize) -> Result<&DenseMatrix> {
        self.matrices.get(j).ok_or(Error::IndexOutOfRange {
            context: "sensing matrix",
            index: j,
            len: self.n,
        })
    }

    pub fn matrices(&self) -> &[DenseMatrix] {
        &self.matrices
    }

    /// Apply the measurement operator: `y_j = Tr(A_j^T X)`, scaled by
    /// `1/sqrt(n)` when `normalized` is set.
    pub fn apply_operator(&self, x: &DenseMatrix, normalized: bool) -> Result<Vec<f64>> {
        if x.rows() != self.n1 || x.cols() != self.n2 {
            return Err(Error::DimensionMismatch {
                context: "apply_operator",
                expected: format!("{}x{}", self.n1, self.n2),
                actual: format!("{}x{}", x.rows(), x.cols()),
            });
        }
        let scale = if normalized {
            1.0 / (self.n as f64).sqrt()
        } else {
            1.0
        };
        self.matrices
            .iter()
            .map(|a| Ok(scale * a.trace_product(x)?))
            .collect()
    }

    #[cfg(test)]
    pub(crate) fn set_matrix_for_tests(&mut self, j: usize, m: DenseMatrix) {
        self.matrices[j] = m;
    }

    /// The `n x (n1*n2)` matrix whose j-th row is `vec(A_j)`.
    pub fn assemble_v(&self) -> DenseMatrix {
        let d = self.n1 * self.n2;
        let mut v = DMatrix::<f64>::zeros(self.n, d);
        for (j, a) in self.matrices.iter().enumerate() {
            for (c, value) in a.vectorize().into_iter().enumerate() {
                v[(j, c)] = value;
            }
        }
        DenseMatrix::from_dmatrix(v).expect("finite by construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ensemble_seed_determinism() {
        let a = generate_gaussian_ensemble(5, 3, 4, 99);
        let b = generate_gaussian_ensemble(5, 3, 4, 99);
        for j in 0..5 {
            assert_eq!(
                a.matrix(j).unwrap().vectorize(),
                b.matrix(j).unwrap().vectorize()
            );
        }
        let c = generate_gaussian_ensemble(5, 3, 4, 100);
        let differs = (0..5)
            .any(|j| a.matrix(j).unwrap().vectorize() != c.matrix(j).unwrap().vectorize());
        assert!(differs);
    }

    #[test]
    fn ensemble_entry_moments() {
        let ens = generate_gaussian_ensemble(10_000, 2, 2, 7);
        let all: Vec<f64> = ens.matrices().iter().flat_map(|m| m.vectorize()).collect();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 4.0 / n.sqrt(), "sample mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "sample variance {var}");
    }

    #[test]
    fn low_rank_rank_one_has_single_singular_value() {
        let gt = generate_low_rank(4, 4, 1, false, 3).unwrap();
        assert_eq!(gt.matrix.numerical_rank().unwrap(), 1);
    }

    #[test]
    fn low_rank_normalization() {
        let gt = generate_low_rank(6, 5, 2, true, 8).unwrap();
        assert!((gt.frob_norm - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn low_rank_numerical_rank_over_seeds() {
        for seed in 0..100u64 {
            let gt = generate_low_rank(30, 30, 2, true, seed).unwrap();
            assert_eq!(gt.matrix.numerical_rank().unwrap(), 2, "seed {seed}");
        }
    }

    #[test]
    fn low_rank_rejects_bad_rank() {
        assert!(generate_low_rank(4, 4, 0, false, 1).is_err());
        assert!(generate_low_rank(4, 4, 5, false, 1).is_err());
    }

    #[test]
    fn apply_operator_trace_examples() {
        let x = DenseMatrix::from_rows(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();

        let mut ens = generate_gaussian_ensemble(1, 2, 2, 0);
        ens.matrices[0] = DenseMatrix::identity(2);
        let y = ens.apply_operator(&x, false).unwrap();
        assert_eq!(y, vec![5.0]);

        // Four copies of I2, normalized: each entry 5/2.
        let mut ens4 = generate_gaussian_ensemble(4, 2, 2, 0);
        for j in 0..4 {
            ens4.matrices[j] = DenseMatrix::identity(2);
        }
        let y4 = ens4.apply_operator(&x, true).unwrap();
        assert!(y4.iter().all(|&v| (v - 2.5).abs() < 1e-12));

        // Selector matrix e1 e2^T picks out X[0, 1].
        let mut sel = generate_gaussian_ensemble(1, 2, 2, 0);
        sel.matrices[0] = DenseMatrix::from_rows(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        let ys = sel.apply_operator(&x, false).unwrap();
        assert_eq!(ys, vec![2.0]);
    }

    #[test]
    fn apply_operator_dimension_mismatch() {
        let ens = generate_gaussian_ensemble(2, 3, 3, 1);
        let x = DenseMatrix::zeros(2, 2);
        assert!(ens.apply_operator(&x, false).is_err());
    }

    #[test]
    fn apply_operator_linearity() {
        let ens = generate_gaussian_ensemble(7, 4, 3, 21);
        let x1 = generate_low_rank(4, 3, 2, false, 22).unwrap().matrix;
        let x2 = generate_low_rank(4, 3, 3, false, 23).unwrap().matrix;
        let (alpha, beta) = (1.7, -0.4);
        let combo = x1.scale(alpha).add(&x2.scale(beta));
        let lhs = ens.apply_operator(&combo, false).unwrap();
        let y1 = ens.apply_operator(&x1, false).unwrap();
        let y2 = ens.apply_operator(&x2, false).unwrap();
        for j in 0..7 {
            assert!((lhs[j] - (alpha * y1[j] + beta * y2[j])).abs() <= 1e-10);
        }
    }

    #[test]
    fn assemble_v_single_row() {
        let mut ens = generate_gaussian_ensemble(1, 2, 2, 0);
        ens.matrices[0] = DenseMatrix::from_rows(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let v = ens.assemble_v();
        assert_eq!(v.rows(), 1);
        let row: Vec<f64> = (0..4).map(|c| v.get(0, c)).collect();
        assert_eq!(row, vec![1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn assemble_v_consistent_with_operator() {
        let ens = generate_gaussian_ensemble(6, 3, 4, 31);
        let x = generate_low_rank(3, 4, 2, false, 32).unwrap().matrix;
        let v = ens.assemble_v();
        let vx = v.as_dmatrix() * nalgebra::DVector::from_vec(x.vectorize());
        let y = ens.apply_operator(&x, false).unwrap();
        for j in 0..6 {
            assert!((vx[j] - y[j]).abs() <= 1e-12);
        }
    }

    #[test]
    fn assemble_v_row_norm_identity() {
        let ens = generate_gaussian_ensemble(5, 3, 3, 41);
        let v = ens.assemble_v();
        for j in 0..5 {
            let row_norm: f64 = (0..9).map(|c| v.get(j, c) * v.get(j, c)).sum::<f64>().sqrt();
            let fro = ens.matrix(j).unwrap().frobenius_norm();
            assert!((row_norm - fro).abs() <= 1e-12);
        }
    }

    #[test]
    fn kappa_of_v_exceeds_one() {
        let ens = generate_gaussian_ensemble(40, 5, 5, 51);
        let k = ens.assemble_v().scaled_condition_number().unwrap();
        assert!(k.is_finite() && k > 1.0);
    }
}
