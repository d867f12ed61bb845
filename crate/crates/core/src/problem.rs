//! Black-box objective contract, the lossy matrix-compression benchmark,
//! and the exhaustive oracle.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rng;

/// Largest input width the exhaustive oracle will enumerate.
pub const ORACLE_MAX_BITS: usize = 24;

/// A point of `{0,1}^n`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinaryVector(Vec<u8>);

impl BinaryVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1; n])
    }

    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidArgument(format!("bit value {b} is not 0 or 1")));
        }
        Ok(Self(bits))
    }

    /// Bit `i` of the vector is bit `i` of `index`.
    pub fn from_index(index: u64, n: usize) -> Self {
        Self((0..n).map(|i| ((index >> i) & 1) as u8).collect())
    }

    pub fn to_index(&self) -> u64 {
        self.0.iter().enumerate().fold(0, |acc, (i, &b)| acc | ((b as u64) << i))
    }

    pub fn random<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self((0..n).map(|_| rng.gen_range(0..=1u8)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u8 {
        self.0[i]
    }

    /// Flip bit `i` in place. The length never changes.
    pub fn flip(&mut self, i: usize) {
        self.0[i] ^= 1;
    }

    pub fn to_bit_string(&self) -> String {
        self.0.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }

    pub fn parse_bit_string(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::InvalidArgument(format!("bad bit character {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(Self)
    }
}

impl fmt::Debug for BinaryVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryVector({})", self.to_bit_string())
    }
}

impl Serialize for BinaryVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_bit_string())
    }
}

impl<'de> Deserialize<'de> for BinaryVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::parse_bit_string(&s).map_err(serde::de::Error::custom)
    }
}

/// Map spins `m ∈ {-1,+1}` to bits `(1+m)/2`.
pub fn spins_to_binary(spins: &[i8]) -> Result<BinaryVector> {
    spins
        .iter()
        .map(|&m| match m {
            -1 => Ok(0),
            1 => Ok(1),
            other => Err(Error::InvalidSpin(other)),
        })
        .collect::<Result<Vec<u8>>>()
        .map(BinaryVector)
}

pub fn binary_to_spins(x: &BinaryVector) -> Vec<i8> {
    x.bits().iter().map(|&b| 2 * b as i8 - 1).collect()
}

/// A function over `{0,1}^n_bit` that can only be queried pointwise.
pub trait BlackBox: Send + Sync {
    fn n_bit(&self) -> usize;

    fn eval(&self, x: &BinaryVector) -> Result<f64>;
}

/// Adapter turning a closure into a [`BlackBox`].
pub struct FnBlackBox<F> {
    n_bit: usize,
    f: F,
}

impl<F> FnBlackBox<F>
where
    F: Fn(&BinaryVector) -> f64 + Send + Sync,
{
    pub fn new(n_bit: usize, f: F) -> Self {
        Self { n_bit, f }
    }
}

impl<F> BlackBox for FnBlackBox<F>
where
    F: Fn(&BinaryVector) -> f64 + Send + Sync,
{
    fn n_bit(&self) -> usize {
        self.n_bit
    }

    fn eval(&self, x: &BinaryVector) -> Result<f64> {
        check_len(self.n_bit, x.len())?;
        Ok((self.f)(x))
    }
}

/// Target matrix of the compression problem.
#[derive(Clone, Debug, PartialEq)]
pub struct WMatrix(DMatrix<f64>);

impl WMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::InvalidArgument("W must have at least one row and column".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("W contains a non-finite entry".into()));
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("ragged W rows".into()));
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for i in 0..self.rows() {
            writer.write_record(self.0.row(i).iter().map(|v| format!("{v:?}")))?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad W entry {s:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }
}

/// Draw an `n × d` matrix of i.i.d. standard normal entries.
pub fn make_synthetic_w(n: usize, d: usize, seed: u64) -> Result<WMatrix> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!("W shape must be positive, got {n}x{d}")));
    }
    let mut rng = rng::stream(seed, rng::INSTANCE, 0);
    // Row-major fill so the stream order matches the CSV layout.
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        data.push(StandardNormal.sample(&mut rng));
    }
    WMatrix::new(DMatrix::from_row_slice(n, d, &data))
}

/// Provenance of a synthetic instance, persisted next to its CSV.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceMeta {
    pub n: usize,
    pub d: usize,
    pub k_factor: usize,
    pub seed: u64,
}

/// Approximate `W ≈ M C` with a spin matrix `M ∈ {-1,+1}^{N×K}`.
#[derive(Clone, Debug)]
pub struct LossyCompressionProblem {
    w: WMatrix,
    k_factor: usize,
}

impl LossyCompressionProblem {
    pub fn new(w: WMatrix, k_factor: usize) -> Result<Self> {
        if k_factor == 0 || k_factor > w.rows() {
            return Err(Error::InvalidArgument(format!("k_factor must lie in 1..={}, got {k_factor}", w.rows())));
        }
        Ok(Self { w, k_factor })
    }

    pub fn synthetic(meta: InstanceMeta) -> Result<Self> {
        Self::new(make_synthetic_w(meta.n, meta.d, meta.seed)?, meta.k_factor)
    }

    pub fn w(&self) -> &WMatrix {
        &self.w
    }

    pub fn k_factor(&self) -> usize {
        self.k_factor
    }

    pub fn n_bit(&self) -> usize {
        self.w.rows() * self.k_factor
    }

    /// Persist W as CSV plus a JSON sidecar at `<stem>.json`.
    pub fn save(&self, csv_path: &Path, meta: &InstanceMeta) -> Result<()> {
        self.w.write_csv(std::fs::File::create(csv_path)?)?;
        let sidecar = csv_path.with_extension("json");
        std::fs::write(sidecar, serde_json::to_string_pretty(meta)?)?;
        Ok(())
    }

    pub fn load(csv_path: &Path) -> Result<(Self, InstanceMeta)> {
        let w = WMatrix::read_csv(std::fs::File::open(csv_path)?)?;
        let meta: InstanceMeta = serde_json::from_str(&std::fs::read_to_string(csv_path.with_extension("json"))?)?;
        if meta.n != w.rows() || meta.d != w.cols() {
            return Err(Error::InvalidArgument(format!(
                "sidecar declares {}x{} but CSV holds {}x{}",
                meta.n,
                meta.d,
                w.rows(),
                w.cols()
            )));
        }
        Ok((Self::new(w, meta.k_factor)?, meta))
    }
}

/// Row-major spin matrix of `x`, with column signs and order normalized.
///
/// Column sign flips and column permutations leave the column space of `M`
/// unchanged, so the normalized matrix yields the same projection. Feeding
/// an identical matrix to the decomposition makes symmetric solutions
/// evaluate to bit-identical objective values.
fn canonical_spin_matrix(x: &BinaryVector, n: usize, k: usize) -> DMatrix<f64> {
    let mut cols: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let col: Vec<f64> = (0..n).map(|i| 2.0 * x.get(i * k + j) as f64 - 1.0).collect();
            if col[0] < 0.0 {
                col.iter().map(|v| -v).collect()
            } else {
                col
            }
        })
        .collect();
    cols.sort_by(|a, b| a.partial_cmp(b).expect("spins are finite"));
    DMatrix::from_fn(n, k, |i, j| cols[j][i])
}

/// Sum of squared entries of `W − M·pinv(M)·W`.
pub fn eval_lossy_compression(problem: &LossyCompressionProblem, x: &BinaryVector) -> Result<f64> {
    check_len(problem.n_bit(), x.len())?;
    let n = problem.w.rows();
    let m = canonical_spin_matrix(x, n, problem.k_factor);
    let pinv = m.clone().pseudo_inverse(1e-9 * n as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let w = problem.w.matrix();
    let approx = &m * (&pinv * w);
    Ok((w - approx).iter().map(|v| v * v).sum())
}

impl BlackBox for LossyCompressionProblem {
    fn n_bit(&self) -> usize {
        LossyCompressionProblem::n_bit(self)
    }

    fn eval(&self, x: &BinaryVector) -> Result<f64> {
        eval_lossy_compression(self, x)
    }
}

/// Exhaustive-search optimum of a black box.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleResult {
    /// Every global minimizer, ascending by index.
    pub best: Vec<(BinaryVector, f64)>,
    pub y_opt_1st: f64,
    /// Smallest value strictly above the minimum; absent for constant functions.
    pub y_opt_2nd: Option<f64>,
}

pub fn brute_force_optima(problem: &dyn BlackBox) -> Result<OracleResult> {
    let n_bit = problem.n_bit();
    if n_bit > ORACLE_MAX_BITS {
        return Err(Error::OracleLimit { n_bit, limit: ORACLE_MAX_BITS });
    }
    let values = (0..1u64 << n_bit)
        .into_par_iter()
        .map(|idx| problem.eval(&BinaryVector::from_index(idx, n_bit)))
        .collect::<Result<Vec<f64>>>()?;

    let y_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut best = Vec::new();
    let mut second: Option<f64> = None;
    for (idx, &v) in values.iter().enumerate() {
        if crate::metrics::round17_eq(v, y_min) {
            best.push((BinaryVector::from_index(idx as u64, n_bit), v));
        } else if second.is_none_or(|s| v < s) {
            second = Some(v);
        }
    }
    Ok(OracleResult { best, y_opt_1st: y_min, y_opt_2nd: second })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn naive_projection_residual(w: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
        // (MᵀM)⁻¹Mᵀ on full-column-rank M.
        let mtm = m.transpose() * m;
        let inv = mtm.try_inverse().expect("full column rank");
        let v = m * inv * m.transpose() * w;
        (w - v).iter().map(|e| e * e).sum()
    }

    #[test]
    fn synthetic_w_is_deterministic_and_seed_sensitive() {
        let a = make_synthetic_w(6, 50, 0).unwrap();
        let b = make_synthetic_w(6, 50, 0).unwrap();
        let c = make_synthetic_w(6, 50, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let big = make_synthetic_w(10, 50, 3).unwrap();
        assert_eq!((big.rows(), big.cols()), (10, 50));
        assert!(make_synthetic_w(0, 3, 0).is_err());
    }

    #[test]
    fn spin_conversion() {
        assert_eq!(spins_to_binary(&[-1, -1, -1]).unwrap().bits(), &[0, 0, 0]);
        assert_eq!(spins_to_binary(&[1, -1, 1]).unwrap().bits(), &[1, 0, 1]);
        assert!(matches!(spins_to_binary(&[1, 0]), Err(Error::InvalidSpin(0))));
        for idx in 0..16 {
            let m = binary_to_spins(&BinaryVector::from_index(idx, 4));
            assert_eq!(binary_to_spins(&spins_to_binary(&m).unwrap()), m);
        }
        for idx in 0..256 {
            let x = BinaryVector::from_index(idx, 8);
            assert_eq!(spins_to_binary(&binary_to_spins(&x)).unwrap(), x);
        }
    }

    #[test]
    fn exact_factorization_has_zero_residual() {
        let m0 = [[1i8, 1], [1, -1], [-1, 1], [1, 1]];
        let c0 = DMatrix::from_row_slice(2, 3, &[0.5, -1.2, 2.0, 3.1, 0.7, -0.4]);
        let m0_mat = DMatrix::from_fn(4, 2, |i, j| m0[i][j] as f64);
        let w = WMatrix::new(&m0_mat * c0).unwrap();
        let problem = LossyCompressionProblem::new(w, 2).unwrap();
        let spins: Vec<i8> = m0.iter().flatten().copied().collect();
        let x = spins_to_binary(&spins).unwrap();
        assert!(eval_lossy_compression(&problem, &x).unwrap().abs() < 1e-9);
    }

    #[test]
    fn square_invertible_m_reproduces_w() {
        let w = make_synthetic_w(2, 5, 9).unwrap();
        let problem = LossyCompressionProblem::new(w, 2).unwrap();
        // M = [[1,1],[1,-1]] is invertible.
        let x = spins_to_binary(&[1, 1, 1, -1]).unwrap();
        assert!(eval_lossy_compression(&problem, &x).unwrap().abs() < 1e-9);
    }

    #[test]
    fn identity_target_rank_one() {
        // W = I₂, K = 1: projection onto span(m) removes ‖Pm W‖² = 1 from ‖W‖² = 2.
        let w = WMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let problem = LossyCompressionProblem::new(w.clone(), 1).unwrap();
        let mut values = Vec::new();
        for idx in 0..4 {
            let x = BinaryVector::from_index(idx, 2);
            let spins = binary_to_spins(&x);
            let m = DMatrix::from_fn(2, 1, |i, _| spins[i] as f64);
            let expected = naive_projection_residual(w.matrix(), &m);
            let got = eval_lossy_compression(&problem, &x).unwrap();
            assert!((got - expected).abs() < 1e-12);
            assert!((got - 1.0).abs() < 1e-12);
            values.push(got);
        }
        let oracle = brute_force_optima(&problem).unwrap();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(oracle.y_opt_1st, min);
    }

    #[test]
    fn singular_m_uses_pseudoinverse() {
        let w = make_synthetic_w(3, 4, 2).unwrap();
        let problem = LossyCompressionProblem::new(w.clone(), 2).unwrap();
        // Both columns equal: projection onto span of a single column.
        let x = spins_to_binary(&[1, 1, -1, -1, 1, 1]).unwrap();
        let rank_one = LossyCompressionProblem::new(w, 1).unwrap();
        let x1 = spins_to_binary(&[1, -1, 1]).unwrap();
        let a = eval_lossy_compression(&problem, &x).unwrap();
        let b = eval_lossy_compression(&rank_one, &x1).unwrap();
        assert!(a.is_finite());
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn shape_errors() {
        let problem = LossyCompressionProblem::new(make_synthetic_w(3, 4, 0).unwrap(), 2).unwrap();
        assert!(matches!(
            eval_lossy_compression(&problem, &BinaryVector::zeros(5)),
            Err(Error::Shape { expected: 6, actual: 5 })
        ));
        assert!(LossyCompressionProblem::new(make_synthetic_w(3, 4, 0).unwrap(), 4).is_err());
        assert!(LossyCompressionProblem::new(make_synthetic_w(3, 4, 0).unwrap(), 0).is_err());
    }

    #[test]
    fn oracle_on_simple_functions() {
        let constant = FnBlackBox::new(3, |_| 5.0);
        let r = brute_force_optima(&constant).unwrap();
        assert_eq!(r.y_opt_1st, 5.0);
        assert_eq!(r.best.len(), 8);
        assert!(r.y_opt_2nd.is_none());

        let count = FnBlackBox::new(4, |x: &BinaryVector| x.bits().iter().map(|&b| b as f64).sum());
        let r = brute_force_optima(&count).unwrap();
        assert_eq!(r.y_opt_1st, 0.0);
        assert_eq!(r.best.len(), 1);
        assert_eq!(r.best[0].0, BinaryVector::zeros(4));
        assert_eq!(r.y_opt_2nd, Some(1.0));

        let wide = FnBlackBox::new(25, |_| 0.0);
        assert!(matches!(brute_force_optima(&wide), Err(Error::OracleLimit { n_bit: 25, .. })));
    }

    #[test]
    fn oracle_matches_independent_double_loop() {
        let problem = LossyCompressionProblem::new(make_synthetic_w(4, 6, 0).unwrap(), 2).unwrap();
        let oracle = brute_force_optima(&problem).unwrap();
        let w = problem.w().matrix();
        let mut best = f64::INFINITY;
        for hi in 0..16u32 {
            for lo in 0..16u32 {
                let bits = (hi << 4) | lo;
                let m = DMatrix::from_fn(4, 2, |i, j| if (bits >> (i * 2 + j)) & 1 == 1 { 1.0 } else { -1.0 });
                let v = match (m.transpose() * &m).try_inverse() {
                    Some(inv) => {
                        let r = w - &m * inv * m.transpose() * w;
                        r.iter().map(|e| e * e).sum()
                    }
                    None => continue,
                };
                best = best.min(v);
            }
        }
        assert!((oracle.y_opt_1st - best).abs() < 1e-9, "{} vs {best}", oracle.y_opt_1st);
        assert!(oracle.y_opt_2nd.unwrap() > oracle.y_opt_1st);
    }

    #[test]
    fn global_flip_invariance_and_nonnegativity() {
        let problem = LossyCompressionProblem::new(make_synthetic_w(6, 20, 4).unwrap(), 2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = BinaryVector::random(12, &mut rng);
            let flipped = BinaryVector::from_bits(x.bits().iter().map(|b| 1 - b).collect()).unwrap();
            let a = eval_lossy_compression(&problem, &x).unwrap();
            let b = eval_lossy_compression(&problem, &flipped).unwrap();
            assert!((a - b).abs() < 1e-9);
            assert!(a >= 0.0);
        }
    }

    #[test]
    fn oracle_bounds_random_samples() {
        let problem = LossyCompressionProblem::new(make_synthetic_w(5, 8, 1).unwrap(), 2).unwrap();
        let oracle = brute_force_optima(&problem).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = BinaryVector::from_index(rng.gen_range(0..1024), 10);
            assert!(oracle.y_opt_1st <= eval_lossy_compression(&problem, &x).unwrap());
        }
    }

    #[test]
    fn w_csv_and_sidecar_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let meta = InstanceMeta { n: 4, d: 7, k_factor: 2, seed: 5 };
        let problem = LossyCompressionProblem::synthetic(meta).unwrap();
        let path = dir.path().join("w.csv");
        problem.save(&path, &meta).unwrap();
        let (loaded, loaded_meta) = LossyCompressionProblem::load(&path).unwrap();
        assert_eq!(loaded_meta, meta);
        assert_eq!(loaded.w(), problem.w());
    }
}
