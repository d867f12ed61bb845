//! Second-order factorization machine surrogate and its QUBO lowering.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::problem::BinaryVector;
use crate::rng;

/// Default latent dimension, `n_bit/2 - 1` (at least 1).
pub fn default_latent_dim(n_bit: usize) -> usize {
    (n_bit / 2).saturating_sub(1).max(1)
}

/// FM parameters `θ = (w0, w, v)` with `v` stored row-major as `n_bit × k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FmParamsRepr", into = "FmParamsRepr")]
pub struct FmParams {
    pub w0: f64,
    pub w: Vec<f64>,
    v: Vec<f64>,
    k: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FmParamsRepr {
    w0: f64,
    w: Vec<f64>,
    v: Vec<Vec<f64>>,
    k: usize,
}

impl TryFrom<FmParamsRepr> for FmParams {
    type Error = Error;

    fn try_from(r: FmParamsRepr) -> Result<Self> {
        if r.v.iter().any(|row| row.len() != r.k) {
            return Err(Error::InvalidArgument(format!("every row of v must have k = {} entries", r.k)));
        }
        FmParams::new(r.w0, r.w, r.v.into_iter().flatten().collect(), r.k)
    }
}

impl From<FmParams> for FmParamsRepr {
    fn from(p: FmParams) -> Self {
        let v = p.v.chunks(p.k).map(<[f64]>::to_vec).collect();
        Self { w0: p.w0, w: p.w, v, k: p.k }
    }
}

impl FmParams {
    pub fn new(w0: f64, w: Vec<f64>, v: Vec<f64>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("latent dimension k must be >= 1".into()));
        }
        check_len(w.len() * k, v.len())?;
        let p = Self { w0, w, v, k };
        if !p.is_finite() {
            return Err(Error::InvalidArgument("FM parameters must be finite".into()));
        }
        Ok(p)
    }

    pub fn zeros(n_bit: usize, k: usize) -> Self {
        Self { w0: 0.0, w: vec![0.0; n_bit], v: vec![0.0; n_bit * k], k }
    }

    pub fn n_bit(&self) -> usize {
        self.w.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn v(&self, i: usize, l: usize) -> f64 {
        self.v[i * self.k + l]
    }

    pub fn v_row(&self, i: usize) -> &[f64] {
        &self.v[i * self.k..(i + 1) * self.k]
    }

    pub fn v_flat(&self) -> &[f64] {
        &self.v
    }

    pub(crate) fn v_flat_mut(&mut self) -> &mut [f64] {
        &mut self.v
    }

    pub fn n_params(&self) -> usize {
        1 + self.w.len() + self.v.len()
    }

    pub fn is_finite(&self) -> bool {
        self.w0.is_finite() && self.w.iter().chain(&self.v).all(|p| p.is_finite())
    }
}

/// Evaluate the FM in `O(n_bit · k)` via the sum-of-squares identity.
pub fn fm_eval(params: &FmParams, x: &BinaryVector) -> Result<f64> {
    check_len(params.n_bit(), x.len())?;
    Ok(fm_eval_unchecked(params, x.bits()))
}

pub(crate) fn fm_eval_unchecked(params: &FmParams, x: &[u8]) -> f64 {
    let k = params.k;
    let mut linear = params.w0;
    let mut sums = vec![0.0; k];
    let mut squares = vec![0.0; k];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0 {
            continue;
        }
        linear += params.w[i];
        for (l, &vil) in params.v_row(i).iter().enumerate() {
            sums[l] += vil;
            squares[l] += vil * vil;
        }
    }
    let pair: f64 = sums.iter().zip(&squares).map(|(s, q)| s * s - q).sum();
    linear + 0.5 * pair
}

/// Upper-triangular QUBO coefficients plus a constant offset.
#[derive(Clone, Debug, PartialEq)]
pub struct QuboMatrix {
    n_bit: usize,
    // Dense row-major; entries below the diagonal are always zero.
    q: Vec<f64>,
    pub offset: f64,
}

impl QuboMatrix {
    pub fn zeros(n_bit: usize) -> Self {
        Self { n_bit, q: vec![0.0; n_bit * n_bit], offset: 0.0 }
    }

    /// Build from a closure evaluated on `i <= j`.
    pub fn from_fn(n_bit: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut q = Self::zeros(n_bit);
        for i in 0..n_bit {
            for j in i..n_bit {
                q.q[i * n_bit + j] = f(i, j);
            }
        }
        q
    }

    pub fn n_bit(&self) -> usize {
        self.n_bit
    }

    /// Coefficient of `x_i x_j` for either argument order.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.q[a * self.n_bit + b]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.q[a * self.n_bit + b] = value;
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { n_bit: self.n_bit, q: self.q.iter().map(|v| v * factor).collect(), offset: self.offset * factor }
    }

    /// Iterate `(i, j, Q_ij)` over the upper triangle.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n_bit;
        (0..n).flat_map(move |i| (i..n).map(move |j| (i, j, self.q[i * n + j])))
    }

    /// Symmetric neighbour table: `coupling(i)[j] = Q_{min,max}` for `j != i`, 0 on the diagonal.
    pub(crate) fn symmetric_couplings(&self) -> Vec<f64> {
        let n = self.n_bit;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = self.q[i * n + j];
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }
}

/// `Q_ii = w_i`, `Q_ij = <v_i, v_j>` for `i < j`, offset `w0`.
pub fn fm_to_qubo(params: &FmParams) -> QuboMatrix {
    let mut q = QuboMatrix::from_fn(params.n_bit(), |i, j| {
        if i == j {
            params.w[i]
        } else {
            params.v_row(i).iter().zip(params.v_row(j)).map(|(a, b)| a * b).sum()
        }
    });
    q.offset = params.w0;
    q
}

/// `Σ_{i<=j} Q_ij x_i x_j`, offset excluded.
pub fn qubo_eval(q: &QuboMatrix, x: &BinaryVector) -> Result<f64> {
    check_len(q.n_bit, x.len())?;
    Ok(qubo_eval_unchecked(q, x.bits()))
}

pub(crate) fn qubo_eval_unchecked(q: &QuboMatrix, x: &[u8]) -> f64 {
    let n = q.n_bit;
    let mut total = 0.0;
    for i in 0..n {
        if x[i] == 0 {
            continue;
        }
        let row = &q.q[i * n..(i + 1) * n];
        for j in i..n {
            if x[j] == 1 {
                total += row[j];
            }
        }
    }
    total
}

/// Draw every component of `θ` i.i.d. from `N(0, std_dev²)`.
pub fn init_params(n_bit: usize, k: usize, std_dev: f64, seed: u64) -> Result<FmParams> {
    if k == 0 {
        return Err(Error::InvalidArgument("latent dimension k must be >= 1".into()));
    }
    if !std_dev.is_finite() || std_dev < 0.0 {
        return Err(Error::InvalidArgument(format!("std_dev must be finite and >= 0, got {std_dev}")));
    }
    let normal = Normal::new(0.0, std_dev).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = rng::stream(seed, rng::FM_INIT, 0);
    let w0 = normal.sample(&mut rng);
    let w = (0..n_bit).map(|_| normal.sample(&mut rng)).collect();
    let v = (0..n_bit * k).map(|_| normal.sample(&mut rng)).collect();
    Ok(FmParams { w0, w, v, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_fm(p: &FmParams, x: &BinaryVector) -> f64 {
        let n = p.n_bit();
        let mut total = p.w0;
        for i in 0..n {
            total += p.w[i] * x.get(i) as f64;
            for j in (i + 1)..n {
                let dot: f64 = (0..p.k()).map(|l| p.v(i, l) * p.v(j, l)).sum();
                total += dot * (x.get(i) * x.get(j)) as f64;
            }
        }
        total
    }

    fn naive_qubo(q: &QuboMatrix, x: &BinaryVector) -> f64 {
        let n = q.n_bit();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i <= j {
                    total += q.get(i, j) * (x.get(i) * x.get(j)) as f64;
                }
            }
        }
        total
    }

    fn toy() -> FmParams {
        FmParams::new(0.0, vec![0.0, 0.0], vec![2.0, 3.0], 1).unwrap()
    }

    #[test]
    fn fm_eval_small_cases() {
        let p = init_params(5, 2, 1.0, 3).unwrap();
        assert_eq!(fm_eval(&p, &BinaryVector::zeros(5)).unwrap(), p.w0);
        assert_eq!(fm_eval(&toy(), &BinaryVector::ones(2)).unwrap(), 6.0);
        assert!(matches!(fm_eval(&p, &BinaryVector::zeros(4)), Err(Error::Shape { .. })));
    }

    #[test]
    fn fm_eval_matches_pairwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..200 {
            let p = init_params(12, 5, 1.0, trial).unwrap();
            let x = BinaryVector::random(12, &mut rng);
            let fast = fm_eval(&p, &x).unwrap();
            let slow = naive_fm(&p, &x);
            assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1.0));
        }
    }

    #[test]
    fn qubo_lowering() {
        let p = FmParams::new(1.5, vec![1.0, -2.0, 0.5], vec![0.0; 6], 2).unwrap();
        let q = fm_to_qubo(&p);
        for (i, j, v) in q.entries() {
            if i == j {
                assert_eq!(v, p.w[i]);
            } else {
                assert_eq!(v, 0.0);
            }
        }
        assert_eq!(q.offset, 1.5);
        assert_eq!(fm_to_qubo(&toy()).get(0, 1), 6.0);
    }

    #[test]
    fn fm_equals_offset_plus_qubo_exhaustively() {
        let p = init_params(12, 5, 1.0, 42).unwrap();
        let q = fm_to_qubo(&p);
        for idx in 0..4096 {
            let x = BinaryVector::from_index(idx, 12);
            let diff = fm_eval(&p, &x).unwrap() - (q.offset + qubo_eval(&q, &x).unwrap());
            assert!(diff.abs() < 1e-9);
        }
    }

    #[test]
    fn qubo_eval_cases() {
        let q = QuboMatrix::from_fn(5, |i, j| if i == j { 1.0 } else { 0.0 });
        assert_eq!(qubo_eval(&q, &BinaryVector::zeros(5)).unwrap(), 0.0);
        assert_eq!(qubo_eval(&q, &BinaryVector::ones(5)).unwrap(), 5.0);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = QuboMatrix::from_fn(12, |_, _| rng.gen_range(-1.0..1.0));
        for _ in 0..100 {
            let x = BinaryVector::random(12, &mut rng);
            assert!((qubo_eval(&q, &x).unwrap() - naive_qubo(&q, &x)).abs() < 1e-12);
        }
    }

    #[test]
    fn init_params_properties() {
        let zero = init_params(6, 2, 0.0, 1).unwrap();
        assert_eq!(zero, FmParams::zeros(6, 2));
        assert_eq!(init_params(6, 2, 1.0, 9).unwrap(), init_params(6, 2, 1.0, 9).unwrap());
        assert!(init_params(6, 2, -1.0, 9).is_err());
        assert!(init_params(6, 0, 1.0, 9).is_err());

        let p = init_params(12, 5, 1.0, 7).unwrap();
        let all: Vec<f64> =
            std::iter::once(p.w0).chain(p.w.iter().copied()).chain(p.v_flat().iter().copied()).collect();
        assert_eq!(all.len(), 73);
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let var = all.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (all.len() - 1) as f64;
        assert!((0.5..=1.5).contains(&var), "sample variance {var}");
    }

    #[test]
    fn latent_permutation_invariance() {
        let p = init_params(8, 3, 1.0, 5).unwrap();
        let perm = [2usize, 0, 1];
        let v: Vec<f64> = (0..8).flat_map(|i| perm.iter().map(move |&l| (i, l))).map(|(i, l)| p.v(i, l)).collect();
        let permuted = FmParams::new(p.w0, p.w.clone(), v, 3).unwrap();
        for idx in 0..256 {
            let x = BinaryVector::from_index(idx, 8);
            assert!((fm_eval(&p, &x).unwrap() - fm_eval(&permuted, &x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn default_latent_dim_rule() {
        assert_eq!(default_latent_dim(12), 5);
        assert_eq!(default_latent_dim(20), 9);
        assert_eq!(default_latent_dim(13), 5);
        assert_eq!(default_latent_dim(2), 1);
    }

    #[test]
    fn json_shape() {
        let json = serde_json::to_value(toy()).unwrap();
        assert_eq!(json, serde_json::json!({"w0": 0.0, "w": [0.0, 0.0], "v": [[2.0], [3.0]], "k": 1}));
        let back: FmParams = serde_json::from_value(json).unwrap();
        assert_eq!(back, toy());
        assert!(serde_json::from_str::<FmParams>(r#"{"w0":0,"w":[0],"v":[[1,2]],"k":1}"#).is_err());
    }
}
