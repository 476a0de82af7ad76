//! Low-rank adapter mathematics: `h = W0·x + B·(A·x)` with a frozen `W0`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_RANK: usize = 8;
pub const DEFAULT_SIGMA: f64 = 0.02;
/// Consecutive loss increases that count as divergence.
pub const DIVERGENCE_PATIENCE: usize = 10;
/// Denominator floor for relative gradient error.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Projection {
    #[serde(rename = "W_q")]
    Query,
    #[serde(rename = "W_k")]
    Key,
    #[serde(rename = "W_v")]
    Value,
    #[serde(rename = "W_o")]
    Output,
}

impl Projection {
    pub const ALL: [Projection; 4] = [Projection::Query, Projection::Key, Projection::Value, Projection::Output];
}

/// Which attention projections carry adapters, across how many layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterTargetSet {
    pub targets: BTreeSet<Projection>,
    pub n_layers: usize,
}

impl AdapterTargetSet {
    pub fn all(n_layers: usize) -> Self {
        AdapterTargetSet { targets: Projection::ALL.into(), n_layers }
    }

    /// Trainable parameters with square `d_model × d_model` projections.
    pub fn param_count(&self, d_model: usize, r: usize) -> u64 {
        lora_param_count(d_model, r, self.n_layers, self.targets.len())
    }
}

/// `n_layers × n_targets × r × (d_model + d_model)`: each adapted square
/// projection holds an `r × d_model` A and a `d_model × r` B.
pub fn lora_param_count(d_model: usize, r: usize, n_layers: usize, n_targets: usize) -> u64 {
    n_layers as u64 * n_targets as u64 * r as u64 * 2 * d_model as u64
}

/// A named base-model shape with its published trainable-parameter figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceShape {
    pub name: &'static str,
    pub d_model: usize,
    pub n_layers: usize,
    pub reported_millions: f64,
}

pub const REFERENCE_SHAPES: [ReferenceShape; 3] = [
    ReferenceShape { name: "ecom-tuned-7b", d_model: 4096, n_layers: 32, reported_millions: 8.39 },
    ReferenceShape { name: "ecom-tuned-13b", d_model: 5120, n_layers: 40, reported_millions: 13.11 },
    ReferenceShape { name: "ecom-tuned-30b", d_model: 6656, n_layers: 60, reported_millions: 25.56 },
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LoraError {
    #[error("rank {r} exceeds min(d={d}, k={k})")]
    RankTooLarge { r: usize, d: usize, k: usize },
    #[error("rank must be at least 1")]
    ZeroRank,
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("finite-difference step must lie in (0, 1e-3], got {0}")]
    InvalidEps(f64),
    #[error("learning rate must be positive and finite, got {0}")]
    InvalidLearningRate(f64),
    #[error("loss diverged at step {step} (loss {loss})")]
    Divergence { step: usize, loss: f64 },
}

/// `A` is `r × k`, `B` is `d × r`; the update to a `d × k` base is `B·A`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LoraAdapter {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, LoraError> {
        if b.ncols() != a.nrows() {
            return Err(LoraError::ShapeMismatch(format!(
                "B is {}x{} but A is {}x{}",
                b.nrows(),
                b.ncols(),
                a.nrows(),
                a.ncols()
            )));
        }
        Ok(LoraAdapter { a, b })
    }

    pub fn d(&self) -> usize {
        self.b.nrows()
    }

    pub fn k(&self) -> usize {
        self.a.ncols()
    }

    pub fn r(&self) -> usize {
        self.a.nrows()
    }

    pub fn delta(&self) -> DMatrix<f64> {
        &self.b * &self.a
    }

    pub fn param_count(&self) -> usize {
        self.a.len() + self.b.len()
    }
}

/// `B = 0`; entries of `A` drawn i.i.d. from `N(0, sigma²)` in column-major
/// order from a ChaCha8 stream seeded with `seed`.
pub fn lora_init(d: usize, k: usize, r: usize, seed: u64, sigma: f64) -> Result<LoraAdapter, LoraError> {
    if r == 0 {
        return Err(LoraError::ZeroRank);
    }
    if r > d.min(k) {
        return Err(LoraError::RankTooLarge { r, d, k });
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(LoraError::InvalidSigma(sigma));
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(r, k, |_, _| normal.sample(&mut rng));
    Ok(LoraAdapter { a, b: DMatrix::zeros(d, r) })
}

fn check_shapes(w0: &DMatrix<f64>, adapter: &LoraAdapter, x_len: usize) -> Result<(), LoraError> {
    if w0.nrows() != adapter.d() || w0.ncols() != adapter.k() {
        return Err(LoraError::ShapeMismatch(format!(
            "W0 is {}x{} but the adapter is {}x{}",
            w0.nrows(),
            w0.ncols(),
            adapter.d(),
            adapter.k()
        )));
    }
    if x_len != w0.ncols() {
        return Err(LoraError::ShapeMismatch(format!("x has {x_len} entries, W0 has {} columns", w0.ncols())));
    }
    Ok(())
}

/// `W0·x + B·(A·x)`, never materializing `B·A`.
pub fn lora_forward(w0: &DMatrix<f64>, adapter: &LoraAdapter, x: &DVector<f64>) -> Result<DVector<f64>, LoraError> {
    check_shapes(w0, adapter, x.len())?;
    let ax = &adapter.a * x;
    Ok(w0 * x + &adapter.b * ax)
}

/// `½‖lora_forward(W0, adapter, x) − y‖²`.
pub fn loss(w0: &DMatrix<f64>, adapter: &LoraAdapter, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64, LoraError> {
    let h = lora_forward(w0, adapter, x)?;
    if y.len() != h.len() {
        return Err(LoraError::ShapeMismatch(format!("y has {} entries, output has {}", y.len(), h.len())));
    }
    Ok(0.5 * (h - y).norm_squared())
}

/// Analytic gradients of [`loss`]: `∂/∂A = Bᵀ(h−y)xᵀ`, `∂/∂B = (h−y)(Ax)ᵀ`.
pub fn gradients(
    w0: &DMatrix<f64>,
    adapter: &LoraAdapter,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), LoraError> {
    let h = lora_forward(w0, adapter, x)?;
    if y.len() != h.len() {
        return Err(LoraError::ShapeMismatch(format!("y has {} entries, output has {}", y.len(), h.len())));
    }
    let resid = h - y;
    let ga = adapter.b.transpose() * &resid * x.transpose();
    let gb = &resid * (&adapter.a * x).transpose();
    Ok((ga, gb))
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Largest entrywise relative error between the analytic gradients and
/// central finite differences with step `eps`. The relative error uses
/// `max(|analytic|, |numeric|, 1e-6)` as denominator.
pub fn grad_check(
    w0: &DMatrix<f64>,
    adapter: &LoraAdapter,
    x: &DVector<f64>,
    y: &DVector<f64>,
    eps: f64,
) -> Result<f64, LoraError> {
    if !(eps > 0.0 && eps <= 1e-3) {
        return Err(LoraError::InvalidEps(eps));
    }
    let (ga, gb) = gradients(w0, adapter, x, y)?;
    let mut probe = adapter.clone();
    let mut worst = 0.0f64;
    for i in 0..adapter.a.len() {
        let orig = probe.a[i];
        probe.a[i] = orig + eps;
        let up = loss(w0, &probe, x, y)?;
        probe.a[i] = orig - eps;
        let down = loss(w0, &probe, x, y)?;
        probe.a[i] = orig;
        worst = worst.max(rel_err(ga[i], (up - down) / (2.0 * eps)));
    }
    for i in 0..adapter.b.len() {
        let orig = probe.b[i];
        probe.b[i] = orig + eps;
        let up = loss(w0, &probe, x, y)?;
        probe.b[i] = orig - eps;
        let down = loss(w0, &probe, x, y)?;
        probe.b[i] = orig;
        worst = worst.max(rel_err(gb[i], (up - down) / (2.0 * eps)));
    }
    Ok(worst)
}

/// SHA-256 over the little-endian bit patterns of the entries (column-major)
/// prefixed by the shape.
pub fn matrix_sha256(m: &DMatrix<f64>) -> String {
    let mut h = Sha256::new();
    h.update((m.nrows() as u64).to_le_bytes());
    h.update((m.ncols() as u64).to_le_bytes());
    for v in m.iter() {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyFit {
    pub adapter: LoraAdapter,
    /// Loss before the first step, then after each step.
    pub losses: Vec<f64>,
}

impl ToyFit {
    pub fn reduction(&self) -> f64 {
        let first = self.losses[0];
        let last = *self.losses.last().expect("nonempty");
        if first == 0.0 {
            1.0
        } else {
            1.0 - last / first
        }
    }
}

/// Plain gradient descent on `½‖(W0 + B·A) − target‖²_F`, updating only `A`
/// and `B` from a fresh [`lora_init`]. `W0` is only ever borrowed.
pub fn adapter_fit_toy(
    w0: &DMatrix<f64>,
    target: &DMatrix<f64>,
    r: usize,
    steps: usize,
    lr: f64,
    seed: u64,
    sigma: f64,
) -> Result<ToyFit, LoraError> {
    if target.shape() != w0.shape() {
        return Err(LoraError::ShapeMismatch(format!("target is {:?}, W0 is {:?}", target.shape(), w0.shape())));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(LoraError::InvalidLearningRate(lr));
    }
    let mut adapter = lora_init(w0.nrows(), w0.ncols(), r, seed, sigma)?;
    let delta = target - w0;
    let objective = |ad: &LoraAdapter| 0.5 * (ad.delta() - &delta).norm_squared();
    let mut losses = vec![objective(&adapter)];
    let mut rising = 0;
    for step in 1..=steps {
        let resid = adapter.delta() - &delta;
        let ga = adapter.b.transpose() * &resid;
        let gb = &resid * adapter.a.transpose();
        adapter.a -= lr * ga;
        adapter.b -= lr * gb;
        let l = objective(&adapter);
        if !l.is_finite() {
            return Err(LoraError::Divergence { step, loss: l });
        }
        rising = if l > *losses.last().unwrap() { rising + 1 } else { 0 };
        losses.push(l);
        if rising >= DIVERGENCE_PATIENCE {
            return Err(LoraError::Divergence { step, loss: l });
        }
    }
    Ok(ToyFit { adapter, losses })
}

/// A random `W0` and a target `W0 + U·V` with a planted rank-`r` delta whose
/// factors have entries drawn from `N(0, scale²)`.
pub fn planted_problem(d: usize, k: usize, r: usize, seed: u64, scale: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let w0 = DMatrix::from_fn(d, k, |_, _| std.sample(&mut rng));
    let u = DMatrix::from_fn(d, r, |_, _| scale * std.sample(&mut rng));
    let v = DMatrix::from_fn(r, k, |_, _| scale * std.sample(&mut rng));
    let target = &w0 + u * v;
    (w0, target)
}

/// Random matrix with standard normal entries.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    DMatrix::from_fn(rows, cols, |_, _| std.sample(&mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use forge_oracles::{oracle_dense_lora, oracle_fd_gradient, oracle_moments, oracle_rank_r_residual, Dense};
    use proptest::prelude::*;

    fn dense(m: &DMatrix<f64>) -> Dense {
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
    }

    fn random_adapter(d: usize, k: usize, r: usize, seed: u64) -> LoraAdapter {
        LoraAdapter::new(random_matrix(r, k, seed), random_matrix(d, r, seed + 1)).unwrap()
    }

    #[test]
    fn init_zero_b_and_rank_guard() {
        for (d, k, r, s) in [(8, 8, 2, 0), (16, 4, 4, 9), (3, 5, 1, 7)] {
            let a = lora_init(d, k, r, s, DEFAULT_SIGMA).unwrap();
            assert!(a.b.iter().all(|&v| v == 0.0));
            assert_eq!((a.a.shape(), a.b.shape()), ((r, k), (d, r)));
        }
        assert_eq!(lora_init(4, 6, 5, 0, 0.02), Err(LoraError::RankTooLarge { r: 5, d: 4, k: 6 }));
        assert_eq!(lora_init(4, 6, 0, 0, 0.02), Err(LoraError::ZeroRank));
        assert!(lora_init(4, 6, 2, 0, 0.0).is_err());
        assert_eq!(lora_init(8, 8, 2, 3, 0.02), lora_init(8, 8, 2, 3, 0.02));
    }

    #[test]
    fn init_moments_within_three_sigma() {
        let sigma = 0.02;
        let xs: Vec<f64> = (0..10_000u64).flat_map(|s| lora_init(8, 8, 2, s, sigma).unwrap().a.data.as_vec().clone()).collect();
        let n = xs.len() as f64;
        let (mean, var) = oracle_moments(&xs);
        assert!(mean.abs() <= 3.0 * sigma / n.sqrt(), "mean {mean}");
        let var_sd = sigma * sigma * (2.0 / (n - 1.0)).sqrt();
        assert!((var - sigma * sigma).abs() <= 3.0 * var_sd, "var {var}");
    }

    #[test]
    fn zero_b_forward_is_base_forward() {
        let w0 = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let ad = lora_init(2, 3, 2, 1, 0.5).unwrap();
        let x = DVector::from_vec(vec![1.0, -1.0, 2.0]);
        assert_eq!(lora_forward(&w0, &ad, &x).unwrap(), &w0 * &x);
        assert_eq!(lora_forward(&w0, &ad, &DVector::zeros(3)).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn small_integer_dense_equivalence() {
        let w0 = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 2.0, -1.0, 3.0, 1.0, 0.0, 1.0, 1.0]);
        let a = DMatrix::from_row_slice(1, 3, &[2.0, -1.0, 1.0]);
        let b = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, -2.0]);
        let ad = LoraAdapter::new(a.clone(), b.clone()).unwrap();
        let x = DVector::from_vec(vec![3.0, 1.0, -2.0]);
        let want = oracle_dense_lora(&dense(&w0), &dense(&a), &dense(&b), x.as_slice()).unwrap();
        assert_eq!(lora_forward(&w0, &ad, &x).unwrap().as_slice(), want.as_slice());
    }

    #[test]
    fn shape_mismatch() {
        let ad = lora_init(3, 3, 1, 0, 0.1).unwrap();
        assert!(matches!(lora_forward(&DMatrix::zeros(3, 4), &ad, &DVector::zeros(4)), Err(LoraError::ShapeMismatch(_))));
        assert!(matches!(lora_forward(&DMatrix::zeros(3, 3), &ad, &DVector::zeros(2)), Err(LoraError::ShapeMismatch(_))));
        assert!(LoraAdapter::new(DMatrix::zeros(2, 3), DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn table_two_counts() {
        let want = [8_388_608u64, 13_107_200, 25_559_040];
        for (shape, w) in REFERENCE_SHAPES.iter().zip(want) {
            let n = AdapterTargetSet::all(shape.n_layers).param_count(shape.d_model, 8);
            assert_eq!(n, w);
            assert_eq!((n as f64 / 1e4).round() / 100.0, shape.reported_millions);
        }
        assert_eq!(lora_param_count(4096, 0, 32, 4), 0);
    }

    #[test]
    fn analytic_gradients_match_fd_oracle() {
        for seed in 0..20 {
            let (d, k, r) = (8, 8, 2);
            let w0 = random_matrix(d, k, seed * 10);
            let ad = random_adapter(d, k, r, seed * 10 + 2);
            let x = DVector::from_column_slice(random_matrix(k, 1, seed * 10 + 4).as_slice());
            let y = DVector::from_column_slice(random_matrix(d, 1, seed * 10 + 5).as_slice());
            let (ga, gb) = gradients(&w0, &ad, &x, &y).unwrap();
            let flat: Vec<f64> = ad.a.iter().chain(ad.b.iter()).copied().collect();
            let f = |p: &[f64]| {
                let a = DMatrix::from_column_slice(r, k, &p[..r * k]);
                let b = DMatrix::from_column_slice(d, r, &p[r * k..]);
                loss(&w0, &LoraAdapter { a, b }, &x, &y).unwrap()
            };
            let fd = oracle_fd_gradient(f, &flat, 1e-5).unwrap();
            for (an, nu) in ga.iter().chain(gb.iter()).zip(&fd) {
                assert!((an - nu).abs() <= 1e-4 * an.abs().max(nu.abs()).max(1e-6), "{an} vs {nu}");
            }
            assert!(grad_check(&w0, &ad, &x, &y, 1e-5).unwrap() <= 1e-4);
        }
    }

    #[test]
    fn stationary_point_and_eps_guard() {
        let w0 = random_matrix(4, 4, 1);
        let ad = random_adapter(4, 4, 2, 3);
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let y = lora_forward(&w0, &ad, &x).unwrap();
        let (ga, gb) = gradients(&w0, &ad, &x, &y).unwrap();
        assert!(ga.iter().chain(gb.iter()).all(|&v| v == 0.0));
        assert_eq!(grad_check(&w0, &ad, &x, &y, 0.0), Err(LoraError::InvalidEps(0.0)));
        assert!(grad_check(&w0, &ad, &x, &y, 2e-3).is_err());
    }

    #[test]
    fn toy_fit_recovers_planted_delta() {
        let (w0, target) = planted_problem(16, 16, 2, 11, 0.5);
        let before = matrix_sha256(&w0);
        let fit = adapter_fit_toy(&w0, &target, 2, 500, 0.05, 3, 0.5).unwrap();
        assert_eq!(matrix_sha256(&w0), before);
        assert!(fit.reduction() >= 0.99, "reduction {}", fit.reduction());
        let optimum = oracle_rank_r_residual(&dense(&(&target - &w0)), 2).unwrap();
        let last = *fit.losses.last().unwrap();
        assert!(last >= optimum - 1e-9);
        assert!(optimum <= 1e-6 * fit.losses[0]);
    }

    #[test]
    fn toy_fit_identity_and_divergence() {
        let w0 = random_matrix(6, 6, 2);
        let fit = adapter_fit_toy(&w0, &w0, 2, 20, 0.1, 0, 0.02).unwrap();
        assert_eq!(fit.losses[0], 0.0);
        assert_eq!(fit.adapter, lora_init(6, 6, 2, 0, 0.02).unwrap());
        let (w0, target) = planted_problem(16, 16, 2, 11, 0.5);
        assert!(matches!(adapter_fit_toy(&w0, &target, 2, 500, 1e3, 3, 0.5), Err(LoraError::Divergence { .. })));
    }

    proptest! {
        #[test]
        fn dense_equivalence(d in 1usize..24, k in 1usize..24, seed in 0u64..1000) {
            let r = 1 + (seed as usize % d.min(k));
            let w0 = random_matrix(d, k, seed);
            let ad = random_adapter(d, k, r, seed + 7);
            let x = DVector::from_column_slice(random_matrix(k, 1, seed + 9).as_slice());
            let h = lora_forward(&w0, &ad, &x).unwrap();
            let want = oracle_dense_lora(&dense(&w0), &dense(&ad.a), &dense(&ad.b), x.as_slice()).unwrap();
            let diff: f64 = h.iter().zip(&want).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(diff <= 1e-12 * h.norm().max(1.0));
        }

        #[test]
        fn count_is_linear(d in 1usize..10_000, r in 0usize..64, l in 0usize..100, t in 1usize..5) {
            prop_assert_eq!(lora_param_count(d, 2 * r, l, t), 2 * lora_param_count(d, r, l, t));
            prop_assert_eq!(lora_param_count(d, r, 3 * l, t), 3 * lora_param_count(d, r, l, t));
            prop_assert_eq!(lora_param_count(d, r, l, t), t as u64 * lora_param_count(d, r, l, 1));
        }
    }
}
