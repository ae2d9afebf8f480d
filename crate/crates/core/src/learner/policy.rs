use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{LearnerError, Mlp};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Diagonal Gaussian policy with a state-independent log-std.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: &[usize],
        act_dim: usize,
        init_log_std: f64,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(act_dim);
        Self {
            mean: Mlp::new(&sizes, 0.01, rng),
            log_std: vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); act_dim],
        }
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn log_std(&self) -> Vec<f64> {
        self.log_std
            .iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect()
    }

    pub fn means(&self, obs: ArrayView2<'_, f64>) -> Result<Array2<f64>, LearnerError> {
        let m = self.mean.forward(obs);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::NonFinite("policy mean".into()));
        }
        Ok(m)
    }

    /// Samples one action per row (or returns the means), with exact log-probs.
    pub fn act_batch<R: Rng>(
        &self,
        obs: ArrayView2<'_, f64>,
        rngs: &mut [R],
        deterministic: bool,
    ) -> Result<(Array2<f64>, Vec<f64>), LearnerError> {
        let means = self.means(obs)?;
        let log_std = self.log_std();
        let mut actions = means.clone();
        if !deterministic {
            for (mut row, rng) in actions.rows_mut().into_iter().zip(rngs.iter_mut()) {
                for (a, ls) in row.iter_mut().zip(&log_std) {
                    let z: f64 = StandardNormal.sample(rng);
                    *a += ls.exp() * z;
                }
            }
        }
        let logps = means
            .rows()
            .into_iter()
            .zip(actions.rows())
            .map(|(m, a)| log_prob(m.as_slice().unwrap(), &log_std, a.as_slice().unwrap()))
            .collect();
        Ok((actions, logps))
    }

    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        rng: &mut R,
        deterministic: bool,
    ) -> Result<(Vec<f64>, f64), LearnerError> {
        let view = ArrayView2::from_shape((1, obs.len()), obs)
            .map_err(|e| LearnerError::Shape(e.to_string()))?;
        let mut one = [rng];
        let (a, lp) = self.act_batch(view, &mut one, deterministic)?;
        Ok((a.row(0).to_vec(), lp[0]))
    }

    /// Entropy of the action distribution (independent of the state).
    pub fn entropy(&self) -> f64 {
        self.log_std()
            .iter()
            .map(|ls| ls + 0.5 * (2.0 * PI * std::f64::consts::E).ln())
            .sum()
    }
}

/// Log-density of `a` under `N(mean, diag(exp(log_std))^2)`.
pub fn log_prob(mean: &[f64], log_std: &[f64], a: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(a)
        .map(|((m, ls), x)| {
            let z = (x - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn log_prob_matches_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let mean: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let ls: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let density: f64 = (0..3)
                .map(|i| {
                    let s = ls[i].exp();
                    (-(a[i] - mean[i]).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt())
                })
                .product();
            assert!((log_prob(&mean, &ls, &a).exp() - density).abs() < 1e-9);
        }
    }

    #[test]
    fn acting() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pi = GaussianPolicy::new(3, &[8], 2, -0.5, &mut rng);
        let obs = [0.1, -0.4, 0.9];
        let (a1, _) = pi.act(&obs, &mut rng, true).unwrap();
        let (a2, lp_mean) = pi.act(&obs, &mut rng, true).unwrap();
        assert_eq!(a1, a2);
        let ls = pi.log_std();
        let far: Vec<f64> = a1.iter().zip(&ls).map(|(m, l)| m + 2.0 * l.exp()).collect();
        assert!(lp_mean >= log_prob(&a1, &ls, &far));

        let n = 10_000;
        let mut sq = [0.0; 2];
        for _ in 0..n {
            let (a, lp) = pi.act(&obs, &mut rng, false).unwrap();
            assert!((lp - log_prob(&a1, &ls, &a)).abs() < 1e-12);
            for d in 0..2 {
                sq[d] += (a[d] - a1[d]).powi(2) / n as f64;
            }
        }
        for d in 0..2 {
            let rel = (sq[d].sqrt() - ls[d].exp()).abs() / ls[d].exp();
            assert!(rel < 0.05, "dim {d}: {rel}");
        }

        pi.log_std = vec![10.0, -10.0];
        assert_eq!(pi.log_std(), vec![LOG_STD_MAX, LOG_STD_MIN]);
    }
}
