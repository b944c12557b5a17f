//! Bilinear softmax policy over a query's candidate pool.
//!
//! `score(q, a) = qᵀ W a` and `π(a | q) = softmax(score / T)` over the pool.
//! Sharing `W` across queries lets learning transfer through embedding
//! geometry instead of per-query logits.

use serde::{Deserialize, Serialize};

use crate::encoder::dot;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPolicy {
    dimension: usize,
    /// Row-major `d × d`.
    weights: Vec<f64>,
    temperature: f64,
}

impl SimPolicy {
    /// Uniform policy: `W = 0`.
    pub fn new(dimension: usize, temperature: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidConfig("policy dimension must be > 0".into()));
        }
        if temperature <= 0.0 || !temperature.is_finite() {
            return Err(Error::InvalidConfig("temperature must be positive".into()));
        }
        Ok(Self {
            dimension,
            weights: vec![0.0; dimension * dimension],
            temperature,
        })
    }

    pub fn with_weights(dimension: usize, weights: Vec<f64>, temperature: f64) -> Result<Self> {
        let mut p = Self::new(dimension, temperature)?;
        if weights.len() != dimension * dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension * dimension,
                found: weights.len(),
            });
        }
        p.weights = weights;
        Ok(p)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// `Wᵀ q`, so that `score(q, a) = (Wᵀ q) · a`.
    fn project(&self, query: &[f64]) -> Vec<f64> {
        let d = self.dimension;
        let mut u = vec![0.0; d];
        for (i, &qi) in query.iter().enumerate() {
            if qi == 0.0 {
                continue;
            }
            let row = &self.weights[i * d..(i + 1) * d];
            u.iter_mut().zip(row).for_each(|(x, w)| *x += qi * w);
        }
        u
    }

    /// Raw scores for a row-major candidate matrix.
    pub fn scores(&self, query: &[f64], candidates: &[f64]) -> Vec<f64> {
        let u = self.project(query);
        candidates.chunks_exact(self.dimension).map(|a| dot(&u, a)).collect()
    }

    /// Sampling distribution over the candidates.
    pub fn probabilities(&self, query: &[f64], candidates: &[f64]) -> Vec<f64> {
        softmax(&self.scores(query, candidates), self.temperature)
    }

    pub fn log_probabilities(&self, query: &[f64], candidates: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = self.scores(query, candidates).iter().map(|s| s / self.temperature).collect();
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        z.into_iter().map(|x| x - lse).collect()
    }

    /// `Σ_i adv_i · log π(picks_i | q)`.
    pub fn surrogate(&self, query: &[f64], candidates: &[f64], picks: &[usize], advantages: &[f64]) -> f64 {
        let lp = self.log_probabilities(query, candidates);
        picks.iter().zip(advantages).map(|(&p, a)| a * lp[p]).sum()
    }

    /// Gradient of [`surrogate`](Self::surrogate) with respect to `W`:
    /// `(1/T) Σ_i adv_i · q (a_i − E_π[a])ᵀ`.
    pub fn surrogate_gradient(
        &self,
        query: &[f64],
        candidates: &[f64],
        picks: &[usize],
        advantages: &[f64],
    ) -> Vec<f64> {
        let d = self.dimension;
        let probs = self.probabilities(query, candidates);
        let mut mean = vec![0.0; d];
        for (p, a) in probs.iter().zip(candidates.chunks_exact(d)) {
            mean.iter_mut().zip(a).for_each(|(m, x)| *m += p * x);
        }
        let adv_sum: f64 = advantages.iter().sum();
        // direction = Σ adv_i a_i − (Σ adv_i) E[a]
        let mut direction: Vec<f64> = mean.iter().map(|m| -adv_sum * m).collect();
        for (&p, &adv) in picks.iter().zip(advantages) {
            let a = &candidates[p * d..(p + 1) * d];
            direction.iter_mut().zip(a).for_each(|(x, ai)| *x += adv * ai);
        }
        let mut grad = vec![0.0; d * d];
        for (i, &qi) in query.iter().enumerate() {
            let scale = qi / self.temperature;
            grad[i * d..(i + 1) * d]
                .iter_mut()
                .zip(&direction)
                .for_each(|(g, x)| *g = scale * x);
        }
        grad
    }

    /// `W += step · grad`.
    pub fn ascend(&mut self, grad: &[f64], step: f64) {
        self.weights.iter_mut().zip(grad).for_each(|(w, g)| *w += step * g);
    }
}

pub fn softmax(scores: &[f64], temperature: f64) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| ((s - m) / temperature).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_are_uniform() {
        let p = SimPolicy::new(3, 1.0).unwrap();
        let cands = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.5, 0.0];
        let probs = p.probabilities(&[0.2, 0.3, 0.4], &cands);
        assert!(probs.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn scores_match_bilinear_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = 4;
        let w: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = SimPolicy::with_weights(d, w.clone(), 0.7).unwrap();
        let q: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut oracle = 0.0;
        for i in 0..d {
            for j in 0..d {
                oracle += q[i] * w[i * d + j] * a[j];
            }
        }
        assert!((p.scores(&q, &a)[0] - oracle).abs() < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one_for_extreme_scores() {
        let probs = softmax(&[1e3, -1e3, 0.0, 999.0], 0.1);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(probs.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(SimPolicy::new(0, 1.0).is_err());
        assert!(SimPolicy::new(2, 0.0).is_err());
        assert!(SimPolicy::with_weights(2, vec![0.0; 3], 1.0).is_err());
    }
}
