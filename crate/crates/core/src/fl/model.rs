//! Small classifiers trained by the simulated clients.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::data::Shard;
use super::TrainingError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Multinomial logistic regression: `classes * (dim + 1)` parameters.
    #[default]
    LogisticRegression,
    /// One tanh hidden layer with a softmax head.
    #[serde(rename = "mlp_1hidden")]
    Mlp1Hidden,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub architecture: Architecture,
    pub dim: usize,
    pub classes: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

pub fn parameter_count(architecture: Architecture, dim: usize, classes: usize, hidden: usize) -> usize {
    match architecture {
        Architecture::LogisticRegression => classes * (dim + 1),
        Architecture::Mlp1Hidden => hidden * (dim + 1) + classes * (hidden + 1),
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

impl Model {
    /// Logistic regression starts at zero; the MLP gets scaled Gaussian weights.
    pub fn new<R: Rng + ?Sized>(
        architecture: Architecture,
        dim: usize,
        classes: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let l = parameter_count(architecture, dim, classes, hidden);
        let mut params = vec![0.0; l];
        if architecture == Architecture::Mlp1Hidden {
            let w1 = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("positive std");
            let w2 = Normal::new(0.0, 1.0 / (hidden as f64).sqrt()).expect("positive std");
            let (layer1, layer2) = params.split_at_mut(hidden * (dim + 1));
            for (i, p) in layer1.iter_mut().enumerate() {
                if i % (dim + 1) != dim {
                    *p = w1.sample(rng);
                }
            }
            for (i, p) in layer2.iter_mut().enumerate() {
                if i % (hidden + 1) != hidden {
                    *p = w2.sample(rng);
                }
            }
        }
        Model {
            architecture,
            dim,
            classes,
            hidden,
            params,
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Class probabilities, plus hidden activations for the MLP.
    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match self.architecture {
            Architecture::LogisticRegression => {
                let mut z: Vec<f64> = self
                    .params
                    .chunks_exact(self.dim + 1)
                    .map(|row| row[..self.dim].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + row[self.dim])
                    .collect();
                softmax_in_place(&mut z);
                (z, Vec::new())
            }
            Architecture::Mlp1Hidden => {
                let (l1, l2) = self.params.split_at(self.hidden * (self.dim + 1));
                let h: Vec<f64> = l1
                    .chunks_exact(self.dim + 1)
                    .map(|row| {
                        (row[..self.dim].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + row[self.dim]).tanh()
                    })
                    .collect();
                let mut z: Vec<f64> = l2
                    .chunks_exact(self.hidden + 1)
                    .map(|row| row[..self.hidden].iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + row[self.hidden])
                    .collect();
                softmax_in_place(&mut z);
                (z, h)
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let (p, _) = self.forward(x);
        p.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(c, _)| c)
    }

    pub fn accuracy(&self, data: &Shard) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let correct = data
            .features
            .iter()
            .zip(&data.labels)
            .filter(|(x, &y)| self.predict(x) == y)
            .count();
        correct as f64 / data.len() as f64
    }

    /// Mean cross-entropy over the rows `idx` of `data`.
    pub fn loss(&self, data: &Shard, idx: &[usize]) -> f64 {
        idx.iter()
            .map(|&i| -self.forward(&data.features[i]).0[data.labels[i]].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / idx.len() as f64
    }

    /// Gradient of [`Model::loss`].
    pub fn gradient(&self, data: &Shard, idx: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; self.params.len()];
        let d = self.dim;
        for &i in idx {
            let x = &data.features[i];
            let (mut p, h) = self.forward(x);
            p[data.labels[i]] -= 1.0;
            match self.architecture {
                Architecture::LogisticRegression => {
                    for (c, &err) in p.iter().enumerate() {
                        let row = &mut g[c * (d + 1)..(c + 1) * (d + 1)];
                        for (gw, xv) in row[..d].iter_mut().zip(x) {
                            *gw += err * xv;
                        }
                        row[d] += err;
                    }
                }
                Architecture::Mlp1Hidden => {
                    let hd = self.hidden;
                    let split = hd * (d + 1);
                    let l2 = &self.params[split..];
                    let mut dh = vec![0.0; hd];
                    for (c, &err) in p.iter().enumerate() {
                        let base = split + c * (hd + 1);
                        for j in 0..hd {
                            g[base + j] += err * h[j];
                            dh[j] += err * l2[c * (hd + 1) + j];
                        }
                        g[base + hd] += err;
                    }
                    for j in 0..hd {
                        let dz = dh[j] * (1.0 - h[j] * h[j]);
                        let row = &mut g[j * (d + 1)..(j + 1) * (d + 1)];
                        for (gw, xv) in row[..d].iter_mut().zip(x) {
                            *gw += dz * xv;
                        }
                        row[d] += dz;
                    }
                }
            }
        }
        let n = idx.len() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        g
    }

    pub fn apply(&mut self, delta: &[f64]) {
        for (p, d) in self.params.iter_mut().zip(delta) {
            *p += d;
        }
    }
}

/// One local SGD step: `-lr * grad` over a random batch, clipped to `[-clip, clip]`.
pub fn local_step<R: Rng + ?Sized>(
    model: &Model,
    shard: &Shard,
    lr: f64,
    batch: usize,
    clip: f64,
    rng: &mut R,
) -> Result<Vec<f64>, TrainingError> {
    if shard.is_empty() {
        return Err(TrainingError::EmptyShard);
    }
    let idx: Vec<usize> = if batch == 0 || batch >= shard.len() {
        (0..shard.len()).collect()
    } else {
        rand::seq::index::sample(rng, shard.len(), batch).into_vec()
    };
    let g = model.gradient(shard, &idx);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(TrainingError::Divergence);
    }
    Ok(g.iter().map(|v| (-lr * v).clamp(-clip, clip)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy() -> Shard {
        Shard {
            features: vec![vec![1.0, 2.0], vec![-0.5, 0.25]],
            labels: vec![1, 0],
        }
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(parameter_count(Architecture::LogisticRegression, 20, 2, 0), 42);
        assert_eq!(parameter_count(Architecture::Mlp1Hidden, 20, 2, 45), 1037);
    }

    #[test]
    fn zero_gradient_gives_zero_update() {
        // symmetric data at zero weights: class errors cancel
        let shard = Shard {
            features: vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            labels: vec![0, 1],
        };
        let m = Model::new(Architecture::LogisticRegression, 2, 2, 0, &mut ChaCha20Rng::seed_from_u64(0));
        let u = local_step(&m, &shard, 0.5, 0, 10.0, &mut ChaCha20Rng::seed_from_u64(0)).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn logistic_gradient_matches_hand_computation() {
        let mut m = Model::new(Architecture::LogisticRegression, 2, 2, 0, &mut ChaCha20Rng::seed_from_u64(0));
        m.params = vec![0.3, -0.2, 0.1, -0.4, 0.5, 0.0];
        let data = toy();
        let g = m.gradient(&data, &[0, 1]);
        // independent: dL/dW_c = mean over rows of (softmax_c - onehot_c) * [x, 1]
        let mut expected = [0.0; 6];
        for (x, &y) in data.features.iter().zip(&data.labels) {
            let z0 = 0.3 * x[0] - 0.2 * x[1] + 0.1;
            let z1 = -0.4 * x[0] + 0.5 * x[1];
            let p1 = 1.0 / (1.0 + (z0 - z1).exp());
            let p0 = 1.0 - p1;
            let e = [p0 - (y == 0) as u8 as f64, p1 - (y == 1) as u8 as f64];
            for c in 0..2 {
                expected[3 * c] += e[c] * x[0] / 2.0;
                expected[3 * c + 1] += e[c] * x[1] / 2.0;
                expected[3 * c + 2] += e[c] / 2.0;
            }
        }
        for (a, b) in g.iter().zip(expected) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    fn finite_difference_check(architecture: Architecture) {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let dim = 5;
        let m = Model::new(architecture, dim, 3, 7, &mut rng);
        let mut m = m;
        let normal = Normal::new(0.0, 0.7).unwrap();
        for p in &mut m.params {
            *p = normal.sample(&mut rng);
        }
        let data = Shard {
            features: (0..6).map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect()).collect(),
            labels: (0..6).map(|i| i % 3).collect(),
        };
        let idx: Vec<usize> = (0..6).collect();
        let g = m.gradient(&data, &idx);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for k in 0..m.len() {
            let mut plus = m.clone();
            plus.params[k] += h;
            let mut minus = m.clone();
            minus.params[k] -= h;
            let fd = (plus.loss(&data, &idx) - minus.loss(&data, &idx)) / (2.0 * h);
            let rel = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-3);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        finite_difference_check(Architecture::LogisticRegression);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        finite_difference_check(Architecture::Mlp1Hidden);
    }

    #[test]
    fn divergence_and_empty_shard() {
        let mut m = Model::new(Architecture::LogisticRegression, 2, 2, 0, &mut ChaCha20Rng::seed_from_u64(0));
        m.params[0] = f64::NAN;
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert!(matches!(local_step(&m, &toy(), 0.1, 0, 1.0, &mut rng), Err(TrainingError::Divergence)));
        let empty = Shard::default();
        assert!(matches!(local_step(&m, &empty, 0.1, 0, 1.0, &mut rng), Err(TrainingError::EmptyShard)));
    }
}
