//! Gaussian-mixture stand-in with a utility and a privacy label.
//!
//! Each row is `Q (μ_u + ν_p + ε)` where `μ_u` lives in latent dims 0..3,
//! `ν_p` in latent dims 2..5 (the overlap makes the two tasks compete for
//! dimension 2), `ε` is standard normal noise and `Q` a random rotation.
//! Column `j` is then scaled by `1 + j` so that raw features need
//! standardization.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{LabeledDataset, Target};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_features: usize,
    pub utility_classes: usize,
    pub privacy_classes: usize,
    pub per_combination: usize,
    /// Scale of the utility class means.
    pub utility_separation: f64,
    /// Scale of the privacy class means.
    pub privacy_separation: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_features: 8,
            utility_classes: 3,
            privacy_classes: 2,
            per_combination: 60,
            utility_separation: 2.5,
            privacy_separation: 1.5,
            seed: 17,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn generate(spec: &SyntheticSpec) -> LabeledDataset {
    let m = spec.n_features;
    assert!(m >= 5, "synthetic data needs at least 5 features");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gauss = DMatrix::from_fn(m, m, |_, _| normal(&mut rng));
    let rotation = gauss.qr().q();

    let mean_in = |rng: &mut ChaCha8Rng, dims: std::ops::Range<usize>, scale: f64| {
        let mut v = vec![0.0; m];
        for d in dims {
            v[d] = scale * normal(rng);
        }
        v
    };
    let utility_means: Vec<Vec<f64>> = (0..spec.utility_classes)
        .map(|_| mean_in(&mut rng, 0..3, spec.utility_separation))
        .collect();
    let privacy_means: Vec<Vec<f64>> = (0..spec.privacy_classes)
        .map(|_| mean_in(&mut rng, 2..5, spec.privacy_separation))
        .collect();

    let n = spec.utility_classes * spec.privacy_classes * spec.per_combination;
    let mut latent = Matrix::zeros(n, m);
    let mut labels_u = Vec::with_capacity(n);
    let mut labels_p = Vec::with_capacity(n);
    let mut row = 0;
    for (u, u_mean) in utility_means.iter().enumerate() {
        for (p, p_mean) in privacy_means.iter().enumerate() {
            for _ in 0..spec.per_combination {
                for j in 0..m {
                    latent[(row, j)] = u_mean[j] + p_mean[j] + normal(&mut rng);
                }
                labels_u.push(u);
                labels_p.push(p);
                row += 1;
            }
        }
    }
    let mut features = latent * rotation.transpose();
    for (j, mut col) in features.column_iter_mut().enumerate() {
        col *= 1.0 + j as f64;
    }

    let names = |prefix: &str, k: usize| (0..k).map(|c| format!("{prefix}{c}")).collect::<Vec<_>>();
    LabeledDataset {
        features,
        feature_names: names("x", m),
        targets: vec![
            Target {
                name: "utility".into(),
                classes: names("u", spec.utility_classes),
                labels: labels_u,
            },
            Target {
                name: "privacy".into(),
                classes: names("p", spec.privacy_classes),
                labels: labels_p,
            },
        ],
        source_rows: (0..n).collect(),
        role: None,
    }
}
