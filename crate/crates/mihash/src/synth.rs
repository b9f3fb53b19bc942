//! Synthetic labeled datasets for experiments and tests.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::io::Dataset;
use crate::seeds::{stream::SYNTH, sub_rng};
use crate::types::Example;

/// Generates `n` examples in `dim` dimensions from `classes` Gaussian
/// clusters with isotropic standard deviation `spread`.
///
/// The first `min(classes, dim)` cluster centers are unit basis
/// vectors; any further centers are random unit vectors. Labels cycle
/// `0..classes` so every class appears. `spread = 0` yields exact
/// centers. Deterministic in `seed`.
pub fn gaussian_clusters(
    n: usize,
    dim: usize,
    classes: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::domain("n must be positive".to_string()));
    }
    if dim == 0 {
        return Err(Error::domain("dim must be positive".to_string()));
    }
    if classes == 0 || classes > n {
        return Err(Error::domain(format!(
            "classes must be in 1..={n}, got {classes}"
        )));
    }
    if !spread.is_finite() || spread < 0.0 {
        return Err(Error::domain(format!("spread must be finite and >= 0, got {spread}")));
    }

    let mut rng = sub_rng(seed, SYNTH);
    let mut centers = Vec::with_capacity(classes);
    for c in 0..classes.min(dim) {
        let mut center = vec![0.0; dim];
        center[c] = 1.0;
        centers.push(center);
    }
    while centers.len() < classes {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            continue;
        }
        centers.push(v.into_iter().map(|x| x / norm).collect());
    }

    let examples = (0..n)
        .map(|i| {
            let class = i % classes;
            let features = centers[class]
                .iter()
                .map(|&c| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    c + spread * noise
                })
                .collect();
            Example::new(i as u64, features, Some(class as i32))
        })
        .collect();
    Dataset::new(examples)
}
