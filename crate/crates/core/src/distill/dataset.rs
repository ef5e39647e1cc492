use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::RealMat;
use crate::rng::Rng;

/// Gaussian-blob classification data with optional uniform label noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlobSpec {
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Standard deviation of each cluster around its center.
    pub spread: f64,
    /// Fraction of labels redrawn uniformly from all classes.
    pub noise_rate: f64,
    /// Standard deviation of the cluster centers around the origin.
    pub center_scale: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            classes: 10,
            dim: 16,
            train_per_class: 500,
            test_per_class: 200,
            spread: 1.6,
            noise_rate: 0.1,
            center_scale: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub features: RealMat,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> (RealMat, Vec<usize>) {
        (
            self.features.gather_rows(idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blobs {
    pub train: SyntheticDataset,
    pub test: SyntheticDataset,
    pub centers: RealMat,
}

const CENTERS: u64 = 1;
const TRAIN: u64 = 2;
const TEST: u64 = 3;

/// Draws `classes` centers, then `train_per_class` and `test_per_class`
/// points per class from independent streams, class-major order.
pub fn make_blobs(spec: &BlobSpec) -> Result<Blobs> {
    if spec.classes < 2 {
        return invalid("need at least two classes");
    }
    if spec.dim < 2 {
        return invalid("need at least two feature dimensions");
    }
    if !(spec.spread.is_finite() && spec.spread >= 0.0) {
        return invalid(format!("spread must be finite and nonnegative, got {}", spec.spread));
    }
    if !(0.0..1.0).contains(&spec.noise_rate) {
        return invalid(format!("noise_rate must lie in [0, 1), got {}", spec.noise_rate));
    }
    if !(spec.center_scale.is_finite() && spec.center_scale > 0.0) {
        return invalid("center_scale must be positive");
    }
    if spec.train_per_class == 0 {
        return invalid("train_per_class must be positive");
    }

    let root = Rng::new(spec.seed);
    let mut rng = root.fork(CENTERS);
    let centers: Vec<f64> = (0..spec.classes * spec.dim)
        .map(|_| spec.center_scale * rng.normal())
        .collect();
    let centers = RealMat::new(spec.classes, spec.dim, centers)?;

    let train = sample(spec, &centers, spec.train_per_class, root.fork(TRAIN))?;
    let test = sample(spec, &centers, spec.test_per_class, root.fork(TEST))?;
    Ok(Blobs { train, test, centers })
}

fn sample(spec: &BlobSpec, centers: &RealMat, per_class: usize, mut rng: Rng) -> Result<SyntheticDataset> {
    let n = spec.classes * per_class;
    let mut features = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for class in 0..spec.classes {
        for _ in 0..per_class {
            features.extend(centers.row(class).iter().map(|&c| c + spec.spread * rng.normal()));
            let label = if rng.next_f64() < spec.noise_rate {
                rng.below(spec.classes)
            } else {
                class
            };
            labels.push(label);
        }
    }
    Ok(SyntheticDataset {
        features: RealMat::new(n, spec.dim, features)?,
        labels,
        classes: spec.classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let spec = BlobSpec { train_per_class: 20, test_per_class: 5, ..Default::default() };
        let a = make_blobs(&spec).unwrap();
        let b = make_blobs(&spec).unwrap();
        assert_eq!(a, b);
        let bits = |d: &SyntheticDataset| d.features.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.train), bits(&b.train));
        let c = make_blobs(&BlobSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.train.features, c.train.features);
    }

    #[test]
    fn shapes_and_label_range() {
        let spec = BlobSpec { classes: 4, dim: 3, train_per_class: 7, test_per_class: 2, noise_rate: 0.5, ..Default::default() };
        let b = make_blobs(&spec).unwrap();
        assert_eq!(b.train.len(), 28);
        assert_eq!(b.test.len(), 8);
        assert_eq!(b.train.dim(), 3);
        assert!(b.train.labels.iter().chain(&b.test.labels).all(|&y| y < 4));
    }

    #[test]
    fn train_and_test_are_disjoint() {
        let spec = BlobSpec { train_per_class: 30, test_per_class: 30, ..Default::default() };
        let b = make_blobs(&spec).unwrap();
        for tr in b.train.features.iter_rows() {
            assert!(b.test.features.iter_rows().all(|te| te != tr));
        }
    }

    #[test]
    fn zero_spread_puts_points_on_centers() {
        let spec = BlobSpec { spread: 0.0, noise_rate: 0.0, train_per_class: 3, ..Default::default() };
        let b = make_blobs(&spec).unwrap();
        for (i, row) in b.train.features.iter_rows().enumerate() {
            assert_eq!(row, b.centers.row(b.train.labels[i]));
        }
    }

    #[test]
    fn noise_rate_is_respected() {
        let spec = BlobSpec { classes: 2, noise_rate: 0.5, train_per_class: 5000, test_per_class: 0, ..Default::default() };
        let b = make_blobs(&spec).unwrap();
        let flipped = b
            .train
            .labels
            .iter()
            .enumerate()
            .filter(|(i, &y)| y != i / 5000)
            .count() as f64
            / 10_000.0;
        // half are redrawn, half of those land on the other class
        assert!((flipped - 0.25).abs() < 0.02, "{flipped}");
    }

    #[test]
    fn rejects_invalid_parameters() {
        let ok = BlobSpec::default();
        assert!(make_blobs(&BlobSpec { classes: 1, ..ok.clone() }).is_err());
        assert!(make_blobs(&BlobSpec { dim: 1, ..ok.clone() }).is_err());
        assert!(make_blobs(&BlobSpec { spread: -1.0, ..ok.clone() }).is_err());
        assert!(make_blobs(&BlobSpec { noise_rate: 1.0, ..ok.clone() }).is_err());
    }
}
