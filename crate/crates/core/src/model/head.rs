//! Softmax classification head over a concatenated relation representation.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelError, ReprScheme};

/// Affine map from the scheme representation to class probabilities.
#[derive(Debug, Clone)]
pub struct RelationHead {
    scheme: ReprScheme,
    classes: Vec<String>,
    weight: Array2<f64>,
    bias: Array1<f64>,
}

impl RelationHead {
    /// Randomly initialized head for `scheme` over an encoder of the given
    /// hidden size.
    pub fn new(scheme: ReprScheme, classes: Vec<String>, hidden: usize, seed: u64) -> Self {
        let dim = scheme.dim(hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.02).expect("valid distribution");
        let weight =
            Array2::from_shape_simple_fn((dim, classes.len()), || normal.sample(&mut rng));
        let bias = Array1::zeros(classes.len());
        RelationHead {
            scheme,
            classes,
            weight,
            bias,
        }
    }

    pub fn from_parts(
        scheme: ReprScheme,
        classes: Vec<String>,
        weight: Array2<f64>,
        bias: Array1<f64>,
    ) -> Result<Self, ModelError> {
        if weight.ncols() != classes.len() || bias.len() != classes.len() {
            return Err(ModelError::InvalidShape(format!(
                "head weight {}x{} and bias {} do not match {} classes",
                weight.nrows(),
                weight.ncols(),
                bias.len(),
                classes.len()
            )));
        }
        Ok(RelationHead {
            scheme,
            classes,
            weight,
            bias,
        })
    }

    pub fn scheme(&self) -> ReprScheme {
        self.scheme
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn weight(&self) -> &Array2<f64> {
        &self.weight
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    /// Pre-softmax scores, `[batch, classes]`.
    pub fn logits(&self, representations: &Array2<f64>) -> Array2<f64> {
        let mut logits = representations.dot(&self.weight);
        logits += &self.bias;
        logits
    }

    /// Class probabilities; every row sums to 1.
    pub fn forward(&self, representations: &Array2<f64>) -> Array2<f64> {
        softmax_rows(&self.logits(representations))
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_parameters());
        flat.extend(self.weight.iter());
        flat.extend(self.bias.iter());
        flat
    }

    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        if flat.len() != self.num_parameters() {
            return Err(ModelError::InvalidShape(format!(
                "head parameter vector has {} values, expected {}",
                flat.len(),
                self.num_parameters()
            )));
        }
        let split = self.weight.len();
        for (slot, value) in self.weight.iter_mut().zip(&flat[..split]) {
            *slot = *value;
        }
        for (slot, value) in self.bias.iter_mut().zip(&flat[split..]) {
            *slot = *value;
        }
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn classes(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("C{i}")).collect()
    }

    #[test]
    fn rows_are_probability_vectors() {
        let head = RelationHead::new(ReprScheme::ClsStarts, classes(4), 8, 13);
        let reps = Array2::from_shape_fn((5, 24), |(i, j)| (i as f64 - j as f64) / 7.0);
        let probs = head.forward(&reps);
        assert_eq!(probs.dim(), (5, 4));
        for row in probs.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn zero_parameters_give_uniform_rows() {
        let mut head = RelationHead::new(ReprScheme::ClsOnly, classes(5), 4, 13);
        head.set_parameters(&vec![0.0; head.num_parameters()]).unwrap();
        let probs = head.forward(&array![[1.0, -2.0, 0.5, 3.0]]);
        for &p in probs.row(0) {
            assert!((p - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_stable_under_constant_logit_shift() {
        let head = RelationHead::new(ReprScheme::StartsOnly, classes(3), 4, 7);
        let reps = Array2::from_shape_fn((4, 8), |(i, j)| ((i * 31 + j * 17) % 11) as f64 / 3.0);
        let logits = head.logits(&reps);
        let shifted = &logits + 42.0;
        let a = softmax_rows(&logits);
        let b = softmax_rows(&shifted);
        for (ra, rb) in a.rows().into_iter().zip(b.rows()) {
            let am = ra.iter().enumerate().max_by(|x, y| x.1.partial_cmp(y.1).unwrap());
            let bm = rb.iter().enumerate().max_by(|x, y| x.1.partial_cmp(y.1).unwrap());
            assert_eq!(am.map(|(i, _)| i), bm.map(|(i, _)| i));
        }
    }

    #[test]
    fn parameter_round_trip() {
        let mut head = RelationHead::new(ReprScheme::ClsAllMarkers, classes(2), 4, 1);
        let mut flat = head.parameters();
        assert_eq!(flat.len(), head.num_parameters());
        flat[3] = 9.5;
        head.set_parameters(&flat).unwrap();
        assert_eq!(head.parameters(), flat);
    }
}
