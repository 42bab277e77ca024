//! Adam optimizer over a flat parameter vector.

/// Adaptive moment estimation with bias correction. The learning rate is
/// fixed for the whole run; no schedule or weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step_count: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, parameter_count: usize) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: vec![0.0; parameter_count],
            second_moment: vec![0.0; parameter_count],
        }
    }

    pub fn step(&mut self, parameters: &mut [f64], gradients: &[f64]) {
        assert_eq!(parameters.len(), self.first_moment.len());
        assert_eq!(gradients.len(), self.first_moment.len());
        self.step_count += 1;
        let correction1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let correction2 = 1.0 - self.beta2.powi(self.step_count as i32);
        for i in 0..parameters.len() {
            let g = gradients[i];
            self.first_moment[i] = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            self.second_moment[i] =
                self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first_moment[i] / correction1;
            let v_hat = self.second_moment[i] / correction2;
            parameters[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descends_a_quadratic() {
        // f(p) = (p - 3)^2, gradient 2(p - 3).
        let mut p = vec![0.0];
        let mut adam = Adam::new(0.1, 1);
        for _ in 0..500 {
            let g = vec![2.0 * (p[0] - 3.0)];
            adam.step(&mut p, &g);
        }
        assert!((p[0] - 3.0).abs() < 1e-3, "converged to {}", p[0]);
    }

    #[test]
    fn deterministic_across_instances() {
        let mut p1 = vec![1.0, -2.0];
        let mut p2 = vec![1.0, -2.0];
        let mut a1 = Adam::new(0.01, 2);
        let mut a2 = Adam::new(0.01, 2);
        for i in 0..50 {
            let g = vec![(i as f64).sin(), (i as f64).cos()];
            a1.step(&mut p1, &g);
            a2.step(&mut p2, &g);
        }
        assert_eq!(p1, p2);
    }
}
