//! Scalar linear plant `ẋ = a x + b μ` with an analytic value function,
//! used to check the learners against the algebraic Riccati solution.

use nalgebra::{DMatrix, DVector};

use super::iteration::ModelPoint;
use super::samples::{IntervalRecord, LearningEnvironment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarLinearPlant {
    pub a: f64,
    pub b: f64,
    x: f64,
    t: f64,
    interval: f64,
    dt: f64,
}

impl ScalarLinearPlant {
    pub fn new(a: f64, b: f64, x0: f64, interval: f64, dt: f64) -> Self {
        Self { a, b, x: x0, t: 0.0, interval, dt }
    }

    pub fn with_state(&self, x0: f64) -> Self {
        Self { x: x0, t: 0.0, ..*self }
    }

    pub fn model_point(&self, x: f64) -> ModelPoint {
        ModelPoint {
            state: DVector::from_element(1, x),
            drift: DVector::from_element(1, self.a * x),
            input: DMatrix::from_element(1, 1, self.b),
        }
    }
}

/// Value coefficient `p` of `V = p x²` for cost `∫ q x² + γ μ² dt`:
/// the stabilizing root of `2 a p - b² p² / γ + q = 0`.
pub fn riccati_value(a: f64, b: f64, q: f64, gamma: f64) -> f64 {
    gamma * (a + (a * a + b * b * q / gamma).sqrt()) / (b * b)
}

impl LearningEnvironment for ScalarLinearPlant {
    fn state_dim(&self) -> usize {
        1
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn time(&self) -> f64 {
        self.t
    }

    fn observe(&self) -> DVector<f64> {
        DVector::from_element(1, self.x)
    }

    fn advance(&mut self, mu: &DVector<f64>) -> Result<IntervalRecord> {
        let steps = (self.interval / self.dt).round() as usize;
        if steps == 0 || ((self.interval / self.dt) - steps as f64).abs() > 1e-9 {
            return Err(Error::StepDoesNotDivide { dt: self.dt, interval: self.interval });
        }
        let u = mu[0];
        let f = |x: f64| self.a * x + self.b * u;
        let t = self.t;
        let mut states = vec![self.observe()];
        for _ in 0..steps {
            let h = self.dt;
            let x = self.x;
            let k1 = f(x);
            let k2 = f(x + 0.5 * h * k1);
            let k3 = f(x + 0.5 * h * k2);
            let k4 = f(x + h * k3);
            self.x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            states.push(self.observe());
        }
        self.t += self.interval;
        let applied = vec![mu.clone(); states.len()];
        Ok(IntervalRecord { t, states, applied, dt: self.dt })
    }
}
