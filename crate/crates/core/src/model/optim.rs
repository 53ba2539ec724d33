use ndarray::{Array2, Zip};

use super::Real;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Array2<F>>,
    v: Vec<Array2<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(lr: f64, shapes: &[&Array2<F>]) -> Self {
        let zeros: Vec<Array2<F>> = shapes.iter().map(|p| Array2::zeros(p.raw_dim())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn update(&mut self, params: Vec<&mut Array2<F>>, grads: &[Array2<F>]) {
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        let (b1, b2) = (F::of(self.beta1), F::of(self.beta2));
        let (c1, c2) = (F::one() - b1, F::one() - b2);
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let step_size = F::of(self.lr / bc1);
        let bc2_sqrt = F::of(bc2.sqrt());
        let eps = F::of(self.eps);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + c1 * g;
                *v = b2 * *v + c2 * g * g;
                *p -= step_size * *m / ((*v).sqrt() / bc2_sqrt + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = Array2::from_elem((1, 2), 1.0f64);
        let g = Array2::from_shape_vec((1, 2), vec![3.0, -0.5]).unwrap();
        let mut adam = Adam::new(0.01, &[&p]);
        adam.update(vec![&mut p], &[g]);
        assert!((p[[0, 0]] - 0.99).abs() < 1e-9);
        assert!((p[[0, 1]] - 1.01).abs() < 1e-9);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = Array2::from_elem((1, 1), 5.0f64);
        let mut adam = Adam::new(0.1, &[&p]);
        for _ in 0..500 {
            let g = p.mapv(|x| 2.0 * (x - 2.0));
            adam.update(vec![&mut p], &[g]);
        }
        assert!((p[[0, 0]] - 2.0).abs() < 1e-2);
    }
}
