use serde::{Deserialize, Serialize};

use crate::policy::{Matrix, ParamSet};

/// Adam with bias correction and optional L2 weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(params: &ParamSet) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// One descent step along `grads`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Matrix], lr: f64, weight_decay: f64) {
        assert_eq!(grads.len(), self.m.len(), "gradient count");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, g) in grads.iter().enumerate() {
            let p = params.get_mut(i).data_mut();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for k in 0..p.len() {
                let gk = g.data()[k] + weight_decay * p[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                p[k] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

pub fn global_norm(grads: &[Matrix]) -> f64 {
    grads.iter().map(Matrix::sum_sq).sum::<f64>().sqrt()
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Matrix], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale(s));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{Hyper, PolicyParams};

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![Matrix::from_vec(1, 2, vec![3.0, 4.0]), Matrix::from_vec(1, 1, vec![12.0])];
        let before = clip_global_norm(&mut g, 2.0);
        assert_eq!(before, 13.0);
        assert!(global_norm(&g) <= 2.0 + 1e-12);
        let mut small = vec![Matrix::from_vec(1, 1, vec![0.5])];
        clip_global_norm(&mut small, 2.0);
        assert_eq!(small[0].get(0, 0), 0.5);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut params = PolicyParams::init(Hyper::tiny(), 0).unwrap().phi;
        let before = params.clone();
        let mut grads = params.zeros_like();
        grads[0].set(0, 0, 0.37);
        grads[0].set(0, 1, -5.0);
        let mut adam = Adam::new(&params);
        adam.step(&mut params, &grads, 0.01, 0.0);
        let d0 = params.get(0).get(0, 0) - before.get(0).get(0, 0);
        let d1 = params.get(0).get(0, 1) - before.get(0).get(0, 1);
        assert!((d0 + 0.01).abs() < 1e-8);
        assert!((d1 - 0.01).abs() < 1e-8);
        assert_eq!(params.get(1), before.get(1));
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut params = PolicyParams::init(Hyper::tiny(), 0).unwrap().phi;
        let mut adam = Adam::new(&params);
        for _ in 0..3000 {
            let grads: Vec<Matrix> = params
                .tensors()
                .iter()
                .map(|t| {
                    let mut g = t.clone();
                    g.scale(2.0);
                    g
                })
                .collect();
            adam.step(&mut params, &grads, 0.01, 0.0);
        }
        assert!(params.tensors().iter().all(|t| t.data().iter().all(|x| x.abs() < 1e-2)));
    }
}
