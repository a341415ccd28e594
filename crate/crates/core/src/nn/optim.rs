use super::params::{ParamGrads, ParamStore};

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || store.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn with_lr(store: &ParamStore, lr: f64) -> Self {
        Self::new(store, lr, 0.9, 0.999, 1e-8)
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of every parameter.
    pub fn step(&mut self, store: &mut ParamStore, grads: &ParamGrads) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for id in store.ids().collect::<Vec<_>>() {
            let g = grads.get(id);
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            let p = store.get_mut(id).data_mut();
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::from_rows(&[[0.5, -1.0, 2.0]]).unwrap());
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = store();
        let before = s.clone();
        let mut adam = Adam::with_lr(&s, 1e-3);
        let g = ParamGrads::zeros_like(&s);
        for _ in 0..10 {
            adam.step(&mut s, &g);
        }
        assert_eq!(s, before);
    }

    #[test]
    fn constant_gradient_drifts_at_lr() {
        // m̂ = g and v̂ = g² exactly under a constant gradient, so each step
        // moves lr·g/(|g|+ε).
        let mut s = store();
        let lr = 1e-3;
        let mut adam = Adam::with_lr(&s, lr);
        let mut g = ParamGrads::zeros_like(&s);
        let gv = [0.3, -2.0, 1e-2];
        g.get_mut(crate::nn::ParamId(0)).copy_from_slice(&gv);
        let n = 200;
        for _ in 0..n {
            adam.step(&mut s, &g);
        }
        let p = s.get(crate::nn::ParamId(0)).data();
        let start = [0.5, -1.0, 2.0];
        for i in 0..3 {
            let expected = start[i] - n as f64 * lr * gv[i] / (gv[i].abs() + 1e-8);
            assert!((p[i] - expected).abs() < 1e-9, "{} vs {}", p[i], expected);
        }
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut s = store();
            let mut adam = Adam::with_lr(&s, 1e-2);
            let mut g = ParamGrads::zeros_like(&s);
            for k in 0..20 {
                g.get_mut(crate::nn::ParamId(0)).copy_from_slice(&[
                    (k as f64).sin(),
                    0.1 * k as f64,
                    -1.0,
                ]);
                adam.step(&mut s, &g);
            }
            s
        };
        let a = run();
        let b = run();
        assert_eq!(
            a.get(crate::nn::ParamId(0)).data(),
            b.get(crate::nn::ParamId(0)).data()
        );
    }
}
