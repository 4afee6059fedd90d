//! Optimizers: Adam for the generator/CNN, plain SGD for the
//! discriminator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ParamWalk;

/// Adam with the recipe used here: lr 2e-4, beta = (0.5, 0.99).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    state: BTreeMap<String, AdamSlot>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AdamSlot {
    m: Vec<f32>,
    v: Vec<f32>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            state: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, net: &mut dyn ParamWalk) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let state = &mut self.state;
        net.for_each_param(&mut |name, p, g| {
            let slot = state.entry(name.to_string()).or_insert_with(|| AdamSlot {
                m: vec![0.0; p.len()],
                v: vec![0.0; p.len()],
            });
            for i in 0..p.len() {
                let gi = g[i] as f64;
                let m = b1 * slot.m[i] as f64 + (1.0 - b1) * gi;
                let v = b2 * slot.v[i] as f64 + (1.0 - b2) * gi * gi;
                slot.m[i] = m as f32;
                slot.v[i] = v as f32;
                let mhat = m / bc1;
                let vhat = v / bc2;
                p[i] = (p[i] as f64 - lr * mhat / (vhat.sqrt() + eps)) as f32;
            }
        });
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

/// Plain stochastic gradient descent, no momentum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Sgd { lr }
    }

    pub fn step(&mut self, net: &mut dyn ParamWalk) {
        let lr = self.lr;
        net.for_each_param(&mut |_, p, g| {
            for i in 0..p.len() {
                p[i] = (p[i] as f64 - lr * g[i] as f64) as f32;
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A 2-parameter quadratic bowl, as a ParamWalk.
    struct Bowl {
        p: Vec<f32>,
        g: Vec<f32>,
    }

    impl ParamWalk for Bowl {
        fn for_each_param(&mut self, f: &mut dyn FnMut(&str, &mut [f32], &mut [f32])) {
            f("bowl", &mut self.p, &mut self.g);
        }
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut bowl = Bowl {
            p: vec![1.0, -2.0],
            g: vec![0.0, 0.0],
        };
        let mut opt = Adam::new(0.05, 0.5, 0.99);
        for _ in 0..500 {
            for i in 0..2 {
                bowl.g[i] = 2.0 * bowl.p[i];
            }
            opt.step(&mut bowl);
        }
        assert!(bowl.p.iter().all(|v| v.abs() < 1e-2), "{:?}", bowl.p);
        assert_eq!(opt.steps_taken(), 500);
    }

    #[test]
    fn sgd_descends_a_quadratic() {
        let mut bowl = Bowl {
            p: vec![1.0, -2.0],
            g: vec![0.0, 0.0],
        };
        let mut opt = Sgd::new(0.1);
        for _ in 0..200 {
            for i in 0..2 {
                bowl.g[i] = 2.0 * bowl.p[i];
            }
            opt.step(&mut bowl);
        }
        assert!(bowl.p.iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn adam_state_round_trips_through_serde() {
        let mut bowl = Bowl {
            p: vec![1.0],
            g: vec![0.5],
        };
        let mut opt = Adam::new(0.01, 0.5, 0.99);
        opt.step(&mut bowl);
        let text = serde_json::to_string(&opt).unwrap();
        let back: Adam = serde_json::from_str(&text).unwrap();
        assert_eq!(back.steps_taken(), 1);
        // continuing from the restored state matches continuing in place
        let mut a = opt.clone();
        let mut b = back;
        let mut bowl2 = Bowl {
            p: bowl.p.clone(),
            g: vec![0.5],
        };
        bowl.g = vec![0.5];
        a.step(&mut bowl);
        b.step(&mut bowl2);
        assert_eq!(bowl.p, bowl2.p);
    }
}
