use super::matrix::Matrix;

/// Adam with L2 weight decay folded into the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u32,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix], decay: &[bool]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let wd = if decay.get(k).copied().unwrap_or(true) {
                self.weight_decay
            } else {
                0.0
            };
            let m = self.m[k].as_mut_slice();
            let v = self.v[k].as_mut_slice();
            for (idx, (w, &gr)) in p.as_mut_slice().iter_mut().zip(g.as_slice()).enumerate() {
                let gr = gr + wd * *w;
                m[idx] = self.beta1 * m[idx] + (1.0 - self.beta1) * gr;
                v[idx] = self.beta2 * v[idx] + (1.0 - self.beta2) * gr * gr;
                let mh = m[idx] / bc1;
                let vh = v[idx] / bc2;
                *w -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}
