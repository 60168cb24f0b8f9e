use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// Adam with decoupled weight decay.
///
/// Per step `t`, for every parameter `x` with gradient `g`:
///
/// ```text
/// x  <- x * (1 - lr * wd)
/// m  <- b1 m + (1 - b1) g
/// v  <- b2 v + (1 - b2) g^2
/// x  <- x - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// ```
#[derive(Debug, Clone)]
pub struct AdamW {
    params: AdamWParams,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamW {
    /// `sizes` lists the element count of each tensor the optimizer will update, in order.
    pub fn new(params: AdamWParams, sizes: &[usize]) -> Self {
        Self {
            params,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, tensors: &mut [&mut Tensor], grads: &[Tensor]) {
        assert_eq!(
            tensors.len(),
            self.first.len(),
            "optimizer built for a different parameter set"
        );
        assert_eq!(tensors.len(), grads.len());
        self.step += 1;
        let AdamWParams {
            learning_rate: lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.params;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let decay = 1.0 - lr * weight_decay;
        for (k, (tensor, grad)) in tensors.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for (((x, &g), mi), vi) in tensor
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                if lr == 0.0 {
                    continue;
                }
                *x *= decay;
                *x -= lr * (*mi / bc1) / ((*vi / bc2).sqrt() + eps);
            }
        }
    }
}
