use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The four LSTM gates, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Candidate = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    pub fn name(self) -> &'static str {
        match self {
            Gate::Input => "input",
            Gate::Forget => "forget",
            Gate::Output => "output",
            Gate::Candidate => "candidate",
        }
    }
}

/// Parameters of a single-layer, scalar-input LSTM with a scalar dense head.
///
/// Everything lives in one flat buffer so optimizers and gradient checks can
/// treat the model as a plain vector. Layout:
/// four gate matrices `H x (1+H)` (row-major, column 0 is the input weight),
/// four gate bias vectors of length `H`, the head weights (`H`) and the head
/// bias. The same type doubles as a gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    hidden: usize,
    data: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(hidden: usize) -> Self {
        assert!(hidden >= 1, "hidden size must be at least 1");
        Self {
            hidden,
            data: vec![0.0; Self::len_for(hidden)],
        }
    }

    pub fn len_for(hidden: usize) -> usize {
        4 * hidden * (1 + hidden) + 4 * hidden + hidden + 1
    }

    pub fn from_flat(hidden: usize, data: Vec<f64>) -> Option<Self> {
        (hidden >= 1 && data.len() == Self::len_for(hidden)).then_some(Self { hidden, data })
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    /// Columns of each gate matrix: one input plus `H` recurrent.
    pub fn cols(&self) -> usize {
        1 + self.hidden
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn weight_offset(&self, gate: Gate) -> usize {
        gate as usize * self.hidden * self.cols()
    }

    fn bias_offset(&self, gate: Gate) -> usize {
        4 * self.hidden * self.cols() + gate as usize * self.hidden
    }

    fn head_offset(&self) -> usize {
        4 * self.hidden * self.cols() + 4 * self.hidden
    }

    pub fn weights(&self, gate: Gate) -> &[f64] {
        let o = self.weight_offset(gate);
        &self.data[o..o + self.hidden * self.cols()]
    }

    pub fn weights_mut(&mut self, gate: Gate) -> &mut [f64] {
        let o = self.weight_offset(gate);
        let n = self.hidden * self.cols();
        &mut self.data[o..o + n]
    }

    pub fn bias(&self, gate: Gate) -> &[f64] {
        let o = self.bias_offset(gate);
        &self.data[o..o + self.hidden]
    }

    pub fn bias_mut(&mut self, gate: Gate) -> &mut [f64] {
        let o = self.bias_offset(gate);
        let n = self.hidden;
        &mut self.data[o..o + n]
    }

    pub fn head_weights(&self) -> &[f64] {
        let o = self.head_offset();
        &self.data[o..o + self.hidden]
    }

    pub fn head_weights_mut(&mut self) -> &mut [f64] {
        let o = self.head_offset();
        let n = self.hidden;
        &mut self.data[o..o + n]
    }

    pub fn head_bias(&self) -> f64 {
        self.data[self.data.len() - 1]
    }

    pub fn set_head_bias(&mut self, value: f64) {
        let last = self.data.len() - 1;
        self.data[last] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Human-readable name of flat coordinate `index`, for diagnostics.
    pub fn describe(&self, index: usize) -> String {
        let wn = self.hidden * self.cols();
        if index < 4 * wn {
            let gate = Gate::ALL[index / wn];
            let r = (index % wn) / self.cols();
            let c = (index % wn) % self.cols();
            format!("W_{}[{r},{c}]", gate.name())
        } else if index < 4 * wn + 4 * self.hidden {
            let k = index - 4 * wn;
            format!("b_{}[{}]", Gate::ALL[k / self.hidden].name(), k % self.hidden)
        } else if index < self.data.len() - 1 {
            format!("w_out[{}]", index - 4 * wn - 4 * self.hidden)
        } else {
            "b_out".to_string()
        }
    }
}

/// Uniform weights in `±1/sqrt(1+H)` from a seeded generator; every bias is
/// zero except the forget gate, which starts at one.
pub fn init_params(hidden: usize, seed: u64) -> LstmParams {
    let mut params = LstmParams::zeros(hidden);
    let bound = 1.0 / ((1 + hidden) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for gate in Gate::ALL {
        for w in params.weights_mut(gate) {
            *w = rng.random_range(-bound..=bound);
        }
    }
    for w in params.head_weights_mut() {
        *w = rng.random_range(-bound..=bound);
    }
    params.bias_mut(Gate::Forget).fill(1.0);
    params
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        assert_eq!(init_params(8, 3), init_params(8, 3));
        assert_ne!(init_params(8, 3), init_params(8, 4));
    }

    #[test]
    fn init_respects_bound_and_biases() {
        for hidden in [1, 3, 8, 32] {
            let p = init_params(hidden, 11);
            let bound = 1.0 / ((1 + hidden) as f64).sqrt();
            for gate in Gate::ALL {
                assert!(p.weights(gate).iter().all(|w| w.abs() <= bound));
                let expected = if gate == Gate::Forget { 1.0 } else { 0.0 };
                assert!(p.bias(gate).iter().all(|&b| b == expected));
            }
            assert!(p.head_weights().iter().all(|w| w.abs() <= bound));
            assert_eq!(p.head_bias(), 0.0);
        }
    }

    #[test]
    fn layout_is_disjoint() {
        let mut p = LstmParams::zeros(3);
        assert_eq!(p.as_slice().len(), 4 * 3 * 4 + 12 + 3 + 1);
        p.weights_mut(Gate::Candidate)[11] = 1.0;
        p.bias_mut(Gate::Input)[0] = 2.0;
        p.head_weights_mut()[2] = 3.0;
        p.set_head_bias(4.0);
        assert_eq!(p.as_slice().iter().sum::<f64>(), 10.0);
        assert_eq!(p.describe(4 * 3 * 4 - 1), "W_candidate[2,3]");
        assert_eq!(p.describe(4 * 3 * 4), "b_input[0]");
        assert_eq!(p.describe(p.as_slice().len() - 1), "b_out");
    }
}
