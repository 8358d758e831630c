//! Small convolutional Q-network over a three-channel grid encoding.
//!
//! Layout: 3×3 or 7×7 convolution (16 maps, stride 1, zero "same" padding,
//! ReLU) → flatten, append `has_key` → dense 16 (ReLU) → dense 4.
//! Channels are walls, agent one-hot and goal one-hot. Because the agent and
//! goal channels are one-hot, their convolution is a sparse scatter and the
//! wall channel is convolved once per parameter update.

use std::sync::Arc;

use rand::Rng;

use crate::env::{AgentState, CellKind, GridSpec};
use crate::replay::Transition;

use super::{td_target, CheckpointError, GoalQ, Learner, LearnerConfig};

const MAPS: usize = 16;
const HIDDEN: usize = 16;
const CHANNELS: usize = 3;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpShape {
    pub width: usize,
    pub height: usize,
    pub kernel: usize,
}

impl MlpShape {
    fn cells(&self) -> usize {
        self.width * self.height
    }

    fn flat(&self) -> usize {
        MAPS * self.cells() + 1
    }

    fn conv_w(&self) -> usize {
        0
    }

    fn conv_b(&self) -> usize {
        MAPS * CHANNELS * self.kernel * self.kernel
    }

    fn fc_w(&self) -> usize {
        self.conv_b() + MAPS
    }

    fn fc_b(&self) -> usize {
        self.fc_w() + HIDDEN * self.flat()
    }

    fn out_w(&self) -> usize {
        self.fc_b() + HIDDEN
    }

    fn out_b(&self) -> usize {
        self.out_w() + 4 * HIDDEN
    }

    pub fn n_params(&self) -> usize {
        self.out_b() + 4
    }

    fn kidx(&self, f: usize, c: usize, i: usize, j: usize) -> usize {
        ((f * CHANNELS + c) * self.kernel + i) * self.kernel + j
    }
}

#[derive(Debug, Clone)]
pub struct MlpQ {
    shape: MlpShape,
    walls: Arc<Vec<f64>>,
    params: Vec<f64>,
    wall_map: Vec<f64>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    adam_t: u64,
}

struct Activations {
    conv: Vec<f64>,
    hidden_pre: [f64; HIDDEN],
    hidden: [f64; HIDDEN],
    q: [f64; 4],
}

impl MlpQ {
    /// Kernel 3 for grids at most 7 rows tall, 7 otherwise.
    pub fn default_kernel(spec: &GridSpec) -> usize {
        if spec.height <= 7 {
            3
        } else {
            7
        }
    }

    pub fn new<R: Rng + ?Sized>(spec: &GridSpec, kernel: usize, rng: &mut R) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd");
        let shape = MlpShape { width: spec.width, height: spec.height, kernel };
        let walls = (0..spec.height)
            .flat_map(|y| (0..spec.width).map(move |x| (x, y)))
            .map(|(x, y)| if spec.cell(x, y) == CellKind::Wall { 1.0 } else { 0.0 })
            .collect();
        let mut params = vec![0.0; shape.n_params()];
        let mut init = |range: std::ops::Range<usize>, fan_in: usize| {
            let lim = (6.0 / fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.gen_range(-lim..lim);
            }
        };
        init(shape.conv_w()..shape.conv_b(), CHANNELS * kernel * kernel);
        init(shape.fc_w()..shape.fc_b(), shape.flat());
        init(shape.out_w()..shape.out_b(), HIDDEN);
        let n = params.len();
        let mut q = MlpQ {
            shape,
            walls: Arc::new(walls),
            params,
            wall_map: Vec::new(),
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            adam_t: 0,
        };
        q.wall_map = q.compute_wall_map();
        q
    }

    pub fn shape(&self) -> MlpShape {
        self.shape
    }

    /// Bias plus wall-channel convolution, shared by every input.
    fn compute_wall_map(&self) -> Vec<f64> {
        let MlpShape { width, height, kernel } = self.shape;
        let r = kernel / 2;
        let mut out = vec![0.0; MAPS * width * height];
        for f in 0..MAPS {
            let bias = self.params[self.shape.conv_b() + f];
            for y in 0..height {
                for x in 0..width {
                    let mut acc = bias;
                    for i in 0..kernel {
                        let yy = y as isize + i as isize - r as isize;
                        if yy < 0 || yy >= height as isize {
                            continue;
                        }
                        for j in 0..kernel {
                            let xx = x as isize + j as isize - r as isize;
                            if xx < 0 || xx >= width as isize {
                                continue;
                            }
                            acc += self.params[self.shape.kidx(f, 0, i, j)]
                                * self.walls[yy as usize * width + xx as usize];
                        }
                    }
                    out[(f * height + y) * width + x] = acc;
                }
            }
        }
        out
    }

    /// Output positions receiving a one-hot input at `(px, py)`, with the
    /// kernel tap `(i, j)` that connects them.
    fn taps(&self, px: usize, py: usize) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let MlpShape { width, height, kernel } = self.shape;
        let r = kernel as isize / 2;
        (0..kernel).flat_map(move |i| {
            (0..kernel).filter_map(move |j| {
                let y = py as isize - i as isize + r;
                let x = px as isize - j as isize + r;
                (y >= 0 && y < height as isize && x >= 0 && x < width as isize)
                    .then(|| (y as usize * width + x as usize, i, j))
            })
        })
    }

    fn forward(&self, wall_map: &[f64], s: AgentState, g: AgentState) -> Activations {
        let sh = self.shape;
        let cells = sh.cells();
        let mut conv = wall_map.to_vec();
        for (c, pos) in [(1, s), (2, g)] {
            for (p, i, j) in self.taps(pos.x as usize, pos.y as usize) {
                for f in 0..MAPS {
                    conv[f * cells + p] += self.params[sh.kidx(f, c, i, j)];
                }
            }
        }
        for v in &mut conv {
            *v = v.max(0.0);
        }
        let key = if s.has_key { 1.0 } else { 0.0 };
        let flat = sh.flat();
        let mut hidden_pre = [0.0; HIDDEN];
        for (h, out) in hidden_pre.iter_mut().enumerate() {
            let row = &self.params[sh.fc_w() + h * flat..sh.fc_w() + (h + 1) * flat];
            let mut acc = self.params[sh.fc_b() + h] + row[flat - 1] * key;
            for (w, a) in row[..flat - 1].iter().zip(&conv) {
                acc += w * a;
            }
            *out = acc;
        }
        let hidden = hidden_pre.map(|v| v.max(0.0));
        let mut q = [0.0; 4];
        for (a, out) in q.iter_mut().enumerate() {
            let row = &self.params[sh.out_w() + a * HIDDEN..sh.out_w() + (a + 1) * HIDDEN];
            *out = self.params[sh.out_b() + a] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>();
        }
        Activations { conv, hidden_pre, hidden, q }
    }

    /// Mean squared error `mean (y - Q(s, g)[a])²` over fixed targets, and
    /// its gradient with respect to all parameters.
    pub fn loss_and_grad(&self, samples: &[(AgentState, AgentState, usize, f64)]) -> (f64, Vec<f64>) {
        let sh = self.shape;
        let cells = sh.cells();
        let flat = sh.flat();
        let wall_map = &self.wall_map;
        let mut grad = vec![0.0; self.params.len()];
        let mut conv_grad_sum = vec![0.0; MAPS * cells];
        let mut loss = 0.0;
        let scale = 1.0 / samples.len() as f64;
        let mut d_flat = vec![0.0; flat];
        for &(s, g, a, y) in samples {
            let act = self.forward(wall_map, s, g);
            let err = y - act.q[a];
            loss += err * err * scale;
            let dq = -2.0 * err * scale;

            grad[sh.out_b() + a] += dq;
            let mut d_hidden = [0.0; HIDDEN];
            for h in 0..HIDDEN {
                grad[sh.out_w() + a * HIDDEN + h] += dq * act.hidden[h];
                if act.hidden_pre[h] > 0.0 {
                    d_hidden[h] = dq * self.params[sh.out_w() + a * HIDDEN + h];
                }
            }
            let key = if s.has_key { 1.0 } else { 0.0 };
            d_flat.iter_mut().for_each(|v| *v = 0.0);
            for (h, &dh) in d_hidden.iter().enumerate() {
                if dh == 0.0 {
                    continue;
                }
                grad[sh.fc_b() + h] += dh;
                let base = sh.fc_w() + h * flat;
                for i in 0..flat - 1 {
                    grad[base + i] += dh * act.conv[i];
                    d_flat[i] += dh * self.params[base + i];
                }
                grad[base + flat - 1] += dh * key;
            }
            // ReLU gate on the conv maps.
            for (i, d) in d_flat[..flat - 1].iter_mut().enumerate() {
                if act.conv[i] <= 0.0 {
                    *d = 0.0;
                }
            }
            for (c, pos) in [(1, s), (2, g)] {
                for (p, i, j) in self.taps(pos.x as usize, pos.y as usize) {
                    for f in 0..MAPS {
                        grad[sh.kidx(f, c, i, j)] += d_flat[f * cells + p];
                    }
                }
            }
            for (acc, d) in conv_grad_sum.iter_mut().zip(&d_flat[..flat - 1]) {
                *acc += d;
            }
        }
        // Bias and wall channel, accumulated over the batch.
        let MlpShape { width, height, kernel } = sh;
        let r = kernel / 2;
        for f in 0..MAPS {
            let maps = &conv_grad_sum[f * cells..(f + 1) * cells];
            grad[sh.conv_b() + f] += maps.iter().sum::<f64>();
            for i in 0..kernel {
                for j in 0..kernel {
                    let mut acc = 0.0;
                    for y in 0..height {
                        let yy = y as isize + i as isize - r as isize;
                        if yy < 0 || yy >= height as isize {
                            continue;
                        }
                        for x in 0..width {
                            let xx = x as isize + j as isize - r as isize;
                            if xx < 0 || xx >= width as isize {
                                continue;
                            }
                            acc += maps[y * width + x] * self.walls[yy as usize * width + xx as usize];
                        }
                    }
                    grad[sh.kidx(f, 0, i, j)] += acc;
                }
            }
        }
        (loss, grad)
    }

    pub fn loss(&self, samples: &[(AgentState, AgentState, usize, f64)]) -> f64 {
        let wall_map = &self.wall_map;
        samples
            .iter()
            .map(|&(s, g, a, y)| {
                let e = y - self.forward(wall_map, s, g).q[a];
                e * e
            })
            .sum::<f64>()
            / samples.len() as f64
    }

    fn adam_step(&mut self, grad: &[f64], lr: f64) {
        self.adam_t += 1;
        let bc1 = 1.0 - BETA1.powi(self.adam_t as i32);
        let bc2 = 1.0 - BETA2.powi(self.adam_t as i32);
        for (i, &g) in grad.iter().enumerate() {
            self.adam_m[i] = BETA1 * self.adam_m[i] + (1.0 - BETA1) * g;
            self.adam_v[i] = BETA2 * self.adam_v[i] + (1.0 - BETA2) * g * g;
            let m_hat = self.adam_m[i] / bc1;
            let v_hat = self.adam_v[i] / bc2;
            self.params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        self.wall_map = self.compute_wall_map();
    }
}

impl GoalQ for MlpQ {
    fn q_values(&self, s: AgentState, g: AgentState) -> [f64; 4] {
        self.forward(&self.wall_map, s, g).q
    }
}

impl Learner for MlpQ {
    fn td_update(&mut self, target: Option<&Self>, batch: &[Transition], cfg: &LearnerConfig) -> f64 {
        let bootstrap = target.unwrap_or(self);
        let samples: Vec<_> =
            batch.iter().map(|t| (t.state, t.goal, t.action.index(), td_target(bootstrap, t, cfg.discount))).collect();
        let (loss, grad) = self.loss_and_grad(&samples);
        self.adam_step(&grad, cfg.learning_rate);
        loss
    }

    fn uses_target_network(&self) -> bool {
        true
    }

    fn kind(&self) -> &'static str {
        "mlp"
    }

    fn parameters(&self) -> Vec<f64> {
        self.params.clone()
    }

    fn set_parameters(&mut self, params: &[f64]) -> Result<(), CheckpointError> {
        if params.len() != self.params.len() {
            return Err(CheckpointError::Shape { expected: self.params.len(), found: params.len() });
        }
        self.params.copy_from_slice(params);
        self.wall_map = self.compute_wall_map();
        Ok(())
    }

    // Optimizer state stays with the live network.
    fn copy_weights_from(&mut self, source: &Self) {
        self.params.copy_from_slice(&source.params);
        self.wall_map = source.wall_map.clone();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{free_states, make_env};
    use crate::qlearn::exhaustive_transitions;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn output_shape_and_finiteness() {
        let spec = make_env("nine_rooms_locked", None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = MlpQ::new(&spec, MlpQ::default_kernel(&spec), &mut rng);
        assert_eq!(q.shape().kernel, 7);
        for s in free_states(&spec).into_iter().step_by(17) {
            assert!(q.q_values(s, spec.main_goal).iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn loss_decreases_on_fixed_batch() {
        let spec = make_env("hallway", Some(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut q = MlpQ::new(&spec, 3, &mut rng);
        let batch: Vec<_> = exhaustive_transitions(&spec).into_iter().filter(|t| t.done).collect();
        let cfg = LearnerConfig { learning_rate: 1e-2, ..LearnerConfig::network(150) };
        let target = q.clone();
        let first = q.td_update(Some(&target), &batch, &cfg);
        let mut last = first;
        for _ in 0..200 {
            last = q.td_update(Some(&target), &batch, &cfg);
        }
        assert!(last < first * 0.1, "{first} -> {last}");
    }
}
