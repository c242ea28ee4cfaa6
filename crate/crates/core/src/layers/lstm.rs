//! LSTM cell with an optional second (cue) input, and the bidirectional
//! wrapper. With the cue weights absent this is the plain single-input cell.

use rand::Rng;

use super::LayerError;
use crate::numerics::{sigmoid, tanh_act, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Candidate,
}

impl Gate {
    pub fn name(self) -> &'static str {
        match self {
            Gate::Input => "i",
            Gate::Forget => "f",
            Gate::Output => "o",
            Gate::Candidate => "g",
        }
    }
}

pub const GATES: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

/// Weights of one LSTM direction, indexed by gate in `GATES` order.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `U × d` token-input weights.
    pub w_e: [Mat; 4],
    /// `U × d` cue-input weights; present only for the two-input cell.
    pub w_q: Option<[Mat; 4]>,
    /// `U × U` recurrent weights.
    pub w_h: [Mat; 4],
    pub b: [Vec<f64>; 4],
}

impl LstmParams {
    pub fn random<R: Rng + ?Sized>(
        units: usize,
        input_dim: usize,
        two_input: bool,
        rng: &mut R,
    ) -> Self {
        let w_e = std::array::from_fn(|_| Mat::glorot(units, input_dim, rng));
        let w_q = two_input.then(|| std::array::from_fn(|_| Mat::glorot(units, input_dim, rng)));
        let w_h = std::array::from_fn(|_| Mat::glorot(units, units, rng));
        LstmParams {
            w_e,
            w_q,
            w_h,
            b: std::array::from_fn(|_| vec![0.0; units]),
        }
    }

    pub fn zeros(units: usize, input_dim: usize, two_input: bool) -> Self {
        LstmParams {
            w_e: std::array::from_fn(|_| Mat::zeros(units, input_dim)),
            w_q: two_input.then(|| std::array::from_fn(|_| Mat::zeros(units, input_dim))),
            w_h: std::array::from_fn(|_| Mat::zeros(units, units)),
            b: std::array::from_fn(|_| vec![0.0; units]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        LstmParams::zeros(self.units(), self.input_dim(), self.has_aux())
    }

    pub fn units(&self) -> usize {
        self.w_h[0].rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_e[0].cols()
    }

    pub fn has_aux(&self) -> bool {
        self.w_q.is_some()
    }

    /// Named parameter tensors in a fixed order: `(name, rows, cols, data)`.
    pub fn named_slices(&self) -> Vec<(String, usize, usize, &[f64])> {
        let mut out = Vec::new();
        for (g, gate) in GATES.iter().enumerate() {
            let n = gate.name();
            let m = &self.w_e[g];
            out.push((format!("w_e.{n}"), m.rows(), m.cols(), m.data()));
            if let Some(wq) = &self.w_q {
                let m = &wq[g];
                out.push((format!("w_q.{n}"), m.rows(), m.cols(), m.data()));
            }
            let m = &self.w_h[g];
            out.push((format!("w_h.{n}"), m.rows(), m.cols(), m.data()));
            out.push((format!("b.{n}"), 1, self.b[g].len(), &self.b[g][..]));
        }
        out
    }

    /// Mutable views in the same order as [`LstmParams::named_slices`].
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let LstmParams { w_e, w_q, w_h, b } = self;
        let mut wq_iter: Vec<Option<&mut Mat>> = match w_q {
            Some(arr) => arr.iter_mut().map(Some).collect(),
            None => (0..4).map(|_| None).collect(),
        };
        let mut out: Vec<&mut [f64]> = Vec::new();
        for (((we, wh), bias), wq) in w_e
            .iter_mut()
            .zip(w_h.iter_mut())
            .zip(b.iter_mut())
            .zip(wq_iter.iter_mut())
        {
            out.push(we.data_mut());
            if let Some(m) = wq.take() {
                out.push(m.data_mut());
            }
            out.push(wh.data_mut());
            out.push(&mut bias[..]);
        }
        out
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.named_slices().into_iter().map(|(_, _, _, s)| s).collect()
    }
}

/// Everything one time step needs for backprop.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub position: usize,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gate values in `GATES` order: i, f, o (sigmoid) and the candidate (tanh).
    pub gates: [Vec<f64>; 4],
    pub cell: Vec<f64>,
    pub tanh_cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    pub reverse: bool,
    /// Steps in processing order (reversed positions when `reverse`).
    pub steps: Vec<StepCache>,
    inputs: Vec<Vec<f64>>,
    aux: Option<Vec<Vec<f64>>>,
}

fn check_inputs(
    params: &LstmParams,
    inputs: &[Vec<f64>],
    aux: Option<&[Vec<f64>]>,
) -> Result<(), LayerError> {
    if params.has_aux() != aux.is_some() {
        return Err(LayerError::AuxPresence);
    }
    if let Some(q) = aux {
        if q.len() != inputs.len() {
            return Err(LayerError::AuxLength(inputs.len(), q.len()));
        }
        if let Some(bad) = q.iter().find(|v| v.len() != params.input_dim()) {
            return Err(LayerError::Dimension(format!(
                "aux input of width {}, expected {}",
                bad.len(),
                params.input_dim()
            )));
        }
    }
    if let Some(bad) = inputs.iter().find(|v| v.len() != params.input_dim()) {
        return Err(LayerError::Dimension(format!(
            "input of width {}, expected {}",
            bad.len(),
            params.input_dim()
        )));
    }
    Ok(())
}

/// Runs one direction over the sequence. Outputs are aligned with the input
/// order whichever way the recurrence runs. `h_0` and the initial cell are zero.
pub fn lstm_forward(
    params: &LstmParams,
    inputs: &[Vec<f64>],
    aux: Option<&[Vec<f64>]>,
    reverse: bool,
) -> Result<(Vec<Vec<f64>>, LstmCache), LayerError> {
    check_inputs(params, inputs, aux)?;
    let n = inputs.len();
    let u = params.units();
    let mut outputs = vec![Vec::new(); n];
    let mut steps = Vec::with_capacity(n);
    let mut h = vec![0.0; u];
    let mut c = vec![0.0; u];
    let order: Vec<usize> = if reverse {
        (0..n).rev().collect()
    } else {
        (0..n).collect()
    };
    for pos in order {
        let x = &inputs[pos];
        let mut gates: [Vec<f64>; 4] = std::array::from_fn(|g| params.b[g].clone());
        for (g, pre) in gates.iter_mut().enumerate() {
            params.w_e[g].matvec_acc(x, pre);
            if let (Some(wq), Some(q)) = (&params.w_q, aux) {
                wq[g].matvec_acc(&q[pos], pre);
            }
            params.w_h[g].matvec_acc(&h, pre);
        }
        for (g, gate) in GATES.iter().enumerate() {
            let act: fn(f64) -> f64 = if *gate == Gate::Candidate { tanh_act } else { sigmoid };
            gates[g].iter_mut().for_each(|v| *v = act(*v));
        }
        let [i, f, o, cand] = &gates;
        let cell: Vec<f64> = (0..u).map(|j| f[j] * c[j] + i[j] * cand[j]).collect();
        let tanh_cell: Vec<f64> = cell.iter().map(|v| tanh_act(*v)).collect();
        let hidden: Vec<f64> = (0..u).map(|j| o[j] * tanh_cell[j]).collect();
        outputs[pos] = hidden.clone();
        steps.push(StepCache {
            position: pos,
            h_prev: std::mem::replace(&mut h, hidden.clone()),
            c_prev: std::mem::replace(&mut c, cell.clone()),
            gates,
            cell,
            tanh_cell,
            hidden,
        });
    }
    let cache = LstmCache {
        reverse,
        steps,
        inputs: inputs.to_vec(),
        aux: aux.map(|q| q.to_vec()),
    };
    Ok((outputs, cache))
}

#[derive(Debug, Clone)]
pub struct LstmInputGrads {
    pub inputs: Vec<Vec<f64>>,
    pub aux: Option<Vec<Vec<f64>>>,
}

/// Backprop through time. `d_hidden[k]` is `dL/dh_k` in input order.
pub fn lstm_backward(
    params: &LstmParams,
    cache: &LstmCache,
    d_hidden: &[Vec<f64>],
    grads: &mut LstmParams,
) -> Result<LstmInputGrads, LayerError> {
    let n = cache.steps.len();
    if d_hidden.len() != n {
        return Err(LayerError::Dimension(format!(
            "{} hidden gradients for {n} steps",
            d_hidden.len()
        )));
    }
    if grads.units() != params.units()
        || grads.input_dim() != params.input_dim()
        || grads.has_aux() != params.has_aux()
    {
        return Err(LayerError::Dimension("gradient buffer shape".into()));
    }
    let u = params.units();
    let d = params.input_dim();
    let mut d_inputs = vec![vec![0.0; d]; n];
    let mut d_aux = cache.aux.as_ref().map(|_| vec![vec![0.0; d]; n]);
    let mut dh_next = vec![0.0; u];
    let mut dc_next = vec![0.0; u];
    for step in cache.steps.iter().rev() {
        let pos = step.position;
        let [i, f, o, cand] = &step.gates;
        let dh: Vec<f64> = (0..u).map(|j| d_hidden[pos][j] + dh_next[j]).collect();
        let mut da: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; u]);
        for j in 0..u {
            let dc = dc_next[j] + dh[j] * o[j] * (1.0 - step.tanh_cell[j] * step.tanh_cell[j]);
            let d_o = dh[j] * step.tanh_cell[j];
            let d_i = dc * cand[j];
            let d_f = dc * step.c_prev[j];
            let d_cand = dc * i[j];
            da[0][j] = d_i * i[j] * (1.0 - i[j]);
            da[1][j] = d_f * f[j] * (1.0 - f[j]);
            da[2][j] = d_o * o[j] * (1.0 - o[j]);
            da[3][j] = d_cand * (1.0 - cand[j] * cand[j]);
            dc_next[j] = dc * f[j];
        }
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        let x = &cache.inputs[pos];
        for g in 0..4 {
            grads.w_e[g].add_outer(&da[g], x);
            params.w_e[g].matvec_t_acc(&da[g], &mut d_inputs[pos]);
            if let (Some(gq), Some(wq), Some(q), Some(dq)) =
                (grads.w_q.as_mut(), params.w_q.as_ref(), cache.aux.as_ref(), d_aux.as_mut())
            {
                gq[g].add_outer(&da[g], &q[pos]);
                wq[g].matvec_t_acc(&da[g], &mut dq[pos]);
            }
            grads.w_h[g].add_outer(&da[g], &step.h_prev);
            params.w_h[g].matvec_t_acc(&da[g], &mut dh_next);
            for (b, v) in grads.b[g].iter_mut().zip(&da[g]) {
                *b += v;
            }
        }
    }
    Ok(LstmInputGrads {
        inputs: d_inputs,
        aux: d_aux,
    })
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    pub forward: LstmCache,
    pub backward: LstmCache,
}

/// Concatenation `(h→_k ; h←_k)` of a forward and a backward pass.
pub fn bilstm_forward(
    fwd: &LstmParams,
    bwd: &LstmParams,
    inputs: &[Vec<f64>],
    aux: Option<&[Vec<f64>]>,
) -> Result<(Vec<Vec<f64>>, BiLstmCache), LayerError> {
    if fwd.units() != bwd.units() || fwd.input_dim() != bwd.input_dim() {
        return Err(LayerError::Dimension(
            "forward and backward directions differ in shape".into(),
        ));
    }
    let (hf, cf) = lstm_forward(fwd, inputs, aux, false)?;
    let (hb, cb) = lstm_forward(bwd, inputs, aux, true)?;
    let out = hf
        .into_iter()
        .zip(hb)
        .map(|(mut a, b)| {
            a.extend(b);
            a
        })
        .collect();
    Ok((
        out,
        BiLstmCache {
            forward: cf,
            backward: cb,
        },
    ))
}

/// Returns `dL/d inputs`, summed over both directions.
pub fn bilstm_backward(
    fwd: &LstmParams,
    bwd: &LstmParams,
    cache: &BiLstmCache,
    d_out: &[Vec<f64>],
    grads_fwd: &mut LstmParams,
    grads_bwd: &mut LstmParams,
) -> Result<Vec<Vec<f64>>, LayerError> {
    let u = fwd.units();
    if let Some(bad) = d_out.iter().find(|v| v.len() != 2 * u) {
        return Err(LayerError::Dimension(format!(
            "BiLSTM output gradient of width {}, expected {}",
            bad.len(),
            2 * u
        )));
    }
    let df: Vec<Vec<f64>> = d_out.iter().map(|v| v[..u].to_vec()).collect();
    let db: Vec<Vec<f64>> = d_out.iter().map(|v| v[u..].to_vec()).collect();
    let gf = lstm_backward(fwd, &cache.forward, &df, grads_fwd)?;
    let gb = lstm_backward(bwd, &cache.backward, &db, grads_bwd)?;
    Ok(gf
        .inputs
        .into_iter()
        .zip(gb.inputs)
        .map(|(mut a, b)| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            a
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error, DEFAULT_FD_EPS};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_seq(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    fn randomize_biases(p: &mut LstmParams, rng: &mut ChaCha8Rng) {
        for b in p.b.iter_mut() {
            b.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
    }

    #[test]
    fn zero_params_give_zero_hidden() {
        let p = LstmParams::zeros(3, 2, false);
        let xs = vec![vec![1.0, -2.0]; 4];
        let (h, _) = lstm_forward(&p, &xs, None, false).unwrap();
        assert!(h.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_matches_scalar_evaluation() {
        // U = 2, d = 2, evaluated by hand from the gate equations.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p = LstmParams::random(2, 2, false, &mut rng);
        randomize_biases(&mut p, &mut rng);
        let x = vec![0.7, -0.4];
        let (h, _) = lstm_forward(&p, &[x.clone()], None, false).unwrap();
        let pre = |g: usize, j: usize| {
            p.w_e[g].get(j, 0) * x[0] + p.w_e[g].get(j, 1) * x[1] + p.b[g][j]
        };
        for j in 0..2 {
            let i = 1.0 / (1.0 + (-pre(0, j)).exp());
            let o = 1.0 / (1.0 + (-pre(2, j)).exp());
            let a = pre(3, j);
            let cand = (a.exp() - (-a).exp()) / (a.exp() + (-a).exp());
            let c = i * cand;
            let want = o * c.tanh();
            assert!((h[0][j] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn two_input_with_zero_cue_equals_single_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let two = LstmParams::random(3, 4, true, &mut rng);
        let one = LstmParams {
            w_q: None,
            ..two.clone()
        };
        let xs = random_seq(&mut rng, 5, 4);
        let zeros = vec![vec![0.0; 4]; 5];
        let (a, _) = lstm_forward(&two, &xs, Some(&zeros), false).unwrap();
        let (b, _) = lstm_forward(&one, &xs, None, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn aux_presence_and_length_checked() {
        let p = LstmParams::zeros(2, 2, true);
        let xs = vec![vec![0.0; 2]; 3];
        assert_eq!(
            lstm_forward(&p, &xs, None, false).unwrap_err(),
            LayerError::AuxPresence
        );
        let q = vec![vec![0.0; 2]; 2];
        assert_eq!(
            lstm_forward(&p, &xs, Some(&q), false).unwrap_err(),
            LayerError::AuxLength(3, 2)
        );
    }

    #[test]
    fn gate_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = LstmParams::random(4, 3, true, &mut rng);
        randomize_biases(&mut p, &mut rng);
        let xs = random_seq(&mut rng, 6, 3);
        let qs: Vec<Vec<f64>> = (0..6).map(|k| vec![(k % 2) as f64; 3]).collect();
        let (_, cache) = lstm_forward(&p, &xs, Some(&qs), true).unwrap();
        for s in &cache.steps {
            for g in 0..3 {
                assert!(s.gates[g].iter().all(|&v| v > 0.0 && v < 1.0));
            }
            assert!(s.gates[3].iter().all(|&v| v > -1.0 && v < 1.0));
            assert!(s.hidden.iter().all(|&v| v > -1.0 && v < 1.0));
        }
    }

    #[test]
    fn bilstm_concatenates_independent_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = LstmParams::random(1, 2, false, &mut rng);
        let b = LstmParams::random(1, 2, false, &mut rng);
        let xs = random_seq(&mut rng, 2, 2);
        let (out, _) = bilstm_forward(&f, &b, &xs, None).unwrap();
        let (hf, _) = lstm_forward(&f, &xs, None, false).unwrap();
        let (hb, _) = lstm_forward(&b, &xs, None, true).unwrap();
        for k in 0..2 {
            assert_eq!(out[k], vec![hf[k][0], hb[k][0]]);
        }
    }

    #[test]
    fn bilstm_zero_params() {
        let f = LstmParams::zeros(3, 2, false);
        let (out, _) = bilstm_forward(&f, &f.clone(), &vec![vec![1.0, 1.0]; 3], None).unwrap();
        assert!(out.iter().all(|v| v.len() == 6 && v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn bilstm_palindrome_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = LstmParams::random(2, 3, false, &mut rng);
        let a = random_seq(&mut rng, 1, 3).remove(0);
        let b = random_seq(&mut rng, 1, 3).remove(0);
        let xs = vec![a.clone(), b.clone(), a];
        let (out, _) = bilstm_forward(&p, &p, &xs, None).unwrap();
        let n = out.len();
        for k in 0..n {
            let mirrored = &out[n - 1 - k];
            assert_eq!(out[k][..2], mirrored[2..]);
            assert_eq!(out[k][2..], mirrored[..2]);
        }
    }

    fn check_lstm_gradients(two_input: bool, reverse: bool, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, d, n) = (2, 2, 3);
        let mut p = LstmParams::random(u, d, two_input, &mut rng);
        randomize_biases(&mut p, &mut rng);
        let xs = random_seq(&mut rng, n, d);
        let qs: Option<Vec<Vec<f64>>> =
            two_input.then(|| (0..n).map(|k| vec![(k == 1) as u8 as f64; d]).collect());
        // loss = Σ_k w_k · h_k with fixed random weights
        let w = random_seq(&mut rng, n, u);
        let loss = |params: &LstmParams, inputs: &[Vec<f64>]| {
            let (h, _) = lstm_forward(params, inputs, qs.as_deref(), reverse).unwrap();
            h.iter()
                .zip(&w)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
                .sum::<f64>()
        };
        let (_, cache) = lstm_forward(&p, &xs, qs.as_deref(), reverse).unwrap();
        let mut grads = p.zeros_like();
        let dx = lstm_backward(&p, &cache, &w, &mut grads).unwrap();

        let flat: Vec<f64> = p.slices().concat();
        let numeric = finite_diff_grad(
            |v| {
                let mut q = p.clone();
                let mut off = 0;
                for s in q.slices_mut() {
                    let len = s.len();
                    s.copy_from_slice(&v[off..off + len]);
                    off += len;
                }
                loss(&q, &xs)
            },
            &flat,
            DEFAULT_FD_EPS,
        )
        .unwrap();
        let analytic: Vec<f64> = grads.slices().concat();
        for (a, b) in analytic.iter().zip(&numeric) {
            assert!(relative_error(*a, *b) < 1e-4, "{a} vs {b}");
        }

        let flat_x: Vec<f64> = xs.concat();
        let numeric_x = finite_diff_grad(
            |v| {
                let inputs: Vec<Vec<f64>> = v.chunks(d).map(|c| c.to_vec()).collect();
                loss(&p, &inputs)
            },
            &flat_x,
            DEFAULT_FD_EPS,
        )
        .unwrap();
        for (a, b) in dx.inputs.concat().iter().zip(&numeric_x) {
            assert!(relative_error(*a, *b) < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (seed, two, rev) in [(1, false, false), (2, true, false), (3, false, true), (4, true, true)] {
            check_lstm_gradients(two, rev, seed);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = LstmParams::random(2, 2, false, &mut rng);
        let xs = random_seq(&mut rng, 3, 2);
        let (_, cache) = lstm_forward(&p, &xs, None, false).unwrap();
        let mut g = p.zeros_like();
        lstm_backward(&p, &cache, &vec![vec![0.0; 2]; 3], &mut g).unwrap();
        assert!(g.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }
}
