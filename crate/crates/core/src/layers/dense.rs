use rand::Rng;

use super::LayerError;
use crate::numerics::Mat;

/// Per-token affine score head `y_k = W x_k + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub weights: Mat,
    pub bias: Vec<f64>,
}

impl DenseParams {
    pub fn random<R: Rng + ?Sized>(labels: usize, input_width: usize, rng: &mut R) -> Self {
        DenseParams {
            weights: Mat::glorot(labels, input_width, rng),
            bias: vec![0.0; labels],
        }
    }

    pub fn zeros(labels: usize, input_width: usize) -> Self {
        DenseParams {
            weights: Mat::zeros(labels, input_width),
            bias: vec![0.0; labels],
        }
    }

    pub fn num_labels(&self) -> usize {
        self.weights.rows()
    }

    pub fn input_width(&self) -> usize {
        self.weights.cols()
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        vec![self.weights.data(), &self.bias]
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weights.data_mut(), &mut self.bias]
    }
}

/// Label scores for one sequence, `L × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqScores(Mat);

impl SeqScores {
    pub fn new(scores: Mat) -> Result<Self, LayerError> {
        if scores.cols() == 0 || scores.rows() == 0 {
            return Err(LayerError::Empty);
        }
        Ok(SeqScores(scores))
    }

    pub fn num_labels(&self) -> usize {
        self.0.rows()
    }

    pub fn len(&self) -> usize {
        self.0.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.0.cols() == 0
    }

    #[inline]
    pub fn get(&self, label: usize, pos: usize) -> f64 {
        self.0.get(label, pos)
    }

    /// Scores of every label at one position.
    pub fn at(&self, pos: usize) -> Vec<f64> {
        self.0.column(pos)
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }
}

pub fn dense_forward(params: &DenseParams, inputs: &[Vec<f64>]) -> Result<SeqScores, LayerError> {
    if inputs.is_empty() {
        return Err(LayerError::Empty);
    }
    let labels = params.num_labels();
    let mut y = Mat::zeros(labels, inputs.len());
    let mut col = vec![0.0; labels];
    for (k, x) in inputs.iter().enumerate() {
        if x.len() != params.input_width() {
            return Err(LayerError::Dimension(format!(
                "dense input {k} has width {}, expected {}",
                x.len(),
                params.input_width()
            )));
        }
        col.copy_from_slice(&params.bias);
        params.weights.matvec_acc(x, &mut col);
        y.set_column(k, &col);
    }
    SeqScores::new(y)
}

/// Given `dL/dY` (`L × n`), accumulates weight/bias gradients and returns `dL/dx_k`.
pub fn dense_backward(
    params: &DenseParams,
    inputs: &[Vec<f64>],
    d_scores: &Mat,
    grads: &mut DenseParams,
) -> Result<Vec<Vec<f64>>, LayerError> {
    if d_scores.shape() != (params.num_labels(), inputs.len()) {
        return Err(LayerError::Dimension(format!(
            "score gradient {:?} for {} labels and {} positions",
            d_scores.shape(),
            params.num_labels(),
            inputs.len()
        )));
    }
    let mut d_inputs = Vec::with_capacity(inputs.len());
    for (k, x) in inputs.iter().enumerate() {
        let dy = d_scores.column(k);
        grads.weights.add_outer(&dy, x);
        for (b, d) in grads.bias.iter_mut().zip(&dy) {
            *b += d;
        }
        let mut dx = vec![0.0; params.input_width()];
        params.weights.matvec_t_acc(&dy, &mut dx);
        d_inputs.push(dx);
    }
    Ok(d_inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matvec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bias_only() {
        let mut p = DenseParams::zeros(3, 4);
        p.bias = vec![1.0, 2.0, 3.0];
        let y = dense_forward(&p, &[vec![0.3; 4], vec![-1.0; 4]]).unwrap();
        for k in 0..2 {
            assert_eq!(y.at(k), vec![1.0, 2.0, 3.0]);
        }
    }

    #[test]
    fn identity_weights() {
        let p = DenseParams {
            weights: Mat::identity(3),
            bias: vec![0.5, 0.0, -0.5],
        };
        let y = dense_forward(&p, &[vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(y.at(0), vec![1.5, 2.0, 2.5]);
    }

    #[test]
    fn matches_matvec() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = DenseParams {
            weights: Mat::uniform(3, 4, 1.0, &mut rng),
            bias: vec![0.1, 0.2, 0.3],
        };
        let xs: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y = dense_forward(&p, &xs).unwrap();
        for (k, x) in xs.iter().enumerate() {
            let mut want = matvec(&p.weights, x).unwrap();
            for (w, b) in want.iter_mut().zip(&p.bias) {
                *w += b;
            }
            assert_eq!(y.at(k), want);
        }
    }

    #[test]
    fn width_mismatch() {
        let p = DenseParams::zeros(3, 4);
        assert!(matches!(
            dense_forward(&p, &[vec![0.0; 3]]),
            Err(LayerError::Dimension(_))
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = DenseParams::random(4, 3, &mut rng);
        let mut g = DenseParams::zeros(4, 3);
        let dx = dense_backward(&p, &[vec![1.0, 2.0, 3.0]], &Mat::zeros(4, 1), &mut g).unwrap();
        assert!(g.weights.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));
        assert_eq!(dx[0], vec![0.0; 3]);
    }
}
