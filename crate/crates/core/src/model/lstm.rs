//! Batched single-layer LSTM with backpropagation through time.
//!
//! Sequences are read from and written to strided buffers so the frequency
//! and time scans of the network can share one implementation without
//! transposing activations. Gate order inside the `4 * hidden` axis is
//! input, forget, cell, output.

use rand::Rng;

use super::linalg::{gemm, MatMut, MatRef};
use super::real::Real;

/// Placement of a batch of sequences inside a flat buffer: element
/// `(step, seq, feature)` lives at `step * step_stride + seq * batch_stride + feature`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct SeqLayout {
    pub steps: usize,
    pub batch: usize,
    pub step_stride: usize,
    pub batch_stride: usize,
}

impl SeqLayout {
    fn offset(&self, step: usize) -> usize {
        step * self.step_stride
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm<T> {
    pub input: usize,
    pub hidden: usize,
    /// `4h x input`, row-major.
    pub w_ih: Vec<T>,
    /// `4h x h`, row-major.
    pub w_hh: Vec<T>,
    pub b_ih: Vec<T>,
    pub b_hh: Vec<T>,
}

/// Activations saved by a training forward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct LstmCache<T> {
    /// Post-activation gates per processed step, `batch x 4h` each.
    gates: Vec<T>,
    /// Cell state per processed step, `batch x h` each.
    cells: Vec<T>,
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> Lstm<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            w_ih: vec![T::zero(); 4 * hidden * input],
            w_hh: vec![T::zero(); 4 * hidden * hidden],
            b_ih: vec![T::zero(); 4 * hidden],
            b_hh: vec![T::zero(); 4 * hidden],
        }
    }

    /// Uniform weights in `+-1/sqrt(hidden)`, zero biases except a forget-gate
    /// bias of one.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut lstm = Self::zeros(input, hidden);
        let bound = 1.0 / (hidden as f64).sqrt();
        for w in lstm.w_ih.iter_mut().chain(lstm.w_hh.iter_mut()) {
            *w = T::from_f64(rng.random_range(-bound..bound));
        }
        for b in &mut lstm.b_ih[hidden..2 * hidden] {
            *b = T::one();
        }
        lstm
    }

    pub fn num_params(&self) -> usize {
        self.w_ih.len() + self.w_hh.len() + self.b_ih.len() + self.b_hh.len()
    }

    /// Runs every sequence of `input` and writes hidden states into `output`.
    /// `reverse` scans from the last step to the first. States start at zero.
    pub(crate) fn forward(
        &self,
        input: &[T],
        in_layout: SeqLayout,
        output: &mut [T],
        out_layout: SeqLayout,
        reverse: bool,
        mut cache: Option<&mut LstmCache<T>>,
    ) {
        let (h, g4) = (self.hidden, 4 * self.hidden);
        let (steps, batch) = (in_layout.steps, in_layout.batch);
        debug_assert_eq!((out_layout.steps, out_layout.batch), (steps, batch));

        let bias: Vec<T> = self.b_ih.iter().zip(&self.b_hh).map(|(a, b)| *a + *b).collect();
        let mut gates = vec![T::zero(); batch * g4];
        let mut cell = vec![T::zero(); batch * h];
        if let Some(c) = cache.as_deref_mut() {
            c.gates = Vec::with_capacity(steps * batch * g4);
            c.cells = Vec::with_capacity(steps * batch * h);
        }
        let mut prev_step: Option<usize> = None;
        for s in 0..steps {
            let t = if reverse { steps - 1 - s } else { s };
            for row in gates.chunks_exact_mut(g4) {
                row.copy_from_slice(&bias);
            }
            let x = MatRef::strided(&input[in_layout.offset(t)..], batch, self.input, in_layout.batch_stride);
            gemm(
                T::one(),
                x,
                MatRef::dense(&self.w_ih, g4, self.input).t(),
                T::one(),
                MatMut::dense(&mut gates, batch, g4),
            );
            if let Some(p) = prev_step {
                let hp = MatRef::strided(&output[out_layout.offset(p)..], batch, h, out_layout.batch_stride);
                gemm(
                    T::one(),
                    hp,
                    MatRef::dense(&self.w_hh, g4, h).t(),
                    T::one(),
                    MatMut::dense(&mut gates, batch, g4),
                );
            }
            let out_base = out_layout.offset(t);
            for b in 0..batch {
                let gr = &mut gates[b * g4..(b + 1) * g4];
                let cr = &mut cell[b * h..(b + 1) * h];
                let o_row = out_base + b * out_layout.batch_stride;
                for j in 0..h {
                    let i_g = sigmoid(gr[j]);
                    let f_g = sigmoid(gr[h + j]);
                    let c_g = gr[2 * h + j].tanh();
                    let o_g = sigmoid(gr[3 * h + j]);
                    gr[j] = i_g;
                    gr[h + j] = f_g;
                    gr[2 * h + j] = c_g;
                    gr[3 * h + j] = o_g;
                    let c = f_g * cr[j] + i_g * c_g;
                    cr[j] = c;
                    output[o_row + j] = o_g * c.tanh();
                }
            }
            if let Some(c) = cache.as_deref_mut() {
                c.gates.extend_from_slice(&gates);
                c.cells.extend_from_slice(&cell);
            }
            prev_step = Some(t);
        }
    }

    /// Backpropagation through time for a pass run with the same arguments.
    /// Parameter gradients are accumulated into `grads`; input gradients are
    /// accumulated into `d_input` when given.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward(
        &self,
        input: &[T],
        in_layout: SeqLayout,
        output: &[T],
        out_layout: SeqLayout,
        reverse: bool,
        cache: &LstmCache<T>,
        d_output: &[T],
        mut d_input: Option<&mut [T]>,
        grads: &mut Lstm<T>,
    ) {
        let (h, g4) = (self.hidden, 4 * self.hidden);
        let (steps, batch) = (in_layout.steps, in_layout.batch);
        let one = T::one();
        let mut dh_next = vec![T::zero(); batch * h];
        let mut dc_next = vec![T::zero(); batch * h];
        let mut d_gates = vec![T::zero(); batch * g4];
        let mut bias_grad = vec![T::zero(); g4];

        for s in (0..steps).rev() {
            let t = if reverse { steps - 1 - s } else { s };
            let gates = &cache.gates[s * batch * g4..(s + 1) * batch * g4];
            let cells = &cache.cells[s * batch * h..(s + 1) * batch * h];
            let prev_cells = (s > 0).then(|| &cache.cells[(s - 1) * batch * h..s * batch * h]);
            let out_base = out_layout.offset(t);
            for b in 0..batch {
                let gr = &gates[b * g4..(b + 1) * g4];
                let dg = &mut d_gates[b * g4..(b + 1) * g4];
                let o_row = out_base + b * out_layout.batch_stride;
                for j in 0..h {
                    let idx = b * h + j;
                    let (i_g, f_g, c_g, o_g) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                    let c = cells[idx];
                    let tc = c.tanh();
                    let dh = d_output[o_row + j] + dh_next[idx];
                    let dc = dc_next[idx] + dh * o_g * (one - tc * tc);
                    let c_prev = prev_cells.map_or(T::zero(), |p| p[idx]);
                    dg[j] = dc * c_g * i_g * (one - i_g);
                    dg[h + j] = dc * c_prev * f_g * (one - f_g);
                    dg[2 * h + j] = dc * i_g * (one - c_g * c_g);
                    dg[3 * h + j] = dh * tc * o_g * (one - o_g);
                    dc_next[idx] = dc * f_g;
                }
            }
            for row in d_gates.chunks_exact(g4) {
                for (acc, v) in bias_grad.iter_mut().zip(row) {
                    *acc = *acc + *v;
                }
            }
            let dg_mat = MatRef::dense(&d_gates, batch, g4);
            let x = MatRef::strided(&input[in_layout.offset(t)..], batch, self.input, in_layout.batch_stride);
            gemm(one, dg_mat.t(), x, one, MatMut::dense(&mut grads.w_ih, g4, self.input));
            if s > 0 {
                let tp = if reverse { t + 1 } else { t - 1 };
                let hp = MatRef::strided(&output[out_layout.offset(tp)..], batch, h, out_layout.batch_stride);
                gemm(one, dg_mat.t(), hp, one, MatMut::dense(&mut grads.w_hh, g4, h));
            }
            if let Some(dx) = d_input.as_deref_mut() {
                gemm(
                    one,
                    dg_mat,
                    MatRef::dense(&self.w_ih, g4, self.input),
                    one,
                    MatMut::strided(&mut dx[in_layout.offset(t)..], batch, self.input, in_layout.batch_stride),
                );
            }
            gemm(
                one,
                dg_mat,
                MatRef::dense(&self.w_hh, g4, h),
                T::zero(),
                MatMut::dense(&mut dh_next, batch, h),
            );
        }
        for ((a, b), g) in grads.b_ih.iter_mut().zip(grads.b_hh.iter_mut()).zip(&bias_grad) {
            *a = *a + *g;
            *b = *b + *g;
        }
    }
}
