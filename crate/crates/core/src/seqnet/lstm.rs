//! Single-direction LSTM pass and its backpropagation through time.
//!
//! ```text
//! a_t = W_in x_t + W_rec h_{t-1} + b          (gate blocks i, f, g, o)
//! i = σ(a_i)  f = σ(a_f)  g = tanh(a_g)  o = σ(a_o)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```

use ndarray::{s, Array2, ArrayView2, Axis};

use super::params::{DirectionParams, GATES};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) struct DirectionCache {
    inputs: Array2<f64>,
    /// Activated gates per step, blocks i, f, g, o.
    gates: Array2<f64>,
    cells: Array2<f64>,
    cell_tanh: Array2<f64>,
    pub hidden: Array2<f64>,
}

pub(crate) fn direction_forward(p: &DirectionParams, inputs: Array2<f64>) -> DirectionCache {
    let steps = inputs.nrows();
    let h = p.size();
    let mut gates = inputs.dot(&p.w_in.t());
    gates += &p.bias;
    let mut cells = Array2::zeros((steps, h));
    let mut cell_tanh = Array2::zeros((steps, h));
    let mut hidden = Array2::<f64>::zeros((steps, h));
    for t in 0..steps {
        if t > 0 {
            let rec = p.w_rec.dot(&hidden.row(t - 1));
            let mut row = gates.row_mut(t);
            row += &rec;
        }
        let mut row = gates.row_mut(t);
        for k in 0..GATES * h {
            row[k] = if k / h == 2 { row[k].tanh() } else { sigmoid(row[k]) };
        }
        for k in 0..h {
            let (i, f, g, o) = (row[k], row[h + k], row[2 * h + k], row[3 * h + k]);
            let prev = if t > 0 { cells[[t - 1, k]] } else { 0.0 };
            let c = f * prev + i * g;
            let tc = c.tanh();
            cells[[t, k]] = c;
            cell_tanh[[t, k]] = tc;
            hidden[[t, k]] = o * tc;
        }
    }
    DirectionCache {
        inputs,
        gates,
        cells,
        cell_tanh,
        hidden,
    }
}

/// Accumulates parameter gradients into `grads` and returns the gradient
/// with respect to the inputs. `d_hidden` is the loss gradient arriving at
/// each `h_t` from the layer above.
pub(crate) fn direction_backward(
    p: &DirectionParams,
    cache: &DirectionCache,
    d_hidden: ArrayView2<'_, f64>,
    grads: &mut DirectionParams,
) -> Array2<f64> {
    let steps = cache.inputs.nrows();
    let h = p.size();
    let mut d_pre = Array2::<f64>::zeros((steps, GATES * h));
    let mut dh_next = ndarray::Array1::<f64>::zeros(h);
    let mut dc_next = ndarray::Array1::<f64>::zeros(h);
    for t in (0..steps).rev() {
        let gates = cache.gates.row(t);
        let mut da = d_pre.row_mut(t);
        for k in 0..h {
            let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            let tc = cache.cell_tanh[[t, k]];
            let dh = d_hidden[[t, k]] + dh_next[k];
            let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
            let prev_c = if t > 0 { cache.cells[[t - 1, k]] } else { 0.0 };
            da[k] = dc * g * i * (1.0 - i);
            da[h + k] = dc * prev_c * f * (1.0 - f);
            da[2 * h + k] = dc * i * (1.0 - g * g);
            da[3 * h + k] = dh * tc * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        dh_next = p.w_rec.t().dot(&da);
    }
    grads.w_in += &d_pre.t().dot(&cache.inputs);
    grads.bias += &d_pre.sum_axis(Axis(0));
    if steps > 1 {
        let d_later = d_pre.slice(s![1.., ..]);
        let h_earlier = cache.hidden.slice(s![..steps - 1, ..]);
        grads.w_rec += &d_later.t().dot(&h_earlier);
    }
    d_pre.dot(&p.w_in)
}
