use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::{Batch, Scalar};

/// One direction of one LSTM layer. Gate blocks are ordered input, forget,
/// cell, output along the `4 * hidden` axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm<F> {
    pub w_ih: Array2<F>,
    pub w_hh: Array2<F>,
    pub bias: Array1<F>,
}

/// Activations kept for the backward pass, one row per batch row.
pub(crate) struct DirCache<F> {
    /// Post-activation gates `[i f g o]`.
    gates: Array2<F>,
    /// Cell state, zero at pad positions.
    c: Array2<F>,
    /// `tanh` of the unmasked cell state.
    tanh_c: Array2<F>,
    /// Hidden state, zero at pad positions.
    pub(crate) h: Array2<F>,
}

fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

impl<F: Scalar> Lstm<F> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Lstm {
            w_ih: Array2::zeros((input, 4 * hidden)),
            w_hh: Array2::zeros((hidden, 4 * hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Lstm {
            w_ih: Array2::zeros(self.w_ih.raw_dim()),
            w_hh: Array2::zeros(self.w_hh.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.nrows()
    }

    /// Runs over the time axis, right to left when `reverse`. Each sequence
    /// starts from a zero state at its own first (or last) real position.
    pub(crate) fn forward(&self, x: &Array2<F>, batch: &Batch, reverse: bool) -> DirCache<F> {
        let hd = self.hidden();
        let g4 = 4 * hd;
        let (bs, width) = (batch.size, batch.width);
        let rows = batch.rows();
        let mut gates = x.dot(&self.w_ih) + &self.bias;
        let mut c = Array2::zeros((rows, hd));
        let mut tanh_c = Array2::zeros((rows, hd));
        let mut h = Array2::zeros((rows, hd));
        let mut h_prev: Array2<F> = Array2::zeros((bs, hd));
        let mut c_prev: Array2<F> = Array2::zeros((bs, hd));

        for step in 0..width {
            let t = if reverse { width - 1 - step } else { step };
            let r0 = t * bs;
            let rec = h_prev.dot(&self.w_hh);
            {
                let mut z = gates.slice_mut(s![r0..r0 + bs, ..]);
                z += &rec;
            }
            let z = gates.as_slice_mut().expect("standard layout");
            let cs = c.as_slice_mut().expect("standard layout");
            let ts = tanh_c.as_slice_mut().expect("standard layout");
            let hs = h.as_slice_mut().expect("standard layout");
            let cp = c_prev.as_slice().expect("standard layout");
            for b in 0..bs {
                let r = r0 + b;
                let live = batch.is_live(b, t);
                let zr = &mut z[r * g4..(r + 1) * g4];
                for j in 0..hd {
                    let i = sigmoid(zr[j]);
                    let f = sigmoid(zr[hd + j]);
                    let g = zr[2 * hd + j].tanh();
                    let o = sigmoid(zr[3 * hd + j]);
                    zr[j] = i;
                    zr[hd + j] = f;
                    zr[2 * hd + j] = g;
                    zr[3 * hd + j] = o;
                    let cell = f * cp[b * hd + j] + i * g;
                    let tc = cell.tanh();
                    ts[r * hd + j] = tc;
                    if live {
                        cs[r * hd + j] = cell;
                        hs[r * hd + j] = o * tc;
                    }
                }
            }
            h_prev.assign(&h.slice(s![r0..r0 + bs, ..]));
            c_prev.assign(&c.slice(s![r0..r0 + bs, ..]));
        }
        DirCache {
            gates,
            c,
            tanh_c,
            h,
        }
    }

    /// Back-propagates `d_h` (gradient w.r.t. this direction's hidden states),
    /// accumulating parameter gradients into `grad` and returning the gradient
    /// w.r.t. the layer input.
    pub(crate) fn backward(
        &self,
        cache: &DirCache<F>,
        x: &Array2<F>,
        d_h: ArrayView2<'_, F>,
        batch: &Batch,
        reverse: bool,
        grad: &mut Lstm<F>,
    ) -> Array2<F> {
        let hd = self.hidden();
        let g4 = 4 * hd;
        let (bs, width) = (batch.size, batch.width);
        let rows = batch.rows();
        let mut dz: Array2<F> = Array2::zeros((rows, g4));
        let mut h_prev_all: Array2<F> = Array2::zeros((rows, hd));
        let mut dh_next: Array2<F> = Array2::zeros((bs, hd));
        let mut dc_next: Array2<F> = Array2::zeros((bs, hd));
        let gates = cache.gates.as_slice().expect("standard layout");
        let cs = cache.c.as_slice().expect("standard layout");
        let ts = cache.tanh_c.as_slice().expect("standard layout");
        let one = F::one();

        for step in (0..width).rev() {
            let t = if reverse { width - 1 - step } else { step };
            let prev_t = match (step, reverse) {
                (0, _) => None,
                (_, false) => Some(t - 1),
                (_, true) => Some(t + 1),
            };
            let r0 = t * bs;
            if let Some(pt) = prev_t {
                h_prev_all
                    .slice_mut(s![r0..r0 + bs, ..])
                    .assign(&cache.h.slice(s![pt * bs..(pt + 1) * bs, ..]));
            }
            {
                let dzs = dz.as_slice_mut().expect("standard layout");
                let dhn = dh_next.as_slice().expect("standard layout");
                let dcn = dc_next.as_slice_mut().expect("standard layout");
                for b in 0..bs {
                    let r = r0 + b;
                    if !batch.is_live(b, t) {
                        for j in 0..hd {
                            dcn[b * hd + j] = F::zero();
                        }
                        continue;
                    }
                    let gr = &gates[r * g4..(r + 1) * g4];
                    let dzr = &mut dzs[r * g4..(r + 1) * g4];
                    for j in 0..hd {
                        let (i, f, g, o) = (gr[j], gr[hd + j], gr[2 * hd + j], gr[3 * hd + j]);
                        let tc = ts[r * hd + j];
                        let c_prev = prev_t.map_or(F::zero(), |pt| cs[(pt * bs + b) * hd + j]);
                        let dh = d_h[[r, j]] + dhn[b * hd + j];
                        let dc = dcn[b * hd + j] + dh * o * (one - tc * tc);
                        dzr[j] = dc * g * i * (one - i);
                        dzr[hd + j] = dc * c_prev * f * (one - f);
                        dzr[2 * hd + j] = dc * i * (one - g * g);
                        dzr[3 * hd + j] = dh * tc * o * (one - o);
                        dcn[b * hd + j] = dc * f;
                    }
                }
            }
            dh_next = dz.slice(s![r0..r0 + bs, ..]).dot(&self.w_hh.t());
        }
        grad.w_hh += &h_prev_all.t().dot(&dz);
        grad.w_ih += &x.t().dot(&dz);
        grad.bias += &dz.sum_axis(Axis(0));
        dz.dot(&self.w_ih.t())
    }
}
