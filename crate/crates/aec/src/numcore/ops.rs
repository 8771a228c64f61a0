//! Core op set: affine maps, causal unfolds, softmax, elementwise helpers.

use crate::numcore::graph::{BackwardCtx, Graph, GraphOp, TensorId};
use crate::numcore::kernels::{affine_rows, matmul_abt};
use crate::numcore::Tensor;
use crate::{Error, Result, Scalar};

/// Handles for one GRU's parameter tensors inside a graph.
#[derive(Clone, Copy, Debug)]
pub struct GruIds {
    pub w_ih: TensorId,
    pub w_hh: TensorId,
    pub b_ih: TensorId,
    pub b_hh: TensorId,
}

/// Mean over the row axis of a `(rows, width)` slab, ascending-row
/// accumulation then a single scale. Shared by the offline and streaming
/// paths so both round identically.
pub(crate) fn mean_rows<S: Scalar>(x: &[S], width: usize, out: &mut [S]) {
    let rows = x.len() / width;
    for o in out.iter_mut() {
        *o = S::zero();
    }
    for row in x.chunks_exact(width) {
        for (o, v) in out.iter_mut().zip(row) {
            *o = *o + *v;
        }
    }
    let inv = S::one() / S::of_usize(rows);
    for o in out.iter_mut() {
        *o = *o * inv;
    }
}

struct LinearOp {
    i_dim: usize,
    o_dim: usize,
}

impl<S: Scalar> GraphOp<S> for LinearOp {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        let (i_dim, o_dim) = (self.i_dim, self.o_dim);
        let g = ctx.grad_out;
        let rows = g.len() / o_dim;

        // d/dx = g * w^T
        let w = ctx.tensors[ctx.inputs[1].0].data();
        let mut dx = vec![S::zero(); rows * i_dim];
        matmul_abt(g, o_dim, w, &mut dx);
        let gx = &mut ctx.grads[ctx.inputs[0].0];
        for (a, b) in gx.iter_mut().zip(&dx) {
            *a = *a + *b;
        }

        // d/dw[i,o] = sum_rows x[row,i] * g[row,o]
        let x = ctx.tensors[ctx.inputs[0].0].data();
        let gw = &mut ctx.grads[ctx.inputs[1].0];
        for (xrow, grow) in x.chunks_exact(i_dim).zip(g.chunks_exact(o_dim)) {
            for (xi, gwrow) in xrow.iter().zip(gw.chunks_exact_mut(o_dim)) {
                let xi = *xi;
                for (gwv, gv) in gwrow.iter_mut().zip(grow) {
                    *gwv = *gwv + xi * *gv;
                }
            }
        }

        // d/db[o] = sum_rows g[row,o]
        let gb = &mut ctx.grads[ctx.inputs[2].0];
        for grow in g.chunks_exact(o_dim) {
            for (bv, gv) in gb.iter_mut().zip(grow) {
                *bv = *bv + *gv;
            }
        }
    }
}

struct SoftmaxRowsOp {
    width: usize,
}

impl<S: Scalar> GraphOp<S> for SoftmaxRowsOp {
    fn name(&self) -> &'static str {
        "softmax_rows"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        let s_all = ctx.tensors[ctx.output.0].data();
        let g_all = ctx.grad_out;
        let gx = &mut ctx.grads[ctx.inputs[0].0];
        for ((srow, grow), gxrow) in s_all
            .chunks_exact(self.width)
            .zip(g_all.chunks_exact(self.width))
            .zip(gx.chunks_exact_mut(self.width))
        {
            let mut dot = S::zero();
            for (sv, gv) in srow.iter().zip(grow) {
                dot = dot + *sv * *gv;
            }
            for ((gxv, sv), gv) in gxrow.iter_mut().zip(srow).zip(grow) {
                *gxv = *gxv + *sv * (*gv - dot);
            }
        }
    }
}

enum UnfoldAxis {
    Time,
    Freq,
}

struct UnfoldOp {
    axis: UnfoldAxis,
    kernel: usize,
    stride: usize,
    t: usize,
    f: usize,
    c: usize,
}

impl UnfoldOp {
    /// Source index along the unfolded axis for output position `p`, tap `j`.
    /// Negative positions are the causal zero padding.
    fn src(&self, p: usize, j: usize) -> Option<usize> {
        let pos = (p * self.stride + j) as isize - (self.kernel as isize - 1);
        if pos < 0 {
            None
        } else {
            Some(pos as usize)
        }
    }
}

impl<S: Scalar> GraphOp<S> for UnfoldOp {
    fn name(&self) -> &'static str {
        "unfold"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        let (t, f, c, k) = (self.t, self.f, self.c, self.kernel);
        let g = ctx.grad_out;
        let gx = &mut ctx.grads[ctx.inputs[0].0];
        match self.axis {
            UnfoldAxis::Time => {
                let t_out = out_len(t, self.stride);
                for to in 0..t_out {
                    for fo in 0..f {
                        let orow = &g[(to * f + fo) * k * c..][..k * c];
                        for j in 0..k {
                            if let Some(ti) = self.src(to, j) {
                                let dst = &mut gx[(ti * f + fo) * c..][..c];
                                let srcg = &orow[j * c..][..c];
                                for (d, s) in dst.iter_mut().zip(srcg) {
                                    *d = *d + *s;
                                }
                            }
                        }
                    }
                }
            }
            UnfoldAxis::Freq => {
                let f_out = out_len(f, self.stride);
                for to in 0..t {
                    for fo in 0..f_out {
                        let orow = &g[(to * f_out + fo) * k * c..][..k * c];
                        for j in 0..k {
                            if let Some(fi) = self.src(fo, j) {
                                let dst = &mut gx[(to * f + fi) * c..][..c];
                                let srcg = &orow[j * c..][..c];
                                for (d, s) in dst.iter_mut().zip(srcg) {
                                    *d = *d + *s;
                                }
                            }
                        }
                    }
                }            }
        }
    }
}

/// Output length along an unfolded axis of length `len` with causal padding
/// `kernel - 1`: windows start at every `stride` positions of the padded axis.
fn out_len(len: usize, stride: usize) -> usize {
    (len - 1) / stride + 1
}

struct AddOp;

impl<S: Scalar> GraphOp<S> for AddOp {
    fn name(&self) -> &'static str {
        "add"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        for k in 0..2 {
            let gin = &mut ctx.grads[ctx.inputs[k].0];
            for (a, g) in gin.iter_mut().zip(ctx.grad_out) {
                *a = *a + *g;
            }
        }
    }
}

struct MulOp;

impl<S: Scalar> GraphOp<S> for MulOp {
    fn name(&self) -> &'static str {
        "mul"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        for k in 0..2 {
            let other = ctx.tensors[ctx.inputs[1 - k].0].data();
            let gin = &mut ctx.grads[ctx.inputs[k].0];
            for ((a, g), o) in gin.iter_mut().zip(ctx.grad_out).zip(other) {
                *a = *a + *g * *o;
            }
        }
    }
}

struct ScaleOp<S> {
    c: S,
}

impl<S: Scalar> GraphOp<S> for ScaleOp<S> {
    fn name(&self) -> &'static str {
        "scale"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        let gin = &mut ctx.grads[ctx.inputs[0].0];
        for (a, g) in gin.iter_mut().zip(ctx.grad_out) {
            *a = *a + *g * self.c;
        }
    }
}

struct SumAllOp;

impl<S: Scalar> GraphOp<S> for SumAllOp {
    fn name(&self) -> &'static str {
        "sum_all"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        let g = ctx.grad_out[0];
        let gin = &mut ctx.grads[ctx.inputs[0].0];
        for a in gin.iter_mut() {
            *a = *a + g;
        }
    }
}

struct SigmoidOp;

impl<S: Scalar> GraphOp<S> for SigmoidOp {
    fn name(&self) -> &'static str {
        "sigmoid"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        let s = ctx.tensors[ctx.output.0].data();
        let gin = &mut ctx.grads[ctx.inputs[0].0];
        for ((a, g), sv) in gin.iter_mut().zip(ctx.grad_out).zip(s) {
            *a = *a + *g * *sv * (S::one() - *sv);
        }
    }
}

struct ReshapeOp;

impl<S: Scalar> GraphOp<S> for ReshapeOp {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        let gin = &mut ctx.grads[ctx.inputs[0].0];
        for (a, g) in gin.iter_mut().zip(ctx.grad_out) {
            *a = *a + *g;
        }
    }
}

struct ConcatLastOp {
    c1: usize,
    c2: usize,
}

impl<S: Scalar> GraphOp<S> for ConcatLastOp {
    fn name(&self) -> &'static str {
        "concat_last"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        let (c1, c2) = (self.c1, self.c2);
        let width = c1 + c2;
        for (row_idx, grow) in ctx.grad_out.chunks_exact(width).enumerate() {
            {
                let ga = &mut ctx.grads[ctx.inputs[0].0];
                let dst = &mut ga[row_idx * c1..][..c1];
                for (a, g) in dst.iter_mut().zip(&grow[..c1]) {
                    *a = *a + *g;
                }
            }
            {
                let gb = &mut ctx.grads[ctx.inputs[1].0];
                let dst = &mut gb[row_idx * c2..][..c2];
                for (a, g) in dst.iter_mut().zip(&grow[c1..]) {
                    *a = *a + *g;
                }
            }
        }
    }
}

struct MeanOverFreqOp {
    f: usize,
    c: usize,
}

impl<S: Scalar> GraphOp<S> for MeanOverFreqOp {
    fn name(&self) -> &'static str {
        "mean_over_freq"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        let inv = S::one() / S::of_usize(self.f);
        let gx = &mut ctx.grads[ctx.inputs[0].0];
        for (grow, gxslab) in ctx
            .grad_out
            .chunks_exact(self.c)
            .zip(gx.chunks_exact_mut(self.f * self.c))
        {
            for gxrow in gxslab.chunks_exact_mut(self.c) {
                for (a, g) in gxrow.iter_mut().zip(grow) {
                    *a = *a + *g * inv;
                }
            }
        }
    }
}

struct WeightedSumOp<S> {
    weights: Vec<S>,
}

impl<S: Scalar> GraphOp<S> for WeightedSumOp<S> {
    fn name(&self) -> &'static str {
        "weighted_sum"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, S>) {
        let g = ctx.grad_out[0];
        for (k, w) in self.weights.iter().enumerate() {
            let gin = &mut ctx.grads[ctx.inputs[k].0];
            gin[0] = gin[0] + g * *w;
        }
    }
}

impl<S: Scalar> Graph<S> {
    /// `x (..., i) * w (i, o) + b (o)`, batched over all leading axes.
    pub fn linear(&mut self, x: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let bs = self.shape(b).to_vec();
        if ws.len() != 2 || bs.len() != 1 || ws[1] != bs[0] {
            return Err(Error::dim(
                "linear",
                format!("weight {:?} and bias {:?} are inconsistent", ws, bs),
            ));
        }
        let i_dim = ws[0];
        let o_dim = ws[1];
        if xs.is_empty() || *xs.last().unwrap() != i_dim {
            return Err(Error::dim(
                "linear",
                format!("input {:?} does not end in weight rows {:?}", xs, ws),
            ));
        }
        let rows = self.value(x).numel() / i_dim;
        let mut out = vec![S::zero(); rows * o_dim];
        affine_rows(
            self.value(x).data(),
            i_dim,
            self.value(w).data(),
            self.value(b).data(),
            &mut out,
        );
        let mut oshape = xs;
        *oshape.last_mut().unwrap() = o_dim;
        Ok(self.push_node(
            vec![x, w, b],
            Tensor::new(oshape, out),
            Box::new(LinearOp { i_dim, o_dim }),
        ))
    }

    /// Softmax over the trailing axis.
    pub fn softmax_rows(&mut self, x: TensorId) -> Result<TensorId> {
        let xs = self.shape(x).to_vec();
        let width = *xs
            .last()
            .ok_or_else(|| Error::dim("softmax_rows", "rank-0 input".to_string()))?;
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_exact_mut(width) {
            crate::numcore::kernels::softmax_row(row);
        }
        Ok(self.push_node(
            vec![x],
            Tensor::new(xs, out),
            Box::new(SoftmaxRowsOp { width }),
        ))
    }

    /// Sliding windows along the time axis of a `(t, f, c)` tensor with
    /// `kernel - 1` zero frames prepended (causal). Output `(t', f, kernel*c)`
    /// with taps ordered oldest first.
    pub fn unfold_time(&mut self, x: TensorId, kernel: usize, stride: usize) -> Result<TensorId> {
        self.unfold(x, kernel, stride, UnfoldAxis::Time)
    }

    /// Same as [`Graph::unfold_time`] along the frequency axis; zero padding
    /// sits at the low-frequency edge.
    pub fn unfold_freq(&mut self, x: TensorId, kernel: usize, stride: usize) -> Result<TensorId> {
        self.unfold(x, kernel, stride, UnfoldAxis::Freq)
    }

    /// Rank-1 convenience: `(l)` in, `(l', kernel)` out.
    pub fn unfold_seq(&mut self, x: TensorId, kernel: usize, stride: usize) -> Result<TensorId> {
        let l = self.value(x).numel();
        let r3 = self.reshape(x, vec![l, 1, 1])?;
        let u = self.unfold_time(r3, kernel, stride)?;
        let l_out = self.shape(u)[0];
        self.reshape(u, vec![l_out, kernel])
    }

    fn unfold(
        &mut self,
        x: TensorId,
        kernel: usize,
        stride: usize,
        axis: UnfoldAxis,
    ) -> Result<TensorId> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 {
            return Err(Error::dim(
                "unfold",
                format!("expected rank-3 (t, f, c), got {:?}", xs),
            ));
        }
        if kernel == 0 || stride == 0 {
            return Err(Error::contract("unfold", "kernel and stride must be >= 1"));
        }
        let (t, f, c) = (xs[0], xs[1], xs[2]);
        let axis_len = match axis {
            UnfoldAxis::Time => t,
            UnfoldAxis::Freq => f,
        };
        if axis_len == 0 {
            return Err(Error::dim(
                "unfold",
                format!("kernel {} larger than padded axis of {:?}", kernel, xs),
            ));
        }
        let op = UnfoldOp {
            axis,
            kernel,
            stride,
            t,
            f,
            c,
        };
        let xd = self.value(x).data();
        let (oshape, mut out);
        match op.axis {
            UnfoldAxis::Time => {
                let t_out = out_len(t, stride);
                oshape = vec![t_out, f, kernel * c];
                out = vec![S::zero(); t_out * f * kernel * c];
                for to in 0..t_out {
                    for fo in 0..f {
                        let orow = &mut out[(to * f + fo) * kernel * c..][..kernel * c];
                        for j in 0..kernel {
                            if let Some(ti) = op.src(to, j) {
                                orow[j * c..][..c].copy_from_slice(&xd[(ti * f + fo) * c..][..c]);
                            }
                        }
                    }
                }
            }
            UnfoldAxis::Freq => {
                let f_out = out_len(f, stride);
                oshape = vec![t, f_out, kernel * c];
                out = vec![S::zero(); t * f_out * kernel * c];
                for to in 0..t {
                    for fo in 0..f_out {
                        let orow = &mut out[(to * f_out + fo) * kernel * c..][..kernel * c];
                        for j in 0..kernel {
                            if let Some(fi) = op.src(fo, j) {
                                orow[j * c..][..c].copy_from_slice(&xd[(to * f + fi) * c..][..c]);
                            }
                        }
                    }
                }
            }
        }
        Ok(self.push_node(vec![x], Tensor::new(oshape, out), Box::new(op)))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(
                "add",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let out: Vec<S> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| *x + *y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push_node(vec![a, b], Tensor::new(shape, out), Box::new(AddOp)))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(
                "mul",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let out: Vec<S> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| *x * *y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push_node(vec![a, b], Tensor::new(shape, out), Box::new(MulOp)))
    }

    pub fn scale(&mut self, x: TensorId, c: S) -> TensorId {
        let out: Vec<S> = self.value(x).data().iter().map(|v| *v * c).collect();
        let shape = self.shape(x).to_vec();
        self.push_node(vec![x], Tensor::new(shape, out), Box::new(ScaleOp { c }))
    }

    pub fn sum_all(&mut self, x: TensorId) -> TensorId {
        let s = self.value(x).data().iter().fold(S::zero(), |a, v| a + *v);
        self.push_node(vec![x], Tensor::scalar(s), Box::new(SumAllOp))
    }

    pub fn sigmoid(&mut self, x: TensorId) -> TensorId {
        let out: Vec<S> = self
            .value(x)
            .data()
            .iter()
            .map(|v| crate::numcore::kernels::sigmoid_scalar(*v))
            .collect();
        let shape = self.shape(x).to_vec();
        self.push_node(vec![x], Tensor::new(shape, out), Box::new(SigmoidOp))
    }

    pub fn reshape(&mut self, x: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() {
            return Err(Error::dim(
                "reshape",
                format!("{:?} -> {:?}", self.shape(x), shape),
            ));
        }
        let out = self.value(x).data().to_vec();
        Ok(self.push_node(vec![x], Tensor::new(shape, out), Box::new(ReshapeOp)))
    }

    /// Concatenate two tensors along the trailing axis; leading axes must match.
    pub fn concat_last(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != sb.len() || sa.is_empty() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(Error::dim(
                "concat_last",
                format!("{:?} vs {:?}", sa, sb),
            ));
        }
        let c1 = *sa.last().unwrap();
        let c2 = *sb.last().unwrap();
        let rows = self.value(a).numel() / c1;
        let mut out = vec![S::zero(); rows * (c1 + c2)];
        {
            let ad = self.value(a).data();
            let bd = self.value(b).data();
            for (row_idx, orow) in out.chunks_exact_mut(c1 + c2).enumerate() {
                orow[..c1].copy_from_slice(&ad[row_idx * c1..][..c1]);
                orow[c1..].copy_from_slice(&bd[row_idx * c2..][..c2]);
            }
        }
        let mut oshape = sa;
        *oshape.last_mut().unwrap() = c1 + c2;
        Ok(self.push_node(
            vec![a, b],
            Tensor::new(oshape, out),
            Box::new(ConcatLastOp { c1, c2 }),
        ))
    }

    /// `(t, f, c)` -> `(t, c)` mean pooling over frequency.
    pub fn mean_over_freq(&mut self, x: TensorId) -> Result<TensorId> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 {
            return Err(Error::dim(
                "mean_over_freq",
                format!("expected rank-3, got {:?}", xs),
            ));
        }
        let (t, f, c) = (xs[0], xs[1], xs[2]);
        let mut out = vec![S::zero(); t * c];
        for (slab, orow) in self
            .value(x)
            .data()
            .chunks_exact(f * c)
            .zip(out.chunks_exact_mut(c))
        {
            mean_rows(slab, c, orow);
        }
        Ok(self.push_node(
            vec![x],
            Tensor::new(vec![t, c], out),
            Box::new(MeanOverFreqOp { f, c }),
        ))
    }

    /// Weighted sum of scalar tensors.
    pub fn weighted_sum(&mut self, terms: &[(TensorId, S)]) -> Result<TensorId> {
        let mut acc = S::zero();
        for (id, w) in terms {
            if !self.value(*id).is_scalar() {
                return Err(Error::dim(
                    "weighted_sum",
                    format!("non-scalar term of shape {:?}", self.shape(*id)),
                ));
            }
            acc = acc + self.value(*id).item() * *w;
        }
        let inputs: Vec<TensorId> = terms.iter().map(|(id, _)| *id).collect();
        let weights: Vec<S> = terms.iter().map(|(_, w)| *w).collect();
        Ok(self.push_node(
            inputs,
            Tensor::scalar(acc),
            Box::new(WeightedSumOp { weights }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn linear_identity_passes_input_through() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), false);
        let eye = Tensor::from_fn(vec![3, 3], |i| if i / 3 == i % 3 { 1.0 } else { 0.0 });
        let w = g.leaf(eye, false);
        let b = g.leaf(Tensor::zeros(vec![3]), false);
        let y = g.linear(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn linear_matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (rows, i_dim, o_dim) = (5, 4, 3);
        let xv = rand_vec(&mut rng, rows * i_dim);
        let wv = rand_vec(&mut rng, i_dim * o_dim);
        let bv = rand_vec(&mut rng, o_dim);

        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(vec![rows, i_dim], xv.clone()), false);
        let w = g.leaf(Tensor::new(vec![i_dim, o_dim], wv.clone()), false);
        let b = g.leaf(Tensor::new(vec![o_dim], bv.clone()), false);
        let y = g.linear(x, w, b).unwrap();

        for r in 0..rows {
            for o in 0..o_dim {
                let mut want = bv[o];
                for i in 0..i_dim {
                    want += xv[r * i_dim + i] * wv[i * o_dim + o];
                }
                let got = g.value(y).data()[r * o_dim + o];
                assert!((got - want).abs() < 1e-12, "({r},{o}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn linear_shape_mismatch_names_both_shapes() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros(vec![2, 3]), false);
        let w = g.leaf(Tensor::zeros(vec![4, 2]), false);
        let b = g.leaf(Tensor::zeros(vec![2]), false);
        let err = g.linear(x, w, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[4, 2]"), "{err}");
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(vec![4], vec![3.0; 4]), false);
        let y = g.softmax_rows(x).unwrap();
        for v in g.value(y).data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_matches_exp_normalize_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits = rand_vec(&mut rng, 7);
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(vec![7], logits.clone()), false);
        let y = g.softmax_rows(x).unwrap();
        let z: f64 = logits.iter().map(|v| v.exp()).sum();
        for (got, l) in g.value(y).data().iter().zip(&logits) {
            assert!((got - l.exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn unfold_seq_causal_windows() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]), false);
        let y = g.unfold_seq(x, 2, 1).unwrap();
        assert_eq!(g.shape(y), &[3, 2]);
        assert_eq!(g.value(y).data(), &[0.0, 1.0, 1.0, 2.0, 2.0, 3.0]);
    }

    #[test]
    fn unfold_kernel_one_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xv = rand_vec(&mut rng, 4 * 3 * 2);
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(vec![4, 3, 2], xv.clone()), false);
        let y = g.unfold_time(x, 1, 1).unwrap();
        assert_eq!(g.value(y).data(), &xv[..]);
    }

    #[test]
    fn unfold_matches_index_arithmetic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (t, f, c, k) = (6, 2, 3, 4);
        let xv = rand_vec(&mut rng, t * f * c);
        for stride in [1usize, 2] {
            let mut g = Graph::<f64>::new();
            let x = g.leaf(Tensor::new(vec![t, f, c], xv.clone()), false);
            let y = g.unfold_time(x, k, stride).unwrap();
            let t_out = (t - 1) / stride + 1;
            assert_eq!(g.shape(y), &[t_out, f, k * c]);
            let yd = g.value(y).data();
            for to in 0..t_out {
                for fo in 0..f {
                    for j in 0..k {
                        for cc in 0..c {
                            let pos = (to * stride + j) as isize - (k as isize - 1);
                            let want = if pos < 0 {
                                0.0
                            } else {
                                xv[(pos as usize * f + fo) * c + cc]
                            };
                            let got = yd[(to * f + fo) * k * c + j * c + cc];
                            assert_eq!(got, want);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut g = Graph::<f64>::new();
        let p = g.leaf(Tensor::new(vec![5], vec![0.3, -1.0, 2.0, 0.0, 4.5]), true);
        let loss = g.sum_all(p);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(p).unwrap(), &[1.0; 5]);
    }

    #[test]
    fn backward_of_half_squared_norm_is_the_tensor() {
        let data = vec![0.5, -2.0, 1.25];
        let mut g = Graph::<f64>::new();
        let p = g.leaf(Tensor::new(vec![3], data.clone()), true);
        let sq = g.mul(p, p).unwrap();
        let s = g.sum_all(sq);
        let loss = g.scale(s, 0.5);
        g.backward(loss).unwrap();
        for (got, want) in g.grad(p).unwrap().iter().zip(&data) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_backward_calls_are_deterministic() {
        let mut g = Graph::<f64>::new();
        let p = g.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]), true);
        let sq = g.mul(p, p).unwrap();
        let loss = g.sum_all(sq);
        g.backward(loss).unwrap();
        let first = g.grad(p).unwrap().to_vec();
        g.backward(loss).unwrap();
        assert_eq!(first, g.grad(p).unwrap());
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut g = Graph::<f64>::new();
        let p = g.leaf(Tensor::new(vec![2], vec![1.0, 2.0]), true);
        assert!(g.backward(p).is_err());
    }

    #[test]
    fn concat_and_mean_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Tensor::from_fn(vec![2, 2, 3], |i| i as f64), false);
        let b = g.leaf(Tensor::from_fn(vec![2, 2, 2], |i| -(i as f64)), false);
        let cat = g.concat_last(a, b).unwrap();
        assert_eq!(g.shape(cat), &[2, 2, 5]);
        let m = g.mean_over_freq(a).unwrap();
        assert_eq!(g.shape(m), &[2, 3]);
        // row (t=0, c=0): mean of x[0,0,0]=0 and x[0,1,0]=3
        assert!((g.value(m).data()[0] - 1.5).abs() < 1e-12);
    }
}
