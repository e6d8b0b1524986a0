//! Batched evaluation kernels. Rows of every buffer are sample points.
//!
//! `pullback` differentiates `J = Σ_b w_v[b]·V̂(x_b) + w_g[b]ᵀ∇ₓV̂(x_b)` with
//! respect to all parameters. The input-gradient term is rewritten as a
//! directional derivative, `w_gᵀ∇ₓV̂(x) = d/dt V̂(x + t·w_g)`, carried forward
//! as a tangent alongside the primal pass; reverse mode is then applied to
//! the combined (primal, tangent) computation. Sigmoid derivatives appear as
//! `σ' = σ(1−σ)` in the tangent and `σ'' = σ'(1−2σ)` in its adjoint.

use super::NetParams;

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `C = alpha·A·B + beta·C` for row/column-strided operands.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                c[i * rsc + j * csc] *= beta;
            }
        }
        return;
    }
    assert!((m - 1) * rsa + (k - 1) * csa < a.len());
    assert!((k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// `out (rows×n_out) = a (rows×n_in) · Wᵀ` with `W` stored `n_out×n_in`.
fn mul_wt(rows: usize, n_in: usize, n_out: usize, a: &[f64], w: &[f64], out: &mut [f64]) {
    gemm(rows, n_in, n_out, a, (n_in, 1), w, (1, n_in), 0.0, out, (n_out, 1));
}

/// `out (rows×n_in) = g (rows×n_out) · W`.
fn mul_w(rows: usize, n_in: usize, n_out: usize, g: &[f64], w: &[f64], out: &mut [f64]) {
    gemm(rows, n_out, n_in, g, (n_out, 1), w, (n_in, 1), 0.0, out, (n_in, 1));
}

/// `out (n_out×n_in) += gᵀ (n_out×rows) · a (rows×n_in)`.
fn acc_gt_a(rows: usize, n_in: usize, n_out: usize, g: &[f64], a: &[f64], out: &mut [f64]) {
    gemm(n_out, rows, n_in, g, (1, n_out), a, (n_in, 1), 1.0, out, (n_in, 1));
}

/// Primal activations for a batch of points.
pub struct Forward<'a> {
    rows: usize,
    inputs: &'a [f64],
    /// σ(z) of every hidden layer.
    hidden: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

pub fn forward<'a>(params: &NetParams, xs: &'a [f64]) -> Forward<'a> {
    let layout = params.layout();
    let dims = layout.dims();
    let rows = xs.len() / dims[0];
    let hidden_count = dims.len() - 2;
    let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(hidden_count);
    for l in 0..hidden_count {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        let input = if l == 0 { xs } else { &hidden[l - 1] };
        let mut z = vec![0.0; rows * n_out];
        mul_wt(rows, n_in, n_out, input, params.weights(l), &mut z);
        let b = params.bias(l);
        for row in z.chunks_exact_mut(n_out) {
            for (zi, bi) in row.iter_mut().zip(b) {
                *zi = sigmoid(*zi + bi);
            }
        }
        hidden.push(z);
    }
    let last = hidden_count;
    let (n_in, w, c) = (dims[last], params.weights(last), params.bias(last)[0]);
    let top: &[f64] = if last == 0 { xs } else { &hidden[last - 1] };
    let values = top
        .chunks_exact(n_in)
        .map(|a| a.iter().zip(w).map(|(ai, wi)| ai * wi).sum::<f64>() + c)
        .collect();
    Forward {
        rows,
        inputs: xs,
        hidden,
        values,
    }
}

/// Input gradients and the per-layer adjoints `∂V̂/∂z` that produced them.
pub struct InputAdjoint {
    pub grads: Vec<f64>,
    /// `∂V̂/∂z_l` for every hidden layer `l` (rows×width).
    dz: Vec<Vec<f64>>,
}

/// Input gradients `∇ₓV̂` (rows×n).
pub fn input_gradient(params: &NetParams, fwd: &Forward) -> InputAdjoint {
    let dims = params.layout().dims();
    let rows = fwd.rows;
    let hidden_count = dims.len() - 2;
    let w_out = params.weights(hidden_count);
    let mut d: Vec<f64> = w_out.iter().copied().cycle().take(rows * dims[hidden_count]).collect();
    let mut dz = vec![Vec::new(); hidden_count];
    for l in (0..hidden_count).rev() {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        for (di, s) in d.iter_mut().zip(&fwd.hidden[l]) {
            *di *= s * (1.0 - s);
        }
        let mut prev = vec![0.0; rows * n_in];
        mul_w(rows, n_in, n_out, &d, params.weights(l), &mut prev);
        dz[l] = std::mem::replace(&mut d, prev);
    }
    InputAdjoint { grads: d, dz }
}

/// Adds `∂/∂θ Σ_b (w_v[b]·V̂ + w_g[b]ᵀ∇ₓV̂)` into `grad`.
pub fn pullback(
    params: &NetParams,
    fwd: &Forward,
    adj: &InputAdjoint,
    w_v: &[f64],
    w_g: &[f64],
    grad: &mut [f64],
) {
    let layout = params.layout();
    let dims = layout.dims();
    let rows = fwd.rows;
    let hidden_count = dims.len() - 2;
    debug_assert_eq!(w_v.len(), rows);
    debug_assert_eq!(w_g.len(), rows * dims[0]);

    // Tangent pass: ȧ₀ = w_g, ż = ȧ Wᵀ, ȧ' = σ'(z) ⊙ ż.
    let mut tangents_in: Vec<Vec<f64>> = Vec::with_capacity(hidden_count + 1);
    let mut tangents_z: Vec<Vec<f64>> = Vec::with_capacity(hidden_count);
    tangents_in.push(w_g.to_vec());
    for l in 0..hidden_count {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        let mut zdot = vec![0.0; rows * n_out];
        mul_wt(rows, n_in, n_out, &tangents_in[l], params.weights(l), &mut zdot);
        let adot: Vec<f64> = zdot.iter().zip(&fwd.hidden[l]).map(|(zd, s)| s * (1.0 - s) * zd).collect();
        tangents_z.push(zdot);
        tangents_in.push(adot);
    }

    // Output layer: J_b = w_v[b]·(a·w + c) + ȧ·w.
    let top_dim = dims[hidden_count];
    let top: &[f64] = if hidden_count == 0 { fwd.inputs } else { &fwd.hidden[hidden_count - 1] };
    let top_dot = &tangents_in[hidden_count];
    let w_out = params.weights(hidden_count).to_vec();
    {
        let (w_off, b_off) = layout.offsets(hidden_count);
        for b in 0..rows {
            let a = &top[b * top_dim..(b + 1) * top_dim];
            let ad = &top_dot[b * top_dim..(b + 1) * top_dim];
            for j in 0..top_dim {
                grad[w_off + j] += w_v[b] * a[j] + ad[j];
            }
        }
        grad[b_off] += w_v.iter().sum::<f64>();
    }
    if hidden_count == 0 {
        return;
    }

    // Adjoint of the primal activations. The adjoint of the tangent
    // activations is ∂V̂/∂a, already available from the input gradient, so
    // the tangent pre-activation adjoint is adj.dz[l].
    let mut abar: Vec<f64> = (0..rows).flat_map(|b| w_out.iter().map(move |w| w_v[b] * w)).collect();

    for l in (0..hidden_count).rev() {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        let s = &fwd.hidden[l];
        let zdot = &tangents_z[l];
        let zdbar = &adj.dz[l];
        // zbar = abar⊙σ' + acheck⊙ż⊙σ'' with σ'' = σ'(1−2σ) and acheck⊙σ' = zdbar.
        let zbar: Vec<f64> = s
            .iter()
            .zip(&abar)
            .zip(zdbar.iter().zip(zdot))
            .map(|((&si, &ab), (&zdb, &zd))| ab * si * (1.0 - si) + zdb * zd * (1.0 - 2.0 * si))
            .collect();
        let input: &[f64] = if l == 0 { fwd.inputs } else { &fwd.hidden[l - 1] };
        let (w_off, b_off) = layout.offsets(l);
        let gw = &mut grad[w_off..w_off + n_out * n_in];
        acc_gt_a(rows, n_in, n_out, &zbar, input, gw);
        acc_gt_a(rows, n_in, n_out, zdbar, &tangents_in[l], gw);
        let gb = &mut grad[b_off..b_off + n_out];
        for row in zbar.chunks_exact(n_out) {
            for (g, z) in gb.iter_mut().zip(row) {
                *g += z;
            }
        }
        if l > 0 {
            abar = vec![0.0; rows * n_in];
            mul_w(rows, n_in, n_out, &zbar, params.weights(l), &mut abar);
        }
    }
}
