//! Numeric kernels shared by the tape and by eager callers.
//!
//! Every forward kernel here has a matching backward kernel derived by hand;
//! the pairing is exercised against finite differences in the crate tests.
//! Keeping the kernels free of tape bookkeeping means an eager call and a
//! recorded call run bit-identical arithmetic.

/// Cosine clamp used by the differentiable angular loss. Slightly inside
/// [-1, 1] so the `acos` derivative stays finite; the gradient is defined as
/// zero in the clamped region.
pub(crate) const COS_CLAMP: f64 = 1.0 - 1e-7;

// --- convolution -----------------------------------------------------------

/// Same-padded cross-correlation, `input [cin,h,w] -> out [cout,h,w]`.
///
/// Padding is asymmetric for even kernels: `(k-1)/2` on the left/top and the
/// remainder on the right/bottom, with zero fill.
pub(crate) fn conv2d_fwd(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    filters: &[f64],
    cout: usize,
    k: usize,
    bias: &[f64],
) -> Vec<f64> {
    let pad = (k - 1) / 2;
    let mut out = vec![0.0; cout * h * w];
    for o in 0..cout {
        let ochan = &mut out[o * h * w..(o + 1) * h * w];
        ochan.fill(bias[o]);
        for ci in 0..cin {
            let ichan = &input[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                let ylo = pad.saturating_sub(ky);
                let yhi = (h + pad).saturating_sub(ky).min(h);
                for kx in 0..k {
                    let wgt = filters[((o * cin + ci) * k + ky) * k + kx];
                    let xlo = pad.saturating_sub(kx);
                    let xhi = (w + pad).saturating_sub(kx).min(w);
                    for y in ylo..yhi {
                        let iy = y + ky - pad;
                        let irow = &ichan[iy * w..(iy + 1) * w];
                        let orow = &mut ochan[y * w..(y + 1) * w];
                        for x in xlo..xhi {
                            orow[x] += wgt * irow[x + kx - pad];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of [`conv2d_fwd`] with respect to input, filters, and bias.
pub(crate) fn conv2d_bwd(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    filters: &[f64],
    cout: usize,
    k: usize,
    gout: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let pad = (k - 1) / 2;
    let mut ginput = vec![0.0; cin * h * w];
    let mut gfilters = vec![0.0; cout * cin * k * k];
    let mut gbias = vec![0.0; cout];
    for o in 0..cout {
        let gchan = &gout[o * h * w..(o + 1) * h * w];
        gbias[o] = gchan.iter().sum();
        for ci in 0..cin {
            let ichan = &input[ci * h * w..(ci + 1) * h * w];
            let gichan = &mut ginput[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                let ylo = pad.saturating_sub(ky);
                let yhi = (h + pad).saturating_sub(ky).min(h);
                for kx in 0..k {
                    let xlo = pad.saturating_sub(kx);
                    let xhi = (w + pad).saturating_sub(kx).min(w);
                    let wgt = filters[((o * cin + ci) * k + ky) * k + kx];
                    let mut gw = 0.0;
                    for y in ylo..yhi {
                        let iy = y + ky - pad;
                        let irow = &ichan[iy * w..(iy + 1) * w];
                        let girow = &mut gichan[iy * w..(iy + 1) * w];
                        let grow = &gchan[y * w..(y + 1) * w];
                        for x in xlo..xhi {
                            let g = grow[x];
                            gw += g * irow[x + kx - pad];
                            girow[x + kx - pad] += g * wgt;
                        }
                    }
                    gfilters[((o * cin + ci) * k + ky) * k + kx] += gw;
                }
            }
        }
    }
    (ginput, gfilters, gbias)
}

// --- max pooling ------------------------------------------------------------

/// 2x2 max pooling with stride 2; trailing odd rows/columns are dropped.
/// Ties keep the first maximum in row-major scan order. Returns the pooled
/// map and the flat input index of each selected element.
pub(crate) fn maxpool2_fwd(input: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (h2, w2) = (h / 2, w / 2);
    let mut out = vec![0.0; c * h2 * w2];
    let mut arg = vec![0usize; c * h2 * w2];
    for ch in 0..c {
        for y2 in 0..h2 {
            for x2 in 0..w2 {
                let base = ch * h * w + 2 * y2 * w + 2 * x2;
                let mut best = base;
                let mut val = input[base];
                for &cand in &[base + 1, base + w, base + w + 1] {
                    if input[cand] > val {
                        val = input[cand];
                        best = cand;
                    }
                }
                let oi = ch * h2 * w2 + y2 * w2 + x2;
                out[oi] = val;
                arg[oi] = best;
            }
        }
    }
    (out, arg)
}

// --- dense ------------------------------------------------------------------

/// Affine map `y[j] = b[j] + sum_i x[i] * w[i*m + j]` with `w` stored `[n,m]`.
pub(crate) fn dense_fwd(x: &[f64], weight: &[f64], bias: &[f64], n: usize, m: usize) -> Vec<f64> {
    let mut y = bias.to_vec();
    for i in 0..n {
        let xi = x[i];
        let row = &weight[i * m..(i + 1) * m];
        for (yj, wj) in y.iter_mut().zip(row) {
            *yj += xi * wj;
        }
    }
    y
}

pub(crate) fn dense_bwd(
    x: &[f64],
    weight: &[f64],
    n: usize,
    m: usize,
    gout: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; n];
    let mut gw = vec![0.0; n * m];
    for i in 0..n {
        let row = &weight[i * m..(i + 1) * m];
        let grow = &mut gw[i * m..(i + 1) * m];
        let xi = x[i];
        let mut acc = 0.0;
        for j in 0..m {
            acc += gout[j] * row[j];
            grow[j] = xi * gout[j];
        }
        gx[i] = acc;
    }
    (gx, gw, gout.to_vec())
}

// --- softmax ----------------------------------------------------------------

/// Numerically stable softmax over a vector.
pub(crate) fn softmax_fwd(x: &[f64]) -> Vec<f64> {
    let mx = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut y: Vec<f64> = x.iter().map(|v| (v - mx).exp()).collect();
    let sum: f64 = y.iter().sum();
    for v in y.iter_mut() {
        *v /= sum;
    }
    y
}

/// `gx_i = y_i * (g_i - sum_j g_j y_j)`.
pub(crate) fn softmax_bwd(y: &[f64], gout: &[f64]) -> Vec<f64> {
    let dot: f64 = y.iter().zip(gout).map(|(a, b)| a * b).sum();
    y.iter().zip(gout).map(|(yi, gi)| yi * (gi - dot)).collect()
}

// --- bag-of-features pooling --------------------------------------------------

/// Per-row values saved by the forward pass and reused by the backward pass.
pub(crate) struct BofSaved {
    /// Soft-assignment memberships, `[n, k]`.
    pub memberships: Vec<f64>,
    /// Euclidean distances to the codewords, `[n, k]`.
    pub dists: Vec<f64>,
}

/// Fused RBF soft assignment and mean pooling.
///
/// For each feature row `x_j` the membership of codeword `k` is
/// `exp(-d_jk / rho_k) / sum_m exp(-d_jm / rho_m)` with `d` the plain
/// (unsquared) Euclidean distance; the histogram is the mean membership per
/// codeword. Exponentials are shifted by the per-row maximum, which cancels
/// in the ratio. Each bin is summed over rows in ascending value order so the
/// histogram is bitwise invariant to permutations of the feature rows.
pub(crate) fn bof_fwd(
    features: &[f64],
    n: usize,
    d: usize,
    centers: &[f64],
    k: usize,
    scales: &[f64],
) -> (Vec<f64>, BofSaved) {
    let mut memberships = vec![0.0; n * k];
    let mut dists = vec![0.0; n * k];
    for j in 0..n {
        let x = &features[j * d..(j + 1) * d];
        let row = &mut memberships[j * k..(j + 1) * k];
        let drow = &mut dists[j * k..(j + 1) * k];
        let mut zmax = f64::NEG_INFINITY;
        for kk in 0..k {
            let c = &centers[kk * d..(kk + 1) * d];
            let mut sq = 0.0;
            for dim in 0..d {
                let t = x[dim] - c[dim];
                sq += t * t;
            }
            let dist = sq.sqrt();
            drow[kk] = dist;
            let z = -dist / scales[kk];
            row[kk] = z;
            if z > zmax {
                zmax = z;
            }
        }
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - zmax).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    let mut hist = vec![0.0; k];
    let mut column = vec![0.0; n];
    for kk in 0..k {
        for j in 0..n {
            column[j] = memberships[j * k + kk];
        }
        column.sort_unstable_by(|a, b| a.partial_cmp(b).expect("memberships are finite"));
        hist[kk] = column.iter().sum::<f64>() / n as f64;
    }
    (
        hist,
        BofSaved {
            memberships,
            dists,
        },
    )
}

/// Gradients of [`bof_fwd`] with respect to features, centers, and the
/// (positive) scales `rho`.
///
/// With `phi` the membership row and `u_k = ghist_k / n`, the softmax pullback
/// per row is `gz_k = phi_k * (u_k - sum_m u_m phi_m)`; then
/// `gd_k = -gz_k / rho_k`, `grho_k += gz_k * d_k / rho_k^2`, and the distance
/// pullback distributes `gd_k` along the unit vector `(x - v_k) / d_k`
/// (skipped at `d_k = 0`, where the subgradient zero is used).
pub(crate) fn bof_bwd(
    features: &[f64],
    n: usize,
    d: usize,
    centers: &[f64],
    k: usize,
    scales: &[f64],
    saved: &BofSaved,
    ghist: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut gfeat = vec![0.0; n * d];
    let mut gcent = vec![0.0; k * d];
    let mut gscale = vec![0.0; k];
    let u: Vec<f64> = ghist.iter().map(|g| g / n as f64).collect();
    for j in 0..n {
        let phi = &saved.memberships[j * k..(j + 1) * k];
        let drow = &saved.dists[j * k..(j + 1) * k];
        let dot: f64 = u.iter().zip(phi).map(|(a, b)| a * b).sum();
        let x = &features[j * d..(j + 1) * d];
        let gx = &mut gfeat[j * d..(j + 1) * d];
        for kk in 0..k {
            let gz = phi[kk] * (u[kk] - dot);
            if gz == 0.0 {
                continue;
            }
            let rho = scales[kk];
            gscale[kk] += gz * drow[kk] / (rho * rho);
            if drow[kk] > 0.0 {
                let coeff = -gz / rho / drow[kk];
                let c = &centers[kk * d..(kk + 1) * d];
                let gc = &mut gcent[kk * d..(kk + 1) * d];
                for dim in 0..d {
                    let t = coeff * (x[dim] - c[dim]);
                    gx[dim] += t;
                    gc[dim] -= t;
                }
            }
        }
    }
    (gfeat, gcent, gscale)
}

// --- angular loss -------------------------------------------------------------

/// Angle in radians between `est` and the constant ground truth `gt`, with the
/// cosine clamped to `[-COS_CLAMP, COS_CLAMP]`.
pub(crate) fn angular_fwd(est: &[f64], gt: &[f64]) -> f64 {
    let dot: f64 = est.iter().zip(gt).map(|(a, b)| a * b).sum();
    let na: f64 = est.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = gt.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u = dot / (na * nb);
    u.clamp(-COS_CLAMP, COS_CLAMP).acos()
}

/// Gradient of [`angular_fwd`] with respect to `est`; zero where the cosine
/// was clamped.
pub(crate) fn angular_bwd(est: &[f64], gt: &[f64], gout: f64) -> Vec<f64> {
    let dot: f64 = est.iter().zip(gt).map(|(a, b)| a * b).sum();
    let na: f64 = est.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = gt.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u = dot / (na * nb);
    if u.abs() >= COS_CLAMP {
        return vec![0.0; est.len()];
    }
    let scale = -gout / (1.0 - u * u).sqrt();
    est.iter()
        .zip(gt)
        .map(|(e, g)| scale * (g / (na * nb) - u * e / (na * na)))
        .collect()
}
