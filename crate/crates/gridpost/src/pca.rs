//! Principal component analysis on flattened normalized fields: the
//! reference dimensionality reduction next to the convolutional autoencoder.
//!
//! Fitting runs subspace iteration with Rayleigh-Ritz extraction on the
//! implicit covariance operator `Xc^T Xc / n`, which stays stable at the
//! 6561-dimensional flattened grid where forming the covariance matrix
//! outright would not. Covariance eigenvalues use the 1/n convention, so the
//! training reconstruction MSE at h equals the tail eigenvalue sum divided
//! by the field dimension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};
use crate::rng::stream;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PcaModel {
    /// Column means of the training data (length `dim`).
    pub mean: Vec<f64>,
    /// Orthonormal component rows, descending eigenvalue order (h x dim).
    pub components: Vec<f64>,
    /// Top-h eigenvalues of the covariance `Xc^T Xc / n`, nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Trace of the covariance (sum of all eigenvalues).
    pub total_variance: f64,
    pub h: usize,
    pub dim: usize,
}

const CONVERGENCE_TOL: f64 = 1e-13;
const MAX_ITER: usize = 2000;

/// Fits the top-h principal components of `data` (n x dim).
///
/// The sign of each component is fixed so its largest-magnitude entry is
/// positive, making serialized models reproducible.
pub fn pca_fit(data: &Tensor<f64>, h: usize) -> Result<PcaModel> {
    let (n, dim) = match data.shape() {
        [n, p] => (*n, *p),
        other => return Err(Error::shape(format!("data must be a matrix, got {other:?}"))),
    };
    if h == 0 {
        return Err(Error::config("latent dimension h must be at least 1"));
    }
    if h >= n {
        return Err(Error::config(format!("h={h} requires more than h samples, got {n}")));
    }
    if h > dim {
        return Err(Error::config(format!("h={h} exceeds the data dimension {dim}")));
    }

    let mut mean = vec![0f64; dim];
    for row in data.data().chunks_exact(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut centered = data.data().to_vec();
    for row in centered.chunks_exact_mut(dim) {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let total_variance = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;

    // Oversampled subspace; k never exceeds the rank bound min(n, dim).
    let k = (h + 8).min(n.min(dim));
    let mut rng = stream(0, "pca-init");
    let mut v: Vec<f64> = (0..dim * k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    orthonormalize_columns(&mut v, dim, k, Some(&mut rng))?;

    let mut w = vec![0f64; n * k];
    let mut ritz_prev = vec![f64::INFINITY; k];
    for _ in 0..MAX_ITER {
        // w = Xc * V, then V <- Xc^T * w, re-orthonormalized.
        f64::gemm(n, dim, k, 1.0, &centered, dim as isize, 1, &v, k as isize, 1, 0.0, &mut w);
        let mut ritz: Vec<f64> = (0..k)
            .map(|j| (0..n).map(|i| w[i * k + j] * w[i * k + j]).sum::<f64>() / n as f64)
            .collect();
        f64::gemm(dim, n, k, 1.0, &centered, 1, dim as isize, &w, k as isize, 1, 0.0, &mut v);
        orthonormalize_columns(&mut v, dim, k, Some(&mut rng))?;
        ritz.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let scale = ritz[0].max(1e-300);
        let converged = ritz
            .iter()
            .take(h)
            .zip(&ritz_prev)
            .all(|(now, prev)| (now - prev).abs() / scale < CONVERGENCE_TOL);
        ritz_prev = ritz;
        if converged {
            break;
        }
    }

    // Rayleigh-Ritz: diagonalize the k x k projection of the covariance.
    f64::gemm(n, dim, k, 1.0, &centered, dim as isize, 1, &v, k as isize, 1, 0.0, &mut w);
    let mut b = vec![0f64; k * k];
    f64::gemm(k, n, k, 1.0 / n as f64, &w, 1, k as isize, &w, k as isize, 1, 0.0, &mut b);
    let (eigvals, eigvecs) = jacobi_eigh(&b, k);

    // components (h x dim) = (V * U[:, :h])^T
    let mut rotated = vec![0f64; dim * h];
    let mut u_top = Vec::with_capacity(k * h);
    for row in 0..k {
        u_top.extend_from_slice(&eigvecs[row * k..row * k + h]);
    }
    f64::gemm(dim, k, h, 1.0, &v, k as isize, 1, &u_top, h as isize, 1, 0.0, &mut rotated);
    let mut components = vec![0f64; h * dim];
    for j in 0..h {
        for i in 0..dim {
            components[j * dim + i] = rotated[i * h + j];
        }
    }
    for row in components.chunks_exact_mut(dim) {
        let (mut best, mut best_abs) = (0usize, 0f64);
        for (i, val) in row.iter().enumerate() {
            if val.abs() > best_abs {
                best_abs = val.abs();
                best = i;
            }
        }
        if row[best] < 0.0 {
            for val in row.iter_mut() {
                *val = -*val;
            }
        }
    }
    Ok(PcaModel {
        mean,
        components,
        eigenvalues: eigvals[..h].to_vec(),
        total_variance,
        h,
        dim,
    })
}

/// Projects a flattened field onto the components: `components * (x - mean)`.
pub fn pca_encode(model: &PcaModel, field: &[f64]) -> Result<Vec<f64>> {
    if field.len() != model.dim {
        return Err(Error::shape(format!(
            "field length {} does not match model dimension {}",
            field.len(),
            model.dim
        )));
    }
    let centered: Vec<f64> = field.iter().zip(&model.mean).map(|(x, m)| x - m).collect();
    let mut code = vec![0f64; model.h];
    f64::gemm(
        model.h,
        model.dim,
        1,
        1.0,
        &model.components,
        model.dim as isize,
        1,
        &centered,
        1,
        1,
        0.0,
        &mut code,
    );
    Ok(code)
}

/// Reconstruction `mean + components^T * code`.
pub fn pca_decode(model: &PcaModel, code: &[f64]) -> Result<Vec<f64>> {
    if code.len() != model.h {
        return Err(Error::shape(format!(
            "code length {} does not match h={}",
            code.len(),
            model.h
        )));
    }
    let mut out = model.mean.clone();
    f64::gemm(
        model.dim,
        model.h,
        1,
        1.0,
        &model.components,
        1,
        model.dim as isize,
        code,
        1,
        1,
        1.0,
        &mut out,
    );
    Ok(out)
}

/// Mean squared reconstruction error over rows of `data` (per element).
pub fn pca_reconstruction_mse(model: &PcaModel, data: &Tensor<f64>) -> Result<f64> {
    let (n, dim) = match data.shape() {
        [n, p] => (*n, *p),
        other => return Err(Error::shape(format!("data must be a matrix, got {other:?}"))),
    };
    if dim != model.dim {
        return Err(Error::shape(format!(
            "data dimension {dim} does not match model dimension {}",
            model.dim
        )));
    }
    let mut total = 0.0;
    for row in data.data().chunks_exact(dim) {
        let code = pca_encode(model, row)?;
        let recon = pca_decode(model, &code)?;
        total += row.iter().zip(&recon).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(total / (n * dim) as f64)
}

/// Modified Gram-Schmidt on the columns of `m` (rows x cols, row-major).
///
/// When the data rank is below `cols`, power iterates collapse some columns;
/// with `refill` those are replaced by fresh random directions (their Ritz
/// values converge to zero and sort last, leaving the leading columns alone).
fn orthonormalize_columns(
    m: &mut [f64],
    rows: usize,
    cols: usize,
    mut refill: Option<&mut rand_chacha::ChaCha12Rng>,
) -> Result<()> {
    let col_norm = |m: &[f64], j: usize| -> f64 {
        (0..rows).map(|i| m[i * cols + j] * m[i * cols + j]).sum::<f64>().sqrt()
    };
    for j in 0..cols {
        let mut attempts = 0;
        loop {
            let before = col_norm(m, j);
            // Two projection passes ("twice is enough") keep the residual
            // orthogonal even when heavy cancellation occurs.
            for _ in 0..2 {
                for prev in 0..j {
                    let dot: f64 =
                        (0..rows).map(|i| m[i * cols + j] * m[i * cols + prev]).sum();
                    for i in 0..rows {
                        m[i * cols + j] -= dot * m[i * cols + prev];
                    }
                }
            }
            let after = col_norm(m, j);
            // A residual tiny relative to the input is rounding noise, not a
            // new direction; normalizing it would break orthogonality.
            if after > before.max(1e-300) * 1e-10 {
                for i in 0..rows {
                    m[i * cols + j] /= after;
                }
                break;
            }
            let Some(rng) = refill.as_deref_mut() else {
                return Err(Error::numeric("rank-deficient subspace during PCA iteration"));
            };
            attempts += 1;
            if attempts > 8 {
                return Err(Error::numeric("cannot complete an orthonormal basis"));
            }
            for i in 0..rows {
                m[i * cols + j] = rng.sample(StandardNormal);
            }
        }
    }
    Ok(())
}

/// Cyclic Jacobi eigendecomposition of a small symmetric matrix. Returns
/// eigenvalues in descending order and eigenvectors as matching columns.
fn jacobi_eigh(a: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut v = vec![0f64; k * k];
    for i in 0..k {
        v[i * k + i] = 1.0;
    }
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..k {
            for q in (p + 1)..k {
                off += m[p * k + q] * m[p * k + q];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                let apq = m[p * k + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * k + p];
                let aqq = m[q * k + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..k {
                    let aip = m[i * k + p];
                    let aiq = m[i * k + q];
                    m[i * k + p] = c * aip - s * aiq;
                    m[i * k + q] = s * aip + c * aiq;
                }
                for j in 0..k {
                    let apj = m[p * k + j];
                    let aqj = m[q * k + j];
                    m[p * k + j] = c * apj - s * aqj;
                    m[q * k + j] = s * apj + c * aqj;
                }
                for i in 0..k {
                    let vip = v[i * k + p];
                    let viq = v[i * k + q];
                    v[i * k + p] = c * vip - s * viq;
                    v[i * k + q] = s * vip + c * viq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| m[j * k + j].partial_cmp(&m[i * k + i]).unwrap());
    let eigvals: Vec<f64> = order.iter().map(|&i| m[i * k + i]).collect();
    let mut eigvecs = vec![0f64; k * k];
    for (new_col, &old_col) in order.iter().enumerate() {
        for i in 0..k {
            eigvecs[i * k + new_col] = v[i * k + old_col];
        }
    }
    (eigvals, eigvecs)
}

/// Flattens normalized fields into an f64 (n x dim) design matrix.
pub fn fields_to_matrix(fields: &[Tensor<f32>]) -> Result<Tensor<f64>> {
    let Some(first) = fields.first() else {
        return Err(Error::data("no fields to flatten"));
    };
    let dim = first.len();
    let mut data = Vec::with_capacity(fields.len() * dim);
    for f in fields {
        if f.len() != dim {
            return Err(Error::shape("fields disagree in size"));
        }
        data.extend(f.data().iter().map(|&v| f64::from(v)));
    }
    Tensor::new(vec![fields.len(), dim], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_matrix(n: usize, p: usize, seed: u64) -> Tensor<f64> {
        let mut rng = stream(seed, "pca-test");
        Tensor::new(vec![n, p], (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn line_in_three_dims_is_recovered_exactly() {
        let dir = [0.6, -0.48, 0.64];
        let data: Vec<f64> = (0..8)
            .flat_map(|i| {
                let t = i as f64 - 3.5;
                dir.iter().map(move |d| 1.0 + t * d)
            })
            .collect();
        let data = Tensor::new(vec![8, 3], data).unwrap();
        let model = pca_fit(&data, 1).unwrap();
        assert!(pca_reconstruction_mse(&model, &data).unwrap() < 1e-24);
    }

    #[test]
    fn matches_covariance_eigendecomposition_oracle() {
        let data = random_matrix(6, 4, 7);
        let model = pca_fit(&data, 3).unwrap();

        // Brute-force oracle: eigendecompose the covariance directly.
        let (n, p) = (6, 4);
        let mut mean = vec![0.0; p];
        for row in data.data().chunks_exact(p) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n as f64;
            }
        }
        let mut cov = nalgebra::DMatrix::<f64>::zeros(p, p);
        for row in data.data().chunks_exact(p) {
            for i in 0..p {
                for j in 0..p {
                    cov[(i, j)] += (row[i] - mean[i]) * (row[j] - mean[j]) / n as f64;
                }
            }
        }
        let eig = nalgebra::SymmetricEigen::new(cov);
        let mut pairs: Vec<(f64, Vec<f64>)> = (0..p)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect()))
            .collect();
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

        for j in 0..3 {
            assert!((model.eigenvalues[j] - pairs[j].0).abs() < 1e-8);
            let dot: f64 = model.components[j * p..(j + 1) * p]
                .iter()
                .zip(&pairs[j].1)
                .map(|(a, b)| a * b)
                .sum();
            assert!((dot.abs() - 1.0).abs() < 1e-8, "component {j} misaligned: |dot|={}", dot.abs());
        }
    }

    #[test]
    fn full_rank_recovery() {
        let data = random_matrix(8, 5, 3);
        // rank(centered 8x5) = 5
        let model = pca_fit(&data, 5).unwrap();
        assert!(pca_reconstruction_mse(&model, &data).unwrap() < 1e-10);
    }

    #[test]
    fn rejects_invalid_h() {
        let data = random_matrix(5, 4, 1);
        assert!(pca_fit(&data, 0).is_err());
        assert!(pca_fit(&data, 5).is_err()); // h >= n
        let wide = random_matrix(9, 4, 1);
        assert!(pca_fit(&wide, 5).is_err()); // h > dim
    }

    #[test]
    fn encode_decode_contracts() {
        let data = random_matrix(12, 6, 9);
        let model = pca_fit(&data, 3).unwrap();

        let zero = pca_encode(&model, &model.mean).unwrap();
        assert!(zero.iter().all(|v| v.abs() < 1e-12));

        // mean + c * component_k encodes to c * e_k.
        let c = 2.5;
        for k in 0..3 {
            let x: Vec<f64> = model
                .mean
                .iter()
                .zip(&model.components[k * 6..(k + 1) * 6])
                .map(|(m, comp)| m + c * comp)
                .collect();
            let code = pca_encode(&model, &x).unwrap();
            for (j, v) in code.iter().enumerate() {
                let expect = if j == k { c } else { 0.0 };
                assert!((v - expect).abs() < 1e-10, "code[{j}]={v}");
            }
        }

        // encode . decode . encode == encode
        let x: Vec<f64> = (0..6).map(|i| (i as f64).sin()).collect();
        let code = pca_encode(&model, &x).unwrap();
        let again = pca_encode(&model, &pca_decode(&model, &code).unwrap()).unwrap();
        for (a, b) in code.iter().zip(&again) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn component_rows_are_orthonormal() {
        let data = random_matrix(20, 9, 5);
        let model = pca_fit(&data, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = model.components[i * 9..(i + 1) * 9]
                    .iter()
                    .zip(&model.components[j * 9..(j + 1) * 9])
                    .map(|(a, b)| a * b)
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-8);
            }
        }
        for w in model.eigenvalues.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
    }

    #[test]
    fn training_mse_equals_tail_eigenvalue_sum() {
        let data = random_matrix(15, 8, 2);
        for h in [1, 3, 5] {
            let model = pca_fit(&data, h).unwrap();
            let mse = pca_reconstruction_mse(&model, &data).unwrap();
            let tail = model.total_variance - model.eigenvalues.iter().sum::<f64>();
            assert!(
                (mse - tail / 8.0).abs() < 1e-8,
                "h={h}: mse {mse} vs tail/dim {}",
                tail / 8.0
            );
        }
    }

    #[test]
    fn mse_nonincreasing_in_h_and_beats_random_projections() {
        let data = random_matrix(25, 10, 11);
        let mut prev = f64::INFINITY;
        for h in 1..=6 {
            let model = pca_fit(&data, h).unwrap();
            let mse = pca_reconstruction_mse(&model, &data).unwrap();
            assert!(mse <= prev + 1e-12, "h={h}: {mse} > {prev}");
            prev = mse;
        }

        let h = 3;
        let model = pca_fit(&data, h).unwrap();
        let pca_mse = pca_reconstruction_mse(&model, &data).unwrap();
        let mut rng = stream(77, "pca-randproj");
        for _ in 0..20 {
            let mut proj: Vec<f64> = (0..10 * h).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            orthonormalize_columns(&mut proj, 10, h, None).unwrap();
            let mut components = vec![0f64; h * 10];
            for j in 0..h {
                for i in 0..10 {
                    components[j * 10 + i] = proj[i * h + j];
                }
            }
            let rand_model = PcaModel {
                mean: model.mean.clone(),
                components,
                eigenvalues: vec![0.0; h],
                total_variance: model.total_variance,
                h,
                dim: 10,
            };
            let rand_mse = pca_reconstruction_mse(&rand_model, &data).unwrap();
            assert!(pca_mse <= rand_mse + 1e-12, "pca {pca_mse} vs random {rand_mse}");
        }
    }
}
