//! Finite-difference verification of reverse-mode gradients.

use super::network::Network;
use super::Tensor;
use crate::error::Result;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Relative error with an absolute floor of 1 so that near-zero gradients
/// are compared absolutely.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Compares analytic gradients against central finite differences with
/// perturbation `eps`.
///
/// `f` evaluates the scalar objective and reports a signature of the
/// piecewise-smooth region it landed in (relu sign patterns, pool argmax
/// choices; 0 for globally smooth objectives). A parameter whose two
/// perturbed evaluations land in different regions has a relu kink within
/// eps and is skipped, since the objective is not differentiable there.
pub fn grad_check<F, G>(f: F, grad_f: G, params: &[f64], eps: f64) -> GradCheckReport
where
    F: Fn(&[f64]) -> (f64, u64),
    G: Fn(&[f64]) -> Vec<f64>,
{
    let analytic = grad_f(params);
    assert_eq!(analytic.len(), params.len());
    let mut work = params.to_vec();
    let mut max_rel = 0.0f64;
    let mut checked = 0;
    let mut skipped = 0;
    for i in 0..params.len() {
        work[i] = params[i] + eps;
        let (up, region_up) = f(&work);
        work[i] = params[i] - eps;
        let (down, region_down) = f(&work);
        work[i] = params[i];
        if region_up != region_down {
            skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * eps);
        max_rel = max_rel.max(rel_err(analytic[i], numeric));
        checked += 1;
    }
    GradCheckReport {
        max_rel_err: max_rel,
        checked,
        skipped,
    }
}

/// Gradient check of a whole f64 network under a scalar loss.
///
/// `loss` maps the network output to the objective value and its gradient
/// with respect to the output.
pub fn grad_check_network<L>(
    net: &Network<f64>,
    input: &Tensor<f64>,
    loss: L,
    eps: f64,
) -> Result<GradCheckReport>
where
    L: Fn(&Tensor<f64>) -> (f64, Tensor<f64>),
{
    let flat: Vec<f64> = net
        .params()
        .iter()
        .flat_map(|p| p.data().iter().copied())
        .collect();

    let write_params = |values: &[f64]| -> Network<f64> {
        let mut candidate = net.clone();
        let mut offset = 0;
        for p in candidate.params_mut() {
            let len = p.len();
            p.data_mut().copy_from_slice(&values[offset..offset + len]);
            offset += len;
        }
        candidate
    };

    let eval = |values: &[f64]| -> (f64, u64) {
        let candidate = write_params(values);
        let trace = candidate.forward_trace(input).expect("forward must succeed");
        let (value, _) = loss(trace.output());
        (value, candidate.kink_signature(&trace))
    };

    let gradient = |values: &[f64]| -> Vec<f64> {
        let candidate = write_params(values);
        let trace = candidate.forward_trace(input).expect("forward must succeed");
        let (_, grad_out) = loss(trace.output());
        let grads = candidate.backward(&trace, &grad_out).expect("backward must succeed");
        grads
            .flat()
            .iter()
            .flat_map(|g| g.data().iter().copied())
            .collect()
    };

    Ok(grad_check(eval, gradient, &flat, eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::layers::{Activation, LayerSpec};
    use crate::rng::stream;

    #[test]
    fn quadratic_in_one_variable() {
        let report = grad_check(|x| (x[0] * x[0], 0), |x| vec![2.0 * x[0]], &[3.0], 1e-5);
        assert_eq!(report.checked, 1);
        assert!(report.max_rel_err < 1e-8, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn two_layer_mlp_gradients_match() {
        let mut rng = stream(11, "gradcheck");
        let net = Network::<f64>::build(
            &[
                LayerSpec::Dense { units: 7, activation: Activation::Relu },
                LayerSpec::Dense { units: 2, activation: Activation::Linear },
            ],
            vec![4],
            &mut rng,
        )
        .unwrap();
        let input = Tensor::new(vec![3, 4], (0..12).map(|i| (i as f64) * 0.17 - 1.0).collect()).unwrap();
        let target = vec![0.3, -0.8, 0.1, 0.4, -0.2, 0.9];
        let loss = |out: &Tensor<f64>| {
            let n = out.len() as f64;
            let mut grad = out.clone();
            let mut value = 0.0;
            for (g, t) in grad.data_mut().iter_mut().zip(&target) {
                let r = *g - *t;
                value += r * r / n;
                *g = 2.0 * r / n;
            }
            (value, grad)
        };
        let report = grad_check_network(&net, &input, loss, 1e-5).unwrap();
        assert!(report.checked > 0);
        assert!(report.max_rel_err < 1e-4, "rel err {}", report.max_rel_err);
    }
}
