//! Forecast models: per-station EMOS, the distributional regression network
//! with station embeddings, and feature assembly for the spatial-latent
//! variants.

mod drn;
mod emos;
mod features;

use std::collections::BTreeMap;

use chrono::NaiveDate;

pub use drn::{
    drn_predict_aggregate, drn_train, gaussian_crps_loss, member_forward, DrnConfig,
    DrnEpochStats, DrnMember, DrnModel, PreparedFeatures,
};
pub use emos::{emos_fit, emos_fit_station, emos_predict, EmosModel, EmosParams};
pub use features::{assemble_features, FeatureLayout, SpatialMode};

/// Concatenated latent codes per valid date (one block per spatial
/// variable, in the order of the configured variable list).
pub type LatentCodes = BTreeMap<NaiveDate, Vec<f64>>;

/// Stable softplus and its inverse; the sigma link of both EMOS and DRN.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Runs jobs on up to `max_threads` workers (the `GRIDPOST_THREADS`
/// environment variable caps the default), returning results in job order.
pub(crate) fn run_parallel<T, F>(jobs: Vec<F>, max_threads: Option<usize>) -> Vec<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let env_cap = std::env::var("GRIDPOST_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0);
    let threads = max_threads
        .unwrap_or(usize::MAX)
        .min(env_cap.unwrap_or(available))
        .min(jobs.len())
        .max(1);
    if threads == 1 {
        return jobs.into_iter().map(|job| job()).collect();
    }
    let mut slots: Vec<Option<T>> = (0..jobs.len()).map(|_| None).collect();
    let jobs: Vec<(usize, F)> = jobs.into_iter().enumerate().collect();
    let queue = std::sync::Mutex::new(jobs);
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let Some((idx, job)) = queue.lock().unwrap().pop() else {
                    break;
                };
                let out = job();
                results.lock().unwrap()[idx] = Some(out);
            });
        }
    });
    slots.into_iter().map(|s| s.expect("job completed")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_round_trip_and_positivity() {
        for y in [1e-3, 0.5, 1.0, 10.0, 40.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() < 1e-9 * y.max(1.0));
        }
        for x in [-800.0, -40.0, 0.0, 3.0, 800.0] {
            assert!(softplus(x) >= 0.0);
            assert!(softplus(x.min(700.0)).is_finite());
        }
    }

    #[test]
    fn parallel_preserves_job_order() {
        let jobs: Vec<Box<dyn FnOnce() -> usize + Send>> =
            (0..7usize).map(|i| Box::new(move || i * i) as _).collect();
        let out = run_parallel(jobs, Some(3));
        assert_eq!(out, vec![0, 1, 4, 9, 16, 25, 36]);
    }
}
