//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::params::{Grads, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// Bound on |analytic − numeric| / max(1, |numeric|).
    pub tolerance: f64,
    /// Coordinates sampled per parameter; `None` checks all of them.
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: 1e-5,
            tolerance: 1e-4,
            max_coords_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub failures: usize,
    pub worst: Option<CoordinateCheck>,
    pub passed: bool,
}

/// Compare `analytic` against central differences of `loss` at `params`.
///
/// Parameters are perturbed in place and restored before returning.
pub fn grad_check<F>(
    params: &mut ParamStore<f64>,
    analytic: &Grads<f64>,
    mut loss: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore<f64>) -> Result<f64>,
{
    let base = loss(params)?;
    if !base.is_finite() {
        return Err(Error::NonFinite(format!("loss {base}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ids: Vec<_> = params.iter().map(|(id, _, _)| id).collect();
    let mut checked = 0;
    let mut failures = 0;
    let mut worst: Option<CoordinateCheck> = None;
    for id in ids {
        let n = params.get(id).len();
        let coords: Vec<usize> = match cfg.max_coords_per_param {
            Some(k) if k < n => {
                let mut c = sample(&mut rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for k in coords {
            let orig = params.get(id).data()[k];
            params.get_mut(id).data_mut()[k] = orig + cfg.epsilon;
            let up = loss(params);
            params.get_mut(id).data_mut()[k] = orig - cfg.epsilon;
            let down = loss(params);
            params.get_mut(id).data_mut()[k] = orig;
            let (up, down) = (up?, down?);
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::NonFinite(format!("perturbed loss at {}[{k}]", params.name(id))));
            }
            let numeric = (up - down) / (2.0 * cfg.epsilon);
            let a = analytic.coordinate(id, k);
            let rel_error = (a - numeric).abs() / numeric.abs().max(1.0);
            checked += 1;
            if rel_error > cfg.tolerance {
                failures += 1;
            }
            if worst.as_ref().is_none_or(|w| rel_error > w.rel_error) {
                worst = Some(CoordinateCheck {
                    param: params.name(id).to_string(),
                    index: k,
                    analytic: a,
                    numeric,
                    rel_error,
                });
            }
        }
    }
    Ok(GradCheckReport {
        checked,
        failures,
        worst,
        passed: failures == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::tensor::Tensor;

    fn quadratic(s: &ParamStore<f64>) -> Result<f64> {
        let x = s.by_name("x").unwrap().data();
        Ok(x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v * v).sum())
    }

    fn setup() -> (ParamStore<f64>, Grads<f64>) {
        let mut s = ParamStore::new();
        let id = s.add("x", Tensor::vector(vec![0.3, -1.2, 2.0])).unwrap();
        let mut g = Grads::for_store(&s);
        let grad: Vec<f64> = s
            .get(id)
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| 2.0 * (i as f64 + 1.0) * v)
            .collect();
        g.add_dense(id, &grad);
        (s, g)
    }

    #[test]
    fn quadratic_agrees_exactly() {
        let (mut s, g) = setup();
        let r = grad_check(&mut s, &g, quadratic, &GradCheckConfig::default()).unwrap();
        assert!(r.passed);
        assert_eq!(r.checked, 3);
        assert!(r.worst.unwrap().rel_error < 1e-9);
        // Parameters restored.
        assert_eq!(s.by_name("x").unwrap().data(), &[0.3, -1.2, 2.0]);
    }

    #[test]
    fn corrupted_gradient_is_reported() {
        let (mut s, mut g) = setup();
        let id = s.id("x").unwrap();
        let v = g.coordinate(id, 1);
        g.set_coordinate(id, 1, v + 0.5);
        let r = grad_check(&mut s, &g, quadratic, &GradCheckConfig::default()).unwrap();
        assert!(!r.passed);
        assert_eq!(r.failures, 1);
        let w = r.worst.unwrap();
        assert_eq!((w.param.as_str(), w.index), ("x", 1));
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let (mut s, g) = setup();
        let r = grad_check(&mut s, &g, |_| Ok(f64::INFINITY), &GradCheckConfig::default());
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
