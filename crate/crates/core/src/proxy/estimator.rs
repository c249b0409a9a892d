use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::{symmetrize, StateSpaceModel};
use super::ProxyError;
use crate::Tick;

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyState {
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    pub last_update: Tick,
}

/// `P <- A P A' + Q`.
pub fn predict_covariance(model: &StateSpaceModel, p: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = &model.a * p * model.a.transpose() + &model.q;
    symmetrize(&mut out);
    out
}

/// Joseph-form covariance update with gain `K = P C' (C P C' + R)^-1`.
/// Returns `(K, P_post)`, or `None` if the innovation covariance is singular.
pub fn update_covariance(
    p: &DMatrix<f64>,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let n = p.nrows();
    let s = c * p * c.transpose() + r;
    let s_inv = s.cholesky()?.inverse();
    let k = p * c.transpose() * s_inv;
    let ikc = DMatrix::identity(n, n) - &k * c;
    let mut post = &ikc * p * ikc.transpose() + &k * r * k.transpose();
    symmetrize(&mut post);
    Some((k, post))
}

impl ProxyState {
    pub fn new(x_hat: DVector<f64>, p: DMatrix<f64>) -> Self {
        ProxyState { x_hat, p, last_update: 0 }
    }

    pub fn predict(&mut self, model: &StateSpaceModel) {
        self.x_hat = &model.a * &self.x_hat;
        self.p = predict_covariance(model, &self.p);
    }

    /// Minimum-variance update from a measurement of the given channels.
    pub fn update(&mut self, model: &StateSpaceModel, channels: &[usize], y: &[f64]) -> Result<(), ProxyError> {
        let (c, r) = model.restrict(channels);
        let y = DVector::from_column_slice(y);
        let (k, post) = update_covariance(&self.p, &c, &r)
            .ok_or_else(|| ProxyError::Numerical("innovation covariance is singular".into()))?;
        let innovation = y - &c * &self.x_hat;
        self.x_hat += k * innovation;
        self.p = post;
        Ok(())
    }

    pub fn stddevs(&self) -> Vec<f64> {
        self.p.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// Serializable copy of an estimator state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyStateRecord {
    pub x_hat: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub last_update: Tick,
}

impl From<&ProxyState> for ProxyStateRecord {
    fn from(s: &ProxyState) -> Self {
        ProxyStateRecord {
            x_hat: s.x_hat.iter().copied().collect(),
            p: s.p.row_iter().map(|r| r.iter().copied().collect()).collect(),
            last_update: s.last_update,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proxy::model::{min_eigenvalue, GeneralizedModel, StateVar};

    fn scalar(a: f64, q: f64, r: f64) -> StateSpaceModel {
        StateSpaceModel {
            a: DMatrix::from_element(1, 1, a),
            c: DMatrix::from_element(1, 1, 1.0),
            q: DMatrix::from_element(1, 1, q),
            r: DMatrix::from_element(1, 1, r),
            states: vec![StateVar { name: "x".into(), unit: "1".into() }],
            channels: vec!["x".into()],
        }
    }

    #[test]
    fn identity_without_noise_is_fixed_point() {
        let m = scalar(1.0, 0.0, 0.04);
        let mut s = ProxyState::new(DVector::from_vec(vec![3.0]), DMatrix::from_element(1, 1, 0.2));
        let before = s.clone();
        for _ in 0..10 {
            s.predict(&m);
        }
        assert_eq!(s, before);
    }

    #[test]
    fn scalar_filter_matches_riccati_recursion() {
        let m = scalar(1.0, 0.01, 0.04);
        let mut s = ProxyState::new(DVector::from_vec(vec![0.0]), DMatrix::from_element(1, 1, 1.0));
        // hand recursion: p- = p + q; k = p-/(p- + r); x += k (5 - x); p = (1-k) p-
        let (mut x, mut p) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            s.predict(&m);
            s.update(&m, &[0], &[5.0]).unwrap();
            let pm = p + 0.01;
            let k = pm / (pm + 0.04);
            x += k * (5.0 - x);
            p = (1.0 - k) * pm;
            assert!((s.x_hat[0] - x).abs() < 1e-12);
            assert!((s.p[(0, 0)] - p).abs() < 1e-12);
        }
        assert!((s.x_hat[0] - 5.0).abs() < 1e-9);
        // closed-form steady state of p- = p + q, p = p- r / (p- + r):
        // p^2 + q p - q r = 0
        let steady = (-0.01 + (0.01f64 * 0.01 + 4.0 * 0.01 * 0.04).sqrt()) / 2.0;
        assert!((s.p[(0, 0)] - steady).abs() < 1e-12);
    }

    #[test]
    fn covariance_stays_psd_for_key_model() {
        let g = GeneralizedModel::builtin_key();
        let mut s = ProxyState::new(g.prior_mean.clone(), g.prior_cov.clone());
        for t in 0..500 {
            s.predict(&g.model);
            if t % 3 == 0 {
                s.update(&g.model, &[0, 1], &[0.2, 0.4]).unwrap();
            } else if t % 3 == 1 {
                s.update(&g.model, &[1], &[0.4]).unwrap();
            }
            assert!(min_eigenvalue(&s.p) >= -1e-9);
            assert!((&s.p - s.p.transpose()).amax() == 0.0);
        }
    }

    #[test]
    fn measurement_never_increases_trace() {
        let g = GeneralizedModel::builtin_key();
        let prior = ProxyState::new(g.prior_mean.clone(), g.prior_cov.clone());
        let mut open = prior.clone();
        open.predict(&g.model);
        for channels in [vec![0], vec![1], vec![0, 1]] {
            let mut closed = prior.clone();
            closed.predict(&g.model);
            let y: Vec<f64> = channels.iter().map(|_| 0.3).collect();
            closed.update(&g.model, &channels, &y).unwrap();
            assert!(closed.p.trace() <= open.p.trace());
        }
    }
}
