use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ProxyError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVar {
    pub name: String,
    pub unit: String,
}

/// Discrete-time linear-Gaussian model: `x' = A x + w`, `y = C x + v`,
/// `w ~ N(0, Q)`, `v ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub states: Vec<StateVar>,
    pub channels: Vec<String>,
}

const SYM_TOL: f64 = 1e-12;

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= SYM_TOL * scale
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.min()
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m = (&*m + t) * 0.5;
}

impl StateSpaceModel {
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.c.nrows()
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s.name == name)
    }

    /// Rank of `[C; CA; ...; CA^(n-1)]`.
    pub fn observability_rank(&self) -> usize {
        observability_rank(&self.a, &self.c)
    }

    pub fn validate(&self) -> Result<(), ProxyError> {
        let n = self.a.nrows();
        let m = self.c.nrows();
        let bad = |msg: &str| Err(ProxyError::InvalidModel(msg.to_string()));
        if n == 0 || self.a.ncols() != n {
            return bad("A must be square and non-empty");
        }
        if self.c.ncols() != n || m == 0 {
            return bad("C must be m x n with m >= 1");
        }
        if self.q.shape() != (n, n) || self.r.shape() != (m, m) {
            return bad("Q must be n x n and R must be m x m");
        }
        if self.states.len() != n || self.channels.len() != m {
            return bad("state and channel labels must match the model dimensions");
        }
        let all = [&self.a, &self.c, &self.q, &self.r];
        if all.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
            return bad("model matrices must be finite");
        }
        if !is_symmetric(&self.q) || !is_symmetric(&self.r) {
            return bad("Q and R must be symmetric");
        }
        if min_eigenvalue(&self.q) < -1e-12 {
            return bad("Q must be positive semi-definite");
        }
        if min_eigenvalue(&self.r) <= 0.0 {
            return bad("R must be positive definite");
        }
        if self.observability_rank() != n {
            return bad("(A, C) is not observable");
        }
        Ok(())
    }

    /// Rows of `C` and the matching block of `R` for the given channels.
    pub fn restrict(&self, channels: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        let c = self.c.select_rows(channels);
        let r = self.r.select_rows(channels).select_columns(channels);
        (c, r)
    }
}

pub fn observability_rank(a: &DMatrix<f64>, c: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let m = c.nrows();
    let mut obs = DMatrix::zeros(m * n, n);
    let mut block = c.clone();
    for k in 0..n {
        obs.view_mut((k * m, 0), (m, n)).copy_from(&block);
        block = &block * a;
    }
    let sv = obs.svd(false, false).singular_values;
    let tol = sv.max() * (m * n).max(n) as f64 * f64::EPSILON * 16.0;
    sv.iter().filter(|s| **s > tol).count()
}

/// Per-state bound on the steady-state estimate standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityOfData {
    pub max_stddev: Vec<f64>,
}

impl QualityOfData {
    pub fn new(max_stddev: Vec<f64>) -> Result<Self, ProxyError> {
        if max_stddev.iter().any(|b| b.is_nan() || *b <= 0.0) {
            return Err(ProxyError::InvalidQod("bounds must be positive".into()));
        }
        Ok(QualityOfData { max_stddev })
    }

    /// Builds bounds from `name -> bound`, requiring every model state.
    pub fn from_named(model: &StateSpaceModel, bounds: &BTreeMap<String, f64>) -> Result<Self, ProxyError> {
        for name in bounds.keys() {
            if model.state_index(name).is_none() {
                return Err(ProxyError::UnknownVariable(name.clone()));
            }
        }
        let v = model
            .states
            .iter()
            .map(|s| {
                bounds
                    .get(&s.name)
                    .copied()
                    .ok_or_else(|| ProxyError::InvalidQod(format!("no bound for `{}`", s.name)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        QualityOfData::new(v)
    }

    pub fn check_against(&self, model: &StateSpaceModel) -> Result<(), ProxyError> {
        if self.max_stddev.len() != model.n_states() {
            return Err(ProxyError::InvalidQod(format!(
                "{} bounds for {} states",
                self.max_stddev.len(),
                model.n_states()
            )));
        }
        Ok(())
    }
}

/// A class's starting model, prior and default data-quality target.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedModel {
    pub class_label: String,
    pub model: StateSpaceModel,
    pub prior_mean: DVector<f64>,
    pub prior_cov: DMatrix<f64>,
    pub default_qod: QualityOfData,
}

impl GeneralizedModel {
    pub fn validate(&self) -> Result<(), ProxyError> {
        self.model.validate()?;
        let n = self.model.n_states();
        if self.prior_mean.len() != n || self.prior_cov.shape() != (n, n) {
            return Err(ProxyError::InvalidModel("prior has wrong dimensions".into()));
        }
        if !is_symmetric(&self.prior_cov) || min_eigenvalue(&self.prior_cov) < -1e-12 {
            return Err(ProxyError::InvalidModel("prior covariance must be symmetric PSD".into()));
        }
        self.default_qod.check_against(&self.model)
    }

    /// Wear drifts with usage; usage decays slowly between observations.
    pub fn builtin_key() -> Self {
        let model = StateSpaceModel {
            a: DMatrix::from_row_slice(2, 2, &[1.0, 0.001, 0.0, 0.99]),
            c: DMatrix::identity(2, 2),
            q: DMatrix::from_diagonal(&DVector::from_vec(vec![1e-6, 1e-4])),
            r: DMatrix::from_diagonal(&DVector::from_vec(vec![2.5e-3, 1e-2])),
            states: vec![
                StateVar { name: "wear_index".into(), unit: "1".into() },
                StateVar { name: "usage_rate".into(), unit: "uses/tick".into() },
            ],
            channels: vec!["wear_index".into(), "usage_rate".into()],
        };
        GeneralizedModel {
            class_label: "key".into(),
            model,
            prior_mean: DVector::from_vec(vec![0.1, 0.5]),
            prior_cov: DMatrix::identity(2, 2) * 0.1,
            default_qod: QualityOfData { max_stddev: vec![0.03, 0.12] },
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ModelRegistry {
    models: BTreeMap<String, GeneralizedModel>,
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtin() -> Self {
        let mut r = Self::new();
        r.register(GeneralizedModel::builtin_key()).expect("built-in model is valid");
        r
    }

    pub fn register(&mut self, model: GeneralizedModel) -> Result<(), ProxyError> {
        model.validate()?;
        self.models.insert(model.class_label.clone(), model);
        Ok(())
    }

    pub fn get(&self, class_label: &str) -> Option<&GeneralizedModel> {
        self.models.get(class_label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rank by Gaussian elimination with partial pivoting, independent of
    /// the SVD route used by the model.
    fn rank_by_elimination(mut rows: Vec<Vec<f64>>) -> usize {
        let cols = rows.first().map_or(0, Vec::len);
        let mut rank = 0;
        for col in 0..cols {
            let pivot = (rank..rows.len()).max_by(|&i, &j| rows[i][col].abs().total_cmp(&rows[j][col].abs()));
            let Some(p) = pivot else { break };
            if rows[p][col].abs() < 1e-12 {
                continue;
            }
            rows.swap(rank, p);
            let pivot_row = rows[rank].clone();
            for (i, row) in rows.iter_mut().enumerate() {
                if i != rank {
                    let f = row[col] / pivot_row[col];
                    for (x, p) in row.iter_mut().zip(&pivot_row) {
                        *x -= f * p;
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    #[test]
    fn builtin_key_is_observable() {
        let g = GeneralizedModel::builtin_key();
        g.validate().unwrap();
        // [C; CA] for C = I, A = [[1, .001], [0, .99]]
        let rows = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.001],
            vec![0.0, 0.99],
        ];
        assert_eq!(rank_by_elimination(rows), 2);
        assert_eq!(g.model.observability_rank(), 2);
    }

    #[test]
    fn unobservable_model_rejected() {
        let mut g = GeneralizedModel::builtin_key();
        // only usage observed, and usage does not feed back into wear readings
        g.model.a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.99]);
        g.model.c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        g.model.r = DMatrix::from_element(1, 1, 0.01);
        g.model.channels = vec!["usage_rate".into()];
        assert_eq!(
            rank_by_elimination(vec![vec![0.0, 1.0], vec![0.0, 0.99]]),
            g.model.observability_rank()
        );
        assert!(matches!(g.validate(), Err(ProxyError::InvalidModel(_))));
    }

    #[test]
    fn r_must_be_positive_definite() {
        let mut g = GeneralizedModel::builtin_key();
        g.model.r[(1, 1)] = 0.0;
        assert!(g.validate().is_err());
        let mut g = GeneralizedModel::builtin_key();
        g.model.q[(0, 1)] = 1e-3;
        assert!(g.validate().is_err());
    }

    #[test]
    fn qod_from_names() {
        let g = GeneralizedModel::builtin_key();
        let mut m = BTreeMap::new();
        m.insert("wear_index".to_string(), 0.05);
        assert!(QualityOfData::from_named(&g.model, &m).is_err());
        m.insert("usage_rate".to_string(), 0.2);
        let q = QualityOfData::from_named(&g.model, &m).unwrap();
        assert_eq!(q.max_stddev, vec![0.05, 0.2]);
        m.insert("colour".to_string(), 1.0);
        assert_eq!(
            QualityOfData::from_named(&g.model, &m).unwrap_err(),
            ProxyError::UnknownVariable("colour".into())
        );
        assert!(QualityOfData::new(vec![0.0]).is_err());
    }
}
