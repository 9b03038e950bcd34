use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{LdsError, Result};
use crate::linalg::{self, PSD_TOL};

/// Parameters of a time-invariant linear dynamical system.
///
/// ```text
/// x_{t+1} = A x_t + w_t,   w_t ~ N(0, R1)
/// y_t     = C x_t + v_t,   v_t ~ N(0, R2)
/// x_1     ~ N(mu0, R0)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct LdsParams {
    /// Transition matrix (d x d).
    pub a: DMatrix<f64>,
    /// Observation matrix (d_out x d).
    pub c: DMatrix<f64>,
    /// State-noise covariance (d x d).
    pub r1: DMatrix<f64>,
    /// Observation-noise covariance (d_out x d_out).
    pub r2: DMatrix<f64>,
    /// Initial state mean (d).
    pub mu0: DVector<f64>,
    /// Initial state covariance (d x d).
    pub r0: DMatrix<f64>,
}

impl LdsParams {
    pub fn new(
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        r1: DMatrix<f64>,
        r2: DMatrix<f64>,
        mu0: DVector<f64>,
        r0: DMatrix<f64>,
    ) -> Result<Self> {
        let p = Self { a, c, r1, r2, mu0, r0 };
        p.validate()?;
        Ok(p)
    }

    /// Latent dimension.
    pub fn d(&self) -> usize {
        self.a.nrows()
    }

    /// Observation dimension.
    pub fn d_out(&self) -> usize {
        self.c.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.a.nrows();
        if d == 0 || self.a.ncols() != d {
            return Err(LdsError::Dimension("A must be square with d >= 1".into()));
        }
        let m = self.c.nrows();
        if m == 0 || self.c.ncols() != d {
            return Err(LdsError::Dimension(format!(
                "C must be d_out x {d} with d_out >= 1, got {}x{}",
                self.c.nrows(),
                self.c.ncols()
            )));
        }
        for (name, mat, n) in [("R1", &self.r1, d), ("R2", &self.r2, m), ("R0", &self.r0, d)] {
            if mat.nrows() != n || mat.ncols() != n {
                return Err(LdsError::Dimension(format!(
                    "{name} must be {n}x{n}, got {}x{}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
        }
        if self.mu0.len() != d {
            return Err(LdsError::Dimension(format!("mu0 must have length {d}")));
        }
        let finite = [&self.a, &self.c, &self.r1, &self.r2, &self.r0]
            .iter()
            .all(|m| linalg::all_finite(m))
            && self.mu0.iter().all(|v| v.is_finite());
        if !finite {
            return Err(LdsError::Invalid("parameters must be finite".into()));
        }
        for (name, mat) in [("R1", &self.r1), ("R2", &self.r2), ("R0", &self.r0)] {
            if linalg::max_asymmetry(mat) > PSD_TOL {
                return Err(LdsError::Invalid(format!("{name} is not symmetric")));
            }
            let lo = linalg::min_symmetric_eigenvalue(mat);
            if lo < -PSD_TOL {
                return Err(LdsError::Invalid(format!(
                    "{name} is not positive semidefinite (min eigenvalue {lo:e})"
                )));
            }
        }
        Ok(())
    }

    /// Applies the similarity transform `x -> U x` for an invertible `U`.
    ///
    /// The marginal likelihood of any observation sequence is unchanged.
    pub fn transformed(&self, u: &DMatrix<f64>) -> Result<Self> {
        let u_inv = u
            .clone()
            .try_inverse()
            .ok_or_else(|| LdsError::Invalid("similarity transform is singular".into()))?;
        Ok(Self {
            a: u * &self.a * &u_inv,
            c: &self.c * &u_inv,
            r1: linalg::symmetrize(&(u * &self.r1 * u.transpose())),
            r2: self.r2.clone(),
            mu0: u * &self.mu0,
            r0: linalg::symmetrize(&(u * &self.r0 * u.transpose())),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsDoc {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "R1")]
    r1: Vec<Vec<f64>>,
    #[serde(rename = "R2")]
    r2: Vec<Vec<f64>>,
    mu0: Vec<f64>,
    #[serde(rename = "R0")]
    r0: Vec<Vec<f64>>,
    d: usize,
    d_out: usize,
}

impl Serialize for LdsParams {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ParamsDoc {
            a: linalg::to_rows(&self.a),
            c: linalg::to_rows(&self.c),
            r1: linalg::to_rows(&self.r1),
            r2: linalg::to_rows(&self.r2),
            mu0: self.mu0.iter().copied().collect(),
            r0: linalg::to_rows(&self.r0),
            d: self.d(),
            d_out: self.d_out(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LdsParams {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let doc = ParamsDoc::deserialize(deserializer)?;
        let params = LdsParams {
            a: linalg::from_rows(&doc.a, "A").map_err(D::Error::custom)?,
            c: linalg::from_rows(&doc.c, "C").map_err(D::Error::custom)?,
            r1: linalg::from_rows(&doc.r1, "R1").map_err(D::Error::custom)?,
            r2: linalg::from_rows(&doc.r2, "R2").map_err(D::Error::custom)?,
            mu0: DVector::from_vec(doc.mu0),
            r0: linalg::from_rows(&doc.r0, "R0").map_err(D::Error::custom)?,
        };
        if params.d() != doc.d || params.d_out() != doc.d_out {
            return Err(D::Error::custom(format!(
                "declared dimensions d={}, d_out={} do not match matrices ({}, {})",
                doc.d,
                doc.d_out,
                params.d(),
                params.d_out()
            )));
        }
        params.validate().map_err(D::Error::custom)?;
        Ok(params)
    }
}
