//! Continuous Riccati equation and the innovation input of the
//! deterministic Riccati observer framework.
//!
//! For an error system `x_dot = A x + u`, `y = C x`, the input
//! `u = -k P C^T Q y` with `P` solving
//! `P_dot = A P + P A^T - P C^T Q C P + S` stabilizes `x = 0` locally when the
//! pair `(A, C)` is uniformly observable along the zero-error trajectory.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::attitude::{Mat3, Mat6, Vec6};
use crate::error::{Error, Result};

/// Tolerance on `P - P^T` accepted as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Scalar gain multiplying the innovation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GainSchedule {
    Constant { value: f64 },
}

impl Default for GainSchedule {
    fn default() -> Self {
        GainSchedule::Constant { value: 1.0 }
    }
}

impl GainSchedule {
    pub fn at(&self, _t: f64) -> f64 {
        match *self {
            GainSchedule::Constant { value } => value,
        }
    }
}

/// Observer tuning: initial Riccati matrix and the weights of the CRE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainConfig {
    pub p0: Mat6,
    /// Output weight, inverse of the output-noise covariance.
    pub q: Mat6,
    /// State weight, process-noise covariance.
    pub s: Mat6,
    pub k: GainSchedule,
    pub k_max: f64,
}

impl Default for GainConfig {
    /// `P(0) = diag(2 I, 20 I)`, `Q = diag(25 I, 100 I)`, `S = diag(0.01 I, I)`, `k = 1`.
    fn default() -> Self {
        GainConfig {
            p0: diag_blocks(2.0, 20.0),
            q: diag_blocks(25.0, 100.0),
            s: diag_blocks(0.01, 1.0),
            k: GainSchedule::default(),
            k_max: 10.0,
        }
    }
}

/// `diag(a I3, b I3)`.
pub fn diag_blocks(a: f64, b: f64) -> Mat6 {
    crate::attitude::block_diag6(&(Mat3::identity() * a), &(Mat3::identity() * b))
}

impl GainConfig {
    pub fn validate(&self) -> Result<()> {
        check_symmetric(&self.p0, "P0")?;
        check_symmetric(&self.q, "Q")?;
        check_symmetric(&self.s, "S")?;
        if min_eigenvalue(&self.p0) <= 0.0 {
            return Err(Error::Config("P0 must be positive definite".into()));
        }
        if min_eigenvalue(&self.s) <= 0.0 {
            return Err(Error::Config("S must be positive definite".into()));
        }
        if min_eigenvalue(&self.q) < -SYMMETRY_TOL {
            return Err(Error::Config("Q must be positive semidefinite".into()));
        }
        if !(self.k_max >= 0.5) {
            return Err(Error::Config(format!("k_max must be >= 0.5, got {}", self.k_max)));
        }
        let GainSchedule::Constant { value } = self.k;
        if !(0.5..=self.k_max).contains(&value) {
            return Err(Error::Config(format!(
                "gain k = {value} outside [0.5, k_max = {}]",
                self.k_max
            )));
        }
        Ok(())
    }
}

fn check_symmetric(m: &Mat6, name: &str) -> Result<()> {
    if !m.iter().all(|v| v.is_finite()) || (m - m.transpose()).amax() > SYMMETRY_TOL {
        return Err(Error::Config(format!("{name} must be finite and symmetric")));
    }
    Ok(())
}

pub fn min_eigenvalue(m: &Mat6) -> f64 {
    SymmetricEigen::new(*m).eigenvalues.min()
}

/// Ratio of extreme eigenvalues of a symmetric positive definite matrix.
pub fn condition_number(m: &Mat6) -> f64 {
    let ev = SymmetricEigen::new(*m).eigenvalues;
    ev.max() / ev.min()
}

/// Loss of positive definiteness in a single step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Indefinite {
    pub min_eigenvalue: f64,
}

fn cre_rhs(p: &Mat6, a: &Mat6, c: &Mat6, q: &Mat6, s: &Mat6) -> Mat6 {
    let pc = p * c.transpose();
    a * p + p * a.transpose() - pc * q * pc.transpose() + s
}

/// One RK4 step of the CRE with `A`, `C`, `Q`, `S` frozen over the step,
/// followed by symmetrization and a positive-definiteness check.
pub fn cre_step(
    p: &Mat6,
    a: &Mat6,
    c: &Mat6,
    q: &Mat6,
    s: &Mat6,
    dt: f64,
) -> std::result::Result<Mat6, Indefinite> {
    let k1 = cre_rhs(p, a, c, q, s);
    let k2 = cre_rhs(&(p + k1 * (0.5 * dt)), a, c, q, s);
    let k3 = cre_rhs(&(p + k2 * (0.5 * dt)), a, c, q, s);
    let k4 = cre_rhs(&(p + k3 * dt), a, c, q, s);
    let next = p + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (dt / 6.0);
    let next = 0.5 * (next + next.transpose());
    let min_eig = min_eigenvalue(&next);
    if !(min_eig > 0.0) {
        return Err(Indefinite {
            min_eigenvalue: min_eig,
        });
    }
    Ok(next)
}

/// `u = -k P C^T Q y`.
pub fn innovation(p: &Mat6, c: &Mat6, q: &Mat6, k: f64, y: &Vec6) -> Vec6 {
    -k * (p * (c.transpose() * (q * y)))
}

/// Riccati matrix and its time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiccatiState {
    pub p: Mat6,
    pub t: f64,
}

impl RiccatiState {
    pub fn new(p0: Mat6, t: f64) -> Self {
        RiccatiState { p: p0, t }
    }

    /// Advances by `dt`; a positive-definiteness failure is fatal and
    /// reported with the time at which it occurred.
    pub fn step(&mut self, a: &Mat6, c: &Mat6, q: &Mat6, s: &Mat6, dt: f64) -> Result<()> {
        let t_next = self.t + dt;
        self.p = cre_step(&self.p, a, c, q, s, dt).map_err(|e| Error::IndefiniteRiccati {
            t: t_next,
            min_eigenvalue: e.min_eigenvalue,
        })?;
        self.t = t_next;
        Ok(())
    }

    pub fn trace(&self) -> f64 {
        self.p.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.p)
    }

    pub fn condition_number(&self) -> f64 {
        condition_number(&self.p)
    }
}
