//! Observability of the error system linearized along the true trajectory.
//!
//! The star pair `(A*, C*)` is the linearization evaluated at zero error. Its
//! first-order observation matrix `M = [C*; C* A* + C*_dot]` gives
//! `D = M^T M`; a uniform lower bound on windowed means of `D` (or of the
//! Gramian) is what the Riccati observers need for local exponential
//! stability. The case checkers implement sufficient conditions only and
//! never declare a trajectory unobservable.

use nalgebra::{SMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::attitude::{blocks, e1, e2, e3, projector, skew, Mat3, Mat6, Vec3};
use crate::error::{Error, Result};
use crate::observer::{linearize, LinearizedSystem, Variant};
use crate::truth::{Trajectory, TruthState};

/// First-order observation matrix `[C*; C* A* + C*_dot]`.
pub type ObservationMatrix = SMatrix<f64, 12, 6>;

/// Largest tolerated disagreement between analytic and finite-difference `D`.
pub const ORACLE_TOL: f64 = 1e-5;

/// Output structure and constants the star pair depends on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StarModel {
    pub variant: Variant,
    pub gravity: f64,
    pub mag_field: Vec3,
    /// Include the magnetometer rows of the output.
    pub magnetometer: bool,
}

impl StarModel {
    pub fn new(trajectory: &Trajectory, variant: Variant) -> Self {
        StarModel {
            variant,
            gravity: trajectory.gravity,
            mag_field: trajectory.mag_field(),
            magnetometer: true,
        }
    }

    pub fn without_magnetometer(mut self) -> Self {
        self.magnetometer = false;
        self
    }

    /// Direction that is unobservable when the magnetometer is removed:
    /// rotations about the inertial vertical.
    pub fn heading_direction(&self, truth: &TruthState) -> Vec3 {
        match self.variant {
            Variant::LambdaTilde => e3(),
            Variant::LambdaBar => truth.rotation.transpose() * e3(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StarPair {
    pub a: Mat6,
    pub c: Mat6,
    /// Velocity block of the first three output rows: `e1^T`, `e2^T`, `e3^T R`.
    pub delta: Mat3,
    pub t: f64,
}

pub fn star_pair(truth: &TruthState, model: &StarModel) -> StarPair {
    let LinearizedSystem { a, mut c } = linearize(
        model.variant,
        &truth.rotation,
        &truth.body_velocity,
        &truth.angular_velocity,
        &model.mag_field,
        model.gravity,
    );
    if !model.magnetometer {
        c.fixed_view_mut::<3, 3>(3, 0).fill(0.0);
    }
    StarPair {
        a,
        delta: c.fixed_view::<3, 3>(0, 3).into_owned(),
        c,
        t: truth.t,
    }
}

/// `C*_dot` from `R_dot = R [Omega]x` and the true acceleration.
pub fn c_star_dot_analytic(truth: &TruthState, model: &StarModel) -> Mat6 {
    let r = truth.rotation.matrix();
    let w = skew(&truth.angular_velocity);
    let mut d = Mat6::zeros();
    let e3t = e3().transpose();
    match model.variant {
        Variant::LambdaTilde => {
            d.fixed_view_mut::<1, 3>(2, 0)
                .copy_from(&(-e3t * skew(&truth.acceleration)));
            d.fixed_view_mut::<1, 3>(2, 3).copy_from(&(e3t * r * w));
        }
        Variant::LambdaBar => {
            let v = skew(&truth.velocity);
            let row = -e3t * skew(&truth.acceleration) * r - e3t * v * r * w;
            d.fixed_view_mut::<1, 3>(2, 0).copy_from(&row);
            d.fixed_view_mut::<1, 3>(2, 3).copy_from(&(e3t * r * w));
            if model.magnetometer {
                d.fixed_view_mut::<3, 3>(3, 0)
                    .copy_from(&(skew(&model.mag_field) * r * w));
            }
        }
    }
    d
}

/// `C*_dot` by a central difference of step `fd_step` in time.
pub fn c_star_dot_numeric(trajectory: &Trajectory, t: f64, model: &StarModel, fd_step: f64) -> Mat6 {
    let plus = star_pair(&trajectory.state(t + fd_step), model).c;
    let minus = star_pair(&trajectory.state(t - fd_step), model).c;
    (plus - minus) / (2.0 * fd_step)
}

pub fn observation_matrix(pair: &StarPair, c_dot: &Mat6) -> ObservationMatrix {
    let mut m = ObservationMatrix::zeros();
    m.fixed_view_mut::<6, 6>(0, 0).copy_from(&pair.c);
    m.fixed_view_mut::<6, 6>(6, 0)
        .copy_from(&(pair.c * pair.a + c_dot));
    m
}

/// `D = M^T M` split into 3x3 blocks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DMatrix {
    pub d11: Mat3,
    pub d12: Mat3,
    pub d21: Mat3,
    pub d22: Mat3,
    pub d: Mat6,
    pub t: f64,
}

impl DMatrix {
    pub fn from_full(d: Mat6, t: f64) -> Self {
        let (d11, d12, d21, d22) = blocks(&d);
        DMatrix {
            d11,
            d12,
            d21,
            d22,
            d,
            t,
        }
    }

    pub fn from_blocks(d11: Mat3, d12: Mat3, d22: Mat3, t: f64) -> Self {
        let d = crate::attitude::block6(&d11, &d12, &d12.transpose(), &d22);
        DMatrix::from_full(d, t)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.d).eigenvalues.min()
    }
}

/// `D` from the closed-form block expressions.
///
/// Observer 1:
/// ```text
/// D11 = pi_m + g^2 pi_e3 - g^2 (e3 x R e3)(e3 x R e3)^T + (e3 x v)(e3 x v)^T + (e3 x v_dot)(e3 x v_dot)^T
/// D12 = [v]x e3 e3^T R + g [e3]x R pi_e3 [Omega]x
/// D22 = Delta^T Delta - [Omega]x pi_e3 [Omega]x
/// ```
/// Observer 2 uses `R^T D11 R`, `R^T D12` and the same `D22`. `pi_m` is
/// `-[m_I]x^2`, the projector scaled by `|m_I|^2`.
pub fn d_matrix_analytic(truth: &TruthState, model: &StarModel) -> DMatrix {
    let g = model.gravity;
    let r = truth.rotation.matrix();
    let v = &truth.velocity;
    let pi_e3 = projector(&e3()).expect("unit");
    let w = skew(&truth.angular_velocity);

    let tilt = e3().cross(&(r * e3()));
    let ev = e3().cross(v);
    let ea = e3().cross(&truth.acceleration);
    let mut d11 = g * g * pi_e3 - g * g * tilt * tilt.transpose()
        + ev * ev.transpose()
        + ea * ea.transpose();
    if model.magnetometer {
        let m = skew(&model.mag_field);
        d11 -= m * m;
    }
    let d12 = skew(v) * e3() * e3().transpose() * r + g * skew(&e3()) * r * pi_e3 * w;
    let delta = delta_block(truth);
    let d22 = delta.transpose() * delta - w * pi_e3 * w;

    match model.variant {
        Variant::LambdaTilde => DMatrix::from_blocks(d11, d12, d22, truth.t),
        Variant::LambdaBar => {
            DMatrix::from_blocks(r.transpose() * d11 * r, r.transpose() * d12, d22, truth.t)
        }
    }
}

fn delta_block(truth: &TruthState) -> Mat3 {
    let r3 = truth.rotation.matrix().row(2).into_owned();
    Mat3::from_rows(&[e1().transpose(), e2().transpose(), r3])
}

/// `D = M^T M` with `C*_dot` from central differences; independent of the
/// block formulas.
pub fn d_matrix_numeric(trajectory: &Trajectory, t: f64, model: &StarModel, fd_step: f64) -> DMatrix {
    let pair = star_pair(&trajectory.state(t), model);
    let c_dot = c_star_dot_numeric(trajectory, t, model, fd_step);
    let m = observation_matrix(&pair, &c_dot);
    DMatrix::from_full(m.transpose() * m, t)
}

/// Analytic `D`, failing if it disagrees with the finite-difference oracle
/// by more than [`ORACLE_TOL`].
pub fn d_matrix_checked(trajectory: &Trajectory, t: f64, model: &StarModel) -> Result<DMatrix> {
    let truth = trajectory.state(t);
    let analytic = d_matrix_analytic(&truth, model);
    let numeric = d_matrix_numeric(trajectory, t, model, 1e-5);
    let deviation = (analytic.d - numeric.d).amax();
    if !(deviation <= ORACLE_TOL) {
        return Err(Error::OracleMismatch { t, deviation });
    }
    Ok(analytic)
}

/// Transition matrix `Phi(s, t)` of `x_dot = A*(s) x`, integrated by RK4
/// with `n_steps` steps.
pub fn transition_matrix(trajectory: &Trajectory, model: &StarModel, t: f64, s: f64, n_steps: usize) -> Mat6 {
    let n = n_steps.max(1);
    let h = (s - t) / n as f64;
    let a_at = |tau: f64| star_pair(&trajectory.state(tau), model).a;
    let mut phi = Mat6::identity();
    for i in 0..n {
        phi = rk4_transition(&phi, t + i as f64 * h, h, &a_at);
    }
    phi
}

fn rk4_transition(phi: &Mat6, tau: f64, h: f64, a_at: &impl Fn(f64) -> Mat6) -> Mat6 {
    let a0 = a_at(tau);
    let am = a_at(tau + 0.5 * h);
    let a1 = a_at(tau + h);
    let k1 = a0 * phi;
    let k2 = am * (phi + k1 * (0.5 * h));
    let k3 = am * (phi + k2 * (0.5 * h));
    let k4 = a1 * (phi + k3 * h);
    phi + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0)
}

/// Composite Simpson weights for `n` (even) intervals, without the `h / 3`.
fn simpson_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i == n {
        1.0
    } else if i % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

fn even_steps(n: usize) -> usize {
    let n = n.max(2);
    n + n % 2
}

/// Observability Gramian `W(t, t + delta) = (1/delta) int Phi^T C*^T C* Phi ds`
/// with RK4 for `Phi` and composite Simpson on the same nodes.
pub fn gramian(trajectory: &Trajectory, t: f64, delta: f64, model: &StarModel, n_steps: usize) -> Result<Mat6> {
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!("Gramian window must be positive, got {delta}")));
    }
    let n = even_steps(n_steps);
    let h = delta / n as f64;
    let a_at = |tau: f64| star_pair(&trajectory.state(tau), model).a;
    let mut phi = Mat6::identity();
    let mut acc = Mat6::zeros();
    for i in 0..=n {
        let tau = t + i as f64 * h;
        let c = star_pair(&trajectory.state(tau), model).c;
        let cp = c * phi;
        acc += simpson_weight(i, n) * cp.transpose() * cp;
        if i < n {
            phi = rk4_transition(&phi, tau, h, &a_at);
        }
    }
    Ok(acc * (h / 3.0) / delta)
}

/// Thresholds and windows of the observability checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservabilityConfig {
    /// Window length of the uniform check and of the attitude-tilt mean (s).
    pub delta: f64,
    /// Lower bound required of the (windowed) `D` eigenvalues.
    pub mu: f64,
    /// Bound on `|R33|`.
    pub rho: f64,
    /// Window of the persistent-acceleration means (s).
    pub delta_bar: f64,
    /// Threshold on the windowed means of `v_dot1^2`, `v_dot2^2`.
    pub rho_bar: f64,
    /// Speed bound; measured on the horizon when absent.
    pub v_max: Option<f64>,
    /// Angular-rate bound; measured on the horizon when absent.
    pub omega_max: Option<f64>,
    /// Sample spacing of the sweeps (s).
    pub dt: f64,
    /// Offset between consecutive windows (s).
    pub window_stride: f64,
    /// Max-norm below which a signal counts as identically zero.
    pub zero_tol: f64,
}

impl Default for ObservabilityConfig {
    fn default() -> Self {
        ObservabilityConfig {
            delta: 5.0,
            mu: 1e-3,
            rho: 0.5,
            delta_bar: 5.0,
            rho_bar: 1.0,
            v_max: None,
            omega_max: None,
            dt: 0.01,
            window_stride: 0.5,
            zero_tol: 1e-9,
        }
    }
}

impl ObservabilityConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("delta", self.delta),
            ("mu", self.mu),
            ("rho", self.rho),
            ("delta_bar", self.delta_bar),
            ("rho_bar", self.rho_bar),
            ("dt", self.dt),
            ("window_stride", self.window_stride),
            ("zero_tol", self.zero_tol),
        ];
        for (name, value) in positive.into_iter().chain(
            [("v_max", self.v_max), ("omega_max", self.omega_max)]
                .into_iter()
                .filter_map(|(n, v)| v.map(|v| (n, v))),
        ) {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!("observability.{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }

    fn window_steps(&self, window: f64) -> usize {
        even_steps((window / self.dt).round() as usize).max(64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstantVerdict {
    pub min_eigenvalue: f64,
    pub pass: bool,
}

/// `D(t) >= mu I`.
pub fn check_instantaneous(d: &DMatrix, mu: f64) -> InstantVerdict {
    let min_eigenvalue = d.min_eigenvalue();
    InstantVerdict {
        min_eigenvalue,
        pass: min_eigenvalue >= mu,
    }
}

/// Minimum eigenvalue of `(1/delta) int D` over one window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowVerdict {
    pub start: f64,
    pub min_eigenvalue: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniformVerdict {
    pub windows: Vec<WindowVerdict>,
    pub min_eigenvalue: f64,
    pub pass: bool,
}

/// Equally spaced samples of `f` on `[0, horizon]` at a spacing that divides
/// every window into an even number of Simpson intervals.
struct Sweep<T> {
    h: f64,
    values: Vec<T>,
}

fn sweep<T>(horizon: f64, h: f64, f: impl Fn(f64) -> T) -> Sweep<T> {
    let n = (horizon / h).floor() as usize;
    Sweep {
        h,
        values: (0..=n).map(|i| f(i as f64 * h)).collect(),
    }
}

/// Means over sliding windows of `window_steps` intervals, advancing by
/// `stride_steps`.
fn windowed_means<T>(
    s: &Sweep<T>,
    window_steps: usize,
    stride_steps: usize,
    zero: T,
) -> Vec<(f64, T)>
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let mut out = Vec::new();
    let mut j = 0;
    while j + window_steps < s.values.len() {
        let mut acc = zero;
        for i in 0..=window_steps {
            acc = acc + s.values[j + i] * simpson_weight(i, window_steps);
        }
        out.push((j as f64 * s.h, acc * (1.0 / (3.0 * window_steps as f64))));
        j += stride_steps;
    }
    out
}

fn window_grid(cfg: &ObservabilityConfig, window: f64) -> (f64, usize, usize) {
    let n = cfg.window_steps(window);
    let h = window / n as f64;
    let stride = ((cfg.window_stride / h).round() as usize).max(1);
    (h, n, stride)
}

fn check_horizon(horizon: f64, window: f64, name: &str) -> Result<()> {
    if !(horizon >= window) {
        return Err(Error::Config(format!(
            "horizon {horizon} s is shorter than the {name} window {window} s"
        )));
    }
    Ok(())
}

/// Sliding-window check `(1/delta) int_t^{t+delta} D(s) ds >= mu I` over
/// `[0, horizon]`.
pub fn check_uniform(
    trajectory: &Trajectory,
    horizon: f64,
    cfg: &ObservabilityConfig,
    model: &StarModel,
) -> Result<UniformVerdict> {
    cfg.validate()?;
    check_horizon(horizon, cfg.delta, "uniform-observability")?;
    let (h, n, stride) = window_grid(cfg, cfg.delta);
    let s = sweep(horizon, h, |t| d_matrix_analytic(&trajectory.state(t), model).d);
    Ok(uniform_from_sweep(&s, n, stride, cfg.mu))
}

fn uniform_from_sweep(s: &Sweep<Mat6>, n: usize, stride: usize, mu: f64) -> UniformVerdict {
    let windows: Vec<WindowVerdict> = windowed_means(s, n, stride, Mat6::zeros())
        .into_iter()
        .map(|(start, mean)| {
            let min_eigenvalue = SymmetricEigen::new(mean).eigenvalues.min();
            WindowVerdict {
                start,
                min_eigenvalue,
                pass: min_eigenvalue >= mu,
            }
        })
        .collect();
    let min_eigenvalue = windows.iter().map(|w| w.min_eigenvalue).fold(f64::INFINITY, f64::min);
    UniformVerdict {
        pass: windows.iter().all(|w| w.pass),
        windows,
        min_eigenvalue,
    }
}

/// Sufficient conditions of the three motion cases under `|R33| >= rho`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionCase {
    /// `v x e3 = 0`.
    Vertical,
    /// `Omega = 0`.
    PureTranslation,
    /// `v_max Omega_max <= g rho^2 / sqrt(6)`.
    SlowMotion,
}

impl MotionCase {
    pub fn label(self) -> &'static str {
        match self {
            MotionCase::Vertical => "vertical",
            MotionCase::PureTranslation => "pure-translation",
            MotionCase::SlowMotion => "slow-motion",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionCaseReport {
    pub min_abs_r33: f64,
    /// `|R33| >= rho` on the whole horizon.
    pub tilt_bound_holds: bool,
    pub max_horizontal_speed: f64,
    pub max_rate: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub slow_motion_product: f64,
    pub slow_motion_bound: f64,
    pub cases: Vec<MotionCase>,
    /// Tilt bound and at least one case hold.
    pub guaranteed: bool,
    /// Smallest eigenvalue of `D` seen on the sweep.
    pub min_eigenvalue: f64,
    /// `guaranteed` implies a positive instantaneous bound.
    pub consistent: bool,
}

impl MotionCaseReport {
    pub fn verdict(&self) -> String {
        if self.guaranteed {
            let names: Vec<_> = self.cases.iter().map(|c| c.label()).collect();
            format!("observable ({})", names.join(", "))
        } else if !self.tilt_bound_holds {
            "no guarantee (tilt bound violated)".into()
        } else {
            "no guarantee (no case applies)".into()
        }
    }
}

/// Classifies the trajectory against the motion cases and cross-checks the
/// prediction with a sweep of the instantaneous condition.
pub fn motion_case_verdict(
    trajectory: &Trajectory,
    horizon: f64,
    cfg: &ObservabilityConfig,
    model: &StarModel,
) -> Result<MotionCaseReport> {
    cfg.validate()?;
    let s = sweep(horizon, cfg.dt, |t| {
        let truth = trajectory.state(t);
        (truth, d_matrix_analytic(&truth, model).min_eigenvalue())
    });
    Ok(motion_cases_from_sweep(&s, cfg, model))
}

fn motion_cases_from_sweep(s: &Sweep<(TruthState, f64)>, cfg: &ObservabilityConfig, model: &StarModel) -> MotionCaseReport {
    let mut min_abs_r33 = f64::INFINITY;
    let (mut horiz, mut rate, mut speed, mut min_eig) = (0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    for (truth, eig) in &s.values {
        min_abs_r33 = min_abs_r33.min(truth.rotation.r33().abs());
        horiz = horiz.max(truth.velocity.cross(&e3()).norm());
        rate = rate.max(truth.angular_velocity.norm());
        speed = speed.max(truth.velocity.norm());
        min_eig = min_eig.min(*eig);
    }
    let v_max = cfg.v_max.unwrap_or(speed);
    let omega_max = cfg.omega_max.unwrap_or(rate);
    let bound = model.gravity * cfg.rho * cfg.rho / 6f64.sqrt();
    let product = v_max * omega_max;
    let mut cases = Vec::new();
    if horiz < cfg.zero_tol {
        cases.push(MotionCase::Vertical);
    }
    if rate < cfg.zero_tol {
        cases.push(MotionCase::PureTranslation);
    }
    if product <= bound {
        cases.push(MotionCase::SlowMotion);
    }
    let tilt_bound_holds = min_abs_r33 >= cfg.rho;
    let guaranteed = tilt_bound_holds && !cases.is_empty();
    MotionCaseReport {
        min_abs_r33,
        tilt_bound_holds,
        max_horizontal_speed: horiz,
        max_rate: rate,
        v_max,
        omega_max,
        slow_motion_product: product,
        slow_motion_bound: bound,
        cases,
        guaranteed,
        min_eigenvalue: min_eig,
        consistent: !guaranteed || min_eig > 0.0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExcitationReport {
    /// Smallest windowed mean of `R33^2` (window `delta`).
    pub min_tilt_mean: f64,
    /// Windowed mean of `R33^2` holds above `rho^2` everywhere.
    pub tilt_pass: bool,
    /// Windowed means of `v_dot1^2` and `v_dot2^2` over the first window.
    pub first_window_accel_means: [f64; 2],
    /// Smallest over windows of `min(mean v_dot1^2, mean v_dot2^2)`.
    pub min_accel_mean: f64,
    pub accel_pass: bool,
    /// Both conditions hold.
    pub guaranteed: bool,
    /// Verdict of the uniform check on the same horizon.
    pub uniform_pass: bool,
    /// `guaranteed` implies `uniform_pass`.
    pub consistent: bool,
}

impl ExcitationReport {
    pub fn verdict(&self) -> &'static str {
        match (self.tilt_pass, self.accel_pass) {
            (true, true) => "observable (persistent acceleration)",
            (false, _) => "no guarantee (windowed tilt bound violated)",
            (true, false) => "no guarantee (acceleration not persistent; see motion cases)",
        }
    }
}

/// Windowed tilt and persistent-acceleration conditions, cross-checked
/// against the uniform check.
pub fn excitation_verdict(
    trajectory: &Trajectory,
    horizon: f64,
    cfg: &ObservabilityConfig,
    model: &StarModel,
) -> Result<ExcitationReport> {
    cfg.validate()?;
    check_horizon(horizon, cfg.delta.max(cfg.delta_bar), "persistent-excitation")?;
    let uniform = check_uniform(trajectory, horizon, cfg, model)?;
    Ok(excitation_from(trajectory, horizon, cfg, uniform.pass))
}

fn excitation_from(trajectory: &Trajectory, horizon: f64, cfg: &ObservabilityConfig, uniform_pass: bool) -> ExcitationReport {
    let (h, n, stride) = window_grid(cfg, cfg.delta);
    let tilt = sweep(horizon, h, |t| trajectory.state(t).rotation.r33().powi(2));
    let tilt_means = windowed_means(&tilt, n, stride, 0.0);
    let min_tilt_mean = tilt_means.iter().map(|w| w.1).fold(f64::INFINITY, f64::min);

    let (h, n, stride) = window_grid(cfg, cfg.delta_bar);
    let accel = sweep(horizon, h, |t| {
        let a = trajectory.state(t).acceleration;
        Vec3::new(a.x * a.x, a.y * a.y, 0.0)
    });
    let accel_means = windowed_means(&accel, n, stride, Vec3::zeros());
    let first = accel_means.first().map(|w| [w.1.x, w.1.y]).unwrap_or([0.0; 2]);
    let min_accel_mean = accel_means
        .iter()
        .map(|w| w.1.x.min(w.1.y))
        .fold(f64::INFINITY, f64::min);

    let tilt_pass = min_tilt_mean >= cfg.rho * cfg.rho;
    let accel_pass = min_accel_mean >= cfg.rho_bar;
    let guaranteed = tilt_pass && accel_pass;
    ExcitationReport {
        min_tilt_mean,
        tilt_pass,
        first_window_accel_means: first,
        min_accel_mean,
        accel_pass,
        guaranteed,
        uniform_pass,
        consistent: !guaranteed || uniform_pass,
    }
}

/// Effect of removing the magnetometer on `D`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AblationReport {
    /// Norm of the third row of `D` without magnetometer.
    pub row3_norm: f64,
    /// Norm of the third column of `D` without magnetometer.
    pub col3_norm: f64,
    /// `|D n|` for the heading direction `n` of the variant.
    pub heading_residual: f64,
}

pub fn magnetometer_ablation(truth: &TruthState, model: &StarModel) -> AblationReport {
    let ablated = model.without_magnetometer();
    let d = d_matrix_analytic(truth, &ablated).d;
    let mut n = nalgebra::Vector6::zeros();
    n.fixed_rows_mut::<3>(0).copy_from(&model.heading_direction(truth));
    AblationReport {
        row3_norm: d.row(2).norm(),
        col3_norm: d.column(2).norm(),
        heading_residual: (d * n).norm(),
    }
}

/// One row of the per-time observability trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservabilitySample {
    pub t: f64,
    pub min_eig_d: f64,
    /// Minimum eigenvalue of the window starting at `t`, if one does.
    pub windowed_min_eig: Option<f64>,
    pub r33: f64,
    pub horizontal_speed: f64,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservabilityReport {
    pub variant: Variant,
    pub magnetometer: bool,
    pub samples: Vec<ObservabilitySample>,
    pub instantaneous_min_eigenvalue: f64,
    pub instantaneous_pass: bool,
    pub uniform: UniformVerdict,
    /// Minimum eigenvalue of the Gramian over the first window.
    pub gramian_min_eigenvalue: f64,
    pub motion_cases: MotionCaseReport,
    pub excitation: Option<ExcitationReport>,
    pub ablation: Option<AblationReport>,
    /// Largest analytic-vs-numeric `D` deviation on the sweep.
    pub oracle_deviation: f64,
}

/// Full analysis of one variant on `[0, horizon]`. With `model.magnetometer`
/// false the ablation entries are filled in.
pub fn analyze(
    trajectory: &Trajectory,
    horizon: f64,
    cfg: &ObservabilityConfig,
    model: &StarModel,
) -> Result<ObservabilityReport> {
    cfg.validate()?;
    check_horizon(horizon, cfg.delta, "uniform-observability")?;
    let (h, n, stride) = window_grid(cfg, cfg.delta);
    let s = sweep(horizon, h, |t| {
        let truth = trajectory.state(t);
        let analytic = d_matrix_analytic(&truth, model);
        let numeric = d_matrix_numeric(trajectory, t, model, 1e-5);
        (truth, analytic, (analytic.d - numeric.d).amax())
    });
    let mut ds = Vec::with_capacity(s.values.len());
    let mut truths = Vec::with_capacity(s.values.len());
    let mut oracle_deviation = 0.0f64;
    for (truth, d, deviation) in s.values {
        if !(deviation <= ORACLE_TOL) {
            return Err(Error::OracleMismatch { t: truth.t, deviation });
        }
        oracle_deviation = oracle_deviation.max(deviation);
        truths.push((truth, d.min_eigenvalue()));
        ds.push(d.d);
    }
    let d_sweep = Sweep { h, values: ds };
    let uniform = uniform_from_sweep(&d_sweep, n, stride, cfg.mu);
    let truth_sweep = Sweep { h, values: truths };
    let motion_cases = motion_cases_from_sweep(&truth_sweep, cfg, model);

    let mut windowed = vec![None; truth_sweep.values.len()];
    for (k, w) in uniform.windows.iter().enumerate() {
        windowed[k * stride] = Some(w.min_eigenvalue);
    }
    let samples: Vec<ObservabilitySample> = truth_sweep
        .values
        .iter()
        .zip(windowed)
        .map(|((truth, eig), windowed_min_eig)| ObservabilitySample {
            t: truth.t,
            min_eig_d: *eig,
            windowed_min_eig,
            r33: truth.rotation.r33(),
            horizontal_speed: truth.velocity.cross(&e3()).norm(),
            rate: truth.angular_velocity.norm(),
        })
        .collect();
    let instantaneous_min_eigenvalue = samples.iter().map(|s| s.min_eig_d).fold(f64::INFINITY, f64::min);

    let excitation = if horizon >= cfg.delta.max(cfg.delta_bar) {
        Some(excitation_from(trajectory, horizon, cfg, uniform.pass))
    } else {
        None
    };
    let ablation = (!model.magnetometer).then(|| {
        truth_sweep
            .values
            .iter()
            .map(|(truth, _)| magnetometer_ablation(truth, model))
            .fold(
                AblationReport {
                    row3_norm: 0.0,
                    col3_norm: 0.0,
                    heading_residual: 0.0,
                },
                |a, b| AblationReport {
                    row3_norm: a.row3_norm.max(b.row3_norm),
                    col3_norm: a.col3_norm.max(b.col3_norm),
                    heading_residual: a.heading_residual.max(b.heading_residual),
                },
            )
    });
    let w = gramian(trajectory, 0.0, cfg.delta, model, n)?;

    Ok(ObservabilityReport {
        variant: model.variant,
        magnetometer: model.magnetometer,
        samples,
        instantaneous_min_eigenvalue,
        instantaneous_pass: instantaneous_min_eigenvalue >= cfg.mu,
        uniform,
        gramian_min_eigenvalue: SymmetricEigen::new(w).eigenvalues.min(),
        motion_cases,
        excitation,
        ablation,
        oracle_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observer::{linearize_v1, linearize_v2};
    use crate::truth::{
        circle_rate, mag_field, AttitudeProfile, Signal, VelocityProfile, GRAVITY,
    };
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(variant: Variant) -> StarModel {
        StarModel::new(&Trajectory::reference_circle(), variant)
    }

    fn still_state(rotation: crate::attitude::Rotation) -> TruthState {
        TruthState {
            t: 0.0,
            rotation,
            body_velocity: Vec3::zeros(),
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
            specific_acceleration: -GRAVITY * (rotation.transpose() * e3()),
        }
    }

    /// Random trajectory built from sinusoids so every state is reachable
    /// with analytic derivatives.
    fn random_trajectory(rng: &mut ChaCha8Rng) -> (Trajectory, f64) {
        let mut sine = |amp: f64| Signal::Sine {
            offset: rng.random_range(-amp..amp),
            amplitude: rng.random_range(0.0..amp),
            frequency: rng.random_range(0.1..2.0),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        };
        let velocity = VelocityProfile::Components {
            x: sine(10.0),
            y: sine(10.0),
            z: sine(3.0),
        };
        let attitude = AttitudeProfile {
            roll: sine(1.0),
            pitch: sine(0.7),
            yaw: sine(3.0),
        };
        let t = rng.random_range(0.0..20.0);
        (Trajectory::new(velocity, attitude), t)
    }

    #[test]
    fn star_pair_at_rest() {
        let p = star_pair(&still_state(crate::attitude::Rotation::identity()), &model(Variant::LambdaTilde));
        let (_, _, bl, _) = blocks(&p.a);
        assert_eq!(bl, GRAVITY * skew(&e3()));
        let row3: Vec<f64> = p.c.row(2).iter().copied().collect();
        assert_eq!(row3, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(p.delta, Mat3::identity());
    }

    #[test]
    fn star_pair_matches_linearization_at_zero_error() {
        let traj = Trajectory::reference_circle();
        let s = traj.state(3.7);
        let m = mag_field();
        let p1 = star_pair(&s, &model(Variant::LambdaTilde));
        let l1 = linearize_v1(&s.rotation, &s.body_velocity, &s.angular_velocity, &m, GRAVITY);
        assert_eq!((p1.a, p1.c), (l1.a, l1.c));
        let p2 = star_pair(&s, &model(Variant::LambdaBar));
        let l2 = linearize_v2(&s.rotation, &s.body_velocity, &s.angular_velocity, &m, GRAVITY);
        assert_eq!((p2.a, p2.c), (l2.a, l2.c));
    }

    #[test]
    fn star_pair_on_circle_at_start() {
        let s = Trajectory::reference_circle().state(0.0);
        let p = star_pair(&s, &model(Variant::LambdaTilde));
        let speed = 15.0 * circle_rate();
        assert_relative_eq!(speed, 7.745966692, epsilon = 1e-9);
        assert_relative_eq!(p.c[(2, 0)], speed, epsilon = 1e-9);
        assert!(p.c[(2, 1)].abs() < 1e-12);
        assert_eq!(p.c[(2, 2)], 0.0);
    }

    #[test]
    fn analytic_d_at_rest() {
        let d = d_matrix_analytic(&still_state(crate::attitude::Rotation::identity()), &model(Variant::LambdaTilde));
        let m = skew(&mag_field());
        let pi_e3 = projector(&e3()).unwrap();
        assert!((d.d11 - (-m * m + GRAVITY * GRAVITY * pi_e3)).amax() < 1e-12);
        assert_eq!(d.d12, Mat3::zeros());
        assert!((d.d22 - Mat3::identity()).amax() < 1e-15);
        assert_eq!(d.d21, d.d12.transpose());
    }

    #[test]
    fn variant2_blocks_are_similar_to_variant1() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (traj, t) = random_trajectory(&mut rng);
            let s = traj.state(t);
            let d1 = d_matrix_analytic(&s, &model(Variant::LambdaTilde));
            let d2 = d_matrix_analytic(&s, &model(Variant::LambdaBar));
            let r = s.rotation.matrix();
            assert!((d2.d11 - r.transpose() * d1.d11 * r).amax() < 1e-12);
            assert!((d2.d12 - r.transpose() * d1.d12).amax() < 1e-12);
            assert_eq!(d2.d22, d1.d22);
        }
    }

    #[test]
    fn analytic_d_matches_numeric_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (traj, t) = random_trajectory(&mut rng);
            for variant in Variant::ALL {
                let m = StarModel::new(&traj, variant);
                let a = d_matrix_analytic(&traj.state(t), &m);
                let n = d_matrix_numeric(&traj, t, &m, 1e-5);
                let dev = (a.d - n.d).amax();
                assert!(dev < 1e-6, "{variant} t={t}: {dev}");
                assert!((a.d - a.d.transpose()).amax() < 1e-9);
                assert!(a.min_eigenvalue() >= -1e-10 * a.d.amax().max(1.0));
            }
        }
    }

    #[test]
    fn analytic_c_dot_matches_central_difference() {
        let traj = Trajectory::reference_circle();
        for variant in Variant::ALL {
            let m = StarModel::new(&traj, variant);
            let a = c_star_dot_analytic(&traj.state(2.0), &m);
            let n = c_star_dot_numeric(&traj, 2.0, &m, 1e-5);
            assert!((a - n).amax() < 1e-7);
        }
    }

    #[test]
    fn central_difference_is_second_order() {
        let traj = Trajectory::reference_circle();
        let m = model(Variant::LambdaBar);
        let exact = d_matrix_analytic(&traj.state(1.3), &m).d;
        let e1 = (d_matrix_numeric(&traj, 1.3, &m, 1e-2).d - exact).amax();
        let e2 = (d_matrix_numeric(&traj, 1.3, &m, 5e-3).d - exact).amax();
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn stationary_c_gives_plain_product() {
        let traj = Trajectory::new(
            VelocityProfile::Components {
                x: Signal::constant(2.0),
                y: Signal::constant(-1.0),
                z: Signal::constant(0.5),
            },
            AttitudeProfile::fixed(0.3, -0.2, 1.0),
        );
        let m = model(Variant::LambdaTilde);
        let p = star_pair(&traj.state(0.0), &m);
        assert!(c_star_dot_numeric(&traj, 0.0, &m, 1e-5).amax() < 1e-12);
        let ca = p.c * p.a;
        let expected = p.c.transpose() * p.c + ca.transpose() * ca;
        assert!((d_matrix_numeric(&traj, 0.0, &m, 1e-5).d - expected).amax() < 1e-9);
    }

    #[test]
    fn gramian_of_constant_pair() {
        // A* = 0 requires Omega = 0 and no gravity coupling: zero gravity.
        let mut traj = Trajectory::new(
            VelocityProfile::Components {
                x: Signal::constant(1.0),
                y: Signal::constant(0.0),
                z: Signal::constant(0.0),
            },
            AttitudeProfile::fixed(0.0, 0.0, 0.0),
        );
        traj.gravity = 0.0;
        let mut m = model(Variant::LambdaTilde);
        m.gravity = 0.0;
        assert_eq!(star_pair(&traj.state(0.0), &m).a, Mat6::zeros());
        let c = star_pair(&traj.state(0.0), &m).c;
        let w = gramian(&traj, 0.0, 2.0, &m, 64).unwrap();
        assert!((w - c.transpose() * c).amax() < 1e-14);
    }

    #[test]
    fn transition_matrix_axioms() {
        let traj = Trajectory::reference_circle();
        for variant in Variant::ALL {
            let m = StarModel::new(&traj, variant);
            assert_eq!(transition_matrix(&traj, &m, 1.0, 1.0, 10), Mat6::identity());
            let full = transition_matrix(&traj, &m, 0.0, 2.0, 400);
            let split = transition_matrix(&traj, &m, 1.0, 2.0, 200) * transition_matrix(&traj, &m, 0.0, 1.0, 200);
            assert!((full - split).amax() < 1e-8);
        }
    }

    #[test]
    fn gramian_rejects_empty_window() {
        let traj = Trajectory::reference_circle();
        assert!(gramian(&traj, 0.0, 0.0, &model(Variant::LambdaTilde), 64).is_err());
    }

    #[test]
    fn instantaneous_check_examples() {
        let pass = check_instantaneous(&DMatrix::from_full(Mat6::identity() * 2.0, 0.0), 1.0);
        assert!(pass.pass);
        assert_relative_eq!(pass.min_eigenvalue, 2.0);
        let mut d = Mat6::identity();
        d.row_mut(2).fill(0.0);
        d.column_mut(2).fill(0.0);
        assert!(!check_instantaneous(&DMatrix::from_full(d, 0.0), 1e-12).pass);
    }

    #[test]
    fn circle_is_instantaneously_observable() {
        let traj = Trajectory::reference_circle();
        let m = model(Variant::LambdaTilde);
        for i in 0..=600 {
            let d = d_matrix_analytic(&traj.state(i as f64 * 0.1), &m);
            assert!(check_instantaneous(&d, 1e-3).pass);
        }
    }

    #[test]
    fn instantaneous_pass_implies_uniform_pass() {
        let traj = Trajectory::reference_circle();
        let cfg = ObservabilityConfig::default();
        for variant in Variant::ALL {
            let m = StarModel::new(&traj, variant);
            let r = analyze(&traj, 20.0, &cfg, &m).unwrap();
            assert!(r.instantaneous_pass);
            assert!(r.uniform.pass);
            assert!(r.uniform.min_eigenvalue >= r.instantaneous_min_eigenvalue - 1e-9);
        }
    }

    #[test]
    fn short_horizon_is_a_configuration_error() {
        let traj = Trajectory::reference_circle();
        let err = check_uniform(&traj, 4.0, &ObservabilityConfig::default(), &model(Variant::LambdaTilde)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn decaying_tilt_defeats_the_uniform_bound() {
        // Roll settles towards 90 deg: R33 and Omega decay together, so D
        // stays positive definite at every instant while the windowed bound
        // is eventually lost.
        let traj = Trajectory::new(
            VelocityProfile::reference_circle(),
            AttitudeProfile {
                roll: Signal::Settle {
                    start: 0.0,
                    end: std::f64::consts::FRAC_PI_2,
                    time_constant: 4.0,
                },
                pitch: Signal::constant(0.0),
                yaw: Signal::constant(0.0),
            },
        );
        let cfg = ObservabilityConfig::default();
        let r = analyze(&traj, 40.0, &cfg, &model(Variant::LambdaTilde)).unwrap();
        assert!(r.samples.iter().all(|s| s.min_eig_d > 0.0));
        assert!(r.uniform.windows.first().unwrap().pass);
        assert!(!r.uniform.windows.last().unwrap().pass);
    }

    #[test]
    fn motion_case_threshold() {
        let cfg = ObservabilityConfig::default();
        let bound = GRAVITY * 0.25 / 6f64.sqrt();
        assert_relative_eq!(bound, 1.0013, epsilon = 1e-4);
        let slow = |speed: f64| {
            Trajectory::new(
                VelocityProfile::Components {
                    x: Signal::constant(speed),
                    y: Signal::constant(0.0),
                    z: Signal::constant(0.0),
                },
                AttitudeProfile {
                    roll: Signal::constant(0.0),
                    pitch: Signal::constant(0.2),
                    yaw: Signal::Ramp { offset: 0.0, rate: 1.0 },
                },
            )
        };
        let m = model(Variant::LambdaTilde);
        let ok = motion_case_verdict(&slow(0.9), 20.0, &cfg, &m).unwrap();
        assert_eq!(ok.cases, vec![MotionCase::SlowMotion]);
        assert!(ok.guaranteed && ok.consistent);
        assert_relative_eq!(ok.slow_motion_product, 0.9, epsilon = 1e-9);
        let fast = motion_case_verdict(&slow(1.2), 20.0, &cfg, &m).unwrap();
        assert!(fast.cases.is_empty());
        assert!(!fast.guaranteed);
        assert_eq!(fast.verdict(), "no guarantee (no case applies)");
    }

    #[test]
    fn circle_is_persistently_accelerated() {
        let traj = Trajectory::reference_circle();
        let alpha = circle_rate();
        let cfg = ObservabilityConfig {
            delta_bar: std::f64::consts::TAU / alpha,
            ..Default::default()
        };
        let r = excitation_verdict(&traj, 40.0, &cfg, &model(Variant::LambdaTilde)).unwrap();
        assert_relative_eq!(15.0 * alpha * alpha, 4.0, epsilon = 1e-12);
        for mean in r.first_window_accel_means {
            assert_relative_eq!(mean, 8.0, max_relative = 1e-6);
        }
        assert!(r.accel_pass && r.tilt_pass && r.uniform_pass && r.consistent);
        assert!(r.min_tilt_mean >= 0.25);
    }

    #[test]
    fn constant_velocity_is_not_persistently_accelerated() {
        let traj = Trajectory::new(
            VelocityProfile::Components {
                x: Signal::constant(0.9),
                y: Signal::constant(0.0),
                z: Signal::constant(0.0),
            },
            AttitudeProfile {
                roll: Signal::constant(0.0),
                pitch: Signal::constant(0.2),
                yaw: Signal::Ramp { offset: 0.0, rate: 1.0 },
            },
        );
        let r = excitation_verdict(&traj, 20.0, &ObservabilityConfig::default(), &model(Variant::LambdaTilde)).unwrap();
        assert!(!r.accel_pass);
        assert_eq!(r.min_accel_mean, 0.0);
    }

    #[test]
    fn magnetometer_removal_zeroes_heading_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (traj, t) = random_trajectory(&mut rng);
            let s = traj.state(t);
            let r1 = magnetometer_ablation(&s, &model(Variant::LambdaTilde));
            assert!(r1.row3_norm < 1e-12 && r1.col3_norm < 1e-12);
            let r2 = magnetometer_ablation(&s, &model(Variant::LambdaBar));
            assert!(r2.heading_residual < 1e-9 * (1.0 + s.velocity.norm().powi(2)));
        }
    }

    #[test]
    fn gramian_is_singular_without_magnetometer() {
        let traj = Trajectory::reference_circle();
        let m = model(Variant::LambdaTilde);
        let w = gramian(&traj, 0.0, 5.0, &m.without_magnetometer(), 500).unwrap();
        assert!(SymmetricEigen::new(w).eigenvalues.min() < 1e-10);
        let w = gramian(&traj, 0.0, 5.0, &m, 500).unwrap();
        assert!(SymmetricEigen::new(w).eigenvalues.min() > 1e-3);
    }
}
