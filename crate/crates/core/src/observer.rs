//! Riccati velocity-aided attitude observers.
//!
//! Both observers share the estimate dynamics
//!
//! ```text
//! R_hat_dot = R_hat [Omega - sigma_R]x
//! V_hat_dot = -[Omega]x V_hat + a_B + g R_hat^T e3 - sigma_V
//! ```
//!
//! and differ in the attitude-error chart used to linearize the error system:
//! [`Variant::LambdaTilde`] uses `R R_hat^T` (inertial-frame error) and
//! [`Variant::LambdaBar`] uses `R_hat^T R` (body-frame error). The output
//! vector stacks the body velocity components `V1`, `V2`, the inertial
//! vertical velocity `v3` and the magnetometer residual.

use std::fmt;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::attitude::{
    block6, e1, e2, e3, euler_zyx, exp_rotation, projector, skew, wrap_angle, Mat3, Mat6, Rotation,
    Vec3, Vec6,
};
use crate::error::{Error, Result};
use crate::riccati::{innovation, GainConfig, RiccatiState};
use crate::truth::{AidingSample, ImuNodes, MeasurementFrame, TruthState};

/// Attitude-error parametrization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Observer 1: error `R R_hat^T`, input `u = [R_hat sigma_R; sigma_V]`.
    LambdaTilde,
    /// Observer 2: error `R_hat^T R`, input `u = [sigma_R; sigma_V]`.
    LambdaBar,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::LambdaTilde, Variant::LambdaBar];

    pub fn number(self) -> u8 {
        match self {
            Variant::LambdaTilde => 1,
            Variant::LambdaBar => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Variant::LambdaTilde),
            2 => Some(Variant::LambdaBar),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "observer{}", self.number())
    }
}

/// Form of the magnetometer rows of the output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MagResidual {
    /// `R_hat m_B - m_I` with output block `[m_I]x` (or `[m_I]x R_hat`).
    #[default]
    Difference,
    /// `R_hat m_B x m_I` with output block `pi_{m_I}`; observer 1 only.
    Cross,
}

/// When the aiding-sensor correction is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionPolicy {
    /// Correct at every integration step using held aiding samples.
    #[default]
    EveryStep,
    /// Correct only on steps with fresh aiding samples, scaling `Q` by the
    /// number of steps per aiding period.
    FreshOnly,
}

/// Linear time-varying approximation of the error system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearizedSystem {
    pub a: Mat6,
    pub c: Mat6,
}

/// Output vector
/// `y = [V1 - V_hat1; V2 - V_hat2; v3 - e3^T R_hat V_hat; R_hat m_B - m_I]`.
pub fn output_vector(rotation: &Rotation, velocity: &Vec3, aiding: &AidingSample, mag_field: &Vec3) -> Vec6 {
    let mag = rotation.mul_vec(&aiding.mag) - mag_field;
    Vec6::new(
        aiding.body_velocity_x - velocity.x,
        aiding.body_velocity_y - velocity.y,
        aiding.vertical_velocity - e3().dot(&rotation.mul_vec(velocity)),
        mag.x,
        mag.y,
        mag.z,
    )
}

/// Output vector with the cross-product magnetometer residual `R_hat m_B x m_I`.
pub fn output_vector_cross(
    rotation: &Rotation,
    velocity: &Vec3,
    aiding: &AidingSample,
    mag_field: &Vec3,
) -> Vec6 {
    let mut y = output_vector(rotation, velocity, aiding, mag_field);
    let mag = rotation.mul_vec(&aiding.mag).cross(mag_field);
    y.fixed_rows_mut::<3>(3).copy_from(&mag);
    y
}

fn velocity_rows(c: &mut Mat6, rotation: &Rotation, attitude_row: &Vec3) {
    c.fixed_view_mut::<1, 3>(0, 3).copy_from(&e1().transpose());
    c.fixed_view_mut::<1, 3>(1, 3).copy_from(&e2().transpose());
    c.fixed_view_mut::<1, 3>(2, 0).copy_from(&attitude_row.transpose());
    let r3 = rotation.matrix().row(2).into_owned();
    c.fixed_view_mut::<1, 3>(2, 3).copy_from(&r3);
}

/// Observer-1 linearization.
///
/// `A = [0, 0; g R_hat^T [e3]x, -[Omega]x]`, `C` rows
/// `(0, e1^T)`, `(0, e2^T)`, `(-e3^T [R_hat V_hat]x, e3^T R_hat)`, `([m_I]x, 0)`.
pub fn linearize_v1(rotation: &Rotation, velocity: &Vec3, omega: &Vec3, mag_field: &Vec3, gravity: f64) -> LinearizedSystem {
    let rt = rotation.transpose();
    let a = block6(
        &Mat3::zeros(),
        &Mat3::zeros(),
        &(gravity * rt.matrix() * skew(&e3())),
        &-skew(omega),
    );
    let mut c = Mat6::zeros();
    let inertial_velocity = rotation.mul_vec(velocity);
    let row3 = -(skew(&inertial_velocity).transpose() * e3());
    velocity_rows(&mut c, rotation, &row3);
    c.fixed_view_mut::<3, 3>(3, 0).copy_from(&skew(mag_field));
    LinearizedSystem { a, c }
}

/// Observer-2 linearization.
///
/// `A = [-[Omega]x, 0; g [R_hat^T e3]x, -[Omega]x]`, `C` rows
/// `(0, e1^T)`, `(0, e2^T)`, `(-e3^T R_hat [V_hat]x, e3^T R_hat)`, `([m_I]x R_hat, 0)`.
pub fn linearize_v2(rotation: &Rotation, velocity: &Vec3, omega: &Vec3, mag_field: &Vec3, gravity: f64) -> LinearizedSystem {
    let rt = rotation.transpose();
    let a = block6(
        &-skew(omega),
        &Mat3::zeros(),
        &(gravity * skew(&(rt * e3()))),
        &-skew(omega),
    );
    let mut c = Mat6::zeros();
    let row3 = -((rotation.matrix() * skew(velocity)).transpose() * e3());
    velocity_rows(&mut c, rotation, &row3);
    c.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(skew(mag_field) * rotation.matrix()));
    LinearizedSystem { a, c }
}

pub fn linearize(
    variant: Variant,
    rotation: &Rotation,
    velocity: &Vec3,
    omega: &Vec3,
    mag_field: &Vec3,
    gravity: f64,
) -> LinearizedSystem {
    match variant {
        Variant::LambdaTilde => linearize_v1(rotation, velocity, omega, mag_field, gravity),
        Variant::LambdaBar => linearize_v2(rotation, velocity, omega, mag_field, gravity),
    }
}

/// Everything an observer needs besides its state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObserverConfig {
    pub variant: Variant,
    pub gains: GainConfig,
    pub gravity: f64,
    pub mag_field: Vec3,
    pub mag_residual: MagResidual,
    pub correction: CorrectionPolicy,
    /// Integration steps per aiding-sensor period, used by
    /// [`CorrectionPolicy::FreshOnly`].
    pub aiding_interval_steps: u64,
}

impl ObserverConfig {
    pub fn new(variant: Variant, gains: GainConfig, gravity: f64, mag_field: Vec3) -> Self {
        ObserverConfig {
            variant,
            gains,
            gravity,
            mag_field,
            mag_residual: MagResidual::Difference,
            correction: CorrectionPolicy::EveryStep,
            aiding_interval_steps: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gains.validate()?;
        if self.mag_residual == MagResidual::Cross && self.variant != Variant::LambdaTilde {
            return Err(Error::Config(
                "the cross-product magnetometer residual is only defined for observer 1".into(),
            ));
        }
        if self.aiding_interval_steps == 0 {
            return Err(Error::Config("aiding_interval_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Estimate and Riccati matrix of one observer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObserverState {
    pub rotation: Rotation,
    pub velocity: Vec3,
    pub riccati: RiccatiState,
    pub variant: Variant,
}

/// Quantities computed during one observer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutput {
    pub output: Vec6,
    pub input: Vec6,
    pub sigma_r: Vec3,
    pub sigma_v: Vec3,
    /// Number of sub-steps the step was split into.
    pub substeps: u32,
}

#[derive(Clone, Debug)]
pub struct Observer {
    cfg: ObserverConfig,
    state: ObserverState,
}

impl Observer {
    pub fn new(cfg: ObserverConfig, rotation: Rotation, velocity: Vec3, t0: f64) -> Result<Self> {
        cfg.validate()?;
        Ok(Observer {
            state: ObserverState {
                rotation,
                velocity,
                riccati: RiccatiState::new(cfg.gains.p0, t0),
                variant: cfg.variant,
            },
            cfg,
        })
    }

    pub fn state(&self) -> &ObserverState {
        &self.state
    }

    pub fn config(&self) -> &ObserverConfig {
        &self.cfg
    }

    /// Output vector and linearization at the current estimate.
    pub fn output_and_system(&self, gyro: &Vec3, aiding: &AidingSample) -> (Vec6, LinearizedSystem) {
        let st = &self.state;
        let mut sys = linearize(
            self.cfg.variant,
            &st.rotation,
            &st.velocity,
            gyro,
            &self.cfg.mag_field,
            self.cfg.gravity,
        );
        let y = match self.cfg.mag_residual {
            MagResidual::Difference => output_vector(&st.rotation, &st.velocity, aiding, &self.cfg.mag_field),
            MagResidual::Cross => {
                let pi_m = projector(&self.cfg.mag_field.normalize()).expect("normalized");
                sys.c.fixed_view_mut::<3, 3>(3, 0).copy_from(&pi_m);
                output_vector_cross(&st.rotation, &st.velocity, aiding, &self.cfg.mag_field)
            }
        };
        (y, sys)
    }

    fn output_weight(&self, frame: &MeasurementFrame) -> Mat6 {
        let q = self.cfg.gains.q;
        match self.cfg.correction {
            CorrectionPolicy::EveryStep => q,
            CorrectionPolicy::FreshOnly if frame.fresh.aiding() => q * self.cfg.aiding_interval_steps as f64,
            CorrectionPolicy::FreshOnly => Mat6::zeros(),
        }
    }

    /// One integration step of length `dt` starting at `frame.t`.
    ///
    /// The step is split into sub-steps short enough for the explicit
    /// scheme to resolve the fastest closed-loop rate. On each sub-step the
    /// innovation is computed at its start and held, the estimate is
    /// propagated with a Magnus/RK4 scheme over the interpolated IMU nodes,
    /// and the Riccati matrix is advanced with RK4. The returned output and
    /// input are those at the start of the step.
    pub fn step(&mut self, frame: &MeasurementFrame, dt: f64) -> Result<StepOutput> {
        let q = self.output_weight(frame);
        let k = self.cfg.gains.k.at(frame.t);
        let mut first = None;
        let mut done = 0.0;
        let mut guard = 0usize;
        while done < 1.0 {
            let aiding = frame.aiding.at(done);
            let imu_start = frame.imu.at(done);
            let (y, sys) = self.output_and_system(&imu_start.gyro, &aiding);
            let rate = stiffness(&self.state.riccati.p, &sys, &q, k);
            let max_fraction = (MAX_STEP_RATE / (rate * dt)).min(1.0);
            guard += 1;
            let fraction = if guard >= MAX_SUBSTEPS {
                1.0 - done
            } else {
                max_fraction.min(1.0 - done)
            };
            // Avoid a sliver of a sub-step at the end.
            let fraction = if 1.0 - done - fraction < 1e-9 { 1.0 - done } else { fraction };
            let h = fraction * dt;

            let u = innovation(&self.state.riccati.p, &sys.c, &q, k, &y);
            let u_att = u.fixed_rows::<3>(0).into_owned();
            let sigma_r = match self.cfg.variant {
                Variant::LambdaTilde => self.state.rotation.transpose() * u_att,
                Variant::LambdaBar => u_att,
            };
            let sigma_v = u.fixed_rows::<3>(3).into_owned();
            if first.is_none() {
                first = Some(StepOutput {
                    output: y,
                    input: u,
                    sigma_r,
                    sigma_v,
                    substeps: 0,
                });
            }

            let imu = frame.imu.sub_interval(done, done + fraction);
            let (rotation, velocity) = propagate(
                &self.state.rotation,
                &self.state.velocity,
                &imu,
                &sigma_r,
                &sigma_v,
                self.cfg.gravity,
                h,
            );
            self.state.riccati.step(&sys.a, &sys.c, &q, &self.cfg.gains.s, h)?;
            self.state.rotation = rotation;
            self.state.velocity = velocity;
            done += fraction;
        }
        let mut out = first.expect("at least one sub-step");
        out.substeps = guard as u32;
        Ok(out)
    }
}

/// Largest product of sub-step length and closed-loop rate.
const MAX_STEP_RATE: f64 = 0.5;
const MAX_SUBSTEPS: usize = 1000;

/// Upper estimate of the fastest rate of the closed loop and of the CRE:
/// the correction contracts at rate `k lambda_max(P C^T Q C)` and the
/// quadratic CRE term at twice that, on top of the drift `A`.
fn stiffness(p: &Mat6, sys: &LinearizedSystem, q: &Mat6, k: f64) -> f64 {
    let w = sys.c.transpose() * q * sys.c;
    let lambda = match p.cholesky() {
        Some(ch) => {
            let l = ch.l();
            SymmetricEigen::new(l.transpose() * w * l).eigenvalues.max()
        }
        None => p.norm() * w.norm(),
    };
    2.0 * k.max(1.0) * lambda.max(0.0) + 2.0 * sys.a.norm() + 1e-12
}

/// Fourth-order Magnus increment for `R_dot = R [w(t)]x` from samples of `w`
/// at the start, midpoint and end of a step of length `h`.
pub fn magnus_increment(w0: &Vec3, wm: &Vec3, w1: &Vec3, h: f64) -> Vec3 {
    (w0 + 4.0 * wm + w1) * (h / 6.0) + w0.cross(w1) * (h * h / 12.0)
}

/// Integrates the estimate dynamics over one step with the correction
/// terms held constant. Attitude uses a fourth-order Magnus step applied by
/// right multiplication, velocity uses classical RK4 with the attitude
/// evaluated at the RK4 nodes.
pub fn propagate(
    rotation: &Rotation,
    velocity: &Vec3,
    imu: &ImuNodes,
    sigma_r: &Vec3,
    sigma_v: &Vec3,
    gravity: f64,
    h: f64,
) -> (Rotation, Vec3) {
    let w0 = imu.start.gyro - sigma_r;
    let wm = imu.mid.gyro - sigma_r;
    let w1 = imu.end.gyro - sigma_r;
    // Quadratic interpolation of w at h/4 for the half-step attitude.
    let wq = w0 * 0.375 + wm * 0.75 - w1 * 0.125;
    let half = exp_rotation(&magnus_increment(&w0, &wq, &wm, 0.5 * h));
    let full = exp_rotation(&magnus_increment(&w0, &wm, &w1, h));
    let r_mid = *rotation * half;
    let r_end = (*rotation * full).renormalized();

    let f = |r: &Rotation, gyro: &Vec3, accel: &Vec3, v: &Vec3| -> Vec3 {
        -gyro.cross(v) + accel + gravity * (r.transpose() * e3()) - sigma_v
    };
    let k1 = f(rotation, &imu.start.gyro, &imu.start.accel, velocity);
    let k2 = f(&r_mid, &imu.mid.gyro, &imu.mid.accel, &(velocity + k1 * (0.5 * h)));
    let k3 = f(&r_mid, &imu.mid.gyro, &imu.mid.accel, &(velocity + k2 * (0.5 * h)));
    let k4 = f(&r_end, &imu.end.gyro, &imu.end.accel, &(velocity + k3 * h));
    let v_end = velocity + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
    (r_end, v_end)
}

/// Estimation errors against the truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorMetrics {
    /// Angle of `R R_hat^T` in `[0, pi]` (rad).
    pub attitude_error: f64,
    /// `V - V_hat` (m/s).
    pub velocity_error: Vec3,
    /// Wrapped roll, pitch, yaw differences (rad).
    pub euler_error: [f64; 3],
}

impl ErrorMetrics {
    pub fn compute(truth: &TruthState, estimate: &ObserverState) -> Self {
        let attitude_error = (truth.rotation * estimate.rotation.transpose()).angle();
        let et = euler_zyx(&truth.rotation);
        let ee = euler_zyx(&estimate.rotation);
        ErrorMetrics {
            attitude_error,
            velocity_error: truth.body_velocity - estimate.velocity,
            euler_error: [
                wrap_angle(et.roll - ee.roll),
                wrap_angle(et.pitch - ee.pitch),
                wrap_angle(et.yaw - ee.yaw),
            ],
        }
    }

    pub fn velocity_error_norm(&self) -> f64 {
        self.velocity_error.norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attitude::{quat_to_rot, rot_x, UnitQuaternion};
    use crate::riccati::diag_blocks;
    use crate::truth::{mag_field, SensorConfig, SensorSampler, Trajectory, GRAVITY};
    use approx::assert_relative_eq;

    fn exact_frame(state: &TruthState) -> MeasurementFrame {
        MeasurementFrame::exact(state, &mag_field())
    }

    #[test]
    fn output_vanishes_at_perfect_estimate() {
        let traj = Trajectory::reference_circle();
        let s = traj.state(2.3);
        let y = output_vector(&s.rotation, &s.body_velocity, exact_frame(&s).aiding_sample(), &mag_field());
        assert!(y.amax() < 1e-14);
    }

    #[test]
    fn output_with_unit_velocity_error() {
        let traj = Trajectory::reference_circle();
        let s = traj.state(1.0);
        let v_hat = s.body_velocity + e1();
        let y = output_vector(&s.rotation, &v_hat, exact_frame(&s).aiding_sample(), &mag_field());
        assert_relative_eq!(y[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(y[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(y[2], -e3().dot(&(s.rotation * e1())), epsilon = 1e-12);
        assert!(y.fixed_rows::<3>(3).amax() < 1e-14);
    }

    #[test]
    fn magnetometer_rows_vanish_at_identity() {
        let m = mag_field();
        let mut s = Trajectory::reference_circle().state(0.0);
        s.rotation = Rotation::identity();
        let frame = exact_frame(&s);
        assert_eq!(frame.aiding_sample().mag, m);
        let y = output_vector(&Rotation::identity(), &Vec3::zeros(), frame.aiding_sample(), &m);
        assert_eq!(y.fixed_rows::<3>(3).into_owned(), Vec3::zeros());
    }

    #[test]
    fn observer1_matrices_at_identity() {
        let sys = linearize_v1(&Rotation::identity(), &Vec3::zeros(), &Vec3::zeros(), &mag_field(), GRAVITY);
        let expected_a = block6(&Mat3::zeros(), &Mat3::zeros(), &(GRAVITY * skew(&e3())), &Mat3::zeros());
        assert_eq!(sys.a, expected_a);
        let row3: Vec<f64> = sys.c.row(2).iter().copied().collect();
        assert_eq!(row3, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_relative_eq!(sys.c[(3, 1)], -0.9008);
        assert_eq!(sys.c.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(sys.c.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn variants_coincide_at_identity_attitude() {
        let v = Vec3::new(1.0, -2.0, 0.5);
        let w = Vec3::new(0.0, 0.0, 0.0);
        let s1 = linearize_v1(&Rotation::identity(), &v, &w, &mag_field(), GRAVITY);
        let s2 = linearize_v2(&Rotation::identity(), &v, &w, &mag_field(), GRAVITY);
        assert!((s1.a - s2.a).amax() < 1e-15);
        assert!((s1.c - s2.c).amax() < 1e-15);
    }

    #[test]
    fn observer2_top_left_block() {
        let sys = linearize_v2(&Rotation::identity(), &Vec3::zeros(), &e3(), &mag_field(), GRAVITY);
        let tl = sys.a.fixed_view::<3, 3>(0, 0).into_owned();
        assert_eq!(tl, -skew(&e3()));
    }

    #[test]
    fn magnus_step_is_fourth_order() {
        // w(t) = (sin t, cos 2t, t) integrated from 0 to 1.
        let w = |t: f64| Vec3::new(t.sin(), (2.0 * t).cos(), t);
        let run = |n: usize| {
            let h = 1.0 / n as f64;
            let mut r = Rotation::identity();
            for i in 0..n {
                let t = i as f64 * h;
                r = r * exp_rotation(&magnus_increment(&w(t), &w(t + 0.5 * h), &w(t + h), h));
            }
            r
        };
        let reference = run(4096);
        let e1 = (run(16).matrix() - reference.matrix()).amax();
        let e2 = (run(32).matrix() - reference.matrix()).amax();
        let order = (e1 / e2).log2();
        assert!(order > 3.7, "observed order {order}");
    }

    fn run_noiseless(variant: Variant, horizon: f64) -> f64 {
        let traj = Trajectory::reference_circle();
        let dt = 0.01;
        let mut sampler = SensorSampler::new(SensorConfig::ideal(100.0), dt).unwrap();
        let s0 = traj.state(0.0);
        let cfg = ObserverConfig::new(variant, GainConfig::default(), GRAVITY, mag_field());
        let mut obs = Observer::new(cfg, s0.rotation, s0.body_velocity, 0.0).unwrap();
        let mut worst = 0.0f64;
        let n = (horizon / dt).round() as usize;
        for k in 0..n {
            let frame = sampler.next_frame(&traj);
            let out = obs.step(&frame, dt).unwrap();
            let truth = traj.state(k as f64 * dt);
            assert!(out.output.norm() < 1e-9 * (1.0 + truth.velocity.norm()), "|y| = {}", out.output.norm());
            let after = traj.state((k + 1) as f64 * dt);
            let e = ErrorMetrics::compute(&after, obs.state());
            worst = worst.max(e.attitude_error).max(e.velocity_error_norm());
            assert!(obs.state().rotation.residual() < 1e-9);
        }
        worst
    }

    #[test]
    fn zero_error_is_an_equilibrium() {
        for variant in Variant::ALL {
            let worst = run_noiseless(variant, 10.0);
            assert!(worst < 1e-6, "{variant}: {worst}");
        }
    }

    #[test]
    fn zero_output_weight_gives_open_loop_integration() {
        let traj = Trajectory::reference_circle();
        let s0 = traj.state(0.0);
        let mut gains = GainConfig::default();
        gains.q = Mat6::zeros();
        let cfg = ObserverConfig::new(Variant::LambdaTilde, gains, GRAVITY, mag_field());
        let r0 = rot_x(0.3) * s0.rotation;
        let mut obs = Observer::new(cfg, r0, s0.body_velocity + e2(), 0.0).unwrap();
        let mut sampler = SensorSampler::new(SensorConfig::ideal(100.0), 0.01).unwrap();
        let frame = sampler.next_frame(&traj);
        let out = obs.step(&frame, 0.01).unwrap();
        assert_eq!(out.sigma_r, Vec3::zeros());
        assert_eq!(out.sigma_v, Vec3::zeros());
        let (r, v) = propagate(&r0, &(s0.body_velocity + e2()), &frame.imu, &Vec3::zeros(), &Vec3::zeros(), GRAVITY, 0.01);
        assert_eq!(obs.state().rotation, r);
        assert_eq!(obs.state().velocity, v);
        // P grows by S dt to first order.
        assert!(obs.state().riccati.p[(0, 0)] > 2.0);
    }

    #[test]
    fn variants_share_velocity_correction_when_attitude_is_known() {
        // With R_hat = R and a common block-diagonal P the output matrices of
        // the two variants differ only by blockdiag(R_hat, I) on the
        // attitude columns, which leaves sigma_V untouched.
        let traj = Trajectory::reference_circle();
        let dt = 0.01;
        let s0 = traj.state(0.0);
        let p0 = GainConfig::default().p0;
        let mut runs = Vec::new();
        for variant in Variant::ALL {
            let cfg = ObserverConfig::new(variant, GainConfig::default(), GRAVITY, mag_field());
            let offset = Vec3::new(0.3, -0.2, 0.4);
            let mut obs = Observer::new(cfg, s0.rotation, s0.body_velocity + offset, 0.0).unwrap();
            let mut sampler = SensorSampler::new(SensorConfig::ideal(100.0), dt).unwrap();
            let mut sigma_v = Vec::new();
            for k in 0..100 {
                let frame = sampler.next_frame(&traj);
                let truth = traj.state(k as f64 * dt);
                obs.state.rotation = truth.rotation;
                obs.state.velocity = truth.body_velocity + offset;
                obs.state.riccati.p = p0;
                sigma_v.push(obs.step(&frame, dt).unwrap().sigma_v);
            }
            runs.push(sigma_v);
        }
        let worst = runs[0]
            .iter()
            .zip(&runs[1])
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        assert!(runs[0][0].norm() > 1e-3);
        assert!(worst < 1e-9, "max sigma_V deviation {worst}");
    }

    #[test]
    fn cross_residual_rejected_for_observer2() {
        let mut cfg = ObserverConfig::new(Variant::LambdaBar, GainConfig::default(), GRAVITY, mag_field());
        cfg.mag_residual = MagResidual::Cross;
        assert!(Observer::new(cfg, Rotation::identity(), Vec3::zeros(), 0.0).is_err());
    }

    #[test]
    fn error_metrics_report_half_turn() {
        let traj = Trajectory::reference_circle();
        let s = traj.state(0.0);
        let half_turn = quat_to_rot(&UnitQuaternion::new(0.0, e1()).unwrap());
        let est = ObserverState {
            rotation: half_turn.transpose() * s.rotation,
            velocity: s.body_velocity - Vec3::new(-5.0, 5.0, -5.0),
            riccati: RiccatiState::new(diag_blocks(2.0, 20.0), 0.0),
            variant: Variant::LambdaTilde,
        };
        let e = ErrorMetrics::compute(&s, &est);
        assert_relative_eq!(e.attitude_error, std::f64::consts::PI, epsilon = 1e-9);
        assert_relative_eq!(e.velocity_error_norm(), 75f64.sqrt(), epsilon = 1e-12);
    }
}
