//! Ground-truth trajectories and multi-rate sensor sampling.
//!
//! A [`Trajectory`] is analytic: inertial velocity and Euler-angle attitude
//! are built from [`Signal`]s with closed-form derivatives, so `v_dot` and
//! the body rate `Omega` are exact. The specific acceleration follows from
//! the flat non-rotating Earth model, `a_B = R^T (v_dot - g e3)` with the
//! inertial z axis pointing down.

use std::f64::consts::FRAC_PI_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::attitude::{e3, EulerAngles, Rotation, Vec3};
use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;

/// Earth magnetic field direction in the inertial frame used by the
/// simulation scenarios (norm 0.99994 as tabulated).
pub const MAG_FIELD: [f64; 3] = [0.434, -0.0091, 0.9008];

/// Speed gain of the circular reference (`15 alpha` m/s).
pub const CIRCLE_GAIN: f64 = 15.0;

/// Angular rate of the circular reference, `2 / sqrt(15)` rad/s.
pub fn circle_rate() -> f64 {
    2.0 / 15f64.sqrt()
}

pub fn mag_field() -> Vec3 {
    Vec3::from(MAG_FIELD)
}

/// Inertial velocity of the circular reference and its time derivative.
pub fn reference_velocity(t: f64) -> (Vec3, Vec3) {
    circular_velocity(CIRCLE_GAIN, circle_rate(), t)
}

fn circular_velocity(gain: f64, rate: f64, t: f64) -> (Vec3, Vec3) {
    let (s, c) = (rate * t).sin_cos();
    let v = Vec3::new(-gain * rate * s, gain * rate * c, 0.0);
    let v_dot = Vec3::new(-gain * rate * rate * c, -gain * rate * rate * s, 0.0);
    (v, v_dot)
}

/// Scalar time profile with an analytic derivative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Signal {
    /// `offset + amplitude * sin(frequency * t + phase)`, frequency in rad/s.
    Sine {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `offset + rate * t`.
    Ramp {
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        rate: f64,
    },
    /// Exponential approach `end + (start - end) * exp(-t / time_constant)`.
    Settle {
        start: f64,
        end: f64,
        time_constant: f64,
    },
}

impl Signal {
    pub fn constant(value: f64) -> Self {
        Signal::Ramp {
            offset: value,
            rate: 0.0,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Signal::Sine {
                offset,
                amplitude,
                frequency,
                phase,
            } => offset + amplitude * (frequency * t + phase).sin(),
            Signal::Ramp { offset, rate } => offset + rate * t,
            Signal::Settle {
                start,
                end,
                time_constant,
            } => end + (start - end) * (-t / time_constant).exp(),
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match *self {
            Signal::Sine {
                amplitude,
                frequency,
                phase,
                ..
            } => amplitude * frequency * (frequency * t + phase).cos(),
            Signal::Ramp { rate, .. } => rate,
            Signal::Settle {
                start,
                end,
                time_constant,
            } => -(start - end) / time_constant * (-t / time_constant).exp(),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            Signal::Sine {
                offset,
                amplitude,
                frequency,
                phase,
            } => [offset, amplitude, frequency, phase].iter().all(|v| v.is_finite()),
            Signal::Ramp { offset, rate } => offset.is_finite() && rate.is_finite(),
            Signal::Settle {
                start,
                end,
                time_constant,
            } => start.is_finite() && end.is_finite() && time_constant > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("signal `{name}` has invalid parameters")))
        }
    }
}

/// Inertial-frame velocity profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VelocityProfile {
    /// `v = [-gain*rate*sin(rate t); gain*rate*cos(rate t); 0]`.
    Circular { gain: f64, rate: f64 },
    /// Independent inertial components.
    Components { x: Signal, y: Signal, z: Signal },
}

impl VelocityProfile {
    pub fn reference_circle() -> Self {
        VelocityProfile::Circular {
            gain: CIRCLE_GAIN,
            rate: circle_rate(),
        }
    }

    pub fn velocity(&self, t: f64) -> (Vec3, Vec3) {
        match self {
            VelocityProfile::Circular { gain, rate } => circular_velocity(*gain, *rate, t),
            VelocityProfile::Components { x, y, z } => (
                Vec3::new(x.value(t), y.value(t), z.value(t)),
                Vec3::new(x.rate(t), y.rate(t), z.rate(t)),
            ),
        }
    }
}

/// Attitude as intrinsic Z-Y-X Euler-angle signals (radians).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttitudeProfile {
    pub roll: Signal,
    pub pitch: Signal,
    pub yaw: Signal,
}

impl AttitudeProfile {
    /// Default excursion profile: roll `30 deg sin(0.7 t)`, pitch
    /// `30 deg cos(0.5 t)`, yaw following the circle heading.
    pub fn default_excursion() -> Self {
        let amp = 30f64.to_radians();
        AttitudeProfile {
            roll: Signal::Sine {
                offset: 0.0,
                amplitude: amp,
                frequency: 0.7,
                phase: 0.0,
            },
            pitch: Signal::Sine {
                offset: 0.0,
                amplitude: amp,
                frequency: 0.5,
                phase: FRAC_PI_2,
            },
            yaw: Signal::Ramp {
                offset: FRAC_PI_2,
                rate: circle_rate(),
            },
        }
    }

    /// Fixed attitude.
    pub fn fixed(roll: f64, pitch: f64, yaw: f64) -> Self {
        AttitudeProfile {
            roll: Signal::constant(roll),
            pitch: Signal::constant(pitch),
            yaw: Signal::constant(yaw),
        }
    }

    pub fn euler(&self, t: f64) -> EulerAngles {
        EulerAngles::new(self.roll.value(t), self.pitch.value(t), self.yaw.value(t))
    }

    /// Attitude and body-frame angular velocity `(R^T R_dot)^vee`.
    pub fn attitude(&self, t: f64) -> (Rotation, Vec3) {
        let angles = self.euler(t);
        let (roll_rate, pitch_rate, yaw_rate) =
            (self.roll.rate(t), self.pitch.rate(t), self.yaw.rate(t));
        let (sr, cr) = angles.roll.sin_cos();
        let (sp, cp) = angles.pitch.sin_cos();
        let omega = Vec3::new(
            roll_rate - yaw_rate * sp,
            pitch_rate * cr + yaw_rate * cp * sr,
            -pitch_rate * sr + yaw_rate * cp * cr,
        );
        (angles.to_rotation(), omega)
    }
}

/// Analytic truth generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub velocity: VelocityProfile,
    pub attitude: AttitudeProfile,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    #[serde(default = "default_mag_field")]
    pub mag_field: [f64; 3],
}

fn default_gravity() -> f64 {
    GRAVITY
}

fn default_mag_field() -> [f64; 3] {
    MAG_FIELD
}

impl Default for Trajectory {
    fn default() -> Self {
        Trajectory::reference_circle()
    }
}

impl Trajectory {
    pub fn new(velocity: VelocityProfile, attitude: AttitudeProfile) -> Self {
        Trajectory {
            velocity,
            attitude,
            gravity: GRAVITY,
            mag_field: MAG_FIELD,
        }
    }

    /// Circular reference flight with the default attitude excursions.
    pub fn reference_circle() -> Self {
        Trajectory::new(
            VelocityProfile::reference_circle(),
            AttitudeProfile::default_excursion(),
        )
    }

    pub fn mag_field(&self) -> Vec3 {
        Vec3::from(self.mag_field)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gravity.is_finite() && self.gravity > 0.0) {
            return Err(Error::Config(format!("gravity must be positive, got {}", self.gravity)));
        }
        let m = self.mag_field();
        if (m.norm() - 1.0).abs() > 1e-3 {
            return Err(Error::Config(format!(
                "mag_field must be a unit vector, got norm {}",
                m.norm()
            )));
        }
        if m.cross(&e3()).norm() < 1e-6 {
            return Err(Error::Config("mag_field must not be collinear with e3".into()));
        }
        if let VelocityProfile::Components { x, y, z } = &self.velocity {
            x.validate("velocity.x")?;
            y.validate("velocity.y")?;
            z.validate("velocity.z")?;
        }
        self.attitude.roll.validate("attitude.roll")?;
        self.attitude.pitch.validate("attitude.pitch")?;
        self.attitude.yaw.validate("attitude.yaw")?;
        Ok(())
    }

    /// Attitude and body rate.
    pub fn truth_attitude(&self, t: f64) -> (Rotation, Vec3) {
        self.attitude.attitude(t)
    }

    pub fn state(&self, t: f64) -> TruthState {
        let (v, v_dot) = self.velocity.velocity(t);
        let (rot, omega) = self.attitude.attitude(t);
        let rt = rot.transpose();
        TruthState {
            t,
            rotation: rot,
            body_velocity: rt * v,
            velocity: v,
            acceleration: v_dot,
            angular_velocity: omega,
            specific_acceleration: rt * (v_dot - self.gravity * e3()),
        }
    }

    /// Maxima of `|v|`, `|Omega|` and minimum of `|R33|` sampled on `[0, horizon]`.
    pub fn bounds(&self, horizon: f64, dt: f64) -> TrajectoryBounds {
        let n = (horizon / dt).ceil().max(1.0) as usize;
        let mut b = TrajectoryBounds {
            max_speed: 0.0,
            max_rate: 0.0,
            min_abs_r33: f64::INFINITY,
            max_horizontal_speed: 0.0,
        };
        for i in 0..=n {
            let s = self.state((i as f64 * dt).min(horizon));
            b.max_speed = b.max_speed.max(s.velocity.norm());
            b.max_rate = b.max_rate.max(s.angular_velocity.norm());
            b.min_abs_r33 = b.min_abs_r33.min(s.rotation.r33().abs());
            b.max_horizontal_speed = b.max_horizontal_speed.max(s.velocity.cross(&e3()).norm());
        }
        b
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryBounds {
    pub max_speed: f64,
    pub max_rate: f64,
    pub min_abs_r33: f64,
    /// `max |v x e3|`.
    pub max_horizontal_speed: f64,
}

/// Ground truth at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthState {
    pub t: f64,
    pub rotation: Rotation,
    /// `V`, body frame (m/s).
    pub body_velocity: Vec3,
    /// `v = R V`, inertial frame (m/s).
    pub velocity: Vec3,
    /// `v_dot`, inertial frame (m/s^2).
    pub acceleration: Vec3,
    /// `Omega`, body frame (rad/s).
    pub angular_velocity: Vec3,
    /// `a_B`, body frame (m/s^2).
    pub specific_acceleration: Vec3,
}

impl TruthState {
    /// Largest residual of `v = R V` and `a_B = R^T (v_dot - g e3)`.
    pub fn consistency_residual(&self, gravity: f64) -> f64 {
        let r = &self.rotation;
        let v_res = (r.mul_vec(&self.body_velocity) - self.velocity).amax();
        let a_res = (r.transpose().mul_vec(&(self.acceleration - gravity * e3()))
            - self.specific_acceleration)
            .amax();
        v_res.max(a_res)
    }
}

/// Sensor rates and noise levels. Missing fields take the values of
/// [`SensorConfig::noisy_multirate`] with seed 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    /// Gyro and accelerometer rate (Hz).
    pub imu_rate: f64,
    /// Rate of `V1`, `V2`, `v3` and the magnetometer (Hz).
    pub aiding_rate: f64,
    pub sigma_gyro: f64,
    pub sigma_accel: f64,
    /// Noise on the body-frame components `V1`, `V2` (m/s).
    pub sigma_body_velocity: f64,
    /// Noise on the inertial vertical component `v3` (m/s).
    pub sigma_vertical_velocity: f64,
    pub sigma_mag: f64,
    pub seed: u64,
    pub noise_enabled: bool,
    /// Deliver the exact signal of every channel at the start, midpoint
    /// and end of each integration step instead of sampling and holding.
    /// Models the continuous-time case; the rates are then ignored.
    pub continuous: bool,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig::noisy_multirate(0)
    }
}

impl SensorConfig {
    /// Noise-free, continuously sampled sensors at the given integration rate.
    pub fn ideal(rate: f64) -> Self {
        SensorConfig {
            imu_rate: rate,
            aiding_rate: rate,
            sigma_gyro: 0.0,
            sigma_accel: 0.0,
            sigma_body_velocity: 0.0,
            sigma_vertical_velocity: 0.0,
            sigma_mag: 0.0,
            seed: 0,
            noise_enabled: false,
            continuous: true,
        }
    }

    /// 50 Hz IMU, 20 Hz aiding sensors, Gaussian noise with 0.1 rad/s
    /// (gyro), 1 m/s^2 (accelerometer), 0.2 m/s (velocities) and 0.1
    /// (magnetometer).
    pub fn noisy_multirate(seed: u64) -> Self {
        SensorConfig {
            imu_rate: 50.0,
            aiding_rate: 20.0,
            sigma_gyro: 0.1,
            sigma_accel: 1.0,
            sigma_body_velocity: 0.2,
            sigma_vertical_velocity: 0.2,
            sigma_mag: 0.1,
            seed,
            noise_enabled: true,
            continuous: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.imu_rate > 0.0 && self.aiding_rate > 0.0) {
            return Err(Error::Config("sensor rates must be positive".into()));
        }
        let sigmas = [
            self.sigma_gyro,
            self.sigma_accel,
            self.sigma_body_velocity,
            self.sigma_vertical_velocity,
            self.sigma_mag,
        ];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config("noise standard deviations must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ImuSample {
    pub gyro: Vec3,
    pub accel: Vec3,
}

/// Low-rate aiding measurements.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AidingSample {
    /// `V1`, body frame (m/s).
    pub body_velocity_x: f64,
    /// `V2`, body frame (m/s).
    pub body_velocity_y: f64,
    /// `v3`, inertial frame (m/s).
    pub vertical_velocity: f64,
    /// `m_B`, unit vector in the body frame.
    pub mag: Vec3,
}

impl AidingSample {
    pub fn exact(state: &TruthState, mag_field: &Vec3) -> Self {
        AidingSample {
            body_velocity_x: state.body_velocity.x,
            body_velocity_y: state.body_velocity.y,
            vertical_velocity: state.velocity.z,
            mag: state.rotation.transpose() * *mag_field,
        }
    }
}

/// Weighted sum of three samples, used for interpolation inside a step.
pub trait Blend: Copy + PartialEq {
    fn blend(a: &Self, b: &Self, c: &Self, w: [f64; 3]) -> Self;
}

impl Blend for ImuSample {
    fn blend(a: &Self, b: &Self, c: &Self, w: [f64; 3]) -> Self {
        ImuSample {
            gyro: a.gyro * w[0] + b.gyro * w[1] + c.gyro * w[2],
            accel: a.accel * w[0] + b.accel * w[1] + c.accel * w[2],
        }
    }
}

impl Blend for AidingSample {
    fn blend(a: &Self, b: &Self, c: &Self, w: [f64; 3]) -> Self {
        let mix = |x: f64, y: f64, z: f64| x * w[0] + y * w[1] + z * w[2];
        AidingSample {
            body_velocity_x: mix(a.body_velocity_x, b.body_velocity_x, c.body_velocity_x),
            body_velocity_y: mix(a.body_velocity_y, b.body_velocity_y, c.body_velocity_y),
            vertical_velocity: mix(a.vertical_velocity, b.vertical_velocity, c.vertical_velocity),
            mag: a.mag * w[0] + b.mag * w[1] + c.mag * w[2],
        }
    }
}

/// Samples at the start, midpoint and end of an integration step. Under
/// zero-order hold all three are the held sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Nodes<T> {
    pub start: T,
    pub mid: T,
    pub end: T,
}

pub type ImuNodes = Nodes<ImuSample>;
pub type AidingNodes = Nodes<AidingSample>;

impl<T: Blend> Nodes<T> {
    pub fn held(sample: T) -> Self {
        Nodes {
            start: sample,
            mid: sample,
            end: sample,
        }
    }

    pub fn is_held(&self) -> bool {
        self.start == self.mid && self.mid == self.end
    }

    /// Quadratic interpolation at `fraction` of the step (0 = start, 1 = end).
    pub fn at(&self, fraction: f64) -> T {
        if self.is_held() {
            return self.start;
        }
        let s = fraction;
        let w = [
            2.0 * (s - 0.5) * (s - 1.0),
            -4.0 * s * (s - 1.0),
            2.0 * s * (s - 0.5),
        ];
        T::blend(&self.start, &self.mid, &self.end, w)
    }

    /// Nodes of the sub-interval `[from, to]` of the step.
    pub fn sub_interval(&self, from: f64, to: f64) -> Self {
        if self.is_held() {
            return *self;
        }
        Nodes {
            start: self.at(from),
            mid: self.at(0.5 * (from + to)),
            end: self.at(to),
        }
    }
}

/// Which channels were refreshed at this frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Freshness {
    pub gyro: bool,
    pub accel: bool,
    pub body_velocity_x: bool,
    pub body_velocity_y: bool,
    pub vertical_velocity: bool,
    pub mag: bool,
}

impl Freshness {
    pub fn all() -> Self {
        Freshness {
            gyro: true,
            accel: true,
            body_velocity_x: true,
            body_velocity_y: true,
            vertical_velocity: true,
            mag: true,
        }
    }

    pub fn aiding(&self) -> bool {
        self.body_velocity_x && self.body_velocity_y && self.vertical_velocity && self.mag
    }
}

/// Sensor bundle for the integration step starting at `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementFrame {
    pub t: f64,
    pub imu: ImuNodes,
    pub aiding: AidingNodes,
    pub fresh: Freshness,
}

impl MeasurementFrame {
    /// Exact measurements of `state`, held over the step, all channels fresh.
    pub fn exact(state: &TruthState, mag_field: &Vec3) -> Self {
        let imu = ImuSample {
            gyro: state.angular_velocity,
            accel: state.specific_acceleration,
        };
        MeasurementFrame {
            t: state.t,
            imu: Nodes::held(imu),
            aiding: Nodes::held(AidingSample::exact(state, mag_field)),
            fresh: Freshness::all(),
        }
    }

    pub fn gyro(&self) -> Vec3 {
        self.imu.start.gyro
    }

    pub fn accel(&self) -> Vec3 {
        self.imu.start.accel
    }

    /// Aiding measurements at the start of the step.
    pub fn aiding_sample(&self) -> &AidingSample {
        &self.aiding.start
    }
}

/// Converts a rate to a whole number of integration steps.
fn steps_per_sample(rate: f64, dt: f64, name: &str) -> Result<u64> {
    let ratio = 1.0 / (rate * dt);
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::Config(format!(
            "the integration step {dt} s does not divide the {name} period {} s",
            1.0 / rate
        )));
    }
    Ok(rounded as u64)
}

/// Stateful multi-rate sampler with zero-order hold on every channel.
///
/// Frames must be drawn in step order; noise is generated from a seeded
/// ChaCha stream in a fixed channel order so identical configurations
/// replay bit-identically.
#[derive(Clone, Debug)]
pub struct SensorSampler {
    cfg: SensorConfig,
    dt: f64,
    steps_per_imu: u64,
    steps_per_aiding: u64,
    rng: ChaCha8Rng,
    step: u64,
    held_imu: ImuSample,
    held_aiding: AidingSample,
}

impl SensorSampler {
    pub fn new(cfg: SensorConfig, dt: f64) -> Result<Self> {
        cfg.validate()?;
        if !(dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        let (steps_per_imu, steps_per_aiding) = if cfg.continuous {
            (1, 1)
        } else {
            (
                steps_per_sample(cfg.imu_rate, dt, "IMU")?,
                steps_per_sample(cfg.aiding_rate, dt, "aiding sensor")?,
            )
        };
        Ok(SensorSampler {
            steps_per_imu,
            steps_per_aiding,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            dt,
            step: 0,
            held_imu: ImuSample::default(),
            held_aiding: AidingSample::default(),
        })
    }

    pub fn steps_per_imu(&self) -> u64 {
        self.steps_per_imu
    }

    pub fn steps_per_aiding(&self) -> u64 {
        self.steps_per_aiding
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    fn gauss(&mut self, sigma: f64) -> f64 {
        if !self.cfg.noise_enabled || sigma == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, sigma)
            .expect("sigma validated non-negative")
            .sample(&mut self.rng)
    }

    fn gauss3(&mut self, sigma: f64) -> Vec3 {
        let x = self.gauss(sigma);
        let y = self.gauss(sigma);
        let z = self.gauss(sigma);
        Vec3::new(x, y, z)
    }

    fn imu_reading(&mut self, state: &TruthState) -> ImuSample {
        let gyro = state.angular_velocity + self.gauss3(self.cfg.sigma_gyro);
        let accel = state.specific_acceleration + self.gauss3(self.cfg.sigma_accel);
        ImuSample { gyro, accel }
    }

    fn aiding_reading(&mut self, state: &TruthState, mag_field: &Vec3) -> AidingSample {
        let exact = AidingSample::exact(state, mag_field);
        let vx = exact.body_velocity_x + self.gauss(self.cfg.sigma_body_velocity);
        let vy = exact.body_velocity_y + self.gauss(self.cfg.sigma_body_velocity);
        let vz = exact.vertical_velocity + self.gauss(self.cfg.sigma_vertical_velocity);
        let noisy_mag = exact.mag + self.gauss3(self.cfg.sigma_mag);
        AidingSample {
            body_velocity_x: vx,
            body_velocity_y: vy,
            vertical_velocity: vz,
            mag: if self.cfg.noise_enabled && self.cfg.sigma_mag > 0.0 {
                noisy_mag.normalize() * exact.mag.norm()
            } else {
                exact.mag
            },
        }
    }

    /// Measurement frame for the next integration step.
    pub fn next_frame(&mut self, trajectory: &Trajectory) -> MeasurementFrame {
        let t = self.time();
        let state = trajectory.state(t);
        let mag_field = trajectory.mag_field();
        self.step += 1;

        if self.cfg.continuous {
            let mid = trajectory.state(t + 0.5 * self.dt);
            let end = trajectory.state(t + self.dt);
            let imu = Nodes {
                start: self.imu_reading(&state),
                mid: self.imu_reading(&mid),
                end: self.imu_reading(&end),
            };
            let aiding = Nodes {
                start: self.aiding_reading(&state, &mag_field),
                mid: self.aiding_reading(&mid, &mag_field),
                end: self.aiding_reading(&end, &mag_field),
            };
            self.held_imu = imu.start;
            self.held_aiding = aiding.start;
            return MeasurementFrame {
                t,
                imu,
                aiding,
                fresh: Freshness::all(),
            };
        }

        let k = self.step - 1;
        let imu_tick = k % self.steps_per_imu == 0;
        let aiding_tick = k % self.steps_per_aiding == 0;
        if imu_tick {
            self.held_imu = self.imu_reading(&state);
        }
        if aiding_tick {
            self.held_aiding = self.aiding_reading(&state, &mag_field);
        }
        MeasurementFrame {
            t,
            imu: Nodes::held(self.held_imu),
            aiding: Nodes::held(self.held_aiding),
            fresh: Freshness {
                gyro: imu_tick,
                accel: imu_tick,
                body_velocity_x: aiding_tick,
                body_velocity_y: aiding_tick,
                vertical_velocity: aiding_tick,
                mag: aiding_tick,
            },
        }
    }
}
