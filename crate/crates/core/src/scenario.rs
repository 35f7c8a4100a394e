//! Scenario configuration: TOML schema, validation, hashing and presets.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attitude::{quat_to_rot, Mat6, Rotation, UnitQuaternion, Vec3};
use crate::error::{Error, Result};
use crate::observability::ObservabilityConfig;
use crate::observer::{CorrectionPolicy, MagResidual, ObserverConfig, Variant};
use crate::riccati::{GainConfig, GainSchedule};
use crate::truth::{
    circle_rate, AttitudeProfile, SensorConfig, SensorSampler, Signal, Trajectory, TruthState,
    VelocityProfile,
};

/// A 6x6 matrix written as `"diag(a*I3, b*I3)"`, six diagonal entries, or
/// six rows of six entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Text(String),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn diag_blocks(a: f64, b: f64) -> Self {
        MatrixSpec::Text(format!("diag({a}*I3, {b}*I3)"))
    }

    pub fn to_matrix(&self, field: &str) -> Result<Mat6> {
        let bad = |msg: String| Error::Config(format!("{field}: {msg}"));
        match self {
            MatrixSpec::Text(text) => {
                let diag = parse_diag(text).map_err(bad)?;
                Ok(Mat6::from_diagonal(&diag.into()))
            }
            MatrixSpec::Diagonal(d) => {
                let d: [f64; 6] = d
                    .as_slice()
                    .try_into()
                    .map_err(|_| bad(format!("expected 6 diagonal entries, got {}", d.len())))?;
                Ok(Mat6::from_diagonal(&d.into()))
            }
            MatrixSpec::Full(rows) => {
                if rows.len() != 6 || rows.iter().any(|r| r.len() != 6) {
                    return Err(bad("expected 6 rows of 6 entries".into()));
                }
                Ok(Mat6::from_fn(|i, j| rows[i][j]))
            }
        }
    }
}

fn parse_diag(text: &str) -> std::result::Result<[f64; 6], String> {
    let inner = text
        .trim()
        .strip_prefix("diag(")
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| format!("cannot parse `{text}`, expected diag(a*I3, b*I3)"))?;
    let mut entries = Vec::new();
    for item in inner.split(',') {
        let item = item.trim();
        let (value, count) = match item
            .strip_suffix("I3")
            .map(|s| s.trim_end().trim_end_matches(['*', '·']).trim())
        {
            Some(v) => (v, 3),
            None => (item, 1),
        };
        let value: f64 = value
            .parse()
            .map_err(|_| format!("cannot parse `{item}` in `{text}`"))?;
        entries.extend(std::iter::repeat_n(value, count));
    }
    entries
        .try_into()
        .map_err(|e: Vec<f64>| format!("`{text}` has {} diagonal entries, expected 6", e.len()))
}

/// Per-observer replacement of the common tuning.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainOverride {
    pub p0: Option<MatrixSpec>,
    pub q: Option<MatrixSpec>,
    pub s: Option<MatrixSpec>,
    pub k: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsSpec {
    pub k: f64,
    pub k_max: f64,
    pub mag_residual: MagResidual,
    pub correction: CorrectionPolicy,
    pub p0: MatrixSpec,
    pub q: MatrixSpec,
    pub s: MatrixSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observer1: Option<GainOverride>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observer2: Option<GainOverride>,
}

impl Default for GainsSpec {
    fn default() -> Self {
        GainsSpec {
            k: 1.0,
            k_max: 10.0,
            mag_residual: MagResidual::Difference,
            correction: CorrectionPolicy::EveryStep,
            p0: MatrixSpec::diag_blocks(2.0, 20.0),
            q: MatrixSpec::diag_blocks(25.0, 100.0),
            s: MatrixSpec::diag_blocks(0.01, 1.0),
            observer1: None,
            observer2: None,
        }
    }
}

impl GainsSpec {
    pub fn resolve(&self, variant: Variant) -> Result<GainConfig> {
        let over = match variant {
            Variant::LambdaTilde => self.observer1.clone(),
            Variant::LambdaBar => self.observer2.clone(),
        }
        .unwrap_or_default();
        let prefix = format!("gains.{variant}");
        let pick = |o: &Option<MatrixSpec>, common: &MatrixSpec, name: &str| -> Result<Mat6> {
            match o {
                Some(m) => m.to_matrix(&format!("{prefix}.{name}")),
                None => common.to_matrix(&format!("gains.{name}")),
            }
        };
        let gains = GainConfig {
            p0: pick(&over.p0, &self.p0, "p0")?,
            q: pick(&over.q, &self.q, "q")?,
            s: pick(&over.s, &self.s, "s")?,
            k: GainSchedule::Constant {
                value: over.k.unwrap_or(self.k),
            },
            k_max: self.k_max,
        };
        gains.validate()?;
        Ok(gains)
    }
}

/// Initial estimation errors applied to the truth at `t = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitSpec {
    /// `V(0) - V_hat(0)` (m/s).
    pub velocity_error: [f64; 3],
    /// Unit quaternion `[q0, q1, q2, q3]` of `R(0) R_hat(0)^T`.
    pub attitude_error: [f64; 4],
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            velocity_error: [0.0; 3],
            attitude_error: [1.0, 0.0, 0.0, 0.0],
        }
    }
}

impl InitSpec {
    pub fn attitude_error_rotation(&self) -> Result<Rotation> {
        let [q0, q1, q2, q3] = self.attitude_error;
        let q = UnitQuaternion::new(q0, Vec3::new(q1, q2, q3))
            .map_err(|_| Error::Config("init.attitude_error must be a unit quaternion".into()))?;
        Ok(quat_to_rot(&q))
    }

    /// `(R_hat(0), V_hat(0))` for the given truth.
    pub fn initial_estimate(&self, truth: &TruthState) -> Result<(Rotation, Vec3)> {
        let err = self.attitude_error_rotation()?;
        Ok((
            (err.transpose() * truth.rotation).renormalized(),
            truth.body_velocity - Vec3::from(self.velocity_error),
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObservabilitySpec {
    /// Run the observability analysis along with the observers.
    pub enabled: bool,
    /// Remove the magnetometer: the analysis adds an ablated report and the
    /// observers run with zero weight on the magnetometer rows.
    pub ablate_mag: bool,
    #[serde(flatten)]
    pub config: ObservabilityConfig,
}

impl Default for ObservabilitySpec {
    fn default() -> Self {
        ObservabilitySpec {
            enabled: false,
            ablate_mag: false,
            config: ObservabilityConfig::default(),
        }
    }
}

/// Assertions evaluated after a run; any failure gives a nonzero exit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Checks {
    /// Attitude error (deg) that must be reached and kept.
    pub converge_attitude_deg: Option<f64>,
    /// Velocity error norm (m/s) that must be reached and kept.
    pub converge_velocity: Option<f64>,
    /// Deadline for both convergence thresholds (s).
    pub converge_before: Option<f64>,
    /// Start of the non-increasing block-maximum envelope check (s).
    pub monotone_after: Option<f64>,
    /// Block length of the envelope check (s).
    pub monotone_block: f64,
    /// Trailing window of the RMS metrics (s).
    pub rms_window: f64,
    pub rms_attitude_deg: Option<f64>,
    pub rms_velocity: Option<f64>,
    /// Bound on the condition number of `P` over the run.
    pub max_condition: Option<f64>,
    pub expect_instantaneous: Option<bool>,
    pub expect_uniform: Option<bool>,
    pub expect_motion_case: Option<bool>,
    pub expect_excitation: Option<bool>,
    /// With `ablate_mag`, the Gramian without magnetometer is singular.
    pub expect_singular_without_mag: Option<bool>,
}

impl Default for Checks {
    fn default() -> Self {
        Checks {
            converge_attitude_deg: None,
            converge_velocity: None,
            converge_before: None,
            monotone_after: None,
            monotone_block: 5.0,
            rms_window: 20.0,
            rms_attitude_deg: None,
            rms_velocity: None,
            max_condition: None,
            expect_instantaneous: None,
            expect_uniform: None,
            expect_motion_case: None,
            expect_excitation: None,
            expect_singular_without_mag: None,
        }
    }
}

fn default_horizon() -> f64 {
    60.0
}

fn default_dt() -> f64 {
    0.01
}

fn default_variants() -> Vec<u8> {
    vec![1, 2]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Integration step (s).
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Observer variants to run (1, 2).
    #[serde(default = "default_variants")]
    pub variants: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub trajectory: Trajectory,
    #[serde(default)]
    pub sensors: SensorConfig,
    #[serde(default)]
    pub gains: GainsSpec,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub observability: ObservabilitySpec,
    #[serde(default)]
    pub checks: Checks,
}

impl Scenario {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// SHA-256 of the canonical TOML form, excluding the output directory.
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        hex::encode(Sha256::digest(canonical.to_toml().as_bytes()))
    }

    pub fn variants(&self) -> Result<Vec<Variant>> {
        let mut out = Vec::new();
        for &n in &self.variants {
            let v = Variant::from_number(n)
                .ok_or_else(|| Error::Config(format!("unknown observer variant {n}, expected 1 or 2")))?;
            if !out.contains(&v) {
                out.push(v);
            }
        }
        Ok(out)
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn observer_config(&self, variant: Variant) -> Result<ObserverConfig> {
        let mut gains = self.gains.resolve(variant)?;
        if self.observability.ablate_mag {
            gains.q.fixed_view_mut::<3, 3>(3, 3).fill(0.0);
        }
        let mut cfg = ObserverConfig::new(variant, gains, self.trajectory.gravity, self.trajectory.mag_field());
        cfg.mag_residual = self.gains.mag_residual;
        cfg.correction = self.gains.correction;
        cfg.aiding_interval_steps = SensorSampler::new(self.sensors, self.dt)?.steps_per_aiding();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Config("name must not be empty".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon.is_finite() && self.horizon >= 10.0 * self.dt) {
            return Err(Error::Config(format!(
                "horizon must be at least 10 dt = {} s, got {}",
                10.0 * self.dt,
                self.horizon
            )));
        }
        if self.variants()?.is_empty() {
            return Err(Error::Config("at least one observer variant is required".into()));
        }
        self.trajectory.validate()?;
        SensorSampler::new(self.sensors, self.dt)?;
        self.init.attitude_error_rotation()?;
        for v in self.variants()? {
            self.observer_config(v)?;
        }
        if self.observability.enabled || self.observability.ablate_mag {
            self.observability.config.validate()?;
            if self.horizon < self.observability.config.delta {
                return Err(Error::Config(format!(
                    "horizon {} s is shorter than the observability window {} s",
                    self.horizon, self.observability.config.delta
                )));
            }
        }
        Ok(())
    }
}

pub const PRESETS: [&str; 7] = [
    "sim1",
    "sim2",
    "vertical",
    "pure-translation",
    "slow-motion",
    "no-mag",
    "crossing-r33",
];

fn base(name: &str, trajectory: Trajectory) -> Scenario {
    Scenario {
        name: name.into(),
        horizon: default_horizon(),
        dt: default_dt(),
        variants: default_variants(),
        output_dir: None,
        trajectory,
        sensors: SensorConfig::ideal(100.0),
        gains: GainsSpec::default(),
        init: InitSpec::default(),
        observability: ObservabilitySpec::default(),
        checks: Checks::default(),
    }
}

/// 180 deg roll error and `(-5, 5, -5)` m/s velocity error.
fn large_initial_error() -> InitSpec {
    InitSpec {
        velocity_error: [-5.0, 5.0, -5.0],
        attitude_error: [0.0, 1.0, 0.0, 0.0],
    }
}

/// 10 deg roll error and 0.5 m/s velocity error.
fn small_initial_error() -> InitSpec {
    let half = 5f64.to_radians();
    InitSpec {
        velocity_error: [0.5, 0.0, 0.0],
        attitude_error: [half.cos(), half.sin(), 0.0, 0.0],
    }
}

fn observability_only(scn: &mut Scenario) {
    scn.init = small_initial_error();
    scn.observability.enabled = true;
}

fn constant(x: f64, y: f64, z: f64) -> VelocityProfile {
    VelocityProfile::Components {
        x: Signal::constant(x),
        y: Signal::constant(y),
        z: Signal::constant(z),
    }
}

/// Constant horizontal velocity while yawing at 1 rad/s with a fixed
/// pitch; `v_max Omega_max = speed`.
pub fn yawing_at_constant_velocity(speed: f64) -> Trajectory {
    Trajectory::new(
        constant(speed, 0.0, 0.0),
        AttitudeProfile {
            roll: Signal::constant(0.0),
            pitch: Signal::constant(0.2),
            yaw: Signal::Ramp {
                offset: 0.0,
                rate: 1.0,
            },
        },
    )
}

pub fn preset(name: &str) -> Result<Scenario> {
    let circle = Trajectory::reference_circle();
    let scn = match name {
        "sim1" => {
            let mut s = base("sim1", circle);
            s.init = large_initial_error();
            s.checks.converge_attitude_deg = Some(1.0);
            s.checks.converge_velocity = Some(0.05);
            s.checks.converge_before = Some(40.0);
            s.checks.monotone_after = Some(5.0);
            s.checks.max_condition = Some(1e6);
            s
        }
        "sim2" => {
            let mut s = base("sim2", circle);
            s.sensors = SensorConfig::noisy_multirate(42);
            s.init = large_initial_error();
            s.checks.rms_attitude_deg = Some(5.0);
            s.checks.rms_velocity = Some(0.5);
            s.checks.max_condition = Some(1e6);
            s
        }
        "vertical" => {
            let traj = Trajectory::new(
                VelocityProfile::Components {
                    x: Signal::constant(0.0),
                    y: Signal::constant(0.0),
                    z: Signal::Sine {
                        offset: 0.0,
                        amplitude: 1.0,
                        frequency: 1.0,
                        phase: 0.0,
                    },
                },
                AttitudeProfile {
                    roll: Signal::Sine {
                        offset: 0.0,
                        amplitude: 0.6,
                        frequency: 0.8,
                        phase: 0.0,
                    },
                    pitch: Signal::Sine {
                        offset: 0.0,
                        amplitude: 0.3,
                        frequency: 0.5,
                        phase: 0.0,
                    },
                    yaw: Signal::Ramp {
                        offset: 0.0,
                        rate: 0.2,
                    },
                },
            );
            let mut s = base("vertical", traj);
            observability_only(&mut s);
            s.checks.expect_motion_case = Some(true);
            s.checks.expect_instantaneous = Some(true);
            s
        }
        "pure-translation" => {
            let traj = Trajectory::new(
                VelocityProfile::reference_circle(),
                AttitudeProfile::fixed(20f64.to_radians(), 10f64.to_radians(), 0.0),
            );
            let mut s = base("pure-translation", traj);
            observability_only(&mut s);
            s.checks.expect_motion_case = Some(true);
            s.checks.expect_instantaneous = Some(true);
            s
        }
        "slow-motion" => {
            let mut s = base("slow-motion", yawing_at_constant_velocity(0.9));
            observability_only(&mut s);
            s.checks.expect_motion_case = Some(true);
            s.checks.expect_instantaneous = Some(true);
            s.checks.expect_excitation = Some(false);
            s
        }
        "no-mag" => {
            let mut s = base("no-mag", circle);
            s.init = small_initial_error();
            s.observability.enabled = true;
            s.observability.ablate_mag = true;
            s.checks.expect_singular_without_mag = Some(true);
            s.checks.expect_uniform = Some(true);
            s
        }
        "crossing-r33" => {
            // Roll swings through +-90 deg: R33 touches zero at the turning
            // points, where Omega also vanishes and D is singular, while the
            // windowed mean of R33^2 over a period is (1 + J0(pi)) / 2.
            let traj = Trajectory::new(
                VelocityProfile::reference_circle(),
                AttitudeProfile {
                    roll: Signal::Sine {
                        offset: 0.0,
                        amplitude: FRAC_PI_2,
                        frequency: 1.0,
                        phase: 0.0,
                    },
                    pitch: Signal::constant(0.0),
                    yaw: Signal::constant(FRAC_PI_2),
                },
            );
            let mut s = base("crossing-r33", traj);
            observability_only(&mut s);
            s.observability.config.delta = TAU;
            s.observability.config.delta_bar = TAU / circle_rate();
            s.checks.expect_instantaneous = Some(false);
            s.checks.expect_uniform = Some(true);
            s.checks.expect_excitation = Some(true);
            s
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset `{other}`; available: {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(scn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::diag_blocks;
    use std::f64::consts::PI;

    #[test]
    fn matrix_shorthands() {
        let expected = diag_blocks(2.0, 20.0);
        for text in ["diag(2*I3, 20*I3)", "diag(2·I3, 20·I3)", " diag(2 I3,20I3) "] {
            assert_eq!(MatrixSpec::Text(text.into()).to_matrix("p0").unwrap(), expected);
        }
        let six = MatrixSpec::Diagonal(vec![2.0, 2.0, 2.0, 20.0, 20.0, 20.0]);
        assert_eq!(six.to_matrix("p0").unwrap(), expected);
        let full = MatrixSpec::Full((0..6).map(|i| (0..6).map(|j| expected[(i, j)]).collect()).collect());
        assert_eq!(full.to_matrix("p0").unwrap(), expected);
        assert_eq!(
            MatrixSpec::Text("diag(1, 2, 3, 4*I3)".into()).to_matrix("q").unwrap(),
            Mat6::from_diagonal(&[1.0, 2.0, 3.0, 4.0, 4.0, 4.0].into())
        );
    }

    #[test]
    fn malformed_matrices_name_the_field() {
        for spec in [
            MatrixSpec::Text("diag(2*I3)".into()),
            MatrixSpec::Text("eye(6)".into()),
            MatrixSpec::Diagonal(vec![1.0; 5]),
            MatrixSpec::Full(vec![vec![1.0; 6]; 5]),
        ] {
            let err = spec.to_matrix("gains.q").unwrap_err().to_string();
            assert!(err.contains("gains.q"), "{err}");
        }
    }

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESETS {
            let s = preset(name).unwrap();
            s.validate().unwrap();
            let back = Scenario::from_toml(&s.to_toml(), name).unwrap();
            assert_eq!(back, s, "{name}");
            assert_eq!(back.config_hash(), s.config_hash());
        }
        assert!(preset("sim3").is_err());
    }

    #[test]
    fn hash_ignores_output_dir_but_not_seed() {
        let s = preset("sim2").unwrap();
        let mut moved = s.clone();
        moved.output_dir = Some("elsewhere".into());
        assert_eq!(s.config_hash(), moved.config_hash());
        let mut reseeded = s.clone();
        reseeded.sensors.seed += 1;
        assert_ne!(s.config_hash(), reseeded.config_hash());
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let s = Scenario::from_toml("name = \"x\"\n", "inline").unwrap();
        assert_eq!(s.horizon, 60.0);
        assert_eq!(s.gains.resolve(Variant::LambdaTilde).unwrap(), GainConfig::default());
        assert_eq!(s.trajectory, Trajectory::reference_circle());
    }

    #[test]
    fn per_observer_override() {
        let text = "name = \"x\"\n[gains.observer2]\nq = [1, 1, 1, 2, 2, 2]\nk = 2.0\n";
        let s = Scenario::from_toml(text, "inline").unwrap();
        let g1 = s.gains.resolve(Variant::LambdaTilde).unwrap();
        let g2 = s.gains.resolve(Variant::LambdaBar).unwrap();
        assert_eq!(g1.q, diag_blocks(25.0, 100.0));
        assert_eq!(g2.q, diag_blocks(1.0, 2.0));
        assert_eq!(g2.k, GainSchedule::Constant { value: 2.0 });
    }

    #[test]
    fn degenerate_scenarios_are_rejected() {
        for text in [
            "name = \"x\"\nhorizon = 0.0\n",
            "name = \"x\"\nhorizon = 0.05\n",
            "name = \"x\"\nvariants = [3]\n",
            "name = \"x\"\ndt = 0.02\n",
            "name = \"x\"\n[init]\nattitude_error = [1.0, 1.0, 0.0, 0.0]\n",
            "name = \"x\"\n[gains]\ns = \"diag(0*I3, 1*I3)\"\n",
        ] {
            assert!(matches!(Scenario::from_toml(text, "inline"), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = Scenario::from_toml("name = \"x\"\n[sensors]\nimu_rate = \"fast\"\n", "bad.toml").unwrap_err();
        match err {
            Error::ConfigParse { path, message } => {
                assert_eq!(path, "bad.toml");
                assert!(message.contains("line 3") || message.contains("imu_rate"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = Scenario::from_toml("name = \"x\"\n[sensors]\nimu_rat = 50.0\n", "bad.toml").unwrap_err();
        assert!(err.to_string().contains("imu_rat"));
    }

    #[test]
    fn initial_estimate_applies_errors() {
        let truth = Trajectory::reference_circle().state(0.0);
        let (r, v) = large_initial_error().initial_estimate(&truth).unwrap();
        assert!(((truth.rotation * r.transpose()).angle() - PI).abs() < 1e-9);
        assert!((truth.body_velocity - v - Vec3::new(-5.0, 5.0, -5.0)).amax() < 1e-12);
    }
}
