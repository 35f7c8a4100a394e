//! Scenario execution: truth generation, sensor sampling, observers,
//! observability sweeps, checks, and the CSV / text artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::attitude::{euler_zyx, Rotation};
use crate::error::{Error, Result};
use crate::observability::{analyze, ObservabilityReport, StarModel};
use crate::observer::{ErrorMetrics, Observer, ObserverState, Variant};
use crate::scenario::Scenario;
use crate::truth::{MeasurementFrame, SensorSampler, TruthState};

/// Column order of the truth CSV.
pub const TRUTH_COLUMNS: [&str; 22] = [
    "t", "r11", "r12", "r13", "r21", "r22", "r23", "r31", "r32", "r33", "V1", "V2", "V3", "v1", "v2", "v3",
    "omega1", "omega2", "omega3", "aB1", "aB2", "aB3",
];

/// Column order of the per-observer trace CSV.
pub const OBSERVER_COLUMNS: [&str; 19] = [
    "t",
    "roll_deg",
    "pitch_deg",
    "yaw_deg",
    "roll_hat_deg",
    "pitch_hat_deg",
    "yaw_hat_deg",
    "V1",
    "V2",
    "V3",
    "V1_hat",
    "V2_hat",
    "V3_hat",
    "velocity_error_norm",
    "attitude_error_deg",
    "trace_P",
    "min_eig_P",
    "cond_P",
    "substeps",
];

/// Column order of the observability CSV.
pub const OBSERVABILITY_COLUMNS: [&str; 6] = [
    "t",
    "min_eig_D",
    "windowed_min_eig_D",
    "r33",
    "horizontal_speed",
    "angular_rate",
];

/// Formats a float with 9 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

/// Outcome of one scenario assertion.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        CheckOutcome {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObserverSummary {
    pub variant: Variant,
    pub final_attitude_error_deg: f64,
    pub final_velocity_error: f64,
    pub max_attitude_error_deg: f64,
    pub max_velocity_error: f64,
    /// Earliest time after which the attitude error stays below the threshold.
    pub time_to_attitude: Option<f64>,
    pub time_to_velocity: Option<f64>,
    pub attitude_threshold_deg: f64,
    pub velocity_threshold: f64,
    /// RMS over the trailing `rms_window` seconds.
    pub rms_attitude_deg: f64,
    pub rms_velocity: f64,
    pub rms_window: f64,
    pub max_condition: f64,
    pub min_p_eigenvalue: f64,
    /// Block maxima of the attitude and velocity errors after the envelope
    /// start never increase.
    pub monotone_envelope: Option<bool>,
    pub total_substeps: u64,
    pub runtime: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub seed: u64,
    pub config_hash: String,
    pub observers: Vec<ObserverSummary>,
    pub observability: Vec<ObservabilityReport>,
    pub checks: Vec<CheckOutcome>,
    pub output_dir: Option<PathBuf>,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn observer(&self, variant: Variant) -> Option<&ObserverSummary> {
        self.observers.iter().find(|o| o.variant == variant)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct TraceRow {
    t: f64,
    truth: TruthState,
    estimate: ObserverState,
    metrics: ErrorMetrics,
    substeps: u32,
}

struct ObserverRun {
    rows: Vec<TraceRow>,
    summary: ObserverSummary,
}

fn truth_states(scn: &Scenario) -> Vec<TruthState> {
    (0..=scn.steps()).map(|k| scn.trajectory.state(k as f64 * scn.dt)).collect()
}

fn measurement_stream(scn: &Scenario) -> Result<Vec<MeasurementFrame>> {
    let mut sampler = SensorSampler::new(scn.sensors, scn.dt)?;
    Ok((0..scn.steps()).map(|_| sampler.next_frame(&scn.trajectory)).collect())
}

fn run_observer(
    scn: &Scenario,
    variant: Variant,
    truths: &[TruthState],
    frames: &[MeasurementFrame],
) -> Result<ObserverRun> {
    let started = Instant::now();
    let cfg = scn.observer_config(variant)?;
    let (r0, v0) = scn.init.initial_estimate(&truths[0])?;
    let mut obs = Observer::new(cfg, r0, v0, 0.0)?;
    let mut rows = Vec::with_capacity(truths.len());
    let row = |truth: &TruthState, obs: &Observer, substeps: u32| TraceRow {
        t: truth.t,
        truth: *truth,
        estimate: *obs.state(),
        metrics: ErrorMetrics::compute(truth, obs.state()),
        substeps,
    };
    rows.push(row(&truths[0], &obs, 0));
    for (frame, truth) in frames.iter().zip(&truths[1..]) {
        let out = obs.step(frame, scn.dt)?;
        rows.push(row(truth, &obs, out.substeps));
    }
    let mut summary = summarize(scn, variant, &rows);
    summary.runtime = started.elapsed();
    Ok(ObserverRun { rows, summary })
}

/// Earliest sample time after which `values` stay below `threshold`.
fn settling_time(times: &[f64], values: &[f64], threshold: f64) -> Option<f64> {
    match values.iter().rposition(|v| !(*v < threshold)) {
        None => times.first().copied(),
        Some(i) if i + 1 < times.len() => Some(times[i + 1]),
        Some(_) => None,
    }
}

/// Block maxima of `values` over consecutive blocks of `block` seconds
/// starting at `start`, checked to be non-increasing up to `slack`.
pub fn envelope_is_monotone(times: &[f64], values: &[f64], start: f64, block: f64, slack: f64) -> bool {
    let mut maxima: Vec<f64> = Vec::new();
    for (t, v) in times.iter().zip(values) {
        if *t < start - 1e-12 {
            continue;
        }
        let idx = ((t - start) / block + 1e-9).floor() as usize;
        if idx >= maxima.len() {
            maxima.resize(idx + 1, f64::NEG_INFINITY);
        }
        maxima[idx] = maxima[idx].max(*v);
    }
    maxima.windows(2).all(|w| w[1] <= w[0] + slack)
}

fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

fn summarize(scn: &Scenario, variant: Variant, rows: &[TraceRow]) -> ObserverSummary {
    let checks = &scn.checks;
    let times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let att: Vec<f64> = rows.iter().map(|r| r.metrics.attitude_error.to_degrees()).collect();
    let vel: Vec<f64> = rows.iter().map(|r| r.metrics.velocity_error_norm()).collect();
    let att_thr = checks.converge_attitude_deg.unwrap_or(1.0);
    let vel_thr = checks.converge_velocity.unwrap_or(0.05);
    let tail_start = scn.horizon - checks.rms_window;
    let tail = |v: &[f64]| -> Vec<f64> {
        times
            .iter()
            .zip(v)
            .filter(|(t, _)| **t >= tail_start - 1e-9)
            .map(|(_, x)| *x)
            .collect()
    };
    let conds: Vec<f64> = rows.iter().map(|r| r.estimate.riccati.condition_number()).collect();
    ObserverSummary {
        variant,
        final_attitude_error_deg: *att.last().unwrap(),
        final_velocity_error: *vel.last().unwrap(),
        max_attitude_error_deg: att.iter().copied().fold(0.0, f64::max),
        max_velocity_error: vel.iter().copied().fold(0.0, f64::max),
        time_to_attitude: settling_time(&times, &att, att_thr),
        time_to_velocity: settling_time(&times, &vel, vel_thr),
        attitude_threshold_deg: att_thr,
        velocity_threshold: vel_thr,
        rms_attitude_deg: rms(&tail(&att)),
        rms_velocity: rms(&tail(&vel)),
        rms_window: checks.rms_window,
        max_condition: conds.iter().copied().fold(0.0, f64::max),
        min_p_eigenvalue: rows
            .iter()
            .map(|r| r.estimate.riccati.min_eigenvalue())
            .fold(f64::INFINITY, f64::min),
        monotone_envelope: checks.monotone_after.map(|start| {
            envelope_is_monotone(&times, &att, start, checks.monotone_block, 1e-9)
                && envelope_is_monotone(&times, &vel, start, checks.monotone_block, 1e-9)
        }),
        total_substeps: rows.iter().map(|r| r.substeps as u64).sum(),
        runtime: Duration::ZERO,
    }
}

fn observer_checks(scn: &Scenario, s: &ObserverSummary) -> Vec<CheckOutcome> {
    let c = &scn.checks;
    let mut out = Vec::new();
    let name = |what: &str| format!("{}: {what}", s.variant);
    if let Some(deadline) = c.converge_before {
        if c.converge_attitude_deg.is_some() {
            let pass = s.time_to_attitude.is_some_and(|t| t < deadline);
            out.push(CheckOutcome::new(
                name("attitude converges"),
                pass,
                format!("error < {} deg from t = {} (deadline {deadline} s)", s.attitude_threshold_deg, opt(s.time_to_attitude)),
            ));
        }
        if c.converge_velocity.is_some() {
            let pass = s.time_to_velocity.is_some_and(|t| t < deadline);
            out.push(CheckOutcome::new(
                name("velocity converges"),
                pass,
                format!("|V err| < {} m/s from t = {} (deadline {deadline} s)", s.velocity_threshold, opt(s.time_to_velocity)),
            ));
        }
    }
    if let Some(ok) = s.monotone_envelope {
        out.push(CheckOutcome::new(
            name("monotone error envelope"),
            ok,
            format!("{} s block maxima after t = {} s", c.monotone_block, c.monotone_after.unwrap_or(0.0)),
        ));
    }
    if let Some(bound) = c.rms_attitude_deg {
        out.push(CheckOutcome::new(
            name("RMS attitude error"),
            s.rms_attitude_deg < bound,
            format!("{:.4} deg over last {} s (bound {bound})", s.rms_attitude_deg, s.rms_window),
        ));
    }
    if let Some(bound) = c.rms_velocity {
        out.push(CheckOutcome::new(
            name("RMS velocity error"),
            s.rms_velocity < bound,
            format!("{:.4} m/s over last {} s (bound {bound})", s.rms_velocity, s.rms_window),
        ));
    }
    if let Some(bound) = c.max_condition {
        out.push(CheckOutcome::new(
            name("cond(P) bounded"),
            s.max_condition < bound,
            format!("max {:.3e} (bound {bound:.1e})", s.max_condition),
        ));
    }
    out
}

fn opt(t: Option<f64>) -> String {
    t.map_or_else(|| "never".into(), |t| format!("{t:.2} s"))
}

fn observability_checks(scn: &Scenario, reports: &[ObservabilityReport]) -> Vec<CheckOutcome> {
    let c = &scn.checks;
    let mu = scn.observability.config.mu;
    let mut out = Vec::new();
    for r in reports.iter().filter(|r| r.magnetometer) {
        let v = r.variant;
        if let Some(expect) = c.expect_instantaneous {
            out.push(CheckOutcome::new(
                format!("{v}: instantaneous observability"),
                r.instantaneous_pass == expect,
                format!("min eig D = {:.4e}, mu = {mu:.1e}, expected {}", r.instantaneous_min_eigenvalue, verdict(expect)),
            ));
        }
        if let Some(expect) = c.expect_uniform {
            out.push(CheckOutcome::new(
                format!("{v}: uniform observability"),
                r.uniform.pass == expect,
                format!("min windowed eig = {:.4e}, mu = {mu:.1e}, expected {}", r.uniform.min_eigenvalue, verdict(expect)),
            ));
        }
        if let Some(expect) = c.expect_motion_case {
            let m = &r.motion_cases;
            out.push(CheckOutcome::new(
                format!("{v}: motion-case guarantee"),
                m.guaranteed == expect && m.consistent,
                format!("{}; min|R33| = {:.4}", m.verdict(), m.min_abs_r33),
            ));
        }
        if let Some(expect) = c.expect_excitation {
            let pass = r.excitation.as_ref().is_some_and(|e| e.guaranteed == expect && e.consistent);
            out.push(CheckOutcome::new(
                format!("{v}: persistent-excitation guarantee"),
                pass,
                r.excitation.as_ref().map_or("horizon too short".into(), |e| e.verdict().to_string()),
            ));
        }
    }
    if let Some(expect) = c.expect_singular_without_mag {
        for r in reports.iter().filter(|r| !r.magnetometer) {
            let singular = r.gramian_min_eigenvalue < 1e-10;
            out.push(CheckOutcome::new(
                format!("{}: Gramian singular without magnetometer", r.variant),
                singular == expect,
                format!("min eig W = {:.3e}", r.gramian_min_eigenvalue),
            ));
        }
    }
    out
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

/// Observability reports of every selected variant, plus the ablated
/// reports when the scenario removes the magnetometer.
pub fn observability_reports(scn: &Scenario) -> Result<Vec<ObservabilityReport>> {
    let cfg = &scn.observability.config;
    let mut models = Vec::new();
    for v in scn.variants()? {
        let m = StarModel::new(&scn.trajectory, v);
        models.push(m);
        if scn.observability.ablate_mag {
            models.push(m.without_magnetometer());
        }
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = models
            .iter()
            .map(|m| s.spawn(move || analyze(&scn.trajectory, scn.horizon, cfg, m)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("analysis thread panicked")).collect()
    })
}

/// Runs the truth, the selected observers (concurrently, on one shared
/// measurement stream) and, when enabled, the observability analysis.
/// Writes artifacts to `out_dir` when given.
pub fn run_scenario(scn: &Scenario, out_dir: Option<&Path>) -> Result<RunSummary> {
    scn.validate()?;
    let truths = truth_states(scn);
    let frames = measurement_stream(scn)?;
    let variants = scn.variants()?;
    let runs: Vec<Result<ObserverRun>> = std::thread::scope(|s| {
        let handles: Vec<_> = variants
            .iter()
            .map(|&v| {
                let (truths, frames) = (&truths, &frames);
                s.spawn(move || run_observer(scn, v, truths, frames))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("observer thread panicked")).collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let observability = if scn.observability.enabled || scn.observability.ablate_mag {
        observability_reports(scn)?
    } else {
        Vec::new()
    };

    let mut checks = Vec::new();
    for r in &runs {
        checks.extend(observer_checks(scn, &r.summary));
    }
    checks.extend(observability_checks(scn, &observability));

    let summary = RunSummary {
        name: scn.name.clone(),
        seed: scn.sensors.seed,
        config_hash: scn.config_hash(),
        observers: runs.iter().map(|r| r.summary.clone()).collect(),
        observability,
        checks,
        output_dir: out_dir.map(Path::to_path_buf),
    };
    if let Some(dir) = out_dir {
        write_artifacts(dir, scn, &summary, &truths, &runs)?;
    }
    Ok(summary)
}

/// Observability analysis only.
pub fn run_observability(scn: &Scenario, out_dir: Option<&Path>) -> Result<RunSummary> {
    scn.validate()?;
    let observability = observability_reports(scn)?;
    let summary = RunSummary {
        name: scn.name.clone(),
        seed: scn.sensors.seed,
        config_hash: scn.config_hash(),
        observers: Vec::new(),
        checks: observability_checks(scn, &observability),
        observability,
        output_dir: out_dir.map(Path::to_path_buf),
    };
    if let Some(dir) = out_dir {
        write_artifacts(dir, scn, &summary, &[], &[])?;
    }
    Ok(summary)
}

fn csv_header(hash: &str, columns: &[&str]) -> String {
    format!("# config_hash={hash}\n{}\n", columns.join(","))
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let cells: Vec<String> = values.into_iter().map(fmt_float).collect();
    out.push_str(&cells.join(","));
    out.push('\n');
}

fn truth_csv(hash: &str, truths: &[TruthState]) -> String {
    let mut out = csv_header(hash, &TRUTH_COLUMNS);
    for s in truths {
        let r = s.rotation.matrix();
        let mut v = vec![s.t];
        for i in 0..3 {
            for j in 0..3 {
                v.push(r[(i, j)]);
            }
        }
        v.extend(s.body_velocity.iter());
        v.extend(s.velocity.iter());
        v.extend(s.angular_velocity.iter());
        v.extend(s.specific_acceleration.iter());
        push_row(&mut out, v);
    }
    out
}

fn euler_deg(r: &Rotation) -> [f64; 3] {
    euler_zyx(r).to_degrees()
}

fn observer_csv(hash: &str, rows: &[TraceRow]) -> String {
    let mut out = csv_header(hash, &OBSERVER_COLUMNS);
    for r in rows {
        let mut v = vec![r.t];
        v.extend(euler_deg(&r.truth.rotation));
        v.extend(euler_deg(&r.estimate.rotation));
        v.extend(r.truth.body_velocity.iter());
        v.extend(r.estimate.velocity.iter());
        v.push(r.metrics.velocity_error_norm());
        v.push(r.metrics.attitude_error.to_degrees());
        v.push(r.estimate.riccati.trace());
        v.push(r.estimate.riccati.min_eigenvalue());
        v.push(r.estimate.riccati.condition_number());
        v.push(r.substeps as f64);
        push_row(&mut out, v);
    }
    out
}

fn observability_csv(hash: &str, report: &ObservabilityReport) -> String {
    let mut out = csv_header(hash, &OBSERVABILITY_COLUMNS);
    for s in &report.samples {
        let cells = [
            fmt_float(s.t),
            fmt_float(s.min_eig_d),
            s.windowed_min_eig.map(fmt_float).unwrap_or_default(),
            fmt_float(s.r33),
            fmt_float(s.horizontal_speed),
            fmt_float(s.rate),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn observability_file(r: &ObservabilityReport) -> String {
    if r.magnetometer {
        format!("observability_{}.csv", r.variant)
    } else {
        format!("observability_{}_nomag.csv", r.variant)
    }
}

/// Human-readable summary. Contains no timing data so that reruns are
/// byte-identical.
pub fn summary_text(scn: &Scenario, s: &RunSummary) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "scenario: {}", s.name);
    let _ = writeln!(t, "config_hash: {}", s.config_hash);
    let _ = writeln!(t, "seed: {}", s.seed);
    let _ = writeln!(t, "horizon: {} s, dt: {} s", scn.horizon, scn.dt);
    for o in &s.observers {
        let _ = writeln!(t, "\n[{}]", o.variant);
        let _ = writeln!(t, "final attitude error: {:.6} deg", o.final_attitude_error_deg);
        let _ = writeln!(t, "final velocity error: {:.6} m/s", o.final_velocity_error);
        let _ = writeln!(t, "max attitude error: {:.6} deg", o.max_attitude_error_deg);
        let _ = writeln!(t, "max velocity error: {:.6} m/s", o.max_velocity_error);
        let _ = writeln!(t, "attitude error < {} deg from: {}", o.attitude_threshold_deg, opt(o.time_to_attitude));
        let _ = writeln!(t, "velocity error < {} m/s from: {}", o.velocity_threshold, opt(o.time_to_velocity));
        let _ = writeln!(t, "RMS over last {} s: {:.6} deg, {:.6} m/s", o.rms_window, o.rms_attitude_deg, o.rms_velocity);
        let _ = writeln!(t, "cond(P) max: {:.4e}, min eig(P): {:.4e}", o.max_condition, o.min_p_eigenvalue);
        if let Some(m) = o.monotone_envelope {
            let _ = writeln!(t, "monotone envelope: {}", verdict(m));
        }
    }
    let cfg = &scn.observability.config;
    if !s.observability.is_empty() {
        let _ = writeln!(
            t,
            "\nobservability thresholds: delta = {} s, mu = {:.1e}, rho = {}, delta_bar = {} s, rho_bar = {}",
            cfg.delta, cfg.mu, cfg.rho, cfg.delta_bar, cfg.rho_bar
        );
    }
    for r in &s.observability {
        let tag = if r.magnetometer { "" } else { ", magnetometer removed" };
        let _ = writeln!(t, "\n[observability {}{tag}]", r.variant);
        let _ = writeln!(t, "min eig D(t): {:.6e} ({})", r.instantaneous_min_eigenvalue, verdict(r.instantaneous_pass));
        let _ = writeln!(t, "min windowed eig: {:.6e} ({})", r.uniform.min_eigenvalue, verdict(r.uniform.pass));
        let _ = writeln!(t, "Gramian min eig (first window): {:.6e}", r.gramian_min_eigenvalue);
        let m = &r.motion_cases;
        let _ = writeln!(t, "motion cases: {}", m.verdict());
        let _ = writeln!(
            t,
            "  min|R33| = {:.4}, max|v x e3| = {:.4e}, max|Omega| = {:.4e}, v_max*Omega_max = {:.4} (bound {:.4})",
            m.min_abs_r33, m.max_horizontal_speed, m.max_rate, m.slow_motion_product, m.slow_motion_bound
        );
        if let Some(e) = &r.excitation {
            let _ = writeln!(t, "persistent excitation: {}", e.verdict());
            let _ = writeln!(
                t,
                "  min windowed R33^2 = {:.4}, min windowed accel mean = {:.4}, first window (v_dot1^2, v_dot2^2) = ({:.4}, {:.4})",
                e.min_tilt_mean, e.min_accel_mean, e.first_window_accel_means[0], e.first_window_accel_means[1]
            );
        }
        if let Some(a) = &r.ablation {
            let _ = writeln!(
                t,
                "ablation: |D row3| = {:.3e}, |D col3| = {:.3e}, |D n| = {:.3e}",
                a.row3_norm, a.col3_norm, a.heading_residual
            );
        }
        let _ = writeln!(t, "analytic vs numeric D: {:.3e}", r.oracle_deviation);
    }
    let _ = writeln!(t, "\n[checks]");
    if s.checks.is_empty() {
        let _ = writeln!(t, "none");
    }
    for c in &s.checks {
        let _ = writeln!(t, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    t
}

const PLOT_STUB: &str = r##"# Plot stub: maps CSV columns to panels. Requires pandas and matplotlib.
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd

PANELS = {
    "observer": [
        ("Euler angles (deg)", ["roll_deg", "pitch_deg", "yaw_deg", "roll_hat_deg", "pitch_hat_deg", "yaw_hat_deg"]),
        ("Body velocity (m/s)", ["V1", "V2", "V3", "V1_hat", "V2_hat", "V3_hat"]),
        ("Errors", ["attitude_error_deg", "velocity_error_norm"]),
        ("Riccati matrix", ["trace_P", "min_eig_P"]),
    ],
    "observability": [
        ("min eig D", ["min_eig_D", "windowed_min_eig_D"]),
        ("Trajectory", ["r33", "horizontal_speed", "angular_rate"]),
    ],
}


def plot(path):
    kind = "observability" if path.name.startswith("observability") else "observer"
    df = pd.read_csv(path, comment="#")
    panels = PANELS[kind]
    fig, axes = plt.subplots(len(panels), 1, sharex=True, figsize=(8, 2.5 * len(panels)))
    for ax, (title, cols) in zip(axes, panels):
        for c in cols:
            ax.plot(df["t"], df[c], label=c)
        ax.set_title(title)
        ax.legend(fontsize="small")
    axes[-1].set_xlabel("t (s)")
    fig.tight_layout()
    fig.savefig(path.with_suffix(".png"))


if __name__ == "__main__":
    root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
    for csv in sorted(root.glob("*.csv")):
        if csv.name != "truth.csv":
            plot(csv)
"##;

fn write_artifacts(
    dir: &Path,
    scn: &Scenario,
    summary: &RunSummary,
    truths: &[TruthState],
    runs: &[ObserverRun],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let hash = &summary.config_hash;
    if !truths.is_empty() {
        fs::write(dir.join("truth.csv"), truth_csv(hash, truths))?;
    }
    for r in runs {
        fs::write(dir.join(format!("{}.csv", r.summary.variant)), observer_csv(hash, &r.rows))?;
    }
    for r in &summary.observability {
        fs::write(dir.join(observability_file(r)), observability_csv(hash, r))?;
    }
    fs::write(dir.join("summary.txt"), summary_text(scn, summary))?;
    fs::write(dir.join("scenario.toml"), scn.to_toml())?;
    fs::write(dir.join("plot.py"), PLOT_STUB)?;
    Ok(())
}

/// Reads the `config_hash` header of an artifact CSV.
pub fn read_config_hash(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .next()
        .and_then(|l| l.strip_prefix("# config_hash="))
        .map(str::to_string)
        .ok_or_else(|| Error::Config(format!("{} has no config_hash header", path.display())))
}
