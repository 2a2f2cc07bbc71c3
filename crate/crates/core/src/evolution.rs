//! Time integration of `∂t f = Q[f] - 2ν(k^2 + ρ k^4) f`.

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::collision::{CollisionOperator, OperatorForm};
use crate::diagnostics::{moment, MomentRecord};
use crate::dispersion::DispersionLaw;
use crate::error::{Error, Result};
use crate::grid::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsParams {
    pub nu: f64,
    pub rho: f64,
    pub law: DispersionLaw,
}

impl PhysicsParams {
    pub fn new(nu: f64, rho: f64, law: DispersionLaw) -> Result<Self> {
        for (what, v) in [("nu", nu), ("rho", rho)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument {
                    what,
                    reason: format!("must be a finite nonnegative number, got {v}"),
                });
            }
        }
        Ok(Self { nu, rho, law })
    }
}

/// `2ν (k^2 + ρ k^4)`
pub fn damping_rate(k_mag: f64, params: &PhysicsParams) -> f64 {
    let k2 = k_mag * k_mag;
    2.0 * params.nu * (k2 + params.rho * k2 * k2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    /// Classical RK4 on the collision term with the damping integrated exactly.
    #[default]
    Rk4If,
    /// Forward Euler on the truncated spectrum `f 1{k <= R}` with the step
    /// capped by `h_R`.
    EulerTruncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositivityMode {
    /// Zero negative values and log the removed mass.
    #[default]
    Clip,
    /// Halve the step until the result is nonnegative.
    RejectStep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub dt: f64,
    pub t_end: f64,
    pub truncation_radius: Option<f64>,
    pub positivity: PositivityMode,
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument {
                what: "dt",
                reason: format!("must be positive, got {}", self.dt),
            });
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument {
                what: "t_end",
                reason: format!("must be finite and nonnegative, got {}", self.t_end),
            });
        }
        if self.kind == SchemeKind::EulerTruncated
            && !matches!(self.truncation_radius, Some(r) if r > 0.0)
        {
            return Err(Error::InvalidArgument {
                what: "truncation_radius",
                reason: "the truncated Euler scheme needs a positive radius".into(),
            });
        }
        Ok(())
    }
}

pub const MAX_HALVINGS: u32 = 20;

/// Result of advancing over one interval.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub substeps: usize,
    pub rejected: usize,
    /// `Σ |negative part| vol` removed by clipping.
    pub clipped_mass: f64,
    pub min_h: f64,
}

/// Collision operator, damping and scheme bundled for repeated stepping.
pub struct Stepper {
    pub op: CollisionOperator,
    pub params: PhysicsParams,
    pub scheme: SchemeConfig,
    damping: Vec<f64>,
    /// Direct-form copy of the operator used for the loss-rate bound of the
    /// truncated scheme.
    split_op: CollisionOperator,
}

impl Stepper {
    pub fn new(op: CollisionOperator, params: PhysicsParams, scheme: SchemeConfig) -> Result<Self> {
        scheme.validate()?;
        let damping = op
            .grid()
            .nodes()
            .iter()
            .map(|&k| damping_rate(k, &params))
            .collect();
        let mut split_op = op.clone();
        split_op.form = OperatorForm::Direct;
        Ok(Self {
            op,
            params,
            scheme,
            damping,
            split_op,
        })
    }

    pub fn damping(&self) -> &[f64] {
        &self.damping
    }

    fn q(&self, values: &[f64], like: &Spectrum) -> Result<Vec<f64>> {
        let s = Spectrum {
            grid: like.grid.clone(),
            values: values.to_vec(),
            time: like.time,
        };
        self.op.apply(&s)
    }

    /// One integrating-factor RK4 step of size `h`, without positivity repair.
    pub fn rk4_if(&self, f: &Spectrum, h: f64) -> Result<Vec<f64>> {
        let n = f.values.len();
        let half: Vec<f64> = self.damping.iter().map(|d| (-d * 0.5 * h).exp()).collect();
        let full: Vec<f64> = self.damping.iter().map(|d| (-d * h).exp()).collect();
        let f0 = &f.values;
        let k1 = self.q(f0, f)?;
        let fa: Vec<f64> = (0..n).map(|i| half[i] * (f0[i] + 0.5 * h * k1[i])).collect();
        let k2 = self.q(&fa, f)?;
        let fb: Vec<f64> = (0..n).map(|i| half[i] * f0[i] + 0.5 * h * k2[i]).collect();
        let k3 = self.q(&fb, f)?;
        let fc: Vec<f64> = (0..n).map(|i| full[i] * f0[i] + h * half[i] * k3[i]).collect();
        let k4 = self.q(&fc, f)?;
        Ok((0..n)
            .map(|i| {
                full[i] * f0[i]
                    + h / 6.0 * (full[i] * k1[i] + 2.0 * half[i] * (k2[i] + k3[i]) + k4[i])
            })
            .collect())
    }

    /// `h_R = 1 / (C_f + 2ν(R^2 + ρR^4))` with `C_f` the largest direct-form
    /// loss rate `Q_-[f_R]` over nodes inside the radius.
    pub fn truncation_step_bound(&self, f: &Spectrum) -> Result<f64> {
        let r = self.scheme.truncation_radius.unwrap_or(f64::INFINITY);
        let fr = self.truncate(f, r);
        let split = self.split_op.split(&fr)?;
        let c_f = f
            .grid
            .nodes()
            .iter()
            .zip(&split.minus)
            .filter(|(k, _)| **k <= r)
            .map(|(_, m)| *m)
            .fold(0.0, f64::max);
        let r_eff = r.min(f.grid.k_max());
        let bound = c_f + damping_rate(r_eff, &self.params);
        Ok(if bound > 0.0 { 1.0 / bound } else { f64::INFINITY })
    }

    fn truncate(&self, f: &Spectrum, r: f64) -> Spectrum {
        Spectrum {
            grid: f.grid.clone(),
            values: f
                .values
                .iter()
                .zip(f.grid.nodes())
                .map(|(v, &k)| if k <= r { *v } else { 0.0 })
                .collect(),
            time: f.time,
        }
    }

    /// One truncated Euler step of size `h`.
    pub fn euler_truncated(&self, f: &Spectrum, h: f64) -> Result<Vec<f64>> {
        let r = self.scheme.truncation_radius.unwrap_or(f64::INFINITY);
        let fr = self.truncate(f, r);
        let q = self.op.apply(&fr)?;
        Ok(f.values
            .iter()
            .zip(&fr.values)
            .zip(q.iter().zip(&self.damping))
            .map(|((v, vr), (q, d))| v + h * (q - d * vr))
            .collect())
    }

    fn raw_step(&self, f: &Spectrum, h: f64) -> Result<Vec<f64>> {
        match self.scheme.kind {
            SchemeKind::Rk4If => self.rk4_if(f, h),
            SchemeKind::EulerTruncated => self.euler_truncated(f, h),
        }
    }

    /// Advance `f` to time `t_target` with steps no larger than `dt`.
    pub fn advance(&self, f: &Spectrum, t_target: f64) -> Result<(Spectrum, StepStats)> {
        let mut cur = f.clone();
        let mut stats = StepStats {
            min_h: f64::INFINITY,
            ..StepStats::default()
        };
        let vol = f.grid.volumes().to_vec();
        let eps_t = 1e-12 * t_target.abs().max(self.scheme.dt);
        let mut h_try = self.scheme.dt;
        while t_target - cur.time > eps_t {
            let remaining = t_target - cur.time;
            let mut h = h_try.min(remaining).min(self.scheme.dt);
            if self.scheme.kind == SchemeKind::EulerTruncated {
                h = h.min(self.truncation_step_bound(&cur)?);
            }
            let mut halvings = 0;
            let next = loop {
                let mut v = self.raw_step(&cur, h)?;
                if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteSummand {
                        node: i,
                        surface: "step",
                        entry: 0,
                        partners: (cur.time, h),
                    });
                }
                let negative = v.iter().any(|&x| x < 0.0);
                if !negative {
                    break v;
                }
                match self.scheme.positivity {
                    PositivityMode::Clip => {
                        let removed: f64 = v
                            .iter_mut()
                            .zip(&vol)
                            .filter(|(x, _)| **x < 0.0)
                            .map(|(x, w)| {
                                let m = -*x * w;
                                *x = 0.0;
                                m
                            })
                            .sum();
                        stats.clipped_mass += removed;
                        debug!("t = {}: clipped mass {removed:e}", cur.time);
                        break v;
                    }
                    PositivityMode::RejectStep => {
                        halvings += 1;
                        stats.rejected += 1;
                        if halvings > MAX_HALVINGS {
                            return Err(Error::PositivityFailure {
                                time: cur.time,
                                halvings: MAX_HALVINGS,
                            });
                        }
                        h *= 0.5;
                    }
                }
            };
            stats.substeps += 1;
            stats.min_h = stats.min_h.min(h);
            let t_next = if (remaining - h).abs() <= eps_t { t_target } else { cur.time + h };
            cur = Spectrum {
                grid: cur.grid.clone(),
                values: next,
                time: t_next,
            };
            // after a rejection try to grow back
            h_try = if halvings > 0 { 2.0 * h } else { self.scheme.dt };
        }
        Ok((cur, stats))
    }
}

/// What to record during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputPlan {
    pub snapshot_times: Vec<f64>,
    pub moment_exponents: Vec<f64>,
    /// Record moments every this many base steps.
    pub moment_stride: usize,
}

impl Default for OutputPlan {
    fn default() -> Self {
        Self {
            snapshot_times: Vec::new(),
            moment_exponents: vec![1.0],
            moment_stride: 1,
        }
    }
}

/// Thresholds on `M_{1/3}`, `M_1`, `M_{N+3}` and a hard ceiling on `M_1..M_N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorConfig {
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub n: u32,
    pub moment_ceiling: Option<f64>,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            c0: None,
            c1: None,
            c2: None,
            n: 3,
            moment_ceiling: None,
        }
    }
}

impl MonitorConfig {
    pub fn exponents(&self) -> Vec<f64> {
        let mut e = vec![1.0 / 3.0, 1.0, self.n as f64 + 3.0];
        e.extend((1..=self.n).map(f64::from));
        e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Breach {
    pub time: f64,
    pub monitor: &'static str,
    pub exponent: f64,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Spectrum>,
    pub moments: Vec<MomentRecord>,
    pub breaches: Vec<Breach>,
    pub clipped_mass: f64,
    pub rejected_steps: usize,
    pub substeps: usize,
    /// Smallest value of `f` seen at any recorded time.
    pub min_f: f64,
    /// Least-squares slope of `ln Σ f^2 vol` against time.
    pub l2_growth_rate: Option<f64>,
}

fn merged_exponents(plan: &OutputPlan, monitor: &MonitorConfig) -> Vec<f64> {
    let mut e = plan.moment_exponents.clone();
    e.push(1.0);
    e.extend(monitor.exponents());
    let mut out: Vec<f64> = Vec::new();
    for x in e {
        if !out.iter().any(|y| (y - x).abs() < 1e-15) {
            out.push(x);
        }
    }
    out
}

fn check_monitors(
    record: &MomentRecord,
    monitor: &MonitorConfig,
    breaches: &mut Vec<Breach>,
) -> Result<()> {
    let checks = [
        ("c0", 1.0 / 3.0, monitor.c0),
        ("c1", 1.0, monitor.c1),
        ("c2", monitor.n as f64 + 3.0, monitor.c2),
    ];
    for (name, exponent, threshold) in checks {
        if let (Some(th), Some(v)) = (threshold, record.get(exponent)) {
            if v > th {
                warn!("t = {}: monitor {name} breached, M_{exponent} = {v:e} > {th:e}", record.time);
                breaches.push(Breach {
                    time: record.time,
                    monitor: name,
                    exponent,
                    value: v,
                    threshold: th,
                });
            }
        }
    }
    if let Some(ceiling) = monitor.moment_ceiling {
        for j in 1..=monitor.n {
            let exponent = j as f64;
            if let Some(v) = record.get(exponent) {
                if !(v <= ceiling) {
                    return Err(Error::MomentCeiling {
                        time: record.time,
                        exponent,
                        value: v,
                        ceiling,
                    });
                }
            }
        }
    }
    Ok(())
}

fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Integrate from `initial` to `scheme.t_end`, recording moments every
/// `moment_stride` base steps and snapshots at the requested times.
///
/// `on_snapshot` is called as each snapshot is taken so callers can stream
/// output.
pub fn run_with(
    stepper: &Stepper,
    initial: Spectrum,
    plan: &OutputPlan,
    monitor: &MonitorConfig,
    mut on_snapshot: impl FnMut(&Spectrum) -> Result<()>,
) -> Result<Trajectory> {
    let scheme = &stepper.scheme;
    let exponents = merged_exponents(plan, monitor);
    let dt = scheme.dt;
    let t0 = initial.time;
    let n_steps = ((scheme.t_end - t0) / dt).round().max(0.0) as usize;
    let stride = plan.moment_stride.max(1);
    let mut snaps: Vec<f64> = plan.snapshot_times.clone();
    snaps.sort_by(f64::total_cmp);
    let mut next_snap = 0;

    let mut traj = Trajectory {
        snapshots: Vec::new(),
        moments: Vec::new(),
        breaches: Vec::new(),
        clipped_mass: 0.0,
        rejected_steps: 0,
        substeps: 0,
        min_f: initial.min_value(),
        l2_growth_rate: None,
    };
    let record = |s: &Spectrum, traj: &mut Trajectory| -> Result<()> {
        let r = MomentRecord::capture(s, &exponents);
        traj.min_f = traj.min_f.min(r.min_f);
        check_monitors(&r, monitor, &mut traj.breaches)?;
        traj.moments.push(r);
        Ok(())
    };

    let mut cur = initial;
    let tol = 1e-9 * dt;
    while next_snap < snaps.len() && snaps[next_snap] <= t0 + tol {
        on_snapshot(&cur)?;
        traj.snapshots.push(cur.clone());
        next_snap += 1;
    }
    record(&cur, &mut traj)?;
    for step in 1..=n_steps {
        let t_step = if step == n_steps { scheme.t_end } else { t0 + dt * step as f64 };
        // stop at snapshot times inside the step
        while next_snap < snaps.len() && snaps[next_snap] < t_step - tol {
            let (s, st) = stepper.advance(&cur, snaps[next_snap])?;
            accumulate(&mut traj, &st);
            cur = s;
            on_snapshot(&cur)?;
            traj.snapshots.push(cur.clone());
            next_snap += 1;
        }
        let (s, st) = stepper.advance(&cur, t_step)?;
        accumulate(&mut traj, &st);
        cur = s;
        cur.time = t_step;
        while next_snap < snaps.len() && snaps[next_snap] <= t_step + tol {
            on_snapshot(&cur)?;
            traj.snapshots.push(cur.clone());
            next_snap += 1;
        }
        if step % stride == 0 || step == n_steps {
            record(&cur, &mut traj)?;
        }
    }
    let pts: Vec<(f64, f64)> = traj
        .moments
        .iter()
        .filter(|r| r.l2 > 0.0)
        .map(|r| (r.time, r.l2.ln()))
        .collect();
    traj.l2_growth_rate = fit_slope(&pts);
    if let Some(rate) = traj.l2_growth_rate {
        info!("L2 growth rate over the run: {rate:e}");
    }
    if traj.clipped_mass > 0.0 {
        info!("total clipped mass {:e}", traj.clipped_mass);
    }
    Ok(traj)
}

fn accumulate(traj: &mut Trajectory, st: &StepStats) {
    traj.clipped_mass += st.clipped_mass;
    traj.rejected_steps += st.rejected;
    traj.substeps += st.substeps;
}

pub fn run(
    stepper: &Stepper,
    initial: Spectrum,
    plan: &OutputPlan,
    monitor: &MonitorConfig,
) -> Result<Trajectory> {
    run_with(stepper, initial, plan, monitor, |_| Ok(()))
}

/// Relative drift `max_t |M_1(t) - M_1(0)| / M_1(0)` of recorded energy.
pub fn energy_drift(traj: &Trajectory) -> f64 {
    let e: Vec<f64> = traj.moments.iter().filter_map(|r| r.get(1.0)).collect();
    match e.first() {
        Some(&e0) if e0 != 0.0 => e.iter().map(|x| (x - e0).abs()).fold(0.0, f64::max) / e0.abs(),
        _ => 0.0,
    }
}

/// Energy of a spectrum; convenience for tests and reports.
pub fn energy(spectrum: &Spectrum) -> f64 {
    moment(spectrum, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::TriadTable;
    use crate::dispersion::Dimension;
    use crate::grid::{RadialGrid, Spacing};
    use std::sync::Arc;

    fn setup(n: usize, nu: f64, rho: f64, k: f64) -> (Stepper, Spectrum) {
        let law = DispersionLaw::capillary(Dimension::Three);
        let g = Arc::new(RadialGrid::new(law, 1e-2, 1e2, n, Spacing::Log).unwrap());
        let t = Arc::new(TriadTable::build(g.clone(), 4).unwrap());
        let op = CollisionOperator::new(t, OperatorForm::Conservative, true).with_kernel_constant(k);
        let scheme = SchemeConfig {
            kind: SchemeKind::Rk4If,
            dt: 0.01,
            t_end: 0.2,
            truncation_radius: None,
            positivity: PositivityMode::RejectStep,
        };
        let p = PhysicsParams::new(nu, rho, law).unwrap();
        let f = Spectrum::from_fn(g, |k| (-((k - 1.0) / 0.3).powi(2)).exp()).unwrap();
        (Stepper::new(op, p, scheme).unwrap(), f)
    }

    #[test]
    fn damping_examples() {
        let law = DispersionLaw::default();
        let p = |nu, rho| PhysicsParams::new(nu, rho, law).unwrap();
        assert_eq!(damping_rate(3.0, &p(0.0, 1.0)), 0.0);
        assert_eq!(damping_rate(2.0, &p(1.0, 0.0)), 8.0);
        assert_eq!(damping_rate(2.0, &p(1.0, 1.0)), 40.0);
        assert!(PhysicsParams::new(-1.0, 0.0, law).is_err());
    }

    #[test]
    fn pure_decay_is_exact() {
        let (st, f) = setup(16, 0.3, 0.5, 0.0);
        let (g, _) = st.advance(&f, 0.2).unwrap();
        for ((v0, v1), d) in f.values.iter().zip(&g.values).zip(st.damping()) {
            let exact = v0 * (-d * 0.2).exp();
            assert!((v1 - exact).abs() <= 1e-12 * v0.max(1e-300));
        }
        let traj = run(&st, f, &OutputPlan::default(), &MonitorConfig::default()).unwrap();
        for w in traj.moments.windows(2) {
            for (a, b) in w[0].moments.iter().zip(&w[1].moments) {
                assert!(b.1 <= a.1);
            }
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let (st, f) = setup(16, 0.1, 0.0, default_k());
        let z = Spectrum::zeros(f.grid.clone());
        let traj = run(&st, z, &OutputPlan::default(), &MonitorConfig::default()).unwrap();
        assert!(traj.moments.iter().all(|r| r.get(1.0) == Some(0.0)));
    }

    fn default_k() -> f64 {
        crate::kernel::default_kernel_constant(1.0)
    }

    #[test]
    fn conservative_step_keeps_energy() {
        let (st, f) = setup(32, 0.0, 0.0, 50.0 * default_k());
        let e0 = energy(&f);
        let (g, stats) = st.advance(&f, 0.05).unwrap();
        assert!(stats.substeps >= 5);
        assert!((energy(&g) - e0).abs() <= 1e-10 * e0);
        assert!(g.min_value() >= 0.0);
    }

    #[test]
    fn euler_truncated_stays_nonnegative() {
        let (mut st, f) = setup(24, 0.1, 0.1, 50.0 * default_k());
        st.scheme = SchemeConfig {
            kind: SchemeKind::EulerTruncated,
            dt: 0.05,
            t_end: 0.5,
            truncation_radius: Some(5.0),
            positivity: PositivityMode::RejectStep,
        };
        let h = st.truncation_step_bound(&f).unwrap();
        assert!(h > 0.0 && h.is_finite());
        let traj = run(&st, f, &OutputPlan::default(), &MonitorConfig::default()).unwrap();
        assert_eq!(traj.rejected_steps, 0);
        assert!(traj.min_f >= 0.0);
    }

    #[test]
    fn snapshots_at_requested_times() {
        let (st, f) = setup(16, 0.1, 0.0, default_k());
        let plan = OutputPlan {
            snapshot_times: vec![0.0, 0.035, 0.2],
            moment_exponents: vec![2.0],
            moment_stride: 5,
        };
        let traj = run(&st, f, &plan, &MonitorConfig::default()).unwrap();
        let times: Vec<f64> = traj.snapshots.iter().map(|s| s.time).collect();
        assert_eq!(times.len(), 3);
        assert!((times[1] - 0.035).abs() < 1e-12 && times[2] == 0.2);
        let mt: Vec<f64> = traj.moments.iter().map(|r| r.time).collect();
        assert_eq!(mt.len(), 5);
        assert!(traj.moments[0].get(2.0).is_some() && traj.moments[0].get(1.0).is_some());
    }

    #[test]
    fn ceiling_aborts() {
        let (st, f) = setup(16, 0.0, 0.0, default_k());
        let m = MonitorConfig {
            moment_ceiling: Some(1e-30),
            ..MonitorConfig::default()
        };
        assert!(matches!(
            run(&st, f, &OutputPlan::default(), &m),
            Err(Error::MomentCeiling { .. })
        ));
    }
}
