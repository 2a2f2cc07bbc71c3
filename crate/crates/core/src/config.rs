//! JSON run description with strict validation.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::collision::{CollisionOperator, OperatorForm, TriadTable};
use crate::dispersion::{Dimension, DispersionLaw};
use crate::error::{ConfigIssue, Error, Result};
use crate::evolution::{
    MonitorConfig, OutputPlan, PhysicsParams, PositivityMode, SchemeConfig, SchemeKind,
};
use crate::grid::{RadialGrid, Spacing, Spectrum};
use crate::kernel::default_kernel_constant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub nu: f64,
    pub rho: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub dim: u8,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self {
            nu: 0.0,
            rho: 0.0,
            gamma: 1.5,
            sigma: 1.0,
            dim: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub k_min: f64,
    pub k_max: f64,
    pub n: usize,
    pub spacing: Spacing,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            k_min: 1e-2,
            k_max: 1e2,
            n: 128,
            spacing: Spacing::Log,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorSection {
    pub form: OperatorForm,
    /// Drop triads with a leg off the grid.
    pub closed_system: bool,
    pub quad_order: usize,
    /// `None` selects `4π / (8π sqrt(2σ))^2`.
    pub kernel_constant: Option<f64>,
}

impl Default for OperatorSection {
    fn default() -> Self {
        Self {
            form: OperatorForm::Conservative,
            closed_system: true,
            quad_order: 4,
            kernel_constant: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSection {
    pub kind: SchemeKind,
    pub dt: f64,
    pub t_end: f64,
    pub truncation_radius: Option<f64>,
    pub positivity: PositivityMode,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self {
            kind: SchemeKind::Rk4If,
            dt: 1e-2,
            t_end: 1.0,
            truncation_radius: None,
            positivity: PositivityMode::Clip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    GaussianBump {
        #[serde(default = "one")]
        center: f64,
        #[serde(default = "default_width")]
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `amplitude k^(-exponent)` on `band`, zero elsewhere.
    PowerLaw {
        exponent: f64,
        band: (f64, f64),
        amplitude: f64,
    },
    FromFile {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

fn default_width() -> f64 {
    0.3
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::GaussianBump {
            center: 1.0,
            width: 0.3,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub snapshot_times: Vec<f64>,
    pub moment_exponents: Vec<f64>,
    pub moment_stride: usize,
    pub directory: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            snapshot_times: Vec::new(),
            moment_exponents: vec![1.0],
            moment_stride: 1,
            directory: PathBuf::from("capwave-out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorSection {
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub n: u32,
    pub moment_ceiling: Option<f64>,
}

impl Default for MonitorSection {
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

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub physics: PhysicsSection,
    pub grid: GridSection,
    pub operator: OperatorSection,
    pub scheme: SchemeSection,
    pub initial: InitialCondition,
    pub output: OutputSection,
    pub monitor: MonitorSection,
    pub seed: u64,
}

/// Parse and validate; every problem found is reported, not just the first.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let mut cfg: SimConfig = serde_json::from_str(text).map_err(|e| {
        Error::Config(vec![ConfigIssue {
            field: "(document)".into(),
            message: e.to_string(),
        }])
    })?;
    let issues = cfg.validate();
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    if !cfg.output.moment_exponents.contains(&1.0) {
        cfg.output.moment_exponents.insert(0, 1.0);
    }
    Ok(cfg)
}

impl SimConfig {
    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let mut bad = |field: &str, message: String| {
            issues.push(ConfigIssue {
                field: field.into(),
                message,
            })
        };
        let p = &self.physics;
        if !(p.nu >= 0.0 && p.nu.is_finite()) {
            bad("physics.nu", format!("must be a finite nonnegative number, got {}", p.nu));
        }
        if !(p.rho >= 0.0 && p.rho.is_finite()) {
            bad("physics.rho", format!("must be a finite nonnegative number, got {}", p.rho));
        }
        if !(p.gamma > 1.0 && p.gamma <= 2.0) {
            bad("physics.gamma", format!("must lie in (1, 2], got {}", p.gamma));
        }
        if !(p.sigma > 0.0 && p.sigma.is_finite()) {
            bad("physics.sigma", format!("must be positive, got {}", p.sigma));
        }
        if p.dim != 2 && p.dim != 3 {
            bad("physics.dim", format!("must be 2 or 3, got {}", p.dim));
        }

        let g = &self.grid;
        if !(g.k_min > 0.0 && g.k_min.is_finite()) {
            bad("grid.k_min", format!("must be positive, got {}", g.k_min));
        }
        if !(g.k_max > g.k_min && g.k_max.is_finite()) {
            bad("grid.k_max", format!("must exceed k_min, got {}", g.k_max));
        }
        if g.n < crate::grid::MIN_NODES {
            bad("grid.n", format!("need at least {} nodes, got {}", crate::grid::MIN_NODES, g.n));
        }

        let o = &self.operator;
        if o.quad_order == 0 {
            bad("operator.quad_order", "must be at least 1".into());
        }
        if let Some(k) = o.kernel_constant {
            if !(k >= 0.0 && k.is_finite()) {
                bad("operator.kernel_constant", format!("must be finite and nonnegative, got {k}"));
            }
        }

        let s = &self.scheme;
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            bad("scheme.dt", format!("must be positive, got {}", s.dt));
        }
        if !(s.t_end >= 0.0 && s.t_end.is_finite()) {
            bad("scheme.t_end", format!("must be finite and nonnegative, got {}", s.t_end));
        }
        if let Some(r) = s.truncation_radius {
            if !(r > 0.0) {
                bad("scheme.truncation_radius", format!("must be positive, got {r}"));
            }
        } else if s.kind == SchemeKind::EulerTruncated {
            bad("scheme.truncation_radius", "required by euler_truncated".into());
        }

        match &self.initial {
            InitialCondition::GaussianBump {
                center,
                width,
                amplitude,
            } => {
                if !center.is_finite() {
                    bad("initial.center", format!("must be finite, got {center}"));
                }
                if !(*width > 0.0 && width.is_finite()) {
                    bad("initial.width", format!("must be positive, got {width}"));
                }
                if !(*amplitude >= 0.0 && amplitude.is_finite()) {
                    bad("initial.amplitude", format!("must be nonnegative, got {amplitude}"));
                }
            }
            InitialCondition::PowerLaw {
                exponent,
                band,
                amplitude,
            } => {
                if !exponent.is_finite() {
                    bad("initial.exponent", format!("must be finite, got {exponent}"));
                }
                if !(band.0 > 0.0 && band.1 > band.0) {
                    bad("initial.band", format!("need 0 < lo < hi, got {band:?}"));
                }
                if !(*amplitude >= 0.0 && amplitude.is_finite()) {
                    bad("initial.amplitude", format!("must be nonnegative, got {amplitude}"));
                }
            }
            InitialCondition::FromFile { .. } => {}
        }

        let out = &self.output;
        for (i, t) in out.snapshot_times.iter().enumerate() {
            if !(*t >= 0.0 && *t <= s.t_end) {
                bad(
                    &format!("output.snapshot_times[{i}]"),
                    format!("must lie in [0, t_end = {}], got {t}", s.t_end),
                );
            }
        }
        for (i, e) in out.moment_exponents.iter().enumerate() {
            if !(*e >= 0.0 && e.is_finite()) {
                bad(&format!("output.moment_exponents[{i}]"), format!("must be nonnegative, got {e}"));
            }
        }
        if out.moment_stride == 0 {
            bad("output.moment_stride", "must be at least 1".into());
        }

        let m = &self.monitor;
        for (name, v) in [("monitor.c0", m.c0), ("monitor.c1", m.c1), ("monitor.c2", m.c2), ("monitor.moment_ceiling", m.moment_ceiling)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    bad(name, format!("must be positive, got {v}"));
                }
            }
        }
        if m.n == 0 {
            bad("monitor.n", "must be at least 1".into());
        }
        issues
    }

    pub fn law(&self) -> Result<DispersionLaw> {
        DispersionLaw::new(
            self.physics.gamma,
            self.physics.sigma,
            Dimension::try_from(self.physics.dim).map_err(|reason| Error::InvalidArgument {
                what: "physics.dim",
                reason,
            })?,
        )
    }

    pub fn grid(&self) -> Result<Arc<RadialGrid>> {
        Ok(Arc::new(RadialGrid::new(
            self.law()?,
            self.grid.k_min,
            self.grid.k_max,
            self.grid.n,
            self.grid.spacing,
        )?))
    }

    pub fn operator(&self, grid: Arc<RadialGrid>) -> Result<CollisionOperator> {
        let table = Arc::new(TriadTable::build(grid, self.operator.quad_order)?);
        let k = self
            .operator
            .kernel_constant
            .unwrap_or_else(|| default_kernel_constant(self.physics.sigma));
        Ok(CollisionOperator::new(table, self.operator.form, self.operator.closed_system)
            .with_kernel_constant(k))
    }

    pub fn physics(&self) -> Result<PhysicsParams> {
        PhysicsParams::new(self.physics.nu, self.physics.rho, self.law()?)
    }

    pub fn scheme(&self) -> SchemeConfig {
        SchemeConfig {
            kind: self.scheme.kind,
            dt: self.scheme.dt,
            t_end: self.scheme.t_end,
            truncation_radius: self.scheme.truncation_radius,
            positivity: self.scheme.positivity,
        }
    }

    pub fn output_plan(&self) -> OutputPlan {
        OutputPlan {
            snapshot_times: self.output.snapshot_times.clone(),
            moment_exponents: self.output.moment_exponents.clone(),
            moment_stride: self.output.moment_stride,
        }
    }

    pub fn monitor(&self) -> MonitorConfig {
        MonitorConfig {
            c0: self.monitor.c0,
            c1: self.monitor.c1,
            c2: self.monitor.c2,
            n: self.monitor.n,
            moment_ceiling: self.monitor.moment_ceiling,
        }
    }

    /// Initial spectrum on `grid`; file paths are taken relative to `base`.
    pub fn initial_spectrum(&self, grid: Arc<RadialGrid>, base: &std::path::Path) -> Result<Spectrum> {
        match &self.initial {
            InitialCondition::GaussianBump {
                center,
                width,
                amplitude,
            } => Spectrum::from_fn(grid, |k| amplitude * (-((k - center) / width).powi(2)).exp()),
            InitialCondition::PowerLaw {
                exponent,
                band,
                amplitude,
            } => Spectrum::from_fn(grid, |k| {
                if k >= band.0 && k <= band.1 {
                    amplitude * k.powf(-exponent)
                } else {
                    0.0
                }
            }),
            InitialCondition::FromFile { path } => {
                let full = if path.is_absolute() { path.clone() } else { base.join(path) };
                let snap = crate::io::read_snapshot(&full)?;
                snap.into_spectrum(grid, &full)
            }
        }
    }
}
