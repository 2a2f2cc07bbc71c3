//! Radial wavenumber grids, spectra on them, and interpolation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dispersion::DispersionLaw;
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

pub const MIN_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

impl Spacing {
    pub fn name(self) -> &'static str {
        match self {
            Spacing::Log => "log",
            Spacing::Linear => "linear",
        }
    }
}

/// Position of an off-node magnitude between nodes `lo` and `lo + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub lo: usize,
    /// Fraction of the cell in `ln k`; drives log-log interpolation of `f`.
    pub t_log: f64,
    /// Fraction of the cell in energy; drives energy-linear redistribution.
    pub theta: f64,
}

/// Nodes `k_0 < ... < k_{n-1}` with volume weights
/// `vol_j = ∫ hat_j(E(k)) |S^{d-1}| k^{d-1} dk`, where `hat_j` is the
/// piecewise-linear hat in energy centred on node `j` (half-hats at the ends).
/// Sums `Σ g_j vol_j` then integrate the energy-linear interpolant of `g`
/// exactly, and the hats form a partition of unity on `[k_min, k_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    law: DispersionLaw,
    spacing: Spacing,
    nodes: Vec<f64>,
    energies: Vec<f64>,
    volumes: Vec<f64>,
}

impl RadialGrid {
    pub fn new(
        law: DispersionLaw,
        k_min: f64,
        k_max: f64,
        n: usize,
        spacing: Spacing,
    ) -> Result<Self> {
        if !(k_min > 0.0 && k_min.is_finite()) {
            return Err(Error::InvalidArgument {
                what: "k_min",
                reason: format!("must be positive, got {k_min}"),
            });
        }
        if !(k_max > k_min && k_max.is_finite()) {
            return Err(Error::InvalidArgument {
                what: "k_max",
                reason: format!("must exceed k_min = {k_min}, got {k_max}"),
            });
        }
        if n < MIN_NODES {
            return Err(Error::GridTooCoarse(format!(
                "need at least {MIN_NODES} nodes, got {n}"
            )));
        }
        let last = (n - 1) as f64;
        let mut nodes: Vec<f64> = match spacing {
            Spacing::Log => {
                let span = (k_max / k_min).ln();
                (0..n).map(|i| k_min * (span * i as f64 / last).exp()).collect()
            }
            Spacing::Linear => (0..n)
                .map(|i| k_min + (k_max - k_min) * i as f64 / last)
                .collect(),
        };
        nodes[0] = k_min;
        nodes[n - 1] = k_max;
        let energies: Vec<f64> = nodes.iter().map(|&k| law.energy_of(k)).collect();
        let volumes = hat_volumes(&law, &nodes, &energies);
        Ok(Self {
            law,
            spacing,
            nodes,
            energies,
            volumes,
        })
    }

    pub fn law(&self) -> &DispersionLaw {
        &self.law
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn k_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn k_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.k_min() && x <= self.k_max()
    }

    /// Stencil for `x` in `[k_min, k_max]`, `None` outside.
    pub fn locate(&self, x: f64) -> Option<Stencil> {
        if !self.contains(x) {
            return None;
        }
        let n = self.nodes.len();
        let lo = match self.spacing {
            Spacing::Log => {
                let span = (self.k_max() / self.k_min()).ln();
                ((x / self.k_min()).ln() / span * (n - 1) as f64).floor() as usize
            }
            Spacing::Linear => {
                ((x - self.k_min()) / (self.k_max() - self.k_min()) * (n - 1) as f64).floor()
                    as usize
            }
        };
        // correct the guess against rounding in the index formula
        let mut lo = lo.min(n - 2);
        while lo > 0 && self.nodes[lo] > x {
            lo -= 1;
        }
        while lo + 2 < n && self.nodes[lo + 1] <= x {
            lo += 1;
        }
        let (k0, k1) = (self.nodes[lo], self.nodes[lo + 1]);
        let t_log = ((x / k0).ln() / (k1 / k0).ln()).clamp(0.0, 1.0);
        let (e0, e1) = (self.energies[lo], self.energies[lo + 1]);
        let theta = ((self.law.energy_of(x) - e0) / (e1 - e0)).clamp(0.0, 1.0);
        Some(Stencil { lo, t_log, theta })
    }
}

const VOLUME_QUAD_ORDER: usize = 8;

fn hat_volumes(law: &DispersionLaw, nodes: &[f64], energies: &[f64]) -> Vec<f64> {
    let gl = GaussLegendre::new(VOLUME_QUAD_ORDER);
    let dim = law.dim();
    let area = dim.sphere_area();
    let dm1 = dim.as_u8() as i32 - 1;
    let mut vol = vec![0.0; nodes.len()];
    for j in 0..nodes.len() - 1 {
        let (k0, k1) = (nodes[j], nodes[j + 1]);
        let (e0, e1) = (energies[j], energies[j + 1]);
        let mut left = 0.0;
        let mut right = 0.0;
        for (k, w) in gl.mapped(k0, k1) {
            let theta = (law.energy_of(k) - e0) / (e1 - e0);
            let m = w * area * k.powi(dm1);
            left += m * (1.0 - theta);
            right += m * theta;
        }
        vol[j] += left;
        vol[j + 1] += right;
    }
    vol
}

/// How `f` is continued below `k_min`; above `k_max` it is always zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Extrapolation {
    #[default]
    Zero,
    /// `f(x) = f(k_min) (x / k_min)^slope` for `x < k_min`.
    PowerLaw { slope: f64 },
}

/// Nonnegative values of `f` at the grid nodes at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: Arc<RadialGrid>,
    pub values: Vec<f64>,
    pub time: f64,
}

impl Spectrum {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument {
                what: "spectrum",
                reason: format!("{} values for a grid of {} nodes", values.len(), grid.len()),
            });
        }
        if let Some((i, &v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidArgument {
                what: "spectrum",
                reason: format!("value {v} at node {i} is not a finite nonnegative number"),
            });
        }
        Ok(Self { grid, values, time })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
            time: 0.0,
        }
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&k| f(k)).collect();
        Self::new(grid, values, 0.0)
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * lambda).collect(),
            time: self.time,
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Log-log linear interpolation between nodes, zero above `k_max`.
pub fn interpolate_f(spectrum: &Spectrum, x: f64, extrapolation: Extrapolation) -> f64 {
    let grid = &spectrum.grid;
    if x < grid.k_min() {
        return match extrapolation {
            Extrapolation::Zero => 0.0,
            Extrapolation::PowerLaw { slope } => {
                if x <= 0.0 && slope < 0.0 {
                    f64::INFINITY
                } else {
                    spectrum.values[0] * (x / grid.k_min()).powf(slope)
                }
            }
        };
    }
    match grid.locate(x) {
        None => 0.0,
        Some(s) => log_linear(spectrum.values[s.lo], spectrum.values[s.lo + 1], s.t_log),
    }
}

/// `f0^(1-t) f1^t`, taking the node value at `t = 0, 1` and zero if either
/// end vanishes in between.
#[inline]
pub(crate) fn log_linear(f0: f64, f1: f64, t: f64) -> f64 {
    if t <= 0.0 {
        f0
    } else if t >= 1.0 {
        f1
    } else if f0 <= 0.0 || f1 <= 0.0 {
        0.0
    } else {
        ((1.0 - t) * f0.ln() + t * f1.ln()).exp()
    }
}
