//! Radial collision operator on a grid.
//!
//! For a node `a` the reduced operator reads
//!
//! ```text
//! Q(a) = K A_d [ ∫_gain  w W² (f_b f_c - f_a f_b - f_a f_c) dc
//!             - 2 ∫_loss w W² (f_a f_u - f_t f_a - f_t f_u) du ]
//! ```
//!
//! with `W = V / prefactor`, `K` the kernel constant, `A_d` the angular factor,
//! `b = partner_gain(a, c)` and `t = partner_loss(a, u)`.
//!
//! Two discretizations share one [`TriadTable`]:
//!
//! * *direct*: both integrals by composite Gauss–Legendre in the partner
//!   magnitude, off-node values by log-log interpolation;
//! * *conservative*: only the gain triads are kept. Each triad's rate `R_t` is
//!   added at its top node and removed from both legs, split between the two
//!   bracketing nodes linearly in energy. Total energy `Σ Q_i E_i vol_i`
//!   then vanishes term by term.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::DispersionLaw;
use crate::error::{Error, Result};
use crate::geometry::{density_from_triad, SurfaceKind};
use crate::grid::{Extrapolation, RadialGrid, Spectrum, Stencil};
use crate::kernel::{coupling, default_kernel_constant, OnShellTriad};
use crate::quadrature::GaussLegendre;

/// A partner magnitude and, when it lies on the grid, its stencil.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leg {
    pub x: f64,
    pub stencil: Option<Stencil>,
}

impl Leg {
    fn new(grid: &RadialGrid, x: f64) -> Self {
        Self {
            x,
            stencil: grid.locate(x),
        }
    }

    pub fn on_grid(&self) -> bool {
        self.stencil.is_some()
    }
}

/// Gain triad `a -> b + c` at node `a`. `weight` already carries the factor 2
/// of the `b <-> c` mirror and the quadrature weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainEntry {
    pub node: usize,
    pub b: Leg,
    pub c: Leg,
    pub weight: f64,
    pub coupling: f64,
}

/// Loss triad `a + u -> top` at node `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEntry {
    pub node: usize,
    pub u: Leg,
    pub top: Leg,
    pub weight: f64,
    pub coupling: f64,
}

/// Precomputed quadrature over both resonance surfaces of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct TriadTable {
    grid: Arc<RadialGrid>,
    quad_order: usize,
    gain: Vec<GainEntry>,
    gain_offsets: Vec<usize>,
    loss: Vec<LossEntry>,
    loss_offsets: Vec<usize>,
}

/// Sorted breakpoints with near-duplicates merged.
fn breakpoints(mut pts: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
    pts.retain(|&x| x > lo && x < hi);
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    let tol = 1e-12 * hi;
    let mut out: Vec<f64> = Vec::with_capacity(pts.len());
    for x in pts {
        match out.last() {
            Some(&last) if x - last <= tol => {}
            _ => out.push(x),
        }
    }
    if let Some(last) = out.last_mut() {
        *last = hi;
    }
    out
}

impl TriadTable {
    pub fn build(grid: Arc<RadialGrid>, quad_order: usize) -> Result<Self> {
        if quad_order == 0 {
            return Err(Error::GridTooCoarse("quadrature order must be at least 1".into()));
        }
        let gl = GaussLegendre::new(quad_order);
        let law = *grid.law();
        let n = grid.len();

        let per_node: Vec<Result<(Vec<GainEntry>, Vec<LossEntry>)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                Ok((
                    gain_entries(&grid, &law, &gl, i)?,
                    loss_entries(&grid, &law, &gl, i)?,
                ))
            })
            .collect();

        let mut gain = Vec::new();
        let mut loss = Vec::new();
        let mut gain_offsets = Vec::with_capacity(n + 1);
        let mut loss_offsets = Vec::with_capacity(n + 1);
        gain_offsets.push(0);
        loss_offsets.push(0);
        for r in per_node {
            let (g, l) = r?;
            gain.extend(g);
            loss.extend(l);
            gain_offsets.push(gain.len());
            loss_offsets.push(loss.len());
        }
        if gain.is_empty() {
            return Err(Error::GridTooCoarse("no interior quadrature node".into()));
        }
        Ok(Self {
            grid,
            quad_order,
            gain,
            gain_offsets,
            loss,
            loss_offsets,
        })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn law(&self) -> &DispersionLaw {
        self.grid.law()
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order
    }

    pub fn gain(&self) -> &[GainEntry] {
        &self.gain
    }

    pub fn loss(&self) -> &[LossEntry] {
        &self.loss
    }

    pub fn gain_at(&self, node: usize) -> &[GainEntry] {
        &self.gain[self.gain_offsets[node]..self.gain_offsets[node + 1]]
    }

    pub fn loss_at(&self, node: usize) -> &[LossEntry] {
        &self.loss[self.loss_offsets[node]..self.loss_offsets[node + 1]]
    }

    pub fn len(&self) -> usize {
        self.gain.len() + self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Gain side of node `i`: `c` runs over `(0, c*]` with `E(c*) = E(a)/2`;
/// the mirror half `c > c*` is folded in through the factor 2. Panels break
/// at grid nodes in `c` and at the preimages of grid nodes in `b`.
fn gain_entries(
    grid: &RadialGrid,
    law: &DispersionLaw,
    gl: &GaussLegendre,
    i: usize,
) -> Result<Vec<GainEntry>> {
    let a = grid.nodes()[i];
    let c_star = a * 0.5f64.powf(1.0 / law.gamma());
    let mut pts: Vec<f64> = grid.nodes()[..i].to_vec();
    pts.extend(
        grid.nodes()[..i]
            .iter()
            .filter(|&&k| k > c_star)
            .map(|&k| law.partner_gain_unchecked(a, k)),
    );
    let bps = breakpoints(pts, 0.0, c_star);
    let mut out = Vec::with_capacity((bps.len() - 1) * gl.order());
    for w in bps.windows(2) {
        for (c, qw) in gl.mapped(w[0], w[1]) {
            let t = OnShellTriad::gain(law, a, c)?;
            let density = density_from_triad(law, SurfaceKind::Gain, a, c, &t);
            out.push(GainEntry {
                node: i,
                b: Leg::new(grid, t.b),
                c: Leg::new(grid, c),
                weight: 2.0 * density * qw,
                coupling: coupling(law, &t),
            });
        }
    }
    Ok(out)
}

/// Loss side of node `i`: `u` over `(0, k_max]`, beyond which `f_u = f_top = 0`.
/// Panels break at grid nodes in `u` and where `top` crosses a grid node.
fn loss_entries(
    grid: &RadialGrid,
    law: &DispersionLaw,
    gl: &GaussLegendre,
    i: usize,
) -> Result<Vec<LossEntry>> {
    let a = grid.nodes()[i];
    let k_max = grid.k_max();
    let mut pts: Vec<f64> = grid.nodes().to_vec();
    pts.extend(
        grid.nodes()[i + 1..]
            .iter()
            .map(|&k| law.partner_gain_unchecked(k, a)),
    );
    let bps = breakpoints(pts, 0.0, k_max);
    let mut out = Vec::with_capacity((bps.len() - 1) * gl.order());
    for w in bps.windows(2) {
        for (u, qw) in gl.mapped(w[0], w[1]) {
            let t = OnShellTriad::loss(law, a, u)?;
            let density = density_from_triad(law, SurfaceKind::Loss, a, u, &t);
            out.push(LossEntry {
                node: i,
                u: Leg::new(grid, u),
                top: Leg::new(grid, t.a),
                weight: density * qw,
                coupling: coupling(law, &t),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorForm {
    Direct,
    #[default]
    Conservative,
}

/// A triad table together with the evaluation choices.
#[derive(Debug, Clone)]
pub struct CollisionOperator {
    pub table: Arc<TriadTable>,
    pub form: OperatorForm,
    /// Drop every triad with a leg off the grid, so that the conservative form
    /// conserves energy exactly on the grid.
    pub closed: bool,
    pub kernel_constant: f64,
    pub extrapolation: Extrapolation,
}

/// Node values with their logarithms, for repeated log-log interpolation.
struct Sampler<'a> {
    values: &'a [f64],
    logs: Vec<f64>,
    k_min: f64,
    extrapolation: Extrapolation,
}

impl<'a> Sampler<'a> {
    fn new(spectrum: &'a Spectrum, extrapolation: Extrapolation) -> Self {
        Self {
            values: &spectrum.values,
            logs: spectrum.values.iter().map(|v| v.ln()).collect(),
            k_min: spectrum.grid.k_min(),
            extrapolation,
        }
    }

    #[inline]
    fn at(&self, leg: &Leg) -> f64 {
        match leg.stencil {
            Some(s) => {
                let (f0, f1) = (self.values[s.lo], self.values[s.lo + 1]);
                if s.t_log <= 0.0 {
                    f0
                } else if s.t_log >= 1.0 {
                    f1
                } else if f0 <= 0.0 || f1 <= 0.0 {
                    0.0
                } else {
                    ((1.0 - s.t_log) * self.logs[s.lo] + s.t_log * self.logs[s.lo + 1]).exp()
                }
            }
            None if leg.x < self.k_min => match self.extrapolation {
                Extrapolation::Zero => 0.0,
                Extrapolation::PowerLaw { slope } => {
                    self.values[0] * (leg.x / self.k_min).powf(slope)
                }
            },
            None => 0.0,
        }
    }
}

/// Per-node split `Q = Q_plus - f Q_minus` with both parts nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitQ {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

impl CollisionOperator {
    pub fn new(table: Arc<TriadTable>, form: OperatorForm, closed: bool) -> Self {
        let kernel_constant = default_kernel_constant(table.law().sigma());
        Self {
            table,
            form,
            closed,
            kernel_constant,
            extrapolation: Extrapolation::Zero,
        }
    }

    pub fn with_kernel_constant(mut self, k: f64) -> Self {
        self.kernel_constant = k;
        self
    }

    pub fn with_extrapolation(mut self, e: Extrapolation) -> Self {
        self.extrapolation = e;
        self
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.table.grid()
    }

    fn scale(&self) -> f64 {
        self.kernel_constant * self.table.law().dim().angular_factor()
    }

    fn check(&self, spectrum: &Spectrum) -> Result<()> {
        if spectrum.values.len() != self.grid().len() {
            return Err(Error::InvalidArgument {
                what: "spectrum",
                reason: format!(
                    "{} values for a grid of {} nodes",
                    spectrum.values.len(),
                    self.grid().len()
                ),
            });
        }
        Ok(())
    }

    /// `Q[f]` at the grid nodes in the configured form.
    pub fn apply(&self, spectrum: &Spectrum) -> Result<Vec<f64>> {
        match self.form {
            OperatorForm::Direct => self.q_direct(spectrum),
            OperatorForm::Conservative => self.q_conservative(spectrum),
        }
    }

    pub fn q_direct(&self, spectrum: &Spectrum) -> Result<Vec<f64>> {
        self.check(spectrum)?;
        let s = Sampler::new(spectrum, self.extrapolation);
        let scale = self.scale();
        let closed = self.closed;
        let table = &self.table;
        (0..self.grid().len())
            .into_par_iter()
            .map(|i| {
                let fa = spectrum.values[i];
                let mut gain = 0.0;
                for (j, e) in table.gain_at(i).iter().enumerate() {
                    if closed && !(e.b.on_grid() && e.c.on_grid()) {
                        continue;
                    }
                    let (fb, fc) = (s.at(&e.b), s.at(&e.c));
                    let term = e.weight * e.coupling * (fb * fc - fa * (fb + fc));
                    if !term.is_finite() {
                        return Err(non_finite(i, "gain", j, e.b.x, e.c.x));
                    }
                    gain += term;
                }
                let mut loss = 0.0;
                for (j, e) in table.loss_at(i).iter().enumerate() {
                    if closed && !(e.u.on_grid() && e.top.on_grid()) {
                        continue;
                    }
                    let (fu, ft) = (s.at(&e.u), s.at(&e.top));
                    let term = e.weight * e.coupling * (fa * fu - ft * (fa + fu));
                    if !term.is_finite() {
                        return Err(non_finite(i, "loss", j, e.u.x, e.top.x));
                    }
                    loss += term;
                }
                Ok(scale * (gain - 2.0 * loss))
            })
            .collect()
    }

    /// Direct-form gain/loss split.
    pub fn split(&self, spectrum: &Spectrum) -> Result<SplitQ> {
        self.check(spectrum)?;
        let s = Sampler::new(spectrum, self.extrapolation);
        let scale = self.scale();
        let closed = self.closed;
        let table = &self.table;
        let parts: Vec<(f64, f64)> = (0..self.grid().len())
            .into_par_iter()
            .map(|i| {
                let fa = spectrum.values[i];
                let (mut plus, mut minus) = (0.0, 0.0);
                for e in table.gain_at(i) {
                    if closed && !(e.b.on_grid() && e.c.on_grid()) {
                        continue;
                    }
                    let (fb, fc) = (s.at(&e.b), s.at(&e.c));
                    let ww = e.weight * e.coupling;
                    plus += ww * fb * fc;
                    minus += ww * (fb + fc);
                }
                for e in table.loss_at(i) {
                    if closed && !(e.u.on_grid() && e.top.on_grid()) {
                        continue;
                    }
                    let (fu, ft) = (s.at(&e.u), s.at(&e.top));
                    let ww = 2.0 * e.weight * e.coupling;
                    plus += ww * ft * (fa + fu);
                    minus += ww * fu;
                }
                (scale * plus, scale * minus)
            })
            .collect();
        let (plus, minus) = parts.into_iter().unzip();
        Ok(SplitQ { plus, minus })
    }

    fn keep_gain(&self, e: &GainEntry) -> bool {
        !self.closed || (e.b.on_grid() && e.c.on_grid())
    }

    /// Rates `R_t` of the conservative triad set, in table order
    /// (zero for dropped triads).
    fn triad_rates(&self, spectrum: &Spectrum) -> Result<Vec<f64>> {
        let s = Sampler::new(spectrum, self.extrapolation);
        let scale = self.scale();
        let vol = self.grid().volumes();
        let gain = self.table.gain();
        let rates: Vec<f64> = gain
            .par_iter()
            .map(|e| {
                if !self.keep_gain(e) {
                    return 0.0;
                }
                let fa = spectrum.values[e.node];
                let (fb, fc) = (s.at(&e.b), s.at(&e.c));
                scale * vol[e.node] * e.weight * e.coupling * (fb * fc - fa * (fb + fc))
            })
            .collect();
        if let Some(j) = rates.iter().position(|r| !r.is_finite()) {
            let e = &gain[j];
            let local = j - self.table.gain_offsets[e.node];
            return Err(non_finite(e.node, "gain", local, e.b.x, e.c.x));
        }
        Ok(rates)
    }

    pub fn q_conservative(&self, spectrum: &Spectrum) -> Result<Vec<f64>> {
        self.check(spectrum)?;
        let rates = self.triad_rates(spectrum)?;
        let n = self.grid().len();
        let mut acc = vec![0.0; n];
        for (e, &r) in self.table.gain().iter().zip(&rates) {
            if r == 0.0 {
                continue;
            }
            acc[e.node] += r;
            for leg in [&e.b, &e.c] {
                if let Some(st) = leg.stencil {
                    acc[st.lo] -= r * (1.0 - st.theta);
                    acc[st.lo + 1] -= r * st.theta;
                }
            }
        }
        if !self.closed {
            // merges whose product leaves the grid: a pure sink at node a
            let s = Sampler::new(spectrum, self.extrapolation);
            let scale = self.scale();
            let vol = self.grid().volumes();
            let sinks: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let fa = spectrum.values[i];
                    self.table
                        .loss_at(i)
                        .iter()
                        .filter(|e| e.top.x > self.grid().k_max())
                        .map(|e| 2.0 * e.weight * e.coupling * fa * s.at(&e.u))
                        .sum::<f64>()
                        * scale
                        * vol[i]
                })
                .collect();
            for (a, sink) in acc.iter_mut().zip(sinks) {
                *a -= sink;
            }
        }
        let vol = self.grid().volumes();
        let out: Vec<f64> = acc.iter().zip(vol).map(|(a, v)| a / v).collect();
        if let Some(i) = out.iter().position(|q| !q.is_finite()) {
            return Err(non_finite(i, "loss", 0, f64::NAN, f64::NAN));
        }
        Ok(out)
    }

    /// `Σ_t R_t (φ(a) - φ(b) - φ(c))` over the conservative triad set, with
    /// `φ` evaluated at the exact partner magnitudes.
    pub fn weak_form(&self, spectrum: &Spectrum, phi: impl Fn(f64) -> f64) -> Result<f64> {
        self.check(spectrum)?;
        let rates = self.triad_rates(spectrum)?;
        let nodes = self.grid().nodes();
        Ok(self
            .table
            .gain()
            .iter()
            .zip(&rates)
            .map(|(e, &r)| r * (phi(nodes[e.node]) - phi(e.b.x) - phi(e.c.x)))
            .sum())
    }

    /// The individual triad rates with their magnitudes `(a, b, c, R_t)`.
    pub fn triads(&self, spectrum: &Spectrum) -> Result<Vec<(f64, f64, f64, f64)>> {
        self.check(spectrum)?;
        let rates = self.triad_rates(spectrum)?;
        let nodes = self.grid().nodes();
        Ok(self
            .table
            .gain()
            .iter()
            .zip(rates)
            .filter(|(e, _)| self.keep_gain(e))
            .map(|(e, r)| (nodes[e.node], e.b.x, e.c.x, r))
            .collect())
    }
}

fn non_finite(node: usize, surface: &'static str, entry: usize, x: f64, y: f64) -> Error {
    Error::NonFiniteSummand {
        node,
        surface,
        entry,
        partners: (x, y),
    }
}
