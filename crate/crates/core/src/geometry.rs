//! Resonance surfaces around a wavenumber `p` and their reduction to
//! one-dimensional radial quadrature.
//!
//! * Gain surface `S_p = { w : E(p - w) + E(w) = E(p) }`, a closed surface
//!   through `0` and `p`, rotationally symmetric about the axis `p`.
//! * Loss surface `S'_p = { w : E(p) + E(w) = E(p + w) }`, unbounded.
//!
//! For a radial test function `F(|w|)` the surface integral against
//! `dσ / |∇H|` (equivalently `∫ F δ(H) dw`) collapses to
//!
//! ```text
//! angular_factor * ∫ F(u) weight(u, p) du
//! ```
//!
//! where `u = |w|` and `r` is the third side of the triangle `(p, u, r)`
//! (`r = |p - w|` on the gain surface, `|p + w|` on the loss surface):
//!
//! ```text
//! d = 3:  weight = u r^(2-γ) / (γ sqrt(σ) p)
//! d = 2:  weight = r^(2-γ) / (γ sqrt(σ) p sin φ)
//! ```
//!
//! `φ` is the angle between `w` and `p`. Both follow from integrating the
//! delta over the polar angle: `d(r^2) = ∓2 p u d(cos φ)` and
//! `|∂H/∂r| = E'(r)`. [`mc_surface_oracle`] checks them by brute force.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dispersion::{Dimension, DispersionLaw};
use crate::error::{Error, Result};
use crate::kernel::OnShellTriad;
use crate::quadrature::GaussLegendre;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SurfaceKind {
    /// `S_p`: `p` splits into `w` and `p - w`.
    Gain,
    /// `S'_p`: `p` merges with `w` into `p + w`.
    Loss,
}

impl SurfaceKind {
    pub fn name(self) -> &'static str {
        match self {
            SurfaceKind::Gain => "gain",
            SurfaceKind::Loss => "loss",
        }
    }
}

/// Reduced weight at a point; the gain surface in 2-D carries an integrable
/// `(p - u)^(1/γ - 1)` singularity at the pole `u = p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightDensity {
    Finite(f64),
    IntegrableSingularity,
}

impl WeightDensity {
    pub fn value(self) -> Option<f64> {
        match self {
            WeightDensity::Finite(v) => Some(v),
            WeightDensity::IntegrableSingularity => None,
        }
    }
}

const BISECTION_MAX_ITER: usize = 200;

/// Gain-surface defect for `|p| = 1`, `w = alpha p + s e_q`.
fn gain_defect_unit(law: &DispersionLaw, alpha: f64, s: f64) -> f64 {
    let r_far = (1.0 - alpha).hypot(s);
    let r_near = alpha.hypot(s);
    law.energy_of(r_far) + law.energy_of(r_near) - law.energy_of(1.0)
}

/// Transverse offset `s(α)` of the gain surface at axial fraction `α`:
/// the point `α p + s(α) e_q` lies on `S_p` for every unit `e_q ⟂ p`.
pub fn solve_s(law: &DispersionLaw, alpha: f64, p_mag: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument {
            what: "alpha",
            reason: format!("must lie in [0, 1], got {alpha}"),
        });
    }
    if !(p_mag > 0.0 && p_mag.is_finite()) {
        return Err(Error::InvalidArgument {
            what: "p_mag",
            reason: format!("must be positive, got {p_mag}"),
        });
    }
    Ok(p_mag * solve_s_unit(law, alpha)?)
}

fn solve_s_unit(law: &DispersionLaw, alpha: f64) -> Result<f64> {
    if alpha == 0.0 || alpha == 1.0 {
        return Ok(0.0);
    }
    // Superadditivity puts the surface inside the ball B(p/2, |p|/2),
    // hence s <= sqrt(alpha (1 - alpha)).
    let mut lo = 0.0;
    let mut hi = (alpha * (1.0 - alpha)).sqrt();
    let mut guard = 0;
    while gain_defect_unit(law, alpha, hi) < 0.0 {
        hi *= 1.0 + 1e-12;
        guard += 1;
        if guard > 100 {
            return Err(Error::NonConvergence {
                iterations: guard,
                lo,
                hi,
                residual: gain_defect_unit(law, alpha, hi),
            });
        }
    }
    let mut iterations = 0;
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if gain_defect_unit(law, alpha, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
        if iterations > BISECTION_MAX_ITER {
            return Err(Error::NonConvergence {
                iterations,
                lo,
                hi,
                residual: gain_defect_unit(law, alpha, 0.5 * (lo + hi)),
            });
        }
    }
    let mut s = 0.5 * (lo + hi);
    for _ in 0..2 {
        let h = gain_defect_unit(law, alpha, s);
        let dh = s * (law.slope((1.0 - alpha).hypot(s)) + law.slope(alpha.hypot(s)));
        if dh > 0.0 {
            let next = s - h / dh;
            if next >= lo && next <= hi && gain_defect_unit(law, alpha, next).abs() <= h.abs() {
                s = next;
            }
        }
    }
    let residual = gain_defect_unit(law, alpha, s);
    if residual.abs() > 1e-12 * law.energy_of(1.0) {
        return Err(Error::NonConvergence {
            iterations,
            lo,
            hi,
            residual,
        });
    }
    Ok(s)
}

/// Point `(axial, transverse)` of the gain surface in the plane spanned by `p`
/// and `e_q`.
pub fn surface_point(law: &DispersionLaw, alpha: f64, p_mag: f64) -> Result<(f64, f64)> {
    let s = solve_s(law, alpha, p_mag)?;
    Ok((alpha * p_mag, s))
}

fn pow_two_minus_gamma(law: &DispersionLaw, r: f64) -> f64 {
    let g = law.gamma();
    if g == 1.5 {
        r.sqrt()
    } else if g == 2.0 {
        1.0
    } else {
        r.powf(2.0 - g)
    }
}

/// Reduced density from the triangle `(p, u, r)` carried by `t`.
pub(crate) fn density_from_triad(
    law: &DispersionLaw,
    kind: SurfaceKind,
    p: f64,
    u: f64,
    t: &OnShellTriad,
) -> f64 {
    let r = match kind {
        SurfaceKind::Gain => t.b,
        SurfaceKind::Loss => t.a,
    };
    let num = pow_two_minus_gamma(law, r) / (law.gamma() * law.sqrt_sigma());
    match law.dim() {
        Dimension::Three => u * num / p,
        Dimension::Two => 2.0 * u * num / t.sqrt_heron_product(),
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument {
            what: "p_mag",
            reason: format!("must be positive, got {p}"),
        })
    }
}

/// Limit of the 2-D density as `u -> 0`, where `w` becomes orthogonal to `p`.
fn planar_pole_limit(law: &DispersionLaw, p: f64) -> f64 {
    pow_two_minus_gamma(law, p) / (law.gamma() * law.sqrt_sigma() * p)
}

pub fn gain_weight(law: &DispersionLaw, u: f64, p_mag: f64) -> Result<WeightDensity> {
    check_p(p_mag)?;
    if !(0.0..=p_mag).contains(&u) {
        return Err(Error::InvalidArgument {
            what: "u",
            reason: format!("gain partner must lie in [0, {p_mag}], got {u}"),
        });
    }
    let dim = law.dim();
    if u == 0.0 {
        return Ok(WeightDensity::Finite(match dim {
            Dimension::Three => 0.0,
            Dimension::Two => planar_pole_limit(law, p_mag),
        }));
    }
    if u == p_mag {
        return Ok(match dim {
            Dimension::Three => WeightDensity::Finite(if law.gamma() == 2.0 {
                1.0 / (2.0 * law.sqrt_sigma())
            } else {
                0.0
            }),
            Dimension::Two => WeightDensity::IntegrableSingularity,
        });
    }
    let t = OnShellTriad::gain(law, p_mag, u)?;
    let w = density_from_triad(law, SurfaceKind::Gain, p_mag, u, &t);
    Ok(if w.is_finite() {
        WeightDensity::Finite(w)
    } else {
        WeightDensity::IntegrableSingularity
    })
}

pub fn loss_weight(law: &DispersionLaw, u: f64, p_mag: f64) -> Result<WeightDensity> {
    check_p(p_mag)?;
    if !(u >= 0.0 && u.is_finite()) {
        return Err(Error::InvalidArgument {
            what: "u",
            reason: format!("loss partner must be a finite nonnegative magnitude, got {u}"),
        });
    }
    if u == 0.0 {
        return Ok(WeightDensity::Finite(match law.dim() {
            Dimension::Three => 0.0,
            Dimension::Two => planar_pole_limit(law, p_mag),
        }));
    }
    let t = OnShellTriad::loss(law, p_mag, u)?;
    let w = density_from_triad(law, SurfaceKind::Loss, p_mag, u, &t);
    Ok(if w.is_finite() {
        WeightDensity::Finite(w)
    } else {
        WeightDensity::IntegrableSingularity
    })
}

/// Quadrature nodes `(u, w)` such that
/// `∫_S F(|w|) dσ/|∇H| ≈ angular_factor * Σ w F(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedWeightTable {
    pub p_mag: f64,
    pub kind: SurfaceKind,
    pub nodes: Vec<(f64, f64)>,
    pub angular_factor: f64,
}

impl ReducedWeightTable {
    /// Gain surface. Nodes are placed on `(0, c*]` with `E(c*) = E(p)/2` and
    /// mirrored through the partner map `u -> partner_gain(p, u)`, which
    /// preserves the measure; the pole singularity at `u = p` is never sampled.
    pub fn gain(law: &DispersionLaw, p_mag: f64, panels: usize, order: usize) -> Result<Self> {
        check_p(p_mag)?;
        let gl = GaussLegendre::new(order.max(1));
        let c_star = p_mag * 0.5f64.powf(1.0 / law.gamma());
        let h = c_star / panels.max(1) as f64;
        let mut nodes = Vec::with_capacity(2 * panels * order);
        for j in 0..panels.max(1) {
            let lo = h * j as f64;
            let hi = if j + 1 == panels.max(1) { c_star } else { lo + h };
            for (u, qw) in gl.mapped(lo, hi) {
                let t = OnShellTriad::gain(law, p_mag, u)?;
                let w = density_from_triad(law, SurfaceKind::Gain, p_mag, u, &t) * qw;
                nodes.push((u, w));
                nodes.push((t.b, w));
            }
        }
        nodes.sort_by(|x, y| x.0.total_cmp(&y.0));
        Ok(Self {
            p_mag,
            kind: SurfaceKind::Gain,
            nodes,
            angular_factor: law.dim().angular_factor(),
        })
    }

    /// Loss surface truncated to partners `u <= u_max`.
    pub fn loss(
        law: &DispersionLaw,
        p_mag: f64,
        u_max: f64,
        panels: usize,
        order: usize,
    ) -> Result<Self> {
        check_p(p_mag)?;
        if !(u_max > 0.0 && u_max.is_finite()) {
            return Err(Error::UnboundedSupport);
        }
        let gl = GaussLegendre::new(order.max(1));
        let h = u_max / panels.max(1) as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        for j in 0..panels.max(1) {
            let lo = h * j as f64;
            let hi = if j + 1 == panels.max(1) { u_max } else { lo + h };
            for (u, qw) in gl.mapped(lo, hi) {
                let t = OnShellTriad::loss(law, p_mag, u)?;
                nodes.push((u, density_from_triad(law, SurfaceKind::Loss, p_mag, u, &t) * qw));
            }
        }
        Ok(Self {
            p_mag,
            kind: SurfaceKind::Loss,
            nodes,
            angular_factor: law.dim().angular_factor(),
        })
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.angular_factor * self.nodes.iter().map(|&(u, w)| w * f(u)).sum::<f64>()
    }

    /// `∫_S dσ/|∇H|` (over the truncated range for the loss surface).
    pub fn area(&self) -> f64 {
        self.integrate(|_| 1.0)
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub hits: u64,
    pub samples: u64,
}

/// Settings for [`mc_surface_oracle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    /// Full width of the top-hat replacing `δ(H)`, in energy units.
    pub epsilon: f64,
    pub n_samples: u64,
    pub seed: u64,
    /// Radial range `[u_lo, u_hi]` holding the test functions' support.
    /// Mandatory for the loss surface.
    pub support: Option<(f64, f64)>,
}

const ORACLE_CHUNK: u64 = 1 << 16;
pub const MIN_ORACLE_SAMPLES: u64 = 100_000;

pub type RadialFn<'a> = &'a (dyn Fn(f64) -> f64 + Sync);
pub type TestFn = Box<dyn Fn(f64) -> f64 + Sync>;

/// Brute-force estimate of `∫_{R^d} F(|w|) δ_ε(H(w)) dw` for several radial
/// test functions at once, with `δ_ε` the top-hat of width `ε`.
///
/// Points are drawn uniformly in the annulus `u_lo <= |w| <= u_hi`; only the
/// polar angle to `p` matters and it is drawn directly. Samples are split into
/// fixed chunks, each with its own ChaCha stream, so the result does not
/// depend on the number of worker threads.
pub fn mc_surface_oracle_multi(
    law: &DispersionLaw,
    p_mag: f64,
    kind: SurfaceKind,
    test_fns: &[RadialFn<'_>],
    settings: &OracleSettings,
) -> Result<Vec<McEstimate>> {
    check_p(p_mag)?;
    let e_p = law.energy_of(p_mag);
    if !(settings.epsilon > 0.0 && settings.epsilon <= 0.1 * e_p) {
        return Err(Error::InvalidArgument {
            what: "epsilon",
            reason: format!("must lie in (0, 0.1 E(p)] = (0, {}], got {}", 0.1 * e_p, settings.epsilon),
        });
    }
    if settings.n_samples < MIN_ORACLE_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_ORACLE_SAMPLES as usize,
            got: settings.n_samples as usize,
        });
    }
    let (u_lo, u_hi) = match (kind, settings.support) {
        (SurfaceKind::Loss, None) => return Err(Error::UnboundedSupport),
        (SurfaceKind::Loss, Some((lo, hi))) => (lo, hi),
        (SurfaceKind::Gain, support) => {
            // the smeared shell pokes past the pole |w| = p by about ε / E'(p)
            let margin = settings.epsilon / (law.slope(p_mag) * p_mag);
            let cap = p_mag + margin;
            match support {
                None => (0.0, cap),
                Some((lo, hi)) => (lo, hi.min(cap)),
            }
        }
    };
    if !(u_lo >= 0.0 && u_hi > u_lo && u_hi.is_finite()) {
        return Err(Error::InvalidArgument {
            what: "support",
            reason: format!("need 0 <= u_lo < u_hi < inf, got [{u_lo}, {u_hi}]"),
        });
    }

    let dim = law.dim();
    let d = dim.as_u8() as i32;
    let (lo_d, hi_d) = (u_lo.powi(d), u_hi.powi(d));
    let volume = dim.sphere_area() / d as f64 * (hi_d - lo_d);
    let half_eps = 0.5 * settings.epsilon;
    let inv_eps = 1.0 / settings.epsilon;
    let n_fns = test_fns.len();
    let n_chunks = settings.n_samples.div_ceil(ORACLE_CHUNK);

    let partials: Vec<(Vec<f64>, Vec<f64>, u64)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
            rng.set_stream(chunk);
            let start = chunk * ORACLE_CHUNK;
            let count = ORACLE_CHUNK.min(settings.n_samples - start);
            let mut sum = vec![0.0; n_fns];
            let mut sum_sq = vec![0.0; n_fns];
            let mut hits = 0u64;
            for _ in 0..count {
                let v: f64 = rng.gen();
                let x = lo_d + v * (hi_d - lo_d);
                let u = match dim {
                    Dimension::Two => x.sqrt(),
                    Dimension::Three => x.cbrt(),
                };
                let cos = match dim {
                    Dimension::Two => (std::f64::consts::TAU * rng.gen::<f64>()).cos(),
                    Dimension::Three => 2.0 * rng.gen::<f64>() - 1.0,
                };
                let h = match kind {
                    SurfaceKind::Gain => {
                        let r2 = (u * u + p_mag * p_mag - 2.0 * p_mag * u * cos).max(0.0);
                        law.energy_of(r2.sqrt()) + law.energy_of(u) - e_p
                    }
                    SurfaceKind::Loss => {
                        let r2 = (u * u + p_mag * p_mag + 2.0 * p_mag * u * cos).max(0.0);
                        e_p + law.energy_of(u) - law.energy_of(r2.sqrt())
                    }
                };
                if h.abs() < half_eps {
                    hits += 1;
                    for (k, f) in test_fns.iter().enumerate() {
                        let y = f(u) * inv_eps;
                        sum[k] += y;
                        sum_sq[k] += y * y;
                    }
                }
            }
            (sum, sum_sq, hits)
        })
        .collect();

    let n = settings.n_samples as f64;
    let mut sum = vec![0.0; n_fns];
    let mut sum_sq = vec![0.0; n_fns];
    let mut hits = 0;
    for (s, q, h) in partials {
        for k in 0..n_fns {
            sum[k] += s[k];
            sum_sq[k] += q[k];
        }
        hits += h;
    }
    Ok((0..n_fns)
        .map(|k| {
            let mean = sum[k] / n;
            let var = (sum_sq[k] / n - mean * mean).max(0.0);
            McEstimate {
                value: volume * mean,
                std_error: volume * (var / (n - 1.0)).sqrt(),
                hits,
                samples: settings.n_samples,
            }
        })
        .collect())
}

/// Single-function form of [`mc_surface_oracle_multi`].
pub fn mc_surface_oracle(
    law: &DispersionLaw,
    p_mag: f64,
    kind: SurfaceKind,
    test_fn: RadialFn<'_>,
    settings: &OracleSettings,
) -> Result<McEstimate> {
    Ok(mc_surface_oracle_multi(law, p_mag, kind, &[test_fn], settings)?[0])
}

/// Radial test functions used to compare the reduced weights with the
/// Monte Carlo oracle, scaled to the surface size `p`.
pub fn standard_test_functions(p_mag: f64) -> Vec<(&'static str, TestFn)> {
    vec![
        ("one", Box::new(|_| 1.0)),
        ("u", Box::new(move |u| u / p_mag)),
        ("u2", Box::new(move |u| (u / p_mag).powi(2))),
        ("exp", Box::new(move |u| (-u / p_mag).exp())),
        ("rational", Box::new(move |u| 1.0 / (1.0 + (u / p_mag).powi(2)))),
    ]
}

/// Reduced quadrature against the Monte Carlo oracle for one test function.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub kind: SurfaceKind,
    pub p_mag: f64,
    pub test_fn: &'static str,
    pub reduced: f64,
    pub mc: McEstimate,
}

impl OracleComparison {
    pub fn rel_error(&self) -> f64 {
        (self.mc.value - self.reduced).abs() / self.reduced.abs()
    }

    pub fn z_score(&self) -> f64 {
        (self.mc.value - self.reduced).abs() / self.mc.std_error
    }
}

/// Run [`standard_test_functions`] through both the reduced table and the
/// oracle. The loss surface is truncated to `u <= loss_cutoff * p`.
pub fn oracle_comparison(
    law: &DispersionLaw,
    p_mag: f64,
    kind: SurfaceKind,
    settings: &OracleSettings,
    loss_cutoff: f64,
) -> Result<Vec<OracleComparison>> {
    const PANELS: usize = 64;
    const ORDER: usize = 8;
    let fns = standard_test_functions(p_mag);
    let (table, settings) = match kind {
        SurfaceKind::Gain => (
            ReducedWeightTable::gain(law, p_mag, PANELS, ORDER)?,
            OracleSettings {
                support: None,
                ..*settings
            },
        ),
        SurfaceKind::Loss => {
            let u_max = loss_cutoff * p_mag;
            (
                ReducedWeightTable::loss(law, p_mag, u_max, PANELS, ORDER)?,
                OracleSettings {
                    support: Some((0.0, u_max)),
                    ..*settings
                },
            )
        }
    };
    let refs: Vec<RadialFn<'_>> = fns.iter().map(|(_, f)| f.as_ref() as RadialFn<'_>).collect();
    let mc = mc_surface_oracle_multi(law, p_mag, kind, &refs, &settings)?;
    Ok(fns
        .iter()
        .zip(mc)
        .map(|((name, f), mc)| OracleComparison {
            kind,
            p_mag,
            test_fn: name,
            reduced: table.integrate(f),
            mc,
        })
        .collect())
}
