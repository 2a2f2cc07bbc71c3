//! Interaction kernel of a resonant triad `k = k1 + k2`, evaluated from the
//! three magnitudes alone.
//!
//! No vectors are ever built. The pair terms `L_{x,y} = x.y + |x||y|` follow
//! from the law of cosines, and are written in factored form so that
//! near-collinear triads (one leg much shorter than the other two) keep full
//! relative precision:
//!
//! ```text
//! L_{k1,k2}  = (a - b + c)(a + b - c) / 2
//! L_{k,-k1}  = (b + c - a)(a - b + c) / 2
//! L_{k,-k2}  = (b + c - a)(a + b - c) / 2
//! ```
//!
//! with `a = |k|`, `b = |k1|`, `c = |k2|`. The differences `a - b` and `a - c`
//! are carried explicitly, computed without cancellation from the dispersion
//! law.

use std::f64::consts::PI;

use crate::dispersion::DispersionLaw;
use crate::error::{Error, Result};

/// Relative slack allowed on the triangle inequality before a triad is
/// declared non-realizable.
const REALIZABILITY_TOL: f64 = 1e-12;

/// Resonant triad `(a; b, c)` with `a` the sum wave and `E_a = E_b + E_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnShellTriad {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    a_minus_b: f64,
    a_minus_c: f64,
    /// `b + c - a >= 0`
    excess: f64,
}

/// Pairwise dot products implied by `k = k1 + k2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriadDots {
    pub k1_k2: f64,
    pub k_k1: f64,
    pub k_k2: f64,
}

impl OnShellTriad {
    /// Triad with sum wave `a` and leg `c`, the other leg closing the energy.
    pub fn gain(law: &DispersionLaw, a: f64, c: f64) -> Result<Self> {
        if !(c >= 0.0 && a > 0.0) {
            return Err(Error::InvalidArgument {
                what: "triad magnitudes",
                reason: format!("need a > 0 and c >= 0, got a = {a}, c = {c}"),
            });
        }
        if c > a {
            return Err(Error::NoPartner { a, c });
        }
        let b = law.partner_gain_unchecked(a, c);
        let a_minus_b = law.gain_deficit(a, c);
        let a_minus_c = a - c;
        Self::assemble(a, b, c, a_minus_b, a_minus_c)
    }

    /// Triad in which `a` and `u` merge into `partner_loss(a, u)`.
    /// The returned triad has `b = a` and `c = u`.
    pub fn loss(law: &DispersionLaw, a: f64, u: f64) -> Result<Self> {
        if !(a > 0.0 && u >= 0.0) {
            return Err(Error::InvalidArgument {
                what: "triad magnitudes",
                reason: format!("need a > 0 and u >= 0, got a = {a}, u = {u}"),
            });
        }
        let top = law.partner_loss_unchecked(a, u);
        let top_minus_a = law.loss_excess(a, u);
        let top_minus_u = law.loss_excess(u, a);
        Self::assemble(top, a, u, top_minus_a, top_minus_u)
    }

    fn assemble(a: f64, b: f64, c: f64, a_minus_b: f64, a_minus_c: f64) -> Result<Self> {
        // Take the branch that subtracts the smaller difference from the larger leg,
        // written so that swapping b and c takes the mirrored branch.
        let excess = if c <= b { c - a_minus_b } else { b - a_minus_c };
        if excess < -REALIZABILITY_TOL * a {
            return Err(Error::NonRealizable {
                a,
                b,
                c,
                defect: excess,
            });
        }
        Ok(Self {
            a,
            b,
            c,
            a_minus_b,
            a_minus_c,
            excess: excess.max(0.0),
        })
    }

    /// Same triad with the legs exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            a: self.a,
            b: self.c,
            c: self.b,
            a_minus_b: self.a_minus_c,
            a_minus_c: self.a_minus_b,
            excess: self.excess,
        }
    }

    /// `L_{k1,k2}`
    pub fn l_legs(&self) -> f64 {
        0.5 * (self.a_minus_b + self.c) * (self.a_minus_c + self.b)
    }

    /// `L_{k,-k1}`
    pub fn l_sum_first(&self) -> f64 {
        0.5 * self.excess * (self.a_minus_b + self.c)
    }

    /// `L_{k,-k2}`
    pub fn l_sum_second(&self) -> f64 {
        0.5 * self.excess * (self.a_minus_c + self.b)
    }

    pub fn dots(&self) -> TriadDots {
        TriadDots {
            k1_k2: self.l_legs() - self.b * self.c,
            k_k1: self.a * self.b - self.l_sum_first(),
            k_k2: self.a * self.c - self.l_sum_second(),
        }
    }

    /// `(a + b + c)(b + c - a)(a - b + c)(a + b - c)`, i.e. sixteen times the
    /// squared area of the triangle with these side lengths.
    pub fn heron_product(&self) -> f64 {
        (self.a + self.b + self.c)
            * self.excess
            * (self.a_minus_b + self.c)
            * (self.a_minus_c + self.b)
    }

    /// `sqrt(heron_product())`, factor by factor so tiny triangles do not underflow.
    pub fn sqrt_heron_product(&self) -> f64 {
        (self.a + self.b + self.c).sqrt()
            * self.excess.sqrt()
            * (self.a_minus_b + self.c).sqrt()
            * (self.a_minus_c + self.b).sqrt()
    }

    pub fn a_minus_b(&self) -> f64 {
        self.a_minus_b
    }

    pub fn a_minus_c(&self) -> f64 {
        self.a_minus_c
    }
}

/// `L_{x,y} = x.y + |x||y|`
pub fn l_pair(x_mag: f64, y_mag: f64, dot_xy: f64) -> f64 {
    dot_xy + x_mag * y_mag
}

/// `1 / (8 pi sqrt(2 sigma))`
pub fn kernel_prefactor(sigma: f64) -> f64 {
    1.0 / (8.0 * PI * (2.0 * sigma).sqrt())
}

/// Default coupling in front of `|V|^2 / prefactor^2` in the collision
/// operator: the `4 pi` of the transition rate times the squared prefactor.
pub fn default_kernel_constant(sigma: f64) -> f64 {
    let p = kernel_prefactor(sigma);
    4.0 * PI * p * p
}

/// Interaction amplitude `V / prefactor`, unchecked.
pub(crate) fn amplitude(law: &DispersionLaw, t: &OnShellTriad) -> f64 {
    let (a, b, c) = (t.a, t.b, t.c);
    let p = t.a_minus_b + c;
    let m = t.a_minus_c + b;
    let sb = b.sqrt();
    let sc = c.sqrt();
    let bracket = (p * m / a.sqrt() - (t.excess * p / sc + t.excess * m / sb))
        / (2.0 * (a * (b * c)).sqrt());
    let e = law.energy_of(a) * (law.energy_of(b) * law.energy_of(c));
    e.sqrt() * bracket
}

/// `|V|^2 / prefactor^2`, the quantity stored in triad tables.
pub(crate) fn coupling(law: &DispersionLaw, t: &OnShellTriad) -> f64 {
    let v = amplitude(law, t);
    v * v
}

/// Interaction kernel `V_{k,k1,k2}` of an on-shell triad.
pub fn v_kernel(law: &DispersionLaw, t: &OnShellTriad) -> Result<f64> {
    if !(t.a > 0.0 && t.b > 0.0 && t.c > 0.0) {
        return Err(Error::InvalidArgument {
            what: "triad",
            reason: format!("kernel needs positive magnitudes, got ({}, {}, {})", t.a, t.b, t.c),
        });
    }
    Ok(kernel_prefactor(law.sigma()) * amplitude(law, t))
}
