//! Power-law dispersion `E(k) = sqrt(sigma) * |k|^gamma` and the on-shell
//! partner magnitudes that close the resonance `E_a = E_b + E_c`.
//!
//! The capillary case is `gamma = 3/2`; any `gamma` in `(1, 2]` is accepted.
//! All routines work on magnitudes only.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_nonneg, Error, Result};

/// Spatial dimension of the wavenumber space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dimension {
    Two,
    Three,
}

impl Dimension {
    pub fn as_u8(self) -> u8 {
        match self {
            Dimension::Two => 2,
            Dimension::Three => 3,
        }
    }

    /// Area of the unit sphere `S^{d-1}`.
    pub fn sphere_area(self) -> f64 {
        match self {
            Dimension::Two => 2.0 * PI,
            Dimension::Three => 4.0 * PI,
        }
    }

    /// Factor left over after the angular integration around the axis `p`:
    /// the azimuth in 3-D, the two mirror branches in 2-D.
    pub fn angular_factor(self) -> f64 {
        match self {
            Dimension::Two => 2.0,
            Dimension::Three => 2.0 * PI,
        }
    }
}

impl TryFrom<u8> for Dimension {
    type Error = String;

    fn try_from(value: u8) -> std::result::Result<Self, Self::Error> {
        match value {
            2 => Ok(Dimension::Two),
            3 => Ok(Dimension::Three),
            other => Err(format!("dimension must be 2 or 3, got {other}")),
        }
    }
}

impl From<Dimension> for u8 {
    fn from(d: Dimension) -> u8 {
        d.as_u8()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionLaw {
    gamma: f64,
    sigma: f64,
    dim: Dimension,
    sqrt_sigma: f64,
}

impl Default for DispersionLaw {
    fn default() -> Self {
        Self::capillary(Dimension::Three)
    }
}

impl DispersionLaw {
    pub fn new(gamma: f64, sigma: f64, dim: Dimension) -> Result<Self> {
        if !(gamma > 1.0 && gamma <= 2.0) {
            return Err(Error::InvalidArgument {
                what: "gamma",
                reason: format!("must lie in (1, 2], got {gamma}"),
            });
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument {
                what: "sigma",
                reason: format!("must be positive, got {sigma}"),
            });
        }
        Ok(Self {
            gamma,
            sigma,
            dim,
            sqrt_sigma: sigma.sqrt(),
        })
    }

    /// Capillary waves with unit surface tension.
    pub fn capillary(dim: Dimension) -> Self {
        Self::new(1.5, 1.0, dim).expect("capillary parameters are valid")
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sqrt_sigma(&self) -> f64 {
        self.sqrt_sigma
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn with_dim(mut self, dim: Dimension) -> Self {
        self.dim = dim;
        self
    }

    /// `x^gamma`, with exact square-root / squaring paths for the common exponents.
    #[inline]
    pub(crate) fn pow_gamma(&self, x: f64) -> f64 {
        if self.gamma == 1.5 {
            x * x.sqrt()
        } else if self.gamma == 2.0 {
            x * x
        } else {
            x.powf(self.gamma)
        }
    }

    /// `y^(1/gamma)`, inverse of [`Self::pow_gamma`].
    #[inline]
    pub(crate) fn root_gamma(&self, y: f64) -> f64 {
        if self.gamma == 1.5 {
            let r = y.cbrt();
            r * r
        } else if self.gamma == 2.0 {
            y.sqrt()
        } else {
            y.powf(1.0 / self.gamma)
        }
    }

    /// `E(k)`, unchecked.
    #[inline]
    pub(crate) fn energy_of(&self, k: f64) -> f64 {
        self.sqrt_sigma * self.pow_gamma(k)
    }

    /// `E'(r) / r = gamma * sqrt(sigma) * r^(gamma - 2)`.
    #[inline]
    pub(crate) fn slope(&self, r: f64) -> f64 {
        self.gamma * self.sqrt_sigma * self.pow_gamma(r) / r
    }

    pub fn energy(&self, k_mag: f64) -> Result<f64> {
        check_nonneg("wavenumber magnitude", k_mag)?;
        Ok(self.energy_of(k_mag))
    }

    pub fn energy_inverse(&self, e: f64) -> Result<f64> {
        check_nonneg("energy", e)?;
        Ok(self.root_gamma(e / self.sqrt_sigma))
    }

    /// Magnitude `b` with `E_a = E_b + E_c` (the decay partner of `c` inside `a`).
    pub fn partner_gain(&self, a: f64, c: f64) -> Result<f64> {
        check_nonneg("wavenumber magnitude", c)?;
        if c > a {
            return Err(Error::NoPartner { a, c });
        }
        Ok(self.partner_gain_unchecked(a, c))
    }

    #[inline]
    pub(crate) fn partner_gain_unchecked(&self, a: f64, c: f64) -> f64 {
        self.root_gamma((self.pow_gamma(a) - self.pow_gamma(c)).max(0.0))
    }

    /// Magnitude `a'` with `E_{a'} = E_a + E_c` (the wave that absorbs `a` and `c`).
    pub fn partner_loss(&self, a: f64, c: f64) -> Result<f64> {
        check_nonneg("wavenumber magnitude", a)?;
        check_nonneg("wavenumber magnitude", c)?;
        Ok(self.partner_loss_unchecked(a, c))
    }

    #[inline]
    pub(crate) fn partner_loss_unchecked(&self, a: f64, c: f64) -> f64 {
        self.root_gamma(self.pow_gamma(a) + self.pow_gamma(c))
    }

    /// `a - partner_gain(a, c)` without cancellation for `c << a`.
    pub(crate) fn gain_deficit(&self, a: f64, c: f64) -> f64 {
        if a == 0.0 {
            return 0.0;
        }
        let t = self.pow_gamma(c / a);
        -a * ((-t).ln_1p() / self.gamma).exp_m1()
    }

    /// `partner_loss(a, c) - a` without cancellation for `c << a`.
    pub(crate) fn loss_excess(&self, a: f64, c: f64) -> f64 {
        if a == 0.0 {
            return c;
        }
        let t = self.pow_gamma(c / a);
        a * (t.ln_1p() / self.gamma).exp_m1()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn law() -> DispersionLaw {
        DispersionLaw::capillary(Dimension::Three)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn energy_examples() {
        let l = law();
        assert_eq!(l.energy(0.0).unwrap(), 0.0);
        assert_eq!(l.energy(1.0).unwrap(), 1.0);
        assert_eq!(l.energy(4.0).unwrap(), 8.0);
        assert!(l.energy(-1.0).is_err());

        let s = DispersionLaw::new(1.5, 4.0, Dimension::Two).unwrap();
        assert!(rel(s.energy(4.0).unwrap(), 16.0) < 1e-15);
        let g = DispersionLaw::new(1.25, 1.0, Dimension::Two).unwrap();
        assert!(rel(g.energy(3.0).unwrap(), 3f64.powf(1.25)) < 1e-15);
    }

    #[test]
    fn energy_inverse_examples() {
        let l = law();
        assert_eq!(l.energy_inverse(0.0).unwrap(), 0.0);
        assert_eq!(l.energy_inverse(1.0).unwrap(), 1.0);
        assert!(rel(l.energy_inverse(8.0).unwrap(), 4.0) < 1e-15);
        assert!(l.energy_inverse(-1e-300).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DispersionLaw::new(1.0, 1.0, Dimension::Three).is_err());
        assert!(DispersionLaw::new(2.5, 1.0, Dimension::Three).is_err());
        assert!(DispersionLaw::new(1.5, 0.0, Dimension::Three).is_err());
        assert!(DispersionLaw::new(f64::NAN, 1.0, Dimension::Three).is_err());
        assert!(Dimension::try_from(4).is_err());
    }

    #[test]
    fn partner_gain_examples() {
        let l = law();
        assert_eq!(l.partner_gain(1.0, 1.0).unwrap(), 0.0);
        let a = 2f64.powf(2.0 / 3.0);
        assert!(rel(l.partner_gain(a, 1.0).unwrap(), 1.0) < 1e-14);

        let b = l.partner_gain(2.0, 1.0).unwrap();
        let expected = (2f64.powf(1.5) - 1.0).powf(2.0 / 3.0);
        assert!(rel(b, expected) < 1e-14);
        assert!((b - 1.49527).abs() < 5e-5);
        let closure = l.energy(2.0).unwrap() - l.energy(b).unwrap() - l.energy(1.0).unwrap();
        assert!(closure.abs() < 1e-14 * l.energy(2.0).unwrap());

        assert!(matches!(l.partner_gain(1.0, 1.5), Err(Error::NoPartner { .. })));
    }

    #[test]
    fn partner_loss_examples() {
        let l = law();
        assert_eq!(l.partner_loss(3.7, 0.0).unwrap(), 3.7);
        let eq = l.partner_loss(1.0, 1.0).unwrap();
        assert!(rel(eq, 2f64.powf(2.0 / 3.0)) < 1e-15);
        assert!((eq - 1.5874).abs() < 5e-5);

        let ap = l.partner_loss(1.0, 2.0).unwrap();
        assert!(rel(ap, (1.0 + 2f64.powf(1.5)).powf(2.0 / 3.0)) < 1e-14);
        assert!((ap - 2.44726).abs() < 5e-5);
        let closure = l.energy(ap).unwrap() - l.energy(1.0).unwrap() - l.energy(2.0).unwrap();
        assert!(closure.abs() < 1e-14 * l.energy(ap).unwrap());
        assert!(l.partner_loss(-1.0, 1.0).is_err());
    }

    #[test]
    fn deficits_match_direct_differences() {
        let l = law();
        for &(a, c) in &[(1.0, 0.5), (3.0, 2.9), (2.0, 0.3)] {
            let b = l.partner_gain(a, c).unwrap();
            assert!(rel(l.gain_deficit(a, c), a - b) < 1e-12);
            let ap = l.partner_loss(a, c).unwrap();
            assert!(rel(l.loss_excess(a, c), ap - a) < 1e-12);
        }
        // c << a: a - b ~ c^gamma / (gamma a^(gamma-1))
        let d = l.gain_deficit(1.0, 1e-8);
        assert!(rel(d, 1e-12 / 1.5) < 1e-6);
        let e = l.loss_excess(1.0, 1e-8);
        assert!(rel(e, 1e-12 / 1.5) < 1e-6);
    }

    #[test]
    fn round_trip_thousand_samples() {
        use rand::{Rng, SeedableRng};
        let l = law();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let e = 10f64.powf(rng.gen_range(-6.0..6.0));
            let back = l.energy(l.energy_inverse(e).unwrap()).unwrap();
            assert!(rel(back, e) < 1e-13, "e = {e}, back = {back}");
        }
    }

    proptest! {
        #[test]
        fn superadditive(a in 0.0f64..1e3, b in 0.0f64..1e3, gamma in 1.01f64..2.0) {
            let l = DispersionLaw::new(gamma, 1.0, Dimension::Three).unwrap();
            let lhs = l.energy(a).unwrap() + l.energy(b).unwrap();
            let rhs = l.energy(a + b).unwrap();
            prop_assert!(lhs <= rhs * (1.0 + 1e-14));
        }

        // The map c -> b has condition number ~ (a/c)^gamma, so the round trip
        // is checked where that factor stays O(100).
        #[test]
        fn gain_partner_involution(a in 1e-3f64..1e3, ratio in 0.05f64..1.0) {
            let l = law();
            let c = a * ratio;
            let b = l.partner_gain(a, c).unwrap();
            let back = l.partner_gain(a, b).unwrap();
            prop_assert!(rel(back, c) < 1e-13, "a={} c={} back={}", a, c, back);
        }

        #[test]
        fn loss_partner_dominates(a in 0.0f64..1e3, c in 0.0f64..1e3) {
            let l = law();
            let ap = l.partner_loss(a, c).unwrap();
            prop_assert!(ap >= a.max(c));
            let closure = l.energy(ap).unwrap() - l.energy(a).unwrap() - l.energy(c).unwrap();
            prop_assert!(closure.abs() <= 1e-14 * l.energy(ap).unwrap().max(1e-300));
        }
    }
}
