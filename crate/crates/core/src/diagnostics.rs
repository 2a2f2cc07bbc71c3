//! Moments, the moment Hölder inequality, the energy budget, and the
//! stationarity scan for power-law spectra.

use serde::Serialize;

use crate::collision::CollisionOperator;
use crate::error::{Error, Result};
use crate::grid::Spectrum;

/// `M_n[f] = Σ f_i E_i^n vol_i`.
pub fn moment(spectrum: &Spectrum, n: f64) -> f64 {
    let g = &spectrum.grid;
    spectrum
        .values
        .iter()
        .zip(g.energies())
        .zip(g.volumes())
        .map(|((f, e), v)| f * pow_energy(*e, n) * v)
        .sum()
}

fn pow_energy(e: f64, n: f64) -> f64 {
    if n == 0.0 {
        1.0
    } else if n == 1.0 {
        e
    } else if n.fract() == 0.0 && n.abs() < 64.0 {
        e.powi(n as i32)
    } else {
        e.powf(n)
    }
}

/// `Σ f_i E_i^n (k_i^2 + rho k_i^4) vol_i`: the damping moment.
pub fn damping_moment(spectrum: &Spectrum, n: f64, rho: f64) -> f64 {
    let g = &spectrum.grid;
    spectrum
        .values
        .iter()
        .zip(g.nodes())
        .zip(g.energies())
        .zip(g.volumes())
        .map(|(((f, k), e), v)| {
            let k2 = k * k;
            f * pow_energy(*e, n) * (k2 + rho * k2 * k2) * v
        })
        .sum()
}

/// Moments recorded at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRecord {
    pub time: f64,
    /// `(exponent, M_exponent)` pairs in the configured order.
    pub moments: Vec<(f64, f64)>,
    /// `Σ f E k^2 vol`
    pub s2: f64,
    /// `Σ f E k^4 vol`
    pub s4: f64,
    /// `Σ f^2 vol`
    pub l2: f64,
    pub min_f: f64,
}

impl MomentRecord {
    pub fn capture(spectrum: &Spectrum, exponents: &[f64]) -> Self {
        let g = &spectrum.grid;
        let mut s2 = 0.0;
        let mut s4 = 0.0;
        let mut l2 = 0.0;
        for (((f, k), e), v) in spectrum
            .values
            .iter()
            .zip(g.nodes())
            .zip(g.energies())
            .zip(g.volumes())
        {
            let k2 = k * k;
            s2 += f * e * k2 * v;
            s4 += f * e * k2 * k2 * v;
            l2 += f * f * v;
        }
        Self {
            time: spectrum.time,
            moments: exponents.iter().map(|&n| (n, moment(spectrum, n))).collect(),
            s2,
            s4,
            l2,
            min_f: spectrum.min_value(),
        }
    }

    pub fn get(&self, n: f64) -> Option<f64> {
        self.moments.iter().find(|(e, _)| *e == n).map(|(_, m)| *m)
    }
}

/// Outcome of a Hölder interpolation check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderCheck {
    pub passed: bool,
    /// `M_n`
    pub lhs: f64,
    /// `M_p^((M-n)/(M-p)) M_M^((n-p)/(M-p))`
    pub rhs: f64,
    /// `(rhs - lhs) / rhs`, negative when violated.
    pub margin: f64,
}

pub const HOLDER_TOL: f64 = 1e-12;

/// `M_n <= M_p^((M-n)/(M-p)) M_M^((n-p)/(M-p))` for `M > n > p >= 0`.
pub fn holder_check(spectrum: &Spectrum, n: f64, p: f64, m: f64) -> Result<HolderCheck> {
    if !(m > n && n > p && p >= 0.0) {
        return Err(Error::InvalidArgument {
            what: "exponents",
            reason: format!("need M > n > p >= 0, got (p, n, M) = ({p}, {n}, {m})"),
        });
    }
    let lhs = moment(spectrum, n);
    let theta = (m - n) / (m - p);
    let rhs = moment(spectrum, p).powf(theta) * moment(spectrum, m).powf(1.0 - theta);
    let margin = if rhs > 0.0 { (rhs - lhs) / rhs } else if lhs == 0.0 { 0.0 } else { -1.0 };
    Ok(HolderCheck {
        passed: margin >= -HOLDER_TOL,
        lhs,
        rhs,
        margin,
    })
}

/// Normalized energy budget
/// `r = (dM_1/dt + 2ν (s2 + ρ s4)) / (M_1(0) / t_end)` at the interior samples,
/// with centred differences. Records must be equally spaced in time.
pub fn energy_budget_residual(records: &[MomentRecord], nu: f64, rho: f64) -> Result<Vec<(f64, f64)>> {
    if records.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: records.len(),
        });
    }
    let m1: Vec<f64> = records
        .iter()
        .map(|r| {
            r.get(1.0).ok_or(Error::InvalidArgument {
                what: "moment records",
                reason: "energy moment M_1 not recorded".into(),
            })
        })
        .collect::<Result<_>>()?;
    let t0 = records[0].time;
    let t_end = records[records.len() - 1].time;
    let dt = (t_end - t0) / (records.len() - 1) as f64;
    for (i, r) in records.iter().enumerate() {
        let expected = t0 + dt * i as f64;
        if (r.time - expected).abs() > 1e-9 * dt.max(t_end.abs()) {
            return Err(Error::InvalidArgument {
                what: "moment records",
                reason: format!("sample {i} at t = {} breaks uniform spacing {dt}", r.time),
            });
        }
    }
    let span = t_end - t0;
    let norm = if m1[0] != 0.0 { m1[0].abs() / span } else { 1.0 };
    Ok((1..records.len() - 1)
        .map(|i| {
            let dm = (m1[i + 1] - m1[i - 1]) / (2.0 * dt);
            let r = &records[i];
            (r.time, (dm + 2.0 * nu * (r.s2 + rho * r.s4)) / norm)
        })
        .collect())
}

/// Residual curve of the stationarity scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KzScan {
    /// `(exponent, residual)` on the requested grid of exponents.
    pub curve: Vec<(f64, f64)>,
    /// Index of the smallest residual in `curve`.
    pub argmin_index: usize,
    /// Minimizer refined by golden-section search between the neighbours of
    /// `argmin_index`.
    pub argmin: f64,
    pub band: (f64, f64),
}

/// Mean over band nodes of `|Q_i| / Q⁺_i` for `f = k^(-x)` on the grid and
/// zero outside it.
pub fn kz_residual(op: &CollisionOperator, x: f64, band: (f64, f64)) -> Result<f64> {
    let grid = op.grid();
    let spectrum = Spectrum::from_fn(grid.clone(), |k| k.powf(-x))?;
    let q = op.q_direct(&spectrum)?;
    let split = op.split(&spectrum)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, &k) in grid.nodes().iter().enumerate() {
        if k >= band.0 && k <= band.1 && split.plus[i] > 0.0 {
            sum += q[i].abs() / split.plus[i];
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidArgument {
            what: "band",
            reason: format!("no grid node inside [{}, {}]", band.0, band.1),
        });
    }
    Ok(sum / count as f64)
}

/// Scan `f = k^(-x)` over `exponents` and locate the most stationary `x`.
/// The band must keep a decade of clearance from both ends of the grid.
pub fn kz_exponent_scan(op: &CollisionOperator, exponents: &[f64], band: (f64, f64)) -> Result<KzScan> {
    let grid = op.grid();
    let (k_min, k_max) = (grid.k_min(), grid.k_max());
    let slack = 1.0 + 1e-9;
    if !(band.0 < band.1 && band.0 * slack >= 10.0 * k_min && band.1 <= k_max / 10.0 * slack) {
        return Err(Error::BandTooClose {
            lo: band.0,
            hi: band.1,
            k_min,
            k_max,
        });
    }
    if exponents.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: exponents.len(),
        });
    }
    let curve: Vec<(f64, f64)> = exponents
        .iter()
        .map(|&x| Ok((x, kz_residual(op, x, band)?)))
        .collect::<Result<_>>()?;
    let argmin_index = curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let lo = curve[argmin_index.saturating_sub(1)].0;
    let hi = curve[(argmin_index + 1).min(curve.len() - 1)].0;
    let argmin = golden_section(|x| kz_residual(op, x, band), lo, hi, 1e-7)?;
    Ok(KzScan {
        curve,
        argmin_index,
        argmin,
        band,
    })
}

fn golden_section(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}
