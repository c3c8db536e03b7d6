//! Analytic reference solutions: plane waves, Mie series for spheres and the
//! Salisbury screen.
//!
//! Time dependence is `exp(-i omega t)` throughout, so lossy media have
//! `Im eps_r > 0` and the incident wave is `p exp(i kappa d . x)`.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use thiserror::Error;

use crate::geometry::{CVec3, Vec3};
use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("Mie series did not converge within {0} terms")]
    NotConverged(usize),
    #[error("invalid sphere: {0}")]
    InvalidSphere(&'static str),
    #[error("Salisbury screen: {0}")]
    Salisbury(&'static str),
}

/// Vacuum plane wave `p exp(i kappa d . x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneWave {
    pub direction: Vec3,
    pub polarization: CVec3,
    pub kappa: f64,
}

impl PlaneWave {
    pub fn new(direction: Vec3, polarization: CVec3, kappa: f64) -> Self {
        Self { direction, polarization, kappa }
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if !((self.direction.norm() - 1.0).abs() <= 1e-12) {
            return Err("direction must be a unit vector");
        }
        if !self.polarization.is_finite() || self.polarization.norm() == 0.0 {
            return Err("polarization must be finite and nonzero");
        }
        if self.polarization.dot_real(self.direction).norm() > 1e-12 * self.polarization.norm() {
            return Err("polarization must be orthogonal to the direction");
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err("wave number must be positive");
        }
        Ok(())
    }

    pub fn field(&self, x: Vec3) -> CVec3 {
        self.polarization * C64::new(0.0, self.kappa * self.direction.dot(x)).exp()
    }

    /// `curl E = i kappa d x E`.
    pub fn curl(&self, x: Vec3) -> CVec3 {
        self.field(x).rcross(self.direction) * C64::new(0.0, self.kappa)
    }
}

/// `p exp(i kappa d . x)`, checking `d . p = 0`.
pub fn plane_wave_exact(pw: &PlaneWave, x: Vec3) -> Result<CVec3, &'static str> {
    pw.validate()?;
    Ok(pw.field(x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SphereKind {
    Pec,
    Penetrable { eps_r: C64, mu_r: C64 },
}

/// Sphere of radius `radius` (m) illuminated at free-space wave number `kappa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MieSpec {
    pub radius: f64,
    pub kind: SphereKind,
    pub kappa: f64,
}

/// Mie coefficients `a_n`, `b_n` for `n = 1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct MieCoefficients {
    pub a: Vec<C64>,
    pub b: Vec<C64>,
}

/// `psi_n(x) = x j_n(x)` for `n = 0..=n_max`, real `x > 0`, by normalized
/// downward recurrence.
fn riccati_psi(n_max: usize, x: f64) -> Vec<f64> {
    let start = n_max + 20 + (x.abs() as usize);
    let mut psi = vec![0.0; start + 2];
    psi[start + 1] = 0.0;
    psi[start] = 1e-300;
    for n in (1..=start).rev() {
        psi[n - 1] = (2 * n + 1) as f64 / x * psi[n] - psi[n + 1];
        if psi[n - 1].abs() > 1e250 {
            let s = 1e-250;
            for v in psi[n - 1..].iter_mut() {
                *v *= s;
            }
        }
    }
    // psi_0 = sin x, psi_{-1} = cos x; normalise with whichever is larger
    let (s, c) = (x.sin(), x.cos());
    let scale = if s.abs() > 0.5 {
        s / psi[0]
    } else {
        // psi_{-1} from the recurrence: psi_{-1} = (1/x) psi_0 - psi_1
        let psi_m1 = psi[0] / x - psi[1];
        c / psi_m1
    };
    psi.truncate(n_max + 1);
    psi.iter_mut().for_each(|v| *v *= scale);
    psi
}

/// `chi_n(x) = -x y_n(x)` for `n = 0..=n_max` by upward recurrence.
fn riccati_chi(n_max: usize, x: f64) -> Vec<f64> {
    let mut chi = vec![0.0; n_max + 1];
    let mut prev = -x.sin();
    chi[0] = x.cos();
    for n in 1..=n_max {
        let cur = (2 * n - 1) as f64 / x * chi[n - 1] - prev;
        prev = chi[n - 1];
        chi[n] = cur;
    }
    chi
}

/// Logarithmic derivative `D_n(z) = psi_n'(z) / psi_n(z)` for `n = 0..=n_max`.
fn log_derivative(n_max: usize, z: C64) -> Vec<C64> {
    let start = n_max + 16 + z.norm() as usize;
    let mut d = C64::new(0.0, 0.0);
    let mut out = vec![C64::new(0.0, 0.0); n_max + 1];
    for n in (1..=start).rev() {
        let nz = C64::new(n as f64, 0.0) / z;
        d = nz - C64::new(1.0, 0.0) / (d + nz);
        if n - 1 <= n_max {
            out[n - 1] = d;
        }
    }
    out
}

impl MieSpec {
    fn validate(&self) -> Result<(), OracleError> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(OracleError::InvalidSphere("radius must be positive"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(OracleError::InvalidSphere("wave number must be positive"));
        }
        if let SphereKind::Penetrable { eps_r, mu_r } = self.kind {
            if eps_r.norm() == 0.0 || mu_r.norm() == 0.0 {
                return Err(OracleError::InvalidSphere("material parameters must be nonzero"));
            }
        }
        Ok(())
    }

    /// Size parameter `kappa a`.
    pub fn size_parameter(&self) -> f64 {
        self.kappa * self.radius
    }

    /// Coefficients up to `n_max`.
    pub fn coefficients_to(&self, n_max: usize) -> Result<MieCoefficients, OracleError> {
        self.validate()?;
        let x = self.size_parameter();
        let psi = riccati_psi(n_max, x);
        let chi = riccati_chi(n_max, x);
        let xi = |n: usize| C64::new(psi[n], -chi[n]);
        let mut a = Vec::with_capacity(n_max);
        let mut b = Vec::with_capacity(n_max);
        match self.kind {
            SphereKind::Pec => {
                for n in 1..=n_max {
                    let nx = n as f64 / x;
                    let dpsi = psi[n - 1] - nx * psi[n];
                    let dxi = xi(n - 1) - xi(n) * nx;
                    a.push(C64::new(dpsi, 0.0) / dxi);
                    b.push(C64::new(psi[n], 0.0) / xi(n));
                }
            }
            SphereKind::Penetrable { eps_r, mu_r } if eps_r == C64::new(1.0, 0.0) && mu_r == C64::new(1.0, 0.0) => {
                // same medium as the background: nothing scatters
                a.resize(n_max, C64::new(0.0, 0.0));
                b.resize(n_max, C64::new(0.0, 0.0));
            }
            SphereKind::Penetrable { eps_r, mu_r } => {
                let m = (eps_r * mu_r).sqrt();
                let dn = log_derivative(n_max, m * x);
                for n in 1..=n_max {
                    let nx = C64::new(n as f64 / x, 0.0);
                    let fa = mu_r * dn[n] / m + nx;
                    let fb = m * dn[n] / mu_r + nx;
                    a.push((fa * psi[n] - psi[n - 1]) / (fa * xi(n) - xi(n - 1)));
                    b.push((fb * psi[n] - psi[n - 1]) / (fb * xi(n) - xi(n - 1)));
                }
            }
        }
        if a.iter().chain(&b).any(|c| !c.is_finite()) {
            return Err(OracleError::NotConverged(n_max));
        }
        Ok(MieCoefficients { a, b })
    }

    /// Coefficients with the truncation extended until the last terms fall
    /// below `1e-12` of the leading ones; at least `kappa a + 10` terms.
    pub fn coefficients(&self) -> Result<MieCoefficients, OracleError> {
        let x = self.size_parameter();
        let mut n_max = (x + 4.0 * x.cbrt() + 10.0).ceil() as usize;
        for _ in 0..8 {
            let c = self.coefficients_to(n_max)?;
            let lead = c.a.iter().chain(&c.b).fold(0.0_f64, |m, v| m.max(v.norm()));
            let tail = c.a[n_max - 1].norm().max(c.b[n_max - 1].norm());
            if tail <= 1e-12 * lead.max(1e-300) || lead == 0.0 {
                return Ok(c);
            }
            n_max += 10;
        }
        Err(OracleError::NotConverged(n_max))
    }
}

impl MieCoefficients {
    /// Scattering amplitudes `(S1, S2)` at scattering angle `theta` (rad).
    pub fn amplitudes(&self, theta: f64) -> (C64, C64) {
        let mu = theta.cos();
        let (mut pi_prev, mut pi) = (0.0, 1.0);
        let mut s1 = C64::new(0.0, 0.0);
        let mut s2 = C64::new(0.0, 0.0);
        for n in 1..=self.a.len() {
            if n > 1 {
                let nf = n as f64;
                let next = (2.0 * nf - 1.0) / (nf - 1.0) * mu * pi - nf / (nf - 1.0) * pi_prev;
                pi_prev = pi;
                pi = next;
            }
            let nf = n as f64;
            let tau = nf * mu * pi - (nf + 1.0) * pi_prev;
            let f = (2.0 * nf + 1.0) / (nf * (nf + 1.0));
            s1 += (self.a[n - 1] * pi + self.b[n - 1] * tau) * f;
            s2 += (self.a[n - 1] * tau + self.b[n - 1] * pi) * f;
        }
        (s1, s2)
    }

    /// Scattering cross-section times `kappa^2`.
    pub fn scattering_efficiency_k2(&self) -> f64 {
        let mut s = 0.0;
        for n in 1..=self.a.len() {
            s += (2 * n + 1) as f64 * (self.a[n - 1].norm_sqr() + self.b[n - 1].norm_sqr());
        }
        2.0 * core::f64::consts::PI * s
    }
}

/// Bistatic RCS (m^2) for incidence along `+x` with `y` polarization,
/// observed at azimuths `phi_deg` in the `xy`-plane (the plane containing
/// the polarization, so `sigma = 4 pi |S2|^2 / kappa^2`).
pub fn mie_bistatic_rcs(spec: &MieSpec, phi_deg: &[f64]) -> Result<Vec<f64>, OracleError> {
    let c = spec.coefficients()?;
    let k2 = spec.kappa * spec.kappa;
    Ok(phi_deg
        .iter()
        .map(|&phi| {
            let (_, s2) = c.amplitudes(phi.to_radians().abs());
            4.0 * core::f64::consts::PI * s2.norm_sqr() / k2
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SalisburySpec {
    /// Gap between sheet and PEC plane (m); the sheet sits at `x = -h`.
    pub h: f64,
    pub eta: C64,
    pub kappa: f64,
}

/// Closed-form Salisbury-screen solution (unit `y`-polarized wave along `+x`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SalisburySolution {
    pub spec: SalisburySpec,
    pub r2: C64,
    pub q02: C64,
    pub q12: C64,
}

pub fn salisbury_solution(spec: SalisburySpec) -> Result<SalisburySolution, OracleError> {
    if !(spec.h > 0.0) {
        return Err(OracleError::Salisbury("gap must be positive"));
    }
    let i = C64::new(0.0, 1.0);
    let kh = spec.kappa * spec.h;
    let (s, c) = (kh.sin(), kh.cos());
    let one = C64::new(1.0, 0.0);
    let den = i * (spec.eta + one) * s - c;
    if den.norm() < 1e-14 {
        return Err(OracleError::Salisbury("resonant denominator"));
    }
    let r2 = -((i * (spec.eta - one) * s - c) * (-2.0 * i * kh).exp()) / den;
    let e = (-i * kh).exp();
    Ok(SalisburySolution { spec, r2, q02: e / (-den), q12: e / den })
}

impl SalisburySolution {
    /// `E_y(x)`: incident plus reflected wave left of the sheet, standing
    /// wave in the gap, zero behind the PEC plane.
    pub fn e_y(&self, x: f64) -> C64 {
        let i = C64::new(0.0, 1.0);
        let k = self.spec.kappa;
        if x < -self.spec.h {
            (i * k * x).exp() + self.r2 * (-i * k * x).exp()
        } else if x <= 0.0 {
            self.q02 * (i * k * x).exp() + self.q12 * (-i * k * x).exp()
        } else {
            C64::new(0.0, 0.0)
        }
    }

    /// `dE_y/dx` on either side (`left = true` for `x < -h` formulas).
    pub fn de_y(&self, x: f64, left: bool) -> C64 {
        let i = C64::new(0.0, 1.0);
        let k = self.spec.kappa;
        if left {
            i * k * ((i * k * x).exp() - self.r2 * (-i * k * x).exp())
        } else {
            i * k * (self.q02 * (i * k * x).exp() - self.q12 * (-i * k * x).exp())
        }
    }
}

/// Sheet parameter with zero reflection, `eta = 1 - i cot(kappa H)`.
pub fn salisbury_matched_eta(kappa: f64, h: f64) -> C64 {
    C64::new(1.0, -1.0 / (kappa * h).tan())
}
