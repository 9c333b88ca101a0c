//! Single-user SNR under MRC: exact sums, closed forms and limits.
//!
//! All values are linear (not dB). `rho` is the transmit power to noise
//! power ratio `p / σ²`.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::em_channel::{check_clearance, power_unchecked};
use crate::error::{domain, Error, Result};
use crate::scenario::{ArrayConfig, UserLocation};

/// An SNR evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrQuery {
    pub config: ArrayConfig,
    pub user: UserLocation,
    pub rho: f64,
}

impl SnrQuery {
    pub fn new(config: ArrayConfig, user: UserLocation, rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(domain(format!("rho must be positive, got {rho}")));
        }
        Ok(Self { config, user, rho })
    }
}

/// Array extents used by the continuous closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Aperture {
    /// `M_x Δx` by `M_y Δy`.
    #[default]
    Discrete,
    /// Explicit physical lengths `L_x`, `L_y` in metres.
    Lengths { lx: f64, ly: f64 },
}

impl Aperture {
    fn extents(self, cfg: &ArrayConfig) -> (f64, f64) {
        match self {
            Aperture::Discrete => (cfg.length_x(), cfg.length_y()),
            Aperture::Lengths { lx, ly } => (lx, ly),
        }
    }
}

fn f_unchecked(a: f64, b: f64, u_z: f64) -> f64 {
    let r = (a * a + b * b + u_z * u_z).sqrt();
    (a * b).atan2(u_z * r) + 0.5 * u_z * a / (a * a + u_z * u_z) * b / r
}

fn f_no_pol_unchecked(a: f64, b: f64, u_z: f64) -> f64 {
    let r = (a * a + b * b + u_z * u_z).sqrt();
    1.5 * (a * b).atan2(u_z * r)
}

/// Auxiliary function `F(a, b) = atan(ab / (u_z R)) + (u_z/2) a/(a²+u_z²) b/R`
/// with `R = √(a²+b²+u_z²)`. `a` is the y extent, `b` the x extent.
pub fn aux_f(a: f64, b: f64, u_z: f64) -> Result<f64> {
    if !(u_z > 0.0) {
        return Err(domain(format!("u_z must be positive, got {u_z}")));
    }
    Ok(f_unchecked(a, b, u_z))
}

/// `F` without the polarisation factor: `(3/2) atan(ab / (u_z R))`.
pub fn aux_f_no_polarization(a: f64, b: f64, u_z: f64) -> Result<f64> {
    if !(u_z > 0.0) {
        return Err(domain(format!("u_z must be positive, got {u_z}")));
    }
    Ok(f_no_pol_unchecked(a, b, u_z))
}

/// Inclusion-exclusion of an antiderivative `g(a, b)` over the rectangle
/// `[x1, x2] x [y1, y2]` of user-relative coordinates.
fn rectangle(g: impl Fn(f64, f64) -> f64, x1: f64, x2: f64, y1: f64, y2: f64) -> f64 {
    g(y2, x2) - g(y1, x2) - g(y2, x1) + g(y1, x1)
}

/// Normalised power `(η / 6π) ∫∫` collected by the absolute rectangle
/// `[x1, x2] x [y1, y2]` on the array plane, per unit `ρ`.
pub(crate) fn rectangle_power(
    eta: f64,
    u: &UserLocation,
    (x1, x2): (f64, f64),
    (y1, y2): (f64, f64),
) -> f64 {
    if u.z() == 0.0 {
        return 0.0;
    }
    let g = |a, b| f_unchecked(a, b, u.z());
    eta / (6.0 * PI) * rectangle(g, x1 - u.x(), x2 - u.x(), y1 - u.y(), y2 - u.y())
}

/// Exact MRC SNR `ρ Σ ξ` over all elements.
pub fn snr_upa_sum(q: &SnrQuery) -> Result<f64> {
    check_clearance(&q.config, &q.user)?;
    let total: f64 = q
        .config
        .indices()
        .map(|idx| power_unchecked(&q.config, &q.user, idx))
        .sum();
    Ok(q.rho * total)
}

/// Closed-form UPA SNR: the four-term `F` combination over the aperture.
/// Zero when `u_z = 0`.
pub fn snr_upa_closed(q: &SnrQuery, aperture: Aperture) -> f64 {
    let (lx, ly) = aperture.extents(&q.config);
    q.rho * rectangle_power(
        q.config.eta(),
        &q.user,
        (-lx / 2.0, lx / 2.0),
        (-ly / 2.0, ly / 2.0),
    )
}

/// Closed-form UPA SNR with the polarisation mismatch factor set to one.
pub fn snr_upa_no_polarization(q: &SnrQuery, aperture: Aperture) -> f64 {
    let u = &q.user;
    if u.z() == 0.0 {
        return 0.0;
    }
    let (lx, ly) = aperture.extents(&q.config);
    let g = |a, b| f_no_pol_unchecked(a, b, u.z());
    let sum = rectangle(
        g,
        -lx / 2.0 - u.x(),
        lx / 2.0 - u.x(),
        -ly / 2.0 - u.y(),
        ly / 2.0 - u.y(),
    );
    q.rho * q.config.eta() / (6.0 * PI) * sum
}

/// The UPA closed form written in direction cosines `Ψ = u / r_o` with all
/// extents normalised by `r_o`.
pub fn snr_upa_angles(
    r_o: f64,
    psi_e: f64,
    psi_a: f64,
    config: &ArrayConfig,
    rho: f64,
    aperture: Aperture,
) -> Result<f64> {
    if !(r_o > 0.0 && r_o.is_finite()) {
        return Err(domain(format!("r_o must be positive, got {r_o}")));
    }
    let u = UserLocation::from_polar(r_o, psi_e, psi_a)?;
    if psi_e == FRAC_PI_2 || u.z() == 0.0 {
        return Ok(0.0);
    }
    let [px, py, pz] = u.direction_cosines();
    let (lx, ly) = aperture.extents(config);
    let (hx, hy) = (lx / (2.0 * r_o), ly / (2.0 * r_o));
    let g = |a, b| f_unchecked(a, b, pz);
    let sum = g(hy - py, hx - px) + g(hy - py, hx + px) + g(hy + py, hx - px) + g(hy + py, hx + px);
    Ok(rho * config.eta() / (6.0 * PI) * sum)
}

/// Which infinite-array limit to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsymptoticKind {
    /// Discrete aperture with polarisation mismatch: `ρη/3`.
    DiscretePolarized,
    /// Discrete aperture, mismatch ignored: `ρη/2`.
    DiscreteUnpolarized,
    /// Fully occupied aperture: `ρ/3`.
    Continuous,
}

pub fn snr_asymptotic(kind: AsymptoticKind, eta: f64, rho: f64) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(domain(format!("eta must lie in (0, 1], got {eta}")));
    }
    Ok(match kind {
        AsymptoticKind::DiscretePolarized => rho * eta / 3.0,
        AsymptoticKind::DiscreteUnpolarized => rho * eta / 2.0,
        AsymptoticKind::Continuous => rho / 3.0,
    })
}

/// View angles `(α, β)` of a user on the array axis:
/// `tan α = (L_y/2)/u_z`, `cos β = (L_x/2)/√((L_x/2)²+(L_y/2)²+u_z²)`.
pub fn view_angles(lx: f64, ly: f64, u_z: f64) -> (f64, f64) {
    let (hx, hy) = (lx / 2.0, ly / 2.0);
    let alpha = hy.atan2(u_z);
    let beta = (hx / (hx * hx + hy * hy + u_z * u_z).sqrt()).acos();
    (alpha, beta)
}

/// SNR of a user on the array axis expressed through its view angles:
/// `ρ (2η/3π) {atan(tan α cos β) + ½ sin α cos α cos β}`.
pub fn snr_perpendicular_geometric(q: &SnrQuery, aperture: Aperture) -> Result<f64> {
    let u = &q.user;
    if u.x() != 0.0 || u.y() != 0.0 || !(u.z() > 0.0) {
        return Err(domain("user must lie on the positive z axis"));
    }
    let (lx, ly) = aperture.extents(&q.config);
    let (alpha, beta) = view_angles(lx, ly, u.z());
    let (sa, ca, cb) = (alpha.sin(), alpha.cos(), beta.cos());
    // atan(tan α cos β) written without tan so α = π/2 stays finite.
    let term = (sa * cb).atan2(ca) + 0.5 * sa * ca * cb;
    Ok(q.rho * 2.0 * q.config.eta() / (3.0 * PI) * term)
}

fn ula_checks(cfg: &ArrayConfig, u_y: f64, u_z: f64) -> Result<()> {
    if cfg.m_y() != 1 {
        return Err(Error::UnsupportedConfiguration(format!(
            "linear-array formula needs M_y = 1, got {}",
            cfg.m_y()
        )));
    }
    if u_y == 0.0 && u_z == 0.0 {
        return Err(Error::Singularity("user lies on the array axis".into()));
    }
    Ok(())
}

fn f_ula(a: f64, u_y: f64, u_z: f64) -> f64 {
    let (a2, y2, z2) = (a * a, u_y * u_y, u_z * u_z);
    let t = a2 + y2 + z2;
    a * (a2 * y2 + 3.0 * z2 * t) * u_z / (3.0 * (y2 + z2).powi(2) * t.powf(1.5))
}

/// Closed-form SNR of a linear array along x (`M_y = 1`).
pub fn snr_ula_closed(q: &SnrQuery) -> Result<f64> {
    let cfg = &q.config;
    let u = &q.user;
    ula_checks(cfg, u.y(), u.z())?;
    let h = cfg.length_x() / 2.0;
    let sum = f_ula(h - u.x(), u.y(), u.z()) + f_ula(h + u.x(), u.y(), u.z());
    Ok(q.rho * cfg.area() / (4.0 * PI * cfg.delta_x()) * sum)
}

/// Linear-array SNR for a user facing the array centre (`u_x = u_y = 0`):
/// `ρ A / (2π Δx u_z) · sin γ` with `γ` half the view angle. Returns
/// `(snr, γ)`.
pub fn snr_ula_view_angle(q: &SnrQuery) -> Result<(f64, f64)> {
    let cfg = &q.config;
    let u = &q.user;
    ula_checks(cfg, u.y(), u.z())?;
    if u.x() != 0.0 || u.y() != 0.0 {
        return Err(domain("user must lie on the positive z axis"));
    }
    let gamma = (cfg.length_x() / 2.0).atan2(u.z());
    let snr = q.rho * cfg.area() / (2.0 * PI * cfg.delta_x() * u.z()) * gamma.sin();
    Ok((snr, gamma))
}

/// Infinite linear-array limit; `polarized = false` drops the mismatch.
pub fn snr_ula_asymptotic(
    u_y: f64,
    u_z: f64,
    config: &ArrayConfig,
    rho: f64,
    polarized: bool,
) -> Result<f64> {
    if !(u_z > 0.0) {
        return Err(domain(format!("u_z must be positive, got {u_z}")));
    }
    let (y2, z2) = (u_y * u_y, u_z * u_z);
    let scale = rho * config.area() / (2.0 * PI * config.delta_x());
    Ok(if polarized {
        scale * u_z * (y2 + 3.0 * z2) / (3.0 * (y2 + z2).powi(2))
    } else {
        scale * u_z / (y2 + z2)
    })
}

/// Difference between the unpolarised and polarised linear-array limits:
/// `ρ A/(3πΔx) · u_z u_y² / (u_y²+u_z²)²`.
pub fn polarization_gap(u_y: f64, u_z: f64, config: &ArrayConfig, rho: f64) -> Result<f64> {
    if !(u_z > 0.0) {
        return Err(domain(format!("u_z must be positive, got {u_z}")));
    }
    let y2 = u_y * u_y;
    Ok(rho * config.area() / (3.0 * PI * config.delta_x()) * u_z * y2
        / (y2 + u_z * u_z).powi(2))
}

/// Far-field reference SNR, linear in `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FarFieldForm {
    /// Isotropic elements: `ρ λ² M / ((4π)² r²)`.
    Isotropic,
    /// Projected aperture: `ρ M A cos ψ_e / (4π r²)`.
    #[default]
    Projected,
}

pub fn snr_far_field_reference(q: &SnrQuery, form: FarFieldForm) -> f64 {
    let cfg = &q.config;
    let r = q.user.r_o();
    let m = cfg.m() as f64;
    match form {
        FarFieldForm::Isotropic => q.rho * cfg.lambda().powi(2) * m / ((4.0 * PI).powi(2) * r * r),
        FarFieldForm::Projected => {
            q.rho * m * cfg.area() * q.user.psi_e().cos() / (4.0 * PI * r * r)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{DEFAULT_LAMBDA, DEFAULT_RHO_DB};

    fn rho() -> f64 {
        crate::scenario::db_to_linear(DEFAULT_RHO_DB)
    }

    fn upa(m_x: usize, m_y: usize) -> ArrayConfig {
        ArrayConfig::half_wavelength(DEFAULT_LAMBDA, m_x, m_y).unwrap()
    }

    fn user(x: f64, y: f64, z: f64) -> UserLocation {
        UserLocation::new(x, y, z).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn aux_f_zeros_and_limit() {
        for b in [-3.0, 0.0, 0.5, 100.0] {
            assert_eq!(aux_f(0.0, b, 2.0).unwrap(), 0.0);
            assert_eq!(aux_f(b, 0.0, 2.0).unwrap(), 0.0);
        }
        let big = aux_f(1e9, 1e9, 1.0).unwrap();
        assert!((big - PI / 2.0).abs() < 1e-8);
        assert!(aux_f(1.0, 1.0, 0.0).is_err());
        assert!(aux_f_no_polarization(1.0, 1.0, -1.0).is_err());
    }

    /// Numerical antiderivative check: ∂²F/∂a∂b equals the normalised
    /// power density `(6π/η) · (1/4π) u_z (b² + u_z²) / r⁵` (η = 1).
    #[test]
    fn aux_f_mixed_derivative_is_density() {
        let u_z = 1.3;
        let h = 1e-4;
        for (a, b) in [(0.4, 0.7), (-1.2, 2.5), (3.0, -0.2)] {
            let f = |a, b| aux_f(a, b, u_z).unwrap();
            let d = (f(a + h, b + h) - f(a + h, b - h) - f(a - h, b + h) + f(a - h, b - h))
                / (4.0 * h * h);
            let r2: f64 = a * a + b * b + u_z * u_z;
            let density = 6.0 * PI / (4.0 * PI) * u_z * (b * b + u_z * u_z) / r2.powf(2.5);
            assert!(rel(d, density) < 1e-5, "{d} vs {density}");
        }
    }

    #[test]
    fn upa_in_plane_user_is_zero() {
        let q = SnrQuery::new(upa(9, 9), user(2.0, 1.0, 0.0), rho()).unwrap();
        assert_eq!(snr_upa_sum(&q).unwrap(), 0.0);
        assert_eq!(snr_upa_closed(&q, Aperture::Discrete), 0.0);
    }

    #[test]
    fn single_element_sum() {
        let c = upa(1, 1);
        let u = user(0.3, 0.2, 4.0);
        let q = SnrQuery::new(c, u, rho()).unwrap();
        let xi = crate::em_channel::element_power(
            &c,
            &u,
            crate::scenario::AntennaIndex::new(0.0, 0.0).unwrap(),
        )
        .unwrap();
        assert_eq!(snr_upa_sum(&q).unwrap(), rho() * xi);
    }

    #[test]
    fn closed_form_matches_sum_64x64() {
        let q = SnrQuery::new(upa(64, 64), user(10.0, 10.0, 10.0), rho()).unwrap();
        let s = snr_upa_sum(&q).unwrap();
        let c = snr_upa_closed(&q, Aperture::Discrete);
        assert!(rel(c, s) < 1e-3, "{c} vs {s}");
    }

    #[test]
    fn closed_form_matches_sum_near_users() {
        let c = upa(40, 30);
        for u in [user(0.0, 0.0, 1.0), user(0.7, -0.4, 0.8), user(-2.0, 1.0, 3.0)] {
            let q = SnrQuery::new(c, u, 1.0).unwrap();
            let s = snr_upa_sum(&q).unwrap();
            let cf = snr_upa_closed(&q, Aperture::Discrete);
            assert!(rel(cf, s) < 1e-3, "{u:?}: {cf} vs {s}");
        }
    }

    #[test]
    fn symmetric_user_has_four_equal_terms() {
        let c = upa(50, 20);
        let q = SnrQuery::new(c, user(0.0, 0.0, 2.0), rho()).unwrap();
        let f = aux_f(c.length_y() / 2.0, c.length_x() / 2.0, 2.0).unwrap();
        let expect = rho() * c.eta() / (6.0 * PI) * 4.0 * f;
        assert!(rel(snr_upa_closed(&q, Aperture::Discrete), expect) < 1e-14);
    }

    #[test]
    fn infinite_aperture_limit() {
        let c = upa(10, 10);
        let q = SnrQuery::new(c, user(1.0, -2.0, 5.0), rho()).unwrap();
        let inf = Aperture::Lengths { lx: 1e6, ly: 1e6 };
        let limit = rho() * c.eta() / 3.0;
        assert!(rel(snr_upa_closed(&q, inf), limit) < 1e-3);
        assert!((limit - 1.061e8).abs() / 1.061e8 < 1e-3);
    }

    #[test]
    fn no_polarization_orderings() {
        let c = upa(100, 100);
        for u in [user(0.0, 0.0, 1.0), user(3.0, 2.0, 0.5), user(-1.0, 4.0, 8.0)] {
            let q = SnrQuery::new(c, u, rho()).unwrap();
            let p = snr_upa_closed(&q, Aperture::Discrete);
            let w = snr_upa_no_polarization(&q, Aperture::Discrete);
            assert!(p <= w * (1.0 + 1e-12));
            assert!(w <= rho() * c.eta() / 2.0);
        }
    }

    #[test]
    fn no_polarization_far_user_and_long_array() {
        let c = upa(16, 16);
        let far = 100.0 * c.length_x().max(c.length_y());
        let q = SnrQuery::new(c, user(0.5, -0.5, far), rho()).unwrap();
        let r = snr_upa_closed(&q, Aperture::Discrete) / snr_upa_no_polarization(&q, Aperture::Discrete);
        assert!((r - 1.0).abs() < 0.01);

        let q = SnrQuery::new(c, user(0.0, 0.0, 3.0), rho()).unwrap();
        let ap = Aperture::Lengths { lx: c.length_x(), ly: 1e6 };
        let r = snr_upa_closed(&q, ap) / snr_upa_no_polarization(&q, ap);
        assert!((r - 2.0 / 3.0).abs() < 0.01 * 2.0 / 3.0, "{r}");
    }

    #[test]
    fn angular_form_matches_cartesian() {
        let c = upa(200, 30);
        let q = SnrQuery::new(c, user(0.0, 0.0, 7.0), rho()).unwrap();
        let a = snr_upa_angles(7.0, 0.0, 0.0, &c, rho(), Aperture::Discrete).unwrap();
        assert!(rel(a, snr_upa_closed(&q, Aperture::Discrete)) < 1e-10);

        for (r, e, az) in [(3.0, 0.4, 1.0), (20.0, 1.2, 4.0), (0.9, 0.05, 2.8)] {
            let u = UserLocation::from_polar(r, e, az).unwrap();
            let q = SnrQuery::new(c, u, rho()).unwrap();
            let a = snr_upa_angles(r, e, az, &c, rho(), Aperture::Discrete).unwrap();
            assert!(rel(a, snr_upa_closed(&q, Aperture::Discrete)) < 1e-10);
        }
        let edge = snr_upa_angles(5.0, PI / 2.0, 0.3, &c, rho(), Aperture::Discrete).unwrap();
        assert_eq!(edge, 0.0);
        assert!(snr_upa_angles(0.0, 0.0, 0.0, &c, rho(), Aperture::Discrete).is_err());
    }

    #[test]
    fn asymptotic_values() {
        let eta = 1.0 / PI;
        let p = snr_asymptotic(AsymptoticKind::DiscretePolarized, eta, 1e9).unwrap();
        assert!(rel(p, 1e9 / (3.0 * PI)) < 1e-15);
        assert_eq!(snr_asymptotic(AsymptoticKind::Continuous, eta, 1.0).unwrap(), 1.0 / 3.0);
        for (e, r) in [(0.2, 5.0), (1.0, 1e9)] {
            let a = snr_asymptotic(AsymptoticKind::DiscreteUnpolarized, e, r).unwrap();
            let b = snr_asymptotic(AsymptoticKind::DiscretePolarized, e, r).unwrap();
            assert!((a / b - 1.5).abs() < 1e-14);
        }
        assert!(snr_asymptotic(AsymptoticKind::Continuous, 0.0, 1.0).is_err());
        assert!(snr_asymptotic(AsymptoticKind::Continuous, 1.5, 1.0).is_err());
    }

    #[test]
    fn continuous_aperture_reaches_one_third() {
        let l = 0.05;
        let c = ArrayConfig::new(10, 10, l, l, l, l, DEFAULT_LAMBDA).unwrap();
        assert_eq!(c.eta(), 1.0);
        let q = SnrQuery::new(c, user(0.0, 0.0, 1.0), 1.0).unwrap();
        let v = snr_upa_closed(&q, Aperture::Lengths { lx: 1e6, ly: 1e6 });
        assert!(rel(v, 1.0 / 3.0) < 1e-3);
    }

    #[test]
    fn geometric_form() {
        let c = upa(10, 10);
        let q = SnrQuery::new(c, user(0.0, 0.0, 2.0), rho()).unwrap();
        let inf = Aperture::Lengths { lx: 1e12, ly: 1e12 };
        let (alpha, beta) = view_angles(1e12, 1e12, 2.0);
        assert!((alpha - PI / 2.0).abs() < 1e-9 && (beta - PI / 4.0).abs() < 1e-9);
        let g = snr_perpendicular_geometric(&q, inf).unwrap();
        assert!(rel(g, rho() * c.eta() / 3.0) < 1e-6);

        let (_, beta) = view_angles(1e12, 3.0, 2.0);
        assert!((beta.cos() - 1.0).abs() < 1e-9);

        let off = SnrQuery::new(c, user(0.1, 0.0, 2.0), rho()).unwrap();
        assert!(snr_perpendicular_geometric(&off, Aperture::Discrete).is_err());
    }

    #[test]
    fn ula_closed_matches_sum() {
        let c = upa(1000, 1);
        let q = SnrQuery::new(c, user(0.0, 5.0, 10.0), rho()).unwrap();
        let s = snr_upa_sum(&q).unwrap();
        let cf = snr_ula_closed(&q).unwrap();
        assert!(rel(cf, s) < 1e-3, "{cf} vs {s}");
        assert!(matches!(
            snr_ula_closed(&SnrQuery::new(upa(3, 3), user(0.0, 1.0, 1.0), 1.0).unwrap()),
            Err(Error::UnsupportedConfiguration(_))
        ));
        let axis = SnrQuery::new(c, user(100.0, 0.0, 0.0), 1.0).unwrap();
        assert!(matches!(snr_ula_closed(&axis), Err(Error::Singularity(_))));
    }

    #[test]
    fn ula_view_angle_form() {
        let c = upa(500, 1);
        let q = SnrQuery::new(c, user(0.0, 0.0, 4.0), rho()).unwrap();
        let (v, gamma) = snr_ula_view_angle(&q).unwrap();
        assert!(rel(v, snr_ula_closed(&q).unwrap()) < 1e-12);
        let direct = rho() * c.area() / (2.0 * PI * c.delta_x() * 4.0) * gamma.sin();
        assert!(rel(v, direct) < 1e-14);
        assert!(rel(v, snr_upa_sum(&q).unwrap()) < 1e-3);
    }

    #[test]
    fn ula_asymptotic_independent_of_u_x() {
        let c = upa(10_000_000, 1);
        let a = snr_ula_closed(&SnrQuery::new(c, user(0.0, 3.0, 10.0), rho()).unwrap()).unwrap();
        let b = snr_ula_closed(&SnrQuery::new(c, user(50.0, 3.0, 10.0), rho()).unwrap()).unwrap();
        assert!(rel(a, b) < 1e-3);
        let lim = snr_ula_asymptotic(3.0, 10.0, &c, rho(), true).unwrap();
        assert!(rel(a, lim) < 1e-3);
    }

    #[test]
    fn ula_asymptotic_and_gap() {
        let c = upa(1, 1);
        let p = snr_ula_asymptotic(0.0, 4.0, &c, rho(), true).unwrap();
        let w = snr_ula_asymptotic(0.0, 4.0, &c, rho(), false).unwrap();
        let base = rho() * c.area() / (2.0 * PI * c.delta_x() * 4.0);
        assert!(rel(p, base) < 1e-14 && rel(w, base) < 1e-14);
        for u_y in [0.5, 3.0, 40.0] {
            let p = snr_ula_asymptotic(u_y, 4.0, &c, rho(), true).unwrap();
            let w = snr_ula_asymptotic(u_y, 4.0, &c, rho(), false).unwrap();
            let g = polarization_gap(u_y, 4.0, &c, rho()).unwrap();
            assert!(w >= p);
            assert!(rel(w - p, g) < 1e-12);
        }
        assert_eq!(polarization_gap(0.0, 4.0, &c, rho()).unwrap(), 0.0);
        let tiny = polarization_gap(1e6, 4.0, &c, rho()).unwrap();
        assert!(tiny < 1e-9 * polarization_gap(4.0, 4.0, &c, rho()).unwrap());
    }

    #[test]
    fn gap_peak_on_grid() {
        let c = upa(1, 1);
        let u_z = 10.0;
        let grid: Vec<f64> = (1..=40_000).map(|i| i as f64 * 1e-3).collect();
        let vals: Vec<f64> = grid
            .iter()
            .map(|&y| polarization_gap(y, u_z, &c, 1.0).unwrap())
            .collect();
        let (imax, _) = vals
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        assert!((grid[imax] - u_z).abs() < 2e-3, "peak at {}", grid[imax]);
        assert!(vals[..imax].windows(2).all(|w| w[1] >= w[0]));
        assert!(vals[imax..].windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn far_field_reference() {
        let c = upa(20, 20);
        let u = user(0.0, 0.0, 30.0);
        let q = SnrQuery::new(c, u, rho()).unwrap();
        let q2 = SnrQuery::new(upa(40, 20), u, rho()).unwrap();
        for form in [FarFieldForm::Isotropic, FarFieldForm::Projected] {
            let a = snr_far_field_reference(&q, form);
            let b = snr_far_field_reference(&q2, form);
            assert!(rel(b, 2.0 * a) < 1e-14);
        }
        let ma = snr_far_field_reference(&q, FarFieldForm::Projected);
        assert!(rel(ma, rho() * 400.0 * c.area() / (4.0 * PI * 900.0)) < 1e-14);

        let u = UserLocation::from_polar(1e4, 0.6, 0.0).unwrap();
        let q = SnrQuery::new(upa(32, 32), u, rho()).unwrap();
        let r = snr_upa_closed(&q, Aperture::Discrete)
            / snr_far_field_reference(&q, FarFieldForm::Projected);
        assert!((r - 1.0).abs() < 0.01);

        // Off the xoz plane the far-field mismatch factor 1 - Ψy² remains.
        let u = UserLocation::from_polar(1e4, 0.6, 1.1).unwrap();
        let q = SnrQuery::new(upa(32, 32), u, rho()).unwrap();
        let r = snr_upa_closed(&q, Aperture::Discrete)
            / snr_far_field_reference(&q, FarFieldForm::Projected);
        let psi_y = u.direction_cosines()[1];
        assert!((r - (1.0 - psi_y * psi_y)).abs() < 1e-3);
    }
}
