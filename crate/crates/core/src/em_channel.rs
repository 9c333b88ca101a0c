//! Electromagnetic near-field channel.
//!
//! The channel to element `(m_x, m_y)` is `√ξ · exp(-jχ)` where the power
//! `ξ` combines free-space pathloss, the projection of the incident
//! direction on the array normal, and the mismatch between the y-polarised
//! source current and the received field:
//!
//! ```text
//! ξ = A/(4π) · u_z ((m_xΔx - u_x)² + u_z²) / r⁵
//! χ = 2π r / λ
//! ```
//!
//! with `r` the user-to-element-centre distance.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scenario::{AntennaIndex, ArrayConfig, UserLocation};

/// Users closer than this many element sides to an element centre are
/// rejected: the point-element approximation no longer holds there.
pub const MIN_DISTANCE_IN_ELEMENT_SIDES: f64 = 10.0;

/// Free-space intrinsic impedance placeholder. It cancels in the power
/// normalisation, so unity is used.
pub const KAPPA: f64 = 1.0;

pub(crate) fn guard_distance(cfg: &ArrayConfig) -> f64 {
    MIN_DISTANCE_IN_ELEMENT_SIDES * cfg.a_x().max(cfg.a_y())
}

pub(crate) fn power_unchecked(cfg: &ArrayConfig, u: &UserLocation, idx: AntennaIndex) -> f64 {
    if u.z() == 0.0 {
        return 0.0;
    }
    let dx = idx.m_x() * cfg.delta_x() - u.x();
    let dy = idx.m_y() * cfg.delta_y() - u.y();
    let s = dx * dx + u.z() * u.z();
    let r2 = s + dy * dy;
    cfg.area() / (4.0 * PI) * u.z() * s / (r2 * r2 * r2.sqrt())
}

/// Channel power `ξ` between the user and element `idx`.
pub fn element_power(cfg: &ArrayConfig, u: &UserLocation, idx: AntennaIndex) -> Result<f64> {
    cfg.check(idx)?;
    if u.z() == 0.0 {
        return Ok(0.0);
    }
    let r = cfg.distance_unchecked(u, idx);
    if r < guard_distance(cfg) {
        return Err(Error::Singularity(format!(
            "user {:?} is {r:.3e} m from element ({}, {})",
            u.coords(),
            idx.m_x(),
            idx.m_y()
        )));
    }
    Ok(power_unchecked(cfg, u, idx))
}

/// Unwrapped channel phase `χ = 2π r / λ` in radians.
pub fn element_phase(cfg: &ArrayConfig, u: &UserLocation, idx: AntennaIndex) -> Result<f64> {
    Ok(cfg.wavenumber() * cfg.element_distance(u, idx)?)
}

/// Checks that no element is within the singularity guard of `u`.
pub(crate) fn check_clearance(cfg: &ArrayConfig, u: &UserLocation) -> Result<()> {
    if u.z() == 0.0 {
        return Ok(());
    }
    let g = guard_distance(cfg);
    if u.z() >= g {
        return Ok(());
    }
    // Only the element nearest in x/y can violate the guard first.
    let near = |coord: f64, delta: f64, half: f64| {
        let m = (coord / delta + half).round().clamp(0.0, 2.0 * half) - half;
        m * delta - coord
    };
    let dx = near(u.x(), cfg.delta_x(), cfg.max_offset_x());
    let dy = near(u.y(), cfg.delta_y(), cfg.max_offset_y());
    let r = (dx * dx + dy * dy + u.z() * u.z()).sqrt();
    if r < g {
        Err(Error::Singularity(format!(
            "user {:?} is {r:.3e} m from the nearest element",
            u.coords()
        )))
    } else {
        Ok(())
    }
}

/// Channel from one user to every antenna, in enumeration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    config: ArrayConfig,
    entries: DVector<Complex64>,
}

impl ChannelVector {
    pub fn config(&self) -> &ArrayConfig {
        &self.config
    }
    pub fn entries(&self) -> &DVector<Complex64> {
        &self.entries
    }
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    /// `‖h‖²`.
    pub fn norm_squared(&self) -> f64 {
        self.entries.norm_squared()
    }
    pub fn into_entries(self) -> DVector<Complex64> {
        self.entries
    }
}

/// `h = [√ξ exp(-jχ)]` over all antennas.
pub fn channel_vector(cfg: &ArrayConfig, u: &UserLocation) -> Result<ChannelVector> {
    check_clearance(cfg, u)?;
    let k0 = cfg.wavenumber();
    let entries = DVector::from_iterator(
        cfg.m(),
        cfg.indices().map(|idx| {
            let xi = power_unchecked(cfg, u, idx);
            if xi == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let chi = k0 * cfg.distance_unchecked(u, idx);
            Complex64::from_polar(xi.sqrt(), -chi)
        }),
    );
    Ok(ChannelVector {
        config: *cfg,
        entries,
    })
}

/// `M x K` channel matrix; column `k` belongs to user `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    config: ArrayConfig,
    data: DMatrix<Complex64>,
}

impl ChannelMatrix {
    /// Wraps an arbitrary matrix, e.g. a synthetic test channel. The row
    /// count must match the array size.
    pub fn from_matrix(config: ArrayConfig, data: DMatrix<Complex64>) -> Result<Self> {
        if data.nrows() != config.m() {
            return Err(crate::error::domain(format!(
                "matrix has {} rows, array has {} antennas",
                data.nrows(),
                config.m()
            )));
        }
        Ok(Self { config, data })
    }

    pub fn config(&self) -> &ArrayConfig {
        &self.config
    }
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }
    pub fn antennas(&self) -> usize {
        self.data.nrows()
    }
    pub fn users(&self) -> usize {
        self.data.ncols()
    }
    pub fn column(&self, k: usize) -> DVector<Complex64> {
        self.data.column(k).into_owned()
    }

    /// Rows `rows` and columns `cols`, in the given orders.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> DMatrix<Complex64> {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| self.data[(rows[r], cols[c])])
    }

    /// Writes one row per antenna: `antenna,re_0,im_0,re_1,im_1,...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "antenna")?;
        for k in 0..self.users() {
            write!(out, ",re_{k},im_{k}")?;
        }
        writeln!(out)?;
        for m in 0..self.antennas() {
            write!(out, "{m}")?;
            for k in 0..self.users() {
                let h = self.data[(m, k)];
                write!(out, ",{:.16e},{:.16e}", h.re, h.im)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Stacks the channel vectors of `users` (generated in parallel).
pub fn channel_matrix(cfg: &ArrayConfig, users: &[UserLocation]) -> Result<ChannelMatrix> {
    let columns = users
        .par_iter()
        .map(|u| channel_vector(cfg, u).map(ChannelVector::into_entries))
        .collect::<Result<Vec<_>>>()?;
    let data = if columns.is_empty() {
        DMatrix::zeros(cfg.m(), 0)
    } else {
        DMatrix::from_columns(&columns)
    };
    Ok(ChannelMatrix { config: *cfg, data })
}

/// Field at array point `p` radiated by a unit y-directed current at `u`:
/// `(-jκ / 2λr) [ (p_x-u_x)(p_y-u_y)/r², 1-((p_y-u_y)/r)², -u_z(p_y-u_y)/r² ] e^{-j2πr/λ}`.
pub fn green_function_y(p: [f64; 3], u: &UserLocation, lambda: f64) -> Result<[Complex64; 3]> {
    let r_vec = [p[0] - u.x(), p[1] - u.y(), p[2] - u.z()];
    let r = (r_vec[0] * r_vec[0] + r_vec[1] * r_vec[1] + r_vec[2] * r_vec[2]).sqrt();
    if r == 0.0 {
        return Err(Error::Singularity("field point coincides with the source".into()));
    }
    let r2 = r * r;
    let bracket = [
        r_vec[0] * r_vec[1] / r2,
        1.0 - r_vec[1] * r_vec[1] / r2,
        r_vec[2] * r_vec[1] / r2,
    ];
    let scale = Complex64::new(0.0, -KAPPA / (2.0 * lambda * r))
        * Complex64::from_polar(1.0, -2.0 * PI * r / lambda);
    Ok(bracket.map(|b| scale * b))
}

/// Planar-wavefront channel of a linear array along x (`M_y = 1`):
/// constant amplitude, phase advancing by `2πΔx sinψ / λ` per element,
/// entries indexed from the first element.
///
/// `sinψ = u_x / r_o` and the amplitude is `√(A cosψ_e / (4π r_o²))`, the
/// per-element power of the far-field reference SNR.
pub fn far_field_channel(cfg: &ArrayConfig, u: &UserLocation) -> Result<ChannelVector> {
    if cfg.m_y() != 1 {
        return Err(Error::UnsupportedConfiguration(format!(
            "far-field channel needs a linear array, got M_y = {}",
            cfg.m_y()
        )));
    }
    let amplitude = far_field_amplitude(cfg, u);
    let sin_psi = u.x() / u.r_o();
    let step = 2.0 * PI * cfg.delta_x() / cfg.lambda() * sin_psi;
    let entries = DVector::from_iterator(
        cfg.m(),
        (0..cfg.m()).map(|m| Complex64::from_polar(amplitude, -step * m as f64)),
    );
    Ok(ChannelVector {
        config: *cfg,
        entries,
    })
}

pub fn far_field_amplitude(cfg: &ArrayConfig, u: &UserLocation) -> f64 {
    let r = u.r_o();
    (cfg.area() * u.psi_e().cos() / (4.0 * PI * r * r)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{sample_users, Region, DEFAULT_LAMBDA};

    fn cfg(m_x: usize, m_y: usize) -> ArrayConfig {
        ArrayConfig::half_wavelength(DEFAULT_LAMBDA, m_x, m_y).unwrap()
    }

    fn idx(x: f64, y: f64) -> AntennaIndex {
        AntennaIndex::new(x, y).unwrap()
    }

    #[test]
    fn broadside_power_is_free_space() {
        let c = cfg(5, 5);
        let u = UserLocation::new(0.0, 0.0, 10.0).unwrap();
        let xi = element_power(&c, &u, idx(0.0, 0.0)).unwrap();
        let expect = c.area() / (4.0 * PI * 100.0);
        assert!((xi - expect).abs() < 1e-15 * expect);
    }

    #[test]
    fn in_plane_user_has_zero_power() {
        let c = cfg(5, 5);
        let u = UserLocation::new(3.0, 0.0, 0.0).unwrap();
        assert_eq!(element_power(&c, &u, idx(0.0, 0.0)).unwrap(), 0.0);
        let h = channel_vector(&c, &u).unwrap();
        assert!(h.entries().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn coincident_user_is_a_singularity() {
        let c = cfg(5, 5);
        let u = UserLocation::new(c.delta_x(), 0.0, 1e-3).unwrap();
        assert!(matches!(
            element_power(&c, &u, idx(1.0, 0.0)),
            Err(Error::Singularity(_))
        ));
        assert!(matches!(channel_vector(&c, &u), Err(Error::Singularity(_))));
    }

    #[test]
    fn power_factorises_into_pathloss_projection_polarisation() {
        let c = cfg(7, 5);
        let u = UserLocation::new(0.7, -0.4, 2.5).unwrap();
        for i in c.indices() {
            let p = c.antenna_center(i).unwrap();
            let (dx, dy) = (p[0] - u.x(), p[1] - u.y());
            let r = (dx * dx + dy * dy + u.z() * u.z()).sqrt();
            let pathloss = 1.0 / (4.0 * PI * r * r);
            let projection = u.z() / r;
            let polarisation = (dx * dx + u.z() * u.z()) / (r * r);
            let expect = pathloss * projection * polarisation * c.area();
            let xi = element_power(&c, &u, i).unwrap();
            assert!((xi - expect).abs() < 1e-13 * expect);
        }
    }

    #[test]
    fn mirror_symmetry() {
        let c = cfg(7, 5);
        let u = UserLocation::new(0.0, 0.3, 1.5).unwrap();
        for i in c.indices() {
            let m = idx(-i.m_x(), i.m_y());
            assert_eq!(
                element_power(&c, &u, i).unwrap(),
                element_power(&c, &u, m).unwrap()
            );
        }
        let u = UserLocation::new(0.2, 0.0, 1.5).unwrap();
        for i in c.indices() {
            let m = idx(i.m_x(), -i.m_y());
            assert_eq!(
                element_power(&c, &u, i).unwrap(),
                element_power(&c, &u, m).unwrap()
            );
        }
    }

    #[test]
    fn power_decreases_with_y_offset() {
        let c = cfg(3, 41);
        let u = UserLocation::new(0.05, 0.0, 0.8).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..=20 {
            let xi = element_power(&c, &u, idx(0.0, k as f64)).unwrap();
            assert!(xi <= last);
            last = xi;
        }
    }

    /// Midpoint-rule integral of the element power density over the
    /// element's effective area.
    fn quadrature_power(c: &ArrayConfig, u: &UserLocation, i: AntennaIndex, n: usize) -> f64 {
        let p = c.antenna_center(i).unwrap();
        let (hx, hy) = (c.a_x() / n as f64, c.a_y() / n as f64);
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                let px = p[0] - c.a_x() / 2.0 + (a as f64 + 0.5) * hx;
                let py = p[1] - c.a_y() / 2.0 + (b as f64 + 0.5) * hy;
                let (dx, dy) = (px - u.x(), py - u.y());
                let r = (dx * dx + dy * dy + u.z() * u.z()).sqrt();
                acc += 1.0 / (4.0 * PI * r * r) * (u.z() / r) * (dx * dx + u.z() * u.z())
                    / (r * r);
            }
        }
        acc * hx * hy
    }

    #[test]
    fn point_element_matches_area_quadrature() {
        let c = cfg(9, 9);
        let far = 100.0 * c.a_x().max(c.a_y());
        let users = [
            UserLocation::new(0.3, 0.2, far).unwrap(),
            UserLocation::new(-far, 1.0, far * 0.5).unwrap(),
            UserLocation::new(2.0, -3.0, far).unwrap(),
        ];
        for u in &users {
            for i in [idx(0.0, 0.0), idx(4.0, -4.0), idx(-2.0, 3.0)] {
                let q = quadrature_power(&c, u, i, 40);
                let xi = element_power(&c, u, i).unwrap();
                assert!((xi - q).abs() < 1e-3 * q, "{xi} vs {q}");
            }
        }
    }

    #[test]
    fn phase_examples() {
        let c = cfg(3, 3);
        let u = UserLocation::new(0.0, 0.0, c.lambda()).unwrap();
        let chi = element_phase(&c, &u, idx(0.0, 0.0)).unwrap();
        assert!((chi - 2.0 * PI).abs() < 1e-12);
        let u = UserLocation::new(0.0, 0.0, 10.0).unwrap();
        assert_eq!(
            element_phase(&c, &u, idx(1.0, 1.0)).unwrap(),
            element_phase(&c, &u, idx(-1.0, -1.0)).unwrap()
        );
        let u = UserLocation::new(0.4, 0.9, 3.0).unwrap();
        for i in c.indices() {
            let d = c.element_distance(&u, i).unwrap();
            assert_eq!(element_phase(&c, &u, i).unwrap(), 2.0 * PI / c.lambda() * d);
        }
    }

    #[test]
    fn channel_vector_entries_follow_power_and_phase() {
        let c = cfg(6, 4);
        let u = UserLocation::new(0.2, -0.3, 1.7).unwrap();
        let h = channel_vector(&c, &u).unwrap();
        assert_eq!(h.len(), 24);
        for (n, i) in c.indices().enumerate() {
            let xi = element_power(&c, &u, i).unwrap();
            let chi = element_phase(&c, &u, i).unwrap();
            let e = h.entries()[n];
            assert!((e.norm_sqr() - xi).abs() < 1e-14 * xi);
            let want = Complex64::from_polar(1.0, -chi);
            assert!((e / e.norm() - want).norm() < 1e-9);
        }
    }

    #[test]
    fn single_antenna_channel() {
        let c = cfg(1, 1);
        let u = UserLocation::new(1.0, 2.0, 3.0).unwrap();
        let h = channel_vector(&c, &u).unwrap();
        let xi = element_power(&c, &u, idx(0.0, 0.0)).unwrap();
        assert!((h.norm_squared() - xi).abs() < 1e-15 * xi);
    }

    #[test]
    fn channel_matrix_columns() {
        let c = cfg(20, 10);
        let u = UserLocation::new(1.0, 0.0, 3.0).unwrap();
        let h = channel_matrix(&c, &[u]).unwrap();
        assert_eq!(h.column(0), channel_vector(&c, &u).unwrap().into_entries());
        let h = channel_matrix(&c, &[u, u]).unwrap();
        assert_eq!(h.column(0), h.column(1));

        let c = cfg(1000, 10);
        let users = sample_users(&Region::DEFAULT, 20, 3).unwrap();
        let h = channel_matrix(&c, &users).unwrap();
        assert_eq!((h.antennas(), h.users()), (10_000, 20));
        assert!(h.matrix().iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    }

    #[test]
    fn channel_csv_layout() {
        let c = cfg(2, 1);
        let u = UserLocation::new(0.0, 0.0, 2.0).unwrap();
        let h = channel_matrix(&c, &[u]).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "antenna,re_0,im_0");
        assert_eq!(lines.len(), 3);
        let fields: Vec<f64> = lines[1].split(',').skip(1).map(|s| s.parse().unwrap()).collect();
        assert_eq!(Complex64::new(fields[0], fields[1]), h.matrix()[(0, 0)]);
    }

    #[test]
    fn green_function_cases() {
        let lambda = DEFAULT_LAMBDA;
        let u = UserLocation::new(0.0, 0.0, 4.0).unwrap();
        let g = green_function_y([0.0, 0.0, 0.0], &u, lambda).unwrap();
        assert!((g[1].norm() - KAPPA / (2.0 * lambda * 4.0)).abs() < 1e-12);
        assert_eq!(g[0].norm(), 0.0);
        assert_eq!(g[2].norm(), 0.0);

        let u = UserLocation::new(0.3, 0.5, 2.0).unwrap();
        let g = green_function_y([1.0, 0.5, 0.0], &u, lambda).unwrap();
        assert!(g[0].norm() < 1e-15 && g[2].norm() < 1e-15);

        assert!(green_function_y([0.3, 0.5, 2.0], &u, lambda).is_err());
    }

    #[test]
    fn green_function_reproduces_power_density() {
        let lambda = DEFAULT_LAMBDA;
        let pts = [
            ([0.1, -0.2, 0.0], [1.0, 0.4, 2.0]),
            ([-3.0, 1.0, 0.0], [2.0, -1.5, 0.7]),
            ([0.0, 5.0, 0.0], [0.0, 0.0, 1.0]),
        ];
        for (p, uc) in pts {
            let u = UserLocation::new(uc[0], uc[1], uc[2]).unwrap();
            let g = green_function_y(p, &u, lambda).unwrap();
            let norm2: f64 = g.iter().map(|z| z.norm_sqr()).sum();
            let (dx, dy) = (p[0] - u.x(), p[1] - u.y());
            let r = (dx * dx + dy * dy + u.z() * u.z()).sqrt();
            let lhs = lambda * lambda / (KAPPA * KAPPA * PI) * norm2 * (u.z() / r);
            let rhs = 1.0 / (4.0 * PI * r * r) * (u.z() / r) * (dx * dx + u.z() * u.z())
                / (r * r);
            assert!((lhs - rhs).abs() < 1e-12 * rhs);
        }
    }

    #[test]
    fn far_field_channel_shape() {
        let c = cfg(64, 1);
        let u = UserLocation::new(0.0, 0.0, 50.0).unwrap();
        let h = far_field_channel(&c, &u).unwrap();
        let first = h.entries()[0];
        assert!(h.entries().iter().all(|z| (z - first).norm() < 1e-15));

        let u = UserLocation::new(10.0, 0.0, 50.0).unwrap();
        let h = far_field_channel(&c, &u).unwrap();
        let a = far_field_amplitude(&c, &u);
        assert!(h.entries().iter().all(|z| (z.norm() - a).abs() < 1e-15));
        let self_corr = h.entries().dotc(h.entries()).norm() / h.norm_squared();
        assert!((self_corr - 1.0).abs() < 1e-12);
        assert!((h.norm_squared() - 64.0 * a * a).abs() < 1e-12 * h.norm_squared());

        assert!(matches!(
            far_field_channel(&cfg(4, 4), &u),
            Err(Error::UnsupportedConfiguration(_))
        ));
    }
}
