//! Near/far-field boundaries.
//!
//! Two criteria are supported. The phase criterion bounds the worst-case
//! error of a planar-wavefront phase approximation across the array by
//! `π/8`. The power criterion compares the weakest and strongest element
//! powers, `v(u) = min ξ / max ξ`, against a threshold `v_t`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::em_channel::{check_clearance, guard_distance, power_unchecked};
use crate::error::{domain, Error, Result};
use crate::scenario::{AntennaIndex, ArrayConfig, UserLocation};

/// Quadratic form `Q` shared by the phase error and its boundary distance.
fn phase_quadratic(cfg: &ArrayConfig, psi_x: f64, psi_y: f64) -> f64 {
    let hx = (cfg.m_x() as f64 - 1.0) / 2.0;
    let hy = (cfg.m_y() as f64 - 1.0) / 2.0;
    let (ex, ey) = (hx * cfg.delta_x(), hy * cfg.delta_y());
    ex * ex * (1.0 - psi_x * psi_x)
        + ey * ey * (1.0 - psi_y * psi_y)
        + 2.0 * cfg.delta_x() * cfg.delta_y() * (psi_x * psi_y).abs() * hx * hy
}

/// Worst-case phase error (radians) of the planar-wavefront approximation,
/// to second order in the element offsets.
pub fn max_phase_error(cfg: &ArrayConfig, u: &UserLocation) -> f64 {
    let [px, py, _] = u.direction_cosines();
    PI / cfg.lambda() * phase_quadratic(cfg, px, py) / u.r_o()
}

/// Distance at which the worst-case phase error equals `π/8` in the given
/// direction.
pub fn phase_boundary_distance(cfg: &ArrayConfig, psi_e: f64, psi_a: f64) -> Result<f64> {
    if !(0.0..=PI / 2.0).contains(&psi_e) {
        return Err(domain(format!("psi_e must lie in [0, π/2], got {psi_e}")));
    }
    let px = psi_e.sin() * psi_a.cos();
    let py = psi_e.sin() * psi_a.sin();
    Ok(phase_quadratic(cfg, px, py) / (cfg.lambda() / 8.0))
}

/// Classical Fraunhofer distance `2D²/λ` with `D` the array diagonal.
pub fn fraunhofer_distance(cfg: &ArrayConfig) -> f64 {
    let (lx, ly) = (cfg.length_x(), cfg.length_y());
    2.0 * (lx * lx + ly * ly) / cfg.lambda()
}

/// `f_ξ(s) = s / (s + v)^{5/2}`, the element power up to constants.
pub fn f_xi(s: f64, v: f64) -> f64 {
    s / (s + v).powf(2.5)
}

/// Derivative of [`f_xi`] in `s`: `(s+v)^{-7/2} (v - 3s/2)`.
pub fn f_xi_derivative(s: f64, v: f64) -> f64 {
    (s + v).powf(-3.5) * (v - 1.5 * s)
}

/// Strongest and weakest elements for a user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremalElements {
    pub argmax: AntennaIndex,
    pub argmin: AntennaIndex,
    pub max_power: f64,
    pub min_power: f64,
}

impl ExtremalElements {
    pub fn variation(&self) -> f64 {
        self.min_power / self.max_power
    }
}

/// One axis of the lattice: offsets `{-h, ..., h}` with spacing `delta`.
#[derive(Clone, Copy)]
struct Axis {
    h: f64,
    delta: f64,
}

impl Axis {
    fn sign(u: f64) -> f64 {
        // u = 0 counts as positive.
        if u < 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    /// Offset nearest to coordinate `u`: `floor(·+1/2)` rounding, clamped
    /// to the lattice. For odd counts this is
    /// `f_|min|(f_int(u/Δ), f_±(h))`.
    fn nearest(self, u: f64) -> f64 {
        let t = u / self.delta + self.h;
        (t + 0.5).floor().clamp(0.0, 2.0 * self.h) - self.h
    }

    /// Edge offset on the far side of `u`.
    fn farthest(self, u: f64) -> f64 {
        -Axis::sign(u) * self.h
    }

    /// Lattice offsets bracketing continuous offset `t`.
    fn bracket(self, t: f64) -> [f64; 2] {
        let k = (t + self.h).floor();
        [k, k + 1.0].map(|k| k.clamp(0.0, 2.0 * self.h) - self.h)
    }
}

fn axes(cfg: &ArrayConfig) -> (Axis, Axis) {
    (
        Axis {
            h: cfg.max_offset_x(),
            delta: cfg.delta_x(),
        },
        Axis {
            h: cfg.max_offset_y(),
            delta: cfg.delta_y(),
        },
    )
}

/// Closed-form strongest and weakest elements.
///
/// Along y the power falls with distance, so the strongest row is the one
/// nearest the user and the weakest is the far edge. Along x the power is
/// unimodal in `s = (m_xΔx-u_x)² + u_z²` with its peak at `s = 2v/3`: the
/// weakest column is an end of the `s` range, and the strongest column is a
/// lattice neighbour of the peak, the nearest column or the far edge.
pub fn power_extremal_elements(cfg: &ArrayConfig, u: &UserLocation) -> Result<ExtremalElements> {
    if !(u.z() > 0.0) {
        return Err(domain("extremal elements need u_z > 0"));
    }
    check_clearance(cfg, u)?;
    let (ax, ay) = axes(cfg);
    let s_of = |m: f64| {
        let d = m * ax.delta - u.x();
        d * d + u.z() * u.z()
    };
    let near_x = ax.nearest(u.x());
    let far_x = ax.farthest(u.x());
    let (s_min, s_max) = (s_of(near_x), s_of(far_x));

    // Maximum.
    let max_y = ay.nearest(u.y());
    let v_star = (max_y * ay.delta - u.y()).powi(2);
    let peak = 2.0 * v_star / 3.0;
    let max_x = if peak < s_min {
        near_x
    } else if peak > s_max {
        far_x
    } else {
        let root = (peak - u.z() * u.z()).max(0.0).sqrt();
        let (t1, t2) = ((u.x() + root) / ax.delta, (u.x() - root) / ax.delta);
        let mut best = near_x;
        let mut best_f = f_xi(s_of(best), v_star);
        for m in ax.bracket(t1).into_iter().chain(ax.bracket(t2)) {
            let f = f_xi(s_of(m), v_star);
            if f > best_f {
                best = m;
                best_f = f;
            }
        }
        best
    };

    // Minimum.
    let min_y = ay.farthest(u.y());
    let v_low = (min_y * ay.delta - u.y()).powi(2);
    let min_x = if f_xi(s_min, v_low) <= f_xi(s_max, v_low) {
        near_x
    } else {
        far_x
    };

    let argmax = AntennaIndex::new(max_x, max_y)?;
    let argmin = AntennaIndex::new(min_x, min_y)?;
    Ok(ExtremalElements {
        argmax,
        argmin,
        max_power: power_unchecked(cfg, u, argmax),
        min_power: power_unchecked(cfg, u, argmin),
    })
}

/// Power variation `v(u) = min ξ / max ξ` in `(0, 1]`.
pub fn power_variation(cfg: &ArrayConfig, u: &UserLocation) -> Result<f64> {
    Ok(power_extremal_elements(cfg, u)?.variation())
}

/// Tolerance on `v` for the power-boundary search.
pub const POWER_BOUNDARY_TOL: f64 = 1e-6;
const BISECTION_CAP: usize = 60;
const EXPANSION_CAP: usize = 200;

fn check_threshold(v_t: f64) -> Result<()> {
    if v_t > 0.0 && v_t < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("v_t must lie in (0, 1), got {v_t}")))
    }
}

/// Height `u_z` above `(u_x, u_y)` at which `v = v_t`, found by bisection.
pub fn power_boundary_distance(cfg: &ArrayConfig, u_x: f64, u_y: f64, v_t: f64) -> Result<f64> {
    check_threshold(v_t)?;
    let v_at = |z: f64| -> Result<f64> { power_variation(cfg, &UserLocation::new(u_x, u_y, z)?) };

    let mut lo = guard_distance(cfg) * (1.0 + 1e-9);
    let v_lo = v_at(lo)?;
    if (v_lo - v_t).abs() <= POWER_BOUNDARY_TOL {
        return Ok(lo);
    }
    if v_lo > v_t {
        return Err(Error::SearchFailure(format!(
            "v = {v_lo:.6} already exceeds {v_t} next to the array at ({u_x}, {u_y})"
        )));
    }
    let mut hi = (2.0 * lo).max(1.0);
    let mut expansions = 0;
    while v_at(hi)? <= v_t {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > EXPANSION_CAP {
            return Err(Error::SearchFailure(format!(
                "no bracket for v_t = {v_t} at ({u_x}, {u_y})"
            )));
        }
    }
    for _ in 0..BISECTION_CAP {
        let mid = 0.5 * (lo + hi);
        let v = v_at(mid)?;
        if (v - v_t).abs() <= POWER_BOUNDARY_TOL {
            return Ok(mid);
        }
        if v < v_t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::SearchFailure(format!(
        "bisection did not reach |v - {v_t}| <= {POWER_BOUNDARY_TOL} at ({u_x}, {u_y})"
    )))
}

/// Field region of a user under both criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRegion {
    NearBoth,
    NearPhaseOnly,
    NearPowerOnly,
    Far,
}

impl FieldRegion {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldRegion::NearBoth => "near_both",
            FieldRegion::NearPhaseOnly => "near_phase_only",
            FieldRegion::NearPowerOnly => "near_power_only",
            FieldRegion::Far => "far",
        }
    }
}

/// Near in phase iff `r_o < r̃(ψ_e, ψ_a)`; near in power iff `v(u) < v_t`.
pub fn classify_field_region(cfg: &ArrayConfig, u: &UserLocation, v_t: f64) -> Result<FieldRegion> {
    check_threshold(v_t)?;
    let near_phase = u.r_o() < phase_boundary_distance(cfg, u.psi_e(), u.psi_a())?;
    let near_power = power_variation(cfg, u)? < v_t;
    Ok(match (near_phase, near_power) {
        (true, true) => FieldRegion::NearBoth,
        (true, false) => FieldRegion::NearPhaseOnly,
        (false, true) => FieldRegion::NearPowerOnly,
        (false, false) => FieldRegion::Far,
    })
}

/// One row of a boundary map on the `u_y = 0` plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub psi_e: f64,
    pub psi_a: f64,
    /// `x` coordinate of the phase boundary point.
    pub u_x: f64,
    /// `z` coordinate of the phase boundary point.
    pub u_z: f64,
    pub phase_boundary_m: f64,
    /// Power-boundary height at the same `u_x`; `None` if the search failed.
    pub power_boundary_m: Option<f64>,
    pub v_t: f64,
}

/// Boundary map over elevations `psi_e` on both sides of the array
/// (`ψ_a ∈ {0, π}`), for every threshold. Rows are ordered threshold,
/// azimuth, elevation.
pub fn boundary_map(cfg: &ArrayConfig, psi_e: &[f64], v_ts: &[f64]) -> Result<Vec<BoundaryPoint>> {
    for &v in v_ts {
        check_threshold(v)?;
    }
    let mut jobs = Vec::new();
    for &v_t in v_ts {
        for psi_a in [0.0, PI] {
            for &e in psi_e {
                jobs.push((v_t, psi_a, e));
            }
        }
    }
    jobs.par_iter()
        .map(|&(v_t, psi_a, e)| {
            let r = phase_boundary_distance(cfg, e, psi_a)?;
            let u_x = r * e.sin() * psi_a.cos();
            let u_z = r * e.cos();
            let power = match power_boundary_distance(cfg, u_x, 0.0, v_t) {
                Ok(z) => Some(z),
                Err(Error::SearchFailure(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(BoundaryPoint {
                psi_e: e,
                psi_a,
                u_x,
                u_z,
                phase_boundary_m: r,
                power_boundary_m: power,
                v_t,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em_channel::element_power;
    use crate::scenario::DEFAULT_LAMBDA;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn upa(m_x: usize, m_y: usize) -> ArrayConfig {
        ArrayConfig::half_wavelength(DEFAULT_LAMBDA, m_x, m_y).unwrap()
    }

    fn brute_extremes(cfg: &ArrayConfig, u: &UserLocation) -> (f64, f64) {
        cfg.indices()
            .map(|i| element_power(cfg, u, i).unwrap())
            .fold((f64::MIN, f64::MAX), |(hi, lo), p| (hi.max(p), lo.min(p)))
    }

    #[test]
    fn single_element_has_no_phase_error() {
        let c = upa(1, 1);
        let u = UserLocation::new(1.0, 2.0, 3.0).unwrap();
        assert_eq!(max_phase_error(&c, &u), 0.0);
    }

    #[test]
    fn broadside_phase_error() {
        let c = upa(25, 25);
        let u = UserLocation::new(0.0, 0.0, 40.0).unwrap();
        let e = 12.0 * c.delta_x();
        let expect = PI / c.lambda() * (e * e + e * e) / 40.0;
        assert!((max_phase_error(&c, &u) - expect).abs() < 1e-12 * expect);
    }

    /// Exhaustive `max (χ - χ_far)` over the grid.
    fn brute_phase_error(c: &ArrayConfig, u: &UserLocation) -> f64 {
        let [px, py, _] = u.direction_cosines();
        let k0 = c.wavenumber();
        c.indices()
            .map(|i| {
                let r = c.element_distance(u, i).unwrap();
                let far = u.r_o() - (i.m_x() * c.delta_x() * px + i.m_y() * c.delta_y() * py);
                k0 * (r - far)
            })
            .fold(f64::MIN, f64::max)
    }

    #[test]
    fn phase_error_matches_exhaustive_search() {
        let c = upa(25, 15);
        let aperture = (c.length_x().powi(2) + c.length_y().powi(2)).sqrt();
        for (scale, tol) in [(10.0, 0.15), (100.0, 0.02)] {
            for (e, a) in [(0.0, 0.0), (0.5, 0.7), (1.2, 2.5), (0.9, 4.0), (0.3, 5.9)] {
                let u = UserLocation::from_polar(scale * aperture, e, a).unwrap();
                let closed = max_phase_error(&c, &u);
                let brute = brute_phase_error(&c, &u);
                assert!((closed - brute).abs() < tol * brute, "{closed} vs {brute}");
            }
        }
    }

    #[test]
    fn phase_boundary_examples() {
        let c = upa(25, 25);
        let r = phase_boundary_distance(&c, 0.0, 0.0).unwrap();
        let e = 12.0 * c.delta_x();
        assert!((r - 8.0 / c.lambda() * 2.0 * e * e).abs() < 1e-9);
        assert!((r - 72.3).abs() < 0.1, "{r}");
        let df = fraunhofer_distance(&c);
        assert!((r - df).abs() < 0.1 * df, "{r} vs {df}");

        for a in [0.0, 0.4, 1.0, 2.2, 3.9, 5.5] {
            let mut last = f64::INFINITY;
            for k in 0..=30 {
                let e = k as f64 / 30.0 * PI / 2.0;
                let r = phase_boundary_distance(&c, e, a).unwrap();
                assert!(r <= df);
                assert!(r <= last + 1e-9);
                last = r;
            }
        }
        assert!(phase_boundary_distance(&c, 2.0, 0.0).is_err());
    }

    #[test]
    fn phase_error_at_boundary_is_pi_over_8() {
        let c = upa(40, 12);
        for (e, a) in [(0.0, 0.0), (0.7, 0.3), (1.4, 3.3)] {
            let r = phase_boundary_distance(&c, e, a).unwrap();
            let u = UserLocation::from_polar(r, e, a).unwrap();
            assert!((max_phase_error(&c, &u) - PI / 8.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fraunhofer_scaling() {
        let c = upa(20, 20);
        let l = c.length_x();
        assert!((fraunhofer_distance(&c) - 4.0 * l * l / c.lambda()).abs() < 1e-9);
        let d = fraunhofer_distance(&upa(40, 40));
        assert!((d - 4.0 * fraunhofer_distance(&c)).abs() < 1e-9);
    }

    #[test]
    fn f_xi_stationary_point() {
        for v in [0.1, 1.0, 7.0] {
            let s0 = 2.0 * v / 3.0;
            assert!(f_xi_derivative(s0 * 0.99, v) > 0.0);
            assert!(f_xi_derivative(s0 * 1.01, v) < 0.0);
            assert!(f_xi_derivative(s0, v).abs() < 1e-15);
            let h = 1e-6;
            let num = (f_xi(1.3 + h, v) - f_xi(1.3 - h, v)) / (2.0 * h);
            assert!((num - f_xi_derivative(1.3, v)).abs() < 1e-6);
        }
    }

    #[test]
    fn broadside_extremes() {
        let c = upa(25, 25);
        let u = UserLocation::new(0.0, 0.0, 5.0).unwrap();
        let ext = power_extremal_elements(&c, &u).unwrap();
        assert_eq!((ext.argmax.m_x(), ext.argmax.m_y()), (0.0, 0.0));
        assert_eq!(ext.argmin.m_x().abs(), 12.0);
        assert_eq!(ext.argmin.m_y().abs(), 12.0);
        assert!(ext.max_power >= ext.min_power && ext.min_power > 0.0);
    }

    #[test]
    fn extremes_match_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let arrays = [upa(25, 25), upa(24, 10), upa(101, 3), upa(1, 17), upa(60, 1)];
        for c in arrays {
            for _ in 0..200 {
                let span_x = c.length_x() * 1.5 + 1.0;
                let span_y = c.length_y() * 1.5 + 1.0;
                let u = UserLocation::new(
                    rng.random_range(-span_x..span_x),
                    rng.random_range(-span_y..span_y),
                    rng.random_range(0.4..4.0),
                )
                .unwrap();
                let ext = power_extremal_elements(&c, &u).unwrap();
                let (hi, lo) = brute_extremes(&c, &u);
                assert!((ext.max_power - hi).abs() <= 1e-12 * hi, "{u:?}");
                assert!((ext.min_power - lo).abs() <= 1e-12 * lo, "{u:?}");
            }
        }
    }

    #[test]
    fn variation_examples() {
        let u = UserLocation::new(0.3, 0.1, 2.0).unwrap();
        assert_eq!(power_variation(&upa(1, 1), &u).unwrap(), 1.0);

        let c = upa(25, 25);
        let ap = c.length_x().max(c.length_y());
        let far = UserLocation::new(0.0, 0.0, 1e4 * ap).unwrap();
        assert!(power_variation(&c, &far).unwrap() >= 0.99);

        let mut last = 0.0;
        for k in 2..=60 {
            let u = UserLocation::new(0.0, 0.0, k as f64 * 0.25).unwrap();
            let v = power_variation(&c, &u).unwrap();
            assert!(v >= last);
            last = v;
        }
        assert!(power_variation(&c, &UserLocation::new(1.0, 0.0, 0.0).unwrap()).is_err());
    }

    #[test]
    fn power_boundary_contract() {
        let c = upa(25, 25);
        for (u_x, v_t) in [(0.0, 0.9), (1.0, 0.95), (-3.0, 0.5)] {
            let z = power_boundary_distance(&c, u_x, 0.0, v_t).unwrap();
            let v = power_variation(&c, &UserLocation::new(u_x, 0.0, z).unwrap()).unwrap();
            assert!((v - v_t).abs() <= POWER_BOUNDARY_TOL);
        }
        for u_x in [0.0, 0.5, 2.0] {
            let a = power_boundary_distance(&c, u_x, 0.0, 0.9).unwrap();
            let b = power_boundary_distance(&c, u_x, 0.0, 0.95).unwrap();
            assert!(b > a);
        }
        let mut last = f64::INFINITY;
        for u_x in [4.0, 3.0, 2.0, 1.0, 0.5, 0.0] {
            let z = power_boundary_distance(&c, u_x, 0.0, 0.9).unwrap();
            assert!(z < last, "{u_x}: {z} vs {last}");
            last = z;
        }
        assert!(power_boundary_distance(&c, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn classification() {
        let c = upa(25, 25);
        let far = UserLocation::new(0.0, 0.0, 1e6).unwrap();
        assert_eq!(classify_field_region(&c, &far, 0.9).unwrap(), FieldRegion::Far);
        let close = UserLocation::new(0.0, 0.0, 0.5).unwrap();
        assert_eq!(classify_field_region(&c, &close, 0.9).unwrap(), FieldRegion::NearBoth);

        // On the phase boundary itself the strict inequality says "not near".
        let r = phase_boundary_distance(&c, 0.3, 0.0).unwrap();
        let u = UserLocation::from_polar(r, 0.3, 0.0).unwrap();
        let v = power_variation(&c, &u).unwrap();
        let region = classify_field_region(&c, &u, v * 0.5).unwrap();
        assert!(matches!(region, FieldRegion::Far | FieldRegion::NearPhaseOnly));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let u = UserLocation::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(0.5..100.0),
            )
            .unwrap();
            let near_phase = u.r_o() < phase_boundary_distance(&c, u.psi_e(), u.psi_a()).unwrap();
            let (hi, lo) = brute_extremes(&c, &u);
            let near_power = lo / hi < 0.9;
            let expect = match (near_phase, near_power) {
                (true, true) => FieldRegion::NearBoth,
                (true, false) => FieldRegion::NearPhaseOnly,
                (false, true) => FieldRegion::NearPowerOnly,
                (false, false) => FieldRegion::Far,
            };
            assert_eq!(classify_field_region(&c, &u, 0.9).unwrap(), expect);
        }
    }

    #[test]
    fn boundary_map_rows() {
        let c = upa(25, 25);
        let grid: Vec<f64> = (0..5).map(|k| k as f64 * 0.3).collect();
        let rows = boundary_map(&c, &grid, &[0.9, 0.95]).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 5);
        for row in &rows {
            let back = (row.u_x * row.u_x + row.u_z * row.u_z).sqrt();
            assert!((back - row.phase_boundary_m).abs() < 1e-9 * row.phase_boundary_m);
        }
        assert!(rows[5].u_x <= 0.0 && rows[1].u_x >= 0.0);
    }
}
