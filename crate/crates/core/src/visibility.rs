//! Sub-array powers and visibility regions.
//!
//! The array is tiled into `S = S_x x S_y` equal sub-arrays. Sub-array
//! `(s_x, s_y)` has flat id `s_y S_x + s_x`. A user's visibility region (VR)
//! is the smallest set of sub-arrays that, taken strongest first, collects
//! more than a fraction `ϖ` of the received power.

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::scenario::{ArrayConfig, Scenario, UserLocation};
use crate::snr::rectangle_power;

/// Tiling of an array into equal rectangular sub-arrays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubArrayGrid {
    config: ArrayConfig,
    s_x: usize,
    s_y: usize,
}

impl SubArrayGrid {
    pub fn new(config: ArrayConfig, s_x: usize, s_y: usize) -> Result<Self> {
        if s_x == 0 || s_y == 0 {
            return Err(domain("sub-array counts must be positive"));
        }
        if !config.m_x().is_multiple_of(s_x) || !config.m_y().is_multiple_of(s_y) {
            return Err(domain(format!(
                "{}x{} array does not tile into {s_x}x{s_y} sub-arrays",
                config.m_x(),
                config.m_y()
            )));
        }
        Ok(Self { config, s_x, s_y })
    }

    pub fn from_scenario(sc: &Scenario) -> Result<Self> {
        Self::new(sc.array, sc.s_x, sc.s_y)
    }

    pub fn config(&self) -> &ArrayConfig {
        &self.config
    }
    pub fn s_x(&self) -> usize {
        self.s_x
    }
    pub fn s_y(&self) -> usize {
        self.s_y
    }
    /// Number of sub-arrays `S`.
    pub fn count(&self) -> usize {
        self.s_x * self.s_y
    }
    /// Antennas per sub-array, `M / S`.
    pub fn antennas_per_subarray(&self) -> usize {
        self.config.m() / self.count()
    }
    pub fn flat_id(&self, s_x: usize, s_y: usize) -> usize {
        s_y * self.s_x + s_x
    }
    pub fn coords(&self, flat: usize) -> (usize, usize) {
        (flat % self.s_x, flat / self.s_x)
    }

    /// Physical extent `[f_1 Δ, f_2 Δ]` of sub-array index `s` along one
    /// axis with `f_1 = -M/2 + s M/S`, `f_2 = -M/2 + (s+1) M/S`.
    fn extent(m: usize, s_count: usize, s: usize, delta: f64) -> (f64, f64) {
        let (m, sc) = (m as f64, s_count as f64);
        let f1 = -m / 2.0 + s as f64 * m / sc;
        let f2 = -m / 2.0 + (s as f64 + 1.0) * m / sc;
        (f1 * delta, f2 * delta)
    }
}

/// Closed-form power received by sub-array `(s_x, s_y)`, scaled by `rho`.
pub fn subarray_power(
    grid: &SubArrayGrid,
    u: &UserLocation,
    rho: f64,
    s_x: usize,
    s_y: usize,
) -> Result<f64> {
    if s_x >= grid.s_x || s_y >= grid.s_y {
        return Err(domain(format!(
            "sub-array ({s_x}, {s_y}) outside {}x{} grid",
            grid.s_x, grid.s_y
        )));
    }
    let c = &grid.config;
    let xs = SubArrayGrid::extent(c.m_x(), grid.s_x, s_x, c.delta_x());
    let ys = SubArrayGrid::extent(c.m_y(), grid.s_y, s_y, c.delta_y());
    Ok(rho * rectangle_power(c.eta(), u, xs, ys))
}

/// Powers of every sub-array, indexed by flat id.
pub fn subarray_powers(grid: &SubArrayGrid, u: &UserLocation, rho: f64) -> Vec<f64> {
    (0..grid.count())
        .map(|f| {
            let (sx, sy) = grid.coords(f);
            subarray_power(grid, u, rho, sx, sy).expect("flat id in range")
        })
        .collect()
}

/// Sub-arrays selected for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityRegion {
    pub user: usize,
    /// Flat ids, ascending.
    pub members: Vec<usize>,
    /// Flat ids in selection order (strongest first).
    pub selection: Vec<usize>,
    pub captured_power: f64,
    pub target_power: f64,
}

impl VisibilityRegion {
    pub fn len(&self) -> usize {
        self.members.len()
    }
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
    pub fn contains(&self, flat: usize) -> bool {
        self.members.binary_search(&flat).is_ok()
    }
    /// `|B_k ∩ B_i|`.
    pub fn overlap(&self, other: &VisibilityRegion) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.members.len() && j < other.members.len() {
            match self.members[i].cmp(&other.members[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// Greedy VR detection from precomputed sub-array powers.
///
/// Sub-arrays are taken in descending power (ties: ascending flat id) while
/// the captured power is at most `varpi` times the total.
pub fn select_vr(user: usize, powers: &[f64], varpi: f64) -> Result<VisibilityRegion> {
    if !(0.0..=1.0).contains(&varpi) {
        return Err(domain(format!("varpi must lie in [0, 1], got {varpi}")));
    }
    let mut order: Vec<usize> = (0..powers.len()).collect();
    order.sort_by(|&a, &b| powers[b].total_cmp(&powers[a]).then(a.cmp(&b)));
    // Summed in selection order so the running total ends exactly at it.
    let target: f64 = order.iter().map(|&f| powers[f]).sum();
    if !(target > 0.0) {
        return Err(Error::DegenerateUser { user });
    }
    let mut captured = 0.0;
    let mut selection = Vec::new();
    for &f in &order {
        if captured > varpi * target {
            break;
        }
        selection.push(f);
        captured += powers[f];
    }
    let mut members = selection.clone();
    members.sort_unstable();
    Ok(VisibilityRegion {
        user,
        members,
        selection,
        captured_power: captured,
        target_power: target,
    })
}

/// VR of user `user` located at `u`.
pub fn detect_vr(
    grid: &SubArrayGrid,
    user: usize,
    u: &UserLocation,
    rho: f64,
    varpi: f64,
) -> Result<VisibilityRegion> {
    if u.z() == 0.0 {
        return Err(Error::DegenerateUser { user });
    }
    select_vr(user, &subarray_powers(grid, u, rho), varpi)
}

/// VRs of all users; user ids are positions in `users`.
pub fn detect_vrs(
    grid: &SubArrayGrid,
    users: &[UserLocation],
    rho: f64,
    varpi: f64,
) -> Result<Vec<VisibilityRegion>> {
    users
        .par_iter()
        .enumerate()
        .map(|(k, u)| detect_vr(grid, k, u, rho, varpi))
        .collect()
}

/// Antenna enumeration indices covered by a set of sub-arrays, ascending.
pub fn subarray_antenna_indices(grid: &SubArrayGrid, members: &[usize]) -> Vec<usize> {
    let c = &grid.config;
    let (bx, by) = (c.m_x() / grid.s_x, c.m_y() / grid.s_y);
    let mut out = Vec::with_capacity(members.len() * bx * by);
    for &f in members {
        let (sx, sy) = grid.coords(f);
        for iy in sy * by..(sy + 1) * by {
            for ix in sx * bx..(sx + 1) * bx {
                out.push(iy * c.m_x() + ix);
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Antenna enumeration indices inside a VR, ascending.
pub fn vr_antenna_indices(grid: &SubArrayGrid, vr: &VisibilityRegion) -> Vec<usize> {
    subarray_antenna_indices(grid, &vr.members)
}

/// Mean VR occupancy `r_oc = (1/K) Σ |B_k| / S`.
pub fn occupancy_ratio(vrs: &[VisibilityRegion], s: usize) -> Result<f64> {
    if vrs.is_empty() || s == 0 {
        return Err(domain("occupancy ratio needs at least one VR and S > 0"));
    }
    let total: usize = vrs.iter().map(VisibilityRegion::len).sum();
    Ok(total as f64 / (vrs.len() * s) as f64)
}
