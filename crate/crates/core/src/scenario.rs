//! Array geometry, user placement and scenario sampling.
//!
//! The array lies in the `xoy` plane centred on the origin and users sit in
//! the half-space `z >= 0`. Element `(m_x, m_y)` is centred at
//! `[m_x Δx, m_y Δy, 0]` where each offset ranges over the symmetric set
//! `{-(M-1)/2, ..., (M-1)/2}`. For an even count the offsets are
//! half-integers, so the lattice stays centred.
//!
//! Antennas are enumerated `m_y`-major: the flat index of grid position
//! `(ix, iy)` is `iy * M_x + ix`, with `ix, iy` counted from the most
//! negative offset.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{domain, Error, Result};

/// Uniform planar array description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayConfig {
    m_x: usize,
    m_y: usize,
    delta_x: f64,
    delta_y: f64,
    a_x: f64,
    a_y: f64,
    lambda: f64,
}

impl ArrayConfig {
    /// Builds a validated array.
    ///
    /// Element sides may equal the spacing (`a == delta`), which models a
    /// continuous aperture with occupation ratio one.
    pub fn new(
        m_x: usize,
        m_y: usize,
        delta_x: f64,
        delta_y: f64,
        a_x: f64,
        a_y: f64,
        lambda: f64,
    ) -> Result<Self> {
        if m_x == 0 || m_y == 0 {
            return Err(domain("antenna counts must be positive"));
        }
        for (name, v) in [
            ("delta_x", delta_x),
            ("delta_y", delta_y),
            ("a_x", a_x),
            ("a_y", a_y),
            ("lambda", lambda),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(domain(format!("{name} must be finite and positive, got {v}")));
            }
        }
        if a_x > delta_x || a_y > delta_y {
            return Err(domain(format!(
                "element sides ({a_x}, {a_y}) exceed spacing ({delta_x}, {delta_y})"
            )));
        }
        Ok(Self {
            m_x,
            m_y,
            delta_x,
            delta_y,
            a_x,
            a_y,
            lambda,
        })
    }

    /// Half-wavelength spaced array with square elements of area `λ²/4π`.
    pub fn half_wavelength(lambda: f64, m_x: usize, m_y: usize) -> Result<Self> {
        let side = (lambda * lambda / (4.0 * PI)).sqrt();
        Self::new(m_x, m_y, lambda / 2.0, lambda / 2.0, side, side, lambda)
    }

    /// Same geometry with different antenna counts.
    pub fn with_counts(&self, m_x: usize, m_y: usize) -> Result<Self> {
        Self::new(
            m_x,
            m_y,
            self.delta_x,
            self.delta_y,
            self.a_x,
            self.a_y,
            self.lambda,
        )
    }

    pub fn m_x(&self) -> usize {
        self.m_x
    }
    pub fn m_y(&self) -> usize {
        self.m_y
    }
    /// Total number of antennas `M = M_x M_y`.
    pub fn m(&self) -> usize {
        self.m_x * self.m_y
    }
    pub fn delta_x(&self) -> f64 {
        self.delta_x
    }
    pub fn delta_y(&self) -> f64 {
        self.delta_y
    }
    pub fn a_x(&self) -> f64 {
        self.a_x
    }
    pub fn a_y(&self) -> f64 {
        self.a_y
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    /// Effective element area `A = A_x A_y`.
    pub fn area(&self) -> f64 {
        self.a_x * self.a_y
    }
    /// Array occupation ratio `η = A / (Δx Δy)`.
    pub fn eta(&self) -> f64 {
        self.area() / (self.delta_x * self.delta_y)
    }
    /// Physical length along x, `M_x Δx`.
    pub fn length_x(&self) -> f64 {
        self.m_x as f64 * self.delta_x
    }
    /// Physical length along y, `M_y Δy`.
    pub fn length_y(&self) -> f64 {
        self.m_y as f64 * self.delta_y
    }
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.lambda
    }

    /// Largest offset `(M_x - 1) / 2`.
    pub fn max_offset_x(&self) -> f64 {
        (self.m_x as f64 - 1.0) / 2.0
    }
    pub fn max_offset_y(&self) -> f64 {
        (self.m_y as f64 - 1.0) / 2.0
    }

    /// Checks that `idx` lies on this array's lattice.
    pub fn check(&self, idx: AntennaIndex) -> Result<()> {
        let ok = |twice: i64, m: usize| {
            let span = m as i64 - 1;
            twice.abs() <= span && (twice + span) % 2 == 0
        };
        if ok(idx.x2, self.m_x) && ok(idx.y2, self.m_y) {
            Ok(())
        } else {
            Err(domain(format!(
                "antenna index ({}, {}) outside the {}x{} lattice",
                idx.m_x(),
                idx.m_y(),
                self.m_x,
                self.m_y
            )))
        }
    }

    /// Index at zero-based grid position `(ix, iy)`.
    pub fn index_at(&self, ix: usize, iy: usize) -> AntennaIndex {
        debug_assert!(ix < self.m_x && iy < self.m_y);
        AntennaIndex {
            x2: 2 * ix as i64 - (self.m_x as i64 - 1),
            y2: 2 * iy as i64 - (self.m_y as i64 - 1),
        }
    }

    /// Zero-based grid position of a lattice index.
    pub fn grid_position(&self, idx: AntennaIndex) -> (usize, usize) {
        (
            ((idx.x2 + self.m_x as i64 - 1) / 2) as usize,
            ((idx.y2 + self.m_y as i64 - 1) / 2) as usize,
        )
    }

    /// Position in the `m_y`-major antenna enumeration.
    pub fn flat_index(&self, idx: AntennaIndex) -> usize {
        let (ix, iy) = self.grid_position(idx);
        iy * self.m_x + ix
    }

    /// All indices in enumeration order.
    pub fn indices(&self) -> impl Iterator<Item = AntennaIndex> + '_ {
        (0..self.m_y).flat_map(move |iy| (0..self.m_x).map(move |ix| self.index_at(ix, iy)))
    }

    /// Centre of element `idx`, `[m_x Δx, m_y Δy, 0]`.
    pub fn antenna_center(&self, idx: AntennaIndex) -> Result<[f64; 3]> {
        self.check(idx)?;
        Ok(self.center_unchecked(idx))
    }

    pub(crate) fn center_unchecked(&self, idx: AntennaIndex) -> [f64; 3] {
        [idx.m_x() * self.delta_x, idx.m_y() * self.delta_y, 0.0]
    }

    /// Distance from the user to the centre of element `idx`.
    pub fn element_distance(&self, u: &UserLocation, idx: AntennaIndex) -> Result<f64> {
        self.check(idx)?;
        Ok(self.distance_unchecked(u, idx))
    }

    pub(crate) fn distance_unchecked(&self, u: &UserLocation, idx: AntennaIndex) -> f64 {
        let dx = idx.m_x() * self.delta_x - u.x;
        let dy = idx.m_y() * self.delta_y - u.y;
        (dx * dx + dy * dy + u.z * u.z).sqrt()
    }
}

/// Lattice offset `(m_x, m_y)` of one antenna.
///
/// Offsets are stored doubled so that the half-integer offsets of
/// even-count axes remain exact integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AntennaIndex {
    x2: i64,
    y2: i64,
}

impl AntennaIndex {
    /// Index from (half-)integer offsets.
    pub fn new(m_x: f64, m_y: f64) -> Result<Self> {
        let twice = |m: f64| {
            let t = 2.0 * m;
            if t.is_finite() && t == t.round() {
                Ok(t as i64)
            } else {
                Err(domain(format!("offset {m} is not a half-integer")))
            }
        };
        Ok(Self {
            x2: twice(m_x)?,
            y2: twice(m_y)?,
        })
    }

    pub fn m_x(&self) -> f64 {
        self.x2 as f64 / 2.0
    }
    pub fn m_y(&self) -> f64 {
        self.y2 as f64 / 2.0
    }
}

/// Position of a single-antenna user in front of the array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserLocation {
    x: f64,
    y: f64,
    z: f64,
}

impl UserLocation {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(domain("user coordinates must be finite"));
        }
        if z < 0.0 {
            return Err(domain(format!("user must be in front of the array, u_z = {z}")));
        }
        if x == 0.0 && y == 0.0 && z == 0.0 {
            return Err(domain("user at the array centre"));
        }
        Ok(Self { x, y, z })
    }

    /// User at distance `r_o` with elevation `psi_e` (from the array normal)
    /// and azimuth `psi_a` (from the x-axis).
    pub fn from_polar(r_o: f64, psi_e: f64, psi_a: f64) -> Result<Self> {
        if !(r_o.is_finite() && r_o > 0.0) {
            return Err(domain(format!("r_o must be positive, got {r_o}")));
        }
        if !(0.0..=PI / 2.0).contains(&psi_e) {
            return Err(domain(format!("elevation {psi_e} outside [0, pi/2]")));
        }
        if !psi_a.is_finite() {
            return Err(domain("azimuth must be finite"));
        }
        let (se, ce) = psi_e.sin_cos();
        let (sa, ca) = psi_a.sin_cos();
        Self::new(r_o * se * ca, r_o * se * sa, (r_o * ce).max(0.0))
    }

    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }
    pub fn coords(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
    /// Distance to the array centre.
    pub fn r_o(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
    /// Elevation angle measured from the array normal, in `[0, π/2]`.
    pub fn psi_e(&self) -> f64 {
        (self.z / self.r_o()).clamp(-1.0, 1.0).acos()
    }
    /// Azimuth angle in `[0, 2π)`.
    pub fn psi_a(&self) -> f64 {
        let a = self.y.atan2(self.x);
        if a < 0.0 {
            a + 2.0 * PI
        } else {
            a
        }
    }
    /// Direction cosines `(Ψx, Ψy, Ψz)`.
    pub fn direction_cosines(&self) -> [f64; 3] {
        let r = self.r_o();
        [self.x / r, self.y / r, self.z / r]
    }
}

/// Axis-aligned box on the `xoz` plane.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Region {
    /// The multi-user deployment box `[-25, 25] x [2, 12]`.
    pub const DEFAULT: Region = Region {
        x_min: -25.0,
        x_max: 25.0,
        z_min: 2.0,
        z_max: 12.0,
    };

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.x_min, self.x_max, self.z_min, self.z_max]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite || self.x_min > self.x_max || self.z_min > self.z_max {
            return Err(domain(format!("malformed region {self:?}")));
        }
        if self.z_min <= 0.0 {
            return Err(domain(format!(
                "region z_min must be positive, got {}",
                self.z_min
            )));
        }
        Ok(())
    }
}

/// Draws `k` users uniformly from `region` (with `u_y = 0`).
///
/// The generator is ChaCha8 seeded through `SeedableRng::seed_from_u64`;
/// each user consumes two `f64` draws (x then z), each mapped as
/// `min + (max - min) * u` with `u` uniform on `[0, 1)`.
pub fn sample_users(region: &Region, k: usize, seed: u64) -> Result<Vec<UserLocation>> {
    if k == 0 {
        return Err(domain("at least one user is required"));
    }
    region.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| {
            let ux: f64 = rng.random();
            let uz: f64 = rng.random();
            UserLocation::new(
                region.x_min + (region.x_max - region.x_min) * ux,
                0.0,
                region.z_min + (region.z_max - region.z_min) * uz,
            )
        })
        .collect()
}

/// How the effective element area is chosen in a scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementAreaMode {
    /// `A = λ²/(4π)`, square elements.
    #[default]
    #[serde(rename = "lambda_sq_over_4pi")]
    LambdaSqOver4pi,
    /// Elements fill their cells (`A = Δx Δy`).
    Continuous,
}

/// Scenario configuration as read from a TOML key-value file.
///
/// ```toml
/// lambda = 0.1256
/// m_x = 1000
/// m_y = 10
/// delta_factor = 0.5            # spacing in wavelengths
/// element_area_mode = "lambda_sq_over_4pi"
/// user_region = [-25.0, 25.0, 2.0, 12.0]   # x_min, x_max, z_min, z_max
/// k = 20
/// seed = 1
/// s_x = 100                      # sub-arrays along x
/// s_y = 2                        # sub-arrays along y
/// rho_db = 90.0                  # p / sigma^2
/// varpi = 0.8
/// s_ovp = 0.6
/// ```
///
/// Every key is optional; missing keys take the values above.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub array: ArrayConfig,
    pub region: Region,
    pub k: usize,
    pub seed: u64,
    pub s_x: usize,
    pub s_y: usize,
    /// Linear transmit SNR `p / σ²`.
    pub rho: f64,
    pub varpi: f64,
    pub s_ovp: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    lambda: Option<f64>,
    m_x: Option<usize>,
    m_y: Option<usize>,
    delta_factor: Option<f64>,
    element_area_mode: Option<ElementAreaMode>,
    user_region: Option<[f64; 4]>,
    k: Option<usize>,
    seed: Option<u64>,
    s_x: Option<usize>,
    s_y: Option<usize>,
    rho_db: Option<f64>,
    varpi: Option<f64>,
    s_ovp: Option<f64>,
}

/// Wavelength giving `λ/2 = 0.0628 m`.
pub const DEFAULT_LAMBDA: f64 = 0.1256;
/// `p/σ² = 90 dB`.
pub const DEFAULT_RHO_DB: f64 = 90.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl Scenario {
    /// Multi-user defaults: `M = 10^4` (`M_y = 10`), `S_y = 2`,
    /// `M_x / S_x = 10`, `ϖ = 0.8`, `ŝ_ovp = 0.6`, `K = 20`.
    pub fn default_multi_user() -> Self {
        Self::from_toml_str("").expect("defaults are valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let f: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let lambda = f.lambda.unwrap_or(DEFAULT_LAMBDA);
        let m_x = f.m_x.unwrap_or(1000);
        let m_y = f.m_y.unwrap_or(10);
        let delta = f.delta_factor.unwrap_or(0.5) * lambda;
        let (a_x, a_y) = match f.element_area_mode.unwrap_or_default() {
            ElementAreaMode::LambdaSqOver4pi => {
                let side = (lambda * lambda / (4.0 * PI)).sqrt();
                (side, side)
            }
            ElementAreaMode::Continuous => (delta, delta),
        };
        let array = ArrayConfig::new(m_x, m_y, delta, delta, a_x, a_y, lambda)?;
        let region = match f.user_region {
            Some([x_min, x_max, z_min, z_max]) => Region {
                x_min,
                x_max,
                z_min,
                z_max,
            },
            None => Region::DEFAULT,
        };
        region.validate()?;
        let s = Self {
            array,
            region,
            k: f.k.unwrap_or(20),
            seed: f.seed.unwrap_or(1),
            s_x: f.s_x.unwrap_or((m_x / 10).max(1)),
            s_y: f.s_y.unwrap_or(if m_y.is_multiple_of(2) { 2 } else { 1 }),
            rho: db_to_linear(f.rho_db.unwrap_or(DEFAULT_RHO_DB)),
            varpi: f.varpi.unwrap_or(0.8),
            s_ovp: f.s_ovp.unwrap_or(0.6),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(domain("k must be positive"));
        }
        if self.s_x == 0
            || self.s_y == 0
            || !self.array.m_x().is_multiple_of(self.s_x)
            || !self.array.m_y().is_multiple_of(self.s_y)
        {
            return Err(domain(format!(
                "sub-array grid {}x{} does not tile a {}x{} array",
                self.s_x,
                self.s_y,
                self.array.m_x(),
                self.array.m_y()
            )));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(domain("rho must be positive"));
        }
        if !(0.0..=1.0).contains(&self.varpi) {
            return Err(domain(format!("varpi {} outside [0, 1]", self.varpi)));
        }
        if !(self.s_ovp > 0.0 && self.s_ovp <= 1.0) {
            return Err(domain(format!("s_ovp {} outside (0, 1]", self.s_ovp)));
        }
        Ok(())
    }

    /// Same scenario with `M` antennas: `M_y` kept, `M_x = M / M_y`, and
    /// `S_x` chosen so each sub-array keeps `M_x / S_x = 10` columns when
    /// possible.
    pub fn with_total_antennas(&self, m: usize) -> Result<Self> {
        let m_y = self.array.m_y();
        if !m.is_multiple_of(m_y) {
            return Err(domain(format!("M = {m} not divisible by M_y = {m_y}")));
        }
        let m_x = m / m_y;
        let cols = self.array.m_x() / self.s_x;
        let s_x = if m_x.is_multiple_of(cols) { m_x / cols } else { m_x };
        let s = Self {
            array: self.array.with_counts(m_x, m_y)?,
            s_x,
            ..self.clone()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn users(&self, seed: u64) -> Result<Vec<UserLocation>> {
        sample_users(&self.region, self.k, seed)
    }
}
