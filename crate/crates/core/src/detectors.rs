//! Linear multi-user detectors and link metrics.
//!
//! A detector for user `k` is a weight vector `w` on a subset of antennas
//! with the estimate `x̂_k = w^H y`. Every detector here is normalised to
//! unit gain, `w^H h_k = 1`. Noise power is normalised to one, so `rho` is
//! the per-user transmit SNR `p / σ²`.
//!
//! Rates are in bits per channel use (`log2`).

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::em_channel::ChannelMatrix;
use crate::error::{domain, Error, Result};
use crate::linalg::{CVector, Factored, Mode};
use crate::visibility::{vr_antenna_indices, SubArrayGrid, VisibilityRegion};

/// Detector family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Mrc,
    Zf,
    Mmse,
    VrZf,
    VrMmse,
    Pzf,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Mrc => "wa_mrc",
            Scheme::Zf => "wa_zf",
            Scheme::Mmse => "wa_mmse",
            Scheme::VrZf => "vr_zf",
            Scheme::VrMmse => "vr_mmse",
            Scheme::Pzf => "up_pzf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "wa_mrc" | "mrc" => Scheme::Mrc,
            "wa_zf" | "zf" => Scheme::Zf,
            "wa_mmse" | "mmse" => Scheme::Mmse,
            "vr_zf" => Scheme::VrZf,
            "vr_mmse" => Scheme::VrMmse,
            "up_pzf" | "pzf" => Scheme::Pzf,
            other => return Err(domain(format!("unknown scheme '{other}'"))),
        })
    }

    pub const ALL: [Scheme; 6] = [
        Scheme::Mrc,
        Scheme::Zf,
        Scheme::Mmse,
        Scheme::VrZf,
        Scheme::VrMmse,
        Scheme::Pzf,
    ];
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Combining weights of one user on an antenna subset.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorWeights {
    pub user: usize,
    pub scheme: Scheme,
    /// Antenna enumeration indices, ascending; `weights[j]` applies to
    /// antenna `antennas[j]`.
    pub antennas: Vec<usize>,
    pub weights: DVector<Complex64>,
    /// `h^H M h` for the detector's projector `M` on the subset.
    pub(crate) gain: f64,
}

impl DetectorWeights {
    /// `w^H h` for a full-length channel `h`.
    pub fn response(&self, h: &DVector<Complex64>) -> Complex64 {
        self.antennas
            .iter()
            .zip(self.weights.iter())
            .map(|(&m, w)| w.conj() * h[m])
            .sum()
    }
}

fn all_rows(h: &ChannelMatrix) -> Vec<usize> {
    (0..h.antennas()).collect()
}

fn others(k_total: usize, skip: usize) -> Vec<usize> {
    (0..k_total).filter(|&i| i != skip).collect()
}

fn check_user(h: &ChannelMatrix, k: usize) -> Result<()> {
    if k >= h.users() {
        return Err(domain(format!("user {k} out of range (K = {})", h.users())));
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("rho must be positive, got {rho}")))
    }
}

/// Weights from a factorisation of `rows x cols` of `h`; `target` and
/// `nulled` index into `cols`.
#[allow(clippy::too_many_arguments)]
fn weights_on(
    h: &ChannelMatrix,
    user: usize,
    scheme: Scheme,
    rows: Vec<usize>,
    cols: &[usize],
    target: usize,
    nulled: &[usize],
    mode: Mode,
) -> Result<DetectorWeights> {
    let f = Factored::new(h.submatrix(&rows, cols));
    let (weights, gain) = f.combiner(user, target, nulled, mode)?;
    Ok(DetectorWeights {
        user,
        scheme,
        antennas: rows,
        weights,
        gain,
    })
}

/// Whole-array detector for user `k` from a shared factorisation of `H`.
pub struct WholeArray<'a> {
    h: &'a ChannelMatrix,
    f: Factored,
}

impl<'a> WholeArray<'a> {
    pub fn new(h: &'a ChannelMatrix) -> Self {
        Self {
            h,
            f: Factored::new(h.matrix().clone()),
        }
    }

    pub fn weights(&self, k: usize, scheme: Scheme, rho: f64) -> Result<DetectorWeights> {
        check_user(self.h, k)?;
        let mode = match scheme {
            Scheme::Mrc => Mode::Mrc,
            Scheme::Zf => Mode::Zf,
            Scheme::Mmse => {
                check_rho(rho)?;
                Mode::Mmse(1.0 / rho)
            }
            other => return Err(domain(format!("{other} is not a whole-array scheme"))),
        };
        let (weights, gain) = self.f.combiner(k, k, &others(self.h.users(), k), mode)?;
        Ok(DetectorWeights {
            user: k,
            scheme,
            antennas: all_rows(self.h),
            weights,
            gain,
        })
    }
}

/// `w = h_k / ‖h_k‖²`.
pub fn mrc_weights(h: &ChannelMatrix, k: usize) -> Result<DetectorWeights> {
    check_user(h, k)?;
    let hk = h.column(k);
    let n2 = hk.norm_squared();
    if n2 == 0.0 {
        return Err(Error::DegenerateChannel { user: k });
    }
    Ok(DetectorWeights {
        user: k,
        scheme: Scheme::Mrc,
        antennas: all_rows(h),
        weights: hk / Complex64::new(n2, 0.0),
        gain: n2,
    })
}

/// `w = P_k h_k / (h_k^H P_k h_k)` with `P_k` projecting out the other users.
pub fn zf_weights(h: &ChannelMatrix, k: usize) -> Result<DetectorWeights> {
    check_user(h, k)?;
    let cols: Vec<usize> = (0..h.users()).collect();
    weights_on(h, k, Scheme::Zf, all_rows(h), &cols, k, &others(h.users(), k), Mode::Zf)
}

/// `w = R_k h_k / (h_k^H R_k h_k)`, `R_k = I - H̄(δI + H̄^H H̄)^{-1} H̄^H`,
/// `δ = 1/ρ`.
pub fn mmse_weights(h: &ChannelMatrix, k: usize, rho: f64) -> Result<DetectorWeights> {
    check_user(h, k)?;
    check_rho(rho)?;
    let cols: Vec<usize> = (0..h.users()).collect();
    weights_on(
        h,
        k,
        Scheme::Mmse,
        all_rows(h),
        &cols,
        k,
        &others(h.users(), k),
        Mode::Mmse(1.0 / rho),
    )
}

/// Closed-form SINR of a whole-array detector.
///
/// MRC: `ρ‖h_k‖² / (ρ Σ_{i≠k} |h_k^H h_i|²/‖h_k‖² + 1)`;
/// ZF: `ρ h_k^H P_k h_k`; MMSE: `ρ h_k^H R_k h_k`.
pub fn sinr_closed(h: &ChannelMatrix, k: usize, scheme: Scheme, rho: f64) -> Result<f64> {
    check_user(h, k)?;
    check_rho(rho)?;
    match scheme {
        Scheme::Mrc => {
            let hk = h.column(k);
            let n2 = hk.norm_squared();
            if n2 == 0.0 {
                return Err(Error::DegenerateChannel { user: k });
            }
            let interference: f64 = others(h.users(), k)
                .into_iter()
                .map(|i| hk.dotc(&h.column(i)).norm_sqr() / n2)
                .sum();
            Ok(rho * n2 / (rho * interference + 1.0))
        }
        Scheme::Zf => Ok(rho * zf_weights(h, k)?.gain),
        Scheme::Mmse => Ok(rho * mmse_weights(h, k, rho)?.gain),
        other => Err(domain(format!("no closed form for {other}"))),
    }
}

/// `ρ|w^H h_k|² / (ρ Σ_{i≠k} |w^H h_i|² + ‖w‖²)`, channels restricted to
/// the weights' antennas.
pub fn sinr_of_weights(w: &DetectorWeights, h: &ChannelMatrix, k: usize, rho: f64) -> f64 {
    let noise = w.weights.norm_squared();
    let gains: Vec<f64> = (0..h.users())
        .map(|i| {
            let col = h.matrix().column(i);
            w.antennas
                .iter()
                .zip(w.weights.iter())
                .map(|(&m, x)| x.conj() * col[m])
                .sum::<Complex64>()
                .norm_sqr()
        })
        .collect();
    let signal = rho * gains[k];
    if signal == 0.0 {
        return 0.0;
    }
    let interference: f64 = gains
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, g)| g)
        .sum();
    signal / (rho * interference + noise)
}

fn vr_weights(
    h: &ChannelMatrix,
    grid: &SubArrayGrid,
    vr: &VisibilityRegion,
    k: usize,
    scheme: Scheme,
    mode: Mode,
) -> Result<DetectorWeights> {
    check_user(h, k)?;
    let rows = vr_antenna_indices(grid, vr);
    let cols: Vec<usize> = (0..h.users()).collect();
    weights_on(h, k, scheme, rows, &cols, k, &others(h.users(), k), mode)
}

/// ZF on the antennas of user `k`'s VR. Fails with `InsufficientAperture`
/// when the VR has fewer antennas than users.
pub fn vr_zf_weights(
    h: &ChannelMatrix,
    grid: &SubArrayGrid,
    vrs: &[VisibilityRegion],
    k: usize,
) -> Result<DetectorWeights> {
    vr_weights(h, grid, &vrs[k], k, Scheme::VrZf, Mode::Zf)
}

/// MMSE on the antennas of user `k`'s VR.
pub fn vr_mmse_weights(
    h: &ChannelMatrix,
    grid: &SubArrayGrid,
    vrs: &[VisibilityRegion],
    k: usize,
    rho: f64,
) -> Result<DetectorWeights> {
    check_rho(rho)?;
    vr_weights(h, grid, &vrs[k], k, Scheme::VrMmse, Mode::Mmse(1.0 / rho))
}

/// Partial ZF for user `i` of `group`: projects out the other group
/// members' channels within user `i`'s VR only.
pub fn pzf_weights(
    h: &ChannelMatrix,
    grid: &SubArrayGrid,
    group: &[usize],
    vrs: &[VisibilityRegion],
    i: usize,
) -> Result<DetectorWeights> {
    check_user(h, i)?;
    let pos = group
        .iter()
        .position(|&u| u == i)
        .ok_or_else(|| domain(format!("user {i} is not in its group")))?;
    let rows = vr_antenna_indices(grid, &vrs[i]);
    let nulled: Vec<usize> = (0..group.len()).filter(|&j| j != pos).collect();
    weights_on(h, i, Scheme::Pzf, rows, group, pos, &nulled, Mode::Zf)
}

/// Per-user SINR and rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMetrics {
    pub sinr: Vec<f64>,
    /// `log2(1 + SINR)` per user.
    pub rates: Vec<f64>,
    pub sum_rate: f64,
}

pub fn sum_rate(sinr: &[f64]) -> Result<LinkMetrics> {
    if let Some(bad) = sinr.iter().find(|s| !(**s >= 0.0)) {
        return Err(domain(format!("SINR must be non-negative, got {bad}")));
    }
    let rates: Vec<f64> = sinr.iter().map(|s| s.ln_1p() / std::f64::consts::LN_2).collect();
    Ok(LinkMetrics {
        sinr: sinr.to_vec(),
        sum_rate: rates.iter().sum(),
        rates,
    })
}

/// Per-user weights and SINRs for one scheme on one channel realisation.
#[derive(Debug, Clone)]
pub struct SchemeOutcome {
    pub metrics: LinkMetrics,
    /// Users whose VR-ZF was replaced by VR-MMSE, either for lack of
    /// antennas or because the restricted interference block is singular.
    pub fallbacks: usize,
    /// PZF only: rates from the design SINR `ρ / ‖w‖²`, which ignores
    /// leakage from users outside the group.
    pub nominal: Option<LinkMetrics>,
}

/// Evaluates `scheme` for every user and reports the link metrics. `vrs`
/// and `groups` are needed for the VR and PZF schemes.
pub fn evaluate_scheme(
    h: &ChannelMatrix,
    scheme: Scheme,
    rho: f64,
    grid: Option<&SubArrayGrid>,
    vrs: Option<&[VisibilityRegion]>,
    groups: Option<&[Vec<usize>]>,
) -> Result<SchemeOutcome> {
    check_rho(rho)?;
    let k_total = h.users();
    let need_vr = || -> Result<(&SubArrayGrid, &[VisibilityRegion])> {
        match (grid, vrs) {
            (Some(g), Some(v)) if v.len() == k_total => Ok((g, v)),
            _ => Err(domain(format!("{scheme} needs one VR per user"))),
        }
    };
    let per_user: Vec<Result<(DetectorWeights, bool)>> = match scheme {
        Scheme::Mrc | Scheme::Zf | Scheme::Mmse => {
            let wa = WholeArray::new(h);
            (0..k_total)
                .into_par_iter()
                .map(|k| {
                    Ok((wa.weights(k, scheme, rho)?, false))
                })
                .collect()
        }
        Scheme::VrZf | Scheme::VrMmse => {
            let (g, v) = need_vr()?;
            (0..k_total)
                .into_par_iter()
                .map(|k| {
                    if scheme == Scheme::VrZf {
                        match vr_zf_weights(h, g, v, k) {
                            Err(
                                Error::InsufficientAperture { .. }
                                | Error::SingularInterference { .. },
                            ) => Ok((vr_mmse_weights(h, g, v, k, rho)?, true)),
                            other => Ok((other?, false)),
                        }
                    } else {
                        Ok((vr_mmse_weights(h, g, v, k, rho)?, false))
                    }
                })
                .collect()
        }
        Scheme::Pzf => {
            let (g, v) = need_vr()?;
            let groups = groups.ok_or_else(|| domain("up_pzf needs a user grouping"))?;
            let mut group_of = vec![usize::MAX; k_total];
            for (gi, members) in groups.iter().enumerate() {
                for &u in members {
                    group_of[u] = gi;
                }
            }
            if group_of.contains(&usize::MAX) {
                return Err(domain("grouping does not cover every user"));
            }
            (0..k_total)
                .into_par_iter()
                .map(|k| {
                    Ok((pzf_weights(h, g, &groups[group_of[k]], v, k)?, false))
                })
                .collect()
        }
    };
    let mut sinr = Vec::with_capacity(k_total);
    let mut design = Vec::with_capacity(k_total);
    let mut fallbacks = 0;
    for (k, r) in per_user.into_iter().enumerate() {
        let (w, fb) = r?;
        sinr.push(sinr_of_weights(&w, h, k, rho));
        design.push(rho / w.weights.norm_squared());
        fallbacks += fb as usize;
    }
    Ok(SchemeOutcome {
        metrics: sum_rate(&sinr)?,
        fallbacks,
        nominal: if scheme == Scheme::Pzf {
            Some(sum_rate(&design)?)
        } else {
            None
        },
    })
}

/// `|h_k^H h_i|² / ‖h_k‖²`.
pub fn favorable_propagation_ratio(hk: &CVector, hi: &CVector) -> Result<f64> {
    if hk.len() != hi.len() {
        return Err(domain("channel vectors differ in length"));
    }
    let n2 = hk.norm_squared();
    if n2 == 0.0 {
        return Err(Error::DegenerateChannel { user: 0 });
    }
    Ok(hk.dotc(hi).norm_sqr() / n2)
}

/// Far-field linear-array interference kernel
/// `sin²(πMdΔ) / (M sin²(πdΔ))` with `d = Δx/λ` and `Δ = sin ψ_i - sin ψ_k`.
/// Multiply by the interferer's element power to obtain
/// [`favorable_propagation_ratio`] of two far-field channels.
pub fn far_field_interference_kernel(m: usize, spacing_over_lambda: f64, sin_k: f64, sin_i: f64) -> f64 {
    let x = std::f64::consts::PI * spacing_over_lambda * (sin_i - sin_k);
    let mf = m as f64;
    let den = x.sin().powi(2);
    if den < 1e-300 {
        return mf;
    }
    (mf * x).sin().powi(2) / (mf * den)
}
