//! Projection-based combiners on a thin QR factorisation.
//!
//! For `A = Q R` (`Q` orthonormal columns) every combiner direction lies in
//! the column space of `A`, so the projections `I - B(B^H B)^{-1}B^H` and
//! their regularised counterparts act on the small coordinate vectors in
//! `R`. No explicit inverse is formed.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub(crate) type CMatrix = DMatrix<Complex64>;
pub(crate) type CVector = DVector<Complex64>;

/// Squared-condition threshold beyond which the interference block is
/// treated as singular.
pub const CONDITION_SQ_LIMIT: f64 = 1e12;

/// Residual power fraction below which the target is unservable.
pub const UNSERVABLE_FRACTION: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Mode {
    Mrc,
    Zf,
    /// MMSE with regulariser `δ = σ²/p`.
    Mmse(f64),
}

/// Thin QR of a tall or wide matrix.
pub(crate) struct Factored {
    q: CMatrix,
    r: CMatrix,
}

impl Factored {
    pub(crate) fn new(a: CMatrix) -> Self {
        let qr = a.qr();
        Self {
            q: qr.q(),
            r: qr.r(),
        }
    }

    fn rows(&self) -> usize {
        self.q.nrows()
    }

    /// Unit-gain combiner for column `target` that suppresses the columns
    /// in `others` (ZF nulls them; MMSE trades them off against noise).
    ///
    /// Returns `(w, g)` with `w = M h / (h^H M h)` and `g = h^H M h`, where
    /// `M` is the identity (MRC), the orthogonal projector (ZF) or the
    /// regularised projector (MMSE).
    pub(crate) fn combiner(
        &self,
        user: usize,
        target: usize,
        others: &[usize],
        mode: Mode,
    ) -> Result<(CVector, f64)> {
        let rt: CVector = self.r.column(target).into_owned();
        let rt_norm2 = rt.norm_squared();
        if rt_norm2 == 0.0 {
            return Err(Error::DegenerateChannel { user });
        }
        let z = if others.is_empty() || mode == Mode::Mrc {
            rt.clone()
        } else {
            let rb = CMatrix::from_fn(self.r.nrows(), others.len(), |i, j| {
                self.r[(i, others[j])]
            });
            match mode {
                Mode::Zf => {
                    if self.rows() < others.len() + 1 {
                        return Err(Error::InsufficientAperture {
                            user,
                            antennas: self.rows(),
                            users: others.len() + 1,
                        });
                    }
                    check_condition(user, &rb)?;
                    let qb = rb.qr().q();
                    &rt - &qb * (qb.adjoint() * &rt)
                }
                Mode::Mmse(delta) => {
                    let (n, p) = (rb.nrows(), rb.ncols());
                    let mut stacked = CMatrix::zeros(n + p, p);
                    stacked.view_mut((0, 0), (n, p)).copy_from(&rb);
                    let s = Complex64::new(delta.sqrt(), 0.0);
                    for j in 0..p {
                        stacked[(n + j, j)] = s;
                    }
                    let mut rhs = CVector::zeros(n + p);
                    rhs.rows_mut(0, n).copy_from(&rt);
                    let y = least_squares(stacked, &rhs, user)?;
                    &rt - &rb * y
                }
                Mode::Mrc => unreachable!(),
            }
        };
        let gain = rt.dotc(&z).re;
        if !(gain > UNSERVABLE_FRACTION * rt_norm2) {
            return Err(Error::UnservableUser { user });
        }
        Ok((&self.q * z / Complex64::new(gain, 0.0), gain))
    }
}

fn check_condition(user: usize, b: &CMatrix) -> Result<()> {
    let mut nb = b.clone();
    for mut col in nb.column_iter_mut() {
        let n = col.norm();
        if n == 0.0 {
            return Err(Error::SingularInterference {
                user,
                condition: f64::INFINITY,
            });
        }
        col /= Complex64::new(n, 0.0);
    }
    let sv = nb.singular_values();
    let (hi, lo) = sv
        .iter()
        .fold((0.0f64, f64::INFINITY), |(h, l), &s| (h.max(s), l.min(s)));
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if cond * cond > CONDITION_SQ_LIMIT {
        return Err(Error::SingularInterference {
            user,
            condition: cond,
        });
    }
    Ok(())
}

/// Least-squares solution of a full-column-rank system via QR.
fn least_squares(a: CMatrix, b: &CVector, user: usize) -> Result<CVector> {
    let qr = a.qr();
    let qtb = qr.q().adjoint() * b;
    qr.r()
        .solve_upper_triangular(&qtb)
        .ok_or(Error::SingularInterference {
            user,
            condition: f64::INFINITY,
        })
}
