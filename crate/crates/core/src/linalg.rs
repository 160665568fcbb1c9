//! Dense complex linear algebra for the fixed small systems of the model.
//!
//! Everything here operates on square matrices of compile-time size: the
//! 4×4 photonic basis (a1, a1†, a2, a2†) and the 8×8 photon+phonon basis.
//! Solves use LU with partial pivoting; conditioning is tracked through the
//! exact 1-norm reciprocal condition number, which is cheap at these sizes.

// index-based loops mirror the textbook forms of the factorizations
#![allow(clippy::needless_range_loop)]

use num_complex::Complex64;

/// Shorthand used throughout the crate.
pub type C64 = Complex64;

/// Square complex matrix with row-major storage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CMat<const N: usize> {
    data: [[C64; N]; N],
}

/// 4×4 complex matrix in the basis (a1, a1†, a2, a2†).
pub type Mat4 = CMat<4>;
/// 8×8 complex matrix in the basis (a1, a1†, a2, a2†, b1, b1†, b2, b2†).
pub type Mat8 = CMat<8>;

impl<const N: usize> CMat<N> {
    pub fn zero() -> Self {
        Self {
            data: [[C64::new(0.0, 0.0); N]; N],
        }
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        for i in 0..N {
            m.data[i][i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(data: [[C64; N]; N]) -> Self {
        Self { data }
    }

    /// Diagonal matrix from the given entries.
    pub fn diag(entries: [C64; N]) -> Self {
        let mut m = Self::zero();
        for (i, e) in entries.into_iter().enumerate() {
            m.data[i][i] = e;
        }
        m
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> C64 {
        self.data[row][col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: C64) {
        self.data[row][col] = value;
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let mut out = Self::zero();
        for i in 0..N {
            for k in 0..N {
                let a = self.data[i][k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..N {
                    out.data[i][j] += a * rhs.data[k][j];
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let mut out = *self;
        for i in 0..N {
            for j in 0..N {
                out.data[i][j] += rhs.data[i][j];
            }
        }
        out
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        let mut out = *self;
        for i in 0..N {
            for j in 0..N {
                out.data[i][j] -= rhs.data[i][j];
            }
        }
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = *self;
        for i in 0..N {
            for j in 0..N {
                out.data[i][j] *= s;
            }
        }
        out
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            for j in 0..N {
                acc += self.data[i][j].norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let mut best = 0.0f64;
        for j in 0..N {
            let mut s = 0.0;
            for i in 0..N {
                s += self.data[i][j].norm();
            }
            best = best.max(s);
        }
        best
    }

    /// LU factorization with partial pivoting. Returns `None` when a pivot
    /// is exactly zero.
    fn lu(&self) -> Option<Lu<N>> {
        let mut lu = self.data;
        let mut perm = [0usize; N];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = i;
        }
        let mut sign_swaps = 0usize;
        for k in 0..N {
            let mut pivot = k;
            let mut best = lu[k][k].norm();
            for i in (k + 1)..N {
                let v = lu[i][k].norm();
                if v > best {
                    best = v;
                    pivot = i;
                }
            }
            if best == 0.0 {
                return None;
            }
            if pivot != k {
                lu.swap(k, pivot);
                perm.swap(k, pivot);
                sign_swaps += 1;
            }
            let inv = C64::new(1.0, 0.0) / lu[k][k];
            for i in (k + 1)..N {
                let f = lu[i][k] * inv;
                lu[i][k] = f;
                for j in (k + 1)..N {
                    let sub = f * lu[k][j];
                    lu[i][j] -= sub;
                }
            }
        }
        Some(Lu {
            lu,
            perm,
            sign_swaps,
        })
    }

    /// Solve `self * x = b`.
    pub fn solve(&self, b: &[C64; N]) -> Option<[C64; N]> {
        self.lu().map(|f| f.solve(b))
    }

    /// Matrix inverse via LU.
    pub fn inverse(&self) -> Option<Self> {
        let f = self.lu()?;
        let mut out = Self::zero();
        for j in 0..N {
            let mut e = [C64::new(0.0, 0.0); N];
            e[j] = C64::new(1.0, 0.0);
            let col = f.solve(&e);
            for i in 0..N {
                out.data[i][j] = col[i];
            }
        }
        Some(out)
    }

    /// Determinant via LU.
    pub fn det(&self) -> C64 {
        match self.lu() {
            None => C64::new(0.0, 0.0),
            Some(f) => {
                let mut d = if f.sign_swaps.is_multiple_of(2) {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(-1.0, 0.0)
                };
                for k in 0..N {
                    d *= f.lu[k][k];
                }
                d
            }
        }
    }

    /// Exact 1-norm reciprocal condition number, `1 / (‖A‖₁ ‖A⁻¹‖₁)`.
    /// Zero when the matrix is numerically singular.
    pub fn rcond(&self) -> f64 {
        match self.inverse() {
            None => 0.0,
            Some(inv) => {
                let p = self.norm_one() * inv.norm_one();
                if p.is_finite() && p > 0.0 {
                    1.0 / p
                } else {
                    0.0
                }
            }
        }
    }

    /// All eigenvalues, via Durand–Kerner iteration on the characteristic
    /// polynomial `det(A − λI)` evaluated directly through LU.
    ///
    /// The matrix is scaled by its ∞-norm so the roots live in the unit
    /// disk; this keeps the iteration well behaved for the strongly
    /// scale-separated rate matrices that arise here (kHz mechanics next
    /// to hundreds-of-kHz cavities).
    pub fn eigenvalues(&self) -> [C64; N] {
        let mut scale = 0.0f64;
        for i in 0..N {
            let mut s = 0.0;
            for j in 0..N {
                s += self.data[i][j].norm();
            }
            scale = scale.max(s);
        }
        if scale == 0.0 {
            return [C64::new(0.0, 0.0); N];
        }
        let b = self.scale(C64::new(1.0 / scale, 0.0));
        let charpoly = |z: C64| -> C64 {
            let mut m = b;
            for i in 0..N {
                m.data[i][i] -= z;
            }
            // det(B − zI) = Π (λ_i − z); as a polynomial in z it is monic
            // for even N and (−1)^N-scaled otherwise.
            let d = m.det();
            if N.is_multiple_of(2) {
                d
            } else {
                -d
            }
        };
        // Standard non-symmetric starting configuration.
        let seed = C64::new(0.4, 0.9);
        let mut z = [C64::new(0.0, 0.0); N];
        let mut acc = C64::new(1.0, 0.0);
        for zk in z.iter_mut() {
            acc *= seed;
            *zk = acc;
        }
        for _ in 0..500 {
            let mut moved = 0.0f64;
            for k in 0..N {
                let pk = charpoly(z[k]);
                let mut denom = C64::new(1.0, 0.0);
                for j in 0..N {
                    if j != k {
                        denom *= z[k] - z[j];
                    }
                }
                if denom.norm() == 0.0 {
                    // Collided approximants: nudge deterministically.
                    z[k] += C64::new(1e-8, 1e-8);
                    moved = moved.max(1e-8);
                    continue;
                }
                let dz = pk / denom;
                z[k] -= dz;
                moved = moved.max(dz.norm());
            }
            if moved < 1e-15 {
                break;
            }
        }
        let mut out = [C64::new(0.0, 0.0); N];
        for k in 0..N {
            out[k] = z[k] * scale;
        }
        out
    }
}

struct Lu<const N: usize> {
    lu: [[C64; N]; N],
    perm: [usize; N],
    sign_swaps: usize,
}

impl<const N: usize> Lu<N> {
    fn solve(&self, b: &[C64; N]) -> [C64; N] {
        let mut x = [C64::new(0.0, 0.0); N];
        for i in 0..N {
            x[i] = b[self.perm[i]];
        }
        for i in 1..N {
            for j in 0..i {
                let s = self.lu[i][j] * x[j];
                x[i] -= s;
            }
        }
        for i in (0..N).rev() {
            for j in (i + 1)..N {
                let s = self.lu[i][j] * x[j];
                x[i] -= s;
            }
            x[i] /= self.lu[i][i];
        }
        x
    }
}
