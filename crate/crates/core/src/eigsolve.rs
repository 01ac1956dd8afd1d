//! Shift-invert Arnoldi for real pencils `A x = λ M x` with singular,
//! positive-semidefinite `M`.
//!
//! The Krylov basis is orthonormal in the `M` semi-inner product and restarts
//! thickly from the wanted Ritz vectors. Converged vectors are purified by one
//! more application of the operator, which removes components in the null
//! space of `M` (the infinite eigenvalues).

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{dot, lu_factor, lu_factor_grouped, norm2, CsrMatrix, LuFactors};

pub const SEED: u64 = 0x5EED;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda: f64,
    /// Unit Euclidean norm.
    pub vector: Vec<f64>,
    /// `‖A x − λ M x‖ / ‖A x‖`.
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub restarts: usize,
    pub operator_applications: usize,
    pub subspace: usize,
    pub factor_nnz: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenSolution {
    pub pairs: Vec<EigenPair>,
    pub shift: f64,
    pub stats: IterationStats,
}

impl EigenSolution {
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.lambda).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenOptions {
    pub sigma: f64,
    pub k: usize,
    pub tol: f64,
    pub max_restarts: usize,
    /// Krylov subspace size; `None` means `max(2k + 10, 40)`.
    pub subspace: Option<usize>,
}

impl EigenOptions {
    pub fn new(k: usize) -> Self {
        EigenOptions {
            sigma: 0.0,
            k,
            tol: 1e-10,
            max_restarts: 300,
            subspace: None,
        }
    }
}

/// The `k` finite eigenvalues of the pencil nearest `sigma`, ascending.
pub fn shift_invert_arnoldi(
    a: &CsrMatrix,
    m: &CsrMatrix,
    sigma: f64,
    k: usize,
    tol: f64,
    max_restarts: usize,
) -> Result<EigenSolution> {
    let opts = EigenOptions {
        sigma,
        k,
        tol,
        max_restarts,
        subspace: None,
    };
    shift_invert_arnoldi_grouped(a, m, None, &opts)
}

/// As [`shift_invert_arnoldi`], with unknowns grouped for the factorization
/// (see [`lu_factor_grouped`]).
pub fn shift_invert_arnoldi_grouped(
    a: &CsrMatrix,
    m: &CsrMatrix,
    groups: Option<&[usize]>,
    opts: &EigenOptions,
) -> Result<EigenSolution> {
    let n = a.rows();
    if a.cols() != n || m.rows() != n || m.cols() != n {
        return Err(Error::dims(format!(
            "pencil A {}x{}, M {}x{}",
            a.rows(),
            a.cols(),
            m.rows(),
            m.cols()
        )));
    }
    if opts.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if !(opts.tol > 0.0) || !opts.sigma.is_finite() {
        return Err(Error::invalid("tolerance must be positive and the shift finite"));
    }
    let shifted = if opts.sigma == 0.0 {
        a.clone()
    } else {
        a.add_scaled(m, -opts.sigma)?
    };
    let factors = match groups {
        Some(g) => lu_factor_grouped(&shifted, g),
        None => lu_factor(&shifted),
    }
    .map_err(|e| Error::ShiftRejected {
        shift: opts.sigma,
        reason: e.to_string(),
    })?;
    let mut op = Operator {
        lu: factors,
        m,
        applications: 0,
    };
    let mut arnoldi = Arnoldi::new(&mut op, opts)?;
    let ritz = arnoldi.run()?;
    let stats = IterationStats {
        restarts: arnoldi.restarts,
        operator_applications: arnoldi.op.applications,
        subspace: arnoldi.m,
        factor_nnz: arnoldi.op.lu.factor_nnz(),
    };

    let mut pairs = Vec::with_capacity(opts.k);
    for (theta, y) in ritz {
        let x = arnoldi.combine(&y);
        let mut x = arnoldi.op.apply(&x)?;
        let lambda = opts.sigma + 1.0 / theta;
        let s = norm2(&x);
        x.iter_mut().for_each(|v| *v /= s);
        let residual = pair_residual(a, m, lambda, &x)?;
        pairs.push(EigenPair {
            lambda,
            vector: x,
            residual,
        });
    }
    if pairs.iter().any(|p| !(p.residual <= opts.tol)) {
        return Err(Error::Convergence {
            restarts: stats.restarts,
            converged: pairs.iter().filter(|p| p.residual <= opts.tol).count(),
            requested: opts.k,
        });
    }
    pairs.sort_by(|p, q| p.lambda.total_cmp(&q.lambda).then(p.residual.total_cmp(&q.residual)));
    Ok(EigenSolution {
        pairs,
        shift: opts.sigma,
        stats,
    })
}

fn pair_residual(a: &CsrMatrix, m: &CsrMatrix, lambda: f64, x: &[f64]) -> Result<f64> {
    let ax = a.matvec(x)?;
    let mx = m.matvec(x)?;
    let r: Vec<f64> = ax.iter().zip(&mx).map(|(p, q)| p - lambda * q).collect();
    let scale = norm2(&ax);
    Ok(if scale > 0.0 { norm2(&r) / scale } else { norm2(&r) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairResidual {
    pub lambda: f64,
    pub residual: f64,
    pub above_tolerance: bool,
}

/// Recomputes `‖A x − λ M x‖ / ‖A x‖` for every pair.
pub fn residual_report(
    a: &CsrMatrix,
    m: &CsrMatrix,
    solution: &EigenSolution,
    tol: f64,
) -> Result<Vec<PairResidual>> {
    solution
        .pairs
        .iter()
        .map(|p| {
            let residual = pair_residual(a, m, p.lambda, &p.vector)?;
            Ok(PairResidual {
                lambda: p.lambda,
                residual,
                above_tolerance: !(residual <= tol),
            })
        })
        .collect()
}

/// `x ↦ (A − σM)⁻¹ M x`.
struct Operator<'a> {
    lu: LuFactors,
    m: &'a CsrMatrix,
    applications: usize,
}

impl Operator<'_> {
    fn apply(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        self.applications += 1;
        self.lu.solve(&self.m.matvec(x)?)
    }
}

const BREAKDOWN: f64 = 1e-8;

struct Arnoldi<'a, 'b> {
    op: &'b mut Operator<'a>,
    k: usize,
    m: usize,
    tol: f64,
    max_restarts: usize,
    restarts: usize,
    rng: ChaCha8Rng,
    /// Basis vectors and their images under `M`; `v.len()` may reach `m + 1`.
    v: Vec<Vec<f64>>,
    mv: Vec<Vec<f64>>,
    /// `(m + 1) x m` projected operator; the last row couples to `v[m]`.
    h: DMatrix<f64>,
    /// Set once an invariant subspace has been found.
    exhausted: Option<usize>,
    /// Largest `‖T v‖_M` seen so far, an estimate of the operator norm.
    op_norm: f64,
}

type Ritz = (f64, Vec<f64>);

impl<'a, 'b> Arnoldi<'a, 'b> {
    fn new(op: &'b mut Operator<'a>, opts: &EigenOptions) -> Result<Self> {
        let n = op.lu.dim();
        let m = opts.subspace.unwrap_or((2 * opts.k + 10).max(40)).min(n);
        if opts.k > m {
            return Err(Error::invalid(format!(
                "k = {} exceeds the problem dimension {n}",
                opts.k
            )));
        }
        Ok(Arnoldi {
            op,
            k: opts.k,
            m,
            tol: opts.tol,
            max_restarts: opts.max_restarts,
            restarts: 0,
            rng: ChaCha8Rng::seed_from_u64(SEED),
            v: Vec::with_capacity(m + 1),
            mv: Vec::with_capacity(m + 1),
            h: DMatrix::zeros(m + 1, m),
            exhausted: None,
            op_norm: 0.0,
        })
    }

    fn random_vector(&mut self) -> Vec<f64> {
        let n = self.op.lu.dim();
        (0..n).map(|_| self.rng.random_range(-1.0..1.0)).collect()
    }

    /// Orthogonalizes `w` against the basis (two passes of classical
    /// Gram-Schmidt in the `M` inner product), returning coefficients, the
    /// remaining `M`-norm and `M w`.
    fn orthogonalize(&self, w: &mut [f64]) -> Result<(Vec<f64>, f64, Vec<f64>)> {
        let j = self.v.len();
        let mut coef = vec![0.0; j];
        let mut mw = self.op.m.matvec(w)?;
        for _ in 0..2 {
            let c: Vec<f64> = self.v.iter().map(|vi| dot(vi, &mw)).collect();
            for (i, ci) in c.iter().enumerate() {
                if *ci != 0.0 {
                    w.iter_mut().zip(&self.v[i]).for_each(|(a, b)| *a -= ci * b);
                    mw.iter_mut().zip(&self.mv[i]).for_each(|(a, b)| *a -= ci * b);
                }
                coef[i] += ci;
            }
        }
        // The running update of `M w` drifts once basis vectors carry large
        // components in the null space of `M`.
        let mw = self.op.m.matvec(w)?;
        let nrm = dot(w, &mw).max(0.0).sqrt();
        Ok((coef, nrm, mw))
    }

    fn push(&mut self, mut w: Vec<f64>, mut mw: Vec<f64>, nrm: f64) {
        w.iter_mut().for_each(|x| *x /= nrm);
        mw.iter_mut().for_each(|x| *x /= nrm);
        self.v.push(w);
        self.mv.push(mw);
    }

    /// A new unit direction in the range of the operator, `M`-orthogonal to
    /// the basis, or `None` when the range is exhausted.
    fn fresh_direction(&mut self) -> Result<Option<(Vec<f64>, Vec<f64>, f64)>> {
        for _ in 0..3 {
            let r = self.random_vector();
            let mut w = self.op.apply(&r)?;
            let mw0 = self.op.m.matvec(&w)?;
            let before = dot(&w, &mw0).max(0.0).sqrt();
            if before == 0.0 {
                return Ok(None);
            }
            let (_, nrm, mw) = self.orthogonalize(&mut w)?;
            if nrm > BREAKDOWN.sqrt() * before {
                return Ok(Some((w, mw, nrm)));
            }
        }
        Ok(None)
    }

    /// Extends the basis from `v.len() - 1` columns of `h` up to `m`.
    fn expand(&mut self) -> Result<()> {
        while self.v.len() <= self.m && self.exhausted.is_none() {
            let j = self.v.len() - 1;
            let mut w = self.op.apply(&self.v[j])?;
            let scale = {
                let mw = self.op.m.matvec(&w)?;
                dot(&w, &mw).max(0.0).sqrt()
            };
            self.op_norm = self.op_norm.max(scale);
            let (coef, nrm, mw) = self.orthogonalize(&mut w)?;
            for (i, c) in coef.iter().enumerate() {
                self.h[(i, j)] = *c;
            }
            // Rounding in the solve is relative to the whole vector, not its
            // velocity part, so the floor is set by the operator norm.
            if nrm > BREAKDOWN * self.op_norm && nrm > 0.0 {
                self.h[(j + 1, j)] = nrm;
                self.push(w, mw, nrm);
            } else {
                // Invariant subspace: continue with a decoupled direction.
                self.h[(j + 1, j)] = 0.0;
                match self.fresh_direction()? {
                    Some((w, mw, nrm)) => self.push(w, mw, nrm),
                    None => self.exhausted = Some(j + 1),
                }
            }
        }
        Ok(())
    }

    fn size(&self) -> usize {
        self.exhausted.unwrap_or(self.m)
    }

    fn run(&mut self) -> Result<Vec<Ritz>> {
        let r = self.random_vector();
        let mut w = self.op.apply(&r)?;
        let (_, nrm, mw) = self.orthogonalize(&mut w)?;
        if !(nrm > 0.0) {
            return Err(Error::invalid("the pencil has no finite eigenvalues (M x = 0 on the start vector)"));
        }
        self.push(w, mw, nrm);
        loop {
            self.expand()?;
            let p = self.size();
            if p < self.k {
                return Err(Error::invalid(format!(
                    "the pencil has only {p} finite eigenvalues, {} requested",
                    self.k
                )));
            }
            let h = self.h.view((0, 0), (p, p)).into_owned();
            let coupling: Vec<f64> = if self.exhausted.is_some() {
                vec![0.0; p]
            } else {
                self.h.row(p).iter().copied().collect()
            };
            let ritz = ritz_pairs(&h)?;
            let wanted = &ritz[..self.k];
            let est: Vec<f64> = wanted
                .iter()
                .map(|r| {
                    let s: Complex<f64> = r.y.iter().zip(&coupling).map(|(y, b)| y * *b).sum();
                    s.norm()
                })
                .collect();
            let converged = wanted
                .iter()
                .zip(&est)
                .filter(|(r, e)| **e <= 0.1 * self.tol * r.theta.norm())
                .count();
            if converged == self.k {
                if let Some(bad) = wanted.iter().find(|r| r.is_complex()) {
                    let lam = Complex::new(1.0, 0.0) / bad.theta;
                    return Err(Error::SpectralAnomaly {
                        re: lam.re,
                        im: lam.im,
                    });
                }
                return Ok(wanted
                    .iter()
                    .map(|r| (r.theta.re, r.y.iter().map(|c| c.re).collect()))
                    .collect());
            }
            if self.restarts >= self.max_restarts || self.exhausted.is_some() {
                if let Some(bad) = wanted.iter().find(|r| r.is_complex()) {
                    let lam = Complex::new(1.0, 0.0) / bad.theta;
                    return Err(Error::SpectralAnomaly {
                        re: lam.re,
                        im: lam.im,
                    });
                }
                return Err(Error::Convergence {
                    restarts: self.restarts,
                    converged,
                    requested: self.k,
                });
            }
            self.restart(&ritz)?;
        }
    }

    /// Thick restart onto an orthonormal basis of the leading Ritz vectors.
    fn restart(&mut self, ritz: &[RitzVector]) -> Result<()> {
        let m = self.m;
        let keep = (self.k + (m - self.k) / 2).clamp(self.k, m - 1);
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(keep + 1);
        for r in ritz {
            if cols.len() >= keep {
                break;
            }
            let re = DVector::from_iterator(m, r.y.iter().map(|c| c.re));
            add_orthonormal(&mut cols, re);
            if r.is_complex() {
                let im = DVector::from_iterator(m, r.y.iter().map(|c| c.im));
                add_orthonormal(&mut cols, im);
            }
        }
        let l = cols.len();
        let y = DMatrix::from_columns(&cols);
        let h = self.h.view((0, 0), (m, m)).into_owned();
        let h_new = y.transpose() * &h * &y;
        let b_new = self.h.row(m) * &y;

        let n = self.op.lu.dim();
        let mut v_new = vec![vec![0.0; n]; l];
        for (jj, col) in cols.iter().enumerate() {
            for (i, c) in col.iter().enumerate() {
                if *c != 0.0 {
                    v_new[jj].iter_mut().zip(&self.v[i]).for_each(|(a, b)| *a += c * b);
                }
            }
        }
        let mut mv_new = v_new.iter().map(|v| self.op.m.matvec(v)).collect::<Result<Vec<_>>>()?;
        let last = self.v.pop().expect("basis has m + 1 vectors");
        let last_m = self.mv.pop().expect("basis has m + 1 vectors");
        v_new.push(last);
        mv_new.push(last_m);
        self.v = v_new;
        self.mv = mv_new;
        self.h.fill(0.0);
        self.h.view_mut((0, 0), (l, l)).copy_from(&h_new);
        for j in 0..l {
            self.h[(l, j)] = b_new[j];
        }
        self.restarts += 1;
        Ok(())
    }

    /// Basis combination `V y` over the leading `y.len()` vectors.
    fn combine(&self, y: &[f64]) -> Vec<f64> {
        let n = self.op.lu.dim();
        let mut x = vec![0.0; n];
        for (c, vi) in y.iter().zip(&self.v) {
            x.iter_mut().zip(vi).for_each(|(a, b)| *a += c * b);
        }
        x
    }
}

fn add_orthonormal(cols: &mut Vec<DVector<f64>>, mut v: DVector<f64>) {
    let n0 = v.norm();
    for _ in 0..2 {
        for c in cols.iter() {
            let d = c.dot(&v);
            v.axpy(-d, c, 1.0);
        }
    }
    let nrm = v.norm();
    if nrm > 1e-10 * n0 {
        cols.push(v / nrm);
    }
}

struct RitzVector {
    theta: Complex<f64>,
    y: Vec<Complex<f64>>,
}

impl RitzVector {
    fn is_complex(&self) -> bool {
        let lam = Complex::new(1.0, 0.0) / self.theta;
        lam.im.abs() > 1e-8 * lam.re.abs().max(1.0)
    }
}

/// Eigenpairs of the small projected matrix, by decreasing `|θ|`, with unit
/// eigenvectors from inverse iteration. Conjugate partners with negative
/// imaginary part are dropped.
fn ritz_pairs(h: &DMatrix<f64>) -> Result<Vec<RitzVector>> {
    let p = h.nrows();
    let mut thetas: Vec<Complex<f64>> = h.complex_eigenvalues().iter().copied().collect();
    thetas.retain(|t| t.im >= 0.0 || t.im.abs() <= 1e-14 * t.norm());
    thetas.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let scale = h.amax().max(f64::MIN_POSITIVE);
    let hc = h.map(|x| Complex::new(x, 0.0));
    let mut out = Vec::with_capacity(thetas.len());
    for theta in thetas {
        let real = theta.im.abs() <= 1e-14 * theta.norm();
        let theta = if real { Complex::new(theta.re, 0.0) } else { theta };
        // A tiny offset keeps the shifted matrix invertible.
        let shift = theta + Complex::new(1e-13 * scale, 0.0);
        let mut shifted = hc.clone();
        for i in 0..p {
            shifted[(i, i)] -= shift;
        }
        let lu = shifted.lu();
        let mut y = DVector::from_fn(p, |i, _| Complex::new(1.0 + (i as f64 * 0.618).fract(), 0.0));
        for _ in 0..3 {
            y = match lu.solve(&y) {
                Some(s) => s,
                None => {
                    return Err(Error::invalid("projected eigenproblem is singular"));
                }
            };
            let nrm = y.norm();
            if !(nrm > 0.0 && nrm.is_finite()) {
                return Err(Error::invalid("inverse iteration on the projected matrix failed"));
            }
            y /= Complex::new(nrm, 0.0);
        }
        if real {
            // Fix the phase so the vector is real.
            let big = y.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or_default();
            let phase = big / Complex::new(big.norm(), 0.0);
            y.iter_mut().for_each(|c| *c = Complex::new((*c / phase).re, 0.0));
            let nrm = y.norm();
            y /= Complex::new(nrm, 0.0);
        }
        out.push(RitzVector {
            theta,
            y: y.iter().copied().collect(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(d: &[f64]) -> CsrMatrix {
        CsrMatrix::diagonal(d)
    }

    #[test]
    fn diagonal_pencil() {
        let s = shift_invert_arnoldi(&diag(&[1.0, 2.0, 3.0]), &CsrMatrix::identity(3), 0.0, 2, 1e-10, 10).unwrap();
        let l = s.eigenvalues();
        assert!((l[0] - 1.0).abs() < 1e-12 && (l[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn singular_mass_has_one_finite_eigenvalue() {
        let s = shift_invert_arnoldi(&diag(&[2.0, 3.0]), &diag(&[1.0, 0.0]), 0.0, 1, 1e-10, 10).unwrap();
        assert!((s.pairs[0].lambda - 2.0).abs() < 1e-12);
        assert!(s.pairs[0].vector[1].abs() < 1e-14);
        let e = shift_invert_arnoldi(&diag(&[2.0, 3.0]), &diag(&[1.0, 0.0]), 0.0, 2, 1e-10, 10);
        assert!(e.is_err());
    }

    #[test]
    fn zero_mass_and_bad_shift() {
        let e = shift_invert_arnoldi(&diag(&[2.0, 3.0]), &CsrMatrix::zeros(2, 2), 0.0, 1, 1e-10, 10);
        assert!(e.is_err());
        let e = shift_invert_arnoldi(&diag(&[2.0, 3.0]), &CsrMatrix::identity(2), 2.0, 1, 1e-10, 10);
        assert!(matches!(e, Err(Error::ShiftRejected { .. })));
    }

    #[test]
    fn shift_selects_nearest() {
        let d: Vec<f64> = (1..=60).map(|i| i as f64).collect();
        let s = shift_invert_arnoldi(&diag(&d), &CsrMatrix::identity(60), 30.2, 3, 1e-10, 50).unwrap();
        assert_eq!(s.eigenvalues().iter().map(|x| x.round() as i64).collect::<Vec<_>>(), vec![29, 30, 31]);
    }

    #[test]
    fn complex_pencil_is_an_anomaly() {
        // Rotation-like block has eigenvalues 1 ± i.
        let a = crate::sparse::assemble_csr(2, 2, [(0, 0, 1.0), (0, 1, -1.0), (1, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let e = shift_invert_arnoldi(&a, &CsrMatrix::identity(2), 0.0, 1, 1e-10, 5);
        assert!(matches!(e, Err(Error::SpectralAnomaly { .. })), "{e:?}");
    }

    #[test]
    fn residual_report_flags_noise() {
        let a = diag(&[1.0, 2.0, 3.0]);
        let m = CsrMatrix::identity(3);
        let mut s = shift_invert_arnoldi(&a, &m, 0.0, 1, 1e-10, 10).unwrap();
        let r = residual_report(&a, &m, &s, 1e-10).unwrap();
        assert!(r[0].residual < 1e-14 && !r[0].above_tolerance);
        s.pairs[0].vector[1] += 1e-3;
        let r = residual_report(&a, &m, &s, 1e-10).unwrap();
        assert!(r[0].residual > 1e-4 && r[0].above_tolerance);
        s.pairs.clear();
        assert!(residual_report(&a, &m, &s, 1e-10).unwrap().is_empty());
    }

    #[test]
    fn deterministic() {
        let d: Vec<f64> = (0..100).map(|i| 1.0 + (i as f64 * 0.37).sin().abs() * 50.0).collect();
        let s1 = shift_invert_arnoldi(&diag(&d), &CsrMatrix::identity(100), 0.0, 5, 1e-10, 50).unwrap();
        let s2 = shift_invert_arnoldi(&diag(&d), &CsrMatrix::identity(100), 0.0, 5, 1e-10, 50).unwrap();
        assert_eq!(s1, s2);
    }
}
