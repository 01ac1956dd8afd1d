//! Supernodal multifrontal LU with partial pivoting inside each front.
//!
//! The symbolic phase works on the structure of `A + A^T` with unknowns
//! optionally bundled into groups (for instance all fields attached to one
//! mesh node). Groups are ordered by nested dissection and eliminated
//! together, so a front always sees every unknown of a node and can pivot
//! across fields.

use super::ordering::{order_graph, Graph};
use super::{norm2, CsrMatrix};
use crate::error::{Error, Result};

/// Panel width of the blocked front factorization.
const PANEL: usize = 48;
/// A pivot is accepted without searching other columns when it is at least
/// this fraction of the largest entry in its column.
const PIVOT_THRESHOLD: f64 = 0.01;
const REFINEMENT_STEPS: usize = 3;

pub struct LuFactors {
    n: usize,
    fronts: Vec<Front>,
    matrix: CsrMatrix,
    factor_nnz: usize,
    delayed: usize,
    /// Equilibration: the factors are those of `diag(row_scale) A diag(col_scale)`.
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
}

struct Front {
    /// Pivot rows (global) in elimination order.
    rows: Vec<usize>,
    /// Pivot columns (global) in elimination order.
    cols: Vec<usize>,
    /// Rows and columns of the front left for ancestors (postponed pivots first).
    rest_rows: Vec<usize>,
    rest_cols: Vec<usize>,
    /// `p x p` packed unit-lower L11 and upper U11, column-major.
    lu11: Vec<f64>,
    /// `q x p` L21, column-major.
    l21: Vec<f64>,
    /// `p x q` U12, column-major.
    u12: Vec<f64>,
}

impl std::fmt::Debug for LuFactors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuFactors")
            .field("n", &self.n)
            .field("fronts", &self.fronts.len())
            .field("factor_nnz", &self.factor_nnz)
            .finish()
    }
}

pub fn lu_factor(matrix: &CsrMatrix) -> Result<LuFactors> {
    let groups: Vec<usize> = (0..matrix.rows()).collect();
    lu_factor_grouped(matrix, &groups)
}

/// Factorizes with unknowns sharing a group id eliminated as one block.
pub fn lu_factor_grouped(matrix: &CsrMatrix, groups: &[usize]) -> Result<LuFactors> {
    let n = matrix.rows();
    if matrix.cols() != n {
        return Err(Error::dims(format!(
            "LU needs a square matrix, got {}x{}",
            n,
            matrix.cols()
        )));
    }
    if groups.len() != n {
        return Err(Error::dims("group map length differs from matrix size"));
    }
    let symbolic = Symbolic::new(matrix, groups)?;
    let (row_scale, col_scale) = equilibrate(matrix);
    let mut t: Vec<(usize, usize, f64)> = matrix.triplets().collect();
    t.iter_mut().for_each(|(i, j, v)| *v *= row_scale[*i] * col_scale[*j]);
    let scaled = super::assemble_csr(n, n, t)?;
    let mut f = numeric(&scaled, symbolic)?;
    f.matrix = matrix.clone();
    f.row_scale = row_scale;
    f.col_scale = col_scale;
    Ok(f)
}

/// Row scaling by the largest entry of each row, then column scaling of the
/// result likewise. Empty rows and columns keep unit scale.
fn equilibrate(a: &CsrMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.rows();
    let mut r = vec![0.0f64; n];
    for (i, _, v) in a.triplets() {
        r[i] = r[i].max(v.abs());
    }
    r.iter_mut().for_each(|x| *x = if *x > 0.0 { 1.0 / *x } else { 1.0 });
    let mut c = vec![0.0f64; a.cols()];
    for (i, j, v) in a.triplets() {
        c[j] = c[j].max((v * r[i]).abs());
    }
    c.iter_mut().for_each(|x| *x = if *x > 0.0 { 1.0 / *x } else { 1.0 });
    (r, c)
}

pub fn solve(factors: &LuFactors, rhs: &[f64]) -> Result<Vec<f64>> {
    factors.solve(rhs)
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Pivots postponed from a front to its parent during factorization.
    pub fn delayed_pivots(&self) -> usize {
        self.delayed
    }

    /// Stored entries of L and U together.
    pub fn factor_nnz(&self) -> usize {
        self.factor_nnz
    }

    /// Solves `A x = b`, followed by at most three steps of iterative refinement.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(Error::dims(format!(
                "right-hand side of length {} for a system of size {}",
                rhs.len(),
                self.n
            )));
        }
        let mut x = self.solve_raw(rhs);
        let bnorm = norm2(rhs);
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut r = vec![0.0; self.n];
        let mut previous = f64::INFINITY;
        for _ in 0..REFINEMENT_STEPS {
            self.matrix.matvec_into(&x, &mut r)?;
            r.iter_mut().zip(rhs).for_each(|(ri, bi)| *ri = bi - *ri);
            let rn = norm2(&r);
            // Stop at the rounding floor or once a step stops paying off.
            if rn <= 1e-15 * bnorm || rn > 0.25 * previous {
                break;
            }
            previous = rn;
            let dx = self.solve_raw(&r);
            x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
        }
        Ok(x)
    }

    #[doc(hidden)]
    pub fn solve_unrefined(&self, rhs: &[f64]) -> Vec<f64> {
        self.solve_raw(rhs)
    }

    fn solve_raw(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b: Vec<f64> = rhs.iter().zip(&self.row_scale).map(|(v, s)| v * s).collect();
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(self.fronts.len());
        for f in &self.fronts {
            let p = f.rows.len();
            let q = f.rest_rows.len();
            let mut y: Vec<f64> = f.rows.iter().map(|&r| b[r]).collect();
            for k in 0..p {
                let yk = y[k];
                if yk != 0.0 {
                    let col = &f.lu11[k * p..(k + 1) * p];
                    for i in k + 1..p {
                        y[i] -= col[i] * yk;
                    }
                }
            }
            for k in 0..p {
                let yk = y[k];
                if yk != 0.0 {
                    let col = &f.l21[k * q..(k + 1) * q];
                    for (j, &r) in f.rest_rows.iter().enumerate() {
                        b[r] -= col[j] * yk;
                    }
                }
            }
            z.push(y);
        }
        let mut x = vec![0.0; self.n];
        for (f, mut y) in self.fronts.iter().zip(z).rev() {
            let p = f.cols.len();
            for (j, &c) in f.rest_cols.iter().enumerate() {
                let xc = x[c];
                if xc != 0.0 {
                    let col = &f.u12[j * p..(j + 1) * p];
                    for i in 0..p {
                        y[i] -= col[i] * xc;
                    }
                }
            }
            for k in (0..p).rev() {
                let col = &f.lu11[k * p..(k + 1) * p];
                y[k] /= col[k];
                let yk = y[k];
                if yk != 0.0 {
                    for i in 0..k {
                        y[i] -= col[i] * yk;
                    }
                }
            }
            for (k, &c) in f.cols.iter().enumerate() {
                x[c] = y[k];
            }
        }
        for (xi, s) in x.iter_mut().zip(&self.col_scale) {
            *xi *= s;
        }
        x
    }
}

struct Symbolic {
    /// Unknowns of each supernode in initial elimination order.
    pivots: Vec<Vec<usize>>,
    rest: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    /// Elimination slot of every unknown.
    slot: Vec<usize>,
    /// First and last slot of every supernode.
    range: Vec<(usize, usize)>,
}

impl Symbolic {
    fn new(a: &CsrMatrix, groups: &[usize]) -> Result<Symbolic> {
        let n = a.rows();
        let ng = groups.iter().map(|&g| g + 1).max().unwrap_or(0);
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); ng];
        for (i, &g) in groups.iter().enumerate() {
            members[g].push(i);
        }
        if members.iter().any(|m| m.is_empty()) {
            return Err(Error::invalid("group ids must be contiguous"));
        }

        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); ng];
        for (i, j, _) in a.triplets() {
            let (gi, gj) = (groups[i], groups[j]);
            if gi != gj {
                adj[gi].push(gj);
                adj[gj].push(gi);
            }
        }
        for l in adj.iter_mut() {
            l.sort_unstable();
            l.dedup();
        }
        let graph = Graph::from_lists(adj);
        let order = order_graph(&graph);
        let mut gpos = vec![0; ng];
        for (k, &g) in order.iter().enumerate() {
            gpos[g] = k;
        }

        // Symbolic elimination on the group graph, positions as labels.
        let mut structure: Vec<Vec<usize>> = Vec::with_capacity(ng);
        let mut pending: Vec<Vec<usize>> = vec![Vec::new(); ng];
        let mut nchildren = vec![0usize; ng];
        for k in 0..ng {
            let g = order[k];
            let mut s: Vec<usize> = graph.adj[graph.xadj[g]..graph.xadj[g + 1]]
                .iter()
                .map(|&h| gpos[h])
                .filter(|&p| p > k)
                .collect();
            for &c in &pending[k] {
                s.extend(structure[c].iter().copied().filter(|&p| p != k));
            }
            pending[k] = Vec::new();
            s.sort_unstable();
            s.dedup();
            if let Some(&parent) = s.first() {
                pending[parent].push(k);
                nchildren[parent] += 1;
            }
            structure.push(s);
        }

        // Supernodes: chains k-1 -> k where k has a single child and the
        // column structures nest (with a little relaxation for tiny fronts).
        let mut start_of = vec![0usize; ng];
        let mut snodes: Vec<(usize, usize)> = Vec::new();
        let mut width = 0;
        for k in 0..ng {
            let merge = k > 0
                && nchildren[k] == 1
                && structure[k - 1].first() == Some(&k)
                && {
                    let extra = structure[k].len() + 1 - structure[k - 1].len();
                    extra == 0 || (width <= 16 && extra <= 2)
                };
            if merge {
                snodes.last_mut().expect("open supernode").1 = k;
                width += members[order[k]].len();
            } else {
                snodes.push((k, k));
                width = members[order[k]].len();
            }
            start_of[k] = snodes.len() - 1;
        }

        let ns = snodes.len();
        let mut slot = vec![0; n];
        let mut pivots = Vec::with_capacity(ns);
        let mut next = 0;
        for &(a0, a1) in &snodes {
            let mut piv = Vec::new();
            for k in a0..=a1 {
                for &d in &members[order[k]] {
                    slot[d] = next;
                    next += 1;
                    piv.push(d);
                }
            }
            pivots.push(piv);
        }
        let mut rest = Vec::with_capacity(ns);
        let mut children = vec![Vec::new(); ns];
        let mut range = Vec::with_capacity(ns);
        for (s, &(_, a1)) in snodes.iter().enumerate() {
            let r: Vec<usize> = structure[a1]
                .iter()
                .flat_map(|&p| members[order[p]].iter().copied())
                .collect();
            if let Some(&p) = structure[a1].first() {
                children[start_of[p]].push(s);
            }
            rest.push(r);
            let first = slot[pivots[s][0]];
            range.push((first, first + pivots[s].len() - 1));
        }
        Ok(Symbolic {
            pivots,
            rest,
            children,
            slot,
            range,
        })
    }
}

fn numeric(a: &CsrMatrix, sym: Symbolic) -> Result<LuFactors> {
    let n = a.rows();
    let at = a.transpose();
    let tiny = 1e-14 * a.max_abs();
    let ns = sym.pivots.len();
    let mut has_parent = vec![false; ns];
    for ch in &sym.children {
        for &c in ch {
            has_parent[c] = true;
        }
    }
    let mut lrow = vec![usize::MAX; n];
    let mut lcol = vec![usize::MAX; n];
    let mut updates: Vec<Option<Update>> = (0..ns).map(|_| None).collect();
    let mut fronts = Vec::with_capacity(ns);
    let mut factor_nnz = 0;
    let mut delayed = 0;

    for s in 0..ns {
        let own = &sym.pivots[s];
        let rest = &sym.rest[s];
        let child_updates: Vec<Update> = sym.children[s]
            .iter()
            .map(|&c| updates[c].take().expect("child processed before parent"))
            .collect();
        let mut prow: Vec<usize> = own.clone();
        let mut pcol: Vec<usize> = own.clone();
        for u in &child_updates {
            prow.extend_from_slice(&u.rows[..u.delayed]);
            pcol.extend_from_slice(&u.cols[..u.delayed]);
        }
        let p = prow.len();
        let q = rest.len();
        let f = p + q;
        for (i, &d) in prow.iter().chain(rest).enumerate() {
            lrow[d] = i;
        }
        for (i, &d) in pcol.iter().chain(rest).enumerate() {
            lcol[d] = i;
        }

        let mut fm = vec![0.0; f * f];
        let (first, last) = sym.range[s];
        for &r in own {
            let (cols, vals) = a.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if sym.slot[c] >= first {
                    fm[lrow[r] + lcol[c] * f] += v;
                }
            }
            let (rows, vals) = at.row(r);
            for (&rr, &v) in rows.iter().zip(vals) {
                if sym.slot[rr] > last {
                    fm[lrow[rr] + lcol[r] * f] += v;
                }
            }
        }
        for u in child_updates {
            let m = u.rows.len();
            for (jj, &cj) in u.cols.iter().enumerate() {
                let dst = lcol[cj] * f;
                let src = &u.values[jj * m..(jj + 1) * m];
                for (ii, &ri) in u.rows.iter().enumerate() {
                    fm[dst + lrow[ri]] += src[ii];
                }
            }
        }

        let allow_delay = has_parent[s];
        let (rperm, cperm, done) = factor_front(&mut fm, f, p, tiny, allow_delay).map_err(
            |(k, pivot)| Error::SingularMatrix {
                column: pcol[k],
                pivot,
                threshold: tiny,
            },
        )?;
        if done < p && !allow_delay {
            return Err(Error::SingularMatrix {
                column: pcol[cperm[done]],
                pivot: 0.0,
                threshold: tiny,
            });
        }

        let m = f - done;
        let mut lu11 = vec![0.0; done * done];
        let mut l21 = vec![0.0; m * done];
        let mut u12 = vec![0.0; done * m];
        for j in 0..done {
            lu11[j * done..(j + 1) * done].copy_from_slice(&fm[j * f..j * f + done]);
            l21[j * m..(j + 1) * m].copy_from_slice(&fm[j * f + done..(j + 1) * f]);
        }
        let mut upd = vec![0.0; m * m];
        for j in 0..m {
            let c = (done + j) * f;
            u12[j * done..(j + 1) * done].copy_from_slice(&fm[c..c + done]);
            upd[j * m..(j + 1) * m].copy_from_slice(&fm[c + done..c + f]);
        }
        let rest_rows: Vec<usize> = rperm[done..].iter().map(|&i| prow[i]).chain(rest.iter().copied()).collect();
        let rest_cols: Vec<usize> = cperm[done..].iter().map(|&i| pcol[i]).chain(rest.iter().copied()).collect();
        if m > 0 {
            updates[s] = Some(Update {
                rows: rest_rows.clone(),
                cols: rest_cols.clone(),
                delayed: p - done,
                values: upd,
            });
        }
        factor_nnz += done * done + 2 * done * m;
        delayed += p - done;
        fronts.push(Front {
            rows: rperm[..done].iter().map(|&i| prow[i]).collect(),
            cols: cperm[..done].iter().map(|&i| pcol[i]).collect(),
            rest_rows,
            rest_cols,
            lu11,
            l21,
            u12,
        });
    }
    Ok(LuFactors {
        n,
        fronts,
        matrix: a.clone(),
        factor_nnz,
        delayed,
        row_scale: Vec::new(),
        col_scale: Vec::new(),
    })
}

/// Schur complement handed from a front to its parent. The first `delayed`
/// rows and columns are unknowns whose pivots were postponed.
struct Update {
    rows: Vec<usize>,
    cols: Vec<usize>,
    delayed: usize,
    values: Vec<f64>,
}

/// Factorizes up to `p` leading columns of the column-major `f x f` front in
/// place and leaves the Schur complement in the trailing block. Rows and
/// columns are only exchanged among the first `p`. A column without an
/// acceptable pivot is moved behind the others and, when `allow_delay` is set,
/// left unfactored for the parent front. Returns the row and column
/// permutations and the number of eliminated pivots, or the local column (and
/// best pivot magnitude) at which no usable pivot exists.
fn factor_front(
    fm: &mut [f64],
    f: usize,
    p: usize,
    tiny: f64,
    allow_delay: bool,
) -> std::result::Result<(Vec<usize>, Vec<usize>, usize), (usize, f64)> {
    let mut rperm: Vec<usize> = (0..p).collect();
    let mut cperm: Vec<usize> = (0..p).collect();
    let at = |i: usize, j: usize| i + j * f;
    let mut active = p;
    let mut k0 = 0;
    while k0 < active {
        let panel_end = (k0 + PANEL).min(active);
        let mut k1 = panel_end;
        let mut failed = false;
        let mut k = k0;
        while k < k1 {
            let mut choice = None;
            let mut fallback = (0.0, k, k);
            for c in k..k1 {
                let (mut best, mut br) = (0.0f64, k);
                for i in k..p {
                    let v = fm[at(i, c)].abs();
                    if v > best {
                        best = v;
                        br = i;
                    }
                }
                let below = fm[at(p, c)..at(f, c)].iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if best > tiny && best >= PIVOT_THRESHOLD * below {
                    choice = Some((br, c));
                    break;
                }
                if best > fallback.0 {
                    fallback = (best, br, c);
                }
            }
            let (r, c) = match choice {
                Some(rc) => rc,
                None if allow_delay => {
                    failed = true;
                    k1 = k;
                    break;
                }
                None => {
                    if !(fallback.0 > tiny) {
                        return Err((cperm[k], fallback.0));
                    }
                    (fallback.1, fallback.2)
                }
            };
            if c != k {
                for i in 0..f {
                    fm.swap(at(i, k), at(i, c));
                }
                cperm.swap(k, c);
            }
            if r != k {
                for j in 0..f {
                    fm.swap(at(k, j), at(r, j));
                }
                rperm.swap(k, r);
            }
            let pivot = fm[at(k, k)];
            for i in k + 1..f {
                fm[at(i, k)] /= pivot;
            }
            for j in k + 1..k1 {
                let ukj = fm[at(k, j)];
                if ukj != 0.0 {
                    for i in k + 1..f {
                        fm[at(i, j)] -= fm[at(i, k)] * ukj;
                    }
                }
            }
            k += 1;
        }
        // Columns up to `panel_end` already carry the in-panel updates.
        if k1 > k0 && panel_end < f {
            for j in panel_end..f {
                for kk in k0..k1 {
                    let x = fm[at(kk, j)];
                    if x != 0.0 {
                        for i in kk + 1..k1 {
                            fm[at(i, j)] -= fm[at(i, kk)] * x;
                        }
                    }
                }
            }
            let (m, w, nc) = (f - k1, k1 - k0, f - panel_end);
            // SAFETY: the regions (rows k1.., cols k0..k1), (rows k0..k1,
            // cols panel_end..) and (rows k1.., cols panel_end..) are disjoint
            // and lie in `fm`.
            unsafe {
                let base = fm.as_mut_ptr();
                matrixmultiply::dgemm(
                    m,
                    w,
                    nc,
                    -1.0,
                    base.add(at(k1, k0)),
                    1,
                    f as isize,
                    base.add(at(k0, panel_end)),
                    1,
                    f as isize,
                    1.0,
                    base.add(at(k1, panel_end)),
                    1,
                    f as isize,
                );
            }
        }
        if failed {
            // Every column is current at a panel boundary; park the failed one last.
            active -= 1;
            if k1 != active {
                for i in 0..f {
                    fm.swap(at(i, k1), at(i, active));
                }
                cperm.swap(k1, active);
            }
        }
        k0 = k1;
    }
    Ok((rperm, cperm, active))
}
