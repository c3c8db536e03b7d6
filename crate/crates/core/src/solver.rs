//! Solution of `(I - D^-1 C) x = D^-1 b` by BiCGstab, with `C` either
//! stored block by block or regenerated on every product.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use thiserror::Error;

use crate::assembly::{AssemblyError, BlockRow, Discretization};
use crate::linalg::{hpd_condition_number, CMatrix, Cholesky, Lu};
use crate::mesh::Mesh;
use crate::{par, C64};

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("element {element}: D block is singular (condition estimate {condition:e})")]
    SingularBlock { element: usize, condition: f64 },
    #[error("vector length {got} does not match {expected} unknowns")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("BiCGstab did not reach {tol:e} in {iterations} iterations (residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64, tol: f64 },
    #[error("BiCGstab broke down twice (iteration {0})")]
    Breakdown(usize),
    #[error("tolerance must be positive")]
    InvalidTolerance,
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMode {
    #[default]
    Stored,
    MatrixFree,
}

impl SolverMode {
    pub fn name(self) -> &'static str {
        match self {
            SolverMode::Stored => "stored",
            SolverMode::MatrixFree => "matrix_free",
        }
    }
}

#[derive(Debug, Clone)]
pub enum BlockFactor {
    Cholesky(Cholesky),
    /// Used when Cholesky fails on a numerically indefinite block.
    Lu(Lu),
}

impl BlockFactor {
    pub fn solve_in_place(&self, b: &mut [C64]) {
        match self {
            BlockFactor::Cholesky(c) => c.solve_in_place(b),
            BlockFactor::Lu(l) => l.solve_in_place(b),
        }
    }

    pub fn heap_bytes(&self) -> usize {
        match self {
            BlockFactor::Cholesky(c) => c.heap_bytes(),
            BlockFactor::Lu(l) => l.heap_bytes(),
        }
    }
}

/// Per-element factors of `D`.
#[derive(Debug, Clone)]
pub struct FactoredD {
    pub blocks: Vec<BlockFactor>,
    /// Elements whose block needed the LU fallback.
    pub lu_fallbacks: Vec<usize>,
}

impl FactoredD {
    pub fn heap_bytes(&self) -> usize {
        self.blocks.iter().map(|b| b.heap_bytes()).sum()
    }
}

/// Cholesky of every block, falling back to pivoted LU.
pub fn factor_d(d: &[CMatrix]) -> Result<FactoredD, SolverError> {
    collect_factors(par::map_range(d.len(), |e| factor_block(e, &d[e])))
}

/// Like [`factor_d`] but builds each `D` block just before factoring it, so
/// the assembled blocks are never held all at once.
pub fn factor_elements(disc: &Discretization) -> Result<FactoredD, SolverError> {
    collect_factors(par::map_range(disc.mesh.elements.len(), |e| factor_block(e, &disc.d_block(e))))
}

fn factor_block(e: usize, d: &CMatrix) -> Result<(BlockFactor, bool), SolverError> {
    match Cholesky::new(d) {
        Ok(c) => Ok((BlockFactor::Cholesky(c), false)),
        Err(_) => match Lu::new(d) {
            Ok(l) => Ok((BlockFactor::Lu(l), true)),
            Err(_) => Err(SolverError::SingularBlock { element: e, condition: hpd_condition_number(d) }),
        },
    }
}

fn collect_factors(results: Vec<Result<(BlockFactor, bool), SolverError>>) -> Result<FactoredD, SolverError> {
    let mut blocks = Vec::with_capacity(results.len());
    let mut lu_fallbacks = Vec::new();
    for (e, r) in results.into_iter().enumerate() {
        let (f, lu) = r?;
        if lu {
            lu_fallbacks.push(e);
        }
        blocks.push(f);
    }
    Ok(FactoredD { blocks, lu_fallbacks })
}

/// Product with the coupling matrix `C`.
pub trait Coupling: Sync {
    /// `y = C x`.
    fn apply(&self, x: &[C64], y: &mut [C64]) -> Result<(), SolverError>;
}

/// Element-ordered chunk bounds of the global vector.
fn chunk_bounds(disc: &Discretization) -> Vec<usize> {
    let mut bounds = Vec::with_capacity(disc.order.len() + 1);
    bounds.push(0);
    for &e in &disc.order {
        bounds.push(disc.offsets[e] + disc.bases[e].dim());
    }
    bounds
}

/// `C` held in memory as assembled block rows.
pub struct StoredCoupling<'a> {
    pub disc: &'a Discretization,
    pub rows: Vec<BlockRow>,
    bounds: Vec<usize>,
}

impl<'a> StoredCoupling<'a> {
    pub fn new(disc: &'a Discretization) -> Result<Self, SolverError> {
        let rows = disc.assemble_c()?;
        Ok(Self { disc, rows, bounds: chunk_bounds(disc) })
    }

    pub fn heap_bytes(&self) -> usize {
        self.rows.iter().map(|r| r.heap_bytes()).sum()
    }
}

impl Coupling for StoredCoupling<'_> {
    fn apply(&self, x: &[C64], y: &mut [C64]) -> Result<(), SolverError> {
        check_len(self.disc.n_dof, x.len())?;
        check_len(self.disc.n_dof, y.len())?;
        let order = &self.disc.order;
        par::for_each_chunk(y, &self.bounds, |i, chunk| {
            let e = order[i];
            self.disc.row_product(&self.rows[e], x, chunk);
        });
        Ok(())
    }
}

/// `C` recomputed row by row on every product; nothing beyond `D` is stored.
pub struct MatrixFreeCoupling<'a> {
    pub disc: &'a Discretization,
    bounds: Vec<usize>,
}

impl<'a> MatrixFreeCoupling<'a> {
    pub fn new(disc: &'a Discretization) -> Self {
        Self { disc, bounds: chunk_bounds(disc) }
    }
}

impl Coupling for MatrixFreeCoupling<'_> {
    fn apply(&self, x: &[C64], y: &mut [C64]) -> Result<(), SolverError> {
        check_len(self.disc.n_dof, x.len())?;
        check_len(self.disc.n_dof, y.len())?;
        let order = &self.disc.order;
        let failures = core::sync::atomic::AtomicBool::new(false);
        par::for_each_chunk(y, &self.bounds, |i, chunk| {
            if self.disc.apply_row(order[i], x, chunk).is_err() {
                failures.store(true, core::sync::atomic::Ordering::Relaxed);
            }
        });
        if failures.into_inner() {
            // surface the first failing row deterministically
            for &e in order {
                self.disc.row_blocks(e)?;
            }
        }
        Ok(())
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), SolverError> {
    if expected != got {
        return Err(SolverError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `y = D^-1 x`, element by element.
pub fn apply_d_inverse(disc: &Discretization, factors: &FactoredD, y: &mut [C64]) {
    let bounds = chunk_bounds(disc);
    let order = &disc.order;
    par::for_each_chunk(y, &bounds, |i, chunk| factors.blocks[order[i]].solve_in_place(chunk));
}

/// `y = D^-1 C x`.
pub fn apply_dinv_c(
    disc: &Discretization,
    coupling: &dyn Coupling,
    factors: &FactoredD,
    x: &[C64],
    y: &mut [C64],
) -> Result<(), SolverError> {
    coupling.apply(x, y)?;
    apply_d_inverse(disc, factors, y);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BicgReport {
    pub iterations: usize,
    /// True relative residual `|rhs - A x| / |rhs|` at exit.
    pub relative_residual: f64,
    pub restarts: usize,
}

/// Sequential sum: fixed order, so results do not depend on scheduling.
pub fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).fold(C64::new(0.0, 0.0), |s, (x, y)| s + x.conj() * y)
}

pub fn norm2(a: &[C64]) -> f64 {
    a.iter().fold(0.0, |s, x| s + x.norm_sqr()).sqrt()
}

/// BiCGstab for `A x = rhs` from `x0` (zero if `None`). Convergence is
/// certified on the recomputed true residual; a breakdown (`rho ~ 0`)
/// triggers one restart with a perturbed shadow residual.
pub fn bicgstab<F>(
    mut apply: F,
    rhs: &[C64],
    x0: Option<&[C64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<C64>, BicgReport), SolverError>
where
    F: FnMut(&[C64], &mut [C64]) -> Result<(), SolverError>,
{
    if !(tol > 0.0) {
        return Err(SolverError::InvalidTolerance);
    }
    let n = rhs.len();
    let zero = C64::new(0.0, 0.0);
    let bnorm = norm2(rhs);
    if bnorm == 0.0 {
        return Ok((vec![zero; n], BicgReport { iterations: 0, relative_residual: 0.0, restarts: 0 }));
    }
    let mut x = match x0 {
        Some(x0) => {
            check_len(n, x0.len())?;
            x0.to_vec()
        }
        None => vec![zero; n],
    };
    let mut r = vec![zero; n];
    let mut started = false;
    let mut iterations = 0;
    let mut restarts = 0;
    let mut breakdowns = 0;
    let mut ax = vec![zero; n];
    let mut v = vec![zero; n];
    let mut p = vec![zero; n];
    let mut s = vec![zero; n];
    let mut t = vec![zero; n];
    let mut perturb = false;

    'outer: loop {
        // true residual of the current iterate
        if x0.is_some() || started {
            apply(&x, &mut ax)?;
            for k in 0..n {
                r[k] = rhs[k] - ax[k];
            }
        } else {
            r.copy_from_slice(rhs);
        }
        started = true;
        let res = norm2(&r) / bnorm;
        if res <= tol {
            return Ok((x, BicgReport { iterations, relative_residual: res, restarts }));
        }
        if iterations >= max_iter {
            return Err(SolverError::MaxIterations { iterations, residual: res, tol });
        }
        let r_hat: Vec<C64> = if perturb {
            r.iter().enumerate().map(|(k, v)| *v * (1.0 + 0.25 * ((k as f64) * 0.7).sin())).collect()
        } else {
            r.clone()
        };
        let (mut rho, mut alpha, mut omega) = (C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0));
        v.iter_mut().for_each(|e| *e = zero);
        p.iter_mut().for_each(|e| *e = zero);
        let rhat_norm = norm2(&r_hat);
        while iterations < max_iter {
            let rho_new = dotc(&r_hat, &r);
            if rho_new.norm() <= 1e-30 * rhat_norm * norm2(&r) || omega.norm() == 0.0 {
                breakdowns += 1;
                if breakdowns > 1 {
                    return Err(SolverError::Breakdown(iterations));
                }
                perturb = true;
                restarts += 1;
                continue 'outer;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for k in 0..n {
                p[k] = r[k] + beta * (p[k] - omega * v[k]);
            }
            apply(&p, &mut v)?;
            iterations += 1;
            let rv = dotc(&r_hat, &v);
            if rv.norm() == 0.0 {
                breakdowns += 1;
                if breakdowns > 1 {
                    return Err(SolverError::Breakdown(iterations));
                }
                perturb = true;
                restarts += 1;
                continue 'outer;
            }
            alpha = rho / rv;
            for k in 0..n {
                s[k] = r[k] - alpha * v[k];
            }
            if norm2(&s) / bnorm <= tol {
                for k in 0..n {
                    x[k] += alpha * p[k];
                }
                restarts += 1;
                continue 'outer;
            }
            apply(&s, &mut t)?;
            let tt = dotc(&t, &t);
            omega = if tt.norm() == 0.0 { zero } else { dotc(&t, &s) / tt };
            for k in 0..n {
                x[k] += alpha * p[k] + omega * s[k];
                r[k] = s[k] - omega * t[k];
            }
            if norm2(&r) / bnorm <= tol {
                restarts += 1;
                continue 'outer;
            }
        }
        restarts += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub mode: SolverMode,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-5, max_iter: 5000, mode: SolverMode::Stored }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub mode: SolverMode,
    pub restarts: usize,
    pub n_dof: usize,
    /// Bytes held by the factored `D` blocks.
    pub factor_bytes: usize,
    /// Bytes held by the stored `C` blocks (zero in matrix-free mode).
    pub coupling_bytes: usize,
    /// Elements whose `D` block needed the LU fallback.
    pub lu_fallbacks: Vec<usize>,
}

/// Assemble, factor and solve. Returns the trace coefficients in the
/// layout of `disc.offsets`.
pub fn solve(disc: &Discretization, opts: &SolverOptions) -> Result<(Vec<C64>, SolveReport), SolverError> {
    let factors = factor_elements(disc)?;
    let mut rhs = disc.assemble_rhs()?;
    apply_d_inverse(disc, &factors, &mut rhs);
    let stored;
    let matrix_free;
    let (coupling, coupling_bytes): (&dyn Coupling, usize) = match opts.mode {
        SolverMode::Stored => {
            stored = StoredCoupling::new(disc)?;
            let bytes = stored.heap_bytes();
            (&stored, bytes)
        }
        SolverMode::MatrixFree => {
            matrix_free = MatrixFreeCoupling::new(disc);
            (&matrix_free, 0)
        }
    };
    // D^-1 b is the exact solution when C vanishes; start from it
    let (x, rep) = bicgstab(
        |x, y| {
            apply_dinv_c(disc, coupling, &factors, x, y)?;
            for (yi, xi) in y.iter_mut().zip(x) {
                *yi = *xi - *yi;
            }
            Ok(())
        },
        &rhs,
        Some(&rhs),
        opts.tol,
        opts.max_iter,
    )?;
    Ok((
        x,
        SolveReport {
            iterations: rep.iterations,
            relative_residual: rep.relative_residual,
            mode: opts.mode,
            restarts: rep.restarts,
            n_dof: disc.n_dof,
            factor_bytes: factors.heap_bytes(),
            coupling_bytes,
            lu_fallbacks: factors.lu_fallbacks.clone(),
        },
    ))
}

/// Reverse Cuthill-McKee order of the element graph: `order[i]` is the
/// element placed at position `i`. Each connected component starts from a
/// minimum-degree element.
pub fn rcm_order(mesh: &Mesh) -> Vec<usize> {
    rcm_from_adjacency(&mesh.element_adjacency())
}

pub fn rcm_from_adjacency(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (adj[v].len(), v));
    for &start in &by_degree {
        if seen[start] {
            continue;
        }
        let start = pseudo_peripheral(adj, start);
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !seen[w]).collect();
            next.sort_by_key(|&w| (adj[w].len(), w));
            for w in next {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(adj: &[Vec<usize>], start: usize) -> usize {
    let mut v = start;
    let mut ecc = 0;
    for _ in 0..8 {
        let (far, e) = farthest(adj, v);
        if e <= ecc {
            break;
        }
        ecc = e;
        v = far;
    }
    v
}

fn farthest(adj: &[Vec<usize>], start: usize) -> (usize, usize) {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut best = (start, 0);
    while let Some(v) = queue.pop_front() {
        let d = dist[v];
        if d > best.1 || (d == best.1 && adj[v].len() < adj[best.0].len()) {
            best = (v, d);
        }
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = d + 1;
                queue.push_back(w);
            }
        }
    }
    best
}

/// Largest `|pos(u) - pos(v)|` over graph edges for the given order.
pub fn bandwidth(adj: &[Vec<usize>], order: &[usize]) -> usize {
    let mut pos = vec![0; adj.len()];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    let mut bw = 0;
    for (u, nbrs) in adj.iter().enumerate() {
        for &v in nbrs {
            bw = bw.max(pos[u].abs_diff(pos[v]));
        }
    }
    bw
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_operator_converges_immediately() {
        let rhs: Vec<C64> = (0..5).map(|k| C64::new(k as f64, 1.0)).collect();
        let (x, rep) = bicgstab(
            |x, y| {
                y.copy_from_slice(x);
                Ok(())
            },
            &rhs,
            Some(&rhs),
            1e-10,
            10,
        )
        .unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(x.iter().zip(&rhs).all(|(a, b)| (a - b).norm() < 1e-14));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let rhs = vec![C64::new(0.0, 0.0); 4];
        let (x, rep) = bicgstab(|_, _| unreachable!(), &rhs, None, 1e-8, 10).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(x.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn path_graph_bandwidth_is_one() {
        // 0-3-1-4-2 as a path, numbered badly
        let adj = vec![vec![3], vec![3, 4], vec![4], vec![0, 1], vec![1, 2]];
        let order = rcm_from_adjacency(&adj);
        assert_eq!(bandwidth(&adj, &order), 1);
        let identity: Vec<usize> = (0..5).collect();
        assert!(bandwidth(&adj, &order) <= bandwidth(&adj, &identity));
    }
}
