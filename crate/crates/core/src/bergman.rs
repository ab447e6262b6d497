//! Weighted composition operators on truncated Bergman spaces of the disc
//! and polydisc, and the residual checks built on them.
//!
//! Inner products are taken over the disc of radius `r_max` and rescaled by
//! `r_max^(2i+2)`, which recovers the full-disc pairing `<h, e_i>` exactly for
//! holomorphic `h`.

use std::f64::consts::{PI, TAU};
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hecke::{AlgebraElement, ConvolutionAlgebra};
use crate::monodromy::{
    nearest_unambiguous, strides, track, track_in_domain, transport_waypoints, ComponentAtlas, FactorMonodromy, MonodromyRep,
    PathPlanner,
};
use crate::poly::Poly;
use crate::symbol::{BlaschkeProduct, Point, SymbolMap};
use crate::tolerances::Tolerances;

type CMatrix = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const KERNEL_TAIL: f64 = 1e-10;
const SPILL: f64 = 1e-13;
const MAX_GUARD_FACTOR: usize = 8;

/// `sqrt((k+1)/pi)`, the normalization of `e_k = sqrt((k+1)/pi) z^k`.
pub fn basis_scale(k: usize) -> f64 {
    ((k + 1) as f64 / PI).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TruncatedBasis {
    pub n: usize,
}

impl TruncatedBasis {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("truncation order must be positive".into()));
        }
        Ok(Self { n })
    }

    pub fn eval(&self, k: usize, z: Point) -> Complex64 {
        z.powu(k as u32) * basis_scale(k)
    }

    /// `max |<e_k, e_l> - delta_kl|` over `k, l <= kmax`, by quadrature.
    pub fn gram_residual(&self, grid: &QuadratureGrid, kmax: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..=kmax {
            let coeffs = grid.bergman_coefficients(|z| self.eval(k, z), kmax + 1);
            for (l, c) in coeffs.iter().enumerate() {
                let want = if k == l { ONE } else { ZERO };
                worst = worst.max((c - want).norm());
            }
        }
        worst
    }
}

/// Gauss-Legendre in the radius on `[0, r_max]` times a uniform angular grid.
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    radii: Vec<f64>,
    /// Radial weights including the Jacobian `r` and the angular step.
    weights: Vec<f64>,
    m_theta: usize,
    r_max: f64,
}

impl QuadratureGrid {
    pub fn new(m_r: usize, m_theta: usize, r_max: f64) -> Result<Self> {
        if m_r < 16 || m_theta < 16 {
            return Err(Error::Configuration(format!("quadrature {m_r}x{m_theta} is below the 16x16 minimum")));
        }
        if !(r_max > 0.0 && r_max < 1.0) {
            return Err(Error::Configuration(format!("r_max = {r_max} must lie in (0, 1)")));
        }
        let rule = GaussLegendre::new(NonZeroUsize::new(m_r).expect("m_r >= 16"));
        let mut pairs: Vec<(f64, f64)> = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| {
                let r = 0.5 * r_max * (x + 1.0);
                (r, 0.5 * r_max * w * r * TAU / m_theta as f64)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (radii, weights) = pairs.into_iter().unzip();
        let grid = Self { radii, weights, m_theta, r_max };
        let err = (grid.area() - PI * r_max * r_max).abs();
        if err > 1e-12 {
            return Err(Error::Numerical(format!("quadrature misses the disc area by {err:e}")));
        }
        Ok(grid)
    }

    pub fn m_r(&self) -> usize {
        self.radii.len()
    }

    pub fn m_theta(&self) -> usize {
        self.m_theta
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn area(&self) -> f64 {
        self.weights.iter().sum::<f64>() * self.m_theta as f64
    }

    pub fn doubled(&self) -> Result<Self> {
        Self::new(2 * self.m_r(), 2 * self.m_theta, self.r_max)
    }

    pub fn angle(&self, ray: usize) -> f64 {
        TAU * ray as f64 / self.m_theta as f64
    }

    /// Nodes on one ray, innermost first, with their area weights.
    pub fn ray(&self, ray: usize) -> impl Iterator<Item = (Point, f64)> + '_ {
        let theta = self.angle(ray);
        self.radii.iter().zip(&self.weights).map(move |(&r, &w)| (Point::from_polar(r, theta), w))
    }

    /// Rescaling of row `i` from the disc of radius `r_max` to the unit disc.
    fn row_normalization(&self, i: usize) -> f64 {
        self.r_max.powi(-(2 * i as i32 + 2))
    }

    /// `<h, e_i>` for `i < n`, exact up to quadrature error for holomorphic `h`.
    pub fn bergman_coefficients<H>(&self, h: H, n: usize) -> Vec<Complex64>
    where
        H: Fn(Point) -> Complex64 + Sync,
    {
        let per_ray: Vec<Vec<Complex64>> = (0..self.m_theta)
            .into_par_iter()
            .map(|a| {
                let mut acc = vec![ZERO; n];
                for (z, w) in self.ray(a) {
                    let hz = h(z) * w;
                    let zc = z.conj();
                    let mut p = ONE;
                    for (i, slot) in acc.iter_mut().enumerate() {
                        *slot += hz * p * basis_scale(i);
                        p *= zc;
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![ZERO; n];
        for acc in per_ray {
            for (o, a) in out.iter_mut().zip(acc) {
                *o += a;
            }
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o *= self.row_normalization(i);
        }
        out
    }
}

/// An operator on a truncated basis. `reported` lists the basis indices of
/// the requested truncation and `trusted` the indices on which the operator is
/// compared with others; both index into `entries`, which may be larger.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    pub entries: CMatrix,
    pub reported: Vec<usize>,
    pub trusted: Vec<usize>,
}

impl OperatorMatrix {
    /// Every index reported and trusted.
    pub fn full(entries: CMatrix) -> Self {
        let all: Vec<usize> = (0..entries.nrows()).collect();
        Self { entries, reported: all.clone(), trusted: all }
    }

    pub fn trusted_block(&self) -> usize {
        self.trusted.len()
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn restricted(&self) -> CMatrix {
        restrict(&self.entries, &self.trusted)
    }

    /// The matrix on the requested truncation.
    pub fn truncated(&self) -> CMatrix {
        restrict(&self.entries, &self.reported)
    }
}

pub fn restrict(m: &CMatrix, idx: &[usize]) -> CMatrix {
    m.select_rows(idx).select_columns(idx)
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn common_trusted(a: &OperatorMatrix, b: &OperatorMatrix) -> Vec<usize> {
    a.trusted.iter().copied().filter(|i| b.trusted.contains(i)).collect()
}

/// `||AB - BA||` on the common trusted block.
pub fn commutator_residual(a: &OperatorMatrix, b: &OperatorMatrix) -> f64 {
    let idx = common_trusted(a, b);
    let c = &a.entries * &b.entries - &b.entries * &a.entries;
    spectral_norm(&restrict(&c, &idx))
}

/// Lower-triangular matrix of multiplication by `f`: `<f e_j, e_i> = f_(i-j) sqrt((j+1)/(i+1))`.
pub fn toeplitz_matrix(map: &BlaschkeProduct, basis: &TruncatedBasis) -> Result<OperatorMatrix> {
    let n = basis.n;
    let f = map.taylor_coefficients(n);
    if let Some((m, c)) = f.iter().enumerate().find(|(_, c)| c.norm() > 1.0 + 1e-9) {
        return Err(Error::Configuration(format!(
            "Taylor coefficient {m} has modulus {} > 1; the series expansion is unreliable",
            c.norm()
        )));
    }
    let entries = CMatrix::from_fn(n, n, |i, j| {
        if i >= j {
            f[i - j] * ((j + 1) as f64 / (i + 1) as f64).sqrt()
        } else {
            ZERO
        }
    });
    Ok(OperatorMatrix::full(entries))
}

/// Orbit-indicator operators of one Blaschke factor.
#[derive(Clone, Debug)]
pub struct FactorOperators {
    /// Requested truncation.
    pub n: usize,
    /// Size of the assembled matrices.
    pub internal: usize,
    pub degree: usize,
    pub atlas: ComponentAtlas,
    /// `orbit_matrices[O]` is the matrix of the weighted composition with `c = e_O`.
    pub orbit_matrices: Vec<CMatrix>,
    pub toeplitz: CMatrix,
    pub dropped_nodes: usize,
    /// Largest entry cut off at the internal size.
    pub spill: f64,
}

struct RayAccumulator {
    matrices: Vec<CMatrix>,
    dropped_weight: f64,
    dropped_nodes: usize,
}

struct Assembly<'a> {
    map: &'a BlaschkeProduct,
    fm: &'a FactorMonodromy,
    atlas: &'a ComponentAtlas,
    grid: &'a QuadratureGrid,
    /// Detours in the image around the critical values.
    planner: PathPlanner,
    /// Detours in the domain around every branch preimage.
    detour: PathPlanner,
    /// Branch preimages that are not critical points; nodes near them are dropped.
    exclusion: Vec<Point>,
    n: usize,
    tol: &'a Tolerances,
}

impl Assembly<'_> {
    fn polish(&self, w: Point, y: Point) -> Point {
        let mut w = w;
        for _ in 0..2 {
            let (v, d) = self.map.value_and_deriv(w);
            if d.norm() == 0.0 {
                break;
            }
            w -= (v - y) / d;
        }
        w
    }

    fn ray(&self, a: usize) -> Result<RayAccumulator> {
        let q = self.atlas.orbit_count();
        let n = self.n;
        let deg = self.fm.degree();
        let mut acc = RayAccumulator {
            matrices: vec![CMatrix::zeros(n, n); q],
            dropped_weight: 0.0,
            dropped_nodes: 0,
        };
        let mut state: Option<(Point, Vec<Point>)> = None;
        let mut u = vec![vec![ZERO; n]; q];
        let mut v = nalgebra::DVector::<Complex64>::zeros(n);
        let nodes: Vec<(Point, f64)> = self.grid.ray(a).collect();
        for &(z, weight) in nodes.iter().rev() {
            if self.exclusion.iter().any(|e| (z - e).norm() < self.tol.branch_exclusion) {
                acc.dropped_weight += weight;
                acc.dropped_nodes += 1;
                continue;
            }
            let (y, jz) = self.map.value_and_deriv(z);
            let located = |e: Error| Error::Numerical(format!("transport to grid point {z} failed: {e}"));
            let fiber = match &state {
                None => {
                    let path = self.planner.route(&transport_waypoints(self.fm.base_point, y)).map_err(located)?;
                    track(self.map, &path, &self.fm.base_fiber, self.tol).map_err(located)?
                }
                Some((z_prev, prev)) => {
                    let path = self.detour.route(&[*z_prev, z]).map_err(located)?;
                    track_in_domain(self.map, &path, prev, self.tol).map_err(located)?
                }
            };
            let (lz, _) = nearest_unambiguous(&fiber, z).map_err(located)?;
            for row in u.iter_mut() {
                row.iter_mut().for_each(|x| *x = ZERO);
            }
            for l in 0..deg {
                let w = if l == lz { z } else { self.polish(fiber[l], y) };
                let (_, jw) = self.map.value_and_deriv(w);
                let ratio = jz / jw;
                let row = &mut u[self.atlas.orbit(lz, l)];
                let mut p = ratio;
                for (j, slot) in row.iter_mut().enumerate() {
                    *slot += p * basis_scale(j);
                    p *= w;
                }
            }
            let zc = z.conj();
            let mut p = Complex64::new(weight, 0.0);
            for i in 0..n {
                v[i] = p * basis_scale(i);
                p *= zc;
            }
            for (o, row) in u.iter().enumerate() {
                if row.iter().all(|x| *x == ZERO) {
                    continue;
                }
                let ut = nalgebra::DVector::from_column_slice(row);
                acc.matrices[o].ger(ONE, &v, &ut, ONE);
            }
            state = Some((z, fiber));
        }
        Ok(acc)
    }
}

impl FactorOperators {
    /// Assembles at an internal size grown from `basis.n` until the entries
    /// spilling past it into the trusted columns drop below 1e-13, capped at
    /// eight times `basis.n`.
    pub fn assemble(
        map: &BlaschkeProduct,
        fm: &FactorMonodromy,
        basis: &TruncatedBasis,
        grid: &QuadratureGrid,
        tol: &Tolerances,
    ) -> Result<Self> {
        let n = basis.n;
        let trusted = n.saturating_sub(2 * fm.degree());
        let atlas = ComponentAtlas::from_generators(fm.degree(), &fm.generators);
        let branch = branch_preimages(map, tol)?;
        let cap = MAX_GUARD_FACTOR * n;
        let mut internal = n;
        loop {
            let (orbit_matrices, dropped_nodes) = assemble_orbits(map, fm, &atlas, &branch, internal, grid, tol)?;
            let toeplitz = toeplitz_matrix(map, &TruncatedBasis::new(internal)?)?.entries;
            let spill = spill(map, &orbit_matrices, internal, trusted);
            if spill <= SPILL || internal >= cap {
                if spill > SPILL {
                    log::warn!("truncation spill {spill:e} at the internal cap {cap}");
                }
                return Ok(Self {
                    n,
                    internal,
                    degree: fm.degree(),
                    atlas,
                    orbit_matrices,
                    toeplitz,
                    dropped_nodes,
                    spill,
                });
            }
            internal = (internal + (internal / 2).max(16)).min(cap);
        }
    }

    pub fn trusted_block(&self) -> usize {
        self.n.saturating_sub(2 * self.degree)
    }
}

/// Largest entry that truncation at `internal` cuts from products over the first `trusted` columns.
fn spill(map: &BlaschkeProduct, orbit_matrices: &[CMatrix], internal: usize, trusted: usize) -> f64 {
    let edge = internal.saturating_sub(4);
    let mut worst: f64 = 0.0;
    for m in orbit_matrices {
        for k in edge..internal {
            for j in 0..trusted.min(internal) {
                worst = worst.max(m[(k, j)].norm());
            }
        }
    }
    let f = map.taylor_coefficients(internal + 4);
    for c in &f[(internal - trusted.min(internal)).max(1)..] {
        worst = worst.max(c.norm());
    }
    worst
}

/// The set `f^(-1)(f(critical points))`, split into the critical points and
/// the remaining preimages of critical values.
fn branch_preimages(map: &BlaschkeProduct, tol: &Tolerances) -> Result<(Vec<Point>, Vec<Point>)> {
    let values = map.critical_values(tol)?;
    let critical: Vec<Point> = values.iter().flat_map(|cv| cv.points.iter().map(|p| p.point)).collect();
    let mut others: Vec<Point> = Vec::new();
    for cv in &values {
        for z in map.preimages(cv.value, tol)? {
            if critical.iter().chain(&others).all(|p| (p - z).norm() > tol.branch_exclusion) {
                others.push(z);
            }
        }
    }
    Ok((critical, others))
}

fn assemble_orbits(
    map: &BlaschkeProduct,
    fm: &FactorMonodromy,
    atlas: &ComponentAtlas,
    branch: &(Vec<Point>, Vec<Point>),
    n: usize,
    grid: &QuadratureGrid,
    tol: &Tolerances,
) -> Result<(Vec<CMatrix>, usize)> {
    let ctx = Assembly {
        map,
        fm,
        atlas,
        grid,
        planner: PathPlanner::new(fm.critical_values.clone(), tol.lasso_radius()),
        detour: PathPlanner::new(
            branch.0.iter().chain(&branch.1).copied().collect(),
            0.5 * tol.branch_exclusion,
        ),
        exclusion: branch.1.clone(),
        n,
        tol,
    };
    let rays: Vec<RayAccumulator> =
        (0..grid.m_theta()).into_par_iter().map(|a| ctx.ray(a)).collect::<Result<_>>()?;
    let mut orbit_matrices = vec![CMatrix::zeros(n, n); atlas.orbit_count()];
    let mut dropped_weight = 0.0;
    let mut dropped_nodes = 0;
    for r in rays {
        for (m, part) in orbit_matrices.iter_mut().zip(r.matrices) {
            *m += part;
        }
        dropped_weight += r.dropped_weight;
        dropped_nodes += r.dropped_nodes;
    }
    let total = grid.area();
    let redistribute = total / (total - dropped_weight);
    for m in orbit_matrices.iter_mut() {
        for i in 0..n {
            let s = grid.row_normalization(i) * redistribute;
            m.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
    }
    if dropped_nodes > 0 {
        log::debug!("dropped {dropped_nodes} quadrature nodes near branch preimages");
    }
    Ok((orbit_matrices, dropped_nodes))
}

/// Orbit-indicator operators of a symbol, tensorized over the factors of a product map.
#[derive(Clone, Debug)]
pub struct SymbolOperators {
    factors: Vec<FactorOperators>,
    /// Factor orbit of each coordinate, per orbit of the symbol's atlas.
    tuples: Vec<Vec<usize>>,
    reported: Vec<usize>,
    trusted: Vec<usize>,
    dim: usize,
    fiber_size: usize,
}

impl SymbolOperators {
    pub fn assemble(
        map: &SymbolMap,
        rep: &MonodromyRep,
        atlas: &ComponentAtlas,
        basis: &TruncatedBasis,
        grid: &QuadratureGrid,
        tol: &Tolerances,
    ) -> Result<Self> {
        let factors = map
            .factors()
            .iter()
            .zip(rep.factors())
            .map(|(f, fm)| FactorOperators::assemble(f, fm, basis, grid, tol))
            .collect::<Result<Vec<_>>>()?;
        Self::from_factors(factors, atlas)
    }

    pub fn from_factors(factors: Vec<FactorOperators>, atlas: &ComponentAtlas) -> Result<Self> {
        for f in &factors {
            if f.trusted_block() < 4 {
                return Err(Error::Configuration(format!(
                    "truncation N = {} leaves a trusted block of {} for a degree-{} factor; raise N",
                    f.n,
                    f.trusted_block(),
                    f.degree
                )));
            }
        }
        let parts: Vec<ComponentAtlas> = factors.iter().map(|f| f.atlas.clone()).collect();
        let tuples = if parts.len() == 1 {
            if parts[0] != *atlas {
                return Err(Error::Internal("operator atlas differs from the symbol atlas".into()));
            }
            (0..atlas.orbit_count()).map(|o| vec![o]).collect()
        } else {
            atlas.factorize(&parts)?
        };
        let dims: Vec<usize> = factors.iter().map(|f| f.internal).collect();
        let dim = dims.iter().product();
        let st = strides(&dims);
        let within = |i: usize, bound: &dyn Fn(&FactorOperators) -> usize| {
            factors.iter().enumerate().all(|(k, f)| (i / st[k]) % dims[k] < bound(f))
        };
        let reported = (0..dim).filter(|&i| within(i, &|f| f.n)).collect();
        let trusted = (0..dim).filter(|&i| within(i, &|f| f.trusted_block())).collect();
        let fiber_size = factors.iter().map(|f| f.degree).product();
        Ok(Self { factors, tuples, reported, trusted, dim, fiber_size })
    }

    pub fn factors(&self) -> &[FactorOperators] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trusted(&self) -> &[usize] {
        &self.trusted
    }

    pub fn reported(&self) -> &[usize] {
        &self.reported
    }

    /// Largest truncation spill over the factors.
    pub fn spill(&self) -> f64 {
        self.factors.iter().map(|f| f.spill).fold(0.0, f64::max)
    }

    pub fn fiber_size(&self) -> usize {
        self.fiber_size
    }

    pub fn orbit_count(&self) -> usize {
        self.tuples.len()
    }

    pub fn dropped_nodes(&self) -> usize {
        self.factors.iter().map(|f| f.dropped_nodes).sum()
    }

    fn kron_all(&self, pick: impl Fn(usize, &FactorOperators) -> CMatrix) -> CMatrix {
        let mut it = self.factors.iter().enumerate();
        let (k0, f0) = it.next().expect("at least one factor");
        it.fold(pick(k0, f0), |acc, (k, f)| acc.kronecker(&pick(k, f)))
    }

    /// Matrix of the weighted composition operator of `c`.
    pub fn matrix(&self, c: &AlgebraElement) -> Result<OperatorMatrix> {
        if c.dim() != self.orbit_count() {
            return Err(Error::Input(format!(
                "element has {} coefficients, the atlas has {} orbits",
                c.dim(),
                self.orbit_count()
            )));
        }
        let mut entries = CMatrix::zeros(self.dim, self.dim);
        for (o, coeff) in c.coeffs.iter().enumerate() {
            if *coeff == ZERO {
                continue;
            }
            let term = self.kron_all(|k, f| f.orbit_matrices[self.tuples[o][k]].clone());
            entries += term * *coeff;
        }
        Ok(self.wrap(entries))
    }

    /// One multiplication operator per coordinate.
    pub fn toeplitz(&self) -> Vec<OperatorMatrix> {
        (0..self.factors.len())
            .map(|k| {
                self.wrap(self.kron_all(|j, f| {
                    if j == k {
                        f.toeplitz.clone()
                    } else {
                        CMatrix::identity(f.internal, f.internal)
                    }
                }))
            })
            .collect()
    }

    pub fn identity(&self) -> OperatorMatrix {
        self.wrap(CMatrix::identity(self.dim, self.dim))
    }

    fn wrap(&self, entries: CMatrix) -> OperatorMatrix {
        OperatorMatrix { entries, reported: self.reported.clone(), trusted: self.trusted.clone() }
    }

    /// `||matrix(c)^H - matrix(c*)||` on the trusted block.
    pub fn adjoint_residual(&self, alg: &ConvolutionAlgebra, c: &AlgebraElement) -> Result<f64> {
        let a = self.matrix(c)?;
        let b = self.matrix(&alg.involution(c)?)?;
        Ok(spectral_norm(&restrict(&(a.entries.adjoint() - b.entries), &self.trusted)))
    }

    /// `||matrix(a ⋆ b) - matrix(a) matrix(b)||` on the trusted block.
    pub fn homomorphism_residual(&self, alg: &ConvolutionAlgebra, a: &AlgebraElement, b: &AlgebraElement) -> Result<f64> {
        let ab = self.matrix(&alg.convolve(a, b)?)?;
        let prod = &self.matrix(a)?.entries * &self.matrix(b)?.entries;
        Ok(spectral_norm(&restrict(&(ab.entries - prod), &self.trusted)))
    }

    /// Largest commutator with the coordinate multiplication operators.
    pub fn toeplitz_commutator(&self, m: &OperatorMatrix) -> f64 {
        self.toeplitz().iter().map(|t| commutator_residual(t, m)).fold(0.0, f64::max)
    }

    /// `(||matrix(c)||, m max|c|)` on the trusted block, `m` the fiber size.
    pub fn norm_and_bound(&self, c: &AlgebraElement) -> Result<(f64, f64)> {
        let a = self.matrix(c)?;
        Ok((spectral_norm(&a.restricted()), self.fiber_size as f64 * c.max_abs()))
    }

    pub fn reducing_projections(&self, idempotents: &[AlgebraElement]) -> Result<Vec<ReducingProjection>> {
        idempotents
            .iter()
            .map(|p| {
                let matrix = self.matrix(p)?;
                let full = &matrix.entries;
                let restricted = matrix.restricted();
                let idempotent = spectral_norm(&restrict(&(full * full - full), &self.trusted));
                let self_adjoint = spectral_norm(&(restricted.adjoint() - &restricted));
                let commutator = self.toeplitz_commutator(&matrix);
                let rank = matrix.truncated().trace().re.round().max(0.0) as usize;
                let trusted_rank = restricted.trace().re.round().max(0.0) as usize;
                Ok(ReducingProjection { matrix, rank, trusted_rank, idempotent, self_adjoint, commutator })
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct ReducingProjection {
    pub matrix: OperatorMatrix,
    /// Rounded trace over the whole truncation.
    pub rank: usize,
    /// Rounded trace over the trusted block.
    pub trusted_rank: usize,
    pub idempotent: f64,
    pub self_adjoint: f64,
    pub commutator: f64,
}

/// `||Σ P_k - I||` on the trusted block.
pub fn completeness_residual(ps: &[ReducingProjection]) -> f64 {
    let Some(first) = ps.first() else { return 0.0 };
    let dim = first.matrix.dim();
    let sum = ps.iter().fold(CMatrix::zeros(dim, dim), |acc, p| acc + &p.matrix.entries);
    spectral_norm(&restrict(&(sum - CMatrix::identity(dim, dim)), &first.matrix.trusted))
}

/// Largest `||P_k P_l||`, `k != l`, on the trusted block.
pub fn orthogonality_residual(ps: &[ReducingProjection]) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, a) in ps.iter().enumerate() {
        for (l, b) in ps.iter().enumerate() {
            if k != l {
                let prod = &a.matrix.entries * &b.matrix.entries;
                worst = worst.max(spectral_norm(&restrict(&prod, &a.matrix.trusted)));
            }
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelPoint {
    pub w: Point,
    pub norm: f64,
    /// Number of basis terms summed.
    pub terms: usize,
}

/// `||K_w|| = sqrt(Σ_k (k+1)|w|^(2k) / pi)`, summed from `basis.n` terms upward
/// until the remaining tail is below 1e-10 of the sum.
pub fn kernel_norm(w: Point, basis: &TruncatedBasis) -> Result<KernelPoint> {
    if w.norm() > 0.999 {
        return Err(Error::Input(format!("|w| = {} exceeds 0.999", w.norm())));
    }
    let x = w.norm_sqr();
    let tail = |n: usize| -> f64 {
        let xn = x.powi(n as i32);
        xn * ((n + 1) as f64 - n as f64 * x) / ((1.0 - x) * (1.0 - x))
    };
    let mut sum = 0.0;
    let mut xk = 1.0;
    let mut k = 0;
    while k < basis.n || tail(k) > KERNEL_TAIL * sum {
        sum += (k + 1) as f64 * xk;
        xk *= x;
        k += 1;
    }
    Ok(KernelPoint { w, norm: (sum / PI).sqrt(), terms: k })
}

/// `Σ_(i<N) <h, e_i> e_i(w)`, the truncated pairing `<h, K_w>`.
pub fn kernel_pairing(coeffs: &[Complex64], basis: &TruncatedBasis, w: Point) -> Complex64 {
    coeffs.iter().enumerate().map(|(i, c)| c * basis.eval(i, w)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NullstellensatzResult {
    pub fiber: Vec<Point>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

/// `|<(f - f(λ)) g, K_w>|` for every `w` in the fiber over `f(λ)`, by quadrature.
pub fn nullstellensatz_check(
    map: &BlaschkeProduct,
    lambda: Point,
    g: &Poly,
    basis: &TruncatedBasis,
    grid: &QuadratureGrid,
    tol: &Tolerances,
) -> Result<NullstellensatzResult> {
    if 2 * g.degree() >= basis.n {
        return Err(Error::Input(format!("g has degree {} but N = {}", g.degree(), basis.n)));
    }
    let y = map.eval(lambda)?;
    let fiber = map.fiber(y, tol)?;
    let coeffs = grid.bergman_coefficients(|z| (map.value(z) - y) * g.eval(z), basis.n);
    let residuals: Vec<f64> = fiber.iter().map(|&w| kernel_pairing(&coeffs, basis, w).norm()).collect();
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    Ok(NullstellensatzResult { fiber, residuals, max_residual })
}
