//! The convolution algebra of locally constant functions on the fiber
//! product, with exact integer structure constants.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::monodromy::ComponentAtlas;

pub const DEFAULT_SEED: u64 = 0x5eed;
const MAX_PROBES: usize = 20;
const PURIFY_ROUNDS: usize = 8;

/// Coefficients of an algebra element in the basis of orbit indicators.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct AlgebraElement {
    pub coeffs: Vec<Complex64>,
}

impl AlgebraElement {
    pub fn zero(dim: usize) -> Self {
        Self { coeffs: vec![Complex64::new(0.0, 0.0); dim] }
    }

    pub fn basis(dim: usize, orbit: usize) -> Self {
        let mut e = Self::zero(dim);
        e.coeffs[orbit] = Complex64::new(1.0, 0.0);
        e
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self { coeffs: coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|a| a * s).collect() }
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.sub(other).max_abs()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvolutionAlgebra {
    dim: usize,
    /// `structure[(o * dim + p) * dim + q]`
    structure: Vec<u64>,
    identity: Vec<usize>,
    involution: Vec<usize>,
    reps: Vec<(usize, usize)>,
}

/// `c[O][P][Q] = #{t : orbit(i,t) = O, orbit(t,j) = P}` for `(i,j)` in `Q`,
/// checked to be the same for every pair of `Q`.
pub fn structure_constants(atlas: &ComponentAtlas) -> Result<ConvolutionAlgebra> {
    let q = atlas.orbit_count();
    let n = atlas.fiber_size();
    let mut structure = vec![0u64; q * q * q];
    let mut seen = vec![false; q];
    let mut counts = vec![0u64; q * q];
    for i in 0..n {
        for j in 0..n {
            counts.iter_mut().for_each(|c| *c = 0);
            for t in 0..n {
                counts[atlas.orbit(i, t) * q + atlas.orbit(t, j)] += 1;
            }
            let target = atlas.orbit(i, j);
            for op in 0..q * q {
                let slot = &mut structure[op * q + target];
                if !seen[target] {
                    *slot = counts[op];
                } else if *slot != counts[op] {
                    return Err(Error::Internal(format!(
                        "structure constants depend on the representative of orbit {target}; the atlas is not monodromy invariant"
                    )));
                }
            }
            seen[target] = true;
        }
    }
    let involution = (0..q).map(|o| atlas.transpose(o)).collect();
    Ok(ConvolutionAlgebra {
        dim: q,
        structure,
        identity: atlas.diagonal_orbits(),
        involution,
        reps: atlas.canonical_reps().to_vec(),
    })
}

impl ConvolutionAlgebra {
    /// Builds an algebra from raw data without checking any law.
    pub fn from_parts(dim: usize, structure: Vec<u64>, identity: Vec<usize>, involution: Vec<usize>) -> Result<Self> {
        if structure.len() != dim * dim * dim || involution.len() != dim || identity.iter().any(|&o| o >= dim) {
            return Err(Error::Input("inconsistent algebra dimensions".into()));
        }
        Ok(Self { dim, structure, identity, involution, reps: Vec::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn c(&self, o: usize, p: usize, q: usize) -> u64 {
        self.structure[(o * self.dim + p) * self.dim + q]
    }

    pub fn identity_orbits(&self) -> &[usize] {
        &self.identity
    }

    pub fn identity(&self) -> AlgebraElement {
        let mut e = AlgebraElement::zero(self.dim);
        for &o in &self.identity {
            e.coeffs[o] = Complex64::new(1.0, 0.0);
        }
        e
    }

    pub fn involution_map(&self) -> &[usize] {
        &self.involution
    }

    pub fn representatives(&self) -> &[(usize, usize)] {
        &self.reps
    }

    /// Nonzero entries as `(O, P, Q, c)`.
    pub fn sparse_structure(&self) -> Vec<(usize, usize, usize, u64)> {
        let d = self.dim;
        (0..d)
            .flat_map(|o| (0..d).flat_map(move |p| (0..d).map(move |q| (o, p, q))))
            .filter_map(|(o, p, q)| {
                let c = self.c(o, p, q);
                (c != 0).then_some((o, p, q, c))
            })
            .collect()
    }

    fn check_dim(&self, a: &AlgebraElement) -> Result<()> {
        if a.dim() != self.dim {
            return Err(Error::Input(format!("element has {} coefficients, algebra has dimension {}", a.dim(), self.dim)));
        }
        Ok(())
    }

    pub fn convolve(&self, a: &AlgebraElement, b: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_dim(a)?;
        self.check_dim(b)?;
        let d = self.dim;
        let mut out = AlgebraElement::zero(d);
        for o in 0..d {
            if a.coeffs[o] == Complex64::new(0.0, 0.0) {
                continue;
            }
            for p in 0..d {
                let ab = a.coeffs[o] * b.coeffs[p];
                if ab == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for q in 0..d {
                    let c = self.c(o, p, q);
                    if c != 0 {
                        out.coeffs[q] += ab * c as f64;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn involution(&self, a: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_dim(a)?;
        let mut out = AlgebraElement::zero(self.dim);
        for (o, c) in a.coeffs.iter().enumerate() {
            out.coeffs[self.involution[o]] = c.conj();
        }
        Ok(out)
    }

    pub fn is_commutative(&self) -> bool {
        let d = self.dim;
        (0..d).all(|o| (0..d).all(|p| (0..d).all(|q| self.c(o, p, q) == self.c(p, o, q))))
    }

    pub fn is_associative(&self) -> bool {
        let d = self.dim;
        for o in 0..d {
            for p in 0..d {
                for r in 0..d {
                    for s in 0..d {
                        let left: u64 = (0..d).map(|q| self.c(o, p, q) * self.c(q, r, s)).sum();
                        let right: u64 = (0..d).map(|q| self.c(p, r, q) * self.c(o, q, s)).sum();
                        if left != right {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// `e ⋆ e_O = e_O ⋆ e = e_O` for the identity `e`, exactly.
    pub fn has_identity(&self) -> bool {
        let d = self.dim;
        (0..d).all(|o| {
            (0..d).all(|q| {
                let left: u64 = self.identity.iter().map(|&i| self.c(i, o, q)).sum();
                let right: u64 = self.identity.iter().map(|&i| self.c(o, i, q)).sum();
                let want = u64::from(o == q);
                left == want && right == want
            })
        })
    }

    /// `c[O][P][Q] = c[P*][O*][Q*]` and `O** = O`.
    pub fn involution_is_anti_automorphism(&self) -> bool {
        let d = self.dim;
        let s = &self.involution;
        (0..d).all(|o| s[s[o]] == o)
            && (0..d).all(|o| (0..d).all(|p| (0..d).all(|q| self.c(o, p, q) == self.c(s[p], s[o], s[q]))))
    }

    /// Left regular representation: column `P` holds `x ⋆ e_P`.
    pub fn left_regular(&self, x: &AlgebraElement) -> Result<DMatrix<Complex64>> {
        self.check_dim(x)?;
        let d = self.dim;
        Ok(DMatrix::from_fn(d, d, |q, p| {
            (0..d).map(|o| x.coeffs[o] * self.c(o, p, q) as f64).sum()
        }))
    }

    /// Minimal self-adjoint idempotents with the default seed.
    pub fn minimal_idempotents(&self) -> Result<Vec<AlgebraElement>> {
        self.minimal_idempotents_seeded(DEFAULT_SEED)
    }

    /// Spectral projections of a generic self-adjoint element, refined by
    /// purification and verified to 1e-10. Ordered by descending coefficient
    /// vectors (real parts, then imaginary parts).
    pub fn minimal_idempotents_seeded(&self, seed: u64) -> Result<Vec<AlgebraElement>> {
        if !self.is_commutative() {
            return Err(Error::Unsupported(
                "the convolution algebra is not commutative; idempotent extraction is not attempted".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..MAX_PROBES {
            let x = self.random_self_adjoint(&mut rng);
            let Some(eigs) = self.separated_spectrum(&x)? else { continue };
            let mut out = Vec::with_capacity(eigs.len());
            for k in 0..eigs.len() {
                out.push(self.spectral_projection(&x, &eigs, k)?);
            }
            if self.verify_idempotents(&out, 1e-10).is_err() {
                continue;
            }
            out.sort_by(descending);
            return Ok(out);
        }
        Err(Error::Numerical(format!(
            "could not separate the spectrum of a self-adjoint element after {MAX_PROBES} probes"
        )))
    }

    fn random_self_adjoint(&self, rng: &mut ChaCha8Rng) -> AlgebraElement {
        let mut x = AlgebraElement::zero(self.dim);
        for o in 0..self.dim {
            let s = self.involution[o];
            if s < o {
                continue;
            }
            let alpha = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if s == o {
                x.coeffs[o] += Complex64::new(2.0 * alpha.re, 0.0);
            } else {
                x.coeffs[o] += alpha;
                x.coeffs[s] += alpha.conj();
            }
        }
        x
    }

    /// Eigenvalues of the regular representation if they are real and pairwise separated.
    fn separated_spectrum(&self, x: &AlgebraElement) -> Result<Option<Vec<f64>>> {
        let l = self.left_regular(x)?;
        let scale = l.iter().map(|c| c.norm()).fold(1.0, f64::max);
        let Some(schur) = Schur::try_new(l, f64::EPSILON, 1000 * self.dim.max(1)) else {
            return Ok(None);
        };
        let eigs = schur.eigenvalues().ok_or_else(|| Error::Numerical("no eigenvalues from Schur form".into()))?;
        let mut re = Vec::with_capacity(eigs.len());
        for e in eigs.iter() {
            if e.im.abs() > 1e-8 * scale {
                return Ok(None);
            }
            re.push(e.re);
        }
        re.sort_by(f64::total_cmp);
        if re.windows(2).any(|w| w[1] - w[0] < 1e-4 * scale) {
            return Ok(None);
        }
        Ok(Some(re))
    }

    fn spectral_projection(&self, x: &AlgebraElement, eigs: &[f64], k: usize) -> Result<AlgebraElement> {
        let e = self.identity();
        let mut p = e.clone();
        for (l, &lambda) in eigs.iter().enumerate() {
            if l == k {
                continue;
            }
            let factor = x.sub(&e.scale(Complex64::new(lambda, 0.0))).scale(Complex64::new(1.0 / (eigs[k] - lambda), 0.0));
            p = self.convolve(&p, &factor)?;
        }
        for _ in 0..PURIFY_ROUNDS {
            let p2 = self.convolve(&p, &p)?;
            let p3 = self.convolve(&p2, &p)?;
            p = p2.scale(Complex64::new(3.0, 0.0)).sub(&p3.scale(Complex64::new(2.0, 0.0)));
        }
        let star = self.involution(&p)?;
        Ok(p.add(&star).scale(Complex64::new(0.5, 0.0)))
    }

    /// Checks `p_k ⋆ p_l = δ_kl p_k`, `p_k* = p_k` and `Σ p_k = e` to `tol`.
    pub fn verify_idempotents(&self, ps: &[AlgebraElement], tol: f64) -> Result<()> {
        let fail = |what: String| Err(Error::Numerical(what));
        let mut sum = AlgebraElement::zero(self.dim);
        for (k, p) in ps.iter().enumerate() {
            sum = sum.add(p);
            let star = self.involution(p)?;
            if star.distance(p) > tol {
                return fail(format!("idempotent {k} is not self-adjoint"));
            }
            if p.max_abs() <= tol {
                return fail(format!("idempotent {k} vanishes"));
            }
            for (l, r) in ps.iter().enumerate() {
                let prod = self.convolve(p, r)?;
                let want = if k == l { p.clone() } else { AlgebraElement::zero(self.dim) };
                if prod.distance(&want) > tol {
                    return fail(format!("p_{k} ⋆ p_{l} deviates by {:e}", prod.distance(&want)));
                }
            }
        }
        if sum.distance(&self.identity()) > tol {
            return fail("idempotents do not sum to the identity".into());
        }
        Ok(())
    }

    /// Largest deviation from `p_k ⋆ p_l = δ_kl p_k`, `p_k* = p_k`, `Σ p_k = e`.
    pub fn idempotent_defect(&self, ps: &[AlgebraElement]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        let mut sum = AlgebraElement::zero(self.dim);
        for (k, p) in ps.iter().enumerate() {
            sum = sum.add(p);
            worst = worst.max(self.involution(p)?.distance(p));
            for (l, r) in ps.iter().enumerate() {
                let prod = self.convolve(p, r)?;
                let want = if k == l { p.clone() } else { AlgebraElement::zero(self.dim) };
                worst = worst.max(prod.distance(&want));
            }
        }
        Ok(worst.max(sum.distance(&self.identity())))
    }

    /// Whether this is the tensor product of `factors` when orbit `O` corresponds
    /// to the factor orbits `tuples[O]`.
    pub fn is_tensor_product_of(&self, factors: &[ConvolutionAlgebra], tuples: &[Vec<usize>]) -> bool {
        let d = self.dim;
        if tuples.len() != d || factors.iter().map(ConvolutionAlgebra::dim).product::<usize>() != d {
            return false;
        }
        (0..d).all(|o| {
            (0..d).all(|p| {
                (0..d).all(|q| {
                    let prod: u64 = factors
                        .iter()
                        .enumerate()
                        .map(|(k, a)| a.c(tuples[o][k], tuples[p][k], tuples[q][k]))
                        .product();
                    prod == self.c(o, p, q)
                })
            })
        }) && (0..d).all(|o| {
            let star = self.involution[o];
            factors.iter().enumerate().all(|(k, a)| a.involution[tuples[o][k]] == tuples[star][k])
        })
    }
}

fn descending(a: &AlgebraElement, b: &AlgebraElement) -> std::cmp::Ordering {
    let key = |e: &AlgebraElement| -> Vec<f64> {
        e.coeffs.iter().map(|c| c.re).chain(e.coeffs.iter().map(|c| c.im)).collect()
    };
    let (ka, kb) = (key(a), key(b));
    for (x, y) in ka.iter().zip(&kb) {
        if (x - y).abs() > 1e-9 {
            return y.total_cmp(x);
        }
    }
    std::cmp::Ordering::Equal
}
