//! Dense univariate polynomials over complex doubles and their roots.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

const MAX_POLISH_STEPS: usize = 50;

/// Coefficients in ascending order: `coeffs[k]` multiplies `z^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    coeffs: Vec<Complex64>,
}

impl Poly {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        let mut p = Self { coeffs };
        p.trim_exact();
        p
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(vec![c])
    }

    /// `(z - root)`.
    pub fn linear_root(root: Complex64) -> Self {
        Self::new(vec![-root, Complex64::new(1.0, 0.0)])
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == Complex64::new(0.0, 0.0))
    }

    fn trim_exact(&mut self) {
        while self.coeffs.len() > 1 && *self.coeffs.last().unwrap() == Complex64::new(0.0, 0.0) {
            self.coeffs.pop();
        }
        if self.coeffs.is_empty() {
            self.coeffs.push(Complex64::new(0.0, 0.0));
        }
    }

    /// Drop leading coefficients below `rel` times the largest one.
    pub fn trimmed(&self, rel: f64) -> Self {
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut coeffs = self.coeffs.clone();
        while coeffs.len() > 1 && coeffs.last().unwrap().norm() <= rel * scale {
            coeffs.pop();
        }
        Self::new(coeffs)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
    }

    /// Value and first derivative by a single Horner sweep.
    pub fn eval_with_deriv(&self, z: Complex64) -> (Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        let mut p = zero;
        let mut dp = zero;
        for c in self.coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }

    /// Sum of |c_k| |z|^k, the natural scale for the rounding error of `eval`.
    pub fn eval_scale(&self, z: Complex64) -> f64 {
        let r = z.norm();
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c.norm())
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Self::constant(Complex64::new(0.0, 0.0));
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * k as f64)
                .collect(),
        )
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn sub(&self, other: &Self) -> Self {
        let len = self.coeffs.len().max(other.coeffs.len());
        let zero = Complex64::new(0.0, 0.0);
        Self::new(
            (0..len)
                .map(|k| {
                    self.coeffs.get(k).copied().unwrap_or(zero)
                        - other.coeffs.get(k).copied().unwrap_or(zero)
                })
                .collect(),
        )
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// All roots with multiplicity: companion-matrix eigenvalues, each polished by
    /// a Newton variant that stays quadratically convergent at multiple roots.
    ///
    /// Leading coefficients below `1e-14` of the largest are treated as zero;
    /// exact zero roots are deflated before the eigenvalue solve.
    pub fn roots(&self, polish_tol: f64) -> Result<Vec<Complex64>> {
        let p = self.trimmed(1e-14);
        let zero = Complex64::new(0.0, 0.0);
        let low = p.coeffs.iter().take_while(|c| **c == zero).count().min(p.degree());
        let deflated = Poly::new(p.coeffs[low..].to_vec());
        let mut out = vec![zero; low];
        let d = deflated.degree();
        if d == 0 {
            return Ok(out);
        }
        let estimates = eigen_estimates(&deflated).unwrap_or_else(|| aberth(&deflated));
        let dp = deflated.derivative();
        let ddp = dp.derivative();
        for z0 in estimates {
            out.push(polish(&deflated, &dp, &ddp, z0, polish_tol)?);
        }
        Ok(out)
    }

    /// Roots grouped into distinct points with multiplicities.
    ///
    /// Polished roots closer than `coarse` are candidates for one multiple root;
    /// a candidate group of size `m` is accepted when Newton on the `(m-1)`-th
    /// derivative converges to a point where all lower derivatives vanish to
    /// `polish_tol`. Otherwise the group is split at `fine`.
    pub fn roots_with_multiplicity(
        &self,
        polish_tol: f64,
        fine: f64,
    ) -> Result<Vec<(Complex64, usize)>> {
        const COARSE: f64 = 1e-3;
        let p = self.trimmed(1e-14);
        let roots = p.roots(polish_tol)?;
        let mut out = Vec::new();
        for group in single_linkage(&roots, COARSE) {
            if group.len() == 1 {
                out.push((group[0], 1));
                continue;
            }
            match confirm_multiple_root(&p, &group, polish_tol) {
                Some(center) => out.push((center, group.len())),
                None => {
                    for sub in single_linkage(&group, fine) {
                        let center = sub.iter().sum::<Complex64>() / sub.len() as f64;
                        out.push((center, sub.len()));
                    }
                }
            }
        }
        Ok(out)
    }
}

fn single_linkage(points: &[Complex64], radius: f64) -> Vec<Vec<Complex64>> {
    let n = points.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if (points[i] - points[j]).norm() <= radius {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                label[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<(usize, Vec<Complex64>)> = Vec::new();
    for i in 0..n {
        let r = find(&mut label, i);
        match groups.iter_mut().find(|(g, _)| *g == r) {
            Some((_, v)) => v.push(points[i]),
            None => groups.push((r, vec![points[i]])),
        }
    }
    groups.into_iter().map(|(_, v)| v).collect()
}

fn confirm_multiple_root(p: &Poly, group: &[Complex64], tol: f64) -> Option<Complex64> {
    let m = group.len();
    let mut derivs = vec![p.clone()];
    for _ in 0..m {
        let next = derivs.last().unwrap().derivative();
        derivs.push(next);
    }
    // the (m-1)-th derivative has a simple root at an m-fold root of p
    let target = &derivs[m - 1];
    let slope = &derivs[m];
    let mut z = group.iter().sum::<Complex64>() / m as f64;
    for _ in 0..MAX_POLISH_STEPS {
        let s = slope.eval(z);
        if s.norm() == 0.0 {
            return None;
        }
        let step = target.eval(z) / s;
        z -= step;
        if step.norm() <= 4.0 * f64::EPSILON * z.norm().max(1e-300) {
            break;
        }
    }
    let spread = group.iter().map(|g| (g - z).norm()).fold(0.0, f64::max);
    if spread > 1e-3 {
        return None;
    }
    derivs[..m]
        .iter()
        .all(|d| backward_error(d, z) <= tol)
        .then_some(z)
}

fn eigen_estimates(p: &Poly) -> Option<Vec<Complex64>> {
    let d = p.degree();
    let lead = p.coeffs[d];
    let mut companion = DMatrix::<Complex64>::zeros(d, d);
    for i in 1..d {
        companion[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..d {
        companion[(i, d - 1)] = -p.coeffs[i] / lead;
    }
    let schur = nalgebra::linalg::Schur::try_new(companion, f64::EPSILON, 200 * d)?;
    Some(schur.eigenvalues()?.iter().copied().collect())
}

/// Simultaneous Aberth-Ehrlich iteration; used when the eigenvalue solve stalls.
fn aberth(p: &Poly) -> Vec<Complex64> {
    let d = p.degree();
    let lead = p.coeffs[d].norm();
    let radius = 1.0 + p.coeffs[..d].iter().map(|c| c.norm() / lead).fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..d)
        .map(|k| Complex64::from_polar(0.5 * radius, 0.4 + 2.0 * std::f64::consts::PI * k as f64 / d as f64))
        .collect();
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..d {
            let (v, dv) = p.eval_with_deriv(z[i]);
            if v.norm() == 0.0 {
                continue;
            }
            let ratio = v / dv;
            let repulsion: Complex64 = (0..d)
                .filter(|&j| j != i)
                .map(|j| Complex64::new(1.0, 0.0) / (z[i] - z[j]))
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if step.re.is_finite() && step.im.is_finite() {
                z[i] -= step;
                moved = moved.max(step.norm());
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}

fn backward_error(p: &Poly, z: Complex64) -> f64 {
    let scale = p.eval_scale(z);
    if scale == 0.0 {
        0.0
    } else {
        p.eval(z).norm() / scale
    }
}

/// z <- z - p p' / (p'^2 - p p'').
fn polish(p: &Poly, dp: &Poly, ddp: &Poly, z0: Complex64, tol: f64) -> Result<Complex64> {
    let mut z = z0;
    for _ in 0..MAX_POLISH_STEPS {
        let v = p.eval(z);
        if v.norm() == 0.0 {
            return Ok(z);
        }
        let d1 = dp.eval(z);
        let d2 = ddp.eval(z);
        let denom = d1 * d1 - v * d2;
        if denom.norm() == 0.0 {
            break;
        }
        let step = v * d1 / denom;
        if !step.re.is_finite() || !step.im.is_finite() {
            break;
        }
        z -= step;
        if step.norm() <= 4.0 * f64::EPSILON * z.norm().max(1e-300) {
            break;
        }
    }
    let residual = backward_error(p, z);
    if residual > tol {
        return Err(Error::RootPolish { root: z, residual });
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn quadratic_roots() {
        // z^2 - 4z + 1
        let p = Poly::new(vec![c(1.0, 0.0), c(-4.0, 0.0), c(1.0, 0.0)]);
        let mut r: Vec<f64> = p.roots(1e-12).unwrap().iter().map(|z| z.re).collect();
        r.sort_by(f64::total_cmp);
        assert!((r[0] - (2.0 - 3f64.sqrt())).abs() < 1e-14);
        assert!((r[1] - (2.0 + 3f64.sqrt())).abs() < 1e-13);
    }

    #[test]
    fn triple_root_is_grouped_with_multiplicity() {
        let a = c(0.3, 0.1);
        let lin = Poly::linear_root(a);
        let p = lin.mul(&lin).mul(&lin).mul(&Poly::linear_root(c(-0.5, 0.0)));
        let mut roots = p.roots_with_multiplicity(1e-10, 1e-7).unwrap();
        roots.sort_by_key(|(_, m)| *m);
        assert_eq!(roots.len(), 2);
        assert_eq!(roots[0].1, 1);
        assert!((roots[0].0 - c(-0.5, 0.0)).norm() < 1e-12);
        assert_eq!(roots[1].1, 3);
        assert!((roots[1].0 - a).norm() < 1e-12, "{}", roots[1].0);
    }

    #[test]
    fn close_distinct_roots_stay_distinct() {
        let p = Poly::linear_root(c(0.2, 0.0)).mul(&Poly::linear_root(c(0.2005, 0.0)));
        let roots = p.roots_with_multiplicity(1e-10, 1e-7).unwrap();
        assert_eq!(roots.len(), 2);
    }

    #[test]
    fn nilpotent_companion_does_not_hang() {
        let mut coeffs = vec![c(0.0, 0.0); 6];
        coeffs[5] = c(6.0, 0.0);
        let roots = Poly::new(coeffs).roots(1e-10).unwrap();
        assert_eq!(roots.len(), 5);
        assert!(roots.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn aberth_agrees_with_eigenvalues() {
        let p = Poly::linear_root(c(0.1, 0.2))
            .mul(&Poly::linear_root(c(-0.7, 0.0)))
            .mul(&Poly::linear_root(c(0.0, 2.0)));
        let mut a = aberth(&p);
        let mut e = eigen_estimates(&p).unwrap();
        a.sort_by(|x, y| x.re.total_cmp(&y.re));
        e.sort_by(|x, y| x.re.total_cmp(&y.re));
        for (x, y) in a.iter().zip(&e) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn horner_derivative_matches_derivative_poly() {
        let p = Poly::new(vec![c(1.0, 2.0), c(-0.5, 0.0), c(0.0, 3.0), c(2.0, -1.0)]);
        let z = c(0.3, -0.7);
        let (v, dv) = p.eval_with_deriv(z);
        assert!((v - p.eval(z)).norm() < 1e-14);
        assert!((dv - p.derivative().eval(z)).norm() < 1e-14);
    }

    #[test]
    fn constant_has_no_roots() {
        assert!(Poly::constant(c(2.0, 0.0)).roots(1e-10).unwrap().is_empty());
    }
}
