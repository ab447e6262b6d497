//! Finite Blaschke products, coordinatewise products of them, and the
//! root-finding needed to locate their critical points and fibers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::tolerances::Tolerances;

pub type Point = Complex64;

const ZERO_MARGIN: f64 = 1e-9;
const ROTATION_TOL: f64 = 1e-12;
const DOMAIN_SLACK: f64 = 1e-9;

/// Lexicographic order on (re, im).
pub fn lex_cmp(a: &Point, b: &Point) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub point: Point,
    pub multiplicity: usize,
}

/// A critical value together with the critical points mapping onto it.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticalValue {
    pub value: Point,
    pub points: Vec<CriticalPoint>,
}

/// `rotation * prod (z - a_k) / (1 - conj(a_k) z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlaschkeProduct {
    zeros: Vec<Point>,
    rotation: Point,
    numerator: Poly,
    denominator: Poly,
}

impl BlaschkeProduct {
    pub fn new(zeros: Vec<Point>, rotation: Point) -> Result<Self> {
        if zeros.is_empty() {
            return Err(Error::Input("a Blaschke product needs at least one zero".into()));
        }
        for a in &zeros {
            if !(a.norm() < 1.0 - ZERO_MARGIN) {
                return Err(Error::Input(format!("zero {a} is not inside the open unit disc")));
            }
        }
        if (rotation.norm() - 1.0).abs() > ROTATION_TOL {
            return Err(Error::Input(format!("rotation {rotation} is not unimodular")));
        }
        let one = Complex64::new(1.0, 0.0);
        let mut numerator = Poly::constant(rotation);
        let mut denominator = Poly::constant(one);
        for a in &zeros {
            numerator = numerator.mul(&Poly::linear_root(*a));
            denominator = denominator.mul(&Poly::new(vec![one, -a.conj()]));
        }
        Ok(Self { zeros, rotation, numerator, denominator })
    }

    pub fn with_angle(zeros: Vec<Point>, angle: f64) -> Result<Self> {
        Self::new(zeros, Complex64::from_polar(1.0, angle))
    }

    /// `z^n`.
    pub fn monomial(n: usize) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); n], Complex64::new(1.0, 0.0))
    }

    /// The disc automorphism `(z - a) / (1 - conj(a) z)`.
    pub fn mobius(a: Point) -> Result<Self> {
        Self::new(vec![a], Complex64::new(1.0, 0.0))
    }

    pub fn zeros(&self) -> &[Point] {
        &self.zeros
    }

    pub fn rotation(&self) -> Point {
        self.rotation
    }

    pub fn degree(&self) -> usize {
        self.zeros.len()
    }

    pub fn numerator(&self) -> &Poly {
        &self.numerator
    }

    pub fn denominator(&self) -> &Poly {
        &self.denominator
    }

    fn check_domain(z: Point) -> Result<()> {
        if !(z.norm() <= 1.0 + DOMAIN_SLACK) {
            return Err(Error::Input(format!("point {z} lies outside the closed unit disc")));
        }
        Ok(())
    }

    pub fn eval(&self, z: Point) -> Result<Point> {
        Self::check_domain(z)?;
        Ok(self.value(z))
    }

    pub fn deriv(&self, z: Point) -> Result<Point> {
        Self::check_domain(z)?;
        Ok(self.value_and_deriv(z).1)
    }

    /// Unchecked evaluation from the factored numerator and denominator.
    pub fn value(&self, z: Point) -> Point {
        let one = Complex64::new(1.0, 0.0);
        let mut num = self.rotation;
        let mut den = one;
        for a in &self.zeros {
            num *= z - a;
            den *= one - a.conj() * z;
        }
        num / den
    }

    /// `(f(z), f'(z))` with `f' = (P'Q - PQ') / Q^2`, where P, P', Q, Q' are
    /// taken from prefix/suffix products of the linear factors.
    pub fn value_and_deriv(&self, z: Point) -> (Point, Point) {
        let (p, dp) = factored_with_deriv(self.zeros.iter().map(|a| (Complex64::new(1.0, 0.0), -a)), z);
        let (q, dq) =
            factored_with_deriv(self.zeros.iter().map(|a| (-a.conj(), Complex64::new(1.0, 0.0))), z);
        let p = p * self.rotation;
        let dp = dp * self.rotation;
        (p / q, (dp * q - p * dq) / (q * q))
    }

    /// Numerator of `f'`: `P'Q - PQ'`, of degree at most `2n - 2`.
    pub fn derivative_numerator(&self) -> Poly {
        let p = &self.numerator;
        let q = &self.denominator;
        p.derivative().mul(q).sub(&p.mul(&q.derivative()))
    }

    /// Zeros of `f'` in the open disc, clustered, sorted lexicographically.
    pub fn critical_points(&self, tol: &Tolerances) -> Result<Vec<CriticalPoint>> {
        if self.degree() == 1 {
            return Ok(Vec::new());
        }
        let numer = self.derivative_numerator();
        let clusters: Vec<(Point, usize)> = numer
            .roots_with_multiplicity(tol.root_polish, tol.critical_cluster)?
            .into_iter()
            .filter(|(z, _)| z.norm() < 1.0)
            .collect();
        let total: usize = clusters.iter().map(|(_, m)| m).sum();
        if total != self.degree() - 1 {
            return Err(Error::Numerical(format!(
                "found {total} critical points in the disc, expected {}",
                self.degree() - 1
            )));
        }
        let mut out: Vec<CriticalPoint> = clusters
            .into_iter()
            .map(|(point, multiplicity)| CriticalPoint { point, multiplicity })
            .collect();
        out.sort_by(|a, b| lex_cmp(&a.point, &b.point));
        Ok(out)
    }

    /// Critical values with coincident values merged into one puncture.
    pub fn critical_values(&self, tol: &Tolerances) -> Result<Vec<CriticalValue>> {
        let mut values: Vec<CriticalValue> = Vec::new();
        for cp in self.critical_points(tol)? {
            let v = self.value(cp.point);
            match values.iter_mut().find(|cv| (cv.value - v).norm() <= tol.critical_cluster) {
                Some(cv) => cv.points.push(cp),
                None => values.push(CriticalValue { value: v, points: vec![cp] }),
            }
        }
        values.sort_by(|a, b| lex_cmp(&a.value, &b.value));
        Ok(values)
    }

    /// Roots of `P - yQ` with no regularity checks; repeated roots appear repeatedly.
    pub fn preimages(&self, y: Point, tol: &Tolerances) -> Result<Vec<Point>> {
        let poly = self.numerator.sub(&self.denominator.scale(y));
        let mut roots = poly.roots(tol.root_polish)?;
        roots.sort_by(lex_cmp);
        Ok(roots)
    }

    /// The `n` distinct preimages of a regular value `y`, sorted lexicographically.
    pub fn fiber(&self, y: Point, tol: &Tolerances) -> Result<Vec<Point>> {
        if !(y.norm() < 1.0) {
            return Err(Error::Input(format!("value {y} is not inside the unit disc")));
        }
        for cv in self.critical_values(tol)? {
            let d = (cv.value - y).norm();
            if d <= tol.regular_value_margin {
                return Err(Error::Precondition(format!(
                    "{y} lies within {d:e} of the critical value {}",
                    cv.value
                )));
            }
        }
        self.fiber_of_regular(y, tol)
    }

    /// `fiber` without the critical-value distance check.
    pub fn fiber_of_regular(&self, y: Point, tol: &Tolerances) -> Result<Vec<Point>> {
        let roots = self.preimages(y, tol)?;
        if roots.len() != self.degree() {
            return Err(Error::Numerical(format!(
                "fiber over {y} has {} points, expected {}",
                roots.len(),
                self.degree()
            )));
        }
        for (i, a) in roots.iter().enumerate() {
            if a.norm() >= 1.0 {
                return Err(Error::Numerical(format!("fiber point {a} escaped the disc")));
            }
            for b in &roots[i + 1..] {
                if (a - b).norm() <= tol.collision {
                    return Err(Error::Numerical(format!(
                        "fiber points {a} and {b} collide over {y}"
                    )));
                }
            }
        }
        Ok(roots)
    }

    /// First `len` Taylor coefficients at 0, by series division of P by Q.
    pub fn taylor_coefficients(&self, len: usize) -> Vec<Point> {
        let p = self.numerator.coeffs();
        let q = self.denominator.coeffs();
        let zero = Complex64::new(0.0, 0.0);
        let mut out: Vec<Point> = Vec::with_capacity(len);
        for m in 0..len {
            let mut acc = p.get(m).copied().unwrap_or(zero);
            for k in 1..q.len().min(m + 1) {
                acc -= q[k] * out[m - k];
            }
            out.push(acc);
        }
        out
    }
}

/// Value and derivative of `prod (s_k z + t_k)` given factors `(s_k, t_k)`.
fn factored_with_deriv(factors: impl Iterator<Item = (Point, Point)>, z: Point) -> (Point, Point) {
    let mut value = Complex64::new(1.0, 0.0);
    let mut deriv = Complex64::new(0.0, 0.0);
    for (s, t) in factors {
        deriv = deriv * (s * z + t) + value * s;
        value *= s * z + t;
    }
    (value, deriv)
}

/// Blaschke factors acting coordinatewise on the polydisc.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductMap {
    factors: Vec<BlaschkeProduct>,
}

impl ProductMap {
    pub fn new(factors: Vec<BlaschkeProduct>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Input("a product map needs at least one factor".into()));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[BlaschkeProduct] {
        &self.factors
    }

    pub fn fiber_size(&self) -> usize {
        self.factors.iter().map(|f| f.degree()).product()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SymbolMap {
    Blaschke(BlaschkeProduct),
    Product(ProductMap),
}

impl SymbolMap {
    pub fn factors(&self) -> &[BlaschkeProduct] {
        match self {
            SymbolMap::Blaschke(b) => std::slice::from_ref(b),
            SymbolMap::Product(p) => p.factors(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.factors().len()
    }

    /// Number of points in a regular fiber.
    pub fn fiber_size(&self) -> usize {
        self.factors().iter().map(|f| f.degree()).product()
    }

    fn check_arity(&self, z: &[Point]) -> Result<()> {
        if z.len() != self.dimension() {
            return Err(Error::Input(format!(
                "point has {} coordinates, symbol acts on {}",
                z.len(),
                self.dimension()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, z: &[Point]) -> Result<Vec<Point>> {
        self.check_arity(z)?;
        self.factors().iter().zip(z).map(|(f, &zi)| f.eval(zi)).collect()
    }

    /// Jacobian determinant `prod f_i'(z_i)`.
    pub fn deriv(&self, z: &[Point]) -> Result<Point> {
        self.check_arity(z)?;
        self.factors()
            .iter()
            .zip(z)
            .try_fold(Complex64::new(1.0, 0.0), |acc, (f, &zi)| Ok(acc * f.deriv(zi)?))
    }

    /// Per-factor critical point lists.
    pub fn critical_points(&self, tol: &Tolerances) -> Result<Vec<Vec<CriticalPoint>>> {
        self.factors().iter().map(|f| f.critical_points(tol)).collect()
    }

    /// The full fiber as points of the polydisc, ordered lexicographically
    /// (the first coordinate varies slowest).
    pub fn fiber(&self, y: &[Point], tol: &Tolerances) -> Result<Vec<Vec<Point>>> {
        self.check_arity(y)?;
        let per_factor: Vec<Vec<Point>> = self
            .factors()
            .iter()
            .zip(y)
            .map(|(f, &yi)| f.fiber(yi, tol))
            .collect::<Result<_>>()?;
        Ok(cartesian(&per_factor))
    }
}

pub(crate) fn cartesian(lists: &[Vec<Point>]) -> Vec<Vec<Point>> {
    lists.iter().fold(vec![Vec::new()], |acc, list| {
        acc.iter()
            .flat_map(|prefix| {
                list.iter().map(move |p| {
                    let mut v = prefix.clone();
                    v.push(*p);
                    v
                })
            })
            .collect()
    })
}

/// One factor in the JSON symbol description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub zeros: Vec<[f64; 2]>,
    #[serde(default)]
    pub rotation_angle: f64,
}

/// `{ "factors": [ { "zeros": [[re, im], ...], "rotation_angle": theta }, ... ] }`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolSpec {
    pub factors: Vec<FactorSpec>,
}

impl SymbolSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn build(&self) -> Result<SymbolMap> {
        let mut factors: Vec<BlaschkeProduct> = self
            .factors
            .iter()
            .map(|f| {
                BlaschkeProduct::with_angle(
                    f.zeros.iter().map(|[re, im]| Complex64::new(*re, *im)).collect(),
                    f.rotation_angle,
                )
            })
            .collect::<Result<_>>()?;
        match factors.len() {
            0 => Err(Error::Input("symbol has no factors".into())),
            1 => Ok(SymbolMap::Blaschke(factors.remove(0))),
            _ => Ok(SymbolMap::Product(ProductMap::new(factors)?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn eval_examples() {
        let sq = BlaschkeProduct::monomial(2).unwrap();
        assert!((sq.eval(c(0.5, 0.0)).unwrap() - c(0.25, 0.0)).norm() < 1e-15);
        let b = BlaschkeProduct::new(vec![c(0.0, 0.0), c(0.5, 0.0)], c(1.0, 0.0)).unwrap();
        assert!(b.eval(c(0.5, 0.0)).unwrap().norm() < 1e-15);
        let m = BlaschkeProduct::mobius(c(0.5, 0.0)).unwrap();
        assert!((m.eval(c(0.0, 0.0)).unwrap() - c(-0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn deriv_examples() {
        let sq = BlaschkeProduct::monomial(2).unwrap();
        assert!((sq.deriv(c(0.5, 0.0)).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        let cube = BlaschkeProduct::monomial(3).unwrap();
        assert!(cube.deriv(c(0.0, 0.0)).unwrap().norm() < 1e-15);
        // central finite differences of (z - 0.5)/(1 - 0.5 z) at 0
        let m = BlaschkeProduct::mobius(c(0.5, 0.0)).unwrap();
        let h = 1e-6;
        let fd = (m.value(c(h, 0.0)) - m.value(c(-h, 0.0))) / (2.0 * h);
        let d = m.deriv(c(0.0, 0.0)).unwrap();
        assert!((d - fd).norm() < 1e-8);
        assert!((d - c(0.75, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn domain_violation_is_input_error() {
        let sq = BlaschkeProduct::monomial(2).unwrap();
        assert!(matches!(sq.eval(c(1.1, 0.0)), Err(Error::Input(_))));
        assert!(matches!(sq.deriv(c(0.0, -1.01)), Err(Error::Input(_))));
        assert!(sq.eval(c(1.0, 0.0)).is_ok());
    }

    #[test]
    fn construction_checks() {
        assert!(BlaschkeProduct::new(vec![], c(1.0, 0.0)).is_err());
        assert!(BlaschkeProduct::new(vec![c(1.0, 0.0)], c(1.0, 0.0)).is_err());
        assert!(BlaschkeProduct::new(vec![c(0.2, 0.0)], c(1.1, 0.0)).is_err());
    }

    #[test]
    fn critical_points_of_monomials_and_mobius() {
        for n in 2..=6 {
            let cps = BlaschkeProduct::monomial(n).unwrap().critical_points(&tol()).unwrap();
            assert_eq!(cps.len(), 1);
            assert!(cps[0].point.norm() < 1e-12);
            assert_eq!(cps[0].multiplicity, n - 1);
        }
        let m = BlaschkeProduct::mobius(c(0.3, -0.2)).unwrap();
        assert!(m.critical_points(&tol()).unwrap().is_empty());
    }

    #[test]
    fn critical_point_of_two_zero_product() {
        // numerator of B' is -(z^2 - 4z + 1)/2, whose root in the disc is 2 - sqrt 3
        let b = BlaschkeProduct::new(vec![c(0.0, 0.0), c(0.5, 0.0)], c(1.0, 0.0)).unwrap();
        let cps = b.critical_points(&tol()).unwrap();
        assert_eq!(cps.len(), 1);
        assert!((cps[0].point - c(2.0 - 3f64.sqrt(), 0.0)).norm() < 1e-13);
        assert_eq!(cps[0].multiplicity, 1);
    }

    #[test]
    fn repeated_mobius_factor_gives_multiple_critical_point() {
        let a = c(0.3, 0.2);
        let b = BlaschkeProduct::new(vec![a; 4], c(1.0, 0.0)).unwrap();
        let cps = b.critical_points(&tol()).unwrap();
        assert_eq!(cps.len(), 1);
        assert_eq!(cps[0].multiplicity, 3);
        assert!((cps[0].point - a).norm() < 1e-8);
    }

    #[test]
    fn fiber_examples() {
        let sq = BlaschkeProduct::monomial(2).unwrap();
        let f = sq.fiber(c(0.25, 0.0), &tol()).unwrap();
        assert!((f[0] - c(-0.5, 0.0)).norm() < 1e-14 && (f[1] - c(0.5, 0.0)).norm() < 1e-14);
        let f = sq.fiber(c(-0.25, 0.0), &tol()).unwrap();
        assert!((f[0] - c(0.0, -0.5)).norm() < 1e-14 && (f[1] - c(0.0, 0.5)).norm() < 1e-14);

        // z(z - 0.5) - 0.1(1 - 0.5 z) = z^2 - 0.45 z - 0.1
        let b = BlaschkeProduct::new(vec![c(0.0, 0.0), c(0.5, 0.0)], c(1.0, 0.0)).unwrap();
        let f = b.fiber(c(0.1, 0.0), &tol()).unwrap();
        let disc = (0.45f64 * 0.45 + 0.4).sqrt();
        let expected = [(0.45 - disc) / 2.0, (0.45 + disc) / 2.0];
        for (z, e) in f.iter().zip(expected) {
            assert!((z - c(e, 0.0)).norm() < 1e-13);
            assert!((b.value(*z) - c(0.1, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn fiber_near_critical_value_is_rejected() {
        let sq = BlaschkeProduct::monomial(2).unwrap();
        assert!(matches!(sq.fiber(c(1e-8, 0.0), &tol()), Err(Error::Precondition(_))));
    }

    #[test]
    fn taylor_coefficients_of_mobius() {
        // (z - a)/(1 - a z) = -a + (1 - a^2) sum_{m>=1} a^{m-1} z^m
        let a = 0.5;
        let t = BlaschkeProduct::mobius(c(a, 0.0)).unwrap().taylor_coefficients(8);
        assert!((t[0] - c(-a, 0.0)).norm() < 1e-15);
        for m in 1..8 {
            let e = (1.0 - a * a) * a.powi(m as i32 - 1);
            assert!((t[m] - c(e, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn product_map_jacobian_factorizes() {
        let f = SymbolSpec::from_json(
            r#"{"factors":[{"zeros":[[0,0],[0,0]],"rotation_angle":0},{"zeros":[[0,0],[0,0],[0,0]]}]}"#,
        )
        .unwrap()
        .build()
        .unwrap();
        assert_eq!(f.fiber_size(), 6);
        let z = [c(0.5, 0.0), c(0.0, 0.5)];
        let j = f.deriv(&z).unwrap();
        // 2 z1 * 3 z2^2
        assert!((j - c(1.0, 0.0) * c(3.0 * -0.25, 0.0)).norm() < 1e-14);
        let fib = f.fiber(&[c(0.25, 0.0), c(0.125, 0.0)], &tol()).unwrap();
        assert_eq!(fib.len(), 6);
        for p in fib {
            let v = f.eval(&p).unwrap();
            assert!((v[0] - c(0.25, 0.0)).norm() < 1e-12 && (v[1] - c(0.125, 0.0)).norm() < 1e-12);
        }
    }
}
