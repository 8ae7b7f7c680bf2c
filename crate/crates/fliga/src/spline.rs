//! Univariate B-spline bases on the unit interval and 1D quadrature stencils.
//!
//! Two basis families are supported: clamped (open knot vector, unique inner
//! knots) and uniform periodic. Both are evaluated through the same
//! Cox-de Boor kernel operating on a virtual knot window, so the periodic
//! case needs no ghost storage.

use crate::error::{FligaError, Result};
use serde::{Deserialize, Serialize};

/// Highest polynomial degree the stack-allocated evaluation buffers admit.
pub const MAX_DEGREE: usize = 7;

/// An open (clamped) knot vector on `[0, 1]` with unique inner knots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
}

impl KnotVector {
    pub fn new(knots: Vec<f64>, degree: usize) -> Result<Self> {
        if degree == 0 || degree > MAX_DEGREE {
            return Err(FligaError::InvalidInput(format!(
                "degree must be in 1..={MAX_DEGREE}, got {degree}"
            )));
        }
        if knots.len() < 2 * (degree + 1) {
            return Err(FligaError::InvalidInput(format!(
                "knot vector too short for degree {degree}: {} knots",
                knots.len()
            )));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(FligaError::InvalidInput("knots must be non-decreasing".into()));
        }
        if knots[..=degree].iter().any(|&k| k != 0.0) || knots[knots.len() - degree - 1..].iter().any(|&k| k != 1.0)
        {
            return Err(FligaError::InvalidInput(
                "open vector requires the first/last degree+1 knots to be 0/1".into(),
            ));
        }
        let inner = &knots[degree + 1..knots.len() - degree - 1];
        if inner.windows(2).any(|w| w[1] <= w[0]) || inner.iter().any(|&k| k <= 0.0 || k >= 1.0) {
            return Err(FligaError::InvalidInput(
                "inner knots must be strictly increasing inside (0, 1)".into(),
            ));
        }
        Ok(Self { knots, degree })
    }

    /// Open uniform knot vector `K(n_spans, p)` with equally spaced inner knots.
    pub fn open_uniform(n_spans: usize, degree: usize) -> Result<Self> {
        if n_spans == 0 {
            return Err(FligaError::InvalidInput("n_spans must be >= 1".into()));
        }
        let mut knots = vec![0.0; degree];
        knots.extend((0..=n_spans).map(|i| i as f64 / n_spans as f64));
        knots.extend(std::iter::repeat(1.0).take(degree));
        Self::new(knots, degree)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions supported by this vector.
    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Number of non-empty knot spans.
    pub fn num_spans(&self) -> usize {
        self.knots.windows(2).filter(|w| w[1] > w[0]).count()
    }

    /// Breakpoints of the non-empty spans, including both endpoints.
    pub fn breaks(&self) -> Vec<f64> {
        let mut b = vec![0.0];
        for w in self.knots.windows(2) {
            if w[1] > w[0] {
                b.push(w[1]);
            }
        }
        b
    }

    /// Knot-span index `k` with `knots[k] <= x < knots[k+1]`; at `x = 1` the
    /// last non-empty span is returned.
    pub fn find_span(&self, x: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&x) {
            return Err(FligaError::InvalidInput(format!("x = {x} outside [0, 1]")));
        }
        let hi = self.knots.len() - self.degree - 2; // last non-empty span
        let lo = self.degree;
        let mut k = self.knots.partition_point(|&t| t <= x);
        k = k.saturating_sub(1).clamp(lo, hi);
        Ok(k)
    }

    /// Greville abscissae (knot averages).
    pub fn greville(&self) -> Vec<f64> {
        (0..self.num_basis())
            .map(|i| self.knots[i + 1..=i + self.degree].iter().sum::<f64>() / self.degree as f64)
            .collect()
    }

    /// Insert a knot value, returning the refined vector. The caller is
    /// responsible for transforming control data alongside.
    pub fn with_inserted(&self, x: f64) -> Result<Self> {
        if self.knots.iter().any(|&t| t == x) {
            return Err(FligaError::InvalidInput(format!(
                "knot {x} already present; inner knots must stay unique"
            )));
        }
        if !(0.0 < x && x < 1.0) {
            return Err(FligaError::InvalidInput(format!("new knot {x} must lie in (0, 1)")));
        }
        let mut knots = self.knots.clone();
        let pos = knots.partition_point(|&t| t <= x);
        knots.insert(pos, x);
        Self::new(knots, self.degree)
    }

    /// Evaluate values and derivatives of the supported functions.
    pub fn eval(&self, x: f64, nders: usize) -> Result<BasisEval> {
        if nders > 2 {
            return Err(FligaError::InvalidInput(format!("max_order {nders} > 2")));
        }
        let span = self.find_span(x)? as isize;
        let knots = &self.knots;
        let acc = move |i: isize| knots[i as usize];
        Ok(ders_basis_funs(&acc, span, x, self.degree, nders))
    }

    /// Remove an existing inner knot, returning the coarsened vector.
    pub fn with_removed(&self, x: f64) -> Result<Self> {
        let pos = self
            .knots
            .iter()
            .position(|&t| t == x && x > 0.0 && x < 1.0)
            .ok_or_else(|| FligaError::InvalidInput(format!("{x} is not an inner knot")))?;
        let mut knots = self.knots.clone();
        knots.remove(pos);
        Self::new(knots, self.degree)
    }
}

/// Uniform periodic basis with `n_spans` spans on `[0, 1]`.
///
/// Virtual knots are `t_i = (i - p) / n`; the function with absolute index
/// `a` lives on `[(a - p)/n, (a + 1)/n]` and aliases to degree of freedom
/// `a mod n` with winding `a div n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicBasis {
    n_spans: usize,
    degree: usize,
}

impl PeriodicBasis {
    pub fn new(n_spans: usize, degree: usize) -> Result<Self> {
        if degree == 0 || degree > MAX_DEGREE {
            return Err(FligaError::InvalidInput(format!(
                "degree must be in 1..={MAX_DEGREE}, got {degree}"
            )));
        }
        if n_spans < 2 * degree + 1 {
            return Err(FligaError::InvalidInput(format!(
                "periodic basis needs at least 2p+1 spans, got {n_spans}"
            )));
        }
        Ok(Self { n_spans, degree })
    }

    pub fn n_spans(&self) -> usize {
        self.n_spans
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Greville abscissa of the function with absolute index `a`
    /// (unwrapped: increases by 1 per winding).
    pub fn greville_unwrapped(&self, a: isize) -> f64 {
        (a as f64 - (self.degree as f64 - 1.0) / 2.0) / self.n_spans as f64
    }
}

/// Basis values and derivatives of the `p + 1` functions supported at a point.
#[derive(Clone, Copy, Debug)]
pub struct BasisEval {
    /// Absolute index of the first supported function. For an open vector this
    /// is the plain 0-based function index; for a periodic basis it may lie
    /// outside `0..n` and aliases via `rem_euclid(n)`.
    pub first: isize,
    pub count: usize,
    pub value: [f64; MAX_DEGREE + 1],
    pub d1: [f64; MAX_DEGREE + 1],
    pub d2: [f64; MAX_DEGREE + 1],
}

impl BasisEval {
    fn zero() -> Self {
        Self {
            first: 0,
            count: 0,
            value: [0.0; MAX_DEGREE + 1],
            d1: [0.0; MAX_DEGREE + 1],
            d2: [0.0; MAX_DEGREE + 1],
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = isize> + '_ {
        (0..self.count as isize).map(move |o| self.first + o)
    }
}

/// Cox-de Boor values plus derivatives up to `nders <= 2` (Piegl & Tiller
/// A2.3 on a virtual knot window).
fn ders_basis_funs(
    knot: &dyn Fn(isize) -> f64,
    span: isize,
    x: f64,
    p: usize,
    nders: usize,
) -> BasisEval {
    debug_assert!(p <= MAX_DEGREE && nders <= 2);
    let mut ndu = [[0.0_f64; MAX_DEGREE + 1]; MAX_DEGREE + 1];
    let mut left = [0.0_f64; MAX_DEGREE + 1];
    let mut right = [0.0_f64; MAX_DEGREE + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = x - knot(span + 1 - j as isize);
        right[j] = knot(span + j as isize) - x;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }

    let mut out = BasisEval::zero();
    out.first = span - p as isize;
    out.count = p + 1;
    for i in 0..=p {
        out.value[i] = ndu[i][p];
    }
    if nders == 0 {
        return out;
    }

    let mut ders = [[0.0_f64; MAX_DEGREE + 1]; 3];
    let mut a = [[0.0_f64; MAX_DEGREE + 1]; 2];
    for r in 0..=p {
        let mut s1 = 0usize;
        let mut s2 = 1usize;
        a[0][0] = 1.0;
        for k in 1..=nders.min(p) {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = p - k;
            if r >= k {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
            for j in j1..=j2 {
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][(rk + j as isize) as usize];
                d += a[s2][j] * ndu[(rk + j as isize) as usize][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut factor = p as f64;
    for k in 1..=nders.min(p) {
        for j in 0..=p {
            ders[k][j] *= factor;
        }
        factor *= (p - k) as f64;
    }
    out.d1[..=p].copy_from_slice(&ders[1][..=p]);
    out.d2[..=p].copy_from_slice(&ders[2][..=p]);
    out
}

/// A row's parent basis: clamped or uniform periodic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RowBasis {
    Open(KnotVector),
    Periodic(PeriodicBasis),
}

impl RowBasis {
    pub fn degree(&self) -> usize {
        match self {
            RowBasis::Open(kv) => kv.degree(),
            RowBasis::Periodic(pb) => pb.degree(),
        }
    }

    /// Number of distinct degrees of freedom.
    pub fn num_dofs(&self) -> usize {
        match self {
            RowBasis::Open(kv) => kv.num_basis(),
            RowBasis::Periodic(pb) => pb.n_spans(),
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, RowBasis::Periodic(_))
    }

    /// Map an absolute function index to its degree of freedom.
    pub fn dof_of(&self, abs: isize) -> usize {
        match self {
            RowBasis::Open(_) => {
                debug_assert!(abs >= 0);
                abs as usize
            }
            RowBasis::Periodic(pb) => abs.rem_euclid(pb.n_spans() as isize) as usize,
        }
    }

    /// Winding number of an absolute function index (always 0 for open rows).
    pub fn winding_of(&self, abs: isize) -> i64 {
        match self {
            RowBasis::Open(_) => 0,
            RowBasis::Periodic(pb) => abs.div_euclid(pb.n_spans() as isize) as i64,
        }
    }

    /// Evaluate values and derivatives of the supported functions.
    ///
    /// For periodic rows the coordinate is folded into `[0, 1)` first;
    /// the returned `first` index is the absolute index at the folded
    /// coordinate.
    pub fn eval(&self, x: f64, nders: usize) -> Result<BasisEval> {
        if nders > 2 {
            return Err(FligaError::InvalidInput(format!("max_order {nders} > 2")));
        }
        match self {
            RowBasis::Open(kv) => kv.eval(x, nders),
            RowBasis::Periodic(pb) => {
                if !x.is_finite() {
                    return Err(FligaError::InvalidInput(format!("x = {x} not finite")));
                }
                let n = pb.n_spans();
                let p = pb.degree();
                let xf = x - x.floor();
                let cell = ((xf * n as f64).floor() as usize).min(n - 1);
                let span = (p + cell) as isize;
                let acc = move |i: isize| (i - p as isize) as f64 / n as f64;
                let mut ev = ders_basis_funs(&acc, span, xf, p, nders);
                // Unfold: shift absolute indices by the winding of x itself.
                ev.first += (x.floor() as isize) * n as isize;
                Ok(ev)
            }
        }
    }

    /// Greville abscissa for the absolute function index (unwrapped for
    /// periodic rows).
    pub fn greville_abs(&self, abs: isize) -> f64 {
        match self {
            RowBasis::Open(kv) => {
                let g = kv.greville();
                g[abs as usize]
            }
            RowBasis::Periodic(pb) => pb.greville_unwrapped(abs),
        }
    }

    /// Greville abscissae of all degrees of freedom.
    pub fn greville(&self) -> Vec<f64> {
        match self {
            RowBasis::Open(kv) => kv.greville(),
            RowBasis::Periodic(pb) => (0..pb.n_spans() as isize)
                .map(|a| pb.greville_unwrapped(a))
                .collect(),
        }
    }

    /// Breakpoints of the non-empty spans on `[0, 1]`.
    pub fn breaks(&self) -> Vec<f64> {
        match self {
            RowBasis::Open(kv) => kv.breaks(),
            RowBasis::Periodic(pb) => {
                let n = pb.n_spans();
                (0..=n).map(|i| i as f64 / n as f64).collect()
            }
        }
    }
}

/// Quadrature rule family of a 1D stencil.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StencilKind {
    LegendrePerSpan,
    Lobatto2,
}

#[derive(Clone, Copy, Debug)]
pub struct StencilPoint {
    pub coord: f64,
    pub weight: f64,
    /// Index of the non-empty span this point belongs to.
    pub span: usize,
}

/// Points and weights of a composite 1D rule on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct QuadratureStencil1D {
    pub kind: StencilKind,
    pub points: Vec<StencilPoint>,
}

impl QuadratureStencil1D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss-Legendre abscissae and weights on `[-1, 1]`, tabulated to avoid
/// runtime root-finding.
pub fn gauss_legendre(n: usize) -> Result<(&'static [f64], &'static [f64])> {
    const X1: [f64; 1] = [0.0];
    const W1: [f64; 1] = [2.0];
    const X2: [f64; 2] = [-0.5773502691896257645091488, 0.5773502691896257645091488];
    const W2: [f64; 2] = [1.0, 1.0];
    const X3: [f64; 3] = [-0.7745966692414833770358531, 0.0, 0.7745966692414833770358531];
    const W3: [f64; 3] = [
        0.5555555555555555555555556,
        0.8888888888888888888888889,
        0.5555555555555555555555556,
    ];
    const X4: [f64; 4] = [
        -0.8611363115940525752239465,
        -0.3399810435848562648026658,
        0.3399810435848562648026658,
        0.8611363115940525752239465,
    ];
    const W4: [f64; 4] = [
        0.3478548451374538573730639,
        0.6521451548625461426269361,
        0.6521451548625461426269361,
        0.3478548451374538573730639,
    ];
    const X5: [f64; 5] = [
        -0.9061798459386639927976269,
        -0.5384693101056830910363144,
        0.0,
        0.5384693101056830910363144,
        0.9061798459386639927976269,
    ];
    const W5: [f64; 5] = [
        0.2369268850561890875142640,
        0.4786286704993664680412915,
        0.5688888888888888888888889,
        0.4786286704993664680412915,
        0.2369268850561890875142640,
    ];
    const X6: [f64; 6] = [
        -0.9324695142031520278123016,
        -0.6612093864662645136613996,
        -0.2386191860831969086305017,
        0.2386191860831969086305017,
        0.6612093864662645136613996,
        0.9324695142031520278123016,
    ];
    const W6: [f64; 6] = [
        0.1713244923791703450402961,
        0.3607615730481386075698335,
        0.4679139345726910473898703,
        0.4679139345726910473898703,
        0.3607615730481386075698335,
        0.1713244923791703450402961,
    ];
    const X7: [f64; 7] = [
        -0.9491079123427585245261897,
        -0.7415311855993944398638648,
        -0.4058451513773971669066064,
        0.0,
        0.4058451513773971669066064,
        0.7415311855993944398638648,
        0.9491079123427585245261897,
    ];
    const W7: [f64; 7] = [
        0.1294849661688696932706114,
        0.2797053914892766679014678,
        0.3818300505051189449503698,
        0.4179591836734693877551020,
        0.3818300505051189449503698,
        0.2797053914892766679014678,
        0.1294849661688696932706114,
    ];
    const X8: [f64; 8] = [
        -0.9602898564975362316835609,
        -0.7966664774136267395915539,
        -0.5255324099163289858177390,
        -0.1834346424956498049394761,
        0.1834346424956498049394761,
        0.5255324099163289858177390,
        0.7966664774136267395915539,
        0.9602898564975362316835609,
    ];
    const W8: [f64; 8] = [
        0.1012285362903762591525314,
        0.2223810344533744705443560,
        0.3137066458778872873379622,
        0.3626837833783619829651504,
        0.3626837833783619829651504,
        0.3137066458778872873379622,
        0.2223810344533744705443560,
        0.1012285362903762591525314,
    ];
    const X9: [f64; 9] = [
        -0.9681602395076260898355762,
        -0.8360311073266357942994298,
        -0.6133714327005903973087020,
        -0.3242534234038089290385380,
        0.0,
        0.3242534234038089290385380,
        0.6133714327005903973087020,
        0.8360311073266357942994298,
        0.9681602395076260898355762,
    ];
    const W9: [f64; 9] = [
        0.0812743883615744119718922,
        0.1806481606948574040584720,
        0.2606106964029354623187429,
        0.3123470770400028400686304,
        0.3302393550012597631645251,
        0.3123470770400028400686304,
        0.2606106964029354623187429,
        0.1806481606948574040584720,
        0.0812743883615744119718922,
    ];
    const X10: [f64; 10] = [
        -0.9739065285171717200779640,
        -0.8650633666889845107320967,
        -0.6794095682990244062343274,
        -0.4333953941292471907992659,
        -0.1488743389816312108848260,
        0.1488743389816312108848260,
        0.4333953941292471907992659,
        0.6794095682990244062343274,
        0.8650633666889845107320967,
        0.9739065285171717200779640,
    ];
    const W10: [f64; 10] = [
        0.0666713443086881375935688,
        0.1494513491505805931457763,
        0.2190863625159820439955349,
        0.2692667193099963550912269,
        0.2955242247147528701738930,
        0.2955242247147528701738930,
        0.2692667193099963550912269,
        0.2190863625159820439955349,
        0.1494513491505805931457763,
        0.0666713443086881375935688,
    ];
    match n {
        1 => Ok((&X1, &W1)),
        2 => Ok((&X2, &W2)),
        3 => Ok((&X3, &W3)),
        4 => Ok((&X4, &W4)),
        5 => Ok((&X5, &W5)),
        6 => Ok((&X6, &W6)),
        7 => Ok((&X7, &W7)),
        8 => Ok((&X8, &W8)),
        9 => Ok((&X9, &W9)),
        10 => Ok((&X10, &W10)),
        _ => Err(FligaError::InvalidInput(format!(
            "Gauss-Legendre tables cover 1..=10 points per span, got {n}"
        ))),
    }
}

/// `G`-point Gauss-Legendre stencil per non-empty span of the given breaks.
pub fn legendre_stencil_on_breaks(breaks: &[f64], g: usize) -> Result<QuadratureStencil1D> {
    let (xs, ws) = gauss_legendre(g)?;
    let mut points = Vec::with_capacity(g * breaks.len().saturating_sub(1));
    for (span, w) in breaks.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (&x, &wt) in xs.iter().zip(ws) {
            points.push(StencilPoint {
                coord: mid + half * x,
                weight: half * wt,
                span,
            });
        }
    }
    Ok(QuadratureStencil1D {
        kind: StencilKind::LegendrePerSpan,
        points,
    })
}

pub fn legendre_stencil(kv: &KnotVector, points_per_span: usize) -> Result<QuadratureStencil1D> {
    legendre_stencil_on_breaks(&kv.breaks(), points_per_span)
}

/// 2-point Gauss-Lobatto stencil per span: the span endpoints, each carrying
/// half the span length. Inner knots therefore appear twice, once from each
/// adjacent span.
pub fn lobatto2_stencil_on_breaks(breaks: &[f64]) -> QuadratureStencil1D {
    let mut points = Vec::with_capacity(2 * breaks.len().saturating_sub(1));
    for (span, w) in breaks.windows(2).enumerate() {
        let half = 0.5 * (w[1] - w[0]);
        points.push(StencilPoint {
            coord: w[0],
            weight: half,
            span,
        });
        points.push(StencilPoint {
            coord: w[1],
            weight: half,
            span,
        });
    }
    QuadratureStencil1D {
        kind: StencilKind::Lobatto2,
        points,
    }
}

pub fn lobatto2_stencil(kv: &KnotVector) -> QuadratureStencil1D {
    lobatto2_stencil_on_breaks(&kv.breaks())
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Literal Cox-de Boor recursion, used as an independent reference.

    fn frac(num: f64, den: f64) -> f64 {
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    /// Naive recursive evaluation of `N_{i,p}` over an explicit knot slice.
    pub fn naive_basis(knots: &[f64], i: usize, p: usize, x: f64) -> f64 {
        if p == 0 {
            return if knots[i] <= x && x < knots[i + 1] { 1.0 } else { 0.0 };
        }
        frac(x - knots[i], knots[i + p] - knots[i]) * naive_basis(knots, i, p - 1, x)
            + frac(knots[i + p + 1] - x, knots[i + p + 1] - knots[i + 1])
                * naive_basis(knots, i + 1, p - 1, x)
    }
}
