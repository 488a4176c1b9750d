//! Piecewise coefficient functions with declared endpoint power singularities.
//!
//! On a segment `[x_lo, x_hi]` a coefficient has the form
//! `(x - x_lo)^left_exp * (x_hi - x)^right_exp * smooth(x)`, where the smooth
//! part is continuous on the closed segment. Quadrature routines evaluate the
//! power factors from exact distances to the segment ends (see
//! [`Segment::eval_with`]) so that nothing is lost to cancellation close to a
//! singular point.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::expr::Expr;
use crate::mesh::Cell;

pub type SmoothFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Smooth {
    Expr(Expr),
    Func(SmoothFn),
}

impl Smooth {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Smooth::Expr(e) => e.eval(x),
            Smooth::Func(f) => f(x),
        }
    }

    pub fn func(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Smooth::Func(Arc::new(f))
    }

    fn constant_value(&self) -> Option<f64> {
        match self {
            Smooth::Expr(e) if e.is_constant() => Some(e.eval(0.0)),
            _ => None,
        }
    }

    fn into_fn(self) -> SmoothFn {
        match self {
            Smooth::Expr(e) => Arc::new(move |x| e.eval(x)),
            Smooth::Func(f) => f,
        }
    }
}

impl fmt::Debug for Smooth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Smooth::Expr(e) => write!(f, "{e:?}"),
            Smooth::Func(_) => f.write_str("Func(..)"),
        }
    }
}

fn pow_factor(d: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        d.powf(e)
    }
}

#[derive(Clone, Debug)]
pub struct Segment {
    pub x_lo: f64,
    pub x_hi: f64,
    pub left_exp: f64,
    pub right_exp: f64,
    pub smooth: Smooth,
}

impl Segment {
    pub fn new(x_lo: f64, x_hi: f64, left_exp: f64, right_exp: f64, smooth: Smooth) -> Self {
        Self {
            x_lo,
            x_hi,
            left_exp,
            right_exp,
            smooth,
        }
    }

    /// Value at `x` given the distances `d_lo = x - x_lo` and `d_hi = x_hi - x`
    /// computed by the caller (possibly more accurately than by subtraction).
    pub fn eval_with(&self, x: f64, d_lo: f64, d_hi: f64) -> f64 {
        pow_factor(d_lo, self.left_exp) * pow_factor(d_hi, self.right_exp) * self.smooth.eval(x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with(x, x - self.x_lo, self.x_hi - x)
    }
}

/// Serializable form of a segment whose smooth part is an expression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub x_lo: f64,
    pub x_hi: f64,
    #[serde(default)]
    pub left_exp: f64,
    #[serde(default)]
    pub right_exp: f64,
    pub smooth: String,
}

/// Endpoint behavior of a coefficient at a breakpoint, seen from one side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EndpointExponent {
    pub point: f64,
    /// `true` when the exponent belongs to the segment lying to the right of `point`.
    pub from_right: bool,
    pub exponent: f64,
}

#[derive(Clone, Debug)]
pub struct CoefficientFn {
    segments: Vec<Segment>,
}

impl CoefficientFn {
    pub fn new(segments: Vec<Segment>) -> Result<Self, ModelError> {
        if segments.is_empty() {
            return Err(ModelError::Segments("no segments".into()));
        }
        if segments[0].x_lo != 0.0 {
            return Err(ModelError::Segments(format!(
                "first segment starts at {} instead of 0",
                segments[0].x_lo
            )));
        }
        let last = segments.last().expect("non-empty");
        if last.x_hi != 1.0 {
            return Err(ModelError::Segments(format!(
                "last segment ends at {} instead of 1",
                last.x_hi
            )));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.x_lo < s.x_hi) {
                return Err(ModelError::Segments(format!(
                    "segment {i} has x_lo = {} >= x_hi = {}",
                    s.x_lo, s.x_hi
                )));
            }
            if !s.left_exp.is_finite() || !s.right_exp.is_finite() {
                return Err(ModelError::Segments(format!("segment {i} has a non-finite exponent")));
            }
            if i > 0 && segments[i - 1].x_hi != s.x_lo {
                return Err(ModelError::Segments(format!(
                    "gap or overlap between segments {} and {i}",
                    i - 1
                )));
            }
        }
        Ok(Self { segments })
    }

    pub fn constant(c: f64) -> Self {
        Self {
            segments: vec![Segment::new(0.0, 1.0, 0.0, 0.0, Smooth::Expr(Expr::constant(c)))],
        }
    }

    pub fn from_expr(src: &str) -> Result<Self, ModelError> {
        let e = Expr::parse(src)?;
        Ok(Self {
            segments: vec![Segment::new(0.0, 1.0, 0.0, 0.0, Smooth::Expr(e))],
        })
    }

    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            segments: vec![Segment::new(0.0, 1.0, 0.0, 0.0, Smooth::func(f))],
        }
    }

    /// `x^exponent * smooth(x)` on the whole interval.
    pub fn power_law(exponent: f64, smooth: Smooth) -> Self {
        Self {
            segments: vec![Segment::new(0.0, 1.0, exponent, 0.0, smooth)],
        }
    }

    /// Piecewise constant with the given breakpoints (strictly inside (0,1)).
    pub fn piecewise_constant(breaks: &[f64], values: &[f64]) -> Result<Self, ModelError> {
        if values.len() != breaks.len() + 1 {
            return Err(ModelError::Segments(
                "piecewise constant needs one more value than breakpoints".into(),
            ));
        }
        let mut edges = vec![0.0];
        edges.extend_from_slice(breaks);
        edges.push(1.0);
        let segments = edges
            .windows(2)
            .zip(values)
            .map(|(w, &v)| Segment::new(w[0], w[1], 0.0, 0.0, Smooth::Expr(Expr::constant(v))))
            .collect();
        Self::new(segments)
    }

    pub fn from_records(records: &[SegmentRecord]) -> Result<Self, ModelError> {
        let segments = records
            .iter()
            .map(|r| {
                Ok(Segment::new(
                    r.x_lo,
                    r.x_hi,
                    r.left_exp,
                    r.right_exp,
                    Smooth::Expr(Expr::parse(&r.smooth)?),
                ))
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Self::new(segments)
    }

    /// Records for serialization; `None` if some smooth part is not an expression.
    pub fn to_records(&self) -> Option<Vec<SegmentRecord>> {
        self.segments
            .iter()
            .map(|s| match &s.smooth {
                Smooth::Expr(e) => Some(SegmentRecord {
                    x_lo: s.x_lo,
                    x_hi: s.x_hi,
                    left_exp: s.left_exp,
                    right_exp: s.right_exp,
                    smooth: e.source().to_string(),
                }),
                Smooth::Func(_) => None,
            })
            .collect()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Index of the segment containing `x`. Breakpoints belong to the segment on
    /// their right, except `x = 1`.
    pub fn locate(&self, x: f64) -> usize {
        let n = self.segments.len();
        let idx = self.segments.partition_point(|s| s.x_hi <= x);
        idx.min(n - 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.segments[self.locate(x)].eval(x)
    }

    /// Value at reference coordinate `xi` of a mesh cell lying inside a single
    /// segment, with the power factors taken from the cell's exact distances.
    pub fn eval_in_cell(&self, cell: &Cell, xi: f64) -> f64 {
        let seg = &self.segments[self.locate(0.5 * (cell.lo + cell.hi))];
        seg.eval_with(
            cell.point(xi),
            (cell.lo - seg.x_lo) + cell.dist_lo(xi),
            (seg.x_hi - cell.hi) + cell.dist_hi(xi),
        )
    }

    /// Interior breakpoints (segment boundaries strictly inside (0,1)).
    pub fn breakpoints(&self) -> Vec<f64> {
        self.segments[1..].iter().map(|s| s.x_lo).collect()
    }

    /// All nonzero endpoint exponents.
    pub fn endpoint_exponents(&self) -> Vec<EndpointExponent> {
        let mut out = Vec::new();
        for s in &self.segments {
            if s.left_exp != 0.0 {
                out.push(EndpointExponent {
                    point: s.x_lo,
                    from_right: true,
                    exponent: s.left_exp,
                });
            }
            if s.right_exp != 0.0 {
                out.push(EndpointExponent {
                    point: s.x_hi,
                    from_right: false,
                    exponent: s.right_exp,
                });
            }
        }
        out
    }

    /// True if every segment is the constant zero expression.
    pub fn is_zero(&self) -> bool {
        self.segments
            .iter()
            .all(|s| s.smooth.constant_value() == Some(0.0))
    }

    /// Constant value if the coefficient is one constant over [0,1].
    pub fn as_constant(&self) -> Option<f64> {
        if self.segments.iter().any(|s| s.left_exp != 0.0 || s.right_exp != 0.0) {
            return None;
        }
        let first = self.segments[0].smooth.constant_value()?;
        self.segments[1..]
            .iter()
            .all(|s| s.smooth.constant_value() == Some(first))
            .then_some(first)
    }

    /// Pointwise product on the common refinement of both partitions.
    pub fn product(&self, other: &CoefficientFn) -> CoefficientFn {
        let mut edges: Vec<f64> = self
            .segments
            .iter()
            .chain(other.segments.iter())
            .map(|s| s.x_lo)
            .collect();
        edges.push(1.0);
        edges.sort_by(f64::total_cmp);
        edges.dedup();

        let mut segments = Vec::with_capacity(edges.len() - 1);
        for w in edges.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mid = 0.5 * (lo + hi);
            let sa = self.segments[self.locate(mid)].clone();
            let sb = other.segments[other.locate(mid)].clone();
            let touch = |s: &Segment| (s.x_lo == lo, s.x_hi == hi);
            let (al, ar) = touch(&sa);
            let (bl, br) = touch(&sb);
            let left_exp = if al { sa.left_exp } else { 0.0 } + if bl { sb.left_exp } else { 0.0 };
            let right_exp = if ar { sa.right_exp } else { 0.0 } + if br { sb.right_exp } else { 0.0 };
            let smooth = match (sa.smooth.constant_value(), sb.smooth.constant_value()) {
                (Some(ca), Some(cb)) if al && ar && bl && br => {
                    Smooth::Expr(Expr::constant(ca * cb))
                }
                _ => {
                    let fa = sa.smooth.clone().into_fn();
                    let fb = sb.smooth.clone().into_fn();
                    Smooth::func(move |x| {
                        let mut v = fa(x) * fb(x);
                        if !al {
                            v *= pow_factor(x - sa.x_lo, sa.left_exp);
                        }
                        if !ar {
                            v *= pow_factor(sa.x_hi - x, sa.right_exp);
                        }
                        if !bl {
                            v *= pow_factor(x - sb.x_lo, sb.left_exp);
                        }
                        if !br {
                            v *= pow_factor(sb.x_hi - x, sb.right_exp);
                        }
                        v
                    })
                }
            };
            segments.push(Segment::new(lo, hi, left_exp, right_exp, smooth));
        }
        CoefficientFn { segments }
    }

    /// Pointwise power. Non-integer powers need a positive smooth part.
    pub fn powf(&self, e: f64) -> CoefficientFn {
        let segments = self
            .segments
            .iter()
            .map(|s| {
                let smooth = match s.smooth.constant_value() {
                    Some(c) => Smooth::Expr(Expr::constant(pow_scalar(c, e))),
                    None => {
                        let f = s.smooth.clone().into_fn();
                        Smooth::func(move |x| pow_scalar(f(x), e))
                    }
                };
                Segment::new(s.x_lo, s.x_hi, s.left_exp * e, s.right_exp * e, smooth)
            })
            .collect();
        CoefficientFn { segments }
    }

    pub fn recip(&self) -> CoefficientFn {
        self.powf(-1.0)
    }

    pub fn abs(&self) -> CoefficientFn {
        self.map_smooth(f64::abs)
    }

    pub fn scale(&self, c: f64) -> CoefficientFn {
        self.map_smooth(move |v| c * v)
    }

    /// Multiply by a function that is continuous on [0,1].
    pub fn mul_fn(&self, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> CoefficientFn {
        let g: SmoothFn = Arc::new(g);
        let segments = self
            .segments
            .iter()
            .map(|s| {
                let f = s.smooth.clone().into_fn();
                let g = g.clone();
                Segment::new(
                    s.x_lo,
                    s.x_hi,
                    s.left_exp,
                    s.right_exp,
                    Smooth::func(move |x| f(x) * g(x)),
                )
            })
            .collect();
        CoefficientFn { segments }
    }

    fn map_smooth(&self, m: impl Fn(f64) -> f64 + Send + Sync + Copy + 'static) -> CoefficientFn {
        let segments = self
            .segments
            .iter()
            .map(|s| {
                let smooth = match s.smooth.constant_value() {
                    Some(c) => Smooth::Expr(Expr::constant(m(c))),
                    None => {
                        let f = s.smooth.clone().into_fn();
                        Smooth::func(move |x| m(f(x)))
                    }
                };
                Segment::new(s.x_lo, s.x_hi, s.left_exp, s.right_exp, smooth)
            })
            .collect();
        CoefficientFn { segments }
    }
}

fn pow_scalar(v: f64, e: f64) -> f64 {
    if e == 1.0 {
        v
    } else if e.fract() == 0.0 {
        v.powi(e as i32)
    } else {
        v.powf(e)
    }
}
