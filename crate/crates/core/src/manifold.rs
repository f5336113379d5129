//! Poincaré-ball and Klein-model geometry anchored at the origin.
//!
//! All maps are radial: they rescale a vector by a scalar factor that only
//! depends on its Euclidean norm. The scalar kernels in [`radial`] are
//! shared with the differentiable tape so that library values and model
//! forward passes agree bit for bit.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Projection margin: points are kept at norm at most `(1 - EPS_BALL) / sqrt(c)`.
pub const EPS_BALL: f64 = 1e-5;
/// `atanh` arguments are clamped to `1 - EPS_ATANH`.
pub const EPS_ATANH: f64 = 1e-7;
/// Norms below this are treated as the origin.
pub const EPS_ZERO: f64 = 1e-12;
/// Slack allowed when checking ball membership of user-supplied points.
const DOMAIN_SLACK: f64 = 1e-9;

/// Curvature grid used by the optimization study.
pub const CURVATURE_GRID: [f64; 7] = [0.1, 0.3, 0.5, 0.75, 1.0, 1.25, 1.5];

/// Positive curvature magnitude `c` of the ball `{x : c|x|^2 < 1}`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Curvature(f64);

impl Curvature {
    pub fn new(c: f64) -> Result<Self> {
        if c.is_finite() && c > 0.0 {
            Ok(Curvature(c))
        } else {
            Err(Error::invalid(format!("curvature must be positive and finite, got {c}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn sqrt(self) -> f64 {
        self.0.sqrt()
    }

    /// Largest admissible Euclidean norm after projection.
    pub fn max_norm(self) -> f64 {
        (1.0 - EPS_BALL) / self.sqrt()
    }
}

impl TryFrom<f64> for Curvature {
    type Error = Error;

    fn try_from(c: f64) -> Result<Self> {
        Curvature::new(c)
    }
}

impl From<Curvature> for f64 {
    fn from(c: Curvature) -> f64 {
        c.0
    }
}

impl fmt::Display for Curvature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A point of the Poincaré ball with curvature `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincarePoint {
    coords: Vec<f64>,
    curvature: Curvature,
}

/// A vector in the tangent space at the origin of the ball.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    coords: Vec<f64>,
    curvature: Curvature,
}

/// A point in Klein coordinates of the same hyperbolic space.
#[derive(Debug, Clone, PartialEq)]
pub struct KleinPoint {
    coords: Vec<f64>,
    curvature: Curvature,
}

fn check_finite(coords: &[f64], what: &str) -> Result<()> {
    if coords.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} has non-finite coordinates")))
    }
}

fn check_in_ball(coords: &[f64], c: Curvature, what: &str) -> Result<()> {
    check_finite(coords, what)?;
    let scaled = c.sqrt() * norm(coords);
    if scaled <= 1.0 + DOMAIN_SLACK {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{what} lies outside the ball: sqrt(c)*|x| = {scaled}"
        )))
    }
}

impl PoincarePoint {
    /// Wraps coordinates that must already satisfy `c|x|^2 < 1` (within a
    /// tiny slack). Use [`project_to_ball`] for arbitrary vectors.
    pub fn new(coords: Vec<f64>, curvature: Curvature) -> Result<Self> {
        check_in_ball(&coords, curvature, "Poincaré point")?;
        Ok(Self { coords, curvature })
    }

    pub fn origin(dim: usize, curvature: Curvature) -> Self {
        Self {
            coords: vec![0.0; dim],
            curvature,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

impl TangentVector {
    pub fn new(coords: Vec<f64>, curvature: Curvature) -> Result<Self> {
        check_finite(&coords, "tangent vector")?;
        Ok(Self { coords, curvature })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }
}

impl KleinPoint {
    pub fn new(coords: Vec<f64>, curvature: Curvature) -> Result<Self> {
        check_in_ball(&coords, curvature, "Klein point")?;
        Ok(Self { coords, curvature })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|x| x * s).collect()
}

/// Scalar kernels of the radial maps `x -> x * factor(|x|)`.
///
/// Each kernel returns `(factor, dfactor_dr / r)`. The second component is
/// what the adjoint needs and is evaluated with series expansions near the
/// origin where the naive quotient loses precision.
pub mod radial {
    use super::{EPS_ATANH, EPS_BALL, EPS_ZERO};

    /// Kind of radial map, with its curvature.
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub enum RadialMap {
        Exp0 { c: f64 },
        Log0 { c: f64 },
        PoincareToKlein { c: f64 },
        KleinToPoincare { c: f64 },
        Project { c: f64 },
    }

    const SERIES_CUTOFF: f64 = 1e-3;

    impl RadialMap {
        pub fn kernel(self, r: f64) -> (f64, f64) {
            match self {
                RadialMap::Exp0 { c } => exp0(r, c),
                RadialMap::Log0 { c } => log0(r, c),
                RadialMap::PoincareToKlein { c } => {
                    let q = 1.0 + c * r * r;
                    (2.0 / q, -4.0 * c / (q * q))
                }
                RadialMap::KleinToPoincare { c } => {
                    let s = (1.0 - c * r * r).max(0.0).sqrt();
                    let f = 1.0 / (1.0 + s);
                    let smin = (2.0 * EPS_BALL).sqrt();
                    let d = c / (s.max(smin) * (1.0 + s) * (1.0 + s));
                    (f, d)
                }
                RadialMap::Project { c } => {
                    let limit = (1.0 - EPS_BALL) / c.sqrt();
                    if r >= limit && r > EPS_ZERO {
                        let f = limit / r;
                        (f, -f / (r * r))
                    } else {
                        (1.0, 0.0)
                    }
                }
            }
        }
    }

    /// `tanh(sqrt(c) r) / (sqrt(c) r)`.
    fn exp0(r: f64, c: f64) -> (f64, f64) {
        let u = c.sqrt() * r;
        if u < SERIES_CUTOFF {
            let u2 = u * u;
            (1.0 - u2 / 3.0, c * (-2.0 / 3.0 + 8.0 * u2 / 15.0))
        } else {
            let t = u.tanh();
            let sech2 = 1.0 - t * t;
            (t / u, c * (u * sech2 - t) / (u * u * u))
        }
    }

    /// `atanh(min(sqrt(c) r, 1 - eps)) / (sqrt(c) r)`; flat numerator in
    /// the clamped region.
    fn log0(r: f64, c: f64) -> (f64, f64) {
        let u = c.sqrt() * r;
        let cap = 1.0 - EPS_ATANH;
        if u < SERIES_CUTOFF {
            let u2 = u * u;
            (1.0 + u2 / 3.0, c * (2.0 / 3.0 + 4.0 * u2 / 5.0))
        } else if u >= cap {
            let f = cap.atanh() / u;
            (f, -f / (r * r))
        } else {
            let a = u.atanh();
            (a / u, c * (u / (1.0 - u * u) - a) / (u * u * u))
        }
    }

    /// Applies the map to one vector.
    pub fn apply(map: RadialMap, v: &[f64]) -> Vec<f64> {
        let r = super::norm(v);
        if r < EPS_ZERO && !matches!(map, RadialMap::Project { .. }) {
            // every map fixes the origin and has factor(0) finite
            let (f, _) = map.kernel(0.0);
            return v.iter().map(|x| x * f).collect();
        }
        let (f, _) = map.kernel(r);
        v.iter().map(|x| x * f).collect()
    }
}

use radial::RadialMap;

/// Rescales `x` onto the closed ball of radius `(1 - EPS_BALL)/sqrt(c)` when
/// it reaches `(1 - EPS_BALL)/sqrt(c)`; leaves interior points untouched.
pub fn project_to_ball(x: Vec<f64>, c: Curvature) -> Result<PoincarePoint> {
    check_finite(&x, "vector")?;
    let coords = radial::apply(RadialMap::Project { c: c.value() }, &x);
    Ok(PoincarePoint {
        coords,
        curvature: c,
    })
}

/// Exponential map at the origin, followed by projection.
pub fn exp_map0(v: &TangentVector) -> Result<PoincarePoint> {
    check_finite(&v.coords, "tangent vector")?;
    let c = v.curvature;
    if norm(&v.coords) < EPS_ZERO {
        return Ok(PoincarePoint::origin(v.coords.len(), c));
    }
    let y = radial::apply(RadialMap::Exp0 { c: c.value() }, &v.coords);
    project_to_ball(y, c)
}

/// Logarithmic map at the origin.
pub fn log_map0(x: &PoincarePoint) -> Result<TangentVector> {
    check_in_ball(&x.coords, x.curvature, "Poincaré point")?;
    if norm(&x.coords) < EPS_ZERO {
        return Ok(TangentVector {
            coords: vec![0.0; x.coords.len()],
            curvature: x.curvature,
        });
    }
    let coords = radial::apply(RadialMap::Log0 { c: x.curvature.value() }, &x.coords);
    Ok(TangentVector {
        coords,
        curvature: x.curvature,
    })
}

/// `x_K = 2 x_P / (1 + c|x_P|^2)`.
pub fn poincare_to_klein(x: &PoincarePoint) -> KleinPoint {
    KleinPoint {
        coords: radial::apply(
            RadialMap::PoincareToKlein { c: x.curvature.value() },
            &x.coords,
        ),
        curvature: x.curvature,
    }
}

/// `x_P = x_K / (1 + sqrt(1 - c|x_K|^2))`.
pub fn klein_to_poincare(x: &KleinPoint) -> PoincarePoint {
    PoincarePoint {
        coords: radial::apply(
            RadialMap::KleinToPoincare { c: x.curvature.value() },
            &x.coords,
        ),
        curvature: x.curvature,
    }
}

/// Averaging rule used by [`klein_mean`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KleinMeanMode {
    /// Plain arithmetic mean of Klein coordinates.
    #[default]
    Unweighted,
    /// Einstein midpoint: weights are the Lorentz factors of each point.
    LorentzWeighted,
}

/// Mean of ball points computed in Klein coordinates.
pub fn klein_mean(points: &[PoincarePoint], mode: KleinMeanMode) -> Result<PoincarePoint> {
    let first = points
        .first()
        .ok_or_else(|| Error::invalid("klein_mean of an empty set"))?;
    let c = first.curvature;
    let dim = first.dim();
    if points.iter().any(|p| p.curvature != c || p.dim() != dim) {
        return Err(Error::invalid(
            "klein_mean points must share curvature and dimension",
        ));
    }
    let mut acc = vec![0.0; dim];
    let mut total = 0.0;
    for p in points {
        let k = poincare_to_klein(p);
        let w = match mode {
            KleinMeanMode::Unweighted => 1.0,
            KleinMeanMode::LorentzWeighted => {
                let r2: f64 = k.coords.iter().map(|x| x * x).sum();
                1.0 / (1.0 - c.value() * r2).max(EPS_BALL).sqrt()
            }
        };
        for (a, x) in acc.iter_mut().zip(&k.coords) {
            *a += w * x;
        }
        total += w;
    }
    let mean = KleinPoint {
        coords: scaled(&acc, 1.0 / total),
        curvature: c,
    };
    let p = klein_to_poincare(&mean);
    project_to_ball(p.coords, c)
}

/// Geodesic distance on the ball of curvature `c`:
/// `(1/sqrt(c)) arcosh(1 + 2c|x-y|^2 / ((1-c|x|^2)(1-c|y|^2)))`.
pub fn hyperbolic_distance(x: &PoincarePoint, y: &PoincarePoint) -> Result<f64> {
    if x.curvature != y.curvature || x.dim() != y.dim() {
        return Err(Error::invalid(
            "distance operands must share curvature and dimension",
        ));
    }
    check_in_ball(&x.coords, x.curvature, "first point")?;
    check_in_ball(&y.coords, y.curvature, "second point")?;
    Ok(distance_kernel(&x.coords, &y.coords, x.curvature.value()).0)
}

/// Distance and the `z` argument of arcosh; shared with the tape.
pub(crate) fn distance_kernel(x: &[f64], y: &[f64], c: f64) -> (f64, DistanceParts) {
    let mut diff2 = 0.0;
    let mut x2 = 0.0;
    let mut y2 = 0.0;
    for (a, b) in x.iter().zip(y) {
        diff2 += (a - b) * (a - b);
        x2 += a * a;
        y2 += b * b;
    }
    let min_gap = EPS_BALL * EPS_BALL;
    let alpha = (1.0 - c * x2).max(min_gap);
    let beta = (1.0 - c * y2).max(min_gap);
    let z = 1.0 + 2.0 * c * diff2 / (alpha * beta);
    let d = (z + (z * z - 1.0).max(0.0).sqrt()).ln() / c.sqrt();
    (
        d,
        DistanceParts {
            diff2,
            alpha,
            beta,
            z,
        },
    )
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DistanceParts {
    pub diff2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub z: f64,
}
