//! Rate functions `φ_p`, `ψ_p`, comparison functions and the transform
//! `Φ_p(v) = ∫_1^v ds / |φ_p(s)|` with its inverse.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad;

/// Arguments of `Φ` outside this bracket are rejected for rates without a closed form.
pub const DOMAIN: (f64, f64) = (1e-9, 1e9);
/// Partial integrals beyond this magnitude are reported as divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;
const PHI_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("argument {v} outside the admissible domain [{lo}, {hi}]")]
    Domain { v: f64, lo: f64, hi: f64 },
    #[error("integral toward {v} diverges (partial value {partial})")]
    DivergentIntegral { v: f64, partial: f64 },
    #[error("value {y} outside the image [{lo}, {hi}]")]
    OutOfImage { y: f64, lo: f64, hi: f64 },
    #[error("invalid rate function: {0}")]
    InvalidRate(String),
    #[error("quadrature did not reach tolerance at {v}")]
    Quadrature { v: f64 },
}

/// Scalar rate `φ: [0, ∞) → ℝ`: `η·s`, `c·s^k`, or a piecewise-linear table
/// through the origin extended by its last slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RateFunction {
    Linear { eta: f64 },
    Power { c: f64, k: f64 },
    Tabulated { points: Vec<[f64; 2]> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateSign {
    Negative,
    Positive,
}

fn tab_eval(points: &[[f64; 2]], s: f64) -> f64 {
    let mut prev = [0.0, 0.0];
    for p in points {
        if s <= p[0] {
            return prev[1] + (p[1] - prev[1]) * (s - prev[0]) / (p[0] - prev[0]);
        }
        prev = *p;
    }
    let n = points.len();
    let before = if n >= 2 { points[n - 2] } else { [0.0, 0.0] };
    let slope = (prev[1] - before[1]) / (prev[0] - before[0]);
    prev[1] + slope * (s - prev[0])
}

fn validate_table(points: &[[f64; 2]]) -> Result<(), String> {
    if points.is_empty() {
        return Err("table needs at least one point".into());
    }
    let mut prev = 0.0;
    for p in points {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err("table entries must be finite".into());
        }
        if p[0] <= prev {
            return Err(format!("table abscissae must be strictly increasing and positive, got {}", p[0]));
        }
        prev = p[0];
    }
    Ok(())
}

impl RateFunction {
    pub fn linear(eta: f64) -> Self {
        RateFunction::Linear { eta }
    }

    pub fn power(c: f64, k: f64) -> Self {
        RateFunction::Power { c, k }
    }

    pub fn validate(&self) -> Result<(), RateError> {
        let bad = |m: String| Err(RateError::InvalidRate(m));
        match self {
            RateFunction::Linear { eta } if !eta.is_finite() => bad(format!("eta = {eta}")),
            RateFunction::Power { c, k } if !(c.is_finite() && k.is_finite() && *k > 0.0) => {
                bad(format!("power rate needs finite c and k > 0, got c = {c}, k = {k}"))
            }
            RateFunction::Tabulated { points } => validate_table(points).map_err(RateError::InvalidRate),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            RateFunction::Linear { eta } => eta * s,
            RateFunction::Power { c, k } => c * s.powf(*k),
            RateFunction::Tabulated { points } => tab_eval(points, s),
        }
    }

    /// Slope `η` when the rate is linear.
    pub fn as_linear(&self) -> Option<f64> {
        match self {
            RateFunction::Linear { eta } => Some(*eta),
            _ => None,
        }
    }

    /// Sign of `φ` on the sample grid, `None` when it vanishes or changes sign.
    pub fn sign_on(&self, grid: &[f64]) -> Option<RateSign> {
        let mut pos = false;
        let mut neg = false;
        for &s in grid {
            let v = self.eval(s);
            if v > 0.0 {
                pos = true;
            } else if v < 0.0 {
                neg = true;
            } else {
                return None;
            }
        }
        match (pos, neg) {
            (true, false) => Some(RateSign::Positive),
            (false, true) => Some(RateSign::Negative),
            _ => None,
        }
    }

    /// Exponent `k` with `|φ(s)| ~ s^k` as `s → 0`.
    fn exponent_at_zero(&self) -> f64 {
        match self {
            RateFunction::Power { k, .. } => *k,
            _ => 1.0,
        }
    }

    /// Exponent `k` with `|φ(s)| ~ s^k` as `s → ∞`.
    fn exponent_at_infinity(&self) -> f64 {
        match self {
            RateFunction::Power { k, .. } => *k,
            RateFunction::Linear { .. } => 1.0,
            RateFunction::Tabulated { points } => {
                let n = points.len();
                let before = if n >= 2 { points[n - 2] } else { [0.0, 0.0] };
                let last = points[n - 1];
                if (last[1] - before[1]).abs() > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Sample grid of `n` log-spaced points over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Comparison function of class `K` or `K∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ComparisonFunction {
    Linear {
        #[serde(alias = "c")]
        eta: f64,
    },
    Power { c: f64, k: f64 },
    Tabulated { points: Vec<[f64; 2]> },
    Max { of: Vec<ComparisonFunction> },
    Min { of: Vec<ComparisonFunction> },
    Compose { outer: Box<ComparisonFunction>, inner: Box<ComparisonFunction> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FunctionClass {
    K,
    KInfinity,
}

impl ComparisonFunction {
    pub fn linear(c: f64) -> Self {
        ComparisonFunction::Linear { eta: c }
    }

    pub fn power(c: f64, k: f64) -> Self {
        ComparisonFunction::Power { c, k }
    }

    /// `c·s²`, the usual quadratic bound.
    pub fn quadratic(c: f64) -> Self {
        ComparisonFunction::Power { c, k: 2.0 }
    }

    pub fn max(of: Vec<ComparisonFunction>) -> Self {
        ComparisonFunction::Max { of }
    }

    pub fn compose(outer: ComparisonFunction, inner: ComparisonFunction) -> Self {
        ComparisonFunction::Compose { outer: Box::new(outer), inner: Box::new(inner) }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ComparisonFunction::Linear { eta } => eta * s,
            ComparisonFunction::Power { c, k } => c * s.powf(*k),
            ComparisonFunction::Tabulated { points } => tab_eval(points, s),
            ComparisonFunction::Max { of } => of.iter().map(|f| f.eval(s)).fold(f64::NEG_INFINITY, f64::max),
            ComparisonFunction::Min { of } => of.iter().map(|f| f.eval(s)).fold(f64::INFINITY, f64::min),
            ComparisonFunction::Compose { outer, inner } => outer.eval(inner.eval(s)),
        }
    }

    /// Inverse on `[0, ∞)`; exact for every family.
    pub fn inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        match self {
            ComparisonFunction::Linear { eta } => y / eta,
            ComparisonFunction::Power { c, k } => (y / c).powf(1.0 / k),
            ComparisonFunction::Tabulated { points } => {
                let mut prev = [0.0, 0.0];
                for p in points {
                    if y <= p[1] {
                        return prev[0] + (p[0] - prev[0]) * (y - prev[1]) / (p[1] - prev[1]);
                    }
                    prev = *p;
                }
                let n = points.len();
                let before = if n >= 2 { points[n - 2] } else { [0.0, 0.0] };
                let slope = (prev[1] - before[1]) / (prev[0] - before[0]);
                prev[0] + (y - prev[1]) / slope
            }
            ComparisonFunction::Max { of } => of.iter().map(|f| f.inverse(y)).fold(f64::INFINITY, f64::min),
            ComparisonFunction::Min { of } => of.iter().map(|f| f.inverse(y)).fold(f64::NEG_INFINITY, f64::max),
            ComparisonFunction::Compose { outer, inner } => inner.inverse(outer.inverse(y)),
        }
    }

    /// Structural validation: positive parameters, increasing tables.
    pub fn validate(&self) -> Result<(), RateError> {
        let bad = |m: String| Err(RateError::InvalidRate(m));
        match self {
            ComparisonFunction::Linear { eta } if !(eta.is_finite() && *eta > 0.0) => bad(format!("linear comparison needs c > 0, got {eta}")),
            ComparisonFunction::Power { c, k } if !(c.is_finite() && k.is_finite() && *c > 0.0 && *k > 0.0) => {
                bad(format!("power comparison needs c, k > 0, got c = {c}, k = {k}"))
            }
            ComparisonFunction::Tabulated { points } => {
                validate_table(points).map_err(RateError::InvalidRate)?;
                let mut prev = 0.0;
                for p in points {
                    if p[1] <= prev {
                        return bad("comparison table must be strictly increasing from 0".into());
                    }
                    prev = p[1];
                }
                Ok(())
            }
            ComparisonFunction::Max { of } | ComparisonFunction::Min { of } => {
                if of.is_empty() {
                    return bad("max/min of an empty list".into());
                }
                of.iter().try_for_each(|f| f.validate())
            }
            ComparisonFunction::Compose { outer, inner } => {
                outer.validate()?;
                inner.validate()
            }
            _ => Ok(()),
        }
    }

    /// Sampled class check on `grid`: `f(0) = 0`, strictly increasing, and for
    /// `K∞` unbounded growth along the grid end.
    pub fn check_class(&self, class: FunctionClass, grid: &[f64]) -> Result<(), String> {
        self.validate().map_err(|e| e.to_string())?;
        if self.eval(0.0) != 0.0 {
            return Err(format!("f(0) = {}", self.eval(0.0)));
        }
        let mut prev = 0.0;
        for &s in grid {
            let v = self.eval(s);
            if !(v > prev) {
                return Err(format!("not strictly increasing at s = {s}"));
            }
            prev = v;
        }
        if class == FunctionClass::KInfinity {
            if let Some(&last) = grid.last() {
                let far = self.eval(last * 1e6);
                if !(far > self.eval(last)) || !far.is_finite() && far != f64::INFINITY {
                    return Err("growth stalls beyond the grid".into());
                }
            }
        }
        Ok(())
    }
}

/// Envelope rate violated at some grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeViolation {
    pub index: usize,
    pub s: f64,
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

/// Checks `φ̲(s) ≤ |φ_p(s)| ≤ φ̄(s)` for every rate on `grid`.
pub fn envelope_check(
    rates: &[&RateFunction],
    lower: &RateFunction,
    upper: &RateFunction,
    grid: &[f64],
) -> Result<(), EnvelopeViolation> {
    for (index, r) in rates.iter().enumerate() {
        for &s in grid {
            let v = r.eval(s).abs();
            let lo = lower.eval(s).abs();
            let hi = upper.eval(s).abs();
            let tol = 1e-12 * v.max(1.0);
            if lo > v + tol || v > hi + tol {
                return Err(EnvelopeViolation { index, s, lower: lo, value: v, upper: hi });
            }
        }
    }
    Ok(())
}

/// `Φ(v) = ∫_1^v ds / |φ(s)|` for one rate, with its inverse.
///
/// Integration runs in `w = ln s`, where the integrand `s / |φ(s)|` stays
/// bounded near the origin for the supported families. Values at
/// half-decade anchors across [`DOMAIN`] are precomputed so that each
/// evaluation integrates over at most half a decade.
#[derive(Clone, Debug)]
pub struct PhiTransform {
    rate: RateFunction,
    abs_eta: Option<f64>,
    anchors: Vec<(f64, f64)>,
    breaks: Vec<f64>,
}

impl PhiTransform {
    pub fn new(rate: RateFunction) -> Result<Self, RateError> {
        rate.validate()?;
        let grid = log_grid(DOMAIN.0, DOMAIN.1, 181);
        if rate.sign_on(&grid).is_none() {
            return Err(RateError::InvalidRate("rate vanishes or changes sign on the domain".into()));
        }
        let abs_eta = rate.as_linear().map(f64::abs);
        let breaks = match &rate {
            RateFunction::Tabulated { points } => points.iter().map(|p| p[0].ln()).collect(),
            _ => Vec::new(),
        };
        let mut t = PhiTransform { rate, abs_eta, anchors: vec![(0.0, 0.0)], breaks };
        if t.abs_eta.is_none() {
            t.build_anchors();
        }
        Ok(t)
    }

    fn build_anchors(&mut self) {
        let step = 0.5 * std::f64::consts::LN_10;
        let (wlo, whi) = (DOMAIN.0.ln(), DOMAIN.1.ln());
        let mut up = vec![(0.0, 0.0)];
        let mut w = 0.0;
        while w < whi {
            let nw = (w + step).min(whi);
            let v = up.last().unwrap().1 + self.segment(w, nw);
            up.push((nw, v));
            w = nw;
        }
        let mut down = Vec::new();
        let (mut w, mut acc) = (0.0, 0.0);
        while w > wlo {
            let nw = (w - step).max(wlo);
            acc += self.segment(w, nw);
            down.push((nw, acc));
            w = nw;
        }
        down.reverse();
        down.extend(up);
        self.anchors = down;
    }

    fn integrand(&self, w: f64) -> f64 {
        let s = w.exp();
        s / self.rate.eval(s).abs()
    }

    /// `∫_{w0}^{w1}` in log coordinates, split at table breakpoints.
    fn segment(&self, w0: f64, w1: f64) -> f64 {
        let (lo, hi) = if w0 <= w1 { (w0, w1) } else { (w1, w0) };
        let mut cuts = vec![lo];
        cuts.extend(self.breaks.iter().copied().filter(|&b| b > lo && b < hi));
        cuts.push(hi);
        let mut total = 0.0;
        for c in cuts.windows(2) {
            total += quad::integrate(|w| self.integrand(w), c[0], c[1], 1e-13, 1e-15).0;
        }
        if w0 <= w1 {
            total
        } else {
            -total
        }
    }

    pub fn rate(&self) -> &RateFunction {
        &self.rate
    }

    fn check_arg(&self, v: f64) -> Result<(), RateError> {
        if !(v > 0.0) || !v.is_finite() {
            return Err(RateError::Domain { v, lo: DOMAIN.0, hi: DOMAIN.1 });
        }
        if self.abs_eta.is_none() && !(DOMAIN.0..=DOMAIN.1).contains(&v) {
            return Err(RateError::Domain { v, lo: DOMAIN.0, hi: DOMAIN.1 });
        }
        Ok(())
    }

    fn guard(&self, v: f64, value: f64) -> Result<f64, RateError> {
        if value.abs() > DIVERGENCE_LIMIT || !value.is_finite() {
            return Err(RateError::DivergentIntegral { v, partial: value });
        }
        Ok(value)
    }

    /// `Φ(v)`; exact `ln(v)/|η|` for linear rates.
    pub fn value(&self, v: f64) -> Result<f64, RateError> {
        self.check_arg(v)?;
        if let Some(e) = self.abs_eta {
            return Ok(v.ln() / e);
        }
        let w = v.ln();
        let i = self.anchors.partition_point(|a| a.0 <= w).saturating_sub(1);
        let (wa, pa) = self.anchors[i];
        let (wa, pa) = match self.anchors.get(i + 1) {
            Some(&(wb, pb)) if (wb - w).abs() < (w - wa).abs() => (wb, pb),
            _ => (wa, pa),
        };
        self.guard(v, pa + self.segment(wa, w))
    }

    /// `Φ(v)` by direct quadrature from 1, bypassing closed forms and anchors.
    pub fn quadrature(&self, v: f64) -> Result<f64, RateError> {
        if !(DOMAIN.0..=DOMAIN.1).contains(&v) {
            return Err(RateError::Domain { v, lo: DOMAIN.0, hi: DOMAIN.1 });
        }
        let w = v.ln();
        let mut cuts = vec![0.0, w];
        cuts.extend(self.breaks.iter().copied().filter(|&b| b > 0.0f64.min(w) && b < 0.0f64.max(w)));
        cuts.sort_by(f64::total_cmp);
        let mut total = 0.0;
        for c in cuts.windows(2) {
            let (val, ok) = quad::integrate(|w| self.integrand(w), c[0], c[1], PHI_TOL * 1e-2, 1e-15);
            if !ok {
                return Err(RateError::Quadrature { v });
            }
            total += val;
        }
        let total = if w < 0.0 { -total } else { total };
        self.guard(v, total)
    }

    /// `inf image(Φ)`: `−∞` when `∫_0^1 ds/|φ|` diverges.
    pub fn inf_image(&self) -> f64 {
        if self.rate.exponent_at_zero() >= 1.0 {
            return f64::NEG_INFINITY;
        }
        match self.rate {
            RateFunction::Power { c, k } => -1.0 / ((1.0 - k) * c.abs()),
            _ => f64::NEG_INFINITY,
        }
    }

    /// `sup image(Φ)`: `+∞` when `∫_1^∞ ds/|φ|` diverges.
    pub fn sup_image(&self) -> f64 {
        if self.rate.exponent_at_infinity() <= 1.0 {
            return f64::INFINITY;
        }
        match self.rate {
            RateFunction::Power { c, k } => 1.0 / ((k - 1.0) * c.abs()),
            _ => f64::INFINITY,
        }
    }

    /// Whether `image(Φ) = ℝ`.
    pub fn image_is_full(&self) -> bool {
        self.inf_image() == f64::NEG_INFINITY && self.sup_image() == f64::INFINITY
    }

    /// Values of `Φ` at the ends of the numerical domain.
    pub fn domain_image(&self) -> (f64, f64) {
        if self.abs_eta.is_some() {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        (self.anchors[0].1, self.anchors[self.anchors.len() - 1].1)
    }

    /// `Φ⁻¹(y)`, located to `|Φ(v) − y| ≤ 1e−10` (or to machine resolution in `v`).
    pub fn inverse(&self, y: f64) -> Result<f64, RateError> {
        if !y.is_finite() {
            return Err(RateError::OutOfImage { y, lo: self.inf_image(), hi: self.sup_image() });
        }
        if let Some(e) = self.abs_eta {
            let v = (e * y).exp();
            if v == 0.0 || !v.is_finite() {
                return Err(RateError::OutOfImage { y, lo: f64::NEG_INFINITY, hi: f64::INFINITY });
            }
            return Ok(v);
        }
        let (lo, hi) = self.domain_image();
        if y < lo || y > hi {
            return Err(RateError::OutOfImage { y, lo, hi });
        }
        let i = self.anchors.partition_point(|a| a.1 <= y).clamp(1, self.anchors.len() - 1);
        let (mut a, mut fa) = (self.anchors[i - 1].0, self.anchors[i - 1].1 - y);
        let (mut b, mut fb) = (self.anchors[i].0, self.anchors[i].1 - y);
        if fa == 0.0 {
            return Ok(a.exp());
        }
        if fb == 0.0 {
            return Ok(b.exp());
        }
        // Illinois variant of regula falsi on w = ln v, with a bisection every
        // fourth step. Stops on bracket width since Φ may be nearly flat.
        let mut side = 0i8;
        for it in 0..300 {
            let c = if fb != fa && it % 4 != 3 { b - fb * (b - a) / (fb - fa) } else { 0.5 * (a + b) };
            let c = if c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
            let fc = self.value(c.exp())? - y;
            if fc == 0.0 || (b - a).abs() <= 4.0 * f64::EPSILON * c.abs().max(1.0) {
                return Ok(c.exp());
            }
            if (fc > 0.0) == (fb > 0.0) {
                b = c;
                fb = fc;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            } else {
                a = c;
                fa = fc;
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            }
        }
        Ok((0.5 * (a + b)).exp())
    }
}
