//! Candidate ISS Lyapunov certificates and their sampled verification along
//! trajectories.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::rates::{log_grid, ComparisonFunction, PhiTransform, RateError, RateFunction, RateSign, DOMAIN};
use crate::signal::{Mode, SwitchingSignal};
use crate::simulate::{norm, InputSignal, Trajectory};

/// Whether rate bounds hold above the threshold `χ` or with `χ` as an additive term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertificateForm {
    Implication,
    Dissipation,
}

/// Per-mode Lyapunov function `V_p(t, x)`.
#[derive(Clone)]
pub enum LyapunovFn {
    /// `xᵀ M x`
    Quadratic(DMatrix<f64>),
    /// `c ‖x‖^k`
    Power { c: f64, k: f64 },
    Custom(Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for LyapunovFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LyapunovFn::Quadratic(m) => write!(f, "Quadratic({m:?})"),
            LyapunovFn::Power { c, k } => write!(f, "Power {{ c: {c}, k: {k} }}"),
            LyapunovFn::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl LyapunovFn {
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            LyapunovFn::Quadratic(m) => {
                let v = DVector::from_column_slice(x);
                (v.transpose() * m * &v)[(0, 0)]
            }
            LyapunovFn::Power { c, k } => c * norm(x).powf(*k),
            LyapunovFn::Custom(f) => f(t, x),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Partition {
    pub stable: BTreeSet<Mode>,
    pub unstable: BTreeSet<Mode>,
}

impl Partition {
    pub fn is_stable(&self, p: &Mode) -> bool {
        self.stable.contains(p)
    }
    pub fn contains(&self, p: &Mode) -> bool {
        self.stable.contains(p) || self.unstable.contains(p)
    }
}

/// Dwell parameters `τ_p`, `δ` and the slacks `T_S`, `T_U`.
#[derive(Clone, Debug, PartialEq)]
pub struct DwellSpec {
    pub tau: BTreeMap<Mode, f64>,
    pub delta: f64,
    pub t_s: f64,
    pub t_u: f64,
}

impl DwellSpec {
    pub fn tau(&self, p: &Mode) -> f64 {
        self.tau.get(p).copied().unwrap_or(0.0)
    }
}

/// Rate envelopes `φ̲ ≤ |φ_p| ≤ φ̄`.
#[derive(Clone, Debug, PartialEq)]
pub struct Envelopes {
    pub lower: RateFunction,
    pub upper: RateFunction,
}

#[derive(Clone, Debug)]
pub struct Certificate {
    pub form: CertificateForm,
    pub v: BTreeMap<Mode, LyapunovFn>,
    pub alpha1: ComparisonFunction,
    pub alpha2: ComparisonFunction,
    pub alpha3: ComparisonFunction,
    pub chi: ComparisonFunction,
    pub phi: BTreeMap<Mode, RateFunction>,
    pub psi: BTreeMap<Mode, RateFunction>,
    pub partition: Partition,
    pub dwell: DwellSpec,
    pub envelopes: Option<Envelopes>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("sign of the rate for mode {0} is ambiguous on the sample range")]
    SignAmbiguous(Mode),
    #[error("mode {mode}: {which} gap {gap:e} is degenerate")]
    DegenerateGap { mode: Mode, which: &'static str, gap: f64 },
    #[error("certificate is inconsistent: {0}")]
    Inconsistent(String),
    #[error("operation needs linear rates, mode {0} is not linear")]
    NotLinear(Mode),
    #[error(transparent)]
    Rate(#[from] RateError),
}

/// Sample grid for rate-sign and envelope checks.
pub fn default_rate_grid() -> Vec<f64> {
    log_grid(1e-6, 1e6, 121)
}

/// The 64-point log grid over the numerical domain used for dwell conditions.
pub fn default_a_grid() -> Vec<f64> {
    log_grid(DOMAIN.0, DOMAIN.1, 64)
}

impl Certificate {
    /// Modes covered by the certificate.
    pub fn modes(&self) -> BTreeSet<Mode> {
        self.v.keys().cloned().collect()
    }

    pub fn validate(&self) -> Result<(), CertifyError> {
        let bad = |m: String| Err(CertifyError::Inconsistent(m));
        for p in self.v.keys() {
            if !self.phi.contains_key(p) || !self.psi.contains_key(p) {
                return bad(format!("mode {p} lacks a flow or jump rate"));
            }
            if !self.partition.contains(p) {
                return bad(format!("mode {p} is in neither the stable nor the unstable set"));
            }
        }
        if !self.partition.stable.is_disjoint(&self.partition.unstable) {
            return bad("stable and unstable sets overlap".into());
        }
        for f in [&self.alpha1, &self.alpha2, &self.alpha3, &self.chi] {
            f.validate()?;
        }
        if !(self.dwell.delta > 0.0) {
            return bad(format!("delta must be positive, got {}", self.dwell.delta));
        }
        let found = classify_modes(&self.phi, &default_rate_grid())?;
        for p in self.v.keys() {
            if found.is_stable(p) != self.partition.is_stable(p) {
                return bad(format!("mode {p} is declared on the wrong side of the partition"));
            }
        }
        Ok(())
    }

    pub fn transforms(&self) -> Result<BTreeMap<Mode, PhiTransform>, CertifyError> {
        self.phi
            .iter()
            .map(|(k, r)| Ok((k.clone(), PhiTransform::new(r.clone())?)))
            .collect()
    }

    /// Envelopes from the declared rates when they share a family:
    /// linear rates, or power rates with a common exponent.
    pub fn derived_envelopes(&self) -> Option<Envelopes> {
        if let Some(e) = &self.envelopes {
            return Some(e.clone());
        }
        let mut lin = Vec::new();
        let mut pow = Vec::new();
        for r in self.phi.values() {
            match r {
                RateFunction::Linear { eta } => lin.push(eta.abs()),
                RateFunction::Power { c, k } => pow.push((c.abs(), *k)),
                RateFunction::Tabulated { .. } => return None,
            }
        }
        let lo_hi = |v: &[f64]| (v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(0.0, f64::max));
        if pow.is_empty() && !lin.is_empty() {
            let (lo, hi) = lo_hi(&lin);
            return Some(Envelopes { lower: RateFunction::linear(lo), upper: RateFunction::linear(hi) });
        }
        if lin.is_empty() && !pow.is_empty() && pow.iter().all(|&(_, k)| k == pow[0].1) {
            let cs: Vec<f64> = pow.iter().map(|p| p.0).collect();
            let (lo, hi) = lo_hi(&cs);
            let k = pow[0].1;
            return Some(Envelopes { lower: RateFunction::power(lo, k), upper: RateFunction::power(hi, k) });
        }
        None
    }

    fn value(&self, p: &Mode, t: f64, x: &[f64]) -> f64 {
        self.v[p].eval(t, x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    SandwichLower,
    SandwichUpper,
    Flow,
    Jump,
    JumpBelowThreshold,
    Dwell,
    Mdadt,
    Mdalt,
    Iss,
    Decrease,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::SandwichLower => "sandwich_lower",
            ViolationKind::SandwichUpper => "sandwich_upper",
            ViolationKind::Flow => "flow",
            ViolationKind::Jump => "jump",
            ViolationKind::JumpBelowThreshold => "jump_below_threshold",
            ViolationKind::Dwell => "dwell",
            ViolationKind::Mdadt => "mdadt",
            ViolationKind::Mdalt => "mdalt",
            ViolationKind::Iss => "iss",
            ViolationKind::Decrease => "decrease",
        })
    }
}

/// A failed inequality `lhs ≤ rhs`; `margin = lhs − rhs > 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ViolationReport {
    pub kind: ViolationKind,
    pub time: f64,
    pub mode: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

impl ViolationReport {
    pub fn new(kind: ViolationKind, time: f64, mode: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        ViolationReport { kind, time, mode: mode.into(), lhs, rhs, margin: lhs - rhs }
    }
}

/// Tolerances for the sampled checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckOptions {
    /// Forward differences may exceed the rate by `dini_c · h · (1 + |V|)`.
    pub dini_c: f64,
    /// Relative slack on pointwise inequalities.
    pub rel_tol: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { dini_c: 10.0, rel_tol: 1e-9 }
    }
}

/// Allowed excess of a forward difference over `step h` at level `v`.
pub fn dini_tolerance(opts: &CheckOptions, h: f64, v: f64) -> f64 {
    let scale = 1.0 + v.abs();
    opts.dini_c * h * scale + 4.0 * f64::EPSILON * scale / h
}

fn pointwise_tol(opts: &CheckOptions, rhs: f64) -> f64 {
    opts.rel_tol * (1.0 + rhs.abs())
}

/// `α₁(‖x‖) ≤ V_σ(t)(t, x) ≤ α₂(‖x‖)` at every sample (absolute tolerance `1e−9`).
pub fn check_sandwich(cert: &Certificate, traj: &Trajectory) -> Vec<ViolationReport> {
    let mut out = Vec::new();
    for (t, p, x) in traj.samples() {
        let v = cert.value(p, t, x);
        let r = norm(x);
        let lo = cert.alpha1.eval(r);
        let hi = cert.alpha2.eval(r);
        if lo > v + 1e-9 {
            out.push(ViolationReport::new(ViolationKind::SandwichLower, t, p.as_str(), lo, v));
        }
        if v > hi + 1e-9 {
            out.push(ViolationReport::new(ViolationKind::SandwichUpper, t, p.as_str(), v, hi));
        }
    }
    out
}

/// Forward differences of `V` on each segment, as `(t, mode, h, V(t), ΔV/h)`.
fn differences<'a>(
    traj: &'a Trajectory,
    value: impl Fn(&Mode, f64, &[f64]) -> f64 + 'a,
) -> impl Iterator<Item = (f64, &'a Mode, f64, f64, f64)> + 'a {
    let value = Arc::new(value);
    traj.segments.iter().flat_map(move |seg| {
        let value = value.clone();
        let vs: Vec<f64> = seg.times.iter().zip(&seg.states).map(|(&t, x)| value(&seg.mode, t, x)).collect();
        (0..seg.times.len().saturating_sub(1)).map(move |k| {
            let h = seg.times[k + 1] - seg.times[k];
            (seg.times[k], &seg.mode, h, vs[k], (vs[k + 1] - vs[k]) / h)
        })
    })
}

/// Flow bound `V ≥ χ(‖u‖∞) ⇒ D⁺V ≤ φ_p(V)`, checked by forward differences.
pub fn check_flow_implication(cert: &Certificate, traj: &Trajectory, input: &InputSignal, opts: &CheckOptions) -> Vec<ViolationReport> {
    let threshold = cert.chi.eval(input.sup_norm());
    differences(traj, |p, t, x| cert.value(p, t, x))
        .filter(|&(_, _, _, v, _)| v >= threshold)
        .filter_map(|(t, p, h, v, d)| {
            let rhs = cert.phi[p].eval(v);
            (d > rhs + dini_tolerance(opts, h, v)).then(|| ViolationReport::new(ViolationKind::Flow, t, p.as_str(), d, rhs))
        })
        .collect()
}

/// Jump bound: `V⁻ ≥ χ(‖u‖∞) ⇒ V⁺ ≤ ψ_{σ(t_i⁻)}(V⁻)`, otherwise `V⁺ ≤ α₃(‖u‖∞)`.
pub fn check_jump_implication(cert: &Certificate, traj: &Trajectory, input: &InputSignal, opts: &CheckOptions) -> Vec<ViolationReport> {
    let u = input.sup_norm();
    let threshold = cert.chi.eval(u);
    let mut out = Vec::new();
    for j in &traj.jumps {
        let pre = cert.value(&j.from, j.time, &j.pre);
        let post = cert.value(&j.to, j.time, &j.post);
        let label = format!("{}->{}", j.from, j.to);
        let (kind, rhs) = if pre >= threshold {
            (ViolationKind::Jump, cert.psi[&j.from].eval(pre))
        } else {
            (ViolationKind::JumpBelowThreshold, cert.alpha3.eval(u))
        };
        if post > rhs + pointwise_tol(opts, rhs) {
            out.push(ViolationReport::new(kind, j.time, label, post, rhs));
        }
    }
    out
}

/// Dissipation form: `D⁺V ≤ φ_p(V) + χ(‖u‖∞)` and `V⁺ ≤ ψ_q(V⁻) + χ(‖u‖∞)`.
pub fn check_dissipation(cert: &Certificate, traj: &Trajectory, input: &InputSignal, opts: &CheckOptions) -> Vec<ViolationReport> {
    let extra = cert.chi.eval(input.sup_norm());
    let mut out: Vec<ViolationReport> = differences(traj, |p, t, x| cert.value(p, t, x))
        .filter_map(|(t, p, h, v, d)| {
            let rhs = cert.phi[p].eval(v) + extra;
            (d > rhs + dini_tolerance(opts, h, v)).then(|| ViolationReport::new(ViolationKind::Flow, t, p.as_str(), d, rhs))
        })
        .collect();
    for j in &traj.jumps {
        let pre = cert.value(&j.from, j.time, &j.pre);
        let post = cert.value(&j.to, j.time, &j.post);
        let rhs = cert.psi[&j.from].eval(pre) + extra;
        if post > rhs + pointwise_tol(opts, rhs) {
            out.push(ViolationReport::new(ViolationKind::Jump, j.time, format!("{}->{}", j.from, j.to), post, rhs));
        }
    }
    out
}

/// Flow and jump checks in the certificate's own form.
pub fn check_trajectory(cert: &Certificate, traj: &Trajectory, input: &InputSignal, opts: &CheckOptions) -> Vec<ViolationReport> {
    let mut out = check_sandwich(cert, traj);
    match cert.form {
        CertificateForm::Implication => {
            out.extend(check_flow_implication(cert, traj, input, opts));
            out.extend(check_jump_implication(cert, traj, input, opts));
        }
        CertificateForm::Dissipation => out.extend(check_dissipation(cert, traj, input, opts)),
    }
    out
}

/// `T_S` and `T_U` against the exact slacks of `sig`.
pub fn check_dwell_slacks(cert: &Certificate, sig: &SwitchingSignal) -> Vec<ViolationReport> {
    let mut out = Vec::new();
    let ds = sig.mdadt_slack(&cert.partition.stable, &cert.dwell.tau);
    if ds > cert.dwell.t_s * (1.0 + 1e-12) + 1e-12 {
        out.push(ViolationReport::new(ViolationKind::Mdadt, sig.horizon(), "S", ds, cert.dwell.t_s));
    }
    let du = sig.mdalt_slack(&cert.partition.unstable, &cert.dwell.tau);
    if du > cert.dwell.t_u * (1.0 + 1e-12) + 1e-12 {
        out.push(ViolationReport::new(ViolationKind::Mdalt, sig.horizon(), "U", du, cert.dwell.t_u));
    }
    out
}

/// Grid point at which a dwell inequality could not be evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct Inconclusive {
    pub time: f64,
    pub pair: String,
    pub a: f64,
    pub reason: String,
}

/// Linear-rate reduction of a dwell inequality at one switching instant.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedFormCheck {
    pub time: f64,
    pub pair: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DwellReport {
    pub violations: Vec<ViolationReport>,
    pub inconclusive: Vec<Inconclusive>,
    pub closed_form: Vec<ClosedFormCheck>,
}

struct PairOutcome {
    worst: Option<(f64, f64)>,
    inconclusive: Vec<(f64, String)>,
    closed: Option<(f64, f64, bool)>,
}

/// Left side `Φ_p(ψ_q(a)) − Φ_q(a)` of the dwell inequality for a switch `q → p`.
pub fn dwell_lhs(tp: &PhiTransform, tq: &PhiTransform, psi_q: &RateFunction, a: f64) -> Result<f64, RateError> {
    Ok(tp.value(psi_q.eval(a))? - tq.value(a)?)
}

/// Dwell inequalities at every switching instant on the grid of `a` values:
/// `Φ_p(ψ_q(a)) − Φ_q(a) ≤ τ_q(1 − δ)` when `q = σ(t_i⁻)` is stable and
/// `−Φ_p(ψ_q(a)) + Φ_q(a) ≥ τ_q(1 + δ)` when it is unstable.
///
/// With linear `φ_q`, `φ_p`, `ψ_q = μ s` the closed form
/// `ln(μ e^{|η_q| − |η_p|}) / |η_q|` is reported alongside.
pub fn check_dwell_conditions(cert: &Certificate, sig: &SwitchingSignal, a_grid: &[f64]) -> Result<DwellReport, CertifyError> {
    let tf = cert.transforms()?;
    let delta = cert.dwell.delta;
    let mut cache: BTreeMap<(Mode, Mode), PairOutcome> = BTreeMap::new();
    let mut report = DwellReport::default();
    for (i, &t) in sig.instants().iter().enumerate() {
        let q = &sig.modes()[i];
        let p = &sig.modes()[i + 1];
        let stable = cert.partition.is_stable(q);
        let tau = cert.dwell.tau(q);
        let rhs = if stable { tau * (1.0 - delta) } else { tau * (1.0 + delta) };
        let key = (q.clone(), p.clone());
        if !cache.contains_key(&key) {
            let (tp, tq) = match (tf.get(p), tf.get(q)) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(CertifyError::Inconsistent(format!("switch {q}->{p} involves an uncertified mode"))),
            };
            let psi = &cert.psi[q];
            let mut worst: Option<(f64, f64)> = None;
            let mut inconclusive = Vec::new();
            for &a in a_grid {
                match dwell_lhs(tp, tq, psi, a) {
                    Ok(l) => {
                        let lhs = if stable { l } else { -l };
                        let margin = if stable { lhs - rhs } else { rhs - lhs };
                        if worst.map_or(true, |(_, m)| margin > m) {
                            worst = Some((lhs, margin));
                        }
                    }
                    Err(e) => inconclusive.push((a, e.to_string())),
                }
            }
            let closed = match (cert.phi[q].as_linear(), cert.phi[p].as_linear(), psi.as_linear()) {
                (Some(eq), Some(ep), Some(mu)) if mu > 0.0 => {
                    let mt = mu * (eq.abs() - ep.abs()).exp();
                    let v = mt.ln() / eq.abs();
                    Some(if stable { (v, rhs, v <= rhs + 1e-12) } else { (-v, rhs, -v >= rhs - 1e-12) })
                }
                _ => None,
            };
            cache.insert(key.clone(), PairOutcome { worst, inconclusive, closed });
        }
        let out = &cache[&key];
        let pair = format!("{q}->{p}");
        if let Some((lhs, margin)) = out.worst {
            if margin > 1e-12 {
                let (l, r) = if stable { (lhs, rhs) } else { (rhs, lhs) };
                report.violations.push(ViolationReport::new(ViolationKind::Dwell, t, pair.clone(), l, r));
            }
        }
        for (a, reason) in &out.inconclusive {
            report.inconclusive.push(Inconclusive { time: t, pair: pair.clone(), a: *a, reason: reason.clone() });
        }
        if let Some((lhs, rhs, holds)) = out.closed {
            report.closed_form.push(ClosedFormCheck { time: t, pair, lhs, rhs, holds });
        }
    }
    Ok(report)
}

/// Splits modes by the sign of their flow rate on `grid`.
pub fn classify_modes(rates: &BTreeMap<Mode, RateFunction>, grid: &[f64]) -> Result<Partition, CertifyError> {
    let mut part = Partition::default();
    for (p, r) in rates {
        match r.sign_on(grid) {
            Some(RateSign::Negative) => part.stable.insert(p.clone()),
            Some(RateSign::Positive) => part.unstable.insert(p.clone()),
            None => return Err(CertifyError::SignAmbiguous(p.clone())),
        };
    }
    Ok(part)
}

/// Every flow rate is negative and every jump rate satisfies `ψ_p(s) ≤ s` on `grid`.
pub fn check_decreasing_certificate(cert: &Certificate, grid: &[f64]) -> bool {
    let flows = cert.phi.values().all(|r| r.sign_on(grid) == Some(RateSign::Negative));
    let jumps = cert.psi.values().all(|r| grid.iter().all(|&s| r.eval(s) <= s * (1.0 + 1e-12)));
    flows && jumps
}

/// Converts a dissipation-form certificate with linear rates into
/// implication form.
///
/// For stable modes `η_p = (1 − δ)/(1 − ¾δ)·η̃_p`, for unstable ones
/// `η_p = (1 + δ)/(1 + ¾δ)·η̃_p`; jumps use `μ_p = e^{δ τ_p |η_p| / 4} μ̃_p`.
/// The threshold is `χ = max_p max{1/(η_p − η̃_p), 1/(μ_p − μ̃_p)} · χ̃` and the
/// result carries `δ/2`, for which the dwell margins hold again.
pub fn dissipation_to_implication(cert: &Certificate) -> Result<Certificate, CertifyError> {
    if cert.form != CertificateForm::Dissipation {
        return Err(CertifyError::Inconsistent("certificate is already in implication form".into()));
    }
    let delta = cert.dwell.delta;
    let mut phi = BTreeMap::new();
    let mut psi = BTreeMap::new();
    let mut scale = 0.0f64;
    let mut mu_tilde_max = 0.0f64;
    for p in cert.v.keys() {
        let et = cert.phi[p].as_linear().ok_or_else(|| CertifyError::NotLinear(p.clone()))?;
        let mt = cert.psi[p].as_linear().ok_or_else(|| CertifyError::NotLinear(p.clone()))?;
        let eta = if cert.partition.is_stable(p) {
            (1.0 - delta) / (1.0 - 0.75 * delta) * et
        } else {
            (1.0 + delta) / (1.0 + 0.75 * delta) * et
        };
        let mu = (delta * cert.dwell.tau(p) * eta.abs() / 4.0).exp() * mt;
        let g_eta = eta - et;
        let g_mu = mu - mt;
        if !(g_eta > 1e-12) {
            return Err(CertifyError::DegenerateGap { mode: p.clone(), which: "flow", gap: g_eta });
        }
        if !(g_mu > 1e-12) {
            return Err(CertifyError::DegenerateGap { mode: p.clone(), which: "jump", gap: g_mu });
        }
        scale = scale.max((1.0 / g_eta).max(1.0 / g_mu));
        mu_tilde_max = mu_tilde_max.max(mt);
        phi.insert(p.clone(), RateFunction::linear(eta));
        psi.insert(p.clone(), RateFunction::linear(mu));
    }
    let chi = ComparisonFunction::compose(ComparisonFunction::linear(scale), cert.chi.clone());
    let below = ComparisonFunction::compose(ComparisonFunction::linear(mu_tilde_max * scale + 1.0), cert.chi.clone());
    let alpha3 = ComparisonFunction::max(vec![cert.alpha3.clone(), below]);
    let mut dwell = cert.dwell.clone();
    dwell.delta = delta / 2.0;
    Ok(Certificate {
        form: CertificateForm::Implication,
        v: cert.v.clone(),
        alpha1: cert.alpha1.clone(),
        alpha2: cert.alpha2.clone(),
        alpha3,
        chi,
        phi,
        psi,
        partition: cert.partition.clone(),
        dwell,
        envelopes: None,
    })
}

/// Per-mode linear dwell margin `ln μ_p / |η_p|` against `τ_p(1 ∓ δ)` using
/// the certificate's own `δ`. Entries are `(mode, lhs, rhs, holds)`.
pub fn linear_dwell_margins(cert: &Certificate) -> Result<Vec<(Mode, f64, f64, bool)>, CertifyError> {
    let delta = cert.dwell.delta;
    cert.v
        .keys()
        .map(|p| {
            let eta = cert.phi[p].as_linear().ok_or_else(|| CertifyError::NotLinear(p.clone()))?;
            let mu = cert.psi[p].as_linear().ok_or_else(|| CertifyError::NotLinear(p.clone()))?;
            let v = mu.ln() / eta.abs();
            let tau = cert.dwell.tau(p);
            Ok(if cert.partition.is_stable(p) {
                (p.clone(), v, tau * (1.0 - delta), v <= tau * (1.0 - delta) + 1e-12)
            } else {
                (p.clone(), -v, tau * (1.0 + delta), -v >= tau * (1.0 + delta) - 1e-12)
            })
        })
        .collect()
}
