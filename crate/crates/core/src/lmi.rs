//! Quadratic certificates for linear impulsive switched systems: eigenvalue
//! tests of the flow and jump matrix inequalities, the linear dwell
//! conditions, and a heuristic search for feasible data.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{Certificate, CertificateForm, DwellSpec, LyapunovFn, Partition, ViolationKind, ViolationReport};
use crate::linalg::{
    asymmetry, from_rows, lyapunov, max_eigenvalue, max_generalized_eigenvalue, min_eigenvalue, spectral_abscissa,
    symmetrize, to_rows,
};
use crate::rates::{ComparisonFunction, RateFunction};
use crate::signal::{Mode, ModeChangeSet};
use crate::simulate::{LinearMode, LinearSystemModel};

/// Largest eigenvalue accepted as `≤ 0`.
pub const PSD_TOL: f64 = 1e-9;
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Lyapunov solves above this condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// The constraint that stopped [`synthesize`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Infeasible {
    pub mode: String,
    pub constraint: String,
    pub lhs: f64,
    pub rhs: f64,
}

impl fmt::Display for Infeasible {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} for {}: {} vs {}", self.constraint, self.mode, self.lhs, self.rhs)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmiError {
    #[error("{what} is not symmetric (relative asymmetry {asymmetry:e})")]
    Asymmetric { what: String, asymmetry: f64 },
    #[error("{what} is not positive definite (smallest eigenvalue {min_eig:e})")]
    NotPositiveDefinite { what: String, min_eig: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no data for mode {0}")]
    MissingMode(Mode),
    #[error("Lyapunov solve for mode {mode} has condition number {condition:e}")]
    NumericalFailure { mode: Mode, condition: f64 },
    #[error("no certificate found: {0}")]
    Infeasible(Infeasible),
}

/// `V_p(x) = xᵀ M_p x` with flow rates `η_p`, jump gains `μ_p` and input
/// weights `Q_p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CertRepr", into = "CertRepr")]
pub struct QuadraticCertificate {
    pub m: BTreeMap<Mode, DMatrix<f64>>,
    pub q: BTreeMap<Mode, DMatrix<f64>>,
    pub eta: BTreeMap<Mode, f64>,
    pub mu: BTreeMap<Mode, f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertRepr {
    #[serde(rename = "M")]
    m: BTreeMap<Mode, Vec<Vec<f64>>>,
    #[serde(rename = "Q")]
    q: BTreeMap<Mode, Vec<Vec<f64>>>,
    eta: BTreeMap<Mode, f64>,
    mu: BTreeMap<Mode, f64>,
}

fn rows_map(m: BTreeMap<Mode, Vec<Vec<f64>>>) -> Result<BTreeMap<Mode, DMatrix<f64>>, String> {
    m.into_iter().map(|(k, r)| from_rows(&r).map(|x| (k.clone(), x)).map_err(|e| format!("{k}: {e}"))).collect()
}

impl TryFrom<CertRepr> for QuadraticCertificate {
    type Error = String;
    fn try_from(r: CertRepr) -> Result<Self, String> {
        Ok(QuadraticCertificate { m: rows_map(r.m)?, q: rows_map(r.q)?, eta: r.eta, mu: r.mu })
    }
}

impl From<QuadraticCertificate> for CertRepr {
    fn from(c: QuadraticCertificate) -> Self {
        let rows = |m: &BTreeMap<Mode, DMatrix<f64>>| m.iter().map(|(k, v)| (k.clone(), to_rows(v))).collect();
        CertRepr { m: rows(&c.m), q: rows(&c.q), eta: c.eta, mu: c.mu }
    }
}

fn checked<'a>(map: &'a BTreeMap<Mode, DMatrix<f64>>, p: &Mode, name: &str) -> Result<&'a DMatrix<f64>, LmiError> {
    let x = map.get(p).ok_or_else(|| LmiError::MissingMode(p.clone()))?;
    let what = format!("{name}[{p}]");
    if !x.is_square() {
        return Err(LmiError::Dimension(format!("{what} is {:?}", x.shape())));
    }
    let a = asymmetry(x);
    if a > SYMMETRY_TOL {
        return Err(LmiError::Asymmetric { what, asymmetry: a });
    }
    let min_eig = min_eigenvalue(x);
    if !(min_eig > 0.0) {
        return Err(LmiError::NotPositiveDefinite { what, min_eig });
    }
    Ok(x)
}

fn scalar(map: &BTreeMap<Mode, f64>, p: &Mode) -> Result<f64, LmiError> {
    map.get(p).copied().ok_or_else(|| LmiError::MissingMode(p.clone()))
}

impl QuadraticCertificate {
    /// `λ`, the largest eigenvalue over all `Q_p`.
    pub fn lambda_max(&self) -> f64 {
        self.q.values().map(max_eigenvalue).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), LmiError> {
        for p in self.m.keys() {
            checked(&self.m, p, "M")?;
            checked(&self.q, p, "Q")?;
            scalar(&self.eta, p)?;
            let mu = scalar(&self.mu, p)?;
            if !(mu > 0.0) {
                return Err(LmiError::Dimension(format!("mu[{p}] = {mu} must be positive")));
            }
        }
        Ok(())
    }

    /// Same data with every `M_p` and `Q_p` multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        let s = |m: &BTreeMap<Mode, DMatrix<f64>>| m.iter().map(|(k, v)| (k.clone(), v * c)).collect();
        QuadraticCertificate { m: s(&self.m), q: s(&self.q), eta: self.eta.clone(), mu: self.mu.clone() }
    }
}

/// Outcome of one eigenvalue test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EigCheck {
    pub ok: bool,
    pub max_eig: f64,
}

impl EigCheck {
    fn of(block: &DMatrix<f64>) -> Self {
        let max_eig = max_eigenvalue(block);
        EigCheck { ok: max_eig <= PSD_TOL, max_eig }
    }
}

fn stack(tl: &DMatrix<f64>, tr: &DMatrix<f64>, br: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (tl.nrows(), br.nrows());
    let mut out = DMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(tl);
    out.view_mut((0, n), (n, m)).copy_from(tr);
    out.view_mut((n, 0), (m, n)).copy_from(&tr.transpose());
    out.view_mut((n, n), (m, m)).copy_from(br);
    symmetrize(&out)
}

/// `[[AᵀM + MA − ηM, MB], [BᵀM, −Q]]`.
pub fn flow_block(lm: &LinearMode, m: &DMatrix<f64>, q: &DMatrix<f64>, eta: f64) -> DMatrix<f64> {
    let tl = lm.a.transpose() * m + m * &lm.a - m * eta;
    stack(&tl, &(m * &lm.b), &(-q))
}

/// `[[J_qᵀM_pJ_q − μ_qM_q, J_qᵀM_pH_q], [H_qᵀM_pJ_q, H_qᵀM_pH_q − Q_q]]` for a jump from `q` into `p`.
pub fn jump_block(lq: &LinearMode, m_p: &DMatrix<f64>, m_q: &DMatrix<f64>, q_q: &DMatrix<f64>, mu_q: f64) -> DMatrix<f64> {
    let jt = lq.j.transpose();
    let ht = lq.h.transpose();
    let tl = &jt * m_p * &lq.j - m_q * mu_q;
    let tr = &jt * m_p * &lq.h;
    let br = &ht * m_p * &lq.h - q_q;
    stack(&tl, &tr, &br)
}

fn mode_of<'a>(model: &'a LinearSystemModel, p: &Mode) -> Result<&'a LinearMode, LmiError> {
    model.modes.get(p).ok_or_else(|| LmiError::MissingMode(p.clone()))
}

fn dims(lm: &LinearMode, m: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<(), LmiError> {
    if m.nrows() != lm.state_dim() || q.nrows() != lm.input_dim() {
        return Err(LmiError::Dimension(format!(
            "M is {}x{}, Q is {}x{} for n = {}, m = {}",
            m.nrows(),
            m.ncols(),
            q.nrows(),
            q.ncols(),
            lm.state_dim(),
            lm.input_dim()
        )));
    }
    Ok(())
}

pub fn check_flow_lmi(model: &LinearSystemModel, qc: &QuadraticCertificate, p: &Mode) -> Result<EigCheck, LmiError> {
    let lm = mode_of(model, p)?;
    let m = checked(&qc.m, p, "M")?;
    let q = checked(&qc.q, p, "Q")?;
    dims(lm, m, q)?;
    Ok(EigCheck::of(&flow_block(lm, m, q, scalar(&qc.eta, p)?)))
}

/// Jump test for `pair = (p, q)`: a switch from `q` into `p`.
pub fn check_jump_lmi(model: &LinearSystemModel, qc: &QuadraticCertificate, pair: &(Mode, Mode)) -> Result<EigCheck, LmiError> {
    let (p, q) = pair;
    let lq = mode_of(model, q)?;
    let m_p = checked(&qc.m, p, "M")?;
    let m_q = checked(&qc.m, q, "M")?;
    let q_q = checked(&qc.q, q, "Q")?;
    dims(lq, m_p, q_q)?;
    dims(lq, m_q, q_q)?;
    Ok(EigCheck::of(&jump_block(lq, m_p, m_q, q_q, scalar(&qc.mu, q)?)))
}

fn log_ratio(ln_mu: f64, eta_p: f64) -> f64 {
    if ln_mu == 0.0 {
        0.0
    } else {
        ln_mu / eta_p.abs()
    }
}

/// For each `(p, q)`: stable `q` needs `η_q < 0` and `ln μ_q / |η_p| ≤ τ_q(1 − δ)`;
/// unstable `q` needs `η_q ≥ 0` and `−ln μ_q / |η_p| ≥ τ_q(1 + δ)`.
pub fn check_rate_conditions(
    qc: &QuadraticCertificate,
    partition: &Partition,
    dwell: &DwellSpec,
    q_set: &ModeChangeSet,
) -> Result<Vec<ViolationReport>, LmiError> {
    let mut out = Vec::new();
    let mut signs = std::collections::BTreeSet::new();
    for (p, q) in q_set {
        let eta_q = scalar(&qc.eta, q)?;
        let eta_p = scalar(&qc.eta, p)?;
        let mu_q = scalar(&qc.mu, q)?;
        let tau = dwell.tau(q);
        let label = format!("{q}->{p}");
        let stable = partition.is_stable(q);
        if signs.insert(q.clone()) {
            if stable && !(eta_q < 0.0) {
                out.push(ViolationReport::new(ViolationKind::Flow, f64::NAN, q.as_str(), eta_q, 0.0));
            }
            if !stable && !(eta_q >= 0.0) {
                out.push(ViolationReport::new(ViolationKind::Flow, f64::NAN, q.as_str(), 0.0, eta_q));
            }
        }
        let v = log_ratio(mu_q.ln(), eta_p);
        if stable {
            let rhs = tau * (1.0 - dwell.delta);
            if !(v <= rhs) {
                out.push(ViolationReport::new(ViolationKind::Dwell, f64::NAN, label, v, rhs));
            }
        } else {
            let rhs = tau * (1.0 + dwell.delta);
            if !(-v >= rhs) {
                out.push(ViolationReport::new(ViolationKind::Dwell, f64::NAN, label, rhs, -v));
            }
        }
    }
    Ok(out)
}

/// Verdict over all modes and pairs, keyed by mode name and `"from->to"`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LmiVerdict {
    pub flow: BTreeMap<String, EigCheck>,
    pub jump: BTreeMap<String, EigCheck>,
    pub rates: Vec<ViolationReport>,
}

impl LmiVerdict {
    pub fn passed(&self) -> bool {
        self.rates.is_empty() && self.flow.values().chain(self.jump.values()).all(|c| c.ok)
    }
}

pub fn verify(
    model: &LinearSystemModel,
    qc: &QuadraticCertificate,
    partition: &Partition,
    dwell: &DwellSpec,
    q_set: &ModeChangeSet,
) -> Result<LmiVerdict, LmiError> {
    qc.validate()?;
    let mut flow = BTreeMap::new();
    for p in model.modes.keys() {
        flow.insert(p.to_string(), check_flow_lmi(model, qc, p)?);
    }
    let mut jump = BTreeMap::new();
    for pair in q_set {
        jump.insert(format!("{}->{}", pair.1, pair.0), check_jump_lmi(model, qc, pair)?);
    }
    let rates = check_rate_conditions(qc, partition, dwell, q_set)?;
    Ok(LmiVerdict { flow, jump, rates })
}

/// Dissipation-form certificate with `φ_p(s) = η_p s`, `ψ_p(s) = μ_p s`,
/// `χ(s) = λ s²` and sandwich bounds from the extreme eigenvalues of the `M_p`.
pub fn to_certificate(qc: &QuadraticCertificate, partition: &Partition, dwell: &DwellSpec) -> Result<Certificate, LmiError> {
    qc.validate()?;
    let lo = qc.m.values().map(min_eigenvalue).fold(f64::INFINITY, f64::min);
    let hi = qc.m.values().map(max_eigenvalue).fold(0.0, f64::max);
    let lambda = qc.lambda_max();
    let mut phi = BTreeMap::new();
    let mut psi = BTreeMap::new();
    let mut v = BTreeMap::new();
    for (p, m) in &qc.m {
        v.insert(p.clone(), LyapunovFn::Quadratic(m.clone()));
        phi.insert(p.clone(), RateFunction::linear(scalar(&qc.eta, p)?));
        psi.insert(p.clone(), RateFunction::linear(scalar(&qc.mu, p)?));
    }
    Ok(Certificate {
        form: CertificateForm::Dissipation,
        v,
        alpha1: ComparisonFunction::quadratic(lo),
        alpha2: ComparisonFunction::quadratic(hi),
        alpha3: ComparisonFunction::quadratic(lambda),
        chi: ComparisonFunction::quadratic(lambda),
        phi,
        psi,
        partition: partition.clone(),
        dwell: dwell.clone(),
        envelopes: None,
    })
}

/// `λ_max(Y (−N)⁻¹ Yᵀ)`, the smallest `q` with `[[N, Y], [Yᵀ, −qI]] ≤ 0` for `N ≺ 0`.
fn schur_level(n: &DMatrix<f64>, y: &DMatrix<f64>) -> Option<f64> {
    if y.ncols() == 0 || y.iter().all(|v| *v == 0.0) {
        return Some(0.0);
    }
    let chol = (-n).cholesky()?;
    let z = chol.solve(y);
    Some(max_eigenvalue(&symmetrize(&(y.transpose() * z))))
}

fn infeasible(mode: &Mode, constraint: &str, lhs: f64, rhs: f64) -> LmiError {
    LmiError::Infeasible(Infeasible { mode: mode.to_string(), constraint: constraint.into(), lhs, rhs })
}

fn lyap(mode: &Mode, a: &DMatrix<f64>) -> Result<DMatrix<f64>, LmiError> {
    let n = a.nrows();
    let (m, condition) = lyapunov(a, &DMatrix::identity(n, n)).ok_or(LmiError::NumericalFailure { mode: mode.clone(), condition: f64::INFINITY })?;
    if !(condition <= MAX_CONDITION) {
        return Err(LmiError::NumericalFailure { mode: mode.clone(), condition });
    }
    let top = max_eigenvalue(&m);
    Ok(m / top)
}

/// Heuristic search for a certificate passing [`verify`].
///
/// Stable modes take `M_p` from `A_pᵀM + MA_p = −I`, normalized to unit
/// largest eigenvalue, and walk `η_p` from
/// half the generalized bound toward it; unstable modes shift `A_p` by
/// `η_p/2` just past the spectral abscissa. Each `μ_q` is the generalized
/// eigenvalue bound of the jump block over admissible successors, and every
/// `Q_p` is the smallest multiple of the identity closing the Schur
/// complements. `budget` attempts are made.
pub fn synthesize(
    model: &LinearSystemModel,
    partition: &Partition,
    q_set: &ModeChangeSet,
    dwell: &DwellSpec,
    budget: usize,
) -> Result<QuadraticCertificate, LmiError> {
    let mut stable_base = BTreeMap::new();
    let mut abscissa = BTreeMap::new();
    for (p, lm) in &model.modes {
        let a_abs = spectral_abscissa(&lm.a);
        abscissa.insert(p.clone(), a_abs);
        if partition.is_stable(p) {
            if !(a_abs < 0.0) {
                return Err(infeasible(p, "stable flow needs a Hurwitz generator", a_abs, 0.0));
            }
            let m = lyap(p, &lm.a)?;
            let n = lm.state_dim();
            let bound = max_generalized_eigenvalue(&-DMatrix::<f64>::identity(n, n), &m)
                .ok_or(LmiError::NumericalFailure { mode: p.clone(), condition: f64::INFINITY })?;
            stable_base.insert(p.clone(), (m, bound));
        } else if !partition.contains(p) {
            return Err(LmiError::MissingMode(p.clone()));
        }
    }
    for (p, q) in q_set {
        mode_of(model, p)?;
        mode_of(model, q)?;
    }

    let mut binding = None;
    for k in 0..budget.max(1) {
        let theta = 1.0 - 0.5f64.powi(k as i32 + 1);
        let eps = 0.5f64.powi(k as i32);
        let mut m = BTreeMap::new();
        let mut eta = BTreeMap::new();
        for (p, lm) in &model.modes {
            if let Some((mp, bound)) = stable_base.get(p) {
                m.insert(p.clone(), mp.clone());
                eta.insert(p.clone(), bound * theta);
            } else {
                let e = 2.0 * abscissa[p].max(0.0) + eps;
                let n = lm.state_dim();
                let shifted = &lm.a - DMatrix::<f64>::identity(n, n) * (e / 2.0);
                m.insert(p.clone(), lyap(p, &shifted)?);
                eta.insert(p.clone(), e);
            }
        }
        let mut level: BTreeMap<Mode, f64> = BTreeMap::new();
        for (p, lm) in &model.modes {
            let mp = &m[p];
            let nb = lm.a.transpose() * mp + mp * &lm.a - mp * eta[p];
            let l = schur_level(&symmetrize(&nb), &(mp * &lm.b)).ok_or_else(|| infeasible(p, "flow block is not negative definite", eta[p], 0.0))?;
            level.insert(p.clone(), l);
        }
        let mut mu: BTreeMap<Mode, f64> = model.modes.keys().map(|p| (p.clone(), 1.0)).collect();
        let mut succ: BTreeMap<&Mode, Vec<&Mode>> = BTreeMap::new();
        for (p, q) in q_set {
            succ.entry(q).or_default().push(p);
        }
        for (q, ps) in &succ {
            let lq = &model.modes[*q];
            let direct = lq.h.iter().all(|v| *v == 0.0);
            let mut g = 0.0f64;
            for p in ps {
                let x = symmetrize(&(lq.j.transpose() * &m[*p] * &lq.j));
                g = g.max(max_generalized_eigenvalue(&x, &m[*q]).ok_or(LmiError::NumericalFailure { mode: (*q).clone(), condition: f64::INFINITY })?);
            }
            let g = g.max(1e-12);
            let mu_q = if direct { g } else { g * (1.0 + eps) };
            mu.insert((*q).clone(), mu_q);
            for p in ps {
                let mp = &m[*p];
                let jt = lq.j.transpose();
                let nj = symmetrize(&(&jt * mp * &lq.j - &m[*q] * mu_q));
                let y = &jt * mp * &lq.h;
                let base = max_eigenvalue(&symmetrize(&(lq.h.transpose() * mp * &lq.h)));
                let l = if direct { 0.0 } else { base + schur_level(&nj, &y).ok_or_else(|| infeasible(q, "jump block is not negative definite", mu_q, g))? };
                let e = level.get_mut(*q).expect("mode present");
                *e = e.max(l);
            }
        }
        let q: BTreeMap<Mode, DMatrix<f64>> = model
            .modes
            .iter()
            .map(|(p, lm)| {
                let s = (level[p] * (1.0 + 1e-9)).max(1e-9);
                (p.clone(), DMatrix::identity(lm.input_dim(), lm.input_dim()) * s)
            })
            .collect();
        let qc = QuadraticCertificate { m, q, eta, mu };
        let verdict = verify(model, &qc, partition, dwell, q_set)?;
        if verdict.passed() {
            return Ok(qc);
        }
        binding = Some(match verdict.rates.iter().max_by(|a, b| a.margin.total_cmp(&b.margin)) {
            Some(r) => Infeasible { mode: r.mode.clone(), constraint: format!("{} condition", r.kind), lhs: r.lhs, rhs: r.rhs },
            None => {
                let (name, c) = verdict
                    .flow
                    .iter()
                    .chain(verdict.jump.iter())
                    .filter(|(_, c)| !c.ok)
                    .max_by(|a, b| a.1.max_eig.total_cmp(&b.1.max_eig))
                    .expect("a failing check");
                Infeasible { mode: name.clone(), constraint: "matrix inequality".into(), lhs: c.max_eig, rhs: PSD_TOL }
            }
        });
    }
    Err(LmiError::Infeasible(binding.expect("at least one attempt")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(s: &str) -> Mode {
        Mode::from(s)
    }

    fn one(a: f64, b: f64, j: f64, h: f64) -> LinearSystemModel {
        LinearSystemModel::new([(m("p"), LinearMode::scalar(a, b, j, h))].into_iter().collect()).unwrap()
    }

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn qc1(mv: f64, qv: f64, eta: f64, mu: f64) -> QuadraticCertificate {
        QuadraticCertificate {
            m: [(m("p"), s(mv))].into_iter().collect(),
            q: [(m("p"), s(qv))].into_iter().collect(),
            eta: [(m("p"), eta)].into_iter().collect(),
            mu: [(m("p"), mu)].into_iter().collect(),
        }
    }

    fn stable_p() -> Partition {
        Partition { stable: [m("p")].into_iter().collect(), ..Default::default() }
    }

    #[test]
    fn flow_examples() {
        let sys = one(-1.0, 1.0, 0.0, 0.0);
        let c = check_flow_lmi(&sys, &qc1(1.0, 1.0, -1.0, 1.0), &m("p")).unwrap();
        assert!(c.ok && c.max_eig.abs() < 1e-14);
        let c = check_flow_lmi(&sys, &qc1(1.0, 1.0, -2.0, 1.0), &m("p")).unwrap();
        assert!(!c.ok && (c.max_eig - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-12);
        let sys = one(-1.0, 0.0, 0.0, 0.0);
        assert!(check_flow_lmi(&sys, &qc1(1.0, 3.0, -2.0, 1.0), &m("p")).unwrap().ok);
    }

    #[test]
    fn jump_examples() {
        let pair = (m("p"), m("p"));
        let c = check_jump_lmi(&one(-1.0, 1.0, 0.5, 0.0), &qc1(1.0, 1.0, -1.0, 0.25), &pair).unwrap();
        assert!(c.ok && c.max_eig.abs() < 1e-15);
        let c = check_jump_lmi(&one(-1.0, 1.0, 1.0, 0.0), &qc1(1.0, 1.0, -1.0, 0.5), &pair).unwrap();
        assert!(!c.ok && (c.max_eig - 0.5).abs() < 1e-15);
        let c = check_jump_lmi(&one(-1.0, 1.0, 1.0, 0.0), &qc1(2.0, 1.0, -1.0, 1.0), &pair).unwrap();
        assert!(c.ok);
    }

    #[test]
    fn asymmetric_input_rejected() {
        let sys = LinearSystemModel::new(
            [(m("p"), LinearMode::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 1), DMatrix::identity(2, 2), DMatrix::zeros(2, 1)).unwrap())]
                .into_iter()
                .collect(),
        )
        .unwrap();
        let mut qc = qc1(1.0, 1.0, 0.0, 1.0);
        qc.m.insert(m("p"), DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]));
        assert!(matches!(check_flow_lmi(&sys, &qc, &m("p")), Err(LmiError::Asymmetric { .. })));
    }

    fn two_mode_qc(eta_q: f64, eta_p: f64, mu_q: f64) -> QuadraticCertificate {
        let mut c = qc1(1.0, 1.0, eta_q, mu_q);
        c.m.insert(m("r"), s(1.0));
        c.q.insert(m("r"), s(1.0));
        c.eta.insert(m("r"), eta_p);
        c.mu.insert(m("r"), 1.0);
        c
    }

    #[test]
    fn rate_condition_examples() {
        let q_set: ModeChangeSet = [(m("r"), m("p"))].into_iter().collect();
        let dwell = |tau: f64, delta: f64| DwellSpec { tau: [(m("p"), tau)].into_iter().collect(), delta, t_s: 0.0, t_u: 0.0 };
        let part = Partition { stable: [m("p"), m("r")].into_iter().collect(), ..Default::default() };
        assert!(check_rate_conditions(&two_mode_qc(-2.0, -2.0, 2.0), &part, &dwell(0.5, 0.2), &q_set).unwrap().is_empty());
        assert!(check_rate_conditions(&two_mode_qc(-2.0, -0.1, 1.0), &part, &dwell(0.0, 0.2), &q_set).unwrap().is_empty());
        let part = Partition { unstable: [m("p"), m("r")].into_iter().collect(), ..Default::default() };
        assert!(check_rate_conditions(&two_mode_qc(1.0, 1.0, 0.2), &part, &dwell(1.0, 0.3), &q_set).unwrap().is_empty());
        let bad = check_rate_conditions(&two_mode_qc(1.0, 1.0, 0.5), &part, &dwell(1.0, 0.3), &q_set).unwrap();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].mode, "p->r");
        let bad = check_rate_conditions(&two_mode_qc(-1.0, 1.0, 0.2), &part, &dwell(1.0, 0.3), &q_set).unwrap();
        assert_eq!(bad[0].kind, ViolationKind::Flow);
    }

    #[test]
    fn synthesize_scalar_example() {
        let sys = one(-1.0, 1.0, 0.5, 0.0);
        let q_set: ModeChangeSet = [(m("p"), m("p"))].into_iter().collect();
        let dwell = DwellSpec { tau: [(m("p"), 0.5)].into_iter().collect(), delta: 0.2, t_s: 0.0, t_u: 0.0 };
        let qc = synthesize(&sys, &stable_p(), &q_set, &dwell, 16).unwrap();
        assert!(check_flow_lmi(&sys, &qc, &m("p")).unwrap().ok);
        assert!(check_jump_lmi(&sys, &qc, &(m("p"), m("p"))).unwrap().ok);
        assert!((qc.mu[&m("p")] - 0.25).abs() < 1e-12);
        assert!(qc.eta[&m("p")] < 0.0);
    }

    #[test]
    fn synthesize_rejects_marginal_stable_mode() {
        let sys = one(0.0, 1.0, 0.5, 0.0);
        let q_set: ModeChangeSet = [(m("p"), m("p"))].into_iter().collect();
        let dwell = DwellSpec { tau: BTreeMap::new(), delta: 0.2, t_s: 0.0, t_u: 0.0 };
        assert!(matches!(synthesize(&sys, &stable_p(), &q_set, &dwell, 4), Err(LmiError::Infeasible(_))));
    }

    #[test]
    fn identity_jump_gives_unit_gain() {
        let sys = one(-1.0, 1.0, 1.0, 0.0);
        let q_set: ModeChangeSet = [(m("p"), m("p"))].into_iter().collect();
        let dwell = DwellSpec { tau: [(m("p"), 0.0)].into_iter().collect(), delta: 0.2, t_s: 0.0, t_u: 0.0 };
        let qc = synthesize(&sys, &stable_p(), &q_set, &dwell, 4).unwrap();
        assert!((qc.mu[&m("p")] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synthesize_mixed_pair() {
        let modes = [(m("s"), LinearMode::scalar(-3.0, 1.0, 1.2, 0.1)), (m("u"), LinearMode::scalar(0.5, 1.0, 0.2, 0.1))];
        let sys = LinearSystemModel::new(modes.into_iter().collect()).unwrap();
        let part = Partition { stable: [m("s")].into_iter().collect(), unstable: [m("u")].into_iter().collect() };
        let q_set: ModeChangeSet = [(m("u"), m("s")), (m("s"), m("u"))].into_iter().collect();
        let dwell = DwellSpec { tau: [(m("s"), 0.5), (m("u"), 0.2)].into_iter().collect(), delta: 0.2, t_s: 1.0, t_u: 1.0 };
        let qc = synthesize(&sys, &part, &q_set, &dwell, 24).unwrap();
        let v = verify(&sys, &qc, &part, &dwell, &q_set).unwrap();
        assert!(v.passed(), "{v:?}");
    }

    #[test]
    fn json_round_trip_and_verdict_shape() {
        let qc = qc1(1.0, 1.0, -1.0, 0.25);
        let js = serde_json::to_string(&qc).unwrap();
        assert_eq!(serde_json::from_str::<QuadraticCertificate>(&js).unwrap(), qc);
        let sys = one(-1.0, 1.0, 0.5, 0.0);
        let q_set: ModeChangeSet = [(m("p"), m("p"))].into_iter().collect();
        let dwell = DwellSpec { tau: [(m("p"), 0.5)].into_iter().collect(), delta: 0.2, t_s: 0.0, t_u: 0.0 };
        let v = serde_json::to_value(verify(&sys, &qc, &stable_p(), &dwell, &q_set).unwrap()).unwrap();
        assert_eq!(v["flow"]["p"]["ok"], true);
        assert_eq!(v["jump"]["p->p"]["ok"], true);
        assert!(v["rates"].as_array().unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn verdicts_invariant_under_scaling(a in -3.0f64..0.5, b in -2.0f64..2.0, mv in 0.1f64..4.0, qv in 0.1f64..4.0, eta in -3.0f64..3.0, c in 0.01f64..100.0) {
            let sys = one(a, b, 0.7, 0.3);
            let qc = qc1(mv, qv, eta, 0.8);
            let f1 = check_flow_lmi(&sys, &qc, &m("p")).unwrap();
            let f2 = check_flow_lmi(&sys, &qc.scaled(c), &m("p")).unwrap();
            prop_assume!(f1.max_eig.abs() > 1e-6);
            prop_assert_eq!(f1.ok, f2.ok);
            let pair = (m("p"), m("p"));
            let j1 = check_jump_lmi(&sys, &qc, &pair).unwrap();
            let j2 = check_jump_lmi(&sys, &qc.scaled(c), &pair).unwrap();
            prop_assume!(j1.max_eig.abs() > 1e-6);
            prop_assert_eq!(j1.ok, j2.ok);
        }
    }
}
