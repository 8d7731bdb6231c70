use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use isscert::certify::{Certificate, CertificateForm, CheckOptions, DwellSpec, Envelopes, LyapunovFn, Partition};
use isscert::construct::Endpoints;
use isscert::linalg::from_rows;
use isscert::lmi::QuadraticCertificate;
use isscert::simulate::{ModeDynamics, VectorField};
use isscert::{ComparisonFunction, InputSignal, LinearMode, LinearSystemModel, Mode, ModeChangeSet, RateFunction, SwitchingSignal, SystemModel};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub signal: SwitchingSignal,
    #[serde(default)]
    pub input: InputConfig,
    pub x0: Vec<f64>,
    #[serde(default = "default_step")]
    pub step: f64,
    pub certificate: Option<CertificateConfig>,
    pub dwell: Option<DwellConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub construct: ConstructConfig,
    #[serde(default)]
    pub bound: BoundConfig,
    pub lmi: Option<LmiConfig>,
    #[serde(default)]
    pub seed: u64,
}

fn default_step() -> f64 {
    1e-3
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemConfig {
    /// `ẋ = Ax + Bu`, `x⁺ = Jx + Hu` with row-major matrices.
    Linear { modes: BTreeMap<Mode, LinearConfig> },
    /// Scalar `ẋ = Σ c_k x^k + b u`, `x⁺ = Σ j_k x^k + h u`.
    Polynomial { modes: BTreeMap<Mode, PolynomialConfig> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearConfig {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "J")]
    pub j: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialConfig {
    pub flow: Vec<f64>,
    #[serde(default)]
    pub input_gain: f64,
    #[serde(default = "identity_jump")]
    pub jump: Vec<f64>,
    #[serde(default)]
    pub jump_input_gain: f64,
}

fn identity_jump() -> Vec<f64> {
    vec![0.0, 1.0]
}

#[derive(Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InputConfig {
    #[default]
    Zero,
    Constant { value: Vec<f64> },
    Sinusoid { amplitude: Vec<f64>, frequency: f64, #[serde(default)] phase: f64 },
    Step { before: Vec<f64>, after: Vec<f64>, at: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LyapunovConfig {
    Quadratic {
        #[serde(rename = "M")]
        m: Vec<Vec<f64>>,
    },
    Power { c: f64, k: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormConfig {
    Implication,
    Dissipation,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    pub form: FormConfig,
    pub v: BTreeMap<Mode, LyapunovConfig>,
    pub alpha1: ComparisonFunction,
    pub alpha2: ComparisonFunction,
    pub alpha3: ComparisonFunction,
    pub chi: ComparisonFunction,
    pub phi: BTreeMap<Mode, RateFunction>,
    pub psi: BTreeMap<Mode, RateFunction>,
    pub stable: BTreeSet<Mode>,
    pub unstable: BTreeSet<Mode>,
    pub envelopes: Option<EnvelopesConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopesConfig {
    pub lower: RateFunction,
    pub upper: RateFunction,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DwellConfig {
    pub tau: BTreeMap<Mode, f64>,
    pub delta: f64,
    #[serde(default)]
    pub t_s: f64,
    #[serde(default)]
    pub t_u: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_dini")]
    pub dini_c: f64,
    #[serde(default = "default_rel")]
    pub rel_tol: f64,
}

fn default_dini() -> f64 {
    10.0
}
fn default_rel() -> f64 {
    1e-9
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { dini_c: default_dini(), rel_tol: default_rel() }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructConfig {
    #[serde(default)]
    pub endpoints: EndpointsConfig,
}

#[derive(Debug, Default, Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
pub enum EndpointsConfig {
    #[default]
    Asymmetric,
    Closed,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_radius")]
    pub x0_radius: f64,
    #[serde(default = "default_input_bound")]
    pub input_bound: f64,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "default_s_max")]
    pub s_max: f64,
    #[serde(default = "default_s_points")]
    pub s_points: usize,
    pub short_horizon: Option<ShortHorizonConfig>,
}

fn default_runs() -> usize {
    20
}
fn default_radius() -> f64 {
    1.0
}
fn default_input_bound() -> f64 {
    1.0
}
fn default_radii() -> Vec<f64> {
    vec![0.1, 1.0, 10.0]
}
fn default_s_max() -> f64 {
    10.0
}
fn default_s_points() -> usize {
    101
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            runs: default_runs(),
            x0_radius: default_radius(),
            input_bound: default_input_bound(),
            radii: default_radii(),
            s_max: default_s_max(),
            s_points: default_s_points(),
            short_horizon: None,
        }
    }
}

/// Reachability sampling that raises `β` on `[0, C/δ]`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShortHorizonConfig {
    pub radii: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    16
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModePair {
    pub from: Mode,
    pub to: Mode,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmiConfig {
    pub stable: BTreeSet<Mode>,
    pub unstable: BTreeSet<Mode>,
    /// Admissible switches; every ordered pair of modes when absent.
    pub q_set: Option<Vec<ModePair>>,
    pub certificate: Option<QuadraticCertificate>,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_budget() -> usize {
    32
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        ConfigError(format!("field `{}`: {}", e.path(), e.inner()))
    })?;
    cfg.check()?;
    Ok(cfg)
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

impl RunConfig {
    fn check(&self) -> Result<(), ConfigError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return err(format!("field `step`: must be positive, got {}", self.step));
        }
        if !(self.tolerances.dini_c > 0.0 && self.tolerances.rel_tol > 0.0) {
            return err("field `tolerances`: tolerances must be positive");
        }
        let modes = self.system_modes();
        for p in self.signal.mode_set() {
            if !modes.contains(&p) {
                return err(format!("field `signal.modes`: mode {p} is not defined in `system`"));
            }
        }
        if let Some(c) = &self.certificate {
            for p in &modes {
                if !c.v.contains_key(p) || !c.phi.contains_key(p) || !c.psi.contains_key(p) {
                    return err(format!("field `certificate`: mode {p} lacks v, phi or psi"));
                }
            }
        }
        if let Some(l) = &self.lmi {
            if let Some(pairs) = &l.q_set {
                for pr in pairs {
                    if !modes.contains(&pr.from) || !modes.contains(&pr.to) {
                        return err(format!("field `lmi.q_set`: pair {}->{} names an unknown mode", pr.from, pr.to));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn system_modes(&self) -> BTreeSet<Mode> {
        match &self.system {
            SystemConfig::Linear { modes } => modes.keys().cloned().collect(),
            SystemConfig::Polynomial { modes } => modes.keys().cloned().collect(),
        }
    }

    pub fn linear_model(&self) -> Result<Option<LinearSystemModel>, ConfigError> {
        let SystemConfig::Linear { modes } = &self.system else { return Ok(None) };
        let mut out = BTreeMap::new();
        for (p, c) in modes {
            let m = |name: &str, rows: &[Vec<f64>]| from_rows(rows).map_err(|e| ConfigError(format!("field `system.modes.{p}.{name}`: {e}")));
            let lm = LinearMode::new(m("A", &c.a)?, m("B", &c.b)?, m("J", &c.j)?, m("H", &c.h)?)
                .map_err(|e| ConfigError(format!("field `system.modes.{p}`: {e}")))?;
            out.insert(p.clone(), lm);
        }
        LinearSystemModel::new(out).map(Some).map_err(|e| ConfigError(format!("field `system`: {e}")))
    }

    pub fn model(&self) -> Result<SystemModel, ConfigError> {
        if let Some(l) = self.linear_model()? {
            let m = l.to_model();
            if m.state_dim != self.x0.len() {
                return err(format!("field `x0`: expected {} entries, got {}", m.state_dim, self.x0.len()));
            }
            return Ok(m);
        }
        let SystemConfig::Polynomial { modes } = &self.system else { unreachable!() };
        if self.x0.len() != 1 {
            return err("field `x0`: polynomial systems are scalar");
        }
        let modes = modes
            .iter()
            .map(|(p, c)| {
                let (f, b) = (c.flow.clone(), c.input_gain);
                let (j, h) = (c.jump.clone(), c.jump_input_gain);
                let flow: VectorField = Arc::new(move |_t, x: &[f64], u: &[f64]| vec![poly(&f, x[0]) + b * u[0]]);
                let jump: VectorField = Arc::new(move |_t, x: &[f64], u: &[f64]| vec![poly(&j, x[0]) + h * u[0]]);
                (p.clone(), ModeDynamics { flow, jump })
            })
            .collect();
        Ok(SystemModel { state_dim: 1, input_dim: 1, modes })
    }

    pub fn input(&self, dim: usize) -> Result<InputSignal, ConfigError> {
        let check = |v: &Vec<f64>| if v.len() == dim { Ok(()) } else { err(format!("field `input`: expected {dim} entries, got {}", v.len())) };
        Ok(match &self.input {
            InputConfig::Zero => InputSignal::zero(dim),
            InputConfig::Constant { value } => {
                check(value)?;
                InputSignal::constant(value.clone())
            }
            InputConfig::Sinusoid { amplitude, frequency, phase } => {
                check(amplitude)?;
                InputSignal::sinusoid(amplitude.clone(), *frequency, *phase)
            }
            InputConfig::Step { before, after, at } => {
                check(before)?;
                check(after)?;
                InputSignal::step(before.clone(), after.clone(), *at)
            }
        })
    }

    pub fn dwell(&self) -> Result<DwellSpec, ConfigError> {
        let Some(d) = &self.dwell else { return err("field `dwell`: required by this command") };
        Ok(DwellSpec { tau: d.tau.clone(), delta: d.delta, t_s: d.t_s, t_u: d.t_u })
    }

    pub fn certificate(&self) -> Result<Certificate, ConfigError> {
        let Some(c) = &self.certificate else { return err("field `certificate`: required by this command") };
        let n = self.x0.len();
        let mut v = BTreeMap::new();
        for (p, l) in &c.v {
            let f = match l {
                LyapunovConfig::Quadratic { m } => {
                    let m = from_rows(m).map_err(|e| ConfigError(format!("field `certificate.v.{p}.M`: {e}")))?;
                    if m.shape() != (n, n) {
                        return err(format!("field `certificate.v.{p}.M`: expected {n}x{n}"));
                    }
                    LyapunovFn::Quadratic(m)
                }
                LyapunovConfig::Power { c, k } => LyapunovFn::Power { c: *c, k: *k },
            };
            v.insert(p.clone(), f);
        }
        Ok(Certificate {
            form: match c.form {
                FormConfig::Implication => CertificateForm::Implication,
                FormConfig::Dissipation => CertificateForm::Dissipation,
            },
            v,
            alpha1: c.alpha1.clone(),
            alpha2: c.alpha2.clone(),
            alpha3: c.alpha3.clone(),
            chi: c.chi.clone(),
            phi: c.phi.clone(),
            psi: c.psi.clone(),
            partition: Partition { stable: c.stable.clone(), unstable: c.unstable.clone() },
            dwell: self.dwell()?,
            envelopes: c.envelopes.as_ref().map(|e| Envelopes { lower: e.lower.clone(), upper: e.upper.clone() }),
        })
    }

    pub fn check_options(&self) -> CheckOptions {
        CheckOptions { dini_c: self.tolerances.dini_c, rel_tol: self.tolerances.rel_tol }
    }

    pub fn endpoints(&self) -> Endpoints {
        match self.construct.endpoints {
            EndpointsConfig::Asymmetric => Endpoints::Asymmetric,
            EndpointsConfig::Closed => Endpoints::Closed,
        }
    }

    /// Pairs `(to, from)` in the order used by [`ModeChangeSet`].
    pub fn q_set(&self) -> ModeChangeSet {
        let modes = self.system_modes();
        match self.lmi.as_ref().and_then(|l| l.q_set.as_ref()) {
            Some(pairs) => pairs.iter().map(|pr| (pr.to.clone(), pr.from.clone())).collect(),
            None => modes.iter().flat_map(|p| modes.iter().map(move |q| (p.clone(), q.clone()))).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "system": {"kind": "polynomial", "modes": {"p": {"flow": [0, -1], "input_gain": 1}}},
        "signal": {"t0": 0, "instants": [], "modes": ["p"], "horizon": 1},
        "x0": [1.0]
    }"#;

    #[test]
    fn minimal_config_parses() {
        let c = parse(BASE).unwrap();
        assert_eq!(c.step, 1e-3);
        let m = c.model().unwrap();
        let f = &m.modes[&Mode::from("p")];
        assert_eq!((f.flow)(0.0, &[2.0], &[0.5]), vec![-1.5]);
        assert_eq!((f.jump)(0.0, &[2.0], &[0.5]), vec![2.0]);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = BASE.replace("\"x0\": [1.0]", "\"x0\": [1.0], \"step\": \"fast\"");
        let e = parse(&bad).unwrap_err().0;
        assert!(e.contains("`step`"), "{e}");
        let bad = BASE.replace("\"flow\"", "\"flo\"");
        let e = parse(&bad).unwrap_err().0;
        assert!(e.contains("`system`") && e.contains("`flo`"), "{e}");
        let bad = BASE.replace("[\"p\"]", "[\"q\"]");
        assert!(parse(&bad).is_err());
    }

    #[test]
    fn default_q_set_is_all_pairs() {
        let c = parse(&BASE.replace("{\"p\": {\"flow\": [0, -1], \"input_gain\": 1}}", "{\"p\": {\"flow\": [0]}, \"r\": {\"flow\": [0]}}")).unwrap();
        assert_eq!(c.q_set().len(), 4);
    }
}
