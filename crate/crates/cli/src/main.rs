//! `isscert`: simulate impulsive switched systems and check ISS certificates
//! against the trajectories.
//!
//! Exit codes: 0 ok, 1 config or I/O error, 2 non-finite state, 3 violations,
//! 4 structural precondition failure, 5 heuristic search found nothing.

mod config;
mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isscert::bounds::{build_bound, certify_iss, iss_margin, reach_envelope, BoundCase, BoundError};
use isscert::certify::{
    check_dwell_conditions, check_dwell_slacks, check_trajectory, default_a_grid, dissipation_to_implication, Certificate,
    CertificateForm, ViolationReport,
};
use isscert::construct::{build_decreasing, certify_decrease, ConstructError};
use isscert::lmi::{synthesize, verify, LmiError};
use isscert::simulate::{simulate, EstimateOptions, SimError};
use isscert::{InputSignal, SystemModel, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "isscert", version, about = "ISS certificates for impulsive switched systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the system and write trajectory.csv
    Simulate(Args),
    /// Check a certificate along the simulated trajectory and the dwell conditions
    Certify(Args),
    /// Build the decreasing certificate W and check it along the trajectory
    Construct(Args),
    /// Assemble the ISS bound and test it on seeded random runs
    Bound(Args),
    /// Verify or search for quadratic certificates of a linear system
    Lmi(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the seed in the config
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    verbose: bool,
}

enum Fail {
    Config(String),
    NonFinite(String),
    Structural(String),
}

impl From<config::ConfigError> for Fail {
    fn from(e: config::ConfigError) -> Self {
        Fail::Config(e.0)
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::Config(format!("i/o: {e}"))
    }
}

type Run = Result<u8, Fail>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, f): (&Args, fn(&RunConfig, &Args) -> Run) = match &cli.command {
        Command::Simulate(a) => (a, cmd_simulate),
        Command::Certify(a) => (a, cmd_certify),
        Command::Construct(a) => (a, cmd_construct),
        Command::Bound(a) => (a, cmd_bound),
        Command::Lmi(a) => (a, cmd_lmi),
    };
    let outcome = config::load(&args.config).map_err(Fail::from).and_then(|mut cfg| {
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        std::fs::create_dir_all(&args.out)?;
        f(&cfg, args)
    });
    ExitCode::from(match outcome {
        Ok(code) => code,
        Err(Fail::Config(m)) => {
            eprintln!("config error: {m}");
            1
        }
        Err(Fail::NonFinite(m)) => {
            eprintln!("simulation diverged: {m}");
            2
        }
        Err(Fail::Structural(m)) => {
            eprintln!("precondition failed: {m}");
            4
        }
    })
}

fn run_sim(cfg: &RunConfig, model: &SystemModel, input: &InputSignal, x0: &[f64], partial: Option<&Path>) -> Result<Trajectory, Fail> {
    match simulate(model, &cfg.signal, input, x0, cfg.step) {
        Ok(t) => Ok(t),
        Err(SimError::NonFinite { t, norm, partial: p }) => {
            if let Some(path) = partial {
                output::trajectory_csv(path, &p)?;
            }
            Err(Fail::NonFinite(format!("norm {norm:e} at t = {t}")))
        }
        Err(e) => Err(Fail::Config(e.to_string())),
    }
}

fn verdict(reports: &[ViolationReport]) -> u8 {
    if reports.is_empty() {
        0
    } else {
        3
    }
}

fn note(args: &Args, msg: impl AsRef<str>) {
    if args.verbose {
        eprintln!("{}", msg.as_ref());
    }
}

fn cmd_simulate(cfg: &RunConfig, args: &Args) -> Run {
    let model = cfg.model()?;
    let input = cfg.input(model.input_dim)?;
    let path = args.out.join("trajectory.csv");
    let traj = run_sim(cfg, &model, &input, &cfg.x0, Some(&path))?;
    output::trajectory_csv(&path, &traj)?;
    note(args, format!("wrote {}", path.display()));
    Ok(0)
}

fn validated(cfg: &RunConfig) -> Result<Certificate, Fail> {
    let cert = cfg.certificate()?;
    cert.validate().map_err(|e| Fail::Structural(e.to_string()))?;
    Ok(cert)
}

fn count_by_kind(reports: &[ViolationReport]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for r in reports {
        *m.entry(r.kind.to_string()).or_insert(0) += 1;
    }
    m
}

fn cmd_certify(cfg: &RunConfig, args: &Args) -> Run {
    let cert = validated(cfg)?;
    let model = cfg.model()?;
    let input = cfg.input(model.input_dim)?;
    let traj = run_sim(cfg, &model, &input, &cfg.x0, None)?;
    let mut reports = check_trajectory(&cert, &traj, &input, &cfg.check_options());
    let dwell = check_dwell_conditions(&cert, &cfg.signal, &default_a_grid()).map_err(|e| Fail::Structural(e.to_string()))?;
    reports.extend(dwell.violations.iter().cloned());
    reports.extend(check_dwell_slacks(&cert, &cfg.signal));
    output::report_csv(&args.out.join("report.csv"), &reports)?;
    let closed: Vec<_> = dwell
        .closed_form
        .iter()
        .map(|c| json!({"time": c.time, "pair": c.pair, "lhs": c.lhs, "rhs": c.rhs, "holds": c.holds}))
        .collect();
    let summary = json!({
        "violations": reports.len(),
        "by_kind": count_by_kind(&reports),
        "mdadt_slack": cfg.signal.mdadt_slack(&cert.partition.stable, &cert.dwell.tau),
        "mdalt_slack": cfg.signal.mdalt_slack(&cert.partition.unstable, &cert.dwell.tau),
        "t_s": cert.dwell.t_s,
        "t_u": cert.dwell.t_u,
        "dwell_inconclusive": dwell.inconclusive.len(),
        "closed_form": closed,
    });
    output::json(&args.out.join("summary.json"), &summary)?;
    note(args, format!("{} violation(s)", reports.len()));
    Ok(verdict(&reports))
}

fn cmd_construct(cfg: &RunConfig, args: &Args) -> Run {
    let cert = validated(cfg)?;
    let report = args.out.join("report.csv");
    let dec = match build_decreasing(&cert, &cfg.signal, &default_a_grid(), cfg.endpoints()) {
        Ok(d) => d,
        Err(ConstructError::DwellViolated(v)) | Err(ConstructError::SlackExceeded(v)) => {
            output::report_csv(&report, &v)?;
            eprintln!("signal or certificate fails the dwell requirements ({} report(s))", v.len());
            return Ok(3);
        }
        Err(ConstructError::ImageNotFull) => {
            let upper = cert.derived_envelopes().map(|e| e.upper);
            return Err(Fail::Structural(format!(
                "upper envelope rate {} does not map onto the real line",
                serde_json::to_string(&upper).unwrap_or_default()
            )));
        }
        Err(e) => return Err(Fail::Structural(e.to_string())),
    };
    let model = cfg.model()?;
    let input = cfg.input(model.input_dim)?;
    let traj = run_sim(cfg, &model, &input, &cfg.x0, None)?;
    let table = dec.table(&traj).map_err(|e| Fail::Structural(e.to_string()))?;
    let rows: Vec<Vec<f64>> = table.iter().map(|&(t, v, w, h)| vec![t, v, w, h]).collect();
    output::table_csv(&args.out.join("construct.csv"), &["t", "V", "W", "h"], &rows)?;
    let reports = certify_decrease(&dec, &traj, &input, &cfg.check_options()).map_err(|e| Fail::Structural(e.to_string()))?;
    output::report_csv(&report, &reports)?;
    note(args, format!("{} violation(s), h ≥ {}", reports.len(), dec.correction.lower_bound()));
    Ok(verdict(&reports))
}

fn ball<R: Rng>(rng: &mut R, n: usize, radius: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-radius..=radius)).collect()
}

fn cmd_bound(cfg: &RunConfig, args: &Args) -> Run {
    let mut cert = validated(cfg)?;
    let converted = cert.form == CertificateForm::Dissipation;
    if converted {
        cert = dissipation_to_implication(&cert).map_err(|e| Fail::Structural(e.to_string()))?;
    }
    let structural = |e: BoundError| Fail::Structural(e.to_string());
    let mut bound = build_bound(&cert, None).map_err(structural)?;
    let dwell = check_dwell_conditions(&cert, &cfg.signal, &default_a_grid()).map_err(|e| Fail::Structural(e.to_string()))?;
    let mut unmet = dwell.violations;
    unmet.extend(check_dwell_slacks(&cert, &cfg.signal));
    if !unmet.is_empty() {
        output::report_csv(&args.out.join("report.csv"), &unmet)?;
        eprintln!("signal or certificate fails the dwell requirements ({} report(s))", unmet.len());
        return Ok(3);
    }
    let model = cfg.model()?;
    let bc = &cfg.bound;
    let opts = EstimateOptions { step: cfg.step, seed: cfg.seed };
    if let Some(sh) = &bc.short_horizon {
        let tau = bound.short_horizon_length();
        let env = match reach_envelope(&model, &cfg.signal, &sh.radii, bc.input_bound, tau, sh.samples, opts) {
            Ok(e) => e,
            Err(SimError::NonFinite { t, norm, .. }) => return Err(Fail::NonFinite(format!("norm {norm:e} at t = {t}"))),
            Err(e) => return Err(Fail::Config(e.to_string())),
        };
        bound = bound.with_short_horizon(env);
    }
    let mut rows = Vec::new();
    let ns = bc.s_points.max(2);
    for &r in &bc.radii {
        for k in 0..ns {
            let s = bc.s_max * k as f64 / (ns - 1) as f64;
            rows.push(vec![r, s, bound.beta(r, s)]);
        }
    }
    output::table_csv(&args.out.join("bound.csv"), &["r", "s", "beta"], &rows)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut reports = Vec::new();
    let mut max_margin = f64::NEG_INFINITY;
    for _ in 0..bc.runs {
        let x0 = ball(&mut rng, model.state_dim, bc.x0_radius);
        let u = InputSignal::random(&mut rng, model.input_dim, bc.input_bound, cfg.signal.t0(), cfg.signal.horizon());
        let traj = run_sim(cfg, &model, &u, &x0, None)?;
        reports.extend(certify_iss(&bound, &traj, &u));
        max_margin = max_margin.max(iss_margin(&bound, &traj, &u));
    }
    output::report_csv(&args.out.join("report.csv"), &reports)?;
    let case = match bound.case() {
        BoundCase::FiniteInfimum { m } => json!({"kind": "finite-m", "m": m}),
        BoundCase::Unbounded => json!({"kind": "infinite-m"}),
    };
    #[derive(Serialize)]
    struct Verdict {
        violations: usize,
        max_margin: Option<f64>,
        runs: usize,
        seed: u64,
        case: serde_json::Value,
        c: f64,
        delta: f64,
        gamma_at_input_bound: f64,
        converted_from_dissipation: bool,
        short_horizon_t0: Option<f64>,
    }
    let v = Verdict {
        violations: reports.len(),
        max_margin: max_margin.is_finite().then_some(max_margin),
        runs: bc.runs,
        seed: cfg.seed,
        case,
        c: bound.c(),
        delta: bound.delta(),
        gamma_at_input_bound: bound.gamma(bc.input_bound),
        converted_from_dissipation: converted,
        short_horizon_t0: bound.short_horizon().map(|e| e.t0),
    };
    output::json(&args.out.join("verdict.json"), &v)?;
    note(args, format!("{} violation(s) over {} run(s)", reports.len(), bc.runs));
    Ok(verdict(&reports))
}

fn cmd_lmi(cfg: &RunConfig, args: &Args) -> Run {
    let Some(model) = cfg.linear_model()? else {
        return Err(Fail::Config("field `system`: the lmi command needs a linear system".into()));
    };
    let Some(lc) = &cfg.lmi else { return Err(Fail::Config("field `lmi`: required by this command".into())) };
    let partition = isscert::certify::Partition { stable: lc.stable.clone(), unstable: lc.unstable.clone() };
    let dwell = cfg.dwell()?;
    let q_set = cfg.q_set();
    let path = args.out.join("lmi.json");
    let structural = |e: LmiError| Fail::Structural(e.to_string());
    match &lc.certificate {
        Some(qc) => {
            let v = verify(&model, qc, &partition, &dwell, &q_set).map_err(structural)?;
            output::json(&path, &json!({"mode": "verify", "verdict": v}))?;
            Ok(if v.passed() { 0 } else { 3 })
        }
        None => match synthesize(&model, &partition, &q_set, &dwell, lc.budget) {
            Ok(qc) => {
                let v = verify(&model, &qc, &partition, &dwell, &q_set).map_err(structural)?;
                output::json(&path, &json!({"mode": "synthesize", "certificate": qc, "verdict": v}))?;
                Ok(if v.passed() { 0 } else { 3 })
            }
            Err(LmiError::Infeasible(d)) => {
                output::json(&path, &json!({"mode": "synthesize", "infeasible": d}))?;
                eprintln!("no certificate found: {d}");
                Ok(5)
            }
            Err(e) => Err(structural(e)),
        },
    }
}
