use std::fs;
use std::io;
use std::path::Path;

use isscert::certify::ViolationReport;
use isscert::Trajectory;
use serde::Serialize;

/// 17 significant digits, enough to round-trip an `f64`.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn writer(path: &Path) -> io::Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_writer(fs::File::create(path)?))
}

/// `t,mode,x1,...,xn,jump_flag`; a jump shows as a pre-jump row followed by a
/// post-jump row with `jump_flag = 1`.
pub fn trajectory_csv(path: &Path, traj: &Trajectory) -> io::Result<()> {
    let mut w = writer(path)?;
    let n = traj.initial_state().len();
    let mut header = vec!["t".to_string(), "mode".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.push("jump_flag".into());
    w.write_record(&header)?;
    for (k, seg) in traj.segments.iter().enumerate() {
        for (i, (t, x)) in seg.times.iter().zip(&seg.states).enumerate() {
            let mut row = vec![num(*t), seg.mode.to_string()];
            row.extend(x.iter().map(|v| num(*v)));
            row.push(if i == 0 && k > 0 { "1" } else { "0" }.into());
            w.write_record(&row)?;
        }
    }
    w.flush()
}

/// `kind,time,mode,lhs,rhs,margin`.
pub fn report_csv(path: &Path, reports: &[ViolationReport]) -> io::Result<()> {
    let mut w = writer(path)?;
    w.write_record(["kind", "time", "mode", "lhs", "rhs", "margin"])?;
    for r in reports {
        w.write_record([r.kind.to_string(), num(r.time), r.mode.clone(), num(r.lhs), num(r.rhs), num(r.margin)])?;
    }
    w.flush()
}

pub fn table_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| num(*v)))?;
    }
    w.flush()
}

pub fn json(path: &Path, value: &impl Serialize) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}
