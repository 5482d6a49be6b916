//! Ledger CSV, regret plots and run summaries.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use ewkit_core::RegretLedger;

use crate::runners::RunOutcome;

pub const CSV_HEADER: &str = "t,loss,cum_loss,comparator_cum_loss,regret,mix_gap,bound";

pub fn write_ledger_csv(ledger: &RegretLedger, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in ledger.rows() {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, r.loss, r.cum_loss, r.comparator_cum_loss, r.regret, r.mix_gap, r.bound
        )?;
    }
    Ok(())
}

pub fn ledger_csv(ledger: &RegretLedger) -> String {
    let mut buf = Vec::new();
    write_ledger_csv(ledger, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii csv")
}

/// Regret and bound against `t` as an SVG line plot.
pub fn regret_svg(ledger: &RegretLedger, title: &str) -> String {
    let (w, h, pad) = (640.0, 400.0, 48.0);
    let rows = ledger.rows();
    let finite = |x: f64| if x.is_finite() { Some(x) } else { None };
    let values = rows.iter().flat_map(|r| [finite(r.regret), finite(r.bound)]).flatten();
    let (lo, hi) = values.fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = rows.len().max(2) as f64;
    let x = |t: usize| pad + (w - 2.0 * pad) * (t as f64 - 1.0) / (n - 1.0);
    let y = |v: f64| h - pad - (h - 2.0 * pad) * (v - lo) / span;
    let line = |pick: &dyn Fn(&ewkit_core::ew::LedgerRow) -> f64| {
        let mut s = String::new();
        for r in rows.iter().filter(|r| pick(r).is_finite()) {
            let _ = write!(s, "{:.2},{:.2} ", x(r.t), y(pick(r)));
        }
        s
    };
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{pad}" y="24" font-family="sans-serif" font-size="14">{title}</text>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{pad}" y1="{y0:.2}" x2="{x1}" y2="{y0:.2}" stroke="gray"/>"#,
        y0 = y(0.0),
        x1 = w - pad
    );
    let _ = writeln!(svg, r#"<polyline fill="none" stroke="firebrick" stroke-width="1.5" points="{}"/>"#, line(&|r| r.bound));
    let _ = writeln!(svg, r#"<polyline fill="none" stroke="midnightblue" stroke-width="1.5" points="{}"/>"#, line(&|r| r.regret));
    let _ = writeln!(svg, r#"<text x="{pad}" y="{}" font-family="sans-serif" font-size="11">t = 1 .. {}   regret (dark), bound (red), range [{lo:.3e}, {hi:.3e}]</text>"#, h - 16.0, rows.len());
    svg.push_str("</svg>\n");
    svg
}

pub fn summary_text(outcome: &RunOutcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "replicate = {}", outcome.replicate);
    let _ = writeln!(s, "rounds = {}", outcome.ledger.len());
    let _ = writeln!(s, "final_regret = {:.16e}", outcome.final_regret());
    let _ = writeln!(s, "final_bound = {:.16e}", outcome.final_bound());
    let _ = writeln!(s, "anytime = {}", outcome.anytime);
    let _ = writeln!(s, "bound_violations = {}", outcome.row_violations().len());
    for (k, v) in &outcome.stats {
        let _ = writeln!(s, "{k} = {v:.16e}");
    }
    for c in &outcome.checks {
        let _ = writeln!(s, "check[{}] = {:.16e} <= {:.16e} ({:?})", c.name, c.value, c.bound, c.status());
    }
    s
}

pub fn write_replicate(dir: &Path, outcome: &RunOutcome, title: &str) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_ledger_csv(&outcome.ledger, io::BufWriter::new(fs::File::create(dir.join("ledger.csv"))?))?;
    fs::write(dir.join("regret.svg"), regret_svg(&outcome.ledger, title))?;
    fs::write(dir.join("summary.txt"), summary_text(outcome))?;
    Ok(())
}
