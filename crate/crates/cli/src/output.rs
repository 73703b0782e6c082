//! CSV and text renderings. Floats use Rust's shortest round-trip
//! exponent form, so identical values always give identical bytes.

use std::fmt::Write as _;

use cssigma::diagnostics::DiagnosticsRecord;
use cssigma::dynamics::PicardReport;
use cssigma::estimates::{Condition, NullformVerdict, RatioReport, Verdict};

pub const DIAGNOSTICS_HEADER: &str =
    "t,energy,rel_energy_drift,max_rho,lorenz_res_L2,f1_res_L2,f2_res_L2,f3_res_L2,hs_phi,hs_A";

pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn diagnostics_row(r: &DiagnosticsRecord) -> String {
    r.values()
        .iter()
        .map(|&v| num(v))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn diagnostics_summary(r: &DiagnosticsRecord) -> String {
    let names = DIAGNOSTICS_HEADER.split(',');
    let mut out = String::new();
    for (name, v) in names.zip(r.values()) {
        let _ = writeln!(out, "{name:>18} = {}", num(v));
    }
    out
}

pub const PICARD_HEADER: &str = "iteration,phi_diff,a_diff,combined,ratio";

pub fn picard_csv(rep: &PicardReport) -> String {
    let mut out = format!("{PICARD_HEADER}\n");
    for m in 0..rep.phi_diffs.len() {
        let ratio = if m == 0 {
            String::new()
        } else {
            rep.ratios.get(m - 1).map_or(String::new(), |&r| num(r))
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            m + 1,
            num(rep.phi_diffs[m]),
            num(rep.a_diffs[m]),
            num(rep.combined(m)),
            ratio
        );
    }
    out
}

pub const VERDICT_HEADER: &str = "id,label,relation,lhs,rhs,margin,holds";

fn condition_row(c: &Condition) -> String {
    format!(
        "{},\"{}\",{:?},{},{},{},{}",
        c.id,
        c.label,
        c.relation,
        num(c.lhs),
        num(c.rhs),
        num(c.margin()),
        c.holds
    )
}

pub fn verdict_csv(v: &Verdict) -> String {
    let mut out = format!("{VERDICT_HEADER}\n");
    for c in &v.conditions {
        let _ = writeln!(out, "{}", condition_row(c));
    }
    out
}

pub fn nullform_csv(v: &NullformVerdict) -> String {
    let mut out = format!("{VERDICT_HEADER}\n{}\n", condition_row(&v.dimension));
    for c in &v.verdict.conditions {
        let _ = writeln!(out, "{}", condition_row(c));
    }
    out
}

pub const RATIO_HEADER: &str = "trial,lhs,rhs,ratio";

pub fn ratio_csv(r: &RatioReport) -> String {
    let mut out = format!("{RATIO_HEADER}\n");
    for (i, s) in r.samples.iter().enumerate() {
        let ratio = s.ratio().map_or_else(|| "degenerate".to_string(), num);
        let _ = writeln!(out, "{i},{},{},{ratio}", num(s.lhs), num(s.rhs));
    }
    out
}
