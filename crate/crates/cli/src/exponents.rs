//! The `exponents` document: schedule and bootstrap chain, in floating
//! point and, when every input is a terminating decimal or a fraction, in
//! exact rational arithmetic.

use gpsys_core::bootstrap::{
    bootstrap_chain, exponent_schedule, schedule_at, BootstrapChain, ExponentSchedule, COND_ALPHA, COND_HOLDER,
    COND_LAMBDA, COND_QBAR,
};
use num_rational::Rational64;
use serde::Serialize;

/// Inputs as typed by the user, e.g. `"3"`, `"3.3"` or `"26/33"`.
#[derive(Debug, Clone, Default)]
pub struct ExponentRequest {
    pub p: String,
    pub q: String,
    pub qbar: Option<String>,
    pub lambda: Option<String>,
    pub q_target: Option<String>,
    pub r_target: Option<String>,
}

/// Exact value of a decimal (`-1.25`), integer or fraction (`7/3`) literal.
/// Returns `None` for other forms or when the value does not fit in `i64`.
pub fn parse_exact(s: &str) -> Option<Rational64> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().ok()?;
        let d: i64 = d.trim().parse().ok()?;
        return (d != 0).then(|| Rational64::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 12 {
        return None;
    }
    let digits: i64 = format!("{int}{frac}").parse().ok()?;
    let den = 10i64.checked_pow(frac.len() as u32)?;
    let v = Rational64::new(digits, den);
    Some(if neg { -v } else { v })
}

fn parse_f64(name: &str, s: &str) -> Result<f64, String> {
    if let Some(r) = parse_exact(s) {
        return Ok(*r.numer() as f64 / *r.denom() as f64);
    }
    s.trim().parse::<f64>().map_err(|_| format!("{name}: cannot parse `{s}` as a number"))
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactSchedule {
    pub p: String,
    pub q: String,
    pub p1: String,
    pub qbar: String,
    pub lambda_q: String,
    pub lambda: String,
    pub theta: String,
    pub alpha: String,
    pub alpha_conj: String,
    pub holder_ratio: String,
}

impl From<&ExponentSchedule<Rational64>> for ExactSchedule {
    fn from(s: &ExponentSchedule<Rational64>) -> Self {
        Self {
            p: s.p.to_string(),
            q: s.q.to_string(),
            p1: s.p1.to_string(),
            qbar: s.qbar.to_string(),
            lambda_q: s.lambda_q.to_string(),
            lambda: s.lambda.to_string(),
            theta: s.theta.to_string(),
            alpha: s.alpha.to_string(),
            alpha_conj: s.alpha_conj.to_string(),
            holder_ratio: s.holder_ratio.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Condition {
    pub condition: &'static str,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainStage {
    pub q: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainDocument {
    pub m: i64,
    pub increment: f64,
    pub stages: Vec<ChainStage>,
    /// `R_0 / R_target`.
    pub radius_ratio: f64,
    /// `[q, R]` pairs as fractions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<Vec<[String; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_radius_ratio: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleDocument {
    /// Set when `lambda` was chosen by the feasibility search.
    pub lambda_searched: bool,
    pub schedule: ExponentSchedule<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactSchedule>,
    pub conditions: Vec<Condition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainDocument>,
}

fn chain_doc(f: &BootstrapChain<f64>, exact: Option<&BootstrapChain<Rational64>>) -> ChainDocument {
    let first = f.stages.first().map_or(1.0, |s| s.1);
    let last = f.stages.last().map_or(1.0, |s| s.1);
    ChainDocument {
        m: f.m,
        increment: f.increment,
        stages: f.stages.iter().map(|&(q, radius)| ChainStage { q, radius }).collect(),
        radius_ratio: first / last,
        exact: exact.map(|c| c.stages.iter().map(|(q, r)| [q.to_string(), r.to_string()]).collect()),
        exact_radius_ratio: exact.map(|c| (c.stages[0].1 / c.stages[c.stages.len() - 1].1).to_string()),
    }
}

/// Builds the schedule document. Errors are domain errors in the inputs.
pub fn schedule_document(req: &ExponentRequest) -> Result<ScheduleDocument, String> {
    let p = parse_f64("p", &req.p)?;
    let q = parse_f64("q", &req.q)?;
    let qbar = req.qbar.as_deref().map(|s| parse_f64("qbar", s)).transpose()?;
    let lambda = req.lambda.as_deref().map(|s| parse_f64("lambda", s)).transpose()?;

    let ep = parse_exact(&req.p);
    let eq = parse_exact(&req.q);
    let eqbar = req.qbar.as_deref().map(parse_exact);
    let elambda = req.lambda.as_deref().map(parse_exact);

    let exact = match (ep, eq, eqbar, elambda) {
        (Some(p), Some(q), None | Some(Some(_)), Some(Some(l))) => {
            Some(schedule_at(p, q, eqbar.flatten(), l).map_err(|e| e.to_string())?)
        }
        _ => None,
    };
    let schedule = match &exact {
        Some(s) => s.to_f64(),
        None => exponent_schedule(p, q, qbar, lambda).map_err(|e| e.to_string())?,
    };
    let conditions = vec![
        Condition { condition: COND_QBAR, holds: schedule.qbar > q && schedule.qbar < q + 1.0 / (p + 1.0) },
        Condition { condition: COND_LAMBDA, holds: schedule.lambda > 2.0 && schedule.lambda < schedule.lambda_q },
        Condition { condition: COND_ALPHA, holds: exact.as_ref().map_or(schedule.alpha_condition(), |s| s.alpha_condition()) },
        Condition {
            condition: COND_HOLDER,
            holds: exact.as_ref().map_or(schedule.holder_condition(), |s| s.holder_condition()),
        },
    ];

    let chain = match &req.q_target {
        None => None,
        Some(qt) => {
            let rt = req.r_target.as_deref().unwrap_or("1");
            let fq = parse_f64("q_target", qt)?;
            let fr = parse_f64("r_target", rt)?;
            let exact_chain = match (ep, parse_exact(qt), parse_exact(rt)) {
                (Some(p), Some(q), Some(r)) => Some(bootstrap_chain(p, q, r).map_err(|e| e.to_string())?),
                _ => None,
            };
            let float_chain = match &exact_chain {
                Some(c) => c.to_f64(),
                None => bootstrap_chain(p, fq, fr).map_err(|e| e.to_string())?,
            };
            Some(chain_doc(&float_chain, exact_chain.as_ref()))
        }
    };

    Ok(ScheduleDocument {
        lambda_searched: lambda.is_none(),
        schedule,
        exact: exact.as_ref().map(ExactSchedule::from),
        conditions,
        chain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimals_exactly() {
        assert_eq!(parse_exact("3.3"), Some(Rational64::new(33, 10)));
        assert_eq!(parse_exact("-0.25"), Some(Rational64::new(-1, 4)));
        assert_eq!(parse_exact("26/33"), Some(Rational64::new(26, 33)));
        assert_eq!(parse_exact("1e3"), None);
        assert_eq!(parse_exact("."), None);
    }

    #[test]
    fn exact_schedule_reference_values() {
        let req = ExponentRequest {
            p: "3".into(),
            q: "2".into(),
            qbar: Some("2.2".into()),
            lambda: Some("3.3".into()),
            q_target: Some("3".into()),
            r_target: Some("1".into()),
        };
        let doc = schedule_document(&req).unwrap();
        let exact = doc.exact.unwrap();
        assert_eq!(exact.theta, "26/33");
        assert_eq!(exact.alpha, "30/7");
        assert_eq!(exact.alpha_conj, "30/23");
        assert_eq!(exact.holder_ratio, "39/23");
        assert!(doc.conditions.iter().all(|c| c.holds));
        let chain = doc.chain.unwrap();
        assert_eq!(chain.m, 5);
        assert_eq!(chain.exact_radius_ratio.as_deref(), Some("1024"));
    }

    #[test]
    fn searched_lambda_has_no_exact_part() {
        let req = ExponentRequest { p: "3".into(), q: "2".into(), ..Default::default() };
        let doc = schedule_document(&req).unwrap();
        assert!(doc.lambda_searched && doc.exact.is_none());
        assert!((doc.schedule.lambda_q - 10.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn q_below_two_is_rejected() {
        let req = ExponentRequest { p: "3".into(), q: "1.5".into(), ..Default::default() };
        assert!(schedule_document(&req).is_err());
    }
}
