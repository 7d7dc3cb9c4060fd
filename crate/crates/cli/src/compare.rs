//! Computed values against [`Reference`] values.

use sdopt::ppra::{PpraSolution, Status};
use serde::Serialize;

use crate::config::{Reference, Tolerance};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub case: String,
    pub quantity: String,
    pub computed: String,
    pub reference: String,
    pub tolerance: String,
    pub pass: bool,
}

pub fn status_name(s: Status) -> String {
    serde_json::to_value(s).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn scalar(case: &str, quantity: &str, computed: f64, reference: f64, tol: f64) -> Check {
    Check {
        case: case.to_string(),
        quantity: quantity.to_string(),
        computed: format!("{computed:.6}"),
        reference: format!("{reference}"),
        tolerance: format!("{tol:e}"),
        pass: (computed - reference).abs() <= tol,
    }
}

pub fn format_region(intervals: &[(f64, f64)]) -> String {
    if intervals.is_empty() {
        return "empty".to_string();
    }
    intervals.iter().map(|(a, b)| format!("({a:.4}, {b:.4})")).collect::<Vec<_>>().join(" u ")
}

/// For each reference interval, the computed interval overlapping it most.
fn match_intervals(computed: &[(f64, f64)], reference: &[(f64, f64)]) -> Vec<Option<usize>> {
    reference
        .iter()
        .map(|&(ra, rb)| {
            computed
                .iter()
                .enumerate()
                .map(|(k, &(a, b))| (k, b.min(rb) - a.max(ra)))
                .filter(|&(_, overlap)| overlap > 0.0)
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .map(|(k, _)| k)
        })
        .collect()
}

/// Every reference interval is matched within `tol` at both ends; unmatched
/// computed intervals narrower than `tol` are tolerated.
pub fn region_matches(computed: &[(f64, f64)], reference: &[(f64, f64)], tol: f64) -> bool {
    let m = match_intervals(computed, reference);
    let ends_ok = m.iter().zip(reference).all(|(k, &(ra, rb))| {
        k.is_some_and(|k| (computed[k].0 - ra).abs() <= tol && (computed[k].1 - rb).abs() <= tol)
    });
    let extra_ok = computed.iter().enumerate().all(|(k, &(a, b))| m.contains(&Some(k)) || b - a < tol);
    ends_ok && extra_ok
}

/// Checks of one PPRA run; `minimal` is the computed benchmark price.
pub fn compare_ppra(case: &str, sol: &PpraSolution, minimal: f64, r: &Reference, tol: &Tolerance) -> Vec<Check> {
    let mut out = Vec::new();
    if let Some(v) = r.lambda {
        out.push(scalar(case, "lambda", sol.lambda, v, tol.lambda));
    }
    if let Some(v) = r.lambda_cla {
        out.push(scalar(case, "lambda_cla", sol.lambda_cla, v, tol.lambda_cla));
    }
    if let Some(v) = r.minimal_budget {
        out.push(scalar(case, "minimal_budget", minimal, v, tol.minimal_budget));
    }
    if let Some(v) = r.objective {
        out.push(scalar(case, "objective", sol.objective, v, tol.objective));
    }
    if let Some(status) = r.status {
        out.push(Check {
            case: case.to_string(),
            quantity: "status".to_string(),
            computed: status_name(sol.status),
            reference: status_name(status),
            tolerance: "exact".to_string(),
            pass: sol.status == status,
        });
    }
    if let Some(want) = r.repaired {
        let got = !sol.correction.repairs.is_empty();
        out.push(Check {
            case: case.to_string(),
            quantity: "repaired".to_string(),
            computed: got.to_string(),
            reference: want.to_string(),
            tolerance: "exact".to_string(),
            pass: got == want,
        });
    }
    if let Some(region) = &r.region {
        let computed = &sol.region.intervals;
        out.push(Check {
            case: case.to_string(),
            quantity: "region".to_string(),
            computed: format_region(computed),
            reference: format_region(region),
            tolerance: format!("{:e}", tol.region),
            pass: region_matches(computed, region, tol.region),
        });
        if let Some(partition) = &r.partition {
            let m = match_intervals(computed, region);
            for (j, (&want, k)) in partition.iter().zip(m).enumerate() {
                let got = k.and_then(|k| sol.partition.get(k).copied()).unwrap_or(f64::NAN);
                let exact = tol.exact_partition && (want == 0.0 || want == 1.0);
                let pass = if exact { got == want } else { (got - want).abs() <= tol.partition };
                out.push(Check {
                    case: case.to_string(),
                    quantity: format!("t{}", j + 1),
                    computed: format!("{got:.6}"),
                    reference: format!("{want}"),
                    tolerance: if exact { "exact".to_string() } else { format!("{:e}", tol.partition) },
                    pass,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_matching() {
        let reference = [(0.0, 0.4355), (0.9669, 1.0)];
        assert!(region_matches(&[(0.0, 0.4275), (0.9676, 1.0)], &reference, 1e-2));
        assert!(!region_matches(&[(0.0, 0.4275)], &reference, 1e-2));
        // a sliver the reference does not list
        assert!(region_matches(&[(0.0, 0.0058), (0.8906, 1.0)], &[(0.8904, 1.0)], 1e-2));
        assert!(!region_matches(&[(0.0, 0.2), (0.8906, 1.0)], &[(0.8904, 1.0)], 1e-2));
    }
}
