mod common;

use std::sync::{Arc, OnceLock};

use sdopt::classic::solve_classic;
use sdopt::ppra::{solve_ppra, CorrectionPiece, Ppra, PpraOptions, PpraSolution, Status};
use sdopt::validation::{budget_value, check_ssd, objective_value, VERIFY_RANKS};
use sdopt::{PiecewiseQuantile, Quantile, QuantileSpec, Utility, UtilitySpec};

struct Case {
    u: Arc<Utility>,
    q0: QuantileSpec,
    x_bar: f64,
    sol: PpraSolution,
}

fn case(u: UtilitySpec, q0: QuantileSpec, x_bar: f64) -> Case {
    let u = Arc::new(Utility::new(u).unwrap());
    let sol = solve_ppra(&u, &q0, &common::market(x_bar), &PpraOptions::default()).unwrap();
    Case { u, q0, x_bar, sol }
}

fn power() -> UtilitySpec {
    UtilitySpec::Power { p: 0.6 }
}

fn cases() -> &'static [Case] {
    static CASES: OnceLock<Vec<Case>> = OnceLock::new();
    CASES.get_or_init(|| {
        vec![
            case(power(), common::lognormal(3.0, 1.0), 10.0),
            case(power(), common::lognormal(2.3, 2.0), 10.0),
            case(power(), common::lognormal(3.0, 1.4), 10.0),
            case(
                UtilitySpec::SShaped { p: 0.6, q: 0.5, k: 2.0, gain: 1.0, liquidation: Some(-5.0) },
                common::lognormal(2.3, 2.0),
                10.0,
            ),
            case(UtilitySpec::Log, QuantileSpec::Affine { slope: 10.0, intercept: 0.0 }, 1.4),
        ]
    })
}

fn ctx<'a>(c: &'a Case, opts: &'a PpraOptions) -> Ppra<'a> {
    Ppra::new(&c.u, &c.q0, c.sol.kernel(), c.sol.lambda, opts)
}

#[test]
fn y0_closed_form_matches_bisection() {
    let opts = PpraOptions::default();
    for c in cases() {
        let p = ctx(c, &opts);
        for j in 1..400 {
            let t = j as f64 / 400.0;
            let Some(b) = p.y0_bisect(t, 1e-13) else { continue };
            let r = c.sol.kernel().q(t);
            assert!((p.y0(t) - b).abs() <= 1e-10 * r.max(1.0), "t={t}: {} vs {b}", p.y0(t));
        }
    }
}

#[test]
fn correction_is_valid() {
    for c in cases() {
        let k = c.sol.kernel();
        let mut prev = 0.0;
        for j in 1..10_000 {
            let t = j as f64 / 10_000.0;
            let y = c.sol.y_sub(t);
            assert!(y >= 0.0);
            assert!(y >= prev - 1e-10, "y_sub decreases at {t}: {prev} -> {y}");
            assert!(k.q(t) - y > 0.0);
            prev = y;
        }
    }
}

#[test]
fn feasible_binding_and_between_benchmark_and_classic() {
    for c in cases() {
        let s = &c.sol;
        assert!(!s.status.is_failed(), "{:?}", s.diagnostic);
        let r = check_ssd(&s.quantile, &c.q0, VERIFY_RANKS, 1e-6);
        assert!(r.feasible, "{r:?}");
        let b = budget_value(&s.quantile, &s.kernel()).unwrap();
        assert!((b - c.x_bar).abs() <= 1e-4 * c.x_bar);
        let classic = solve_classic(&c.u, &common::market(c.x_bar)).unwrap();
        assert!(s.objective <= classic.objective + 1e-8);
        if let Ok(base) = objective_value(&c.q0, &c.u) {
            assert!(s.objective >= base - 1e-8, "{} below benchmark {base}", s.objective);
        }
    }
}

#[test]
fn classic_optimal_is_the_classic_solution() {
    let c = &cases()[2];
    assert_eq!(c.sol.status, Status::ClassicOptimal);
    assert_eq!(c.sol.lambda, c.sol.lambda_cla);
    let classic = PiecewiseQuantile::classic(c.u.clone(), c.sol.kernel(), c.sol.lambda_cla);
    for j in 0..10_000 {
        let s = (j as f64 + 0.5) / 10_000.0;
        assert!((c.sol.quantile.value(s) - classic.value(s)).abs() <= 1e-10 * classic.value(s).abs().max(1.0));
    }
}

#[test]
fn corrupted_corrections_are_rejected() {
    let opts = PpraOptions::default();
    for c in cases().iter().filter(|c| c.sol.status == Status::SubOptimal) {
        let p = ctx(c, &opts);
        let none = [CorrectionPiece::Flat { lo: 0.0, hi: 1.0, level: 0.0 }];
        let lowered: Vec<CorrectionPiece> = c
            .sol
            .correction
            .pieces
            .iter()
            .map(|&piece| match piece {
                CorrectionPiece::Flat { lo, hi, level } if level > 0.0 => CorrectionPiece::Flat { lo, hi, level: 0.5 * level },
                other => other,
            })
            .collect();
        for pieces in [&none[..], &lowered[..]] {
            if pieces == c.sol.correction.pieces.as_slice() {
                continue;
            }
            let q = p.assemble(&c.u, pieces);
            assert!(!check_ssd(&q, &c.q0, VERIFY_RANKS, 1e-6).feasible);
        }
    }
}
