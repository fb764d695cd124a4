//! Property tests for the expression engine: printing round-trips,
//! derivative linearity and finite-difference agreement, bracket algebra.

use hjflow_core::expr::{
    differentiate, evaluate, is_zero, parse, poisson_bracket, Bindings, ConjugatePairs, Expr,
    Interval, SampleDomain,
};
use hjflow_core::rng::Rng;
use proptest::prelude::*;
use std::sync::Arc;

const SYMBOLS: [&str; 3] = ["x", "y", "z"];

/// Full expression trees (may divide and take sqrt, so evaluation can fail
/// at some points; tests skip those points).
fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-3.0..3.0f64).prop_map(Expr::Number),
        (0..3usize).prop_map(|i| Expr::symbol(SYMBOLS[i])),
    ];
    leaf.prop_recursive(4, 48, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Add(Arc::new(a), Arc::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Sub(Arc::new(a), Arc::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Mul(Arc::new(a), Arc::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Div(Arc::new(a), Arc::new(b))),
            inner.clone().prop_map(|a| Expr::Neg(Arc::new(a))),
            (inner.clone(), 1..4u32)
                .prop_map(|(a, k)| Expr::Pow(Arc::new(a), Arc::new(Expr::Number(k as f64)))),
            inner
                .clone()
                .prop_map(|a| Expr::Call("sin".to_string(), vec![a])),
            inner
                .clone()
                .prop_map(|a| Expr::Call("cos".to_string(), vec![a])),
        ]
    })
}

/// Polynomial trees over the given symbols: always evaluable, always
/// differentiable.
fn arb_poly(symbols: &'static [&'static str]) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-2.0..2.0f64).prop_map(Expr::Number),
        (0..symbols.len()).prop_map(move |i| Expr::symbol(symbols[i])),
    ];
    leaf.prop_recursive(3, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Add(Arc::new(a), Arc::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Sub(Arc::new(a), Arc::new(b))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Expr::Mul(Arc::new(a), Arc::new(b))),
            inner.clone().prop_map(|a| Expr::Neg(Arc::new(a))),
            (inner.clone(), 1..3u32)
                .prop_map(|(a, k)| Expr::Pow(Arc::new(a), Arc::new(Expr::Number(k as f64)))),
        ]
    })
}

fn sample_bindings(rng: &mut Rng, symbols: &[&str], lo: f64, hi: f64) -> Bindings {
    let mut b = Bindings::new();
    for s in symbols {
        b.set(s.to_string(), rng.uniform(lo, hi));
    }
    b
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 50, .. ProptestConfig::default() })]

    /// parse(print(e)) evaluates identically to e wherever e evaluates.
    #[test]
    fn printing_round_trips(e in arb_expr()) {
        let text = e.to_string();
        let back = parse(&text).unwrap_or_else(|err| panic!("'{}' failed to re-parse: {}", text, err));
        let mut rng = Rng::new(42);
        for _ in 0..20 {
            let b = sample_bindings(&mut rng, &SYMBOLS, -2.0, 2.0);
            if let Ok(expect) = evaluate(&e, &b) {
                if expect.is_finite() {
                    let got = evaluate(&back, &b).expect("round-tripped expression must evaluate");
                    prop_assert!(
                        (expect - got).abs() <= 1e-12 * (1.0 + expect.abs()),
                        "'{}': {} vs {}", text, expect, got
                    );
                }
            }
        }
    }

    /// d(aF + bG) = a dF + b dG as functions.
    #[test]
    fn differentiation_is_linear(f in arb_poly(&SYMBOLS), g in arb_poly(&SYMBOLS)) {
        let (a, b) = (0.7, -1.3);
        let combo = Expr::Add(
            Arc::new(Expr::Mul(Arc::new(Expr::Number(a)), Arc::new(f.clone()))),
            Arc::new(Expr::Mul(Arc::new(Expr::Number(b)), Arc::new(g.clone()))),
        );
        let lhs = differentiate(&combo, "x").unwrap();
        let rhs = Expr::Add(
            Arc::new(Expr::Mul(Arc::new(Expr::Number(a)), Arc::new(differentiate(&f, "x").unwrap()))),
            Arc::new(Expr::Mul(Arc::new(Expr::Number(b)), Arc::new(differentiate(&g, "x").unwrap()))),
        );
        let diff = Expr::Sub(Arc::new(lhs), Arc::new(rhs));
        let mut domain = SampleDomain::new();
        for s in SYMBOLS {
            domain.set(s, Interval::new(-1.5, 1.5));
        }
        let verdict = is_zero(&diff, &domain, 20, 42, 1e-9).unwrap();
        prop_assert!(verdict.is_zero, "linearity violated: witness {:?}", verdict.witness);
    }

    /// Symbolic derivatives agree with central finite differences.
    #[test]
    fn derivative_matches_finite_differences(e in arb_expr()) {
        let d = match differentiate(&e, "x") {
            Ok(d) => d,
            Err(_) => return Ok(()), // sqrt-of-negative chains etc.
        };
        let mut rng = Rng::new(7);
        let h = 1e-5;
        for _ in 0..10 {
            let b = sample_bindings(&mut rng, &SYMBOLS, 0.3, 1.3);
            let x0 = b.get("x").unwrap();
            let mut bp = b.clone();
            bp.set("x", x0 + h);
            let mut bm = b.clone();
            bm.set("x", x0 - h);
            let (fp, fm, sym) = match (evaluate(&e, &bp), evaluate(&e, &bm), evaluate(&d, &b)) {
                (Ok(a), Ok(bb), Ok(c)) if a.is_finite() && bb.is_finite() && c.is_finite() => (a, bb, c),
                _ => continue,
            };
            let fd = (fp - fm) / (2.0 * h);
            // third-derivative truncation can be large for towering trees;
            // judge against the local value scale
            let scale = 1.0 + fd.abs().max(fp.abs().max(fm.abs()) / h.sqrt());
            prop_assert!(
                (sym - fd).abs() <= 1e-6 * scale,
                "d/dx {} = {} vs fd {}", e, sym, fd
            );
        }
    }

    /// {F, G} = -{G, F} and the bracket is bilinear.
    #[test]
    fn bracket_antisymmetry_and_bilinearity(
        f in arb_poly(&["q1", "p1", "q2", "p2", "q3", "p3"]),
        g in arb_poly(&["q1", "p1", "q2", "p2", "q3", "p3"]),
        h in arb_poly(&["q1", "p1", "q2", "p2", "q3", "p3"]),
    ) {
        let pairs = ConjugatePairs::new(vec![
            ("q1".into(), "p1".into()),
            ("q2".into(), "p2".into()),
            ("q3".into(), "p3".into()),
        ])
        .unwrap();
        let mut domain = SampleDomain::new();
        for s in ["q1", "p1", "q2", "p2", "q3", "p3"] {
            domain.set(s, Interval::new(-1.2, 1.2));
        }

        let fg = poisson_bracket(&f, &g, &pairs).unwrap();
        let gf = poisson_bracket(&g, &f, &pairs).unwrap();
        let anti = Expr::Add(Arc::new(fg.clone()), Arc::new(gf));
        prop_assert!(is_zero(&anti, &domain, 20, 42, 1e-9).unwrap().is_zero);

        let (a, b) = (1.7, -0.4);
        let combo = Expr::Add(
            Arc::new(Expr::Mul(Arc::new(Expr::Number(a)), Arc::new(f.clone()))),
            Arc::new(Expr::Mul(Arc::new(Expr::Number(b)), Arc::new(g.clone()))),
        );
        let lhs = poisson_bracket(&combo, &h, &pairs).unwrap();
        let fh = poisson_bracket(&f, &h, &pairs).unwrap();
        let gh = poisson_bracket(&g, &h, &pairs).unwrap();
        let rhs = Expr::Add(
            Arc::new(Expr::Mul(Arc::new(Expr::Number(a)), Arc::new(fh))),
            Arc::new(Expr::Mul(Arc::new(Expr::Number(b)), Arc::new(gh))),
        );
        let bilinear = Expr::Sub(Arc::new(lhs), Arc::new(rhs));
        prop_assert!(is_zero(&bilinear, &domain, 20, 42, 1e-9).unwrap().is_zero);
    }

    /// Leibniz rule: {F, G·H} = {F,G}·H + G·{F,H}.
    #[test]
    fn bracket_satisfies_leibniz(
        f in arb_poly(&["q1", "p1", "q2", "p2", "q3", "p3"]),
        g in arb_poly(&["q1", "p1", "q2", "p2", "q3", "p3"]),
        h in arb_poly(&["q1", "p1", "q2", "p2", "q3", "p3"]),
    ) {
        let pairs = ConjugatePairs::new(vec![
            ("q1".into(), "p1".into()),
            ("q2".into(), "p2".into()),
            ("q3".into(), "p3".into()),
        ])
        .unwrap();
        let gh = Expr::Mul(Arc::new(g.clone()), Arc::new(h.clone()));
        let lhs = poisson_bracket(&f, &gh, &pairs).unwrap();
        let fg = poisson_bracket(&f, &g, &pairs).unwrap();
        let fh = poisson_bracket(&f, &h, &pairs).unwrap();
        let rhs = Expr::Add(
            Arc::new(Expr::Mul(Arc::new(fg), Arc::new(h.clone()))),
            Arc::new(Expr::Mul(Arc::new(g.clone()), Arc::new(fh))),
        );
        let diff = Expr::Sub(Arc::new(lhs), Arc::new(rhs));
        let mut domain = SampleDomain::new();
        for s in ["q1", "p1", "q2", "p2", "q3", "p3"] {
            domain.set(s, Interval::new(-1.2, 1.2));
        }
        let verdict = is_zero(&diff, &domain, 20, 42, 1e-9).unwrap();
        prop_assert!(verdict.is_zero, "Leibniz violated: witness {:?}", verdict.witness);
    }
}
