//! Random expression trees are printed with the minimum number of parentheses
//! and parsed back; the parser's value must match a direct tree evaluation.

use hodge_forms::cli::expr::parse_expression;
use proptest::prelude::*;

#[derive(Clone, Debug)]
enum T {
    Num(f64),
    Var(usize),
    Neg(Box<T>),
    Bin(char, Box<T>, Box<T>),
    Call(&'static str, Box<T>),
}

fn prec(t: &T) -> u8 {
    match t {
        T::Bin('+' | '-', ..) => 1,
        T::Bin('*' | '/', ..) => 2,
        T::Neg(_) => 3,
        T::Bin('^', ..) => 4,
        _ => 5,
    }
}

fn wrap(t: &T, parens: bool) -> String {
    if parens {
        format!("({})", print(t))
    } else {
        print(t)
    }
}

fn print(t: &T) -> String {
    match t {
        T::Num(v) => format!("{v}"),
        T::Var(i) => format!("x{}", i + 1),
        T::Neg(a) => format!("-{}", wrap(a, prec(a) < 3)),
        T::Call(f, a) => format!("{f}({})", print(a)),
        T::Bin('^', a, b) => format!("{}^{}", wrap(a, prec(a) < 5), wrap(b, prec(b) < 3)),
        T::Bin(op, a, b) => {
            let p = prec(t);
            format!("{} {op} {}", wrap(a, prec(a) < p), wrap(b, prec(b) <= p))
        }
    }
}

/// `None` on division by zero or the square root of a negative number.
fn reference(t: &T, x: &[f64]) -> Option<f64> {
    Some(match t {
        T::Num(v) => *v,
        T::Var(i) => x[*i],
        T::Neg(a) => -reference(a, x)?,
        T::Call(f, a) => {
            let v = reference(a, x)?;
            match *f {
                "sin" => v.sin(),
                "cos" => v.cos(),
                "exp" => v.exp(),
                _ if v < 0.0 => return None,
                _ => v.sqrt(),
            }
        }
        T::Bin(op, a, b) => {
            let (l, r) = (reference(a, x)?, reference(b, x)?);
            match op {
                '+' => l + r,
                '-' => l - r,
                '*' => l * r,
                '/' if r == 0.0 => return None,
                '/' => l / r,
                _ => l.powf(r),
            }
        }
    })
}

fn tree() -> impl Strategy<Value = T> {
    let leaf = prop_oneof![
        prop::sample::select(vec![0.0, 0.5, 1.0, 2.0, 3.0, 2.5, 10.0]).prop_map(T::Num),
        (0usize..3).prop_map(T::Var),
    ];
    leaf.prop_recursive(5, 32, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| T::Neg(Box::new(a))),
            (prop::sample::select(vec!["sin", "cos", "exp", "sqrt"]), inner.clone()).prop_map(|(f, a)| T::Call(f, Box::new(a))),
            (prop::sample::select(vec!['+', '-', '*', '/', '^']), inner.clone(), inner)
                .prop_map(|(op, a, b)| T::Bin(op, Box::new(a), Box::new(b))),
        ]
    })
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn parser_matches_reference(t in tree(), x in prop::array::uniform3(-2.0f64..2.0)) {
        let text = print(&t);
        let parsed = parse_expression(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
        match (reference(&t, &x), parsed.eval(&x)) {
            (Some(want), Ok(got)) => prop_assert!(same(want, got), "{text}: {want} vs {got}"),
            (None, Err(_)) => {}
            (want, got) => prop_assert!(false, "{text}: reference {want:?}, parser {got:?}"),
        }
    }

    #[test]
    fn fully_parenthesized_agrees(t in tree(), x in prop::array::uniform3(-2.0f64..2.0)) {
        fn full(t: &T) -> String {
            match t {
                T::Num(v) => format!("{v}"),
                T::Var(i) => format!("x{}", i + 1),
                T::Neg(a) => format!("(-{})", full(a)),
                T::Call(f, a) => format!("{f}({})", full(a)),
                T::Bin(op, a, b) => format!("({}{op}{})", full(a), full(b)),
            }
        }
        let minimal = parse_expression(&print(&t)).unwrap().eval(&x).ok();
        let explicit = parse_expression(&full(&t)).unwrap().eval(&x).ok();
        match (minimal, explicit) {
            (Some(a), Some(b)) => prop_assert!(same(a, b)),
            (a, b) => prop_assert_eq!(a.is_none(), b.is_none()),
        }
    }
}

#[test]
fn documented_examples() {
    let eval = |s: &str| parse_expression(s).unwrap().eval(&[]).unwrap();
    assert_eq!(eval("2^3^2"), 512.0);
    assert_eq!(eval("-2^2"), -4.0);
    assert_eq!(eval("2*3+4"), 10.0);
    let e = parse_expression("x1 +").unwrap_err();
    assert!(matches!(e, hodge_forms::Error::Expression { start: 4, .. }), "{e:?}");
}
