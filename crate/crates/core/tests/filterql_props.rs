use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skycat::filterql::{compile, parse, BinaryOp, Checked, Expr, Literal, UnaryOp};
use skycat::store::rows::{self, Field, PhotoObj, RowRecord};
use skycat::store::{flags, Catalog, ObjType, TableName};

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0i64..1_000_000).prop_map(Expr::int),
        (0.0f64..1e6).prop_map(Expr::float),
        "[a-z' ]{0,6}".prop_map(|s| Expr::string(&s)),
        prop::sample::select(vec!["ra", "dec", "r", "g", "flags", "objType", "modelMag_u", "isPrimary"]).prop_map(Expr::col),
        prop::sample::select(vec!["primary", "edge", "Child"])
            .prop_map(|f| Expr::Call("fPhotoFlags".into(), vec![Expr::string(f)])),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    use BinaryOp::*;
    let ops = vec![Add, Sub, Mul, Div, BitAnd, Lt, Gt, Le, Ge, Eq, Ne, And, Or];
    leaf().prop_recursive(6, 64, 2, move |inner| {
        prop_oneof![
            (prop::sample::select(ops.clone()), inner.clone(), inner.clone()).prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            (prop::bool::ANY, inner).prop_map(|(neg, e)| Expr::unary(if neg { UnaryOp::Neg } else { UnaryOp::Not }, e)),
        ]
    })
}

proptest! {
    #[test]
    fn print_parse_round_trip(e in expr()) {
        let printed = e.to_string();
        let back = parse(&printed).unwrap();
        prop_assert_eq!(&back, &e);
        prop_assert_eq!(back.to_string(), printed);
    }

    #[test]
    fn parser_never_panics(s in "[ -~]{0,40}") {
        let _ = parse(&s);
    }
}

fn catalog(n: usize, seed: u64) -> Catalog {
    let c = Catalog::new();
    let field = Field { field_id: 1, run: 1, camcol: 1, field_num: 1, ra_min: 0.0, ra_max: 360.0, dec_min: -90.0, dec_max: 90.0 };
    c.insert_batch(TableName::Field, vec![field.to_values()], c.tick()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objs: Vec<PhotoObj> = (1..=n as i64)
        .map(|id| {
            let mut p = PhotoObj {
                obj_id: id,
                field_id: 1,
                obj_type: [ObjType::Star, ObjType::Galaxy, ObjType::Unknown][rng.gen_range(0..3)],
                flags: rng.gen_range(0..64) & !flags::BLENDED,
                ..Default::default()
            };
            for m in &mut p.model_mag {
                *m = rng.gen_range(14.0..24.0);
            }
            p.with_position(rng.gen_range(0.0..360.0), rng.gen_range(-90.0..90.0)).unwrap()
        })
        .collect();
    c.insert_batch(TableName::PhotoObj, rows::to_rows(&objs), c.tick()).unwrap();
    c
}

#[test]
fn color_cut_count_matches_loop() {
    let c = catalog(20_000, 7);
    let s = c.snapshot();
    let t = s.table(TableName::PhotoObj);
    let pred = compile("(r-g)>1", t.schema()).unwrap();
    let (r, g) = (t.floats("modelMag_r"), t.floats("modelMag_g"));
    let oracle = (0..t.len()).filter(|i| r[*i] - g[*i] > 1.0).count();
    assert!(oracle > 0);
    assert_eq!(pred.count_range(t, 0..t.len()), oracle);
    let prim = compile("flags & fPhotoFlags('primary')", t.schema()).unwrap();
    let is_primary = t.column_by_name("isPrimary").unwrap();
    let selected: Vec<bool> = prim.eval_range(t, 0..t.len());
    for (i, s) in selected.iter().enumerate() {
        assert_eq!(skycat::store::Value::Bool(*s), is_primary.get(i));
    }
}

#[test]
fn batch_equals_row_at_a_time() {
    let c = catalog(3000, 11);
    let s = c.snapshot();
    let t = s.table(TableName::PhotoObj);
    let exprs = [
        "(r-g)>1",
        "ra / (dec - dec) > 0 OR dec < -10",
        "objType = 'galaxy' AND NOT (flags & 3) = 0",
        "isPrimary = (u < 20) OR objID * 2 - 7 >= 4000",
        "-ra + 10 <= dec * 0.5 AND 'b' > 'a'",
        "flags & fPhotoFlags('edge') & 32",
        "loadTime > '2000-01-01T00:00:00Z' AND objType != 'star'",
    ];
    let rows_idx: Vec<usize> = (0..t.len()).rev().step_by(3).collect();
    for text in exprs {
        let p: Checked = compile(text, t.schema()).unwrap_or_else(|e| panic!("{text}: {e}"));
        let batch = p.eval_range(t, 0..t.len());
        let single: Vec<bool> = (0..t.len()).map(|i| p.matches_row(t, i)).collect();
        assert_eq!(batch, single, "{text}");
        let gathered = p.eval_rows(t, &rows_idx);
        let expect: Vec<bool> = rows_idx.iter().map(|i| single[*i]).collect();
        assert_eq!(gathered, expect, "{text}");
        assert_eq!(p.count_range(t, 100..2900), single[100..2900].iter().filter(|b| **b).count());
    }
}

#[test]
fn literal_kinds_survive_printing() {
    for text in ["1e300 > ra", "0.1 + 0.2 = ra", "'o''neil' = 'x'", "123456789012 > objID"] {
        let e = parse(text).unwrap();
        assert_eq!(parse(&e.to_string()).unwrap(), e);
    }
    assert!(matches!(parse("1.0").unwrap(), Expr::Literal(Literal::Float(_))));
    assert!(matches!(parse("1").unwrap(), Expr::Literal(Literal::Int(1))));
}
