use gemini_core::eval::{Evaluator, Value};
use gemini_core::hw::{ir_text, width, GateOp, Netlist, Node};
use gemini_core::infer::infer_source;
use gemini_core::metatheory::gen_well_typed;
use gemini_core::netsim::{exhaustive_equiv, Program, Sim};
use gemini_core::pipeline::{compile, Options};
use gemini_core::stdlib::twos_complement_module;
use gemini_core::types::{HType, SType, SemType, Size};
use proptest::prelude::*;

fn run(src: &str) -> Result<String, String> {
    let (e, _, inf) = infer_source(src).map_err(|d| d.to_string())?;
    if let Some(d) = inf.diags.iter().find(|d| d.is_error()) {
        return Err(d.to_string());
    }
    let mut ev = Evaluator::new();
    ev.eval(&e, &Evaluator::initial_env()).map(|v| v.to_string()).map_err(|d| d.to_string())
}

fn netlist(src: &str) -> Netlist {
    compile(src, "p.gem", &Options::default()).unwrap_or_else(|d| panic!("{}: {:?}", src, d)).netlist
}

fn int_list(xs: &[i32]) -> String {
    let items: Vec<String> = xs.iter().map(|x| if *x < 0 { format!("~{}", -x) } else { x.to_string() }).collect();
    format!("[{}]", items.join(", "))
}

/// Does an evaluated value inhabit the type it was inferred at?
fn inhabits(v: &Value<'_>, t: &SType, ev: &Evaluator<'_>) -> bool {
    match (t, v) {
        (SType::Meta(_) | SType::Top, _) => true,
        (SType::Int, Value::Int(_)) | (SType::Real, Value::Real(_)) | (SType::String, Value::Str(_)) => true,
        (SType::List(e), Value::List(_)) => v.list_items().unwrap().iter().all(|x| inhabits(x, e, ev)),
        (SType::Record(fs), Value::Record(vs)) => {
            fs.len() == vs.len() && fs.iter().all(|(l, ft)| v.field(l).is_some_and(|x| inhabits(x, ft, ev)))
        }
        (SType::Ref(inner), Value::Ref(loc)) => ev.store.get(*loc).is_some_and(|x| inhabits(x, inner, ev)),
        (SType::Arrow(..), Value::Closure(_) | Value::Prim(_) | Value::Ctor(_)) => true,
        (SType::Sw(h), Value::SwWrap(inner)) => match &**inner {
            Value::Hw(n) => {
                let HType::Array(_, Size::Known(want)) = &**h else { return matches!(**h, HType::Bit) };
                width(ev.builder.ty(*n)) == *want
            }
            _ => false,
        },
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn foldl_matches_a_reference_fold(xs in prop::collection::vec(-100..100i32, 0..30), init in 0..1000i32) {
        let src = format!(
            "let fun step (x, acc) = (acc * 3 + x) % 1000 in List.foldl step {} {} end",
            init,
            int_list(&xs)
        );
        let want = xs.iter().fold(init as i64, |acc, x| (acc * 3 + *x as i64).rem_euclid(1000));
        prop_assert_eq!(run(&src).map_err(TestCaseError::fail)?, want.to_string());
    }

    #[test]
    fn assignments_take_effect_in_program_order(xs in prop::collection::vec(0..50i32, 1..8)) {
        let body: Vec<String> = xs.iter().map(|x| format!("r := {} :: $r", x)).collect();
        let src = format!("let val r = ref [] val _ = ({}) in $r end", body.join("; "));
        let mut want = xs.clone();
        want.reverse();
        prop_assert_eq!(run(&src).map_err(TestCaseError::fail)?, int_list(&want));
    }
}

#[test]
fn evaluated_values_inhabit_their_types() {
    for seed in 0..1000 {
        let (e, ty) = gen_well_typed(seed, 6);
        let SemType::Sw(st) = &ty else { panic!("generated a non-software type") };
        let mut ev = Evaluator::new();
        let v = ev.eval(&e, &Evaluator::initial_env()).unwrap_or_else(|d| panic!("seed {}: {}", seed, d));
        assert!(inhabits(&v, st, &ev), "seed {}: {} does not inhabit {:?}", seed, v, st);
    }
}

#[test]
fn twos_complement_negates_modulo_width() {
    for w in 1..=10u32 {
        let prog = Program::compile(&twos_complement_module(w)).unwrap();
        let mut sim = Sim::new(&prog);
        let m = 1u64 << w;
        for x in 0..m {
            assert_eq!(sim.step_packed(&[x]), (m - x) % m, "width {} x {}", w, x);
        }
    }
}

fn hw_expr() -> impl Strategy<Value = String> {
    prop_oneof![Just("a".to_string()), Just("b".to_string())].prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|x| format!("!({})", x)),
            (inner.clone(), inner, prop::sample::select(vec!["&", "|", "^"]))
                .prop_map(|(x, y, op)| format!("({}) {} ({})", x, op, y)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn unsw_of_sw_is_the_identity(e in hw_expr(), w in 1..5u32) {
        let module = |body: &str| format!("let module m #(a: bit[{w}], b: bit[{w}]) = {body} in m end");
        let plain = netlist(&module(&e));
        let wrapped = netlist(&module(&format!("unsw (sw ({}))", e)));
        prop_assert_eq!(ir_text(&plain), ir_text(&wrapped));
    }

    #[test]
    fn from_list_inverts_to_list(w in 1..9u32) {
        let src = format!("let module m (a: bit[{}]) = unsw (Array.fromList (Array.toList (sw a))) in m end", w);
        let direct = format!("let module m (a: bit[{}]) = a in m end", w);
        prop_assert!(exhaustive_equiv(&netlist(&src), &netlist(&direct)).unwrap());
    }
}

/// Literal-only gate tree: source text, and the same tree as raw netlist nodes.
#[derive(Clone, Debug)]
enum Lit {
    Bit(u8),
    Not(Box<Lit>),
    Gate(GateOp, Box<Lit>, Box<Lit>),
}

fn lit_tree() -> impl Strategy<Value = Lit> {
    (0..2u8).prop_map(Lit::Bit).prop_recursive(5, 40, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|x| Lit::Not(Box::new(x))),
            (inner.clone(), inner, prop::sample::select(vec![GateOp::And, GateOp::Or, GateOp::Xor]))
                .prop_map(|(x, y, op)| Lit::Gate(op, Box::new(x), Box::new(y))),
        ]
    })
}

fn lit_text(t: &Lit) -> String {
    match t {
        Lit::Bit(b) => format!("'b:{}", b),
        Lit::Not(x) => format!("!({})", lit_text(x)),
        Lit::Gate(op, x, y) => format!("({}) {} ({})", lit_text(x), op.symbol(), lit_text(y)),
    }
}

fn unfolded(t: &Lit, nodes: &mut Vec<Node>) -> usize {
    let n = match t {
        Lit::Bit(b) => Node::Const(*b),
        Lit::Not(x) => Node::Not(unfolded(x, nodes)),
        Lit::Gate(op, x, y) => {
            let (a, b) = (unfolded(x, nodes), unfolded(y, nodes));
            Node::Gate(*op, vec![a, b])
        }
    };
    nodes.push(n);
    nodes.len() - 1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn constant_folding_is_sound(t in lit_tree()) {
        // Folding happens while staging; the module only exists to carry the constant out.
        let folded = netlist(&format!("let module m (x: bit) = ({}) ^ (x & 'b:0) in m end", lit_text(&t)));
        let folded_prog = Program::compile(&folded).unwrap();
        prop_assert!(folded.compact().nodes.iter().all(|n| !matches!(n, Node::Gate(..) | Node::Not(_))));
        let mut nodes = Vec::new();
        let out = unfolded(&t, &mut nodes);
        let raw = Netlist { nodes, inputs: Vec::new(), output: out };
        let want = Sim::new(&Program::compile(&raw).unwrap()).step_packed(&[]);
        prop_assert_eq!(Sim::new(&folded_prog).step_packed(&[0]), want);
    }
}
