use gemini_core::ast::{Expr, Node};
use gemini_core::lexer::{decode_integer, tokenize, IntLitError, Tok};
use gemini_core::parser::{desugar, parse, parse_program, to_sexpr};
use num_bigint::BigInt;
use proptest::prelude::*;

// ---------------------------------------------------------------------------
// Lexer

fn oracle_decode(negative: bool, radix: u32, digits: &str) -> Result<i32, IntLitError> {
    let mut v = BigInt::parse_bytes(digits.as_bytes(), radix).expect("digits valid for the radix");
    if negative {
        v = -v;
    }
    i32::try_from(v).map_err(|_| IntLitError::OutOfRange)
}

fn digits(radix: u32) -> impl Strategy<Value = String> {
    let alphabet: Vec<char> = "0123456789abcdef".chars().take(radix as usize).collect();
    prop::collection::vec(prop::sample::select(alphabet), 1..14).prop_map(|cs| cs.into_iter().collect())
}

fn check_decode(negative: bool, radix: u32, ds: &str) -> Result<(), TestCaseError> {
    let prefix = match radix {
        2 => "#'b:",
        8 => "#'o:",
        16 => "#'x:",
        _ => "",
    };
    let lexeme = format!("{}{}{}", if negative { "~" } else { "" }, prefix, ds);
    prop_assert_eq!(decode_integer(&lexeme), oracle_decode(negative, radix, ds), "{}", lexeme);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn decode_integer_matches_bigint(
        neg in any::<bool>(),
        b2 in digits(2),
        b8 in digits(8),
        b10 in digits(10),
        b16 in digits(16),
    ) {
        check_decode(neg, 2, &b2)?;
        check_decode(neg, 8, &b8)?;
        check_decode(neg, 10, &b10)?;
        check_decode(neg, 16, &b16)?;
        prop_assert_eq!(decode_integer(&format!("#'h:{}", b16)), decode_integer(&format!("#'x:{}", b16)));
    }
}

const FRAGMENTS: &[&str] = &[
    "let", "val", "x", "foo_1", "'a", "42", "~7", "3.25", "\"s\\n\"", "'b:1", "#'x:ff", ">>>", ">=", ">", ">>", "::",
    ":=", "=>", "->", "~>", "#[", "#(", "[:", ":]", "<:", ":>", "(", ")", "[", "]", "&->", "|->", "^->", "&&",
    "||", "^^", "+.", "*", "#1", "$", "!", ",", ";", "|:",
];

const SEPARATORS: &[&str] = &[" ", "\n", "\t", "  ", " (* note *) ", "\n(* a (* nested *) b *)\n"];

/// Removes whitespace and (nested) comments; anything left was not accounted for.
fn strip_trivia(gap: &str) -> String {
    let mut out = String::new();
    let mut depth = 0;
    let b = gap.as_bytes();
    let mut i = 0;
    while i < b.len() {
        if b[i..].starts_with(b"(*") {
            depth += 1;
            i += 2;
        } else if depth > 0 && b[i..].starts_with(b"*)") {
            depth -= 1;
            i += 2;
        } else {
            if depth == 0 && !b[i].is_ascii_whitespace() {
                out.push(b[i] as char);
            }
            i += 1;
        }
    }
    out
}

proptest! {
    #[test]
    fn tokens_and_trivia_cover_the_source(
        parts in prop::collection::vec((prop::sample::select(FRAGMENTS), prop::sample::select(SEPARATORS)), 1..30)
    ) {
        let src: String = parts.iter().map(|(f, s)| format!("{}{}", f, s)).collect();
        let toks = tokenize(&src, "t").unwrap();
        let mut pos = 0;
        for t in toks.iter().filter(|t| t.tok != Tok::Eof) {
            prop_assert!(t.span.start >= pos, "overlap at {:?}", t);
            prop_assert_eq!(strip_trivia(&src[pos..t.span.start]), "");
            prop_assert_eq!(&src[t.span.start..t.span.end], t.text.as_str());
            pos = t.span.end;
        }
        prop_assert_eq!(strip_trivia(&src[pos..]), "");
        let count = toks.iter().filter(|t| t.tok != Tok::Eof).count();
        prop_assert_eq!(count, parts.len());
    }

    #[test]
    fn longest_operator_wins(s in "[<>=+*/.&|^!:$%-]{1,6}") {
        let single = |p: &str| matches!(tokenize(p, "t").as_deref(), Ok([t, e]) if matches!(t.tok, Tok::Sym(_)) && e.tok == Tok::Eof);
        if let Ok(toks) = tokenize(&s, "t") {
            let longest = (1..=s.len()).rev().find(|&n| single(&s[..n]));
            if let Some(n) = longest {
                prop_assert_eq!(&toks[0].text, &s[..n]);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Parser

#[derive(Clone, Copy)]
enum Assoc {
    Left,
    Right,
}

/// Binary operators from loosest to tightest binding, with their rendering.
const LEVELS: &[(&[&str], Assoc)] = &[
    (&[":="], Assoc::Right),
    (&["orelse"], Assoc::Left),
    (&["andalso"], Assoc::Left),
    (&["<<", ">>", ">>>"], Assoc::Left),
    (&["=", "<>"], Assoc::Left),
    (&[">", "<", ">=", "<="], Assoc::Left),
    (&["::"], Assoc::Right),
    (&["||", "^^"], Assoc::Left),
    (&["&&"], Assoc::Left),
    (&["-.", "+.", "-", "+", "^", "|"], Assoc::Left),
    (&["/.", "*.", "/", "*", "&", "%"], Assoc::Left),
];

fn level_of(op: &str) -> (usize, Assoc) {
    LEVELS.iter().enumerate().find(|(_, (ops, _))| ops.contains(&op)).map(|(i, (_, a))| (i, *a)).unwrap()
}

fn render_op(op: &str, l: String, r: String) -> String {
    match op {
        "andalso" | "orelse" => format!("({} {} {})", op, l, r),
        "&&" | "||" | "^^" => format!("(collapse {} {} {})", op, l, r),
        _ => format!("(binop {} {} {})", op, l, r),
    }
}

/// Surface text and expected tree of a random operator expression.
#[derive(Clone, Debug)]
enum Item {
    Atom(String, String),
    Group(Vec<Item>, Vec<&'static str>),
}

fn all_ops() -> Vec<&'static str> {
    LEVELS.iter().flat_map(|(ops, _)| ops.iter().copied()).collect()
}

fn atom() -> impl Strategy<Value = Item> {
    (0..6usize, prop::sample::select(vec!["", "~", "!", "$"])).prop_map(|(i, pre)| {
        let v = format!("(var x{})", i);
        let tree = if pre.is_empty() { v } else { format!("(unop {} {})", pre, v) };
        Item::Atom(format!("{}x{}", pre, i), tree)
    })
}

fn expr_items() -> impl Strategy<Value = Item> {
    atom().prop_recursive(3, 40, 6, |inner| {
        prop::collection::vec((inner, prop::sample::select(all_ops())), 1..6).prop_map(|pairs| {
            let (items, mut ops): (Vec<Item>, Vec<&str>) = pairs.into_iter().unzip();
            ops.pop();
            Item::Group(items, ops)
        })
    })
}

fn text(it: &Item) -> String {
    match it {
        Item::Atom(s, _) => s.clone(),
        Item::Group(items, ops) => {
            let mut out = text(&items[0]);
            for (op, x) in ops.iter().zip(&items[1..]) {
                out = format!("{} {} {}", out, op, text(x));
            }
            if items.len() > 1 { format!("({})", out) } else { out }
        }
    }
}

/// Precedence climbing over the reference table.
fn climb(items: &[String], ops: &[&str], pos: &mut usize, min: usize) -> String {
    let mut lhs = items[*pos].clone();
    while *pos < ops.len() {
        let op = ops[*pos];
        let (lvl, assoc) = level_of(op);
        if lvl < min {
            break;
        }
        *pos += 1;
        let next_min = match assoc {
            Assoc::Left => lvl + 1,
            Assoc::Right => lvl,
        };
        let rhs = climb(items, ops, pos, next_min);
        lhs = render_op(op, lhs, rhs);
    }
    lhs
}

fn tree(it: &Item) -> String {
    match it {
        Item::Atom(_, t) => t.clone(),
        Item::Group(items, ops) => {
            let subtrees: Vec<String> = items.iter().map(tree).collect();
            let mut pos = 0;
            climb(&subtrees, ops, &mut pos, 0)
        }
    }
}

fn check_spans(e: &Expr) -> Result<(), String> {
    for child in e.children() {
        let (span, sub) = match child {
            Node::Expr(c) => (c.span, Some(c)),
            Node::Dec(d) => (d.span, None),
            Node::Pat(p) => (p.span, None),
        };
        if !e.span.contains(&span) {
            return Err(format!("{:?} escapes {:?}", span, e.span));
        }
        if let Some(c) = sub {
            check_spans(c)?;
        }
        if let Node::Dec(d) = child {
            for x in d.exprs() {
                if !d.span.contains(&x.span) {
                    return Err(format!("{:?} escapes declaration {:?}", x.span, d.span));
                }
                check_spans(x)?;
            }
        }
    }
    Ok(())
}

fn fixtures() -> Vec<String> {
    ["adder", "explicit_logic", "canonical"]
        .iter()
        .map(|n| std::fs::read_to_string(format!("{}/tests/programs/{}.gem", env!("CARGO_MANIFEST_DIR"), n)).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn parse_matches_precedence_oracle(it in expr_items()) {
        let src = text(&it);
        let raw = parse(&tokenize(&src, "t").unwrap()).map_err(|d| TestCaseError::fail(format!("{}: {}", src, d)))?;
        prop_assert_eq!(to_sexpr(&raw), tree(&it), "{}", src);
        check_spans(&raw).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn desugaring_is_idempotent(it in expr_items(), wrap in 0..4usize) {
        let inner = text(&it);
        let src = match wrap {
            0 => inner,
            1 => format!("if not ({}) then (x0, x1) else ()", inner),
            2 => format!("let val y = {} fun f (a, b) = a andalso b in #(y, f) end", inner),
            _ => format!("case {} of (a, b) => a orelse b |: _ => &->#[x0, x1]", inner),
        };
        let once = parse_program(&src, "t").unwrap();
        prop_assert_eq!(to_sexpr(&desugar(once.clone())), to_sexpr(&once));
        check_spans(&once).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn fixture_spans_nest_and_desugar_is_idempotent() {
    for src in fixtures() {
        let raw = parse(&tokenize(&src, "t").unwrap()).unwrap();
        check_spans(&raw).unwrap();
        let once = desugar(raw);
        check_spans(&once).unwrap();
        assert_eq!(to_sexpr(&desugar(once.clone())), to_sexpr(&once));
    }
}
