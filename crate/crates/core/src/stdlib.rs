//! Built-in structures: signatures for inference and host implementations for staging.

use crate::diag::{Diagnostic, ErrorKind, Span};
use crate::eval::{fmt_real, twos_complement, Env, Evaluator, ModVal, PrimApp, Value};
use crate::hw::{NetBuilder, Netlist, NodeId};
use crate::infer::Infer;
use crate::types::{HType, SemType};
use std::rc::Rc;

/// Qualified name and signature of every built-in.
pub const SIGNATURES: &[(&str, &str)] = &[
    ("Core.print", "string -> unit"),
    ("Core.read", "string -> string"),
    ("List.nth", "(`a list * int) -> `a"),
    ("List.length", "`a list -> int"),
    ("List.rev", "`a list -> `a list"),
    ("List.map", "(`a -> `b) -> `a list -> `b list"),
    ("List.filter", "(`a -> int) -> `a list -> `a list"),
    ("List.foldl", "(`a * `b -> `b) -> `b -> `a list -> `b"),
    ("List.foldr", "(`a * `b -> `b) -> `b -> `a list -> `b"),
    ("Int.toString", "int -> string"),
    ("String.size", "string -> int"),
    ("String.substring", "(string * int * int) -> string"),
    ("String.concat", "string list -> string"),
    ("String.split", "string -> string -> string list"),
    ("Real.floor", "real -> int"),
    ("Real.ceil", "real -> int"),
    ("Real.round", "real -> int"),
    ("Real.fromInt", "int -> real"),
    ("Real.toString", "real -> string"),
    ("Array.toList", "`a[n] sw -> `a sw list"),
    ("Array.fromList", "`a sw list -> `a[n] sw"),
    ("BitArray.twosComp", "bit[n] ~> bit[n]"),
    ("HW.dff", "`a @ n ~> `a @ (n + 1)"),
];

/// Closed type of a signature string.
pub fn signature_type(inf: &mut Infer, sig: &str) -> SemType {
    let toks = crate::lexer::tokenize(sig, "<builtin>").expect("built-in signature lexes");
    let ast = crate::parser::parse_type(&toks).expect("built-in signature parses");
    inf.translate_closed(&ast)
}

/// Binds every built-in in the inference environment.
pub fn install_types(inf: &mut Infer) {
    for (name, sig) in SIGNATURES {
        let t = signature_type(inf, sig);
        inf.env.bind_val(name, t);
    }
}

/// Number of curried arguments each host function takes.
fn arity(name: &str) -> usize {
    match name {
        "List.map" | "List.filter" | "String.split" => 2,
        "List.foldl" | "List.foldr" => 3,
        _ => 1,
    }
}

/// Binds the host implementation of every built-in.
pub fn install_values<'a>(mut env: Env<'a>) -> Env<'a> {
    for (name, _) in SIGNATURES {
        let v = match *name {
            "BitArray.twosComp" => Value::Module(Rc::new(ModVal::TwosComp)),
            "HW.dff" => Value::Module(Rc::new(ModVal::Dff)),
            _ => Value::Prim(Rc::new(PrimApp { name, arity: arity(name), args: Vec::new() })),
        };
        env = env.bind(name, v);
    }
    env
}

fn lib_err(span: Span, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::error(ErrorKind::Library, Some(span), msg)
}

fn int_arg(v: &Value<'_>, span: Span) -> Result<i32, Diagnostic> {
    v.as_int().ok_or_else(|| lib_err(span, format!("expected an int, found {}", v)))
}

fn str_arg<'v>(v: &'v Value<'_>, span: Span) -> Result<&'v str, Diagnostic> {
    match v {
        Value::Str(s) => Ok(s),
        other => Err(lib_err(span, format!("expected a string, found {}", other))),
    }
}

fn real_arg(v: &Value<'_>, span: Span) -> Result<f64, Diagnostic> {
    match v {
        Value::Real(r) => Ok(*r),
        other => Err(lib_err(span, format!("expected a real, found {}", other))),
    }
}

fn list_arg<'a>(v: &Value<'a>, span: Span) -> Result<Vec<Value<'a>>, Diagnostic> {
    v.list_items().ok_or_else(|| lib_err(span, format!("expected a list, found {}", v)))
}

fn tuple_arg<'v, 'a>(v: &'v Value<'a>, n: usize, span: Span) -> Result<Vec<&'v Value<'a>>, Diagnostic> {
    (1..=n)
        .map(|i| v.field(&i.to_string()).ok_or_else(|| lib_err(span, format!("expected a {}-tuple, found {}", n, v))))
        .collect()
}

fn real_to_int(r: f64, span: Span) -> Result<Value<'static>, Diagnostic> {
    if r.is_nan() || r < i32::MIN as f64 || r > i32::MAX as f64 {
        return Err(Diagnostic::error(ErrorKind::Overflow, Some(span), format!("{} does not fit in an int", fmt_real(r))));
    }
    Ok(Value::Int(r as i32))
}

fn unwrap_hw<'a>(ev: &mut Evaluator<'a>, v: &Value<'a>, span: Span) -> Result<NodeId, Diagnostic> {
    match v {
        Value::SwWrap(inner) => ev.node(inner, span),
        other => Err(lib_err(span, format!("expected a wrapped hardware value, found {}", other))),
    }
}

/// Runs a fully applied built-in.
pub fn call<'a>(ev: &mut Evaluator<'a>, name: &str, args: Vec<Value<'a>>, span: Span) -> Result<Value<'a>, Diagnostic> {
    let a = &args[0];
    Ok(match name {
        "Core.print" => {
            let s = str_arg(a, span)?.to_string();
            if ev.echo {
                println!("{}", s);
            }
            ev.printed.push(s);
            Value::unit()
        }
        "Core.read" => {
            let rel = str_arg(a, span)?;
            let path = match &ev.base_dir {
                Some(dir) => dir.join(rel),
                None => std::path::PathBuf::from(rel),
            };
            let text = std::fs::read_to_string(&path).map_err(|e| {
                Diagnostic::error(ErrorKind::Io, Some(span), format!("cannot read {}: {}", path.display(), e))
            })?;
            Value::str(&text)
        }
        "List.nth" => {
            let t = tuple_arg(a, 2, span)?;
            let items = list_arg(t[0], span)?;
            let i = int_arg(t[1], span)?;
            usize::try_from(i)
                .ok()
                .and_then(|i| items.get(i).cloned())
                .ok_or_else(|| lib_err(span, format!("List.nth: index {} is out of bounds for a list of length {}", i, items.len())))?
        }
        "List.length" => Value::Int(list_arg(a, span)?.len() as i32),
        "List.rev" => {
            let mut items = list_arg(a, span)?;
            items.reverse();
            Value::list(items)
        }
        "List.map" => {
            let items = list_arg(&args[1], span)?;
            let mut out = Vec::with_capacity(items.len());
            for x in items {
                out.push(ev.apply(a.clone(), x, span)?);
            }
            Value::list(out)
        }
        "List.filter" => {
            let items = list_arg(&args[1], span)?;
            let mut out = Vec::new();
            for x in items {
                let keep = ev.apply(a.clone(), x.clone(), span)?;
                if int_arg(&keep, span)? != 0 {
                    out.push(x);
                }
            }
            Value::list(out)
        }
        "List.foldl" | "List.foldr" => {
            let mut items = list_arg(&args[2], span)?;
            if name == "List.foldr" {
                items.reverse();
            }
            let mut acc = args[1].clone();
            for x in items {
                acc = ev.apply(a.clone(), Value::tuple(vec![x, acc]), span)?;
            }
            acc
        }
        "Int.toString" => Value::str(&a.to_string()),
        "String.size" => Value::Int(str_arg(a, span)?.chars().count() as i32),
        "String.substring" => {
            let t = tuple_arg(a, 3, span)?;
            let s: Vec<char> = str_arg(t[0], span)?.chars().collect();
            let (i, j) = (int_arg(t[1], span)?, int_arg(t[2], span)?);
            if i < 0 || j < i || j as usize > s.len() {
                return Err(lib_err(span, format!("String.substring: range {}..{} is out of bounds for length {}", i, j, s.len())));
            }
            Value::str(&s[i as usize..j as usize].iter().collect::<String>())
        }
        "String.concat" => {
            let mut out = String::new();
            for x in list_arg(a, span)? {
                out.push_str(str_arg(&x, span)?);
            }
            Value::str(&out)
        }
        "String.split" => {
            let s = str_arg(a, span)?;
            let delim = str_arg(&args[1], span)?;
            if delim.is_empty() {
                return Err(lib_err(span, "String.split: empty delimiter"));
            }
            Value::list(s.split(delim).map(Value::str).collect())
        }
        "Real.floor" => real_to_int(real_arg(a, span)?.floor(), span)?,
        "Real.ceil" => real_to_int(real_arg(a, span)?.ceil(), span)?,
        "Real.round" => real_to_int(real_arg(a, span)?.round(), span)?,
        "Real.fromInt" => Value::Real(int_arg(a, span)? as f64),
        "Real.toString" => Value::str(&fmt_real(real_arg(a, span)?)),
        "Array.toList" => {
            let n = unwrap_hw(ev, a, span)?;
            let xs = ev.builder.elems(n).map_err(|m| lib_err(span, m))?;
            Value::list(xs.into_iter().map(|x| Value::SwWrap(Rc::new(Value::Hw(x)))).collect())
        }
        "Array.fromList" => {
            let mut nodes = Vec::new();
            for x in list_arg(a, span)? {
                nodes.push(unwrap_hw(ev, &x, span)?);
            }
            let arr = ev.builder.array(nodes).map_err(|m| Diagnostic::error(ErrorKind::Type, Some(span), m))?;
            Value::SwWrap(Rc::new(Value::Hw(arr)))
        }
        other => return Err(Diagnostic::error(ErrorKind::Internal, Some(span), format!("unknown built-in `{}`", other))),
    })
}

/// Stand-alone two's-complement circuit of the given width with input `x`.
pub fn twos_complement_module(width: u32) -> Netlist {
    let mut b = NetBuilder::new();
    let x = b.pin("x", HType::bits(width));
    let out = twos_complement(&mut b, x).expect("bit array input");
    b.finish(out).compact()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::infer_source;
    use crate::types::render;

    #[test]
    fn signatures_render_as_listed() {
        let mut inf = Infer::new();
        for (name, sig) in SIGNATURES {
            let t = signature_type(&mut inf, sig);
            assert_eq!(render(&t), sig.replace('`', "'"), "{}", name);
        }
    }

    fn run(src: &str) -> Result<String, Diagnostic> {
        let (e, _, inf) = infer_source(src).unwrap();
        assert!(inf.diags.iter().all(|d| !d.is_error()), "{:?}", inf.diags);
        let mut ev = Evaluator::new();
        let v = ev.eval(&e, &Evaluator::initial_env())?;
        Ok(v.to_string())
    }

    #[test]
    fn host_functions() {
        assert_eq!(run("List.rev [1, 2, 3]").unwrap(), "[3, 2, 1]");
        assert_eq!(run("Real.floor 3.7").unwrap(), "3");
        assert_eq!(run("Real.round 2.5").unwrap(), "3");
        assert_eq!(run("Real.round ~2.5").unwrap(), "~3");
        assert_eq!(run("List.nth([1], 5)").unwrap_err().kind, ErrorKind::Library);
        assert_eq!(run("String.substring(\"hello\", 1, 3)").unwrap(), "\"el\"");
        assert_eq!(run("String.split \"a,,b\" \",\"").unwrap(), "[\"a\", \"\", \"b\"]");
        assert_eq!(run("String.concat [\"a\", \"b\"]").unwrap(), "\"ab\"");
        assert_eq!(run("Int.toString ~12").unwrap(), "\"~12\"");
        assert_eq!(run("let fun sub (x, acc) = x - acc in List.foldl sub 0 [1, 2, 3] end").unwrap(), "2");
        assert_eq!(run("let fun sub (x, acc) = x - acc in List.foldr sub 0 [1, 2, 3] end").unwrap(), "2");
        assert_eq!(run("let fun odd x = x % 2 in List.filter odd [1, 2, 3] end").unwrap(), "[1, 3]");
        assert_eq!(run("List.length [4, 5]").unwrap(), "2");
        assert_eq!(run("Real.toString (Real.fromInt 2)").unwrap(), "\"2.0\"");
    }
}
