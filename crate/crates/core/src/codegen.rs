//! Verilog emission for lowered netlists.
//!
//! Emitted subset: one module header with `input`/`output reg` ports, `reg`
//! declarations, a single `always @(*)` block of nonblocking assignments and,
//! when the design has delays, an `always @(posedge clk)` block. Registers
//! updated on the clock start at zero in simulation.

use crate::diag::{Diagnostic, ErrorKind};
use crate::hw::{hw_typecheck, untimed, width, Netlist, Node, NodeId};
use crate::types::HType;
use std::collections::{HashMap, HashSet};
use std::fmt::Write;

const KEYWORDS: &[&str] = &[
    "always", "and", "assign", "begin", "case", "default", "else", "end", "endcase", "endmodule", "for", "function",
    "if", "initial", "inout", "input", "integer", "module", "nand", "negedge", "nor", "not", "or", "output",
    "parameter", "posedge", "reg", "wire", "xor", "xnor", "clk", "out",
];

/// Declaration fragment for a port or register of the given type.
pub fn render_width(t: &HType) -> String {
    match untimed(t).0 {
        HType::Bit => String::new(),
        other => format!("[{}:0]", width(other) as i64 - 1),
    }
}

fn is_wire_name(s: &str) -> bool {
    s.len() > 1 && s.starts_with('r') && s[1..].chars().all(|c| c.is_ascii_digit())
}

/// Port names made legal and distinct from keywords and generated wires.
pub fn port_names(n: &Netlist) -> Vec<String> {
    let mut used = HashSet::new();
    n.inputs
        .iter()
        .map(|p| {
            let mut s: String = p.name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
            if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit()) {
                s.insert(0, 'p');
            }
            if KEYWORDS.contains(&s.as_str()) || is_wire_name(&s) {
                s.push_str("_in");
            }
            while !used.insert(s.clone()) {
                s.push('_');
            }
            s
        })
        .collect()
}

fn internal(msg: impl Into<String>) -> Diagnostic {
    Diagnostic::error(ErrorKind::Internal, None, msg)
}

/// Emits a lowered netlist as one Verilog module.
pub fn emit(n: &Netlist, module_name: &str) -> Result<String, Diagnostic> {
    let n = n.compact();
    let types = hw_typecheck(&n)?;
    if n.record_count() > 0 {
        return Err(internal("records must be lowered before emission"));
    }
    let ports = port_names(&n);
    let w = |id: NodeId| width(&types[&id]);
    if w(n.output) == 0 {
        return Err(Diagnostic::error(ErrorKind::Unsupported, None, "the module output has zero width"));
    }

    // Names: pins use their port, every other node gets r1, r2, ... in pre-order from the output.
    let mut names: HashMap<NodeId, String> = HashMap::new();
    let mut post = Vec::new();
    let mut next = 1;
    let mut stack = vec![(n.output, false)];
    while let Some((id, done)) = stack.pop() {
        if done {
            post.push(id);
            continue;
        }
        if names.contains_key(&id) {
            continue;
        }
        let name = match &n.nodes[id] {
            Node::Pin(p) => ports[*p].clone(),
            _ => {
                let s = format!("r{}", next);
                next += 1;
                s
            }
        };
        names.insert(id, name);
        stack.push((id, true));
        for x in n.nodes[id].inputs().into_iter().rev() {
            if !names.contains_key(&x) {
                stack.push((x, false));
            }
        }
    }

    let mut comb = Vec::new();
    let mut seq = Vec::new();
    for id in &post {
        let me = &names[id];
        match &n.nodes[*id] {
            Node::Pin(_) => {}
            Node::Const(b) => comb.push(format!("{} <= 1'b{};", me, b)),
            Node::Gate(op, xs) => {
                let parts: Vec<&str> = xs.iter().map(|x| names[x].as_str()).collect();
                comb.push(format!("{} <= {};", me, parts.join(&format!(" {} ", op.symbol()))));
            }
            Node::Not(x) => comb.push(format!("{} <= !{};", me, names[x])),
            Node::Array(xs) => {
                let mut lo = 0;
                for x in xs {
                    let ew = w(*x);
                    if ew == 0 {
                        continue;
                    }
                    let target = if ew == 1 { format!("{}[{}]", me, lo) } else { format!("{}[{}:{}]", me, lo + ew - 1, lo) };
                    comb.push(format!("{} <= {};", target, names[x]));
                    lo += ew;
                }
            }
            Node::Index(x, i) => {
                let ew = w(*id);
                let lo = i * ew;
                let src = if ew == 1 { format!("{}[{}]", names[x], lo) } else { format!("{}[{}:{}]", names[x], lo + ew - 1, lo) };
                comb.push(format!("{} <= {};", me, src));
            }
            Node::Delay(x) => seq.push(format!("{} <= {};", me, names[x])),
            Node::Record(_) | Node::Field(..) => return Err(internal("records must be lowered before emission")),
        }
    }
    comb.push(format!("out <= {};", names[&n.output]));

    let mut header = Vec::new();
    if !seq.is_empty() {
        header.push("input clk".to_string());
    }
    for (p, name) in n.inputs.iter().zip(&ports) {
        let rw = render_width(&p.ty);
        header.push(if rw.is_empty() { format!("input {}", name) } else { format!("input {} {}", rw, name) });
    }
    let ow = render_width(&types[&n.output]);
    header.push(if ow.is_empty() { "output reg out".to_string() } else { format!("output reg {} out", ow) });

    let mut out = String::new();
    let _ = writeln!(out, "module {}({});", module_name, header.join(", "));
    let mut scalars = Vec::new();
    let mut ranged: Vec<(u32, String)> = Vec::new();
    let mut regs: Vec<(usize, NodeId)> = names
        .iter()
        .filter(|(id, _)| !matches!(n.nodes[**id], Node::Pin(_)))
        .map(|(id, s)| (s[1..].parse::<usize>().unwrap_or(0), *id))
        .collect();
    regs.sort();
    for (_, id) in regs {
        match untimed(&types[&id]).0 {
            HType::Bit => scalars.push(names[&id].clone()),
            t => {
                let tw = width(t);
                if tw > 0 {
                    ranged.push((tw, names[&id].clone()));
                }
            }
        }
    }
    if !scalars.is_empty() {
        let _ = writeln!(out, "  reg {};", scalars.join(", "));
    }
    for (tw, name) in ranged {
        let _ = writeln!(out, "  reg [{}:0] {};", tw - 1, name);
    }
    let _ = writeln!(out, "  always @(*) begin");
    for s in comb {
        let _ = writeln!(out, "    {}", s);
    }
    let _ = writeln!(out, "  end");
    if !seq.is_empty() {
        let _ = writeln!(out, "  always @(posedge clk) begin");
        for s in seq {
            let _ = writeln!(out, "    {}", s);
        }
        let _ = writeln!(out, "  end");
    }
    let _ = writeln!(out, "endmodule");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hw::NetBuilder;

    #[test]
    fn widths() {
        assert_eq!(render_width(&HType::Bit), "");
        assert_eq!(render_width(&HType::bits(2)), "[1:0]");
        assert_eq!(render_width(&HType::array(HType::bits(2), 3)), "[5:0]");
    }

    #[test]
    fn single_not() {
        let mut b = NetBuilder::new();
        let x = b.pin("x", HType::Bit);
        let y = b.not(x).unwrap();
        let v = emit(&b.finish(y), "inv").unwrap();
        assert!(v.starts_with("module inv(input x, output reg out);\n"), "{}", v);
        assert!(v.contains("    r1 <= !x;\n    out <= r1;\n"), "{}", v);
        assert!(!v.contains("clk"));
    }

    #[test]
    fn delays_add_a_clock() {
        let mut b = NetBuilder::new();
        let x = b.pin("x", HType::Bit);
        let y = b.delay(x);
        let v = emit(&b.finish(y), "d").unwrap();
        assert!(v.starts_with("module d(input clk, input x, output reg out);"), "{}", v);
        assert!(v.contains("always @(posedge clk) begin\n    r1 <= x;"), "{}", v);
    }

    #[test]
    fn reserved_port_names() {
        let mut b = NetBuilder::new();
        let x = b.pin("out", HType::Bit);
        let y = b.pin("r1", HType::Bit);
        let g = b.gate(crate::hw::GateOp::And, x, y).unwrap();
        let v = emit(&b.finish(g), "m").unwrap();
        assert!(v.starts_with("module m(input out_in, input r1_in, output reg out);"), "{}", v);
    }
}
