//! Two-valued netlist simulation, a reader for the emitted Verilog subset,
//! and exhaustive equivalence checking.
//!
//! Values of every port and node use the flat bit layout of record lowering:
//! array element 0 in the lowest bits, record field 1 in the highest.

use crate::diag::{Diagnostic, ErrorKind};
use crate::hw::{field_offsets, hw_typecheck, untimed, width, GateOp, Netlist, Node, NodeId, Port};
use crate::types::HType;
use rayon::prelude::*;
use std::collections::HashMap;

/// Bits, least significant first.
pub type Bits = Vec<u8>;

pub const MAX_EQUIV_BITS: u32 = 20;

#[derive(Clone, Debug)]
enum Op {
    Const(usize, u8),
    Gate(GateOp, Vec<usize>, usize),
    Not(usize, usize),
}

/// A netlist compiled to straight-line bit operations over numbered slots.
#[derive(Clone, Debug)]
pub struct Program {
    nslots: usize,
    ops: Vec<Op>,
    pins: Vec<Vec<usize>>,
    out: Vec<usize>,
    /// Register slots and the slots they load on each clock edge.
    delays: Vec<(Vec<usize>, Vec<usize>)>,
    pub port_widths: Vec<u32>,
}

fn sim_error(msg: impl Into<String>) -> Diagnostic {
    Diagnostic::error(ErrorKind::Type, None, msg)
}

impl Program {
    pub fn compile(n: &Netlist) -> Result<Program, Diagnostic> {
        let types = hw_typecheck(n)?;
        let mut nslots = 0;
        let mut alloc = |k: u32| {
            let v: Vec<usize> = (nslots..nslots + k as usize).collect();
            nslots += k as usize;
            v
        };
        let pins: Vec<Vec<usize>> = n.inputs.iter().map(|p| alloc(width(&p.ty))).collect();
        let order = n.topo_order();
        let mut bits: HashMap<NodeId, Vec<usize>> = HashMap::new();
        for id in &order {
            if matches!(n.nodes[*id], Node::Delay(_)) {
                bits.insert(*id, alloc(width(&types[id])));
            }
        }
        let mut ops = Vec::new();
        for id in &order {
            let b = match &n.nodes[*id] {
                Node::Const(v) => {
                    let s = alloc(1);
                    ops.push(Op::Const(s[0], *v));
                    s
                }
                Node::Pin(p) => pins[*p].clone(),
                Node::Gate(op, xs) => {
                    let s = alloc(1);
                    ops.push(Op::Gate(*op, xs.iter().map(|x| bits[x][0]).collect(), s[0]));
                    s
                }
                Node::Not(x) => {
                    let s = alloc(1);
                    ops.push(Op::Not(bits[x][0], s[0]));
                    s
                }
                Node::Array(xs) => xs.iter().flat_map(|x| bits[x].clone()).collect(),
                Node::Record(fs) => fs.iter().rev().flat_map(|(_, x)| bits[x].clone()).collect(),
                Node::Index(x, i) => {
                    let ew = width(&types[id]) as usize;
                    let i = *i as usize;
                    bits[x][i * ew..(i + 1) * ew].to_vec()
                }
                Node::Field(x, l) => {
                    let HType::Record(fs) = untimed(&types[x]).0 else {
                        return Err(sim_error("field read from a non-record"));
                    };
                    let k = fs.iter().position(|(f, _)| f == l).ok_or_else(|| sim_error("missing field"))?;
                    let off = field_offsets(fs)[k] as usize;
                    let w = width(&fs[k].1) as usize;
                    bits[x][off..off + w].to_vec()
                }
                Node::Delay(_) => continue,
            };
            bits.insert(*id, b);
        }
        let delays = order
            .iter()
            .filter_map(|id| match &n.nodes[*id] {
                Node::Delay(x) => Some((bits[id].clone(), bits[x].clone())),
                _ => None,
            })
            .collect();
        Ok(Program {
            nslots,
            ops,
            pins,
            out: bits[&n.output].clone(),
            delays,
            port_widths: n.inputs.iter().map(|p| width(&p.ty)).collect(),
        })
    }

    pub fn output_width(&self) -> usize {
        self.out.len()
    }

    pub fn is_sequential(&self) -> bool {
        !self.delays.is_empty()
    }
}

/// Simulation state over a compiled program; registers start at zero.
pub struct Sim<'p> {
    prog: &'p Program,
    slots: Vec<u8>,
}

impl<'p> Sim<'p> {
    pub fn new(prog: &'p Program) -> Sim<'p> {
        Sim { prog, slots: vec![0; prog.nslots] }
    }

    pub fn reset(&mut self) {
        self.slots.iter_mut().for_each(|s| *s = 0);
    }

    /// One clock cycle: combinational settle with the given port values, output, then clock edge.
    pub fn step(&mut self, inputs: &[Bits]) -> Bits {
        for (pin, v) in self.prog.pins.iter().zip(inputs) {
            for (s, b) in pin.iter().zip(v) {
                self.slots[*s] = *b & 1;
            }
        }
        self.settle();
        let out = self.prog.out.iter().map(|s| self.slots[*s]).collect();
        self.clock();
        out
    }

    /// Like [`Sim::step`] with ports packed into integers.
    pub fn step_packed(&mut self, inputs: &[u64]) -> u64 {
        for (pin, v) in self.prog.pins.iter().zip(inputs) {
            for (i, s) in pin.iter().enumerate() {
                self.slots[*s] = if i < 64 { ((v >> i) & 1) as u8 } else { 0 };
            }
        }
        self.settle();
        let out = self.prog.out.iter().enumerate().fold(0u64, |acc, (i, s)| acc | ((self.slots[*s] as u64) << i.min(63)));
        self.clock();
        out
    }

    fn settle(&mut self) {
        for op in &self.prog.ops {
            match op {
                Op::Const(s, v) => self.slots[*s] = *v,
                Op::Gate(g, xs, s) => self.slots[*s] = g.apply(xs.iter().map(|x| self.slots[*x])),
                Op::Not(x, s) => self.slots[*s] = 1 - self.slots[*x],
            }
        }
    }

    fn clock(&mut self) {
        let loaded: Vec<Vec<u8>> =
            self.prog.delays.iter().map(|(_, src)| src.iter().map(|s| self.slots[*s]).collect()).collect();
        for ((reg, _), vals) in self.prog.delays.iter().zip(loaded) {
            for (s, v) in reg.iter().zip(vals) {
                self.slots[*s] = v;
            }
        }
    }
}

/// Runs the netlist for one cycle per stimulus row, ports in declaration order.
pub fn simulate(n: &Netlist, cycles: &[Vec<Bits>]) -> Result<Vec<Bits>, Diagnostic> {
    let prog = Program::compile(n)?;
    let mut sim = Sim::new(&prog);
    cycles
        .iter()
        .map(|row| {
            if row.len() != n.inputs.len() {
                return Err(sim_error(format!("expected {} input values, found {}", n.inputs.len(), row.len())));
            }
            for ((v, p), w) in row.iter().zip(&n.inputs).zip(&prog.port_widths) {
                if v.len() != *w as usize {
                    return Err(sim_error(format!("input `{}` is {} bits wide, given {}", p.name, w, v.len())));
                }
            }
            Ok(sim.step(row))
        })
        .collect()
}

/// Simulation driven by port name; every port must be given.
pub fn simulate_named(n: &Netlist, inputs: &HashMap<String, Bits>, cycles: usize) -> Result<Vec<Bits>, Diagnostic> {
    for name in inputs.keys() {
        if !n.inputs.iter().any(|p| &p.name == name) {
            return Err(sim_error(format!("unknown input `{}`", name)));
        }
    }
    let row = n
        .inputs
        .iter()
        .map(|p| inputs.get(&p.name).cloned().ok_or_else(|| sim_error(format!("no value given for input `{}`", p.name))))
        .collect::<Result<Vec<_>, _>>()?;
    simulate(n, &vec![row; cycles.max(1)])
}

pub fn bits_from_u64(v: u64, w: usize) -> Bits {
    (0..w).map(|i| if i < 64 { ((v >> i) & 1) as u8 } else { 0 }).collect()
}

pub fn bits_to_u64(b: &[u8]) -> u64 {
    b.iter().enumerate().take(64).fold(0, |acc, (i, x)| acc | ((*x as u64) << i))
}

/// `0b` literal, most significant bit first.
pub fn format_bits(b: &[u8]) -> String {
    if b.is_empty() {
        return "0b".into();
    }
    format!("0b{}", b.iter().rev().map(|x| if *x == 1 { '1' } else { '0' }).collect::<String>())
}

/// Parses `0b101`, `0x1f` or a decimal into exactly `w` bits.
pub fn parse_bits(s: &str, w: usize) -> Result<Bits, String> {
    let s = s.trim().replace('_', "");
    let bits: Bits = if let Some(b) = s.strip_prefix("0b") {
        if b.is_empty() || !b.chars().all(|c| c == '0' || c == '1') {
            return Err(format!("malformed binary literal `{}`", s));
        }
        b.chars().rev().map(|c| (c == '1') as u8).collect()
    } else {
        let v = if let Some(h) = s.strip_prefix("0x") { u64::from_str_radix(h, 16) } else { s.parse::<u64>() };
        let v = v.map_err(|_| format!("malformed literal `{}`", s))?;
        bits_from_u64(v, 64)
    };
    if bits.iter().skip(w).any(|b| *b == 1) {
        return Err(format!("value {} does not fit in {} bits", s, w));
    }
    Ok((0..w).map(|i| bits.get(i).copied().unwrap_or(0)).collect())
}

/// Cycles compared per input assignment; sequential designs hold the inputs for several edges.
fn equiv_cycles(a: &Program, b: &Program) -> usize {
    if a.is_sequential() || b.is_sequential() {
        4
    } else {
        1
    }
}

/// First input assignment (ports packed, declaration order) on which the outputs differ.
pub fn find_counterexample(n1: &Netlist, n2: &Netlist) -> Result<Option<Vec<u64>>, Diagnostic> {
    let (p1, p2) = (Program::compile(n1)?, Program::compile(n2)?);
    if p1.port_widths != p2.port_widths {
        return Err(sim_error(format!("port widths differ: {:?} vs {:?}", p1.port_widths, p2.port_widths)));
    }
    if p1.output_width() != p2.output_width() {
        return Ok(Some(vec![]));
    }
    let total: u32 = p1.port_widths.iter().sum();
    if total > MAX_EQUIV_BITS {
        return Err(Diagnostic::error(
            ErrorKind::Unsupported,
            None,
            format!("{} input bits exceed the exhaustive limit of {}", total, MAX_EQUIV_BITS),
        ));
    }
    let cycles = equiv_cycles(&p1, &p2);
    let widths = p1.port_widths.clone();
    let unpack = |v: u64| -> Vec<u64> {
        let mut shift = 0;
        widths
            .iter()
            .map(|w| {
                let x = (v >> shift) & ((1u64 << w) - 1);
                shift += w;
                x
            })
            .collect()
    };
    let bad = (0..1u64 << total).into_par_iter().map_init(
        || (Sim::new(&p1), Sim::new(&p2)),
        |(s1, s2), v| {
            s1.reset();
            s2.reset();
            let ins = unpack(v);
            let differs = (0..cycles).any(|_| s1.step_packed(&ins) != s2.step_packed(&ins));
            differs.then_some(v)
        },
    );
    Ok(bad.flatten().min().map(unpack))
}

/// True iff both netlists produce the same outputs on every input assignment.
pub fn exhaustive_equiv(n1: &Netlist, n2: &Netlist) -> Result<bool, Diagnostic> {
    Ok(find_counterexample(n1, n2)?.is_none())
}

// ----------------------------------------------------------------------
// Verilog subset reader

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(u32),
    BitLit(u8),
    Sym(&'static str),
}

fn read_error(line: usize, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::error(ErrorKind::Parse, None, format!("verilog line {}: {}", line, msg.into()))
}

fn lex_verilog(text: &str) -> Result<Vec<(Tok, usize)>, Diagnostic> {
    let cs: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut line = 1;
    let mut out = Vec::new();
    const SYMS: &[&str] = &["<=", "(", ")", "[", "]", ":", ";", ",", "@", "*", "&", "|", "^", "!"];
    while i < cs.len() {
        let c = cs[i];
        if c == '\n' {
            line += 1;
            i += 1;
        } else if c.is_whitespace() {
            i += 1;
        } else if c == '/' && cs.get(i + 1) == Some(&'/') {
            while i < cs.len() && cs[i] != '\n' {
                i += 1;
            }
        } else if c == '/' && cs.get(i + 1) == Some(&'*') {
            i += 2;
            while i + 1 < cs.len() && !(cs[i] == '*' && cs[i + 1] == '/') {
                if cs[i] == '\n' {
                    line += 1;
                }
                i += 1;
            }
            i += 2;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let s = i;
            while i < cs.len() && (cs[i].is_ascii_alphanumeric() || cs[i] == '_' || cs[i] == '$') {
                i += 1;
            }
            out.push((Tok::Ident(cs[s..i].iter().collect()), line));
        } else if c.is_ascii_digit() {
            let s = i;
            while i < cs.len() && cs[i].is_ascii_digit() {
                i += 1;
            }
            let n: String = cs[s..i].iter().collect();
            if cs.get(i) == Some(&'\'') {
                if n != "1" || cs.get(i + 1) != Some(&'b') || !matches!(cs.get(i + 2), Some('0' | '1')) {
                    return Err(read_error(line, "only 1'b0 and 1'b1 literals are supported"));
                }
                out.push((Tok::BitLit((cs[i + 2] == '1') as u8), line));
                i += 3;
            } else {
                out.push((Tok::Num(n.parse().map_err(|_| read_error(line, "number too large"))?), line));
            }
        } else {
            let rest: String = cs[i..(i + 2).min(cs.len())].iter().collect();
            match SYMS.iter().find(|s| rest.starts_with(**s)) {
                Some(s) => {
                    out.push((Tok::Sym(s), line));
                    i += s.len();
                }
                None => return Err(read_error(line, format!("unexpected character `{}`", c))),
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
enum Operand {
    Name(String, Option<(u32, u32)>),
    Lit(u8),
    Not(Box<Operand>),
    Group(Box<VExpr>),
}

#[derive(Clone, Debug)]
struct VExpr {
    op: Option<GateOp>,
    items: Vec<Operand>,
}

#[derive(Clone, Debug)]
struct Assign {
    range: Option<(u32, u32)>,
    expr: VExpr,
    clocked: bool,
    line: usize,
}

struct Reader {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Reader {
    fn line(&self) -> usize {
        self.toks.get(self.pos).or(self.toks.last()).map(|t| t.1).unwrap_or(0)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn next(&mut self) -> Result<Tok, Diagnostic> {
        let t = self.toks.get(self.pos).map(|t| t.0.clone()).ok_or_else(|| read_error(self.line(), "unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn sym(&mut self, s: &str) -> Result<(), Diagnostic> {
        match self.next()? {
            Tok::Sym(x) if x == s => Ok(()),
            t => Err(read_error(self.line(), format!("expected `{}`, found {:?}", s, t))),
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(x)) if *x == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn keyword(&mut self, k: &str) -> Result<(), Diagnostic> {
        match self.next()? {
            Tok::Ident(x) if x == k => Ok(()),
            t => Err(read_error(self.line(), format!("expected `{}`, found {:?}", k, t))),
        }
    }

    fn is_keyword(&self, k: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(x)) if x == k)
    }

    fn ident(&mut self) -> Result<String, Diagnostic> {
        match self.next()? {
            Tok::Ident(x) => Ok(x),
            t => Err(read_error(self.line(), format!("expected a name, found {:?}", t))),
        }
    }

    fn num(&mut self) -> Result<u32, Diagnostic> {
        match self.next()? {
            Tok::Num(n) => Ok(n),
            t => Err(read_error(self.line(), format!("expected a number, found {:?}", t))),
        }
    }

    /// `[hi:lo]` or `[i]`, returned as (hi, lo).
    fn range(&mut self) -> Result<Option<(u32, u32)>, Diagnostic> {
        if !self.eat_sym("[") {
            return Ok(None);
        }
        let hi = self.num()?;
        let lo = if self.eat_sym(":") { self.num()? } else { hi };
        self.sym("]")?;
        if lo > hi {
            return Err(read_error(self.line(), "ascending ranges are not supported"));
        }
        Ok(Some((hi, lo)))
    }

    fn operand(&mut self) -> Result<Operand, Diagnostic> {
        match self.next()? {
            Tok::Sym("!") => Ok(Operand::Not(Box::new(self.operand()?))),
            Tok::Sym("(") => {
                let e = self.expr()?;
                self.sym(")")?;
                Ok(Operand::Group(Box::new(e)))
            }
            Tok::BitLit(b) => Ok(Operand::Lit(b)),
            Tok::Ident(n) => Ok(Operand::Name(n, self.range()?)),
            t => Err(read_error(self.line(), format!("unexpected {:?} in expression", t))),
        }
    }

    fn expr(&mut self) -> Result<VExpr, Diagnostic> {
        let mut items = vec![self.operand()?];
        let mut op = None;
        loop {
            let g = match self.peek() {
                Some(Tok::Sym("&")) => GateOp::And,
                Some(Tok::Sym("|")) => GateOp::Or,
                Some(Tok::Sym("^")) => GateOp::Xor,
                _ => break,
            };
            if op.is_some_and(|o| o != g) {
                return Err(read_error(self.line(), "mixed operators need parentheses"));
            }
            op = Some(g);
            self.pos += 1;
            items.push(self.operand()?);
        }
        Ok(VExpr { op, items })
    }
}

#[derive(Default)]
struct Design {
    inputs: Vec<(String, u32, bool)>,
    out_width: u32,
    out_scalar: bool,
    regs: HashMap<String, (u32, bool)>,
    assigns: HashMap<String, Vec<Assign>>,
}

fn parse_design(text: &str) -> Result<(String, Design), Diagnostic> {
    let mut r = Reader { toks: lex_verilog(text)?, pos: 0 };
    let mut d = Design::default();
    r.keyword("module")?;
    let name = r.ident()?;
    r.sym("(")?;
    let mut have_out = false;
    let mut has_clk = false;
    loop {
        let dir = r.ident()?;
        match dir.as_str() {
            "input" => {
                let rg = r.range()?;
                let n = r.ident()?;
                if n == "clk" && rg.is_none() {
                    has_clk = true;
                } else {
                    let (w, scalar) = range_width(rg, r.line())?;
                    d.inputs.push((n, w, scalar));
                }
            }
            "output" => {
                r.keyword("reg")?;
                let rg = r.range()?;
                let n = r.ident()?;
                if n != "out" || have_out {
                    return Err(read_error(r.line(), "exactly one output named `out` is supported"));
                }
                have_out = true;
                let (w, scalar) = range_width(rg, r.line())?;
                d.out_width = w;
                d.out_scalar = scalar;
            }
            other => return Err(read_error(r.line(), format!("unsupported port direction `{}`", other))),
        }
        if r.eat_sym(")") {
            break;
        }
        r.sym(",")?;
    }
    r.sym(";")?;
    if !have_out {
        return Err(read_error(r.line(), "module has no output `out`"));
    }
    d.regs.insert("out".into(), (d.out_width, d.out_scalar));
    loop {
        if r.is_keyword("endmodule") {
            r.pos += 1;
            break;
        }
        if r.is_keyword("reg") {
            r.pos += 1;
            let rg = r.range()?;
            let (w, scalar) = range_width(rg, r.line())?;
            loop {
                let n = r.ident()?;
                d.regs.insert(n, (w, scalar));
                if r.eat_sym(";") {
                    break;
                }
                r.sym(",")?;
            }
            continue;
        }
        r.keyword("always")?;
        r.sym("@")?;
        r.sym("(")?;
        let clocked = if r.eat_sym("*") {
            false
        } else {
            r.keyword("posedge")?;
            r.keyword("clk")?;
            if !has_clk {
                return Err(read_error(r.line(), "clocked block without a clk input"));
            }
            true
        };
        r.sym(")")?;
        r.keyword("begin")?;
        while !r.is_keyword("end") {
            let line = r.line();
            let target = r.ident()?;
            let range = r.range()?;
            r.sym("<=")?;
            let expr = r.expr()?;
            r.sym(";")?;
            if !d.regs.contains_key(&target) {
                return Err(read_error(line, format!("assignment to undeclared `{}`", target)));
            }
            d.assigns.entry(target).or_default().push(Assign { range, expr, clocked, line });
        }
        r.keyword("end")?;
    }
    if r.pos != r.toks.len() {
        return Err(read_error(r.line(), "text after endmodule"));
    }
    Ok((name, d))
}

fn range_width(rg: Option<(u32, u32)>, line: usize) -> Result<(u32, bool), Diagnostic> {
    match rg {
        None => Ok((1, true)),
        Some((hi, 0)) => Ok((hi + 1, false)),
        Some(_) => Err(read_error(line, "declared ranges must end at 0")),
    }
}

struct Builder<'d> {
    d: &'d Design,
    nodes: Vec<Node>,
    pins: HashMap<String, (NodeId, bool)>,
    /// Node driving each bit of each register.
    done: HashMap<(String, u32), NodeId>,
    busy: Vec<(String, u32)>,
    pending: Vec<(NodeId, String, u32)>,
}

impl Builder<'_> {
    fn push(&mut self, n: Node) -> NodeId {
        self.nodes.push(n);
        self.nodes.len() - 1
    }

    fn bit(&mut self, name: &str, i: u32, line: usize) -> Result<NodeId, Diagnostic> {
        if let Some((pin, scalar)) = self.pins.get(name).copied() {
            return Ok(if scalar { pin } else { self.push(Node::Index(pin, i)) });
        }
        let key = (name.to_string(), i);
        if let Some(n) = self.done.get(&key) {
            return Ok(*n);
        }
        if self.busy.contains(&key) {
            return Err(read_error(line, format!("combinational loop through `{}`", name)));
        }
        let (w, _) = *self.d.regs.get(name).ok_or_else(|| read_error(line, format!("undeclared `{}`", name)))?;
        if i >= w {
            return Err(read_error(line, format!("bit {} of `{}` is out of range", i, name)));
        }
        let d = self.d;
        let found = d.assigns.get(name).and_then(|asg| {
            asg.iter().rev().find_map(|a| {
                let (hi, lo) = a.range.unwrap_or((w - 1, 0));
                (lo <= i && i <= hi).then(|| (a, i - lo))
            })
        });
        let Some((a, k)) = found else {
            return Err(read_error(line, format!("bit {} of `{}` is never assigned", i, name)));
        };
        if a.clocked {
            let reg = self.push(Node::Delay(usize::MAX));
            self.done.insert(key, reg);
            self.pending.push((reg, name.to_string(), i));
            return Ok(reg);
        }
        self.busy.push(key.clone());
        let bits = self.expr(&a.expr, a.line)?;
        self.busy.pop();
        let n = *bits.get(k as usize).ok_or_else(|| read_error(a.line, format!("assignment to `{}` is too narrow", name)))?;
        self.done.insert(key, n);
        Ok(n)
    }

    fn width_of(&self, name: &str) -> Option<u32> {
        self.d.inputs.iter().find(|p| p.0 == name).map(|p| p.1).or_else(|| self.d.regs.get(name).map(|r| r.0))
    }

    fn operand(&mut self, o: &Operand, line: usize) -> Result<Vec<NodeId>, Diagnostic> {
        match o {
            Operand::Lit(b) => Ok(vec![self.push(Node::Const(*b))]),
            Operand::Not(x) => {
                let bits = self.operand(x, line)?;
                Ok(bits.into_iter().map(|b| self.push(Node::Not(b))).collect())
            }
            Operand::Group(e) => self.expr(e, line),
            Operand::Name(n, rg) => {
                let w = self.width_of(n).ok_or_else(|| read_error(line, format!("undeclared `{}`", n)))?;
                let (hi, lo) = rg.unwrap_or((w - 1, 0));
                if hi >= w {
                    return Err(read_error(line, format!("range of `{}` exceeds its width", n)));
                }
                (lo..=hi).map(|i| self.bit(n, i, line)).collect()
            }
        }
    }

    fn expr(&mut self, e: &VExpr, line: usize) -> Result<Vec<NodeId>, Diagnostic> {
        let parts = e.items.iter().map(|o| self.operand(o, line)).collect::<Result<Vec<_>, _>>()?;
        let Some(op) = e.op else { return Ok(parts.into_iter().next().unwrap()) };
        let w = parts[0].len();
        if parts.iter().any(|p| p.len() != w) {
            return Err(read_error(line, "operand widths differ"));
        }
        Ok((0..w).map(|i| self.push(Node::Gate(op, parts.iter().map(|p| p[i]).collect()))).collect())
    }
}

/// Reads a module in the emitted subset back into a netlist (clock port omitted).
pub fn read_emitted_verilog(text: &str) -> Result<(String, Netlist), Diagnostic> {
    let (name, d) = parse_design(text)?;
    let mut b = Builder { d: &d, nodes: Vec::new(), pins: HashMap::new(), done: HashMap::new(), busy: Vec::new(), pending: Vec::new() };
    let mut inputs = Vec::new();
    for (i, (n, w, scalar)) in d.inputs.iter().enumerate() {
        let pin = b.push(Node::Pin(i));
        b.pins.insert(n.clone(), (pin, *scalar));
        let ty = if *scalar { HType::Bit } else { HType::bits(*w) };
        inputs.push(Port { name: n.clone(), ty });
    }
    let out_bits = (0..d.out_width).map(|i| b.bit("out", i, 0)).collect::<Result<Vec<_>, _>>()?;
    while let Some((reg, name, i)) = b.pending.pop() {
        let a = d.assigns[&name]
            .iter()
            .rev()
            .find(|a| {
                let w = d.regs[&name].0;
                let (hi, lo) = a.range.unwrap_or((w - 1, 0));
                lo <= i && i <= hi
            })
            .unwrap();
        let (_, lo) = a.range.unwrap_or((d.regs[&name].0 - 1, 0));
        let bits = b.expr(&a.expr, a.line)?;
        let src = *bits.get((i - lo) as usize).ok_or_else(|| read_error(a.line, "clocked assignment is too narrow"))?;
        b.nodes[reg] = Node::Delay(src);
    }
    let output = if d.out_scalar { out_bits[0] } else { b.push(Node::Array(out_bits)) };
    let n = Netlist { nodes: b.nodes, inputs, output };
    hw_typecheck(&n)?;
    Ok((name, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hw::NetBuilder;

    const FIG15: &str = "module adder(input [1:0] a, input [1:0] b, output reg [1:0] out);
    reg r9, r13, r10, r12, r11, r2, r6, r8, r7, r3, r5, r4;
    reg [1:0] r1;

    always @(*) begin
        r4 <= a[1];
        r5 <= b[1];
        r3 <= r4 ^ r5;
        r7 <= a[0];
        r8 <= b[0];
        r6 <= r7 & r8;
        r2 <= r3 ^ r6; r11 <= a[0];
        r12 <= b[0];
        r10 <= r11 ^ r12; r13 <= 1'b0;
        r9 <= r10 ^ r13; r1[1] <= r2; r1[0] <= r9;
        out <= r1;
    end
endmodule
";

    #[test]
    fn reads_the_published_adder() {
        let (name, n) = read_emitted_verilog(FIG15).unwrap();
        assert_eq!(name, "adder");
        let prog = Program::compile(&n).unwrap();
        let mut sim = Sim::new(&prog);
        for a in 0..4u64 {
            for b in 0..4u64 {
                assert_eq!(sim.step_packed(&[a, b]), (a + b) % 4, "{} + {}", a, b);
            }
        }
    }

    #[test]
    fn rejects_constructs_outside_the_subset() {
        assert!(read_emitted_verilog("module m(input a, output reg out); assign out = a; endmodule").is_err());
        assert!(read_emitted_verilog("module m(input a, output reg out); always @(*) begin out <= a + a; end endmodule").is_err());
    }

    #[test]
    fn registers_start_at_zero_and_lag() {
        let mut b = NetBuilder::new();
        let x = b.pin("x", HType::Bit);
        let d1 = b.delay(x);
        let d2 = b.delay(d1);
        let n = b.finish(d2);
        let outs = simulate(&n, &[vec![vec![1]], vec![vec![0]], vec![vec![1]], vec![vec![1]]]).unwrap();
        assert_eq!(outs, vec![vec![0], vec![0], vec![1], vec![0]]);
    }

    #[test]
    fn equivalence() {
        let mk = |op: GateOp| {
            let mut b = NetBuilder::new();
            let x = b.pin("x", HType::Bit);
            let y = b.pin("y", HType::Bit);
            let g = b.gate(op, x, y).unwrap();
            b.finish(g)
        };
        assert!(exhaustive_equiv(&mk(GateOp::And), &mk(GateOp::And)).unwrap());
        assert!(!exhaustive_equiv(&mk(GateOp::And), &mk(GateOp::Or)).unwrap());
        let mut b = NetBuilder::new();
        let wide = b.pin("w", HType::bits(21));
        let n = b.finish(wide);
        assert!(exhaustive_equiv(&n, &n).is_err());
    }

    #[test]
    fn literals() {
        assert_eq!(parse_bits("0b10", 2).unwrap(), vec![0, 1]);
        assert_eq!(parse_bits("3", 2).unwrap(), vec![1, 1]);
        assert!(parse_bits("4", 2).is_err());
        assert_eq!(format_bits(&[1, 1, 0]), "0b011");
    }
}
