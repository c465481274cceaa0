//! Hardware netlists: construction with constant folding during staging,
//! hardware type checking, record lowering and the IR listing.

use crate::diag::{Diagnostic, ErrorKind};
use crate::types::{render_h, HType, Label, Size};
use std::collections::HashMap;
use std::fmt::Write;

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateOp {
    And,
    Or,
    Xor,
}

impl GateOp {
    pub fn name(self) -> &'static str {
        match self {
            GateOp::And => "AND",
            GateOp::Or => "OR",
            GateOp::Xor => "XOR",
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            GateOp::And => "&",
            GateOp::Or => "|",
            GateOp::Xor => "^",
        }
    }

    pub fn apply(self, bits: impl IntoIterator<Item = u8>) -> u8 {
        let mut it = bits.into_iter();
        let first = it.next().unwrap_or(self.identity());
        it.fold(first, |a, b| match self {
            GateOp::And => a & b,
            GateOp::Or => a | b,
            GateOp::Xor => a ^ b,
        })
    }

    pub fn identity(self) -> u8 {
        match self {
            GateOp::And => 1,
            GateOp::Or | GateOp::Xor => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShiftKind {
    Left,
    Right,
    Arith,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Const(u8),
    /// Whole input port, by position in the port list.
    Pin(usize),
    Gate(GateOp, Vec<NodeId>),
    Not(NodeId),
    Array(Vec<NodeId>),
    Record(Vec<(Label, NodeId)>),
    Index(NodeId, u32),
    Field(NodeId, Label),
    Delay(NodeId),
}

impl Node {
    /// Inputs of the node, delay edges included.
    pub fn inputs(&self) -> Vec<NodeId> {
        match self {
            Node::Const(_) | Node::Pin(_) => vec![],
            Node::Gate(_, xs) | Node::Array(xs) => xs.clone(),
            Node::Record(fs) => fs.iter().map(|(_, x)| *x).collect(),
            Node::Not(x) | Node::Index(x, _) | Node::Field(x, _) | Node::Delay(x) => vec![*x],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Port {
    pub name: String,
    pub ty: HType,
}

/// A staged circuit: nodes, input ports in declaration order and the output root.
#[derive(Clone, Debug, PartialEq)]
pub struct Netlist {
    pub nodes: Vec<Node>,
    pub inputs: Vec<Port>,
    pub output: NodeId,
}

/// Splits a type into its untimed part and its delay.
pub fn untimed(t: &HType) -> (&HType, u32) {
    match t {
        HType::Temporal(inner, Size::Known(n)) => (inner, *n),
        HType::Temporal(inner, _) => (inner, 0),
        other => (other, 0),
    }
}

/// Number of bits in the flat encoding of a concrete type.
pub fn width(t: &HType) -> u32 {
    match t {
        HType::Bit => 1,
        HType::Array(e, Size::Known(n)) => n * width(e),
        HType::Record(fs) => fs.iter().map(|(_, t)| width(t)).sum(),
        HType::Temporal(inner, _) => width(inner),
        _ => 0,
    }
}

pub fn contains_record(t: &HType) -> bool {
    match t {
        HType::Record(_) => true,
        HType::Array(e, _) | HType::Temporal(e, _) => contains_record(e),
        _ => false,
    }
}

/// Bit offset of each field: the first field occupies the highest bits.
pub fn field_offsets(fs: &[(Label, HType)]) -> Vec<u32> {
    let mut offs = vec![0; fs.len()];
    let mut acc = 0;
    for i in (0..fs.len()).rev() {
        offs[i] = acc;
        acc += width(&fs[i].1);
    }
    offs
}

fn same_shape(a: &HType, b: &HType) -> bool {
    untimed(a).0 == untimed(b).0
}

/// Incremental netlist construction used by staging; every node carries its type.
#[derive(Clone, Debug, Default)]
pub struct NetBuilder {
    pub nodes: Vec<Node>,
    pub types: Vec<HType>,
    pub inputs: Vec<Port>,
}

impl NetBuilder {
    pub fn new() -> NetBuilder {
        NetBuilder::default()
    }

    fn push(&mut self, n: Node, t: HType) -> NodeId {
        self.nodes.push(n);
        self.types.push(t);
        self.nodes.len() - 1
    }

    pub fn ty(&self, id: NodeId) -> &HType {
        &self.types[id]
    }

    pub fn constant(&mut self, b: u8) -> NodeId {
        self.push(Node::Const(b & 1), HType::Bit)
    }

    fn const_of(&self, id: NodeId) -> Option<u8> {
        match self.nodes[id] {
            Node::Const(b) => Some(b),
            _ => None,
        }
    }

    /// Constant bits of an array node, if every element is a constant.
    pub fn const_bits(&self, id: NodeId) -> Option<Vec<u8>> {
        match &self.nodes[id] {
            Node::Array(xs) => xs.iter().map(|x| self.const_of(*x)).collect(),
            Node::Const(b) => Some(vec![*b]),
            _ => None,
        }
    }

    pub fn pin(&mut self, name: &str, ty: HType) -> NodeId {
        self.inputs.push(Port { name: name.to_string(), ty: ty.clone() });
        let i = self.inputs.len() - 1;
        self.push(Node::Pin(i), ty)
    }

    /// Elements of an array-typed node.
    pub fn elems(&mut self, id: NodeId) -> Result<Vec<NodeId>, String> {
        if let Node::Array(xs) = &self.nodes[id] {
            return Ok(xs.clone());
        }
        let t = self.types[id].clone();
        let (inner, time) = untimed(&t);
        match inner {
            HType::Array(e, Size::Known(n)) => {
                let et = HType::temporal((**e).clone(), Size::Known(time));
                Ok((0..*n).map(|i| self.push(Node::Index(id, i), et.clone())).collect())
            }
            _ => Err(format!("expected a hardware array, found {}", render_h(&t))),
        }
    }

    pub fn index(&mut self, id: NodeId, i: i64) -> Result<NodeId, String> {
        let t = self.types[id].clone();
        let (inner, time) = untimed(&t);
        let n = match inner {
            HType::Array(_, Size::Known(n)) => *n,
            _ => return Err(format!("cannot index a value of type {}", render_h(&t))),
        };
        if i < 0 || i >= n as i64 {
            return Err(format!("index {} is out of range for an array of length {}", i, n));
        }
        if let Node::Array(xs) = &self.nodes[id] {
            return Ok(xs[i as usize]);
        }
        let HType::Array(e, _) = inner else { unreachable!() };
        let et = HType::temporal((**e).clone(), Size::Known(time));
        Ok(self.push(Node::Index(id, i as u32), et))
    }

    pub fn field(&mut self, id: NodeId, label: &str) -> Result<NodeId, String> {
        if let Node::Record(fs) = &self.nodes[id] {
            if let Some((_, x)) = fs.iter().find(|(l, _)| l == label) {
                return Ok(*x);
            }
        }
        let t = self.types[id].clone();
        let (inner, time) = untimed(&t);
        match inner {
            HType::Record(fs) => match fs.iter().find(|(l, _)| l == label) {
                Some((_, ft)) => {
                    let ft = HType::temporal(ft.clone(), Size::Known(time));
                    Ok(self.push(Node::Field(id, label.to_string()), ft))
                }
                None => Err(format!("type {} has no field `{}`", render_h(&t), label)),
            },
            _ => Err(format!("type {} has no field `{}`", render_h(&t), label)),
        }
    }

    pub fn array(&mut self, xs: Vec<NodeId>) -> Result<NodeId, String> {
        let et = match xs.first() {
            Some(x) => self.types[*x].clone(),
            None => HType::Bit,
        };
        for x in &xs[1.min(xs.len())..] {
            if !same_shape(&self.types[*x], &et) {
                return Err(format!(
                    "array elements must share one type: expected {}, found {}",
                    render_h(&et),
                    render_h(&self.types[*x])
                ));
            }
        }
        let n = xs.len() as u32;
        Ok(self.push(Node::Array(xs), HType::Array(Box::new(et), Size::Known(n))))
    }

    pub fn record(&mut self, fs: Vec<(Label, NodeId)>) -> NodeId {
        let t = HType::Record(fs.iter().map(|(l, x)| (l.clone(), self.types[*x].clone())).collect());
        self.push(Node::Record(fs), t)
    }

    /// Bit-level gate with constant folding; folds whole-constant inputs and
    /// AND/OR annihilators and identities.
    pub fn gate_bits(&mut self, op: GateOp, inputs: Vec<NodeId>) -> NodeId {
        let time = inputs.iter().map(|x| untimed(&self.types[*x]).1).max().unwrap_or(0);
        let rt = HType::temporal(HType::Bit, Size::Known(time));
        let consts: Vec<Option<u8>> = inputs.iter().map(|x| self.const_of(*x)).collect();
        if consts.iter().all(Option::is_some) {
            let v = op.apply(consts.into_iter().flatten());
            return self.push(Node::Const(v), rt);
        }
        let kept: Vec<NodeId> = match op {
            GateOp::And | GateOp::Or => {
                let absorbing = 1 - op.identity();
                if consts.contains(&Some(absorbing)) {
                    return self.push(Node::Const(absorbing), rt);
                }
                inputs.iter().zip(&consts).filter(|(_, c)| c.is_none()).map(|(x, _)| *x).collect()
            }
            GateOp::Xor => inputs,
        };
        match kept.len() {
            0 => self.push(Node::Const(op.identity()), rt),
            1 => kept[0],
            _ => self.push(Node::Gate(op, kept), rt),
        }
    }

    /// Binary gate recursing through arrays and records.
    pub fn gate(&mut self, op: GateOp, a: NodeId, b: NodeId) -> Result<NodeId, String> {
        let ta = self.types[a].clone();
        let tb = self.types[b].clone();
        match (untimed(&ta).0, untimed(&tb).0) {
            (HType::Bit, HType::Bit) => Ok(self.gate_bits(op, vec![a, b])),
            (HType::Array(..), HType::Array(..)) => {
                let xa = self.elems(a)?;
                let xb = self.elems(b)?;
                if xa.len() != xb.len() {
                    return Err(format!("operands of `{}` differ: {} vs {}", op.symbol(), render_h(&ta), render_h(&tb)));
                }
                let out = xa.into_iter().zip(xb).map(|(x, y)| self.gate(op, x, y)).collect::<Result<Vec<_>, _>>()?;
                self.array(out)
            }
            (HType::Record(fa), HType::Record(_)) => {
                let labels: Vec<Label> = fa.iter().map(|(l, _)| l.clone()).collect();
                let mut out = Vec::new();
                for l in labels {
                    let x = self.field(a, &l)?;
                    let y = self.field(b, &l)?;
                    out.push((l, self.gate(op, x, y)?));
                }
                Ok(self.record(out))
            }
            _ => Err(format!("operands of `{}` differ: {} vs {}", op.symbol(), render_h(&ta), render_h(&tb))),
        }
    }

    /// Bitwise negation recursing through arrays and records.
    pub fn not(&mut self, a: NodeId) -> Result<NodeId, String> {
        let t = self.types[a].clone();
        match untimed(&t).0 {
            HType::Bit => match self.const_of(a) {
                Some(b) => Ok(self.push(Node::Const(1 - b), t.clone())),
                None => Ok(self.push(Node::Not(a), t.clone())),
            },
            HType::Array(..) => {
                let xs = self.elems(a)?;
                let out = xs.into_iter().map(|x| self.not(x)).collect::<Result<Vec<_>, _>>()?;
                self.array(out)
            }
            HType::Record(fs) => {
                let labels: Vec<Label> = fs.iter().map(|(l, _)| l.clone()).collect();
                let mut out = Vec::new();
                for l in labels {
                    let x = self.field(a, &l)?;
                    out.push((l, self.not(x)?));
                }
                Ok(self.record(out))
            }
            _ => Err(format!("cannot negate a value of type {}", render_h(&t))),
        }
    }

    /// One n-ary gate over the elements of an array; aggregate elements reduce per position.
    pub fn reduce(&mut self, op: GateOp, a: NodeId) -> Result<NodeId, String> {
        let xs = self.elems(a)?;
        self.reduce_all(op, xs)
    }

    fn reduce_all(&mut self, op: GateOp, xs: Vec<NodeId>) -> Result<NodeId, String> {
        let Some(first) = xs.first() else { return Ok(self.constant(op.identity())) };
        let t = self.types[*first].clone();
        match untimed(&t).0 {
            HType::Bit => Ok(self.gate_bits(op, xs)),
            HType::Array(_, Size::Known(n)) => {
                let mut out = Vec::new();
                for i in 0..*n {
                    let col = xs.iter().map(|x| self.index(*x, i as i64)).collect::<Result<Vec<_>, _>>()?;
                    out.push(self.reduce_all(op, col)?);
                }
                self.array(out)
            }
            HType::Record(fs) => {
                let mut out = Vec::new();
                for (l, _) in fs {
                    let col = xs.iter().map(|x| self.field(*x, l)).collect::<Result<Vec<_>, _>>()?;
                    out.push((l.clone(), self.reduce_all(op, col)?));
                }
                Ok(self.record(out))
            }
            _ => Err(format!("cannot reduce elements of type {}", render_h(&t))),
        }
    }

    fn mux(&mut self, s: NodeId, x: NodeId, y: NodeId) -> NodeId {
        let ns = match self.const_of(s) {
            Some(b) => self.constant(1 - b),
            None => self.push(Node::Not(s), self.types[s].clone()),
        };
        let hi = self.gate_bits(GateOp::And, vec![s, x]);
        let lo = self.gate_bits(GateOp::And, vec![ns, y]);
        self.gate_bits(GateOp::Or, vec![hi, lo])
    }

    fn shift_const(&mut self, kind: ShiftKind, xs: &[NodeId], k: u64) -> Vec<NodeId> {
        let n = xs.len();
        let fill = match kind {
            ShiftKind::Arith if n > 0 => xs[n - 1],
            _ => self.constant(0),
        };
        (0..n)
            .map(|i| match kind {
                ShiftKind::Left => {
                    if (i as u64) < k {
                        fill
                    } else {
                        xs[i - k as usize]
                    }
                }
                ShiftKind::Right | ShiftKind::Arith => {
                    let j = i as u64 + k;
                    if j < n as u64 {
                        xs[j as usize]
                    } else {
                        fill
                    }
                }
            })
            .collect()
    }

    /// Shift of a bit array by an unsigned bit-array amount (index 0 least significant).
    pub fn shift(&mut self, kind: ShiftKind, a: NodeId, amount: NodeId) -> Result<NodeId, String> {
        let xs = self.elems(a)?;
        let amt = self.elems(amount)?;
        let consts: Option<Vec<u8>> = amt.iter().map(|x| self.const_of(*x)).collect();
        let out = match consts {
            Some(bits) => {
                let k = bits.iter().enumerate().fold(0u64, |acc, (i, b)| {
                    if *b == 1 && i < 63 {
                        acc | (1 << i)
                    } else if *b == 1 {
                        u64::MAX
                    } else {
                        acc
                    }
                });
                self.shift_const(kind, &xs, k)
            }
            None => {
                let mut cur = xs;
                for (j, s) in amt.iter().enumerate() {
                    let k = if j < 63 { 1u64 << j } else { u64::MAX };
                    let shifted = self.shift_const(kind, &cur, k);
                    cur = cur.iter().zip(shifted).map(|(y, x)| self.mux(*s, x, *y)).collect();
                }
                cur
            }
        };
        self.array(out)
    }

    pub fn delay(&mut self, a: NodeId) -> NodeId {
        let t = self.types[a].clone();
        let (inner, time) = untimed(&t);
        let dt = HType::temporal(inner.clone(), Size::Known(time + 1));
        self.push(Node::Delay(a), dt)
    }

    pub fn finish(self, output: NodeId) -> Netlist {
        Netlist { nodes: self.nodes, inputs: self.inputs, output }
    }
}

impl Netlist {
    /// Reachable nodes, inputs before users except along feedback through a delay.
    pub fn topo_order(&self) -> Vec<NodeId> {
        let mut state = vec![0u8; self.nodes.len()];
        let mut order = Vec::new();
        {
            let r = self.output;
            let mut stack = vec![(r, false)];
            while let Some((n, done)) = stack.pop() {
                if done {
                    if state[n] == 1 {
                        state[n] = 2;
                        order.push(n);
                    }
                    continue;
                }
                if state[n] != 0 {
                    continue;
                }
                state[n] = 1;
                stack.push((n, true));
                for x in self.nodes[n].inputs().into_iter().rev() {
                    if state[x] == 0 {
                        stack.push((x, false));
                    }
                }
            }
        }
        order
    }

    /// Copy holding only the nodes reachable from the output, renumbered in topological order.
    pub fn compact(&self) -> Netlist {
        let order = self.topo_order();
        let mut map = HashMap::new();
        for (i, n) in order.iter().enumerate() {
            map.insert(*n, i);
        }
        let m = |x: &NodeId| map[x];
        let nodes = order
            .iter()
            .map(|n| match &self.nodes[*n] {
                Node::Const(b) => Node::Const(*b),
                Node::Pin(i) => Node::Pin(*i),
                Node::Gate(op, xs) => Node::Gate(*op, xs.iter().map(m).collect()),
                Node::Not(x) => Node::Not(m(x)),
                Node::Array(xs) => Node::Array(xs.iter().map(m).collect()),
                Node::Record(fs) => Node::Record(fs.iter().map(|(l, x)| (l.clone(), m(x))).collect()),
                Node::Index(x, i) => Node::Index(m(x), *i),
                Node::Field(x, l) => Node::Field(m(x), l.clone()),
                Node::Delay(x) => Node::Delay(m(x)),
            })
            .collect();
        Netlist { nodes, inputs: self.inputs.clone(), output: map[&self.output] }
    }

    pub fn has_delay(&self) -> bool {
        self.topo_order().iter().any(|n| matches!(self.nodes[*n], Node::Delay(_)))
    }

    pub fn record_count(&self) -> usize {
        self.topo_order()
            .iter()
            .filter(|n| matches!(self.nodes[**n], Node::Record(_) | Node::Field(..)))
            .count()
    }
}

fn hw_error(msg: impl Into<String>) -> Diagnostic {
    Diagnostic::error(ErrorKind::HardwareType, None, msg)
}

/// Concrete hardware type of every reachable node.
pub fn hw_typecheck(n: &Netlist) -> Result<HashMap<NodeId, HType>, Diagnostic> {
    // Combinational cycles: DFS over non-delay edges.
    let mut color = vec![0u8; n.nodes.len()];
    for start in 0..n.nodes.len() {
        if color[start] != 0 {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        color[start] = 1;
        while let Some((v, i)) = stack.pop() {
            let succ = match &n.nodes[v] {
                Node::Delay(_) => vec![],
                node => node.inputs(),
            };
            if i < succ.len() {
                stack.push((v, i + 1));
                let w = succ[i];
                if w >= n.nodes.len() {
                    return Err(hw_error(format!("node n{} refers to missing node n{}", v, w)));
                }
                match color[w] {
                    0 => {
                        color[w] = 1;
                        stack.push((w, 0));
                    }
                    1 => return Err(hw_error("combinational cycle in netlist")),
                    _ => {}
                }
            } else {
                color[v] = 2;
            }
        }
    }
    let mut types: HashMap<NodeId, HType> = HashMap::new();
    for id in n.topo_order() {
        let get = |x: &NodeId| -> Result<HType, Diagnostic> {
            types.get(x).cloned().ok_or_else(|| {
                Diagnostic::error(ErrorKind::Unsupported, None, "feedback through a delay cannot be typed")
            })
        };
        let t = match &n.nodes[id] {
            Node::Const(b) => {
                if *b > 1 {
                    return Err(hw_error(format!("bit constant {} is not 0 or 1", b)));
                }
                HType::Bit
            }
            Node::Pin(i) => match n.inputs.get(*i) {
                Some(p) if p.ty.is_concrete() => p.ty.clone(),
                Some(p) => return Err(hw_error(format!("port `{}` has a non-concrete type {}", p.name, render_h(&p.ty)))),
                None => return Err(hw_error(format!("pin {} has no port", i))),
            },
            Node::Gate(op, xs) => {
                if xs.len() < 2 {
                    return Err(hw_error(format!("{} gate needs at least two inputs", op.name())));
                }
                let mut time = 0;
                for x in xs {
                    let t = get(x)?;
                    let (inner, tm) = untimed(&t);
                    if *inner != HType::Bit {
                        return Err(hw_error(format!("{} gate fed a {}", op.name(), render_h(&t))));
                    }
                    time = time.max(tm);
                }
                HType::temporal(HType::Bit, Size::Known(time))
            }
            Node::Not(x) => {
                let t = get(x)?;
                if *untimed(&t).0 != HType::Bit {
                    return Err(hw_error(format!("NOT gate fed a {}", render_h(&t))));
                }
                t
            }
            Node::Array(xs) => {
                let ts = xs.iter().map(get).collect::<Result<Vec<_>, _>>()?;
                let et = ts.first().cloned().unwrap_or(HType::Bit);
                if let Some(bad) = ts.iter().find(|t| !same_shape(t, &et)) {
                    return Err(hw_error(format!(
                        "array elements must share one type: {} vs {}",
                        render_h(&et),
                        render_h(bad)
                    )));
                }
                HType::Array(Box::new(et), Size::Known(xs.len() as u32))
            }
            Node::Record(fs) => {
                HType::Record(fs.iter().map(|(l, x)| Ok((l.clone(), get(x)?))).collect::<Result<Vec<_>, Diagnostic>>()?)
            }
            Node::Index(x, i) => {
                let t = get(x)?;
                let (inner, time) = untimed(&t);
                match inner {
                    HType::Array(e, Size::Known(len)) if i < len => HType::temporal((**e).clone(), Size::Known(time)),
                    HType::Array(_, Size::Known(len)) => {
                        return Err(Diagnostic::error(
                            ErrorKind::OutOfRange,
                            None,
                            format!("index {} is out of range for an array of length {}", i, len),
                        ))
                    }
                    _ => return Err(hw_error(format!("cannot index a value of type {}", render_h(&t)))),
                }
            }
            Node::Field(x, l) => {
                let t = get(x)?;
                let (inner, time) = untimed(&t);
                match inner {
                    HType::Record(fs) => match fs.iter().find(|(k, _)| k == l) {
                        Some((_, ft)) => HType::temporal(ft.clone(), Size::Known(time)),
                        None => return Err(hw_error(format!("type {} has no field `{}`", render_h(&t), l))),
                    },
                    _ => return Err(hw_error(format!("type {} has no field `{}`", render_h(&t), l))),
                }
            }
            Node::Delay(x) => {
                let t = get(x)?;
                let (inner, time) = untimed(&t);
                HType::temporal(inner.clone(), Size::Known(time + 1))
            }
        };
        types.insert(id, t);
    }
    Ok(types)
}

/// Flat bit-array type of the same width, keeping the delay.
fn flat_type(t: &HType) -> HType {
    let (inner, time) = untimed(t);
    HType::temporal(HType::array(HType::Bit, width(inner)), Size::Known(time))
}

struct Lowering<'a> {
    src: &'a Netlist,
    types: &'a HashMap<NodeId, HType>,
    out: Vec<Node>,
}

impl Lowering<'_> {
    fn push(&mut self, n: Node) -> NodeId {
        self.out.push(n);
        self.out.len() - 1
    }

    fn index(&mut self, x: NodeId, i: u32) -> NodeId {
        if let Node::Array(xs) = &self.out[x] {
            return xs[i as usize];
        }
        self.push(Node::Index(x, i))
    }

    /// Bits of a lowered node of (original) type `t`, least significant first.
    fn bits(&mut self, x: NodeId, t: &HType) -> Vec<NodeId> {
        let (inner, _) = untimed(t);
        match inner {
            HType::Bit => vec![x],
            HType::Array(e, Size::Known(n)) if !contains_record(inner) => {
                let mut out = Vec::new();
                for i in 0..*n {
                    let el = self.index(x, i);
                    out.extend(self.bits(el, e));
                }
                out
            }
            _ => (0..width(inner)).map(|j| self.index(x, j)).collect(),
        }
    }

    /// Value of type `t` read from `off` in a flat lowered node.
    fn rebuild(&mut self, flat: NodeId, off: u32, t: &HType) -> NodeId {
        let (inner, _) = untimed(t);
        match inner {
            HType::Bit => self.index(flat, off),
            HType::Array(e, Size::Known(n)) if !contains_record(inner) => {
                let w = width(e);
                let xs = (0..*n).map(|i| self.rebuild(flat, off + i * w, e)).collect();
                self.push(Node::Array(xs))
            }
            _ => {
                let xs = (0..width(inner)).map(|j| self.index(flat, off + j)).collect();
                self.push(Node::Array(xs))
            }
        }
    }
}

/// Replaces records by flat bit arrays; field reads become index reads.
pub fn lower_records(n: &Netlist) -> Result<Netlist, Diagnostic> {
    let types = hw_typecheck(n)?;
    let order = n.topo_order();
    let mut low = Lowering { src: n, types: &types, out: Vec::new() };
    let mut map: HashMap<NodeId, NodeId> = HashMap::new();
    // Delay inputs may come later in the order; reserve delay slots first.
    let mut pending_delays = Vec::new();
    for id in &order {
        let node = low.src.nodes[*id].clone();
        let t = low.types[id].clone();
        let flat = contains_record(&t);
        let new = match node {
            Node::Const(b) => low.push(Node::Const(b)),
            Node::Pin(i) => low.push(Node::Pin(i)),
            Node::Gate(op, xs) => {
                let ys = xs.iter().map(|x| map[x]).collect();
                low.push(Node::Gate(op, ys))
            }
            Node::Not(x) => low.push(Node::Not(map[&x])),
            Node::Array(xs) => {
                if flat {
                    let mut bits = Vec::new();
                    for x in &xs {
                        let xt = low.types[x].clone();
                        bits.extend(low.bits(map[x], &xt));
                    }
                    low.push(Node::Array(bits))
                } else {
                    let ys = xs.iter().map(|x| map[x]).collect();
                    low.push(Node::Array(ys))
                }
            }
            Node::Record(fs) => {
                let mut bits = Vec::new();
                for (_, x) in fs.iter().rev() {
                    let xt = low.types[x].clone();
                    bits.extend(low.bits(map[x], &xt));
                }
                low.push(Node::Array(bits))
            }
            Node::Index(x, i) => {
                let xt = low.types[&x].clone();
                if contains_record(&xt) {
                    let HType::Array(e, _) = untimed(&xt).0 else { unreachable!() };
                    let e = (**e).clone();
                    low.rebuild(map[&x], i * width(&e), &e)
                } else {
                    low.index(map[&x], i)
                }
            }
            Node::Field(x, l) => {
                let xt = low.types[&x].clone();
                let HType::Record(fs) = untimed(&xt).0 else { unreachable!() };
                let offs = field_offsets(fs);
                let k = fs.iter().position(|(f, _)| *f == l).unwrap();
                let ft = fs[k].1.clone();
                low.rebuild(map[&x], offs[k], &ft)
            }
            Node::Delay(x) => {
                let slot = low.push(Node::Delay(usize::MAX));
                pending_delays.push((slot, x));
                slot
            }
        };
        map.insert(*id, new);
    }
    for (slot, x) in pending_delays {
        low.out[slot] = Node::Delay(map[&x]);
    }
    let inputs = n
        .inputs
        .iter()
        .map(|p| Port { name: p.name.clone(), ty: if contains_record(&p.ty) { flat_type(&p.ty) } else { p.ty.clone() } })
        .collect();
    let out = Netlist { nodes: low.out, inputs, output: map[&n.output] };
    Ok(out.compact())
}

/// Output type of a netlist after type checking.
pub fn output_type(n: &Netlist) -> Result<HType, Diagnostic> {
    let types = hw_typecheck(n)?;
    Ok(types[&n.output].clone())
}

/// Listing of reachable nodes in topological order, e.g. `n7 = AND(n3, n4)`.
pub fn ir_text(n: &Netlist) -> String {
    let c = n.compact();
    let mut out = String::new();
    for p in &c.inputs {
        let _ = writeln!(out, "input {} : {}", p.name, render_h(&p.ty));
    }
    let r = |x: &NodeId| format!("n{}", x);
    for (i, node) in c.nodes.iter().enumerate() {
        let rhs = match node {
            Node::Const(b) => format!("CONST({})", b),
            Node::Pin(p) => format!("PIN({})", c.inputs[*p].name),
            Node::Gate(op, xs) => format!("{}({})", op.name(), xs.iter().map(r).collect::<Vec<_>>().join(", ")),
            Node::Not(x) => format!("NOT({})", r(x)),
            Node::Array(xs) => format!("ARRAY({})", xs.iter().map(r).collect::<Vec<_>>().join(", ")),
            Node::Record(fs) => {
                format!("RECORD({})", fs.iter().map(|(l, x)| format!("{}: {}", l, r(x))).collect::<Vec<_>>().join(", "))
            }
            Node::Index(x, k) => format!("INDEX({}, {})", r(x), k),
            Node::Field(x, l) => format!("FIELD({}, {})", r(x), l),
            Node::Delay(x) => format!("DELAY({})", r(x)),
        };
        let _ = writeln!(out, "n{} = {}", i, rhs);
    }
    let _ = writeln!(out, "out = n{}", c.output);
    out
}

/// A program must stage to a netlist whose output and ports are concrete hardware.
pub fn check_program_module(n: &Netlist) -> Result<(), Diagnostic> {
    for p in &n.inputs {
        if !p.ty.is_concrete() {
            return Err(Diagnostic::error(
                ErrorKind::NonModuleProgram,
                None,
                format!("port `{}` has a non-concrete type {}", p.name, render_h(&p.ty)),
            ));
        }
    }
    hw_typecheck(n).map(|_| ())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folding() {
        let mut b = NetBuilder::new();
        let z = b.constant(0);
        let o = b.constant(1);
        let x = b.pin("x", HType::Bit);
        let n = b.not(z).unwrap();
        assert_eq!(b.nodes[n], Node::Const(1));
        assert_eq!(b.gate(GateOp::And, x, z).map(|g| b.nodes[g].clone()), Ok(Node::Const(0)));
        assert_eq!(b.gate(GateOp::And, x, o), Ok(x));
        assert_eq!(b.gate(GateOp::Or, z, x), Ok(x));
        let g = b.gate(GateOp::Xor, x, z).unwrap();
        assert_eq!(b.nodes[g], Node::Gate(GateOp::Xor, vec![x, z]));
    }

    #[test]
    fn elementwise_and_reduction() {
        let mut b = NetBuilder::new();
        let bits = |b: &mut NetBuilder, v: &[u8]| {
            let xs = v.iter().map(|x| b.constant(*x)).collect();
            b.array(xs).unwrap()
        };
        let l = bits(&mut b, &[1, 0]);
        let r = bits(&mut b, &[1, 1]);
        let g = b.gate(GateOp::And, l, r).unwrap();
        assert_eq!(b.const_bits(g), Some(vec![1, 0]));
        let p = b.pin("p", HType::array(HType::Bit, 3));
        let red = b.reduce(GateOp::And, p).unwrap();
        assert!(matches!(&b.nodes[red], Node::Gate(GateOp::And, xs) if xs.len() == 3));
    }

    #[test]
    fn shifts_by_constants() {
        let mut b = NetBuilder::new();
        let mk = |b: &mut NetBuilder, v: &[u8]| {
            let xs = v.iter().map(|x| b.constant(*x)).collect();
            b.array(xs).unwrap()
        };
        // index 0 is the least significant bit: 0b1101
        let x = mk(&mut b, &[1, 0, 1, 1]);
        let one = mk(&mut b, &[1, 0]);
        let l = b.shift(ShiftKind::Left, x, one).unwrap();
        assert_eq!(b.const_bits(l), Some(vec![0, 1, 0, 1]));
        let r = b.shift(ShiftKind::Right, x, one).unwrap();
        assert_eq!(b.const_bits(r), Some(vec![0, 1, 1, 0]));
        let a = b.shift(ShiftKind::Arith, x, one).unwrap();
        assert_eq!(b.const_bits(a), Some(vec![0, 1, 1, 1]));
    }

    #[test]
    fn record_layout() {
        let t = HType::Record(vec![("a".into(), HType::array(HType::Bit, 2)), ("b".into(), HType::Bit)]);
        assert_eq!(width(&t), 3);
        let HType::Record(fs) = &t else { unreachable!() };
        assert_eq!(field_offsets(fs), vec![1, 0]);
    }

    #[test]
    fn typecheck_and_lowering() {
        let mut b = NetBuilder::new();
        let x = b.pin("x", HType::Bit);
        let y = b.pin("y", HType::Bit);
        let d = b.delay(y);
        let r = b.record(vec![("1".into(), x), ("2".into(), d)]);
        let n = b.finish(r);
        let types = hw_typecheck(&n).unwrap();
        assert_eq!(types[&d], HType::temporal(HType::Bit, Size::Known(1)));
        let low = lower_records(&n).unwrap();
        assert_eq!(low.record_count(), 0);
        // field 1 at the high index
        let Node::Array(xs) = &low.nodes[low.output] else { panic!() };
        assert_eq!(low.nodes[xs[1]], Node::Pin(0));
        assert!(matches!(low.nodes[xs[0]], Node::Delay(_)));
        let bad = Netlist { nodes: vec![Node::Gate(GateOp::And, vec![1, 0]), Node::Not(0)], inputs: vec![], output: 0 };
        assert!(hw_typecheck(&bad).is_err());
    }
}
