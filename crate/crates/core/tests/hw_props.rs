use gemini_core::codegen::emit;
use gemini_core::hw::{hw_typecheck, lower_records, GateOp, NetBuilder, Netlist, Node, NodeId};
use gemini_core::netsim::{exhaustive_equiv, read_emitted_verilog};
use gemini_core::types::HType;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::random_record_design;

/// Same circuit with node ids assigned along a random topological order.
fn renumber(n: &Netlist, seed: u64) -> (Netlist, Vec<NodeId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = n.nodes.len();
    let mut pending: Vec<usize> = n.nodes.iter().map(|x| x.inputs().len()).collect();
    let mut users = vec![Vec::new(); len];
    for (id, node) in n.nodes.iter().enumerate() {
        for x in node.inputs() {
            users[x].push(id);
        }
    }
    let mut ready: Vec<NodeId> = (0..len).filter(|i| pending[*i] == 0).collect();
    let mut order = Vec::with_capacity(len);
    while !ready.is_empty() {
        ready.shuffle(&mut rng);
        let id = ready.pop().unwrap();
        order.push(id);
        for &u in &users[id] {
            pending[u] -= 1;
            if pending[u] == 0 {
                ready.push(u);
            }
        }
    }
    assert_eq!(order.len(), len, "design has a cycle");
    let mut new_id = vec![0; len];
    for (i, old) in order.iter().enumerate() {
        new_id[*old] = i;
    }
    let nodes = order
        .iter()
        .map(|old| match &n.nodes[*old] {
            Node::Gate(op, xs) => Node::Gate(*op, xs.iter().map(|x| new_id[*x]).collect()),
            Node::Not(x) => Node::Not(new_id[*x]),
            Node::Array(xs) => Node::Array(xs.iter().map(|x| new_id[*x]).collect()),
            Node::Record(fs) => Node::Record(fs.iter().map(|(l, x)| (l.clone(), new_id[*x])).collect()),
            Node::Index(x, i) => Node::Index(new_id[*x], *i),
            Node::Field(x, l) => Node::Field(new_id[*x], l.clone()),
            Node::Delay(x) => Node::Delay(new_id[*x]),
            other => other.clone(),
        })
        .collect();
    (Netlist { nodes, inputs: n.inputs.clone(), output: new_id[n.output] }, new_id)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lowering_preserves_behaviour(seed in any::<u64>()) {
        let n = random_record_design(seed);
        let low = lower_records(&n).unwrap();
        prop_assert_eq!(low.compact().record_count(), 0);
        prop_assert!(exhaustive_equiv(&n, &low).unwrap());
    }

    #[test]
    fn typechecking_ignores_visit_order(seed in any::<u64>(), perm in any::<u64>()) {
        let n = random_record_design(seed);
        let first = hw_typecheck(&n).unwrap();
        prop_assert_eq!(&hw_typecheck(&n).unwrap(), &first);
        let (shuffled, map) = renumber(&n, perm);
        let second = hw_typecheck(&shuffled).unwrap();
        for (old, t) in &first {
            prop_assert_eq!(&second[&map[*old]], t);
        }
    }

    #[test]
    fn simulation_ignores_node_order(seed in any::<u64>(), perm in any::<u64>()) {
        let n = random_record_design(seed);
        let (shuffled, _) = renumber(&n, perm);
        prop_assert!(exhaustive_equiv(&n, &shuffled).unwrap());
    }

    #[test]
    fn emitted_verilog_reads_back_equivalent(seed in any::<u64>()) {
        let low = lower_records(&random_record_design(seed)).unwrap();
        let text = emit(&low, "design").unwrap();
        prop_assert_eq!(&emit(&low, "design").unwrap(), &text);
        let (name, back) = read_emitted_verilog(&text).map_err(|d| TestCaseError::fail(format!("{}\n{}", d, text)))?;
        prop_assert_eq!(name, "design");
        prop_assert!(exhaustive_equiv(&low, &back).unwrap(), "{}", text);
    }

    #[test]
    fn de_morgan(w in 1..9u32) {
        let mut b = NetBuilder::new();
        let (x, y) = (b.pin("a", HType::bits(w)), b.pin("b", HType::bits(w)));
        let and = b.gate(GateOp::And, x, y).unwrap();
        let lhs = b.not(and).unwrap();
        let left = b.finish(lhs);

        let mut b = NetBuilder::new();
        let (x, y) = (b.pin("a", HType::bits(w)), b.pin("b", HType::bits(w)));
        let (nx, ny) = (b.not(x).unwrap(), b.not(y).unwrap());
        let rhs = b.gate(GateOp::Or, nx, ny).unwrap();
        let right = b.finish(rhs);
        prop_assert!(exhaustive_equiv(&left, &right).unwrap());

        let mut b = NetBuilder::new();
        let (x, y) = (b.pin("a", HType::bits(w)), b.pin("b", HType::bits(w)));
        let wrong = b.gate(GateOp::Or, x, y).unwrap();
        prop_assert!(!exhaustive_equiv(&left, &b.finish(wrong)).unwrap());
    }
}
