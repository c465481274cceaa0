//! Shared generators for integration tests.

use gemini_core::hw::{GateOp, NetBuilder, Netlist, NodeId};
use gemini_core::types::{HType, Size};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_type(rng: &mut ChaCha8Rng, max_bits: u32, depth: u32) -> (HType, u32) {
    let roll = if depth == 0 || max_bits < 2 { 0 } else { rng.gen_range(0..3) };
    match roll {
        0 => (HType::Bit, 1),
        1 => {
            let (e, w) = random_type(rng, max_bits / 2, depth - 1);
            let n = rng.gen_range(2..=(max_bits / w).max(2));
            (HType::Array(Box::new(e), Size::Known(n)), w * n)
        }
        _ => random_record(rng, max_bits, depth),
    }
}

fn random_record(rng: &mut ChaCha8Rng, max_bits: u32, depth: u32) -> (HType, u32) {
    let count = rng.gen_range(1..=3.min(max_bits));
    let mut fields = Vec::new();
    let mut used = 0;
    for i in 0..count {
        let room = max_bits - used - (count - i - 1);
        let (t, w) = random_type(rng, room.min(max_bits / count + 1), depth.saturating_sub(1));
        fields.push((["x", "y", "z"][i as usize].to_string(), t));
        used += w;
    }
    (HType::Record(fields), used)
}

/// A random design over record-typed ports; the output is itself a record.
pub fn random_record_design(seed: u64) -> Netlist {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = NetBuilder::new();
    let budget = rng.gen_range(3..=12u32);
    let (t, mut used) = random_record(&mut rng, budget, 2);
    let mut pool: Vec<NodeId> = vec![b.pin("p0", t)];
    while used < budget && rng.gen_bool(0.6) {
        let (t, w) = random_type(&mut rng, budget - used, 2);
        pool.push(b.pin(&format!("p{}", pool.len()), t));
        used += w;
    }
    for _ in 0..rng.gen_range(4..16) {
        let x = pool[rng.gen_range(0..pool.len())];
        let tx = b.ty(x).clone();
        let next = match rng.gen_range(0..6) {
            0 | 1 => match &tx {
                HType::Record(fs) => {
                    let l = fs[rng.gen_range(0..fs.len())].0.clone();
                    b.field(x, &l).ok()
                }
                HType::Array(_, Size::Known(n)) => b.index(x, rng.gen_range(0..*n as i64)).ok(),
                _ => b.not(x).ok(),
            },
            2 => {
                let same: Vec<NodeId> = pool.iter().copied().filter(|y| *b.ty(*y) == tx).collect();
                let y = same[rng.gen_range(0..same.len())];
                let op = [GateOp::And, GateOp::Or, GateOp::Xor][rng.gen_range(0..3)];
                b.gate(op, x, y).ok()
            }
            3 => b.not(x).ok(),
            4 => {
                let y = pool[rng.gen_range(0..pool.len())];
                Some(b.record(vec![("u".into(), x), ("v".into(), y)]))
            }
            _ => {
                if rng.gen_bool(0.3) {
                    Some(b.delay(x))
                } else {
                    b.array(vec![x, x]).ok()
                }
            }
        };
        pool.extend(next);
    }
    let k = rng.gen_range(1..=3.min(pool.len()));
    let fields = pool[pool.len() - k..].iter().enumerate().map(|(i, x)| ((i + 1).to_string(), *x)).collect();
    let out = b.record(fields);
    b.finish(out)
}
