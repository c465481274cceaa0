use gemini_core::netsim::{exhaustive_equiv, read_emitted_verilog, Program, Sim};
use gemini_core::pipeline::{compile, compile_to_verilog, Options};

fn program(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/programs/{}.gem", env!("CARGO_MANIFEST_DIR"), name)).unwrap()
}

fn opts(name: &str) -> Options {
    Options { module_name: name.into(), ..Options::default() }
}

#[test]
fn adder_adds() {
    let src = program("adder");
    let v = compile_to_verilog(&src, "adder.gem", &opts("adder")).unwrap();
    assert!(v.starts_with("module adder(input [1:0] a, input [1:0] b, output reg [1:0] out);\n"), "{}", v);
    let (_, n) = read_emitted_verilog(&v).unwrap();
    let prog = Program::compile(&n).unwrap();
    let mut sim = Sim::new(&prog);
    for a in 0..4u64 {
        for b in 0..4u64 {
            assert_eq!(sim.step_packed(&[a, b]), (a + b) % 4);
        }
    }
    let c = compile(&src, "adder.gem", &opts("adder")).unwrap();
    assert!(exhaustive_equiv(&c.lowered, &n).unwrap());
}

#[test]
fn explicit_logic_matches_its_formula() {
    let src = program("explicit_logic");
    let v = compile_to_verilog(&src, "explicit_logic.gem", &opts("mycircuit")).unwrap();
    assert!(v.starts_with("module mycircuit(input a, input b, input c, output reg out);\n"), "{}", v);
    let (_, n) = read_emitted_verilog(&v).unwrap();
    let prog = Program::compile(&n).unwrap();
    let mut sim = Sim::new(&prog);
    for bits in 0..8u64 {
        let (a, b, c) = (bits & 1, (bits >> 1) & 1, (bits >> 2) & 1);
        assert_eq!(sim.step_packed(&[a, b, c]), 1 - (c ^ (a & b)));
    }
}

#[test]
fn software_programs_are_rejected_as_top_level() {
    let r = compile(&program("canonical"), "canonical.gem", &Options::default());
    assert!(r.is_err());
}
