use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gemini_bench::adder_source;
use gemini_core::codegen::emit;
use gemini_core::metatheory::{check_corpus, DEFAULT_FUEL};
use gemini_core::netsim::{exhaustive_equiv, read_emitted_verilog};
use gemini_core::pipeline::{compile, Options};

fn front_to_back(c: &mut Criterion) {
    let mut g = c.benchmark_group("compile_adder");
    for bits in [4, 16, 64] {
        let src = adder_source(bits);
        g.bench_with_input(BenchmarkId::from_parameter(bits), &src, |b, src| {
            b.iter(|| {
                let c = compile(src, "adder.gem", &Options::default()).unwrap();
                emit(&c.lowered, "adder").unwrap()
            })
        });
    }
    g.finish();
}

fn equivalence(c: &mut Criterion) {
    let lowered = compile(&adder_source(8), "adder.gem", &Options::default()).unwrap().lowered;
    let (_, back) = read_emitted_verilog(&emit(&lowered, "adder").unwrap()).unwrap();
    c.bench_function("exhaustive_equiv_adder8", |b| b.iter(|| assert!(exhaustive_equiv(&lowered, &back).unwrap())));
}

fn metatheory(c: &mut Criterion) {
    let mut g = c.benchmark_group("metatheory");
    g.sample_size(10);
    g.bench_function("corpus_100_depth6", |b| b.iter(|| assert!(check_corpus(0..100, 6, DEFAULT_FUEL).ok())));
    g.finish();
}

criterion_group!(benches, front_to_back, equivalence, metatheory);
criterion_main!(benches);
