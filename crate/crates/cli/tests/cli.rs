use gemini_core::netsim::read_emitted_verilog;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn program(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/programs").join(format!("{}.gem", name))
}

fn gemini(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gemini")).args(args).env("GEMINI_COLOR", "0").output().unwrap()
}

fn stage(dir: &Path, name: &str) -> PathBuf {
    let p = dir.join(format!("{}.gem", name));
    std::fs::copy(program(name), &p).unwrap();
    p
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn build_writes_verilog_next_to_the_source() {
    let dir = tempfile::tempdir().unwrap();
    let src = stage(dir.path(), "adder");
    let out = gemini(&["build", src.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let v = std::fs::read_to_string(dir.path().join("adder.v")).unwrap();
    assert!(v.starts_with("module adder(input [1:0] a, input [1:0] b, output reg [1:0] out);\n"));
    read_emitted_verilog(&v).unwrap();
}

#[test]
fn output_path_and_module_name() {
    let dir = tempfile::tempdir().unwrap();
    let src = stage(dir.path(), "explicit_logic");
    let dest = dir.path().join("custom.v");
    let out = gemini(&["build", src.to_str().unwrap(), "-o", dest.to_str().unwrap(), "--module-name", "top"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let (name, _) = read_emitted_verilog(&std::fs::read_to_string(&dest).unwrap()).unwrap();
    assert_eq!(name, "top");
    assert!(!dir.path().join("explicit_logic.v").exists());
}

#[test]
fn token_dump_writes_no_verilog() {
    let dir = tempfile::tempdir().unwrap();
    let src = stage(dir.path(), "adder");
    let out = gemini(&["build", src.to_str().unwrap(), "--emit", "tokens"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = text(&out.stdout);
    assert_eq!(stdout.lines().next(), Some("KEYWORD \"let\" @1:1"));
    assert!(!dir.path().join("adder.v").exists());
}

#[test]
fn every_stage_prints() {
    let src = program("adder");
    let src = src.to_str().unwrap();
    for (emit, needle) in [("ast", "(let "), ("typed-ast", "val numbits : int"), ("ir", "= PIN(a)"), ("ir-lowered", "= PIN(b)")] {
        let out = gemini(&["build", src, "--emit", emit, "-o", "/dev/stdout"]);
        assert_eq!(out.status.code(), Some(0), "{}: {}", emit, text(&out.stderr));
        assert!(text(&out.stdout).contains(needle), "{}: {}", emit, text(&out.stdout));
    }
}

#[test]
fn type_errors_exit_one_with_a_location() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.gem");
    std::fs::write(&bad, "42 * \"a\"\n").unwrap();
    let out = gemini(&["build", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = text(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{}", err);
    assert!(err.starts_with("error[E100]:"), "{}", err);
    assert!(err.trim_end().ends_with("bad.gem:1:6"), "{}", err);
    assert!(!err.contains('\x1b'));
    assert!(!dir.path().join("bad.v").exists());
}

#[test]
fn software_program_is_not_a_module() {
    let out = gemini(&["build", program("canonical").to_str().unwrap(), "-o", "/dev/null"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("error[E105]"));
}

#[test]
fn warnings_fail_only_under_werror() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("warn.gem");
    std::fs::write(
        &src,
        "let fun f x = case x of 0 => 1\nmodule m(a : bit) = if f 0 = 1 then !a else a\nin m end\n",
    )
    .unwrap();
    let p = src.to_str().unwrap();
    let plain = gemini(&["build", p]);
    assert_eq!(plain.status.code(), Some(0), "{}", text(&plain.stderr));
    assert!(text(&plain.stderr).contains("warning["), "{}", text(&plain.stderr));
    let strict = gemini(&["build", p, "--werror"]);
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = gemini(&["build", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("Usage"));
}

#[test]
fn missing_file_is_reported() {
    let out = gemini(&["build", "/nonexistent/x.gem"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("cannot read"));
}

#[test]
fn sim_source_and_emitted_verilog_agree() {
    let dir = tempfile::tempdir().unwrap();
    let src = stage(dir.path(), "adder");
    let from_src = gemini(&["sim", src.to_str().unwrap(), "--inputs", "a=0b10,b=0b01"]);
    assert_eq!(text(&from_src.stdout), "out=0b11\n", "{}", text(&from_src.stderr));
    assert_eq!(gemini(&["build", src.to_str().unwrap()]).status.code(), Some(0));
    let v = dir.path().join("adder.v");
    let from_v = gemini(&["sim", v.to_str().unwrap(), "--inputs", "a=3,b=0b11", "--cycles", "3"]);
    assert_eq!(text(&from_v.stdout), "out=0b10\n".repeat(3));
}

#[test]
fn sim_rejects_bad_inputs() {
    let p = program("adder");
    let p = p.to_str().unwrap();
    assert_eq!(gemini(&["sim", p, "--inputs", "a=0b1"]).status.code(), Some(1));
    assert_eq!(gemini(&["sim", p, "--inputs", "a=0b100,b=0"]).status.code(), Some(1));
    assert_eq!(gemini(&["sim", p, "--inputs", "a=1,b=1,zz=0"]).status.code(), Some(1));
}

#[test]
fn metatheory_summary() {
    let out = gemini(&["metatheory", "--seeds", "20", "--depth", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let s = text(&out.stdout);
    assert!(s.lines().any(|l| l.starts_with("terms") && l.trim_end().ends_with("20")), "{}", s);
    assert!(s.contains("result: ok"));
}

#[test]
fn builds_are_deterministic() {
    let p = program("adder");
    let a = gemini(&["build", p.to_str().unwrap(), "-o", "/dev/stdout"]);
    let b = gemini(&["build", p.to_str().unwrap(), "-o", "/dev/stdout"]);
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.is_empty());
}

/// Compares every emit format against checked-in output; set GEMINI_BLESS=1 to rewrite.
#[test]
fn emit_formats_match_golden_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let bless = std::env::var("GEMINI_BLESS").is_ok_and(|v| v == "1");
    let mut stale = Vec::new();
    for name in ["adder", "explicit_logic"] {
        let src = program(name);
        for emit in ["tokens", "ast", "typed-ast", "ir", "ir-lowered", "verilog"] {
            let out = gemini(&["build", src.to_str().unwrap(), "--emit", emit, "-o", "/dev/stdout"]);
            assert_eq!(out.status.code(), Some(0), "{} {}: {}", name, emit, text(&out.stderr));
            let path = golden.join(format!("{}.{}", name, emit));
            if bless {
                std::fs::create_dir_all(&golden).unwrap();
                std::fs::write(&path, &out.stdout).unwrap();
            } else if std::fs::read(&path).ok().as_deref() != Some(&out.stdout[..]) {
                stale.push(path.display().to_string());
            }
        }
    }
    assert!(stale.is_empty(), "output differs from {:?}", stale);
}
