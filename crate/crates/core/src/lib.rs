//! Compiler core: front end, three-kinded type inference, software
//! evaluation with hardware staging, netlists, Verilog emission, netlist
//! simulation and a small-step safety checker.

pub mod ast;
pub mod diag;
pub mod lexer;
pub mod parser;
pub mod types;
pub mod eval;
pub mod hw;
pub mod infer;
pub mod stdlib;
pub mod codegen;
pub mod netsim;
pub mod pipeline;
pub mod metatheory;
