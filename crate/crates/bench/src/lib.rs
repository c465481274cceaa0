//! Workloads shared by the benchmarks.

const ADDER: &str = include_str!("../../core/tests/programs/adder.gem");

/// Ripple-carry adder source with the given operand width.
pub fn adder_source(bits: u32) -> String {
    ADDER.replacen("val numbits = 2", &format!("val numbits = {}", bits), 1)
}

#[cfg(test)]
mod tests {
    #[test]
    fn width_is_substituted() {
        assert!(super::adder_source(16).contains("val numbits = 16"));
    }
}
