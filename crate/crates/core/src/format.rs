//! Fixed-point number formatting for output tables.

/// Decimal places used for every float written to an output table.
pub const DECIMALS: usize = 3;

/// Formats `value` with three decimals.
///
/// `{:.3}` rounds the exact binary value and resolves exact ties to even,
/// which is the rounding the golden files are generated with. Negative zero
/// is normalized so `-0.0001` and `0.0` print the same.
pub fn fixed3(value: f64) -> String {
    let s = format!("{:.*}", DECIMALS, value);
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_round_to_even() {
        assert_eq!(fixed3(0.0625), "0.062");
        assert_eq!(fixed3(0.1875), "0.188");
        assert_eq!(fixed3(2.5), "2.500");
    }

    #[test]
    fn no_negative_zero() {
        assert_eq!(fixed3(-0.0), "0.000");
        assert_eq!(fixed3(-0.0004), "0.000");
        assert_eq!(fixed3(-0.0006), "-0.001");
    }
}
