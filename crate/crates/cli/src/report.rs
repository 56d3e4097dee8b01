//! Number formatting and aligned text tables. Text and JSON output both go
//! through [`sig`] so they agree to the printed precision.

use serde::Serialize;
use serde_json::Value;

pub const SIGNIFICANT_DIGITS: usize = 12;

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `x` with 12 significant digits, fixed notation for moderate exponents.
pub fn sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

pub fn round_sig(x: f64) -> f64 {
    sig(x).parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().expect("f64"));
            *v = serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// JSON form of `report` with every float rounded like [`sig`].
pub fn to_json<T: Serialize>(report: &T) -> Value {
    let mut v = serde_json::to_value(report).expect("reports serialize");
    round_value(&mut v);
    v
}

/// First column left-aligned, the rest right-aligned.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].len())
                    .chain([self.header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, &w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        for r in &self.rows {
            out += &line(r);
        }
        out
    }
}

/// Two-column key/value table.
pub fn pairs(rows: &[(&str, String)]) -> String {
    let mut t = Table::new(&["quantity", "value"]);
    for (k, v) in rows {
        t.row(vec![k.to_string(), v.clone()]);
    }
    t.render()
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), sig)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig(0.8095238095238095), "0.809523809524");
        assert_eq!(sig(-0.19047619047619047), "-0.190476190476");
        assert_eq!(sig(90.0), "90");
        assert_eq!(sig(4.05), "4.05");
        assert_eq!(sig(1e-7), "1e-7");
        assert_eq!(sig(123456789012345.0), "1.23456789012e14");
        assert_eq!(sig(9.9999999999999e3), "10000");
        assert_eq!(sig(-0.0), "0");
    }

    #[test]
    fn rounding_matches_text() {
        for x in [1.0 / 3.0, 2.0f64.sqrt() * 1e-9, 6.02214076e23, -1234.5678901234567] {
            assert_eq!(sig(round_sig(x)), sig(x));
            assert_eq!(round_sig(x).to_string().parse::<f64>().unwrap(), sig(x).parse::<f64>().unwrap());
        }
    }

    #[test]
    fn json_floats_are_rounded_and_ints_kept() {
        let v = to_json(&serde_json::json!({"a": [1.0 / 3.0], "n": 7}));
        assert_eq!(v["a"][0].as_f64().unwrap(), 0.333333333333);
        assert_eq!(v["n"], 7);
    }

    #[test]
    fn table_columns_align() {
        let mut t = Table::new(&["stream", "weight"]);
        t.row(vec!["a".into(), "1".into()]);
        t.row(vec!["longer".into(), "-0.5".into()]);
        let text = t.render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "stream  weight");
        assert_eq!(lines[1], "a            1");
        assert_eq!(lines[2], "longer    -0.5");
    }
}
