//! Plain-text output helpers shared by the simulators and the CLI.

use std::fmt::Write as _;

/// Scientific notation with 17 significant digits; round-trips every `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    format!("{x:.16e}")
}

/// Accumulates CSV rows in memory.
#[derive(Debug, Clone)]
pub struct CsvTable {
    buf: String,
    columns: usize,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Self {
            buf,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        debug_assert_eq!(cells.len(), self.columns);
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            match c {
                Cell::F(x) => self.buf.push_str(&fmt_f64(*x)),
                Cell::I(x) => {
                    let _ = write!(self.buf, "{x}");
                }
                Cell::U(x) => {
                    let _ = write!(self.buf, "{x}");
                }
                Cell::B(x) => self.buf.push_str(if *x { "true" } else { "false" }),
                Cell::S(x) => self.buf.push_str(x),
            }
        }
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn into_string(self) -> String {
        self.buf
    }
}

#[derive(Debug, Clone)]
pub enum Cell {
    F(f64),
    I(i64),
    U(u64),
    B(bool),
    S(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5, f64::MIN_POSITIVE] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(0.0), "0");
    }

    #[test]
    fn table_rows() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.row(&[Cell::U(3), Cell::B(true)]);
        assert_eq!(t.as_str(), "a,b\n3,true\n");
    }
}
