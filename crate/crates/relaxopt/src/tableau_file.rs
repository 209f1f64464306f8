//! Plain-text IMEX tableau files.
//!
//! ```text
//! # comments run to the end of the line
//! 2                 # stage count s
//! 0    0            # s rows of the explicit matrix
//! 1    0
//! 1/2  0            # s rows of the implicit matrix
//! 1/2  1/2
//! 1/2  1/2          # explicit weights
//! 1/2  1/2          # implicit weights
//! ```
//!
//! Entries are decimals or rationals `p/q`. Rows must be full length; the
//! strictly lower / lower triangular structure is checked afterwards.

use std::path::Path;

use relaxopt_core::ImexTableau;

use crate::error::{AppError, AppResult};

fn parse_entry(tok: &str) -> Result<f64, String> {
    let value = match tok.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| format!("bad numerator in `{tok}`"))?;
            let q: f64 = q.trim().parse().map_err(|_| format!("bad denominator in `{tok}`"))?;
            if q == 0.0 {
                return Err(format!("zero denominator in `{tok}`"));
            }
            p / q
        }
        None => tok.parse().map_err(|_| format!("not a number: `{tok}`"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("non-finite entry `{tok}`"))
    }
}

/// Parses tableau text; `origin` labels error messages.
pub fn parse_tableau(name: &str, origin: &str, text: &str) -> AppResult<ImexTableau> {
    let err = |line: usize, message: String| AppError::Parse { path: origin.to_string(), line, message };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (first, s_text) = lines.next().ok_or_else(|| err(1, "empty tableau file".into()))?;
    let s: usize = s_text.parse().map_err(|_| err(first, format!("expected the stage count, found `{s_text}`")))?;
    if s == 0 {
        return Err(err(first, "stage count must be positive".into()));
    }
    let mut last = first;
    let mut read_row = |what: &str| -> AppResult<Vec<f64>> {
        let (line, text) = lines.next().ok_or_else(|| err(last + 1, format!("missing {what}")))?;
        last = line;
        let row = text
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(parse_entry)
            .collect::<Result<Vec<f64>, String>>()
            .map_err(|m| err(line, m))?;
        if row.len() != s {
            return Err(err(line, format!("{what} has {} entries, expected {s}", row.len())));
        }
        Ok(row)
    };
    let a_tilde = (0..s).map(|i| read_row(&format!("explicit row {}", i + 1))).collect::<AppResult<Vec<_>>>()?;
    let a_impl = (0..s).map(|i| read_row(&format!("implicit row {}", i + 1))).collect::<AppResult<Vec<_>>>()?;
    let w_tilde = read_row("explicit weights")?;
    let w = read_row("implicit weights")?;
    if let Some((line, extra)) = lines.next() {
        return Err(err(line, format!("unexpected trailing content `{extra}`")));
    }
    ImexTableau::new(name, &a_tilde, &a_impl, w_tilde, w).map_err(|e| err(first, e.to_string()))
}

pub fn load_tableau(path: &Path) -> AppResult<ImexTableau> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("custom");
    parse_tableau(name, &path.display().to_string(), &text)
}

/// Serializes in the format read by [`parse_tableau`], shortest round-trip decimals.
pub fn format_tableau(tab: &ImexTableau) -> String {
    let s = tab.stages();
    let row = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
    let mut out = format!("# {}\n{s}\n", tab.name());
    for i in 0..s {
        out += &row(tab.a_tilde().row(i));
        out.push('\n');
    }
    for i in 0..s {
        out += &row(tab.a_impl().row(i));
        out.push('\n');
    }
    out += &row(tab.w_tilde());
    out.push('\n');
    out += &row(tab.w());
    out.push('\n');
    out
}

/// A registered name or a path to a tableau file.
pub fn resolve_tableau(spec: &str) -> AppResult<ImexTableau> {
    match relaxopt_core::builtin_tableau(spec) {
        Ok(t) => Ok(t),
        Err(e @ relaxopt_core::Error::UnknownTableau { .. }) => {
            let path = Path::new(spec);
            if path.is_file() {
                load_tableau(path)
            } else {
                Err(e.into())
            }
        }
        Err(e) => Err(e.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use relaxopt_core::tableau::order_report;

    const EULER: &str = "# IMEX Euler\n1\n0\n1\n1\n1\n";

    #[test]
    fn parses_euler() {
        let t = parse_tableau("e", "mem", EULER).unwrap();
        assert_eq!(t.stages(), 1);
        assert_eq!(order_report(&t, 1e-12).forward_order, 1);
    }

    #[test]
    fn rationals_and_comments() {
        let text = "2 # stages\n\n0 0\n1 0\n1/2 0\n1/2 1/2\n1/2 1/2 # weights\n0.5, 0.5\n";
        let t = parse_tableau("t", "mem", text).unwrap();
        assert_eq!(t.a_impl()[(1, 1)], 0.5);
        assert_eq!(t.w(), &[0.5, 0.5]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("x\n", 1, "stage count"),
            ("1\n0\n1\n1\n", 5, "missing implicit weights"),
            ("2\n0 0\n1\n", 3, "has 1 entries"),
            ("1\n0\nabc\n1\n1\n", 3, "not a number"),
            ("1\n0\n1/0\n1\n1\n", 3, "zero denominator"),
            ("1\n0\n1\n1\n1\n7\n", 6, "trailing"),
        ];
        for (text, line, needle) in cases {
            match parse_tableau("t", "f.tab", text) {
                Err(AppError::Parse { line: l, message, .. }) => {
                    assert_eq!(l, line, "{text:?}: {message}");
                    assert!(message.contains(needle), "{message}");
                }
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn structure_violations_are_reported() {
        // explicit matrix with a diagonal entry
        let r = parse_tableau("t", "f.tab", "1\n1\n1\n1\n1\n");
        assert!(matches!(r, Err(AppError::Parse { .. })));
    }

    #[test]
    fn round_trip_of_registered_tableaus() {
        for (name, _) in relaxopt_core::tableau::BUILTIN_TABLEAUS {
            let t = relaxopt_core::builtin_tableau(name).unwrap();
            let back = parse_tableau(name, "mem", &format_tableau(&t)).unwrap();
            assert_eq!(back.a_tilde(), t.a_tilde());
            assert_eq!(back.a_impl(), t.a_impl());
            assert_eq!(back.w(), t.w());
            assert_eq!(back.w_tilde(), t.w_tilde());
        }
    }

    #[test]
    fn resolve_prefers_registry_then_files() {
        assert_eq!(resolve_tableau("ars-222").unwrap().name(), "ars-222");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mine.tab");
        std::fs::write(&path, EULER).unwrap();
        assert_eq!(resolve_tableau(path.to_str().unwrap()).unwrap().name(), "mine");
        let missing = resolve_tableau("nope");
        assert!(matches!(missing, Err(AppError::Core(relaxopt_core::Error::UnknownTableau { .. }))));
    }
}
