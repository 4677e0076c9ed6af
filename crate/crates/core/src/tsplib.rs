//! TSPLIB interop: ATSP `FULL_MATRIX` problem files and `TOUR_SECTION`
//! tour files, plus an optional bridge to an external solver binary that
//! accepts an LKH-style parameter file.
//!
//! Real costs are scaled by [`DEFAULT_SCALE`] and rounded to integers, so the
//! optimum of the exported instance may differ from the real optimum by at
//! most `N · 0.5 / scale`. Diagonal entries are written as [`DIAGONAL_SENTINEL`].

use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;
use std::str::FromStr;

use crate::atsp::{self, AtspInstance, Tour};
use crate::error::{Error, Result};

pub const DEFAULT_SCALE: f64 = 1e3;
pub const DIAGONAL_SENTINEL: i64 = 1_000_000_000;

pub fn write_problem(inst: &AtspInstance, name: &str, scale: f64) -> String {
    let n = inst.n();
    let mut s = String::new();
    let _ = writeln!(s, "NAME: {name}");
    let _ = writeln!(s, "TYPE: ATSP");
    let _ = writeln!(s, "COMMENT: costs scaled by {scale}");
    let _ = writeln!(s, "DIMENSION: {n}");
    let _ = writeln!(s, "EDGE_WEIGHT_TYPE: EXPLICIT");
    let _ = writeln!(s, "EDGE_WEIGHT_FORMAT: FULL_MATRIX");
    let _ = writeln!(s, "EDGE_WEIGHT_SECTION");
    for i in 0..n {
        let row: Vec<String> = (0..n)
            .map(|j| {
                if i == j {
                    DIAGONAL_SENTINEL.to_string()
                } else {
                    ((inst.cost(i, j) * scale).round() as i64).to_string()
                }
            })
            .collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s.push_str("EOF\n");
    s
}

pub fn export_tsplib(inst: &AtspInstance, path: &Path, scale: f64) -> Result<()> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dtsp".into());
    std::fs::write(path, write_problem(inst, &name, scale)).map_err(|e| Error::io(path, e))
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_num<T: FromStr>(tok: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    tok.parse::<T>()
        .map_err(|e| parse_err(line, format!("bad number {tok:?}: {e}")))
}

/// Parses an ATSP `FULL_MATRIX` problem. Weights are divided by `scale`;
/// the diagonal is reset to zero.
pub fn parse_problem(text: &str, scale: f64) -> Result<AtspInstance> {
    let mut dim: Option<usize> = None;
    let mut weights: Vec<f64> = Vec::new();
    let mut in_weights = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if in_weights {
            if l == "EOF" || l.contains(':') || l.ends_with("_SECTION") {
                in_weights = false;
            } else {
                for tok in l.split_whitespace() {
                    weights.push(parse_num::<f64>(tok, line)?);
                }
                continue;
            }
        }
        if l == "EOF" {
            break;
        }
        if l == "EDGE_WEIGHT_SECTION" {
            in_weights = true;
            continue;
        }
        let (key, val) = l
            .split_once(':')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| parse_err(line, format!("unexpected line {l:?}")))?;
        match key {
            "DIMENSION" => dim = Some(parse_num(val, line)?),
            "TYPE" if val != "ATSP" && val != "TSP" => {
                return Err(parse_err(line, format!("unsupported TYPE {val}")))
            }
            "EDGE_WEIGHT_TYPE" if val != "EXPLICIT" => {
                return Err(parse_err(line, format!("unsupported EDGE_WEIGHT_TYPE {val}")))
            }
            "EDGE_WEIGHT_FORMAT" if val != "FULL_MATRIX" => {
                return Err(parse_err(line, format!("unsupported EDGE_WEIGHT_FORMAT {val}")))
            }
            _ => {}
        }
    }
    let n = dim.ok_or_else(|| parse_err(1, "missing DIMENSION"))?;
    if weights.len() != n * n {
        return Err(parse_err(
            text.lines().count(),
            format!("expected {} weights, found {}", n * n, weights.len()),
        ));
    }
    for (k, w) in weights.iter_mut().enumerate() {
        *w = if k / n == k % n { 0.0 } else { *w / scale };
    }
    AtspInstance::new(n, weights)
}

pub fn read_problem(path: &Path, scale: f64) -> Result<AtspInstance> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_problem(&text, scale)
}

/// Parses a tour file (`TOUR_SECTION` with 1-based cities, `-1` terminator)
/// and rotates the cycle so it starts at city 1.
pub fn parse_tour(text: &str) -> Result<Tour> {
    let mut in_section = false;
    let mut cycle: Vec<usize> = Vec::new();
    let mut terminated = false;
    let mut last_line = 1;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if !in_section {
            if l == "TOUR_SECTION" {
                in_section = true;
            } else if l == "EOF" {
                break;
            } else if !l.contains(':') {
                return Err(parse_err(line, format!("unexpected line {l:?}")));
            }
            continue;
        }
        for tok in l.split_whitespace() {
            if tok == "EOF" {
                break;
            }
            let v: i64 = parse_num(tok, line)?;
            if v == -1 {
                terminated = true;
                break;
            }
            if v < 1 {
                return Err(parse_err(line, format!("city {v} out of range")));
            }
            cycle.push(v as usize - 1);
        }
        if terminated {
            break;
        }
    }
    if !in_section {
        return Err(parse_err(last_line, "missing TOUR_SECTION"));
    }
    if !terminated {
        return Err(parse_err(last_line, "TOUR_SECTION not terminated by -1"));
    }
    Tour::from_cycle(&cycle).map_err(|e| parse_err(last_line, e.to_string()))
}

pub fn import_tour(path: &Path) -> Result<Tour> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tour(&text)
}

pub fn write_tour(t: &Tour, name: &str) -> String {
    let mut s = format!("NAME: {name}\nTYPE: TOUR\nDIMENSION: {}\nTOUR_SECTION\n", t.len());
    for &c in &t.cities()[..t.len()] {
        let _ = writeln!(s, "{}", c + 1);
    }
    s.push_str("-1\nEOF\n");
    s
}

/// Selects how the classical TSP is solved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TspBackend {
    Exact,
    Heuristic,
    /// Path to an external solver invoked as `<path> <parameter file>`; the
    /// parameter file names `PROBLEM_FILE` and `TOUR_FILE`.
    External(String),
}

impl FromStr for TspBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(TspBackend::Exact),
            "heuristic" => Ok(TspBackend::Heuristic),
            _ => match s.strip_prefix("external:") {
                Some(p) if !p.is_empty() => Ok(TspBackend::External(p.to_string())),
                _ => Err(Error::Config(format!(
                    "unknown tsp backend {s:?}; expected exact, heuristic or external:<path>"
                ))),
            },
        }
    }
}

impl std::fmt::Display for TspBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TspBackend::Exact => write!(f, "exact"),
            TspBackend::Heuristic => write!(f, "heuristic"),
            TspBackend::External(p) => write!(f, "external:{p}"),
        }
    }
}

pub fn solve_with(inst: &AtspInstance, backend: &TspBackend, seed: u64) -> Result<Tour> {
    match backend {
        TspBackend::Exact => atsp::solve_exact(inst),
        TspBackend::Heuristic => Ok(atsp::solve_heuristic(inst, seed)),
        TspBackend::External(bin) => solve_external(inst, bin, seed),
    }
}

fn solve_external(inst: &AtspInstance, bin: &str, seed: u64) -> Result<Tour> {
    let dir = std::env::temp_dir().join(format!("dtsp-{}-{seed}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let problem = dir.join("problem.atsp");
    let tour = dir.join("problem.tour");
    let par = dir.join("problem.par");
    export_tsplib(inst, &problem, DEFAULT_SCALE)?;
    let params = format!(
        "PROBLEM_FILE = {}\nTOUR_FILE = {}\nRUNS = 1\nSEED = {seed}\n",
        problem.display(),
        tour.display()
    );
    std::fs::write(&par, params).map_err(|e| Error::io(&par, e))?;
    let status = Command::new(bin)
        .arg(&par)
        .status()
        .map_err(|e| Error::External(format!("{bin}: {e}")))?;
    if !status.success() {
        return Err(Error::External(format!("{bin} exited with {status}")));
    }
    let t = import_tour(&tour)?;
    let _ = std::fs::remove_dir_all(&dir);
    if t.len() != inst.n() {
        return Err(Error::External(format!(
            "tour has {} cities, instance has {}",
            t.len(),
            inst.n()
        )));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> AtspInstance {
        AtspInstance::from_rows(&[
            vec![0.0, 1.0, 10.0],
            vec![10.0, 0.0, 1.0],
            vec![1.0, 10.0, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn export_has_format_fields() {
        let s = write_problem(&three(), "three", DEFAULT_SCALE);
        assert!(s.contains("TYPE: ATSP"));
        assert!(s.contains("DIMENSION: 3"));
        assert!(s.contains("EDGE_WEIGHT_TYPE: EXPLICIT"));
        assert!(s.contains("EDGE_WEIGHT_FORMAT: FULL_MATRIX"));
        assert!(s.contains("1000000000 1000 10000"));
        let back = parse_problem(&s, DEFAULT_SCALE).unwrap();
        assert_eq!(back, three());
    }

    #[test]
    fn tour_roundtrip_and_rotation() {
        let t = Tour::from_order(&[1, 2]).unwrap();
        assert_eq!(parse_tour(&write_tour(&t, "x")).unwrap(), t);
        let rotated = "TOUR_SECTION\n2\n3\n1\n-1\nEOF\n";
        assert_eq!(parse_tour(rotated).unwrap().cities(), &[0, 1, 2, 0]);
    }

    #[test]
    fn malformed_tour_reports_line() {
        let err = parse_tour("NAME: x\nTOUR_SECTION\n2\nfoo\n-1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        let err = parse_tour("NAME: x\nTOUR_SECTION\n1\n2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        let err = parse_tour("TOUR_SECTION\n1\n1\n-1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn backend_parsing() {
        assert_eq!("exact".parse::<TspBackend>().unwrap(), TspBackend::Exact);
        assert_eq!(
            "external:/opt/lkh".parse::<TspBackend>().unwrap(),
            TspBackend::External("/opt/lkh".into())
        );
        assert!("lkh".parse::<TspBackend>().is_err());
    }
}
