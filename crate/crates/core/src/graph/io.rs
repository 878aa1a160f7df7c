//! Plain-text edge lists: a first line holding `N`, then one whitespace
//! separated `i j w` triple per nonzero entry, 0-indexed.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use ndarray::Array2;

use super::Gso;
use crate::error::{Error, Result};

pub fn write_edge_list<W: Write>(s: &Gso, mut out: W) -> Result<()> {
    let mut buf = String::new();
    writeln!(buf, "{}", s.n()).unwrap();
    for ((i, j), &w) in s.entries().indexed_iter() {
        if w != 0.0 {
            // `{}` on f64 prints the shortest string that parses back exactly.
            writeln!(buf, "{i} {j} {w}").unwrap();
        }
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn read_edge_list<R: BufRead>(input: R) -> Result<Gso> {
    let mut lines = input.lines().enumerate().filter_map(|(no, l)| match l {
        Ok(l) if l.trim().is_empty() => None,
        other => Some((no + 1, other)),
    });
    let (no, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "missing node count".into() })?;
    let header = header?;
    let n: usize =
        header.trim().parse().map_err(|_| Error::Parse { line: no, msg: format!("bad node count {header:?}") })?;
    let mut m = Array2::zeros((n, n));
    for (no, line) in lines {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: String| Error::Parse { line: no, msg };
        if fields.len() != 3 {
            return Err(bad(format!("expected `i j w`, got {line:?}")));
        }
        let i: usize = fields[0].parse().map_err(|_| bad(format!("bad index {:?}", fields[0])))?;
        let j: usize = fields[1].parse().map_err(|_| bad(format!("bad index {:?}", fields[1])))?;
        let w: f64 = fields[2].parse().map_err(|_| bad(format!("bad weight {:?}", fields[2])))?;
        if i >= n || j >= n {
            return Err(bad(format!("edge ({i}, {j}) out of range for {n} nodes")));
        }
        m[[i, j]] = w;
    }
    Gso::from_matrix(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize_adjacency, sbm_generate};

    #[test]
    fn round_trip_is_bit_exact() {
        let g = normalize_adjacency(&sbm_generate(15, 3, 0.7, 0.2, 4).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let back = read_edge_list(buf.as_slice()).unwrap();
        assert_eq!(back, g);
        assert!(back.is_symmetric());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = read_edge_list("3\n0 1 1\n0 x 1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(read_edge_list("2\n0 5 1\n".as_bytes()).is_err());
        assert!(read_edge_list("".as_bytes()).is_err());
    }

    #[test]
    fn directed_entries_clear_symmetric_flag() {
        let g = read_edge_list("2\n0 1 0.5\n".as_bytes()).unwrap();
        assert!(!g.is_symmetric());
    }
}
