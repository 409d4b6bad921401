//! Edge-list text format: a header `N <count>`, then one `i j weight` line
//! per non-zero `Ω_ij`.

use std::io::{BufRead, Write};

use super::{SisError, WeightedNetwork};

pub fn write_edge_list<W: Write>(net: &WeightedNetwork, mut out: W) -> Result<(), SisError> {
    writeln!(out, "N {}", net.size())?;
    for (i, j, w) in net.edges() {
        // `{}` on f64 is the shortest text that reads back to the same value.
        writeln!(out, "{i} {j} {w}")?;
    }
    Ok(())
}

pub fn read_edge_list<R: BufRead>(input: R) -> Result<WeightedNetwork, SisError> {
    let mut net: Option<WeightedNetwork> = None;
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let parse_err = |message: String| SisError::Parse { line: line_no, message };
        match &mut net {
            None => {
                let n = match fields.as_slice() {
                    ["N", count] => count.parse::<usize>().map_err(|_| parse_err(format!("bad node count `{count}`")))?,
                    _ => return Err(parse_err(format!("expected `N <count>`, got `{content}`"))),
                };
                net = Some(WeightedNetwork::zeros(n));
            }
            Some(net) => {
                let [i, j, w] = fields.as_slice() else {
                    return Err(parse_err(format!("expected `i j weight`, got `{content}`")));
                };
                let i: usize = i.parse().map_err(|_| parse_err(format!("bad node `{i}`")))?;
                let j: usize = j.parse().map_err(|_| parse_err(format!("bad node `{j}`")))?;
                let w: f64 = w.parse().map_err(|_| parse_err(format!("bad weight `{w}`")))?;
                if i < net.size() && j < net.size() && net.get(i, j) != 0.0 {
                    return Err(parse_err(format!("duplicate edge ({i}, {j})")));
                }
                net.set(i, j, w).map_err(|e| parse_err(e.to_string()))?;
            }
        }
    }
    net.ok_or(SisError::Parse { line: 0, message: "missing `N <count>` header".into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let net = WeightedNetwork::from_edges(3, &[(0, 1, 0.1), (2, 0, 1.0 / 3.0), (1, 2, 7e-12)]).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&net, &mut buf).unwrap();
        assert_eq!(read_edge_list(buf.as_slice()).unwrap(), net);
    }

    #[test]
    fn parse_errors_have_lines() {
        let err = read_edge_list("N 2\n0 1 1\n0 5 1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, SisError::Parse { line: 3, .. }));
        assert!(read_edge_list("0 1 1\n".as_bytes()).is_err());
        assert!(read_edge_list("".as_bytes()).is_err());
        assert!(read_edge_list("N 2\n0 1 1\n0 1 2\n".as_bytes()).is_err());
    }

    #[test]
    fn two_node_file() {
        let net = read_edge_list("# two banks\nN 2\n0 1 1\n1 0 1\n".as_bytes()).unwrap();
        assert_eq!(net.get(0, 1), 1.0);
        assert_eq!(net.get(1, 0), 1.0);
    }
}
