//! Plain CSV output (UTF-8, LF, header row, 17 significant digits) and a
//! loader for full solution dumps.

use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};
use crate::levy_basis::PolynomialBasis;
use crate::path_engine::{PathBundle, TimeGrid};
use crate::reflected_forward::ReflectedPath;
use crate::solver::{DiscreteSolution, Scheme, SweepTable};
use crate::spdie_bridge::SurfaceEstimate;

/// Formats a float with 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn row<W: Write>(out: &mut W, cells: &[String]) -> io::Result<()> {
    out.write_all(cells.join(",").as_bytes())?;
    out.write_all(b"\n")
}

/// `i,k,c_ik,degenerate` for `1 ≤ k ≤ i ≤ m`.
pub fn write_basis<W: Write>(out: &mut W, basis: &PolynomialBasis) -> io::Result<()> {
    row(out, &["i".into(), "k".into(), "c_ik".into(), "degenerate".into()])?;
    for i in 1..=basis.m() {
        let coeffs = basis.row(i).expect("row index in range");
        for (k, c) in coeffs.iter().enumerate().take(i) {
            row(
                out,
                &[i.to_string(), (k + 1).to_string(), num(*c), basis.is_degenerate(i).to_string()],
            )?;
        }
    }
    Ok(())
}

/// `path_id,node_index,t,B,L,H_1..H_m,A`.
pub fn write_paths<W: Write>(out: &mut W, bundle: &PathBundle) -> io::Result<()> {
    let mut header = vec!["path_id".to_string(), "node_index".into(), "t".into(), "B".into(), "L".into()];
    header.extend((1..=bundle.m).map(|i| format!("H_{i}")));
    header.push("A".into());
    row(out, &header)?;
    for p in &bundle.paths {
        for node in 0..bundle.grid.n_nodes() {
            let mut cells = vec![
                p.path_id.to_string(),
                node.to_string(),
                num(bundle.grid.node(node)),
                num(p.brownian[node]),
                num(p.levy[node]),
            ];
            cells.extend(p.teugels.iter().map(|h| num(h[node])));
            cells.push(num(p.increasing[node]));
            row(out, &cells)?;
        }
    }
    Ok(())
}

/// `path_id,node_index,t,X,eta,abs_eta`.
pub fn write_reflected<W: Write>(out: &mut W, grid: &TimeGrid, paths: &[ReflectedPath]) -> io::Result<()> {
    row(
        out,
        &["path_id".into(), "node_index".into(), "t".into(), "X".into(), "eta".into(), "abs_eta".into()],
    )?;
    for (p, path) in paths.iter().enumerate() {
        for node in 0..path.x.len() {
            row(
                out,
                &[
                    p.to_string(),
                    node.to_string(),
                    num(grid.node(node)),
                    num(path.x[node]),
                    num(path.eta[node]),
                    num(path.abs_eta[node]),
                ],
            )?;
        }
    }
    Ok(())
}

/// `node,t,mean_y,sd_y,mean_k,skorokhod`, the last column being the
/// path-averaged `(Y_i - S_i) ΔK_i` (zero at the terminal node).
pub fn write_solution_summary<W: Write>(out: &mut W, sol: &DiscreteSolution) -> io::Result<()> {
    row(
        out,
        &["node".into(), "t".into(), "mean_y".into(), "sd_y".into(), "mean_k".into(), "skorokhod".into()],
    )?;
    let terms = sol.skorokhod_terms();
    for i in 0..sol.n_nodes() {
        row(
            out,
            &[
                i.to_string(),
                num(sol.grid.node(i)),
                num(sol.mean_y(i)),
                num(sol.sd_y(i)),
                num(sol.mean_k(i)),
                num(terms.get(i).copied().unwrap_or(0.0)),
            ],
        )?;
    }
    Ok(())
}

/// Every value of a solution: `path_id,node,t,y,k,s,z_1..z_m`.
pub fn write_solution<W: Write>(out: &mut W, sol: &DiscreteSolution) -> io::Result<()> {
    let mut header = vec!["path_id".to_string(), "node".into(), "t".into(), "y".into(), "k".into(), "s".into()];
    header.extend((1..=sol.m()).map(|j| format!("z_{j}")));
    row(out, &header)?;
    for p in 0..sol.n_paths() {
        for i in 0..sol.n_nodes() {
            let mut cells = vec![
                p.to_string(),
                i.to_string(),
                num(sol.grid.node(i)),
                num(sol.y[i][p]),
                num(sol.k[i][p]),
                num(sol.obstacle[i][p]),
            ];
            cells.extend(sol.z[i].iter().map(|z| num(z[p])));
            row(out, &cells)?;
        }
    }
    Ok(())
}

fn parse_error(line: usize, reason: impl Into<String>) -> Error {
    Error::validation(format!("solution file line {line}"), reason)
}

/// Reads a file produced by [`write_solution`]. Paths and nodes must form a
/// complete rectangle.
pub fn read_solution<R: BufRead>(input: R, scheme: Scheme) -> Result<DiscreteSolution> {
    let mut lines = input.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_error(1, "empty file"))?;
    let header = header.map_err(|e| parse_error(1, e.to_string()))?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 6 || cols[..6] != ["path_id", "node", "t", "y", "k", "s"] {
        return Err(parse_error(1, "unexpected header"));
    }
    let m = cols.len() - 6;
    let mut records: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| parse_error(idx + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.trim().split(',').collect();
        if cells.len() != cols.len() {
            return Err(parse_error(idx + 1, format!("expected {} fields", cols.len())));
        }
        let p: usize = cells[0].parse().map_err(|_| parse_error(idx + 1, "bad path_id"))?;
        let i: usize = cells[1].parse().map_err(|_| parse_error(idx + 1, "bad node"))?;
        let values = cells[2..]
            .iter()
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| parse_error(idx + 1, "bad number"))?;
        records.push((p, i, values));
    }
    let n_paths = records.iter().map(|r| r.0).max().map_or(0, |v| v + 1);
    let n_nodes = records.iter().map(|r| r.1).max().map_or(0, |v| v + 1);
    if n_nodes < 2 || records.len() != n_paths * n_nodes {
        return Err(Error::validation("solution file", "paths and nodes do not form a complete table"));
    }
    let mut t = vec![f64::NAN; n_nodes];
    let mut y = vec![vec![f64::NAN; n_paths]; n_nodes];
    let mut k = y.clone();
    let mut s = y.clone();
    let mut z = vec![vec![vec![f64::NAN; n_paths]; m]; n_nodes];
    for (p, i, v) in records {
        t[i] = v[0];
        y[i][p] = v[1];
        k[i][p] = v[2];
        s[i][p] = v[3];
        for j in 0..m {
            z[i][j][p] = v[4 + j];
        }
    }
    let grid = TimeGrid::new(t[0], t[n_nodes - 1], n_nodes - 1)?;
    Ok(DiscreteSolution {
        grid,
        scheme,
        iterations: 0,
        contraction_ratios: Vec::new(),
        final_delta: None,
        y,
        z,
        k,
        obstacle: s,
    })
}

/// `n,y0,k_terminal,skorokhod,a_priori,gap_to_direct`.
pub fn write_sweep<W: Write>(out: &mut W, table: &SweepTable) -> io::Result<()> {
    row(
        out,
        &[
            "n".into(),
            "y0".into(),
            "k_terminal".into(),
            "skorokhod".into(),
            "a_priori".into(),
            "gap_to_direct".into(),
        ],
    )?;
    for r in &table.rows {
        row(
            out,
            &[num(r.n), num(r.y0), num(r.k_terminal), num(r.skorokhod), num(r.a_priori), num(r.gap_to_direct)],
        )?;
    }
    Ok(())
}

/// `t,x,u,stderr,u_minus_h,neumann_residual`.
pub fn write_surface<W: Write>(out: &mut W, surface: &SurfaceEstimate) -> io::Result<()> {
    row(
        out,
        &[
            "t".into(),
            "x".into(),
            "u".into(),
            "stderr".into(),
            "u_minus_h".into(),
            "neumann_residual".into(),
        ],
    )?;
    for p in surface.points.iter().flatten() {
        row(
            out,
            &[num(p.t), num(p.x), num(p.u), num(p.stderr), num(p.u_minus_h), num(p.neumann_residual)],
        )?;
    }
    Ok(())
}
