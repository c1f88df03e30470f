//! Graph text format, optionally with task columns.
//!
//! ```text
//! misalign-graph 1
//! n <n>
//! communities <k>
//! seed <seed>
//! feature_dim <d>
//! task <beta> <r_star>            (only when a task is attached)
//! edges <m>
//! <i> <j>                          m lines, i < j, ascending
//! <community> <z> <x_1> .. <x_d>  n lines, node order
//! ```
//!
//! With a task attached each node line carries five more columns:
//! `valid label split g_loc g_far`, where `valid` is 0 or 1, `split` is one
//! of `train`, `val`, `test`, and missing values are `-`.

use std::fmt::Write as _;

use misalign_core::{Graph, LabeledTask, Split};

use super::Lines;
use crate::error::Result;

const MAGIC: &str = "misalign-graph 1";

pub fn write_graph(g: &Graph, task: Option<&LabeledTask>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "n {}", g.n());
    let _ = writeln!(out, "communities {}", g.n_communities());
    let _ = writeln!(out, "seed {}", g.seed());
    let _ = writeln!(out, "feature_dim {}", g.feature_dim());
    if let Some(t) = task {
        let _ = writeln!(out, "task {} {}", t.beta(), t.r_star());
    }
    let _ = writeln!(out, "edges {}", g.n_edges());
    for (i, j) in g.edges() {
        let _ = writeln!(out, "{i} {j}");
    }
    for i in 0..g.n() {
        let _ = write!(out, "{} {}", g.community()[i], g.z()[i]);
        for x in g.feature_row(i) {
            let _ = write!(out, " {x}");
        }
        if let Some(t) = task {
            let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
            let _ = write!(
                out,
                " {} {} {} {} {}",
                u8::from(t.is_valid(i)),
                t.labels()[i].map_or_else(|| "-".to_string(), |l| l.to_string()),
                t.split_of(i).map_or("-", Split::name),
                opt(t.g_loc_hat()[i]),
                opt(t.g_far_hat()[i]),
            );
        }
        out.push('\n');
    }
    out
}

pub fn read_graph(text: &str) -> Result<(Graph, Option<LabeledTask>)> {
    let mut lines = Lines::new("graph", text);
    if lines.expect_fields()?.join(" ") != MAGIC {
        return Err(lines.error(format!("expected `{MAGIC}` header")));
    }
    let n: usize = lines.keyed("n")?;
    let k: usize = lines.keyed("communities")?;
    let seed: u64 = lines.keyed("seed")?;
    let dim: usize = lines.keyed("feature_dim")?;

    let mut fields = lines.expect_fields()?;
    let mut task_header = None;
    if fields.first() == Some(&"task") {
        if fields.len() != 3 {
            return Err(lines.error("expected `task <beta> <r_star>`"));
        }
        task_header = Some((lines.parse::<f64>(fields[1])?, lines.parse::<u32>(fields[2])?));
        fields = lines.expect_fields()?;
    }
    if fields.len() != 2 || fields[0] != "edges" {
        return Err(lines.error("expected `edges <m>`"));
    }
    let m: usize = lines.parse(fields[1])?;
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let f = lines.expect_fields()?;
        if f.len() != 2 {
            return Err(lines.error("expected an edge `i j`"));
        }
        edges.push((lines.parse(f[0])?, lines.parse(f[1])?));
    }

    let width = 2 + dim + if task_header.is_some() { 5 } else { 0 };
    let mut community = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n * dim);
    let (mut labels, mut g_loc, mut g_far) = (Vec::new(), Vec::new(), Vec::new());
    let mut splits: [Vec<usize>; 3] = Default::default();
    for i in 0..n {
        let f = lines.expect_fields()?;
        if f.len() != width {
            return Err(lines.error(format!("node row needs {width} columns, found {}", f.len())));
        }
        community.push(lines.parse(f[0])?);
        z.push(lines.parse(f[1])?);
        for x in &f[2..2 + dim] {
            features.push(lines.parse(x)?);
        }
        if task_header.is_some() {
            let t = &f[2 + dim..];
            let opt_f64 = |s: &str| if s == "-" { Ok(None) } else { lines.parse(s).map(Some) };
            let valid = match t[0] {
                "0" => false,
                "1" => true,
                other => return Err(lines.error(format!("valid must be 0 or 1, found `{other}`"))),
            };
            let label = if t[1] == "-" { None } else { Some(lines.parse::<u8>(t[1])?) };
            if valid != label.is_some() {
                return Err(lines.error("label must be present exactly for valid nodes"));
            }
            labels.push(label);
            match t[2] {
                "-" => {}
                name => {
                    let split = Split::ALL
                        .into_iter()
                        .find(|s| s.name() == name)
                        .ok_or_else(|| lines.error(format!("unknown split `{name}`")))?;
                    splits[split as usize].push(i);
                }
            }
            g_loc.push(opt_f64(t[3])?);
            g_far.push(opt_f64(t[4])?);
        }
    }
    if lines.next_fields().is_some() {
        return Err(lines.error("trailing content"));
    }
    let graph = Graph::from_parts(k, seed, &edges, community, z, dim, features)?;
    let task = match task_header {
        Some((beta, r_star)) => Some(LabeledTask::from_parts(beta, r_star, labels, g_loc, g_far, splits)?),
        None => None,
    };
    Ok((graph, task))
}
