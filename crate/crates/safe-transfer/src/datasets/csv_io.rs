//! Dataset files: header `x1..xD,y,z1..zJ,task`, one row per point. The
//! task column holds `t` for the target and `s1`, `s2`, ... for sources.

use std::io::{Read, Write};

use super::GridFunction;
use crate::error::{Error, Result};
use crate::gp::LabeledDataset;
use crate::kernels::TaskTag;

pub fn task_label(t: TaskTag) -> String {
    match t {
        TaskTag::Target => "t".into(),
        TaskTag::Source(p) => format!("s{p}"),
    }
}

pub fn parse_task_label(s: &str) -> Option<TaskTag> {
    if s == "t" {
        return Some(TaskTag::Target);
    }
    let p: usize = s.strip_prefix('s')?.parse().ok()?;
    (p >= 1).then_some(TaskTag::Source(p))
}

pub fn header(dim: usize, n_safety: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    h.push("y".into());
    h.extend((1..=n_safety).map(|j| format!("z{j}")));
    h.push("task".into());
    h
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes all datasets into one file, in the order given.
pub fn write_datasets<W: Write>(w: W, sets: &[(TaskTag, &LabeledDataset)]) -> Result<()> {
    let first = sets.first().ok_or_else(|| Error::Input("nothing to write".into()))?.1;
    let (dim, j) = (first.dim(), first.n_safety());
    if sets.iter().any(|(_, d)| d.dim() != dim || d.n_safety() != j) {
        return Err(Error::Dimension("datasets disagree in columns".into()));
    }
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header(dim, j)).map_err(csv_err)?;
    for (tag, d) in sets {
        let label = task_label(*tag);
        for i in 0..d.len() {
            let mut rec: Vec<String> = d.x.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(d.y[i].to_string());
            rec.extend(d.z.row(i).iter().map(|v| v.to_string()));
            rec.push(label.clone());
            wr.write_record(&rec).map_err(csv_err)?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Noise-free lattice values of several tasks in the same schema.
pub fn write_grids<W: Write>(w: W, grids: &[(TaskTag, &GridFunction)]) -> Result<()> {
    let sets = grids
        .iter()
        .map(|(tag, g)| {
            let n = g.grid.len();
            let mut d = LabeledDataset::empty(g.grid.dim(), g.outputs.len().saturating_sub(1).max(1));
            for i in 0..n {
                let z: Vec<f64> = if g.outputs.len() == 1 {
                    vec![g.outputs[0][i]]
                } else {
                    g.outputs[1..].iter().map(|o| o[i]).collect()
                };
                d.push(&g.grid.point(i), g.outputs[0][i], &z)?;
            }
            Ok((*tag, d))
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<(TaskTag, &LabeledDataset)> = sets.iter().map(|(t, d)| (*t, d)).collect();
    write_datasets(w, &refs)
}

/// Reads a dataset file and groups rows by task, in order of first
/// appearance.
pub fn read_datasets<R: Read>(r: R) -> Result<Vec<(TaskTag, LabeledDataset)>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let h: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let dim = h.iter().take_while(|c| c.starts_with('x')).count();
    let j = h.len().saturating_sub(dim + 2);
    if dim == 0 || h != header(dim, j) {
        return Err(Error::Input(format!("bad header {h:?}; expected x1..xD,y,z1..zJ,task")));
    }
    let mut out: Vec<(TaskTag, LabeledDataset)> = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = line + 2;
        let nums = rec
            .iter()
            .take(dim + 1 + j)
            .map(|s| s.parse::<f64>().map_err(|_| Error::Input(format!("line {row}: '{s}' is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        let label = rec.get(dim + 1 + j).unwrap_or("");
        let tag = parse_task_label(label).ok_or_else(|| Error::Input(format!("line {row}: unknown task '{label}'")))?;
        let idx = match out.iter().position(|(t, _)| *t == tag) {
            Some(i) => i,
            None => {
                out.push((tag, LabeledDataset::empty(dim, j)));
                out.len() - 1
            }
        };
        out[idx].1.push(&nums[..dim], nums[dim], &nums[dim + 1..])?;
    }
    Ok(out)
}
