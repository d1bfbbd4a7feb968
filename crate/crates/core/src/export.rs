//! CSV writers. Every file starts with `# key: value` comment lines, then a
//! header row, then data rows. Floats use Rust's shortest round-trip
//! formatting, so equal values always print identically.

use std::fmt::Display;
use std::io::{self, Write};

use crate::data::Sample1D;
use crate::dynamics::StepRecord;
use crate::landscape::Landscape;
use crate::optimizer::{BasinMap, Trajectory};
use crate::pde1d::Field1D;
use crate::toynet::EpochRecord;

/// Ordered `key: value` metadata lines.
pub type Meta = Vec<(String, String)>;

pub fn meta_line(key: impl Into<String>, value: impl Display) -> (String, String) {
    (key.into(), value.to_string())
}

pub struct CsvWriter<W: Write> {
    out: W,
    columns: usize,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W, meta: &[(String, String)], header: &[&str]) -> io::Result<Self> {
        for (k, v) in meta {
            writeln!(out, "# {k}: {v}")?;
        }
        writeln!(out, "{}", header.join(","))?;
        Ok(Self { out, columns: header.len() })
    }

    pub fn row(&mut self, fields: &[String]) -> io::Result<()> {
        debug_assert_eq!(fields.len(), self.columns);
        writeln!(self.out, "{}", fields.join(","))
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Formats any displayable value as a field.
pub fn field(v: impl Display) -> String {
    v.to_string()
}

fn render(meta: &[(String, String)], header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = CsvWriter::new(Vec::new(), meta, header).expect("in-memory write");
    for r in rows {
        w.row(&r).expect("in-memory write");
    }
    String::from_utf8(w.finish().expect("in-memory write")).expect("utf-8")
}

/// Lines of `text` that are not `#` comments.
pub fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

/// `y,label`.
pub fn dataset_csv(samples: &[Sample1D], meta: &Meta) -> String {
    render(meta, &["y", "label"], samples.iter().map(|s| vec![field(s.y), field(s.label())]))
}

/// `k,t,state...,drift...,noise...` for a block chain; row `k` holds the
/// state after block `k` and the parts that produced it.
pub fn chain_csv(records: &[StepRecord], blocks: usize, meta: &Meta) -> String {
    let dim = records.first().map_or(0, |r| r.state_after.dim());
    let mut header = vec!["k".to_string(), "t".to_string()];
    for prefix in ["state", "drift", "noise"] {
        header.extend((0..dim).map(|j| format!("{prefix}{j}")));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    render(
        meta,
        &header,
        records.iter().enumerate().map(|(k, r)| {
            let mut row = vec![field(k + 1), field((k + 1) as f64 / blocks as f64)];
            row.extend(r.state_after.values().iter().map(field));
            row.extend(r.drift_part.iter().map(field));
            row.extend(r.noise_part.iter().map(field));
            row
        }),
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleRow {
    pub x: f64,
    pub t: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
}

/// `x,t,estimate,std_error,M,steps,seed`.
pub fn ensemble_csv(rows: &[EnsembleRow], meta: &Meta) -> String {
    render(
        meta,
        &["x", "t", "estimate", "std_error", "M", "steps", "seed"],
        rows.iter().map(|r| {
            vec![field(r.x), field(r.t), field(r.estimate), field(r.std_error), field(r.paths), field(r.steps), field(r.seed)]
        }),
    )
}

/// `t,x,u`, time-major. For forward-time fields `t` is the forward time.
pub fn field_csv(fieldv: &Field1D, meta: &Meta) -> String {
    let g = fieldv.grid;
    let xs = g.xs();
    render(
        meta,
        &["t", "x", "u"],
        (0..=g.nt).flat_map(|j| {
            let row = fieldv.row(j);
            let t = g.t(j);
            xs.iter().zip(row).map(move |(x, u)| vec![field(t), field(x), field(u)]).collect::<Vec<_>>()
        }),
    )
}

/// `t,x,u` restricted to the time levels `levels` and every `x_stride`-th
/// space point.
pub fn field_csv_levels(fieldv: &Field1D, levels: &[usize], x_stride: usize, meta: &Meta) -> String {
    let g = fieldv.grid;
    let stride = x_stride.max(1);
    render(
        meta,
        &["t", "x", "u"],
        levels.iter().flat_map(|&j| {
            let row = fieldv.row(j);
            (0..g.nx).step_by(stride).map(move |i| vec![field(g.t(j)), field(g.x(i)), field(row[i])]).collect::<Vec<_>>()
        }),
    )
}

/// `eps,f,loss`, with metric, route, dataset digest and seed prepended to
/// the metadata.
pub fn landscape_csv(land: &Landscape, meta: &Meta) -> String {
    let mut m = meta.clone();
    m.push(meta_line("metric", land.metric.name()));
    m.push(meta_line("route", land.route));
    m.push(meta_line("dataset_digest", &land.dataset_digest));
    m.push(meta_line("landscape_seed", land.seed));
    render(
        &m,
        &["eps", "f", "loss"],
        land.eps_grid.iter().zip(&land.values).flat_map(|(eps, row)| {
            land.f_grid.iter().zip(row).map(move |(f, l)| vec![field(eps), field(f), field(l)]).collect::<Vec<_>>()
        }),
    )
}

/// `iter,f,minibatch_loss,full_loss`.
pub fn trajectory_csv(traj: &Trajectory, meta: &Meta) -> String {
    render(
        meta,
        &["iter", "f", "minibatch_loss", "full_loss"],
        traj.iterates
            .iter()
            .map(|it| vec![field(it.iteration), field(it.f), field(it.minibatch_loss), field(it.full_loss)]),
    )
}

/// `f,basin_id`, with each basin's minimum and flatness in the metadata.
pub fn basin_csv(map: &BasinMap, meta: &Meta) -> String {
    let mut m = meta.clone();
    for id in 0..map.sinks.len() {
        let flat = map.flatness(id).map_or("none".to_string(), |v| v.to_string());
        m.push(meta_line(format!("basin {id}"), format!("min_f={} flatness={flat}", map.minimum_f(id))));
    }
    render(
        &m,
        &["f", "basin_id"],
        map.grid.iter().map(|&f| vec![field(f), field(map.classify(f).expect("grid point"))]),
    )
}

/// `epoch,train_loss,val_loss,train_acc,val_acc`.
pub fn history_csv(history: &[EpochRecord], meta: &Meta) -> String {
    render(
        meta,
        &["epoch", "train_loss", "val_loss", "train_acc", "val_acc"],
        history.iter().map(|r| {
            vec![field(r.epoch), field(r.train_loss), field(r.val_loss), field(r.train_acc), field(r.val_acc)]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_then_header_then_rows() {
        let s = [Sample1D::new(0.5, 1).unwrap(), Sample1D::new(-1.0, 0).unwrap()];
        let text = dataset_csv(&s, &vec![meta_line("seed", 3)]);
        assert_eq!(text, "# seed: 3\ny,label\n0.5,1\n-1,0\n");
        assert_eq!(data_rows(&text), vec!["y,label", "0.5,1", "-1,0"]);
    }
}
