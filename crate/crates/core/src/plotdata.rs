//! CSV tables behind the plots: circles, region samples, fronts, singular
//! loci, Pareto sweeps, margin traces and Thevenin comparisons.
//!
//! Floats are written in shortest round-trip form, so reading a table back
//! reproduces the values bit for bit.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::geometry::{sample_circle, CircleDescriptor};
use crate::oracle::{RegionSample, SingularPoint};
use crate::pareto::{SweepEntry, TracePoint};
use crate::thevenin::SweepRow;
use crate::{Error, Network, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Schema(format!("csv: {other:?}")),
    }
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Table {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header).map_err(csv_error)?;
        for row in &self.rows {
            out.write_record(row).map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Table> {
        let mut input = csv::Reader::from_reader(r);
        let header = input.headers().map_err(csv_error)?.iter().map(String::from).collect();
        let rows = input
            .records()
            .map(|rec| rec.map(|r| r.iter().map(String::from).collect()).map_err(csv_error))
            .collect::<Result<_>>()?;
        Ok(Table { header, rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Table> {
        Table::read_from(File::open(path)?)
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("table has no column {name:?}")))
    }

    /// A numeric column; empty cells read as NaN.
    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let cell = row[c].trim();
                if cell.is_empty() {
                    return Ok(f64::NAN);
                }
                cell.parse()
                    .map_err(|_| Error::Schema(format!("row {}: {name} = {cell:?} is not a number", i + 1)))
            })
            .collect()
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// Rim samples of each circle: `bus, kind, theta, x, y`.
pub fn circles_table(circles: &[CircleDescriptor], samples: usize) -> Table {
    let mut t = Table::new(["bus", "kind", "theta", "x", "y"]);
    for c in circles {
        for (theta, x, y) in sample_circle(c, samples) {
            t.push(vec![c.bus.to_string(), c.kind.as_str().into(), num(theta), num(x), num(y)]);
        }
    }
    t
}

fn pq_ids(net: &Network) -> Vec<usize> {
    net.pq_buses().map(|d| net.bus_id(d)).collect()
}

/// Grid coordinates, powers and determinant of every sample point.
pub fn region_table(net: &Network, sample: &RegionSample) -> Table {
    let ids = pq_ids(net);
    let mut header: Vec<String> = if sample.grid.real_only {
        ids.iter().map(|i| format!("v_{i}")).collect()
    } else {
        let mut h: Vec<String> = ids.iter().map(|i| format!("v_re_{i}")).collect();
        h.extend(ids.iter().map(|i| format!("v_im_{i}")));
        h
    };
    header.extend(ids.iter().map(|i| format!("p_{i}")));
    header.push("det_j".into());
    let mut t = Table::new(header);
    for i in 0..sample.len() {
        let mut row: Vec<String> = sample.coords_of(i).iter().map(|x| num(*x)).collect();
        row.extend(sample.p_of(i).iter().map(|x| num(*x)));
        row.push(num(sample.det_j[i]));
        t.push(row);
    }
    t
}

/// Powers of the selected sample rows (typically the front).
pub fn front_table(net: &Network, sample: &RegionSample, indices: &[usize]) -> Table {
    let mut t = Table::new(pq_ids(net).iter().map(|i| format!("p_{i}")));
    for &i in indices {
        t.push(sample.p_of(i).iter().map(|x| num(*x)).collect());
    }
    t
}

pub fn locus_table(net: &Network, locus: &[SingularPoint]) -> Table {
    let ids = pq_ids(net);
    let mut header: Vec<String> = ids.iter().map(|i| format!("v_re_{i}")).collect();
    header.extend(ids.iter().map(|i| format!("v_im_{i}")));
    header.extend(ids.iter().map(|i| format!("p_{i}")));
    header.extend(["det_j", "front_distance", "class"].map(String::from));
    let mut t = Table::new(header);
    for pt in locus {
        let x = pt.v.state_vector();
        let mut row: Vec<String> = x.iter().map(|v| num(*v)).collect();
        row.extend(pt.p.iter().map(|v| num(*v)));
        row.push(num(pt.det_j));
        row.push(num(pt.front_distance));
        row.push(pt.class.as_str().into());
        t.push(row);
    }
    t
}

/// One row per direction: `z_…, p_…, residual, on_boundary, status`. Failed
/// directions have empty power and residual cells and the error in
/// `status`.
pub fn pareto_table(net: &Network, entries: &[SweepEntry]) -> Table {
    let ids = pq_ids(net);
    let mut header: Vec<String> = ids.iter().map(|i| format!("z_{i}")).collect();
    header.extend(ids.iter().map(|i| format!("p_{i}")));
    header.extend(["residual", "on_boundary", "status"].map(String::from));
    let mut t = Table::new(header);
    for e in entries {
        let mut row: Vec<String> = e.z.as_slice().iter().map(|x| num(*x)).collect();
        match &e.outcome {
            Ok(pt) => {
                row.extend(pt.p.iter().map(|x| num(*x)));
                row.push(num(pt.residual_norm));
                row.push(pt.on_boundary.to_string());
                row.push("ok".into());
            }
            Err(err) => {
                row.extend(ids.iter().map(|_| String::new()));
                row.push(String::new());
                row.push("false".into());
                row.push(err.to_string());
            }
        }
        t.push(row);
    }
    t
}

pub fn trace_table(trace: &[TracePoint]) -> Table {
    let mut t = Table::new(["scale", "sum_p", "margin"]);
    for p in trace {
        t.push(vec![num(p.scale), num(p.sum_p), num(p.margin)]);
    }
    t
}

/// `(scale, sum_p, margin)` rows of a trace table.
pub fn read_trace(t: &Table) -> Result<Vec<(f64, f64, f64)>> {
    let (a, b, c) = (t.column_f64("scale")?, t.column_f64("sum_p")?, t.column_f64("margin")?);
    Ok(a.into_iter().zip(b).zip(c).map(|((a, b), c)| (a, b, c)).collect())
}

pub fn thevenin_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(["load", "thevenin_margin", "proposed_margin"]);
    for r in rows {
        t.push(vec![num(r.load), num(r.thevenin_margin), num(r.proposed_margin)]);
    }
    t
}

/// `(load, thevenin_margin, proposed_margin)` rows of a Thevenin table.
pub fn read_thevenin(t: &Table) -> Result<Vec<(f64, f64, f64)>> {
    let (a, b, c) = (
        t.column_f64("load")?,
        t.column_f64("thevenin_margin")?,
        t.column_f64("proposed_margin")?,
    );
    Ok(a.into_iter().zip(b).zip(c).map(|((a, b), c)| (a, b, c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{sample_region, singular_locus, Axis, GridSpec, LocusOptions};
    use crate::pareto::{sweep_front, GrowthDirection, LocateOptions};
    use crate::powerflow::tests::triangle;

    fn round_trip(t: &Table) -> Table {
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        Table::read_from(buf.as_slice()).unwrap()
    }

    #[test]
    fn tables_round_trip_exactly() {
        let net = triangle(1.0, 0.0);
        let a = Axis::new(0.0, 1.2, 0.05).unwrap();
        let grid = GridSpec { axes: vec![a, a], real_only: true };
        let s = sample_region(&net, &grid).unwrap();
        let locus = singular_locus(&net, &s, &LocusOptions { tol: 0.05, ..Default::default() });
        let sweep = sweep_front(&net, &GrowthDirection::angular(8), &LocateOptions::default());
        for t in [
            region_table(&net, &s),
            front_table(&net, &s, &[0, 3, 5]),
            locus_table(&net, &locus),
            pareto_table(&net, &sweep),
        ] {
            assert_eq!(round_trip(&t), t);
        }
        let det = round_trip(&region_table(&net, &s)).column_f64("det_j").unwrap();
        assert!(det.iter().zip(&s.det_j).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(pareto_table(&net, &sweep).rows.len(), 8);
    }

    #[test]
    fn typed_readers() {
        let trace = vec![TracePoint { t: 0.0, scale: 0.1, sum_p: 1.0 / 3.0, margin: 2.5 }];
        let back = read_trace(&round_trip(&trace_table(&trace))).unwrap();
        assert_eq!(back, vec![(0.1, 1.0 / 3.0, 2.5)]);
        let rows = vec![SweepRow {
            load: 0.125,
            thevenin_margin: 0.5,
            proposed_margin: 0.1 + 0.2,
            proposed_raw: 1.0,
            z_thev: 1.0,
        }];
        let back = read_thevenin(&round_trip(&thevenin_table(&rows))).unwrap();
        assert_eq!(back, vec![(0.125, 0.5, 0.1 + 0.2)]);
    }

    #[test]
    fn bad_cells_are_schema_errors() {
        let t = Table::read_from("scale,sum_p,margin\n1,x,3\n".as_bytes()).unwrap();
        assert!(matches!(read_trace(&t), Err(Error::Schema(_))));
        assert!(matches!(t.column_f64("nope"), Err(Error::Schema(_))));
    }
}
