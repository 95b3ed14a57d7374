//! VTK snapshots and CSV reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::simulation::{SimulationResult, SweepOutcome, SweepRow, SECONDS_PER_DAY};
use crate::wave::CycleDiagnostics;

/// Nodal fields at one instant.
#[derive(Debug, Clone)]
pub struct Snapshot<'a> {
    pub time: f64,
    pub mesh: &'a Mesh,
    pub fields: Vec<(String, Vec<f64>)>,
}

/// A snapshot read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotData {
    pub time: f64,
    pub points: Vec<[f64; 2]>,
    pub cells: Vec<[usize; 4]>,
    pub fields: Vec<(String, Vec<f64>)>,
}

impl SnapshotData {
    pub fn field(&self, name: &str) -> Option<&[f64]> {
        self.fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

/// Formats `x` with 9 significant digits, `%g` style.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_snapshot(s: &Snapshot<'_>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mesh = s.mesh;
    let n = mesh.num_nodes();
    if !(s.time >= 0.0) {
        return Err(Error::InvalidArgument(format!("snapshot time {} is negative", s.time)));
    }
    for (name, f) in &s.fields {
        if f.len() != n {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("field {name} has {} values for {n} nodes", f.len()),
            });
        }
        if name.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("field name {name:?} contains whitespace")));
        }
    }

    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\nliusim snapshot\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "FIELD FieldData 1\nTIME 1 1 double\n{}", format_sig9(s.time));
    let _ = writeln!(out, "POINTS {n} double");
    for c in &mesh.coords {
        let _ = writeln!(out, "{} {} 0", format_sig9(c[0]), format_sig9(c[1]));
    }
    let ne = mesh.num_elements();
    let _ = writeln!(out, "CELLS {ne} {}", 5 * ne);
    for e in &mesh.elements {
        let _ = writeln!(out, "4 {} {} {} {}", e[0], e[1], e[2], e[3]);
    }
    let _ = writeln!(out, "CELL_TYPES {ne}");
    for _ in 0..ne {
        out.push_str("9\n");
    }
    let _ = writeln!(out, "POINT_DATA {n}");
    for (name, f) in &s.fields {
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in f {
            out.push_str(&format_sig9(*v));
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<SnapshotData> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_snapshot(&text).map_err(|reason| Error::Format {
        path: path.to_path_buf(),
        reason,
    })
}

struct Tokens<'a> {
    items: Vec<&'a str>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> std::result::Result<&'a str, String> {
        let t = self.items.get(self.pos).copied().ok_or("unexpected end of file")?;
        self.pos += 1;
        Ok(t)
    }

    fn num<T: std::str::FromStr>(&mut self) -> std::result::Result<T, String> {
        let s = self.next()?;
        s.parse().map_err(|_| format!("bad number {s:?}"))
    }

    fn expect(&mut self, want: &str) -> std::result::Result<(), String> {
        let got = self.next()?;
        if got == want { Ok(()) } else { Err(format!("expected {want}, found {got}")) }
    }

    fn done(&self) -> bool {
        self.pos >= self.items.len()
    }
}

fn parse_snapshot(text: &str) -> std::result::Result<SnapshotData, String> {
    let mut t = Tokens {
        items: text.lines().skip(3).flat_map(str::split_whitespace).collect(),
        pos: 0,
    };
    t.expect("DATASET")?;
    t.expect("UNSTRUCTURED_GRID")?;
    let mut data = SnapshotData {
        time: 0.0,
        points: Vec::new(),
        cells: Vec::new(),
        fields: Vec::new(),
    };
    let mut n_points = 0;
    while !t.done() {
        match t.next()? {
            "FIELD" => {
                t.next()?;
                let arrays: usize = t.num()?;
                for _ in 0..arrays {
                    let name = t.next()?;
                    let comps: usize = t.num()?;
                    let tuples: usize = t.num()?;
                    t.next()?;
                    let vals = (0..comps * tuples).map(|_| t.num()).collect::<std::result::Result<Vec<f64>, _>>()?;
                    if name == "TIME" {
                        data.time = *vals.first().ok_or("empty TIME array")?;
                    }
                }
            }
            "POINTS" => {
                n_points = t.num()?;
                t.next()?;
                for _ in 0..n_points {
                    let x = t.num()?;
                    let y = t.num()?;
                    let _: f64 = t.num()?;
                    data.points.push([x, y]);
                }
            }
            "CELLS" => {
                let ne: usize = t.num()?;
                t.next()?;
                for _ in 0..ne {
                    t.expect("4")?;
                    let mut c = [0usize; 4];
                    for v in &mut c {
                        *v = t.num()?;
                    }
                    data.cells.push(c);
                }
            }
            "CELL_TYPES" => {
                let ne: usize = t.num()?;
                for _ in 0..ne {
                    t.expect("9")?;
                }
            }
            "POINT_DATA" => {
                let n: usize = t.num()?;
                if n != n_points {
                    return Err(format!("POINT_DATA {n} does not match {n_points} points"));
                }
            }
            "SCALARS" => {
                let name = t.next()?.to_string();
                t.next()?;
                t.next()?;
                t.expect("LOOKUP_TABLE")?;
                t.next()?;
                let vals = (0..n_points).map(|_| t.num()).collect::<std::result::Result<_, _>>()?;
                data.fields.push((name, vals));
            }
            other => return Err(format!("unexpected keyword {other:?}")),
        }
    }
    Ok(data)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Shortest round-trip decimal form.
fn num(x: f64) -> String {
    format!("{x:?}")
}

pub const TIMESERIES_HEADER: [&str; 6] = [
    "t_days",
    "tumor_integral",
    "tumor_norm",
    "sigma_h_min",
    "sigma_h_max",
    "amp_mean",
];

pub fn write_timeseries(result: &SimulationResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let first = result
        .records
        .first()
        .ok_or_else(|| Error::InvalidArgument("time series is empty".into()))?;
    let n0 = first.tumor_integral;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(TIMESERIES_HEADER).map_err(|e| csv_error(path, e))?;
    for r in &result.records {
        w.write_record([
            num(r.time / SECONDS_PER_DAY),
            num(r.tumor_integral),
            num(r.tumor_integral / n0),
            num(r.sigma_h_min),
            num(r.sigma_h_max),
            num(r.amp_mean),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const SWEEP_HEADER: [&str; 5] = [
    "f_MHz",
    "A_kPa",
    "eta_c_Pa_s",
    "eta_T_Pa_s",
    "proliferation_decrease_pct",
];

/// Grid columns plus the decrease; failed rows leave the last column empty.
pub fn write_sweep(outcome: &SweepOutcome, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(SWEEP_HEADER).map_err(|e| csv_error(path, e))?;
    for (row, res) in &outcome.rows {
        let dec = match res {
            Ok(d) => format!("{d:.2}"),
            Err(_) => String::new(),
        };
        w.write_record([
            num(row.frequency / 1e6),
            num(row.pressure / 1e3),
            num(row.eta_culture),
            num(row.eta_tumor),
            dec,
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a sweep grid with the sweep-table columns (the decrease column is optional).
pub fn read_sweep_grid(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sweep_grid(&text).map_err(|reason| Error::Format {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn parse_sweep_grid(text: &str) -> std::result::Result<Vec<SweepRow>, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() < 4 {
            return Err(format!("row {}: expected at least 4 columns", i + 1));
        }
        let mut v = [0.0f64; 4];
        for (k, x) in v.iter_mut().enumerate() {
            *x = rec[k]
                .parse()
                .map_err(|_| format!("row {}: bad number {:?}", i + 1, &rec[k]))?;
            if !x.is_finite() || *x < 0.0 {
                return Err(format!("row {}: column {} must be finite and non-negative", i + 1, k + 1));
            }
        }
        if v[0] <= 0.0 {
            return Err(format!("row {}: frequency must be positive", i + 1));
        }
        rows.push(SweepRow {
            frequency: v[0] * 1e6,
            pressure: v[1] * 1e3,
            eta_culture: v[2],
            eta_tumor: v[3],
        });
    }
    if rows.is_empty() {
        return Err("grid has no rows".into());
    }
    Ok(rows)
}

/// Per-cycle convergence history of every fast solve.
pub fn write_wave_diagnostics(result: &SimulationResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["slow_step", "cycle", "rms_amplitude", "residual", "mean_ratio"])
        .map_err(|e| csv_error(path, e))?;
    for s in &result.fast_solves {
        for CycleDiagnostics {
            cycle,
            rms_amplitude,
            residual,
            mean_ratio,
        } in &s.history
        {
            w.write_record([
                s.slow_step.to_string(),
                cycle.to_string(),
                num(*rms_amplitude),
                num(*residual),
                num(*mean_ratio),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.15), "0.15");
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(-2.5e-7), "-2.5e-7");
        assert_eq!(format_sig9(123456789.4), "123456789");
        assert_eq!(format_sig9(1.2345678912e12), "1.23456789e12");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(1e-5), "0.00001");
    }

    #[test]
    fn uniform_field_is_written_verbatim() {
        let mesh = build_mesh(1.0, 1.0, 2, 2, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.vtk");
        let snap = Snapshot {
            time: 0.0,
            mesh: &mesh,
            fields: vec![("phi_T".into(), vec![0.15; 9])],
        };
        write_snapshot(&snap, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let body: Vec<&str> = text
            .split("LOOKUP_TABLE default\n")
            .nth(1)
            .unwrap()
            .lines()
            .collect();
        assert_eq!(body, vec!["0.15"; 9]);
    }

    #[test]
    fn snapshot_round_trip_and_determinism() {
        let mesh = build_mesh(1e-3, 1e-3, 3, 2, None).unwrap();
        let f: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin() * 10f64.powi(i - 6)).collect();
        let snap = Snapshot {
            time: 3600.0,
            mesh: &mesh,
            fields: vec![("a".into(), f.clone()), ("b".into(), vec![0.0; 12])],
        };
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("1.vtk"), dir.path().join("2.vtk"));
        write_snapshot(&snap, &p1).unwrap();
        write_snapshot(&snap, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        let back = read_snapshot(&p1).unwrap();
        assert_eq!(back.time, 3600.0);
        assert_eq!(back.cells.len(), 6);
        for (x, y) in f.iter().zip(back.field("a").unwrap()) {
            assert!((x - y).abs() <= 5e-9 * x.abs());
        }
        for (p, q) in mesh.coords.iter().zip(&back.points) {
            assert!((p[0] - q[0]).abs() <= 5e-9 * p[0].abs() && (p[1] - q[1]).abs() <= 5e-9 * p[1].abs());
        }
    }

    #[test]
    fn snapshot_field_size_is_checked() {
        let mesh = build_mesh(1.0, 1.0, 1, 1, None).unwrap();
        let snap = Snapshot {
            time: 0.0,
            mesh: &mesh,
            fields: vec![("a".into(), vec![0.0; 3])],
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(write_snapshot(&snap, dir.path().join("x.vtk")).is_err());
        assert!(matches!(
            write_snapshot(&Snapshot { fields: vec![], ..snap }, dir.path().join("no/such/x.vtk")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn grid_parsing() {
        let g = parse_sweep_grid("f_MHz,A_kPa,eta_c_Pa_s,eta_T_Pa_s,proliferation_decrease_pct\n5,1.5,0.05,2,48\n20, 5, 0.05, 2\n")
            .unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].frequency, 5e6);
        assert_eq!(g[1].pressure, 5e3);
        assert!(parse_sweep_grid("f,a,b,c\n").is_err());
        assert!(parse_sweep_grid("f,a,b,c\n5,x,1,1\n").is_err());
        assert!(parse_sweep_grid("f,a,b,c\n0,1,1,1\n").is_err());
    }
}
