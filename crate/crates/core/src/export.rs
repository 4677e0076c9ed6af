//! Trajectory artifacts: CSV records and SVG plots of the planar projection.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Region;
use crate::scenario::ContinuousScenario;
use crate::sim::{TrajectoryRecord, TrajectoryStep};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Parse {
            line,
            msg: format!("{}: {kind:?}", path.display()),
        },
    }
}

/// Column names `t,x1..xn,u1..um,v,stage,step_cost,acc_cost`.
pub fn csv_header(state_dim: usize, input_dim: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=state_dim).map(|i| format!("x{i}")));
    h.extend((1..=input_dim).map(|i| format!("u{i}")));
    h.extend(["v", "stage", "step_cost", "acc_cost"].map(String::from));
    h
}

/// Writes one row per step. Floats use the shortest representation that
/// parses back to the same value. A runtime fault is kept as a trailing
/// `# fault stage=.. cell=..` line.
pub fn write_trajectory_csv(traj: &TrajectoryRecord, state_dim: usize, input_dim: usize, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(csv_header(state_dim, input_dim)).map_err(|e| csv_err(path, e))?;
    for (t, s) in traj.steps.iter().enumerate() {
        if s.x.len() != state_dim || s.u.len() != input_dim {
            return Err(Error::usage(format!("step {t} does not match the header dimensions")));
        }
        let mut row = vec![t.to_string()];
        row.extend(s.x.iter().chain(&s.u).map(f64::to_string));
        row.push(u8::from(s.stop).to_string());
        row.push(s.stage.to_string());
        row.push(s.step_cost.to_string());
        row.push(s.acc_cost.to_string());
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    let mut file = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    if let Some((stage, cell)) = traj.fault {
        writeln!(file, "# fault stage={stage} cell={cell}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn parse_fault(line: &str) -> Option<(usize, usize)> {
    let rest = line.strip_prefix("# fault ")?;
    let mut stage = None;
    let mut cell = None;
    for kv in rest.split_whitespace() {
        match kv.split_once('=')? {
            ("stage", v) => stage = v.parse().ok(),
            ("cell", v) => cell = v.parse().ok(),
            _ => return None,
        }
    }
    Some((stage?, cell?))
}

/// Reads a file written by [`write_trajectory_csv`].
pub fn read_trajectory_csv(path: &Path) -> Result<TrajectoryRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fault = text.lines().find_map(parse_fault);
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let n = header.iter().filter(|h| h.starts_with('x')).count();
    let m = header.iter().filter(|h| h.starts_with('u')).count();
    if header.len() != n + m + 5 || header.iter().collect::<Vec<_>>() != csv_header(n, m) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("{}: unexpected trajectory header", path.display()),
        });
    }
    let mut steps = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: String| Error::Parse { line, msg };
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| bad(format!("bad number {:?}", &rec[i])))
        };
        let x = (1..=n).map(num).collect::<Result<Vec<_>>>()?;
        let u = (n + 1..=n + m).map(num).collect::<Result<Vec<_>>>()?;
        let stop = match &rec[n + m + 1] {
            "0" => false,
            "1" => true,
            v => return Err(bad(format!("bad stop flag {v:?}"))),
        };
        let stage = rec[n + m + 2].parse().map_err(|_| bad(format!("bad stage {:?}", &rec[n + m + 2])))?;
        steps.push(TrajectoryStep {
            x,
            u,
            stop,
            stage,
            step_cost: num(n + m + 3)?,
            acc_cost: num(n + m + 4)?,
        });
    }
    let termination = steps.iter().position(|s| s.stop);
    Ok(TrajectoryRecord {
        steps,
        termination,
        fault,
    })
}

const WIDTH: f64 = 800.0;
const MARGIN: f64 = 10.0;

struct Frame {
    lo: [f64; 2],
    hi: [f64; 2],
    scale: f64,
}

impl Frame {
    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        let q = [p[0].clamp(self.lo[0], self.hi[0]), p[1].clamp(self.lo[1], self.hi[1])];
        (
            MARGIN + (q[0] - self.lo[0]) * self.scale,
            MARGIN + (self.hi[1] - q[1]) * self.scale,
        )
    }

    fn rects(&self, svg: &mut String, region: &Region, style: &str) {
        for (l, u) in &region.boxes {
            let (x0, y0) = self.px([l[0], u[1]]);
            let (x1, y1) = self.px([u[0], l[1]]);
            let _ = writeln!(
                svg,
                r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" {style}/>"#,
                x1 - x0,
                y1 - y0
            );
        }
    }
}

/// Plots the first two state coordinates: domain outline, obstacles in
/// grey, targets in orange with red outline, the depot in green, and the
/// trajectory as one polyline with a vertex per recorded step.
pub fn render_svg(traj: &TrajectoryRecord, scen: &ContinuousScenario) -> String {
    let g = &scen.grid;
    let frame = {
        let lo = [g.lower()[0], g.lower()[1]];
        let hi = [g.upper(0), g.upper(1)];
        Frame {
            lo,
            hi,
            scale: WIDTH / (hi[0] - lo[0]),
        }
    };
    let (w, h) = frame.px([frame.hi[0], frame.lo[1]]);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}">"#,
        w + MARGIN,
        h + MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{:.2}" height="{:.2}" fill="white" stroke="black"/>"#,
        w - MARGIN,
        h - MARGIN
    );
    frame.rects(&mut svg, &scen.obstacles, r#"fill="grey""#);
    for (i, t) in scen.target_regions.iter().enumerate() {
        let style = if i == 0 {
            r#"fill="green" fill-opacity="0.5" stroke="darkgreen""#
        } else {
            r#"fill="orange" fill-opacity="0.5" stroke="red""#
        };
        frame.rects(&mut svg, t, style);
    }
    let points: Vec<String> = traj
        .steps
        .iter()
        .map(|s| {
            let (x, y) = frame.px([s.x[0], s.x[1]]);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="blue" stroke-width="1.5"/>"#,
        points.join(" ")
    );
    svg.push_str("</svg>\n");
    svg
}

pub fn write_svg(traj: &TrajectoryRecord, scen: &ContinuousScenario, path: &Path) -> Result<()> {
    fs::write(path, render_svg(traj, scen)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;
    use crate::system::INFINITY;

    fn step(t: usize, stop: bool) -> TrajectoryStep {
        TrajectoryStep {
            x: vec![0.1 * t as f64, 1.0 / 3.0, -0.0],
            u: vec![1e-17, 2.5],
            stop,
            stage: 1 + t / 2,
            step_cost: if stop { 0.0 } else { 0.7 + t as f64 },
            acc_cost: (0..t).map(|s| 0.7 + s as f64).sum(),
        }
    }

    #[test]
    fn empty_record_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let empty = TrajectoryRecord {
            steps: vec![],
            termination: None,
            fault: None,
        };
        write_trajectory_csv(&empty, 3, 2, &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "t,x1,x2,x3,u1,u2,v,stage,step_cost,acc_cost\n");
        assert_eq!(read_trajectory_csv(&p).unwrap(), empty);
    }

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let mut steps: Vec<_> = (0..5).map(|t| step(t, false)).collect();
        steps.push(step(5, true));
        let rec = TrajectoryRecord {
            steps,
            termination: Some(5),
            fault: None,
        };
        write_trajectory_csv(&rec, 3, 2, &p).unwrap();
        let back = read_trajectory_csv(&p).unwrap();
        assert_eq!(back, rec);
        assert!(back.steps[0].x[2].is_sign_negative());
    }

    #[test]
    fn fault_and_infinite_cost_survive() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let mut s = step(0, false);
        s.step_cost = INFINITY;
        let rec = TrajectoryRecord {
            steps: vec![s],
            termination: None,
            fault: Some((2, 77)),
        };
        write_trajectory_csv(&rec, 3, 2, &p).unwrap();
        assert_eq!(read_trajectory_csv(&p).unwrap(), rec);
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(&p, "t,x1,u1,v,stage,step_cost,acc_cost\n0,1.0,2.0,2,1,0,0\n").unwrap();
        assert!(matches!(read_trajectory_csv(&p), Err(Error::Parse { line: 2, .. })));
        fs::write(&p, "t,y1,v\n").unwrap();
        assert!(read_trajectory_csv(&p).is_err());
        assert!(matches!(read_trajectory_csv(&dir.path().join("missing.csv")), Err(Error::Io { .. })));
    }

    #[test]
    fn svg_has_one_vertex_per_step() {
        let s = Scenario::builtin("uav-mini").unwrap();
        let c = s.continuous().unwrap();
        let steps: Vec<_> = (0..7)
            .map(|t| TrajectoryStep {
                x: vec![100.0 + 10.0 * t as f64, 100.0, 0.0],
                ..step(t, t == 6)
            })
            .collect();
        let rec = TrajectoryRecord {
            steps,
            termination: Some(6),
            fault: None,
        };
        let svg = render_svg(&rec, c);
        let poly = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let pts = poly.split('"').nth(1).unwrap();
        assert_eq!(pts.split(' ').count(), 7);
        assert!(svg.contains(r#"fill="green""#));
        assert!(svg.contains(r#"stroke="red""#));
        assert_eq!(svg.matches(r#"fill="grey""#).count(), c.obstacles.boxes.len());
    }
}
