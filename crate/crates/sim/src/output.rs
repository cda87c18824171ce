//! Run artifacts: trajectory CSVs, metrics JSON, cycle diagnostics, plots.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use corridor_core::geometry::{Point2, Shape};

use crate::metrics::{CycleRow, RunMetrics};
use crate::run::Sample;
use crate::scenario::Scenario;

pub const CSV_HEADER: &str = "agent,t,x,y,vx,vy,ax,ay";

pub fn csv_path(dir: &Path, agent: usize) -> PathBuf {
    dir.join(format!("agent_{agent:02}.csv"))
}

/// Rust's float formatting is shortest round-trip, so parsing a written
/// value gives back the same bits.
pub fn samples_to_csv(agent: usize, samples: &[Sample]) -> String {
    let mut s = String::with_capacity(64 * (samples.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for x in samples {
        let _ = writeln!(
            s,
            "{agent},{},{},{},{},{},{},{}",
            x.t, x.position.x, x.position.y, x.velocity.x, x.velocity.y, x.acceleration.x, x.acceleration.y
        );
    }
    s
}

fn bad(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

pub fn read_samples_csv(path: &Path) -> io::Result<Vec<Sample>> {
    let file = io::BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in file.lines().enumerate() {
        let line = line?;
        if n == 0 {
            if line != CSV_HEADER {
                return Err(bad(format!("{}: unexpected header", path.display())));
            }
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .skip(1)
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("{}:{}: {e}", path.display(), n + 1)))?;
        if v.len() != 7 {
            return Err(bad(format!("{}:{}: expected 8 columns", path.display(), n + 1)));
        }
        out.push(Sample {
            t: v[0],
            position: Point2::new(v[1], v[2]),
            velocity: Point2::new(v[3], v[4]),
            acceleration: Point2::new(v[5], v[6]),
        });
    }
    Ok(out)
}

pub fn read_cycles(path: &Path) -> io::Result<Vec<CycleRow>> {
    let file = io::BufReader::new(fs::File::open(path)?);
    let mut rows = Vec::new();
    for line in file.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            rows.push(serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OutputOptions {
    pub plots: bool,
    pub metrics_only: bool,
}

/// Writes every artifact of a run into `dir`.
pub fn write_outputs(
    dir: &Path,
    scenario: &Scenario,
    samples: &[Vec<Sample>],
    cycles: &[CycleRow],
    metrics: &RunMetrics,
    opts: OutputOptions,
) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(metrics).map_err(io::Error::other)?)?;
    if opts.metrics_only {
        return Ok(());
    }
    fs::write(dir.join("scenario.resolved.json"), serde_json::to_string_pretty(&scenario.resolved).map_err(io::Error::other)?)?;
    for (i, s) in samples.iter().enumerate() {
        fs::write(csv_path(dir, i), samples_to_csv(i, s))?;
    }
    let mut log = io::BufWriter::new(fs::File::create(dir.join("cycles.jsonl"))?);
    for row in cycles {
        serde_json::to_writer(&mut log, row).map_err(io::Error::other)?;
        log.write_all(b"\n")?;
    }
    log.flush()?;
    if opts.plots {
        fs::write(dir.join("trajectories.svg"), trajectory_svg(scenario, samples))?;
        fs::write(dir.join("velocity.svg"), velocity_svg(samples))?;
    }
    Ok(())
}

const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn polyline(points: impl Iterator<Item = (f64, f64)>) -> String {
    points.map(|(x, y)| format!("{x:.3},{y:.3}")).collect::<Vec<_>>().join(" ")
}

/// Overhead view of obstacles, paths, starts and goals.
pub fn trajectory_svg(scenario: &Scenario, samples: &[Vec<Sample>]) -> String {
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut grow = |p: Point2| {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    };
    for s in samples.iter().flatten() {
        grow(s.position);
    }
    for a in &scenario.agents {
        grow(a.start.position);
        grow(a.task.goal);
    }
    for o in scenario.world.obstacles() {
        let c = o.center();
        let r = o.size_scale();
        grow(c - Point2::new(r, r));
        grow(c + Point2::new(r, r));
    }
    let pad = 1.0;
    let (w, h) = (hi.x - lo.x + 2.0 * pad, hi.y - lo.y + 2.0 * pad);
    let scale = 600.0 / w.max(h).max(1e-6);
    let map = |p: Point2| ((p.x - lo.x + pad) * scale, (hi.y - p.y + pad) * scale);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.3} {:.3}">"#,
        w * scale,
        h * scale,
        w * scale,
        h * scale
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for o in scenario.world.obstacles() {
        match o {
            Shape::Circle { center, radius } => {
                let (x, y) = map(*center);
                let _ = writeln!(svg, r##"<circle cx="{x:.3}" cy="{y:.3}" r="{:.3}" fill="#888"/>"##, radius * scale);
            }
            other => {
                let pts = polyline(other.polygon().unwrap_or(&[]).iter().map(|&p| map(p)));
                let _ = writeln!(svg, r##"<polygon points="{pts}" fill="#888"/>"##);
            }
        }
    }
    for (i, s) in samples.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts = polyline(s.iter().map(|x| map(x.position)));
        let _ = writeln!(svg, r#"<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>"#);
        if let Some(a) = scenario.agents.get(i) {
            let (sx, sy) = map(a.start.position);
            let (gx, gy) = map(a.task.goal);
            let _ = writeln!(svg, r#"<circle cx="{sx:.3}" cy="{sy:.3}" r="4" fill="{color}"/>"#);
            let _ = writeln!(svg, r#"<rect x="{:.3}" y="{:.3}" width="8" height="8" fill="none" stroke="{color}"/>"#, gx - 4.0, gy - 4.0);
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Speed over time for every agent.
pub fn velocity_svg(samples: &[Vec<Sample>]) -> String {
    let t_max = samples.iter().flatten().map(|s| s.t).fold(0.0, f64::max).max(1e-6);
    let v_max = samples.iter().flatten().map(|s| s.velocity.norm()).fold(0.0, f64::max).max(1e-6);
    let (w, h, m) = (640.0, 320.0, 30.0);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<polyline points="{m},{m} {m},{} {},{}" fill="none" stroke="black"/>"#, h - m, w - m, h - m);
    let _ = writeln!(svg, r#"<text x="{m}" y="{}" font-size="12">speed max {v_max:.2} m/s, t max {t_max:.1} s</text>"#, m - 10.0);
    for (i, s) in samples.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts = polyline(s.iter().map(|x| (m + (w - 2.0 * m) * x.t / t_max, h - m - (h - 2.0 * m) * x.velocity.norm() / v_max)));
        let _ = writeln!(svg, r#"<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
    }
    svg.push_str("</svg>\n");
    svg
}
