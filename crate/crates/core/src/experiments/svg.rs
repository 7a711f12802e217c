//! Hand-written ternary plots of the action simplex and the belief simplex.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{Agent, TimestepRecord};
use crate::adversary::build_polytope;
use crate::error::{Error, Result};
use crate::model::{Action, Belief, Scenario};
use crate::obfuscator::simplex_grid;

const SIDE: f64 = 360.0;
const MARGIN: f64 = 40.0;
const PANEL_GAP: f64 = 60.0;
/// Height in pixels of a bar carrying all the probability mass.
const BAR_SCALE: f64 = 80.0;
const POLYGON_DIRECTIONS: usize = 48;

fn color(agent: Agent) -> &'static str {
    match agent {
        Agent::Odm => "#222222",
        Agent::Cdm => "#1f77b4",
        Agent::Pdm => "#d62728",
    }
}

/// Triangle vertices of one panel in screen coordinates.
struct Panel {
    vertices: [(f64, f64); 3],
}

impl Panel {
    fn new(x0: f64) -> Self {
        let h = SIDE * 3f64.sqrt() / 2.0;
        let top = MARGIN + 20.0;
        Panel {
            vertices: [(x0, top + h), (x0 + SIDE, top + h), (x0 + SIDE / 2.0, top)],
        }
    }

    fn project(&self, p: &[f64]) -> (f64, f64) {
        let x = (0..3).map(|i| p[i] * self.vertices[i].0).sum();
        let y = (0..3).map(|i| p[i] * self.vertices[i].1).sum();
        (x, y)
    }

    fn frame(&self, out: &mut String, title: &str, labels: [&str; 3]) {
        let [a, b, c] = self.vertices;
        let _ = writeln!(
            out,
            r##"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="none" stroke="#888" stroke-width="1"/>"##,
            a.0, a.1, b.0, b.1, c.0, c.1
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{title}</text>"#,
            c.0,
            MARGIN - 5.0
        );
        let offsets = [(-12.0, 16.0), (12.0, 16.0), (0.0, -8.0)];
        for (i, label) in labels.iter().enumerate() {
            let (x, y) = self.vertices[i];
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{label}</text>"#,
                x + offsets[i].0,
                y + offsets[i].1
            );
        }
    }

    /// Support points of the belief set, in angular order.
    fn outline(&self, scenario: &Scenario, action: &Action) -> Result<Option<Vec<(f64, f64)>>> {
        let poly = build_polytope(scenario, action)?;
        if poly.is_empty()? {
            return Ok(None);
        }
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(POLYGON_DIRECTIONS);
        for j in 0..POLYGON_DIRECTIONS {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / POLYGON_DIRECTIONS as f64;
            let (wx, wy) = (theta.cos(), theta.sin());
            // Minimizing −w·P(π) finds the point furthest along w on screen.
            let dir: Vec<f64> = self.vertices.iter().map(|(x, y)| -(wx * x + wy * y)).collect();
            let p = self.project(&poly.extreme_point(&dir)?);
            let fresh = pts
                .last()
                .is_none_or(|q| (q.0 - p.0).abs() > 1e-6 || (q.1 - p.1).abs() > 1e-6);
            if fresh {
                pts.push(p);
            }
        }
        while pts.len() > 1 {
            let (f, l) = (pts[0], pts[pts.len() - 1]);
            if (f.0 - l.0).abs() > 1e-6 || (f.1 - l.1).abs() > 1e-6 {
                break;
            }
            pts.pop();
        }
        Ok(Some(pts))
    }
}

/// Two-panel ternary plot for one timestep: the action grid with chosen
/// actions and mixing masses, and the belief simplex with the true belief and
/// each agent's reconstructed belief set.
pub fn ternary_svg(scenario: &Scenario, record: &TimestepRecord, grid_resolution: usize) -> Result<String> {
    if scenario.assets() != 3 || scenario.states() != 3 {
        return Err(Error::TernaryDimension {
            actions: scenario.assets(),
            beliefs: scenario.states(),
        });
    }
    let actions = Panel::new(MARGIN);
    let beliefs = Panel::new(MARGIN + SIDE + PANEL_GAP);
    let width = 2.0 * SIDE + 2.0 * MARGIN + PANEL_GAP;
    let height = SIDE * 3f64.sqrt() / 2.0 + 2.0 * MARGIN + 60.0;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    actions.frame(&mut out, &format!("actions, k = {}", record.k), ["u1", "u2", "u3"]);
    beliefs.frame(&mut out, "beliefs", ["x1", "x2", "x3"]);

    for p in simplex_grid(3, grid_resolution)?.points() {
        let (x, y) = actions.project(p.alloc());
        let _ = writeln!(out, r##"<circle cx="{x:.2}" cy="{y:.2}" r="1.5" fill="#bbb"/>"##);
    }

    let pi = Belief::normalized(record.belief.clone())?;
    for step in &record.agents {
        let c = color(step.agent);
        if let Some(policy) = &step.policy {
            for (a, m) in policy.support.iter().zip(&policy.mass) {
                let (x, y) = actions.project(a);
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{:.2}" width="6" height="{:.2}" fill="{c}" fill-opacity="0.5"/>"#,
                    x - 3.0,
                    y - m * BAR_SCALE,
                    m * BAR_SCALE
                );
            }
        }
        let (x, y) = actions.project(&step.action);
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="none" stroke="{c}" stroke-width="2"/>"#
        );

        let action = Action::new(step.action.clone())?;
        let poly = build_polytope(scenario, &action)?;
        match beliefs.outline(scenario, &action)? {
            None => {}
            Some(pts) if pts.len() == 1 => {
                let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, pts[0].0, pts[0].1);
            }
            Some(pts) => {
                let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    out,
                    r#"<polygon points="{}" fill="{c}" fill-opacity="0.2" stroke="{c}" stroke-width="1.5"/>"#,
                    coords.join(" ")
                );
            }
        }
        if let Ok((_, nearest)) = poly.nearest(&pi) {
            let (x1, y1) = beliefs.project(pi.probs());
            let (x2, y2) = beliefs.project(&nearest);
            let _ = writeln!(
                out,
                r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{c}" stroke-width="1" stroke-dasharray="4 3"/>"#
            );
        }
    }
    let (x, y) = beliefs.project(pi.probs());
    let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="black"/>"#);

    let legend_y = height - 15.0;
    for (i, agent) in record.agents.iter().map(|a| a.agent).enumerate() {
        let lx = MARGIN + i as f64 * 90.0;
        let _ = writeln!(
            out,
            r#"<circle cx="{lx:.2}" cy="{:.2}" r="5" fill="none" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{legend_y:.2}" font-size="12">{}</text>"#,
            legend_y - 4.0,
            color(agent),
            lx + 10.0,
            agent.name()
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Writes `simplex_<k>.svg` for every record into `dir`.
pub fn write_simplex_plots(
    dir: &Path,
    scenario: &Scenario,
    records: &[TimestepRecord],
    grid_resolution: usize,
) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::with_capacity(records.len());
    for rec in records {
        let svg = ternary_svg(scenario, rec, grid_resolution)?;
        let path = dir.join(format!("simplex_{}.svg", rec.k));
        std::fs::write(&path, svg).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        paths.push(path);
    }
    Ok(paths)
}
