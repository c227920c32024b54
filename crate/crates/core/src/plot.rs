//! SVG rendering of sweep and ensemble datasets. The CSV files are the
//! canonical artifacts; these plots are derived conveniences, so they are
//! hand-rolled scatter/line drawings with no external renderer.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::continuation::{BifurcationRow, ScenarioTable};
use crate::Result;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 560.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;
/// Scatter points beyond this budget are thinned evenly.
const MAX_POINTS: usize = 20_000;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

struct Axes {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Axes {
    fn from_points<'a, I: Iterator<Item = (f64, f64)>>(points: I) -> Axes
    where
        I: 'a,
    {
        let mut x_lo = f64::INFINITY;
        let mut x_hi = f64::NEG_INFINITY;
        let mut y_lo = f64::INFINITY;
        let mut y_hi = f64::NEG_INFINITY;
        for (x, y) in points {
            if !(x.is_finite() && y.is_finite()) {
                continue;
            }
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
        if !x_lo.is_finite() {
            return Axes {
                x_lo: 0.0,
                x_hi: 1.0,
                y_lo: 0.0,
                y_hi: 1.0,
            };
        }
        let pad = |lo: f64, hi: f64| {
            let span = (hi - lo).max(1e-9);
            (lo - 0.05 * span, hi + 0.05 * span)
        };
        let (x_lo, x_hi) = pad(x_lo, x_hi);
        let (y_lo, y_hi) = pad(y_lo, y_hi);
        Axes { x_lo, x_hi, y_lo, y_hi }
    }

    fn map_x(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn map_y(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y_lo) / (self.y_hi - self.y_lo) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn write_frame(
    w: &mut impl Write,
    axes: &Axes,
    x_label: &str,
    y_label: &str,
) -> std::io::Result<()> {
    writeln!(
        w,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    )?;
    writeln!(w, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>")?;
    writeln!(
        w,
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>",
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B
    )?;
    for i in 0..=4 {
        let fx = i as f64 / 4.0;
        let xv = axes.x_lo + fx * (axes.x_hi - axes.x_lo);
        let yv = axes.y_lo + fx * (axes.y_hi - axes.y_lo);
        let px = axes.map_x(xv);
        let py = axes.map_y(yv);
        writeln!(
            w,
            "<line x1=\"{px:.1}\" y1=\"{}\" x2=\"{px:.1}\" y2=\"{}\" stroke=\"#333\"/>",
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 5.0
        )?;
        writeln!(
            w,
            "<text x=\"{px:.1}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" fill=\"#333\">{xv:.3}</text>",
            HEIGHT - MARGIN_B + 20.0
        )?;
        writeln!(
            w,
            "<line x1=\"{}\" y1=\"{py:.1}\" x2=\"{MARGIN_L}\" y2=\"{py:.1}\" stroke=\"#333\"/>",
            MARGIN_L - 5.0
        )?;
        writeln!(
            w,
            "<text x=\"{}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"end\" fill=\"#333\">{yv:.3}</text>",
            MARGIN_L - 9.0,
            py + 4.0
        )?;
    }
    writeln!(
        w,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"14\" text-anchor=\"middle\" fill=\"#333\">{x_label}</text>",
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0,
        HEIGHT - 12.0
    )?;
    writeln!(
        w,
        "<text x=\"18\" y=\"{:.1}\" font-size=\"14\" text-anchor=\"middle\" fill=\"#333\" transform=\"rotate(-90 18 {:.1})\">{y_label}</text>",
        MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) / 2.0,
        MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) / 2.0
    )?;
    Ok(())
}

fn write_legend(w: &mut impl Write, entries: &[(String, &str)]) -> std::io::Result<()> {
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = MARGIN_T + 10.0 + i as f64 * 18.0;
        writeln!(
            w,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{color}\"/>",
            WIDTH - MARGIN_R + 12.0,
            y
        )?;
        writeln!(
            w,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"#333\">{label}</text>",
            WIDTH - MARGIN_R + 27.0,
            y + 9.0
        )?;
    }
    Ok(())
}

/// Renders a bifurcation dataset: one scatter layer per label, thinned to
/// the point budget; branches of fixed points are drawn as polylines.
pub fn plot_branches(
    path: &Path,
    rows: &[BifurcationRow],
    x_label: &str,
    y_label: &str,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let axes = Axes::from_points(rows.iter().map(|r| (r.param, r.value)));
    write_frame(&mut w, &axes, x_label, y_label)?;

    let mut labels: Vec<String> = Vec::new();
    for row in rows {
        if !labels.contains(&row.label) {
            labels.push(row.label.clone());
        }
    }
    labels.sort();
    let color_of = |label: &str| {
        let idx = labels.iter().position(|l| l == label).unwrap_or(0);
        PALETTE[idx % PALETTE.len()]
    };

    // Fixed-point runs become polylines, one per branch.
    let mut line_branches: Vec<&str> = Vec::new();
    for row in rows {
        if row.label == "fixed_point" && !line_branches.contains(&row.branch_id.as_str()) {
            line_branches.push(&row.branch_id);
        }
    }
    for branch in &line_branches {
        let mut pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.label == "fixed_point" && r.branch_id == *branch)
            .map(|r| (r.param, r.value))
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let path_pts: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{:.1},{:.1}", axes.map_x(*x), axes.map_y(*y)))
            .collect();
        writeln!(
            w,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            path_pts.join(" "),
            color_of("fixed_point")
        )?;
    }

    let scatter: Vec<&BifurcationRow> = rows.iter().filter(|r| r.label != "fixed_point").collect();
    let stride = scatter.len().div_ceil(MAX_POINTS).max(1);
    for row in scatter.iter().step_by(stride) {
        writeln!(
            w,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"1.4\" fill=\"{}\"/>",
            axes.map_x(row.param),
            axes.map_y(row.value),
            color_of(&row.label)
        )?;
    }

    let legend: Vec<(String, &str)> = labels.iter().map(|l| (l.clone(), color_of(l))).collect();
    write_legend(&mut w, &legend)?;
    writeln!(w, "</svg>")?;
    w.flush()?;
    Ok(())
}

/// Renders scenario frequencies against the spectral radius, one line per
/// scenario.
pub fn plot_ensemble(path: &Path, table: &ScenarioTable) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let points = table.rhos.iter().enumerate().flat_map(|(i, &rho)| {
        table.counts[i].iter().map(move |&c| (rho, c as f64))
    });
    let axes = Axes::from_points(points);
    write_frame(&mut w, &axes, "rho", "matrices")?;
    let mut legend = Vec::new();
    for s in 0..5 {
        let color = PALETTE[s % PALETTE.len()];
        let pts: Vec<String> = table
            .rhos
            .iter()
            .enumerate()
            .map(|(i, &rho)| {
                format!(
                    "{:.1},{:.1}",
                    axes.map_x(rho),
                    axes.map_y(table.counts[i][s] as f64)
                )
            })
            .collect();
        if !pts.is_empty() {
            writeln!(
                w,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                pts.join(" ")
            )?;
            for p in &pts {
                let mut it = p.split(',');
                let (x, y) = (it.next().unwrap(), it.next().unwrap());
                writeln!(w, "<circle cx=\"{x}\" cy=\"{y}\" r=\"3\" fill=\"{color}\"/>")?;
            }
        }
        legend.push((format!("scenario {}", s + 1), color));
    }
    write_legend(&mut w, &legend)?;
    writeln!(w, "</svg>")?;
    w.flush()?;
    Ok(())
}
