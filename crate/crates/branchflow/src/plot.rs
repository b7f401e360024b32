//! Static SVG emission: trajectory overlays on a sampled potential
//! background, and log-scale loss curves.
//!
//! The files are plain SVG 1.1 written by hand; no drawing crate is needed
//! for rectangles, polylines and text.

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::potential::{Rect, RandomPotential};
use std::fmt::Write as _;
use std::path::Path;

/// Resolution of the potential background grid.
pub const BACKGROUND_SAMPLES: usize = 120;

const CANVAS: f64 = 640.0;
const MARGIN: f64 = 48.0;

/// Five-stop approximation of the viridis colour map.
const VIRIDIS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

fn viridis(t: f64) -> String {
    let t = t.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f64;
    let i = (t.floor() as usize).min(VIRIDIS.len() - 2);
    let f = t - i as f64;
    let c: Vec<u8> = (0..3)
        .map(|k| (VIRIDIS[i][k] + f * (VIRIDIS[i + 1][k] - VIRIDIS[i][k])).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Colours cycled through for multi-series loss plots.
const SERIES_COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn data_to_px(v: f64, min: f64, max: f64, lo_px: f64, hi_px: f64) -> f64 {
    let span = if max > min { max - min } else { 1.0 };
    lo_px + (v - min) / span * (hi_px - lo_px)
}

/// Render base and transfer trajectories over a sampled potential background.
/// Base rays are black, transfer rays blue, matching the reference figure
/// style. The window defaults to the potential sampling rectangle.
pub fn plot_trajectories(
    path: &Path,
    potential: &RandomPotential,
    base: &[Trajectory],
    transfer: &[Trajectory],
    window: Option<Rect>,
) -> Result<()> {
    let win = window.unwrap_or(potential.sampling_rect);
    if win.is_degenerate() {
        return Err(Error::Config("plot window is degenerate".into()));
    }
    let plot_lo = MARGIN;
    let plot_hi = CANVAS - MARGIN;
    let n = BACKGROUND_SAMPLES;

    // Sample the potential to find its range, then emit one rect per cell.
    let mut values = vec![0.0f64; n * n];
    let (mut vmin, mut vmax) = (f64::MAX, f64::MIN);
    for i in 0..n {
        for j in 0..n {
            let x = win.min[0] + (i as f64 + 0.5) / n as f64 * (win.max[0] - win.min[0]);
            let y = win.min[1] + (j as f64 + 0.5) / n as f64 * (win.max[1] - win.min[1]);
            let v = potential.value([x, y]);
            values[i * n + j] = v;
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
    }
    let vspan = if vmax > vmin { vmax - vmin } else { 1.0 };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{c}\" height=\"{c}\" viewBox=\"0 0 {c} {c}\">",
        c = CANVAS
    );
    let _ = writeln!(svg, "<rect width=\"{c}\" height=\"{c}\" fill=\"white\"/>", c = CANVAS);
    let cell = (plot_hi - plot_lo) / n as f64;
    for i in 0..n {
        for j in 0..n {
            let t = (values[i * n + j] - vmin) / vspan;
            // SVG y grows downward; flip the vertical index.
            let px = plot_lo + i as f64 * cell;
            let py = plot_hi - (j + 1) as f64 * cell;
            let _ = writeln!(
                svg,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                px,
                py,
                cell + 0.5,
                cell + 0.5,
                viridis(t)
            );
        }
    }
    for (set, color, width) in [(base, "black", 1.6), (transfer, "#4a90d9", 1.0)] {
        for traj in set {
            let pts: Vec<String> = traj
                .states
                .iter()
                .map(|s| {
                    let px = data_to_px(s.x, win.min[0], win.max[0], plot_lo, plot_hi);
                    let py = data_to_px(s.y, win.min[1], win.max[1], plot_hi, plot_lo);
                    format!("{:.2},{:.2}", px, py)
                })
                .collect();
            let _ = writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\"/>",
                pts.join(" "),
                color,
                width
            );
        }
    }
    let _ = writeln!(
        svg,
        "<rect x=\"{m}\" y=\"{m}\" width=\"{w}\" height=\"{w}\" fill=\"none\" stroke=\"black\"/>",
        m = MARGIN,
        w = plot_hi - plot_lo
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\">x</text>",
        CANVAS / 2.0,
        CANVAS - 12.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">y</text>",
        CANVAS / 2.0,
        CANVAS / 2.0
    );
    let _ = writeln!(svg, "</svg>");
    std::fs::write(path, svg)?;
    Ok(())
}

/// Render labeled loss curves on a log-scale vertical axis. Each series is a
/// (label, per-epoch loss) pair; non-positive values are clamped to the
/// smallest positive value in the data.
pub fn plot_loss(path: &Path, series: &[(String, Vec<f64>)]) -> Result<()> {
    if series.is_empty() || series.iter().all(|(_, c)| c.is_empty()) {
        return Err(Error::Config("loss plot needs at least one non-empty series".into()));
    }
    let floor = series
        .iter()
        .flat_map(|(_, c)| c.iter())
        .copied()
        .filter(|v| *v > 0.0 && v.is_finite())
        .fold(f64::MAX, f64::min);
    let floor = if floor == f64::MAX { 1e-12 } else { floor };
    let (mut lmin, mut lmax) = (f64::MAX, f64::MIN);
    let mut max_epochs = 1usize;
    for (_, curve) in series {
        max_epochs = max_epochs.max(curve.len());
        for &v in curve {
            let lv = v.max(floor).log10();
            lmin = lmin.min(lv);
            lmax = lmax.max(lv);
        }
    }
    if lmax <= lmin {
        lmax = lmin + 1.0;
    }
    let w = 760.0;
    let h = 480.0;
    let (x0, x1) = (64.0, w - 24.0);
    let (y0, y1) = (h - 48.0, 24.0);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<rect x=\"{x0}\" y=\"{y1}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        x1 - x0,
        y0 - y1
    );
    // Decade grid lines and tick labels.
    let (d0, d1) = (lmin.floor() as i64, lmax.ceil() as i64);
    for d in d0..=d1 {
        let py = data_to_px(d as f64, lmin, lmax, y0, y1);
        if py <= y0 && py >= y1 {
            let _ = writeln!(
                svg,
                "<line x1=\"{x0}\" y1=\"{py:.1}\" x2=\"{x1}\" y2=\"{py:.1}\" stroke=\"#dddddd\"/>"
            );
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">1e{}</text>",
                x0 - 6.0,
                py + 4.0,
                d
            );
        }
    }
    for (idx, (label, curve)) in series.iter().enumerate() {
        if curve.is_empty() {
            continue;
        }
        let color = SERIES_COLORS[idx % SERIES_COLORS.len()];
        let pts: Vec<String> = curve
            .iter()
            .enumerate()
            .map(|(e, &v)| {
                let px = data_to_px(e as f64, 0.0, (max_epochs - 1).max(1) as f64, x0, x1);
                let py = data_to_px(v.max(floor).log10(), lmin, lmax, y0, y1);
                format!("{:.1},{:.1}", px, py)
            })
            .collect();
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.4\"/>",
            pts.join(" "),
            color
        );
        let ly = y1 + 16.0 + idx as f64 * 16.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{:.1}\" x2=\"{}\" y2=\"{:.1}\" stroke=\"{}\" stroke-width=\"2\"/>",
            x0 + 10.0,
            ly - 4.0,
            x0 + 34.0,
            ly - 4.0,
            color
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{:.1}\" font-size=\"12\">{}</text>",
            x0 + 40.0,
            ly,
            label
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">epoch</text>",
        (x0 + x1) / 2.0,
        h - 14.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"18\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">mean squared residual</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    let _ = writeln!(svg, "</svg>");
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{rk4_integrate, InitialCondition};

    fn traj(potential: &RandomPotential, y0: f64) -> Trajectory {
        rk4_integrate(InitialCondition::new(y0), potential, 1.0, 1e-2).unwrap()
    }

    #[test]
    fn trajectory_svg_has_one_polyline_per_ray() {
        let p = RandomPotential::reference_default(3);
        let base: Vec<Trajectory> = (0..3).map(|i| traj(&p, i as f64 * 0.5)).collect();
        let transfer: Vec<Trajectory> = (0..5).map(|i| traj(&p, i as f64 * 0.25)).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rays.svg");
        plot_trajectories(&path, &p, &base, &transfer, None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("<polyline").count(), 8);
        assert!(text.matches("<rect").count() > BACKGROUND_SAMPLES * BACKGROUND_SAMPLES);
    }

    #[test]
    fn empty_transfer_set_still_plots_base_rays() {
        let p = RandomPotential::reference_default(3);
        let base: Vec<Trajectory> = (0..11).map(|i| traj(&p, i as f64 * 0.1)).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rays.svg");
        plot_trajectories(&path, &p, &base, &[], None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("<polyline").count(), 11);
    }

    #[test]
    fn loss_plot_labels_every_series() {
        let series = vec![
            ("classical".to_string(), vec![1.0, 0.1, 0.01]),
            ("base".to_string(), vec![2.0, 0.5]),
            ("transfer".to_string(), vec![0.3, 0.02, 0.001, 1e-5]),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.svg");
        plot_loss(&path, &series).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for label in ["classical", "base", "transfer"] {
            assert!(text.contains(label));
        }
        assert_eq!(text.matches("<polyline").count(), 3);
    }

    #[test]
    fn loss_plot_rejects_empty_input() {
        let dir = tempfile::tempdir().unwrap();
        assert!(plot_loss(&dir.path().join("loss.svg"), &[]).is_err());
    }

    #[test]
    fn loss_plot_clamps_non_positive_values() {
        let series = vec![("run".to_string(), vec![1.0, 0.0, -1.0, 0.5])];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.svg");
        plot_loss(&path, &series).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().contains("<polyline"));
    }
}
