//! Static SVG heat map of the efficiency sweep.

use std::fmt::Write;

use mlcdr_core::SweepPoint;

const CELL: f64 = 56.0;
const LEFT: f64 = 72.0;
const TOP: f64 = 42.0;
const BOTTOM: f64 = 52.0;
const RIGHT: f64 = 20.0;

/// Diverging ramp from blue through near-white to red.
fn color(t: f64) -> String {
    let lerp = |a: u8, b: u8, s: f64| (a as f64 + (b as f64 - a as f64) * s).round() as u8;
    let (lo, mid, hi) = ((0x31, 0x6c, 0xb5), (0xf2, 0xf2, 0xee), (0xb5, 0x39, 0x2e));
    let (from, to, s) = if t < 0.5 { (lo, mid, 2.0 * t) } else { (mid, hi, 2.0 * t - 1.0) };
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(from.0, to.0, s),
        lerp(from.1, to.1, s),
        lerp(from.2, to.2, s)
    )
}

/// Render rho over the grid, sigma_v on the x axis and sigma_u on the y axis
/// growing upward. `points` must be the row-major product of `vs` and `us`
/// with the sigma_v axis outermost, as `cmd_sweep` builds it.
pub fn sweep_heatmap(points: &[SweepPoint], vs: &[f64], us: &[f64]) -> String {
    let (nv, nu) = (vs.len(), us.len());
    assert_eq!(points.len(), nv * nu, "grid shape mismatch");
    let width = LEFT + CELL * nv as f64 + RIGHT;
    let height = TOP + CELL * nu as f64 + BOTTOM;
    let rho_lo = points.iter().map(|p| p.rho).fold(f64::INFINITY, f64::min);
    let rho_hi = points.iter().map(|p| p.rho).fold(f64::NEG_INFINITY, f64::max);
    let norm = |rho: f64| {
        if rho_hi - rho_lo < 1e-12 {
            0.5
        } else {
            (rho - rho_lo) / (rho_hi - rho_lo)
        }
    };

    let mut s = String::new();
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"monospace\" font-size=\"12\">\n"
    );
    let _ = write!(
        s,
        "<text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\">Var(aipw) / Var(proposed)</text>\n",
        LEFT + CELL * nv as f64 / 2.0
    );
    for (iv, &v) in vs.iter().enumerate() {
        for (iu, &u) in us.iter().enumerate() {
            let p = &points[iv * nu + iu];
            let x = LEFT + CELL * iv as f64;
            let y = TOP + CELL * (nu - 1 - iu) as f64;
            let _ = write!(
                s,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{CELL}\" height=\"{CELL}\" \
                 fill=\"{}\" stroke=\"#ffffff\"><title>sigma_v={v} sigma_u={u} rho={}</title></rect>\n",
                color(norm(p.rho)),
                p.rho
            );
            let _ = write!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.2}</text>\n",
                x + CELL / 2.0,
                y + CELL / 2.0 + 4.0,
                p.rho
            );
        }
    }
    for (iv, &v) in vs.iter().enumerate() {
        let _ = write!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{v}</text>\n",
            LEFT + CELL * (iv as f64 + 0.5),
            TOP + CELL * nu as f64 + 16.0
        );
    }
    for (iu, &u) in us.iter().enumerate() {
        let _ = write!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{u}</text>\n",
            LEFT - 8.0,
            TOP + CELL * ((nu - 1 - iu) as f64 + 0.5) + 4.0
        );
    }
    let _ = write!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">sigma_v</text>\n",
        LEFT + CELL * nv as f64 / 2.0,
        TOP + CELL * nu as f64 + 38.0
    );
    let _ = write!(
        s,
        "<text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">sigma_u</text>\n",
        TOP + CELL * nu as f64 / 2.0,
        TOP + CELL * nu as f64 / 2.0
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(sigma_v: f64, sigma_u: f64, rho: f64) -> SweepPoint {
        SweepPoint { sigma_v, sigma_u, icc_a: 0.1, icc_y: 0.2, rho }
    }

    #[test]
    fn renders_one_rect_per_grid_point() {
        let points = vec![
            point(0.0, 0.5, 1.0),
            point(0.0, 1.5, 1.8),
            point(1.0, 0.5, 1.1),
            point(1.0, 1.5, 2.4),
        ];
        let svg = sweep_heatmap(&points, &[0.0, 1.0], &[0.5, 1.5]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 4);
        assert!(svg.contains("sigma_v=1 sigma_u=1.5 rho=2.4"));
        assert_eq!(svg, sweep_heatmap(&points, &[0.0, 1.0], &[0.5, 1.5]));
    }

    #[test]
    fn flat_surface_uses_the_midpoint_color() {
        let points = vec![point(0.0, 0.0, 1.0), point(0.0, 1.0, 1.0)];
        let svg = sweep_heatmap(&points, &[0.0], &[0.0, 1.0]);
        assert_eq!(svg.matches(&color(0.5)).count(), 2);
    }
}
