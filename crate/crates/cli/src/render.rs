//! SVG and ASCII renderings of a planned path over its scenario.

use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Free,
    Blocked,
    /// Cost shading, larger is darker.
    Shade(f64),
    /// Target region, e.g. the gripper box.
    Zone,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridDrawing {
    pub width: i32,
    pub height: i32,
    /// Row-major from `y = 0`, which is drawn at the bottom.
    pub cells: Vec<Cell>,
    pub start: (i32, i32),
    pub goal: Option<(i32, i32)>,
    pub markers: Vec<(i32, i32)>,
    pub path: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDrawing {
    pub x: (f64, f64),
    pub y: (f64, f64),
    /// Lower-left and upper-right corners of the goal region.
    pub goal: ((f64, f64), (f64, f64)),
    pub path: Vec<(f64, f64)>,
    pub x_label: String,
    pub y_label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Drawing {
    Grid(GridDrawing),
    Phase(PhaseDrawing),
}

const CELL: f64 = 24.0;
const SHADES: &[u8] = b"0123456789";

impl GridDrawing {
    fn max_shade(&self) -> f64 {
        self.cells.iter().filter_map(|c| if let Cell::Shade(v) = c { Some(*v) } else { None }).fold(0.0, f64::max)
    }

    fn cell(&self, x: i32, y: i32) -> Cell {
        self.cells[(y * self.width + x) as usize]
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        ((x + 0.5) * CELL, (self.height as f64 - y - 0.5) * CELL)
    }
}

/// Split a phase path wherever it wraps around in `x`.
fn segments(path: &[(f64, f64)], span: f64) -> Vec<Vec<(f64, f64)>> {
    let mut out: Vec<Vec<(f64, f64)>> = Vec::new();
    for (i, &p) in path.iter().enumerate() {
        if i == 0 || (p.0 - path[i - 1].0).abs() > span / 2.0 {
            out.push(Vec::new());
        }
        out.last_mut().expect("segment started").push(p);
    }
    out
}

fn polyline(points: impl Iterator<Item = (f64, f64)>, colour: &str) -> String {
    let pts: Vec<String> = points.map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
    format!("<polyline points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\"/>\n", pts.join(" "))
}

impl Drawing {
    pub fn svg(&self, header: &str) -> String {
        let mut s = String::new();
        match self {
            Drawing::Grid(g) => {
                let (w, h) = (g.width as f64 * CELL, g.height as f64 * CELL);
                let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">");
                let _ = writeln!(s, "<!-- {header} -->");
                let max = g.max_shade();
                for y in 0..g.height {
                    for x in 0..g.width {
                        let fill = match g.cell(x, y) {
                            Cell::Free => "#ffffff".to_string(),
                            Cell::Blocked => "#404040".to_string(),
                            Cell::Zone => "#dbe7f5".to_string(),
                            Cell::Shade(v) => {
                                let k = 255 - (if max > 0.0 { v / max } else { 0.0 } * 160.0) as u8;
                                format!("#{k:02x}{k:02x}{k:02x}")
                            }
                        };
                        let (px, py) = (x as f64 * CELL, (g.height - 1 - y) as f64 * CELL);
                        let _ = writeln!(s, "<rect x=\"{px}\" y=\"{py}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{fill}\" stroke=\"#cccccc\"/>");
                    }
                }
                for &(x, y) in &g.markers {
                    let (px, py) = g.px(x as f64, y as f64);
                    let _ = writeln!(s, "<rect class=\"marker\" x=\"{}\" y=\"{}\" width=\"16\" height=\"16\" fill=\"#e69500\"/>", px - 8.0, py - 8.0);
                }
                if g.path.len() > 1 {
                    s.push_str(&polyline(g.path.iter().map(|&(x, y)| g.px(x, y)), "#1f5fbf"));
                }
                let (sx, sy) = g.px(g.start.0 as f64, g.start.1 as f64);
                let _ = writeln!(s, "<circle class=\"start\" cx=\"{sx}\" cy=\"{sy}\" r=\"7\" fill=\"#2a9d3a\"/>");
                if let Some((gx, gy)) = g.goal {
                    let (px, py) = g.px(gx as f64, gy as f64);
                    let _ = writeln!(s, "<rect class=\"goal\" x=\"{}\" y=\"{}\" width=\"14\" height=\"14\" fill=\"#c62828\"/>", px - 7.0, py - 7.0);
                }
            }
            Drawing::Phase(p) => {
                let (w, h, m) = (480.0, 320.0, 30.0);
                let sx = |x: f64| m + (x - p.x.0) / (p.x.1 - p.x.0) * (w - 2.0 * m);
                let sy = |y: f64| h - m - (y - p.y.0) / (p.y.1 - p.y.0) * (h - 2.0 * m);
                let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">");
                let _ = writeln!(s, "<!-- {header} -->");
                let _ = writeln!(s, "<rect x=\"{m}\" y=\"{m}\" width=\"{}\" height=\"{}\" fill=\"#ffffff\" stroke=\"#000000\"/>", w - 2.0 * m, h - 2.0 * m);
                let ((x0, y0), (x1, y1)) = p.goal;
                let _ = writeln!(
                    s,
                    "<rect class=\"goal\" x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#f4c7c3\"/>",
                    sx(x0),
                    sy(y1),
                    sx(x1) - sx(x0),
                    sy(y0) - sy(y1)
                );
                for seg in segments(&p.path, p.x.1 - p.x.0) {
                    s.push_str(&polyline(seg.into_iter().map(|(x, y)| (sx(x), sy(y))), "#1f5fbf"));
                }
                if let Some(&(x, y)) = p.path.first() {
                    let _ = writeln!(s, "<circle class=\"start\" cx=\"{:.1}\" cy=\"{:.1}\" r=\"5\" fill=\"#2a9d3a\"/>", sx(x), sy(y));
                }
                let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>", w / 2.0, h - 8.0, p.x_label);
                let _ = writeln!(s, "<text x=\"4\" y=\"{}\" font-size=\"12\">{}</text>", h / 2.0, p.y_label);
            }
        }
        s.push_str("</svg>\n");
        s
    }

    pub fn ascii(&self, header: &str) -> String {
        let mut rows: Vec<Vec<u8>>;
        match self {
            Drawing::Grid(g) => {
                let max = g.max_shade();
                rows = (0..g.height)
                    .rev()
                    .map(|y| {
                        (0..g.width)
                            .map(|x| match g.cell(x, y) {
                                Cell::Free => b'.',
                                Cell::Blocked => b'#',
                                Cell::Zone => b':',
                                Cell::Shade(v) => SHADES[((if max > 0.0 { v / max } else { 0.0 }) * 9.0).round() as usize],
                            })
                            .collect()
                    })
                    .collect();
                let mut put = |x: i32, y: i32, c: u8| {
                    if (0..g.width).contains(&x) && (0..g.height).contains(&y) {
                        rows[(g.height - 1 - y) as usize][x as usize] = c;
                    }
                };
                for &(x, y) in &g.markers {
                    put(x, y, b'b');
                }
                for &(x, y) in &g.path {
                    put(x.round() as i32, y.round() as i32, b'o');
                }
                put(g.start.0, g.start.1, b'S');
                if let Some((x, y)) = g.goal {
                    put(x, y, b'G');
                }
            }
            Drawing::Phase(p) => {
                let (w, h) = (64usize, 20usize);
                let col = |x: f64| (((x - p.x.0) / (p.x.1 - p.x.0) * w as f64) as usize).min(w - 1);
                let row = |y: f64| h - 1 - (((y - p.y.0) / (p.y.1 - p.y.0) * h as f64) as usize).min(h - 1);
                rows = vec![vec![b' '; w]; h];
                let ((x0, y0), (x1, y1)) = p.goal;
                for r in row(y1)..=row(y0) {
                    for c in col(x0)..=col(x1) {
                        rows[r][c] = b'+';
                    }
                }
                for &(x, y) in &p.path {
                    rows[row(y)][col(x)] = b'*';
                }
                if let Some(&(x, y)) = p.path.first() {
                    rows[row(y)][col(x)] = b'S';
                }
            }
        }
        let mut s = format!("# {header}\n");
        for r in rows {
            s.push_str(std::str::from_utf8(&r).expect("ascii"));
            s.push('\n');
        }
        s
    }
}
