//! Text world format: `width height resolution`, then `sx sy gx gy`, then
//! `height` rows of `.`/`#`, top row first. The origin is `(0, 0)`.

use std::fmt::Write as _;

use crate::error::SimError;
use crate::geometry::Point2;
use crate::sim::grid::{OccupancyGrid, World};

fn fmt_err(line: usize, msg: impl Into<String>) -> SimError {
    SimError::WorldFormat { line, msg: msg.into() }
}

fn numbers<T: std::str::FromStr>(line: &str, n: usize, lineno: usize) -> Result<Vec<T>, SimError> {
    let v: Vec<T> = line
        .split_whitespace()
        .map(|t| t.parse::<T>().map_err(|_| fmt_err(lineno, format!("cannot parse `{t}`"))))
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(fmt_err(lineno, format!("expected {n} fields, found {}", v.len())));
    }
    Ok(v)
}

pub fn parse_world(text: &str) -> Result<World, SimError> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim_end_matches('\r')));
    let (n1, l1) = lines.next().ok_or_else(|| fmt_err(1, "empty file"))?;
    let head: Vec<f64> = numbers(l1, 3, n1)?;
    let (w, h, res) = (head[0], head[1], head[2]);
    if w.fract() != 0.0 || h.fract() != 0.0 || w < 3.0 || h < 3.0 {
        return Err(fmt_err(n1, "width and height must be integers of at least 3"));
    }
    let (w, h) = (w as usize, h as usize);
    let (n2, l2) = lines.next().ok_or_else(|| fmt_err(2, "missing start/goal line"))?;
    let sg: Vec<f64> = numbers(l2, 4, n2)?;
    let mut cells = vec![false; w * h];
    for row in 0..h {
        let (n, l) = lines.next().ok_or_else(|| fmt_err(3 + row, format!("expected {h} grid rows, found {row}")))?;
        let chars: Vec<char> = l.chars().collect();
        if chars.len() != w {
            return Err(fmt_err(n, format!("expected {w} cells, found {}", chars.len())));
        }
        let j = h - 1 - row;
        for (i, c) in chars.into_iter().enumerate() {
            cells[j * w + i] = match c {
                '#' => true,
                '.' => false,
                other => return Err(fmt_err(n, format!("unexpected character `{other}`"))),
            };
        }
    }
    for (n, l) in lines {
        if !l.trim().is_empty() {
            return Err(fmt_err(n, "trailing content after grid rows"));
        }
    }
    let grid = OccupancyGrid::from_cells(w, h, res, Point2::default(), cells)?;
    let start = Point2::new(sg[0], sg[1]);
    let goal = Point2::new(sg[2], sg[3]);
    for p in [start, goal] {
        if !grid.contains(p) {
            return Err(fmt_err(n2, format!("point ({}, {}) lies outside the grid", p.x, p.y)));
        }
    }
    Ok(World { grid, start, goal })
}

pub fn write_world(world: &World) -> String {
    let g = &world.grid;
    let mut s = String::new();
    writeln!(s, "{} {} {}", g.width(), g.height(), g.resolution()).unwrap();
    writeln!(s, "{} {} {} {}", world.start.x, world.start.y, world.goal.x, world.goal.y).unwrap();
    for j in (0..g.height()).rev() {
        for i in 0..g.width() {
            s.push(if g.occupied(i as isize, j as isize) { '#' } else { '.' });
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let w = crate::sim::worldgen::generate_world(3, &Default::default()).unwrap();
        assert_eq!(parse_world(&write_world(&w)).unwrap(), w);
    }

    #[test]
    fn first_row_is_the_top() {
        let w = parse_world("3 4 1\n1.5 1.5 1.5 2.5\n###\n#.#\n#.#\n###\n").unwrap();
        assert_eq!(w.grid.occupied_count(), 10);
        let w = parse_world("4 4 1\n1.5 1.5 1.5 2.5\n####\n#.##\n#..#\n####").unwrap();
        assert!(w.grid.occupied(2, 2));
        assert!(!w.grid.occupied(2, 1));
    }

    #[test]
    fn border_closed_on_load() {
        let w = parse_world("3 3 0.5\n0.75 0.75 0.75 0.75\n...\n...\n...\n").unwrap();
        assert_eq!(w.grid.occupied_count(), 8);
    }

    #[test]
    fn errors_name_the_line() {
        let e = parse_world("3 3 1\n1 1 1 1\n...\n.x.\n...\n").unwrap_err();
        assert!(matches!(e, SimError::WorldFormat { line: 4, .. }), "{e}");
        let e = parse_world("3 3\n").unwrap_err();
        assert!(matches!(e, SimError::WorldFormat { line: 1, .. }));
        let e = parse_world("3 3 1\n1 1 1 1\n...\n..\n").unwrap_err();
        assert!(matches!(e, SimError::WorldFormat { line: 4, .. }));
    }
}
