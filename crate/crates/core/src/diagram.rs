//! Genji-mon layout.
//!
//! Abstract coordinates: x is the column (round 1 at x = 4, round 5 at x = 0,
//! read right to left), y grows upward from 0 to the full height of 10.
//!
//! Connectors for groups of two or more rounds are placed in order of their
//! leftmost column. A connector sits at height 10 unless its span overlaps an
//! already placed connector, in which case it goes one unit below the lowest
//! overlapping one. Members rise exactly to their connector. Members of other
//! groups keep their own height and may cross a lower bar. Singletons rise to
//! full height, except when enclosed by a connector's span: then they stop one
//! unit below the lowest enclosing connector so they never touch it.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::partition::{Partition, MAX_ROUNDS};

pub const FULL_HEIGHT: i32 = 10;
pub const STROKE_WIDTH: f64 = 0.12;

/// A line segment in abstract layout units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Segment {
    pub x1: i32,
    pub y1: i32,
    pub x2: i32,
    pub y2: i32,
}

impl Segment {
    pub fn is_vertical(&self) -> bool {
        self.x1 == self.x2
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternDiagram {
    /// Verticals in round order, then connectors in placement order.
    pub segments: Vec<Segment>,
    /// `columns[i]` is the x-coordinate of round `i + 1`.
    pub columns: Vec<i32>,
}

/// Column of a 1-based round.
pub fn column_of(round: usize) -> i32 {
    (MAX_ROUNDS - round) as i32
}

/// Renders a complete five-round pattern.
pub fn render_pattern(p: &Partition) -> Option<PatternDiagram> {
    (p.len() == MAX_ROUNDS).then(|| render_prefix(p))
}

/// Renders a partition over the first `p.len()` rounds using their fixed
/// columns; later rounds' columns are left empty.
pub fn render_prefix(p: &Partition) -> PatternDiagram {
    let columns: Vec<i32> = (1..=p.len()).map(column_of).collect();

    // (span_lo, span_hi, members) for groups of size >= 2
    let mut groups: Vec<(i32, i32, Vec<usize>)> = p
        .groups()
        .into_iter()
        .filter(|g| g.len() >= 2)
        .map(|g| {
            let xs = g.iter().map(|&i| columns[i]);
            let lo = xs.clone().min().unwrap();
            let hi = xs.max().unwrap();
            (lo, hi, g)
        })
        .collect();
    groups.sort_by_key(|g| g.0);

    let mut placed: Vec<(i32, i32, i32)> = Vec::new(); // (lo, hi, height)
    let mut tops: Vec<Option<i32>> = alloc::vec![None; p.len()];
    for (lo, hi, members) in &groups {
        let height = placed
            .iter()
            .filter(|(plo, phi, _)| plo <= hi && lo <= phi)
            .map(|&(_, _, h)| h - 1)
            .min()
            .unwrap_or(FULL_HEIGHT);
        placed.push((*lo, *hi, height));
        for &m in members {
            tops[m] = Some(height);
        }
    }

    let mut segments = Vec::with_capacity(p.len() + placed.len());
    for (i, &x) in columns.iter().enumerate() {
        let top = tops[i].unwrap_or_else(|| {
            placed
                .iter()
                .filter(|(lo, hi, _)| *lo <= x && x <= *hi)
                .map(|&(_, _, h)| h - 1)
                .min()
                .unwrap_or(FULL_HEIGHT)
        });
        segments.push(Segment { x1: x, y1: 0, x2: x, y2: top });
    }
    for &(lo, hi, h) in &placed {
        segments.push(Segment { x1: lo, y1: h, x2: hi, y2: h });
    }
    PatternDiagram { segments, columns }
}

impl PatternDiagram {
    pub fn verticals(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.is_vertical())
    }

    pub fn connectors(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| !s.is_vertical())
    }

    /// Segment set in a canonical order, for comparisons.
    pub fn segment_set(&self) -> alloc::collections::BTreeSet<Segment> {
        self.segments.iter().copied().collect()
    }

    /// Standalone SVG document (viewBox `0 0 5 11`). Abstract `(x, y)` maps
    /// to `(x + 0.5, 10.5 - y)`.
    pub fn to_svg(&self) -> String {
        let mut out = String::new();
        out.push_str("<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 5 11\">\n");
        let _ = writeln!(
            out,
            "<g stroke=\"#000\" stroke-width=\"{STROKE_WIDTH}\" stroke-linecap=\"square\" fill=\"none\">"
        );
        for s in &self.segments {
            let _ = writeln!(
                out,
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"/>",
                svg_x(s.x1),
                svg_y(s.y1),
                svg_x(s.x2),
                svg_y(s.y2)
            );
        }
        out.push_str("</g>\n</svg>\n");
        out
    }
}

fn svg_x(x: i32) -> String {
    format!("{}", x as f64 + 0.5)
}

fn svg_y(y: i32) -> String {
    format!("{}", 10.5 - y as f64)
}
