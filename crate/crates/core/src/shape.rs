//! Shape specifications and their rasterization onto grids.
//!
//! ```text
//! shape = inter { ("+" | "-") inter } ;      (* union / difference, left assoc *)
//! inter = prim { "&" prim } ;                (* intersection binds tighter *)
//! prim  = "all" | "empty" | "(" shape ")"
//!       | "ball"    "(" c.., r ")"           (* open ball |x - c| < r *)
//!       | "cball"   "(" c.., r ")"           (* closed ball |x - c| <= r *)
//!       | "rect"    "(" lo.., hi.. ")"       (* open box, 1D: rect(a, b), 2D: rect(ax, ay, bx, by) *)
//!       | "point"   "(" c.. ")"              (* puncture: the cell centered at c, if any *)
//!       | "segment" "(" ax, ay, bx, by ")"   (* slit: cell centers on the segment (2D) *)
//!       | "cell"    "(" c.. ")"              (* the cell containing c *)
//! ```
//!
//! A node belongs to a shape iff its cell center satisfies the predicate.
//! `point` and `segment` are measure-zero sets and only catch centers lying on
//! them. All predicates treat a center within `1e-9 h` of an edge as lying on
//! it, so open shapes exclude and closed shapes include such centers.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{Grid, NodeSet, Point, SetRole};

#[derive(Debug, Clone, PartialEq)]
enum Prim {
    All,
    Empty,
    Ball { c: Vec<f64>, r: f64, closed: bool },
    Rect { lo: Vec<f64>, hi: Vec<f64> },
    Point(Vec<f64>),
    Segment([f64; 4]),
    Cell(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Prim(Prim),
    Union(Box<Node>, Box<Node>),
    Diff(Box<Node>, Box<Node>),
    Inter(Box<Node>, Box<Node>),
}

#[derive(Debug, Clone)]
pub struct Shape {
    source: String,
    root: Node,
    dim: Option<usize>,
}

impl PartialEq for Shape {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Shape {
    pub fn parse(source: &str) -> Result<Shape> {
        let mut p = Parser { src: source.as_bytes(), pos: 0, dim: None };
        let root = p.shape()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Shape { source: source.to_string(), root, dim: p.dim })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Dimension implied by the primitives, if any carries coordinates.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    /// Predicate on a cell center of a grid with spacing `h`.
    pub fn contains(&self, x: Point, h: f64) -> bool {
        eval(&self.root, x, h)
    }
}

/// Rasterizes `shape` onto `grid`: node `i` is in the set iff its cell center
/// satisfies the shape predicate.
pub fn rasterize(shape: &Shape, grid: &Grid, role: SetRole) -> Result<NodeSet> {
    if let Some(d) = shape.dim() {
        if d != grid.dim() {
            return Err(Error::Parse {
                pos: 0,
                msg: format!("shape is {d}-dimensional but the grid is {}-dimensional", grid.dim()),
            });
        }
    }
    let h = grid.h();
    Ok(NodeSet::from_predicate(grid, role, |c| shape.contains(c, h)))
}

fn dist(a: Point, b: &[f64]) -> f64 {
    let dx = a[0] - b[0];
    let dy = if b.len() > 1 { a[1] - b[1] } else { 0.0 };
    dx.hypot(dy)
}

fn eval(node: &Node, x: Point, h: f64) -> bool {
    match node {
        Node::Union(a, b) => eval(a, x, h) || eval(b, x, h),
        Node::Diff(a, b) => eval(a, x, h) && !eval(b, x, h),
        Node::Inter(a, b) => eval(a, x, h) && eval(b, x, h),
        Node::Prim(prim) => match prim {
            Prim::All => true,
            Prim::Empty => false,
            Prim::Ball { c, r, closed } => {
                let d = dist(x, c);
                if *closed {
                    d <= *r + 1e-9 * h
                } else {
                    d < *r - 1e-9 * h
                }
            }
            Prim::Rect { lo, hi } => {
                let eps = 1e-9 * h;
                (0..lo.len()).all(|k| x[k] > lo[k] + eps && x[k] < hi[k] - eps)
            }
            Prim::Point(c) => dist(x, c) <= 1e-9 * h,
            Prim::Segment([ax, ay, bx, by]) => {
                let (vx, vy) = (bx - ax, by - ay);
                let len2 = vx * vx + vy * vy;
                let t = if len2 > 0.0 {
                    (((x[0] - ax) * vx + (x[1] - ay) * vy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (px, py) = (ax + t * vx, ay + t * vy);
                (x[0] - px).hypot(x[1] - py) <= 1e-9 * h
            }
            Prim::Cell(c) => (0..c.len()).all(|k| {
                let lo = x[k] - 0.5 * h;
                c[k] >= lo && c[k] < lo + h
            }),
        },
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: Option<usize>,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn shape(&mut self) -> Result<Node> {
        let mut lhs = self.inter()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Node::Union(Box::new(lhs), Box::new(self.inter()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Node::Diff(Box::new(lhs), Box::new(self.inter()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn inter(&mut self) -> Result<Node> {
        let mut lhs = self.prim()?;
        while self.peek() == Some(b'&') {
            self.pos += 1;
            lhs = Node::Inter(Box::new(lhs), Box::new(self.prim()?));
        }
        Ok(lhs)
    }

    fn set_dim(&mut self, d: usize, at: usize) -> Result<()> {
        match self.dim {
            Some(prev) if prev != d => Err(Error::Parse {
                pos: at,
                msg: format!("mixes {prev}-dimensional and {d}-dimensional primitives"),
            }),
            _ => {
                self.dim = Some(d);
                Ok(())
            }
        }
    }

    fn prim(&mut self) -> Result<Node> {
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let inner = self.shape()?;
            self.expect(b')')?;
            return Ok(inner);
        }
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
        if name.is_empty() {
            return Err(self.error("expected a shape"));
        }
        match name.as_str() {
            "all" => return Ok(Node::Prim(Prim::All)),
            "empty" => return Ok(Node::Prim(Prim::Empty)),
            _ => {}
        }
        let args = self.args()?;
        let bad = |msg: &str| Error::Parse { pos: start, msg: format!("{name}: {msg}") };
        let prim = match name.as_str() {
            "ball" | "cball" => {
                if args.len() != 2 && args.len() != 3 {
                    return Err(bad("expected center coordinates and a radius"));
                }
                let r = args[args.len() - 1];
                if r <= 0.0 {
                    return Err(bad("radius must be positive"));
                }
                self.set_dim(args.len() - 1, start)?;
                Prim::Ball { c: args[..args.len() - 1].to_vec(), r, closed: name == "cball" }
            }
            "rect" => {
                if args.len() != 2 && args.len() != 4 {
                    return Err(bad("expected lower and upper corners"));
                }
                let d = args.len() / 2;
                let (lo, hi) = args.split_at(d);
                if lo.iter().zip(hi).any(|(a, b)| a >= b) {
                    return Err(bad("lower corner must be below upper corner"));
                }
                self.set_dim(d, start)?;
                Prim::Rect { lo: lo.to_vec(), hi: hi.to_vec() }
            }
            "point" | "cell" => {
                if args.is_empty() || args.len() > 2 {
                    return Err(bad("expected 1 or 2 coordinates"));
                }
                self.set_dim(args.len(), start)?;
                if name == "point" {
                    Prim::Point(args)
                } else {
                    Prim::Cell(args)
                }
            }
            "segment" => {
                if args.len() != 4 {
                    return Err(bad("expected two 2D endpoints"));
                }
                self.set_dim(2, start)?;
                Prim::Segment([args[0], args[1], args[2], args[3]])
            }
            _ => {
                return Err(Error::Parse { pos: start, msg: format!("unknown shape `{name}`") })
            }
        };
        Ok(Node::Prim(prim))
    }

    fn args(&mut self) -> Result<Vec<f64>> {
        self.expect(b'(')?;
        let mut out = vec![self.number()?];
        loop {
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                    out.push(self.number()?);
                }
                Some(b')') => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => return Err(self.error("expected `,` or `)`")),
            }
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || b"+-.eE".contains(&self.src[self.pos]))
        {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or(Error::Parse { pos: start, msg: format!("bad number `{text}`") })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_grid;

    fn xs(set: &NodeSet, grid: &Grid) -> Vec<f64> {
        set.indices().into_iter().map(|i| grid.center(i)[0]).collect()
    }

    #[test]
    fn ball_on_coarse_grid() {
        let g = build_grid(&[(-1.0, 1.0)], 0.5, 1).unwrap();
        let s = rasterize(&Shape::parse("ball(0, 0.6)").unwrap(), &g, SetRole::Domain).unwrap();
        assert_eq!(xs(&s, &g), vec![-0.25, 0.25]);
    }

    #[test]
    fn puncture_removes_exactly_one_node() {
        let g = build_grid(&[(-1.0, 1.0)], 0.25, 1).unwrap();
        let s = rasterize(&Shape::parse("rect(-1, 1) - point(0.125)").unwrap(), &g, SetRole::Domain)
            .unwrap();
        assert_eq!(s.count(), g.len() - 1);
        assert!(!xs(&s, &g).contains(&0.125));
    }

    #[test]
    fn empty_intersection() {
        let g = build_grid(&[(-1.0, 1.0), (-1.0, 1.0)], 0.25, 2).unwrap();
        let shape = Shape::parse("ball(-0.5, -0.5, 0.3) & rect(0, 0, 1, 1)").unwrap();
        assert!(rasterize(&shape, &g, SetRole::Compact).unwrap().is_empty());
    }

    #[test]
    fn slit_and_cell() {
        let g = build_grid(&[(0.0, 1.0), (0.0, 1.0)], 0.25, 2).unwrap();
        let slit = Shape::parse("rect(0,0,1,1) - segment(0.125, 0.625, 0.625, 0.625)").unwrap();
        let s = rasterize(&slit, &g, SetRole::Domain).unwrap();
        assert_eq!(s.count(), 16 - 3);
        let cell = rasterize(&Shape::parse("cell(0.3, 0.9)").unwrap(), &g, SetRole::Exceptional)
            .unwrap();
        assert_eq!(cell.indices(), vec![g.index(1, 3)]);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(Shape::parse("ball(0, 1"), Err(Error::Parse { pos: 9, .. })));
        assert!(matches!(Shape::parse("blob(1)"), Err(Error::Parse { pos: 0, .. })));
        assert!(matches!(Shape::parse("rect(1, 0)"), Err(Error::Parse { .. })));
        assert!(matches!(Shape::parse("ball(0, 1) + ball(0, 0, 1)"), Err(Error::Parse { pos: 13, .. })));
        let g = build_grid(&[(0.0, 1.0)], 0.5, 1).unwrap();
        let two_d = Shape::parse("ball(0, 0, 1)").unwrap();
        assert!(rasterize(&two_d, &g, SetRole::Domain).is_err());
    }
}
