//! Structured triangulations of the rectangle `(0, alpha) x (0, beta)`.
//!
//! The left side `x1 = 0` is the homogeneous Dirichlet part, the right side
//! `x1 = alpha` carries the prescribed temperature and the top and bottom sides
//! carry the nonsmooth heat-exchange law. Corner nodes are shared between a
//! Dirichlet side and the exchange boundary; for constraint purposes they
//! belong to the Dirichlet side.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Boundary part an edge belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    /// `x1 = 0`, homogeneous Dirichlet.
    Gamma1,
    /// `x1 = alpha`, prescribed temperature.
    Gamma2,
    /// Top and bottom sides, subdifferential heat-exchange law.
    Gamma3,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 3] = [BoundaryTag::Gamma1, BoundaryTag::Gamma2, BoundaryTag::Gamma3];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Gamma1 => "Gamma1",
            BoundaryTag::Gamma2 => "Gamma2",
            BoundaryTag::Gamma3 => "Gamma3",
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

/// Classification of a node for the purpose of essential conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    /// On `x1 = 0` (value pinned to zero in every formulation).
    Gamma1,
    /// On `x1 = alpha` (value pinned to the datum unless the boundary
    /// condition is penalized).
    Gamma2,
    /// Everything else, including the non-corner nodes of the exchange boundary.
    Free,
}

/// Uniform triangulation of a rectangle, every cell split along its
/// south-west/north-east diagonal.
///
/// Nodes are numbered column by column, `id = i * (ny + 1) + j`, where `i`
/// indexes `x1` and `j` indexes `x2`. The half-bandwidth of every assembled
/// operator is therefore `ny + 2`.
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub alpha: f64,
    pub beta: f64,
    pub nx: usize,
    pub ny: usize,
    pub nodes: Vec<Point>,
    /// Counter-clockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    classes: Vec<NodeClass>,
}

/// Builds the structured mesh of `(0, alpha) x (0, beta)` with `nx` by `ny` cells.
pub fn build_rect_mesh(alpha: f64, beta: f64, nx: usize, ny: usize) -> Result<TriMesh> {
    if !(alpha > 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "domain dimensions must be positive and finite (alpha = {alpha}, beta = {beta})"
        )));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(format!(
            "subdivision counts must be at least 1 (nx = {nx}, ny = {ny})"
        )));
    }

    let id = |i: usize, j: usize| i * (ny + 1) + j;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut classes = Vec::with_capacity((nx + 1) * (ny + 1));
    for i in 0..=nx {
        let x = alpha * i as f64 / nx as f64;
        for j in 0..=ny {
            let y = beta * j as f64 / ny as f64;
            nodes.push([x, y]);
            classes.push(if i == 0 {
                NodeClass::Gamma1
            } else if i == nx {
                NodeClass::Gamma2
            } else {
                NodeClass::Free
            });
        }
    }

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let (p00, p10, p11, p01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([p00, p10, p11]);
            triangles.push([p00, p11, p01]);
        }
    }

    // Boundary traversed counter-clockwise.
    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        boundary_edges.push(BoundaryEdge {
            nodes: [id(i, 0), id(i + 1, 0)],
            tag: BoundaryTag::Gamma3,
        });
    }
    for j in 0..ny {
        boundary_edges.push(BoundaryEdge {
            nodes: [id(nx, j), id(nx, j + 1)],
            tag: BoundaryTag::Gamma2,
        });
    }
    for i in (0..nx).rev() {
        boundary_edges.push(BoundaryEdge {
            nodes: [id(i + 1, ny), id(i, ny)],
            tag: BoundaryTag::Gamma3,
        });
    }
    for j in (0..ny).rev() {
        boundary_edges.push(BoundaryEdge {
            nodes: [id(0, j + 1), id(0, j)],
            tag: BoundaryTag::Gamma1,
        });
    }

    Ok(TriMesh {
        alpha,
        beta,
        nx,
        ny,
        nodes,
        triangles,
        boundary_edges,
        classes,
    })
}

/// Nodes incident to at least one boundary edge carrying `tag`.
pub fn boundary_nodes(mesh: &TriMesh, tag: BoundaryTag) -> BTreeSet<usize> {
    mesh.boundary_edges
        .iter()
        .filter(|e| e.tag == tag)
        .flat_map(|e| e.nodes)
        .collect()
}

impl TriMesh {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_id(&self, i: usize, j: usize) -> usize {
        i * (self.ny + 1) + j
    }

    pub fn node_class(&self, node: usize) -> NodeClass {
        self.classes[node]
    }

    pub fn hx(&self) -> f64 {
        self.alpha / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.beta / self.ny as f64
    }

    /// Twice the signed area of triangle `t`.
    pub fn signed_double_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|n| self.nodes[n]);
        (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
    }

    pub fn measure(&self, tag: BoundaryTag) -> f64 {
        self.boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .map(|e| edge_length(self.nodes[e.nodes[0]], self.nodes[e.nodes[1]]))
            .sum()
    }

    /// Nodal interpolation of a function of the coordinates.
    pub fn interpolate(&self, mut g: impl FnMut(Point) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&p| g(p)).collect()
    }

    /// Evaluates the piecewise-linear function with nodal `values` at `p`.
    /// Points outside the rectangle are clamped onto it.
    pub fn eval_p1(&self, values: &[f64], p: Point) -> f64 {
        let (hx, hy) = (self.hx(), self.hy());
        let sx = (p[0] / hx).clamp(0.0, self.nx as f64);
        let sy = (p[1] / hy).clamp(0.0, self.ny as f64);
        let i = (sx.floor() as usize).min(self.nx - 1);
        let j = (sy.floor() as usize).min(self.ny - 1);
        let (s, t) = (sx - i as f64, sy - j as f64);
        let v00 = values[self.node_id(i, j)];
        let v10 = values[self.node_id(i + 1, j)];
        let v11 = values[self.node_id(i + 1, j + 1)];
        let v01 = values[self.node_id(i, j + 1)];
        if s >= t {
            v00 + s * (v10 - v00) + t * (v11 - v10)
        } else {
            v00 + t * (v01 - v00) + s * (v11 - v01)
        }
    }

    /// Transfers nodal values from a coarser (nested) mesh of the same rectangle.
    pub fn prolongate_from(&self, coarse: &TriMesh, coarse_values: &[f64]) -> Vec<f64> {
        self.nodes.iter().map(|&p| coarse.eval_p1(coarse_values, p)).collect()
    }

    /// Writes `nodes.csv`, `tris.csv` and `edges.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let mut w = csv::Writer::from_path(dir.join("nodes.csv"))?;
        w.write_record(["id", "x", "y"])?;
        for (id, p) in self.nodes.iter().enumerate() {
            w.write_record([id.to_string(), format!("{:?}", p[0]), format!("{:?}", p[1])])?;
        }
        w.flush().map_err(|e| Error::io(dir.join("nodes.csv"), e))?;

        let mut w = csv::Writer::from_path(dir.join("tris.csv"))?;
        w.write_record(["id", "n0", "n1", "n2"])?;
        for (id, t) in self.triangles.iter().enumerate() {
            w.write_record([id.to_string(), t[0].to_string(), t[1].to_string(), t[2].to_string()])?;
        }
        w.flush().map_err(|e| Error::io(dir.join("tris.csv"), e))?;

        let mut w = csv::Writer::from_path(dir.join("edges.csv"))?;
        w.write_record(["n0", "n1", "tag"])?;
        for e in &self.boundary_edges {
            w.write_record([e.nodes[0].to_string(), e.nodes[1].to_string(), e.tag.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(dir.join("edges.csv"), e))?;
        Ok(())
    }
}

pub(crate) fn edge_length(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}
