//! Structured quadrilateral meshes of a rectangle split by a vertical
//! material interface.
//!
//! Nodes are numbered lexicographically by `(y, x)` on the
//! `(k*nx + 1) x (k*ny + 1)` lattice, elements lexicographically by their
//! lower-left corner. Element connectivity follows the local numbering of
//! [`crate::fem`].

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::Vector2;

use crate::error::{FemError, Result};
use crate::fem::{map_to_physical, Order};

/// Material subdomain tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subdomain {
    /// Left of the interface.
    Omega1,
    /// Right of the interface.
    Omega2,
}

impl Subdomain {
    pub fn tag(self) -> u8 {
        match self {
            Subdomain::Omega1 => 1,
            Subdomain::Omega2 => 2,
        }
    }

    pub fn index(self) -> usize {
        self.tag() as usize - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    /// The square `[-1, 1]^2`.
    pub fn biunit() -> Self {
        Rect::new(-1.0, 1.0, -1.0, 1.0)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Element edge on the outer boundary.
#[derive(Clone, Debug)]
pub struct BoundaryEdge {
    pub element: usize,
    pub local_edge: usize,
    /// Outward unit normal.
    pub normal: Vector2<f64>,
    pub length: f64,
}

/// Edge shared by two elements.
///
/// `plus` is the element with the higher index; the jump of a broken field
/// is `trace(plus) - trace(minus)` and `normal` points out of `plus`.
#[derive(Clone, Debug)]
pub struct InteriorEdge {
    pub plus: (usize, usize),
    pub minus: (usize, usize),
    pub normal: Vector2<f64>,
    pub length: f64,
}

/// Edge lying on the material interface.
#[derive(Clone, Debug)]
pub struct InterfaceEdge {
    /// `(element, local edge)` on the Omega_1 side.
    pub omega1: (usize, usize),
    /// `(element, local edge)` on the Omega_2 side.
    pub omega2: (usize, usize),
    /// Unit normal pointing from Omega_1 into Omega_2.
    pub normal: Vector2<f64>,
    /// `normal` rotated by +90 degrees.
    pub tangent: Vector2<f64>,
}

/// Interface node with its unit normal and tangent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterfaceNode {
    pub node: usize,
    pub normal: Vector2<f64>,
    pub tangent: Vector2<f64>,
}

#[derive(Clone, Debug)]
pub struct QuadMesh {
    pub order: Order,
    pub nx: usize,
    pub ny: usize,
    pub bounds: Rect,
    /// Present only when the interface lies strictly inside the rectangle.
    pub interface_x: Option<f64>,
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<Vec<usize>>,
    pub elem_subdomain: Vec<Subdomain>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub interior_edges: Vec<InteriorEdge>,
    pub interface_nodes: Vec<usize>,
    pub interface_edges: Vec<InterfaceEdge>,
}

pub fn build_structured_mesh(
    nx: usize,
    ny: usize,
    bounds: Rect,
    interface_x: f64,
    order: Order,
) -> Result<QuadMesh> {
    if nx == 0 || ny == 0 {
        return Err(FemError::InvalidMesh(format!(
            "element counts must be positive, got {nx}x{ny}"
        )));
    }
    if !(bounds.x1 > bounds.x0 && bounds.y1 > bounds.y0) {
        return Err(FemError::InvalidMesh(format!("empty rectangle {bounds:?}")));
    }
    let hx = (bounds.x1 - bounds.x0) / nx as f64;
    let hy = (bounds.y1 - bounds.y0) / ny as f64;

    // Column of element boundaries holding the interface, if inside.
    let interface_col = if interface_x > bounds.x0 && interface_x < bounds.x1 {
        let c = (interface_x - bounds.x0) / hx;
        let ci = c.round();
        if (c - ci).abs() > 1e-9 * c.abs().max(1.0) {
            return Err(FemError::MisalignedInterface { x: interface_x });
        }
        Some(ci as usize)
    } else if !interface_x.is_nan() {
        None
    } else {
        return Err(FemError::MisalignedInterface { x: interface_x });
    };

    let k = order.degree();
    let lx = k * nx + 1;
    let ly = k * ny + 1;
    let mut nodes = Vec::with_capacity(lx * ly);
    for j in 0..ly {
        for i in 0..lx {
            nodes.push([
                bounds.x0 + hx * i as f64 / k as f64,
                bounds.y0 + hy * j as f64 / k as f64,
            ]);
        }
    }
    let id = |i: usize, j: usize| j * lx + i;

    let mut elements = Vec::with_capacity(nx * ny);
    let mut elem_subdomain = Vec::with_capacity(nx * ny);
    for ey in 0..ny {
        for ex in 0..nx {
            let (i, j) = (k * ex, k * ey);
            let conn = match order {
                Order::Q1 => vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)],
                Order::Q2 => vec![
                    id(i, j),
                    id(i + 2, j),
                    id(i + 2, j + 2),
                    id(i, j + 2),
                    id(i + 1, j),
                    id(i + 2, j + 1),
                    id(i + 1, j + 2),
                    id(i, j + 1),
                    id(i + 1, j + 1),
                ],
            };
            elements.push(conn);
            let left_of_interface = match interface_col {
                Some(c) => ex < c,
                None => interface_x >= bounds.x1,
            };
            elem_subdomain.push(if left_of_interface {
                Subdomain::Omega1
            } else {
                Subdomain::Omega2
            });
        }
    }

    let interface_nodes = match interface_col {
        Some(c) => (0..ly).map(|j| id(k * c, j)).collect(),
        None => Vec::new(),
    };

    let mut mesh = QuadMesh {
        order,
        nx,
        ny,
        bounds,
        interface_x: interface_col.map(|_| interface_x),
        nodes,
        elements,
        elem_subdomain,
        boundary_edges: Vec::new(),
        interior_edges: Vec::new(),
        interface_nodes,
        interface_edges: Vec::new(),
    };
    mesh.rebuild_edges()?;
    Ok(mesh)
}

impl QuadMesh {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// Element side length `max(hx, hy)`.
    pub fn h(&self) -> f64 {
        let hx = (self.bounds.x1 - self.bounds.x0) / self.nx as f64;
        let hy = (self.bounds.y1 - self.bounds.y0) / self.ny as f64;
        hx.max(hy)
    }

    pub fn element_coords(&self, e: usize) -> Vec<[f64; 2]> {
        self.elements[e].iter().map(|&n| self.nodes[n]).collect()
    }

    /// Returns a copy whose element `i` is element `order[i]` of `self`.
    /// Node numbering is unchanged; edge tables are rebuilt.
    pub fn relabel_elements(&self, order: &[usize]) -> Result<QuadMesh> {
        if order.len() != self.num_elements() {
            return Err(FemError::DimensionMismatch(format!(
                "permutation of length {} for {} elements",
                order.len(),
                self.num_elements()
            )));
        }
        let mut seen = vec![false; order.len()];
        for &o in order {
            if o >= seen.len() || std::mem::replace(&mut seen[o], true) {
                return Err(FemError::InvalidMesh("not a permutation".into()));
            }
        }
        let mut mesh = self.clone();
        mesh.elements = order.iter().map(|&o| self.elements[o].clone()).collect();
        mesh.elem_subdomain = order.iter().map(|&o| self.elem_subdomain[o]).collect();
        mesh.rebuild_edges()?;
        Ok(mesh)
    }

    fn rebuild_edges(&mut self) -> Result<()> {
        let mut by_key: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for (e, conn) in self.elements.iter().enumerate() {
            for le in 0..4 {
                let (a, b) = (conn[le], conn[(le + 1) % 4]);
                by_key.entry((a.min(b), a.max(b))).or_default().push((e, le));
            }
        }
        self.boundary_edges.clear();
        self.interior_edges.clear();
        self.interface_edges.clear();
        for sides in by_key.values() {
            match sides.as_slice() {
                &[(e, le)] => {
                    let (normal, length) = self.edge_geometry(e, le);
                    self.boundary_edges.push(BoundaryEdge {
                        element: e,
                        local_edge: le,
                        normal,
                        length,
                    });
                }
                &[s0, s1] => {
                    let (plus, minus) = if s0.0 > s1.0 { (s0, s1) } else { (s1, s0) };
                    let (normal, length) = self.edge_geometry(plus.0, plus.1);
                    self.interior_edges.push(InteriorEdge {
                        plus,
                        minus,
                        normal,
                        length,
                    });
                    let (t0, t1) = (self.elem_subdomain[s0.0], self.elem_subdomain[s1.0]);
                    if t0 != t1 {
                        let (o1, o2) = if t0 == Subdomain::Omega1 { (s0, s1) } else { (s1, s0) };
                        let (n1, _) = self.edge_geometry(o1.0, o1.1);
                        self.interface_edges.push(InterfaceEdge {
                            omega1: o1,
                            omega2: o2,
                            normal: n1,
                            tangent: Vector2::new(-n1[1], n1[0]),
                        });
                    }
                }
                other => {
                    return Err(FemError::InvalidMesh(format!(
                        "edge shared by {} elements",
                        other.len()
                    )))
                }
            }
        }
        self.boundary_edges
            .sort_by_key(|b| (b.element, b.local_edge));
        self.interior_edges.sort_by_key(|e| (e.plus, e.minus));
        self.interface_edges.sort_by_key(|e| e.omega1);
        Ok(())
    }

    /// Outward unit normal and length of a straight local edge.
    pub fn edge_geometry(&self, element: usize, local_edge: usize) -> (Vector2<f64>, f64) {
        let conn = &self.elements[element];
        let a = self.nodes[conn[local_edge]];
        let b = self.nodes[conn[(local_edge + 1) % 4]];
        let t = Vector2::new(b[0] - a[0], b[1] - a[1]);
        let len = t.norm();
        (Vector2::new(t[1], -t[0]) / len, len)
    }

    /// Outward normals of the boundary edges touching each boundary node.
    /// Corner nodes carry two normals.
    pub fn boundary_node_normals(&self) -> BTreeMap<usize, Vec<Vector2<f64>>> {
        let mut map: BTreeMap<usize, Vec<Vector2<f64>>> = BTreeMap::new();
        for be in &self.boundary_edges {
            for &ln in self.order.edge_nodes(be.local_edge) {
                let node = self.elements[be.element][ln];
                let normals = map.entry(node).or_default();
                if !normals.iter().any(|n| (n - be.normal).norm() < 1e-12) {
                    normals.push(be.normal);
                }
            }
        }
        map
    }

    /// Elements of Omega_1 having at least one node on the interface.
    pub fn interface_adjacent_omega1(&self) -> Vec<usize> {
        if self.interface_nodes.is_empty() {
            return Vec::new();
        }
        let on_gamma = self.interface_node_mask();
        (0..self.num_elements())
            .filter(|&e| {
                self.elem_subdomain[e] == Subdomain::Omega1
                    && self.elements[e].iter().any(|&n| on_gamma[n])
            })
            .collect()
    }

    pub fn interface_node_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.num_nodes()];
        for &n in &self.interface_nodes {
            mask[n] = true;
        }
        mask
    }

    pub fn element_area(&self, e: usize) -> Result<f64> {
        let coords = self.element_coords(e);
        let rule = self.order.default_quadrature();
        let mut area = 0.0;
        for (p, w) in rule.iter() {
            area += w * map_to_physical(self.order, &coords, p)?.0.det;
        }
        Ok(area)
    }

    /// Plain-text listing: `id x y` per node, then `id n0 n1 ... tag` per
    /// element, each block preceded by a `#` header line.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# nodes {}", self.num_nodes())?;
        for (i, p) in self.nodes.iter().enumerate() {
            writeln!(out, "{i} {} {}", p[0], p[1])?;
        }
        writeln!(out, "# elements {}", self.num_elements())?;
        for (e, conn) in self.elements.iter().enumerate() {
            write!(out, "{e}")?;
            for n in conn {
                write!(out, " {n}")?;
            }
            writeln!(out, " {}", self.elem_subdomain[e].tag())?;
        }
        Ok(())
    }
}

/// One entry per interface node with the interface normal (from Omega_1
/// into Omega_2) and tangent; empty for homogeneous meshes.
pub fn classify_interface(mesh: &QuadMesh) -> Vec<InterfaceNode> {
    let Some(edge) = mesh.interface_edges.first() else {
        return Vec::new();
    };
    // straight interface: one normal for every node
    mesh.interface_nodes
        .iter()
        .map(|&node| InterfaceNode {
            node,
            normal: edge.normal,
            tangent: edge.tangent,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::gauss_rule;

    #[test]
    fn two_element_mesh() {
        let m = build_structured_mesh(2, 1, Rect::biunit(), 0.0, Order::Q1).unwrap();
        assert_eq!(m.num_elements(), 2);
        assert_eq!(m.num_nodes(), 6);
        assert_eq!(m.interface_nodes.len(), 2);
        for &n in &m.interface_nodes {
            assert_eq!(m.nodes[n][0], 0.0);
        }
        assert_eq!(m.elem_subdomain, vec![Subdomain::Omega1, Subdomain::Omega2]);
        assert_eq!(m.interface_edges.len(), 1);
        assert_eq!(m.interior_edges.len(), 1);
        assert_eq!(m.boundary_edges.len(), 6);
    }

    #[test]
    fn q1_mesh_counts() {
        let m = build_structured_mesh(8, 8, Rect::biunit(), 0.0, Order::Q1).unwrap();
        assert_eq!(m.num_elements(), 64);
        assert_eq!(m.num_nodes(), 81);
        assert_eq!(m.h(), 0.25);
        assert_eq!(classify_interface(&m).len(), 9);
    }

    #[test]
    fn biquadratic_lattice() {
        let m = build_structured_mesh(4, 4, Rect::biunit(), 0.0, Order::Q2).unwrap();
        assert_eq!(m.num_elements(), 16);
        assert_eq!(m.num_nodes(), (2 * 4 + 1) * (2 * 4 + 1));
        assert!(m.elements.iter().all(|c| c.len() == 9));
        assert_eq!(m.interface_nodes.len(), 9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            build_structured_mesh(0, 3, Rect::biunit(), 0.0, Order::Q1),
            Err(FemError::InvalidMesh(_))
        ));
        assert!(matches!(
            build_structured_mesh(3, 3, Rect::biunit(), 0.0, Order::Q1),
            Err(FemError::MisalignedInterface { .. })
        ));
    }

    #[test]
    fn homogeneous_mesh_has_no_interface() {
        let m = build_structured_mesh(3, 3, Rect::biunit(), 5.0, Order::Q1).unwrap();
        assert!(m.interface_x.is_none());
        assert!(classify_interface(&m).is_empty());
        assert!(m.interface_edges.is_empty());
        assert!(m.elem_subdomain.iter().all(|s| *s == Subdomain::Omega1));
    }

    #[test]
    fn interface_orientation() {
        let m = build_structured_mesh(2, 1, Rect::biunit(), 0.0, Order::Q1).unwrap();
        let c = classify_interface(&m);
        assert_eq!(c.len(), 2);
        for entry in c {
            assert_eq!(entry.normal, Vector2::new(1.0, 0.0));
            assert_eq!(entry.tangent, Vector2::new(0.0, 1.0));
        }
    }

    #[test]
    fn geometric_invariants() {
        for order in [Order::Q1, Order::Q2] {
            let m = build_structured_mesh(4, 6, Rect::new(-1.0, 3.0, 0.0, 2.0), 1.0, order)
                .unwrap();
            let rule = gauss_rule(4).unwrap();
            let mut total = 0.0;
            for e in 0..m.num_elements() {
                let coords = m.element_coords(e);
                for (p, _) in rule.iter() {
                    assert!(map_to_physical(order, &coords, p).unwrap().0.det > 0.0);
                }
                total += m.element_area(e).unwrap();
            }
            assert!(((total - 8.0) / 8.0).abs() < 1e-12);
            // interface node set equals the nodes at x == interface_x
            let expected: Vec<usize> = (0..m.num_nodes())
                .filter(|&n| m.nodes[n][0] == 1.0)
                .collect();
            assert_eq!(m.interface_nodes, expected);
            for ie in &m.interface_edges {
                assert_eq!(m.elem_subdomain[ie.omega1.0], Subdomain::Omega1);
                assert_eq!(m.elem_subdomain[ie.omega2.0], Subdomain::Omega2);
                assert!((ie.normal.norm() - 1.0).abs() < 1e-15);
                assert!(ie.normal.dot(&ie.tangent).abs() < 1e-15);
            }
            assert_eq!(m.interface_edges.len(), 6);
        }
    }

    #[test]
    fn corner_nodes_have_two_normals() {
        let m = build_structured_mesh(2, 2, Rect::biunit(), 0.0, Order::Q2).unwrap();
        let normals = m.boundary_node_normals();
        assert_eq!(normals[&0].len(), 2);
        assert_eq!(normals.len(), 4 * 4);
        assert_eq!(normals.values().filter(|v| v.len() == 2).count(), 4);
    }

    #[test]
    fn relabel_keeps_edge_count() {
        let m = build_structured_mesh(3, 2, Rect::biunit(), 5.0, Order::Q1).unwrap();
        let perm: Vec<usize> = (0..6).rev().collect();
        let r = m.relabel_elements(&perm).unwrap();
        assert_eq!(r.interior_edges.len(), m.interior_edges.len());
        assert_eq!(r.elements[0], m.elements[5]);
        assert!(m.relabel_elements(&[0, 0, 1, 2, 3, 4]).is_err());
    }

    #[test]
    fn dump_format() {
        let m = build_structured_mesh(2, 1, Rect::biunit(), 0.0, Order::Q1).unwrap();
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# nodes 6");
        assert_eq!(lines[1], "0 -1 -1");
        assert_eq!(lines[7], "# elements 2");
        assert_eq!(lines[8], "0 0 1 4 3 1");
        assert_eq!(lines[9], "1 1 2 5 4 2");
    }
}
