//! Reference-element machinery for Lagrange quadrilaterals.
//!
//! The reference square is `[-1, 1]^2`. Local node numbering follows the
//! usual convention: the four corners counterclockwise from `(-1, -1)`,
//! then (for Q2) the mid-edge nodes of the bottom, right, top and left
//! edges, and finally the centroid.

use nalgebra::{Matrix2, Vector2};

use crate::error::FemError;

/// Polynomial degree of the tensor-product Lagrange space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Order {
    Q1,
    Q2,
}

impl Order {
    pub fn from_degree(k: usize) -> Result<Self, FemError> {
        match k {
            1 => Ok(Order::Q1),
            2 => Ok(Order::Q2),
            other => Err(FemError::UnsupportedOrder(other)),
        }
    }

    pub fn degree(self) -> usize {
        match self {
            Order::Q1 => 1,
            Order::Q2 => 2,
        }
    }

    /// Number of nodes per element (4 or 9).
    pub fn nodes_per_element(self) -> usize {
        match self {
            Order::Q1 => 4,
            Order::Q2 => 9,
        }
    }

    /// Default volume rule: 3x3 Gauss for Q1, 4x4 for Q2.
    pub fn default_quadrature(self) -> QuadratureRule {
        match self {
            Order::Q1 => gauss_rule(3).expect("3-point rule"),
            Order::Q2 => gauss_rule(4).expect("4-point rule"),
        }
    }

    /// Edge rule with `k + 1` Gauss points.
    pub fn edge_quadrature(self) -> (Vec<f64>, Vec<f64>) {
        gauss_legendre_1d(self.degree() + 1).expect("edge rule")
    }

    /// Reference coordinates of the local nodes.
    pub fn reference_nodes(self) -> &'static [[f64; 2]] {
        match self {
            Order::Q1 => &Q1_NODES,
            Order::Q2 => &Q2_NODES,
        }
    }

    /// Local node indices on each edge, ordered along the counterclockwise
    /// boundary traversal (start corner, [mid node], end corner).
    pub fn edge_nodes(self, edge: usize) -> &'static [usize] {
        match self {
            Order::Q1 => &Q1_EDGES[edge],
            Order::Q2 => &Q2_EDGES[edge],
        }
    }
}

const Q1_NODES: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

const Q2_NODES: [[f64; 2]; 9] = [
    [-1.0, -1.0],
    [1.0, -1.0],
    [1.0, 1.0],
    [-1.0, 1.0],
    [0.0, -1.0],
    [1.0, 0.0],
    [0.0, 1.0],
    [-1.0, 0.0],
    [0.0, 0.0],
];

const Q1_EDGES: [[usize; 2]; 4] = [[0, 1], [1, 2], [2, 3], [3, 0]];
const Q2_EDGES: [[usize; 3]; 4] = [[0, 4, 1], [1, 5, 2], [2, 6, 3], [3, 7, 0]];

/// Reference point on local edge `edge` at parameter `s` in `[-1, 1]`,
/// traversed counterclockwise.
pub fn edge_reference_point(edge: usize, s: f64) -> [f64; 2] {
    match edge {
        0 => [s, -1.0],
        1 => [1.0, s],
        2 => [-s, 1.0],
        3 => [-1.0, -s],
        _ => panic!("quadrilateral has four edges, got edge {edge}"),
    }
}

/// Values, first and second reference derivatives of a 1D Lagrange basis
/// on the equispaced nodes of `[-1, 1]`.
fn lagrange_1d(order: Order, t: f64) -> ([f64; 3], [f64; 3], [f64; 3]) {
    match order {
        // nodes -1, 1
        Order::Q1 => (
            [0.5 * (1.0 - t), 0.5 * (1.0 + t), 0.0],
            [-0.5, 0.5, 0.0],
            [0.0, 0.0, 0.0],
        ),
        // nodes -1, 0, 1
        Order::Q2 => (
            [0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)],
            [t - 0.5, -2.0 * t, t + 0.5],
            [1.0, -2.0, 1.0],
        ),
    }
}

/// 1D node index (into the `lagrange_1d` arrays) of each local 2D node.
fn tensor_index(order: Order) -> &'static [(usize, usize)] {
    const Q1: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];
    const Q2: [(usize, usize); 9] = [
        (0, 0),
        (2, 0),
        (2, 2),
        (0, 2),
        (1, 0),
        (2, 1),
        (1, 2),
        (0, 1),
        (1, 1),
    ];
    match order {
        Order::Q1 => &Q1,
        Order::Q2 => &Q2,
    }
}

/// Basis values and reference gradients at one reference point.
#[derive(Clone, Debug)]
pub struct ShapeSet {
    pub order: Order,
    pub values: Vec<f64>,
    pub gradients: Vec<Vector2<f64>>,
    /// Reference Hessians, used for second derivatives of the discrete potential.
    pub hessians: Vec<Matrix2<f64>>,
}

pub fn reference_basis(order: Order, point: [f64; 2]) -> ShapeSet {
    let (vx, dx, ddx) = lagrange_1d(order, point[0]);
    let (vy, dy, ddy) = lagrange_1d(order, point[1]);
    let idx = tensor_index(order);
    let mut values = Vec::with_capacity(idx.len());
    let mut gradients = Vec::with_capacity(idx.len());
    let mut hessians = Vec::with_capacity(idx.len());
    for &(i, j) in idx {
        values.push(vx[i] * vy[j]);
        gradients.push(Vector2::new(dx[i] * vy[j], vx[i] * dy[j]));
        hessians.push(Matrix2::new(
            ddx[i] * vy[j],
            dx[i] * dy[j],
            dx[i] * dy[j],
            vx[i] * ddy[j],
        ));
    }
    ShapeSet {
        order,
        values,
        gradients,
        hessians,
    }
}

/// Tensor-product Gauss rule on the reference square.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, `n` in `1..=5`.
pub fn gauss_legendre_1d(n: usize) -> Result<(Vec<f64>, Vec<f64>), FemError> {
    let (nodes, weights): (Vec<f64>, Vec<f64>) = match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (3.0f64 / 5.0).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let r = (6.0f64 / 5.0).sqrt();
            let a = ((3.0 - 2.0 * r) / 7.0).sqrt();
            let b = ((3.0 + 2.0 * r) / 7.0).sqrt();
            let s30 = 30f64.sqrt();
            let wa = (18.0 + s30) / 36.0;
            let wb = (18.0 - s30) / 36.0;
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        5 => {
            let r = 2.0 * (10.0f64 / 7.0).sqrt();
            let a = (5.0 - r).sqrt() / 3.0;
            let b = (5.0 + r).sqrt() / 3.0;
            let s70 = 70f64.sqrt();
            let wa = (322.0 + 13.0 * s70) / 900.0;
            let wb = (322.0 - 13.0 * s70) / 900.0;
            (vec![-b, -a, 0.0, a, b], vec![wb, wa, 128.0 / 225.0, wa, wb])
        }
        other => return Err(FemError::UnsupportedQuadrature(other)),
    };
    Ok((nodes, weights))
}

pub fn gauss_rule(n: usize) -> Result<QuadratureRule, FemError> {
    let (nodes, weights) = gauss_legendre_1d(n)?;
    let mut points = Vec::with_capacity(n * n);
    let mut w2 = Vec::with_capacity(n * n);
    for (yj, wj) in nodes.iter().zip(&weights) {
        for (xi, wi) in nodes.iter().zip(&weights) {
            points.push([*xi, *yj]);
            w2.push(wi * wj);
        }
    }
    Ok(QuadratureRule { points, weights: w2 })
}

/// Basis data mapped to a physical element at one reference point.
#[derive(Clone, Debug)]
pub struct MappedPoint {
    pub x: Vector2<f64>,
    pub jacobian: Matrix2<f64>,
    pub det: f64,
    pub values: Vec<f64>,
    /// Physical gradients `J^{-T} * reference gradient`.
    pub gradients: Vec<Vector2<f64>>,
}

impl MappedPoint {
    /// Physical Hessians of the basis, including the curvature term of the
    /// isoparametric map (it vanishes on parallelograms).
    pub fn hessians(&self, coords: &[[f64; 2]], shape: &ShapeSet) -> Vec<Matrix2<f64>> {
        let jinv = self
            .jacobian
            .try_inverse()
            .expect("jacobian already checked non-singular");
        // d^2 x_k / dxi_a dxi_b
        let mut geo = [Matrix2::zeros(), Matrix2::zeros()];
        for (c, h) in coords.iter().zip(&shape.hessians) {
            geo[0] += h * c[0];
            geo[1] += h * c[1];
        }
        shape
            .hessians
            .iter()
            .zip(&self.gradients)
            .map(|(h_ref, g)| {
                let corrected = h_ref - geo[0] * g[0] - geo[1] * g[1];
                jinv.transpose() * corrected * jinv
            })
            .collect()
    }
}

/// Isoparametric map of the element with node coordinates `coords`.
///
/// The Jacobian is `J[i][j] = d x_i / d xi_j`.
pub fn map_to_physical(
    order: Order,
    coords: &[[f64; 2]],
    point: [f64; 2],
) -> Result<(MappedPoint, ShapeSet), FemError> {
    let shape = reference_basis(order, point);
    debug_assert_eq!(coords.len(), shape.values.len());
    let mut x = Vector2::zeros();
    let mut jac = Matrix2::zeros();
    for ((c, v), g) in coords.iter().zip(&shape.values).zip(&shape.gradients) {
        let c = Vector2::new(c[0], c[1]);
        x += c * *v;
        jac += c * g.transpose();
    }
    let det = jac.determinant();
    if det <= 0.0 || !det.is_finite() {
        return Err(FemError::DegenerateElement { det });
    }
    let jinv_t = jac
        .try_inverse()
        .ok_or(FemError::DegenerateElement { det })?
        .transpose();
    let gradients = shape.gradients.iter().map(|g| jinv_t * g).collect();
    Ok((
        MappedPoint {
            x,
            jacobian: jac,
            det,
            values: shape.values.clone(),
            gradients,
        },
        shape,
    ))
}
