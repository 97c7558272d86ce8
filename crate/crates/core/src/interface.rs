//! Exact imposition of the discrete interface conditions through a
//! node-level change of unknowns.
//!
//! The Omega_2 side is the reference: global unknowns on the interface are
//! the Omega_2 traces. At an interface node the Omega_1 velocity is
//! `pi * u_ref` with `pi = Q1^{-1} Q2`, which keeps the normal velocity
//! continuous and enforces `Lambda_1 u1 . tau = Lambda_2 u2 . tau`; the
//! potential passes through unchanged.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{FemError, Result};
use crate::material::MaterialField;
use crate::mesh::{classify_interface, QuadMesh, Subdomain};

/// Unknowns per node in the mixed formulation: `(u_x, u_y, p)`.
pub const FIELDS_PER_NODE: usize = 3;

/// Condition number above which `Q1` is treated as singular.
pub const MAX_Q_CONDITION: f64 = 1e12;

/// Rows `(Lambda tau)^T` (as the components `l_11 t_1 + l_21 t_2`,
/// `l_12 t_1 + l_22 t_2`) and `n^T`.
pub fn q_matrix(resistivity: &Matrix2<f64>, n: &Vector2<f64>, tau: &Vector2<f64>) -> Matrix2<f64> {
    let l = resistivity;
    Matrix2::new(
        l[(0, 0)] * tau[0] + l[(1, 0)] * tau[1],
        l[(0, 1)] * tau[0] + l[(1, 1)] * tau[1],
        n[0],
        n[1],
    )
}

/// `Q` extended with a pass-through row and column for the potential.
pub fn t_matrix(resistivity: &Matrix2<f64>, n: &Vector2<f64>, tau: &Vector2<f64>) -> Matrix3<f64> {
    let q = q_matrix(resistivity, n, tau);
    Matrix3::new(
        q[(0, 0)],
        q[(0, 1)],
        0.0,
        q[(1, 0)],
        q[(1, 1)],
        0.0,
        0.0,
        0.0,
        1.0,
    )
}

fn condition_number(m: &Matrix2<f64>) -> f64 {
    let sv = m.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// `pi = Q1^{-1} Q2`, mapping the Omega_2 velocity onto the Omega_1 velocity.
pub fn pi_node(
    resistivity1: &Matrix2<f64>,
    resistivity2: &Matrix2<f64>,
    n: &Vector2<f64>,
    tau: &Vector2<f64>,
) -> Result<Matrix2<f64>> {
    let q1 = q_matrix(resistivity1, n, tau);
    let q2 = q_matrix(resistivity2, n, tau);
    let cond = condition_number(&q1);
    if !(cond <= MAX_Q_CONDITION) {
        return Err(FemError::NearSingularInterface { cond });
    }
    let inv = q1
        .try_inverse()
        .ok_or(FemError::NearSingularInterface { cond })?;
    Ok(inv * q2)
}

/// Whether element matrices are transformed on both sides (`T^T K T`) or
/// on the trial side only (`K T`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformMode {
    Symmetric,
    Nonsymmetric,
}

/// Block-diagonal element transformation: `diag(pi, 1)` on the local nodes
/// listed in `pi_by_node`, identity elsewhere.
pub fn element_transform(
    connectivity: &[usize],
    pi_by_node: &BTreeMap<usize, Matrix2<f64>>,
) -> DMatrix<f64> {
    let n = connectivity.len() * FIELDS_PER_NODE;
    let mut t = DMatrix::identity(n, n);
    for (local, node) in connectivity.iter().enumerate() {
        if let Some(pi) = pi_by_node.get(node) {
            let o = local * FIELDS_PER_NODE;
            t.fixed_view_mut::<2, 2>(o, o).copy_from(pi);
        }
    }
    t
}

pub fn transform_element_system(
    ke: &DMatrix<f64>,
    fe: &DVector<f64>,
    t: &DMatrix<f64>,
    mode: TransformMode,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = t.nrows();
    if t.ncols() != n || ke.nrows() != n || ke.ncols() != n || fe.len() != n {
        return Err(FemError::DimensionMismatch(format!(
            "K {}x{}, F {}, T {}x{}",
            ke.nrows(),
            ke.ncols(),
            fe.len(),
            t.nrows(),
            t.ncols()
        )));
    }
    Ok(match mode {
        TransformMode::Symmetric => (t.transpose() * ke * t, t.transpose() * fe),
        TransformMode::Nonsymmetric => (ke * t, fe.clone()),
    })
}

/// Per-node `Q1`, `Q2` and `pi` for every node on the interface.
#[derive(Clone, Debug)]
pub struct NodeTransform {
    pub normal: Vector2<f64>,
    pub tangent: Vector2<f64>,
    pub q1: Matrix2<f64>,
    pub q2: Matrix2<f64>,
    pub pi: Matrix2<f64>,
}

/// Transformation table for a mesh: node blocks and the set of Omega_1
/// elements they touch (the only elements whose systems change).
#[derive(Clone, Debug)]
pub struct InterfaceTransform {
    pub nodes: BTreeMap<usize, NodeTransform>,
    pi_by_node: BTreeMap<usize, Matrix2<f64>>,
    affected: Vec<bool>,
}

impl InterfaceTransform {
    pub fn build(mesh: &QuadMesh, material: &MaterialField) -> Result<Self> {
        let (l1, l2) = (&material.resistivity[0], &material.resistivity[1]);
        let mut nodes = BTreeMap::new();
        for entry in classify_interface(mesh) {
            let pi = pi_node(l1, l2, &entry.normal, &entry.tangent)?;
            nodes.insert(
                entry.node,
                NodeTransform {
                    normal: entry.normal,
                    tangent: entry.tangent,
                    q1: q_matrix(l1, &entry.normal, &entry.tangent),
                    q2: q_matrix(l2, &entry.normal, &entry.tangent),
                    pi,
                },
            );
        }
        let pi_by_node = nodes.iter().map(|(k, v)| (*k, v.pi)).collect();
        let mut affected = vec![false; mesh.num_elements()];
        for e in mesh.interface_adjacent_omega1() {
            affected[e] = true;
        }
        Ok(InterfaceTransform {
            nodes,
            pi_by_node,
            affected,
        })
    }

    pub fn is_affected(&self, element: usize) -> bool {
        self.affected.get(element).copied().unwrap_or(false)
    }

    pub fn pi_at(&self, node: usize) -> Option<&Matrix2<f64>> {
        self.pi_by_node.get(&node)
    }

    /// Element transformation `T` with `U^e = T * Ubar^e`.
    pub fn element_transform(&self, mesh: &QuadMesh, element: usize) -> Result<DMatrix<f64>> {
        if !self.is_affected(element) {
            return Err(FemError::NotInterfaceElement(element));
        }
        Ok(element_transform(&mesh.elements[element], &self.pi_by_node))
    }

    /// True element unknowns from the global reference vector.
    pub fn element_unknowns(&self, mesh: &QuadMesh, element: usize, reference: &[f64]) -> DVector<f64> {
        let ubar = gather(&mesh.elements[element], reference);
        if self.is_affected(element) {
            element_transform(&mesh.elements[element], &self.pi_by_node) * ubar
        } else {
            ubar
        }
    }
}

/// Element unknowns `(u_x, u_y, p)` per local node from a global vector.
pub fn gather(connectivity: &[usize], global: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        connectivity.len() * FIELDS_PER_NODE,
        connectivity
            .iter()
            .flat_map(|&n| (0..FIELDS_PER_NODE).map(move |c| global[FIELDS_PER_NODE * n + c])),
    )
}

/// Two-sided nodal values on the interface.
#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceTrace {
    pub node: usize,
    pub omega1_velocity: Vector2<f64>,
    pub omega2_velocity: Vector2<f64>,
    pub potential: f64,
}

impl InterfaceTrace {
    pub fn side(&self, side: Subdomain) -> Vector3<f64> {
        let u = match side {
            Subdomain::Omega1 => self.omega1_velocity,
            Subdomain::Omega2 => self.omega2_velocity,
        };
        Vector3::new(u[0], u[1], self.potential)
    }
}

pub fn recover_interface_solution(
    transform: &InterfaceTransform,
    reference: &[f64],
) -> Vec<InterfaceTrace> {
    transform
        .nodes
        .iter()
        .map(|(&node, nt)| {
            let o = FIELDS_PER_NODE * node;
            let u2 = Vector2::new(reference[o], reference[o + 1]);
            InterfaceTrace {
                node,
                omega1_velocity: nt.pi * u2,
                omega2_velocity: u2,
                potential: reference[o + 2],
            }
        })
        .collect()
}

/// Largest violation of `u1.n = u2.n` and `Lambda1 u1.tau = Lambda2 u2.tau`
/// over the given traces (potential continuity holds by construction).
pub fn interface_condition_violation(
    traces: &[InterfaceTrace],
    transform: &InterfaceTransform,
    material: &MaterialField,
) -> f64 {
    let (l1, l2) = (&material.resistivity[0], &material.resistivity[1]);
    traces
        .iter()
        .map(|t| {
            let nt = &transform.nodes[&t.node];
            let normal = (t.omega1_velocity - t.omega2_velocity).dot(&nt.normal).abs();
            let tangential =
                ((l1 * t.omega1_velocity).dot(&nt.tangent) - (l2 * t.omega2_velocity).dot(&nt.tangent)).abs();
            normal.max(tangential)
        })
        .fold(0.0, f64::max)
}
