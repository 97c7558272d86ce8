//! Global assembly of the primal Galerkin system and of the unified
//! stabilized mixed form for MGLS, HVM and CGLS with equal-order
//! continuous velocity and potential.
//!
//! Mixed unknowns are node-major: dof `3 * node + c` with `c = 0, 1, 2`
//! for `u_x`, `u_y` and `p`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rayon::prelude::*;

use crate::error::{FemError, Result};
use crate::fem::{map_to_physical, MappedPoint, QuadratureRule, ShapeSet};
use crate::interface::{transform_element_system, InterfaceTransform, TransformMode, FIELDS_PER_NODE};
use crate::linsolve::{compress, solve, CsrMatrix};
use crate::material::MaterialField;
use crate::mesh::{QuadMesh, Subdomain};

/// Scalar field evaluated per subdomain (sources, exact potentials).
pub type ScalarFn<'a> = &'a (dyn Fn(Vector2<f64>, Subdomain) -> f64 + Sync);

/// Stabilized mixed method selected by the delta parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MixedMethod {
    Mgls,
    Hvm,
    Cgls,
}

impl fmt::Display for MixedMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MixedMethod::Mgls => "mgls",
            MixedMethod::Hvm => "hvm",
            MixedMethod::Cgls => "cgls",
        })
    }
}

impl FromStr for MixedMethod {
    type Err = FemError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mgls" => Ok(MixedMethod::Mgls),
            "hvm" => Ok(MixedMethod::Hvm),
            "cgls" => Ok(MixedMethod::Cgls),
            other => Err(FemError::Config(format!("unknown mixed method '{other}'"))),
        }
    }
}

/// Weight of the Darcy-law residual term `delta1 (W (Lambda u + grad p), .)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ResidualWeight {
    /// `W = K`, the global scalar `|Kappa|_inf`.
    GlobalNorm,
    /// `W = Kappa`, the local conductivity tensor.
    #[default]
    Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilizationParams {
    pub delta0: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub method: MixedMethod,
    pub residual_weight: ResidualWeight,
}

impl StabilizationParams {
    pub fn mgls() -> Self {
        Self::mgls_with(0.5, 0.5).expect("positive defaults")
    }

    /// MGLS with user-chosen positive `delta1`, `delta2`.
    pub fn mgls_with(delta1: f64, delta2: f64) -> Result<Self> {
        if !(delta1 > 0.0 && delta2 > 0.0) {
            return Err(FemError::Config(format!(
                "MGLS requires positive delta1, delta2 (got {delta1}, {delta2})"
            )));
        }
        Ok(StabilizationParams {
            delta0: 1.0,
            delta1,
            delta2,
            delta3: 0.0,
            method: MixedMethod::Mgls,
            residual_weight: ResidualWeight::Tensor,
        })
    }

    pub fn hvm() -> Self {
        StabilizationParams {
            delta0: -1.0,
            delta1: 0.5,
            delta2: 0.0,
            delta3: 0.0,
            method: MixedMethod::Hvm,
            residual_weight: ResidualWeight::Tensor,
        }
    }

    pub fn cgls() -> Self {
        StabilizationParams {
            delta0: 1.0,
            delta1: -0.5,
            delta2: 0.5,
            delta3: 0.5,
            method: MixedMethod::Cgls,
            residual_weight: ResidualWeight::Tensor,
        }
    }

    pub fn for_method(method: MixedMethod) -> Self {
        match method {
            MixedMethod::Mgls => Self::mgls(),
            MixedMethod::Hvm => Self::hvm(),
            MixedMethod::Cgls => Self::cgls(),
        }
    }

    pub fn with_residual_weight(mut self, weight: ResidualWeight) -> Self {
        self.residual_weight = weight;
        self
    }

    pub fn is_symmetric(&self) -> bool {
        self.delta0 > 0.0
    }
}

/// How the two sides of the material interface are coupled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InterfaceMode {
    /// Plain continuous interpolation across the interface.
    Continuous,
    /// Interface conditions imposed exactly, `T^T K T`.
    Constrained,
    /// Interface conditions imposed on the trial side only, `K T`.
    ConstrainedNonsymmetric,
}

impl InterfaceMode {
    pub fn transform_mode(self) -> Option<TransformMode> {
        match self {
            InterfaceMode::Continuous => None,
            InterfaceMode::Constrained => Some(TransformMode::Symmetric),
            InterfaceMode::ConstrainedNonsymmetric => Some(TransformMode::Nonsymmetric),
        }
    }
}

impl fmt::Display for InterfaceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InterfaceMode::Continuous => "continuous",
            InterfaceMode::Constrained => "constrained",
            InterfaceMode::ConstrainedNonsymmetric => "constrained_ns",
        })
    }
}

impl FromStr for InterfaceMode {
    type Err = FemError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(InterfaceMode::Continuous),
            "constrained" => Ok(InterfaceMode::Constrained),
            "constrained_ns" => Ok(InterfaceMode::ConstrainedNonsymmetric),
            other => Err(FemError::Config(format!("unknown interface mode '{other}'"))),
        }
    }
}

/// Global numbering: `fields_per_node` consecutive unknowns per node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DofMap {
    pub num_nodes: usize,
    pub fields_per_node: usize,
}

impl DofMap {
    pub fn scalar(num_nodes: usize) -> Self {
        DofMap {
            num_nodes,
            fields_per_node: 1,
        }
    }

    pub fn mixed(num_nodes: usize) -> Self {
        DofMap {
            num_nodes,
            fields_per_node: FIELDS_PER_NODE,
        }
    }

    pub fn len(&self) -> usize {
        self.num_nodes * self.fields_per_node
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, node: usize, field: usize) -> usize {
        debug_assert!(field < self.fields_per_node);
        node * self.fields_per_node + field
    }
}

/// Prescribed values for essential degrees of freedom.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Constraints {
    values: BTreeMap<usize, f64>,
}

impl Constraints {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a prescription; repeating an identical value is accepted.
    pub fn prescribe(&mut self, dof: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(FemError::NonFiniteConstraint(dof));
        }
        match self.values.get(&dof) {
            Some(&old) if (old - value).abs() > 1e-12 * old.abs().max(value.abs()).max(1.0) => {
                Err(FemError::ConflictingConstraint {
                    dof,
                    first: old,
                    second: value,
                })
            }
            _ => {
                self.values.insert(dof, value);
                Ok(())
            }
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, dof: usize) -> Option<f64> {
        self.values.get(&dof).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().map(|(k, v)| (*k, *v))
    }
}

#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub symmetric: bool,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

/// System restricted to the free unknowns, with the map back to the full
/// numbering.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub system: LinearSystem,
    /// Full index of each reduced unknown.
    pub free: Vec<usize>,
    /// Full-length vector holding prescribed values (zero on free dofs).
    prescribed: Vec<f64>,
}

impl ReducedSystem {
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = self.prescribed.clone();
        for (&i, &v) in self.free.iter().zip(reduced) {
            full[i] = v;
        }
        full
    }

    pub fn solve(&self) -> Result<Vec<f64>> {
        let x = solve(&self.system.matrix, &self.system.rhs, self.system.symmetric)?;
        Ok(self.expand(&x))
    }
}

/// Eliminates the constrained unknowns, lifting their values into the
/// right-hand side.
pub fn apply_essential_bc(system: &LinearSystem, constraints: &Constraints) -> Result<ReducedSystem> {
    let n = system.dim();
    let mut prescribed = vec![0.0; n];
    let mut reduced_index = vec![usize::MAX; n];
    for (dof, value) in constraints.iter() {
        if dof >= n {
            return Err(FemError::DimensionMismatch(format!(
                "constraint on dof {dof} of a {n}-dof system"
            )));
        }
        prescribed[dof] = value;
    }
    let mut free = Vec::with_capacity(n - constraints.len());
    for i in 0..n {
        if constraints.get(i).is_none() {
            reduced_index[i] = free.len();
            free.push(i);
        }
    }
    let mut trips = Vec::with_capacity(system.matrix.nnz());
    let mut rhs: Vec<f64> = free.iter().map(|&i| system.rhs[i]).collect();
    for (r, c, v) in system.matrix.triplets() {
        let rr = reduced_index[r];
        if rr == usize::MAX {
            continue;
        }
        let rc = reduced_index[c];
        if rc == usize::MAX {
            rhs[rr] -= v * prescribed[c];
        } else {
            trips.push((rr, rc, v));
        }
    }
    Ok(ReducedSystem {
        system: LinearSystem {
            matrix: compress(free.len(), &trips)?,
            rhs,
            symmetric: system.symmetric,
        },
        free,
        prescribed,
    })
}

/// Mapped basis data and `weight * detJ` at every quadrature point of an element.
pub(crate) fn element_points(
    mesh: &QuadMesh,
    element: usize,
    rule: &QuadratureRule,
) -> Result<Vec<(MappedPoint, ShapeSet, f64)>> {
    let coords = mesh.element_coords(element);
    rule.iter()
        .map(|(p, w)| {
            let (m, s) = map_to_physical(mesh.order, &coords, p)?;
            let wd = w * m.det;
            Ok((m, s, wd))
        })
        .collect()
}

/// Scatters dense element blocks into triplets in element order, so the
/// result does not depend on how the blocks were computed.
fn scatter(
    blocks: Vec<(Vec<usize>, DMatrix<f64>, DVector<f64>)>,
    ndof: usize,
) -> Result<(CsrMatrix, Vec<f64>)> {
    let nnz: usize = blocks.iter().map(|b| b.0.len() * b.0.len()).sum();
    let mut trips = Vec::with_capacity(nnz);
    let mut rhs = vec![0.0; ndof];
    for (dofs, ke, fe) in blocks {
        for (a, &ga) in dofs.iter().enumerate() {
            rhs[ga] += fe[a];
            for (b, &gb) in dofs.iter().enumerate() {
                trips.push((ga, gb, ke[(a, b)]));
            }
        }
    }
    Ok((compress(ndof, &trips)?, rhs))
}

/// Element stiffness `(K grad phi_b, grad phi_a)` and load `(f, phi_a)`.
pub fn galerkin_element(
    mesh: &QuadMesh,
    element: usize,
    material: &MaterialField,
    source: ScalarFn,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let sub = mesh.elem_subdomain[element];
    let (k, _) = material.tensors_at(sub);
    let n = mesh.order.nodes_per_element();
    let mut ke = DMatrix::zeros(n, n);
    let mut fe = DVector::zeros(n);
    for (m, _, w) in element_points(mesh, element, &mesh.order.default_quadrature())? {
        let f = source(m.x, sub);
        for a in 0..n {
            fe[a] += w * f * m.values[a];
            let kga = k * m.gradients[a];
            for b in 0..n {
                ke[(a, b)] += w * kga.dot(&m.gradients[b]);
            }
        }
    }
    Ok((ke, fe))
}

/// Full primal system and its Dirichlet prescriptions.
#[derive(Clone, Debug)]
pub struct GalerkinAssembly {
    pub system: LinearSystem,
    pub dofmap: DofMap,
    pub constraints: Constraints,
}

impl GalerkinAssembly {
    pub fn reduce(&self) -> Result<ReducedSystem> {
        apply_essential_bc(&self.system, &self.constraints)
    }
}

pub fn assemble_galerkin(
    mesh: &QuadMesh,
    material: &MaterialField,
    source: ScalarFn,
    dirichlet: &(dyn Fn(Vector2<f64>) -> f64 + Sync),
) -> Result<GalerkinAssembly> {
    let dofmap = DofMap::scalar(mesh.num_nodes());
    let blocks = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let (ke, fe) = galerkin_element(mesh, e, material, source)?;
            Ok((mesh.elements[e].clone(), ke, fe))
        })
        .collect::<Result<Vec<_>>>()?;
    let (matrix, rhs) = scatter(blocks, dofmap.len())?;
    let mut constraints = Constraints::new();
    for &node in mesh.boundary_node_normals().keys() {
        let p = mesh.nodes[node];
        constraints.prescribe(node, dirichlet(Vector2::new(p[0], p[1])))?;
    }
    if constraints.len() == dofmap.len() {
        return Err(FemError::EmptySystem);
    }
    Ok(GalerkinAssembly {
        system: LinearSystem {
            matrix,
            rhs,
            symmetric: true,
        },
        dofmap,
        constraints,
    })
}

/// Nodal potential of the primal Galerkin method.
pub fn solve_galerkin(
    mesh: &QuadMesh,
    material: &MaterialField,
    source: ScalarFn,
    dirichlet: &(dyn Fn(Vector2<f64>) -> f64 + Sync),
) -> Result<Vec<f64>> {
    assemble_galerkin(mesh, material, source, dirichlet)?
        .reduce()?
        .solve()
}

/// `u_G = -K grad p_h` at the default quadrature points of every element.
pub fn darcy_velocity_from_potential(
    mesh: &QuadMesh,
    material: &MaterialField,
    potential: &[f64],
) -> Result<Vec<Vec<Vector2<f64>>>> {
    let rule = mesh.order.default_quadrature();
    (0..mesh.num_elements())
        .map(|e| {
            let (k, _) = material.tensors_at(mesh.elem_subdomain[e]);
            let conn = &mesh.elements[e];
            Ok(element_points(mesh, e, &rule)?
                .iter()
                .map(|(m, _, _)| {
                    let grad: Vector2<f64> = conn
                        .iter()
                        .zip(&m.gradients)
                        .map(|(&n, g)| g * potential[n])
                        .sum();
                    -(k * grad)
                })
                .collect())
        })
        .collect()
}

/// Boundary data for the mixed forms.
pub struct MixedBoundary<'a> {
    /// Boundary velocity; only its normal component is imposed, except at
    /// interface endpoints in constrained modes. On the interface it must
    /// return the Omega_2 value.
    pub velocity: &'a (dyn Fn(Vector2<f64>) -> Vector2<f64> + Sync),
    /// Node whose potential is fixed, with its value.
    pub pin: Option<(usize, f64)>,
}

/// Per-dof trace of the operators appearing in the mixed form.
#[derive(Clone, Copy, Default)]
struct DofOps {
    velocity: Vector2<f64>,
    div: f64,
    potential: f64,
    grad_p: Vector2<f64>,
    curl_lambda: f64,
}

fn dof_ops(m: &MappedPoint, lambda: &Matrix2<f64>) -> Vec<DofOps> {
    let n = m.values.len();
    let mut ops = vec![DofOps::default(); FIELDS_PER_NODE * n];
    for a in 0..n {
        let (phi, g) = (m.values[a], m.gradients[a]);
        for c in 0..2 {
            let mut velocity = Vector2::zeros();
            velocity[c] = phi;
            // curl(Lambda phi e_c) = d/dx (Lambda_1c phi) - d/dy (Lambda_0c phi)
            ops[FIELDS_PER_NODE * a + c] = DofOps {
                velocity,
                div: g[c],
                curl_lambda: lambda[(1, c)] * g[0] - lambda[(0, c)] * g[1],
                ..DofOps::default()
            };
        }
        ops[FIELDS_PER_NODE * a + 2] = DofOps {
            potential: phi,
            grad_p: g,
            ..DofOps::default()
        };
    }
    ops
}

/// Element matrix and load of `B_alpha` / `F_alpha` in local dof order.
///
/// Rows are test functions, columns trial functions.
pub fn stabilized_mixed_element(
    mesh: &QuadMesh,
    element: usize,
    material: &MaterialField,
    params: &StabilizationParams,
    source: ScalarFn,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let sub = mesh.elem_subdomain[element];
    let (cond, lam) = material.tensors_at(sub);
    let weight = match params.residual_weight {
        ResidualWeight::GlobalNorm => Matrix2::identity() * material.k_inf,
        ResidualWeight::Tensor => *cond,
    };
    let (big_k, small_l) = (material.k_inf, material.lambda);
    let StabilizationParams {
        delta0: d0,
        delta1: d1,
        delta2: d2,
        delta3: d3,
        ..
    } = *params;
    let n = FIELDS_PER_NODE * mesh.order.nodes_per_element();
    let mut ke = DMatrix::zeros(n, n);
    let mut fe = DVector::zeros(n);
    for (m, _, w) in element_points(mesh, element, &mesh.order.default_quadrature())? {
        let f = source(m.x, sub);
        let ops = dof_ops(&m, lam);
        let lam_v: Vec<Vector2<f64>> = ops.iter().map(|o| lam * o.velocity).collect();
        for a in 0..n {
            let oa = &ops[a];
            fe[a] += w * (-d0 * f * oa.potential + d2 * small_l * f * oa.div);
            let test_residual = weight * (lam_v[a] * d0 + oa.grad_p);
            for b in 0..n {
                let ob = &ops[b];
                let trial_residual = lam_v[b] + ob.grad_p;
                let v = lam_v[b].dot(&oa.velocity) - oa.div * ob.potential - d0 * ob.div * oa.potential
                    + d1 * trial_residual.dot(&test_residual)
                    + d2 * small_l * ob.div * oa.div
                    + d3 * big_k * ob.curl_lambda * oa.curl_lambda;
                ke[(a, b)] += w * v;
            }
        }
    }
    Ok((ke, fe))
}

/// Full mixed system in reference unknowns plus its essential data.
#[derive(Clone, Debug)]
pub struct MixedAssembly {
    pub system: LinearSystem,
    pub dofmap: DofMap,
    pub constraints: Constraints,
    pub mode: InterfaceMode,
    pub transform: Option<InterfaceTransform>,
}

impl MixedAssembly {
    pub fn reduce(&self) -> Result<ReducedSystem> {
        apply_essential_bc(&self.system, &self.constraints)
    }
}

/// Normal-velocity constraints on every boundary node (both components at
/// corners) and the potential pin.
///
/// With `pin_interface_endpoints`, boundary nodes on the interface get both
/// velocity components: the boundary condition on each side together with
/// the interface conditions determines the full velocity there.
pub fn mixed_constraints(
    mesh: &QuadMesh,
    boundary: &MixedBoundary,
    pin_interface_endpoints: bool,
) -> Result<Constraints> {
    let dofmap = DofMap::mixed(mesh.num_nodes());
    let mut constraints = Constraints::new();
    let on_interface = mesh.interface_node_mask();
    for (node, normals) in mesh.boundary_node_normals() {
        let p = mesh.nodes[node];
        let x = Vector2::new(p[0], p[1]);
        let u = (boundary.velocity)(x);
        if pin_interface_endpoints && on_interface[node] {
            constraints.prescribe(dofmap.index(node, 0), u[0])?;
            constraints.prescribe(dofmap.index(node, 1), u[1])?;
        }
        for n in normals {
            let g = u.dot(&n);
            let comp = if n[0].abs() > n[1].abs() { 0 } else { 1 };
            if n[comp].abs() < 1.0 - 1e-12 {
                return Err(FemError::InvalidMesh(
                    "normal-velocity constraints require axis-aligned boundaries".into(),
                ));
            }
            constraints.prescribe(dofmap.index(node, comp), g * n[comp])?;
        }
    }
    let (node, value) = boundary.pin.ok_or(FemError::UnpinnedPotential)?;
    if node >= mesh.num_nodes() {
        return Err(FemError::Config(format!("pinned node {node} out of range")));
    }
    constraints.prescribe(dofmap.index(node, 2), value)?;
    Ok(constraints)
}

pub fn assemble_stabilized_mixed(
    mesh: &QuadMesh,
    material: &MaterialField,
    params: &StabilizationParams,
    source: ScalarFn,
    boundary: &MixedBoundary,
    mode: InterfaceMode,
) -> Result<MixedAssembly> {
    let dofmap = DofMap::mixed(mesh.num_nodes());
    let transform = match mode.transform_mode() {
        Some(_) if !mesh.interface_nodes.is_empty() => Some(InterfaceTransform::build(mesh, material)?),
        _ => None,
    };
    let constraints = mixed_constraints(mesh, boundary, transform.is_some())?;
    let blocks = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let (mut ke, mut fe) = stabilized_mixed_element(mesh, e, material, params, source)?;
            if let (Some(tr), Some(tm)) = (&transform, mode.transform_mode()) {
                if tr.is_affected(e) {
                    let t = tr.element_transform(mesh, e)?;
                    (ke, fe) = transform_element_system(&ke, &fe, &t, tm)?;
                }
            }
            let dofs = mesh.elements[e]
                .iter()
                .flat_map(|&n| (0..FIELDS_PER_NODE).map(move |c| dofmap.index(n, c)))
                .collect();
            Ok((dofs, ke, fe))
        })
        .collect::<Result<Vec<_>>>()?;
    let (matrix, rhs) = scatter(blocks, dofmap.len())?;
    let symmetric = params.is_symmetric() && mode != InterfaceMode::ConstrainedNonsymmetric;
    Ok(MixedAssembly {
        system: LinearSystem {
            matrix,
            rhs,
            symmetric,
        },
        dofmap,
        constraints,
        mode,
        transform,
    })
}

/// Solved mixed problem: global reference unknowns and the transform that
/// maps them to the true element unknowns.
#[derive(Clone, Debug)]
pub struct MixedSolution {
    pub reference: Vec<f64>,
    pub transform: Option<InterfaceTransform>,
}

impl MixedSolution {
    /// True `(u_x, u_y, p)` per local node of an element.
    pub fn element_unknowns(&self, mesh: &QuadMesh, element: usize) -> DVector<f64> {
        match &self.transform {
            Some(tr) => tr.element_unknowns(mesh, element, &self.reference),
            None => crate::interface::gather(&mesh.elements[element], &self.reference),
        }
    }
}

pub fn solve_stabilized_mixed(
    mesh: &QuadMesh,
    material: &MaterialField,
    params: &StabilizationParams,
    source: ScalarFn,
    boundary: &MixedBoundary,
    mode: InterfaceMode,
) -> Result<MixedSolution> {
    let asm = assemble_stabilized_mixed(mesh, material, params, source, boundary, mode)?;
    let reference = asm.reduce()?.solve()?;
    Ok(MixedSolution {
        reference,
        transform: asm.transform,
    })
}
