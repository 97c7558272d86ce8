//! Interior-penalty formulation of the potential problem on the broken
//! space, plus evaluation of the broken energy functional.

use nalgebra::{DMatrix, DVector, Vector2};
use rayon::prelude::*;

use crate::assembly::{element_points, LinearSystem, ScalarFn};
use crate::error::{FemError, Result};
use crate::fem::{edge_reference_point, map_to_physical, MappedPoint, Order};
use crate::linsolve::{compress, solve};
use crate::material::MaterialField;
use crate::mesh::QuadMesh;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DgParams {
    /// Consistency switch in `[-1, 1]`; `-1` gives the symmetric form.
    pub alpha: f64,
    /// Penalty scale; the per-edge penalty is `beta0 / h_e`. `None` means
    /// `10 k^2`.
    pub beta0: Option<f64>,
}

impl Default for DgParams {
    fn default() -> Self {
        DgParams {
            alpha: -1.0,
            beta0: None,
        }
    }
}

impl DgParams {
    pub fn new(alpha: f64, beta0: Option<f64>) -> Result<Self> {
        let p = DgParams { alpha, beta0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.alpha) {
            return Err(FemError::Config(format!("alpha must lie in [-1, 1], got {}", self.alpha)));
        }
        if let Some(b) = self.beta0 {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(FemError::Config(format!("beta0 must be non-negative, got {b}")));
            }
        }
        Ok(())
    }

    pub fn penalty_scale(&self, order: Order) -> f64 {
        self.beta0.unwrap_or_else(|| 10.0 * (order.degree() * order.degree()) as f64)
    }
}

/// Per-element coefficients with no continuity between elements.
#[derive(Clone, Debug, PartialEq)]
pub struct BrokenField {
    pub coefficients: Vec<DVector<f64>>,
}

impl BrokenField {
    pub fn zeros(mesh: &QuadMesh) -> Self {
        let npe = mesh.order.nodes_per_element();
        BrokenField {
            coefficients: vec![DVector::zeros(npe); mesh.num_elements()],
        }
    }

    /// Samples a per-element function at the element nodes.
    pub fn from_fn(mesh: &QuadMesh, f: impl Fn(usize, [f64; 2]) -> f64) -> Self {
        BrokenField {
            coefficients: mesh
                .elements
                .iter()
                .enumerate()
                .map(|(e, conn)| DVector::from_iterator(conn.len(), conn.iter().map(|&n| f(e, mesh.nodes[n]))))
                .collect(),
        }
    }

    pub fn from_flat(mesh: &QuadMesh, flat: &[f64]) -> Result<Self> {
        let npe = mesh.order.nodes_per_element();
        if flat.len() != npe * mesh.num_elements() {
            return Err(FemError::DimensionMismatch(format!(
                "{} coefficients for {} elements of {npe} nodes",
                flat.len(),
                mesh.num_elements()
            )));
        }
        Ok(BrokenField {
            coefficients: flat.chunks(npe).map(DVector::from_column_slice).collect(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.coefficients.iter().flat_map(|c| c.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.coefficients.iter().map(|c| c.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Which edge table an edge index refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeRef {
    Interior(usize),
    Boundary(usize),
}

/// Jump, average and normal-flux average at one edge quadrature point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeTrace {
    pub point: Vector2<f64>,
    pub jump: f64,
    pub average: f64,
    pub flux_average: f64,
}

/// Basis data on one side of an edge at parameter `s`.
fn side_point(mesh: &QuadMesh, element: usize, local_edge: usize, s: f64) -> Result<MappedPoint> {
    let coords = mesh.element_coords(element);
    Ok(map_to_physical(mesh.order, &coords, edge_reference_point(local_edge, s))?.0)
}

/// Trace data of an interior edge, one entry per Gauss point.
pub fn dg_jump_average(
    mesh: &QuadMesh,
    material: &MaterialField,
    edge: EdgeRef,
    field: &BrokenField,
) -> Result<Vec<EdgeTrace>> {
    let index = match edge {
        EdgeRef::Boundary(i) => return Err(FemError::BoundaryEdge(i)),
        EdgeRef::Interior(i) => i,
    };
    let ie = mesh
        .interior_edges
        .get(index)
        .ok_or_else(|| FemError::MissingAdjacency(format!("no interior edge {index}")))?;
    let (points, _) = mesh.order.edge_quadrature();
    points
        .iter()
        .map(|&s| {
            let mp = side_point(mesh, ie.plus.0, ie.plus.1, s)?;
            let mm = side_point(mesh, ie.minus.0, ie.minus.1, -s)?;
            let (kp, _) = material.tensors_at(mesh.elem_subdomain[ie.plus.0]);
            let (km, _) = material.tensors_at(mesh.elem_subdomain[ie.minus.0]);
            let trace = |m: &MappedPoint, c: &DVector<f64>, k: &nalgebra::Matrix2<f64>| {
                let v: f64 = m.values.iter().zip(c.iter()).map(|(a, b)| a * b).sum();
                let g: Vector2<f64> = m.gradients.iter().zip(c.iter()).map(|(g, b)| g * *b).sum();
                (v, (k * g).dot(&ie.normal))
            };
            let (vp, fp) = trace(&mp, &field.coefficients[ie.plus.0], kp);
            let (vm, fm) = trace(&mm, &field.coefficients[ie.minus.0], km);
            Ok(EdgeTrace {
                point: mp.x,
                jump: vp - vm,
                average: 0.5 * (vp + vm),
                flux_average: 0.5 * (fp + fm),
            })
        })
        .collect()
}

type Block = (Vec<usize>, DMatrix<f64>, DVector<f64>);

fn volume_block(mesh: &QuadMesh, e: usize, material: &MaterialField, source: ScalarFn) -> Result<Block> {
    let npe = mesh.order.nodes_per_element();
    let side = mesh.elem_subdomain[e];
    let (k, _) = material.tensors_at(side);
    let mut ke = DMatrix::zeros(npe, npe);
    let mut fe = DVector::zeros(npe);
    for (m, _, w) in element_points(mesh, e, &mesh.order.default_quadrature())? {
        let f = source(m.x, side);
        for a in 0..npe {
            fe[a] += w * f * m.values[a];
            let kga = k * m.gradients[a];
            for b in 0..npe {
                ke[(a, b)] += w * kga.dot(&m.gradients[b]);
            }
        }
    }
    Ok(((e * npe..(e + 1) * npe).collect(), ke, fe))
}

/// `a` test, `b` trial: `alpha [b] {flux a} - {flux b} [a] + beta [b] [a]`.
fn edge_form(
    block: &mut DMatrix<f64>,
    weight: f64,
    jumps: &[f64],
    fluxes: &[f64],
    alpha: f64,
    beta: f64,
) {
    let n = jumps.len();
    for a in 0..n {
        for b in 0..n {
            block[(a, b)] += weight * (alpha * jumps[b] * fluxes[a] - fluxes[b] * jumps[a] + beta * jumps[b] * jumps[a]);
        }
    }
}

fn interior_block(mesh: &QuadMesh, index: usize, material: &MaterialField, alpha: f64, beta0: f64) -> Result<Block> {
    let ie = &mesh.interior_edges[index];
    let npe = mesh.order.nodes_per_element();
    let beta = beta0 / ie.length;
    let (kp, _) = material.tensors_at(mesh.elem_subdomain[ie.plus.0]);
    let (km, _) = material.tensors_at(mesh.elem_subdomain[ie.minus.0]);
    let (points, weights) = mesh.order.edge_quadrature();
    let mut block = DMatrix::zeros(2 * npe, 2 * npe);
    let mut jumps = vec![0.0; 2 * npe];
    let mut fluxes = vec![0.0; 2 * npe];
    for (&s, &w) in points.iter().zip(&weights) {
        let mp = side_point(mesh, ie.plus.0, ie.plus.1, s)?;
        let mm = side_point(mesh, ie.minus.0, ie.minus.1, -s)?;
        for a in 0..npe {
            jumps[a] = mp.values[a];
            fluxes[a] = 0.5 * (kp * mp.gradients[a]).dot(&ie.normal);
            jumps[npe + a] = -mm.values[a];
            fluxes[npe + a] = 0.5 * (km * mm.gradients[a]).dot(&ie.normal);
        }
        edge_form(&mut block, w * 0.5 * ie.length, &jumps, &fluxes, alpha, beta);
    }
    let dofs = (ie.plus.0 * npe..(ie.plus.0 + 1) * npe)
        .chain(ie.minus.0 * npe..(ie.minus.0 + 1) * npe)
        .collect();
    Ok((dofs, block, DVector::zeros(2 * npe)))
}

fn boundary_block(
    mesh: &QuadMesh,
    index: usize,
    material: &MaterialField,
    alpha: f64,
    beta0: f64,
    dirichlet: &(dyn Fn(Vector2<f64>) -> f64 + Sync),
) -> Result<Block> {
    let be = &mesh.boundary_edges[index];
    let npe = mesh.order.nodes_per_element();
    let beta = beta0 / be.length;
    let (k, _) = material.tensors_at(mesh.elem_subdomain[be.element]);
    let (points, weights) = mesh.order.edge_quadrature();
    let mut block = DMatrix::zeros(npe, npe);
    let mut rhs = DVector::zeros(npe);
    let mut fluxes = vec![0.0; npe];
    for (&s, &w) in points.iter().zip(&weights) {
        let m = side_point(mesh, be.element, be.local_edge, s)?;
        for a in 0..npe {
            fluxes[a] = (k * m.gradients[a]).dot(&be.normal);
        }
        let weight = w * 0.5 * be.length;
        edge_form(&mut block, weight, &m.values, &fluxes, alpha, beta);
        let g = dirichlet(m.x);
        for a in 0..npe {
            rhs[a] += weight * g * (alpha * fluxes[a] + beta * m.values[a]);
        }
    }
    Ok(((be.element * npe..(be.element + 1) * npe).collect(), block, rhs))
}

/// Assembles the broken-space system; Dirichlet data enter weakly.
pub fn assemble_dg(
    mesh: &QuadMesh,
    material: &MaterialField,
    source: ScalarFn,
    params: &DgParams,
    dirichlet: &(dyn Fn(Vector2<f64>) -> f64 + Sync),
) -> Result<LinearSystem> {
    params.validate()?;
    let beta0 = params.penalty_scale(mesh.order);
    if params.alpha == -1.0 && beta0 == 0.0 {
        log::warn!("alpha = -1 without penalty: discrete stability is not guaranteed");
    }
    if mesh.num_elements() > 1 && mesh.interior_edges.is_empty() {
        return Err(FemError::MissingAdjacency("mesh has no interior edge table".into()));
    }
    let ndof = mesh.num_elements() * mesh.order.nodes_per_element();
    let volume = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| volume_block(mesh, e, material, source))
        .collect::<Result<Vec<_>>>()?;
    let interior = (0..mesh.interior_edges.len())
        .into_par_iter()
        .map(|i| interior_block(mesh, i, material, params.alpha, beta0))
        .collect::<Result<Vec<_>>>()?;
    let boundary = (0..mesh.boundary_edges.len())
        .into_par_iter()
        .map(|i| boundary_block(mesh, i, material, params.alpha, beta0, dirichlet))
        .collect::<Result<Vec<_>>>()?;
    let mut trips = Vec::new();
    let mut rhs = vec![0.0; ndof];
    for (dofs, ke, fe) in volume.into_iter().chain(interior).chain(boundary) {
        for (a, &ga) in dofs.iter().enumerate() {
            rhs[ga] += fe[a];
            for (b, &gb) in dofs.iter().enumerate() {
                trips.push((ga, gb, ke[(a, b)]));
            }
        }
    }
    Ok(LinearSystem {
        matrix: compress(ndof, &trips)?,
        rhs,
        symmetric: params.alpha == -1.0,
    })
}

pub fn solve_dg(
    mesh: &QuadMesh,
    material: &MaterialField,
    params: &DgParams,
    source: ScalarFn,
    dirichlet: &(dyn Fn(Vector2<f64>) -> f64 + Sync),
) -> Result<BrokenField> {
    let system = assemble_dg(mesh, material, source, params, dirichlet)?;
    let x = solve(&system.matrix, &system.rhs, system.symmetric)?;
    BrokenField::from_flat(mesh, &x)
}

/// `1/2 sum (K grad q, grad q) - int_{interior} {K grad q . n} [q] - (f, q)`.
pub fn evaluate_broken_functional(
    mesh: &QuadMesh,
    material: &MaterialField,
    source: ScalarFn,
    field: &BrokenField,
) -> Result<f64> {
    let mut total = 0.0;
    for e in 0..mesh.num_elements() {
        let side = mesh.elem_subdomain[e];
        let (k, _) = material.tensors_at(side);
        let c = &field.coefficients[e];
        for (m, _, w) in element_points(mesh, e, &mesh.order.default_quadrature())? {
            let q: f64 = m.values.iter().zip(c.iter()).map(|(a, b)| a * b).sum();
            let g: Vector2<f64> = m.gradients.iter().zip(c.iter()).map(|(g, b)| g * *b).sum();
            total += w * (0.5 * (k * g).dot(&g) - source(m.x, side) * q);
        }
    }
    let (_, weights) = mesh.order.edge_quadrature();
    for (i, ie) in mesh.interior_edges.iter().enumerate() {
        for (t, w) in dg_jump_average(mesh, material, EdgeRef::Interior(i), field)?
            .iter()
            .zip(&weights)
        {
            total -= w * 0.5 * ie.length * t.flux_average * t.jump;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_galerkin, solve_galerkin};
    use crate::material::crumpton_material;
    use crate::mesh::{build_structured_mesh, Rect, Subdomain};
    use proptest::prelude::*;

    fn zero(_: Vector2<f64>, _: Subdomain) -> f64 {
        0.0
    }

    fn mesh(n: usize, order: Order) -> QuadMesh {
        build_structured_mesh(2 * n, 2 * n, Rect::biunit(), 0.0, order).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(DgParams::new(1.5, None).is_err());
        assert!(DgParams::new(0.0, Some(-1.0)).is_err());
        let p = DgParams::default();
        assert_eq!(p.penalty_scale(Order::Q1), 10.0);
        assert_eq!(p.penalty_scale(Order::Q2), 40.0);
    }

    #[test]
    fn jump_and_average_conventions() {
        let m = build_structured_mesh(2, 1, Rect::biunit(), 0.0, Order::Q1).unwrap();
        let mat = MaterialField::identity();
        let field = BrokenField::from_fn(&m, |e, _| if e == 1 { 3.0 } else { 1.0 });
        let t = dg_jump_average(&m, &mat, EdgeRef::Interior(0), &field).unwrap();
        for p in &t {
            assert!((p.jump - 2.0).abs() < 1e-14);
            assert!((p.average - 2.0).abs() < 1e-14);
        }
        let same = BrokenField::from_fn(&m, |_, _| 5.0);
        for p in dg_jump_average(&m, &mat, EdgeRef::Interior(0), &same).unwrap() {
            assert!(p.jump.abs() < 1e-14 && (p.average - 5.0).abs() < 1e-14);
        }
        let linear = BrokenField::from_fn(&m, |_, x| 2.0 * x[0] + 3.0 * x[1]);
        let n = m.interior_edges[0].normal;
        for p in dg_jump_average(&m, &mat, EdgeRef::Interior(0), &linear).unwrap() {
            assert!((p.flux_average - (2.0 * n[0] + 3.0 * n[1])).abs() < 1e-13);
        }
        assert!(matches!(
            dg_jump_average(&m, &mat, EdgeRef::Boundary(0), &linear),
            Err(FemError::BoundaryEdge(0))
        ));
    }

    #[test]
    fn symmetric_variant_is_symmetric() {
        let m = mesh(4, Order::Q2);
        let mat = crumpton_material(1.0).unwrap();
        let sys = assemble_dg(&m, &mat, &zero, &DgParams::default(), &|_| 0.0).unwrap();
        assert!(sys.symmetric);
        assert!(sys.matrix.is_symmetric(1e-10));
    }

    #[test]
    fn alpha_plus_one_symmetric_part_is_volume_plus_penalty() {
        let m = mesh(3, Order::Q1);
        let mat = crumpton_material(1.0).unwrap();
        let dense = |alpha: f64| {
            assemble_dg(&m, &mat, &zero, &DgParams::new(alpha, Some(7.0)).unwrap(), &|_| 0.0)
                .unwrap()
                .matrix
                .to_dense()
        };
        let dense = |alpha: f64| {
            let d = dense(alpha);
            DMatrix::from_fn(d.len(), d.len(), |i, j| d[i][j])
        };
        let (plus, neutral) = (dense(1.0), dense(0.0));
        // b_alpha = V + P + alpha C - C^T, so C = b_1 - b_0 and V + P = b_0 + C^T
        let coupling = &plus - &neutral;
        let volume_penalty = &neutral + coupling.transpose();
        assert!((&volume_penalty - volume_penalty.transpose()).abs().max() < 1e-12);
        let sym = (&plus + plus.transpose()) * 0.5;
        assert!((sym - volume_penalty).abs().max() < 1e-12);
    }

    #[test]
    fn zero_penalty_symmetric_still_assembles() {
        let m = mesh(2, Order::Q1);
        let sys = assemble_dg(
            &m,
            &MaterialField::identity(),
            &zero,
            &DgParams::new(-1.0, Some(0.0)).unwrap(),
            &|_| 0.0,
        )
        .unwrap();
        assert!(sys.matrix.is_symmetric(1e-12));
    }

    fn dg_galerkin_gap(n: usize, order: Order) -> f64 {
        let m = build_structured_mesh(n, n, Rect::biunit(), 5.0, order).unwrap();
        let mat = MaterialField::identity();
        let exact = |x: Vector2<f64>| x[0].exp() * x[1].sin();
        let dg = solve_dg(&m, &mat, &DgParams::new(-1.0, Some(100.0)).unwrap(), &zero, &exact).unwrap();
        let cg = solve_galerkin(&m, &mat, &zero, &exact).unwrap();
        let mut gap: f64 = 0.0;
        for (e, conn) in m.elements.iter().enumerate() {
            for (a, &n) in conn.iter().enumerate() {
                gap = gap.max((dg.coefficients[e][a] - cg[n]).abs());
            }
        }
        gap
    }

    #[test]
    fn large_penalty_approaches_galerkin() {
        for order in [Order::Q1, Order::Q2] {
            let (coarse, fine) = (dg_galerkin_gap(4, order), dg_galerkin_gap(8, order));
            let rate = (coarse / fine).log2();
            assert!(rate > order.degree() as f64 + 0.5, "{order:?}: {coarse} -> {fine}");
        }
    }

    #[test]
    fn continuous_field_energy_matches_galerkin_stiffness() {
        let m = mesh(4, Order::Q1);
        let mat = crumpton_material(1.0).unwrap();
        let nodal: Vec<f64> = m.nodes.iter().map(|p| (p[0] * 1.3).sin() + p[1] * p[1]).collect();
        let field = BrokenField::from_fn(&m, |_, x| (x[0] * 1.3).sin() + x[1] * x[1]);
        let j = evaluate_broken_functional(&m, &mat, &zero, &field).unwrap();
        let k = assemble_galerkin(&m, &mat, &zero, &|_| 0.0).unwrap().system.matrix;
        let energy = 0.5 * k.bilinear(&nodal, &nodal);
        assert!((j - energy).abs() < 1e-12 * energy.abs().max(1.0), "{j} vs {energy}");
        assert_eq!(evaluate_broken_functional(&m, &mat, &zero, &BrokenField::zeros(&m)).unwrap(), 0.0);
    }

    /// Composite Simpson rule on `[a, b]` with `n` (even) panels.
    fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn broken_functional_matches_hand_quadrature() {
        let m = build_structured_mesh(2, 1, Rect::biunit(), 0.0, Order::Q1).unwrap();
        let mat = crumpton_material(1.0).unwrap();
        let (k1, k2) = (mat.conductivity[0], mat.conductivity[1]);
        // bilinear on each side, discontinuous across x = 0
        let q1 = |x: f64, y: f64| 1.0 + 0.5 * x - 0.25 * y + 0.3 * x * y;
        let g1 = |x: f64, y: f64| Vector2::new(0.5 + 0.3 * y, -0.25 + 0.3 * x);
        let q2 = |x: f64, y: f64| -0.5 + 2.0 * x + y - x * y;
        let g2 = |x: f64, y: f64| Vector2::new(2.0 - y, 1.0 - x);
        let f1 = |x: f64, y: f64| x + y;
        let f2 = |x: f64, _y: f64| 2.0 - x;
        let source = move |x: Vector2<f64>, s: Subdomain| match s {
            Subdomain::Omega1 => f1(x[0], x[1]),
            Subdomain::Omega2 => f2(x[0], x[1]),
        };
        let field = BrokenField::from_fn(&m, |e, p| if e == 0 { q1(p[0], p[1]) } else { q2(p[0], p[1]) });
        let got = evaluate_broken_functional(&m, &mat, &source, &field).unwrap();

        let area = |x0: f64, x1: f64, f: &dyn Fn(f64, f64) -> f64| {
            simpson(x0, x1, 40, |x| simpson(-1.0, 1.0, 40, |y| f(x, y)))
        };
        let vol1 = area(-1.0, 0.0, &|x, y| 0.5 * (k1 * g1(x, y)).dot(&g1(x, y)) - f1(x, y) * q1(x, y));
        let vol2 = area(0.0, 1.0, &|x, y| 0.5 * (k2 * g2(x, y)).dot(&g2(x, y)) - f2(x, y) * q2(x, y));
        // outward normal of Omega_2 on the interface, jump q2 - q1
        let n2 = Vector2::new(-1.0, 0.0);
        let iface = simpson(-1.0, 1.0, 40, |y| {
            let avg = 0.5 * ((k1 * g1(0.0, y)).dot(&n2) + (k2 * g2(0.0, y)).dot(&n2));
            avg * (q2(0.0, y) - q1(0.0, y))
        });
        let expected = vol1 + vol2 - iface;
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn matrix_invariant_under_relabeling() {
        let m = mesh(3, Order::Q2);
        let mat = crumpton_material(2.0).unwrap();
        let perm: Vec<usize> = (0..m.num_elements()).rev().collect();
        let r = m.relabel_elements(&perm).unwrap();
        let npe = m.order.nodes_per_element();
        for alpha in [-1.0, 0.3, 1.0] {
            let p = DgParams::new(alpha, None).unwrap();
            let a = assemble_dg(&m, &mat, &zero, &p, &|x| x[0]).unwrap();
            let b = assemble_dg(&r, &mat, &zero, &p, &|x| x[0]).unwrap();
            let map = |i: usize| perm[i / npe] * npe + i % npe;
            for (i, j, v) in b.matrix.triplets() {
                assert!((a.matrix.get(map(i), map(j)) - v).abs() < 1e-12);
            }
            assert_eq!(a.matrix.nnz(), b.matrix.nnz());
            for i in 0..b.rhs.len() {
                assert!((a.rhs[map(i)] - b.rhs[i]).abs() < 1e-12);
            }
        }
        // relabeling flips the jump sign on edges whose orientation changes
        let field = BrokenField::from_fn(&m, |e, p| e as f64 + p[1]);
        let relabeled = BrokenField {
            coefficients: perm.iter().map(|&o| field.coefficients[o].clone()).collect(),
        };
        let edge_key = |mesh: &QuadMesh, i: usize| {
            let ie = &mesh.interior_edges[i];
            let c = &mesh.elements[ie.plus.0];
            let (a, b) = (c[ie.plus.1], c[(ie.plus.1 + 1) % 4]);
            (a.min(b), a.max(b))
        };
        for i in 0..m.interior_edges.len() {
            let key = edge_key(&m, i);
            let j = (0..r.interior_edges.len()).find(|&j| edge_key(&r, j) == key).unwrap();
            let ta = dg_jump_average(&m, &mat, EdgeRef::Interior(i), &field).unwrap();
            let tb = dg_jump_average(&r, &mat, EdgeRef::Interior(j), &relabeled).unwrap();
            for (x, y) in ta.iter().zip(tb.iter().rev()) {
                assert!((x.jump + y.jump).abs() < 1e-12);
                assert!((x.jump * x.jump - y.jump * y.jump).abs() < 1e-12);
                assert!((x.average - y.average).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn coercive_for_alpha_plus_one(seed in any::<u64>(), beta0 in 0.1f64..50.0) {
            use rand::{Rng, SeedableRng};
            let m = mesh(2, Order::Q1);
            let mat = crumpton_material(1.0).unwrap();
            let sys = assemble_dg(&m, &mat, &zero, &DgParams::new(1.0, Some(beta0)).unwrap(), &|_| 0.0).unwrap();
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let q: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            prop_assert!(sys.matrix.bilinear(&q, &q) > 0.0);
        }
    }
}
