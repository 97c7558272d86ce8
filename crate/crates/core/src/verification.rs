//! Benchmark problems with closed-form solutions, L² error norms and
//! convergence studies.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DVector, Matrix2, Vector2};
use rayon::prelude::*;

use crate::assembly::{
    element_points, solve_galerkin, solve_stabilized_mixed, InterfaceMode, MixedBoundary, MixedMethod,
    MixedSolution, StabilizationParams,
};
use crate::dg::{solve_dg, DgParams};
use crate::error::{FemError, Result};
use crate::fem::Order;
use crate::interface::{interface_condition_violation, recover_interface_solution, FIELDS_PER_NODE};
use crate::material::{crumpton_material, MaterialField};
use crate::mesh::{build_structured_mesh, QuadMesh, Rect, Subdomain};

type FieldFn<T> = Arc<dyn Fn(Vector2<f64>, Subdomain) -> T + Send + Sync>;

/// Problem with known potential on a rectangle split at `interface_x`.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub material: MaterialField,
    pub domain: Rect,
    /// Interface abscissa; outside the domain for homogeneous problems.
    pub interface_x: f64,
    potential: FieldFn<f64>,
    gradient: FieldFn<Vector2<f64>>,
    source: FieldFn<f64>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("material", &self.material)
            .field("domain", &self.domain)
            .field("interface_x", &self.interface_x)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn new(
        name: impl Into<String>,
        material: MaterialField,
        domain: Rect,
        interface_x: f64,
        potential: FieldFn<f64>,
        gradient: FieldFn<Vector2<f64>>,
        source: FieldFn<f64>,
    ) -> Self {
        ProblemSpec {
            name: name.into(),
            material,
            domain,
            interface_x,
            potential,
            gradient,
            source,
        }
    }

    /// Subdomain owning a point; points on the interface belong to Omega_2.
    pub fn side_of(&self, x: Vector2<f64>) -> Subdomain {
        if x[0] < self.interface_x {
            Subdomain::Omega1
        } else {
            Subdomain::Omega2
        }
    }

    pub fn potential(&self, x: Vector2<f64>, side: Subdomain) -> f64 {
        (self.potential)(x, side)
    }

    pub fn gradient(&self, x: Vector2<f64>, side: Subdomain) -> Vector2<f64> {
        (self.gradient)(x, side)
    }

    /// `u = -K grad p`.
    pub fn velocity(&self, x: Vector2<f64>, side: Subdomain) -> Vector2<f64> {
        -(self.material.tensors_at(side).0 * self.gradient(x, side))
    }

    /// `f = div u`.
    pub fn source(&self, x: Vector2<f64>, side: Subdomain) -> f64 {
        (self.source)(x, side)
    }

    pub fn mesh(&self, n: usize, order: Order) -> Result<QuadMesh> {
        build_structured_mesh(n, n, self.domain, self.interface_x, order)
    }
}

/// Crumpton benchmark on `[-1, 1]^2` with interface `x = 0`.
pub fn crumpton_problem(gamma: f64) -> Result<ProblemSpec> {
    let material = crumpton_material(gamma)?;
    Ok(ProblemSpec::new(
        format!("crumpton(gamma={gamma})"),
        material,
        Rect::biunit(),
        0.0,
        Arc::new(move |x, side| {
            let (s, c) = x[1].sin_cos();
            match side {
                Subdomain::Omega1 => gamma * (2.0 * s + c) * x[0] + s,
                Subdomain::Omega2 => x[0].exp() * s,
            }
        }),
        Arc::new(move |x, side| {
            let (s, c) = x[1].sin_cos();
            match side {
                Subdomain::Omega1 => Vector2::new(gamma * (2.0 * s + c), gamma * (2.0 * c - s) * x[0] + c),
                Subdomain::Omega2 => Vector2::new(x[0].exp() * s, x[0].exp() * c),
            }
        }),
        Arc::new(move |x, side| match side {
            // -laplace p = p on the identity branch
            Subdomain::Omega1 => {
                let (s, c) = x[1].sin_cos();
                gamma * (2.0 * s + c) * x[0] + s
            }
            Subdomain::Omega2 => -2.0 * gamma * x[0].exp() * x[1].cos(),
        }),
    ))
}

/// `K = I`, `p = exp(x) sin(y)` on `[-1, 1]^2`; `p` is harmonic so `f = 0`.
pub fn smooth_problem() -> ProblemSpec {
    ProblemSpec::new(
        "smooth",
        MaterialField::identity(),
        Rect::biunit(),
        f64::INFINITY,
        Arc::new(|x, _| x[0].exp() * x[1].sin()),
        Arc::new(|x, _| Vector2::new(x[0].exp() * x[1].sin(), x[0].exp() * x[1].cos())),
        Arc::new(|_, _| 0.0),
    )
}

/// Discretization selected for a study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Galerkin,
    Mixed(StabilizationParams),
    Dg(DgParams),
}

impl Method {
    pub fn mixed(method: MixedMethod) -> Self {
        Method::Mixed(StabilizationParams::for_method(method))
    }

    pub fn label(&self) -> String {
        match self {
            Method::Galerkin => "galerkin".into(),
            Method::Mixed(p) => p.method.to_string(),
            Method::Dg(_) => "dg".into(),
        }
    }
}

/// Discrete fields ready for error evaluation.
#[derive(Clone, Debug)]
pub enum DiscreteSolution {
    /// Mixed unknowns `(u_x, u_y, p)`.
    Mixed(MixedSolution),
    /// Potential coefficients per element; the velocity is `-K grad p_h`.
    Potential(Vec<DVector<f64>>),
}

impl DiscreteSolution {
    pub fn from_nodal_potential(mesh: &QuadMesh, potential: &[f64]) -> Self {
        DiscreteSolution::Potential(
            mesh.elements
                .iter()
                .map(|conn| DVector::from_iterator(conn.len(), conn.iter().map(|&n| potential[n])))
                .collect(),
        )
    }
}

/// Squared-error integrals are summed per element, then in element order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorNorms {
    pub err_p: f64,
    pub err_u: f64,
    pub err_divu: f64,
}

/// Discrete `(p_h, u_h, div u_h)` at quadrature points of one element.
fn element_errors(
    mesh: &QuadMesh,
    element: usize,
    solution: &DiscreteSolution,
    problem: &ProblemSpec,
) -> Result<[f64; 3]> {
    let side = mesh.elem_subdomain[element];
    let (k, _) = problem.material.tensors_at(side);
    let coords = mesh.element_coords(element);
    let coeffs = match solution {
        DiscreteSolution::Mixed(s) => s.element_unknowns(mesh, element),
        DiscreteSolution::Potential(c) => c[element].clone(),
    };
    let mut acc = [0.0; 3];
    for (m, shape, w) in element_points(mesh, element, &mesh.order.default_quadrature())? {
        let (ph, uh, divh) = match solution {
            DiscreteSolution::Mixed(_) => {
                let mut p = 0.0;
                let mut u = Vector2::zeros();
                let mut div = 0.0;
                for (a, (phi, g)) in m.values.iter().zip(&m.gradients).enumerate() {
                    let o = FIELDS_PER_NODE * a;
                    u += Vector2::new(coeffs[o], coeffs[o + 1]) * *phi;
                    p += coeffs[o + 2] * phi;
                    div += g[0] * coeffs[o] + g[1] * coeffs[o + 1];
                }
                (p, u, div)
            }
            DiscreteSolution::Potential(_) => {
                let hess = m.hessians(&coords, &shape);
                let mut p = 0.0;
                let mut grad = Vector2::zeros();
                let mut second = Matrix2::zeros();
                for a in 0..m.values.len() {
                    p += coeffs[a] * m.values[a];
                    grad += m.gradients[a] * coeffs[a];
                    second += hess[a] * coeffs[a];
                }
                (p, -(k * grad), -k.component_mul(&second).sum())
            }
        };
        acc[0] += w * (problem.potential(m.x, side) - ph).powi(2);
        acc[1] += w * (problem.velocity(m.x, side) - uh).norm_squared();
        acc[2] += w * (problem.source(m.x, side) - divh).powi(2);
    }
    Ok(acc)
}

pub fn l2_errors(mesh: &QuadMesh, solution: &DiscreteSolution, problem: &ProblemSpec) -> Result<ErrorNorms> {
    let parts = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| element_errors(mesh, e, solution, problem))
        .collect::<Result<Vec<_>>>()?;
    let mut total = [0.0; 3];
    for p in parts {
        for i in 0..3 {
            total[i] += p[i];
        }
    }
    Ok(ErrorNorms {
        err_p: total[0].sqrt(),
        err_u: total[1].sqrt(),
        err_divu: total[2].sqrt(),
    })
}

/// Nodal interpolant of the exact fields in mixed layout, taking the
/// Omega_2 value on interface nodes.
pub fn interpolate_mixed(mesh: &QuadMesh, problem: &ProblemSpec) -> Vec<f64> {
    let mut out = Vec::with_capacity(FIELDS_PER_NODE * mesh.num_nodes());
    for p in &mesh.nodes {
        let x = Vector2::new(p[0], p[1]);
        let side = problem.side_of(x);
        let u = problem.velocity(x, side);
        out.extend([u[0], u[1], problem.potential(x, side)]);
    }
    out
}

/// Result of one solve: the discrete fields plus bookkeeping.
#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub solution: DiscreteSolution,
    /// Largest interface-condition violation in constrained modes.
    pub interface_violation: Option<f64>,
}

pub fn solve_problem(
    mesh: &QuadMesh,
    problem: &ProblemSpec,
    method: &Method,
    mode: InterfaceMode,
) -> Result<SolveOutcome> {
    let material = &problem.material;
    let source = |x: Vector2<f64>, side: Subdomain| problem.source(x, side);
    let trace = |x: Vector2<f64>| problem.potential(x, problem.side_of(x));
    if mode != InterfaceMode::Continuous && !matches!(method, Method::Mixed(_)) {
        return Err(FemError::Config(format!(
            "interface mode '{mode}' requires a mixed method"
        )));
    }
    match method {
        Method::Galerkin => {
            let p = solve_galerkin(mesh, material, &source, &trace)?;
            Ok(SolveOutcome {
                solution: DiscreteSolution::from_nodal_potential(mesh, &p),
                interface_violation: None,
            })
        }
        Method::Dg(params) => {
            let field = solve_dg(mesh, material, params, &source, &trace)?;
            Ok(SolveOutcome {
                solution: DiscreteSolution::Potential(field.coefficients),
                interface_violation: None,
            })
        }
        Method::Mixed(params) => {
            let pin_x = Vector2::new(mesh.nodes[0][0], mesh.nodes[0][1]);
            let velocity = |x: Vector2<f64>| problem.velocity(x, problem.side_of(x));
            let boundary = MixedBoundary {
                velocity: &velocity,
                pin: Some((0, trace(pin_x))),
            };
            let sol = solve_stabilized_mixed(mesh, material, params, &source, &boundary, mode)?;
            let interface_violation = sol.transform.as_ref().map(|tr| {
                let traces = recover_interface_solution(tr, &sol.reference);
                interface_condition_violation(&traces, tr, material)
            });
            Ok(SolveOutcome {
                solution: DiscreteSolution::Mixed(sol),
                interface_violation,
            })
        }
    }
}

/// One row of a convergence table.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub n: usize,
    pub h: f64,
    pub errors: ErrorNorms,
    /// Slopes against the previous (coarser) mesh; `None` on the first row.
    pub rate_p: Option<f64>,
    pub rate_u: Option<f64>,
    pub rate_divu: Option<f64>,
    pub interface_violation: Option<f64>,
}

/// Log-log slopes `log(e_i / e_{i+1}) / log(h_i / h_{i+1})`.
pub fn fit_rate(h: &[f64], errors: &[f64]) -> Result<Vec<f64>> {
    if h.len() != errors.len() {
        return Err(FemError::InvalidRateInput(format!(
            "{} mesh sizes but {} errors",
            h.len(),
            errors.len()
        )));
    }
    if let Some(bad) = h.iter().chain(errors).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(FemError::InvalidRateInput(format!(
            "mesh sizes and errors must be positive and finite, got {bad}"
        )));
    }
    h.windows(2)
        .zip(errors.windows(2))
        .map(|(hw, ew)| {
            if hw[0] == hw[1] {
                return Err(FemError::InvalidRateInput("repeated mesh size".into()));
            }
            Ok((ew[0] / ew[1]).ln() / (hw[0] / hw[1]).ln())
        })
        .collect()
}

/// Study settings: method, element order, interface handling and meshes.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub method: Method,
    pub order: Order,
    pub mode: InterfaceMode,
    pub meshes: Vec<usize>,
}

impl StudyConfig {
    pub fn new(method: Method, order: Order, mode: InterfaceMode, meshes: &[usize]) -> Self {
        StudyConfig {
            method,
            order,
            mode,
            meshes: meshes.to_vec(),
        }
    }
}

/// Standard mesh family for an element order.
pub fn default_meshes(order: Order) -> Vec<usize> {
    match order {
        Order::Q1 => vec![8, 16, 32, 64],
        Order::Q2 => vec![4, 8, 16, 32],
    }
}

/// Solves the problem on `n x n` meshes and returns the error norms.
pub fn run_single(problem: &ProblemSpec, config: &StudyConfig, n: usize) -> Result<(ErrorNorms, Option<f64>)> {
    let mesh = problem.mesh(n, config.order)?;
    let outcome = solve_problem(&mesh, problem, &config.method, config.mode)?;
    Ok((l2_errors(&mesh, &outcome.solution, problem)?, outcome.interface_violation))
}

/// Runs every mesh (concurrently) and fits rates between consecutive meshes.
pub fn convergence_study(problem: &ProblemSpec, config: &StudyConfig) -> Result<Vec<ErrorReport>> {
    if config.meshes.is_empty() {
        return Err(FemError::Config("no mesh sizes given".into()));
    }
    if config.meshes.windows(2).any(|w| w[0] >= w[1]) || config.meshes[0] == 0 {
        return Err(FemError::Config(format!(
            "mesh sizes must be positive and strictly increasing, got {:?}",
            config.meshes
        )));
    }
    let results = config
        .meshes
        .par_iter()
        .map(|&n| {
            run_single(problem, config, n).map_err(|e| FemError::StudyFailure {
                n,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let width = problem.domain.x1 - problem.domain.x0;
    let h: Vec<f64> = config.meshes.iter().map(|&n| width / n as f64).collect();
    let rates = |pick: fn(&ErrorNorms) -> f64| -> Vec<Option<f64>> {
        let e: Vec<f64> = results.iter().map(|r| pick(&r.0)).collect();
        let mut out = vec![None];
        out.extend(fit_rate(&h, &e).map_or_else(
            |_| vec![None; e.len() - 1],
            |v| v.into_iter().map(Some).collect(),
        ));
        out
    };
    let (rp, ru, rd) = (rates(|e| e.err_p), rates(|e| e.err_u), rates(|e| e.err_divu));
    Ok(results
        .into_iter()
        .enumerate()
        .map(|(i, (errors, violation))| ErrorReport {
            n: config.meshes[i],
            h: h[i],
            errors,
            rate_p: rp[i],
            rate_u: ru[i],
            rate_divu: rd[i],
            interface_violation: violation,
        })
        .collect())
}

pub const CONVERGENCE_HEADER: &str =
    "method,order,interface_mode,n,h,err_p,err_u,err_divu,rate_p,rate_u,rate_divu";

pub fn write_convergence_csv<W: Write>(
    mut out: W,
    config: &StudyConfig,
    reports: &[ErrorReport],
) -> std::io::Result<()> {
    let rate = |r: Option<f64>| r.map(|v| format!("{v:.6}")).unwrap_or_default();
    writeln!(out, "{CONVERGENCE_HEADER}")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{:.10e},{:.10e},{:.10e},{},{},{}",
            config.method.label(),
            config.order.degree(),
            config.mode,
            r.n,
            r.h,
            r.errors.err_p,
            r.errors.err_u,
            r.errors.err_divu,
            rate(r.rate_p),
            rate(r.rate_u),
            rate(r.rate_divu)
        )?;
    }
    Ok(())
}

/// Nodal fields `x,y,ux,uy,p`; in constrained modes interface nodes are
/// written once per side with a trailing `side` column.
pub fn write_field_dump<W: Write>(mut out: W, mesh: &QuadMesh, solution: &DiscreteSolution, problem: &ProblemSpec) -> Result<()> {
    let nodal = nodal_fields(mesh, solution, problem)?;
    let sided = matches!(solution, DiscreteSolution::Mixed(s) if s.transform.is_some());
    if sided {
        writeln!(out, "x,y,ux,uy,p,side")?;
    } else {
        writeln!(out, "x,y,ux,uy,p")?;
    }
    let traces = match solution {
        DiscreteSolution::Mixed(MixedSolution {
            reference,
            transform: Some(tr),
        }) => recover_interface_solution(tr, reference),
        _ => Vec::new(),
    };
    let mut trace_iter = traces.iter().peekable();
    for (node, p) in mesh.nodes.iter().enumerate() {
        let v = &nodal[node];
        match trace_iter.peek() {
            Some(t) if t.node == node => {
                for (side, u) in [(1, t.omega1_velocity), (2, t.omega2_velocity)] {
                    writeln!(out, "{},{},{},{},{},{}", p[0], p[1], u[0], u[1], t.potential, side)?;
                }
                trace_iter.next();
            }
            _ if sided => {
                let side = mesh_node_side(problem, p);
                writeln!(out, "{},{},{},{},{},{}", p[0], p[1], v[0], v[1], v[2], side)?;
            }
            _ => writeln!(out, "{},{},{},{},{}", p[0], p[1], v[0], v[1], v[2])?,
        }
    }
    Ok(())
}

fn mesh_node_side(problem: &ProblemSpec, p: &[f64; 2]) -> u8 {
    problem.side_of(Vector2::new(p[0], p[1])).tag()
}

/// Nodal `(u_x, u_y, p)`. Potential-only solutions average `-K grad p_h`
/// over the elements sharing a node.
fn nodal_fields(mesh: &QuadMesh, solution: &DiscreteSolution, problem: &ProblemSpec) -> Result<Vec<[f64; 3]>> {
    match solution {
        DiscreteSolution::Mixed(s) => Ok((0..mesh.num_nodes())
            .map(|n| {
                let o = FIELDS_PER_NODE * n;
                [s.reference[o], s.reference[o + 1], s.reference[o + 2]]
            })
            .collect()),
        DiscreteSolution::Potential(coeffs) => {
            let mut sum = vec![[0.0; 3]; mesh.num_nodes()];
            let mut count = vec![0usize; mesh.num_nodes()];
            for (e, conn) in mesh.elements.iter().enumerate() {
                let (k, _) = problem.material.tensors_at(mesh.elem_subdomain[e]);
                let coords = mesh.element_coords(e);
                for (local, ref_pt) in mesh.order.reference_nodes().iter().enumerate() {
                    let (m, _) = crate::fem::map_to_physical(mesh.order, &coords, *ref_pt)?;
                    let grad: Vector2<f64> = m.gradients.iter().zip(coeffs[e].iter()).map(|(g, c)| g * *c).sum();
                    let u = -(k * grad);
                    let node = conn[local];
                    sum[node][0] += u[0];
                    sum[node][1] += u[1];
                    sum[node][2] += coeffs[e][local];
                    count[node] += 1;
                }
            }
            Ok(sum
                .into_iter()
                .zip(count)
                .map(|(s, c)| s.map(|v| v / c.max(1) as f64))
                .collect())
        }
    }
}

impl FromStr for Method {
    type Err = FemError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "galerkin" => Ok(Method::Galerkin),
            "dg" => Ok(Method::Dg(DgParams::default())),
            other => other.parse::<MixedMethod>().map(Method::mixed),
        }
    }
}
