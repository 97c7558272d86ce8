use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("unsupported element order {0} (expected 1 or 2)")]
    UnsupportedOrder(usize),
    #[error("unsupported Gauss rule with {0} points per direction (expected 1..=5)")]
    UnsupportedQuadrature(usize),
    #[error("degenerate element: jacobian determinant {det}")]
    DegenerateElement { det: f64 },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("interface abscissa {x} is not aligned with a mesh line")]
    MisalignedInterface { x: f64 },
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("system has no free degrees of freedom")]
    EmptySystem,
    #[error("potential is only determined up to a constant; configure a pinned node")]
    UnpinnedPotential,
    #[error("conflicting prescriptions for dof {dof}: {first} vs {second}")]
    ConflictingConstraint { dof: usize, first: f64, second: f64 },
    #[error("non-finite prescription for dof {0}")]
    NonFiniteConstraint(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("triplet index ({row}, {col}) out of range for dimension {dim}")]
    IndexOutOfRange { row: usize, col: usize, dim: usize },
    #[error("factorization failed: {0}")]
    SingularSystem(String),
    #[error("residual contract violated: relative residual {residual:e}")]
    ResidualViolation { residual: f64 },
    #[error("interface matrix is near singular (condition number {cond:e})")]
    NearSingularInterface { cond: f64 },
    #[error("element {0} is not an Omega_1 element adjacent to the interface")]
    NotInterfaceElement(usize),
    #[error("edge {0} is a boundary edge; jumps are defined on interior edges only")]
    BoundaryEdge(usize),
    #[error("missing edge adjacency: {0}")]
    MissingAdjacency(String),
    #[error("invalid input for rate fit: {0}")]
    InvalidRateInput(String),
    #[error("solve failed on mesh n={n}: {source}")]
    StudyFailure {
        n: usize,
        #[source]
        source: Box<FemError>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FemError>;
