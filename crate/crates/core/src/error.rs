use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("tangent violates the TS^2 constraint (residual {residual:.3e})")]
    InvalidTangent { residual: f64 },

    #[error("direction outside the chart domain (angle {angle:.3e} rad from the south pole)")]
    ChartDomain { angle: f64 },

    #[error("surface is not immersed at ({s}, {t}): |ds x dt| = {norm:.3e}")]
    DegenerateSurface { s: f64, t: f64, norm: f64 },

    #[error("first fundamental form is ill-conditioned (condition {condition:.3e})")]
    ChartDegenerate { condition: f64 },

    #[error("congruence tangents are degenerate: {0}")]
    DegenerateCongruence(String),

    #[error("discriminant vanishes on the loop at sample {index} ({s}, {t})")]
    ComplexPointOnLoop { index: usize, s: f64, t: f64 },

    #[error("loop undersampled: phase jump {jump:.3} rad at sample {index}")]
    Resolution { index: usize, jump: f64 },

    #[error("induced metric cannot be inverted: {0}")]
    CannotInvertMetric(String),

    #[error("unknown surface family `{0}`")]
    UnknownFamily(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid disc boundary: {0}")]
    InvalidBoundary(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("flow breakdown: {0}")]
    FlowBreakdown(String),

    #[error("expression error at column {column}: {message}")]
    Expression { column: usize, message: String },
}

impl Error {
    /// Stable snake_case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::InvalidTangent { .. } => "invalid_tangent",
            Error::ChartDomain { .. } => "chart_domain",
            Error::DegenerateSurface { .. } => "degenerate_surface",
            Error::ChartDegenerate { .. } => "chart_degenerate",
            Error::DegenerateCongruence(_) => "degenerate_congruence",
            Error::ComplexPointOnLoop { .. } => "complex_point_on_loop",
            Error::Resolution { .. } => "resolution",
            Error::CannotInvertMetric(_) => "cannot_invert_metric",
            Error::UnknownFamily(_) => "unknown_family",
            Error::InvalidParams(_) => "invalid_params",
            Error::InvalidBoundary(_) => "invalid_boundary",
            Error::Solver(_) => "solver",
            Error::FlowBreakdown(_) => "flow_breakdown",
            Error::Expression { .. } => "expression",
        }
    }
}
