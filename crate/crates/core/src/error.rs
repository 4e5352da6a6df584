use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("half-opening angle {0} outside (0, pi)")]
    AngleOutOfRange(f64),
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("boundary curves self-intersect or domain is not star-shaped: {0}")]
    SelfIntersection(String),
    #[error("map image leaves the closed domain at curve parameter {parameter}")]
    ImageOutsideDomain { parameter: f64 },
    #[error("contraction margin {margin:.3e} is not positive (minimum {required:.3e})")]
    NonPositiveMargin { margin: f64, required: f64 },
    #[error("jacobian determinant {det:.3e} too small at ({x}, {y})")]
    SingularJacobian { det: f64, x: f64, y: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("zero of the characteristic determinant on the contour near {re} + {im}i; perturb the window")]
    BoundaryZero { re: f64, im: f64 },
    #[error("newton refinement did not converge in cell [{re_min}, {re_max}] x [{im_min}, {im_max}]")]
    NoConvergence {
        re_min: f64,
        re_max: f64,
        im_min: f64,
        im_max: f64,
    },
    #[error("invalid strip: {0}")]
    InvalidStrip(String),
    #[error("lambda = {re} + {im}i is not an eigenvalue (|det| = {det:.3e})")]
    NotAnEigenvalue { re: f64, im: f64, det: f64 },
    #[error("associate-vector system inconsistent (residual {0:.3e})")]
    Inconsistent(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("mesh size h = {h} exceeds the corner radius bound {bound}")]
    MeshSizeTooLarge { h: f64, bound: f64 },
    #[error("invalid mesh parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate mesh: {0}")]
    Degenerate(String),
    #[error("point location failed for the image of boundary vertex {vertex} at ({x}, {y})")]
    PointLocation { vertex: usize, x: f64, y: f64 },
    #[error("ambiguous singular-value gap (largest ratio {ratio:.3e}); pass an explicit threshold")]
    AmbiguousGap { ratio: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("obstruction construction invalid: {0}")]
    Obstruction(String),
    #[error("mesh cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("singular fit ill-conditioned (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },
    #[error("annulus [{r_min}, {r_max}] invalid: {reason}")]
    InvalidAnnulus {
        r_min: f64,
        r_max: f64,
        reason: &'static str,
    },
    #[error("missing singular fit for corner {0}")]
    MissingFit(usize),
}

/// Top-level error for experiment orchestration.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
