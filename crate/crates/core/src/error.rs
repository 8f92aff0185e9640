use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CmcError>;

#[derive(Debug, Error)]
pub enum CmcError {
    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("not holomorphic at origin (negative-mode magnitude {magnitude:.3e})")]
    NotHolomorphicAtOrigin { magnitude: f64 },

    #[error("evaluation point |lambda| = {modulus} outside the admissible annulus [{inner}, 1]")]
    OutsideEvaluationAnnulus { modulus: f64, inner: f64 },

    #[error("nonreal symbol (max imaginary part {max_imag:.3e})")]
    NonrealSymbol { max_imag: f64 },

    #[error("symbol not positive at {} samples (first {:?})", .indices.len(), .indices.first())]
    SymbolNotPositive { indices: Vec<usize> },

    #[error("indefinite symbol at sample {index} (min eigenvalue {min_eig:.3e})")]
    IndefiniteSymbol { index: usize, min_eig: f64 },

    #[error("truncation insufficient: factorization residual {residual:.3e} at degree {degree}; increase the truncation degree")]
    TruncationInsufficient { residual: f64, degree: usize },

    #[error("pole of the potential at z = {z}, lambda = {lambda}")]
    PoleOfPotential { z: Complex64, lambda: Complex64 },

    #[error("gauge singular at z = {z}, lambda = {lambda}")]
    GaugeSingular { z: Complex64, lambda: Complex64 },

    #[error("integration stalled at log z = {w} (step {step:.3e})")]
    IntegrationStalled { w: Complex64, step: f64 },

    #[error("closing violated: min residual {residual:.3e}")]
    ClosingViolated { residual: f64 },

    #[error("series extraction unstable: jet and fit disagree by {disagreement:.3e}")]
    SeriesExtractionUnstable { disagreement: f64 },

    #[error("no admissible scale found in range (verdict fails at tau = {tau_min})")]
    NoAdmissibleScale { tau_min: f64 },

    #[error("not Delta-unitarizable: {failed} of {total} samples fail")]
    NotDeltaUnitarizable { failed: usize, total: usize },

    #[error("q-symbol degenerate: -bc not positive on {count} samples")]
    QSymbolDegenerate { count: usize },

    #[error("branch obstruction: winding number {winding} of p/q")]
    BranchObstruction { winding: i64 },

    #[error("factorization failed: unitarity residual {residual:.3e}")]
    FactorizationFailed { residual: f64 },

    #[error("frame not unitary enough: su(2) projection residual {residual:.3e}")]
    FrameNotUnitary { residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
