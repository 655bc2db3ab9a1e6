//! Crate-wide error type.
//!
//! Every variant carries a stable machine-readable name (see [`Error::name`])
//! which the CLI prints on failure.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Error {
    #[error("NonPrimitiveRay: ray #{index} {ray:?} has entry gcd != 1")]
    NonPrimitiveRay { index: usize, ray: Vec<i64> },
    #[error("DuplicateRay: rays #{first} and #{second} are equal")]
    DuplicateRay { first: usize, second: usize },
    #[error("NonSmoothCone: cone {cone:?} has |det| = {det} (expected 1)")]
    NonSmoothCone { cone: Vec<usize>, det: String },
    #[error("DanglingFacet: facet {facet:?} belongs to {count} maximal cones (expected 2)")]
    DanglingFacet { facet: Vec<usize>, count: usize },
    #[error("DisconnectedFan: maximal cones do not form a connected adjacency graph")]
    DisconnectedFan,
    #[error("RayNotInCone: ray #{ray} is not a ray of cone #{cone}")]
    RayNotInCone { ray: usize, cone: usize },
    #[error("NotAdjacent: maximal cones #{a} and #{b} do not share a facet")]
    NotAdjacent { a: usize, b: usize },
    #[error("GammaNotNeighbor: cone #{gamma} is not adjacent to cone #{sigma}")]
    GammaNotNeighbor { sigma: usize, gamma: usize },
    #[error("NotProjective: the nef cone has dimension below the Picard rank")]
    NotProjective,
    #[error("NotEffective: class {class:?} pairs negatively with a nef generator")]
    NotEffective { class: Vec<i64> },
    #[error("ZeroClass: the zero curve class is not allowed here")]
    ZeroClass,
    #[error("MismatchedFan: operands belong to fans with different ray counts ({left} vs {right})")]
    MismatchedFan { left: usize, right: usize },
    #[error("DegenerateWeights: a specialized weight vanished where an inverse is required")]
    DegenerateWeights,
    #[error("WeightExhaustion: {attempts} weight samples in a row were degenerate")]
    WeightExhaustion { attempts: u32 },
    #[error("NegativeEdgeDegree: edge degree {degree} of the push-forward bundle is negative")]
    NegativeEdgeDegree { degree: i64 },
    #[error("MarkOutOfRange: mark {mark} exceeds the marking count {m}")]
    MarkOutOfRange { mark: usize, m: usize },
    #[error("SyntaxError at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("UnknownSymbol at byte {pos}: `{name}`")]
    UnknownSymbol { pos: usize, name: String },
    #[error("MarkIndexOutOfRange at byte {pos}: ev index {index} exceeds m = {m}")]
    MarkIndexOutOfRange { pos: usize, index: usize, m: usize },
    #[error("InhomogeneousSum at byte {pos}: summands have different codimension")]
    InhomogeneousSum { pos: usize },
    #[error("MultiplePsi at byte {pos}: more than one Psi factor in a product term")]
    MultiplePsi { pos: usize },
    #[error("ZeroCohomClass: the zero polynomial has no codimension")]
    ZeroCohomClass,
    #[error("SymbolKindMismatch at byte {pos}: `{name}` is a {found}, expected {expected}")]
    SymbolKindMismatch {
        pos: usize,
        name: String,
        found: &'static str,
        expected: &'static str,
    },
    #[error("VerifyMismatch: independent seeds produced different values ({a} vs {b})")]
    VerifyMismatch { a: String, b: String },
    #[error("InvalidInput: {0}")]
    InvalidInput(String),
    #[error("IoError: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable name of the error kind.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonPrimitiveRay { .. } => "NonPrimitiveRay",
            Error::DuplicateRay { .. } => "DuplicateRay",
            Error::NonSmoothCone { .. } => "NonSmoothCone",
            Error::DanglingFacet { .. } => "DanglingFacet",
            Error::DisconnectedFan => "DisconnectedFan",
            Error::RayNotInCone { .. } => "RayNotInCone",
            Error::NotAdjacent { .. } => "NotAdjacent",
            Error::GammaNotNeighbor { .. } => "GammaNotNeighbor",
            Error::NotProjective => "NotProjective",
            Error::NotEffective { .. } => "NotEffective",
            Error::ZeroClass => "ZeroClass",
            Error::MismatchedFan { .. } => "MismatchedFan",
            Error::DegenerateWeights => "DegenerateWeights",
            Error::WeightExhaustion { .. } => "WeightExhaustion",
            Error::NegativeEdgeDegree { .. } => "NegativeEdgeDegree",
            Error::MarkOutOfRange { .. } => "MarkOutOfRange",
            Error::Syntax { .. } => "SyntaxError",
            Error::UnknownSymbol { .. } => "UnknownSymbol",
            Error::MarkIndexOutOfRange { .. } => "MarkIndexOutOfRange",
            Error::InhomogeneousSum { .. } => "InhomogeneousSum",
            Error::MultiplePsi { .. } => "MultiplePsi",
            Error::ZeroCohomClass => "ZeroCohomClass",
            Error::SymbolKindMismatch { .. } => "SymbolKindMismatch",
            Error::VerifyMismatch { .. } => "VerifyMismatch",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Io(_) => "IoError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
