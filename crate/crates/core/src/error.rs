use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("hyperedge {edge} has no members")]
    EmptyHyperedge { edge: usize },
    #[error("node id {id} out of range (graph has {num_nodes} nodes)")]
    NodeIdOutOfRange { id: usize, num_nodes: usize },
    #[error("hyperedge id {id} out of range (graph has {num_edges} hyperedges)")]
    HyperedgeIdOutOfRange { id: usize, num_edges: usize },
    #[error("hyperedge {edge} has non-positive weight {weight}")]
    NonPositiveWeight { edge: usize, weight: f64 },
    #[error("expected {expected} hyperedge weights, got {got}")]
    WeightCountMismatch { expected: usize, got: usize },
    #[error("overlap threshold s must be at least 1, got {0}")]
    InvalidS(usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("node {node} has no 1-hop neighbors")]
    NoPositivePool { node: usize },
    #[error("node {node} is connected to every other node")]
    NoNegativePool { node: usize },
    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,
    #[error("no node has both a positive and a negative pool")]
    NoEligibleNodes,
    #[error("text corpus has {got} entries but the hypergraph has {expected} nodes")]
    CorpusMismatch { expected: usize, got: usize },

    #[error("node {node} has an all-zero feature row")]
    ZeroFeatureRow { node: usize },
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite input: {0}")]
    NonFiniteInput(String),
    #[error("backward called without a forward cache")]
    MissingForwardCache,
    #[error("subgraph has no nodes or no hyperedges")]
    EmptySubgraph,

    #[error("row {row} has zero norm")]
    ZeroRow { row: usize },
    #[error("ratio must lie in (0, 100], got {0}")]
    InvalidRatio(f64),
    #[error("center node {node} belongs to no hyperedge")]
    IsolatedCenter { node: usize },

    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("split {split} has no training example of class {class}")]
    DegenerateSplit { split: usize, class: usize },
    #[error("no eligible CNS negative for hyperedge {edge}")]
    NoEligibleNegative { edge: usize },
    #[error("not enough data for evaluation: {0}")]
    InsufficientData(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("malformed file: {0}")]
    Format(String),
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("no runs found under {0}")]
    MissingRuns(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the input data.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteLoss { .. }
                | Error::NonFiniteInput(_)
                | Error::ZeroRow { .. }
                | Error::ZeroVector
                | Error::ZeroFeatureRow { .. }
        )
    }
}
