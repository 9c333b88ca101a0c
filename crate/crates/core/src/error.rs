use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The user sits on (or too close to) an antenna element.
    #[error("singularity: {0}")]
    Singularity(String),

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    /// All received powers are zero (user in the array plane).
    #[error("degenerate user {user}: no received power")]
    DegenerateUser { user: usize },

    #[error("degenerate channel for user {user}: zero norm")]
    DegenerateChannel { user: usize },

    /// The interference Gram matrix is numerically singular.
    #[error("singular interference for user {user}: condition number {condition:.3e}")]
    SingularInterference { user: usize, condition: f64 },

    /// The target channel lies in the span of the interferers.
    #[error("user {user} is not servable: residual power after projection is zero")]
    UnservableUser { user: usize },

    /// Too few antennas in the visibility region to null every interferer.
    #[error("insufficient aperture for user {user}: {antennas} antennas for {users} users")]
    InsufficientAperture {
        user: usize,
        antennas: usize,
        users: usize,
    },

    #[error("search failure: {0}")]
    SearchFailure(String),

    #[error("config parse error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

impl Error {
    /// Stable short name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Singularity(_) => "singularity",
            Error::UnsupportedConfiguration(_) => "unsupported_configuration",
            Error::DegenerateUser { .. } => "degenerate_user",
            Error::DegenerateChannel { .. } => "degenerate_channel",
            Error::SingularInterference { .. } => "singular_interference",
            Error::UnservableUser { .. } => "unservable_user",
            Error::InsufficientAperture { .. } => "insufficient_aperture",
            Error::SearchFailure(_) => "search_failure",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}
