//! Domain-decomposition solver for PDEs with random coefficients.
//!
//! The offline phase assembles affine-parametric subdomain operators, builds
//! separated (sum-of-products) representations of the interface Schur system
//! by a greedy variable-separation method, and prepares interior recovery
//! data. The online phase then evaluates interface and interior solutions per
//! parameter sample at a small fraction of the cost of a monolithic solve.

pub mod coeffspace;
pub mod driver;
pub mod experiments;
pub mod fem;
pub mod linalg;
pub mod metrics;
pub mod partition;
pub mod randomfield;
pub mod recovery;
pub mod schur;
pub mod vscore;
