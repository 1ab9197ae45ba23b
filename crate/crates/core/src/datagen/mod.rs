//! Synthetic multi-domain classification data and federated partitioning.
//!
//! All domains share one set of class means; a domain differs only by an
//! orthogonal rotation and a shift, so the label space is common while the
//! input distribution moves with `discrepancy_level`.

mod csv_io;
mod domain;
mod federation;
mod sets;

pub use csv_io::{load_csv, write_csv};
pub use domain::{make_domain, make_subspace_domain, AffineTransform, DomainSpec, Geometry};
pub use federation::{build_federation, DatasetConfig, FederatedDataset, FederationMode, ServerSource};
pub use sets::{dirichlet_partition, sample_domain, split_by_class, LabeledSet, UnlabeledSet};
