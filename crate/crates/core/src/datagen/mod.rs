//! Synthetic audio-visual classification data and non-IID client partitioning.

pub mod io;
pub mod partition;
pub mod synth;

pub use io::{read_dataset, write_dataset, write_dataset_csv};
pub use partition::{assign_modalities, dirichlet_partition, Modality, Partition};
pub use synth::{generate_dataset, DatasetSpec, MultimodalDataset, Sample};
