//! Persistence: the tensor container, model weights, templates, dataset
//! directories, OBJ meshes and CSV reports.

pub mod container;
pub mod dataset;
pub mod obj;
pub mod report;
pub mod template;
pub mod weights;

pub use container::{Container, DType, Tensor, TensorData, FORMAT_VERSION, MAGIC};
pub use dataset::{
    load_pairs, read_manifest, sample_path, write_dataset, DatasetManifest, MANIFEST_FILE,
};
pub use obj::{export_obj, write_obj};
pub use report::{write_bench_csv, write_metrics_csv, write_sweep_csv};
pub use template::{load_template, save_template};
pub use weights::{load_mgfp, load_model, load_s2m, save_mgfp, save_s2m, StoredModel};
