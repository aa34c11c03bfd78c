//! Configuration, persistence, image I/O and the end-to-end flows behind the
//! command line tool.

pub mod bench;
pub mod config;
pub mod flows;
pub mod image;
pub mod inspect;
pub mod model_file;

pub use bench::{bench, compare_throughput, BenchReport, MultiplyCounts, StageTimes, Throughput};
pub use config::RunConfig;
pub use flows::{
    build_coder, classify_pipeline, encode_image, encode_map, thread_pool, train_dict, train_on,
    ClassifyReport, Encoded, TrainOutcome,
};
pub use inspect::{inspect, ModelStats};
pub use model_file::{Classifier, Container, ModelFile};
