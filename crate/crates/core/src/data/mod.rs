//! Tabular ingestion, encoding, synthetic data and experience streams.

mod cache;
mod csv_input;
mod schedule;
mod schema;
mod stream;
mod synth;

pub use cache::{read_dataset_cache, write_dataset_cache, DatasetCache};
pub use csv_input::{load_city_csv, CityDataset, DatasetProfile};
pub use schedule::{generate_schedule, Scenario, ScenarioSchedule};
pub use schema::{
    build_schema, encode_entry, AnomalyLabel, CategoricalAttribute, DatasetSchema, EncodedBatch, EntryTable,
    NumericalAttribute, RawEntry, SegmentLayout,
};
pub use stream::{build_experience_streams, ExperienceStream};
pub use synth::{department_name, synthesize_dataset, value_name, write_csv, DepartmentProfile, SynthParams, SynthSpec};
