//! File formats and scene sources.

pub mod ethucy;
pub mod maps;
pub mod predictions;
pub mod synthetic;

pub use ethucy::{make_windows, parse_ethucy, write_ethucy, RawAnnotation, SplitConfig, WindowConfig};
pub use maps::{load_navigability_map, save_navigability_map, MapSidecar};
pub use predictions::{read_predictions, write_predictions, PredictionRecord};
pub use synthetic::{generate_synthetic_scene, synthetic_map, MapKind, ScenarioKind, SyntheticScenario};
