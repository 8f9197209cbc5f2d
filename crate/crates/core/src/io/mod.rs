//! Bundles on disk, raw citation ingestion and synthetic graphs.

mod bundle;
mod convert;
mod synth;

pub use bundle::{
    load_bundle, load_bundle_full, save_bundle, save_bundle_with, Bundle, BundleMeta, FeatureFormat, SplitTag,
    BUNDLE_FORMAT_VERSION,
};
pub use convert::{convert_citation_raw, convert_linqs, write_converted, ConvertOptions, Converted, RawCitationFiles};
pub use synth::{synth_generate, SynthConfig};
