pub mod cli;
pub mod design;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod shift;
pub mod simulate;
pub mod wls;
