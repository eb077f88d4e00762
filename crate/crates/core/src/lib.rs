pub mod conventions;
pub mod evalharness;
pub mod pruner;
pub mod pyparse;
pub mod scoring;
pub mod tokenprob;
