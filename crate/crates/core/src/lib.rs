pub mod audio;
pub mod cohort;
pub mod embedding;
pub mod evaluation;
pub mod features;
pub mod framed;
pub mod learner;
pub mod segment;
pub mod synth;
pub mod table;
