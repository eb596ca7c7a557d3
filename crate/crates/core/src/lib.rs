pub mod causal;
pub mod discriminator;
pub mod evaluation;
pub mod generator;
pub mod learners;
pub mod llm;
pub mod optimizer;
pub mod stats;
pub mod table;
pub mod trainer;
