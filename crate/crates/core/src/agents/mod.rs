//! Agent populations of the three model families.

pub mod cross;
pub mod harras;
pub mod lls;

pub use cross::{CrossAgent, CrossParams, CrossPopulation, WealthExtension};
pub use harras::{HarrasParams, HarrasPopulation, OpinionVariant};
pub use lls::{LlsGroup, LlsParams, LlsPopulation, MemoryScaling, ReturnDenominator};
