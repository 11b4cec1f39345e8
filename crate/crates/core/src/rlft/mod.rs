//! Selector-driven fine-tuning: generate completion pairs, label them with
//! the selector(s), then run DPO against the frozen starting policy.

mod dpo;
mod generate;
mod label;

pub use dpo::{dpo_batch_loss, dpo_grad, dpo_loss, dpo_margin, dpo_train, DpoConfig};
pub use generate::{build_generated_dataset, GeneratedPreferenceRecord, GENERATION_TEMPERATURE};
pub use label::{enumerate_pairs, label_pair_majority, label_pair_single, Comparator, SelectorComparator};

