//! Morality lexicon, mention tagging, the Morality Bank and the scenario banks.

mod lemma;
mod lexicon;
mod morality_bank;
mod scenario;
mod tagging;

pub use lemma::base_forms;
pub use lexicon::{load_lexicon, Lexicon, LexiconEntry};
pub use morality_bank::{
    load_morality_bank, parse_morality_bank, BankLoadReport, MoralityBankSentence,
    MoralityBankSplit,
};
pub use scenario::{
    convert_scenario_dataset, load_scenario_bank, write_scenario_bank, BankName, ScenarioBank,
    ScenarioPair,
};
pub use tagging::{
    insert_mention_tags, match_token, tag_mentions, MoralMention, TaggedMention, MENTION_CLOSE,
    MENTION_OPEN,
};
