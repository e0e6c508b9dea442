//! The n-step chained operator-mutation walk.
//!
//! Each step picks an occurrence uniformly among those with a nonempty
//! candidate set, picks a replacement uniformly from the candidates, and
//! the mutant becomes the base for the next step.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::smtlib::{DocumentError, FormulaDocument};
use crate::typing::{SignatureTable, TableError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationEvent {
    /// 1-based step index within a walk.
    pub step: usize,
    /// Occurrence id within the pre-mutation document.
    pub occurrence_id: usize,
    pub old_operator: String,
    pub new_operator: String,
    /// Reproducibility token of the choice source before this step.
    pub rng_state_digest: String,
}

#[derive(Debug, Clone)]
pub struct MutantChain {
    pub seed_path: String,
    pub events: Vec<MutationEvent>,
    pub final_text: String,
}

#[derive(Debug, Error)]
pub enum MutateError {
    #[error("no occurrence with a nonempty candidate set")]
    NoMutableOccurrence,
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error("scripted choice exhausted at step {0}")]
    ScriptExhausted(usize),
    #[error("forced substitution {occurrence_id} -> {operator} is not a legal candidate")]
    IllegalForcedChoice {
        occurrence_id: usize,
        operator: String,
    },
}

/// Source of the two per-step draws. The random implementation realizes the
/// uniform `<-R` draws; the scripted one replays fixed choices.
pub trait ChoiceSource {
    /// Pick an index into `viable` (occurrence ids with nonempty candidates).
    fn pick_occurrence(&mut self, viable: &[usize]) -> Result<usize, MutateError>;
    /// Pick an index into `candidates`.
    fn pick_candidate(&mut self, candidates: &[String]) -> Result<usize, MutateError>;
    /// Opaque reproducibility token for the current state.
    fn state_digest(&self) -> String;
}

/// Seedable uniform randomness backed by ChaCha8.
pub struct RandomChoices {
    rng: ChaCha8Rng,
    seed: u64,
}

impl RandomChoices {
    pub fn from_seed(seed: u64) -> Self {
        RandomChoices {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }

    pub fn rng(&mut self) -> &mut impl RngCore {
        &mut self.rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

impl ChoiceSource for RandomChoices {
    fn pick_occurrence(&mut self, viable: &[usize]) -> Result<usize, MutateError> {
        Ok(self.rng.gen_range(0..viable.len()))
    }

    fn pick_candidate(&mut self, candidates: &[String]) -> Result<usize, MutateError> {
        Ok(self.rng.gen_range(0..candidates.len()))
    }

    fn state_digest(&self) -> String {
        format!("chacha8:{}:{}", self.seed, self.rng.get_word_pos())
    }
}

/// Replays a fixed list of (occurrence id, operator) substitutions.
pub struct ScriptedChoices {
    script: Vec<(usize, String)>,
    cursor: usize,
}

impl ScriptedChoices {
    pub fn new(script: Vec<(usize, String)>) -> Self {
        ScriptedChoices { script, cursor: 0 }
    }

    fn current(&self) -> Result<&(usize, String), MutateError> {
        self.script
            .get(self.cursor)
            .ok_or(MutateError::ScriptExhausted(self.cursor + 1))
    }
}

impl ChoiceSource for ScriptedChoices {
    fn pick_occurrence(&mut self, viable: &[usize]) -> Result<usize, MutateError> {
        let (occ, op) = self.current()?.clone();
        viable
            .iter()
            .position(|v| *v == occ)
            .ok_or(MutateError::IllegalForcedChoice {
                occurrence_id: occ,
                operator: op,
            })
    }

    fn pick_candidate(&mut self, candidates: &[String]) -> Result<usize, MutateError> {
        let (occ, op) = self.current()?.clone();
        let pos =
            candidates
                .iter()
                .position(|c| *c == op)
                .ok_or(MutateError::IllegalForcedChoice {
                    occurrence_id: occ,
                    operator: op,
                })?;
        self.cursor += 1;
        Ok(pos)
    }

    fn state_digest(&self) -> String {
        format!("scripted:{}", self.cursor)
    }
}

/// One type-aware mutation step. Deterministic given the choice source.
pub fn type_aware_mutate(
    doc: &FormulaDocument,
    table: &SignatureTable,
    choices: &mut dyn ChoiceSource,
    step: usize,
) -> Result<(FormulaDocument, MutationEvent), MutateError> {
    let mut viable: Vec<usize> = Vec::new();
    let mut candidate_sets: Vec<Vec<String>> = Vec::new();
    for occ in doc.occurrences() {
        let cands = table.candidates_for_occurrence(doc, occ)?;
        if !cands.is_empty() {
            viable.push(occ.id);
            candidate_sets.push(cands.into_iter().collect());
        }
    }
    if viable.is_empty() {
        return Err(MutateError::NoMutableOccurrence);
    }
    let digest = choices.state_digest();
    let vix = choices.pick_occurrence(&viable)?;
    let occurrence_id = viable[vix];
    let candidates = &candidate_sets[vix];
    let cix = choices.pick_candidate(candidates)?;
    let new_operator = candidates[cix].clone();
    let old_operator = doc.occurrence(occurrence_id).unwrap().operator.clone();
    let mutant = doc.substitute(occurrence_id, &new_operator)?;
    Ok((
        mutant,
        MutationEvent {
            step,
            occurrence_id,
            old_operator,
            new_operator,
            rng_state_digest: digest,
        },
    ))
}

/// Outcome of one sink invocation.
pub type SinkResult = Result<(), String>;

/// A completed (or aborted) walk. On sink failure the partial chain is
/// preserved and `aborted` carries the failure message.
#[derive(Debug, Clone)]
pub struct WalkResult {
    pub chain: MutantChain,
    pub aborted: Option<String>,
}

/// Apply `n` chained mutations, invoking `sink` after each step. Stops early
/// on `NoMutableOccurrence`; a sink failure aborts the chain but preserves
/// the events applied so far.
pub fn fuzz_walk(
    seed_path: &str,
    seed: &FormulaDocument,
    n: usize,
    table: &SignatureTable,
    choices: &mut dyn ChoiceSource,
    mut sink: impl FnMut(usize, &FormulaDocument, &MutationEvent) -> SinkResult,
) -> Result<WalkResult, MutateError> {
    assert!(n >= 1, "walk length must be at least 1");
    let mut chain = MutantChain {
        seed_path: seed_path.to_string(),
        events: Vec::new(),
        final_text: seed.source().to_string(),
    };
    let mut current = seed.clone();
    for step in 1..=n {
        let (mutant, event) = match type_aware_mutate(&current, table, choices, step) {
            Ok(ok) => ok,
            Err(MutateError::NoMutableOccurrence) => break,
            Err(e) => return Err(e),
        };
        chain.final_text = mutant.source().to_string();
        let sink_result = sink(step, &mutant, &event);
        chain.events.push(event);
        if let Err(msg) = sink_result {
            return Ok(WalkResult {
                chain,
                aborted: Some(msg),
            });
        }
        current = mutant;
    }
    Ok(WalkResult {
        chain,
        aborted: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str, table: &SignatureTable) -> FormulaDocument {
        FormulaDocument::parse(src, &table.operator_names()).unwrap()
    }

    const FIG1_SEED: &str = "(assert (forall ((a Int)) \n        (exists ((b Int)) \n        (distinct (* 2 b) a))))\n(check-sat)\n";

    #[test]
    fn forced_distinct_to_equals() {
        let table = SignatureTable::core();
        let doc = parse(FIG1_SEED, &table);
        // occurrences: forall(0), exists(1), distinct(2), *(3)
        let mut choices = ScriptedChoices::new(vec![(2, "=".to_string())]);
        let (mutant, event) = type_aware_mutate(&doc, &table, &mut choices, 1).unwrap();
        assert_eq!(event.old_operator, "distinct");
        assert_eq!(event.new_operator, "=");
        assert_eq!(
            mutant.source(),
            "(assert (forall ((a Int)) \n        (exists ((b Int)) \n        (= (* 2 b) a))))\n(check-sat)\n"
        );
    }

    #[test]
    fn forced_illegal_choice_rejected() {
        let table = SignatureTable::core();
        let doc = parse(FIG1_SEED, &table);
        // `*` may not replace `distinct` (return types differ)
        let mut choices = ScriptedChoices::new(vec![(2, "*".to_string())]);
        assert!(matches!(
            type_aware_mutate(&doc, &table, &mut choices, 1),
            Err(MutateError::IllegalForcedChoice { .. })
        ));
    }

    #[test]
    fn no_mutable_occurrence() {
        let table = SignatureTable::core();
        let doc = parse("(declare-fun p () Bool) (assert p) (check-sat)", &table);
        let mut choices = RandomChoices::from_seed(1);
        assert!(matches!(
            type_aware_mutate(&doc, &table, &mut choices, 1),
            Err(MutateError::NoMutableOccurrence)
        ));
    }

    #[test]
    fn walk_is_deterministic() {
        let table = SignatureTable::core();
        let doc = parse(FIG1_SEED, &table);
        let run = |seed: u64| {
            let mut choices = RandomChoices::from_seed(seed);
            fuzz_walk("fig1.smt2", &doc, 50, &table, &mut choices, |_, _, _| Ok(()))
                .unwrap()
                .chain
        };
        let a = run(7);
        let b = run(7);
        assert_eq!(a.events, b.events);
        assert_eq!(a.final_text, b.final_text);
        let c = run(8);
        assert!(a.events != c.events || a.final_text == c.final_text);
    }

    #[test]
    fn walk_events_are_legal_and_one_token() {
        let table = SignatureTable::core();
        let doc = parse(FIG1_SEED, &table);
        let mut choices = RandomChoices::from_seed(42);
        let mut prev = doc.clone();
        fuzz_walk("fig1.smt2", &doc, 100, &table, &mut choices, |_, m, ev| {
            assert_ne!(ev.old_operator, ev.new_operator);
            let differing = prev
                .tokens()
                .iter()
                .zip(m.tokens())
                .filter(|(a, b)| a.text != b.text)
                .count();
            assert_eq!(differing, 1, "step {} changed {differing} tokens", ev.step);
            prev = m.clone();
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn sink_failure_aborts_with_partial_chain() {
        let table = SignatureTable::core();
        let doc = parse(FIG1_SEED, &table);
        let mut choices = RandomChoices::from_seed(3);
        let mut calls = 0;
        let result = fuzz_walk("fig1.smt2", &doc, 10, &table, &mut choices, |step, _, _| {
            calls += 1;
            if step == 3 {
                Err("disk full".to_string())
            } else {
                Ok(())
            }
        })
        .unwrap();
        assert_eq!(result.aborted.as_deref(), Some("disk full"));
        assert_eq!(result.chain.events.len(), 3);
        assert_eq!(calls, 3);
    }

    #[test]
    #[should_panic(expected = "walk length")]
    fn zero_length_walk_rejected() {
        let table = SignatureTable::core();
        let doc = parse(FIG1_SEED, &table);
        let mut choices = RandomChoices::from_seed(1);
        let _ = fuzz_walk("x", &doc, 0, &table, &mut choices, |_, _, _| Ok(()));
    }
}
