use serde::{Deserialize, Serialize};

use super::InferError;

/// Prompt size in budget units: characters / 4, rounded up.
pub fn cost(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shot {
    pub input: String,
    pub output: String,
}

impl Shot {
    pub fn new(input: impl Into<String>, output: impl Into<String>) -> Self {
        Shot { input: input.into(), output: output.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotPrompt {
    pub instruction: String,
    pub shots: Vec<Shot>,
    pub query: String,
}

impl FewShotPrompt {
    pub fn zero_shot(query: impl Into<String>) -> Self {
        FewShotPrompt { instruction: String::new(), shots: Vec::new(), query: query.into() }
    }

    /// Instruction (if any), one line per shot (input then output), then
    /// the query, separated by newlines.
    pub fn render(&self) -> String {
        let mut lines: Vec<String> = Vec::with_capacity(self.shots.len() + 2);
        if !self.instruction.is_empty() {
            lines.push(self.instruction.clone());
        }
        lines.extend(self.shots.iter().map(|s| format!("{}{}", s.input, s.output)));
        lines.push(self.query.clone());
        lines.join("\n")
    }

    pub fn cost(&self) -> usize {
        cost(&self.render())
    }
}

/// Keeps as many of the newest shots as fit in `budget`, in their original
/// order. The query is never shortened.
pub fn assemble_fewshot(
    instruction: &str,
    shots: &[Shot],
    query: &str,
    budget: usize,
) -> Result<FewShotPrompt, InferError> {
    let mut prompt = FewShotPrompt { instruction: instruction.to_string(), shots: Vec::new(), query: query.to_string() };
    let bare = prompt.cost();
    if bare > budget {
        return Err(InferError::QueryOverBudget { cost: bare, budget });
    }
    for start in 0..=shots.len() {
        prompt.shots = shots[start..].to_vec();
        if prompt.cost() <= budget {
            break;
        }
    }
    Ok(prompt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shots(n: usize) -> Vec<Shot> {
        (0..n).map(|i| Shot::new(format!("in{i}-"), format!("out{i}"))).collect()
    }

    #[test]
    fn everything_fits() {
        let p = assemble_fewshot("inst", &shots(3), "query", 1000).unwrap();
        assert_eq!(p.shots, shots(3));
        assert_eq!(p.render(), "inst\nin0-out0\nin1-out1\nin2-out2\nquery");
    }

    #[test]
    fn drops_oldest_first() {
        // "inst\n" + k * "inN-outN\n" + "query" = 10 + 9k characters.
        let all = shots(3);
        for budget in 3..=12usize {
            let expected = (0..=3usize).rev().find(|k| (10 + 9 * k).div_ceil(4) <= budget).unwrap();
            let p = assemble_fewshot("inst", &all, "query", budget).unwrap();
            assert_eq!(p.shots, &all[3 - expected..], "budget {budget}");
            assert_eq!(p.query, "query");
        }
    }

    #[test]
    fn zero_shot_and_over_budget_query() {
        let p = assemble_fewshot("", &[], "q", 1).unwrap();
        assert_eq!(p.render(), "q");
        assert!(matches!(
            assemble_fewshot("", &[], &"x".repeat(9), 2),
            Err(InferError::QueryOverBudget { cost: 3, budget: 2 })
        ));
    }
}
