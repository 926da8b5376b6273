use super::{SequenceModel, Sentence, TokenId, EOS};
use crate::error::{Error, Result};

/// Default cap on the number of prefix expansions for exhaustive procedures.
pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

/// Lists every target with non-zero probability, most probable first, ties in
/// lexicographic id order.
///
/// Each call to `next_distribution` counts as one expansion; exceeding
/// `node_budget` aborts with [`Error::SupportTooLarge`].
pub fn enumerate_support<M: SequenceModel + ?Sized>(
    model: &M,
    source: &Sentence,
    node_budget: u64,
) -> Result<Vec<(Sentence, f64)>> {
    // Log masses are accumulated exactly as the mode search scores prefixes,
    // so sentences it considers tied also tie here.
    let mut support = Vec::new();
    let mut stack: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    let mut expanded = 0u64;
    while let Some((prefix, log_mass)) = stack.pop() {
        if expanded == node_budget {
            return Err(Error::SupportTooLarge { budget: node_budget });
        }
        expanded += 1;
        let dist = model.next_distribution(source, &prefix)?;
        for (tok, &p) in dist.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            if tok as TokenId == EOS {
                support.push((Sentence::from(prefix.as_slice()), log_mass + p.ln()));
            } else {
                let mut next = prefix.clone();
                next.push(tok as TokenId);
                stack.push((next, log_mass + p.ln()));
            }
        }
    }
    support.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let support = support.into_iter().map(|(s, lp)| (s, lp.exp())).collect();
    Ok(support)
}
