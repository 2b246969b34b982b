use std::collections::{HashMap, VecDeque};

use super::{Pdfa, StateId};
use crate::simplex::{ClassId, Partitioner};

/// Which congruence [`congruence_partition`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CongruenceMode {
    /// `≡_E`: successors compared only on support symbols.
    Defined,
    /// `≡•_E`: successors compared on every symbol.
    Unconditional,
}

/// Blocks of the structurally reachable states.
///
/// `zero` records the undefined class: in [`CongruenceMode::Defined`] it is
/// present when some reachable state has a symbol outside its support; in
/// [`CongruenceMode::Unconditional`] it is the sink reached by UNDEF
/// transitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatePartition {
    block: Vec<Option<usize>>,
    blocks: usize,
    zero: bool,
}

impl StatePartition {
    pub fn block_of(&self, q: StateId) -> Option<usize> {
        self.block[q]
    }

    /// Number of blocks holding states (the ZERO block excluded).
    pub fn num_blocks(&self) -> usize {
        self.blocks
    }

    pub fn has_zero(&self) -> bool {
        self.zero
    }

    pub fn total_blocks(&self) -> usize {
        self.blocks + usize::from(self.zero)
    }

    pub fn same_block(&self, p: StateId, q: StateId) -> bool {
        self.block[p].is_some() && self.block[p] == self.block[q]
    }

    /// Number of distinct blocks among the states selected by `mask`.
    pub fn blocks_among(&self, mask: &[bool]) -> usize {
        let mut seen = vec![false; self.blocks];
        for (q, &keep) in mask.iter().enumerate() {
            if let (true, Some(b)) = (keep, self.block[q]) {
                seen[b] = true;
            }
        }
        seen.iter().filter(|&&s| s).count()
    }

    /// States grouped by block, in block order.
    pub fn groups(&self) -> Vec<Vec<StateId>> {
        let mut groups = vec![Vec::new(); self.blocks];
        for (q, b) in self.block.iter().enumerate() {
            if let Some(b) = b {
                groups[*b].push(q);
            }
        }
        groups
    }
}

const SINK: usize = usize::MAX;

/// Moore refinement starting from `label(E, π(q))`.
pub fn congruence_partition(a: &Pdfa, e: &Partitioner, mode: CongruenceMode) -> StatePartition {
    let reachable = a.structurally_reachable();
    let states: Vec<StateId> = (0..a.num_states()).filter(|&q| reachable[q]).collect();
    let mut zero = false;
    for &q in &states {
        let d = a.dist(q);
        for s in a.alphabet().symbols() {
            let undefined = match mode {
                CongruenceMode::Defined => !d.in_support(s),
                CongruenceMode::Unconditional => a.next_state(q, s).is_none(),
            };
            zero |= undefined;
        }
    }

    let mut class = vec![SINK; a.num_states()];
    let mut ids: HashMap<ClassId, usize> = HashMap::new();
    for &q in &states {
        let next = ids.len();
        class[q] = *ids.entry(e.label(a.dist(q))).or_insert(next);
    }
    let mut count = ids.len();
    loop {
        let mut sigs: HashMap<(usize, Vec<usize>), usize> = HashMap::new();
        let mut refined = vec![SINK; a.num_states()];
        for &q in &states {
            let d = a.dist(q);
            let succ: Vec<usize> = a
                .alphabet()
                .symbols()
                .filter(|&s| mode == CongruenceMode::Unconditional || d.in_support(s))
                .map(|s| a.next_state(q, s).map_or(SINK, |t| class[t]))
                .collect();
            let next = sigs.len();
            refined[q] = *sigs.entry((class[q], succ)).or_insert(next);
        }
        class = refined;
        // refinement only splits, so an unchanged count means a stable partition
        if sigs.len() == count {
            break;
        }
        count = sigs.len();
    }

    // renumber by first occurrence so block ids do not depend on hashing
    let mut renumber = HashMap::new();
    let mut block = vec![None; a.num_states()];
    for &q in &states {
        let next = renumber.len();
        block[q] = Some(*renumber.entry(class[q]).or_insert(next));
    }
    StatePartition { block, blocks: renumber.len(), zero }
}

/// The `≡_E`-minimal PDFA: one state per block reachable through support
/// transitions, represented by its shortlex-least access string.
pub fn quotient(a: &Pdfa, e: &Partitioner) -> Pdfa {
    let partition = congruence_partition(a, e, CongruenceMode::Defined);
    let mut index: Vec<Option<usize>> = vec![None; partition.num_blocks()];
    let mut reps: Vec<StateId> = Vec::new();
    let mut seen = vec![false; a.num_states()];
    let mut queue = VecDeque::from([a.initial()]);
    seen[a.initial()] = true;
    // BFS over states with symbols in ascending order visits shortlex-minimal paths first
    while let Some(q) = queue.pop_front() {
        let b = partition.block_of(q).expect("reachable");
        if index[b].is_none() {
            index[b] = Some(reps.len());
            reps.push(q);
        }
        for s in a.alphabet().symbols() {
            if a.dist(q).in_support(s) {
                let t = a.next_state(q, s).expect("support transition");
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
    }
    let pi = reps.iter().map(|&q| a.dist(q).clone()).collect();
    let tau = reps
        .iter()
        .map(|&q| {
            a.alphabet()
                .symbols()
                .map(|s| {
                    if !a.dist(q).in_support(s) {
                        return None;
                    }
                    let t = a.next_state(q, s).expect("support transition");
                    index[partition.block_of(t).expect("reachable")]
                })
                .collect()
        })
        .collect();
    Pdfa::new(a.alphabet().clone(), 0, pi, tau).expect("quotient is a valid hypothesis")
}
