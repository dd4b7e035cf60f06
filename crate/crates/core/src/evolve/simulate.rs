use super::{p_of_d, Alphabet, CharacterMatrix, EvolveError, ModelKind, ModelSpec, Rows};
use crate::rng::{derive_seed, stream};
use crate::seq::BitSeq;
use crate::treekit::{NodeId, PhyloTree};
use rand::RngCore;
use rayon::prelude::*;

const SIM_TAG: u64 = 0x5349_4d55_4c41_5445;
const ROOT_KEY: u64 = u64::MAX;

/// States of every node of the simulated tree, indexed by node id.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeStates {
    Cfn(Vec<BitSeq>),
    Jc(Vec<Vec<u8>>),
}

/// Simulates `k` i.i.d. characters on `tree` and returns the leaf matrix in
/// label order.
pub fn simulate(tree: &PhyloTree, model: ModelSpec, k: usize, seed: u64) -> Result<CharacterMatrix, EvolveError> {
    simulate_with_states(tree, model, k, seed).map(|(m, _)| m)
}

/// [`simulate`] that also returns the states of internal nodes.
///
/// The root is the designated root, or the canonical top node for unrooted
/// trees (the models are reversible, so the choice does not change the leaf
/// distribution).  The draw for edge `{a, b}` at site `t` is word `t` of the
/// random stream keyed by that edge, so every value is a pure function of
/// `(seed, edge, site)`.
pub fn simulate_with_states(
    tree: &PhyloTree,
    model: ModelSpec,
    k: usize,
    seed: u64,
) -> Result<(CharacterMatrix, NodeStates), EvolveError> {
    if k == 0 {
        return Err(EvolveError::EmptySequences);
    }
    let seed = derive_seed(seed, SIM_TAG);
    let lay = tree.rooted_layout();
    let n_nodes = tree.n_nodes();
    let edge_key = |a: NodeId, b: NodeId| (a.min(b) * n_nodes + a.max(b)) as u64;
    let edges: Vec<(NodeId, NodeId, f64)> =
        lay.preorder.iter().filter_map(|&c| lay.parent[c].map(|p| (p, c, lay.parent_len[c]))).collect();
    for &(_, _, l) in &edges {
        p_of_d(model, l)?;
    }
    let states = match model.kind {
        ModelKind::Cfn => {
            let masks: Vec<Vec<u64>> = edges
                .par_iter()
                .map(|&(p, c, l)| {
                    let thr = threshold(p_of_d(model, l).unwrap());
                    let mut rng = stream(seed, edge_key(p, c));
                    let mut words = vec![0u64; k.div_ceil(64)];
                    for t in 0..k {
                        if rng.next_u64() < thr {
                            words[t / 64] |= 1 << (t % 64);
                        }
                    }
                    words
                })
                .collect();
            let mut st: Vec<Option<BitSeq>> = vec![None; n_nodes];
            let mut rng = stream(seed, ROOT_KEY);
            let root_words: Vec<u64> = (0..k.div_ceil(64)).map(|_| rng.next_u64()).collect();
            st[lay.root] = Some(BitSeq::from_words(k, root_words));
            for (&(p, c, _), mask) in edges.iter().zip(&masks) {
                let child = st[p].as_ref().expect("pre-order visits parents first").flipped(mask);
                st[c] = Some(child);
            }
            NodeStates::Cfn(st.into_iter().map(|s| s.expect("all nodes reached")).collect())
        }
        ModelKind::Jc => {
            let jumps: Vec<Vec<u8>> = edges
                .par_iter()
                .map(|&(p, c, l)| {
                    let thr1 = threshold(p_of_d(model, l).unwrap());
                    let mut rng = stream(seed, edge_key(p, c));
                    // 0 = stay, 1..=3 = shift by that many states
                    (0..k)
                        .map(|_| {
                            let u = rng.next_u64();
                            if thr1 == 0 {
                                0
                            } else {
                                let j = u / thr1;
                                if j < 3 {
                                    j as u8 + 1
                                } else {
                                    0
                                }
                            }
                        })
                        .collect()
                })
                .collect();
            let mut st: Vec<Option<Vec<u8>>> = vec![None; n_nodes];
            let mut rng = stream(seed, ROOT_KEY);
            st[lay.root] = Some((0..k).map(|_| (rng.next_u64() >> 62) as u8).collect());
            for (&(p, c, _), jump) in edges.iter().zip(&jumps) {
                let parent = st[p].as_ref().expect("pre-order visits parents first");
                st[c] = Some(parent.iter().zip(jump).map(|(&s, &j)| (s + j) % 4).collect());
            }
            NodeStates::Jc(st.into_iter().map(|s| s.expect("all nodes reached")).collect())
        }
    };
    let leaves = tree.leaves();
    let labels: Vec<u32> = (1..=tree.n_leaves() as u32).collect();
    let rows = match &states {
        NodeStates::Cfn(s) => Rows::Cfn(leaves.iter().map(|&x| s[x].clone()).collect()),
        NodeStates::Jc(s) => Rows::Jc(leaves.iter().map(|&x| s[x].clone()).collect()),
    };
    let matrix = CharacterMatrix::new(labels, rows).expect("rows share k");
    Ok((matrix, states))
}

/// `p · 2^64` as an integer threshold on uniform 64-bit draws.
fn threshold(p: f64) -> u64 {
    if p <= 0.0 {
        0
    } else {
        (p * 18_446_744_073_709_551_616.0) as u64
    }
}

/// Purine/pyrimidine reduction: A, G ↦ +1 and C, T ↦ −1.  Under JC with edge
/// length d the class process is CFN with length 2d.
pub fn jc_to_cfn_reduce(matrix: &CharacterMatrix) -> Result<CharacterMatrix, EvolveError> {
    let Rows::Jc(rows) = matrix.rows() else {
        return Err(EvolveError::WrongAlphabet { expected: "JC" });
    };
    let reduced = rows
        .iter()
        .map(|r| {
            let signs: Vec<i8> = r.iter().map(|&s| if s == 0 || s == 2 { 1 } else { -1 }).collect();
            BitSeq::from_signs(&signs)
        })
        .collect();
    let m = CharacterMatrix::new(matrix.labels().to_vec(), Rows::Cfn(reduced)).expect("same shape");
    debug_assert_eq!(m.alphabet(), Alphabet::Cfn);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treekit::newick_parse;

    #[test]
    fn zero_length_edges_copy_the_root() {
        let t = crate::treekit::PhyloTree::from_edges(
            5,
            &[(4, 0, 0.0), (4, 1, 0.0), (4, 3, 0.0), (3, 2, 0.0)],
            &[(0, 1), (1, 2), (2, 3)],
            None,
            crate::treekit::Validation { allow_zero_length: true, allow_multifurcation: true },
        )
        .unwrap();
        let m = simulate(&t, ModelSpec::CFN, 300, 4).unwrap();
        let r0 = m.cfn_row(0).unwrap();
        assert!((1..3).all(|i| m.cfn_row(i).unwrap() == r0));
    }

    #[test]
    fn single_edge_flip_frequency() {
        let t = newick_parse("(1:0.05,2:0.05);").unwrap();
        let k = 1_000_000;
        let (_, st) = simulate_with_states(&t, ModelSpec::CFN, k, 17).unwrap();
        let NodeStates::Cfn(st) = st else { unreachable!() };
        let root = t.root().unwrap();
        let leaf = t.leaf(1).unwrap();
        let flips = (k as i64 - st[root].dot(&st[leaf])) / 2;
        let p = p_of_d(ModelSpec::CFN, 0.05).unwrap();
        let sd = (p * (1.0 - p) / k as f64).sqrt();
        assert!((flips as f64 / k as f64 - p).abs() < 3.0 * sd);
    }

    #[test]
    fn leaf_correlation_matches_exponential() {
        let t = newick_parse("((1:0.1,2:0.07):0.05,3:0.1,4:0.12);").unwrap();
        let k = 200_000;
        let m = simulate(&t, ModelSpec::CFN, k, 99).unwrap();
        let d = t.path_distance(t.leaf(1).unwrap(), t.leaf(4).unwrap()).unwrap();
        let corr = m.cfn_row(0).unwrap().dot(m.cfn_row(3).unwrap()) as f64 / k as f64;
        assert!((corr - (-2.0 * d).exp()).abs() < 3.0 / (k as f64).sqrt());
    }

    #[test]
    fn jc_class_flip_frequency_and_reduction() {
        let t = newick_parse("(1:0.025,2:0.025);").unwrap();
        let k = 1_000_000;
        let m = simulate(&t, ModelSpec::JC, k, 5).unwrap();
        let r = jc_to_cfn_reduce(&m).unwrap();
        // d(1,2) = 0.05: class flip probability (1 − e^{−0.2})/2
        let p = (1.0 - (-4.0f64 * 0.05).exp()) / 2.0;
        assert!((p - 0.090_634_6).abs() < 1e-7);
        let flips = (k as i64 - r.cfn_row(0).unwrap().dot(r.cfn_row(1).unwrap())) / 2;
        let sd = (p * (1.0 - p) / k as f64).sqrt();
        assert!((flips as f64 / k as f64 - p).abs() < 3.0 * sd);
        assert!(jc_to_cfn_reduce(&r).is_err());
    }

    #[test]
    fn all_a_reduces_to_all_plus() {
        let m = CharacterMatrix::new(vec![1, 2], Rows::Jc(vec![vec![0; 10], vec![0; 10]])).unwrap();
        let r = jc_to_cfn_reduce(&m).unwrap();
        assert_eq!(r.cfn_row(0).unwrap(), &BitSeq::plus_ones(10));
    }

    #[test]
    fn simulation_is_reproducible() {
        let t = newick_parse("((1:0.1,2:0.07):0.05,3:0.1,4:0.12);").unwrap();
        for model in [ModelSpec::CFN, ModelSpec::JC] {
            assert_eq!(simulate(&t, model, 1000, 3).unwrap(), simulate(&t, model, 1000, 3).unwrap());
            assert_ne!(simulate(&t, model, 1000, 3).unwrap(), simulate(&t, model, 1000, 4).unwrap());
        }
    }
}
