//! Exact tabular checks of the hierarchical value decomposition and the
//! performance-difference bound.

pub mod instances;
pub mod mdp;
pub mod theory;

pub use instances::{arbitrary_instance, assumption_instance, TheoryInstance};
pub use mdp::{
    flat_value, induce_hier_from_flat, joint_value, optimal_flat_policy, FlatPolicy, TabularHierPolicy, TabularMdp,
};
pub use theory::{
    assemble_bound, bound_rhs, run_theory_suite, verify_lemma1, verify_lemma2, verify_theorem1, BoundTerms,
    InstanceReport, InstanceShape, Lemma2Check, TheoremReport, TheorySuite, Tier,
};
