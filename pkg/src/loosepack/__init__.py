"""Online-sprinkling simulator for packing edge-disjoint loose Hamilton
cycles in binomial random k-uniform hypergraphs, with an exact coupling
engine and verifiers for the properties the construction relies on."""

from .engine import (
    CandidateSet,
    IncrementalMassTracker,
    QueryLedger,
    QueryRecord,
    SeedTree,
    SprinkleEngine,
    SubRng,
    UniformSource,
    coupled_query,
    final_embedding_check,
    replay_mass,
    run_trials,
    sample_colored,
)
from .hypergraph import (
    Hypergraph,
    LooseCycle,
    LoosePath,
    ValidationResult,
    as_ktuple,
    collision_report,
    tuple_rank,
    tuple_unrank,
    validate_loose_cycle,
    validate_loose_path,
)
from .packer import (
    Params,
    ParamError,
    PackResult,
    RoundOutcome,
    audit_params,
    close_round,
    derive_params,
    pack,
    run_round,
    split_regime,
)
from .solver import (
    AuxInstance,
    SolverResult,
    brute_force_hc,
    find_constrained_hc,
    make_instance,
)
from .verifier import (
    VerificationReport,
    build_report,
    mcdiarmid_bound,
    verify_embedding,
    verify_mass,
    verify_packing,
)
from .experiment import ExperimentConfig, ExperimentSummary, emit, run_experiment

__version__ = "0.1.0"
