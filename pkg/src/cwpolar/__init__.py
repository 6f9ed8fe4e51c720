"""Constant-weight codes on periodic finite-state Markov processes.

The package builds weight-constrained input processes, runs evidence-matrix
successive-cancellation passes over them, measures per-index channel
parameters exactly or by Monte Carlo, checks the polarization inequalities
against exhaustive enumeration, and closes the loop with shaped encoding,
decoding, and error-rate simulation.
"""

from .analysis import (CheckReport, TableCache, boundary_bound_check,
                       entropy_rate_estimate, martingale_check, mixing_check,
                       parameter_relations_check, polarization_fractions,
                       transform_inequality_check, triple_entropy_check)
from .chains import (ROOT, WeightConstraint, build_condensed_chain,
                     build_mod_chain, build_prefix_chain, build_window_chain,
                     enumerate_support, final_state_set)
from .coding import (CodeSpec, SimulationResult, admissible_weight,
                     construct_code, construct_code_at_rate, decode, encode,
                     load_code, save_code, simulate_fer, wilson_interval)
from .errors import DomainError
from .exact import BlockTables
from .params import (Conditioning, ConditionalTable, IndexProfile,
                     event_decomposition_check, exact_index_table,
                     exact_profile, hzk_from_table, mc_profile,
                     write_profile_csv)
from .process import (BoundarySpec, FimProcess, MixingConstants,
                      PhaseStructure, StationaryDistribution, attach_channel,
                      boundary_pairs, channel_bec, channel_bsc,
                      channel_constant, channel_noiseless, detect_phases,
                      load_chain, make_boundary, mixing_certificate,
                      mixing_constant, min_triplet_probability, phase_class,
                      sample_path, sample_paths, save_chain,
                      stationary_distribution, validate_process)
from .sctrellis import (BlockCondition, EvidenceMatrix, ScPass,
                        combine_minus, combine_plus, leaf_evidence,
                        matmul_count, sc_conditional, sc_decode,
                        sequence_probability)
from .transform import (PolarIndexing, bit_reversal_permutation,
                        polar_transform, transform_matrix)

__version__ = "0.1.0"
