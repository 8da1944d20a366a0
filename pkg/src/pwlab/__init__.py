"""pwlab: a numerical laboratory for pilot-wave trajectory dynamics.

Wavefunctions evolve by split-step spectral propagation on periodic grids;
configuration points follow the guidance velocity of the evolving field.
The statistics modules measure how ensemble distributions, time averages and
measurement-outcome frequencies line up with the Born weight |psi|^2.
"""

__version__ = "0.1.0"

from .fields import (ComplexField, GridSpec, PolarPair, PotentialSpec, Region,
                     gaussian_packet, load_field, measure_of_region,
                     polar_decompose, quantum_potential, recompose, save_field,
                     uniform_field)
from .propagator import (BranchSuperposition, PropagatorConfig, branch_overlap,
                         evolve_branches, propagate, stationary_eigenfield, step)
from .guidance import (ModifiedGuidance, TrajectoryState, VelocityField,
                       advance_positions, advance_trajectory,
                       build_divergence_free, velocity_from_branches,
                       velocity_from_psi)
from .ensemble import (CoarsePartition, FRatioTrack, HistogramDensity,
                       coarse_grain, distribution_distance, ks_distance,
                       sample_initial, subquantum_entropy, total_variation,
                       track_f_ratio)
from .ergodic import (IndependenceVerdict, IteratedMap, OccupancyAccumulator,
                      SurdLength, accumulate_occupancy, apply_map_sequence,
                      check_rational_independence, torus_flow_exact)
