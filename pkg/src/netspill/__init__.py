"""netspill: peer effects in firms' import entry through a directed
production network.

The package builds the stable supplier-customer network, assembles the
potential-starter panel, computes lagged peer-share treatments and
second-order-neighbor instruments, absorbs high-dimensional fixed effects,
and runs OLS/2SLS with cluster-robust inference.  A built-in structural
simulator with controllable instrument-validity regimes backs all
quantitative validation.
"""

__version__ = "0.1.0"

from .dgp import (DgpConfig, SyntheticDataset, calibration_preset, gen_network,
                  regime, simulate_panel)
from .estimator import (ClusterSpec, EstimationResult, RankError,
                        first_stage_diagnostics, hansen_j, make_clusters, ols, tsls)
from .hdfe import (ConvergenceError, FactorSpec, absorbed_dof, demean, encode,
                   singleton_mask)
from .montecarlo import run_monte_carlo, summarize_recovery
from .network import (EdgePanel, ProductionNetwork, StableReport, build_edge_panel,
                      read_edge_csv, stable_network)
from .panel import (AttributeTable, MedianSplit, ObservationPanel, StatusPanel,
                    build_rows, median_split, potential_starters, read_attribute_csv,
                    read_status_csv)
from .pipeline import PipelineSettings, estimate_design, group_effects, run_spec
from .report import coefficient_frame, diagnostics_frame, format_ladder
from .treatment import (Design, DesignSpec, build_design, category_shares,
                        instrument_share, peer_share, spatial_props)

__all__ = [name for name in dir() if not name.startswith("_")]
