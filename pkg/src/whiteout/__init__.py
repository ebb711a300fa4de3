"""
Whitening formulation of the fixed-X knockoff filter for multivariate
Gaussian estimates, with universal finite-sample power ceilings and Monte
Carlo bound simulators.
"""

from .covmodel import (CovarianceMatrix, EigenDecomposition, ScenarioSpec,
                       eigendecompose, leading_eigvec_cdf, make_design_gram,
                       make_equicorrelated, make_factor, make_mcc, substream)
from .whitening import (CarvedNoise, LogOddsProfile, WhitenedSplit,
                        WhiteningMatrix, carve_noise, log_odds,
                        make_equi_delta, validate_delta, whiten_carved,
                        whiten_known_sigma)
from .seqstep import (BinaryPValueSeq, SeqStepResult, fdp_hat_path,
                      knockoff_plus_threshold, rejection_count_identity,
                      run_seqstep)
from .filtering import (FilterResult, OrderingDecision, PseudoDesign,
                        WStatistics, binary_pvalues, build_noise_pseudo_design,
                        build_pseudo_design, lasso_entry_path,
                        lasso_signed_max_ordering, oracle_ordering,
                        run_whitening_filter, wplus_ordering)
from .standard_knockoffs import (KnockoffPair, W_to_whitening,
                                 construct_knockoff_matrix, couple_omega,
                                 whitening_to_W, wstar)
from .bounds import (BoundConstants, BoundReport, DeltaLowerBounds,
                     bound_constants, c3_constant, delta_diagnostic,
                     delta_order_lower_bounds, mcc_closed_form, snr_threshold,
                     starred_constants, theorem_main_bound,
                     theorem_random_bound)
from .simulator import (MonteCarloConfig, PowerSummary, T3Result,
                        bh_procedure, bonferroni, fdr_tpr_score,
                        ols_t_pvalues, run_scenario,
                        simulate_eta_walk_bound,
                        simulate_knockoff_star_rejections, t3_knockoff_star)
from .estimator import WhiteningKnockoffSelector

__version__ = "0.1.0"
