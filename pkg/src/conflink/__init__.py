"""Conformal link prediction with FDR control and uniform FDP bounds."""

from .bounds import (BoundCurve, LambdaEstimate, bound_curve, lambda_closed_form,
                     lambda_polya_mc, polya_sup_deviation, polya_urn_draw)
from .conformal import (CalibrationRule, PValueFamily, RejectionSet, bh_procedure,
                        calibration_size, conformal_pvalues, fdp_tdp, rejection_path,
                        sample_calibration)
from .graph import (CompleteGraphData, EdgePartition, Observation, SamplingMatrix,
                    generate_sbm, observe, partition_edges, sample_omega)
from .harness import (AggregateReport, ExperimentConfig, ReplicationRecord, run_experiment,
                      run_pipeline, run_replication)
from .scoring import (ScorerSpec, ScoreTable, TrainMask, build_train_mask, khop_features,
                      score_common_neighbors, score_erm_logistic)

__version__ = "0.1.0"
