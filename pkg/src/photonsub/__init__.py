"""photonsub: Fock-space workbench for multi-photon-subtracted squeezed
light under loss, Wigner negativity metrics, and a synthetic homodyne
tomography loop (sampling plus iterative maximum-likelihood
reconstruction)."""

__version__ = "0.1.0"

from .fock import (CONVENTION, DensityMatrix, FockDim, KrausChannel,
                   TwoModeState, annihilation_op, apply_channel, creation_op,
                   number_op, partial_trace_idler, quadrature_op,
                   state_fidelity, tensor)
from .stateprep import (LossBudget, MeasuredSqueezing, SqueezeFit, SqueezeParam,
                        antisqueezing_ratio, fit_initial_squeezing, loss_channel,
                        squeezed_vacuum, squeezed_vacuum_leakage, squeezing_ratio)
from .subtraction import (HeraldResult, TapConfig, beamsplitter_op,
                          count_rate_table, herald, heralding_distribution,
                          pnrd_povm)
from .wigner import (NegativityReport, WignerGrid, count_negative_regions,
                     narrowing, narrowing_metrics, negativity_report,
                     parity_origin, subplanck_witness_variance, wigner_eval)
from .homodyne import (MeasurementPlan, QuadratureDataset, load_dataset,
                       marginal_pdf, normalize_dataset, sample_quadratures,
                       save_dataset)
from .tomography import (MleConfig, Reconstruction, binned_projectors,
                         bootstrap_errors, mle_reconstruct, projector)
from .pipeline import (ExperimentConfig, compare_reports, format_compare,
                       load_report, report_bytes, run_pipeline, write_report)
