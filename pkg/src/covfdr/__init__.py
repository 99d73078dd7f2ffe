"""Combined and separate-class false discovery rate analysis."""

from .core import (
    Case, ClassPartition, DataError, Dataset, FitError, RelevanceFunction, partition_by_class,
    partition_by_mask, validate_dataset,
)
from .density import (
    BinnedCounts, BinSpec, DensityFit, NullEstimate, bin_counts, fit_empirical_null,
    fit_mixture_density, null_density_eval, theoretical_null,
)
from .enrichment import EnrichmentResult, enrichment_fdr_report, enrichment_slope_test
from .fdr import (
    FdrCurve, RejectionSet, bh_reject, bh_reject_pvalues, bonferroni_reject,
    false_discovery_proportion, fdrbar_accuracy, fdrbar_exact_moments, local_fdr_curve, null_pvalues,
)
from .io import AnalysisConfig, adjust_z_local, export_report, load_gene_sets, load_table
from .separate import (
    ClassProbCurve, NullClassProb, SubclassFdrReport, fit_class_prob_curve, null_class_prob_curve,
    null_flatness_diagnostic, relevance_weighted_fdr, subclass_fdr_curve, subclass_tail_fdr,
)
from .simulation import (
    TwoClassOracle, TwoClassSimConfig, replicate_subclass_study, simulate_two_class,
)

__version__ = "0.1.0"
