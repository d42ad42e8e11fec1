"""Calibrated multi-scale memorization auditing for generative-model outputs.

Pipeline: pooled multi-layer features -> per-layer ZCA whitening ->
max-cosine nearest-neighbor similarity -> geometric-mean fusion ->
bootstrap-null calibration -> per-sample Memorization Index (MI) and
bounded Overfit/Novelty Index (ONI), plus an evaluation harness with
controlled duplicate injection, augmentations, and counter-diagnostic
baselines.
"""

from .aggregate import AggregatedScore, aggregate_sample, aggregate_scores, consensus_count
from .augment import (
    AugmentationSpec,
    add_gaussian_noise,
    apply_augmentation,
    flip_h,
    flip_v,
    rotate,
    scale_intensity,
    standard_grid,
)
from .baselines import frechet_distance, mmd_rbf, vendi_score
from .calibrate import (
    AuditConfig,
    AuditReport,
    NullCalibration,
    audit,
    bootstrap_null,
    memorization_index,
    overfit_novelty_index,
)
from .contaminate import ContaminationPlan, inject_duplicates
from .embedder import (
    FeatureMap,
    FeatureSet,
    ReferenceEmbedderConfig,
    embed_feature_set,
    embed_reference,
    embed_reference_batch,
    load_external_features,
    pool_features,
)
from .errors import ValidationError
from .metrics import DetectionResult, average_precision, cross_dataset_cv, roc_auc
from .similarity import LayerSimilarity, layer_max_similarity
from .sweep import SweepDataset, SweepResult, augmentation_spread, run_sweep, summarize_sweep
from .synthetic import generate_corpus, write_corpus
from .tensorio import (
    DatasetManifest,
    ImageSlice,
    ManifestSample,
    Tensor,
    read_image,
    read_manifest,
    read_tensor,
    write_manifest,
    write_pgm,
    write_report,
    write_tensor,
)
from .whiten import WhiteningTransform, apply_whitening, fit_whitening, l2_normalize

__version__ = "0.1.0"
