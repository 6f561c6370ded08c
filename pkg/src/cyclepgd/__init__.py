"""L-infinity PGD robustness evaluation with cycle-detection early termination."""

from .attack import (
    ATTACK_MODES,
    BUDGET_EXHAUSTED,
    CLEAN_MISCLASSIFIED,
    CYCLE_DETECT,
    CYCLE_DETECT_JUMPS,
    CYCLE_DETECTED,
    EARLY_SUCCESS,
    NAIVE,
    TRICKED,
    AttackConfig,
    AttackOutcome,
    pgd_step,
    random_init_in_ball,
    run_attack,
    run_pgd,
    run_pgd_cd,
    run_pgd_cd_jumps,
)
from .datasets import ImageVec, LabeledDataset, load_csv, load_idx, save_csv, save_idx
from .diagnostics import (
    CycleReport,
    RadialTargetModel,
    Trajectory,
    detect_cycle_oracle,
    export_trajectory,
    lag_cosine_trace,
    make_two_cycle_instance,
)
from .fingerprint import (
    Fingerprint,
    ProjectionKey,
    VisitedSet,
    fingerprint_exact,
    fingerprint_projected,
)
from .harness import (
    IterationStats,
    RobustReport,
    evaluate_clean,
    evaluate_robust,
    generate_synthetic_dataset,
    iteration_stats,
    read_report,
    reduction_sweep,
    verify_cycle_soundness,
    verify_equivalence,
    write_report,
)
from .models import (
    ClassifierModel,
    LinearSoftmaxClassifier,
    MlpClassifier,
    cross_entropy,
    finite_diff_grad,
    load_model,
    save_model,
    softmax,
)
from .rng import SplitMix64, derive_seed
from .vecops import clamp_domain, cosine_similarity, project_linf, sign_vec

__version__ = "0.1.0"

__all__ = [
    "ATTACK_MODES",
    "BUDGET_EXHAUSTED",
    "CLEAN_MISCLASSIFIED",
    "CYCLE_DETECT",
    "CYCLE_DETECT_JUMPS",
    "CYCLE_DETECTED",
    "EARLY_SUCCESS",
    "NAIVE",
    "TRICKED",
    "AttackConfig",
    "AttackOutcome",
    "ClassifierModel",
    "CycleReport",
    "Fingerprint",
    "ImageVec",
    "IterationStats",
    "LabeledDataset",
    "LinearSoftmaxClassifier",
    "MlpClassifier",
    "ProjectionKey",
    "RadialTargetModel",
    "RobustReport",
    "SplitMix64",
    "Trajectory",
    "VisitedSet",
    "clamp_domain",
    "cosine_similarity",
    "cross_entropy",
    "derive_seed",
    "detect_cycle_oracle",
    "evaluate_clean",
    "evaluate_robust",
    "export_trajectory",
    "finite_diff_grad",
    "fingerprint_exact",
    "fingerprint_projected",
    "generate_synthetic_dataset",
    "iteration_stats",
    "lag_cosine_trace",
    "load_csv",
    "load_idx",
    "load_model",
    "make_two_cycle_instance",
    "pgd_step",
    "project_linf",
    "random_init_in_ball",
    "read_report",
    "reduction_sweep",
    "run_attack",
    "run_pgd",
    "run_pgd_cd",
    "run_pgd_cd_jumps",
    "save_csv",
    "save_idx",
    "save_model",
    "sign_vec",
    "softmax",
    "verify_cycle_soundness",
    "verify_equivalence",
    "write_report",
]
