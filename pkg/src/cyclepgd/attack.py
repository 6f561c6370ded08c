"""The PGD attack engine.

Four modes share one update rule (step toward the signed input gradient,
then project back into the L-inf ball):

* ``naive``          — run the full iteration budget, no early exit; what
                       the widespread library implementations do.
* ``early_success``  — stop at the first misclassifying iterate.
* ``cycle_detect``   — additionally stop when a perturbation is revisited.
                       The update is deterministic, so a revisit pins the
                       trajectory to a loop that was already checked and can
                       never misclassify: the tricked/untricked verdict is
                       provably identical to ``early_success``, usually at a
                       fraction of the iterations.
* ``cycle_detect_jumps`` — on each detected cycle, restart from a uniform
                       random point in the ball, all restarts sharing one
                       iteration budget.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .datasets import ImageVec
from .diagnostics import Trajectory
from .fingerprint import FINGERPRINT_MODES, PROJECTED, ProjectionKey, VisitedSet
from .models import ClassifierModel
from .rng import SplitMix64, derive_seed
from .validation import check_label, check_vector
from .vecops import sign_vec

NAIVE = "naive"
EARLY_SUCCESS = "early_success"
CYCLE_DETECT = "cycle_detect"
CYCLE_DETECT_JUMPS = "cycle_detect_jumps"
ATTACK_MODES = (NAIVE, EARLY_SUCCESS, CYCLE_DETECT, CYCLE_DETECT_JUMPS)

TRICKED = "tricked"
CYCLE_DETECTED = "cycle_detected"
BUDGET_EXHAUSTED = "budget_exhausted"
CLEAN_MISCLASSIFIED = "clean_misclassified"

# Stream tags so the projection key and the restart draws never share a
# generator state even though both derive from the one configured seed.
_HASH_STREAM = 0x68617368
_JUMP_STREAM = 0x6A756D70


@dataclass
class AttackConfig:
    """Knobs for one attack run. ``alpha`` defaults to eps/4."""

    eps: float
    alpha: float | None = None
    t_iter: int = 1000
    mode: str = CYCLE_DETECT
    fingerprint_mode: str = PROJECTED
    clamp_to_domain: bool = False
    seed: int = 0
    record_trajectory: bool = False

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.alpha is None:
            self.alpha = self.eps / 4.0
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.t_iter < 1:
            raise ValueError(f"t_iter must be >= 1, got {self.t_iter}")
        if self.mode not in ATTACK_MODES:
            raise ValueError(f"mode must be one of {ATTACK_MODES}, got {self.mode!r}")
        if self.fingerprint_mode not in FINGERPRINT_MODES:
            raise ValueError(f"fingerprint_mode must be one of {FINGERPRINT_MODES}")

    def for_image(self, index: int) -> "AttackConfig":
        """Per-image config: same knobs, seed XOR image index."""
        return replace(self, seed=derive_seed(self.seed, index))

    def snapshot(self) -> dict:
        return {
            "eps": self.eps,
            "alpha": self.alpha,
            "t_iter": self.t_iter,
            "mode": self.mode,
            "fingerprint_mode": self.fingerprint_mode,
            "clamp_to_domain": self.clamp_to_domain,
            "seed": self.seed,
        }


@dataclass
class AttackOutcome:
    """What one attack run produced."""

    status: str
    iterations_used: int
    final_delta: np.ndarray
    adversarial_label: int | None = None
    cycle: tuple[int, int] | None = None  # (first_visit_iter, detect_iter)
    trajectory: Trajectory | None = None
    tricked_any_iterate: bool | None = None  # naive mode bookkeeping
    first_trick_iter: int | None = None
    restarts: int = 0

    @property
    def tricked(self) -> bool:
        return self.status == TRICKED


def random_init_in_ball(eps: float, dim: int, rng: SplitMix64) -> np.ndarray:
    """Uniform per-coordinate draw in [-eps, eps]."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return np.array([rng.uniform_in(-eps, eps) for _ in range(dim)], dtype=np.float64)


def _sign(v: np.ndarray) -> np.ndarray:
    return np.sign(v) + 0.0  # sign_vec's arithmetic, minus the validation


def _apply_step(x: ImageVec, delta: np.ndarray, signed: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    # Same arithmetic as the validated public ops, minus per-call checks:
    # the run_* loops keep delta finite and in-ball by construction.
    new = np.clip(delta + cfg.alpha * signed, -cfg.eps, cfg.eps)
    if cfg.clamp_to_domain:
        adv = np.clip(x.data + new, x.domain_lo, x.domain_hi)
        # Re-derived delta can drift past eps by an ulp; re-project so the
        # ball bound stays exact for the perturbation actually fingerprinted.
        new = np.clip(adv - x.data, -cfg.eps, cfg.eps)
    return new


def pgd_step(model: ClassifierModel, x: ImageVec, y: int, delta: np.ndarray,
             cfg: AttackConfig) -> np.ndarray:
    """One update: delta + alpha * sign(grad), projected into the ball."""
    delta = check_vector(delta, dim=x.dim, name="delta")
    _, grad = model.loss_and_input_grad(x.data + delta, y)
    return _apply_step(x, delta, sign_vec(grad), cfg)


def _clean_misclassified_outcome(x: ImageVec, label: int, cfg: AttackConfig) -> AttackOutcome:
    return AttackOutcome(
        status=CLEAN_MISCLASSIFIED,
        iterations_used=0,
        final_delta=np.zeros(x.dim),
        adversarial_label=label,
        trajectory=Trajectory([], [], None) if cfg.record_trajectory else None,
    )


def _projection_key(cfg: AttackConfig, dim: int) -> ProjectionKey | None:
    if cfg.fingerprint_mode != PROJECTED:
        return None
    return ProjectionKey.from_seed(derive_seed(cfg.seed, _HASH_STREAM), dim)


def _make_visited(cfg: AttackConfig, dim: int, key: ProjectionKey | None = None) -> VisitedSet:
    if key is None:
        key = _projection_key(cfg, dim)
    return VisitedSet(mode=cfg.fingerprint_mode, key=key)


def run_pgd(model: ClassifierModel, x: ImageVec, y: int, cfg: AttackConfig) -> AttackOutcome:
    """Standard PGD. ``naive`` always burns the whole budget and judges the
    final iterate (recording whether any earlier one misclassified);
    ``early_success`` returns at the first misclassifying iterate."""
    if cfg.mode not in (NAIVE, EARLY_SUCCESS):
        raise ValueError(f"run_pgd handles naive/early_success, not {cfg.mode!r}")
    y = check_label(y, model.n_classes)
    # One fused model evaluation per point: the gradient computed at
    # delta^(i) feeds step i+1, the label checks the trick condition.
    grad, label = model.eval_grad_and_label(x.data, y)
    if label != y:
        return _clean_misclassified_outcome(x, label, cfg)

    delta = np.zeros(x.dim)
    traj = Trajectory([], [], None) if cfg.record_trajectory else None
    first_trick = None
    for i in range(1, cfg.t_iter + 1):
        signed = _sign(grad)
        delta = _apply_step(x, delta, signed, cfg)
        grad, label = model.eval_grad_and_label(x.data + delta, y)
        if traj is not None:
            traj.deltas.append(delta.copy())
            traj.signed_grads.append(signed)
        if label != y:
            if cfg.mode == EARLY_SUCCESS:
                if traj is not None:
                    traj.tricked_at = i
                return AttackOutcome(
                    status=TRICKED,
                    iterations_used=i,
                    final_delta=delta,
                    adversarial_label=int(label),
                    trajectory=traj,
                )
            if first_trick is None:
                first_trick = i

    tricked_final = label != y
    if traj is not None and tricked_final:
        traj.tricked_at = cfg.t_iter
    return AttackOutcome(
        status=TRICKED if tricked_final else BUDGET_EXHAUSTED,
        iterations_used=cfg.t_iter,
        final_delta=delta,
        adversarial_label=int(label) if tricked_final else None,
        trajectory=traj,
        tricked_any_iterate=(first_trick is not None) if cfg.mode == NAIVE else None,
        first_trick_iter=first_trick,
    )


def run_pgd_cd(model: ClassifierModel, x: ImageVec, y: int, cfg: AttackConfig) -> AttackOutcome:
    """PGD with cycle detection: stop as soon as a perturbation repeats.

    Equivalent-by-construction to ``early_success`` on the tricked/untricked
    verdict: the update map depends only on the current perturbation, so a
    revisit replays a stretch that was already checked, forever.
    """
    if cfg.mode != CYCLE_DETECT:
        cfg = replace(cfg, mode=CYCLE_DETECT)
    y = check_label(y, model.n_classes)
    grad, label = model.eval_grad_and_label(x.data, y)
    if label != y:
        return _clean_misclassified_outcome(x, label, cfg)

    delta = np.zeros(x.dim)
    visited = _make_visited(cfg, x.dim)
    traj = Trajectory([], [], None) if cfg.record_trajectory else None
    for i in range(1, cfg.t_iter + 1):
        signed = _sign(grad)
        delta = _apply_step(x, delta, signed, cfg)
        grad, label = model.eval_grad_and_label(x.data + delta, y)
        if traj is not None:
            traj.deltas.append(delta.copy())
            traj.signed_grads.append(signed)
        if label != y:
            if traj is not None:
                traj.tricked_at = i
            return AttackOutcome(
                status=TRICKED,
                iterations_used=i,
                final_delta=delta,
                adversarial_label=int(label),
                trajectory=traj,
            )
        first_visit = visited.record(delta, i)
        if first_visit is not None:
            return AttackOutcome(
                status=CYCLE_DETECTED,
                iterations_used=i,
                final_delta=delta,
                cycle=(first_visit, i),
                trajectory=traj,
            )
    return AttackOutcome(
        status=BUDGET_EXHAUSTED,
        iterations_used=cfg.t_iter,
        final_delta=delta,
        trajectory=traj,
    )


def run_pgd_cd_jumps(model: ClassifierModel, x: ImageVec, y: int, cfg: AttackConfig) -> AttackOutcome:
    """Cycle detection with random restarts, one shared iteration budget.

    Each detected cycle triggers a fresh uniform start in the ball (and a
    fresh visited set); iterations across all segments count against the
    same ``t_iter``. Restart points, like the zero start, consume no
    iteration and are not trick-checked.
    """
    if cfg.mode != CYCLE_DETECT_JUMPS:
        cfg = replace(cfg, mode=CYCLE_DETECT_JUMPS)
    y = check_label(y, model.n_classes)
    grad, label = model.eval_grad_and_label(x.data, y)
    if label != y:
        return _clean_misclassified_outcome(x, label, cfg)

    jump_rng = SplitMix64(derive_seed(cfg.seed, _JUMP_STREAM))
    delta = np.zeros(x.dim)
    key = _projection_key(cfg, x.dim)
    visited = _make_visited(cfg, x.dim, key)
    traj = Trajectory([], [], None) if cfg.record_trajectory else None
    restarts = 0
    for i in range(1, cfg.t_iter + 1):
        signed = _sign(grad)
        delta = _apply_step(x, delta, signed, cfg)
        grad, label = model.eval_grad_and_label(x.data + delta, y)
        if traj is not None:
            traj.deltas.append(delta.copy())
            traj.signed_grads.append(signed)
        if label != y:
            if traj is not None:
                traj.tricked_at = i
            return AttackOutcome(
                status=TRICKED,
                iterations_used=i,
                final_delta=delta,
                adversarial_label=int(label),
                trajectory=traj,
                restarts=restarts,
            )
        first_visit = visited.record(delta, i)
        if first_visit is not None:
            if i == cfg.t_iter:
                return AttackOutcome(
                    status=CYCLE_DETECTED,
                    iterations_used=i,
                    final_delta=delta,
                    cycle=(first_visit, i),
                    trajectory=traj,
                    restarts=restarts,
                )
            # Jump: fresh uniform start, fresh visited set; the start point
            # costs one model evaluation but no iteration, like the origin.
            restarts += 1
            delta = random_init_in_ball(cfg.eps, x.dim, jump_rng)
            visited = _make_visited(cfg, x.dim, key)
            grad, _ = model.eval_grad_and_label(x.data + delta, y)
    return AttackOutcome(
        status=BUDGET_EXHAUSTED,
        iterations_used=cfg.t_iter,
        final_delta=delta,
        trajectory=traj,
        restarts=restarts,
    )


def run_attack(model: ClassifierModel, x: ImageVec, y: int, cfg: AttackConfig) -> AttackOutcome:
    """Dispatch on cfg.mode."""
    if cfg.mode in (NAIVE, EARLY_SUCCESS):
        return run_pgd(model, x, y, cfg)
    if cfg.mode == CYCLE_DETECT:
        return run_pgd_cd(model, x, y, cfg)
    return run_pgd_cd_jumps(model, x, y, cfg)
