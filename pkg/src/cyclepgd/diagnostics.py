"""Cycle-analysis instruments.

These are the tools for looking *at* attack runs: lag-k cosine traces of the
signed gradients, an exhaustive (quadratic, test-grade) revisit oracle that
double-checks the production set-based detector, a hand-built 2D instance
that provably falls into a length-two boundary cycle, and CSV export of raw
trajectories for external embedding/plotting tools.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import ImageVec
from .models import ClassifierModel, log_sum_exp, softmax
from .validation import check_label, check_vector
from .vecops import cosine_similarity

TRAJECTORY_COLUMNS = ("iteration", "tricked", "in_cycle")  # then d0..d{dim-1}


@dataclass
class Trajectory:
    """Per-iteration record of an attack run.

    Position k holds iteration k+1: the perturbation after the step and the
    signed gradient that produced it. The implicit starting perturbation
    (iteration 0) is not stored.
    """

    deltas: list
    signed_grads: list
    tricked_at: int | None = None

    def __len__(self) -> int:
        return len(self.deltas)


@dataclass(frozen=True)
class CycleReport:
    """Earliest revisit in a sequence: position of the first state that
    recurs (0-based) and the distance to its first recurrence."""

    start: int
    length: int


def lag_cosine_trace(signed_grads, lag: int) -> list[float]:
    """Cosine similarity between entries ``lag`` apart.

    On a trajectory stuck in a cycle whose length divides ``lag``, the trace
    is exactly 1 on the cyclic part, because the compared vectors are
    bit-identical.
    """
    n = len(signed_grads)
    if lag < 1 or lag >= n:
        raise ValueError(f"lag must be in [1, {n - 1}], got {lag}")
    return [
        cosine_similarity(signed_grads[i], signed_grads[i + lag])
        for i in range(n - lag)
    ]


def detect_cycle_oracle(traj) -> CycleReport | None:
    """Exhaustive earliest-revisit search over bit-identical vectors.

    Accepts a Trajectory or any sequence of vectors; returns the smallest
    0-based position whose value appears again, with the distance to its
    first reappearance, or None when all entries are distinct. Quadratic on
    purpose: this is the test oracle, not the production detector.
    """
    deltas = traj.deltas if isinstance(traj, Trajectory) else traj
    encoded = [np.ascontiguousarray(d, dtype="<f8").tobytes() for d in deltas]
    n = len(encoded)
    for start in range(n - 1):
        for later in range(start + 1, n):
            if encoded[later] == encoded[start]:
                return CycleReport(start=start, length=later - start)
    return None


class RadialTargetModel(ClassifierModel):
    """Two-class model whose second-class logit peaks at a target point.

    logits = (0, margin - kappa * ||u - target||^2): class 1 wins inside a
    disk of radius sqrt(margin/kappa) around the target, and the loss
    gradient for label 0 points from u straight toward the target.
    """

    def __init__(self, target, kappa: float = 1.0, margin: float = 1.0):
        self.target = check_vector(target, name="target")
        self.kappa = float(kappa)
        self.margin = float(margin)
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        self.n_features_in_ = self.target.shape[0]
        self.n_classes = 2
        self.classes_ = np.arange(2)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = check_vector(x, dim=self.n_features_in_, name="x")
        diff = x - self.target
        return np.array([0.0, self.margin - self.kappa * float(np.dot(diff, diff))])

    def loss_and_input_grad(self, x: np.ndarray, y: int) -> tuple[float, np.ndarray]:
        x = check_vector(x, dim=self.n_features_in_, name="x")
        y = check_label(y, 2)
        diff = x - self.target
        logits = np.array([0.0, self.margin - self.kappa * float(np.dot(diff, diff))])
        loss = log_sum_exp(logits) - float(logits[y])
        p = softmax(logits)
        p[y] -= 1.0
        # d logits[1] / dx = -2 kappa (x - target); logits[0] is constant
        return loss, p[1] * (-2.0 * self.kappa) * diff

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {
            "target": self.target,
            "kappa": np.array([self.kappa]),
            "margin": np.array([self.margin]),
        }

    def arch_tag(self) -> str:
        return f"radial-{self.n_features_in_}"


@dataclass(frozen=True)
class TwoCycleInstance:
    """A 2D setup that drives the attack into a length-two boundary cycle."""

    model: RadialTargetModel
    x: ImageVec
    y: int
    eps: float
    alpha: float
    eps_tricked: float  # enlarging the ball to this radius flips the verdict


def make_two_cycle_instance() -> TwoCycleInstance:
    """Construct the 2D two-cycle picture.

    The input sits at the origin with its loss optimum at (0.6, 3.0), above
    the top edge of the radius-1 ball. With step 0.25 the iterates climb to
    the edge and then bounce between (0.5, 1.0) and (0.75, 1.0), the two
    grid points straddling the optimum's first coordinate; all values are
    exact binary fractions so the revisit is bit-exact. The misclassified
    disk around the optimum only becomes reachable once eps >= 4.
    """
    model = RadialTargetModel(target=[0.6, 3.0], kappa=1.0, margin=1.44)
    x = ImageVec(np.zeros(2), domain_lo=-10.0, domain_hi=10.0)
    return TwoCycleInstance(model=model, x=x, y=0, eps=1.0, alpha=0.25, eps_tricked=4.0)


def export_trajectory(traj: Trajectory, path, cycle: tuple[int, int] | None = None) -> None:
    """Write one CSV row per iteration: index, trick flag, cycle-membership
    flag, then the delta coordinates at full round-trip precision."""
    if not traj.deltas:
        raise ValueError("trajectory is empty; was record_trajectory enabled?")
    dim = traj.deltas[0].shape[0]
    header = list(TRAJECTORY_COLUMNS) + [f"d{i}" for i in range(dim)]
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(header) + "\n")
        for pos, delta in enumerate(traj.deltas):
            iteration = pos + 1
            tricked = int(traj.tricked_at == iteration)
            in_cycle = int(cycle is not None and cycle[0] <= iteration <= cycle[1])
            cells = [str(iteration), str(tricked), str(in_cycle)]
            cells += [repr(float(v)) for v in delta]
            fh.write(",".join(cells) + "\n")


def load_trajectory(path) -> tuple[Trajectory, list[int]]:
    """Read back an exported trajectory; returns it plus the cycle flags."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        if header[: len(TRAJECTORY_COLUMNS)] != list(TRAJECTORY_COLUMNS):
            raise ValueError(f"{path}: unexpected trajectory header {header[:3]}")
        deltas = []
        flags = []
        tricked_at = None
        for line in fh:
            parts = line.strip().split(",")
            iteration = int(parts[0])
            if int(parts[1]):
                tricked_at = iteration
            flags.append(int(parts[2]))
            deltas.append(np.array([float(v) for v in parts[3:]], dtype=np.float64))
    return Trajectory(deltas=deltas, signed_grads=[], tricked_at=tricked_at), flags
