"""Differentiable toy classifiers with analytic input gradients.

Two architectures are provided: a linear softmax classifier and a
one-hidden-layer MLP. Both follow the scikit-learn estimator protocol
(hyperparameters in ``__init__``, ``fit(X, y)`` returns self, fitted
attributes carry a trailing underscore, ``get_params``/``set_params`` for
composability) while also exposing the single-sample methods the attack
engine needs: ``forward``, ``predict_one`` and ``loss_and_input_grad``.

Gradients are closed-form backprop, not autodiff: the surface is small and
the results are bit-reproducible for identical inputs, which the cycle
detector depends on.
"""

from __future__ import annotations

import hashlib
import inspect
import json
from abc import ABC, abstractmethod

import numpy as np

from .rng import SplitMix64
from .validation import check_label, check_vector, check_X_y

WEIGHTS_SCHEMA_VERSION = 1

ACTIVATIONS = ("relu", "tanh")


class ModelFormatError(ValueError):
    """Raised when a weights file cannot be parsed or fails validation."""


def softmax(logits: np.ndarray) -> np.ndarray:
    """Probabilities from logits, max-shifted so large logits cannot overflow."""
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - np.max(z)
    e = np.exp(shifted)
    return e / np.sum(e)


def log_sum_exp(logits: np.ndarray) -> float:
    z = np.asarray(logits, dtype=np.float64)
    m = float(np.max(z))
    return m + float(np.log(np.sum(np.exp(z - m))))


def cross_entropy(logits: np.ndarray, y: int) -> float:
    """-log softmax(logits)[y], computed in log-sum-exp form (never -inf)."""
    z = np.asarray(logits, dtype=np.float64)
    y = check_label(y, z.shape[0])
    return log_sum_exp(z) - float(z[y])


def _softmax_rows(Z: np.ndarray) -> np.ndarray:
    shifted = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(shifted)
    return E / E.sum(axis=1, keepdims=True)


class ClassifierModel(ABC):
    """Base class: estimator plumbing plus the attack-facing contract.

    Subclasses implement ``forward`` (1-D input -> 1-D logits) and
    ``loss_and_input_grad``; prediction and the batch conveniences are
    derived from those. Argmax ties break toward the lowest class index.
    """

    # -- scikit-learn parameter protocol -------------------------------

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [p for p in sig.parameters if p != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(f"invalid parameter {key!r} for {type(self).__name__}")
            setattr(self, key, value)
        return self

    # -- attack-facing single-sample contract ---------------------------

    @abstractmethod
    def forward(self, x: np.ndarray) -> np.ndarray:
        """Logits for one flat input vector."""

    @abstractmethod
    def loss_and_input_grad(self, x: np.ndarray, y: int) -> tuple[float, np.ndarray]:
        """Cross-entropy at (x, y) and its exact gradient with respect to x."""

    def predict_one(self, x: np.ndarray) -> int:
        return int(np.argmax(self.forward(x)))

    def predict_proba_one(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.forward(x))

    def eval_grad_and_label(self, x_adv: np.ndarray, y: int) -> tuple[np.ndarray, int]:
        """Input gradient and predicted label at one point.

        Hot path for the attack loop: the caller guarantees a valid input,
        and subclasses share the forward activations between the two
        answers. Must return bit-identical values to calling
        ``loss_and_input_grad`` and ``predict_one`` separately.
        """
        _, grad = self.loss_and_input_grad(x_adv, y)
        return grad, self.predict_one(x_adv)

    # -- batch conveniences ---------------------------------------------

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.stack([self.forward(x) for x in X])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _softmax_rows(self.decision_function(X))

    def score(self, X: np.ndarray, y: np.ndarray) -> float:
        X, y = check_X_y(X, y)
        return float(np.mean(self.predict(X) == y))

    # -- identity ---------------------------------------------------------

    def param_arrays(self) -> dict[str, np.ndarray]:
        """Fitted parameter tensors, in a stable order."""
        raise NotImplementedError

    def model_id(self) -> str:
        h = hashlib.blake2b(digest_size=6)
        for name, arr in self.param_arrays().items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return f"{self.arch_tag()}-{h.hexdigest()}"

    def arch_tag(self) -> str:
        raise NotImplementedError


def _check_fitted(model, attr: str):
    if getattr(model, attr, None) is None:
        raise RuntimeError(f"{type(model).__name__} is not fitted yet; call fit() first")


class LinearSoftmaxClassifier(ClassifierModel):
    """Multinomial logistic regression trained by plain full-batch gradient
    descent. Weights initialize at zero, so ``n_steps=0`` leaves them there
    and the fit is deterministic without any seed sensitivity."""

    def __init__(self, n_classes: int = 2, n_steps: int = 500, learning_rate: float = 1.0,
                 seed: int = 0):
        self.n_classes = n_classes
        self.n_steps = n_steps
        self.learning_rate = learning_rate
        self.seed = seed
        self.W_ = None
        self.b_ = None

    def fit(self, X, y):
        X, y = check_X_y(X, y, n_classes=self.n_classes)
        n, d = X.shape
        m = self.n_classes
        W = np.zeros((m, d))
        b = np.zeros(m)
        onehot = np.zeros((n, m))
        onehot[np.arange(n), y] = 1.0
        for _ in range(self.n_steps):
            P = _softmax_rows(X @ W.T + b)
            G = (P - onehot) / n
            W -= self.learning_rate * (G.T @ X)
            b -= self.learning_rate * G.sum(axis=0)
        self.W_ = W
        self.b_ = b
        self.n_features_in_ = d
        self.classes_ = np.arange(m)
        return self

    def set_weights(self, W, b):
        """Install explicit parameters (used by loaders and fixtures)."""
        W = np.asarray(W, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ValueError("weight/bias shapes disagree")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("parameters must be finite")
        self.n_classes = W.shape[0]
        self.W_ = W.copy()
        self.b_ = b.copy()
        self.n_features_in_ = W.shape[1]
        self.classes_ = np.arange(W.shape[0])
        return self

    def forward(self, x: np.ndarray) -> np.ndarray:
        _check_fitted(self, "W_")
        x = check_vector(x, dim=self.n_features_in_, name="x")
        return self.W_ @ x + self.b_

    def loss_and_input_grad(self, x: np.ndarray, y: int) -> tuple[float, np.ndarray]:
        _check_fitted(self, "W_")
        x = check_vector(x, dim=self.n_features_in_, name="x")
        y = check_label(y, self.n_classes)
        logits = self.W_ @ x + self.b_
        loss = log_sum_exp(logits) - float(logits[y])
        p = softmax(logits)
        p[y] -= 1.0
        return loss, self.W_.T @ p

    def eval_grad_and_label(self, x_adv: np.ndarray, y: int) -> tuple[np.ndarray, int]:
        logits = self.W_ @ x_adv + self.b_
        p = softmax(logits)
        p[y] -= 1.0
        return self.W_.T @ p, int(np.argmax(logits))

    def param_arrays(self) -> dict[str, np.ndarray]:
        _check_fitted(self, "W_")
        return {"W": self.W_, "b": self.b_}

    def arch_tag(self) -> str:
        d = getattr(self, "n_features_in_", "?")
        return f"linear-{d}x{self.n_classes}"


class MlpClassifier(ClassifierModel):
    """One-hidden-layer MLP (relu or tanh) with hand-written backprop.

    The ReLU subgradient at exactly 0 is taken as 0, mirroring the
    sign(0) = 0 convention in the attack step.
    """

    def __init__(self, n_classes: int = 2, hidden: int = 32, activation: str = "relu",
                 n_steps: int = 500, learning_rate: float = 0.2, seed: int = 0):
        self.n_classes = n_classes
        self.hidden = hidden
        self.activation = activation
        self.n_steps = n_steps
        self.learning_rate = learning_rate
        self.seed = seed
        self.W1_ = None
        self.b1_ = None
        self.W2_ = None
        self.b2_ = None

    def _act(self, Z: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            return np.maximum(Z, 0.0)
        return np.tanh(Z)

    def _act_grad(self, Z: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            return (Z > 0.0).astype(np.float64)
        t = np.tanh(Z)
        return 1.0 - t * t

    def _init_params(self, d: int):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        rng = SplitMix64(self.seed)
        h, m = self.hidden, self.n_classes
        scale1 = 1.0 / np.sqrt(d)
        scale2 = 1.0 / np.sqrt(h)
        W1 = np.array(rng.normals(h * d)).reshape(h, d) * scale1
        W2 = np.array(rng.normals(m * h)).reshape(m, h) * scale2
        return W1, np.zeros(h), W2, np.zeros(m)

    def fit(self, X, y):
        X, y = check_X_y(X, y, n_classes=self.n_classes)
        n, d = X.shape
        W1, b1, W2, b2 = self._init_params(d)
        onehot = np.zeros((n, self.n_classes))
        onehot[np.arange(n), y] = 1.0
        lr = self.learning_rate
        for _ in range(self.n_steps):
            Z1 = X @ W1.T + b1
            A = self._act(Z1)
            P = _softmax_rows(A @ W2.T + b2)
            G = (P - onehot) / n
            dA = G @ W2
            dZ = dA * self._act_grad(Z1)
            W2 -= lr * (G.T @ A)
            b2 -= lr * G.sum(axis=0)
            W1 -= lr * (dZ.T @ X)
            b1 -= lr * dZ.sum(axis=0)
        self.W1_, self.b1_, self.W2_, self.b2_ = W1, b1, W2, b2
        self.n_features_in_ = d
        self.classes_ = np.arange(self.n_classes)
        return self

    def set_weights(self, W1, b1, W2, b2):
        arrs = [np.asarray(a, dtype=np.float64) for a in (W1, b1, W2, b2)]
        W1, b1, W2, b2 = arrs
        h, d = W1.shape
        m = W2.shape[0]
        if b1.shape != (h,) or W2.shape != (m, h) or b2.shape != (m,):
            raise ValueError("layer shapes disagree")
        if not all(np.all(np.isfinite(a)) for a in arrs):
            raise ValueError("parameters must be finite")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        self.n_classes = m
        self.hidden = h
        self.W1_, self.b1_, self.W2_, self.b2_ = (a.copy() for a in arrs)
        self.n_features_in_ = d
        self.classes_ = np.arange(m)
        return self

    def forward(self, x: np.ndarray) -> np.ndarray:
        _check_fitted(self, "W1_")
        x = check_vector(x, dim=self.n_features_in_, name="x")
        a = self._act(self.W1_ @ x + self.b1_)
        return self.W2_ @ a + self.b2_

    def loss_and_input_grad(self, x: np.ndarray, y: int) -> tuple[float, np.ndarray]:
        _check_fitted(self, "W1_")
        x = check_vector(x, dim=self.n_features_in_, name="x")
        y = check_label(y, self.n_classes)
        z1 = self.W1_ @ x + self.b1_
        a = self._act(z1)
        logits = self.W2_ @ a + self.b2_
        loss = log_sum_exp(logits) - float(logits[y])
        p = softmax(logits)
        p[y] -= 1.0
        dz = (self.W2_.T @ p) * self._act_grad(z1)
        return loss, self.W1_.T @ dz

    def eval_grad_and_label(self, x_adv: np.ndarray, y: int) -> tuple[np.ndarray, int]:
        z1 = self.W1_ @ x_adv + self.b1_
        a = self._act(z1)
        logits = self.W2_ @ a + self.b2_
        p = softmax(logits)
        p[y] -= 1.0
        dz = (self.W2_.T @ p) * self._act_grad(z1)
        return self.W1_.T @ dz, int(np.argmax(logits))

    def param_arrays(self) -> dict[str, np.ndarray]:
        _check_fitted(self, "W1_")
        return {"W1": self.W1_, "b1": self.b1_, "W2": self.W2_, "b2": self.b2_}

    def arch_tag(self) -> str:
        d = getattr(self, "n_features_in_", "?")
        return f"mlp-{self.activation}-{d}x{self.hidden}x{self.n_classes}"


def finite_diff_grad(model: ClassifierModel, x: np.ndarray, y: int, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the loss; the test oracle for
    ``loss_and_input_grad``. O(2d) forward passes, so keep d small."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64)

    def loss_at(v):
        return cross_entropy(model.forward(v), y)

    grad = np.zeros_like(x)
    for i in range(x.shape[0]):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (loss_at(xp) - loss_at(xm)) / (2.0 * h)
    return grad


# -- weight serialization ------------------------------------------------
#
# JSON with every float written as float.hex(): round-trips are bit-exact
# and the file stays self-describing (architecture tag, dims, activation).


def _hex_array(a: np.ndarray) -> list:
    if a.ndim == 1:
        return [float(v).hex() for v in a]
    return [_hex_array(row) for row in a]


def _unhex_array(data, shape_hint: str) -> np.ndarray:
    try:
        arr = np.asarray(
            [[float.fromhex(v) for v in row] for row in data]
            if data and isinstance(data[0], list)
            else [float.fromhex(v) for v in data],
            dtype=np.float64,
        )
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"bad float encoding in {shape_hint}: {exc}") from exc
    return arr


def save_model(model: ClassifierModel, path) -> None:
    if isinstance(model, LinearSoftmaxClassifier):
        doc = {
            "schema_version": WEIGHTS_SCHEMA_VERSION,
            "arch": "linear_softmax",
            "dim_in": model.n_features_in_,
            "n_classes": model.n_classes,
            "W": _hex_array(model.W_),
            "b": _hex_array(model.b_),
        }
    elif isinstance(model, MlpClassifier):
        doc = {
            "schema_version": WEIGHTS_SCHEMA_VERSION,
            "arch": "mlp",
            "dim_in": model.n_features_in_,
            "hidden": model.hidden,
            "n_classes": model.n_classes,
            "activation": model.activation,
            "W1": _hex_array(model.W1_),
            "b1": _hex_array(model.b1_),
            "W2": _hex_array(model.W2_),
            "b2": _hex_array(model.b2_),
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> ClassifierModel:
    try:
        with open(path, "r", encoding="ascii") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"cannot read weights file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: top-level JSON object expected")
    version = doc.get("schema_version")
    if version != WEIGHTS_SCHEMA_VERSION:
        raise ModelFormatError(f"{path}: unsupported schema version {version!r}")
    arch = doc.get("arch")
    try:
        if arch == "linear_softmax":
            W = _unhex_array(doc["W"], "W")
            b = _unhex_array(doc["b"], "b")
            model = LinearSoftmaxClassifier(n_classes=int(doc["n_classes"]))
            model.set_weights(W, b)
        elif arch == "mlp":
            model = MlpClassifier(
                n_classes=int(doc["n_classes"]),
                hidden=int(doc["hidden"]),
                activation=str(doc["activation"]),
            )
            model.set_weights(
                _unhex_array(doc["W1"], "W1"),
                _unhex_array(doc["b1"], "b1"),
                _unhex_array(doc["W2"], "W2"),
                _unhex_array(doc["b2"], "b2"),
            )
        else:
            raise ModelFormatError(f"{path}: unknown architecture {arch!r}")
    except KeyError as exc:
        raise ModelFormatError(f"{path}: missing field {exc}") from exc
    except ValueError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc
    if model.n_features_in_ != int(doc["dim_in"]):
        raise ModelFormatError(
            f"{path}: declared dim_in {doc['dim_in']} does not match weights"
        )
    return model
