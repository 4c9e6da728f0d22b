"""Grid quantizers with a uniform sup-norm error contract.

Every scheme is described by its *error length* ``ell``: the quantizer maps
reals onto a zero-aligned grid and never moves a value by more than
``ell / 2``. The grid spacing follows from the rule:

* ``half-away`` and ``even-away`` round to the nearest point of ``ell * Z``,
  breaking ties away from zero (``even-away`` is the same map, it only
  defaults to ``ell = 2`` so that it rounds to the closest even integer);
* ``floor`` rounds down onto ``(ell / 2) * Z``, since rounding down onto a
  grid of spacing ``s`` has worst-case error ``s``;
* ``identity`` leaves values untouched (``ell = 0``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RULES = ("half-away", "even-away", "floor", "identity")

# Relative slack used when deciding ties at grid midpoints, so that values
# such as 0.1 * 25 round the same way as the exact midpoint 2.5.
TIE_EPS = 1e-12

_DEFAULT_ERROR = {"half-away": 1.0, "even-away": 2.0, "floor": 2.0, "identity": 0.0}


@dataclass(frozen=True)
class QuantizationScheme:
    rule: str = "identity"
    error: float = 0.0

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown quantization rule {self.rule!r}; expected one of {RULES}")
        err = float(self.error)
        if not np.isfinite(err) or err < 0:
            raise ValueError(f"quantization error must be finite and >= 0, got {self.error}")
        if err == 0 and self.rule != "identity":
            raise ValueError(f"rule {self.rule!r} needs a positive error length")
        object.__setattr__(self, "error", err)

    @classmethod
    def from_config(cls, rule: str, error: float | None = None) -> "QuantizationScheme":
        """Build from config values; a zero error always means no quantization."""
        if rule not in RULES:
            raise ValueError(f"unknown quantization rule {rule!r}; expected one of {RULES}")
        if error is None:
            error = _DEFAULT_ERROR[rule]
        if float(error) == 0.0:
            return cls("identity", 0.0)
        return cls(rule, error)

    @property
    def spacing(self) -> float:
        """Distance between neighbouring grid points (0 for identity)."""
        if self.rule == "floor":
            return self.error / 2
        if self.rule == "identity":
            return 0.0
        return self.error

    def __call__(self, v):
        return quantize_vector(self, v)


def half_away(multiplier: float = 1.0) -> QuantizationScheme:
    """Round half away from zero onto ``multiplier * Z``."""
    return QuantizationScheme("half-away", multiplier)


def even_away(multiplier: float = 1.0) -> QuantizationScheme:
    """Round to the closest even multiple of ``multiplier``, ties away from zero."""
    return QuantizationScheme("even-away", 2.0 * multiplier)


def floor_scheme(multiplier: float = 1.0) -> QuantizationScheme:
    """Round down onto ``multiplier * Z`` (error length ``2 * multiplier``)."""
    return QuantizationScheme("floor", 2.0 * multiplier)


def identity() -> QuantizationScheme:
    return QuantizationScheme("identity", 0.0)


def quantize_vector(q: QuantizationScheme, v) -> np.ndarray | float:
    """Apply ``q`` entrywise; scalars in, scalars out."""
    arr = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot quantize non-finite values")
    if q.rule == "identity":
        out = arr.copy()
    else:
        s = q.spacing
        if q.rule == "floor":
            t = arr / s
            out = s * np.floor(t + TIE_EPS * np.abs(t))
        else:
            t = np.abs(arr) / s + 0.5
            out = s * np.sign(arr) * np.floor(t * (1.0 + TIE_EPS))
        # sign() maps 0 to 0; keep -0.0 out of the results
        out = out + 0.0
    if np.ndim(v) == 0:
        return float(out)
    return out


def quantize(q: QuantizationScheme, v: float) -> float:
    return quantize_vector(q, float(v))
