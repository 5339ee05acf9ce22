"""Environmental interference parameters and closed-form success models.

Rates are dimensionless probabilities except ``depolarizing_rate`` (per time
unit of the engine clock) and ``loss_noise`` (dB/km).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields, replace

MAX_LOSS_NOISE = 0.2  # dB/km; beyond this a 100 km hop never delivers
ROUTING_WEIGHTS = (0.3, 0.7)  # (swap rate, link state)


class NoiseParamError(ValueError):
    pass


class ClampedNoiseWarning(UserWarning):
    pass


def _check_prob(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0 or math.isnan(value):
        raise NoiseParamError(f"{name}={value!r} is not a probability")


@dataclass(frozen=True)
class EnvParams:
    depolarizing_rate: float = 0.0
    dephasing_rate: float = 0.0
    loss_init: float = 0.0
    loss_noise: float = 0.0
    length_km: float = 100.0

    def __post_init__(self):
        _check_prob("depolarizing_rate", self.depolarizing_rate)
        _check_prob("dephasing_rate", self.dephasing_rate)
        _check_prob("loss_init", self.loss_init)
        if self.loss_noise < 0 or math.isnan(self.loss_noise):
            raise NoiseParamError(f"loss_noise={self.loss_noise!r} must be >= 0")
        if self.length_km <= 0:
            raise NoiseParamError(f"length_km={self.length_km!r} must be > 0")

    def with_(self, **changes) -> "EnvParams":
        return replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ComponentProbs:
    p_w: float = 1.0
    p_qchannel: float = 1.0
    p_bsm: float = 1.0
    p_p_swap: float = 1.0
    p_a_swap: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            _check_prob(f.name, getattr(self, f.name))

    @classmethod
    def from_env(cls, env: EnvParams, p_w: float = 1.0) -> "ComponentProbs":
        p_op = op_success_prob(env.dephasing_rate, 1)
        return cls(p_w=p_w,
                   p_qchannel=channel_success_prob(env.loss_init, env.loss_noise, env.length_km),
                   p_bsm=p_op, p_p_swap=p_op, p_a_swap=p_op)


def channel_success_prob(loss_init: float, loss_noise: float, length_km: float) -> float:
    """Single-photon survival: (1 - loss_init) * 10**(-loss_noise * L / 10)."""
    _check_prob("loss_init", loss_init)
    if loss_noise < 0:
        raise NoiseParamError("loss_noise must be >= 0")
    if length_km <= 0:
        raise NoiseParamError("length_km must be > 0")
    return (1.0 - loss_init) * 10.0 ** (-loss_noise * length_km / 10.0)


def step_probs(c: ComponentProbs) -> tuple[float, float, float, float]:
    """Success probability of each of the four W-state distribution steps."""
    return (c.p_w ** 2 * c.p_qchannel ** 2, c.p_bsm ** 2, c.p_p_swap ** 2, c.p_a_swap)


def epr_distribution_prob(c: ComponentProbs) -> float:
    return math.prod(step_probs(c))


def channel_quality(loss_init: float, loss_noise: float) -> float:
    """Channel quality in [0, 1]; ``loss_noise`` above the cap is clamped with a warning."""
    _check_prob("loss_init", loss_init)
    if loss_noise < 0:
        raise NoiseParamError("loss_noise must be >= 0")
    if loss_noise > MAX_LOSS_NOISE:
        warnings.warn(f"loss_noise {loss_noise} dB/km clamped to {MAX_LOSS_NOISE}",
                      ClampedNoiseWarning, stacklevel=2)
        loss_noise = MAX_LOSS_NOISE
    return 1.0 - (loss_init + loss_noise / MAX_LOSS_NOISE) / 2.0


def op_ratio(hops: int) -> int:
    """Rounded-up operation ratio of W-state to double-photon distribution."""
    if hops < 1:
        raise NoiseParamError("hops must be >= 1")
    # (hops + 1) * 5 + hops over hops, i.e. 6 + 5/hops
    return math.ceil(((hops + 1) * 5 + hops) / hops)


def wstate_param_map(base: EnvParams, memory_ratio_n: float, hops: int) -> EnvParams:
    """Parameters that make a double-photon run stand in for W-state distribution."""
    if memory_ratio_n < 1:
        raise NoiseParamError("memory_ratio_n must be >= 1")
    ratio = op_ratio(hops)
    return replace(
        base,
        depolarizing_rate=base.depolarizing_rate / memory_ratio_n,
        dephasing_rate=1.0 - (1.0 - base.dephasing_rate) ** ratio,
        loss_init=1.0 - (1.0 - base.loss_init) ** 2,
        loss_noise=2.0 * base.loss_noise,
    )


def decohere_fidelity(f0: float, elapsed: float, depolarizing_rate: float) -> float:
    if elapsed < 0:
        raise NoiseParamError("elapsed time must be >= 0")
    return 0.25 + (f0 - 0.25) * math.exp(-depolarizing_rate * elapsed)


def op_success_prob(dephasing_rate: float, n_ops: int) -> float:
    _check_prob("dephasing_rate", dephasing_rate)
    if n_ops < 0:
        raise NoiseParamError("n_ops must be >= 0")
    return (1.0 - dephasing_rate) ** n_ops


# ---------------------------------------------------------------------------
# Werner bookkeeping used by the engine's fast path.  A pair is described by
# its Werner parameter w (fidelity (3w + 1)/4) plus a Pauli-frame bit that is
# set when an odd number of dephasing faults hit the pair.


def werner_from_fidelity(f: float) -> float:
    return (4.0 * f - 1.0) / 3.0


def fidelity_from_werner(w: float) -> float:
    return (3.0 * w + 1.0) / 4.0


def teleport_fidelity(w: float, flipped: bool, bloch: tuple[float, float, float]) -> float:
    """Fidelity of a payload with Bloch vector ``bloch`` sent over a Werner pair.

    The pair acts as a Pauli channel: identity with weight ``w + (1-w)/4`` and
    each Pauli with ``(1-w)/4``; a set frame bit swaps the identity and ``Z``
    weights.
    """
    x, y, z = bloch
    rest = (1.0 - w) / 4.0
    p_main = w + rest
    if flipped:
        p_i, p_z = rest, p_main
    else:
        p_i, p_z = p_main, rest
    return p_i + rest * x * x + rest * y * y + p_z * z * z
