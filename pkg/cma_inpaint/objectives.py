# -*- coding: utf-8 -*-

"""
Training objectives.

Distillation losses compare the student pass (corrupted image + text)
against the teacher pass (original image + text); teacher inputs are
detached here, so gradients only reach the student branch.

    ℓ_G = λ·cmad + λ·isd + α·wpa + β·l1 + γ·g_adv_g + γ·l_adv_g
    ℓ_D = γ·g_adv_d + γ·l_adv_d
"""

import math
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from cma_inpaint import ops
from cma_inpaint.config import NUMERIC_EPS
from cma_inpaint.exceptions import DataError, DimensionError, NumericError
from cma_inpaint.models import LossRecord, LossWeights, TransportConfig
from cma_inpaint.tensor import Tensor, as_tensor
from cma_inpaint.transport import sinkhorn

Scalar = Union[float, Tensor]

G_COMPONENTS = ("cmad", "isd", "wpa", "l1", "g_adv_g", "l_adv_g")
D_COMPONENTS = ("g_adv_d", "l_adv_d")


def _same_shape(name: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{name}: shapes {a.shape} and {b.shape} differ")


def correlation_map(text: Tensor, visual: Tensor) -> Tensor:
    """M[i, j] = cos(t_i, v_j): (…, L, e) × (…, N, e) -> (…, L, N)."""
    return ops.cosine_similarity(text, visual)


def cmad_loss(map_student: Tensor, map_teacher: Tensor) -> Tensor:
    """Mean squared difference between correlation maps; the teacher map is detached."""
    map_student, map_teacher = as_tensor(map_student), as_tensor(map_teacher)
    _same_shape("cmad_loss", map_student, map_teacher)
    diff = ops.sub(map_student, map_teacher.detach())
    return ops.mean(ops.mul(diff, diff))


def isd_loss(visual_teacher: Tensor, visual_student: Tensor) -> Tensor:
    """
    Mean over patches of KL(softmax(v_o) ‖ softmax(v_r)), softmax over the embedding axis.

    The teacher rows are detached; both logs are taken after clamping at 1e-8.
    """
    visual_teacher, visual_student = as_tensor(visual_teacher), as_tensor(visual_student)
    _same_shape("isd_loss", visual_teacher, visual_student)
    p_teacher = ops.softmax(visual_teacher.detach(), axis=-1)
    p_student = ops.softmax(visual_student, axis=-1)
    log_ratio = ops.sub(
        ops.log(ops.clamp_min(p_teacher, NUMERIC_EPS)),
        ops.log(ops.clamp_min(p_student, NUMERIC_EPS)),
    )
    return ops.mean(ops.sum(ops.mul(p_teacher, log_ratio), axis=-1))


def _wpa_single(visual: Tensor, text: Tensor, keep: np.ndarray, transport: TransportConfig) -> Tensor:
    columns = np.flatnonzero(keep)
    if columns.size == 0:
        raise DataError("wpa_loss: every token is padding")
    text = ops.index_select(text, 0, columns)
    cost = ops.sub(1.0, ops.cosine_similarity(visual, text))
    n, m = cost.shape
    result = sinkhorn(
        cost.data,
        np.full(n, 1.0 / n),
        np.full(m, 1.0 / m),
        epsilon=transport.epsilon,
        max_iter=transport.max_iter,
        tol=transport.tol,
        epsilon_scaling=transport.epsilon_scaling,
    )
    return ops.sum(ops.mul(cost, Tensor(result.plan, dtype=cost.dtype)))


def wpa_loss(
    visual: Tensor,
    text: Tensor,
    token_keep: Optional[np.ndarray] = None,
    transport: Optional[TransportConfig] = None,
) -> Tensor:
    """
    Word-patch alignment: entropic OT cost between patches and non-pad tokens.

    Cost c_ij = 1 − cos(v_i, t_j); marginals uniform over the N patches and
    over the non-pad tokens. The plan is a constant of the tape, so the
    gradient is that of ⟨T, C⟩ with T fixed. Batched inputs average over the batch.

    Args:
        visual: V̂_o, (…, N, e)
        text: T̂_o, (…, L, e)
        token_keep: (…, L) booleans, False for [PAD] tokens (default: all kept)
        transport: Sinkhorn settings
    """
    visual, text = as_tensor(visual), as_tensor(text)
    transport = transport or TransportConfig()
    if token_keep is None:
        token_keep = np.ones(text.shape[:-1], dtype=bool)
    token_keep = np.asarray(token_keep, dtype=bool)
    if visual.ndim == 2:
        return _wpa_single(visual, text, token_keep, transport)
    if visual.shape[0] != text.shape[0] or token_keep.shape != text.shape[:-1]:
        raise DimensionError(f"wpa_loss: visual {visual.shape}, text {text.shape}, keep {token_keep.shape}")
    terms = [
        _wpa_single(ops.getitem(visual, i), ops.getitem(text, i), token_keep[i], transport)
        for i in range(visual.shape[0])
    ]
    return ops.mean(ops.stack(terms))


def l1_loss(restored: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference over all pixels."""
    return ops.l1_distance(as_tensor(restored), as_tensor(target))


def _non_empty(name: str, scores: Tensor) -> Tensor:
    scores = as_tensor(scores)
    if scores.size == 0:
        raise DataError(f"{name}: empty batch")
    return scores


def hinge_g(score_fake: Tensor) -> Tensor:
    """Generator hinge term E[−D(x̂)]."""
    return ops.mean(ops.neg(_non_empty("hinge_g", score_fake)))


def hinge_d(score_real: Tensor, score_fake: Tensor) -> Tensor:
    """Discriminator hinge term E[relu(1 − D(x))] + E[relu(1 + D(x̂))]."""
    real = _non_empty("hinge_d", score_real)
    fake = _non_empty("hinge_d", score_fake)
    return ops.add(ops.mean(ops.relu(ops.sub(1.0, real))), ops.mean(ops.relu(ops.add(1.0, fake))))


# ==================================================================================================
# Weighted totals
# ==================================================================================================

def _finite(components: Mapping[str, Scalar], names: Sequence[str]) -> None:
    for name in names:
        value = components[name]
        data = value.data if isinstance(value, Tensor) else value
        if not np.all(np.isfinite(data)):
            raise NumericError(f"loss component '{name}' is not finite", component=name)


def _get(record: Union[LossRecord, Mapping[str, Scalar]]) -> Mapping[str, Scalar]:
    return record.model_dump() if isinstance(record, LossRecord) else record


def total_g(record: Union[LossRecord, Mapping[str, Scalar]], w: LossWeights) -> Scalar:
    """
    λ_cmad·cmad + λ_isd·isd + α·wpa + β·l1 + γ_g·g_adv_g + γ_l·l_adv_g, summed left to right.

    Works on floats (LossRecord) and on Tensors (the trained objective).

    Raises:
        NumericError: If a component is NaN/Inf (names the component)
    """
    c = _get(record)
    _finite(c, G_COMPONENTS)
    total = c["cmad"] * w.w_cmad
    total = total + c["isd"] * w.w_isd
    total = total + c["wpa"] * w.alpha
    total = total + c["l1"] * w.beta
    total = total + c["g_adv_g"] * w.w_global
    return total + c["l_adv_g"] * w.w_local


def total_d(record: Union[LossRecord, Mapping[str, Scalar]], w: LossWeights) -> Scalar:
    """
    γ·(g_adv_d + l_adv_d) when the global and local weights agree, else γ_g·g_adv_d + γ_l·l_adv_d.

    Raises:
        NumericError: If a component is NaN/Inf (names the component)
    """
    c = _get(record)
    _finite(c, D_COMPONENTS)
    if w.w_global == w.w_local:
        return (c["g_adv_d"] + c["l_adv_d"]) * w.w_global
    return c["g_adv_d"] * w.w_global + c["l_adv_d"] * w.w_local


def make_record(components: Mapping[str, float], w: LossWeights) -> LossRecord:
    """Builds a LossRecord from float components; totals are recomputed from those floats."""
    values = {name: float(components[name]) for name in G_COMPONENTS + D_COMPONENTS}
    for name, value in values.items():
        if not math.isfinite(value):
            raise NumericError(f"loss component '{name}' is not finite", component=name)
    return LossRecord(**values, total_g=float(total_g(values, w)), total_d=float(total_d(values, w)))
